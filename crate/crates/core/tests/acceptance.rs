//! End-to-end acceptance run. Prints one PASS/FAIL line per criterion and
//! exits nonzero if any criterion fails.

mod common;

use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use common::gradcheck::{self, TOLERANCE};
use common::oracles::{self, bin_of, cutoff, naive_dft, signed_freq, ssim_literal, uniform_volume};
use dcsrn_core::autodiff::{checkpoint_header_path, checkpoint_payload_path};
use dcsrn_core::kspace::{decimate, degrade, forward_fft3};
use dcsrn_core::metrics::{comparison_csv, nrmse, psnr, ssim3d, PSNR_INFINITE};
use dcsrn_core::models::{LayerDesc, ModelGraph};
use dcsrn_core::patch::{axis_corners, extract_tiles, merge_patches, tile_positions};
use dcsrn_core::training::{
    evaluate_pairs, log_csv, train_on, LoadedModel, PairedVolume, Predictor, TrainOutcome,
};
use dcsrn_core::volume::make_phantom;
use dcsrn_core::{
    Architecture, DataRange, DegradeSpec, MetricsReport, PatchSpec, PhantomSpec, SsimParams, TrainConfig,
    Volume3D,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

impl Verdict {
    fn new() -> Self {
        Verdict {
            pass: true,
            detail: String::new(),
        }
    }

    /// Records `what`; a false `ok` fails the criterion.
    fn check(&mut self, ok: bool, what: impl Into<String>) {
        let what = what.into();
        if !ok {
            self.pass = false;
            self.note(format!("FAILED {what}"));
        } else {
            self.note(what);
        }
    }

    fn note(&mut self, what: impl Into<String>) {
        if !self.detail.is_empty() {
            self.detail.push_str("; ");
        }
        self.detail.push_str(&what.into());
    }

    fn within(&mut self, start: Instant, budget: Duration) {
        let took = start.elapsed();
        self.check(took < budget, format!("runtime {:.1}s < {}s", took.as_secs_f64(), budget.as_secs()));
    }
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let mut v = Verdict::new();
    let seeds = 0..10u64;
    let suites: [(&str, &dyn Fn(u64) -> f64); 9] = [
        ("conv3d 3x3x3", &|s| gradcheck::conv3d(s, [3, 3, 3], [2, 2, 5, 5, 5])),
        ("conv3d 3x1x5", &|s| gradcheck::conv3d(s, [3, 1, 5], [1, 2, 4, 3, 6])),
        ("conv3d 1x3x3 depth 1", &|s| gradcheck::conv3d(s, [1, 3, 3], [3, 2, 1, 5, 5])),
        ("conv3d 1x3x3 depth 3", &|s| gradcheck::conv3d(s, [1, 3, 3], [1, 2, 3, 5, 5])),
        ("batch_norm", &gradcheck::batch_norm),
        ("elu", &gradcheck::elu),
        ("concat", &gradcheck::concat),
        ("mse", &gradcheck::mse),
        ("dcsrn k=2 8^3", &|s| gradcheck::dcsrn_end_to_end(s, 2)),
    ];
    for (name, f) in suites {
        let worst = seeds.clone().map(f).fold(0.0f64, f64::max);
        v.check(worst < TOLERANCE, format!("{name} {worst:.1e}"));
    }
    v.within(start, Duration::from_secs(120));
    v
}

/// Random degradation setting with dims up to 32 that divide evenly.
fn random_case(rng: &mut ChaCha8Rng, max_dim: usize) -> (DegradeSpec, [usize; 3]) {
    loop {
        let axes: Vec<usize> = (0..3).filter(|_| rng.random_bool(0.6)).collect();
        if axes.is_empty() {
            continue;
        }
        let mut factors = [1usize; 3];
        let mut dims = [0usize; 3];
        for a in 0..3 {
            if axes.contains(&a) {
                factors[a] = rng.random_range(2..=4);
            }
            let f = factors[a];
            dims[a] = f * rng.random_range(1..=max_dim / f);
        }
        if let Ok(spec) = DegradeSpec::new(factors, &axes) {
            return (spec, dims);
        }
    }
}

fn max_abs_diff(a: &Volume3D, b: &Volume3D) -> f64 {
    a.values()
        .iter()
        .zip(b.values())
        .map(|(&x, &y)| (x as f64 - y as f64).abs())
        .fold(0.0, f64::max)
}

fn energy(v: &Volume3D) -> f64 {
    v.values().iter().map(|&x| (x as f64).powi(2)).sum()
}

fn criterion_2() -> Verdict {
    let start = Instant::now();
    let mut v = Verdict::new();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (mut idem, mut lin, mut dc, mut parseval_ok, mut pass, mut kill, mut agree) =
        (0.0f64, 0.0f64, 0.0f64, true, 0.0f64, 0.0f64, 0.0f64);
    for case in 0..24u64 {
        let (spec, dims) = random_case(&mut rng, 32);
        let x = uniform_volume(dims, 100 + case);
        let y = uniform_volume(dims, 200 + case);
        let dx = degrade(&x, &spec).unwrap();
        idem = idem.max(max_abs_diff(&dx, &degrade(&dx, &spec).unwrap()));

        let (a, b) = (rng.random_range(-2.0..2.0f32), rng.random_range(-2.0..2.0f32));
        let combo = Volume3D::from_values(dims, x.values().iter().zip(y.values()).map(|(&p, &q)| a * p + b * q).collect())
            .unwrap();
        let dy = degrade(&y, &spec).unwrap();
        let expect = Volume3D::from_values(dims, dx.values().iter().zip(dy.values()).map(|(&p, &q)| a * p + b * q).collect())
            .unwrap();
        lin = lin.max(max_abs_diff(&degrade(&combo, &spec).unwrap(), &expect));

        dc = dc.max((dx.mean() - x.mean()).abs());
        parseval_ok &= energy(&dx) <= energy(&x);

        // one cosine per axis: a frequency at the cutoff survives, the next one is removed
        for axis in 0..3 {
            let n = dims[axis];
            let f = spec.factors()[axis];
            let keep = cutoff(n, f);
            let wave = |w: usize| {
                Volume3D::from_fn(dims, |i, j, k| {
                    let t = [i, j, k][axis] as f64;
                    (std::f64::consts::TAU * w as f64 * t / n as f64 + 0.3).cos() as f32
                })
                .unwrap()
            };
            let kept = wave(keep);
            pass = pass.max(max_abs_diff(&degrade(&kept, &spec).unwrap(), &kept));
            if f > 1 && keep < n / 2 {
                let gone = degrade(&wave(keep + 1), &spec).unwrap();
                kill = kill.max(gone.values().iter().map(|&q| (q as f64).abs()).fold(0.0, f64::max));
            }
        }

        // reduced-matrix coefficients against the full-size spectrum on kept lines
        let small = decimate(&x, &spec).unwrap();
        let full_k = forward_fft3(&x);
        let small_k = forward_fft3(&small);
        let sd = small.dims();
        let scale = (dims[0] * dims[1] * dims[2]) as f64 / (sd[0] * sd[1] * sd[2]) as f64;
        let (mut diff, mut peak) = (0.0f64, 0.0f64);
        for kz in 0..dims[2] {
            for ky in 0..dims[1] {
                for kx in 0..dims[0] {
                    let w = [signed_freq(kx, dims[0]), signed_freq(ky, dims[1]), signed_freq(kz, dims[2])];
                    if (0..3).any(|a| w[a].unsigned_abs() > cutoff(dims[a], spec.factors()[a])) {
                        continue;
                    }
                    let reference = full_k.get(kx, ky, kz);
                    let reduced = small_k.get(bin_of(w[0], sd[0]), bin_of(w[1], sd[1]), bin_of(w[2], sd[2])) * scale;
                    diff = diff.max((reduced - reference).norm());
                    peak = peak.max(reference.norm());
                }
            }
        }
        agree = agree.max(diff / peak);
    }
    v.check(idem <= 1e-5, format!("idempotence {idem:.1e}"));
    v.check(lin <= 1e-5, format!("linearity {lin:.1e}"));
    v.check(dc <= 1e-6, format!("dc {dc:.1e}"));
    v.check(parseval_ok, "energy non-increasing");
    v.check(pass <= 1e-5, format!("sub-cutoff pass {pass:.1e}"));
    v.check(kill <= 1e-5, format!("supra-cutoff residue {kill:.1e}"));
    v.check(agree <= 1e-4, format!("degrade/decimate {agree:.1e}"));

    let mut fft = 0.0f64;
    for case in 0..8u64 {
        let dims = [rng.random_range(1..=8), rng.random_range(1..=8), rng.random_range(1..=8)];
        let x = uniform_volume(dims, 300 + case);
        for (a, b) in forward_fft3(&x).values().iter().zip(naive_dft(&x)) {
            fft = fft.max((a - b).norm() / b.norm().max(1.0));
        }
    }
    v.check(fft <= 1e-4, format!("fft vs dft {fft:.1e}"));
    v.within(start, Duration::from_secs(60));
    v
}

fn criterion_3() -> Verdict {
    let start = Instant::now();
    let mut v = Verdict::new();
    let params = SsimParams::default();
    let x = uniform_volume([16, 16, 16], 31);
    let self_ssim = ssim3d(&x, &x, &params).unwrap();
    v.check((self_ssim - 1.0).abs() <= 1e-9, format!("ssim(x,x)-1 = {:.1e}", self_ssim - 1.0));
    v.check(nrmse(&x, &x).unwrap() == 0.0, "nrmse(x,x) = 0");
    v.check(psnr(&x, &x, DataRange::Auto).unwrap() == PSNR_INFINITE, "psnr sentinel");
    let zeros = Volume3D::zeros([8, 8, 8]);
    let half = Volume3D::filled([8, 8, 8], 0.5);
    let p = psnr(&zeros, &half, DataRange::Fixed(1.0)).unwrap();
    v.check((p - 6.0206).abs() <= 1e-3, format!("psnr 0 vs 0.5 = {p:.4} dB"));
    let mut worst = 0.0f64;
    for seed in 0..4u64 {
        let x = uniform_volume([16, 16, 16], 40 + seed);
        let noise = uniform_volume([16, 16, 16], 50 + seed);
        let y = Volume3D::from_values(
            x.dims(),
            x.values().iter().zip(noise.values()).map(|(&a, &b)| 0.7 * a + 0.3 * b).collect(),
        )
        .unwrap();
        let (lo, hi) = x.min_max();
        let fast = ssim3d(&x, &y, &params).unwrap();
        let slow = ssim_literal(&x, &y, params.window_radius, params.gaussian_sigma, (hi - lo) as f64);
        worst = worst.max((fast - slow).abs());
    }
    v.check(worst <= 1e-6, format!("ssim vs literal oracle {worst:.1e}"));
    v.within(start, Duration::from_secs(60));
    v
}

fn conv_layers(g: &ModelGraph<f32>) -> Vec<(usize, usize)> {
    g.layers()
        .into_iter()
        .filter_map(|l| match l {
            LayerDesc::Conv(c) => Some((c.in_channels, c.out_channels)),
            _ => None,
        })
        .collect()
}

fn criterion_4() -> Verdict {
    let start = Instant::now();
    let mut v = Verdict::new();
    let dcsrn: ModelGraph<f32> = "dcsrn:k=24".parse::<Architecture>().unwrap().build(0).unwrap();
    let convs = conv_layers(&dcsrn);
    v.check(convs[0].1 == 48, format!("first layer out {}", convs[0].1));
    let unit_in: Vec<usize> = convs[1..5].iter().map(|c| c.0).collect();
    v.check(unit_in == [48, 72, 96, 120], format!("unit inputs {unit_in:?}"));
    v.check(convs[5].0 == 144, format!("final conv in {}", convs[5].0));
    for k in [2, 8, 24] {
        let g: ModelGraph<f32> = format!("dcsrn:k={k}").parse::<Architecture>().unwrap().build(0).unwrap();
        let (got, want) = (g.count_params(), oracles::dcsrn_params(k));
        v.check(got == want, format!("dcsrn k={k} params {got} (hand {want})"));
    }
    let fsrcnn: ModelGraph<f32> = "fsrcnn:d=56,s=12,m=4".parse::<Architecture>().unwrap().build(0).unwrap();
    let want = oracles::fsrcnn3d_params(56, 12, 4);
    v.check(fsrcnn.count_params() == want, format!("fsrcnn params {} (hand {want})", fsrcnn.count_params()));
    v.check(
        dcsrn.count_params() < fsrcnn.count_params(),
        format!("dcsrn(24) {} < fsrcnn(56,12,4) {}", dcsrn.count_params(), fsrcnn.count_params()),
    );
    v.within(start, Duration::from_secs(1));
    v
}

fn criterion_5() -> Verdict {
    let start = Instant::now();
    let mut v = Verdict::new();
    let corners = axis_corners(100, 64, 32);
    v.check(corners == [0, 32, 36], format!("dim 100 corners {corners:?}"));
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (mut worst, mut ragged) = (0.0f64, 0);
    for case in 0..20u64 {
        let dims = [rng.random_range(4..=40), rng.random_range(4..=40), rng.random_range(4..=40)];
        let cube = rng.random_range(2..=*dims.iter().min().unwrap());
        let spec = PatchSpec {
            cube_size: cube,
            stride: rng.random_range(1..=cube),
            batch_cubes: 1,
        };
        ragged += usize::from(dims.iter().any(|&d| (d - cube) % spec.stride != 0));
        let vol = uniform_volume(dims, 500 + case);
        let plan = tile_positions(dims, &spec).unwrap();
        let merged = merge_patches(&extract_tiles(&vol, &plan).unwrap(), &plan).unwrap();
        worst = worst.max(max_abs_diff(&merged, &vol));
    }
    v.check(worst <= 1e-6, format!("20 round trips max error {worst:.1e}"));
    v.check(ragged > 0, format!("{ragged} cases with non-divisible dims"));
    v.within(start, Duration::from_secs(60));
    v
}

/// Phantom generator settings for the training criteria.
fn phantom(dims: [usize; 3], seed: u64) -> Volume3D {
    make_phantom(&PhantomSpec::new(dims, seed)).unwrap()
}

fn pair(id: &str, dims: [usize; 3], seed: u64) -> PairedVolume {
    PairedVolume::from_hr(id, phantom(dims, seed), &DegradeSpec::default_2x2()).unwrap()
}

struct OverfitRun {
    log: String,
    checkpoint: Vec<u8>,
    outcome: TrainOutcome,
    pair: PairedVolume,
}

const OVERFIT_CUBE: usize = 16;

fn overfit_run(dir: &Path) -> OverfitRun {
    let p = pair("overfit", [32; 3], 6);
    let mut cfg = TrainConfig::desk("unused", dir);
    cfg.model = "dcsrn:k=8".parse().unwrap();
    cfg.lr = 1e-3;
    cfg.max_steps = 500;
    cfg.validate_every = 50;
    cfg.seed = 6;
    cfg.patch = PatchSpec::with_cube(OVERFIT_CUBE);
    let outcome = train_on(&cfg, std::slice::from_ref(&p), std::slice::from_ref(&p)).unwrap();
    OverfitRun {
        log: log_csv(&outcome.log),
        checkpoint: [checkpoint_header_path(&outcome.checkpoint), checkpoint_payload_path(&outcome.checkpoint)]
            .iter()
            .flat_map(|p| fs::read(p).unwrap())
            .collect(),
        outcome,
        pair: p,
    }
}

fn criterion_6(run: &OverfitRun, took: Duration) -> Verdict {
    let mut v = Verdict::new();
    let log = &run.outcome.log;
    let first = log.first().unwrap().train_loss;
    let last = log.last().unwrap().train_loss;
    let finite = log
        .iter()
        .all(|r| r.train_loss.is_finite() && r.val_loss.is_none_or(f64::is_finite));
    v.check(finite, "all losses finite");
    v.check(last < 0.1 * first, format!("final {last:.3e} < 0.1 x initial {first:.3e}"));
    let model = LoadedModel::load(&run.outcome.checkpoint).unwrap();
    let sr = model.super_resolve(&run.pair.lr).unwrap();
    let tiled = dcsrn_core::metrics::mse(&run.pair.hr, &sr).unwrap();
    v.note(format!("tiled inference mse {tiled:.3e} vs 2 x final train loss {:.3e}", 2.0 * last));
    v.check(took < Duration::from_secs(300), format!("runtime {:.1}s < 300s", took.as_secs_f64()));
    v
}

/// Settings for the ordering experiment.
const ORDER_STEPS: usize = 2000;
const ORDER_CUBE: usize = 16;
const ORDER_SEED: u64 = 7;
const DCSRN_SMALL: &str = "dcsrn:k=8";
const FSRCNN_SMALL: &str = "fsrcnn:d=16,s=8,m=2,dims=3";
const FSRCNN_SMALL_2D: &str = "fsrcnn:d=16,s=8,m=2,dims=2";

struct OrderingRun {
    logs: Vec<String>,
    reports: Vec<(String, MetricsReport)>,
}

fn ordering_run(dir: &Path) -> OrderingRun {
    let pairs: Vec<PairedVolume> = (0..20)
        .map(|i| pair(&format!("phantom_{i:02}"), [64; 3], 1000 + i))
        .collect();
    let (train, rest) = pairs.split_at(14);
    let (val, test) = rest.split_at(1);
    let spec = DegradeSpec::default_2x2();
    let mut logs = Vec::new();
    let mut reports = Vec::new();
    for (label, arch) in [("dcsrn", DCSRN_SMALL), ("fsrcnn3d", FSRCNN_SMALL), ("fsrcnn2d", FSRCNN_SMALL_2D)] {
        let mut cfg = TrainConfig::desk("unused", dir.join(label));
        cfg.model = arch.parse().unwrap();
        cfg.max_steps = ORDER_STEPS;
        cfg.seed = ORDER_SEED;
        cfg.patch = PatchSpec::with_cube(ORDER_CUBE);
        let outcome = train_on(&cfg, train, val).unwrap();
        logs.push(log_csv(&outcome.log));
        let model = LoadedModel::load(&outcome.checkpoint).unwrap();
        let predictor = Predictor::Model {
            model: &model.model,
            patch: model.patch,
        };
        reports.push((label.to_string(), evaluate_pairs(&predictor, test, &spec).unwrap()));
    }
    for (label, p) in [
        ("tricubic", Predictor::Tricubic),
        ("nearest", Predictor::Nearest),
        ("lr-identity", Predictor::LrIdentity),
    ] {
        reports.push((label.to_string(), evaluate_pairs(&p, test, &spec).unwrap()));
    }
    OrderingRun { logs, reports }
}

fn criterion_7(run: &OrderingRun, took: Duration) -> Verdict {
    let mut v = Verdict::new();
    let get = |name: &str| &run.reports.iter().find(|(n, _)| n == name).unwrap().1;
    let summary = run
        .reports
        .iter()
        .map(|(n, r)| format!("{n} {:.4}/{:.2}", r.ssim.mean, r.psnr.mean))
        .collect::<Vec<_>>()
        .join(", ");
    v.note(format!("ssim/psnr means: {summary}"));
    let chain = ["dcsrn", "fsrcnn3d", "tricubic", "nearest"];
    for metric in ["ssim", "psnr"] {
        let m = |name: &str| {
            let r = get(name);
            if metric == "ssim" {
                r.ssim.mean
            } else {
                r.psnr.mean
            }
        };
        let ordered = chain.windows(2).all(|w| m(w[0]) > m(w[1]));
        v.check(ordered, format!("{metric}: dcsrn > fsrcnn3d > tricubic > nearest"));
        let beat = m("dcsrn") > m("lr-identity") && m("fsrcnn3d") > m("lr-identity");
        v.check(beat, format!("{metric}: both models > lr-identity"));
    }
    let advisory = get("fsrcnn3d").ssim.mean >= get("fsrcnn2d").ssim.mean;
    v.note(format!(
        "advisory 3D >= 2D fsrcnn ssim: {}",
        if advisory { "holds" } else { "does not hold" }
    ));
    v.check(took < Duration::from_secs(45 * 60), format!("runtime {:.0}s < 2700s", took.as_secs_f64()));
    v
}

fn criterion_8(overfit: &OverfitRun, ordering: &OrderingRun, scratch: &Path) -> Verdict {
    let mut v = Verdict::new();
    let again = overfit_run(&scratch.join("overfit-again"));
    v.check(again.log == overfit.log, "overfit log identical");
    v.check(again.checkpoint == overfit.checkpoint, "overfit checkpoint identical");
    let again = ordering_run(&scratch.join("ordering-again"));
    v.check(again.logs == ordering.logs, "ordering training logs identical");
    v.check(
        comparison_csv(&again.reports) == comparison_csv(&ordering.reports),
        "ordering report identical",
    );
    let rows_equal = again
        .reports
        .iter()
        .zip(&ordering.reports)
        .all(|((_, a), (_, b))| a.to_csv() == b.to_csv());
    v.check(rows_equal, "per-volume rows identical");
    v
}

/// Criterion numbers given on the command line select a subset; with none,
/// every criterion runs. Selecting 8 also runs 6 and 7.
fn selection() -> Vec<usize> {
    let picked: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .filter(|n| (1..=8).contains(n))
        .collect();
    if picked.is_empty() {
        (1..=8).collect()
    } else {
        picked
    }
}

fn main() {
    let wanted = selection();
    let on = |n: usize| wanted.contains(&n) || (wanted.contains(&8) && (n == 6 || n == 7));
    let scratch = tempfile::tempdir().unwrap();
    let mut verdicts: Vec<(usize, Verdict)> = Vec::new();
    let mut emit = |n: usize, name: &str, v: Verdict| {
        println!("criterion {n} {} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        verdicts.push((n, v));
    };
    let quick: [(&str, fn() -> Verdict); 5] = [
        ("gradient suite", criterion_1),
        ("degradation suite", criterion_2),
        ("metric identities", criterion_3),
        ("architecture accounting", criterion_4),
        ("patch round trip", criterion_5),
    ];
    for (i, (name, f)) in quick.into_iter().enumerate() {
        if on(i + 1) {
            emit(i + 1, name, f());
        }
    }

    let overfit = on(6).then(|| {
        let t = Instant::now();
        let run = overfit_run(&scratch.path().join("overfit"));
        emit(6, "overfit convergence", criterion_6(&run, t.elapsed()));
        run
    });
    let ordering = on(7).then(|| {
        let t = Instant::now();
        let run = ordering_run(&scratch.path().join("ordering"));
        emit(7, "ordering experiment", criterion_7(&run, t.elapsed()));
        run
    });
    if let (true, Some(o), Some(r)) = (on(8), &overfit, &ordering) {
        emit(8, "determinism", criterion_8(o, r, scratch.path()));
    }

    let failed: Vec<usize> = verdicts.iter().filter(|(_, v)| !v.pass).map(|(n, _)| *n).collect();
    println!(
        "acceptance: {} passed, {} failed {:?}",
        verdicts.len() - failed.len(),
        failed.len(),
        failed
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
