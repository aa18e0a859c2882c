//! The training loop with best-validation checkpointing.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::TrainConfig;
use super::eval::{infer_volume, PairedVolume};
use super::manifest::{DatasetManifest, Split};
use crate::autodiff::{AdamState, Mode, Tape, Tensor};
use crate::error::{Error, Result};
use crate::metrics;
use crate::models::ModelGraph;
use crate::patch::sample_corner;
use crate::volume::Volume3D;

pub const LOG_HEADER: &str = "step,train_loss,val_loss,checkpoint_saved";
pub const LOG_FILE_NAME: &str = "train_log.csv";

#[derive(Clone, Debug, PartialEq)]
pub struct LogRow {
    pub step: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub checkpoint_saved: bool,
}

pub fn log_csv(rows: &[LogRow]) -> String {
    let mut s = format!("{LOG_HEADER}\n");
    for r in rows {
        let val = r.val_loss.map(|v| v.to_string()).unwrap_or_default();
        let _ = writeln!(s, "{},{},{},{}", r.step, r.train_loss, val, u8::from(r.checkpoint_saved));
    }
    s
}

#[derive(Debug)]
pub struct TrainOutcome {
    /// Checkpoint holding the best-validation weights.
    pub checkpoint: PathBuf,
    pub log_path: PathBuf,
    pub log: Vec<LogRow>,
    pub best_val_loss: f64,
    pub best_step: usize,
    /// Weights after the final step (not necessarily the best ones).
    pub final_model: ModelGraph<f32>,
}

/// Loads the manifest named by `cfg`, degrades the train and validation
/// volumes and runs [`train_on`].
pub fn train(cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let manifest = DatasetManifest::load(&cfg.manifest)?;
    let train = PairedVolume::load_split(&manifest, Split::Train, &cfg.degrade)?;
    let val = PairedVolume::load_split(&manifest, Split::Validation, &cfg.degrade)?;
    train_on(cfg, &train, &val)
}

/// Converts cubes to a network batch. Slice-wise models see each cube as
/// `cube_size` single-slice patches along the depth axis.
pub fn batch_tensor(cubes: &[Volume3D], slice_wise: bool) -> Result<Tensor<f32>> {
    let t = Tensor::from_volumes(cubes)?;
    if !slice_wise {
        return Ok(t);
    }
    let [b, c, d, h, w] = t.shape();
    t.reshape([b * d, c, 1, h, w])
}

/// Fixed validation cubes: `val_cubes` corners per volume from a stream
/// separate from the training sampler.
fn validation_cubes(cfg: &TrainConfig, val: &[PairedVolume]) -> Result<Vec<(Volume3D, Volume3D)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let size = [cfg.patch.cube_size; 3];
    let mut cubes = Vec::new();
    for p in val {
        for _ in 0..cfg.val_cubes {
            let c = sample_corner(p.hr.dims(), &cfg.patch, &mut rng)?;
            cubes.push((p.lr.crop(c, size), p.hr.crop(c, size)));
        }
    }
    Ok(cubes)
}

fn validation_loss(
    model: &ModelGraph<f32>,
    cfg: &TrainConfig,
    cubes: &[(Volume3D, Volume3D)],
    val: &[PairedVolume],
) -> Result<f64> {
    if cfg.full_volume_validation {
        let mut total = 0.0;
        for p in val {
            total += metrics::mse(&p.hr, &infer_volume(model, &p.lr, &cfg.patch)?)?;
        }
        return Ok(total / val.len() as f64);
    }
    let slice_wise = model.arch().is_2d();
    let (mut sum, mut n) = (0.0f64, 0usize);
    for chunk in cubes.chunks(cfg.patch.batch_cubes) {
        let lr: Vec<Volume3D> = chunk.iter().map(|c| c.0.clone()).collect();
        let hr: Vec<Volume3D> = chunk.iter().map(|c| c.1.clone()).collect();
        let pred = model.infer(&batch_tensor(&lr, slice_wise)?)?;
        let target = batch_tensor(&hr, slice_wise)?;
        for (a, b) in pred.data().iter().zip(target.data()) {
            let d = (*a - *b) as f64;
            sum += d * d;
        }
        n += target.numel();
    }
    Ok(sum / n as f64)
}

fn save_checkpoint(
    model: &ModelGraph<f32>,
    adam: &AdamState<f32>,
    cfg: &TrainConfig,
    step: usize,
    val_loss: f64,
    path: &std::path::Path,
) -> Result<()> {
    let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
    let mut ck = model.to_checkpoint(Some(adam));
    ck.set_meta("step", step.to_string());
    ck.set_meta("val_loss", val_loss.to_string());
    ck.set_meta("seed", cfg.seed.to_string());
    ck.set_meta("cube_size", cfg.patch.cube_size.to_string());
    ck.set_meta("stride", cfg.patch.stride.to_string());
    ck.set_meta("factors", join(&cfg.degrade.factors()));
    ck.set_meta("axes", join(cfg.degrade.axes()));
    ck.save(path)
}

/// Runs the loop on in-memory volume pairs. Writes the best checkpoint and
/// the CSV log into `cfg.out_dir`.
pub fn train_on(cfg: &TrainConfig, train: &[PairedVolume], val: &[PairedVolume]) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train.is_empty() {
        return Err(Error::Empty("training split".into()));
    }
    if val.is_empty() {
        return Err(Error::Empty("validation split".into()));
    }
    fs::create_dir_all(&cfg.out_dir).map_err(|e| Error::io(&cfg.out_dir, e))?;
    let checkpoint = cfg.out_dir.join(cfg.model.checkpoint_file_name());
    let log_path = cfg.out_dir.join(LOG_FILE_NAME);

    let mut model: ModelGraph<f32> = cfg.model.build(cfg.seed)?;
    let mut adam = AdamState::new(cfg.lr, &model.param_shapes());
    let slice_wise = cfg.model.is_2d();
    let val_cubes = validation_cubes(cfg, val)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let size = [cfg.patch.cube_size; 3];

    let mut log = Vec::with_capacity(cfg.max_steps);
    let mut best = (f64::INFINITY, 0usize);
    for step in 1..=cfg.max_steps {
        let mut lr_cubes = Vec::with_capacity(cfg.patch.batch_cubes);
        let mut hr_cubes = Vec::with_capacity(cfg.patch.batch_cubes);
        for _ in 0..cfg.patch.batch_cubes {
            let p = &train[rng.random_range(0..train.len())];
            let c = sample_corner(p.hr.dims(), &cfg.patch, &mut rng)?;
            lr_cubes.push(p.lr.crop(c, size));
            hr_cubes.push(p.hr.crop(c, size));
        }
        let mut tape = Tape::new();
        let x = tape.input(batch_tensor(&lr_cubes, slice_wise)?);
        let y = tape.input(batch_tensor(&hr_cubes, slice_wise)?);
        let (out, vars) = model.forward(&mut tape, x, Mode::Train)?;
        let loss = tape.mse_loss(out, y)?;
        let train_loss = tape.value(loss).data()[0] as f64;
        if !train_loss.is_finite() {
            let _ = fs::write(&log_path, log_csv(&log));
            return Err(Error::NonFiniteLoss { step });
        }
        tape.backward(loss)?;
        model.apply_adam(&mut adam, &tape, &vars)?;
        if model.params().iter().any(|p| !p.value.all_finite()) {
            let _ = fs::write(&log_path, log_csv(&log));
            return Err(Error::NonFiniteLoss { step });
        }

        let mut row = LogRow {
            step,
            train_loss,
            val_loss: None,
            checkpoint_saved: false,
        };
        if step % cfg.validate_every == 0 || step == cfg.max_steps {
            let v = validation_loss(&model, cfg, &val_cubes, val)?;
            if !v.is_finite() {
                let _ = fs::write(&log_path, log_csv(&log));
                return Err(Error::NonFiniteLoss { step });
            }
            row.val_loss = Some(v);
            if v < best.0 {
                best = (v, step);
                save_checkpoint(&model, &adam, cfg, step, v, &checkpoint)?;
                row.checkpoint_saved = true;
            }
        }
        log.push(row);
    }
    fs::write(&log_path, log_csv(&log)).map_err(|e| Error::io(&log_path, e))?;
    Ok(TrainOutcome {
        checkpoint,
        log_path,
        log,
        best_val_loss: best.0,
        best_step: best.1,
        final_model: model,
    })
}
