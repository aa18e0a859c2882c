use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand};
use dcsrn_core::kspace::degrade;
use dcsrn_core::metrics::comparison_csv;
use dcsrn_core::training::{
    compare, evaluate_model, parse_list, split_dataset, train, LoadedModel, ManifestEntry,
};
use dcsrn_core::volume::{load_volume, make_phantom, save_volume};
use dcsrn_core::{DatasetManifest, DegradeSpec, Method, PhantomSpec, Split, TrainConfig};

#[derive(Parser)]
#[command(name = "dcsrn", version, about = "Volumetric MRI super-resolution toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write synthetic ellipsoid phantoms and a manifest listing them.
    Phantom {
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        count: usize,
        #[arg(long, value_parser = triple)]
        dims: [usize; 3],
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Simulate a low-resolution acquisition by k-space truncation.
    Degrade {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_parser = triple)]
        factors: [usize; 3],
        /// Axes to truncate; defaults to every axis with a factor of 2 or more.
        #[arg(long, value_delimiter = ',')]
        axes: Option<Vec<usize>>,
    },
    /// Assign train/validation/evaluation/test splits in place.
    Split {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, value_parser = quad, default_value = "7,1,1,1")]
        ratios: [usize; 4],
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Train a model from a key=value config file.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Super-resolve one volume with a trained checkpoint.
    Sr {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score one method on a manifest split.
    Eval {
        /// nearest, tricubic, lr-identity, hr-identity or a .ckpt path.
        #[arg(long)]
        method: Method,
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        #[arg(long)]
        report: PathBuf,
        #[command(flatten)]
        degrade: DegradeArgs,
    },
    /// Score several methods side by side.
    Compare {
        #[arg(long)]
        manifest: PathBuf,
        /// Comma-separated method names or .ckpt paths.
        #[arg(long, value_delimiter = ',', required = true)]
        methods: Vec<Method>,
        #[arg(long, default_value = "test")]
        split: Split,
        #[arg(long)]
        report: PathBuf,
        #[command(flatten)]
        degrade: DegradeArgs,
    },
}

/// Degradation used to build LR inputs. Without flags a checkpoint's own
/// training degradation is used, else factor 2 on axes 0 and 1.
#[derive(clap::Args)]
struct DegradeArgs {
    #[arg(long, value_parser = triple)]
    factors: Option<[usize; 3]>,
    #[arg(long, value_delimiter = ',', requires = "factors")]
    axes: Option<Vec<usize>>,
}

impl DegradeArgs {
    fn resolve(&self, methods: &[Method]) -> Result<DegradeSpec> {
        if let Some(f) = self.factors {
            return Ok(match &self.axes {
                Some(a) => DegradeSpec::new(f, a)?,
                None => DegradeSpec::from_factors(f)?,
            });
        }
        for m in methods {
            if let Method::Checkpoint(p) = m {
                if let Some(spec) = LoadedModel::load(p)?.degrade {
                    return Ok(spec);
                }
            }
        }
        Ok(DegradeSpec::default_2x2())
    }
}

fn fixed<const N: usize>(s: &str) -> std::result::Result<[usize; N], String> {
    let v: Vec<usize> = parse_list(s)?;
    v.try_into().map_err(|v: Vec<usize>| format!("expected {N} values, got {}", v.len()))
}

fn triple(s: &str) -> std::result::Result<[usize; 3], String> {
    fixed::<3>(s)
}

fn quad(s: &str) -> std::result::Result<[usize; 4], String> {
    fixed::<4>(s)
}

fn write_report(path: &Path, csv: &str) -> Result<()> {
    std::fs::write(path, csv).with_context(|| format!("writing {}", path.display()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Phantom { out, count, dims, seed } => {
            if count == 0 {
                bail!("--count must be at least 1");
            }
            std::fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            let mut entries = Vec::with_capacity(count);
            for i in 0..count {
                let id = format!("phantom_{i:04}");
                let spec = PhantomSpec::new(dims, seed.wrapping_add(i as u64));
                let file = PathBuf::from(format!("{id}.vol"));
                save_volume(&make_phantom(&spec)?, out.join(&file))?;
                entries.push(ManifestEntry { id, path: file, split: None });
            }
            let manifest = out.join("manifest.csv");
            DatasetManifest::new(entries)?.save(&manifest)?;
            println!("wrote {count} phantoms and {}", manifest.display());
        }
        Command::Degrade { input, out, factors, axes } => {
            let spec = match axes {
                Some(a) => DegradeSpec::new(factors, &a)?,
                None => DegradeSpec::from_factors(factors)?,
            };
            save_volume(&degrade(&load_volume(&input)?, &spec)?, &out)?;
        }
        Command::Split { manifest, ratios, seed } => {
            let text = std::fs::read_to_string(&manifest).with_context(|| format!("reading {}", manifest.display()))?;
            let split = split_dataset(DatasetManifest::parse(&text)?, ratios, seed)?;
            split.save(&manifest)?;
            let [tr, va, ev, te] = split.counts();
            println!("train {tr} validation {va} evaluation {ev} test {te}");
        }
        Command::Train { config } => {
            let cfg = TrainConfig::load(&config)?;
            let outcome = train(&cfg)?;
            println!(
                "best validation loss {} at step {}; checkpoint {}; log {}",
                outcome.best_val_loss,
                outcome.best_step,
                outcome.checkpoint.display(),
                outcome.log_path.display()
            );
        }
        Command::Sr { checkpoint, input, out } => {
            let model = LoadedModel::load(&checkpoint)?;
            save_volume(&model.super_resolve(&load_volume(&input)?)?, &out)?;
        }
        Command::Eval { method, manifest, split, report, degrade } => {
            let spec = degrade.resolve(std::slice::from_ref(&method))?;
            let r = evaluate_model(&method, &DatasetManifest::load(&manifest)?, split, &spec)?;
            write_report(&report, &r.to_csv())?;
            println!("{method}: ssim {:.4} psnr {:.2} nrmse {:.4}", r.ssim.mean, r.psnr.mean, r.nrmse.mean);
        }
        Command::Compare { manifest, methods, split, report, degrade } => {
            let spec = degrade.resolve(&methods)?;
            let reports = compare(&methods, &DatasetManifest::load(&manifest)?, split, &spec)?;
            write_report(&report, &comparison_csv(&reports))?;
            for (name, r) in &reports {
                println!("{name}: ssim {:.4} psnr {:.2} nrmse {:.4}", r.ssim.mean, r.psnr.mean, r.nrmse.mean);
            }
        }
    }
    Ok(())
}

fn one_line(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string().lines().next().unwrap_or_default().to_string();
            eprintln!("{}", one_line(&first));
            return ExitCode::from(2);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", one_line(&format!("{e:#}")));
            ExitCode::FAILURE
        }
    }
}
