//! Training configuration and its `key=value` file format.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::kspace::DegradeSpec;
use crate::models::Architecture;
use crate::patch::PatchSpec;

/// Everything a training run needs. `Display` writes the same `key=value`
/// format that [`TrainConfig::parse`] reads.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub model: Architecture,
    pub lr: f64,
    pub max_steps: usize,
    pub validate_every: usize,
    pub seed: u64,
    pub degrade: DegradeSpec,
    pub patch: PatchSpec,
    /// Fixed validation cubes drawn per validation volume.
    pub val_cubes: usize,
    /// Validate on whole volumes through tiled inference instead of cubes.
    pub full_volume_validation: bool,
    pub manifest: PathBuf,
    pub out_dir: PathBuf,
}

impl TrainConfig {
    /// Desk-scale defaults: DCSRN k=8, lr 1e-3, 2000 steps, 64³ cubes.
    pub fn desk(manifest: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        TrainConfig {
            model: "dcsrn:k=8".parse().expect("valid architecture"),
            lr: 1e-3,
            max_steps: 2000,
            validate_every: 100,
            seed: 0,
            degrade: DegradeSpec::default_2x2(),
            patch: PatchSpec::default(),
            val_cubes: 16,
            full_volume_validation: false,
            manifest: manifest.into(),
            out_dir: out_dir.into(),
        }
    }

    /// Full-size settings: DCSRN k=24 and lr 1e-5.
    pub fn paper(manifest: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> Self {
        TrainConfig {
            model: "dcsrn:k=24".parse().expect("valid architecture"),
            lr: 1e-5,
            max_steps: 500_000,
            validate_every: 1000,
            ..TrainConfig::desk(manifest, out_dir)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("lr must be > 0, got {}", self.lr)));
        }
        if self.max_steps == 0 || self.validate_every == 0 || self.val_cubes == 0 {
            return Err(Error::Config(
                "max_steps, validate_every and val_cubes must be >= 1".into(),
            ));
        }
        self.patch.validate().map_err(|e| Error::Config(e.to_string()))
    }

    /// Parses `key=value` lines. Blank lines and `#` comments are skipped,
    /// `preset=desk|paper` (if present) must come first, and relative paths
    /// resolve against `base`.
    pub fn parse(text: &str, base: &Path) -> Result<Self> {
        let mut cfg = TrainConfig::desk("", "");
        let mut factors: Option<[usize; 3]> = None;
        let mut axes: Option<Vec<usize>> = None;
        let mut stride: Option<usize> = None;
        let mut manifest = None;
        let mut first = true;
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key=value", lineno + 1)))?;
            let (key, value) = (key.trim(), value.trim());
            let bad = |e: &dyn std::fmt::Display| Error::Config(format!("line {}: {key}: {e}", lineno + 1));
            match key {
                "preset" => {
                    if !first {
                        return Err(bad(&"preset must be the first entry"));
                    }
                    cfg = match value {
                        "desk" => TrainConfig::desk("", ""),
                        "paper" => TrainConfig::paper("", ""),
                        _ => return Err(bad(&"expected desk or paper")),
                    };
                }
                "model" => cfg.model = value.parse().map_err(|e: Error| bad(&e))?,
                "lr" => cfg.lr = parse_num(value).map_err(|e| bad(&e))?,
                "max_steps" => cfg.max_steps = parse_num(value).map_err(|e| bad(&e))?,
                "validate_every" => cfg.validate_every = parse_num(value).map_err(|e| bad(&e))?,
                "seed" => cfg.seed = parse_num(value).map_err(|e| bad(&e))?,
                "batch_cubes" => cfg.patch.batch_cubes = parse_num(value).map_err(|e| bad(&e))?,
                "cube_size" => cfg.patch.cube_size = parse_num(value).map_err(|e| bad(&e))?,
                "stride" => stride = Some(parse_num(value).map_err(|e| bad(&e))?),
                "val_cubes" => cfg.val_cubes = parse_num(value).map_err(|e| bad(&e))?,
                "full_volume_validation" => {
                    cfg.full_volume_validation = parse_num(value).map_err(|e| bad(&e))?
                }
                "factors" => {
                    let v: Vec<usize> = parse_list(value).map_err(|e| bad(&e))?;
                    factors = Some(v.try_into().map_err(|_| bad(&"expected three factors"))?);
                }
                "axes" => axes = Some(parse_list(value).map_err(|e| bad(&e))?),
                "manifest" => manifest = Some(base.join(value)),
                "out_dir" => cfg.out_dir = base.join(value),
                _ => return Err(bad(&"unknown key")),
            }
            first = false;
        }
        cfg.patch.stride = stride.unwrap_or((cfg.patch.cube_size / 2).max(1));
        cfg.degrade = match (factors, axes) {
            (None, None) => cfg.degrade,
            (Some(f), None) => DegradeSpec::from_factors(f)?,
            (f, Some(a)) => {
                let f = f.unwrap_or_else(|| {
                    let mut f = [1; 3];
                    for &ax in &a {
                        if ax < 3 {
                            f[ax] = 2;
                        }
                    }
                    f
                });
                DegradeSpec::new(f, &a)?
            }
        };
        cfg.manifest = manifest.ok_or_else(|| Error::Config("missing key manifest".into()))?;
        if cfg.out_dir.as_os_str().is_empty() {
            cfg.out_dir = base.to_path_buf();
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        TrainConfig::parse(&text, path.parent().unwrap_or(Path::new("")))
    }

    pub fn to_config_string(&self) -> String {
        let mut s = String::new();
        let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        let _ = writeln!(s, "model={}", self.model);
        let _ = writeln!(s, "lr={}", self.lr);
        let _ = writeln!(s, "max_steps={}", self.max_steps);
        let _ = writeln!(s, "validate_every={}", self.validate_every);
        let _ = writeln!(s, "seed={}", self.seed);
        let _ = writeln!(s, "batch_cubes={}", self.patch.batch_cubes);
        let _ = writeln!(s, "cube_size={}", self.patch.cube_size);
        let _ = writeln!(s, "stride={}", self.patch.stride);
        let _ = writeln!(s, "val_cubes={}", self.val_cubes);
        let _ = writeln!(s, "full_volume_validation={}", self.full_volume_validation);
        let _ = writeln!(s, "factors={}", join(&self.degrade.factors()));
        let _ = writeln!(s, "axes={}", join(self.degrade.axes()));
        let _ = writeln!(s, "manifest={}", self.manifest.display());
        let _ = writeln!(s, "out_dir={}", self.out_dir.display());
        s
    }
}

fn parse_num<T: FromStr>(s: &str) -> std::result::Result<T, String>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e: T::Err| format!("{s:?}: {e}"))
}

/// Parses a comma-separated list such as `2,2,1`.
pub fn parse_list<T: FromStr>(s: &str) -> std::result::Result<Vec<T>, String>
where
    T::Err: std::fmt::Display,
{
    s.split(',').map(|p| parse_num(p.trim())).collect()
}
