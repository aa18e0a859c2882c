//! Whole-volume inference and evaluation against interpolation baselines.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use super::manifest::{DatasetManifest, Split};
use crate::autodiff::{Checkpoint, Tensor};
use crate::error::{Error, Result};
use crate::kspace::{decimate, degrade, DegradeSpec};
use crate::metrics::{summarize, MetricRow, MetricsReport};
use crate::models::ModelGraph;
use crate::patch::{extract_tiles, merge_patches, tile_positions, PatchSpec};
use crate::volume::{load_volume, normalize_intensity, upsample_nearest, upsample_tricubic, Volume3D};

/// A normalised high-resolution volume and its same-size degraded copy.
#[derive(Clone, Debug)]
pub struct PairedVolume {
    pub id: String,
    pub hr: Volume3D,
    pub lr: Volume3D,
}

impl PairedVolume {
    pub fn from_hr(id: impl Into<String>, hr: Volume3D, spec: &DegradeSpec) -> Result<Self> {
        let hr = normalize_intensity(&hr)?;
        let lr = degrade(&hr, spec)?;
        Ok(PairedVolume { id: id.into(), hr, lr })
    }

    /// Loads one split, sorted by id.
    pub fn load_split(manifest: &DatasetManifest, split: Split, spec: &DegradeSpec) -> Result<Vec<Self>> {
        let entries = manifest.split(split);
        if entries.is_empty() {
            return Err(Error::Empty(format!("{split} split")));
        }
        entries
            .into_iter()
            .map(|e| PairedVolume::from_hr(e.id.clone(), load_volume(&e.path)?, spec))
            .collect()
    }
}

/// Tiles `lr`, runs each cube through the model in inference mode and
/// averages the overlapping outputs.
pub fn infer_volume(model: &ModelGraph<f32>, lr: &Volume3D, patch: &PatchSpec) -> Result<Volume3D> {
    let plan = tile_positions(lr.dims(), patch)?;
    let outputs = extract_tiles(lr, &plan)?
        .iter()
        .map(|cube| model.infer(&Tensor::from_volume(cube))?.to_volume(0, lr.spacing()))
        .collect::<Result<Vec<_>>>()?;
    merge_patches(&outputs, &plan)
}

/// A checkpointed model with the patch and degradation settings it was
/// trained with.
#[derive(Debug)]
pub struct LoadedModel {
    pub model: ModelGraph<f32>,
    pub patch: PatchSpec,
    pub degrade: Option<DegradeSpec>,
}

impl LoadedModel {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let ck = Checkpoint::load(path)?;
        let (model, _) = ModelGraph::from_checkpoint(&ck)?;
        let num = |k: &str| ck.meta(k).and_then(|v| v.parse::<usize>().ok());
        let list = |k: &str| -> Option<Vec<usize>> {
            ck.meta(k)?.split(',').map(|p| p.trim().parse().ok()).collect()
        };
        let cube = num("cube_size").unwrap_or(64);
        let patch = PatchSpec {
            cube_size: cube,
            stride: num("stride").unwrap_or((cube / 2).max(1)),
            batch_cubes: 1,
        };
        patch.validate()?;
        let degrade = match (list("factors"), list("axes")) {
            (Some(f), Some(a)) if f.len() == 3 => Some(DegradeSpec::new([f[0], f[1], f[2]], &a)?),
            _ => None,
        };
        Ok(LoadedModel { model, patch, degrade })
    }

    /// Tiled inference; volumes smaller than the training cube on some axis
    /// are run with the largest cube that fits.
    pub fn super_resolve(&self, lr: &Volume3D) -> Result<Volume3D> {
        let min_dim = *lr.dims().iter().min().expect("three axes");
        let mut patch = self.patch;
        if min_dim < patch.cube_size {
            patch.cube_size = min_dim;
            patch.stride = patch.stride.min(min_dim).max(1);
        }
        infer_volume(&self.model, lr, &patch)
    }
}

/// What produces the super-resolved volume during evaluation.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Method {
    Nearest,
    Tricubic,
    /// The degraded input itself.
    LrIdentity,
    /// The ground truth itself.
    HrIdentity,
    Checkpoint(PathBuf),
}

impl Method {
    pub fn label(&self) -> String {
        match self {
            Method::Checkpoint(p) => p
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "model".into()),
            other => other.to_string(),
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Nearest => f.write_str("nearest"),
            Method::Tricubic => f.write_str("tricubic"),
            Method::LrIdentity => f.write_str("lr-identity"),
            Method::HrIdentity => f.write_str("hr-identity"),
            Method::Checkpoint(p) => write!(f, "{}", p.display()),
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    /// Baseline names, or a path ending in `.ckpt`.
    fn from_str(s: &str) -> Result<Method> {
        let s = s.trim();
        Ok(match s {
            "nearest" => Method::Nearest,
            "tricubic" => Method::Tricubic,
            "lr-identity" => Method::LrIdentity,
            "hr-identity" => Method::HrIdentity,
            p if p.ends_with(".ckpt") => Method::Checkpoint(PathBuf::from(p)),
            other => return Err(Error::UnknownMethod(other.to_string())),
        })
    }
}

/// A ready-to-run method. Interpolation baselines upsample the
/// reduced-matrix decimation; models and `lr-identity` use the same-size
/// degraded volume.
pub enum Predictor<'a> {
    Nearest,
    Tricubic,
    LrIdentity,
    HrIdentity,
    Model { model: &'a ModelGraph<f32>, patch: PatchSpec },
}

impl Predictor<'_> {
    pub fn predict(&self, pair: &PairedVolume, spec: &DegradeSpec) -> Result<Volume3D> {
        match self {
            Predictor::Nearest => upsample_nearest(&decimate(&pair.hr, spec)?, spec.factors()),
            Predictor::Tricubic => upsample_tricubic(&decimate(&pair.hr, spec)?, spec.factors()),
            Predictor::LrIdentity => Ok(pair.lr.clone()),
            Predictor::HrIdentity => Ok(pair.hr.clone()),
            Predictor::Model { model, patch } => infer_volume(model, &pair.lr, patch),
        }
    }
}

/// Metrics of one predictor over `pairs`, rows in input order.
pub fn evaluate_pairs(predictor: &Predictor<'_>, pairs: &[PairedVolume], spec: &DegradeSpec) -> Result<MetricsReport> {
    if pairs.is_empty() {
        return Err(Error::Empty("no volumes to evaluate".into()));
    }
    let rows = pairs
        .iter()
        .map(|p| MetricRow::compute(p.id.clone(), &p.hr, &predictor.predict(p, spec)?))
        .collect::<Result<Vec<_>>>()?;
    summarize(rows)
}

fn with_predictor<R>(method: &Method, f: impl FnOnce(&Predictor<'_>) -> Result<R>) -> Result<R> {
    match method {
        Method::Nearest => f(&Predictor::Nearest),
        Method::Tricubic => f(&Predictor::Tricubic),
        Method::LrIdentity => f(&Predictor::LrIdentity),
        Method::HrIdentity => f(&Predictor::HrIdentity),
        Method::Checkpoint(path) => {
            let m = LoadedModel::load(path)?;
            f(&Predictor::Model {
                model: &m.model,
                patch: m.patch,
            })
        }
    }
}

/// Degrades every volume of `split` with `spec`, applies `method` and
/// scores the result against the ground truth.
pub fn evaluate_model(method: &Method, manifest: &DatasetManifest, split: Split, spec: &DegradeSpec) -> Result<MetricsReport> {
    let pairs = PairedVolume::load_split(manifest, split, spec)?;
    with_predictor(method, |p| evaluate_pairs(p, &pairs, spec))
}

/// One report per method over the same degraded volumes.
pub fn compare(
    methods: &[Method],
    manifest: &DatasetManifest,
    split: Split,
    spec: &DegradeSpec,
) -> Result<Vec<(String, MetricsReport)>> {
    if methods.is_empty() {
        return Err(Error::Empty("no methods to compare".into()));
    }
    let pairs = PairedVolume::load_split(manifest, split, spec)?;
    methods
        .iter()
        .map(|m| Ok((m.label(), with_predictor(m, |p| evaluate_pairs(p, &pairs, spec))?)))
        .collect()
}
