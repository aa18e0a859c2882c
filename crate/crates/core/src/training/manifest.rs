//! Dataset manifests: `id,path,split` CSV files listing volumes and their
//! split assignment.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Split {
    Train,
    Validation,
    Evaluation,
    Test,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Train, Split::Validation, Split::Evaluation, Split::Test];

    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Validation => "validation",
            Split::Evaluation => "evaluation",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Split> {
        match s.trim() {
            "train" => Ok(Split::Train),
            "validation" | "val" => Ok(Split::Validation),
            "evaluation" | "eval" => Ok(Split::Evaluation),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!("unknown split {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    pub id: String,
    pub path: PathBuf,
    /// `None` until the manifest has been split.
    pub split: Option<Split>,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct DatasetManifest {
    pub entries: Vec<ManifestEntry>,
}

impl DatasetManifest {
    pub fn new(entries: Vec<ManifestEntry>) -> Result<Self> {
        let mut ids: Vec<&str> = entries.iter().map(|e| e.id.as_str()).collect();
        ids.sort_unstable();
        if let Some(w) = ids.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument(format!("duplicate id {:?}", w[0])));
        }
        for e in &entries {
            if e.id.is_empty() || e.id.contains(',') || e.path.to_string_lossy().contains(',') {
                return Err(Error::InvalidArgument(format!("bad manifest entry {:?}", e.id)));
            }
        }
        Ok(DatasetManifest { entries })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Entries of one split, sorted by id.
    pub fn split(&self, split: Split) -> Vec<&ManifestEntry> {
        let mut v: Vec<&ManifestEntry> = self.entries.iter().filter(|e| e.split == Some(split)).collect();
        v.sort_by(|a, b| a.id.cmp(&b.id));
        v
    }

    pub fn counts(&self) -> [usize; 4] {
        Split::ALL.map(|s| self.entries.iter().filter(|e| e.split == Some(s)).count())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,path,split\n");
        for e in &self.entries {
            let split = e.split.map(Split::as_str).unwrap_or("");
            out.push_str(&format!("{},{},{}\n", e.id, e.path.display(), split));
        }
        out
    }

    /// Parses manifest CSV. Relative paths are kept as written.
    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        match lines.next().map(str::trim) {
            Some("id,path,split") | Some("id,path") => {}
            other => {
                return Err(Error::InvalidArgument(format!("bad manifest header {other:?}")));
            }
        }
        let mut entries = Vec::new();
        for line in lines {
            let cols: Vec<&str> = line.split(',').map(str::trim).collect();
            if cols.len() < 2 || cols.len() > 3 {
                return Err(Error::InvalidArgument(format!("bad manifest row {line:?}")));
            }
            let split = match cols.get(2) {
                Some(s) if !s.is_empty() => Some(s.parse()?),
                _ => None,
            };
            entries.push(ManifestEntry {
                id: cols[0].to_string(),
                path: PathBuf::from(cols[1]),
                split,
            });
        }
        DatasetManifest::new(entries)
    }

    /// Reads a manifest and resolves relative volume paths against the
    /// manifest's directory.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut m = DatasetManifest::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for e in &mut m.entries {
            if e.path.is_relative() {
                e.path = base.join(&e.path);
            }
        }
        Ok(m)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_csv()).map_err(|e| Error::io(path, e))
    }
}

/// Sizes for `n` items under integer `ratios`: `floor(n·r/Σr)` for every
/// split but the first, which takes the remainder.
pub fn split_sizes(n: usize, ratios: [usize; 4]) -> Result<[usize; 4]> {
    let total: usize = ratios.iter().sum();
    if total == 0 {
        return Err(Error::InvalidArgument("split ratios sum to zero".into()));
    }
    let mut sizes = ratios.map(|r| n * r / total);
    sizes[0] = n - sizes[1..].iter().sum::<usize>();
    Ok(sizes)
}

/// Shuffles `entries` with a seeded generator and assigns train,
/// validation, evaluation and test in that order. Output keeps the input
/// order of entries.
pub fn split_dataset(mut manifest: DatasetManifest, ratios: [usize; 4], seed: u64) -> Result<DatasetManifest> {
    if manifest.is_empty() {
        return Err(Error::Empty("manifest has no ids".into()));
    }
    let sizes = split_sizes(manifest.len(), ratios)?;
    let mut order: Vec<usize> = (0..manifest.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut pos = 0;
    for (split, &size) in Split::ALL.iter().zip(&sizes) {
        for &i in &order[pos..pos + size] {
            manifest.entries[i].split = Some(*split);
        }
        pos += size;
    }
    Ok(manifest)
}

/// Convenience for bare ids; paths are `<id>.vol`.
pub fn split_ids(ids: &[String], ratios: [usize; 4], seed: u64) -> Result<DatasetManifest> {
    let entries = ids
        .iter()
        .map(|id| ManifestEntry {
            id: id.clone(),
            path: PathBuf::from(format!("{id}.vol")),
            split: None,
        })
        .collect();
    split_dataset(DatasetManifest::new(entries)?, ratios, seed)
}
