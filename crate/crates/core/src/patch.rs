//! Random cube sampling for training and sliding-window tiling with
//! overlap-averaged merging for whole-volume inference.

use rand::Rng;

use crate::error::{Error, Result};
use crate::volume::Volume3D;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct PatchSpec {
    pub cube_size: usize,
    pub stride: usize,
    pub batch_cubes: usize,
}

impl Default for PatchSpec {
    fn default() -> Self {
        Self::with_cube(64)
    }
}

impl PatchSpec {
    /// Stride of half the cube, two cubes per batch.
    pub fn with_cube(cube_size: usize) -> Self {
        PatchSpec {
            cube_size,
            stride: (cube_size / 2).max(1),
            batch_cubes: 2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.cube_size == 0 || self.stride == 0 || self.stride > self.cube_size {
            return Err(Error::InvalidArgument(format!(
                "need 1 <= stride <= cube_size, got stride {} cube {}",
                self.stride, self.cube_size
            )));
        }
        if self.batch_cubes == 0 {
            return Err(Error::InvalidArgument("batch_cubes must be >= 1".into()));
        }
        Ok(())
    }

    fn check_dims(&self, dims: [usize; 3]) -> Result<()> {
        self.validate()?;
        if dims.iter().any(|&d| d < self.cube_size) {
            return Err(Error::InvalidArgument(format!(
                "volume {dims:?} smaller than cube size {}",
                self.cube_size
            )));
        }
        Ok(())
    }
}

/// Draws one corner uniformly from `[0, dim − cube]` per axis and crops the
/// same cube from both volumes.
pub fn sample_patch_pair(
    lr: &Volume3D,
    hr: &Volume3D,
    spec: &PatchSpec,
    rng: &mut impl Rng,
) -> Result<(Volume3D, Volume3D)> {
    if lr.dims() != hr.dims() {
        return Err(Error::DimMismatch(format!("{:?} vs {:?}", lr.dims(), hr.dims())));
    }
    let corner = sample_corner(lr.dims(), spec, rng)?;
    let size = [spec.cube_size; 3];
    Ok((lr.crop(corner, size), hr.crop(corner, size)))
}

pub fn sample_corner(dims: [usize; 3], spec: &PatchSpec, rng: &mut impl Rng) -> Result<[usize; 3]> {
    spec.check_dims(dims)?;
    let mut corner = [0; 3];
    for a in 0..3 {
        corner[a] = rng.random_range(0..=dims[a] - spec.cube_size);
    }
    Ok(corner)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TilePlan {
    pub corners: Vec<[usize; 3]>,
    pub dims: [usize; 3],
    pub cube_size: usize,
    pub stride: usize,
}

/// Corners `0, stride, 2·stride, …` that fit, plus `dim − cube` if missing.
pub fn axis_corners(dim: usize, cube: usize, stride: usize) -> Vec<usize> {
    let last = dim - cube;
    let mut c: Vec<usize> = (0..=last).step_by(stride).collect();
    if c.last() != Some(&last) {
        c.push(last);
    }
    c
}

pub fn tile_positions(dims: [usize; 3], spec: &PatchSpec) -> Result<TilePlan> {
    spec.check_dims(dims)?;
    let per_axis: Vec<Vec<usize>> = (0..3)
        .map(|a| axis_corners(dims[a], spec.cube_size, spec.stride))
        .collect();
    let mut corners = Vec::new();
    for &x in &per_axis[0] {
        for &y in &per_axis[1] {
            for &z in &per_axis[2] {
                corners.push([x, y, z]);
            }
        }
    }
    Ok(TilePlan {
        corners,
        dims,
        cube_size: spec.cube_size,
        stride: spec.stride,
    })
}

impl TilePlan {
    pub fn len(&self) -> usize {
        self.corners.len()
    }

    pub fn is_empty(&self) -> bool {
        self.corners.is_empty()
    }

    /// Number of tiles covering each voxel, x-fastest.
    pub fn coverage(&self) -> Vec<u32> {
        let [nx, ny, _] = self.dims;
        let mut cov = vec![0u32; self.dims.iter().product()];
        let c = self.cube_size;
        for corner in &self.corners {
            for z in corner[2]..corner[2] + c {
                for y in corner[1]..corner[1] + c {
                    let row = nx * (y + ny * z);
                    for x in corner[0]..corner[0] + c {
                        cov[row + x] += 1;
                    }
                }
            }
        }
        cov
    }
}

pub fn extract_tiles(vol: &Volume3D, plan: &TilePlan) -> Result<Vec<Volume3D>> {
    if vol.dims() != plan.dims {
        return Err(Error::DimMismatch(format!("{:?} vs plan {:?}", vol.dims(), plan.dims)));
    }
    Ok(plan
        .corners
        .iter()
        .map(|&c| vol.crop(c, [plan.cube_size; 3]))
        .collect())
}

/// Averages overlapping cubes: each voxel is the sum of covering cube values
/// divided by its coverage count.
pub fn merge_patches(outputs: &[Volume3D], plan: &TilePlan) -> Result<Volume3D> {
    if outputs.len() != plan.corners.len() {
        return Err(Error::InvalidArgument(format!(
            "plan has {} tiles, got {} outputs",
            plan.corners.len(),
            outputs.len()
        )));
    }
    let c = plan.cube_size;
    let [nx, ny, _] = plan.dims;
    let mut sum = vec![0.0f64; plan.dims.iter().product()];
    for (cube, corner) in outputs.iter().zip(&plan.corners) {
        if cube.dims() != [c; 3] {
            return Err(Error::DimMismatch(format!(
                "tile {:?} is not a {c}-cube",
                cube.dims()
            )));
        }
        for z in 0..c {
            for y in 0..c {
                let row = nx * (corner[1] + y + ny * (corner[2] + z)) + corner[0];
                for x in 0..c {
                    sum[row + x] += cube.get(x, y, z) as f64;
                }
            }
        }
    }
    let cov = plan.coverage();
    let values = sum
        .iter()
        .zip(&cov)
        .map(|(&s, &n)| {
            debug_assert!(n >= 1);
            (s / n as f64) as f32
        })
        .collect();
    let spacing = outputs.first().map(|v| v.spacing()).unwrap_or([0.7; 3]);
    Volume3D::new(plan.dims, spacing, values)
}
