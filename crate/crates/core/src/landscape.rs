//! Two-dimensional objective landscapes over a pair of model parameters.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bounds::Bounds;
use crate::error::{Error, Result};
use crate::objectives::Objective;
use crate::pgps::{PgpsParams, PARAM_NAMES};
use crate::seed::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridScan {
    pub dims: (usize, usize),
    pub axis_values: (Vec<f64>, Vec<f64>),
    /// Row-major `|axis 0| x |axis 1|`; `None` where evaluation failed.
    pub cells: Vec<Option<f64>>,
    pub fixed: PgpsParams,
    pub target_cell: Option<(usize, usize)>,
}

/// Midpoints of `resolution` equal sub-intervals of `[low, high]`.
pub fn axis_midpoints(low: f64, high: f64, resolution: usize) -> Vec<f64> {
    let step = (high - low) / resolution as f64;
    (0..resolution).map(|i| low + (i as f64 + 0.5) * step).collect()
}

fn nearest(axis: &[f64], v: f64) -> usize {
    axis.iter()
        .enumerate()
        .min_by(|a, b| (a.1 - v).abs().total_cmp(&(b.1 - v).abs()))
        .map(|(i, _)| i)
        .unwrap_or(0)
}

impl GridScan {
    pub fn rows(&self) -> usize {
        self.axis_values.0.len()
    }

    pub fn cols(&self) -> usize {
        self.axis_values.1.len()
    }

    pub fn value(&self, i: usize, j: usize) -> Option<f64> {
        self.cells[i * self.cols() + j]
    }

    /// Number of cells whose value equals the overall minimum.
    pub fn tied_at_minimum(&self) -> usize {
        let min = self.cells.iter().flatten().copied().fold(f64::INFINITY, f64::min);
        self.cells.iter().flatten().filter(|v| **v == min).count()
    }

    /// CSV `i,j,value_dim1,value_dim2,objective,in_top_k`; failed cells have an empty objective.
    pub fn to_csv(&self, mask: &[bool]) -> String {
        let mut out = String::from("i,j,value_dim1,value_dim2,objective,in_top_k\n");
        for i in 0..self.rows() {
            for j in 0..self.cols() {
                let k = i * self.cols() + j;
                let obj = self.cells[k].map(|v| v.to_string()).unwrap_or_default();
                out.push_str(&format!(
                    "{},{},{},{},{},{}\n",
                    i, j, self.axis_values.0[i], self.axis_values.1[j], obj, mask[k]
                ));
            }
        }
        out
    }

    pub fn sidecar_json(&self, k: usize) -> serde_json::Value {
        serde_json::json!({
            "dims": [PARAM_NAMES[self.dims.0], PARAM_NAMES[self.dims.1]],
            "resolution": [self.rows(), self.cols()],
            "fixed": self.fixed,
            "target_cell": self.target_cell,
            "top_k": k,
            "tied_at_minimum": self.tied_at_minimum(),
        })
    }
}

/// How each grid cell picks its simulation seed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CellSeeds {
    /// Cell `(i, j)` uses `derive_seed(seed, [i, j])`.
    PerCell(u64),
    /// Every cell uses the same seed (common random numbers), so cells differ
    /// only through their parameters.
    Common(u64),
}

impl CellSeeds {
    fn for_cell(self, i: usize, j: usize) -> u64 {
        match self {
            CellSeeds::PerCell(seed) => derive_seed(seed, &[i as u64, j as u64]),
            CellSeeds::Common(seed) => seed,
        }
    }
}

/// Evaluates `objective` on a `resolution x resolution` grid over parameters
/// `dims`, holding the rest at `fixed`. Cell `(i, j)` uses seed
/// `derive_seed(seed, [i, j])`.
pub fn grid_scan<O: Objective + ?Sized>(
    objective: &O,
    dims: (usize, usize),
    fixed: PgpsParams,
    bounds: &Bounds,
    resolution: usize,
    seed: u64,
) -> Result<GridScan> {
    grid_scan_with(objective, dims, fixed, bounds, resolution, CellSeeds::PerCell(seed))
}

pub fn grid_scan_with<O: Objective + ?Sized>(
    objective: &O,
    dims: (usize, usize),
    fixed: PgpsParams,
    bounds: &Bounds,
    resolution: usize,
    seeds: CellSeeds,
) -> Result<GridScan> {
    if resolution < 2 {
        return Err(Error::InvalidConfig(format!("resolution must be >= 2, got {resolution}")));
    }
    if dims.0 == dims.1 || dims.0 >= bounds.dim() || dims.1 >= bounds.dim() {
        return Err(Error::InvalidConfig(format!("invalid dimension pair {dims:?}")));
    }
    let ax0 = axis_midpoints(bounds.low(dims.0), bounds.high(dims.0), resolution);
    let ax1 = axis_midpoints(bounds.low(dims.1), bounds.high(dims.1), resolution);
    let base = fixed.to_array();
    let cells: Vec<Option<f64>> = (0..resolution * resolution)
        .into_par_iter()
        .map(|k| {
            let (i, j) = (k / resolution, k % resolution);
            let mut x = base;
            x[dims.0] = ax0[i];
            x[dims.1] = ax1[j];
            objective.evaluate(&x, seeds.for_cell(i, j)).ok()
        })
        .collect();
    let target_cell = Some((nearest(&ax0, base[dims.0]), nearest(&ax1, base[dims.1])));
    Ok(GridScan { dims, axis_values: (ax0, ax1), cells, fixed, target_cell })
}

/// Marks the `k` smallest cells, ties broken by row-major index. Failed cells rank last.
pub fn top_k_mask(scan: &GridScan, k: usize) -> Result<Vec<bool>> {
    let n = scan.cells.len();
    if k < 1 || k > n {
        return Err(Error::InvalidParameter(format!("k must lie in [1, {n}], got {k}")));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| {
        let va = scan.cells[a].unwrap_or(f64::INFINITY);
        let vb = scan.cells[b].unwrap_or(f64::INFINITY);
        va.total_cmp(&vb).then(a.cmp(&b))
    });
    let mut mask = vec![false; n];
    for &i in &order[..k] {
        mask[i] = true;
    }
    Ok(mask)
}
