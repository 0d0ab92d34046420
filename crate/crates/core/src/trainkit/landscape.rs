//! Loss over the plane spanned by three parameter vectors, located at fixed
//! 2-D coordinates and mixed with barycentric weights.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{dim, Error, Result};

/// Default anchor coordinates: `a` at (0,0), `b` at (1,0), `c` at (0.5,1).
pub const ANCHOR_COORDS: [(f64, f64); 3] = [(0.0, 0.0), (1.0, 0.0), (0.5, 1.0)];
pub const DEFAULT_RESOLUTION: usize = 41;
pub const DEFAULT_RANGE: (f64, f64) = (-0.5, 1.5);
pub const DEFAULT_CLAMP_PCT: f64 = 0.2;

/// Which anchor loss the clamp level is measured from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ClampRef {
    /// The highest anchor loss (the shallowest of the three minima).
    #[default]
    Shallowest,
    /// The lowest anchor loss.
    Deepest,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Anchor {
    pub x: f64,
    pub y: f64,
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LandscapeGrid {
    pub anchors: [Anchor; 3],
    pub xs: Vec<f64>,
    pub ys: Vec<f64>,
    /// Raw losses, `grid[iy][ix]` at `(xs[ix], ys[iy])`.
    pub grid: Vec<Vec<f64>>,
    pub clamp_pct: f64,
    pub clamp_ref: ClampRef,
    /// Ceiling applied by [`LandscapeGrid::clamped`].
    pub clamp: f64,
}

impl LandscapeGrid {
    /// Grid with every value capped at `clamp`.
    pub fn clamped(&self) -> Vec<Vec<f64>> {
        self.grid
            .iter()
            .map(|row| row.iter().map(|v| v.min(self.clamp)).collect())
            .collect()
    }
}

/// Barycentric weights of `p` with respect to the triangle `coords`.
pub fn barycentric(coords: &[(f64, f64); 3], p: (f64, f64)) -> Result<[f64; 3]> {
    let [(xa, ya), (xb, yb), (xc, yc)] = *coords;
    let det = (yb - yc) * (xa - xc) + (xc - xb) * (ya - yc);
    let scale = [xa, ya, xb, yb, xc, yc].iter().fold(1.0f64, |m, v| m.max(v.abs()));
    if !(det.abs() > 1e-12 * scale * scale) {
        return Err(Error::Geometry);
    }
    let (x, y) = p;
    let wa = ((yb - yc) * (x - xc) + (xc - xb) * (y - yc)) / det;
    let wb = ((yc - ya) * (x - xc) + (xa - xc) * (y - yc)) / det;
    Ok([wa, wb, 1.0 - wa - wb])
}

/// `Σ wᵢ θᵢ`.
pub fn mix(params: [&[f64]; 3], w: [f64; 3]) -> Vec<f64> {
    (0..params[0].len())
        .map(|k| w[0] * params[0][k] + w[1] * params[1][k] + w[2] * params[2][k])
        .collect()
}

/// Evenly spaced points with both ends exact.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => vec![],
        1 => vec![lo],
        _ => (0..n)
            .map(|i| if i == n - 1 { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
            .collect(),
    }
}

/// Landscape over the default square `[-0.5, 1.5]²` with the default anchors.
pub fn landscape_grid<F>(
    params_a: &[f64],
    params_b: &[f64],
    params_c: &[f64],
    eval_fn: F,
    resolution: usize,
    clamp_pct: f64,
) -> Result<LandscapeGrid>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    let axis = linspace(DEFAULT_RANGE.0, DEFAULT_RANGE.1, resolution);
    landscape_grid_on(
        [params_a, params_b, params_c],
        &ANCHOR_COORDS,
        &axis,
        &axis,
        eval_fn,
        clamp_pct,
        ClampRef::Shallowest,
    )
}

/// General form: arbitrary anchor coordinates and grid axes.
/// Grid points are evaluated in parallel.
pub fn landscape_grid_on<F>(
    params: [&[f64]; 3],
    coords: &[(f64, f64); 3],
    xs: &[f64],
    ys: &[f64],
    eval_fn: F,
    clamp_pct: f64,
    clamp_ref: ClampRef,
) -> Result<LandscapeGrid>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    const OP: &str = "landscape_grid";
    let n = params[0].len();
    if params.iter().any(|p| p.len() != n) {
        return Err(dim(OP, "anchor parameter vectors differ in length"));
    }
    if xs.is_empty() || ys.is_empty() {
        return Err(dim(OP, "empty grid"));
    }
    if !(clamp_pct >= 0.0) {
        return Err(Error::Config(format!("clamp_pct must be non-negative, got {clamp_pct}")));
    }
    barycentric(coords, (0.0, 0.0))?;

    let anchor_losses: Vec<f64> = params.iter().map(|p| eval_fn(p)).collect();
    let anchors = [0, 1, 2].map(|i| Anchor {
        x: coords[i].0,
        y: coords[i].1,
        loss: anchor_losses[i],
    });
    let reference = match clamp_ref {
        ClampRef::Shallowest => anchor_losses.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        ClampRef::Deepest => anchor_losses.iter().copied().fold(f64::INFINITY, f64::min),
    };

    let grid = ys
        .par_iter()
        .map(|&y| {
            xs.iter()
                .map(|&x| barycentric(coords, (x, y)).map(|w| eval_fn(&mix(params, w))))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(LandscapeGrid {
        anchors,
        xs: xs.to_vec(),
        ys: ys.to_vec(),
        grid,
        clamp_pct,
        clamp_ref,
        clamp: (1.0 + clamp_pct) * reference,
    })
}
