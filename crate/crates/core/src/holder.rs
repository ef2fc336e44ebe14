//! Numerical Hölder exponents, box-counting dimensions, singularity spectra
//! and the slope, boundary and fold probes used on envelopes.

use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Serialize, Serializer};

use crate::envelope::{Envelope, FoldingRegion};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::geometry;
use crate::mesh::CubeFace;

/// Relative residual floor below which a point is declared CAP.
pub const NOISE_FLOOR: f64 = 1e-12;

/// Finite exponents above this land in the last finite bin.
pub const EXPONENT_CAP: f64 = 64.0;

/// Dyadic ladder `2^-lo, ..., 2^-hi`, coarse to fine.
pub fn dyadic_scales(lo: u32, hi: u32) -> Vec<f64> {
    (lo..=hi).map(|k| 0.5f64.powi(k as i32)).collect()
}

/// `2^-3..2^-12` in d=1, `2^-3..2^-8` otherwise.
pub fn default_scales(dim: usize) -> Vec<f64> {
    if dim == 1 {
        dyadic_scales(3, 12)
    } else {
        dyadic_scales(3, 8)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum CellFlag {
    Ok,
    Cap,
    Unresolved,
}

#[derive(Debug, Clone, Serialize)]
pub struct HolderEstimate {
    pub x: Vec<f64>,
    #[serde(serialize_with = "exponent_or_cap")]
    pub h_hat: Option<f64>,
    pub scales: Vec<f64>,
    /// Sup residual per scale.
    pub residuals: Vec<f64>,
    pub slope: Option<f64>,
    pub r2: Option<f64>,
    pub poly_order: u8,
}

fn exponent_or_cap<S: Serializer>(h: &Option<f64>, s: S) -> std::result::Result<S::Ok, S::Error> {
    match h {
        Some(v) => s.serialize_f64(*v),
        None => s.serialize_str("CAP"),
    }
}

impl HolderEstimate {
    pub fn is_cap(&self) -> bool {
        self.h_hat.is_none()
    }
}

/// Offsets sampling the closed ball of radius `r`: 16 evenly spaced points
/// per side in d=1, four rings of 16 directions in d=2.
fn stencil(dim: usize, r: f64) -> Vec<Vec<f64>> {
    const K: usize = 16;
    match dim {
        1 => (1..=K)
            .flat_map(|j| {
                let t = r * j as f64 / K as f64;
                [vec![-t], vec![t]]
            })
            .collect(),
        2 => {
            let mut out = Vec::with_capacity(4 * K);
            for ring in 1..=4 {
                let rho = r * ring as f64 / 4.0;
                for a in 0..K {
                    let th = std::f64::consts::TAU * (a as f64 + 0.5 * (ring % 2) as f64) / K as f64;
                    out.push(vec![rho * th.cos(), rho * th.sin()]);
                }
            }
            out
        }
        _ => {
            let mut out = Vec::new();
            for k in 0..dim {
                for j in 1..=K {
                    for s in [-1.0, 1.0] {
                        let mut v = vec![0.0; dim];
                        v[k] = s * r * j as f64 / K as f64;
                        out.push(v);
                    }
                }
            }
            out
        }
    }
}

/// Least-squares gradient of `dv ~ g . dx`.
fn affine_fit(dxs: &[Vec<f64>], dvs: &[f64], dim: usize) -> Vec<f64> {
    let mut ata = vec![0.0; dim * dim];
    let mut atb = vec![0.0; dim];
    for (dx, dv) in dxs.iter().zip(dvs) {
        for i in 0..dim {
            atb[i] += dx[i] * dv;
            for j in 0..dim {
                ata[i * dim + j] += dx[i] * dx[j];
            }
        }
    }
    match geometry::invert(&ata, dim) {
        Some(inv) => (0..dim)
            .map(|i| (0..dim).map(|j| inv[i * dim + j] * atb[j]).sum())
            .collect(),
        None => vec![0.0; dim],
    }
}

/// Ordinary least squares of `ys` on `xs`: (slope, r^2).
pub fn linear_regression(xs: &[f64], ys: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my).powi(2)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let r2 = if syy > 0.0 && sxx > 0.0 {
        (sxy * sxy / (sxx * syy)).min(1.0)
    } else {
        1.0
    };
    (slope, r2)
}

/// Regresses `log sup_{|x'-x|<=r} |f(x') - P(x'-x)|` on `log r`.
///
/// `poly_order` 0 takes `P = f(x)`; 1 adds the least-squares gradient over
/// the ball at each scale. Stencil points outside the cube are dropped. The
/// point is CAP when the residual at the finest scale is below
/// `NOISE_FLOOR * max(1, |f(x)|)`; otherwise only scales with residual above
/// that floor enter the regression.
pub fn pointwise_holder(
    f: &impl Field,
    x: &[f64],
    scales: &[f64],
    poly_order: u8,
) -> Result<HolderEstimate> {
    let dim = f.dim();
    if x.len() != dim || !geometry::in_unit_cube(x, 0.0) {
        return Err(Error::domain(x));
    }
    if poly_order > 1 {
        return Err(Error::Input(format!("poly_order {poly_order} not in {{0, 1}}")));
    }
    if scales.len() < 4 {
        return Err(Error::Estimate(format!("{} scales given, need 4", scales.len())));
    }
    let fx = f.value(x);
    let floor = NOISE_FLOOR * fx.abs().max(1.0);
    let mut residuals = Vec::with_capacity(scales.len());
    let mut xp = vec![0.0; dim];
    for &r in scales {
        let mut dxs = Vec::new();
        let mut dvs = Vec::new();
        for off in stencil(dim, r) {
            for k in 0..dim {
                xp[k] = x[k] + off[k];
            }
            if geometry::in_unit_cube(&xp, 0.0) {
                dvs.push(f.value(&xp) - fx);
                dxs.push(off);
            }
        }
        if dxs.is_empty() {
            return Err(Error::Estimate(format!("no stencil point inside the cube at r = {r}")));
        }
        let g = if poly_order == 1 {
            affine_fit(&dxs, &dvs, dim)
        } else {
            vec![0.0; dim]
        };
        let res = dxs
            .iter()
            .zip(&dvs)
            .map(|(dx, dv)| (dv - geometry::dot(&g, dx)).abs())
            .fold(0.0, f64::max);
        residuals.push(res);
    }
    let finest = scales
        .iter()
        .zip(&residuals)
        .min_by(|a, b| a.0.total_cmp(b.0))
        .map(|(_, &res)| res)
        .unwrap_or(0.0);
    let mut est = HolderEstimate {
        x: x.to_vec(),
        h_hat: None,
        scales: scales.to_vec(),
        residuals: residuals.clone(),
        slope: None,
        r2: None,
        poly_order,
    };
    if finest < floor {
        return Ok(est);
    }
    let (lx, ly): (Vec<f64>, Vec<f64>) = scales
        .iter()
        .zip(&residuals)
        .filter(|(_, &res)| res >= floor)
        .map(|(r, res)| (r.ln(), res.ln()))
        .unzip();
    if lx.len() < 4 {
        return Err(Error::Estimate(format!(
            "only {} scales above the noise floor",
            lx.len()
        )));
    }
    let (slope, r2) = linear_regression(&lx, &ly);
    est.slope = Some(slope);
    est.r2 = Some(r2);
    est.h_hat = Some(slope.max(0.0));
    Ok(est)
}

/// Nodes `i / intervals` of a uniform grid on the cube.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct HolderGrid {
    pub dim: usize,
    pub intervals: usize,
}

impl HolderGrid {
    pub fn new(dim: usize, intervals: usize) -> Result<Self> {
        if dim == 0 || intervals == 0 {
            return Err(Error::Input("grid needs positive dimension and intervals".into()));
        }
        Ok(HolderGrid { dim, intervals })
    }

    pub fn points(&self) -> Vec<Vec<f64>> {
        crate::envelope::grid_points(self.dim, self.intervals + 1)
    }

    pub fn spacing(&self) -> f64 {
        1.0 / self.intervals as f64
    }

    /// Dyadic box scales from `2^-3` down to the grid spacing.
    pub fn box_scales(&self) -> Vec<f64> {
        let finest = (self.intervals as f64).log2().floor().max(6.0) as u32;
        dyadic_scales(3, finest)
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct HolderCell {
    pub x: Vec<f64>,
    pub h_hat: Option<f64>,
    pub r2: Option<f64>,
    pub flag: CellFlag,
}

/// `pointwise_holder` at every grid node, in grid order.
pub fn holder_field(
    f: &impl Field,
    grid: &HolderGrid,
    scales: &[f64],
    poly_order: u8,
) -> Vec<HolderCell> {
    grid.points()
        .into_par_iter()
        .map(|x| match pointwise_holder(f, &x, scales, poly_order) {
            Ok(est) => HolderCell {
                flag: if est.is_cap() { CellFlag::Cap } else { CellFlag::Ok },
                h_hat: est.h_hat,
                r2: est.r2,
                x,
            },
            Err(_) => HolderCell {
                x,
                h_hat: None,
                r2: None,
                flag: CellFlag::Unresolved,
            },
        })
        .collect()
}

/// Cells with a finite exponent at most `h`.
pub fn cells_with_exponent_at_most(cells: &[HolderCell], h: f64) -> Vec<&HolderCell> {
    cells
        .iter()
        .filter(|c| c.flag == CellFlag::Ok && c.h_hat.is_some_and(|v| v <= h))
        .collect()
}

/// Cells with a finite exponent strictly below `h`.
pub fn cells_with_exponent_below(cells: &[HolderCell], h: f64) -> Vec<&HolderCell> {
    cells
        .iter()
        .filter(|c| c.flag == CellFlag::Ok && c.h_hat.is_some_and(|v| v < h))
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct DimensionEstimate {
    /// `None` for the empty set.
    pub value: Option<f64>,
    pub empty: bool,
    pub scales: Vec<f64>,
    pub counts: Vec<usize>,
    pub r2: Option<f64>,
}

/// Regression of `log N(eps)` on `log(1/eps)`, where `N` counts occupied
/// boxes of the `eps`-grid on the cube.
pub fn box_dimension(points: &[Vec<f64>], scales: &[f64]) -> Result<DimensionEstimate> {
    if scales.len() < 4 {
        return Err(Error::Estimate(format!("{} scales given, need 4", scales.len())));
    }
    let counts: Vec<usize> = scales.iter().map(|&eps| occupied_boxes(points, eps)).collect();
    if points.is_empty() {
        return Ok(DimensionEstimate {
            value: None,
            empty: true,
            scales: scales.to_vec(),
            counts,
            r2: None,
        });
    }
    let lx: Vec<f64> = scales.iter().map(|e| -e.ln()).collect();
    let ly: Vec<f64> = counts.iter().map(|&c| (c as f64).ln()).collect();
    let (slope, r2) = linear_regression(&lx, &ly);
    Ok(DimensionEstimate {
        value: Some(slope.max(0.0)),
        empty: false,
        scales: scales.to_vec(),
        counts,
        r2: Some(r2),
    })
}

pub fn occupied_boxes(points: &[Vec<f64>], eps: f64) -> usize {
    let per_axis = (1.0 / eps).round().max(1.0) as i64;
    let boxes: HashSet<Vec<i64>> = points
        .iter()
        .map(|p| {
            p.iter()
                .map(|&c| ((c / eps).floor() as i64).clamp(0, per_axis - 1))
                .collect()
        })
        .collect();
    boxes.len()
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumBin {
    pub label: String,
    pub lo: Option<f64>,
    pub hi: Option<f64>,
    pub count: usize,
    pub dimension: DimensionEstimate,
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumEstimate {
    pub grid: HolderGrid,
    pub cell_count: usize,
    pub bins: Vec<SpectrumBin>,
}

impl SpectrumEstimate {
    pub fn bin(&self, label: &str) -> Option<&SpectrumBin> {
        self.bins.iter().find(|b| b.label == label)
    }

    /// The finite bin containing exponent 1.
    pub fn lipschitz_bin(&self) -> Option<&SpectrumBin> {
        self.bins
            .iter()
            .find(|b| matches!((b.lo, b.hi), (Some(lo), Some(hi)) if lo <= 1.0 && 1.0 <= hi))
    }

    pub fn cap_fraction(&self) -> f64 {
        self.bin("CAP").map_or(0.0, |b| b.count as f64) / self.cell_count as f64
    }
}

/// Label, bounds and member cell indices of one spectrum bin.
pub type BinMembers = (String, Option<f64>, Option<f64>, Vec<usize>);

/// Edges `0, 0.2, 0.8, 1.2, EXPONENT_CAP`; the bin `[0.8, 1.2]` is closed.
pub fn default_bin_edges() -> Vec<f64> {
    vec![0.0, 0.2, 0.8, 1.2, EXPONENT_CAP]
}

/// Bins finite exponents by `edges` (each bin `[lo, hi)`, except that the
/// bin containing 1 is closed on the right and the last bin absorbs
/// everything above), plus a CAP bin and a bin for unresolved cells.
pub fn bin_cells(cells: &[HolderCell], edges: &[f64]) -> Result<Vec<BinMembers>> {
    if edges.len() < 2 || edges.windows(2).any(|w| !(w[0] < w[1])) || edges[0] != 0.0 {
        return Err(Error::Input("bin edges must increase from 0".into()));
    }
    let nb = edges.len() - 1;
    let mut members = vec![Vec::new(); nb + 2];
    for (i, c) in cells.iter().enumerate() {
        let slot = match (c.flag, c.h_hat) {
            (CellFlag::Cap, _) => nb,
            (CellFlag::Ok, Some(h)) => (0..nb)
                .find(|&b| {
                    let (lo, hi) = (edges[b], edges[b + 1]);
                    h < hi || (h == hi && lo <= 1.0 && 1.0 <= hi)
                })
                .unwrap_or(nb - 1),
            _ => nb + 1,
        };
        members[slot].push(i);
    }
    let mut out = Vec::with_capacity(nb + 2);
    for (b, m) in members.into_iter().enumerate() {
        let (label, lo, hi) = if b < nb {
            (format!("[{}, {}]", edges[b], edges[b + 1]), Some(edges[b]), Some(edges[b + 1]))
        } else if b == nb {
            ("CAP".to_string(), None, None)
        } else {
            ("UNRESOLVED".to_string(), None, None)
        };
        out.push((label, lo, hi, m));
    }
    Ok(out)
}

/// `holder_field` followed by `box_dimension` of each exponent bin.
pub fn spectrum(
    f: &impl Field,
    grid: &HolderGrid,
    scales: &[f64],
    poly_order: u8,
    edges: &[f64],
) -> Result<(SpectrumEstimate, Vec<HolderCell>)> {
    let cells = holder_field(f, grid, scales, poly_order);
    let box_scales = grid.box_scales();
    let mut bins = Vec::new();
    for (label, lo, hi, idx) in bin_cells(&cells, edges)? {
        let pts: Vec<Vec<f64>> = idx.iter().map(|&i| cells[i].x.clone()).collect();
        bins.push(SpectrumBin {
            label,
            lo,
            hi,
            count: idx.len(),
            dimension: box_dimension(&pts, &box_scales)?,
        });
    }
    Ok((
        SpectrumEstimate {
            grid: *grid,
            cell_count: cells.len(),
            bins,
        },
        cells,
    ))
}

/// Largest backward-minus-forward difference quotient along `e_j`.
pub fn slope_gap_check(e: &impl Field, j: usize, probes: &[Vec<f64>], h: f64) -> Result<f64> {
    let dim = e.dim();
    if j >= dim || !(h > 0.0) {
        return Err(Error::Input(format!("direction {j} or step {h} invalid")));
    }
    let mut gap = f64::NEG_INFINITY;
    for x in probes {
        if x.len() != dim || x.iter().any(|&c| c <= h || c >= 1.0 - h) {
            return Err(Error::domain(x));
        }
        let mut lo = x.clone();
        lo[j] -= h;
        let mut hi = x.clone();
        hi[j] += h;
        let fx = e.value(x);
        let back = (fx - e.value(&lo)) / h;
        let fwd = (e.value(&hi) - fx) / h;
        gap = gap.max(back - fwd);
    }
    Ok(if probes.is_empty() { 0.0 } else { gap })
}

#[derive(Debug, Clone, Serialize)]
pub struct BoundaryProbe {
    pub steps: Vec<f64>,
    pub quotients: Vec<f64>,
    /// Fitted exponent of `|quotient|` against the step.
    pub exponent: f64,
    pub r2: f64,
    pub strictly_increasing: bool,
    pub blow_up: bool,
}

/// Inward one-sided difference quotients at `x0` on `face` over steps
/// `2^-k_lo..2^-k_hi`. Blow-up means the quotients increase strictly as the
/// step shrinks and grow by at least `growth` over the ladder.
pub fn boundary_derivative_probe(
    f: &impl Field,
    face: CubeFace,
    x0: &[f64],
    k_lo: u32,
    k_hi: u32,
    growth: f64,
) -> Result<BoundaryProbe> {
    if !face.contains(x0, 0.0) || !geometry::in_unit_cube(x0, 0.0) {
        return Err(Error::domain(x0));
    }
    if k_hi < k_lo + 3 {
        return Err(Error::Estimate("boundary probe needs at least 4 steps".into()));
    }
    let steps = dyadic_scales(k_lo, k_hi);
    if steps[0] > 1.0 {
        return Err(Error::domain(x0));
    }
    let f0 = f.value(x0);
    let quotients: Vec<f64> = steps
        .iter()
        .map(|&t| {
            let mut x = x0.to_vec();
            x[face.axis] += face.inward_sign() * t;
            (f.value(&x) - f0) / t
        })
        .collect();
    let strictly_increasing = quotients.windows(2).all(|w| w[1] > w[0]);
    let lx: Vec<f64> = steps.iter().map(|t| t.ln()).collect();
    let ly: Vec<f64> = quotients.iter().map(|q| q.abs().max(f64::MIN_POSITIVE).ln()).collect();
    let (exponent, r2) = linear_regression(&lx, &ly);
    let blow_up = strictly_increasing && quotients[quotients.len() - 1] - quotients[0] >= growth;
    Ok(BoundaryProbe {
        steps,
        quotients,
        exponent,
        r2,
        strictly_increasing,
        blow_up,
    })
}

/// Checks that every sampled supporting hyperplane at the fold point `x`
/// separates from the envelope by at least `|x - x'|^{1+1/m}` at some probe
/// `x'`. Supporting gradients are sampled along the segment between the
/// two facet gradients; probes run along the gradient jump and the axes at
/// distances `2^-1..2^-50`. Inside the two fold facets the separation is
/// computed as `(g - g_k) . (x' - x)`, which is exact up to relative
/// rounding however small the jump.
pub fn fold_exponent_check(e: &Envelope, folds: &FoldingRegion, x: &[f64], m: u32) -> Result<bool> {
    let face = folds
        .face_containing(x, 1e-9)
        .map(|i| &folds.faces[i])
        .ok_or_else(|| Error::domain(x))?;
    let dim = e.dim();
    let [fa, fb] = face.facets;
    let ga = &e.facets()[fa].gradient;
    let gb = &e.facets()[fb].gradient;
    let jump: Vec<f64> = ga.iter().zip(gb).map(|(a, b)| a - b).collect();
    let jn = geometry::norm(&jump);
    let mut dirs: Vec<Vec<f64>> = Vec::new();
    for s in [1.0, -1.0] {
        dirs.push(jump.iter().map(|c| s * c / jn).collect());
        for k in 0..dim {
            let mut v = vec![0.0; dim];
            v[k] = s;
            dirs.push(v);
        }
    }
    let phi = e.eval(x)?;
    let roundoff = 64.0 * f64::EPSILON * phi.abs().max(1.0);
    let power = 1.0 + 1.0 / f64::from(m);
    // (offset of the located facet's plane below phi at x, its gradient, x' - x)
    let mut probes: Vec<(f64, usize, Vec<f64>)> = Vec::new();
    for d in &dirs {
        for k in 1..=50 {
            let t = 0.5f64.powi(k);
            let xp: Vec<f64> = x.iter().zip(d).map(|(a, b)| a + t * b).collect();
            if !geometry::in_unit_cube(&xp, 0.0) {
                continue;
            }
            let dx: Vec<f64> = xp.iter().zip(x).map(|(a, b)| a - b).collect();
            if geometry::norm(&dx) == 0.0 {
                continue;
            }
            let f = e.locate(&xp)?;
            let base = if f == fa || f == fb {
                0.0
            } else {
                let facet = &e.facets()[f];
                phi - geometry::dot(&facet.gradient, x) - facet.offset
            };
            probes.push((base, f, dx));
        }
    }
    for step in 0..=10 {
        let lambda = step as f64 / 10.0;
        let g: Vec<f64> = ga.iter().zip(gb).map(|(a, b)| (1.0 - lambda) * a + lambda * b).collect();
        let witnessed = probes.iter().any(|(base, f, dx)| {
            let gk = &e.facets()[*f].gradient;
            let slope: f64 = g.iter().zip(gk).zip(dx).map(|((a, b), c)| (a - b) * c).sum();
            let dev = (base + slope).abs();
            let floor = if *f == fa || *f == fb { 0.0 } else { roundoff };
            dev >= geometry::norm(dx).powf(power).max(floor)
        });
        if !witnessed {
            return Ok(false);
        }
    }
    Ok(true)
}

/// Points at which fold checks are run: fold vertices in d=1, and for d=2
/// `per_face` points strictly inside each fold segment.
pub fn fold_probe_points(folds: &FoldingRegion, per_face: usize) -> Vec<Vec<f64>> {
    if folds.dim == 1 {
        return folds.faces.iter().map(|f| f.points[0].clone()).collect();
    }
    let mut out = Vec::new();
    for f in &folds.faces {
        let (a, b) = (&f.points[0], &f.points[1]);
        for k in 1..=per_face {
            let t = k as f64 / (per_face + 1) as f64;
            out.push(a.iter().zip(b).map(|(p, q)| p + t * (q - p)).collect());
        }
    }
    out
}
