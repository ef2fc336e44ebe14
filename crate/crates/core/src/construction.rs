//! Finite stages of the generic-function construction.
//!
//! A stage `(n, m)` starts from the n-th smooth base function, snaps it to
//! a fine simplicial mesh, perturbs the vertex values into general
//! position, and adds narrow unit peaks at every vertex. The upper envelope
//! of the result touches it only at mesh vertices and folds along the
//! edges of its own facet complex. Two auxiliary families live here too:
//! the boundary blow-up family `f_n + dist(x, F)^{1/m} / (n+m)` and the
//! smooth-perturbation family used for the C^1 slope-gap bound.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::envelope::{
    compute_envelope, contact_set, folding_region, grid_points, BallCover, ContactSet, Envelope,
    FoldingRegion, SampledFunction, Side, StageTag, DEFAULT_TOL_CONTACT,
};
use crate::error::{Error, Result};
use crate::field::Field;
use crate::geometry;
use crate::mesh::{
    self, build_uniform_partition_capped, CubeFace, PLFunction, PerturbConfig, SimplicialPartition,
};

/// Largest mesh size ever used, also the mesh for constant base functions.
pub const DEFAULT_MAX_MESH: f64 = 0.5;

/// Gradient gaps below this are treated as coplanar facets, not folds.
pub const DEFAULT_JUMP_THRESHOLD: f64 = 1e-8;

/// Deterministic seed stream derived from a user seed.
pub fn sub_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
enum Trig {
    Sin,
    Cos,
}

#[derive(Debug, Clone, Serialize)]
struct TrigTerm {
    coeff: f64,
    freq: Vec<u32>,
    kind: Trig,
}

/// Member `n` of a fixed enumeration of trigonometric polynomials on
/// [0,1]^d, together with closed-form derivative bounds.
///
/// Frequency vectors `k != 0` are ordered by `|k|_1` and then
/// lexicographically (largest first coordinate first). Each frequency
/// contributes four atoms `-sin, -cos, +sin, +cos` of `pi k.x`, scaled by
/// `1 / (pi |k|)^2` so every atom has second derivatives bounded by one.
/// Member `n` is the sum of the atoms selected by the set bits of `n - 1`;
/// member 1 is the zero function.
#[derive(Debug, Clone, Serialize)]
pub struct BaseFunction {
    n: u32,
    dim: usize,
    terms: Vec<TrigTerm>,
    gradient_bound: f64,
    second_derivative_bound: f64,
}

impl BaseFunction {
    pub fn new(n: u32, dim: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::Input("base family is indexed from 1".into()));
        }
        if dim == 0 {
            return Err(Error::Input("dimension must be positive".into()));
        }
        let bits = n - 1;
        let atoms_needed = 32 - bits.leading_zeros() as usize;
        let freqs = frequency_vectors(dim, atoms_needed.div_ceil(4));
        let mut terms = Vec::new();
        for b in 0..atoms_needed {
            if bits >> b & 1 == 0 {
                continue;
            }
            let k = &freqs[b / 4];
            let k2: f64 = k.iter().map(|&c| f64::from(c * c)).sum();
            let sign = if b % 4 < 2 { -1.0 } else { 1.0 };
            terms.push(TrigTerm {
                coeff: sign / (PI * PI * k2),
                freq: k.clone(),
                kind: if b % 2 == 0 { Trig::Sin } else { Trig::Cos },
            });
        }
        let gradient_bound = terms
            .iter()
            .map(|t| {
                let kn = t.freq.iter().map(|&c| f64::from(c * c)).sum::<f64>().sqrt();
                t.coeff.abs() * PI * kn
            })
            .sum();
        let second_derivative_bound = (0..dim)
            .map(|j| {
                terms
                    .iter()
                    .map(|t| t.coeff.abs() * (PI * f64::from(t.freq[j])).powi(2))
                    .sum::<f64>()
            })
            .fold(0.0, f64::max);
        Ok(BaseFunction {
            n,
            dim,
            terms,
            gradient_bound,
            second_derivative_bound,
        })
    }

    pub fn index(&self) -> u32 {
        self.n
    }

    /// Upper bound for both `sup |grad f_n|` and every `sup |d_j^2 f_n|`.
    pub fn bound(&self) -> f64 {
        self.gradient_bound.max(self.second_derivative_bound)
    }

    pub fn gradient_bound(&self) -> f64 {
        self.gradient_bound
    }

    pub fn second_derivative_bound(&self) -> f64 {
        self.second_derivative_bound
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    fn phase(t: &TrigTerm, x: &[f64]) -> f64 {
        PI * t.freq.iter().zip(x).map(|(&k, &c)| f64::from(k) * c).sum::<f64>()
    }

    pub fn gradient(&self, x: &[f64]) -> Vec<f64> {
        let mut g = vec![0.0; self.dim];
        for t in &self.terms {
            let p = Self::phase(t, x);
            let dp = match t.kind {
                Trig::Sin => p.cos(),
                Trig::Cos => -p.sin(),
            };
            for (gj, &k) in g.iter_mut().zip(&t.freq) {
                *gj += t.coeff * dp * PI * f64::from(k);
            }
        }
        g
    }

    pub fn second_derivative(&self, x: &[f64], j: usize) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let p = Self::phase(t, x);
                let v = match t.kind {
                    Trig::Sin => p.sin(),
                    Trig::Cos => p.cos(),
                };
                -t.coeff * v * (PI * f64::from(t.freq[j])).powi(2)
            })
            .sum()
    }
}

impl Field for BaseFunction {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let p = Self::phase(t, x);
                t.coeff
                    * match t.kind {
                        Trig::Sin => p.sin(),
                        Trig::Cos => p.cos(),
                    }
            })
            .sum()
    }
}

fn frequency_vectors(dim: usize, count: usize) -> Vec<Vec<u32>> {
    let mut out = Vec::with_capacity(count);
    let mut total = 1;
    while out.len() < count {
        let mut level = Vec::new();
        compositions(dim, total, &mut Vec::new(), &mut level);
        out.extend(level);
        total += 1;
    }
    out.truncate(count);
    out
}

/// Non-negative integer vectors of length `dim` summing to `total`, largest
/// leading coordinate first.
fn compositions(dim: usize, total: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
    if prefix.len() + 1 == dim {
        prefix.push(total);
        out.push(prefix.clone());
        prefix.pop();
        return;
    }
    for first in (0..=total).rev() {
        prefix.push(first);
        compositions(dim, total - first, prefix, out);
        prefix.pop();
    }
}

pub fn base_function(n: u32, dim: usize) -> Result<BaseFunction> {
    BaseFunction::new(n, dim)
}

/// Mesh size guaranteeing `|f_n(x) - f_n(y)| < 1/(16(n+m))` whenever
/// `|x - y| < eta`, from the gradient bound. Constant members get
/// `max_mesh`.
pub fn modulus_mesh(base: &BaseFunction, m: u32, max_mesh: f64) -> f64 {
    if base.bound() == 0.0 {
        return max_mesh;
    }
    let nm = f64::from(base.index() + m);
    let d = base.dim() as f64;
    (1.0 / (16.0 * nm * base.bound().max(1.0) * d.sqrt())).min(max_mesh)
}

/// `max(1 - |u|, 0)`.
pub fn peak_kernel(u: &[f64]) -> f64 {
    (1.0 - geometry::norm(u)).max(0.0)
}

/// `sum_v kappa((x - v) / gamma)` on the cube, zero outside it.
pub fn peak_field_value(vertices: &[Vec<f64>], gamma: f64, x: &[f64]) -> f64 {
    if !geometry::in_unit_cube(x, 0.0) {
        return 0.0;
    }
    vertices
        .iter()
        .map(|v| {
            let u: Vec<f64> = x.iter().zip(v).map(|(a, b)| (a - b) / gamma).collect();
            peak_kernel(&u)
        })
        .sum()
}

/// Peak field with a bucket index for fast repeated evaluation.
#[derive(Debug, Clone)]
pub struct PeakField {
    dim: usize,
    vertices: Vec<Vec<f64>>,
    gamma: f64,
    res: usize,
    buckets: Vec<Vec<u32>>,
}

impl PeakField {
    pub fn new(vertices: Vec<Vec<f64>>, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0) {
            return Err(Error::Input(format!("peak width {gamma} must be positive")));
        }
        let dim = vertices.first().map_or(1, Vec::len);
        let by_count = (vertices.len().max(1) as f64).powf(1.0 / dim as f64).ceil() as usize;
        // Buckets no smaller than gamma, so the 3^d neighbourhood suffices.
        let res = by_count.min((1.0 / gamma).floor().max(1.0) as usize).clamp(1, 4096);
        let mut buckets = vec![Vec::new(); res.pow(dim as u32)];
        for (i, v) in vertices.iter().enumerate() {
            buckets[flat_bucket(v, res)].push(i as u32);
        }
        Ok(PeakField {
            dim,
            vertices,
            gamma,
            res,
            buckets,
        })
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn vertices(&self) -> &[Vec<f64>] {
        &self.vertices
    }
}

fn bucket_coord(c: f64, res: usize) -> usize {
    ((c * res as f64).floor().max(0.0) as usize).min(res - 1)
}

fn flat_bucket(x: &[f64], res: usize) -> usize {
    x.iter().rev().fold(0, |acc, &c| acc * res + bucket_coord(c, res))
}

impl Field for PeakField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        if !geometry::in_unit_cube(x, 0.0) {
            return 0.0;
        }
        let centre: Vec<isize> = x.iter().map(|&c| bucket_coord(c, self.res) as isize).collect();
        let mut total = 0.0;
        let mut offset = vec![-1isize; self.dim];
        loop {
            let mut flat = 0usize;
            let mut valid = true;
            for k in (0..self.dim).rev() {
                let c = centre[k] + offset[k];
                if c < 0 || c >= self.res as isize {
                    valid = false;
                    break;
                }
                flat = flat * self.res + c as usize;
            }
            if valid {
                for &i in &self.buckets[flat] {
                    let v = &self.vertices[i as usize];
                    let r = geometry::dist(x, v) / self.gamma;
                    if r < 1.0 {
                        total += 1.0 - r;
                    }
                }
            }
            let mut k = 0;
            while k < self.dim {
                if offset[k] < 1 {
                    offset[k] += 1;
                    break;
                }
                offset[k] = -1;
                k += 1;
            }
            if k == self.dim {
                break;
            }
        }
        total
    }
}

/// Stage parameters with their admissibility predicates.
#[derive(Debug, Clone, Serialize)]
pub struct ConstructionParams {
    pub n: u32,
    pub m: u32,
    /// Mesh modulus.
    pub eta: f64,
    /// Minimum vertex gap of the mesh.
    pub nu: f64,
    /// Peak width.
    pub gamma: f64,
    /// Perturbation radius around the stage function.
    pub delta: f64,
    /// Contact covering radius.
    pub r: f64,
    /// Fold-separation scale of the upper envelope.
    pub tau: f64,
    /// Base-function bound.
    pub m_n: f64,
    /// Gradient bound of the snapped piecewise-linear function.
    pub g: f64,
    pub vertex_count: usize,
}

impl ConstructionParams {
    /// Named predicates, all of which must hold.
    pub fn constraint_report(&self) -> Vec<(&'static str, bool)> {
        let m = f64::from(self.m);
        vec![
            ("gamma_below_nu_over_100", self.gamma < self.nu / 100.0),
            ("inverse_gamma_above_100_g", 1.0 / self.gamma > 100.0 * self.g),
            ("r_below_nu_over_1000", self.r < self.nu / 1000.0),
            ("r_below_tau_over_100", self.r < self.tau / 100.0),
            (
                "vertex_count_times_r_pow_inv_m_below_inv_m",
                self.vertex_count as f64 * self.r.powf(1.0 / m) < 1.0 / m,
            ),
            (
                "delta_below_fold_margin",
                self.delta > 0.0 && self.delta < self.tau.powf(1.0 + 1.0 / m) / 100.0,
            ),
        ]
    }

    pub fn all_satisfied(&self) -> bool {
        self.constraint_report().iter().all(|(_, ok)| *ok)
    }

    pub fn first_violation(&self) -> Option<&'static str> {
        self.constraint_report()
            .into_iter()
            .find(|(_, ok)| !ok)
            .map(|(name, _)| name)
    }
}

#[derive(Debug, Clone)]
pub struct StageConfig {
    pub dim: usize,
    pub n: u32,
    pub m: u32,
    pub seed: u64,
    pub max_mesh: f64,
    pub vertex_cap: usize,
    pub sample_cap: usize,
    pub tol_geom: f64,
    pub jump_threshold: f64,
}

impl StageConfig {
    pub fn new(dim: usize, n: u32, m: u32, seed: u64) -> Self {
        StageConfig {
            dim,
            n,
            m,
            seed,
            max_mesh: DEFAULT_MAX_MESH,
            vertex_cap: 200_000,
            sample_cap: 2_000_000,
            tol_geom: mesh::DEFAULT_TOL_GEOM,
            jump_threshold: DEFAULT_JUMP_THRESHOLD,
        }
    }
}

/// A synthesized stage `f_{n,m} = f_{n,V} + Gamma_{V,gamma} / (4(n+m))` with
/// its upper envelope and derived quantities.
#[derive(Debug, Clone)]
pub struct Stage {
    pub config: StageConfig,
    pub base: BaseFunction,
    /// Independent piecewise-linear snap of the base function.
    pub snapped: PLFunction,
    pub peaks: PeakField,
    /// Peak height `1/(4(n+m))`.
    pub amplitude: f64,
    pub params: ConstructionParams,
    pub samples: SampledFunction,
    pub envelope: Envelope,
    pub contact: ContactSet,
    pub folding: FoldingRegion,
    pub cover: BallCover,
}

impl Field for Stage {
    fn dim(&self) -> usize {
        self.config.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        self.snapped.value(x) + self.amplitude * self.peaks.value(x)
    }
}

impl Stage {
    pub fn vertices(&self) -> &[Vec<f64>] {
        self.snapped.partition().vertices()
    }

    /// Distance from `x` to the nearest mesh vertex.
    pub fn distance_to_vertices(&self, x: &[f64]) -> f64 {
        self.vertices()
            .iter()
            .map(|v| geometry::dist(x, v))
            .fold(f64::INFINITY, f64::min)
    }
}

pub fn build_f_nm(n: u32, m: u32, dim: usize, seed: u64) -> Result<Stage> {
    build_stage(&StageConfig::new(dim, n, m, seed))
}

pub fn build_stage(cfg: &StageConfig) -> Result<Stage> {
    let (n, m, d) = (cfg.n, cfg.m, cfg.dim);
    if n == 0 || m == 0 {
        return Err(Error::Input("stage indices start at 1".into()));
    }
    if !(1..=2).contains(&d) {
        return Err(Error::Unsupported(d));
    }
    let nm = f64::from(n + m);
    let base = BaseFunction::new(n, d)?;
    let eta = modulus_mesh(&base, m, cfg.max_mesh);

    // Interior jitter below grows simplex diameters by at most 10%.
    let grid = build_uniform_partition_capped(d, eta / 1.2, cfg.vertex_cap)?;
    let cells = (grid.vertex_count() as f64).powf(1.0 / d as f64).round() as usize - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(cfg.seed, 1));
    let partition = if d >= 2 {
        let amp = 0.05 * grid.min_vertex_gap() / (d as f64).sqrt();
        grid.jitter_interior_vertices(amp, &mut rng)?
    } else {
        grid
    };
    let tilde = PLFunction::interpolate(Arc::new(partition), |x| base.value(x));
    let perturb = PerturbConfig {
        tol_geom: cfg.tol_geom,
        ..PerturbConfig::default()
    };
    let snapped =
        mesh::perturb_to_independent_with(&tilde, 1.0 / (16.0 * nm), sub_seed(cfg.seed, 2), &perturb)?;
    let partition: &SimplicialPartition = snapped.partition();
    let nu = partition.min_vertex_gap();
    let g = snapped.gradient_bound();
    let gamma = 0.5 * (nu / 100.0).min(if g > 0.0 { 1.0 / (100.0 * g) } else { f64::INFINITY });
    let amplitude = 1.0 / (4.0 * nm);
    let peaks = PeakField::new(partition.vertices().to_vec(), gamma)?;

    let points = stage_sample_points(partition, cells, gamma);
    if points.len() > cfg.sample_cap {
        return Err(Error::Resource {
            what: "stage samples",
            requested: points.len(),
            cap: cfg.sample_cap,
        });
    }
    let values: Vec<f64> = points
        .iter()
        .map(|p| snapped.value(p) + amplitude * peaks.value(p))
        .collect();
    let samples = SampledFunction::new(points, values)?.with_tag(StageTag { n, m });
    let envelope = compute_envelope(&samples, Side::Upper)?;
    let contact = contact_set(&samples, &envelope, DEFAULT_TOL_CONTACT);
    let folds = folding_region(&envelope, cfg.jump_threshold, 0.0);
    // Without folds the fold-separation constraint is vacuous.
    let tau = match tau_estimate_with(&envelope, &folds, m, 1.0 / nm) {
        Err(Error::Undefined(_)) => min_inradius(&envelope).min(1.0 / nm),
        other => other?,
    };

    let mf = f64::from(m);
    let summable = (1.0 / (mf * partition.vertex_count() as f64)).powf(mf);
    let r = 0.5 * (nu / 1000.0).min(tau / 100.0).min(summable);
    let delta = 0.5
        * (tau.powf(1.0 + 1.0 / mf) / 100.0)
            .min(amplitude / 2.0)
            .min(r * amplitude / (2.0 * gamma));
    let folding = FoldingRegion { radius: r, ..folds };
    let cover = folding.ball_cover(1.0 / nm, m)?;

    let params = ConstructionParams {
        n,
        m,
        eta,
        nu,
        gamma,
        delta,
        r,
        tau,
        m_n: base.bound(),
        g,
        vertex_count: partition.vertex_count(),
    };
    if let Some(predicate) = params.first_violation() {
        return Err(Error::Stage { n, m, predicate });
    }
    Ok(Stage {
        config: cfg.clone(),
        base,
        snapped,
        peaks,
        amplitude,
        params,
        samples,
        envelope,
        contact,
        folding,
        cover,
    })
}

/// Mesh vertices, points at half the peak width from each vertex along the
/// axes, and the centres of the underlying grid cells.
fn stage_sample_points(p: &SimplicialPartition, cells: usize, gamma: f64) -> Vec<Vec<f64>> {
    let d = p.dim();
    let mut seen: HashSet<Vec<u64>> = HashSet::new();
    let mut out = Vec::new();
    let mut push = |x: Vec<f64>, out: &mut Vec<Vec<f64>>| {
        if seen.insert(x.iter().map(|c| c.to_bits()).collect()) {
            out.push(x);
        }
    };
    for v in p.vertices() {
        push(v.clone(), &mut out);
    }
    for v in p.vertices() {
        for k in 0..d {
            for s in [-0.5, 0.5] {
                let mut x = v.clone();
                x[k] += s * gamma;
                if (0.0..=1.0).contains(&x[k]) {
                    push(x, &mut out);
                }
            }
        }
    }
    for c in grid_points(d, cells + 1) {
        if c.iter().all(|&t| t < 1.0) {
            let centre = c.iter().map(|t| t + 0.5 / cells as f64).collect();
            push(centre, &mut out);
        }
    }
    out
}

/// Fold-separation scale of an envelope: the smallest of `(g/2)^m` for the
/// minimum gradient gap `g` across folds, the smallest facet inradius, and
/// `reach`. At distance `t <= (g/2)^m` from a fold, any supporting
/// hyperplane misses the envelope by at least `g t / 2 >= t^{1+1/m}`.
pub fn tau_estimate(e: &Envelope, m: u32, reach: f64) -> Result<f64> {
    let folds = folding_region(e, DEFAULT_JUMP_THRESHOLD, 0.0);
    tau_estimate_with(e, &folds, m, reach)
}

fn tau_estimate_with(e: &Envelope, folds: &FoldingRegion, m: u32, reach: f64) -> Result<f64> {
    let gap = folds
        .min_gap()
        .ok_or_else(|| Error::Undefined("envelope has no folding face".into()))?;
    Ok((0.5 * gap).powi(m as i32).min(min_inradius(e)).min(reach))
}

fn min_inradius(e: &Envelope) -> f64 {
    e.facets()
        .iter()
        .map(|f| {
            let verts: Vec<&[f64]> = f.vertices.iter().map(|&i| e.point(i)).collect();
            simplex_inradius(&verts)
        })
        .fold(f64::INFINITY, f64::min)
}

fn simplex_inradius(verts: &[&[f64]]) -> f64 {
    match verts.len() {
        2 => 0.5 * geometry::dist(verts[0], verts[1]),
        3 => {
            let a = geometry::dist(verts[0], verts[1]);
            let b = geometry::dist(verts[1], verts[2]);
            let c = geometry::dist(verts[2], verts[0]);
            let area = 0.5
                * ((verts[1][0] - verts[0][0]) * (verts[2][1] - verts[0][1])
                    - (verts[2][0] - verts[0][0]) * (verts[1][1] - verts[0][1]))
                    .abs();
            2.0 * area / (a + b + c)
        }
        _ => f64::NAN,
    }
}

/// Outcome of perturbing a stage's samples by noise below `delta`.
#[derive(Debug, Clone, Serialize)]
pub struct DeltaProbe {
    pub trials: usize,
    /// Largest `sup |phi_perturbed - phi|` seen, which must stay below delta.
    pub max_envelope_shift: f64,
    /// Largest distance from a perturbed contact sample to the mesh vertices.
    pub max_contact_distance: f64,
}

/// Re-hulls the stage samples under seeded uniform noise in `(-delta, delta)`.
pub fn probe_delta(stage: &Stage, trials: usize, seed: u64) -> Result<DeltaProbe> {
    let delta = stage.params.delta;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut shift: f64 = 0.0;
    let mut contact_dist: f64 = 0.0;
    for _ in 0..trials {
        let values: Vec<f64> = stage
            .samples
            .values()
            .iter()
            .map(|v| v + rng.gen_range(-delta..delta) * (1.0 - 1e-12))
            .collect();
        let s = SampledFunction::new(stage.samples.points().to_vec(), values)?;
        let e = compute_envelope(&s, Side::Upper)?;
        for v in e.vertex_indices() {
            let x = &s.points()[v];
            shift = shift.max((e.eval(x)? - stage.envelope.eval(x)?).abs());
        }
        for v in stage.envelope.vertex_indices() {
            let x = &s.points()[v];
            shift = shift.max((e.eval(x)? - stage.envelope.eval(x)?).abs());
        }
        for i in contact_set(&s, &e, DEFAULT_TOL_CONTACT).indices {
            contact_dist = contact_dist.max(stage.distance_to_vertices(&s.points()[i]));
        }
    }
    Ok(DeltaProbe {
        trials,
        max_envelope_shift: shift,
        max_contact_distance: contact_dist,
    })
}

/// `f_n(x) + dist(x, face)^{1/m} / (n+m)`.
#[derive(Debug, Clone)]
pub struct BoundaryBlowup {
    pub base: BaseFunction,
    pub m: u32,
    pub face: CubeFace,
}

impl BoundaryBlowup {
    pub fn new(n: u32, m: u32, dim: usize, face: CubeFace) -> Result<Self> {
        if m == 0 {
            return Err(Error::Input("m starts at 1".into()));
        }
        if face.axis >= dim {
            return Err(Error::Input(format!("face axis {} outside dimension {dim}", face.axis)));
        }
        Ok(BoundaryBlowup {
            base: BaseFunction::new(n, dim)?,
            m,
            face,
        })
    }

    pub fn n(&self) -> u32 {
        self.base.index()
    }

    /// `1/((n+m) 2^{n+m})`.
    pub fn delta(&self) -> f64 {
        boundary_delta(self.n(), self.m)
    }
}

pub fn boundary_delta(n: u32, m: u32) -> f64 {
    let nm = n + m;
    1.0 / (f64::from(nm) * 2f64.powi(nm as i32))
}

impl Field for BoundaryBlowup {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let nm = f64::from(self.n() + self.m);
        self.base.value(x) + self.face.distance(x).powf(1.0 / f64::from(self.m)) / nm
    }
}

pub fn boundary_blowup_function(n: u32, m: u32, dim: usize, face: CubeFace) -> Result<BoundaryBlowup> {
    BoundaryBlowup::new(n, m, dim, face)
}

/// The boundary family sampled on a dyadic grid along the face normal.
#[derive(Debug, Clone)]
pub struct BoundaryStage {
    pub function: BoundaryBlowup,
    pub samples: SampledFunction,
    pub envelope: Envelope,
    pub lower: Envelope,
    pub delta: f64,
}

impl BoundaryStage {
    pub fn constraint_report(&self) -> Vec<(&'static str, bool)> {
        let n = self.function.n();
        let m = self.function.m;
        vec![(
            "delta_matches_boundary_schedule",
            self.delta == 1.0 / (f64::from(n + m) * 2f64.powi((n + m) as i32)),
        )]
    }
}

/// Samples with spacing `2^-levels` along the face normal (and 9 points per
/// other axis), plus both envelopes.
pub fn build_boundary_stage(
    n: u32,
    m: u32,
    dim: usize,
    face: CubeFace,
    levels: u32,
) -> Result<BoundaryStage> {
    if !(1..=2).contains(&dim) {
        return Err(Error::Unsupported(dim));
    }
    let function = BoundaryBlowup::new(n, m, dim, face)?;
    let fine = (1usize << levels) + 1;
    let coarse = 9usize;
    let mut points = Vec::with_capacity(fine * coarse.pow(dim as u32 - 1));
    for i in 0..fine {
        let t = i as f64 / (fine - 1) as f64;
        let others = if dim == 1 { vec![vec![]] } else { grid_points(dim - 1, coarse) };
        for o in others {
            let mut x = Vec::with_capacity(dim);
            let mut it = o.into_iter();
            for k in 0..dim {
                x.push(if k == face.axis { t } else { it.next().unwrap() });
            }
            points.push(x);
        }
    }
    let samples = SampledFunction::from_fn(points, |x| function.value(x))?;
    let envelope = compute_envelope(&samples, Side::Upper)?;
    let lower = compute_envelope(&samples, Side::Lower)?;
    Ok(BoundaryStage {
        delta: function.delta(),
        function,
        samples,
        envelope,
        lower,
    })
}

/// A smooth base function plus seeded noise of size below
/// `delta = h^2`, where the probe step is `h = min(1/(m M), 1/4)` with
/// `M = max(M_n, 1)`, sampled on a grid whose spacing divides `h`.
#[derive(Debug, Clone)]
pub struct SmoothStage {
    pub base: BaseFunction,
    pub m: u32,
    pub delta: f64,
    pub step: f64,
    pub samples: SampledFunction,
    pub envelope: Envelope,
}

pub fn build_smooth_stage(n: u32, m: u32, dim: usize, seed: u64) -> Result<SmoothStage> {
    if !(1..=2).contains(&dim) {
        return Err(Error::Unsupported(dim));
    }
    let base = BaseFunction::new(n, dim)?;
    let big_m = base.bound().max(1.0);
    let step = (1.0 / (f64::from(m) * big_m)).min(0.25);
    let delta = step * step;
    let per_step = if dim == 1 { 8 } else { 2 };
    let intervals = ((1.0 / step).ceil() as usize) * per_step;
    let per_axis = intervals + 1;
    if per_axis.pow(dim as u32) > 2_000_000 {
        return Err(Error::Resource {
            what: "smooth stage samples",
            requested: per_axis.pow(dim as u32),
            cap: 2_000_000,
        });
    }
    // Grid spacing 1/intervals divides h only when 1/h is an integer.
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, 3));
    let points = grid_points(dim, per_axis);
    let values = points
        .iter()
        .map(|p| base.value(p) + rng.gen_range(-delta..delta) * (1.0 - 1e-12))
        .collect();
    let samples = SampledFunction::new(points, values)?;
    let envelope = compute_envelope(&samples, Side::Upper)?;
    Ok(SmoothStage {
        base,
        m,
        delta,
        step,
        samples,
        envelope,
    })
}

/// JSON stage descriptor.
#[derive(Debug, Clone, Serialize)]
pub struct StageDescriptor {
    pub n: u32,
    pub m: u32,
    pub d: usize,
    pub seed: u64,
    pub params: ConstructionParams,
    pub constraint_report: std::collections::BTreeMap<String, bool>,
    pub vertex_count: usize,
    pub sample_count: usize,
    pub contact_count: usize,
    pub facet_count: usize,
    pub fold_count: usize,
    pub ball_cover: BallCover,
}

impl Stage {
    pub fn descriptor(&self) -> StageDescriptor {
        StageDescriptor {
            n: self.config.n,
            m: self.config.m,
            d: self.config.dim,
            seed: self.config.seed,
            params: self.params.clone(),
            constraint_report: self
                .params
                .constraint_report()
                .into_iter()
                .map(|(k, v)| (k.to_string(), v))
                .collect(),
            vertex_count: self.params.vertex_count,
            sample_count: self.samples.len(),
            contact_count: self.contact.indices.len(),
            facet_count: self.envelope.facets().len(),
            fold_count: self.folding.faces.len(),
            ball_cover: self.cover,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumeration_starts_at_zero() {
        let f = BaseFunction::new(1, 2).unwrap();
        assert!(f.is_zero());
        assert_eq!(f.bound(), 0.0);
        assert_eq!(f.value(&[0.3, 0.7]), 0.0);
        let f2 = BaseFunction::new(2, 1).unwrap();
        // -sin(pi x) / pi^2
        assert!((f2.value(&[0.5]) + 1.0 / (PI * PI)).abs() < 1e-15);
        assert!((f2.bound() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn frequency_order() {
        assert_eq!(
            frequency_vectors(2, 5),
            vec![vec![1, 0], vec![0, 1], vec![2, 0], vec![1, 1], vec![0, 2]]
        );
    }

    #[test]
    fn reported_bound_dominates_grid() {
        for d in [1, 2] {
            for n in [2, 3, 7, 12, 45, 200] {
                let f = BaseFunction::new(n, d).unwrap();
                let per_axis = if d == 1 { 10_000 } else { 100 };
                for x in grid_points(d, per_axis) {
                    assert!(geometry::norm(&f.gradient(&x)) <= f.bound() + 1e-12);
                    for j in 0..d {
                        assert!(f.second_derivative(&x, j).abs() <= f.bound() + 1e-12);
                    }
                }
            }
        }
    }

    #[test]
    fn base_evaluation_is_deterministic() {
        let f = BaseFunction::new(77, 2).unwrap();
        let a = f.value(&[0.123, 0.456]);
        let b = f.value(&[0.123, 0.456]);
        assert_eq!(a.to_bits(), b.to_bits());
    }

    #[test]
    fn mesh_modulus() {
        let zero = BaseFunction::new(1, 1).unwrap();
        assert_eq!(modulus_mesh(&zero, 3, 0.5), 0.5);
        let f = BaseFunction::new(2, 1).unwrap();
        let e1 = modulus_mesh(&f, 2, 0.5);
        let e2 = modulus_mesh(&f, 6, 0.5);
        assert!((e1 - 1.0 / 64.0).abs() < 1e-15);
        // doubling n + m halves eta
        assert!((e1 / e2 - 2.0).abs() < 1e-12);
    }

    #[test]
    fn peak_values() {
        let v = vec![vec![0.25, 0.25], vec![0.75, 0.5]];
        assert_eq!(peak_field_value(&v, 0.1, &[0.25, 0.25]), 1.0);
        assert_eq!(peak_field_value(&v, 0.1, &[0.5, 0.5]), 0.0);
        assert!((peak_field_value(&v, 0.1, &[0.75, 0.55]) - 0.5).abs() < 1e-12);
        assert_eq!(peak_field_value(&v, 0.1, &[1.2, 0.5]), 0.0);
        let field = PeakField::new(v.clone(), 0.1).unwrap();
        for x in grid_points(2, 41) {
            assert!((field.value(&x) - peak_field_value(&v, 0.1, &x)).abs() < 1e-15);
        }
    }

    #[test]
    fn boundary_family_values() {
        let f = BoundaryBlowup::new(1, 2, 1, CubeFace::new(0, 0)).unwrap();
        assert_eq!(f.value(&[0.0]), 0.0);
        assert!((f.value(&[0.25]) - 0.5 / 3.0).abs() < 1e-15);
        let g = BoundaryBlowup::new(5, 2, 2, CubeFace::new(1, 1)).unwrap();
        assert_eq!(g.value(&[0.3, 1.0]), g.base.value(&[0.3, 1.0]));
        assert_eq!(boundary_delta(1, 1), 1.0 / 8.0);
    }

    #[test]
    fn tent_tau() {
        let s = SampledFunction::new(vec![vec![0.0], vec![0.5], vec![1.0]], vec![0.0, 1.0, 0.0])
            .unwrap();
        let e = compute_envelope(&s, Side::Upper).unwrap();
        // gap 4: (4/2)^m = 2^m, inradius 0.25, reach 1
        assert_eq!(tau_estimate(&e, 1, 1.0).unwrap(), 0.25);
        let flat = SampledFunction::new(vec![vec![0.0], vec![1.0]], vec![0.0, 1.0]).unwrap();
        let e = compute_envelope(&flat, Side::Upper).unwrap();
        assert!(matches!(tau_estimate(&e, 1, 1.0), Err(Error::Undefined(_))));
    }
}
