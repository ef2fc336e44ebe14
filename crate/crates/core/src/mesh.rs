//! Simplicial partitions of the unit cube and piecewise-linear functions
//! on them.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::geometry::{self, SimplexFrame, SimplexLocator};

/// Default cap on the number of vertices a uniform partition may have.
pub const DEFAULT_VERTEX_CAP: usize = 1_000_000;

/// Default degeneracy tolerance on normalized determinants.
pub const DEFAULT_TOL_GEOM: f64 = 1e-9;

/// Above this many candidate tuples the independence test only inspects
/// vertex neighbourhoods.
const EXHAUSTIVE_TUPLE_CAP: u128 = 2_000_000;

const POINT_TOL: f64 = 1e-12;

/// The face `{x in [0,1]^d : x[axis] = side}`. `axis` is zero-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct CubeFace {
    pub axis: usize,
    pub side: u8,
}

impl CubeFace {
    pub fn new(axis: usize, side: u8) -> Self {
        assert!(side <= 1, "face side must be 0 or 1");
        CubeFace { axis, side }
    }

    /// All 2d faces, ordered by axis then side.
    pub fn all(dim: usize) -> Vec<CubeFace> {
        (0..dim)
            .flat_map(|axis| [0, 1].map(|side| CubeFace { axis, side }))
            .collect()
    }

    pub fn distance(&self, x: &[f64]) -> f64 {
        (x[self.axis] - f64::from(self.side)).abs()
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        self.distance(x) <= tol
    }

    /// +1 when moving along `+e_axis` enters the cube from this face.
    pub fn inward_sign(&self) -> f64 {
        if self.side == 0 {
            1.0
        } else {
            -1.0
        }
    }
}

/// Non-overlapping simplices tiling [0,1]^d.
#[derive(Debug, Clone)]
pub struct SimplicialPartition {
    dim: usize,
    vertices: Vec<Vec<f64>>,
    simplices: Vec<Vec<usize>>,
    min_vertex_gap: f64,
    frames: Vec<SimplexFrame>,
    locator: SimplexLocator,
}

impl SimplicialPartition {
    /// Validates and indexes a partition. Every simplex must be
    /// non-degenerate and every vertex must lie in the cube; tiling is
    /// checked separately by [`SimplicialPartition::tiling_defect`].
    pub fn from_parts(
        dim: usize,
        vertices: Vec<Vec<f64>>,
        simplices: Vec<Vec<usize>>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Input("dimension must be positive".into()));
        }
        if vertices.len() < dim + 1 {
            return Err(Error::Input("too few vertices".into()));
        }
        for v in &vertices {
            if v.len() != dim || !geometry::in_unit_cube(v, POINT_TOL) {
                return Err(Error::domain(v));
            }
        }
        let mut frames = Vec::with_capacity(simplices.len());
        let mut boxes = Vec::with_capacity(simplices.len());
        for s in &simplices {
            if s.len() != dim + 1 || s.iter().any(|&i| i >= vertices.len()) {
                return Err(Error::Input(format!("bad simplex {s:?}")));
            }
            let verts: Vec<&[f64]> = s.iter().map(|&i| vertices[i].as_slice()).collect();
            let frame = SimplexFrame::new(&verts)
                .ok_or_else(|| Error::Input(format!("degenerate simplex {s:?}")))?;
            frames.push(frame);
            boxes.push(bounding_box(&verts));
        }
        let min_vertex_gap = min_pairwise_distance(&vertices);
        if !(min_vertex_gap > 0.0) {
            return Err(Error::Input("duplicate vertices".into()));
        }
        let locator = SimplexLocator::build(dim, &boxes);
        Ok(SimplicialPartition {
            dim,
            vertices,
            simplices,
            min_vertex_gap,
            frames,
            locator,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn vertices(&self) -> &[Vec<f64>] {
        &self.vertices
    }

    pub fn simplices(&self) -> &[Vec<usize>] {
        &self.simplices
    }

    /// Minimum pairwise vertex distance.
    pub fn min_vertex_gap(&self) -> f64 {
        self.min_vertex_gap
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub(crate) fn frame(&self, s: usize) -> &SimplexFrame {
        &self.frames[s]
    }

    fn simplex_vertices(&self, s: usize) -> Vec<&[f64]> {
        self.simplices[s]
            .iter()
            .map(|&i| self.vertices[i].as_slice())
            .collect()
    }

    pub fn simplex_volume(&self, s: usize) -> f64 {
        let verts = self.simplex_vertices(s);
        let d = self.dim;
        let mut m = Vec::with_capacity(d * d);
        for v in &verts[1..] {
            for k in 0..d {
                m.push(v[k] - verts[0][k]);
            }
        }
        geometry::det_in_place(&mut m, d).abs() / geometry::d_factorial(d) as f64
    }

    pub fn simplex_diameter(&self, s: usize) -> f64 {
        let verts = self.simplex_vertices(s);
        let mut best: f64 = 0.0;
        for i in 0..verts.len() {
            for j in i + 1..verts.len() {
                best = best.max(geometry::dist(verts[i], verts[j]));
            }
        }
        best
    }

    pub fn max_simplex_diameter(&self) -> f64 {
        (0..self.simplices.len())
            .map(|s| self.simplex_diameter(s))
            .fold(0.0, f64::max)
    }

    /// `|1 - sum of simplex volumes|`.
    pub fn tiling_defect(&self) -> f64 {
        let total: f64 = (0..self.simplices.len())
            .map(|s| self.simplex_volume(s))
            .sum();
        (1.0 - total).abs()
    }

    /// Number of simplices whose open interior contains `x`.
    pub fn interior_hits(&self, x: &[f64], margin: f64) -> usize {
        let mut bary = vec![0.0; self.dim + 1];
        (0..self.simplices.len())
            .filter(|&s| {
                self.frames[s].barycentric_into(x, &mut bary);
                bary.iter().all(|&b| b > margin)
            })
            .count()
    }

    /// Lowest-index simplex containing `x`.
    pub fn locate(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.dim || !geometry::in_unit_cube(x, POINT_TOL) {
            return Err(Error::domain(x));
        }
        let mut scratch = vec![0.0; self.dim + 1];
        geometry::locate(&self.locator, &self.frames, x, 1e-12, &mut scratch)
            .ok_or_else(|| Error::domain(x))
    }

    pub fn is_interior_vertex(&self, i: usize) -> bool {
        self.vertices[i].iter().all(|&c| c > 0.0 && c < 1.0)
    }

    /// Vertex adjacency through shared simplices, sorted and deduplicated.
    pub fn vertex_neighbours(&self) -> Vec<Vec<usize>> {
        let mut nb = vec![Vec::new(); self.vertices.len()];
        for s in &self.simplices {
            for &a in s {
                for &b in s {
                    if a != b {
                        nb[a].push(b);
                    }
                }
            }
        }
        for list in &mut nb {
            list.sort_unstable();
            list.dedup();
        }
        nb
    }

    /// Moves every interior vertex by an independent uniform offset in
    /// `(-amplitude, amplitude)` per coordinate. Boundary vertices stay put.
    /// Fails if any simplex loses its orientation.
    pub fn jitter_interior_vertices(&self, amplitude: f64, rng: &mut impl Rng) -> Result<Self> {
        let signs: Vec<f64> = (0..self.simplices.len())
            .map(|s| self.signed_volume_of(&self.vertices, s).signum())
            .collect();
        let mut vertices = self.vertices.clone();
        for (i, v) in vertices.iter_mut().enumerate() {
            if self.is_interior_vertex(i) {
                for c in v.iter_mut() {
                    *c += rng.gen_range(-amplitude..amplitude);
                }
            }
        }
        for (s, &sign) in signs.iter().enumerate() {
            if self.signed_volume_of(&vertices, s).signum() != sign {
                return Err(Error::Input(format!(
                    "jitter amplitude {amplitude} inverts simplex {s}"
                )));
            }
        }
        SimplicialPartition::from_parts(self.dim, vertices, self.simplices.clone())
    }

    fn signed_volume_of(&self, vertices: &[Vec<f64>], s: usize) -> f64 {
        let d = self.dim;
        let idx = &self.simplices[s];
        let mut m = Vec::with_capacity(d * d);
        for &i in &idx[1..] {
            for k in 0..d {
                m.push(vertices[i][k] - vertices[idx[0]][k]);
            }
        }
        geometry::det_in_place(&mut m, d)
    }
}

fn bounding_box(verts: &[&[f64]]) -> (Vec<f64>, Vec<f64>) {
    let d = verts[0].len();
    let mut lo = vec![f64::INFINITY; d];
    let mut hi = vec![f64::NEG_INFINITY; d];
    for v in verts {
        for k in 0..d {
            lo[k] = lo[k].min(v[k]);
            hi[k] = hi[k].max(v[k]);
        }
    }
    (lo, hi)
}

/// Closest-pair distance by sorting on the first coordinate and sweeping.
pub fn min_pairwise_distance(points: &[Vec<f64>]) -> f64 {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| points[a][0].total_cmp(&points[b][0]));
    let mut best = f64::INFINITY;
    for (pos, &i) in order.iter().enumerate() {
        for &j in &order[pos + 1..] {
            if points[j][0] - points[i][0] >= best {
                break;
            }
            best = best.min(geometry::dist(&points[i], &points[j]));
        }
    }
    best
}

/// Kuhn (Freudenthal) triangulation of a uniform grid on [0,1]^d whose
/// simplices all have diameter `< eta`.
pub fn build_uniform_partition(d: usize, eta: f64) -> Result<SimplicialPartition> {
    build_uniform_partition_capped(d, eta, DEFAULT_VERTEX_CAP)
}

pub fn build_uniform_partition_capped(
    d: usize,
    eta: f64,
    vertex_cap: usize,
) -> Result<SimplicialPartition> {
    if d == 0 {
        return Err(Error::Input("dimension must be positive".into()));
    }
    let sqrt_d = (d as f64).sqrt();
    if !(eta > 0.0 && eta <= sqrt_d) {
        return Err(Error::Input(format!("mesh size {eta} outside (0, sqrt(d)]")));
    }
    // Kuhn simplices of a cell of side h have diameter h * sqrt(d).
    let cells_f = (sqrt_d / eta).floor() + 1.0;
    let per_axis = cells_f + 1.0;
    if per_axis.powi(d as i32) > vertex_cap as f64 {
        return Err(Error::Resource {
            what: "uniform partition vertices",
            requested: per_axis.powi(d as i32).min(usize::MAX as f64) as usize,
            cap: vertex_cap,
        });
    }
    let cells = cells_f as usize;
    Ok(kuhn_grid(d, cells))
}

/// Kuhn triangulation of the grid with `cells` cells per axis.
pub fn kuhn_grid(d: usize, cells: usize) -> SimplicialPartition {
    let per_axis = cells + 1;
    let n_vertices = per_axis.pow(d as u32);
    let mut vertices = Vec::with_capacity(n_vertices);
    for flat in 0..n_vertices {
        let mut rem = flat;
        let mut v = Vec::with_capacity(d);
        for _ in 0..d {
            v.push((rem % per_axis) as f64 / cells as f64);
            rem /= per_axis;
        }
        vertices.push(v);
    }
    let strides: Vec<usize> = (0..d).map(|k| per_axis.pow(k as u32)).collect();
    let perms = permutations(d);
    let n_cells = cells.pow(d as u32);
    let mut simplices = Vec::with_capacity(n_cells * perms.len());
    for cell in 0..n_cells {
        let mut rem = cell;
        let mut base = 0;
        for stride in &strides {
            base += (rem % cells) * stride;
            rem /= cells;
        }
        for perm in &perms {
            let mut s = Vec::with_capacity(d + 1);
            let mut cur = base;
            s.push(cur);
            for &axis in perm {
                cur += strides[axis];
                s.push(cur);
            }
            simplices.push(s);
        }
    }
    SimplicialPartition::from_parts(d, vertices, simplices)
        .expect("Kuhn triangulation is always valid")
}

fn permutations(d: usize) -> Vec<Vec<usize>> {
    fn rec(prefix: &mut Vec<usize>, used: &mut [bool], out: &mut Vec<Vec<usize>>) {
        if prefix.len() == used.len() {
            out.push(prefix.clone());
            return;
        }
        for i in 0..used.len() {
            if !used[i] {
                used[i] = true;
                prefix.push(i);
                rec(prefix, used, out);
                prefix.pop();
                used[i] = false;
            }
        }
    }
    let mut out = Vec::new();
    rec(&mut Vec::new(), &mut vec![false; d], &mut out);
    out
}

/// Continuous function that is affine on every simplex of a partition.
#[derive(Debug, Clone)]
pub struct PLFunction {
    partition: Arc<SimplicialPartition>,
    values: Vec<f64>,
    gradients: Vec<Vec<f64>>,
    gradient_bound: f64,
}

impl PLFunction {
    pub fn new(partition: Arc<SimplicialPartition>, values: Vec<f64>) -> Result<Self> {
        if values.len() != partition.vertex_count() {
            return Err(Error::Input(format!(
                "{} values for {} vertices",
                values.len(),
                partition.vertex_count()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("non-finite vertex value".into()));
        }
        let gradients: Vec<Vec<f64>> = partition
            .simplices()
            .iter()
            .enumerate()
            .map(|(s, idx)| {
                let vals: Vec<f64> = idx.iter().map(|&i| values[i]).collect();
                partition.frame(s).gradient(&vals)
            })
            .collect();
        let gradient_bound = gradients
            .iter()
            .map(|g| geometry::norm(g))
            .fold(0.0, f64::max);
        Ok(PLFunction {
            partition,
            values,
            gradients,
            gradient_bound,
        })
    }

    /// Samples `f` at every vertex.
    pub fn interpolate(partition: Arc<SimplicialPartition>, f: impl Fn(&[f64]) -> f64) -> Self {
        let values = partition.vertices().iter().map(|v| f(v)).collect();
        PLFunction::new(partition, values).expect("finite interpolant")
    }

    pub fn partition(&self) -> &SimplicialPartition {
        &self.partition
    }

    pub fn shared_partition(&self) -> Arc<SimplicialPartition> {
        Arc::clone(&self.partition)
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn gradients(&self) -> &[Vec<f64>] {
        &self.gradients
    }

    /// Largest gradient norm over all simplices.
    pub fn gradient_bound(&self) -> f64 {
        self.gradient_bound
    }

    /// Barycentric evaluation; exact at vertices.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        let s = self.partition.locate(x)?;
        Ok(self.value_in(s, x))
    }

    fn value_in(&self, s: usize, x: &[f64]) -> f64 {
        let idx = &self.partition.simplices()[s];
        for &i in idx {
            if self.partition.vertices()[i].as_slice() == x {
                return self.values[i];
            }
        }
        let bary = self.partition.frame(s).barycentric(x);
        idx.iter().zip(&bary).map(|(&i, b)| b * self.values[i]).sum()
    }
}

impl Field for PLFunction {
    fn dim(&self) -> usize {
        self.partition.dim()
    }

    fn value(&self, x: &[f64]) -> f64 {
        let clamped: Vec<f64> = x.iter().map(|c| c.clamp(0.0, 1.0)).collect();
        let s = self
            .partition
            .locate(&clamped)
            .expect("clamped point lies in the cube");
        self.value_in(s, &clamped)
    }
}

/// Free-function form of [`PLFunction::evaluate`].
pub fn evaluate_pl(f: &PLFunction, x: &[f64]) -> Result<f64> {
    f.evaluate(x)
}

/// Which independence condition a function violates.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum IndependenceViolation {
    /// `d + 2` lifted vertices `(v, f(v))` on one hyperplane of R^{d+1}.
    LiftedCoplanar(Vec<usize>),
    /// `d + 1` interior vertices on one hyperplane of R^d.
    InteriorCoplanar(Vec<usize>),
}

/// True iff both independence conditions hold at tolerance `tol_geom`.
pub fn check_independent(f: &PLFunction, tol_geom: f64) -> bool {
    find_violation(f, tol_geom).is_none()
}

/// First violation found. Small meshes are checked over all tuples; large
/// ones over tuples drawn from each vertex and its mesh neighbours.
pub fn find_violation(f: &PLFunction, tol_geom: f64) -> Option<IndependenceViolation> {
    lifted_violation(f, tol_geom)
        .map(IndependenceViolation::LiftedCoplanar)
        .or_else(|| interior_violation(f.partition(), tol_geom).map(IndependenceViolation::InteriorCoplanar))
}

fn lifted_violation(f: &PLFunction, tol: f64) -> Option<Vec<usize>> {
    let p = f.partition();
    let d = p.dim();
    let all: Vec<usize> = (0..p.vertex_count()).collect();
    let verts = p.vertices();
    let vals = f.values();
    search_degenerate(p, &all, d + 2, |t| {
        graph_coplanarity(t.iter().map(|&i| (verts[i].as_slice(), vals[i]))) <= tol
    })
}

/// Sine of the angle between the value increments `f_i - f_0` and the
/// span of the position increments `x_i - x_0`. Zero exactly when the
/// lifted points lie on one non-vertical hyperplane.
pub fn graph_coplanarity<'a>(points: impl Iterator<Item = (&'a [f64], f64)>) -> f64 {
    let points: Vec<(&[f64], f64)> = points.collect();
    let (x0, f0) = points[0];
    let d = x0.len();
    let rows = points.len() - 1;
    let mut target: Vec<f64> = points[1..].iter().map(|(_, f)| f - f0).collect();
    let target_norm = geometry::norm(&target);
    if target_norm == 0.0 {
        return 0.0;
    }
    // Modified Gram-Schmidt on the columns of X = [x_i - x_0].
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(d);
    for k in 0..d {
        let mut col: Vec<f64> = points[1..].iter().map(|(x, _)| x[k] - x0[k]).collect();
        let scale = geometry::norm(&col);
        for b in &basis {
            let c = geometry::dot(&col, b);
            for r in 0..rows {
                col[r] -= c * b[r];
            }
        }
        let n = geometry::norm(&col);
        if n > 1e-12 * scale.max(f64::MIN_POSITIVE) && n > 0.0 {
            basis.push(col.iter().map(|c| c / n).collect());
        }
    }
    for b in &basis {
        let c = geometry::dot(&target, b);
        for r in 0..rows {
            target[r] -= c * b[r];
        }
    }
    geometry::norm(&target) / target_norm
}

/// Independence condition on interior vertex positions alone; void in d = 1.
pub fn interior_violation(p: &SimplicialPartition, tol: f64) -> Option<Vec<usize>> {
    let d = p.dim();
    if d < 2 {
        return None;
    }
    let interior: Vec<usize> = (0..p.vertex_count())
        .filter(|&i| p.is_interior_vertex(i))
        .collect();
    let verts = p.vertices();
    search_degenerate(p, &interior, d + 1, |t| {
        let refs: Vec<&[f64]> = t.iter().map(|&i| verts[i].as_slice()).collect();
        geometry::normalized_volume(&refs) <= tol
    })
}

fn search_degenerate(
    p: &SimplicialPartition,
    pool: &[usize],
    k: usize,
    degenerate: impl Fn(&[usize]) -> bool,
) -> Option<Vec<usize>> {
    if pool.len() < k {
        return None;
    }
    if binomial(pool.len(), k) <= EXHAUSTIVE_TUPLE_CAP {
        let mut found = None;
        for_each_combination(pool.len(), k, |c| {
            let tuple: Vec<usize> = c.iter().map(|&i| pool[i]).collect();
            if degenerate(&tuple) {
                found = Some(tuple);
                return false;
            }
            true
        });
        return found;
    }
    let mut in_pool = vec![false; p.vertex_count()];
    for &i in pool {
        in_pool[i] = true;
    }
    let nb = p.vertex_neighbours();
    for &v in pool {
        let ring: Vec<usize> = nb[v].iter().copied().filter(|&u| in_pool[u]).collect();
        if ring.len() < k - 1 {
            continue;
        }
        let mut found = None;
        for_each_combination(ring.len(), k - 1, |c| {
            let mut tuple = vec![v];
            tuple.extend(c.iter().map(|&i| ring[i]));
            if degenerate(&tuple) {
                found = Some(tuple);
                return false;
            }
            true
        });
        if found.is_some() {
            return found;
        }
    }
    None
}

fn binomial(n: usize, k: usize) -> u128 {
    if k > n {
        return 0;
    }
    let mut acc: u128 = 1;
    for i in 0..k as u128 {
        acc = acc * (n as u128 - i) / (i + 1);
        if acc > EXHAUSTIVE_TUPLE_CAP * 1000 {
            return acc;
        }
    }
    acc
}

/// Calls `visit` on every k-subset of `0..n` in lexicographic order until
/// it returns false.
fn for_each_combination(n: usize, k: usize, mut visit: impl FnMut(&[usize]) -> bool) {
    if k > n {
        return;
    }
    let mut c: Vec<usize> = (0..k).collect();
    loop {
        if !visit(&c) {
            return;
        }
        let Some(i) = (0..k).rev().find(|&i| c[i] < i + n - k) else {
            return;
        };
        c[i] += 1;
        for j in i + 1..k {
            c[j] = c[j - 1] + 1;
        }
    }
}

/// Knobs for [`perturb_to_independent_with`].
#[derive(Debug, Clone)]
pub struct PerturbConfig {
    pub tol_geom: f64,
    pub max_attempts: usize,
    /// Interior vertices move by at most this fraction of the minimum
    /// vertex gap when the positional condition fails.
    pub position_fraction: f64,
}

impl Default for PerturbConfig {
    fn default() -> Self {
        PerturbConfig {
            tol_geom: DEFAULT_TOL_GEOM,
            max_attempts: 32,
            position_fraction: 0.05,
        }
    }
}

/// Seeded perturbation of vertex values (and, if needed, interior vertex
/// positions) into an independent PL function with every value moved by
/// less than `eps`.
pub fn perturb_to_independent(f: &PLFunction, eps: f64, seed: u64) -> Result<PLFunction> {
    perturb_to_independent_with(f, eps, seed, &PerturbConfig::default())
}

pub fn perturb_to_independent_with(
    f: &PLFunction,
    eps: f64,
    seed: u64,
    cfg: &PerturbConfig,
) -> Result<PLFunction> {
    if !(eps > 0.0) {
        return Err(Error::Input(format!("perturbation bound {eps} must be positive")));
    }
    if check_independent(f, cfg.tol_geom) {
        return Ok(f.clone());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let positions_ok = interior_violation(f.partition(), cfg.tol_geom).is_none();
    for attempt in 0..cfg.max_attempts {
        let shrink = 0.8f64.powi(attempt as i32);
        let partition = if positions_ok {
            f.shared_partition()
        } else {
            let d = f.partition().dim() as f64;
            let amp = cfg.position_fraction * f.partition().min_vertex_gap() / d.sqrt() * shrink;
            match f.partition().jitter_interior_vertices(amp, &mut rng) {
                Ok(p) => Arc::new(p),
                Err(_) => continue,
            }
        };
        let amp = 0.5 * eps * shrink;
        let values: Vec<f64> = f
            .values()
            .iter()
            .map(|v| v + rng.gen_range(-amp..amp))
            .collect();
        let g = PLFunction::new(partition, values)?;
        if check_independent(&g, cfg.tol_geom) {
            return Ok(g);
        }
    }
    Err(Error::Nondeterminism {
        attempts: cfg.max_attempts,
        seed,
    })
}

/// JSON layout `{d, vertices, simplices, values}`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeshDocument {
    pub d: usize,
    pub vertices: Vec<Vec<f64>>,
    pub simplices: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub values: Option<Vec<f64>>,
}

impl From<&SimplicialPartition> for MeshDocument {
    fn from(p: &SimplicialPartition) -> Self {
        MeshDocument {
            d: p.dim(),
            vertices: p.vertices().to_vec(),
            simplices: p.simplices().to_vec(),
            values: None,
        }
    }
}

impl From<&PLFunction> for MeshDocument {
    fn from(f: &PLFunction) -> Self {
        let mut doc = MeshDocument::from(f.partition());
        doc.values = Some(f.values().to_vec());
        doc
    }
}

impl MeshDocument {
    pub fn into_partition(self) -> Result<SimplicialPartition> {
        SimplicialPartition::from_parts(self.d, self.vertices, self.simplices)
    }

    pub fn into_pl_function(mut self) -> Result<PLFunction> {
        let values = self
            .values
            .take()
            .ok_or_else(|| Error::Input("mesh document has no values".into()))?;
        let p = self.into_partition()?;
        PLFunction::new(Arc::new(p), values)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(values: &[f64]) -> PLFunction {
        let n = values.len();
        let vertices = (0..n).map(|i| vec![i as f64 / (n - 1) as f64]).collect();
        let simplices = (0..n - 1).map(|i| vec![i, i + 1]).collect();
        let p = SimplicialPartition::from_parts(1, vertices, simplices).unwrap();
        PLFunction::new(Arc::new(p), values.to_vec()).unwrap()
    }

    #[test]
    fn uniform_partition_counts() {
        let p = build_uniform_partition(1, 0.26).unwrap();
        assert_eq!(p.vertex_count(), 5);
        assert_eq!(p.simplices().len(), 4);
        assert!((p.max_simplex_diameter() - 0.25).abs() < 1e-15);
        assert!((p.min_vertex_gap() - 0.25).abs() < 1e-15);

        let p = build_uniform_partition(2, 0.8).unwrap();
        assert_eq!(p.vertex_count(), 9);
        assert_eq!(p.simplices().len(), 8);
        assert!((p.max_simplex_diameter() - 0.5f64.sqrt()).abs() < 1e-15);
        assert!(p.tiling_defect() < 1e-12);
    }

    #[test]
    fn eta_equal_to_spacing_refines() {
        // diameter must be strictly below eta
        let p = build_uniform_partition(1, 0.25).unwrap();
        assert!(p.max_simplex_diameter() < 0.25);
    }

    #[test]
    fn resource_cap_is_enforced() {
        let err = build_uniform_partition_capped(2, 1e-6, 1_000_000).unwrap_err();
        assert!(matches!(err, Error::Resource { .. }));
        assert!(build_uniform_partition(2, 0.0).is_err());
        assert!(build_uniform_partition(1, 1.5).is_err());
    }

    #[test]
    fn kuhn_3d_tiles_cube() {
        let p = kuhn_grid(3, 2);
        assert_eq!(p.simplices().len(), 8 * 6);
        assert!(p.tiling_defect() < 1e-12);
    }

    #[test]
    fn evaluation_examples() {
        let tent = line(&[0.0, 1.0, 0.0]);
        assert_eq!(tent.evaluate(&[0.25]).unwrap(), 0.5);
        let p = Arc::new(build_uniform_partition(2, 0.8).unwrap());
        let affine = PLFunction::interpolate(p, |x| x[0] + x[1]);
        assert!((affine.evaluate(&[0.3, 0.4]).unwrap() - 0.7).abs() < 1e-12);
        for (v, &y) in affine.partition().vertices().iter().zip(affine.values()) {
            assert_eq!(affine.evaluate(v).unwrap(), y);
        }
        assert!(matches!(
            affine.evaluate(&[1.2, 0.1]),
            Err(Error::Domain { .. })
        ));
    }

    #[test]
    fn gradient_bound_is_max_norm() {
        let tent = line(&[0.0, 1.0, 0.0]);
        assert_eq!(tent.gradient_bound(), 2.0);
    }

    #[test]
    fn independence_examples() {
        assert!(!check_independent(&line(&[0.0, 0.5, 1.0]), DEFAULT_TOL_GEOM));
        assert!(check_independent(&line(&[0.0, 0.6, 1.0]), DEFAULT_TOL_GEOM));

        let p = Arc::new(kuhn_grid(2, 4));
        let f = PLFunction::interpolate(Arc::clone(&p), |x| (7.0 * x[0]).sin() + x[1] * x[1] * 3.1);
        assert!(p.vertices().iter().any(|v| v == &vec![0.25, 0.5]));
        assert!(matches!(
            find_violation(&f, DEFAULT_TOL_GEOM),
            Some(IndependenceViolation::LiftedCoplanar(_)) | Some(IndependenceViolation::InteriorCoplanar(_))
        ));
        assert!(interior_violation(&p, DEFAULT_TOL_GEOM).is_some());
    }

    #[test]
    fn perturbation_examples() {
        let f = line(&[0.0, 0.5, 1.0]);
        let g = perturb_to_independent(&f, 0.01, 1).unwrap();
        assert!(check_independent(&g, DEFAULT_TOL_GEOM));
        for (a, b) in f.values().iter().zip(g.values()) {
            assert!((a - b).abs() < 0.01);
        }
        // already independent: unchanged
        let h = line(&[0.0, 0.6, 1.0]);
        let k = perturb_to_independent(&h, 0.01, 9).unwrap();
        assert_eq!(h.values(), k.values());
        // n = m = 1 budget
        let bound = 1.0 / 32.0;
        let g = perturb_to_independent(&line(&[0.0, 0.25, 0.5, 0.75, 1.0]), bound, 3).unwrap();
        assert!(g.values().iter().zip([0.0, 0.25, 0.5, 0.75, 1.0]).all(|(a, b)| (a - b).abs() < bound));
        // deterministic
        let g2 = perturb_to_independent(&line(&[0.0, 0.25, 0.5, 0.75, 1.0]), bound, 3).unwrap();
        assert_eq!(g.values(), g2.values());
    }

    #[test]
    fn perturbation_moves_collinear_interior_vertices() {
        let p = Arc::new(kuhn_grid(2, 4));
        let f = PLFunction::interpolate(p, |x| x[0] * x[1]);
        let g = perturb_to_independent(&f, 0.01, 5).unwrap();
        assert!(check_independent(&g, DEFAULT_TOL_GEOM));
        assert!(g.partition().tiling_defect() < 1e-12);
        assert!(g.partition().min_vertex_gap() > 0.0);
    }

    #[test]
    fn document_round_trip() {
        let f = line(&[0.0, 0.3, 0.1]);
        let doc = MeshDocument::from(&f);
        let json = serde_json::to_string(&doc).unwrap();
        let back: MeshDocument = serde_json::from_str(&json).unwrap();
        let g = back.into_pl_function().unwrap();
        assert_eq!(g.values(), f.values());
    }

    #[test]
    fn combinations_enumerated() {
        let mut count = 0;
        for_each_combination(6, 3, |_| {
            count += 1;
            true
        });
        assert_eq!(count, 20);
    }
}
