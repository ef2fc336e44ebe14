//! Upper concave and lower convex envelopes of sampled functions on
//! [0,1]^d, computed as the top or bottom of the convex hull of the
//! lifted samples `(x_i, f_i)`.
//!
//! The upper envelope is the smallest concave function above every sample,
//! the lower envelope the largest convex one below. Both are piecewise
//! linear over a triangulation of the cube whose vertices are samples.

mod folding;
mod hull3;
mod oracle;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::Field;
use crate::geometry::{self, SimplexFrame, SimplexLocator};

pub use folding::{folding_region, BallCover, FoldFace, FoldingRegion};
pub use oracle::envelope_bruteforce;

/// Default contact tolerance.
pub const DEFAULT_TOL_CONTACT: f64 = 1e-8;

/// Hull orientation tolerance relative to the lifted point-cloud extent.
const HULL_REL_EPS: f64 = 1e-12;

/// Facets whose unit normal has a smaller vertical component are vertical.
const VERTICAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Side {
    Upper,
    Lower,
}

impl Side {
    fn sign(self) -> f64 {
        match self {
            Side::Upper => 1.0,
            Side::Lower => -1.0,
        }
    }
}

/// Which construction stage produced a sample set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageTag {
    pub n: u32,
    pub m: u32,
}

/// Samples `(x_i, f(x_i))` of a function on [0,1]^d. The 2^d cube
/// corners must be among the points.
#[derive(Debug, Clone)]
pub struct SampledFunction {
    dim: usize,
    points: Vec<Vec<f64>>,
    values: Vec<f64>,
    tag: Option<StageTag>,
}

impl SampledFunction {
    pub fn new(points: Vec<Vec<f64>>, values: Vec<f64>) -> Result<Self> {
        let dim = points
            .first()
            .map(Vec::len)
            .ok_or_else(|| Error::Input("no samples".into()))?;
        if dim == 0 {
            return Err(Error::Input("zero-dimensional samples".into()));
        }
        if points.len() != values.len() {
            return Err(Error::Input(format!(
                "{} points but {} values",
                points.len(),
                values.len()
            )));
        }
        for p in &points {
            if p.len() != dim {
                return Err(Error::Input("mixed sample dimensions".into()));
            }
            if !geometry::in_unit_cube(p, 0.0) {
                return Err(Error::domain(p));
            }
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::Input(format!("non-finite sample value {v}")));
        }
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&a, &b| lex_cmp(&points[a], &points[b]));
        for w in order.windows(2) {
            if points[w[0]] == points[w[1]] {
                return Err(Error::Input(format!("duplicate sample point {:?}", points[w[0]])));
            }
        }
        for corner in 0..1usize << dim {
            let c: Vec<f64> = (0..dim).map(|k| ((corner >> k) & 1) as f64).collect();
            let found = order
                .binary_search_by(|&i| lex_cmp(&points[i], &c))
                .is_ok();
            if !found {
                return Err(Error::Input(format!("cube corner {c:?} missing from samples")));
            }
        }
        Ok(SampledFunction {
            dim,
            points,
            values,
            tag: None,
        })
    }

    /// Samples `f` at the given points.
    pub fn from_fn(points: Vec<Vec<f64>>, f: impl Fn(&[f64]) -> f64) -> Result<Self> {
        let values = points.iter().map(|p| f(p)).collect();
        SampledFunction::new(points, values)
    }

    pub fn with_tag(mut self, tag: StageTag) -> Self {
        self.tag = Some(tag);
        self
    }

    pub fn tag(&self) -> Option<StageTag> {
        self.tag
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Vec<f64>] {
        &self.points
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

fn lex_cmp(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.total_cmp(y) {
            std::cmp::Ordering::Equal => continue,
            o => return o,
        }
    }
    std::cmp::Ordering::Equal
}

/// Regular grid with `per_axis` points per axis (corners included).
pub fn grid_points(dim: usize, per_axis: usize) -> Vec<Vec<f64>> {
    assert!(per_axis >= 2);
    let total = per_axis.pow(dim as u32);
    (0..total)
        .map(|flat| {
            let mut rem = flat;
            (0..dim)
                .map(|_| {
                    let i = rem % per_axis;
                    rem /= per_axis;
                    i as f64 / (per_axis - 1) as f64
                })
                .collect()
        })
        .collect()
}

/// One linear piece of an envelope: the simplex spanned by the projected
/// sample points `vertices`, carrying `x -> gradient . x + offset`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Facet {
    pub vertices: Vec<usize>,
    pub gradient: Vec<f64>,
    pub offset: f64,
}

/// One side of the hull of the lifted samples.
#[derive(Debug, Clone)]
pub struct Envelope {
    side: Side,
    dim: usize,
    facets: Vec<Facet>,
    points: Vec<Vec<f64>>,
    values: Vec<f64>,
    frames: Vec<SimplexFrame>,
    locator: SimplexLocator,
}

/// JSON layout `{side, facets:[{vertices, gradient, offset}]}` plus the
/// vertex coordinates and values needed to evaluate it standalone.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EnvelopeDocument {
    pub side: Side,
    pub d: usize,
    pub facets: Vec<Facet>,
    pub points: Vec<Vec<f64>>,
    pub values: Vec<f64>,
}

pub fn compute_envelope(s: &SampledFunction, side: Side) -> Result<Envelope> {
    let simplices = match s.dim {
        1 => chain_1d(s, side),
        2 => facets_2d(s, side)?,
        d => return Err(Error::Unsupported(d)),
    };
    Envelope::from_simplices(side, s.dim, s.points.clone(), s.values.clone(), simplices)
}

/// Monotone chain over the sorted samples; collinear interior points are
/// dropped so each facet is a maximal segment.
fn chain_1d(s: &SampledFunction, side: Side) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&a, &b| s.points[a][0].total_cmp(&s.points[b][0]));
    let x = |i: usize| s.points[i][0];
    let y = |i: usize| side.sign() * s.values[i];
    let scale = s
        .values
        .iter()
        .fold(1.0f64, |acc, v| acc.max(v.abs()));
    let mut chain: Vec<usize> = Vec::with_capacity(order.len());
    for &i in &order {
        while chain.len() >= 2 {
            let a = chain[chain.len() - 2];
            let b = chain[chain.len() - 1];
            // b stays only if the chain turns clockwise (concave) at b.
            let cross = (x(b) - x(a)) * (y(i) - y(a)) - (y(b) - y(a)) * (x(i) - x(a));
            if cross >= -HULL_REL_EPS * scale * (x(i) - x(a)) {
                chain.pop();
            } else {
                break;
            }
        }
        chain.push(i);
    }
    chain.windows(2).map(|w| vec![w[0], w[1]]).collect()
}

fn facets_2d(s: &SampledFunction, side: Side) -> Result<Vec<Vec<usize>>> {
    let lifted: Vec<[f64; 3]> = s
        .points
        .iter()
        .zip(&s.values)
        .map(|(p, &v)| [p[0], p[1], v])
        .collect();
    let hull = match hull3::convex_hull(&lifted, HULL_REL_EPS) {
        Ok(h) => h,
        Err(hull3::HullError::Flat) => return Ok(flat_facets(s)),
    };
    let mut out = Vec::new();
    for f in hull.faces {
        let [a, b, c] = f.map(|i| lifted[i]);
        let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let w = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
        let n = [
            u[1] * w[2] - u[2] * w[1],
            u[2] * w[0] - u[0] * w[2],
            u[0] * w[1] - u[1] * w[0],
        ];
        let len = geometry::norm(&n);
        if len == 0.0 {
            continue;
        }
        let nz = n[2] / len;
        if side.sign() * nz > VERTICAL_TOL {
            out.push(f.to_vec());
        }
    }
    Ok(out)
}

/// All lifted samples coplanar: the envelope is that plane, split along
/// the cube diagonal.
fn flat_facets(s: &SampledFunction) -> Vec<Vec<usize>> {
    let corner = |c: [f64; 2]| {
        s.points
            .iter()
            .position(|p| p[0] == c[0] && p[1] == c[1])
            .expect("corners validated")
    };
    let c00 = corner([0.0, 0.0]);
    let c10 = corner([1.0, 0.0]);
    let c11 = corner([1.0, 1.0]);
    let c01 = corner([0.0, 1.0]);
    vec![vec![c00, c10, c11], vec![c00, c11, c01]]
}

impl Envelope {
    fn from_simplices(
        side: Side,
        dim: usize,
        points: Vec<Vec<f64>>,
        values: Vec<f64>,
        simplices: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let mut facets = Vec::with_capacity(simplices.len());
        let mut frames = Vec::with_capacity(simplices.len());
        let mut boxes = Vec::with_capacity(simplices.len());
        let mut area = 0.0;
        for s in simplices {
            let verts: Vec<&[f64]> = s.iter().map(|&i| points[i].as_slice()).collect();
            let Some(frame) = SimplexFrame::new(&verts) else {
                continue;
            };
            let vals: Vec<f64> = s.iter().map(|&i| values[i]).collect();
            let gradient = frame.gradient(&vals);
            let offset = vals[0] - geometry::dot(&gradient, verts[0]);
            let mut lo = vec![f64::INFINITY; dim];
            let mut hi = vec![f64::NEG_INFINITY; dim];
            for v in &verts {
                for k in 0..dim {
                    lo[k] = lo[k].min(v[k]);
                    hi[k] = hi[k].max(v[k]);
                }
            }
            area += simplex_volume(&verts);
            boxes.push((lo, hi));
            frames.push(frame);
            facets.push(Facet {
                vertices: s,
                gradient,
                offset,
            });
        }
        if (area - 1.0).abs() > 1e-9 {
            return Err(Error::Input(format!(
                "envelope facets cover volume {area}, expected 1"
            )));
        }
        let locator = SimplexLocator::build(dim, &boxes);
        Ok(Envelope {
            side,
            dim,
            facets,
            points,
            values,
            frames,
            locator,
        })
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn facets(&self) -> &[Facet] {
        &self.facets
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.points[i]
    }

    pub fn sample_value(&self, i: usize) -> f64 {
        self.values[i]
    }

    /// Number of distinct affine maps among the facets.
    pub fn affine_piece_count(&self, tol: f64) -> usize {
        let mut reps: Vec<&Facet> = Vec::new();
        for f in &self.facets {
            let same = reps.iter().any(|r| {
                (r.offset - f.offset).abs() <= tol
                    && r.gradient.iter().zip(&f.gradient).all(|(a, b)| (a - b).abs() <= tol)
            });
            if !same {
                reps.push(f);
            }
        }
        reps.len()
    }

    /// Sample indices that are facet vertices.
    pub fn vertex_indices(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.facets.iter().flat_map(|f| f.vertices.iter().copied()).collect();
        v.sort_unstable();
        v.dedup();
        v
    }

    /// Lowest-index facet whose projection contains `x`.
    pub fn locate(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.dim || !geometry::in_unit_cube(x, 1e-12) {
            return Err(Error::domain(x));
        }
        let mut scratch = vec![0.0; self.dim + 1];
        geometry::locate(&self.locator, &self.frames, x, 1e-12, &mut scratch)
            .ok_or_else(|| Error::domain(x))
    }

    pub fn eval(&self, x: &[f64]) -> Result<f64> {
        let f = self.locate(x)?;
        Ok(self.eval_in(f, x))
    }

    /// Value of facet `f`'s affine map at `x`, interpolated from its
    /// vertex samples so that it is exact at those vertices.
    pub fn eval_in(&self, f: usize, x: &[f64]) -> f64 {
        let facet = &self.facets[f];
        for &i in &facet.vertices {
            if self.points[i].as_slice() == x {
                return self.values[i];
            }
        }
        let bary = self.frames[f].barycentric(x);
        facet
            .vertices
            .iter()
            .zip(&bary)
            .map(|(&i, b)| b * self.values[i])
            .sum()
    }

    pub fn facet_barycentric(&self, f: usize, x: &[f64]) -> Vec<f64> {
        self.frames[f].barycentric(x)
    }

    /// Minimum (upper) or maximum (lower) of all facet affine maps at `x`.
    pub fn eval_extremal(&self, x: &[f64]) -> f64 {
        let vals = self
            .facets
            .iter()
            .map(|f| geometry::dot(&f.gradient, x) + f.offset);
        match self.side {
            Side::Upper => vals.fold(f64::INFINITY, f64::min),
            Side::Lower => vals.fold(f64::NEG_INFINITY, f64::max),
        }
    }

    pub fn to_document(&self) -> EnvelopeDocument {
        EnvelopeDocument {
            side: self.side,
            d: self.dim,
            facets: self.facets.clone(),
            points: self.points.clone(),
            values: self.values.clone(),
        }
    }

    pub fn from_document(doc: EnvelopeDocument) -> Result<Self> {
        let simplices = doc.facets.into_iter().map(|f| f.vertices).collect();
        Envelope::from_simplices(doc.side, doc.d, doc.points, doc.values, simplices)
    }
}

fn simplex_volume(verts: &[&[f64]]) -> f64 {
    let d = verts[0].len();
    let mut m = Vec::with_capacity(d * d);
    for v in &verts[1..] {
        for k in 0..d {
            m.push(v[k] - verts[0][k]);
        }
    }
    geometry::det_in_place(&mut m, d).abs() / geometry::d_factorial(d) as f64
}

impl Field for Envelope {
    fn dim(&self) -> usize {
        self.dim
    }

    fn value(&self, x: &[f64]) -> f64 {
        let clamped: Vec<f64> = x.iter().map(|c| c.clamp(0.0, 1.0)).collect();
        let f = self.locate(&clamped).expect("clamped point lies in the cube");
        self.eval_in(f, &clamped)
    }
}

pub fn eval_envelope(e: &Envelope, x: &[f64]) -> Result<f64> {
    e.eval(x)
}

/// Samples on which the envelope touches the function.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContactSet {
    pub indices: Vec<usize>,
    pub tol_contact: f64,
}

impl ContactSet {
    pub fn contains(&self, i: usize) -> bool {
        self.indices.binary_search(&i).is_ok()
    }

    pub fn points(&self, s: &SampledFunction) -> Vec<Vec<f64>> {
        self.indices.iter().map(|&i| s.points[i].clone()).collect()
    }
}

pub fn contact_set(s: &SampledFunction, e: &Envelope, tol_contact: f64) -> ContactSet {
    let indices = s
        .points
        .iter()
        .zip(&s.values)
        .enumerate()
        .filter(|(_, (p, &v))| {
            let phi = e.eval(p).expect("samples lie in the cube");
            (phi - v).abs() <= tol_contact
        })
        .map(|(i, _)| i)
        .collect();
    ContactSet {
        indices,
        tol_contact,
    }
}

/// Convex weights on at most d+1 contact samples reproducing a query point
/// and the envelope value there.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CaratheodoryWitness {
    pub query: Vec<f64>,
    pub support: Vec<usize>,
    pub points: Vec<Vec<f64>>,
    pub weights: Vec<f64>,
    pub envelope_value: f64,
}

impl CaratheodoryWitness {
    /// Largest violation among `sum p_i x_i = x0`, `sum p_i = 1` and
    /// `sum p_i f_i = envelope value`.
    pub fn defect(&self, values: &[f64]) -> f64 {
        let d = self.query.len();
        let mut worst: f64 = 0.0;
        for k in 0..d {
            let s: f64 = self.points.iter().zip(&self.weights).map(|(p, w)| w * p[k]).sum();
            worst = worst.max((s - self.query[k]).abs());
        }
        worst = worst.max((self.weights.iter().sum::<f64>() - 1.0).abs());
        let fv: f64 = self
            .support
            .iter()
            .zip(&self.weights)
            .map(|(&i, w)| w * values[i])
            .sum();
        worst.max((fv - self.envelope_value).abs())
    }
}

pub fn caratheodory_decompose(
    s: &SampledFunction,
    e: &Envelope,
    x0: &[f64],
) -> Result<CaratheodoryWitness> {
    let f = e.locate(x0)?;
    let bary = e.facet_barycentric(f, x0);
    let facet = &e.facets[f];
    let exact_vertex = facet.vertices.iter().position(|&i| e.points[i].as_slice() == x0);
    let mut support = Vec::new();
    let mut weights = Vec::new();
    match exact_vertex {
        Some(k) => {
            support.push(facet.vertices[k]);
            weights.push(1.0);
        }
        None => {
            for (&i, &b) in facet.vertices.iter().zip(&bary) {
                if b > 1e-15 {
                    support.push(i);
                    weights.push(b);
                }
            }
            let total: f64 = weights.iter().sum();
            for w in &mut weights {
                *w /= total;
            }
        }
    }
    Ok(CaratheodoryWitness {
        query: x0.to_vec(),
        points: support.iter().map(|&i| s.points[i].clone()).collect(),
        support,
        weights,
        envelope_value: e.eval_in(f, x0),
    })
}

/// Map from sorted (d-1)-face vertex tuples to the facets containing them.
pub(crate) fn face_incidence(e: &Envelope) -> HashMap<Vec<usize>, Vec<usize>> {
    let mut map: HashMap<Vec<usize>, Vec<usize>> = HashMap::new();
    for (fi, f) in e.facets.iter().enumerate() {
        for skip in 0..f.vertices.len() {
            let mut face: Vec<usize> = f
                .vertices
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != skip)
                .map(|(_, &v)| v)
                .collect();
            face.sort_unstable();
            map.entry(face).or_default().push(fi);
        }
    }
    map
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tent() -> SampledFunction {
        SampledFunction::new(vec![vec![0.0], vec![0.5], vec![1.0]], vec![0.0, 1.0, 0.0]).unwrap()
    }

    fn parabola() -> SampledFunction {
        SampledFunction::from_fn(grid_points(1, 11), |x| x[0] * x[0]).unwrap()
    }

    #[test]
    fn tent_envelopes() {
        let s = tent();
        let up = compute_envelope(&s, Side::Upper).unwrap();
        assert_eq!(up.facets().len(), 2);
        assert_eq!(up.eval(&[0.25]).unwrap(), 0.5);
        let lo = compute_envelope(&s, Side::Lower).unwrap();
        assert_eq!(lo.facets().len(), 1);
        assert_eq!(lo.eval(&[0.3]).unwrap(), 0.0);
        assert_eq!(contact_set(&s, &up, DEFAULT_TOL_CONTACT).indices, vec![0, 1, 2]);
    }

    #[test]
    fn parabola_envelopes() {
        let s = parabola();
        let up = compute_envelope(&s, Side::Upper).unwrap();
        assert_eq!(up.facets().len(), 1);
        assert!((up.eval(&[0.3]).unwrap() - 0.3).abs() < 1e-15);
        let lo = compute_envelope(&s, Side::Lower).unwrap();
        assert_eq!(lo.facets().len(), 10);
        let c = contact_set(&s, &up, DEFAULT_TOL_CONTACT);
        let pts: Vec<f64> = c.points(&s).iter().map(|p| p[0]).collect();
        assert_eq!(pts, vec![0.0, 1.0]);
        assert_eq!(contact_set(&s, &lo, DEFAULT_TOL_CONTACT).indices.len(), 11);
    }

    #[test]
    fn affine_2d_single_piece() {
        let s = SampledFunction::from_fn(grid_points(2, 5), |x| x[0] + x[1]).unwrap();
        for side in [Side::Upper, Side::Lower] {
            let e = compute_envelope(&s, side).unwrap();
            assert_eq!(e.affine_piece_count(1e-9), 1);
            assert!((e.eval(&[0.3, 0.45]).unwrap() - 0.75).abs() < 1e-12);
        }
    }

    #[test]
    fn paraboloid_upper_is_plane() {
        let s = SampledFunction::from_fn(grid_points(2, 6), |x| x[0] * x[0] + x[1] * x[1]).unwrap();
        let up = compute_envelope(&s, Side::Upper).unwrap();
        assert_eq!(up.affine_piece_count(1e-9), 1);
        assert!((up.eval(&[0.2, 0.7]).unwrap() - 0.9).abs() < 1e-12);
        let lo = compute_envelope(&s, Side::Lower).unwrap();
        assert!((lo.eval(&[0.2, 0.6]).unwrap() - 0.4).abs() < 1e-12);
    }

    #[test]
    fn witnesses() {
        let s = parabola();
        let up = compute_envelope(&s, Side::Upper).unwrap();
        let w = caratheodory_decompose(&s, &up, &[0.3]).unwrap();
        let xs: Vec<f64> = w.points.iter().map(|p| p[0]).collect();
        assert_eq!(xs, vec![0.0, 1.0]);
        assert!((w.weights[0] - 0.7).abs() < 1e-12 && (w.weights[1] - 0.3).abs() < 1e-12);
        let w = caratheodory_decompose(&s, &up, &[1.0]).unwrap();
        assert_eq!(w.weights, vec![1.0]);

        let s2 = SampledFunction::from_fn(grid_points(2, 4), |x| 2.0 * x[0] - x[1]).unwrap();
        let e = compute_envelope(&s2, Side::Upper).unwrap();
        let w = caratheodory_decompose(&s2, &e, &[0.4, 0.2]).unwrap();
        assert!(w.support.len() <= 3);
        assert!(w.defect(s2.values()) < 1e-12);
    }

    #[test]
    fn input_validation() {
        let err = SampledFunction::new(vec![vec![0.0], vec![0.5]], vec![0.0, 1.0]).unwrap_err();
        assert!(matches!(err, Error::Input(_)));
        let err = SampledFunction::new(
            vec![vec![0.0], vec![0.5], vec![0.5], vec![1.0]],
            vec![0.0, 1.0, 2.0, 0.0],
        )
        .unwrap_err();
        assert!(matches!(err, Error::Input(_)));
        let up = compute_envelope(&tent(), Side::Upper).unwrap();
        assert!(matches!(up.eval(&[1.5]), Err(Error::Domain { .. })));
    }

    #[test]
    fn document_round_trip() {
        let s = SampledFunction::from_fn(grid_points(2, 5), |x| (3.0 * x[0]).sin() * x[1]).unwrap();
        let e = compute_envelope(&s, Side::Lower).unwrap();
        let json = serde_json::to_string(&e.to_document()).unwrap();
        let back = Envelope::from_document(serde_json::from_str(&json).unwrap()).unwrap();
        for x in [[0.1, 0.9], [0.5, 0.5], [0.77, 0.01]] {
            assert_eq!(back.eval(&x).unwrap(), e.eval(&x).unwrap());
        }
    }
}
