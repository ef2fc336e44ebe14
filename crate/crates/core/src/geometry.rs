//! Small dense linear algebra and simplex point location shared by the
//! mesh and envelope modules. Dimensions here are tiny (at most 4), so
//! everything is plain row-major `Vec<f64>` with partial pivoting.

/// Determinant of a row-major `n x n` matrix. The input is consumed as scratch.
pub fn det_in_place(a: &mut [f64], n: usize) -> f64 {
    let mut det = 1.0;
    for col in 0..n {
        let mut piv = col;
        for row in col + 1..n {
            if a[row * n + col].abs() > a[piv * n + col].abs() {
                piv = row;
            }
        }
        let p = a[piv * n + col];
        if p == 0.0 {
            return 0.0;
        }
        if piv != col {
            for k in 0..n {
                a.swap(col * n + k, piv * n + k);
            }
            det = -det;
        }
        det *= p;
        for row in col + 1..n {
            let factor = a[row * n + col] / p;
            if factor != 0.0 {
                for k in col..n {
                    a[row * n + k] -= factor * a[col * n + k];
                }
            }
        }
    }
    det
}

/// Inverse of a row-major `n x n` matrix, `None` when singular.
pub fn invert(a: &[f64], n: usize) -> Option<Vec<f64>> {
    let mut m = a.to_vec();
    let mut inv = vec![0.0; n * n];
    for i in 0..n {
        inv[i * n + i] = 1.0;
    }
    for col in 0..n {
        let mut piv = col;
        for row in col + 1..n {
            if m[row * n + col].abs() > m[piv * n + col].abs() {
                piv = row;
            }
        }
        let p = m[piv * n + col];
        if p == 0.0 || !p.is_finite() {
            return None;
        }
        if piv != col {
            for k in 0..n {
                m.swap(col * n + k, piv * n + k);
                inv.swap(col * n + k, piv * n + k);
            }
        }
        for k in 0..n {
            m[col * n + k] /= p;
            inv[col * n + k] /= p;
        }
        for row in 0..n {
            if row == col {
                continue;
            }
            let factor = m[row * n + col];
            if factor != 0.0 {
                for k in 0..n {
                    m[row * n + k] -= factor * m[col * n + k];
                    inv[row * n + k] -= factor * inv[col * n + k];
                }
            }
        }
    }
    Some(inv)
}

/// Absolute determinant of the edge vectors `p_i - p_0` divided by the
/// product of their norms. Zero for degenerate point sets, one for an
/// orthogonal frame.
pub fn normalized_volume(points: &[&[f64]]) -> f64 {
    let n = points.len() - 1;
    debug_assert!(points.iter().all(|p| p.len() == n));
    let mut rows = Vec::with_capacity(n * n);
    let mut norm_prod = 1.0;
    for p in &points[1..] {
        let mut sq = 0.0;
        for k in 0..n {
            let v = p[k] - points[0][k];
            sq += v * v;
            rows.push(v);
        }
        norm_prod *= sq.sqrt();
    }
    if norm_prod == 0.0 {
        return 0.0;
    }
    (det_in_place(&mut rows, n) / norm_prod).abs()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn in_unit_cube(x: &[f64], tol: f64) -> bool {
    x.iter().all(|&c| c >= -tol && c <= 1.0 + tol && c.is_finite())
}

pub fn d_factorial(d: usize) -> usize {
    (1..=d).product()
}

/// Precomputed affine frame of a non-degenerate d-simplex, giving
/// barycentric coordinates with one mat-vec.
#[derive(Debug, Clone)]
pub struct SimplexFrame {
    origin: Vec<f64>,
    inv: Vec<f64>,
}

impl SimplexFrame {
    /// `None` when the simplex is degenerate.
    pub fn new(verts: &[&[f64]]) -> Option<Self> {
        let d = verts[0].len();
        debug_assert_eq!(verts.len(), d + 1);
        // Columns are the edge vectors v_i - v_0.
        let mut t = vec![0.0; d * d];
        for (i, v) in verts[1..].iter().enumerate() {
            for k in 0..d {
                t[k * d + i] = v[k] - verts[0][k];
            }
        }
        let inv = invert(&t, d)?;
        Some(SimplexFrame {
            origin: verts[0].to_vec(),
            inv,
        })
    }

    pub fn dim(&self) -> usize {
        self.origin.len()
    }

    pub fn barycentric_into(&self, x: &[f64], out: &mut [f64]) {
        let d = self.dim();
        let mut rest = 1.0;
        for i in 0..d {
            let mut s = 0.0;
            for k in 0..d {
                s += self.inv[i * d + k] * (x[k] - self.origin[k]);
            }
            out[i + 1] = s;
            rest -= s;
        }
        out[0] = rest;
    }

    pub fn barycentric(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim() + 1];
        self.barycentric_into(x, &mut out);
        out
    }

    /// Gradient of the affine interpolant of `values` at the simplex vertices.
    pub fn gradient(&self, values: &[f64]) -> Vec<f64> {
        let d = self.dim();
        // f(x) = f0 + sum_i (f_i - f0) * lambda_i(x), lambda = inv (x - v0)
        (0..d)
            .map(|k| {
                (0..d)
                    .map(|i| (values[i + 1] - values[0]) * self.inv[i * d + k])
                    .sum()
            })
            .collect()
    }
}

/// Uniform bucket grid over [0,1]^d mapping cells to the simplices whose
/// bounding boxes overlap them.
#[derive(Debug, Clone)]
pub struct SimplexLocator {
    dim: usize,
    res: usize,
    buckets: Vec<Vec<u32>>,
}

impl SimplexLocator {
    pub fn build(dim: usize, boxes: &[(Vec<f64>, Vec<f64>)]) -> Self {
        let target = (boxes.len().max(1) as f64).powf(1.0 / dim as f64).ceil() as usize;
        let res = target.clamp(1, if dim == 1 { 1 << 16 } else { 512 });
        let total = res.pow(dim as u32);
        let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); total];
        let mut lo_idx = vec![0usize; dim];
        let mut hi_idx = vec![0usize; dim];
        for (s, (lo, hi)) in boxes.iter().enumerate() {
            for k in 0..dim {
                let pad = 1e-9;
                lo_idx[k] = Self::cell_of(lo[k] - pad, res);
                hi_idx[k] = Self::cell_of(hi[k] + pad, res);
            }
            let mut cur = lo_idx.clone();
            loop {
                let flat = cur.iter().rev().fold(0usize, |acc, &c| acc * res + c);
                buckets[flat].push(s as u32);
                let mut k = 0;
                loop {
                    if k == dim {
                        break;
                    }
                    if cur[k] < hi_idx[k] {
                        cur[k] += 1;
                        break;
                    }
                    cur[k] = lo_idx[k];
                    k += 1;
                }
                if k == dim {
                    break;
                }
            }
        }
        SimplexLocator { dim, res, buckets }
    }

    fn cell_of(c: f64, res: usize) -> usize {
        let i = (c * res as f64).floor();
        if i < 0.0 {
            0
        } else {
            (i as usize).min(res - 1)
        }
    }

    /// Candidate simplices for `x`, in increasing index order.
    pub fn candidates(&self, x: &[f64]) -> &[u32] {
        let flat = (0..self.dim)
            .rev()
            .fold(0usize, |acc, k| acc * self.res + Self::cell_of(x[k], self.res));
        &self.buckets[flat]
    }
}

/// Returns the lowest-index simplex containing `x` (barycentric coordinates
/// all >= -tol), falling back to the candidate whose smallest coordinate is
/// largest when round-off puts `x` just outside every candidate.
pub fn locate(
    locator: &SimplexLocator,
    frames: &[SimplexFrame],
    x: &[f64],
    tol: f64,
    scratch: &mut [f64],
) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for &s in locator.candidates(x) {
        let s = s as usize;
        frames[s].barycentric_into(x, scratch);
        let min = scratch.iter().copied().fold(f64::INFINITY, f64::min);
        if min >= -tol {
            return Some(s);
        }
        if best.map_or(true, |(_, b)| min > b) {
            best = Some((s, min));
        }
    }
    best.map(|(s, _)| s)
}
