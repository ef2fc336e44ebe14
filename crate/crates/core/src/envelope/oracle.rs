use super::{SampledFunction, Side};
use crate::error::{Error, Result};
use crate::geometry;

/// Extremal value of `sum l_j f_j` over convex weights with `sum l_j x_j = x0`,
/// found by enumerating every (d+1)-subset of samples whose simplex contains
/// `x0`. Shares no code with the hull path; cost is O(n^{d+1}) per query.
pub fn envelope_bruteforce(s: &SampledFunction, x0: &[f64], side: Side) -> Result<f64> {
    if x0.len() != s.dim() || !geometry::in_unit_cube(x0, 0.0) {
        return Err(Error::domain(x0));
    }
    let better = |cand: f64, best: f64| match side {
        Side::Upper => cand > best,
        Side::Lower => cand < best,
    };
    let mut best = match side {
        Side::Upper => f64::NEG_INFINITY,
        Side::Lower => f64::INFINITY,
    };
    let pts = s.points();
    let vals = s.values();
    match s.dim() {
        1 => {
            let x = x0[0];
            for i in 0..pts.len() {
                let xi = pts[i][0];
                if xi == x && better(vals[i], best) {
                    best = vals[i];
                }
                if xi > x {
                    continue;
                }
                for j in 0..pts.len() {
                    let xj = pts[j][0];
                    if xj <= x || xj == xi {
                        continue;
                    }
                    let t = (x - xi) / (xj - xi);
                    let v = (1.0 - t) * vals[i] + t * vals[j];
                    if better(v, best) {
                        best = v;
                    }
                }
            }
        }
        2 => {
            let n = pts.len();
            let rel: Vec<[f64; 2]> = pts.iter().map(|p| [p[0] - x0[0], p[1] - x0[1]]).collect();
            // cross[i][j] = rel_i x rel_j; x0 lies in triangle ijk iff the
            // three cyclic crosses share a sign.
            let mut cross = vec![0.0; n * n];
            for i in 0..n {
                for j in 0..n {
                    cross[i * n + j] = rel[i][0] * rel[j][1] - rel[i][1] * rel[j][0];
                }
            }
            for i in 0..n {
                for j in i + 1..n {
                    let cij = cross[i * n + j];
                    for k in j + 1..n {
                        let cjk = cross[j * n + k];
                        let cki = cross[k * n + i];
                        let area2 = cij + cjk + cki;
                        if area2 == 0.0 {
                            continue;
                        }
                        let inside = if area2 > 0.0 {
                            cij >= 0.0 && cjk >= 0.0 && cki >= 0.0
                        } else {
                            cij <= 0.0 && cjk <= 0.0 && cki <= 0.0
                        };
                        if !inside {
                            continue;
                        }
                        // Barycentric weight of vertex i is the sub-area opposite it.
                        let v = (cjk * vals[i] + cki * vals[j] + cij * vals[k]) / area2;
                        if better(v, best) {
                            best = v;
                        }
                    }
                }
            }
        }
        d => return Err(Error::Unsupported(d)),
    }
    Ok(best)
}
