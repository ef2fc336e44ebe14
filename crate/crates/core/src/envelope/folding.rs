use serde::Serialize;

use super::{face_incidence, Envelope};
use crate::error::{Error, Result};
use crate::geometry;

/// An interior (d-1)-face where two envelope facets meet with different
/// gradients.
#[derive(Debug, Clone, Serialize)]
pub struct FoldFace {
    pub vertices: Vec<usize>,
    pub points: Vec<Vec<f64>>,
    pub facets: [usize; 2],
    /// `|grad_a - grad_b|`.
    pub gap: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FoldingRegion {
    pub dim: usize,
    pub faces: Vec<FoldFace>,
    pub jump_threshold: f64,
    /// Thickening radius of the region.
    pub radius: f64,
}

/// A cover of the `radius`-neighbourhood of the folding faces by balls of
/// one common diameter.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct BallCover {
    pub diameter: f64,
    pub count: f64,
    pub exponent: f64,
    /// `count * diameter^exponent`.
    pub sum: f64,
}

pub fn folding_region(e: &Envelope, jump_threshold: f64, r: f64) -> FoldingRegion {
    let mut faces = Vec::new();
    let mut incidence: Vec<(Vec<usize>, Vec<usize>)> = face_incidence(e).into_iter().collect();
    incidence.sort();
    for (verts, facets) in incidence {
        if facets.len() != 2 {
            continue;
        }
        let (a, b) = (&e.facets()[facets[0]], &e.facets()[facets[1]]);
        let diff: Vec<f64> = a.gradient.iter().zip(&b.gradient).map(|(x, y)| x - y).collect();
        let gap = geometry::norm(&diff);
        if gap >= jump_threshold {
            faces.push(FoldFace {
                points: verts.iter().map(|&i| e.point(i).to_vec()).collect(),
                vertices: verts,
                facets: [facets[0], facets[1]],
                gap,
            });
        }
    }
    FoldingRegion {
        dim: e.dim(),
        faces,
        jump_threshold,
        radius: r,
    }
}

impl FoldingRegion {
    pub fn is_empty(&self) -> bool {
        self.faces.is_empty()
    }

    pub fn min_gap(&self) -> Option<f64> {
        self.faces.iter().map(|f| f.gap).reduce(f64::min)
    }

    /// Total (d-1)-measure: point count in d=1, segment length in d=2.
    pub fn measure(&self) -> f64 {
        match self.dim {
            1 => self.faces.len() as f64,
            _ => self
                .faces
                .iter()
                .map(|f| geometry::dist(&f.points[0], &f.points[1]))
                .sum(),
        }
    }

    /// Points along every face, at most `spacing` apart.
    pub fn sample_points(&self, spacing: f64) -> Vec<Vec<f64>> {
        let mut out = Vec::new();
        for f in &self.faces {
            match self.dim {
                1 => out.push(f.points[0].clone()),
                _ => {
                    let (a, b) = (&f.points[0], &f.points[1]);
                    let n = (geometry::dist(a, b) / spacing).ceil().max(1.0) as usize;
                    for k in 0..=n {
                        let t = k as f64 / n as f64;
                        out.push(a.iter().zip(b).map(|(p, q)| p + t * (q - p)).collect());
                    }
                }
            }
        }
        out
    }

    pub fn distance_to(&self, x: &[f64]) -> f64 {
        self.faces
            .iter()
            .map(|f| match self.dim {
                1 => (x[0] - f.points[0][0]).abs(),
                _ => segment_distance(x, &f.points[0], &f.points[1]).0,
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Face whose relative interior passes within `tol` of `x`.
    pub fn face_containing(&self, x: &[f64], tol: f64) -> Option<usize> {
        self.faces.iter().position(|f| match self.dim {
            1 => (x[0] - f.points[0][0]).abs() <= tol,
            _ => {
                let (d, t) = segment_distance(x, &f.points[0], &f.points[1]);
                d <= tol && t > 0.0 && t < 1.0
            }
        })
    }

    /// Covers the `radius`-neighbourhood of the faces with balls of a common
    /// diameter below `diameter_cap`, halving the diameter until
    /// `sum |B|^{d-1+1/m} < 1/m`. Supported for d <= 2.
    pub fn ball_cover(&self, diameter_cap: f64, m: u32) -> Result<BallCover> {
        if self.dim > 2 {
            return Err(Error::Unsupported(self.dim));
        }
        let exponent = (self.dim as f64 - 1.0) + 1.0 / f64::from(m);
        let target = 1.0 / f64::from(m);
        let lengths: Vec<f64> = match self.dim {
            1 => vec![0.0; self.faces.len()],
            _ => self
                .faces
                .iter()
                .map(|f| geometry::dist(&f.points[0], &f.points[1]))
                .collect(),
        };
        let mut s = diameter_cap * (1.0 - 1e-12);
        let mut last = None;
        for _ in 0..2000 {
            if s <= 2.0 * self.radius {
                break;
            }
            // Ball radius s/2 centred on the face covers a slab of half-width
            // `radius` over a stretch of length `step` around its centre.
            let half = ((0.5 * s).powi(2) - self.radius.powi(2)).sqrt();
            let step = 2.0 * half * (1.0 - 1e-9);
            let count: f64 = lengths
                .iter()
                .map(|&l| if l == 0.0 { 1.0 } else { (l / step).ceil() + 1.0 })
                .sum();
            let cover = BallCover {
                diameter: s,
                count,
                exponent,
                sum: count * s.powf(exponent),
            };
            last = Some(cover);
            if cover.sum < target {
                return Ok(cover);
            }
            s *= 0.5;
        }
        Err(Error::Undefined(format!(
            "no ball cover with sum < 1/{m} (last attempt {last:?})"
        )))
    }
}

/// Distance from `x` to segment `ab` and the projection parameter.
fn segment_distance(x: &[f64], a: &[f64], b: &[f64]) -> (f64, f64) {
    let ab: Vec<f64> = a.iter().zip(b).map(|(p, q)| q - p).collect();
    let ax: Vec<f64> = a.iter().zip(x).map(|(p, q)| q - p).collect();
    let len2 = geometry::dot(&ab, &ab);
    let t = if len2 > 0.0 {
        (geometry::dot(&ax, &ab) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let closest: Vec<f64> = a.iter().zip(&ab).map(|(p, d)| p + t * d).collect();
    (geometry::dist(x, &closest), t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::envelope::{compute_envelope, grid_points, SampledFunction, Side};

    #[test]
    fn tent_has_one_fold() {
        let s = SampledFunction::new(vec![vec![0.0], vec![0.5], vec![1.0]], vec![0.0, 1.0, 0.0])
            .unwrap();
        let e = compute_envelope(&s, Side::Upper).unwrap();
        let fr = folding_region(&e, 1.0, 0.01);
        assert_eq!(fr.faces.len(), 1);
        assert_eq!(fr.faces[0].points, vec![vec![0.5]]);
        assert_eq!(fr.faces[0].gap, 4.0);
        let cover = fr.ball_cover(0.5, 2).unwrap();
        assert!(cover.sum < 0.5 && cover.diameter < 0.5 && cover.diameter > 0.02);
    }

    #[test]
    fn affine_has_no_fold() {
        let s = SampledFunction::from_fn(grid_points(2, 4), |x| 0.3 * x[0] - x[1]).unwrap();
        let e = compute_envelope(&s, Side::Upper).unwrap();
        assert!(folding_region(&e, 1e-9, 0.0).is_empty());
    }

    #[test]
    fn segment_cover_sum_shrinks() {
        let s = SampledFunction::new(
            vec![vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 1.0]],
            vec![0.0, 0.0, 0.0, 1.0],
        )
        .unwrap();
        let e = compute_envelope(&s, Side::Upper).unwrap();
        let fr = folding_region(&e, 1e-9, 1e-6);
        assert_eq!(fr.faces.len(), 1);
        assert!((fr.measure() - 2f64.sqrt()).abs() < 1e-12);
        let cover = fr.ball_cover(1.0 / 4.0, 3).unwrap();
        assert!(cover.sum < 1.0 / 3.0);
        assert!(cover.diameter < 0.25);
    }
}
