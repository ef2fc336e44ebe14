//! Quickhull in R^3 with conflict lists. Points within `eps` of a face
//! plane count as inside, so coplanar input produces coplanar (not
//! duplicated) faces and interior points are discarded.

use std::collections::HashMap;

use crate::geometry;

#[derive(Debug)]
pub(crate) enum HullError {
    /// All points lie within tolerance of a common plane.
    Flat,
}

#[derive(Debug, Clone)]
struct Face {
    v: [usize; 3],
    normal: [f64; 3],
    offset: f64,
    adj: [usize; 3],
    outside: Vec<usize>,
    alive: bool,
}

pub(crate) struct Hull {
    /// Outward-oriented (counter-clockwise seen from outside) triangles.
    pub faces: Vec<[usize; 3]>,
}

fn sub(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

fn plane(p: &[[f64; 3]], v: [usize; 3]) -> ([f64; 3], f64) {
    let n = cross(&sub(&p[v[1]], &p[v[0]]), &sub(&p[v[2]], &p[v[0]]));
    let len = geometry::norm(&n);
    let n = if len > 0.0 {
        [n[0] / len, n[1] / len, n[2] / len]
    } else {
        [0.0; 3]
    };
    let off = geometry::dot(&n, &p[v[0]]);
    (n, off)
}

struct Builder<'a> {
    pts: &'a [[f64; 3]],
    eps: f64,
    faces: Vec<Face>,
}

impl<'a> Builder<'a> {
    fn dist(&self, f: usize, p: usize) -> f64 {
        geometry::dot(&self.faces[f].normal, &self.pts[p]) - self.faces[f].offset
    }

    fn push_face(&mut self, v: [usize; 3]) -> usize {
        let (normal, offset) = plane(self.pts, v);
        self.faces.push(Face {
            v,
            normal,
            offset,
            adj: [usize::MAX; 3],
            outside: Vec::new(),
            alive: true,
        });
        self.faces.len() - 1
    }

    /// Hands each candidate point to the face it is farthest above.
    fn assign(&mut self, candidates: &[usize], targets: &[usize]) {
        for &p in candidates {
            let mut best = None;
            let mut best_d = self.eps;
            for &f in targets {
                let d = self.dist(f, p);
                if d > best_d {
                    best_d = d;
                    best = Some(f);
                }
            }
            if let Some(f) = best {
                self.faces[f].outside.push(p);
            }
        }
    }
}

pub(crate) fn convex_hull(pts: &[[f64; 3]], rel_eps: f64) -> Result<Hull, HullError> {
    let n = pts.len();
    if n < 4 {
        return Err(HullError::Flat);
    }
    let mut extent: f64 = 0.0;
    for k in 0..3 {
        let lo = pts.iter().map(|p| p[k]).fold(f64::INFINITY, f64::min);
        let hi = pts.iter().map(|p| p[k]).fold(f64::NEG_INFINITY, f64::max);
        extent = extent.max(hi - lo);
    }
    let eps = rel_eps * extent.max(f64::MIN_POSITIVE);

    // Initial tetrahedron from extreme points.
    let mut i0 = 0;
    let mut i1 = 0;
    for (i, p) in pts.iter().enumerate() {
        if p[0] < pts[i0][0] {
            i0 = i;
        }
        if p[0] > pts[i1][0] {
            i1 = i;
        }
    }
    if geometry::dist(&pts[i0], &pts[i1]) <= eps {
        return Err(HullError::Flat);
    }
    let axis = sub(&pts[i1], &pts[i0]);
    let axis_len = geometry::norm(&axis);
    let mut i2 = usize::MAX;
    let mut best = eps;
    for (i, p) in pts.iter().enumerate() {
        let d = geometry::norm(&cross(&axis, &sub(p, &pts[i0]))) / axis_len;
        if d > best {
            best = d;
            i2 = i;
        }
    }
    if i2 == usize::MAX {
        return Err(HullError::Flat);
    }
    let (n0, off0) = plane(pts, [i0, i1, i2]);
    let mut i3 = usize::MAX;
    let mut best = eps;
    for (i, p) in pts.iter().enumerate() {
        let d = (geometry::dot(&n0, p) - off0).abs();
        if d > best {
            best = d;
            i3 = i;
        }
    }
    if i3 == usize::MAX {
        return Err(HullError::Flat);
    }

    let mut b = Builder {
        pts,
        eps,
        faces: Vec::new(),
    };
    // Orient so the fourth point is below the base face.
    let base = if geometry::dot(&n0, &pts[i3]) - off0 > 0.0 {
        [i0, i2, i1]
    } else {
        [i0, i1, i2]
    };
    let [a, bb, c] = base;
    let f0 = b.push_face([a, bb, c]);
    let f1 = b.push_face([a, i3, bb]);
    let f2 = b.push_face([bb, i3, c]);
    let f3 = b.push_face([c, i3, a]);
    link_all(&mut b.faces, &[f0, f1, f2, f3]);

    let others: Vec<usize> = (0..n).filter(|&i| ![i0, i1, i2, i3].contains(&i)).collect();
    b.assign(&others, &[f0, f1, f2, f3]);

    let mut stack: Vec<usize> = vec![f0, f1, f2, f3];
    while let Some(f) = stack.pop() {
        if !b.faces[f].alive || b.faces[f].outside.is_empty() {
            continue;
        }
        // Farthest outside point.
        let (pos, p) = {
            let face = &b.faces[f];
            let mut bi = 0;
            let mut bd = f64::NEG_INFINITY;
            for (k, &q) in face.outside.iter().enumerate() {
                let d = b.dist(f, q);
                if d > bd {
                    bd = d;
                    bi = k;
                }
            }
            (bi, face.outside[bi])
        };
        b.faces[f].outside.swap_remove(pos);

        // Visible faces reachable from f.
        let mut visible = vec![f];
        let mut is_visible: HashMap<usize, bool> = HashMap::new();
        is_visible.insert(f, true);
        let mut k = 0;
        while k < visible.len() {
            let cur = visible[k];
            k += 1;
            for e in 0..3 {
                let nb = b.faces[cur].adj[e];
                if is_visible.contains_key(&nb) {
                    continue;
                }
                let vis = b.dist(nb, p) > eps;
                is_visible.insert(nb, vis);
                if vis {
                    visible.push(nb);
                }
            }
        }

        // Horizon edges (a, b) as seen from the visible side, with the
        // hidden neighbour across them.
        let mut horizon: Vec<(usize, usize, usize)> = Vec::new();
        for &vf in &visible {
            for e in 0..3 {
                let nb = b.faces[vf].adj[e];
                if !is_visible[&nb] {
                    let v = b.faces[vf].v;
                    horizon.push((v[e], v[(e + 1) % 3], nb));
                }
            }
        }

        let mut orphans: Vec<usize> = Vec::new();
        for &vf in &visible {
            b.faces[vf].alive = false;
            orphans.append(&mut b.faces[vf].outside);
        }

        let mut by_start: HashMap<usize, usize> = HashMap::with_capacity(horizon.len());
        let mut by_end: HashMap<usize, usize> = HashMap::with_capacity(horizon.len());
        let mut created = Vec::with_capacity(horizon.len());
        for &(ea, eb, hidden) in &horizon {
            let nf = b.push_face([ea, eb, p]);
            b.faces[nf].adj[0] = hidden;
            // Re-point the hidden face's edge (eb, ea) at the new face.
            let hv = b.faces[hidden].v;
            for e in 0..3 {
                if hv[e] == eb && hv[(e + 1) % 3] == ea {
                    b.faces[hidden].adj[e] = nf;
                }
            }
            by_start.insert(ea, nf);
            by_end.insert(eb, nf);
            created.push(nf);
        }
        for &nf in &created {
            let [ea, eb, _] = b.faces[nf].v;
            // edge (eb, p) meets the new face whose horizon edge starts at eb
            b.faces[nf].adj[1] = by_start[&eb];
            // edge (p, ea) meets the new face whose horizon edge ends at ea
            b.faces[nf].adj[2] = by_end[&ea];
        }
        b.assign(&orphans, &created);
        stack.extend(created.iter().copied());
    }

    let faces = b
        .faces
        .iter()
        .filter(|f| f.alive)
        .map(|f| f.v)
        .collect();
    Ok(Hull { faces })
}

fn link_all(faces: &mut [Face], ids: &[usize]) {
    let mut edges: HashMap<(usize, usize), usize> = HashMap::new();
    for &f in ids {
        let v = faces[f].v;
        for e in 0..3 {
            edges.insert((v[e], v[(e + 1) % 3]), f);
        }
    }
    for &f in ids {
        let v = faces[f].v;
        for e in 0..3 {
            faces[f].adj[e] = edges[&(v[(e + 1) % 3], v[e])];
        }
    }
}
