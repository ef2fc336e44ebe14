//! Stage-level checks of the envelope regularity claims and the report
//! that collects them.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::construction::{
    build_boundary_stage, build_smooth_stage, build_stage, sub_seed, BoundaryStage, SmoothStage,
    Stage, StageConfig,
};
use crate::envelope::Envelope;
use crate::error::{Error, Result};
use crate::holder::{
    box_dimension, default_bin_edges, default_scales, dyadic_scales, fold_exponent_check,
    fold_probe_points, pointwise_holder, spectrum, BoundaryProbe, DimensionEstimate, HolderGrid,
    SpectrumEstimate,
};
use crate::mesh::CubeFace;

/// Fold checks whose witness distance `(gap/2)^m` falls below this cannot
/// be resolved in double precision.
pub const FOLD_RESOLUTION: f64 = 1e-13;

pub fn contact_scales() -> Vec<f64> {
    dyadic_scales(3, 8)
}

/// Largest distance from an upper contact sample to the mesh vertices.
pub fn contact_distance(stage: &Stage) -> f64 {
    stage
        .contact
        .indices
        .iter()
        .map(|&i| stage.distance_to_vertices(&stage.samples.points()[i]))
        .fold(0.0, f64::max)
}

pub fn contact_dimension(stage: &Stage) -> Result<DimensionEstimate> {
    box_dimension(&stage.contact.points(&stage.samples), &contact_scales())
}

/// Fold faces are counted at `2^-5..2^-10`, fine enough that clusters of
/// short faces near the corners are resolved.
pub fn fold_scales() -> Vec<f64> {
    dyadic_scales(5, 10)
}

/// Box dimension of the fold faces, sampled below the finest scale;
/// `None` when the envelope has no folds.
pub fn folding_dimension(stage: &Stage) -> Result<Option<DimensionEstimate>> {
    if stage.folding.is_empty() {
        return Ok(None);
    }
    let pts = stage.folding.sample_points(0.5f64.powi(12));
    box_dimension(&pts, &fold_scales()).map(Some)
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct FoldSummary {
    pub points: usize,
    pub verified: usize,
    /// Points whose witness scale is below `FOLD_RESOLUTION`.
    pub unresolvable: usize,
}

/// Runs `fold_exponent_check` at the fold probe points of a stage.
pub fn fold_summary(stage: &Stage) -> Result<FoldSummary> {
    let m = stage.config.m;
    let mut s = FoldSummary {
        points: 0,
        verified: 0,
        unresolvable: 0,
    };
    for x in fold_probe_points(&stage.folding, 3) {
        s.points += 1;
        let face = stage
            .folding
            .face_containing(&x, 1e-9)
            .ok_or_else(|| Error::domain(&x))?;
        if (0.5 * stage.folding.faces[face].gap).powi(m as i32) < FOLD_RESOLUTION {
            s.unresolvable += 1;
        } else if fold_exponent_check(&stage.envelope, &stage.folding, &x, m)? {
            s.verified += 1;
        }
    }
    Ok(s)
}

pub fn holder_grid(dim: usize) -> HolderGrid {
    HolderGrid {
        dim,
        intervals: if dim == 1 { 1024 } else { 128 },
    }
}

/// Spectrum of an upper envelope with affine removal.
pub fn envelope_spectrum(e: &Envelope) -> Result<SpectrumEstimate> {
    let grid = holder_grid(e.dim());
    spectrum(e, &grid, &default_scales(e.dim()), 1, &default_bin_edges()).map(|(s, _)| s)
}

/// `probes` points at distance more than `h` from the boundary: evenly
/// spaced in d=1, seeded uniform otherwise.
pub fn slope_probes(dim: usize, h: f64, probes: usize, seed: u64) -> Vec<Vec<f64>> {
    let lo = h * (1.0 + 1e-9);
    let hi = 1.0 - lo;
    if dim == 1 {
        return (0..probes)
            .map(|i| vec![lo + (hi - lo) * (i as f64 + 0.5) / probes as f64])
            .collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..probes)
        .map(|_| (0..dim).map(|_| rng.gen_range(lo..hi)).collect())
        .collect()
}

/// Largest slope gap over all axes.
pub fn smooth_slope_gap(stage: &SmoothStage, probes: usize, seed: u64) -> Result<f64> {
    let pts = slope_probes(stage.envelope.dim(), stage.step, probes, seed);
    let mut gap = f64::NEG_INFINITY;
    for j in 0..stage.envelope.dim() {
        gap = gap.max(crate::holder::slope_gap_check(&stage.envelope, j, &pts, stage.step)?);
    }
    Ok(gap)
}

/// Boundary point used for boundary probes: the origin of `F_{0,0}` in d=1,
/// its centre in d=2.
pub fn boundary_point(dim: usize) -> Vec<f64> {
    let mut x = vec![0.5; dim];
    x[0] = 0.0;
    x
}

pub fn boundary_probe(stage: &BoundaryStage) -> Result<BoundaryProbe> {
    let x0 = boundary_point(stage.samples.dim());
    crate::holder::boundary_derivative_probe(&stage.envelope, CubeFace::new(0, 0), &x0, 3, 12, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Pass,
    Fail,
    NotChecked,
}

#[derive(Debug, Clone, Serialize)]
pub struct StageDetail {
    pub n: u32,
    pub m: u32,
    pub measured: Option<f64>,
    pub expected: String,
    pub pass: bool,
    pub note: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClaimEntry {
    pub claim: String,
    pub bullet: String,
    pub status: Status,
    /// Worst measurement over stages.
    pub measured: Option<f64>,
    pub expected: String,
    pub details: Vec<StageDetail>,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub d: usize,
    pub seed: u64,
    pub stages: Vec<[u32; 2]>,
    pub entries: Vec<ClaimEntry>,
    pub all_pass: bool,
}

#[derive(Debug, Clone)]
pub struct VerifyConfig {
    pub d: usize,
    pub stages: Vec<(u32, u32)>,
    pub seed: u64,
    pub slope_probes: usize,
    pub boundary_levels: u32,
}

impl VerifyConfig {
    pub fn new(d: usize, stages: Vec<(u32, u32)>, seed: u64) -> Self {
        VerifyConfig {
            d,
            stages,
            seed,
            slope_probes: 200,
            boundary_levels: 12,
        }
    }
}

struct StageRun {
    n: u32,
    m: u32,
    stage: Stage,
    smooth: SmoothStage,
    boundary: BoundaryStage,
}

fn entry(
    claim: &str,
    bullet: &str,
    expected: &str,
    details: Vec<StageDetail>,
    worst: impl Fn(&[StageDetail]) -> Option<f64>,
) -> ClaimEntry {
    let pass = !details.is_empty() && details.iter().all(|d| d.pass);
    ClaimEntry {
        claim: claim.into(),
        bullet: bullet.into(),
        status: if pass { Status::Pass } else { Status::Fail },
        measured: worst(&details),
        expected: expected.into(),
        details,
    }
}

fn max_of(d: &[StageDetail]) -> Option<f64> {
    d.iter().filter_map(|s| s.measured).reduce(f64::max)
}

fn min_of(d: &[StageDetail]) -> Option<f64> {
    d.iter().filter_map(|s| s.measured).reduce(f64::min)
}

pub fn run_verification(cfg: &VerifyConfig) -> Result<VerificationReport> {
    if cfg.stages.is_empty() {
        return Err(Error::Input("stage list is empty".into()));
    }
    if !(1..=2).contains(&cfg.d) {
        return Err(Error::Unsupported(cfg.d));
    }
    let mut runs = Vec::new();
    for (k, &(n, m)) in cfg.stages.iter().enumerate() {
        let seed = sub_seed(cfg.seed, 100 + k as u64);
        runs.push(StageRun {
            n,
            m,
            stage: build_stage(&StageConfig::new(cfg.d, n, m, seed))?,
            smooth: build_smooth_stage(n, m, cfg.d, seed)?,
            boundary: build_boundary_stage(n, m, cfg.d, CubeFace::new(0, 0), cfg.boundary_levels)?,
        });
    }
    let d = cfg.d;
    let mut entries = Vec::new();

    let mut det = Vec::new();
    for r in &runs {
        let gap = smooth_slope_gap(&r.smooth, cfg.slope_probes, sub_seed(cfg.seed, 7))?;
        let bound = 5.0 / f64::from(r.m) + 0.05;
        det.push(StageDetail {
            n: r.n,
            m: r.m,
            measured: Some(gap),
            expected: format!("<= {bound}"),
            pass: gap <= bound,
            note: format!("step {}, noise {}", r.smooth.step, r.smooth.delta),
        });
    }
    entries.push(entry(
        "c1-interior",
        "envelope is continuously differentiable on the open cube",
        "slope gap <= 5/m + 0.05",
        det,
        max_of,
    ));

    let mut det = Vec::new();
    for r in &runs {
        let x0 = boundary_point(d);
        let est = pointwise_holder(&r.boundary.envelope, &x0, &default_scales(d), 0)?;
        let bound = 1.0 / f64::from(r.m) + 0.1;
        det.push(StageDetail {
            n: r.n,
            m: r.m,
            measured: est.h_hat,
            expected: format!("<= {bound}"),
            pass: est.h_hat.is_some_and(|h| h <= bound),
            note: "boundary family, upper envelope".into(),
        });
    }
    entries.push(entry(
        "boundary-exponent-zero",
        "Hölder exponent vanishes on the cube boundary",
        "h_hat <= 1/m + 0.1 at the face",
        det,
        max_of,
    ));

    let mut det = Vec::new();
    for r in &runs {
        let folds = fold_summary(&r.stage)?;
        let note = format!(
            "{} fold points, {} verified, {} below double-precision resolution",
            folds.points, folds.verified, folds.unresolvable
        );
        let checked = folds.verified + folds.unresolvable == folds.points;
        match folding_dimension(&r.stage)? {
            Some(dim) => {
                let v = dim.value.unwrap_or(f64::NAN);
                det.push(StageDetail {
                    n: r.n,
                    m: r.m,
                    measured: Some(v),
                    expected: format!("{} +/- 0.2", d - 1),
                    pass: (v - (d as f64 - 1.0)).abs() <= 0.2 && checked,
                    note,
                });
            }
            None => det.push(StageDetail {
                n: r.n,
                m: r.m,
                measured: None,
                expected: format!("{} +/- 0.2", d - 1),
                pass: true,
                note: "envelope is affine, no folds".into(),
            }),
        }
    }
    entries.push(entry(
        "lipschitz-level-dimension",
        "dimension of the exponent-1 level set is d-1",
        "fold box dimension d-1 +/- 0.2, fold exponent bound at every fold point",
        det,
        |d| d.iter().filter_map(|s| s.measured).reduce(f64::max),
    ));

    let mut det = Vec::new();
    for r in &runs {
        let spec = envelope_spectrum(&r.stage.envelope)?;
        let frac = spec.cap_fraction();
        let dim = spec.bin("CAP").and_then(|b| b.dimension.value);
        det.push(StageDetail {
            n: r.n,
            m: r.m,
            measured: dim,
            expected: format!("{d} +/- 0.1, CAP fraction >= 0.9"),
            pass: frac >= 0.9 && dim.is_some_and(|v| (v - d as f64).abs() <= 0.1),
            note: format!("CAP fraction {frac}"),
        });
    }
    entries.push(entry(
        "smooth-level-dimension",
        "dimension of the exponent-infinity level set is d",
        "CAP box dimension d +/- 0.1",
        det,
        min_of,
    ));

    entries.push(ClaimEntry {
        claim: "other-levels-empty".into(),
        bullet: "level sets for exponents outside {0, 1, infinity} are empty".into(),
        status: Status::NotChecked,
        measured: None,
        expected: "not-checked (out of scope)".into(),
        details: Vec::new(),
    });

    let mut det = Vec::new();
    for r in &runs {
        let p = boundary_probe(&r.boundary)?;
        det.push(StageDetail {
            n: r.n,
            m: r.m,
            measured: Some(p.exponent),
            expected: "blow-up".into(),
            pass: p.blow_up,
            note: format!(
                "quotients {} -> {}, strictly increasing: {}",
                p.quotients[0],
                p.quotients[p.quotients.len() - 1],
                p.strictly_increasing
            ),
        });
    }
    entries.push(entry(
        "boundary-derivative-infinite",
        "one-sided derivatives are infinite on the faces",
        "inward quotients increase without bound",
        det,
        max_of,
    ));

    let mut det = Vec::new();
    for r in &runs {
        let dim = contact_dimension(&r.stage)?;
        let cap = if d == 1 { 0.2 } else { 0.3 };
        let dist = contact_distance(&r.stage);
        let v = dim.value.unwrap_or(f64::NAN);
        det.push(StageDetail {
            n: r.n,
            m: r.m,
            measured: Some(v),
            expected: format!("<= {cap}, contacts within r of V"),
            pass: v <= cap && dist <= r.stage.params.r && r.stage.params.all_satisfied(),
            note: format!(
                "{} contacts, max distance to V {dist}, r {}",
                r.stage.contact.indices.len(),
                r.stage.params.r
            ),
        });
    }
    entries.push(entry(
        "contact-set-dimension-zero",
        "contact set has dimension 0",
        "contact box dimension <= 0.2 (d=1) or 0.3 (d=2)",
        det,
        max_of,
    ));

    let all_pass = entries.iter().all(|e| e.status != Status::Fail);
    Ok(VerificationReport {
        d,
        seed: cfg.seed,
        stages: cfg.stages.iter().map(|&(n, m)| [n, m]).collect(),
        entries,
        all_pass,
    })
}

impl VerificationReport {
    /// Plain-text table, one line per claim.
    pub fn table(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{:<30} {:<12} {:<24} expected", "claim", "status", "measured");
        for e in &self.entries {
            let status = match e.status {
                Status::Pass => "pass",
                Status::Fail => "FAIL",
                Status::NotChecked => "not-checked",
            };
            let measured = e.measured.map_or("-".to_string(), |v| format!("{v:.6}"));
            let _ = writeln!(out, "{:<30} {:<12} {:<24} {}", e.claim, status, measured, e.expected);
        }
        out
    }
}
