//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

use std::path::Path;
use std::process::{Command, ExitCode};
use std::time::Instant;

use envelope_lab::construction::{build_boundary_stage, build_f_nm, build_smooth_stage, Stage};
use envelope_lab::envelope::{
    caratheodory_decompose, compute_envelope, contact_set, envelope_bruteforce, grid_points, Envelope,
    SampledFunction, Side,
};
use envelope_lab::holder::{box_dimension, dyadic_scales, pointwise_holder};
use envelope_lab::mesh::CubeFace;
use envelope_lab::verify::{
    boundary_probe, contact_dimension, contact_distance, envelope_spectrum, fold_summary,
    folding_dimension, smooth_slope_gap,
};
use envelope_lab::FnField;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

const TOL: f64 = 1e-9;
const STAGES: [(u32, u32); 3] = [(1, 2), (1, 3), (2, 3)];
const SEED: u64 = 2024;

fn ensure(ok: bool, msg: impl Into<String>) -> Result<(), String> {
    if ok {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn random_instances() -> Vec<SampledFunction> {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED);
    let mut out = Vec::new();
    for _ in 0..50 {
        let n = rng.gen_range(2..=200);
        let mut pts = vec![vec![0.0], vec![1.0]];
        while pts.len() < n {
            let x: f64 = rng.gen();
            if !pts.iter().any(|p| p[0] == x) {
                pts.push(vec![x]);
            }
        }
        let vals = (0..pts.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        out.push(SampledFunction::new(pts, vals).unwrap());
    }
    for _ in 0..10 {
        let pts = grid_points(2, rng.gen_range(2..=15));
        let vals = (0..pts.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        out.push(SampledFunction::new(pts, vals).unwrap());
    }
    out
}

fn queries(rng: &mut ChaCha8Rng, dim: usize, count: usize) -> Vec<Vec<f64>> {
    (0..count).map(|_| (0..dim).map(|_| rng.gen()).collect()).collect()
}

fn both_sides(s: &SampledFunction) -> Result<[Envelope; 2], String> {
    Ok([
        compute_envelope(s, Side::Upper).map_err(err)?,
        compute_envelope(s, Side::Lower).map_err(err)?,
    ])
}

fn c1(instances: &[SampledFunction]) -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 1);
    let mut worst: f64 = 0.0;
    for s in instances {
        let envs = both_sides(s)?;
        for x in queries(&mut rng, s.dim(), 100) {
            for e in &envs {
                let fast = e.eval(&x).map_err(err)?;
                let slow = envelope_bruteforce(s, &x, e.side()).map_err(err)?;
                worst = worst.max((fast - slow).abs());
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(worst <= TOL, format!("max deviation {worst:.3e}"))?;
    ensure(secs < 30.0, format!("took {secs:.1} s"))?;
    Ok(format!("max deviation {worst:.3e} over {} instances in {secs:.2} s", instances.len()))
}

fn c2(instances: &[SampledFunction]) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 2);
    let mut worst: f64 = 0.0;
    for s in instances {
        for e in both_sides(s)? {
            let sign = if e.side() == Side::Upper { 1.0 } else { -1.0 };
            for (p, &v) in s.points().iter().zip(s.values()) {
                worst = worst.max(sign * (v - e.eval(p).map_err(err)?));
            }
            for _ in 0..100 {
                let x = queries(&mut rng, s.dim(), 2);
                let t: f64 = rng.gen();
                let mid: Vec<f64> = x[0].iter().zip(&x[1]).map(|(a, b)| t * a + (1.0 - t) * b).collect();
                let chord = t * e.eval(&x[0]).map_err(err)? + (1.0 - t) * e.eval(&x[1]).map_err(err)?;
                worst = worst.max(sign * (chord - e.eval(&mid).map_err(err)?));
            }
            let resampled =
                SampledFunction::new(s.points().to_vec(), e.vertex_values(s.points())?).map_err(err)?;
            let again = compute_envelope(&resampled, e.side()).map_err(err)?;
            for x in queries(&mut rng, s.dim(), 100) {
                worst = worst.max((again.eval(&x).map_err(err)? - e.eval(&x).map_err(err)?).abs());
            }
        }
    }
    ensure(worst <= TOL, format!("worst violation {worst:.3e}"))?;
    Ok(format!("worst concavity/sandwich/idempotence violation {worst:.3e}"))
}

trait Values {
    fn vertex_values(&self, points: &[Vec<f64>]) -> Result<Vec<f64>, String>;
}

impl Values for Envelope {
    fn vertex_values(&self, points: &[Vec<f64>]) -> Result<Vec<f64>, String> {
        points.iter().map(|p| self.eval(p).map_err(err)).collect()
    }
}

fn c3(instances: &[SampledFunction]) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(SEED + 3);
    let mut worst: f64 = 0.0;
    let mut outside = 0;
    for s in instances {
        for e in both_sides(s)? {
            let contact = contact_set(s, &e, 1e-8);
            for x in queries(&mut rng, s.dim(), 100) {
                let w = caratheodory_decompose(s, &e, &x).map_err(err)?;
                worst = worst.max(w.defect(s.values()));
                outside += w.support.iter().filter(|&&i| !contact.contains(i)).count();
            }
        }
    }
    ensure(worst <= TOL, format!("witness defect {worst:.3e}"))?;
    ensure(outside == 0, format!("{outside} support points outside the contact set"))?;
    Ok(format!("witness defect {worst:.3e}, all supports in contact set"))
}

fn c4(stages: &[Stage]) -> Outcome {
    let mut lines = Vec::new();
    for s in stages {
        let tag = format!("d={} ({},{})", s.config.dim, s.config.n, s.config.m);
        let dist = contact_distance(s);
        let p = &s.params;
        let m = f64::from(p.m);
        let cover = p.vertex_count as f64 * p.r.powf(1.0 / m);
        ensure(dist <= p.r, format!("{tag}: contact distance {dist:.3e} > r = {:.3e}", p.r))?;
        ensure(cover < 1.0 / m, format!("{tag}: #V r^(1/m) = {cover:.3e}"))?;
        ensure(p.all_satisfied(), format!("{tag}: {:?} violated", p.first_violation()))?;
        lines.push(format!("{tag} dist/r={:.2}", dist / p.r));
    }
    Ok(lines.join(", "))
}

fn c5(stages: &[Stage]) -> Outcome {
    let mut lines = Vec::new();
    for s in stages {
        let bound = if s.config.dim == 1 { 0.2 } else { 0.3 };
        let dim = contact_dimension(s).map_err(err)?.value.unwrap_or(0.0);
        let tag = format!("d={} ({},{})", s.config.dim, s.config.n, s.config.m);
        ensure(dim <= bound, format!("{tag}: contact dimension {dim:.3} > {bound}"))?;
        lines.push(format!("{tag} {dim:.3}"));
    }
    Ok(lines.join(", "))
}

fn c6(stages: &[Stage]) -> Outcome {
    let start = Instant::now();
    let s = stages
        .iter()
        .find(|s| s.config.dim == 2 && (s.config.n, s.config.m) == (1, 3))
        .ok_or("stage missing")?;
    let dim = folding_dimension(s)
        .map_err(err)?
        .and_then(|d| d.value)
        .ok_or("no folding region")?;
    let secs = start.elapsed().as_secs_f64();
    ensure((dim - 1.0).abs() <= 0.2, format!("fold dimension {dim:.3}"))?;
    ensure(secs < 60.0, format!("took {secs:.1} s"))?;
    Ok(format!("fold dimension {dim:.3} in {secs:.2} s"))
}

fn c7(stages: &[Stage]) -> Outcome {
    let mut lines = Vec::new();
    for s in stages.iter().filter(|s| s.config.m >= 3) {
        let d = s.config.dim as f64;
        let spec = envelope_spectrum(&s.envelope).map_err(err)?;
        let frac = spec.cap_fraction();
        let dim = spec.bin("CAP").and_then(|b| b.dimension.value).ok_or("CAP bin empty")?;
        let tag = format!("d={} ({},{})", s.config.dim, s.config.n, s.config.m);
        ensure(frac >= 0.9, format!("{tag}: CAP fraction {frac:.3}"))?;
        ensure((dim - d).abs() <= 0.1, format!("{tag}: CAP dimension {dim:.3}"))?;
        lines.push(format!("{tag} frac {frac:.3} dim {dim:.3}"));
    }
    Ok(lines.join(", "))
}

fn c8() -> Outcome {
    let s = build_smooth_stage(1, 10, 1, SEED).map_err(err)?;
    let gap = smooth_slope_gap(&s, 200, SEED).map_err(err)?;
    ensure(gap <= 0.55, format!("slope gap {gap:.4}"))?;
    Ok(format!("slope gap {gap:.4} <= 0.55"))
}

fn c9() -> Outcome {
    let b = build_boundary_stage(1, 4, 1, CubeFace::new(0, 0), 12).map_err(err)?;
    let p = boundary_probe(&b).map_err(err)?;
    ensure((p.exponent + 0.75).abs() <= 0.05, format!("exponent {:.4}", p.exponent))?;
    ensure(p.strictly_increasing, "quotients not strictly increasing")?;
    Ok(format!("exponent {:.4}, {} quotients strictly increasing", p.exponent, p.quotients.len()))
}

fn c10(stages: &[Stage]) -> Outcome {
    let mut total = 0;
    for s in stages {
        let f = fold_summary(s).map_err(err)?;
        let tag = format!("d={} ({},{})", s.config.dim, s.config.n, s.config.m);
        ensure(
            f.verified == f.points,
            format!("{tag}: {}/{} verified, {} unresolvable", f.verified, f.points, f.unresolvable),
        )?;
        total += f.points;
    }
    Ok(format!("{total} fold points verified"))
}

fn c11() -> Outcome {
    let mut lines = Vec::new();
    for h in [0.3, 0.5, 0.7, 1.0, 1.5] {
        let c = 0.4137;
        let f = FnField::new(1, move |x: &[f64]| (x[0] - c).abs().powf(h));
        let order = u8::from(h > 1.0);
        let est = pointwise_holder(&f, &[c], &dyadic_scales(3, 12), order).map_err(err)?;
        let got = est.h_hat.ok_or(format!("h = {h}: estimate is CAP"))?;
        ensure((got - h).abs() <= 0.05, format!("h = {h}: estimate {got:.4}"))?;
        lines.push(format!("{h}->{got:.3}"));
    }
    let scales = dyadic_scales(3, 8);
    let point = box_dimension(&[vec![0.3, 0.6]], &scales).map_err(err)?.value.unwrap_or(f64::NAN);
    let segment: Vec<Vec<f64>> = (0..10_000).map(|i| vec![i as f64 / 9_999.0, 0.37]).collect();
    let segment = box_dimension(&segment, &scales).map_err(err)?.value.unwrap_or(f64::NAN);
    let full = box_dimension(&grid_points(2, 257), &scales).map_err(err)?.value.unwrap_or(f64::NAN);
    ensure(point.abs() <= 0.05, format!("point dimension {point:.3}"))?;
    ensure((segment - 1.0).abs() <= 0.1, format!("segment dimension {segment:.3}"))?;
    ensure((full - 2.0).abs() <= 0.1, format!("square dimension {full:.3}"))?;
    Ok(format!("h {}; boxes {point:.3}/{segment:.3}/{full:.3}", lines.join(" ")))
}

fn run_cli(args: &[&str], out: &Path) -> Result<(), String> {
    let status = Command::new(env!("CARGO_BIN_EXE_envelope-lab"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .map_err(err)?
        .status;
    ensure(status.success(), format!("{args:?} exited with {status}"))
}

fn c12() -> Outcome {
    let dir = tempfile::tempdir().map_err(err)?;
    let synth = ["synthesize", "--d", "2", "--n", "2", "--m", "3", "--seed", "17"];
    let verify = ["verify", "--d", "1", "--stage", "1,2", "--stage", "2,3", "--seed", "17"];
    let mut compared = 0;
    for (args, files) in [(&synth[..], &["stage.json", "samples.csv"][..]), (&verify[..], &["report.json"][..])] {
        let (a, b) = (dir.path().join("a"), dir.path().join("b"));
        run_cli(args, &a)?;
        run_cli(args, &b)?;
        for f in files {
            let (x, y) = (std::fs::read(a.join(f)).map_err(err)?, std::fs::read(b.join(f)).map_err(err)?);
            ensure(x == y, format!("{} differs between runs", f))?;
            compared += x.len();
        }
        std::fs::remove_dir_all(&a).map_err(err)?;
        std::fs::remove_dir_all(&b).map_err(err)?;
    }
    Ok(format!("{compared} bytes identical across runs"))
}

fn main() -> ExitCode {
    let instances = random_instances();
    let mut stages = Vec::new();
    for d in [1, 2] {
        for (n, m) in STAGES {
            match build_f_nm(n, m, d, SEED) {
                Ok(s) => stages.push(s),
                Err(e) => eprintln!("stage ({n},{m}) d={d}: {e}"),
            }
        }
    }
    let built = stages.len() == 2 * STAGES.len();

    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome>)> = vec![
        ("envelope oracle equivalence", Box::new(|| c1(&instances))),
        ("concavity, sandwich and idempotence", Box::new(|| c2(&instances))),
        ("Caratheodory witnesses", Box::new(|| c3(&instances))),
        ("contact covering", Box::new(|| if built { c4(&stages) } else { Err("stage build failed".into()) })),
        ("contact-set dimension", Box::new(|| c5(&stages))),
        ("folding-region dimension", Box::new(|| c6(&stages))),
        ("CAP prevalence", Box::new(|| c7(&stages))),
        ("slope-gap bound", Box::new(c8)),
        ("boundary blow-up", Box::new(c9)),
        ("fold exponent", Box::new(|| c10(&stages))),
        ("Holder estimator calibration", Box::new(c11)),
        ("determinism", Box::new(c12)),
    ];

    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = check();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("PASS  {:>2}  {name}: {msg} [{secs:.1} s]", k + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL  {:>2}  {name}: {msg} [{secs:.1} s]", k + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
