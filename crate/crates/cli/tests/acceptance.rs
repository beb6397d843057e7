//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.
//!
//! Tolerances are pinned here and compared against the bounds the suites
//! report, so a change to a suite's bound shows up as a failure.

use std::collections::HashMap;
use std::process::Command;
use std::time::Instant;

use golden_anosov::schedule::{toy_schedule, Schedule};
use golden_anosov::verify::{run_suite, Check, Relation, Suite, SuiteReport, VerifyOptions};
use golden_anosov::Backend;

const GRID: usize = 10_000;
const GRID_2D: usize = 100;
const MARKOV_FLOAT_TOL: f64 = 1e-12;
const TWO_POW_MINUS_40: f64 = 9.094947017729282e-13;
const BAND_LO: f64 = 1.6;
const BAND_HI: f64 = 1.7;
const AUDIT_STEP: f64 = 1e-7;
const FD_STEP: f64 = 1e-11;
const FD_CONSTANT: f64 = 100.0;
const ORBITS: usize = 100;
const HORIZON: usize = 200;
const GROWTH_FLOOR: f64 = 1.52 - 0.01;
const DET_SLACK: f64 = 1e-9;
const EXPONENT_TOL: f64 = 1e-10;
const EQUIVARIANT_PAIRS: usize = 1000;

struct Runner {
    schedule: Schedule,
    float: VerifyOptions,
    exact: VerifyOptions,
    cache: HashMap<(Suite, bool), SuiteReport>,
}

impl Runner {
    fn report(&mut self, suite: Suite, exact: bool) -> &SuiteReport {
        let key = (suite, exact);
        if !self.cache.contains_key(&key) {
            let o = if exact { &self.exact } else { &self.float };
            let r = run_suite(suite, &self.schedule, o).unwrap_or_else(|e| panic!("{suite}: {e}"));
            self.cache.insert(key, r);
        }
        &self.cache[&key]
    }

    /// Looks up a check and confirms its relation and bound are the pinned ones.
    fn pinned(&mut self, suite: Suite, exact: bool, name: &str, relation: Relation, bound: f64) -> Result<Check, String> {
        let c = self.report(suite, exact).check(name).cloned().ok_or(format!("{suite} has no check {name}"))?;
        if c.relation != relation || (c.bound - bound).abs() > 1e-15 * bound.abs().max(1.0) {
            return Err(format!("{name}: bound {:?} {} differs from pinned {:?} {}", c.relation, c.bound, relation, bound));
        }
        Ok(c)
    }

    fn exact_check(&mut self, suite: Suite, name: &str) -> Result<Check, String> {
        let c = self.pinned(suite, false, name, Relation::AtMost, 0.0)?;
        if c.arithmetic != "exact" {
            return Err(format!("{name} ran in {}", c.arithmetic));
        }
        Ok(c)
    }
}

fn summarize(checks: &[Check]) -> (bool, String) {
    let pass = checks.iter().all(|c| c.pass);
    let parts: Vec<String> = checks
        .iter()
        .map(|c| {
            let n = if c.samples == c.population { format!("{}", c.samples) } else { format!("{}/{}", c.samples, c.population) };
            if c.arithmetic == "exact" && c.bound == 0.0 {
                format!("{} {} mismatches [n={n}]", c.name, c.measured)
            } else {
                format!("{} {:.3e} vs {:.3e} [{}, n={n}]", c.name, c.measured, c.bound, c.arithmetic)
            }
        })
        .collect();
    (pass, parts.join("; "))
}

fn criterion(r: &mut Runner, k: usize) -> Result<(bool, String), String> {
    use Relation::*;
    use Suite::*;
    let checks = match k {
        1 => vec![
            r.exact_check(MarkovConsistency, "stationary_closed_form")?,
            r.pinned(MarkovConsistency, false, "stationary_power_iteration", AtMost, MARKOV_FLOAT_TOL)?,
        ],
        2 => vec![
            r.exact_check(Tiling, "cylinders_tile")?,
            r.exact_check(Tiling, "mass_additivity")?,
            r.exact_check(Tiling, "depth_totals")?,
            r.exact_check(Tiling, "partition_lengths")?,
            r.exact_check(Tiling, "lebesgue_lengths")?,
        ],
        3 => vec![
            r.exact_check(PsiProperties, "psi_anchor_values")?,
            r.pinned(PsiProperties, false, "psi_derivative_band", Below, 1.0)?,
            r.exact_check(PsiProperties, "psi_unit_end_slopes")?,
            r.exact_check(PsiProperties, "g_alpha_mean")?,
        ],
        4 => vec![
            r.exact_check(StageFixing, "cylinder_images_fixed")?,
            r.exact_check(StageFixing, "cylinder_images_glue")?,
            r.exact_check(StageFixing, "partition_fixed")?,
        ],
        5 => vec![r.pinned(StageFixing, false, "stage_contraction", AtMost, 1.0)?],
        6 => vec![
            r.pinned(CorrectionFlatness, false, "mass_proportional_correction", AtMost, TWO_POW_MINUS_40)?,
            r.pinned(CorrectionFlatness, false, "correction_flatness", AtMost, 1.0)?,
            r.exact_check(CorrectionFlatness, "golden_proportion_transport")?,
        ],
        7 => {
            let band = r
                .schedule
                .certificates
                .iter()
                .filter(|c| c.name.starts_with("derivative_band"))
                .all(|c| c.pass);
            if !band {
                return Ok((false, "band certificate of the schedule fails".into()));
            }
            let drift = r.report(DerivativeBand, false).check("stage_drift").cloned().ok_or("no stage_drift")?;
            vec![
                r.pinned(DerivativeBand, false, "g_prime_min", AtLeast, BAND_LO)?,
                r.pinned(DerivativeBand, false, "g_prime_max", AtMost, BAND_HI)?,
                drift,
            ]
        }
        8 => vec![
            r.pinned(Martingale, false, "cylinder_averages", AtMost, TWO_POW_MINUS_40)?,
            r.pinned(Martingale, false, "expectation", AtMost, TWO_POW_MINUS_40)?,
            r.exact_check(Martingale, "tail_monotone")?,
        ],
        9 => vec![
            r.exact_check(Gluing, "gluing_round_trips")?,
            r.exact_check(CouplingCascade, "cascade")?,
            r.exact_check(CouplingCascade, "first_segment_image")?,
            r.pinned(CouplingCascade, false, "coupling_cylinder_motion", AtMost, 1.0)?,
            r.exact_check(QIdentities, "q_identities")?,
        ],
        10 => {
            let eq = r.pinned(Gluing, true, "boundary_equivariance", AtMost, 0.0)?;
            if eq.arithmetic != "exact" || eq.samples < EQUIVARIANT_PAIRS {
                return Err(format!("equivariance ran {} on {} pairs", eq.arithmetic, eq.samples));
            }
            vec![
                r.pinned(YDerivative, false, "fiber_proximity", AtMost, 1.0)?,
                eq,
                r.exact_check(YDerivative, "jacobian_structure")?,
                r.pinned(YDerivative, false, "jacobian_finite_difference", AtMost, FD_CONSTANT)?,
            ]
        }
        11 => vec![
            r.pinned(YDerivative, false, "collar_y_derivative", AtMost, 1.0)?,
            r.pinned(YDerivative, false, "boundary_y_derivative", AtMost, 10.0 * AUDIT_STEP)?,
        ],
        12 => {
            let phi = (1.0 + 5f64.sqrt()) / 2.0;
            let det = r.report(Hyperbolicity, false).check("det_band").cloned().ok_or("no det_band")?;
            let want = match det.relation {
                AtLeast => 1.6 / phi - DET_SLACK,
                _ => 1.7 / phi + DET_SLACK,
            };
            if (det.bound - want).abs() > 1e-15 {
                return Err(format!("det_band bound {} differs from pinned {want}", det.bound));
            }
            vec![
                r.pinned(Hyperbolicity, false, "normalized_growth", AtLeast, GROWTH_FLOOR)?,
                det,
                r.pinned(Hyperbolicity, false, "linear_model_exponents", AtMost, EXPONENT_TOL)?,
            ]
        }
        13 => return determinism(),
        _ => unreachable!(),
    };
    Ok(summarize(&checks))
}

/// Runs the binary twice with the same manifest (once directly, once via
/// `rerun`) on the exact backend and compares outputs byte for byte.
fn determinism() -> Result<(bool, String), String> {
    let bin = env!("CARGO_BIN_EXE_golden-anosov");
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let path = |name: &str| dir.path().join(name).display().to_string();
    let run = |args: &[&str]| -> Result<(), String> {
        let st = Command::new(bin).args(args).output().map_err(|e| e.to_string())?;
        if st.status.success() {
            Ok(())
        } else {
            Err(format!("{args:?} exited {:?}: {}", st.status.code(), String::from_utf8_lossy(&st.stderr)))
        }
    };
    let schedule = path("toy.json");
    run(&["build-schedule", "--out", &schedule])?;
    let mut details = Vec::new();
    let mut same = true;
    let jobs: [(&str, Vec<&str>); 3] = [
        ("curve", vec!["export", "curve", "--points", "40"]),
        ("density", vec!["export", "density", "--stage", "1", "--bins-depth", "5"]),
        ("tiling", vec!["verify", "tiling"]),
    ];
    for (name, base) in jobs {
        let (a, b) = (path(&format!("{name}-a")), path(&format!("{name}-b")));
        let mut args = base.clone();
        args.extend(["--schedule", &schedule, "--backend", "exact", "--out", &a]);
        run(&args)?;
        let manifest = format!("{a}.manifest.json");
        run(&["rerun", &manifest, "--out", &b])?;
        let (x, y) = (std::fs::read(&a).map_err(|e| e.to_string())?, std::fs::read(&b).map_err(|e| e.to_string())?);
        let again = std::fs::read(&manifest).map_err(|e| e.to_string())?;
        run(&args)?;
        let stable = again == std::fs::read(&manifest).map_err(|e| e.to_string())?;
        let ok = x == y && !x.is_empty() && stable;
        same &= ok;
        details.push(format!("{name} {} bytes {}", x.len(), if ok { "identical" } else { "DIFFER" }));
    }
    Ok((same, details.join("; ")))
}

fn main() {
    let start = Instant::now();
    let schedule = toy_schedule();
    let float = VerifyOptions {
        backend: Backend::Float { bits: 53 },
        grid: GRID,
        grid2d: GRID_2D,
        audit_step: AUDIT_STEP,
        fd_step: FD_STEP,
        orbits: ORBITS,
        horizon: HORIZON,
        pairs: EQUIVARIANT_PAIRS,
        tiling_depth: 12,
        ..VerifyOptions::default()
    };
    let exact = VerifyOptions { backend: Backend::Exact, ..float.clone() };
    let mut r = Runner { schedule, float, exact, cache: HashMap::new() };
    let mut failed = Vec::new();
    for k in 1..=13 {
        let t = Instant::now();
        let (pass, detail) = match criterion(&mut r, k) {
            Ok(x) => x,
            Err(e) => (false, format!("error: {e}")),
        };
        println!("criterion {k:2}: {} ({:.1}s) {detail}", if pass { "PASS" } else { "FAIL" }, t.elapsed().as_secs_f64());
        if !pass {
            failed.push(k);
        }
    }
    println!("acceptance: {} of 13 criteria pass in {:.0}s", 13 - failed.len(), start.elapsed().as_secs_f64());
    if !failed.is_empty() {
        println!("failing criteria: {failed:?}");
        std::process::exit(1);
    }
}
