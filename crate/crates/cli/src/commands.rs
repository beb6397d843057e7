use std::path::Path;

use golden_anosov::anosov2d::{Fibered, ManifoldPoint};
use golden_anosov::homeo1d::Circle;
use golden_anosov::schedule::Schedule;
use golden_anosov::symbolic::enumerate_cylinders;
use golden_anosov::verify::{run_suites, Suite, SuiteReport, VerifyOptions};
use golden_anosov::{Backend, FieldElement, GoldenInt, HpFloat, Real};
use serde::Serialize;

use crate::config::{parse_number, write_file, ExportSpec, Manifest, RunConfig};
use crate::Failure;

/// Exact orbits grow in height at every step; longer ones are refused.
pub const EXACT_ORBIT_STEPS: usize = 12;

/// Executes a run and writes its output and manifest.
pub fn execute(run: &RunConfig) -> Result<(), Failure> {
    let result = match run {
        RunConfig::BuildSchedule { schedule, out } => {
            let s = schedule.load()?;
            write_file(Path::new(out), s.to_json().as_bytes())?;
            print_schedule(&s);
            if s.all_passed() {
                Ok(())
            } else {
                let names: Vec<String> = s.failures().iter().map(|c| format!("{} (stage {})", c.name, c.stage)).collect();
                Err(Failure::Certificate(names.join(", ")))
            }
        }
        RunConfig::Verify { schedule, suites, options, out } => {
            let s = schedule.load()?;
            let list = suites.iter().map(|x| x.parse::<Suite>()).collect::<golden_anosov::Result<Vec<_>>>()?;
            let reports = run_suites(&list, &s, options)?;
            let doc = VerifyDocument::new(&s, options, reports);
            write_file(Path::new(out), (serde_json::to_string_pretty(&doc).expect("report serializes") + "\n").as_bytes())?;
            print_reports(&doc.reports);
            if doc.pass {
                Ok(())
            } else {
                Err(Failure::Certificate("verification failed".into()))
            }
        }
        RunConfig::Export { schedule, export, backend, out } => {
            let s = schedule.load()?;
            let bytes = match backend {
                Backend::Exact => export_with::<FieldElement>(&s, export)?,
                Backend::Float { bits } => match bits {
                    53 => export_with::<f64>(&s, export)?,
                    80 => export_with::<HpFloat<80>>(&s, export)?,
                    128 => export_with::<HpFloat<128>>(&s, export)?,
                    256 => export_with::<HpFloat<256>>(&s, export)?,
                    other => return Err(Failure::Usage(format!("unsupported precision {other}"))),
                },
            };
            write_file(Path::new(out), &bytes)?;
            println!("wrote {out}");
            Ok(())
        }
    };
    if matches!(result, Ok(()) | Err(Failure::Certificate(_))) {
        Manifest::new(run.clone()).write()?;
    }
    result
}

#[derive(Serialize)]
struct ScheduleSummary {
    profile: String,
    theta: String,
    stages: usize,
    max_depth: usize,
}

#[derive(Serialize)]
struct VerifyDocument {
    schedule: ScheduleSummary,
    options: VerifyOptions,
    pass: bool,
    reports: Vec<SuiteReport>,
}

impl VerifyDocument {
    fn new(s: &Schedule, options: &VerifyOptions, reports: Vec<SuiteReport>) -> Self {
        VerifyDocument {
            schedule: ScheduleSummary {
                profile: s.profile.name().into(),
                theta: s.theta.to_string(),
                stages: s.num_stages(),
                max_depth: s.max_depth(),
            },
            options: options.clone(),
            pass: reports.iter().all(|r| r.pass),
            reports,
        }
    }
}

fn print_schedule(s: &Schedule) {
    println!("profile {} theta {} ({} stages, max depth {})", s.profile.name(), s.theta, s.num_stages(), s.max_depth());
    for st in &s.stages {
        println!(
            "  stage {}: n={} N={} m={} M={} eps={} lambda-1={:e}",
            st.t,
            st.n,
            st.big_n,
            st.m,
            st.big_m,
            st.eps,
            st.lambda.to_f64() - 1.0
        );
    }
    for c in &s.certificates {
        if !c.pass {
            let tag = if c.enforced { "FAIL" } else { "advisory" };
            println!("  {tag}: {} (stage {}): {} = {:e} vs {:e}", c.name, c.stage, c.statement, c.value, c.bound);
        }
    }
}

fn print_reports(reports: &[SuiteReport]) {
    for r in reports {
        println!("{}: {}", r.suite, if r.pass { "PASS" } else { "FAIL" });
        for c in r.checks.iter().filter(|c| !c.pass) {
            println!("  {}: measured {:e}, bound {:e} ({:?})", c.name, c.measured, c.bound, c.relation);
        }
    }
}

fn csv_bytes(header: &[&str], rows: Vec<Vec<String>>) -> Result<Vec<u8>, Failure> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Failure::Io(e.to_string());
    w.write_record(header).map_err(io)?;
    for r in rows {
        w.write_record(&r).map_err(io)?;
    }
    w.into_inner().map_err(|e| Failure::Io(e.to_string()))
}

fn show<R: Real>(x: &R) -> String {
    x.to_scalar().to_string()
}

fn float(x: f64) -> String {
    format!("{x:?}")
}

fn export_with<R: Real>(s: &Schedule, spec: &ExportSpec) -> Result<Vec<u8>, Failure> {
    let top = s.big_n(s.num_stages());
    let depth_ok = |d: usize| {
        if d > s.max_depth() {
            Err(Failure::Usage(format!("depth {d} beyond the schedule's {}", s.max_depth())))
        } else {
            Ok(d)
        }
    };
    match spec {
        ExportSpec::Curve { depth, points } => {
            let n = depth_ok(depth.unwrap_or(top))?;
            if *points == 0 {
                return Err(Failure::Usage("--points must be positive".into()));
            }
            let c = Circle::<R>::new(s);
            let mut rows = Vec::with_capacity(*points);
            for i in 0..*points {
                let x = R::from_ratio(2 * i as i64 + 1, 2 * *points as i64);
                let (h, d) = c.eval_h(n, &x)?;
                rows.push(vec![show(&x), show(&h), show(&d), float(h.to_f64())]);
            }
            csv_bytes(&["x", "h", "h_prime", "h_approx"], rows)
        }
        ExportSpec::Orbit { depth, x, y, steps } => {
            let n = depth_ok(depth.unwrap_or(top))?;
            if R::EXACT && *steps > EXACT_ORBIT_STEPS {
                return Err(Failure::Usage(format!("exact orbits are limited to {EXACT_ORBIT_STEPS} steps")));
            }
            let f = Fibered::<R>::new(s);
            let start = ManifoldPoint::new(R::from_field(&parse_number(x)?), R::from_field(&parse_number(y)?))?;
            let mut p = start.canonical();
            let mut rows = Vec::with_capacity(steps + 1);
            for k in 0..=*steps {
                let (a, b) = p.to_f64();
                rows.push(vec![k.to_string(), show(&p.x), show(&p.y), float(a), float(b), p.in_domain().to_string()]);
                if k < *steps {
                    p = f.eval_z(n, &p)?.image.canonical();
                }
            }
            csv_bytes(&["step", "x", "y", "x_approx", "y_approx", "in_domain"], rows)
        }
        ExportSpec::Density { stage, depth } => {
            let t = stage.unwrap_or(s.num_stages());
            if t == 0 || t > s.num_stages() {
                return Err(Failure::Usage(format!("stage {t} outside 1..={}", s.num_stages())));
            }
            let n = s.big_n(t);
            if *depth == 0 || *depth > n {
                return Err(Failure::Usage(format!("histogram depth must lie in 1..={n}")));
            }
            let eps = Circle::<R>::new(s);
            let flat = Circle::<R>::new(&s.zero_eps());
            let at = |c: &Circle<R>, e: GoldenInt| -> Result<R, Failure> {
                if e == GoldenInt::ONE {
                    Ok(R::one())
                } else {
                    Ok(c.eval_h(n, &R::from_golden(e))?.0)
                }
            };
            let mut rows = Vec::new();
            for cy in enumerate_cylinders(*depth) {
                let mass = at(&eps, cy.hi)? - at(&eps, cy.lo)?;
                let reference = at(&flat, cy.hi)? - at(&flat, cy.lo)?;
                let average = mass.clone() / reference.clone();
                rows.push(vec![
                    cy.word.to_string(),
                    float(cy.lo.to_f64()),
                    float(cy.hi.to_f64()),
                    show(&mass),
                    show(&reference),
                    show(&average),
                    float(mass.to_f64()),
                ]);
            }
            csv_bytes(&["word", "lo", "hi", "mass", "reference_mass", "average_z", "mass_approx"], rows)
        }
    }
}
