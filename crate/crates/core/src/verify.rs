//! Verification suites: each one measures a family of invariants of a built
//! schedule and reports every check with its bound and margin.
//!
//! Checks marked `exact` run on `Q(sqrt 5)` whatever backend is requested; the
//! requested backend drives the sampled (grid) checks. With the exact backend,
//! checks that have an affordable exact form run exactly and the remaining
//! grid checks fall back to doubles, which the `arithmetic` field records.

use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::anosov2d::{
    bottom_level, collar_width, f_tilde, gluing_table, identified, middle_level, top_level, AuditGrid, AuditKind,
    Fibered, ManifoldPoint,
};
use crate::density::Density;
use crate::homeo1d::{g_alpha, Circle, Psi, Pt};
use crate::markov::{backend_bits, cylinder_mass, matrix_q, matrix_q_lambda, stationary, MeasureSpec};
use crate::schedule::{extended_f64, psi_slopes, Profile, Schedule, StageKind};
use crate::symbolic::{coupling_segment, cylinder_of, enumerate_cylinders, enumerate_words, successors, Level, Side};
use crate::{Backend, Error, FieldElement, GoldenInt, HpFloat, Real, Result};

/// Named verification suites.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Suite {
    Tiling,
    MarkovConsistency,
    PsiProperties,
    StageFixing,
    DerivativeBand,
    CorrectionFlatness,
    Martingale,
    Gluing,
    CouplingCascade,
    QIdentities,
    YDerivative,
    Hyperbolicity,
}

impl Suite {
    pub const ALL: [Suite; 12] = [
        Suite::Tiling,
        Suite::MarkovConsistency,
        Suite::PsiProperties,
        Suite::StageFixing,
        Suite::DerivativeBand,
        Suite::CorrectionFlatness,
        Suite::Martingale,
        Suite::Gluing,
        Suite::CouplingCascade,
        Suite::QIdentities,
        Suite::YDerivative,
        Suite::Hyperbolicity,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Tiling => "tiling",
            Suite::MarkovConsistency => "markov-consistency",
            Suite::PsiProperties => "psi-properties",
            Suite::StageFixing => "stage-fixing",
            Suite::DerivativeBand => "derivative-band",
            Suite::CorrectionFlatness => "correction-flatness",
            Suite::Martingale => "martingale",
            Suite::Gluing => "gluing",
            Suite::CouplingCascade => "coupling-cascade",
            Suite::QIdentities => "q-identities",
            Suite::YDerivative => "y-derivative",
            Suite::Hyperbolicity => "hyperbolicity",
        }
    }
}

impl fmt::Display for Suite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Suite {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown suite {s:?}")))
    }
}

/// Sampling sizes and arithmetic for a verification run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyOptions {
    pub backend: Backend,
    /// Points of the one-dimensional grids.
    pub grid: usize,
    /// Side of the square grid used for fiber proximity.
    pub grid2d: usize,
    pub audit_nx: usize,
    pub audit_nu: usize,
    pub audit_step: f64,
    /// Step of the finite-difference Jacobian (run at 128 bits).
    pub fd_step: f64,
    pub orbits: usize,
    pub horizon: usize,
    pub seed: u64,
    /// Identified pairs for the boundary equivariance check.
    pub pairs: usize,
    /// Most cylinders per depth checked exactly; larger depths are strided.
    pub exact_cap: usize,
    /// Most cylinders per depth in the exact proportion-transport check.
    pub transport_cap: usize,
    pub tiling_depth: usize,
}

impl Default for VerifyOptions {
    fn default() -> Self {
        VerifyOptions {
            backend: Backend::Float { bits: 53 },
            grid: 10_000,
            grid2d: 100,
            audit_nx: 200,
            audit_nu: 9,
            audit_step: 1e-7,
            fd_step: 1e-11,
            orbits: 100,
            horizon: 200,
            seed: 7,
            pairs: 1000,
            exact_cap: 1500,
            transport_cap: 40,
            tiling_depth: 12,
        }
    }
}

impl VerifyOptions {
    fn float_bits(&self) -> u32 {
        match self.backend {
            Backend::Float { bits } => bits,
            Backend::Exact => 53,
        }
    }

    fn exact(&self) -> bool {
        self.backend == Backend::Exact
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Relation {
    AtMost,
    Below,
    AtLeast,
}

/// One measured quantity against its bound.
///
/// Exact checks count mismatches, so their bound is zero.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub relation: Relation,
    #[serde(with = "extended_f64")]
    pub measured: f64,
    #[serde(with = "extended_f64")]
    pub bound: f64,
    /// Distance to failure: positive (or zero, for non-strict relations) means pass.
    #[serde(with = "extended_f64")]
    pub margin: f64,
    pub pass: bool,
    pub arithmetic: String,
    pub samples: usize,
    /// Size of the family the samples were drawn from.
    pub population: usize,
}

impl Check {
    pub fn new(name: &str, relation: Relation, measured: f64, bound: f64, arithmetic: &str, samples: usize) -> Self {
        let margin = match relation {
            Relation::AtMost | Relation::Below => bound - measured,
            Relation::AtLeast => measured - bound,
        };
        let pass = match relation {
            Relation::Below => margin > 0.0,
            _ => margin >= 0.0,
        };
        Check {
            name: name.into(),
            relation,
            measured,
            bound,
            margin,
            pass,
            arithmetic: arithmetic.into(),
            samples,
            population: samples,
        }
    }

    /// Exact identity check from a mismatch count.
    pub fn exact(name: &str, mismatches: usize, samples: usize) -> Self {
        Check::new(name, Relation::AtMost, mismatches as f64, 0.0, "exact", samples)
    }

    fn of(mut self, population: usize) -> Self {
        self.population = population;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub suite: Suite,
    pub profile: String,
    pub backend: String,
    pub pass: bool,
    pub checks: Vec<Check>,
}

impl SuiteReport {
    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }
}

fn backend_label(b: Backend) -> String {
    match b {
        Backend::Exact => "exact".into(),
        Backend::Float { bits } => format!("float{bits}"),
    }
}

fn arith<R: Real>() -> String {
    match backend_bits::<R>() {
        None => "exact".into(),
        Some(b) => format!("float{}", b.min(256)),
    }
}

/// Runs `$body` with `$R` bound to the float type of `$bits` mantissa bits.
macro_rules! with_float {
    ($bits:expr, $R:ident => $body:expr) => {
        match $bits {
            80 => {
                type $R = HpFloat<80>;
                $body
            }
            128 => {
                type $R = HpFloat<128>;
                $body
            }
            256 => {
                type $R = HpFloat<256>;
                $body
            }
            _ => {
                type $R = f64;
                $body
            }
        }
    };
}

/// Runs one suite.
pub fn run_suite(suite: Suite, s: &Schedule, o: &VerifyOptions) -> Result<SuiteReport> {
    if let Backend::Float { bits } = o.backend {
        Backend::float(bits)?;
    }
    let checks = match suite {
        Suite::Tiling => tiling(s, o)?,
        Suite::MarkovConsistency => markov_consistency(s, o)?,
        Suite::PsiProperties => psi_properties(s, o)?,
        Suite::StageFixing => stage_fixing(s, o)?,
        Suite::DerivativeBand => derivative_band(s, o)?,
        Suite::CorrectionFlatness => correction_flatness(s, o)?,
        Suite::Martingale => martingale(s, o)?,
        Suite::Gluing => gluing(s, o)?,
        Suite::CouplingCascade => coupling_cascade(s, o)?,
        Suite::QIdentities => q_identities(s)?,
        Suite::YDerivative => y_derivative(s, o)?,
        Suite::Hyperbolicity => hyperbolicity(s, o)?,
    };
    Ok(SuiteReport {
        suite,
        profile: s.profile.name().into(),
        backend: backend_label(o.backend),
        pass: checks.iter().all(|c| c.pass),
        checks,
    })
}

/// Runs several suites on the worker pool; reports come back in input order.
pub fn run_suites(suites: &[Suite], s: &Schedule, o: &VerifyOptions) -> Result<Vec<SuiteReport>> {
    suites.par_iter().map(|&x| run_suite(x, s, o)).collect()
}

fn fe(p: i64, q: i64) -> FieldElement {
    FieldElement::from_ratio(p, q)
}

/// Midpoints `(2i+1)/(2n)` of a uniform grid.
fn grid<R: Real>(n: usize) -> impl Iterator<Item = R> {
    (0..n).map(move |i| R::from_ratio(2 * i as i64 + 1, 2 * n as i64))
}

/// An evenly strided subset of at most `cap` items.
fn strided<T: Clone>(items: Vec<T>, cap: usize) -> Vec<T> {
    if items.len() <= cap {
        return items;
    }
    (0..cap).map(|i| items[i * items.len() / cap].clone()).collect()
}

fn top_stage(s: &Schedule) -> usize {
    s.num_stages()
}

/// Stages `t` whose correction `M_t` lies inside the schedule.
fn correction_stages(s: &Schedule) -> Vec<usize> {
    (1..=s.num_stages())
        .filter(|&t| s.big_m(t) <= s.max_depth() && s.stage_kind(s.big_m(t)).ok() == Some(StageKind::Correction(t)))
        .collect()
}

/// Tolerance on `|log h'_{M_t}|` of the profile.
pub fn flatness_delta(s: &Schedule, t: usize) -> f64 {
    match &s.profile {
        Profile::Toy(p) => p.flatness,
        Profile::Strict => 0.5f64.powi(s.big_n(t) as i32),
    }
}

fn tiling(s: &Schedule, o: &VerifyOptions) -> Result<Vec<Check>> {
    let specs = [s.measure_circle(), s.measure_stationary(), MeasureSpec::lebesgue(0)];
    let (mut gaps, mut additive, mut totals, mut lengths) = (0, 0, 0, 0);
    let mut count = 0;
    for n in 1..=o.tiling_depth {
        let mut cursor = GoldenInt::ZERO;
        let mut sums = [FieldElement::zero(), FieldElement::zero(), FieldElement::zero()];
        for w in enumerate_words(n) {
            let c = cylinder_of(&w)?;
            if c.lo != cursor || c.length().signum() <= 0 {
                gaps += 1;
            }
            cursor = c.hi;
            count += 1;
            for (k, spec) in specs.iter().enumerate() {
                let mass = cylinder_mass(spec, &w, 0);
                let mut children = FieldElement::zero();
                for &b in successors(w.last()) {
                    children = children + cylinder_mass(spec, &w.extended(b)?, 0);
                }
                if children != mass {
                    additive += 1;
                }
                sums[k] = &sums[k] + &mass;
            }
            if cylinder_mass(&specs[2], &w, 0) != c.length().to_field() {
                lengths += 1;
            }
        }
        if cursor != GoldenInt::ONE {
            gaps += 1;
        }
        totals += sums.iter().filter(|m| **m != FieldElement::one()).count();
    }
    let phi = FieldElement::phi();
    let want = [(1u8, phi.pow(2)), (2, phi.pow(2)), (3, phi.pow(3))];
    let mut partition = 0;
    for (s, p) in &want {
        let (lo, hi) = crate::symbolic::partition_interval(*s);
        let w = crate::symbolic::Word::new(vec![*s])?;
        let inv = p.inv()?;
        if (hi - lo).to_field() != inv || cylinder_mass(&specs[2], &w, 0) != inv {
            partition += 1;
        }
    }
    Ok(vec![
        Check::exact("cylinders_tile", gaps, count),
        Check::exact("mass_additivity", additive, 3 * count),
        Check::exact("depth_totals", totals, 3 * o.tiling_depth),
        Check::exact("lebesgue_lengths", lengths, count),
        Check::exact("partition_lengths", partition, 3),
    ])
}

fn power_iteration<R: Real>() -> [f64; 3] {
    let p = matrix_q().to_real::<R>();
    let mut v = [R::from_ratio(1, 3), R::from_ratio(1, 3), R::from_ratio(1, 3)];
    for _ in 0..4000 {
        v = std::array::from_fn(|j| (0..3).fold(R::zero(), |acc, i| acc + v[i].clone() * p[i][j].clone()));
    }
    std::array::from_fn(|i| v[i].to_f64())
}

fn markov_consistency(s: &Schedule, o: &VerifyOptions) -> Result<Vec<Check>> {
    let r5 = FieldElement::sqrt5();
    let a = r5.inv()?;
    let b = (&FieldElement::phi() * &r5).inv()?;
    let closed = [a, b.clone(), b];
    let exact = stationary(&matrix_q())?;
    let mismatches = (0..3).filter(|&i| exact[i] != closed[i]).count();

    let (float, label) = with_float!(o.float_bits(), R => (power_iteration::<R>(), arith::<R>()));
    let err = (0..3).map(|i| (float[i] - closed[i].to_f64()).abs()).fold(0.0, f64::max);

    let mut invariant = 0;
    for st in &s.stages {
        let p = matrix_q_lambda(&st.lambda)?;
        let pi = stationary(&p)?;
        for j in 0..3u8 {
            let mut acc = FieldElement::zero();
            for i in 0..3u8 {
                acc = acc + &pi[i as usize] * p.p(i + 1, j + 1);
            }
            if acc != pi[j as usize] {
                invariant += 1;
            }
        }
    }

    let spec = s.measure_circle();
    let last = spec.last_block_end() + 1;
    let mut residual = 0;
    for n in spec.origin + 1..=last {
        residual += spec.consistency_residual(n).iter().filter(|r| !r.is_zero()).count();
    }

    let c0 = Circle::<FieldElement>::new(&s.zero_eps());
    let depth = s.big_n(top_stage(s)).min(o.tiling_depth);
    let mut realized = 0;
    let mut count = 0;
    for n in 1..=depth {
        for cy in enumerate_cylinders(n) {
            let mass = c0.endpoint_image(cy.hi) - c0.endpoint_image(cy.lo);
            if mass != cylinder_mass(&spec, &cy.word, 0) {
                realized += 1;
            }
            count += 1;
        }
    }
    Ok(vec![
        Check::exact("stationary_closed_form", mismatches, 3),
        Check::new("stationary_power_iteration", Relation::AtMost, err, 1e-12, &label, 3),
        Check::exact("stage_laws_invariant", invariant, 3 * s.stages.len()),
        Check::exact("marginal_consistency", residual, 3 * (last - spec.origin).max(0) as usize),
        Check::exact("affine_circle_realizes_measure", realized, count),
    ])
}

// Simpson's rule is exact on each third of [0, 1], where g_alpha is at most linear.
fn simpson_mean(alpha: &FieldElement) -> FieldElement {
    let mut total = FieldElement::zero();
    for k in 0..3 {
        let (a, b) = (fe(k, 3), fe(k + 1, 3));
        let m = (&a + &b) / fe(2, 1);
        let f = |x: &FieldElement| g_alpha(alpha, x).0;
        total = total + (&b - &a) / fe(6, 1) * (f(&a) + fe(4, 1) * f(&m) + f(&b));
    }
    total
}

fn psi_grid<R: Real>(s: &Schedule, n: usize) -> (f64, f64, f64) {
    let (mut worst_ratio, mut worst_log, mut round) = (0.0f64, 0.0f64, 0.0f64);
    for st in &s.stages {
        let psi = Psi::<R>::new(&st.lambda, &st.eps);
        let band = 2.0 * st.lambda.to_f64().ln();
        for i in 0..=n {
            let z = R::from_ratio(i as i64, n as i64);
            let (v, d, _, _) = psi.eval(&z);
            let l = d.to_f64().ln().abs();
            worst_log = worst_log.max(l);
            if band > 0.0 {
                worst_ratio = worst_ratio.max(l / band);
            }
            round = round.max((psi.inverse(&v) - z).to_f64().abs());
        }
    }
    (worst_ratio, worst_log, round)
}

fn psi_properties(s: &Schedule, o: &VerifyOptions) -> Result<Vec<Check>> {
    let (zero, one, ip) = (FieldElement::zero(), FieldElement::one(), FieldElement::inv_phi());
    let mut anchors = 0;
    let mut slopes = 0;
    let mut alphas = vec![fe(1, 2), fe(3, 2), FieldElement::phi(), ip.clone()];
    for st in &s.stages {
        let psi = Psi::<FieldElement>::new(&st.lambda, &st.eps);
        let lp = &st.lambda * &FieldElement::phi();
        let want = &lp / &(&one + &lp);
        anchors += [psi.value(&ip) != want, psi.value(&zero) != zero, psi.value(&one) != one]
            .iter()
            .filter(|b| **b)
            .count();
        slopes += [psi.eval(&zero).1 != one, psi.eval(&one).1 != one].iter().filter(|b| **b).count();
        let (a, b) = psi_slopes(&st.lambda);
        alphas.push(a);
        alphas.push(b);
    }
    let means = alphas.iter().filter(|a| simpson_mean(a) != **a).count();
    let (ratio, _, round, label) = with_float!(o.float_bits(), R => {
        let (a, b, c) = psi_grid::<R>(s, o.grid);
        (a, b, c, arith::<R>())
    });
    let k = s.stages.len();
    Ok(vec![
        Check::exact("psi_anchor_values", anchors, 3 * k),
        Check::exact("psi_unit_end_slopes", slopes, 2 * k),
        Check::exact("g_alpha_mean", means, alphas.len()),
        Check::new("psi_derivative_band", Relation::Below, ratio, 1.0, &label, k * (o.grid + 1)),
        Check::new("psi_inverse_round_trip", Relation::AtMost, round, 1e-12, &label, k * (o.grid + 1)),
    ])
}

fn contraction<R: Real>(s: &Schedule, n_top: usize, points: usize) -> Result<f64> {
    let c = Circle::<R>::new(s);
    let mut worst = 0.0f64;
    for x in grid::<R>(points) {
        for n in 1..=n_top {
            let d = (c.stage_map(n, &x)? - x.clone()).to_f64().abs();
            worst = worst.max(d * 1.6f64.powi(n as i32) / std::f64::consts::E);
        }
    }
    Ok(worst)
}

fn stage_fixing(s: &Schedule, o: &VerifyOptions) -> Result<Vec<Check>> {
    let c = Circle::<FieldElement>::new(s);
    let mut partition = 0;
    for e in [GoldenInt::ZERO, GoldenInt::inv_phi_pow(2), GoldenInt::inv_phi_pow(1)] {
        for n in 0..=c.max_depth() {
            if c.eval_point(n, &Pt::golden(e))?.value != e.to_field() {
                partition += 1;
            }
        }
    }
    let n_top = s.big_n(top_stage(s));
    let (mut moved, mut glued, mut checked, mut population) = (0, 0, 0, 0);
    for n in 1..=n_top {
        let all = enumerate_cylinders(n);
        population += all.len();
        for cy in strided(all, o.exact_cap) {
            if cy.lo == GoldenInt::ZERO {
                continue;
            }
            let y = c.eval_point(n - 1, &Pt::golden(cy.lo))?.value;
            if c.stage_map(n, &y)? != y {
                moved += 1;
            }
            if c.eval_point(n, &Pt::golden(cy.lo))?.value != y {
                glued += 1;
            }
            checked += 1;
        }
    }
    let (worst, label) = with_float!(o.float_bits(), R => (contraction::<R>(s, n_top, o.grid)?, arith::<R>()));
    Ok(vec![
        Check::exact("partition_fixed", partition, 3 * (c.max_depth() + 1)),
        Check::exact("cylinder_images_fixed", moved, checked).of(population),
        Check::exact("cylinder_images_glue", glued, checked).of(population),
        Check::new("stage_contraction", Relation::AtMost, worst, 1.0, &label, o.grid * n_top),
    ])
}

fn band_grid<R: Real>(s: &Schedule, points: usize) -> Result<(f64, f64, Vec<f64>)> {
    let c = Circle::<R>::new(s);
    let top = top_stage(s);
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    let mut drift = vec![0.0f64; top.saturating_sub(1)];
    for x in grid::<R>(points) {
        let gs: Vec<f64> =
            (1..=top).map(|t| c.eval_g(s.big_n(t), &x).map(|g| g.1.to_f64())).collect::<Result<_>>()?;
        let g = gs[top - 1];
        lo = lo.min(g);
        hi = hi.max(g);
        for t in 1..top {
            drift[t - 1] = drift[t - 1].max((gs[t] / gs[t - 1]).ln().abs());
        }
    }
    Ok((lo, hi, drift))
}

fn derivative_band(s: &Schedule, o: &VerifyOptions) -> Result<Vec<Check>> {
    let ((lo, hi, drift), label) = with_float!(o.float_bits(), R => (band_grid::<R>(s, o.grid)?, arith::<R>()));
    let mut out = vec![
        Check::new("g_prime_min", Relation::AtLeast, lo, 1.6, &label, o.grid),
        Check::new("g_prime_max", Relation::AtMost, hi, 1.7, &label, o.grid),
    ];
    let mut worst: Option<Check> = None;
    for (i, d) in drift.iter().enumerate() {
        let t = i + 1;
        let envelope = s.big_m(t) as f64 * s.stage(t + 1).lambda.to_f64().ln() + 2f64.powi(2 - s.big_n(t) as i32);
        let c = Check::new("stage_drift", Relation::AtMost, *d, envelope, &label, o.grid);
        if worst.as_ref().map_or(true, |w| c.margin < w.margin) {
            worst = Some(c);
        }
    }
    out.push(worst.unwrap_or_else(|| Check::new("stage_drift", Relation::AtMost, 0.0, 0.0, &label, 0)));
    Ok(out)
}

/// Largest deviation of `m(H_{M_t} C) / m(H_{M_t} P)` from `m(C) / m(P)` over
/// depth-`N_{t+1}` cylinders `C` with depth-`M_t` parent `P`.
fn mass_ratio_residual<R: Real>(s: &Schedule, t: usize, cap: usize) -> Result<(f64, usize, usize)> {
    let c = Circle::<R>::new(s);
    let m = s.big_m(t);
    let img = |e: GoldenInt| -> Result<R> {
        if e == GoldenInt::ONE {
            Ok(R::one())
        } else {
            Ok(c.eval_point(m, &Pt::golden(e))?.value)
        }
    };
    let all = enumerate_cylinders(s.big_n(t + 1));
    let population = all.len();
    let picked = strided(all, cap);
    let mut parents: HashMap<crate::symbolic::Word, (R, R, R)> = HashMap::new();
    let mut worst = 0.0f64;
    for cy in &picked {
        let w = cy.word.prefix(m);
        if !parents.contains_key(&w) {
            let p = cylinder_of(&w)?;
            parents.insert(w.clone(), (img(p.lo)?, img(p.hi)?, R::from_golden(p.length())));
        }
        let (pa, pb, plen) = parents[&w].clone();
        let lhs = img(cy.hi)? - img(cy.lo)?;
        let rhs = (pb - pa) * R::from_golden(cy.length()) / plen;
        worst = worst.max((lhs - rhs).to_f64().abs());
    }
    Ok((worst, picked.len(), population))
}

fn flatness_grid<R: Real>(s: &Schedule, t: usize, points: usize) -> Result<f64> {
    let c = Circle::<R>::new(s);
    let m = s.big_m(t);
    let mut worst = 0.0f64;
    for x in grid::<R>(points) {
        let r = c.eval_h(m, &x)?.1 / c.eval_h(m - 1, &x)?.1;
        worst = worst.max(r.to_f64().ln().abs());
    }
    Ok(worst)
}

/// Exact check that, off the collars of stages after `M_t`, the point at
/// relative position `1/phi` of a depth-`n` cylinder keeps that relative
/// position under `H_{n-1}`.
fn proportion_transport(s: &Schedule, t: usize, cap: usize) -> Result<(usize, usize, usize)> {
    let exact = Circle::<FieldElement>::new(s);
    let float = Circle::<f64>::new(s);
    let ip = FieldElement::inv_phi();
    let m = s.big_m(t);
    let top = s.big_n(t + 1).min(s.max_depth());
    let mut collars: HashMap<crate::symbolic::Word, Vec<(f64, f64)>> = HashMap::new();
    let (mut bad, mut checked, mut population) = (0, 0, 0);
    for n in m + 1..=top {
        let mut clean = Vec::new();
        for cy in enumerate_cylinders(n) {
            let (lo, hi) = (cy.lo.to_f64(), cy.hi.to_f64());
            let pad = 1e-9 * (hi - lo);
            let mut hit = false;
            for k in m + 1..n {
                let u = cy.word.prefix(k);
                if !collars.contains_key(&u) {
                    let iv = float.bad_set(k, &u)?.intervals;
                    collars.insert(u.clone(), iv);
                }
                if collars[&u].iter().any(|(p, q)| *p < hi + pad && *q > lo - pad) {
                    hit = true;
                    break;
                }
            }
            if !hit {
                clean.push(cy);
            }
        }
        population += clean.len();
        for cy in strided(clean, cap) {
            let h = |e: GoldenInt| -> Result<FieldElement> {
                if e == GoldenInt::ONE {
                    Ok(FieldElement::one())
                } else {
                    Ok(exact.eval_point(n - 1, &Pt::golden(e))?.value)
                }
            };
            let xi = cy.lo_field() + &ip * &cy.length().to_field();
            let (a, b) = (h(cy.lo)?, h(cy.hi)?);
            let v = exact.eval_h(n - 1, &xi)?.0;
            if (v - &a) / (b - &a) != ip {
                bad += 1;
            }
            checked += 1;
        }
    }
    Ok((bad, checked, population))
}

fn correction_flatness(s: &Schedule, o: &VerifyOptions) -> Result<Vec<Check>> {
    let stages = correction_stages(s);
    let label = if o.exact() { "exact".to_string() } else { with_float!(o.float_bits(), R => arith::<R>()) };
    let tol = 2f64.powi(-40);
    let (mut eq16, mut eq16_n, mut eq16_pop) = (0.0f64, 0, 0);
    let (mut flat_ratio, mut flat_n) = (0.0f64, 0);
    let (mut moved, mut moved_n, mut moved_pop) = (0, 0, 0);
    let flat_label = with_float!(o.float_bits(), R => arith::<R>());
    for &t in &stages {
        if t < top_stage(s) {
            let (w, k, p) = if o.exact() {
                mass_ratio_residual::<FieldElement>(s, t, o.exact_cap)?
            } else {
                with_float!(o.float_bits(), R => mass_ratio_residual::<R>(s, t, usize::MAX)?)
            };
            eq16 = eq16.max(w);
            eq16_n += k;
            eq16_pop += p;
            let (b, k, p) = proportion_transport(s, t, o.transport_cap)?;
            moved += b;
            moved_n += k;
            moved_pop += p;
        }
        let worst = with_float!(o.float_bits(), R => flatness_grid::<R>(s, t, o.grid)?);
        flat_ratio = flat_ratio.max(worst / flatness_delta(s, t));
        flat_n += o.grid;
    }
    Ok(vec![
        Check::new("mass_proportional_correction", Relation::AtMost, eq16, tol, &label, eq16_n).of(eq16_pop),
        Check::new("correction_flatness", Relation::AtMost, flat_ratio, 1.0, &flat_label, flat_n),
        Check::exact("golden_proportion_transport", moved, moved_n).of(moved_pop),
    ])
}

fn cylinder_averages<R: Real>(d: &Density<R>, cap: usize) -> Result<(f64, usize, usize)> {
    let s = d.schedule();
    let (mut worst, mut n, mut pop) = (0.0f64, 0, 0);
    for t in 1..s.num_stages() {
        let all = enumerate_cylinders(s.big_n(t));
        pop += all.len();
        for cy in strided(all, cap) {
            let a = d.cylinder_average(t, cy.lo, cy.hi)?;
            let b = d.cylinder_average(t + 1, cy.lo, cy.hi)?;
            worst = worst.max((a - b).to_f64().abs());
            n += 1;
        }
    }
    Ok((worst, n, pop))
}

fn expectation_error<R: Real>(d: &Density<R>, stages: &[usize]) -> Result<f64> {
    let mut worst = 0.0f64;
    for &t in stages {
        worst = worst.max((d.expectation(t)? - R::one()).to_f64().abs());
    }
    Ok(worst)
}

fn martingale(s: &Schedule, o: &VerifyOptions) -> Result<Vec<Check>> {
    let tol = 2f64.powi(-40);
    let top = top_stage(s);
    let mut checks = Vec::new();
    if o.exact() {
        let d = Density::<FieldElement>::new(s);
        let (avg, n, pop) = cylinder_averages(&d, o.exact_cap)?;
        checks.push(Check::new("cylinder_averages", Relation::AtMost, avg, tol, "exact", n).of(pop));
        // exact expectations sum every depth-N_t cylinder; deep stages use doubles
        let (small, large): (Vec<usize>, Vec<usize>) =
            (1..=top).partition(|&t| crate::symbolic::word_count(s.big_n(t)) <= o.exact_cap as u128);
        let mut worst = expectation_error(&d, &small)?;
        let mut label = "exact".to_string();
        if !large.is_empty() {
            worst = worst.max(expectation_error(&Density::<f64>::new(s), &large)?);
            label = "float53".into();
        }
        checks.push(Check::new("expectation", Relation::AtMost, worst, tol, &label, top));
    } else {
        with_float!(o.float_bits(), R => {
            let d = Density::<R>::new(s);
            let (avg, n, pop) = cylinder_averages(&d, usize::MAX)?;
            checks.push(Check::new("cylinder_averages", Relation::AtMost, avg, tol, &arith::<R>(), n).of(pop));
            let worst = expectation_error(&d, &(1..=top).collect::<Vec<_>>())?;
            checks.push(Check::new("expectation", Relation::AtMost, worst, tol, &arith::<R>(), top));
        });
    }
    let d = Density::<f64>::new(s);
    let levels = [0.5, 0.9, 0.99, 1.0, 1.001, 1.01, 1.1, 2.0, 4.0];
    let ui = d.ui_diagnostic(top, &levels, 8)?;
    checks.push(Check::exact("tail_monotone", usize::from(!ui.monotone), levels.len()));
    Ok(checks)
}

fn equivariance<R: Real>(s: &Schedule, n: usize, pairs: usize) -> Result<(f64, usize)> {
    let f = Fibered::<R>::new(s);
    let horizontal: Vec<_> = gluing_table().iter().filter(|g| !g.from.vertical).collect();
    let per = pairs.div_ceil(horizontal.len().max(1));
    let mut worst = 0.0f64;
    let mut count = 0;
    for g in horizontal {
        let (dx, _) = g.shift();
        let (dxr, y0, y1) = (R::from_field(&dx), R::from_field(&g.from.at), R::from_field(&g.to.at));
        for k in 0..per {
            let x = &g.from.lo + &(g.from.length() * fe(2 * k as i64 + 1, 2 * per as i64));
            let x = R::from_field(&x);
            let a = f.eval_k(n, &x, &y0)?.value;
            let b = f.eval_k(n, &(x + dxr.clone()), &y1)?.value;
            worst = worst.max((a + dxr.clone() - b).to_f64().abs());
            count += 1;
        }
    }
    Ok((worst, count))
}

fn gluing(s: &Schedule, o: &VerifyOptions) -> Result<Vec<Check>> {
    let mut bad = 0;
    let mut count = 0;
    for g in gluing_table() {
        for k in 0..=16 {
            let t = fe(k, 16);
            let free = &g.from.lo + &(&t * &g.from.length());
            let p = if g.from.vertical {
                ManifoldPoint { x: g.from.at.clone(), y: free }
            } else {
                ManifoldPoint { x: free, y: g.from.at.clone() }
            };
            count += 1;
            match g.glue(&p) {
                Some(q) if g.unglue(&q).as_ref() == Some(&p) && identified(&p, &q) && q.in_domain() => {}
                _ => bad += 1,
            }
        }
    }
    let n = s.max_depth();
    let (worst, pairs, label) = if o.exact() {
        let (w, c) = equivariance::<FieldElement>(s, n, o.pairs)?;
        (w, c, "exact".to_string())
    } else {
        with_float!(o.float_bits(), R => {
            let (w, c) = equivariance::<R>(s, n, o.pairs)?;
            (w, c, arith::<R>())
        })
    };
    let bound = if o.exact() { 0.0 } else { 1e-12 };
    Ok(vec![
        Check::exact("gluing_round_trips", bad, count),
        Check::new("boundary_equivariance", Relation::AtMost, worst, bound, &label, pairs),
    ])
}

fn side_image(s: &Side) -> (FieldElement, FieldElement, FieldElement) {
    let lo = f_tilde(&ManifoldPoint { x: s.lo.clone(), y: s.level.y() });
    let hi_x = &lo.x + &(FieldElement::phi() * (&s.hi - &s.lo));
    (lo.y, lo.x, hi_x)
}

fn coupling_motion<R: Real>(s: &Schedule, top: usize) -> Result<(f64, usize)> {
    let f = Fibered::<R>::new(s);
    let ip = 1.0 / crate::numerics::phi::<f64>();
    let mut worst = 0.0f64;
    let mut count = 0;
    for j in 1..=top {
        let v = coupling_segment(j);
        let scale = ip.powi(3 - j as i32);
        for side in [&v.upper, &v.lower] {
            let len = &side.hi - &side.lo;
            for i in 0..200 {
                let x = R::from_field(&(&side.lo + &(&len * &fe(i, 200))));
                let h = f.eval_h(j, &x)?.0;
                worst = worst.max((h - x).to_f64().abs() / scale);
                count += 1;
            }
        }
    }
    Ok((worst, count))
}

fn coupling_cascade(s: &Schedule, o: &VerifyOptions) -> Result<Vec<Check>> {
    let mut bad = 0;
    for j in 2..=12 {
        let v = coupling_segment(j);
        let w = coupling_segment(j - 1);
        if side_image(&v.upper) != (w.lower.level.y(), w.lower.lo.clone(), w.lower.hi.clone()) {
            bad += 1;
        }
        if side_image(&v.lower) != (w.upper.level.y(), w.upper.lo.clone(), w.upper.hi.clone()) {
            bad += 1;
        }
    }
    let v = coupling_segment(1);
    let mut first = 0;
    for side in [&v.upper, &v.lower] {
        if side_image(side) != (Level::Middle.y(), FieldElement::zero(), FieldElement::inv_phi()) {
            first += 1;
        }
    }
    let top = 14.min(s.max_depth());
    let (worst, count, label) = with_float!(o.float_bits(), R => {
        let (w, c) = coupling_motion::<R>(s, top)?;
        (w, c, arith::<R>())
    });
    Ok(vec![
        Check::exact("cascade", bad, 22),
        Check::exact("first_segment_image", first, 2),
        Check::new("coupling_cylinder_motion", Relation::AtMost, worst, 1.0, &label, count),
    ])
}

fn q_identities(s: &Schedule) -> Result<Vec<Check>> {
    let f = Fibered::<FieldElement>::new(s);
    let c = collar_width::<FieldElement>();
    let half = &c / &fe(2, 1);
    let (mut bad, mut count) = (0, 0);
    for j in [1, 2, 5, 9, 13].into_iter().filter(|&j| j <= s.max_depth()) {
        for k in 1..8 {
            let x = fe(k, 8);
            let h = f.eval_h(j, &x)?.0;
            let q0 = f.q_interp(j, &x, &FieldElement::zero())?;
            let q1 = f.q_interp(j, &x, &c)?;
            let peak = f.q_interp(j, &x, &half)?.du.abs();
            let want = fe(3, 2) * FieldElement::phi().pow(10) * (&h - &x).abs();
            let mut ok = q0.value == x && q1.value == h && q0.du.is_zero() && q1.du.is_zero() && peak == want;
            for m in 0..=16 {
                ok &= f.q_interp(j, &x, &(&c * &fe(m, 16)))?.du.abs() <= want;
            }
            bad += usize::from(!ok);
            count += 1;
        }
    }
    Ok(vec![Check::exact("q_identities", bad, count)])
}

fn proximity<R: Real>(s: &Schedule, n: usize, side: usize) -> Result<f64> {
    let f = Fibered::<R>::new(s);
    let c = collar_width::<f64>();
    let (bot, mid, top) = (bottom_level::<f64>(), middle_level::<f64>(), top_level::<f64>());
    let ip = 1.0 / crate::numerics::phi::<f64>();
    let mut worst = 0.0f64;
    let (half, quarter) = (side / 2, side / 4);
    for ix in 0..side {
        let x = (ix as f64 + 0.5) / side as f64;
        let ceil = if x < ip { top } else { mid };
        for iy in 0..side {
            // half the rows spread over the fiber, the rest inside the two collars
            let y = if iy < half {
                bot + (ceil - bot) * (iy as f64 + 0.5) / half as f64
            } else if iy < half + quarter {
                bot + c * (iy - half) as f64 / quarter as f64
            } else {
                ceil - c * (iy - half - quarter) as f64 / (side - half - quarter) as f64
            };
            let tr = f.trace_k(n, &R::from_f64(x), &R::from_f64(y))?;
            for k in 1..tr.len() {
                worst = worst.max((tr[k].clone() - tr[k - 1].clone()).to_f64().abs() * 1.5f64.powi(k as i32));
            }
        }
    }
    Ok(worst)
}

fn jacobian_points() -> Vec<(FieldElement, FieldElement)> {
    vec![
        (fe(1, 5), fe(1, 7)),
        (fe(3, 10), fe(-3, 10)),
        (fe(7, 10), FieldElement::zero()),
        (fe(1, 20), top_level::<FieldElement>() - fe(3, 1000)),
        (fe(4, 5), bottom_level::<FieldElement>() + fe(1, 250)),
        (fe(2, 5), fe(1, 2)),
    ]
}

fn y_derivative(s: &Schedule, o: &VerifyOptions) -> Result<Vec<Check>> {
    let n = s.big_n(top_stage(s));
    let grid = AuditGrid { nx: o.audit_nx, nu: o.audit_nu, step: o.audit_step };
    let (audit, near, label) = with_float!(o.float_bits(), R => {
        let f = Fibered::<R>::new(s);
        (f.y_derivative_audit(n, grid)?, proximity::<R>(s, n, o.grid2d)?, arith::<R>())
    });
    let (mut inner, mut edge, mut inner_n, mut edge_n) = (0.0f64, 0.0f64, 0, 0);
    for r in &audit.rows {
        let m = r.analytic.abs().max(r.finite_difference.abs());
        if r.kind == AuditKind::Interior {
            inner = inner.max(m / r.bound);
            inner_n += 1;
        } else {
            edge = edge.max(m);
            edge_n += 1;
        }
    }

    let exact = Fibered::<FieldElement>::new(s);
    let ip = FieldElement::inv_phi();
    let mut structure = 0;
    let pts = jacobian_points();
    for (x, y) in &pts {
        let z = exact.eval_z(n, &ManifoldPoint::new(x.clone(), y.clone())?)?;
        structure += usize::from(!z.jacobian[1][0].is_zero()) + usize::from(z.jacobian[1][1] != -ip.clone());
    }

    type H = HpFloat<128>;
    let hp = Fibered::<H>::new(s);
    let h = H::from_f64(o.fd_step);
    let (mut fd, mut smooth) = (0.0f64, 0);
    for (x, y) in &pts {
        let p = ManifoldPoint::new(H::from_field(x), H::from_field(y))?;
        let z = hp.eval_z(n, &p)?;
        let j = hp.jacobian_fd(n, &p, &h)?;
        if !j.smooth {
            continue;
        }
        smooth += 1;
        for a in 0..2 {
            for b in 0..2 {
                let e = (z.jacobian[a][b].clone() - j.jacobian[a][b].clone()).to_f64().abs();
                fd = fd.max(e / (o.fd_step * o.fd_step));
            }
        }
    }
    Ok(vec![
        Check::new("collar_y_derivative", Relation::AtMost, inner, 1.0, &label, inner_n),
        Check::new("boundary_y_derivative", Relation::AtMost, edge, 10.0 * o.audit_step, &label, edge_n),
        Check::new("fiber_proximity", Relation::AtMost, near, 1.0, &label, o.grid2d * o.grid2d),
        Check::exact("jacobian_structure", structure, 2 * pts.len()),
        Check::new("jacobian_finite_difference", Relation::AtMost, fd, 100.0, "float128", smooth).of(pts.len()),
    ])
}

fn hyperbolicity(s: &Schedule, o: &VerifyOptions) -> Result<Vec<Check>> {
    let n = s.big_n(top_stage(s));
    let (rep, base, label) = with_float!(o.float_bits(), R => {
        let f = Fibered::<R>::new(s);
        (
            f.hyperbolicity_certificate(n, o.orbits, o.horizon, o.seed)?,
            f.hyperbolicity_certificate(0, o.orbits.min(10), o.horizon, o.seed)?,
            arith::<R>(),
        )
    });
    let phi = crate::numerics::phi::<f64>();
    let (lo, hi) = (1.6 / phi - 1e-9, 1.7 / phi + 1e-9);
    let det = if rep.min_abs_det < lo {
        Check::new("det_band", Relation::AtLeast, rep.min_abs_det, lo, &label, o.orbits * o.horizon)
    } else {
        Check::new("det_band", Relation::AtMost, rep.max_abs_det, hi, &label, o.orbits * o.horizon)
    };
    let ln_phi = phi.ln();
    let exp = (base.mean_top_exponent - ln_phi).abs().max((base.mean_bottom_exponent + ln_phi).abs());
    Ok(vec![
        Check::new("normalized_growth", Relation::AtLeast, rep.min_step_growth, 1.52 - 0.01, &label, o.orbits * o.horizon),
        det,
        Check::new("linear_model_exponents", Relation::AtMost, exp, 1e-10, &label, o.orbits.min(10)),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::base_case_schedule;

    #[test]
    fn suite_names_round_trip() {
        for s in Suite::ALL {
            assert_eq!(s.name().parse::<Suite>().unwrap(), s);
            assert_eq!(serde_json::to_string(&s).unwrap(), format!("\"{}\"", s.name()));
        }
        assert!("tilings".parse::<Suite>().is_err());
    }

    #[test]
    fn relations_decide_pass() {
        assert!(Check::new("a", Relation::AtMost, 1.0, 1.0, "exact", 1).pass);
        assert!(!Check::new("a", Relation::Below, 1.0, 1.0, "exact", 1).pass);
        assert!(Check::new("a", Relation::AtLeast, 2.0, 1.0, "exact", 1).pass);
        assert!(!Check::exact("a", 1, 5).pass);
    }

    #[test]
    fn strided_subsets_are_even() {
        let v: Vec<usize> = (0..10).collect();
        assert_eq!(strided(v.clone(), 20), v);
        assert_eq!(strided(v, 5), vec![0, 2, 4, 6, 8]);
    }

    #[test]
    fn tiling_passes_on_base_case() {
        let o = VerifyOptions { tiling_depth: 8, ..VerifyOptions::default() };
        let r = run_suite(Suite::Tiling, &base_case_schedule(), &o).unwrap();
        assert!(r.pass, "{r:?}");
    }

    #[test]
    fn unsupported_precision_is_rejected() {
        let o = VerifyOptions { backend: Backend::Float { bits: 99 }, ..VerifyOptions::default() };
        assert!(run_suite(Suite::Tiling, &base_case_schedule(), &o).is_err());
    }
}
