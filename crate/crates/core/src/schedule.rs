//! Parameter schedules `{lambda_t, n_t, N_t, m_t, M_t, eps_t}` and their
//! certificates.
//!
//! Distortions are placed on a lattice: `f(lambda_t) = theta^(a_t)` with
//! `a_t = 2^(K - t)`, so every lattice relation between stages holds exactly in
//! Q(sqrt 5).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::{
    self, empirical_frequency_prob, lattice_f, lattice_f_inv, matrix_q, matrix_q_lambda, mixing_time, pi_q,
    Block, FrequencyEvent, FrequencyOptions, MeasureSpec,
};
use crate::numerics::FieldElement;
use crate::symbolic::{child_cylinders, partition_interval, Word};

/// Tolerances for the desk-scale profile.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ToyParams {
    /// First block length; `None` chooses it from the derivative band.
    pub n1: Option<usize>,
    /// First gap length; `None` solves for it.
    pub m1: Option<usize>,
    /// Radius around `1/sqrt5` for the symbol-frequency event.
    pub freq_radius: f64,
    /// Allowed failure probability of both frequency events.
    pub freq_failure: f64,
    /// Block length must be at least this multiple of the lattice exponent.
    pub lattice_factor: usize,
    /// Multiplicative mixing tolerance.
    pub mixing_tolerance: f64,
    /// Per-window decay in the tail bound `(1 - d)^(m/4k) <= 1/t`.
    pub decay: f64,
    /// Allowed `|log h'|` of the correction stages.
    pub flatness: f64,
    pub enforce_band: bool,
    pub enforce_conservative: bool,
    pub require_k_gt_n: bool,
}

impl Default for ToyParams {
    fn default() -> Self {
        ToyParams {
            n1: None,
            m1: None,
            freq_radius: 0.25,
            freq_failure: 0.5,
            lattice_factor: 2,
            mixing_tolerance: 0.25,
            decay: 0.5,
            flatness: 1.0 / 64.0,
            enforce_band: true,
            enforce_conservative: false,
            require_k_gt_n: false,
        }
    }
}

impl ToyParams {
    /// The smallest base case (`n_1 = 2`, `m_1 = 3`), with the derivative band
    /// reported but not enforced.
    pub fn base_case() -> Self {
        ToyParams { n1: Some(2), m1: Some(3), enforce_band: false, ..ToyParams::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Profile {
    /// Every inequality at full strength; the first block ends beyond depth 20.
    Strict,
    Toy(ToyParams),
}

impl Profile {
    pub fn toy() -> Self {
        Profile::Toy(ToyParams::default())
    }

    pub fn name(&self) -> &'static str {
        match self {
            Profile::Strict => "strict",
            Profile::Toy(_) => "toy",
        }
    }
}

/// Parameters of stage `t`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageParams {
    pub t: usize,
    pub lambda: FieldElement,
    /// Lattice exponent: `f(lambda) = theta^a`.
    pub a: u64,
    pub n: usize,
    pub big_n: usize,
    pub m: usize,
    pub big_m: usize,
    pub eps: FieldElement,
    /// Mixing time used for the gap.
    pub k_mix: u64,
    pub eps_bounds: EpsilonBounds,
}

/// The three upper bounds on the collar width of a stage.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpsilonBounds {
    /// Relative distance of sub-cylinder endpoints from the collar anchors.
    #[serde(with = "extended_f64")]
    pub geometric: f64,
    /// Relative length of the leftmost deep sub-cylinder (correction collar).
    #[serde(with = "extended_f64")]
    pub collar: f64,
    /// Budget `2^-t / (4 n_t)` for the total bad-set measure.
    #[serde(with = "extended_f64")]
    pub budget: f64,
}

impl EpsilonBounds {
    pub fn min(&self) -> f64 {
        self.geometric.min(self.collar).min(self.budget)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    /// Stage index, or 0 for schedule-wide checks.
    pub stage: usize,
    pub name: String,
    pub statement: String,
    #[serde(with = "extended_f64")]
    pub value: f64,
    #[serde(with = "extended_f64")]
    pub bound: f64,
    pub pass: bool,
    /// Advisory certificates are reported but do not fail the schedule.
    pub enforced: bool,
}

/// JSON has no infinities or NaN; those are written as the strings
/// `"inf"`, `"-inf"` and `"nan"`.
pub(crate) mod extended_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> std::result::Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("not a number: {other}"))),
            },
        }
    }
}

/// A built schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Schedule {
    pub profile: Profile,
    pub theta: FieldElement,
    pub stages: Vec<StageParams>,
    pub certificates: Vec<Certificate>,
}

/// What stage `n` of the circle construction does.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StageKind {
    /// Stage 1 (the trivial correction) and the gaps `N_t < n < M_t`.
    Identity,
    /// Rescaled `psi_t` on cylinders whose last symbol is 1.
    Psi(usize),
    /// Distribution correction at `n = M_t` with collar `eps_{t+1}`.
    Correction(usize),
}

pub const M0: usize = 1;

impl Schedule {
    pub fn stage(&self, t: usize) -> &StageParams {
        &self.stages[t - 1]
    }

    pub fn num_stages(&self) -> usize {
        self.stages.len()
    }

    pub fn big_m(&self, t: usize) -> usize {
        if t == 0 {
            M0
        } else {
            self.stage(t).big_m
        }
    }

    pub fn big_n(&self, t: usize) -> usize {
        self.stage(t).big_n
    }

    /// Deepest stage that can be evaluated: the correction at `M_K` needs `eps_{K+1}`.
    pub fn max_depth(&self) -> usize {
        self.stages.last().map(|s| s.big_m - 1).unwrap_or(0)
    }

    pub fn stage_kind(&self, n: usize) -> Result<StageKind> {
        if n == 0 || n > self.max_depth() {
            return Err(Error::OutOfRange(format!("stage {n} outside 1..={}", self.max_depth())));
        }
        if n == M0 {
            return Ok(StageKind::Identity);
        }
        for s in &self.stages {
            let prev_m = self.big_m(s.t - 1);
            if n > prev_m && n <= s.big_n {
                return Ok(StageKind::Psi(s.t));
            }
            if n > s.big_n && n < s.big_m {
                return Ok(StageKind::Identity);
            }
            if n == s.big_m {
                return Ok(StageKind::Correction(s.t));
            }
        }
        Err(Error::OutOfRange(format!("stage {n}")))
    }

    /// Collar width used at stage `n`.
    pub fn stage_eps(&self, n: usize) -> Result<FieldElement> {
        Ok(match self.stage_kind(n)? {
            StageKind::Identity => FieldElement::zero(),
            StageKind::Psi(t) => self.stage(t).eps.clone(),
            StageKind::Correction(t) => self.stage(t + 1).eps.clone(),
        })
    }

    pub fn all_passed(&self) -> bool {
        self.certificates.iter().all(|c| c.pass || !c.enforced)
    }

    pub fn failures(&self) -> Vec<&Certificate> {
        self.certificates.iter().filter(|c| c.enforced && !c.pass).collect()
    }

    /// Same schedule with collar widths replaced stage by stage.
    pub fn with_epsilons(&self, f: impl Fn(usize) -> FieldElement) -> Schedule {
        let mut s = self.clone();
        for st in &mut s.stages {
            st.eps = f(st.t);
        }
        s
    }

    /// All collars removed (the piecewise-affine version).
    pub fn zero_eps(&self) -> Schedule {
        self.with_epsilons(|_| FieldElement::zero())
    }

    /// Collars kept for stages `t <= k`, removed afterwards.
    pub fn eps_truncated(&self, k: usize) -> Schedule {
        self.with_epsilons(|t| if t <= k { self.stage(t).eps.clone() } else { FieldElement::zero() })
    }

    /// Blocks `[M_{t-1}, N_t)` carrying `Q_{lambda_t}`.
    pub fn blocks(&self) -> Vec<Block> {
        self.stages
            .iter()
            .map(|s| Block {
                start: self.big_m(s.t - 1) as i64,
                end: s.big_n as i64,
                matrix: matrix_q_lambda(&s.lambda).expect("lambda >= 1"),
            })
            .collect()
    }

    /// Measure with stationary past (`pi_j = pi_Q` for `j <= 0`).
    pub fn measure_stationary(&self) -> MeasureSpec {
        MeasureSpec::new(pi_q(), 0, self.blocks()).expect("valid blocks")
    }

    /// The measure pushed to the circle: letter `i` of a word is position `i - 1`,
    /// and the law of the first letter is Lebesgue measure of the `J_i`.
    pub fn measure_circle(&self) -> MeasureSpec {
        MeasureSpec::new(markov::lebesgue_init(), 0, self.blocks()).expect("valid blocks")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("serializable")
    }

    pub fn from_json(s: &str) -> Result<Schedule> {
        serde_json::from_str(s).map_err(|e| Error::Parse(e.to_string()))
    }
}

fn two_pow_neg(e: usize) -> FieldElement {
    FieldElement::from_ratio(1, 2).pow(e as u64)
}

fn ln_lambda(lambda: &FieldElement) -> f64 {
    (lambda - &FieldElement::one()).to_f64().ln_1p()
}

/// Closed-form `lambda_t` with `f(lambda_t)^p = f(lambda_prev)`, given
/// `r = f(lambda_t)` as an exact root.
pub fn solve_lambda(prev: &FieldElement, p: u64, root: &FieldElement) -> Result<FieldElement> {
    if *prev <= FieldElement::one() {
        return Err(Error::InvalidArgument("previous lambda must exceed 1".into()));
    }
    if p < 2 {
        return Err(Error::InvalidArgument("lattice exponent must be at least 2".into()));
    }
    if root.pow(p) != lattice_f(prev) {
        return Err(Error::InvalidArgument("root^p does not equal f(previous lambda)".into()));
    }
    let lambda = lattice_f_inv(root)?;
    if lambda <= FieldElement::one() {
        return Err(Error::Infeasible("root gives lambda <= 1".into()));
    }
    Ok(lambda)
}

/// Smallest `m` with `(m - big_n) lambda1^(-2 big_n) >= 1`, or `None` when it
/// exceeds `2^50`.
pub fn conservative_gap(lambda1: &FieldElement, big_n: usize) -> Option<usize> {
    let need = lambda1.pow(2 * big_n as u64);
    let approx = need.to_f64();
    if !approx.is_finite() || approx > 2f64.powi(50) {
        return None;
    }
    let mut extra = approx.ceil().max(0.0) as i64;
    while FieldElement::from_int(extra) < need {
        extra += 1;
    }
    while extra > 0 && FieldElement::from_int(extra - 1) >= need {
        extra -= 1;
    }
    Some(big_n + extra as usize)
}

/// Smallest `m` with `(1 - d)^(m / 4k) <= 1/t`.
pub fn tail_gap(t: usize, k: u64, log_one_minus_d: f64) -> Result<usize> {
    if t <= 1 {
        return Ok(0);
    }
    let need = 4.0 * k as f64 * (t as f64).ln() / (-log_one_minus_d);
    if !need.is_finite() || need > 1e15 {
        return Err(Error::Infeasible(format!(
            "tail bound for stage {t} needs a gap of about {need:.3e}, beyond the integer budget"
        )));
    }
    Ok(need.ceil() as usize)
}

/// Relative length of the extreme descendant `depth` levels below a cylinder
/// whose word begins with `start`, following the leftmost (or rightmost) child each time.
fn extreme_relative_length(start: &[u8], depth: usize, leftmost: bool) -> f64 {
    let last = start[0];
    let (lo0, hi0) = partition_interval(last);
    let mut word = Word::from_vec_unchecked(vec![last]);
    let (mut lo, mut hi) = (lo0, hi0);
    let mut forced = start[1..].iter();
    for _ in 0..depth {
        let kids = child_cylinders(&word, lo, hi);
        let pick = match forced.next() {
            Some(s) => kids.into_iter().find(|c| c.word.last() == *s).expect("admissible"),
            None if leftmost => kids.into_iter().next().expect("nonempty"),
            None => kids.into_iter().last().expect("nonempty"),
        };
        word = pick.word;
        lo = pick.lo;
        hi = pick.hi;
    }
    ((hi - lo).to_f64()) / ((hi0 - lo0).to_f64())
}

/// Upper bounds on `eps_t` for block length `n_t`.
pub fn solve_epsilon(t: usize, n_t: usize) -> EpsilonBounds {
    let j = n_t.max(1);
    // anchors 0, 1/phi, 1 of a cylinder ending in 1: left end, the split
    // between the `1` and `3` children, right end
    let geometric = [
        extreme_relative_length(&[1], j, true),
        extreme_relative_length(&[1, 1], j, false),
        extreme_relative_length(&[1, 3], j, true),
        extreme_relative_length(&[1, 3], j, false),
    ]
    .into_iter()
    .fold(f64::INFINITY, f64::min);
    let collar = if t == 1 {
        f64::INFINITY
    } else {
        [1u8, 2, 3].iter().map(|&s| extreme_relative_length(&[s], j, true)).fold(f64::INFINITY, f64::min)
    };
    let budget = 0.5f64.powi(t as i32) / (4.0 * n_t as f64);
    EpsilonBounds { geometric, collar, budget }
}

/// Largest `2^-e` strictly below `bound`.
fn dyadic_below(bound: f64) -> (FieldElement, usize) {
    let mut e = 1usize;
    while 0.5f64.powi(e as i32) >= bound {
        e += 1;
    }
    (two_pow_neg(e), e)
}

/// `psi` slopes `(a, b)` for distortion `lambda`.
pub fn psi_slopes(lambda: &FieldElement) -> (FieldElement, FieldElement) {
    let phi = FieldElement::phi();
    let d = (FieldElement::one() + &phi * lambda).inv().expect("positive");
    let p2 = phi.pow(2);
    (&(lambda * &p2) * &d, &p2 * &d)
}

/// Analytic bound on the oscillation of `log H'_{M_t - 1}` over one depth-`M_t`
/// cylinder.
fn flatness_bound(prev: &[StageParams], cur: &StageParams, eps_next_guess: f64, m: usize) -> f64 {
    let phi = FieldElement::phi().to_f64();
    let big_m = cur.big_n + m;
    let all: Vec<&StageParams> = prev.iter().chain(std::iter::once(cur)).collect();
    let log_d: f64 = all.iter().map(|s| 4.0 * s.n as f64 * ln_lambda(&s.lambda)).sum();
    let d = (2.0 * log_d).exp();
    let mut total = 0.0;
    for s in &all {
        let (a, b) = psi_slopes(&s.lambda);
        let spread = (a.to_f64() - 1.0).abs().max((1.0 - b.to_f64()).abs());
        let eps = s.eps.to_f64();
        if eps > 0.0 {
            let lam2 = s.lambda.to_f64().powi(2);
            let c = 15.0 * spread / (4.0 * eps) * lam2;
            total += c * d * phi.powi(3 - (big_m as i32 - s.big_n as i32));
        }
    }
    for s in prev {
        // correction at M_s with collar eps_{s+1}
        let eps = if s.t < all.len() { all[s.t].eps.to_f64() } else { eps_next_guess };
        if eps > 0.0 {
            let c = 15.0 * (d * d - 1.0) / (4.0 * eps);
            total += c * d * phi.powi(3 - (big_m as i32 - s.big_m as i32));
        }
    }
    total
}

/// Stage `t` frequency certificates for block length `n`.
fn frequency_checks(
    spec_prefix: &MeasureSpec,
    start: usize,
    lambda: &FieldElement,
    n: usize,
    radius: &FieldElement,
    failure: &FieldElement,
) -> Result<(f64, f64, f64)> {
    let q = matrix_q_lambda(lambda)?;
    let pi = spec_prefix.marginal(start as i64);
    let centre = pi_q()[0].clone();
    let ev9 = FrequencyEvent::symbol_frequency_band(1, n as u64, &centre, radius);
    let p9 = empirical_frequency_prob(&q, &pi, n as u64, &ev9, FrequencyOptions::default())?;
    let ev10 = FrequencyEvent::pair_frequency_above(2, 3, n as u64, &FieldElement::from_ratio(1, 15));
    let p10 = empirical_frequency_prob(&q, &pi, n as u64 + 1, &ev10, FrequencyOptions::default())?;
    Ok((p9.lower, p10.lower, 1.0 - failure.to_f64()))
}

struct Tolerances {
    freq_radius: FieldElement,
    freq_failure: FieldElement,
    lattice_factor: usize,
    mixing: FieldElement,
    log_one_minus_decay: f64,
    flatness: f64,
    enforce_band: bool,
    enforce_conservative: bool,
    require_k_gt_n: bool,
    n1: Option<usize>,
    m1: Option<usize>,
    min_first_depth: usize,
}

fn tolerances(profile: &Profile, t: usize, big_n: usize) -> Tolerances {
    match profile {
        Profile::Strict => {
            let mixing = FieldElement::from_ratio(1, 3).pow(3 * big_n as u64);
            // log(1 - 9^{-3N}) ~ -9^{-3N}
            let log_decay = -(-(3.0 * big_n as f64) * 9f64.ln()).exp();
            Tolerances {
                freq_radius: two_pow_neg(t),
                freq_failure: FieldElement::from_ratio(1, t as i64),
                lattice_factor: 20,
                mixing,
                log_one_minus_decay: log_decay,
                flatness: 0.5f64.powi(big_n as i32),
                enforce_band: true,
                enforce_conservative: true,
                require_k_gt_n: true,
                n1: None,
                m1: None,
                min_first_depth: 21,
            }
        }
        Profile::Toy(p) => Tolerances {
            freq_radius: FieldElement::from_rational(num_rational::BigRational::from_float(p.freq_radius).expect("finite")),
            freq_failure: FieldElement::from_rational(num_rational::BigRational::from_float(p.freq_failure).expect("finite")),
            lattice_factor: p.lattice_factor,
            mixing: FieldElement::from_rational(num_rational::BigRational::from_float(p.mixing_tolerance).expect("finite")),
            log_one_minus_decay: (1.0 - p.decay).ln(),
            flatness: p.flatness,
            enforce_band: p.enforce_band,
            enforce_conservative: p.enforce_conservative,
            require_k_gt_n: p.require_k_gt_n,
            n1: p.n1,
            m1: p.m1,
            min_first_depth: 0,
        },
    }
}

const LN_BAND_LO: f64 = 0.470_003_629_245_735_5; // ln 1.6
const LN_BAND_HI: f64 = 0.530_628_251_062_170_1; // ln 1.7

/// Worst-case logarithms `(lower, upper)` of the derivative band product.
pub fn band_logs(stages: &[StageParams]) -> (f64, f64) {
    let ln_phi = FieldElement::phi().to_f64().ln();
    let mut lam = 0.0;
    let mut tail = 0.0;
    for (i, s) in stages.iter().enumerate() {
        let prev_m = if i == 0 { M0 } else { stages[i - 1].big_m };
        lam += 2.0 * prev_m as f64 * ln_lambda(&s.lambda);
        tail += 2f64.powi(-(s.big_n as i32) + 4);
    }
    (ln_phi - lam - tail, ln_phi + lam + tail)
}

/// Smallest first-block end with `2^(-N_1 + 4) < ln(phi/1.6)`.
fn band_first_depth() -> usize {
    let room = FieldElement::phi().to_f64().ln() - LN_BAND_LO;
    let mut n = 1;
    while 2f64.powi(-(n as i32) + 4) >= room {
        n += 1;
    }
    n
}

/// Builds all stages for a fixed `theta`.
pub fn build_with_theta(stages: usize, profile: &Profile, theta: &FieldElement) -> Result<Schedule> {
    if stages == 0 {
        return Err(Error::InvalidArgument("a schedule needs at least one stage".into()));
    }
    if *theta <= FieldElement::one() {
        return Err(Error::InvalidArgument("theta must exceed 1".into()));
    }
    if stages > 40 {
        return Err(Error::InvalidArgument("at most 40 stages are supported".into()));
    }
    let mut out: Vec<StageParams> = Vec::new();
    let mut certs: Vec<Certificate> = Vec::new();
    let mut cert = |stage: usize, name: &str, statement: String, value: f64, bound: f64, pass: bool, enforced: bool| {
        certs.push(Certificate { stage, name: name.into(), statement, value, bound, pass, enforced });
    };
    let pi_q_v = pi_q();
    for t in 1..=stages {
        let a = 1u64 << (stages - t);
        let lambda = lattice_f_inv(&theta.pow(a))?;
        let prev_m = out.last().map(|s| s.big_m).unwrap_or(M0);
        let tol = tolerances(profile, t, prev_m);

        // lambda checks
        cert(t, "lambda_gt_one", "lambda_t > 1".into(), lambda.to_f64(), 1.0, lambda > FieldElement::one(), true);
        if let Some(prev) = out.last() {
            cert(
                t,
                "lambda_decreasing",
                "lambda_t < lambda_{t-1}".into(),
                lambda.to_f64(),
                prev.lambda.to_f64(),
                lambda < prev.lambda,
                true,
            );
            let p = prev.a / a;
            let exact = lattice_f(&lambda).pow(p) == lattice_f(&prev.lambda);
            cert(t, "lattice", format!("f(lambda_t)^{p} = f(lambda_{{t-1}})"), p as f64, p as f64, exact, true);
            let lhs = 2.0 * prev.m as f64 * ln_lambda(&lambda);
            let rhs = 0.5f64.powi(t as i32);
            cert(t, "rn_approximation", "lambda_t^(2 m_{t-1}) < exp(2^-t)".into(), lhs, rhs, lhs < rhs, false);
            let lhs = 2.0 * prev.big_m as f64 * ln_lambda(&lambda);
            let rhs = 0.5f64.powi(prev.big_n as i32);
            cert(
                t,
                "rn_approximation_strong",
                "lambda_t^(2 M_{t-1}) <= exp(2^-N_{t-1})".into(),
                lhs,
                rhs,
                lhs <= rhs,
                true,
            );
        }
        let pi_l = markov::stationary(&matrix_q_lambda(&lambda)?)?;
        let gap = (0..3).map(|i| (&pi_q_v[i] - &pi_l[i]).abs()).fold(FieldElement::zero(), FieldElement::max);
        let gap_bound = two_pow_neg(t);
        cert(
            t,
            "stationary_gap",
            "|pi_Q - pi_{Q_t}|_inf < 2^-t".into(),
            gap.to_f64(),
            gap_bound.to_f64(),
            gap < gap_bound,
            true,
        );

        // block length
        let lattice_room = if t == 1 { 1 } else { tol.lattice_factor << (t - 1) };
        let mut lb = lattice_room.max(1);
        if t == 1 {
            let mut depth_floor = tol.min_first_depth;
            if tol.enforce_band {
                depth_floor = depth_floor.max(band_first_depth());
            }
            lb = lb.max(depth_floor.saturating_sub(M0));
        }
        let partial = Schedule { profile: profile.clone(), theta: theta.clone(), stages: out.clone(), certificates: vec![] };
        let spec_prefix = partial.measure_stationary();
        let fixed_n = if t == 1 { tol.n1 } else { None };
        let n = match fixed_n {
            Some(n) => n,
            None => {
                let mut n = lb;
                loop {
                    let (p9, p10, need) =
                        frequency_checks(&spec_prefix, prev_m, &lambda, n, &tol.freq_radius, &tol.freq_failure)?;
                    if p9 > need && p10 > need {
                        break n;
                    }
                    n += 1;
                    if n > 4000 {
                        return Err(Error::Infeasible(format!("frequency events at stage {t} need a block beyond 4000")));
                    }
                }
            }
        };
        cert(
            t,
            "lattice_room",
            format!("n_t >= {} * p(1,t)", tol.lattice_factor),
            n as f64,
            lattice_room as f64,
            n >= lattice_room,
            fixed_n.is_none(),
        );
        let (p9, p10, need) = frequency_checks(&spec_prefix, prev_m, &lambda, n, &tol.freq_radius, &tol.freq_failure)?;
        cert(
            t,
            "symbol_frequency",
            format!("P(|freq of 1 - 1/sqrt5| <= {}) > {need}", tol.freq_radius.to_f64()),
            p9,
            need,
            p9 > need,
            fixed_n.is_none(),
        );
        cert(t, "pair_frequency", format!("P(freq of 23 > 1/15) > {need}"), p10, need, p10 > need, fixed_n.is_none());
        let big_n = prev_m + n;
        if t == 1 && tol.min_first_depth > 0 {
            cert(
                t,
                "first_depth",
                format!("N_1 >= {}", tol.min_first_depth),
                big_n as f64,
                tol.min_first_depth as f64,
                big_n >= tol.min_first_depth,
                true,
            );
        }

        // collar width
        let bounds = solve_epsilon(t, n);
        let (eps, _) = dyadic_below(bounds.min());
        cert(t, "collar_width", "eps_t < min(geometric, collar, budget)".into(), eps.to_f64(), bounds.min(), true, true);

        // mixing of Q
        let tol_n = tolerances(profile, t, big_n);
        let mix = mixing_time::<FieldElement>(&matrix_q(), &tol_n.mixing, 100_000)?;
        let mut k = mix.k;
        if tol_n.require_k_gt_n {
            k = k.max(big_n as u64 + 1);
        }
        cert(
            t,
            "mixing",
            "Q^k(s,t) = (1 +- tau) pi_Q(t)".into(),
            mix.max_ratio.max(2.0 - mix.min_ratio) - 1.0,
            tol_n.mixing.to_f64(),
            true,
            true,
        );
        let mut full_spec_stages = out.clone();
        full_spec_stages.push(StageParams {
            t,
            lambda: lambda.clone(),
            a,
            n,
            big_n,
            m: 0,
            big_m: big_n,
            eps: eps.clone(),
            k_mix: k,
            eps_bounds: bounds.clone(),
        });
        let spec_now = Schedule {
            profile: profile.clone(),
            theta: theta.clone(),
            stages: full_spec_stages.clone(),
            certificates: vec![],
        }
        .measure_stationary();
        let mut v = spec_now.marginal(big_n as i64);
        let q = matrix_q();
        for _ in 0..k {
            v = std::array::from_fn(|j| (0..3).fold(FieldElement::zero(), |acc, i| acc + &v[i] * q.p(i as u8 + 1, j as u8 + 1)));
        }
        let dist = (0..3).map(|i| (&v[i] - &pi_q_v[i]).abs()).fold(FieldElement::zero(), FieldElement::max);
        cert(
            t,
            "mixing_distance",
            "|pi_{N_t} Q^k - pi_Q|_inf < tau".into(),
            dist.to_f64(),
            tol_n.mixing.to_f64(),
            dist < tol_n.mixing,
            true,
        );
        if tol_n.require_k_gt_n {
            cert(t, "mixing_exceeds_depth", "k_t > N_t".into(), k as f64, big_n as f64, k > big_n as u64, true);
        }

        // gap length
        let fixed_m = if t == 1 { tol.m1 } else { None };
        let m_tail = tail_gap(t, k, tol_n.log_one_minus_decay)?;
        let lambda1 = out.first().map(|s| s.lambda.clone()).unwrap_or_else(|| lambda.clone());
        let m_cons = conservative_gap(&lambda1, big_n).map(|m| m - big_n);
        let eps_next_guess = eps.to_f64();
        let cur = full_spec_stages.last().expect("pushed").clone();
        let mut m_flat = 1usize;
        while flatness_bound(&out, &cur, eps_next_guess, m_flat) > tol_n.flatness / 3.0 {
            m_flat += 1;
            if m_flat > 4096 {
                return Err(Error::Infeasible(format!("flatness at stage {t} needs a gap beyond 4096")));
            }
        }
        let m = match fixed_m {
            Some(m) => m,
            None => {
                let mut m = m_tail.max(m_flat).max(1);
                if tol_n.enforce_conservative {
                    let extra = m_cons.ok_or_else(|| {
                        Error::Infeasible(format!("conservativity at stage {t} needs a gap beyond 2^50"))
                    })?;
                    m = m.max(big_n + extra);
                }
                m
            }
        };
        let tail_val = (m as f64 / (4.0 * k.max(1) as f64)) * tol_n.log_one_minus_decay;
        cert(
            t,
            "mixing_tail",
            "(1 - d)^(m_t / 4 k_t) <= 1/t".into(),
            tail_val,
            -(t as f64).ln(),
            m >= m_tail,
            fixed_m.is_none(),
        );
        let cons_val = (m as f64 - big_n as f64) * (-2.0 * big_n as f64 * ln_lambda(&lambda1)).exp();
        cert(
            t,
            "conservativity",
            "(m_t - N_t) lambda_1^(-2 N_t) >= 1".into(),
            cons_val,
            1.0,
            m_cons.is_some_and(|c| m >= big_n + c),
            tol_n.enforce_conservative && fixed_m.is_none(),
        );
        let flat = flatness_bound(&out, &cur, eps_next_guess, m);
        cert(
            t,
            "flatness",
            "oscillation of log H' on depth-M_t cylinders <= delta/3".into(),
            flat,
            tol_n.flatness / 3.0,
            flat <= tol_n.flatness / 3.0,
            fixed_m.is_none(),
        );
        let big_m = big_n + m;
        out.push(StageParams { m, big_m, ..cur });
    }

    let (lo, hi) = band_logs(&out);
    let enforce_band = match profile {
        Profile::Strict => true,
        Profile::Toy(p) => p.enforce_band,
    };
    cert(0, "derivative_band_lower", "phi prod lambda^(-2M) exp(-sum 2^(-N+4)) >= 1.6".into(), lo.exp(), 1.6, lo >= LN_BAND_LO, enforce_band);
    cert(0, "derivative_band_upper", "phi prod lambda^(2M) exp(sum 2^(-N+4)) <= 1.7".into(), hi.exp(), 1.7, hi <= LN_BAND_HI, enforce_band);
    Ok(Schedule { profile: profile.clone(), theta: theta.clone(), stages: out, certificates: certs })
}

/// Builds a schedule, shrinking `theta = 1 + 2^-k` until every enforced
/// certificate passes. With an explicit `theta` no search is done and the
/// caller inspects [`Schedule::all_passed`].
pub fn build_schedule(stages: usize, profile: &Profile, theta: Option<&FieldElement>) -> Result<Schedule> {
    if stages == 0 {
        return Err(Error::InvalidArgument("a schedule needs at least one stage".into()));
    }
    if let Some(theta) = theta {
        return build_with_theta(stages, profile, theta);
    }
    let mut last = None;
    let mut last_err = None;
    for k in 4..=60usize {
        let theta = FieldElement::one() + two_pow_neg(k);
        match build_with_theta(stages, profile, &theta) {
            Ok(s) if s.all_passed() => return Ok(s),
            Ok(s) => last = Some(s),
            Err(e @ Error::Infeasible(_)) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    let Some(s) = last else {
        return Err(last_err.expect("at least one attempt"));
    };
    let names: Vec<String> = s.failures().iter().map(|c| format!("{} (stage {})", c.name, c.stage)).collect();
    Err(Error::Infeasible(format!("no theta = 1 + 2^-k (k <= 60) satisfies: {}", names.join(", "))))
}

/// The base-case toy schedule with two stages.
pub fn base_case_schedule() -> Schedule {
    build_schedule(2, &Profile::Toy(ToyParams::base_case()), None).expect("base case builds")
}

/// Default two-stage toy schedule (derivative band enforced).
pub fn toy_schedule() -> Schedule {
    build_schedule(2, &Profile::toy(), None).expect("toy schedule builds")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn stage_zero_is_an_error() {
        assert!(build_schedule(0, &Profile::toy(), None).is_err());
    }

    #[test]
    fn lambda_lattice_closed_form() {
        let theta = FieldElement::from_ratio(65, 64);
        let prev = lattice_f_inv(&theta.pow(2)).unwrap();
        let l = solve_lambda(&prev, 2, &theta).unwrap();
        assert_eq!(lattice_f(&l), theta);
        assert!(l < prev && l > FieldElement::one());
        assert!(solve_lambda(&FieldElement::one(), 2, &theta).is_err());
        // f(1) = 1
        assert_eq!(lattice_f(&FieldElement::one()), FieldElement::one());
    }

    #[test]
    fn base_case_layout() {
        let s = base_case_schedule();
        assert_eq!((s.stage(1).n, s.stage(1).big_n, s.stage(1).m, s.stage(1).big_m), (2, 3, 3, 6));
        assert!(s.all_passed(), "{:?}", s.failures());
        assert_eq!(s.stage_kind(1).unwrap(), StageKind::Identity);
        assert_eq!(s.stage_kind(2).unwrap(), StageKind::Psi(1));
        assert_eq!(s.stage_kind(3).unwrap(), StageKind::Psi(1));
        assert_eq!(s.stage_kind(4).unwrap(), StageKind::Identity);
        assert_eq!(s.stage_kind(6).unwrap(), StageKind::Correction(1));
        assert_eq!(s.stage_kind(7).unwrap(), StageKind::Psi(2));
    }

    #[test]
    fn conservative_gap_solves_inequality() {
        let l = FieldElement::from_ratio(11, 10);
        let m = conservative_gap(&l, 5).unwrap();
        let need = l.pow(10).to_f64();
        assert!((m - 5) as f64 >= need && ((m - 6) as f64) < need);
    }

    #[test]
    fn epsilon_bounds_shrink_with_depth() {
        let a = solve_epsilon(2, 3);
        let b = solve_epsilon(2, 6);
        let phi = FieldElement::phi().to_f64();
        assert!(b.geometric <= a.geometric * phi.powi(-3) * 1.0001);
        assert!(b.collar < a.collar);
    }

    #[test]
    fn tail_gap_matches_logarithm() {
        // (1/2)^(m/4k) <= 1/2  <=>  m >= 4k
        assert_eq!(tail_gap(2, 3, 0.5f64.ln()).unwrap(), 12);
        assert_eq!(tail_gap(1, 3, 0.5f64.ln()).unwrap(), 0);
        assert!(tail_gap(2, 3, -1e-40).is_err());
    }
}
