//! Stochastic matrices on the golden-mean graph, inhomogeneous Markov
//! measures and the finitary certificates the construction relies on.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{FieldElement, Real};
use crate::symbolic::{allowed, Word};

/// 3x3 stochastic matrix with exact entries; index 0..3 stands for symbols 1..3.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StochasticMatrix {
    pub rows: [[FieldElement; 3]; 3],
}

fn idx(s: u8) -> usize {
    (s - 1) as usize
}

impl StochasticMatrix {
    pub fn new(rows: [[FieldElement; 3]; 3]) -> Result<Self> {
        for (i, r) in rows.iter().enumerate() {
            let sum = r.iter().fold(FieldElement::zero(), |a, b| a + b);
            if sum != FieldElement::one() {
                return Err(Error::InvalidArgument(format!("row {} sums to {sum}", i + 1)));
            }
            if r.iter().any(|v| v.signum() < 0) {
                return Err(Error::InvalidArgument(format!("row {} has a negative entry", i + 1)));
            }
        }
        Ok(StochasticMatrix { rows })
    }

    /// Transition probability from symbol `a` to symbol `b`.
    pub fn p(&self, a: u8, b: u8) -> &FieldElement {
        &self.rows[idx(a)][idx(b)]
    }

    pub fn to_real<R: Real>(&self) -> [[R; 3]; 3] {
        std::array::from_fn(|i| std::array::from_fn(|j| R::from_field(&self.rows[i][j])))
    }

    pub fn support(&self) -> [[bool; 3]; 3] {
        std::array::from_fn(|i| std::array::from_fn(|j| !self.rows[i][j].is_zero()))
    }

    /// `true` when the support equals the golden-mean adjacency.
    pub fn has_golden_support(&self) -> bool {
        let s = self.support();
        (1..=3u8).all(|a| (1..=3u8).all(|b| s[idx(a)][idx(b)] == allowed(a, b)))
    }
}

/// `f(lambda) = lambda (1 + phi) / (1 + phi lambda)`.
pub fn lattice_f(lambda: &FieldElement) -> FieldElement {
    let phi = FieldElement::phi();
    lambda * &(FieldElement::one() + &phi) / (FieldElement::one() + &phi * lambda)
}

/// Inverse of [`lattice_f`]: `lambda = r / ((1 + phi) - phi r)`.
pub fn lattice_f_inv(r: &FieldElement) -> Result<FieldElement> {
    let phi = FieldElement::phi();
    (FieldElement::one() + &phi - &phi * r).inv().map(|d| r * &d)
}

/// The golden-mean matrix (Lebesgue transition law of the doubling-like map).
pub fn matrix_q() -> StochasticMatrix {
    matrix_q_lambda(&FieldElement::one()).expect("lambda = 1 is admissible")
}

/// Distorted matrix with first row `(phi lambda, 0, 1) / (1 + phi lambda)`.
pub fn matrix_q_lambda(lambda: &FieldElement) -> Result<StochasticMatrix> {
    if *lambda < FieldElement::one() {
        return Err(Error::InvalidArgument(format!("lambda must be >= 1, got {lambda}")));
    }
    let phi = FieldElement::phi();
    let one = FieldElement::one();
    let zero = FieldElement::zero();
    let d1 = (&one + &(&phi * lambda)).inv()?;
    let d2 = (&one + &phi).inv()?;
    Ok(StochasticMatrix {
        rows: [
            [&(&phi * lambda) * &d1, zero.clone(), d1.clone()],
            [&phi * &d2, zero.clone(), d2.clone()],
            [zero.clone(), one.clone(), zero],
        ],
    })
}

fn bool_mul(a: &[[bool; 3]; 3], b: &[[bool; 3]; 3]) -> [[bool; 3]; 3] {
    std::array::from_fn(|i| std::array::from_fn(|j| (0..3).any(|k| a[i][k] && b[k][j])))
}

/// Classify the support graph: `Ok(())` when primitive.
pub fn check_primitive(p: &StochasticMatrix) -> Result<()> {
    let s = p.support();
    // strongly connected?
    let mut reach = s;
    for _ in 0..3 {
        let r2 = bool_mul(&reach, &s);
        reach = std::array::from_fn(|i| std::array::from_fn(|j| reach[i][j] || r2[i][j]));
    }
    if reach.iter().flatten().any(|v| !v) {
        return Err(Error::Reducible);
    }
    // Wielandt: a primitive 3x3 pattern has a positive power of order <= 5
    let mut pow = s;
    for _ in 1..=5 {
        if pow.iter().flatten().all(|v| *v) {
            return Ok(());
        }
        pow = bool_mul(&pow, &s);
    }
    Err(Error::Periodic)
}

/// Unique stationary distribution of a primitive matrix, solved exactly.
pub fn stationary(p: &StochasticMatrix) -> Result<[FieldElement; 3]> {
    check_primitive(p)?;
    // rows: (P^T - I) for states 1,2 and the normalisation row
    let mut m: Vec<Vec<FieldElement>> = (0..2)
        .map(|i| {
            let mut row: Vec<FieldElement> = (0..3).map(|j| p.rows[j][i].clone()).collect();
            row[i] = &row[i] - &FieldElement::one();
            row.push(FieldElement::zero());
            row
        })
        .collect();
    m.push(vec![FieldElement::one(), FieldElement::one(), FieldElement::one(), FieldElement::one()]);
    let sol = gauss_solve(m)?;
    Ok([sol[0].clone(), sol[1].clone(), sol[2].clone()])
}

fn gauss_solve(mut m: Vec<Vec<FieldElement>>) -> Result<Vec<FieldElement>> {
    let n = m.len();
    for col in 0..n {
        let piv = (col..n).find(|&r| !m[r][col].is_zero()).ok_or(Error::Reducible)?;
        m.swap(col, piv);
        let inv = m[col][col].inv()?;
        for v in m[col].iter_mut() {
            *v = &*v * &inv;
        }
        for r in 0..n {
            if r != col && !m[r][col].is_zero() {
                let f = m[r][col].clone();
                let pivot_row = m[col].clone();
                for (v, pv) in m[r].iter_mut().zip(pivot_row.iter()) {
                    *v = &*v - &(&f * pv);
                }
            }
        }
    }
    Ok(m.into_iter().map(|r| r[n].clone()).collect())
}

/// The stationary law of the golden-mean matrix, `(1/sqrt5, 1/(phi sqrt5), 1/(phi sqrt5))`.
pub fn pi_q() -> [FieldElement; 3] {
    stationary(&matrix_q()).expect("Q is primitive")
}

/// Lengths of the three Markov intervals, `(1/phi^2, 1/phi^2, 1/phi^3)`.
pub fn lebesgue_init() -> [FieldElement; 3] {
    let ip = FieldElement::inv_phi();
    [ip.pow(2), ip.pow(2), ip.pow(3)]
}

fn vec_mat(v: &[FieldElement; 3], p: &StochasticMatrix) -> [FieldElement; 3] {
    std::array::from_fn(|j| (0..3).fold(FieldElement::zero(), |acc, i| acc + &v[i] * &p.rows[i][j]))
}

/// A block `[start, end)` of positions carrying the same transition matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub start: i64,
    pub end: i64,
    pub matrix: StochasticMatrix,
}

/// Inhomogeneous Markov measure on symbol sequences indexed by integers.
///
/// `P_j` is `Q` outside the listed blocks. The marginal at `origin` is `init`,
/// and `pi_{j+1} = pi_j P_j` forward from there; positions before `origin`
/// carry `init` as well (meaningful when `init` is stationary for `Q`).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MeasureSpec {
    pub init: [FieldElement; 3],
    pub origin: i64,
    pub blocks: Vec<Block>,
    #[serde(skip)]
    marginals: Vec<[FieldElement; 3]>,
    #[serde(skip, default = "matrix_q")]
    q: StochasticMatrix,
}

impl MeasureSpec {
    pub fn new(init: [FieldElement; 3], origin: i64, blocks: Vec<Block>) -> Result<Self> {
        let total = init.iter().fold(FieldElement::zero(), |a, b| a + b);
        if total != FieldElement::one() || init.iter().any(|v| v.signum() < 0) {
            return Err(Error::InvalidArgument("initial law must be a probability vector".into()));
        }
        let mut sorted = blocks;
        sorted.sort_by_key(|b| b.start);
        for pair in sorted.windows(2) {
            if pair[0].end > pair[1].start {
                return Err(Error::InvalidArgument("overlapping blocks".into()));
            }
        }
        let horizon = sorted.iter().map(|b| b.end).max().unwrap_or(origin).max(origin) + 1;
        let mut spec = MeasureSpec { init, origin, blocks: sorted, marginals: Vec::new(), q: matrix_q() };
        spec.extend_marginals(horizon);
        Ok(spec)
    }

    /// Stationary golden-mean measure (every `P_j = Q`).
    pub fn stationary_q() -> Self {
        Self::new(pi_q(), 0, Vec::new()).expect("valid")
    }

    /// Pushforward of Lebesgue measure: lengths of `J_i` at `origin`, all `P_j = Q`.
    pub fn lebesgue(origin: i64) -> Self {
        Self::new(lebesgue_init(), origin, Vec::new()).expect("valid")
    }

    fn extend_marginals(&mut self, upto: i64) {
        if self.marginals.is_empty() {
            self.marginals.push(self.init.clone());
        }
        while self.origin + (self.marginals.len() as i64) <= upto {
            let j = self.origin + self.marginals.len() as i64 - 1;
            let next = vec_mat(self.marginals.last().expect("nonempty"), self.matrix_at(j));
            self.marginals.push(next);
        }
    }

    pub fn matrix_at(&self, j: i64) -> &StochasticMatrix {
        self.blocks
            .iter()
            .find(|b| b.start <= j && j < b.end)
            .map(|b| &b.matrix)
            .unwrap_or(&self.q)
    }

    /// Marginal law `pi_j`.
    pub fn marginal(&self, j: i64) -> [FieldElement; 3] {
        if j <= self.origin {
            return self.init.clone();
        }
        let k = (j - self.origin) as usize;
        if k < self.marginals.len() {
            return self.marginals[k].clone();
        }
        // beyond the last block every step applies Q
        let mut v = self.marginals.last().expect("nonempty").clone();
        for _ in self.marginals.len()..=k {
            v = vec_mat(&v, &self.q);
        }
        v
    }

    /// `pi_{n-1} P_{n-1} - pi_n` (zero vector when the marginals are consistent).
    pub fn consistency_residual(&self, n: i64) -> [FieldElement; 3] {
        let prev = vec_mat(&self.marginal(n - 1), self.matrix_at(n - 1));
        let cur = self.marginal(n);
        std::array::from_fn(|i| &prev[i] - &cur[i])
    }

    pub fn last_block_end(&self) -> i64 {
        self.blocks.iter().map(|b| b.end).max().unwrap_or(self.origin)
    }
}

/// `mu([b]_k^{k+|b|-1}) = pi_k(b_k) prod P_j(b_j, b_{j+1})`.
pub fn cylinder_mass(spec: &MeasureSpec, word: &Word, k: i64) -> FieldElement {
    let s = word.symbols();
    let mut m = spec.marginal(k)[idx(s[0])].clone();
    for (i, pair) in s.windows(2).enumerate() {
        m = &m * spec.matrix_at(k + i as i64).p(pair[0], pair[1]);
    }
    m
}

/// Floating-point cylinder mass, for bulk use.
pub fn cylinder_mass_f64(spec: &MeasureSpec, word: &Word, k: i64) -> f64 {
    let s = word.symbols();
    let mut m = spec.marginal(k)[idx(s[0])].to_f64();
    for (i, pair) in s.windows(2).enumerate() {
        m *= spec.matrix_at(k + i as i64).p(pair[0], pair[1]).to_f64();
    }
    m
}

/// `mu([b]_{k+n}^{l+n}) / mu([b]_k^l)`, the cylinder approximation of the
/// Radon-Nikodym derivative of the `n`-th shift power.
pub fn rn_shift(spec: &MeasureSpec, word: &Word, window: (i64, i64), n: i64) -> Result<FieldElement> {
    let (k, l) = window;
    if l - k + 1 != word.len() as i64 {
        return Err(Error::InvalidArgument(format!(
            "window [{k},{l}] does not match word length {}",
            word.len()
        )));
    }
    let base = cylinder_mass(spec, word, k);
    if base.is_zero() {
        return Err(Error::InvalidArgument(format!("cylinder {word} at {k} has zero mass")));
    }
    let shifted = cylinder_mass(spec, word, k + n);
    if shifted.is_zero() {
        return Err(Error::InvalidArgument(format!("cylinder {word} at {} has zero mass", k + n)));
    }
    shifted.checked_div(&base)
}

/// Event on the first `n` symbols of a chain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FrequencyEvent {
    /// `min <= #{j <= n : x_j = symbol} <= max`.
    SymbolCount { symbol: u8, min: u64, max: u64 },
    /// `min <= #{j < n : x_j = a, x_{j+1} = b} <= max`.
    PairCount { a: u8, b: u8, min: u64, max: u64 },
}

impl FrequencyEvent {
    /// `|count/len - center| <= radius` for the symbol count over `len` symbols.
    pub fn symbol_frequency_band(symbol: u8, len: u64, center: &FieldElement, radius: &FieldElement) -> Self {
        let (min, max) = count_band(len, &(center - radius), &(center + radius));
        FrequencyEvent::SymbolCount { symbol, min, max }
    }

    /// `count/len > threshold` for pairs `(a, b)`, counted over `len` pair positions.
    pub fn pair_frequency_above(a: u8, b: u8, len: u64, threshold: &FieldElement) -> Self {
        let t = threshold * &FieldElement::from_int(len as i64);
        let mut min = 0u64;
        while FieldElement::from_int(min as i64) <= t {
            min += 1;
        }
        FrequencyEvent::PairCount { a, b, min, max: len }
    }

    fn bounds(&self) -> (u64, u64) {
        match self {
            FrequencyEvent::SymbolCount { min, max, .. } | FrequencyEvent::PairCount { min, max, .. } => (*min, *max),
        }
    }
}

/// Integer counts `c` with `lo <= c/len <= hi`.
fn count_band(len: u64, lo: &FieldElement, hi: &FieldElement) -> (u64, u64) {
    let l = FieldElement::from_int(len as i64);
    let lo_t = lo * &l;
    let hi_t = hi * &l;
    let mut min = 0u64;
    while min <= len && FieldElement::from_int(min as i64) < lo_t {
        min += 1;
    }
    let mut max = len as i64;
    while max >= 0 && FieldElement::from_int(max) > hi_t {
        max -= 1;
    }
    if max < min as i64 {
        // empty band
        return (1, 0);
    }
    (min, max as u64)
}

/// How a frequency probability was obtained.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "method")]
pub enum FrequencyMethod {
    DynamicProgramming,
    MonteCarlo { samples: u64, seed: u64, wilson_lo: f64, wilson_hi: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrequencyProbability {
    pub probability: f64,
    /// Lower confidence bound (equal to `probability` for the exact DP).
    pub lower: f64,
    pub method: FrequencyMethod,
}

/// Options for [`empirical_frequency_prob`].
#[derive(Clone, Copy, Debug)]
pub struct FrequencyOptions {
    pub dp_cutoff: u64,
    pub samples: u64,
    pub seed: u64,
}

impl Default for FrequencyOptions {
    fn default() -> Self {
        FrequencyOptions { dp_cutoff: 4000, samples: 200_000, seed: 0x5eed }
    }
}

/// Probability of `event` for the chain with initial law `pi` and matrix `p`
/// over `n` symbols.
pub fn empirical_frequency_prob(
    p: &StochasticMatrix,
    pi: &[FieldElement; 3],
    n: u64,
    event: &FrequencyEvent,
    opts: FrequencyOptions,
) -> Result<FrequencyProbability> {
    if n == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    if n <= opts.dp_cutoff {
        let prob = frequency_dp::<f64>(&p.to_real(), &pi.clone().map(|v| v.to_f64()), n, event);
        return Ok(FrequencyProbability { probability: prob, lower: prob, method: FrequencyMethod::DynamicProgramming });
    }
    Ok(frequency_monte_carlo(p, pi, n, event, opts))
}

/// Transfer-matrix DP over (current symbol, running count).
pub fn frequency_dp<R: Real>(p: &[[R; 3]; 3], pi: &[R; 3], n: u64, event: &FrequencyEvent) -> R {
    let n = n as usize;
    let width = n + 1;
    let (min, max) = event.bounds();
    // state[s * width + c]
    let mut state = vec![R::zero(); 3 * width];
    let inc_first = |s: usize| match event {
        FrequencyEvent::SymbolCount { symbol, .. } => usize::from(s == idx(*symbol)),
        FrequencyEvent::PairCount { .. } => 0,
    };
    for s in 0..3 {
        state[s * width + inc_first(s)] = pi[s].clone();
    }
    for _ in 1..n {
        let mut next = vec![R::zero(); 3 * width];
        for s in 0..3 {
            for c in 0..width {
                let mass = &state[s * width + c];
                if *mass == R::zero() {
                    continue;
                }
                for t in 0..3 {
                    if p[s][t] == R::zero() {
                        continue;
                    }
                    let inc = match event {
                        FrequencyEvent::SymbolCount { symbol, .. } => usize::from(t == idx(*symbol)),
                        FrequencyEvent::PairCount { a, b, .. } => usize::from(s == idx(*a) && t == idx(*b)),
                    };
                    let c2 = (c + inc).min(width - 1);
                    next[t * width + c2] = next[t * width + c2].clone() + mass.clone() * p[s][t].clone();
                }
            }
        }
        state = next;
    }
    let mut total = R::zero();
    for s in 0..3 {
        for c in 0..width {
            if (c as u64) >= min && (c as u64) <= max {
                total = total + state[s * width + c].clone();
            }
        }
    }
    total
}

fn sample_symbol(rng: &mut ChaCha8Rng, dist: &[f64; 3]) -> usize {
    let u: f64 = rng.gen();
    if u < dist[0] {
        0
    } else if u < dist[0] + dist[1] {
        1
    } else {
        2
    }
}

fn wilson(successes: u64, trials: u64, z: f64) -> (f64, f64) {
    let n = trials as f64;
    let p = successes as f64 / n;
    let denom = 1.0 + z * z / n;
    let centre = (p + z * z / (2.0 * n)) / denom;
    let half = z * ((p * (1.0 - p) / n) + z * z / (4.0 * n * n)).sqrt() / denom;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

fn frequency_monte_carlo(
    p: &StochasticMatrix,
    pi: &[FieldElement; 3],
    n: u64,
    event: &FrequencyEvent,
    opts: FrequencyOptions,
) -> FrequencyProbability {
    let pf: [[f64; 3]; 3] = p.to_real();
    let pif = pi.clone().map(|v| v.to_f64());
    let (min, max) = event.bounds();
    const CHUNK: u64 = 1024;
    let chunks = opts.samples.div_ceil(CHUNK);
    let hits: u64 = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ c.wrapping_mul(0x9e37_79b9_7f4a_7c15));
            let count_here = CHUNK.min(opts.samples - c * CHUNK);
            let mut hits = 0u64;
            for _ in 0..count_here {
                let mut s = sample_symbol(&mut rng, &pif);
                let mut count = match event {
                    FrequencyEvent::SymbolCount { symbol, .. } => u64::from(s == idx(*symbol)),
                    FrequencyEvent::PairCount { .. } => 0,
                };
                for _ in 1..n {
                    let t = sample_symbol(&mut rng, &pf[s]);
                    count += match event {
                        FrequencyEvent::SymbolCount { symbol, .. } => u64::from(t == idx(*symbol)),
                        FrequencyEvent::PairCount { a, b, .. } => u64::from(s == idx(*a) && t == idx(*b)),
                    };
                    s = t;
                }
                if count >= min && count <= max {
                    hits += 1;
                }
            }
            hits
        })
        .sum();
    let (lo, hi) = wilson(hits, opts.samples, 2.575_829_303_549);
    FrequencyProbability {
        probability: hits as f64 / opts.samples as f64,
        lower: lo,
        method: FrequencyMethod::MonteCarlo { samples: opts.samples, seed: opts.seed, wilson_lo: lo, wilson_hi: hi },
    }
}

/// Certificate that `P^k(s,t) = (1 ± delta) pi(t)` for all states.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MixingCertificate {
    pub k: u64,
    /// `min_{s,t} P^k(s,t)/pi(t)`.
    pub min_ratio: f64,
    /// `max_{s,t} P^k(s,t)/pi(t)`.
    pub max_ratio: f64,
    /// `max_{s,t} |P^k(s,t) - pi(t)|`, bounding `|pi' P^k - pi|_inf` for every law `pi'`.
    pub sup_distance: f64,
    pub exact: bool,
}

/// Mantissa bits of a backend, `None` for exact arithmetic.
pub fn backend_bits<R: Real>() -> Option<u32> {
    if R::EXACT {
        return None;
    }
    // measure the unit roundoff
    let one = R::one();
    let mut eps = R::one();
    let two = R::from_i64(2);
    let mut bits = 0u32;
    while one.clone() + eps.clone() / two.clone() > one && bits < 4096 {
        eps = eps / two.clone();
        bits += 1;
    }
    Some(bits + 1)
}

/// Smallest `k` such that every entry of `P^k` is within the factor `1 ± delta`
/// of the stationary law. Tolerances `delta >= 1` impose nothing and return 0.
///
/// With a float backend, a tolerance within 16 bits of the unit roundoff is
/// refused rather than approximated.
pub fn mixing_time<R: Real>(p: &StochasticMatrix, delta: &FieldElement, max_k: u64) -> Result<MixingCertificate> {
    if delta.signum() <= 0 {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let pi = stationary(p)?;
    if *delta >= FieldElement::one() {
        return Ok(MixingCertificate { k: 0, min_ratio: 0.0, max_ratio: f64::INFINITY, sup_distance: 1.0, exact: R::EXACT });
    }
    if let Some(bits) = backend_bits::<R>() {
        let floor = 2f64.powi(-(bits as i32) + 16);
        if delta.to_f64() < floor {
            return Err(Error::NeedsHigherPrecision(format!(
                "tolerance {:.3e} is below what {bits}-bit arithmetic can certify",
                delta.to_f64()
            )));
        }
    }
    let pr: [[R; 3]; 3] = p.to_real();
    let pir: [R; 3] = pi.clone().map(|v| R::from_field(&v));
    let d = R::from_field(delta);
    let lo = R::one() - d.clone();
    let hi = R::one() + d;
    let mut pow: [[R; 3]; 3] = std::array::from_fn(|i| std::array::from_fn(|j| if i == j { R::one() } else { R::zero() }));
    for k in 0..=max_k {
        let mut ok = true;
        let mut min_r = f64::INFINITY;
        let mut max_r = 0f64;
        let mut sup = 0f64;
        for row in pow.iter() {
            for (v, pt) in row.iter().zip(pir.iter()) {
                let r = v.clone() / pt.clone();
                if r < lo || r > hi {
                    ok = false;
                }
                min_r = min_r.min(r.to_f64());
                max_r = max_r.max(r.to_f64());
                sup = sup.max((v.clone() - pt.clone()).abs().to_f64());
            }
        }
        if ok {
            return Ok(MixingCertificate { k, min_ratio: min_r, max_ratio: max_r, sup_distance: sup, exact: R::EXACT });
        }
        pow = std::array::from_fn(|i| {
            std::array::from_fn(|j| (0..3).fold(R::zero(), |acc, m| acc + pow[i][m].clone() * pr[m][j].clone()))
        });
    }
    Err(Error::Infeasible(format!("no mixing time up to {max_k}")))
}

/// A cylinder `A` and power `n` with `A ∩ T^-n A` nonempty and the shift
/// derivative on it close to the target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RatioWitness {
    pub word: Word,
    pub start: i64,
    pub power: i64,
    pub rn: f64,
}

fn returns_to(word: &Word, n: usize) -> bool {
    let s = word.symbols();
    let len = s.len();
    if n >= len {
        // need a path of n - len + 1 steps from the last symbol to the first
        let steps = n - len + 1;
        let mut reach = [false; 3];
        reach[idx(s[len - 1])] = true;
        for _ in 0..steps {
            let mut next = [false; 3];
            for a in 1..=3u8 {
                if reach[idx(a)] {
                    for b in 1..=3u8 {
                        if allowed(a, b) {
                            next[idx(b)] = true;
                        }
                    }
                }
            }
            reach = next;
        }
        reach[idx(s[0])]
    } else {
        // overlapping occurrence: the shifted copy must agree on the overlap
        s[n..] == s[..len - n]
    }
}

/// Search for cylinders `A` of length up to `depth` (starting at the spec's
/// origin) and powers up to `max_power` witnessing `r` in the ratio set up to `eps`.
pub fn ratio_set_probe(
    spec: &MeasureSpec,
    r: &FieldElement,
    eps: f64,
    depth: usize,
    max_power: i64,
) -> Result<Vec<RatioWitness>> {
    if r.signum() < 0 {
        return Err(Error::InvalidArgument("ratio target must be nonnegative".into()));
    }
    if eps <= 0.0 {
        return Err(Error::InvalidArgument("tolerance must be positive".into()));
    }
    let target = r.to_f64();
    let k = spec.origin;
    let mut out = Vec::new();
    let mut cache: HashMap<(Word, i64), FieldElement> = HashMap::new();
    for len in 1..=depth {
        for word in crate::symbolic::enumerate_words(len) {
            for n in 1..=max_power {
                if !returns_to(&word, n as usize) {
                    continue;
                }
                let base = cache.entry((word.clone(), k)).or_insert_with(|| cylinder_mass(spec, &word, k)).clone();
                let shifted =
                    cache.entry((word.clone(), k + n)).or_insert_with(|| cylinder_mass(spec, &word, k + n)).clone();
                if base.is_zero() || shifted.is_zero() {
                    continue;
                }
                let rn = (shifted / base).to_f64();
                if (rn - target).abs() < eps {
                    out.push(RatioWitness { word: word.clone(), start: k, power: n, rn });
                }
            }
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn q_rows() {
        let q = matrix_q();
        let ip = FieldElement::inv_phi();
        assert_eq!(q.rows[0], [ip.clone(), FieldElement::zero(), ip.pow(2)]);
        assert!(q.has_golden_support());
        assert_eq!(matrix_q_lambda(&FieldElement::one()).unwrap(), q);
        assert!(matrix_q_lambda(&FieldElement::from_ratio(1, 2)).is_err());
        let ql = matrix_q_lambda(&FieldElement::from_ratio(3, 2)).unwrap();
        assert_eq!(ql.rows[1], q.rows[1]);
    }

    #[test]
    fn stationary_of_q() {
        let pi = pi_q();
        let s5 = FieldElement::sqrt5();
        let want0 = s5.inv().unwrap();
        let want1 = (&FieldElement::phi() * &s5).inv().unwrap();
        assert_eq!(pi, [want0, want1.clone(), want1]);
    }

    #[test]
    fn reducible_and_periodic_supports() {
        let z = FieldElement::zero;
        let o = FieldElement::one;
        let perm = StochasticMatrix::new([[z(), o(), z()], [z(), z(), o()], [o(), z(), z()]]).unwrap();
        assert_eq!(stationary(&perm), Err(Error::Periodic));
        let red = StochasticMatrix::new([[o(), z(), z()], [z(), o(), z()], [z(), z(), o()]]).unwrap();
        assert_eq!(stationary(&red), Err(Error::Reducible));
    }

    #[test]
    fn lebesgue_marginals_follow_letters() {
        let spec = MeasureSpec::lebesgue(1);
        assert_eq!(cylinder_mass(&spec, &"1".parse().unwrap(), 1), FieldElement::inv_phi().pow(2));
        // second-letter law of Lebesgue measure
        let ip = FieldElement::inv_phi();
        let want = [&FieldElement::from_int(2) * &ip.pow(3), ip.pow(3), &FieldElement::from_int(2) * &ip.pow(4)];
        assert_eq!(spec.marginal(2), want);
    }

    #[test]
    fn frequency_two_step_pair() {
        let q = matrix_q();
        let pi = pi_q();
        let ev = FrequencyEvent::PairCount { a: 2, b: 3, min: 1, max: 1 };
        let exact = frequency_dp::<FieldElement>(&q.to_real(), &pi, 2, &ev);
        assert_eq!(exact, &pi[1] * q.p(2, 3));
        let sure = FrequencyEvent::SymbolCount { symbol: 1, min: 0, max: 1 };
        let r = empirical_frequency_prob(&q, &pi, 1, &sure, FrequencyOptions::default()).unwrap();
        assert_eq!(r.probability, 1.0);
    }

    #[test]
    fn monte_carlo_brackets_dp() {
        let q = matrix_q();
        let pi = pi_q();
        let ev = FrequencyEvent::symbol_frequency_band(
            1,
            60,
            &pi[0],
            &FieldElement::from_ratio(1, 10),
        );
        let dp = empirical_frequency_prob(&q, &pi, 60, &ev, FrequencyOptions::default()).unwrap();
        let mc = empirical_frequency_prob(
            &q,
            &pi,
            60,
            &ev,
            FrequencyOptions { dp_cutoff: 10, samples: 40_000, seed: 7 },
        )
        .unwrap();
        match mc.method {
            FrequencyMethod::MonteCarlo { wilson_lo, wilson_hi, .. } => {
                assert!(wilson_lo <= dp.probability && dp.probability <= wilson_hi, "{mc:?} vs {dp:?}");
            }
            _ => panic!("expected Monte Carlo"),
        }
    }

    #[test]
    fn mixing_refuses_unreachable_precision() {
        let q = matrix_q();
        let tiny = FieldElement::from_ratio(1, 3).pow(60);
        assert!(matches!(mixing_time::<f64>(&q, &tiny, 500), Err(Error::NeedsHigherPrecision(_))));
        let cert = mixing_time::<FieldElement>(&q, &tiny, 500).unwrap();
        assert!(cert.k > 60 && cert.exact);
    }

    #[test]
    fn overlap_returns() {
        let w: Word = "11".parse().unwrap();
        assert!(returns_to(&w, 1));
        let w: Word = "13".parse().unwrap();
        assert!(!returns_to(&w, 1));
        assert!(!returns_to(&w, 2));
        assert!(returns_to(&w, 3));
    }
}
