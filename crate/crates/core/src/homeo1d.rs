//! Interpolation profiles and the staged circle homeomorphisms `H_n`.
//!
//! `H_n = h_n o ... o h_1`. Stage `h_n` acts on every image interval
//! `H_{n-1}(C_u)`, `|u| = n`, and maps it onto itself, so `H_n(e) = H_{d-1}(e)`
//! for any endpoint `e` first appearing at depth `d`. Evaluation walks the
//! cylinder tree of `x` once and memoizes these endpoint images.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};

use dashmap::DashMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::markov::backend_bits;
use crate::numerics::{FieldElement, GoldenInt, Real};
use crate::schedule::{Schedule, StageKind};
use crate::symbolic::{partition_interval, split_point, Word};

/// Value and derivative of `G_{a1,a2}` at `s in [0,1]`, plus which third of
/// the interval `s` lies in.
///
/// `G' ` rises linearly from `a1`, is flat at `(5 a2 - a1)/4` on the middle
/// third and returns to `a2`; `G(1) = a2`.
pub fn g_two<R: Real>(a1: &R, a2: &R, s: &R) -> (R, R, u8) {
    let third = R::from_ratio(1, 3);
    let two_thirds = R::from_ratio(2, 3);
    let diff = a2.clone() - a1.clone();
    let plateau = (R::from_i64(5) * a2.clone() - a1.clone()) / R::from_i64(4);
    if *s <= third {
        let d = a1.clone() + R::from_ratio(15, 4) * diff.clone() * s.clone();
        let v = a1.clone() * s.clone() + R::from_ratio(15, 8) * diff * s.clone() * s.clone();
        (v, d, 0)
    } else {
        let g13 = a1.clone() * third.clone() + R::from_ratio(5, 24) * diff.clone();
        if *s <= two_thirds {
            (g13 + plateau.clone() * (s.clone() - third), plateau, 1)
        } else {
            let g23 = g13 + plateau.clone() * third;
            let u = s.clone() - two_thirds;
            let d = plateau.clone() + diff.clone() * (R::from_i64(2) - R::from_i64(3) * s.clone()) / R::from_i64(4);
            let sq = s.clone() * s.clone() - R::from_ratio(4, 9);
            let v = g23 + plateau * u.clone() + diff / R::from_i64(4) * (R::from_i64(2) * u - R::from_ratio(3, 2) * sq);
            (v, d, 2)
        }
    }
}

/// `g_alpha`: the derivative-level profile `G'_{1,alpha}` (value 1 at 0,
/// `alpha` at 1, mean `alpha`), returned with its own derivative.
pub fn g_alpha<R: Real>(alpha: &R, s: &R) -> (R, R) {
    let (_, d, third) = g_two(&R::one(), alpha, s);
    let slope = match third {
        0 => R::from_ratio(15, 4) * (alpha.clone() - R::one()),
        1 => R::zero(),
        _ => -R::from_ratio(3, 4) * (alpha.clone() - R::one()),
    };
    (d, slope)
}

/// Inverse of `s -> G_{a1,a2}(s)` on `[0,1]` by bisection.
pub fn g_two_inverse<R: Real>(a1: &R, a2: &R, target: &R) -> R {
    bisect(|s| g_two(a1, a2, s).0, target, R::zero(), R::one())
}

fn bisection_steps<R: Real>() -> u32 {
    match backend_bits::<R>() {
        Some(b) => b + 8,
        None => 160,
    }
}

/// Solves `f(s) = target` for increasing `f` on `[lo, hi]`.
pub fn bisect<R: Real>(f: impl Fn(&R) -> R, target: &R, mut lo: R, mut hi: R) -> R {
    let half = R::from_ratio(1, 2);
    for _ in 0..bisection_steps::<R>() {
        let mid = (lo.clone() + hi.clone()) * half.clone();
        if f(&mid) <= *target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    (lo + hi) * half
}

/// The map `psi_{eps,lambda}` on `[0,1]`.
#[derive(Clone, Debug)]
pub struct Psi<R: Real> {
    pub a: R,
    pub b: R,
    pub eps: R,
    inv_phi: R,
}

impl<R: Real> Psi<R> {
    pub fn new(lambda: &FieldElement, eps: &FieldElement) -> Self {
        let (a, b) = crate::schedule::psi_slopes(lambda);
        Psi { a: R::from_field(&a), b: R::from_field(&b), eps: R::from_field(eps), inv_phi: R::from_field(&FieldElement::inv_phi()) }
    }

    fn has_collars(&self) -> bool {
        self.eps > R::zero()
    }

    /// `(psi(z), psi'(z), piece, in_collar)`; pieces are numbered left to right
    /// with collar thirds counted separately.
    pub fn eval(&self, z: &R) -> (R, R, u8, bool) {
        let (a, b, e, ip) = (&self.a, &self.b, &self.eps, &self.inv_phi);
        let one = R::one();
        if !self.has_collars() {
            return if *z < *ip {
                (a.clone() * z.clone(), a.clone(), 0, false)
            } else {
                (a.clone() * ip.clone() + b.clone() * (z.clone() - ip.clone()), b.clone(), 1, false)
            };
        }
        let aip = a.clone() * ip.clone();
        if *z < *e {
            let (g, d, k) = g_two(&one, a, &(z.clone() / e.clone()));
            (e.clone() * g, d, k, true)
        } else if *z < ip.clone() - e.clone() {
            (a.clone() * z.clone(), a.clone(), 3, false)
        } else if *z < *ip {
            let (g, d, k) = g_two(&one, a, &((ip.clone() - z.clone()) / e.clone()));
            (aip - e.clone() * g, d, 4 + k, true)
        } else if *z < ip.clone() + e.clone() {
            let (g, d, k) = g_two(&one, b, &((z.clone() - ip.clone()) / e.clone()));
            (aip + e.clone() * g, d, 7 + k, true)
        } else if *z < one.clone() - e.clone() {
            (aip + b.clone() * (z.clone() - ip.clone()), b.clone(), 10, false)
        } else {
            let (g, d, k) = g_two(&one, b, &((one.clone() - z.clone()) / e.clone()));
            (one - e.clone() * g, d, 11 + k, true)
        }
    }

    pub fn value(&self, z: &R) -> R {
        self.eval(z).0
    }

    pub fn inverse(&self, p: &R) -> R {
        let (a, b, e, ip) = (&self.a, &self.b, &self.eps, &self.inv_phi);
        let one = R::one();
        let aip = a.clone() * ip.clone();
        if !self.has_collars() {
            return if *p < aip { p.clone() / a.clone() } else { ip.clone() + (p.clone() - aip) / b.clone() };
        }
        if *p < e.clone() * a.clone() {
            e.clone() * g_two_inverse(&one, a, &(p.clone() / e.clone()))
        } else if *p < a.clone() * (ip.clone() - e.clone()) {
            p.clone() / a.clone()
        } else if *p < aip {
            ip.clone() - e.clone() * g_two_inverse(&one, a, &((aip - p.clone()) / e.clone()))
        } else if *p < aip.clone() + e.clone() * b.clone() {
            ip.clone() + e.clone() * g_two_inverse(&one, b, &((p.clone() - aip) / e.clone()))
        } else if *p < one.clone() - e.clone() * b.clone() {
            ip.clone() + (p.clone() - aip) / b.clone()
        } else {
            one.clone() - e.clone() * g_two_inverse(&one, b, &((one.clone() - p.clone()) / e.clone()))
        }
    }
}

/// Profile selector for [`profile_eval`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum Profile {
    GAlpha { alpha: FieldElement },
    Psi { eps: FieldElement, lambda: FieldElement },
    GAB { a1: FieldElement, a2: FieldElement },
}

/// Value and derivative of a profile at `x in [0,1]`.
pub fn profile_eval<R: Real>(p: &Profile, x: &R) -> Result<(R, R)> {
    if *x < R::zero() || *x > R::one() {
        return Err(Error::OutOfRange(format!("{x:?} outside [0,1]")));
    }
    match p {
        Profile::GAlpha { alpha } => {
            if *alpha < FieldElement::from_ratio(1, 4) {
                return Err(Error::InvalidArgument("alpha must be at least 1/4".into()));
            }
            Ok(g_alpha(&R::from_field(alpha), x))
        }
        Profile::Psi { eps, lambda } => {
            if eps.signum() < 0 || *lambda < FieldElement::one() {
                return Err(Error::InvalidArgument("need eps >= 0 and lambda >= 1".into()));
            }
            if eps * &FieldElement::from_int(2) >= FieldElement::inv_phi() - FieldElement::inv_phi().pow(2) {
                return Err(Error::InvalidArgument("collar too wide".into()));
            }
            let (v, d, _, _) = Psi::<R>::new(lambda, eps).eval(x);
            Ok((v, d))
        }
        Profile::GAB { a1, a2 } => {
            let (v, d, _) = g_two(&R::from_field(a1), &R::from_field(a2), x);
            Ok((v, d))
        }
    }
}

/// What one stage does, with parameters converted to the backend.
#[derive(Clone, Debug)]
pub struct HomeoStage<R: Real> {
    pub n: usize,
    pub kind: StageKind,
    pub psi: Option<Psi<R>>,
    /// Correction collar width relative to the cylinder length.
    pub collar: R,
}

/// All stages `1..=max_depth` of a schedule.
#[derive(Clone, Debug)]
pub struct StageTable<R: Real> {
    stages: Vec<HomeoStage<R>>,
}

impl<R: Real> StageTable<R> {
    pub fn new(schedule: &Schedule) -> Self {
        let stages = (1..=schedule.max_depth()).map(|n| build_stage(schedule, n).expect("in range")).collect();
        StageTable { stages }
    }

    pub fn max_depth(&self) -> usize {
        self.stages.len()
    }

    pub fn stage(&self, n: usize) -> &HomeoStage<R> {
        &self.stages[n - 1]
    }
}

pub fn build_stage<R: Real>(schedule: &Schedule, n: usize) -> Result<HomeoStage<R>> {
    let kind = schedule.stage_kind(n)?;
    Ok(match kind {
        StageKind::Identity => HomeoStage { n, kind, psi: None, collar: R::zero() },
        StageKind::Psi(t) => {
            let s = schedule.stage(t);
            HomeoStage { n, kind, psi: Some(Psi::new(&s.lambda, &s.eps)), collar: R::zero() }
        }
        StageKind::Correction(t) => {
            HomeoStage { n, kind, psi: None, collar: R::from_field(&schedule.stage(t + 1).eps) }
        }
    })
}

/// A point of the circle, with its exact `Z[phi]` form when it has one.
#[derive(Clone, Debug)]
pub struct Pt<R: Real> {
    pub v: R,
    pub exact: Option<GoldenInt>,
}

impl<R: Real> Pt<R> {
    pub fn new(v: R) -> Self {
        Pt { v, exact: None }
    }

    pub fn golden(e: GoldenInt) -> Self {
        Pt { v: R::from_golden(e), exact: Some(e) }
    }

    fn less_than(&self, e: GoldenInt) -> bool {
        match self.exact {
            Some(g) => g < e,
            None => self.v < R::from_golden(e),
        }
    }

    fn offset_from(&self, lo: GoldenInt) -> R {
        match self.exact {
            Some(g) => R::from_golden(g - lo),
            None => self.v.clone() - R::from_golden(lo),
        }
    }
}

/// One cylinder along the itinerary of a point.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Step {
    pub lo: GoldenInt,
    pub hi: GoldenInt,
    pub last: u8,
}

/// Depth-`1..=n` cylinders containing `x` (half-open).
pub fn trail<R: Real>(x: &Pt<R>, n: usize) -> Vec<Step> {
    let mut out = Vec::with_capacity(n);
    if n == 0 {
        return out;
    }
    let first = if x.less_than(GoldenInt::inv_phi_pow(2)) {
        1
    } else if x.less_than(GoldenInt::inv_phi_pow(1)) {
        3
    } else {
        2
    };
    let (lo, hi) = partition_interval(first);
    out.push(Step { lo, hi, last: first });
    while out.len() < n {
        let c = *out.last().expect("nonempty");
        out.push(match c.last {
            3 => Step { last: 2, ..c },
            _ => {
                let mid = split_point(c.lo, c.hi);
                if x.less_than(mid) {
                    Step { lo: c.lo, hi: mid, last: 1 }
                } else {
                    Step { lo: mid, hi: c.hi, last: 3 }
                }
            }
        });
    }
    out
}

/// First depth at which `e` is the left endpoint of a cylinder.
pub fn endpoint_depth(e: GoldenInt) -> Result<usize> {
    if e < GoldenInt::ZERO || e >= GoldenInt::ONE {
        return Err(Error::OutOfRange(format!("{e} outside [0,1)")));
    }
    let pt = Pt::<f64>::golden(e);
    let mut depth = 1;
    loop {
        let steps = trail(&pt, depth);
        if steps[depth - 1].lo == e {
            return Ok(depth);
        }
        depth += 1;
        if depth > 160 {
            return Err(Error::Endpoint(format!("{e} is not a cylinder endpoint")));
        }
    }
}

/// Depth-`n` cylinder `[lo, hi)` whose right endpoint is `e`, cyclically
/// (for `e = 0` the last cylinder, ending at 1).
pub fn predecessor_cylinder(e: GoldenInt, n: usize) -> (GoldenInt, GoldenInt) {
    let target = if e == GoldenInt::ZERO { GoldenInt::ONE } else { e };
    let first = if target <= GoldenInt::inv_phi_pow(2) {
        1
    } else if target <= GoldenInt::inv_phi_pow(1) {
        3
    } else {
        2
    };
    let (mut lo, mut hi) = partition_interval(first);
    let mut last = first;
    for _ in 1..n {
        if last == 3 {
            last = 2;
            continue;
        }
        let mid = split_point(lo, hi);
        if target <= mid {
            hi = mid;
            last = 1;
        } else {
            lo = mid;
            last = 3;
        }
    }
    (lo, hi)
}

/// Result of evaluating `H_n` (or a fibered `K_n`) at one point.
#[derive(Clone, Debug)]
pub struct Eval<R: Real> {
    pub value: R,
    pub deriv: R,
    /// Whether any stage used an interpolating collar at this point.
    pub in_collar: bool,
    /// Hash of the smooth pieces used; equal signatures mean the same
    /// polynomial branch at every stage.
    pub signature: u64,
}

/// The coordinate system a staged evaluation runs in.
///
/// Stages `n > start()` are applied by the shared engine; `base` supplies the
/// map at depths `<= start()`.
pub trait Frame<R: Real>: Sync {
    fn table(&self) -> &StageTable<R>;
    fn start(&self) -> usize;
    /// Map and its x-derivative at depth `n <= start()`.
    fn base(&self, n: usize, x: &Pt<R>) -> (R, R);
    /// Image of endpoint `e` under the depth-`start()` map.
    fn base_image(&self, e: GoldenInt) -> R;
    fn memo(&self) -> &DashMap<GoldenInt, R>;
    /// Inverse of `base(n, .)`.
    fn base_inverse(&self, _n: usize, y: &R) -> R {
        y.clone()
    }

    /// Slope `alpha` of the cylinder preceding `[lo, hi)` at depth `n`.
    fn pred_alpha(&self, n: usize, lo: GoldenInt, _hi: GoldenInt) -> R
    where
        Self: Sized,
    {
        let (plo, phi) = predecessor_cylinder(lo, n);
        alpha_of(self, plo, phi)
    }
}

/// Average slope of the current map on `[lo, hi)`.
pub fn alpha_of<R: Real, F: Frame<R>>(f: &F, lo: GoldenInt, hi: GoldenInt) -> R {
    (image(f, hi) - image(f, lo)) / R::from_golden(hi - lo)
}

/// Image of a cylinder endpoint under all later stages.
pub fn image<R: Real, F: Frame<R>>(f: &F, e: GoldenInt) -> R {
    if e == GoldenInt::ZERO {
        return R::zero();
    }
    if e == GoldenInt::ONE {
        return R::one();
    }
    if let Some(v) = f.memo().get(&e) {
        return v.clone();
    }
    let d = endpoint_depth(e).expect("cylinder endpoint");
    let v = if d - 1 <= f.start() { f.base_image(e) } else { eval_frame(f, d - 1, &Pt::golden(e), None).value };
    f.memo().insert(e, v.clone());
    v
}

/// Runs stages `start()+1..=n` on `x`, optionally recording every
/// intermediate value (`trace[k]` is the depth-`k` map).
pub fn eval_frame<R: Real, F: Frame<R>>(f: &F, n: usize, x: &Pt<R>, mut trace: Option<&mut Vec<R>>) -> Eval<R> {
    let j0 = f.start().min(n);
    if let Some(tr) = trace.as_deref_mut() {
        for k in 0..j0 {
            tr.push(f.base(k, x).0);
        }
    }
    let (mut v, mut d) = f.base(j0, x);
    if let Some(tr) = trace.as_deref_mut() {
        tr.push(v.clone());
    }
    let steps = trail(x, n);
    let mut hasher = DefaultHasher::new();
    let mut in_collar = false;
    for k in j0 + 1..=n {
        let st = steps[k - 1];
        let stage = f.table().stage(k);
        match stage.kind {
            StageKind::Identity => {}
            StageKind::Psi(_) => {
                if st.last == 1 {
                    let psi = stage.psi.as_ref().expect("psi stage");
                    let a = image(f, st.lo);
                    let len = image(f, st.hi) - a.clone();
                    let (p, dp, piece, collar) = psi.eval(&((v.clone() - a.clone()) / len.clone()));
                    v = a + len * p;
                    d = d * dp;
                    in_collar |= collar;
                    (k, piece).hash(&mut hasher);
                }
            }
            StageKind::Correction(_) => {
                let a = image(f, st.lo);
                let lx = R::from_golden(st.hi - st.lo);
                let alpha = (image(f, st.hi) - a.clone()) / lx.clone();
                let off = x.offset_from(st.lo);
                let width = stage.collar.clone() * lx;
                if stage.collar > R::zero() && off < width {
                    let a1 = f.pred_alpha(k, st.lo, st.hi);
                    let (g, dg, piece) = g_two(&a1, &alpha, &(off / width.clone()));
                    v = a + width * g;
                    d = dg;
                    in_collar = true;
                    (k, st.lo, piece).hash(&mut hasher);
                } else {
                    v = a + alpha.clone() * off;
                    d = alpha;
                    (k, st.lo).hash(&mut hasher);
                }
            }
        }
        if let Some(tr) = trace.as_deref_mut() {
            tr.push(v.clone());
        }
    }
    Eval { value: v, deriv: d, in_collar, signature: hasher.finish() }
}

/// Depth-`1..=n` cylinders whose images under the frame contain `y`.
pub fn image_trail<R: Real, F: Frame<R>>(f: &F, n: usize, y: &R) -> Vec<Step> {
    let mut out: Vec<Step> = Vec::with_capacity(n);
    if n == 0 {
        return out;
    }
    let first = if *y < image(f, GoldenInt::inv_phi_pow(2)) {
        1
    } else if *y < image(f, GoldenInt::inv_phi_pow(1)) {
        3
    } else {
        2
    };
    let (lo, hi) = partition_interval(first);
    out.push(Step { lo, hi, last: first });
    while out.len() < n {
        let c = *out.last().expect("nonempty");
        out.push(match c.last {
            3 => Step { last: 2, ..c },
            _ => {
                let mid = split_point(c.lo, c.hi);
                if *y < image(f, mid) {
                    Step { lo: c.lo, hi: mid, last: 1 }
                } else {
                    Step { lo: mid, hi: c.hi, last: 3 }
                }
            }
        });
    }
    out
}

/// Inverse of the depth-`n` frame map at `y`.
pub fn invert_frame<R: Real, F: Frame<R>>(f: &F, n: usize, y: &R) -> R {
    let steps = image_trail(f, n, y);
    let mut v = y.clone();
    for k in (f.start() + 1..=n).rev() {
        let st = steps[k - 1];
        let stage = f.table().stage(k);
        match stage.kind {
            StageKind::Identity => {}
            StageKind::Psi(_) => {
                if st.last == 1 {
                    let psi = stage.psi.as_ref().expect("psi stage");
                    let a = image(f, st.lo);
                    let len = image(f, st.hi) - a.clone();
                    v = a.clone() + len.clone() * psi.inverse(&((v - a) / len));
                }
            }
            StageKind::Correction(_) => {
                let a = image(f, st.lo);
                let lx = R::from_golden(st.hi - st.lo);
                let alpha = (image(f, st.hi) - a.clone()) / lx.clone();
                let width = stage.collar.clone() * lx;
                let lo = R::from_golden(st.lo);
                let rel = v - a;
                // the correction stage is given directly in x
                return if stage.collar > R::zero() && rel < width.clone() * alpha.clone() {
                    let a1 = f.pred_alpha(k, st.lo, st.hi);
                    lo + width.clone() * g_two_inverse(&a1, &alpha, &(rel / width))
                } else {
                    lo + rel / alpha
                };
            }
        }
    }
    f.base_inverse(f.start().min(n), &v)
}

/// The composed homeomorphism `H_n` of a schedule.
pub struct Circle<R: Real> {
    schedule: Schedule,
    table: StageTable<R>,
    memo: DashMap<GoldenInt, R>,
}

impl<R: Real> Frame<R> for Circle<R> {
    fn table(&self) -> &StageTable<R> {
        &self.table
    }
    fn start(&self) -> usize {
        1
    }
    fn base(&self, _n: usize, x: &Pt<R>) -> (R, R) {
        (x.v.clone(), R::one())
    }
    fn base_image(&self, e: GoldenInt) -> R {
        R::from_golden(e)
    }
    fn memo(&self) -> &DashMap<GoldenInt, R> {
        &self.memo
    }
}

/// Golden-mean map `S(x) = phi x mod 1`.
pub fn golden_map<R: Real>(x: &R) -> R {
    let phi = R::from_field(&FieldElement::phi());
    let y = phi * x.clone();
    if *x < R::from_field(&FieldElement::inv_phi()) {
        y
    } else {
        y - R::one()
    }
}

/// Collar subintervals of one stage, pulled back to the circle.
#[derive(Clone, Debug)]
pub struct BadSet<R: Real> {
    pub n: usize,
    pub word: Word,
    pub intervals: Vec<(R, R)>,
}

impl<R: Real> BadSet<R> {
    pub fn length(&self) -> R {
        self.intervals.iter().fold(R::zero(), |acc, (a, b)| acc + (b.clone() - a.clone()))
    }

    /// Length of the intersection with another bad set.
    pub fn overlap(&self, other: &BadSet<R>) -> R {
        let mut total = R::zero();
        for (a, b) in &self.intervals {
            for (c, d) in &other.intervals {
                let lo = a.clone().max_of(c.clone());
                let hi = b.clone().min_of(d.clone());
                if hi > lo {
                    total = total + (hi - lo);
                }
            }
        }
        total
    }
}

impl<R: Real> Circle<R> {
    pub fn new(schedule: &Schedule) -> Self {
        Circle { schedule: schedule.clone(), table: StageTable::new(schedule), memo: DashMap::new() }
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    pub fn max_depth(&self) -> usize {
        self.table.max_depth()
    }

    fn check_depth(&self, n: usize) -> Result<()> {
        if n > self.max_depth() {
            return Err(Error::OutOfRange(format!("depth {n} beyond the schedule's {}", self.max_depth())));
        }
        Ok(())
    }

    /// `H_n(x)` and `H_n'(x)` (right derivative at kinks).
    pub fn eval_h(&self, n: usize, x: &R) -> Result<(R, R)> {
        let e = self.eval_point(n, &Pt::new(x.clone()))?;
        Ok((e.value, e.deriv))
    }

    pub fn eval_point(&self, n: usize, x: &Pt<R>) -> Result<Eval<R>> {
        self.check_depth(n)?;
        if x.v < R::zero() || x.v >= R::one() {
            return Err(Error::OutOfRange(format!("{:?} outside [0,1)", x.v)));
        }
        Ok(eval_frame(self, n, x, None))
    }

    /// `[H_0(x), ..., H_n(x)]`.
    pub fn trace(&self, n: usize, x: &R) -> Result<Vec<R>> {
        self.check_depth(n)?;
        let mut tr = Vec::with_capacity(n + 1);
        eval_frame(self, n, &Pt::new(x.clone()), Some(&mut tr));
        Ok(tr)
    }

    /// `H_{d-1}(e)`, which every later `H_n` shares.
    pub fn endpoint_image(&self, e: GoldenInt) -> R {
        image(self, e)
    }

    /// Image `H_{n-1}(C_u)` of the depth-`n` cylinder `[lo, hi)`.
    pub fn image_interval(&self, lo: GoldenInt, hi: GoldenInt) -> (R, R) {
        (image(self, lo), image(self, hi))
    }

    /// `H_n^{-1}(y)`: descends the image tree, then undoes stages from the top,
    /// closed form on affine pieces and bisection inside collars.
    pub fn invert(&self, n: usize, y: &R) -> Result<R> {
        self.check_depth(n)?;
        if *y < R::zero() || *y >= R::one() {
            return Err(Error::OutOfRange(format!("{y:?} outside [0,1)")));
        }
        Ok(invert_frame(self, n, y))
    }

    /// Single stage `h_n(y)` on the image circle.
    pub fn stage_map(&self, n: usize, y: &R) -> Result<R> {
        self.check_depth(n)?;
        if n <= 1 {
            return Ok(y.clone());
        }
        let stage = self.table.stage(n);
        match stage.kind {
            StageKind::Identity => Ok(y.clone()),
            StageKind::Psi(_) => {
                let st = image_trail(self, n, y)[n - 1];
                if st.last != 1 {
                    return Ok(y.clone());
                }
                let psi = stage.psi.as_ref().expect("psi stage");
                let a = image(self, st.lo);
                let len = image(self, st.hi) - a.clone();
                Ok(a.clone() + len.clone() * psi.value(&((y.clone() - a) / len)))
            }
            StageKind::Correction(_) => {
                let st = image_trail(self, n, y)[n - 1];
                if *y == image(self, st.lo) {
                    return Ok(y.clone());
                }
                let x = self.invert(n - 1, y)?;
                Ok(self.eval_h(n, &x)?.0)
            }
        }
    }

    /// `g_n = H_n o S o H_n^{-1}` and its derivative `phi H_n'(S y)/H_n'(y)`.
    pub fn eval_g(&self, n: usize, x: &R) -> Result<(R, R)> {
        let phi = R::from_field(&FieldElement::phi());
        let y = self.invert(n, x)?;
        let sy = golden_map(&y);
        let (_, dy) = self.eval_h(n, &y)?;
        let (v, dsy) = self.eval_h(n, &sy)?;
        Ok((v, phi * dsy / dy))
    }

    /// Collar subintervals of stage `n` inside `C_{[w]_1^n}`, pulled back by
    /// `H_{n-1}`.
    pub fn bad_set(&self, n: usize, w: &Word) -> Result<BadSet<R>> {
        self.check_depth(n)?;
        if w.len() < n {
            return Err(Error::InvalidArgument(format!("word {w} shorter than stage {n}")));
        }
        let u = w.prefix(n);
        let mut intervals = Vec::new();
        let stage = self.table.stage(n);
        if let (StageKind::Psi(_), Some(psi)) = (stage.kind, stage.psi.as_ref()) {
            if u.last() == 1 && psi.eps > R::zero() {
                let cyl = crate::symbolic::cylinder_of(&u)?;
                let a = image(self, cyl.lo);
                let len = image(self, cyl.hi) - a.clone();
                let e = psi.eps.clone();
                let ip = R::from_field(&FieldElement::inv_phi());
                let rel = [
                    (R::zero(), e.clone()),
                    (ip.clone() - e.clone(), ip.clone()),
                    (ip.clone(), ip + e.clone()),
                    (R::one() - e, R::one()),
                ];
                for (p, q) in rel {
                    let yp = a.clone() + len.clone() * p;
                    let yq = a.clone() + len.clone() * q;
                    let xp = self.invert_closed(n - 1, &yp, cyl.lo)?;
                    let xq = self.invert_closed(n - 1, &yq, cyl.hi)?;
                    intervals.push((xp, xq));
                }
            }
        }
        Ok(BadSet { n, word: u, intervals })
    }

    /// Inverse that returns the exact endpoint when `y` is its image.
    fn invert_closed(&self, n: usize, y: &R, endpoint: GoldenInt) -> Result<R> {
        if *y == image(self, endpoint) {
            return Ok(R::from_golden(endpoint));
        }
        self.invert(n, y)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schedule::base_case_schedule;

    #[test]
    fn g_two_endpoints_and_continuity() {
        let a1 = FieldElement::from_ratio(9, 10);
        let a2 = FieldElement::from_ratio(6, 5);
        let (v0, d0, _) = g_two(&a1, &a2, &FieldElement::zero());
        let (v1, d1, _) = g_two(&a1, &a2, &FieldElement::one());
        assert_eq!((v0, d0, v1, d1.clone()), (FieldElement::zero(), a1.clone(), a2.clone(), a2.clone()));
        for s in [FieldElement::from_ratio(1, 3), FieldElement::from_ratio(2, 3)] {
            let left = g_two(&a1, &a2, &s);
            let eps = FieldElement::from_ratio(1, 1_000_000_000);
            let right = g_two(&a1, &a2, &(&s + &eps));
            assert!((&right.0 - &left.0 - &eps * &left.1).abs() < FieldElement::from_ratio(1, 1_000_000_000_000));
        }
    }

    #[test]
    fn psi_fixes_anchors() {
        let lambda = FieldElement::from_ratio(11, 10);
        let psi = Psi::<FieldElement>::new(&lambda, &FieldElement::from_ratio(1, 64));
        assert_eq!(psi.value(&FieldElement::zero()), FieldElement::zero());
        let phi = FieldElement::phi();
        let expect = &(&lambda * &phi) / &(FieldElement::one() + &lambda * &phi);
        assert_eq!(psi.value(&FieldElement::inv_phi()), expect);
        let (_, d0, _, _) = psi.eval(&FieldElement::zero());
        assert_eq!(d0, FieldElement::one());
        let z = FieldElement::from_ratio(7, 10);
        let back = psi.inverse(&psi.value(&z));
        assert_eq!(back, z);
    }

    #[test]
    fn psi_with_unit_lambda_is_identity() {
        let psi = Psi::<f64>::new(&FieldElement::one(), &FieldElement::from_ratio(1, 32));
        for i in 0..=100 {
            let z = i as f64 / 100.0;
            let (v, d, _, _) = psi.eval(&z);
            assert!((v - z).abs() < 1e-15 && (d - 1.0).abs() < 1e-15);
        }
    }

    #[test]
    fn predecessor_is_adjacent() {
        for n in 1..8 {
            crate::symbolic::for_each_cylinder(n, |c| {
                let (lo, hi) = predecessor_cylinder(c.lo, n);
                if c.lo == GoldenInt::ZERO {
                    assert_eq!(hi, GoldenInt::ONE);
                } else {
                    assert_eq!(hi, c.lo);
                }
                assert!(lo < hi);
            });
        }
    }

    #[test]
    fn endpoint_depths() {
        assert_eq!(endpoint_depth(GoldenInt::ZERO).unwrap(), 1);
        assert_eq!(endpoint_depth(GoldenInt::inv_phi_pow(1)).unwrap(), 1);
        assert_eq!(endpoint_depth(GoldenInt::inv_phi_pow(3)).unwrap(), 2);
    }

    #[test]
    fn partition_points_are_fixed_exactly() {
        let s = base_case_schedule();
        let c = Circle::<FieldElement>::new(&s);
        for e in [GoldenInt::ZERO, GoldenInt::inv_phi_pow(2), GoldenInt::inv_phi_pow(1)] {
            for n in [0, 1, 5, 13] {
                let v = c.eval_point(n, &Pt::golden(e)).unwrap().value;
                assert_eq!(v, e.to_field());
            }
        }
    }

    #[test]
    fn inverse_round_trip_f64() {
        let s = base_case_schedule();
        let c = Circle::<f64>::new(&s);
        let n = c.max_depth();
        for i in 0..200 {
            let x = (i as f64 + 0.37) / 200.0;
            let (y, _) = c.eval_h(n, &x).unwrap();
            let back = c.invert(n, &y).unwrap();
            assert!((back - x).abs() < 1e-12, "{x} {back}");
        }
    }
}
