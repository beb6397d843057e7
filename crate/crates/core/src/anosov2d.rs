//! The glued fundamental domain `M` of the golden toral automorphism, the
//! piecewise linear model `f~`, and the skew maps
//! `Z_N(x, y) = (K_{N,y'} o S o K_{N,y}^{-1}(x), y')`.
//!
//! Coordinates: `M = [0,1/phi] x [-phi/(phi+2), phi^2/(phi+2)]` union
//! `[1/phi,1] x [-phi/(phi+2), 1/(phi+2)]`. Points within `phi^-10` of a
//! horizontal boundary line are outside `U`; there the fiber map `K_{n,y}`
//! is blended towards the identity so that identified boundary points stay
//! identified.

use std::collections::hash_map::DefaultHasher;
use std::hash::{Hash, Hasher};
use std::sync::OnceLock;

use dashmap::DashMap;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::homeo1d::{
    alpha_of, bisect, eval_frame, image, invert_frame, predecessor_cylinder, trail, Circle, Eval, Frame, Pt,
    StageTable,
};
use crate::numerics::{Dual, FieldElement, GoldenInt, Real};
use crate::schedule::Schedule;
use crate::symbolic::{boundary_piece, level_pieces, Level};

fn fe_consts() -> &'static [FieldElement; 6] {
    static C: OnceLock<[FieldElement; 6]> = OnceLock::new();
    C.get_or_init(|| {
        [
            Level::Top.y(),
            Level::Middle.y(),
            Level::Bottom.y(),
            FieldElement::inv_phi(),
            FieldElement::inv_phi().pow(2),
            FieldElement::inv_phi().pow(10),
        ]
    })
}

/// `phi^2/(phi+2)`.
pub fn top_level<R: Real>() -> R {
    R::from_field(&fe_consts()[0])
}

/// `1/(phi+2)`.
pub fn middle_level<R: Real>() -> R {
    R::from_field(&fe_consts()[1])
}

/// `-phi/(phi+2)`.
pub fn bottom_level<R: Real>() -> R {
    R::from_field(&fe_consts()[2])
}

/// Width `phi^-10` of the boundary collar `U^c`.
pub fn collar_width<R: Real>() -> R {
    R::from_field(&fe_consts()[5])
}

fn inv_phi<R: Real>() -> R {
    R::from_field(&fe_consts()[3])
}

fn phi<R: Real>() -> R {
    R::from_field(&FieldElement::phi())
}

/// Which rectangle `J_i x [..]` a point lies over.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Region {
    R1,
    R3,
    R2,
}

/// A point of `M`.
#[derive(Clone, Debug, PartialEq)]
pub struct ManifoldPoint<R: Real> {
    pub x: R,
    pub y: R,
}

impl<R: Real> ManifoldPoint<R> {
    pub fn new(x: R, y: R) -> Result<Self> {
        let p = ManifoldPoint { x, y };
        if !p.in_domain() {
            return Err(Error::OutOfRange(format!("({:?}, {:?}) is not in the fundamental domain", p.x, p.y)));
        }
        Ok(p)
    }

    pub fn in_domain(&self) -> bool {
        if self.x < R::zero() || self.x > R::one() || self.y < bottom_level() {
            return false;
        }
        if self.x <= inv_phi() {
            self.y <= top_level()
        } else {
            self.y <= middle_level()
        }
    }

    /// Representative with `x < 1`, and `x >= 1/phi` only under the middle level.
    pub fn canonical(&self) -> Self {
        // pairs 1 and 2 carry x = 1 and the upper part of x = 1/phi back to x = 0
        let id = if self.x == R::one() {
            0
        } else if self.x == inv_phi() && self.y > middle_level() {
            1
        } else {
            return self.clone();
        };
        gluing_table()[id].unglue(self).expect("point on the glued side")
    }

    pub fn region(&self) -> Region {
        let p = self.canonical();
        if p.x < R::from_field(&fe_consts()[4]) {
            Region::R1
        } else if p.x < inv_phi() {
            Region::R3
        } else {
            Region::R2
        }
    }

    /// Whether the point lies on a horizontal line of the boundary.
    pub fn on_boundary(&self) -> bool {
        boundary_geometry(self).u == R::zero()
    }

    pub fn to_f64(&self) -> (f64, f64) {
        (self.x.to_f64(), self.y.to_f64())
    }
}

/// A closed boundary segment: `x = at` (vertical) or `y = at` (horizontal)
/// over `[lo, hi]`.
#[derive(Clone, Debug, Serialize)]
pub struct Segment {
    pub vertical: bool,
    pub at: FieldElement,
    pub lo: FieldElement,
    pub hi: FieldElement,
}

impl Segment {
    fn contains<R: Real>(&self, p: &ManifoldPoint<R>) -> bool {
        let (fixed, free) = if self.vertical { (&p.x, &p.y) } else { (&p.y, &p.x) };
        *fixed == R::from_field(&self.at) && R::from_field(&self.lo) <= *free && *free <= R::from_field(&self.hi)
    }

    pub fn length(&self) -> FieldElement {
        &self.hi - &self.lo
    }
}

/// One identification of the boundary: `from` is carried onto `to` by a
/// translation.
#[derive(Clone, Debug, Serialize)]
pub struct Gluing {
    pub id: u8,
    pub from: Segment,
    pub to: Segment,
}

impl Gluing {
    pub fn shift(&self) -> (FieldElement, FieldElement) {
        if self.from.vertical {
            (&self.to.at - &self.from.at, &self.to.lo - &self.from.lo)
        } else {
            (&self.to.lo - &self.from.lo, &self.to.at - &self.from.at)
        }
    }

    pub fn glue<R: Real>(&self, p: &ManifoldPoint<R>) -> Option<ManifoldPoint<R>> {
        if !self.from.contains(p) {
            return None;
        }
        let (dx, dy) = self.shift();
        Some(ManifoldPoint { x: p.x.clone() + R::from_field(&dx), y: p.y.clone() + R::from_field(&dy) })
    }

    pub fn unglue<R: Real>(&self, p: &ManifoldPoint<R>) -> Option<ManifoldPoint<R>> {
        if !self.to.contains(p) {
            return None;
        }
        let (dx, dy) = self.shift();
        Some(ManifoldPoint { x: p.x.clone() - R::from_field(&dx), y: p.y.clone() - R::from_field(&dy) })
    }
}

/// The five boundary identifications turning `M` into a torus.
pub fn gluing_table() -> &'static [Gluing; 5] {
    static T: OnceLock<[Gluing; 5]> = OnceLock::new();
    T.get_or_init(|| {
        let [top, mid, bot, ip, ip2, _] = fe_consts().clone();
        let zero = FieldElement::zero();
        let one = FieldElement::one();
        let ip3 = ip.pow(3);
        let seg = |vertical, at: &FieldElement, lo: &FieldElement, hi: &FieldElement| Segment {
            vertical,
            at: at.clone(),
            lo: lo.clone(),
            hi: hi.clone(),
        };
        [
            Gluing { id: 1, from: seg(true, &zero, &zero, &top), to: seg(true, &one, &bot, &mid) },
            Gluing { id: 2, from: seg(true, &zero, &bot, &zero), to: seg(true, &ip, &mid, &top) },
            Gluing { id: 3, from: seg(false, &top, &zero, &ip3), to: seg(false, &bot, &ip2, &ip) },
            Gluing { id: 4, from: seg(false, &top, &ip3, &ip), to: seg(false, &bot, &ip, &one) },
            Gluing { id: 5, from: seg(false, &bot, &zero, &ip2), to: seg(false, &mid, &ip, &one) },
        ]
    })
}

/// Whether `p` and `q` are the same point of the torus.
pub fn identified<R: Real>(p: &ManifoldPoint<R>, q: &ManifoldPoint<R>) -> bool {
    if p == q {
        return true;
    }
    // corners can need two steps (e.g. (0, top) ~ (1, mid) ~ (1/phi, ...))
    let mut frontier = vec![p.clone()];
    let mut seen = vec![p.clone()];
    for _ in 0..3 {
        let mut next = Vec::new();
        for a in &frontier {
            for g in gluing_table() {
                for b in [g.glue(a), g.unglue(a)].into_iter().flatten() {
                    if b == *q {
                        return true;
                    }
                    if !seen.contains(&b) {
                        seen.push(b.clone());
                        next.push(b);
                    }
                }
            }
        }
        frontier = next;
    }
    false
}

/// `f~(x, y) = (phi x, -y/phi)` on `[0, 1/phi)`, `(phi x - 1, -(y - phi^2/(phi+2))/phi)` beyond.
pub fn f_tilde<R: Real>(p: &ManifoldPoint<R>) -> ManifoldPoint<R> {
    let phi = phi::<R>();
    if p.x < inv_phi() {
        ManifoldPoint { x: phi.clone() * p.x.clone(), y: -(p.y.clone() / phi) }
    } else {
        ManifoldPoint { x: phi.clone() * p.x.clone() - R::one(), y: -((p.y.clone() - top_level()) / phi) }
    }
}

pub fn f_tilde_inv<R: Real>(p: &ManifoldPoint<R>) -> ManifoldPoint<R> {
    let phi = phi::<R>();
    if p.y <= middle_level() {
        ManifoldPoint { x: p.x.clone() / phi.clone(), y: -(phi * p.y.clone()) }
    } else {
        ManifoldPoint { x: (p.x.clone() + R::one()) / phi.clone(), y: top_level::<R>() - phi * p.y.clone() }
    }
}

/// Position of a point relative to the horizontal boundary.
#[derive(Clone, Debug, Serialize)]
pub struct BoundaryGeometry<R: Real> {
    /// Distance to the nearest horizontal boundary line.
    pub u: R,
    pub level: Level,
    pub level_y: R,
    pub in_u: bool,
    /// Coupling index of `(x, level_y)`; `None` inside `U` or beyond the
    /// coupling table (never coupled at evaluable depth).
    pub j: Option<usize>,
}

fn upper_level_at<R: Real>(x: &R) -> Level {
    if *x < inv_phi() {
        Level::Top
    } else {
        Level::Middle
    }
}

pub fn boundary_geometry<R: Real>(p: &ManifoldPoint<R>) -> BoundaryGeometry<R> {
    let p = p.canonical();
    let upper = upper_level_at(&p.x);
    let up_y: R = R::from_field(&upper.y());
    let du = up_y.clone() - p.y.clone();
    let dl = p.y.clone() - bottom_level();
    let (u, level, level_y) = if du < dl { (du, upper, up_y) } else { (dl, Level::Bottom, bottom_level()) };
    let in_u = u >= collar_width();
    let j = if in_u { None } else { boundary_piece(level, &p.x).map(|pc| pc.j) };
    BoundaryGeometry { u, level, level_y, in_u, j }
}

/// `3 phi^20 u^2 - 2 phi^30 u^3`, saturated at 1 beyond the collar.
pub fn blend<R: Real>(u: &R) -> R {
    let c = collar_width::<R>();
    if *u >= c {
        return R::one();
    }
    let v = u.clone() / c;
    v.clone() * v.clone() * (R::from_i64(3) - R::from_i64(2) * v)
}

fn blend_du<R: Real>(u: &R) -> R {
    let c = collar_width::<R>();
    let v = u.clone() / c.clone();
    R::from_i64(6) * v.clone() * (R::one() - v) / c
}

/// `q_J(x, u) = (H_J(x) - x) blend(u) + x` with both partials.
#[derive(Clone, Debug)]
pub struct QValue<R: Real> {
    pub value: R,
    pub dx: R,
    pub du: R,
}

/// Value and partials of `K_{n,y}` at one point.
#[derive(Clone, Debug)]
pub struct KEval<R: Real> {
    pub value: R,
    pub dx: R,
    pub dy: R,
    pub in_u: bool,
    pub j: Option<usize>,
}

/// Image of `Z_N` at a point with its Jacobian `[[dz/dx, dz/dy], [0, dy'/dy]]`.
#[derive(Clone, Debug)]
pub struct ZEval<R: Real> {
    pub image: ManifoldPoint<R>,
    pub jacobian: [[R; 2]; 2],
    /// Identifies the smooth branch used; points with equal signatures are
    /// evaluated by the same polynomial pieces.
    pub signature: u64,
}

impl<R: Real> ZEval<R> {
    pub fn det(&self) -> R {
        let j = &self.jacobian;
        j[0][0].clone() * j[1][1].clone() - j[0][1].clone() * j[1][0].clone()
    }
}

#[derive(Clone, Debug)]
pub struct FdJacobian<R: Real> {
    pub jacobian: [[R; 2]; 2],
    pub smooth: bool,
}

type D<S> = Dual<S>;

/// The fiber map over one boundary piece (or beyond the table) at fixed `y`.
struct Coupled<'a, S: Real> {
    circle: &'a Circle<D<S>>,
    start: usize,
    s: D<S>,
    piece: Option<(GoldenInt, GoldenInt)>,
    memo: DashMap<GoldenInt, D<S>>,
}

impl<S: Real> Frame<D<S>> for Coupled<'_, S> {
    fn table(&self) -> &StageTable<D<S>> {
        Frame::table(self.circle)
    }
    fn start(&self) -> usize {
        self.start
    }
    fn base(&self, n: usize, x: &Pt<D<S>>) -> (D<S>, D<S>) {
        let e = eval_frame(self.circle, n, x, None);
        let one = D::<S>::one();
        (x.v.clone() + self.s.clone() * (e.value - x.v.clone()), one.clone() + self.s.clone() * (e.deriv - one))
    }
    fn base_image(&self, e: GoldenInt) -> D<S> {
        let x = D::<S>::from_golden(e);
        x.clone() + self.s.clone() * (image(self.circle, e) - x)
    }
    fn memo(&self) -> &DashMap<GoldenInt, D<S>> {
        &self.memo
    }
    fn base_inverse(&self, n: usize, y: &D<S>) -> D<S> {
        if n == 0 {
            return y.clone();
        }
        let (lo, hi) = match self.piece {
            Some((a, b)) => (D::from_golden(a), D::from_golden(b)),
            None => (D::zero(), D::one()),
        };
        bisect(|x| self.base(n, &Pt::new(x.clone())).0, y, lo, hi)
    }
    fn pred_alpha(&self, n: usize, lo: GoldenInt, hi: GoldenInt) -> D<S> {
        let (plo, phi) = self.piece.expect("stages above the base run only on pieces");
        if lo != plo {
            let (a, b) = predecessor_cylinder(lo, n);
            return alpha_of(self, a, b);
        }
        let _ = hi;
        // leftmost cylinder of the piece: blend the piece's own cyclic
        // predecessor (boundary) with the global one (edge of U)
        let (a, b) = predecessor_cylinder(phi, n);
        let inner = alpha_of(self, a, b);
        let (c, d) = predecessor_cylinder(lo, n);
        let outer = alpha_of(self.circle, c, d);
        (D::<S>::one() - self.s.clone()) * inner + self.s.clone() * outer
    }
}

enum Fiber<'a, S: Real> {
    Free(&'a Circle<D<S>>),
    Coupled(Coupled<'a, S>),
}

impl<S: Real> Fiber<'_, S> {
    fn eval(&self, n: usize, x: &D<S>, trace: Option<&mut Vec<D<S>>>) -> Eval<D<S>> {
        let pt = Pt::new(x.clone());
        match self {
            Fiber::Free(c) => eval_frame(*c, n, &pt, trace),
            Fiber::Coupled(f) => eval_frame(f, n, &pt, trace),
        }
    }

    fn invert(&self, n: usize, v: &D<S>) -> D<S> {
        match self {
            Fiber::Free(c) => invert_frame(*c, n, v),
            Fiber::Coupled(f) => invert_frame(f, n, v),
        }
    }
}

/// Report of the y-derivative audit at one grid point.
#[derive(Clone, Debug, Serialize)]
pub struct YDerivativeRow {
    pub x: f64,
    pub y: f64,
    pub u: f64,
    pub j: Option<usize>,
    pub kind: AuditKind,
    pub analytic: f64,
    pub finite_difference: f64,
    pub bound: f64,
    pub pass: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditKind {
    /// On a horizontal line of the boundary (`u = 0`).
    DomainBoundary,
    /// On the edge of the collar (`u = phi^-10`).
    CollarEdge,
    Interior,
}

#[derive(Clone, Debug, Serialize)]
pub struct YDerivativeAudit {
    pub depth: usize,
    pub step: f64,
    pub rows: Vec<YDerivativeRow>,
    pub worst_margin: f64,
    pub pass: bool,
}

/// Grid for the y-derivative audit: `nx` columns per level and `nu` collar
/// depths from `u = 0` to `u = phi^-10`.
#[derive(Clone, Copy, Debug)]
pub struct AuditGrid {
    pub nx: usize,
    pub nu: usize,
    pub step: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct OrbitSummary {
    pub start: (f64, f64),
    pub top_exponent: f64,
    pub bottom_exponent: f64,
    pub min_step_growth: f64,
    pub min_zx: f64,
    pub max_zx: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct HyperbolicityReport {
    pub depth: usize,
    pub orbits: usize,
    pub horizon: usize,
    pub seed: u64,
    pub resampled: usize,
    /// Extremes of `dz/dx` along all orbits.
    pub min_zx: f64,
    pub max_zx: f64,
    pub min_abs_det: f64,
    pub max_abs_det: f64,
    /// Smallest one-step growth of `(1,0)` under the determinant-normalized cocycle.
    pub min_step_growth: f64,
    /// Smallest `(prod dz/dx)^(1/n)` over orbits.
    pub min_growth_rate: f64,
    pub mean_top_exponent: f64,
    pub mean_bottom_exponent: f64,
    /// Largest off-diagonal Jacobian entry seen (bounds the stable cone slope).
    pub max_shear: f64,
    pub per_orbit: Vec<OrbitSummary>,
}

/// The fibered maps `K_{n,y}` and skew maps `Z_N` of one schedule.
pub struct Fibered<S: Real> {
    circle: Circle<D<S>>,
}

impl<S: Real> Fibered<S> {
    pub fn new(schedule: &Schedule) -> Self {
        Fibered { circle: Circle::new(schedule) }
    }

    pub fn schedule(&self) -> &Schedule {
        self.circle.schedule()
    }

    pub fn max_depth(&self) -> usize {
        self.circle.max_depth()
    }

    fn check_depth(&self, n: usize) -> Result<()> {
        if n > self.max_depth() {
            return Err(Error::OutOfRange(format!("depth {n} beyond the schedule's {}", self.max_depth())));
        }
        Ok(())
    }

    /// `H_n(x)` of the underlying circle construction.
    pub fn eval_h(&self, n: usize, x: &S) -> Result<(S, S)> {
        let (v, d) = self.circle.eval_h(n, &D::constant(x.clone()))?;
        Ok((v.v, d.v))
    }

    pub fn q_interp(&self, j: usize, x: &S, u: &S) -> Result<QValue<S>> {
        self.check_depth(j)?;
        if *u < S::zero() || *u > collar_width() {
            return Err(Error::OutOfRange(format!("u = {u:?} outside [0, phi^-10]")));
        }
        let (h, dh) = self.eval_h(j, x)?;
        let b = blend(u);
        let diff = h - x.clone();
        Ok(QValue {
            value: x.clone() + b.clone() * diff.clone(),
            dx: S::one() + b * (dh - S::one()),
            du: diff * blend_du(u),
        })
    }

    /// Fiber at `(x, y)`, where `x` is any point of the fiber on the correct
    /// side of `1/phi`; the piece is chosen by `locate`.
    fn fiber(&self, x: &S, y: &D<S>, locate: impl Fn(Level, &D<S>) -> Option<(usize, GoldenInt, GoldenInt)>) -> Fiber<'_, S> {
        let upper = upper_level_at(x);
        let up_y: D<S> = D::from_field(&upper.y());
        let du = up_y - y.clone();
        let dl = y.clone() - bottom_level();
        let (u, level) = if du < dl { (du, upper) } else { (dl, Level::Bottom) };
        if u >= collar_width() {
            return Fiber::Free(&self.circle);
        }
        let s = blend(&u);
        let (start, piece) = match locate(level, &s) {
            Some((j, a, b)) => (j, Some((a, b))),
            None => (self.max_depth(), None),
        };
        Fiber::Coupled(Coupled { circle: &self.circle, start: start.min(self.max_depth()), s, piece, memo: DashMap::new() })
    }

    fn fiber_at(&self, x: &S, y: &D<S>) -> Fiber<'_, S> {
        self.fiber(x, y, |level, _| boundary_piece(level, x).map(|p| (p.j, p.lo, p.hi)))
    }

    /// Fiber whose map sends some point to `v`.
    fn fiber_onto(&self, v: &S, y: &D<S>) -> Fiber<'_, S> {
        self.fiber(v, y, |level, s| {
            let k = |e: GoldenInt| {
                let x = D::<S>::from_golden(e);
                (x.clone() + s.clone() * (image(&self.circle, e) - x)).v
            };
            level_pieces(level).find(|p| k(p.lo) <= *v && *v < k(p.hi)).map(|p| (p.j, p.lo, p.hi))
        })
    }

    fn eval_dual(&self, n: usize, x: &D<S>, y: &D<S>) -> Eval<D<S>> {
        let fiber = self.fiber_at(&x.v, y);
        let mut e = fiber.eval(n, x, None);
        let mut h = DefaultHasher::new();
        e.signature.hash(&mut h);
        match &fiber {
            Fiber::Free(_) => 0u8.hash(&mut h),
            Fiber::Coupled(c) => (1u8, c.start, c.piece).hash(&mut h),
        }
        e.signature = h.finish();
        e
    }

    /// `K_{n,y}(x)` with `dK/dx` and `dK/dy`.
    pub fn eval_k(&self, n: usize, x: &S, y: &S) -> Result<KEval<S>> {
        self.check_depth(n)?;
        let p = ManifoldPoint::new(x.clone(), y.clone())?.canonical();
        if p.x >= S::one() {
            return Err(Error::OutOfRange("x = 1".into()));
        }
        let g = boundary_geometry(&p);
        let e = self.eval_dual(n, &D::constant(p.x.clone()), &D::variable(p.y.clone()));
        Ok(KEval { value: e.value.v, dx: e.deriv.v, dy: e.value.d, in_u: g.in_u, j: g.j })
    }

    /// `[K_{0,y}(x), ..., K_{n,y}(x)]`.
    pub fn trace_k(&self, n: usize, x: &S, y: &S) -> Result<Vec<S>> {
        self.check_depth(n)?;
        let p = ManifoldPoint::new(x.clone(), y.clone())?.canonical();
        let mut tr = Vec::with_capacity(n + 1);
        self.fiber_at(&p.x, &D::constant(p.y.clone())).eval(n, &D::constant(p.x.clone()), Some(&mut tr));
        Ok(tr.into_iter().map(|d| d.v).collect())
    }

    /// `K_{n,y}^{-1}(v)`.
    pub fn invert_k(&self, n: usize, v: &S, y: &S) -> Result<S> {
        self.check_depth(n)?;
        let p = ManifoldPoint::new(v.clone(), y.clone())?.canonical();
        let yd = D::constant(p.y.clone());
        Ok(self.fiber_onto(&p.x, &yd).invert(n, &D::constant(p.x.clone())).v)
    }

    /// `Z_N(p)` with its Jacobian.
    pub fn eval_z(&self, n: usize, p: &ManifoldPoint<S>) -> Result<ZEval<S>> {
        self.check_depth(n)?;
        if !p.in_domain() {
            return Err(Error::OutOfRange(format!("{p:?} is not in the fundamental domain")));
        }
        let p = p.canonical();
        let phi = phi::<S>();
        let right = p.x >= inv_phi();
        let xi = self.invert_k(n, &p.x, &p.y)?;
        let yd = D::variable(p.y.clone());
        let at_xi = self.eval_dual(n, &D::constant(xi.clone()), &yd);
        let kx = at_xi.deriv.v;
        let dxi_dy = -at_xi.value.d / kx.clone();
        let eta_v = if right { phi.clone() * xi - S::one() } else { phi.clone() * xi };
        let eta = D::new(eta_v, phi.clone() * dxi_dy);
        let phi_d: D<S> = D::from_field(&FieldElement::phi());
        let mut yp = -(yd / phi_d);
        if right {
            yp = yp + D::from_field(&(&FieldElement::phi() * &Level::Middle.y()));
        }
        let at_eta = self.eval_dual(n, &eta, &yp);
        let mut image = ManifoldPoint { x: at_eta.value.v.clone(), y: yp.v.clone() };
        if image.x >= S::one() {
            image = ManifoldPoint::new(S::one(), image.y)?.canonical();
        }
        let jacobian = [[at_eta.deriv.v * phi / kx, at_eta.value.d], [S::zero(), yp.d]];
        let mut h = DefaultHasher::new();
        (right, at_xi.signature, at_eta.signature).hash(&mut h);
        Ok(ZEval { image, jacobian, signature: h.finish() })
    }

    /// `Z_N^{-1}(p)`.
    pub fn eval_z_inv(&self, n: usize, p: &ManifoldPoint<S>) -> Result<ManifoldPoint<S>> {
        self.check_depth(n)?;
        let p = p.canonical();
        let phi = phi::<S>();
        let v = self.invert_k(n, &p.x, &p.y)?;
        let (x0, y) = if p.y <= middle_level() {
            (v / phi.clone(), -(phi * p.y.clone()))
        } else {
            ((v + S::one()) / phi.clone(), top_level::<S>() - phi * p.y.clone())
        };
        let e = self.eval_dual(n, &D::constant(x0), &D::constant(y.clone()));
        Ok(ManifoldPoint { x: e.value.v, y })
    }

    /// Central-difference Jacobian of `Z_N` (one-sided at the boundary).
    ///
    /// `smooth` is false when the stencil straddles a change of branch.
    pub fn jacobian_fd(&self, n: usize, p: &ManifoldPoint<S>, step: &S) -> Result<FdJacobian<S>> {
        let two = S::from_i64(2);
        let centre = self.eval_z(n, p)?.signature;
        let smooth = std::cell::Cell::new(true);
        let at = |x: S, y: S| -> Result<ManifoldPoint<S>> {
            let q = ManifoldPoint::new(x, y)?;
            let z = self.eval_z(n, &q)?;
            if z.signature != centre {
                smooth.set(false);
            }
            Ok(z.image)
        };
        let col = |dx: S, dy: S| -> Result<[S; 2]> {
            let fwd = at(p.x.clone() + dx.clone(), p.y.clone() + dy.clone());
            let bwd = at(p.x.clone() - dx.clone(), p.y.clone() - dy.clone());
            let mid = || at(p.x.clone(), p.y.clone());
            let (a, b, h) = match (fwd, bwd) {
                (Ok(a), Ok(b)) => (a, b, step.clone() * two.clone()),
                (Ok(a), Err(_)) => (a, mid()?, step.clone()),
                (Err(_), Ok(b)) => (mid()?, b, step.clone()),
                (Err(e), Err(_)) => return Err(e),
            };
            Ok([(a.x - b.x) / h.clone(), (a.y - b.y) / h])
        };
        let cx = col(step.clone(), S::zero())?;
        let cy = col(S::zero(), step.clone())?;
        let jacobian = [[cx[0].clone(), cy[0].clone()], [cx[1].clone(), cy[1].clone()]];
        Ok(FdJacobian { jacobian, smooth: smooth.get() })
    }

    /// The point `x(delta)` in the depth-`j+1` cylinder of `x` whose relative
    /// position under `K_{j,y+delta}` matches that of `x` under `K_{j,y}`,
    /// where `j` is the coupling index at `(x, y)`.
    pub fn x_delta(&self, x: &S, y: &S, delta: &S) -> Result<S> {
        let p = ManifoldPoint::new(x.clone(), y.clone())?.canonical();
        let g = boundary_geometry(&p);
        let j = match (g.in_u, g.j) {
            (false, Some(j)) => j,
            _ => return Err(Error::InvalidArgument("x_delta needs a point of the collar with a coupling index".into())),
        };
        for q in [p.y.clone() + delta.clone(), p.y.clone() - delta.clone()] {
            let moved = ManifoldPoint::new(p.x.clone(), q).map_err(|_| Error::InvalidArgument("delta too large".into()))?;
            let gm = boundary_geometry(&moved);
            if gm.in_u || gm.level != g.level || gm.j != Some(j) {
                return Err(Error::InvalidArgument("delta too large: leaves the collar".into()));
            }
        }
        let j = j.min(self.max_depth());
        let st = trail(&Pt::new(p.x.clone()), j + 1)[j];
        let q = |x: &S, yy: &S| -> S {
            let u = boundary_geometry(&ManifoldPoint { x: p.x.clone(), y: yy.clone() }).u;
            let (h, _) = self.eval_h(j, x).expect("depth checked");
            x.clone() + blend(&u) * (h - x.clone())
        };
        let (lo, hi) = (S::from_golden(st.lo), S::from_golden(st.hi));
        let prop = |xx: &S, yy: &S| (q(xx, yy) - q(&lo, yy)) / (q(&hi, yy) - q(&lo, yy));
        let target = prop(&p.x, &p.y);
        let y1 = p.y.clone() + delta.clone();
        if *delta == S::zero() {
            return Ok(p.x);
        }
        Ok(bisect(|xx| prop(xx, &y1), &target, lo.clone(), hi.clone()))
    }

    /// `dK_{N,y}/dy` on a collar grid, analytic and by finite differences.
    pub fn y_derivative_audit(&self, n: usize, grid: AuditGrid) -> Result<YDerivativeAudit> {
        self.check_depth(n)?;
        let c = collar_width::<f64>();
        let h = grid.step;
        let mut pts = Vec::new();
        for level in [Level::Bottom, Level::Top, Level::Middle] {
            let (x0, x1) = match level {
                Level::Bottom => (0.0, 1.0),
                Level::Top => (0.0, inv_phi::<f64>()),
                Level::Middle => (inv_phi::<f64>(), 1.0),
            };
            let ly = level.y().to_f64();
            let sign = if level == Level::Bottom { 1.0 } else { -1.0 };
            for ix in 0..grid.nx {
                let x = x0 + (x1 - x0) * (ix as f64 + 0.5) / grid.nx as f64;
                for iu in 0..grid.nu {
                    let u = if grid.nu == 1 { 0.0 } else { c * iu as f64 / (grid.nu - 1) as f64 };
                    let kind = if iu == 0 {
                        AuditKind::DomainBoundary
                    } else if iu + 1 == grid.nu {
                        AuditKind::CollarEdge
                    } else {
                        AuditKind::Interior
                    };
                    pts.push((x, ly + sign * u, u, sign, kind));
                }
            }
        }
        let rows: Vec<YDerivativeRow> = pts
            .par_iter()
            .map(|&(x, y, u, sign, kind)| -> Result<YDerivativeRow> {
                let xs = S::from_f64(x);
                let k = self.eval_k(n, &xs, &S::from_f64(y))?;
                let value = |yy: f64| -> Result<f64> { Ok(self.eval_k(n, &xs, &S::from_f64(yy))?.value.to_f64()) };
                // stay inside the collar: second-order one-sided at u = 0 and u = phi^-10
                let one_sided = |dir: f64| -> Result<f64> {
                    let s = dir * h;
                    Ok((-3.0 * value(y)? + 4.0 * value(y + s)? - value(y + 2.0 * s)?) / (2.0 * s))
                };
                let fd = match kind {
                    AuditKind::DomainBoundary => one_sided(sign)?,
                    AuditKind::CollarEdge => one_sided(-sign)?,
                    AuditKind::Interior if u > h && u + h < c => (value(y + h)? - value(y - h)?) / (2.0 * h),
                    AuditKind::Interior => one_sided(sign)?,
                };
                let tol = 10.0 * h;
                let bound = match (kind, k.j) {
                    (AuditKind::Interior, Some(j)) => 1.6f64.powi(-(j as i32)) + tol,
                    _ => tol,
                };
                let analytic = k.dy.to_f64();
                let pass = analytic.abs() <= bound && fd.abs() <= bound;
                Ok(YDerivativeRow { x, y, u, j: k.j, kind, analytic, finite_difference: fd, bound, pass })
            })
            .collect::<Result<_>>()?;
        let worst_margin = rows
            .iter()
            .map(|r| r.bound - r.analytic.abs().max(r.finite_difference.abs()))
            .fold(f64::INFINITY, f64::min);
        let pass = rows.iter().all(|r| r.pass);
        Ok(YDerivativeAudit { depth: n, step: h, rows, worst_margin, pass })
    }

    /// Runs orbits of `Z_N` from seeded low-discrepancy starts and measures
    /// growth of `(1, 0)` along them.
    pub fn hyperbolicity_certificate(&self, n: usize, orbits: usize, horizon: usize, seed: u64) -> Result<HyperbolicityReport> {
        self.check_depth(n)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let shift: (f64, f64) = (rng.gen(), rng.gen());
        let starts: Vec<(usize, f64, f64)> = (0..orbits)
            .map(|i| {
                let a = (halton(i as u64 + 1, 2) + shift.0).fract();
                let b = (halton(i as u64 + 1, 3) + shift.1).fract();
                (i, a, b)
            })
            .collect();
        let results: Vec<(OrbitSummary, f64, f64, f64, usize)> = starts
            .par_iter()
            .map(|&(i, a, b)| self.run_orbit(n, horizon, i, a, b))
            .collect::<Result<_>>()?;
        let mut rep = HyperbolicityReport {
            depth: n,
            orbits,
            horizon,
            seed,
            resampled: 0,
            min_zx: f64::INFINITY,
            max_zx: f64::NEG_INFINITY,
            min_abs_det: f64::INFINITY,
            max_abs_det: f64::NEG_INFINITY,
            min_step_growth: f64::INFINITY,
            min_growth_rate: f64::INFINITY,
            mean_top_exponent: 0.0,
            mean_bottom_exponent: 0.0,
            max_shear: 0.0,
            per_orbit: Vec::with_capacity(orbits),
        };
        for (o, dmin, dmax, shear, resampled) in results {
            rep.min_zx = rep.min_zx.min(o.min_zx);
            rep.max_zx = rep.max_zx.max(o.max_zx);
            rep.min_abs_det = rep.min_abs_det.min(dmin);
            rep.max_abs_det = rep.max_abs_det.max(dmax);
            rep.min_step_growth = rep.min_step_growth.min(o.min_step_growth);
            rep.min_growth_rate = rep.min_growth_rate.min(o.top_exponent.exp());
            rep.mean_top_exponent += o.top_exponent / orbits as f64;
            rep.mean_bottom_exponent += o.bottom_exponent / orbits as f64;
            rep.max_shear = rep.max_shear.max(shear);
            rep.resampled += resampled;
            rep.per_orbit.push(o);
        }
        Ok(rep)
    }

    fn run_orbit(&self, n: usize, horizon: usize, index: usize, a: f64, b: f64) -> Result<(OrbitSummary, f64, f64, f64, usize)> {
        let mut resampled = 0;
        let mut a = a;
        loop {
            match self.try_orbit(n, horizon, a, b) {
                Ok(mut r) => {
                    r.4 = resampled;
                    return Ok(r);
                }
                Err(e) => {
                    resampled += 1;
                    if resampled > 16 {
                        return Err(e);
                    }
                    a = (a + halton(index as u64 + 7 * resampled as u64, 5)).fract();
                }
            }
        }
    }

    fn try_orbit(&self, n: usize, horizon: usize, a: f64, b: f64) -> Result<(OrbitSummary, f64, f64, f64, usize)> {
        let x = a;
        let top = if x < inv_phi::<f64>() { top_level::<f64>() } else { middle_level::<f64>() };
        let y = bottom_level::<f64>() + (top - bottom_level::<f64>()) * b;
        let mut p = ManifoldPoint::new(S::from_f64(x), S::from_f64(y))?;
        let start = p.to_f64();
        let (mut log_top, mut log_bottom) = (0.0, 0.0);
        let (mut zmin, mut zmax, mut dmin, mut dmax, mut gmin, mut shear) =
            (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, 0.0f64);
        for _ in 0..horizon {
            let z = self.eval_z(n, &p)?;
            let zx = z.jacobian[0][0].to_f64();
            let det = z.det().to_f64().abs();
            zmin = zmin.min(zx);
            zmax = zmax.max(zx);
            dmin = dmin.min(det);
            dmax = dmax.max(det);
            gmin = gmin.min(zx.abs() / det);
            shear = shear.max(z.jacobian[0][1].to_f64().abs());
            log_top += zx.abs().ln();
            log_bottom += z.jacobian[1][1].to_f64().abs().ln();
            p = z.image;
        }
        let k = horizon.max(1) as f64;
        let summary = OrbitSummary {
            start,
            top_exponent: log_top / k,
            bottom_exponent: log_bottom / k,
            min_step_growth: gmin,
            min_zx: zmin,
            max_zx: zmax,
        };
        Ok((summary, dmin, dmax, shear, 0))
    }
}

/// Radical inverse of `i` in base `b`.
fn halton(mut i: u64, b: u64) -> f64 {
    let mut f = 1.0;
    let mut r = 0.0;
    while i > 0 {
        f /= b as f64;
        r += f * (i % b) as f64;
        i /= b;
    }
    r
}
