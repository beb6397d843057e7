//! Densities between the collared construction and its piecewise-affine
//! (`eps = 0`) counterpart, and the cumulative distribution of `mu+`.
//!
//! With `nu_eps(A) = m(H_{eps,N_t}(A))`, the density `z_t = dnu_eps/dnu_0` is
//! `H'_{eps,N_t} / H'_{0,N_t}`. Integrals over cylinders reduce to differences
//! of endpoint images, which is how all averages here are computed.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::homeo1d::{trail, Circle, Pt};
use crate::markov::{cylinder_mass, MeasureSpec};
use crate::numerics::{FieldElement, GoldenInt, Real};
use crate::schedule::Schedule;
use crate::symbolic::{enumerate_cylinders, partition_interval, split_point, Word};

/// The circles `H_{eps_k}` for `eps` truncated after stage `k = 0..=T`.
pub struct Density<R: Real> {
    schedule: Schedule,
    circles: Vec<Circle<R>>,
}

/// `z_t(x)` by both routes.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ZValue {
    pub direct: f64,
    pub telescoping: f64,
}

/// One row of the uniform-integrability table.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TailRow {
    pub m: f64,
    /// `E[z_t 1{z_t > M}]` for `t = 1..=t_max`.
    pub tails: Vec<f64>,
    pub sup: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct UiDiagnostic {
    pub rows: Vec<TailRow>,
    /// Tails are nonincreasing in `M` for every `t`.
    pub monotone: bool,
}

impl<R: Real> Density<R> {
    pub fn new(schedule: &Schedule) -> Self {
        let circles = (0..=schedule.num_stages()).map(|k| Circle::new(&schedule.eps_truncated(k))).collect();
        Density { schedule: schedule.clone(), circles }
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    /// Construction with collars up to stage `k` (`0` is piecewise affine).
    pub fn circle(&self, k: usize) -> &Circle<R> {
        &self.circles[k.min(self.circles.len() - 1)]
    }

    fn full(&self) -> &Circle<R> {
        self.circles.last().expect("at least one circle")
    }

    fn depth(&self, t: usize) -> Result<usize> {
        if t == 0 || t > self.schedule.num_stages() {
            return Err(Error::OutOfRange(format!("stage {t} outside 1..={}", self.schedule.num_stages())));
        }
        Ok(self.schedule.big_n(t))
    }

    /// `z_t(x)`; fails at cylinder endpoints of depth `N_t`.
    pub fn z_eval(&self, t: usize, x: &R) -> Result<ZValue> {
        let n = self.depth(t)?;
        let steps = trail(&Pt::new(x.clone()), n);
        if let Some(st) = steps.last() {
            if *x == R::from_golden(st.lo) {
                return Err(Error::Endpoint(format!("{x:?} is a depth-{n} cylinder endpoint")));
            }
        }
        let d_eps = self.full().eval_h(n, x)?.1;
        let d_zero = self.circles[0].eval_h(n, x)?.1;
        let direct = (d_eps / d_zero).to_f64();
        let mut tele = R::one();
        for k in 1..=t {
            let num = self.circles[k].eval_h(n, x)?.1;
            let den = self.circles[k - 1].eval_h(n, x)?.1;
            tele = tele * (num / den);
        }
        Ok(ZValue { direct, telescoping: tele.to_f64() })
    }

    /// `nu(C) = H_n(hi) - H_n(lo)` with both endpoints run through every stage
    /// as ordinary points.
    fn forward_mass(circle: &Circle<R>, n: usize, lo: GoldenInt, hi: GoldenInt) -> Result<R> {
        let h = |e: GoldenInt| -> Result<R> {
            if e == GoldenInt::ONE {
                Ok(R::one())
            } else {
                circle.eval_h(n, &R::from_golden(e)).map(|v| v.0)
            }
        };
        Ok(h(hi)? - h(lo)?)
    }

    /// `nu_eps(C) / nu_0(C)` at depth `N_t`: the conditional average of `z_t`
    /// over `C = [lo, hi)`.
    pub fn cylinder_average(&self, t: usize, lo: GoldenInt, hi: GoldenInt) -> Result<R> {
        let n = self.depth(t)?;
        Ok(Self::forward_mass(self.full(), n, lo, hi)? / Self::forward_mass(&self.circles[0], n, lo, hi)?)
    }

    /// `E[z_t]` under `nu_0`, summed over depth-`N_t` cylinders.
    pub fn expectation(&self, t: usize) -> Result<R> {
        let n = self.depth(t)?;
        let cyls = enumerate_cylinders(n);
        let parts: Result<Vec<R>> = cyls
            .par_iter()
            .map(|c| {
                let avg = self.cylinder_average(t, c.lo, c.hi)?;
                Ok(avg * Self::forward_mass(&self.circles[0], n, c.lo, c.hi)?)
            })
            .collect();
        Ok(parts?.into_iter().fold(R::zero(), |a, b| a + b))
    }

    /// Tail table `sup_t E[z_t 1{z_t > M}]` under `nu_0`, by the midpoint rule
    /// with `samples` points in each depth-`N_t` cylinder.
    pub fn ui_diagnostic(&self, t_max: usize, m_grid: &[f64], samples: usize) -> Result<UiDiagnostic> {
        if samples == 0 {
            return Err(Error::InvalidArgument("need at least one sample per cylinder".into()));
        }
        let mut per_t: Vec<Vec<(f64, f64)>> = Vec::new();
        for t in 1..=t_max {
            let n = self.depth(t)?;
            let cyls = enumerate_cylinders(n);
            let cells: Result<Vec<Vec<(f64, f64)>>> = cyls
                .par_iter()
                .map(|c| {
                    let lo = c.lo.to_f64();
                    let h = (c.hi - c.lo).to_f64() / samples as f64;
                    (0..samples)
                        .map(|i| {
                            let x = R::from_f64(lo + (i as f64 + 0.5) * h);
                            let de = self.full().eval_h(n, &x)?.1.to_f64();
                            let d0 = self.circles[0].eval_h(n, &x)?.1.to_f64();
                            Ok((de / d0, de * h))
                        })
                        .collect()
                })
                .collect();
            let mut flat: Vec<(f64, f64)> = cells?.into_iter().flatten().collect();
            let total: f64 = flat.iter().map(|(_, w)| w).sum();
            for cell in &mut flat {
                cell.1 /= total;
            }
            per_t.push(flat);
        }
        let mut rows = Vec::new();
        for &m in m_grid {
            let tails: Vec<f64> =
                per_t.iter().map(|cells| cells.iter().filter(|(z, _)| *z > m).fold(0.0, |acc, (_, w)| acc + w)).collect();
            let sup = tails.iter().cloned().fold(0.0, f64::max);
            rows.push(TailRow { m, tails, sup });
        }
        let mut sorted: Vec<&TailRow> = rows.iter().collect();
        sorted.sort_by(|a, b| a.m.total_cmp(&b.m));
        let monotone =
            sorted.windows(2).all(|w| w[0].tails.iter().zip(&w[1].tails).all(|(a, b)| b <= a));
        Ok(UiDiagnostic { rows, monotone })
    }
}

/// `mu+([0, x])` at depth `n`: masses of the depth-`n` cylinders left of `x`,
/// plus the containing cylinder's mass in proportion to the position of `x`.
pub fn mu_plus_cdf<R: Real>(spec: &MeasureSpec, n: usize, x: &R) -> Result<R> {
    if *x < R::zero() || *x > R::one() {
        return Err(Error::OutOfRange(format!("{x:?} outside [0,1]")));
    }
    if n == 0 {
        return Err(Error::InvalidArgument("depth must be at least 1".into()));
    }
    if *x == R::one() {
        return Ok(R::one());
    }
    let mass = |w: &[u8]| R::from_field(&cylinder_mass(spec, &Word::new(w.to_vec()).expect("admissible"), 0));
    let mut acc = R::zero();
    let first = if *x < R::from_golden(GoldenInt::inv_phi_pow(2)) {
        1
    } else if *x < R::from_golden(GoldenInt::inv_phi_pow(1)) {
        3
    } else {
        2
    };
    for s in crate::symbolic::SYMBOLS_IN_ORDER {
        if s == first {
            break;
        }
        acc = acc + mass(&[s]);
    }
    let (mut lo, mut hi) = partition_interval(first);
    let mut word = vec![first];
    while word.len() < n {
        let last = *word.last().expect("nonempty");
        if last == 3 {
            word.push(2);
            continue;
        }
        let mid = split_point(lo, hi);
        if *x < R::from_golden(mid) {
            word.push(1);
            hi = mid;
        } else {
            let mut left = word.clone();
            left.push(1);
            acc = acc + mass(&left);
            word.push(3);
            lo = mid;
        }
    }
    let frac = (x.clone() - R::from_golden(lo)) / R::from_golden(hi - lo);
    Ok(acc + mass(&word) * frac)
}

/// Exact `mu+([0, e])` for a cylinder endpoint.
pub fn mu_plus_cdf_exact(spec: &MeasureSpec, n: usize, e: GoldenInt) -> Result<FieldElement> {
    mu_plus_cdf::<FieldElement>(spec, n, &e.to_field())
}
