//! Warping profiles `ϑ(r)` of the ambient metric `dr² + ϑ²(r)σ`.
//!
//! Closed-form families are evaluated directly. Families given only through
//! `ϑ′ = f(ϑ)` (de Sitter–Schwarzschild, Reissner–Nordström) are realized by
//! integrating `dr/dϑ = 1/f(ϑ)` on a logarithmic ϑ-grid; evaluation inverts
//! that table with a Hermite guess polished by Newton steps, and all
//! derivatives come from the closed form of `f`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::{lit, to_f64, Real};

const GL5_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683_1,
    0.0,
    0.538_469_310_105_683_1,
    0.906_179_845_938_664,
];
const GL5_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_1,
    0.478_628_670_499_366_5,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_5,
    0.236_926_885_056_189_1,
];

/// Step of the logarithmic ϑ-grid used for implicit families.
const IMPLICIT_LOG_STEP: f64 = 1.0 / 1024.0;
/// Radial step of the oscillator integration table.
const OSCILLATOR_STEP: f64 = 1.0 / 512.0;
const MAX_TABLE_NODES: usize = 4_000_000;

#[derive(Debug, Error)]
pub enum ProfileError {
    #[error("empty radial domain: {0}")]
    DomainEmpty(String),
    #[error("radicand is not positive at theta = {theta} (largest root {root:?})")]
    RadicandNegative { theta: f64, root: Option<f64> },
    #[error("tabulated profile is not strictly monotone at row {row}")]
    NonMonotone { row: usize },
    #[error("invalid profile parameter: {0}")]
    InvalidParameter(String),
    #[error("value {value} outside theta range [{lo}, {hi}]")]
    OutOfRange { value: f64, lo: f64, hi: f64 },
    #[error("tabulated profile: {0}")]
    Table(String),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Profile family together with its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum Family {
    Euclidean,
    Hyperbolic { k: f64 },
    DsSchwarzschild { kappa: f64, m: f64, n: u32 },
    ReissnerNordstrom { m: f64, q: f64, n: u32 },
    Oscillator { a: f64, omega: f64 },
    Tabulated { path: PathBuf },
}

impl Family {
    pub fn name(&self) -> &'static str {
        match self {
            Family::Euclidean => "euclidean",
            Family::Hyperbolic { .. } => "hyperbolic",
            Family::DsSchwarzschild { .. } => "ds_schwarzschild",
            Family::ReissnerNordstrom { .. } => "reissner_nordstrom",
            Family::Oscillator { .. } => "oscillator",
            Family::Tabulated { .. } => "tabulated",
        }
    }
}

/// Everything needed to construct a [`WarpingProfile`].
///
/// `r0`/`r_max` left as `None` fall back to per-family defaults (the table
/// range for tabulated input). `theta0` anchors implicit families,
/// `ϑ(r0) = theta0`; when absent it is `horizon_margin` times the largest
/// root of the radicand, or `r0` when the radicand has no positive root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileSpec {
    pub family: Family,
    pub r0: Option<f64>,
    pub r_max: Option<f64>,
    pub theta0: Option<f64>,
    pub horizon_margin: f64,
    /// Initial slope `ϑ′(r0)` of the oscillator family.
    pub slope0: f64,
}

impl ProfileSpec {
    pub fn new(family: Family) -> Self {
        Self {
            family,
            r0: None,
            r_max: None,
            theta0: None,
            horizon_margin: 1.05,
            slope0: 1.0,
        }
    }

    pub fn euclidean() -> Self {
        Self::new(Family::Euclidean)
    }

    pub fn hyperbolic(k: f64) -> Self {
        Self::new(Family::Hyperbolic { k })
    }

    pub fn ds_schwarzschild(kappa: f64, m: f64, n: u32) -> Self {
        Self::new(Family::DsSchwarzschild { kappa, m, n })
    }

    pub fn reissner_nordstrom(m: f64, q: f64, n: u32) -> Self {
        Self::new(Family::ReissnerNordstrom { m, q, n })
    }

    pub fn oscillator(a: f64, omega: f64) -> Self {
        Self::new(Family::Oscillator { a, omega })
    }

    pub fn tabulated(path: impl Into<PathBuf>) -> Self {
        Self::new(Family::Tabulated { path: path.into() })
    }

    pub fn with_domain(mut self, r0: f64, r_max: f64) -> Self {
        self.r0 = Some(r0);
        self.r_max = Some(r_max);
        self
    }

    pub fn with_theta0(mut self, theta0: f64) -> Self {
        self.theta0 = Some(theta0);
        self
    }

    fn default_domain(&self) -> (f64, f64) {
        match self.family {
            Family::Euclidean => (0.5, 1.0e4),
            Family::Hyperbolic { k } => (0.5, 30.0 / k.sqrt().max(1.0)),
            Family::DsSchwarzschild { kappa, .. } if kappa > 0.0 => {
                (0.5, 30.0 / kappa.sqrt().max(1.0))
            }
            Family::DsSchwarzschild { .. } | Family::ReissnerNordstrom { .. } => (0.5, 1.0e4),
            Family::Oscillator { .. } => (0.5, 30.0),
            Family::Tabulated { .. } => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    /// Radial domain after applying defaults.
    pub fn domain(&self) -> (f64, f64) {
        let (d0, d1) = self.default_domain();
        (self.r0.unwrap_or(d0), self.r_max.unwrap_or(d1))
    }
}

/// `(ϑ, ϑ′, ϑ″, ϑ‴)` at one radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WarpJet<T> {
    pub theta: T,
    pub d1: T,
    pub d2: T,
    pub d3: T,
}

/// Radicand `f²(ϑ)` of the implicit families `ϑ′ = f(ϑ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum Radicand {
    Schwarzschild { kappa: f64, m: f64, n: u32 },
    ReissnerNordstrom { m: f64, q: f64, n: u32 },
}

impl Radicand {
    fn value<T: Real>(&self, th: T) -> T {
        match *self {
            Radicand::Schwarzschild { kappa, m, n } => {
                T::one() + lit::<T>(kappa) * th * th - lit::<T>(m) * th.powi(1 - n as i32)
            }
            Radicand::ReissnerNordstrom { m, q, n } => {
                T::one() - lit::<T>(m) * th.powi(1 - n as i32)
                    + lit::<T>(q * q) * th.powi(2 - 2 * n as i32)
            }
        }
    }

    fn d1<T: Real>(&self, th: T) -> T {
        match *self {
            Radicand::Schwarzschild { kappa, m, n } => {
                lit::<T>(2.0 * kappa) * th + lit::<T>(m * (n as f64 - 1.0)) * th.powi(-(n as i32))
            }
            Radicand::ReissnerNordstrom { m, q, n } => {
                let n1 = n as f64 - 1.0;
                lit::<T>(m * n1) * th.powi(-(n as i32))
                    - lit::<T>(2.0 * n1 * q * q) * th.powi(1 - 2 * n as i32)
            }
        }
    }

    fn d2<T: Real>(&self, th: T) -> T {
        match *self {
            Radicand::Schwarzschild { kappa, m, n } => {
                let nf = n as f64;
                lit::<T>(2.0 * kappa) - lit::<T>(m * nf * (nf - 1.0)) * th.powi(-(n as i32) - 1)
            }
            Radicand::ReissnerNordstrom { m, q, n } => {
                let nf = n as f64;
                -lit::<T>(m * nf * (nf - 1.0)) * th.powi(-(n as i32) - 1)
                    + lit::<T>(2.0 * (nf - 1.0) * (2.0 * nf - 1.0) * q * q) * th.powi(-2 * n as i32)
            }
        }
    }

    /// θ̄ as a function of ϑ with the cancelling terms removed analytically.
    fn theta_bar<T: Real>(&self, th: T) -> T {
        match *self {
            Radicand::Schwarzschild { m, n, .. } => {
                lit::<T>(m * (n as f64 + 1.0) / 2.0) * th.powi(-(n as i32) - 1)
            }
            Radicand::ReissnerNordstrom { m, q, n } => {
                lit::<T>(m * (n as f64 + 1.0) / 2.0) * th.powi(-(n as i32) - 1)
                    - lit::<T>(n as f64 * q * q) * th.powi(-2 * n as i32)
            }
        }
    }

    /// dθ̄/dϑ.
    fn theta_bar_dtheta<T: Real>(&self, th: T) -> T {
        match *self {
            Radicand::Schwarzschild { m, n, .. } => {
                let np = n as f64 + 1.0;
                -lit::<T>(m * np * np / 2.0) * th.powi(-(n as i32) - 2)
            }
            Radicand::ReissnerNordstrom { m, q, n } => {
                let nf = n as f64;
                let np = nf + 1.0;
                -lit::<T>(m * np * np / 2.0) * th.powi(-(n as i32) - 2)
                    + lit::<T>(2.0 * nf * nf * q * q) * th.powi(-2 * n as i32 - 1)
            }
        }
    }

    /// Largest positive root of the radicand, if any.
    fn largest_root(&self) -> Option<f64> {
        match *self {
            Radicand::Schwarzschild { m, .. } => {
                if m <= 0.0 {
                    return None;
                }
                // f² is increasing in ϑ; bracket and bisect.
                let mut lo = 1e-12_f64;
                while self.value(lo) > 0.0 {
                    lo *= 0.5;
                    if lo < 1e-200 {
                        return None;
                    }
                }
                let mut hi = 1.0_f64;
                while self.value(hi) <= 0.0 {
                    hi *= 2.0;
                }
                Some(bisect(|x| self.value(x), lo, hi))
            }
            Radicand::ReissnerNordstrom { m, q, n } => {
                // x = ϑ^{n-1}: x² − m x + q² = 0.
                let disc = m * m - 4.0 * q * q;
                if disc < 0.0 {
                    return None;
                }
                let x = 0.5 * (m + disc.sqrt());
                if x <= 0.0 {
                    return None;
                }
                Some(x.powf(1.0 / (n as f64 - 1.0)))
            }
        }
    }
}

fn bisect(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let flo = f(lo);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        if (f(mid) > 0.0) == (flo > 0.0) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

#[derive(Debug, Clone)]
struct ImplicitTable<T> {
    radicand: Radicand,
    theta: Vec<T>,
    r: Vec<T>,
}

impl<T: Real> ImplicitTable<T> {
    fn slope(&self, th: T) -> T {
        self.radicand.value(th).sqrt()
    }

    /// `∫_a^b dϑ / f(ϑ)` by five-point Gauss–Legendre.
    fn radial_length(&self, a: T, b: T) -> T {
        let half = (b - a) * lit(0.5);
        let mid = (b + a) * lit(0.5);
        let mut acc = T::zero();
        for (x, w) in GL5_NODES.iter().zip(GL5_WEIGHTS.iter()) {
            acc = acc + lit::<T>(*w) / self.slope(mid + half * lit(*x));
        }
        acc * half
    }

    fn build(radicand: Radicand, r0: T, r_max: T, theta0: T) -> Result<Self, ProfileError> {
        let step: T = lit(IMPLICIT_LOG_STEP);
        let mut theta = vec![theta0];
        let mut r = vec![r0];
        let mut tbl = Self {
            radicand,
            theta: Vec::new(),
            r: Vec::new(),
        };
        let mut th = theta0;
        let mut rr = r0;
        // One extra cell past r_max so evaluation at the boundary interpolates.
        let mut past = 0;
        while past < 2 {
            let next = th * step.exp();
            let len = tbl.radial_length(th, next);
            if !len.is_finite() || len <= T::zero() {
                return Err(ProfileError::RadicandNegative {
                    theta: to_f64(next),
                    root: radicand.largest_root(),
                });
            }
            rr = rr + len;
            th = next;
            theta.push(th);
            r.push(rr);
            if rr > r_max {
                past += 1;
            }
            if theta.len() > MAX_TABLE_NODES || !th.is_finite() {
                return Err(ProfileError::DomainEmpty(
                    "implicit profile table exceeded its size limit before reaching r_max".into(),
                ));
            }
        }
        tbl.theta = theta;
        tbl.r = r;
        Ok(tbl)
    }

    fn jet_at_theta(&self, th: T) -> WarpJet<T> {
        let f = self.slope(th);
        let half: T = lit(0.5);
        WarpJet {
            theta: th,
            d1: f,
            d2: self.radicand.d1(th) * half,
            d3: f * self.radicand.d2(th) * half,
        }
    }

    fn theta_at(&self, r: T) -> T {
        let len = self.r.len();
        let i = self
            .r
            .partition_point(|x| *x <= r)
            .saturating_sub(1)
            .min(len - 2);
        let (r_a, r_b) = (self.r[i], self.r[i + 1]);
        let (th_a, th_b) = (self.theta[i], self.theta[i + 1]);
        let h = r_b - r_a;
        let s = (r - r_a) / h;
        let (f_a, f_b) = (self.slope(th_a), self.slope(th_b));
        let mut th = hermite3(s, h, th_a, f_a, th_b, f_b);
        let tol = T::epsilon() * lit(4.0);
        for _ in 0..8 {
            let f = self.slope(th);
            let residual = r_a + self.radial_length(th_a, th) - r;
            let delta = residual * f;
            th = th - delta;
            if delta.abs() <= tol * th.abs() {
                break;
            }
        }
        th
    }

    fn r_at(&self, th: T) -> T {
        let len = self.theta.len();
        let i = self
            .theta
            .partition_point(|x| *x <= th)
            .saturating_sub(1)
            .min(len - 2);
        self.r[i] + self.radial_length(self.theta[i], th)
    }
}

#[derive(Debug, Clone)]
struct OscillatorTable<T> {
    a: T,
    omega: T,
    r0: T,
    step: T,
    theta: Vec<T>,
    slope: Vec<T>,
}

impl<T: Real> OscillatorTable<T> {
    fn accel(&self, r: T, th: T) -> T {
        self.a * lit(0.5) * (T::one() + (self.omega * r).sin()) * th
    }

    fn rk4(&self, r: T, th: T, d: T, h: T) -> (T, T) {
        let half: T = lit(0.5);
        let (k1x, k1v) = (d, self.accel(r, th));
        let (k2x, k2v) = (
            d + half * h * k1v,
            self.accel(r + half * h, th + half * h * k1x),
        );
        let (k3x, k3v) = (
            d + half * h * k2v,
            self.accel(r + half * h, th + half * h * k2x),
        );
        let (k4x, k4v) = (d + h * k3v, self.accel(r + h, th + h * k3x));
        let sixth: T = lit(1.0 / 6.0);
        let two: T = lit(2.0);
        (
            th + h * sixth * (k1x + two * k2x + two * k3x + k4x),
            d + h * sixth * (k1v + two * k2v + two * k3v + k4v),
        )
    }

    fn build(a: f64, omega: f64, r0: T, r_max: T, slope0: T) -> Self {
        let step: T = lit(OSCILLATOR_STEP);
        let mut tbl = Self {
            a: lit(a),
            omega: lit(omega),
            r0,
            step,
            theta: vec![T::one()],
            slope: vec![slope0],
        };
        let mut r = r0;
        let mut th = T::one();
        let mut d = slope0;
        while r <= r_max + step {
            let (t2, d2) = tbl.rk4(r, th, d, step);
            th = t2;
            d = d2;
            r = r + step;
            tbl.theta.push(th);
            tbl.slope.push(d);
        }
        tbl
    }

    fn jet(&self, r: T) -> WarpJet<T> {
        let last = self.theta.len() - 1;
        let idx = ((r - self.r0) / self.step).floor();
        let i = if idx < T::zero() {
            0
        } else {
            idx.to_usize().unwrap_or(last).min(last)
        };
        let r_i = self.r0 + self.step * lit(i as f64);
        let mut delta = r - r_i;
        let subs = (delta.abs() / self.step).ceil().max(T::one());
        let nsub = subs.to_usize().unwrap_or(1);
        let h = delta / subs;
        let (mut th, mut d, mut rr) = (self.theta[i], self.slope[i], r_i);
        if delta != T::zero() {
            for _ in 0..nsub {
                let (t2, d2) = self.rk4(rr, th, d, h);
                th = t2;
                d = d2;
                rr = rr + h;
            }
        }
        delta = self.a * lit(0.5);
        let s = (self.omega * r).sin();
        let c = (self.omega * r).cos();
        WarpJet {
            theta: th,
            d1: d,
            d2: delta * (T::one() + s) * th,
            d3: delta * (self.omega * c * th + (T::one() + s) * d),
        }
    }
}

#[derive(Debug, Clone)]
struct Tabulated<T> {
    r: Vec<T>,
    rows: Vec<WarpJet<T>>,
}

impl<T: Real> Tabulated<T> {
    fn jet(&self, r: T) -> WarpJet<T> {
        let len = self.r.len();
        let i = self
            .r
            .partition_point(|x| *x <= r)
            .saturating_sub(1)
            .min(len - 2);
        let h = self.r[i + 1] - self.r[i];
        let s = (r - self.r[i]) / h;
        let (a, b) = (self.rows[i], self.rows[i + 1]);
        WarpJet {
            theta: hermite5(s, h, a.theta, a.d1, a.d2, b.theta, b.d1, b.d2),
            d1: hermite3(s, h, a.d1, a.d2, b.d1, b.d2),
            d2: hermite3(s, h, a.d2, a.d3, b.d2, b.d3),
            d3: a.d3 + (b.d3 - a.d3) * s,
        }
    }
}

fn hermite3<T: Real>(s: T, h: T, y0: T, d0: T, y1: T, d1: T) -> T {
    let s2 = s * s;
    let s3 = s2 * s;
    let two: T = lit(2.0);
    let three: T = lit(3.0);
    (two * s3 - three * s2 + T::one()) * y0
        + (s3 - two * s2 + s) * h * d0
        + (three * s2 - two * s3) * y1
        + (s3 - s2) * h * d1
}

#[allow(clippy::too_many_arguments)]
fn hermite5<T: Real>(s: T, h: T, y0: T, d0: T, c0: T, y1: T, d1: T, c1: T) -> T {
    let s2 = s * s;
    let s3 = s2 * s;
    let s4 = s3 * s;
    let s5 = s4 * s;
    let l = |x: f64| lit::<T>(x);
    let h0 = T::one() - l(10.0) * s3 + l(15.0) * s4 - l(6.0) * s5;
    let h1 = s - l(6.0) * s3 + l(8.0) * s4 - l(3.0) * s5;
    let h2 = (s2 - l(3.0) * s3 + l(3.0) * s4 - s5) * l(0.5);
    let h3 = (s3 - l(2.0) * s4 + s5) * l(0.5);
    let h4 = -l(4.0) * s3 + l(7.0) * s4 - l(3.0) * s5;
    let h5 = l(10.0) * s3 - l(15.0) * s4 + l(6.0) * s5;
    y0 * h0 + h * d0 * h1 + h * h * c0 * h2 + h * h * c1 * h3 + h * d1 * h4 + y1 * h5
}

#[derive(Debug, Clone)]
enum Repr<T> {
    Euclidean,
    Hyperbolic { sqrt_k: T },
    Implicit(ImplicitTable<T>),
    Oscillator(OscillatorTable<T>),
    Tabulated(Tabulated<T>),
}

/// An evaluable warping function on `[r0, r_max]`.
#[derive(Debug, Clone)]
pub struct WarpingProfile<T> {
    spec: ProfileSpec,
    r0: T,
    r_max: T,
    theta_lo: T,
    theta_hi: T,
    repr: Repr<T>,
}

impl<T: Real> WarpingProfile<T> {
    pub fn spec(&self) -> &ProfileSpec {
        &self.spec
    }

    pub fn domain(&self) -> (T, T) {
        (self.r0, self.r_max)
    }

    pub fn theta_range(&self) -> (T, T) {
        (self.theta_lo, self.theta_hi)
    }

    pub fn contains(&self, r: T) -> bool {
        r >= self.r0 && r <= self.r_max
    }

    /// `(ϑ, ϑ′, ϑ″, ϑ‴)` at `r`. Evaluation slightly outside the domain
    /// extrapolates; callers are responsible for domain checks.
    pub fn eval(&self, r: T) -> WarpJet<T> {
        match &self.repr {
            Repr::Euclidean => WarpJet {
                theta: r,
                d1: T::one(),
                d2: T::zero(),
                d3: T::zero(),
            },
            Repr::Hyperbolic { sqrt_k } => {
                let x = *sqrt_k * r;
                let (sh, ch) = (x.sinh(), x.cosh());
                WarpJet {
                    theta: sh / *sqrt_k,
                    d1: ch,
                    d2: *sqrt_k * sh,
                    d3: *sqrt_k * *sqrt_k * ch,
                }
            }
            Repr::Implicit(tbl) => tbl.jet_at_theta(tbl.theta_at(r)),
            Repr::Oscillator(tbl) => tbl.jet(r),
            Repr::Tabulated(tbl) => tbl.jet(r),
        }
    }

    pub fn theta(&self, r: T) -> T {
        match &self.repr {
            Repr::Euclidean => r,
            Repr::Hyperbolic { sqrt_k } => (*sqrt_k * r).sinh() / *sqrt_k,
            Repr::Implicit(tbl) => tbl.theta_at(r),
            _ => self.eval(r).theta,
        }
    }

    /// Radius `r` with `ϑ(r) = value`.
    pub fn invert_theta(&self, value: T) -> Result<T, ProfileError> {
        let slack = T::one() + T::epsilon() * lit(16.0);
        if !(value >= self.theta_lo / slack && value <= self.theta_hi * slack) {
            return Err(ProfileError::OutOfRange {
                value: to_f64(value),
                lo: to_f64(self.theta_lo),
                hi: to_f64(self.theta_hi),
            });
        }
        Ok(self.invert_unchecked(value))
    }

    fn invert_unchecked(&self, value: T) -> T {
        match &self.repr {
            Repr::Euclidean => value,
            Repr::Hyperbolic { sqrt_k } => (*sqrt_k * value).asinh() / *sqrt_k,
            Repr::Implicit(tbl) => tbl.r_at(value),
            Repr::Oscillator(_) | Repr::Tabulated(_) => self.newton_invert(value),
        }
    }

    /// Bracketed Newton iteration on `ϑ(r) = value` with bisection fallback.
    fn newton_invert(&self, value: T) -> T {
        let (mut lo, mut hi) = (self.r0, self.r_max);
        let mut r = lo + (hi - lo) * lit(0.5);
        let tol = T::epsilon() * lit(8.0);
        for _ in 0..200 {
            let jet = self.eval(r);
            let res = jet.theta - value;
            if res > T::zero() {
                hi = r;
            } else {
                lo = r;
            }
            let mut next = r - res / jet.d1;
            if !(next > lo && next < hi) || !next.is_finite() {
                next = lo + (hi - lo) * lit(0.5);
            }
            if (next - r).abs() <= tol * (T::one() + r.abs()) {
                return next;
            }
            r = next;
        }
        r
    }

    /// `θ̄ = ϑ″/ϑ + (1 − ϑ′²)/ϑ²` and its radial derivative.
    pub fn theta_bar(&self, r: T) -> (T, T) {
        match &self.repr {
            Repr::Euclidean | Repr::Hyperbolic { .. } => (T::zero(), T::zero()),
            Repr::Implicit(tbl) => {
                let jet = tbl.jet_at_theta(tbl.theta_at(r));
                (
                    tbl.radicand.theta_bar(jet.theta),
                    tbl.radicand.theta_bar_dtheta(jet.theta) * jet.d1,
                )
            }
            _ => theta_bar_from_jet(&self.eval(r)),
        }
    }
}

/// θ̄ and θ̄′ from a derivative jet by direct differentiation.
pub fn theta_bar_from_jet<T: Real>(j: &WarpJet<T>) -> (T, T) {
    let one = T::one();
    let th2 = j.theta * j.theta;
    let tb = j.d2 / j.theta + (one - j.d1 * j.d1) / th2;
    let tbp = j.d3 / j.theta
        - lit::<T>(3.0) * j.d1 * j.d2 / th2
        - lit::<T>(2.0) * j.d1 * (one - j.d1 * j.d1) / (th2 * j.theta);
    (tb, tbp)
}

fn check_n(n: u32) -> Result<(), ProfileError> {
    if n < 2 {
        return Err(ProfileError::InvalidParameter(format!(
            "dimension n = {n} must be >= 2"
        )));
    }
    Ok(())
}

/// Builds a profile from its specification.
pub fn build_profile<T: Real>(spec: &ProfileSpec) -> Result<WarpingProfile<T>, ProfileError> {
    let (r0, r_max) = spec.domain();
    if let Family::Tabulated { path } = &spec.family {
        return build_tabulated(spec, path, r0, r_max);
    }
    if !(r0 < r_max) || !r0.is_finite() || !r_max.is_finite() {
        return Err(ProfileError::DomainEmpty(format!(
            "r0 = {r0} must be below r_max = {r_max}"
        )));
    }
    let (r0t, rmt): (T, T) = (lit(r0), lit(r_max));
    let repr = match spec.family {
        Family::Euclidean => {
            if r0 <= 0.0 {
                return Err(ProfileError::InvalidParameter(
                    "euclidean profile needs r0 > 0".into(),
                ));
            }
            Repr::Euclidean
        }
        Family::Hyperbolic { k } => {
            if !(k > 0.0) {
                return Err(ProfileError::InvalidParameter(format!(
                    "curvature scale k = {k} must be > 0"
                )));
            }
            if r0 <= 0.0 {
                return Err(ProfileError::InvalidParameter(
                    "hyperbolic profile needs r0 > 0".into(),
                ));
            }
            Repr::Hyperbolic {
                sqrt_k: lit::<T>(k).sqrt(),
            }
        }
        Family::DsSchwarzschild { kappa, m, n } => {
            check_n(n)?;
            if kappa < 0.0 || m < 0.0 {
                return Err(ProfileError::InvalidParameter(
                    "kappa and m must be >= 0".into(),
                ));
            }
            Repr::Implicit(build_implicit(
                spec,
                Radicand::Schwarzschild { kappa, m, n },
                r0t,
                rmt,
            )?)
        }
        Family::ReissnerNordstrom { m, q, n } => {
            check_n(n)?;
            if !(m > 0.0) {
                return Err(ProfileError::InvalidParameter("m must be > 0".into()));
            }
            Repr::Implicit(build_implicit(
                spec,
                Radicand::ReissnerNordstrom { m, q, n },
                r0t,
                rmt,
            )?)
        }
        Family::Oscillator { a, omega } => {
            if a < 0.0 || !(omega > 0.0) || !(spec.slope0 > 0.0) {
                return Err(ProfileError::InvalidParameter(
                    "oscillator needs a >= 0, omega > 0 and a positive initial slope".into(),
                ));
            }
            Repr::Oscillator(OscillatorTable::build(a, omega, r0t, rmt, lit(spec.slope0)))
        }
        Family::Tabulated { .. } => unreachable!(),
    };
    Ok(finish(spec.clone(), r0t, rmt, repr))
}

fn finish<T: Real>(spec: ProfileSpec, r0: T, r_max: T, repr: Repr<T>) -> WarpingProfile<T> {
    let mut p = WarpingProfile {
        spec,
        r0,
        r_max,
        theta_lo: T::zero(),
        theta_hi: T::zero(),
        repr,
    };
    p.theta_lo = p.theta(r0);
    p.theta_hi = p.theta(r_max);
    p
}

fn build_implicit<T: Real>(
    spec: &ProfileSpec,
    radicand: Radicand,
    r0: T,
    r_max: T,
) -> Result<ImplicitTable<T>, ProfileError> {
    let root = radicand.largest_root();
    let theta0 = match (spec.theta0, root) {
        (Some(t), _) => t,
        (None, Some(root)) => spec.horizon_margin * root,
        (None, None) => to_f64(r0),
    };
    if !(theta0 > 0.0) {
        return Err(ProfileError::DomainEmpty(format!(
            "theta(r0) = {theta0} must be positive"
        )));
    }
    if !(radicand.value(theta0) > 0.0) || root.is_some_and(|x| theta0 <= x) {
        return Err(ProfileError::RadicandNegative {
            theta: theta0,
            root,
        });
    }
    ImplicitTable::build(radicand, r0, r_max, lit(theta0))
}

/// Reads a `r,theta,theta1,theta2,theta3` table.
pub fn read_profile_table(path: &Path) -> Result<Vec<(f64, [f64; 4])>, ProfileError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header != ["r", "theta", "theta1", "theta2", "theta3"] {
        return Err(ProfileError::Table(format!(
            "expected header r,theta,theta1,theta2,theta3, found {}",
            header.join(",")
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let mut vals = [0.0; 5];
        for (k, v) in vals.iter_mut().enumerate() {
            let field = rec
                .get(k)
                .ok_or_else(|| ProfileError::Table(format!("row {} is short", i + 1)))?;
            *v = field.parse().map_err(|_| {
                ProfileError::Table(format!("row {}: cannot parse {field:?}", i + 1))
            })?;
        }
        rows.push((vals[0], [vals[1], vals[2], vals[3], vals[4]]));
    }
    Ok(rows)
}

fn build_tabulated<T: Real>(
    spec: &ProfileSpec,
    path: &Path,
    r0: f64,
    r_max: f64,
) -> Result<WarpingProfile<T>, ProfileError> {
    let rows = read_profile_table(path)?;
    tabulated_from_rows(spec, &rows, r0, r_max)
}

pub(crate) fn tabulated_from_rows<T: Real>(
    spec: &ProfileSpec,
    rows: &[(f64, [f64; 4])],
    r0: f64,
    r_max: f64,
) -> Result<WarpingProfile<T>, ProfileError> {
    if rows.len() < 2 {
        return Err(ProfileError::Table("need at least two rows".into()));
    }
    for (i, w) in rows.windows(2).enumerate() {
        let (a, b) = (&w[0], &w[1]);
        if !(b.0 > a.0) || !(b.1[0] > a.1[0]) {
            return Err(ProfileError::NonMonotone { row: i + 2 });
        }
        if !(b.1[1] > 0.0) {
            return Err(ProfileError::NonMonotone { row: i + 2 });
        }
    }
    if rows.iter().any(|(_, v)| !(v[0] > 0.0) || v[1] < 0.0) {
        return Err(ProfileError::Table(
            "theta must be positive with non-negative slope".into(),
        ));
    }
    let lo = r0.max(rows[0].0);
    let hi = r_max.min(rows[rows.len() - 1].0);
    if !(lo < hi) {
        return Err(ProfileError::DomainEmpty(format!(
            "requested [{r0}, {r_max}] misses the table"
        )));
    }
    let tbl = Tabulated {
        r: rows.iter().map(|(r, _)| lit(*r)).collect(),
        rows: rows
            .iter()
            .map(|(_, v)| WarpJet {
                theta: lit(v[0]),
                d1: lit(v[1]),
                d2: lit(v[2]),
                d3: lit(v[3]),
            })
            .collect(),
    };
    Ok(finish(spec.clone(), lit(lo), lit(hi), Repr::Tabulated(tbl)))
}

// ---------------------------------------------------------------------------
// Assumption checks
// ---------------------------------------------------------------------------

/// Sampling controls for [`check_assumptions`].
#[derive(Debug, Clone, PartialEq)]
pub struct AssumptionOptions {
    pub samples: usize,
    pub lambda_grid: Vec<f64>,
    /// A λ-weighted supremum above this counts as unbounded.
    pub cap: f64,
}

impl Default for AssumptionOptions {
    fn default() -> Self {
        Self {
            samples: 2048,
            lambda_grid: (0..=23).map(|i| 2.25 + 0.25 * i as f64).collect(),
            cap: 1.0e4,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum B2Division {
    /// ϑ″ > 0 at every sample.
    None,
    /// ϑ″ = ϑ‴ = 0 at some sample; the ratio is taken as 0 there.
    Vacuous,
    /// ϑ″ = 0 but ϑ‴ ≠ 0 at some sample; the constant is +∞.
    Infinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionA {
    pub pass: bool,
    pub first_violation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LambdaCheck {
    pub lambda: f64,
    pub sup_theta_bar: f64,
    pub sup_theta_bar_prime: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionC {
    /// Largest λ > 2 of the grid that passes, if any.
    pub lambda: Option<f64>,
    pub sup_log_derivative: f64,
    pub sup_abs_theta_bar: f64,
    pub per_lambda: Vec<LambdaCheck>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssumptionReport {
    pub assumption_a: AssumptionA,
    pub const_b1: f64,
    /// `None` when the supremum is +∞ (see `b2_division`).
    pub const_b2: Option<f64>,
    pub b2_division: B2Division,
    pub assumption_c: AssumptionC,
    pub sample_grid: Vec<f64>,
}

/// Log-spaced offsets from `r0`, excluding `r0` itself.
pub fn assumption_samples(r0: f64, r_max: f64, count: usize) -> Vec<f64> {
    let span = r_max - r0;
    let lo = (span * 1e-6).ln();
    let hi = span.ln();
    let count = count.max(2);
    (0..count)
        .map(|i| r0 + (lo + (hi - lo) * i as f64 / (count - 1) as f64).exp())
        .map(|r| r.min(r_max))
        .collect()
}

/// Sampled verification of the profile hypotheses A, B and C.
pub fn check_assumptions<T: Real>(
    profile: &WarpingProfile<T>,
    opts: &AssumptionOptions,
) -> AssumptionReport {
    let (r0, r_max) = profile.domain();
    let grid = assumption_samples(to_f64(r0), to_f64(r_max), opts.samples);
    let jets: Vec<[f64; 4]> = grid
        .iter()
        .map(|&r| {
            let j = profile.eval(lit(r));
            [to_f64(j.theta), to_f64(j.d1), to_f64(j.d2), to_f64(j.d3)]
        })
        .collect();
    let bars: Vec<(f64, f64)> = grid
        .iter()
        .map(|&r| {
            let (a, b) = profile.theta_bar(lit(r));
            (to_f64(a), to_f64(b))
        })
        .collect();

    let d2_scale = jets.iter().map(|j| j[2].abs()).fold(1.0_f64, f64::max);
    let tol = T::epsilon().to_f64().unwrap_or(1e-12).max(1e-12) * d2_scale;
    let first_violation = grid
        .iter()
        .zip(&jets)
        .find(|(_, j)| !(j[1] > 0.0) || j[2] < -tol || !(j[0] > 0.0))
        .map(|(r, _)| *r);

    let const_b1 = jets
        .iter()
        .map(|j| j[2] * j[0] / (j[1] * j[1]))
        .fold(0.0_f64, f64::max);

    let mut division = B2Division::None;
    let mut b2 = 0.0_f64;
    for j in &jets {
        if j[2] == 0.0 {
            if j[3] == 0.0 {
                if division == B2Division::None {
                    division = B2Division::Vacuous;
                }
            } else {
                division = B2Division::Infinite;
            }
        } else {
            b2 = b2.max((j[3] / j[1]).abs() * j[0] / j[2]);
        }
    }
    let const_b2 = (division != B2Division::Infinite).then_some(b2);

    let sup_log_derivative = jets.iter().map(|j| j[1] / j[0]).fold(0.0_f64, f64::max);
    let sup_abs_theta_bar = bars.iter().map(|b| b.0.abs()).fold(0.0_f64, f64::max);
    let per_lambda: Vec<LambdaCheck> = opts
        .lambda_grid
        .iter()
        .map(|&lambda| {
            let mut s2 = 0.0_f64;
            let mut s3 = 0.0_f64;
            for (j, b) in jets.iter().zip(&bars) {
                let (lt, ld) = (j[0].ln(), j[1].ln());
                s2 = s2.max((b.0.abs().ln() + lambda * lt - 2.0 * ld).exp());
                s3 = s3.max((b.1.abs().ln() + (1.0 + lambda) * lt - 3.0 * ld).exp());
            }
            let pass = lambda > 2.0
                && s2.is_finite()
                && s3.is_finite()
                && s2 <= opts.cap
                && s3 <= opts.cap;
            LambdaCheck {
                lambda,
                sup_theta_bar: s2,
                sup_theta_bar_prime: s3,
                pass,
            }
        })
        .collect();
    let lambda = if sup_log_derivative.is_finite() && sup_log_derivative <= opts.cap {
        per_lambda
            .iter()
            .filter(|c| c.pass)
            .map(|c| c.lambda)
            .reduce(f64::max)
    } else {
        None
    };

    AssumptionReport {
        assumption_a: AssumptionA {
            pass: first_violation.is_none(),
            first_violation,
        },
        const_b1,
        const_b2,
        b2_division: division,
        assumption_c: AssumptionC {
            lambda,
            sup_log_derivative,
            sup_abs_theta_bar,
            per_lambda,
        },
        sample_grid: grid,
    }
}
