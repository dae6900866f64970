//! Ambient curvature of the warped cylinder, coordinate slices, and the
//! spherical barrier solutions `Θ(t, r0) = ϑ⁻¹(ϑ(r0)·e^{t/n})`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::profiles::WarpingProfile;
use crate::scalar::{lit, to_f64, Real};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("barrier leaves the profile domain at t = {exit_time}")]
    BarrierExit { exit_time: f64 },
    #[error("radius {0} outside the profile domain")]
    OutOfDomain(f64),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

/// Sectional and Ricci curvatures in radial and tangential directions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AmbientCurvature<T> {
    pub k_rad: T,
    pub k_tan: T,
    pub ricci_rad: T,
    pub ricci_tan: T,
}

pub fn ambient_curvature<T: Real>(
    profile: &WarpingProfile<T>,
    r: T,
    n: usize,
) -> AmbientCurvature<T> {
    let j = profile.eval(r);
    let nf: T = lit(n as f64);
    let k_rad = -j.d2 / j.theta;
    let k_tan = (T::one() - j.d1 * j.d1) / (j.theta * j.theta);
    let (tb, _) = profile.theta_bar(r);
    AmbientCurvature {
        k_rad,
        k_tan,
        ricci_rad: nf * k_rad,
        ricci_tan: nf * k_rad + (nf - T::one()) * tb,
    }
}

/// Principal curvature `ϑ′/ϑ` and mean curvature `n·ϑ′/ϑ` of `{r = const}`.
pub fn slice_geometry<T: Real>(profile: &WarpingProfile<T>, r: T, n: usize) -> (T, T) {
    let j = profile.eval(r);
    let kappa = j.d1 / j.theta;
    (kappa, kappa * lit(n as f64))
}

/// Time at which the barrier started at `r0` reaches the end of the domain.
pub fn barrier_exit_time<T: Real>(profile: &WarpingProfile<T>, r0: T, n: usize) -> f64 {
    let (_, hi) = profile.theta_range();
    to_f64(lit::<T>(n as f64) * (hi / profile.theta(r0)).ln())
}

/// Radius of the round solution started from the slice `{r = r0}`.
pub fn barrier<T: Real>(
    profile: &WarpingProfile<T>,
    r0: T,
    t: T,
    n: usize,
) -> Result<T, GeometryError> {
    if !profile.contains(r0) {
        return Err(GeometryError::OutOfDomain(to_f64(r0)));
    }
    if t == T::zero() {
        return Ok(r0);
    }
    let target = profile.theta(r0) * (t / lit(n as f64)).exp();
    profile
        .invert_theta(target)
        .map_err(|_| GeometryError::BarrierExit {
            exit_time: barrier_exit_time(profile, r0, n),
        })
}

/// Ratio `ϑ′(Θ₂)/ϑ′(Θ₁)` of two round solutions `Θᵢ = ϑ⁻¹(cᵢe^{t/n})` and
/// the certified upper bound `exp((c₂−c₁)/c₁ · sup ϑ″ϑ/ϑ′²)`, the supremum
/// taken over `ϑ⁻¹(α e^{t/n})`, `α ∈ [c₁, c₂]`.
pub fn barrier_ratio_bound<T: Real>(
    profile: &WarpingProfile<T>,
    c1: T,
    c2: T,
    t: T,
    n: usize,
) -> Result<(T, T), GeometryError> {
    let (lo, _) = profile.theta_range();
    if !(c1 > lo && c2 > c1) {
        return Err(GeometryError::InvalidArgument(format!(
            "need theta(R0) < c1 < c2, got c1 = {c1}, c2 = {c2}"
        )));
    }
    let growth = (t / lit(n as f64)).exp();
    let radius = |c: T| {
        profile
            .invert_theta(c * growth)
            .map_err(|_| GeometryError::BarrierExit {
                exit_time: to_f64(lit::<T>(n as f64) * (profile.theta_range().1 / c).ln()),
            })
    };
    let r1 = radius(c1)?;
    let r2 = radius(c2)?;
    let ratio = profile.eval(r2).d1 / profile.eval(r1).d1;
    let samples = 64;
    let mut sup = T::zero();
    for i in 0..=samples {
        let alpha = c1 + (c2 - c1) * lit(i as f64 / samples as f64);
        let j = profile.eval(radius(alpha)?);
        sup = sup.max(j.d2 * j.theta / (j.d1 * j.d1));
    }
    Ok((ratio, ((c2 - c1) / c1 * sup).exp()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Integrability {
    Diverging,
    Converging,
    Inconclusive,
}

/// `∫₀^T ϑ′⁻²(Θ(t, R₀)) dt` and a verdict on the improper integral.
///
/// The verdict compares integrals over the dyadic windows `[T/2, T]`,
/// `[T/4, T/2]`, … : it is diverging when each of the last three window
/// ratios stays above 1/2.
pub fn rescaling_integrability<T: Real>(
    profile: &WarpingProfile<T>,
    n: usize,
    t_max: T,
) -> Result<(T, Integrability), GeometryError> {
    let (r0, _) = profile.domain();
    if t_max < T::zero() {
        return Err(GeometryError::InvalidArgument(
            "T_max must be non-negative".into(),
        ));
    }
    if t_max == T::zero() {
        return Ok((T::zero(), Integrability::Inconclusive));
    }
    let exit = barrier_exit_time(profile, r0, n);
    if to_f64(t_max) > exit {
        return Err(GeometryError::BarrierExit { exit_time: exit });
    }
    let theta0 = profile.theta(r0);
    let nf: T = lit(n as f64);
    let integrand = |t: T| {
        let target = (theta0 * (t / nf).exp()).min(profile.theta_range().1);
        let r = profile.invert_theta(target).unwrap_or(profile.domain().1);
        let d1 = profile.eval(r).d1;
        T::one() / (d1 * d1)
    };
    let tol: T = lit(1e-10);
    let total = adaptive_simpson(&integrand, T::zero(), t_max, tol);
    let two: T = lit(2.0);
    let windows: Vec<T> = (0..4)
        .map(|k| {
            let hi = t_max / two.powi(k);
            adaptive_simpson(&integrand, hi / two, hi, tol)
        })
        .collect();
    let ratios: Vec<T> = windows.windows(2).map(|w| w[0] / w[1]).collect();
    let verdict = if ratios.iter().any(|r| !r.is_finite()) {
        Integrability::Inconclusive
    } else if ratios.iter().all(|r| *r > lit(0.5)) {
        Integrability::Diverging
    } else {
        Integrability::Converging
    };
    Ok((total, verdict))
}

fn adaptive_simpson<T: Real>(f: &impl Fn(T) -> T, a: T, b: T, tol: T) -> T {
    let half: T = lit(0.5);
    let m = (a + b) * half;
    let (fa, fm, fb) = (f(a), f(m), f(b));
    let whole = (b - a) / lit(6.0) * (fa + lit::<T>(4.0) * fm + fb);
    simpson_step(
        f,
        a,
        b,
        fa,
        fm,
        fb,
        whole,
        tol * (T::one() + whole.abs()),
        48,
    )
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<T: Real>(
    f: &impl Fn(T) -> T,
    a: T,
    b: T,
    fa: T,
    fm: T,
    fb: T,
    whole: T,
    tol: T,
    depth: u32,
) -> T {
    let half: T = lit(0.5);
    let m = (a + b) * half;
    let (lm, rm) = ((a + m) * half, (m + b) * half);
    let (flm, frm) = (f(lm), f(rm));
    let six: T = lit(6.0);
    let four: T = lit(4.0);
    let left = (m - a) / six * (fa + four * flm + fm);
    let right = (b - m) / six * (fm + four * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= lit::<T>(15.0) * tol {
        return left + right + delta / lit(15.0);
    }
    simpson_step(f, a, m, fa, flm, fm, left, tol * half, depth - 1)
        + simpson_step(f, m, b, fm, frm, fb, right, tol * half, depth - 1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::{build_profile, ProfileSpec};
    use approx::assert_relative_eq;

    fn euc() -> WarpingProfile<f64> {
        build_profile(&ProfileSpec::euclidean()).unwrap()
    }
    fn hyp() -> WarpingProfile<f64> {
        build_profile(&ProfileSpec::hyperbolic(1.0)).unwrap()
    }

    #[test]
    fn constant_curvature_spaces() {
        for r in [0.7, 2.0, 9.0] {
            let c = ambient_curvature(&hyp(), r, 3);
            assert_relative_eq!(c.k_rad, -1.0, max_relative = 1e-14);
            assert_relative_eq!(c.k_tan, -1.0, max_relative = 1e-13);
            assert_relative_eq!(c.ricci_rad, -3.0, max_relative = 1e-14);
            assert_relative_eq!(c.ricci_tan, -3.0, max_relative = 1e-14);
            let e = ambient_curvature(&euc(), r, 2);
            assert_eq!(
                (e.k_rad, e.k_tan, e.ricci_rad, e.ricci_tan),
                (0.0, 0.0, 0.0, 0.0)
            );
        }
    }

    #[test]
    fn schwarzschild_curvature_closed_form() {
        let p: WarpingProfile<f64> =
            build_profile(&ProfileSpec::ds_schwarzschild(1.0, 2.0, 2)).unwrap();
        let r = p.invert_theta(2.0).unwrap();
        let c = ambient_curvature(&p, r, 2);
        // f² = 1 + ϑ² − 2/ϑ, ϑ″ = (f²)′/2 = ϑ + 1/ϑ² = 2.25 at ϑ = 2
        assert_relative_eq!(c.k_rad, -2.25 / 2.0, max_relative = 1e-12);
        // 1 − f² = −4 + 1 = −3 → k_tan = −3/4
        assert_relative_eq!(c.k_tan, -0.75, max_relative = 1e-12);
        let (tb, _) = p.theta_bar(r);
        assert!((c.k_tan - c.k_rad - tb).abs() < 1e-12);
        assert_relative_eq!(c.ricci_tan, 2.0 * c.k_rad + tb, max_relative = 1e-12);
    }

    #[test]
    fn slices() {
        assert_eq!(slice_geometry(&euc(), 1.0, 2), (1.0, 2.0));
        let (k, h) = slice_geometry(&hyp(), 1.0, 2);
        assert_relative_eq!(k, 1.313_035_285_499_331_3, max_relative = 1e-14);
        assert_relative_eq!(h, 2.0 * k, max_relative = 1e-15);
        let (_, h) = slice_geometry(&hyp(), 25.0, 2);
        assert_relative_eq!(h, 2.0, max_relative = 1e-15);
    }

    #[test]
    fn barrier_values() {
        assert_relative_eq!(
            barrier(&euc(), 1.0, 2.0, 2).unwrap(),
            std::f64::consts::E,
            max_relative = 1e-15
        );
        let expect = (1.0_f64.sinh() * std::f64::consts::E).asinh();
        assert_relative_eq!(
            barrier(&hyp(), 1.0, 2.0, 2).unwrap(),
            expect,
            max_relative = 1e-14
        );
        assert_relative_eq!(expect, 1.8782, max_relative = 1e-4);
        assert_eq!(barrier(&hyp(), 1.3, 0.0, 2).unwrap(), 1.3);
        let exit = barrier(&hyp(), 1.0, 200.0, 2);
        assert!(matches!(exit, Err(GeometryError::BarrierExit { .. })));
    }

    #[test]
    fn barrier_solves_its_ode() {
        let p: WarpingProfile<f64> =
            build_profile(&ProfileSpec::ds_schwarzschild(1.0, 2.0, 2)).unwrap();
        let (r0, t, n) = (1.0, 1.3, 2);
        let ode = |h: f64| {
            let d = (barrier(&p, r0, t + h, n).unwrap() - barrier(&p, r0, t - h, n).unwrap())
                / (2.0 * h);
            let j = p.eval(barrier(&p, r0, t, n).unwrap());
            (d - j.theta / (n as f64 * j.d1)).abs()
        };
        let (e1, e2) = (ode(1e-2), ode(5e-3));
        assert!(e1 < 1e-4 && e1 / e2 > 3.5, "{e1} {e2}");
    }

    #[test]
    fn ratio_bounds() {
        for t in [0.0, 1.0, 5.0] {
            let (ratio, bound) = barrier_ratio_bound(&euc(), 2.0, 3.0, t, 2).unwrap();
            assert_eq!(ratio, 1.0);
            assert!(bound >= ratio);
        }
        let (ratio, bound) = barrier_ratio_bound(&hyp(), 2.0, 3.0, 0.0, 2).unwrap();
        assert_relative_eq!(ratio, 2.0_f64.sqrt(), max_relative = 1e-13);
        assert!(ratio >= 1.0 && ratio <= bound);
    }

    #[test]
    fn integrability_verdicts() {
        let (i, v) = rescaling_integrability(&euc(), 2, 10.0).unwrap();
        assert_relative_eq!(i, 10.0, max_relative = 1e-10);
        assert_eq!(v, Integrability::Diverging);
        // ∫ dt/(1 + s²eᵗ) = ln(1 + s⁻²) − ln(1 + s⁻²e^{−T}), s = sinh(r0)
        let (i, v) = rescaling_integrability(&hyp(), 2, 30.0).unwrap();
        let s2 = 0.5_f64.sinh().powi(2);
        let expect = (1.0 + 1.0 / s2).ln() - (1.0 + (-30.0_f64).exp() / s2).ln();
        assert_relative_eq!(i, expect, max_relative = 1e-8);
        assert_eq!(v, Integrability::Converging);
        assert_eq!(rescaling_integrability(&hyp(), 2, 0.0).unwrap().0, 0.0);
    }
}
