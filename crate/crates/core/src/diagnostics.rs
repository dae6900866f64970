//! Monitored quantities along a run and decay-rate fits.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::flow::{run, FlowConfig, FlowError, RunResult};
use crate::profiles::WarpingProfile;
use crate::scalar::{lit, to_f64, Real};
use crate::surface::{off_center_hyperbolic_sphere, shape_operator, GraphState, SphereGrid};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("fit undefined: {quantity} = {value} at t = {t} is not strictly positive")]
    FitUndefined {
        quantity: String,
        t: f64,
        value: f64,
    },
    #[error("fit window [{t1}, {t2}] holds {samples} samples, need at least {MIN_FIT_SAMPLES}")]
    WindowTooShort { t1: f64, t2: f64, samples: usize },
    #[error("invalid fit window [{t1}, {t2}]")]
    InvalidWindow { t1: f64, t2: f64 },
    #[error("unknown quantity {0:?}")]
    UnknownQuantity(String),
}

pub const MIN_FIT_SAMPLES: usize = 8;

/// Header of the series table, in column order.
pub const SERIES_COLUMNS: [&str; 12] = [
    "t",
    "min_u",
    "max_u",
    "sup_v",
    "sup_grad",
    "sup_grad_weighted",
    "H_min",
    "H_max",
    "sup_deficit",
    "sup_weighted_deficit",
    "w_mean",
    "rescaled_spread",
];

/// One row of the monitored time series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeSeriesRecord {
    pub t: f64,
    pub min_u: f64,
    pub max_u: f64,
    pub sup_v: f64,
    /// `max ‖Du‖` with `‖Du‖² = v² − 1`.
    pub sup_grad: f64,
    /// `max ϑ′(u)·‖Du‖`.
    pub sup_grad_weighted: f64,
    #[serde(rename = "H_min")]
    pub h_min: f64,
    #[serde(rename = "H_max")]
    pub h_max: f64,
    pub sup_deficit: f64,
    pub sup_weighted_deficit: f64,
    /// `max H·ϑ/ϑ′`.
    pub w_mean: f64,
    /// Oscillation of `ϑ(u)·e^{−t/n}`.
    pub rescaled_spread: f64,
}

impl TimeSeriesRecord {
    pub fn values(&self) -> [f64; 12] {
        [
            self.t,
            self.min_u,
            self.max_u,
            self.sup_v,
            self.sup_grad,
            self.sup_grad_weighted,
            self.h_min,
            self.h_max,
            self.sup_deficit,
            self.sup_weighted_deficit,
            self.w_mean,
            self.rescaled_spread,
        ]
    }

    pub fn get(&self, column: &str) -> Option<f64> {
        SERIES_COLUMNS
            .iter()
            .position(|c| *c == column)
            .map(|i| self.values()[i])
    }

    pub fn from_values(v: [f64; 12]) -> Self {
        Self {
            t: v[0],
            min_u: v[1],
            max_u: v[2],
            sup_v: v[3],
            sup_grad: v[4],
            sup_grad_weighted: v[5],
            h_min: v[6],
            h_max: v[7],
            sup_deficit: v[8],
            sup_weighted_deficit: v[9],
            w_mean: v[10],
            rescaled_spread: v[11],
        }
    }
}

/// Evaluates every monitored quantity from a single shape pass.
pub fn record<T: Real>(
    grid: &SphereGrid<T>,
    profile: &WarpingProfile<T>,
    state: &GraphState<T>,
) -> TimeSeriesRecord {
    let shape = shape_operator(grid, profile, state);
    let scale = (-state.t / lit(grid.dim() as f64)).exp();
    let mut r = TimeSeriesRecord {
        t: to_f64(state.t),
        min_u: to_f64(state.min_u()),
        max_u: to_f64(state.max_u()),
        sup_v: 0.0,
        sup_grad: 0.0,
        sup_grad_weighted: 0.0,
        h_min: to_f64(shape.min_h()),
        h_max: to_f64(shape.max_h()),
        sup_deficit: 0.0,
        sup_weighted_deficit: 0.0,
        w_mean: f64::NEG_INFINITY,
        rescaled_spread: 0.0,
    };
    let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
    for j in 0..grid.len() {
        let w = profile.eval(state.u[j]);
        let v = shape.v[j];
        let grad = to_f64(shape.phi1[j].abs());
        let d1 = to_f64(w.d1);
        let deficit = to_f64(shape.deficit[j]);
        r.sup_v = r.sup_v.max(to_f64(v));
        r.sup_grad = r.sup_grad.max(grad);
        r.sup_grad_weighted = r.sup_grad_weighted.max(d1 * grad);
        r.sup_deficit = r.sup_deficit.max(deficit);
        r.sup_weighted_deficit = r.sup_weighted_deficit.max(d1 * deficit);
        r.w_mean = r.w_mean.max(to_f64(shape.h[j] * w.theta / w.d1));
        let rescaled = to_f64(w.theta * scale);
        lo = lo.min(rescaled);
        hi = hi.max(rescaled);
    }
    r.rescaled_spread = hi - lo;
    r
}

/// Records every state of a run.
pub fn record_run<T: Real>(
    grid: &SphereGrid<T>,
    profile: &WarpingProfile<T>,
    result: &RunResult<T>,
) -> Vec<TimeSeriesRecord> {
    result
        .states
        .iter()
        .map(|s| record(grid, profile, s))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecayModel {
    /// `log Q = a + b·t`
    PureExp,
    /// `log Q = a + b·t + c·log t`
    ExpLog,
}

impl DecayModel {
    pub fn name(self) -> &'static str {
        match self {
            DecayModel::PureExp => "pure_exp",
            DecayModel::ExpLog => "exp_log",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecayFit {
    pub model: DecayModel,
    pub a: f64,
    pub b: f64,
    /// Zero for [`DecayModel::PureExp`].
    pub c: f64,
    pub window: (f64, f64),
    pub samples: usize,
    /// Root mean square of the residuals in `log Q`.
    pub rms: f64,
}

/// Last half of the run, never starting before `t = n`.
pub fn default_window(t_end: f64, n: usize) -> (f64, f64) {
    ((t_end / 2.0).max(n as f64), t_end)
}

/// Least-squares fit of `log Q` over the samples with `t ∈ [t1, t2]`.
pub fn fit_decay_values(
    quantity: &str,
    t: &[f64],
    q: &[f64],
    window: (f64, f64),
    model: DecayModel,
) -> Result<DecayFit, DiagnosticsError> {
    let (t1, t2) = window;
    if !(t2 > t1) || (model == DecayModel::ExpLog && !(t1 > 0.0)) {
        return Err(DiagnosticsError::InvalidWindow { t1, t2 });
    }
    let mut rows = Vec::new();
    for (&ti, &qi) in t.iter().zip(q) {
        if ti < t1 || ti > t2 {
            continue;
        }
        if !(qi > 0.0) || !qi.is_finite() {
            return Err(DiagnosticsError::FitUndefined {
                quantity: quantity.to_owned(),
                t: ti,
                value: qi,
            });
        }
        rows.push((ti, qi.ln()));
    }
    if rows.len() < MIN_FIT_SAMPLES {
        return Err(DiagnosticsError::WindowTooShort {
            t1,
            t2,
            samples: rows.len(),
        });
    }
    let cols = match model {
        DecayModel::PureExp => 2,
        DecayModel::ExpLog => 3,
    };
    let design = DMatrix::from_fn(rows.len(), cols, |i, k| match k {
        0 => 1.0,
        1 => rows[i].0,
        _ => rows[i].0.ln(),
    });
    let rhs = DVector::from_iterator(rows.len(), rows.iter().map(|r| r.1));
    let coef = design
        .clone()
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .expect("both singular vector sets requested");
    let resid = &design * &coef - &rhs;
    let rms = (resid.norm_squared() / rows.len() as f64).sqrt();
    Ok(DecayFit {
        model,
        a: coef[0],
        b: coef[1],
        c: if cols == 3 { coef[2] } else { 0.0 },
        window,
        samples: rows.len(),
        rms,
    })
}

/// Derived quantity `sup_v² − 1`, whose exponential rate is the gradient
/// decay exponent.
pub const V_EXCESS: &str = "v_excess";

/// Values of a series column, or of [`V_EXCESS`].
pub fn series_column(
    series: &[TimeSeriesRecord],
    quantity: &str,
) -> Result<Vec<f64>, DiagnosticsError> {
    if quantity == V_EXCESS {
        return Ok(series.iter().map(|r| r.sup_v * r.sup_v - 1.0).collect());
    }
    let idx = SERIES_COLUMNS
        .iter()
        .position(|c| *c == quantity)
        .ok_or_else(|| DiagnosticsError::UnknownQuantity(quantity.to_owned()))?;
    Ok(series.iter().map(|r| r.values()[idx]).collect())
}

/// Fits the named series column over `window`.
pub fn fit_decay(
    series: &[TimeSeriesRecord],
    quantity: &str,
    window: (f64, f64),
    model: DecayModel,
) -> Result<DecayFit, DiagnosticsError> {
    if quantity == "t" {
        return Err(DiagnosticsError::UnknownQuantity(quantity.to_owned()));
    }
    let q = series_column(series, quantity)?;
    let t: Vec<f64> = series.iter().map(|r| r.t).collect();
    fit_decay_values(quantity, &t, &q, window, model)
}

/// Outcome of the off-center sphere experiment.
#[derive(Debug, Clone)]
pub struct Sharpness {
    /// Smallest `sup_grad_weighted` over the last third of the run.
    pub floor: f64,
    pub ceiling: f64,
    pub initial_weighted: f64,
    pub initial_grad: f64,
    pub final_grad: f64,
    pub series: Vec<TimeSeriesRecord>,
}

impl Sharpness {
    /// Weighted gradient persists above a tenth of its start while the
    /// plain gradient decays.
    pub fn confirmed(&self) -> bool {
        self.floor >= 0.1 * self.initial_weighted && self.final_grad < self.initial_grad
    }
}

/// Evolves a geodesic sphere of radius `rho` centered at distance `d` and
/// tracks `ϑ′‖Du‖` over the last third of the run.
pub fn sharpness_experiment<T: Real>(
    profile: &WarpingProfile<T>,
    k: f64,
    rho: f64,
    d: f64,
    config: &FlowConfig,
) -> Result<Sharpness, FlowError> {
    if !(d >= 0.0) {
        return Err(FlowError::InvalidConfig(format!(
            "offset d = {d} must be non-negative"
        )));
    }
    let grid: SphereGrid<T> = config.sphere_grid()?;
    let initial = off_center_hyperbolic_sphere(&grid, lit(k), lit(rho), lit(d))?;
    let result = run(config, &grid, profile, initial)?;
    let series = record_run(&grid, profile, &result);
    let first = series[0];
    let last = *series.last().expect("run records the initial state");
    let cut = last.t * 2.0 / 3.0;
    let (floor, ceiling) = series
        .iter()
        .filter(|r| r.t >= cut)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), r| {
            (lo.min(r.sup_grad_weighted), hi.max(r.sup_grad_weighted))
        });
    Ok(Sharpness {
        floor,
        ceiling,
        initial_weighted: first.sup_grad_weighted,
        initial_grad: first.sup_grad,
        final_grad: last.sup_grad,
        series,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profiles::{build_profile, ProfileSpec};
    use crate::surface::InitialData;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn grid_times(t1: f64, t2: f64, count: usize) -> Vec<f64> {
        (0..count)
            .map(|i| t1 + (t2 - t1) * i as f64 / (count - 1) as f64)
            .collect()
    }

    #[test]
    fn synthetic_pure_exponential() {
        let t = grid_times(1.0, 20.0, 96);
        let q: Vec<f64> = t.iter().map(|t| 5.0 * (-t / 2.0).exp()).collect();
        let fit = fit_decay_values("q", &t, &q, (1.0, 20.0), DecayModel::ExpLog).unwrap();
        assert_abs_diff_eq!(fit.b, -0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.c, 0.0, epsilon = 1e-8);
        let fit = fit_decay_values("q", &t, &q, (1.0, 20.0), DecayModel::PureExp).unwrap();
        assert_abs_diff_eq!(fit.b, -0.5, epsilon = 1e-9);
        assert_abs_diff_eq!(fit.a, 5.0_f64.ln(), epsilon = 1e-9);
        assert!(fit.rms < 1e-12);
    }

    #[test]
    fn synthetic_log_corrected_exponential() {
        let t = grid_times(5.0, 20.0, 61);
        let q: Vec<f64> = t.iter().map(|t| t * (-t / 2.0).exp()).collect();
        let fit = fit_decay_values("q", &t, &q, (5.0, 20.0), DecayModel::ExpLog).unwrap();
        assert_abs_diff_eq!(fit.b, -0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(fit.c, 1.0, epsilon = 1e-6);
    }

    #[test]
    fn constant_series_has_zero_rate() {
        let t = grid_times(0.0, 4.0, 20);
        let q = vec![3.0; 20];
        let fit = fit_decay_values("q", &t, &q, (0.0, 4.0), DecayModel::PureExp).unwrap();
        assert_abs_diff_eq!(fit.b, 0.0, epsilon = 1e-12);
    }

    #[test]
    fn fit_errors() {
        let t = grid_times(0.0, 4.0, 20);
        let mut q = vec![1.0; 20];
        q[10] = 0.0;
        assert!(matches!(
            fit_decay_values("q", &t, &q, (0.0, 4.0), DecayModel::PureExp),
            Err(DiagnosticsError::FitUndefined { .. })
        ));
        assert!(matches!(
            fit_decay_values("q", &t, &q, (3.0, 4.0), DecayModel::PureExp),
            Err(DiagnosticsError::WindowTooShort { samples: 5, .. })
        ));
        assert!(matches!(
            fit_decay_values("q", &t, &q, (4.0, 3.0), DecayModel::PureExp),
            Err(DiagnosticsError::InvalidWindow { .. })
        ));
        assert!(fit_decay(&[], "nope", (0.0, 1.0), DecayModel::PureExp).is_err());
        assert!(fit_decay(&[], "t", (0.0, 1.0), DecayModel::PureExp).is_err());
    }

    #[test]
    fn default_window_skips_early_times() {
        assert_eq!(default_window(12.0, 2), (6.0, 12.0));
        assert_eq!(default_window(3.0, 2), (2.0, 3.0));
    }

    #[test]
    fn round_slice_record() {
        for spec in [ProfileSpec::euclidean(), ProfileSpec::hyperbolic(1.0)] {
            let p: WarpingProfile<f64> = build_profile(&spec).unwrap();
            let g = SphereGrid::new(2, 64).unwrap();
            let r = record(&g, &p, &GraphState::new(1.5, vec![1.3; g.len()]));
            assert_eq!(r.sup_grad, 0.0);
            assert_eq!(r.sup_v, 1.0);
            assert!(r.sup_deficit <= 1e-15);
            assert_abs_diff_eq!(r.w_mean, 2.0, epsilon = 1e-14);
            assert_eq!(r.rescaled_spread, 0.0);
        }
    }

    #[test]
    fn off_center_sphere_has_weighted_gradient() {
        let p: WarpingProfile<f64> = build_profile(&ProfileSpec::hyperbolic(1.0)).unwrap();
        let g = SphereGrid::new(2, 128).unwrap();
        let s = InitialData::OffcenterHyp { rho: 1.0, d: 0.3 }
            .build(&g, &p)
            .unwrap();
        let r = record(&g, &p, &s);
        assert!(r.sup_grad_weighted > 0.0);
        assert!(r.sup_v > 1.0);
    }

    #[test]
    fn centered_sphere_has_no_gradient() {
        let p: WarpingProfile<f64> = build_profile(&ProfileSpec::hyperbolic(1.0)).unwrap();
        let cfg = FlowConfig {
            grid: 32,
            t_end: 1.0,
            output_every: 0.1,
            ..FlowConfig::default()
        };
        let s = sharpness_experiment(&p, 1.0, 1.0, 0.0, &cfg).unwrap();
        assert_eq!((s.floor, s.ceiling), (0.0, 0.0));
        assert!(sharpness_experiment(&p, 1.0, 1.0, -0.1, &cfg).is_err());
    }

    #[test]
    fn gradient_excess_column() {
        let mut rows: Vec<TimeSeriesRecord> = (0..10)
            .map(|i| {
                let mut v = [0.0; 12];
                v[0] = i as f64;
                TimeSeriesRecord::from_values(v)
            })
            .collect();
        for r in &mut rows {
            r.sup_v = (1.0 + 0.2 * (-0.3 * r.t).exp()).sqrt();
        }
        let fit = fit_decay(&rows, V_EXCESS, (0.0, 9.0), DecayModel::PureExp).unwrap();
        assert_abs_diff_eq!(fit.b, -0.3, epsilon = 1e-9);
    }

    #[test]
    fn series_columns_round_trip() {
        let r = TimeSeriesRecord::from_values(std::array::from_fn(|i| i as f64));
        assert_eq!(r.get("H_max"), Some(7.0));
        assert_eq!(r.get("rescaled_spread"), Some(11.0));
        assert_eq!(TimeSeriesRecord::from_values(r.values()), r);
    }

    proptest! {
        #[test]
        fn pure_exp_fit_recovers_parameters(a in -5.0..5.0f64, b in -2.0..2.0f64, t0 in 0.0..5.0f64) {
            let t = grid_times(t0, t0 + 6.0, 40);
            let q: Vec<f64> = t.iter().map(|t| (a + b * t).exp()).collect();
            let fit = fit_decay_values("q", &t, &q, (t0, t0 + 6.0), DecayModel::PureExp).unwrap();
            prop_assert!((fit.b - b).abs() < 1e-9);
            prop_assert!((fit.a - a).abs() < 1e-8);
        }

        #[test]
        fn fit_is_scale_invariant(scale in 1e-6..1e6f64, b in -1.0..0.0f64) {
            let t = grid_times(2.0, 10.0, 30);
            let q: Vec<f64> = t.iter().map(|t| (b * t).exp() * (1.0 + 0.1 * (3.0 * t).sin())).collect();
            let qs: Vec<f64> = q.iter().map(|x| x * scale).collect();
            let f1 = fit_decay_values("q", &t, &q, (2.0, 10.0), DecayModel::ExpLog).unwrap();
            let f2 = fit_decay_values("q", &t, &qs, (2.0, 10.0), DecayModel::ExpLog).unwrap();
            prop_assert!((f1.b - f2.b).abs() < 1e-8);
            prop_assert!((f1.c - f2.c).abs() < 1e-7);
            prop_assert!((f1.rms - f2.rms).abs() < 1e-9);
        }

        #[test]
        fn round_states_record_no_gradient(u in 0.6..20.0f64, t in 0.0..10.0f64) {
            let p: WarpingProfile<f64> = build_profile(&ProfileSpec::hyperbolic(1.0)).unwrap();
            let g = SphereGrid::new(3, 32).unwrap();
            let r = record(&g, &p, &GraphState::new(t, vec![u; g.len()]));
            prop_assert_eq!(r.sup_grad, 0.0);
            prop_assert!(r.sup_deficit <= 1e-8);
            prop_assert!(r.sup_v >= 1.0);
            prop_assert!((r.w_mean - 3.0).abs() < 1e-12);
        }
    }
}
