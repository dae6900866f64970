//! Method-of-lines integration of the graph equation `∂u/∂t = v/H`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::barrier;
use crate::profiles::WarpingProfile;
use crate::scalar::{lit, to_f64, Real};
use crate::surface::{
    composed_derivatives, shape_operator, GraphState, InitialData, SphereGrid, SurfaceError,
};

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("mean convexity lost at t = {t} (node {node}, H = {h})")]
    MeanConvexityLost { t: f64, node: usize, h: f64 },
    #[error("u = {u} at node {node} left the profile domain at t = {t}")]
    DomainExit { t: f64, node: usize, u: f64 },
    #[error("invalid flow configuration: {0}")]
    InvalidConfig(String),
    #[error("states do not share a grid or time spacing: {0}")]
    MismatchedGrids(String),
    #[error(transparent)]
    Surface(#[from] SurfaceError),
}

/// Parameters of one flow run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowConfig {
    /// Hypersurface dimension.
    pub n: usize,
    /// Number of grid cells `N`.
    pub grid: usize,
    pub c_cfl: f64,
    pub t_end: f64,
    pub output_every: f64,
    pub h_floor: f64,
    /// Distance kept from both ends of the profile domain.
    pub margin: f64,
    pub initial: InitialData,
}

impl Default for FlowConfig {
    fn default() -> Self {
        Self {
            n: 2,
            grid: 256,
            c_cfl: 0.2,
            t_end: 1.0,
            output_every: 0.1,
            h_floor: 1e-10,
            margin: 1e-6,
            initial: InitialData::Round { r0: 1.0 },
        }
    }
}

impl FlowConfig {
    pub fn validate(&self) -> Result<(), FlowError> {
        let bad = |m: String| Err(FlowError::InvalidConfig(m));
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return bad(format!(
                "t_end = {} must be finite and non-negative",
                self.t_end
            ));
        }
        if !(self.c_cfl > 0.0 && self.c_cfl <= 1.0) {
            return bad(format!("c_cfl = {} must lie in (0, 1]", self.c_cfl));
        }
        if !(self.output_every > 0.0) {
            return bad(format!(
                "output_every = {} must be positive",
                self.output_every
            ));
        }
        if !(self.h_floor >= 0.0) || !(self.margin >= 0.0) {
            return bad("h_floor and margin must be non-negative".into());
        }
        Ok(())
    }

    pub fn sphere_grid<T: Real>(&self) -> Result<SphereGrid<T>, FlowError> {
        Ok(SphereGrid::new(self.n, self.grid)?)
    }
}

/// Speed `v/H` and the smallest `ϑ²H²v²` over the nodes.
fn speed<T: Real>(
    grid: &SphereGrid<T>,
    profile: &WarpingProfile<T>,
    state: &GraphState<T>,
    h_floor: T,
) -> Result<(Vec<T>, T), FlowError> {
    let shape = shape_operator(grid, profile, state);
    let mut min_coeff = T::infinity();
    let mut out = Vec::with_capacity(grid.len());
    for (j, (&h, &v)) in shape.h.iter().zip(&shape.v).enumerate() {
        if !(h > h_floor) {
            return Err(FlowError::MeanConvexityLost {
                t: to_f64(state.t),
                node: j,
                h: to_f64(h),
            });
        }
        let th = profile.theta(state.u[j]);
        min_coeff = min_coeff.min(th * th * h * h * v * v);
        out.push(v / h);
    }
    Ok((out, min_coeff))
}

/// `∂u/∂t = v/H` at every node.
pub fn rhs<T: Real>(
    grid: &SphereGrid<T>,
    profile: &WarpingProfile<T>,
    state: &GraphState<T>,
    h_floor: T,
) -> Result<Vec<T>, FlowError> {
    speed(grid, profile, state, h_floor).map(|(v, _)| v)
}

/// Explicit step limit `c·Δχ²·min(ϑ²H²v²)`, capped by `cap`.
pub fn adaptive_dt<T: Real>(
    grid: &SphereGrid<T>,
    profile: &WarpingProfile<T>,
    state: &GraphState<T>,
    c_cfl: T,
    cap: T,
) -> T {
    let shape = shape_operator(grid, profile, state);
    let coeff = shape
        .h
        .iter()
        .zip(&shape.v)
        .zip(&state.u)
        .map(|((&h, &v), &u)| {
            let th = profile.theta(u);
            th * th * h * h * v * v
        })
        .fold(T::infinity(), T::min);
    (c_cfl * grid.spacing() * grid.spacing() * coeff).min(cap)
}

fn check_domain<T: Real>(
    profile: &WarpingProfile<T>,
    state: &GraphState<T>,
    margin: T,
) -> Result<(), FlowError> {
    let (lo, hi) = profile.domain();
    for (node, &u) in state.u.iter().enumerate() {
        if !(u >= lo + margin && u <= hi - margin) {
            return Err(FlowError::DomainExit {
                t: to_f64(state.t),
                node,
                u: to_f64(u),
            });
        }
    }
    Ok(())
}

fn axpy<T: Real>(u: &[T], k: &[T], a: T) -> Vec<T> {
    u.iter().zip(k).map(|(x, y)| *x + a * *y).collect()
}

fn rk4_with_first_stage<T: Real>(
    grid: &SphereGrid<T>,
    profile: &WarpingProfile<T>,
    state: &GraphState<T>,
    k1: &[T],
    dt: T,
    h_floor: T,
) -> Result<GraphState<T>, FlowError> {
    let half: T = lit(0.5);
    let t = state.t;
    let s2 = GraphState::new(t + half * dt, axpy(&state.u, k1, half * dt));
    let k2 = rhs(grid, profile, &s2, h_floor)?;
    let s3 = GraphState::new(t + half * dt, axpy(&state.u, &k2, half * dt));
    let k3 = rhs(grid, profile, &s3, h_floor)?;
    let s4 = GraphState::new(t + dt, axpy(&state.u, &k3, dt));
    let k4 = rhs(grid, profile, &s4, h_floor)?;
    let sixth = dt / lit(6.0);
    let two: T = lit(2.0);
    let u = (0..state.u.len())
        .map(|j| state.u[j] + sixth * (k1[j] + two * (k2[j] + k3[j]) + k4[j]))
        .collect();
    Ok(GraphState::new(t + dt, u))
}

/// One classical Runge–Kutta step. Pole symmetry needs no separate
/// enforcement: the stencils only ever read the even extension of `u`.
pub fn step<T: Real>(
    grid: &SphereGrid<T>,
    profile: &WarpingProfile<T>,
    state: &GraphState<T>,
    dt: T,
    h_floor: T,
    margin: T,
) -> Result<GraphState<T>, FlowError> {
    if dt == T::zero() {
        return Ok(state.clone());
    }
    let k1 = rhs(grid, profile, state, h_floor)?;
    let next = rk4_with_first_stage(grid, profile, state, &k1, dt, h_floor)?;
    check_domain(profile, &next, margin)?;
    Ok(next)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum FlowEvent {
    MeanConvexityLost {
        t: f64,
        node: usize,
        h: f64,
    },
    DomainExit {
        t: f64,
        node: usize,
        u: f64,
    },
    /// A comparison barrier left the profile domain; sandwich checks stop.
    BarrierExit {
        t: f64,
    },
    SandwichViolation {
        t: f64,
        node: usize,
        u: f64,
        lower: f64,
        upper: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum Termination {
    Completed,
    MeanConvexityLost { t: f64 },
    DomainExit { t: f64 },
}

#[derive(Debug, Clone)]
pub struct RunResult<T> {
    /// States at the output times, starting with the initial state.
    pub states: Vec<GraphState<T>>,
    pub events: Vec<FlowEvent>,
    pub termination: Termination,
    pub steps: usize,
}

impl<T: Real> RunResult<T> {
    pub fn last(&self) -> &GraphState<T> {
        self.states.last().expect("run records the initial state")
    }
}

/// Integrates from `initial` until `t_end`, a domain exit or loss of mean
/// convexity, recording states every `output_every`.
pub fn run<T: Real>(
    config: &FlowConfig,
    grid: &SphereGrid<T>,
    profile: &WarpingProfile<T>,
    initial: GraphState<T>,
) -> Result<RunResult<T>, FlowError> {
    config.validate()?;
    if initial.u.len() != grid.len() {
        return Err(FlowError::MismatchedGrids(format!(
            "initial state has {} nodes, grid has {}",
            initial.u.len(),
            grid.len()
        )));
    }
    let n = grid.dim();
    let h_floor: T = lit(config.h_floor);
    let margin: T = lit(config.margin);
    let c_cfl: T = lit(config.c_cfl);
    let t_end: T = lit(config.t_end);
    let (u_lo, u_hi) = (initial.min_u(), initial.max_u());

    let mut result = RunResult {
        states: vec![initial.clone()],
        events: Vec::new(),
        termination: Termination::Completed,
        steps: 0,
    };
    let mut barriers_live = true;
    let mut state = initial;

    let fail = |result: &mut RunResult<T>, err: FlowError| -> Result<(), FlowError> {
        match err {
            FlowError::MeanConvexityLost { t, node, h } => {
                result
                    .events
                    .push(FlowEvent::MeanConvexityLost { t, node, h });
                result.termination = Termination::MeanConvexityLost { t };
                Ok(())
            }
            FlowError::DomainExit { t, node, u } => {
                result.events.push(FlowEvent::DomainExit { t, node, u });
                result.termination = Termination::DomainExit { t };
                Ok(())
            }
            other => Err(other),
        }
    };

    if let Err(err) =
        check_domain(profile, &state, margin).and_then(|_| speed(grid, profile, &state, h_floor))
    {
        fail(&mut result, err)?;
        return Ok(result);
    }

    let mut k = 1usize;
    'outer: while state.t < t_end {
        let target = (lit::<T>(config.output_every) * lit(k as f64)).min(t_end);
        k += 1;
        while state.t < target {
            let (k1, coeff) = match speed(grid, profile, &state, h_floor) {
                Ok(s) => s,
                Err(err) => {
                    fail(&mut result, err)?;
                    break 'outer;
                }
            };
            let remaining = target - state.t;
            let mut dt = c_cfl * grid.spacing() * grid.spacing() * coeff;
            let landing = dt >= remaining * (T::one() - lit(1e-12));
            if landing {
                dt = remaining;
            }
            let next = rk4_with_first_stage(grid, profile, &state, &k1, dt, h_floor)
                .and_then(|s| check_domain(profile, &s, margin).map(|_| s));
            match next {
                Ok(mut s) => {
                    if landing {
                        s.t = target;
                    }
                    state = s;
                    result.steps += 1;
                }
                Err(err) => {
                    fail(&mut result, err)?;
                    break 'outer;
                }
            }
        }
        if barriers_live {
            barriers_live = sandwich_check(profile, &state, u_lo, u_hi, n, &mut result.events);
        }
        result.states.push(state.clone());
    }
    Ok(result)
}

/// Logs nodes outside `[Θ(t, min u₀) − tol, Θ(t, max u₀) + tol]`,
/// `tol = 1e-4·(1 + Θ)`. Returns false once a barrier leaves the domain.
fn sandwich_check<T: Real>(
    profile: &WarpingProfile<T>,
    state: &GraphState<T>,
    u_lo: T,
    u_hi: T,
    n: usize,
    events: &mut Vec<FlowEvent>,
) -> bool {
    let (lower, upper) = match (
        barrier(profile, u_lo, state.t, n),
        barrier(profile, u_hi, state.t, n),
    ) {
        (Ok(a), Ok(b)) => (a, b),
        _ => {
            events.push(FlowEvent::BarrierExit { t: to_f64(state.t) });
            return false;
        }
    };
    let tol = |x: T| lit::<T>(1e-4) * (T::one() + x);
    for (node, &u) in state.u.iter().enumerate() {
        if u < lower - tol(lower) || u > upper + tol(upper) {
            events.push(FlowEvent::SandwichViolation {
                t: to_f64(state.t),
                node,
                u: to_f64(u),
                lower: to_f64(lower),
                upper: to_f64(upper),
            });
        }
    }
    true
}

/// Sup-norm residual of the parabolic identity satisfied by `u`,
///
/// `∂u/∂t − g̃^{kr}u_{:kr}/H̃² = 2v/H − (n/H²)(ϑ′/ϑ) − (1/H²)(ϑ′/ϑ)v⁻²|Dφ|²`,
///
/// with `H̃ = ϑH`, the time derivative taken by central differences over
/// three equally spaced states. The mean curvature comes from
/// [`shape_operator`] while the round-metric Hessian is assembled from
/// [`composed_derivatives`], so the residual also measures the spatial
/// disagreement between the two stencils.
pub fn evolution_residual<T: Real>(
    grid: &SphereGrid<T>,
    profile: &WarpingProfile<T>,
    states: [&GraphState<T>; 3],
) -> Result<T, FlowError> {
    let [s0, s1, s2] = states;
    if s0.u.len() != grid.len() || s1.u.len() != grid.len() || s2.u.len() != grid.len() {
        return Err(FlowError::MismatchedGrids("node counts differ".into()));
    }
    let h = s1.t - s0.t;
    let h2 = s2.t - s1.t;
    if !(h > T::zero()) || (h - h2).abs() > lit::<T>(1e-9) * h {
        return Err(FlowError::MismatchedGrids(format!(
            "unequal time spacing {h} and {h2}"
        )));
    }
    let shape = shape_operator(grid, profile, s1);
    let (du, d2u) = composed_derivatives(grid, &s1.u);
    let nf: T = lit(grid.dim() as f64);
    let two: T = lit(2.0);
    let mut worst = T::zero();
    for j in 0..grid.len() {
        let w = profile.eval(s1.u[j]);
        let (v, hm) = (shape.v[j], shape.h[j]);
        let v2 = v * v;
        let ut = (s2.u[j] - s0.u[j]) / (two * h);
        let angular = if j == 0 || j == grid.cells() {
            d2u[j]
        } else {
            du[j] / grid.nodes()[j].tan()
        };
        let trace = d2u[j] / v2 + (nf - T::one()) * angular;
        let ht = w.theta * hm;
        let lhs = ut - trace / (ht * ht);
        let slope = w.d1 / w.theta;
        let rhs = two * v / hm - nf * slope / (hm * hm) - slope * shape.grad2[j] / (hm * hm * v2);
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(worst)
}
