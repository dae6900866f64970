//! Inverse mean curvature flow of graphs over the sphere in warped
//! cylinders `dr² + ϑ²(r)σ`.
//!
//! Numerical code is generic over [`Real`] (`f32` or `f64`); the aliases
//! below fix the scalar to `f64`.

pub mod diagnostics;
pub mod flow;
pub mod geometry;
pub mod profiles;
pub mod scalar;
pub mod surface;

pub use diagnostics::{
    default_window, fit_decay, fit_decay_values, record, record_run, series_column,
    sharpness_experiment, DecayFit, DecayModel, DiagnosticsError, Sharpness, TimeSeriesRecord,
    SERIES_COLUMNS, V_EXCESS,
};
pub use flow::{
    adaptive_dt, evolution_residual, rhs, run, step, FlowConfig, FlowError, FlowEvent, RunResult,
    Termination,
};
pub use geometry::{
    ambient_curvature, barrier, barrier_exit_time, barrier_ratio_bound, rescaling_integrability,
    slice_geometry, AmbientCurvature, GeometryError, Integrability,
};
pub use profiles::{
    build_profile, check_assumptions, AssumptionOptions, AssumptionReport, B2Division, Family,
    ProfileError, ProfileSpec, WarpJet, WarpingProfile,
};
pub use scalar::Real;
pub use surface::{
    composed_derivatives, derivatives, legendre, off_center_euclidean_sphere,
    off_center_hyperbolic_sphere, shape_operator, shape_operator_alt, umbilicity_deficit,
    GraphState, InitialData, ShapeData, SphereGrid, SurfaceError,
};

pub type Profile = WarpingProfile<f64>;
pub type Jet = WarpJet<f64>;
pub type Grid = SphereGrid<f64>;
pub type State = GraphState<f64>;
pub type Shape = ShapeData<f64>;
pub type Run = RunResult<f64>;
