//! Axisymmetric graphs `r = u(χ)` over `Sⁿ` and their extrinsic geometry.
//!
//! `χ ∈ [0, π]` is the polar angle; the round metric is
//! `dχ² + sin²χ·σ_{Sⁿ⁻¹}`. Both poles are grid nodes and derivatives use
//! even ghost extension across them.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::profiles::{Family, WarpingProfile};
use crate::scalar::{lit, to_f64, Real};

#[derive(Debug, Error)]
pub enum SurfaceError {
    #[error("invalid grid: {0}")]
    Grid(String),
    #[error("no root of the sphere equation at chi = {chi}")]
    NoRoot { chi: f64 },
    #[error("invalid initial data: {0}")]
    InitialData(String),
    #[error("state value u = {u} at node {node} outside the profile domain")]
    OutOfDomain { node: usize, u: f64 },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Uniform polar-angle grid `χ_j = jπ/N`, `j = 0..=N`.
#[derive(Debug, Clone, PartialEq)]
pub struct SphereGrid<T> {
    n: usize,
    cells: usize,
    dchi: T,
    chi: Vec<T>,
}

impl<T: Real> SphereGrid<T> {
    pub fn new(n: usize, cells: usize) -> Result<Self, SurfaceError> {
        if n < 2 {
            return Err(SurfaceError::Grid(format!(
                "hypersurface dimension n = {n} must be >= 2"
            )));
        }
        if cells < 16 {
            return Err(SurfaceError::Grid(format!(
                "node count N = {cells} must be >= 16"
            )));
        }
        let dchi = T::PI() / lit(cells as f64);
        let mut chi: Vec<T> = (0..=cells).map(|j| dchi * lit(j as f64)).collect();
        chi[cells] = T::PI();
        Ok(Self {
            n,
            cells,
            dchi,
            chi,
        })
    }

    /// Hypersurface dimension.
    pub fn dim(&self) -> usize {
        self.n
    }

    /// Number of cells `N`; there are `N + 1` nodes.
    pub fn cells(&self) -> usize {
        self.cells
    }

    pub fn len(&self) -> usize {
        self.cells + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> T {
        self.dchi
    }

    pub fn nodes(&self) -> &[T] {
        &self.chi
    }

    fn is_pole(&self, j: usize) -> bool {
        j == 0 || j == self.cells
    }
}

/// Graph function `u` at the grid nodes and the flow time.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphState<T> {
    pub t: T,
    pub u: Vec<T>,
}

impl<T: Real> GraphState<T> {
    pub fn new(t: T, u: Vec<T>) -> Self {
        Self { t, u }
    }

    pub fn round(grid: &SphereGrid<T>, r0: T) -> Self {
        Self {
            t: T::zero(),
            u: vec![r0; grid.len()],
        }
    }

    pub fn min_u(&self) -> T {
        self.u.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max_u(&self) -> T {
        self.u.iter().copied().fold(T::neg_infinity(), T::max)
    }
}

/// Value at index `j` of the even extension of `u` across both poles.
#[inline]
fn even<T: Copy>(u: &[T], j: isize) -> T {
    let last = (u.len() - 1) as isize;
    let k = if j < 0 {
        -j
    } else if j > last {
        2 * last - j
    } else {
        j
    };
    u[k as usize]
}

/// Value at index `j` of the odd extension (used for `u′`).
#[inline]
fn odd<T: Real>(u: &[T], j: isize) -> T {
    let last = (u.len() - 1) as isize;
    if j < 0 {
        -u[(-j) as usize]
    } else if j > last {
        -u[(2 * last - j) as usize]
    } else {
        u[j as usize]
    }
}

fn first_difference<T: Real>(
    grid: &SphereGrid<T>,
    u: &[T],
    ext: impl Fn(&[T], isize) -> T,
) -> Vec<T> {
    let scale = T::one() / (lit::<T>(12.0) * grid.dchi);
    let eight: T = lit(8.0);
    (0..u.len() as isize)
        .map(|j| {
            let near = ext(u, j + 1) - ext(u, j - 1);
            let far = ext(u, j + 2) - ext(u, j - 2);
            (eight * near - far) * scale
        })
        .collect()
}

/// `(u′, u″)` with `u″` taken as the first difference of `u′`, whose
/// ghost nodes are odd.
pub fn composed_derivatives<T: Real>(grid: &SphereGrid<T>, u: &[T]) -> (Vec<T>, Vec<T>) {
    assert_eq!(u.len(), grid.len(), "state length does not match grid");
    let du = first_difference(grid, u, even);
    let d2u = first_difference(grid, &du, odd);
    (du, d2u)
}

/// Fourth-order central differences `(u′, u″)` with even ghost nodes.
pub fn derivatives<T: Real>(grid: &SphereGrid<T>, u: &[T]) -> (Vec<T>, Vec<T>) {
    assert_eq!(u.len(), grid.len(), "state length does not match grid");
    let du = first_difference(grid, u, even);
    let scale = T::one() / (lit::<T>(12.0) * grid.dchi * grid.dchi);
    let sixteen: T = lit(16.0);
    let d2u = (0..u.len() as isize)
        .map(|j| {
            let c = u[j as usize];
            let near = (even(u, j + 1) - c) + (even(u, j - 1) - c);
            let far = (even(u, j + 2) - c) + (even(u, j - 2) - c);
            (sixteen * near - far) * scale
        })
        .collect();
    (du, d2u)
}

/// Pointwise geometry of a graph: gradient quantities, principal
/// curvatures, mean curvature and the umbilicity deficit against `ϑ′/ϑ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ShapeData<T> {
    pub du: Vec<T>,
    pub phi1: Vec<T>,
    pub v: Vec<T>,
    pub grad2: Vec<T>,
    pub kappa_rad: Vec<T>,
    pub kappa_tan: Vec<T>,
    pub h: Vec<T>,
    pub deficit: Vec<T>,
}

impl<T: Real> ShapeData<T> {
    fn with_capacity(len: usize) -> Self {
        Self {
            du: Vec::with_capacity(len),
            phi1: Vec::with_capacity(len),
            v: Vec::with_capacity(len),
            grad2: Vec::with_capacity(len),
            kappa_rad: Vec::with_capacity(len),
            kappa_tan: Vec::with_capacity(len),
            h: Vec::with_capacity(len),
            deficit: Vec::with_capacity(len),
        }
    }

    pub fn min_h(&self) -> T {
        self.h.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max_h(&self) -> T {
        self.h.iter().copied().fold(T::neg_infinity(), T::max)
    }

    /// False when `H ≤ 0` at some node.
    pub fn is_mean_convex(&self) -> bool {
        self.h.iter().all(|h| *h > T::zero())
    }

    #[allow(clippy::too_many_arguments)]
    fn push(&mut self, du: T, phi1: T, v: T, kr: T, kt: T, n: usize, slice: T) {
        self.du.push(du);
        self.phi1.push(phi1);
        self.v.push(v);
        self.grad2.push(phi1 * phi1);
        self.kappa_rad.push(kr);
        self.kappa_tan.push(kt);
        self.h.push(kr + lit::<T>((n - 1) as f64) * kt);
        self.deficit
            .push((kr - slice).abs().max((kt - slice).abs()));
    }
}

/// Principal curvatures from the φ-form of the second fundamental form,
/// `φ = ∫ ϑ⁻¹ du`.
pub fn shape_operator<T: Real>(
    grid: &SphereGrid<T>,
    profile: &WarpingProfile<T>,
    state: &GraphState<T>,
) -> ShapeData<T> {
    let (du, d2u) = derivatives(grid, &state.u);
    let mut out = ShapeData::with_capacity(grid.len());
    for j in 0..grid.len() {
        let w = profile.eval(state.u[j]);
        let phi1 = du[j] / w.theta;
        let phi2 = d2u[j] / w.theta - w.d1 * phi1 * phi1;
        let v2 = T::one() + phi1 * phi1;
        let v = v2.sqrt();
        let denom = v * w.theta;
        let kr = (w.d1 - phi2 / v2) / denom;
        let angular = if grid.is_pole(j) {
            phi2
        } else {
            phi1 / grid.chi[j].tan()
        };
        let kt = (w.d1 - angular) / denom;
        out.push(du[j], phi1, v, kr, kt, grid.n, w.d1 / w.theta);
    }
    out
}

/// Independent route to the same [`ShapeData`]: the round-metric Hessian of
/// `u` (second derivative taken as the derivative of `u′`) is converted to
/// the induced-metric Hessian, inserted into `h_ij = v(−u_ij + h̄_ij)`, and
/// the index is raised with the induced metric.
pub fn shape_operator_alt<T: Real>(
    grid: &SphereGrid<T>,
    profile: &WarpingProfile<T>,
    state: &GraphState<T>,
) -> ShapeData<T> {
    let (du, d2u) = composed_derivatives(grid, &state.u);
    let mut out = ShapeData::with_capacity(grid.len());
    for j in 0..grid.len() {
        let w = profile.eval(state.u[j]);
        let th2 = w.theta * w.theta;
        let grad2 = du[j] * du[j] / th2;
        let v2 = T::one() + grad2;
        let v = v2.sqrt();
        let slope = w.d1 / w.theta;
        // σ-Hessian: u″ along χ, cot χ·u′ per unit round metric across.
        let hess_rad = d2u[j];
        let hess_tan = if grid.is_pole(j) {
            d2u[j]
        } else {
            du[j] / grid.chi[j].tan()
        };
        let two: T = lit(2.0);
        let induced_rad = (hess_rad - slope * (two * du[j] * du[j] - th2 * grad2)) / v2;
        let induced_tan = (hess_tan + slope * th2 * grad2) / v2;
        let slice = w.d1 * w.theta;
        let h_rad = v * (slice - induced_rad);
        let h_tan = v * (slice - induced_tan);
        let kr = h_rad / (th2 * v2);
        let kt = h_tan / th2;
        out.push(du[j], du[j] / w.theta, v, kr, kt, grid.n, slope);
    }
    out
}

/// `(max deficit, max ϑ′(u)·deficit)` over the nodes.
pub fn umbilicity_deficit<T: Real>(
    shape: &ShapeData<T>,
    profile: &WarpingProfile<T>,
    state: &GraphState<T>,
) -> (T, T) {
    shape
        .deficit
        .iter()
        .zip(&state.u)
        .fold((T::zero(), T::zero()), |(s, w), (d, u)| {
            (s.max(*d), w.max(profile.eval(*u).d1 * *d))
        })
}

/// Geodesic sphere of radius `rho` in the space of curvature `−k`, centered
/// at distance `d` from the origin in the direction `χ = π`, as a graph.
pub fn off_center_hyperbolic_sphere<T: Real>(
    grid: &SphereGrid<T>,
    k: T,
    rho: T,
    d: T,
) -> Result<GraphState<T>, SurfaceError> {
    if !(rho > d && d >= T::zero() && k > T::zero()) {
        return Err(SurfaceError::InitialData(format!(
            "need rho > d >= 0 and k > 0 (rho = {rho}, d = {d})"
        )));
    }
    if d == T::zero() {
        return Ok(GraphState::round(grid, rho));
    }
    let a = k.sqrt();
    let (cd, sd, cr) = ((a * d).cosh(), (a * d).sinh(), (a * rho).cosh());
    let mut u = Vec::with_capacity(grid.len());
    for &chi in &grid.chi {
        let c = chi.cos();
        let f = |x: T| cd * x.cosh() + sd * x.sinh() * c - cr;
        let df = |x: T| cd * x.sinh() + sd * x.cosh() * c;
        let (mut lo, mut hi) = (a * (rho - d), a * (rho + d));
        if f(lo) > T::zero() || f(hi) < T::zero() {
            // endpoints are exact roots on the axis; accept within roundoff
            let tol = T::epsilon() * lit(64.0) * cr;
            if f(lo).abs() <= tol {
                u.push(lo / a);
                continue;
            }
            if f(hi).abs() <= tol {
                u.push(hi / a);
                continue;
            }
            return Err(SurfaceError::NoRoot { chi: to_f64(chi) });
        }
        let mut x = (lo + hi) * lit(0.5);
        for _ in 0..200 {
            let fx = f(x);
            if fx > T::zero() {
                hi = x;
            } else {
                lo = x;
            }
            let mut next = x - fx / df(x);
            if !(next >= lo && next <= hi) {
                next = (lo + hi) * lit(0.5);
            }
            if (next - x).abs() <= T::epsilon() * lit(4.0) * next.abs() {
                x = next;
                break;
            }
            x = next;
        }
        u.push(x / a);
    }
    Ok(GraphState::new(T::zero(), u))
}

/// Euclidean sphere of radius `radius` centered at distance `d` along `χ = 0`.
pub fn off_center_euclidean_sphere<T: Real>(
    grid: &SphereGrid<T>,
    radius: T,
    d: T,
) -> GraphState<T> {
    let u = grid
        .chi
        .iter()
        .map(|&chi| {
            let s = chi.sin();
            d * chi.cos() + (radius * radius - d * d * s * s).sqrt()
        })
        .collect();
    GraphState::new(T::zero(), u)
}

/// Legendre polynomial `P_l(x)` by the three-term recurrence.
pub fn legendre<T: Real>(l: usize, x: T) -> T {
    let (mut p0, mut p1) = (T::one(), x);
    if l == 0 {
        return p0;
    }
    for k in 1..l {
        let kf: T = lit(k as f64);
        let p2 = ((kf + kf + T::one()) * x * p1 - kf * p0) / (kf + T::one());
        p0 = p1;
        p1 = p2;
    }
    p1
}

/// Named initial data understood by the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitialData {
    Round { r0: f64 },
    Legendre { r0: f64, eps: f64, l: usize },
    OffcenterHyp { rho: f64, d: f64 },
    FromCsv { path: PathBuf },
}

impl InitialData {
    /// Parses `round(r0)`, `legendre(r0, eps, l)`, `offcenter_hyp(rho, d)`
    /// or `from_csv(path)`.
    pub fn parse(text: &str) -> Result<Self, SurfaceError> {
        let text = text.trim();
        let bad = || SurfaceError::InitialData(format!("cannot parse {text:?}"));
        let open = text.find('(').ok_or_else(bad)?;
        if !text.ends_with(')') {
            return Err(bad());
        }
        let name = text[..open].trim();
        let inner = &text[open + 1..text.len() - 1];
        if name == "from_csv" {
            let path = inner.trim().trim_matches('"');
            return Ok(InitialData::FromCsv {
                path: PathBuf::from(path),
            });
        }
        let args: Vec<f64> = inner
            .split(',')
            .map(|a| a.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|_| bad())?;
        match (name, args.as_slice()) {
            ("round", [r0]) => Ok(InitialData::Round { r0: *r0 }),
            ("legendre", [r0, eps, l]) if *l >= 0.0 && l.fract() == 0.0 => {
                Ok(InitialData::Legendre {
                    r0: *r0,
                    eps: *eps,
                    l: *l as usize,
                })
            }
            ("offcenter_hyp", [rho, d]) => Ok(InitialData::OffcenterHyp { rho: *rho, d: *d }),
            _ => Err(bad()),
        }
    }

    /// Textual form accepted by [`InitialData::parse`].
    pub fn describe(&self) -> String {
        match self {
            InitialData::Round { r0 } => format!("round({r0})"),
            InitialData::Legendre { r0, eps, l } => format!("legendre({r0}, {eps}, {l})"),
            InitialData::OffcenterHyp { rho, d } => format!("offcenter_hyp({rho}, {d})"),
            InitialData::FromCsv { path } => format!("from_csv({})", path.display()),
        }
    }

    pub fn build<T: Real>(
        &self,
        grid: &SphereGrid<T>,
        profile: &WarpingProfile<T>,
    ) -> Result<GraphState<T>, SurfaceError> {
        let state = match self {
            InitialData::Round { r0 } => GraphState::round(grid, lit(*r0)),
            InitialData::Legendre { r0, eps, l } => {
                let (r0, eps): (T, T) = (lit(*r0), lit(*eps));
                let u = grid
                    .chi
                    .iter()
                    .map(|c| r0 + eps * legendre(*l, c.cos()))
                    .collect();
                GraphState::new(T::zero(), u)
            }
            InitialData::OffcenterHyp { rho, d } => {
                let k = match profile.spec().family {
                    Family::Hyperbolic { k } => k,
                    _ => 1.0,
                };
                off_center_hyperbolic_sphere(grid, lit(k), lit(*rho), lit(*d))?
            }
            InitialData::FromCsv { path } => read_state_csv(grid, path)?,
        };
        for (node, u) in state.u.iter().enumerate() {
            if !profile.contains(*u) {
                return Err(SurfaceError::OutOfDomain {
                    node,
                    u: to_f64(*u),
                });
            }
        }
        Ok(state)
    }
}

/// Reads a `chi,u` table whose rows coincide with the grid nodes.
pub fn read_state_csv<T: Real>(
    grid: &SphereGrid<T>,
    path: &Path,
) -> Result<GraphState<T>, SurfaceError> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)?;
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_owned).collect();
    if header != ["chi", "u"] {
        return Err(SurfaceError::InitialData(format!(
            "expected header chi,u, found {}",
            header.join(",")
        )));
    }
    let mut u = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let parse = |k: usize| -> Result<f64, SurfaceError> {
            rec.get(k)
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| SurfaceError::InitialData(format!("row {}: bad value", i + 1)))
        };
        let (chi, val) = (parse(0)?, parse(1)?);
        if i < grid.len() && (chi - to_f64(grid.chi[i])).abs() > 1e-9 {
            return Err(SurfaceError::InitialData(format!(
                "row {}: chi = {chi} is not a grid node",
                i + 1
            )));
        }
        u.push(lit(val));
    }
    if u.len() != grid.len() {
        return Err(SurfaceError::InitialData(format!(
            "{} rows for a grid with {} nodes",
            u.len(),
            grid.len()
        )));
    }
    Ok(GraphState::new(T::zero(), u))
}
