//! First-order finite-volume solvers with local Lax-Friedrichs fluxes.
//!
//! Cells hold averages of `(ρ, ρw, ρσ)`. One explicit Euler step reads
//!
//! ```text
//! Q⁺_ij = Q_ij − Δt/Δx·(F_{i+½,j} − F_{i−½,j}) − Δt/Δy·(G_{i,j+½} − G_{i,j−½})
//! ```
//!
//! with piecewise-constant reconstruction. The x-boundaries are zero-gradient
//! (or periodic on request); the y-boundaries are walls that carry no flux.

use thiserror::Error;

use crate::model::{
    conserved_to_primitive, flux_from_recovered, max_wave_speed, Axis, ConservedState, ModelError, ModelParams,
    PrimitiveState, Recovered,
};

/// Default Courant number.
pub const DEFAULT_CFL: f64 = 0.45;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FvmError {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("numerical failure in cell ({i}, {j}) at t = {time}")]
    NumericalFailure { i: usize, j: usize, time: f64 },
    #[error("time step {dt} exceeds the stability bound {bound}")]
    StepTooLarge { dt: f64, bound: f64 },
    #[error("cfl number {0} outside (0, 1)")]
    InvalidCfl(f64),
    #[error("invalid run request: {0}")]
    InvalidRun(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid2D {
    pub nx: usize,
    pub ny: usize,
    pub ax: f64,
    pub bx: f64,
    pub ay: f64,
    pub by: f64,
    pub dx: f64,
    pub dy: f64,
}

impl Grid2D {
    pub fn new(nx: usize, ny: usize, ax: f64, bx: f64, ay: f64, by: f64) -> Result<Self, FvmError> {
        if nx == 0 || ny == 0 {
            return Err(FvmError::InvalidGrid(format!("cell counts must be >= 1, got {nx} x {ny}")));
        }
        if !(ax < bx && ay < by) || ![ax, bx, ay, by].iter().all(|v| v.is_finite()) {
            return Err(FvmError::InvalidGrid(format!("bad extents [{ax}, {bx}] x [{ay}, {by}]")));
        }
        Ok(Grid2D { nx, ny, ax, bx, ay, by, dx: (bx - ax) / nx as f64, dy: (by - ay) / ny as f64 })
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }

    pub fn x_center(&self, i: usize) -> f64 {
        self.ax + (i as f64 + 0.5) * self.dx
    }

    pub fn y_center(&self, j: usize) -> f64 {
        self.ay + (j as f64 + 0.5) * self.dy
    }

    /// Cell containing `(x, y)`; points on the upper boundary belong to the last cell.
    pub fn locate(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        if !(x >= self.ax && x <= self.bx && y >= self.ay && y <= self.by) {
            return None;
        }
        let i = (((x - self.ax) / self.dx) as usize).min(self.nx - 1);
        let j = (((y - self.ay) / self.dy) as usize).min(self.ny - 1);
        Some((i, j))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum XBoundary {
    /// Zero-gradient: ghost cells copy the first/last column.
    Outflow,
    Periodic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum YBoundary {
    /// No lateral flux through the road edges.
    Wall,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Dissipation {
    /// `α` is the larger of the two adjacent cells' maximal wave speeds.
    #[default]
    Local,
    /// `α` is the maximal wave speed over the whole field, per axis.
    Global,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SchemeOptions {
    pub cfl: f64,
    pub dissipation: Dissipation,
}

impl Default for SchemeOptions {
    fn default() -> Self {
        SchemeOptions { cfl: DEFAULT_CFL, dissipation: Dissipation::Local }
    }
}

/// Regularization and bookkeeping counters of a solver run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct EventCounters {
    pub steps: u64,
    /// Updated cells with a nonzero state and density below `rho_floor`. Their
    /// values are kept; the recovery treats them as vacuum.
    pub floor_events: u64,
    /// Cells whose recovered longitudinal speed was negative.
    pub u_clamps: u64,
}

impl std::ops::AddAssign for EventCounters {
    fn add_assign(&mut self, rhs: Self) {
        self.steps += rhs.steps;
        self.floor_events += rhs.floor_events;
        self.u_clamps += rhs.u_clamps;
    }
}

#[inline]
fn llf_combine<const N: usize>(ql: &[f64; N], qr: &[f64; N], fl: &[f64; N], fr: &[f64; N], alpha: f64) -> [f64; N] {
    let mut out = [0.0; N];
    for k in 0..N {
        out[k] = 0.5 * (fl[k] + fr[k]) - 0.5 * alpha * (qr[k] - ql[k]);
    }
    out
}

/// Local Lax-Friedrichs flux `½(f(QL) + f(QR)) − ½·α·(QR − QL)`.
pub fn llf_flux(
    ql: &ConservedState,
    qr: &ConservedState,
    axis: Axis,
    params: &ModelParams,
) -> Result<[f64; 3], FvmError> {
    let (rl, rr) = (conserved_to_primitive(ql, params)?, conserved_to_primitive(qr, params)?);
    let dir = axis.direction();
    let alpha = max_wave_speed(&rl.state, dir, params).max(max_wave_speed(&rr.state, dir, params));
    let fl = flux_from_recovered(ql, &rl, axis);
    let fr = flux_from_recovered(qr, &rr, axis);
    Ok(llf_combine(&ql.as_array(), &qr.as_array(), &fl, &fr, alpha))
}

/// Neumaier-compensated sum.
pub(crate) fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field2D {
    pub grid: Grid2D,
    /// Row-major by `j`, then `i`.
    pub cells: Vec<ConservedState>,
    pub bc_x: XBoundary,
    pub bc_y: YBoundary,
    pub time: f64,
}

/// Per-cell quantities evaluated once per step.
struct CellCache {
    flux_x: Vec<[f64; 3]>,
    flux_y: Vec<[f64; 3]>,
    alpha_x: Vec<f64>,
    alpha_y: Vec<f64>,
    u_clamps: u64,
}

impl Field2D {
    pub fn uniform(grid: Grid2D, q: ConservedState) -> Self {
        Field2D { grid, cells: vec![q; grid.nx * grid.ny], bc_x: XBoundary::Outflow, bc_y: YBoundary::Wall, time: 0.0 }
    }

    pub fn from_fn(grid: Grid2D, mut f: impl FnMut(f64, f64) -> ConservedState) -> Self {
        let mut cells = Vec::with_capacity(grid.nx * grid.ny);
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                cells.push(f(grid.x_center(i), grid.y_center(j)));
            }
        }
        Field2D { grid, cells, bc_x: XBoundary::Outflow, bc_y: YBoundary::Wall, time: 0.0 }
    }

    pub fn cell(&self, i: usize, j: usize) -> &ConservedState {
        &self.cells[self.grid.index(i, j)]
    }

    /// `(Σρ, Σρw, Σρσ)·Δx·Δy`.
    pub fn totals(&self) -> [f64; 3] {
        let area = self.grid.dx * self.grid.dy;
        [
            compensated_sum(self.cells.iter().map(|q| q.rho)) * area,
            compensated_sum(self.cells.iter().map(|q| q.rho_w)) * area,
            compensated_sum(self.cells.iter().map(|q| q.rho_sigma)) * area,
        ]
    }

    pub fn primitives(&self, params: &ModelParams) -> Result<Vec<Recovered>, FvmError> {
        self.cells.iter().map(|q| Ok(conserved_to_primitive(q, params)?)).collect()
    }

    fn cache(&self, params: &ModelParams) -> Result<CellCache, FvmError> {
        let n = self.cells.len();
        let mut c = CellCache {
            flux_x: Vec::with_capacity(n),
            flux_y: Vec::with_capacity(n),
            alpha_x: Vec::with_capacity(n),
            alpha_y: Vec::with_capacity(n),
            u_clamps: 0,
        };
        for q in &self.cells {
            let rec = conserved_to_primitive(q, params)?;
            c.u_clamps += rec.u_clamped as u64;
            c.flux_x.push(flux_from_recovered(q, &rec, Axis::X));
            c.flux_y.push(flux_from_recovered(q, &rec, Axis::Y));
            c.alpha_x.push(max_wave_speed(&rec.state, Axis::X.direction(), params));
            c.alpha_y.push(max_wave_speed(&rec.state, Axis::Y.direction(), params));
        }
        Ok(c)
    }

    /// Neighbor indices across the x-faces of column `i`, after applying `bc_x`.
    fn x_neighbors(&self, i: usize) -> (usize, usize) {
        let nx = self.grid.nx;
        match self.bc_x {
            XBoundary::Outflow => (i.saturating_sub(1), (i + 1).min(nx - 1)),
            XBoundary::Periodic => ((i + nx - 1) % nx, (i + 1) % nx),
        }
    }

    /// Bilinear interpolation of `(ρ, ρu, ρv)` between cell centers.
    /// Within half a cell of the boundary the nearest center row/column is used.
    pub fn sample_bilinear(&self, x: f64, y: f64, params: &ModelParams) -> Result<Option<[f64; 3]>, FvmError> {
        let g = &self.grid;
        if !(x >= g.ax && x <= g.bx && y >= g.ay && y <= g.by) {
            return Ok(None);
        }
        let (i0, i1, tx) = bracket(x, g.ax, g.dx, g.nx);
        let (j0, j1, ty) = bracket(y, g.ay, g.dy, g.ny);
        let value = |i: usize, j: usize| -> Result<[f64; 3], FvmError> {
            let q = self.cell(i, j);
            let rec = conserved_to_primitive(q, params)?;
            let (u, v) = if rec.vacuum { (0.0, 0.0) } else { (rec.state.u, rec.state.v) };
            Ok([q.rho, q.rho * u, q.rho * v])
        };
        let (a, b, c, d) = (value(i0, j0)?, value(i1, j0)?, value(i0, j1)?, value(i1, j1)?);
        let mut out = [0.0; 3];
        for k in 0..3 {
            let lo = a[k] + tx * (b[k] - a[k]);
            let hi = c[k] + tx * (d[k] - c[k]);
            out[k] = lo + ty * (hi - lo);
        }
        Ok(Some(out))
    }
}

/// Lower/upper center indices around `s` and the interpolation weight.
fn bracket(s: f64, a: f64, h: f64, n: usize) -> (usize, usize, f64) {
    let pos = (s - a) / h - 0.5;
    if pos <= 0.0 {
        return (0, 0, 0.0);
    }
    let last = (n - 1) as f64;
    if pos >= last {
        return (n - 1, n - 1, 0.0);
    }
    let lo = pos.floor() as usize;
    (lo, lo + 1, pos - lo as f64)
}

/// Ghost-extended copy of a field: one ghost column on each x-side and one
/// ghost row on each y-side. The wall rows mirror the interior state but are
/// never used for fluxes: wall faces carry exactly zero flux.
#[derive(Debug, Clone, PartialEq)]
pub struct GhostView {
    pub nx: usize,
    pub ny: usize,
    /// `(nx + 2) × (ny + 2)` cells, row-major.
    pub cells: Vec<ConservedState>,
}

impl GhostView {
    pub fn get(&self, i: isize, j: isize) -> &ConservedState {
        &self.cells[((j + 1) as usize) * (self.nx + 2) + (i + 1) as usize]
    }
}

pub fn apply_boundaries(field: &Field2D) -> GhostView {
    let (nx, ny) = (field.grid.nx, field.grid.ny);
    let mut cells = Vec::with_capacity((nx + 2) * (ny + 2));
    for jj in 0..ny + 2 {
        let j = jj.saturating_sub(1).min(ny - 1);
        for ii in 0..nx + 2 {
            let i = match (ii, field.bc_x) {
                (0, XBoundary::Outflow) => 0,
                (0, XBoundary::Periodic) => nx - 1,
                (k, XBoundary::Outflow) if k == nx + 1 => nx - 1,
                (k, XBoundary::Periodic) if k == nx + 1 => 0,
                (k, _) => k - 1,
            };
            cells.push(*field.cell(i, j));
        }
    }
    GhostView { nx, ny, cells }
}

/// `Δt = cfl / (max α_x/Δx + max α_y/Δy)`; falls back to `cfl·min(Δx, Δy)/U_ref`
/// when every wave speed vanishes.
pub fn cfl_dt(field: &Field2D, cfl: f64, params: &ModelParams) -> Result<f64, FvmError> {
    if !(cfl > 0.0 && cfl <= 1.0) {
        return Err(FvmError::InvalidCfl(cfl));
    }
    let (mut ax, mut ay) = (0.0f64, 0.0f64);
    for q in &field.cells {
        let rec = conserved_to_primitive(q, params)?;
        ax = ax.max(max_wave_speed(&rec.state, Axis::X.direction(), params));
        ay = ay.max(max_wave_speed(&rec.state, Axis::Y.direction(), params));
    }
    Ok(dt_from_speeds(ax, ay, field.grid.dx, field.grid.dy, cfl, params))
}

fn dt_from_speeds(ax: f64, ay: f64, dx: f64, dy: f64, cfl: f64, params: &ModelParams) -> f64 {
    let rate = ax / dx + ay / dy;
    if rate > 0.0 {
        cfl / rate
    } else {
        cfl * dx.min(dy) / params.u_ref
    }
}

fn check_step(dt: f64, bound: f64) -> Result<(), FvmError> {
    if !(dt >= 0.0) || dt > bound * (1.0 + 1e-12) {
        return Err(FvmError::StepTooLarge { dt, bound });
    }
    Ok(())
}

/// A nonzero cell below the density floor. It carries no physical flux but
/// keeps its conserved values, so totals are unaffected.
fn below_floor(q: &[f64], params: &ModelParams) -> bool {
    q[0] < params.rho_floor && q.iter().any(|&c| c != 0.0)
}

/// One explicit Euler step of the 2D scheme.
pub fn step_2d(
    field: &Field2D,
    dt: f64,
    params: &ModelParams,
    dissipation: Dissipation,
) -> Result<(Field2D, EventCounters), FvmError> {
    let g = field.grid;
    let (nx, ny) = (g.nx, g.ny);
    let cache = field.cache(params)?;
    let (gax, gay) = (
        cache.alpha_x.iter().copied().fold(0.0, f64::max),
        cache.alpha_y.iter().copied().fold(0.0, f64::max),
    );
    check_step(dt, dt_from_speeds(gax, gay, g.dx, g.dy, 1.0, params))?;

    let q: Vec<[f64; 3]> = field.cells.iter().map(|c| c.as_array()).collect();
    let alpha_x = |l: usize, r: usize| match dissipation {
        Dissipation::Local => cache.alpha_x[l].max(cache.alpha_x[r]),
        Dissipation::Global => gax,
    };
    let alpha_y = |l: usize, r: usize| match dissipation {
        Dissipation::Local => cache.alpha_y[l].max(cache.alpha_y[r]),
        Dissipation::Global => gay,
    };

    // x-faces: face i sits on the left of column i, face nx on the right of the last column
    let mut fx = vec![[0.0; 3]; (nx + 1) * ny];
    for j in 0..ny {
        for face in 0..=nx {
            let (l, r) = if face == 0 {
                (g.index(field.x_neighbors(0).0, j), g.index(0, j))
            } else if face == nx {
                (g.index(nx - 1, j), g.index(field.x_neighbors(nx - 1).1, j))
            } else {
                (g.index(face - 1, j), g.index(face, j))
            };
            fx[j * (nx + 1) + face] = llf_combine(&q[l], &q[r], &cache.flux_x[l], &cache.flux_x[r], alpha_x(l, r));
        }
    }
    // y-faces: faces 0 and ny are walls
    let mut gy = vec![[0.0; 3]; nx * (ny + 1)];
    for face in 1..ny {
        for i in 0..nx {
            let (l, r) = (g.index(i, face - 1), g.index(i, face));
            gy[face * nx + i] = llf_combine(&q[l], &q[r], &cache.flux_y[l], &cache.flux_y[r], alpha_y(l, r));
        }
    }

    let (lx, ly) = (dt / g.dx, dt / g.dy);
    let mut events = EventCounters { steps: 1, floor_events: 0, u_clamps: cache.u_clamps };
    let mut cells = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let k = g.index(i, j);
            let (fl, fr) = (&fx[j * (nx + 1) + i], &fx[j * (nx + 1) + i + 1]);
            let (gl, gr) = (&gy[j * nx + i], &gy[(j + 1) * nx + i]);
            let mut out = [0.0; 3];
            for c in 0..3 {
                out[c] = q[k][c] - lx * (fr[c] - fl[c]) - ly * (gr[c] - gl[c]);
            }
            if out.iter().any(|v| !v.is_finite()) {
                return Err(FvmError::NumericalFailure { i, j, time: field.time });
            }
            events.floor_events += below_floor(&out, params) as u64;
            cells.push(ConservedState::from_array(out));
        }
    }
    let next = Field2D { grid: g, cells, bc_x: field.bc_x, bc_y: field.bc_y, time: field.time + dt };
    Ok((next, events))
}

/// Conserved vector `(ρ, ρw)` of the one-dimensional model.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Conserved1D {
    pub rho: f64,
    pub rho_w: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Field1D {
    pub ax: f64,
    pub dx: f64,
    pub cells: Vec<Conserved1D>,
    pub bc: XBoundary,
    pub time: f64,
}

impl Field1D {
    pub fn from_fn(nx: usize, ax: f64, bx: f64, mut f: impl FnMut(f64) -> Conserved1D) -> Result<Self, FvmError> {
        if nx == 0 || !(ax < bx) {
            return Err(FvmError::InvalidGrid(format!("bad 1D grid: {nx} cells on [{ax}, {bx}]")));
        }
        let dx = (bx - ax) / nx as f64;
        let cells = (0..nx).map(|i| f(ax + (i as f64 + 0.5) * dx)).collect();
        Ok(Field1D { ax, dx, cells, bc: XBoundary::Outflow, time: 0.0 })
    }

    pub fn nx(&self) -> usize {
        self.cells.len()
    }

    pub fn x_center(&self, i: usize) -> f64 {
        self.ax + (i as f64 + 0.5) * self.dx
    }

    pub fn total_mass(&self) -> f64 {
        compensated_sum(self.cells.iter().map(|c| c.rho)) * self.dx
    }

    /// `(ρ, u)` per cell.
    pub fn primitives(&self, params: &ModelParams) -> Vec<(f64, f64)> {
        self.cells.iter().map(|c| recover_1d(c, params).0).map(|s| (s.rho, s.u)).collect()
    }

    /// Piecewise-linear density between cell centers, constant within half a
    /// cell of the boundary. `None` outside the domain.
    pub fn density_at(&self, x: f64) -> Option<f64> {
        let bx = self.ax + self.dx * self.nx() as f64;
        if !(x >= self.ax && x <= bx) {
            return None;
        }
        let (i0, i1, t) = bracket(x, self.ax, self.dx, self.nx());
        Some(self.cells[i0].rho + t * (self.cells[i1].rho - self.cells[i0].rho))
    }
}

/// Returns the recovered state (with `v = 0`), the vacuum flag and the clamp flag.
fn recover_1d(c: &Conserved1D, params: &ModelParams) -> (PrimitiveState, bool, bool) {
    if c.rho < params.rho_floor {
        return (PrimitiveState::new(params.rho_floor, 0.0, 0.0), true, false);
    }
    let u = c.rho_w / c.rho - params.p1(c.rho);
    let clamped = u < 0.0;
    (PrimitiveState::new(c.rho, if clamped { 0.0 } else { u }, 0.0), false, clamped)
}

/// One explicit Euler step of the 1D scheme. Uses the same flux, dissipation
/// speed and update arithmetic as [`step_2d`] restricted to the x-direction.
pub fn step_1d(
    field: &Field1D,
    dt: f64,
    params: &ModelParams,
    dissipation: Dissipation,
) -> Result<(Field1D, EventCounters), FvmError> {
    let nx = field.nx();
    let mut flux = Vec::with_capacity(nx);
    let mut alpha = Vec::with_capacity(nx);
    let mut events = EventCounters { steps: 1, ..Default::default() };
    for c in &field.cells {
        if !(c.rho.is_finite() && c.rho_w.is_finite()) {
            return Err(ModelError::InvalidState(format!("non-finite 1D state {c:?}")).into());
        }
        let (state, vacuum, clamped) = recover_1d(c, params);
        events.u_clamps += clamped as u64;
        let u = if vacuum { 0.0 } else { state.u };
        flux.push([c.rho * u, c.rho_w * u]);
        alpha.push(max_wave_speed(&state, Axis::X.direction(), params));
    }
    let global = alpha.iter().copied().fold(0.0, f64::max);
    check_step(dt, dt_from_speeds(global, 0.0, field.dx, 1.0, 1.0, params))?;

    let q: Vec<[f64; 2]> = field.cells.iter().map(|c| [c.rho, c.rho_w]).collect();
    let neighbor = |k: isize| -> usize {
        match field.bc {
            XBoundary::Outflow => k.clamp(0, nx as isize - 1) as usize,
            XBoundary::Periodic => k.rem_euclid(nx as isize) as usize,
        }
    };
    let faces: Vec<[f64; 2]> = (0..=nx)
        .map(|face| {
            let (l, r) = (neighbor(face as isize - 1), neighbor(face as isize));
            let a = match dissipation {
                Dissipation::Local => alpha[l].max(alpha[r]),
                Dissipation::Global => global,
            };
            llf_combine(&q[l], &q[r], &flux[l], &flux[r], a)
        })
        .collect();

    let lx = dt / field.dx;
    let mut cells = Vec::with_capacity(nx);
    for i in 0..nx {
        let mut out = [0.0; 2];
        for c in 0..2 {
            out[c] = q[i][c] - lx * (faces[i + 1][c] - faces[i][c]);
        }
        if out.iter().any(|v| !v.is_finite()) {
            return Err(FvmError::NumericalFailure { i, j: 0, time: field.time });
        }
        events.floor_events += below_floor(&out, params) as u64;
        cells.push(Conserved1D { rho: out[0], rho_w: out[1] });
    }
    Ok((Field1D { ax: field.ax, dx: field.dx, cells, bc: field.bc, time: field.time + dt }, events))
}

/// Common interface of the 1D and 2D solvers for [`run`].
pub trait FvField: Clone {
    fn time(&self) -> f64;
    fn set_time(&mut self, t: f64);
    fn stable_dt(&self, cfl: f64, params: &ModelParams) -> Result<f64, FvmError>;
    fn advance(&self, dt: f64, params: &ModelParams, dissipation: Dissipation) -> Result<(Self, EventCounters), FvmError>;
}

impl FvField for Field2D {
    fn time(&self) -> f64 {
        self.time
    }

    fn set_time(&mut self, t: f64) {
        self.time = t;
    }

    fn stable_dt(&self, cfl: f64, params: &ModelParams) -> Result<f64, FvmError> {
        cfl_dt(self, cfl, params)
    }

    fn advance(&self, dt: f64, params: &ModelParams, dissipation: Dissipation) -> Result<(Self, EventCounters), FvmError> {
        step_2d(self, dt, params, dissipation)
    }
}

impl FvField for Field1D {
    fn time(&self) -> f64 {
        self.time
    }

    fn set_time(&mut self, t: f64) {
        self.time = t;
    }

    fn stable_dt(&self, cfl: f64, params: &ModelParams) -> Result<f64, FvmError> {
        if !(cfl > 0.0 && cfl <= 1.0) {
            return Err(FvmError::InvalidCfl(cfl));
        }
        let a = self
            .cells
            .iter()
            .map(|c| max_wave_speed(&recover_1d(c, params).0, Axis::X.direction(), params))
            .fold(0.0, f64::max);
        Ok(dt_from_speeds(a, 0.0, self.dx, 1.0, cfl, params))
    }

    fn advance(&self, dt: f64, params: &ModelParams, dissipation: Dissipation) -> Result<(Self, EventCounters), FvmError> {
        step_1d(self, dt, params, dissipation)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput<F> {
    /// Snapshots in time order; the last one is at `t_final`.
    pub snapshots: Vec<F>,
    pub events: EventCounters,
}

/// Advances `field` to the absolute time `t_final` with CFL-limited steps,
/// truncating steps so that every snapshot time is hit exactly.
pub fn run<F: FvField>(
    field: &F,
    t_final: f64,
    snapshot_times: &[f64],
    params: &ModelParams,
    options: &SchemeOptions,
) -> Result<RunOutput<F>, FvmError> {
    if !(options.cfl > 0.0 && options.cfl < 1.0) {
        return Err(FvmError::InvalidCfl(options.cfl));
    }
    let t0 = field.time();
    if !(t_final >= t0) || !t_final.is_finite() {
        return Err(FvmError::InvalidRun(format!("final time {t_final} precedes start time {t0}")));
    }
    let mut targets: Vec<f64> = snapshot_times.iter().copied().filter(|&t| t >= t0 && t < t_final).collect();
    targets.sort_by(f64::total_cmp);
    targets.dedup();
    targets.push(t_final);

    let mut current = field.clone();
    let mut events = EventCounters::default();
    let mut snapshots = Vec::with_capacity(targets.len());
    for target in targets {
        while current.time() < target {
            let mut dt = current.stable_dt(options.cfl, params)?;
            let landing = current.time() + dt >= target;
            if landing {
                dt = target - current.time();
            }
            let (next, ev) = current.advance(dt, params, options.dissipation)?;
            events += ev;
            current = next;
            if landing {
                current.set_time(target);
            }
        }
        snapshots.push(current.clone());
    }
    Ok(RunOutput { snapshots, events })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::primitive_to_conserved;

    fn params() -> ModelParams {
        ModelParams::default()
    }

    fn q(rho: f64, u: f64, v: f64) -> ConservedState {
        primitive_to_conserved(&PrimitiveState::new(rho, u, v), &params()).unwrap()
    }

    #[test]
    fn grid_geometry() {
        let g = Grid2D::new(200, 32, -0.5, 0.5, 0.0, 0.012).unwrap();
        assert_eq!(g.dx, 1.0 / 200.0);
        assert!((g.dy - 0.012 / 32.0).abs() < 1e-18);
        assert_eq!(g.locate(0.5, 0.012), Some((199, 31)));
        assert_eq!(g.locate(0.6, 0.0), None);
        assert!(Grid2D::new(0, 1, 0.0, 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn llf_is_consistent() {
        let p = params();
        for s in [q(0.05, 0.8, 0.001), q(0.6, 0.2, -0.01), ConservedState::VACUUM] {
            for axis in [Axis::X, Axis::Y] {
                assert_eq!(llf_flux(&s, &s, axis, &p).unwrap(), crate::model::physical_flux(&s, axis, &p).unwrap());
            }
        }
        assert_eq!(llf_flux(&ConservedState::VACUUM, &ConservedState::VACUUM, Axis::X, &p).unwrap(), [0.0; 3]);
    }

    #[test]
    fn llf_hand_evaluation() {
        // left (0.05, 0.8, 0.001), right (0.05, 0.05, 0.001)
        let p = params();
        let (ql, qr) = (q(0.05, 0.8, 0.001), q(0.05, 0.05, 0.001));
        let f = llf_flux(&ql, &qr, Axis::X, &p).unwrap();
        // ρ = 0.05: P1 = 0.05, P2 = 0.00045, σ = 0.00145
        // f_L = (0.04, 0.04·0.85, 0.04·0.00145), f_R = (0.0025, 0.0025·0.1, 0.0025·0.00145)
        // α = max(|−0.05|, 0.75, 0.8, |0.0|, 0.05) = 0.8
        // Q_R − Q_L = (0, 0.05·(0.1 − 0.85), 0)
        let expected = [
            0.5 * (0.04 + 0.0025),
            0.5 * (0.034 + 0.00025) - 0.5 * 0.8 * (0.005 - 0.0425),
            0.5 * (0.04 + 0.0025) * 0.00145,
        ];
        for k in 0..3 {
            assert!((f[k] - expected[k]).abs() < 1e-15, "component {k}: {} vs {}", f[k], expected[k]);
        }
    }

    #[test]
    fn cfl_dt_examples() {
        let p = params();
        let g = Grid2D::new(200, 32, -0.5, 0.5, 0.0, 0.012).unwrap();
        let field = Field2D::uniform(g, q(0.05, 0.8, 0.0));
        let dt = cfl_dt(&field, 0.45, &p).unwrap();
        let ay = 0.009 * 0.05;
        let expected = 0.45 / (0.8 * 200.0 + ay / g.dy);
        assert!((dt - expected).abs() < 1e-15 * expected);

        let fast = Field2D::uniform(g, q(0.05, 1.6, 0.0));
        let slow = Field2D::uniform(g, q(0.05, 0.8, 0.0));
        let p2 = ModelParams { u_ref: 2.0, v_ref: 0.018, ..p };
        let p1 = p;
        // doubling every wave speed halves the step
        let fast_q = primitive_to_conserved(&PrimitiveState::new(0.05, 1.6, 0.0), &p2).unwrap();
        let d1 = cfl_dt(&slow, 0.45, &p1).unwrap();
        let d2 = cfl_dt(&Field2D::uniform(g, fast_q), 0.45, &p2).unwrap();
        assert!((d1 - 2.0 * d2).abs() < 1e-15 * d1);
        assert!(cfl_dt(&fast, 0.45, &p).unwrap() < d1);

        let vac = Field2D::uniform(g, ConservedState::VACUUM);
        let dt = cfl_dt(&vac, 0.45, &p).unwrap();
        assert!(dt > 0.0);
    }

    #[test]
    fn boundaries_copy_or_wrap() {
        let g = Grid2D::new(3, 2, 0.0, 3.0, 0.0, 2.0).unwrap();
        let mut field = Field2D::from_fn(g, |x, y| ConservedState::new(x + 10.0 * y, 0.0, 0.0));
        let view = apply_boundaries(&field);
        assert_eq!(view.get(-1, 0), field.cell(0, 0));
        assert_eq!(view.get(3, 1), field.cell(2, 1));
        assert_eq!(view.get(1, -1), field.cell(1, 0));
        assert_eq!(view.get(1, 2), field.cell(1, 1));
        field.bc_x = XBoundary::Periodic;
        let view = apply_boundaries(&field);
        assert_eq!(view.get(-1, 0), field.cell(2, 0));
        assert_eq!(view.get(3, 1), field.cell(0, 1));
    }

    #[test]
    fn uniform_field_is_fixed_point() {
        let p = params();
        let g = Grid2D::new(20, 8, -0.5, 0.5, 0.0, 0.012).unwrap();
        // v = 0: a lateral drift would pile up against the walls
        let field = Field2D::uniform(g, q(0.3, 0.6, 0.0));
        let dt = cfl_dt(&field, 0.45, &p).unwrap();
        let (next, ev) = step_2d(&field, dt, &p, Dissipation::Local).unwrap();
        for (a, b) in field.cells.iter().zip(&next.cells) {
            for (x, y) in a.as_array().iter().zip(b.as_array()) {
                assert!((x - y).abs() <= 1e-15 * x.abs().max(1e-300));
            }
        }
        assert_eq!(ev.floor_events, 0);
    }

    #[test]
    fn three_cell_hand_step() {
        let p = params();
        let g = Grid2D::new(3, 1, 0.0, 3.0, 0.0, 1.0).unwrap();
        let (a, b) = (q(0.5, 0.4, 0.0), q(0.2, 0.9, 0.0));
        let field = Field2D { cells: vec![a, a, b], ..Field2D::uniform(g, a) };
        let dt = 0.1;
        let (next, _) = step_2d(&field, dt, &p, Dissipation::Local).unwrap();

        let fa = crate::model::physical_flux(&a, Axis::X, &p).unwrap();
        let fb = crate::model::physical_flux(&b, Axis::X, &p).unwrap();
        // α: a → max(0.5, |0.4 − 0.5|, 0.4) = 0.5; b → max(0.2, 0.7, 0.9) = 0.9
        let mid: Vec<f64> = (0..3)
            .map(|k| 0.5 * (fa[k] + fb[k]) - 0.5 * 0.9 * (b.as_array()[k] - a.as_array()[k]))
            .collect();
        for k in 0..3 {
            let c1 = a.as_array()[k] - dt * (mid[k] - fa[k]);
            let c2 = b.as_array()[k] - dt * (fb[k] - mid[k]);
            assert!((next.cells[1].as_array()[k] - c1).abs() < 1e-16);
            assert!((next.cells[2].as_array()[k] - c2).abs() < 1e-16);
            assert!((next.cells[0].as_array()[k] - a.as_array()[k]).abs() < 1e-16);
        }
    }

    #[test]
    fn oversized_step_is_rejected() {
        let p = params();
        let g = Grid2D::new(10, 4, 0.0, 1.0, 0.0, 0.012).unwrap();
        let field = Field2D::uniform(g, q(0.3, 0.6, 0.002));
        let bound = cfl_dt(&field, 1.0, &p).unwrap();
        assert!(matches!(step_2d(&field, 1.5 * bound, &p, Dissipation::Local), Err(FvmError::StepTooLarge { .. })));
    }

    #[test]
    fn non_finite_cell_reports_index() {
        let p = params();
        let g = Grid2D::new(3, 1, 0.0, 3.0, 0.0, 1.0).unwrap();
        let mut field = Field2D::uniform(g, q(0.3, 0.6, 0.0));
        field.cells[1].rho_w = f64::INFINITY;
        assert!(step_2d(&field, 0.01, &p, Dissipation::Local).is_err());
    }

    #[test]
    fn run_zero_time_returns_input() {
        let p = params();
        let g = Grid2D::new(10, 4, 0.0, 1.0, 0.0, 0.012).unwrap();
        let field = Field2D::uniform(g, q(0.3, 0.6, 0.002));
        let out = run(&field, 0.0, &[], &p, &SchemeOptions::default()).unwrap();
        assert_eq!(out.snapshots, vec![field]);
    }

    #[test]
    fn run_lands_on_snapshot_times() {
        let p = params();
        let g = Grid2D::new(40, 4, -0.5, 0.5, 0.0, 0.012).unwrap();
        let field = Field2D::from_fn(g, |x, _| if x < 0.0 { q(0.6, 0.2, 0.0) } else { q(0.1, 0.9, 0.0) });
        let out = run(&field, 0.05, &[0.01, 0.02], &p, &SchemeOptions::default()).unwrap();
        let times: Vec<f64> = out.snapshots.iter().map(|f| f.time).collect();
        assert_eq!(times, vec![0.01, 0.02, 0.05]);
    }

    #[test]
    fn bilinear_sampling_of_uniform_field() {
        let p = params();
        let g = Grid2D::new(5, 4, 0.0, 1.0, 0.0, 0.012).unwrap();
        let field = Field2D::uniform(g, q(0.3, 0.6, 0.002));
        let s = field.sample_bilinear(0.37, 0.005, &p).unwrap().unwrap();
        assert!((s[0] - 0.3).abs() < 1e-15);
        assert!((s[1] - 0.18).abs() < 1e-14);
        assert!((s[2] - 0.0006).abs() < 1e-15);
        assert_eq!(field.sample_bilinear(1.5, 0.0, &p).unwrap(), None);
    }

    #[test]
    fn floor_detection() {
        let p = params();
        assert!(below_floor(&[1e-9, 1e-10, 0.0], &p));
        assert!(!below_floor(&[0.0; 3], &p));
        assert!(!below_floor(&[1e-3, 0.0, 0.0], &p));
    }
}
