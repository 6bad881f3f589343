//! Model constants, state vectors, traffic pressure laws and the analytic
//! eigenstructure of the two-dimensional second-order system
//!
//! ```text
//! ρ_t  + (ρu)_x  + (ρv)_y  = 0
//! (ρw)_t + (ρuw)_x + (ρvw)_y = 0,   w = u + P1(ρ)
//! (ρσ)_t + (ρuσ)_x + (ρvσ)_y = 0,   σ = v + P2(ρ)
//! ```
//!
//! All functions here are pure.

use thiserror::Error;

/// Default vacuum-regularization density.
pub const DEFAULT_RHO_FLOOR: f64 = 1e-8;

/// Distinctness threshold for eigenvalues before eigenvectors are computed.
pub const EIGEN_GAP_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("invalid state: {0}")]
    InvalidState(String),
    #[error("no preimage: pressure {p} with reference speed {ref_speed} and exponent {gamma}")]
    NoPreimage { p: f64, ref_speed: f64, gamma: f64 },
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
}

/// Pressure-law and regularization parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub u_ref: f64,
    pub v_ref: f64,
    pub gamma1: f64,
    pub gamma2: f64,
    pub rho_floor: f64,
    pub rho_max: f64,
}

impl Default for ModelParams {
    fn default() -> Self {
        ModelParams {
            u_ref: 1.0,
            v_ref: 0.009,
            gamma1: 1.0,
            gamma2: 1.0,
            rho_floor: DEFAULT_RHO_FLOOR,
            rho_max: 1.0,
        }
    }
}

/// Non-fatal configuration findings.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamWarning {
    /// `∂ρ(ρP1') = ∂ρ(ρP2')` identically: the first field loses genuine nonlinearity.
    EqualPressureLaws,
}

impl ModelParams {
    pub fn validate(&self) -> Result<Vec<ParamWarning>, ModelError> {
        let all = [self.u_ref, self.v_ref, self.gamma1, self.gamma2, self.rho_floor, self.rho_max];
        if all.iter().any(|x| !x.is_finite()) {
            return Err(ModelError::InvalidParams("non-finite parameter".into()));
        }
        if self.u_ref <= 0.0 {
            return Err(ModelError::InvalidParams(format!("u_ref must be > 0, got {}", self.u_ref)));
        }
        if self.rho_floor <= 0.0 || self.rho_floor >= self.rho_max {
            return Err(ModelError::InvalidParams(format!(
                "need 0 < rho_floor < rho_max, got rho_floor = {}, rho_max = {}",
                self.rho_floor, self.rho_max
            )));
        }
        if self.gamma1 < 0.0 || self.gamma2 < 0.0 {
            return Err(ModelError::InvalidParams("pressure exponents must be >= 0".into()));
        }
        let mut warnings = Vec::new();
        if self.gamma1 == self.gamma2 && self.u_ref == self.v_ref {
            warnings.push(ParamWarning::EqualPressureLaws);
        }
        Ok(warnings)
    }

    pub fn p1(&self, rho: f64) -> f64 {
        pressure_unchecked(rho, self.u_ref, self.gamma1)
    }

    pub fn p2(&self, rho: f64) -> f64 {
        pressure_unchecked(rho, self.v_ref, self.gamma2)
    }

    /// `ρ·P1'(ρ)`
    pub fn rho_dp1(&self, rho: f64) -> f64 {
        rho_dpressure(rho, self.u_ref, self.gamma1)
    }

    /// `ρ·P2'(ρ)`
    pub fn rho_dp2(&self, rho: f64) -> f64 {
        rho_dpressure(rho, self.v_ref, self.gamma2)
    }
}

/// Density and directional speeds `(ρ, u, v)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PrimitiveState {
    pub rho: f64,
    pub u: f64,
    pub v: f64,
}

impl PrimitiveState {
    pub const fn new(rho: f64, u: f64, v: f64) -> Self {
        PrimitiveState { rho, u, v }
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        if !(self.rho.is_finite() && self.u.is_finite() && self.v.is_finite()) {
            return Err(ModelError::InvalidState(format!("non-finite primitive state {self:?}")));
        }
        if self.rho < 0.0 || self.u < 0.0 {
            return Err(ModelError::InvalidState(format!("negative density or speed in {self:?}")));
        }
        Ok(())
    }

    /// Longitudinal desired speed `w = u + P1(ρ)`.
    pub fn w(&self, params: &ModelParams) -> f64 {
        self.u + params.p1(self.rho)
    }

    /// Lateral desired speed `σ = v + P2(ρ)`.
    pub fn sigma(&self, params: &ModelParams) -> f64 {
        self.v + params.p2(self.rho)
    }
}

/// Conserved vector `(ρ, ρw, ρσ)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ConservedState {
    pub rho: f64,
    pub rho_w: f64,
    pub rho_sigma: f64,
}

impl ConservedState {
    pub const VACUUM: ConservedState = ConservedState { rho: 0.0, rho_w: 0.0, rho_sigma: 0.0 };

    pub const fn new(rho: f64, rho_w: f64, rho_sigma: f64) -> Self {
        ConservedState { rho, rho_w, rho_sigma }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.rho, self.rho_w, self.rho_sigma]
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        ConservedState::new(a[0], a[1], a[2])
    }

    pub fn is_finite(&self) -> bool {
        self.rho.is_finite() && self.rho_w.is_finite() && self.rho_sigma.is_finite()
    }
}

/// Unit direction `ξ = (ξ1, ξ2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Direction {
    xi1: f64,
    xi2: f64,
}

impl Direction {
    pub const X: Direction = Direction { xi1: 1.0, xi2: 0.0 };
    pub const Y: Direction = Direction { xi1: 0.0, xi2: 1.0 };

    /// Accepts `(ξ1, ξ2)` when `|ξ| = 1` to within `1e-12`.
    pub fn new(xi1: f64, xi2: f64) -> Result<Self, ModelError> {
        let norm2 = xi1 * xi1 + xi2 * xi2;
        if !norm2.is_finite() || (norm2 - 1.0).abs() > 1e-12 {
            return Err(ModelError::InvalidState(format!("direction ({xi1}, {xi2}) is not a unit vector")));
        }
        Ok(Direction { xi1, xi2 })
    }

    /// Normalizes any non-zero vector.
    pub fn normalized(xi1: f64, xi2: f64) -> Result<Self, ModelError> {
        let n = xi1.hypot(xi2);
        if n == 0.0 || !n.is_finite() {
            return Err(ModelError::InvalidState("zero direction".into()));
        }
        Ok(Direction { xi1: xi1 / n, xi2: xi2 / n })
    }

    pub fn from_angle(theta: f64) -> Self {
        Direction { xi1: theta.cos(), xi2: theta.sin() }
    }

    pub fn xi1(&self) -> f64 {
        self.xi1
    }

    pub fn xi2(&self) -> f64 {
        self.xi2
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    X,
    Y,
}

impl Axis {
    pub fn direction(self) -> Direction {
        match self {
            Axis::X => Direction::X,
            Axis::Y => Direction::Y,
        }
    }
}

fn pressure_unchecked(rho: f64, ref_speed: f64, gamma: f64) -> f64 {
    if gamma > 0.0 {
        ref_speed * rho.powf(gamma) / gamma
    } else {
        ref_speed * rho.ln()
    }
}

fn rho_dpressure(rho: f64, ref_speed: f64, gamma: f64) -> f64 {
    // P'(ρ) = ref·ρ^(γ-1) on both branches
    if gamma > 0.0 {
        ref_speed * rho.powf(gamma)
    } else {
        ref_speed
    }
}

/// Traffic pressure written in density: `ref·ρ^γ/γ` for `γ > 0`, `ref·ln ρ` for `γ = 0`.
pub fn pressure(rho: f64, ref_speed: f64, gamma: f64) -> Result<f64, ModelError> {
    if !(rho.is_finite() && ref_speed.is_finite() && gamma.is_finite()) {
        return Err(ModelError::InvalidState(format!(
            "pressure({rho}, {ref_speed}, {gamma}) has non-finite input"
        )));
    }
    if gamma < 0.0 {
        return Err(ModelError::InvalidState(format!("negative pressure exponent {gamma}")));
    }
    Ok(pressure_unchecked(rho, ref_speed, gamma))
}

/// Result of [`pressure_inverse`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Preimage {
    pub rho: f64,
    /// The exact preimage fell outside `[rho_floor, rho_max]` and was clamped.
    pub clamped: bool,
}

/// Inverse traffic pressure, clamped into `[rho_floor, rho_max]`.
pub fn pressure_inverse(
    p: f64,
    ref_speed: f64,
    gamma: f64,
    rho_floor: f64,
    rho_max: f64,
) -> Result<Preimage, ModelError> {
    if !(p.is_finite() && ref_speed.is_finite() && gamma.is_finite()) || gamma < 0.0 {
        return Err(ModelError::InvalidState(format!(
            "pressure_inverse({p}, {ref_speed}, {gamma}) has invalid input"
        )));
    }
    let no_preimage = ModelError::NoPreimage { p, ref_speed, gamma };
    if ref_speed == 0.0 {
        return Err(no_preimage);
    }
    let exact = if gamma > 0.0 {
        let base = gamma * p / ref_speed;
        if base < 0.0 {
            return Err(no_preimage);
        }
        base.powf(1.0 / gamma)
    } else {
        (p / ref_speed).exp()
    };
    if !exact.is_finite() {
        return Ok(Preimage { rho: rho_max, clamped: true });
    }
    if exact < rho_floor {
        Ok(Preimage { rho: rho_floor, clamped: true })
    } else if exact > rho_max {
        Ok(Preimage { rho: rho_max, clamped: true })
    } else {
        Ok(Preimage { rho: exact, clamped: false })
    }
}

pub fn primitive_to_conserved(w: &PrimitiveState, params: &ModelParams) -> Result<ConservedState, ModelError> {
    w.validate()?;
    if w.rho == 0.0 {
        return Ok(ConservedState::VACUUM);
    }
    Ok(ConservedState {
        rho: w.rho,
        rho_w: w.rho * (w.u + params.p1(w.rho)),
        rho_sigma: w.rho * (w.v + params.p2(w.rho)),
    })
}

/// Primitive state recovered from a conserved vector, with regularization flags.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Recovered {
    pub state: PrimitiveState,
    /// Density was below `rho_floor`; speeds are defined as zero.
    pub vacuum: bool,
    /// Recovered `u` was negative and clamped to zero.
    pub u_clamped: bool,
}

pub fn conserved_to_primitive(q: &ConservedState, params: &ModelParams) -> Result<Recovered, ModelError> {
    if !q.is_finite() {
        return Err(ModelError::InvalidState(format!("non-finite conserved state {q:?}")));
    }
    if q.rho < params.rho_floor {
        return Ok(Recovered {
            state: PrimitiveState::new(params.rho_floor, 0.0, 0.0),
            vacuum: true,
            u_clamped: false,
        });
    }
    let u = q.rho_w / q.rho - params.p1(q.rho);
    let v = q.rho_sigma / q.rho - params.p2(q.rho);
    let u_clamped = u < 0.0;
    Ok(Recovered {
        state: PrimitiveState::new(q.rho, if u_clamped { 0.0 } else { u }, v),
        vacuum: false,
        u_clamped,
    })
}

/// Physical flux from an already recovered primitive state. Vacuum cells carry no flux.
pub(crate) fn flux_from_recovered(q: &ConservedState, rec: &Recovered, axis: Axis) -> [f64; 3] {
    if rec.vacuum {
        return [0.0; 3];
    }
    let speed = match axis {
        Axis::X => rec.state.u,
        Axis::Y => rec.state.v,
    };
    [q.rho * speed, q.rho_w * speed, q.rho_sigma * speed]
}

/// `f(q) = (ρu, ρuw, ρuσ)` along x, `g(q) = (ρv, ρvw, ρvσ)` along y.
pub fn physical_flux(q: &ConservedState, axis: Axis, params: &ModelParams) -> Result<[f64; 3], ModelError> {
    let rec = conserved_to_primitive(q, params)?;
    Ok(flux_from_recovered(q, &rec, axis))
}

/// Closed-form eigenvalues `(λ1, λ2, λ3)` of `C(U, ξ) = ξ1·A(U) + ξ2·B(U)`.
///
/// `λ2` is evaluated as `λ1 + λ3`, which is algebraically identical to
/// `ξ1(u − ρP1') + ξ2(v − ρP2')` and keeps the identity exact in floating point.
pub fn eigenvalues(w: &PrimitiveState, xi: Direction, params: &ModelParams) -> (f64, f64, f64) {
    let a = if w.rho == 0.0 { 0.0 } else { params.rho_dp1(w.rho) };
    let b = if w.rho == 0.0 { 0.0 } else { params.rho_dp2(w.rho) };
    let l1 = -(xi.xi1 * a + xi.xi2 * b);
    let l3 = xi.xi1 * w.u + xi.xi2 * w.v;
    (l1, l1 + l3, l3)
}

/// Largest `|λ_k|` along `xi`.
pub fn max_wave_speed(w: &PrimitiveState, xi: Direction, params: &ModelParams) -> f64 {
    let (l1, l2, l3) = eigenvalues(w, xi, params);
    l1.abs().max(l2.abs()).max(l3.abs())
}

pub type Matrix3 = [[f64; 3]; 3];

/// The quasi-linear coefficient matrices `(A(U), B(U))` in the variables `(ρ, u, v)`.
pub fn coefficient_matrices(w: &PrimitiveState, params: &ModelParams) -> (Matrix3, Matrix3) {
    let (rho, u, v) = (w.rho, w.u, w.v);
    let a1 = params.rho_dp1(rho);
    let b2 = params.rho_dp2(rho);
    let a = [[u, rho, 0.0], [0.0, u - a1, 0.0], [0.0, v, -a1]];
    let b = [[v, 0.0, rho], [0.0, -b2, u], [0.0, 0.0, v - b2]];
    (a, b)
}

/// `C(U, ξ) = ξ1·A(U) + ξ2·B(U)`.
pub fn characteristic_matrix(w: &PrimitiveState, xi: Direction, params: &ModelParams) -> Matrix3 {
    let (a, b) = coefficient_matrices(w, params);
    let mut c = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            c[i][j] = xi.xi1 * a[i][j] + xi.xi2 * b[i][j];
        }
    }
    c
}

pub fn matrix_inf_norm(m: &Matrix3) -> f64 {
    m.iter().map(|row| row.iter().map(|x| x.abs()).sum::<f64>()).fold(0.0, f64::max)
}

/// Outcome of the numeric eigenvector computation.
#[derive(Debug, Clone, PartialEq)]
pub enum Eigenvectors {
    /// Unit right eigenvectors `r_k` for `(λ1, λ2, λ3)` in that order.
    Distinct { values: [f64; 3], vectors: [[f64; 3]; 3] },
    /// Two eigenvalues closer than [`EIGEN_GAP_TOL`], or the state is a vacuum.
    Degenerate { values: [f64; 3] },
}

fn cross(a: &[f64; 3], b: &[f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

fn norm2(a: &[f64; 3]) -> f64 {
    (a[0] * a[0] + a[1] * a[1] + a[2] * a[2]).sqrt()
}

/// Null vector of a rank-2 3×3 matrix: the largest cross product of two rows.
fn null_vector(m: &Matrix3) -> Option<[f64; 3]> {
    let candidates = [cross(&m[0], &m[1]), cross(&m[0], &m[2]), cross(&m[1], &m[2])];
    let best = candidates
        .iter()
        .copied()
        .max_by(|a, b| norm2(a).total_cmp(&norm2(b)))?;
    let n = norm2(&best);
    if n == 0.0 || !n.is_finite() {
        return None;
    }
    Some([best[0] / n, best[1] / n, best[2] / n])
}

/// Right eigenvectors of `C(U, ξ)` computed numerically for the closed-form eigenvalues.
pub fn eigenvectors_numeric(
    w: &PrimitiveState,
    xi: Direction,
    params: &ModelParams,
) -> Result<Eigenvectors, ModelError> {
    w.validate()?;
    let (l1, l2, l3) = eigenvalues(w, xi, params);
    let values = [l1, l2, l3];
    if w.rho < params.rho_floor
        || (l1 - l2).abs() <= EIGEN_GAP_TOL
        || (l1 - l3).abs() <= EIGEN_GAP_TOL
        || (l2 - l3).abs() <= EIGEN_GAP_TOL
    {
        return Ok(Eigenvectors::Degenerate { values });
    }
    let c = characteristic_matrix(w, xi, params);
    let mut vectors = [[0.0; 3]; 3];
    for (k, lambda) in values.iter().enumerate() {
        let mut m = c;
        for (i, row) in m.iter_mut().enumerate() {
            row[i] -= lambda;
        }
        match null_vector(&m) {
            Some(r) => vectors[k] = r,
            None => return Ok(Eigenvectors::Degenerate { values }),
        }
    }
    Ok(Eigenvectors::Distinct { values, vectors })
}

/// `‖C r − λ r‖∞`.
pub fn eigen_residual(c: &Matrix3, lambda: f64, r: &[f64; 3]) -> f64 {
    (0..3)
        .map(|i| {
            let cr: f64 = (0..3).map(|j| c[i][j] * r[j]).sum();
            (cr - lambda * r[i]).abs()
        })
        .fold(0.0, f64::max)
}

/// Residuals `‖C r − λ r‖∞` of the printed closed-form eigenvectors
/// `r1 = (−(u+v)/(v(P1'+P2')), u/v, 1)`, `r2 = (0, −1, 1)`, `r3 = (1, 0, 0)`.
///
/// Diagnostic only: solvers never use these vectors.
pub fn closed_form_eigenvector_residuals(w: &PrimitiveState, xi: Direction, params: &ModelParams) -> [f64; 3] {
    let (l1, l2, l3) = eigenvalues(w, xi, params);
    let c = characteristic_matrix(w, xi, params);
    let dp_sum = (params.rho_dp1(w.rho) + params.rho_dp2(w.rho)) / w.rho;
    let r1 = [-(w.u + w.v) / (w.v * dp_sum), w.u / w.v, 1.0];
    let r2 = [0.0, -1.0, 1.0];
    let r3 = [1.0, 0.0, 0.0];
    [eigen_residual(&c, l1, &r1), eigen_residual(&c, l2, &r2), eigen_residual(&c, l3, &r3)]
}

/// `(z1, z2, z3) = (u + v + P1(ρ) + P2(ρ), u + v, u)`.
pub fn riemann_invariants(w: &PrimitiveState, params: &ModelParams) -> (f64, f64, f64) {
    let z2 = w.u + w.v;
    (z2 + params.p1(w.rho) + params.p2(w.rho), z2, w.u)
}

/// Equilibrium speed `c − P(ρ)` for a constant desired speed `c`.
///
/// With `γ = 1` and `c = ref_speed` this is the Greenshields line.
pub fn closure_speed(rho: f64, c: f64, ref_speed: f64, gamma: f64) -> Result<f64, ModelError> {
    if rho == 0.0 && gamma > 0.0 {
        return Ok(c);
    }
    Ok(c - pressure(rho, ref_speed, gamma)?)
}
