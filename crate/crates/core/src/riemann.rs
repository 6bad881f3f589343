//! Planar Riemann problems for the 2D system.
//!
//! Elementary waves are identified through the Riemann invariants
//! `z1 = u + v + P1 + P2`, `z2 = u + v`, `z3 = u`. The intermediate-state
//! constructions of the two lane-changing cases are solved with a safeguarded
//! Newton iteration on the density.

use thiserror::Error;

use crate::model::{
    eigenvalues, pressure_inverse, riemann_invariants, Direction, ModelError, ModelParams, PrimitiveState,
};

/// Tolerance for matching Riemann invariants.
pub const INVARIANT_TOL: f64 = 1e-10;
/// Smallest density jump accepted by [`shock_speed`].
pub const SHOCK_DENSITY_TOL: f64 = 1e-12;
/// Smallest admissible `|∂λ1/∂s|` along a rarefaction path.
pub const NONLINEARITY_TOL: f64 = 1e-10;
/// Finite-difference step for eigenvalue gradients.
pub const GRADIENT_STEP: f64 = 1e-6;

const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX_ITER: usize = 100;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RiemannError {
    #[error("degenerate shock (equal densities)")]
    DegenerateShock,
    #[error("degenerate field: |grad lambda1 . r| = {0:e} along the rarefaction path")]
    DegenerateField(f64),
    #[error("states are not connected by a 1-rarefaction")]
    NotARarefaction,
    #[error("rarefaction endpoint mismatch: reached rho = {reached}, expected {expected}")]
    FanEndpoint { reached: f64, expected: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("no admissible intermediate state: residuals {lo:e} at rho_floor and {hi:e} at rho_max")]
    NoAdmissibleState { lo: f64, hi: f64 },
    #[error("non-ordered wave pattern at wave {0}")]
    NonOrderedWaves(usize),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WaveFamily {
    /// All three invariants match: no wave.
    Identity,
    Shock1,
    Rarefaction1,
    Contact2,
    Contact3,
}

impl std::fmt::Display for WaveFamily {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            WaveFamily::Identity => "identity (degenerate contact)",
            WaveFamily::Shock1 => "1-shock",
            WaveFamily::Rarefaction1 => "1-rarefaction",
            WaveFamily::Contact2 => "2-contact",
            WaveFamily::Contact3 => "3-contact",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Classification {
    Elementary(WaveFamily),
    NotElementary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveStructure {
    pub family: WaveFamily,
    /// Slowest and fastest speed; equal for jumps.
    pub speeds: (f64, f64),
    pub left: PrimitiveState,
    pub right: PrimitiveState,
    /// Fan samples `(speed, state)` for rarefactions, empty otherwise.
    pub intermediate: Vec<(f64, PrimitiveState)>,
    /// `λ1(Wl) ≥ s ≥ λ1(Wr)` for shocks; always true for other families.
    pub lax_admissible: bool,
}

fn matches(a: f64, b: f64) -> bool {
    (a - b).abs() <= INVARIANT_TOL
}

pub fn classify(wl: &PrimitiveState, wr: &PrimitiveState, params: &ModelParams) -> Classification {
    let (l1, l2, l3) = riemann_invariants(wl, params);
    let (r1, r2, r3) = riemann_invariants(wr, params);
    let family = if matches(l1, r1) && matches(l2, r2) && matches(l3, r3) {
        WaveFamily::Identity
    } else if matches(l1, r1) {
        let (sl, sr) = (wl.u + wl.v, wr.u + wr.v);
        if matches(sl, sr) {
            WaveFamily::Contact2
        } else if sl > sr {
            WaveFamily::Shock1
        } else {
            WaveFamily::Rarefaction1
        }
    } else if matches(l2, r2) {
        WaveFamily::Contact2
    } else if matches(l3, r3) {
        WaveFamily::Contact3
    } else {
        return Classification::NotElementary;
    };
    Classification::Elementary(family)
}

/// `s = (ρr(ur + vr) − ρl(ul + vl)) / (ρr − ρl)`.
pub fn shock_speed(wl: &PrimitiveState, wr: &PrimitiveState) -> Result<f64, RiemannError> {
    let jump = wr.rho - wl.rho;
    if jump.abs() < SHOCK_DENSITY_TOL {
        return Err(RiemannError::DegenerateShock);
    }
    Ok((wr.rho * (wr.u + wr.v) - wl.rho * (wl.u + wl.v)) / jump)
}

/// Path through state space on the `z1` level set joining `wl` to `wr`,
/// parameterized by density. `u` varies linearly in density and `v` closes
/// the invariant.
struct FanPath {
    wl: PrimitiveState,
    wr: PrimitiveState,
    z1: f64,
}

impl FanPath {
    fn state(&self, rho: f64, params: &ModelParams) -> PrimitiveState {
        let theta = (rho - self.wl.rho) / (self.wr.rho - self.wl.rho);
        let u = self.wl.u + theta * (self.wr.u - self.wl.u);
        let v = self.z1 - params.p1(rho) - params.p2(rho) - u;
        PrimitiveState::new(rho, u, v)
    }
}

/// Central-difference derivative of `λ1` along the density-parameterized path.
fn lambda1_slope(path: &FanPath, rho: f64, xi: Direction, params: &ModelParams) -> f64 {
    let h = GRADIENT_STEP * rho.abs().max(1.0);
    let lo = (rho - h).max(params.rho_floor);
    let hi = rho + h;
    let l = |r: f64| eigenvalues(&path.state(r, params), xi, params).0;
    (l(hi) - l(lo)) / (hi - lo)
}

/// Samples `(speed, state)` of the 1-rarefaction from `wl` to `wr` at `n`
/// equally spaced speeds between `λ1(wl)` and `λ1(wr)`, endpoints included.
///
/// The self-similar ODE `dU/ds = r/(∇λ1·r)` is integrated with classical RK4,
/// where `r` is the tangent of the path along the `z1` level set.
pub fn rarefaction_fan(
    wl: &PrimitiveState,
    wr: &PrimitiveState,
    xi: Direction,
    n: usize,
    params: &ModelParams,
) -> Result<Vec<(f64, PrimitiveState)>, RiemannError> {
    if wl == wr {
        return Ok(Vec::new());
    }
    if classify(wl, wr, params) != Classification::Elementary(WaveFamily::Rarefaction1) {
        return Err(RiemannError::NotARarefaction);
    }
    if n < 2 {
        return Err(RiemannError::Precondition(format!("fan needs at least 2 samples, got {n}")));
    }
    let path = FanPath { wl: *wl, wr: *wr, z1: riemann_invariants(wl, params).0 };
    let (s0, s1) = (eigenvalues(wl, xi, params).0, eigenvalues(wr, xi, params).0);
    if !(s1 > s0) {
        return Err(RiemannError::NotARarefaction);
    }

    let rate = |rho: f64| -> Result<f64, RiemannError> {
        let g = lambda1_slope(&path, rho, xi, params);
        if g.abs() < NONLINEARITY_TOL {
            return Err(RiemannError::DegenerateField(g.abs()));
        }
        Ok(1.0 / g)
    };

    const SUBSTEPS: usize = 8;
    let ds = (s1 - s0) / (n - 1) as f64;
    let h = ds / SUBSTEPS as f64;
    let mut rho = wl.rho;
    let mut out = Vec::with_capacity(n);
    out.push((s0, *wl));
    for k in 1..n {
        for _ in 0..SUBSTEPS {
            let k1 = rate(rho)?;
            let k2 = rate(rho + 0.5 * h * k1)?;
            let k3 = rate(rho + 0.5 * h * k2)?;
            let k4 = rate(rho + h * k3)?;
            rho += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        }
        let speed = if k == n - 1 { s1 } else { s0 + k as f64 * ds };
        out.push((speed, path.state(rho, params)));
    }
    if (rho - wr.rho).abs() > 1e-6 {
        return Err(RiemannError::FanEndpoint { reached: rho, expected: wr.rho });
    }
    Ok(out)
}

/// `∇λ1·r1` with `r1` the numeric eigenvector of `C(U, ξ)` for `λ1`.
/// Identically zero for the coefficient matrices used here, which is why the
/// fan follows the `z1` level set instead.
pub fn numeric_nonlinearity(w: &PrimitiveState, xi: Direction, params: &ModelParams) -> Result<f64, ModelError> {
    use crate::model::{eigenvectors_numeric, Eigenvectors};
    let r = match eigenvectors_numeric(w, xi, params)? {
        Eigenvectors::Distinct { vectors, .. } => vectors[0],
        Eigenvectors::Degenerate { .. } => return Ok(0.0),
    };
    let h = GRADIENT_STEP * w.rho.max(1.0);
    let l1 = |s: &PrimitiveState| eigenvalues(s, xi, params).0;
    let grad = [
        (l1(&PrimitiveState::new(w.rho + h, w.u, w.v)) - l1(&PrimitiveState::new(w.rho - h, w.u, w.v))) / (2.0 * h),
        (l1(&PrimitiveState::new(w.rho, w.u + h, w.v)) - l1(&PrimitiveState::new(w.rho, w.u - h, w.v))) / (2.0 * h),
        (l1(&PrimitiveState::new(w.rho, w.u, w.v + h)) - l1(&PrimitiveState::new(w.rho, w.u, w.v - h))) / (2.0 * h),
    ];
    Ok(grad[0] * r[0] + grad[1] * r[1] + grad[2] * r[2])
}

/// Builds the elementary wave joining `wl` and `wr`, if any.
pub fn elementary_wave(
    wl: &PrimitiveState,
    wr: &PrimitiveState,
    xi: Direction,
    fan_samples: usize,
    params: &ModelParams,
) -> Result<Option<WaveStructure>, RiemannError> {
    let family = match classify(wl, wr, params) {
        Classification::Elementary(f) => f,
        Classification::NotElementary => return Ok(None),
    };
    let jump = |s: f64| (s, s);
    let mut wave = WaveStructure {
        family,
        speeds: (0.0, 0.0),
        left: *wl,
        right: *wr,
        intermediate: Vec::new(),
        lax_admissible: true,
    };
    match family {
        WaveFamily::Identity | WaveFamily::Contact2 => wave.speeds = jump(wl.u + wl.v),
        WaveFamily::Contact3 => wave.speeds = jump(wl.u),
        WaveFamily::Shock1 => {
            let s = shock_speed(wl, wr)?;
            wave.speeds = jump(s);
            let (ll, lr) = (eigenvalues(wl, xi, params).0, eigenvalues(wr, xi, params).0);
            wave.lax_admissible = ll >= s && s >= lr;
        }
        WaveFamily::Rarefaction1 => {
            let fan = rarefaction_fan(wl, wr, xi, fan_samples, params)?;
            wave.speeds = (fan[0].0, fan[fan.len() - 1].0);
            wave.intermediate = fan;
        }
    }
    Ok(Some(wave))
}

/// Which Case 1 density formula to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Case1Formula {
    /// `P1(ρ*) = u_l − u* + P1(ρ_l)`, consistent with `w_l = w*`.
    #[default]
    InvariantConsistent,
    /// `P1(ρ*) = u_l + u* + P1(ρ_l)` as printed in the original derivation.
    Printed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Case1Solution {
    pub state: PrimitiveState,
    /// Density was clamped into `[rho_floor, rho_max]`.
    pub clamped: bool,
    /// `z1(Wl) − z1(W*)`.
    pub left_residual: f64,
    /// Family joining `W*` to `Wr`.
    pub right_wave: Classification,
}

/// Intermediate state when both sides have zero lateral desired speed.
pub fn solve_case1(
    wl: &PrimitiveState,
    wr: &PrimitiveState,
    params: &ModelParams,
    formula: Case1Formula,
) -> Result<Case1Solution, RiemannError> {
    wl.validate()?;
    wr.validate()?;
    let (sl, sr) = (wl.sigma(params), wr.sigma(params));
    if sl.abs() > INVARIANT_TOL || sr.abs() > INVARIANT_TOL {
        return Err(RiemannError::Precondition(format!("case 1 needs sigma = 0 on both sides, got {sl:e}, {sr:e}")));
    }
    let u_star = wr.u;
    let p = match formula {
        Case1Formula::InvariantConsistent => wl.u - u_star + params.p1(wl.rho),
        Case1Formula::Printed => wl.u + u_star + params.p1(wl.rho),
    };
    let pre = pressure_inverse(p, params.u_ref, params.gamma1, params.rho_floor, params.rho_max)?;
    let state = PrimitiveState::new(pre.rho, u_star, -params.p2(pre.rho));
    let left_residual = riemann_invariants(wl, params).0 - riemann_invariants(&state, params).0;
    Ok(Case1Solution { state, clamped: pre.clamped, left_residual, right_wave: classify(&state, wr, params) })
}

/// Residuals of the defining equations of each intermediate state:
/// `[w − w_target, σ − σ_target, u − u_target]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Case2Residuals {
    pub left: [f64; 3],
    pub right: [f64; 3],
}

impl Case2Residuals {
    pub fn max_abs(&self) -> f64 {
        self.left.iter().chain(&self.right).fold(0.0, |m, r| m.max(r.abs()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Case2Solution {
    pub left: PrimitiveState,
    pub right: PrimitiveState,
    /// The left intermediate density fell below `rho_floor`; `left` sits at the floor.
    pub left_vacuum: bool,
    /// Vacuum state reached from `left` through the second family, at
    /// `rho_floor` with speeds read from the `w` and `σ` curves of `left`.
    pub vacuum_link: PrimitiveState,
    pub residuals: Case2Residuals,
}

/// Solves `P1(ρ) = target` on `[rho_floor, rho_max]` by damped Newton with
/// bisection fallback. `Ok(None)` when the root lies below the floor.
fn solve_p1(target: f64, params: &ModelParams) -> Result<Option<f64>, RiemannError> {
    let f = |r: f64| params.p1(r) - target;
    let (mut lo, mut hi) = (params.rho_floor, params.rho_max);
    let (flo, fhi) = (f(lo), f(hi));
    if flo > 0.0 {
        return Ok(None);
    }
    if fhi < 0.0 {
        return Err(RiemannError::NoAdmissibleState { lo: flo, hi: fhi });
    }
    if flo == 0.0 {
        return Ok(Some(lo));
    }
    let mut rho = 0.5 * (lo + hi);
    for _ in 0..NEWTON_MAX_ITER {
        let fr = f(rho);
        if fr.abs() <= NEWTON_TOL {
            return Ok(Some(rho));
        }
        if fr < 0.0 {
            lo = rho;
        } else {
            hi = rho;
        }
        let slope = params.rho_dp1(rho) / rho;
        let mut next = if slope > 0.0 { rho - fr / slope } else { f64::NAN };
        if !(next > lo && next < hi) || f(next).abs() > fr.abs() {
            next = 0.5 * (lo + hi);
        }
        rho = next;
    }
    let fr = f(rho);
    if fr.abs() <= 1e3 * NEWTON_TOL {
        Ok(Some(rho))
    } else {
        Err(RiemannError::NoAdmissibleState { lo: f(lo), hi: f(hi) })
    }
}

/// Intermediate states for equal positive lateral desired speeds.
pub fn solve_case2(wl: &PrimitiveState, wr: &PrimitiveState, params: &ModelParams) -> Result<Case2Solution, RiemannError> {
    wl.validate()?;
    wr.validate()?;
    let (sl, sr) = (wl.sigma(params), wr.sigma(params));
    if (sl - sr).abs() > INVARIANT_TOL || !(sl > 0.0) {
        return Err(RiemannError::Precondition(format!(
            "case 2 needs equal positive sigma on both sides, got {sl:e} and {sr:e}"
        )));
    }
    if wl.v < 0.0 {
        return Err(RiemannError::Precondition(format!("case 2 needs v_l >= 0, got {}", wl.v)));
    }
    let sigma = sl;
    let w_l = wl.w(params);

    let (left, left_vacuum, u_target_l) = if wl.v > 0.0 {
        let u_star = wl.u + wl.v;
        match solve_p1(params.p1(wl.rho) - wl.v, params)? {
            Some(rho) => (PrimitiveState::new(rho, u_star, sigma - params.p2(rho)), false, u_star),
            None => {
                let rho = params.rho_floor;
                (PrimitiveState::new(rho, w_l - params.p1(rho), sigma - params.p2(rho)), true, u_star)
            }
        }
    } else {
        (PrimitiveState::new(wl.rho, wl.u, sigma - params.p2(wl.rho)), false, wl.u)
    };

    let w_star = left.w(params);
    let rho_r = solve_p1(w_star - wr.u, params)?.ok_or_else(|| RiemannError::NoAdmissibleState {
        lo: params.p1(params.rho_floor) - (w_star - wr.u),
        hi: params.p1(params.rho_max) - (w_star - wr.u),
    })?;
    let right = PrimitiveState::new(rho_r, wr.u, sigma - params.p2(rho_r));

    let floor = params.rho_floor;
    let vacuum_link = PrimitiveState::new(floor, w_star - params.p1(floor), sigma - params.p2(floor));
    let residuals = Case2Residuals {
        left: [left.w(params) - w_l, left.sigma(params) - sigma, left.u - u_target_l],
        right: [right.w(params) - w_star, right.sigma(params) - sigma, right.u - wr.u],
    };
    Ok(Case2Solution { left, right, left_vacuum, vacuum_link, residuals })
}

/// State at similarity speed `s` of a left-to-right sequence of waves.
/// Jumps are right-continuous; fans are interpolated linearly between samples.
pub fn sample_solution(waves: &[WaveStructure], s: f64) -> Result<PrimitiveState, RiemannError> {
    let Some(first) = waves.first() else {
        return Err(RiemannError::Precondition("empty wave pattern".into()));
    };
    for (k, pair) in waves.windows(2).enumerate() {
        if pair[0].speeds.1 > pair[1].speeds.0 {
            return Err(RiemannError::NonOrderedWaves(k + 1));
        }
    }
    if s < first.speeds.0 {
        return Ok(first.left);
    }
    for wave in waves {
        if s < wave.speeds.0 {
            return Ok(wave.left);
        }
        if s < wave.speeds.1 && !wave.intermediate.is_empty() {
            let fan = &wave.intermediate;
            let k = fan.partition_point(|(speed, _)| *speed <= s).clamp(1, fan.len() - 1);
            let ((sa, a), (sb, b)) = (fan[k - 1], fan[k]);
            let t = (s - sa) / (sb - sa);
            return Ok(PrimitiveState::new(
                a.rho + t * (b.rho - a.rho),
                a.u + t * (b.u - a.u),
                a.v + t * (b.v - a.v),
            ));
        }
    }
    Ok(waves[waves.len() - 1].right)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn paper() -> ModelParams {
        ModelParams::default()
    }

    /// State with density `rho`, longitudinal speed `u` and the lateral speed
    /// that puts it on the `z1` level set `z1`.
    fn on_z1(rho: f64, u: f64, z1: f64, p: &ModelParams) -> PrimitiveState {
        PrimitiveState::new(rho, u, z1 - p.p1(rho) - p.p2(rho) - u)
    }

    #[test]
    fn identical_states_are_identity() {
        let w = PrimitiveState::new(0.5, 0.8, 0.02);
        assert_eq!(classify(&w, &w, &paper()), Classification::Elementary(WaveFamily::Identity));
        assert_eq!(WaveFamily::Identity.to_string(), "identity (degenerate contact)");
    }

    #[test]
    fn shock_on_z1_level_set() {
        let p = paper();
        let wl = PrimitiveState::new(0.5, 0.8, 0.02);
        let z1 = riemann_invariants(&wl, &p).0;
        // u_r + v_r = 0.2 fixes P1 + P2 at z1 − 0.2; for γ = 1 this is linear in ρ
        let rho_r = (z1 - 0.2) / (p.u_ref + p.v_ref);
        let wr = PrimitiveState::new(rho_r, 0.15, 0.05);
        assert!((wr.u + wr.v - 0.2).abs() < 1e-15);
        assert_eq!(classify(&wl, &wr, &p), Classification::Elementary(WaveFamily::Shock1));
        assert_eq!(classify(&wr, &wl, &p), Classification::Elementary(WaveFamily::Rarefaction1));
    }

    #[test]
    fn contact_three_only() {
        let p = paper();
        let wl = PrimitiveState::new(0.5, 0.4, 0.01);
        let wr = PrimitiveState::new(0.3, 0.4, -0.02);
        assert_eq!(classify(&wl, &wr, &p), Classification::Elementary(WaveFamily::Contact3));
        let wr = PrimitiveState::new(0.3, 0.5, -0.02);
        assert_eq!(classify(&wl, &wr, &p), Classification::NotElementary);
    }

    #[test]
    fn shock_speed_examples() {
        let wl = PrimitiveState::new(0.4, 0.6, 0.02);
        let wr = PrimitiveState::new(0.8, 0.2, 0.0);
        assert!((shock_speed(&wl, &wr).unwrap() + 0.22).abs() < 1e-14);
        let a = PrimitiveState::new(0.4, 0.0, 0.0);
        let b = PrimitiveState::new(0.9, 0.0, 0.0);
        assert_eq!(shock_speed(&a, &b).unwrap(), 0.0);
        assert_eq!(shock_speed(&a, &a), Err(RiemannError::DegenerateShock));
    }

    #[test]
    fn fan_preserves_z1_and_is_monotone() {
        let p = paper();
        let wl = PrimitiveState::new(0.6, 0.2, 0.01);
        let z1 = riemann_invariants(&wl, &p).0;
        let wr = on_z1(0.2, 0.5, z1, &p);
        let xi = Direction::normalized(1.0, 1.0).unwrap();
        let fan = rarefaction_fan(&wl, &wr, xi, 21, &p).unwrap();
        assert_eq!(fan.len(), 21);
        let last = fan.last().unwrap().1;
        assert!((last.rho - wr.rho).abs() < 1e-6 && (last.u - wr.u).abs() < 1e-6 && (last.v - wr.v).abs() < 1e-6);
        let mut prev = f64::NEG_INFINITY;
        for (speed, w) in &fan {
            assert!((riemann_invariants(w, &p).0 - z1).abs() < 1e-6);
            let l1 = eigenvalues(w, xi, &p).0;
            assert!((l1 - speed).abs() < 1e-9, "λ1 {l1} vs sample speed {speed}");
            assert!(l1 > prev);
            prev = l1;
        }
        assert!(rarefaction_fan(&wl, &wl, xi, 5, &p).unwrap().is_empty());
    }

    #[test]
    fn fan_rejects_flat_direction() {
        // with ξ orthogonal to the nonlinear part, λ1 is constant along the path
        let p = ModelParams { v_ref: 0.0, ..paper() };
        let wl = PrimitiveState::new(0.6, 0.2, 0.0);
        let z1 = riemann_invariants(&wl, &p).0;
        let wr = on_z1(0.2, 0.5, z1, &p);
        assert!(rarefaction_fan(&wl, &wr, Direction::Y, 5, &p).is_err());
    }

    #[test]
    fn numeric_eigenvector_is_linearly_degenerate() {
        let p = paper();
        let w = PrimitiveState::new(0.5, 0.8, 0.001);
        for xi in [Direction::X, Direction::Y, Direction::from_angle(0.7)] {
            assert!(numeric_nonlinearity(&w, xi, &p).unwrap().abs() < 1e-8);
        }
    }

    #[test]
    fn case1_examples() {
        let p = ModelParams { v_ref: 0.0, ..paper() };
        let wl = PrimitiveState::new(0.5, 0.8, 0.0);
        let same = solve_case1(&wl, &wl, &p, Case1Formula::default()).unwrap();
        assert!((same.state.rho - 0.5).abs() < 1e-15);

        let wr = PrimitiveState::new(0.2, 0.3, 0.0);
        let sol = solve_case1(&wl, &wr, &p, Case1Formula::default()).unwrap();
        assert!((sol.state.rho - 1.0).abs() < 1e-12);
        assert!(!sol.clamped);
        assert_eq!(sol.state.u, 0.3);
        assert!(sol.left_residual.abs() < 1e-12);
        assert_eq!(sol.right_wave, Classification::Elementary(WaveFamily::Contact2));

        let wl = PrimitiveState::new(0.5, 0.3, 0.0);
        let wr = PrimitiveState::new(0.2, 0.8, 0.0);
        let sol = solve_case1(&wl, &wr, &p, Case1Formula::default()).unwrap();
        assert!(sol.clamped);
        assert_eq!(sol.state.rho, p.rho_floor);
    }

    #[test]
    fn case1_printed_formula_breaks_invariant() {
        let p = ModelParams { v_ref: 0.0, ..paper() };
        let wl = PrimitiveState::new(0.3, 0.2, 0.0);
        let wr = PrimitiveState::new(0.3, 0.1, 0.0);
        let sol = solve_case1(&wl, &wr, &p, Case1Formula::Printed).unwrap();
        assert!(sol.left_residual.abs() > 1e-3);
    }

    #[test]
    fn case1_requires_zero_sigma() {
        let p = paper();
        let w = PrimitiveState::new(0.5, 0.8, 0.01);
        assert!(matches!(solve_case1(&w, &w, &p, Case1Formula::default()), Err(RiemannError::Precondition(_))));
    }

    #[test]
    fn case2_equal_states() {
        let p = paper();
        let w = PrimitiveState::new(0.5, 0.3, 0.02);
        let sol = solve_case2(&w, &w, &p).unwrap();
        assert!(sol.residuals.max_abs() <= 1e-10);
        assert_eq!(sol.left.u, 0.32);
        assert!(!sol.left_vacuum);

        let w0 = PrimitiveState::new(0.5, 0.3, 0.0);
        let sol = solve_case2(&w0, &w0, &p).unwrap();
        assert!(sol.residuals.max_abs() <= 1e-10);
        assert_eq!(sol.right.u, 0.3);
        assert!((sol.right.rho - 0.5).abs() < 1e-12);
    }

    #[test]
    fn case2_vacuum_and_preconditions() {
        let p = paper();
        let wl = PrimitiveState::new(0.01, 0.3, 0.05);
        let sol = solve_case2(&wl, &PrimitiveState::new(0.01, 0.3, 0.05), &p).unwrap();
        assert!(sol.left_vacuum);
        assert_eq!(sol.left.rho, p.rho_floor);
        let a = PrimitiveState::new(0.5, 0.3, 0.02);
        let b = PrimitiveState::new(0.5, 0.3, 0.03);
        assert!(matches!(solve_case2(&a, &b, &p), Err(RiemannError::Precondition(_))));
    }

    #[test]
    fn sampling_a_single_shock() {
        let wl = PrimitiveState::new(0.4, 0.6, 0.02);
        let wr = PrimitiveState::new(0.8, 0.2, 0.0);
        let s = shock_speed(&wl, &wr).unwrap();
        let wave = WaveStructure {
            family: WaveFamily::Shock1,
            speeds: (s, s),
            left: wl,
            right: wr,
            intermediate: Vec::new(),
            lax_admissible: true,
        };
        let waves = [wave];
        assert_eq!(sample_solution(&waves, -0.3).unwrap(), wl);
        assert_eq!(sample_solution(&waves, 0.0).unwrap(), wr);
        assert_eq!(sample_solution(&waves, s).unwrap(), wr);
    }

    #[test]
    fn sampling_rejects_overlap() {
        let w = PrimitiveState::new(0.4, 0.6, 0.0);
        let mk = |a: f64, b: f64| WaveStructure {
            family: WaveFamily::Contact3,
            speeds: (a, b),
            left: w,
            right: w,
            intermediate: Vec::new(),
            lax_admissible: true,
        };
        assert_eq!(sample_solution(&[mk(0.5, 0.5), mk(0.2, 0.2)], 0.0), Err(RiemannError::NonOrderedWaves(1)));
    }

    #[test]
    fn sampling_inside_fan() {
        let p = paper();
        let wl = PrimitiveState::new(0.6, 0.2, 0.01);
        let wr = on_z1(0.2, 0.5, riemann_invariants(&wl, &p).0, &p);
        let wave = elementary_wave(&wl, &wr, Direction::X, 11, &p).unwrap().unwrap();
        let mid = 0.5 * (wave.speeds.0 + wave.speeds.1);
        let w = sample_solution(std::slice::from_ref(&wave), mid).unwrap();
        assert!(w.rho < wl.rho && w.rho > wr.rho);
        assert_eq!(sample_solution(std::slice::from_ref(&wave), wave.speeds.1).unwrap(), wr);
    }
}
