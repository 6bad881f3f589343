//! Follow-the-leader particle models in one and two space dimensions.
//!
//! In 2D every vehicle reacts to a single interacting vehicle chosen
//! geometrically: the nearest vehicle strictly ahead on the side the
//! vehicle is drifting towards. The local density around vehicle `i` is
//! `ρ_i = ΔX·ΔY / ((x_j − x_i)·|y_j − y_i|)` and the accelerations keep the
//! desired speeds `w_i = u_i + P1(ρ_i)` and `σ_i = v_i + P2(ρ_i)` constant in
//! continuous time.

use thiserror::Error;

use crate::fvm::Grid2D;
use crate::model::{ModelError, ModelParams};

/// Lateral gaps are clamped from below to `LATERAL_GAP_FRACTION·ΔY`.
pub const LATERAL_GAP_FRACTION: f64 = 1e-3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MicroError {
    #[error("vehicle {partner} is not ahead of vehicle {vehicle}")]
    NotAhead { vehicle: u64, partner: u64 },
    #[error("numerical failure: vehicle {id} has a non-finite state after the step")]
    NumericalFailure { id: u64 },
    #[error("vehicles are not ordered: x[{index}] = {x} is not below the next position")]
    OrderingViolated { index: usize, x: f64 },
    #[error("time step {dt} exceeds the ordering bound {bound}")]
    StepTooLarge { dt: f64, bound: f64 },
    #[error("invalid fleet: {0}")]
    InvalidFleet(String),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Vehicle {
    pub id: u64,
    /// Bookkeeping only; lanes do not constrain motion.
    pub lane: u32,
    pub x: f64,
    pub y: f64,
    pub u: f64,
    pub v: f64,
}

/// What happens at the front of the fleet.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GhostPolicy {
    /// Vehicles without a partner keep their speeds.
    FreezeSpeed,
    /// As `FreezeSpeed`, and additionally vehicle `ghost_id` is not integrated:
    /// after every step it copies the speeds and lateral position of the
    /// front-most vehicle of `lane`, placed `spacing` ahead of it.
    MirrorLastInLane { ghost_id: u64, lane: u32, spacing: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fleet {
    pub vehicles: Vec<Vehicle>,
    pub dx_car: f64,
    pub dy_car: f64,
    /// Lateral extent `[y_min, y_max]` of the road.
    pub road: (f64, f64),
    pub ghost_policy: GhostPolicy,
}

impl Fleet {
    pub fn new(vehicles: Vec<Vehicle>, dx_car: f64, dy_car: f64, road: (f64, f64)) -> Result<Self, MicroError> {
        let fleet = Fleet { vehicles, dx_car, dy_car, road, ghost_policy: GhostPolicy::FreezeSpeed };
        fleet.validate()?;
        Ok(fleet)
    }

    pub fn validate(&self) -> Result<(), MicroError> {
        if !(self.dx_car > 0.0 && self.dy_car > 0.0) {
            return Err(MicroError::InvalidFleet("vehicle dimensions must be positive".into()));
        }
        if !(self.road.0 < self.road.1) {
            return Err(MicroError::InvalidFleet("road width must be positive".into()));
        }
        let mut ids: Vec<u64> = self.vehicles.iter().map(|v| v.id).collect();
        ids.sort_unstable();
        if ids.windows(2).any(|w| w[0] == w[1]) {
            return Err(MicroError::InvalidFleet("vehicle ids must be unique".into()));
        }
        Ok(())
    }

    pub fn ghost_id(&self) -> Option<u64> {
        match self.ghost_policy {
            GhostPolicy::MirrorLastInLane { ghost_id, .. } => Some(ghost_id),
            GhostPolicy::FreezeSpeed => None,
        }
    }

    pub fn is_ghost(&self, index: usize) -> bool {
        self.ghost_id() == Some(self.vehicles[index].id)
    }

    pub fn index_of(&self, id: u64) -> Option<usize> {
        self.vehicles.iter().position(|v| v.id == id)
    }
}

/// Model parameters plus the cached interaction constants
/// `c1 = U_ref·(ΔX·ΔY)^γ1` and `c2 = V_ref·(ΔX·ΔY)^γ2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MicroParams {
    pub model: ModelParams,
    dx_car: f64,
    dy_car: f64,
    c1: f64,
    c2: f64,
}

impl MicroParams {
    pub fn new(model: ModelParams, dx_car: f64, dy_car: f64) -> Self {
        let mut p = MicroParams { model, dx_car, dy_car, c1: 0.0, c2: 0.0 };
        p.set_car_dims(dx_car, dy_car);
        p
    }

    pub fn for_fleet(model: ModelParams, fleet: &Fleet) -> Self {
        Self::new(model, fleet.dx_car, fleet.dy_car)
    }

    pub fn set_car_dims(&mut self, dx_car: f64, dy_car: f64) {
        self.dx_car = dx_car;
        self.dy_car = dy_car;
        let area = dx_car * dy_car;
        self.c1 = self.model.u_ref * area.powf(self.model.gamma1);
        self.c2 = self.model.v_ref * area.powf(self.model.gamma2);
    }

    pub fn c1(&self) -> f64 {
        self.c1
    }

    pub fn c2(&self) -> f64 {
        self.c2
    }

    pub fn dx_car(&self) -> f64 {
        self.dx_car
    }

    pub fn dy_car(&self) -> f64 {
        self.dy_car
    }

    fn check_fleet(&self, fleet: &Fleet) -> Result<(), MicroError> {
        if self.dx_car != fleet.dx_car || self.dy_car != fleet.dy_car {
            return Err(MicroError::InvalidFleet(format!(
                "parameters were built for car size ({}, {}), fleet uses ({}, {})",
                self.dx_car, self.dy_car, fleet.dx_car, fleet.dy_car
            )));
        }
        Ok(())
    }
}

/// Interacting vehicle of `i`: the nearest vehicle with `x_h > x_i` and
/// `v_i·(y_h − y_i) > 0`. When `v_i = 0` the lateral condition is dropped.
/// Distance ties go to the smaller id.
pub fn select_interacting(i: usize, fleet: &Fleet) -> Option<usize> {
    let me = &fleet.vehicles[i];
    let mut best: Option<(f64, u64, usize)> = None;
    for (h, other) in fleet.vehicles.iter().enumerate() {
        if h == i || other.x <= me.x {
            continue;
        }
        if me.v != 0.0 && me.v * (other.y - me.y) <= 0.0 {
            continue;
        }
        let dist = (other.x - me.x).hypot(other.y - me.y);
        let better = match best {
            None => true,
            Some((d, id, _)) => dist < d || (dist == d && other.id < id),
        };
        if better {
            best = Some((dist, other.id, h));
        }
    }
    best.map(|(_, _, h)| h)
}

/// Longitudinal and signed lateral gap after clamping.
fn clamped_gaps(i: usize, j: usize, fleet: &Fleet) -> Result<(f64, f64), MicroError> {
    let (a, b) = (&fleet.vehicles[i], &fleet.vehicles[j]);
    let gx = b.x - a.x;
    if !(gx > 0.0) {
        return Err(MicroError::NotAhead { vehicle: a.id, partner: b.id });
    }
    let gx = gx.max(fleet.dx_car);
    let gy = b.y - a.y;
    let min_gy = LATERAL_GAP_FRACTION * fleet.dy_car;
    let gy = if gy.abs() >= min_gy {
        gy
    } else if gy < 0.0 {
        -min_gy
    } else {
        min_gy
    };
    Ok((gx, gy))
}

/// `ρ_i = ΔX·ΔY / ((x_j − x_i)·|y_j − y_i|)` with clamped gaps.
pub fn local_density(i: usize, j: usize, fleet: &Fleet) -> Result<f64, MicroError> {
    let (gx, gy) = clamped_gaps(i, j, fleet)?;
    Ok(fleet.dx_car * fleet.dy_car / (gx * gy.abs()))
}

/// `(du/dt, dv/dt)` of vehicle `i` reacting to `j`.
pub fn accelerations(i: usize, j: usize, fleet: &Fleet, params: &MicroParams) -> Result<(f64, f64), MicroError> {
    let (gx, gy) = clamped_gaps(i, j, fleet)?;
    let (a, b) = (&fleet.vehicles[i], &fleet.vehicles[j]);
    let area = gx * gy.abs();
    let drive = (b.u - a.u) / gx + (b.v - a.v) / gy;
    let du = params.c1 / area.powf(params.model.gamma1) * drive;
    let dv = params.c2 / area.powf(params.model.gamma2) * drive;
    Ok((du, dv))
}

/// Regularization events raised by one particle step.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct MicroEvents {
    pub u_clamps: u64,
    pub wall_contacts: u64,
}

impl std::ops::AddAssign for MicroEvents {
    fn add_assign(&mut self, rhs: Self) {
        self.u_clamps += rhs.u_clamps;
        self.wall_contacts += rhs.wall_contacts;
    }
}

/// One explicit Euler step of the 2D model. All accelerations and partners
/// are evaluated on the time-n fleet before anything is written back.
pub fn micro_step(fleet: &Fleet, dt: f64, params: &MicroParams) -> Result<(Fleet, MicroEvents), MicroError> {
    params.check_fleet(fleet)?;
    let mut events = MicroEvents::default();
    let n = fleet.vehicles.len();
    let mut rates = Vec::with_capacity(n);
    for i in 0..n {
        if fleet.is_ghost(i) {
            rates.push((0.0, 0.0));
            continue;
        }
        let rate = match select_interacting(i, fleet) {
            Some(j) => accelerations(i, j, fleet, params)?,
            None => (0.0, 0.0),
        };
        rates.push(rate);
    }

    let (y_min, y_max) = fleet.road;
    let mut next = fleet.clone();
    for (veh, &(du, dv)) in next.vehicles.iter_mut().zip(&rates) {
        let old = *veh;
        veh.x = old.x + dt * old.u;
        veh.y = old.y + dt * old.v;
        veh.u = old.u + dt * du;
        veh.v = old.v + dt * dv;
        if veh.u < 0.0 {
            veh.u = 0.0;
            events.u_clamps += 1;
        }
        if veh.y < y_min || veh.y > y_max {
            veh.y = veh.y.clamp(y_min, y_max);
            veh.v = 0.0;
            events.wall_contacts += 1;
        }
        if !(veh.x.is_finite() && veh.y.is_finite() && veh.u.is_finite() && veh.v.is_finite()) {
            return Err(MicroError::NumericalFailure { id: veh.id });
        }
    }
    update_ghost(&mut next);
    Ok((next, events))
}

fn update_ghost(fleet: &mut Fleet) {
    let GhostPolicy::MirrorLastInLane { ghost_id, lane, spacing } = fleet.ghost_policy else {
        return;
    };
    let last = fleet
        .vehicles
        .iter()
        .filter(|v| v.lane == lane && v.id != ghost_id)
        .max_by(|a, b| a.x.total_cmp(&b.x).then(b.id.cmp(&a.id)))
        .copied();
    if let (Some(last), Some(g)) = (last, fleet.vehicles.iter_mut().find(|v| v.id == ghost_id)) {
        g.x = last.x + spacing;
        g.y = last.y;
        g.u = last.u;
        g.v = last.v;
    }
}

/// Places the ghost according to the current policy; used after building a fleet.
pub fn sync_ghost(fleet: &mut Fleet) {
    update_ghost(fleet);
}

/// Per-vehicle `(w_i, σ_i)`; `None` for vehicles without a partner and for the ghost.
pub fn desired_speeds(fleet: &Fleet, params: &ModelParams) -> Result<Vec<Option<(u64, f64, f64)>>, MicroError> {
    (0..fleet.vehicles.len())
        .map(|i| {
            if fleet.is_ghost(i) {
                return Ok(None);
            }
            match select_interacting(i, fleet) {
                None => Ok(None),
                Some(j) => {
                    let rho = local_density(i, j, fleet)?;
                    let v = &fleet.vehicles[i];
                    Ok(Some((v.id, v.u + params.p1(rho), v.v + params.p2(rho))))
                }
            }
        })
        .collect()
}

/// A car on a single lane.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Car1D {
    pub id: u64,
    pub x: f64,
    pub u: f64,
}

/// Cars ordered by strictly increasing position.
#[derive(Debug, Clone, PartialEq)]
pub struct Fleet1D {
    pub cars: Vec<Car1D>,
    pub dx_car: f64,
}

impl Fleet1D {
    pub fn check_order(&self) -> Result<(), MicroError> {
        for (k, w) in self.cars.windows(2).enumerate() {
            if !(w[0].x < w[1].x) {
                return Err(MicroError::OrderingViolated { index: k, x: w[0].x });
            }
        }
        Ok(())
    }

    /// `ρ_i = ΔX / (x_{i+1} − x_i)`; the leader has no density.
    pub fn densities(&self) -> Vec<Option<f64>> {
        let n = self.cars.len();
        (0..n)
            .map(|i| (i + 1 < n).then(|| self.dx_car / (self.cars[i + 1].x - self.cars[i].x).max(self.dx_car)))
            .collect()
    }

    /// Largest admissible step, `min gap / max speed`.
    pub fn step_bound(&self) -> f64 {
        let min_gap = self
            .cars
            .windows(2)
            .map(|w| w[1].x - w[0].x)
            .fold(f64::INFINITY, f64::min);
        let max_u = self.cars.iter().map(|c| c.u).fold(0.0, f64::max);
        if max_u == 0.0 {
            f64::INFINITY
        } else {
            min_gap / max_u
        }
    }
}

/// One explicit Euler step of the 1D model
/// `u̇_i = U_ref·ΔX^γ·(u_{i+1} − u_i)/(x_{i+1} − x_i)^(γ+1)`. The leader keeps its speed.
pub fn ftl1d_step(fleet: &Fleet1D, dt: f64, params: &ModelParams) -> Result<(Fleet1D, MicroEvents), MicroError> {
    fleet.check_order()?;
    let bound = fleet.step_bound();
    if dt > bound {
        return Err(MicroError::StepTooLarge { dt, bound });
    }
    let gamma = params.gamma1;
    let scale = params.u_ref * fleet.dx_car.powf(gamma);
    let n = fleet.cars.len();
    let mut events = MicroEvents::default();
    let mut next = fleet.clone();
    for i in 0..n {
        let car = fleet.cars[i];
        let du = if i + 1 < n {
            let lead = fleet.cars[i + 1];
            let gap = (lead.x - car.x).max(fleet.dx_car);
            scale * (lead.u - car.u) / gap.powf(gamma + 1.0)
        } else {
            0.0
        };
        let out = &mut next.cars[i];
        out.x = car.x + dt * car.u;
        out.u = car.u + dt * du;
        if out.u < 0.0 {
            out.u = 0.0;
            events.u_clamps += 1;
        }
        if !(out.x.is_finite() && out.u.is_finite()) {
            return Err(MicroError::NumericalFailure { id: car.id });
        }
    }
    next.check_order()?;
    Ok((next, events))
}

/// Density and fluxes carried by one vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VehicleSample {
    pub id: u64,
    pub x: f64,
    pub y: f64,
    pub rho: f64,
    pub rho_u: f64,
    pub rho_v: f64,
}

/// Vehicle samples plus their per-cell averages `(ρ, ρu, ρv)`, row-major by `j` then `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct FleetField {
    pub vehicles: Vec<VehicleSample>,
    pub cells: Vec<[f64; 3]>,
    pub counts: Vec<u32>,
}

/// Samples `(ρ_i, ρ_i·u_i, ρ_i·v_i)` for every vehicle that has a partner
/// (the ghost excluded) and bins them into the cells of `grid`.
pub fn fleet_to_field(fleet: &Fleet, grid: &Grid2D) -> Result<FleetField, MicroError> {
    if fleet.vehicles.is_empty() {
        return Err(MicroError::InvalidFleet("empty fleet".into()));
    }
    let mut vehicles = Vec::new();
    for i in 0..fleet.vehicles.len() {
        if fleet.is_ghost(i) {
            continue;
        }
        if let Some(j) = select_interacting(i, fleet) {
            let rho = local_density(i, j, fleet)?;
            let v = &fleet.vehicles[i];
            vehicles.push(VehicleSample { id: v.id, x: v.x, y: v.y, rho, rho_u: rho * v.u, rho_v: rho * v.v });
        }
    }
    let ncell = grid.nx * grid.ny;
    let mut cells = vec![[0.0; 3]; ncell];
    let mut counts = vec![0u32; ncell];
    for s in &vehicles {
        if let Some((i, j)) = grid.locate(s.x, s.y) {
            let k = grid.index(i, j);
            cells[k][0] += s.rho;
            cells[k][1] += s.rho_u;
            cells[k][2] += s.rho_v;
            counts[k] += 1;
        }
    }
    for (c, &n) in cells.iter_mut().zip(&counts) {
        if n > 0 {
            for x in c.iter_mut() {
                *x /= n as f64;
            }
        }
    }
    Ok(FleetField { vehicles, cells, counts })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn veh(id: u64, x: f64, y: f64, u: f64, v: f64) -> Vehicle {
        Vehicle { id, lane: 0, x, y, u, v }
    }

    fn fleet(vehicles: Vec<Vehicle>, dx: f64, dy: f64) -> Fleet {
        Fleet::new(vehicles, dx, dy, (-10.0, 10.0)).unwrap()
    }

    #[test]
    fn selects_nearest_on_drift_side() {
        let f = fleet(
            vec![
                veh(0, 0.0, 0.0, 1.0, 0.5),
                veh(1, 1.0, 1.0, 1.0, 0.0),
                veh(2, 0.5, 0.2, 1.0, 0.0),
                veh(3, 0.4, -0.1, 1.0, 0.0),
            ],
            0.1,
            0.1,
        );
        assert_eq!(select_interacting(0, &f), Some(2));
    }

    #[test]
    fn leader_has_no_partner() {
        let f = fleet(vec![veh(0, 0.0, 0.0, 1.0, 0.0), veh(1, 1.0, 0.5, 1.0, 0.0)], 0.1, 0.1);
        assert_eq!(select_interacting(1, &f), None);
    }

    #[test]
    fn ties_go_to_smaller_id() {
        let f = fleet(
            vec![veh(5, 1.0, 1.0, 0.0, 0.0), veh(0, 0.0, 0.0, 1.0, 1.0), veh(3, 1.0, 1.0, 0.0, 0.0)],
            0.1,
            0.1,
        );
        assert_eq!(select_interacting(1, &f), Some(2));
    }

    #[test]
    fn zero_lateral_speed_uses_nearest_ahead() {
        let f = fleet(vec![veh(0, 0.0, 0.0, 1.0, 0.0), veh(1, 0.5, -0.3, 1.0, 0.0)], 0.1, 0.1);
        assert_eq!(select_interacting(0, &f), Some(1));
    }

    #[test]
    fn local_density_examples() {
        let f = fleet(vec![veh(0, 0.0, 0.0, 1.0, 0.0), veh(1, 0.03, 0.0004, 1.0, 0.0)], 0.005, 0.000375);
        assert!((local_density(0, 1, &f).unwrap() - 0.15625).abs() < 1e-14);

        let f = fleet(vec![veh(0, 0.0, 0.0, 1.0, 0.0), veh(1, 0.005, 0.000375, 1.0, 0.0)], 0.005, 0.000375);
        assert!((local_density(0, 1, &f).unwrap() - 1.0).abs() < 1e-12);

        let f = fleet(vec![veh(0, 0.0, 0.2, 1.0, 0.0), veh(1, 0.005, 0.2, 1.0, 0.0)], 0.005, 0.000375);
        let rho = local_density(0, 1, &f).unwrap();
        assert!(rho.is_finite());
        assert!((rho - 1.0 / LATERAL_GAP_FRACTION).abs() < 1e-9);

        assert!(matches!(local_density(1, 0, &f), Err(MicroError::NotAhead { .. })));
    }

    #[test]
    fn acceleration_examples() {
        let model = ModelParams::default();
        let f = fleet(vec![veh(0, 0.0, 0.0, 0.5, 0.01), veh(1, 2.0, 1.0, 0.5, 0.01)], 1.0, 1.0);
        let p = MicroParams::for_fleet(model, &f);
        assert_eq!(accelerations(0, 1, &f, &p).unwrap(), (0.0, 0.0));

        let f = fleet(vec![veh(0, 0.0, 0.0, 0.5, 0.0), veh(1, 1.0, 1.0, 0.6, 0.0)], 1.0, 1.0);
        let (du, dv) = accelerations(0, 1, &f, &p).unwrap();
        assert!((du - 0.1).abs() < 1e-15);
        assert!((dv - 0.009 * 0.1).abs() < 1e-17);
    }

    #[test]
    fn reduces_to_1d_law_without_lateral_pressure() {
        let model = ModelParams { v_ref: 0.0, gamma1: 2.0, ..ModelParams::default() };
        let (dx, dy) = (0.01, 0.002);
        let f = fleet(vec![veh(0, 0.0, 0.0, 0.4, 0.0), veh(1, 0.05, dy, 0.7, 0.0)], dx, dy);
        let p = MicroParams::for_fleet(model, &f);
        let (du, dv) = accelerations(0, 1, &f, &p).unwrap();
        let expected = model.u_ref * dx.powf(2.0) * 0.3 / 0.05f64.powf(3.0);
        assert!((du - expected).abs() < 1e-12 * expected);
        assert_eq!(dv, 0.0);
    }

    #[test]
    fn uniform_fleet_translates() {
        let f = fleet(
            vec![veh(0, 0.0, 0.0, 0.7, 0.01), veh(1, 0.3, 0.1, 0.7, 0.01), veh(2, 0.6, 0.3, 0.7, 0.01)],
            0.01,
            0.01,
        );
        let p = MicroParams::for_fleet(ModelParams::default(), &f);
        let (next, ev) = micro_step(&f, 0.1, &p).unwrap();
        assert_eq!(ev, MicroEvents::default());
        for (a, b) in f.vehicles.iter().zip(&next.vehicles) {
            assert_eq!(b.x, a.x + 0.1 * 0.7);
            assert_eq!(b.y, a.y + 0.1 * 0.01);
            assert_eq!((b.u, b.v), (a.u, a.v));
        }
        let (same, _) = micro_step(&f, 0.0, &p).unwrap();
        assert_eq!(same, f);
    }

    #[test]
    fn two_car_step_matches_hand_update() {
        // γ = 1, ΔX = ΔY = 1: c1 = 1, c2 = 0.009, gaps (2, 1) so ΔA = 2
        let f = fleet(vec![veh(0, 0.0, 0.0, 0.5, 0.1), veh(1, 2.0, 1.0, 0.9, 0.3)], 1.0, 1.0);
        let p = MicroParams::for_fleet(ModelParams::default(), &f);
        let (next, _) = micro_step(&f, 0.01, &p).unwrap();
        let drive = 0.4 / 2.0 + 0.2 / 1.0;
        let a = &next.vehicles[0];
        assert!((a.x - 0.005).abs() < 1e-16);
        assert!((a.y - 0.001).abs() < 1e-16);
        assert!((a.u - (0.5 + 0.01 * drive / 2.0)).abs() < 1e-15);
        assert!((a.v - (0.1 + 0.01 * 0.009 * drive / 2.0)).abs() < 1e-15);
        // the leader has no partner and keeps its speeds
        assert_eq!((next.vehicles[1].u, next.vehicles[1].v), (0.9, 0.3));
    }

    #[test]
    fn wall_contact_zeroes_lateral_speed() {
        let f = Fleet::new(vec![veh(0, 0.0, 0.99, 1.0, 0.5)], 0.1, 0.1, (0.0, 1.0)).unwrap();
        let p = MicroParams::for_fleet(ModelParams::default(), &f);
        let (next, ev) = micro_step(&f, 0.1, &p).unwrap();
        assert_eq!(next.vehicles[0].y, 1.0);
        assert_eq!(next.vehicles[0].v, 0.0);
        assert_eq!(ev.wall_contacts, 1);
    }

    #[test]
    fn mismatched_car_size_is_rejected() {
        let f = fleet(vec![veh(0, 0.0, 0.0, 1.0, 0.0)], 0.1, 0.1);
        let p = MicroParams::new(ModelParams::default(), 0.2, 0.1);
        assert!(matches!(micro_step(&f, 0.1, &p), Err(MicroError::InvalidFleet(_))));
    }

    #[test]
    fn duplicate_ids_rejected() {
        assert!(Fleet::new(vec![veh(1, 0.0, 0.0, 0.0, 0.0), veh(1, 1.0, 0.0, 0.0, 0.0)], 0.1, 0.1, (0.0, 1.0))
            .is_err());
    }

    #[test]
    fn ftl1d_hand_update() {
        let params = ModelParams::default();
        let f = Fleet1D {
            cars: vec![Car1D { id: 0, x: 0.0, u: 0.2 }, Car1D { id: 1, x: 0.5, u: 0.6 }],
            dx_car: 0.1,
        };
        let (next, _) = ftl1d_step(&f, 0.05, &params).unwrap();
        let du = 1.0 * 0.1 * 0.4 / 0.25;
        assert!((next.cars[0].x - 0.01).abs() < 1e-16);
        assert!((next.cars[0].u - (0.2 + 0.05 * du)).abs() < 1e-15);
        assert_eq!(next.cars[1].u, 0.6);
        assert!((next.cars[1].x - 0.53).abs() < 1e-15);
    }

    #[test]
    fn ftl1d_translation_and_errors() {
        let params = ModelParams::default();
        let f = Fleet1D {
            cars: vec![Car1D { id: 0, x: 0.0, u: 0.3 }, Car1D { id: 1, x: 0.5, u: 0.3 }],
            dx_car: 0.1,
        };
        let (next, _) = ftl1d_step(&f, 0.1, &params).unwrap();
        assert_eq!(next.cars[0].x, 0.1 * 0.3);
        assert_eq!(next.cars[0].u, 0.3);
        assert!(matches!(ftl1d_step(&f, 10.0, &params), Err(MicroError::StepTooLarge { .. })));
        let bad = Fleet1D { cars: vec![f.cars[1], f.cars[0]], dx_car: 0.1 };
        assert!(matches!(ftl1d_step(&bad, 0.01, &params), Err(MicroError::OrderingViolated { .. })));
    }

    #[test]
    fn fleet_field_binning() {
        let grid = Grid2D::new(2, 2, 0.0, 1.0, 0.0, 1.0).unwrap();
        let f = Fleet::new(
            vec![veh(0, 0.2, 0.2, 0.5, 0.0), veh(1, 0.3, 0.3, 0.5, 0.0)],
            0.1,
            0.1,
            (0.0, 1.0),
        )
        .unwrap();
        let field = fleet_to_field(&f, &grid).unwrap();
        assert_eq!(field.vehicles.len(), 1);
        assert!((field.cells[0][0] - 1.0).abs() < 1e-12);
        assert!((field.cells[0][1] - 0.5).abs() < 1e-12);
        assert_eq!(field.cells[3], [0.0; 3]);
        assert_eq!(field.counts[3], 0);
    }
}
