//! Experiment setups, fleet placement and micro/macro comparison metrics.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::fvm::{run, Conserved1D, EventCounters, Field1D, Field2D, FvmError, Grid2D, SchemeOptions};
use crate::micro::{
    desired_speeds, fleet_to_field, ftl1d_step, micro_step, sync_ghost, Car1D, Fleet, Fleet1D, GhostPolicy,
    MicroError, MicroEvents, MicroParams, Vehicle,
};
use crate::model::{primitive_to_conserved, ModelError, ModelParams, PrimitiveState};

/// Road width shared by all experiments.
pub const ROAD_WIDTH: f64 = 0.012;
/// Default particle time step.
pub const DEFAULT_MICRO_DT: f64 = 1e-3;
/// Snapshot times match within this tolerance.
pub const TIME_MATCH_TOL: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("unknown scenario '{0}' (expected micro-macro, overtake-left, overtake-right or arz1d-vs-ftl1d)")]
    UnknownScenario(String),
    #[error("invalid scenario: {0}")]
    InvalidSpec(String),
    #[error("vehicle ids differ at t = {t}: missing in reference {missing_in_reference:?}, missing in simulation {missing_in_simulation:?}")]
    IdMismatch { t: f64, missing_in_reference: Vec<u64>, missing_in_simulation: Vec<u64> },
    #[error("reference trajectory: {0}")]
    Reference(String),
    #[error("reading {path}: {source}")]
    Csv { path: String, source: csv::Error },
    #[error(transparent)]
    Fvm(#[from] FvmError),
    #[error(transparent)]
    Micro(#[from] MicroError),
    #[error(transparent)]
    Model(#[from] ModelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScenarioName {
    MicroMacro,
    OvertakeLeft,
    OvertakeRight,
    Arz1dVsFtl1d,
    Custom,
}

impl ScenarioName {
    pub const BUILT_IN: [ScenarioName; 4] =
        [ScenarioName::MicroMacro, ScenarioName::OvertakeLeft, ScenarioName::OvertakeRight, ScenarioName::Arz1dVsFtl1d];

    pub fn as_str(self) -> &'static str {
        match self {
            ScenarioName::MicroMacro => "micro-macro",
            ScenarioName::OvertakeLeft => "overtake-left",
            ScenarioName::OvertakeRight => "overtake-right",
            ScenarioName::Arz1dVsFtl1d => "arz1d-vs-ftl1d",
            ScenarioName::Custom => "custom",
        }
    }
}

impl std::str::FromStr for ScenarioName {
    type Err = ScenarioError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ScenarioName::BUILT_IN
            .into_iter()
            .chain([ScenarioName::Custom])
            .find(|n| n.as_str() == s)
            .ok_or_else(|| ScenarioError::UnknownScenario(s.to_string()))
    }
}

/// Constant states of the four quadrants around `x = 0`, `y = L^y/2`.
/// North is `y ≥ L^y/2`, east is `x ≥ 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quadrants {
    pub ne: PrimitiveState,
    pub nw: PrimitiveState,
    pub se: PrimitiveState,
    pub sw: PrimitiveState,
}

impl Quadrants {
    pub fn all(&self) -> [(&'static str, PrimitiveState); 4] {
        [("ne", self.ne), ("nw", self.nw), ("se", self.se), ("sw", self.sw)]
    }

    pub fn at(&self, x: f64, y: f64, y_mid: f64) -> PrimitiveState {
        match (y >= y_mid, x >= 0.0) {
            (true, true) => self.ne,
            (true, false) => self.nw,
            (false, true) => self.se,
            (false, false) => self.sw,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub name: ScenarioName,
    pub params: ModelParams,
    pub grid: Grid2D,
    pub t_final: f64,
    /// Intermediate output times, strictly before `t_final`.
    pub snapshot_times: Vec<f64>,
    pub quadrants: Quadrants,
    /// Vehicle length ΔX of the particle model.
    pub car_length: f64,
    /// Vehicle width ΔY of the particle model.
    pub car_width: f64,
    pub micro_dt: f64,
    pub scheme: SchemeOptions,
}

impl ScenarioSpec {
    pub fn y_mid(&self) -> f64 {
        0.5 * (self.grid.ay + self.grid.by)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        self.params.validate()?;
        for (tag, q) in self.quadrants.all() {
            if !(q.rho >= 0.0 && q.rho <= self.params.rho_max) {
                return Err(ScenarioError::InvalidSpec(format!("{tag} density {} outside [0, rho_max]", q.rho)));
            }
            if !(q.u >= 0.0) || !q.v.is_finite() {
                return Err(ScenarioError::InvalidSpec(format!("{tag} speeds ({}, {}) invalid", q.u, q.v)));
            }
        }
        if !(self.t_final >= 0.0 && self.t_final.is_finite()) {
            return Err(ScenarioError::InvalidSpec(format!("t_final = {}", self.t_final)));
        }
        if !(self.car_length > 0.0 && self.car_width > 0.0) {
            return Err(ScenarioError::InvalidSpec("car dimensions must be positive".into()));
        }
        if !(self.micro_dt > 0.0) {
            return Err(ScenarioError::InvalidSpec(format!("micro_dt = {}", self.micro_dt)));
        }
        if !(self.scheme.cfl > 0.0 && self.scheme.cfl < 1.0) {
            return Err(ScenarioError::InvalidSpec(format!("cfl out of (0,1): {}", self.scheme.cfl)));
        }
        Ok(())
    }

    pub fn micro_params(&self) -> MicroParams {
        MicroParams::new(self.params, self.car_length, self.car_width)
    }
}

fn paper_params() -> ModelParams {
    ModelParams { u_ref: 1.0, v_ref: 0.009, gamma1: 1.0, gamma2: 1.0, ..ModelParams::default() }
}

fn paper_grid(ny: usize) -> Grid2D {
    Grid2D::new(200, ny, -0.5, 0.5, 0.0, ROAD_WIDTH).expect("static grid is valid")
}

const fn w(rho: f64, u: f64, v: f64) -> PrimitiveState {
    PrimitiveState::new(rho, u, v)
}

pub fn build_scenario(name: ScenarioName) -> ScenarioSpec {
    let base = ScenarioSpec {
        name,
        params: paper_params(),
        grid: paper_grid(32),
        t_final: 0.1,
        snapshot_times: Vec::new(),
        quadrants: Quadrants {
            ne: w(0.05, 0.8, -0.001),
            nw: w(0.05, 0.05, -0.001),
            se: w(0.05, 0.8, 0.001),
            sw: w(0.05, 0.05, 0.001),
        },
        car_length: 1.0 / 200.0,
        car_width: ROAD_WIDTH / 32.0,
        micro_dt: DEFAULT_MICRO_DT,
        scheme: SchemeOptions::default(),
    };
    match name {
        ScenarioName::MicroMacro | ScenarioName::Custom => base,
        ScenarioName::OvertakeLeft => ScenarioSpec {
            t_final: 1.5,
            snapshot_times: vec![0.5, 1.0],
            quadrants: Quadrants {
                ne: w(0.05, 0.8, 0.0),
                nw: w(0.4, 0.8, 0.0),
                se: w(0.4, 0.35, 0.0),
                sw: w(0.6, 0.65, 0.04),
            },
            ..base
        },
        ScenarioName::OvertakeRight => ScenarioSpec {
            t_final: 1.5,
            snapshot_times: vec![0.5, 1.0],
            quadrants: Quadrants {
                ne: w(0.9, 0.1, 0.0),
                nw: w(0.7, 0.7, 0.0),
                se: w(0.05, 1.0, 0.0),
                sw: w(0.05, 1.0, 0.0),
            },
            ..base
        },
        ScenarioName::Arz1dVsFtl1d => ScenarioSpec {
            params: ModelParams { v_ref: 0.0, ..paper_params() },
            grid: paper_grid(1),
            quadrants: Quadrants {
                ne: w(0.05, 0.8, 0.0),
                nw: w(0.05, 0.05, 0.0),
                se: w(0.05, 0.8, 0.0),
                sw: w(0.05, 0.05, 0.0),
            },
            car_length: 1.0 / 2000.0,
            car_width: ROAD_WIDTH,
            micro_dt: 1e-4,
            ..base
        },
    }
}

pub fn initial_field(spec: &ScenarioSpec) -> Result<Field2D, ScenarioError> {
    let y_mid = spec.y_mid();
    let mut err = None;
    let field = Field2D::from_fn(spec.grid, |x, y| {
        primitive_to_conserved(&spec.quadrants.at(x, y, y_mid), &spec.params).unwrap_or_else(|e| {
            err = Some(e);
            crate::model::ConservedState::VACUUM
        })
    });
    match err {
        Some(e) => Err(e.into()),
        None => Ok(field),
    }
}

/// The south row of the quadrant data as a one-dimensional field.
pub fn initial_field_1d(spec: &ScenarioSpec) -> Result<Field1D, ScenarioError> {
    let g = &spec.grid;
    let p = &spec.params;
    Ok(Field1D::from_fn(g.nx, g.ax, g.bx, |x| {
        let s = if x >= 0.0 { spec.quadrants.se } else { spec.quadrants.sw };
        Conserved1D { rho: s.rho, rho_w: s.rho * (s.u + p.p1(s.rho)) }
    })?)
}

/// Cars at spacing `ΔX/ρ` from `a^x` up to `b^x`, with the south-row speeds.
/// Cars with `x ≤ 0` take the west speed.
pub fn place_fleet_1d(spec: &ScenarioSpec) -> Result<Fleet1D, ScenarioError> {
    let (west, east) = (spec.quadrants.sw, spec.quadrants.se);
    if !(west.rho > 0.0 && east.rho > 0.0) {
        return Err(ScenarioError::InvalidSpec("1D placement needs positive densities".into()));
    }
    let mut cars = Vec::new();
    let mut x = spec.grid.ax;
    while x < spec.grid.bx {
        let s = if x <= 0.0 { west } else { east };
        cars.push(Car1D { id: cars.len() as u64, x, u: s.u });
        x += spec.car_length / s.rho;
    }
    Ok(Fleet1D { cars, dx_car: spec.car_length })
}

/// Lateral position of lane `k` (1-based) of four equally wide lanes.
pub fn lane_center(spec: &ScenarioSpec, lane: u32) -> f64 {
    let width = (spec.grid.by - spec.grid.ay) / 4.0;
    spec.grid.ay + (lane as f64 - 0.5) * width
}

/// Four-lane placement of the micro-macro experiment.
///
/// Lanes 1 and 3 start at `a^x`, lanes 2 and 4 at `a^x + d` where `d` makes
/// the local density of the first lane-1 car equal to the quadrant density.
/// Each lane then repeats with spacing `2d`. Longitudinal speeds follow the
/// sign of `x` and lateral speeds the lane's half of the road. A ghost car in
/// lane 3 mirrors the front-most lane-3 vehicle at distance `2d`.
pub fn place_fleet_four_lanes(spec: &ScenarioSpec) -> Result<Fleet, ScenarioError> {
    let q = &spec.quadrants;
    let rho0 = q.sw.rho;
    if !(rho0 > 0.0) {
        return Err(ScenarioError::InvalidSpec("four-lane placement needs a positive density".into()));
    }
    let lane_gap = lane_center(spec, 2) - lane_center(spec, 1);
    let d = spec.car_length * spec.car_width / (rho0 * lane_gap);
    let (ax, bx) = (spec.grid.ax, spec.grid.bx);
    let y_mid = spec.y_mid();

    let mut vehicles = Vec::new();
    for lane in 1..=4u32 {
        let y = lane_center(spec, lane);
        let mut x = if lane % 2 == 1 { ax } else { ax + d };
        while x < bx {
            let quad = q.at(if x <= 0.0 { -1.0 } else { 1.0 }, y, y_mid);
            vehicles.push(Vehicle { id: 0, lane, x, y, u: quad.u, v: quad.v });
            x += 2.0 * d;
        }
    }
    vehicles.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.lane.cmp(&b.lane)));
    for (k, v) in vehicles.iter_mut().enumerate() {
        v.id = k as u64;
    }
    let ghost_id = vehicles.len() as u64;
    let last3 = vehicles.iter().filter(|v| v.lane == 3).map(|v| v.x).fold(f64::NEG_INFINITY, f64::max);
    let y3 = lane_center(spec, 3);
    let probe = q.at(1.0, y3, y_mid);
    vehicles.push(Vehicle { id: ghost_id, lane: 3, x: last3 + 2.0 * d, y: y3, u: probe.u, v: probe.v });

    let mut fleet = Fleet::new(vehicles, spec.car_length, spec.car_width, (spec.grid.ay, spec.grid.by))?;
    fleet.ghost_policy = GhostPolicy::MirrorLastInLane { ghost_id, lane: 3, spacing: 2.0 * d };
    sync_ghost(&mut fleet);
    Ok(fleet)
}

/// Runs a field to `spec.t_final`, returning the snapshots at `spec.snapshot_times` and the final time.
pub fn run_macro_2d(spec: &ScenarioSpec) -> Result<crate::fvm::RunOutput<Field2D>, ScenarioError> {
    let field = initial_field(spec)?;
    Ok(run(&field, spec.t_final, &spec.snapshot_times, &spec.params, &spec.scheme)?)
}

pub fn run_macro_1d(spec: &ScenarioSpec) -> Result<crate::fvm::RunOutput<Field1D>, ScenarioError> {
    let field = initial_field_1d(spec)?;
    Ok(run(&field, spec.t_final, &spec.snapshot_times, &spec.params, &spec.scheme)?)
}

/// Step sizes that advance from `t` to `target` with steps of at most `dt`;
/// the last step is shortened to land exactly.
fn next_step(t: f64, target: f64, dt: f64) -> Option<f64> {
    let remaining = target - t;
    if remaining <= 0.0 {
        None
    } else if remaining <= dt * (1.0 + 1e-9) {
        Some(remaining)
    } else {
        Some(dt)
    }
}

fn targets(t0: f64, t_final: f64, snapshot_times: &[f64]) -> Vec<f64> {
    let mut t: Vec<f64> = snapshot_times.iter().copied().filter(|&s| s >= t0 && s < t_final).collect();
    t.sort_by(f64::total_cmp);
    t.dedup();
    t.push(t_final);
    t
}

#[derive(Debug, Clone, PartialEq)]
pub struct MicroRun {
    /// `(t, fleet)` at `t0`, every snapshot time and `t_final`.
    pub snapshots: Vec<(f64, Fleet)>,
    pub events: MicroEvents,
    pub steps: u64,
}

pub fn run_micro(
    fleet: &Fleet,
    params: &MicroParams,
    t_final: f64,
    dt: f64,
    snapshot_times: &[f64],
) -> Result<MicroRun, ScenarioError> {
    if !(dt > 0.0) {
        return Err(ScenarioError::InvalidSpec(format!("micro time step must be positive, got {dt}")));
    }
    let mut current = fleet.clone();
    let mut t = 0.0;
    let mut out = MicroRun { snapshots: vec![(0.0, fleet.clone())], events: MicroEvents::default(), steps: 0 };
    for target in targets(0.0, t_final, snapshot_times) {
        while let Some(h) = next_step(t, target, dt) {
            let (next, ev) = micro_step(&current, h, params)?;
            out.events += ev;
            out.steps += 1;
            current = next;
            t = if h < dt { target } else { t + h };
        }
        t = target;
        if target > 0.0 {
            out.snapshots.push((target, current.clone()));
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Ftl1dRun {
    pub snapshots: Vec<(f64, Fleet1D)>,
    pub events: MicroEvents,
}

pub fn run_ftl1d(
    fleet: &Fleet1D,
    params: &ModelParams,
    t_final: f64,
    dt: f64,
    snapshot_times: &[f64],
) -> Result<Ftl1dRun, ScenarioError> {
    if !(dt > 0.0) {
        return Err(ScenarioError::InvalidSpec(format!("micro time step must be positive, got {dt}")));
    }
    let mut current = fleet.clone();
    let mut t = 0.0;
    let mut out = Ftl1dRun { snapshots: vec![(0.0, fleet.clone())], events: MicroEvents::default() };
    for target in targets(0.0, t_final, snapshot_times) {
        while let Some(h) = next_step(t, target, dt) {
            let (next, ev) = ftl1d_step(&current, h, params)?;
            out.events += ev;
            current = next;
            t = if h < dt { target } else { t + h };
        }
        t = target;
        if target > 0.0 {
            out.snapshots.push((target, current.clone()));
        }
    }
    Ok(out)
}

/// Relative discrepancy `Σ|a − b| / Σ|a|`, or the absolute sum when `Σ|a| = 0`.
fn relative_l1(pairs: &[(f64, f64)]) -> f64 {
    let num: f64 = pairs.iter().map(|(a, b)| (a - b).abs()).sum();
    let den: f64 = pairs.iter().map(|(a, _)| a.abs()).sum();
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

/// Relative discrepancy `max|a − b| / max|a|`, or the absolute maximum when `max|a| = 0`.
fn relative_linf(pairs: &[(f64, f64)]) -> f64 {
    let num = pairs.iter().map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let den = pairs.iter().map(|(a, _)| a.abs()).fold(0.0, f64::max);
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

/// Particle values versus interpolated macro values, relative to the particle values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ComparisonReport {
    pub vehicles_compared: usize,
    pub vehicles_excluded: usize,
    pub l1_density: f64,
    pub linf_density: f64,
    pub l1_rho_u: f64,
    pub l1_rho_v: f64,
    pub macro_events: EventCounters,
    pub micro_events: MicroEvents,
}

impl ComparisonReport {
    pub fn key_values(&self) -> Vec<(&'static str, String)> {
        vec![
            ("vehicles_compared", self.vehicles_compared.to_string()),
            ("vehicles_excluded", self.vehicles_excluded.to_string()),
            ("l1_density", format!("{:.16e}", self.l1_density)),
            ("linf_density", format!("{:.16e}", self.linf_density)),
            ("l1_rho_u", format!("{:.16e}", self.l1_rho_u)),
            ("l1_rho_v", format!("{:.16e}", self.l1_rho_v)),
            ("macro_steps", self.macro_events.steps.to_string()),
            ("macro_floor_events", self.macro_events.floor_events.to_string()),
            ("macro_u_clamps", self.macro_events.u_clamps.to_string()),
            ("micro_u_clamps", self.micro_events.u_clamps.to_string()),
            ("micro_wall_contacts", self.micro_events.wall_contacts.to_string()),
        ]
    }
}

/// Compares every vehicle that has an interaction partner (the ghost excluded)
/// against the macro field interpolated at its position. Vehicles outside the
/// field's domain are counted as excluded.
pub fn compare_micro_macro(fleet: &Fleet, field: &Field2D, params: &ModelParams) -> Result<ComparisonReport, ScenarioError> {
    let samples = fleet_to_field(fleet, &field.grid)?;
    let (mut rho, mut rho_u, mut rho_v) = (Vec::new(), Vec::new(), Vec::new());
    let mut excluded = 0;
    for s in &samples.vehicles {
        match field.sample_bilinear(s.x, s.y, params)? {
            Some(m) => {
                rho.push((s.rho, m[0]));
                rho_u.push((s.rho_u, m[1]));
                rho_v.push((s.rho_v, m[2]));
            }
            None => excluded += 1,
        }
    }
    Ok(ComparisonReport {
        vehicles_compared: rho.len(),
        vehicles_excluded: excluded,
        l1_density: relative_l1(&rho),
        linf_density: relative_linf(&rho),
        l1_rho_u: relative_l1(&rho_u),
        l1_rho_v: relative_l1(&rho_v),
        ..Default::default()
    })
}

/// Micro-macro experiment outcome at `spec.t_final`.
#[derive(Debug, Clone)]
pub struct MicroMacroOutcome {
    pub report: ComparisonReport,
    pub fleet: MicroRun,
    pub field: Field2D,
    /// `max_i |w_i(T) − w_i(0)|` over vehicles with a partner at both times.
    pub w_drift: f64,
    pub sigma_drift: f64,
}

pub fn micro_macro_experiment(spec: &ScenarioSpec, micro_dt: f64) -> Result<MicroMacroOutcome, ScenarioError> {
    spec.validate()?;
    let fleet = place_fleet_four_lanes(spec)?;
    let micro = run_micro(&fleet, &spec.micro_params(), spec.t_final, micro_dt, &spec.snapshot_times)?;
    let macro_run = run_macro_2d(spec)?;
    let field = macro_run.snapshots.last().expect("run returns the final snapshot").clone();
    let last = &micro.snapshots.last().expect("run returns the final snapshot").1;
    let mut report = compare_micro_macro(last, &field, &spec.params)?;
    report.macro_events = macro_run.events;
    report.micro_events = micro.events;
    let (w_drift, sigma_drift) = desired_speed_drift(&fleet, last, &spec.params)?;
    Ok(MicroMacroOutcome { report, fleet: micro, field, w_drift, sigma_drift })
}

/// `(max |Δw_i|, max |Δσ_i|)` between two fleets over vehicles with a partner in both.
pub fn desired_speed_drift(before: &Fleet, after: &Fleet, params: &ModelParams) -> Result<(f64, f64), ScenarioError> {
    let a = desired_speeds(before, params)?;
    let b = desired_speeds(after, params)?;
    let (mut dw, mut ds) = (0.0f64, 0.0f64);
    for (x, y) in a.iter().zip(&b) {
        if let (Some((ia, wa, sa)), Some((ib, wb, sb))) = (x, y) {
            debug_assert_eq!(ia, ib);
            dw = dw.max((wa - wb).abs());
            ds = ds.max((sa - sb).abs());
        }
    }
    Ok((dw, ds))
}

/// FTL per-car densities against the ARZ density.
#[derive(Debug, Clone, PartialEq)]
pub struct Comparison1D {
    pub compared: usize,
    pub excluded: usize,
    pub l1_density: f64,
    pub linf_density: f64,
}

/// Each car's density `ΔX/(x_{i+1} − x_i)` is compared against the ARZ density
/// at the midpoint of the car and its leader.
pub fn compare_1d(fleet: &Fleet1D, field: &Field1D) -> Comparison1D {
    let mut pairs = Vec::new();
    let mut excluded = 0;
    for (i, rho) in fleet.densities().into_iter().enumerate() {
        let Some(rho) = rho else { continue };
        let mid = 0.5 * (fleet.cars[i].x + fleet.cars[i + 1].x);
        match field.density_at(mid) {
            Some(m) => pairs.push((rho, m)),
            None => excluded += 1,
        }
    }
    Comparison1D {
        compared: pairs.len(),
        excluded,
        l1_density: relative_l1(&pairs),
        linf_density: relative_linf(&pairs),
    }
}

/// Runs the FTL and ARZ models of a 1D scenario to `t_final` and compares them.
pub fn ftl_arz_experiment(spec: &ScenarioSpec) -> Result<(Comparison1D, Fleet1D, Field1D), ScenarioError> {
    spec.validate()?;
    let fleet = place_fleet_1d(spec)?;
    let ftl = run_ftl1d(&fleet, &spec.params, spec.t_final, spec.micro_dt, &[])?;
    let arz = run_macro_1d(spec)?;
    let (fleet, field) = (ftl.snapshots.last().unwrap().1.clone(), arz.snapshots.last().unwrap().clone());
    Ok((compare_1d(&fleet, &field), fleet, field))
}

/// `Σρ·Δx·Δy` over cells with `y ≥ L^y/2`.
pub fn north_mass(field: &Field2D) -> f64 {
    let g = &field.grid;
    let y_mid = 0.5 * (g.ay + g.by);
    let values = (0..g.ny)
        .filter(|&j| g.y_center(j) >= y_mid)
        .flat_map(|j| (0..g.nx).map(move |i| (i, j)))
        .map(|(i, j)| field.cell(i, j).rho);
    crate::fvm::compensated_sum(values) * g.dx * g.dy
}

/// Minimal recovered lateral speed over the cells of the north-west quadrant.
pub fn min_v_northwest(field: &Field2D, params: &ModelParams) -> Result<f64, ScenarioError> {
    let g = &field.grid;
    let y_mid = 0.5 * (g.ay + g.by);
    let mut min = f64::INFINITY;
    for j in (0..g.ny).filter(|&j| g.y_center(j) >= y_mid) {
        for i in (0..g.nx).filter(|&i| g.x_center(i) < 0.0) {
            let rec = crate::model::conserved_to_primitive(field.cell(i, j), params)?;
            if !rec.vacuum {
                min = min.min(rec.state.v);
            }
        }
    }
    Ok(min)
}

/// Density averaged over the one or two rows straddling the road center, per column.
pub fn centerline_profile(field: &Field2D) -> Vec<(f64, f64)> {
    let g = &field.grid;
    let rows: Vec<usize> = if g.ny % 2 == 0 { vec![g.ny / 2 - 1, g.ny / 2] } else { vec![g.ny / 2] };
    (0..g.nx)
        .map(|i| {
            let rho = rows.iter().map(|&j| field.cell(i, j).rho).sum::<f64>() / rows.len() as f64;
            (g.x_center(i), rho)
        })
        .collect()
}

/// One row of a trajectory file.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryRecord {
    pub t: f64,
    pub id: u64,
    pub x: f64,
    pub y: f64,
    pub u: f64,
    pub v: f64,
}

pub fn read_reference(path: &Path) -> Result<Vec<TrajectoryRecord>, ScenarioError> {
    let csv_err = |source| ScenarioError::Csv { path: path.display().to_string(), source };
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_path(path).map_err(csv_err)?;
    let headers = reader.headers().map_err(csv_err)?.clone();
    if headers.iter().collect::<Vec<_>>() != ["t", "id", "x", "y", "u", "v"] {
        return Err(ScenarioError::Reference(format!("expected header t,id,x,y,u,v, found {}", headers.iter().collect::<Vec<_>>().join(","))));
    }
    let records: Vec<TrajectoryRecord> = reader.deserialize().collect::<Result<_, _>>().map_err(csv_err)?;
    validate_reference(&records)?;
    Ok(records)
}

fn validate_reference(records: &[TrajectoryRecord]) -> Result<(), ScenarioError> {
    if records.is_empty() {
        return Err(ScenarioError::Reference("no records".into()));
    }
    for (k, pair) in records.windows(2).enumerate() {
        let (a, b) = (&pair[0], &pair[1]);
        if (a.t, a.id) >= (b.t, b.id) && !(a.t < b.t) {
            return Err(ScenarioError::Reference(format!("rows {} and {} are not sorted by (t, id)", k + 1, k + 2)));
        }
    }
    Ok(())
}

/// Records grouped by time.
fn frames(records: &[TrajectoryRecord]) -> Vec<(f64, Vec<TrajectoryRecord>)> {
    let mut out: Vec<(f64, Vec<TrajectoryRecord>)> = Vec::new();
    for r in records {
        match out.last_mut() {
            Some((t, rows)) if (*t - r.t).abs() <= TIME_MATCH_TOL => rows.push(*r),
            _ => out.push((r.t, vec![*r])),
        }
    }
    out
}

/// Position error `e_i(t)` of one vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct CarErrorSeries {
    pub id: u64,
    pub samples: Vec<(f64, f64)>,
}

/// `e_i(t) = ‖(x_i, y_i)_sim − (x_i, y_i)_ref‖₂` at every simulated time that
/// has a reference frame.
pub fn compare_trajectories(
    simulated: &[(f64, Fleet)],
    reference: &[TrajectoryRecord],
) -> Result<Vec<CarErrorSeries>, ScenarioError> {
    validate_reference(reference)?;
    let frames = frames(reference);
    let mut series: Vec<CarErrorSeries> = Vec::new();
    let mut matched = 0;
    for (t, fleet) in simulated {
        let Some((_, rows)) = frames.iter().find(|(tr, _)| (tr - t).abs() <= TIME_MATCH_TOL) else {
            continue;
        };
        matched += 1;
        let mut missing_in_reference: Vec<u64> =
            fleet.vehicles.iter().map(|v| v.id).filter(|id| !rows.iter().any(|r| r.id == *id)).collect();
        let mut missing_in_simulation: Vec<u64> =
            rows.iter().map(|r| r.id).filter(|id| fleet.index_of(*id).is_none()).collect();
        if !missing_in_reference.is_empty() || !missing_in_simulation.is_empty() {
            missing_in_reference.sort_unstable();
            missing_in_simulation.sort_unstable();
            return Err(ScenarioError::IdMismatch { t: *t, missing_in_reference, missing_in_simulation });
        }
        for r in rows {
            let v = &fleet.vehicles[fleet.index_of(r.id).expect("checked above")];
            let e = (v.x - r.x).hypot(v.y - r.y);
            match series.iter_mut().find(|s| s.id == r.id) {
                Some(s) => s.samples.push((*t, e)),
                None => series.push(CarErrorSeries { id: r.id, samples: vec![(*t, e)] }),
            }
        }
    }
    if matched == 0 {
        return Err(ScenarioError::Reference("no simulated time matches a reference frame".into()));
    }
    series.sort_by_key(|s| s.id);
    Ok(series)
}

/// Simulates a fleet started from the first reference frame. The right-most
/// vehicle of that frame is not integrated: its state follows the reference,
/// interpolated linearly in time. Snapshots are taken at every reference time.
pub fn replay_reference(
    reference: &[TrajectoryRecord],
    dx_car: f64,
    dy_car: f64,
    road: (f64, f64),
    params: &ModelParams,
    dt: f64,
) -> Result<Vec<(f64, Fleet)>, ScenarioError> {
    validate_reference(reference)?;
    let frames = frames(reference);
    let (t0, first) = &frames[0];
    let vehicles: Vec<Vehicle> =
        first.iter().map(|r| Vehicle { id: r.id, lane: 0, x: r.x, y: r.y, u: r.u, v: r.v }).collect();
    let ghost = first.iter().max_by(|a, b| a.x.total_cmp(&b.x).then(b.id.cmp(&a.id))).expect("non-empty frame").id;
    let ghost_track: Vec<(f64, TrajectoryRecord)> = frames
        .iter()
        .filter_map(|(t, rows)| rows.iter().find(|r| r.id == ghost).map(|r| (*t, *r)))
        .collect();
    let ghost_at = |t: f64| -> TrajectoryRecord {
        let k = ghost_track.partition_point(|(tk, _)| *tk <= t);
        if k == 0 {
            return ghost_track[0].1;
        }
        if k == ghost_track.len() {
            return ghost_track[k - 1].1;
        }
        let ((ta, a), (tb, b)) = (ghost_track[k - 1], ghost_track[k]);
        let s = (t - ta) / (tb - ta);
        let lerp = |p: f64, q: f64| p + s * (q - p);
        TrajectoryRecord { t, id: a.id, x: lerp(a.x, b.x), y: lerp(a.y, b.y), u: lerp(a.u, b.u), v: lerp(a.v, b.v) }
    };

    let mut fleet = Fleet::new(vehicles, dx_car, dy_car, road)?;
    let mp = MicroParams::for_fleet(*params, &fleet);
    let ghost_index = fleet.index_of(ghost).expect("ghost is in the fleet");
    let mut t = *t0;
    let mut out = vec![(t, fleet.clone())];
    for (target, _) in frames.iter().skip(1) {
        while let Some(h) = next_step(t, *target, dt) {
            let (next, _) = micro_step(&fleet, h, &mp)?;
            fleet = next;
            t = if h < dt { *target } else { t + h };
            let g = ghost_at(t);
            let veh = &mut fleet.vehicles[ghost_index];
            (veh.x, veh.y, veh.u, veh.v) = (g.x, g.y, g.u, g.v);
        }
        t = *target;
        out.push((t, fleet.clone()));
    }
    Ok(out)
}
