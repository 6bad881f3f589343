//! Command pipelines.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use super::config::{Format, RunConfig};
use super::output::{self, field_file_name, OutputError};
use super::CliError;
use crate::model::{
    closed_form_eigenvector_residuals, eigen_residual, eigenvalues, characteristic_matrix, eigenvectors_numeric,
    riemann_invariants, Direction, Eigenvectors, ModelParams,
};
use crate::riemann::{classify, elementary_wave, solve_case1, solve_case2, Classification, RiemannError};
use crate::scenarios::{
    compare_trajectories, desired_speed_drift, ftl_arz_experiment, micro_macro_experiment, place_fleet_1d,
    place_fleet_four_lanes, read_reference, replay_reference, run_ftl1d, run_macro_1d, run_macro_2d, run_micro,
    ScenarioName, ScenarioSpec,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    RunMacro2d,
    RunMacro1d,
    RunMicro,
    Compare,
    Riemann,
    Eigen,
}

type Report = Vec<(String, String)>;

fn entry(report: &mut Report, key: &str, value: impl ToString) {
    report.push((key.to_string(), value.to_string()));
}

fn sci(v: f64) -> String {
    format!("{v:.16e}")
}

fn prepare_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|source| CliError::Output(OutputError::Io { path: dir.to_path_buf(), source }))
}

fn scenario_header(report: &mut Report, spec: &ScenarioSpec) {
    entry(report, "scenario", spec.name.as_str());
    entry(report, "t_final", sci(spec.t_final));
    entry(report, "nx", spec.grid.nx);
    entry(report, "ny", spec.grid.ny);
    entry(report, "cfl", sci(spec.scheme.cfl));
}

/// Runs `command`, writing files below `out_dir` and human-readable output to `stdout`.
pub fn dispatch(command: Command, config: &RunConfig, out_dir: &Path, stdout: &mut String) -> Result<(), CliError> {
    match command {
        Command::RunMacro2d => run_macro_2d_cmd(config, out_dir, stdout),
        Command::RunMacro1d => run_macro_1d_cmd(config, out_dir, stdout),
        Command::RunMicro => run_micro_cmd(config, out_dir, stdout),
        Command::Compare => compare_cmd(config, out_dir, stdout),
        Command::Riemann => riemann_cmd(config, stdout),
        Command::Eigen => eigen_cmd(config, stdout),
    }
}

fn run_macro_2d_cmd(config: &RunConfig, out_dir: &Path, stdout: &mut String) -> Result<(), CliError> {
    let spec = &config.spec;
    if spec.name == ScenarioName::Arz1dVsFtl1d {
        return Err(CliError::Usage("scenario arz1d-vs-ftl1d is one-dimensional; use run-macro-1d".into()));
    }
    prepare_dir(out_dir)?;
    let out = run_macro_2d(spec)?;
    for field in &out.snapshots {
        if config.formats.contains(&Format::Csv) {
            output::write_field_csv(field, &spec.params, &out_dir.join(field_file_name(field.time, "csv")))?;
        }
        if config.formats.contains(&Format::Pgm) {
            output::write_pgm(field, spec.params.rho_max, &out_dir.join(field_file_name(field.time, "pgm")))?;
        }
    }
    let mut report = Report::new();
    scenario_header(&mut report, spec);
    entry(&mut report, "steps", out.events.steps);
    entry(&mut report, "floor_events", out.events.floor_events);
    entry(&mut report, "u_clamps", out.events.u_clamps);
    let last = out.snapshots.last().expect("run returns the final snapshot");
    let totals = last.totals();
    entry(&mut report, "total_rho", sci(totals[0]));
    entry(&mut report, "total_rho_w", sci(totals[1]));
    entry(&mut report, "total_rho_sigma", sci(totals[2]));
    output::write_report(&report, &out_dir.join("report.txt"))?;
    writeln!(stdout, "{} snapshots written to {}", out.snapshots.len(), out_dir.display()).unwrap();
    Ok(())
}

fn run_macro_1d_cmd(config: &RunConfig, out_dir: &Path, stdout: &mut String) -> Result<(), CliError> {
    let spec = &config.spec;
    prepare_dir(out_dir)?;
    let out = run_macro_1d(spec)?;
    for field in &out.snapshots {
        let name = format!("field1d_t{:.6}.csv", field.time);
        output::write_field1d_csv(field, &spec.params, &out_dir.join(name))?;
    }
    let mut report = Report::new();
    scenario_header(&mut report, spec);
    entry(&mut report, "steps", out.events.steps);
    entry(&mut report, "floor_events", out.events.floor_events);
    entry(&mut report, "u_clamps", out.events.u_clamps);
    entry(&mut report, "total_rho", sci(out.snapshots.last().unwrap().total_mass()));
    output::write_report(&report, &out_dir.join("report.txt"))?;
    writeln!(stdout, "{} snapshots written to {}", out.snapshots.len(), out_dir.display()).unwrap();
    Ok(())
}

fn run_micro_cmd(config: &RunConfig, out_dir: &Path, stdout: &mut String) -> Result<(), CliError> {
    let spec = &config.spec;
    prepare_dir(out_dir)?;
    let mut report = Report::new();
    scenario_header(&mut report, spec);
    entry(&mut report, "micro_dt", sci(spec.micro_dt));
    match spec.name {
        ScenarioName::Arz1dVsFtl1d => {
            let fleet = place_fleet_1d(spec)?;
            let out = run_ftl1d(&fleet, &spec.params, spec.t_final, spec.micro_dt, &spec.snapshot_times)?;
            output::write_fleet1d_csv(&out.snapshots, &out_dir.join("fleet.csv"))?;
            entry(&mut report, "vehicles", fleet.cars.len());
            entry(&mut report, "u_clamps", out.events.u_clamps);
        }
        ScenarioName::MicroMacro | ScenarioName::Custom => {
            let fleet = place_fleet_four_lanes(spec)?;
            let out = run_micro(&fleet, &spec.micro_params(), spec.t_final, spec.micro_dt, &spec.snapshot_times)?;
            output::write_fleet_csv(&out.snapshots, &out_dir.join("fleet.csv"))?;
            let (dw, ds) = desired_speed_drift(&fleet, &out.snapshots.last().unwrap().1, &spec.params)?;
            entry(&mut report, "vehicles", fleet.vehicles.len());
            entry(&mut report, "steps", out.steps);
            entry(&mut report, "u_clamps", out.events.u_clamps);
            entry(&mut report, "wall_contacts", out.events.wall_contacts);
            entry(&mut report, "max_w_drift", sci(dw));
            entry(&mut report, "max_sigma_drift", sci(ds));
        }
        other => {
            return Err(CliError::Usage(format!(
                "scenario {} has no particle placement; use micro-macro, arz1d-vs-ftl1d or a custom file",
                other.as_str()
            )))
        }
    }
    output::write_report(&report, &out_dir.join("report.txt"))?;
    writeln!(stdout, "fleet written to {}", out_dir.join("fleet.csv").display()).unwrap();
    Ok(())
}

fn compare_cmd(config: &RunConfig, out_dir: &Path, stdout: &mut String) -> Result<(), CliError> {
    let spec = &config.spec;
    prepare_dir(out_dir)?;
    let mut report = Report::new();
    if let Some(path) = &config.reference {
        let reference = read_reference(path)?;
        let sim = replay_reference(
            &reference,
            spec.car_length,
            spec.car_width,
            (spec.grid.ay, spec.grid.by),
            &spec.params,
            spec.micro_dt,
        )?;
        let errors = compare_trajectories(&sim, &reference)?;
        let mut csv = String::from("t,id,error\n");
        let mut worst = 0.0f64;
        for series in &errors {
            for (t, e) in &series.samples {
                writeln!(csv, "{t:.16e},{},{e:.16e}", series.id).unwrap();
                worst = worst.max(*e);
            }
        }
        let path_out = out_dir.join("trajectory_errors.csv");
        fs::write(&path_out, csv).map_err(|source| CliError::Output(OutputError::Io { path: path_out, source }))?;
        output::write_fleet_csv(&sim, &out_dir.join("fleet.csv"))?;
        entry(&mut report, "reference", path.display());
        entry(&mut report, "vehicles", errors.len());
        entry(&mut report, "max_position_error", sci(worst));
        output::write_report(&report, &out_dir.join("report.txt"))?;
        writeln!(stdout, "max position error {worst:.6e} over {} vehicles", errors.len()).unwrap();
        return Ok(());
    }

    scenario_header(&mut report, spec);
    match spec.name {
        ScenarioName::Arz1dVsFtl1d => {
            let (cmp, fleet, field) = ftl_arz_experiment(spec)?;
            output::write_field1d_csv(&field, &spec.params, &out_dir.join(format!("field1d_t{:.6}.csv", field.time)))?;
            output::write_fleet1d_csv(&[(spec.t_final, fleet)], &out_dir.join("fleet.csv"))?;
            entry(&mut report, "vehicles_compared", cmp.compared);
            entry(&mut report, "vehicles_excluded", cmp.excluded);
            entry(&mut report, "l1_density", sci(cmp.l1_density));
            entry(&mut report, "linf_density", sci(cmp.linf_density));
            writeln!(stdout, "relative L1 density discrepancy {:.6e}", cmp.l1_density).unwrap();
        }
        ScenarioName::MicroMacro | ScenarioName::Custom => {
            let outcome = micro_macro_experiment(spec, spec.micro_dt)?;
            output::write_field_csv(&outcome.field, &spec.params, &out_dir.join(field_file_name(outcome.field.time, "csv")))?;
            if config.formats.contains(&Format::Pgm) {
                output::write_pgm(&outcome.field, spec.params.rho_max, &out_dir.join(field_file_name(outcome.field.time, "pgm")))?;
            }
            output::write_fleet_csv(&outcome.fleet.snapshots, &out_dir.join("fleet.csv"))?;
            for (k, v) in outcome.report.key_values() {
                entry(&mut report, k, v);
            }
            entry(&mut report, "max_w_drift", sci(outcome.w_drift));
            entry(&mut report, "max_sigma_drift", sci(outcome.sigma_drift));
            writeln!(stdout, "relative L1 density discrepancy {:.6e}", outcome.report.l1_density).unwrap();
        }
        other => {
            return Err(CliError::Usage(format!("scenario {} has no particle counterpart to compare", other.as_str())))
        }
    }
    output::write_report(&report, &out_dir.join("report.txt"))?;
    Ok(())
}

fn direction(config: &RunConfig) -> Result<Direction, CliError> {
    Direction::new(config.xi.0, config.xi.1).map_err(|e| CliError::Usage(format!("xi1/xi2: {e}")))
}

fn state_line(w: &crate::model::PrimitiveState) -> String {
    format!("rho = {:.12e}, u = {:.12e}, v = {:.12e}", w.rho, w.u, w.v)
}

fn riemann_cmd(config: &RunConfig, stdout: &mut String) -> Result<(), CliError> {
    let p: &ModelParams = &config.spec.params;
    let (wl, wr) = (&config.wl, &config.wr);
    let xi = direction(config)?;
    writeln!(stdout, "left:  {}", state_line(wl)).unwrap();
    writeln!(stdout, "right: {}", state_line(wr)).unwrap();
    match classify(wl, wr, p) {
        Classification::NotElementary => writeln!(stdout, "wave: not elementary").unwrap(),
        Classification::Elementary(family) => {
            writeln!(stdout, "wave: {family}").unwrap();
            if let Some(wave) = elementary_wave(wl, wr, xi, config.fan_samples, p)? {
                writeln!(stdout, "speeds: {:.12e} .. {:.12e}", wave.speeds.0, wave.speeds.1).unwrap();
                if !wave.lax_admissible {
                    writeln!(stdout, "warning: shock violates the Lax entropy condition").unwrap();
                }
                for (s, w) in &wave.intermediate {
                    writeln!(stdout, "fan: s = {s:.12e}: {}", state_line(w)).unwrap();
                }
            }
        }
    }
    match solve_case1(wl, wr, p, config.case1_formula) {
        Ok(sol) => {
            writeln!(stdout, "case 1 intermediate: {}", state_line(&sol.state)).unwrap();
            writeln!(stdout, "case 1 z1 residual: {:.3e}, clamped: {}", sol.left_residual, sol.clamped).unwrap();
        }
        Err(RiemannError::Precondition(_)) => {}
        Err(e) => writeln!(stdout, "case 1: {e}").unwrap(),
    }
    match solve_case2(wl, wr, p) {
        Ok(sol) => {
            writeln!(stdout, "case 2 left intermediate: {}", state_line(&sol.left)).unwrap();
            writeln!(stdout, "case 2 right intermediate: {}", state_line(&sol.right)).unwrap();
            writeln!(stdout, "case 2 vacuum link: {}", state_line(&sol.vacuum_link)).unwrap();
            writeln!(stdout, "case 2 max residual: {:.3e}, left vacuum: {}", sol.residuals.max_abs(), sol.left_vacuum)
                .unwrap();
        }
        Err(RiemannError::Precondition(_)) => {}
        Err(e) => writeln!(stdout, "case 2: {e}").unwrap(),
    }
    Ok(())
}

fn eigen_cmd(config: &RunConfig, stdout: &mut String) -> Result<(), CliError> {
    let p = &config.spec.params;
    let w = &config.wl;
    let xi = direction(config)?;
    let (l1, l2, l3) = eigenvalues(w, xi, p);
    let (z1, z2, z3) = riemann_invariants(w, p);
    writeln!(stdout, "state: {}", state_line(w)).unwrap();
    writeln!(stdout, "direction: ({:.12e}, {:.12e})", xi.xi1(), xi.xi2()).unwrap();
    writeln!(stdout, "eigenvalues: {l1:.12e} {l2:.12e} {l3:.12e}").unwrap();
    writeln!(stdout, "invariants: {z1:.12e} {z2:.12e} {z3:.12e}").unwrap();
    match eigenvectors_numeric(w, xi, p)? {
        Eigenvectors::Distinct { values, vectors } => {
            let c = characteristic_matrix(w, xi, p);
            for (lambda, r) in values.iter().zip(&vectors) {
                writeln!(
                    stdout,
                    "eigenvector for {lambda:.12e}: ({:.12e}, {:.12e}, {:.12e}), residual {:.3e}",
                    r[0],
                    r[1],
                    r[2],
                    eigen_residual(&c, *lambda, r)
                )
                .unwrap();
            }
        }
        Eigenvectors::Degenerate { .. } => writeln!(stdout, "eigenvectors: degenerate spectrum").unwrap(),
    }
    let closed = closed_form_eigenvector_residuals(w, xi, p);
    writeln!(stdout, "closed-form eigenvector residuals: {:.3e} {:.3e} {:.3e}", closed[0], closed[1], closed[2]).unwrap();
    Ok(())
}
