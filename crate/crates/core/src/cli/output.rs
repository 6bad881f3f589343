//! Output files: field and fleet CSV, PGM heatmaps, key-value reports.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::fvm::{Field1D, Field2D};
use crate::micro::{local_density, select_interacting, Fleet, Fleet1D};
use crate::model::{conserved_to_primitive, ModelError, ModelParams};

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("writing {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Micro(#[from] crate::micro::MicroError),
}

fn write(path: &Path, contents: &[u8]) -> Result<(), OutputError> {
    fs::write(path, contents).map_err(|source| OutputError::Io { path: path.to_path_buf(), source })
}

/// Seventeen significant digits.
fn num(out: &mut String, v: f64) {
    write!(out, "{v:.16e}").expect("writing to a String cannot fail");
}

fn row(out: &mut String, values: &[f64]) {
    for (k, v) in values.iter().enumerate() {
        if k > 0 {
            out.push(',');
        }
        num(out, *v);
    }
    out.push('\n');
}

pub const FIELD_HEADER: &str = "x,y,rho,rho_u,rho_v,u,v,w,sigma";
pub const FIELD1D_HEADER: &str = "x,rho,rho_u,u,w";
pub const FLEET_HEADER: &str = "t,id,lane,x,y,u,v,rho_local";

pub fn field_csv(field: &Field2D, params: &ModelParams) -> Result<String, OutputError> {
    let g = &field.grid;
    let mut out = String::with_capacity(g.nx * g.ny * 9 * 24 + 64);
    out.push_str(FIELD_HEADER);
    out.push('\n');
    for j in 0..g.ny {
        for i in 0..g.nx {
            let q = field.cell(i, j);
            let rec = conserved_to_primitive(q, params)?;
            let (u, v) = if rec.vacuum { (0.0, 0.0) } else { (rec.state.u, rec.state.v) };
            let (w, sigma) = if q.rho > 0.0 { (q.rho_w / q.rho, q.rho_sigma / q.rho) } else { (0.0, 0.0) };
            row(&mut out, &[g.x_center(i), g.y_center(j), q.rho, q.rho * u, q.rho * v, u, v, w, sigma]);
        }
    }
    Ok(out)
}

pub fn write_field_csv(field: &Field2D, params: &ModelParams, path: &Path) -> Result<(), OutputError> {
    write(path, field_csv(field, params)?.as_bytes())
}

pub fn field1d_csv(field: &Field1D, params: &ModelParams) -> String {
    let mut out = String::from(FIELD1D_HEADER);
    out.push('\n');
    for (i, ((_, u), c)) in field.primitives(params).into_iter().zip(&field.cells).enumerate() {
        let w = if c.rho > 0.0 { c.rho_w / c.rho } else { 0.0 };
        row(&mut out, &[field.x_center(i), c.rho, c.rho * u, u, w]);
    }
    out
}

pub fn write_field1d_csv(field: &Field1D, params: &ModelParams, path: &Path) -> Result<(), OutputError> {
    write(path, field1d_csv(field, params).as_bytes())
}

/// One block of rows per snapshot; `rho_local` is empty for vehicles without a partner.
pub fn fleet_csv(snapshots: &[(f64, Fleet)]) -> Result<String, OutputError> {
    let mut out = String::from(FLEET_HEADER);
    out.push('\n');
    for (t, fleet) in snapshots {
        for (i, v) in fleet.vehicles.iter().enumerate() {
            num(&mut out, *t);
            write!(out, ",{},{},", v.id, v.lane).unwrap();
            row(&mut out, &[v.x, v.y, v.u, v.v]);
            out.pop();
            out.push(',');
            if !fleet.is_ghost(i) {
                if let Some(j) = select_interacting(i, fleet) {
                    num(&mut out, local_density(i, j, fleet)?);
                }
            }
            out.push('\n');
        }
    }
    Ok(out)
}

pub fn write_fleet_csv(snapshots: &[(f64, Fleet)], path: &Path) -> Result<(), OutputError> {
    write(path, fleet_csv(snapshots)?.as_bytes())
}

/// 1D fleets use the same columns with `lane = 0`, `y = 0`, `v = 0`.
pub fn fleet1d_csv(snapshots: &[(f64, Fleet1D)]) -> String {
    let mut out = String::from(FLEET_HEADER);
    out.push('\n');
    for (t, fleet) in snapshots {
        for (car, rho) in fleet.cars.iter().zip(fleet.densities()) {
            num(&mut out, *t);
            write!(out, ",{},0,", car.id).unwrap();
            row(&mut out, &[car.x, 0.0, car.u, 0.0]);
            out.pop();
            out.push(',');
            if let Some(rho) = rho {
                num(&mut out, rho);
            }
            out.push('\n');
        }
    }
    out
}

pub fn write_fleet1d_csv(snapshots: &[(f64, Fleet1D)], path: &Path) -> Result<(), OutputError> {
    write(path, fleet1d_csv(snapshots).as_bytes())
}

/// Binary 8-bit PGM of the density, `[0, rho_max] → [0, 255]`, north row first.
pub fn density_pgm(field: &Field2D, rho_max: f64) -> Vec<u8> {
    let g = &field.grid;
    let mut out = format!("P5\n{} {}\n255\n", g.nx, g.ny).into_bytes();
    for j in (0..g.ny).rev() {
        for i in 0..g.nx {
            let level = (field.cell(i, j).rho / rho_max).clamp(0.0, 1.0) * 255.0;
            out.push(level.round() as u8);
        }
    }
    out
}

pub fn write_pgm(field: &Field2D, rho_max: f64, path: &Path) -> Result<(), OutputError> {
    write(path, &density_pgm(field, rho_max))
}

pub fn report_text(entries: &[(String, String)]) -> String {
    entries.iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
}

pub fn write_report(entries: &[(String, String)], path: &Path) -> Result<(), OutputError> {
    write(path, report_text(entries).as_bytes())
}

/// File name of a 2D snapshot, e.g. `field_t0.100000.csv`.
pub fn field_file_name(t: f64, ext: &str) -> String {
    format!("field_t{t:.6}.{ext}")
}
