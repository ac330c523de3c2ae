use std::path::PathBuf;

use log::info;
use rayon::prelude::*;

use super::config::{LoadedConfig, Orientation, RunConfig, Task};
use super::output::{field_table, Cell, Table, DOF_COLUMNS, GAIN_COLUMNS, SPECTRUM_COLUMNS};
use super::validate::run_validation;
use super::CliError;
use crate::dof::{
    dof_asymptotic_parallel, dof_closed_parallel, dof_closed_perpendicular, dof_farfield_miller, dof_numeric,
    rounded_dof,
};
use crate::eigenmodes::{
    assemble_kernel_with_budget, eigenfunction_field, solve_modes, sum_rule_check, EigenError, SurfaceSide,
};
use crate::geometry::LinkGeometry;
use crate::linkbudget::{aperture_gain, gain_closed, gain_friis, gain_large_lis, gain_numeric};

/// Files written and lines for the console.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct TaskOutput {
    pub files: Vec<PathBuf>,
    pub summary: Vec<String>,
    /// Set by `validate` when at least one check failed.
    pub failed_checks: Vec<String>,
}

pub fn run_task(loaded: &LoadedConfig) -> Result<TaskOutput, CliError> {
    let c = &loaded.config;
    let mut out = TaskOutput::default();
    match c.task {
        Task::Gain => gain_task(loaded, &mut out)?,
        Task::Dof => dof_task(loaded, &mut out)?,
        Task::Sweep => {
            gain_task(loaded, &mut out)?;
            dof_task(loaded, &mut out)?;
        }
        Task::Modes => modes_task(loaded, &mut out)?,
        Task::Validate => run_validation(loaded, &mut out)?,
    }
    Ok(out)
}

/// Links for one aspect ratio across the sweep grid, at the configured `d`.
pub fn sweep_links(c: &RunConfig, aspect_ratio: f64) -> Result<Vec<(f64, LinkGeometry)>, CliError> {
    let sweep = c.sweep.as_ref().expect("sweep present");
    let d = c.geometry.distance.0;
    sweep
        .grid()
        .into_iter()
        .map(|f_db| {
            let area_r = d * d / 10f64.powf(f_db / 10.0);
            let sx = (area_r * aspect_ratio).sqrt();
            let sy = (area_r / aspect_ratio).sqrt();
            Ok((f_db, c.link_with_rx((sx, sy))?))
        })
        .collect()
}

/// Label used in per-aspect-ratio file names.
pub fn ar_label(ar: f64) -> String {
    format!("{ar}").replace('.', "p")
}

fn gain_row(c: &RunConfig, f_db: f64, link: &LinkGeometry) -> Result<Vec<Cell>, CliError> {
    let lambda = link.medium().wavelength();
    let area_t = link.tx().area();
    let closed = gain_closed(link).ok();
    let numeric = if c.numeric.numeric {
        Some(gain_numeric(link, &c.numeric.quadrature())?)
    } else {
        None
    };
    let normalized = closed.or(numeric).map(|g| g / aperture_gain(area_t, lambda));
    Ok(vec![
        Cell::Float(f_db),
        Cell::opt(closed),
        Cell::opt(numeric),
        Cell::Float(gain_friis(link)),
        Cell::Float(gain_large_lis(area_t, lambda)),
        Cell::opt(normalized),
    ])
}

fn dof_row(c: &RunConfig, f_db: f64, link: &LinkGeometry) -> Result<Vec<Cell>, CliError> {
    let lambda = link.medium().wavelength();
    let (tx, rx) = (link.tx(), link.rx());
    let (closed, miller) = match c.geometry.kind {
        Orientation::Parallel => (
            dof_closed_parallel(link).ok(),
            Some(dof_farfield_miller(
                (tx.len_u(), tx.len_v()),
                (rx.len_u(), rx.len_v()),
                link.distance(),
                lambda,
            )),
        ),
        Orientation::Perpendicular => (dof_closed_perpendicular(link).ok(), None),
    };
    let numeric = if c.numeric.numeric {
        Some(dof_numeric(link, &c.numeric.quadrature())?)
    } else {
        None
    };
    let rounded = closed.or(numeric).map_or(Cell::Missing, |d| Cell::Int(rounded_dof(d)));
    Ok(vec![
        Cell::Float(f_db),
        Cell::opt(closed),
        Cell::opt(numeric),
        Cell::opt(miller),
        Cell::Float(dof_asymptotic_parallel(tx.area(), lambda)),
        rounded,
    ])
}

type RowFn = fn(&RunConfig, f64, &LinkGeometry) -> Result<Vec<Cell>, CliError>;

fn table_task(
    loaded: &LoadedConfig,
    out: &mut TaskOutput,
    stem: &str,
    columns: &[(&'static str, &'static str)],
    row: RowFn,
) -> Result<(), CliError> {
    let c = &loaded.config;
    let dir = &c.output.directory;
    let task = c.task.name();
    match &c.sweep {
        None => {
            let link = c.link()?;
            let mut t = Table::new(columns);
            t.meta("kind", kind_name(c));
            t.push(row(c, link.fresnel_ratio_db(), &link)?);
            let path = dir.join(format!("{stem}.csv"));
            t.write(&path, &loaded.sha256, task)?;
            out.files.push(path);
        }
        Some(sweep) => {
            for &ar in &sweep.aspect_ratios {
                let links = sweep_links(c, ar)?;
                info!("{stem}: aspect ratio {ar}, {} points", links.len());
                let rows: Vec<Vec<Cell>> = links
                    .par_iter()
                    .map(|(f_db, link)| row(c, *f_db, link))
                    .collect::<Result<_, _>>()?;
                let mut t = Table::new(columns);
                t.meta("kind", kind_name(c));
                t.meta("aspect_ratio", ar);
                t.meta("distance_m", c.geometry.distance.0);
                for r in rows {
                    t.push(r);
                }
                let path = dir.join(format!("{stem}_ar{}.csv", ar_label(ar)));
                t.write(&path, &loaded.sha256, task)?;
                out.files.push(path);
            }
        }
    }
    Ok(())
}

fn kind_name(c: &RunConfig) -> &'static str {
    match c.geometry.kind {
        Orientation::Parallel => "parallel",
        Orientation::Perpendicular => "perpendicular",
    }
}

fn gain_task(loaded: &LoadedConfig, out: &mut TaskOutput) -> Result<(), CliError> {
    table_task(loaded, out, "gain", &GAIN_COLUMNS, gain_row)
}

fn dof_task(loaded: &LoadedConfig, out: &mut TaskOutput) -> Result<(), CliError> {
    table_task(loaded, out, "dof", &DOF_COLUMNS, dof_row)
}

fn modes_task(loaded: &LoadedConfig, out: &mut TaskOutput) -> Result<(), CliError> {
    let c = &loaded.config;
    let link = c.link()?;
    let lambda = link.medium().wavelength();
    let patch = c.modes.patch.map_or(lambda / 8.0, |p| p.0);
    let mode = c.kernel_mode();
    let kernel = assemble_kernel_with_budget(&link, patch, mode, c.modes.budget)?;
    let mut spectrum = solve_modes(&kernel)?;
    spectrum.threshold_db = c.modes.threshold_db;
    let count = spectrum.dof();
    let closed = match c.geometry.kind {
        Orientation::Parallel => dof_closed_parallel(&link).ok(),
        Orientation::Perpendicular => dof_closed_perpendicular(&link).ok(),
    };
    let sum_rule = if c.modes.sum_rule {
        Some(sum_rule_check(&kernel, &c.numeric.quadrature())?.relative_error())
    } else {
        None
    };

    let mut t = Table::new(&SPECTRUM_COLUMNS);
    t.meta("kernel", mode.name());
    t.meta("patch_m", patch);
    t.meta("matrix", format!("{}x{}", kernel.nrows(), kernel.ncols()));
    t.meta("threshold_db", c.modes.threshold_db);
    t.meta("dof_count", count);
    t.meta("d_closed", closed.map_or("NaN".to_string(), |d| format!("{d}")));
    t.meta("sum_rule_relative_error", sum_rule.map_or("NaN".to_string(), |e| format!("{e}")));
    t.meta("condition_number", spectrum.condition_number());
    for (k, v) in spectrum.values().iter().enumerate() {
        t.push(vec![Cell::Int(k + 1), Cell::Float(*v), Cell::Float(spectrum.relative_db(k))]);
    }
    let dir = &c.output.directory;
    let path = dir.join("spectrum.csv");
    t.write(&path, &loaded.sha256, c.task.name())?;
    out.files.push(path);

    for &n in &c.modes.export {
        for (side, label) in [(SurfaceSide::Tx, "tx"), (SurfaceSide::Rx, "rx")] {
            let map = eigenfunction_field(&spectrum, n, side)?;
            let mut t = field_table(&map);
            t.meta("mode", n);
            t.meta("side", label);
            t.meta("xi", spectrum.values()[n - 1]);
            let path = dir.join(format!("mode_{n}_{label}.csv"));
            t.write(&path, &loaded.sha256, c.task.name())?;
            out.files.push(path);
        }
    }

    out.summary.push(format!("kernel {} {}x{}", mode.name(), kernel.nrows(), kernel.ncols()));
    out.summary.push(format!("dof_count ({} dB): {count}", c.modes.threshold_db));
    if let Some(d) = closed {
        out.summary.push(format!("d_closed: {d}"));
    }
    if let Some(e) = sum_rule {
        out.summary.push(format!("sum_rule_relative_error: {e}"));
    }
    Ok(())
}

impl From<EigenError> for CliError {
    fn from(e: EigenError) -> Self {
        match e {
            EigenError::BudgetExceeded { required, budget } => CliError::Budget { required, budget },
            other => CliError::Compute(other.to_string()),
        }
    }
}
