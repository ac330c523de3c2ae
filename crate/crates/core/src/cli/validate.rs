use log::info;

use super::config::{LoadedConfig, Orientation};
use super::output::{Cell, Table};
use super::tasks::TaskOutput;
use super::CliError;
use crate::dof::{
    dof_asymptotic_parallel, dof_closed_parallel, dof_closed_perpendicular, dof_numeric, dof_parallel_formula,
};
use crate::eigenmodes::{assemble_kernel, solve_modes, sum_rule_check, KernelMode};
use crate::geometry::{LinkGeometry, Medium};
use crate::linkbudget::{aperture_gain, gain_closed, gain_closed_square, gain_friis, gain_numeric};

/// Outcome of one named check.
#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub measured: f64,
    pub tolerance: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.measured <= self.tolerance
    }
}

fn rel(a: f64, b: f64) -> f64 {
    ((a - b) / b).abs()
}

fn dof_closed(link: &LinkGeometry, kind: Orientation) -> Result<f64, CliError> {
    Ok(match kind {
        Orientation::Parallel => dof_closed_parallel(link)?,
        Orientation::Perpendicular => dof_closed_perpendicular(link)?,
    })
}

/// Runs every check; the caller decides the exit status from the result.
pub fn checks(loaded: &LoadedConfig) -> Result<Vec<Check>, CliError> {
    let c = &loaded.config;
    let tol = &c.validate.tolerances;
    let spec = c.numeric.quadrature();
    let link = c.link()?;
    let kind = c.geometry.kind;
    let lambda = link.medium().wavelength();
    let area_t = link.tx().area();
    let mut out = Vec::new();

    if kind == Orientation::Parallel && link.is_centered() {
        out.push(Check {
            name: "gain_closed_vs_numeric",
            measured: rel(gain_numeric(&link, &spec)?, gain_closed(&link)?),
            tolerance: tol.gain_closed_vs_numeric,
        });
    }
    if link.is_centered() {
        out.push(Check {
            name: "dof_closed_vs_numeric",
            measured: rel(dof_numeric(&link, &spec)?, dof_closed(&link, kind)?),
            tolerance: tol.dof_closed_vs_numeric,
        });
    }

    let g_t = aperture_gain(area_t, lambda);
    out.push(Check {
        name: "gain_near_limit",
        // Absolute deviation of G/G_T; the approach to 1/3 goes like sqrt(F).
        measured: (gain_closed_square(1e-4, area_t, lambda) / g_t - 1.0 / 3.0).abs(),
        tolerance: tol.gain_limits,
    });
    let d = link.distance();
    let s = d / 1e3f64.sqrt();
    let far = LinkGeometry::parallel(d, (link.tx().len_u(), link.tx().len_v()), (s, s), (0.0, 0.0), *link.medium())?;
    out.push(Check {
        name: "gain_friis_limit",
        measured: rel(gain_closed(&far)?, gain_friis(&far)),
        tolerance: tol.gain_limits,
    });
    out.push(Check {
        name: "dof_asymptote",
        measured: rel(
            dof_parallel_formula(d, 1e4 * d, 1e4 * d, area_t, lambda),
            dof_asymptotic_parallel(area_t, lambda),
        ),
        tolerance: tol.dof_asymptote,
    });

    out.push(Check {
        name: "scaling_invariance",
        measured: scaling_deviation(loaded, &link)?,
        tolerance: tol.scaling,
    });

    let v = &c.validate;
    let unit = Medium::new(1.0)?;
    let desk = LinkGeometry::parallel(
        v.modes_distance,
        (v.modes_tx, v.modes_tx),
        (v.modes_rx, v.modes_rx),
        (0.0, 0.0),
        unit,
    )?;
    info!("validate: eigen checks on the {}-wavelength link", v.modes_rx);
    let kernel = assemble_kernel(&desk, v.modes_patch, KernelMode::XToVector)?;
    let spectrum = solve_modes(&kernel)?;
    out.push(Check {
        name: "sum_rule",
        measured: sum_rule_check(&kernel, &spec)?.relative_error(),
        tolerance: tol.sum_rule,
    });
    out.push(Check {
        name: "orthonormality",
        measured: spectrum.orthonormality_error(),
        tolerance: tol.orthonormality,
    });
    out.push(Check {
        name: "mode_count_vs_closed_form",
        measured: (spectrum.count_dof(c.modes.threshold_db) as f64 - dof_closed_parallel(&desk)?).abs(),
        tolerance: tol.mode_count,
    });
    drop(kernel);
    let swapped = solve_modes(&assemble_kernel(&desk.swapped(), v.modes_patch, KernelMode::VectorToX)?)?;
    let rank = spectrum.rank().min(swapped.rank());
    let first = spectrum.values()[0];
    let worst = (0..rank)
        .map(|n| (spectrum.values()[n] - swapped.values()[n]).abs() / first)
        .fold(0.0, f64::max);
    out.push(Check {
        name: "reciprocity",
        measured: worst,
        tolerance: tol.reciprocity,
    });
    Ok(out)
}

/// Largest relative change of `F`, normalized gain and the DoF values when
/// every length and the wavelength are scaled together.
fn scaling_deviation(loaded: &LoadedConfig, link: &LinkGeometry) -> Result<f64, CliError> {
    let c = &loaded.config;
    let spec = c.numeric.quadrature();
    let kind = c.geometry.kind;
    let scaled = link.scaled(3.7)?;
    let mut worst = rel(scaled.fresnel_ratio(), link.fresnel_ratio());
    let norm = |l: &LinkGeometry| -> Result<f64, CliError> {
        let g = gain_numeric(l, &spec)?;
        Ok(g / aperture_gain(l.tx().area(), l.medium().wavelength()))
    };
    worst = worst.max(rel(norm(&scaled)?, norm(link)?));
    worst = worst.max(rel(dof_numeric(&scaled, &spec)?, dof_numeric(link, &spec)?));
    if link.is_centered() {
        worst = worst.max(rel(dof_closed(&scaled, kind)?, dof_closed(link, kind)?));
    }
    Ok(worst)
}

pub fn run_validation(loaded: &LoadedConfig, out: &mut TaskOutput) -> Result<(), CliError> {
    let results = checks(loaded)?;
    let mut t = Table::new(&[
        ("check", "name"),
        ("measured", "relative or absolute error"),
        ("tolerance", "same as measured"),
        ("pass", "bool"),
    ]);
    for r in &results {
        let verdict = if r.passed() { "PASS" } else { "FAIL" };
        out.summary.push(format!(
            "{verdict} {} measured={:e} tolerance={:e}",
            r.name, r.measured, r.tolerance
        ));
        if !r.passed() {
            out.failed_checks.push(r.name.to_string());
        }
        t.push(vec![
            Cell::Text(r.name.to_string()),
            Cell::Float(r.measured),
            Cell::Float(r.tolerance),
            Cell::Text(r.passed().to_string()),
        ]);
    }
    let path = loaded.config.output.directory.join("validate.csv");
    t.write(&path, &loaded.sha256, loaded.config.task.name())?;
    out.files.push(path);
    Ok(())
}
