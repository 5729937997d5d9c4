//! Command-line front end: configuration, subcommand pipelines and output.

pub mod config;
pub mod output;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use thiserror::Error;

use graftlab::assembly::run_experiment;
use graftlab::cylinder::{
    is_nearly_circular, NearnessParams, RoundCylinder, SupportedRectangle, DEFAULT_NODES,
};
use graftlab::experiments::{approx_table, cylinder_report, eta_sweep, xi_sweep};
use graftlab::grafting::{graft, thurston_metric_summary, two_pi_graft};
use graftlab::presets::validate_presets;

use config::{
    parse, ApproxConfig, CylinderConfig, EtaBenchConfig, GraftConfig, Overrides, QcConfig,
    XiBenchConfig,
};
use output::{emit_csv, emit_svg, write_atomic, Cell, PlotSpec, Table};

pub const THREADS_VAR: &str = "GRAFTLAB_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("config error at `{path}` (line {line}, column {column}): {message}")]
    Config {
        path: String,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("invalid `{path}`: {message}")]
    Validation { path: String, message: String },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Numeric(_) => 2,
            _ => 1,
        }
    }
}

fn numeric(e: impl std::fmt::Display) -> CliError {
    CliError::Numeric(e.to_string())
}

#[derive(Debug, Parser)]
#[command(
    name = "graftlab",
    version,
    about = "Grafting, traintrack approximation and sampled distortion experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output CSV path; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    samples: Option<usize>,
    /// Geometric tolerance for predicates.
    #[arg(long, global = true)]
    tolerance: Option<f64>,
    /// Also write an SVG plot next to the CSV.
    #[arg(long, global = true)]
    svg: bool,
}

#[derive(Debug, Clone, Subcommand)]
enum Command {
    /// Integer switch-condition approximation along a ray.
    Approx,
    /// Thurston-metric summary of a grafted surface.
    Graft,
    /// Modulus and plane-distance report for circle pairs.
    Cylinder,
    /// Distortion sweep of the leaf-affine rectangle map.
    XiBench,
    /// Distortion sweep of the concentric correction.
    EtaBench,
    /// Distortion bound between a 2 pi-grafting and a large grafting.
    QcExperiment,
    /// Check presets, or a configuration for the named subcommand.
    Validate { target: Option<String> },
}

/// Result of a pipeline: the table, an optional plot, and the error that
/// truncated it, if any.
struct Outcome {
    table: Table,
    plot: Option<String>,
    failure: Option<CliError>,
}

impl Outcome {
    fn complete(table: Table, plot: Option<String>) -> Self {
        Outcome {
            table,
            plot,
            failure: None,
        }
    }
}

fn read_config(path: &Option<PathBuf>) -> Result<String, CliError> {
    let p = path
        .as_ref()
        .ok_or_else(|| CliError::Usage("--config <path> is required".into()))?;
    std::fs::read_to_string(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))
}

fn approx(text: &str) -> Result<Outcome, CliError> {
    let (track, w, grid) = parse::<ApproxConfig>(text)?.resolve()?;
    let rows = approx_table(&track, &w, &grid).map_err(numeric)?;
    let mut t = Table::new(&["t", "branch_id", "w_i", "m_i", "error_i", "D_achieved"]);
    for r in rows {
        t.push(vec![
            r.t.into(),
            r.branch_id.into(),
            r.w.into(),
            r.m.into(),
            r.error.into(),
            r.d_achieved.into(),
        ]);
    }
    Ok(Outcome::complete(t, None))
}

fn graft_summary(text: &str) -> Result<Outcome, CliError> {
    let g = parse::<GraftConfig>(text)?.resolve()?;
    let mut c =
        graft(g.surface, g.track, g.lamination, g.loops).map_err(|e| CliError::Validation {
            path: "loops".into(),
            message: e.to_string(),
        })?;
    if let Some(n) = &g.two_pi {
        c = two_pi_graft(&c, n).map_err(|e| CliError::Validation {
            path: "two_pi".into(),
            message: e.to_string(),
        })?;
    }
    let s = thurston_metric_summary(&c).map_err(numeric)?;
    let mut t = Table::new(&["loop_id", "length", "weight", "modulus", "area"]);
    for cyl in &s.cylinders {
        t.push(vec![
            cyl.loop_id.clone().into(),
            cyl.circumference.into(),
            cyl.height.into(),
            cyl.modulus.into(),
            (cyl.circumference * cyl.height).into(),
        ]);
    }
    t.push(vec![
        "hyperbolic".into(),
        Cell::Empty,
        Cell::Empty,
        Cell::Empty,
        s.hyperbolic_area.into(),
    ]);
    t.push(vec![
        "total".into(),
        Cell::Empty,
        Cell::Empty,
        Cell::Empty,
        s.total_area.into(),
    ]);
    Ok(Outcome::complete(t, None))
}

fn cylinder(text: &str, ov: Overrides) -> Result<Outcome, CliError> {
    let pairs = parse::<CylinderConfig>(text)?.resolve(ov)?;
    let rows = cylinder_report(&pairs).map_err(|e| CliError::Validation {
        path: "pairs".into(),
        message: e.to_string(),
    })?;
    let mut t = Table::new(&[
        "index",
        "core_length",
        "modulus",
        "plane_distance",
        "difference",
    ]);
    for r in rows {
        t.push(vec![
            (r.index as i64).into(),
            r.core_length.into(),
            r.modulus.into(),
            r.plane_distance.into(),
            r.difference.into(),
        ]);
    }
    Ok(Outcome::complete(t, None))
}

fn plot_spec<'a>(title: &'a str, x: &'a str, y: &'a str) -> PlotSpec<'a> {
    PlotSpec {
        title,
        x_label: x,
        y_label: y,
        log_x: true,
    }
}

fn xi_bench(text: &str, ov: Overrides) -> Result<Outcome, CliError> {
    let (deltas, width, seed, cfg) = parse::<XiBenchConfig>(text)?.resolve(ov)?;
    let rows = xi_sweep(&deltas, width, seed, &cfg).map_err(numeric)?;
    let mut t = Table::new(&["delta", "V", "A_est", "B_est", "K_qc_est"]);
    for r in &rows {
        t.push(vec![
            r.delta.into(),
            r.v.into(),
            r.a_est.into(),
            r.b_est.into(),
            r.k_qc_est.into(),
        ]);
    }
    let pts: Vec<_> = rows.iter().map(|r| (r.delta, r.a_est)).collect();
    Ok(Outcome::complete(
        t,
        Some(emit_svg(
            &pts,
            &plot_spec("xi distortion", "delta", "A_est"),
        )),
    ))
}

fn eta_bench(text: &str, ov: Overrides) -> Result<Outcome, CliError> {
    let (deltas, w, seed, cfg, seam) = parse::<EtaBenchConfig>(text)?.resolve(ov)?;
    let rows = eta_sweep(&deltas, w, seed, &cfg, seam).map_err(numeric)?;
    let mut t = Table::new(&[
        "delta",
        "sup_displacement",
        "A_est",
        "B_est",
        "K_qc_est",
        "seam_residual",
    ]);
    for r in &rows {
        t.push(vec![
            r.delta.into(),
            r.sup_displacement.into(),
            r.a_est.into(),
            r.b_est.into(),
            r.k_qc_est.into(),
            r.seam_residual.into(),
        ]);
    }
    let pts: Vec<_> = rows.iter().map(|r| (r.delta, r.a_est)).collect();
    Ok(Outcome::complete(
        t,
        Some(emit_svg(
            &pts,
            &plot_spec("eta distortion", "delta", "A_est"),
        )),
    ))
}

fn qc_experiment(text: &str, ov: Overrides) -> Result<Outcome, CliError> {
    let setup = parse::<QcConfig>(text)?.resolve(ov)?;
    let outcome = run_experiment(&setup);
    let mut t = Table::new(&[
        "t",
        "D_achieved",
        "A_est",
        "B_est",
        "K_qc_est",
        "teich_bound",
        "seam_max",
        "status",
    ]);
    for r in &outcome.reports {
        let status = if r.fold_free { "ok" } else { "fold" };
        t.push(vec![
            r.t.into(),
            r.d_achieved.into(),
            r.a_est.into(),
            r.b_est.into(),
            r.k_qc_est.into(),
            r.teich_bound.into(),
            r.seam_max.into(),
            status.into(),
        ]);
    }
    let failure = outcome.failure.map(|(at, e)| {
        let mut row = vec![Cell::Float(at)];
        row.extend(std::iter::repeat_n(Cell::Empty, 6));
        row.push(format!("error: {e}").into());
        t.push(row);
        CliError::Numeric(format!("t = {at}: {e}"))
    });
    let pts: Vec<_> = outcome
        .reports
        .iter()
        .map(|r| (r.t, r.teich_bound))
        .collect();
    let plot = emit_svg(
        &pts,
        &plot_spec("Teichmüller distance bound", "t", "teich_bound"),
    );
    Ok(Outcome {
        table: t,
        plot: Some(plot),
        failure,
    })
}

/// Runs every module validator on built-in data.
fn validate_builtin() -> Result<Outcome, CliError> {
    let mut t = Table::new(&["check", "ok", "detail"]);
    let mut all = true;
    for c in validate_presets() {
        all &= c.ok;
        t.push(vec![
            c.name.into(),
            c.ok.to_string().into(),
            c.detail.into(),
        ]);
    }
    let rect = RoundCylinder::standard(0.0, std::f64::consts::TAU)
        .and_then(|h| SupportedRectangle::circular(h, 10.0, DEFAULT_NODES))
        .map(|r| is_nearly_circular(&r, &NearnessParams::new(0.01, 6.0)).ok);
    let ok = matches!(rect, Ok(true));
    all &= ok;
    t.push(vec![
        "circular-rectangle".into(),
        ok.to_string().into(),
        format!("{rect:?}").into(),
    ]);
    let failure = (!all).then(|| CliError::Validation {
        path: "presets".into(),
        message: "a built-in check failed".into(),
    });
    Ok(Outcome {
        table: t,
        plot: None,
        failure,
    })
}

fn validate(
    target: Option<&str>,
    text: Option<String>,
    ov: Overrides,
) -> Result<Outcome, CliError> {
    let target = target.unwrap_or("presets");
    if target == "presets" {
        return validate_builtin();
    }
    let text = text.ok_or_else(|| CliError::Usage(format!("validate {target} needs --config")))?;
    match target {
        "approx" => parse::<ApproxConfig>(&text)?.resolve().map(drop),
        "graft" => parse::<GraftConfig>(&text)?.resolve().map(drop),
        "cylinder" => parse::<CylinderConfig>(&text)?.resolve(ov).map(drop),
        "xi-bench" => parse::<XiBenchConfig>(&text)?.resolve(ov).map(drop),
        "eta-bench" => parse::<EtaBenchConfig>(&text)?.resolve(ov).map(drop),
        "qc-experiment" => parse::<QcConfig>(&text)?.resolve(ov).map(drop),
        other => Err(CliError::Usage(format!(
            "unknown validation target `{other}`"
        ))),
    }?;
    let mut t = Table::new(&["check", "ok", "detail"]);
    t.push(vec![target.into(), "true".into(), "config is valid".into()]);
    Ok(Outcome::complete(t, None))
}

fn thread_count() -> Result<Option<usize>, CliError> {
    match std::env::var(THREADS_VAR) {
        Err(_) => Ok(None),
        Ok(v) => match v.trim().parse::<usize>() {
            Ok(n) if n > 0 => Ok(Some(n)),
            _ => Err(CliError::Validation {
                path: THREADS_VAR.into(),
                message: format!("`{v}` is not a positive integer"),
            }),
        },
    }
}

fn dispatch(cli: &Cli) -> Result<Outcome, CliError> {
    let ov = Overrides {
        seed: cli.seed,
        samples: cli.samples,
    };
    if let Some(tol) = cli.tolerance {
        if !(tol > 0.0 && tol.is_finite()) {
            return Err(CliError::Validation {
                path: "--tolerance".into(),
                message: format!("{tol} is not positive"),
            });
        }
        graftlab::tolerance::set_geometric(tol);
    }
    match &cli.command {
        Command::Validate { target } => {
            let text = cli
                .config
                .as_ref()
                .map(|_| read_config(&cli.config))
                .transpose()?;
            validate(target.as_deref(), text, ov)
        }
        cmd => {
            let text = read_config(&cli.config)?;
            match cmd {
                Command::Approx => approx(&text),
                Command::Graft => graft_summary(&text),
                Command::Cylinder => cylinder(&text, ov),
                Command::XiBench => xi_bench(&text, ov),
                Command::EtaBench => eta_bench(&text, ov),
                Command::QcExperiment => qc_experiment(&text, ov),
                Command::Validate { .. } => unreachable!(),
            }
        }
    }
}

fn emit(cli: &Cli, outcome: &Outcome) -> Result<(), CliError> {
    let csv = emit_csv(&outcome.table)?;
    match &cli.out {
        Some(path) => {
            write_atomic(path, &csv)?;
            if cli.svg {
                if let Some(svg) = &outcome.plot {
                    write_atomic(&path.with_extension("svg"), svg)?;
                }
            }
        }
        None => {
            if cli.svg {
                return Err(CliError::Usage("--svg needs --out".into()));
            }
            print!("{csv}");
        }
    }
    Ok(())
}

fn execute(cli: &Cli) -> Result<(), CliError> {
    let outcome = match thread_count()? {
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| CliError::Usage(e.to_string()))?
            .install(|| dispatch(cli)),
        None => dispatch(cli),
    }?;
    emit(cli, &outcome)?;
    match outcome.failure {
        Some(e) => Err(e),
        None => Ok(()),
    }
}

/// Runs the command line `argv` (program name first) and returns the exit
/// code: 0 on success, 1 for usage, configuration or validation errors, 2 for
/// numeric failures.
pub fn run<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("graftlab: {e}");
            e.exit_code()
        }
    }
}
