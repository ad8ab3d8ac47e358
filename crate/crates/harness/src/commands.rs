//! Subcommand implementations. Each writes its CSV and metrics files into
//! the output directory and returns what it wrote.

use std::path::{Path, PathBuf};

use lincf_core::filters::{FilterDesign, FilterVariant};
use lincf_core::log::Table;
use lincf_core::lyapunov::residual;
use lincf_core::scenario::{replay_frames, run_control, run_estimation};

use crate::config::{Config, GainFile};
use crate::error::{HarnessError, Result};
use crate::imu::parse_imu_csv;
use crate::metrics::RunMetrics;
use crate::sweep::{run_sweep, runs_table, SweepRun, SweepSummary};

fn ensure_dir(out: &Path) -> Result<()> {
    std::fs::create_dir_all(out).map_err(|e| HarnessError::io(out, e))
}

fn save_table(table: &Table, path: PathBuf) -> Result<PathBuf> {
    table.save(&path).map_err(|e| HarnessError::io(&path, e))?;
    Ok(path)
}

#[derive(Debug, Clone)]
pub struct EstimateOutput {
    pub variant: FilterVariant,
    pub csv: PathBuf,
    pub metrics: RunMetrics,
}

/// Run the requested filter variants on the simulated scenario, or on the
/// IMU log at `input` when given. Writes `estimate_<variant>.csv` and
/// `metrics_estimate_<variant>.toml`.
pub fn estimate(cfg: &Config, input: Option<&Path>, out: &Path) -> Result<Vec<EstimateOutput>> {
    let integrator = cfg.integrator()?;
    let designs: Vec<(FilterVariant, FilterDesign)> = cfg
        .variants()?
        .into_iter()
        .map(|v| cfg.filter_design(v).map(|d| (v, d)))
        .collect::<Result<_>>()?;
    let frames = match input {
        Some(path) => {
            if designs[0].1.channels().len() != 2 {
                return Err(HarnessError::Config(
                    "log replay needs exactly two references (gravity, magnetic field)".into(),
                ));
            }
            Some(parse_imu_csv(path)?.iter().map(|r| r.to_frame()).collect::<Vec<_>>())
        }
        None => None,
    };
    let scenario = match frames {
        Some(_) => None,
        None => Some(cfg.estimation_scenario()?),
    };
    ensure_dir(out)?;

    let mut outputs = Vec::new();
    for (variant, design) in designs {
        let label = format!("estimate_{variant}");
        let (table, metrics) = match (&frames, &scenario) {
            (Some(frames), _) => {
                let table = replay_frames(&design, integrator, frames.iter().cloned())?;
                let m = RunMetrics::from_replay(&label, &table);
                (table, m)
            }
            (None, Some(sc)) => {
                let run = run_estimation(&design, sc)?;
                let m = RunMetrics::from_estimation(&label, &run.table);
                (run.table, m)
            }
            (None, None) => unreachable!("scenario built when no input is given"),
        };
        let csv = save_table(&table, out.join(format!("{label}.csv")))?;
        metrics.save(&out.join(format!("metrics_{label}.toml")))?;
        outputs.push(EstimateOutput { variant, csv, metrics });
    }
    Ok(outputs)
}

#[derive(Debug, Clone)]
pub struct ControlOutput {
    pub csv: PathBuf,
    pub metrics: RunMetrics,
    pub table: Table,
}

/// Closed-loop stabilization run. Writes `control.csv` and `metrics_control.toml`.
pub fn control(cfg: &Config, out: &Path) -> Result<ControlOutput> {
    let sc = cfg.control_scenario()?;
    let run = run_control(&sc)?;
    ensure_dir(out)?;
    let metrics = RunMetrics::from_control("control", &run.table, sc.control_rate);
    let csv = save_table(&run.table, out.join("control.csv"))?;
    metrics.save(&out.join("metrics_control.toml"))?;
    Ok(ControlOutput {
        csv,
        metrics,
        table: run.table,
    })
}

#[derive(Debug, Clone)]
pub struct SweepOutput {
    pub runs: Vec<SweepRun>,
    pub summary: SweepSummary,
    pub csv: PathBuf,
}

/// `count` closed-loop runs from random initial conditions drawn from the
/// configured seed. Writes `sweep_runs.csv` and `sweep_summary.toml`.
pub fn sweep(cfg: &Config, count: usize, out: &Path) -> Result<SweepOutput> {
    if count == 0 {
        return Err(HarnessError::Config("sweep count must be at least 1".into()));
    }
    let base = cfg.control_scenario()?;
    let (runs, summary) = run_sweep(&base, cfg.scenario.seed, count);
    ensure_dir(out)?;
    let csv = save_table(&runs_table(&runs), out.join("sweep_runs.csv"))?;
    let path = out.join("sweep_summary.toml");
    let text = toml::to_string(&summary).expect("summary is serializable");
    std::fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))?;
    Ok(SweepOutput { runs, summary, csv })
}

/// Check the configured gains for each requested variant, solve the
/// Lyapunov equations and write `gains_<variant>.toml`.
pub fn design_gains(cfg: &Config, out: &Path) -> Result<Vec<(PathBuf, GainFile)>> {
    let mut files = Vec::new();
    for variant in cfg.variants()? {
        let design = cfg.filter_design(variant)?;
        let gammas: Vec<Vec<f64>> = design.channels().iter().map(|c| c.gains.as_slice().to_vec()).collect();
        let hurwitz = design.channels().iter().all(|c| c.gains.is_hurwitz().unwrap_or(false));
        let passive_admissible = design.channels().iter().all(|c| c.gains.in_hbar().unwrap_or(false));
        let binomial = cfg.filter.gains.is_empty() && cfg.filter.gains_file.is_none();
        let alpha = binomial.then_some(cfg.filter.alpha);
        let file = GainFile {
            order: design.order(),
            alpha,
            variant: variant.to_string(),
            gammas,
            hurwitz,
            passive_admissible,
            lyapunov_q: "identity".into(),
            lyapunov_p: design
                .channels()
                .iter()
                .map(|c| c.p.row_iter().map(|r| r.iter().copied().collect()).collect())
                .collect(),
            lyapunov_residual: design.channels().iter().map(|c| residual(&c.a, &c.p, &c.q)).collect(),
        };
        ensure_dir(out)?;
        let path = out.join(format!("gains_{variant}.toml"));
        let text = toml::to_string(&file).expect("gain file is serializable");
        std::fs::write(&path, text).map_err(|e| HarnessError::io(&path, e))?;
        files.push((path, file));
    }
    Ok(files)
}
