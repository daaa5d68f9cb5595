//! Load sweeps over schemes, producing blocking and utilization tables.

use std::fs::File;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use thiserror::Error;

use crate::config::{SchemeKind, SimSettings, SweepConfig};
use crate::markov::{analyze, quasi_stationary_curve, ChainError};
use crate::sim::{run_simulation, ClassStats, Scenario, Scheme, SimError};
use crate::traffic::{classify_load, LoadCondition, ThresholdVector};

pub const CSV_HEADER: &str = "scheme,lambda_total,class,blocking_analytic,blocking_sim,\
blocking_sim_stderr,utilization_analytic,utilization_sim,mode";

#[derive(Debug, Error)]
pub enum SweepError {
    #[error("{scheme} at lambda_total = {lambda_total}: {source}")]
    Analytic {
        scheme: &'static str,
        lambda_total: f64,
        #[source]
        source: ChainError,
    },
    #[error("{scheme} at lambda_total = {lambda_total}, seed {seed}: {source}")]
    Simulation {
        scheme: &'static str,
        lambda_total: f64,
        seed: u64,
        #[source]
        source: SimError,
    },
    #[error("{scheme} requires fixed thresholds")]
    MissingThresholds { scheme: &'static str },
    #[error("cannot write {path}: {source}")]
    Write {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

/// One CSV line. `class` is 1-based, 0 is the rate-weighted aggregate.
#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scheme: SchemeKind,
    pub lambda_total: f64,
    pub class: usize,
    pub blocking_analytic: f64,
    pub blocking_sim: Option<f64>,
    pub blocking_sim_stderr: Option<f64>,
    pub utilization_analytic: f64,
    pub utilization_sim: Option<f64>,
    pub mode: LoadCondition,
}

struct Analytic {
    /// Aggregate first, then each class.
    blocking: Vec<f64>,
    utilization: f64,
}

struct Simulated {
    stats: Vec<ClassStats>,
    utilization: f64,
}

fn analytic_point(
    config: &SweepConfig,
    scheme: SchemeKind,
    lambda_total: f64,
) -> Result<Analytic, ChainError> {
    let params = &config.params;
    let rates = config.mix.rates(lambda_total)?;
    let shared = || ThresholdVector::uniform(params.capacity(), params.class_count());
    let report = match scheme {
        SchemeKind::NonPriority => analyze(&shared()?, &rates, params.service_rate())?,
        SchemeKind::Dynamic => {
            if classify_load(&rates, params) == LoadCondition::Light {
                // identical to the shared pool, evaluated the same way
                analyze(&shared()?, &rates, params.service_rate())?
            } else {
                let mut curve = quasi_stationary_curve(params, &config.mix, &[lambda_total])?;
                curve.remove(0).report
            }
        }
        SchemeKind::FixedGuard => {
            let thresholds = config
                .fixed_thresholds
                .as_ref()
                .expect("validated fixed thresholds");
            analyze(thresholds, &rates, params.service_rate())?
        }
    };
    let mut blocking = vec![report.overall_blocking(&rates)];
    blocking.extend(report.blocking.iter().copied());
    Ok(Analytic {
        blocking,
        utilization: report.utilization,
    })
}

fn simulate_point(
    config: &SweepConfig,
    settings: &SimSettings,
    scheme: &Scheme,
    lambda_total: f64,
) -> Result<Simulated, SweepError> {
    let classes = config.params.class_count();
    // nominal run length for the arrival budget; the budget normally ends it
    let measured = settings.arrivals as f64 / lambda_total;
    let nominal = measured / (1.0 - settings.warmup_fraction);
    let rates = config
        .mix
        .rates(lambda_total)
        .map_err(|e| SweepError::Analytic {
            scheme: scheme.label(),
            lambda_total,
            source: e.into(),
        })?;

    let mut stats = vec![ClassStats::default(); classes];
    let mut utilization = 0.0;
    for &seed in &settings.seeds {
        let mut scenario = Scenario::constant(
            config.params,
            rates.clone(),
            2.0 * nominal,
            seed,
            scheme.clone(),
        )
        .with_warmup(settings.warmup_fraction * nominal)
        .with_arrival_budget(settings.arrivals);
        scenario.smoothing = settings.smoothing;
        let report = run_simulation(&scenario).map_err(|source| SweepError::Simulation {
            scheme: scheme.label(),
            lambda_total,
            seed,
            source,
        })?;
        for (acc, c) in stats.iter_mut().zip(&report.classes) {
            acc.offered += c.offered;
            acc.blocked += c.blocked;
        }
        utilization += report.utilization;
    }
    Ok(Simulated {
        stats,
        utilization: utilization / settings.seeds.len() as f64,
    })
}

fn sim_scheme(config: &SweepConfig, kind: SchemeKind) -> Result<Scheme, SweepError> {
    Ok(match kind {
        SchemeKind::Dynamic => Scheme::DynamicProposed,
        SchemeKind::NonPriority => Scheme::NonPriority,
        SchemeKind::FixedGuard => Scheme::FixedGuard(
            config
                .fixed_thresholds
                .clone()
                .ok_or(SweepError::MissingThresholds {
                    scheme: kind.label(),
                })?,
        ),
    })
}

fn point_rows(
    config: &SweepConfig,
    scheme: SchemeKind,
    lambda_total: f64,
) -> Result<Vec<ResultRow>, SweepError> {
    if scheme == SchemeKind::FixedGuard && config.fixed_thresholds.is_none() {
        return Err(SweepError::MissingThresholds {
            scheme: scheme.label(),
        });
    }
    let analytic =
        analytic_point(config, scheme, lambda_total).map_err(|source| SweepError::Analytic {
            scheme: scheme.label(),
            lambda_total,
            source,
        })?;
    let simulated = match &config.simulation {
        Some(settings) => Some(simulate_point(
            config,
            settings,
            &sim_scheme(config, scheme)?,
            lambda_total,
        )?),
        None => None,
    };
    let mode = config
        .mix
        .rates(lambda_total)
        .map(|r| classify_load(&r, &config.params))
        .unwrap_or(LoadCondition::Light);

    let rows = analytic
        .blocking
        .iter()
        .enumerate()
        .map(|(class, &blocking_analytic)| {
            let stats = simulated.as_ref().map(|s| {
                if class == 0 {
                    s.stats.iter().fold(ClassStats::default(), |acc, c| ClassStats {
                        offered: acc.offered + c.offered,
                        blocked: acc.blocked + c.blocked,
                    })
                } else {
                    s.stats[class - 1]
                }
            });
            ResultRow {
                scheme,
                lambda_total,
                class,
                blocking_analytic,
                blocking_sim: stats.and_then(|s| s.blocking()),
                blocking_sim_stderr: stats.and_then(|s| s.stderr()),
                utilization_analytic: analytic.utilization,
                utilization_sim: simulated.as_ref().map(|s| s.utilization),
                mode,
            }
        })
        .collect();
    Ok(rows)
}

/// Evaluates every (scheme, λ_T) pair. Rows come out ordered by scheme
/// (configuration order), then grid point, then class.
pub fn run_sweep(config: &SweepConfig) -> Result<Vec<ResultRow>, SweepError> {
    let jobs: Vec<(SchemeKind, f64)> = config
        .schemes
        .iter()
        .flat_map(|&s| config.grid.iter().map(move |&l| (s, l)))
        .collect();
    let blocks = jobs
        .par_iter()
        .map(|&(scheme, lambda_total)| point_rows(config, scheme, lambda_total))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(blocks.into_iter().flatten().collect())
}

/// Formats with 9 significant digits, `%g` style.
pub fn format_real(x: f64) -> String {
    if x == 0.0 {
        return "0".to_string();
    }
    if !x.is_finite() {
        return x.to_string();
    }
    const DIGITS: i32 = 9;
    let sci = format!("{:.*e}", (DIGITS - 1) as usize, x);
    let (mantissa, exponent) = sci.split_once('e').expect("exponent present");
    let exponent: i32 = exponent.parse().expect("integer exponent");
    if (-4..DIGITS).contains(&exponent) {
        let decimals = (DIGITS - 1 - exponent).max(0) as usize;
        trim_zeros(format!("{x:.decimals$}"))
    } else {
        format!("{}e{exponent}", trim_zeros(mantissa.to_string()))
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

fn optional(x: Option<f64>) -> String {
    x.map(format_real).unwrap_or_default()
}

pub fn write_csv<W: Write>(rows: &[ResultRow], mut out: W) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for row in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{}",
            row.scheme.label(),
            format_real(row.lambda_total),
            row.class,
            format_real(row.blocking_analytic),
            optional(row.blocking_sim),
            optional(row.blocking_sim_stderr),
            format_real(row.utilization_analytic),
            optional(row.utilization_sim),
            row.mode,
        )?;
    }
    out.flush()
}

/// Writes the table to `path`, replacing any existing file.
pub fn emit_csv(rows: &[ResultRow], path: &Path) -> Result<(), SweepError> {
    let wrap = |source| SweepError::Write {
        path: path.to_path_buf(),
        source,
    };
    let file = File::create(path).map_err(wrap)?;
    write_csv(rows, io::BufWriter::new(file)).map_err(wrap)
}
