//! Run manifests and CSV report emission.
//!
//! Every output file starts with a `# manifest <hash>` line so results can
//! be traced back to the exact configuration that produced them. Two runs
//! with equal manifests and a fixture predictor emit byte-identical files.

use std::io::Write;

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::harness::MetricsReport;
use super::metrics::DENSITY_FLOOR;
use super::stats::DatasetStats;
use super::EvalError;
use crate::predict::PROMPT_VERSION;
use crate::scene::SCENE_TEXT_VERSION;

/// Everything that determines a run's outputs.
#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub scene_text_version: &'static str,
    pub prompt_version: &'static str,
    pub density_floor: f64,
    pub subset: Option<String>,
    pub records_evaluated: usize,
    pub records_failed: usize,
    pub config: serde_json::Value,
}

impl RunManifest {
    pub fn for_report(report: &MetricsReport) -> RunManifest {
        RunManifest {
            scene_text_version: SCENE_TEXT_VERSION,
            prompt_version: PROMPT_VERSION,
            density_floor: DENSITY_FLOOR,
            subset: report.subset.clone(),
            records_evaluated: report.evaluations.len(),
            records_failed: report.failures.len(),
            config: serde_json::to_value(&report.config).expect("config serializes"),
        }
    }

    /// Manifest for non-evaluation commands, from any serializable config.
    pub fn for_config<C: Serialize>(config: &C) -> RunManifest {
        RunManifest {
            scene_text_version: SCENE_TEXT_VERSION,
            prompt_version: PROMPT_VERSION,
            density_floor: DENSITY_FLOOR,
            subset: None,
            records_evaluated: 0,
            records_failed: 0,
            config: serde_json::to_value(config).expect("config serializes"),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    /// Hash embedded in every output file.
    pub fn hash(&self) -> String {
        let digest = Sha256::digest(self.to_json().as_bytes());
        let mut hex = String::with_capacity(16);
        for byte in digest.iter().take(8) {
            hex.push_str(&format!("{byte:02x}"));
        }
        hex
    }
}

fn io(e: std::io::Error) -> EvalError {
    EvalError::Io(e.to_string())
}

/// `method,t,mean_nll,std_nll,records` rows, one block per method.
pub fn write_nll_curves<W: Write>(
    writer: &mut W,
    report: &MetricsReport,
    manifest: &RunManifest,
) -> Result<(), EvalError> {
    writeln!(writer, "# manifest {}", manifest.hash()).map_err(io)?;
    writeln!(writer, "method,t,mean_nll,std_nll,records").map_err(io)?;
    for method in report.methods() {
        for (t, mean, std, n) in report.nll_curve(method) {
            writeln!(writer, "{method},{t:.3},{mean:.6},{std:.6},{n}").map_err(io)?;
        }
    }
    Ok(())
}

/// Windowed NLL means: `method,window,mean_nll,records`.
pub fn write_windowed_nll<W: Write>(
    writer: &mut W,
    report: &MetricsReport,
    manifest: &RunManifest,
) -> Result<(), EvalError> {
    writeln!(writer, "# manifest {}", manifest.hash()).map_err(io)?;
    writeln!(writer, "method,window_s,mean_nll,records").map_err(io)?;
    for (method, window, mean, n) in report.windowed_nll() {
        writeln!(writer, "{method},{},{mean:.6},{n}", window.label()).map_err(io)?;
    }
    Ok(())
}

/// Best-of-N ADE table: `method,n,window,ade_m,records`.
pub fn write_ade_table<W: Write>(
    writer: &mut W,
    report: &MetricsReport,
    manifest: &RunManifest,
) -> Result<(), EvalError> {
    writeln!(writer, "# manifest {}", manifest.hash()).map_err(io)?;
    let unit = if report.config.squared_ade { "m2" } else { "m" };
    writeln!(writer, "method,n,window_s,ade_{unit},records").map_err(io)?;
    for (method, n, window, mean, count) in report.ade_rows() {
        writeln!(writer, "{method},{n},{},{mean:.6},{count}", window.label()).map_err(io)?;
    }
    Ok(())
}

/// Top-10 interaction accuracy: `interaction,granularity,hits,records,accuracy`.
pub fn write_accuracy<W: Write>(
    writer: &mut W,
    report: &MetricsReport,
    manifest: &RunManifest,
) -> Result<(), EvalError> {
    writeln!(writer, "# manifest {}", manifest.hash()).map_err(io)?;
    writeln!(writer, "interaction,granularity,hits,records,accuracy").map_err(io)?;
    for (slot, granularity, hits, total) in report.accuracy_rows() {
        let accuracy = if total > 0 {
            format!("{:.4}", hits as f64 / total as f64)
        } else {
            "absent".to_string()
        };
        writeln!(writer, "{slot},{granularity},{hits},{total},{accuracy}").map_err(io)?;
    }
    Ok(())
}

/// Steady-state horizons: per-record rows plus a mean row.
pub fn write_horizons<W: Write>(
    writer: &mut W,
    report: &MetricsReport,
    manifest: &RunManifest,
) -> Result<(), EvalError> {
    writeln!(writer, "# manifest {}", manifest.hash()).map_err(io)?;
    writeln!(writer, "record,steady_horizon_s").map_err(io)?;
    let (rows, mean) = report.horizon_rows();
    for (record, horizon) in rows {
        match horizon {
            Some(h) => writeln!(writer, "{record},{h:.3}").map_err(io)?,
            None => writeln!(writer, "{record},not_reached").map_err(io)?,
        }
    }
    match mean {
        Some(m) => writeln!(writer, "mean,{m:.3}").map_err(io)?,
        None => writeln!(writer, "mean,not_reached").map_err(io)?,
    }
    Ok(())
}

/// Dataset statistics table: `attribute,mean,std`.
pub fn write_stats<W: Write>(
    writer: &mut W,
    stats: &DatasetStats,
    manifest: &RunManifest,
) -> Result<(), EvalError> {
    writeln!(writer, "# manifest {}", manifest.hash()).map_err(io)?;
    writeln!(writer, "attribute,mean,std").map_err(io)?;
    writeln!(writer, "records,{},", stats.records).map_err(io)?;
    writeln!(writer, "start_while_interacting,{},", stats.start_while_interacting).map_err(io)?;
    writeln!(writer, "start_while_walking,{},", stats.start_while_walking).map_err(io)?;
    let rows = [
        ("past_distance_m", stats.past_distance_m),
        ("future_distance_m", stats.future_distance_m),
        ("past_interactions", stats.past_interactions),
        ("future_interactions", stats.future_interactions),
        ("past_duration_s", stats.past_duration_s),
        ("past_time_interacting_s", stats.past_time_interacting_s),
        ("future_time_interacting_s", stats.future_time_interacting_s),
        ("path_efficiency", stats.path_efficiency),
    ];
    for (name, value) in rows {
        writeln!(writer, "{name},{:.6},{:.6}", value.mean, value.std).map_err(io)?;
    }
    match stats.levenshtein_to_closest {
        Some(v) => writeln!(writer, "levenshtein_to_closest,{v:.6},").map_err(io)?,
        None => writeln!(writer, "levenshtein_to_closest,absent,").map_err(io)?,
    }
    Ok(())
}

/// Record-level failures: `record,error`.
pub fn write_failures<W: Write>(
    writer: &mut W,
    report: &MetricsReport,
    manifest: &RunManifest,
) -> Result<(), EvalError> {
    writeln!(writer, "# manifest {}", manifest.hash()).map_err(io)?;
    writeln!(writer, "record,error").map_err(io)?;
    for (record, error) in &report.failures {
        writeln!(writer, "{record},{}", error.replace(',', ";")).map_err(io)?;
    }
    Ok(())
}
