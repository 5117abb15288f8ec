//! Deterministic output formatting: CSV cells and provenance headers.

use serde::Serialize;
use tritilt::rates::TiltParams;

/// Decimal with `.` separator; scientific notation below 1e-3 in
/// magnitude. The default shortest-roundtrip formatting keeps repeat
/// invocations bit-identical.
pub fn fmt_f64(x: f64) -> String {
    if x == 0.0 {
        "0".to_string()
    } else if x.abs() < 1e-3 {
        format!("{x:e}")
    } else {
        format!("{x}")
    }
}

/// Quote a CSV cell when it embeds a comma.
pub fn csv_cell(text: &str) -> String {
    if text.contains(',') {
        format!("\"{text}\"")
    } else {
        text.to_string()
    }
}

/// Run provenance embedded in every JSON output and echoed alongside
/// CSV outputs.
#[derive(Debug, Clone, Serialize)]
pub struct Provenance {
    pub version: &'static str,
    pub command: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub master_seed: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tilt_descriptor: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tilt: Option<TiltParams>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub budgets: Option<Budgets>,
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct Budgets {
    pub total_steps: u64,
    pub steps_per_replica: u64,
    pub burnin_per_replica: u64,
    pub replicas: usize,
}

impl Provenance {
    pub fn new(command: &str) -> Self {
        Provenance {
            version: env!("CARGO_PKG_VERSION"),
            command: command.to_string(),
            master_seed: None,
            tilt_descriptor: None,
            tilt: None,
            budgets: None,
        }
    }
}

/// A JSON document: provenance header plus the payload under `report`.
pub fn json_document<T: Serialize>(header: &Provenance, report: &T) -> String {
    #[derive(Serialize)]
    struct Doc<'a, T> {
        #[serde(flatten)]
        header: &'a Provenance,
        report: &'a T,
    }
    serde_json::to_string_pretty(&Doc { header, report }).expect("serializable")
}

/// Write `text` to the path, or to stdout when no path is given.
pub fn emit(out: Option<&str>, text: &str) -> std::io::Result<()> {
    match out {
        Some(path) => std::fs::write(path, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}
