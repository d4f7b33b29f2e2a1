use std::path::Path;

use serde::Serialize;

use super::ldp::LdpTable;
use crate::averaging::AveragingTable;
use crate::Result;

pub const REPORT_SCHEMA: &str = "mvldp-report/1";

/// A table destined for the report directory.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", content = "table", rename_all = "snake_case")]
pub enum ReportTable {
    Ldp(LdpTable),
    Averaging(AveragingTable),
}

impl ReportTable {
    fn stem(&self) -> &'static str {
        match self {
            ReportTable::Ldp(_) => "ldp",
            ReportTable::Averaging(_) => "averaging",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Artifact {
    pub file: String,
    pub kind: &'static str,
    pub rows: usize,
}

/// Everything needed to reproduce the tables, plus the artifacts written.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Manifest {
    pub schema: &'static str,
    pub software_version: &'static str,
    /// Caller-supplied run configuration, e.g. the parsed config file.
    pub config: serde_json::Value,
    pub wall_clock_seconds: f64,
    pub artifacts: Vec<Artifact>,
    pub tables: Vec<ReportTable>,
}

/// Writes one CSV per table and `manifest.json` into `dir`, creating it if needed.
pub fn emit_report(tables: &[ReportTable], dir: &Path, config: serde_json::Value, wall_clock_seconds: f64) -> Result<Manifest> {
    std::fs::create_dir_all(dir)?;
    let mut artifacts = Vec::with_capacity(tables.len());
    for (i, table) in tables.iter().enumerate() {
        let file = format!("{}_{i}.csv", table.stem());
        let path = dir.join(&file);
        let rows = match table {
            ReportTable::Ldp(t) => {
                t.write_csv(&path)?;
                t.rows.len()
            }
            ReportTable::Averaging(t) => {
                t.write_csv(&path)?;
                t.rows.len()
            }
        };
        artifacts.push(Artifact {
            file,
            kind: table.stem(),
            rows,
        });
    }
    let manifest = Manifest {
        schema: REPORT_SCHEMA,
        software_version: env!("CARGO_PKG_VERSION"),
        config,
        wall_clock_seconds,
        artifacts,
        tables: tables.to_vec(),
    };
    std::fs::write(dir.join("manifest.json"), serde_json::to_string_pretty(&manifest)?)?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiments::{ldp_tail_estimate, RateReference, TailEvent};
    use crate::model::build_gaussian_model;
    use crate::sde::SimConfig;

    fn table(seed: u64) -> LdpTable {
        let spec = build_gaussian_model(1.0, 1.0).unwrap();
        let cfg = SimConfig::new(0.4, 0.16, 1.0, 0.016, 250, seed, vec![0.0], vec![0.0]).unwrap();
        ldp_tail_estimate(&spec, &cfg, &TailEvent::geq(0.5), &[0.4, 0.2], 1000, &RateReference::Given(0.125)).unwrap()
    }

    #[test]
    fn empty_report_has_no_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let m = emit_report(&[], dir.path(), serde_json::Value::Null, 0.0).unwrap();
        assert!(m.artifacts.is_empty());
        assert!(dir.path().join("manifest.json").exists());
    }

    #[test]
    fn fan_out_and_determinism() {
        let dir = tempfile::tempdir().unwrap();
        let tables = vec![ReportTable::Ldp(table(1)), ReportTable::Ldp(table(2))];
        let m = emit_report(&tables, dir.path(), serde_json::json!({"seed": [1, 2]}), 1.5).unwrap();
        assert_eq!(m.artifacts.len(), 2);
        let text = std::fs::read_to_string(dir.path().join("manifest.json")).unwrap();
        assert!(text.contains(REPORT_SCHEMA) && text.contains("ldp_0.csv") && text.contains("ldp_1.csv"));
        let header = std::fs::read_to_string(dir.path().join("ldp_0.csv")).unwrap();
        assert!(header.starts_with("eps,delta,p_hat,ci_lo,ci_hi,neg_eps_log_p,i_ref,n_samples,method\n"));

        let again = tempfile::tempdir().unwrap();
        emit_report(&[ReportTable::Ldp(table(1)), ReportTable::Ldp(table(2))], again.path(), serde_json::Value::Null, 9.0).unwrap();
        for f in ["ldp_0.csv", "ldp_1.csv"] {
            assert_eq!(
                std::fs::read(dir.path().join(f)).unwrap(),
                std::fs::read(again.path().join(f)).unwrap()
            );
        }
    }

    #[test]
    fn unwritable_location_is_io_error() {
        let dir = tempfile::tempdir().unwrap();
        let blocker = dir.path().join("file");
        std::fs::write(&blocker, "x").unwrap();
        let err = emit_report(&[], &blocker.join("sub"), serde_json::Value::Null, 0.0).unwrap_err();
        assert_eq!(err.kind(), crate::ErrorKind::Io);
    }
}
