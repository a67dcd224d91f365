use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::Mode;
use crate::transform::rms;

/// CSV columns, in order.
pub const CSV_HEADER: &str =
    "pair_id,mode,success,eps_e_mm,eps_a_deg,calc_rms_mm,calc_max_mm,needle_rms_deg,needle_max_deg,time_ms";

/// One row of the CSV report. Landmark columns are empty when the pair has
/// no landmarks of that kind.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub pair_id: String,
    pub mode: Mode,
    pub success: bool,
    /// Empty when the registration itself failed.
    pub eps_e_mm: Option<f64>,
    pub eps_a_deg: Option<f64>,
    pub calc_rms_mm: Option<f64>,
    pub calc_max_mm: Option<f64>,
    pub needle_rms_deg: Option<f64>,
    pub needle_max_deg: Option<f64>,
    pub time_ms: f64,
}

/// Aggregates over rows. Error statistics cover successful pairs only; the
/// landmark r.m.s. values are root-mean-square over the per-pair r.m.s.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Aggregates {
    pub pairs: usize,
    pub successes: usize,
    pub success_rate: f64,
    pub eps_e_rms_mm: Option<f64>,
    pub eps_e_max_mm: Option<f64>,
    pub eps_a_rms_deg: Option<f64>,
    pub eps_a_max_deg: Option<f64>,
    pub calc_rms_mm: Option<f64>,
    pub calc_max_mm: Option<f64>,
    pub needle_rms_deg: Option<f64>,
    pub needle_max_deg: Option<f64>,
    pub mean_time_ms: Option<f64>,
}

fn max_of(values: impl Iterator<Item = f64>) -> Option<f64> {
    values.fold(None, |m: Option<f64>, v| Some(m.map_or(v, |m| m.max(v))))
}

impl Aggregates {
    pub fn from_rows(rows: &[PairRow]) -> Aggregates {
        let ok: Vec<&PairRow> = rows.iter().filter(|r| r.success).collect();
        let col = |f: fn(&PairRow) -> Option<f64>| -> Vec<f64> { ok.iter().filter_map(|r| f(r)).collect() };
        let eps_e = col(|r| r.eps_e_mm);
        let eps_a = col(|r| r.eps_a_deg);
        let times: Vec<f64> = rows.iter().map(|r| r.time_ms).collect();
        Aggregates {
            pairs: rows.len(),
            successes: ok.len(),
            success_rate: if rows.is_empty() { 0.0 } else { ok.len() as f64 / rows.len() as f64 },
            eps_e_rms_mm: rms(&eps_e),
            eps_e_max_mm: max_of(eps_e.into_iter()),
            eps_a_rms_deg: rms(&eps_a),
            eps_a_max_deg: max_of(eps_a.into_iter()),
            calc_rms_mm: rms(&col(|r| r.calc_rms_mm)),
            calc_max_mm: max_of(col(|r| r.calc_max_mm).into_iter()),
            needle_rms_deg: rms(&col(|r| r.needle_rms_deg)),
            needle_max_deg: max_of(col(|r| r.needle_max_deg).into_iter()),
            mean_time_ms: (!times.is_empty()).then(|| times.iter().sum::<f64>() / times.len() as f64),
        }
    }
}

/// Per-pair details kept in the JSON report next to the CSV row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairDetail {
    #[serde(flatten)]
    pub row: PairRow,
    /// Whether `success` and the errors refer to a known ground truth.
    pub truth_available: bool,
    /// Result against the mean of the perturbed restarts, when they ran.
    pub mean_success: Option<bool>,
    pub mean_eps_e_mm: Option<f64>,
    pub mean_eps_a_deg: Option<f64>,
    pub restart_failures: Option<usize>,
    #[serde(with = "crate::serde_util::energy")]
    pub final_energy: f64,
    pub converged: bool,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub mode: Mode,
    pub pairs: Vec<PairDetail>,
    pub aggregates: Aggregates,
}

impl ExperimentReport {
    pub fn new(mode: Mode, pairs: Vec<PairDetail>) -> Self {
        let rows: Vec<PairRow> = pairs.iter().map(|p| p.row.clone()).collect();
        ExperimentReport {
            mode,
            aggregates: Aggregates::from_rows(&rows),
            pairs,
        }
    }

    pub fn rows(&self) -> Vec<PairRow> {
        self.pairs.iter().map(|p| p.row.clone()).collect()
    }

    pub fn to_csv(&self) -> Result<String> {
        rows_to_csv(&self.rows())
    }

    /// Recomputes the aggregates from the emitted CSV text and compares them
    /// with the stored ones.
    pub fn cross_check(&self, csv: &str) -> Result<()> {
        let again = Aggregates::from_rows(&rows_from_csv(csv)?);
        if again != self.aggregates {
            return Err(Error::Manifest(format!(
                "aggregates do not match their rows: {again:?} vs {:?}",
                self.aggregates
            )));
        }
        Ok(())
    }

    /// Writes `report.csv` and `report.json` into `dir` after the cross-check.
    pub fn write(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let csv = self.to_csv()?;
        self.cross_check(&csv)?;
        write_atomic(&dir.join("report.csv"), csv.as_bytes())?;
        write_atomic(&dir.join("report.json"), serde_json::to_string_pretty(self)?.as_bytes())
    }
}

pub fn rows_to_csv(rows: &[PairRow]) -> Result<String> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    let body = w.into_inner().map_err(|e| Error::Manifest(e.to_string()))?;
    Ok(format!("{CSV_HEADER}\n{}", String::from_utf8_lossy(&body)))
}

pub fn rows_from_csv(text: &str) -> Result<Vec<PairRow>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header = r.headers().map_err(csv_error)?.iter().collect::<Vec<_>>().join(",");
    if header != CSV_HEADER {
        return Err(Error::Manifest(format!("unexpected csv header {header:?}")));
    }
    r.deserialize().map(|row| row.map_err(csv_error)).collect()
}

fn csv_error(e: csv::Error) -> Error {
    Error::Manifest(format!("csv: {e}"))
}

/// Writes through a temporary file in the same directory and renames it.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}
