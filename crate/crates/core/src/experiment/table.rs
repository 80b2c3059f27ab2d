//! Result rows and their CSV form.
//!
//! Columns, in order:
//!
//! ```text
//! scheme,bandwidth,train_snr_db,test_snr_db,lambda,latent_dim,mean_bits,top1_accuracy,trials,seed,status
//! ```
//!
//! Fields that do not apply to a scheme are empty. Accuracy and bits use six
//! decimals; SNRs print `inf` for the noiseless channel. `status` is `ok` or
//! `error: <message>`, and error rows leave accuracy empty.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io;
use std::path::Path;

use super::Scheme;
use crate::channel::SnrDb;

pub const COLUMNS: [&str; 11] = [
    "scheme",
    "bandwidth",
    "train_snr_db",
    "test_snr_db",
    "lambda",
    "latent_dim",
    "mean_bits",
    "top1_accuracy",
    "trials",
    "seed",
    "status",
];

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub scheme: Scheme,
    pub bandwidth: Option<usize>,
    pub train_snr: Option<SnrDb>,
    pub test_snr: Option<SnrDb>,
    pub lambda: Option<f64>,
    pub latent_dim: Option<usize>,
    pub mean_bits: Option<f64>,
    /// `None` on error rows.
    pub top1_accuracy: Option<f64>,
    pub trials: usize,
    pub seed: u64,
    pub error: Option<String>,
}

impl ResultRow {
    pub fn is_ok(&self) -> bool {
        self.error.is_none()
    }

    fn fields(&self) -> [String; 11] {
        fn opt<T: ToString>(v: Option<T>) -> String {
            v.map(|x| x.to_string()).unwrap_or_default()
        }
        let fixed = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        [
            self.scheme.name().to_string(),
            opt(self.bandwidth),
            opt(self.train_snr),
            opt(self.test_snr),
            opt(self.lambda),
            opt(self.latent_dim),
            fixed(self.mean_bits),
            fixed(self.top1_accuracy),
            self.trials.to_string(),
            self.seed.to_string(),
            match &self.error {
                None => "ok".to_string(),
                Some(e) => format!("error: {}", e.replace(['\n', '\r'], " ")),
            },
        ]
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TableError {
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("csv io: {0}")]
    Io(#[from] io::Error),
    #[error("csv header does not match the result schema")]
    Header,
    #[error("csv row {row}: bad {column} value {value:?}")]
    Field { row: usize, column: &'static str, value: String },
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultTable {
    pub rows: Vec<ResultRow>,
}

impl ResultTable {
    pub fn ok_rows(&self) -> impl Iterator<Item = &ResultRow> {
        self.rows.iter().filter(|r| r.is_ok())
    }

    pub fn error_count(&self) -> usize {
        self.rows.iter().filter(|r| !r.is_ok()).count()
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        // writing to a Vec cannot fail
        w.write_record(COLUMNS).expect("in-memory csv");
        for row in &self.rows {
            w.write_record(row.fields()).expect("in-memory csv");
        }
        String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv fields are utf-8")
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<(), TableError> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn from_csv(text: &str) -> Result<Self, TableError> {
        let mut r = csv::Reader::from_reader(text.as_bytes());
        if r.headers()?.iter().ne(COLUMNS) {
            return Err(TableError::Header);
        }
        let mut rows = Vec::new();
        for (i, rec) in r.records().enumerate() {
            let rec = rec?;
            let row = i + 1;
            let cell = |c: usize| rec.get(c).unwrap_or("");
            let bad = |c: usize| TableError::Field { row, column: COLUMNS[c], value: cell(c).to_string() };
            fn opt<T: std::str::FromStr>(s: &str) -> Result<Option<T>, ()> {
                if s.is_empty() {
                    Ok(None)
                } else {
                    s.parse().map(Some).map_err(|_| ())
                }
            }
            let status = cell(10);
            rows.push(ResultRow {
                scheme: Scheme::parse(cell(0)).ok_or_else(|| bad(0))?,
                bandwidth: opt(cell(1)).map_err(|_| bad(1))?,
                train_snr: opt(cell(2)).map_err(|_| bad(2))?,
                test_snr: opt(cell(3)).map_err(|_| bad(3))?,
                lambda: opt(cell(4)).map_err(|_| bad(4))?,
                latent_dim: opt(cell(5)).map_err(|_| bad(5))?,
                mean_bits: opt(cell(6)).map_err(|_| bad(6))?,
                top1_accuracy: opt(cell(7)).map_err(|_| bad(7))?,
                trials: cell(8).parse().map_err(|_| bad(8))?,
                seed: cell(9).parse().map_err(|_| bad(9))?,
                error: match status {
                    "ok" => None,
                    s => Some(s.strip_prefix("error: ").ok_or_else(|| bad(10))?.to_string()),
                },
            });
        }
        Ok(Self { rows })
    }
}

/// Horizontal axis for [`plot_data`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PlotAxis {
    TestSnr,
    Bandwidth,
    MeanBits,
}

impl PlotAxis {
    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "test_snr" => Some(PlotAxis::TestSnr),
            "bandwidth" => Some(PlotAxis::Bandwidth),
            "mean_bits" => Some(PlotAxis::MeanBits),
            _ => None,
        }
    }
}

/// Gnuplot-ready blocks: one block per series (all columns other than the axis),
/// each headed by `# <series>` and separated by two blank lines, with
/// `x accuracy` pairs sorted by `x`. Error rows and rows without a finite `x`
/// (including noiseless test points) are skipped.
pub fn plot_data(table: &ResultTable, axis: PlotAxis) -> String {
    let mut series: BTreeMap<String, Vec<(f64, f64)>> = BTreeMap::new();
    for row in table.ok_rows() {
        let x = match axis {
            PlotAxis::TestSnr => row.test_snr.map(|s| s.db()),
            PlotAxis::Bandwidth => row.bandwidth.map(|b| b as f64),
            PlotAxis::MeanBits => row.mean_bits,
        };
        let (Some(x), Some(acc)) = (x.filter(|v| v.is_finite()), row.top1_accuracy) else {
            continue;
        };
        let mut label = row.scheme.name().to_string();
        let mut tag = |name: &str, v: Option<String>| {
            if let Some(v) = v {
                let _ = write!(label, " {name}={v}");
            }
        };
        if axis != PlotAxis::Bandwidth {
            tag("B", row.bandwidth.map(|v| v.to_string()));
        }
        tag("train", row.train_snr.map(|v| v.to_string()));
        if axis != PlotAxis::TestSnr {
            tag("test", row.test_snr.map(|v| v.to_string()));
        }
        if axis != PlotAxis::MeanBits {
            tag("lambda", row.lambda.map(|v| v.to_string()));
            tag("m", row.latent_dim.map(|v| v.to_string()));
        }
        series.entry(label).or_default().push((x, acc));
    }
    let mut out = String::new();
    for (i, (label, mut pts)) in series.into_iter().enumerate() {
        if i > 0 {
            out.push_str("\n\n");
        }
        pts.sort_by(|a, b| a.0.total_cmp(&b.0));
        let _ = writeln!(out, "# {label}");
        for (x, y) in pts {
            let _ = writeln!(out, "{x} {y:.6}");
        }
    }
    out
}
