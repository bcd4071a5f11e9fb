use std::path::Path;

use crate::error::{Error, Result};
use crate::federation::RoundMetrics;

pub const CSV_HEADER: &str = "round,test_accuracy,mean_train_loss,wall_seconds,sampled_clients";

/// Per-round history of one experiment, round 0 first.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct MetricsLog {
    pub rows: Vec<RoundMetrics>,
}

impl MetricsLog {
    pub fn new(rows: Vec<RoundMetrics>) -> Self {
        MetricsLog { rows }
    }

    pub fn final_accuracy(&self) -> Option<f64> {
        self.rows.last().map(|r| r.test_accuracy)
    }

    pub fn accuracies(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.test_accuracy).collect()
    }

    /// Population standard deviation of the last `n` accuracies.
    pub fn tail_std(&self, n: usize) -> f64 {
        let acc = self.accuracies();
        let tail = &acc[acc.len().saturating_sub(n)..];
        if tail.is_empty() {
            return 0.0;
        }
        let mean = tail.iter().sum::<f64>() / tail.len() as f64;
        (tail.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / tail.len() as f64).sqrt()
    }

    /// First round whose accuracy is at least `target`.
    pub fn first_round_reaching(&self, target: f64) -> Option<usize> {
        self.rows
            .iter()
            .find(|r| r.test_accuracy >= target)
            .map(|r| r.round)
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::with_capacity(64 * (self.rows.len() + 1)));
        w.write_record(CSV_HEADER.split(','))
            .expect("in-memory write");
        for r in &self.rows {
            let clients: Vec<String> = r.sampled_clients.iter().map(usize::to_string).collect();
            w.write_record([
                r.round.to_string(),
                format!("{:.6}", r.test_accuracy),
                r.mean_train_loss
                    .map(|l| format!("{l:.6}"))
                    .unwrap_or_default(),
                format!("{:.6}", r.wall_seconds),
                clients.join(";"),
            ])
            .expect("in-memory write");
        }
        let bytes = w.into_inner().expect("in-memory flush");
        String::from_utf8(bytes).expect("ascii fields")
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let bad = |msg: String| Error::Format {
            path: "<metrics>".into(),
            msg,
        };
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let header = reader.headers().map_err(|e| bad(e.to_string()))?;
        if header.iter().collect::<Vec<_>>().join(",") != CSV_HEADER {
            return Err(bad("missing or unexpected header".into()));
        }
        let rows = reader
            .records()
            .enumerate()
            .map(|(i, rec)| {
                let rec = rec.map_err(|e| bad(e.to_string()))?;
                parse_row(&rec).map_err(|msg| bad(format!("line {}: {msg}", i + 2)))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(MetricsLog { rows })
    }

    /// The log as it reads back after a CSV round trip.
    pub fn quantized(&self) -> Self {
        let q = |v: f64| format!("{v:.6}").parse::<f64>().expect("formatted float");
        MetricsLog {
            rows: self
                .rows
                .iter()
                .map(|r| RoundMetrics {
                    test_accuracy: q(r.test_accuracy),
                    mean_train_loss: r.mean_train_loss.map(q),
                    wall_seconds: q(r.wall_seconds),
                    ..r.clone()
                })
                .collect(),
        }
    }
}

fn parse_row(rec: &csv::StringRecord) -> std::result::Result<RoundMetrics, String> {
    let fields: Vec<&str> = rec.iter().collect();
    let [round, acc, loss, wall, clients] = fields[..] else {
        return Err(format!("expected 5 fields, found {}", fields.len()));
    };
    let num = |s: &str| s.parse::<f64>().map_err(|e| format!("{s:?}: {e}"));
    Ok(RoundMetrics {
        round: round.parse().map_err(|e| format!("{round:?}: {e}"))?,
        test_accuracy: num(acc)?,
        mean_train_loss: if loss.is_empty() {
            None
        } else {
            Some(num(loss)?)
        },
        wall_seconds: num(wall)?,
        sampled_clients: if clients.is_empty() {
            Vec::new()
        } else {
            clients
                .split(';')
                .map(|c| c.parse().map_err(|e| format!("{c:?}: {e}")))
                .collect::<std::result::Result<_, _>>()?
        },
    })
}

pub fn write_metrics(log: &MetricsLog, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, log.to_csv()).map_err(|e| Error::io(path, e))
}

pub fn read_metrics(path: impl AsRef<Path>) -> Result<MetricsLog> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    MetricsLog::from_csv(&text).map_err(|e| match e {
        Error::Format { msg, .. } => Error::Format {
            path: path.to_path_buf(),
            msg,
        },
        other => other,
    })
}
