//! Per-trial records and the aggregate report.

use std::collections::{BTreeMap, BTreeSet};
use std::io::Write;

use serde::Serialize;
use serde_json::Value;

/// One trial's named measurements. Keys are sorted, so output is stable.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct TrialRecord {
    pub trial: u64,
    #[serde(flatten)]
    pub values: BTreeMap<String, Value>,
}

impl TrialRecord {
    pub fn new(trial: u64) -> Self {
        TrialRecord {
            trial,
            values: BTreeMap::new(),
        }
    }

    pub fn set(&mut self, key: &str, v: impl Into<Value>) {
        self.values.insert(key.to_string(), v.into());
    }

    pub fn num(&self, key: &str) -> Option<f64> {
        self.values.get(key).and_then(Value::as_f64)
    }

    pub fn flag(&self, key: &str) -> Option<bool> {
        self.values.get(key).and_then(Value::as_bool)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Aggregate {
    pub n: u64,
    pub mean: f64,
    /// Standard error of the mean (sample standard deviation over √n).
    pub se: f64,
}

impl Aggregate {
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Aggregate {
                n: 0,
                mean: 0.0,
                se: 0.0,
            };
        }
        let mean = xs.iter().sum::<f64>() / n as f64;
        let se = if n > 1 {
            let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
            (var / n as f64).sqrt()
        } else {
            0.0
        };
        Aggregate {
            n: n as u64,
            mean,
            se,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub protocol: String,
    pub seed: u64,
    pub trials: u64,
    /// Whether every trial's ledger balanced at every block.
    pub conservation: bool,
    /// Failed checks plus conservation failures. Zero for a passing run.
    pub violations: u64,
    pub aggregates: BTreeMap<String, Aggregate>,
    pub checks: Vec<Check>,
    pub records: Vec<TrialRecord>,
}

impl MetricsReport {
    pub fn new(protocol: &str, seed: u64, records: Vec<TrialRecord>) -> Self {
        let conservation = records
            .iter()
            .all(|r| r.flag("conservation") != Some(false));
        MetricsReport {
            protocol: protocol.to_string(),
            seed,
            trials: records.len() as u64,
            conservation,
            violations: 0,
            aggregates: BTreeMap::new(),
            checks: Vec::new(),
            records,
        }
    }

    /// Mean and SE of `key` over the trials that recorded it as a number.
    pub fn aggregate(&mut self, key: &str) -> Aggregate {
        let xs: Vec<f64> = self.records.iter().filter_map(|r| r.num(key)).collect();
        let a = Aggregate::of(&xs);
        self.aggregates.insert(key.to_string(), a.clone());
        a
    }

    pub fn check(&mut self, name: &str, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check {
            name: name.to_string(),
            passed,
            detail: detail.into(),
        });
    }

    /// Checks that `flag` is true in every trial that recorded it.
    pub fn check_all(&mut self, name: &str, flag: &str) {
        let bad: Vec<u64> = self
            .records
            .iter()
            .filter(|r| r.flag(flag) == Some(false))
            .map(|r| r.trial)
            .collect();
        let seen = self
            .records
            .iter()
            .filter(|r| r.flag(flag).is_some())
            .count();
        let detail = if bad.is_empty() {
            format!("{seen} of {seen} trials")
        } else {
            format!(
                "failed in {} of {seen} trials, first {:?}",
                bad.len(),
                &bad[..bad.len().min(5)]
            )
        };
        self.check(name, bad.is_empty(), detail);
    }

    /// Sets `violations` from the checks and the conservation flag.
    pub fn finish(&mut self) {
        self.violations =
            self.checks.iter().filter(|c| !c.passed).count() as u64 + u64::from(!self.conservation);
        if !self.conservation {
            self.checks.push(Check {
                name: "conservation".into(),
                passed: false,
                detail: "ledger total drifted".into(),
            });
        }
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    /// One row per trial. Columns are the union of all keys, sorted.
    pub fn write_trials_csv<W: Write>(&self, out: W) -> csv::Result<()> {
        let keys: BTreeSet<&String> = self.records.iter().flat_map(|r| r.values.keys()).collect();
        let mut w = csv::Writer::from_writer(out);
        w.write_record(std::iter::once("trial").chain(keys.iter().map(|k| k.as_str())))?;
        for r in &self.records {
            let mut row = vec![r.trial.to_string()];
            for k in &keys {
                row.push(match r.values.get(*k) {
                    None | Some(Value::Null) => String::new(),
                    Some(Value::String(s)) => s.clone(),
                    Some(v) => v.to_string(),
                });
            }
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn trials_json(&self) -> String {
        serde_json::to_string_pretty(&self.records).expect("records serialize")
    }
}
