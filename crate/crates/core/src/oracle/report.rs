use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::oracle::Metrics;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteRecord {
    pub site: String,
    pub samples: usize,
    pub max_abs_error: f64,
    pub mean_abs_error: f64,
    pub cosine: f64,
    pub argmax_agreement: f64,
    pub saturation: u64,
}

impl SiteRecord {
    pub fn from_metrics(site: impl Into<String>, m: &Metrics, saturation: u64) -> Self {
        Self {
            site: site.into(),
            samples: m.count,
            max_abs_error: m.max_abs_error,
            mean_abs_error: m.mean_abs_error,
            cosine: m.cosine,
            argmax_agreement: m.argmax_agreement,
            saturation,
        }
    }
}

/// One pinned threshold and the value it was checked against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToleranceCheck {
    pub name: String,
    /// `"<="` or `">="`
    pub relation: String,
    pub limit: f64,
    pub value: f64,
    pub pass: bool,
}

/// Named slot for numbers produced by other approximation schemes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSlot {
    pub name: String,
    pub value: Option<f64>,
}

/// Per-site comparison statistics plus the run's pinned checks.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorReport {
    pub seed: u64,
    pub config: serde_json::Value,
    pub sites: Vec<SiteRecord>,
    pub tolerances: Vec<ToleranceCheck>,
    pub baselines: Vec<BaselineSlot>,
    pub pass: bool,
}

const BASELINES: [&str; 4] = [
    "ibert_polynomial",
    "l1_layernorm",
    "log_int_softmax",
    "fp_nonlinear_fallback",
];

impl ErrorReport {
    pub fn new(seed: u64, config: serde_json::Value) -> Self {
        Self {
            seed,
            config,
            sites: Vec::new(),
            tolerances: Vec::new(),
            baselines: BASELINES
                .iter()
                .map(|n| BaselineSlot {
                    name: n.to_string(),
                    value: None,
                })
                .collect(),
            pass: true,
        }
    }

    pub fn add_site(&mut self, rec: SiteRecord) {
        self.sites.push(rec);
    }

    /// Records `value <= limit`. Non-finite values fail.
    pub fn check_max(&mut self, name: impl Into<String>, value: f64, limit: f64) -> bool {
        self.push_check(name.into(), "<=", value, limit, value <= limit)
    }

    /// Records `value >= limit`. Non-finite values fail.
    pub fn check_min(&mut self, name: impl Into<String>, value: f64, limit: f64) -> bool {
        self.push_check(name.into(), ">=", value, limit, value >= limit)
    }

    fn push_check(
        &mut self,
        name: String,
        relation: &str,
        value: f64,
        limit: f64,
        ok: bool,
    ) -> bool {
        let pass = ok && value.is_finite();
        self.pass &= pass;
        // keep the report serializable when a metric blew up
        let value = if value.is_finite() { value } else { f64::MAX };
        self.tolerances.push(ToleranceCheck {
            name,
            relation: relation.into(),
            limit,
            value,
            pass,
        });
        pass
    }

    pub fn validate(&self) -> Result<()> {
        for s in &self.sites {
            let vals = [
                s.max_abs_error,
                s.mean_abs_error,
                s.cosine,
                s.argmax_agreement,
            ];
            if vals.iter().any(|v| !v.is_finite()) {
                return Err(Error::Range(format!(
                    "site {} has a non-finite metric",
                    s.site
                )));
            }
            if !(0.0..=1.0).contains(&s.argmax_agreement) {
                return Err(Error::Range(format!(
                    "site {} agreement outside [0, 1]",
                    s.site
                )));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        self.validate()?;
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(s)?;
        r.validate()?;
        Ok(r)
    }

    /// Aligned plain-text rendering.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        let w = self
            .sites
            .iter()
            .map(|s| s.site.len())
            .max()
            .unwrap_or(4)
            .max(4);
        let _ = writeln!(
            out,
            "{:<w$}  {:>9}  {:>12}  {:>12}  {:>9}  {:>8}  {:>6}",
            "site", "samples", "max_abs", "mean_abs", "cosine", "argmax", "sat"
        );
        for s in &self.sites {
            let _ = writeln!(
                out,
                "{:<w$}  {:>9}  {:>12.6e}  {:>12.6e}  {:>9.6}  {:>8.4}  {:>6}",
                s.site,
                s.samples,
                s.max_abs_error,
                s.mean_abs_error,
                s.cosine,
                s.argmax_agreement,
                s.saturation
            );
        }
        if !self.tolerances.is_empty() {
            let w = self
                .tolerances
                .iter()
                .map(|t| t.name.len())
                .max()
                .unwrap_or(0);
            let _ = writeln!(out);
            for t in &self.tolerances {
                let _ = writeln!(
                    out,
                    "{} {:<w$}  {:>14.6e} {} {:<12.6e}",
                    if t.pass { "PASS" } else { "FAIL" },
                    t.name,
                    t.value,
                    t.relation,
                    t.limit
                );
            }
        }
        let _ = writeln!(out, "overall: {}", if self.pass { "PASS" } else { "FAIL" });
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn json_round_trip_and_checks() {
        let mut r = ErrorReport::new(5, serde_json::json!({"trials": 3}));
        r.add_site(SiteRecord {
            site: "shiftmax".into(),
            samples: 10,
            max_abs_error: 0.01,
            mean_abs_error: 0.001,
            cosine: 0.999,
            argmax_agreement: 1.0,
            saturation: 2,
        });
        assert!(r.check_max("max_abs", 0.01, 0.02));
        assert!(r.pass);
        let back = ErrorReport::from_json(&r.to_json().unwrap()).unwrap();
        assert_eq!(back, r);
        assert!(!r.check_min("cosine", f64::NAN, 0.9));
        assert!(!r.pass);
        assert!(r.render_table().contains("FAIL cosine"));
    }
}
