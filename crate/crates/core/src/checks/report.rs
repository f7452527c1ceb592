//! Self-contained pass/fail records.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// A measured quantity with an optional standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Measured {
    #[serde(with = "extended_f64")]
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub stderr: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Comparison {
    Le,
    Ge,
}

/// Whether a gate is expected to hold (ordinary check) or to be violated
/// (negative control).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Expectation {
    Holds,
    Violated,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
}

/// `measured (op) threshold`, where the measured value is moved by
/// `sigmas * stderr` in the favourable direction before comparing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Gate {
    pub measured: String,
    pub comparison: Comparison,
    pub threshold: String,
    pub sigmas: f64,
    pub expect: Expectation,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckReport {
    pub name: String,
    pub config: serde_json::Value,
    pub measured: BTreeMap<String, Measured>,
    pub thresholds: BTreeMap<String, f64>,
    pub gates: Vec<Gate>,
    pub verdict: Verdict,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    /// Not serialised: reports must be byte-identical across runs.
    #[serde(skip)]
    pub wall_time_s: f64,
}

impl CheckReport {
    pub fn new(name: &str, config: serde_json::Value, seed: Option<u64>) -> Self {
        CheckReport {
            name: name.to_string(),
            config,
            measured: BTreeMap::new(),
            thresholds: BTreeMap::new(),
            gates: Vec::new(),
            verdict: Verdict::Fail,
            seed,
            error: None,
            wall_time_s: 0.0,
        }
    }

    pub fn measure(&mut self, key: impl Into<String>, value: f64) -> &mut Self {
        self.measured.insert(key.into(), Measured { value, stderr: None });
        self
    }

    pub fn measure_se(&mut self, key: impl Into<String>, value: f64, stderr: f64) -> &mut Self {
        self.measured.insert(key.into(), Measured { value, stderr: Some(stderr) });
        self
    }

    pub fn threshold(&mut self, key: impl Into<String>, value: f64) -> &mut Self {
        self.thresholds.insert(key.into(), value);
        self
    }

    /// Adds a gate; both keys must already be recorded.
    pub fn gate(&mut self, measured: &str, comparison: Comparison, threshold: &str, sigmas: f64) -> &mut Self {
        self.push_gate(measured, comparison, threshold, sigmas, Expectation::Holds)
    }

    /// Adds a gate that must be violated for the check to pass.
    pub fn negative_gate(&mut self, measured: &str, comparison: Comparison, threshold: &str) -> &mut Self {
        self.push_gate(measured, comparison, threshold, 0.0, Expectation::Violated)
    }

    fn push_gate(
        &mut self,
        measured: &str,
        comparison: Comparison,
        threshold: &str,
        sigmas: f64,
        expect: Expectation,
    ) -> &mut Self {
        let mut g = Gate {
            measured: measured.to_string(),
            comparison,
            threshold: threshold.to_string(),
            sigmas,
            expect,
            holds: false,
        };
        g.holds = self.evaluate(&g);
        self.gates.push(g);
        self
    }

    fn evaluate(&self, g: &Gate) -> bool {
        let (Some(m), Some(&t)) = (self.measured.get(&g.measured), self.thresholds.get(&g.threshold)) else {
            return false;
        };
        let slack = g.sigmas * m.stderr.unwrap_or(0.0);
        if m.value.is_nan() || t.is_nan() {
            return false;
        }
        match g.comparison {
            Comparison::Le => m.value - slack <= t,
            Comparison::Ge => m.value + slack >= t,
        }
    }

    pub fn fail_with(&mut self, error: impl Into<String>) -> &mut Self {
        self.error = Some(error.into());
        self.verdict = Verdict::Fail;
        self
    }

    /// Verdict recomputed from the recorded measurements and thresholds only.
    pub fn rederive_verdict(&self) -> Verdict {
        if self.error.is_some() || self.gates.is_empty() {
            return Verdict::Fail;
        }
        let ok = self.gates.iter().all(|g| {
            let holds = self.evaluate(g);
            match g.expect {
                Expectation::Holds => holds,
                Expectation::Violated => !holds,
            }
        });
        if ok {
            Verdict::Pass
        } else {
            Verdict::Fail
        }
    }

    pub fn finish(&mut self) -> &mut Self {
        for i in 0..self.gates.len() {
            let holds = self.evaluate(&self.gates[i]);
            self.gates[i].holds = holds;
        }
        self.verdict = self.rederive_verdict();
        self
    }

    pub fn passed(&self) -> bool {
        self.verdict == Verdict::Pass
    }

    pub fn value(&self, key: &str) -> Option<f64> {
        self.measured.get(key).map(|m| m.value)
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("reports serialise")
    }
}

/// Serialises non-finite floats as the strings `"inf"`, `"-inf"`, `"nan"`.
pub(crate) mod extended_f64 {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Str(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Str(s) => match s.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                other => Err(serde::de::Error::custom(format!("bad float {other}"))),
            },
        }
    }
}
