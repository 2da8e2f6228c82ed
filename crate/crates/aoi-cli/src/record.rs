//! Machine-readable run records for `optimize`.
//!
//! One record per optimization run; serialized as a CSV row (stable header,
//! shortest-round-trip floats, so parsing recovers the exact values) or as
//! JSON. `Never` is encoded as the string `"inf"` in both formats.

use aoi_core::closed_form::ThresholdPolicy;
use aoi_core::optimizer::{Method, OptimizeResult};
use aoi_core::SystemParams;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub p: f64,
    pub q: f64,
    pub c: f64,
    #[serde(
        serialize_with = "serialize_threshold",
        deserialize_with = "deserialize_threshold"
    )]
    pub v_bar: ThresholdPolicy,
    pub cost: f64,
    pub method: String,
    /// Integers strictly inside the stationary-point bracket, if any.
    pub bracket: Option<(u32, u32)>,
    pub candidates_evaluated: usize,
    pub timestamp: String,
    pub tool_version: String,
}

fn serialize_threshold<S: Serializer>(t: &ThresholdPolicy, s: S) -> Result<S::Ok, S::Error> {
    match *t {
        ThresholdPolicy::AtAge(v) => s.serialize_u32(v),
        ThresholdPolicy::Never => s.serialize_str("inf"),
    }
}

fn deserialize_threshold<'de, D: Deserializer<'de>>(d: D) -> Result<ThresholdPolicy, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(u32),
        Text(String),
    }
    match Repr::deserialize(d)? {
        Repr::Num(v) => Ok(ThresholdPolicy::AtAge(v)),
        Repr::Text(s) if s == "inf" => Ok(ThresholdPolicy::Never),
        Repr::Text(s) => Err(serde::de::Error::custom(format!(
            "invalid threshold {s:?}: expected an integer or \"inf\""
        ))),
    }
}

/// Wall-clock timestamp, or `SOURCE_DATE_EPOCH` when set (reproducible runs).
pub fn timestamp_now() -> String {
    let t = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|s| s.parse::<i64>().ok())
        .and_then(|secs| chrono::DateTime::from_timestamp(secs, 0))
        .unwrap_or_else(chrono::Utc::now);
    t.to_rfc3339_opts(chrono::SecondsFormat::Secs, true)
}

impl RunRecord {
    pub fn from_result(params: &SystemParams, r: &OptimizeResult) -> Self {
        Self {
            p: params.p(),
            q: params.q(),
            c: params.c(),
            v_bar: r.policy,
            cost: r.cost,
            method: match r.method {
                Method::Bracketed => "bracketed".to_string(),
                Method::BruteForce => "brute-force".to_string(),
            },
            bracket: r.bracket,
            candidates_evaluated: r.candidates_evaluated,
            timestamp: timestamp_now(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
        }
    }

    pub fn csv_header() -> &'static str {
        "p,q,c,v_bar,cost,method,bracket_lo,bracket_hi,candidates_evaluated,timestamp,tool_version"
    }

    pub fn to_csv_row(&self) -> String {
        let (lo, hi) = match self.bracket {
            Some((lo, hi)) => (lo.to_string(), hi.to_string()),
            None => (String::new(), String::new()),
        };
        format!(
            "{},{},{},{},{},{},{},{},{},{},{}",
            self.p,
            self.q,
            self.c,
            self.v_bar,
            self.cost,
            self.method,
            lo,
            hi,
            self.candidates_evaluated,
            self.timestamp,
            self.tool_version
        )
    }

    pub fn from_csv_row(row: &str) -> Result<Self, String> {
        let fields: Vec<&str> = row.trim_end().split(',').collect();
        if fields.len() != 11 {
            return Err(format!("expected 11 fields, got {}", fields.len()));
        }
        let num = |i: usize, name: &str| -> Result<f64, String> {
            fields[i]
                .parse::<f64>()
                .map_err(|e| format!("field {name}: {e}"))
        };
        let bracket = match (fields[6], fields[7]) {
            ("", "") => None,
            (lo, hi) => Some((
                lo.parse::<u32>().map_err(|e| format!("bracket_lo: {e}"))?,
                hi.parse::<u32>().map_err(|e| format!("bracket_hi: {e}"))?,
            )),
        };
        Ok(Self {
            p: num(0, "p")?,
            q: num(1, "q")?,
            c: num(2, "c")?,
            v_bar: fields[3].parse::<ThresholdPolicy>().map_err(str::to_string)?,
            cost: num(4, "cost")?,
            method: fields[5].to_string(),
            bracket,
            candidates_evaluated: fields[8]
                .parse()
                .map_err(|e| format!("candidates_evaluated: {e}"))?,
            timestamp: fields[9].to_string(),
            tool_version: fields[10].to_string(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(v_bar: ThresholdPolicy, bracket: Option<(u32, u32)>) -> RunRecord {
        RunRecord {
            p: 0.3,
            q: 0.7,
            c: 2.0,
            v_bar,
            cost: 3.1415926535897931,
            method: "bracketed".to_string(),
            bracket,
            candidates_evaluated: 7,
            timestamp: "2024-01-01T00:00:00Z".to_string(),
            tool_version: "0.1.0".to_string(),
        }
    }

    #[test]
    fn csv_round_trip_is_lossless() {
        for rec in [
            sample(ThresholdPolicy::AtAge(5), Some((3, 9))),
            sample(ThresholdPolicy::Never, None),
        ] {
            let parsed = RunRecord::from_csv_row(&rec.to_csv_row()).unwrap();
            assert_eq!(parsed, rec);
        }
    }

    #[test]
    fn json_round_trip_and_inf_encoding() {
        let rec = sample(ThresholdPolicy::Never, None);
        let json = serde_json::to_string(&rec).unwrap();
        assert!(json.contains("\"v_bar\":\"inf\""));
        let parsed: RunRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed, rec);

        let rec = sample(ThresholdPolicy::AtAge(4), Some((2, 6)));
        let json = serde_json::to_string(&rec).unwrap();
        assert!(json.contains("\"v_bar\":4"));
        let parsed: RunRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(parsed, rec);
    }

    #[test]
    fn malformed_rows_are_rejected()  {
        assert!(RunRecord::from_csv_row("1,2,3").is_err());
        let rec = sample(ThresholdPolicy::AtAge(5), None);
        let bad = rec.to_csv_row().replace("inf", "nope").replace('5', "x");
        assert!(RunRecord::from_csv_row(&bad).is_err());
    }
}
