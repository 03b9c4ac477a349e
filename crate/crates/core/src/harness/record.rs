use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

pub const CSV_HEADER: [&str; 14] = [
    "experiment", "n", "l", "m", "t", "trials", "mode", "channel", "estimate", "stderr", "exact", "prediction", "seed", "wall_ms",
];

/// One output row. `exact` holds an oracle value, `prediction` a closed-form
/// formula value; either is `None` when not applicable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRecord {
    pub experiment: String,
    pub n: usize,
    pub l: usize,
    pub m: usize,
    pub t: usize,
    pub trials: usize,
    pub mode: String,
    pub channel: String,
    pub estimate: f64,
    pub stderr: f64,
    pub exact: Option<f64>,
    pub prediction: Option<f64>,
    pub seed: u64,
    pub wall_ms: Option<u64>,
}

impl ResultRecord {
    /// Rounds every float to the 12 significant digits used on output.
    pub fn rounded(mut self) -> Self {
        self.estimate = round12(self.estimate);
        self.stderr = round12(self.stderr);
        self.exact = self.exact.map(round12);
        self.prediction = self.prediction.map(round12);
        self
    }

    /// `|estimate − exact| ≤ sigmas · max(stderr, floor)`, or `None` without an oracle.
    pub fn brackets_exact(&self, sigmas: f64, floor: f64) -> Option<bool> {
        self.exact.map(|x| (self.estimate - x).abs() <= sigmas * self.stderr.max(floor))
    }
}

fn fmt_float(x: f64) -> String {
    format!("{x:.11e}")
}

pub fn round12(x: f64) -> f64 {
    if x.is_finite() {
        fmt_float(x).parse().expect("formatted float parses")
    } else {
        x
    }
}

pub fn to_csv(records: &[ResultRecord]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(CSV_HEADER)?;
    let opt = |x: Option<f64>| x.map(fmt_float).unwrap_or_default();
    for r in records {
        w.write_record([
            r.experiment.clone(),
            r.n.to_string(),
            r.l.to_string(),
            r.m.to_string(),
            r.t.to_string(),
            r.trials.to_string(),
            r.mode.clone(),
            r.channel.clone(),
            fmt_float(r.estimate),
            fmt_float(r.stderr),
            opt(r.exact),
            opt(r.prediction),
            r.seed.to_string(),
            r.wall_ms.map(|x| x.to_string()).unwrap_or_default(),
        ])?;
    }
    let bytes = w.into_inner().map_err(|e| Error::MalformedRecord(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::MalformedRecord(e.to_string()))
}

fn field<T: std::str::FromStr>(name: &str, s: &str) -> Result<T> {
    s.parse().map_err(|_| Error::MalformedRecord(format!("column {name}: cannot parse {s:?}")))
}

fn opt_field<T: std::str::FromStr>(name: &str, s: &str) -> Result<Option<T>> {
    if s.is_empty() {
        Ok(None)
    } else {
        field(name, s).map(Some)
    }
}

pub fn parse_csv(text: &str) -> Result<Vec<ResultRecord>> {
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    if header != CSV_HEADER {
        return Err(Error::MalformedRecord(format!("unexpected header {header:?}")));
    }
    rd.records()
        .map(|row| {
            let row = row?;
            let c = |i: usize| row.get(i).unwrap_or("");
            Ok(ResultRecord {
                experiment: c(0).to_string(),
                n: field("n", c(1))?,
                l: field("l", c(2))?,
                m: field("m", c(3))?,
                t: field("t", c(4))?,
                trials: field("trials", c(5))?,
                mode: c(6).to_string(),
                channel: c(7).to_string(),
                estimate: field("estimate", c(8))?,
                stderr: field("stderr", c(9))?,
                exact: opt_field("exact", c(10))?,
                prediction: opt_field("prediction", c(11))?,
                seed: field("seed", c(12))?,
                wall_ms: opt_field("wall_ms", c(13))?,
            })
        })
        .collect()
}

/// JSON array mirroring the CSV columns. Non-finite floats become strings.
pub fn to_json(records: &[ResultRecord]) -> Result<String> {
    let num = |x: f64| match serde_json::Number::from_f64(x) {
        Some(v) => Value::Number(v),
        None => Value::String(x.to_string()),
    };
    let opt = |x: Option<f64>| x.map(num).unwrap_or(Value::Null);
    let rows: Vec<Value> = records
        .iter()
        .map(|r| {
            let mut o = Map::new();
            o.insert("experiment".into(), r.experiment.clone().into());
            o.insert("n".into(), r.n.into());
            o.insert("l".into(), r.l.into());
            o.insert("m".into(), r.m.into());
            o.insert("t".into(), r.t.into());
            o.insert("trials".into(), r.trials.into());
            o.insert("mode".into(), r.mode.clone().into());
            o.insert("channel".into(), r.channel.clone().into());
            o.insert("estimate".into(), num(round12(r.estimate)));
            o.insert("stderr".into(), num(round12(r.stderr)));
            o.insert("exact".into(), opt(r.exact.map(round12)));
            o.insert("prediction".into(), opt(r.prediction.map(round12)));
            o.insert("seed".into(), r.seed.into());
            o.insert("wall_ms".into(), r.wall_ms.map(Value::from).unwrap_or(Value::Null));
            Value::Object(o)
        })
        .collect();
    Ok(serde_json::to_string_pretty(&rows)? + "\n")
}

pub fn parse_json(text: &str) -> Result<Vec<ResultRecord>> {
    let rows: Vec<Map<String, Value>> = serde_json::from_str(text)?;
    let bad = |k: &str| Error::MalformedRecord(format!("field {k} missing or mistyped"));
    rows.into_iter()
        .map(|o| {
            let s = |k: &str| o.get(k).and_then(Value::as_str).map(str::to_string).ok_or_else(|| bad(k));
            let u = |k: &str| o.get(k).and_then(Value::as_u64).ok_or_else(|| bad(k));
            let f = |k: &str| match o.get(k) {
                Some(Value::Number(x)) => x.as_f64().ok_or_else(|| bad(k)),
                Some(Value::String(x)) => x.parse().map_err(|_| bad(k)),
                _ => Err(bad(k)),
            };
            let of = |k: &str| match o.get(k) {
                None | Some(Value::Null) => Ok(None),
                Some(_) => f(k).map(Some),
            };
            Ok(ResultRecord {
                experiment: s("experiment")?,
                n: u("n")? as usize,
                l: u("l")? as usize,
                m: u("m")? as usize,
                t: u("t")? as usize,
                trials: u("trials")? as usize,
                mode: s("mode")?,
                channel: s("channel")?,
                estimate: f("estimate")?,
                stderr: f("stderr")?,
                exact: of("exact")?,
                prediction: of("prediction")?,
                seed: u("seed")?,
                wall_ms: match o.get("wall_ms") {
                    None | Some(Value::Null) => None,
                    Some(_) => Some(u("wall_ms")?),
                },
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ResultRecord {
        ResultRecord {
            experiment: "auth-sweep/p0".into(),
            n: 2,
            l: 2,
            m: 1,
            t: 1,
            trials: 1000,
            mode: "haar_exact".into(),
            channel: "depolarizing:0.1".into(),
            estimate: 0.925,
            stderr: 1.0 / 3.0,
            exact: Some(0.925),
            prediction: None,
            seed: u64::MAX,
            wall_ms: None,
        }
        .rounded()
    }

    #[test]
    fn one_record_is_two_lines() {
        let csv = to_csv(&[sample()]).unwrap();
        assert_eq!(csv.lines().count(), 2);
        assert_eq!(csv.lines().next().unwrap(), CSV_HEADER.join(","));
        let row = csv.lines().nth(1).unwrap();
        assert!(row.contains("9.25000000000e-1"));
        // prediction and wall_ms are empty
        assert!(row.contains(",,") && row.ends_with(','));
    }

    #[test]
    fn round_trips() {
        let mut r = sample();
        assert_eq!(parse_csv(&to_csv(&[r.clone()]).unwrap()).unwrap(), vec![r.clone()]);
        assert_eq!(parse_json(&to_json(&[r.clone()]).unwrap()).unwrap(), vec![r.clone()]);
        r.wall_ms = Some(17);
        r.prediction = Some(round12(std::f64::consts::PI));
        assert_eq!(parse_csv(&to_csv(&[r.clone()]).unwrap()).unwrap(), vec![r.clone()]);
        assert_eq!(parse_json(&to_json(&[r.clone()]).unwrap()).unwrap(), vec![r]);
    }

    #[test]
    fn twelve_significant_digits() {
        assert_eq!(round12(1.0 / 3.0), 0.333333333333);
        assert_eq!(fmt_float(1.0 / 3.0), "3.33333333333e-1");
        assert_eq!(round12(f64::INFINITY), f64::INFINITY);
    }

    #[test]
    fn rejects_bad_header() {
        assert!(matches!(parse_csv("a,b\n1,2\n"), Err(Error::MalformedRecord(_))));
    }
}
