//! Experiment configuration, dispatch, seeding and record emission.

pub mod acceptance;
pub mod record;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::RngCore;
use rayon::prelude::*;
use serde_json::Value;

use crate::attacks::{self, LrGameConfig, QubitCountGame};
use crate::ensembles::{haar_state, sample_haar, seeded_rng, ScramblerMode, ScramblerSpec, SecretKey};
use crate::error::{Error, Result};
use crate::moments;
use crate::pqas::{self, auth_sweep, security_scan};
use crate::primitives::{self, EfiParams, VprdmParams};
use crate::qcore::{
    check_cap, DensityMatrix, Depolarizing, KrausChannel, LocalDepolarizing, PureState, QuantumChannel,
    QubitPartition, UnitaryChannel,
};

pub use record::{parse_csv, parse_json, round12, to_csv, to_json, ResultRecord, CSV_HEADER};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Experiment {
    SecurityScan,
    AuthSweep,
    Cpa,
    QubitCount,
    Multistate,
    Decoy,
    Vprdm,
    Efi,
    WgSelftest,
}

impl Experiment {
    pub const ALL: [Experiment; 9] = [
        Experiment::SecurityScan,
        Experiment::AuthSweep,
        Experiment::Cpa,
        Experiment::QubitCount,
        Experiment::Multistate,
        Experiment::Decoy,
        Experiment::Vprdm,
        Experiment::Efi,
        Experiment::WgSelftest,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            Experiment::SecurityScan => "security-scan",
            Experiment::AuthSweep => "auth-sweep",
            Experiment::Cpa => "cpa",
            Experiment::QubitCount => "qubit-count",
            Experiment::Multistate => "multistate",
            Experiment::Decoy => "decoy",
            Experiment::Vprdm => "vprdm",
            Experiment::Efi => "efi",
            Experiment::WgSelftest => "wg-selftest",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| Error::UnknownExperiment(s.to_string()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ChannelKind {
    None,
    Identity,
    Depolarizing,
    LocalDepolarizing,
    RandomUnitary,
}

impl ChannelKind {
    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "none" => ChannelKind::None,
            "identity" => ChannelKind::Identity,
            "depolarizing" => ChannelKind::Depolarizing,
            "local_depolarizing" => ChannelKind::LocalDepolarizing,
            "random_unitary" => ChannelKind::RandomUnitary,
            other => return Err(Error::param("channel", format!("unknown channel kind {other:?}"))),
        })
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            ChannelKind::None => "none",
            ChannelKind::Identity => "identity",
            ChannelKind::Depolarizing => "depolarizing",
            ChannelKind::LocalDepolarizing => "local_depolarizing",
            ChannelKind::RandomUnitary => "random_unitary",
        }
    }

    /// Column label; strength appears only for the depolarizing kinds.
    pub fn label(&self, p: f64) -> String {
        match self {
            ChannelKind::Depolarizing | ChannelKind::LocalDepolarizing => format!("{}:{}", self.as_str(), p),
            _ => self.as_str().to_string(),
        }
    }

    fn build(&self, qubits: usize, p: f64, seed: u64) -> Result<Box<dyn QuantumChannel>> {
        Ok(match self {
            ChannelKind::None | ChannelKind::Identity => Box::new(KrausChannel::identity(qubits)?),
            ChannelKind::Depolarizing => Box::new(Depolarizing::new(qubits, p)?),
            ChannelKind::LocalDepolarizing => Box::new(LocalDepolarizing::new(qubits, p)?),
            ChannelKind::RandomUnitary => {
                let mut rng = seeded_rng(seed, "tamper", &[]);
                Box::new(UnitaryChannel::new(sample_haar(qubits, &mut rng)?))
            }
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl Format {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(Error::param("format", format!("expected csv or json, got {other:?}"))),
        }
    }
}

/// Sweepable numeric fields and their defaults, in grid order.
pub const NUMERIC_FIELDS: [(&str, f64); 16] = [
    ("n", 1.0),
    ("l", 1.0),
    ("m", 1.0),
    ("t", 1.0),
    ("q", 0.0),
    ("trials", 100.0),
    ("p", 0.0),
    ("s_max", 2.0),
    ("true_s", 1.0),
    ("delta", attacks::DEFAULT_DELTA),
    ("shots", attacks::DEFAULT_SHOTS as f64),
    ("count", 2.0),
    ("gamma", 0.5),
    ("c", 0.25),
    ("lambda_eff", 2.0),
    ("m0", 0.0),
];

const INTEGER_FIELDS: [&str; 12] = ["n", "l", "m", "t", "q", "trials", "s_max", "true_s", "shots", "count", "lambda_eff", "m0"];

/// A parsed run description. Every numeric field holds a non-empty list of values.
#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub mode: ScramblerMode,
    pub pru_depth: Option<usize>,
    pub channel: ChannelKind,
    pub seed: u64,
    pub out: Option<PathBuf>,
    pub format: Format,
    /// Fill `wall_ms`; off by default so output stays byte-reproducible.
    pub timing: bool,
    pub axes: Vec<(&'static str, Vec<f64>)>,
}

impl ExperimentConfig {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text)?;
        Self::from_value(&v)
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn from_value(v: &Value) -> Result<Self> {
        let obj = v.as_object().ok_or_else(|| Error::param("config", "expected a JSON object"))?;
        let string = |field: &str, default: &str| -> Result<String> {
            match obj.get(field) {
                None => Ok(default.to_string()),
                Some(Value::String(s)) => Ok(s.clone()),
                Some(_) => Err(Error::param(field, "expected a string")),
            }
        };
        let experiment = match obj.get("experiment") {
            Some(Value::String(s)) => Experiment::parse(s)?,
            _ => return Err(Error::param("experiment", "missing or not a string")),
        };
        let mut cfg = ExperimentConfig {
            experiment,
            mode: ScramblerMode::parse(&string("mode", "haar_exact")?)?,
            pru_depth: None,
            channel: ChannelKind::parse(&string("channel", "none")?)?,
            seed: 0,
            out: obj.get("out").map(|_| string("out", "")).transpose()?.map(PathBuf::from),
            format: Format::parse(&string("format", "csv")?)?,
            timing: false,
            axes: Vec::new(),
        };
        for (key, value) in obj {
            match key.as_str() {
                "experiment" | "mode" | "channel" | "out" | "format" => {}
                "seed" => cfg.seed = value.as_u64().ok_or_else(|| Error::param("seed", "expected a non-negative integer"))?,
                "timing" => cfg.timing = value.as_bool().ok_or_else(|| Error::param("timing", "expected a boolean"))?,
                "pru_depth" => {
                    cfg.pru_depth = match value {
                        Value::Null => None,
                        v => Some(v.as_u64().filter(|&d| d > 0).ok_or_else(|| Error::param("pru_depth", "expected a positive integer"))? as usize),
                    }
                }
                k if NUMERIC_FIELDS.iter().any(|(f, _)| *f == k) => {}
                other => return Err(Error::param(other, "unknown configuration field")),
            }
        }
        for (field, default) in NUMERIC_FIELDS {
            let values = match obj.get(field) {
                None => vec![default],
                Some(Value::Array(items)) if !items.is_empty() => {
                    items.iter().map(|x| number(field, x)).collect::<Result<Vec<_>>>()?
                }
                Some(Value::Array(_)) => return Err(Error::param(field, "sweep list is empty")),
                Some(x) => vec![number(field, x)?],
            };
            cfg.axes.push((field, values));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn spec(&self) -> ScramblerSpec {
        ScramblerSpec { mode: self.mode, pru_depth: self.pru_depth }
    }

    /// Cartesian product of the axes; the last field varies fastest.
    pub fn grid(&self) -> Vec<Point> {
        let mut points = vec![BTreeMap::new()];
        for (field, values) in &self.axes {
            points = points
                .into_iter()
                .flat_map(|p| {
                    values.iter().map(move |&v| {
                        let mut q = p.clone();
                        q.insert(*field, v);
                        q
                    })
                })
                .collect();
        }
        points.into_iter().map(Point).collect()
    }

    pub fn validate(&self) -> Result<()> {
        for (field, values) in &self.axes {
            for &v in values {
                if !v.is_finite() {
                    return Err(Error::param(*field, "must be finite"));
                }
                if INTEGER_FIELDS.contains(field) && (v < 0.0 || v.fract() != 0.0) {
                    return Err(Error::param(*field, format!("expected a non-negative integer, got {v}")));
                }
            }
        }
        for point in self.grid() {
            self.validate_point(&point)?;
        }
        Ok(())
    }

    fn validate_point(&self, pt: &Point) -> Result<()> {
        let (n, l, m) = (pt.int("n"), pt.int("l"), pt.int("m"));
        if n == 0 {
            return Err(Error::param("n", "must be at least 1"));
        }
        if pt.int("trials") == 0 {
            return Err(Error::param("trials", "must be at least 1"));
        }
        if pt.int("t") == 0 {
            return Err(Error::param("t", "must be at least 1"));
        }
        let p = pt.get("p");
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::param("p", "must lie in [0, 1]"));
        }
        match self.experiment {
            Experiment::SecurityScan | Experiment::AuthSweep | Experiment::Cpa | Experiment::Multistate | Experiment::Decoy => {
                QubitPartition::new(n, l, m)?;
            }
            Experiment::QubitCount => {
                QubitPartition::new(n * pt.int("true_s"), l, m)?;
                check_cap(attacks::intercepted_qubits(n, pt.int("s_max")))?;
            }
            Experiment::Vprdm => {
                VprdmParams::new(n, m, SecretKey::from_bytes([0; 48]))?;
            }
            Experiment::Efi => self.efi_params(pt).validate()?,
            Experiment::WgSelftest => {
                if n > 16 {
                    return Err(Error::param("n", "wg-selftest supports at most 16 qubits"));
                }
                if pt.int("t") > moments::MAX_COPIES {
                    return Err(Error::param("t", format!("at most {} copies", moments::MAX_COPIES)));
                }
            }
        }
        if self.experiment == Experiment::AuthSweep && pt.int("trials") < 100 {
            return Err(Error::param("trials", "auth-sweep needs at least 100 trials"));
        }
        Ok(())
    }

    fn efi_params(&self, pt: &Point) -> EfiParams {
        EfiParams {
            n: pt.int("n"),
            m0: pt.int("m0"),
            gamma: pt.get("gamma"),
            c: pt.get("c"),
            lambda_eff: pt.int("lambda_eff"),
            seed: 0,
            spec: self.spec(),
        }
    }
}

fn number(field: &str, v: &Value) -> Result<f64> {
    v.as_f64().ok_or_else(|| Error::param(field, "expected a number or a list of numbers"))
}

/// One grid point: a value for every numeric field.
#[derive(Clone, Debug, PartialEq)]
pub struct Point(BTreeMap<&'static str, f64>);

impl Point {
    pub fn get(&self, field: &str) -> f64 {
        self.0[field]
    }

    pub fn int(&self, field: &str) -> usize {
        self.0[field] as usize
    }

    fn bits(&self) -> Vec<u64> {
        NUMERIC_FIELDS.iter().map(|(f, _)| self.0[f].to_bits()).collect()
    }
}

/// Per-point seed: a keyed hash of the master seed, experiment name and parameter tuple.
pub fn record_seed(master: u64, experiment: Experiment, point: &Point) -> u64 {
    seeded_rng(master, &format!("record/{}", experiment.as_str()), &point.bits()).next_u64()
}

pub fn run_path(path: &Path) -> Result<Vec<ResultRecord>> {
    run(&ExperimentConfig::from_path(path)?)
}

/// Runs every grid point; records come back in grid order.
pub fn run(cfg: &ExperimentConfig) -> Result<Vec<ResultRecord>> {
    cfg.validate()?;
    let per_point: Vec<Vec<ResultRecord>> = cfg
        .grid()
        .into_par_iter()
        .map(|pt| {
            let start = Instant::now();
            let seed = record_seed(cfg.seed, cfg.experiment, &pt);
            let mut recs = run_point(cfg, &pt, seed)?;
            let ms = start.elapsed().as_millis() as u64;
            for r in &mut recs {
                r.wall_ms = cfg.timing.then_some(ms);
            }
            Ok(recs)
        })
        .collect::<Result<_>>()?;
    Ok(per_point.into_iter().flatten().map(ResultRecord::rounded).collect())
}

/// Writes records to `path` in the given format.
pub fn emit(records: &[ResultRecord], format: Format, path: &Path) -> Result<()> {
    if records.is_empty() {
        return Err(Error::param("records", "nothing to emit"));
    }
    let text = match format {
        Format::Csv => to_csv(records)?,
        Format::Json => to_json(records)?,
    };
    std::fs::write(path, text)?;
    Ok(())
}

struct Base<'a> {
    cfg: &'a ExperimentConfig,
    pt: &'a Point,
    seed: u64,
    channel: String,
}

impl Base<'_> {
    fn record(&self, name: &str, estimate: f64, stderr: f64, exact: Option<f64>, prediction: Option<f64>) -> ResultRecord {
        ResultRecord {
            experiment: name.to_string(),
            n: self.pt.int("n"),
            l: self.pt.int("l"),
            m: self.pt.int("m"),
            t: self.pt.int("t"),
            trials: self.pt.int("trials"),
            mode: self.cfg.mode.as_str().to_string(),
            channel: self.channel.clone(),
            estimate,
            stderr,
            exact,
            prediction,
            seed: self.seed,
            wall_ms: None,
        }
    }
}

/// `|0…0⟩` on `t·n` qubits, or a GHZ state across the copies and a `q`-qubit purifier.
pub fn scan_input(n: usize, t: usize, q: usize) -> Result<DensityMatrix> {
    if q == 0 {
        DensityMatrix::basis(n * t, 0)
    } else {
        Ok(PureState::ghz(n * t + q)?.to_density())
    }
}

fn run_point(cfg: &ExperimentConfig, pt: &Point, seed: u64) -> Result<Vec<ResultRecord>> {
    let (n, l, m, t, trials) = (pt.int("n"), pt.int("l"), pt.int("m"), pt.int("t"), pt.int("trials"));
    let p = pt.get("p");
    let spec = cfg.spec();
    let base = Base { cfg, pt, seed, channel: cfg.channel.label(p) };
    let partition = || QubitPartition::new(n, l, m);
    Ok(match cfg.experiment {
        Experiment::SecurityScan => {
            let q = pt.int("q");
            let s = security_scan(&scan_input(n, t, q)?, &partition()?, t, q, trials, seed)?;
            let w = s.witness.expect("witness present when the oracle fits");
            vec![
                base.record("security-scan", w.mean, w.stderr, s.exact, None),
                // the witness is constant over U; this row is what the samples decide
                base.record("security-scan/moment-distance", s.moment_distance, s.moment_sigma, Some(0.0), None),
            ]
        }
        Experiment::AuthSweep => {
            let part = partition()?;
            let mut rng = seeded_rng(seed, "message", &[]);
            let psi = haar_state(n, &mut rng)?;
            let ch = cfg.channel.build(part.z(), p, seed)?;
            let s = auth_sweep(&psi, &part, ch.as_ref(), trials, &spec, seed)?;
            vec![
                base.record("auth-sweep/p0", s.p0.mean, s.p0.stderr, Some(pqas::exact_haar_p0(&part, s.fe)), Some(pqas::leading_order_p0(&part, s.fc))),
                base.record("auth-sweep/fprime", s.fprime.mean, s.fprime.stderr, Some(pqas::exact_haar_fprime(&part, s.fe)), Some(pqas::leading_order_fprime(&part, s.fc))),
                base.record("auth-sweep/infidelity", s.infidelity.mean, s.infidelity.stderr, None, None),
            ]
        }
        Experiment::Cpa => {
            let mut g = LrGameConfig::standard(partition()?, t, trials, seed)?;
            g.spec = spec;
            let r = attacks::lr_cpa_game(&g)?;
            vec![base.record("cpa", r.success.mean, r.success.stderr, None, None)]
        }
        Experiment::QubitCount => {
            let r = attacks::qubit_count_game(&QubitCountGame {
                n,
                true_s: pt.int("true_s"),
                s_max: pt.int("s_max"),
                l,
                m,
                spec,
                delta: pt.get("delta"),
                shots: pt.int("shots") as u64,
                trials,
                seed,
            })?;
            vec![
                base.record("qubit-count/correct", r.correct.mean, r.correct.stderr, None, None),
                base.record("qubit-count/abstain", r.abstained.mean, r.abstained.stderr, None, None),
            ]
        }
        Experiment::Multistate => {
            let r = attacks::multi_state_game(&partition()?, &spec, pt.int("count"), trials, seed)?;
            vec![base.record("multistate", r.success.mean, r.success.stderr, None, None)]
        }
        Experiment::Decoy => {
            let r = attacks::decoy_indistinguishability(&partition()?, t, &SecretKey::derive(seed, "decoy", 0))?;
            vec![
                base.record("decoy/closeness", r.closeness, 0.0, Some(r.closeness), None),
                base.record("decoy/cut-entropy", r.ciphertext_cut_entropy, 0.0, None, Some(r.decoy_cut_entropy)),
            ]
        }
        Experiment::Vprdm => {
            let (complete, wrong) = vprdm_values(n, m, trials, seed, &spec)?;
            let mut out = vec![
                base.record("vprdm/complete", complete.mean, complete.stderr, Some(1.0), None),
                base.record("vprdm/wrong-key", wrong.mean, wrong.stderr, Some(2f64.powi(m as i32 - n as i32)), None),
            ];
            if (1usize << n).pow(t as u32) <= moments::MAX_MOMENT_DIM {
                let g = primitives::ghse_closeness(n, m, t)?;
                out.push(base.record("vprdm/ghse", g, 0.0, Some(g), None));
            }
            out
        }
        Experiment::Efi => {
            let params = EfiParams { seed, ..cfg.efi_params(pt) };
            let (nu0, nu1) = primitives::efi_pair(&params)?;
            let clean = primitives::efi_report(&params, &nu0, &nu1)?;
            let ch = LocalDepolarizing::new(n, p)?;
            let noisy = primitives::efi_noise_check(&params, &nu0, &nu1, &ch, Some(&ch.single_qubit_weights()))?;
            let base = Base { channel: ChannelKind::LocalDepolarizing.label(p), ..base };
            let mut out = vec![
                base.record("efi/s0", clean.s0, 0.0, None, Some((params.lambda_eff + params.m0) as f64)),
                base.record("efi/s1", clean.s1, 0.0, None, Some(params.m1() as f64)),
                base.record("efi/trace-distance", clean.t_exact, 0.0, None, Some(clean.t_lower_bound)),
                base.record("efi/fannes-slack", clean.fannes_rhs - clean.entropy_gap, 0.0, None, None),
                base.record("efi/trace-distance-noisy", noisy.t_noisy, 0.0, None, Some(noisy.t_noiseless)),
            ];
            // the m column carries the low-entropy arm's mixedness; there is no tag
            for r in &mut out {
                r.l = 0;
                r.m = params.m0;
            }
            out
        }
        Experiment::WgSelftest => {
            let d = 1usize << n;
            let s = moments::sum_abs_weingarten(d, t)?;
            vec![base.record("wg-selftest", s, 0.0, Some(moments::falling_factorial_ratio(d, t)), None)]
        }
    })
}

/// Completeness and wrong-key verification values over `trials` keys.
pub fn vprdm_values(n: usize, m: usize, trials: usize, seed: u64, spec: &ScramblerSpec) -> Result<(crate::Estimate, crate::Estimate)> {
    let pairs: Vec<(f64, f64)> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let key = SecretKey::derive(seed, "vprdm", i as u64);
            let wrong = SecretKey::derive(seed, "vprdm-wrong", i as u64);
            let rho = primitives::vprdm_generate(&VprdmParams::new(n, m, key)?, spec)?;
            Ok((
                primitives::vprdm_verify(&rho, &key, n, m, spec)?,
                primitives::vprdm_verify(&rho, &wrong, n, m, spec)?,
            ))
        })
        .collect::<Result<_>>()?;
    let a: Vec<f64> = pairs.iter().map(|x| x.0).collect();
    let b: Vec<f64> = pairs.iter().map(|x| x.1).collect();
    Ok((crate::Estimate::from_samples(&a), crate::Estimate::from_samples(&b)))
}
