//! The acceptance suite. Each criterion returns a report of named checks;
//! informational checks are printed but do not gate the verdict.

use std::fmt::Write as _;
use std::time::Instant;

use rand::Rng;
use rayon::prelude::*;

use super::{run, to_csv, ExperimentConfig};
use crate::attacks::{self, LrGameConfig, QubitCountGame};
use crate::ensembles::{haar_state, sample_haar, seeded_rng, ScramblerSpec, SecretKey};
use crate::error::Result;
use crate::moments;
use crate::pqas::{self, auth_sweep, security_scan, Pqas};
use crate::primitives::{self, EfiParams};
use crate::qcore::linalg::{self, CMatrix, C64};
use crate::qcore::{DensityMatrix, Depolarizing, KrausChannel, LocalDepolarizing, PureState, QuantumChannel, QubitPartition, UnitaryChannel};

pub const ACCEPTANCE_SEED: u64 = 20_241_017;

#[derive(Clone, Debug)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub informational: bool,
    pub detail: String,
}

#[derive(Clone, Debug)]
pub struct CriterionReport {
    pub id: usize,
    pub title: &'static str,
    pub checks: Vec<Check>,
    pub elapsed_s: f64,
}

impl CriterionReport {
    fn new(id: usize, title: &'static str) -> Self {
        CriterionReport { id, title, checks: Vec::new(), elapsed_s: 0.0 }
    }

    fn check(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check { name: name.into(), passed, informational: false, detail: detail.into() });
    }

    fn note(&mut self, name: impl Into<String>, passed: bool, detail: impl Into<String>) {
        self.checks.push(Check { name: name.into(), passed, informational: true, detail: detail.into() });
    }

    fn finish(mut self, start: Instant, budget_s: f64) -> Self {
        self.elapsed_s = start.elapsed().as_secs_f64();
        let (ok, e) = (self.elapsed_s < budget_s, self.elapsed_s);
        self.check("runtime", ok, format!("{e:.1}s, budget {budget_s:.0}s"));
        self
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed || c.informational)
    }

    /// The one-line verdict.
    pub fn summary(&self) -> String {
        let verdict = if self.passed() { "PASS" } else { "FAIL" };
        format!("criterion {:02} {verdict}: {}", self.id, self.title)
    }

    /// Verdict followed by one indented line per check.
    pub fn render(&self) -> String {
        let mut s = self.summary();
        for c in &self.checks {
            let tag = match (c.passed, c.informational) {
                (true, false) => "pass",
                (false, false) => "FAIL",
                (true, true) => "info ok",
                (false, true) => "info no",
            };
            let _ = write!(s, "\n    [{tag}] {}: {}", c.name, c.detail);
        }
        s
    }
}

fn fmt_est(e: &crate::Estimate) -> String {
    format!("{:.6} ± {:.2e}", e.mean, e.stderr)
}

/// Round trip and honest-party acceptance over random instances.
pub fn criterion_01(seed: u64) -> Result<CriterionReport> {
    let start = Instant::now();
    let mut r = CriterionReport::new(1, "completeness of encrypt/decrypt/authenticate");
    let rows: Vec<(f64, f64)> = (0..100u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = seeded_rng(seed, "acceptance/completeness", &[i]);
            let n = rng.gen_range(1..=3);
            let l = rng.gen_range(1..=2);
            let m = rng.gen_range(0..=2);
            let spec = if i % 2 == 0 { ScramblerSpec::haar_exact() } else { ScramblerSpec::composed() };
            let key = SecretKey::random(&mut rng);
            let a = haar_state(n, &mut rng)?.to_density();
            let b = haar_state(n, &mut rng)?.to_density();
            let w: f64 = rng.gen();
            let rho = DensityMatrix::from_raw(a.matrix() * C64::new(w, 0.0) + b.matrix() * C64::new(1.0 - w, 0.0));
            let scheme = Pqas::new(QubitPartition::new(n, l, m)?, spec);
            let c = scheme.encrypt(&rho, &key)?;
            let expected = rho.tensor(&DensityMatrix::basis(l, 0)?)?;
            let td = scheme.decrypt(&c, &key)?.trace_distance(&expected)?;
            let p0 = scheme.authenticate(&c, &key)?.accept_prob;
            Ok((td, (p0 - 1.0).abs()))
        })
        .collect::<Result<_>>()?;
    let td = rows.iter().map(|x| x.0).fold(0.0, f64::max);
    let dp = rows.iter().map(|x| x.1).fold(0.0, f64::max);
    r.check("round-trip trace distance", td <= 1e-9, format!("max {td:.2e} over 100 instances, both modes"));
    r.check("honest acceptance P0 = 1", dp <= 1e-9, format!("max |P0 - 1| = {dp:.2e}"));
    Ok(r.finish(start, 60.0))
}

/// Exact closeness halves per mixed qubit; Monte Carlo agrees with the oracle;
/// entangled inputs follow the same law.
pub fn criterion_02(seed: u64) -> Result<CriterionReport> {
    let start = Instant::now();
    let mut r = CriterionReport::new(2, "security closeness scales as 2^-m");
    let (n, l, t) = (1, 1, 2);
    let rho = DensityMatrix::basis(n * t, 0)?;
    let ghz = PureState::ghz(n * t + 1)?.to_density();
    let mut prod = Vec::new();
    let mut ent = Vec::new();
    let mut base = Vec::new();
    for m in 1..=3 {
        prod.push(moments::closeness_exact(&QubitPartition::new(n, l, m)?, &DensityMatrix::basis(n, 0)?, t)?);
        // without a tag the purified two-copy state stays within the qubit cap at m = 3
        let p0 = QubitPartition::new(n, 0, m)?;
        base.push(moments::joint_closeness_exact(&p0, &rho, t, 0)?);
        ent.push(moments::joint_closeness_exact(&p0, &ghz, t, 1)?);
    }
    for k in 0..2 {
        let q = prod[k + 1] / prod[k];
        r.check(format!("ratio m={}->{}", k + 1, k + 2), (0.35..=0.65).contains(&q), format!("{:.6} / {:.6} = {q:.4}", prod[k + 1], prod[k]));
        let qb = base[k + 1] / base[k];
        let qe = ent[k + 1] / ent[k];
        let rel = qe / qb;
        r.check(
            format!("entangled ratio m={}->{}", k + 1, k + 2),
            (0.5..=2.0).contains(&rel),
            format!("l=0: {qe:.4} against product-input {qb:.4}, quotient {rel:.3}"),
        );
    }
    let scan = security_scan(&rho, &QubitPartition::new(n, l, 1)?, t, 0, 2000, seed)?;
    let w = scan.witness.expect("oracle fits");
    let exact = scan.exact.expect("oracle fits");
    r.check("Monte Carlo vs oracle at m=1", w.within(exact, 3.0, 1e-12), format!("{} vs exact {exact:.6} ({:.2} sigma)", fmt_est(&w), w.sigmas_from(exact, 1e-12)));
    let scan_e = security_scan(&ghz, &QubitPartition::new(n, l, 1)?, t, 1, 2000, seed)?;
    let we = scan_e.witness.expect("oracle fits");
    let exact_e = scan_e.exact.expect("oracle fits");
    r.check(
        "Monte Carlo vs oracle, entangled input",
        we.within(exact_e, 3.0, 1e-12),
        format!("{} vs exact {exact_e:.6} ({:.2} sigma)", fmt_est(&we), we.sigmas_from(exact_e, 1e-12)),
    );
    for (name, sc) in [("product", &scan), ("entangled", &scan_e)] {
        r.check(
            format!("sampled moment vs oracle, {name} input"),
            sc.moment_distance <= 3.0 * sc.moment_sigma,
            format!("|mean - M|_F = {:.4e}, sigma_F = {:.4e}", sc.moment_distance, sc.moment_sigma),
        );
    }
    r.note("plug-in estimate", scan.plug_in >= exact - 3.0 * w.stderr, format!("{:.6}; witness samples are constant because the witness commutes with U^t", scan.plug_in));
    Ok(r.finish(start, 600.0))
}

/// Weingarten sums and the Haar moment oracle against sampling.
pub fn criterion_03(seed: u64) -> Result<CriterionReport> {
    let start = Instant::now();
    let mut r = CriterionReport::new(3, "Weingarten identities and Haar moment oracle");
    let mut worst: f64 = 0.0;
    for d in [4, 8, 16] {
        for t in 1..=4 {
            let s = moments::sum_abs_weingarten(d, t)?;
            worst = worst.max((s - moments::falling_factorial_ratio(d, t)).abs());
        }
    }
    r.check("sum |Wg| = (d-t)!/d!", worst <= 1e-12, format!("max deviation {worst:.2e} over t<=4, d in {{4,8,16}}"));
    let (d, t, samples) = (4, 2, 2000);
    for k in 0..5u64 {
        let mut rng = seeded_rng(seed, "acceptance/observable", &[k]);
        let g = CMatrix::from_fn(d * d, d * d, |_, _| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
        let o = linalg::hermitize(&g);
        let exact = moments::haar_moment(&o, d, t)?;
        let ys: Vec<CMatrix> = (0..samples as u64)
            .into_par_iter()
            .map(|i| {
                let mut rng = seeded_rng(seed, "acceptance/haar-moment", &[k, i]);
                let u = sample_haar(2, &mut rng)?;
                let uu = linalg::kron(u.matrix(), u.matrix());
                Ok(&uu * &o * uu.adjoint())
            })
            .collect::<Result<_>>()?;
        let mut mean = CMatrix::zeros(d * d, d * d);
        for y in &ys {
            mean += y;
        }
        mean /= C64::new(samples as f64, 0.0);
        let spread: f64 = ys.iter().map(|y| (y - &mean).norm_squared()).sum::<f64>() / (samples * (samples - 1)) as f64;
        let sigma = spread.sqrt();
        let dist = (&mean - &exact).norm();
        r.check(format!("observable {k}"), dist <= 3.0 * sigma, format!("|mean - oracle|_F = {dist:.4e}, sigma_F = {sigma:.4e}"));
    }
    Ok(r.finish(start, 120.0))
}

/// Key-averaged acceptance probability and unnormalized fidelity against the
/// leading-order formulas.
pub fn criterion_04(seed: u64) -> Result<CriterionReport> {
    let start = Instant::now();
    let mut r = CriterionReport::new(4, "Haar averages of P0 and F'");
    let part = QubitPartition::new(2, 2, 1)?;
    let mut rng = seeded_rng(seed, "acceptance/auth", &[]);
    let psi = haar_state(part.n, &mut rng)?;
    let mut channels: Vec<(String, Box<dyn QuantumChannel>)> = vec![("identity".into(), Box::new(KrausChannel::identity(part.z())?))];
    for p in [0.1, 0.3, 0.5] {
        channels.push((format!("depolarizing p={p}"), Box::new(Depolarizing::new(part.z(), p)?)));
    }
    channels.push(("random unitary".into(), Box::new(UnitaryChannel::new(sample_haar(part.z(), &mut rng)?))));
    for (name, ch) in &channels {
        let s = auth_sweep(&psi, &part, ch.as_ref(), 1000, &ScramblerSpec::haar_exact(), seed)?;
        let p0_pred = pqas::leading_order_p0(&part, s.fc);
        let fp_pred = pqas::leading_order_fprime(&part, s.fc);
        let p0_exact = pqas::exact_haar_p0(&part, s.fe);
        let fp_exact = pqas::exact_haar_fprime(&part, s.fe);
        r.check(
            format!("{name}: P0 vs formula"),
            s.p0.within(p0_pred, 3.0, 1e-9),
            format!("{} vs {p0_pred:.6} ({:.1} sigma)", fmt_est(&s.p0), s.p0.sigmas_from(p0_pred, 1e-9)),
        );
        r.check(
            format!("{name}: F' vs formula"),
            s.fprime.within(fp_pred, 3.0, 1e-9),
            format!("{} vs {fp_pred:.6} ({:.1} sigma)", fmt_est(&s.fprime), s.fprime.sigmas_from(fp_pred, 1e-9)),
        );
        r.check(format!("{name}: F' <= P0 per trial"), s.fprime_le_p0(), format!("max F' - P0 = {:.2e}", s.max_fprime_excess));
        r.note(
            format!("{name}: exact twirl"),
            s.p0.within(p0_exact, 3.0, 1e-9) && s.fprime.within(fp_exact, 3.0, 1e-9),
            format!("P0 exact {p0_exact:.6}, F' exact {fp_exact:.6}, F_e {:.6}, F_c {:.6}", s.fe, s.fc),
        );
    }
    Ok(r.finish(start, 300.0))
}

/// Infidelity of accepted states falls with the tag length.
pub fn criterion_05(seed: u64) -> Result<CriterionReport> {
    let start = Instant::now();
    let mut r = CriterionReport::new(5, "fidelity recovery improves with tag length");
    let mut rng = seeded_rng(seed, "acceptance/recovery", &[]);
    let psi = haar_state(2, &mut rng)?;
    let mut inf = Vec::new();
    for l in [2, 4] {
        let part = QubitPartition::new(2, l, 1)?;
        let ch = Depolarizing::new(part.z(), 0.3)?;
        let s = auth_sweep(&psi, &part, &ch, 1000, &ScramblerSpec::haar_exact(), seed)?;
        r.note(format!("l={l}"), !s.degenerate, format!("mean(1-F) = {}, accepted {}", fmt_est(&s.infidelity), s.accepted));
        inf.push(s.infidelity.mean);
    }
    let q = inf[0] / inf[1];
    r.check("ratio l=2 / l=4", (2.5..=6.5).contains(&q), format!("{q:.4}"));
    Ok(r.finish(start, 300.0))
}

/// SWAP tests break deterministic encryption but not the mixed scheme.
pub fn criterion_06(seed: u64) -> Result<CriterionReport> {
    let start = Instant::now();
    let mut r = CriterionReport::new(6, "chosen-plaintext separation");
    let det = attacks::lr_cpa_game(&LrGameConfig::standard(QubitPartition::new(2, 1, 0)?, 4, 500, seed)?)?;
    r.check("deterministic m=0, t=4 success", det.success.mean >= 0.9, fmt_est(&det.success));
    let mixed = attacks::lr_cpa_game(&LrGameConfig::standard(QubitPartition::new(2, 1, 4)?, 4, 500, seed)?)?;
    r.check("pqas m=4, t=4 advantage", mixed.advantage <= 0.1, format!("{:.4} ± {:.4}", mixed.advantage, mixed.advantage_stderr));
    Ok(r.finish(start, 180.0))
}

/// The Bell-parity qubit-count attack.
pub fn criterion_07(seed: u64) -> Result<CriterionReport> {
    let start = Instant::now();
    let mut r = CriterionReport::new(7, "qubit-number attack");
    let game = |m: usize| QubitCountGame {
        n: 2,
        true_s: 2,
        s_max: 2,
        l: 0,
        m,
        spec: ScramblerSpec::haar_exact(),
        delta: attacks::DEFAULT_DELTA,
        shots: attacks::DEFAULT_SHOTS,
        trials: 200,
        seed,
    };
    let det = attacks::qubit_count_game(&game(0))?;
    r.check("deterministic mode recovers s", det.correct.mean >= 0.95, format!("{} (largest-qualifying rule {})", fmt_est(&det.correct), fmt_est(&det.correct_largest)));
    for m in [2, 3] {
        let g = attacks::qubit_count_game(&game(m))?;
        r.check(format!("pqas m={m} abstains"), g.abstained.mean >= 0.95, fmt_est(&g.abstained));
    }
    Ok(r.finish(start, 300.0))
}

/// VPRDM completeness, wrong-key acceptance and the GHSE halving law.
pub fn criterion_08(seed: u64) -> Result<CriterionReport> {
    let start = Instant::now();
    let mut r = CriterionReport::new(8, "VPRDM verification and GHSE closeness");
    let spec = ScramblerSpec::haar_exact();
    let (n, m) = (4, 1);
    let (complete, _) = super::vprdm_values(n, m, 100, seed, &spec)?;
    let worst = (complete.mean - 1.0).abs() + complete.stderr * 10.0;
    r.check("completeness", worst <= 1e-9, format!("mean {:.12}, stderr {:.1e}", complete.mean, complete.stderr));
    let (_, wrong) = super::vprdm_values(n, m, 500, seed ^ 0x5eed, &spec)?;
    let target = 2f64.powi(m as i32 - n as i32);
    r.check("wrong-key acceptance", wrong.within(target, 3.0, 1e-12), format!("{} vs {target} ({:.2} sigma)", fmt_est(&wrong), wrong.sigmas_from(target, 1e-12)));
    let g: Vec<f64> = (1..=5).map(|n| primitives::ghse_closeness(n, 1, 2)).collect::<Result<_>>()?;
    for k in 0..g.len() - 1 {
        let q = g[k + 1] / g[k];
        r.check(format!("GHSE ratio n={}->{}", k + 1, k + 2), (0.35..=0.65).contains(&q), format!("{:.6} -> {:.6}, ratio {q:.4}", g[k], g[k + 1]));
    }
    Ok(r.finish(start, 300.0))
}

pub const EFI_GRID: [(usize, usize, f64, f64, usize); 6] = [
    (3, 0, 0.67, 0.2, 1),
    (4, 0, 0.5, 0.2, 2),
    (4, 1, 0.75, 0.25, 2),
    (5, 1, 0.6, 0.2, 3),
    (6, 1, 0.5, 0.2, 4),
    (6, 0, 0.67, 0.3, 2),
];

/// Entropy and trace-distance relations of EFI pairs, with and without noise.
pub fn criterion_09(seed: u64) -> Result<CriterionReport> {
    let start = Instant::now();
    let mut r = CriterionReport::new(9, "EFI pairs: Fannes bound, entropies, noise monotonicity");
    let (mut fannes, mut s1, mut s0, mut mono, mut lower) = (true, true, true, true, true);
    let mut pairs = 0;
    let mut worst_fannes = f64::INFINITY;
    let mut budget = Vec::new();
    for (i, &(n, m0, gamma, c, lambda_eff)) in EFI_GRID.iter().enumerate() {
        let p = EfiParams { n, m0, gamma, c, lambda_eff, seed: seed.wrapping_add(i as u64), spec: ScramblerSpec::haar_exact() };
        let (nu0, nu1) = primitives::efi_pair(&p)?;
        let clean = primitives::efi_report(&p, &nu0, &nu1)?;
        pairs += 1;
        fannes &= clean.fannes_holds();
        worst_fannes = worst_fannes.min(clean.fannes_rhs - clean.entropy_gap);
        s1 &= clean.s1_at_least_m1();
        s0 &= clean.s0_within_key_budget();
        lower &= clean.lower_bound_holds();
        for noise in [0.0, 0.1, 0.25] {
            let ch = LocalDepolarizing::new(n, noise)?;
            let nr = primitives::efi_noise_check(&p, &nu0, &nu1, &ch, Some(&ch.single_qubit_weights()))?;
            pairs += 1;
            fannes &= nr.noisy.fannes_holds();
            worst_fannes = worst_fannes.min(nr.noisy.fannes_rhs - nr.noisy.entropy_gap);
            mono &= nr.contracts();
            if noise > 0.0 {
                budget.push(format!("n={n} p={noise}: {}", nr.within_per_qubit_budget().unwrap_or(false)));
            }
        }
    }
    r.check("Fannes-Audenaert inequality", fannes, format!("{pairs} pairs, smallest slack {worst_fannes:.3e}"));
    r.check("S(nu1) >= m1", s1, "all parameter points");
    r.check("S(nu0) <= lambda_eff + m0", s0, "all parameter points");
    r.check("noise contracts trace distance", mono, "local depolarizing p in {0, 0.1, 0.25}");
    r.note("T >= 1 - (S0+1)/S1", lower, "stated lower bound, not implied by the Fannes bound below full rank");
    r.note("per-qubit noise entropy budget", true, budget.join("; "));
    Ok(r.finish(start, 300.0))
}

fn determinism_configs(seed: u64) -> Vec<String> {
    [
        r#"{"experiment": "auth-sweep", "n": 1, "l": [1, 2], "m": 1, "trials": 100, "channel": "depolarizing", "p": [0.1, 0.3]}"#,
        r#"{"experiment": "security-scan", "n": 1, "l": 1, "m": [1, 2], "t": 2, "trials": 50}"#,
        r#"{"experiment": "cpa", "n": 2, "l": 1, "m": [0, 2], "t": 4, "trials": 50, "mode": "composed"}"#,
        r#"{"experiment": "qubit-count", "n": 2, "l": 0, "m": [0, 2], "true_s": 2, "s_max": 2, "trials": 10, "shots": 500}"#,
        r#"{"experiment": "multistate", "n": 1, "l": 1, "m": [0, 2], "count": 4, "trials": 50}"#,
        r#"{"experiment": "decoy", "n": 1, "l": 1, "m": [1, 2], "t": 2}"#,
        r#"{"experiment": "vprdm", "n": 3, "m": 1, "t": 2, "trials": 20}"#,
        r#"{"experiment": "efi", "n": 4, "m0": 1, "gamma": 0.75, "c": 0.25, "lambda_eff": 2, "p": [0, 0.1]}"#,
        r#"{"experiment": "wg-selftest", "n": [2, 3], "t": [1, 2, 3]}"#,
    ]
    .iter()
    .map(|c| {
        let mut v: serde_json::Value = serde_json::from_str(c).expect("static config");
        v["seed"] = seed.into();
        v.to_string()
    })
    .collect()
}

/// Every experiment, run twice with the same seed, emits identical CSV bytes.
pub fn criterion_10(seed: u64) -> Result<CriterionReport> {
    let start = Instant::now();
    let mut r = CriterionReport::new(10, "bitwise-reproducible output");
    for text in determinism_configs(seed) {
        let cfg = ExperimentConfig::from_json_str(&text)?;
        let a = to_csv(&run(&cfg)?)?;
        let b = to_csv(&run(&cfg)?)?;
        let rows = a.lines().count() - 1;
        r.check(cfg.experiment.as_str(), a == b, format!("{rows} rows, {} bytes", a.len()));
    }
    Ok(r.finish(start, 300.0))
}

pub type CriterionFn = fn(u64) -> Result<CriterionReport>;

pub const CRITERIA: [CriterionFn; 10] = [
    criterion_01,
    criterion_02,
    criterion_03,
    criterion_04,
    criterion_05,
    criterion_06,
    criterion_07,
    criterion_08,
    criterion_09,
    criterion_10,
];

/// Runs the whole suite in order.
pub fn run_all(seed: u64) -> Result<Vec<CriterionReport>> {
    CRITERIA.iter().map(|f| f(seed)).collect()
}
