//! Property tests for the module invariants. Random objects are drawn from a
//! seeded stream so that shrinking acts on the seed and the sizes.

use proptest::prelude::*;
use rand::Rng;
use rand_chacha::ChaCha20Rng;

use crate::attacks;
use crate::ensembles::{build_scrambler, haar_state, sample_haar, seeded_rng, ScramblerSpec, SecretKey};
use crate::harness::{self, ExperimentConfig, ResultRecord};
use crate::moments::{self, Permutation, PermutationOperator};
use crate::pqas::{tag_projector, Pqas};
use crate::primitives::{self, EfiParams, VprdmParams};
use crate::qcore::linalg::{self, CMatrix, C64};
use crate::qcore::{
    swap_test_accept, DensityMatrix, Depolarizing, KrausChannel, LocalDepolarizing, QuantumChannel, QubitPartition,
    UnitaryChannel,
};

fn rng(seed: u64) -> ChaCha20Rng {
    seeded_rng(seed, "proptest", &[])
}

/// `G G† / tr(G G†)` with Gaussian-free uniform entries; full rank almost surely.
fn random_density(q: usize, r: &mut ChaCha20Rng) -> DensityMatrix {
    let d = 1 << q;
    let g = CMatrix::from_fn(d, d, |_, _| C64::new(r.gen::<f64>() - 0.5, r.gen::<f64>() - 0.5));
    let m = &g * g.adjoint();
    let tr = linalg::trace(&m);
    DensityMatrix::from_raw(m / tr)
}

fn random_channel(q: usize, r: &mut ChaCha20Rng) -> Box<dyn QuantumChannel> {
    match r.gen_range(0..4) {
        0 => Box::new(Depolarizing::new(q, r.gen()).unwrap()),
        1 => Box::new(LocalDepolarizing::new(q, r.gen()).unwrap()),
        2 => Box::new(UnitaryChannel::new(sample_haar(q, r).unwrap())),
        _ => {
            // amplitude-damping style Kraus pair on the full space
            let d = 1 << q;
            let gamma: f64 = r.gen();
            let mut k0 = linalg::identity(d);
            k0[(d - 1, d - 1)] = C64::new((1.0 - gamma).sqrt(), 0.0);
            let mut k1 = CMatrix::zeros(d, d);
            k1[(0, d - 1)] = C64::new(gamma.sqrt(), 0.0);
            Box::new(KrausChannel::new(vec![k0, k1]).unwrap())
        }
    }
}

fn permutation(t: usize, r: &mut ChaCha20Rng) -> Permutation {
    let mut images: Vec<usize> = (0..t).collect();
    for i in (1..t).rev() {
        images.swap(i, r.gen_range(0..=i));
    }
    Permutation::new(images).unwrap()
}

fn cases(n: u32) -> ProptestConfig {
    ProptestConfig { cases: n, ..ProptestConfig::default() }
}

proptest! {
    #![proptest_config(cases(24))]

    #[test]
    fn channels_preserve_trace(seed: u64, q in 1usize..=3) {
        let mut r = rng(seed);
        let rho = random_density(q, &mut r);
        let ch = random_channel(q, &mut r);
        prop_assert!((rho.apply_channel(ch.as_ref()).unwrap().trace() - 1.0).abs() <= 1e-10);
    }

    #[test]
    fn unitaries_preserve_spectrum(seed: u64, q in 1usize..=3) {
        let mut r = rng(seed);
        let rho = random_density(q, &mut r);
        let u = sample_haar(q, &mut r).unwrap();
        let a = rho.eigenvalues();
        let b = rho.apply_unitary(&u).unwrap().eigenvalues();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() <= 1e-9);
        }
    }

    #[test]
    fn partial_trace_of_product(seed: u64, qa in 1usize..=2, qb in 1usize..=2) {
        let mut r = rng(seed);
        let a = random_density(qa, &mut r);
        let b = random_density(qb, &mut r);
        let ab = a.tensor(&b).unwrap();
        let left = ab.partial_trace(&[qa, qb], &[1]).unwrap();
        let right = ab.partial_trace(&[qa, qb], &[0]).unwrap();
        prop_assert!((left.trace() - 1.0).abs() <= 1e-10);
        prop_assert!(linalg::max_abs_diff(left.matrix(), a.matrix()) <= 1e-12);
        prop_assert!(linalg::max_abs_diff(right.matrix(), b.matrix()) <= 1e-12);
    }

    #[test]
    fn trace_distance_is_a_contracting_metric(seed: u64, q in 1usize..=3) {
        let mut r = rng(seed);
        let (a, b, c) = (random_density(q, &mut r), random_density(q, &mut r), random_density(q, &mut r));
        let ab = a.trace_distance(&b).unwrap();
        prop_assert!(ab <= a.trace_distance(&c).unwrap() + c.trace_distance(&b).unwrap() + 1e-9);
        prop_assert!((ab - b.trace_distance(&a).unwrap()).abs() <= 1e-12);
        prop_assert!(a.trace_distance(&a).unwrap() <= 1e-12);
        let ch = random_channel(q, &mut r);
        let after = a.apply_channel(ch.as_ref()).unwrap().trace_distance(&b.apply_channel(ch.as_ref()).unwrap()).unwrap();
        prop_assert!(after <= ab + 1e-9);
    }

    #[test]
    fn swap_test_self_overlap(seed: u64, q in 1usize..=3) {
        let rho = random_density(q, &mut rng(seed));
        prop_assert!((swap_test_accept(&rho, &rho).unwrap() - 0.5 * (1.0 + rho.purity())).abs() <= 1e-15);
    }

    #[test]
    fn keyed_scramblers_are_pure_functions(seed: u64, z in 1usize..=3, mode in 0usize..3) {
        let key = SecretKey::random(&mut rng(seed));
        let spec = [ScramblerSpec::haar_exact(), ScramblerSpec::composed(), ScramblerSpec { mode: crate::ScramblerMode::PruOnly, pru_depth: None }][mode];
        let a = build_scrambler(&key, z, &spec).unwrap();
        let b = build_scrambler(&key, z, &spec).unwrap();
        prop_assert_eq!(a.matrix(), b.matrix());
    }

    #[test]
    fn permutation_group_laws(seed: u64, t in 1usize..=5) {
        let mut r = rng(seed);
        let (a, b, c) = (permutation(t, &mut r), permutation(t, &mut r), permutation(t, &mut r));
        let e = Permutation::identity(t);
        prop_assert_eq!(a.compose(&b).compose(&c), a.compose(&b.compose(&c)));
        prop_assert_eq!(a.compose(&e), a.clone());
        prop_assert_eq!(e.compose(&a), a.clone());
        prop_assert!(a.compose(&a.inverse()).is_identity());
        prop_assert_eq!(a.compose(&b).inverse(), b.inverse().compose(&a.inverse()));
    }

    #[test]
    fn permutation_operator_trace(seed: u64, t in 1usize..=4, d in 2usize..=4) {
        let p = permutation(t, &mut rng(seed));
        let op = PermutationOperator::new(&p, d).unwrap();
        prop_assert_eq!(op.trace(), (d as u64).pow(p.cycles() as u32));
    }

    #[test]
    fn haar_moment_is_unital_trace_preserving_and_covariant(seed: u64, t in 1usize..=3) {
        let d = 4;
        let mut r = rng(seed);
        let o = random_density(2 * t, &mut r).into_matrix();
        let m = moments::haar_moment(&o, d, t).unwrap();
        prop_assert!((linalg::trace(&m) - linalg::trace(&o)).norm() <= 1e-12);
        let id = linalg::identity(d.pow(t as u32));
        prop_assert!(linalg::max_abs_diff(&moments::haar_moment(&id, d, t).unwrap(), &id) <= 1e-12);
        let p = PermutationOperator::new(&permutation(t, &mut r), d).unwrap().matrix();
        let left = moments::haar_moment(&(&p * &o), d, t).unwrap();
        prop_assert!(linalg::max_abs_diff(&left, &(&p * &m)) <= 1e-12);
        let right = moments::haar_moment(&(&o * &p), d, t).unwrap();
        prop_assert!(linalg::max_abs_diff(&right, &(&m * &p)) <= 1e-12);
    }
}

proptest! {
    #![proptest_config(cases(16))]

    #[test]
    fn honest_parties_always_accept(seed: u64, n in 1usize..=2, l in 0usize..=2, m in 0usize..=2, composed: bool) {
        let mut r = rng(seed);
        let spec = if composed { ScramblerSpec::composed() } else { ScramblerSpec::haar_exact() };
        let scheme = Pqas::new(QubitPartition::new(n, l, m).unwrap(), spec);
        let key = SecretKey::random(&mut r);
        let rho = random_density(n, &mut r);
        let out = scheme.authenticate(&scheme.encrypt(&rho, &key).unwrap(), &key).unwrap();
        prop_assert!((out.accept_prob - 1.0).abs() <= 1e-9);
        prop_assert!(out.post_message.unwrap().trace_distance(&rho).unwrap() <= 1e-9);
    }

    #[test]
    fn acceptance_is_linear_in_the_channel(seed: u64, w in 0.0f64..=1.0) {
        let mut r = rng(seed);
        let part = QubitPartition::new(1, 1, 1).unwrap();
        let z = part.z();
        let scheme = Pqas::new(part, ScramblerSpec::haar_exact());
        let key = SecretKey::random(&mut r);
        let c = scheme.encrypt(&haar_state(1, &mut r).unwrap().to_density(), &key).unwrap();
        let k_u = KrausChannel::new(vec![sample_haar(z, &mut r).unwrap().into_matrix()]).unwrap();
        let k_d = Depolarizing::new(z, 0.4).unwrap().kraus();
        let mix = KrausChannel::mixture(&[(w, &k_u), (1.0 - w, &k_d)]).unwrap();
        let p = |ch: &dyn QuantumChannel| scheme.authenticate(&c.tampered(ch).unwrap(), &key).unwrap().accept_prob;
        prop_assert!((p(&mix) - (w * p(&k_u) + (1.0 - w) * p(&k_d))).abs() <= 1e-9);
    }

    #[test]
    fn full_depolarization_accepts_at_tag_floor(seed: u64, l in 0usize..=3) {
        let mut r = rng(seed);
        let part = QubitPartition::new(1, l, 1).unwrap();
        let scheme = Pqas::new(part, ScramblerSpec::haar_exact());
        let key = SecretKey::random(&mut r);
        let c = scheme.encrypt(&random_density(1, &mut r), &key).unwrap();
        let full = Depolarizing::new(part.z(), 1.0).unwrap();
        let p0 = scheme.authenticate(&c.tampered(&full).unwrap(), &key).unwrap().accept_prob;
        prop_assert!((p0 - 2f64.powi(-(l as i32))).abs() <= 1e-12);
    }

    #[test]
    fn unnormalized_fidelity_never_exceeds_acceptance(seed: u64) {
        let mut r = rng(seed);
        let part = QubitPartition::new(1, 1, 1).unwrap();
        let scheme = Pqas::new(part, ScramblerSpec::haar_exact());
        let key = SecretKey::random(&mut r);
        let psi = haar_state(1, &mut r).unwrap();
        let ch = random_channel(part.z(), &mut r);
        let out = scheme.authenticate(&scheme.encrypt(&psi.to_density(), &key).unwrap().tampered(ch.as_ref()).unwrap(), &key).unwrap();
        prop_assert!(out.unnormalized_fidelity(&psi).unwrap() <= out.accept_prob + 1e-12);
        prop_assert!(tag_projector(&part).nrows() == part.dim());
    }

    #[test]
    fn bell_parity_reads_prefix_purity(seed: u64) {
        let rho = random_density(2, &mut rng(seed));
        let pair = rho.tensor(&rho).unwrap();
        let expected = rho.partial_trace(&[1, 1], &[1]).unwrap().purity();
        prop_assert!((attacks::bell_parity_expectation(&pair, 1).unwrap() - expected).abs() <= 1e-12);
    }

    #[test]
    fn vprdm_completeness(seed: u64, n in 1usize..=5, m_frac in 0.0f64..1.0) {
        let m = ((n as f64) * m_frac) as usize;
        let key = SecretKey::random(&mut rng(seed));
        let spec = ScramblerSpec::haar_exact();
        let rho = primitives::vprdm_generate(&VprdmParams::new(n, m, key).unwrap(), &spec).unwrap();
        prop_assert!((primitives::vprdm_verify(&rho, &key, n, m, &spec).unwrap() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn fannes_holds_on_arbitrary_pairs(seed: u64, n in 1usize..=4, noise in 0.0f64..=1.0) {
        let mut r = rng(seed);
        let p = EfiParams { n, m0: 0, gamma: 0.5, c: 0.25, lambda_eff: 0, seed, spec: ScramblerSpec::haar_exact() };
        let (a, b) = (random_density(n, &mut r), random_density(n, &mut r));
        let rep = primitives::efi_report(&p, &a, &b).unwrap();
        prop_assert!(rep.fannes_holds());
        let ch = LocalDepolarizing::new(n, noise).unwrap();
        let t = a.apply_channel(&ch).unwrap().trace_distance(&b.apply_channel(&ch).unwrap()).unwrap();
        prop_assert!(t <= rep.t_exact + 1e-9);
    }

    #[test]
    fn csv_and_json_round_trip(
        est in -1e6f64..1e6, err in 0.0f64..10.0, exact in proptest::option::of(-1.0f64..1.0),
        pred in proptest::option::of(-1.0f64..1.0), seed: u64, wall in proptest::option::of(0u64..100_000),
        n in 1usize..10, channel in "[a-z_]{1,12}(:0\\.[0-9]{1,3})?",
    ) {
        let r = ResultRecord {
            experiment: "auth-sweep/p0".into(), n, l: 1, m: 2, t: 3, trials: 100, mode: "composed".into(), channel,
            estimate: est, stderr: err, exact, prediction: pred, seed, wall_ms: wall,
        }.rounded();
        prop_assert_eq!(harness::parse_csv(&harness::to_csv(std::slice::from_ref(&r)).unwrap()).unwrap(), vec![r.clone()]);
        prop_assert_eq!(harness::parse_json(&harness::to_json(std::slice::from_ref(&r)).unwrap()).unwrap(), vec![r]);
    }
}

proptest! {
    #![proptest_config(cases(6))]

    #[test]
    fn runs_are_determined_by_config_and_seed(seed: u64, l in 1usize..=2) {
        let text = format!(r#"{{"experiment": "auth-sweep", "n": 1, "l": {l}, "m": [0, 1], "trials": 100, "channel": "depolarizing", "p": 0.2, "seed": {seed}}}"#);
        let cfg = ExperimentConfig::from_json_str(&text).unwrap();
        let a = harness::to_csv(&harness::run(&cfg).unwrap()).unwrap();
        let b = harness::to_csv(&harness::run(&cfg).unwrap()).unwrap();
        prop_assert_eq!(a, b);
    }
}

/// The CPA advantage against the mixed scheme stays within the two-copy
/// closeness plus sampling error.
#[test]
fn cpa_advantage_bounded_by_closeness() {
    let part = QubitPartition::new(1, 1, 2).unwrap();
    let cfg = attacks::LrGameConfig::standard(part, 2, 400, 11).unwrap();
    let rep = attacks::lr_cpa_game(&cfg).unwrap();
    let rho = DensityMatrix::basis(1, 0).unwrap();
    let bound = moments::closeness_exact(&part, &rho, 2).unwrap();
    assert!(rep.advantage <= bound + 3.0 * rep.advantage_stderr, "{} vs {bound}", rep.advantage);
}

/// `closeness_exact ≤ C t²/2^m` with a fitted constant that stays put across layouts.
#[test]
fn closeness_constant_is_stable() {
    let rho = DensityMatrix::basis(1, 0).unwrap();
    let mut cs = Vec::new();
    for n in 1..=2 {
        for l in 0..=2 {
            // z ≤ 5 keeps the two-copy spectrum at 1024 dimensions
            for m in (1..=2).filter(|m| n + l + m <= 5) {
                let p = QubitPartition::new(n, l, m).unwrap();
                let r = if n == 1 { rho.clone() } else { DensityMatrix::basis(2, 0).unwrap() };
                cs.push(moments::closeness_exact(&p, &r, 2).unwrap() * 2f64.powi(m as i32) / 4.0);
            }
        }
    }
    let mean = cs.iter().sum::<f64>() / cs.len() as f64;
    assert!(cs.iter().all(|c| (c / mean - 1.0).abs() <= 0.5), "{cs:?}");
}

/// For product inputs the two-copy Helstrom projector is the symmetric
/// projector; a sparse, highly degenerate spectrum that once tripped the
/// eigensolver.
#[test]
fn two_copy_helstrom_projector_is_symmetric() {
    let p = QubitPartition::new(1, 1, 1).unwrap();
    let rho = DensityMatrix::basis(2, 0).unwrap();
    let gap = moments::joint_moment_exact(&p, &rho, 2, 0).unwrap() - moments::joint_target(&p, &rho, 2, 0).unwrap();
    let swap = PermutationOperator::new(&Permutation::transposition(2, 0, 1), 8).unwrap().matrix();
    let sym = (linalg::identity(64) + swap) / C64::new(2.0, 0.0);
    assert!(linalg::max_abs_diff(&linalg::positive_part_projector(&gap), &sym) < 1e-12);
}
