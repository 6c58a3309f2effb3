use ndarray::Array2;
use oscchain::chain::{hamiltonian, lattice, lr_constant, partial_trace};
use oscchain::dynamics::lr_envelope;
use oscchain::entropy::{pinsker, relative_entropy};
use oscchain::gibbs::{gibbs_state, trace_product};
use oscchain::kernel::{eigensum_kernel, mehler_kernel};
use oscchain::linalg::{eigh, max_abs, random_density, random_hermitian, to_complex, trace};
use oscchain::{ChainSpec, GridSpec, HermiteBasis, LabeledOperator, PotentialSpec, SymplecticVector, C64};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn eigh_reconstructs_hermitian(seed in any::<u64>(), n in 1usize..24) {
        let a = random_hermitian(n, &mut rng(seed));
        let (w, v) = eigh(&a).unwrap();
        let d = Array2::from_diag(&w.mapv(|x| C64::new(x, 0.0)));
        let back = v.dot(&d).dot(&v.t().mapv(|z| z.conj()));
        prop_assert!(max_abs(&(back - &a)) < 1e-12);
        prop_assert!(w.windows(2).into_iter().all(|p| p[0] <= p[1]));
    }

    #[test]
    fn relative_entropy_nonnegative_with_pinsker(seed in any::<u64>(), n in 2usize..10) {
        let mut r = rng(seed);
        let a = random_density(n, &mut r);
        let b = random_density(n, &mut r);
        prop_assert!(relative_entropy(&a, &b).unwrap() >= -1e-12);
        prop_assert!(relative_entropy(&a, &a).unwrap().abs() < 1e-10);
        let (_, _, ok) = pinsker(&a, &b).unwrap();
        prop_assert!(ok);
    }

    #[test]
    fn partial_trace_keeps_trace(seed in any::<u64>(), d in 2usize..4) {
        let support = lattice(1);
        let rho = random_density(d * d, &mut rng(seed));
        let red = partial_trace(&rho, &support, &[0], d).unwrap();
        prop_assert!((trace(&red) - C64::new(1.0, 0.0)).norm() < 1e-12);
        prop_assert!(max_abs(&(&red - &red.t().mapv(|z| z.conj()))) < 1e-14);
    }

    #[test]
    fn mehler_symmetric_positive(beta in 0.2f64..3.0, omega in 0.5f64..2.0) {
        let grid = GridSpec::new(-5.0, 5.0, 48).unwrap();
        let k = mehler_kernel(beta, omega, &grid).unwrap();
        prop_assert!(k.asymmetry() < 1e-12);
        prop_assert!(k.values.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn mehler_agrees_with_eigensum(beta in 0.5f64..2.0, omega in 0.6f64..1.6) {
        let grid = GridSpec::new(-5.0, 5.0, 40).unwrap();
        let basis = HermiteBasis::new(40, omega).unwrap();
        let (e, _) = eigensum_kernel(&basis, beta, &grid).unwrap();
        let m = mehler_kernel(beta, omega, &grid).unwrap();
        prop_assert!(m.relative_error(&e) < 1e-9);
    }

    #[test]
    fn symplectic_form_is_antisymmetric_and_bilinear(
        a in prop::array::uniform4(-2.0f64..2.0),
        b in prop::array::uniform4(-2.0f64..2.0),
        nu in -3.0f64..3.0,
    ) {
        let f = SymplecticVector::from_pairs(&[(0, C64::new(a[0], a[1])), (1, C64::new(a[2], a[3]))]);
        let g = SymplecticVector::from_pairs(&[(0, C64::new(b[0], b[1])), (2, C64::new(b[2], b[3]))]);
        prop_assert!((f.sigma(&g) + g.sigma(&f)).abs() < 1e-12);
        prop_assert!(f.sigma(&f).abs() < 1e-12);
        prop_assert!((f.scale(nu).sigma(&g) - nu * f.sigma(&g)).abs() < 1e-11);
        let h = f.add(&g);
        prop_assert!((h.sigma(&g) - f.sigma(&g)).abs() < 1e-11);
    }

    #[test]
    fn lr_envelope_grows_with_time(t1 in 0.0f64..2.0, dt in 1e-6f64..1.0, phi in 0.01f64..0.5) {
        let a = lr_envelope(1.0, 1.0, phi, 0.5, t1);
        let b = lr_envelope(1.0, 1.0, phi, 0.5, t1 + dt);
        prop_assert!(b > a);
        prop_assert_eq!(lr_envelope(1.0, 1.0, phi, 0.5, 0.0), 0.0);
        prop_assert_eq!(lr_envelope(1.0, 1.0, phi, 0.5, -t1), a);
    }
}

#[test]
fn lr_constant_closed_form() {
    let pi2 = std::f64::consts::PI.powi(2);
    assert!((lr_constant() - 4.0 * (pi2 / 3.0 - 1.0)).abs() < 1e-12);
}

/// Uncoupled harmonic sites: `⟨x²⟩ = coth(βω)/(2ω)` per site, independent of
/// the chain construction.
#[test]
fn harmonic_chain_position_variance() {
    let (omega, beta) = (1.2, 0.8);
    let chain = ChainSpec::new(1, 24, omega, PotentialSpec::zero(), PotentialSpec::zero(), beta).unwrap();
    let h = hamiltonian(&chain).unwrap().full;
    let g = gibbs_state(&h, beta).unwrap();
    let terms = chain.local_terms().unwrap();
    let x2 = terms.position.dot(&terms.position);
    let expected = 1.0 / (beta * omega).tanh() / (2.0 * omega);
    for site in chain.sites() {
        let q = LabeledOperator::new(vec![site], chain.site_dim, x2.clone()).unwrap();
        let got = g.expectation_real(&q).unwrap();
        assert!((got - expected).abs() < 1e-10, "site {site}: {got} vs {expected}");
    }
}

/// The Gibbs state is stationary: `Tr(ρ[H, Q]) = 0` for any `Q`.
#[test]
fn gibbs_state_commutes_with_hamiltonian() {
    let chain = ChainSpec::new(1, 5, 1.0, PotentialSpec::gaussian(0.5, 0.0, 1.0).unwrap(), PotentialSpec::gaussian(0.3, 0.0, 1.0).unwrap(), 0.7)
        .unwrap();
    let h = hamiltonian(&chain).unwrap().full;
    let g = gibbs_state(&h, chain.beta).unwrap();
    let rho = to_complex(&g.rho());
    let hc = to_complex(h.matrix());
    let q = random_hermitian(rho.nrows(), &mut rng(3));
    let comm = hc.dot(&q) - q.dot(&hc);
    assert!(trace_product(&rho, &comm).norm() < 1e-11);
    assert!(max_abs(&(rho.dot(&hc) - hc.dot(&rho))) < 1e-12);
}
