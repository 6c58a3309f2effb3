//! Fixtures shared by the benchmarks.

use std::sync::Arc;

use oscchain::chain::{hamiltonian_from, lattice};
use oscchain::gibbs::spectral;
use oscchain::{ChainSpec, EvolutionPlan, GibbsState, LabeledOperator, LocalTerms, PotentialSpec, C64};

/// Two-site chain with the default Gaussian `V` and `φ`.
pub fn chain(l: usize, site_dim: usize, beta: f64) -> ChainSpec {
    let v = PotentialSpec::gaussian(0.5, 0.0, 1.0).expect("valid bump");
    let phi = PotentialSpec::gaussian(0.3, 0.0, 1.0).expect("valid bump");
    ChainSpec::new(l, site_dim, 1.0, v, phi, beta).expect("valid chain")
}

pub struct Thermal {
    pub chain: ChainSpec,
    pub terms: LocalTerms,
    pub state: GibbsState,
    pub plan: EvolutionPlan,
}

/// Gibbs state and evolution plan of `chain(1, site_dim, beta)`.
pub fn thermal(site_dim: usize, beta: f64) -> Thermal {
    let chain = chain(1, site_dim, beta);
    let terms = chain.local_terms().expect("terms");
    let sites = lattice(1);
    let h = hamiltonian_from(&terms, &sites).expect("hamiltonian").full;
    let spec = Arc::new(spectral(&h).expect("spectrum"));
    let state = GibbsState::new(spec.clone(), beta, sites, site_dim).expect("state");
    let plan = EvolutionPlan::with_spectral(h, spec, vec![]);
    Thermal { chain, terms, state, plan }
}

/// Position operator on site `site`, as a complex labeled operator.
pub fn position(t: &Thermal, site: i64) -> LabeledOperator<C64> {
    LabeledOperator::new(vec![site], t.chain.site_dim, t.terms.position.clone()).expect("operator").to_complex()
}
