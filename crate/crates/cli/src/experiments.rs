//! One function per subcommand. Each returns an [`Outcome`] with its tables
//! and pass/fail assertions; nothing here touches the filesystem.

use std::collections::HashMap;
use std::sync::{Arc, Mutex};

use anyhow::Result;
use oscchain::chain::{hamiltonian_from, lattice};
use oscchain::dynamics::{dyson_unitary, interaction_unitary, lr_drift, lr_experiment, volume_convergence};
use oscchain::entropy::{lsc_check, mixing_sequence, monotonicity_suite, padded_harmonic_gibbs, peierls_bogoliubov_suite, uniqueness_bound_experiment};
use oscchain::gibbs::{density_diagnostics, gibbs_condition_check, sandwich_check, spectral, NestedStates, ProductMultiplier};
use oscchain::kernel::{
    continuity_modulus, eigensum_kernel, interacting_eigensum_kernel, kernel_shift_ratio_check, mehler_kernel, pair_kernel_sandwich,
    trotter_convergence, trotter_kernel,
};
use oscchain::kms::{boundary_check, cauchy_riemann_residual, continuity_scan, invariance_residual, regularity_transfer, strip_maximum, KmsFunction, RegularitySettings};
use oscchain::linalg::{max_abs, op_norm, random_hermitian, to_complex};
use oscchain::resolvent::{relation_convergence, relation_suite, RelationSample, RELATION_NAMES};
use oscchain::{Bump, ChainSpec, EvolutionPlan, GibbsState, HermiteBasis, LabeledOperator, LocalTerms, PotentialSpec, Site, SpectralDecomposition, SymplecticVector, C64};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{symmetric_grid, ExperimentConfig};
use crate::output::{Assertion, Outcome, Table};

/// Subcommands in the order `all` runs them.
pub const EXPERIMENTS: [&str; 10] = ["spectrum", "kernel", "dyson", "resolvent", "gibbs", "entropy", "sandwich", "regularity", "kms", "lr"];

/// Shared state for a run: configuration and a cache of Hamiltonian
/// diagonalizations keyed by chain parameters and support.
pub struct Context {
    pub cfg: ExperimentConfig,
    pub max_dim: Option<usize>,
    cache: Mutex<HashMap<String, Arc<SpectralDecomposition>>>,
}

impl Context {
    pub fn new(cfg: ExperimentConfig, max_dim: Option<usize>) -> Self {
        Self { cfg, max_dim, cache: Mutex::new(HashMap::new()) }
    }

    /// Chain on `Λ_l`, refused when its Hilbert space exceeds `--max-dim`.
    fn chain(&self, l: usize, site_dim: usize, beta: f64) -> Result<ChainSpec> {
        let c = self.cfg.chain.build(l, site_dim, beta, self.max_dim)?;
        c.dim()?;
        Ok(c)
    }

    /// Eigendecomposition of `H` on `sites`; `β` does not enter the key.
    fn spectral(&self, chain: &ChainSpec, terms: &LocalTerms, sites: &[Site]) -> Result<Arc<SpectralDecomposition>> {
        let key = format!("{:?}|{:?}|{:?}|{}|{:?}", chain.omega, chain.v, chain.phi, chain.site_dim, sites);
        if let Some(s) = self.cache.lock().expect("cache lock").get(&key) {
            return Ok(s.clone());
        }
        let s = Arc::new(spectral(&hamiltonian_from(terms, sites)?.full)?);
        self.cache.lock().expect("cache lock").insert(key, s.clone());
        Ok(s)
    }

    /// Independent stream per experiment, derived from the config seed.
    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.cfg.seed);
        r.set_stream(stream);
        r
    }

    pub fn run(&self, name: &str) -> Result<Outcome> {
        match name {
            "spectrum" => self.spectrum(),
            "kernel" => self.kernel(),
            "dyson" => self.dyson(),
            "resolvent" => self.resolvent(),
            "gibbs" => self.gibbs(),
            "entropy" => self.entropy(),
            "sandwich" => self.sandwich(),
            "regularity" => self.regularity(),
            "kms" => self.kms(),
            "lr" => self.lr(),
            other => anyhow::bail!("unknown experiment {other}"),
        }
    }

    fn spectrum(&self) -> Result<Outcome> {
        let c = &self.cfg.spectrum;
        let mut out = Outcome::new("spectrum");
        let chain = self.chain(c.l, c.site_dim, c.beta)?;
        let terms = chain.local_terms()?;
        let sites = chain.sites();
        let h = hamiltonian_from(&terms, &sites)?.full;
        let spec = self.spectral(&chain, &terms, &sites)?;
        let state = GibbsState::new(spec.clone(), c.beta, sites, c.site_dim)?;

        let mut levels = Table::new("levels", &["index", "energy", "gap", "population"]);
        let e0 = spec.eigenvalues[0];
        for k in 0..c.levels.min(spec.dim()) {
            levels.push(vec![k.into(), spec.eigenvalues[k].into(), (spec.eigenvalues[k] - e0).into(), state.populations[k].into()]);
        }
        out.tables.push(levels);

        let scale = max_abs(h.matrix()).max(1.0);
        out.check(Assertion::at_most("reconstruction_defect", max_abs(&(spec.reconstruct() - h.matrix())) / scale, 1e-12));
        let (tr, min_eig) = density_diagnostics(&state.rho())?;
        out.check(Assertion::at_most("gibbs_trace_defect", (tr - 1.0).abs(), 1e-12));
        out.check(Assertion::at_least("gibbs_min_eigenvalue", min_eig, -1e-14));
        out.check(Assertion::holds(
            "energies_ascending",
            spec.eigenvalues.windows(2).into_iter().all(|w| w[0] <= w[1]),
            "eigenvalues sorted",
        ));
        out.note(format!("dim {}, log Z = {:.12}", spec.dim(), state.log_z));
        Ok(out)
    }

    fn kernel(&self) -> Result<Outcome> {
        let k = &self.cfg.kernel;
        let mut out = Outcome::new("kernel");
        let grid = k.grid.spec()?;
        let basis = HermiteBasis::new(k.dim, k.omega)?;
        let mut mehler = Table::new("mehler", &["beta", "relative_error", "eigensum_tail"]);
        let mut worst = 0.0f64;
        for &beta in &k.betas {
            let m = mehler_kernel(beta, k.omega, &grid)?;
            let (e, tail) = eigensum_kernel(&basis, beta, &grid)?;
            let err = m.relative_error(&e);
            worst = worst.max(err);
            mehler.push(vec![beta.into(), err.into(), tail.into()]);
        }
        out.tables.push(mehler);
        out.check(Assertion::at_most("mehler_vs_eigensum", worst, k.mehler_tolerance));

        let v = PotentialSpec { terms: k.v.clone() };
        let tgrid = k.trotter_grid.spec()?;
        let reference = interacting_eigensum_kernel(&basis, &v, k.trotter_beta, &tgrid)?;
        let conv = trotter_convergence(&v, k.omega, k.trotter_beta, &k.trotter_steps, &tgrid, &reference)?;
        let mut trotter = Table::new("trotter", &["steps", "relative_error", "order"]);
        for (i, (&m, &e)) in conv.steps.iter().zip(&conv.errors).enumerate() {
            let order = if i == 0 { f64::NAN } else { conv.orders[i - 1] };
            trotter.push(vec![m.into(), e.into(), order.into()]);
        }
        out.tables.push(trotter);
        let lo = conv.orders.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = conv.orders.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        out.check(Assertion::at_least("trotter_order_min", lo, k.order_range[0]));
        out.check(Assertion::at_most("trotter_order_max", hi, k.order_range[1]));

        // full matrices at the Trotter β, one row per grid pair
        let finest = *k.trotter_steps.iter().max().expect("validated");
        let trotter = trotter_kernel(&v, k.omega, k.trotter_beta, finest, &tgrid)?;
        let free = mehler_kernel(k.trotter_beta, k.omega, &tgrid)?;
        let nodes = tgrid.nodes();
        let mut matrix = Table::new("kernel_matrix", &["x", "y", "mehler", "interacting_eigensum", "trotter"]);
        for (i, &x) in nodes.iter().enumerate() {
            for (j, &y) in nodes.iter().enumerate() {
                matrix.push(vec![x.into(), y.into(), free.values[[i, j]].into(), reference.values[[i, j]].into(), trotter.values[[i, j]].into()]);
            }
        }
        out.tables.push(matrix);

        let shift = kernel_shift_ratio_check(&v, k.omega, k.trotter_beta, k.shift_t, k.shift_steps, &tgrid, k.shift_window)?;
        let excess = shift.max_log_excess.abs().max(shift.min_log_excess.abs());
        out.check(Assertion::at_most("shift_ratio_envelope", excess, shift.envelope + 1e-9));
        let mut st = Table::new("shift_ratio", &["t", "steps", "a_tilde", "modulus", "envelope", "min_log_excess", "max_log_excess"]);
        st.push(vec![
            shift.t.into(),
            shift.steps.into(),
            shift.a_tilde.into(),
            shift.modulus.into(),
            shift.envelope.into(),
            shift.min_log_excess.into(),
            shift.max_log_excess.into(),
        ]);
        out.tables.push(st);
        Ok(out)
    }

    fn dyson(&self) -> Result<Outcome> {
        let c = &self.cfg.dyson;
        let mut out = Outcome::new("dyson");
        let chain = self.chain(c.l, c.site_dim, 1.0)?;
        let terms = chain.local_terms()?;
        let hams = hamiltonian_from(&terms, &chain.sites())?;
        let (h, hh, ups) = (hams.full.matrix(), hams.harmonic.matrix(), hams.upsilon.matrix());
        let mut table = Table::new("dyson", &["t", "order", "error", "tail_bound", "quadrature_estimate"]);
        let mut worst_excess = f64::NEG_INFINITY;
        let mut worst_quad = 0.0f64;
        for &t in &c.times {
            let exact = interaction_unitary(h, hh, t)?;
            for order in 1..=c.max_order {
                let d = dyson_unitary(hh, ups, t, order)?;
                let err = op_norm(&(&d.unitary - &exact))?;
                worst_excess = worst_excess.max(err - d.tail_bound);
                worst_quad = worst_quad.max(d.quadrature_estimate);
                table.push(vec![t.into(), order.into(), err.into(), d.tail_bound.into(), d.quadrature_estimate.into()]);
            }
        }
        out.tables.push(table);
        out.check(Assertion::at_most("error_minus_tail", worst_excess, c.quadrature_budget));
        out.check(Assertion::at_most("quadrature_estimate", worst_quad, c.quadrature_budget));
        Ok(out)
    }

    fn resolvent(&self) -> Result<Outcome> {
        let c = &self.cfg.resolvent;
        let mut out = Outcome::new("resolvent");
        let pair = |z: [f64; 2]| SymplecticVector::delta(0, C64::new(z[0], z[1]));
        let samples: Vec<RelationSample> =
            c.samples.iter().map(|s| RelationSample { lambda: s.lambda, mu: s.mu, f: pair(s.f), g: pair(s.g) }).collect();
        let mut per_dim = Vec::new();
        for &d in &c.site_dims {
            let chain = self.cfg.chain.build(1, d, 1.0, self.max_dim)?;
            chain.dim_of(1)?;
            let terms = chain.local_terms()?;
            per_dim.push(relation_suite(&terms, &[0], &samples)?);
        }
        let mut header = vec!["site_dim"];
        header.extend(RELATION_NAMES);
        header.extend(["sum_rule_single_power", "norm_excess"]);
        let mut table = Table::new("relations", &header);
        for r in &per_dim {
            let mut row = vec![r.site_dim.into()];
            row.extend(r.residuals.iter().map(|&v| v.into()));
            row.push(r.sum_rule_single_power.into());
            row.push(r.max_norm_excess.into());
            table.push(row);
        }
        out.tables.push(table);
        for k in 0..4 {
            let worst = per_dim.iter().map(|r| r.residuals[k]).fold(0.0, f64::max);
            out.check(Assertion::at_most(format!("exact_{}", RELATION_NAMES[k]), worst, c.exact_tolerance));
        }
        let excess = per_dim.iter().map(|r| r.max_norm_excess).fold(f64::NEG_INFINITY, f64::max);
        out.check(Assertion::at_most("norm_bound_excess", excess, c.exact_tolerance));
        let conv = relation_convergence(per_dim, c.exact_tolerance);
        for (k, &ok) in conv.monotone.iter().enumerate() {
            out.check(Assertion::holds(format!("monotone_{}", RELATION_NAMES[k]), ok, "block residual decreases with site_dim"));
        }
        Ok(out)
    }

    fn gibbs(&self) -> Result<Outcome> {
        let c = &self.cfg.gibbs;
        let mut out = Outcome::new("gibbs");
        let chain = self.chain(c.l_outer, c.site_dim, c.beta)?;
        let terms = chain.local_terms()?;
        let mut rng = self.rng(1);
        let rep = gibbs_condition_check(&chain, c.l, c.l_outer, &terms, c.samples, &mut rng)?;
        let mut table = Table::new("factorization", &["trace_distance", "expectation_defect", "samples"]);
        table.push(vec![rep.trace_distance.into(), rep.expectation_defect.into(), rep.samples.into()]);
        out.tables.push(table);
        out.check(Assertion::at_most("perturbed_state_factorizes", rep.trace_distance, c.tolerance));
        out.check(Assertion::at_most("factorized_expectations", rep.expectation_defect, c.tolerance));
        Ok(out)
    }

    fn nested(&self, chain: &ChainSpec, terms: &LocalTerms, l: usize, l_outer: usize) -> Result<NestedStates> {
        let outer = self.spectral(chain, terms, &lattice(l_outer))?;
        Ok(NestedStates::with_outer(chain, l, l_outer, terms, Some(outer))?)
    }

    fn entropy(&self) -> Result<Outcome> {
        let c = &self.cfg.entropy;
        let mut out = Outcome::new("entropy");
        let chain = self.chain(c.l_outer, c.site_dim, c.beta)?;
        let terms = chain.local_terms()?;
        let states = self.nested(&chain, &terms, c.l, c.l_outer)?;
        let rep = uniqueness_bound_experiment(&chain, &states, &terms, c.l)?;
        let mut restr = Table::new("restrictions", &["sites", "relative_entropy"]);
        for r in &rep.restrictions {
            let label: Vec<String> = r.sites.iter().map(|s| s.to_string()).collect();
            restr.push(vec![label.join(" ").into(), r.entropy.into()]);
        }
        out.tables.push(restr);
        out.check(Assertion::at_most("uniqueness_bound", rep.entropy, rep.bound + rep.tau));
        out.check(Assertion::at_least("entropy_nonnegative", rep.entropy, 0.0));
        out.check(Assertion::holds("uniqueness_pinsker", rep.pinsker, "S >= ½‖Δ‖₁² on the restricted pair"));
        out.check(Assertion::holds("restriction_monotone", rep.monotone, "S nonincreasing as the restriction shrinks"));
        out.note(format!("bound 4β‖φ‖∞ = {:.6}, τ = {:.3e}, boundary gap β(ψ(W) − φ(W)) = {:.6e}", rep.bound, rep.tau, rep.boundary_gap));

        let pb = peierls_bogoliubov_suite(c.pb_trials, c.pb_dim, c.pb_beta, self.cfg.seed.wrapping_add(100))?;
        let mut pbt = Table::new("peierls_bogoliubov", &["trial", "lhs", "rhs", "passed"]);
        for (i, t) in pb.trials.iter().enumerate() {
            pbt.push(vec![i.into(), t.lhs.into(), t.rhs.into(), t.passed.into()]);
        }
        out.tables.push(pbt);
        out.check(Assertion::at_least("peierls_bogoliubov_suite", pb.passed as f64, c.pb_trials as f64));

        let mono = monotonicity_suite(c.monotonicity_trials, c.monotonicity_site_dim, self.cfg.seed.wrapping_add(200))?;
        let mut mt = Table::new("monotonicity", &["trial", "full", "restricted", "conditioned", "passed"]);
        for (i, t) in mono.trials.iter().enumerate() {
            mt.push(vec![i.into(), t.full.into(), t.restricted.into(), t.conditioned.into(), t.passed.into()]);
        }
        out.tables.push(mt);
        out.check(Assertion::at_least("monotonicity_suite", mono.passed as f64, c.monotonicity_trials as f64));
        let pinsker_all = rep.pinsker && mono.trials.iter().all(|t| t.pinsker_full && t.pinsker_restricted);
        out.check(Assertion::holds("pinsker_all_pairs", pinsker_all, "every tested pair satisfies Pinsker"));

        let inner = lattice(c.l);
        let rho = to_complex(&states.outer.reduced_density(&inner)?);
        let sigma = to_complex(&states.inner.rho());
        let pairs: Vec<_> = mixing_sequence(&rho, c.lsc_terms).into_iter().map(|r| (r, sigma.clone())).collect();
        let mix = lsc_check(&pairs, (&rho, &sigma))?;
        out.check(Assertion::at_most("lsc_mixing", mix.limit - mix.tail_min, 1e-6));
        let padded = 4 * c.site_dim;
        let target = padded_harmonic_gibbs(c.beta, chain.omega, padded, padded);
        let reference = padded_harmonic_gibbs(c.beta / 2.0, chain.omega, padded, padded);
        let seq: Vec<_> = (1..=4).map(|k| (padded_harmonic_gibbs(c.beta, chain.omega, k * c.site_dim, padded), reference.clone())).collect();
        let trunc = lsc_check(&seq, (&target, &reference))?;
        out.check(Assertion::at_most("lsc_truncations", trunc.limit - trunc.tail_min, 1e-6));
        let mut lt = Table::new("lsc", &["sequence", "index", "relative_entropy", "limit"]);
        for (i, s) in mix.sequence.iter().enumerate() {
            lt.push(vec!["mixing".into(), i.into(), (*s).into(), mix.limit.into()]);
        }
        for (i, s) in trunc.sequence.iter().enumerate() {
            lt.push(vec!["truncation".into(), i.into(), (*s).into(), trunc.limit.into()]);
        }
        out.tables.push(lt);
        Ok(out)
    }

    fn sandwich(&self) -> Result<Outcome> {
        let c = &self.cfg.sandwich;
        let mut out = Outcome::new("sandwich");
        let chain = self.chain(c.l_outer, c.site_dim, c.beta)?;
        let terms = chain.local_terms()?;
        let states = self.nested(&chain, &terms, c.l, c.l_outer)?;
        let multipliers = c
            .multipliers
            .iter()
            .map(|m| ProductMultiplier::new(lattice(c.l), m.factors.iter().map(|f| potential(f)).collect()))
            .collect::<oscchain::Result<Vec<_>>>()?;
        let rep = sandwich_check(&chain, &states, &terms, &multipliers)?;
        let mut table = Table::new(
            "ratios",
            &["index", "psi_inner", "psi_outer", "state_ratio", "state_lower", "state_upper", "trace_ratio", "trace_lower", "trace_upper"],
        );
        for r in &rep.rows {
            table.push(vec![
                r.index.into(),
                r.psi_inner.into(),
                r.psi_outer.into(),
                r.state_ratio.into(),
                rep.state_lower.into(),
                rep.state_upper.into(),
                r.trace_ratio.into(),
                rep.trace_lower.into(),
                rep.trace_upper.into(),
            ]);
            out.check(Assertion::holds(
                format!("state_ratio_{}", r.index),
                r.state_pass,
                format!("{:.6} in [{:.6}, {:.6}]", r.state_ratio, rep.state_lower, rep.state_upper),
            ));
            out.check(Assertion::holds(
                format!("trace_ratio_{}", r.index),
                r.trace_pass,
                format!("{:.6} in [{:.6}, {:.6}]", r.trace_ratio, rep.trace_lower, rep.trace_upper),
            ));
        }
        out.tables.push(table);
        out.note(format!("τ = {:.3e}", rep.tau));

        let grid = c.pair_grid.spec()?;
        let cols: Vec<(usize, usize)> = c.pair_columns.iter().map(|p| (p[0], p[1])).collect();
        let pair = pair_kernel_sandwich(&chain.v, &chain.phi, chain.omega, c.beta, c.pair_steps, &grid, &cols)?;
        let spread = pair.max_log_ratio.max(-pair.min_log_ratio);
        out.check(Assertion::at_most("pointwise_kernel_sandwich", spread, pair.bound + 1e-9));
        let mut pt = Table::new("pointwise", &["min_log_ratio", "max_log_ratio", "bound"]);
        pt.push(vec![pair.min_log_ratio.into(), pair.max_log_ratio.into(), pair.bound.into()]);
        out.tables.push(pt);
        Ok(out)
    }

    fn regularity(&self) -> Result<Outcome> {
        let c = &self.cfg.regularity;
        let mut out = Outcome::new("regularity");
        let chain = self.chain(c.l_outer, c.site_dim, c.beta)?;
        let terms = chain.local_terms()?;
        let states = self.nested(&chain, &terms, 1, c.l_outer)?;
        let q = ProductMultiplier::new(vec![0, 1], c.factors.iter().map(|f| potential(f)).collect())?;
        let settings = RegularitySettings { t_max: c.t_max, samples: c.samples, grid: c.grid.spec()?, trotter_steps: c.trotter_steps.clone() };
        let rep = regularity_transfer(&chain, &terms, &states.inner, &states.outer, &q, &settings)?;
        let mut table = Table::new(
            "moduli",
            &["delta", "modulus_inner", "modulus_outer", "structure", "mass", "shift_envelope", "bound_inner", "bound_outer"],
        );
        let mut worst_inner = f64::NEG_INFINITY;
        let mut worst_outer = f64::NEG_INFINITY;
        for r in &rep.rows {
            worst_inner = worst_inner.max(r.modulus_inner - r.bound_inner);
            worst_outer = worst_outer.max(r.modulus_outer - r.bound_outer);
            table.push(vec![
                r.delta.into(),
                r.modulus_inner.into(),
                r.modulus_outer.into(),
                r.structure.into(),
                r.mass.into(),
                r.shift_envelope.into(),
                r.bound_inner.into(),
                r.bound_outer.into(),
            ]);
        }
        out.tables.push(table);
        out.check(Assertion::at_most("inner_modulus_within_envelope", worst_inner, 0.0));
        out.check(Assertion::at_most("outer_modulus_within_transfer", worst_outer, 0.0));
        out.check(Assertion::at_most("psi_inner_quadrature", (rep.psi_inner - rep.psi_inner_quadrature).abs(), 1e-6 * rep.psi_inner.abs().max(1.0)));

        let ts = [0.0, 1e-4, 1e-3, 1e-2, 1e-1];
        let cs: Vec<f64> = ts.iter().map(|&t| continuity_modulus(&chain.v, &chain.phi, t)).collect();
        let mut ct = Table::new("continuity_modulus", &["t", "c"]);
        for (t, v) in ts.iter().zip(&cs) {
            ct.push(vec![(*t).into(), (*v).into()]);
        }
        out.tables.push(ct);
        out.check(Assertion::at_most("c_at_zero", cs[0], 0.0));
        out.check(Assertion::holds("c_vanishes_at_zero", cs.windows(2).all(|w| w[0] < w[1]), "c increases along 0, 1e-4, …, 1e-1"));
        out.check(Assertion::holds(
            "c_small_below_c_large",
            rep.c_small < rep.c_large,
            format!("c(0.01) = {:.6e} < c(0.1) = {:.6e}", rep.c_small, rep.c_large),
        ));
        out.note(format!(
            "Ã = {:.6}, transfer factor e^(4β‖φ‖∞) = {:.6}, τ = {:.3e}",
            rep.a_tilde, rep.transfer_factor, rep.tau
        ));
        Ok(out)
    }

    fn kms(&self) -> Result<Outcome> {
        let c = &self.cfg.kms;
        let mut out = Outcome::new("kms");
        let grid = symmetric_grid(c.t_max, c.points);
        let mut rng = self.rng(2);
        let mut boundary = Table::new("boundary", &["beta", "t", "re_f", "im_f", "boundary_residual", "real_axis_residual"]);
        let mut scan = Table::new("continuity", &["beta", "delta", "modulus"]);
        for &beta in &c.betas {
            let chain = self.chain(c.l, c.site_dim, beta)?;
            let terms = chain.local_terms()?;
            let sites = chain.sites();
            let h = hamiltonian_from(&terms, &sites)?.full;
            let spec = self.spectral(&chain, &terms, &sites)?;
            let state = GibbsState::new(spec.clone(), beta, sites.clone(), c.site_dim)?;
            let plan = EvolutionPlan::with_spectral(h, spec, vec![]);
            let rho = to_complex(&state.rho());
            let n = state.dim();
            let (mut worst_b, mut worst_r, mut worst_inv) = (0.0f64, 0.0f64, 0.0f64);
            for p in 0..c.pairs {
                let q = LabeledOperator::new(sites.clone(), c.site_dim, random_hermitian(n, &mut rng))?;
                let r = LabeledOperator::new(sites.clone(), c.site_dim, random_hermitian(n, &mut rng))?;
                let rep = boundary_check(&state, &plan, &q, &r, &grid)?;
                worst_b = worst_b.max(rep.boundary_residual);
                worst_r = worst_r.max(rep.real_axis_residual);
                worst_inv = worst_inv.max(invariance_residual(&rho, &plan, &q, &grid)?);
                if p == 0 {
                    for row in &rep.rows {
                        boundary.push(vec![
                            beta.into(),
                            row.t.into(),
                            row.value.re.into(),
                            row.value.im.into(),
                            row.boundary.into(),
                            row.real_axis.into(),
                        ]);
                    }
                    let f = KmsFunction::new(&state, &q, &r)?;
                    let interior: Vec<C64> =
                        [-1.0, -0.3, 0.4, 1.1].iter().flat_map(|&x| [0.25, 0.5, 0.75].map(|s| C64::new(x, s * beta))).collect();
                    let cr = cauchy_riemann_residual(&f, &interior, 1e-3)?;
                    out.check(Assertion::at_most(format!("cauchy_riemann_beta_{beta}"), cr, 1e-9));
                    let strip = strip_maximum(&f, &grid, c.strip_lines)?;
                    out.check(Assertion::at_most(format!("three_lines_beta_{beta}"), strip.interior_max, strip.boundary_max + 1e-9));
                    for m in continuity_scan(&f, c.t_max, (c.points - 1) / 2, 6)? {
                        scan.push(vec![beta.into(), m.delta.into(), m.modulus.into()]);
                    }
                }
            }
            out.check(Assertion::at_most(format!("boundary_beta_{beta}"), worst_b, c.boundary_tolerance));
            out.check(Assertion::at_most(format!("real_axis_beta_{beta}"), worst_r, c.boundary_tolerance));
            out.check(Assertion::at_most(format!("invariance_beta_{beta}"), worst_inv, c.invariance_tolerance));
        }
        out.tables.push(boundary);
        out.tables.push(scan);
        Ok(out)
    }

    fn lr(&self) -> Result<Outcome> {
        let c = &self.cfg.lr;
        let mut out = Outcome::new("lr");
        let grid = symmetric_grid(c.t_max, c.points);
        let obs = potential(&c.observable);
        let run = |site_dim: usize, phi: PotentialSpec| -> Result<_> {
            let chain = self.chain(c.l, site_dim, c.beta)?.with_phi(phi);
            let terms = chain.local_terms()?;
            let op = |s: Site| LabeledOperator::new(vec![s], site_dim, terms.quadrature.multiplication(|x| obs.eval(x)));
            Ok(lr_experiment(&chain, &op(c.q_site)?, &op(c.r_site)?, &grid)?)
        };
        let phi = self.cfg.chain.phi();
        let main = run(c.site_dim, phi.clone())?;
        let coarse = run(c.drift_site_dim, phi)?;
        let control = run(c.site_dim, PotentialSpec::zero())?;
        let drift = lr_drift(&main, &coarse);
        let tolerance = c.tolerance_factor * drift;
        let mut table = Table::new("curve", &["t", "commutator", "commutator_coarse", "envelope", "decoupled"]);
        let mut worst = f64::NEG_INFINITY;
        for ((p, q), z) in main.points.iter().zip(&coarse.points).zip(&control.points) {
            table.push(vec![p.t.into(), p.commutator.into(), q.commutator.into(), p.envelope.into(), z.commutator.into()]);
            worst = worst.max(p.commutator - p.envelope);
        }
        out.tables.push(table);
        out.check(Assertion::at_most("commutator_minus_envelope", worst, tolerance));
        let control_max = control.points.iter().map(|p| p.commutator).fold(0.0, f64::max);
        out.check(Assertion::at_most("decoupled_control", control_max, c.control_tolerance));
        out.note(format!(
            "‖Φ‖_int = {:.6}, D = {:.6}, drift {:.3e}, tolerance {:.3e}, max g/envelope {:.4}",
            main.interaction_norm, main.distance, drift, tolerance, main.max_ratio
        ));

        let vchain = self.chain(1, c.volume_site_dim, c.beta)?;
        let vterms = vchain.local_terms()?;
        let q = LabeledOperator::new(vec![c.q_site], c.volume_site_dim, vterms.quadrature.multiplication(|x| obs.eval(x)))?;
        let vol = volume_convergence(&vchain, &q, c.volume_t, &c.volume_n)?;
        let mut vt = Table::new("volume", &["n", "n_outer", "delta", "envelope"]);
        for r in &vol.rows {
            vt.push(vec![r.n.into(), r.n_outer.into(), r.delta.into(), r.envelope.into()]);
        }
        out.tables.push(vt);
        out.check(Assertion::holds("volume_within_envelope", vol.within_envelope, "δ(N, N') <= envelope"));
        out.check(Assertion::holds("volume_envelope_decreasing", vol.envelope_decreasing, "envelope decreases with N"));
        out.check(Assertion::holds("volume_delta_decreasing", vol.delta_decreasing, "δ decreases with N"));
        Ok(out)
    }
}

fn potential(bumps: &[Bump]) -> PotentialSpec {
    PotentialSpec { terms: bumps.to_vec() }
}
