//! Closed-form likelihood equivalence and finite-difference gradient checks.

mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;

use collective_risk::model::{
    log_likelihood, log_pmf_negbinomial, CountFamily, ModelSpec, PortfolioData, PriorConfig, Record, SizeFamily,
};

const M6: ModelSpec = ModelSpec::new(SizeFamily::LogT, CountFamily::NegBinomial);

#[test]
fn lt_nb_matches_closed_form() {
    let err = common::closed_form_error(100, 11);
    assert!(err < 1e-10, "{err}");
}

#[test]
fn zero_claim_cells_keep_only_the_count_term() {
    let mut rng = ChaCha20Rng::seed_from_u64(12);
    let data = common::random_portfolio(&mut rng, 7, 12);
    let state = common::random_state(&mut rng, M6, 7);
    let mut checked = 0;
    for r in data.records().iter().filter(|r| r.n_claims == 0) {
        // the same cell as a one-class, one-month portfolio
        let a = r.age_class - 1;
        let one = PortfolioData::new(vec![Record { age_class: 1, month: 1, ..*r }]).unwrap();
        let mut s1 = state.clone();
        for b in [Some(&mut s1.lambda), Some(&mut s1.theta), s1.nu.as_mut(), s1.delta.as_mut()].into_iter().flatten() {
            b.values = vec![b.values[a]];
        }
        let mu = state.lambda.values[a] * r.population as f64;
        let count = log_pmf_negbinomial(0, mu, state.delta.as_ref().unwrap().values[a]).unwrap();
        assert!((log_likelihood(&one, &s1, &M6).unwrap() - count).abs() < 1e-12);
        checked += 1;
    }
    assert!(checked > 0);
}

#[test]
fn gradients_match_finite_differences() {
    for (k, spec) in ModelSpec::ALL.iter().enumerate() {
        for prior in [PriorConfig::gamma(), PriorConfig::half_cauchy()] {
            let err = common::worst_gradient_error(*spec, prior, 50, 100 + k as u64);
            assert!(err < 1e-5, "{spec} {prior:?}: {err}");
        }
    }
}
