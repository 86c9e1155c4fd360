//! Sampler recovery of conjugate posteriors, determinism and diagnostic
//! oracles on synthetic chains.

mod common;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, Normal};

use collective_risk::inference::diagnostics::autocorrelations;
use collective_risk::inference::{effective_sample_size, geweke_z, run_chains, split_rhat, SamplerConfig};
use collective_risk::model::{CountFamily, ModelSpec, PriorConfig, SizeFamily};

const M1: ModelSpec = ModelSpec::new(SizeFamily::Gamma, CountFamily::Poisson);

fn short_sampler(seed: u64) -> SamplerConfig {
    SamplerConfig { n_chains: 3, n_iterations: 3000, n_burnin: 1000, seed, ..SamplerConfig::default() }
}

#[test]
fn poisson_gamma_posterior_mean_recovered() {
    for z in common::conjugate_z_scores(5) {
        assert!(z.abs() < 3.0, "z = {z}");
    }
}

#[test]
fn identical_seeds_give_identical_draws() {
    let mut rng = ChaCha20Rng::seed_from_u64(3);
    let data = common::random_portfolio(&mut rng, 2, 6);
    let cfg = SamplerConfig { n_iterations: 400, n_burnin: 200, ..short_sampler(9) };
    let a = run_chains(&data, M1, PriorConfig::gamma(), &cfg).unwrap();
    let b = run_chains(&data, M1, PriorConfig::gamma(), &cfg).unwrap();
    assert_eq!(a, b);
    let c = run_chains(&data, M1, PriorConfig::gamma(), &SamplerConfig { seed: 10, ..cfg }).unwrap();
    assert_ne!(a.draws, c.draws);
}

fn iid_chains(m: usize, n: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let d = Normal::new(0.0, 1.0).unwrap();
    (0..m).map(|_| (0..n).map(|_| d.sample(&mut rng)).collect()).collect()
}

#[test]
fn iid_chains_look_converged() {
    let chains = iid_chains(4, 5000, 1);
    let r = split_rhat(&chains).unwrap();
    assert!((0.99..=1.01).contains(&r), "{r}");
    let ess = effective_sample_size(&chains).unwrap();
    assert!(ess >= 0.8 * 20_000.0, "{ess}");
    for c in &chains {
        assert!(geweke_z(c).abs() < 4.0);
    }
}

#[test]
fn shifted_chains_flagged() {
    let mut chains = iid_chains(3, 1000, 2);
    chains[0].iter_mut().for_each(|v| *v += 10.0);
    assert!(split_rhat(&chains).unwrap() > 2.0);
}

#[test]
fn ar1_effective_sample_size() {
    // ESS/N of an AR(1) chain is (1 - ρ)/(1 + ρ)
    let rho: f64 = 0.9;
    let mut rng = ChaCha20Rng::seed_from_u64(4);
    let d = Normal::new(0.0, (1.0 - rho * rho).sqrt()).unwrap();
    let chains: Vec<Vec<f64>> = (0..4)
        .map(|_| {
            let mut x = 0.0;
            (0..20_000)
                .map(|_| {
                    x = rho * x + d.sample(&mut rng);
                    x
                })
                .collect()
        })
        .collect();
    let ratio = effective_sample_size(&chains).unwrap() / 80_000.0;
    let expected = (1.0 - rho) / (1.0 + rho);
    assert!((ratio / expected - 1.0).abs() < 0.3, "{ratio} vs {expected}");
    let acf = autocorrelations(&chains, 3);
    assert!((acf[0] - rho).abs() < 0.02, "{acf:?}");
}

#[test]
fn too_few_draws_rejected() {
    assert!(split_rhat(&iid_chains(2, 10, 0)).is_err());
    assert!(effective_sample_size(&iid_chains(1, 500, 0)).is_err());
}
