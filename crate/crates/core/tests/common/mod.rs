//! Shared fixtures and independent oracles for the integration tests.
#![allow(dead_code)]

use std::f64::consts::FRAC_PI_2;

use quadrature::double_exponential::integrate;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use statrs::distribution::{Continuous, StudentsT};
use statrs::function::gamma::ln_gamma;

use collective_risk::inference::{run_chains, LogDensity, Posterior, SamplerConfig};
use collective_risk::model::{
    log_pdf_gamma, log_pdf_log_t, log_pmf_negbinomial, log_pmf_poisson, moment_match, BlockState, GammaHyper,
    HyperPrior, ModelSpec, ParameterState, PortfolioData, PriorConfig, Record,
};
use collective_risk::risk::{risk_curve, tau_grid};

/// Random dense portfolio with one service, `a` classes and `t` months.
/// Roughly a fifth of the cells have no claims.
pub fn random_portfolio<R: Rng>(rng: &mut R, a: usize, t: usize) -> PortfolioData {
    let mut recs = Vec::with_capacity(a * t);
    for age in 1..=a {
        for month in 1..=t {
            let n_claims = if rng.gen_bool(0.2) { 0 } else { rng.gen_range(1..80) };
            let claim_total = if n_claims == 0 { 0.0 } else { n_claims as f64 * rng.gen_range(0.5..40.0) };
            recs.push(Record {
                service: 1,
                age_class: age,
                month,
                n_claims,
                claim_total,
                population: rng.gen_range(50..600),
            });
        }
    }
    PortfolioData::new(recs).unwrap()
}

fn block<R: Rng>(rng: &mut R, a: usize, lo: f64, hi: f64) -> BlockState {
    BlockState {
        values: (0..a).map(|_| rng.gen_range(lo..hi)).collect(),
        hyper: GammaHyper::new(rng.gen_range(0.5..5.0), rng.gen_range(0.5..5.0)),
    }
}

pub fn random_state<R: Rng>(rng: &mut R, spec: ModelSpec, a: usize) -> ParameterState {
    ParameterState {
        lambda: block(rng, a, 0.01, 0.5),
        theta: block(rng, a, 0.02, 2.0),
        nu: spec.has_nu().then(|| block(rng, a, 0.5, 60.0)),
        delta: spec.has_delta().then(|| block(rng, a, 0.3, 50.0)),
    }
}

/// LT-NB log-likelihood written term by term in the published closed form:
/// `log[ν^(ν/2) w(ν) / σ] - (ν+1)/2 log(ν + P²) + log ψ`, with
/// `w(ν) = Γ((ν+1)/2) / (Γ(ν/2) Γ(1/2))`,
/// `P = σ⁻¹ log(x θ (1+n)^(1/2) / n^(3/2))` and the negative binomial mass
/// `ψ`. The scale is `σ = ln(1 + 1/n)^(1/2)`, `ψ` carries `Γ(n+1)`, and the
/// `-log x` change of variables is included. Empty cells keep only `log ψ`.
pub fn literal_lt_nb_loglik(data: &PortfolioData, state: &ParameterState) -> f64 {
    let nu_all = &state.nu.as_ref().unwrap().values;
    let delta_all = &state.delta.as_ref().unwrap().values;
    let mut total = 0.0;
    for r in data.records() {
        let a = r.age_class - 1;
        let (nu, delta, theta) = (nu_all[a], delta_all[a], state.theta.values[a]);
        let n = r.n_claims as f64;
        let mu = state.lambda.values[a] * r.population as f64;
        let log_psi = ln_gamma(n + delta) - ln_gamma(n + 1.0) - ln_gamma(delta) + n * (mu / delta).ln()
            - (delta + n) * (1.0 + mu / delta).ln();
        total += log_psi;
        if r.n_claims == 0 {
            continue;
        }
        let x = r.claim_total;
        let sigma = (1.0 + 1.0 / n).ln().sqrt();
        let log_w = ln_gamma(0.5 * (nu + 1.0)) - ln_gamma(0.5 * nu) - ln_gamma(0.5);
        let p = (x * theta * (1.0 + n).sqrt() / n.powf(1.5)).ln() / sigma;
        total += 0.5 * nu * nu.ln() + log_w - sigma.ln() - 0.5 * (nu + 1.0) * (nu + p * p).ln() - x.ln();
    }
    total
}

/// Mean and Monte Carlo standard error from pooled chains, using the
/// multi-chain effective sample size.
pub fn mean_and_mcse(chains: &[Vec<f64>]) -> (f64, f64) {
    let all: Vec<f64> = chains.iter().flatten().copied().collect();
    let n = all.len() as f64;
    let mean = all.iter().sum::<f64>() / n;
    let var = all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    let ess = collective_risk::inference::effective_sample_size(chains).unwrap();
    (mean, (var / ess).sqrt())
}

/// Largest |ln x| at which densities are evaluated; beyond it x overflows.
const LOG_X_LIMIT: f64 = 700.0;

/// ∫ f(x) dx over ln x in [-700, 700], with ln x = m + s tan u.
pub fn integrate_positive_line(f: impl Fn(f64) -> f64, m: f64, s: f64) -> f64 {
    let lo = ((-LOG_X_LIMIT - m) / s).atan();
    let hi = ((LOG_X_LIMIT - m) / s).atan();
    integrate(
        |u: f64| {
            let y = m + s * u.tan();
            let x = y.exp();
            // multiply by x first so the Jacobian cannot overflow on its own
            let v = f(x) * x * s / u.cos().powi(2);
            if v.is_finite() {
                v
            } else {
                0.0
            }
        },
        lo,
        hi,
        1e-12,
    )
    .integral
}

/// Student-t mass of ln x outside [-700, 700].
fn log_t_outer_mass(mu: f64, sigma2: f64, nu: f64) -> f64 {
    // Tail cdf is inaccurate far out for small nu, so integrate the pdf.
    let t = StudentsT::new(0.0, 1.0, nu).unwrap();
    let s = sigma2.sqrt();
    let tail = |z: f64| {
        integrate(|u: f64| t.pdf(u.tan()) / u.cos().powi(2), z.atan(), FRAC_PI_2, 1e-14).integral
    };
    tail((LOG_X_LIMIT - mu) / s) + tail((LOG_X_LIMIT + mu) / s)
}

/// Largest |∫ p(x) dx - 1| of the log-t density over a (μ, σ², ν) grid.
pub fn log_t_normalization_error() -> f64 {
    let mut worst: f64 = 0.0;
    for mu in [-2.0, 0.0, 3.5] {
        for sigma2 in [0.01_f64, 0.3, 2.0] {
            for nu in [1.0, 2.5, 5.0, 30.0, 200.0] {
                let total = integrate_positive_line(
                    |x| log_pdf_log_t(x, mu, sigma2, nu).map_or(0.0, f64::exp),
                    mu,
                    sigma2.sqrt(),
                ) + log_t_outer_mass(mu, sigma2, nu);
                worst = worst.max((total - 1.0).abs());
            }
        }
    }
    worst
}

/// Largest gap between the negative binomial mass and the Poisson-Gamma
/// mixture integral over an (n, μ, δ) grid.
pub fn nb_mixture_error() -> f64 {
    let mut worst: f64 = 0.0;
    for n in [0u64, 1, 4, 17, 60] {
        for mu in [0.3, 5.0, 40.0] {
            for delta in [0.5_f64, 2.0, 12.0, 300.0] {
                // g ~ Gamma(δ, rate δ), N | g ~ Poisson(μ g); ln g = c tan u
                // with c near the sd of ln g
                let c = 4.0_f64.min(1.0 / delta.sqrt());
                let mix = integrate(
                    |u: f64| {
                        let lg = c * u.tan();
                        let g = lg.exp();
                        if g == 0.0 || !g.is_finite() {
                            return 0.0;
                        }
                        let lp = log_pmf_poisson(n, mu * g).unwrap() + log_pdf_gamma(g, delta, delta).unwrap();
                        let v = (lp + lg).exp() * c / u.cos().powi(2);
                        if v.is_finite() {
                            v
                        } else {
                            0.0
                        }
                    },
                    -FRAC_PI_2,
                    FRAC_PI_2,
                    1e-14,
                )
                .integral;
                let nb = log_pmf_negbinomial(n, mu, delta).unwrap().exp();
                worst = worst.max((mix - nb).abs());
            }
        }
    }
    worst
}

/// Largest relative error of the moment-matched lognormal mean and
/// variance against the Gamma(n, θ) moments.
pub fn moment_match_error() -> f64 {
    let mut worst: f64 = 0.0;
    for n in [1u64, 3, 50, 4000] {
        for theta in [0.01, 1.0, 11.1] {
            let (mu, s2) = moment_match(n, theta).unwrap();
            let nf = n as f64;
            let mean = (mu + 0.5 * s2).exp();
            let var = (s2.exp() - 1.0) * (2.0 * mu + s2).exp();
            worst = worst.max((mean / (nf / theta) - 1.0).abs()).max((var / (nf / (theta * theta)) - 1.0).abs());
        }
    }
    worst
}

/// Largest violation of `|fd - g| <= tol * max(1, |g|)` over random points.
pub fn worst_gradient_error(spec: ModelSpec, prior: PriorConfig, points: usize, seed: u64) -> f64 {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let data = random_portfolio(&mut rng, 7, 12);
    let post = Posterior::new(&data, spec, prior, 7).unwrap();
    let dim = post.dim();
    let mut worst: f64 = 0.0;
    for _ in 0..points {
        let z: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let mut g = vec![0.0; dim];
        post.log_density_and_grad(&z, &mut g).unwrap();
        for i in 0..dim {
            let h = 1e-5 * z[i].abs().max(1.0);
            let mut zp = z.clone();
            let mut zm = z.clone();
            zp[i] += h;
            zm[i] -= h;
            let fd = (post.log_density(&zp).unwrap() - post.log_density(&zm).unwrap()) / (2.0 * h);
            worst = worst.max((fd - g[i]).abs() / g[i].abs().max(1.0));
        }
    }
    worst
}

/// Largest `|TVaR - VaR - ES/(1-τ)|` and whether VaR and TVaR stay
/// monotone in τ, over `sets` random samples.
pub fn tvar_decomposition(sets: usize, seed: u64) -> (f64, bool) {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let taus = tau_grid(100);
    let mut worst: f64 = 0.0;
    let mut monotone = true;
    for _ in 0..sets {
        let n = rng.gen_range(1..400);
        let xs: Vec<f64> = (0..n)
            .map(|_| if rng.gen_bool(0.2) { rng.gen_range(0..5) as f64 } else { rng.gen_range(0.0..100.0) })
            .collect();
        let curve = risk_curve(&xs, &taus).unwrap();
        for p in &curve {
            let scale = p.tvar.abs().max(1.0);
            worst = worst.max((p.tvar - p.var - p.es / (1.0 - p.tau)).abs() / scale);
        }
        // TVaR is a ratio of sums, so allow rounding at flat stretches
        monotone &= curve
            .windows(2)
            .all(|w| w[1].var >= w[0].var && w[1].tvar >= w[0].tvar - 1e-12 * w[0].tvar.abs().max(1.0));
    }
    (worst, monotone)
}

/// Largest gap between the generic LT-NB log-likelihood and the literal
/// closed form over `n` random 7x12 portfolios.
pub fn closed_form_error(n: usize, seed: u64) -> f64 {
    let spec = ModelSpec::ALL[5];
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let data = random_portfolio(&mut rng, 7, 12);
        let state = random_state(&mut rng, spec, 7);
        let generic = collective_risk::model::log_likelihood(&data, &state, &spec).unwrap();
        worst = worst.max((generic - literal_lt_nb_loglik(&data, &state)).abs());
    }
    worst
}

pub fn pinned(shape: f64, rate: f64) -> HyperPrior {
    HyperPrior::Pinned { shape, rate }
}

/// Closed-form posterior means of λ and θ per class under pinned Gamma priors.
pub fn conjugate_means(data: &PortfolioData, (al, bl): (f64, f64), (at, bt): (f64, f64)) -> (Vec<f64>, Vec<f64>) {
    let a = data.n_age_classes();
    let mut sn = vec![0.0; a];
    let mut sp = vec![0.0; a];
    let mut sx = vec![0.0; a];
    for r in data.records() {
        sn[r.age_class - 1] += r.n_claims as f64;
        sp[r.age_class - 1] += r.population as f64;
        sx[r.age_class - 1] += r.claim_total;
    }
    let lambda = (0..a).map(|c| (al + sn[c]) / (bl + sp[c])).collect();
    let theta = (0..a).map(|c| (at + sn[c]) / (bt + sx[c])).collect();
    (lambda, theta)
}

/// z-scores of sampled λ and θ posterior means against the conjugate
/// closed forms, with all hyperparameters pinned.
pub fn conjugate_z_scores(seed: u64) -> Vec<f64> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let data = random_portfolio(&mut rng, 3, 12);
    let prior = PriorConfig { lambda: pinned(2.0, 5.0), theta: pinned(1.5, 10.0), ..PriorConfig::gamma() };
    let sampler = SamplerConfig { n_chains: 3, n_iterations: 3000, n_burnin: 1000, seed, ..SamplerConfig::default() };
    let fit = run_chains(&data, ModelSpec::ALL[0], prior, &sampler).unwrap();
    let (lambda, theta) = conjugate_means(&data, (2.0, 5.0), (1.5, 10.0));
    let mut z = Vec::new();
    for (block, exact) in [("lambda", lambda), ("theta", theta)] {
        for (c, e) in exact.iter().enumerate() {
            let idx = fit.index_of(&format!("{block}[{}]", c + 1)).unwrap();
            let (m, se) = mean_and_mcse(&fit.parameter(idx));
            z.push((m - e) / se);
        }
    }
    z
}

