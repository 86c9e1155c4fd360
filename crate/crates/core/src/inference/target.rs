//! Posterior density and gradient on the log-transformed parameter space.

use std::f64::consts::PI;

use statrs::function::gamma::{digamma, ln_gamma};

use crate::error::{domain, Error, Result};
use crate::model::density::{digamma_diff, ln_gamma_ratio, log_t_normalizer, log_t_normalizer_deriv};
use crate::model::{CountFamily, HyperPrior, ModelSpec, ParameterLayout, PortfolioData, PriorConfig, SizeFamily};

/// A differentiable log density over an unconstrained vector.
pub trait LogDensity: Sync {
    fn dim(&self) -> usize;

    /// Writes the gradient into `grad` and returns the log density.
    fn log_density_and_grad(&self, z: &[f64], grad: &mut [f64]) -> Result<f64>;
}

#[derive(Debug, Clone)]
struct Cell {
    n: f64,
    pop: f64,
    ln_fact_n: f64,
    // size-term constants, only meaningful for n >= 1
    x: f64,
    ln_x: f64,
    ln_gamma_n: f64,
    sigma2: f64,
    // ln x - ln n + sigma2/2, so that ln x - mu = offset + ln theta
    offset: f64,
}

/// Unnormalized log posterior of a model, pulled back to `z = ln(params)`
/// with the log-Jacobian included.
#[derive(Debug, Clone)]
pub struct Posterior {
    layout: ParameterLayout,
    cells: Vec<Vec<Cell>>,
}

impl Posterior {
    pub fn new(data: &PortfolioData, spec: ModelSpec, prior: PriorConfig, n_age_classes: usize) -> Result<Self> {
        if data.n_age_classes() > n_age_classes {
            return domain("data has more age classes than the parameter layout");
        }
        if n_age_classes == 0 {
            return domain("need at least one age class");
        }
        let mut cells = vec![Vec::new(); n_age_classes];
        for r in data.records() {
            let n = r.n_claims as f64;
            let mut c = Cell {
                n,
                pop: r.population as f64,
                ln_fact_n: ln_gamma(n + 1.0),
                x: r.claim_total,
                ln_x: 0.0,
                ln_gamma_n: 0.0,
                sigma2: 0.0,
                offset: 0.0,
            };
            if r.n_claims > 0 {
                c.ln_x = r.claim_total.ln();
                c.ln_gamma_n = ln_gamma(n);
                c.sigma2 = (1.0 / n).ln_1p();
                c.offset = c.ln_x - n.ln() + 0.5 * c.sigma2;
            }
            cells[r.age_class - 1].push(c);
        }
        Ok(Self { layout: ParameterLayout::new(spec, prior, n_age_classes), cells })
    }

    pub fn layout(&self) -> &ParameterLayout {
        &self.layout
    }

    pub fn spec(&self) -> ModelSpec {
        self.layout.spec
    }

    pub fn log_density(&self, z: &[f64]) -> Result<f64> {
        let mut g = vec![0.0; z.len()];
        self.log_density_and_grad(z, &mut g)
    }

    /// Likelihood contribution of one age class; adds gradients with respect
    /// to the log of lambda, theta, nu, delta.
    fn class_loglik(&self, a: usize, lambda: f64, theta: f64, nu: f64, delta: f64, g: &mut [f64; 4]) -> f64 {
        let spec = self.layout.spec;
        let ln_theta = theta.ln();
        let mut lp = 0.0;
        let (mut g_l, mut g_t, mut g_nu_nat, mut g_d_nat) = (0.0, 0.0, 0.0, 0.0);

        let (t_norm, t_norm_deriv) = if spec.size == SizeFamily::LogT {
            (log_t_normalizer(nu), log_t_normalizer_deriv(nu))
        } else {
            (0.0, 0.0)
        };

        for c in &self.cells[a] {
            let m = lambda * c.pop;
            match spec.count {
                CountFamily::Poisson => {
                    lp += c.n * m.ln() - m - c.ln_fact_n;
                    g_l += c.n - m;
                }
                CountFamily::NegBinomial => {
                    // written with ln_1p so large dispersions do not cancel
                    let dm = delta + m;
                    let l1p = (m / delta).ln_1p();
                    lp += ln_gamma_ratio(c.n, delta) - c.ln_fact_n + c.n * (m.ln() - dm.ln()) - delta * l1p;
                    g_l += c.n - (delta + c.n) * m / dm;
                    g_d_nat += digamma_diff(c.n, delta) + (m - c.n) / dm - l1p;
                }
            }
            if c.n == 0.0 {
                continue;
            }
            match spec.size {
                SizeFamily::Gamma => {
                    lp += c.n * ln_theta - c.ln_gamma_n + (c.n - 1.0) * c.ln_x - theta * c.x;
                    g_t += c.n - theta * c.x;
                }
                SizeFamily::LogNormal => {
                    let r = c.offset + ln_theta;
                    lp += -0.5 * (2.0 * PI * c.sigma2).ln() - r * r / (2.0 * c.sigma2) - c.ln_x;
                    g_t -= r / c.sigma2;
                }
                SizeFamily::LogT => {
                    let r = c.offset + ln_theta;
                    let q = r * r / c.sigma2;
                    lp += t_norm - 0.5 * c.sigma2.ln() - 0.5 * (nu + 1.0) * (q / nu).ln_1p() - c.ln_x;
                    g_t -= (nu + 1.0) * r / (c.sigma2 * (nu + q));
                    g_nu_nat += t_norm_deriv - 0.5 * (q / nu).ln_1p()
                        + (nu + 1.0) * q / (2.0 * nu * (nu + q));
                }
            }
        }
        g[0] += g_l;
        g[1] += g_t;
        g[2] += nu * g_nu_nat;
        g[3] += delta * g_d_nat;
        lp
    }
}

fn hyperprior_term(family: HyperPrior, ln_h: f64, h: f64) -> (f64, f64) {
    // log density of h plus the log-Jacobian ln h, and its derivative in ln h
    match family {
        HyperPrior::Gamma => {
            let (s, r) = (HyperPrior::GAMMA_SHAPE, HyperPrior::GAMMA_RATE);
            (s * r.ln() - ln_gamma(s) + s * ln_h - r * h, s - r * h)
        }
        HyperPrior::HalfCauchy => ((2.0 / PI).ln() - (h * h).ln_1p() + ln_h, 1.0 - 2.0 * h * h / (1.0 + h * h)),
        HyperPrior::Pinned { .. } => (0.0, 0.0),
    }
}

impl LogDensity for Posterior {
    fn dim(&self) -> usize {
        self.layout.dim()
    }

    fn log_density_and_grad(&self, z: &[f64], grad: &mut [f64]) -> Result<f64> {
        let dim = self.layout.dim();
        if z.len() != dim || grad.len() != dim {
            return domain(format!("expected {dim} coordinates, got {}", z.len()));
        }
        if let Some(i) = z.iter().position(|v| !v.is_finite()) {
            return domain(format!("coordinate {i} is not finite"));
        }
        grad.iter_mut().for_each(|g| *g = 0.0);
        let n_classes = self.layout.n_age_classes;
        let mut lp = 0.0;

        // Block offsets in layout order; the likelihood needs all four blocks per class.
        let mut off = [None; 4];
        for &(b, start, _) in self.layout.blocks() {
            off[b as usize] = Some(start);
        }
        let value = |slot: usize, a: usize| off[slot].map(|s| z[s + a].exp()).unwrap_or(1.0);

        for a in 0..n_classes {
            let mut g = [0.0; 4];
            lp += self.class_loglik(a, value(0, a), value(1, a), value(2, a), value(3, a), &mut g);
            for (slot, gv) in g.iter().enumerate() {
                if let Some(s) = off[slot] {
                    grad[s + a] += gv;
                }
            }
        }

        for &(b, start, sampled) in self.layout.blocks() {
            let family = self.layout.prior.block(b);
            let (ln_shape, ln_rate) = match family {
                HyperPrior::Pinned { shape, rate } => (shape.ln(), rate.ln()),
                _ => (z[start + n_classes], z[start + n_classes + 1]),
            };
            let (shape, rate) = (ln_shape.exp(), ln_rate.exp());
            let lg_shape = ln_gamma(shape);
            let mut sum_z = 0.0;
            let mut sum_v = 0.0;
            for a in 0..n_classes {
                let zi = z[start + a];
                let v = zi.exp();
                lp += shape * ln_rate - lg_shape + shape * zi - rate * v;
                grad[start + a] += shape - rate * v;
                sum_z += zi;
                sum_v += v;
            }
            if sampled {
                let k = n_classes as f64;
                grad[start + n_classes] += shape * (k * ln_rate - k * digamma(shape) + sum_z);
                grad[start + n_classes + 1] += k * shape - rate * sum_v;
                let (l1, g1) = hyperprior_term(family, ln_shape, shape);
                let (l2, g2) = hyperprior_term(family, ln_rate, rate);
                lp += l1 + l2;
                grad[start + n_classes] += g1;
                grad[start + n_classes + 1] += g2;
            }
        }

        if let Some(index) = grad.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient { index });
        }
        if !lp.is_finite() {
            return Err(Error::Sampler("log density is not finite".into()));
        }
        Ok(lp)
    }
}
