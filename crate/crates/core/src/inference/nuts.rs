//! Dynamic-trajectory Hamiltonian transitions (multinomial no-U-turn
//! sampling) with a diagonal metric.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::inference::target::LogDensity;

/// Energy error beyond which a trajectory is declared divergent.
const MAX_ENERGY_ERROR: f64 = 1000.0;

#[derive(Debug, Clone)]
pub(crate) struct Point {
    pub q: Vec<f64>,
    pub p: Vec<f64>,
    pub grad: Vec<f64>,
    pub logp: f64,
}

impl Point {
    pub fn new<T: LogDensity + ?Sized>(target: &T, q: Vec<f64>) -> Option<Self> {
        let mut grad = vec![0.0; q.len()];
        let logp = target.log_density_and_grad(&q, &mut grad).ok()?;
        logp.is_finite().then(|| Self { p: vec![0.0; q.len()], q, grad, logp })
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct TransitionStats {
    pub accept_stat: f64,
    pub n_leapfrog: usize,
    pub depth: usize,
    pub divergent: bool,
    pub energy: f64,
}

fn kinetic(p: &[f64], inv_metric: &[f64]) -> f64 {
    0.5 * p.iter().zip(inv_metric).map(|(p, m)| p * p * m).sum::<f64>()
}

fn sharp(p: &[f64], inv_metric: &[f64]) -> Vec<f64> {
    p.iter().zip(inv_metric).map(|(p, m)| p * m).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Returns `None` when the new position has no finite density.
fn leapfrog<T: LogDensity + ?Sized>(target: &T, from: &Point, eps: f64, inv_metric: &[f64]) -> Option<Point> {
    let dim = from.q.len();
    let mut p = from.p.clone();
    let mut q = from.q.clone();
    for i in 0..dim {
        p[i] += 0.5 * eps * from.grad[i];
        q[i] += eps * inv_metric[i] * p[i];
    }
    let mut grad = vec![0.0; dim];
    let logp = target.log_density_and_grad(&q, &mut grad).ok()?;
    if !logp.is_finite() {
        return None;
    }
    for i in 0..dim {
        p[i] += 0.5 * eps * grad[i];
    }
    Some(Point { q, p, grad, logp })
}

/// Summary of a contiguous piece of trajectory, ends in time order.
struct Subtree {
    minus: Point,
    plus: Point,
    proposal: Point,
    rho: Vec<f64>,
    log_weight: f64,
}

struct TreeBuilder<'a, T: ?Sized, R> {
    target: &'a T,
    rng: &'a mut R,
    inv_metric: &'a [f64],
    eps: f64,
    h0: f64,
    n_leapfrog: usize,
    sum_accept: f64,
    divergent: bool,
}

impl<T: LogDensity + ?Sized, R: Rng> TreeBuilder<'_, T, R> {
    fn no_u_turn(&self, minus_p: &[f64], plus_p: &[f64], rho: &[f64]) -> bool {
        dot(&sharp(minus_p, self.inv_metric), rho) > 0.0 && dot(&sharp(plus_p, self.inv_metric), rho) > 0.0
    }

    /// Checks the merged span and the two spans straddling the join.
    fn merged_ok(&self, early: &Subtree, late: &Subtree, rho: &[f64]) -> bool {
        if !self.no_u_turn(&early.minus.p, &late.plus.p, rho) {
            return false;
        }
        let ext: Vec<f64> = early.rho.iter().zip(&late.minus.p).map(|(a, b)| a + b).collect();
        if !self.no_u_turn(&early.minus.p, &late.minus.p, &ext) {
            return false;
        }
        let ext: Vec<f64> = late.rho.iter().zip(&early.plus.p).map(|(a, b)| a + b).collect();
        self.no_u_turn(&early.plus.p, &late.plus.p, &ext)
    }

    /// Builds a subtree of `2^depth` leapfrog steps from `start` in
    /// direction `dir`. `None` signals a divergence or an internal U-turn.
    fn build(&mut self, start: &Point, depth: usize, dir: f64) -> Option<Subtree> {
        if depth == 0 {
            self.n_leapfrog += 1;
            let Some(next) = leapfrog(self.target, start, dir * self.eps, self.inv_metric) else {
                self.divergent = true;
                return None;
            };
            let h = -next.logp + kinetic(&next.p, self.inv_metric);
            if !h.is_finite() || h - self.h0 > MAX_ENERGY_ERROR {
                self.divergent = true;
                return None;
            }
            let log_weight = self.h0 - h;
            self.sum_accept += log_weight.min(0.0).exp();
            return Some(Subtree {
                minus: next.clone(),
                plus: next.clone(),
                rho: next.p.clone(),
                proposal: next,
                log_weight,
            });
        }
        let first = self.build(start, depth - 1, dir)?;
        let outer = if dir > 0.0 { &first.plus } else { &first.minus };
        let outer = outer.clone();
        let second = self.build(&outer, depth - 1, dir)?;

        let log_weight = log_add_exp(first.log_weight, second.log_weight);
        let take_second = self.rng.gen::<f64>().ln() < second.log_weight - log_weight;
        let rho: Vec<f64> = first.rho.iter().zip(&second.rho).map(|(a, b)| a + b).collect();
        let (early, late) = if dir > 0.0 { (first, second) } else { (second, first) };
        if !self.merged_ok(&early, &late, &rho) {
            return None;
        }
        let proposal_early = !(take_second ^ (dir < 0.0));
        let (minus, plus, early_prop, late_prop) = (early.minus, late.plus, early.proposal, late.proposal);
        Some(Subtree {
            minus,
            plus,
            proposal: if proposal_early { early_prop } else { late_prop },
            rho,
            log_weight,
        })
    }
}

/// One multinomial no-U-turn transition from `current`.
pub(crate) fn transition<T: LogDensity + ?Sized, R: Rng>(
    target: &T,
    current: &Point,
    eps: f64,
    inv_metric: &[f64],
    max_depth: usize,
    rng: &mut R,
) -> (Point, TransitionStats) {
    let mut start = current.clone();
    for (p, m) in start.p.iter_mut().zip(inv_metric) {
        let z: f64 = rng.sample(StandardNormal);
        *p = z / m.sqrt();
    }
    let h0 = -start.logp + kinetic(&start.p, inv_metric);

    let mut tree = Subtree {
        minus: start.clone(),
        plus: start.clone(),
        rho: start.p.clone(),
        proposal: start.clone(),
        log_weight: 0.0,
    };
    let mut builder =
        TreeBuilder { target, rng, inv_metric, eps, h0, n_leapfrog: 0, sum_accept: 0.0, divergent: false };

    let mut depth = 0;
    while depth < max_depth {
        let dir = if builder.rng.gen::<bool>() { 1.0 } else { -1.0 };
        let from = if dir > 0.0 { tree.plus.clone() } else { tree.minus.clone() };
        let Some(sub) = builder.build(&from, depth, dir) else {
            depth += 1;
            break;
        };
        depth += 1;
        if builder.rng.gen::<f64>().ln() < sub.log_weight - tree.log_weight {
            tree.proposal = sub.proposal.clone();
        }
        let log_weight = log_add_exp(tree.log_weight, sub.log_weight);
        let rho: Vec<f64> = tree.rho.iter().zip(&sub.rho).map(|(a, b)| a + b).collect();
        let (early, late) = if dir > 0.0 { (tree, sub) } else { (sub, tree) };
        let ok = builder.merged_ok(&early, &late, &rho);
        // the chosen proposal lives in whichever piece was the running tree
        let chosen = if dir > 0.0 { early.proposal } else { late.proposal };
        tree = Subtree { minus: early.minus, plus: late.plus, proposal: chosen, rho, log_weight };
        if !ok {
            break;
        }
    }

    let n = builder.n_leapfrog.max(1);
    let stats = TransitionStats {
        accept_stat: builder.sum_accept / n as f64,
        n_leapfrog: builder.n_leapfrog,
        depth,
        divergent: builder.divergent,
        energy: -tree.proposal.logp + kinetic(&tree.proposal.p, inv_metric),
    };
    (tree.proposal, stats)
}

/// Heuristic initial step size: doubles or halves until the one-step
/// acceptance probability crosses 0.8.
pub(crate) fn find_reasonable_step<T: LogDensity + ?Sized, R: Rng>(
    target: &T,
    current: &Point,
    inv_metric: &[f64],
    initial: f64,
    rng: &mut R,
) -> f64 {
    let mut eps = initial;
    let mut start = current.clone();
    for (p, m) in start.p.iter_mut().zip(inv_metric) {
        let z: f64 = rng.sample(StandardNormal);
        *p = z / m.sqrt();
    }
    let h0 = -start.logp + kinetic(&start.p, inv_metric);
    let delta_h = |eps: f64| match leapfrog(target, &start, eps, inv_metric) {
        Some(next) => h0 - (-next.logp + kinetic(&next.p, inv_metric)),
        None => f64::NEG_INFINITY,
    };
    let threshold = 0.8f64.ln();
    let up = delta_h(eps) > threshold;
    for _ in 0..100 {
        let d = delta_h(eps);
        if up {
            if !(d > threshold) || eps > 1e7 {
                break;
            }
            eps *= 2.0;
        } else {
            if d > threshold || eps < 1e-10 {
                break;
            }
            eps *= 0.5;
        }
    }
    eps
}
