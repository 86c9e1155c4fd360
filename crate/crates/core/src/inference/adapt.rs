//! Burn-in adaptation: dual-averaging step size and windowed diagonal
//! metric estimation.

/// Dual-averaging step-size controller.
#[derive(Debug, Clone)]
pub struct DualAveraging {
    target: f64,
    mu: f64,
    gamma: f64,
    t0: f64,
    kappa: f64,
    counter: f64,
    s_bar: f64,
    x_bar: f64,
}

impl DualAveraging {
    pub fn new(target: f64, step_size: f64) -> Self {
        let mut da = Self { target, mu: 0.0, gamma: 0.05, t0: 10.0, kappa: 0.75, counter: 0.0, s_bar: 0.0, x_bar: 0.0 };
        da.restart(step_size);
        da
    }

    pub fn restart(&mut self, step_size: f64) {
        self.mu = (10.0 * step_size).ln();
        self.counter = 0.0;
        self.s_bar = 0.0;
        self.x_bar = 0.0;
    }

    /// Feeds one acceptance statistic and returns the next step size.
    pub fn update(&mut self, accept_stat: f64) -> f64 {
        let accept = if accept_stat.is_finite() { accept_stat.clamp(0.0, 1.0) } else { 0.0 };
        self.counter += 1.0;
        let eta = 1.0 / (self.counter + self.t0);
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.target - accept);
        let x = self.mu - self.s_bar * self.counter.sqrt() / self.gamma;
        let x_eta = self.counter.powf(-self.kappa);
        self.x_bar = x_eta * x + (1.0 - x_eta) * self.x_bar;
        x.exp()
    }

    /// Averaged step size used once adaptation ends.
    pub fn final_step_size(&self) -> f64 {
        self.x_bar.exp()
    }
}

/// Welford accumulator for per-coordinate variances.
#[derive(Debug, Clone)]
pub struct RunningVariance {
    n: usize,
    mean: Vec<f64>,
    m2: Vec<f64>,
}

impl RunningVariance {
    pub fn new(dim: usize) -> Self {
        Self { n: 0, mean: vec![0.0; dim], m2: vec![0.0; dim] }
    }

    pub fn push(&mut self, x: &[f64]) {
        self.n += 1;
        let n = self.n as f64;
        for ((m, s), &v) in self.mean.iter_mut().zip(self.m2.iter_mut()).zip(x) {
            let d = v - *m;
            *m += d / n;
            *s += d * (v - *m);
        }
    }

    pub fn count(&self) -> usize {
        self.n
    }

    /// Sample variances shrunk toward 1e-3, as a diagonal inverse metric.
    pub fn regularized(&self) -> Vec<f64> {
        let n = self.n as f64;
        self.m2
            .iter()
            .map(|s| {
                let var = if self.n > 1 { s / (n - 1.0) } else { 1.0 };
                (n / (n + 5.0)) * var + 1e-3 * (5.0 / (n + 5.0))
            })
            .collect()
    }

    pub fn reset(&mut self) {
        *self = Self::new(self.mean.len());
    }
}

/// Burn-in schedule: a fast initial phase, a run of doubling slow windows
/// in which the metric is estimated, and a fast terminal phase.
#[derive(Debug, Clone)]
pub struct WindowSchedule {
    n_burnin: usize,
    init_buffer: usize,
    term_buffer: usize,
    window_ends: Vec<usize>,
}

impl WindowSchedule {
    pub fn new(n_burnin: usize) -> Self {
        let (mut init_buffer, mut term_buffer, mut base) = (75, 50, 25);
        if n_burnin < init_buffer + term_buffer + base {
            init_buffer = (0.15 * n_burnin as f64) as usize;
            term_buffer = (0.1 * n_burnin as f64) as usize;
            base = n_burnin.saturating_sub(init_buffer + term_buffer);
        }
        let mut window_ends = Vec::new();
        if base > 0 {
            let last = n_burnin - term_buffer;
            let mut start = init_buffer;
            let mut size = base;
            while start < last {
                let mut end = start + size;
                // fold a short trailing window into the current one
                if end + 2 * size > last {
                    end = last;
                }
                window_ends.push(end);
                start = end;
                size *= 2;
            }
        }
        Self { n_burnin, init_buffer, term_buffer, window_ends }
    }

    /// True while iteration `i` (0-based) falls inside a slow window.
    pub fn in_slow_window(&self, i: usize) -> bool {
        !self.window_ends.is_empty() && i >= self.init_buffer && i < self.n_burnin - self.term_buffer
    }

    /// True if iteration `i` is the last of a slow window.
    pub fn ends_window(&self, i: usize) -> bool {
        self.window_ends.contains(&(i + 1))
    }

    pub fn window_ends(&self) -> &[usize] {
        &self.window_ends
    }
}
