#![allow(dead_code)] // shared between test binaries that each use a subset

//! Shared fixtures for the integration suites: the calibrated evaluation
//! runs and the independent solver oracles.

use std::sync::OnceLock;

use ripetrack::commands::{evaluate_in_memory, simulate_in_memory, EvaluationBundle};
use ripetrack::config::ExperimentConfig;
use ripetrack::evaluation::GroundTruth;
use ripetrack::interrogation::ScanSelection;

pub struct EvalRun {
    pub seed: u64,
    pub truth: GroundTruth,
    pub bundle: EvaluationBundle,
    /// Successful reads with an RSSI inside [-75, -50] dBm / all reads
    /// carrying an RSSI, over the run's scan log.
    pub rssi_in_range: u64,
    pub rssi_total: u64,
}

/// The calibrated 32-fruit campaign of one seed.
pub fn training_config(seed: u64) -> ExperimentConfig {
    let mut config = ExperimentConfig {
        seed,
        ..ExperimentConfig::default()
    };
    config.cohort.fruits = 32;
    config.scan.selection = ScanSelection::Loaded;
    config
}

/// Three seeded end-to-end runs, shared across the acceptance tests.
pub fn eval_runs() -> &'static Vec<EvalRun> {
    static RUNS: OnceLock<Vec<EvalRun>> = OnceLock::new();
    RUNS.get_or_init(|| {
        [1u64, 2, 3]
            .iter()
            .map(|&seed| {
                let config = training_config(seed);
                let (logs, truth) = simulate_in_memory(&config).expect("simulation runs");
                let mut rssi_in_range = 0;
                let mut rssi_total = 0;
                for log in &logs {
                    for s in &log.samples {
                        if let Some(rssi) = s.rssi_dbm {
                            rssi_total += 1;
                            if (-75.0..=-50.0).contains(&rssi) {
                                rssi_in_range += 1;
                            }
                        }
                    }
                }
                let bundle = evaluate_in_memory(&config, &logs, &truth).expect("evaluation runs");
                EvalRun {
                    seed,
                    truth,
                    bundle,
                    rssi_in_range,
                    rssi_total,
                }
            })
            .collect()
    })
}

/// Dense quadratic-program oracle for small SVM instances: projected
/// gradient ascent on the dual with exact projection onto the feasible
/// set (box intersected with the equality hyperplane). Independent of the
/// SMO path.
pub struct QpOracle {
    pub alpha: Vec<f64>,
    pub objective: f64,
    pub bias: f64,
    points: Vec<Vec<f64>>,
    y: Vec<f64>,
    gamma: f64,
}

fn rbf(gamma: f64, u: &[f64], v: &[f64]) -> f64 {
    let d2: f64 = u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
    (-gamma * d2).exp()
}

/// Projection of `v` onto { 0 <= a <= c, y.a = 0 } by bisection over the
/// hyperplane multiplier.
fn project(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let g = |nu: f64| -> f64 {
        v.iter()
            .zip(y)
            .map(|(&vi, &yi)| yi * (vi - nu * yi).clamp(0.0, c))
            .sum()
    };
    let mut lo = -1e6;
    let mut hi = 1e6;
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let nu = 0.5 * (lo + hi);
    v.iter()
        .zip(y)
        .map(|(&vi, &yi)| (vi - nu * yi).clamp(0.0, c))
        .collect()
}

impl QpOracle {
    pub fn solve(points: &[Vec<f64>], y: &[f64], gamma: f64, c: f64) -> QpOracle {
        let n = points.len();
        let mut q = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                q[i * n + j] = y[i] * y[j] * rbf(gamma, &points[i], &points[j]);
            }
        }
        // Lipschitz bound of the gradient: max row sum of |Q|
        let lipschitz = (0..n)
            .map(|i| (0..n).map(|j| q[i * n + j].abs()).sum::<f64>())
            .fold(1.0f64, f64::max);
        let rate = 1.0 / lipschitz;
        let mut alpha = vec![0.0; n];
        for _ in 0..60_000 {
            // gradient of W(a) = sum a - 1/2 aT Q a
            let mut grad = vec![1.0; n];
            for i in 0..n {
                for j in 0..n {
                    grad[i] -= q[i * n + j] * alpha[j];
                }
            }
            let proposal: Vec<f64> = alpha
                .iter()
                .zip(&grad)
                .map(|(a, g)| a + rate * g)
                .collect();
            let next = project(&proposal, y, c);
            let delta: f64 = next
                .iter()
                .zip(&alpha)
                .map(|(a, b)| (a - b).abs())
                .sum();
            alpha = next;
            if delta < 1e-12 {
                break;
            }
        }
        let mut objective = alpha.iter().sum::<f64>();
        for i in 0..n {
            for j in 0..n {
                objective -= 0.5 * alpha[i] * q[i * n + j] * alpha[j];
            }
        }
        // bias from the free support vectors
        let f0 = |x: &[f64]| -> f64 {
            alpha
                .iter()
                .zip(y.iter().zip(points))
                .map(|(&a, (&yi, xi))| a * yi * rbf(gamma, xi, x))
                .sum()
        };
        let mut bias_sum = 0.0;
        let mut free = 0u32;
        for i in 0..n {
            if alpha[i] > 1e-6 * c && alpha[i] < c * (1.0 - 1e-6) {
                bias_sum += y[i] - f0(&points[i]);
                free += 1;
            }
        }
        let bias = if free > 0 {
            bias_sum / f64::from(free)
        } else {
            // midpoint of the feasible bias interval
            let mut lo = f64::NEG_INFINITY;
            let mut hi = f64::INFINITY;
            for i in 0..n {
                let margin = y[i] - f0(&points[i]);
                let up = (y[i] > 0.0 && alpha[i] < c) || (y[i] < 0.0 && alpha[i] > 0.0);
                let low = (y[i] < 0.0 && alpha[i] < c) || (y[i] > 0.0 && alpha[i] > 0.0);
                if up {
                    lo = lo.max(margin);
                }
                if low {
                    hi = hi.min(margin);
                }
            }
            0.5 * (lo + hi)
        };
        QpOracle {
            alpha,
            objective,
            bias,
            points: points.to_vec(),
            y: y.to_vec(),
            gamma,
        }
    }

    pub fn decision(&self, x: &[f64]) -> f64 {
        self.bias
            + self
                .alpha
                .iter()
                .zip(self.y.iter().zip(&self.points))
                .map(|(&a, (&yi, xi))| a * yi * rbf(self.gamma, xi, x))
                .sum::<f64>()
    }
}

/// O(n^2) pair-counting AUC, the independent oracle.
pub fn auc_bruteforce(scores: &[(f64, bool)]) -> f64 {
    let pos: Vec<f64> = scores.iter().filter(|s| s.1).map(|s| s.0).collect();
    let neg: Vec<f64> = scores.iter().filter(|s| !s.1).map(|s| s.0).collect();
    let mut num = 0.0;
    for &p in &pos {
        for &n in &neg {
            if p > n {
                num += 1.0;
            } else if p == n {
                num += 0.5;
            }
        }
    }
    num / (pos.len() as f64 * neg.len() as f64)
}
