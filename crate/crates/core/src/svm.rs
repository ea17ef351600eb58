//! Soft-margin binary SVM with RBF kernel, trained in-house by sequential
//! minimal optimization.
//!
//! The solver maximizes the dual
//! `W(a) = sum a_i - 1/2 sum a_i a_j y_i y_j K(x_i, x_j)` subject to
//! `0 <= a_i <= C` and `sum a_i y_i = 0`, picking the maximal violating
//! pair each iteration and solving the two-variable subproblem in closed
//! form. Convergence is declared when the largest KKT violation drops to
//! the tolerance. Training is fully deterministic: alphas start at zero
//! and pair selection contains no randomness.
//!
//! Features are standardized to zero mean and unit variance inside the
//! model (the RBF distance is scale sensitive, and the kernel-scale rule
//! `gamma = 1 / #features` presumes comparable feature scales).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::pipeline::{FeatureSlot, CATALOGUE_VERSION};

/// Training hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmParams {
    /// Box constraint on the dual coefficients.
    pub c: f64,
    /// KKT violation below which the solver stops.
    pub tol: f64,
    /// Iteration cap as a multiple of the sample count.
    pub max_iter_per_sample: u64,
}

impl Default for SvmParams {
    fn default() -> Self {
        SvmParams {
            c: 1.0,
            tol: 1e-3,
            max_iter_per_sample: 100_000,
        }
    }
}

impl SvmParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(Error::Config(format!("SVM C = {} must be positive", self.c)));
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::Config(format!(
                "SVM tolerance = {} must be positive",
                self.tol
            )));
        }
        if self.max_iter_per_sample == 0 {
            return Err(Error::Config("SVM iteration cap must be positive".into()));
        }
        Ok(())
    }
}

/// Provenance recorded with a trained model.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub threshold: Option<String>,
    pub source: Option<String>,
    pub fold: Option<u32>,
}

/// A trained binary classifier.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    /// Catalogue ids of the features this model consumes, in input order.
    pub feature_ids: Vec<u8>,
    /// RBF kernel scale, fixed to 1 / #features.
    pub gamma: f64,
    pub c: f64,
    /// Support vectors in standardized feature space.
    pub support_vectors: Vec<Vec<f64>>,
    /// Dual coefficients `alpha_i * y_i`, one per support vector.
    pub dual_coef: Vec<f64>,
    pub bias: f64,
    /// Per-feature standardization statistics from the training set.
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
    pub catalogue_version: String,
    pub meta: TrainMeta,
    pub iterations: u64,
    pub objective: f64,
}

fn rbf(gamma: f64, u: &[f64], v: &[f64]) -> f64 {
    let d2: f64 = u.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum();
    (-gamma * d2).exp()
}

/// Internal SMO state; exposed at crate level so tests can drive single
/// steps and watch the dual objective.
pub(crate) struct Smo {
    kernel: Vec<f64>, // n x n, row major
    y: Vec<f64>,
    alpha: Vec<f64>,
    grad: Vec<f64>, // gradient of the (minimized) negative dual
    c: f64,
    n: usize,
}

pub(crate) enum SmoStep {
    Converged,
    Updated,
    Stuck,
}

impl Smo {
    pub(crate) fn new(points: &[Vec<f64>], y: Vec<f64>, gamma: f64, c: f64) -> Self {
        let n = points.len();
        let mut kernel = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let k = rbf(gamma, &points[i], &points[j]);
                kernel[i * n + j] = k;
                kernel[j * n + i] = k;
            }
        }
        Smo {
            kernel,
            grad: vec![-1.0; n],
            alpha: vec![0.0; n],
            y,
            c,
            n,
        }
    }

    /// Dual objective W(alpha) = 1/2 sum alpha_i (1 - grad_i).
    pub(crate) fn objective(&self) -> f64 {
        0.5 * self
            .alpha
            .iter()
            .zip(&self.grad)
            .map(|(a, g)| a * (1.0 - g))
            .sum::<f64>()
    }

    fn in_up(&self, t: usize) -> bool {
        (self.y[t] > 0.0 && self.alpha[t] < self.c) || (self.y[t] < 0.0 && self.alpha[t] > 0.0)
    }

    fn in_low(&self, t: usize) -> bool {
        (self.y[t] < 0.0 && self.alpha[t] < self.c) || (self.y[t] > 0.0 && self.alpha[t] > 0.0)
    }

    /// One maximal-violating-pair update.
    pub(crate) fn step(&mut self, tol: f64) -> SmoStep {
        let mut m = f64::NEG_INFINITY;
        let mut i = usize::MAX;
        let mut big_m = f64::INFINITY;
        let mut j = usize::MAX;
        for t in 0..self.n {
            let v = -self.y[t] * self.grad[t];
            if self.in_up(t) && v > m {
                m = v;
                i = t;
            }
            if self.in_low(t) && v < big_m {
                big_m = v;
                j = t;
            }
        }
        if i == usize::MAX || j == usize::MAX {
            return SmoStep::Stuck;
        }
        let violation = m - big_m;
        if violation <= tol {
            return SmoStep::Converged;
        }

        // Ascent along alpha_i += y_i t, alpha_j -= y_j t; curvature of the
        // dual along this direction is K_ii + K_jj - 2 K_ij >= 0.
        let kii = self.kernel[i * self.n + i];
        let kjj = self.kernel[j * self.n + j];
        let kij = self.kernel[i * self.n + j];
        let eta = (kii + kjj - 2.0 * kij).max(1e-12);
        let mut t_step = violation / eta;

        // box constraints on both coordinates
        let hi_i = if self.y[i] > 0.0 {
            self.c - self.alpha[i]
        } else {
            self.alpha[i]
        };
        let hi_j = if self.y[j] > 0.0 {
            self.alpha[j]
        } else {
            self.c - self.alpha[j]
        };
        t_step = t_step.min(hi_i).min(hi_j);
        if t_step <= 0.0 {
            return SmoStep::Stuck;
        }

        self.alpha[i] += self.y[i] * t_step;
        self.alpha[j] -= self.y[j] * t_step;
        // clamp numerical dust at the box edges
        self.alpha[i] = self.alpha[i].clamp(0.0, self.c);
        self.alpha[j] = self.alpha[j].clamp(0.0, self.c);
        for t in 0..self.n {
            let kti = self.kernel[t * self.n + i];
            let ktj = self.kernel[t * self.n + j];
            self.grad[t] += t_step * self.y[t] * (kti - ktj);
        }
        SmoStep::Updated
    }

    /// Current largest KKT violation.
    fn violation(&self) -> f64 {
        let mut m = f64::NEG_INFINITY;
        let mut big_m = f64::INFINITY;
        for t in 0..self.n {
            let v = -self.y[t] * self.grad[t];
            if self.in_up(t) {
                m = m.max(v);
            }
            if self.in_low(t) {
                big_m = big_m.min(v);
            }
        }
        m - big_m
    }

    /// Bias from the free support vectors, falling back to the violation
    /// interval midpoint when every alpha sits on the box.
    fn bias(&self) -> f64 {
        let margin = 1e-8 * self.c;
        let mut sum = 0.0;
        let mut n_free = 0u32;
        for t in 0..self.n {
            if self.alpha[t] > margin && self.alpha[t] < self.c - margin {
                sum += -self.y[t] * self.grad[t];
                n_free += 1;
            }
        }
        if n_free > 0 {
            return sum / f64::from(n_free);
        }
        let mut m = f64::NEG_INFINITY;
        let mut big_m = f64::INFINITY;
        for t in 0..self.n {
            let v = -self.y[t] * self.grad[t];
            if self.in_up(t) {
                m = m.max(v);
            }
            if self.in_low(t) {
                big_m = big_m.min(v);
            }
        }
        (m + big_m) / 2.0
    }
}

/// Train a binary SVM. `rows` holds raw (unstandardized) feature values in
/// `feature_ids` order; labels are the crossed / not-crossed states.
pub fn train(
    rows: &[(Vec<f64>, bool)],
    feature_ids: &[u8],
    params: &SvmParams,
    meta: TrainMeta,
) -> Result<SvmModel> {
    params.validate()?;
    if feature_ids.is_empty() {
        return Err(Error::Config("cannot train on an empty feature set".into()));
    }
    let d = feature_ids.len();
    let n = rows.len();
    if !rows.iter().any(|r| r.1) || rows.iter().all(|r| r.1) {
        return Err(Error::SingleClass);
    }
    for (x, _) in rows {
        if x.len() != d {
            return Err(Error::FeatureMismatch {
                expected: d,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("training features must be finite".into()));
        }
    }

    // z-score standardization; constant features keep unit scale
    let mut mean = vec![0.0; d];
    for (x, _) in rows {
        for (m, v) in mean.iter_mut().zip(x) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }
    let mut std = vec![0.0; d];
    for (x, _) in rows {
        for (s, (v, m)) in std.iter_mut().zip(x.iter().zip(&mean)) {
            *s += (v - m) * (v - m);
        }
    }
    for s in &mut std {
        *s = (*s / n as f64).sqrt();
        if *s == 0.0 {
            *s = 1.0;
        }
    }

    let points: Vec<Vec<f64>> = rows
        .iter()
        .map(|(x, _)| {
            x.iter()
                .zip(mean.iter().zip(&std))
                .map(|(v, (m, s))| (v - m) / s)
                .collect()
        })
        .collect();
    let y: Vec<f64> = rows.iter().map(|(_, l)| if *l { 1.0 } else { -1.0 }).collect();

    let gamma = 1.0 / d as f64;
    let mut smo = Smo::new(&points, y.clone(), gamma, params.c);
    let cap = params.max_iter_per_sample.saturating_mul(n as u64);
    let mut iterations = 0u64;
    loop {
        match smo.step(params.tol) {
            SmoStep::Converged | SmoStep::Stuck => break,
            SmoStep::Updated => {
                iterations += 1;
                if iterations >= cap {
                    return Err(Error::NonConvergence {
                        violation: smo.violation(),
                        iterations,
                    });
                }
            }
        }
    }

    let bias = smo.bias();
    let objective = smo.objective();
    let mut support_vectors = Vec::new();
    let mut dual_coef = Vec::new();
    for t in 0..n {
        if smo.alpha[t] > 1e-12 {
            support_vectors.push(points[t].clone());
            dual_coef.push(smo.alpha[t] * y[t]);
        }
    }
    Ok(SvmModel {
        feature_ids: feature_ids.to_vec(),
        gamma,
        c: params.c,
        support_vectors,
        dual_coef,
        bias,
        feature_mean: mean,
        feature_std: std,
        catalogue_version: CATALOGUE_VERSION.to_string(),
        meta,
        iterations,
        objective,
    })
}

impl SvmModel {
    /// Decision value for a raw (unstandardized) input.
    pub fn decision(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.feature_ids.len() {
            return Err(Error::FeatureMismatch {
                expected: self.feature_ids.len(),
                got: x.len(),
            });
        }
        let z: Vec<f64> = x
            .iter()
            .zip(self.feature_mean.iter().zip(&self.feature_std))
            .map(|(v, (m, s))| (v - m) / s)
            .collect();
        let mut f = self.bias;
        for (sv, coef) in self.support_vectors.iter().zip(&self.dual_coef) {
            f += coef * rbf(self.gamma, sv, &z);
        }
        Ok(f)
    }

    /// Predicted crossing state and decision value. A decision value of
    /// exactly zero maps to the not-crossed side.
    pub fn predict(&self, x: &[f64]) -> Result<(bool, f64)> {
        let f = self.decision(x)?;
        Ok((f > 0.0, f))
    }

    /// Pull this model's features out of a full 28-entry vector; None when
    /// any selected feature is missing.
    pub fn project(&self, slot: &FeatureSlot) -> Option<Vec<f64>> {
        self.feature_ids
            .iter()
            .map(|&id| slot[usize::from(id) - 1])
            .collect()
    }

    pub fn check_catalogue(&self) -> Result<()> {
        if self.catalogue_version == CATALOGUE_VERSION {
            Ok(())
        } else {
            Err(Error::CatalogueMismatch {
                model: self.catalogue_version.clone(),
                pipeline: CATALOGUE_VERSION.to_string(),
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta() -> TrainMeta {
        TrainMeta::default()
    }

    /// Closed-form solution of the two-point problem: with one sample per
    /// class, alpha_1 = alpha_2 = min(C, 2 / (K11 + K22 - 2 K12)).
    #[test]
    fn two_point_problem_matches_the_analytic_solution() {
        let rows = vec![(vec![1.0, 0.0], true), (vec![-1.0, 0.0], false)];
        let params = SvmParams::default();
        let model = train(&rows, &[1, 2], &params, meta()).unwrap();

        // standardized coordinates: +/-1 on the first axis, gamma = 1/2
        let gamma = 0.5;
        let k11 = 1.0;
        let k12 = rbf(gamma, &[1.0, 0.0], &[-1.0, 0.0]);
        let alpha_star = (2.0 / (2.0 * k11 - 2.0 * k12)).min(params.c);
        let objective_star = 2.0 * alpha_star - alpha_star * alpha_star * (k11 - k12);
        assert!(
            (model.objective - objective_star).abs() < 1e-6,
            "objective {} vs analytic {}",
            model.objective,
            objective_star
        );
        // symmetric problem: bias is zero, both points classified right
        assert!(model.bias.abs() < 1e-6);
        assert!(model.predict(&[1.0, 0.0]).unwrap().0);
        assert!(!model.predict(&[-1.0, 0.0]).unwrap().0);
    }

    #[test]
    fn rbf_kernel_separates_the_xor_pattern() {
        let rows = vec![
            (vec![0.0, 0.0], false),
            (vec![1.0, 1.0], false),
            (vec![0.0, 1.0], true),
            (vec![1.0, 0.0], true),
        ];
        let params = SvmParams {
            c: 10.0,
            ..SvmParams::default()
        };
        let model = train(&rows, &[1, 2], &params, meta()).unwrap();
        for (x, label) in &rows {
            assert_eq!(model.predict(x).unwrap().0, *label);
        }
    }

    #[test]
    fn duplicated_dataset_preserves_the_decision_sign_pattern() {
        let rows = vec![
            (vec![0.1, 1.2], true),
            (vec![0.4, 0.9], true),
            (vec![-0.3, -1.0], false),
            (vec![-0.8, -0.2], false),
            (vec![0.9, -0.1], true),
        ];
        let doubled: Vec<(Vec<f64>, bool)> =
            rows.iter().cloned().chain(rows.iter().cloned()).collect();
        let m1 = train(&rows, &[1, 2], &SvmParams::default(), meta()).unwrap();
        let m2 = train(&doubled, &[1, 2], &SvmParams::default(), meta()).unwrap();
        for gx in -5..=5 {
            for gy in -5..=5 {
                let p = vec![f64::from(gx) / 2.5, f64::from(gy) / 2.5];
                assert_eq!(m1.predict(&p).unwrap().0, m2.predict(&p).unwrap().0);
            }
        }
    }

    #[test]
    fn kkt_conditions_hold_at_convergence() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let rows: Vec<(Vec<f64>, bool)> = (0..60)
            .map(|i| {
                let label = i % 2 == 0;
                let c = if label { 0.9 } else { -0.9 };
                (
                    vec![
                        c + rng.random::<f64>() - 0.5,
                        -c + rng.random::<f64>() - 0.5,
                        rng.random::<f64>(),
                    ],
                    label,
                )
            })
            .collect();
        let params = SvmParams::default();
        let model = train(&rows, &[1, 2, 3], &params, meta()).unwrap();
        // the equality constraint holds: sum of alpha_i y_i within 1e-8
        let balance: f64 = model.dual_coef.iter().sum();
        assert!(balance.abs() <= 1e-8, "dual coefficients sum to {balance}");
        let tol = params.tol + 1e-6;
        // recover alphas: |dual_coef| of support vectors; non-SVs have 0
        for (x, label) in &rows {
            let f = model.decision(x).unwrap();
            let y = if *label { 1.0 } else { -1.0 };
            let yf = y * f;
            // find whether x is a support vector and with which alpha
            let z: Vec<f64> = x
                .iter()
                .zip(model.feature_mean.iter().zip(&model.feature_std))
                .map(|(v, (m, s))| (v - m) / s)
                .collect();
            let alpha = model
                .support_vectors
                .iter()
                .zip(&model.dual_coef)
                .find(|(sv, _)| {
                    sv.iter().zip(&z).all(|(a, b)| (a - b).abs() < 1e-12)
                })
                .map_or(0.0, |(_, coef)| coef.abs());
            if alpha < 1e-9 {
                assert!(yf >= 1.0 - tol, "free point with margin {yf}");
            } else if alpha < params.c - 1e-9 {
                assert!((yf - 1.0).abs() <= tol, "on-margin point with margin {yf}");
            } else {
                assert!(yf <= 1.0 + tol, "bound point with margin {yf}");
            }
        }
    }

    #[test]
    fn dual_objective_never_decreases_across_iterations() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let n = 40;
        let points: Vec<Vec<f64>> = (0..n)
            .map(|_| vec![rng.random::<f64>() * 4.0 - 2.0, rng.random::<f64>() * 4.0 - 2.0])
            .collect();
        let y: Vec<f64> = points
            .iter()
            .map(|p| if p[0] + p[1] > 0.0 { 1.0 } else { -1.0 })
            .collect();
        let mut smo = Smo::new(&points, y, 0.5, 1.0);
        let mut last = smo.objective();
        for _ in 0..10_000 {
            match smo.step(1e-3) {
                SmoStep::Updated => {
                    let now = smo.objective();
                    assert!(now >= last - 1e-12, "objective fell from {last} to {now}");
                    last = now;
                }
                _ => break,
            }
        }
    }

    #[test]
    fn prediction_is_invariant_to_uniform_positive_scaling() {
        let rows = vec![
            (vec![1.0, 0.3], true),
            (vec![0.8, -0.4], true),
            (vec![-1.1, 0.2], false),
            (vec![-0.7, -0.6], false),
        ];
        let model = train(&rows, &[1, 2], &SvmParams::default(), meta()).unwrap();
        let mut scaled = model.clone();
        for c in &mut scaled.dual_coef {
            *c *= 3.5;
        }
        scaled.bias *= 3.5;
        for gx in -4..=4 {
            for gy in -4..=4 {
                let p = vec![f64::from(gx) / 2.0, f64::from(gy) / 2.0];
                assert_eq!(model.predict(&p).unwrap().0, scaled.predict(&p).unwrap().0);
            }
        }
    }

    #[test]
    fn standardization_is_internal_to_the_model() {
        // training data on a wildly shifted scale classifies consistently
        // when the same raw points are presented again
        let rows: Vec<(Vec<f64>, bool)> = (0..30)
            .map(|i| {
                let label = i < 15;
                let base = if label { 5_000.0 } else { 5_010.0 };
                (vec![base + f64::from(i % 15), 0.001 * f64::from(i)], label)
            })
            .collect();
        let model = train(&rows, &[1, 2], &SvmParams::default(), meta()).unwrap();
        let correct = rows
            .iter()
            .filter(|(x, l)| model.predict(x).unwrap().0 == *l)
            .count();
        assert!(correct >= 28, "{correct}/30 training points recovered");
    }

    #[test]
    fn single_class_and_shape_errors() {
        let rows = vec![(vec![1.0], true), (vec![2.0], true)];
        assert!(matches!(
            train(&rows, &[1], &SvmParams::default(), meta()),
            Err(Error::SingleClass)
        ));
        let rows = vec![(vec![1.0], true), (vec![2.0, 3.0], false)];
        assert!(matches!(
            train(&rows, &[1], &SvmParams::default(), meta()),
            Err(Error::FeatureMismatch { .. })
        ));
        let model = train(
            &[(vec![1.0, 2.0], true), (vec![-1.0, 0.0], false)],
            &[1, 2],
            &SvmParams::default(),
            meta(),
        )
        .unwrap();
        assert!(matches!(
            model.predict(&[1.0]),
            Err(Error::FeatureMismatch { .. })
        ));
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let rows: Vec<(Vec<f64>, bool)> = (0..40)
            .map(|_| (vec![rng.random::<f64>(), rng.random::<f64>()], rng.random()))
            .collect();
        let params = SvmParams {
            max_iter_per_sample: 1,
            tol: 1e-9,
            ..SvmParams::default()
        };
        match train(&rows, &[1, 2], &params, meta()) {
            Err(Error::NonConvergence { violation, .. }) => assert!(violation > 0.0),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn gamma_follows_the_inverse_feature_count_rule() {
        let rows = vec![
            (vec![1.0, 2.0, 3.0, 4.0, 5.0], true),
            (vec![-1.0, -2.0, -3.0, -4.0, -5.0], false),
        ];
        let model = train(&rows, &[1, 2, 3, 4, 5], &SvmParams::default(), meta()).unwrap();
        assert_eq!(model.gamma, 0.2);
    }

    #[test]
    fn model_serialization_round_trips_predictions() {
        let rows = vec![
            (vec![0.2, 1.0], true),
            (vec![0.3, 0.8], true),
            (vec![-0.2, -1.0], false),
            (vec![-0.4, -0.9], false),
        ];
        let model = train(&rows, &[3, 7], &SvmParams::default(), meta()).unwrap();
        let json = serde_json::to_string(&model).unwrap();
        let back: SvmModel = serde_json::from_str(&json).unwrap();
        assert_eq!(model, back);
        for (x, _) in &rows {
            let a = model.decision(x).unwrap();
            let b = back.decision(x).unwrap();
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }

    #[test]
    fn zero_decision_maps_to_the_not_crossed_side() {
        let model = SvmModel {
            feature_ids: vec![1],
            gamma: 1.0,
            c: 1.0,
            support_vectors: vec![],
            dual_coef: vec![],
            bias: 0.0,
            feature_mean: vec![0.0],
            feature_std: vec![1.0],
            catalogue_version: CATALOGUE_VERSION.to_string(),
            meta: TrainMeta::default(),
            iterations: 0,
            objective: 0.0,
        };
        let (label, f) = model.predict(&[0.5]).unwrap();
        assert_eq!(f, 0.0);
        assert!(!label);
    }

    #[test]
    fn project_requires_every_selected_feature() {
        let model = train(
            &[(vec![1.0, 2.0], true), (vec![-1.0, -2.0], false)],
            &[4, 9],
            &SvmParams::default(),
            meta(),
        )
        .unwrap();
        let mut slot: FeatureSlot = [None; 28];
        slot[3] = Some(1.0);
        slot[8] = Some(2.0);
        assert_eq!(model.project(&slot), Some(vec![1.0, 2.0]));
        slot[8] = None;
        assert_eq!(model.project(&slot), None);
    }
}
