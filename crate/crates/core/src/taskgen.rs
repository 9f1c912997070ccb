//! Synthetic continual-learning task streams.
//!
//! Every task `t` is a noisy linear model `y_t = A_t w_t* + z_t`. The true
//! parameters share their first `p_shared` coordinates across tasks, which is
//! the knob controlling task similarity.

use crate::error::{Error, Result};
use crate::matrix::{self, Matrix, Vector};
use crate::rng::RngStream;

/// How the regressor matrices are drawn.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum RegressorModel {
    /// Independent standard-Gaussian entries.
    IidGaussian,
    /// Rows with symmetric Toeplitz covariance `eps^|i-j|`.
    Toeplitz { eps: f64 },
}

/// How the true parameter vectors are drawn.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ParamModel {
    /// Gaussian draws rescaled so the shared head has squared norm
    /// `p_shared/p` and each tail `(p - p_shared)/p`, hence `|w_t*|^2 = 1`.
    Normalized,
    /// Every entry i.i.d. `N(0, energy/p)`, no rescaling, so
    /// `E|w_t*|^2 = energy`.
    RandomEnergy { energy: f64 },
}

/// Full description of a synthetic task stream.
#[derive(Clone, Debug)]
pub struct TaskSequenceSpec {
    pub p: usize,
    pub p_shared: usize,
    pub tasks: usize,
    /// Per-task sample counts `n_t`.
    pub samples: Vec<usize>,
    /// Per-task noise variances `sigma_t^2`.
    pub noise_vars: Vec<f64>,
    pub regressors: RegressorModel,
    pub params: ParamModel,
    pub seed: u64,
}

impl TaskSequenceSpec {
    pub fn new(
        p: usize,
        p_shared: usize,
        samples: Vec<usize>,
        noise_vars: Vec<f64>,
        regressors: RegressorModel,
        params: ParamModel,
        seed: u64,
    ) -> Result<Self> {
        let tasks = samples.len();
        if p == 0 {
            return Err(Error::InvalidParameter("p must be at least 1".into()));
        }
        if p_shared > p {
            return Err(Error::InvalidParameter(format!(
                "p_shared = {p_shared} exceeds p = {p}"
            )));
        }
        if tasks == 0 {
            return Err(Error::InvalidParameter("at least one task required".into()));
        }
        if noise_vars.len() != tasks {
            return Err(Error::InvalidParameter(format!(
                "got {} noise variances for {} tasks",
                noise_vars.len(),
                tasks
            )));
        }
        if samples.iter().any(|&n| n == 0) {
            return Err(Error::InvalidParameter("every n_t must be at least 1".into()));
        }
        if noise_vars.iter().any(|&s| s < 0.0 || !s.is_finite()) {
            return Err(Error::InvalidParameter("noise variances must be finite and nonnegative".into()));
        }
        if let RegressorModel::Toeplitz { eps } = regressors {
            if !(0.0..1.0).contains(&eps) {
                return Err(Error::InvalidParameter(format!(
                    "toeplitz correlation must satisfy 0 <= eps < 1, got {eps}"
                )));
            }
        }
        Ok(Self { p, p_shared, tasks, samples, noise_vars, regressors, params, seed })
    }

    /// Same sample count and noise variance for every task.
    pub fn uniform(
        p: usize,
        p_shared: usize,
        tasks: usize,
        n: usize,
        sigma2: f64,
        regressors: RegressorModel,
        params: ParamModel,
        seed: u64,
    ) -> Result<Self> {
        Self::new(p, p_shared, vec![n; tasks], vec![sigma2; tasks], regressors, params, seed)
    }
}

/// One realized task: regressors, observations and the underlying truth.
#[derive(Clone, Debug)]
pub struct TaskData {
    /// 1-based position in the stream.
    pub index: usize,
    /// `n_t x p` regressor matrix.
    pub regressors: Matrix,
    /// `n_t x 1` observation vector.
    pub outputs: Vector,
    pub w_true: Vector,
    pub noise_var: f64,
}

/// Draw the true parameter vectors `w_1*, ..., w_T*` with a shared head.
pub fn generate_parameters(spec: &TaskSequenceSpec, rng: &mut RngStream) -> Vec<Vector> {
    let tail = spec.p - spec.p_shared;
    let head = match spec.params {
        ParamModel::Normalized => {
            rescaled_gaussian(spec.p_shared, spec.p_shared as f64 / spec.p as f64, rng)
        }
        ParamModel::RandomEnergy { energy } => {
            scaled_gaussian(spec.p_shared, (energy / spec.p as f64).sqrt(), rng)
        }
    };
    (0..spec.tasks)
        .map(|_| {
            let tail_part = match spec.params {
                ParamModel::Normalized => {
                    rescaled_gaussian(tail, tail as f64 / spec.p as f64, rng)
                }
                ParamModel::RandomEnergy { energy } => {
                    scaled_gaussian(tail, (energy / spec.p as f64).sqrt(), rng)
                }
            };
            let mut w = Vector::zeros(spec.p);
            w.rows_mut(0, spec.p_shared).copy_from(&head);
            w.rows_mut(spec.p_shared, tail).copy_from(&tail_part);
            w
        })
        .collect()
}

fn scaled_gaussian(len: usize, scale: f64, rng: &mut RngStream) -> Vector {
    Vector::from_fn(len, |_, _| scale * rng.normal())
}

/// Gaussian draw rescaled to squared norm exactly `target`.
fn rescaled_gaussian(len: usize, target: f64, rng: &mut RngStream) -> Vector {
    let mut v = Vector::from_fn(len, |_, _| rng.normal());
    if len == 0 {
        return v;
    }
    let norm = v.norm();
    if norm > 0.0 {
        v.scale_mut(target.sqrt() / norm);
    }
    v
}

/// Realize the task stream for one set of training data.
pub fn generate_task_data(
    spec: &TaskSequenceSpec,
    w_true: &[Vector],
    rng: &mut RngStream,
) -> Result<Vec<TaskData>> {
    if w_true.len() != spec.tasks {
        return Err(Error::DimensionMismatch(format!(
            "{} parameter vectors for {} tasks",
            w_true.len(),
            spec.tasks
        )));
    }
    let mut out = Vec::with_capacity(spec.tasks);
    for t in 0..spec.tasks {
        let n = spec.samples[t];
        let a = match spec.regressors {
            RegressorModel::IidGaussian => matrix::sample_gaussian(n, spec.p, rng),
            RegressorModel::Toeplitz { eps } => matrix::sample_toeplitz_rows(n, spec.p, eps, rng)?,
        };
        let sigma2 = spec.noise_vars[t];
        let mut y = &a * &w_true[t];
        if sigma2 > 0.0 {
            let sigma = sigma2.sqrt();
            for v in y.iter_mut() {
                *v += sigma * rng.normal();
            }
        }
        out.push(TaskData {
            index: t + 1,
            regressors: a,
            outputs: y,
            w_true: w_true[t].clone(),
            noise_var: sigma2,
        });
    }
    Ok(out)
}

/// A fresh unseen sample for a task: isotropic Gaussian regressor and noisy
/// response.
pub fn sample_test_point(w_true: &Vector, noise_var: f64, rng: &mut RngStream) -> (Vector, f64) {
    let a = Vector::from_fn(w_true.len(), |_, _| rng.normal());
    let mut y = a.dot(w_true);
    if noise_var > 0.0 {
        y += noise_var.sqrt() * rng.normal();
    }
    (a, y)
}

/// Cosine random-feature map: `a_l = cos(zeta_l^T x)` where the columns of
/// `bank` are the `zeta_l`.
pub fn random_features(x: &Vector, bank: &Matrix) -> Result<Vector> {
    if x.len() != bank.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "input has {} entries but feature bank expects {}",
            x.len(),
            bank.nrows()
        )));
    }
    let mut projected = bank.transpose() * x;
    projected.apply(|v| *v = v.cos());
    Ok(projected)
}

/// Batched [`random_features`]: one input per row of `xs`, one feature row out.
pub fn random_features_batch(xs: &Matrix, bank: &Matrix) -> Result<Matrix> {
    if xs.ncols() != bank.nrows() {
        return Err(Error::DimensionMismatch(format!(
            "inputs have {} columns but feature bank expects {}",
            xs.ncols(),
            bank.nrows()
        )));
    }
    let mut features = xs * bank;
    features.apply(|v| *v = v.cos());
    Ok(features)
}

/// Feature bank with columns i.i.d. `N(0, variance * I_d)`, sampled once per
/// experiment.
pub fn sample_feature_bank(d: usize, p: usize, variance: f64, rng: &mut RngStream) -> Matrix {
    let scale = variance.sqrt();
    Matrix::from_fn(d, p, |_, _| scale * rng.normal())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn normalized_spec(p: usize, p_shared: usize, tasks: usize, seed: u64) -> TaskSequenceSpec {
        TaskSequenceSpec::uniform(
            p,
            p_shared,
            tasks,
            4,
            0.0,
            RegressorModel::IidGaussian,
            ParamModel::Normalized,
            seed,
        )
        .unwrap()
    }

    #[test]
    fn spec_validation() {
        assert!(TaskSequenceSpec::uniform(
            4, 5, 2, 3, 0.1, RegressorModel::IidGaussian, ParamModel::Normalized, 0
        )
        .is_err());
        assert!(TaskSequenceSpec::new(
            4,
            2,
            vec![3, 3],
            vec![0.1],
            RegressorModel::IidGaussian,
            ParamModel::Normalized,
            0
        )
        .is_err());
        assert!(TaskSequenceSpec::uniform(
            4, 2, 2, 3, 0.1, RegressorModel::Toeplitz { eps: 1.0 }, ParamModel::Normalized, 0
        )
        .is_err());
    }

    #[test]
    fn shared_head_is_identical_and_norms_exact() {
        let spec = normalized_spec(10, 4, 5, 3);
        let w = generate_parameters(&spec, &mut RngStream::new(3, 0));
        for t in 1..5 {
            for i in 0..4 {
                assert_eq!(w[t][i], w[0][i]);
            }
        }
        for wt in &w {
            assert!((wt.norm_squared() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn full_similarity_means_identical_parameters() {
        let spec = normalized_spec(6, 6, 4, 11);
        let w = generate_parameters(&spec, &mut RngStream::new(11, 0));
        for t in 1..4 {
            assert_eq!(w[t], w[0]);
        }
        assert!((w[0].norm_squared() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_similarity_means_independent_tails() {
        let spec = normalized_spec(6, 0, 3, 5);
        let w = generate_parameters(&spec, &mut RngStream::new(5, 0));
        assert!((&w[0] - &w[1]).norm() > 1e-3);
        for wt in &w {
            assert!((wt.norm_squared() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn random_energy_mean_squared_norm() {
        // E|w|^2 = E_w: chi-square sum expectation, checked over 10^4 draws.
        let energy = 2.5;
        let spec = TaskSequenceSpec::uniform(
            8,
            3,
            1,
            2,
            0.0,
            RegressorModel::IidGaussian,
            ParamModel::RandomEnergy { energy },
            0,
        )
        .unwrap();
        let mut rng = RngStream::new(21, 0);
        let draws = 10_000;
        let mean: f64 = (0..draws)
            .map(|_| generate_parameters(&spec, &mut rng)[0].norm_squared())
            .sum::<f64>()
            / draws as f64;
        assert!((mean - energy).abs() < 0.02 * energy, "mean {mean} vs {energy}");
    }

    #[test]
    fn task_model_cross_terms_vanish_in_expectation() {
        // Tails of distinct tasks are independent and zero-mean, so the
        // expected tail inner product is zero; check within 3 standard errors.
        let spec = TaskSequenceSpec::uniform(
            12,
            4,
            2,
            2,
            0.0,
            RegressorModel::IidGaussian,
            ParamModel::RandomEnergy { energy: 1.0 },
            0,
        )
        .unwrap();
        let mut rng = RngStream::new(33, 0);
        let draws = 20_000;
        let vals: Vec<f64> = (0..draws)
            .map(|_| {
                let w = generate_parameters(&spec, &mut rng);
                let tail0 = w[0].rows(4, 8).into_owned();
                let tail1 = w[1].rows(4, 8).into_owned();
                tail0.dot(&tail1)
            })
            .collect();
        let mean = vals.iter().sum::<f64>() / draws as f64;
        let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (draws - 1) as f64;
        let stderr = (var / draws as f64).sqrt();
        assert!(mean.abs() <= 3.0 * stderr, "mean {mean}, stderr {stderr}");
    }

    #[test]
    fn noiseless_outputs_are_exact() {
        let spec = TaskSequenceSpec::uniform(
            5,
            2,
            3,
            7,
            0.0,
            RegressorModel::IidGaussian,
            ParamModel::Normalized,
            2,
        )
        .unwrap();
        let mut rng = RngStream::new(2, 0);
        let w = generate_parameters(&spec, &mut rng);
        let data = generate_task_data(&spec, &w, &mut rng).unwrap();
        for d in &data {
            assert_eq!(d.outputs, &d.regressors * &d.w_true);
        }
    }

    #[test]
    fn stream_is_deterministic() {
        let spec = TaskSequenceSpec::uniform(
            6,
            3,
            2,
            4,
            0.3,
            RegressorModel::IidGaussian,
            ParamModel::Normalized,
            9,
        )
        .unwrap();
        let make = || {
            let mut rng = RngStream::new(spec.seed, 0);
            let w = generate_parameters(&spec, &mut rng);
            generate_task_data(&spec, &w, &mut rng).unwrap()
        };
        let a = make();
        let b = make();
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.regressors, y.regressors);
            assert_eq!(x.outputs, y.outputs);
        }
    }

    #[test]
    fn noise_variance_matches_empirically() {
        // Sample-variance oracle on the residual y - A w* over 10^5 samples.
        let sigma2 = 0.7;
        let spec = TaskSequenceSpec::uniform(
            3,
            1,
            1,
            100_000,
            sigma2,
            RegressorModel::IidGaussian,
            ParamModel::Normalized,
            4,
        )
        .unwrap();
        let mut rng = RngStream::new(4, 0);
        let w = generate_parameters(&spec, &mut rng);
        let data = generate_task_data(&spec, &w, &mut rng).unwrap();
        let resid = &data[0].outputs - &data[0].regressors * &data[0].w_true;
        let n = resid.len() as f64;
        let var = resid.norm_squared() / n;
        assert!((var - sigma2).abs() < 0.03 * sigma2, "var {var}");
    }

    #[test]
    fn test_point_noiseless_and_variance() {
        let w = Vector::from_vec(vec![1.0, -2.0, 0.5]);
        let (a, y) = sample_test_point(&w, 0.0, &mut RngStream::new(8, 0));
        assert_eq!(y, a.dot(&w));

        let (a1, _) = sample_test_point(&w, 0.0, &mut RngStream::new(8, 0));
        assert_eq!(a, a1);

        let sigma2 = 0.25;
        let mut rng = RngStream::new(9, 0);
        let draws = 100_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..draws {
            let (a, y) = sample_test_point(&w, sigma2, &mut rng);
            let z = y - a.dot(&w);
            sum += z;
            sumsq += z * z;
        }
        let mean = sum / draws as f64;
        let var = sumsq / draws as f64 - mean * mean;
        assert!((var - sigma2).abs() < 0.03 * sigma2, "var {var}");
    }

    #[test]
    fn random_features_basics() {
        let bank = sample_feature_bank(4, 6, 0.04, &mut RngStream::new(5, 0));
        // x = 0 maps to the all-ones vector.
        let zero = Vector::zeros(4);
        let f = random_features(&zero, &bank).unwrap();
        assert_eq!(f, Vector::from_element(6, 1.0));
        // Entries bounded in [-1, 1] and deterministic.
        let x = Vector::from_vec(vec![0.3, 0.9, 0.1, 0.5]);
        let f1 = random_features(&x, &bank).unwrap();
        let f2 = random_features(&x, &bank).unwrap();
        assert_eq!(f1, f2);
        assert!(f1.iter().all(|v| (-1.0..=1.0).contains(v)));
        // Dimension mismatch is an error.
        let bad = Vector::zeros(3);
        assert!(random_features(&bad, &bank).is_err());
    }

    #[test]
    fn random_features_batch_matches_single() {
        let mut rng = RngStream::new(6, 0);
        let bank = sample_feature_bank(5, 7, 0.04, &mut rng);
        let xs = matrix::sample_gaussian(3, 5, &mut rng);
        let batch = random_features_batch(&xs, &bank).unwrap();
        for i in 0..3 {
            let single = random_features(&xs.row(i).transpose(), &bank).unwrap();
            for j in 0..7 {
                assert_abs_diff_eq!(batch[(i, j)], single[j], epsilon = 1e-15);
            }
        }
    }
}
