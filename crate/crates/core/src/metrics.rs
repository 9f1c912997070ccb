//! Empirical performance metrics and the Monte-Carlo harness that checks the
//! closed forms against actual solver runs.

use rayon::prelude::*;

use crate::cocoa::{CocoaState, Partition};
use crate::error::{Error, Result};
use crate::matrix::Vector;
use crate::rng::RngStream;
use crate::taskgen::{self, TaskData, TaskSequenceSpec};

/// Training mean-squared error `|A w - y|^2 / (2 n)`, with the conventional
/// one-half factor.
pub fn training_error(w_hat: &Vector, data: &TaskData) -> Result<f64> {
    if w_hat.len() != data.regressors.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "estimate has {} entries but task {} has {} columns",
            w_hat.len(),
            data.index,
            data.regressors.ncols()
        )));
    }
    let resid = &data.regressors * w_hat - &data.outputs;
    Ok(resid.norm_squared() / (2.0 * data.outputs.len() as f64))
}

/// Forgetting in the training-error sense: the average training error of one
/// estimate over all the listed (previously seen) tasks.
pub fn forgetting(w_hat: &Vector, seen: &[TaskData]) -> Result<f64> {
    if seen.is_empty() {
        return Err(Error::EmptyInput("forgetting over an empty task list".into()));
    }
    let mut total = 0.0;
    for data in seen {
        total += training_error(w_hat, data)?;
    }
    Ok(total / seen.len() as f64)
}

/// Generalization error of an estimate over the whole task collection,
/// evaluated in closed form over the true parameters:
/// `(1/T) sum_t |w - w_t*|^2 + sigma_t^2`. No test sampling involved.
pub fn generalization_exact(
    w_hat: &Vector,
    w_true: &[Vector],
    noise_vars: &[f64],
) -> Result<f64> {
    if w_true.is_empty() {
        return Err(Error::EmptyInput("generalization over an empty task list".into()));
    }
    if w_true.len() != noise_vars.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} parameter vectors but {} noise variances",
            w_true.len(),
            noise_vars.len()
        )));
    }
    let mut total = 0.0;
    for (w_t, sigma2) in w_true.iter().zip(noise_vars) {
        if w_t.len() != w_hat.len() {
            return Err(Error::DimensionMismatch(
                "estimate and true parameter dimensions differ".into(),
            ));
        }
        total += (w_hat - w_t).norm_squared() + sigma2;
    }
    Ok(total / w_true.len() as f64)
}

/// Sampling-based estimate of the single-task generalization error, used only
/// to validate [`generalization_exact`]: averages squared prediction errors
/// over fresh test points.
pub fn generalization_sampled(
    w_hat: &Vector,
    w_true: &Vector,
    noise_var: f64,
    draws: usize,
    rng: &mut RngStream,
) -> f64 {
    let mut total = 0.0;
    for _ in 0..draws {
        let (a, y) = taskgen::sample_test_point(w_true, noise_var, rng);
        let err = a.dot(w_hat) - y;
        total += err * err;
    }
    total / draws as f64
}

/// Algorithm configuration for a Monte-Carlo run.
#[derive(Clone, Debug)]
pub struct McConfig {
    pub partition: Partition,
    /// CoCoA iterations per task.
    pub iterations_per_task: usize,
    /// Train only on the first `t` tasks; defaults to the whole stream.
    pub train_tasks: Option<usize>,
    /// Drop non-finite trials from the summary instead of letting them
    /// poison the mean. They are counted either way.
    pub exclude_nonfinite: bool,
}

impl McConfig {
    pub fn new(partition: Partition, iterations_per_task: usize) -> Self {
        Self { partition, iterations_per_task, train_tasks: None, exclude_nonfinite: false }
    }
}

/// Outcome of one Monte-Carlo trial.
#[derive(Clone, Debug)]
pub struct TrialResult {
    pub estimate: Vector,
    pub per_task_training_error: Vec<f64>,
    /// Mean of the per-task training errors over the seen tasks.
    pub forgetting: f64,
    pub generalization: f64,
    /// `(seed, stream)` that generated this trial's data.
    pub seed: (u64, u64),
}

/// Aggregate over trials.
#[derive(Clone, Debug)]
pub struct McSummary {
    pub mean: f64,
    /// Standard error of the mean (unbiased sample variance).
    pub stderr: f64,
    pub trials: usize,
    /// Trials that produced a non-finite generalization error.
    pub diverged: usize,
    /// Trials entering the mean (differs from `trials` only when non-finite
    /// trials are excluded).
    pub used: usize,
}

/// One trial: realize the stream from the trial's own stream, run the solver
/// over the tasks, and score the final estimate.
pub fn run_trial(
    spec: &TaskSequenceSpec,
    w_true: &[Vector],
    cfg: &McConfig,
    trial_rng: &mut RngStream,
) -> Result<TrialResult> {
    let data = taskgen::generate_task_data(spec, w_true, trial_rng)?;
    let train = cfg.train_tasks.unwrap_or(spec.tasks).min(spec.tasks);
    let mut state = CocoaState::new(cfg.partition.clone());
    for task in &data[..train] {
        state.run_task(task, cfg.iterations_per_task)?;
    }
    let seen = &data[..train.max(1)];
    let per_task: Vec<f64> = seen
        .iter()
        .map(|task| training_error(state.w_hat(), task))
        .collect::<Result<_>>()?;
    let forgetting = per_task.iter().sum::<f64>() / per_task.len() as f64;
    let generalization = generalization_exact(state.w_hat(), w_true, &spec.noise_vars)?;
    Ok(TrialResult {
        estimate: state.w_hat().clone(),
        per_task_training_error: per_task,
        forgetting,
        generalization,
        seed: (trial_rng.seed(), trial_rng.stream_id()),
    })
}

/// Monte-Carlo estimate of the expected generalization error.
///
/// The true parameters are drawn once from `rng`'s own stream; trial `i`
/// realizes fresh training data from sub-stream `rng.stream_id() + 1 + i`, so
/// results do not depend on worker scheduling. Non-finite trials are counted
/// and, unless excluded, propagate into the mean rather than being hidden.
pub fn run_monte_carlo(
    spec: &TaskSequenceSpec,
    cfg: &McConfig,
    trials: usize,
    rng: &RngStream,
) -> Result<McSummary> {
    let mut param_rng = rng.clone();
    let w_true = taskgen::generate_parameters(spec, &mut param_rng);
    run_monte_carlo_with_params(spec, &w_true, cfg, trials, rng)
}

/// [`run_monte_carlo`] with the true parameters fixed by the caller, so one
/// parameter set can be shared across a whole experiment grid.
pub fn run_monte_carlo_with_params(
    spec: &TaskSequenceSpec,
    w_true: &[Vector],
    cfg: &McConfig,
    trials: usize,
    rng: &RngStream,
) -> Result<McSummary> {
    check_mc_inputs(spec, cfg, trials)?;
    let values: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut trial_rng = rng.substream(rng.stream_id() + 1 + i as u64);
            run_trial(spec, w_true, cfg, &mut trial_rng).map(|t| t.generalization)
        })
        .collect::<Result<_>>()?;
    Ok(summarize(&values, cfg.exclude_nonfinite))
}

/// Monte-Carlo run that redraws the true parameters *and* the data on every
/// trial, estimating the expectation over the task model as well.
pub fn run_monte_carlo_resampling(
    spec: &TaskSequenceSpec,
    cfg: &McConfig,
    trials: usize,
    rng: &RngStream,
) -> Result<McSummary> {
    check_mc_inputs(spec, cfg, trials)?;
    let values: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|i| {
            let mut trial_rng = rng.substream(rng.stream_id() + 1 + i as u64);
            let w_true = taskgen::generate_parameters(spec, &mut trial_rng);
            run_trial(spec, &w_true, cfg, &mut trial_rng).map(|t| t.generalization)
        })
        .collect::<Result<_>>()?;
    Ok(summarize(&values, cfg.exclude_nonfinite))
}

fn check_mc_inputs(spec: &TaskSequenceSpec, cfg: &McConfig, trials: usize) -> Result<()> {
    if trials == 0 {
        return Err(Error::InvalidParameter("at least one trial required".into()));
    }
    if cfg.partition.total() != spec.p {
        return Err(Error::DimensionMismatch(format!(
            "partition covers {} coordinates but the spec has p = {}",
            cfg.partition.total(),
            spec.p
        )));
    }
    Ok(())
}

/// Mean and standard error with a deterministic (index-ordered) fold.
pub fn summarize(values: &[f64], exclude_nonfinite: bool) -> McSummary {
    let diverged = values.iter().filter(|v| !v.is_finite()).count();
    let used: Vec<f64> = if exclude_nonfinite {
        values.iter().copied().filter(|v| v.is_finite()).collect()
    } else {
        values.to_vec()
    };
    let n = used.len();
    if n == 0 {
        return McSummary {
            mean: f64::NAN,
            stderr: f64::NAN,
            trials: values.len(),
            diverged,
            used: 0,
        };
    }
    let mean = used.iter().sum::<f64>() / n as f64;
    let stderr = if n > 1 {
        let var = used.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n as f64 - 1.0);
        (var / n as f64).sqrt()
    } else {
        f64::NAN
    };
    McSummary { mean, stderr, trials: values.len(), diverged, used: n }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::taskgen::{generate_parameters, generate_task_data, ParamModel, RegressorModel};
    use crate::theory::{theorem1_error, TheoryDims};
    use approx::assert_abs_diff_eq;

    fn spec(
        p: usize,
        p_shared: usize,
        tasks: usize,
        n: usize,
        sigma2: f64,
        seed: u64,
    ) -> TaskSequenceSpec {
        TaskSequenceSpec::uniform(
            p,
            p_shared,
            tasks,
            n,
            sigma2,
            RegressorModel::IidGaussian,
            ParamModel::Normalized,
            seed,
        )
        .unwrap()
    }

    fn realize(spec: &TaskSequenceSpec) -> (Vec<Vector>, Vec<TaskData>) {
        let mut rng = RngStream::new(spec.seed, 0);
        let w = generate_parameters(spec, &mut rng);
        let data = generate_task_data(spec, &w, &mut rng).unwrap();
        (w, data)
    }

    #[test]
    fn training_error_formula() {
        let s = spec(6, 3, 1, 8, 0.0, 1);
        let (w, data) = realize(&s);
        // Perfect estimate on noiseless data.
        assert_eq!(training_error(&w[0], &data[0]).unwrap(), 0.0);
        // Zero estimate: |y|^2 / (2 n).
        let zero = Vector::zeros(6);
        assert_abs_diff_eq!(
            training_error(&zero, &data[0]).unwrap(),
            data[0].outputs.norm_squared() / 16.0,
            epsilon = 1e-15
        );
        // Elementwise residual oracle on a random estimate.
        let mut rng = RngStream::new(5, 0);
        let w_hat = Vector::from_fn(6, |_, _| rng.normal());
        let mut brute = 0.0;
        for i in 0..8 {
            let mut pred = 0.0;
            for j in 0..6 {
                pred += data[0].regressors[(i, j)] * w_hat[j];
            }
            let r = pred - data[0].outputs[i];
            brute += r * r;
        }
        assert_abs_diff_eq!(
            training_error(&w_hat, &data[0]).unwrap(),
            brute / 16.0,
            epsilon = 1e-12
        );
        // Dimension mismatch reported.
        assert!(training_error(&Vector::zeros(5), &data[0]).is_err());
    }

    #[test]
    fn forgetting_is_the_average_training_error() {
        let s = spec(5, 2, 3, 4, 0.1, 2);
        let (_, data) = realize(&s);
        let mut rng = RngStream::new(6, 0);
        let w_hat = Vector::from_fn(5, |_, _| rng.normal());
        // Single task reduces to the training error.
        assert_eq!(
            forgetting(&w_hat, &data[..1]).unwrap(),
            training_error(&w_hat, &data[0]).unwrap()
        );
        // Hand-computed average over three tasks.
        let avg = (training_error(&w_hat, &data[0]).unwrap()
            + training_error(&w_hat, &data[1]).unwrap()
            + training_error(&w_hat, &data[2]).unwrap())
            / 3.0;
        assert_abs_diff_eq!(forgetting(&w_hat, &data).unwrap(), avg, epsilon = 1e-15);
        assert!(forgetting(&w_hat, &[]).is_err());
    }

    #[test]
    fn interpolating_estimate_has_zero_forgetting() {
        // Overparameterized single task, noiseless: the min-norm solution
        // interpolates, so every residual vanishes.
        let s = spec(10, 5, 1, 3, 0.0, 3);
        let (_, data) = realize(&s);
        let w_hat = crate::matrix::pinv(&data[0].regressors, 0.0).unwrap() * &data[0].outputs;
        assert!(forgetting(&w_hat, &data).unwrap() < 1e-20);
    }

    #[test]
    fn generalization_closed_form() {
        let s = spec(6, 6, 3, 4, 0.0, 4);
        let (w, _) = realize(&s);
        // Identical tasks, exact estimate, no noise: zero error.
        assert_eq!(generalization_exact(&w[0], &w, &[0.0; 3]).unwrap(), 0.0);
        // Zero estimate: mean signal energy plus noise; in the normalized
        // model each |w_t*|^2 = 1, so the zero estimator sits at 1 + sigma^2.
        let zero = Vector::zeros(6);
        let expected = w.iter().map(|wt| wt.norm_squared()).sum::<f64>() / 3.0 + 0.01;
        assert_abs_diff_eq!(
            generalization_exact(&zero, &w, &[0.01; 3]).unwrap(),
            expected,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            generalization_exact(&zero, &w, &[0.01; 3]).unwrap(),
            1.01,
            epsilon = 1e-12
        );
        assert!(generalization_exact(&zero, &w, &[0.0; 2]).is_err());
    }

    #[test]
    fn exact_generalization_matches_sampling() {
        let s = spec(5, 2, 1, 4, 0.3, 7);
        let (w, _) = realize(&s);
        let mut rng = RngStream::new(8, 0);
        let w_hat = Vector::from_fn(5, |_, _| 0.5 * rng.normal());
        let exact = generalization_exact(&w_hat, &w, &[0.3]).unwrap();

        let draws = 100_000;
        let mut sample_rng = RngStream::new(8, 1);
        let samples: Vec<f64> = (0..draws)
            .map(|_| {
                let (a, y) = taskgen::sample_test_point(&w[0], 0.3, &mut sample_rng);
                let e = a.dot(&w_hat) - y;
                e * e
            })
            .collect();
        let mean = samples.iter().sum::<f64>() / draws as f64;
        let var =
            samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (draws as f64 - 1.0);
        let stderr = (var / draws as f64).sqrt();
        assert!(
            (mean - exact).abs() <= 3.0 * stderr,
            "sampled {mean} vs exact {exact} (stderr {stderr})"
        );
        // The helper computes the same estimator.
        let helper = generalization_sampled(&w_hat, &w[0], 0.3, draws, &mut RngStream::new(8, 1));
        assert_abs_diff_eq!(helper, mean, epsilon = 1e-9);
    }

    #[test]
    fn monte_carlo_single_trial_and_determinism() {
        let s = spec(8, 4, 2, 1, 0.05, 11);
        let cfg = McConfig::new(Partition::equal(8, 2).unwrap(), 1);
        let rng = RngStream::new(s.seed, 0);
        let one = run_monte_carlo(&s, &cfg, 1, &rng).unwrap();
        // Reproduce the single trial by hand.
        let mut param_rng = RngStream::new(s.seed, 0);
        let w = generate_parameters(&s, &mut param_rng);
        let mut trial_rng = RngStream::new(s.seed, 1);
        let trial = run_trial(&s, &w, &cfg, &mut trial_rng).unwrap();
        assert_eq!(one.mean, trial.generalization);
        assert_eq!(one.trials, 1);
        assert_eq!(one.diverged, 0);

        let again = run_monte_carlo(&s, &cfg, 64, &rng).unwrap();
        let again2 = run_monte_carlo(&s, &cfg, 64, &rng).unwrap();
        assert_eq!(again.mean.to_bits(), again2.mean.to_bits());
        assert_eq!(again.stderr.to_bits(), again2.stderr.to_bits());
    }

    #[test]
    fn stderr_shrinks_with_trials() {
        // Blocks clear of the interpolation threshold so the trial
        // distribution has light tails.
        let s = spec(8, 4, 2, 1, 0.05, 12);
        let cfg = McConfig::new(Partition::equal(8, 2).unwrap(), 1);
        let rng = RngStream::new(s.seed, 0);
        let small = run_monte_carlo(&s, &cfg, 200, &rng).unwrap();
        let big = run_monte_carlo(&s, &cfg, 800, &rng).unwrap();
        // Quadrupling the trials roughly halves the standard error.
        let ratio = small.stderr / big.stderr;
        assert!(ratio > 1.4 && ratio < 2.8, "ratio {ratio}");
    }

    #[test]
    fn monte_carlo_matches_theorem_on_small_dims() {
        // Simulation oracle for the block recursion: unequal blocks, one
        // update per task, every block clear of the interpolation threshold.
        let s = spec(8, 4, 2, 1, 0.01, 13);
        let dims = TheoryDims::new(vec![1, 1], vec![5, 3]).unwrap();
        let cfg = McConfig::new(Partition::from_sizes(vec![5, 3]).unwrap(), 1);
        let rng = RngStream::new(s.seed, 0);
        let mc = run_monte_carlo(&s, &cfg, 20_000, &rng).unwrap();

        let mut param_rng = RngStream::new(s.seed, 0);
        let w = generate_parameters(&s, &mut param_rng);
        let theory = theorem1_error(&w, &s.noise_vars, &dims, 2, 2);
        assert!(
            (mc.mean - theory).abs() <= 3.0 * mc.stderr,
            "mc {} vs theory {theory} (stderr {})",
            mc.mean,
            mc.stderr
        );
    }

    #[test]
    fn monte_carlo_matches_theorem_overparameterized_multi_iteration() {
        // All blocks overparameterized with a few iterations per task; the
        // estimate is pinned after the first iteration.
        let s = spec(12, 6, 3, 2, 0.02, 14);
        let dims = TheoryDims::equal(2, 3, 12, 3).unwrap();
        let cfg = McConfig::new(Partition::equal(12, 3).unwrap(), 3);
        let rng = RngStream::new(s.seed, 0);
        let mc = run_monte_carlo(&s, &cfg, 20_000, &rng).unwrap();

        let mut param_rng = RngStream::new(s.seed, 0);
        let w = generate_parameters(&s, &mut param_rng);
        let theory = theorem1_error(&w, &s.noise_vars, &dims, 3, 3);
        assert!(
            (mc.mean - theory).abs() <= 3.0 * mc.stderr,
            "mc {} vs theory {theory} (stderr {})",
            mc.mean,
            mc.stderr
        );
    }

    #[test]
    fn monte_carlo_matches_theorem_on_a_trained_prefix() {
        // Generalization is scored over the full horizon while training stops
        // earlier, exercising the unseen-task terms of the closed form.
        let s = spec(8, 4, 3, 1, 0.02, 17);
        let dims = TheoryDims::equal(1, 3, 8, 2).unwrap();
        let mut cfg = McConfig::new(Partition::equal(8, 2).unwrap(), 1);
        cfg.train_tasks = Some(2);
        let rng = RngStream::new(s.seed, 0);
        let mc = run_monte_carlo(&s, &cfg, 20_000, &rng).unwrap();

        let mut param_rng = RngStream::new(s.seed, 0);
        let w = generate_parameters(&s, &mut param_rng);
        let theory = theorem1_error(&w, &s.noise_vars, &dims, 2, 3);
        assert!(
            (mc.mean - theory).abs() <= 3.0 * mc.stderr,
            "mc {} vs theory {theory} (stderr {})",
            mc.mean,
            mc.stderr
        );
    }

    #[test]
    fn divergent_trials_are_counted_not_hidden() {
        let vals = [1.0, f64::INFINITY, 2.0];
        let summary = summarize(&vals, false);
        assert_eq!(summary.diverged, 1);
        assert!(summary.mean.is_infinite());
        let summary = summarize(&vals, true);
        assert_eq!(summary.diverged, 1);
        assert_eq!(summary.used, 2);
        assert_abs_diff_eq!(summary.mean, 1.5, epsilon = 1e-15);
    }

    #[test]
    fn metrics_are_nonnegative() {
        let s = spec(6, 3, 3, 5, 0.2, 15);
        let (w, data) = realize(&s);
        let mut rng = RngStream::new(16, 0);
        for _ in 0..20 {
            let w_hat = Vector::from_fn(6, |_, _| rng.normal());
            assert!(training_error(&w_hat, &data[0]).unwrap() >= 0.0);
            assert!(forgetting(&w_hat, &data).unwrap() >= 0.0);
            assert!(generalization_exact(&w_hat, &w, &s.noise_vars).unwrap() >= 0.0);
        }
    }
}
