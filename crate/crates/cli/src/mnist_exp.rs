//! Domain-incremental digit classification with the distributed solver.
//!
//! Images are mapped to cosine random features; two linear models are trained
//! continually with quadratic loss, one targeting odd digits and one even
//! (`+1` for the model's own parity, `-1` for the other). A test digit is
//! called odd when the odd model's score wins, so chance level is 0.5. The
//! five digit-pair tasks are replayed for a configured number of repetitions
//! and every model update is scored against all five held-out test sets.

use cocoa_cl::cocoa::{CocoaState, Partition};
use cocoa_cl::mnist::{self, MnistData};
use cocoa_cl::taskgen::{random_features_batch, sample_feature_bank, TaskData};
use cocoa_cl::{Matrix, RngStream, Vector};

use crate::config::MnistSettings;
use crate::table::{Cell, Table};
use crate::CliError;

pub const MNIST_COLUMNS: [&str; 9] = [
    "repetition",
    "trained_task",
    "eval_task",
    "error_rate",
    "p",
    "n_per_task",
    "k",
    "t_c",
    "seed",
];

pub struct MnistOutcome {
    pub table: Table,
    /// Per-task test error rate after the final repetition.
    pub final_error: Vec<f64>,
}

struct TaskSet {
    train: Vec<TaskData>,
    /// Per task: test feature rows and the matching odd-parity flags.
    test_features: Vec<Matrix>,
    test_is_odd: Vec<Vec<bool>>,
}

/// Pick `count` training samples for a task, balanced across its two digits
/// when possible, without replacement.
fn balanced_selection(
    data: &MnistData,
    task: usize,
    count: usize,
    rng: &mut RngStream,
) -> Vec<usize> {
    let mut even: Vec<usize> = Vec::new();
    let mut odd: Vec<usize> = Vec::new();
    for idx in data.train_indices_for_task(task) {
        if data.train_label(idx) % 2 == 0 {
            even.push(idx);
        } else {
            odd.push(idx);
        }
    }
    rng.shuffle(&mut even);
    rng.shuffle(&mut odd);
    let half = count / 2;
    let take_even = half.min(even.len());
    let take_odd = (count - take_even).min(odd.len());
    let mut selected: Vec<usize> = even[..take_even].to_vec();
    selected.extend_from_slice(&odd[..take_odd]);
    // Top up from whichever digit still has spare samples.
    let mut spare: Vec<usize> = even[take_even..].iter().chain(odd[take_odd..].iter()).copied().collect();
    rng.shuffle(&mut spare);
    selected.extend(spare.into_iter().take(count - selected.len()));
    selected
}

fn build_tasks(
    data: &MnistData,
    bank: &Matrix,
    settings: &MnistSettings,
    selection_rng: &mut RngStream,
    include_test: bool,
) -> Result<TaskSet, CliError> {
    let p = settings.features;
    let mut train = Vec::with_capacity(mnist::TASKS);
    let mut test_features = Vec::new();
    let mut test_is_odd = Vec::new();

    for task in 0..mnist::TASKS {
        let indices = balanced_selection(data, task, settings.train_per_task, selection_rng);
        if indices.is_empty() {
            return Err(CliError::Config(format!("no training samples for task {task}")));
        }
        let images = data.train_images_scaled(&indices);
        let features = random_features_batch(&images, bank)?;
        // Odd-model targets; the even model flips the sign.
        let outputs = Vector::from_iterator(
            indices.len(),
            indices.iter().map(|&i| if data.train_label(i) % 2 == 1 { 1.0 } else { -1.0 }),
        );
        train.push(TaskData {
            index: task + 1,
            regressors: features,
            outputs,
            w_true: Vector::zeros(p),
            noise_var: 0.0,
        });

        if include_test {
            let mut test_idx = data.test_indices_for_task(task);
            selection_rng.shuffle(&mut test_idx);
            test_idx.truncate(settings.test_per_task);
            if test_idx.is_empty() {
                return Err(CliError::Config(format!("no test samples for task {task}")));
            }
            let images = data.test_images_scaled(&test_idx);
            test_features.push(random_features_batch(&images, bank)?);
            test_is_odd
                .push(test_idx.iter().map(|&i| data.test_label(i) % 2 == 1).collect());
        }
    }
    Ok(TaskSet { train, test_features, test_is_odd })
}

fn error_rate(features: &Matrix, is_odd: &[bool], w_odd: &Vector, w_even: &Vector) -> f64 {
    let score_odd = features * w_odd;
    let score_even = features * w_even;
    let wrong = is_odd
        .iter()
        .enumerate()
        .filter(|(i, &odd)| (score_odd[*i] > score_even[*i]) != odd)
        .count();
    wrong as f64 / is_odd.len() as f64
}

/// Run the continual digit-classification experiment.
pub fn run_mnist(
    data: &MnistData,
    settings: &MnistSettings,
    seed: u64,
) -> Result<MnistOutcome, CliError> {
    if settings.features == 0 || settings.features % settings.nodes != 0 {
        return Err(CliError::Config(format!(
            "mnist_nodes = {} must divide mnist_features = {}",
            settings.nodes, settings.features
        )));
    }
    if settings.repetitions == 0 || settings.iterations == 0 || settings.train_per_task == 0 {
        return Err(CliError::Config(
            "mnist repetitions, iterations and train_per_task must be at least 1".into(),
        ));
    }

    let mut bank_rng = RngStream::new(seed, 0);
    let bank = sample_feature_bank(data.image_len, settings.features, 0.04, &mut bank_rng);
    let mut selection_rng = RngStream::new(seed, 1);
    let mut tasks = build_tasks(data, &bank, settings, &mut selection_rng, true)?;

    let partition = Partition::equal(settings.features, settings.nodes)?;
    let mut odd_model = CocoaState::new(partition.clone());
    let mut even_model = CocoaState::new(partition);

    let mut table = Table::new(&MNIST_COLUMNS);
    let mut final_error = vec![0.0; mnist::TASKS];

    for rep in 1..=settings.repetitions {
        if settings.resample_per_rep && rep > 1 {
            // Fresh training subset (and targets) per repetition; the feature
            // bank and test sets stay fixed.
            let mut rng = RngStream::new(seed, 1 + rep as u64);
            let fresh = build_tasks(data, &bank, settings, &mut rng, false)?;
            tasks.train = fresh.train;
        }
        for t in 0..mnist::TASKS {
            let task = &tasks.train[t];
            odd_model.run_task(task, settings.iterations)?;
            let flipped = TaskData { outputs: -task.outputs.clone(), ..task.clone() };
            even_model.run_task(&flipped, settings.iterations)?;

            for eval in 0..mnist::TASKS {
                let rate = error_rate(
                    &tasks.test_features[eval],
                    &tasks.test_is_odd[eval],
                    odd_model.w_hat(),
                    even_model.w_hat(),
                );
                final_error[eval] = rate;
                table.push(vec![
                    Cell::Int(rep as i64),
                    Cell::Int(t as i64),
                    Cell::Int(eval as i64),
                    Cell::Float(rate),
                    Cell::Int(settings.features as i64),
                    Cell::Int(settings.train_per_task as i64),
                    Cell::Int(settings.nodes as i64),
                    Cell::Int(settings.iterations as i64),
                    Cell::Int(seed as i64),
                ]);
            }
        }
    }
    Ok(MnistOutcome { table, final_error })
}
