//! Grid execution: closed-form sweeps, Monte-Carlo columns, task-model
//! presets with the offline least-squares benchmark, and learning curves.

use std::collections::BTreeMap;
use std::time::Instant;

use cocoa_cl::baseline::offline_ls;
use cocoa_cl::cocoa::{CocoaState, Partition};
use cocoa_cl::metrics::{
    self, generalization_exact, run_monte_carlo_resampling, run_monte_carlo_with_params, McConfig,
};
use cocoa_cl::taskgen::{self, ParamModel, RegressorModel, TaskSequenceSpec};
use cocoa_cl::theory;
use cocoa_cl::{Error, RngStream, Vector};

use crate::config::{ExperimentConfig, ExperimentId};
use crate::table::{Cell, Table};
use crate::CliError;

/// Stream ids consumed per grid point: one for parameters plus one per trial,
/// rounded up generously so points never overlap.
fn point_stride(trials: usize) -> u64 {
    trials as u64 + 16
}

/// Run a configured experiment and return its result table.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Table, CliError> {
    cfg.validate()?;
    match cfg.experiment {
        ExperimentId::Mnist => Err(CliError::Config(
            "the mnist experiment runs through the `mnist` subcommand".into(),
        )),
        ExperimentId::Fig6 | ExperimentId::Fig7 if !cfg.mode.wants_simulation() => {
            Err(CliError::Config(format!(
                "{} records per-iteration learning curves and needs simulation; use `simulate`",
                cfg.experiment.name()
            )))
        }
        ExperimentId::Fig8 if !cfg.mode.wants_simulation() => Err(CliError::Config(
            "fig8 sweeps correlated regressors, outside the closed forms; use `simulate`".into(),
        )),
        ExperimentId::Fig3 | ExperimentId::Fig4 => task_model_grid(cfg),
        ExperimentId::Fig6 | ExperimentId::Fig7 => learning_curves(cfg),
        _ => standard_grid(cfg),
    }
}

const GRID_COLUMNS: [&str; 18] = [
    "experiment",
    "algo",
    "p",
    "p_shared",
    "n",
    "k",
    "t",
    "t_c",
    "eps",
    "sigma2",
    "e_w",
    "scale",
    "theory",
    "mc_mean",
    "mc_stderr",
    "trials",
    "diverged",
    "wall_ms",
];

struct GridRow {
    algo: &'static str,
    p_shared: usize,
    n: usize,
    k: Option<usize>,
    t: usize,
    t_c: usize,
    eps: f64,
    sigma2: f64,
    e_w: Option<f64>,
    theory: Option<f64>,
    mc: Option<(f64, f64, usize, usize)>,
    wall_ms: u128,
}

fn push_grid_row(table: &mut Table, cfg: &ExperimentConfig, row: GridRow) {
    let diverged = row.theory.map(|v| !v.is_finite()).unwrap_or(false) as i64
        + row.mc.map(|(_, _, _, d)| d as i64).unwrap_or(0);
    table.push(vec![
        Cell::Text(cfg.experiment.name().into()),
        Cell::Text(row.algo.into()),
        Cell::Int(cfg.p as i64),
        Cell::Int(row.p_shared as i64),
        Cell::Int(row.n as i64),
        row.k.map_or(Cell::Empty, |k| Cell::Int(k as i64)),
        Cell::Int(row.t as i64),
        Cell::Int(row.t_c as i64),
        Cell::Float(row.eps),
        Cell::Float(row.sigma2),
        row.e_w.map_or(Cell::Empty, Cell::Float),
        Cell::Float(cfg.scale()),
        row.theory.map_or(Cell::Empty, Cell::Float),
        row.mc.map_or(Cell::Empty, |(m, _, _, _)| Cell::Float(m)),
        row.mc.map_or(Cell::Empty, |(_, s, _, _)| Cell::Float(s)),
        row.mc.map_or(Cell::Empty, |(_, _, t, _)| Cell::Int(t as i64)),
        Cell::Int(diverged),
        Cell::Int(row.wall_ms as i64),
    ]);
}

/// Parameter vectors shared across the whole grid: one draw per `p_shared`
/// value, long enough for the largest task count, so smaller task counts use
/// prefixes of the same stream.
fn shared_params(
    cfg: &ExperimentConfig,
    cache: &mut BTreeMap<usize, Vec<Vector>>,
    p_shared: usize,
    tasks: usize,
) -> Result<Vec<Vector>, Error> {
    if !cache.contains_key(&p_shared) {
        let t_max = *cfg.t_values.iter().max().unwrap();
        let spec = TaskSequenceSpec::uniform(
            cfg.p,
            p_shared,
            t_max,
            1,
            0.0,
            RegressorModel::IidGaussian,
            ParamModel::Normalized,
            cfg.seed,
        )?;
        let mut rng = RngStream::new(cfg.seed, 0);
        cache.insert(p_shared, taskgen::generate_parameters(&spec, &mut rng));
    }
    Ok(cache[&p_shared][..tasks].to_vec())
}

/// Generalization-error grid with theory and simulation columns; covers the
/// node-count, task-similarity, correlation and samples-per-task sweeps.
fn standard_grid(cfg: &ExperimentConfig) -> Result<Table, CliError> {
    let mut table = Table::new(&GRID_COLUMNS);
    let mut params = BTreeMap::new();
    let mut point: u64 = 0;

    for &sigma2 in &cfg.sigma2_values {
        for &eps in &cfg.eps_values {
            for &p_shared in &cfg.p_shared_values {
                for &n in &cfg.n_values {
                    for &t_c in &cfg.tc_values {
                        for &k in &cfg.k_values {
                            for &t in &cfg.t_values {
                                let start = Instant::now();
                                let w = shared_params(cfg, &mut params, p_shared, t)?;
                                let noise = vec![sigma2; t];

                                // Closed forms assume isotropic regressors and
                                // either a single update or overparameterized
                                // blocks; other points get no theory column.
                                let closed_form_valid =
                                    eps == 0.0 && (t_c == 1 || cfg.p / k > n + 1);
                                let theory_value = if cfg.mode.wants_theory() && closed_form_valid
                                {
                                    let dims = theory::TheoryDims::equal(n, t, cfg.p, k)
                                        .map_err(CliError::from)?;
                                    Some(theory::theorem1_error(&w, &noise, &dims, t, t))
                                } else {
                                    None
                                };

                                let mc = if cfg.mode.wants_simulation() && cfg.trials > 0 {
                                    let regressors = if eps == 0.0 {
                                        RegressorModel::IidGaussian
                                    } else {
                                        RegressorModel::Toeplitz { eps }
                                    };
                                    let spec = TaskSequenceSpec::uniform(
                                        cfg.p,
                                        p_shared,
                                        t,
                                        n,
                                        sigma2,
                                        regressors,
                                        ParamModel::Normalized,
                                        cfg.seed,
                                    )?;
                                    let mut mc_cfg =
                                        McConfig::new(Partition::equal(cfg.p, k)?, t_c);
                                    mc_cfg.exclude_nonfinite = cfg.exclude_divergent;
                                    let rng = RngStream::new(
                                        cfg.seed,
                                        1 + point * point_stride(cfg.trials),
                                    );
                                    let summary = run_monte_carlo_with_params(
                                        &spec, &w, &mc_cfg, cfg.trials, &rng,
                                    )?;
                                    Some((summary.mean, summary.stderr, summary.trials, summary.diverged))
                                } else {
                                    None
                                };
                                point += 1;

                                push_grid_row(
                                    &mut table,
                                    cfg,
                                    GridRow {
                                        algo: "cocoa",
                                        p_shared,
                                        n,
                                        k: Some(k),
                                        t,
                                        t_c,
                                        eps,
                                        sigma2,
                                        e_w: None,
                                        theory: theory_value,
                                        mc,
                                        wall_ms: start.elapsed().as_millis(),
                                    },
                                );
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(table)
}

/// Shared-subspace task-model grid: expected error in closed form per
/// `(K, T)`, Monte-Carlo with parameters redrawn per trial, and the offline
/// least-squares benchmark per `T`.
fn task_model_grid(cfg: &ExperimentConfig) -> Result<Table, CliError> {
    let mut table = Table::new(&GRID_COLUMNS);
    let p_shared = cfg.p_shared_values[0];
    let n = cfg.n_values[0];
    let t_c = cfg.tc_values[0];
    let mut point: u64 = 0;

    for &sigma2 in &cfg.sigma2_values {
        for &k in &cfg.k_values {
            for &t in &cfg.t_values {
                let start = Instant::now();
                let theory_value = if cfg.mode.wants_theory() {
                    match theory::corollary4_error(cfg.p, p_shared, cfg.e_w, sigma2, n, k, t) {
                        Ok(v) => Some(v),
                        Err(Error::DegenerateCoefficients(_)) => None,
                        Err(e) => return Err(e.into()),
                    }
                } else {
                    None
                };
                let mc = if cfg.mode.wants_simulation() && cfg.trials > 0 {
                    let spec = TaskSequenceSpec::uniform(
                        cfg.p,
                        p_shared,
                        t,
                        n,
                        sigma2,
                        RegressorModel::IidGaussian,
                        ParamModel::RandomEnergy { energy: cfg.e_w },
                        cfg.seed,
                    )?;
                    let mut mc_cfg = McConfig::new(Partition::equal(cfg.p, k)?, t_c);
                    mc_cfg.exclude_nonfinite = cfg.exclude_divergent;
                    let rng = RngStream::new(cfg.seed, 1 + point * point_stride(cfg.trials));
                    let summary = run_monte_carlo_resampling(&spec, &mc_cfg, cfg.trials, &rng)?;
                    Some((summary.mean, summary.stderr, summary.trials, summary.diverged))
                } else {
                    None
                };
                point += 1;
                push_grid_row(
                    &mut table,
                    cfg,
                    GridRow {
                        algo: "cocoa",
                        p_shared,
                        n,
                        k: Some(k),
                        t,
                        t_c,
                        eps: 0.0,
                        sigma2,
                        e_w: Some(cfg.e_w),
                        theory: theory_value,
                        mc,
                        wall_ms: start.elapsed().as_millis(),
                    },
                );
            }
        }

        // Offline centralized benchmark, simulated numerically.
        if cfg.mode.wants_simulation() && cfg.trials > 0 {
            for &t in &cfg.t_values {
                let start = Instant::now();
                let spec = TaskSequenceSpec::uniform(
                    cfg.p,
                    p_shared,
                    t,
                    n,
                    sigma2,
                    RegressorModel::IidGaussian,
                    ParamModel::RandomEnergy { energy: cfg.e_w },
                    cfg.seed,
                )?;
                let rng = RngStream::new(cfg.seed, 1 + point * point_stride(cfg.trials));
                let summary = ls_monte_carlo(&spec, cfg.trials, &rng, cfg.exclude_divergent)?;
                point += 1;
                push_grid_row(
                    &mut table,
                    cfg,
                    GridRow {
                        algo: "offline_ls",
                        p_shared,
                        n,
                        k: None,
                        t,
                        t_c,
                        eps: 0.0,
                        sigma2,
                        e_w: Some(cfg.e_w),
                        theory: None,
                        mc: Some((summary.mean, summary.stderr, summary.trials, summary.diverged)),
                        wall_ms: start.elapsed().as_millis(),
                    },
                );
            }
        }
    }
    Ok(table)
}

/// Monte-Carlo of the offline centralized least-squares error, with the true
/// parameters redrawn per trial.
pub fn ls_monte_carlo(
    spec: &TaskSequenceSpec,
    trials: usize,
    rng: &RngStream,
    exclude_nonfinite: bool,
) -> Result<metrics::McSummary, CliError> {
    use rayon::prelude::*;
    let values: Vec<f64> = (0..trials)
        .into_par_iter()
        .map(|i| -> Result<f64, Error> {
            let mut trial_rng = rng.substream(rng.stream_id() + 1 + i as u64);
            let w = taskgen::generate_parameters(spec, &mut trial_rng);
            let data = taskgen::generate_task_data(spec, &w, &mut trial_rng)?;
            let ls = offline_ls(&data)?;
            generalization_exact(&ls, &w, &spec.noise_vars)
        })
        .collect::<Result<_, _>>()?;
    Ok(metrics::summarize(&values, exclude_nonfinite))
}

const CURVE_COLUMNS: [&str; 17] = [
    "experiment",
    "p",
    "p_shared",
    "n",
    "k",
    "t",
    "t_c",
    "sigma2",
    "scale",
    "replay_pass",
    "task_step",
    "iteration",
    "gen_mean",
    "gen_stderr",
    "forget_mean",
    "forget_stderr",
    "trials",
];

/// Learning curves: the task sequence is replayed several times and both
/// error metrics are recorded after every solver iteration, `t_c` points per
/// task index.
fn learning_curves(cfg: &ExperimentConfig) -> Result<Table, CliError> {
    use rayon::prelude::*;

    let mut table = Table::new(&CURVE_COLUMNS);
    let k = cfg.k_values[0];
    let t = cfg.t_values[0];
    let t_c = cfg.tc_values[0];
    let n = cfg.n_values[0];
    let sigma2 = cfg.sigma2_values[0];
    let mut params = BTreeMap::new();

    for (ps_index, &p_shared) in cfg.p_shared_values.iter().enumerate() {
        let w = shared_params(cfg, &mut params, p_shared, t)?;
        let spec = TaskSequenceSpec::uniform(
            cfg.p,
            p_shared,
            t,
            n,
            sigma2,
            RegressorModel::IidGaussian,
            ParamModel::Normalized,
            cfg.seed,
        )?;
        let noise = vec![sigma2; t];
        let points = cfg.replays * t * t_c;
        let base = 1 + ps_index as u64 * point_stride(cfg.trials);

        // curves[trial][point] = (generalization, forgetting)
        let curves: Vec<Vec<(f64, f64)>> = (0..cfg.trials)
            .into_par_iter()
            .map(|trial| -> Result<Vec<(f64, f64)>, Error> {
                let mut rng = RngStream::new(cfg.seed, base + trial as u64);
                let data = taskgen::generate_task_data(&spec, &w, &mut rng)?;
                let mut state = CocoaState::new(Partition::equal(cfg.p, k)?);
                let mut curve = Vec::with_capacity(points);
                for pass in 0..cfg.replays {
                    for (step, task) in data.iter().enumerate() {
                        state.init_task(task)?;
                        let seen = if pass == 0 { step + 1 } else { t };
                        for _ in 0..t_c {
                            state.iterate(task)?;
                            let g = generalization_exact(state.w_hat(), &w, &noise)?;
                            let f = metrics::forgetting(state.w_hat(), &data[..seen])?;
                            curve.push((g, f));
                        }
                    }
                }
                Ok(curve)
            })
            .collect::<Result<_, _>>()?;

        for idx in 0..points {
            let gen: Vec<f64> = curves.iter().map(|c| c[idx].0).collect();
            let forget: Vec<f64> = curves.iter().map(|c| c[idx].1).collect();
            let g = metrics::summarize(&gen, false);
            let f = metrics::summarize(&forget, false);
            let pass = idx / (t * t_c);
            let step = (idx / t_c) % t;
            let iter = idx % t_c;
            table.push(vec![
                Cell::Text(cfg.experiment.name().into()),
                Cell::Int(cfg.p as i64),
                Cell::Int(p_shared as i64),
                Cell::Int(n as i64),
                Cell::Int(k as i64),
                Cell::Int(t as i64),
                Cell::Int(t_c as i64),
                Cell::Float(sigma2),
                Cell::Float(cfg.scale()),
                Cell::Int(pass as i64 + 1),
                Cell::Int(step as i64 + 1),
                Cell::Int(iter as i64 + 1),
                Cell::Float(g.mean),
                Cell::Float(g.stderr),
                Cell::Float(f.mean),
                Cell::Float(f.stderr),
                Cell::Int(cfg.trials as i64),
            ]);
        }
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::Mode;
    use crate::table::to_csv;

    fn quick(experiment: ExperimentId, mode: Mode) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::preset(experiment, mode, false);
        cfg.trials = 8;
        cfg
    }

    #[test]
    fn theory_only_custom_sweep() {
        let mut cfg = quick(ExperimentId::Custom, Mode::Theory);
        cfg.trials = 0;
        cfg.k_values = vec![1, 2, 4];
        cfg.t_values = vec![1, 2];
        let table = run_experiment(&cfg).unwrap();
        assert_eq!(table.rows.len(), 6);
        let theory = table.column_index("theory").unwrap();
        let mc = table.column_index("mc_mean").unwrap();
        for row in &table.rows {
            assert!(matches!(row[theory], Cell::Float(v) if v.is_finite()));
            assert_eq!(row[mc], Cell::Empty);
        }
    }

    #[test]
    fn simulation_agrees_with_theory_on_a_small_grid() {
        let mut cfg = quick(ExperimentId::Custom, Mode::Both);
        cfg.p = 16;
        cfg.p_shared_values = vec![8];
        cfg.k_values = vec![2];
        cfg.t_values = vec![2];
        cfg.n_values = vec![2];
        cfg.trials = 4000;
        let table = run_experiment(&cfg).unwrap();
        assert_eq!(table.rows.len(), 1);
        let row = &table.rows[0];
        let theory = row[table.column_index("theory").unwrap()].as_f64().unwrap();
        let mean = row[table.column_index("mc_mean").unwrap()].as_f64().unwrap();
        let stderr = row[table.column_index("mc_stderr").unwrap()].as_f64().unwrap();
        assert!((mean - theory).abs() <= 3.0 * stderr, "{mean} vs {theory} ({stderr})");
    }

    #[test]
    fn deterministic_output_modulo_wall_time() {
        let mut cfg = quick(ExperimentId::Custom, Mode::Both);
        cfg.p = 8;
        cfg.p_shared_values = vec![4];
        cfg.n_values = vec![2];
        cfg.t_values = vec![2];
        let a = run_experiment(&cfg).unwrap();
        let b = run_experiment(&cfg).unwrap();
        let strip = |t: &Table| {
            let wall = t.column_index("wall_ms").unwrap();
            let mut t = t.clone();
            for row in &mut t.rows {
                row[wall] = Cell::Int(0);
            }
            to_csv(&t)
        };
        assert_eq!(strip(&a), strip(&b));
    }

    #[test]
    fn divergent_grid_points_are_flagged() {
        let mut cfg = quick(ExperimentId::Custom, Mode::Theory);
        cfg.trials = 0;
        cfg.p = 8;
        cfg.p_shared_values = vec![4];
        cfg.k_values = vec![2];
        cfg.t_values = vec![2];
        cfg.n_values = vec![4]; // p_k = 4 = n: divergent
        let table = run_experiment(&cfg).unwrap();
        let theory = table.column_index("theory").unwrap();
        let diverged = table.column_index("diverged").unwrap();
        assert_eq!(table.rows[0][theory], Cell::Float(f64::INFINITY));
        assert_eq!(table.rows[0][diverged], Cell::Int(1));
    }

    #[test]
    fn correlated_regressors_simulate_without_theory() {
        let mut cfg = quick(ExperimentId::Fig8, Mode::Simulate);
        cfg.p = 8;
        cfg.p_shared_values = vec![4];
        cfg.n_values = vec![2];
        cfg.k_values = vec![2];
        cfg.t_values = vec![2];
        cfg.eps_values = vec![0.0, 0.5];
        cfg.trials = 6;
        let table = run_experiment(&cfg).unwrap();
        assert_eq!(table.rows.len(), 2);
        let theory = table.column_index("theory").unwrap();
        let mc = table.column_index("mc_mean").unwrap();
        for row in &table.rows {
            assert_eq!(row[theory], Cell::Empty);
            assert!(matches!(row[mc], Cell::Float(v) if v.is_finite()));
        }
        // Closed-form sweeps are rejected for this preset.
        let cfg = quick(ExperimentId::Fig8, Mode::Theory);
        assert!(run_experiment(&cfg).is_err());
        let cfg = quick(ExperimentId::Fig6, Mode::Theory);
        assert!(run_experiment(&cfg).is_err());
    }

    #[test]
    fn task_model_grid_has_benchmark_rows() {
        let mut cfg = quick(ExperimentId::Fig3, Mode::Both);
        cfg.k_values = vec![1, 4];
        cfg.t_values = vec![1, 4];
        cfg.sigma2_values = vec![0.01];
        cfg.trials = 6;
        let table = run_experiment(&cfg).unwrap();
        let algo = table.column_index("algo").unwrap();
        let cocoa = table.rows.iter().filter(|r| r[algo] == Cell::Text("cocoa".into())).count();
        let ls = table
            .rows
            .iter()
            .filter(|r| r[algo] == Cell::Text("offline_ls".into()))
            .count();
        assert_eq!(cocoa, 4);
        assert_eq!(ls, 2);
    }

    #[test]
    fn similarity_curves_cross_as_tasks_grow() {
        // Closed-form sweep over p_shared at full scale: more tasks hurt when
        // tasks are dissimilar and help when they are similar, so the T = 1
        // and T = 16 curves cross; the crossing moves with the network size.
        let mut cfg = ExperimentConfig::preset(ExperimentId::Fig5, Mode::Theory, true);
        cfg.trials = 0;
        cfg.t_values = vec![1, 16];
        let table = run_experiment(&cfg).unwrap();
        let col = |name: &str| table.column_index(name).unwrap();
        let value = |k: usize, t: usize, ps: usize| -> f64 {
            table
                .rows
                .iter()
                .find(|r| {
                    r[col("k")] == Cell::Int(k as i64)
                        && r[col("t")] == Cell::Int(t as i64)
                        && r[col("p_shared")] == Cell::Int(ps as i64)
                })
                .and_then(|r| r[col("theory")].as_f64())
                .unwrap()
        };
        let crossing = |k: usize| -> usize {
            // First p_shared where many tasks beat a single task.
            cfg.p_shared_values
                .iter()
                .copied()
                .find(|&ps| value(k, 16, ps) < value(k, 1, ps))
                .expect("curves never crossed")
        };
        for k in [4, 16] {
            assert!(value(k, 16, 0) > value(k, 1, 0), "dissimilar tasks should hurt at K={k}");
            assert!(
                value(k, 16, cfg.p) < value(k, 1, cfg.p),
                "identical tasks should help at K={k}"
            );
        }
        // A wider network tolerates less similarity before more tasks pay off.
        assert!(crossing(16) <= crossing(4), "{} vs {}", crossing(16), crossing(4));
    }

    #[test]
    fn learning_curve_shape() {
        let mut cfg = quick(ExperimentId::Fig7, Mode::Simulate);
        cfg.p = 16;
        cfg.p_shared_values = vec![16];
        cfg.n_values = vec![8];
        cfg.t_values = vec![2];
        cfg.tc_values = vec![3];
        cfg.replays = 2;
        cfg.trials = 4;
        let table = run_experiment(&cfg).unwrap();
        // replays * t * t_c rows per p_shared value.
        assert_eq!(table.rows.len(), 2 * 2 * 3);
        let pass = table.column_index("replay_pass").unwrap();
        assert_eq!(table.rows[0][pass], Cell::Int(1));
        assert_eq!(table.rows.last().unwrap()[pass], Cell::Int(2));
    }
}
