//! Feature-partitioned CoCoA iterations for one task stream.
//!
//! The model coordinates are split across `K` nodes; each node owns a column
//! block of the regressor matrix and the matching rows of the estimate. One
//! iteration aggregates the per-node predictions `v_k` into `vbar`, then every
//! node takes the exact min-norm solution of its local subproblem:
//!
//! ```text
//! vbar    = (1/K) sum_k v_k
//! dw_k    = (1/K) pinv(A_k) (y - vbar)
//! w_k    += dw_k
//! v_k     = vbar + K A_k dw_k
//! ```
//!
//! Aggregation is a star topology simulated in-process. The subproblem and
//! aggregation hyperparameters are fixed at the safe choice that cancels out
//! of the updates, so no such knob is exposed.

use crate::error::{Error, Result};
use crate::matrix::{self, Matrix, Vector};
use crate::taskgen::TaskData;

/// How the `p` model coordinates are split across nodes.
#[derive(Clone, Debug, PartialEq)]
pub struct Partition {
    sizes: Vec<usize>,
    offsets: Vec<usize>,
}

impl Partition {
    /// Equal split `p_k = p / K`; requires `K` to divide `p`.
    pub fn equal(p: usize, k: usize) -> Result<Self> {
        if k == 0 || p == 0 {
            return Err(Error::InvalidParameter("p and K must be at least 1".into()));
        }
        if p % k != 0 {
            return Err(Error::InvalidParameter(format!(
                "equal partition requires K | p, got p = {p}, K = {k}"
            )));
        }
        Self::from_sizes(vec![p / k; k])
    }

    pub fn from_sizes(sizes: Vec<usize>) -> Result<Self> {
        if sizes.is_empty() {
            return Err(Error::InvalidParameter("partition needs at least one node".into()));
        }
        if sizes.iter().any(|&s| s == 0) {
            return Err(Error::InvalidParameter("every block must have at least one coordinate".into()));
        }
        let mut offsets = Vec::with_capacity(sizes.len());
        let mut acc = 0;
        for &s in &sizes {
            offsets.push(acc);
            acc += s;
        }
        Ok(Self { sizes, offsets })
    }

    pub fn node_count(&self) -> usize {
        self.sizes.len()
    }

    /// Total model dimension `p`.
    pub fn total(&self) -> usize {
        self.offsets.last().unwrap() + self.sizes.last().unwrap()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn offset(&self, k: usize) -> usize {
        self.offsets[k]
    }

    /// Column block of the regressor matrix owned by node `k`.
    pub fn column_block<'a>(&self, m: &'a Matrix, k: usize) -> nalgebra::DMatrixView<'a, f64> {
        m.columns(self.offsets[k], self.sizes[k])
    }
}

/// Evolving state of the solver: stacked estimate, per-node prediction
/// contributions for the current task, and counters.
#[derive(Clone, Debug)]
pub struct CocoaState {
    partition: Partition,
    w_hat: Vector,
    v: Vec<Vector>,
    task_index: usize,
    iter_count: usize,
    /// Per-node pseudoinverses of the current task's blocks, built on first
    /// use and dropped when a new task is initialized.
    block_pinv: Option<Vec<Matrix>>,
    ready: bool,
}

impl CocoaState {
    /// Fresh state with the zero estimate (the stream's initialization).
    pub fn new(partition: Partition) -> Self {
        let p = partition.total();
        Self {
            partition,
            w_hat: Vector::zeros(p),
            v: Vec::new(),
            task_index: 0,
            iter_count: 0,
            block_pinv: None,
            ready: false,
        }
    }

    pub fn partition(&self) -> &Partition {
        &self.partition
    }

    pub fn w_hat(&self) -> &Vector {
        &self.w_hat
    }

    /// Replace the carried estimate (e.g. to warm-start from a known point).
    /// Clears any in-progress task.
    pub fn set_estimate(&mut self, w: Vector) -> Result<()> {
        if w.len() != self.partition.total() {
            return Err(Error::DimensionMismatch(format!(
                "estimate has {} entries but the partition covers {}",
                w.len(),
                self.partition.total()
            )));
        }
        self.w_hat = w;
        self.v.clear();
        self.ready = false;
        self.block_pinv = None;
        Ok(())
    }

    pub fn v(&self) -> &[Vector] {
        &self.v
    }

    pub fn task_index(&self) -> usize {
        self.task_index
    }

    pub fn iter_count(&self) -> usize {
        self.iter_count
    }

    fn check_dims(&self, data: &TaskData) -> Result<()> {
        if data.regressors.ncols() != self.partition.total() {
            return Err(Error::DimensionMismatch(format!(
                "task {} has {} regressor columns but the partition covers {}",
                data.index,
                data.regressors.ncols(),
                self.partition.total()
            )));
        }
        if data.outputs.len() != data.regressors.nrows() {
            return Err(Error::DimensionMismatch(format!(
                "task {} has {} outputs for {} rows",
                data.index,
                data.outputs.len(),
                data.regressors.nrows()
            )));
        }
        Ok(())
    }

    /// Start a new task: the estimate is carried over and every node resets
    /// its prediction contribution to `K A_k w_k`.
    pub fn init_task(&mut self, data: &TaskData) -> Result<()> {
        self.check_dims(data)?;
        let k = self.partition.node_count() as f64;
        self.v = (0..self.partition.node_count())
            .map(|node| {
                let block = self.partition.column_block(&data.regressors, node);
                let w_block = self
                    .w_hat
                    .rows(self.partition.offset(node), self.partition.sizes[node]);
                block * w_block * k
            })
            .collect();
        self.task_index = data.index;
        self.iter_count = 0;
        self.block_pinv = None;
        self.ready = true;
        Ok(())
    }

    fn ensure_pinv(&mut self, data: &TaskData) -> Result<()> {
        if self.block_pinv.is_none() {
            let mut pinvs = Vec::with_capacity(self.partition.node_count());
            for node in 0..self.partition.node_count() {
                let block = self.partition.column_block(&data.regressors, node).into_owned();
                pinvs.push(matrix::pinv(&block, 0.0)?);
            }
            self.block_pinv = Some(pinvs);
        }
        Ok(())
    }

    /// One CoCoA iteration on the current task.
    pub fn iterate(&mut self, data: &TaskData) -> Result<()> {
        if !self.ready || self.task_index != data.index {
            return Err(Error::InvalidParameter(format!(
                "iterate called for task {} but the state was initialized for task {}",
                data.index, self.task_index
            )));
        }
        self.check_dims(data)?;
        if self.v.first().map(|v| v.len()) != Some(data.outputs.len()) {
            return Err(Error::DimensionMismatch(
                "task data changed shape between init and iterate".into(),
            ));
        }
        self.ensure_pinv(data)?;

        let k = self.partition.node_count();
        let kf = k as f64;
        let mut vbar = Vector::zeros(data.outputs.len());
        for vk in &self.v {
            vbar += vk;
        }
        vbar /= kf;
        let residual = &data.outputs - &vbar;

        let pinvs = self.block_pinv.as_ref().unwrap();
        for node in 0..k {
            let delta = (&pinvs[node] * &residual) / kf;
            let block = self.partition.column_block(&data.regressors, node);
            self.v[node] = &vbar + block * &delta * kf;
            let mut w_block = self
                .w_hat
                .rows_mut(self.partition.offsets[node], self.partition.sizes[node]);
            w_block += delta;
        }
        self.iter_count += 1;
        Ok(())
    }

    /// Run `iterations` CoCoA steps on a task, initializing it first.
    pub fn run_task(&mut self, data: &TaskData, iterations: usize) -> Result<()> {
        if iterations == 0 {
            return Err(Error::InvalidParameter("at least one iteration required".into()));
        }
        self.init_task(data)?;
        for _ in 0..iterations {
            self.iterate(data)?;
        }
        Ok(())
    }

    /// Run a whole stream in order with a fixed iteration budget per task.
    pub fn run_stream(&mut self, tasks: &[TaskData], iterations: usize) -> Result<()> {
        for data in tasks {
            self.run_task(data, iterations)?;
        }
        Ok(())
    }
}

/// Stacked scaled block pseudoinverses `(1/K) [pinv(A_1); ...; pinv(A_K)]`,
/// a `p x n_t` matrix.
pub fn build_abar(a: &Matrix, partition: &Partition) -> Result<Matrix> {
    if a.ncols() != partition.total() {
        return Err(Error::DimensionMismatch(format!(
            "matrix has {} columns but the partition covers {}",
            a.ncols(),
            partition.total()
        )));
    }
    let kf = partition.node_count() as f64;
    let mut abar = Matrix::zeros(partition.total(), a.nrows());
    for node in 0..partition.node_count() {
        let block = partition.column_block(a, node).into_owned();
        let p = matrix::pinv(&block, 0.0)? / kf;
        abar
            .rows_mut(partition.offset(node), partition.sizes()[node])
            .copy_from(&p);
    }
    Ok(abar)
}

/// Closed form of a single iteration from `w_prev`:
/// `P w_prev + Abar y` with `P = I - Abar A`.
pub fn one_step_closed_form(
    w_prev: &Vector,
    data: &TaskData,
    partition: &Partition,
) -> Result<Vector> {
    if w_prev.len() != partition.total() {
        return Err(Error::DimensionMismatch(format!(
            "estimate has {} entries but the partition covers {}",
            w_prev.len(),
            partition.total()
        )));
    }
    let abar = build_abar(&data.regressors, partition)?;
    let p = Matrix::identity(partition.total(), partition.total()) - &abar * &data.regressors;
    Ok(p * w_prev + abar * &data.outputs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::RngStream;
    use crate::taskgen::{
        generate_parameters, generate_task_data, ParamModel, RegressorModel, TaskSequenceSpec,
    };

    fn random_task(n: usize, p: usize, sigma2: f64, seed: u64) -> TaskData {
        let spec = TaskSequenceSpec::uniform(
            p,
            p / 2,
            1,
            n,
            sigma2,
            RegressorModel::IidGaussian,
            ParamModel::Normalized,
            seed,
        )
        .unwrap();
        let mut rng = RngStream::new(seed, 0);
        let w = generate_parameters(&spec, &mut rng);
        generate_task_data(&spec, &w, &mut rng).unwrap().pop().unwrap()
    }

    #[test]
    fn partition_construction() {
        let part = Partition::equal(12, 3).unwrap();
        assert_eq!(part.sizes(), &[4, 4, 4]);
        assert_eq!(part.total(), 12);
        assert!(Partition::equal(10, 3).is_err());
        assert!(Partition::from_sizes(vec![]).is_err());
        assert!(Partition::from_sizes(vec![2, 0]).is_err());
        let uneven = Partition::from_sizes(vec![5, 2, 1]).unwrap();
        assert_eq!(uneven.total(), 8);
        assert_eq!(uneven.offset(2), 7);
    }

    #[test]
    fn init_from_zero_gives_zero_contributions() {
        let data = random_task(5, 8, 0.0, 1);
        let mut state = CocoaState::new(Partition::equal(8, 2).unwrap());
        state.init_task(&data).unwrap();
        for vk in state.v() {
            assert_eq!(vk, &Vector::zeros(5));
        }
        assert_eq!(state.iter_count(), 0);
    }

    #[test]
    fn init_single_node_contribution_is_prediction() {
        let data = random_task(4, 6, 0.1, 2);
        let part = Partition::equal(6, 1).unwrap();
        let mut state = CocoaState::new(part);
        // Seed a nonzero carried estimate by running one task first.
        state.run_task(&data, 1).unwrap();
        let carried = state.w_hat().clone();
        state.init_task(&data).unwrap();
        assert_eq!(state.v()[0], &data.regressors * &carried);
    }

    #[test]
    fn contributions_average_to_network_prediction() {
        // sum_k v_k / K = A w, the block-product identity behind aggregation.
        let data = random_task(6, 12, 0.2, 3);
        let part = Partition::from_sizes(vec![5, 3, 4]).unwrap();
        let mut state = CocoaState::new(part);
        state.run_task(&data, 2).unwrap();
        let w = state.w_hat().clone();
        state.init_task(&data).unwrap();
        let mut sum = Vector::zeros(6);
        for vk in state.v() {
            sum += vk;
        }
        sum /= 3.0;
        let direct = &data.regressors * &w;
        assert!((&sum - &direct).norm() <= 1e-12 * (1.0 + direct.norm()));
    }

    #[test]
    fn zero_residual_is_a_fixed_point() {
        let mut data = random_task(5, 9, 0.3, 4);
        let part = Partition::from_sizes(vec![4, 5]).unwrap();
        let mut state = CocoaState::new(part);
        state.run_task(&data, 1).unwrap();

        // Overwrite the outputs with the network's own aggregated prediction,
        // replicating the engine's summation order so the residual is exactly
        // zero.
        state.init_task(&data).unwrap();
        let mut vbar = Vector::zeros(5);
        for vk in state.v() {
            vbar += vk;
        }
        vbar /= 2.0;
        data.outputs = vbar.clone();

        let w_before = state.w_hat().clone();
        state.iterate(&data).unwrap();
        assert_eq!(state.w_hat(), &w_before);
        for vk in state.v() {
            assert_eq!(vk, &vbar);
        }
        state.iterate(&data).unwrap();
        assert_eq!(state.w_hat(), &w_before);
    }

    #[test]
    fn single_node_first_iterate_is_min_norm_solution() {
        let data = random_task(4, 10, 0.05, 5);
        let part = Partition::equal(10, 1).unwrap();
        let mut state = CocoaState::new(part.clone());
        state.run_task(&data, 1).unwrap();
        let expected = matrix::pinv(&data.regressors, 0.0).unwrap() * &data.outputs;
        assert_eq!(state.w_hat(), &expected);
    }

    #[test]
    fn iterate_matches_closed_form() {
        // Engine-vs-formula cross-check on instances spanning over- and
        // underparameterized blocks.
        let mut rng = RngStream::new(99, 0);
        for case in 0..50 {
            let k = 1 + (case % 4);
            let p_k = 2 + (case % 5);
            let p = k * p_k;
            let n = 1 + (case % 9);
            let data = random_task(n, p, 0.1, 1000 + case as u64);
            let part = Partition::equal(p, k).unwrap();

            let w_prev = Vector::from_fn(p, |_, _| rng.normal());
            let mut state = CocoaState::new(part.clone());
            state.w_hat = w_prev.clone();
            state.init_task(&data).unwrap();
            state.iterate(&data).unwrap();

            let closed = one_step_closed_form(&w_prev, &data, &part).unwrap();
            let rel = (state.w_hat() - &closed).norm() / (1.0 + closed.norm());
            assert!(rel < 1e-10, "case {case}: relative gap {rel}");
        }
    }

    #[test]
    fn full_row_rank_blocks_converge_in_one_iteration() {
        // With every block overparameterized the first iteration is already
        // the fixed point; later iterations must not move the estimate.
        for case in 0..20 {
            let k = 1 + (case % 3);
            let n = 2 + (case % 4);
            let p_k = n + 2 + (case % 3);
            let p = k * p_k;
            let data = random_task(n, p, 0.2, 2000 + case as u64);
            let part = Partition::equal(p, k).unwrap();
            let mut state = CocoaState::new(part);
            state.init_task(&data).unwrap();
            state.iterate(&data).unwrap();
            let after_first = state.w_hat().clone();
            for _ in 1..12 {
                let before = state.w_hat().clone();
                state.iterate(&data).unwrap();
                let step = (state.w_hat() - &before).norm();
                assert!(step <= 1e-9 * (1.0 + before.norm()), "case {case}: step {step}");
            }
            let drift = (state.w_hat() - &after_first).norm();
            assert!(drift <= 1e-9 * (1.0 + after_first.norm()));
        }
    }

    #[test]
    fn underparameterized_single_node_reaches_least_squares() {
        // Normal-equation oracle: A^T A w = A^T y solved directly.
        let data = random_task(30, 7, 0.4, 6);
        let part = Partition::equal(7, 1).unwrap();
        let mut state = CocoaState::new(part);
        state.run_task(&data, 50).unwrap();

        let gram = data.regressors.transpose() * &data.regressors;
        let rhs = data.regressors.transpose() * &data.outputs;
        let oracle = gram.cholesky().expect("full column rank").solve(&rhs);
        let rel = (state.w_hat() - &oracle).norm() / oracle.norm();
        assert!(rel < 1e-6, "relative gap {rel}");
    }

    #[test]
    fn run_task_once_equals_single_iterate() {
        let data = random_task(6, 8, 0.1, 7);
        let part = Partition::equal(8, 4).unwrap();
        let mut a = CocoaState::new(part.clone());
        a.run_task(&data, 1).unwrap();
        let mut b = CocoaState::new(part);
        b.init_task(&data).unwrap();
        b.iterate(&data).unwrap();
        assert_eq!(a.w_hat(), b.w_hat());
    }

    #[test]
    fn abar_shape_and_single_node() {
        let data = random_task(5, 6, 0.0, 8);
        let single = Partition::equal(6, 1).unwrap();
        let abar = build_abar(&data.regressors, &single).unwrap();
        assert_eq!((abar.nrows(), abar.ncols()), (6, 5));
        let direct = matrix::pinv(&data.regressors, 0.0).unwrap();
        assert_eq!(abar, direct);
    }

    #[test]
    fn abar_applies_blockwise() {
        let data = random_task(4, 9, 0.1, 9);
        let part = Partition::from_sizes(vec![2, 3, 4]).unwrap();
        let abar = build_abar(&data.regressors, &part).unwrap();
        let applied = &abar * &data.outputs;
        for node in 0..3 {
            let block = part.column_block(&data.regressors, node).into_owned();
            let expected = matrix::pinv(&block, 0.0).unwrap() * &data.outputs / 3.0;
            let got = applied.rows(part.offset(node), part.sizes()[node]);
            assert!((got - &expected).norm() <= 1e-12 * (1.0 + expected.norm()));
        }
    }

    #[test]
    fn closed_form_is_identity_on_interpolating_estimates() {
        // If w already satisfies A w = y then P w + Abar A w = w.
        let data = random_task(3, 8, 0.0, 10);
        let part = Partition::equal(8, 2).unwrap();
        // Build an interpolating estimate: min-norm solution of A w = y.
        let w = matrix::pinv(&data.regressors, 0.0).unwrap() * &data.outputs;
        let mut exact = data.clone();
        exact.outputs = &data.regressors * &w;
        let out = one_step_closed_form(&w, &exact, &part).unwrap();
        assert!((out - &w).norm() < 1e-10 * (1.0 + w.norm()));

        // And from zero the closed form is Abar y.
        let zero = Vector::zeros(8);
        let out = one_step_closed_form(&zero, &exact, &part).unwrap();
        let abar_y = build_abar(&exact.regressors, &part).unwrap() * &exact.outputs;
        assert_eq!(out, abar_y);
    }

    mod properties {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            // One engine iteration equals the closed-form update on any
            // block shape, over- or underparameterized.
            #[test]
            fn iterate_equals_closed_form(
                k in 1usize..5,
                p_k in 2usize..7,
                n in 1usize..10,
                seed in 0u64..500,
            ) {
                let p = k * p_k;
                let data = random_task(n, p, 0.1, 40_000 + seed);
                let part = Partition::equal(p, k).unwrap();
                let w_prev =
                    Vector::from_fn(p, |_, _| RngStream::new(seed, 9).normal());
                let mut state = CocoaState::new(part.clone());
                state.set_estimate(w_prev.clone()).unwrap();
                state.init_task(&data).unwrap();
                state.iterate(&data).unwrap();
                let closed = one_step_closed_form(&w_prev, &data, &part).unwrap();
                let rel = (state.w_hat() - &closed).norm() / (1.0 + closed.norm());
                prop_assert!(rel < 1e-10, "relative gap {rel}");
            }
        }
    }

    #[test]
    fn iterate_requires_init() {
        let data = random_task(4, 6, 0.0, 11);
        let mut state = CocoaState::new(Partition::equal(6, 2).unwrap());
        assert!(state.iterate(&data).is_err());
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let data = random_task(4, 6, 0.0, 12);
        let mut state = CocoaState::new(Partition::equal(8, 2).unwrap());
        assert!(state.init_task(&data).is_err());
    }
}
