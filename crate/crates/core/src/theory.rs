//! Closed-form expected generalization error under isotropic Gaussian
//! regressors.
//!
//! All quantities are driven by two per-(task, node) coefficients of the local
//! block dimensions `n_t x p_k`:
//!
//! ```text
//! r     = min(n, p_k) / p_k
//! gamma = min(n, p_k) / (max(n, p_k) - min(n, p_k) - 1),   p_k outside [n-1, n+1]
//!       = +inf                                             otherwise
//! ```
//!
//! `gamma = +inf` marks the interpolation threshold where the local systems
//! are ill-conditioned and the expected error diverges. Divergence is a value,
//! not an error: it propagates as `f64::INFINITY`, so a non-finite result
//! always means some block hit the threshold (or a limit formula was
//! evaluated with `|h| >= 1`), never silent garbage.
//!
//! The main entry point is [`theorem1_error`], the exact block recursion for
//! an arbitrary stream trained with the solver in [`crate::cocoa`] (valid when
//! every block is overparameterized, or when a single iteration per task is
//! used). The remaining functions are its specializations: equal dimensions,
//! the single-node centralized case, a single shared parameter vector, the
//! shared-subspace task model, and the many-task limits.

use crate::error::{Error, Result};
use crate::matrix::{self, Matrix, Vector};
use crate::rng::RngStream;
use rayon::prelude::*;

/// Tolerance used when testing `h` against the degenerate values 1 and `b`.
const DEGENERACY_MARGIN: f64 = 1e-12;

/// Per-block dimension coefficients.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Coeffs {
    pub r: f64,
    /// `f64::INFINITY` when the block sits at the interpolation threshold.
    pub gamma: f64,
}

impl Coeffs {
    pub fn divergent(&self) -> bool {
        self.gamma.is_infinite()
    }
}

/// The coefficients `r` and `gamma` for one `n x p_k` block.
pub fn coeffs(n: usize, p_k: usize) -> Coeffs {
    assert!(n >= 1 && p_k >= 1, "block dimensions must be at least 1");
    let lo = n.min(p_k) as f64;
    let hi = n.max(p_k) as f64;
    let r = lo / p_k as f64;
    // p_k within [n - 1, n + 1] is the divergent branch.
    let gamma = if hi - lo >= 2.0 { lo / (hi - lo - 1.0) } else { f64::INFINITY };
    Coeffs { r, gamma }
}

/// Coefficient table for a whole stream: tasks `1..=T` with `n_t` samples and
/// nodes with block sizes `p_k`.
#[derive(Clone, Debug)]
pub struct TheoryDims {
    samples: Vec<usize>,
    sizes: Vec<usize>,
    /// `r[t][k]`, 0-based in `t` (task `t + 1`).
    r: Vec<Vec<f64>>,
    gamma: Vec<Vec<f64>>,
    divergent: bool,
}

impl TheoryDims {
    pub fn new(samples: Vec<usize>, sizes: Vec<usize>) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::InvalidParameter("at least one task required".into()));
        }
        if sizes.is_empty() {
            return Err(Error::InvalidParameter("at least one node required".into()));
        }
        if samples.iter().any(|&n| n == 0) || sizes.iter().any(|&p| p == 0) {
            return Err(Error::InvalidParameter("dimensions must be at least 1".into()));
        }
        let mut r = Vec::with_capacity(samples.len());
        let mut gamma = Vec::with_capacity(samples.len());
        let mut divergent = false;
        for &n in &samples {
            let mut rt = Vec::with_capacity(sizes.len());
            let mut gt = Vec::with_capacity(sizes.len());
            for &p_k in &sizes {
                let c = coeffs(n, p_k);
                divergent |= c.divergent();
                rt.push(c.r);
                gt.push(c.gamma);
            }
            r.push(rt);
            gamma.push(gt);
        }
        Ok(Self { samples, sizes, r, gamma, divergent })
    }

    /// Equal dimensions: every task has `n` samples and `K` nodes share `p`
    /// coordinates evenly.
    pub fn equal(n: usize, tasks: usize, p: usize, k: usize) -> Result<Self> {
        if k == 0 || p % k != 0 {
            return Err(Error::InvalidParameter(format!(
                "equal dimensions require K | p, got p = {p}, K = {k}"
            )));
        }
        Self::new(vec![n; tasks], vec![p / k; k])
    }

    pub fn task_count(&self) -> usize {
        self.samples.len()
    }

    pub fn node_count(&self) -> usize {
        self.sizes.len()
    }

    pub fn total_dim(&self) -> usize {
        self.sizes.iter().sum()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn samples(&self) -> &[usize] {
        &self.samples
    }

    /// True when any `(t, k)` pair in the table hits the divergent branch.
    pub fn divergent(&self) -> bool {
        self.divergent
    }

    /// True when a stream trained through task `t` touches a divergent block.
    pub fn divergent_up_to(&self, t: usize) -> bool {
        self.gamma[..t].iter().any(|row| row.iter().any(|g| g.is_infinite()))
    }

    /// `r_{t,k}` with the boundary convention `r_{0,k} = K`.
    fn r_at(&self, t: usize, k: usize) -> f64 {
        if t == 0 {
            self.node_count() as f64
        } else {
            self.r[t - 1][k]
        }
    }

    /// Backward recursion for the weight table: returns `ht` with
    /// `ht[i][k] = h_{i+1,k}` for `i = 0..=t`, so `ht[t]` is the boundary
    /// (all ones) and `ht[0]` is `h_{1,k}`.
    fn h_table(&self, t: usize) -> Vec<Vec<f64>> {
        let k_count = self.node_count();
        let kf = k_count as f64;
        let ksq = kf * kf;
        let mut ht = vec![vec![1.0; k_count]; t + 1];
        for tau in (1..=t).rev() {
            let next = ht[tau].clone();
            let cross: f64 = (0..k_count).map(|i| next[i] * self.gamma[tau - 1][i]).sum();
            for k in 0..k_count {
                let own = next[k] * (ksq + self.r[tau - 1][k] * (1.0 - 2.0 * kf));
                let others = cross - next[k] * self.gamma[tau - 1][k];
                ht[tau - 1][k] = (own + others) / ksq;
            }
        }
        ht
    }
}

/// Blockwise Gram table for a set of parameter vectors: entry `[a][b][k]` is
/// the inner product of vectors `a` and `b` restricted to block `k`, with
/// index 0 standing for the zero vector.
fn block_grams(w: &[Vector], sizes: &[usize]) -> Vec<Vec<Vec<f64>>> {
    let count = w.len() + 1;
    let mut g = vec![vec![vec![0.0; sizes.len()]; count]; count];
    for a in 1..count {
        for b in a..count {
            let mut offset = 0;
            for (k, &size) in sizes.iter().enumerate() {
                let dot = w[a - 1].rows(offset, size).dot(&w[b - 1].rows(offset, size));
                g[a][b][k] = dot;
                g[b][a][k] = dot;
                offset += size;
            }
        }
    }
    g
}

/// Expected generalization error of the estimate trained through task
/// `trained`, averaged over tasks `1..=horizon`.
///
/// Implements the exact block recursion: the backward per-node weight
/// table, block-diagonal weighted norms of `w_i*`, the
/// per-task difference and noise terms, and the cross terms over earlier
/// tasks with `w_0* = 0` and `r_{0,k} = K`. Empty products evaluate to one.
///
/// Returns `f64::INFINITY` whenever a trained block is divergent.
pub fn theorem1_error(
    w_true: &[Vector],
    noise_vars: &[f64],
    dims: &TheoryDims,
    trained: usize,
    horizon: usize,
) -> f64 {
    assert_eq!(w_true.len(), horizon, "one parameter vector per task");
    assert_eq!(noise_vars.len(), horizon, "one noise variance per task");
    assert!(trained <= dims.task_count(), "dims must cover every trained task");
    assert!(trained <= horizon, "cannot train past the horizon");
    assert!(horizon >= 1, "horizon must be at least 1");
    let p = dims.total_dim();
    assert!(w_true.iter().all(|w| w.len() == p), "parameter dimension mismatch");

    if trained == 0 {
        // Zero estimator: no training, the weight table is the identity.
        return w_true
            .iter()
            .zip(noise_vars)
            .map(|(w, s)| w.norm_squared() + s)
            .sum::<f64>()
            / horizon as f64;
    }
    if dims.divergent_up_to(trained) {
        return f64::INFINITY;
    }

    let k_count = dims.node_count();
    let kf = k_count as f64;
    let ksq = kf * kf;
    let ht = dims.h_table(trained);
    let grams = block_grams(w_true, &dims.sizes);

    // Per-task scalar pieces shared by every evaluation task i: the
    // difference-norm block scalar, the noise contribution, and the front
    // factor of the cross-term blocks.
    let mut diff_scalar = vec![vec![0.0; k_count]; trained + 1];
    let mut cross_front = vec![vec![0.0; k_count]; trained + 1];
    let mut noise = vec![0.0; trained + 1];
    for tau in 1..=trained {
        let next = &ht[tau];
        let cross: f64 = (0..k_count).map(|i| next[i] * dims.gamma[tau - 1][i]).sum();
        for k in 0..k_count {
            let others = cross - next[k] * dims.gamma[tau - 1][k];
            diff_scalar[tau][k] = (next[k] * dims.r[tau - 1][k] + others) / ksq;
            cross_front[tau][k] = (next[k] * dims.r[tau - 1][k] * (kf - 1.0) - others) / ksq;
        }
        noise[tau] = noise_vars[tau - 1] * cross / ksq;
    }

    let norm_diff = |a: usize, b: usize, k: usize| -> f64 {
        grams[a][a][k] - 2.0 * grams[a][b][k] + grams[b][b][k]
    };
    let inner_diff = |tau: usize, j: usize, i: usize, k: usize| -> f64 {
        grams[tau][j][k] - grams[tau][i][k] - grams[i][j][k] + grams[i][i][k]
    };

    let mut total = 0.0;
    for i in 1..=horizon {
        let mut acc = noise_vars[i - 1];
        for k in 0..k_count {
            acc += ht[0][k] * grams[i][i][k];
        }
        for tau in 1..=trained {
            for k in 0..k_count {
                acc += diff_scalar[tau][k] * norm_diff(tau, i, k);
            }
            acc += noise[tau];
            // Cross terms over j = 0..tau-1; the running tail product
            // prod_{l=j+1}^{tau-1} (1 - r_{l,k}/K) is extended as j decreases.
            let mut tail = vec![1.0; k_count];
            for j in (0..tau).rev() {
                let mut q = 0.0;
                for k in 0..k_count {
                    q += (dims.r_at(j, k) / kf)
                        * tail[k]
                        * cross_front[tau][k]
                        * inner_diff(tau, j, i, k);
                }
                acc += 2.0 * q;
                if j > 0 {
                    for k in 0..k_count {
                        tail[k] *= 1.0 - dims.r[j - 1][k] / kf;
                    }
                }
            }
        }
        total += acc;
    }
    total / horizon as f64
}

/// Scalar coefficients of the equal-dimension case.
#[derive(Clone, Copy, Debug)]
pub struct ScalarCoeffs {
    pub r: f64,
    pub gamma: f64,
    /// Contraction factor `(K^2 + (1 - 2K) r + (K - 1) gamma) / K^2`.
    pub h: f64,
    /// `1 - r/K`.
    pub b: f64,
}

/// Coefficients for `K` nodes sharing `p` coordinates evenly with `n` samples
/// per task. `h` is `f64::INFINITY` when the blocks are divergent.
pub fn h_equal(n: usize, p: usize, k: usize) -> Result<ScalarCoeffs> {
    if k == 0 || p == 0 || p % k != 0 {
        return Err(Error::InvalidParameter(format!(
            "equal dimensions require K | p, got p = {p}, K = {k}"
        )));
    }
    let c = coeffs(n, p / k);
    let kf = k as f64;
    let h = if c.divergent() {
        f64::INFINITY
    } else {
        (kf * kf + (1.0 - 2.0 * kf) * c.r + (kf - 1.0) * c.gamma) / (kf * kf)
    };
    Ok(ScalarCoeffs { r: c.r, gamma: c.gamma, h, b: 1.0 - c.r / kf })
}

/// Equal-dimension specialization of [`theorem1_error`], evaluated directly
/// through powers of `h` instead of the block recursion.
pub fn corollary_equal_dims(
    w_true: &[Vector],
    noise_vars: &[f64],
    n: usize,
    p: usize,
    k: usize,
    trained: usize,
    horizon: usize,
) -> Result<f64> {
    assert_eq!(w_true.len(), horizon, "one parameter vector per task");
    assert_eq!(noise_vars.len(), horizon, "one noise variance per task");
    assert!(trained <= horizon, "cannot train past the horizon");
    assert!(horizon >= 1, "horizon must be at least 1");
    let sc = h_equal(n, p, k)?;
    if trained > 0 && sc.h.is_infinite() {
        return Ok(f64::INFINITY);
    }
    let kf = k as f64;
    let ksq = kf * kf;
    let (r, gamma, h) = (sc.r, sc.gamma, sc.h);

    // Gram table over tasks; the zero-vector cross term appears explicitly
    // as the trailing line rather than through an index convention.
    let count = horizon + 1;
    let mut g = vec![vec![0.0; count]; count];
    for a in 1..count {
        for b in a..count {
            let dot = w_true[a - 1].dot(&w_true[b - 1]);
            g[a][b] = dot;
            g[b][a] = dot;
        }
    }
    let norm_diff = |a: usize, b: usize| g[a][a] - 2.0 * g[a][b] + g[b][b];
    let inner_diff = |tau: usize, j: usize, i: usize| g[tau][j] - g[tau][i] - g[i][j] + g[i][i];

    let diff_w = (r + (kf - 1.0) * gamma) / ksq;
    let cross_w = (r - gamma) * (kf - 1.0) / ksq;
    let b_factor = sc.b;

    let mut total = 0.0;
    for i in 1..=horizon {
        let mut acc = g[i][i] * h.powi(trained as i32) + noise_vars[i - 1];
        for tau in 1..=trained {
            let decay = h.powi((trained - tau) as i32);
            acc += norm_diff(tau, i) * diff_w * decay;
            acc += noise_vars[tau - 1] * (gamma / kf) * decay;
            let mut j_sum = 0.0;
            for j in 1..tau {
                j_sum += b_factor.powi((tau - j - 1) as i32) * inner_diff(tau, j, i);
            }
            acc += 2.0 * decay * cross_w * (r / kf) * j_sum;
            acc -= 2.0 * cross_w * b_factor.powi(tau as i32 - 1) * decay * (g[tau][i] - g[i][i]);
        }
        total += acc;
    }
    Ok(total / horizon as f64)
}

/// Single-node centralized error after training on all `horizon` tasks, in
/// the overparameterized regime `p > n + 1`. This is the expected
/// generalization error *minus* the noise floor `sigma2`.
pub fn centralized_error(
    w_true: &[Vector],
    sigma2: f64,
    n: usize,
    p: usize,
    horizon: usize,
) -> f64 {
    assert_eq!(w_true.len(), horizon, "one parameter vector per task");
    assert!(horizon >= 1, "horizon must be at least 1");
    if p <= n + 1 {
        return f64::INFINITY;
    }
    let t = horizon as f64;
    let r = n as f64 / p as f64;
    let decay_t = (1.0 - r).powi(horizon as i32);

    let norms: f64 = w_true.iter().map(|w| w.norm_squared()).sum();
    let mut cross = 0.0;
    for tau in 1..=horizon {
        let scale = r * (1.0 - r).powi((horizon - tau) as i32);
        for i in 1..=horizon {
            cross += scale * (&w_true[tau - 1] - &w_true[i - 1]).norm_squared();
        }
    }
    decay_t / t * norms
        + cross / t
        + p as f64 * sigma2 / (p as f64 - n as f64 - 1.0) * (1.0 - decay_t)
}

/// Expected generalization error when every task shares the same parameter
/// vector and noise level, trained through `tasks` tasks.
pub fn theorem2_error(w_star: &Vector, sigma2: f64, dims: &TheoryDims, tasks: usize) -> f64 {
    assert!(tasks <= dims.task_count(), "dims must cover every trained task");
    assert_eq!(w_star.len(), dims.total_dim(), "parameter dimension mismatch");
    if tasks == 0 {
        return w_star.norm_squared() + sigma2;
    }
    if dims.divergent_up_to(tasks) {
        return f64::INFINITY;
    }
    let k_count = dims.node_count();
    let ksq = (k_count * k_count) as f64;
    let ht = dims.h_table(tasks);

    let mut weighted = 0.0;
    let mut offset = 0;
    for (k, &size) in dims.sizes.iter().enumerate() {
        weighted += ht[0][k] * w_star.rows(offset, size).norm_squared();
        offset += size;
    }
    let mut noise_sum = 0.0;
    for tau in 1..=tasks {
        for k in 0..k_count {
            noise_sum += dims.gamma[tau - 1][k] * ht[tau][k];
        }
    }
    weighted + sigma2 * (ksq + noise_sum) / ksq
}

/// Per-task sufficient conditions for the shared-parameter error to vanish as
/// the number of tasks grows: with `c = (K-1)/(2K-1)`, the sample count must
/// satisfy `n < p_min - c p_max - 1` or `n > p_max + c p_min + 1` strictly.
pub fn zero_error_conditions(dims: &TheoryDims) -> Vec<bool> {
    let k = dims.node_count() as f64;
    let c = (k - 1.0) / (2.0 * k - 1.0);
    let p_min = *dims.sizes.iter().min().unwrap() as f64;
    let p_max = *dims.sizes.iter().max().unwrap() as f64;
    dims.samples
        .iter()
        .map(|&n| {
            let n = n as f64;
            n < p_min - c * p_max - 1.0 || n > p_max + c * p_min + 1.0
        })
        .collect()
}

/// Coefficients of the five-term error decomposition under task-similarity
/// constants: `G_T = psi0 sigma^2 + psi1 E1 + psi2 E2 + psi3 E3 + psi4 E4`.
#[derive(Clone, Copy, Debug)]
pub struct PsiCoeffs {
    pub psi0: f64,
    pub psi1: f64,
    pub psi2: f64,
    pub psi3: f64,
    pub psi4: f64,
    pub h: f64,
    pub b: f64,
}

/// Decomposition coefficients for equal dimensions and `tasks` tasks.
///
/// Defined for `h != 1` and `b != h`; the single exception is the single-node
/// underparameterized case `K = 1, r = 1` where `h = b = 0` and the two
/// trailing coefficients vanish.
pub fn psi_coeffs(n: usize, p: usize, k: usize, tasks: usize) -> Result<PsiCoeffs> {
    if tasks == 0 {
        return Err(Error::InvalidParameter("decomposition needs at least one task".into()));
    }
    let sc = h_equal(n, p, k)?;
    if sc.h.is_infinite() {
        return Err(Error::DegenerateCoefficients(format!(
            "divergent block dimensions (n = {n}, p_k = {})",
            p / k
        )));
    }
    let (r, gamma, h, b) = (sc.r, sc.gamma, sc.h, sc.b);
    let kf = k as f64;
    let t = tasks as f64;
    let ht = h.powi(tasks as i32);

    if k == 1 {
        // The two cross coefficients carry a K - 1 factor and vanish, so the
        // b = h coincidence of the single-node case is harmless; h = 1 - r
        // stays strictly below one.
        let geo_h = (1.0 - ht) / (1.0 - h);
        let psi0 = 1.0 + gamma * geo_h;
        let psi2 = r * ((t - 1.0) / t) * geo_h;
        return Ok(PsiCoeffs { psi0, psi1: ht, psi2, psi3: 0.0, psi4: 0.0, h, b });
    }
    if (h - 1.0).abs() <= DEGENERACY_MARGIN {
        return Err(Error::DegenerateCoefficients(format!("h = {h} is too close to 1")));
    }
    if (h - b).abs() <= DEGENERACY_MARGIN {
        return Err(Error::DegenerateCoefficients(format!("h = {h} coincides with b = {b}")));
    }

    let bt = b.powi(tasks as i32);
    let geo_h = (1.0 - ht) / (1.0 - h);
    let cross = 2.0 * (kf - 1.0) * (r - gamma) / (kf * kf);
    let psi0 = 1.0 + gamma / kf * geo_h;
    let psi1 = ht;
    let psi2 = (r + (kf - 1.0) * gamma) / (kf * kf) * ((t - 1.0) / t) * geo_h;
    let psi3 = cross * ((t - 1.0) / t) * (ht - bt) / (h - b);
    let psi4 = cross * ((t - 2.0) / t) * (geo_h - (bt - ht) / (b - h));
    Ok(PsiCoeffs { psi0, psi1, psi2, psi3, psi4, h, b })
}

/// Expected error under the shared-subspace task model: parameters share
/// `p_shared` leading coordinates and every entry has variance `e_w / p`.
///
/// Returns the divergence sentinel when the blocks sit at the interpolation
/// threshold.
pub fn corollary4_error(
    p: usize,
    p_shared: usize,
    e_w: f64,
    sigma2: f64,
    n: usize,
    k: usize,
    tasks: usize,
) -> Result<f64> {
    if p_shared > p {
        return Err(Error::InvalidParameter(format!("p_shared = {p_shared} exceeds p = {p}")));
    }
    let sc = h_equal(n, p, k)?;
    if sc.h.is_infinite() {
        return Ok(f64::INFINITY);
    }
    let psi = psi_coeffs(n, p, k, tasks)?;
    let frac = (p - p_shared) as f64 / p as f64;
    Ok(psi.psi0 * sigma2 + (psi.psi1 + frac * (2.0 * psi.psi2 + psi.psi3 + psi.psi4)) * e_w)
}

/// Limit of [`corollary4_error`] as the number of tasks grows, valid for
/// `|h| < 1`; divergence sentinel otherwise.
pub fn limit_error_inf_tasks(
    p: usize,
    p_shared: usize,
    e_w: f64,
    sigma2: f64,
    n: usize,
    k: usize,
) -> Result<f64> {
    if p_shared > p {
        return Err(Error::InvalidParameter(format!("p_shared = {p_shared} exceeds p = {p}")));
    }
    let sc = h_equal(n, p, k)?;
    if sc.h.is_infinite() || sc.h.abs() >= 1.0 - DEGENERACY_MARGIN {
        return Ok(f64::INFINITY);
    }
    let kf = k as f64;
    let frac = (p - p_shared) as f64 / p as f64;
    let contraction = 1.0 / (1.0 - sc.h);
    Ok((1.0 + sc.gamma / kf * contraction) * sigma2 + 2.0 * sc.r / kf * contraction * frac * e_w)
}

/// Monte-Carlo estimate of one expectation identity for standard Gaussian
/// blocks: the identity predicts `theory * I`.
#[derive(Clone, Debug)]
pub struct IdentityEstimate {
    pub name: &'static str,
    pub theory: f64,
    pub mean: Matrix,
}

impl IdentityEstimate {
    pub fn max_diag_rel_err(&self) -> f64 {
        self.mean
            .diagonal()
            .iter()
            .map(|d| (d - self.theory).abs() / self.theory.abs())
            .fold(0.0, f64::max)
    }

    pub fn max_offdiag_abs(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.mean.nrows() {
            for j in 0..self.mean.ncols() {
                if i != j {
                    worst = worst.max(self.mean[(i, j)].abs());
                }
            }
        }
        worst
    }
}

/// Monte-Carlo report of the Gaussian-matrix expectation identities behind
/// the closed forms.
#[derive(Clone, Debug)]
pub struct GaussianIdentityReport {
    pub n: usize,
    pub p_k: usize,
    pub trials: usize,
    /// `E[A^T A] = n I`, `E[A+ A] = r I`, `E[(A A^T)+] = gamma/n I`, and
    /// `E[B^T (A A^T)+ B] = gamma I` for an independent block `B`.
    pub estimates: Vec<IdentityEstimate>,
}

/// Estimate the four Gaussian-matrix identities over `trials` independent
/// draws. Consumes sub-streams `rng.stream_id() + 1 ..` of the given stream;
/// the result is deterministic regardless of worker scheduling.
pub fn gaussian_identity_stats(
    n: usize,
    p_k: usize,
    trials: usize,
    rng: &RngStream,
) -> Result<GaussianIdentityReport> {
    if trials == 0 {
        return Err(Error::InvalidParameter("at least one trial required".into()));
    }
    let c = coeffs(n, p_k);
    if c.divergent() {
        return Err(Error::InvalidParameter(format!(
            "identities are undefined at the interpolation threshold (n = {n}, p_k = {p_k})"
        )));
    }

    // Fixed batching keeps the floating-point summation order independent of
    // worker scheduling: batches are summed internally in trial order and the
    // batch sums are folded sequentially.
    const BATCH: usize = 256;
    let batches = trials.div_ceil(BATCH);
    let zero = || {
        (
            Matrix::zeros(p_k, p_k),
            Matrix::zeros(p_k, p_k),
            Matrix::zeros(n, n),
            Matrix::zeros(p_k, p_k),
        )
    };
    let partials: Vec<_> = (0..batches)
        .into_par_iter()
        .map(|batch| {
            let mut acc = zero();
            let hi = (batch * BATCH + BATCH).min(trials);
            for trial in batch * BATCH..hi {
                let mut stream = rng.substream(rng.stream_id() + 1 + trial as u64);
                let a = matrix::sample_gaussian(n, p_k, &mut stream);
                let b = matrix::sample_gaussian(n, p_k, &mut stream);
                let a_pinv = matrix::pinv(&a, 0.0).expect("pinv of a Gaussian draw");
                let pb = &a_pinv * &b;
                acc.0 += a.transpose() * &a;
                acc.1 += &a_pinv * &a;
                // (A A^T)+ = (A+)^T A+ from the thin SVD.
                acc.2 += a_pinv.transpose() * &a_pinv;
                acc.3 += pb.transpose() * &pb;
            }
            acc
        })
        .collect();
    let (gram, proj, outer, indep) = partials.into_iter().fold(zero(), |mut acc, item| {
        acc.0 += item.0;
        acc.1 += item.1;
        acc.2 += item.2;
        acc.3 += item.3;
        acc
    });

    let scale = 1.0 / trials as f64;
    let estimates = vec![
        IdentityEstimate { name: "gram", theory: n as f64, mean: gram * scale },
        IdentityEstimate { name: "projection", theory: c.r, mean: proj * scale },
        IdentityEstimate { name: "outer_pinv", theory: c.gamma / n as f64, mean: outer * scale },
        IdentityEstimate { name: "independent_quadratic", theory: c.gamma, mean: indep * scale },
    ];
    Ok(GaussianIdentityReport { n, p_k, trials, estimates })
}
