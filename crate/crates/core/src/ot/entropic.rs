//! Entropy-regularized optimal transport solved by Sinkhorn scaling.
//!
//! The regularized plan has the form `diag(u) G diag(v)` with the Gibbs
//! kernel `G_ij = exp(-c_ij / gamma)`. Sinkhorn alternates
//! `u <- p ./ (G v)` and `v <- q ./ (G^T u)` until both marginals match.
//! In log-domain mode the same iteration runs on `log u`, `log v` with
//! log-sum-exp reductions, which stays finite for small `gamma`.
//!
//! All reductions sum in ascending index order so results are bit-identical
//! across runs.

use ndarray::{Array2, ArrayView2};

use super::{check_costs, check_dims, CostMatrix, DiscreteDistribution, TransportPlan};
use crate::error::{Error, Result};

/// Default divisor in `gamma = max(c) / divisor`.
pub const DEFAULT_GAMMA_DIVISOR: f64 = 30.0;

/// Shannon entropy `-sum p_i ln p_i` in nats.
pub fn entropy(p: &DiscreteDistribution) -> f64 {
    -p.weights().iter().map(|&w| w * w.ln()).sum::<f64>()
}

pub fn gibbs_kernel(c: &CostMatrix, gamma: f64) -> Array2<f64> {
    c.entries().mapv(|x| (-x / gamma).exp())
}

/// `max(c) / divisor`, or `None` when the cost matrix is numerically zero
/// and no positive regularization can be derived from it.
pub fn gamma_heuristic(c: &CostMatrix, divisor: f64) -> Option<f64> {
    gamma_of(c.view(), divisor)
}

pub(crate) fn gamma_of(c: ArrayView2<'_, f64>, divisor: f64) -> Option<f64> {
    let max = c.iter().copied().fold(0.0, f64::max);
    (max >= f64::MIN_POSITIVE).then(|| max / divisor)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SinkhornConfig {
    pub gamma: f64,
    /// Bound on the summed L1 violation of both marginals.
    pub tol: f64,
    pub max_iter: usize,
    pub log_domain: bool,
}

impl SinkhornConfig {
    pub fn new(gamma: f64) -> Self {
        SinkhornConfig {
            gamma,
            tol: 1e-9,
            max_iter: 10_000,
            log_domain: true,
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        if !(self.tol > 0.0) {
            return Err(Error::InvalidConfig(format!(
                "tol must be positive, got {}",
                self.tol
            )));
        }
        if self.max_iter == 0 {
            return Err(Error::InvalidConfig("max_iter must be at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SinkhornResult {
    pub plan: TransportPlan,
    /// `ln u`; the scalings themselves may overflow for tiny `gamma`.
    pub log_u: Vec<f64>,
    pub log_v: Vec<f64>,
    pub iterations: usize,
    pub marginal_err: f64,
    /// `sum_ij c_ij pi_ij` for the regularized plan.
    pub reg_cost: f64,
}

impl SinkhornResult {
    pub fn u(&self) -> Vec<f64> {
        self.log_u.iter().map(|x| x.exp()).collect()
    }

    pub fn v(&self) -> Vec<f64> {
        self.log_v.iter().map(|x| x.exp()).collect()
    }
}

pub fn sinkhorn(
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
    c: &CostMatrix,
    cfg: &SinkhornConfig,
) -> Result<SinkhornResult> {
    sinkhorn_slices(p.weights(), q.weights(), c.view(), cfg)
}

pub(crate) fn sinkhorn_slices(
    p: &[f64],
    q: &[f64],
    c: ArrayView2<'_, f64>,
    cfg: &SinkhornConfig,
) -> Result<SinkhornResult> {
    let mut ws = SinkhornWorkspace::default();
    let (iterations, marginal_err) = run_scaling(&mut ws, p, q, c, cfg)?;
    let entries = Array2::from_shape_vec(c.dim(), ws.plan_entries(cfg.log_domain)).expect("n x m");
    let (log_u, log_v) = if cfg.log_domain {
        (ws.a.clone(), ws.b.clone())
    } else {
        (
            ws.a.iter().map(|x| x.ln()).collect(),
            ws.b.iter().map(|x| x.ln()).collect(),
        )
    };
    let mut rounded = entries.clone().into_raw_vec_and_offset().0;
    let c = c.as_standard_layout();
    let c = c.as_slice().expect("standard layout");
    ws.col.resize(q.len(), 0.0);
    let reg_cost = rounded_cost(p, q, c, &mut rounded, &mut ws.col);
    Ok(SinkhornResult {
        plan: TransportPlan::new(entries, p, q),
        log_u,
        log_v,
        iterations,
        marginal_err,
        reg_cost,
    })
}

/// Buffers reused across many small solves. In plain mode `kernel` holds
/// `G` and `a`, `b` the scalings `u`, `v`; in log mode `kernel` holds
/// `-c / gamma` and `a`, `b` hold `ln u`, `ln v`.
#[derive(Debug, Default)]
pub(crate) struct SinkhornWorkspace {
    n: usize,
    m: usize,
    kernel: Vec<f64>,
    /// Plain mode only: `G^T`, row-major, so column products are contiguous.
    kernel_t: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    /// `G b` (plain) or `ln(G e^b)` (log), length n.
    row: Vec<f64>,
    /// `G^T a` (plain) or `ln(G^T e^a)` (log), length m.
    col: Vec<f64>,
    log_p: Vec<f64>,
    log_q: Vec<f64>,
    scratch: Vec<f64>,
    /// Plan entries handed to [`rounded_cost`].
    plan: Vec<f64>,
    /// Batched solves: block indices grouped by shape, `(n - 1) * 4 + m - 1`.
    buckets: Vec<Vec<usize>>,
}

impl SinkhornWorkspace {
    fn reset(&mut self, n: usize, m: usize) {
        self.n = n;
        self.m = m;
        for (buf, len, fill) in [
            (&mut self.a, n, 0.0),
            (&mut self.b, m, 0.0),
            (&mut self.row, n, 0.0),
            (&mut self.col, m, 0.0),
            (&mut self.scratch, n.max(m), 0.0),
        ] {
            buf.clear();
            buf.resize(len, fill);
        }
    }

    fn plan_entry(&self, i: usize, j: usize, log_domain: bool) -> f64 {
        let k = self.kernel[i * self.m + j];
        if log_domain {
            (self.a[i] + k + self.b[j]).exp()
        } else {
            self.a[i] * k * self.b[j]
        }
    }

    fn plan_entries(&self, log_domain: bool) -> Vec<f64> {
        (0..self.n * self.m)
            .map(|cell| self.plan_entry(cell / self.m, cell % self.m, log_domain))
            .collect()
    }
}

/// Runs the scaling iteration; returns (iterations, marginal error).
fn run_scaling(
    ws: &mut SinkhornWorkspace,
    p: &[f64],
    q: &[f64],
    c: ArrayView2<'_, f64>,
    cfg: &SinkhornConfig,
) -> Result<(usize, f64)> {
    cfg.check()?;
    check_dims(p, q, c)?;
    check_costs(c)?;
    let (n, m) = c.dim();
    ws.reset(n, m);
    if cfg.log_domain {
        log_sinkhorn(ws, p, q, c, cfg)
    } else {
        plain_sinkhorn(ws, p, q, c, cfg)
    }
}

/// Plain-mode verdict after an iteration with marginal error `err`. A
/// non-finite scaling always makes `err` non-finite, so only converged
/// scalings need an explicit check, for entries that underflowed to zero.
fn plain_outcome(err: f64, tol: f64, scalings_ok: impl FnOnce() -> bool) -> Option<Result<()>> {
    if !err.is_finite() {
        Some(Err(Error::Numerical("overflow")))
    } else if err <= tol {
        Some(if scalings_ok() {
            Ok(())
        } else {
            Err(Error::Numerical("underflow"))
        })
    } else {
        None
    }
}

fn scalings_ok(u: &[f64], v: &[f64]) -> bool {
    u.iter().chain(v).all(|x| x.is_finite() && *x != 0.0)
}

fn plain_sinkhorn(
    ws: &mut SinkhornWorkspace,
    p: &[f64],
    q: &[f64],
    c: ArrayView2<'_, f64>,
    cfg: &SinkhornConfig,
) -> Result<(usize, f64)> {
    let (n, m) = (ws.n, ws.m);
    let scale = -1.0 / cfg.gamma;
    ws.kernel.clear();
    ws.kernel.extend(c.iter().map(|x| (x * scale).exp()));
    if ws.kernel.contains(&0.0) {
        return Err(Error::Numerical("underflow"));
    }
    ws.kernel_t.clear();
    let kernel = &ws.kernel;
    ws.kernel_t
        .extend((0..m).flat_map(|j| (0..n).map(move |i| kernel[i * m + j])));
    let SinkhornWorkspace {
        kernel,
        kernel_t,
        a: u,
        b: v,
        row: kv,
        col: ktu,
        ..
    } = ws;
    let (u, v, kv, ktu) = (&mut u[..n], &mut v[..m], &mut kv[..n], &mut ktu[..m]);
    v.fill(1.0);
    mat_vec(kernel, m, v, kv);
    let mut err = f64::INFINITY;
    for it in 1..=cfg.max_iter {
        for ((ui, pi), kvi) in u.iter_mut().zip(p).zip(kv.iter()) {
            *ui = pi / kvi;
        }
        mat_vec(kernel_t, n, u, ktu);
        let mut col_err = 0.0;
        for ((vj, qj), ktuj) in v.iter_mut().zip(q).zip(ktu.iter()) {
            *vj = qj / ktuj;
            col_err += (*vj * ktuj - qj).abs();
        }
        mat_vec(kernel, m, v, kv);
        let row_err: f64 = u
            .iter()
            .zip(kv.iter())
            .zip(p)
            .map(|((ui, kvi), pi)| (ui * kvi - pi).abs())
            .sum();
        err = row_err + col_err;
        if let Some(res) = plain_outcome(err, cfg.tol, || scalings_ok(u, v)) {
            return res.map(|()| (it, err));
        }
    }
    Err(Error::NotConverged {
        iterations: cfg.max_iter,
        marginal_err: err,
    })
}

fn log_sinkhorn(
    ws: &mut SinkhornWorkspace,
    p: &[f64],
    q: &[f64],
    c: ArrayView2<'_, f64>,
    cfg: &SinkhornConfig,
) -> Result<(usize, f64)> {
    let (n, m) = (ws.n, ws.m);
    ws.kernel.clear();
    ws.kernel.extend(c.iter().map(|x| -x / cfg.gamma));
    ws.log_p.clear();
    ws.log_p.extend(p.iter().map(|x| x.ln()));
    ws.log_q.clear();
    ws.log_q.extend(q.iter().map(|x| x.ln()));
    let SinkhornWorkspace {
        kernel: log_k,
        a: alpha,
        b: beta,
        row: row_lse,
        col: col_lse,
        log_p,
        log_q,
        scratch,
        ..
    } = ws;
    row_log_sum_exp(log_k, m, beta, row_lse, scratch);
    let mut err = f64::INFINITY;
    for it in 1..=cfg.max_iter {
        for i in 0..n {
            alpha[i] = log_p[i] - row_lse[i];
        }
        col_log_sum_exp(log_k, m, alpha, col_lse, scratch);
        for j in 0..m {
            beta[j] = log_q[j] - col_lse[j];
        }
        row_log_sum_exp(log_k, m, beta, row_lse, scratch);
        let row_err: f64 = (0..n)
            .map(|i| ((alpha[i] + row_lse[i]).exp() - p[i]).abs())
            .sum();
        let col_err: f64 = (0..m)
            .map(|j| ((beta[j] + col_lse[j]).exp() - q[j]).abs())
            .sum();
        err = row_err + col_err;
        if !err.is_finite() {
            return Err(Error::NotConverged {
                iterations: it,
                marginal_err: err,
            });
        }
        if err <= cfg.tol {
            return Ok((it, err));
        }
    }
    Err(Error::NotConverged {
        iterations: cfg.max_iter,
        marginal_err: err,
    })
}

fn mat_vec(k: &[f64], m: usize, v: &[f64], out: &mut [f64]) {
    for (o, row) in out.iter_mut().zip(k.chunks_exact(m)) {
        *o = row.iter().zip(v).map(|(a, b)| a * b).sum();
    }
}

fn lse(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + values.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

fn row_log_sum_exp(log_k: &[f64], m: usize, beta: &[f64], out: &mut [f64], scratch: &mut [f64]) {
    for (o, row) in out.iter_mut().zip(log_k.chunks_exact(m)) {
        for (s, (a, b)) in scratch[..m].iter_mut().zip(row.iter().zip(beta)) {
            *s = a + b;
        }
        *o = lse(&scratch[..m]);
    }
}

fn col_log_sum_exp(log_k: &[f64], m: usize, alpha: &[f64], out: &mut [f64], scratch: &mut [f64]) {
    let n = alpha.len();
    for (j, o) in out.iter_mut().enumerate() {
        for (i, s) in scratch[..n].iter_mut().enumerate() {
            *s = log_k[i * m + j] + alpha[i];
        }
        *o = lse(&scratch[..n]);
    }
}

/// Settings for [`reg_ot`]: `gamma` is derived from the cost matrix.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegOtConfig {
    pub gamma_divisor: f64,
    pub tol: f64,
    /// Defaults to 10^6. Convergence slows down sharply when a partial sum
    /// of `p` nearly equals a partial sum of `q` (the transport polytope is
    /// then close to degenerate); random conditional laws hit this often
    /// enough that 10^4 or 10^5 iterations are not always sufficient.
    pub max_iter: usize,
    pub log_domain: bool,
}

impl Default for RegOtConfig {
    fn default() -> Self {
        RegOtConfig {
            gamma_divisor: DEFAULT_GAMMA_DIVISOR,
            tol: 1e-9,
            max_iter: 1_000_000,
            log_domain: true,
        }
    }
}

impl RegOtConfig {
    pub fn sinkhorn(&self, gamma: f64) -> SinkhornConfig {
        SinkhornConfig {
            gamma,
            tol: self.tol,
            max_iter: self.max_iter,
            log_domain: self.log_domain,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegOt {
    /// Transport cost of the regularized plan.
    pub value: f64,
    pub plan: TransportPlan,
    /// `None` on the zero-cost short circuit.
    pub gamma: Option<f64>,
    pub iterations: usize,
}

/// Regularized transport cost with `gamma = max(c) / gamma_divisor`. A zero
/// cost matrix returns the product coupling at cost 0 without iterating.
pub fn reg_ot(
    p: &DiscreteDistribution,
    q: &DiscreteDistribution,
    c: &CostMatrix,
    cfg: &RegOtConfig,
) -> Result<RegOt> {
    reg_ot_slices(p.weights(), q.weights(), c.view(), cfg)
}

fn check_divisor(cfg: &RegOtConfig) -> Result<()> {
    if !(cfg.gamma_divisor > 0.0 && cfg.gamma_divisor.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "gamma divisor must be positive, got {}",
            cfg.gamma_divisor
        )));
    }
    Ok(())
}

pub(crate) fn reg_ot_slices(
    p: &[f64],
    q: &[f64],
    c: ArrayView2<'_, f64>,
    cfg: &RegOtConfig,
) -> Result<RegOt> {
    check_divisor(cfg)?;
    check_dims(p, q, c)?;
    check_costs(c)?;
    match gamma_of(c, cfg.gamma_divisor) {
        None => {
            let plan = Array2::from_shape_fn(c.dim(), |(i, j)| p[i] * q[j]);
            Ok(RegOt {
                value: 0.0,
                plan: TransportPlan::new(plan, p, q),
                gamma: None,
                iterations: 0,
            })
        }
        Some(gamma) => {
            let res = sinkhorn_slices(p, q, c, &cfg.sinkhorn(gamma))?;
            Ok(RegOt {
                value: res.reg_cost,
                plan: res.plan,
                gamma: Some(gamma),
                iterations: res.iterations,
            })
        }
    }
}

/// [`reg_ot`] value without materializing the plan.
pub(crate) fn reg_ot_value(
    ws: &mut SinkhornWorkspace,
    p: &[f64],
    q: &[f64],
    c: ArrayView2<'_, f64>,
    cfg: &RegOtConfig,
) -> Result<f64> {
    check_divisor(cfg)?;
    let Some(gamma) = gamma_of(c, cfg.gamma_divisor) else {
        check_dims(p, q, c)?;
        check_costs(c)?;
        return Ok(0.0);
    };
    let sk = cfg.sinkhorn(gamma);
    run_scaling(ws, p, q, c, &sk)?;
    let mut plan = std::mem::take(&mut ws.plan);
    plan.clear();
    plan.extend(
        (0..ws.n * ws.m).map(|cell| ws.plan_entry(cell / ws.m, cell % ws.m, sk.log_domain)),
    );
    let c = c.as_standard_layout();
    ws.col.resize(q.len(), 0.0);
    let value = rounded_cost(
        p,
        q,
        c.as_slice().expect("standard layout"),
        &mut plan,
        &mut ws.col,
    );
    ws.plan = plan;
    Ok(value)
}

/// Transport cost of `plan` (row-major) once rounded onto the couplings of
/// `p` and `q`: rows, then columns, are scaled down to their marginal, and
/// the leftover mass is spread as the outer product of the row and column
/// deficits. The rounded plan is exactly feasible, so its cost never drops
/// below the exact optimum, and it differs from the cost of `plan` by at
/// most `max(c)` times the marginal error. Overwrites `plan` and uses
/// `col` (at least `q.len()` long) as scratch.
#[inline(always)]
fn rounded_cost(p: &[f64], q: &[f64], c: &[f64], plan: &mut [f64], col: &mut [f64]) -> f64 {
    let m = q.len();
    let col = &mut col[..m];
    for (row, &pi) in plan.chunks_exact_mut(m).zip(p) {
        let sum: f64 = row.iter().sum();
        if sum > pi {
            let shrink = pi / sum;
            row.iter_mut().for_each(|x| *x *= shrink);
        }
    }
    let col_sums = |plan: &[f64], col: &mut [f64]| {
        col.fill(0.0);
        for row in plan.chunks_exact(m) {
            col.iter_mut().zip(row).for_each(|(s, x)| *s += x);
        }
    };
    col_sums(plan, col);
    for (s, &qj) in col.iter_mut().zip(q) {
        *s = if *s > qj { qj / *s } else { 1.0 };
    }
    for row in plan.chunks_exact_mut(m) {
        row.iter_mut().zip(col.iter()).for_each(|(x, f)| *x *= f);
    }
    col_sums(plan, col);
    col.iter_mut()
        .zip(q)
        .for_each(|(s, &qj)| *s = (qj - *s).max(0.0));
    let (mut base, mut fill, mut deficit) = (0.0, 0.0, 0.0);
    for ((row, c_row), &pi) in plan.chunks_exact(m).zip(c.chunks_exact(m)).zip(p) {
        let row_deficit = (pi - row.iter().sum::<f64>()).max(0.0);
        base += row.iter().zip(c_row).map(|(x, cij)| x * cij).sum::<f64>();
        fill += row_deficit
            * c_row
                .iter()
                .zip(col.iter())
                .map(|(cij, e)| cij * e)
                .sum::<f64>();
        deficit += row_deficit;
    }
    if deficit > 0.0 {
        base + fill / deficit
    } else {
        base
    }
}

/// One subproblem of a batched solve; `c` is the row-major `p.len() x
/// q.len()` cost block.
#[derive(Debug, Clone, Copy)]
pub(crate) struct Block<'a> {
    pub p: &'a [f64],
    pub q: &'a [f64],
    pub c: &'a [f64],
}

impl Block<'_> {
    fn view(&self) -> Result<ArrayView2<'_, f64>> {
        ArrayView2::from_shape((self.p.len(), self.q.len()), self.c)
            .map_err(|_| Error::DimensionMismatch("cost block does not match the weights".into()))
    }

    fn solve(&self, ws: &mut SinkhornWorkspace, cfg: &RegOtConfig) -> Result<f64> {
        self.view()
            .and_then(|c| reg_ot_value(ws, self.p, self.q, c, cfg))
    }

    /// `gamma` when the block can run in a lane: valid costs, a
    /// non-degenerate `gamma` and no kernel underflow. Anything else is
    /// left to [`Block::solve`], which reports it exactly.
    fn lane_gamma(&self, cfg: &RegOtConfig) -> Option<f64> {
        if self.c.len() != self.p.len() * self.q.len() {
            return None;
        }
        let (mut max, mut valid) = (0.0_f64, true);
        for &x in self.c {
            valid &= x.is_finite() && x >= 0.0;
            max = max.max(x);
        }
        if !valid || max < f64::MIN_POSITIVE {
            return None;
        }
        let gamma = max / cfg.gamma_divisor;
        // the smallest kernel entry is exp(-max / gamma)
        (gamma.is_finite() && gamma > 0.0 && (-max / gamma).exp() > 0.0).then_some(gamma)
    }
}

/// Collects batched values, keeping only the lowest-index failure.
struct Sink<'o> {
    out: &'o mut [f64],
    err: Option<(usize, Error)>,
}

impl Sink<'_> {
    fn put(&mut self, idx: usize, res: Result<f64>) {
        match res {
            Ok(v) => self.out[idx] = v,
            Err(e) => {
                if self.err.as_ref().is_none_or(|(first, _)| idx < *first) {
                    self.err = Some((idx, e));
                }
            }
        }
    }
}

/// Subproblems solved side by side in one batch.
const LANES: usize = 4;

/// [`reg_ot_value`] for many independent blocks, written to `out` in order.
/// On failure, returns the lowest failing index with its error.
///
/// In plain mode, blocks whose sides are at most 4 run in lockstep across
/// [`LANES`] lanes, and a lane is refilled as soon as its block converges.
/// Each scaling iteration is a short chain of dependent divisions and dot
/// products, so interleaving independent problems hides that latency.
/// Blocks are zero-padded to a common side with zero weights, zero
/// scalings and unit kernel entries. Every padded term therefore adds an
/// exact `+0.0` after the real terms, and each value is bit-identical to a
/// separate solve.
pub(crate) fn reg_ot_values(
    ws: &mut SinkhornWorkspace,
    blocks: &[Block<'_>],
    cfg: &RegOtConfig,
    out: &mut Vec<f64>,
) -> std::result::Result<(), (usize, Error)> {
    out.clear();
    out.resize(blocks.len(), f64::NAN);
    let mut sink = Sink { out, err: None };
    // per-block gamma validity is checked in `lane_gamma`
    let batched =
        !cfg.log_domain && check_divisor(cfg).is_ok() && cfg.sinkhorn(1.0).check().is_ok();
    let mut buckets = std::mem::take(&mut ws.buckets);
    buckets.resize_with(16, Vec::new);
    buckets.iter_mut().for_each(Vec::clear);
    for (idx, block) in blocks.iter().enumerate() {
        let (n, m) = (block.p.len(), block.q.len());
        if batched && (1..=4).contains(&n) && (1..=4).contains(&m) {
            buckets[(n - 1) * 4 + m - 1].push(idx);
        } else {
            sink.put(idx, block.solve(ws, cfg));
        }
    }
    macro_rules! lanes {
        ($(($n:literal, $m:literal)),*) => {$(
            let shaped = &buckets[($n - 1) * 4 + $m - 1];
            if !shaped.is_empty() {
                Lanes::<$n, $m>::run(ws, blocks, shaped, cfg, &mut sink);
            }
        )*};
    }
    lanes!(
        (1, 1),
        (1, 2),
        (1, 3),
        (1, 4),
        (2, 1),
        (2, 2),
        (2, 3),
        (2, 4),
        (3, 1),
        (3, 2),
        (3, 3),
        (3, 4),
        (4, 1),
        (4, 2),
        (4, 3),
        (4, 4)
    );
    ws.buckets = buckets;
    sink.err.map_or(Ok(()), Err)
}

type Lane<T> = [T; LANES];

/// Scaling state of up to [`LANES`] blocks of shape `N x M`; the lane
/// index is innermost so updates vectorize across lanes. A lane whose block
/// has finished keeps iterating harmlessly at its converged fixed point.
struct Lanes<const N: usize, const M: usize> {
    k: [[Lane<f64>; M]; N],
    c: [[Lane<f64>; M]; N],
    p: [Lane<f64>; N],
    q: [Lane<f64>; M],
    u: [Lane<f64>; N],
    v: [Lane<f64>; M],
    kv: [Lane<f64>; N],
    item: Lane<Option<usize>>,
    iters: Lane<usize>,
}

// Lane loops index several parallel arrays at once and vectorize as written.
#[allow(clippy::needless_range_loop, clippy::manual_memcpy)]
impl<const N: usize, const M: usize> Lanes<N, M> {
    /// Every lane on a unit problem that stays finite while idle.
    fn idle() -> Self {
        Lanes {
            k: [[[1.0; LANES]; M]; N],
            c: [[[0.0; LANES]; M]; N],
            p: [[1.0; LANES]; N],
            q: [[1.0; LANES]; M],
            u: [[1.0; LANES]; N],
            v: [[1.0; LANES]; M],
            kv: [[M as f64; LANES]; N],
            item: [None; LANES],
            iters: [0; LANES],
        }
    }

    fn run(
        ws: &mut SinkhornWorkspace,
        blocks: &[Block<'_>],
        queue: &[usize],
        cfg: &RegOtConfig,
        sink: &mut Sink<'_>,
    ) {
        let mut lanes = Self::idle();
        let mut queue = queue.iter();
        let mut refill = |lanes: &mut Self, l: usize, sink: &mut Sink<'_>| {
            lanes.item[l] = None;
            for &idx in queue.by_ref() {
                match blocks[idx].lane_gamma(cfg) {
                    Some(gamma) => return lanes.load(l, idx, &blocks[idx], gamma),
                    None => sink.put(idx, blocks[idx].solve(ws, cfg)),
                }
            }
        };
        for l in 0..LANES {
            refill(&mut lanes, l, sink);
        }
        let mut err = [0.0; LANES];
        while lanes.item.iter().any(Option::is_some) {
            lanes.step(&mut err);
            let mut finished = false;
            for l in 0..LANES {
                lanes.iters[l] += 1;
                let active = lanes.item[l].is_some();
                // `!(err > tol)` also catches a NaN error
                finished |= active & (!(err[l] > cfg.tol) | (lanes.iters[l] >= cfg.max_iter));
            }
            if !finished {
                continue;
            }
            for l in 0..LANES {
                let Some(idx) = lanes.item[l] else { continue };
                let done = match plain_outcome(err[l], cfg.tol, || lanes.scalings_ok(l)) {
                    Some(res) => res.map(|()| lanes.value(l)),
                    None if lanes.iters[l] >= cfg.max_iter => Err(Error::NotConverged {
                        iterations: cfg.max_iter,
                        marginal_err: err[l],
                    }),
                    None => continue,
                };
                sink.put(idx, done);
                refill(&mut lanes, l, sink);
            }
        }
    }

    fn load(&mut self, l: usize, idx: usize, b: &Block<'_>, gamma: f64) {
        let scale = -1.0 / gamma;
        for i in 0..N {
            self.p[i][l] = b.p[i];
            for j in 0..M {
                self.c[i][j][l] = b.c[i * M + j];
                self.k[i][j][l] = (b.c[i * M + j] * scale).exp();
            }
        }
        for j in 0..M {
            self.q[j][l] = b.q[j];
            self.v[j][l] = 1.0;
        }
        for i in 0..N {
            let mut acc = 0.0;
            for j in 0..M {
                acc += self.k[i][j][l] * self.v[j][l];
            }
            self.kv[i][l] = acc;
        }
        self.iters[l] = 0;
        self.item[l] = Some(idx);
    }

    fn scalings_ok(&self, l: usize) -> bool {
        let u = self.u.map(|x| x[l]);
        let v = self.v.map(|x| x[l]);
        scalings_ok(&u, &v)
    }

    #[inline(never)]
    fn step(&mut self, err: &mut Lane<f64>) {
        for i in 0..N {
            for l in 0..LANES {
                self.u[i][l] = self.p[i][l] / self.kv[i][l];
            }
        }
        let mut col_err = [0.0; LANES];
        for j in 0..M {
            let mut ktu = [0.0; LANES];
            for i in 0..N {
                for l in 0..LANES {
                    ktu[l] += self.k[i][j][l] * self.u[i][l];
                }
            }
            for l in 0..LANES {
                let v = self.q[j][l] / ktu[l];
                self.v[j][l] = v;
                col_err[l] += (v * ktu[l] - self.q[j][l]).abs();
            }
        }
        let mut row_err = [0.0; LANES];
        for i in 0..N {
            let mut kv = [0.0; LANES];
            for j in 0..M {
                for l in 0..LANES {
                    kv[l] += self.k[i][j][l] * self.v[j][l];
                }
            }
            for l in 0..LANES {
                self.kv[i][l] = kv[l];
                row_err[l] += (self.u[i][l] * kv[l] - self.p[i][l]).abs();
            }
        }
        for l in 0..LANES {
            err[l] = row_err[l] + col_err[l];
        }
    }

    /// Same entries and arithmetic as [`reg_ot_value`] on one lane.
    fn value(&self, l: usize) -> f64 {
        let mut plan = [[0.0; M]; N];
        let mut c = [[0.0; M]; N];
        for i in 0..N {
            for j in 0..M {
                plan[i][j] = self.u[i][l] * self.k[i][j][l] * self.v[j][l];
                c[i][j] = self.c[i][j][l];
            }
        }
        let p = self.p.map(|x| x[l]);
        let q = self.q.map(|x| x[l]);
        rounded_cost(
            &p,
            &q,
            c.as_flattened(),
            plan.as_flattened_mut(),
            &mut [0.0; M],
        )
    }
}
