//! Shrinkage-regularized entropy, conditional mutual information and
//! directed information over symbol sequences.
//!
//! All quantities are in nats. Every information term is computed from one
//! joint histogram: the joint is shrunk once toward the uniform distribution
//! over its product alphabet, and every entropy in the term is taken from a
//! marginal of that shrunk joint. Because the uniform target marginalizes to a
//! uniform target, the marginal of the shrunk joint is the shrinkage of the
//! marginal counts with the same coefficient, which keeps everything sparse.
//!
//! Temporal conditioning is truncated to a Markov order `k`: step `m` of the
//! directed information from `X` to `Y` is
//! `I(X[m-k..=m]; Y[m] | Y[m-k..m])`, with a shorter past for `m < k`.
//! Realizations are paired across frames and sequences by index.

pub mod exact;

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::SymbolSequence;
use crate::quantizer::{joint_histogram, JointHistogram};

/// Largest product alphabet for which dense targets are allowed.
const MAX_DENSE_CELLS: u128 = 1 << 24;
const CV_FOLDS: usize = 10;

#[derive(Clone, Debug, PartialEq, Default)]
pub enum Target {
    #[default]
    Uniform,
    /// Explicit target pmf over all cells, in histogram key order.
    Custom(Vec<f64>),
}

impl Target {
    fn check(&self, h: &JointHistogram) -> Result<()> {
        if let Target::Custom(t) = self {
            if h.cells() > MAX_DENSE_CELLS || t.len() as u128 != h.cells() {
                return Err(Error::LengthMismatch(format!(
                    "target of length {} for {} cells",
                    t.len(),
                    h.cells()
                )));
            }
            let sum: f64 = t.iter().sum();
            if t.iter().any(|&x| !(x >= 0.0)) || (sum - 1.0).abs() > 1e-9 {
                return Err(Error::InvalidPmf("shrinkage target must be a pmf".into()));
            }
        }
        Ok(())
    }
}

/// How the shrinkage coefficient of each histogram is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaPolicy {
    /// Closed-form estimate of the MSE-optimal coefficient.
    #[default]
    ClosedForm,
    /// 10-fold cross-validated grid search over `{0, 0.05, .., 1}` minimizing
    /// held-out negative log-likelihood.
    Grid,
    /// A fixed coefficient; `Fixed(0.0)` is the maximum-likelihood plug-in.
    Fixed(f64),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LambdaEstimate {
    pub lambda: f64,
    /// The empirical pmf equals the target; lambda is set to 1 by convention.
    pub zero_variance: bool,
}

/// Closed-form shrinkage coefficient
/// `(1 - sum theta^2) / ((n - 1) * sum (t - theta)^2)`, clipped to `[0, 1]`.
pub fn shrinkage_lambda(h: &JointHistogram, target: &Target) -> Result<LambdaEstimate> {
    let n = h.total();
    if n < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: n as usize,
        });
    }
    target.check(h)?;
    let nf = n as f64;
    let sum_sq_counts: u128 = h.entries().iter().map(|&(_, c)| u128::from(c) * u128::from(c)).sum();
    let sum_sq = sum_sq_counts as f64 / (nf * nf);
    let (msp, zero) = match target {
        Target::Uniform => {
            // sum_k (1/C - theta_k)^2 = sum theta^2 - 1/C; zero iff C * sum c^2 == n^2.
            let cells = h.cells();
            let n2 = u128::from(n) * u128::from(n);
            let zero = cells.checked_mul(sum_sq_counts) == Some(n2);
            (sum_sq - 1.0 / cells as f64, zero)
        }
        Target::Custom(t) => {
            let mut theta = vec![0.0; t.len()];
            for &(k, c) in h.entries() {
                theta[k as usize] = c as f64 / nf;
            }
            let msp: f64 = t.iter().zip(&theta).map(|(a, b)| (a - b) * (a - b)).sum();
            (msp, msp == 0.0)
        }
    };
    if zero || msp <= 0.0 {
        return Ok(LambdaEstimate {
            lambda: 1.0,
            zero_variance: true,
        });
    }
    let lambda = ((1.0 - sum_sq) / ((nf - 1.0) * msp)).clamp(0.0, 1.0);
    Ok(LambdaEstimate {
        lambda,
        zero_variance: false,
    })
}

/// Shrunk multinomial estimate `lambda * t + (1 - lambda) * theta_ml`.
#[derive(Clone, Debug, PartialEq)]
pub struct MultinomialEstimate {
    pub hist: JointHistogram,
    pub target: Target,
    pub lambda: f64,
}

impl MultinomialEstimate {
    pub fn n(&self) -> u64 {
        self.hist.total()
    }

    fn target_at(&self, key: u128) -> f64 {
        match &self.target {
            Target::Uniform => 1.0 / self.hist.cells() as f64,
            Target::Custom(t) => t[key as usize],
        }
    }

    pub fn theta_ml(&self, cell: &[u32]) -> f64 {
        self.hist.count(cell) as f64 / self.n() as f64
    }

    pub fn theta_shrunk(&self, cell: &[u32]) -> f64 {
        let key = cell
            .iter()
            .zip(self.hist.dims())
            .fold(0u128, |acc, (&s, &d)| acc * u128::from(d) + u128::from(s));
        self.lambda * self.target_at(key) + (1.0 - self.lambda) * self.theta_ml(cell)
    }

    /// Dense shrunk pmf in key order. Only for small alphabets.
    pub fn theta_shrunk_dense(&self) -> Result<Vec<f64>> {
        let cells = self.hist.cells();
        if cells > MAX_DENSE_CELLS {
            return Err(Error::StateSpaceTooLarge {
                size: cells as f64,
                limit: MAX_DENSE_CELLS as f64,
            });
        }
        let n = self.n() as f64;
        let mut out: Vec<f64> = (0..cells).map(|k| self.lambda * self.target_at(k)).collect();
        for &(k, c) in self.hist.entries() {
            out[k as usize] += (1.0 - self.lambda) * c as f64 / n;
        }
        Ok(out)
    }

    pub fn entropy(&self) -> f64 {
        match &self.target {
            Target::Uniform => uniform_shrunk_entropy(&self.hist, self.lambda),
            Target::Custom(_) => self
                .theta_shrunk_dense()
                .expect("custom targets are dense")
                .iter()
                .map(|&p| plogp(p))
                .sum(),
        }
    }
}

fn plogp(p: f64) -> f64 {
    if p > 0.0 {
        -p * p.ln()
    } else {
        0.0
    }
}

/// Entropy of `lambda * uniform + (1 - lambda) * counts / n` without
/// materializing empty cells.
fn uniform_shrunk_entropy(h: &JointHistogram, lambda: f64) -> f64 {
    let n = h.total() as f64;
    let cells = h.cells();
    let t = 1.0 / cells as f64;
    let mut acc = 0.0;
    for &(_, c) in h.entries() {
        acc += plogp(lambda * t + (1.0 - lambda) * c as f64 / n);
    }
    let empty = cells - h.occupied() as u128;
    if lambda > 0.0 && empty > 0 {
        let p0 = lambda * t;
        acc += (empty as f64) * plogp(p0);
    }
    acc
}

pub fn shrink(h: &JointHistogram, lambda: f64, target: &Target) -> Result<MultinomialEstimate> {
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidConfig(format!("lambda {lambda} outside [0, 1]")));
    }
    if h.total() == 0 {
        return Err(Error::EmptyHistogram);
    }
    target.check(h)?;
    Ok(MultinomialEstimate {
        hist: h.clone(),
        target: target.clone(),
        lambda,
    })
}

/// Plug-in entropy of a shrunk estimate, `-sum theta ln theta`.
pub fn entropy(est: &MultinomialEstimate) -> f64 {
    est.entropy()
}

/// Shrinkage coefficient for a histogram under a policy (uniform target).
pub fn choose_lambda(h: &JointHistogram, policy: LambdaPolicy) -> Result<f64> {
    match policy {
        LambdaPolicy::Fixed(l) => {
            if (0.0..=1.0).contains(&l) {
                Ok(l)
            } else {
                Err(Error::InvalidConfig(format!("lambda {l} outside [0, 1]")))
            }
        }
        LambdaPolicy::ClosedForm => {
            if h.total() < 2 {
                // A single realization carries no dispersion information.
                return Ok(1.0);
            }
            Ok(shrinkage_lambda(h, &Target::Uniform)?.lambda)
        }
        LambdaPolicy::Grid => Ok(cross_validated_lambda(h)),
    }
}

/// Held-out negative log-likelihood over deterministic folds: realizations
/// are expanded in cell-key order and dealt round-robin into folds.
fn cross_validated_lambda(h: &JointHistogram) -> f64 {
    let n = h.total() as usize;
    let folds = CV_FOLDS.min(n);
    if folds < 2 {
        return 1.0;
    }
    let cells = h.cells() as f64;
    // For each fold: (count of this cell in fold, count of the cell overall).
    let mut per_fold: Vec<Vec<(u64, u64)>> = vec![Vec::new(); folds];
    let mut fold_sizes = vec![0u64; folds];
    let mut pos = 0usize;
    for &(_, c) in h.entries() {
        let mut in_fold = vec![0u64; folds];
        for i in pos..pos + c as usize {
            in_fold[i % folds] += 1;
        }
        pos += c as usize;
        for f in 0..folds {
            if in_fold[f] > 0 {
                per_fold[f].push((in_fold[f], c));
                fold_sizes[f] += in_fold[f];
            }
        }
    }
    let mut best = (f64::INFINITY, 1.0);
    for step in 0..=20 {
        let lambda = step as f64 * 0.05;
        let mut nll = 0.0;
        for f in 0..folds {
            let n_train = (n as u64 - fold_sizes[f]) as f64;
            for &(test, total) in &per_fold[f] {
                let train = (total - test) as f64;
                let theta = lambda / cells + (1.0 - lambda) * train / n_train;
                nll -= test as f64 * theta.ln();
            }
        }
        if nll < best.0 {
            best = (nll, lambda);
        }
    }
    best.1
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CmiValue {
    pub value: f64,
    pub lambda: f64,
}

/// `I(A; B | C)` from one joint histogram: the joint over `A, B, C` is shrunk
/// once and `H(A,C) + H(B,C) - H(A,B,C) - H(C)` is evaluated on marginals of
/// the shrunk joint. An empty `c` gives plain mutual information.
pub fn cond_mutual_info(
    joint: &JointHistogram,
    a: &[usize],
    b: &[usize],
    c: &[usize],
    policy: LambdaPolicy,
) -> Result<CmiValue> {
    if joint.total() == 0 {
        return Err(Error::EmptyHistogram);
    }
    let rank = joint.dims().len();
    let mut all: Vec<usize> = a.iter().chain(b).chain(c).copied().collect();
    let mut seen = all.clone();
    seen.sort_unstable();
    seen.dedup();
    if seen.len() != all.len() || seen.iter().any(|&x| x >= rank) || a.is_empty() || b.is_empty() {
        return Err(Error::InvalidSpec(
            "axis groups must be disjoint, in range, with A and B non-empty".into(),
        ));
    }
    let joint = if all.len() == rank && all.iter().enumerate().all(|(i, &x)| i == x) {
        joint.clone()
    } else {
        let m = joint.marginal(&all);
        all = (0..all.len()).collect();
        m
    };
    let (ga, rest) = all.split_at(a.len());
    let (gb, gc) = rest.split_at(b.len());
    let lambda = choose_lambda(&joint, policy)?;
    let h = |axes: Vec<usize>| -> f64 {
        if axes.is_empty() {
            return 0.0;
        }
        uniform_shrunk_entropy(&joint.marginal(&axes), lambda)
    };
    let ac: Vec<usize> = ga.iter().chain(gc).copied().collect();
    let bc: Vec<usize> = gb.iter().chain(gc).copied().collect();
    let h_abc = uniform_shrunk_entropy(&joint, lambda);
    let value = h(ac) + h(bc) - h_abc - h(gc.to_vec());
    Ok(CmiValue { value, lambda })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiOptions {
    pub order_k: usize,
    pub lambda: LambdaPolicy,
}

impl Default for DiOptions {
    fn default() -> Self {
        DiOptions {
            order_k: 1,
            lambda: LambdaPolicy::ClosedForm,
        }
    }
}

impl DiOptions {
    pub fn with_order(order_k: usize) -> Self {
        DiOptions {
            order_k,
            ..DiOptions::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DiResult {
    pub value: f64,
    pub per_step: Vec<f64>,
    pub order_k: usize,
    pub lambdas: Vec<f64>,
}

fn check_pair(x: &SymbolSequence, y: &SymbolSequence) -> Result<usize> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::EmptySequence);
    }
    if x.n != y.n {
        return Err(Error::LengthMismatch(format!(
            "sequences have {} and {} realizations per frame",
            x.n, y.n
        )));
    }
    if x.n == 0 {
        return Err(Error::EmptyHistogram);
    }
    Ok(x.len().min(y.len()))
}

/// One directed-information term. `x_rows` holds the past and current rows
/// of `X`, `y_rows` the past and current rows of `Y`, oldest first; both have
/// the same length.
pub(crate) fn di_step(
    x_rows: &[&[u32]],
    y_rows: &[&[u32]],
    px: u32,
    py: u32,
    policy: LambdaPolicy,
) -> Result<CmiValue> {
    let past = y_rows.len() - 1;
    let mut rows: Vec<&[u32]> = Vec::with_capacity(x_rows.len() + y_rows.len());
    rows.extend_from_slice(x_rows);
    rows.push(y_rows[past]);
    rows.extend_from_slice(&y_rows[..past]);
    let mut dims = vec![px; x_rows.len()];
    dims.push(py);
    dims.extend(std::iter::repeat_n(py, past));
    let joint = joint_histogram(&rows, &dims)?;
    let a: Vec<usize> = (0..x_rows.len()).collect();
    let b = [x_rows.len()];
    let c: Vec<usize> = (x_rows.len() + 1..rows.len()).collect();
    cond_mutual_info(&joint, &a, &b, &c, policy)
}

fn rows_of(s: &SymbolSequence, from: usize, to_inclusive: usize) -> Vec<&[u32]> {
    (from..=to_inclusive).map(|m| s.frames[m].as_slice()).collect()
}

/// Directed information from `x` into `y`, truncated to Markov order `k`.
pub fn directed_information(
    x: &SymbolSequence,
    y: &SymbolSequence,
    opts: &DiOptions,
) -> Result<DiResult> {
    let m_len = check_pair(x, y)?;
    let k = opts.order_k;
    let mut per_step = Vec::with_capacity(m_len);
    let mut lambdas = Vec::with_capacity(m_len);
    for m in 0..m_len {
        let past = k.min(m);
        let v = di_step(
            &rows_of(x, m - past, m),
            &rows_of(y, m - past, m),
            x.p,
            y.p,
            opts.lambda,
        )?;
        per_step.push(v.value);
        lambdas.push(v.lambda);
    }
    let value = per_step.iter().sum();
    Ok(DiResult {
        value,
        per_step,
        order_k: k,
        lambdas,
    })
}

/// Directed information from the one-step-delayed `x` into `y`:
/// `sum_m I(X[m-k..m]; Y[m] | Y[m-k..m])`. Steps without any `x` past
/// contribute zero.
pub fn delayed_directed_information(
    x: &SymbolSequence,
    y: &SymbolSequence,
    opts: &DiOptions,
) -> Result<DiResult> {
    let m_len = check_pair(x, y)?;
    let k = opts.order_k;
    let mut per_step = Vec::with_capacity(m_len);
    let mut lambdas = Vec::with_capacity(m_len);
    for m in 0..m_len {
        let past = k.min(m);
        if past == 0 {
            per_step.push(0.0);
            lambdas.push(0.0);
            continue;
        }
        let mut rows = rows_of(x, m - past, m - 1);
        let nx = rows.len();
        rows.push(y.frames[m].as_slice());
        rows.extend(rows_of(y, m - past, m - 1));
        let mut dims = vec![x.p; nx];
        dims.push(y.p);
        dims.extend(std::iter::repeat_n(y.p, past));
        let joint = joint_histogram(&rows, &dims)?;
        let a: Vec<usize> = (0..nx).collect();
        let c: Vec<usize> = (nx + 1..rows.len()).collect();
        let v = cond_mutual_info(&joint, &a, &[nx], &c, opts.lambda)?;
        per_step.push(v.value);
        lambdas.push(v.lambda);
    }
    let value = per_step.iter().sum();
    Ok(DiResult {
        value,
        per_step,
        order_k: k,
        lambdas,
    })
}

fn content_cmp(a: &SymbolSequence, b: &SymbolSequence) -> Ordering {
    (a.p, a.n, &a.frames).cmp(&(b.p, b.n, &b.frames))
}

/// Order-`k` surrogate of `I(X^M; Y^M)`:
/// `sum_m H(X_m | X_past) + H(Y_m | Y_past) - H(X_m, Y_m | X_past, Y_past)`,
/// each step from one shrunk joint. Symmetric in its arguments bit-for-bit.
pub fn mutual_information(x: &SymbolSequence, y: &SymbolSequence, opts: &DiOptions) -> Result<f64> {
    let m_len = check_pair(x, y)?;
    let (x, y) = if content_cmp(x, y) == Ordering::Greater {
        (y, x)
    } else {
        (x, y)
    };
    let k = opts.order_k;
    let mut total = 0.0;
    for m in 0..m_len {
        let past = k.min(m);
        let mut rows = rows_of(x, m - past, m);
        rows.extend(rows_of(y, m - past, m));
        let mut dims = vec![x.p; past + 1];
        dims.extend(std::iter::repeat_n(y.p, past + 1));
        let joint = joint_histogram(&rows, &dims)?;
        let lambda = choose_lambda(&joint, opts.lambda)?;
        let h = |axes: Vec<usize>| -> f64 {
            if axes.is_empty() {
                0.0
            } else {
                uniform_shrunk_entropy(&joint.marginal(&axes), lambda)
            }
        };
        let xp: Vec<usize> = (0..past).collect();
        let yp: Vec<usize> = (past + 1..2 * past + 1).collect();
        let x_all: Vec<usize> = (0..=past).collect();
        let y_all: Vec<usize> = (past + 1..2 * past + 2).collect();
        let both_past: Vec<usize> = xp.iter().chain(&yp).copied().collect();
        let hx = h(x_all) - h(xp);
        let hy = h(y_all) - h(yp);
        let hxy = uniform_shrunk_entropy(&joint, lambda) - h(both_past);
        total += (hx + hy) - hxy;
    }
    Ok(total)
}

/// `DI(x -> y) + DI(y -> x)`.
pub fn symmetrized_di(x: &SymbolSequence, y: &SymbolSequence, opts: &DiOptions) -> Result<f64> {
    let f = directed_information(x, y, opts)?.value;
    let r = directed_information(y, x, opts)?.value;
    Ok(f + r)
}
