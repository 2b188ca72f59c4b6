//! Closed-form information quantities for small explicit processes.
//!
//! A [`ProcessSpec`] is a joint pmf over `(X_1..X_M, Y_1..Y_M)`, every
//! variable on the same alphabet of `p` symbols. States are indexed in
//! mixed radix with `X_1` most significant and `Y_M` least significant.

use rand::Rng;

use crate::error::{Error, Result};
use crate::ingest::SymbolSequence;
use crate::rng::stream;

pub const MAX_STATES: usize = 10_000_000;

#[derive(Clone, Debug, PartialEq)]
pub struct ProcessSpec {
    p: u32,
    m: usize,
    pmf: Vec<f64>,
}

/// Which directed quantity [`exact_di`] evaluates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    /// `sum_m I(X^m; Y_m | Y^{m-1})`
    XtoY,
    /// `sum_m I(Y^m; X_m | X^{m-1})`
    YtoX,
    /// `sum_m I(X^{m-1}; Y_m | Y^{m-1})`
    DelayedXtoY,
    /// `sum_m I(Y^{m-1}; X_m | X^{m-1})`
    DelayedYtoX,
}

fn state_count(p: u32, m: usize) -> Result<usize> {
    let size = (p as f64).powi(2 * m as i32);
    if p == 0 || m == 0 {
        return Err(Error::InvalidSpec("process needs p >= 1 and M >= 1".into()));
    }
    if size > MAX_STATES as f64 {
        return Err(Error::StateSpaceTooLarge {
            size,
            limit: MAX_STATES as f64,
        });
    }
    Ok((p as usize).pow(2 * m as u32))
}

impl ProcessSpec {
    pub fn new(p: u32, m: usize, pmf: Vec<f64>) -> Result<Self> {
        let states = state_count(p, m)?;
        if pmf.len() != states {
            return Err(Error::InvalidPmf(format!(
                "{} probabilities for {states} states",
                pmf.len()
            )));
        }
        if pmf.iter().any(|&q| !(q >= 0.0) || !q.is_finite()) {
            return Err(Error::InvalidPmf("negative or non-finite probability".into()));
        }
        let sum: f64 = pmf.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidPmf(format!("probabilities sum to {sum}")));
        }
        Ok(ProcessSpec { p, m, pmf })
    }

    /// Build from an unnormalized weight function of `(xs, ys)`.
    pub fn from_fn(p: u32, m: usize, mut weight: impl FnMut(&[u32], &[u32]) -> f64) -> Result<Self> {
        let states = state_count(p, m)?;
        let mut pmf = Vec::with_capacity(states);
        let mut digits = vec![0u32; 2 * m];
        for s in 0..states {
            decode(s, p, &mut digits);
            pmf.push(weight(&digits[..m], &digits[m..]));
        }
        let total: f64 = pmf.iter().sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidPmf("weights do not normalize".into()));
        }
        pmf.iter_mut().for_each(|q| *q /= total);
        ProcessSpec::new(p, m, pmf)
    }

    /// A random pmf with i.i.d. exponential weights.
    pub fn random(p: u32, m: usize, seed: u64) -> Result<Self> {
        let mut rng = stream(seed, 0);
        ProcessSpec::from_fn(p, m, |_, _| -rng.random::<f64>().max(f64::MIN_POSITIVE).ln())
    }

    pub fn p(&self) -> u32 {
        self.p
    }

    pub fn frames(&self) -> usize {
        self.m
    }

    pub fn pmf(&self) -> &[f64] {
        &self.pmf
    }

    /// Entropy of the marginal over variables `vars`, where `0..M` are
    /// `X_1..X_M` and `M..2M` are `Y_1..Y_M`.
    pub fn entropy(&self, vars: &[usize]) -> f64 {
        if vars.is_empty() {
            return 0.0;
        }
        let p = self.p as usize;
        let total = 2 * self.m;
        let mut strides = vec![0usize; total];
        let mut acc = 1;
        for v in (0..total).rev() {
            strides[v] = acc;
            acc *= p;
        }
        let mut marg = vec![0.0; p.pow(vars.len() as u32)];
        for (s, &q) in self.pmf.iter().enumerate() {
            if q == 0.0 {
                continue;
            }
            let idx = vars.iter().fold(0usize, |a, &v| a * p + (s / strides[v]) % p);
            marg[idx] += q;
        }
        marg.iter().filter(|&&q| q > 0.0).map(|&q| -q * q.ln()).sum()
    }

    fn cmi(&self, a: &[usize], b: &[usize], c: &[usize]) -> f64 {
        let join = |u: &[usize], v: &[usize]| -> Vec<usize> { u.iter().chain(v).copied().collect() };
        self.entropy(&join(a, c)) + self.entropy(&join(b, c))
            - self.entropy(&join(&join(a, b), c))
            - self.entropy(c)
    }

    /// Draw `n` i.i.d. realizations of the process as a pair of symbol
    /// sequences paired by realization index.
    pub fn sample(&self, n: usize, seed: u64) -> Result<(SymbolSequence, SymbolSequence)> {
        let mut cdf = Vec::with_capacity(self.pmf.len());
        let mut acc = 0.0;
        for &q in &self.pmf {
            acc += q;
            cdf.push(acc);
        }
        let mut rng = stream(seed, 1);
        let states: Vec<usize> = (0..n)
            .map(|_| {
                let u = rng.random::<f64>() * acc;
                cdf.partition_point(|&c| c <= u).min(cdf.len() - 1)
            })
            .collect();
        self.sequences_from_states(&states)
    }

    /// Realizations whose empirical distribution matches the pmf as closely
    /// as `n` allows: state counts are `n * pmf` rounded by largest
    /// remainder, listed in state order.
    pub fn proportional(&self, n: usize) -> Result<(SymbolSequence, SymbolSequence)> {
        let counts = largest_remainder(&self.pmf, n);
        let mut states = Vec::with_capacity(n);
        for (s, &c) in counts.iter().enumerate() {
            states.extend(std::iter::repeat_n(s, c));
        }
        self.sequences_from_states(&states)
    }

    fn sequences_from_states(&self, states: &[usize]) -> Result<(SymbolSequence, SymbolSequence)> {
        let m = self.m;
        let mut xs = vec![Vec::with_capacity(states.len()); m];
        let mut ys = vec![Vec::with_capacity(states.len()); m];
        let mut digits = vec![0u32; 2 * m];
        for &s in states {
            decode(s, self.p, &mut digits);
            for t in 0..m {
                xs[t].push(digits[t]);
                ys[t].push(digits[m + t]);
            }
        }
        Ok((
            SymbolSequence::new("x", None, self.p, xs)?,
            SymbolSequence::new("y", None, self.p, ys)?,
        ))
    }
}

fn decode(mut s: usize, p: u32, digits: &mut [u32]) {
    for d in digits.iter_mut().rev() {
        *d = (s % p as usize) as u32;
        s /= p as usize;
    }
}

/// Integer counts summing to `n`, proportional to `weights`.
pub fn largest_remainder(weights: &[f64], n: usize) -> Vec<usize> {
    let total: f64 = weights.iter().sum();
    let exact: Vec<f64> = weights.iter().map(|w| w / total * n as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let assigned: usize = counts.iter().sum();
    let mut order: Vec<usize> = (0..weights.len()).collect();
    order.sort_by(|&a, &b| {
        let ra = exact[a] - exact[a].floor();
        let rb = exact[b] - exact[b].floor();
        rb.total_cmp(&ra).then(a.cmp(&b))
    });
    for &i in order.iter().take(n.saturating_sub(assigned)) {
        counts[i] += 1;
    }
    counts
}

/// Exact directed information of a process in the requested direction.
pub fn exact_di(spec: &ProcessSpec, direction: Direction) -> f64 {
    let m = spec.m;
    let xs = |upto: usize| -> Vec<usize> { (0..upto).collect() };
    let ys = |upto: usize| -> Vec<usize> { (m..m + upto).collect() };
    (1..=m)
        .map(|t| match direction {
            Direction::XtoY => spec.cmi(&xs(t), &[m + t - 1], &ys(t - 1)),
            Direction::YtoX => spec.cmi(&ys(t), &[t - 1], &xs(t - 1)),
            Direction::DelayedXtoY => spec.cmi(&xs(t - 1), &[m + t - 1], &ys(t - 1)),
            Direction::DelayedYtoX => spec.cmi(&ys(t - 1), &[t - 1], &xs(t - 1)),
        })
        .sum()
}

/// Exact `I(X^M; Y^M)`.
pub fn exact_mi(spec: &ProcessSpec) -> f64 {
    let m = spec.m;
    let x: Vec<usize> = (0..m).collect();
    let y: Vec<usize> = (m..2 * m).collect();
    let all: Vec<usize> = (0..2 * m).collect();
    spec.entropy(&x) + spec.entropy(&y) - spec.entropy(&all)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::LN_2;

    fn copy_channel(m: usize) -> ProcessSpec {
        ProcessSpec::from_fn(2, m, |x, y| if x == y { 1.0 } else { 0.0 }).unwrap()
    }

    fn lag_channel(m: usize) -> ProcessSpec {
        // Y_1 is an independent fair bit, Y_t = X_{t-1} afterwards.
        ProcessSpec::from_fn(2, m, |x, y| if (1..m).all(|t| y[t] == x[t - 1]) { 1.0 } else { 0.0 })
            .unwrap()
    }

    #[test]
    fn copy_channel_di() {
        let spec = copy_channel(2);
        assert_abs_diff_eq!(exact_di(&spec, Direction::XtoY), 2.0 * LN_2, epsilon = 1e-12);
    }

    #[test]
    fn independent_product_is_zero() {
        let spec = ProcessSpec::from_fn(2, 3, |x, y| {
            let wx: f64 = x.iter().map(|&s| 1.0 + s as f64).product();
            let wy: f64 = y.iter().map(|&s| 2.0 - s as f64 * 0.5).product();
            wx * wy
        })
        .unwrap();
        for d in [Direction::XtoY, Direction::YtoX, Direction::DelayedYtoX] {
            assert_abs_diff_eq!(exact_di(&spec, d), 0.0, epsilon = 1e-12);
        }
        assert_abs_diff_eq!(exact_mi(&spec), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn lag_channel_directions() {
        let spec = lag_channel(3);
        assert_abs_diff_eq!(exact_di(&spec, Direction::XtoY), 2.0 * LN_2, epsilon = 1e-12);
        assert_abs_diff_eq!(exact_di(&spec, Direction::YtoX), 0.0, epsilon = 1e-12);
    }

    #[test]
    fn massey_identity_on_random_specs() {
        for seed in 0..10 {
            let spec = ProcessSpec::random(2 + (seed % 2) as u32, 2 + (seed % 3) as usize, seed).unwrap();
            let lhs = exact_di(&spec, Direction::XtoY) + exact_di(&spec, Direction::DelayedYtoX);
            assert_abs_diff_eq!(lhs, exact_mi(&spec), epsilon = 1e-10);
            assert!(exact_di(&spec, Direction::XtoY) <= exact_mi(&spec) + 1e-10);
        }
    }

    #[test]
    fn rejects_bad_pmf() {
        assert!(matches!(ProcessSpec::new(2, 1, vec![0.5, 0.5, 0.5, 0.5]), Err(Error::InvalidPmf(_))));
        assert!(matches!(ProcessSpec::new(2, 1, vec![1.0]), Err(Error::InvalidPmf(_))));
        assert!(matches!(
            ProcessSpec::new(10, 4, vec![]),
            Err(Error::StateSpaceTooLarge { .. })
        ));
    }

    #[test]
    fn proportional_counts_match_pmf() {
        let spec = copy_channel(2);
        let (x, y) = spec.proportional(8).unwrap();
        assert_eq!(x.frames, y.frames);
        assert_eq!(x.n, 8);
        assert_eq!(largest_remainder(&[1.0, 1.0, 1.0], 5), vec![2, 2, 1]);
    }
}
