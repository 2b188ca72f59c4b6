//! Local directed-information surfaces, null calibration and FDR peaks.
//!
//! `di[tau_x][tau_y]` is the directed information from the window of `X`
//! starting at `tau_x` into the window of `Y` starting at `tau_y`. Every
//! window term is a sum of per-step conditional MIs that only depend on the
//! absolute frames involved, so all steps are computed once into a table and
//! surfaces are assembled by summation. Null surfaces for circularly shifted
//! `X` reuse the same table with wrapped frame indices.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::estimator::{di_step, DiOptions};
use crate::ingest::SymbolSequence;
use crate::rng;

pub const DEFAULT_WINDOW: usize = 7;
pub const DEFAULT_NULL_REPS: usize = 200;
pub const DEFAULT_TOP_N: usize = 10;
const DEGENERATE_SIGMA: f64 = 1e-12;
const Y_SHIFT_TAG: u64 = 0x7973_6866;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FdrMethod {
    Bh,
    /// Benjamini-Yekutieli, valid under arbitrary dependence.
    #[default]
    By,
}

impl std::str::FromStr for FdrMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bh" => Ok(FdrMethod::Bh),
            "by" => Ok(FdrMethod::By),
            _ => Err(Error::InvalidConfig(format!("unknown fdr method {s:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NullMode {
    /// One `(mu, sigma)` per surface from all cells of all null surfaces.
    Global,
    /// `(mu, sigma)` per cell across null surfaces.
    PerCell,
    /// `(mu, sigma)` per cell, pooling surfaces with `X` shifted and
    /// surfaces with `Y` shifted, so a cell is compared with both its row
    /// and its column.
    #[default]
    Cross,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SurfaceSpec {
    pub window: usize,
    pub stride: usize,
    pub di: DiOptions,
    pub null_reps: usize,
    pub null_mode: NullMode,
}

impl Default for SurfaceSpec {
    fn default() -> Self {
        SurfaceSpec {
            window: DEFAULT_WINDOW,
            stride: 1,
            di: DiOptions::default(),
            null_reps: DEFAULT_NULL_REPS,
            null_mode: NullMode::Cross,
        }
    }
}

impl SurfaceSpec {
    pub fn check(&self, mx: usize, my: usize) -> Result<()> {
        if self.window > mx.min(my) {
            return Err(Error::WindowTooLarge {
                window: self.window,
                mx,
                my,
            });
        }
        if self.window < self.di.order_k + 2 {
            return Err(Error::InvalidConfig(format!(
                "window {} shorter than order_k + 2",
                self.window
            )));
        }
        if self.stride == 0 {
            return Err(Error::InvalidConfig("stride must be >= 1".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NullModel {
    pub mode: NullMode,
    pub mu: f64,
    pub sigma: f64,
    /// Null spread vanished; every p-value is set to 1.
    pub degenerate: bool,
    pub shifts: Vec<usize>,
    /// Shifts of `Y`; empty unless the mode is [`NullMode::Cross`].
    #[serde(default)]
    pub y_shifts: Vec<usize>,
    /// Per-cell `(mu, sigma)` in [`NullMode::PerCell`].
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub per_cell: Option<(Vec<Vec<f64>>, Vec<Vec<f64>>)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiSurface {
    pub window: usize,
    pub stride: usize,
    pub tau_x: Vec<usize>,
    pub tau_y: Vec<usize>,
    /// `di[i][j]` at `(tau_x[i], tau_y[j])`.
    pub di: Vec<Vec<f64>>,
    /// Same shape as `di` once p-values are attached, empty before.
    pub pval: Vec<Vec<f64>>,
    pub null: Option<NullModel>,
}

impl DiSurface {
    pub fn shape(&self) -> (usize, usize) {
        (self.tau_x.len(), self.tau_y.len())
    }

    pub fn max(&self) -> f64 {
        self.di.iter().flatten().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `tau_x,tau_y,di,pval` rows, `tau_x` major.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("tau_x,tau_y,di,pval\n");
        for (i, &tx) in self.tau_x.iter().enumerate() {
            for (j, &ty) in self.tau_y.iter().enumerate() {
                let p = self.pval.get(i).and_then(|r| r.get(j)).copied().unwrap_or(f64::NAN);
                out.push_str(&format!("{tx},{ty},{:.17e},{:.17e}\n", self.di[i][j], p));
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Peak {
    pub tau_x: usize,
    pub tau_y: usize,
    pub di: f64,
    pub pval: f64,
    pub significant: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeakList {
    pub peaks: Vec<Peak>,
    pub max_stat: f64,
}

/// Per-step terms `S[L][a][b]`: the DI step with `X` frames `a-L..=a` and
/// `Y` frames `b-L..=b`, both wrapping.
struct StepTable {
    mx: usize,
    my: usize,
    terms: Vec<Vec<f64>>,
}

impl StepTable {
    fn build(x: &SymbolSequence, y: &SymbolSequence, di: &DiOptions) -> Result<Self> {
        let (mx, my) = (x.len(), y.len());
        let k = di.order_k;
        let jobs: Vec<(usize, usize, usize)> = (0..=k)
            .flat_map(|l| (0..mx).flat_map(move |a| (0..my).map(move |b| (l, a, b))))
            .collect();
        let values: Vec<f64> = jobs
            .par_iter()
            .map(|&(l, a, b)| {
                let xr: Vec<&[u32]> = (0..=l)
                    .map(|o| x.frames[(a + mx - l + o) % mx].as_slice())
                    .collect();
                let yr: Vec<&[u32]> = (0..=l)
                    .map(|o| y.frames[(b + my - l + o) % my].as_slice())
                    .collect();
                di_step(&xr, &yr, x.p, y.p, di.lambda).map(|v| v.value)
            })
            .collect::<Result<_>>()?;
        let mut terms = vec![vec![f64::NAN; mx * my]; k + 1];
        for (&(l, a, b), v) in jobs.iter().zip(values) {
            terms[l][a * my + b] = v;
        }
        Ok(StepTable { mx, my, terms })
    }

    fn surface(&self, tx: &[usize], ty: &[usize], window: usize, k: usize, shift: (usize, usize)) -> Vec<Vec<f64>> {
        tx.iter()
            .map(|&a0| {
                ty.iter()
                    .map(|&b0| {
                        let mut acc = 0.0;
                        for i in 0..window {
                            let l = k.min(i);
                            let a = (a0 + i + shift.0) % self.mx;
                            let b = (b0 + i + shift.1) % self.my;
                            acc += self.terms[l][a * self.my + b];
                        }
                        acc
                    })
                    .collect()
            })
            .collect()
    }
}

fn offsets(len: usize, window: usize, stride: usize) -> Vec<usize> {
    (0..=len - window).step_by(stride).collect()
}

fn check_pair(x: &SymbolSequence, y: &SymbolSequence) -> Result<()> {
    if x.is_empty() || y.is_empty() {
        return Err(Error::EmptySequence);
    }
    if x.n != y.n {
        return Err(Error::LengthMismatch(format!(
            "{} vs {} realizations per frame",
            x.n, y.n
        )));
    }
    Ok(())
}

/// A surface together with the step table it was computed from, so null
/// surfaces can be derived without recomputing estimator terms.
pub struct SurfaceComputation {
    table: StepTable,
    spec: SurfaceSpec,
    pub surface: DiSurface,
}

impl SurfaceComputation {
    pub fn new(x: &SymbolSequence, y: &SymbolSequence, spec: &SurfaceSpec) -> Result<Self> {
        check_pair(x, y)?;
        spec.check(x.len(), y.len())?;
        let table = StepTable::build(x, y, &spec.di)?;
        let tau_x = offsets(x.len(), spec.window, spec.stride);
        let tau_y = offsets(y.len(), spec.window, spec.stride);
        let di = table.surface(&tau_x, &tau_y, spec.window, spec.di.order_k, (0, 0));
        Ok(SurfaceComputation {
            table,
            spec: *spec,
            surface: DiSurface {
                window: spec.window,
                stride: spec.stride,
                tau_x,
                tau_y,
                di,
                pval: Vec::new(),
                null: None,
            },
        })
    }

    /// Surface with `X` circularly shifted forward by `shift` frames.
    pub fn shifted(&self, shift: usize) -> Vec<Vec<f64>> {
        let s = &self.surface;
        self.table
            .surface(&s.tau_x, &s.tau_y, s.window, self.spec.di.order_k, (shift % self.table.mx, 0))
    }

    /// Surface with `Y` circularly shifted forward by `shift` frames.
    pub fn shifted_y(&self, shift: usize) -> Vec<Vec<f64>> {
        let s = &self.surface;
        self.table
            .surface(&s.tau_x, &s.tau_y, s.window, self.spec.di.order_k, (0, shift % self.table.my))
    }

    /// Circular-shift null: `null_reps` shifts drawn uniformly from
    /// `1..M_x`, replicate `b` on sub-stream `b` of `seed`. Cross mode adds
    /// as many `Y` shifts from `1..M_y` on a derived seed.
    pub fn null_calibrate(&self, seed: u64) -> NullModel {
        let reps = self.spec.null_reps;
        let draw = |seed: u64, len: usize| -> Vec<usize> {
            (0..reps)
                .map(|b| if len < 2 { 0 } else { rng::stream(seed, b as u64).random_range(1..len) })
                .collect()
        };
        let shifts = draw(seed, self.table.mx);
        let y_shifts = if self.spec.null_mode == NullMode::Cross {
            draw(rng::derive_seed(seed, Y_SHIFT_TAG), self.table.my)
        } else {
            Vec::new()
        };
        let nulls: Vec<Vec<Vec<f64>>> = shifts
            .par_iter()
            .map(|&s| self.shifted(s))
            .chain(y_shifts.par_iter().map(|&s| self.shifted_y(s)))
            .collect();
        let pooled: Vec<f64> = nulls.iter().flatten().flatten().copied().collect();
        let (mu, sigma) = mean_sd(&pooled);
        let (rows, cols) = self.surface.shape();
        let per_cell = (self.spec.null_mode != NullMode::Global).then(|| {
            let mut mus = vec![vec![0.0; cols]; rows];
            let mut sds = vec![vec![0.0; cols]; rows];
            for i in 0..rows {
                for j in 0..cols {
                    let cell: Vec<f64> = nulls.iter().map(|n| n[i][j]).collect();
                    let (m, s) = mean_sd(&cell);
                    mus[i][j] = m;
                    sds[i][j] = s;
                }
            }
            (mus, sds)
        });
        let degenerate = !(sigma >= DEGENERATE_SIGMA);
        NullModel {
            mode: self.spec.null_mode,
            mu,
            sigma,
            degenerate,
            shifts,
            y_shifts,
            per_cell,
        }
    }
}

fn mean_sd(v: &[f64]) -> (f64, f64) {
    let n = v.len() as f64;
    if v.is_empty() {
        return (f64::NAN, 0.0);
    }
    let mean = v.iter().sum::<f64>() / n;
    if v.len() < 2 {
        return (mean, 0.0);
    }
    let ss: f64 = v.iter().map(|x| (x - mean) * (x - mean)).sum();
    (mean, (ss / (n - 1.0)).sqrt())
}

/// Windowed DI over all shift pairs; p-values are left empty.
pub fn local_di_surface(x: &SymbolSequence, y: &SymbolSequence, spec: &SurfaceSpec) -> Result<DiSurface> {
    Ok(SurfaceComputation::new(x, y, spec)?.surface)
}

/// Null `(mu, sigma)` for a pair.
pub fn null_calibrate(x: &SymbolSequence, y: &SymbolSequence, spec: &SurfaceSpec, seed: u64) -> Result<NullModel> {
    if spec.null_reps < 30 {
        return Err(Error::InvalidConfig(format!("null_reps {} < 30", spec.null_reps)));
    }
    Ok(SurfaceComputation::new(x, y, spec)?.null_calibrate(seed))
}

/// `1 - Phi(z)` via the complementary error function.
pub fn upper_tail(z: f64) -> f64 {
    0.5 * erfc(z / std::f64::consts::SQRT_2)
}

/// Gaussian upper-tail p-value of `value` under `(mu, sigma)`; 1 when the
/// null is degenerate.
pub fn gaussian_pvalue(value: f64, mu: f64, sigma: f64) -> f64 {
    if !(sigma >= DEGENERATE_SIGMA) {
        return 1.0;
    }
    upper_tail((value - mu) / sigma).clamp(0.0, 1.0)
}

/// Attach p-values under `null` to the surface.
pub fn p_values(surface: &mut DiSurface, null: &NullModel) {
    surface.pval = surface
        .di
        .iter()
        .enumerate()
        .map(|(i, row)| {
            row.iter()
                .enumerate()
                .map(|(j, &d)| {
                    if null.degenerate {
                        return 1.0;
                    }
                    match &null.per_cell {
                        Some((mu, sd)) => gaussian_pvalue(d, mu[i][j], sd[i][j]),
                        None => gaussian_pvalue(d, null.mu, null.sigma),
                    }
                })
                .collect()
        })
        .collect();
    surface.null = Some(null.clone());
}

fn harmonic(m: usize, method: FdrMethod) -> f64 {
    match method {
        FdrMethod::Bh => 1.0,
        FdrMethod::By => (1..=m).map(|j| 1.0 / j as f64).sum(),
    }
}

fn ascending(pvals: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..pvals.len()).collect();
    order.sort_by(|&a, &b| pvals[a].total_cmp(&pvals[b]).then(a.cmp(&b)));
    order
}

/// Step-up FDR selection. Returns rejected indices in ascending order.
pub fn fdr_select(pvals: &[f64], q: f64, method: FdrMethod) -> Result<Vec<usize>> {
    if pvals.is_empty() {
        return Err(Error::EmptyInput);
    }
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::InvalidConfig(format!("fdr level {q} outside (0, 1)")));
    }
    let m = pvals.len();
    let c = harmonic(m, method);
    let order = ascending(pvals);
    let cutoff = (1..=m)
        .rev()
        .find(|&i| pvals[order[i - 1]] <= i as f64 * q / (m as f64 * c));
    let mut out: Vec<usize> = order[..cutoff.unwrap_or(0)].to_vec();
    out.sort_unstable();
    Ok(out)
}

/// Cells strictly greater than every existing 8-neighbor.
fn local_maxima(d: &[Vec<f64>]) -> Vec<(usize, usize)> {
    let rows = d.len();
    let cols = d.first().map_or(0, Vec::len);
    let mut out = Vec::new();
    for i in 0..rows {
        for j in 0..cols {
            let v = d[i][j];
            let strict = (i.saturating_sub(1)..=(i + 1).min(rows - 1)).all(|ni| {
                (j.saturating_sub(1)..=(j + 1).min(cols - 1))
                    .all(|nj| (ni, nj) == (i, j) || d[ni][nj] < v)
            });
            if strict {
                out.push((i, j));
            }
        }
    }
    out
}

fn candidate_pvalues(surface: &DiSurface) -> Vec<f64> {
    local_maxima(&surface.di)
        .into_iter()
        .map(|(i, j)| surface.pval[i][j])
        .collect()
}

/// Step-up adjusted p-values: index `i` is rejected by [`fdr_select`] at
/// level `q` exactly when `adjusted[i] <= q`.
pub fn adjusted_pvalues(pvals: &[f64], method: FdrMethod) -> Vec<f64> {
    let m = pvals.len();
    let c = harmonic(m, method);
    let order = ascending(pvals);
    let mut out = vec![1.0; m];
    let mut running = 1.0f64;
    for rank in (1..=m).rev() {
        let i = order[rank - 1];
        running = running.min(pvals[i] * m as f64 * c / rank as f64);
        out[i] = running.min(1.0);
    }
    out
}

/// Strict local maxima in the 8-neighborhood, best `top_n` by p-value;
/// significance by FDR over all candidates.
pub fn detect_peaks(surface: &DiSurface, top_n: usize, q: f64, method: FdrMethod) -> Result<PeakList> {
    let (rows, _) = surface.shape();
    if surface.pval.len() != rows {
        return Err(Error::InvalidConfig("surface has no p-values".into()));
    }
    let mut cands: Vec<Peak> = local_maxima(&surface.di)
        .into_iter()
        .map(|(i, j)| Peak {
            tau_x: surface.tau_x[i],
            tau_y: surface.tau_y[j],
            di: surface.di[i][j],
            pval: surface.pval[i][j],
            significant: false,
        })
        .collect();
    let max_stat = surface.max();
    if cands.is_empty() {
        return Ok(PeakList {
            peaks: cands,
            max_stat,
        });
    }
    let pvals: Vec<f64> = cands.iter().map(|c| c.pval).collect();
    for idx in fdr_select(&pvals, q, method)? {
        cands[idx].significant = true;
    }
    cands.sort_by(|a, b| {
        a.pval
            .total_cmp(&b.pval)
            .then(b.di.total_cmp(&a.di))
            .then((a.tau_x, a.tau_y).cmp(&(b.tau_x, b.tau_y)))
    });
    cands.truncate(top_n);
    Ok(PeakList {
        peaks: cands,
        max_stat,
    })
}

/// Everything the localizer reports for one ordered pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairAnalysis {
    pub surface: DiSurface,
    pub peaks: PeakList,
    /// Smallest FDR-adjusted p-value among candidate peaks; the pair has a
    /// significant peak at level `q` iff this is at most `q`.
    pub pair_pval: f64,
}

pub fn analyze_pair(
    x: &SymbolSequence,
    y: &SymbolSequence,
    spec: &SurfaceSpec,
    seed: u64,
    q: f64,
    method: FdrMethod,
    top_n: usize,
) -> Result<PairAnalysis> {
    if spec.null_reps < 30 {
        return Err(Error::InvalidConfig(format!("null_reps {} < 30", spec.null_reps)));
    }
    let comp = SurfaceComputation::new(x, y, spec)?;
    let null = comp.null_calibrate(seed);
    let mut surface = comp.surface;
    p_values(&mut surface, &null);
    let peaks = detect_peaks(&surface, top_n, q, method)?;
    let cand = candidate_pvalues(&surface);
    let pair_pval = adjusted_pvalues(&cand, method).into_iter().fold(1.0, f64::min);
    Ok(PairAnalysis {
        surface,
        peaks,
        pair_pval,
    })
}

/// Significance of one ordered pair within a corpus-level family.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairSignificance {
    pub from: String,
    pub to: String,
    pub pair_pval: f64,
    /// Rejected by FDR across all ordered pairs of the corpus.
    pub significant: bool,
    pub top_peak: Option<Peak>,
}

/// Localize every ordered pair of `corpus` and control the FDR across the
/// `K(K-1)` pair-level p-values. Pair `(i, j)` uses its own derived seed, so
/// results do not depend on scheduling.
pub fn corpus_pairs(
    corpus: &[SymbolSequence],
    spec: &SurfaceSpec,
    seed: u64,
    q: f64,
    method: FdrMethod,
) -> Result<Vec<PairSignificance>> {
    if corpus.len() < 2 {
        return Err(Error::EmptyInput);
    }
    let jobs: Vec<(usize, usize)> = (0..corpus.len())
        .flat_map(|i| (0..corpus.len()).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();
    let analyses: Vec<(f64, Option<Peak>)> = jobs
        .par_iter()
        .map(|&(i, j)| {
            let (x, y) = (&corpus[i], &corpus[j]);
            let pair_seed = rng::derive_seed(
                rng::derive_seed(seed, rng::hash_str(&x.sequence_id)),
                rng::hash_str(&y.sequence_id),
            );
            analyze_pair(x, y, spec, pair_seed, q, method, 1)
                .map(|a| (a.pair_pval, a.peaks.peaks.into_iter().next()))
                .map_err(|e| Error::Pair {
                    from: x.sequence_id.clone(),
                    to: y.sequence_id.clone(),
                    source: Box::new(e),
                })
        })
        .collect::<Result<_>>()?;
    let pvals: Vec<f64> = analyses.iter().map(|a| a.0).collect();
    let rejected = fdr_select(&pvals, q, method)?;
    Ok(jobs
        .iter()
        .zip(analyses)
        .enumerate()
        .map(|(idx, (&(i, j), (pair_pval, top_peak)))| PairSignificance {
            from: corpus[i].sequence_id.clone(),
            to: corpus[j].sequence_id.clone(),
            pair_pval,
            significant: rejected.binary_search(&idx).is_ok(),
            top_peak,
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimator::directed_information;
    use approx::assert_abs_diff_eq;

    fn random_seq(id: &str, m: usize, n: usize, p: u32, seed: u64) -> SymbolSequence {
        let mut r = rng::stream(seed, 3);
        let frames = (0..m).map(|_| (0..n).map(|_| r.random_range(0..p)).collect()).collect();
        SymbolSequence::new(id, None, p, frames).unwrap()
    }

    fn spec(window: usize) -> SurfaceSpec {
        SurfaceSpec {
            window,
            null_reps: 40,
            ..SurfaceSpec::default()
        }
    }

    #[test]
    fn pvalue_examples() {
        assert_abs_diff_eq!(gaussian_pvalue(2.0, 2.0, 1.0), 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(gaussian_pvalue(1.6449, 0.0, 1.0), 0.05, epsilon = 1e-4);
        assert_abs_diff_eq!(gaussian_pvalue(-1.0, 0.0, 1.0), 0.841344746068543, epsilon = 1e-10);
        assert_eq!(gaussian_pvalue(5.0, 0.0, 0.0), 1.0);
    }

    #[test]
    fn fdr_worked_examples() {
        let p = [0.01, 0.02, 0.04, 0.5];
        assert_eq!(fdr_select(&p, 0.1, FdrMethod::Bh).unwrap(), vec![0, 1, 2]);
        assert_eq!(fdr_select(&p, 0.1, FdrMethod::By).unwrap(), vec![0, 1]);
        assert!(fdr_select(&[1.0; 5], 0.1, FdrMethod::Bh).unwrap().is_empty());
        assert!(matches!(fdr_select(&[], 0.1, FdrMethod::Bh), Err(Error::EmptyInput)));
    }

    #[test]
    fn adjusted_pvalues_agree_with_selection() {
        let mut r = rng::stream(12, 0);
        for _ in 0..50 {
            let p: Vec<f64> = (0..20).map(|_| r.random::<f64>().powi(3)).collect();
            for method in [FdrMethod::Bh, FdrMethod::By] {
                let adj = adjusted_pvalues(&p, method);
                for q in [0.05, 0.1, 0.2] {
                    let want: Vec<usize> = (0..20).filter(|&i| adj[i] <= q).collect();
                    assert_eq!(fdr_select(&p, q, method).unwrap(), want);
                }
            }
        }
    }

    #[test]
    fn fdr_monotone_in_level_and_method() {
        let mut r = rng::stream(13, 0);
        for _ in 0..50 {
            let p: Vec<f64> = (0..15).map(|_| r.random::<f64>().powi(2)).collect();
            let bh = fdr_select(&p, 0.1, FdrMethod::Bh).unwrap();
            let by = fdr_select(&p, 0.1, FdrMethod::By).unwrap();
            assert!(by.iter().all(|i| bh.contains(i)));
            let wider = fdr_select(&p, 0.2, FdrMethod::Bh).unwrap();
            assert!(bh.iter().all(|i| wider.contains(i)));
        }
    }

    #[test]
    fn fdr_step_up_not_step_down() {
        // p_(1) fails its own threshold but p_(2) passes, so both are rejected.
        let p = [0.04, 0.045];
        assert_eq!(fdr_select(&p, 0.1, FdrMethod::Bh).unwrap(), vec![0, 1]);
    }

    #[test]
    fn window_equal_to_length_is_whole_sequence() {
        let x = random_seq("x", 6, 200, 3, 1);
        let y = random_seq("y", 6, 200, 3, 2);
        let s = local_di_surface(&x, &y, &spec(6)).unwrap();
        assert_eq!(s.shape(), (1, 1));
        let whole = directed_information(&x, &y, &DiOptions::default()).unwrap().value;
        assert_eq!(s.di[0][0].to_bits(), whole.to_bits());
    }

    #[test]
    fn cells_match_windowed_di_bitwise() {
        let x = random_seq("x", 12, 150, 3, 4);
        let y = random_seq("y", 10, 150, 3, 5);
        let sp = SurfaceSpec {
            stride: 2,
            ..spec(5)
        };
        let s = local_di_surface(&x, &y, &sp).unwrap();
        assert_eq!(s.tau_x, vec![0, 2, 4, 6]);
        assert_eq!(s.tau_y, vec![0, 2, 4]);
        for (i, &tx) in s.tau_x.iter().enumerate() {
            for (j, &ty) in s.tau_y.iter().enumerate() {
                let w = directed_information(&x.window(tx, 5), &y.window(ty, 5), &sp.di).unwrap().value;
                assert_eq!(s.di[i][j].to_bits(), w.to_bits());
            }
        }
    }

    #[test]
    fn shifted_surface_matches_rotated_sequence() {
        let x = random_seq("x", 9, 120, 3, 6);
        let y = random_seq("y", 9, 120, 3, 7);
        let comp = SurfaceComputation::new(&x, &y, &spec(4)).unwrap();
        let mut rotated = x.clone();
        rotated.frames.rotate_left(3);
        let direct = local_di_surface(&rotated, &y, &spec(4)).unwrap();
        assert_eq!(comp.shifted(3), direct.di);
    }

    #[test]
    fn y_shifted_surface_matches_rotated_sequence() {
        let x = random_seq("x", 9, 120, 3, 6);
        let y = random_seq("y", 9, 120, 3, 7);
        let comp = SurfaceComputation::new(&x, &y, &spec(4)).unwrap();
        let mut rotated = y.clone();
        rotated.frames.rotate_left(5);
        let direct = local_di_surface(&x, &rotated, &spec(4)).unwrap();
        assert_eq!(comp.shifted_y(5), direct.di);
    }

    #[test]
    fn null_modes_differ_only_in_pooling() {
        let x = random_seq("x", 12, 100, 3, 1);
        let y = random_seq("y", 12, 100, 3, 2);
        let global = null_calibrate(&x, &y, &SurfaceSpec { null_mode: NullMode::Global, ..spec(5) }, 4).unwrap();
        let per_cell = null_calibrate(&x, &y, &SurfaceSpec { null_mode: NullMode::PerCell, ..spec(5) }, 4).unwrap();
        let cross = null_calibrate(&x, &y, &SurfaceSpec { null_mode: NullMode::Cross, ..spec(5) }, 4).unwrap();
        assert_eq!(global.shifts, cross.shifts);
        assert_eq!(global.mu, per_cell.mu);
        assert!(global.per_cell.is_none() && global.y_shifts.is_empty());
        assert!(per_cell.per_cell.is_some() && per_cell.y_shifts.is_empty());
        assert_eq!(cross.y_shifts.len(), 40);
        assert!(cross.y_shifts.iter().all(|&s| (1..12).contains(&s)));
        let (mu, sd) = cross.per_cell.unwrap();
        assert_eq!(mu.len(), 8);
        assert!(sd.iter().flatten().all(|&v| v > 0.0));
    }

    #[test]
    fn window_too_large() {
        let x = random_seq("x", 5, 10, 2, 1);
        assert!(matches!(
            local_di_surface(&x, &x, &spec(7)),
            Err(Error::WindowTooLarge { .. })
        ));
    }

    #[test]
    fn self_coupling_maximal_on_diagonal() {
        let x = random_seq("x", 14, 400, 4, 8);
        let s = local_di_surface(&x, &x, &spec(5)).unwrap();
        for i in 0..s.tau_x.len() {
            for j in 0..s.tau_y.len() {
                assert!(s.di[i][i] >= s.di[i][j]);
            }
        }
    }

    #[test]
    fn constant_sequences_degenerate_null() {
        let c = SymbolSequence::new("c", None, 2, vec![vec![0; 50]; 10]).unwrap();
        let null = null_calibrate(&c, &c, &spec(5), 1).unwrap();
        assert!(null.degenerate);
        let a = analyze_pair(&c, &c, &spec(5), 1, 0.1, FdrMethod::By, 10).unwrap();
        assert!(a.surface.pval.iter().flatten().all(|&p| p == 1.0));
    }

    #[test]
    fn null_is_deterministic() {
        let x = random_seq("x", 12, 100, 3, 1);
        let y = random_seq("y", 12, 100, 3, 2);
        let a = null_calibrate(&x, &y, &spec(5), 9).unwrap();
        let b = null_calibrate(&x, &y, &spec(5), 9).unwrap();
        assert_eq!(a, b);
        assert!(a.shifts.iter().all(|&s| (1..12).contains(&s)));
        assert!(null_calibrate(&x, &y, &SurfaceSpec { null_reps: 10, ..spec(5) }, 9).is_err());
    }

    #[test]
    fn independent_cells_inside_null_band() {
        let x = random_seq("x", 20, 300, 3, 11);
        let y = random_seq("y", 20, 300, 3, 12);
        let null = null_calibrate(&x, &y, &spec(7), 3).unwrap();
        let s = local_di_surface(&x, &y, &spec(7)).unwrap();
        let cells: Vec<f64> = s.di.into_iter().flatten().collect();
        let inside = cells
            .iter()
            .filter(|&&d| (d - null.mu).abs() <= 4.0 * null.sigma)
            .count();
        assert!(inside as f64 >= 0.99 * cells.len() as f64);
    }

    fn surface_of(values: Vec<Vec<f64>>) -> DiSurface {
        let rows = values.len();
        let cols = values[0].len();
        DiSurface {
            window: 1,
            stride: 1,
            tau_x: (0..rows).collect(),
            tau_y: (0..cols).collect(),
            pval: values
                .iter()
                .map(|r| r.iter().map(|&d| gaussian_pvalue(d, 0.0, 1.0)).collect())
                .collect(),
            di: values,
            null: None,
        }
    }

    #[test]
    fn peaks_strictness() {
        let flat = surface_of(vec![vec![1.0; 4]; 3]);
        assert!(detect_peaks(&flat, 10, 0.1, FdrMethod::By).unwrap().peaks.is_empty());

        let mono = surface_of((0..4).map(|i| (0..5).map(|j| (i + j) as f64).collect()).collect());
        let peaks = detect_peaks(&mono, 10, 0.1, FdrMethod::By).unwrap();
        assert_eq!(peaks.peaks.len(), 1);
        assert_eq!((peaks.peaks[0].tau_x, peaks.peaks[0].tau_y), (3, 4));
        assert_eq!(peaks.max_stat, 7.0);

        let single = surface_of(vec![vec![0.3]]);
        assert_eq!(detect_peaks(&single, 10, 0.1, FdrMethod::By).unwrap().peaks.len(), 1);
    }

    #[test]
    fn peaks_sorted_and_truncated() {
        let mut v = vec![vec![0.0; 9]; 9];
        for (k, (i, j)) in [(1, 1), (1, 5), (5, 1), (5, 5), (7, 7)].into_iter().enumerate() {
            v[i][j] = 1.0 + k as f64;
        }
        v[7][7] = 8.0;
        let s = surface_of(v);
        let peaks = detect_peaks(&s, 3, 0.1, FdrMethod::Bh).unwrap();
        assert_eq!(peaks.peaks.len(), 3);
        assert!(peaks.peaks.windows(2).all(|w| w[0].pval <= w[1].pval));
        assert_eq!((peaks.peaks[0].tau_x, peaks.peaks[0].tau_y), (7, 7));
        assert!(peaks.peaks[0].significant);
    }

    #[test]
    fn planted_copy_window_is_found() {
        // Y copies X one frame later on frames 12..24 only.
        let m = 36;
        let n = 400;
        let x = random_seq("x", m, n, 4, 21);
        let mut y = random_seq("y", m, n, 4, 22);
        for t in 12..24 {
            y.frames[t] = x.frames[t - 1].clone();
        }
        let sp = SurfaceSpec {
            null_reps: 100,
            ..spec(7)
        };
        let a = analyze_pair(&x, &y, &sp, 5, 0.1, FdrMethod::By, 10).unwrap();
        let top = a.peaks.peaks[0];
        assert!(top.significant);
        let offset = top.tau_y as i64 - top.tau_x as i64;
        assert!((offset - 1).abs() <= 1, "offset {offset}");
        assert!((11..=18).contains(&top.tau_y));
        assert!(a.pair_pval <= 0.1);
    }

    #[test]
    fn corpus_family_covers_ordered_pairs() {
        let base = random_seq("a", 16, 200, 3, 30);
        let mut copy = base.clone();
        copy.sequence_id = "b".into();
        copy.frames.rotate_right(1);
        let other = random_seq("c", 16, 200, 3, 31);
        let out = corpus_pairs(&[base, copy, other], &spec(5), 2, 0.1, FdrMethod::By).unwrap();
        assert_eq!(out.len(), 6);
        let ab = out.iter().find(|p| p.from == "a" && p.to == "b").unwrap();
        assert!(ab.significant);
        let peak = ab.top_peak.as_ref().unwrap();
        assert!((peak.tau_y as i64 - peak.tau_x as i64 - 1).abs() <= 1);
        assert!(corpus_pairs(&[], &spec(5), 2, 0.1, FdrMethod::By).is_err());
    }

    #[test]
    fn translation_consistency() {
        let spec_ = SurfaceSpec { null_reps: 30, ..spec(5) };
        let x = random_seq("x", 16, 200, 3, 31);
        let mut y = random_seq("y", 16, 200, 3, 32);
        for t in 6..12 {
            y.frames[t] = x.frames[t - 1].clone();
        }
        let base = local_di_surface(&x, &y, &spec_).unwrap();
        let mut padded = x.clone();
        let pad = random_seq("pad", 3, 200, 3, 33);
        padded.frames.splice(0..0, pad.frames);
        let moved = local_di_surface(&padded, &y, &spec_).unwrap();
        for (i, row) in base.di.iter().enumerate() {
            assert_eq!(&moved.di[i + 3], row);
        }
    }
}
