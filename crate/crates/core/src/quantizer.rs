//! Vector quantization of MRF realizations and joint symbol histograms.

use std::fs;
use std::path::Path;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{FrameDetections, Grid};
use crate::mrf::{PairwiseField, PictorialModel, SampleSet};
use crate::rng;

pub const MAX_ALPHABET: u32 = 4096;
pub const DEFAULT_ALPHABET: u32 = 16;
pub const DEFAULT_TRAIN_POINTS: usize = 20_000;
const MAX_LLOYD_ITERATIONS: usize = 100;
const INERTIA_TOLERANCE: f64 = 1e-6;

/// Row-major matrix of feature vectors.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FeatureMatrix {
    pub dim: usize,
    pub data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(dim: usize) -> Self {
        FeatureMatrix {
            dim,
            data: Vec::new(),
        }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        let mut m = FeatureMatrix::new(dim);
        for r in rows {
            m.push(r)?;
        }
        Ok(m)
    }

    pub fn len(&self) -> usize {
        if self.dim == 0 {
            0
        } else {
            self.data.len() / self.dim
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn push(&mut self, row: &[f64]) -> Result<()> {
        if row.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: row.len(),
            });
        }
        self.data.extend_from_slice(row);
        Ok(())
    }
}

/// Maps a realization (candidate index per variable) to the concatenated
/// grid-normalized `(x, y)` of every part of every person.
#[derive(Clone, Debug)]
pub struct FeatureMap {
    points: Vec<Vec<(f64, f64)>>,
    sx: f64,
    sy: f64,
}

impl FeatureMap {
    pub fn new(field: &PairwiseField, grid: Grid) -> Self {
        FeatureMap {
            points: field.vars().iter().map(|v| v.points.clone()).collect(),
            sx: 1.0 / f64::from(grid.width),
            sy: 1.0 / f64::from(grid.height),
        }
    }

    pub fn from_frame(model: &PictorialModel, frame: &FrameDetections, grid: Grid) -> Result<Self> {
        Ok(FeatureMap::new(&model.field(frame)?, grid))
    }

    pub fn dim(&self) -> usize {
        2 * self.points.len()
    }

    pub fn write(&self, sample: &[u16], out: &mut [f64]) {
        for (v, &c) in sample.iter().enumerate() {
            let (x, y) = self.points[v][usize::from(c)];
            out[2 * v] = x * self.sx;
            out[2 * v + 1] = y * self.sy;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    pub p: u32,
    pub feature_dim: usize,
    pub centroids: Vec<Vec<f64>>,
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

impl Codebook {
    pub fn new(centroids: Vec<Vec<f64>>) -> Result<Self> {
        let p = centroids.len();
        if p == 0 || p > MAX_ALPHABET as usize {
            return Err(Error::InvalidSpec(format!(
                "codebook needs 1..={MAX_ALPHABET} centroids, got {p}"
            )));
        }
        let feature_dim = centroids[0].len();
        if let Some(bad) = centroids.iter().find(|c| c.len() != feature_dim) {
            return Err(Error::DimensionMismatch {
                expected: feature_dim,
                got: bad.len(),
            });
        }
        for i in 0..p {
            for j in i + 1..p {
                if centroids[i] == centroids[j] {
                    return Err(Error::DegenerateData(format!("centroids {i} and {j} coincide")));
                }
            }
        }
        Ok(Codebook {
            p: p as u32,
            feature_dim,
            centroids,
        })
    }

    /// Nearest centroid; ties go to the lowest index.
    pub fn nearest(&self, x: &[f64]) -> u32 {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, c) in self.centroids.iter().enumerate() {
            let d = dist2(x, c);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        best as u32
    }

    pub fn encode_features(&self, features: &FeatureMatrix) -> Result<Vec<u32>> {
        if features.dim != self.feature_dim {
            return Err(Error::DimensionMismatch {
                expected: self.feature_dim,
                got: features.dim,
            });
        }
        Ok((0..features.len()).map(|i| self.nearest(features.row(i))).collect())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self).expect("codebook serializes");
        fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cb: Codebook = serde_json::from_str(&text).map_err(|e| Error::MalformedRecord {
            line: e.line(),
            reason: e.to_string(),
        })?;
        if cb.centroids.len() != cb.p as usize {
            return Err(Error::VersionMismatch(format!(
                "codebook declares p={} but has {} centroids",
                cb.p,
                cb.centroids.len()
            )));
        }
        Codebook::new(cb.centroids)
    }
}

/// Symbols for every realization of one frame.
pub fn encode(
    cb: &Codebook,
    model: &PictorialModel,
    sampleset: &SampleSet,
    frame: &FrameDetections,
    grid: Grid,
) -> Result<Vec<u32>> {
    let map = FeatureMap::from_frame(model, frame, grid)?;
    if map.dim() != cb.feature_dim {
        return Err(Error::DimensionMismatch {
            expected: cb.feature_dim,
            got: map.dim(),
        });
    }
    let mut buf = vec![0.0; map.dim()];
    Ok(sampleset
        .iter()
        .map(|s| {
            map.write(s, &mut buf);
            cb.nearest(&buf)
        })
        .collect())
}

/// k-means with `k = p`: farthest-point initialization from a seeded first
/// centroid, then Lloyd iterations until the relative inertia change drops
/// below 1e-6 or 100 iterations. Inputs larger than `max_points` are
/// subsampled (seeded) before clustering.
pub fn kmeans(features: &FeatureMatrix, p: u32, seed: u64, max_points: usize) -> Result<Codebook> {
    let total = features.len();
    let k = p as usize;
    if p == 0 || p > MAX_ALPHABET {
        return Err(Error::InvalidSpec(format!("alphabet size must be in 1..={MAX_ALPHABET}")));
    }
    if total < k || total == 0 {
        return Err(Error::InsufficientSamples { needed: k.max(1), got: total });
    }
    let dim = features.dim;
    let mut rng = rng::stream(seed, 0xC0DE);
    let data: Vec<f64> = if total > max_points.max(k) {
        let mut idx = rand::seq::index::sample(&mut rng, total, max_points.max(k)).into_vec();
        idx.sort_unstable();
        idx.iter().flat_map(|&i| features.row(i).iter().copied()).collect()
    } else {
        features.data.clone()
    };
    let n = data.len() / dim;
    let row = |i: usize| &data[i * dim..(i + 1) * dim];

    if k == 1 {
        let mut mean = vec![0.0; dim];
        for i in 0..n {
            for (m, x) in mean.iter_mut().zip(row(i)) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n as f64);
        return Codebook::new(vec![mean]);
    }

    let first = rng.random_range(0..n);
    let mut centroids: Vec<Vec<f64>> = vec![row(first).to_vec()];
    let mut min_d: Vec<f64> = (0..n).map(|i| dist2(row(i), &centroids[0])).collect();
    while centroids.len() < k {
        let (far, &d) = min_d
            .iter()
            .enumerate()
            .fold((0, &min_d[0]), |best, cur| if cur.1 > best.1 { cur } else { best });
        if d == 0.0 {
            return Err(Error::DegenerateData(format!(
                "only {} distinct feature vectors for p={p}",
                centroids.len()
            )));
        }
        let c = row(far).to_vec();
        for (i, md) in min_d.iter_mut().enumerate() {
            *md = md.min(dist2(row(i), &c));
        }
        centroids.push(c);
    }

    let mut assign = vec![0usize; n];
    let mut prev_inertia = f64::INFINITY;
    for _ in 0..MAX_LLOYD_ITERATIONS {
        let mut inertia = 0.0;
        let mut dists = vec![0.0; n];
        for i in 0..n {
            let x = row(i);
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (c, cen) in centroids.iter().enumerate() {
                let d = dist2(x, cen);
                if d < best_d {
                    best_d = d;
                    best = c;
                }
            }
            assign[i] = best;
            dists[i] = best_d;
            inertia += best_d;
        }
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for i in 0..n {
            counts[assign[i]] += 1;
            for (s, x) in sums[assign[i]].iter_mut().zip(row(i)) {
                *s += x;
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                // Reseed an empty cluster at the worst-fit point.
                let (far, _) = dists
                    .iter()
                    .enumerate()
                    .fold((0, f64::NEG_INFINITY), |b, (i, &d)| if d > b.1 { (i, d) } else { b });
                centroids[c] = row(far).to_vec();
                dists[far] = 0.0;
            } else {
                centroids[c] = sums[c].iter().map(|s| s / counts[c] as f64).collect();
            }
        }
        let converged = prev_inertia.is_finite()
            && (prev_inertia - inertia).abs() <= INERTIA_TOLERANCE * prev_inertia.max(f64::MIN_POSITIVE);
        prev_inertia = inertia;
        if converged || inertia == 0.0 {
            break;
        }
    }
    Codebook::new(centroids)
}

/// Learn a codebook from the realizations of several frames.
pub fn learn_codebook(
    model: &PictorialModel,
    items: &[(&FrameDetections, &SampleSet)],
    grid: Grid,
    p: u32,
    seed: u64,
) -> Result<Codebook> {
    let mut features = None::<FeatureMatrix>;
    for (frame, samples) in items {
        let map = FeatureMap::from_frame(model, frame, grid)?;
        let fm = features.get_or_insert_with(|| FeatureMatrix::new(map.dim()));
        let mut buf = vec![0.0; map.dim()];
        for s in samples.iter() {
            map.write(s, &mut buf);
            fm.push(&buf)?;
        }
    }
    let features = features.ok_or(Error::InsufficientSamples { needed: p as usize, got: 0 })?;
    kmeans(&features, p, seed, DEFAULT_TRAIN_POINTS)
}

/// Sparse count tensor over a product of finite alphabets. Cells are keyed
/// by mixed-radix index with the first axis most significant.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct JointHistogram {
    dims: Vec<u32>,
    /// `(cell key, count)` sorted by key, counts > 0.
    entries: Vec<(u128, u64)>,
    total: u64,
}

fn checked_cells(dims: &[u32]) -> Result<u128> {
    dims.iter().try_fold(1u128, |acc, &d| {
        if d == 0 {
            return Err(Error::InvalidSpec("alphabet size 0".into()));
        }
        acc.checked_mul(u128::from(d))
            .ok_or_else(|| Error::InvalidSpec("joint alphabet too large".into()))
    })
}

impl JointHistogram {
    /// Build from `(key, count)` pairs; keys need not be unique or sorted.
    fn from_keys(dims: Vec<u32>, mut keys: Vec<u128>) -> Self {
        keys.sort_unstable();
        let mut entries: Vec<(u128, u64)> = Vec::new();
        for k in keys {
            match entries.last_mut() {
                Some((last, c)) if *last == k => *c += 1,
                _ => entries.push((k, 1)),
            }
        }
        let total = entries.iter().map(|e| e.1).sum();
        JointHistogram {
            dims,
            entries,
            total,
        }
    }

    /// Histogram from explicit cell counts.
    pub fn from_counts(dims: &[u32], counts: &[(Vec<u32>, u64)]) -> Result<Self> {
        checked_cells(dims)?;
        let mut map = std::collections::BTreeMap::new();
        for (cell, c) in counts {
            if cell.len() != dims.len() {
                return Err(Error::LengthMismatch(format!(
                    "cell of rank {} in histogram of rank {}",
                    cell.len(),
                    dims.len()
                )));
            }
            for (&s, &d) in cell.iter().zip(dims) {
                if s >= d {
                    return Err(Error::SymbolOutOfRange { symbol: s, size: d });
                }
            }
            if *c > 0 {
                *map.entry(encode_key(dims, cell)).or_insert(0) += c;
            }
        }
        let entries: Vec<(u128, u64)> = map.into_iter().collect();
        let total = entries.iter().map(|e| e.1).sum();
        Ok(JointHistogram {
            dims: dims.to_vec(),
            entries,
            total,
        })
    }

    /// One-dimensional histogram from dense counts.
    pub fn from_dense(counts: &[u64]) -> Result<Self> {
        let cells: Vec<(Vec<u32>, u64)> = counts
            .iter()
            .enumerate()
            .map(|(i, &c)| (vec![i as u32], c))
            .collect();
        JointHistogram::from_counts(&[counts.len() as u32], &cells)
    }

    pub fn dims(&self) -> &[u32] {
        &self.dims
    }

    pub fn total(&self) -> u64 {
        self.total
    }

    /// Number of cells in the product alphabet.
    pub fn cells(&self) -> u128 {
        self.dims.iter().map(|&d| u128::from(d)).product()
    }

    /// Number of cells with a non-zero count.
    pub fn occupied(&self) -> usize {
        self.entries.len()
    }

    pub fn entries(&self) -> &[(u128, u64)] {
        &self.entries
    }

    pub fn count(&self, cell: &[u32]) -> u64 {
        let key = encode_key(&self.dims, cell);
        self.entries
            .binary_search_by_key(&key, |e| e.0)
            .map_or(0, |i| self.entries[i].1)
    }

    pub fn decode(&self, key: u128) -> Vec<u32> {
        decode_key(&self.dims, key)
    }

    /// Sum out every axis not listed in `axes`; the result keeps `axes` order.
    pub fn marginal(&self, axes: &[usize]) -> JointHistogram {
        let dims: Vec<u32> = axes.iter().map(|&a| self.dims[a]).collect();
        let strides = strides(&self.dims);
        let mut pairs: Vec<(u128, u64)> = self
            .entries
            .iter()
            .map(|&(key, c)| {
                let k = axes.iter().fold(0u128, |acc, &a| {
                    acc * u128::from(self.dims[a]) + (key / strides[a]) % u128::from(self.dims[a])
                });
                (k, c)
            })
            .collect();
        pairs.sort_unstable_by_key(|e| e.0);
        let mut entries: Vec<(u128, u64)> = Vec::with_capacity(pairs.len());
        for (k, c) in pairs {
            match entries.last_mut() {
                Some((last, acc)) if *last == k => *acc += c,
                _ => entries.push((k, c)),
            }
        }
        JointHistogram {
            dims,
            entries,
            total: self.total,
        }
    }
}

fn strides(dims: &[u32]) -> Vec<u128> {
    let mut s = vec![1u128; dims.len()];
    for i in (0..dims.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * u128::from(dims[i + 1]);
    }
    s
}

fn encode_key(dims: &[u32], cell: &[u32]) -> u128 {
    cell.iter()
        .zip(dims)
        .fold(0u128, |acc, (&s, &d)| acc * u128::from(d) + u128::from(s))
}

fn decode_key(dims: &[u32], mut key: u128) -> Vec<u32> {
    let mut cell = vec![0u32; dims.len()];
    for (slot, &d) in cell.iter_mut().zip(dims).rev() {
        *slot = (key % u128::from(d)) as u32;
        key /= u128::from(d);
    }
    cell
}

/// Joint histogram of rows aligned by realization index:
/// `counts[c1, .., cd] = #{ j : rows[0][j] = c1, .., rows[d-1][j] = cd }`.
pub fn joint_histogram(rows: &[&[u32]], dims: &[u32]) -> Result<JointHistogram> {
    if rows.len() != dims.len() {
        return Err(Error::LengthMismatch(format!(
            "{} rows for {} dims",
            rows.len(),
            dims.len()
        )));
    }
    checked_cells(dims)?;
    let n = rows.first().map_or(0, |r| r.len());
    if let Some(r) = rows.iter().find(|r| r.len() != n) {
        return Err(Error::LengthMismatch(format!("row of length {} vs {n}", r.len())));
    }
    for (r, &d) in rows.iter().zip(dims) {
        if let Some(&s) = r.iter().find(|&&s| s >= d) {
            return Err(Error::SymbolOutOfRange { symbol: s, size: d });
        }
    }
    let mut keys = vec![0u128; n];
    for (r, &d) in rows.iter().zip(dims) {
        let d = u128::from(d);
        for (k, &s) in keys.iter_mut().zip(r.iter()) {
            *k = *k * d + u128::from(s);
        }
    }
    Ok(JointHistogram::from_keys(dims.to_vec(), keys))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    #[test]
    fn histogram_examples() {
        let h = joint_histogram(&[&[0, 1], &[0, 1]], &[2, 2]).unwrap();
        assert_eq!(h.count(&[0, 0]), 1);
        assert_eq!(h.count(&[1, 1]), 1);
        assert_eq!(h.count(&[0, 1]), 0);
        assert_eq!(h.count(&[1, 0]), 0);
        assert_eq!(h.total(), 2);
        let h = joint_histogram(&[&[0, 0, 1]], &[2]).unwrap();
        assert_eq!((h.count(&[0]), h.count(&[1])), (2, 1));
    }

    #[test]
    fn histogram_errors() {
        assert!(matches!(
            joint_histogram(&[&[0, 1], &[0]], &[2, 2]),
            Err(Error::LengthMismatch(_))
        ));
        assert!(matches!(
            joint_histogram(&[&[0, 2]], &[2]),
            Err(Error::SymbolOutOfRange { symbol: 2, size: 2 })
        ));
    }

    #[test]
    fn independent_uniform_cells_within_four_sigma() {
        let n = 100_000usize;
        let mut rng = rng::stream(11, 0);
        let a: Vec<u32> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let b: Vec<u32> = (0..n).map(|_| rng.random_range(0..4)).collect();
        let h = joint_histogram(&[&a, &b], &[4, 4]).unwrap();
        let mean = n as f64 / 16.0;
        let sigma = (n as f64 * (1.0 / 16.0) * (15.0 / 16.0)).sqrt();
        for i in 0..4 {
            for j in 0..4 {
                let c = h.count(&[i, j]) as f64;
                assert!((c - mean).abs() < 4.0 * sigma, "cell ({i},{j}) = {c}");
            }
        }
    }

    proptest! {
        #[test]
        fn marginal_equals_row_histogram(
            rows in proptest::collection::vec(proptest::collection::vec(0u32..5, 40), 3)
        ) {
            let refs: Vec<&[u32]> = rows.iter().map(Vec::as_slice).collect();
            let joint = joint_histogram(&refs, &[5, 5, 5]).unwrap();
            for axis in 0..3 {
                let direct = joint_histogram(&[refs[axis]], &[5]).unwrap();
                prop_assert_eq!(joint.marginal(&[axis]), direct);
            }
            let pair = joint_histogram(&[refs[2], refs[0]], &[5, 5]).unwrap();
            prop_assert_eq!(joint.marginal(&[2, 0]), pair);
        }

        #[test]
        fn encode_is_equivariant_under_relabeling(
            pts in proptest::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 1..30),
            shift in 0usize..4,
        ) {
            let cents = vec![vec![0.0, 0.0], vec![3.0, 1.0], vec![-2.0, 2.5], vec![1.0, -4.0]];
            let cb = Codebook::new(cents.clone()).unwrap();
            let mut rotated = cents.clone();
            rotated.rotate_left(shift);
            let cb2 = Codebook::new(rotated).unwrap();
            for (x, y) in pts {
                let a = cb.nearest(&[x, y]) as usize;
                let b = cb2.nearest(&[x, y]) as usize;
                // Same centroid, up to the relabeling (no exact ties at random points).
                prop_assert_eq!(cents[a].clone(), cents[(b + shift) % 4].clone());
            }
        }
    }

    #[test]
    fn nearest_centroid_rules() {
        let cb = Codebook::new(vec![
            vec![0.0, 0.0],
            vec![1.0, 0.0],
            vec![3.0, 0.0],
            vec![5.0, 5.0],
        ])
        .unwrap();
        assert_eq!(cb.nearest(&[5.0, 5.0]), 3);
        // Equidistant from centroids 1 and 2.
        assert_eq!(cb.nearest(&[2.0, 0.0]), 1);
        for (i, c) in cb.centroids.iter().enumerate() {
            assert_eq!(cb.nearest(c), i as u32);
        }
    }

    fn planted(seed: u64) -> (FeatureMatrix, Vec<usize>) {
        let mut rng = rng::stream(seed, 5);
        let mut fm = FeatureMatrix::new(2);
        let mut labels = Vec::new();
        for i in 0..400 {
            let c = i % 2;
            let base = if c == 0 { 0.0 } else { 10.0 };
            let x = base + rng.random_range(-0.5..0.5);
            let y = base + rng.random_range(-0.5..0.5);
            fm.push(&[x, y]).unwrap();
            labels.push(c);
        }
        (fm, labels)
    }

    #[test]
    fn kmeans_recovers_planted_clusters() {
        let (fm, labels) = planted(3);
        let cb = kmeans(&fm, 2, 9, 10_000).unwrap();
        // Means of the planted clusters, computed directly.
        let mut means = [[0.0; 2]; 2];
        for (i, &l) in labels.iter().enumerate() {
            means[l][0] += fm.row(i)[0] / 200.0;
            means[l][1] += fm.row(i)[1] / 200.0;
        }
        for m in means {
            let d = cb.centroids.iter().map(|c| dist2(c, &m).sqrt()).fold(f64::INFINITY, f64::min);
            assert!(d < 0.5, "no centroid near {m:?}");
        }
        let symbols = cb.encode_features(&fm).unwrap();
        let flip = symbols[0] as usize != labels[0];
        for (s, l) in symbols.iter().zip(&labels) {
            assert_eq!((*s as usize != *l), flip);
        }
        assert_eq!(cb, kmeans(&fm, 2, 9, 10_000).unwrap());
    }

    #[test]
    fn kmeans_edge_cases() {
        let (fm, _) = planted(4);
        let cb = kmeans(&fm, 1, 0, 10_000).unwrap();
        let mean_x = (0..fm.len()).map(|i| fm.row(i)[0]).sum::<f64>() / fm.len() as f64;
        assert!((cb.centroids[0][0] - mean_x).abs() < 1e-12);
        let same = FeatureMatrix::from_rows(&vec![vec![1.0, 2.0]; 10]).unwrap();
        assert!(matches!(kmeans(&same, 2, 0, 100), Err(Error::DegenerateData(_))));
        assert!(matches!(
            kmeans(&same, 16, 0, 100),
            Err(Error::InsufficientSamples { .. })
        ));
        let cb = kmeans(&fm, 2, 0, 10_000).unwrap();
        let wrong = FeatureMatrix::from_rows(&[vec![1.0, 2.0, 3.0]]).unwrap();
        assert!(matches!(
            cb.encode_features(&wrong),
            Err(Error::DimensionMismatch { expected: 2, got: 3 })
        ));
    }
}
