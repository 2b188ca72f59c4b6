//! Corpus-level DI matrices and nearest-neighbor classification.
//!
//! Symmetrized DI is a similarity: the nearest neighbors of a sequence are
//! the training sequences with the largest value.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{directed_information, DiOptions};
use crate::ingest::SymbolSequence;
use crate::rng::{self, hash_str};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiMatrix {
    pub ids: Vec<String>,
    pub labels: Vec<Option<String>>,
    /// `forward[i][j]` is DI from sequence `i` into sequence `j`; zero on the
    /// diagonal.
    pub forward: Vec<Vec<f64>>,
    /// `forward + forward^T`; zero on the diagonal.
    pub sym: Vec<Vec<f64>>,
}

impl DiMatrix {
    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|s| s == id)
    }

    /// Square CSV with an `id` corner cell and ids as header row and column.
    pub fn to_csv(&self, values: &[Vec<f64>]) -> String {
        let mut out = String::from("id");
        for id in &self.ids {
            out.push(',');
            out.push_str(id);
        }
        out.push('\n');
        for (id, row) in self.ids.iter().zip(values) {
            out.push_str(id);
            for v in row {
                out.push_str(&format!(",{v:.17e}"));
            }
            out.push('\n');
        }
        out
    }
}

/// DI for every ordered pair, evaluated in parallel. Results do not depend on
/// the schedule: each entry is a pure function of its pair.
pub fn pairwise_matrix(corpus: &[SymbolSequence], opts: &DiOptions) -> Result<DiMatrix> {
    let k = corpus.len();
    if k < 2 {
        return Err(Error::InsufficientSamples { needed: 2, got: k });
    }
    let pairs: Vec<(usize, usize)> = (0..k)
        .flat_map(|i| (0..k).filter(move |&j| j != i).map(move |j| (i, j)))
        .collect();
    let values: Vec<f64> = pairs
        .par_iter()
        .map(|&(i, j)| {
            directed_information(&corpus[i], &corpus[j], opts)
                .map(|r| r.value)
                .map_err(|e| Error::Pair {
                    from: corpus[i].sequence_id.clone(),
                    to: corpus[j].sequence_id.clone(),
                    source: Box::new(e),
                })
        })
        .collect::<Result<_>>()?;
    let mut forward = vec![vec![0.0; k]; k];
    for (&(i, j), v) in pairs.iter().zip(values) {
        forward[i][j] = v;
    }
    let mut sym = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..k {
            if i != j {
                sym[i][j] = forward[i][j] + forward[j][i];
            }
        }
    }
    Ok(DiMatrix {
        ids: corpus.iter().map(|s| s.sequence_id.clone()).collect(),
        labels: corpus.iter().map(|s| s.label.clone()).collect(),
        forward,
        sym,
    })
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub test: Vec<String>,
}

/// Stratified split of `(id, label)` items. The training total is
/// `round(ratio * N)`, shared among classes by largest remainder and clamped
/// so each class keeps at least one sequence on each side. Outputs follow
/// input order.
pub fn split(items: &[(String, String)], ratio: f64, seed: u64) -> Result<Split> {
    if !(ratio > 0.0 && ratio < 1.0) {
        return Err(Error::InvalidConfig(format!("split ratio {ratio} outside (0, 1)")));
    }
    if items.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut classes: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, (_, label)) in items.iter().enumerate() {
        classes.entry(label.as_str()).or_default().push(i);
    }
    if let Some((label, members)) = classes.iter().find(|(_, m)| m.len() < 2) {
        return Err(Error::ClassTooSmall {
            label: label.to_string(),
            count: members.len(),
        });
    }
    let target = (ratio * items.len() as f64).round() as usize;
    let exact: Vec<f64> = classes.values().map(|m| ratio * m.len() as f64).collect();
    let mut quota: Vec<usize> = exact.iter().map(|e| e.floor() as usize).collect();
    let mut order: Vec<usize> = (0..quota.len()).collect();
    order.sort_by(|&a, &b| {
        (exact[b] - exact[b].floor())
            .total_cmp(&(exact[a] - exact[a].floor()))
            .then(a.cmp(&b))
    });
    let extra = target.saturating_sub(quota.iter().sum());
    for &c in order.iter().take(extra) {
        quota[c] += 1;
    }
    let mut is_train = vec![false; items.len()];
    for ((label, members), q) in classes.iter().zip(quota) {
        let q = q.clamp(1, members.len() - 1);
        let mut shuffled = members.clone();
        shuffled.shuffle(&mut rng::stream(seed, hash_str(label)));
        for &i in &shuffled[..q] {
            is_train[i] = true;
        }
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (i, (id, _)) in items.iter().enumerate() {
        if is_train[i] {
            train.push(id.clone());
        } else {
            test.push(id.clone());
        }
    }
    Ok(Split { train, test })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub id: String,
    pub predicted: String,
    /// Largest similarity to a training sequence of each class.
    pub class_scores: BTreeMap<String, f64>,
}

fn desc(a: f64, b: f64) -> Ordering {
    b.total_cmp(&a)
}

/// k-nearest-neighbor vote on symmetrized DI. Label ties are broken by
/// comparing the members' similarities in descending order, then by the
/// smallest neighbor id.
pub fn nn_classify(
    matrix: &DiMatrix,
    train: &[(String, String)],
    test: &[String],
    k_neighbors: usize,
) -> Result<Vec<Prediction>> {
    if train.is_empty() {
        return Err(Error::NoTrainData);
    }
    if k_neighbors == 0 {
        return Err(Error::InvalidConfig("k_neighbors must be >= 1".into()));
    }
    let locate = |id: &str| {
        matrix
            .index_of(id)
            .ok_or_else(|| Error::InvalidConfig(format!("sequence {id} not in matrix")))
    };
    let train_idx: Vec<usize> = train.iter().map(|(id, _)| locate(id)).collect::<Result<_>>()?;
    test.iter()
        .map(|id| {
            let t = locate(id)?;
            let mut ranked: Vec<usize> = (0..train.len()).filter(|&r| train_idx[r] != t).collect();
            if ranked.is_empty() {
                return Err(Error::NoTrainData);
            }
            let sim = |r: usize| matrix.sym[t][train_idx[r]];
            ranked.sort_by(|&a, &b| desc(sim(a), sim(b)).then(train[a].0.cmp(&train[b].0)));
            let mut class_scores: BTreeMap<String, f64> = BTreeMap::new();
            for &r in &ranked {
                let e = class_scores.entry(train[r].1.clone()).or_insert(f64::NEG_INFINITY);
                *e = e.max(sim(r));
            }
            // label -> (similarities in descending order, smallest id)
            let mut votes: BTreeMap<&str, (Vec<f64>, &str)> = BTreeMap::new();
            for &r in ranked.iter().take(k_neighbors) {
                let (tid, label) = (&train[r].0, &train[r].1);
                let v = votes.entry(label.as_str()).or_insert((Vec::new(), tid.as_str()));
                v.0.push(sim(r));
                if tid.as_str() < v.1 {
                    v.1 = tid.as_str();
                }
            }
            let better = |a: &(Vec<f64>, &str), b: &(Vec<f64>, &str)| -> Ordering {
                a.0.len()
                    .cmp(&b.0.len())
                    .then_with(|| {
                        for (x, y) in a.0.iter().zip(&b.0) {
                            match x.total_cmp(y) {
                                Ordering::Equal => continue,
                                o => return o,
                            }
                        }
                        Ordering::Equal
                    })
                    .then_with(|| b.1.cmp(a.1))
            };
            let winner = votes
                .iter()
                .max_by(|a, b| better(a.1, b.1))
                .map(|(label, _)| label.to_string())
                .expect("at least one neighbor");
            Ok(Prediction {
                id: id.clone(),
                predicted: winner,
                class_scores,
            })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_test: usize,
    pub accuracy: f64,
    /// Row and column order of `confusion`.
    pub classes: Vec<String>,
    /// `confusion[truth][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    /// Average precision of ranking test sequences by class score; absent
    /// for classes with no test members.
    pub per_class_ap: BTreeMap<String, Option<f64>>,
}

/// Accuracy, confusion matrix and per-class average precision.
pub fn evaluate(predictions: &[Prediction], truth: &[String]) -> Result<EvalReport> {
    if predictions.len() != truth.len() {
        return Err(Error::LengthMismatch(format!(
            "{} predictions for {} labels",
            predictions.len(),
            truth.len()
        )));
    }
    if predictions.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut classes: Vec<String> = truth
        .iter()
        .cloned()
        .chain(predictions.iter().map(|p| p.predicted.clone()))
        .chain(predictions.iter().flat_map(|p| p.class_scores.keys().cloned()))
        .collect();
    classes.sort();
    classes.dedup();
    let pos = |c: &str| classes.iter().position(|x| x == c).expect("class listed");
    let mut confusion = vec![vec![0; classes.len()]; classes.len()];
    let mut correct = 0;
    for (p, t) in predictions.iter().zip(truth) {
        confusion[pos(t)][pos(&p.predicted)] += 1;
        if &p.predicted == t {
            correct += 1;
        }
    }
    let mut per_class_ap = BTreeMap::new();
    for c in &classes {
        let relevant = truth.iter().filter(|t| *t == c).count();
        if relevant == 0 {
            per_class_ap.insert(c.clone(), None);
            continue;
        }
        let mut order: Vec<usize> = (0..predictions.len()).collect();
        let score = |i: usize| predictions[i].class_scores.get(c).copied().unwrap_or(f64::NEG_INFINITY);
        order.sort_by(|&a, &b| desc(score(a), score(b)).then(predictions[a].id.cmp(&predictions[b].id)));
        let mut hits = 0;
        let mut sum = 0.0;
        for (rank, &i) in order.iter().enumerate() {
            if &truth[i] == c {
                hits += 1;
                sum += hits as f64 / (rank + 1) as f64;
            }
        }
        per_class_ap.insert(c.clone(), Some(sum / relevant as f64));
    }
    Ok(EvalReport {
        n_test: predictions.len(),
        accuracy: correct as f64 / predictions.len() as f64,
        classes,
        confusion,
        per_class_ap,
    })
}
