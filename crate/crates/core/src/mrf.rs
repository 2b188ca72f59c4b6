//! Pictorial-structure Markov random field over part candidates.
//!
//! Each (person, part) slot is a discrete variable whose states are the
//! candidate detections for that slot. The unnormalized log density of a
//! configuration is
//!
//! ```text
//! sum of unary scores
//!   - gamma1 * sum over star edges (torso, limb) of d^2
//!   - gamma2 * sum over inter-person edges of d^2
//! ```
//!
//! with `d` the Euclidean distance between candidate centers. Inter-person
//! edges join torso-torso, left_arm-left_arm and right_arm-right_arm for every
//! pair of persons, and are dropped entirely when interaction is disabled.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{DetectionSequence, FrameDetections, ModelArity, PartId};
use crate::rng::{self, SodaRng};

/// Upper bound on enumerated joint states.
pub const MAX_ENUMERATED_STATES: usize = 1_000_000;
const IMPORTANCE_SAMPLES: usize = 4096;
pub const GAMMA_RANGE: (f64, f64) = (1e-4, 1e2);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PictorialModel {
    pub arity: ModelArity,
    pub persons: usize,
    pub gamma1: f64,
    pub gamma2: f64,
    pub interaction: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Variable {
    pub person: usize,
    pub part: PartId,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum EdgeKind {
    /// Torso to limb within one person.
    Intra,
    /// Same part across two persons.
    Inter,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub kind: EdgeKind,
}

impl PictorialModel {
    pub fn new(
        arity: ModelArity,
        persons: usize,
        gamma1: f64,
        gamma2: f64,
        interaction: bool,
    ) -> Result<Self> {
        if persons == 0 {
            return Err(Error::InvalidConfig("persons must be >= 1".into()));
        }
        if !(gamma1.is_finite() && gamma1 >= 0.0) || !(gamma2.is_finite() && gamma2 >= 0.0) {
            return Err(Error::InvalidConfig(format!(
                "gammas must be finite and non-negative, got ({gamma1}, {gamma2})"
            )));
        }
        Ok(PictorialModel {
            arity,
            persons,
            gamma1,
            gamma2,
            interaction,
        })
    }

    /// Variables in sweep order: person-major, parts in canonical order.
    pub fn variables(&self) -> Vec<Variable> {
        (0..self.persons)
            .flat_map(|person| {
                self.arity
                    .parts()
                    .iter()
                    .map(move |&part| Variable { person, part })
            })
            .collect()
    }

    fn var_index(&self, person: usize, part: PartId) -> usize {
        let slot = self
            .arity
            .parts()
            .iter()
            .position(|&p| p == part)
            .expect("part belongs to arity");
        person * self.arity.count() + slot
    }

    pub fn edges(&self) -> Vec<Edge> {
        let mut edges = Vec::new();
        for person in 0..self.persons {
            let torso = self.var_index(person, PartId::Torso);
            for &part in &self.arity.parts()[1..] {
                edges.push(Edge {
                    a: torso,
                    b: self.var_index(person, part),
                    kind: EdgeKind::Intra,
                });
            }
        }
        if self.interaction {
            for pa in 0..self.persons {
                for pb in pa + 1..self.persons {
                    for part in [PartId::Torso, PartId::LeftArm, PartId::RightArm] {
                        edges.push(Edge {
                            a: self.var_index(pa, part),
                            b: self.var_index(pb, part),
                            kind: EdgeKind::Inter,
                        });
                    }
                }
            }
        }
        edges
    }

    /// Bind the model to one frame's candidates.
    pub fn field(&self, frame: &FrameDetections) -> Result<PairwiseField> {
        if frame.persons.len() != self.persons {
            return Err(Error::InvalidAssignment(format!(
                "frame {} has {} persons, model expects {}",
                frame.frame_index,
                frame.persons.len(),
                self.persons
            )));
        }
        let vars = self
            .variables()
            .into_iter()
            .map(|v| {
                let cands = frame.persons[v.person].candidates(v.part);
                if cands.is_empty() {
                    return Err(Error::InvalidAssignment(format!(
                        "frame {}: person {} has no {} candidate",
                        frame.frame_index, frame.persons[v.person].id, v.part
                    )));
                }
                Ok(FieldVar {
                    points: cands.iter().map(|c| (c.x, c.y)).collect(),
                    unary: cands.iter().map(|c| c.score).collect(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let edges = self.edges().into_iter().map(|e| (e.a, e.b, e.kind)).collect();
        PairwiseField::new(vars, edges, self.gamma1, self.gamma2)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldVar {
    pub points: Vec<(f64, f64)>,
    pub unary: Vec<f64>,
}

impl FieldVar {
    pub fn len(&self) -> usize {
        self.unary.len()
    }

    pub fn is_empty(&self) -> bool {
        self.unary.is_empty()
    }
}

#[derive(Clone, Debug)]
struct FieldEdge {
    a: usize,
    b: usize,
    kind: EdgeKind,
    /// Squared center distances, row-major `[ca][cb]`.
    d2: Vec<f64>,
    nb: usize,
}

impl FieldEdge {
    fn d2(&self, ca: usize, cb: usize) -> f64 {
        self.d2[ca * self.nb + cb]
    }
}

/// A discrete pairwise MRF with distance-based potentials, bound to one frame.
#[derive(Clone, Debug)]
pub struct PairwiseField {
    vars: Vec<FieldVar>,
    edges: Vec<FieldEdge>,
    /// Per variable: (edge index, variable is endpoint `a`).
    adj: Vec<Vec<(usize, bool)>>,
    gamma1: f64,
    gamma2: f64,
}

/// An assignment of one candidate index to every variable.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FrameConfiguration {
    pub assignment: Vec<usize>,
}

impl PairwiseField {
    pub fn new(
        vars: Vec<FieldVar>,
        edges: Vec<(usize, usize, EdgeKind)>,
        gamma1: f64,
        gamma2: f64,
    ) -> Result<Self> {
        for (i, v) in vars.iter().enumerate() {
            if v.is_empty() || v.points.len() != v.unary.len() {
                return Err(Error::InvalidAssignment(format!(
                    "variable {i} needs matching non-empty points and scores"
                )));
            }
        }
        let mut adj = vec![Vec::new(); vars.len()];
        let mut fe = Vec::with_capacity(edges.len());
        for (idx, (a, b, kind)) in edges.into_iter().enumerate() {
            if a >= vars.len() || b >= vars.len() || a == b {
                return Err(Error::InvalidAssignment(format!("bad edge ({a}, {b})")));
            }
            let (pa, pb) = (&vars[a].points, &vars[b].points);
            let mut d2 = Vec::with_capacity(pa.len() * pb.len());
            for &(xa, ya) in pa {
                for &(xb, yb) in pb {
                    d2.push((xa - xb).powi(2) + (ya - yb).powi(2));
                }
            }
            adj[a].push((idx, true));
            adj[b].push((idx, false));
            fe.push(FieldEdge {
                a,
                b,
                kind,
                d2,
                nb: pb.len(),
            });
        }
        Ok(PairwiseField {
            vars,
            edges: fe,
            adj,
            gamma1,
            gamma2,
        })
    }

    pub fn num_vars(&self) -> usize {
        self.vars.len()
    }

    pub fn vars(&self) -> &[FieldVar] {
        &self.vars
    }

    pub fn set_gammas(&mut self, gamma1: f64, gamma2: f64) {
        self.gamma1 = gamma1;
        self.gamma2 = gamma2;
    }

    fn weight(&self, kind: EdgeKind) -> f64 {
        match kind {
            EdgeKind::Intra => self.gamma1,
            EdgeKind::Inter => self.gamma2,
        }
    }

    /// Product of candidate-list sizes, as a float to avoid overflow.
    pub fn state_space(&self) -> f64 {
        self.vars.iter().map(|v| v.len() as f64).product()
    }

    fn check(&self, cfg: &[usize]) -> Result<()> {
        if cfg.len() != self.vars.len() {
            return Err(Error::InvalidAssignment(format!(
                "{} indices for {} variables",
                cfg.len(),
                self.vars.len()
            )));
        }
        for (i, (&c, v)) in cfg.iter().zip(&self.vars).enumerate() {
            if c >= v.len() {
                return Err(Error::InvalidAssignment(format!(
                    "variable {i}: candidate {c} of {}",
                    v.len()
                )));
            }
        }
        Ok(())
    }

    /// Sufficient statistics `(unary sum, intra d^2 sum, inter d^2 sum)`.
    fn stats(&self, cfg: &[usize]) -> (f64, f64, f64) {
        let unary = cfg.iter().zip(&self.vars).map(|(&c, v)| v.unary[c]).sum();
        let (mut s1, mut s2) = (0.0, 0.0);
        for e in &self.edges {
            let d2 = e.d2(cfg[e.a], cfg[e.b]);
            match e.kind {
                EdgeKind::Intra => s1 += d2,
                EdgeKind::Inter => s2 += d2,
            }
        }
        (unary, s1, s2)
    }

    pub fn log_potential(&self, cfg: &FrameConfiguration) -> Result<f64> {
        self.check(&cfg.assignment)?;
        Ok(self.log_potential_unchecked(&cfg.assignment))
    }

    fn log_potential_unchecked(&self, cfg: &[usize]) -> f64 {
        let (u, s1, s2) = self.stats(cfg);
        u - self.gamma1 * s1 - self.gamma2 * s2
    }

    /// Highest-scoring candidate per variable, ties to the lowest index.
    pub fn top_configuration(&self) -> FrameConfiguration {
        FrameConfiguration {
            assignment: self.vars.iter().map(|v| argmax(&v.unary)).collect(),
        }
    }

    fn local_logits(&self, v: usize, cfg: &[usize], out: &mut Vec<f64>) {
        out.clear();
        out.extend_from_slice(&self.vars[v].unary);
        for &(ei, is_a) in &self.adj[v] {
            let e = &self.edges[ei];
            let w = self.weight(e.kind);
            if w == 0.0 {
                continue;
            }
            if is_a {
                let other = cfg[e.b];
                for (c, l) in out.iter_mut().enumerate() {
                    *l -= w * e.d2(c, other);
                }
            } else {
                let other = cfg[e.a];
                for (c, l) in out.iter_mut().enumerate() {
                    *l -= w * e.d2(other, c);
                }
            }
        }
    }

    pub fn exact_joint(&self) -> Result<DistributionTable> {
        let size = self.state_space();
        if size > MAX_ENUMERATED_STATES as f64 {
            return Err(Error::StateSpaceTooLarge {
                size,
                limit: MAX_ENUMERATED_STATES as f64,
            });
        }
        let radices: Vec<usize> = self.vars.iter().map(FieldVar::len).collect();
        let mut logp = Vec::with_capacity(size as usize);
        for_each_state(&radices, |cfg| logp.push(self.log_potential_unchecked(cfg)));
        let lz = log_sum_exp(&logp);
        let probs = logp.iter().map(|l| (l - lz).exp()).collect();
        Ok(DistributionTable { radices, probs })
    }

    /// Run `burnin` full sweeps, then record the configuration after each of
    /// `n` further sweeps. Starts from the top-scoring configuration.
    pub fn gibbs(&self, burnin: usize, n: usize, rng: &mut SodaRng) -> Vec<u16> {
        let nv = self.vars.len();
        let mut cfg = self.top_configuration().assignment;
        let mut out = Vec::with_capacity(n * nv);
        let mut logits = Vec::new();
        for sweep in 0..burnin + n {
            for v in 0..nv {
                if self.vars[v].len() == 1 {
                    // Keep draws aligned with fields that have more candidates.
                    let _: f64 = rng.random();
                    continue;
                }
                self.local_logits(v, &cfg, &mut logits);
                cfg[v] = sample_logits(&mut logits, rng);
            }
            if sweep >= burnin {
                out.extend(cfg.iter().map(|&c| c as u16));
            }
        }
        out
    }

    /// Log normalizing constant. Leaf variables are summed out analytically
    /// and the remaining core is enumerated; when the core exceeds
    /// [`MAX_ENUMERATED_STATES`] a self-normalized importance estimate with the
    /// unary product distribution as proposal is used instead (seeded, so the
    /// estimate is a deterministic function of the field).
    pub fn log_partition(&self, seed: u64) -> f64 {
        let nv = self.vars.len();
        let degree: Vec<usize> = self.adj.iter().map(Vec::len).collect();
        // A variable is eliminated as a leaf when it has exactly one edge and
        // its neighbor stays in the core.
        let mut leaf_of = vec![None; nv];
        for v in 0..nv {
            if degree[v] == 1 {
                let (ei, is_a) = self.adj[v][0];
                let e = &self.edges[ei];
                let u = if is_a { e.b } else { e.a };
                if degree[u] > 1 || u < v {
                    leaf_of[v] = Some((ei, u, is_a));
                }
            }
        }
        let mut total = 0.0;
        let mut core = Vec::new();
        for v in 0..nv {
            if degree[v] == 0 {
                total += log_sum_exp(&self.vars[v].unary);
            } else if leaf_of[v].is_none() {
                core.push(v);
            }
        }
        let core_size: f64 = core.iter().map(|&v| self.vars[v].len() as f64).product();
        if core_size > MAX_ENUMERATED_STATES as f64 {
            return total + self.log_partition_importance(seed);
        }
        // messages[v][c_u]: leaf v summed out given its neighbor's candidate.
        let mut messages: Vec<(usize, Vec<f64>)> = Vec::new();
        for v in 0..nv {
            if let Some((ei, u, leaf_is_a)) = leaf_of[v] {
                let e = &self.edges[ei];
                let w = self.weight(e.kind);
                let mut buf = Vec::with_capacity(self.vars[v].len());
                let msg = (0..self.vars[u].len())
                    .map(|cu| {
                        buf.clear();
                        buf.extend(self.vars[v].unary.iter().enumerate().map(|(cv, s)| {
                            let d2 = if leaf_is_a { e.d2(cv, cu) } else { e.d2(cu, cv) };
                            s - w * d2
                        }));
                        log_sum_exp(&buf)
                    })
                    .collect();
                messages.push((u, msg));
            }
        }
        let in_core: Vec<bool> = (0..nv).map(|v| core.contains(&v)).collect();
        let core_edges: Vec<&FieldEdge> = self
            .edges
            .iter()
            .filter(|e| in_core[e.a] && in_core[e.b])
            .collect();
        let radices: Vec<usize> = core.iter().map(|&v| self.vars[v].len()).collect();
        let mut full = vec![0usize; nv];
        let mut terms = Vec::with_capacity(core_size as usize);
        for_each_state(&radices, |cc| {
            for (k, &v) in core.iter().enumerate() {
                full[v] = cc[k];
            }
            let mut s: f64 = core.iter().map(|&v| self.vars[v].unary[full[v]]).sum();
            for e in &core_edges {
                s -= self.weight(e.kind) * e.d2(full[e.a], full[e.b]);
            }
            for (u, msg) in &messages {
                s += msg[full[*u]];
            }
            terms.push(s);
        });
        total + log_sum_exp(&terms)
    }

    fn log_partition_importance(&self, seed: u64) -> f64 {
        let mut rng = rng::stream(seed, 0x15);
        let unary_lz: f64 = self
            .vars
            .iter()
            .filter(|v| !v.is_empty())
            .map(|v| log_sum_exp(&v.unary))
            .sum();
        let mut cfg = vec![0usize; self.vars.len()];
        let mut weights = Vec::with_capacity(IMPORTANCE_SAMPLES);
        let mut buf = Vec::new();
        for _ in 0..IMPORTANCE_SAMPLES {
            for (v, var) in self.vars.iter().enumerate() {
                buf.clear();
                buf.extend_from_slice(&var.unary);
                cfg[v] = sample_logits(&mut buf, &mut rng);
            }
            let (_, s1, s2) = self.stats(&cfg);
            weights.push(-self.gamma1 * s1 - self.gamma2 * s2);
        }
        unary_lz + log_sum_exp(&weights) - (IMPORTANCE_SAMPLES as f64).ln()
    }
}

fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

pub(crate) fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// Draw an index with probability proportional to `exp(logits)`.
/// Overwrites `logits` with unnormalized weights.
fn sample_logits(logits: &mut [f64], rng: &mut SodaRng) -> usize {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for l in logits.iter_mut() {
        *l = (*l - m).exp();
        total += *l;
    }
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in logits.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    logits.len() - 1
}

/// Odometer over mixed-radix states, last variable fastest.
fn for_each_state(radices: &[usize], mut f: impl FnMut(&[usize])) {
    let mut cfg = vec![0usize; radices.len()];
    if radices.contains(&0) {
        return;
    }
    loop {
        f(&cfg);
        let mut i = radices.len();
        loop {
            if i == 0 {
                return;
            }
            i -= 1;
            cfg[i] += 1;
            if cfg[i] < radices[i] {
                break;
            }
            cfg[i] = 0;
        }
    }
}

/// Exact joint distribution over all configurations of a small field.
#[derive(Clone, Debug, PartialEq)]
pub struct DistributionTable {
    pub radices: Vec<usize>,
    pub probs: Vec<f64>,
}

impl DistributionTable {
    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }

    pub fn index_of(&self, cfg: &[usize]) -> usize {
        cfg.iter()
            .zip(&self.radices)
            .fold(0, |acc, (&c, &r)| acc * r + c)
    }

    pub fn state(&self, mut index: usize) -> FrameConfiguration {
        let mut assignment = vec![0; self.radices.len()];
        for (slot, &r) in assignment.iter_mut().zip(&self.radices).rev() {
            *slot = index % r;
            index /= r;
        }
        FrameConfiguration { assignment }
    }

    pub fn prob(&self, cfg: &FrameConfiguration) -> f64 {
        self.probs[self.index_of(&cfg.assignment)]
    }
}

/// `n` joint realizations of one frame's field, stored flat.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SampleSet {
    pub frame_index: u64,
    pub n: usize,
    pub num_vars: usize,
    data: Vec<u16>,
}

impl SampleSet {
    pub fn sample(&self, j: usize) -> &[u16] {
        &self.data[j * self.num_vars..(j + 1) * self.num_vars]
    }

    pub fn configuration(&self, j: usize) -> FrameConfiguration {
        FrameConfiguration {
            assignment: self.sample(j).iter().map(|&c| usize::from(c)).collect(),
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = &[u16]> {
        self.data.chunks_exact(self.num_vars.max(1)).take(self.n)
    }
}

pub fn log_potential(
    model: &PictorialModel,
    frame: &FrameDetections,
    cfg: &FrameConfiguration,
) -> Result<f64> {
    model.field(frame)?.log_potential(cfg)
}

pub fn exact_joint(model: &PictorialModel, frame: &FrameDetections) -> Result<DistributionTable> {
    model.field(frame)?.exact_joint()
}

pub const DEFAULT_BURNIN: usize = 500;
pub const DEFAULT_SAMPLES: usize = 1000;

pub fn gibbs_sample(
    model: &PictorialModel,
    frame: &FrameDetections,
    burnin: usize,
    n: usize,
    seed: u64,
) -> Result<SampleSet> {
    if n == 0 {
        return Err(Error::InvalidConfig("gibbs sample count must be >= 1".into()));
    }
    let field = model.field(frame)?;
    if field.vars().iter().any(|v| v.len() > usize::from(u16::MAX)) {
        return Err(Error::InvalidAssignment("more than 65535 candidates".into()));
    }
    let mut rng = rng::stream(seed, 0);
    let data = field.gibbs(burnin, n, &mut rng);
    Ok(SampleSet {
        frame_index: frame.frame_index,
        n,
        num_vars: field.num_vars(),
        data,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaFit {
    pub gamma1: f64,
    pub gamma2: f64,
    /// Set when the observed geometry cannot identify a fitted gamma; that
    /// gamma is returned at the lower search bound.
    pub degenerate: bool,
    pub log_likelihood: f64,
}

struct FitFrame {
    field: PairwiseField,
    obs: (f64, f64, f64),
    seed: u64,
}

fn total_log_likelihood(frames: &mut [FitFrame], g1: f64, g2: f64) -> f64 {
    let per: Vec<f64> = frames
        .par_iter_mut()
        .map(|f| {
            f.field.set_gammas(g1, g2);
            let (u, s1, s2) = f.obs;
            u - g1 * s1 - g2 * s2 - f.field.log_partition(f.seed)
        })
        .collect();
    per.iter().sum()
}

/// Maximize a unimodal function on `[lo, hi]`.
fn golden_section_max(mut f: impl FnMut(f64) -> f64, lo: f64, hi: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let (mut a, mut b) = (lo, hi);
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    let mid = 0.5 * (a + b);
    // The bracket may have collapsed onto a boundary.
    [lo, mid, hi]
        .into_iter()
        .map(|x| (x, f(x)))
        .fold((mid, f64::NEG_INFINITY), |best, cur| if cur.1 > best.1 { cur } else { best })
        .0
}

/// Maximum-likelihood gammas. The observation in each frame is its
/// top-scoring configuration; the likelihood is that configuration's
/// probability under the frame's field. Coordinate-wise golden-section
/// search, two passes, over [`GAMMA_RANGE`].
pub fn fit_gammas(sequences: &[DetectionSequence], template: &PictorialModel) -> Result<GammaFit> {
    if sequences.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut frames = Vec::new();
    for seq in sequences {
        for f in &seq.frames {
            let field = template.field(f).map_err(|e| {
                e.context(format!("sequence {} frame {}", seq.sequence_id, f.frame_index))
            })?;
            let obs = field.stats(&field.top_configuration().assignment);
            let seed = rng::derive_seed(rng::hash_str(&seq.sequence_id), f.frame_index);
            frames.push(FitFrame { field, obs, seed });
        }
    }
    if frames.is_empty() {
        return Err(Error::EmptySequence);
    }
    let informative = |kind: EdgeKind| {
        frames.iter().any(|f| {
            f.field
                .edges
                .iter()
                .any(|e| e.kind == kind && e.d2.iter().any(|&d| d > 0.0))
        })
    };
    let fit_g1 = informative(EdgeKind::Intra);
    let has_inter = template.interaction && template.persons > 1;
    let fit_g2 = has_inter && informative(EdgeKind::Inter);
    let degenerate = !fit_g1 || (has_inter && !fit_g2);

    let (lo, hi) = GAMMA_RANGE;
    let tol = 1e-5;
    let mut g1 = if fit_g1 { template.gamma1.clamp(lo, hi) } else { lo };
    let mut g2 = if has_inter {
        if fit_g2 {
            template.gamma2.clamp(lo, hi)
        } else {
            lo
        }
    } else {
        template.gamma2
    };
    for _pass in 0..2 {
        if fit_g1 {
            g1 = golden_section_max(|g| total_log_likelihood(&mut frames, g, g2), lo, hi, tol);
        }
        if fit_g2 {
            g2 = golden_section_max(|g| total_log_likelihood(&mut frames, g1, g), lo, hi, tol);
        }
    }
    let log_likelihood = total_log_likelihood(&mut frames, g1, g2);
    Ok(GammaFit {
        gamma1: g1,
        gamma2: g2,
        degenerate,
        log_likelihood,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{Person, PartState};
    use std::collections::BTreeMap;

    fn person(id: i64, parts: &[(PartId, &[(f64, f64, f64)])]) -> Person {
        let mut map = BTreeMap::new();
        for (part, cands) in parts {
            map.insert(
                *part,
                cands
                    .iter()
                    .map(|&(x, y, score)| PartState {
                        part: *part,
                        x,
                        y,
                        score,
                    })
                    .collect(),
            );
        }
        Person { id, parts: map }
    }

    fn frame(persons: Vec<Person>) -> FrameDetections {
        FrameDetections {
            frame_index: 0,
            persons,
        }
    }

    #[test]
    fn star_potential_example() {
        let model = PictorialModel::new(ModelArity::Three, 1, 1.0, 0.0, true).unwrap();
        let f = frame(vec![person(
            0,
            &[
                (PartId::Torso, &[(0.0, 0.0, 0.0)]),
                (PartId::LeftArm, &[(0.0, 1.0, 0.0)]),
                (PartId::RightArm, &[(0.0, 1.0, 0.0)]),
            ],
        )]);
        let cfg = FrameConfiguration {
            assignment: vec![0, 0, 0],
        };
        assert_eq!(log_potential(&model, &f, &cfg).unwrap(), -2.0);
    }

    #[test]
    fn colocated_parts_have_zero_potential() {
        let model = PictorialModel::new(ModelArity::Five, 1, 7.3, 0.0, true).unwrap();
        let at = [(2.0, 3.0, 0.0)];
        let f = frame(vec![person(
            0,
            &[
                (PartId::Torso, &at),
                (PartId::LeftArm, &at),
                (PartId::RightArm, &at),
                (PartId::LeftLeg, &at),
                (PartId::RightLeg, &at),
            ],
        )]);
        let cfg = FrameConfiguration {
            assignment: vec![0; 5],
        };
        assert_eq!(log_potential(&model, &f, &cfg).unwrap(), 0.0);
    }

    #[test]
    fn disabled_interaction_ignores_inter_person_distance() {
        let make = |dx: f64| {
            frame(vec![
                person(
                    0,
                    &[
                        (PartId::Torso, &[(0.0, 0.0, 0.1)]),
                        (PartId::LeftArm, &[(1.0, 0.0, 0.0)]),
                        (PartId::RightArm, &[(0.0, 1.0, 0.0)]),
                    ],
                ),
                person(
                    1,
                    &[
                        (PartId::Torso, &[(dx, 0.0, 0.0)]),
                        (PartId::LeftArm, &[(dx + 1.0, 0.0, 0.0)]),
                        (PartId::RightArm, &[(dx, 1.0, -0.3)]),
                    ],
                ),
            ])
        };
        let cfg = FrameConfiguration {
            assignment: vec![0; 6],
        };
        let off = PictorialModel::new(ModelArity::Three, 2, 1.0, 5.0, false).unwrap();
        let on = PictorialModel { interaction: true, ..off.clone() };
        let a = log_potential(&off, &make(2.0), &cfg).unwrap();
        let b = log_potential(&off, &make(9.0), &cfg).unwrap();
        assert_eq!(a, b);
        assert_ne!(
            log_potential(&on, &make(2.0), &cfg).unwrap(),
            log_potential(&on, &make(9.0), &cfg).unwrap()
        );
        assert_eq!(on.edges().len(), 4 + 3);
        assert_eq!(off.edges().len(), 4);
    }

    #[test]
    fn invalid_assignment_rejected() {
        let model = PictorialModel::new(ModelArity::Three, 1, 1.0, 0.0, true).unwrap();
        let f = frame(vec![person(
            0,
            &[
                (PartId::Torso, &[(0.0, 0.0, 0.0)]),
                (PartId::LeftArm, &[(0.0, 1.0, 0.0)]),
                (PartId::RightArm, &[(0.0, 1.0, 0.0)]),
            ],
        )]);
        let cfg = FrameConfiguration {
            assignment: vec![0, 1, 0],
        };
        assert!(matches!(
            log_potential(&model, &f, &cfg),
            Err(Error::InvalidAssignment(_))
        ));
    }

    fn two_cell_toy(gamma: f64) -> PairwiseField {
        let cells = vec![(0.0, 0.0), (0.0, 1.0)];
        let var = FieldVar {
            points: cells,
            unary: vec![0.0, 0.0],
        };
        PairwiseField::new(vec![var.clone(), var], vec![(0, 1, EdgeKind::Intra)], gamma, 0.0)
            .unwrap()
    }

    #[test]
    fn two_cell_exact_joint() {
        let table = two_cell_toy(1.0).exact_joint().unwrap();
        let same = table.probs[table.index_of(&[0, 0])] + table.probs[table.index_of(&[1, 1])];
        // Four states with weights 1, e^-1, e^-1, 1.
        let expected = 2.0 / (2.0 + 2.0 * (-1f64).exp());
        assert!((same - expected).abs() < 1e-12);
        assert!((same - 0.7311).abs() < 1e-4);
    }

    #[test]
    fn flat_field_is_uniform_and_point_mass() {
        let table = two_cell_toy(0.0).exact_joint().unwrap();
        assert!(table.probs.iter().all(|p| (p - 0.25).abs() < 1e-15));
        let single = FieldVar {
            points: vec![(1.0, 1.0)],
            unary: vec![-3.0],
        };
        let f = PairwiseField::new(vec![single.clone(), single], vec![(0, 1, EdgeKind::Intra)], 2.0, 0.0)
            .unwrap();
        assert_eq!(f.exact_joint().unwrap().probs, vec![1.0]);
        let mut rng = rng::stream(1, 0);
        let s = f.gibbs(5, 10, &mut rng);
        assert!(s.iter().all(|&c| c == 0));
    }

    #[test]
    fn state_roundtrip_and_odometer() {
        let table = DistributionTable {
            radices: vec![2, 3, 4],
            probs: vec![1.0 / 24.0; 24],
        };
        for k in 0..24 {
            assert_eq!(table.index_of(&table.state(k).assignment), k);
        }
        let mut count = 0;
        for_each_state(&[2, 3, 4], |_| count += 1);
        assert_eq!(count, 24);
    }

    #[test]
    fn state_space_limit() {
        let var = FieldVar {
            points: vec![(0.0, 0.0); 101],
            unary: vec![0.0; 101],
        };
        let f = PairwiseField::new(vec![var.clone(), var.clone(), var], vec![], 1.0, 0.0).unwrap();
        assert!(matches!(f.exact_joint(), Err(Error::StateSpaceTooLarge { .. })));
    }

    #[test]
    fn leaf_elimination_matches_enumeration() {
        // Star with a loop through inter edges: 2 persons, 3 parts.
        let mut vars = Vec::new();
        for v in 0..6 {
            let k = 2 + v % 2;
            vars.push(FieldVar {
                points: (0..k).map(|c| (c as f64 * 0.7 + v as f64 * 0.2, (v * c) as f64 * 0.3)).collect(),
                unary: (0..k).map(|c| -0.1 * (c * v) as f64).collect(),
            });
        }
        let edges = vec![
            (0, 1, EdgeKind::Intra),
            (0, 2, EdgeKind::Intra),
            (3, 4, EdgeKind::Intra),
            (3, 5, EdgeKind::Intra),
            (0, 3, EdgeKind::Inter),
            (1, 4, EdgeKind::Inter),
        ];
        let f = PairwiseField::new(vars, edges, 0.8, 0.3).unwrap();
        let radices: Vec<usize> = f.vars.iter().map(FieldVar::len).collect();
        let mut logs = Vec::new();
        for_each_state(&radices, |c| logs.push(f.log_potential_unchecked(c)));
        let brute = log_sum_exp(&logs);
        assert!((f.log_partition(0) - brute).abs() < 1e-12);
        let imp = f.log_partition_importance(3);
        assert!((imp - brute).abs() < 0.05, "{imp} vs {brute}");
    }

    #[test]
    fn golden_section_finds_interior_and_boundary() {
        let x = golden_section_max(|x| -(x - 1.3).powi(2), 1e-4, 100.0, 1e-7);
        assert!((x - 1.3).abs() < 1e-5);
        let x = golden_section_max(|x| -x, 1e-4, 100.0, 1e-7);
        assert_eq!(x, 1e-4);
    }
}
