//! Synthetic detection sequences with known coupling.
//!
//! A scene is a set of persons, each a torso anchor plus limb offsets. Every
//! part slot carries the true location and a few lower-scoring distractor
//! candidates at nearby positions, so the MRF has real uncertainty to sample.
//! A coupled sequence copies the whole candidate layout of its source at a
//! lag, with position noise, so couplings survive all the way to symbols.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::{DetectionSequence, FrameDetections, Grid, ModelArity, PartId, PartState, Person};
use crate::rng::{self, hash_str, SodaRng};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSpec {
    pub label: String,
    pub lag: usize,
    pub coupling: f64,
    /// Frames `[start, end)` of the coupled sequence where copying happens.
    #[serde(default)]
    pub active_window: Option<(usize, usize)>,
    /// Random-walk step size of torso anchors, grid units per frame.
    #[serde(default = "default_step")]
    pub step: f64,
}

fn default_step() -> f64 {
    1.0
}

fn default_grid() -> Grid {
    Grid {
        width: 64,
        height: 48,
    }
}

fn default_candidates() -> usize {
    3
}

fn default_spread() -> f64 {
    3.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplingSpec {
    pub classes: Vec<ClassSpec>,
    pub persons: usize,
    pub arity: ModelArity,
    /// Frames per sequence, `M`.
    pub frames: usize,
    /// Standard deviation of the position noise added to copies.
    pub noise: f64,
    #[serde(default = "default_grid")]
    pub grid: Grid,
    /// Candidates per part slot, including the true location.
    #[serde(default = "default_candidates")]
    pub candidates: usize,
    /// Typical distance of distractors from the true location.
    #[serde(default = "default_spread")]
    pub distractor_spread: f64,
}

impl CouplingSpec {
    pub fn check(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidSpec(msg));
        if self.classes.is_empty() {
            return bad("no classes".into());
        }
        if self.persons == 0 || self.frames == 0 || self.candidates == 0 {
            return bad("persons, frames and candidates must be positive".into());
        }
        if !(self.noise >= 0.0) || !self.noise.is_finite() {
            return bad(format!("noise {} must be finite and >= 0", self.noise));
        }
        if self.grid.width < 24 || self.grid.height < 24 {
            return bad("grid must be at least 24x24".into());
        }
        for c in &self.classes {
            if c.lag >= self.frames {
                return bad(format!("class {}: lag {} >= M {}", c.label, c.lag, self.frames));
            }
            if !(0.0..=1.0).contains(&c.coupling) {
                return bad(format!("class {}: coupling {} outside [0, 1]", c.label, c.coupling));
            }
            if let Some((s, e)) = c.active_window {
                if s >= e || e > self.frames {
                    return bad(format!("class {}: active window ({s}, {e}) outside [0, M)", c.label));
                }
            }
            if !(c.step >= 0.0) || !c.step.is_finite() {
                return bad(format!("class {}: step must be finite and >= 0", c.label));
            }
        }
        Ok(())
    }
}

/// Ground truth for one coupled pair of sequences.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairTruth {
    pub source: String,
    pub target: String,
    pub lag: usize,
    pub coupling: f64,
    pub active_window: Option<(usize, usize)>,
    /// Frames of the target that are copies of source frame `m - lag`.
    pub coupled_frames: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceTruth {
    pub sequence_id: String,
    pub label: String,
    /// Coupling of persons `1..` to person 0 inside the sequence.
    pub persons: Vec<PairTruth>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairLabel {
    pub a: String,
    pub b: String,
    pub same_class: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorpusTruth {
    pub sequences: Vec<SequenceTruth>,
    pub pairs: Vec<PairLabel>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledCorpus {
    pub sequences: Vec<DetectionSequence>,
    pub truth: CorpusTruth,
}

const LIMB_OFFSETS: [(PartId, f64, f64); 5] = [
    (PartId::LeftArm, -6.0, -2.0),
    (PartId::RightArm, 6.0, -2.0),
    (PartId::LeftLeg, -3.0, 8.0),
    (PartId::RightLeg, 3.0, 8.0),
    (PartId::Torso, 0.0, 0.0),
];
const MARGIN: f64 = 10.0;

fn normal(rng: &mut SodaRng) -> f64 {
    StandardNormal.sample(rng)
}

fn reflect(v: f64, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        return lo;
    }
    let span = hi - lo;
    let mut t = (v - lo).rem_euclid(2.0 * span);
    if t > span {
        t = 2.0 * span - t;
    }
    lo + t
}

/// One person's true part locations.
#[derive(Clone, Debug)]
struct Pose {
    torso: (f64, f64),
    /// Deviation of every limb from its template offset.
    dev: Vec<(f64, f64)>,
}

impl Pose {
    fn part(&self, arity: ModelArity, part: PartId) -> (f64, f64) {
        let slot = arity.parts().iter().position(|&p| p == part).unwrap_or(0);
        if part == PartId::Torso {
            return self.torso;
        }
        let (_, ox, oy) = LIMB_OFFSETS.iter().find(|o| o.0 == part).copied().unwrap_or((part, 0.0, 0.0));
        (self.torso.0 + ox + self.dev[slot].0, self.torso.1 + oy + self.dev[slot].1)
    }
}

struct Walker {
    grid: Grid,
    arity: ModelArity,
    step: f64,
}

impl Walker {
    fn init(&self, rng: &mut SodaRng) -> Pose {
        let w = f64::from(self.grid.width);
        let h = f64::from(self.grid.height);
        Pose {
            torso: (
                rng.random_range(MARGIN..w - MARGIN),
                rng.random_range(MARGIN..h - MARGIN),
            ),
            dev: vec![(0.0, 0.0); self.arity.count()],
        }
    }

    fn advance(&self, pose: &mut Pose, rng: &mut SodaRng) {
        let w = f64::from(self.grid.width);
        let h = f64::from(self.grid.height);
        pose.torso.0 = reflect(pose.torso.0 + self.step * normal(rng), MARGIN, w - MARGIN);
        pose.torso.1 = reflect(pose.torso.1 + self.step * normal(rng), MARGIN, h - MARGIN);
        for d in pose.dev.iter_mut() {
            d.0 = reflect(d.0 + 0.5 * normal(rng), -2.0, 2.0);
            d.1 = reflect(d.1 + 0.5 * normal(rng), -2.0, 2.0);
        }
    }
}

fn clamp_to(grid: Grid, x: f64, y: f64) -> (f64, f64) {
    (x.clamp(0.0, f64::from(grid.width)), y.clamp(0.0, f64::from(grid.height)))
}

/// Candidate lists for one person: the true location and lower-scoring
/// distractors, in random order.
fn render_person(spec: &CouplingSpec, id: i64, pose: &Pose, rng: &mut SodaRng) -> Person {
    let mut parts = BTreeMap::new();
    for &part in spec.arity.parts() {
        let (tx, ty) = pose.part(spec.arity, part);
        let (tx, ty) = clamp_to(spec.grid, tx, ty);
        let mut cands = vec![PartState {
            part,
            x: tx,
            y: ty,
            score: 0.0,
        }];
        for _ in 1..spec.candidates {
            let angle = rng.random_range(0.0..std::f64::consts::TAU);
            let r = spec.distractor_spread * rng.random_range(0.5..1.5);
            let (x, y) = clamp_to(spec.grid, tx + r * angle.cos(), ty + r * angle.sin());
            cands.push(PartState {
                part,
                x,
                y,
                score: -rng.random_range(0.2..1.2),
            });
        }
        cands.shuffle(rng);
        parts.insert(part, cands);
    }
    Person { id, parts }
}

/// Copy of `src` with every coordinate perturbed by `N(0, noise^2)`.
fn noisy_copy(spec: &CouplingSpec, src: &Person, id: i64, rng: &mut SodaRng) -> Person {
    let mut parts = BTreeMap::new();
    for (&part, cands) in &src.parts {
        let moved = cands
            .iter()
            .map(|c| {
                let (x, y) = if spec.noise > 0.0 {
                    clamp_to(spec.grid, c.x + spec.noise * normal(rng), c.y + spec.noise * normal(rng))
                } else {
                    (c.x, c.y)
                };
                PartState { x, y, ..*c }
            })
            .collect();
        parts.insert(part, moved);
    }
    Person { id, parts }
}

fn in_window(window: Option<(usize, usize)>, m: usize) -> bool {
    window.is_none_or(|(s, e)| s <= m && m < e)
}

/// A pair `(X, Y)` where `Y` copies `X` at `classes[0]`'s lag and coupling.
pub fn gen_coupled_pair(spec: &CouplingSpec, seed: u64) -> Result<(DetectionSequence, DetectionSequence, PairTruth)> {
    spec.check()?;
    let class = &spec.classes[0];
    let walker = Walker {
        grid: spec.grid,
        arity: spec.arity,
        step: class.step,
    };
    let mut rx = rng::stream(seed, 0);
    let mut ry = rng::stream(seed, 1);
    let mut rc = rng::stream(seed, 2);

    let mut x_frames: Vec<Vec<Person>> = Vec::with_capacity(spec.frames);
    let mut poses_x: Vec<Pose> = (0..spec.persons).map(|_| walker.init(&mut rx)).collect();
    let mut poses_y: Vec<Pose> = (0..spec.persons).map(|_| walker.init(&mut ry)).collect();
    let mut y_frames = Vec::with_capacity(spec.frames);
    let mut coupled = Vec::new();
    for m in 0..spec.frames {
        if m > 0 {
            poses_x.iter_mut().for_each(|p| walker.advance(p, &mut rx));
            poses_y.iter_mut().for_each(|p| walker.advance(p, &mut ry));
        }
        let xs: Vec<Person> = poses_x
            .iter()
            .enumerate()
            .map(|(i, p)| render_person(spec, i as i64, p, &mut rx))
            .collect();
        let own: Vec<Person> = poses_y
            .iter()
            .enumerate()
            .map(|(i, p)| render_person(spec, i as i64, p, &mut ry))
            .collect();
        let u: f64 = rc.random();
        let copy = m >= class.lag && in_window(class.active_window, m) && u < class.coupling;
        x_frames.push(xs);
        if copy {
            let src = &x_frames[m - class.lag];
            y_frames.push(src.iter().map(|p| noisy_copy(spec, p, p.id, &mut rc)).collect());
            coupled.push(m);
        } else {
            y_frames.push(own);
        }
    }
    let build = |id: &str, frames: Vec<Vec<Person>>| DetectionSequence {
        sequence_id: id.to_string(),
        label: Some(class.label.clone()),
        arity: spec.arity,
        grid: spec.grid,
        frames: frames
            .into_iter()
            .enumerate()
            .map(|(m, persons)| FrameDetections {
                frame_index: m as u64,
                persons,
            })
            .collect(),
    };
    let truth = PairTruth {
        source: "x".into(),
        target: "y".into(),
        lag: class.lag,
        coupling: class.coupling,
        active_window: class.active_window,
        coupled_frames: coupled,
    };
    Ok((build("x", x_frames), build("y", y_frames), truth))
}

/// Frames in reverse order, relabeled `0..M`.
pub fn reverse_time(seq: &DetectionSequence) -> DetectionSequence {
    let mut out = seq.clone();
    out.frames.reverse();
    for (m, f) in out.frames.iter_mut().enumerate() {
        f.frame_index = m as u64;
    }
    out
}

/// Class choreography: a smooth torso path and limb swing shared by every
/// sequence of the class, derived from the class label.
struct Choreography {
    /// Seed of the per-frame distractor layout of the lead person.
    layout: u64,
    center: (f64, f64),
    amp: (f64, f64),
    freq: (f64, f64),
    phase: (f64, f64),
    swing: Vec<(f64, f64, f64)>,
}

impl Choreography {
    fn new(spec: &CouplingSpec, label: &str, seed: u64) -> Self {
        let class_seed = rng::derive_seed(seed, hash_str(label));
        let mut r = rng::stream(class_seed, 7);
        let w = f64::from(spec.grid.width);
        let h = f64::from(spec.grid.height);
        let tau = std::f64::consts::TAU;
        Choreography {
            layout: rng::derive_seed(class_seed, 8),
            center: (
                r.random_range(0.35 * w..0.65 * w),
                r.random_range(0.35 * h..0.65 * h),
            ),
            amp: (
                r.random_range(0.1 * w..0.25 * w),
                r.random_range(0.05 * h..0.2 * h),
            ),
            freq: (r.random_range(0.5..3.0), r.random_range(0.5..3.0)),
            phase: (r.random_range(0.0..tau), r.random_range(0.0..tau)),
            swing: (0..spec.arity.count())
                .map(|_| (r.random_range(0.5..2.0), r.random_range(0.5..4.0), r.random_range(0.0..tau)))
                .collect(),
        }
    }

    fn pose(&self, spec: &CouplingSpec, m: usize) -> Pose {
        let t = m as f64 / spec.frames.max(1) as f64 * std::f64::consts::TAU;
        let w = f64::from(spec.grid.width);
        let h = f64::from(spec.grid.height);
        Pose {
            torso: (
                (self.center.0 + self.amp.0 * (self.freq.0 * t + self.phase.0).sin()).clamp(MARGIN, w - MARGIN),
                (self.center.1 + self.amp.1 * (self.freq.1 * t + self.phase.1).sin()).clamp(MARGIN, h - MARGIN),
            ),
            dev: self
                .swing
                .iter()
                .map(|&(a, f, ph)| (a * (f * t + ph).sin(), a * (f * t + ph).cos()))
                .collect(),
        }
    }
}

/// `per_class` sequences per class. Person 0 follows the class
/// choreography with per-sequence jitter; every other person copies person 0
/// at the class lag with the class coupling, and walks freely otherwise.
pub fn gen_corpus(spec: &CouplingSpec, per_class: usize, seed: u64) -> Result<LabeledCorpus> {
    spec.check()?;
    if per_class < 4 {
        return Err(Error::InvalidSpec(format!("per_class {per_class} < 4")));
    }
    let mut sequences = Vec::new();
    let mut truths = Vec::new();
    for (ci, class) in spec.classes.iter().enumerate() {
        let chore = Choreography::new(spec, &class.label, seed);
        let walker = Walker {
            grid: spec.grid,
            arity: spec.arity,
            step: class.step,
        };
        for s in 0..per_class {
            let id = format!("{}_{:03}", class.label, s);
            let mut r = rng::stream(seed, (ci * 100_000 + s) as u64 + 1);
            let (seq, truth) = corpus_sequence(spec, class, &chore, &walker, &id, &mut r);
            sequences.push(seq);
            truths.push(truth);
        }
    }
    let mut pairs = Vec::new();
    for i in 0..sequences.len() {
        for j in i + 1..sequences.len() {
            pairs.push(PairLabel {
                a: sequences[i].sequence_id.clone(),
                b: sequences[j].sequence_id.clone(),
                same_class: sequences[i].label == sequences[j].label,
            });
        }
    }
    Ok(LabeledCorpus {
        sequences,
        truth: CorpusTruth {
            sequences: truths,
            pairs,
        },
    })
}

fn corpus_sequence(
    spec: &CouplingSpec,
    class: &ClassSpec,
    chore: &Choreography,
    walker: &Walker,
    id: &str,
    r: &mut SodaRng,
) -> (DetectionSequence, SequenceTruth) {
    let mut others: Vec<Pose> = (1..spec.persons).map(|_| walker.init(r)).collect();
    let mut jitter = (0.0, 0.0);
    let mut frames: Vec<FrameDetections> = Vec::with_capacity(spec.frames);
    let mut leads: Vec<Person> = Vec::with_capacity(spec.frames);
    let mut coupled = vec![Vec::new(); spec.persons.saturating_sub(1)];
    for m in 0..spec.frames {
        jitter.0 = reflect(jitter.0 + 0.3 * class.step * normal(r), -3.0, 3.0);
        jitter.1 = reflect(jitter.1 + 0.3 * class.step * normal(r), -3.0, 3.0);
        let mut pose = chore.pose(spec, m);
        pose.torso.0 += jitter.0;
        pose.torso.1 += jitter.1;
        let lead = render_person(spec, 0, &pose, &mut rng::stream(chore.layout, m as u64));
        let mut persons = vec![noisy_copy(spec, &lead, 0, r)];
        for (k, other) in others.iter_mut().enumerate() {
            if m > 0 {
                walker.advance(other, r);
            }
            let u: f64 = r.random();
            if m >= class.lag && in_window(class.active_window, m) && u < class.coupling {
                persons.push(noisy_copy(spec, &leads[m - class.lag], k as i64 + 1, r));
                coupled[k].push(m);
            } else {
                persons.push(render_person(spec, k as i64 + 1, other, r));
            }
        }
        leads.push(lead);
        frames.push(FrameDetections {
            frame_index: m as u64,
            persons,
        });
    }
    let truth = SequenceTruth {
        sequence_id: id.to_string(),
        label: class.label.clone(),
        persons: coupled
            .into_iter()
            .enumerate()
            .map(|(k, frames)| PairTruth {
                source: "person_0".into(),
                target: format!("person_{}", k + 1),
                lag: class.lag,
                coupling: class.coupling,
                active_window: class.active_window,
                coupled_frames: frames,
            })
            .collect(),
    };
    let seq = DetectionSequence {
        sequence_id: id.to_string(),
        label: Some(class.label.clone()),
        arity: spec.arity,
        grid: spec.grid,
        frames,
    };
    (seq, truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{validate, write_detections};

    fn spec(lag: usize, coupling: f64, noise: f64) -> CouplingSpec {
        CouplingSpec {
            classes: vec![ClassSpec {
                label: "walk".into(),
                lag,
                coupling,
                active_window: None,
                step: 1.0,
            }],
            persons: 2,
            arity: ModelArity::Three,
            frames: 20,
            noise,
            grid: default_grid(),
            candidates: 3,
            distractor_spread: 3.0,
        }
    }

    fn bytes(seq: &DetectionSequence) -> Vec<u8> {
        let mut out = Vec::new();
        write_detections(seq, &mut out).unwrap();
        out
    }

    #[test]
    fn exact_copy_at_lag() {
        let (x, y, truth) = gen_coupled_pair(&spec(1, 1.0, 0.0), 3).unwrap();
        assert_eq!(truth.coupled_frames, (1..20).collect::<Vec<_>>());
        for m in 1..20 {
            assert_eq!(y.frames[m].persons, x.frames[m - 1].persons);
        }
        assert!(validate(&x, ModelArity::Three).is_valid());
        assert!(validate(&y, ModelArity::Three).is_valid());
    }

    #[test]
    fn zero_coupling_never_copies() {
        let (_, _, truth) = gen_coupled_pair(&spec(1, 0.0, 0.0), 3).unwrap();
        assert!(truth.coupled_frames.is_empty());
    }

    #[test]
    fn active_window_limits_copies() {
        let mut s = spec(2, 0.9, 0.3);
        s.frames = 40;
        s.classes[0].active_window = Some((10, 30));
        let (_, _, truth) = gen_coupled_pair(&s, 11).unwrap();
        assert!(!truth.coupled_frames.is_empty());
        assert!(truth.coupled_frames.iter().all(|&m| (10..30).contains(&m)));
    }

    #[test]
    fn deterministic_bytes() {
        let (a, b, _) = gen_coupled_pair(&spec(1, 0.8, 0.5), 42).unwrap();
        let (c, d, _) = gen_coupled_pair(&spec(1, 0.8, 0.5), 42).unwrap();
        assert_eq!(bytes(&a), bytes(&c));
        assert_eq!(bytes(&b), bytes(&d));
        let (e, _, _) = gen_coupled_pair(&spec(1, 0.8, 0.5), 43).unwrap();
        assert_ne!(bytes(&a), bytes(&e));
    }

    #[test]
    fn reverse_is_involution() {
        let (x, _, _) = gen_coupled_pair(&spec(1, 0.8, 0.5), 1).unwrap();
        let r = reverse_time(&x);
        assert_eq!(r.frames[0].persons, x.frames[19].persons);
        assert_eq!(reverse_time(&r), x);
    }

    #[test]
    fn corpus_counts_and_truth() {
        let mut s = spec(1, 0.9, 0.3);
        s.classes.push(ClassSpec {
            label: "run".into(),
            lag: 2,
            coupling: 0.5,
            active_window: None,
            step: 2.0,
        });
        let c = gen_corpus(&s, 4, 9).unwrap();
        assert_eq!(c.sequences.len(), 8);
        assert_eq!(c.truth.pairs.len(), 28);
        assert_eq!(c.truth.pairs.iter().filter(|p| p.same_class).count(), 12);
        for seq in &c.sequences {
            assert!(validate(seq, ModelArity::Three).is_valid());
        }
        let again = gen_corpus(&s, 4, 9).unwrap();
        assert_eq!(c, again);
        assert!(gen_corpus(&s, 3, 9).is_err());
    }

    #[test]
    fn invalid_specs_rejected() {
        let mut s = spec(25, 0.5, 0.0);
        assert!(gen_coupled_pair(&s, 0).is_err());
        s.classes[0].lag = 1;
        s.classes[0].coupling = 1.5;
        assert!(gen_coupled_pair(&s, 0).is_err());
        s.classes[0].coupling = 0.5;
        s.classes[0].active_window = Some((5, 50));
        assert!(gen_coupled_pair(&s, 0).is_err());
    }
}
