//! Detections to symbol sequences: MRF fit, per-frame Gibbs sampling,
//! codebook learning and encoding.

use rayon::prelude::*;

use crate::config::{Config, SampleCoupling};
use crate::error::{Error, Result};
use crate::ingest::{validate, DetectionSequence, SymbolSequence};
use crate::mrf::{fit_gammas, gibbs_sample, GammaFit, PictorialModel, SampleSet};
use crate::quantizer::{encode, learn_codebook, Codebook};
use crate::rng::{derive_seed, hash_str};

const GIBBS_TAG: u64 = 0x6962_6273;
const CODEBOOK_TAG: u64 = 0x636f_6465;

#[derive(Clone, Debug, PartialEq)]
pub struct Inference {
    pub model: PictorialModel,
    /// Present when the gammas were estimated rather than configured.
    pub gamma_fit: Option<GammaFit>,
    pub codebook: Codebook,
    pub symbols: Vec<SymbolSequence>,
    /// Gibbs realizations per sequence, one set per frame.
    pub samples: Vec<Vec<SampleSet>>,
}

/// Gibbs seed for one frame of one sequence.
pub fn frame_seed(cfg: &Config, sequence_id: &str, frame_index: u64) -> u64 {
    match cfg.sample_coupling {
        SampleCoupling::Common => derive_seed(cfg.seed, GIBBS_TAG),
        SampleCoupling::Independent => {
            derive_seed(derive_seed(cfg.seed, hash_str(sequence_id)), frame_index)
        }
    }
}

/// Model from the configuration, filling arity and persons from the data.
pub fn model_template(cfg: &Config, seqs: &[DetectionSequence]) -> Result<PictorialModel> {
    let first = seqs.first().ok_or(Error::EmptyInput)?;
    let arity = cfg.arity.unwrap_or(first.arity);
    let persons = match cfg.persons {
        Some(p) => p,
        None => first.frames.first().map_or(0, |f| f.persons.len()),
    };
    PictorialModel::new(
        arity,
        persons,
        cfg.gamma1.unwrap_or(1.0),
        cfg.gamma2.unwrap_or(if cfg.interaction { 1.0 } else { 0.0 }),
        cfg.interaction,
    )
}

/// Run the MRF stages over a corpus. Output order follows the input.
pub fn infer(cfg: &Config, seqs: &[DetectionSequence]) -> Result<Inference> {
    cfg.check()?;
    let mut model = model_template(cfg, seqs)?;
    for s in seqs {
        let report = validate(s, model.arity);
        if let Some(issue) = report.issues.first() {
            return Err(Error::InvalidAssignment(format!(
                "sequence {}: frame {:?}: {:?}",
                s.sequence_id, issue.frame, issue.kind
            )));
        }
        if s.grid != seqs[0].grid {
            return Err(Error::InvalidConfig(format!(
                "sequence {} uses a different grid",
                s.sequence_id
            )));
        }
    }
    let gamma_fit = if cfg.gamma1.is_none() || (cfg.interaction && cfg.gamma2.is_none()) {
        let fit = fit_gammas(seqs, &model)?;
        model.gamma1 = cfg.gamma1.unwrap_or(fit.gamma1);
        model.gamma2 = cfg.gamma2.unwrap_or(fit.gamma2);
        Some(fit)
    } else {
        None
    };

    let jobs: Vec<(usize, usize)> = seqs
        .iter()
        .enumerate()
        .flat_map(|(s, seq)| (0..seq.frames.len()).map(move |f| (s, f)))
        .collect();
    let samples: Vec<SampleSet> = jobs
        .par_iter()
        .map(|&(s, f)| {
            let seq = &seqs[s];
            let frame = &seq.frames[f];
            let seed = frame_seed(cfg, &seq.sequence_id, frame.frame_index);
            gibbs_sample(&model, frame, cfg.gibbs_burnin, cfg.gibbs_samples, seed)
                .map_err(|e| e.context(format!("sequence {} frame {}", seq.sequence_id, frame.frame_index)))
        })
        .collect::<Result<_>>()?;

    let grid = seqs[0].grid;
    let items: Vec<_> = jobs
        .iter()
        .zip(&samples)
        .map(|(&(s, f), set)| (&seqs[s].frames[f], set))
        .collect();
    let codebook = learn_codebook(&model, &items, grid, cfg.p, derive_seed(cfg.seed, CODEBOOK_TAG))?;

    let rows: Vec<Vec<u32>> = items
        .par_iter()
        .map(|(frame, set)| encode(&codebook, &model, set, frame, grid))
        .collect::<Result<_>>()?;
    let mut rows = rows.into_iter();
    let symbols: Vec<SymbolSequence> = seqs
        .iter()
        .map(|seq| {
            let frames: Vec<Vec<u32>> = rows.by_ref().take(seq.frames.len()).collect();
            SymbolSequence::new(seq.sequence_id.clone(), seq.label.clone(), cfg.p, frames)
        })
        .collect::<Result<_>>()?;
    let mut sets = samples.into_iter();
    let samples = seqs
        .iter()
        .map(|seq| sets.by_ref().take(seq.frames.len()).collect())
        .collect();
    Ok(Inference {
        model,
        gamma_fit,
        codebook,
        symbols,
        samples,
    })
}
