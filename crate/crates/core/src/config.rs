//! Run configuration: one flat JSON object, every key optional.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimator::{DiOptions, LambdaPolicy};
use crate::ingest::ModelArity;
use crate::localizer::{FdrMethod, NullMode, SurfaceSpec};

/// How Gibbs realizations of different frames are paired by index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SampleCoupling {
    /// Every frame of every sequence runs its chain on the same random
    /// stream, so realization `j` is comparable across frames and sequences.
    #[default]
    Common,
    /// Each frame has its own stream; realizations are exchangeable draws.
    Independent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaMode {
    #[default]
    ClosedForm,
    Grid,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Config {
    /// Parts per person; taken from the detection headers when absent.
    pub arity: Option<ModelArity>,
    /// Persons per frame; taken from the detections when absent.
    pub persons: Option<usize>,
    /// Fixed MRF weights; fitted by maximum likelihood when absent.
    pub gamma1: Option<f64>,
    pub gamma2: Option<f64>,
    pub interaction: bool,
    pub gibbs_burnin: usize,
    pub gibbs_samples: usize,
    pub sample_coupling: SampleCoupling,
    pub p: u32,
    pub order_k: usize,
    pub lambda_mode: LambdaMode,
    pub window: usize,
    pub stride: usize,
    pub fdr: f64,
    pub fdr_method: FdrMethod,
    pub null_reps: usize,
    pub null_mode: NullMode,
    pub top_n: usize,
    pub k_neighbors: usize,
    pub split_ratio: f64,
    pub seed: u64,
}

impl Default for Config {
    fn default() -> Self {
        Config {
            arity: None,
            persons: None,
            gamma1: None,
            gamma2: None,
            interaction: true,
            gibbs_burnin: 500,
            gibbs_samples: 1000,
            sample_coupling: SampleCoupling::Common,
            p: 16,
            order_k: 1,
            lambda_mode: LambdaMode::ClosedForm,
            window: 7,
            stride: 1,
            fdr: 0.1,
            fdr_method: FdrMethod::By,
            null_reps: 200,
            null_mode: NullMode::Cross,
            top_n: 10,
            k_neighbors: 1,
            split_ratio: 0.5,
            seed: 0,
        }
    }
}

impl Config {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Config =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.check()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Config::from_json(&text).map_err(|e| e.context(path.display().to_string()))
    }

    /// Range checks on every key.
    pub fn check(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.persons == Some(0) {
            return bad("persons must be >= 1".into());
        }
        for (name, g) in [("gamma1", self.gamma1), ("gamma2", self.gamma2)] {
            if let Some(g) = g {
                if !g.is_finite() || g < 0.0 {
                    return bad(format!("{name} must be finite and >= 0"));
                }
            }
        }
        if self.gibbs_samples == 0 {
            return bad("gibbs_samples must be >= 1".into());
        }
        if !(2..=crate::quantizer::MAX_ALPHABET).contains(&self.p) {
            return bad(format!("p must be in 2..={}", crate::quantizer::MAX_ALPHABET));
        }
        if self.order_k > 2 {
            return bad("order_k must be 0, 1 or 2".into());
        }
        if self.window < self.order_k + 2 {
            return bad(format!("window must be >= order_k + 2 = {}", self.order_k + 2));
        }
        if self.stride == 0 {
            return bad("stride must be >= 1".into());
        }
        if !(self.fdr > 0.0 && self.fdr < 1.0) {
            return bad("fdr must be in (0, 1)".into());
        }
        if self.null_reps < 30 {
            return bad("null_reps must be >= 30".into());
        }
        if self.k_neighbors == 0 {
            return bad("k_neighbors must be >= 1".into());
        }
        if !(self.split_ratio > 0.0 && self.split_ratio < 1.0) {
            return bad("split_ratio must be in (0, 1)".into());
        }
        Ok(())
    }

    pub fn di_options(&self) -> DiOptions {
        DiOptions {
            order_k: self.order_k,
            lambda: match self.lambda_mode {
                LambdaMode::ClosedForm => LambdaPolicy::ClosedForm,
                LambdaMode::Grid => LambdaPolicy::Grid,
            },
        }
    }

    pub fn surface_spec(&self) -> SurfaceSpec {
        SurfaceSpec {
            window: self.window,
            stride: self.stride,
            di: self.di_options(),
            null_reps: self.null_reps,
            null_mode: self.null_mode,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_fill_missing_keys() {
        let cfg = Config::from_json(r#"{"seed": 5, "window": 9}"#).unwrap();
        assert_eq!(cfg.p, 16);
        assert_eq!(cfg.gibbs_burnin, 500);
        assert_eq!(cfg.gibbs_samples, 1000);
        assert_eq!(cfg.window, 9);
        assert_eq!(cfg.fdr, 0.1);
        assert_eq!(cfg.fdr_method, FdrMethod::By);
        assert_eq!(cfg.seed, 5);
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(matches!(Config::from_json(r#"{"windw": 7}"#), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn ranges_checked() {
        for text in [
            r#"{"p": 1}"#,
            r#"{"order_k": 3}"#,
            r#"{"fdr": 1.5}"#,
            r#"{"null_reps": 10}"#,
            r#"{"window": 2}"#,
            r#"{"split_ratio": 1.0}"#,
            r#"{"gamma1": -1}"#,
            r#"{"arity": 4}"#,
        ] {
            assert!(Config::from_json(text).is_err(), "{text}");
        }
    }

    #[test]
    fn round_trips() {
        let cfg = Config {
            gamma1: Some(0.5),
            arity: Some(ModelArity::Five),
            ..Config::default()
        };
        let text = serde_json::to_string(&cfg).unwrap();
        assert_eq!(Config::from_json(&text).unwrap(), cfg);
    }
}
