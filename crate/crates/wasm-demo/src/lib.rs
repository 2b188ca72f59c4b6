//! Browser demo. Each export returns a JSON string so the page needs no
//! generated bindings beyond plain strings; the same functions run natively
//! under `cargo test`.

use rand::Rng;
use serde::Serialize;
use wasm_bindgen::prelude::wasm_bindgen;

use soda::config::Config;
use soda::estimator::{entropy, shrink, shrinkage_lambda, Target};
use soda::ingest::{Grid, ModelArity};
use soda::localizer::{analyze_pair, Peak};
use soda::mrf::{EdgeKind, FieldVar, PairwiseField};
use soda::pipeline::infer;
use soda::quantizer::JointHistogram;
use soda::rng::stream;
use soda::synth::{gen_coupled_pair, ClassSpec, CouplingSpec};

/// Frames in every demo sequence.
pub const DEMO_FRAMES: usize = 40;

#[derive(Debug, Serialize)]
pub struct SurfaceView {
    pub rows: usize,
    pub cols: usize,
    pub window: usize,
    pub di: Vec<Vec<f64>>,
    pub pval: Vec<Vec<f64>>,
    pub peaks: Vec<Peak>,
    pub pair_pval: f64,
    pub active_window: (usize, usize),
    pub lag: usize,
}

/// Synthesize a coupled pair, run inference at demo budget and compute its
/// local DI surface with BY-controlled peaks.
pub fn surface_view(lag: usize, coupling: f64, window: usize, seed: u64) -> soda::Result<SurfaceView> {
    let active = (DEMO_FRAMES / 4, DEMO_FRAMES * 3 / 4);
    let spec = CouplingSpec {
        classes: vec![ClassSpec {
            label: "demo".into(),
            lag,
            coupling,
            active_window: Some(active),
            step: 1.0,
        }],
        persons: 1,
        arity: ModelArity::Three,
        frames: DEMO_FRAMES,
        noise: 0.2,
        grid: Grid { width: 64, height: 48 },
        candidates: 3,
        distractor_spread: 3.0,
    };
    spec.check()?;
    let cfg = Config {
        seed,
        window,
        gibbs_burnin: 100,
        gibbs_samples: 300,
        null_reps: 60,
        ..Config::default()
    };
    cfg.check()?;
    let (x, y, _) = gen_coupled_pair(&spec, seed)?;
    let inf = infer(&cfg, &[x, y])?;
    let a = analyze_pair(
        &inf.symbols[0],
        &inf.symbols[1],
        &cfg.surface_spec(),
        seed,
        cfg.fdr,
        cfg.fdr_method,
        cfg.top_n,
    )?;
    let (rows, cols) = a.surface.shape();
    Ok(SurfaceView {
        rows,
        cols,
        window,
        di: a.surface.di.clone(),
        pval: a.surface.pval.clone(),
        peaks: a.peaks.peaks,
        pair_pval: a.pair_pval,
        active_window: active,
        lag,
    })
}

#[derive(Debug, Serialize)]
pub struct MsePoint {
    pub n: usize,
    pub mse_shrink: f64,
    pub mse_ml: f64,
    pub mean_lambda: f64,
}

/// Entropy MSE of the shrinkage and plug-in estimators against sample size,
/// for a fixed random pmf on `cells` cells.
pub fn shrinkage_curve(cells: usize, sizes: &[usize], trials: usize, seed: u64) -> soda::Result<Vec<MsePoint>> {
    if cells < 2 || trials == 0 || sizes.iter().any(|&n| n < 2) {
        return Err(soda::Error::InvalidConfig(
            "need at least 2 cells, 1 trial and sample sizes >= 2".into(),
        ));
    }
    let mut rng = stream(seed, 0);
    let w: Vec<f64> = (0..cells).map(|_| -rng.random::<f64>().max(f64::MIN_POSITIVE).ln()).collect();
    let total: f64 = w.iter().sum();
    let pmf: Vec<f64> = w.iter().map(|v| v / total).collect();
    let truth = -pmf.iter().map(|&q| q * q.ln()).sum::<f64>();
    let mut cdf = pmf.clone();
    for i in 1..cells {
        cdf[i] += cdf[i - 1];
    }
    let mut out = Vec::with_capacity(sizes.len());
    for &n in sizes {
        let (mut ss, mut sm, mut sl) = (0.0, 0.0, 0.0);
        for _ in 0..trials {
            let mut counts = vec![0u64; cells];
            for _ in 0..n {
                let u = rng.random::<f64>();
                counts[cdf.partition_point(|&c| c <= u).min(cells - 1)] += 1;
            }
            let h = JointHistogram::from_dense(&counts)?;
            let lambda = shrinkage_lambda(&h, &Target::Uniform)?.lambda;
            ss += (entropy(&shrink(&h, lambda, &Target::Uniform)?) - truth).powi(2);
            sm += (entropy(&shrink(&h, 0.0, &Target::Uniform)?) - truth).powi(2);
            sl += lambda;
        }
        let t = trials as f64;
        out.push(MsePoint {
            n,
            mse_shrink: ss / t,
            mse_ml: sm / t,
            mean_lambda: sl / t,
        });
    }
    Ok(out)
}

#[derive(Debug, Serialize)]
pub struct GibbsView {
    pub states: Vec<Vec<usize>>,
    pub exact: Vec<f64>,
    pub sampled: Vec<f64>,
    pub tv: f64,
}

/// A torso with two limbs, three candidates each (27 joint states),
/// sampled by Gibbs and enumerated exactly.
pub fn gibbs_view(gamma: f64, n: usize, seed: u64) -> soda::Result<GibbsView> {
    if n == 0 {
        return Err(soda::Error::InvalidConfig("sample count must be >= 1".into()));
    }
    let var = |pts: [(f64, f64); 3], unary: [f64; 3]| FieldVar {
        points: pts.to_vec(),
        unary: unary.to_vec(),
    };
    let vars = vec![
        var([(0.0, 0.0), (1.0, 0.0), (0.0, 1.0)], [0.0, -0.3, -0.6]),
        var([(0.5, 0.5), (2.0, 0.0), (-1.0, 1.0)], [-0.2, 0.0, -0.4]),
        var([(1.0, 1.0), (0.0, 2.0), (-1.0, -1.0)], [0.0, -0.1, -0.5]),
    ];
    let field = PairwiseField::new(vars, vec![(0, 1, EdgeKind::Intra), (0, 2, EdgeKind::Intra)], gamma, 0.0)?;
    let table = field.exact_joint()?;
    let mut rng = stream(seed, 1);
    let draws = field.gibbs(500, n, &mut rng);
    let mut sampled = vec![0.0; table.len()];
    for s in draws.chunks_exact(field.num_vars()) {
        let cfg: Vec<usize> = s.iter().map(|&c| usize::from(c)).collect();
        sampled[table.index_of(&cfg)] += 1.0 / n as f64;
    }
    let tv = 0.5 * sampled.iter().zip(&table.probs).map(|(a, b)| (a - b).abs()).sum::<f64>();
    Ok(GibbsView {
        states: (0..table.len()).map(|i| table.state(i).assignment).collect(),
        exact: table.probs.clone(),
        sampled,
        tv,
    })
}

fn to_json<T: Serialize>(r: soda::Result<T>) -> String {
    match r {
        Ok(v) => serde_json::to_string(&v).unwrap_or_else(|e| error_json(&e.to_string())),
        Err(e) => error_json(&e.to_string()),
    }
}

fn error_json(msg: &str) -> String {
    serde_json::json!({ "error": msg }).to_string()
}

#[wasm_bindgen]
pub fn di_surface(lag: u32, coupling: f64, window: u32, seed: u32) -> String {
    to_json(surface_view(lag as usize, coupling, window as usize, u64::from(seed)))
}

#[wasm_bindgen]
pub fn shrinkage_mse(cells: u32, max_n: u32, trials: u32, seed: u32) -> String {
    let sizes: Vec<usize> = (1..=max_n as usize / 5).map(|i| 5 * i).collect();
    to_json(shrinkage_curve(cells as usize, &sizes, trials as usize, u64::from(seed)))
}

#[wasm_bindgen]
pub fn gibbs_vs_exact(gamma: f64, n: u32, seed: u32) -> String {
    to_json(gibbs_view(gamma, n as usize, u64::from(seed)))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shrinkage_wins_at_small_n() {
        let curve = shrinkage_curve(64, &[10, 20], 300, 1).unwrap();
        for p in &curve {
            assert!(p.mse_shrink < p.mse_ml, "{p:?}");
            assert!((0.0..=1.0).contains(&p.mean_lambda));
        }
    }

    #[test]
    fn gibbs_table_is_normalized() {
        let g = gibbs_view(0.5, 5000, 2).unwrap();
        assert_eq!(g.states.len(), 27);
        assert!((g.exact.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((g.sampled.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(g.tv < 0.05, "{}", g.tv);
    }

    #[test]
    fn exports_report_errors_as_json() {
        let v: serde_json::Value = serde_json::from_str(&gibbs_vs_exact(0.5, 0, 1)).unwrap();
        assert!(v["error"].is_string());
        let v: serde_json::Value = serde_json::from_str(&shrinkage_mse(1, 20, 10, 1)).unwrap();
        assert!(v["error"].is_string());
    }
}
