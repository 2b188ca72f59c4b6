use soda::config::{Config, SampleCoupling};
use soda::estimator::{directed_information, DiOptions};
use soda::ingest::{Grid, ModelArity};
use soda::localizer::{analyze_pair, FdrMethod};
use soda::pipeline::{frame_seed, infer};
use soda::synth::{gen_coupled_pair, ClassSpec, CouplingSpec};

fn pair_spec(lag: usize, coupling: f64, window: Option<(usize, usize)>) -> CouplingSpec {
    CouplingSpec {
        classes: vec![ClassSpec {
            label: "walk".into(),
            lag,
            coupling,
            active_window: window,
            step: 1.0,
        }],
        persons: 1,
        arity: ModelArity::Three,
        frames: 30,
        noise: 0.2,
        grid: Grid { width: 64, height: 48 },
        candidates: 3,
        distractor_spread: 3.0,
    }
}

fn quick(seed: u64) -> Config {
    Config {
        seed,
        gibbs_burnin: 100,
        gibbs_samples: 400,
        null_reps: 60,
        ..Config::default()
    }
}

#[test]
fn symbols_have_declared_shape() {
    let (x, y, _) = gen_coupled_pair(&pair_spec(1, 0.9, None), 4).unwrap();
    let inf = infer(&quick(4), &[x, y]).unwrap();
    assert_eq!(inf.symbols.len(), 2);
    for s in &inf.symbols {
        assert_eq!((s.p, s.n, s.len()), (16, 400, 30));
        assert!(s.frames.iter().flatten().all(|&v| v < 16));
    }
    assert_eq!(inf.codebook.p, 16);
    assert_eq!(inf.codebook.feature_dim, 6);
    assert_eq!(inf.samples[0].len(), 30);
    assert_eq!(inf.samples[1][5].n, 400);
    assert!(inf.gamma_fit.is_some());
    assert_eq!(inf.symbols[0].label.as_deref(), Some("walk"));
}

#[test]
fn rerun_is_identical() {
    let (x, y, _) = gen_coupled_pair(&pair_spec(1, 0.9, None), 5).unwrap();
    let a = infer(&quick(5), &[x.clone(), y.clone()]).unwrap();
    let b = infer(&quick(5), &[x, y]).unwrap();
    assert_eq!(a, b);
}

#[test]
fn fixed_gammas_skip_fitting() {
    let (x, y, _) = gen_coupled_pair(&pair_spec(1, 0.9, None), 6).unwrap();
    let cfg = Config {
        gamma1: Some(0.5),
        gamma2: Some(0.0),
        ..quick(6)
    };
    let inf = infer(&cfg, &[x, y]).unwrap();
    assert!(inf.gamma_fit.is_none());
    assert_eq!(inf.model.gamma1, 0.5);
}

#[test]
fn coupling_modes_seed_frames_differently() {
    let common = quick(1);
    let indep = Config {
        sample_coupling: SampleCoupling::Independent,
        ..quick(1)
    };
    assert_eq!(frame_seed(&common, "a", 0), frame_seed(&common, "b", 7));
    assert_ne!(frame_seed(&indep, "a", 0), frame_seed(&indep, "b", 0));
    assert_ne!(frame_seed(&indep, "a", 0), frame_seed(&indep, "a", 1));
}

#[test]
fn copy_direction_survives_the_pipeline() {
    let (x, y, _) = gen_coupled_pair(&pair_spec(1, 0.9, None), 8).unwrap();
    let inf = infer(&quick(8), &[x, y]).unwrap();
    let o = DiOptions::default();
    let f = directed_information(&inf.symbols[0], &inf.symbols[1], &o).unwrap().value;
    let b = directed_information(&inf.symbols[1], &inf.symbols[0], &o).unwrap().value;
    assert!(f > b, "forward {f} backward {b}");
}

#[test]
fn independent_sampling_removes_cross_sequence_signal() {
    let (x, y, _) = gen_coupled_pair(&pair_spec(1, 1.0, None), 9).unwrap();
    let o = DiOptions::default();
    let di = |cfg: &Config| {
        let inf = infer(cfg, &[x.clone(), y.clone()]).unwrap();
        directed_information(&inf.symbols[0], &inf.symbols[1], &o).unwrap().value
    };
    let common = di(&quick(9));
    let indep = di(&Config {
        sample_coupling: SampleCoupling::Independent,
        ..quick(9)
    });
    assert!(common > 2.0 * indep, "common {common} independent {indep}");
}

#[test]
fn planted_window_localized_end_to_end() {
    let (x, y, truth) = gen_coupled_pair(&pair_spec(2, 0.9, Some((10, 24))), 2).unwrap();
    assert!(!truth.coupled_frames.is_empty());
    let cfg = quick(2);
    let inf = infer(&cfg, &[x, y]).unwrap();
    let a = analyze_pair(&inf.symbols[0], &inf.symbols[1], &cfg.surface_spec(), 2, 0.1, FdrMethod::By, 10).unwrap();
    let hit = a
        .peaks
        .peaks
        .iter()
        .filter(|p| p.significant)
        .any(|p| (p.tau_y as i64 - p.tau_x as i64 - 2).abs() <= 1);
    assert!(hit, "{:?}", a.peaks.peaks);
}

#[test]
fn mismatched_grids_rejected() {
    let (x, mut y, _) = gen_coupled_pair(&pair_spec(1, 0.5, None), 3).unwrap();
    y.grid = Grid { width: 80, height: 48 };
    assert!(infer(&quick(3), &[x, y]).is_err());
    assert!(infer(&quick(3), &[]).is_err());
}
