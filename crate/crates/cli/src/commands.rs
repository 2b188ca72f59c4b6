use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::json;
use soda::classifier::{evaluate, nn_classify, pairwise_matrix, split, EvalReport};
use soda::config::Config;
use soda::ingest::{parse_detections, parse_symbols, validate, write_detections, write_symbols, DetectionSequence, SymbolSequence};
use soda::localizer::{analyze_pair, corpus_pairs};
use soda::mrf::SampleSet;
use soda::pipeline::infer;
use soda::rng::derive_seed;
use soda::synth::{gen_corpus, gen_coupled_pair, CouplingSpec};
use soda::Error;

use crate::args::{GlobalArgs, SurfaceArgs};
use crate::error::{CliError, CliResult};
use crate::manifest::Run;
use crate::svg::{bubble_svg, Legend};

const DETECTION_EXT: &str = "jsonl";
const SYMBOL_EXT: &str = "sym";
const REPEAT_TAG: u64 = 0x7265_7073;

/// Defaults, then the config file, then flags.
pub fn resolve_config(run: &mut Run, global: &GlobalArgs, surface: Option<&SurfaceArgs>) -> CliResult<Config> {
    let mut cfg = match &global.config {
        Some(path) => {
            let bytes = run.read(path)?;
            let text = String::from_utf8(bytes)
                .map_err(|_| Error::InvalidConfig(format!("{} is not UTF-8", path.display())))?;
            Config::from_json(&text).map_err(|e| e.context(path.display().to_string()))?
        }
        None => Config::default(),
    };
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    if let Some(s) = surface {
        if let Some(w) = s.window {
            cfg.window = w;
        }
        if let Some(q) = s.fdr {
            cfg.fdr = q;
        }
        if let Some(m) = s.fdr_method {
            cfg.fdr_method = m;
        }
        if let Some(r) = s.null_reps {
            cfg.null_reps = r;
        }
    }
    cfg.check()?;
    Ok(cfg)
}

/// Files given directly, plus files with extension `ext` inside given
/// directories, each directory sorted by name.
pub fn expand_inputs(inputs: &[PathBuf], ext: &str) -> CliResult<Vec<PathBuf>> {
    let mut out = Vec::new();
    for input in inputs {
        if input.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(input)
                .map_err(|e| Error::io(input, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == ext))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(input.clone());
        }
    }
    if out.is_empty() {
        return Err(CliError::Usage(format!("no .{ext} inputs found")));
    }
    Ok(out)
}

fn file_context(path: &Path) -> impl Fn(Error) -> Error + '_ {
    move |e| e.context(path.display().to_string())
}

fn load_detection_files(run: &mut Run, files: &[PathBuf]) -> CliResult<Vec<DetectionSequence>> {
    files
        .iter()
        .map(|f| {
            let bytes = run.read(f)?;
            Ok(parse_detections(bytes.as_slice()).map_err(file_context(f))?)
        })
        .collect()
}

fn load_symbol_file(run: &mut Run, path: &Path) -> CliResult<SymbolSequence> {
    let bytes = run.read(path)?;
    let mut seq = parse_symbols(bytes.as_slice()).map_err(file_context(path))?;
    if seq.sequence_id.is_empty() {
        seq.sequence_id = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
    }
    Ok(seq)
}

/// File name for a sequence id: path separators and other awkward bytes
/// become `_`.
pub fn file_stem_for(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '-' | '_' | '.') { c } else { '_' })
        .collect()
}

fn unique_stems<'a>(ids: impl Iterator<Item = &'a str>) -> CliResult<Vec<String>> {
    let mut seen = BTreeSet::new();
    ids.map(|id| {
        let stem = file_stem_for(id);
        if stem.is_empty() || !seen.insert(stem.clone()) {
            return Err(CliError::Usage(format!("sequence id {id:?} is empty or not unique")));
        }
        Ok(stem)
    })
    .collect()
}

fn samples_jsonl(seq: &DetectionSequence, sets: &[SampleSet]) -> String {
    let mut out = String::new();
    let header = json!({
        "sequence_id": seq.sequence_id,
        "M": sets.len(),
        "n": sets.first().map_or(0, |s| s.n),
        "num_vars": sets.first().map_or(0, |s| s.num_vars),
    });
    let _ = writeln!(out, "{header}");
    for set in sets {
        let flat: Vec<u16> = set.iter().flatten().copied().collect();
        let _ = writeln!(out, "{}", json!({ "frame": set.frame_index, "samples": flat }));
    }
    out
}

pub fn cmd_infer(global: &GlobalArgs, inputs: &[PathBuf], no_samples: bool) -> CliResult<()> {
    let mut run = Run::new(&global.out)?;
    let cfg = resolve_config(&mut run, global, None)?;
    let files = expand_inputs(inputs, DETECTION_EXT)?;
    let seqs = load_detection_files(&mut run, &files)?;
    let stems = unique_stems(seqs.iter().map(|s| s.sequence_id.as_str()))?;
    let inf = infer(&cfg, &seqs)?;

    for (stem, sym) in stems.iter().zip(&inf.symbols) {
        let mut buf = Vec::new();
        write_symbols(sym, &mut buf).expect("writing to memory");
        run.write(&format!("symbols/{stem}.{SYMBOL_EXT}"), &buf)?;
    }
    if !no_samples {
        for ((stem, seq), sets) in stems.iter().zip(&seqs).zip(&inf.samples) {
            run.write(&format!("samples/{stem}.jsonl"), samples_jsonl(seq, sets).as_bytes())?;
        }
    }
    run.write_json("codebook.json", &inf.codebook)?;
    run.write_json(
        "model.json",
        &json!({
            "model": inf.model,
            "gamma_fit": inf.gamma_fit,
            "sequences": seqs.iter().map(|s| &s.sequence_id).collect::<Vec<_>>(),
        }),
    )?;
    run.finish("infer", &cfg, global.threads)
}

pub fn cmd_surface(global: &GlobalArgs, x: &Path, y: &Path, surface: &SurfaceArgs) -> CliResult<()> {
    let mut run = Run::new(&global.out)?;
    let cfg = resolve_config(&mut run, global, Some(surface))?;
    let xs = load_symbol_file(&mut run, x)?;
    let ys = load_symbol_file(&mut run, y)?;
    if xs.p != ys.p {
        return Err(Error::IncompatibleAlphabets(format!("p = {} vs p = {}", xs.p, ys.p)).into());
    }
    let analysis = analyze_pair(&xs, &ys, &cfg.surface_spec(), cfg.seed, cfg.fdr, cfg.fdr_method, cfg.top_n)
        .map_err(|e| Error::Pair {
            from: xs.sequence_id.clone(),
            to: ys.sequence_id.clone(),
            source: Box::new(e),
        })?;
    run.write("surface.csv", analysis.surface.to_csv().as_bytes())?;
    run.write_json("peaks.json", &analysis.peaks.peaks)?;
    run.write_json(
        "pair.json",
        &json!({
            "from": xs.sequence_id,
            "to": ys.sequence_id,
            "max_di": analysis.peaks.max_stat,
            "pair_pval": analysis.pair_pval,
            "significant": analysis.pair_pval <= cfg.fdr,
            "null": analysis.surface.null.as_ref().map(|n| json!({
                "mode": n.mode, "mu": n.mu, "sigma": n.sigma, "degenerate": n.degenerate,
            })),
        }),
    )?;
    let legend = Legend {
        window: cfg.window,
        q: cfg.fdr,
        method: cfg.fdr_method,
        seed: cfg.seed,
    };
    let title = format!("Local DI {} -> {}", xs.sequence_id, ys.sequence_id);
    run.write("bubble.svg", bubble_svg(&analysis.surface, &analysis.peaks, &legend, &title).as_bytes())?;
    run.finish("surface", &cfg, global.threads)
}

#[derive(Serialize)]
struct RepeatResult {
    seed: u64,
    accuracy: f64,
}

#[derive(Serialize)]
struct ClassifyReport<'a> {
    #[serde(flatten)]
    eval: &'a EvalReport,
    k_neighbors: usize,
    split_ratio: f64,
    train: &'a [String],
    test: &'a [String],
    repeats: Vec<RepeatResult>,
    mean_accuracy: f64,
}

fn labeled(corpus: &[SymbolSequence]) -> CliResult<Vec<(String, String)>> {
    corpus
        .iter()
        .map(|s| match &s.label {
            Some(l) => Ok((s.sequence_id.clone(), l.clone())),
            None => Err(CliError::Usage(format!("sequence {} has no label", s.sequence_id))),
        })
        .collect()
}

fn run_split(
    matrix: &soda::classifier::DiMatrix,
    items: &[(String, String)],
    cfg: &Config,
    seed: u64,
) -> CliResult<(soda::classifier::Split, Vec<soda::classifier::Prediction>, EvalReport)> {
    let sp = split(items, cfg.split_ratio, seed)?;
    let train: Vec<(String, String)> = items.iter().filter(|i| sp.train.contains(&i.0)).cloned().collect();
    let preds = nn_classify(matrix, &train, &sp.test, cfg.k_neighbors)?;
    let truth: Vec<String> = sp
        .test
        .iter()
        .map(|id| items.iter().find(|i| &i.0 == id).map(|i| i.1.clone()).unwrap_or_default())
        .collect();
    let report = evaluate(&preds, &truth)?;
    Ok((sp, preds, report))
}

pub fn cmd_classify(
    global: &GlobalArgs,
    inputs: &[PathBuf],
    repeats: usize,
    localize: bool,
    surface: &SurfaceArgs,
) -> CliResult<()> {
    if repeats == 0 {
        return Err(CliError::Usage("--repeats must be >= 1".into()));
    }
    let mut run = Run::new(&global.out)?;
    let cfg = resolve_config(&mut run, global, Some(surface))?;
    let files = expand_inputs(inputs, SYMBOL_EXT)?;
    let corpus: Vec<SymbolSequence> = files
        .iter()
        .map(|f| load_symbol_file(&mut run, f))
        .collect::<CliResult<_>>()?;
    unique_stems(corpus.iter().map(|s| s.sequence_id.as_str()))?;
    if let Some(bad) = corpus.iter().find(|s| s.p != corpus[0].p) {
        return Err(Error::IncompatibleAlphabets(format!(
            "{} has p = {}, {} has p = {}",
            corpus[0].sequence_id, corpus[0].p, bad.sequence_id, bad.p
        ))
        .into());
    }
    let items = labeled(&corpus)?;
    let matrix = pairwise_matrix(&corpus, &cfg.di_options())?;
    run.write("matrix.csv", matrix.to_csv(&matrix.sym).as_bytes())?;
    run.write("forward.csv", matrix.to_csv(&matrix.forward).as_bytes())?;

    let (sp, preds, report) = run_split(&matrix, &items, &cfg, cfg.seed)?;
    let mut pred_csv = String::from("id,predicted,truth\n");
    for p in &preds {
        let truth = items.iter().find(|i| i.0 == p.id).map_or("", |i| i.1.as_str());
        let _ = writeln!(pred_csv, "{},{},{}", p.id, p.predicted, truth);
    }
    run.write("predictions.csv", pred_csv.as_bytes())?;

    let mut repeat_results = vec![RepeatResult {
        seed: cfg.seed,
        accuracy: report.accuracy,
    }];
    for r in 1..repeats {
        let seed = derive_seed(cfg.seed, REPEAT_TAG + r as u64);
        let (_, _, rep) = run_split(&matrix, &items, &cfg, seed)?;
        repeat_results.push(RepeatResult {
            seed,
            accuracy: rep.accuracy,
        });
    }
    let mean_accuracy = repeat_results.iter().map(|r| r.accuracy).sum::<f64>() / repeat_results.len() as f64;
    run.write_json(
        "report.json",
        &ClassifyReport {
            eval: &report,
            k_neighbors: cfg.k_neighbors,
            split_ratio: cfg.split_ratio,
            train: &sp.train,
            test: &sp.test,
            repeats: repeat_results,
            mean_accuracy,
        },
    )?;
    if localize {
        let pairs = corpus_pairs(&corpus, &cfg.surface_spec(), cfg.seed, cfg.fdr, cfg.fdr_method)?;
        run.write_json("pairs.json", &pairs)?;
    }
    run.finish("classify", &cfg, global.threads)
}

pub fn cmd_synth(global: &GlobalArgs, spec_path: &Path, per_class: usize, pair: bool) -> CliResult<()> {
    let mut run = Run::new(&global.out)?;
    let cfg = resolve_config(&mut run, global, None)?;
    let bytes = run.read(spec_path)?;
    let spec: CouplingSpec = serde_json::from_slice(&bytes)
        .map_err(|e| Error::InvalidSpec(e.to_string()))
        .map_err(file_context(spec_path))?;
    let write_seq = |run: &mut Run, stem: &str, seq: &DetectionSequence| -> CliResult<()> {
        let mut buf = Vec::new();
        write_detections(seq, &mut buf).expect("writing to memory");
        run.write(&format!("{stem}.{DETECTION_EXT}"), &buf)?;
        Ok(())
    };
    if pair {
        let (x, y, truth) = gen_coupled_pair(&spec, cfg.seed)?;
        write_seq(&mut run, "x", &x)?;
        write_seq(&mut run, "y", &y)?;
        run.write_json("truth.json", &truth)?;
    } else {
        let corpus = gen_corpus(&spec, per_class, cfg.seed)?;
        let stems = unique_stems(corpus.sequences.iter().map(|s| s.sequence_id.as_str()))?;
        for (stem, seq) in stems.iter().zip(&corpus.sequences) {
            write_seq(&mut run, stem, seq)?;
        }
        run.write_json("truth.json", &corpus.truth)?;
    }
    run.finish("synth", &cfg, global.threads)
}

pub fn cmd_validate(global: &GlobalArgs, inputs: &[PathBuf]) -> CliResult<()> {
    let mut run = Run::new(&global.out)?;
    let cfg = resolve_config(&mut run, global, None)?;
    let files = expand_inputs(inputs, DETECTION_EXT)?;
    let mut entries = Vec::new();
    let mut failed = 0usize;
    for f in &files {
        let bytes = run.read(f)?;
        let entry = match parse_detections(bytes.as_slice()) {
            Ok(seq) => {
                let arity = cfg.arity.unwrap_or(seq.arity);
                let mut report = validate(&seq, arity);
                if let Some(expected) = cfg.persons {
                    for frame in &seq.frames {
                        if frame.persons.len() != expected {
                            report.issues.push(soda::ingest::Issue {
                                frame: Some(frame.frame_index),
                                kind: soda::ingest::IssueKind::PersonCountMismatch {
                                    expected,
                                    got: frame.persons.len(),
                                },
                            });
                        }
                    }
                }
                if !report.is_valid() {
                    failed += 1;
                }
                json!({
                    "file": f.display().to_string(),
                    "sequence_id": seq.sequence_id,
                    "frames": seq.frames.len(),
                    "valid": report.is_valid(),
                    "issues": report.issues,
                })
            }
            Err(e) => {
                failed += 1;
                json!({
                    "file": f.display().to_string(),
                    "valid": false,
                    "error": { "kind": e.kind(), "message": e.to_string() },
                })
            }
        };
        entries.push(entry);
    }
    run.write_json("validation.json", &json!({ "files": entries, "failed": failed }))?;
    run.finish("validate", &cfg, global.threads)?;
    if failed > 0 {
        return Err(CliError::Invalid(format!(
            "{failed} of {} files failed validation; see validation.json",
            files.len()
        )));
    }
    Ok(())
}
