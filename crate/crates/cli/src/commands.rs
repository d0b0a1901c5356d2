use std::fs;
use std::path::{Path, PathBuf};

use kinegraph::bone_select::{
    dataset_scores, select_max_assignment, select_min_assignment, BoneMatrix, CandidateScores,
};
use kinegraph::mha_gc::{self, degree_stats, normalize_symmetric, verify_eigen_relation};
use kinegraph::model::{
    self, ensemble_scores, forward_batch, init_params, read_dataset, synthetic_dataset,
    synthetic_templates, BnMode, MicroTrainConfig, ModelFile, ScoreRecord, ScoresFile,
};
use kinegraph::prior_graphs::{build_gpr, build_templates_with, class_centroids, SimilarityKind};
use kinegraph::skeleton_io::{
    label_from_ntu_name, parse_ntu_text, preprocess, read_canonical, read_canonical_value,
    write_canonical, PreprocessConfig,
};
use kinegraph::{
    DiffusionConfig, EmbeddingTable, FloatFormat, GprGraph, Matrix, ModelConfig, SkeletonSequence,
};
use serde::Serialize;
use serde_json::{json, Value};

use crate::error::CliError;
use crate::output::Run;
use crate::{
    DiffuseArgs, EnsembleArgs, ForwardArgs, Globals, GraphsArgs, InputFormat, MicroTrainArgs, Mode,
    ParseArgs, ReportArgs, SelectBonesArgs, Similarity, SpectraArgs,
};

fn json_value(text: &str, path: &Path) -> Result<Value, CliError> {
    serde_json::from_str(text)
        .map_err(|e| CliError::Input(format!("{}: invalid JSON: {e}", path.display())))
}

fn read_matrix(run: &mut Run, path: &Path) -> Result<Matrix, CliError> {
    let text = run.read(path)?;
    serde_json::from_str(&text).map_err(|e| {
        CliError::Input(format!(
            "{}: expected a 2-D array of numbers: {e}",
            path.display()
        ))
    })
}

fn read_gpr(run: &mut Run, path: Option<&Path>) -> Result<Option<GprGraph>, CliError> {
    path.map(|p| Ok(GprGraph::from_json(&run.read(p)?)?))
        .transpose()
}

fn file_name(path: &Path) -> String {
    path.file_name()
        .and_then(|n| n.to_str())
        .unwrap_or_default()
        .to_owned()
}

/// Named sequences from an NTU file (first body), a canonical sequence, a
/// dataset file or a directory of such files (sorted by name).
fn load_sequences(run: &mut Run, path: &Path) -> Result<Vec<(String, SkeletonSequence)>, CliError> {
    if path.is_dir() {
        let mut files: Vec<PathBuf> = fs::read_dir(path)
            .map_err(|e| CliError::Input(format!("cannot list {}: {e}", path.display())))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| {
                p.is_file()
                    && p.extension()
                        .is_some_and(|x| x == "skeleton" || x == "json")
                    && !p.to_string_lossy().ends_with(".manifest.json")
            })
            .collect();
        files.sort();
        let mut out = Vec::new();
        for f in &files {
            out.extend(load_sequences(run, f)?);
        }
        if out.is_empty() {
            return Err(CliError::Input(format!(
                "{} holds no .skeleton or .json sequences",
                path.display()
            )));
        }
        return Ok(out);
    }
    let text = run.read(path)?;
    let name = file_name(path);
    if path.extension().is_some_and(|x| x == "skeleton") {
        let mut bodies = parse_ntu_text(&text)?;
        let seq = bodies.swap_remove(0).with_label(label_from_ntu_name(&name));
        return Ok(vec![(name, seq)]);
    }
    let value = json_value(&text, path)?;
    match value.get("samples").and_then(Value::as_array) {
        Some(items) => items
            .iter()
            .enumerate()
            .map(|(i, item)| Ok((format!("{name}#{i}"), read_canonical_value(item)?)))
            .collect(),
        None => Ok(vec![(name, read_canonical_value(&value)?)]),
    }
}

pub fn parse(a: &ParseArgs, g: &Globals) -> Result<(), CliError> {
    let mut run = Run::new("parse", a, g.seed);
    let text = run.read(&a.input)?;
    let mut seq = match a.format {
        InputFormat::Ntu => {
            let mut bodies = parse_ntu_text(&text)?;
            if a.body >= bodies.len() {
                return Err(CliError::Input(format!(
                    "body {} requested but the record has {} bodies",
                    a.body,
                    bodies.len()
                )));
            }
            bodies
                .swap_remove(a.body)
                .with_label(label_from_ntu_name(&file_name(&a.input)))
        }
        InputFormat::Json => read_canonical(&text)?,
    };
    if let Some(target_frames) = a.target_frames {
        let cfg = PreprocessConfig {
            target_frames,
            center_joint: a.center_joint,
            ..Default::default()
        };
        seq = preprocess(&seq, &cfg)?;
    }
    if !seq.warnings.is_empty() {
        g.note(&format!("warnings: {:?}", seq.warnings));
    }
    let fmt = if a.full_precision {
        FloatFormat::Full
    } else {
        FloatFormat::Sig9
    };
    let value = json_value(&write_canonical(&seq, fmt), &a.out)?;
    run.write(&a.out, &value, fmt)
}

pub fn graphs(a: &GraphsArgs, g: &Globals) -> Result<(), CliError> {
    let mut run = Run::new("graphs", a, g.seed);
    let table = EmbeddingTable::from_json(&run.read(&a.embeddings)?)?;
    let gpr = build_gpr(&class_centroids(&table))?;
    let kind = match a.similarity {
        Similarity::Cosine => SimilarityKind::Cosine,
        Similarity::Euclidean => SimilarityKind::Euclidean,
    };
    let templates = build_templates_with(&table, kind)?;
    g.note(&format!(
        "{} classes, {} joints, embedding dim {}",
        table.classes(),
        table.joints(),
        table.dim()
    ));
    run.write(&a.out_gpr, &gpr, FloatFormat::Sig9)?;
    run.write(&a.out_tc, &templates, FloatFormat::Sig9)
}

fn scores_for(
    run: &mut Run,
    data: &Path,
    gpr: Option<&Path>,
) -> Result<(usize, CandidateScores), CliError> {
    let seqs: Vec<SkeletonSequence> = load_sequences(run, data)?
        .into_iter()
        .map(|(_, s)| s)
        .collect();
    let gpr = read_gpr(run, gpr)?;
    Ok((seqs.len(), dataset_scores(&seqs, gpr.as_ref())?))
}

pub fn select_bones(a: &SelectBonesArgs, g: &Globals) -> Result<(), CliError> {
    let mut run = Run::new("select-bones", a, g.seed);
    let (n, scores) = scores_for(&mut run, &a.data, a.gpr.as_deref())?;
    let bones = if a.max {
        select_max_assignment(&scores, a.base)?
    } else {
        select_min_assignment(&scores, a.base)?
    };
    g.note(&format!(
        "{n} sequences, total score {:.6}",
        scores.assignment_cost(&bones)
    ));
    run.write(&a.out, &bones, FloatFormat::Sig9)
}

pub fn diffuse(a: &DiffuseArgs, g: &Globals) -> Result<(), CliError> {
    let mut run = Run::new("diffuse", a, g.seed);
    let abar = read_matrix(&mut run, &a.abar)?;
    let features = match &a.features {
        Some(p) => read_matrix(&mut run, p)?,
        None => Matrix::identity(abar.rows()),
    };
    let cfg = match a.mode {
        Mode::Exact => DiffusionConfig::exact(a.beta, a.hops),
        Mode::Iter => DiffusionConfig::iterative(a.beta, a.k),
    };
    let out = mha_gc::diffuse(&abar, &features, &cfg)?;
    if !out.is_finite() {
        return Err(CliError::Numerical(
            "diffusion produced non-finite values".into(),
        ));
    }
    run.write(&a.out, &out, FloatFormat::Sig9)
}

pub fn spectra(a: &SpectraArgs, g: &Globals) -> Result<(), CliError> {
    let mut run = Run::new("spectra", a, g.seed);
    let abar = read_matrix(&mut run, &a.abar)?;
    let degrees = degree_stats(&abar)?;
    let checked = if a.raw {
        abar
    } else {
        normalize_symmetric(&abar)?
    };
    let report = verify_eigen_relation(&checked, a.beta, a.trunc)?;
    g.note(&format!(
        "max eigenvalue residual {:e}",
        report.max_eig_residual
    ));
    let mut value = serde_json::to_value(&report)?;
    value["degrees"] = serde_json::to_value(&degrees)?;
    value["normalized"] = json!(!a.raw);
    let out = a
        .report
        .clone()
        .unwrap_or_else(|| a.abar.with_extension("spectra.json"));
    run.write(&out, &value, FloatFormat::Sig9)
}

#[derive(serde::Deserialize)]
struct ModelSpec {
    config: ModelConfig,
    #[serde(default)]
    params: Option<model::ModelParams>,
}

pub fn forward(a: &ForwardArgs, g: &Globals) -> Result<(), CliError> {
    let mut run = Run::new("forward", a, g.seed);
    let text = run.read(&a.model)?;
    let spec: ModelSpec = serde_json::from_str(&text)
        .map_err(|e| CliError::Input(format!("{}: {e}", a.model.display())))?;
    let params = match spec.params {
        Some(p) => p,
        None => init_params(&spec.config, g.seed)?,
    };
    let named = load_sequences(&mut run, &a.data)?;
    let batch: Vec<&SkeletonSequence> = named.iter().map(|(_, s)| s).collect();
    let out = forward_batch(&params, &spec.config, &batch, BnMode::Frozen)?;
    let scores = ScoresFile {
        samples: named
            .iter()
            .zip(out.logits)
            .map(|((id, _), logits)| ScoreRecord {
                id: Value::String(id.clone()),
                logits,
            })
            .collect(),
    };
    run.write(&a.out_scores, &scores, FloatFormat::Sig9)
}

pub fn micro_train(a: &MicroTrainArgs, g: &Globals) -> Result<(), CliError> {
    let mut run = Run::new("micro-train", a, g.seed);
    let text = run.read(&a.config)?;
    let mut cfg: MicroTrainConfig = serde_json::from_str(&text)
        .map_err(|e| CliError::Input(format!("{}: {e}", a.config.display())))?;
    if let Some(steps) = a.steps {
        cfg.steps = steps;
    }
    let data = match &a.data {
        Some(p) => read_dataset(&run.read(p)?)?,
        None => synthetic_dataset(&cfg.model, &cfg.data, g.seed)?,
    };
    let templates = match &a.embeddings {
        Some(p) => {
            let table = EmbeddingTable::from_json(&run.read(p)?)?;
            build_templates_with(&table, SimilarityKind::Cosine)?
        }
        None => synthetic_templates(&cfg.model, g.seed)?,
    };
    let (trace, params) = model::micro_train(&cfg, &data, &templates, g.seed)?;
    g.note(&format!(
        "{} parameters, loss {:.4} -> {:.4}, train accuracy {:.3}",
        trace.param_count,
        trace.initial_total(),
        trace.final_loss.total,
        trace.train_accuracy
    ));
    run.write(&a.trace, &trace, FloatFormat::Sig9)?;
    if let Some(path) = &a.model_out {
        // Parameters keep full precision so a reloaded model scores identically.
        let file = ModelFile {
            config: cfg.model.clone(),
            params,
        };
        run.write(path, &file, FloatFormat::Full)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct FusedRecord<'a> {
    id: &'a Value,
    scores: &'a [f64],
    prediction: usize,
}

pub fn ensemble(a: &EnsembleArgs, g: &Globals) -> Result<(), CliError> {
    let mut run = Run::new("ensemble", a, g.seed);
    let mut files = Vec::with_capacity(a.scores.len());
    for p in &a.scores {
        let text = run.read(p)?;
        let f: ScoresFile = serde_json::from_str(&text)
            .map_err(|e| CliError::Input(format!("{}: {e}", p.display())))?;
        files.push(f);
    }
    let ids: Vec<&Value> = files[0].samples.iter().map(|s| &s.id).collect();
    for (f, p) in files.iter().zip(&a.scores).skip(1) {
        let same =
            f.samples.len() == ids.len() && f.samples.iter().zip(&ids).all(|(s, id)| &s.id == *id);
        if !same {
            return Err(CliError::Input(format!(
                "[ShapeMismatch] {} lists different sample ids than {}",
                p.display(),
                a.scores[0].display()
            )));
        }
    }
    let streams: Vec<Vec<Vec<f64>>> = files.iter().map(ScoresFile::logits).collect();
    let fused = ensemble_scores(&streams)?;
    let records: Vec<FusedRecord> = ids
        .iter()
        .zip(&fused.fused)
        .zip(&fused.predictions)
        .map(|((id, scores), &prediction)| FusedRecord {
            id,
            scores,
            prediction,
        })
        .collect();
    g.note(&format!("fused {} streams", streams.len()));
    run.write(&a.out, &json!({ "samples": records }), FloatFormat::Sig9)
}

pub fn report(a: &ReportArgs, g: &Globals) -> Result<(), CliError> {
    let mut run = Run::new("report", a, g.seed);
    let (n, scores) = scores_for(&mut run, &a.data, a.gpr.as_deref())?;
    let min = select_min_assignment(&scores, a.base)?;
    let max = select_max_assignment(&scores, a.base)?;
    let mut value = json!({
        "samples": n,
        "joints": scores.joints(),
        "gpr_weighted": a.gpr.is_some(),
        "scores": scores.matrix(),
        "mean_candidate_score": scores.mean_candidate_score(),
        "min": {"bones": min, "sum": scores.assignment_cost(&min)},
        "max": {"bones": max, "sum": scores.assignment_cost(&max)},
    });
    if a.physical {
        let phys = BoneMatrix::physical_ntu();
        if phys.joints() != scores.joints() {
            return Err(CliError::Input(format!(
                "the physical skeleton has {} joints, the data {}",
                phys.joints(),
                scores.joints()
            )));
        }
        value["physical"] = json!({"bones": phys, "sum": scores.assignment_cost(&phys)});
    }
    run.write(&a.out, &value, FloatFormat::Sig9)
}
