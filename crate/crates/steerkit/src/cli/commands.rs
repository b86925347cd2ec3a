//! Subcommand implementations. Each command resolves its inputs from the
//! run config, writes its artifacts into the output directory and records
//! them in a manifest. Exit codes: 0 success, 1 search finished below
//! thresholds, 2 input error (returned as `Err`).

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::config::RunConfig;
use super::manifest::RunManifest;
use crate::error::{Error, Result};
use crate::headsearch::HeadSearch;
use crate::microformer::{encode_text, Microformer};
use crate::steering::{
    compute_all_directions, save_directions, token_norm_profile, ActivationDataset, DirectionSet,
    InterventionConfig,
};
use crate::sysgraph::{extract_triples, select_seed, NgramEmbedder, SystemModel};
use crate::verdicts::{
    build_prompt, evaluate_config, load_cases, sweep, ConfigEvaluator, RequirementCase,
    TransformerBackend,
};

fn ensure_out(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir.display().to_string(), e))
}

fn config_snapshot(cfg: &RunConfig) -> serde_json::Value {
    serde_json::to_value(cfg).unwrap_or(serde_json::Value::Null)
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

/// `extract`: system model + requirements -> one JSONL record per
/// requirement with the selected seed component and its triples.
pub fn cmd_extract(cfg: &RunConfig, model_path: &Path, requirements_path: &Path) -> Result<i32> {
    let model = SystemModel::load(model_path)?;
    let requirements = load_cases(requirements_path)?;
    let embedder = NgramEmbedder::default();
    let budget = cfg.budget();

    let mut lines = String::new();
    for case in &requirements {
        let seed_id = select_seed(&model, &case.requirement, &embedder, budget.top_k)?;
        let triples = extract_triples(&model, &seed_id, &budget)?;
        let record = serde_json::json!({
            "id": case.id,
            "seed_component_id": seed_id,
            "seed_component": model.component_name(&seed_id),
            "triples": triples.iter().map(|t| t.to_string()).collect::<Vec<_>>(),
        });
        lines.push_str(&serde_json::to_string(&record)?);
        lines.push('\n');
    }

    ensure_out(&cfg.out)?;
    write_text(&cfg.out, "extracted.jsonl", &lines)?;
    let mut manifest = RunManifest::new("extract", cfg.seed, config_snapshot(cfg));
    manifest.set_flag("requirements", requirements.len());
    manifest.add_artifact(&cfg.out, "extracted.jsonl")?;
    manifest.save(&cfg.out)?;
    println!(
        "extracted {} requirement graph(s) -> {}",
        requirements.len(),
        cfg.out.join("extracted.jsonl").display()
    );
    Ok(0)
}

/// Stratified split of labeled cases into direction-identification and
/// evaluation subsets. Every class contributes at least one direction case.
fn direction_split(
    cases: &[RequirementCase],
    fraction: f64,
    seed: u64,
) -> Result<(Vec<RequirementCase>, Vec<RequirementCase>)> {
    let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
    for (i, case) in cases.iter().enumerate() {
        by_class[usize::from(case.gold()?)].push(i);
    }
    if by_class[0].is_empty() || by_class[1].is_empty() {
        return Err(Error::BadInput {
            path: "cases".into(),
            reason: "direction identification needs both fulfilled and not_fulfilled cases".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut direction_idx = Vec::new();
    let mut eval_idx = Vec::new();
    for class in &mut by_class {
        class.shuffle(&mut rng);
        let take = ((fraction * class.len() as f64).floor() as usize).max(1);
        let take = take.min(class.len().saturating_sub(1)).max(1);
        direction_idx.extend(class[..take].iter().copied());
        eval_idx.extend(class[take..].iter().copied());
    }
    if eval_idx.is_empty() {
        return Err(Error::BadInput {
            path: "cases".into(),
            reason: "direction split left no cases for evaluation".into(),
        });
    }
    direction_idx.sort_unstable();
    eval_idx.sort_unstable();
    Ok((
        direction_idx.iter().map(|&i| cases[i].clone()).collect(),
        eval_idx.iter().map(|&i| cases[i].clone()).collect(),
    ))
}

/// Captures last-token activations for the direction subset and computes
/// contrastive directions for every head. The targeted behavior is the
/// cautious "not fulfilled" verdict, so that class is the positive side of
/// the contrast.
fn capture_directions(
    model: &Microformer,
    template: &str,
    direction_cases: &[RequirementCase],
) -> Result<(DirectionSet, Vec<crate::microformer::HeadAddress>)> {
    let addresses = model.dims().all_heads();
    let mut true_runs = Vec::new();
    let mut false_runs = Vec::new();
    for case in direction_cases {
        let prompt = build_prompt(case, template)?;
        let captures = model.capture_activations(&encode_text(&prompt), &addresses)?;
        if case.gold()? {
            false_runs.push(captures);
        } else {
            true_runs.push(captures);
        }
    }
    let dataset = ActivationDataset::from_samples(&true_runs, &false_runs)?;
    compute_all_directions(&dataset)
}

/// `directions`: capture + contrastive directions, persisted as JSON.
pub fn cmd_directions(cfg: &RunConfig) -> Result<i32> {
    let model = cfg.build_model()?;
    let template = cfg.template_text()?;
    let cases = load_cases(cfg.cases_path()?)?;
    let (direction_cases, _) = direction_split(
        &cases,
        cfg.direction_fraction(),
        crate::hashutil::derive_seed(cfg.seed, "split", 0),
    )?;
    let (directions, degenerate) = capture_directions(&model, &template, &direction_cases)?;
    if !degenerate.is_empty() {
        eprintln!(
            "warning: {} head(s) produced a zero contrastive direction",
            degenerate.len()
        );
    }

    ensure_out(&cfg.out)?;
    save_directions(cfg.out.join("directions.json"), &directions)?;
    let mut manifest = RunManifest::new("directions", cfg.seed, config_snapshot(cfg));
    manifest.set_flag("direction_cases", direction_cases.len());
    manifest.set_flag("degenerate_directions", degenerate.len());
    manifest.add_artifact(&cfg.out, "directions.json")?;
    manifest.save(&cfg.out)?;
    println!(
        "computed {} direction(s) -> {}",
        directions.len(),
        cfg.out.join("directions.json").display()
    );
    Ok(0)
}

/// Output of the search pipeline before any artifact is written.
pub struct SearchPipeline {
    pub report: crate::headsearch::SearchReport,
    pub directions: DirectionSet,
    pub degenerate_directions: usize,
}

/// capture -> directions -> divide -> conquer, as a library call.
pub fn run_search_pipeline(cfg: &RunConfig) -> Result<SearchPipeline> {
    let stage = |name: &str, e: Error| Error::StageFailure {
        stage: name.into(),
        source: Box::new(e),
    };

    if cfg.model.backend != "transformer" {
        return Err(Error::ConfigParse(
            "search requires the transformer backend (activation capture)".into(),
        ));
    }
    let model = cfg.build_model().map_err(|e| stage("model", e))?;
    let template = cfg.template_text().map_err(|e| stage("template", e))?;
    let cases = load_cases(cfg.cases_path()?).map_err(|e| stage("cases", e))?;

    let (direction_cases, eval_cases) = direction_split(
        &cases,
        cfg.direction_fraction(),
        crate::hashutil::derive_seed(cfg.seed, "split", 0),
    )
    .map_err(|e| stage("split", e))?;

    let (directions, degenerate) =
        capture_directions(&model, &template, &direction_cases).map_err(|e| stage("capture", e))?;

    let layers = model.dims().layer_heads();
    let backend = TransformerBackend::new(model, template).map_err(|e| stage("backend", e))?;
    let evaluator = ConfigEvaluator::new(
        &backend,
        &eval_cases,
        cfg.eval.k,
        cfg.stage_settings("evaluate"),
    );
    let report = HeadSearch::new(&evaluator, &directions, cfg.thresholds())
        .and_then(|hs| hs.run(&layers))
        .map_err(|e| stage("search", e))?;
    Ok(SearchPipeline {
        report,
        directions,
        degenerate_directions: degenerate.len(),
    })
}

/// `search`: the full pipeline plus persisted artifacts. Writes the node
/// ledger, the best config and the manifest; exits 1 when the best node
/// stayed below the thresholds.
pub fn cmd_search(cfg: &RunConfig) -> Result<i32> {
    let SearchPipeline {
        report,
        directions,
        degenerate_directions,
    } = run_search_pipeline(cfg)?;
    if degenerate_directions > 0 {
        eprintln!("warning: {degenerate_directions} head(s) produced a zero contrastive direction");
    }

    ensure_out(&cfg.out)?;
    save_directions(cfg.out.join("directions.json"), &directions)?;
    report.write_jsonl(cfg.out.join("report.jsonl"))?;
    report
        .best_config(&directions)?
        .save(cfg.out.join("best_config.json"))?;

    let mut manifest = RunManifest::new("search", cfg.seed, config_snapshot(cfg));
    manifest.set_flag("below_threshold", report.below_threshold);
    manifest.set_flag("evaluation_count", report.evaluation_count);
    manifest.set_flag("wall_time_ms", report.wall_time_ms as u64);
    manifest.set_flag("degenerate_directions", degenerate_directions);
    manifest.add_artifact(&cfg.out, "directions.json")?;
    manifest.add_artifact(&cfg.out, "report.jsonl")?;
    manifest.add_artifact(&cfg.out, "best_config.json")?;
    manifest.save(&cfg.out)?;

    println!(
        "search finished: best {:?} precision {:.3} recall {:.3} ({} evaluations{})",
        report
            .best
            .heads
            .iter()
            .map(|h| h.to_string())
            .collect::<Vec<_>>(),
        report.best.precision,
        report.best.recall,
        report.evaluation_count,
        if report.below_threshold {
            ", below thresholds"
        } else {
            ""
        }
    );
    Ok(i32::from(report.below_threshold))
}

/// `eval`: scores one intervention config (or the baseline) over the cases.
pub fn cmd_eval(cfg: &RunConfig, intervention: Option<&Path>) -> Result<i32> {
    let config = load_intervention(intervention)?;
    let cases = load_cases(cfg.cases_path()?)?;
    let backend = cfg.build_backend()?;
    let outcome = evaluate_config(
        &*backend,
        &cases,
        &config,
        cfg.eval.k,
        &cfg.stage_settings("evaluate"),
    )?;

    println!("configuration: {}", config.provenance);
    println!("k:             {}", cfg.eval.k);
    println!(
        "precision:     {:.4}{}",
        outcome.precision,
        if outcome.vacuous_precision {
            " (vacuous: no positive predictions)"
        } else {
            ""
        }
    );
    println!("recall:        {:.4}", outcome.recall);
    println!(
        "tp/fp/fn/tn:   {}/{}/{}/{}  abstentions: {}",
        outcome.true_positives,
        outcome.false_positives,
        outcome.false_negatives,
        outcome.true_negatives,
        outcome.abstentions
    );

    ensure_out(&cfg.out)?;
    let payload = serde_json::json!({
        "configuration": config.provenance,
        "k": cfg.eval.k,
        "outcome": outcome,
    });
    write_text(
        &cfg.out,
        "eval.json",
        &serde_json::to_string_pretty(&payload)?,
    )?;
    let mut manifest = RunManifest::new("eval", cfg.seed, config_snapshot(cfg));
    manifest.set_flag("configuration", config.provenance.clone());
    manifest.add_artifact(&cfg.out, "eval.json")?;
    manifest.save(&cfg.out)?;
    Ok(0)
}

/// `sweep`: alpha-multiplier x temperature grid -> CSV.
pub fn cmd_sweep(cfg: &RunConfig, intervention: Option<&Path>) -> Result<i32> {
    let config = load_intervention(intervention)?;
    let cases = load_cases(cfg.cases_path()?)?;
    let backend = cfg.build_backend()?;
    let grid = cfg.sweep_grid();
    let table = sweep(
        &*backend,
        &cases,
        &config,
        &grid,
        cfg.eval.k,
        &cfg.stage_settings("sweep"),
    )?;

    ensure_out(&cfg.out)?;
    let mut buf = Vec::new();
    table.write_csv(&mut buf)?;
    let csv_text = String::from_utf8(buf).expect("csv is utf-8");
    write_text(&cfg.out, "sweep.csv", &csv_text)?;
    if table.single_repetition {
        eprintln!("note: single repetition per cell; variances are 0 by construction");
    }
    let mut manifest = RunManifest::new("sweep", cfg.seed, config_snapshot(cfg));
    manifest.set_flag("single_repetition", table.single_repetition);
    manifest.set_flag("rows", table.rows.len());
    manifest.add_artifact(&cfg.out, "sweep.csv")?;
    manifest.save(&cfg.out)?;
    println!(
        "swept {} cell(s) -> {}",
        table.rows.len(),
        cfg.out.join("sweep.csv").display()
    );
    Ok(0)
}

/// `norms`: per-token activation-norm profile for a prompt or case.
pub fn cmd_norms(
    cfg: &RunConfig,
    text: Option<&str>,
    case_id: Option<&str>,
    heads: Option<&str>,
) -> Result<i32> {
    let model = cfg.build_model()?;
    let prompt = match (text, case_id) {
        (Some(t), _) => t.to_string(),
        (None, Some(id)) => {
            let cases = load_cases(cfg.cases_path()?)?;
            let case = cases
                .iter()
                .find(|c| c.id == id)
                .ok_or_else(|| Error::BadInput {
                    path: id.to_string(),
                    reason: "case id not found".into(),
                })?;
            build_prompt(case, &cfg.template_text()?)?
        }
        (None, None) => return Err(Error::ConfigParse("norms needs --text or --case-id".into())),
    };
    let head_set = match heads {
        Some(spec) => parse_heads(spec)?,
        None => model.dims().all_heads(),
    };
    let tokens = encode_text(&prompt);
    let profile = token_norm_profile(&model, &tokens, &head_set)?;

    ensure_out(&cfg.out)?;
    let mut buf = Vec::new();
    profile.write_csv(&tokens, &mut buf)?;
    write_text(
        &cfg.out,
        "norms.csv",
        &String::from_utf8(buf).expect("csv is utf-8"),
    )?;
    let mut manifest = RunManifest::new("norms", cfg.seed, config_snapshot(cfg));
    manifest.set_flag("heads", head_set.len());
    manifest.set_flag("tokens", tokens.len());
    manifest.add_artifact(&cfg.out, "norms.csv")?;
    manifest.save(&cfg.out)?;
    println!("wrote {}", cfg.out.join("norms.csv").display());
    Ok(0)
}

fn load_intervention(path: Option<&Path>) -> Result<InterventionConfig> {
    match path {
        None => Ok(InterventionConfig::empty()),
        Some(p) => {
            let config = InterventionConfig::load(p)?;
            if config.is_empty() {
                Ok(config.with_provenance("baseline"))
            } else {
                Ok(config)
            }
        }
    }
}

/// Parses `"layer:head,layer:head"` head lists.
pub fn parse_heads(spec: &str) -> Result<Vec<crate::microformer::HeadAddress>> {
    spec.split(',')
        .map(|part| {
            let (l, h) = part
                .trim()
                .split_once(':')
                .ok_or_else(|| Error::ConfigParse(format!("bad head spec {part:?}")))?;
            Ok(crate::microformer::HeadAddress::new(
                l.trim()
                    .parse()
                    .map_err(|_| Error::ConfigParse(format!("bad layer in {part:?}")))?,
                h.trim()
                    .parse()
                    .map_err(|_| Error::ConfigParse(format!("bad head in {part:?}")))?,
            ))
        })
        .collect()
}

/// Builds the output path for a command, defaulting under `runs/<command>`.
pub fn resolve_out(base: &Path, command: &str, explicit: bool) -> PathBuf {
    if explicit {
        base.to_path_buf()
    } else {
        base.join(command)
    }
}
