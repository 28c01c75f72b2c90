use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use anyhow::{anyhow, Context as _};
use detkit_core::feedback::{self, DEFAULT_MAX_ITEMS};
use detkit_core::ingest::{self, AugmentOp, ClassTable, Dataset, PredictionRecord};
use detkit_core::losses::{self, LossWeights};
use detkit_core::metrics::{self, MetricsReport, DEFAULT_IOU_THRESHOLD};
use detkit_core::postprocess::{postprocess_indices, Detection};
use detkit_core::sweep::{self, PlantedOptimum, SweepPoint};
use detkit_core::Error;
use serde::Serialize;

use crate::config::{self, read_input, write_output, Format, RunConfig, SweepConfig, DEFAULT_STRIDE};
use crate::external;
use crate::{AugmentArgs, EvaluateArgs, Failure, NmsArgs, ReportArgs, SpeakArgs, SweepArgs};

pub struct Context {
    pub config: RunConfig,
    pub out_dir: PathBuf,
}

impl Context {
    fn path(&self, flag: Option<PathBuf>, from_config: &Option<PathBuf>, what: &str) -> Result<PathBuf, Failure> {
        flag.or_else(|| from_config.clone())
            .ok_or_else(|| Failure::Input(anyhow!("no {what} file given (use --{what} or the config file)")))
    }
}

fn with_path<T>(path: &Path, r: detkit_core::Result<T>) -> Result<T, Failure> {
    r.map_err(|e| Failure::Input(anyhow::Error::new(e).context(path.display().to_string())))
}

fn load_dataset(path: &Path) -> Result<Dataset, Failure> {
    let bytes = read_input(path)?;
    with_path(path, ingest::parse_coco(&bytes))
}

/// A results file holding only whitespace counts as an empty array.
fn load_records(path: &Path, classes: Option<&ClassTable>) -> Result<Vec<PredictionRecord>, Failure> {
    let bytes = read_input(path)?;
    if bytes.iter().all(u8::is_ascii_whitespace) {
        return Ok(Vec::new());
    }
    with_path(path, ingest::parse_prediction_records(&bytes, classes))
}

fn pretty<T: Serialize>(v: &T) -> Result<String, Failure> {
    let mut s = serde_json::to_string_pretty(v).map_err(|e| Failure::Internal(e.into()))?;
    s.push('\n');
    Ok(s)
}

fn ids(set: &BTreeSet<u32>) -> String {
    let v: Vec<String> = set.iter().map(u32::to_string).collect();
    format!("{{{}}}", v.join(", "))
}

pub fn nms(ctx: &Context, a: NmsArgs) -> Result<(), Failure> {
    let cfg = &ctx.config;
    let pred_path = ctx.path(a.predictions, &cfg.predictions, "predictions")?;
    let pp = a.postprocess.resolve(cfg)?;
    let classes = match a.annotations.or_else(|| cfg.annotations.clone()) {
        Some(p) => Some(load_dataset(&p)?.classes),
        None => None,
    };
    let dets: Vec<Detection> = load_records(&pred_path, classes.as_ref())?
        .into_iter()
        .map(|r| r.detection)
        .collect();

    let kept: Vec<Detection> = postprocess_indices(&dets, &pp)?.into_iter().map(|i| dets[i]).collect();
    let out = a.output.unwrap_or_else(|| ctx.out_dir.join("predictions.nms.json"));
    let mut json = ingest::to_results_json(&kept).map_err(|e| Failure::Internal(e.into()))?;
    json.push('\n');
    write_output(&out, &json)?;
    println!("kept {} suppressed {}", kept.len(), dets.len() - kept.len());
    Ok(())
}

pub fn evaluate(ctx: &Context, a: EvaluateArgs) -> Result<(), Failure> {
    let cfg = &ctx.config;
    let ann_path = ctx.path(a.annotations, &cfg.annotations, "annotations")?;
    let pred_path = ctx.path(a.predictions, &cfg.predictions, "predictions")?;
    let pp = a.postprocess.resolve(cfg)?;
    let iou_threshold = a.iou_threshold.or(cfg.iou_threshold).unwrap_or(DEFAULT_IOU_THRESHOLD);
    config::check_unit_interval("iou threshold", iou_threshold)?;
    let base_weights = cfg.loss_weights.unwrap_or_default();
    let weights = LossWeights::new(
        a.lambda_iou.unwrap_or(base_weights.lambda_iou),
        a.lambda_dfl.unwrap_or(base_weights.lambda_dfl),
    )?;
    let stride = a.stride.or(cfg.stride).unwrap_or(DEFAULT_STRIDE);
    config::check_stride(stride)?;

    let dataset = load_dataset(&ann_path)?;
    let records = load_records(&pred_path, None)?;

    let predicted: BTreeSet<u32> = records.iter().map(|r| r.detection.class_id).collect();
    let known: BTreeSet<u32> = dataset.classes.ids().collect();
    let extra: BTreeSet<u32> = predicted.difference(&known).copied().collect();
    if !extra.is_empty() {
        let missing: BTreeSet<u32> = known.difference(&predicted).copied().collect();
        return Err(Failure::Input(anyhow!(
            "class tables differ: only in {}: {}; only in {}: {}",
            pred_path.display(),
            ids(&extra),
            ann_path.display(),
            ids(&missing)
        )));
    }

    let dets: Vec<Detection> = records.iter().map(|r| r.detection).collect();
    let keep = postprocess_indices(&dets, &pp)?;
    let kept: Vec<Detection> = keep.iter().map(|&i| dets[i]).collect();
    let evaluation = metrics::evaluate_dataset(&kept, &dataset, iou_threshold)?;
    let report = &evaluation.report;

    write_output(&ctx.out_dir.join("report.json"), &pretty(report)?)?;
    let csv = report.to_csv().map_err(|e| Failure::Internal(e.into()))?;
    write_output(&ctx.out_dir.join("report.csv"), &csv)?;

    if a.losses {
        let dists: Vec<_> = keep.iter().map(|&i| records[i].distribution.clone()).collect();
        let l = losses::matched_pair_losses(
            &kept,
            &dists,
            &dataset.annotations,
            &evaluation.matched_gt,
            &weights,
            stride,
        )?;
        write_output(&ctx.out_dir.join("losses.json"), &pretty(&l)?)?;
    }

    println!(
        "predictions {} kept {} precision {:.6} recall {:.6} map50 {:.6} f1 {:.6}",
        dets.len(),
        kept.len(),
        report.precision,
        report.recall,
        report.map50,
        report.f1
    );
    Ok(())
}

fn parse_point(s: &str) -> Result<SweepPoint, Failure> {
    let parts: Vec<&str> = s.split(',').map(str::trim).collect();
    let bad = || Failure::Input(anyhow!("--planted expects LR,BATCH,H,W, got {s:?}"));
    if parts.len() != 4 {
        return Err(bad());
    }
    Ok(SweepPoint {
        learning_rate: parts[0].parse().map_err(|_| bad())?,
        batch_size: parts[1].parse().map_err(|_| bad())?,
        input_size: (parts[2].parse().map_err(|_| bad())?, parts[3].parse().map_err(|_| bad())?),
    })
}

#[derive(Serialize)]
struct BestPoint {
    best_score: f64,
    best_point: SweepPoint,
    trials: usize,
    failed: usize,
}

pub fn sweep(ctx: &Context, a: SweepArgs) -> Result<(), Failure> {
    let scfg = match &a.grid {
        Some(path) => SweepConfig::load(path)?,
        None => ctx.config.sweep.clone().unwrap_or_default(),
    };
    let grid = scfg.grid()?;
    let workers = a.workers.or(scfg.workers).unwrap_or(1);
    if workers == 0 {
        return Err(Failure::Input(anyhow!("--workers must be positive")));
    }

    let failures = Mutex::new(Vec::new());
    let outcome = if let Some(spec) = &a.planted {
        let planted = PlantedOptimum::new(grid.clone(), parse_point(spec)?)?;
        sweep::run_sweep(&grid, workers, |p| planted.score(p))
    } else {
        let template = a
            .command
            .or(scfg.command)
            .ok_or_else(|| Failure::Input(anyhow!("choose an evaluator with --command or --planted")))?;
        sweep::run_sweep(&grid, workers, |p| {
            let line = external::fill(&template, &[
                ("lr", p.learning_rate.to_string()),
                ("batch", p.batch_size.to_string()),
                ("h", p.input_size.0.to_string()),
                ("w", p.input_size.1.to_string()),
            ]);
            let r = external::run_shell(&line, None).and_then(|out| external::parse_score(&out));
            if let Err(reason) = &r {
                failures.lock().expect("failure log poisoned").push(format!("{line}: {reason}"));
            }
            r
        })
    };

    let result = match outcome {
        Ok(r) => r,
        Err(e @ Error::AllTrialsFailed(_)) => {
            let mut log = failures.into_inner().expect("failure log poisoned");
            log.sort();
            let err = match log.first() {
                Some(first) => anyhow!(e).context(format!("first failure: {first}")),
                None => anyhow!(e),
            };
            return Err(Failure::Internal(err));
        }
        Err(e) => return Err(e.into()),
    };

    let csv = result.trials_csv().map_err(|e| Failure::Internal(e.into()))?;
    write_output(&ctx.out_dir.join("trials.csv"), &csv)?;
    let best = BestPoint {
        best_score: result.best_score,
        best_point: result.best_point,
        trials: result.trials.len(),
        failed: result.failures().count(),
    };
    write_output(&ctx.out_dir.join("best.json"), &pretty(&best)?)?;

    let p = result.best_point;
    println!(
        "best lr {} batch {} input {}x{} score {} ({} trials, {} failed)",
        p.learning_rate, p.batch_size, p.input_size.0, p.input_size.1, best.best_score, best.trials, best.failed
    );
    Ok(())
}

pub fn speak(ctx: &Context, a: SpeakArgs) -> Result<(), Failure> {
    let cfg = &ctx.config;
    let pred_path = ctx.path(a.predictions, &cfg.predictions, "predictions")?;
    let ann_path = ctx.path(a.annotations, &cfg.annotations, "annotations")?;
    let pp = a.postprocess.resolve(cfg)?;
    let max_items = a.max_items.or(cfg.max_items).unwrap_or(DEFAULT_MAX_ITEMS);
    if max_items == 0 {
        return Err(Failure::Input(anyhow!("--max-items must be positive")));
    }

    let classes = load_dataset(&ann_path)?.classes;
    let mut dets: Vec<Detection> = load_records(&pred_path, Some(&classes))?
        .into_iter()
        .map(|r| r.detection)
        .collect();
    let images: BTreeSet<u64> = dets.iter().map(|d| d.image_id).collect();
    match a.image_id {
        Some(id) => dets.retain(|d| d.image_id == id),
        None if images.len() > 1 => {
            let list: Vec<String> = images.iter().map(u64::to_string).collect();
            return Err(Failure::Input(anyhow!(
                "predictions cover several images ({}); choose one with --image-id",
                list.join(", ")
            )));
        }
        None => {}
    }

    let kept: Vec<Detection> = postprocess_indices(&dets, &pp)?.into_iter().map(|i| dets[i]).collect();
    let utterances = feedback::utterances(&kept, &classes, max_items)?;
    for u in &utterances {
        println!("{}", u.to_line());
    }

    if let Some(template) = &a.tts_cmd {
        if !utterances.is_empty() {
            std::fs::create_dir_all(&ctx.out_dir)
                .with_context(|| format!("cannot create {}", ctx.out_dir.display()))
                .map_err(Failure::Internal)?;
        }
        for u in &utterances {
            let line = external::fill(template, &[
                ("text", external::shell_quote(&u.text)),
                ("file", external::shell_quote(&u.suggested_filename)),
            ]);
            external::run_shell(&line, Some(&ctx.out_dir))
                .map_err(|reason| Failure::Internal(anyhow!("tts command for utterance {}: {reason}", u.index)))?;
        }
    }
    Ok(())
}

pub fn report(ctx: &Context, a: ReportArgs) -> Result<(), Failure> {
    let bytes = read_input(&a.input)?;
    let report: MetricsReport = serde_json::from_slice(&bytes)
        .with_context(|| format!("{}: not a metrics report", a.input.display()))
        .map_err(Failure::Input)?;
    let text = match a.format.or(ctx.config.format).unwrap_or(Format::Markdown) {
        Format::Json => pretty(&report)?,
        Format::Csv => report.to_csv().map_err(|e| Failure::Internal(e.into()))?,
        Format::Markdown => report.to_markdown(),
    };
    match a.output {
        Some(path) => write_output(&path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

pub fn augment(ctx: &Context, a: AugmentArgs) -> Result<(), Failure> {
    let ann_path = ctx.path(a.annotations, &ctx.config.annotations, "annotations")?;
    let dataset = load_dataset(&ann_path)?;
    let ops = if a.ops.is_empty() { AugmentOp::default_policy() } else { a.ops };
    let out = ingest::augment(&dataset, &ops, a.seed)?;
    let mut json = ingest::to_coco_json(&out.dataset).map_err(|e| Failure::Internal(e.into()))?;
    json.push('\n');
    let path = a.output.unwrap_or_else(|| ctx.out_dir.join("annotations.augmented.json"));
    write_output(&path, &json)?;
    println!(
        "images {} annotations {} dropped {}",
        out.dataset.images.len(),
        out.dataset.annotations.len(),
        out.dropped
    );
    Ok(())
}
