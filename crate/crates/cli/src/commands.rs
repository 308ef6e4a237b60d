use std::collections::BTreeSet;

use clap::ArgMatches;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use omnipipe::curation;
use omnipipe::evalkit::{self, Metric, ReportFormat, ScoreTable, Smoothing};
use omnipipe::modality::{self, FrameConfig, FramePlan, TilingConfig, VadConfig};
use omnipipe::packing::{self, PackPolicy};
use omnipipe::projectors::{self, ProjectorKind};
use omnipipe::stream::{self, MediaEventConfig, StreamEvent};

use crate::args::*;
use crate::config::{from_command_line, resolve, ConfigFile};
use crate::io::{contract, emit, read_jsonl, read_text, require, to_json, to_jsonl};
use crate::{CliError, CliResult};

pub fn dispatch(cli: Cli, matches: &ArgMatches) -> CliResult<()> {
    let (name, sub) = matches.subcommand().expect("subcommand is required");
    let cfg = match &cli.config {
        Some(p) => ConfigFile::load(p, &Command::NAMES)?,
        None => ConfigFile::empty(),
    };
    let seed = if from_command_line(matches, "seed") || from_command_line(sub, "seed") {
        cli.seed
    } else {
        cfg.seed()?.unwrap_or(cli.seed)
    };
    let section = cfg.section(name);

    macro_rules! run {
        ($args:expr, $f:ident) => {{
            let a = resolve($args, section, sub, name)?;
            if cli.dump_config {
                to_json(&json!({ "seed": seed, name: a }))?
            } else {
                match $f(&a, seed) {
                    Ok(body) => body,
                    Err(Partial(body, err)) => {
                        emit(&cli.output, &body)?;
                        return Err(err);
                    }
                }
            }
        }};
    }

    let body = match &cli.command {
        Command::Tile(a) => run!(a, tile),
        Command::Frames(a) => run!(a, frames),
        Command::Melspec(a) => run!(a, melspec),
        Command::Gradcheck(a) => run!(a, gradcheck),
        Command::AblateRates(a) => run!(a, ablate),
        Command::Pack(a) => run!(a, pack),
        Command::StreamSim(a) => run!(a, stream_sim),
        Command::FilterLoss(a) => run!(a, filter_loss),
        Command::SplitCrossmodal(a) => run!(a, split_crossmodal),
        Command::Mix(a) => run!(a, mix),
        Command::Metrics(a) => run!(a, metrics),
        Command::NormalizeScores(a) => run!(a, normalize_scores),
    };
    emit(&cli.output, &body)
}

/// A failure that still carries output worth writing.
struct Partial(String, CliError);

impl From<CliError> for Partial {
    fn from(e: CliError) -> Self {
        Partial(String::new(), e)
    }
}

impl From<omnipipe::Error> for Partial {
    fn from(e: omnipipe::Error) -> Self {
        Partial(String::new(), CliError::Run(e))
    }
}

type Out = Result<String, Partial>;

fn parse_choice<T: for<'de> Deserialize<'de>>(flag: &str, value: &str) -> CliResult<T> {
    serde_json::from_value(Value::String(value.to_string()))
        .map_err(|_| CliError::Usage(format!("--{flag}: unsupported value {value:?}")))
}

fn tile(a: &TileArgs, _seed: u64) -> Out {
    let cfg = TilingConfig {
        tile_px: a.tile_px,
        max_tiles: a.max_tiles,
    };
    Ok(to_json(&modality::plan_tiles_with(&cfg, a.width, a.height)?)?)
}

fn frames(a: &FramesArgs, _seed: u64) -> Out {
    let cfg = FrameConfig {
        fps: a.fps,
        max_frames: a.max_frames,
        ..FrameConfig::default()
    };
    let plan = modality::plan_video_with(&cfg, a.duration_s, a.total_frames, a.width, a.height)?;
    Ok(to_json(&json!({
        "frames": plan.frame_indices,
        "per_frame_tokens": plan.per_frame_tokens,
        "total_tokens": plan.total_tokens(),
    }))?)
}

fn melspec(a: &MelspecArgs, _seed: u64) -> Out {
    let wav = modality::read_wav(require(&a.input, "input")?)?;
    let mel = modality::melspec(&wav)?;
    let segments = modality::vad(
        &mel,
        &VadConfig {
            threshold_db: a.threshold_db,
            hangover_frames: a.hangover_frames,
        },
    );
    let mut out = json!({ "frames": mel.frames, "bins": mel.bins, "vad_segments": segments });
    if a.include_data {
        out["data"] = serde_json::to_value(&mel.data).map_err(omnipipe::Error::from)?;
    }
    Ok(to_json(&out)?)
}

#[derive(Serialize)]
struct GradRow {
    projector: &'static str,
    seed: u64,
    max_relative_error: f64,
    checked: usize,
    passed: bool,
}

fn gradcheck(a: &GradcheckArgs, seed: u64) -> Out {
    let kinds: Vec<ProjectorKind> = if a.projector == "all" {
        ProjectorKind::ALL.to_vec()
    } else {
        vec![a
            .projector
            .parse()
            .map_err(|_| CliError::Usage(format!("--projector: unknown projector {:?}", a.projector)))?]
    };
    if a.seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()).into());
    }
    let mut rows = Vec::new();
    for kind in kinds {
        for s in seed..seed + a.seeds {
            let r = projectors::check_projector(kind, a.rate, a.len, s, a.eps, a.tol)?;
            rows.push(GradRow {
                projector: kind.name(),
                seed: s,
                max_relative_error: r.max_relative_error,
                checked: r.checked,
                passed: r.passed,
            });
        }
    }
    let passed = rows.iter().all(|r| r.passed);
    let body = to_json(&json!({ "passed": passed, "tol": a.tol, "eps": a.eps, "results": rows }))?;
    if passed {
        Ok(body)
    } else {
        Err(Partial(body, contract("gradient check failed")))
    }
}

fn ablate(a: &AblateArgs, seed: u64) -> Out {
    let rows = projectors::ablate_rates(&a.rates, a.in_channels, a.llm_dim, a.steps, a.lr, seed)?;
    match a.format.as_str() {
        "json" => Ok(to_json(&rows)?),
        "csv" => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in &rows {
                w.serialize(r).map_err(|e| contract(e.to_string()))?;
            }
            let bytes = w.into_inner().map_err(|e| contract(e.to_string()))?;
            Ok(String::from_utf8(bytes).map_err(|e| contract(e.to_string()))?)
        }
        other => Err(CliError::Run(omnipipe::Error::UnsupportedFormat(other.into())).into()),
    }
}

#[derive(Deserialize)]
struct ManifestEntry {
    id: Value,
    len: usize,
}

fn pack(a: &PackArgs, _seed: u64) -> Out {
    let entries: Vec<ManifestEntry> = read_jsonl(require(&a.manifest, "manifest")?)?;
    let policy: PackPolicy = parse_choice("policy", &a.policy)?;
    let lens: Vec<usize> = entries.iter().map(|e| e.len).collect();
    let batch = packing::pack(&lens, a.capacity, policy)?;
    let bins: Vec<Value> = batch
        .bins
        .iter()
        .map(|b| {
            let ids: Vec<&Value> = b.samples.iter().map(|&i| &entries[i].id).collect();
            json!({ "samples": ids, "cu_seqlens": b.cu_seqlens, "pad": b.pad_len })
        })
        .collect();
    Ok(to_json(
        &json!({ "capacity": batch.capacity, "bins": bins, "waste": batch.waste() }),
    )?)
}

fn stream_sim(a: &StreamArgs, _seed: u64) -> Out {
    let events: Vec<StreamEvent> = match (&a.events, &a.audio) {
        (Some(_), None) => read_jsonl(require(&a.events, "events")?)?,
        (None, Some(_)) => {
            projectors::check_rate(a.rate)?;
            let wav = modality::read_wav(require(&a.audio, "audio")?)?;
            let mel = modality::melspec(&wav)?;
            let plan = match a.video_duration_s {
                Some(d) => modality::plan_video(d, a.video_total_frames, a.video_width, a.video_height)?,
                None => FramePlan {
                    frame_indices: Vec::new(),
                    fps: 1.0,
                    max_frames: 48,
                    per_frame_tokens: 0,
                },
            };
            let cfg = MediaEventConfig {
                vad: VadConfig {
                    threshold_db: a.threshold_db,
                    hangover_frames: a.hangover_frames,
                },
                chunk_frames: a.chunk_frames,
                rate_n: a.rate,
                ..MediaEventConfig::default()
            };
            stream::events_from_media(&mel, &cfg, &plan)?
        }
        _ => return Err(CliError::Usage("exactly one of --events or --audio is required".into()).into()),
    };
    Ok(to_jsonl(&stream::run(&events)?)?)
}

#[derive(Deserialize)]
struct LossRow {
    id: String,
    loss: f64,
}

fn filter_loss(a: &FilterLossArgs, _seed: u64) -> Out {
    let path = require(&a.losses, "losses")?;
    let text = read_text(path)?;
    let mut losses = Vec::new();
    for (i, row) in csv::Reader::from_reader(text.as_bytes())
        .deserialize::<LossRow>()
        .enumerate()
    {
        let row = row.map_err(|e| contract(format!("{} row {}: {e}", path.display(), i + 1)))?;
        losses.push((row.id, row.loss));
    }
    Ok(to_json(&curation::gaussian_filter(&losses)?)?)
}

#[derive(Deserialize)]
struct TextRow {
    text: String,
}

fn split_crossmodal(a: &SplitArgs, seed: u64) -> Out {
    let rows: Vec<TextRow> = read_jsonl(require(&a.input, "input")?)?;
    let splits = rows
        .iter()
        .enumerate()
        .map(|(i, r)| curation::split_one_three(&r.text).map_err(|e| contract(format!("line {}: {e}", i + 1))))
        .collect::<CliResult<Vec<_>>>()?;
    let mut samples = curation::assign_timbres(splits, seed);
    if let Some(p) = &a.prompt {
        for s in &mut samples {
            s.prompt.clone_from(p);
        }
    }
    Ok(to_jsonl(&samples)?)
}

fn mix(a: &MixArgs, seed: u64) -> Out {
    let budget = a.budget.ok_or_else(|| CliError::Usage("--budget is required".into()))?;
    if a.dataset.is_empty() {
        return Err(CliError::Usage("at least one --dataset name=size is required".into()).into());
    }
    let sizes = a
        .dataset
        .iter()
        .map(|d| {
            let (n, s) = d
                .rsplit_once('=')
                .ok_or_else(|| CliError::Usage(format!("--dataset {d:?}: expected name=size")))?;
            let s = s
                .trim()
                .parse::<u64>()
                .map_err(|_| CliError::Usage(format!("--dataset {d:?}: size must be an integer")))?;
            Ok((n.trim().to_string(), s))
        })
        .collect::<CliResult<Vec<_>>>()?;
    Ok(to_json(&curation::mix_plan(&sizes, budget, seed)?)?)
}

#[derive(Deserialize)]
#[serde(untagged)]
enum RefField {
    One(String),
    Many(Vec<String>),
}

#[derive(Deserialize)]
struct MetricRow {
    #[serde(rename = "ref")]
    reference: RefField,
    hyp: String,
}

fn single_refs(rows: &[MetricRow]) -> CliResult<Vec<(String, String)>> {
    rows.iter()
        .enumerate()
        .map(|(i, r)| match &r.reference {
            RefField::One(s) => Ok((s.clone(), r.hyp.clone())),
            RefField::Many(_) => Err(contract(format!(
                "line {}: this metric takes a single reference",
                i + 1
            ))),
        })
        .collect()
}

fn metrics(a: &MetricsArgs, _seed: u64) -> Out {
    let rows: Vec<MetricRow> = read_jsonl(require(&a.input, "input")?)?;
    if rows.is_empty() {
        return Err(contract("metrics: input has no pairs").into());
    }
    let metric: Metric = parse_choice("metric", &a.metric)?;
    let smoothing: Smoothing = parse_choice("smoothing", &a.smoothing)?;
    let (corpus, items) = match metric {
        Metric::Wer | Metric::Cer => {
            let pairs = single_refs(&rows)?;
            let per: Vec<_> = if a.per_item {
                let f = if metric == Metric::Wer {
                    evalkit::wer
                } else {
                    evalkit::cer
                };
                pairs.iter().map(|(r, h)| f(r, h)).collect::<omnipipe::Result<_>>()?
            } else {
                Vec::new()
            };
            (evalkit::corpus_error_rate(metric, &pairs)?, per)
        }
        Metric::Bleu => {
            let items: Vec<(Vec<String>, String)> = rows
                .iter()
                .map(|r| {
                    let refs = match &r.reference {
                        RefField::One(s) => vec![s.clone()],
                        RefField::Many(v) => v.clone(),
                    };
                    (refs, r.hyp.clone())
                })
                .collect();
            let per: Vec<_> = if a.per_item {
                items
                    .iter()
                    .map(|(r, h)| evalkit::bleu(r, h, a.max_n, smoothing))
                    .collect::<omnipipe::Result<_>>()?
            } else {
                Vec::new()
            };
            (evalkit::corpus_bleu(&items, a.max_n, smoothing)?, per)
        }
        Metric::Accuracy => {
            let pairs = single_refs(&rows)?;
            let (labels, preds): (Vec<String>, Vec<String>) = pairs.into_iter().unzip();
            (evalkit::accuracy(&preds, &labels)?, Vec::new())
        }
    };
    let mut out = json!({ "corpus": corpus });
    if a.per_item {
        out["items"] = serde_json::to_value(&items).map_err(omnipipe::Error::from)?;
    }
    Ok(to_json(&out)?)
}

#[derive(Deserialize)]
struct ScoreRow {
    model: String,
    benchmark: String,
    score: f64,
}

fn normalize_scores(a: &NormalizeArgs, _seed: u64) -> Out {
    let path = require(&a.input, "input")?;
    let format: ReportFormat = a.format.parse()?;
    let text = read_text(path)?;
    let mut table = ScoreTable::new();
    let mut seen = BTreeSet::new();
    for (i, row) in csv::Reader::from_reader(text.as_bytes())
        .deserialize::<ScoreRow>()
        .enumerate()
    {
        let row = row.map_err(|e| contract(format!("{} row {}: {e}", path.display(), i + 1)))?;
        if !seen.insert((row.model.clone(), row.benchmark.clone())) {
            return Err(contract(format!("duplicate score for {}/{}", row.model, row.benchmark)).into());
        }
        table.insert(row.model, row.benchmark, row.score);
    }
    Ok(evalkit::render_report(&table, format)?)
}
