//! Command-line front end.

use std::collections::{BTreeMap, BTreeSet};
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;
use singassess_core::audio::screen_volume;
use singassess_core::feedback::{aggregate_critiques, critique_segments, render_text};
use singassess_core::features::extract_take;
use singassess_core::htpr::{
    agreement_stats, aggregate_ratings, audit_forced_distribution, Agreement, AnnotationRecord,
    ForcedDistributionAudit, RatingAggregate, TierAssignment,
};
use singassess_core::rulesignal::{prescreen, prescreen_per_song, score_takes, RuleSignalReport};
use singassess_core::scorer::{infer_song, Dimension, DimensionScores, InferMode};
use singassess_core::{AudioClip, Config};

use crate::cache::save_features;
use crate::config::load_config;
use crate::error::{Error, IoContext, Result};
use crate::io::{read_json, read_jsonl, read_labelled, read_pairs, write_json, write_jsonl, LabelledClip};
use crate::manifest::RunManifest;
use crate::model::{load_registry, save_registry};
use crate::pipeline::{tiers_for, train_registry, window_all};
use crate::session::SessionStore;
use crate::wav::load_audio;

#[derive(Debug, Parser)]
#[command(name = "singassess", version, about = "Singing assessment: reference scoring, full-song rating, tiered ranking, feedback")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML config file; omitted keys take their defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Primary output path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

impl Common {
    fn out(&self) -> Result<&Path> {
        self.out.as_deref().ok_or_else(|| Error::Usage("--out is required".into()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Fullsong,
    Clip30,
}

impl From<ModeArg> for InferMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Fullsong => InferMode::Fullsong,
            ModeArg::Clip30 => InferMode::Clip30,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Rank takes by combined rule score and keep the top fraction.
    Prescreen {
        #[command(flatten)]
        common: Common,
        /// CSV with columns user_path, ref_path.
        #[arg(long, conflicts_with = "reports")]
        pairs: Option<PathBuf>,
        /// JSON-Lines reports from `rulescore`.
        #[arg(long)]
        reports: Option<PathBuf>,
        #[arg(long, default_value_t = 0.1)]
        keep: f64,
        /// Apply the fraction within each reference song.
        #[arg(long)]
        per_song: bool,
    },
    /// Reference-based pitch, rhythm, and timbre reports as JSON Lines.
    Rulescore {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        pairs: PathBuf,
    },
    /// Extract and cache pitch, onsets, and log-mel features, one file per input.
    Features {
        #[command(flatten)]
        common: Common,
        /// Write JSON instead of the binary container.
        #[arg(long)]
        json: bool,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Train per-dimension heads and write a model registry directory.
    Train {
        #[command(flatten)]
        common: Common,
        /// CSV with columns clip_path, breath, timbre, emotion, technique.
        #[arg(long)]
        data: PathBuf,
        /// Labelled clips for model selection; defaults to the training set.
        #[arg(long)]
        validation: Option<PathBuf>,
    },
    /// Score clips with a trained registry; JSON Lines, one line per clip.
    Infer {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long, value_enum, default_value_t = ModeArg::Fullsong)]
        mode: ModeArg,
        #[arg(required = true)]
        inputs: Vec<PathBuf>,
    },
    /// Split scored clips into High, Medium, and Low tiers by expected score.
    Tier {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        scores: PathBuf,
        #[arg(long)]
        dimension: Dimension,
    },
    /// Tiered-ranking judging sessions.
    Htpr {
        #[command(subcommand)]
        action: HtprCommand,
    },
    /// Pairwise exact and within-one agreement plus per-clip rating means.
    Agreement {
        #[command(flatten)]
        common: Common,
        /// JSON-Lines annotation records.
        #[arg(long)]
        records: PathBuf,
        #[arg(long)]
        dimension: Option<Dimension>,
    },
    /// Forced-distribution compliance per annotator.
    Audit {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        records: PathBuf,
    },
    /// Segment critiques, the merged diagnostic document, and an optional summary.
    Feedback {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        input: PathBuf,
        /// Skip the external summarizer even when one is configured.
        #[arg(long)]
        no_summary: bool,
    },
}

#[derive(Debug, Subcommand)]
pub enum HtprCommand {
    /// Create (or reopen) a session from a tier file; `--out` receives its id.
    Create {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        tiers: PathBuf,
        #[arg(long)]
        store: PathBuf,
        /// Defaults to `htpr.n_triplets`.
        #[arg(long)]
        n: Option<usize>,
    },
    /// Serve the judging API; `--out` receives the bound address.
    Serve {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        store: PathBuf,
        /// Directory holding `<clip_id>.wav` for every tiered clip.
        #[arg(long)]
        audio_dir: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: SocketAddr,
    },
    /// Score a stored session by replaying its log.
    Score {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        store: PathBuf,
        #[arg(long)]
        session: String,
    },
}

/// Where a command's manifest goes: inside an output directory, or beside an output file.
pub fn manifest_path(out: &Path) -> PathBuf {
    if out.is_dir() {
        out.join("run.manifest.json")
    } else {
        let mut s = out.as_os_str().to_owned();
        s.push(".manifest.json");
        PathBuf::from(s)
    }
}

fn finish(mut m: RunManifest, cfg: &Config, out: &Path) -> Result<()> {
    m.output("primary", out);
    m.write(&manifest_path(out), cfg)
}

fn load_all(paths: &[PathBuf], cfg: &Config) -> Result<Vec<AudioClip>> {
    paths.par_iter().map(|p| load_audio(p, cfg.audio.target_rate_hz)).collect()
}

fn check_unique_ids(clips: &[AudioClip]) -> Result<()> {
    let mut seen = BTreeSet::new();
    for c in clips {
        if !seen.insert(c.id()) {
            return Err(Error::Usage(format!("two inputs share the clip id `{}`", c.id())));
        }
    }
    Ok(())
}

/// Reports for every pair whose user take passes the volume screen, in input
/// order, plus the ids screened out.
pub fn score_pairs(pairs: &[crate::io::TakePair], cfg: &Config) -> Result<(Vec<RuleSignalReport>, Vec<String>)> {
    let refs: BTreeSet<&PathBuf> = pairs.iter().map(|p| &p.ref_path).collect();
    let refs: Vec<&PathBuf> = refs.into_iter().collect();
    let ref_features: BTreeMap<&PathBuf, singassess_core::features::TakeFeatures> = refs
        .par_iter()
        .map(|&p| Ok((p, extract_take(&load_audio(p, cfg.audio.target_rate_hz)?, &cfg.features)?)))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .collect();
    let scored: Vec<Option<RuleSignalReport>> = pairs
        .par_iter()
        .map(|pair| {
            let user = load_audio(&pair.user_path, cfg.audio.target_rate_hz)?;
            if !screen_volume(&user, cfg.audio.silence_floor_db).passed {
                return Ok(None);
            }
            let uf = extract_take(&user, &cfg.features)?;
            Ok(Some(score_takes(&uf, &ref_features[&pair.ref_path], &cfg.rulesignal)?))
        })
        .collect::<Result<_>>()?;
    let mut reports = Vec::new();
    let mut screened = Vec::new();
    for (pair, r) in pairs.iter().zip(scored) {
        match r {
            Some(r) => reports.push(r),
            None => screened.push(crate::wav::clip_id_for(&pair.user_path)),
        }
    }
    Ok((reports, screened))
}

#[derive(Debug, Serialize)]
struct PrescreenOutput {
    total: usize,
    kept: Vec<String>,
    screened_out: Vec<String>,
}

#[derive(Debug, Serialize)]
struct PairAgreement {
    a: String,
    b: String,
    items: usize,
    #[serde(flatten)]
    agreement: Agreement,
}

#[derive(Debug, Serialize)]
struct AgreementOutput {
    pairs: Vec<PairAgreement>,
    pooled: Option<Agreement>,
    ratings: RatingAggregate,
}

fn validated_records(path: &Path) -> Result<Vec<AnnotationRecord>> {
    let records: Vec<AnnotationRecord> = read_jsonl(path)?;
    for r in &records {
        r.validate(false)?;
    }
    Ok(records)
}

/// Two annotators and their aligned ratings.
pub type RatedPair = (String, String, Vec<u8>, Vec<u8>);

/// Every annotator pair compared over the (clip, dimension) items both rated.
pub fn pairwise_agreement(records: &[AnnotationRecord], dimension: Option<Dimension>) -> Result<Vec<RatedPair>> {
    let mut by: BTreeMap<&str, BTreeMap<(&str, Dimension), u8>> = BTreeMap::new();
    for r in records {
        for (&d, &s) in &r.scores {
            if dimension.is_none_or(|want| want == d) {
                by.entry(&r.annotator_id).or_default().insert((&r.clip_id, d), s);
            }
        }
    }
    let names: Vec<&str> = by.keys().copied().collect();
    let mut out = Vec::new();
    for (i, &a) in names.iter().enumerate() {
        for &b in &names[i + 1..] {
            let (mut va, mut vb) = (Vec::new(), Vec::new());
            for (k, &s) in &by[a] {
                if let Some(&t) = by[b].get(k) {
                    va.push(s);
                    vb.push(t);
                }
            }
            if !va.is_empty() {
                out.push((a.to_string(), b.to_string(), va, vb));
            }
        }
    }
    Ok(out)
}

fn run_htpr(action: HtprCommand) -> Result<()> {
    match action {
        HtprCommand::Create { common, tiers, store, n } => {
            let cfg = load_config(common.config.as_deref())?;
            let out = common.out()?;
            let t: TierAssignment = read_json(&tiers)?;
            let store = SessionStore::new(store);
            let id = store.create(t, n.unwrap_or(cfg.htpr.n_triplets), common.seed)?;
            let session = store.load(&id)?;
            write_json(out, &crate::server::CreateResponse { session_id: id, total: session.triplets.len() })?;
            let mut m = RunManifest::new("htpr-create", common.seed, &cfg);
            m.output("tiers", tiers);
            m.output("session", store.root().join("sessions").join(&session.id));
            finish(m, &cfg, out)
        }
        HtprCommand::Serve { common, store, audio_dir, addr } => {
            let cfg = load_config(common.config.as_deref())?;
            std::fs::create_dir_all(&store).at(&store)?;
            crate::server::serve(&store, &audio_dir, addr, cfg.htpr.n_triplets, common.out.as_deref())
        }
        HtprCommand::Score { common, store, session } => {
            let cfg = load_config(common.config.as_deref())?;
            let out = common.out()?;
            let s = SessionStore::new(store).load(&session)?;
            let body = crate::server::score_body(&s);
            write_json(out, &body)?;
            finish(RunManifest::new("htpr-score", common.seed, &cfg), &cfg, out)
        }
    }
}

pub fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Htpr { action } => run_htpr(action),
        Command::Prescreen { common, pairs, reports, keep, per_song } => {
            let cfg = load_config(common.config.as_deref())?;
            let out = common.out()?;
            let (reports, screened_out) = match (pairs, reports) {
                (Some(p), None) => score_pairs(&read_pairs(&p)?, &cfg)?,
                (None, Some(r)) => (read_jsonl(&r)?, Vec::new()),
                _ => return Err(Error::Usage("give exactly one of --pairs and --reports".into())),
            };
            let kept = if per_song { prescreen_per_song(&reports, keep)? } else { prescreen(&reports, keep)? };
            write_json(out, &PrescreenOutput { total: reports.len() + screened_out.len(), kept, screened_out })?;
            finish(RunManifest::new("prescreen", common.seed, &cfg), &cfg, out)
        }
        Command::Rulescore { common, pairs } => {
            let cfg = load_config(common.config.as_deref())?;
            let out = common.out()?;
            let (reports, screened) = score_pairs(&read_pairs(&pairs)?, &cfg)?;
            for id in &screened {
                eprintln!("{id}: below the volume floor, not scored");
            }
            write_jsonl(out, &reports)?;
            finish(RunManifest::new("rulescore", common.seed, &cfg), &cfg, out)
        }
        Command::Features { common, json, inputs } => {
            let cfg = load_config(common.config.as_deref())?;
            let out = common.out()?;
            std::fs::create_dir_all(out).at(out)?;
            let clips = load_all(&inputs, &cfg)?;
            check_unique_ids(&clips)?;
            let ext = if json { "json" } else { "safc" };
            let written: Vec<PathBuf> = clips
                .par_iter()
                .map(|c| {
                    let path = out.join(format!("{}.{ext}", c.id()));
                    save_features(&path, &extract_take(c, &cfg.features)?)?;
                    Ok(path)
                })
                .collect::<Result<_>>()?;
            let mut m = RunManifest::new("features", common.seed, &cfg);
            for p in written {
                m.output(&format!("features:{}", crate::wav::clip_id_for(&p)), p);
            }
            finish(m, &cfg, out)
        }
        Command::Train { common, data, validation } => {
            let cfg = load_config(common.config.as_deref())?;
            let out = common.out()?;
            let load = |path: &Path| -> Result<Vec<crate::pipeline::WindowedClip>> {
                let rows = read_labelled(path)?;
                let clips: Vec<(AudioClip, BTreeMap<Dimension, u8>)> = rows
                    .par_iter()
                    .map(|r: &LabelledClip| {
                        let labels = Dimension::ALL.into_iter().map(|d| (d, r.label(d))).collect();
                        Ok((load_audio(&r.clip_path, cfg.audio.target_rate_hz)?, labels))
                    })
                    .collect::<Result<_>>()?;
                check_unique_ids(&clips.iter().map(|c| c.0.clone()).collect::<Vec<_>>())?;
                window_all(&clips, &cfg.features)
            };
            let train = load(&data)?;
            let val = match &validation {
                Some(v) => load(v)?,
                None => train.clone(),
            };
            let registry = train_registry(&train, &val, &cfg, common.seed)?;
            std::fs::create_dir_all(out).at(out)?;
            save_registry(out, &registry)?;
            let mut m = RunManifest::new("train", common.seed, &cfg);
            m.output("data", data);
            if let Some(v) = validation {
                m.output("validation", v);
            }
            m.output("registry", out.join(crate::model::REGISTRY_INDEX));
            finish(m, &cfg, out)
        }
        Command::Infer { common, model, mode, inputs } => {
            let cfg = load_config(common.config.as_deref())?;
            let out = common.out()?;
            let registry = load_registry(&model)?;
            let clips = load_all(&inputs, &cfg)?;
            check_unique_ids(&clips)?;
            let scores: Vec<DimensionScores> =
                clips.par_iter().map(|c| Ok(infer_song(c, &registry, mode.into())?)).collect::<Result<_>>()?;
            write_jsonl(out, &scores)?;
            let mut m = RunManifest::new("infer", common.seed, &cfg);
            m.output("model", model.join(crate::model::REGISTRY_INDEX));
            finish(m, &cfg, out)
        }
        Command::Tier { common, scores, dimension } => {
            let cfg = load_config(common.config.as_deref())?;
            let out = common.out()?;
            let tiers = tiers_for(&read_jsonl::<DimensionScores>(&scores)?, dimension)?;
            write_json(out, &tiers)?;
            let mut m = RunManifest::new("tier", common.seed, &cfg);
            m.output("scores", scores);
            finish(m, &cfg, out)
        }
        Command::Agreement { common, records, dimension } => {
            let cfg = load_config(common.config.as_deref())?;
            let out = common.out()?;
            let recs = validated_records(&records)?;
            let pairs = pairwise_agreement(&recs, dimension)?;
            let (mut all_a, mut all_b) = (Vec::new(), Vec::new());
            let mut rows = Vec::new();
            for (a, b, va, vb) in pairs {
                rows.push(PairAgreement { a, b, items: va.len(), agreement: agreement_stats(&va, &vb)? });
                all_a.extend(va);
                all_b.extend(vb);
            }
            let pooled = if all_a.is_empty() { None } else { Some(agreement_stats(&all_a, &all_b)?) };
            write_json(out, &AgreementOutput { pairs: rows, pooled, ratings: aggregate_ratings(&recs, dimension)? })?;
            finish(RunManifest::new("agreement", common.seed, &cfg), &cfg, out)
        }
        Command::Audit { common, records } => {
            let cfg = load_config(common.config.as_deref())?;
            let out = common.out()?;
            let recs = validated_records(&records)?;
            let mut by: BTreeMap<&str, Vec<u8>> = BTreeMap::new();
            for r in &recs {
                by.entry(&r.annotator_id).or_default().extend(r.scores.values());
            }
            let audits = by
                .into_iter()
                .map(|(a, s)| Ok((a.to_string(), audit_forced_distribution(&s)?)))
                .collect::<Result<BTreeMap<String, ForcedDistributionAudit>>>()?;
            write_json(out, &audits)?;
            finish(RunManifest::new("audit", common.seed, &cfg), &cfg, out)
        }
        Command::Feedback { common, input, no_summary } => {
            let cfg = load_config(common.config.as_deref())?;
            let out = common.out()?;
            let clip = load_audio(&input, cfg.audio.target_rate_hz)?;
            let mut doc = aggregate_critiques(critique_segments(&clip, &cfg.features, &cfg.feedback)?)?;
            if !no_summary && !cfg.summarizer.url.is_empty() {
                let outcome = crate::summarizer::summarize(&doc, &cfg.summarizer)?;
                if let crate::summarizer::SummaryOutcome::Degraded { reason, .. } = &outcome {
                    eprintln!("summarizer unavailable ({reason}); using the plain rendering");
                }
                crate::summarizer::apply(&mut doc, outcome);
            }
            write_json(out, &doc)?;
            let text_path = out.with_extension("txt");
            let mut text = render_text(&doc);
            if let Some(s) = doc.summary.as_ref().filter(|_| !doc.degraded) {
                text.push_str("\nSummary\n");
                text.push_str(s);
                text.push('\n');
            }
            std::fs::write(&text_path, text).at(&text_path)?;
            let mut m = RunManifest::new("feedback", common.seed, &cfg);
            m.output("text", text_path);
            finish(m, &cfg, out)
        }
    }
}
