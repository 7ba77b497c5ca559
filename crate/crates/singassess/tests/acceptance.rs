//! Acceptance criteria, one PASS/FAIL line each. Runs as its own harness so the
//! lines are printed whether or not the run succeeds.

mod common;

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::{Child, Command, Stdio};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use singassess::pipeline::{clip_windows, score_all, tiers_for, train_registry};
use singassess_core::features::{extract_take, PitchContour, TakeFeatures, HOP_S};
use singassess_core::htpr::{
    agreement_stats, aggregate_ratings, htpr_score, AnnotationRecord, HtprSession, Judgment, Tier,
};
use singassess_core::rulesignal::{dtw_align, frame_cost, prescreen, score_takes, RuleSignalReport};
use singassess_core::scorer::{
    grad_check, infer_song, score_windows, Dimension, EmbeddingSequence, HeadConfig, HeadKind, InferMode, TrainedHead,
};
use singassess_core::synth::{detune, random_melody, render, shift_onsets, unit_offsets, Voice};
use singassess_core::{AudioClip, Config};

type Outcome = Result<String, String>;

fn ensure(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

// ---------------------------------------------------------------- DTW oracle

/// Minimum over every monotone path, each summed from the start cell onward.
fn exhaustive_min(u: &[Option<f64>], r: &[Option<f64>]) -> f64 {
    fn walk(i: usize, j: usize, acc: f64, u: &[Option<f64>], r: &[Option<f64>], best: &mut f64) {
        let acc = acc + frame_cost(u[i], r[j]);
        if i + 1 == u.len() && j + 1 == r.len() {
            *best = best.min(acc);
            return;
        }
        if i + 1 < u.len() && j + 1 < r.len() {
            walk(i + 1, j + 1, acc, u, r, best);
        }
        if i + 1 < u.len() {
            walk(i + 1, j, acc, u, r, best);
        }
        if j + 1 < r.len() {
            walk(i, j + 1, acc, u, r, best);
        }
    }
    let mut best = f64::INFINITY;
    walk(0, 0, 0.0, u, r, &mut best);
    best
}

fn random_contour(rng: &mut ChaCha8Rng, len: usize) -> Vec<Option<f64>> {
    (0..len)
        .map(|_| {
            if rng.random_bool(0.2) {
                None
            } else {
                let c: f64 = rng.random_range(5000.0..7000.0) + rng.random_range(-700.0..700.0);
                Some((c * 1024.0).round() / 1024.0)
            }
        })
        .collect()
}

fn dtw_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(500);
    let mut mismatches = 0;
    for _ in 0..500 {
        let (nu, nr) = (rng.random_range(1..=8), rng.random_range(1..=8));
        let (u, r) = (random_contour(&mut rng, nu), random_contour(&mut rng, nr));
        let a = dtw_align(&PitchContour::from_frames(&u, HOP_S), &PitchContour::from_frames(&r, HOP_S), 8)
            .map_err(|e| e.to_string())?;
        if a.total_cost_cents != exhaustive_min(&u, &r) {
            mismatches += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(mismatches == 0 && secs < 10.0, format!("500 pairs, {mismatches} mismatches, {secs:.2} s (limit 10 s)"))
}

// ----------------------------------------------------- rule-based scoring

fn take_features(clip: &AudioClip, cfg: &Config) -> TakeFeatures {
    extract_take(clip, &cfg.features).expect("features")
}

fn transposition() -> Outcome {
    let cfg = Config::default();
    let melody = random_melody(21, 8.0);
    let reference = take_features(&render("ref", &melody, &Voice::clean(), 1), &cfg);
    let takes: Vec<TakeFeatures> = (0..20u64)
        .map(|i| {
            let sigma = 5.0 * i as f64;
            let cents: Vec<f64> = unit_offsets(900 + i, melody.len()).iter().map(|z| z * sigma).collect();
            take_features(&render(format!("take{i:02}"), &detune(&melody, &cents), &Voice::clean(), 100 + i), &cfg)
        })
        .collect();
    let reports = |k: i32| -> Vec<RuleSignalReport> {
        takes
            .iter()
            .map(|t| {
                let shifted = TakeFeatures { contour: t.contour.shifted(100.0 * f64::from(k)), ..t.clone() };
                score_takes(&shifted, &reference, &cfg.rulesignal).expect("report")
            })
            .collect()
    };
    let base = reports(0);
    let base_order = prescreen(&base, 1.0).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    let mut reordered = 0;
    for k in -12..=12 {
        let r = reports(k);
        for (a, b) in r.iter().zip(&base) {
            worst = worst.max((a.pitch_score - b.pitch_score).abs());
        }
        if prescreen(&r, 1.0).map_err(|e| e.to_string())? != base_order {
            reordered += 1;
        }
    }
    ensure(
        worst <= 1e-9 && reordered == 0,
        format!("20 takes x 25 shifts, max |pitch delta| = {worst:.3e} (limit 1e-9), {reordered} reordered rankings"),
    )
}

fn strictly_decreasing(v: &[f64]) -> bool {
    v.windows(2).all(|w| w[1] < w[0])
}

fn monotone_degradation() -> Outcome {
    let cfg = Config::default();
    let mut failures = Vec::new();
    let mut lines = Vec::new();
    for seed in 0..5u64 {
        let melody = random_melody(300 + seed, 10.0);
        let voice = Voice::clean();
        let reference = take_features(&render("ref", &melody, &voice, 7 + seed), &cfg);
        let z = unit_offsets(400 + seed, melody.len());
        let pitch: Vec<f64> = [0.0, 25.0, 50.0, 100.0, 200.0]
            .iter()
            .map(|&s| {
                let cents: Vec<f64> = z.iter().map(|v| v * s).collect();
                let user = take_features(&render("user", &detune(&melody, &cents), &voice, 7 + seed), &cfg);
                score_takes(&user, &reference, &cfg.rulesignal).expect("report").pitch_score
            })
            .collect();
        let rhythm: Vec<f64> = [0.0, 0.030, 0.080, 0.150]
            .iter()
            .map(|&s| {
                let offsets: Vec<f64> = z.iter().map(|v| v * s).collect();
                let user = take_features(&render("user", &shift_onsets(&melody, &offsets), &voice, 7 + seed), &cfg);
                score_takes(&user, &reference, &cfg.rulesignal).expect("report").rhythm_score
            })
            .collect();
        if !strictly_decreasing(&pitch) {
            failures.push(format!("seed {seed} pitch {pitch:.1?}"));
        }
        if !strictly_decreasing(&rhythm) {
            failures.push(format!("seed {seed} rhythm {rhythm:.1?}"));
        }
        lines.push(format!("seed {seed}: pitch {pitch:.1?} rhythm {rhythm:.1?}"));
    }
    if failures.is_empty() {
        Ok(format!("5 seeds strictly decreasing; {}", lines[0]))
    } else {
        Err(failures.join("; "))
    }
}

fn prescreen_count() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10_000);
    let reports: Vec<RuleSignalReport> = (0..10_000)
        .map(|i| {
            let combined = (rng.random_range(0.0..100.0f64) * 4.0).round() / 4.0;
            RuleSignalReport {
                clip_id: format!("c{i:05}"),
                reference_id: "song".into(),
                pitch_score: combined,
                rhythm_score: combined,
                timbre_score: combined,
                combined,
                transposition_offset_cents: 0.0,
                pitch_annotations: Vec::new(),
                rhythm_annotations: Vec::new(),
                timbre_badge: String::new(),
            }
        })
        .collect();
    let kept = prescreen(&reports, 0.10).map_err(|e| e.to_string())?;
    let mut oracle: Vec<&RuleSignalReport> = reports.iter().collect();
    oracle.sort_by(|a, b| b.combined.partial_cmp(&a.combined).unwrap().then(a.clip_id.cmp(&b.clip_id)));
    let expected: Vec<String> = oracle.iter().take(1000).map(|r| r.clip_id.clone()).collect();
    ensure(
        kept.len() == 1000 && kept == expected,
        format!("10000 reports at 0.10 -> {} kept, top-1000 oracle match: {}", kept.len(), kept == expected),
    )
}

// ---------------------------------------------------------------- scorer

fn gradient_checks() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let seq = EmbeddingSequence::new("g", (0..6).map(|_| (0..16).map(|_| rng.random_range(-1.0..1.0)).collect()).collect())
        .map_err(|e| e.to_string())?;
    let mut parts = Vec::new();
    let mut ok = true;
    for (kind, limit) in [(HeadKind::Mlp, 1e-4), (HeadKind::Rnn, 1e-3), (HeadKind::Transformer, 1e-3)] {
        let head = TrainedHead::initialise(HeadConfig::new(kind, 16, 16, 2), 5).map_err(|e| e.to_string())?;
        let err = grad_check(&head, &seq, 2, 1e-5, 9).map_err(|e| e.to_string())?;
        ok &= err < limit;
        parts.push(format!("{kind} {err:.2e} (< {limit:.0e})"));
    }
    ensure(ok, format!("200 sampled parameters each: {}", parts.join(", ")))
}

const SECTION_S: f64 = 15.0;
const SECTIONS: usize = 3;

fn training_config() -> Config {
    let mut cfg = Config::default();
    cfg.scorer.heads = vec!["mlp".into()];
    cfg
}

fn triplet_consistent(truth: &BTreeMap<String, Tier>, t: &singassess_core::htpr::Triplet) -> bool {
    truth[&t.high_clip] == Tier::High && truth[&t.medium_clip] == Tier::Medium && truth[&t.low_clip] == Tier::Low
}

fn synthetic_htpr() -> Outcome {
    let start = Instant::now();
    let cfg = training_config();
    let mut parts = Vec::new();
    let mut ok = true;
    for seed in [1u64, 2, 3] {
        let train = common::windowed(&common::corpus_specs(100 + seed, 20, SECTIONS, "tr"), SECTION_S, &cfg);
        let specs = common::corpus_specs(200 + seed, 30, SECTIONS, "ev");
        let eval = common::windowed(&specs, SECTION_S, &cfg);
        let registry = train_registry(&train, &train, &cfg, seed).map_err(|e| e.to_string())?;
        let scores = score_all(&eval, &registry).map_err(|e| e.to_string())?;
        let truth: BTreeMap<String, Tier> = specs.iter().map(|s| (s.id.clone(), s.tier)).collect();
        let mut per = Vec::new();
        for d in Dimension::ALL {
            let tiers = tiers_for(&scores, d).map_err(|e| e.to_string())?;
            let mut session = HtprSession::create(format!("s{seed}{d}"), tiers, 50, seed).map_err(|e| e.to_string())?;
            for t in session.triplets.clone() {
                let consistent = triplet_consistent(&truth, &t);
                let j = Judgment { triplet_id: t.id, evaluator_id: "oracle".into(), consistent, perceived_order: None, timestamp: 0 };
                session.submit(j).map_err(|e| e.to_string())?;
            }
            let s = htpr_score(&session).map_err(|e| e.to_string())?.score;
            ok &= s >= 0.90;
            per.push(format!("{d} {s:.2}"));
        }
        parts.push(format!("seed {seed}: {}", per.join(" ")));
    }
    let secs = start.elapsed().as_secs_f64();
    ok &= secs < 600.0;
    ensure(ok, format!("90 clips, 50 triplets, need >= 0.90 everywhere; {}; {secs:.0} s (limit 600 s)", parts.join("; ")))
}

fn variance(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / v.len() as f64
}

fn clip30_instability() -> Outcome {
    let cfg = training_config();
    let train = common::windowed(&common::corpus_specs(101, 20, SECTIONS, "tr"), SECTION_S, &cfg);
    let registry = train_registry(&train, &train, &cfg, 1).map_err(|e| e.to_string())?;
    let specs = common::corpus_specs(201, 30, SECTIONS, "ev");
    // The fixed clip: the one whose sections differ most.
    let spec = specs
        .iter()
        .max_by(|a, b| {
            let spread = |s: &common::SongSpec| {
                s.section_quality.iter().copied().fold(f64::MIN, f64::max)
                    - s.section_quality.iter().copied().fold(f64::MAX, f64::min)
            };
            spread(a).total_cmp(&spread(b))
        })
        .expect("corpus");
    let clip = common::render_song(spec, SECTION_S);
    let sr = clip.sample_rate_hz() as f64;
    let mut rng = ChaCha8Rng::seed_from_u64(30);
    let mut ratios = Vec::new();
    let mut ok = true;
    for d in Dimension::ALL {
        let mut excerpt = Vec::new();
        let mut full = Vec::new();
        for k in 0..5 {
            let s0 = rng.random_range(0.0..clip.duration_s() - 30.0);
            let a = (s0 * sr) as usize;
            let seg = clip.slice(format!("x{k}"), a, a + (30.0 * sr) as usize).map_err(|e| e.to_string())?;
            let e = infer_song(&seg, &registry, InferMode::Clip30).map_err(|e| e.to_string())?;
            excerpt.push(e.expected(d).expect("dimension"));
            let off = (rng.random_range(0.0..cfg.features.stride_s) * sr) as usize;
            let trimmed = clip.slice(format!("f{k}"), off, clip.len()).map_err(|e| e.to_string())?;
            let w = clip_windows(&trimmed, &cfg.features).map_err(|e| e.to_string())?;
            full.push(score_windows(&w, &registry, "f").map_err(|e| e.to_string())?.expected(d).expect("dimension"));
        }
        let (ve, vf) = (variance(&excerpt), variance(&full));
        ok &= ve >= 2.0 * vf;
        ratios.push(format!("{d} {:.3e}/{:.3e}", ve, vf));
    }
    ensure(ok, format!("clip {} sections {:.2?}; clip30/fullsong variance: {}", spec.id, spec.section_quality, ratios.join(", ")))
}

// ------------------------------------------------------------ annotations

fn agreement_formulas() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1000);
    let mut violations = 0;
    for _ in 0..1000 {
        let n = rng.random_range(1..=40);
        let a: Vec<u8> = (0..n).map(|_| rng.random_range(1..=5)).collect();
        let b: Vec<u8> = (0..n).map(|_| rng.random_range(1..=5)).collect();
        let s = agreement_stats(&a, &b).map_err(|e| e.to_string())?;
        if s.within_one < s.exact {
            violations += 1;
        }
    }
    let hand = agreement_stats(&[3, 4, 5], &[3, 3, 2]).map_err(|e| e.to_string())?;
    ensure(
        violations == 0 && hand.exact == 1.0 / 3.0 && hand.within_one == 2.0 / 3.0,
        format!("1000 pairs, {violations} with within_one < exact; (3,4,5)/(3,3,2) -> ({}, {})", hand.exact, hand.within_one),
    )
}

fn forced_distribution() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut records = Vec::new();
    for c in 0..200 {
        let mut perm = [1u8, 2, 3, 4, 5];
        for i in (1..5).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        for (a, &s) in perm.iter().enumerate() {
            records.push(AnnotationRecord {
                clip_id: format!("c{c:03}"),
                annotator_id: format!("a{a}"),
                scores: [(Dimension::Emotion, s)].into_iter().collect(),
                critiques: BTreeMap::new(),
            });
        }
    }
    let agg = aggregate_ratings(&records, Some(Dimension::Emotion)).map_err(|e| e.to_string())?;
    let all_three = agg.clips.values().all(|c| c.mean == 3.0);
    ensure(
        all_three && agg.mid_band_fraction == 1.0,
        format!("200 clips x 5 permuted ratings: all means 3.0 = {all_three}, mid-band fraction {}", agg.mid_band_fraction),
    )
}

// ------------------------------------------------------------- durability

struct Server {
    child: Child,
    base: String,
}

impl Server {
    fn start(store: &Path, audio: &Path) -> Server {
        let mut child = Command::new(env!("CARGO_BIN_EXE_singassess"))
            .args(["htpr", "serve", "--addr", "127.0.0.1:0", "--store"])
            .arg(store)
            .arg("--audio-dir")
            .arg(audio)
            .stdout(Stdio::piped())
            .spawn()
            .expect("spawn server");
        let mut line = String::new();
        BufReader::new(child.stdout.take().expect("stdout")).read_line(&mut line).expect("address line");
        let addr = line.trim().strip_prefix("listening on ").expect("listening line").to_string();
        Server { child, base: format!("http://{addr}") }
    }

    fn kill(mut self) {
        self.child.kill().expect("SIGKILL");
        self.child.wait().expect("reap");
    }
}

fn agent() -> ureq::Agent {
    ureq::Agent::config_builder().http_status_as_error(false).timeout_global(Some(Duration::from_secs(10))).build().into()
}

fn get_json(url: &str) -> serde_json::Value {
    let body = agent().get(url).call().expect("GET").body_mut().read_to_string().expect("body");
    serde_json::from_str(&body).expect("json")
}

fn post_json(url: &str, v: &serde_json::Value) -> (u16, serde_json::Value) {
    let mut resp = agent().post(url).header("Content-Type", "application/json").send(v.to_string()).expect("POST");
    let status = resp.status().as_u16();
    (status, serde_json::from_str(&resp.body_mut().read_to_string().expect("body")).expect("json"))
}

fn session_durability() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let keys: BTreeMap<String, f64> = (0..15).map(|i| (format!("clip{i:02}"), i as f64)).collect();
    let tiers = singassess_core::htpr::assign_tiers(&keys).map_err(|e| e.to_string())?;
    let store = dir.path().join("store");
    let audio = dir.path().join("audio");
    std::fs::create_dir_all(&store).map_err(|e| e.to_string())?;
    std::fs::create_dir_all(&audio).map_err(|e| e.to_string())?;

    let server = Server::start(&store, &audio);
    let (status, created) =
        post_json(&format!("{}/sessions", server.base), &serde_json::json!({"tiers": tiers, "n_triplets": 30, "seed": 4}));
    if status != 200 {
        server.kill();
        return Err(format!("create returned {status}: {created}"));
    }
    let id = created["session_id"].as_str().expect("id").to_string();
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for _ in 0..20 {
        let next = get_json(&format!("{}/sessions/{id}/next?evaluator=e1", server.base));
        let tid = next["triplet_id"].as_str().expect("triplet").to_string();
        let body = serde_json::json!({"evaluator_id": "e1", "triplet_id": tid, "consistent": rng.random_bool(0.7)});
        let (status, _) = post_json(&format!("{}/sessions/{id}/judgments", server.base), &body);
        if status != 200 {
            server.kill();
            return Err(format!("judgment returned {status}"));
        }
    }
    let before = get_json(&format!("{}/sessions/{id}/score", server.base));
    server.kill();

    let server = Server::start(&store, &audio);
    let after = get_json(&format!("{}/sessions/{id}/score", server.base));
    server.kill();
    ensure(
        before == after && before["judged"] == 20,
        format!("20 judgments, score before kill {} / after restart {}", before["score"], after["score"]),
    )
}

type Criterion = (&'static str, fn() -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("dtw-oracle-equivalence", dtw_oracle),
        ("transposition-invariance", transposition),
        ("monotonic-degradation", monotone_degradation),
        ("prescreen-count", prescreen_count),
        ("gradient-checks", gradient_checks),
        ("synthetic-htpr-end-to-end", synthetic_htpr),
        ("clip30-instability", clip30_instability),
        ("agreement-formulas", agreement_formulas),
        ("forced-distribution", forced_distribution),
        ("session-durability", session_durability),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (name, f) in criteria {
        if !filter.is_empty() && !filter.iter().any(|p| name.contains(p.as_str())) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p.downcast_ref::<String>().cloned().or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        match outcome {
            Ok(detail) => println!("PASS {name}: {detail}"),
            Err(detail) => {
                failed += 1;
                println!("FAIL {name}: {detail}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
