//! Acceptance criteria, one PASS/FAIL line each. Exits non-zero if any fail.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use omnipipe::curation::gaussian_filter;
use omnipipe::evalkit::{bleu, cer, normalize_scores, wer, EditCounts, MetricCounts, ScoreTable, Smoothing};
use omnipipe::modality::{frame_tokens, plan_tiles, write_wav, SAMPLE_RATE_HZ};
use omnipipe::packing::{build_mask, pack, packed_attention, PackPolicy};
use omnipipe::projectors::{check_projector, toy_fit, ConvGmlp, ConvGmlpConfig, Projector, ProjectorKind};
use omnipipe::stream::{run, EventKind, Injection, Modality, SchedulerState, StreamEvent};
use omnipipe::{Error, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

type Outcome = Result<String, String>;
type Criterion = (&'static str, Duration, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        let ok: bool = $cond;
        if !ok {
            return Err(format!($($msg)+));
        }
    };
}

fn criterion_1() -> Outcome {
    let tile = plan_tiles(384, 384).map_err(|e| e.to_string())?.total_tokens;
    ensure!(tile == 182, "tile 384x384 gave {tile}");
    let frame = frame_tokens(384, 768).map_err(|e| e.to_string())?;
    ensure!(frame == 546, "frame 384x768 gave {frame}");
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let (w, h) = (rng.gen_range(1..=4096), rng.gen_range(1..=4096));
        let t = frame_tokens(w, h).map_err(|e| e.to_string())?;
        ensure!([182, 364, 546].contains(&t), "{w}x{h} gave {t}");
    }
    Ok("tile 182, frame 546, 1000 random frames within {182,364,546}".into())
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for rate in [2, 4, 8] {
        let full = ConvGmlpConfig::new(rate, 1280, 3584).map_err(|e| e.to_string())?;
        let small = ConvGmlp::new(ConvGmlpConfig::new(rate, 2, 2).map_err(|e| e.to_string())?);
        let params = small.init(rate as u64);
        for _ in 0..100 {
            let len: usize = rng.gen_range(1..=512);
            let want = len.div_ceil(rate);
            ensure!(
                full.intermediate_shape(len) == (want, rate * 1280),
                "rate {rate} L {len}: {:?}",
                full.intermediate_shape(len)
            );
            let x = Tensor::from_fn(&[len, 2], |i| (i as f64).sin());
            let (y, trace) = small.forward_traced(&params, &x).map_err(|e| e.to_string())?;
            ensure!(y.shape() == [want, 2], "rate {rate} L {len}: output {:?}", y.shape());
            ensure!(
                trace.gated.shape() == [want, rate * 2],
                "rate {rate} L {len}: gated {:?}",
                trace.gated.shape()
            );
        }
    }
    // One forward at the production encoder width.
    let proj = ConvGmlp::new(ConvGmlpConfig::new(4, 1280, 8).map_err(|e| e.to_string())?);
    let x = Tensor::from_fn(&[100, 1280], |i| ((i % 13) as f64 - 6.0) / 6.0);
    let (y, trace) = proj.forward_traced(&proj.init(0), &x).map_err(|e| e.to_string())?;
    ensure!(trace.gated.shape() == [25, 5120], "gated {:?}", trace.gated.shape());
    ensure!(y.shape() == [25, 8], "output {:?}", y.shape());
    Ok("ceil(L/rate) and rate x 1280 for 300 lengths; rate 4, L=100 -> 25 x 5120".into())
}

fn criterion_3() -> Outcome {
    let mut worst: f64 = 0.0;
    for kind in ProjectorKind::ALL {
        for seed in 0..10 {
            let r = check_projector(kind, 4, 24, seed, 1e-5, 1e-4).map_err(|e| e.to_string())?;
            ensure!(
                r.max_relative_error < 1e-4,
                "{kind} seed {seed}: {:.3e}",
                r.max_relative_error
            );
            worst = worst.max(r.max_relative_error);
        }
    }
    Ok(format!("5 variants x 10 seeds, worst relative error {worst:.2e}"))
}

fn criterion_4() -> Outcome {
    let mut ratios = Vec::new();
    for rate in [2, 4, 8] {
        let cfg = ConvGmlpConfig::new(rate, 4, 4).map_err(|e| e.to_string())?;
        let curve = toy_fit(&cfg, 200, 1e-3, 7).map_err(|e| e.to_string())?;
        let ratio = curve[curve.len() - 1] / curve[0];
        ensure!(ratio <= 0.5, "rate {rate}: final/initial = {ratio:.3}");
        ratios.push(format!("{rate}:{ratio:.3}"));
    }
    Ok(format!("final/initial loss {}", ratios.join(", ")))
}

fn causal_attention(x: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let d = x[0].len();
    let scale = 1.0 / (d as f64).sqrt();
    (0..x.len())
        .map(|i| {
            let s: Vec<f64> = (0..=i)
                .map(|j| (0..d).map(|c| x[i][c] * x[j][c]).sum::<f64>() * scale)
                .collect();
            let m = s.iter().cloned().fold(f64::MIN, f64::max);
            let e: Vec<f64> = s.iter().map(|v| (v - m).exp()).collect();
            let z: f64 = e.iter().sum();
            (0..d).map(|c| (0..=i).map(|j| e[j] / z * x[j][c]).sum()).collect()
        })
        .collect()
}

fn criterion_5() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..500 {
        let d = rng.gen_range(1..=16);
        let n = rng.gen_range(1..=6);
        let seqs: Vec<Vec<Vec<f64>>> = (0..n)
            .map(|_| {
                let len = rng.gen_range(1..=32);
                (0..len)
                    .map(|_| (0..d).map(|_| StandardNormal.sample(&mut rng)).collect())
                    .collect()
            })
            .collect();
        let capacity = rng.gen_range(32..=96);
        let lens: Vec<usize> = seqs.iter().map(Vec::len).collect();
        let batch = pack(&lens, capacity, PackPolicy::FirstFit).map_err(|e| e.to_string())?;
        for (b, bin) in batch.bins.iter().enumerate() {
            let mut rows: Vec<f64> = bin
                .samples
                .iter()
                .flat_map(|&s| seqs[s].iter().flatten().copied())
                .collect();
            rows.resize(capacity * d, 0.0);
            let tokens = Tensor::new(vec![capacity, d], rows).map_err(|e| e.to_string())?;
            let mask = build_mask(&batch, b).map_err(|e| e.to_string())?;
            let out = packed_attention(&tokens, &mask).map_err(|e| e.to_string())?;
            for (k, &s) in bin.samples.iter().enumerate() {
                for (r, want) in causal_attention(&seqs[s]).iter().enumerate() {
                    for (g, w) in out.row(bin.cu_seqlens[k] + r).iter().zip(want) {
                        worst = worst.max((g - w).abs());
                    }
                }
            }
        }
    }
    ensure!(worst <= 1e-10, "max abs diff {worst:.3e}");
    Ok(format!("500 packings, max abs diff {worst:.2e}"))
}

fn random_trace(rng: &mut ChaCha8Rng) -> Vec<StreamEvent> {
    let mut t = 0u64;
    let mut out = Vec::new();
    for _ in 0..rng.gen_range(0..16) {
        t += rng.gen_range(0..500);
        if rng.gen_bool(0.5) {
            out.push(StreamEvent::new(t, EventKind::AudioStart, 0));
            for _ in 0..rng.gen_range(0..6) {
                t += rng.gen_range(0..100);
                let (kind, tokens) = match rng.gen_range(0..4) {
                    0 => (EventKind::VideoFrame, 182),
                    1 => (EventKind::Text, rng.gen_range(1..50)),
                    _ => (EventKind::AudioFrame, rng.gen_range(1..10)),
                };
                out.push(StreamEvent::new(t, kind, tokens));
            }
            t += rng.gen_range(0..100);
            out.push(StreamEvent::new(t, EventKind::AudioEnd, 0));
        } else {
            let kind = [EventKind::VideoFrame, EventKind::Image, EventKind::Text][rng.gen_range(0..3)];
            out.push(StreamEvent::new(t, kind, rng.gen_range(1..600)));
        }
    }
    out
}

fn criterion_6() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut rejected = 0;
    for i in 0..1000 {
        let events = random_trace(&mut rng);
        let trace = run(&events).map_err(|e| format!("trace {i}: {e}"))?;
        // Audio tokens only at their segment's audio_end.
        let mut state = SchedulerState::default();
        let mut segments = 0;
        for e in &events {
            let (next, out) = state.step(e).map_err(|e| e.to_string())?;
            for inj in &out {
                if inj.modality == Modality::Audio {
                    ensure!(
                        e.kind == EventKind::AudioEnd && inj.timestamp_ms == e.timestamp_ms,
                        "trace {i}: early audio"
                    );
                }
            }
            segments += usize::from(e.kind == EventKind::AudioEnd);
            state = next;
        }
        let triggers = trace.iter().filter(|x| x.trigger_inference).count();
        ensure!(
            triggers == segments,
            "trace {i}: {triggers} triggers for {segments} segments"
        );
        let visual: Vec<StreamEvent> = events.iter().filter(|e| !e.kind.is_audio()).copied().collect();
        let expect: Vec<Injection> = trace
            .iter()
            .filter(|x| x.modality != Modality::Audio)
            .copied()
            .collect();
        ensure!(
            run(&visual).map_err(|e| e.to_string())? == expect,
            "trace {i}: visual path changed"
        );

        let end = events.last().map_or(0, |e| e.timestamp_ms);
        let mut dangling = events.clone();
        dangling.push(StreamEvent::new(end + 1, EventKind::AudioStart, 0));
        dangling.push(StreamEvent::new(end + 2, EventKind::AudioFrame, 3));
        ensure!(
            matches!(run(&dangling), Err(Error::Protocol { .. })),
            "trace {i}: dangling audio accepted"
        );
        let mut regress = events.clone();
        regress.push(StreamEvent::new(end + 10, EventKind::Image, 182));
        regress.push(StreamEvent::new(end + 5, EventKind::Text, 4));
        ensure!(
            matches!(run(&regress), Err(Error::Ordering { .. })),
            "trace {i}: time regression accepted"
        );
        rejected += 2;
    }
    Ok(format!(
        "1000 valid traces hold all invariants, {rejected} malformed traces rejected"
    ))
}

fn criterion_7() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let losses: Vec<(String, f64)> = (0..10_000)
        .map(|i| (format!("s{i}"), StandardNormal.sample(&mut rng)))
        .collect();
    let r = gaussian_filter(&losses).map_err(|e| e.to_string())?;
    let frac = r.kept_ids.len() as f64 / 10_000.0;
    ensure!((0.65..=0.71).contains(&frac), "keep fraction {frac}");
    let hand: Vec<(String, f64)> = ["a", "b", "c", "d", "e"]
        .iter()
        .zip(1..=5)
        .map(|(k, v)| (k.to_string(), v as f64))
        .collect();
    let h = gaussian_filter(&hand).map_err(|e| e.to_string())?;
    ensure!(
        h.mu == 3.0 && (h.sigma - 2f64.sqrt()).abs() < 1e-15,
        "mu {} sigma {}",
        h.mu,
        h.sigma
    );
    ensure!(
        h.kept_ids == ["b", "c", "d"] && h.removed_low_ids == ["a"] && h.removed_high_ids == ["e"],
        "partition {h:?}"
    );
    Ok(format!("keep fraction {frac:.4}; 5-element case exact"))
}

fn dp_distance<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in d[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let c = usize::from(a[i - 1] != b[j - 1]);
            d[i][j] = (d[i - 1][j - 1] + c).min(d[i - 1][j] + 1).min(d[i][j - 1] + 1);
        }
    }
    d[a.len()][b.len()]
}

fn errors(m: &omnipipe::evalkit::MetricResult) -> usize {
    match m.counts {
        MetricCounts::Edit(EditCounts {
            substitutions,
            deletions,
            insertions,
            ..
        }) => substitutions + deletions + insertions,
        _ => usize::MAX,
    }
}

fn criterion_8() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let alphabet = ['a', 'b', 'c', ' ', '你', '好'];
    let gen = |rng: &mut ChaCha8Rng, min: usize| -> String {
        let n = rng.gen_range(min..16);
        (0..n).map(|_| alphabet[rng.gen_range(0..alphabet.len())]).collect()
    };
    for i in 0..1000 {
        let (r, h) = (gen(&mut rng, 1), gen(&mut rng, 0));
        let rc: Vec<char> = r.chars().collect();
        let hc: Vec<char> = h.chars().collect();
        let c = cer(&r, &h).map_err(|e| e.to_string())?;
        ensure!(errors(&c) == dp_distance(&rc, &hc), "pair {i} cer {r:?}/{h:?}");
        ensure!(
            c.value == dp_distance(&rc, &hc) as f64 / rc.len() as f64,
            "pair {i} cer value"
        );
        let rw: Vec<&str> = r.split_whitespace().collect();
        let hw: Vec<&str> = h.split_whitespace().collect();
        if !rw.is_empty() {
            let w = wer(&r, &h).map_err(|e| e.to_string())?;
            ensure!(errors(&w) == dp_distance(&rw, &hw), "pair {i} wer {r:?}/{h:?}");
        }
    }
    let refs = vec!["the quick brown fox jumps over".to_string()];
    let id = bleu(&refs, &refs[0], 4, Smoothing::None)
        .map_err(|e| e.to_string())?
        .value;
    ensure!(id == 1.0, "identity bleu {id}");
    let disjoint = bleu(&refs, "alpha beta gamma delta epsilon", 4, Smoothing::None)
        .map_err(|e| e.to_string())?
        .value;
    ensure!(disjoint == 0.0, "disjoint bleu {disjoint}");

    let mut t = ScoreTable::new();
    for (m, x) in [("a", 50.0), ("b", 70.0), ("c", 90.0)] {
        t.insert(m, "bench", x);
    }
    t.insert("a", "other", 12.0);
    t.insert("b", "other", 3.0);
    let n = normalize_scores(&t);
    ensure!(
        (n.get("b", "bench").unwrap() - 0.6).abs() <= 1e-12,
        "0.6 case gave {:?}",
        n.get("b", "bench")
    );
    ensure!(
        (n.get("a", "bench").unwrap() - 10.0 / 50.0).abs() <= 1e-12,
        "x_min case"
    );
    ensure!(n.get("c", "bench") == Some(1.0), "x_max case");
    for bench in ["bench", "other"] {
        let best = |tab: &ScoreTable| {
            tab.scores
                .iter()
                .filter_map(|(m, row)| row.get(bench).map(|v| (m.clone(), *v)))
                .max_by(|a, b| a.1.total_cmp(&b.1))
                .map(|x| x.0)
        };
        ensure!(best(&t) == best(&n), "argmax changed in {bench}");
    }
    Ok("1000 pairs match the DP oracle; BLEU 1/0; normalization 0.6 and argmax hold".into())
}

fn write_fixtures(dir: &Path) -> std::io::Result<()> {
    let mut wave = vec![0.0; SAMPLE_RATE_HZ * 4];
    for (n, s) in wave.iter_mut().enumerate().skip(SAMPLE_RATE_HZ).take(SAMPLE_RATE_HZ) {
        *s = 0.4 * (2.0 * std::f64::consts::PI * 300.0 * n as f64 / SAMPLE_RATE_HZ as f64).sin();
    }
    write_wav(dir.join("speech.wav"), &wave).map_err(std::io::Error::other)?;
    std::fs::write(
        dir.join("lens.jsonl"),
        "{\"id\":\"a\",\"len\":3}\n{\"id\":\"b\",\"len\":5}\n{\"id\":\"c\",\"len\":2}\n",
    )?;
    std::fs::write(
        dir.join("events.jsonl"),
        "{\"t\":0,\"kind\":\"image\",\"tokens\":182}\n{\"t\":100,\"kind\":\"audio_start\"}\n\
         {\"t\":200,\"kind\":\"audio_frame\",\"tokens\":5}\n{\"t\":300,\"kind\":\"audio_end\"}\n",
    )?;
    std::fs::write(dir.join("losses.csv"), "id,loss\na,1\nb,2\nc,3\nd,4\ne,5\n")?;
    std::fs::write(
        dir.join("texts.jsonl"),
        "{\"text\":\"a small red fox ran across the quiet field at dawn\"}\n{\"text\":\"one two three four\"}\n",
    )?;
    std::fs::write(
        dir.join("pairs.jsonl"),
        "{\"ref\":\"hello world\",\"hyp\":\"hello word\"}\n{\"ref\":\"the cat sat\",\"hyp\":\"the cat\"}\n",
    )?;
    std::fs::write(
        dir.join("scores.csv"),
        "model,benchmark,score\nm1,b1,50\nm2,b1,70\nm3,b1,90\nm1,b2,3\nm2,b2,1\n",
    )?;
    std::fs::write(
        dir.join("config.json"),
        "{\"seed\":3,\"gradcheck\":{\"seeds\":2,\"len\":12},\"ablate-rates\":{\"steps\":20}}",
    )?;
    Ok(())
}

fn criterion_9() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    write_fixtures(d).map_err(|e| e.to_string())?;
    let p = |f: &str| d.join(f).to_string_lossy().into_owned();
    let cfg = p("config.json");
    let runs: Vec<(&str, Vec<String>)> = vec![
        (
            "tile",
            vec!["--width".into(), "1000".into(), "--height".into(), "700".into()],
        ),
        (
            "frames",
            vec![
                "--duration-s".into(),
                "90".into(),
                "--total-frames".into(),
                "2700".into(),
                "--width".into(),
                "1280".into(),
                "--height".into(),
                "720".into(),
            ],
        ),
        ("melspec", vec!["--input".into(), p("speech.wav")]),
        (
            "gradcheck",
            vec!["--projector".into(), "all".into(), "--config".into(), cfg.clone()],
        ),
        ("ablate-rates", vec!["--config".into(), cfg.clone()]),
        (
            "pack",
            vec!["--capacity".into(), "8".into(), "--manifest".into(), p("lens.jsonl")],
        ),
        ("stream-sim", vec!["--events".into(), p("events.jsonl")]),
        (
            "stream-sim",
            vec![
                "--audio".into(),
                p("speech.wav"),
                "--video-duration-s".into(),
                "4".into(),
                "--video-total-frames".into(),
                "100".into(),
            ],
        ),
        ("filter-loss", vec!["--losses".into(), p("losses.csv")]),
        (
            "split-crossmodal",
            vec!["--input".into(), p("texts.jsonl"), "--seed".into(), "9".into()],
        ),
        (
            "mix",
            vec![
                "--dataset".into(),
                "A=100".into(),
                "--dataset".into(),
                "B=300".into(),
                "--budget".into(),
                "40".into(),
            ],
        ),
        (
            "metrics",
            vec![
                "--input".into(),
                p("pairs.jsonl"),
                "--metric".into(),
                "wer".into(),
                "--per-item".into(),
            ],
        ),
        (
            "metrics",
            vec![
                "--input".into(),
                p("pairs.jsonl"),
                "--metric".into(),
                "bleu".into(),
                "--max-n".into(),
                "2".into(),
            ],
        ),
        ("normalize-scores", vec!["--input".into(), p("scores.csv")]),
    ];
    let bin = env!("CARGO_BIN_EXE_omnipipe");
    let mut covered = std::collections::BTreeSet::new();
    for (k, (sub, args)) in runs.iter().enumerate() {
        let mut outputs = Vec::new();
        for attempt in 0..2 {
            let out_path = d.join(format!("out{k}_{attempt}"));
            let status = Command::new(bin)
                .arg(sub)
                .args(args)
                .arg("--output")
                .arg(&out_path)
                .output()
                .map_err(|e| e.to_string())?;
            ensure!(
                status.status.success(),
                "{sub} failed: {}",
                String::from_utf8_lossy(&status.stderr)
            );
            outputs.push(std::fs::read(&out_path).map_err(|e| e.to_string())?);
        }
        ensure!(!outputs[0].is_empty(), "{sub}: empty output");
        ensure!(outputs[0] == outputs[1], "{sub}: outputs differ between runs");
        covered.insert(*sub);
    }
    ensure!(covered.len() == 12, "only {} subcommands covered", covered.len());
    Ok(format!("{} runs over all 12 subcommands byte-identical", runs.len()))
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("token-budget reproduction", Duration::from_secs(1), criterion_1),
        ("Conv-GMLP shape laws", Duration::from_secs(5), criterion_2),
        ("gradient correctness", Duration::from_secs(120), criterion_3),
        ("end-to-end backward", Duration::from_secs(120), criterion_4),
        ("packing isolation oracle", Duration::from_secs(60), criterion_5),
        ("streaming protocol invariants", Duration::from_secs(10), criterion_6),
        ("Gaussian filter calibration", Duration::from_secs(1), criterion_7),
        ("metric oracles", Duration::from_secs(30), criterion_8),
        ("CLI determinism", Duration::from_secs(300), criterion_9),
    ];
    let mut failed = 0;
    for (i, (name, budget, f)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|_| Err("panicked".into()));
        let took = start.elapsed();
        let outcome = match outcome {
            Ok(_) if took > *budget => Err(format!("took {took:.2?}, budget {budget:?}")),
            o => o,
        };
        match outcome {
            Ok(detail) => println!("PASS criterion {}: {name} ({took:.2?}) {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL criterion {}: {name} ({took:.2?}) {why}", i + 1);
            }
        }
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
