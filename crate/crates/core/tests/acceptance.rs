//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any
//! failure. Runs as a plain binary so the lines are always printed.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::PI;
use std::path::Path;
use std::time::{Duration, Instant};

use common::*;
use emoseq::audio::{
    compute_spectrogram, equalize_hist, min_max_normalize, slice_frames, waveform_to_frames, WaveForm,
};
use emoseq::ctc::{
    ctc_loss_and_grad, expand_labelings, label_probability_bruteforce, label_probability_forward, min_frames,
};
use emoseq::metrics::{macro_f1, mse, unweighted_accuracy, ConfusionMatrix};
use emoseq::model::{LossMode, ParamSet};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn within(start: Instant, limit: Duration) -> Result<Duration, String> {
    let took = start.elapsed();
    check(took < limit, || format!("took {took:.2?}, limit {limit:?}"))?;
    Ok(took)
}

fn rel(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn ctc_oracle_equivalence() -> Outcome {
    let start = Instant::now();
    let (a, b, blank) = (0, 1, 2);
    let fixture = |label: &[usize], t: usize, expected: &[[usize; 3]]| -> Result<(), String> {
        let got: BTreeSet<Vec<usize>> = expand_labelings(label, t, 3, blank)
            .map_err(|e| e.to_string())?
            .into_iter()
            .collect();
        let want: BTreeSet<Vec<usize>> = expected.iter().map(|p| p[..t].to_vec()).collect();
        check(got == want, || {
            format!("expansion of {label:?} over {t} frames: {got:?}")
        })
    };
    fixture(&[a], 2, &[[a, a, 0], [a, blank, 0], [blank, a, 0]])?;
    fixture(
        &[a, b],
        3,
        &[[a, a, b], [a, b, b], [blank, a, b], [a, blank, b], [a, b, blank]],
    )?;

    let mut worst: f64 = 0.0;
    for seed in 0..1000u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = rng.gen_range(1..=10);
        let n = rng.gen_range(2..=4);
        let y = random_posteriors(&mut rng, t, n);
        let blank = rng.gen_range(0..n);
        let symbols: Vec<usize> = (0..n).filter(|&s| s != blank).collect();
        let len = rng.gen_range(0..=3);
        let label: Vec<usize> = (0..len).map(|_| symbols[rng.gen_range(0..symbols.len())]).collect();
        let fwd = label_probability_forward(&y, &label, blank)
            .map_err(|e| e.to_string())?
            .probability;
        let brute = label_probability_bruteforce(&y, &label, blank).map_err(|e| e.to_string())?;
        let r = rel(fwd, brute);
        check(r <= 1e-10, || {
            format!("seed {seed}: forward {fwd:e} vs enumeration {brute:e}")
        })?;
        worst = worst.max(r);
    }
    let took = within(start, Duration::from_secs(10))?;
    Ok(format!(
        "1000 instances + 2 fixtures, worst rel {worst:.1e}, {took:.2?}"
    ))
}

fn totality() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..300u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = rng.gen_range(1..=6);
        let n = rng.gen_range(2..=3);
        let y = random_posteriors(&mut rng, t, n);
        let blank = rng.gen_range(0..n);
        let mut labelings = BTreeSet::new();
        for_each_path(&y, |path, _| {
            labelings.insert(collapse_path(path, blank));
        });
        let total: f64 = labelings
            .iter()
            .map(|l| label_probability_forward(&y, l, blank).map(|f| f.probability))
            .sum::<emoseq::Result<f64>>()
            .map_err(|e| e.to_string())?;
        check((total - 1.0).abs() <= 1e-9, || format!("seed {seed}: total {total}"))?;
        worst = worst.max((total - 1.0).abs());
    }
    let took = within(start, Duration::from_secs(10))?;
    Ok(format!(
        "300 posterior matrices, worst |sum - 1| {worst:.1e}, {took:.2?}"
    ))
}

/// All coordinates except the dense encoder weights, plus a seeded sample of
/// those.
fn encoder_instance_coords(inst: &GradInstance, rng: &mut ChaCha8Rng) -> Vec<usize> {
    let enc = inst.model.encoder.as_ref().expect("encoder model");
    let lens: Vec<usize> = enc.tensors().iter().map(|t| t.len()).collect();
    let dense_start: usize = lens[..4].iter().sum();
    let dense_end = dense_start + lens[4];
    let mut coords: Vec<usize> = (0..inst.model.num_params())
        .filter(|i| !(dense_start..dense_end).contains(i))
        .collect();
    coords.extend((0..48).map(|_| rng.gen_range(dense_start..dense_end)));
    coords
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut counts = BTreeMap::new();
    for seed in 0..40u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let t = rng.gen_range(1..=6);
        let n = rng.gen_range(2..=8);
        let blank = n - 1;
        let mut label: Vec<usize> = (0..rng.gen_range(1..=3)).map(|_| rng.gen_range(0..blank)).collect();
        while min_frames(&label) > t {
            label.pop();
        }
        let logits = Array2::from_shape_simple_fn((t, n), || rng.gen_range(-3.0..3.0));
        let (_, g) = ctc_loss_and_grad(logits.view(), &label, blank).map_err(|e| e.to_string())?;
        let loss = |l: &Array2<f64>| ctc_loss_and_grad(l.view(), &label, blank).unwrap().0;
        for i in 0..t {
            for j in 0..n {
                let (mut up, mut down) = (logits.clone(), logits.clone());
                up[[i, j]] += FD_STEP;
                down[[i, j]] -= FD_STEP;
                let r = rel_err(g[[i, j]], (loss(&up) - loss(&down)) / (2.0 * FD_STEP));
                check(r < 1e-4, || format!("CTC seed {seed} ({i},{j}): rel {r:e}"))?;
                worst = worst.max(r);
            }
        }
    }
    counts.insert("ctc-loss", 40);
    let suites = [
        ("framewise", LossMode::FramewiseCe, false, 50u64),
        ("ctc", LossMode::Ctc, false, 50),
        ("framewise+encoder", LossMode::FramewiseCe, true, 30),
        ("ctc+encoder", LossMode::Ctc, true, 30),
    ];
    for (name, mode, with_encoder, n) in suites {
        for seed in 0..n {
            let mut rng = ChaCha8Rng::seed_from_u64(1000 + seed);
            let inst = random_grad_instance(&mut rng, mode, with_encoder);
            let coords = with_encoder.then(|| encoder_instance_coords(&inst, &mut rng));
            let r = check_instance(&inst, coords.as_deref());
            check(r < 1e-4, || format!("{name} seed {seed}: rel {r:e}"))?;
            worst = worst.max(r);
        }
        counts.insert(name, n);
    }
    let took = within(start, Duration::from_secs(60))?;
    let total: u64 = counts.values().sum();
    Ok(format!(
        "{total} instances {counts:?}, worst rel {worst:.1e}, {took:.2?}"
    ))
}

fn framing_arithmetic() -> Outcome {
    let samples = (0..32000)
        .map(|i| 0.5 * (2.0 * PI * 440.0 * i as f64 / 16000.0).sin())
        .collect();
    let wave = WaveForm::new(samples, 16000).map_err(|e| e.to_string())?;
    let spec = compute_spectrogram(&wave).map_err(|e| e.to_string())?;
    check(spec.columns() == 199, || format!("{} columns", spec.columns()))?;
    let seq = slice_frames(&spec).map_err(|e| e.to_string())?;
    check(seq.len() == 8, || format!("{} frames", seq.len()))?;
    for (k, f) in seq.frames.iter().enumerate() {
        check(f.channels.iter().all(|c| c.dim() == (40, 40)), || {
            format!("frame {k} shape")
        })?;
        check(f.channels[1].iter().all(|v| (0.0..=1.0).contains(v)), || {
            format!("frame {k} channel 1 out of [0,1]")
        })?;
        check((f.start_time - 0.2 * k as f64).abs() < 1e-12, || {
            format!("frame {k} starts at {}", f.start_time)
        })?;
    }
    Ok("199 columns, 8 frames of 3x40x40, channel 1 in [0,1], starts 0.0..1.4 step 0.2".into())
}

fn ks_uniform(values: &[f64]) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut d: f64 = 0.0;
    let mut i = 0;
    while i < v.len() {
        let mut j = i;
        while j < v.len() && v[j] == v[i] {
            j += 1;
        }
        let x = v[i].clamp(0.0, 1.0);
        d = d.max((i as f64 / n - x).abs()).max((j as f64 / n - x).abs());
        i = j;
    }
    d
}

fn distinct_levels(x: &Array2<f64>) -> usize {
    x.iter()
        .map(|v| (v * 255.0).round() as u64)
        .collect::<BTreeSet<_>>()
        .len()
}

fn equalization_property() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut frames: Vec<Array2<f64>> = Vec::new();
    for k in 0..30 {
        let f0 = 120.0 + 95.0 * k as f64;
        let samples: Vec<f64> = (0..24000)
            .map(|i| {
                let t = i as f64 / 16000.0;
                0.3 * (2.0 * PI * f0 * t).sin() + 0.1 * (2.0 * PI * 2.3 * f0 * t).sin() + rng.gen_range(-0.05..0.05)
            })
            .collect();
        let seq = waveform_to_frames(&WaveForm::new(samples, 16000).unwrap()).map_err(|e| e.to_string())?;
        frames.extend(seq.frames.into_iter().map(|f| f.channels[1].clone()));
    }
    for _ in 0..300 {
        let skew = rng.gen_range(0.3..2.0);
        let x = Array2::from_shape_simple_fn((40, 40), || rng.gen_range(0.0f64..1.0).powf(skew));
        frames.push(min_max_normalize(&x));
    }
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for norm in frames.iter().filter(|f| distinct_levels(f) >= 64) {
        let eq = equalize_hist(norm);
        let d = ks_uniform(eq.as_slice().unwrap());
        check(d <= 0.15, || format!("KS {d:.3}"))?;
        worst = worst.max(d);
        checked += 1;
    }
    check(checked >= 400, || format!("only {checked} frames had >= 64 levels"))?;
    Ok(format!("{checked} frames, worst KS {worst:.3}"))
}

fn cli(args: &[&str]) -> Result<String, String> {
    let mut out = Vec::new();
    emoseq::cli::run_args(std::iter::once("emoseq").chain(args.iter().copied()), &mut out)
        .map_err(|e| format!("emoseq {}: {e}", args.join(" ")))?;
    Ok(String::from_utf8(out).unwrap())
}

fn metric(path: &Path, key: &str) -> Result<f64, String> {
    let text = std::fs::read_to_string(path).map_err(|e| e.to_string())?;
    let v: serde_json::Value = serde_json::from_str(&text).map_err(|e| e.to_string())?;
    v[key]
        .as_f64()
        .ok_or_else(|| format!("{key} missing from {}", path.display()))
}

fn end_to_end_training() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path().to_str().unwrap();
    cli(&[
        "synth",
        "--kind",
        "separable_tones",
        "--n",
        "50",
        "--classes",
        "3",
        "--seed",
        "1",
        "--out",
        d,
    ])?;
    let manifest = format!("{d}/manifest.csv");
    let (ck, metrics) = (format!("{d}/model.ck"), format!("{d}/metrics.json"));
    cli(&[
        "train",
        "--manifest",
        &manifest,
        "--checkpoint",
        &ck,
        "--epochs",
        "200",
        "--seed",
        "1",
    ])?;
    cli(&[
        "eval",
        "--manifest",
        &manifest,
        "--checkpoint",
        &ck,
        "--split",
        "train",
        "--metrics",
        &metrics,
    ])?;
    let ua = metric(Path::new(&metrics), "unweighted_accuracy")?;
    let trace = std::fs::read_to_string(format!("{d}/model.loss.csv")).map_err(|e| e.to_string())?;
    let branch: Vec<f64> = trace
        .lines()
        .filter(|l| l.starts_with("branch:"))
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    let (first, last) = (branch[0], *branch.last().unwrap());
    check(branch.len() == 200, || format!("{} branch epochs", branch.len()))?;
    check(last <= 0.5 * first, || format!("loss {first:.3} -> {last:.3}"))?;
    check(ua >= 0.95, || format!("train UA {ua:.3}"))?;
    let took = within(start, Duration::from_secs(300))?;
    Ok(format!(
        "train UA {ua:.3} after 200 epochs, loss {first:.3} -> {last:.4}, {took:.1?}"
    ))
}

fn fusion_benefit() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path().to_str().unwrap();
    cli(&[
        "synth",
        "--kind",
        "complementary_modalities",
        "--n",
        "200",
        "--seed",
        "2",
        "--holdout",
        "5",
        "--out",
        d,
    ])?;
    let manifest = format!("{d}/manifest.csv");
    let mut scores = Vec::new();
    for modalities in ["m1", "m2", "m1,m2"] {
        let ck = format!("{d}/{modalities}.ck");
        let metrics = format!("{d}/{modalities}.json");
        cli(&[
            "train",
            "--manifest",
            &manifest,
            "--checkpoint",
            &ck,
            "--modalities",
            modalities,
            "--seed",
            "2",
        ])?;
        cli(&[
            "eval",
            "--manifest",
            &manifest,
            "--checkpoint",
            &ck,
            "--split",
            "test",
            "--metrics",
            &metrics,
        ])?;
        scores.push(metric(Path::new(&metrics), "unweighted_accuracy")?);
    }
    let summary = format!(
        "test UA m1 {:.3}, m2 {:.3}, fused {:.3}",
        scores[0], scores[1], scores[2]
    );
    check(scores[0] <= 0.6 && scores[1] <= 0.6 && scores[2] >= 0.9, || {
        summary.clone()
    })?;
    Ok(format!("{summary}, {:.1?}", start.elapsed()))
}

fn metric_fixtures() -> Outcome {
    let close =
        |name: &str, got: f64, want: f64| check((got - want).abs() <= 1e-12, || format!("{name}: {got} vs {want}"));
    // Hand-derived: recalls 2/3, 1, 3/5; F1 scores 2/3, 2/3, 3/4.
    let truth = [0, 0, 0, 1, 1, 2, 2, 2, 2, 2];
    let pred = [0, 0, 1, 1, 1, 2, 2, 2, 0, 1];
    for classes in [3, 7] {
        let cm = ConfusionMatrix::from_labels(&truth, &pred, classes).map_err(|e| e.to_string())?;
        close("UA", unweighted_accuracy(&cm).unwrap(), 34.0 / 45.0)?;
        close("macro F1", macro_f1(&cm).unwrap(), 25.0 / 36.0)?;
    }
    // A class that is predicted but never true counts with F1 = 0.
    let cm = ConfusionMatrix::from_labels(&[0, 0], &[0, 3], 4).unwrap();
    close("UA (phantom class)", unweighted_accuracy(&cm).unwrap(), 0.5)?;
    close("macro F1 (phantom class)", macro_f1(&cm).unwrap(), 1.0 / 3.0)?;
    let perfect = ConfusionMatrix::from_labels(&[0, 1, 2, 2], &[0, 1, 2, 2], 7).unwrap();
    close("UA (perfect)", unweighted_accuracy(&perfect).unwrap(), 1.0)?;
    close("macro F1 (perfect)", macro_f1(&perfect).unwrap(), 1.0)?;
    close("MSE", mse(&[0.1, 0.5, 0.9], &[0.0, 0.5, 0.6]).unwrap(), 0.1 / 3.0)?;
    close("MSE (exact)", mse(&[0.25, -0.5], &[0.25, -0.5]).unwrap(), 0.0)?;
    Ok("UA 34/45, macro F1 25/36, phantom-class and perfect cases, MSE 1/30".into())
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 8] = [
        ("CTC oracle equivalence", ctc_oracle_equivalence),
        ("totality of label probabilities", totality),
        ("gradient correctness", gradient_correctness),
        ("framing arithmetic", framing_arithmetic),
        ("equalization property", equalization_property),
        ("end-to-end toy training", end_to_end_training),
        ("fusion benefit", fusion_benefit),
        ("metric fixtures", metric_fixtures),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let outcome = std::panic::catch_unwind(run).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(detail) => println!("PASS {} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {} {name}: {why}", i + 1);
            }
        }
    }
    println!(
        "PASS 9 disclosure: the 53% unweighted accuracy / 0.5 macro F1 / 0.04-0.05 and 0.09 MSE challenge \
         numbers are not reproduced; they need the OMG corpus and pretrained ResNet encoders. Criteria 1-8 \
         are the desk-scale substitute."
    );
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
