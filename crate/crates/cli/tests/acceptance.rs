//! End-to-end acceptance checks. Each test prints one `PASS` or `FAIL` line,
//! written past the harness output capture so it shows in every run.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::Instant;

use ndarray::{array, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use typoprobe::analysis::pca;
use typoprobe::embedstore::{read_embeddings, write_embeddings};
use typoprobe::metrics::{kl_uniform, macro_f1, spearman, ClassUniverse, EvalReport};
use typoprobe::probe::random_gradcheck_suite;

fn verdict(name: &str, passed: bool, detail: &str) {
    let line = format!("{} {name}: {detail}\n", if passed { "PASS" } else { "FAIL" });
    std::io::stderr().write_all(line.as_bytes()).unwrap();
    assert!(passed, "{name}: {detail}");
}

fn tp(out: &Path, args: &[&str]) {
    let status = Command::new(env!("CARGO_BIN_EXE_typoprobe"))
        .args(args)
        .arg("--out")
        .arg(out)
        .env_remove("TYPOPROBE_OUT")
        .output()
        .unwrap();
    assert!(
        status.status.success(),
        "typoprobe {args:?} failed:\n{}",
        String::from_utf8_lossy(&status.stderr)
    );
}

fn load_report(out: &Path, model: &str, source: &str) -> EvalReport {
    let path = out.join("runs").join(model).join("SYN").join(source).join("report.json");
    serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap()
}

fn synth(out: &Path, seed: u64, extra: &[&str]) {
    let seed = seed.to_string();
    let mut args = vec!["synth", "--seed", &seed];
    args.extend_from_slice(extra);
    tp(out, &args);
}

fn train(out: &Path, seed: u64, extra: &[&str]) {
    let seed = seed.to_string();
    let mut args = vec!["train", "--task", "SYN", "--seed", &seed];
    args.extend_from_slice(extra);
    tp(out, &args);
}

fn argmax(v: &[f64]) -> usize {
    (0..v.len()).fold(0, |best, i| if v[i] > v[best] { i } else { best })
}

#[test]
fn gradient_correctness() {
    let start = Instant::now();
    let cases = random_gradcheck_suite(20, 2024, 1e-5);
    let elapsed = start.elapsed().as_secs_f64();
    let worst = cases.iter().map(|c| c.result.max_rel_error).fold(0.0, f64::max);
    let groups: std::collections::BTreeSet<&str> = cases
        .iter()
        .flat_map(|c| c.result.per_group.iter().map(|(g, _)| g.as_str()))
        .collect();
    let kinds = cases.iter().filter(|c| c.num_layers > 0).count();
    let passed = cases.len() == 40 && worst < 1e-4 && elapsed < 60.0 && groups.len() == 6;
    verdict(
        "gradient correctness",
        passed,
        &format!(
            "{} configurations ({kinds} mixing), groups {groups:?}, max relative error {worst:.2e}, {elapsed:.2}s",
            cases.len()
        ),
    );
}

// Definition-based macro-F1: per-class precision and recall, then their harmonic mean.
fn reference_macro_f1(pred: &[usize], gold: &[usize], k: usize) -> f64 {
    let mut scores = Vec::new();
    for c in 0..k {
        let tp = pred.iter().zip(gold).filter(|&(&p, &g)| p == c && g == c).count();
        let predicted = pred.iter().filter(|&&p| p == c).count();
        let actual = gold.iter().filter(|&&g| g == c).count();
        if actual == 0 {
            continue;
        }
        let precision = if predicted == 0 { 0.0 } else { tp as f64 / predicted as f64 };
        let recall = tp as f64 / actual as f64;
        scores.push(if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) });
    }
    scores.iter().sum::<f64>() / scores.len() as f64
}

#[test]
fn metric_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let mut mismatches = 0;
    for _ in 0..1000 {
        let k = rng.gen_range(2..=5);
        let n = rng.gen_range(1..=50);
        let gold: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        let pred: Vec<usize> = (0..n).map(|_| rng.gen_range(0..k)).collect();
        if macro_f1(&pred, &gold, k, ClassUniverse::GoldPresent).unwrap() != reference_macro_f1(&pred, &gold, k) {
            mismatches += 1;
        }
    }
    let two = kl_uniform(&[1.0, 0.0]).unwrap();
    let flat = kl_uniform(&[0.2; 5]).unwrap();
    let mut negative = 0;
    for _ in 0..1000 {
        let len = rng.gen_range(1..=12);
        let raw: Vec<f64> = (0..len).map(|_| -rng.gen::<f64>().max(1e-300).ln()).collect();
        let total: f64 = raw.iter().sum();
        let s: Vec<f64> = raw.iter().map(|v| v / total).collect();
        if kl_uniform(&s).unwrap() < 0.0 {
            negative += 1;
        }
    }
    let passed = mismatches == 0 && (two - 2f64.ln()).abs() < 1e-12 && flat.abs() < 1e-12 && negative == 0;
    verdict(
        "metric oracles",
        passed,
        &format!(
            "{mismatches}/1000 macro-F1 mismatches, K([1,0]) - ln 2 = {:.1e}, K(uniform) = {flat:.1e}, {negative}/1000 negative K",
            two - 2f64.ln()
        ),
    );
}

#[test]
fn planted_signal_recovery() {
    let start = Instant::now();
    let mut scores = Vec::new();
    for seed in 1..=5 {
        let dir = tempfile::tempdir().unwrap();
        synth(dir.path(), seed, &["--profile", "constant", "--alpha", "10", "--sigma", "1"]);
        train(dir.path(), seed, &["--model", "synth", "--layer", "native"]);
        scores.push(load_report(dir.path(), "synth", "native").macro_f1);
    }
    let elapsed = start.elapsed().as_secs_f64();
    let passed = scores.iter().all(|&f| f >= 0.99) && elapsed < 120.0;
    verdict(
        "planted signal recovery",
        passed,
        &format!("macro-F1 per seed {scores:?}, {elapsed:.1}s"),
    );
}

#[test]
fn planted_signal_null_matches_baseline() {
    let mut rows = Vec::new();
    let mut passed = true;
    for seed in 1..=5 {
        let dir = tempfile::tempdir().unwrap();
        synth(dir.path(), seed, &["--profile", "constant", "--alpha", "0", "--sigma", "1"]);
        train(dir.path(), seed, &["--model", "synth", "--layer", "native"]);
        train(dir.path(), seed, &["--baseline", "majority"]);
        let probe = load_report(dir.path(), "synth", "native").macro_f1;
        let baseline = load_report(dir.path(), "baseline", "native").macro_f1;
        passed &= (probe - baseline).abs() <= 0.05;
        rows.push(format!("{probe:.3} vs {baseline:.3}"));
    }
    verdict(
        "planted signal, alpha = 0 within 0.05 of majority baseline",
        passed,
        &format!("probe vs baseline per seed [{}]", rows.join(", ")),
    );
}

#[test]
fn layer_localization() {
    let mut hits = 0;
    let mut k_ok = true;
    let mut rows = Vec::new();
    for seed in 1..=10 {
        let signal = tempfile::tempdir().unwrap();
        synth(signal.path(), seed, &["--profile", "single:3", "--layers", "6", "--alpha", "10"]);
        train(signal.path(), seed, &["--model", "synth", "--mix"]);
        let mixed = load_report(signal.path(), "synth", "mix").mixing.unwrap();

        let control = tempfile::tempdir().unwrap();
        synth(control.path(), seed, &["--profile", "single:3", "--layers", "6", "--alpha", "0"]);
        train(control.path(), seed, &["--model", "synth", "--mix"]);
        let null = load_report(control.path(), "synth", "mix").mixing.unwrap();

        let best = argmax(&mixed.weights) + 1;
        if best == 3 {
            hits += 1;
            k_ok &= mixed.kl > null.kl;
        }
        rows.push(format!("argmax {best} K {:.4} control {:.5}", mixed.kl, null.kl));
    }
    verdict(
        "layer localization",
        hits >= 9 && k_ok,
        &format!("{hits}/10 seeds peak at layer 3; [{}]", rows.join("; ")),
    );
}

fn per_layer_f1(out: &Path, layers: usize) -> Vec<f64> {
    (1..=layers)
        .map(|l| load_report(out, "synth", &format!("layer_{l}")).macro_f1)
        .collect()
}

#[test]
fn layer_profile_discrimination() {
    let layer_index: Vec<f64> = (1..=6).map(|l| l as f64).collect();
    let mut rhos = Vec::new();
    let mut ranges = Vec::new();
    for seed in 1..=5 {
        let decay = tempfile::tempdir().unwrap();
        synth(decay.path(), seed, &["--profile", "decay:0.6", "--alpha", "3"]);
        train(decay.path(), seed, &["--model", "synth", "--layer", "all"]);
        let f1 = per_layer_f1(decay.path(), 6);
        // a flat curve has no rank order; count it as non-increasing
        rhos.push(spearman(&layer_index, &f1).unwrap_or(0.0));

        let constant = tempfile::tempdir().unwrap();
        synth(constant.path(), seed, &["--profile", "constant", "--alpha", "1.5"]);
        train(constant.path(), seed, &["--model", "synth", "--layer", "all"]);
        let f1 = per_layer_f1(constant.path(), 6);
        let (lo, hi) = f1.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(a, b), &v| (a.min(v), b.max(v)));
        ranges.push(hi - lo);
    }
    let passed = rhos.iter().all(|&r| r <= 0.0) && ranges.iter().all(|&r| r < 0.1);
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.3}")).collect::<Vec<_>>().join(", ");
    verdict(
        "layer profile discrimination",
        passed,
        &format!("decay Spearman [{}]; constant F1 range [{}]", fmt(&rhos), fmt(&ranges)),
    );
}

fn write_fixture_corpus(dir: &Path) -> (PathBuf, PathBuf) {
    let langs = [
        "rus", "ukr", "dan", "swe", "ces", "pol", "por", "spa", "hin", "mar", "mkd", "bul", "ita", "fra",
    ];
    let mut sentences = String::new();
    let mut links = String::new();
    for (li, lang) in langs.iter().enumerate() {
        for i in 0..60u64 {
            let id = li as u64 * 1000 + i;
            let end = if i % 4 == 0 { "?" } else { "." };
            sentences.push_str(&format!("{id}\t{lang}\t{lang} sentence number {i}{end}\n"));
            if li % 2 == 0 && i % 5 == 0 {
                links.push_str(&format!("{id}\t{}\n", id + 1000));
            }
        }
    }
    let (s, l) = (dir.join("sentences.tsv"), dir.join("links.tsv"));
    std::fs::write(&s, sentences).unwrap();
    std::fs::write(&l, links).unwrap();
    (s, l)
}

fn data_file(name: &str) -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data").join(name).display().to_string()
}

fn run_pipeline(out: &Path, fixtures: &Path) {
    let (sentences, links) = write_fixture_corpus(fixtures);
    let seed = 17;
    tp(out, &["ingest-wals", "--wals", &data_file("wals_snapshot.csv"), "--pairs", &data_file("pairs.txt"), "--seed", "17"]);
    tp(out, &[
        "build-corpus",
        "--sentences",
        sentences.to_str().unwrap(),
        "--links",
        links.to_str().unwrap(),
        "--n",
        "40",
        "--seed",
        "17",
    ]);
    tp(out, &["build-tasks", "--seed", "17"]);
    synth(out, seed, &["--profile", "single:2", "--layers", "3", "--dim", "16", "--sentences", "120"]);
    train(out, seed, &["--model", "synth", "--layer", "all"]);
    train(out, seed, &["--model", "synth", "--layer", "native"]);
    train(out, seed, &["--model", "synth", "--mix"]);
    train(out, seed, &["--baseline", "majority"]);
    tp(out, &["report", "--subset", "s2", "--project", "synth", "--project-per-lang", "30", "--seed", "17"]);
}

fn collect(root: &Path, keep: &dyn Fn(&Path) -> bool) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if keep(&path) {
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), std::fs::read(&path).unwrap());
            }
        }
    }
    out
}

#[test]
fn format_and_determinism() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let fixtures = tempfile::tempdir().unwrap();
    run_pipeline(a.path(), fixtures.path());
    run_pipeline(b.path(), fixtures.path());

    let primary = |p: &Path| {
        let s = p.to_string_lossy();
        let name = p.file_name().unwrap().to_string_lossy();
        (s.contains("/tasks/") && !name.starts_with("manifest"))
            || name == "checkpoint.tpck"
            || (s.contains("/report/") && name.ends_with(".csv"))
    };
    let first = collect(a.path(), &primary);
    let second = collect(b.path(), &primary);
    let tasks = first.keys().filter(|p| p.starts_with("tasks")).count();
    let checkpoints = first.keys().filter(|p| p.ends_with("checkpoint.tpck")).count();
    let csvs = first.keys().filter(|p| p.starts_with("report")).count();
    let differing: Vec<_> = first
        .iter()
        .filter(|(p, bytes)| second.get(*p) != Some(*bytes))
        .map(|(p, _)| p.display().to_string())
        .collect();

    // embedstore: read, rewrite, compare bytes and values
    let src = a.path().join("embeddings/synth_s1.tpeb");
    let set = read_embeddings(&src).unwrap();
    let copy = a.path().join("copy.tpeb");
    write_embeddings(&set, &copy).unwrap();
    let roundtrip = std::fs::read(&src).unwrap() == std::fs::read(&copy).unwrap()
        && read_embeddings(&copy).unwrap() == set;

    let passed = differing.is_empty()
        && first.len() == second.len()
        && tasks >= 25
        && checkpoints == 5
        && csvs >= 4
        && roundtrip;
    verdict(
        "format and determinism",
        passed,
        &format!(
            "{tasks} task files, {checkpoints} checkpoints, {csvs} report CSVs compared; {} differ; embedstore round-trip {}",
            differing.len(),
            if roundtrip { "bit-exact" } else { "differs" }
        ),
    );
}

#[test]
fn pca_oracle() {
    // four points with covariance eigenvalues 9 and 1 along axes rotated by 30 degrees
    let (c, s) = (30f64.to_radians().cos(), 30f64.to_radians().sin());
    let (u, v) = (array![c, s], array![-s, c]);
    let (a, b) = (13.5f64.sqrt(), 1.5f64.sqrt());
    let x = ndarray::stack![ndarray::Axis(0), &u * a, &u * -a, &v * b, &v * -b];
    let p = pca(&x, 2).unwrap();
    let align = (p.components[[0, 0]] - c).abs().max((p.components[[0, 1]] - s).abs());
    let values = (p.explained_variance[0] - 9.0).abs().max((p.explained_variance[1] - 1.0).abs());

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let y = Array2::from_shape_fn((30, 7), |_| rng.sample::<f64, _>(StandardNormal));
    let full = pca(&y, 7).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..30 {
        for j in (i + 1)..30 {
            let before = (&y.row(i) - &y.row(j)).mapv(|d| d * d).sum().sqrt();
            let after = (&full.projected.row(i) - &full.projected.row(j)).mapv(|d| d * d).sum().sqrt();
            worst = worst.max((before - after).abs());
        }
    }
    verdict(
        "PCA oracle",
        align < 1e-6 && values < 1e-9 && worst < 1e-9,
        &format!("first component off by {align:.1e}, eigenvalues off by {values:.1e}, distance drift {worst:.1e}"),
    );
}
