use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use sasegan::audio::{read_wav, write_wav, AudioBuffer};

fn sasegan(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sasegan")).args(args).output().expect("run sasegan")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "status {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn manifest(dir: &Path) -> BTreeMap<String, String> {
    std::fs::read_to_string(dir.join("manifest.txt"))
        .unwrap()
        .lines()
        .map(|l| {
            let (k, v) = l.split_once('=').unwrap();
            (k.to_owned(), v.to_owned())
        })
        .collect()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    for sub in ["clean", "noisy"] {
        let mut files: Vec<_> = std::fs::read_dir(dir.join(sub)).unwrap().map(|e| e.unwrap().path()).collect();
        files.sort();
        for f in files {
            let bytes = std::fs::read(&f).unwrap();
            out.push((f.strip_prefix(dir).unwrap().to_owned(), bytes));
        }
    }
    out
}

/// Train a tiny model for one step and return the final checkpoint path.
fn tiny_checkpoint(dir: &Path, scale: &str, extra: &[&str]) -> PathBuf {
    let mut args = vec![
        "train",
        "--synthetic",
        "2",
        "--scale-divisor",
        scale,
        "--steps",
        "1",
        "--batch-size",
        "2",
        "--serial",
        "--out-dir",
        s(dir),
    ];
    args.extend_from_slice(extra);
    ok(&sasegan(&args));
    PathBuf::from(&manifest(dir)["artifact.final_checkpoint"])
}

#[test]
fn out_of_range_attention_layer_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = sasegan(&["train", "--synthetic", "1", "--attention-layers", "12", "--out-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("12"), "{}", stderr(&out));
}

#[test]
fn bad_flag_value_exits_2() {
    let out = sasegan(&["mem-profile", "--p", "many"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn train_writes_log_checkpoints_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let out = sasegan(&[
        "train",
        "--synthetic",
        "2",
        "--scale-divisor",
        "32",
        "--attention-layers",
        "none",
        "--steps",
        "7",
        "--batch-size",
        "1",
        "--checkpoint-every",
        "1",
        "--serial",
        "--out-dir",
        s(dir.path()),
    ]);
    ok(&out);
    let m = manifest(dir.path());
    assert_eq!(m["command"], "train");
    assert_eq!(m["model.attention_layers"], "none");
    assert_eq!(m["steps_run"], "7");
    assert!(m.contains_key("started") && m.contains_key("finished"));
    let ckpts = std::fs::read_dir(dir.path().join("checkpoints")).unwrap().count();
    assert_eq!(ckpts, 5, "only the latest checkpoints are kept");
    let log = std::fs::read_to_string(dir.path().join("train_log.csv")).unwrap();
    assert!(log.starts_with("step,d_loss,g_adv,g_l1\n"));
    assert_eq!(log.lines().count(), 8);
}

#[test]
fn all_layers_builds_the_full_attention_layout() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = tiny_checkpoint(dir.path(), "4", &["--attention-layers", "all", "--synth-len", "4096"]);
    let m = manifest(dir.path());
    assert_eq!(m["model.attention_layers"], "3,4,5,6,7,8,9,10,11");
    let state = sasegan::train::load_checkpoint(ckpt).unwrap();
    use sasegan::model::Parameters;
    assert_eq!(state.gen.betas().len(), 18);
    assert_eq!(state.disc.betas().len(), 9);
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    std::fs::write(&cfg, "scale_divisor=32\nlr=0.005\nseed=4\n").unwrap();
    let run = dir.path().join("run");
    ok(&sasegan(&[
        "train",
        "--synthetic",
        "1",
        "--config",
        s(&cfg),
        "--seed",
        "9",
        "--steps",
        "1",
        "--out-dir",
        s(&run),
    ]));
    let m = manifest(&run);
    assert_eq!(m["train.seed"], "9");
    assert_eq!(m["train.lr"], "0.005");
    assert_eq!(m["model.scale_divisor"], "32");
    assert_eq!(m["train.epochs"], "100");
}

#[test]
fn synth_data_is_paired_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        ok(&sasegan(&[
            "synth-data", "--seed", "3", "--count", "4", "--snrs", "0,15", "--len", "8000", "--out-dir", s(d),
        ]));
    }
    let m = manifest(&a);
    assert_eq!(m["snr_db.utt0000"], "0");
    assert_eq!(m["snr_db.utt0001"], "15");
    assert_eq!(m["snr_db.utt0003"], "15");
    let ta = tree(&a);
    assert_eq!(ta.len(), 8);
    assert_eq!(ta, tree(&b));
}

#[test]
fn evaluate_identical_and_ordering_and_unpaired() {
    let dir = tempfile::tempdir().unwrap();
    let low = dir.path().join("low");
    let high = dir.path().join("high");
    for (d, snr) in [(&low, "0"), (&high, "15")] {
        ok(&sasegan(&["synth-data", "--seed", "5", "--count", "3", "--snrs", snr, "--len", "16000", "--out-dir", s(d)]));
    }
    let clean = low.join("clean");
    let out = sasegan(&["evaluate", "--clean", s(&clean), "--test", s(&clean), "--out-dir", s(&dir.path().join("e0"))]);
    ok(&out);
    assert!(String::from_utf8_lossy(&out.stdout).contains("MEAN,35.0000,1.0000"));
    let report = std::fs::read_to_string(dir.path().join("e0/report.csv")).unwrap();
    assert!(report.starts_with("id,ssnr_db,stoi\n"));
    assert!(report.trim_end().ends_with("MEAN,35.0000,1.0000"));

    // Same clean signals at both SNRs, since the corpora share a seed.
    let mean_ssnr = |noisy: &Path, tag: &str| {
        let out_dir = dir.path().join(tag);
        ok(&sasegan(&["evaluate", "--clean", s(&clean), "--test", s(noisy), "--out-dir", s(&out_dir)]));
        manifest(&out_dir)["mean_ssnr_db"].parse::<f64>().unwrap()
    };
    assert!(mean_ssnr(&high.join("noisy"), "eh") > mean_ssnr(&low.join("noisy"), "el"));

    let partial = dir.path().join("partial");
    std::fs::create_dir(&partial).unwrap();
    std::fs::copy(low.join("noisy/utt0000.wav"), partial.join("utt0000.wav")).unwrap();
    std::fs::copy(low.join("noisy/utt0001.wav"), partial.join("utt0001.wav")).unwrap();
    let out = sasegan(&["evaluate", "--clean", s(&clean), "--test", s(&partial), "--out-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("utt0002"), "{}", stderr(&out));
}

#[test]
fn enhance_preserves_length_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let ckpt = tiny_checkpoint(&dir.path().join("run"), "32", &[]);
    let input = dir.path().join("in.wav");
    let x: Vec<f64> = (0..5000).map(|t| 0.3 * (t as f64 * 0.02).sin()).collect();
    write_wav(&input, &AudioBuffer::from_samples(x).unwrap()).unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for d in [&a, &b] {
        ok(&sasegan(&["enhance", "--checkpoint", s(&ckpt), "--seed", "4", "--serial", "--out-dir", s(d), s(&input)]));
    }
    let ya = std::fs::read(a.join("in.wav")).unwrap();
    assert_eq!(ya, std::fs::read(b.join("in.wav")).unwrap());
    let y = read_wav(a.join("in.wav")).unwrap();
    assert_eq!(y.len(), 5000);
    assert!(y.samples().iter().all(|v| v.is_finite()));
    assert_eq!(manifest(&a)["artifact.in"], s(&a.join("in.wav")));

    let out = sasegan(&[
        "enhance", "--checkpoint", s(&ckpt), "--scale-divisor", "4", "--out-dir", s(&dir.path().join("c")), s(&input),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("scale_divisor"), "{}", stderr(&out));
}

#[test]
fn evaluate_averages_latest_checkpoints() {
    let dir = tempfile::tempdir().unwrap();
    let run = dir.path().join("run");
    ok(&sasegan(&[
        "train",
        "--synthetic",
        "1",
        "--scale-divisor",
        "32",
        "--steps",
        "6",
        "--checkpoint-every",
        "1",
        "--serial",
        "--out-dir",
        s(&run),
    ]));
    let data = dir.path().join("data");
    ok(&sasegan(&["synth-data", "--count", "2", "--len", "16000", "--out-dir", s(&data)]));
    let out_dir = dir.path().join("eval");
    ok(&sasegan(&[
        "evaluate",
        "--clean",
        s(&data.join("clean")),
        "--checkpoints",
        s(&run.join("checkpoints")),
        "--noisy",
        s(&data.join("noisy")),
        "--out-dir",
        s(&out_dir),
    ]));
    let reports = std::fs::read_dir(&out_dir)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().starts_with("report_"))
        .count();
    assert_eq!(reports, 5);
    assert!(manifest(&out_dir)["mean_stoi"].parse::<f64>().unwrap() >= 0.0);
}

#[test]
fn attention_dump_rows_are_distributions() {
    let dir = tempfile::tempdir().unwrap();
    // Full-length windows with narrow deep layers keep this cheap while
    // layer 3 still sees 2048 steps and 512 pooled keys.
    let cfg = dir.path().join("narrow.cfg");
    std::fs::write(&cfg, "filter_schedule=16,32,32,8,8,8,8,8,8,8,8\nattention_layers=3\n").unwrap();
    let run = dir.path().join("run");
    ok(&sasegan(&[
        "train", "--synthetic", "1", "--config", s(&cfg), "--steps", "1", "--serial", "--out-dir", s(&run),
    ]));
    let ckpt = manifest(&run)["artifact.final_checkpoint"].clone();
    let input = dir.path().join("x.wav");
    let x: Vec<f64> = (0..20_000).map(|t| 0.4 * (t as f64 * 0.031).sin() * (t as f64 * 0.0007).cos()).collect();
    write_wav(&input, &AudioBuffer::from_samples(x).unwrap()).unwrap();
    let out_dir = dir.path().join("dump");
    ok(&sasegan(&[
        "attention-dump", "--checkpoint", &ckpt, "--input", s(&input), "--layer", "3", "--rows", "0,1000", "--out-dir",
        s(&out_dir),
    ]));
    let csv = std::fs::read_to_string(out_dir.join("attention_l3.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("layer,row_index,key_index,weight"));
    let mut rows: BTreeMap<usize, Vec<f64>> = BTreeMap::new();
    for l in lines {
        let f: Vec<&str> = l.split(',').collect();
        assert_eq!(f[0], "3");
        rows.entry(f[1].parse().unwrap()).or_default().push(f[3].parse().unwrap());
    }
    assert_eq!(rows.len(), 2);
    for w in rows.values() {
        assert_eq!(w.len(), 512);
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-6);
    }

    let out = sasegan(&[
        "attention-dump", "--checkpoint", &ckpt, "--input", s(&input), "--layer", "5", "--out-dir", s(&out_dir),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("no attention"), "{}", stderr(&out));
}

#[test]
fn mem_profile_table() {
    let dir = tempfile::tempdir().unwrap();
    let out = sasegan(&["mem-profile", "--out-dir", s(dir.path())]);
    ok(&out);
    let csv = std::fs::read_to_string(dir.path().join("footprint.csv")).unwrap();
    let rows: Vec<Vec<usize>> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 11);
    assert_eq!(rows[10][2], 64);
    assert_eq!(rows[2][3], 512);
    for w in rows.windows(2) {
        assert_eq!(w[0][2], 4 * w[1][2]);
    }
    assert!(String::from_utf8_lossy(&out.stdout).contains("raw_map_elems"));
    assert_eq!(manifest(dir.path())["command"], "mem-profile");

    let out = sasegan(&["mem-profile", "--layers", "3,12", "--out-dir", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn stoi_agrees_with_reference_implementation() {
    // pystoi 0.4.1 on the same WAV files (synth-data --seed 9 --count 4
    // --snrs 20,10,0,-10 --len 48000). Our resampler is an approximation
    // of the reference one, hence the tolerance.
    const REFERENCE: [(&str, f64); 4] =
        [("utt0000", 0.520227), ("utt0001", 0.253563), ("utt0002", 0.316511), ("utt0003", 0.410523)];
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("data");
    ok(&sasegan(&[
        "synth-data", "--seed", "9", "--count", "4", "--snrs", "20,10,0,-10", "--len", "48000", "--out-dir", s(&data),
    ]));
    let out_dir = dir.path().join("eval");
    ok(&sasegan(&[
        "evaluate", "--clean", s(&data.join("clean")), "--test", s(&data.join("noisy")), "--out-dir", s(&out_dir),
    ]));
    let report = std::fs::read_to_string(out_dir.join("report.csv")).unwrap();
    for (id, want) in REFERENCE {
        let line = report.lines().find(|l| l.starts_with(id)).unwrap();
        let got: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!((got - want).abs() < 0.01, "{id}: {got} vs {want}");
    }
}
