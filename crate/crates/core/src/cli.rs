//! The `sasegan` command-line tool.
//!
//! Exit codes: 0 on success, 2 on usage, configuration, data or checkpoint
//! errors, 3 when training diverges. Every command finishes by writing a
//! flat `key=value` manifest next to its outputs.

use std::ffi::OsString;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use chrono::{SecondsFormat, Utc};
use clap::{Args, Parser, Subcommand};

use crate::attention::{attn_footprint, write_attention_dump, DEFAULT_P, MAX_LAYER};
use crate::audio::{
    pair_files, preemphasize, read_wav, segment_for_inference, synth_dataset, write_pair_dir, write_wav, load_pair_dir,
    EMPHASIS_COEF, SAMPLE_RATE,
};
use crate::error::{Error, Result};
use crate::metrics::{evaluate_buffers, evaluate_corpus, MetricReport};
use crate::model::{enhance_utterance, parse_attention_layers, Generator, ModelConfig, DEFAULT_INPUT_LEN};
use crate::rng::{stream, Stream};
use crate::train::{check_config, load_checkpoint, save_checkpoint, train, TrainConfig, TrainState};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;

/// Checkpoints kept on disk, and averaged over by `evaluate --checkpoints`.
pub const KEEP_CHECKPOINTS: usize = 5;

#[derive(Parser, Debug)]
#[command(name = "sasegan", version, about = "Self-attention speech enhancement GAN")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a generator/discriminator pair.
    Train(TrainArgs),
    /// Enhance WAV files with a trained checkpoint.
    Enhance(EnhanceArgs),
    /// Score test audio against clean references (SSNR, STOI).
    Evaluate(EvaluateArgs),
    /// Dump encoder attention-map rows for one input.
    AttentionDump(DumpArgs),
    /// Tabulate attention memory footprints per layer.
    MemProfile(MemArgs),
    /// Write a seeded synthetic clean/noisy corpus.
    SynthData(SynthArgs),
}

#[derive(Args, Debug, Default)]
struct ModelFlags {
    /// Layers carrying attention: comma list, "all" (3..=11) or "none".
    #[arg(long)]
    attention_layers: Option<String>,
    /// Shrink window length and filter counts by this factor.
    #[arg(long)]
    scale_divisor: Option<usize>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Corpus directory holding clean/ and noisy/.
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    data: Option<PathBuf>,
    /// Train on this many synthetic utterances instead of a corpus.
    #[arg(long)]
    synthetic: Option<usize>,
    /// Length in samples of synthetic utterances (default: two windows).
    #[arg(long)]
    synth_len: Option<usize>,
    /// SNRs in dB cycled over synthetic utterances.
    #[arg(long, default_value = "5")]
    synth_snrs: String,
    #[command(flatten)]
    model: ModelFlags,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    /// Weight of the L1 term in the generator objective.
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Stop after this many updates regardless of --epochs.
    #[arg(long)]
    steps: Option<usize>,
    /// Write a checkpoint every this many updates (the final one is always written).
    #[arg(long, default_value_t = 100)]
    checkpoint_every: usize,
    /// key=value file; command-line flags take precedence over it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run per-example work on one thread.
    #[arg(long)]
    serial: bool,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct EnhanceArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    /// WAV files or directories of WAV files.
    #[arg(required = true)]
    inputs: Vec<PathBuf>,
    /// Seed for the latent draws.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Expected layout; a checkpoint built differently is rejected.
    #[command(flatten)]
    model: ModelFlags,
    #[arg(long)]
    serial: bool,
    #[arg(long)]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    /// Directory of clean references.
    #[arg(long)]
    clean: PathBuf,
    /// Directory of audio to score; repeat to average several runs.
    #[arg(long, required_unless_present = "checkpoints")]
    test: Vec<PathBuf>,
    /// Enhance --noisy with the latest checkpoints here and average their scores.
    #[arg(long, requires = "noisy", conflicts_with = "test")]
    checkpoints: Option<PathBuf>,
    #[arg(long)]
    noisy: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    serial: bool,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct DumpArgs {
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    input: PathBuf,
    /// Encoder layer whose attention map is dumped.
    #[arg(long)]
    layer: usize,
    /// Comma-separated query rows.
    #[arg(long, default_value = "0")]
    rows: String,
    /// Which inference window of the input to analyse.
    #[arg(long, default_value_t = 0)]
    segment: usize,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct MemArgs {
    #[arg(long, default_value_t = DEFAULT_INPUT_LEN)]
    input_len: usize,
    /// Key/value pooling factor.
    #[arg(long, default_value_t = DEFAULT_P)]
    p: usize,
    /// Layers to tabulate: comma list or "all" (1..=11).
    #[arg(long, default_value = "all")]
    layers: String,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    count: usize,
    /// SNRs in dB, cycled over utterances.
    #[arg(long, default_value = "0,5,10,15")]
    snrs: String,
    /// Utterance length in samples.
    #[arg(long, default_value_t = 32_768)]
    len: usize,
    #[arg(long)]
    out_dir: PathBuf,
}

/// Flat `key=value` record of one invocation.
struct Manifest {
    entries: Vec<(String, String)>,
}

impl Manifest {
    fn new(command: &str) -> Self {
        Self {
            entries: vec![
                ("command".into(), command.into()),
                ("version".into(), env!("CARGO_PKG_VERSION").into()),
                ("started".into(), now()),
            ],
        }
    }

    fn add(&mut self, key: impl Into<String>, value: impl ToString) {
        self.entries.push((key.into(), value.to_string()));
    }

    fn add_all(&mut self, prefix: &str, pairs: Vec<(String, String)>) {
        for (k, v) in pairs {
            self.add(format!("{prefix}{k}"), v);
        }
    }

    fn artifact(&mut self, name: &str, path: &Path) {
        self.add(format!("artifact.{name}"), path.display());
    }

    fn write(mut self, dir: &Path) -> Result<()> {
        self.add("finished", now());
        let mut text = String::new();
        for (k, v) in &self.entries {
            text.push_str(&format!("{k}={v}\n"));
        }
        let path = dir.join("manifest.txt");
        std::fs::write(&path, text).map_err(|e| Error::io(&path, e))
    }
}

fn now() -> String {
    Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

/// Parse a `key=value` file; blank lines and `#` comments are skipped.
fn read_config_file(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .map(str::trim)
        .enumerate()
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
        .map(|(n, l)| {
            l.split_once('=')
                .map(|(k, v)| (k.trim().to_owned(), v.trim().to_owned()))
                .ok_or_else(|| Error::InvalidConfig(format!("{}:{}: expected key=value", path.display(), n + 1)))
        })
        .collect()
}

fn apply_model_flags(cfg: &mut ModelConfig, flags: &ModelFlags) -> Result<()> {
    if let Some(layers) = &flags.attention_layers {
        cfg.attention_layers = parse_attention_layers(layers)?;
    }
    if let Some(d) = flags.scale_divisor {
        cfg.scale_divisor = d;
    }
    Ok(())
}

/// Defaults, then the config file, then flags.
fn resolve_train(args: &TrainArgs) -> Result<(ModelConfig, TrainConfig)> {
    let mut model = ModelConfig::default();
    let mut tcfg = TrainConfig::default();
    if let Some(path) = &args.config {
        for (k, v) in read_config_file(path)? {
            if !model.set(&k, &v)? && !tcfg.set(&k, &v)? {
                return Err(Error::InvalidConfig(format!("{}: unknown key `{k}`", path.display())));
            }
        }
    }
    apply_model_flags(&mut model, &args.model)?;
    let flags: [(&str, Option<String>); 6] = [
        ("epochs", args.epochs.map(|v| v.to_string())),
        ("batch_size", args.batch_size.map(|v| v.to_string())),
        ("lambda_l1", args.lambda.map(|v| v.to_string())),
        ("lr", args.lr.map(|v| v.to_string())),
        ("seed", args.seed.map(|v| v.to_string())),
        ("steps", args.steps.map(|v| v.to_string())),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            tcfg.set(k, &v)?;
        }
    }
    tcfg.parallel = !args.serial;
    model.validate()?;
    tcfg.validate()?;
    Ok((model, tcfg))
}

fn parse_list<T: std::str::FromStr>(what: &str, s: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse()
                .map_err(|_| Error::InvalidConfig(format!("{what}: cannot parse `{t}`")))
        })
        .collect()
}

fn checkpoint_name(step: usize) -> String {
    format!("ckpt_{step:08}.ckpt")
}

/// Checkpoint files in `dir`, oldest first.
fn list_checkpoints(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut found: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            p.file_name()
                .and_then(|n| n.to_str())
                .is_some_and(|n| n.starts_with("ckpt_") && n.ends_with(".ckpt"))
        })
        .collect();
    found.sort();
    Ok(found)
}

fn prune_checkpoints(dir: &Path) -> Result<()> {
    let all = list_checkpoints(dir)?;
    for old in &all[..all.len().saturating_sub(KEEP_CHECKPOINTS)] {
        std::fs::remove_file(old).map_err(|e| Error::io(old, e))?;
    }
    Ok(())
}

fn cmd_train(args: TrainArgs) -> Result<()> {
    let mut manifest = Manifest::new("train");
    let (model, tcfg) = resolve_train(&args)?;
    let dataset = match (&args.data, args.synthetic) {
        (Some(dir), _) => load_pair_dir(dir)?,
        (None, Some(0)) => return Err(Error::EmptyDataset),
        (None, Some(n)) => {
            let snrs = parse_list::<f64>("synth-snrs", &args.synth_snrs)?;
            let len = args.synth_len.unwrap_or(2 * model.window());
            synth_dataset(tcfg.seed, n, len, &snrs)
        }
        (None, None) => unreachable!("clap requires one data source"),
    };
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let ckpt_dir = args.out_dir.join("checkpoints");
    create_dir(&ckpt_dir)?;
    manifest.add("seed", tcfg.seed);
    manifest.add("serial", args.serial);
    manifest.add(
        "data",
        args.data
            .as_ref()
            .map_or_else(|| format!("synthetic:{}", dataset.len()), |d| d.display().to_string()),
    );
    manifest.add_all("model.", model.echo());
    manifest.add_all("train.", tcfg.echo());

    let mut state = TrainState::new(&model, tcfg)?;
    let every = args.checkpoint_every.max(1);
    let log = train(&mut state, &dataset, &mut |s, r| {
        if r.step % every == 0 {
            save_checkpoint(ckpt_dir.join(checkpoint_name(r.step)), s)?;
            prune_checkpoints(&ckpt_dir)?;
        }
        Ok(())
    })?;
    let last = ckpt_dir.join(checkpoint_name(state.step));
    if !last.exists() {
        save_checkpoint(&last, &state)?;
        prune_checkpoints(&ckpt_dir)?;
    }
    let log_path = args.out_dir.join("train_log.csv");
    log.write_csv(&log_path)?;
    manifest.add("steps_run", state.step);
    manifest.artifact("log", &log_path);
    manifest.artifact("final_checkpoint", &last);
    for (i, p) in list_checkpoints(&ckpt_dir)?.iter().enumerate() {
        manifest.artifact(&format!("checkpoint.{i}"), p);
    }
    manifest.write(&args.out_dir)
}

/// WAV paths named directly or found (sorted) in named directories.
fn expand_inputs(inputs: &[PathBuf]) -> Result<Vec<PathBuf>> {
    let mut out = Vec::new();
    for p in inputs {
        if p.is_dir() {
            let mut found: Vec<PathBuf> = std::fs::read_dir(p)
                .map_err(|e| Error::io(p, e))?
                .filter_map(|e| e.ok().map(|e| e.path()))
                .filter(|f| f.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")))
                .collect();
            found.sort();
            out.extend(found);
        } else {
            out.push(p.clone());
        }
    }
    Ok(out)
}

fn load_generator(path: &Path, flags: &ModelFlags) -> Result<Generator> {
    let state = load_checkpoint(path)?;
    let mut expected = state.model_config().clone();
    apply_model_flags(&mut expected, flags)?;
    check_config(state.model_config(), &expected)?;
    Ok(state.gen)
}

/// Enhance one file with latents from a stream restarted per file, so a
/// file's output does not depend on which other files were processed.
fn enhance_file(gen: &Generator, input: &Path, out: &Path, seed: u64, parallel: bool) -> Result<()> {
    let noisy = read_wav(input)?;
    let enhanced = enhance_utterance(gen, &noisy, &mut stream(seed, Stream::Latent), parallel)?;
    write_wav(out, &enhanced)
}

fn file_stem(path: &Path) -> Result<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_owned)
        .ok_or_else(|| Error::InvalidConfig(format!("cannot name output for {}", path.display())))
}

fn cmd_enhance(args: EnhanceArgs) -> Result<()> {
    let mut manifest = Manifest::new("enhance");
    let gen = load_generator(&args.checkpoint, &args.model)?;
    create_dir(&args.out_dir)?;
    manifest.add("seed", args.seed);
    manifest.add("checkpoint", args.checkpoint.display());
    manifest.add_all("model.", gen.config().echo());
    for input in expand_inputs(&args.inputs)? {
        let stem = file_stem(&input)?;
        let out = args.out_dir.join(format!("{stem}.wav"));
        enhance_file(&gen, &input, &out, args.seed, !args.serial).map_err(|e| Error::in_file(&stem, e))?;
        manifest.artifact(&stem, &out);
    }
    manifest.write(&args.out_dir)
}

fn print_mean(label: &str, ssnr: f64, stoi: f64) {
    println!("{label},{ssnr:.4},{stoi:.4}");
}

fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let mut manifest = Manifest::new("evaluate");
    create_dir(&args.out_dir)?;
    let parallel = !args.serial;
    let mut reports = Vec::new();
    if let Some(ckpt_dir) = &args.checkpoints {
        let noisy_dir = args.noisy.as_ref().expect("clap enforces --noisy");
        let pairs = pair_files(&args.clean, noisy_dir)?;
        let all = list_checkpoints(ckpt_dir)?;
        let latest = &all[all.len().saturating_sub(KEEP_CHECKPOINTS)..];
        if latest.is_empty() {
            return Err(Error::InvalidConfig(format!("no checkpoints in {}", ckpt_dir.display())));
        }
        manifest.add("seed", args.seed);
        for ckpt in latest {
            let gen = load_checkpoint(ckpt)?.gen;
            let items = pairs
                .iter()
                .map(|(id, c, n)| {
                    let clean = read_wav(c)?;
                    let noisy = read_wav(n)?;
                    let enh = enhance_utterance(&gen, &noisy, &mut stream(args.seed, Stream::Latent), parallel)?;
                    Ok((id.clone(), clean, enh))
                })
                .collect::<Result<Vec<_>>>()?;
            let name = file_stem(ckpt)?;
            let report = evaluate_buffers(&items, parallel)?;
            let path = args.out_dir.join(format!("report_{name}.csv"));
            report.write_csv(&path)?;
            manifest.artifact(&name, &path);
            reports.push(report);
        }
    } else {
        for (i, dir) in args.test.iter().enumerate() {
            let report = evaluate_corpus(&pair_files(&args.clean, dir)?, parallel)?;
            let path = if args.test.len() == 1 {
                args.out_dir.join("report.csv")
            } else {
                args.out_dir.join(format!("report_{i}.csv"))
            };
            report.write_csv(&path)?;
            manifest.add(format!("test.{i}"), dir.display());
            manifest.artifact(&format!("report.{i}"), &path);
            reports.push(report);
        }
    }
    manifest.add("clean", args.clean.display());
    let (ssnr, stoi) = MetricReport::average(&reports)?;
    manifest.add("mean_ssnr_db", format!("{ssnr:.4}"));
    manifest.add("mean_stoi", format!("{stoi:.4}"));
    manifest.write(&args.out_dir)?;
    println!("id,ssnr_db,stoi");
    print_mean("MEAN", ssnr, stoi);
    Ok(())
}

fn cmd_attention_dump(args: DumpArgs) -> Result<()> {
    let mut manifest = Manifest::new("attention-dump");
    let state = load_checkpoint(&args.checkpoint)?;
    let gen = state.gen;
    let rows = parse_list::<usize>("rows", &args.rows)?;
    let noisy = read_wav(&args.input)?;
    let windows = segment_for_inference(&preemphasize(&noisy, EMPHASIS_COEF), gen.config().window());
    let segment = windows.segments.get(args.segment).ok_or_else(|| {
        Error::InvalidConfig(format!(
            "segment {} requested, input has {}",
            args.segment,
            windows.segments.len()
        ))
    })?;
    let map = gen.encoder_attention_map(segment, args.layer)?;
    create_dir(&args.out_dir)?;
    let path = args.out_dir.join(format!("attention_l{}.csv", args.layer));
    let mut buf = Vec::new();
    write_attention_dump(&mut buf, args.layer, &map, &rows)?;
    std::fs::write(&path, buf).map_err(|e| Error::io(&path, e))?;
    manifest.add("checkpoint", args.checkpoint.display());
    manifest.add("input", args.input.display());
    manifest.add("layer", args.layer);
    manifest.add("rows", &args.rows);
    manifest.add("segment", args.segment);
    manifest.add("map_rows", map.len());
    manifest.add("map_keys", map.channels());
    manifest.artifact("dump", &path);
    manifest.write(&args.out_dir)
}

pub const FOOTPRINT_HEADER: &str = "layer,time_dim,raw_map_elems,pooled_keys,pooled_map_elems";

fn cmd_mem_profile(args: MemArgs) -> Result<()> {
    let mut manifest = Manifest::new("mem-profile");
    let layers: Vec<usize> = match args.layers.trim() {
        "all" => (1..=MAX_LAYER).collect(),
        list => parse_list("layers", list)?,
    };
    let rows = layers
        .iter()
        .map(|&l| attn_footprint(args.input_len, l, args.p))
        .collect::<Result<Vec<_>>>()?;
    create_dir(&args.out_dir)?;
    let mut csv = format!("{FOOTPRINT_HEADER}\n");
    let mut stdout = std::io::stdout().lock();
    let _ = writeln!(
        stdout,
        "{:>5} {:>9} {:>14} {:>11} {:>16}",
        "layer", "time_dim", "raw_map_elems", "pooled_keys", "pooled_map_elems"
    );
    for f in &rows {
        let _ = writeln!(
            stdout,
            "{:>5} {:>9} {:>14} {:>11} {:>16}",
            f.layer, f.time_dim, f.raw_map_elems, f.pooled_keys, f.pooled_map_elems
        );
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            f.layer, f.time_dim, f.raw_map_elems, f.pooled_keys, f.pooled_map_elems
        ));
    }
    let path = args.out_dir.join("footprint.csv");
    std::fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
    manifest.add("input_len", args.input_len);
    manifest.add("p", args.p);
    manifest.artifact("table", &path);
    manifest.write(&args.out_dir)
}

fn cmd_synth_data(args: SynthArgs) -> Result<()> {
    let mut manifest = Manifest::new("synth-data");
    if args.count == 0 || args.len == 0 {
        return Err(Error::InvalidConfig("count and len must be positive".into()));
    }
    let snrs = parse_list::<f64>("snrs", &args.snrs)?;
    if snrs.is_empty() || snrs.iter().any(|s| !s.is_finite()) {
        return Err(Error::InvalidConfig("snrs must be finite".into()));
    }
    let pairs = synth_dataset(args.seed, args.count, args.len, &snrs);
    write_pair_dir(&args.out_dir, &pairs)?;
    manifest.add("seed", args.seed);
    manifest.add("count", args.count);
    manifest.add("len", args.len);
    manifest.add("sample_rate", SAMPLE_RATE);
    for p in &pairs {
        manifest.add(format!("snr_db.{}", p.id), p.snr_db.map_or_else(|| "unknown".into(), |s| s.to_string()));
    }
    manifest.artifact("clean", &args.out_dir.join("clean"));
    manifest.artifact("noisy", &args.out_dir.join("noisy"));
    manifest.write(&args.out_dir)
}

fn exit_code(err: &Error) -> i32 {
    match err.root() {
        Error::DivergedLoss { .. } => EXIT_DIVERGED,
        _ => EXIT_ERROR,
    }
}

/// Parse `args` (program name first), run the command and return the exit
/// code. Errors are reported on standard error.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
        }
    };
    let result = match cli.command {
        Command::Train(a) => cmd_train(a),
        Command::Enhance(a) => cmd_enhance(a),
        Command::Evaluate(a) => cmd_evaluate(a),
        Command::AttentionDump(a) => cmd_attention_dump(a),
        Command::MemProfile(a) => cmd_mem_profile(a),
        Command::SynthData(a) => cmd_synth_data(a),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
