//! `innerspeech`: experiment runner for inner-speech EEG classification.
//!
//! Exit codes: 0 ok, 2 configuration error, 3 data error, 4 numeric failure.

use std::fmt::Write as _;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Args, Parser, Subcommand};
use innerspeech::data::{diagnose, save_epochset, split_rest_action, DataError};
use innerspeech::eval::{emit_report, EvalReport};
use innerspeech::features::FeatureMatrix;
use innerspeech::neural::InputKind;
use innerspeech::pipeline::{
    load_subjects, preprocess, preset, run, subject_features, train_models, Classifier, DatasetSource, EvalScheme,
    FailureKind, HyperOverride, PipelineConfig, PipelineError, Task, PRESETS,
};
use innerspeech::synth::{default_4class_spec, generate, generate_trials, SynthError, SynthSpec};

#[derive(Parser)]
#[command(name = "innerspeech", version, about = "Inner-speech EEG classification experiments")]
struct Cli {
    /// Worker threads for subjects and outer folds (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Log progress to stderr (repeat for more detail).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check stored epoch sets: header/tensor consistency, class balance, dead channels.
    Validate {
        #[arg(required = true)]
        paths: Vec<PathBuf>,
    },
    /// Write a synthetic epoch set with known class signatures.
    Synth {
        /// Output base path; `.json` and `.f32` are appended.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10.0)]
        snr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Generator spec as JSON instead of the four-class default.
        #[arg(long, conflicts_with_all = ["snr", "seed"])]
        spec: Option<PathBuf>,
        /// Trials per class.
        #[arg(long)]
        trials: Option<usize>,
        /// Prepend this many seconds of rest to every trial and store rest and action epochs.
        #[arg(long)]
        rest_s: Option<f64>,
    },
    /// Load and preprocess each subject, writing the filtered epochs.
    Preprocess {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write each subject's band-power feature table as CSV.
    Featurize {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit the configured model on all epochs of each subject.
    Train {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Cross-validate and write the report to the output directory.
    Eval {
        #[command(flatten)]
        run: RunArgs,
    },
    /// Re-render the CSV and SVG files from a stored report.json.
    Report {
        /// Directory holding report.json.
        #[arg(long)]
        from: PathBuf,
        /// Destination directory (default: the source directory).
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct RunArgs {
    /// Named preset; see --list-presets.
    #[arg(long, conflicts_with = "config")]
    preset: Option<String>,
    /// Configuration JSON file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Print preset names and exit.
    #[arg(long)]
    list_presets: bool,
    /// Print the resolved configuration and exit.
    #[arg(long)]
    print_config: bool,
    /// Epoch set base paths, one per subject.
    #[arg(long, num_args = 1.., conflicts_with = "synth_snr")]
    data: Vec<PathBuf>,
    /// Use the four-class synthetic set at this SNR.
    #[arg(long)]
    synth_snr: Option<f64>,
    #[arg(long, requires = "synth_snr")]
    synth_seed: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(short, long)]
    output: Option<PathBuf>,
    #[arg(long, value_parser = parse_classifier)]
    classifier: Option<Classifier>,
    #[arg(long, value_parser = parse_input)]
    input: Option<InputKind>,
    #[arg(long, value_parser = parse_task)]
    task: Option<Task>,
    /// Preprocessing profile, or `none` to use epochs as stored.
    #[arg(long)]
    profile: Option<String>,
    #[arg(long, conflicts_with = "nested")]
    kfold: Option<usize>,
    /// Outer and inner fold counts, e.g. `4,3`.
    #[arg(long, value_parser = parse_pair)]
    nested: Option<(usize, usize)>,
    /// Plain (unstratified) fold assignment.
    #[arg(long)]
    no_stratify: bool,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    max_epochs: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    svm_c: Option<f64>,
    #[arg(long)]
    gbt_rounds: Option<usize>,
}

fn parse_classifier(s: &str) -> std::result::Result<Classifier, String> {
    serde_json::from_value(serde_json::Value::String(s.to_lowercase())).map_err(|e| e.to_string())
}

fn parse_input(s: &str) -> std::result::Result<InputKind, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_"))).map_err(|e| e.to_string())
}

fn parse_task(s: &str) -> std::result::Result<Task, String> {
    serde_json::from_value(serde_json::Value::String(s.replace('-', "_"))).map_err(|e| e.to_string())
}

fn parse_pair(s: &str) -> std::result::Result<(usize, usize), String> {
    let (a, b) = s.split_once(',').ok_or("expected OUTER,INNER")?;
    let n = |x: &str| x.trim().parse::<usize>().map_err(|e| e.to_string());
    Ok((n(a)?, n(b)?))
}

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    PipelineError::ConfigInvalid(msg.into()).into()
}

impl RunArgs {
    fn resolve(&self) -> Result<PipelineConfig> {
        let mut c = match (&self.preset, &self.config) {
            (Some(name), _) => preset(name)
                .ok_or_else(|| config_error(format!("unknown preset {name:?}; known: {}", PRESETS.join(", "))))?,
            (None, Some(path)) => {
                let text = fs::read_to_string(path).map_err(|e| config_error(format!("{}: {e}", path.display())))?;
                PipelineConfig::from_json(&text)?
            }
            (None, None) => return Err(config_error("one of --preset or --config is required")),
        };
        if !self.data.is_empty() {
            c.dataset = DatasetSource::Files { paths: self.data.clone() };
        }
        if let Some(snr) = self.synth_snr {
            c.dataset = DatasetSource::SynthDefault { snr, seed: self.synth_seed.unwrap_or(0) };
        }
        if let Some(s) = self.seed {
            c.seed = s;
        }
        if let Some(o) = &self.output {
            c.output_dir = o.clone();
        }
        if let Some(v) = self.classifier {
            c.classifier = v;
        }
        if let Some(v) = self.input {
            c.input = v;
        }
        if let Some(v) = self.task {
            c.task = v;
        }
        if let Some(p) = &self.profile {
            c.profile = (p != "none").then(|| p.clone());
        }
        if let Some(k) = self.kfold {
            c.eval = EvalScheme::Kfold { k };
            c.grid.clear();
        }
        if let Some((outer, inner)) = self.nested {
            c.eval = EvalScheme::Nested { outer, inner };
        }
        if self.no_stratify {
            c.stratified = false;
        }
        let o = HyperOverride {
            c: self.svm_c,
            n_rounds: self.gbt_rounds,
            learning_rate: self.learning_rate,
            hidden: self.hidden,
            ..HyperOverride::default()
        };
        c.hyper = o.apply(&c.hyper);
        if let Some(m) = self.max_epochs {
            c.hyper.train.max_epochs = m;
        }
        c.validate()?;
        Ok(c)
    }
}

fn exit_code(e: &anyhow::Error) -> u8 {
    for cause in e.chain() {
        if let Some(p) = cause.downcast_ref::<PipelineError>() {
            return match p.kind() {
                FailureKind::Config => 2,
                FailureKind::Data => 3,
                FailureKind::Numeric => 4,
            };
        }
        if cause.is::<DataError>() {
            return 3;
        }
        if let Some(s) = cause.downcast_ref::<SynthError>() {
            return if matches!(s, SynthError::Data(_)) { 3 } else { 2 };
        }
    }
    3
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.jobs {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: thread pool: {e}");
            return ExitCode::from(2);
        }
    }
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// Handles `--list-presets` and `--print-config`; true when the command should stop.
fn informational(args: &RunArgs) -> Result<bool> {
    if args.list_presets {
        for name in PRESETS {
            println!("{name}");
        }
        return Ok(true);
    }
    if args.print_config {
        println!("{}", args.resolve()?.to_json());
        return Ok(true);
    }
    Ok(false)
}

fn dispatch(command: Command) -> Result<u8> {
    match command {
        Command::Validate { paths } => {
            let mut failed = false;
            for p in &paths {
                let d = diagnose(p);
                if paths.len() > 1 {
                    println!("{}:", p.display());
                }
                print!("{}", d.render());
                failed |= !d.ok();
            }
            Ok(if failed { 3 } else { 0 })
        }
        Command::Synth { out, snr, seed, spec, trials, rest_s } => {
            let mut spec: SynthSpec = match spec {
                Some(path) => {
                    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
                    serde_json::from_str(&text).map_err(|e| config_error(format!("{}: {e}", path.display())))?
                }
                None => default_4class_spec(snr, seed),
            };
            if let Some(n) = trials {
                spec.n_trials_per_class = n;
            }
            let set = match rest_s {
                Some(r) => split_rest_action(&generate_trials(&spec, r)?, r, spec.duration_s)?,
                None => generate(&spec)?,
            };
            save_epochset(&set, &out)?;
            println!("wrote {} epochs to {}", set.len(), out.display());
            Ok(0)
        }
        Command::Preprocess { run: args, out } => {
            if informational(&args)? {
                return Ok(0);
            }
            let config = args.resolve()?;
            for (i, set) in load_subjects(&config)?.iter().enumerate() {
                let pre = preprocess(&config, set)?;
                let path = out.join(subject_file(&pre.subject_id, i));
                save_epochset(&pre, &path)?;
                println!("{}: {} epochs at {} Hz", path.display(), pre.len(), pre.sampling_rate_hz());
            }
            Ok(0)
        }
        Command::Featurize { run: args, out } => {
            if informational(&args)? {
                return Ok(0);
            }
            let config = args.resolve()?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            for (i, set) in load_subjects(&config)?.iter().enumerate() {
                let pre = preprocess(&config, set)?;
                let m = subject_features(&config, set.sampling_rate_hz(), &pre, i)?;
                let path = out.join(format!("{}.csv", subject_file(&pre.subject_id, i)));
                fs::write(&path, feature_csv(&m)).with_context(|| format!("writing {}", path.display()))?;
                println!("{}: {} epochs × {} features", path.display(), m.n_rows(), m.n_cols());
            }
            Ok(0)
        }
        Command::Train { run: args, out } => {
            if informational(&args)? {
                return Ok(0);
            }
            let config = args.resolve()?;
            fs::create_dir_all(&out).with_context(|| format!("creating {}", out.display()))?;
            for (i, t) in train_models(&config)?.iter().enumerate() {
                let path = out.join(format!("{}.model.json", subject_file(&t.subject, i)));
                let text = serde_json::to_string(t)?;
                fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
                println!("{}", path.display());
            }
            Ok(0)
        }
        Command::Eval { run: args } => {
            if informational(&args)? {
                return Ok(0);
            }
            let config = args.resolve()?;
            let out = run(&config)?;
            print!("{}", table(&out.report));
            for p in &out.written {
                log::info!("wrote {}", p.display());
            }
            println!("report written to {}", config.output_dir.display());
            Ok(0)
        }
        Command::Report { from, out } => {
            let path = from.join("report.json");
            let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
            let report: EvalReport = serde_json::from_str(&text)
                .map_err(|e| anyhow!(DataError::MalformedHeader(format!("{}: {e}", path.display()))))?;
            let dest = out.unwrap_or(from);
            emit_report(&report, &dest).map_err(PipelineError::from)?;
            print!("{}", table(&report));
            Ok(0)
        }
    }
}

fn subject_file(subject: &str, i: usize) -> String {
    let clean: String =
        subject.chars().map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '_' { c } else { '_' }).collect();
    if clean.is_empty() {
        format!("subject{}", i + 1)
    } else {
        clean
    }
}

fn feature_csv(m: &FeatureMatrix<f64>) -> String {
    let mut s = String::from("label");
    for p in m.provenance() {
        let _ = write!(s, ",{p}");
    }
    s.push('\n');
    for (row, label) in m.rows().zip(m.labels()) {
        let _ = write!(s, "{label}");
        for v in row {
            let _ = write!(s, ",{v:e}");
        }
        s.push('\n');
    }
    s
}

fn table(report: &EvalReport) -> String {
    let mut s = format!(
        "{} on {} ({} classes, chance {:.3})\n{:<16}{:>10}{:>11}{:>9}{:>9}\n",
        report.classifier, report.input_type, report.n_classes, report.chance_level, "subject", "accuracy", "precision", "recall", "f1"
    );
    for r in report.rows().iter().chain(std::iter::once(&report.average)) {
        let _ = writeln!(s, "{:<16}{:>10.4}{:>11.4}{:>9.4}{:>9.4}", r.subject, r.accuracy, r.precision, r.recall, r.f1);
    }
    s
}
