use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use log::info;

use tabsynth::data::{
    apply_overrides, infer_schema, load_csv, ColumnOverride, CsvOptions, OverrideDocument, Schema,
};
use tabsynth::evaluate::{EvaluateOptions, EvaluationReport};
use tabsynth::gan::{FixedCondition, Synthesizer, TrainConfig};
use tabsynth::workspace::Workspace;

const EXIT_INPUT: u8 = 2;
const EXIT_TRAINING: u8 = 3;

#[derive(Parser)]
#[command(name = "tabsynth", version, about = "Train a tabular GAN, synthesize rows and evaluate them")]
struct Cli {
    /// Workspace directory holding datasets, models, synthetic tables and reports.
    #[arg(long, global = true, default_value = "tabsynth-workspace")]
    workspace: PathBuf,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Infer column kinds for a CSV file and write the schema.
    Schema {
        csv: PathBuf,
        /// JSON document of per-column overrides.
        #[arg(long)]
        overrides: Option<PathBuf>,
        /// Output path; defaults to `<csv>.schema.json`.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a synthesizer and store it in the workspace.
    Train(TrainArgs),
    /// Generate rows from a trained model.
    Generate {
        /// Model id in the workspace, or a bundle directory.
        model: String,
        #[arg(long)]
        rows: usize,
        /// Fix a column to one class, as `column=value`.
        #[arg(long)]
        condition: Option<FixedCondition>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Also write the CSV here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compare a synthetic table with the real one and store the report.
    Evaluate(EvaluateArgs),
    /// Print a stored report.
    Report {
        /// Report id in the workspace, or a report JSON file.
        report: String,
        /// Print the full JSON document instead of the summary.
        #[arg(long)]
        json: bool,
    },
}

#[derive(Args)]
struct TrainArgs {
    csv: PathBuf,
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Categorical column to predict; enables the auxiliary classifier.
    #[arg(long)]
    target: Option<String>,
    /// JSON training configuration; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    no_classifier: bool,
    #[arg(long)]
    no_info_loss: bool,
    /// Min-max scaling in place of mode-specific normalization.
    #[arg(long)]
    no_vgm: bool,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long)]
    real: PathBuf,
    #[arg(long)]
    synthetic: PathBuf,
    #[arg(long)]
    schema: Option<PathBuf>,
    /// Categorical target for the utility block; defaults to the schema's target.
    #[arg(long)]
    target: Option<String>,
    /// Fail unless a utility block can be computed.
    #[arg(long)]
    utility: bool,
    /// Held-out real rows for utility scoring.
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Rows per set used for the privacy distances.
    #[arg(long, default_value_t = 5000)]
    privacy_sample: usize,
    #[arg(long)]
    no_privacy: bool,
    /// Also write the report JSON here.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn read_schema(path: Option<&Path>, csv: &Path, table: &tabsynth::data::Table) -> anyhow::Result<Schema> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
            let schema = Schema::from_json(&text)?;
            schema.check_table(table)?;
            Ok(schema)
        }
        None => {
            info!("inferring schema for {}", csv.display());
            Ok(infer_schema(table)?)
        }
    }
}

fn cmd_schema(csv: &Path, overrides: Option<&Path>, out: Option<&Path>) -> anyhow::Result<()> {
    let table = load_csv(csv, &CsvOptions::default())?;
    let mut schema = infer_schema(&table)?;
    if let Some(p) = overrides {
        let text = fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
        schema = apply_overrides(&schema, &OverrideDocument::from_json(&text)?.overrides)?;
    }
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| {
        let mut p = csv.as_os_str().to_owned();
        p.push(".schema.json");
        PathBuf::from(p)
    });
    fs::write(&out, schema.to_json()?).with_context(|| format!("writing {}", out.display()))?;
    print!("{}", schema.listing());
    println!("schema written to {}", out.display());
    Ok(())
}

fn cmd_train(ws: &Workspace, args: &TrainArgs) -> anyhow::Result<()> {
    let bytes = fs::read(&args.csv).with_context(|| format!("reading {}", args.csv.display()))?;
    let name = args.csv.file_name().map_or("data.csv".into(), |n| n.to_string_lossy().into_owned());
    let (dataset, inferred) = ws.add_dataset(&name, &bytes)?;
    let (table, _) = ws.load_dataset(&dataset.id)?;
    let mut schema = match &args.schema {
        Some(_) => read_schema(args.schema.as_deref(), &args.csv, &table)?,
        None => inferred,
    };
    if let Some(target) = &args.target {
        let overrides: Vec<ColumnOverride> = schema
            .columns()
            .iter()
            .map(|c| ColumnOverride {
                column: c.name.clone(),
                target: Some(&c.name == target),
                ..ColumnOverride::default()
            })
            .collect();
        if schema.column(target).is_none() {
            bail!(tabsynth::Error::UnknownColumn(target.clone()));
        }
        schema = apply_overrides(&schema, &overrides)?;
    }
    ws.save_schema(&dataset.id, &schema)?;

    let mut config: TrainConfig = match &args.config {
        Some(p) => serde_json::from_str(&fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?)
            .with_context(|| format!("parsing {}", p.display()))?,
        None => TrainConfig::default(),
    };
    if let Some(e) = args.epochs {
        config.epochs = e;
    }
    if let Some(b) = args.batch_size {
        config.batch_size = b;
    }
    if let Some(s) = args.seed {
        config.seed = s;
    }
    config.classifier_on &= !args.no_classifier;
    config.info_loss_on &= !args.no_info_loss;
    config.vgm_on &= !args.no_vgm;

    let total = config.epochs;
    let model = Synthesizer::fit_with_progress(&table, &schema, &config, |r| {
        info!("epoch {}/{}: d {:.4} g {:.4}", r.epoch, total, r.d_loss, r.g_adv);
    })?;
    let entry = ws.add_model(&dataset.id, &model)?;
    println!("dataset {}", dataset.id);
    println!("model {}", entry.id);
    println!("bundle {}", ws.model_dir(&entry.id).display());
    Ok(())
}

fn cmd_generate(
    ws: &Workspace,
    model: &str,
    rows: usize,
    condition: Option<&FixedCondition>,
    seed: u64,
    out: Option<&Path>,
) -> anyhow::Result<()> {
    if rows == 0 {
        bail!(tabsynth::Error::InvalidArgument("--rows must be positive".into()));
    }
    let dir = Path::new(model);
    let (synth, id) = if dir.is_dir() {
        (Synthesizer::load(dir)?, None)
    } else {
        (ws.load_model(model)?, Some(model))
    };
    let table = synth.synthesize(rows, condition, seed)?;
    if let Some(id) = id {
        let entry = ws.add_synthetic(id, &table, seed, condition.map(|c| c.to_string()))?;
        println!("synthetic {}", entry.id);
        println!("csv {}", ws.synthetic_path(&entry.id).display());
    }
    if let Some(out) = out {
        table.save_csv(out)?;
        println!("wrote {} rows to {}", table.n_rows(), out.display());
    }
    Ok(())
}

fn cmd_evaluate(ws: &Workspace, args: &EvaluateArgs) -> anyhow::Result<()> {
    let real = load_csv(&args.real, &CsvOptions::default())?;
    let synth = load_csv(&args.synthetic, &CsvOptions::default())?;
    let schema = read_schema(args.schema.as_deref(), &args.real, &real)?;
    let test = args.test.as_ref().map(|p| load_csv(p, &CsvOptions::default())).transpose()?;
    let target = args.target.clone().or_else(|| schema.target().map(|t| t.name.clone()));
    if args.utility && target.is_none() {
        bail!(tabsynth::Error::InvalidTarget(
            "utility requested but no target column is given or marked in the schema".into()
        ));
    }
    let options = EvaluateOptions {
        target,
        real_test: test.as_ref(),
        seed: args.seed,
        privacy_sample: Some(args.privacy_sample),
        privacy: !args.no_privacy,
        ..EvaluateOptions::default()
    };
    let report = EvaluationReport::compute(&real, &synth, &schema, &options)?;
    let entry = ws.add_report(&report, None, None)?;
    print!("{}", report.summary());
    println!("report {}", entry.id);
    if let Some(out) = &args.out {
        fs::write(out, report.to_json()?).with_context(|| format!("writing {}", out.display()))?;
    }
    Ok(())
}

fn cmd_report(ws: &Workspace, report: &str, json: bool) -> anyhow::Result<()> {
    let path = Path::new(report);
    let r = if path.is_file() {
        EvaluationReport::from_json(&fs::read_to_string(path)?)?
    } else {
        ws.load_report(report)?
    };
    if json {
        println!("{}", r.to_json()?);
    } else {
        print!("{}", r.summary());
    }
    Ok(())
}

fn run(cli: Cli) -> anyhow::Result<()> {
    if let Command::Schema { csv, overrides, out } = &cli.command {
        return cmd_schema(csv, overrides.as_deref(), out.as_deref());
    }
    let ws = Workspace::open(&cli.workspace)
        .map_err(|e| anyhow!(e).context(format!("opening workspace {}", cli.workspace.display())))?;
    match &cli.command {
        Command::Schema { .. } => unreachable!(),
        Command::Train(args) => cmd_train(&ws, args),
        Command::Generate {
            model,
            rows,
            condition,
            seed,
            out,
        } => cmd_generate(&ws, model, *rows, condition.as_ref(), *seed, out.as_deref()),
        Command::Evaluate(args) => cmd_evaluate(&ws, args),
        Command::Report { report, json } => cmd_report(&ws, report, *json),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    match err.downcast_ref::<tabsynth::Error>() {
        Some(e) if e.is_training_failure() => EXIT_TRAINING,
        _ => EXIT_INPUT,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
