//! The `dexfm` command-line tool.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use dexfm_core::check::{check_model_gradients, corruption_target, tiny_batch, tiny_spec};
use dexfm_core::cv::{compare, cross_validate, feature_maps, CvReport};
use dexfm_core::data::{generate_synthetic, make_folds, SyntheticSpec};
use dexfm_core::gradcheck::GradCheckOptions;
use dexfm_core::training::train;
use dexfm_core::{EncodedInstance, FieldSchema, Record, TrainConfig, Variant, Vocabulary};

use crate::checkpoint::{content_digest, hex, Checkpoint};
use crate::config::{merge, RunConfig, Settings};
use crate::error::{read_bytes, write_file, Error, Result};
use crate::exec::Jobs;
use crate::formats::{self, LabelFormat};
use crate::report;

/// Largest acceptable relative gradient error per parameter group.
pub const GRADCHECK_THRESHOLD: f64 = 1e-4;
/// Factor applied to a backward rule by `gradcheck --corrupt`.
pub const CORRUPTION_SCALE: f64 = 1.1;

#[derive(Debug, Parser)]
#[command(name = "dexfm", version, args_override_self = true, about = "Train and evaluate a diversity-regularized CIN click-through-rate model")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train one model; writes model.ckpt, vocab.tsv, history.tsv and summary.txt
    Train(RunArgs),
    /// k-fold cross-validation; writes report.txt
    Cv(CvArgs),
    /// Cross-validation over a grid of one parameter; writes sweep.tsv
    Sweep(SweepArgs),
    /// Finite-difference check of every analytic gradient on a tiny model
    Gradcheck(GradcheckArgs),
    /// Synthetic planted-interaction data; writes data.tsv, schema.tsv and clean_labels.txt
    GenData(GenDataArgs),
    /// Hidden-layer feature maps of a trained model as delimited text
    ExportMaps(ExportArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    /// Config file of `key = value` lines, overridden by flags [default: none]
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[command(flatten)]
    pub settings: Settings,
}

#[derive(Debug, Clone, Args)]
pub struct CvArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Two variants, `a,b`, cross-validated on the same folds and compared with a paired t-test [default: none]
    #[arg(long)]
    pub compare: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Swept setting: depth-dein, maps, embed-dim, attention-hidden, lambda-d, lambda-n or lr [default: none, required]
    #[arg(long, required = true)]
    pub param: String,
    /// Grid as `start:end:step` or a comma list [default: none, required]
    #[arg(long, required = true)]
    pub grid: String,
}

#[derive(Debug, Clone, Args)]
pub struct GradcheckArgs {
    /// Seed of the random parameter point
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Coordinates probed per tensor
    #[arg(long, default_value_t = 200)]
    pub coords: usize,
    /// Test hook: scale one backward rule (dein, diversity, attention, mlp, embedding or output) [default: none]
    #[arg(long)]
    pub corrupt: Option<String>,
}

#[derive(Debug, Clone, Args)]
pub struct GenDataArgs {
    /// Number of records
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    /// Number of fields
    #[arg(long, default_value_t = 4)]
    pub m: usize,
    /// Tokens per field
    #[arg(long, default_value_t = 10)]
    pub cardinality: usize,
    /// Probability of flipping a label, below 1
    #[arg(long, default_value_t = 0.1)]
    pub noise: f64,
    /// Generator seed
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output directory
    #[arg(long, default_value = "synthetic")]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ExportArgs {
    /// Checkpoint written by `train` [default: none, required]
    #[arg(long, required = true)]
    pub checkpoint: PathBuf,
    /// Schema file the checkpoint was trained with [default: none, required]
    #[arg(long, required = true)]
    pub schema: PathBuf,
    /// Records to export [default: none, required]
    #[arg(long, required = true)]
    pub data: PathBuf,
    /// Vocabulary file [default: vocab.tsv next to the checkpoint]
    #[arg(long)]
    pub vocab: Option<PathBuf>,
    /// Comma list of 1-based hidden layers
    #[arg(long, default_value = "1")]
    pub layers: String,
    /// Label column format: binary or rating
    #[arg(long, default_value_t = LabelFormat::Binary)]
    pub labels: LabelFormat,
    /// Export only the first n records [default: all]
    #[arg(long)]
    pub limit: Option<usize>,
    /// Output file
    #[arg(long, default_value = "feature_maps.tsv")]
    pub out: PathBuf,
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit status.
pub fn run<I, T>(args: I) -> u8
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return u8::try_from(e.exit_code()).unwrap_or(2);
        }
    };
    match execute(&cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(command: &Command) -> Result<u8> {
    match command {
        Command::Train(a) => cmd_train(a),
        Command::Cv(a) => cmd_cv(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::GenData(a) => cmd_gen_data(a),
        Command::ExportMaps(a) => cmd_export_maps(a),
    }
}

fn resolve(args: &RunArgs) -> Result<(Settings, RunConfig)> {
    let settings = merge(&args.settings, args.config.as_deref())?;
    let config = RunConfig::resolve(&settings)?;
    Ok((settings, config))
}

fn jobs(n: usize) -> Result<Jobs> {
    Jobs::new(n).map_err(|e| Error::Usage(format!("cannot start {n} worker threads: {e}")))
}

struct Inputs {
    schema_bytes: Vec<u8>,
    schema: FieldSchema,
    records: Vec<Record>,
}

fn load_inputs(cfg: &RunConfig) -> Result<Inputs> {
    let schema_path = cfg.schema_path()?;
    let data_path = cfg.data_path()?;
    let schema_bytes = read_bytes(schema_path)?;
    let text = String::from_utf8(schema_bytes.clone()).map_err(|_| Error::parse(schema_path, 0, "not UTF-8"))?;
    let schema = formats::parse_schema(&text, schema_path)?;
    let records = formats::load_records(data_path, &schema, cfg.labels)?;
    Ok(Inputs {
        schema_bytes,
        schema,
        records,
    })
}

fn encode_all(vocab: &Vocabulary, schema: &FieldSchema, records: &[&Record]) -> Result<Vec<EncodedInstance>> {
    Ok(records.iter().map(|r| vocab.encode(r, schema)).collect::<Result<_, _>>()?)
}

/// Training and validation indices: the first of ten seeded folds is held
/// out, so a tenth of the records validate. Below ten records nothing is
/// held out.
pub fn holdout_split(n: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if n < 10 {
        return Ok(((0..n).collect(), Vec::new()));
    }
    let fold = make_folds(n, 10, seed)?.folds.swap_remove(0);
    let mut train: Vec<usize> = fold.train.into_iter().chain(fold.validation).collect();
    train.sort_unstable();
    Ok((train, fold.test))
}

fn cmd_train(args: &RunArgs) -> Result<u8> {
    let (_, cfg) = resolve(args)?;
    let inputs = load_inputs(&cfg)?;
    let (train_idx, val_idx) = holdout_split(inputs.records.len(), cfg.train.seed)?;
    let train_raw: Vec<&Record> = train_idx.iter().map(|&i| &inputs.records[i]).collect();
    let val_raw: Vec<&Record> = val_idx.iter().map(|&i| &inputs.records[i]).collect();
    let owned: Vec<Record> = train_raw.iter().map(|r| (*r).clone()).collect();
    let vocab = Vocabulary::build(&owned, &inputs.schema, cfg.min_freq)?;
    let vocab_text = formats::format_vocabulary(&vocab);
    let train_set = encode_all(&vocab, &inputs.schema, &train_raw)?;
    let val_set = encode_all(&vocab, &inputs.schema, &val_raw)?;

    let pool = jobs(cfg.jobs)?;
    let outcome = train(&cfg.arch.spec(vocab.field_sizes()), &train_set, &val_set, &cfg.train, &pool)?;
    let digest = content_digest(&inputs.schema_bytes, vocab_text.as_bytes());
    let epochs_run = outcome.epochs_run;
    let history = outcome.history.clone();
    let ckpt = Checkpoint {
        digest,
        config: cfg.train.clone(),
        model: outcome.model,
        adam: outcome.adam,
        epoch: epochs_run,
    };
    write_file(&cfg.out.join("vocab.tsv"), &vocab_text)?;
    ckpt.save(&cfg.out.join("model.ckpt"))?;
    write_file(&cfg.out.join("history.tsv"), report::history_tsv(&history))?;
    let summary = report::train_summary(
        &history,
        &[
            ("variant", cfg.train.variant.to_string()),
            ("seed", cfg.train.seed.to_string()),
            ("train_records", train_set.len().to_string()),
            ("validation_records", val_set.len().to_string()),
            ("parameters", ckpt.model.params.count().to_string()),
            ("digest", hex(&digest)),
        ],
    );
    write_file(&cfg.out.join("summary.txt"), &summary)?;
    if let Some(last) = history.epochs.last() {
        println!(
            "trained {} epochs: train loss {} validation logloss {} auc {}",
            epochs_run,
            last.train.total,
            last.val_logloss.map_or("NA".into(), |v| format!("{v:.5}")),
            last.val_auc.map_or("NA".into(), |v| format!("{v:.5}")),
        );
    }
    Ok(0)
}

fn parse_variants(spec: &str) -> Result<(Variant, Variant)> {
    let parts: Vec<&str> = spec.split(',').map(str::trim).collect();
    let [a, b] = parts[..] else {
        return Err(Error::Usage(format!("--compare takes two variants `a,b`, got `{spec}`")));
    };
    let parse = |s: &str| s.parse::<Variant>().map_err(Error::from);
    Ok((parse(a)?, parse(b)?))
}

fn run_cv(inputs: &Inputs, cfg: &RunConfig, train_cfg: &TrainConfig, pool: &Jobs) -> Result<CvReport> {
    let plan = make_folds(inputs.records.len(), cfg.folds, cfg.train.seed)?;
    Ok(cross_validate(
        &inputs.records,
        &inputs.schema,
        &plan,
        &cfg.arch,
        train_cfg,
        cfg.min_freq,
        pool,
    )?)
}

fn cmd_cv(args: &CvArgs) -> Result<u8> {
    let (_, cfg) = resolve(&args.run)?;
    let pair = args.compare.as_deref().map(parse_variants).transpose()?;
    if let Some((a, b)) = pair {
        for v in [a, b] {
            RunConfig::resolve(&Settings {
                variant: Some(v),
                ..merge(&args.run.settings, args.run.config.as_deref())?
            })?;
        }
    }
    let inputs = load_inputs(&cfg)?;
    let pool = jobs(cfg.jobs)?;
    let variants = pair.map_or_else(|| vec![cfg.train.variant], |(a, b)| vec![a, b]);
    let mut reports = Vec::new();
    for v in variants {
        let tc = TrainConfig {
            variant: v,
            ..cfg.train.clone()
        };
        let r = run_cv(&inputs, &cfg, &tc, &pool)?;
        println!("{v}: mean auc {:.5} (sd {:.5}) mean logloss {:.5}", r.mean_auc(), r.sd_auc(), r.mean_logloss());
        reports.push(r);
    }
    let comparison = (reports.len() == 2).then(|| compare(&reports[0], &reports[1], cfg.alpha));
    if let Some(c) = &comparison {
        match &c.auc_test {
            Ok(t) => println!("paired t-test on auc: t {:.4} p {:.4}", t.t, t.p_value),
            Err(e) => println!("paired t-test on auc unavailable: {e}"),
        }
    }
    let text = report::metrics_report(&reports, comparison.as_ref().map(|c| (c, cfg.alpha)));
    write_file(&cfg.out.join("report.txt"), text)?;
    Ok(0)
}

const SWEEPABLE: [(&str, bool); 7] = [
    ("depth-dein", true),
    ("maps", true),
    ("embed-dim", true),
    ("attention-hidden", true),
    ("lambda-d", false),
    ("lambda-n", false),
    ("lr", false),
];

fn decimals(s: &str) -> usize {
    s.split_once('.').map_or(0, |(_, f)| f.trim_end_matches(|c: char| !c.is_ascii_digit()).len())
}

/// Grid values as flag strings. `start:end:step` includes `end` when the
/// steps land on it; values are rounded to the inputs' decimal places so
/// that `0.1:0.9:0.2` yields exactly `0.1, 0.3, 0.5, 0.7, 0.9`.
pub fn parse_grid(grid: &str, integer: bool) -> Result<Vec<String>> {
    let bad = |m: &str| Error::Usage(format!("invalid grid `{grid}`: {m}"));
    let grid = grid.trim();
    if grid.is_empty() {
        return Err(bad("empty"));
    }
    let values: Vec<String> = if let [a, b, c] = grid.split(':').collect::<Vec<_>>()[..] {
        let num = |s: &str| s.trim().parse::<f64>().map_err(|_| bad("not a number"));
        let (start, end, step) = (num(a)?, num(b)?, num(c)?);
        if step.is_nan() || step <= 0.0 || !start.is_finite() || !end.is_finite() || end < start {
            return Err(bad("need start <= end and a positive step"));
        }
        let places = decimals(a).max(decimals(b)).max(decimals(c));
        let count = ((end - start) / step + 1e-9).floor() as usize + 1;
        if count > 10_000 {
            return Err(bad("too many points"));
        }
        (0..count)
            .map(|i| {
                let v = start + i as f64 * step;
                let s = format!("{v:.places$}");
                s.parse::<f64>().unwrap().to_string()
            })
            .collect()
    } else if !grid.contains(':') {
        grid.split(',').map(|s| s.trim().to_string()).collect()
    } else {
        return Err(bad("expected start:end:step"));
    };
    for v in &values {
        let ok = if integer {
            v.parse::<usize>().is_ok()
        } else {
            v.parse::<f64>().is_ok_and(f64::is_finite)
        };
        if !ok {
            return Err(bad(&format!("`{v}` is not a valid value")));
        }
    }
    Ok(values)
}

fn cmd_sweep(args: &SweepArgs) -> Result<u8> {
    let param = args.param.replace('_', "-");
    let &(_, integer) = SWEEPABLE
        .iter()
        .find(|(k, _)| *k == param)
        .ok_or_else(|| Error::Usage(format!("cannot sweep `{}`", args.param)))?;
    let grid = parse_grid(&args.grid, integer)?;
    let (base, cfg) = resolve(&args.run)?;
    let configs = grid
        .iter()
        .map(|v| {
            let mut s = base.clone();
            s.set(&param, v).map_err(Error::Usage)?;
            RunConfig::resolve(&s)
        })
        .collect::<Result<Vec<_>>>()?;
    let inputs = load_inputs(&cfg)?;
    let pool = jobs(cfg.jobs)?;
    let results = dexfm_core::training::Executor::map(&pool, configs.len(), |i| {
        run_cv(&inputs, &configs[i], &configs[i].train, &pool)
    });
    let mut rows = Vec::new();
    for (value, r) in grid.into_iter().zip(results) {
        let r = r?;
        println!("{param}={value}: mean auc {:.5} mean logloss {:.5}", r.mean_auc(), r.mean_logloss());
        rows.push((value, r));
    }
    write_file(&cfg.out.join("sweep.tsv"), report::sweep_tsv(&param, &rows))?;
    Ok(0)
}

fn cmd_gradcheck(args: &GradcheckArgs) -> Result<u8> {
    let fault = match &args.corrupt {
        Some(t) => Some((
            corruption_target(t).ok_or_else(|| Error::Usage(format!("unknown corruption target `{t}`")))?,
            CORRUPTION_SCALE,
        )),
        None => None,
    };
    let opts = GradCheckOptions {
        seed: args.seed,
        max_coords: args.coords,
        ..GradCheckOptions::default()
    };
    let report = check_model_gradients(&tiny_spec(), &tiny_batch(), &TrainConfig::default(), opts, fault)?;
    println!("group\tmax_rel_error\tcoords");
    for g in &report.groups {
        let verdict = if g.max_rel_error <= GRADCHECK_THRESHOLD { "ok" } else { "FAIL" };
        println!("{}\t{:e}\t{}\t{verdict}", g.group.name(), g.max_rel_error, g.coords);
    }
    println!("max\t{:e}", report.max_rel_error);
    Ok(u8::from(report.max_rel_error > GRADCHECK_THRESHOLD))
}

fn cmd_gen_data(args: &GenDataArgs) -> Result<u8> {
    let spec = SyntheticSpec {
        cardinalities: vec![args.cardinality; args.m],
        noise_rate: args.noise,
        n: args.n,
        seed: args.seed,
        ..SyntheticSpec::default()
    };
    let ds = generate_synthetic(&spec).map_err(|e| Error::Usage(e.to_string()))?;
    write_file(&args.out.join("data.tsv"), formats::format_records(&ds.records))?;
    write_file(&args.out.join("schema.tsv"), formats::format_schema(&ds.schema))?;
    let clean: String = ds.clean_labels.iter().map(|l| format!("{l}\n")).collect();
    write_file(&args.out.join("clean_labels.txt"), clean)?;
    println!("wrote {} records ({} labels flipped) to {}", ds.records.len(), ds.flipped(), args.out.display());
    Ok(0)
}

pub fn parse_layers(s: &str) -> Result<Vec<usize>> {
    s.split(',')
        .map(|x| {
            x.trim()
                .parse::<usize>()
                .map_err(|_| Error::Usage(format!("invalid layer `{x}`")))
        })
        .collect()
}

fn default_vocab(checkpoint: &Path) -> PathBuf {
    checkpoint.with_file_name("vocab.tsv")
}

fn cmd_export_maps(args: &ExportArgs) -> Result<u8> {
    let layers = parse_layers(&args.layers)?;
    let vocab_path = args.vocab.clone().unwrap_or_else(|| default_vocab(&args.checkpoint));
    let schema_bytes = read_bytes(&args.schema)?;
    let vocab_bytes = read_bytes(&vocab_path)?;
    let ckpt = Checkpoint::load(&args.checkpoint, Some(&content_digest(&schema_bytes, &vocab_bytes)))?;
    let depth = ckpt.model.spec.dein.depth();
    if let Some(l) = layers.iter().find(|&&l| l == 0 || l > depth) {
        return Err(Error::Usage(format!("layer {l} out of range 1..={depth}")));
    }
    let schema = formats::parse_schema(&String::from_utf8_lossy(&schema_bytes), &args.schema)?;
    let vocab = formats::parse_vocabulary(&String::from_utf8_lossy(&vocab_bytes), &schema, &vocab_path)?;
    let mut records = formats::load_records(&args.data, &schema, args.labels)?;
    if let Some(n) = args.limit {
        records.truncate(n);
    }
    let refs: Vec<&Record> = records.iter().collect();
    let insts = encode_all(&vocab, &schema, &refs)?;
    let rows = feature_maps(&ckpt.model, &insts, &layers)?;
    write_file(&args.out, report::feature_map_tsv(&rows))?;
    println!("wrote {} feature maps of {} records to {}", rows.len(), insts.len(), args.out.display());
    Ok(0)
}
