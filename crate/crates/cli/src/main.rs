//! `statetrack`: compile, run, demonstrate, generate, train, evaluate and
//! verify.

use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use statetrack_core::compile::{
    cascade_to_lrnn, compile_cyclic_with, compile_group_automaton, compile_mod_reflections_with, compile_parity_with,
    compile_permutation_group_with, CompileOptions,
};
use statetrack_core::fsa::{all_permutations, Cascade, Fsa, Group, Permutation};
use statetrack_core::lrnn::{model_run, model_run_cast, EigenRange, LrnnLayer, LrnnModel, ValidationOptions};
use statetrack_core::phenom::{
    demo_theorem, random_negative_layer, random_positive_layer, rotation_demo_layer, CastMode, DemoKind,
};
use statetrack_core::precision::CastGrid;
use statetrack_core::tasks::{read_jsonl, write_jsonl, GroupVariant, TaskSpec};
use statetrack_core::verify::run_suite;
use statetrack_train::eval::{eval_length_gen, Predictor};
use statetrack_train::{train_loop, Head, LayerKind, LayerSpec, ModelConfig, TrainConfig, TrainableModel};

#[derive(Parser)]
#[command(name = "statetrack", version, about = "Linear recurrent networks for state tracking")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build exact weights: parity, cyclic:M, symmetric:N, perm:FILE,
    /// modrefl:M, cascade:{FILE|parity|no00}, fsa:FILE.
    Compile {
        #[arg(long)]
        target: String,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Realize resets as products of projections instead of zero matrices.
        #[arg(long)]
        strict_gh: bool,
    },
    /// Run a compiled or trained model; writes JSONL `{"labels": [...]}`.
    Run {
        #[arg(long)]
        model: PathBuf,
        /// One word: digits like `0110`, or comma-separated tokens.
        #[arg(long, conflicts_with = "input")]
        word: Option<String>,
        /// JSONL samples; only `tokens` is read.
        #[arg(long)]
        input: Option<PathBuf>,
        /// Cast grid JSON, inline or a file path (compiled models only).
        #[arg(long)]
        grid: Option<String>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Finite-precision dynamics of `1^k`; emits a JSON report.
    Demo {
        /// positive, negative or rotation:M.
        #[arg(long)]
        kind: String,
        /// Layer JSON replacing the built-in example layer.
        #[arg(long)]
        layer: Option<PathBuf>,
        #[arg(long)]
        grid: Option<String>,
        #[arg(long, default_value_t = 100_000)]
        kmax: usize,
        #[arg(long, value_enum, default_value_t = ModeArg::PerStep)]
        mode: ModeArg,
        /// State dimension of random example layers.
        #[arg(long, default_value_t = 3)]
        dim: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a dataset as JSONL.
    Gen {
        #[command(flatten)]
        task: TaskArgs,
        #[arg(long, default_value_t = 3)]
        len_min: usize,
        #[arg(long, default_value_t = 40)]
        len_max: usize,
        #[arg(long, default_value_t = 1000)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train a toy model; metrics as CSV, checkpoint as JSON.
    Train {
        #[command(flatten)]
        task: TaskArgs,
        #[arg(long, value_enum, default_value_t = LayerArg::Diag)]
        layer: LayerArg,
        #[arg(long, value_enum, default_value_t = RangeArg::Sym)]
        range: RangeArg,
        /// Training configuration JSON; missing fields take defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 64)]
        d_model: usize,
        #[arg(long, default_value_t = 2)]
        num_layers: usize,
        #[arg(long, value_enum, default_value_t = HeadArg::Mlp)]
        head: HeadArg,
        #[arg(long)]
        hidden: Option<usize>,
        #[arg(long, default_value_t = 5)]
        full_dim: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Length-generalization scores as CSV.
    Eval {
        #[arg(long)]
        model: PathBuf,
        #[command(flatten)]
        task: TaskArgs,
        #[arg(long, value_delimiter = ',', default_value = "40,64,128,256")]
        lengths: Vec<usize>,
        #[arg(long, default_value_t = 500)]
        samples: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Self-check suites; exit 0 iff every check passes.
    Verify {
        /// all, prop1, thm1..thm4, appe, or a key such as P1.2.
        #[arg(long, default_value = "all")]
        suite: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(clap::Args)]
struct TaskArgs {
    /// parity, modarith:M, modarith-brackets:M, group:S<N> or group:Z<M>.
    #[arg(long)]
    task: String,
    /// full, swaps_only, up_to_3 or k_tokens:K (group tasks).
    #[arg(long, default_value = "full")]
    variant: String,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    PerStep,
    PowerCast,
}

#[derive(Clone, Copy, ValueEnum)]
enum LayerArg {
    Diag,
    Delta,
    Full,
}

#[derive(Clone, Copy, ValueEnum)]
enum RangeArg {
    #[value(name = "01")]
    Unit,
    Sym,
}

#[derive(Clone, Copy, ValueEnum)]
enum HeadArg {
    Linear,
    Mlp,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

fn dispatch(cmd: Command) -> Result<ExitCode> {
    match cmd {
        Command::Compile { target, out, strict_gh } => compile(&target, strict_gh, out.as_deref())?,
        Command::Run {
            model,
            word,
            input,
            grid,
            out,
        } => run(&model, word.as_deref(), input.as_deref(), grid.as_deref(), out.as_deref())?,
        Command::Demo {
            kind,
            layer,
            grid,
            kmax,
            mode,
            dim,
            seed,
            out,
        } => demo(&kind, layer.as_deref(), grid.as_deref(), kmax, mode, dim, seed, out.as_deref())?,
        Command::Gen {
            task,
            len_min,
            len_max,
            count,
            seed,
            out,
        } => {
            let spec = parse_task(&task)?;
            let samples = spec.generate(len_min, len_max, count, seed)?;
            let mut w = output(out.as_deref())?;
            write_jsonl(&mut w, &samples)?;
            w.flush()?;
        }
        Command::Train {
            task,
            layer,
            range,
            config,
            d_model,
            num_layers,
            head,
            hidden,
            full_dim,
            seed,
            steps,
            threads,
            out,
            metrics,
        } => {
            let spec = parse_task(&task)?;
            let mut cfg: TrainConfig = match &config {
                Some(p) => serde_json::from_str(&read_text(p)?).with_context(|| format!("parsing {}", p.display()))?,
                None => TrainConfig::default(),
            };
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if let Some(s) = steps {
                cfg.steps = s;
            }
            if threads.is_some() {
                cfg.threads = threads;
            }
            let kind = match layer {
                LayerArg::Diag => LayerKind::Diagonal,
                LayerArg::Delta => LayerKind::Delta,
                LayerArg::Full => LayerKind::Full,
            };
            let range = match range {
                RangeArg::Unit => EigenRange::UnitInterval,
                RangeArg::Sym => EigenRange::Symmetric,
            };
            let head = match head {
                HeadArg::Linear => Head::Linear,
                HeadArg::Mlp => Head::Mlp {
                    hidden: hidden.unwrap_or(2 * d_model),
                },
            };
            let mc = ModelConfig {
                vocab: spec.vocab_size(),
                classes: spec.num_classes(),
                d_model,
                layers: vec![LayerSpec { kind, range }; num_layers],
                head,
                full_dim,
            };
            let mut model = TrainableModel::init(mc, cfg.seed)?;
            let history = train_loop(&mut model, &spec, &cfg, |r| {
                let ev: Vec<String> = r.eval.iter().map(|e| format!("{}:{:.4}", e.length, e.score)).collect();
                eprintln!("step {} loss {:.5} train_acc {:.4} {}", r.step, r.loss, r.train_acc, ev.join(" "));
            })?;
            if let Some(p) = &out {
                std::fs::write(p, model.to_json()?).with_context(|| format!("writing {}", p.display()))?;
            }
            let mut w = output(metrics.as_deref())?;
            history.write_csv(&mut w)?;
            w.flush()?;
        }
        Command::Eval {
            model,
            task,
            lengths,
            samples,
            seed,
            out,
        } => {
            let spec = parse_task(&task)?;
            let loaded = load_model(&model)?;
            let scores = eval_length_gen(loaded.predictor(), &spec, &lengths, samples, seed)?;
            let mut w = output(out.as_deref())?;
            writeln!(w, "length,accuracy,score")?;
            for s in scores {
                writeln!(w, "{},{:.6},{:.6}", s.length, s.accuracy, s.score)?;
            }
            w.flush()?;
        }
        Command::Verify { suite, seed } => {
            let results = run_suite(&suite, seed).ok_or_else(|| anyhow!("unknown suite {suite:?}"))?;
            let mut all = true;
            println!("{:<6} {:<6} {:<50} detail", "key", "result", "check");
            for r in &results {
                all &= r.passed;
                println!("{:<6} {:<6} {:<50} {}", r.key, if r.passed { "PASS" } else { "FAIL" }, r.name, r.detail);
            }
            return Ok(if all { ExitCode::SUCCESS } else { ExitCode::from(1) });
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn read_text(p: &Path) -> Result<String> {
    std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))
}

fn write_json<T: Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let mut w = output(out)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn parse_usize(s: &str, what: &str) -> Result<usize> {
    s.parse().map_err(|_| anyhow!("{what}: expected a nonnegative integer, got {s:?}"))
}

fn parse_task(args: &TaskArgs) -> Result<TaskSpec> {
    let t = args.task.to_ascii_lowercase();
    let spec = if t == "parity" {
        TaskSpec::Parity
    } else if let Some(m) = t.strip_prefix("modarith:") {
        TaskSpec::ModArith {
            m: parse_usize(m, "modulus")?,
            brackets: false,
        }
    } else if let Some(m) = t.strip_prefix("modarith-brackets:") {
        TaskSpec::ModArith {
            m: parse_usize(m, "modulus")?,
            brackets: true,
        }
    } else if let Some(g) = t.strip_prefix("group:") {
        let group = if let Some(n) = g.strip_prefix('s') {
            Group::Symmetric { n: parse_usize(n, "degree")? }
        } else if let Some(m) = g.strip_prefix('z') {
            Group::Cyclic { m: parse_usize(m, "order")? }
        } else {
            bail!("unknown group {g:?}; use S<N> or Z<M>");
        };
        group.validate()?;
        TaskSpec::Group {
            group,
            variant: parse_variant(&args.variant)?,
        }
    } else {
        bail!("unknown task {:?}", args.task);
    };
    if let TaskSpec::ModArith { m, .. } = spec {
        if m < 2 {
            bail!("modulus must be at least 2");
        }
    }
    Ok(spec)
}

fn parse_variant(v: &str) -> Result<GroupVariant> {
    Ok(match v.to_ascii_lowercase().as_str() {
        "full" => GroupVariant::Full,
        "swaps_only" | "swaps" => GroupVariant::SwapsOnly,
        "up_to_3" => GroupVariant::UpTo3,
        other => match other.strip_prefix("k_tokens:") {
            Some(k) => GroupVariant::KTokens { k: parse_usize(k, "k")? },
            None => bail!("unknown variant {v:?}"),
        },
    })
}

fn compile(target: &str, strict_gh: bool, out: Option<&Path>) -> Result<()> {
    let opts = CompileOptions {
        strict_gh,
        ..CompileOptions::default()
    };
    let (kind, arg) = target.split_once(':').unwrap_or((target, ""));
    let model: LrnnModel<f64> = match kind {
        "parity" => compile_parity_with(opts)?,
        "cyclic" => compile_cyclic_with(parse_usize(arg, "modulus")?, opts)?,
        "symmetric" => compile_permutation_group_with(&all_permutations(parse_usize(arg, "degree")?), opts)?,
        "perm" => {
            let gens: Vec<Permutation> =
                serde_json::from_str(&read_text(Path::new(arg))?).context("generators: expected a JSON list of one-line permutations")?;
            compile_permutation_group_with(&gens, opts)?
        }
        "modrefl" => compile_mod_reflections_with(parse_usize(arg, "modulus")?, opts)?,
        "cascade" => {
            let c = match arg {
                "parity" => Cascade::parity(),
                "no00" => Cascade::no_double_zero(),
                path => {
                    let c: Cascade = serde_json::from_str(&read_text(Path::new(path))?).context("cascade JSON")?;
                    c.validate()?;
                    c
                }
            };
            cascade_to_lrnn(&c, opts)?
        }
        "fsa" => {
            let f: Fsa = serde_json::from_str(&read_text(Path::new(arg))?).context("FSA JSON")?;
            compile_group_automaton(&f, opts)?
        }
        _ => bail!("unknown target {target:?}"),
    };
    write_json(&model, out)
}

enum Loaded {
    Compiled(LrnnModel<f64>),
    Trained(TrainableModel),
}

impl Loaded {
    fn predictor(&self) -> &dyn Predictor {
        match self {
            Loaded::Compiled(m) => m,
            Loaded::Trained(m) => m,
        }
    }
}

fn load_model(path: &Path) -> Result<Loaded> {
    let text = read_text(path)?;
    let value: serde_json::Value = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if value.get("format").is_some() {
        return Ok(Loaded::Trained(TrainableModel::from_json(&text)?));
    }
    let m: LrnnModel<f64> = serde_json::from_value(value).with_context(|| format!("parsing {}", path.display()))?;
    m.validate(ValidationOptions {
        allow_unbounded: true,
        ..ValidationOptions::default()
    })?;
    Ok(Loaded::Compiled(m))
}

fn parse_grid(s: &str) -> Result<CastGrid<f64>> {
    let text = if s.trim_start().starts_with('{') { s.to_string() } else { read_text(Path::new(s))? };
    let g: CastGrid<f64> = serde_json::from_str(&text).context("grid JSON")?;
    g.validate()?;
    Ok(g)
}

fn parse_word(w: &str) -> Result<Vec<usize>> {
    if w.contains(',') {
        w.split(',').map(|t| parse_usize(t.trim(), "token")).collect()
    } else {
        w.chars()
            .map(|c| c.to_digit(10).map(|d| d as usize).ok_or_else(|| anyhow!("word: unexpected character {c:?}")))
            .collect()
    }
}

fn run(model: &Path, word: Option<&str>, input: Option<&Path>, grid: Option<&str>, out: Option<&Path>) -> Result<()> {
    let loaded = load_model(model)?;
    let words: Vec<Vec<usize>> = match (word, input) {
        (Some(w), _) => vec![parse_word(w)?],
        (None, Some(p)) => {
            let r = BufReader::new(File::open(p).with_context(|| format!("opening {}", p.display()))?);
            read_jsonl(r)?.into_iter().map(|s| s.tokens).collect()
        }
        (None, None) => {
            let stdin = io::stdin();
            let mut v = Vec::new();
            for line in stdin.lock().lines() {
                let line = line?;
                if !line.trim().is_empty() {
                    v.push(parse_word(line.trim())?);
                }
            }
            v
        }
    };
    let grid = grid.map(parse_grid).transpose()?;
    let mut w = output(out)?;
    for word in &words {
        let labels = match (&loaded, &grid) {
            (Loaded::Compiled(m), None) => model_run(m, word)?,
            (Loaded::Compiled(m), Some(g)) => model_run_cast(m, word, g)?,
            (Loaded::Trained(m), None) => m.predict_seq(word)?,
            (Loaded::Trained(_), Some(_)) => bail!("--grid applies to compiled models only"),
        };
        serde_json::to_writer(&mut w, &serde_json::json!({ "labels": labels }))?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn demo(
    kind: &str,
    layer: Option<&Path>,
    grid: Option<&str>,
    kmax: usize,
    mode: ModeArg,
    dim: usize,
    seed: u64,
    out: Option<&Path>,
) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let kind = match kind {
        "positive" => DemoKind::PositiveEigs,
        "negative" => DemoKind::NegativeReal,
        k => match k.strip_prefix("rotation:") {
            Some(m) => DemoKind::Rotation { m: parse_usize(m, "m")? },
            None => bail!("unknown demo kind {k:?}; use positive, negative or rotation:M"),
        },
    };
    let layer: LrnnLayer<f64> = match layer {
        Some(p) => serde_json::from_str(&read_text(p)?).context("layer JSON")?,
        None => match kind {
            DemoKind::PositiveEigs => random_positive_layer(&mut rng, dim, true)?,
            DemoKind::NegativeReal => random_negative_layer(&mut rng, dim),
            DemoKind::Rotation { m } => rotation_demo_layer(m)?,
        },
    };
    let grid = match grid {
        Some(g) => parse_grid(g)?,
        None => CastGrid::default_demo(),
    };
    let mode = match mode {
        ModeArg::PerStep => CastMode::PerStep,
        ModeArg::PowerCast => CastMode::PowerCast,
    };
    let report = demo_theorem(kind, &layer, &grid, kmax, mode)?;
    write_json(&report, out)
}
