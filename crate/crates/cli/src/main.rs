use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};

use fabricdds::bench::{
    bench_fanout, bench_transfer, chain_report, emit_report, BenchReport, ChainParams, ReportFormat, Subject,
};
use fabricdds::msgdef::{flatten, load_msg_dir, resolve, TypeName, TypeRegistry};
use fabricdds::runtime::ExecutionMode;
use fabricdds::topology::{build_topology, explain, parse_config, validate, Severity, TopologyError, TopologyGraph};

/// Static publish/subscribe fabric: topology compiler and benchmarks.
#[derive(Debug, Parser)]
#[command(name = "fabricdds", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Compile a node configuration into its topic graph (JSON).
    Compile {
        config: PathBuf,
        #[command(flatten)]
        msgs: MsgDir,
        /// Write the graph here instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Describe each topic's interconnect in one line.
    Explain {
        config: PathBuf,
        #[command(flatten)]
        msgs: MsgDir,
    },
    /// Dump the flattened serialization plan of a message type (JSON).
    Plan {
        /// `<package>/<Name>`
        type_name: String,
        #[command(flatten)]
        msgs: MsgDir,
    },
    /// Measure transfer times against the double-copy baseline.
    Bench {
        #[command(subcommand)]
        scenario: Scenario,
    },
    /// Run the five-stage image processing chain.
    ChainDemo {
        #[arg(long, value_enum, default_value_t = ModeArg::Both)]
        mode: ModeArg,
        /// Image scale relative to 1000 x 600.
        #[arg(long, default_value_t = 1.0)]
        scale: f64,
        /// Seed of the synthetic camera image.
        #[arg(long, default_value_t = 1)]
        seed: u64,
        /// Write granularity of dataflow stages, e.g. `64k`.
        #[arg(long, value_parser = parse_size, default_value = "64k")]
        chunk: usize,
        #[command(flatten)]
        common: BenchArgs,
    },
}

#[derive(Debug, Args)]
struct MsgDir {
    /// Root holding `<pkg>/msg/<Name>.msg` files.
    #[arg(short = 'm', long = "msg-dir")]
    msg_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Scenario {
    /// One publisher, one subscriber, one row per message size.
    Transfer {
        /// Comma-separated sizes; `k` is 1024 bytes.
        #[arg(long, value_delimiter = ',', value_parser = parse_size,
              default_value = "3k,12k,50k,196k,786k,3146k")]
        sizes: Vec<usize>,
        #[command(flatten)]
        common: BenchArgs,
    },
    /// One publisher, one row per subscriber count.
    Fanout {
        #[arg(long, value_delimiter = ',', default_value = "1,2,4,8")]
        subscribers: Vec<usize>,
        #[arg(long, value_parser = parse_size, default_value = "786k")]
        size: usize,
        #[command(flatten)]
        common: BenchArgs,
    },
}

#[derive(Debug, Args)]
struct BenchArgs {
    /// Repetitions per configuration; the first 5% are discarded.
    #[arg(long, default_value_t = 1000)]
    reps: usize,
    #[arg(long, value_enum, default_value_t = SubjectArg::Both)]
    subject: SubjectArg,
    #[arg(long, value_enum, default_value_t = FormatArg::Markdown)]
    format: FormatArg,
    /// Write the report here instead of stdout.
    #[arg(short, long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SubjectArg {
    Baseline,
    Streaming,
    Both,
}

impl SubjectArg {
    fn subjects(self) -> Vec<Subject> {
        match self {
            SubjectArg::Baseline => vec![Subject::Baseline],
            SubjectArg::Streaming => vec![Subject::Streaming],
            SubjectArg::Both => vec![Subject::Baseline, Subject::Streaming],
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Markdown,
    Csv,
    Json,
}

impl From<FormatArg> for ReportFormat {
    fn from(f: FormatArg) -> Self {
        match f {
            FormatArg::Markdown => ReportFormat::Markdown,
            FormatArg::Csv => ReportFormat::Csv,
            FormatArg::Json => ReportFormat::Json,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Sequential,
    Dataflow,
    Both,
}

impl ModeArg {
    fn modes(self) -> Vec<ExecutionMode> {
        match self {
            ModeArg::Sequential => vec![ExecutionMode::Sequential],
            ModeArg::Dataflow => vec![ExecutionMode::Dataflow],
            ModeArg::Both => vec![ExecutionMode::Sequential, ExecutionMode::Dataflow],
        }
    }
}

/// `4`, `3k` (3072) or `2M`.
fn parse_size(token: &str) -> Result<usize, String> {
    let t = token.trim();
    let (digits, unit) = match t.char_indices().find(|(_, c)| !c.is_ascii_digit()) {
        Some((i, _)) => t.split_at(i),
        None => (t, ""),
    };
    let n: usize = digits.parse().map_err(|_| format!("invalid size `{token}`"))?;
    let mult = match unit {
        "" | "B" | "b" => 1,
        "k" | "K" => 1024,
        "M" | "m" => 1024 * 1024,
        _ => return Err(format!("invalid size suffix in `{token}`; use k or M")),
    };
    n.checked_mul(mult).ok_or_else(|| format!("size `{token}` is too large"))
}

fn registry(msgs: &MsgDir) -> Result<TypeRegistry> {
    let reg = match &msgs.msg_dir {
        Some(dir) => load_msg_dir(dir).with_context(|| format!("loading message types from {}", dir.display()))?,
        None => TypeRegistry::new(),
    };
    Ok(resolve(reg)?)
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write_out(output: Option<&Path>, text: &str) -> Result<()> {
    match output {
        Some(path) => std::fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn compile(config: &Path, msgs: &MsgDir) -> Result<TopologyGraph> {
    let text = read(config)?;
    let spec = parse_config(&text).with_context(|| config.display().to_string())?;
    match build_topology(&spec, &registry(msgs)?) {
        Ok(graph) => {
            for d in validate(&graph).iter().filter(|d| d.severity == Severity::Warning) {
                eprintln!("{d}");
            }
            Ok(graph)
        }
        Err(TopologyError::Invalid(diags)) => {
            for d in &diags {
                eprintln!("{d}");
            }
            bail!("{}: {} error(s)", config.display(), diags.len())
        }
        Err(e) => Err(e).with_context(|| config.display().to_string()),
    }
}

fn emit(report: &BenchReport, args: &BenchArgs) -> Result<()> {
    write_out(args.output.as_deref(), &emit_report(report, args.format.into()))
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Compile { config, msgs, output } => {
            let graph = compile(&config, &msgs)?;
            let mut json = serde_json::to_string_pretty(&graph)?;
            json.push('\n');
            write_out(output.as_deref(), &json)
        }
        Command::Explain { config, msgs } => {
            let graph = compile(&config, &msgs)?;
            write_out(None, &explain(&graph))
        }
        Command::Plan { type_name, msgs } => {
            let name: TypeName = type_name.parse()?;
            let plan = flatten(&registry(&msgs)?, &name)?;
            let mut json = serde_json::to_string_pretty(&plan)?;
            json.push('\n');
            write_out(None, &json)
        }
        Command::Bench { scenario } => match scenario {
            Scenario::Transfer { sizes, common } => {
                let report = bench_transfer(&sizes, common.reps, &common.subject.subjects())?;
                emit(&report, &common)
            }
            Scenario::Fanout { subscribers, size, common } => {
                let report = bench_fanout(&subscribers, size, common.reps, &common.subject.subjects())?;
                emit(&report, &common)
            }
        },
        Command::ChainDemo { mode, scale, seed, chunk, common } => {
            let params = ChainParams {
                scale,
                reps: common.reps,
                seed,
                chunk_bytes: chunk,
                ..Default::default()
            };
            let report = chain_report(&mode.modes(), &common.subject.subjects(), &params)?;
            emit(&report, &common)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
