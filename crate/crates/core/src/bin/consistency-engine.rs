use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use consistency_engine::commands::{cmd_bench, cmd_generate, cmd_score, cmd_serve_stub, cmd_stats, responses_file, Overrides};
use consistency_engine::manifest::{Condition, Manifest};
use consistency_engine::scorers::ScorerKind;
use consistency_engine::Error;

#[derive(Parser)]
#[command(name = "consistency-engine", version, about = "Accelerated multi-sample generation and consistency scoring")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate N responses per prompt and write responses, traces and reuse summary.
    Generate(Common),
    /// Score stored responses with the enabled scorers.
    Score {
        #[command(flatten)]
        common: Common,
        /// responses.jsonl, or a directory containing it [default: <output_dir>/responses.jsonl]
        #[arg(long)]
        responses: Option<PathBuf>,
    },
    /// Generate under each condition, score, and write the AUROC / reuse report.
    Bench(Common),
    /// Prefix-sharing statistics of stored responses.
    Stats {
        /// responses.jsonl, or a directory containing it
        responses: PathBuf,
        /// Directory for stats.tsv [default: next to the responses]
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the configured toy model over the wire protocol.
    ServeStub {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value = "127.0.0.1:7878")]
        addr: String,
    },
}

#[derive(Args)]
struct Common {
    /// Run manifest (TOML); omitted fields take their defaults
    #[arg(long, short)]
    manifest: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// Responses per prompt
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    prompts: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    parallelism: Option<usize>,
    #[arg(long)]
    batch: Option<bool>,
    /// Toy model definition file
    #[arg(long)]
    toy_model: Option<PathBuf>,
    /// Logit server address (host:port)
    #[arg(long)]
    remote: Option<String>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    eta: Option<f64>,
    #[arg(long)]
    alpha: Option<f64>,
    #[arg(long)]
    top_k: Option<usize>,
    #[arg(long)]
    top_p: Option<f64>,
    #[arg(long)]
    max_generation: Option<usize>,
    #[arg(long)]
    selective_inference: Option<bool>,
    #[arg(long)]
    hard_decoding: Option<bool>,
    #[arg(long)]
    annealed_decoding: Option<bool>,
    /// Comma-separated scorer names
    #[arg(long, value_delimiter = ',')]
    scorers: Option<Vec<String>>,
    /// Comma-separated benchmark conditions
    #[arg(long, value_delimiter = ',')]
    conditions: Option<Vec<String>>,
}

impl Common {
    fn manifest(&self) -> Result<Manifest, Error> {
        let mut m = match &self.manifest {
            Some(p) => Manifest::load(p)?,
            None => Manifest {
                base_dir: PathBuf::from("."),
                ..Manifest::default()
            },
        };
        let scorers = self
            .scorers
            .as_ref()
            .map(|v| v.iter().map(|s| s.parse::<ScorerKind>()).collect::<Result<Vec<_>, _>>())
            .transpose()
            .map_err(|e| Error::Manifest {
                field: "scorers.enabled".into(),
                message: e.to_string(),
            })?;
        let conditions = self
            .conditions
            .as_ref()
            .map(|v| v.iter().map(|s| s.parse::<Condition>()).collect::<Result<Vec<_>, _>>())
            .transpose()?;
        Overrides {
            seed: self.seed,
            n: self.n,
            prompts: self.prompts.clone(),
            labels: self.labels.clone(),
            output_dir: self.output_dir.clone(),
            parallelism: self.parallelism,
            batch: self.batch,
            toy_model: self.toy_model.clone(),
            remote: self.remote.clone(),
            temperature: self.temperature,
            gamma: self.gamma,
            eta: self.eta,
            alpha: self.alpha,
            top_k: self.top_k,
            top_p: self.top_p,
            max_generation: self.max_generation,
            selective_inference: self.selective_inference,
            hard_decoding: self.hard_decoding,
            annealed_decoding: self.annealed_decoding,
            scorers,
            conditions,
        }
        .apply(&mut m)?;
        m.validate()?;
        Ok(m)
    }
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Generate(common) => {
            let m = common.manifest()?;
            let s = cmd_generate(&m)?;
            println!("questions\t{}", s.questions.len());
            println!("reuse_ratio\t{}", s.reuse_ratio);
            println!("responses\t{}", s.responses_path.display());
        }
        Command::Score { common, responses } => {
            let m = common.manifest()?;
            let responses = responses.unwrap_or_else(|| m.output_dir());
            let path = cmd_score(&m, &responses)?;
            println!("scores\t{}", path.display());
        }
        Command::Bench(common) => {
            let m = common.manifest()?;
            let report = cmd_bench(&m)?;
            print!("{}", report.summary_table());
            println!("report\t{}", m.output_dir().join("report.tsv").display());
        }
        Command::Stats { responses, out } => {
            let file = responses_file(&responses);
            let out = out.unwrap_or_else(|| file.parent().unwrap_or(Path::new(".")).to_path_buf());
            let s = cmd_stats(&responses, &out)?;
            print!("{}", s.to_tsv());
        }
        Command::ServeStub { common, addr } => {
            let m = common.manifest()?;
            let server = cmd_serve_stub(&m, &addr)?;
            println!("listening on {}", server.addr());
            server.join();
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let usage = e.use_stderr();
            let _ = e.print();
            return ExitCode::from(if usage { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error[{}]: {e}", e.tag());
            ExitCode::from(if e.is_usage() { 1 } else { 2 })
        }
    }
}
