//! `stip`: generate, transform, verify, simulate, attack and benchmark.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use stip::commands::{self, AttackKind, EXIT_VERIFY_FAILED};
use stip::{ReportBundle, RunConfig};

/// Every run setting has a flag and a `STIP_<KEY>` environment variable.
/// Precedence: flag, then environment, then `--config` file, then defaults.
#[derive(Args, Debug, Default)]
struct Keys {
    #[arg(long, global = true, env = "STIP_N_LAYERS")]
    n_layers: Option<String>,
    #[arg(long, global = true, env = "STIP_D_MODEL")]
    d_model: Option<String>,
    #[arg(long, global = true, env = "STIP_D_FF")]
    d_ff: Option<String>,
    #[arg(long, global = true, env = "STIP_VOCAB_SIZE")]
    vocab_size: Option<String>,
    /// 0 for dense feedforwards.
    #[arg(long, global = true, env = "STIP_N_EXPERTS")]
    n_experts: Option<String>,
    #[arg(long, global = true, env = "STIP_TOP_K")]
    top_k: Option<String>,
    /// layernorm | rmsnorm
    #[arg(long, global = true, env = "STIP_NORM_KIND")]
    norm_kind: Option<String>,
    /// post | pre
    #[arg(long, global = true, env = "STIP_NORM_PLACEMENT")]
    norm_placement: Option<String>,
    /// relu | gelu | swiglu
    #[arg(long, global = true, env = "STIP_FFN_KIND")]
    ffn_kind: Option<String>,
    /// none | causal | custom
    #[arg(long, global = true, env = "STIP_MASK_KIND")]
    mask_kind: Option<String>,
    #[arg(long, global = true, env = "STIP_SEED")]
    seed: Option<String>,
    #[arg(long, global = true, env = "STIP_KEY_SEED")]
    key_seed: Option<String>,
    /// inproc | tcp | host:port
    #[arg(long, global = true, env = "STIP_TRANSPORT")]
    transport: Option<String>,
    #[arg(long, global = true, env = "STIP_LATENCY_MS")]
    latency_ms: Option<String>,
    #[arg(long, global = true, env = "STIP_TRIALS")]
    trials: Option<String>,
    #[arg(long, global = true, env = "STIP_SEQ_LEN")]
    seq_len: Option<String>,
    #[arg(long, global = true, env = "STIP_TOL")]
    tol: Option<String>,
    #[arg(long, global = true, env = "STIP_MAX_TOKENS")]
    max_tokens: Option<String>,
    #[arg(long, global = true, env = "STIP_PROMPTS")]
    prompts: Option<String>,
    #[arg(long, global = true, env = "STIP_PROMPT_LEN")]
    prompt_len: Option<String>,
    #[arg(long, global = true, env = "STIP_BENCH_DIM")]
    bench_dim: Option<String>,
    #[arg(long, global = true, env = "STIP_BENCH_REPS")]
    bench_reps: Option<String>,
    /// Report path; a `.csv` twin is written next to it. Without it the
    /// JSON report goes to stdout.
    #[arg(long, global = true, env = "STIP_OUTPUT")]
    output: Option<String>,
}

impl Keys {
    fn pairs(&self) -> Vec<(&'static str, &str)> {
        let all = [
            ("n_layers", &self.n_layers),
            ("d_model", &self.d_model),
            ("d_ff", &self.d_ff),
            ("vocab_size", &self.vocab_size),
            ("n_experts", &self.n_experts),
            ("top_k", &self.top_k),
            ("norm_kind", &self.norm_kind),
            ("norm_placement", &self.norm_placement),
            ("ffn_kind", &self.ffn_kind),
            ("mask_kind", &self.mask_kind),
            ("seed", &self.seed),
            ("key_seed", &self.key_seed),
            ("transport", &self.transport),
            ("latency_ms", &self.latency_ms),
            ("trials", &self.trials),
            ("seq_len", &self.seq_len),
            ("tol", &self.tol),
            ("max_tokens", &self.max_tokens),
            ("prompts", &self.prompts),
            ("prompt_len", &self.prompt_len),
            ("bench_dim", &self.bench_dim),
            ("bench_reps", &self.bench_reps),
            ("output", &self.output),
        ];
        all.into_iter().filter_map(|(k, v)| v.as_deref().map(|v| (k, v))).collect()
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "stip",
    version,
    about = "Permutation-protected Transformer inference",
    after_help = "Every setting can also come from a STIP_<KEY> environment variable (e.g. STIP_D_MODEL=32).\nPrecedence: flag, environment, --config file, built-in defaults.\nExit codes: 0 ok, 1 verification failed, 2 usage, 3 I/O, 4 protocol."
)]
struct Cli {
    /// key=value configuration file ('#' comments).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    keys: Keys,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Attack {
    Kpa,
    Bfa,
    Unauthorized,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Write a random-weight model container.
    Genmodel {
        #[arg(long)]
        out: PathBuf,
        /// Also write the JSON mirror.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Transform a model and write the transformed container and key file.
    Transform {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        out_model: PathBuf,
        #[arg(long)]
        out_keys: PathBuf,
        /// Use identity permutations.
        #[arg(long)]
        identity: bool,
    },
    /// Check a transformed model against the original; exit 1 on mismatch.
    Verify {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        transformed: PathBuf,
        #[arg(long)]
        keys: PathBuf,
    },
    /// Run developer, server and data owner on separate threads.
    Simulate {
        /// Model container; a random model from the config otherwise.
        #[arg(long)]
        model: Option<PathBuf>,
        /// JSON-lines transcript output.
        #[arg(long)]
        transcript: Option<PathBuf>,
    },
    /// Run a key-recovery attack or the unauthorized-use demo.
    Attack {
        #[arg(long, value_enum)]
        kind: Attack,
    },
    /// Permutation cost, transform time, traffic and end-to-end throughput.
    Bench,
}

fn emit(cfg: &RunConfig, r: &ReportBundle) -> stip::Result<()> {
    match &cfg.output {
        Some(p) => r.write(p),
        None => {
            println!("{}", r.to_json());
            Ok(())
        }
    }
}

fn run(cli: Cli) -> stip::Result<i32> {
    let mut cfg = RunConfig::default();
    if let Some(path) = &cli.config {
        cfg.apply_file(path)?;
    }
    for (k, v) in cli.keys.pairs() {
        cfg.set(k, v)?;
    }
    let report = match &cli.cmd {
        Cmd::Genmodel { out, json } => commands::cmd_genmodel(&cfg, out, json.as_deref())?,
        Cmd::Transform { model, out_model, out_keys, identity } => {
            commands::cmd_transform(&cfg, model, out_model, out_keys, *identity)?
        }
        Cmd::Verify { model, transformed, keys } => {
            let (r, ok) = commands::cmd_verify(&cfg, model, transformed, keys)?;
            emit(&cfg, &r)?;
            if !ok {
                eprintln!("verification failed");
                return Ok(EXIT_VERIFY_FAILED);
            }
            return Ok(0);
        }
        Cmd::Simulate { model, transcript } => {
            let (r, o) = commands::cmd_simulate(&cfg, model.as_deref())?;
            if let Some(t) = transcript {
                std::fs::write(t, o.transcript.to_jsonl())?;
            }
            r
        }
        Cmd::Attack { kind } => commands::cmd_attack(
            &cfg,
            match kind {
                Attack::Kpa => AttackKind::Kpa,
                Attack::Bfa => AttackKind::Bfa,
                Attack::Unauthorized => AttackKind::Unauthorized,
            },
        )?,
        Cmd::Bench => commands::cmd_bench(&cfg)?,
    };
    emit(&cfg, &report)?;
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("stip: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
