use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};
use ultrakin::workbench::{self, Format, Mode, RunConfig, WorkbenchError};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ModeArg {
    Quantum,
    Meanfield,
    Classical,
    Poincare,
    Lyapunov,
    Sweep,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Quantum => Mode::Quantum,
            ModeArg::Meanfield => Mode::Meanfield,
            ModeArg::Classical => Mode::Classical,
            ModeArg::Poincare => Mode::Poincare,
            ModeArg::Lyapunov => Mode::Lyapunov,
            ModeArg::Sweep => Mode::Sweep,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

/// Quantum and mean-field kinetics of ultracold reactions.
#[derive(Debug, Parser)]
#[command(name = "ultrakin", version)]
struct Cli {
    mode: ModeArg,
    /// Reaction network file.
    #[arg(long, value_name = "FILE", conflicts_with = "reaction")]
    network: Option<PathBuf>,
    /// Inline reaction network, e.g. "A + A <k=1> A2".
    #[arg(long, value_name = "STR")]
    reaction: Option<String>,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
    /// Config file; flags override its values.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long)]
    n: Option<f64>,
    /// Uniform per-species occupation cutoff.
    #[arg(long)]
    cutoff: Option<u32>,
    #[arg(long = "tau-max")]
    tau_max: Option<f64>,
    #[arg(long)]
    dtau: Option<f64>,
    #[arg(long)]
    c1: Option<f64>,
    #[arg(long)]
    c2: Option<f64>,
    #[arg(long)]
    energy: Option<f64>,
    #[arg(long)]
    trajectories: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_delimiter = ',')]
    format: Option<Vec<FormatArg>>,
}

fn build_config(cli: Cli) -> Result<RunConfig, WorkbenchError> {
    let mode = Mode::from(cli.mode);
    let mut cfg = match &cli.config {
        Some(path) => {
            let text = std::fs::read_to_string(path).map_err(|source| WorkbenchError::Io {
                path: path.clone(),
                source,
            })?;
            let mut cfg = RunConfig::parse(&text)?;
            cfg.mode = mode;
            cfg
        }
        None => RunConfig::new(mode),
    };
    if cli.network.is_some() || cli.reaction.is_some() {
        cfg.network_file = cli.network;
        cfg.reaction = cli.reaction;
    }
    cfg.out = cli.out;
    if let Some(v) = cli.n {
        cfg.n = v;
    }
    if let Some(v) = cli.cutoff {
        cfg.cutoff = Some(v);
    }
    if let Some(v) = cli.tau_max {
        cfg.tau_max = Some(v);
    }
    if let Some(v) = cli.dtau {
        cfg.dtau = Some(v);
    }
    if let Some(v) = cli.c1 {
        cfg.c1 = v;
    }
    if let Some(v) = cli.c2 {
        cfg.c2 = v;
    }
    if let Some(v) = cli.energy {
        cfg.energy = v;
    }
    if let Some(v) = cli.trajectories {
        cfg.trajectories = v;
    }
    if let Some(v) = cli.seed {
        cfg.seed = Some(v);
    }
    if let Some(f) = cli.format {
        cfg.formats = f
            .into_iter()
            .map(|f| match f {
                FormatArg::Csv => Format::Csv,
                FormatArg::Json => Format::Json,
            })
            .collect();
    }
    Ok(cfg)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = build_config(cli).and_then(|cfg| {
        let bundle = workbench::run(&cfg)?;
        let files = workbench::export(&bundle, &cfg.out, &cfg.formats)?;
        Ok((bundle, files))
    });
    match result {
        Ok((bundle, files)) => {
            for (k, v) in &bundle.scalars {
                println!("{k} = {v}");
            }
            for f in files {
                println!("wrote {}", f.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("ultrakin: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
