use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use shadowband::cli::{self, CliError, Command, Format};

#[derive(Debug, Clone, Copy, ValueEnum)]
enum CommandArg {
    Boundaries,
    Stats,
    Simulate,
    Frontier,
    Gaps,
    SwapDemo,
    Kappa,
}

impl From<CommandArg> for Command {
    fn from(c: CommandArg) -> Self {
        match c {
            CommandArg::Boundaries => Command::Boundaries,
            CommandArg::Stats => Command::Stats,
            CommandArg::Simulate => Command::Simulate,
            CommandArg::Frontier => Command::Frontier,
            CommandArg::Gaps => Command::Gaps,
            CommandArg::SwapDemo => Command::SwapDemo,
            CommandArg::Kappa => Command::Kappa,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Json,
}

/// Optimal and shadow-price trading bands under proportional transaction costs.
#[derive(Debug, Parser)]
#[command(name = "shadowband", version)]
struct Args {
    #[arg(value_enum)]
    command: CommandArg,
    /// JSON run configuration (optional for `kappa`).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    /// Worker threads for parallel grid points and paths.
    #[arg(long)]
    threads: Option<usize>,
}

fn execute(args: &Args) -> Result<(), CliError> {
    if let Some(n) = args.threads {
        if n == 0 {
            return Err(CliError::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Config(e.to_string()))?;
    }
    let command = Command::from(args.command);
    let config = match &args.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
            cli::parse_config(&text)?
        }
        None if command == Command::Kappa => cli::RunConfig::default(),
        None => {
            return Err(CliError::Config(format!(
                "{} needs --config",
                command.name()
            )))
        }
    };
    let report = cli::run(command, &config)?;
    let format = match args.format {
        FormatArg::Csv => Format::Csv,
        FormatArg::Json => Format::Json,
    };
    let text = format.render(&report);
    match &args.out {
        Some(path) => std::fs::write(path, text)
            .map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?,
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| CliError::Io(e.to_string()))?,
    }
    Ok(())
}

fn main() -> ExitCode {
    let args = Args::parse();
    match execute(&args) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
