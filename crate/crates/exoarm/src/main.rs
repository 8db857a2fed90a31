use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use exoarm::anfis::TrainConfig;
use exoarm::cli::{cmd_calibrate, cmd_compare, cmd_gravload, cmd_simulate, cmd_train, RunConfig};

#[derive(Parser)]
#[command(name = "exoarm", version, about = "Gravity-compensation dynamics and simulation toolkit")]
struct Cli {
    /// Robot config file (built-in exoskeleton preset when omitted).
    #[arg(long, global = true)]
    robot: Option<PathBuf>,
    /// Output directory for CSV/SVG/net files.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Override the base-frame gravity vector, e.g. `--gravity 0,0,-9.8`.
    #[arg(long, global = true, value_parser = parse_vec3, allow_hyphen_values = true)]
    gravity: Option<Vec3Arg>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy)]
struct Vec3Arg([f64; 3]);

fn parse_vec3(s: &str) -> Result<Vec3Arg, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err("expected three comma-separated numbers".into());
    }
    let mut v = [0.0; 3];
    for (slot, part) in v.iter_mut().zip(parts) {
        *slot = part.trim().parse::<f64>().map_err(|e| e.to_string())?;
    }
    Ok(Vec3Arg(v))
}

#[derive(Args)]
struct GridArgs {
    /// Grid point counts for joints 2,3,4 (comma separated).
    #[arg(long, default_value = "13,9,9", value_parser = parse_counts)]
    grid: Counts,
}

#[derive(Clone, Copy)]
struct Counts([usize; 3]);

fn parse_counts(s: &str) -> Result<Counts, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err("expected three comma-separated counts".into());
    }
    let mut c = [0usize; 3];
    for (slot, part) in c.iter_mut().zip(parts) {
        *slot = part.trim().parse::<usize>().map_err(|e| e.to_string())?;
    }
    Ok(Counts(c))
}

#[derive(Args)]
struct AnfisArgs {
    /// Gaussian membership functions per input.
    #[arg(long, default_value_t = 3)]
    mfs: usize,
    /// Training epochs.
    #[arg(long, default_value_t = 60)]
    epochs: usize,
    /// Gradient step for membership updates.
    #[arg(long, default_value_t = 0.05)]
    learn_rate: f64,
}

impl AnfisArgs {
    fn config(&self) -> TrainConfig {
        TrainConfig { mfs_per_input: self.mfs, epochs: self.epochs, learn_rate: self.learn_rate }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Print the gravity-load torque at a joint pose.
    Gravload {
        /// Joint angles in rad, comma separated, e.g. `--q 0,0.5,-0.3,0.2`.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        q: Vec<f64>,
    },
    /// Search the motor-to-equation angle map against the torque oracle.
    Calibrate,
    /// Compare analytical equations (and optionally trained nets) with the
    /// oracle over a workspace grid.
    Compare {
        #[command(flatten)]
        grid: GridArgs,
        /// Also train the per-joint fuzzy nets and report their RMSE.
        #[arg(long)]
        train: bool,
        #[command(flatten)]
        anfis: AnfisArgs,
    },
    /// Train the per-joint fuzzy nets and write them to the output directory.
    Train {
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        anfis: AnfisArgs,
    },
    /// Run a scenario file and report hold stability.
    Simulate {
        /// Scenario TOML file.
        scenario: PathBuf,
        /// Also write SVG position/velocity plots.
        #[arg(long)]
        plot: bool,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Input errors exit 1; help/version requests exit 0.
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let cfg = RunConfig {
        robot: cli.robot,
        out: cli.out,
        gravity: cli.gravity.map(|g| g.0),
    };
    let result = match &cli.command {
        Command::Gravload { q } => cmd_gravload(&cfg, q),
        Command::Calibrate => cmd_calibrate(&cfg),
        Command::Compare { grid, train, anfis } => {
            let train_cfg = train.then(|| anfis.config());
            cmd_compare(&cfg, grid.grid.0, train_cfg.as_ref())
        }
        Command::Train { grid, anfis } => cmd_train(&cfg, grid.grid.0, &anfis.config()),
        Command::Simulate { scenario, plot } => cmd_simulate(&cfg, scenario, *plot),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
