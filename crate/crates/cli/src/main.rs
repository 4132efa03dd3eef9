use std::collections::BTreeMap;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use kompsep_cli::{
    cmd_cf, cmd_derivs, cmd_reproduce, cmd_solve, cmd_verify, read_config_file, scenario_layer, CliError, CliResult,
    RunConfig,
};

#[derive(Parser)]
#[command(name = "kompsep", version, about = "Self-consistent temperature and spectrum evolution")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Initial derivatives of θ (JSON + CSV).
    Derivs(Opts),
    /// Continued-fraction coefficients, defect reports and Φ_N/Ψ_N curves.
    Cf(Opts),
    /// Transport solve with the selected θ(y).
    Solve(Opts),
    /// Solve, then compare θ_out with θ_in and check the moment equations.
    Verify(Opts),
    /// Full pipeline for a shipped scenario (monoenergetic, bremsstrahlung) or config file.
    Reproduce {
        scenario: String,
        #[command(flatten)]
        opts: Opts,
    },
}

#[derive(Args, Default)]
struct Opts {
    /// Flat `key = value` config file; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    spectrum: Option<String>,
    #[arg(long = "M", visible_alias = "order")]
    order: Option<String>,
    #[arg(long = "y-max")]
    y_max: Option<String>,
    /// auto, cf:N, taylor:N or constant:V
    #[arg(long)]
    theta: Option<String>,
    #[arg(long = "taylor-N")]
    taylor_n: Option<String>,
    #[arg(long = "cf-N")]
    cf_n: Option<String>,
    #[arg(long)]
    output: Option<String>,
    /// Any config key, repeatable: --set cells=800
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Worker threads for N sweeps (default: all cores).
    #[arg(long)]
    jobs: Option<usize>,
    #[arg(short, long)]
    verbose: bool,
}

impl Opts {
    fn layers(&self, base: Option<BTreeMap<String, String>>) -> CliResult<Vec<BTreeMap<String, String>>> {
        let mut layers: Vec<_> = base.into_iter().collect();
        if let Some(p) = &self.config {
            layers.push(read_config_file(p)?);
        }
        let mut flags = BTreeMap::new();
        for (key, val) in [
            ("spectrum", &self.spectrum),
            ("order", &self.order),
            ("y_max", &self.y_max),
            ("theta", &self.theta),
            ("taylor_n", &self.taylor_n),
            ("cf_n", &self.cf_n),
            ("output", &self.output),
        ] {
            if let Some(v) = val {
                flags.insert(key.to_string(), v.clone());
            }
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| CliError::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            flags.insert(k.trim().to_string(), v.trim().to_string());
        }
        layers.push(flags);
        Ok(layers)
    }

    fn setup(&self) {
        let level = if self.verbose { "info" } else { "warn" };
        let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).try_init();
        if let Some(n) = self.jobs {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Derivs(o) => {
            o.setup();
            let cfg = RunConfig::from_layers(&o.layers(None)?)?;
            let t = cmd_derivs(&cfg)?;
            println!("wrote {} derivatives to {}", t.order() + 1, cfg.output.join("derivs").display());
        }
        Command::Cf(o) => {
            o.setup();
            let cfg = RunConfig::from_layers(&o.layers(None)?)?;
            let (cf, sel) = cmd_cf(&cfg)?;
            println!(
                "wrote {} coefficients to {}; selected N = {}",
                cf.level() + 1,
                cfg.output.join("cf").display(),
                sel.level
            );
        }
        Command::Solve(o) => {
            o.setup();
            let cfg = RunConfig::from_layers(&o.layers(None)?)?;
            let sol = cmd_solve(&cfg)?;
            println!(
                "wrote {} snapshots to {} ({} steps)",
                sol.snapshots.len(),
                cfg.output.join("solve").display(),
                sol.stats.accepted
            );
        }
        Command::Verify(o) => {
            o.setup();
            let cfg = RunConfig::from_layers(&o.layers(None)?)?;
            let res = cmd_verify(&cfg)?;
            println!("verification passed: max deviation {:.3e}", res.report.max_rel_dev);
        }
        Command::Reproduce { scenario, opts } => {
            opts.setup();
            let cfg = RunConfig::from_layers(&opts.layers(Some(scenario_layer(&scenario)?))?)?;
            let res = cmd_reproduce(&cfg)?;
            println!(
                "{scenario}: N = {}, max deviation {:.3e}; outputs in {}",
                res.selection.level,
                res.report.max_rel_dev,
                cfg.output.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
