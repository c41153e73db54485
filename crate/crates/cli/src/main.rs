use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use bribery_core::equilibrium::{
    entry_threshold, solve_scenario, solve_swc_uncertain, validate_params, ModelParams, Scenario,
};
use bribery_core::estimator::{fit_within, ClusterCorrection, RegressionSpec};
use bribery_core::identify::{classify_scenario, CoefficientTable};
use bribery_core::oracle::{check_constraints, compare_with_closed_form, GridSpec};
use bribery_core::panelgen::{
    generate_panel, summarize_panel, Calibration, PanelDataset, SpecVariant,
};
use bribery_core::roundtrip::run_roundtrip;
use bribery_core::Error;
use clap::{Args, Parser, Subcommand};

/// Screening model of bribery: solve, verify, simulate, estimate, identify.
#[derive(Debug, Parser)]
#[command(name = "bribery", version)]
struct Cli {
    /// Directory for written artifacts.
    #[arg(
        long,
        global = true,
        env = "BRIBERY_OUT_DIR",
        default_value = "bribery-out"
    )]
    out_dir: PathBuf,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print the closed-form equilibrium for one scenario.
    Solve {
        #[arg(long)]
        scenario: Scenario,
        /// Model parameters (TOML).
        #[arg(long)]
        params: PathBuf,
        /// Realised contest loss when the win probability `mu` is below 1.
        #[arg(long)]
        contest_lost: bool,
    },
    /// Compare the closed forms with a constrained grid search.
    OracleCheck {
        #[arg(long)]
        params: PathBuf,
        /// One scenario, or all three when omitted.
        #[arg(long)]
        scenario: Option<Scenario>,
        /// Time steps of the aligned grid.
        #[arg(long, default_value_t = 200)]
        steps: usize,
        /// Weight on the P-type offer without contract.
        #[arg(long, default_value_t = 0.5)]
        phi: f64,
    },
    /// Generate a synthetic panel and write it as CSV.
    Simulate {
        #[arg(long)]
        scenario: Scenario,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        firms: Option<usize>,
        #[command(flatten)]
        calibration: CalibrationArg,
        /// Output CSV (default: <out-dir>/panel_<scenario>_<seed>.csv).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Fit a specification to a panel CSV.
    Estimate {
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        fit: FitArgs,
        /// Report stem (default: input file stem).
        #[arg(long)]
        name: Option<String>,
    },
    /// Classify a coefficient CSV (name, estimate, se).
    Identify {
        #[arg(long)]
        coeffs: PathBuf,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
    },
    /// Repeat simulate, estimate and identify over consecutive seeds.
    Roundtrip {
        #[arg(long)]
        scenario: Scenario,
        #[arg(long)]
        seed: u64,
        #[arg(long, default_value_t = 100)]
        reps: usize,
        #[arg(long)]
        firms: Option<usize>,
        #[arg(long, default_value_t = 0.05)]
        alpha: f64,
        #[command(flatten)]
        calibration: CalibrationArg,
        #[command(flatten)]
        fit: FitArgs,
    },
}

#[derive(Debug, Args)]
struct CalibrationArg {
    /// Calibration file (TOML); defaults are used for absent keys.
    #[arg(long)]
    calibration: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct FitArgs {
    /// EM1.1, EM1.2 or EM1.3.
    #[arg(long, default_value = "EM1.1")]
    spec: SpecVariant,
    #[arg(long, default_value = "CR1")]
    cluster: ClusterCorrection,
}

impl FitArgs {
    fn spec(&self) -> RegressionSpec {
        RegressionSpec::new(self.spec.clone()).with_correction(self.cluster)
    }
}

#[derive(Debug)]
enum Failure {
    Core(Error),
    Check(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Core(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Core(Error::Io(e))
    }
}

type Outcome = std::result::Result<(), Failure>;

fn require_file(path: &Path) -> Result<(), Error> {
    if path.is_file() {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "input file `{}` not found",
            path.display()
        )))
    }
}

fn load_params(path: &Path) -> Result<ModelParams, Error> {
    require_file(path)?;
    let text = fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn load_calibration(
    arg: &CalibrationArg,
    seed: u64,
    firms: Option<usize>,
) -> Result<Calibration, Error> {
    let mut cal = match &arg.calibration {
        Some(p) => {
            require_file(p)?;
            Calibration::load(p)?
        }
        None => Calibration::default(),
    };
    cal.seed = seed;
    if let Some(n) = firms {
        cal.n_firms = n;
    }
    cal.validate()?;
    Ok(cal)
}

fn prepare_dir(dir: &Path) -> Result<(), Error> {
    fs::create_dir_all(dir).map_err(|e| {
        Error::Config(format!(
            "cannot create output directory `{}`: {e}",
            dir.display()
        ))
    })
}

fn run(cli: Cli) -> Outcome {
    match cli.command {
        Command::Solve {
            scenario,
            params,
            contest_lost,
        } => {
            let p = load_params(&params)?;
            let out = if scenario == Scenario::SwC && (p.mu < 1.0 || contest_lost) {
                solve_swc_uncertain(&p, !contest_lost)?
            } else {
                solve_scenario(&p, scenario)?
            };
            print!("{out}");
            if scenario == Scenario::SwC {
                match entry_threshold(&p) {
                    Ok(m) => println!("mu_star={m}"),
                    Err(e) => println!("mu_star=undefined ({e})"),
                }
            }
            Ok(())
        }
        Command::OracleCheck {
            params,
            scenario,
            steps,
            phi,
        } => {
            let p = load_params(&params)?;
            let violations = validate_params(&p);
            if !violations.is_empty() {
                return Err(Error::InvalidParams(
                    violations.iter().map(|v| v.to_string()).collect(),
                )
                .into());
            }
            let grid = GridSpec::aligned(&p, steps);
            println!(
                "grid: t in [{:.6}, {:.6}] x {}  fee in [{:.6}, {:.6}] x {}",
                grid.t_lo, grid.t_hi, grid.steps_t, grid.fee_lo, grid.fee_hi, grid.steps_fee
            );
            let scenarios = scenario.map_or(Scenario::ALL.to_vec(), |s| vec![s]);
            let mut failed = Vec::new();
            for s in scenarios {
                let menus = solve_scenario(&p, s)?.menus;
                let report = check_constraints(&p, s, &menus);
                let cmp = compare_with_closed_form(&p, s, &grid, phi)?;
                println!("\n{report}{cmp}");
                let ok = report.all_satisfied() && cmp.passed();
                println!("{s}: {}", if ok { "PASS" } else { "FAIL" });
                if !ok {
                    failed.push(s.to_string());
                }
            }
            if failed.is_empty() {
                Ok(())
            } else {
                Err(Failure::Check(format!(
                    "oracle check failed for {}",
                    failed.join(", ")
                )))
            }
        }
        Command::Simulate {
            scenario,
            seed,
            firms,
            calibration,
            output,
        } => {
            let cal = load_calibration(&calibration, seed, firms)?;
            let path =
                output.unwrap_or_else(|| cli.out_dir.join(format!("panel_{scenario}_{seed}.csv")));
            if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
                prepare_dir(parent)?;
            }
            let panel = generate_panel(&cal, scenario)?;
            panel.save(&path)?;
            let n = panel.records.len();
            println!(
                "wrote {} ({n} firm-years, {} firms)",
                path.display(),
                panel.n_firms()
            );
            println!(
                "truncated at zero: bribe {} of {n}, rep_bribe {} of {n}\n",
                panel.truncated_bribe, panel.truncated_rep_bribe
            );
            print!("{}", summarize_panel(&panel)?);
            Ok(())
        }
        Command::Estimate { input, fit, name } => {
            require_file(&input)?;
            prepare_dir(&cli.out_dir)?;
            let panel = PanelDataset::load(&input)?;
            let spec = fit.spec();
            let result = fit_within(&spec.design(&panel)?, &spec)?;
            let stem = name.unwrap_or_else(|| {
                input
                    .file_stem()
                    .map_or("fit".into(), |s| s.to_string_lossy().into_owned())
            });
            let report = result.report();
            fs::write(cli.out_dir.join(format!("{stem}_report.txt")), &report)?;
            let csv_path = cli.out_dir.join(format!("{stem}_coefficients.csv"));
            result.write_csv(fs::File::create(&csv_path)?)?;
            print!("{report}");
            println!("coefficients written to {}", csv_path.display());
            Ok(())
        }
        Command::Identify { coeffs, alpha } => {
            require_file(&coeffs)?;
            let table = CoefficientTable::load(&coeffs)?;
            print!("{}", classify_scenario(&table, alpha)?);
            Ok(())
        }
        Command::Roundtrip {
            scenario,
            seed,
            reps,
            firms,
            alpha,
            calibration,
            fit,
        } => {
            if reps == 0 {
                return Err(Error::Config("reps must be at least 1".into()).into());
            }
            let cal = load_calibration(&calibration, seed, firms)?;
            prepare_dir(&cli.out_dir)?;
            let summary = run_roundtrip(&cal, scenario, reps, &fit.spec(), alpha)?;
            let path = cli.out_dir.join(format!("roundtrip_{scenario}_{seed}.csv"));
            summary.write_csv(fs::File::create(&path)?)?;
            print!("{summary}");
            println!("per-replication results written to {}", path.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Check(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Core(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) | Error::InvalidCalibration(_) | Error::InvalidParams(_) => 2,
                Error::Io(_) | Error::Csv(_) | Error::Schema { .. } => 3,
                _ => 4,
            })
        }
    }
}
