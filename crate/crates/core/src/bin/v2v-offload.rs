use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use v2v_offload::harness::{
    feasibility_csv, generate_scenario, run_convergence, run_sweep, solutions_csv, solve_scenario,
    Algorithm, GroupSelector, SolveOptions,
};
use v2v_offload::{Scenario, ScenarioConfig, Weights};

#[derive(Parser)]
#[command(
    name = "v2v-offload",
    version,
    about = "Opportunistic V2V computation offloading simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a scenario and write scenario.json
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Solve every group of a scenario with all algorithms; writes
    /// solutions.csv and feasibility.csv
    Solve {
        #[command(flatten)]
        common: Common,
        /// Scenario file to solve instead of generating one
        #[arg(long)]
        scenario: Option<PathBuf>,
    },
    /// Sweep the seller count and write sweep.csv
    Sweep {
        #[command(flatten)]
        common: Common,
        /// Seller counts as MIN:MAX:STEP
        #[arg(long, default_value = "100:1100:100", value_parser = parse_range)]
        seller_range: SellerCounts,
        #[arg(long, default_value_t = 3)]
        replicates: usize,
    },
    /// Anneal one group and write its convergence trace to trace.csv
    Convergence {
        #[command(flatten)]
        common: Common,
        /// Group index; defaults to the first group with a seller
        #[arg(long)]
        group: Option<usize>,
    },
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    buyers: Option<u32>,
    #[arg(long)]
    sellers: Option<u32>,
    /// Vehicles per kilometer
    #[arg(long)]
    density: Option<f64>,
    /// Transmission radius in meters
    #[arg(long)]
    radius: Option<f64>,
    /// Resource blocks per megabit
    #[arg(long)]
    k_factor: Option<f64>,
    /// Objective weights w1,w2,w3
    #[arg(long)]
    weights: Option<Weights>,
    /// Average-offloading markup over cost
    #[arg(long)]
    markup: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Annealing iteration cap
    #[arg(long)]
    iters: Option<usize>,
    /// Annealing cooling ratio
    #[arg(long)]
    alpha: Option<f64>,
    /// Output directory
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

impl Common {
    fn config(&self) -> ScenarioConfig {
        let mut c = ScenarioConfig::default();
        if let Some(v) = self.buyers {
            c.buyer_count = v;
        }
        if let Some(v) = self.sellers {
            c.seller_count = v;
        }
        if let Some(v) = self.density {
            c.density = v;
        }
        if let Some(v) = self.radius {
            c.radius = v;
        }
        if let Some(v) = self.k_factor {
            c.k_factor = v;
        }
        if let Some(v) = self.weights {
            c.weights = v;
        }
        if let Some(v) = self.seed {
            c.rng_seed = v;
        }
        c
    }

    fn options(&self) -> SolveOptions {
        let mut o = SolveOptions::default();
        if let Some(v) = self.markup {
            o.markup = v;
        }
        if let Some(v) = self.iters {
            o.schedule.max_iterations = v;
        }
        if let Some(v) = self.alpha {
            o.schedule.cooling_ratio = v;
        }
        o
    }

    fn write(&self, name: &str, contents: &str) -> Result<PathBuf> {
        fs::create_dir_all(&self.out)
            .with_context(|| format!("creating {}", self.out.display()))?;
        let path = self.out.join(name);
        fs::write(&path, contents).with_context(|| format!("writing {}", path.display()))?;
        Ok(path)
    }
}

#[derive(Clone)]
struct SellerCounts(Vec<u32>);

fn parse_range(s: &str) -> Result<SellerCounts, String> {
    let parts: Vec<u32> = s
        .split(':')
        .map(|p| {
            p.parse::<u32>()
                .map_err(|e| format!("bad seller range {s:?}: {e}"))
        })
        .collect::<Result<_, _>>()?;
    let [min, max, step] = parts[..] else {
        return Err(format!("seller range must be MIN:MAX:STEP, got {s:?}"));
    };
    if step == 0 || min > max {
        return Err(format!("seller range {s:?} is empty"));
    }
    Ok(SellerCounts((min..=max).step_by(step as usize).collect()))
}

fn load_scenario(path: &Path) -> Result<Scenario> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut scenario =
        Scenario::from_json(&text).with_context(|| format!("parsing {}", path.display()))?;
    if scenario.groups.is_none() {
        let groups = v2v_offload::mobility::form_groups(
            &scenario.buyers,
            &scenario.sellers,
            &scenario.kinematics,
            &scenario.config,
        )?;
        scenario.groups = Some(groups);
    }
    Ok(scenario)
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate { common } => {
            let scenario = generate_scenario(&common.config())?;
            let path = common.write("scenario.json", &scenario.to_json())?;
            println!("wrote {}", path.display());
        }
        Command::Solve { common, scenario } => {
            let scenario = match scenario {
                Some(path) => load_scenario(&path)?,
                None => generate_scenario(&common.config())?,
            };
            let outcomes = solve_scenario(&scenario, &Algorithm::ALL, &common.options())?;
            if let Some(bad) = outcomes.iter().find(|o| !o.report.is_feasible()) {
                bail!(
                    "group {} ({}) produced an infeasible solution",
                    bad.group_index,
                    bad.algorithm
                );
            }
            let path = common.write("solutions.csv", &solutions_csv(&outcomes)?)?;
            common.write("feasibility.csv", &feasibility_csv(&outcomes)?)?;
            println!("wrote {}", path.display());
        }
        Command::Sweep {
            common,
            seller_range,
            replicates,
        } => {
            if replicates == 0 {
                bail!("--replicates must be at least 1");
            }
            let sweep = run_sweep(
                &common.config(),
                &seller_range.0,
                &Algorithm::ALL,
                replicates,
                &common.options(),
            )?;
            let path = common.write("sweep.csv", &sweep.to_csv()?)?;
            println!("wrote {}", path.display());
        }
        Command::Convergence { common, group } => {
            let selector = group.map_or(GroupSelector::FirstNonEmpty, GroupSelector::Index);
            let trace = run_convergence(&common.config(), selector, &common.options())?;
            let path = common.write("trace.csv", &trace.to_csv())?;
            println!("wrote {}", path.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
