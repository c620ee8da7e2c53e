//! `coalitions`: command line front end for the coalition-formation library.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use coalition_core::enumerate::enumerate_partitions;
use coalition_core::experiments::{
    self, figure_grid, figure_instance, grade_figure, grade_table1, run_example_rbia,
    run_example_shapley3, run_figure, run_table1, sweep_csv, sweep_diagnostics, table1_csv,
    ArtifactDir, TABLE1_SAMPLED,
};
use coalition_core::payoffs::USER_TOLERANCE;
use coalition_core::stability::{
    check_gbpa, check_rbia, check_rbpa, is_stable_partition_rbia, rbpa_stable_polytope_feasible,
    PolytopeReport,
};
use coalition_core::traffic::{parse_grid, regime_sweep};
use coalition_core::{
    erlang_b, erlang_b_real, BlockReport, Configuration, Game, Instance, OfferedLoad, Partition,
    PayoffRule, Rule, Scenario, StabilityVerdict,
};
use serde_json::{json, Map, Value};

/// Largest agent count accepted by `classify`.
const CLASSIFY_CAP: usize = 8;

#[derive(Parser)]
#[command(
    name = "coalitions",
    version,
    about = "Coalitions of Erlang-B service providers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Erlang-B blocking probability.
    Erlang {
        #[arg(long)]
        servers: f64,
        #[arg(long)]
        load: f64,
        /// Accept a non-integer server count.
        #[arg(long)]
        real: bool,
    },
    /// Wardrop split of the market for one partition.
    We {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long)]
        partition: String,
    },
    /// Per-server rate profile of duopolies and its maximisers.
    Kstar {
        #[command(flatten)]
        scenario: ScenarioArg,
    },
    /// Allocate each coalition's rate among its members.
    Payoff {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long)]
        partition: String,
        #[arg(long, value_enum)]
        rule: AllocationArg,
    },
    /// Check one configuration against a blocking rule.
    Stability {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long)]
        partition: String,
        #[arg(long, value_enum)]
        rule: RuleArg,
        /// Allocation rule used to build the payoff vector.
        #[arg(long, value_enum, conflicts_with = "phi")]
        payoff: Option<AllocationArg>,
        /// Payoff vector as a JSON array in agent order, e.g. "[1.5,2.0,0.5]".
        #[arg(long)]
        phi: Option<String>,
    },
    /// Stability verdict for every partition.
    Classify {
        #[command(flatten)]
        scenario: ScenarioArg,
        #[arg(long, value_enum)]
        rule: RuleArg,
        /// Judge each partition under this allocation instead of asking
        /// whether some stable allocation exists.
        #[arg(long, value_enum)]
        payoff: Option<AllocationArg>,
    },
    /// Stable duopolies along a grid of market sizes, as CSV.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArg,
        /// `log:LO:HI:COUNT`, `lin:LO:HI:COUNT` or a comma-separated list.
        #[arg(long)]
        grid: String,
        #[command(flatten)]
        out: OutArg,
    },
    /// Unstable duopolies of the (N1, 2, 2, 2) market under both allocations.
    Table1 {
        /// Every N1 in 2..=41 instead of three per band.
        #[arg(long)]
        full: bool,
        #[command(flatten)]
        out: OutArg,
    },
    /// Worked example: (10, 2, 2, 2) at market size 13 under RB-IA.
    ExampleRbia {
        #[command(flatten)]
        out: OutArg,
    },
    /// Worked example: (80, 20, 5) at market size 100 under RB-PA.
    ExampleShapley3 {
        #[command(flatten)]
        out: OutArg,
    },
    /// Stable duopolies of (7, 2, 2, 2, 2) against market size, as CSV.
    Figure {
        /// Defaults to 25 log-spaced points from 1e-2 to 1e3.
        #[arg(long)]
        grid: Option<String>,
        #[command(flatten)]
        out: OutArg,
    },
}

#[derive(Args)]
struct ScenarioArg {
    /// JSON file `{"capacities": [...], "lambda": x, "mu": y}`.
    #[arg(long)]
    scenario: PathBuf,
}

impl ScenarioArg {
    fn load(&self) -> Result<Instance> {
        let text = fs::read_to_string(&self.scenario)
            .with_context(|| format!("reading {}", self.scenario.display()))?;
        Instance::from_json(&text).with_context(|| format!("parsing {}", self.scenario.display()))
    }
}

#[derive(Args)]
struct OutArg {
    /// Write artifacts and a manifest into this directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum AllocationArg {
    Proportional,
    Shapley,
}

impl From<AllocationArg> for PayoffRule {
    fn from(a: AllocationArg) -> Self {
        match a {
            AllocationArg::Proportional => PayoffRule::Proportional,
            AllocationArg::Shapley => PayoffRule::Shapley,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RuleArg {
    Gbpa,
    Rbpa,
    Rbia,
}

impl From<RuleArg> for Rule {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::Gbpa => Rule::Gbpa,
            RuleArg::Rbpa => Rule::Rbpa,
            RuleArg::Rbia => Rule::Rbia,
        }
    }
}

/// Whether a golden comparison held.
enum Outcome {
    Done,
    Mismatch,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(Outcome::Done) => ExitCode::SUCCESS,
        Ok(Outcome::Mismatch) => ExitCode::from(1),
        // downstream reader closed early, e.g. `| head`
        Err(e)
            if e.downcast_ref::<io::Error>()
                .is_some_and(|e| e.kind() == io::ErrorKind::BrokenPipe) =>
        {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}

fn run(command: Command) -> Result<Outcome> {
    match command {
        Command::Erlang {
            servers,
            load,
            real,
        } => {
            let a = OfferedLoad::new(load)?;
            let b = if real {
                erlang_b_real(servers, a)?
            } else {
                if !(servers >= 0.0 && servers.fract() == 0.0 && servers <= f64::from(u32::MAX)) {
                    bail!("--servers must be a non-negative integer without --real, got {servers}");
                }
                erlang_b(servers as u32, a)
            };
            println!("{b:e}");
        }
        Command::We {
            scenario,
            partition,
        } => {
            let inst = scenario.load()?;
            let p = inst.parse_partition(&partition)?;
            let split = Game::new(inst.clone()).split(&p)?;
            let rates: Vec<Value> = split
                .rates()
                .map(|(c, r)| json!({"coalition": inst.coalition_ids(c), "servers": inst.capacity_of(c), "rate": r}))
                .collect();
            print_json(&json!({
                "scenario": inst.scenario(),
                "partition": inst.partition_ids(&p),
                "rates": rates,
                "blocking": split.common_blocking(),
            }))?;
        }
        Command::Kstar { scenario } => {
            let inst = scenario.load()?;
            let ks = Game::new(inst.clone()).k_star()?;
            print_json(&json!({
                "scenario": inst.scenario(),
                "profile": ks.profile.iter().map(|&(k, v)| json!({"k": k, "psi": v})).collect::<Vec<_>>(),
                "k_star": ks.ks,
                "coalitions": ks.coalitions.iter().map(|&c| inst.coalition_ids(c)).collect::<Vec<_>>(),
            }))?;
        }
        Command::Payoff {
            scenario,
            partition,
            rule,
        } => {
            let inst = scenario.load()?;
            let game = Game::new(inst.clone());
            let p = inst.parse_partition(&partition)?;
            let rule = PayoffRule::from(rule);
            let cfg = rule.apply(&game, &p)?;
            print_json(&json!({
                "scenario": inst.scenario(),
                "partition": inst.partition_ids(&p),
                "rule": rule.to_string(),
                "phi": keyed_by_id(&inst, cfg.phi()),
            }))?;
        }
        Command::Stability {
            scenario,
            partition,
            rule,
            payoff,
            phi,
        } => {
            let inst = scenario.load()?;
            let game = Game::new(inst.clone());
            let p = inst.parse_partition(&partition)?;
            let cfg = match phi {
                Some(text) => {
                    let per_user: Vec<f64> =
                        serde_json::from_str(&text).with_context(|| format!("--phi {text:?}"))?;
                    let per_agent = inst.from_user_order(&per_user)?;
                    Configuration::new(&game, p.clone(), per_agent, USER_TOLERANCE)?
                }
                None => PayoffRule::from(payoff.unwrap_or(AllocationArg::Proportional))
                    .apply(&game, &p)?,
            };
            let verdict = check(&game, &cfg, rule.into())?;
            let mut out = verdict_json(&inst, &verdict);
            out["scenario"] = json!(inst.scenario());
            out["partition"] = json!(inst.partition_ids(&p));
            out["phi"] = keyed_by_id(&inst, cfg.phi());
            print_json(&out)?;
        }
        Command::Classify {
            scenario,
            rule,
            payoff,
        } => {
            let inst = scenario.load()?;
            if inst.n() > CLASSIFY_CAP {
                bail!(
                    "classify handles at most {CLASSIFY_CAP} agents, got {}",
                    inst.n()
                );
            }
            let game = Game::new(inst.clone());
            let rule = Rule::from(rule);
            let mut rows = Vec::new();
            for blocks in enumerate_partitions(&inst)? {
                let p = Partition::new(inst.n(), blocks)?;
                let mut row = match (payoff, rule) {
                    (Some(a), _) => verdict_json(
                        &inst,
                        &check(&game, &PayoffRule::from(a).apply(&game, &p)?, rule)?,
                    ),
                    (None, Rule::Rbia) => {
                        verdict_json(&inst, &is_stable_partition_rbia(&game, &p)?)
                    }
                    (None, Rule::Rbpa) => {
                        polytope_json(&inst, &rbpa_stable_polytope_feasible(&game, &p)?)
                    }
                    (None, Rule::Gbpa) => bail!("classify under GB-PA needs --payoff"),
                };
                row["partition"] = json!(inst.partition_ids(&p));
                rows.push(row);
            }
            let basis = match payoff {
                Some(a) => PayoffRule::from(a).to_string(),
                None => "exists".to_string(),
            };
            print_json(&json!({
                "scenario": inst.scenario(),
                "rule": rule.to_string(),
                "basis": basis,
                "partitions": rows,
            }))?;
        }
        Command::Sweep {
            scenario,
            grid,
            out,
        } => {
            let inst = scenario.load()?;
            let grid = parse_grid(&grid)?;
            let report = regime_sweep(&inst, &grid)?;
            emit_sweep(&report, out.out.as_deref(), "sweep", None)?;
        }
        Command::Table1 { full, out } => {
            let n1: Vec<u32> = if full {
                experiments::table1_full()
            } else {
                TABLE1_SAMPLED.to_vec()
            };
            let rows = run_table1(&n1)?;
            let checks = grade_table1(&rows);
            let mut csv = Vec::new();
            table1_csv(&rows, &mut csv)?;
            let grading: Vec<Value> = checks
                .iter()
                .map(|c| json!({"n1": c.n1, "rule": c.rule.to_string(), "pass": c.pass, "saturated": c.saturated, "detail": c.detail}))
                .collect();
            let failed = checks.iter().filter(|c| c.pass == Some(false)).count();
            for c in &checks {
                if c.pass == Some(false) || c.saturated {
                    eprintln!(
                        "N1={} {}: pass={:?} saturated={} {}",
                        c.n1, c.rule, c.pass, c.saturated, c.detail
                    );
                }
            }
            let summary = json!({"rows": grading, "failed": failed});
            let scenarios = n1
                .iter()
                .map(|&v| Ok(experiments::table1_instance(v)?.scenario()))
                .collect::<Result<Vec<Scenario>>>()?;
            match out.out {
                Some(dir) => {
                    let mut a = ArtifactDir::create(&dir)?;
                    a.write("table1.csv", &csv)?;
                    a.write_json("table1_grading.json", &summary)?;
                    a.finish("table1", &scenarios)?;
                }
                None => io::stdout().write_all(&csv)?,
            }
            eprintln!(
                "table1: {} rows graded, {failed} failed",
                checks.iter().filter(|c| c.pass.is_some()).count()
            );
            return Ok(if failed == 0 {
                Outcome::Done
            } else {
                Outcome::Mismatch
            });
        }
        Command::ExampleRbia { out } => {
            let r = run_example_rbia()?;
            emit_report(
                "example_rbia",
                &r.to_json(),
                &r.instance,
                out.out.as_deref(),
            )?;
            return Ok(golden(r.passes(), "example-rbia"));
        }
        Command::ExampleShapley3 { out } => {
            let r = run_example_shapley3()?;
            emit_report(
                "example_shapley3",
                &r.to_json(),
                &r.instance,
                out.out.as_deref(),
            )?;
            return Ok(golden(r.passes(), "example-shapley3"));
        }
        Command::Figure { grid, out } => {
            let inst = figure_instance();
            let graded = grid.is_none();
            let grid = match grid {
                Some(g) => parse_grid(&g)?,
                None => figure_grid(),
            };
            let report = run_figure(&inst, &grid)?;
            let check = grade_figure(&report);
            let check_json = json!({
                "graded": graded,
                "left_capacities": check.left_capacities,
                "left_matches_light_class": check.left_matches_light_class,
                "right_all_stable": check.right_all_stable,
                "nested": check.nested,
                "pass": check.passes(),
            });
            emit_sweep(&report, out.out.as_deref(), "figure", Some(check_json))?;
            if graded {
                return Ok(golden(check.passes(), "figure"));
            }
        }
    }
    Ok(Outcome::Done)
}

fn golden(pass: bool, name: &str) -> Outcome {
    if pass {
        Outcome::Done
    } else {
        eprintln!("{name}: golden mismatch");
        Outcome::Mismatch
    }
}

fn check(game: &Game, cfg: &Configuration, rule: Rule) -> Result<StabilityVerdict> {
    Ok(match rule {
        Rule::Gbpa => check_gbpa(game, cfg)?,
        Rule::Rbpa => check_rbpa(game, cfg)?,
        Rule::Rbia => check_rbia(game, cfg)?,
    })
}

fn print_json(v: &Value) -> Result<()> {
    let mut stdout = io::stdout().lock();
    serde_json::to_writer_pretty(&mut stdout, v)?;
    writeln!(stdout)?;
    Ok(())
}

/// `{"1": φ_1, "2": φ_2, ...}` using the caller's 1-based agent ids.
fn keyed_by_id(inst: &Instance, per_agent: &[f64]) -> Value {
    let map: Map<String, Value> = inst
        .to_user_order(per_agent)
        .into_iter()
        .enumerate()
        .map(|(i, v)| ((i + 1).to_string(), json!(v)))
        .collect();
    Value::Object(map)
}

fn witness_json(inst: &Instance, w: &BlockReport) -> Value {
    json!({
        "coalition": inst.coalition_ids(w.blocker),
        "kind": w.kind,
        "anticipated": w.anticipated,
        "prevailing": w.prevailing,
        "margin": w.margin,
        "deviation": w.deviation.as_ref().map(|d| json!({
            "partition": inst.partition_ids(&d.partition),
            "rate": d.rate,
            "payoff": d.payoff,
        })),
    })
}

fn verdict_json(inst: &Instance, v: &StabilityVerdict) -> Value {
    json!({
        "rule": v.rule,
        "stable": v.stable,
        "witnesses": v.witnesses.iter().map(|w| witness_json(inst, w)).collect::<Vec<_>>(),
    })
}

fn polytope_json(inst: &Instance, r: &PolytopeReport) -> Value {
    json!({
        "stable": r.feasible,
        "slack": if r.slack.is_finite() { json!(r.slack) } else { Value::Null },
        "witness_phi": r.witness_phi.as_ref().map(|phi| keyed_by_id(inst, phi)),
        "merger_block": r.merger_block.as_ref().map(|w| witness_json(inst, w)),
    })
}

fn emit_report(name: &str, report: &Value, inst: &Instance, out: Option<&Path>) -> Result<()> {
    match out {
        Some(dir) => {
            let mut a = ArtifactDir::create(dir)?;
            a.write_json(&format!("{name}.json"), report)?;
            a.finish(name, &[inst.scenario()])?;
            Ok(())
        }
        None => print_json(report),
    }
}

fn emit_sweep(
    report: &coalition_core::traffic::RegimeReport,
    out: Option<&Path>,
    name: &str,
    check: Option<Value>,
) -> Result<()> {
    let mut csv = Vec::new();
    sweep_csv(report, &mut csv)?;
    match out {
        Some(dir) => {
            let mut diag = sweep_diagnostics(report);
            if let Some(c) = check {
                diag["check"] = c;
            }
            let mut a = ArtifactDir::create(dir)?;
            a.write(&format!("{name}.csv"), &csv)?;
            a.write_json(&format!("{name}_diagnostics.json"), &diag)?;
            a.finish(name, &[report.instance.scenario()])?;
        }
        None => io::stdout().write_all(&csv)?,
    }
    Ok(())
}
