//! `scripsim`: runs scrip economy experiments and writes CSV/JSON results.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Parser;
use serde_json::{json, Value};

use scrip_core::chain::{initial_state, simulate, SimulationOptions, Simulator};
use scrip_core::entropy::{min_relent_distribution, solve_lambda};
use scrip_core::experiment::{
    reference_thresholds, replica_rng, run_fig2, run_fig3, run_fig4,
    write_fig2_csv, write_fig3_csv, write_fig4_csv,
};
use scrip_core::{
    best_reply_vector, exact_stationary, greatest_equilibrium, value_iteration_policy,
    ExperimentConfig, GameSpec, Mode, ScripError, ThresholdVector,
};

#[derive(Debug, Parser)]
#[command(name = "scripsim", version, about = "Scrip economy simulator")]
struct Cli {
    /// simulate, distribution, best-reply, equilibrium, exact-stationary, fig2, fig3 or fig4
    mode: Mode,
    /// Game spec JSON, either bare or under a "spec" key with experiment fields
    #[arg(long)]
    config: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Output directory, created if missing
    #[arg(long)]
    out: PathBuf,
    /// Comma separated threshold per type
    #[arg(long, value_delimiter = ',')]
    thresholds: Option<Vec<u64>>,
    #[arg(long)]
    rounds: Option<u64>,
    #[arg(long)]
    replicas: Option<u64>,
    #[arg(long)]
    cadence: Option<u64>,
    /// Comma separated population multipliers for fig2, fig3 and fig4
    #[arg(long, value_delimiter = ',')]
    ns: Option<Vec<u64>>,
    /// Threshold cap for best replies, or state cap for exact-stationary
    #[arg(long)]
    cap: Option<u64>,
    /// Squared-distance target for fig4 and simulate
    #[arg(long)]
    epsilon: Option<f64>,
}

/// Problems with the command line or config file.
#[derive(Debug)]
struct ConfigError(String);

impl std::fmt::Display for ConfigError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ConfigError {}

fn config_error(msg: impl Into<String>) -> anyhow::Error {
    ConfigError(msg.into()).into()
}

fn field<T: serde::de::DeserializeOwned>(doc: &Value, key: &str) -> Result<Option<T>> {
    match doc.get(key) {
        None | Some(Value::Null) => Ok(None),
        Some(v) => serde_json::from_value(v.clone())
            .map(Some)
            .map_err(|e| config_error(format!("config field {key:?}: {e}"))),
    }
}

fn resolve(cli: &Cli) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(&cli.config)
        .map_err(|e| config_error(format!("reading {}: {e}", cli.config.display())))?;
    let doc: Value = serde_json::from_str(&text)
        .map_err(|e| config_error(format!("parsing {}: {e}", cli.config.display())))?;
    let spec_doc = doc.get("spec").unwrap_or(&doc);
    let spec: GameSpec = serde_json::from_value(spec_doc.clone())
        .map_err(|e| config_error(format!("invalid game spec: {e}")))?;

    let mut config = ExperimentConfig::new(cli.mode, spec, cli.seed);
    if doc.get("spec").is_some() {
        config.thresholds = field(&doc, "thresholds")?.or(config.thresholds);
        config.rounds = field(&doc, "rounds")?.or(config.rounds);
        config.replicas = field(&doc, "replicas")?.unwrap_or(config.replicas);
        config.cadence = field(&doc, "cadence")?.or(config.cadence);
        config.ns = field(&doc, "ns")?.unwrap_or(config.ns);
        config.cap = field(&doc, "cap")?.or(config.cap);
        config.epsilon = field(&doc, "epsilon")?.unwrap_or(config.epsilon);
    }
    if let Some(k) = &cli.thresholds {
        config.thresholds = Some(ThresholdVector::new(k.clone()));
    }
    config.rounds = cli.rounds.or(config.rounds);
    config.replicas = cli.replicas.unwrap_or(config.replicas);
    config.cadence = cli.cadence.or(config.cadence);
    if let Some(ns) = &cli.ns {
        config.ns = ns.clone();
    }
    config.cap = cli.cap.or(config.cap);
    config.epsilon = cli.epsilon.unwrap_or(config.epsilon);

    let sweep = matches!(cli.mode, Mode::Fig2 | Mode::Fig3 | Mode::Fig4);
    if sweep && config.thresholds.is_none() && config.spec.num_types() == 1 {
        config.thresholds = Some(reference_thresholds());
    }
    if config.replicas == 0 {
        return Err(config_error("replicas must be positive"));
    }
    if !(config.epsilon > 0.0) {
        return Err(config_error("epsilon must be positive"));
    }
    if sweep && config.ns.is_empty() && cli.mode != Mode::Fig3 {
        return Err(config_error("ns must list at least one population size"));
    }
    Ok(config)
}

fn create(out: &Path, name: &str) -> Result<BufWriter<File>> {
    let path = out.join(name);
    let file = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    Ok(BufWriter::new(file))
}

fn write_json(out: &Path, name: &str, config: &ExperimentConfig, result: Value) -> Result<()> {
    let doc = json!({
        "config": config,
        "config_sha256": config.config_hash(),
        "result": result,
    });
    let mut w = create(out, name)?;
    serde_json::to_writer_pretty(&mut w, &doc)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

fn run(config: &ExperimentConfig, out: &Path) -> Result<Vec<String>> {
    let spec = &config.spec;
    let preamble = config.csv_preamble();
    let mut written = Vec::new();
    match config.mode {
        Mode::Simulate => {
            let k = config.require_thresholds()?;
            let target = min_relent_distribution(spec, &k)?;
            let mut rng = replica_rng(config.seed, 0);
            let start = initial_state(spec, &mut rng);
            let mut sim = Simulator::new(spec, &k, start)?;
            let mut options = SimulationOptions::new(config.rounds.unwrap_or(10 * spec.agents()));
            options.cadence = config.cadence.unwrap_or(1);
            options.epsilon = config.epsilon;
            options.record_trace = true;
            let summary = simulate(&mut sim, &target, &options, &mut rng)?;

            let mut w = create(out, "trace.csv")?;
            writeln!(w, "{preamble}")?;
            summary.write_trace_csv(&mut w)?;
            w.flush()?;
            let mut w = create(out, "final_distribution.csv")?;
            writeln!(w, "{preamble}")?;
            sim.empirical().distribution.write_csv(&mut w)?;
            w.flush()?;
            let mut result = serde_json::to_value(&summary)?;
            result.as_object_mut().map(|o| o.remove("trace"));
            write_json(out, "summary.json", config, result)?;
            written.extend(["trace.csv", "final_distribution.csv", "summary.json"].map(String::from));
        }
        Mode::Distribution => {
            let k = config.require_thresholds()?;
            let solution = solve_lambda(spec, &k)?;
            let d = min_relent_distribution(spec, &k)?;
            let mut w = create(out, "distribution.csv")?;
            writeln!(w, "{preamble}")?;
            d.write_csv(&mut w)?;
            w.flush()?;
            write_json(out, "lambda.json", config, serde_json::to_value(solution)?)?;
            written.extend(["distribution.csv", "lambda.json"].map(String::from));
        }
        Mode::BestReply => {
            let k = config.require_thresholds()?;
            let cap = config.cap.unwrap_or_else(|| spec.default_cap());
            let (next, reports) = best_reply_vector(spec, &k, cap)?;
            let mut policies = Vec::new();
            if !reports.is_empty() {
                for t in 0..spec.num_types() {
                    let policy = value_iteration_policy(spec, &k, t, cap)?;
                    if !reports[t].capped && policy.threshold != reports[t].kappa {
                        return Err(ScripError::NumericalAssertion(format!(
                            "type {t}: value iteration threshold {} differs from best reply {}",
                            policy.threshold, reports[t].kappa
                        ))
                        .into());
                    }
                    policies.push(json!({
                        "type": t,
                        "threshold": policy.threshold,
                        "sweeps": policy.sweeps,
                        "concavity_gap": policy.concavity_gap,
                    }));
                }
            }
            let result = json!({
                "thresholds": k,
                "best_reply": next,
                "cap": cap,
                "reports": reports,
                "value_iteration": policies,
            });
            write_json(out, "best_reply.json", config, result)?;
            written.push("best_reply.json".into());
        }
        Mode::Equilibrium => {
            let result = greatest_equilibrium(spec, config.cap)?;
            let mut w = create(out, "equilibrium_trace.csv")?;
            writeln!(w, "{preamble}")?;
            result.write_trace_csv(&mut w)?;
            w.flush()?;
            write_json(out, "equilibrium.json", config, serde_json::to_value(&result)?)?;
            written.extend(["equilibrium_trace.csv", "equilibrium.json"].map(String::from));
        }
        Mode::ExactStationary => {
            let k = config.require_thresholds()?;
            let cap = config
                .cap
                .map(|c| c as usize)
                .unwrap_or(scrip_core::chain::DEFAULT_STATE_CAP);
            let exact = exact_stationary(spec, &k, cap)?;
            let mut w = create(out, "exact_stationary.csv")?;
            writeln!(w, "{preamble}")?;
            exact.write_csv(&mut w)?;
            w.flush()?;
            let result = json!({
                "states": exact.states.len(),
                "max_abs_difference": exact.max_abs_difference,
                "disagreement": exact.disagreement,
                "detailed_balance_residual": exact.detailed_balance_residual,
            });
            write_json(out, "exact_stationary.json", config, result)?;
            written.extend(["exact_stationary.csv", "exact_stationary.json"].map(String::from));
        }
        Mode::Fig2 => {
            let k = config.require_thresholds()?;
            let rounds = config.rounds.unwrap_or(scrip_core::experiment::FIG2_ROUNDS);
            let rows = run_fig2(spec, &k, &config.ns, rounds, config.seed)?;
            let mut w = create(out, "fig2.csv")?;
            write_fig2_csv(&rows, &preamble, &mut w)?;
            w.flush()?;
            written.push("fig2.csv".into());
        }
        Mode::Fig3 => {
            let k = config.require_thresholds()?;
            let spec = match config.ns.first() {
                Some(&n) => spec.with_replicas(n)?,
                None => spec.clone(),
            };
            let rounds = config
                .rounds
                .unwrap_or(scrip_core::experiment::FIG3_ROUNDS_PER_AGENT * spec.agents());
            let rows = run_fig3(&spec, &k, config.replicas, rounds, config.seed)?;
            let mut w = create(out, "fig3.csv")?;
            write_fig3_csv(&rows, &preamble, &mut w)?;
            w.flush()?;
            written.push("fig3.csv".into());
        }
        Mode::Fig4 => {
            let k = config.require_thresholds()?;
            let (rows, fit) = run_fig4(spec, &k, &config.ns, config.replicas, config.epsilon, config.seed)?;
            let mut w = create(out, "fig4.csv")?;
            write_fig4_csv(&rows, &fit, &preamble, &mut w)?;
            w.flush()?;
            write_json(out, "fig4_fit.json", config, serde_json::to_value(fit)?)?;
            written.extend(["fig4.csv", "fig4_fit.json"].map(String::from));
        }
    }
    Ok(written)
}

fn exit_code(err: &anyhow::Error) -> u8 {
    if err.downcast_ref::<ConfigError>().is_some() {
        return 2;
    }
    match err.downcast_ref::<ScripError>() {
        Some(e) if e.is_validation() => 2,
        Some(_) => 3,
        None => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = resolve(&cli).and_then(|config| {
        fs::create_dir_all(&cli.out)
            .with_context(|| format!("creating {}", cli.out.display()))?;
        let mut w = create(&cli.out, "config.json")?;
        writeln!(w, "{}", config.to_json())?;
        w.flush()?;
        let written = run(&config, &cli.out)?;
        for name in written {
            println!("{}", cli.out.join(name).display());
        }
        Ok(())
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
