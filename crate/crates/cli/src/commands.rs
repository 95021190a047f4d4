//! One function per subcommand. Each returns whether the run counts as
//! converged for the exit status.

use std::fs;
use std::path::{Path, PathBuf};

use boapta_circuit::{newton_solve, run_cepta, Circuit, Netlist, NewtonOptions, SolverLimits, SolverParams};
use boapta_core::report::{best_record_csv, speedup_vs_default};
use boapta_core::{
    mc_accelerate, mc_constant, random_search, read_log, speedup_report, BoConfig, Campaign, CeptaSimulator, Checkpoint,
    McOptions, McReport, Strategy, TrialLog, TrialRecord, WarmStart,
};
use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::error::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Method {
    Nr,
    Cepta,
}

fn solution_map(circuit: &Circuit, u: &[f64]) -> Map<String, Value> {
    circuit.node_voltages(u).into_iter().map(|(n, v)| (n, json!(v))).collect()
}

fn simulate_one(id: &str, netlist: &Netlist, method: Method, params: &SolverParams) -> Result<(bool, Value), CliError> {
    let wrap = |source| CliError::Circuit { circuit: id.to_string(), source };
    let circuit = Circuit::new(netlist).map_err(wrap)?;
    let (converged, iterations, time_steps, u, udot) = match method {
        Method::Nr => {
            let r = newton_solve(&circuit, &vec![0.0; circuit.dim()], &NewtonOptions::default());
            (r.converged, r.iterations as u64, 0, r.solution, None)
        }
        Method::Cepta => {
            let r = run_cepta(netlist, params, &SolverLimits::default()).map_err(wrap)?;
            (r.converged, r.total_nr_iterations, r.time_steps, r.dc_solution, Some(r.final_udot))
        }
    };
    let method = match method {
        Method::Nr => "nr",
        Method::Cepta => "cepta",
    };
    let out = json!({
        "circuit": id,
        "method": method,
        "converged": converged,
        "iterations": iterations,
        "time_steps": time_steps,
        "solution": solution_map(&circuit, &u),
        "final_udot": udot,
    });
    Ok((converged, out))
}

/// Solves every circuit concurrently and prints one JSON object per line, in
/// input order.
pub fn simulate(circuits: &[(String, Netlist)], method: Method, params: &SolverParams) -> Result<bool, CliError> {
    params.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    let results: Vec<Result<(bool, Value), CliError>> = std::thread::scope(|s| {
        let handles: Vec<_> = circuits.iter().map(|(id, n)| s.spawn(move || simulate_one(id, n, method, params))).collect();
        handles.into_iter().map(|h| h.join().expect("solver thread panicked")).collect()
    });
    let mut all = true;
    for r in results {
        let (converged, value) = r?;
        all &= converged;
        println!("{value}");
    }
    Ok(all)
}

#[derive(Serialize)]
struct OptimizeHeader<'a> {
    config: &'a BoConfig,
    strategy: Strategy,
    circuits: Vec<&'a str>,
}

fn create_dir(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir).map_err(|e| CliError::Usage(format!("cannot create {}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    fs::write(path, text).map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}

fn write_log(path: &Path, command: &str, header: &impl Serialize, records: &[TrialRecord]) -> Result<(), CliError> {
    let mut log = TrialLog::create(path, command, header)?;
    for r in records {
        log.record(r)?;
    }
    Ok(log.flush()?)
}

fn every_circuit_converged(records: &[TrialRecord]) -> bool {
    let mut seen = std::collections::BTreeMap::new();
    for r in records {
        *seen.entry(&r.circuit_id).or_insert(false) |= r.converged;
    }
    seen.values().all(|c| *c)
}

pub struct OptimizeArgs {
    pub out: PathBuf,
    pub resume: bool,
    /// Overrides the epoch count of a resumed checkpoint.
    pub epochs_override: Option<usize>,
    pub random_baseline: bool,
}

/// Cold-start campaign with a trial log and checkpoint after every epoch.
///
/// Writes `trials.jsonl`, `checkpoint.json`, `summary.csv` and
/// `speedup_default.{csv,svg}` under `out`; with the random baseline also
/// `random_trials.jsonl` and `speedup_random.{csv,svg}`.
pub fn optimize(circuits: Vec<(String, Netlist)>, config: BoConfig, args: &OptimizeArgs) -> Result<bool, CliError> {
    config.validate()?;
    if config.epochs == 0 {
        return Err(CliError::Usage("epochs must be at least 1".into()));
    }
    create_dir(&args.out)?;
    let log_path = args.out.join("trials.jsonl");
    let cp_path = args.out.join("checkpoint.json");
    let sim = CeptaSimulator::default();

    let (mut campaign, mut log) = if args.resume {
        let mut cp = Checkpoint::load(&cp_path)?;
        if let Some(e) = args.epochs_override {
            cp.config.epochs = e;
        }
        (Campaign::resume(circuits.clone(), cp)?, TrialLog::append(&log_path)?)
    } else {
        let header = OptimizeHeader {
            config: &config,
            strategy: Strategy::Bayesian,
            circuits: circuits.iter().map(|(id, _)| id.as_str()).collect(),
        };
        let log = TrialLog::create(&log_path, "optimize", &header)?;
        (Campaign::new(circuits.clone(), config.clone(), Strategy::Bayesian)?, log)
    };
    campaign.run(&sim, |c, recs| {
        for r in recs {
            log.record(r)?;
        }
        log.flush()?;
        let e = c.epochs_done.unwrap_or(0);
        eprintln!("epoch {e}/{}: {}", c.config.epochs, recs.iter().map(|r| format!("{}={}", r.circuit_id, r.y)).collect::<Vec<_>>().join(" "));
        c.checkpoint().save(&cp_path)
    })?;

    let records = &campaign.records;
    write_text(&args.out.join("summary.csv"), &best_record_csv(records)?)?;
    let vs_default = speedup_vs_default(records)?;
    vs_default.write(&args.out.join("speedup_default.csv"), &args.out.join("speedup_default.svg"))?;
    println!("circuit,default,best,speedup");
    for row in &vs_default.rows {
        let s = row.speedup.map_or_else(|| "excluded".to_string(), |s| format!("{s:.3}"));
        println!("{},{},{},{s}", row.circuit_id, row.baseline_best, row.method_best);
    }
    if let Some(m) = vs_default.mean {
        println!("mean speedup over defaults: {m:.3}");
    }

    if args.random_baseline {
        let random = random_search(circuits.clone(), &sim, &campaign.config)?;
        let header = OptimizeHeader {
            config: &campaign.config,
            strategy: Strategy::Random,
            circuits: circuits.iter().map(|(id, _)| id.as_str()).collect(),
        };
        write_log(&args.out.join("random_trials.jsonl"), "optimize", &header, &random.records)?;
        let vs_random = speedup_report(&random.records, records)?;
        vs_random.write(&args.out.join("speedup_random.csv"), &args.out.join("speedup_random.svg"))?;
        if let Some(m) = vs_random.mean {
            println!("mean speedup over random search: {m:.3}");
        }
    }
    Ok(every_circuit_converged(records))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum McMethod {
    Constant,
    Accelerate,
    Both,
}

fn mc_summary(r: &McReport) -> Value {
    let (mean, std) = r.cost_stats();
    let finite = |v: f64| if v.is_finite() { json!(v) } else { Value::Null };
    json!({
        "method": r.method,
        "nc": r.non_converged(),
        "mean": finite(mean),
        "std": finite(std),
        "total_cost": r.total_cost(),
        "frozen_at": r.frozen_at,
        "samples": r.samples,
    })
}

/// Monte-Carlo run on one circuit. Both methods see identical netlist draws.
/// Writes `mc_report.json` and one trial log per method under `out`.
pub fn monte_carlo(
    circuit: (String, Netlist),
    config: BoConfig,
    opts: McOptions,
    method: McMethod,
    warm: Option<&Path>,
    out: &Path,
) -> Result<bool, CliError> {
    opts.validate()?;
    config.validate()?;
    let warm = warm.map(Checkpoint::load).transpose()?.map(WarmStart::from);
    create_dir(out)?;
    let (id, netlist) = circuit;
    let sim = CeptaSimulator::default();
    let mut reports = Vec::new();
    if method != McMethod::Accelerate {
        reports.push(mc_constant(&id, &netlist, &sim, &config.defaults, &opts)?);
    }
    if method != McMethod::Constant {
        reports.push(mc_accelerate(&id, &netlist, &sim, &config, &opts, warm.as_ref())?);
    }
    let header = json!({ "config": config, "options": opts, "circuit": id, "warm": warm.is_some() });
    for r in &reports {
        write_log(&out.join(format!("mc_{}.jsonl", r.method)), "mc", &header, &r.records)?;
    }
    let doc = json!({
        "circuit": id,
        "options": opts,
        "methods": reports.iter().map(mc_summary).collect::<Vec<_>>(),
    });
    write_text(&out.join("mc_report.json"), &serde_json::to_string_pretty(&doc).expect("report serializes"))?;

    println!("{:<11} {:>4} {:>10} {:>10}", "method", "#NC", "mean", "STD");
    for r in &reports {
        let (mean, std) = r.cost_stats();
        println!("{:<11} {:>4} {:>10.2} {:>10.2}", r.method, r.non_converged(), mean, std);
    }
    Ok(reports.iter().all(|r| r.non_converged() < r.samples.len()))
}

/// Speed-up table from a trial log, against its own default runs or a
/// baseline log.
pub fn report(log: &Path, baseline: Option<&Path>, out: Option<&Path>) -> Result<bool, CliError> {
    let (_, records) = read_log(log)?;
    if records.is_empty() {
        return Err(CliError::Usage(format!("{} holds no trials", log.display())));
    }
    let rep = match baseline {
        Some(b) => speedup_report(&read_log(b)?.1, &records)?,
        None => speedup_vs_default(&records)?,
    };
    print!("{}", rep.to_csv()?);
    if let Some(dir) = out {
        create_dir(dir)?;
        rep.write(&dir.join("speedup.csv"), &dir.join("speedup.svg"))?;
        write_text(&dir.join("summary.csv"), &best_record_csv(&records)?)?;
    }
    Ok(every_circuit_converged(&records))
}
