use std::fs;
use std::ops::RangeInclusive;
use std::path::Path;

use qdist_core::algorithms::{
    kmeans, parse_feature_csv, parse_terms, phase_unitary, plae_programs, plae_queries, qpe_bits,
    qpe_circuit, qpe_demo, rotation_oracle, vqe_programs, Estimation, PlaeConfig,
};
use qdist_core::engine::{run_parallel, RunOptions, RunOutput, TraceMode};
use qdist_core::error::CircuitError;
use qdist_core::metrics::{
    count_distributed, count_monolithic, sweep_csv, sweep_qpe, AccountingProfile,
};
use qdist_core::scheduler::Allocator;
use qdist_core::{
    build_parallel_program, Circuit, Error, MergeSpec, ParallelProgram, Program, Topology,
};
use serde_json::{json, Value};

use crate::output::{format_float, json_line};
use crate::{Cluster, Command, Outputs};

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    fn input(message: impl Into<String>) -> Self {
        Failure {
            code: 2,
            message: message.into(),
        }
    }

    fn internal(message: impl Into<String>) -> Self {
        Failure {
            code: 1,
            message: message.into(),
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let message = match &e {
            Error::Circuit(CircuitError::Invalid(violations)) => {
                let lines: Vec<String> = violations.iter().map(|v| format!("  {v}")).collect();
                format!("invalid circuit:\n{}", lines.join("\n"))
            }
            _ => e.to_string(),
        };
        Failure {
            code: if e.is_validation() { 2 } else { 1 },
            message,
        }
    }
}

macro_rules! impl_from_core {
    ($($t:ty),*) => {$(
        impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Error::from(e).into()
            }
        }
    )*};
}

impl_from_core!(
    qdist_core::error::CircuitError,
    qdist_core::error::TopologyError,
    qdist_core::error::ScheduleError,
    qdist_core::error::RemapError,
    qdist_core::error::EngineError,
    qdist_core::error::AlgorithmError
);

type Outcome = Result<(), Failure>;

pub fn parse_range(s: &str) -> Result<RangeInclusive<usize>, String> {
    let parse = |x: &str| x.trim().parse::<usize>().map_err(|e| format!("{x:?}: {e}"));
    let (lo, hi) = match s.split_once("..") {
        Some((a, b)) => (parse(a)?, parse(b.strip_prefix('=').unwrap_or(b))?),
        None => {
            let n = parse(s)?;
            (n, n)
        }
    };
    if lo == 0 || lo > hi {
        return Err(format!("range {s} must be nonempty and start at 1 or more"));
    }
    Ok(lo..=hi)
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path)
        .map_err(|e| Failure::input(format!("cannot read {}: {e}", path.display())))
}

fn write(path: &Path, text: &str) -> Outcome {
    fs::write(path, text)
        .map_err(|e| Failure::internal(format!("cannot write {}: {e}", path.display())))
}

fn load_circuit(path: &Path) -> Result<Circuit, Failure> {
    let c = Circuit::from_json(&read(path)?)
        .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?;
    let violations = c.structural_violations();
    if !violations.is_empty() {
        let f: Failure = CircuitError::Invalid(violations).into();
        return Err(Failure::input(format!("{}: {}", path.display(), f.message)));
    }
    Ok(c)
}

fn load_profile(path: Option<&Path>) -> Result<AccountingProfile, Failure> {
    match path {
        Some(p) => Ok(AccountingProfile::from_json(&read(p)?)?),
        None => Ok(AccountingProfile::default()),
    }
}

fn load_topology(cluster: &Cluster, default: Option<Vec<usize>>) -> Result<Topology, Failure> {
    let topo = if let Some(p) = &cluster.topology {
        Topology::from_json(&read(p)?)?
    } else if !cluster.qpus.is_empty() {
        Topology::from_sizes(&cluster.qpus)?
    } else if let Some(sizes) = default {
        Topology::from_sizes(&sizes)?
    } else {
        return Err(Failure::input(
            "a cluster is required: pass --topology FILE or --qpus N,N,...",
        ));
    };
    topo.check_timing()?;
    Ok(topo)
}

fn estimation(
    exact: bool,
    shots: Option<u32>,
    seed: Option<u64>,
) -> Result<(Estimation, u64), Failure> {
    match (exact, shots) {
        (true, _) => Ok((Estimation::Exact, seed.unwrap_or(0))),
        (false, Some(n)) => {
            let seed = seed.ok_or_else(|| Failure::input("--seed is required when sampling"))?;
            Ok((Estimation::Shots(n), seed))
        }
        (false, None) => Err(Failure::input("pass --exact or --shots N")),
    }
}

fn run_options(strict_ancilla: bool, trace: Option<&Path>) -> RunOptions {
    RunOptions {
        strict_ancilla,
        trace: if trace.is_some() {
            TraceMode::All
        } else {
            TraceMode::Off
        },
        ..Default::default()
    }
}

fn finish_run(out: &RunOutput, trace: Option<&Path>) -> Outcome {
    if let Some(p) = trace {
        write(p, &out.trace_lines())?;
    }
    Ok(())
}

fn print_json(values: &[Value]) {
    for v in values {
        println!("{}", json_line(v));
    }
}

fn round_lines(out: &RunOutput) -> Vec<Value> {
    out.reports
        .iter()
        .map(|r| {
            let mut v = serde_json::to_value(r).expect("report serializes");
            v["type"] = json!("round");
            v["round"] = json!(r.round + 1);
            v
        })
        .collect()
}

fn program_lines(out: &RunOutput) -> Vec<Value> {
    out.outcomes
        .iter()
        .map(|o| {
            let mut v = serde_json::to_value(o).expect("outcome serializes");
            v["type"] = json!("program");
            v["program"] = json!(o.program + 1);
            v
        })
        .collect()
}

fn resource_report(pp: &ParallelProgram, out: &RunOutput, profile: &AccountingProfile) -> Value {
    let programs: Vec<Value> = pp
        .programs
        .iter()
        .zip(&out.circuits)
        .enumerate()
        .map(|(j, (p, d))| {
            json!({
                "program": j + 1,
                "cat_blocks": d.blocks.len(),
                "monolithic": count_monolithic(&p.circuit, profile),
                "distributed": count_distributed(d, profile),
            })
        })
        .collect();
    json!({
        "schedule": pp.schedule_report(),
        "rounds": out.reports,
        "resources": programs,
    })
}

fn write_report(path: Option<&Path>, value: &Value) -> Outcome {
    match path {
        Some(p) => write(p, &(json_line(value) + "\n")),
        None => Ok(()),
    }
}

pub fn dispatch(command: Command, json_mode: bool) -> Outcome {
    match command {
        Command::Run {
            circuits,
            cluster,
            shots,
            seed,
            random_allocation,
            strict_ancilla,
            outputs,
        } => run(
            &circuits,
            &cluster,
            shots,
            seed,
            random_allocation,
            strict_ancilla,
            &outputs,
            json_mode,
        ),
        Command::Qpe {
            n,
            phase,
            shots,
            seed,
            strict_ancilla,
            outputs,
        } => qpe(n, phase, shots, seed, strict_ancilla, &outputs, json_mode),
        Command::Vqe {
            terms,
            ansatz,
            cluster,
            exact,
            shots,
            seed,
            strict_ancilla,
            trace,
        } => {
            let (mode, seed) = estimation(exact, shots, seed)?;
            vqe(
                &terms,
                &ansatz,
                &cluster,
                mode,
                seed,
                strict_ancilla,
                trace.as_deref(),
                json_mode,
            )
        }
        Command::Plae {
            beta,
            k,
            shots,
            amplitude,
            oracle,
            grover,
            good,
            grid,
            cluster,
            seed,
            trace,
        } => {
            let (a, q) = match (amplitude, oracle, grover) {
                (Some(a), _, _) => rotation_oracle(a)?,
                (None, Some(o), Some(g)) => (load_circuit(&o)?, load_circuit(&g)?),
                _ => {
                    return Err(Failure::input(
                        "pass --amplitude or both --oracle and --grover",
                    ))
                }
            };
            let cfg = PlaeConfig {
                beta,
                k_max: k,
                shots,
            };
            plae(
                &a,
                &q,
                good,
                &cfg,
                grid,
                &cluster,
                seed,
                trace.as_deref(),
                json_mode,
            )
        }
        Command::Kmeans {
            data,
            k,
            iterations,
            cluster,
            exact,
            shots,
            seed,
        } => {
            let (mode, seed) = estimation(exact, shots, seed)?;
            kmeans_cmd(&data, k, iterations, &cluster, mode, seed, json_mode)
        }
        Command::SweepQpe { n, profile, output } => {
            sweep(n, profile.as_deref(), output.as_deref(), json_mode)
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn run(
    paths: &[std::path::PathBuf],
    cluster: &Cluster,
    shots: u32,
    seed: u64,
    random_allocation: bool,
    strict_ancilla: bool,
    outputs: &Outputs,
    json_mode: bool,
) -> Outcome {
    let topo = load_topology(cluster, None)?;
    let profile = load_profile(outputs.profile.as_deref())?;
    let programs = paths
        .iter()
        .map(|p| load_circuit(p).map(|c| Program::new(c, shots)))
        .collect::<Result<Vec<_>, _>>()?;
    let allocator = if random_allocation {
        Allocator::Random { seed }
    } else {
        Allocator::Greedy
    };
    let pp = build_parallel_program(&topo, programs, allocator, MergeSpec::Identity)?;
    let out = run_parallel(
        &pp,
        &topo,
        seed,
        &run_options(strict_ancilla, outputs.trace.as_deref()),
    )?;
    finish_run(&out, outputs.trace.as_deref())?;
    write_report(
        outputs.report.as_deref(),
        &resource_report(&pp, &out, &profile),
    )?;
    if json_mode {
        let mut lines = round_lines(&out);
        lines.extend(program_lines(&out));
        print_json(&lines);
    } else {
        println!("schedule {:?}", pp.schedule.one_based());
        println!("distributed programs {:?}", pp.distributed_programs());
        for (o, d) in out.outcomes.iter().zip(&out.circuits) {
            let counts: Vec<String> = o.counts.iter().map(|(k, v)| format!("{k}:{v}")).collect();
            println!(
                "program {}: {} shots, {} cat blocks, counts {}",
                o.program + 1,
                o.shots(),
                d.blocks.len(),
                counts.join(" ")
            );
        }
    }
    Ok(())
}

fn qpe(
    n: usize,
    phase: f64,
    shots: u32,
    seed: u64,
    strict_ancilla: bool,
    outputs: &Outputs,
    json_mode: bool,
) -> Outcome {
    if !phase.is_finite() {
        return Err(Failure::input("phase must be finite"));
    }
    if n == 0 || n > 20 {
        return Err(Failure::input("--n must be between 1 and 20"));
    }
    let profile = load_profile(outputs.profile.as_deref())?;
    let u = phase_unitary(phase);
    let (pp, topo) = qpe_demo(n, &u, shots)?;
    let out = run_parallel(
        &pp,
        &topo,
        seed,
        &run_options(strict_ancilla, outputs.trace.as_deref()),
    )?;
    finish_run(&out, outputs.trace.as_deref())?;
    let estimate = out
        .value
        .as_scalar()
        .ok_or_else(|| Failure::internal("phase estimate is not a scalar"))?;
    let outcome = &out.outcomes[0];
    let modal = qdist_core::engine::modal_key(outcome)
        .unwrap_or_default()
        .to_string();
    let mono = count_monolithic(&qpe_circuit(n, &u)?, &profile);
    let dist = count_distributed(&out.circuits[0], &profile);
    let report = json!({
        "type": "qpe",
        "n": n,
        "phase": phase,
        "estimate": estimate,
        "modal": modal,
        "modal_frequency": outcome.frequency(&modal),
        "bits": qpe_bits(n),
        "counts": outcome.counts,
        "monolithic": mono,
        "distributed": dist,
        "cat_blocks": out.circuits[0].blocks.len(),
    });
    write_report(
        outputs.report.as_deref(),
        &resource_report(&pp, &out, &profile),
    )?;
    if json_mode {
        print_json(&[report]);
    } else {
        println!("estimated phase {estimate}");
        println!(
            "modal outcome {modal} in {} of {} shots",
            outcome.counts.get(&modal).copied().unwrap_or(0),
            outcome.shots()
        );
        println!(
            "operations: monolithic {}, distributed {} ({} cat blocks, {} EPR pairs, {} classical messages)",
            mono.total_ops,
            dist.total_ops,
            out.circuits[0].blocks.len(),
            dist.epr_pairs,
            dist.classical_messages
        );
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn vqe(
    terms: &Path,
    ansatz: &Path,
    cluster: &Cluster,
    mode: Estimation,
    seed: u64,
    strict_ancilla: bool,
    trace: Option<&Path>,
    json_mode: bool,
) -> Outcome {
    let terms = parse_terms(&read(terms)?)?;
    let ansatz = load_circuit(ansatz)?;
    let topo = load_topology(cluster, None)?;
    let pp = vqe_programs(&terms, &ansatz, mode)?.schedule(&topo, Allocator::Greedy)?;
    let out = run_parallel(&pp, &topo, seed, &run_options(strict_ancilla, trace))?;
    finish_run(&out, trace)?;
    let energy = out
        .value
        .as_scalar()
        .ok_or_else(|| Failure::internal("energy is not a scalar"))?;
    let partial = out.partial_sums(&pp, &topo).unwrap_or_default();
    if json_mode {
        let mut lines = round_lines(&out);
        lines.extend(
            partial
                .iter()
                .map(|(node, v)| json!({"type": "partial_sum", "node": node, "value": v})),
        );
        lines.push(json!({"type": "energy", "value": energy, "terms": terms.len()}));
        print_json(&lines);
    } else {
        println!("schedule {:?}", pp.schedule.one_based());
        for (node, v) in &partial {
            println!("{node}: partial sum {}", format_float(*v));
        }
        println!("energy {}", format_float(energy));
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn plae(
    oracle: &Circuit,
    grover: &Circuit,
    good: usize,
    cfg: &PlaeConfig,
    grid: usize,
    cluster: &Cluster,
    seed: u64,
    trace: Option<&Path>,
    json_mode: bool,
) -> Outcome {
    if grid == 0 {
        return Err(Failure::input("--grid must be positive"));
    }
    let w = oracle.width();
    let topo = load_topology(cluster, Some(vec![w; 4]))?;
    let pp = plae_programs(oracle, grover, good, cfg, grid)?.schedule(&topo, Allocator::Greedy)?;
    let out = run_parallel(&pp, &topo, seed, &run_options(false, trace))?;
    finish_run(&out, trace)?;
    let estimate = out
        .value
        .as_scalar()
        .ok_or_else(|| Failure::internal("estimate is not a scalar"))?;
    let queries = plae_queries(cfg);
    if json_mode {
        let mut lines: Vec<Value> = out
            .outcomes
            .iter()
            .zip(&queries)
            .map(|(o, m)| {
                json!({
                    "type": "query",
                    "program": o.program + 1,
                    "queries": m,
                    "shots": o.shots(),
                    "successes": o.counts.get("1").copied().unwrap_or(0),
                })
            })
            .collect();
        lines.push(
            json!({"type": "estimate", "amplitude": estimate, "rounds": pp.schedule.num_rounds()}),
        );
        print_json(&lines);
    } else {
        println!("query schedule {queries:?}");
        println!("estimated amplitude {}", format_float(estimate));
    }
    Ok(())
}

fn kmeans_cmd(
    data: &Path,
    k: usize,
    iterations: usize,
    cluster: &Cluster,
    mode: Estimation,
    seed: u64,
    json_mode: bool,
) -> Outcome {
    let points = parse_feature_csv(&read(data)?)?;
    if points.is_empty() {
        return Err(Failure::input(format!(
            "{}: no feature vectors",
            data.display()
        )));
    }
    let width = 1 + 2 * points[0].padded_len().trailing_zeros() as usize;
    let topo = load_topology(cluster, Some(vec![width; 2]))?;
    let result = kmeans(
        &points,
        k,
        iterations,
        mode,
        &topo,
        seed,
        &RunOptions {
            trace: TraceMode::Off,
            ..Default::default()
        },
    )?;
    let centroids: Vec<Vec<f64>> = result
        .centroids
        .iter()
        .map(|c| c.values().to_vec())
        .collect();
    if json_mode {
        let mut lines: Vec<Value> = result
            .assignment
            .iter()
            .enumerate()
            .map(|(i, c)| json!({"type": "assignment", "point": i + 1, "centroid": c + 1}))
            .collect();
        lines.push(
            json!({"type": "centroids", "iterations": result.iterations, "centroids": centroids}),
        );
        print_json(&lines);
    } else {
        let shown: Vec<usize> = result.assignment.iter().map(|c| c + 1).collect();
        println!(
            "assignment {shown:?} after {} iterations",
            result.iterations
        );
        for (j, c) in centroids.iter().enumerate() {
            let vals: Vec<String> = c.iter().map(|v| format_float(*v)).collect();
            println!("centroid {}: [{}]", j + 1, vals.join(", "));
        }
    }
    Ok(())
}

fn sweep(
    range: RangeInclusive<usize>,
    profile: Option<&Path>,
    output: Option<&Path>,
    json_mode: bool,
) -> Outcome {
    if *range.end() > 20 {
        return Err(Failure::input("sweep-qpe supports n up to 20"));
    }
    let profile = load_profile(profile)?;
    let rows = sweep_qpe(range, &profile)?;
    let csv = sweep_csv(&rows);
    if let Some(p) = output {
        write(p, &csv)?;
    }
    if json_mode {
        let lines: Vec<Value> = rows
            .iter()
            .map(|r| serde_json::to_value(r).expect("row serializes"))
            .collect();
        print_json(&lines);
    } else if output.is_none() {
        print!("{csv}");
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ranges() {
        assert_eq!(parse_range("1..11").unwrap(), 1..=11);
        assert_eq!(parse_range("2..=4").unwrap(), 2..=4);
        assert_eq!(parse_range("3").unwrap(), 3..=3);
        assert!(parse_range("5..2").is_err());
        assert!(parse_range("0..2").is_err());
        assert!(parse_range("a..b").is_err());
    }

    #[test]
    fn exit_codes_follow_error_kind() {
        let f: Failure = qdist_core::error::TopologyError::Empty.into();
        assert_eq!(f.code, 2);
        let f: Failure = qdist_core::error::EngineError::BitUnavailable {
            node: "QPU_0".into(),
            bit: "b".into(),
            tick: 0,
        }
        .into();
        assert_eq!(f.code, 1);
    }
}
