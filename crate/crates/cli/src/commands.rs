//! The subcommand implementations. Each command builds its inputs from the
//! resolved configuration, writes data files plus a manifest into the output
//! directory, and prints a one-line summary.

use std::fs;
use std::path::Path;

use anyhow::{Context, Result};
use nalgebra::DVector;
use serde_json::{json, Map, Value};

use natgrad::allocation::{
    optimal_plan, overhead_report, shot_budget, uniform_plan, AllocationPlan, CircuitCosts,
    PlanMode,
};
use natgrad::ansatz::{build_layered_ansatz, AnsatzCircuit};
use natgrad::estimator::MetricEstimate;
use natgrad::evolution::{
    self, initial_theta, protocol_circuit_cost, qubit_scan, scan_aggregates_to_csv,
    scan_rows_to_csv, trace_to_csv,
};
use natgrad::pauli::PauliSum;
use natgrad::propagation::RegularizedInverse;
use natgrad::shots::empirical_epsilon;

use crate::config::{Config, EpsMode};
use crate::manifest::{epoch_ms, RunManifest};

/// Everything the single-point commands (`allocate`, `validate`, `bounds`)
/// need: the system at one parameter point with its exact estimates.
struct Instance {
    h: PauliSum,
    theta: Vec<f64>,
    m: MetricEstimate,
    inv: RegularizedInverse,
    /// Exact regularized natural gradient at the point.
    v: DVector<f64>,
    /// Resolved accuracy target (relative mode is scaled by the update norm).
    eps: f64,
}

fn build_instance(cfg: &Config) -> Result<Instance> {
    let circuit = build_circuit(cfg)?;
    let h = cfg.hamiltonian_spec().build(cfg.system.n, cfg.seed)?;
    let mut ecfg = cfg.to_evolution()?;
    ecfg.init = cfg.point_init(circuit.parameter_count());
    let theta = initial_theta(&ecfg, &circuit, &h)?;
    let m = MetricEstimate::compute(&circuit, &theta, &h, cfg.fisher.protocol)?;
    let inv = RegularizedInverse::new(&m.fisher, cfg.solver.eta)?;
    let v = inv.apply(&m.grad);
    let eps = cfg.eps_target().resolve(v.norm());
    Ok(Instance {
        h,
        theta,
        m,
        inv,
        v,
        eps,
    })
}

fn build_circuit(cfg: &Config) -> Result<AnsatzCircuit> {
    let blocks = cfg.blocks()?;
    Ok(build_layered_ansatz(cfg.system.n, &blocks)?)
}

/// Print to stdout, shrugging off a closed pipe (`natgrad ... | head`).
fn emit(text: &str) {
    use std::io::Write;
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    let _ = writeln!(lock, "{text}");
}

fn write_output(out: &Path, name: &str, content: &str, outputs: &mut Vec<String>) -> Result<()> {
    let path = out.join(name);
    fs::write(&path, content).with_context(|| format!("writing {}", path.display()))?;
    outputs.push(name.to_string());
    Ok(())
}

fn finish(
    out: &Path,
    command: &str,
    cfg: &Config,
    started: u64,
    outputs: &mut Vec<String>,
    extra: Map<String, Value>,
) -> Result<()> {
    write_output(out, "config_echo.toml", &cfg.to_toml(), outputs)?;
    let mut manifest = RunManifest::new(command, cfg, started);
    manifest.outputs = outputs;
    manifest.extra = extra;
    let path = out.join("manifest.json");
    fs::write(&path, manifest.to_json()).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

fn extra_map(pairs: Vec<(&str, Value)>) -> Map<String, Value> {
    pairs
        .into_iter()
        .map(|(k, v)| (k.to_string(), v))
        .collect()
}

/// Run natural-gradient descent and write the per-iteration trace.
pub fn evolve(cfg: &Config, out: &Path) -> Result<u8> {
    let started = epoch_ms();
    let ecfg = cfg.to_evolution()?;
    let trace = evolution::run(&ecfg)?;
    let mut outputs = Vec::new();
    write_output(out, "trace.csv", &trace_to_csv(&trace), &mut outputs)?;
    let theta_final = trace.rows.last().map(|r| r.theta.clone()).unwrap_or_default();
    write_output(
        out,
        "theta_final.json",
        &serde_json::to_string_pretty(&theta_final)?,
        &mut outputs,
    )?;
    let extra = extra_map(vec![
        ("iterations", json!(trace.rows.len())),
        ("diverged", json!(trace.diverged)),
        ("ground_energy", json!(trace.ground_energy)),
        ("final_energy", json!(trace.rows.last().map(|r| r.energy))),
    ]);
    finish(out, "evolve", cfg, started, &mut outputs, extra)?;
    emit(&format!(
        "evolve: {} iterations{} -> {}",
        trace.rows.len(),
        if trace.diverged { " (diverged)" } else { "" },
        out.join("trace.csv").display()
    ));
    Ok(0)
}

/// Entries of the metric heat map, one row per reported matrix cell.
/// Symmetric plans report the lower triangle only, since the mirrored cells
/// share the same measurements. Indices are 1-based like parameter indices
/// in circuit files.
fn fisher_csv(plan: &AllocationPlan) -> String {
    let nu = plan.dim();
    let mut s = String::from("k,l,shots\n");
    for k in 0..nu {
        for l in 0..nu {
            if plan.mode == PlanMode::OptimalSymmetric && l > k {
                continue;
            }
            s.push_str(&format!("{},{},{}\n", k + 1, l + 1, plan.fisher_shots[(k, l)]));
        }
    }
    s
}

fn grad_csv(plan: &AllocationPlan) -> String {
    let mut s = String::from("k,shots\n");
    for k in 0..plan.dim() {
        s.push_str(&format!("{},{}\n", k + 1, plan.grad_shots[k]));
    }
    s
}

/// The same maps rescaled so a uniform distribution over all reported
/// elements would put exactly 1 on each; cells then read as multiples of the
/// uniform share.
fn normalized_csvs(plan: &AllocationPlan) -> (String, String) {
    let nu = plan.dim();
    let matrix_cells: Vec<(usize, usize)> = (0..nu)
        .flat_map(|k| (0..nu).map(move |l| (k, l)))
        .filter(|&(k, l)| !(plan.mode == PlanMode::OptimalSymmetric && l > k))
        .collect();
    let elements = (matrix_cells.len() + nu) as f64;
    let total = plan.total_shots() as f64;
    let weight = |shots: u64| {
        if total > 0.0 {
            shots as f64 * elements / total
        } else {
            0.0
        }
    };
    let mut fisher = String::from("k,l,weight\n");
    for &(k, l) in &matrix_cells {
        fisher.push_str(&format!(
            "{},{},{}\n",
            k + 1,
            l + 1,
            weight(plan.fisher_shots[(k, l)])
        ));
    }
    let mut grad = String::from("k,weight\n");
    for k in 0..nu {
        grad.push_str(&format!("{},{}\n", k + 1, weight(plan.grad_shots[k])));
    }
    (fisher, grad)
}

fn build_plan(inst: &Instance, mode: PlanMode) -> Result<AllocationPlan> {
    let plan = match mode {
        PlanMode::Uniform => uniform_plan(&inst.m, &inst.inv, inst.eps)?,
        PlanMode::Optimal => optimal_plan(&inst.m, &inst.inv, inst.eps, false)?,
        PlanMode::OptimalSymmetric => optimal_plan(&inst.m, &inst.inv, inst.eps, true)?,
    };
    Ok(plan)
}

/// Build a measurement plan at one parameter point and emit it as JSON plus
/// raw and normalized heat-map CSVs.
pub fn allocate(cfg: &Config, out: &Path) -> Result<u8> {
    let started = epoch_ms();
    let inst = build_instance(cfg)?;
    let plan = build_plan(&inst, cfg.allocate.mode)?;
    let (fisher_norm, grad_norm) = normalized_csvs(&plan);
    let mut outputs = Vec::new();
    write_output(out, "plan.json", &plan.to_json(), &mut outputs)?;
    write_output(out, "fisher_shots.csv", &fisher_csv(&plan), &mut outputs)?;
    write_output(out, "fisher_shots_normalized.csv", &fisher_norm, &mut outputs)?;
    write_output(out, "grad_shots.csv", &grad_csv(&plan), &mut outputs)?;
    write_output(out, "grad_shots_normalized.csv", &grad_norm, &mut outputs)?;
    let extra = extra_map(vec![
        ("mode", json!(cfg.allocate.mode)),
        ("theta", json!(inst.theta)),
        ("eps", json!(inst.eps)),
        ("eps2_target", json!(plan.eps2_target)),
        ("predicted_eps2", json!(plan.predicted_eps2)),
        ("total_shots", json!(plan.total_shots())),
        ("total_continuous", json!(plan.total_continuous())),
        ("update_norm", json!(inst.v.norm())),
    ]);
    finish(out, "allocate", cfg, started, &mut outputs, extra)?;
    emit(&format!(
        "allocate: {} shots for predicted eps^2 {} -> {}",
        plan.total_shots(),
        plan.predicted_eps2,
        out.join("plan.json").display()
    ));
    Ok(0)
}

/// Compare a plan's predicted error against repeated simulated sampling of
/// the whole estimate-invert-step pipeline.
pub fn validate(cfg: &Config, out: &Path) -> Result<u8> {
    let started = epoch_ms();
    // independent-entries accounting assigns mirrored metric entries
    // different counts, which no sequence of measurements realizes; only
    // realizable plans can be sampled
    if cfg.validate.mode == PlanMode::Optimal {
        return Err(crate::config::ConfigError(
            "validate.mode = \"optimal\" counts mirrored metric entries separately and cannot \
             be realized by measurements; use \"optimal_symmetric\" or \"uniform\""
                .into(),
        )
        .into());
    }
    let inst = build_instance(cfg)?;
    let plan = build_plan(&inst, cfg.validate.mode)?;
    let estimate = empirical_epsilon(&inst.m, &plan, cfg.solver.eta, cfg.validate.trials, cfg.seed)?;
    let predicted = plan.predicted_eps2;
    let gap = (predicted - estimate.empirical_eps2).abs();
    let tolerance = 5.0 * estimate.std_error + 0.1 * predicted;
    let pass = gap <= tolerance;
    // The prediction is a first-order expansion; once the target stops being
    // small against the update itself the comparison leaves its regime, so a
    // miss is reported as a warning rather than a failure.
    let update_norm = inst.v.norm();
    let regime_warning = predicted.sqrt() > 0.1 * update_norm;
    let report = json!({
        "predicted_eps2": predicted,
        "empirical_eps2": estimate.empirical_eps2,
        "std_error": estimate.std_error,
        "trials": estimate.trials,
        "tolerance": tolerance,
        "pass": pass,
        "regime_warning": regime_warning,
        "update_norm": update_norm,
        "eps_target": inst.eps,
        "mode": cfg.validate.mode,
        "total_shots": plan.total_shots(),
    });
    let mut outputs = Vec::new();
    write_output(
        out,
        "validation.json",
        &serde_json::to_string_pretty(&report)?,
        &mut outputs,
    )?;
    let extra = extra_map(vec![
        ("pass", json!(pass)),
        ("regime_warning", json!(regime_warning)),
    ]);
    finish(out, "validate", cfg, started, &mut outputs, extra)?;
    emit(&format!(
        "validate: predicted {} empirical {} ({} trials){}{}",
        predicted,
        estimate.empirical_eps2,
        estimate.trials,
        if pass { ", pass" } else { ", FAIL" },
        if regime_warning {
            " [outside first-order regime]"
        } else {
            ""
        },
    ));
    Ok(if pass || regime_warning { 0 } else { 1 })
}

/// Report worst-case and exact shot requirements plus overhead diagnostics
/// at one parameter point, with each inequality's outcome.
pub fn bounds(cfg: &Config, out: &Path) -> Result<u8> {
    let started = epoch_ms();
    let inst = build_instance(cfg)?;
    let costs = CircuitCosts {
        f_f: protocol_circuit_cost(cfg.fisher.protocol),
        f_g: cfg.grouping.strategy.gradient_cost(&inst.h),
    };
    let budget = shot_budget(&inst.m, &inst.inv, inst.eps, costs, inst.h.spc())?;
    let relative = cfg.eps.mode == EpsMode::Relative;
    let report = overhead_report(&inst.m, &inst.inv, inst.eps, relative)?;
    let eta = cfg.solver.eta;
    let kappa_bound = if eta > 0.0 {
        eta.powi(-2) + report.y
    } else {
        f64::INFINITY
    };
    let doc = json!({
        "nu": inst.m.parameter_count(),
        "eps": inst.eps,
        "eta": eta,
        "f_f": costs.f_f,
        "f_g": costs.f_g,
        "spc_h": inst.h.spc(),
        "n_f_exact": budget.n_f_exact,
        "n_f_bound": budget.n_f_bound,
        "n_f_within_bound": budget.n_f_exact <= budget.n_f_bound,
        "n_g_exact": budget.n_g_exact,
        "n_g_bound": budget.n_g_bound,
        "n_g_within_bound": budget.n_g_exact <= budget.n_g_bound,
        "kappa_uniform": report.kappa_uniform,
        "kappa_optimal": report.kappa_optimal,
        "y": report.y,
        "spc_inv": report.spc_inv,
        "n_smpl": report.n_smpl,
        "kappa_bound": kappa_bound,
        "kappa_within_bound": report.kappa_uniform - report.y <= eta.powi(-2),
        "optimal_leq_uniform": report.kappa_optimal <= report.kappa_uniform,
        "update_norm": inst.v.norm(),
    });
    let mut outputs = Vec::new();
    write_output(
        out,
        "bounds.json",
        &serde_json::to_string_pretty(&doc)?,
        &mut outputs,
    )?;
    finish(out, "bounds", cfg, started, &mut outputs, Map::new())?;
    emit(&format!(
        "bounds: n_f {} <= {}, n_g {} <= {}, kappa_uniform {}",
        budget.n_f_exact, budget.n_f_bound, budget.n_g_exact, budget.n_g_bound, report.kappa_uniform
    ));
    Ok(0)
}

/// Sweep qubit counts and report metric-vs-gradient cost ratios near
/// convergence.
pub fn scan(cfg: &Config, out: &Path) -> Result<u8> {
    let started = epoch_ms();
    let scfg = cfg.to_scan()?;
    let table = qubit_scan(&scfg)?;
    let mut outputs = Vec::new();
    write_output(out, "scan_rows.csv", &scan_rows_to_csv(&table), &mut outputs)?;
    write_output(
        out,
        "scan_aggregate.csv",
        &scan_aggregates_to_csv(&table),
        &mut outputs,
    )?;
    let extra = extra_map(vec![
        ("sizes", json!(cfg.scan.sizes)),
        ("instances", json!(cfg.scan.instances)),
    ]);
    finish(out, "scan", cfg, started, &mut outputs, extra)?;
    emit(&format!(
        "scan: {} sizes x {} instances -> {}",
        cfg.scan.sizes.len(),
        cfg.scan.instances,
        out.join("scan_aggregate.csv").display()
    ));
    Ok(0)
}

/// Print the resolved configuration and the derived system quantities.
pub fn inspect(cfg: &Config) -> Result<u8> {
    let circuit = build_circuit(cfg)?;
    let h = cfg.hamiltonian_spec().build(cfg.system.n, cfg.seed)?;
    let doc = json!({
        "config": cfg,
        "derived": {
            "parameters": circuit.parameter_count(),
            "hilbert_dimension": 1u64 << cfg.system.n,
            "hamiltonian_terms": h.term_count(),
            "qubitwise_groups": h.qubitwise_commuting_groups().len(),
            "spc_h": h.spc(),
        },
    });
    emit(&serde_json::to_string_pretty(&doc)?);
    Ok(0)
}
