//! One function per command. Each returns the CSV table, the JSON summary
//! and a one-line human report.

use mkdv_core::evolve::{conservation_audit, evolve, residual_along_flow, stability_experiment};
use mkdv_core::grid::sobolev_norm;
use mkdv_core::hessian::{build_report, criterion_check, expected_count};
use mkdv_core::hierarchy::{value_h, N_MAX};
use mkdv_core::linops::{
    build_l_nj, factorization_residual, inertia_of, iso_inertia_scan, random_test_fields,
};
use mkdv_core::soliton::n_soliton;
use mkdv_core::{Field, Grid};
use serde_json::{json, Value};

use crate::config::{Command, ExperimentConfig, Shape};
use crate::output::{real, Table};
use crate::RunError;

pub struct Outcome {
    pub table: Table,
    pub summary: Value,
    pub report: String,
    /// Results were produced but are not certified (exit status 2).
    pub uncertified: Option<String>,
}

impl Outcome {
    fn ok(table: Table, summary: Value, report: String) -> Self {
        Self {
            table,
            summary,
            report,
            uncertified: None,
        }
    }
}

pub fn run(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    match cfg.command {
        Command::Soliton => soliton(cfg),
        Command::Conserved => conserved(cfg),
        Command::Residual => residual(cfg),
        Command::Spectrum => spectrum(cfg),
        Command::Factorization => factorization(cfg),
        Command::InertiaScan => inertia_scan(cfg),
        Command::Hessian => hessian(cfg),
        Command::Criterion => criterion(cfg),
        Command::Evolve => evolve_cmd(cfg),
        Command::Stability => stability(cfg),
    }
}

fn reals(v: &[f64]) -> Value {
    Value::Array(v.iter().map(|x| real(*x)).collect())
}

/// The perturbation profile scaled to `H^k` size `amplitude`.
fn perturbation(cfg: &ExperimentConfig, grid: &Grid) -> Result<Field, RunError> {
    if cfg.perturbation_amplitude == 0.0 {
        return Ok(Field::zeros(grid));
    }
    let shape = match cfg.perturbation_shape {
        Shape::Sech => Field::from_fn(grid, |x| x.cos() / x.cosh())?,
        Shape::Gauss => Field::from_fn(grid, |x| (-x * x / 2.0).exp())?,
        Shape::Mode => random_test_fields(grid, 1, cfg.seed).remove(0),
    };
    let norm = sobolev_norm(&shape, cfg.sobolev())?;
    Ok(shape.scale(cfg.perturbation_amplitude / norm))
}

fn soliton(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let speeds = cfg.speed_set()?;
    let grid = cfg.grid()?;
    let u = n_soliton(&speeds, &cfg.phase_set(&speeds)?, cfg.time, &grid)?;
    let mut table = Table::new(&["x", "u"]);
    for (m, v) in u.samples().iter().enumerate() {
        table.push(vec![grid.x(m).into(), (*v).into()]);
    }
    let peak = grid.x(u.argmax());
    let summary = json!({
        "max_abs": real(u.max_abs()),
        "l2_norm": real(u.l2_norm()),
        "peak_x": real(peak),
    });
    let report = format!("max|u| = {:.6}, peak at x = {peak:.4}", u.max_abs());
    Ok(Outcome::ok(table, summary, report))
}

/// `H_n` of a single soliton, summed over the speeds: the N-soliton value
/// splits into its asymptotic pieces.
fn closed_form(n: usize, speeds: &[f64]) -> f64 {
    if n == 0 {
        return speeds.len() as f64 * std::f64::consts::SQRT_2 * std::f64::consts::PI;
    }
    let e = (2 * n - 1) as f64;
    speeds
        .iter()
        .map(|c| (-1f64).powi(n as i32 - 1) * 2.0 / e * c.powf(e / 2.0))
        .sum()
}

fn conserved(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let speeds = cfg.speed_set()?;
    let grid = cfg.grid()?;
    let u = n_soliton(&speeds, &cfg.phase_set(&speeds)?, cfg.time, &grid)?;
    let orders = if cfg.orders.is_empty() {
        (1..=(speeds.len() + 1).min(N_MAX)).collect()
    } else {
        cfg.orders.clone()
    };
    let mut table = Table::new(&["n", "value", "closed_form", "relative_error"]);
    let mut worst = 0.0f64;
    for &n in &orders {
        let v = value_h(n, &u)?;
        let exact = closed_form(n, speeds.as_slice());
        let rel = ((v - exact) / exact).abs();
        worst = worst.max(rel);
        table.push(vec![n.into(), v.into(), exact.into(), rel.into()]);
    }
    let summary = json!({ "orders": orders, "max_relative_error": real(worst) });
    let report = format!("max relative error against the closed forms: {worst:.3e}");
    Ok(Outcome::ok(table, summary, report))
}

fn residual(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let speeds = cfg.speed_set()?;
    let grid = cfg.grid()?;
    let values = residual_along_flow(&speeds, &cfg.phase_set(&speeds)?, &cfg.times, &grid)?;
    let mut table = Table::new(&["t", "residual"]);
    for (t, r) in cfg.times.iter().zip(&values) {
        table.push(vec![(*t).into(), (*r).into()]);
    }
    let worst = values.iter().copied().fold(0.0, f64::max);
    let summary =
        json!({ "times": reals(&cfg.times), "residual": reals(&values), "max": real(worst) });
    Ok(Outcome::ok(
        table,
        summary,
        format!("max ||S_N'|| = {worst:.3e}"),
    ))
}

fn spectrum(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let speeds = cfg.speed_set()?;
    let grid = cfg.grid()?;
    let n = speeds.len();
    let mut table = Table::new(&["j", "index", "eigenvalue"]);
    let mut inertias = Vec::new();
    for j in 1..=n {
        let l = build_l_nj(&speeds, j, &grid)?;
        let ev = l.eigenvalues()?;
        for (i, v) in ev.iter().take(cfg.count).enumerate() {
            table.push(vec![j.into(), i.into(), (*v).into()]);
        }
        let inertia = inertia_of(&l.congruence_normalized(n as u32), cfg.zero_tol)?.inertia;
        inertias.push(json!({ "j": j, "negatives": inertia.negatives, "zeros": inertia.zeros }));
    }
    let summary = json!({ "inertia": inertias });
    let report = format!("lowest {} eigenvalues of L_(N,j) for j = 1..{n}", cfg.count);
    Ok(Outcome::ok(table, summary, report))
}

fn factorization(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let speeds = cfg.speed_set()?;
    let grid = cfg.grid()?;
    let mut table = Table::new(&["j", "relative_residual"]);
    let mut values = Vec::new();
    for j in 1..=speeds.len() {
        let r = factorization_residual(&speeds, j, &grid)?;
        table.push(vec![j.into(), r.into()]);
        values.push(r);
    }
    let worst = values.iter().copied().fold(0.0, f64::max);
    let summary = json!({ "residual": reals(&values), "max": real(worst) });
    Ok(Outcome::ok(
        table,
        summary,
        format!("max relative residual {worst:.3e}"),
    ))
}

fn inertia_scan(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let speeds = cfg.speed_set()?;
    let grid = cfg.grid()?;
    let scan = iso_inertia_scan(
        &speeds,
        &cfg.phase_set(&speeds)?,
        &cfg.times,
        &grid,
        cfg.zero_tol,
    )?;
    let mut table = Table::new(&["t", "negatives", "zeros", "margin", "asymmetry"]);
    for ((t, s), a) in scan.times.iter().zip(&scan.snapshots).zip(&scan.asymmetry) {
        table.push(vec![
            (*t).into(),
            s.inertia.negatives.into(),
            s.inertia.zeros.into(),
            (s.smallest_nonzero / s.threshold).into(),
            (*a).into(),
        ]);
    }
    let total = scan.sum_of_parts();
    let parts: Vec<Value> = scan
        .parts
        .iter()
        .map(|p| json!([p.inertia.negatives, p.inertia.zeros]))
        .collect();
    let summary = json!({
        "parts": parts,
        "sum_of_parts": [total.negatives, total.zeros],
        "constant": scan.is_constant(),
        "sum_rule_holds": scan.sum_rule_holds(),
    });
    let report = format!(
        "inertia {}; sum of parts {total}; sum rule {}",
        scan.snapshots
            .iter()
            .map(|s| s.inertia.to_string())
            .collect::<Vec<_>>()
            .join(" "),
        scan.sum_rule_holds()
    );
    Ok(Outcome::ok(table, summary, report))
}

fn hessian(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let speeds = cfg.speed_set()?;
    let report = build_report(&speeds)?;
    let ev = report.eigenvalues()?;
    let mut table = Table::new(&["i", "speed", "diagonal_form", "d_eigenvalue"]);
    for (i, c) in speeds.iter().enumerate() {
        table.push(vec![
            i.into(),
            c.into(),
            report.diagonal_form[i].into(),
            ev[i].into(),
        ]);
    }
    let expected = expected_count(speeds.len());
    let summary = json!({
        "p": report.p,
        "expected": expected,
        "diagonality": real(report.diagonality),
        "asymmetry": real(report.asymmetry),
        "condition": real(report.condition),
    });
    let line = format!("p(D) = {} (expected {expected})", report.p);
    Ok(Outcome::ok(table, summary, line))
}

fn criterion(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let speeds = cfg.speed_set()?;
    let grid = cfg.grid()?;
    let phases = cfg.phase_set(&speeds)?;
    let mut table = Table::new(&["t", "n", "p", "equal"]);
    let mut negatives = Vec::new();
    let mut p = 0;
    for &t in &cfg.times {
        let check = criterion_check(&speeds, &phases, t, &grid)?;
        table.push(vec![
            t.into(),
            check.negatives.into(),
            check.p.into(),
            check.holds.into(),
        ]);
        negatives.push(check.negatives);
        p = check.p;
    }
    let equal = negatives.iter().all(|&n| n == p);
    let summary = json!({
        "times": reals(&cfg.times),
        "n": negatives[0],
        "n_per_time": negatives,
        "p": p,
        "equal": equal,
    });
    let report = format!("n = {}, p = {p}, equal = {equal}", negatives[0]);
    Ok(Outcome::ok(table, summary, report))
}

fn evolve_cmd(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let speeds = cfg.speed_set()?;
    let grid = cfg.grid()?;
    let phases = cfg.phase_set(&speeds)?;
    let base = n_soliton(&speeds, &phases, cfg.time, &grid)?;
    let u0 = base.add(&perturbation(cfg, &grid)?);
    let traj = evolve(&u0, &cfg.evolver()?)?;
    let mut table = Table::new(&["t", "max_abs", "error_vs_exact"]);
    let mut final_error = 0.0;
    for (t, u) in traj.times.iter().zip(&traj.states) {
        let exact = n_soliton(&speeds, &phases, cfg.time + t, &grid)?;
        final_error = u.sub(&exact).l2_norm();
        table.push(vec![(*t).into(), u.max_abs().into(), final_error.into()]);
    }
    let orders = (speeds.len() + 1).min(4);
    let drift = conservation_audit(&traj, orders)?;
    let summary = json!({
        "dt_used": real(traj.dt_used),
        "snapshots": traj.times.len(),
        "exceeds_dispersive_cap": traj.exceeds_dispersive_cap,
        "drift": reals(&drift),
        "final_error_vs_exact": real(final_error),
    });
    let report = format!(
        "final L2 distance to the exact N-soliton {final_error:.3e}; max drift H_1..H_{orders} {:.3e}",
        drift.iter().copied().fold(0.0, f64::max)
    );
    Ok(Outcome::ok(table, summary, report))
}

fn stability(cfg: &ExperimentConfig) -> Result<Outcome, RunError> {
    let speeds = cfg.speed_set()?;
    let grid = cfg.grid()?;
    let phases = cfg.phase_set(&speeds)?.advanced(&speeds, cfg.time);
    let k = cfg.sobolev();
    let r = stability_experiment(
        &speeds,
        &phases,
        &perturbation(cfg, &grid)?,
        &cfg.evolver()?,
        k,
    )?;
    let mut table = Table::new(&["t", "distance", "lyapunov_gap"]);
    for ((t, d), g) in r.times.iter().zip(&r.distances).zip(&r.lyapunov_gap) {
        table.push(vec![(*t).into(), (*d).into(), (*g).into()]);
    }
    let summary = json!({
        "sobolev_index": k,
        "delta0": real(r.delta0),
        "max_distance": real(r.max_distance),
        "amplification": r.amplification.map(real),
        "all_certified": r.all_certified,
        "drift": reals(&r.drift),
    });
    let report = match r.amplification {
        Some(a) => format!(
            "delta0 = {:.3e}, max distance {:.3e}, amplification {a:.3}",
            r.delta0, r.max_distance
        ),
        None => format!("unperturbed run, max distance {:.3e}", r.max_distance),
    };
    let mut out = Outcome::ok(table, summary, report);
    if !r.all_certified {
        out.uncertified = Some(
            "evolve::distance_to_family: optimizer did not converge at some snapshots; distances are best-so-far".into(),
        );
    }
    Ok(out)
}
