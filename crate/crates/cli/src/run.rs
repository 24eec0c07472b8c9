//! Analysis pipeline: geometry, then flow and agmon, then spectral, then
//! observability and kernel.

use std::fmt::Write as _;
use std::io;

use gradobs::flow::{gcc_time, Condition, FlowMethod};
use gradobs::kernel::{l1_kernel_observability, positive_time_bracket, KernelGenerator};
use gradobs::observability::{
    gramian_modes, prepare, slope_sweep, sweep_csv, t_unif_bracket, witness_cost, Method, Target,
};
use gradobs::spectral::{eigenpair_csv, lowest_eigenpairs};
use gradobs::{Error, PreparedF64, SweepReportF64};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::report::{g17, Out, Report};
use crate::scenario::Resolved;

const RCOND: f64 = 1e-10;
/// Positive-solution family starts at `t = η` to avoid the initial delta.
const KERNEL_ETA: f64 = 0.05;

pub fn run(res: &Resolved, out: &Out, seed: u64) -> io::Result<Report> {
    let mut rep = Report::default();
    let sc = &res.scenario;
    rep.text("scenario", res.name.clone());
    rep.text("builtin", res.builtin.clone().unwrap_or_default());
    rep.num("seed", seed as f64);
    rep.text("version", env!("CARGO_PKG_VERSION"));
    rep.text("geometry.case", sc.surface.case.clone());
    rep.num("geometry.L", sc.surface.length);
    rep.num("geometry.grid_n", sc.surface.grid_n as f64);
    rep.num("fields.c", sc.c);
    rep.num("sweep.delta_fit", res.delta_fit);
    for (k, v) in &sc.params {
        rep.num(format!("params.{}", k), *v);
    }
    for (k, v) in &sc.predicted {
        rep.num(format!("predicted.{}", k), *v);
    }

    let pr = match prepare::<f64>(sc) {
        Ok(p) => p,
        Err(e) => {
            rep.failure("geometry", e);
            return Ok(rep);
        }
    };
    geometry(&pr, &mut rep, out)?;

    let mut t_flow = None;
    if res.run.flow {
        t_flow = flow(res, &pr, &mut rep, out)?;
    }
    if res.run.agmon {
        agmon(&pr, &mut rep, out)?;
    }
    if res.run.spectral || res.run.observability {
        let cells = solve_cells(res, &pr);
        if res.run.spectral {
            spectral(res, &pr, &cells, &mut rep, out)?;
        }
        if res.run.observability {
            observability(res, &pr, &cells, &mut rep, out)?;
        }
    }
    if res.run.kernel {
        kernel(res, &pr, t_flow, seed, &mut rep, out)?;
    }
    Ok(rep)
}

fn geometry(pr: &PreparedF64, rep: &mut Report, out: &Out) -> io::Result<()> {
    let pot = &pr.pot;
    rep.num("geometry.h", pr.spec.h);
    rep.num("geometry.V_min", pot.v_min);
    rep.flag("geometry.unique_min", pot.unique_min);
    for (i, x) in pot.x_min.iter().enumerate() {
        rep.num(format!("geometry.x_min.{}", i), *x);
    }
    let mut csv = String::new();
    match &pot.lattice {
        Some(lat) => {
            csv.push_str("x1,x2,V\n");
            for i in 0..lat.len() {
                let p = lat.point(i);
                let _ = writeln!(csv, "{},{},{}", g17(p[0]), g17(p[1]), g17(pot.values[i]));
            }
        }
        None => {
            csv.push_str("s,V\n");
            for (s, v) in pot.grid.iter().zip(&pot.values) {
                let _ = writeln!(csv, "{},{}", g17(*s), g17(*v));
            }
        }
    }
    out.write("potential.csv", &csv)
}

/// Returns the simulated minimal time when the condition holds.
fn flow(res: &Resolved, pr: &PreparedF64, rep: &mut Report, out: &Out) -> io::Result<Option<f64>> {
    let cond = if pr.spec.dirichlet_mask().iter().any(|b| *b) {
        Condition::Fc
    } else {
        Condition::Gcc
    };
    let label = if cond == Condition::Fc { "FC" } else { "GCC" };
    rep.text("flow.condition", label);
    let sim = match gcc_time(&pr.spec, &pr.f, &pr.omega, cond, FlowMethod::Simulation, res.t_cap) {
        Ok(r) => r,
        Err(e) => {
            rep.failure("flow", e);
            return Ok(None);
        }
    };
    rep.flag("flow.satisfied", sim.satisfied);
    rep.flag("flow.censored", sim.censored);
    rep.opt("flow.T_min.simulation", sim.satisfied.then_some(sim.t_min));
    if let Some(st) = &sim.stationary {
        rep.num("flow.stationary_point", st[0]);
    }
    let closed = gcc_time(&pr.spec, &pr.f, &pr.omega, cond, FlowMethod::ClosedForm, res.t_cap);
    match &closed {
        Ok(cf) => {
            rep.opt("flow.T_min.closed_form", cf.satisfied.then_some(cf.t_min));
            let agree = if sim.satisfied && cf.satisfied {
                (sim.t_min - cf.t_min).abs() <= 1e-3 * cf.t_min
            } else {
                sim.satisfied == cf.satisfied
            };
            rep.check("flow.simulation_vs_closed_form", agree, sim.t_min, cf.t_min, 1e-3);
        }
        Err(e) => rep.note(format!("flow: closed form unavailable: {}", e)),
    }

    let pred = &res.scenario.predicted;
    for key in ["T_GCC", "T_FC"] {
        if let Some(p) = pred.get(key) {
            let ok = sim.satisfied && (sim.t_min - p).abs() <= 1e-3 * p;
            rep.check(format!("flow.{}_prediction", key), ok, sim.t_min, *p, 1e-3);
        }
    }
    if let Some(diam) = pred.get("T_FC_upper") {
        let ok = sim.satisfied && sim.t_min <= *diam;
        rep.check("flow.T_FC_within_diameter", ok, sim.t_min, *diam, 0.0);
    }

    let mut csv = String::new();
    let dim = sim.points.first().map_or(1, |p| p.len());
    csv.push_str(if dim == 2 { "x1,x2,hitting_time,g\n" } else { "s,hitting_time,g\n" });
    for (i, p) in sim.points.iter().enumerate() {
        for x in p {
            let _ = write!(csv, "{},", g17(*x));
        }
        let h = sim.hitting_times.get(i).copied().unwrap_or(f64::NAN);
        let g = sim.g_field.get(i).copied().unwrap_or(f64::NAN);
        let _ = writeln!(csv, "{},{}", g17(h), g17(g));
    }
    out.write("flow.csv", &csv)?;
    Ok(sim.satisfied.then_some(sim.t_min))
}

fn agmon(pr: &PreparedF64, rep: &mut Report, out: &Out) -> io::Result<()> {
    let a = &pr.agmon;
    rep.num("agmon.energy", a.e);
    rep.opt("agmon.W_omega", a.w_omega);
    rep.opt("agmon.W_m", a.w_m);
    if let (Some(wo), Some(wm)) = (a.w_omega, a.w_m) {
        rep.num("agmon.W_gap", wo - wm);
    }
    let max = a.d_a.iter().fold(f64::NEG_INFINITY, |m, v| m.max(*v));
    let min = a.d_a.iter().fold(f64::INFINITY, |m, v| m.min(*v));
    rep.num("agmon.d_A_max", max);
    rep.check("agmon.d_A_nonnegative", min >= 0.0, min, 0.0, 0.0);
    out.write("agmon.csv", &a.to_csv())
}

/// Per-cell results shared by the spectral and observability analyses.
struct CellOut {
    k: u32,
    eps: f64,
    mu: f64,
    residual: f64,
    norm_check: f64,
    csv: String,
    /// `log C0` per horizon, or the refusal.
    log_c0: Vec<Result<f64, String>>,
    /// Lowest-mode witness per horizon (interior observation only).
    witness: Vec<Option<f64>>,
}

fn solve_cells(res: &Resolved, pr: &PreparedF64) -> Vec<Result<CellOut, String>> {
    // order of the output follows the input, whatever the thread count
    res.cells
        .par_iter()
        .map(|&(k, eps)| solve_cell(res, pr, k, eps).map_err(|e| e.to_string()))
        .collect()
}

fn solve_cell(res: &Resolved, pr: &PreparedF64, k: u32, eps: f64) -> Result<CellOut, Error> {
    let op = pr.operator(eps, k)?;
    let pair = lowest_eigenpairs(&op, 1)?.remove(0);
    // the Agmon column belongs to the sector with εk = c
    let same_sector = !pr.spec.case.is_revolution() || (eps * k as f64 - res.scenario.c).abs() <= 1e-9;
    let csv = eigenpair_csv(&pair, &op, same_sector.then_some(&pr.agmon));
    let mut log_c0 = Vec::new();
    let mut witness = Vec::new();
    if res.run.observability {
        if res.scenario.boundary {
            for &t in &res.ts {
                let w = witness_cost(&pair, &op, &pr.f_values, &pr.omega, t, Target::Boundary)?;
                log_c0.push(if w.unobserved {
                    Err("boundary trace vanishes".to_string())
                } else {
                    Ok(w.log_ratio)
                });
                witness.push(None);
            }
        } else {
            let modes = gramian_modes(&op, &pr.f_values, &pr.omega, res.modes.min(op.len()))?;
            for &t in &res.ts {
                log_c0.push(modes.cost_truncated(t, RCOND).map(|c| c.log_c0).map_err(|e| e.to_string()));
                let w = witness_cost(&pair, &op, &pr.f_values, &pr.omega, t, Target::Interior)?;
                witness.push((!w.unobserved).then_some(w.log_ratio));
            }
        }
    }
    Ok(CellOut {
        k,
        eps,
        mu: pair.mu,
        residual: pair.residual,
        norm_check: pair.norm_check,
        csv,
        log_c0,
        witness,
    })
}

fn spectral(
    res: &Resolved,
    pr: &PreparedF64,
    cells: &[Result<CellOut, String>],
    rep: &mut Report,
    out: &Out,
) -> io::Result<()> {
    let mut worst_res: f64 = 0.0;
    let mut worst_norm: f64 = 0.0;
    for (i, c) in cells.iter().enumerate() {
        let (k, eps) = res.cells[i];
        rep.num(format!("spectral.cell{}.k", i), k as f64);
        rep.num(format!("spectral.cell{}.eps", i), eps);
        match c {
            Ok(c) => {
                rep.num(format!("spectral.cell{}.mu", i), c.mu);
                let v_c = pr.pot.v_min;
                if (c.eps * c.k as f64 - res.scenario.c).abs() <= 1e-9 || !pr.spec.case.is_revolution() {
                    rep.num(format!("spectral.cell{}.gap_to_V_min", i), c.mu - v_c);
                }
                worst_res = worst_res.max(c.residual);
                worst_norm = worst_norm.max(c.norm_check);
                out.write(&format!("eigenpair_{}.csv", i), &c.csv)?;
            }
            Err(e) => rep.failure(&format!("spectral.cell{}", i), e),
        }
    }
    rep.check("spectral.max_residual", worst_res <= 1e-10, worst_res, 0.0, 1e-10);
    rep.check("spectral.max_norm_error", worst_norm <= 1e-12, worst_norm, 0.0, 1e-12);
    Ok(())
}

fn observability(
    res: &Resolved,
    pr: &PreparedF64,
    cells: &[Result<CellOut, String>],
    rep: &mut Report,
    out: &Out,
) -> io::Result<()> {
    let sc = &res.scenario;
    let mode = pr.mode(sc.boundary);
    let method = if sc.boundary { Method::Witness } else { Method::Gramian };
    rep.text("observability.method", method.name());
    rep.text("observability.mode", format!("{:?}", mode));
    let mut reports: Vec<SweepReportF64> = Vec::new();
    let mut rates = Vec::new();
    for (j, &t) in res.ts.iter().enumerate() {
        let key = format!("observability.T{}", j);
        rep.num(format!("{}.T", key), t);
        let theory = match pr.theory(t, mode) {
            Ok(th) => Some(th.rate),
            Err(e) => {
                rep.note(format!("{}: theory rate unavailable: {}", key, e));
                None
            }
        };
        rep.opt(format!("{}.theory_rate", key), theory);
        let mut idx = 0;
        let sweep = slope_sweep(&res.cells, t, method, theory, res.delta_fit, |_, _| {
            let r = match &cells[idx] {
                Ok(c) => c.log_c0[j].clone().map_err(|e| Error::Refused {
                    reason: e,
                    measured: f64::NAN,
                }),
                Err(e) => Err(Error::Numerical(e.clone())),
            };
            idx += 1;
            r
        });
        let sweep = match sweep {
            Ok(s) => s,
            Err(e) => {
                rep.failure(&key, e);
                rates.push(None);
                continue;
            }
        };
        for p in &sweep.points {
            if let Some(n) = &p.note {
                rep.note(format!("{} k={} eps={}: {}", key, p.k, p.eps, n));
            }
        }
        let fitted = sweep.fit.as_ref().map(|f| f.rate);
        rep.opt(format!("{}.fitted_rate", key), fitted);
        rep.opt(format!("{}.fit_residual", key), sweep.fit.as_ref().map(|f| f.residual));
        match (fitted, theory) {
            (Some(f), Some(th)) => rep.check(
                format!("{}.rate_vs_theory", key),
                f >= th - res.delta_fit,
                f,
                th,
                res.delta_fit,
            ),
            (None, _) => rep.check(format!("{}.fit_available", key), false, f64::NAN, f64::NAN, 0.0),
            _ => {}
        }
        // T beyond T_GCC on the sphere construction still costs exponentially
        if res.builtin.as_deref() == Some("sphere_caps") {
            if let (Some(tg), Some(f)) = (sc.predicted.get("T_GCC"), fitted) {
                if t > *tg {
                    rep.check(format!("{}.positive_rate_above_T_GCC", key), f > 0.0, f, 0.0, 0.0);
                }
            }
        }
        rates.push(fitted);
        reports.push(sweep);
    }

    if !sc.boundary {
        let mut margin = f64::INFINITY;
        for c in cells.iter().flatten() {
            for (g, w) in c.log_c0.iter().zip(&c.witness) {
                if let (Ok(g), Some(w)) = (g, w) {
                    margin = margin.min(g - w);
                }
            }
        }
        if margin.is_finite() {
            rep.check("observability.gramian_dominates_witness", margin >= -1e-9, margin, 0.0, 1e-9);
        }
    }

    if res.ts.len() >= 2 {
        if let Ok(b) = t_unif_bracket(&res.ts, &rates, res.delta_fit) {
            rep.opt("observability.T_lo", b.t_lo);
            rep.opt("observability.T_hi", b.t_hi);
            if let Some(bound) = sc.predicted.get("T_unif_lower") {
                let lo = b.t_lo.unwrap_or(f64::NAN);
                rep.check("observability.T_lo_vs_lower_bound", lo >= bound - 0.1, lo, *bound, 0.1);
            }
        }
    }
    out.write("sweep.csv", &sweep_csv(&res.name, &reports))
}

fn kernel(
    res: &Resolved,
    pr: &PreparedF64,
    t_flow: Option<f64>,
    seed: u64,
    rep: &mut Report,
    out: &Out,
) -> io::Result<()> {
    let spec = &pr.spec;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let lo = spec.grid[0];
    let hi = *spec.grid.last().unwrap();
    let mut ys: Vec<f64> = (0..res.sources).map(|_| rng.gen_range(lo..=hi)).collect();
    ys.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let eps: Vec<f64> = res.cells.iter().map(|c| c.1).collect();
    let t_gcc = t_flow.unwrap_or(f64::NAN);
    let b = match positive_time_bracket(
        spec,
        &pr.f,
        &pr.q,
        &pr.omega,
        &res.ts,
        &eps,
        &ys,
        KERNEL_ETA,
        res.delta_fit,
        t_gcc,
    ) {
        Ok(b) => b,
        Err(e) => {
            rep.failure("kernel", e);
            return Ok(());
        }
    };
    let mut csv = String::from("T,eps,log_C0_plus\n");
    for (h, t) in b.horizons.iter().enumerate() {
        rep.opt(format!("kernel.T{}.positive_rate", h), b.fits[h].as_ref().map(|f| f.rate));
        for (e, eps) in b.eps.iter().enumerate() {
            let _ = writeln!(csv, "{},{},{}", g17(*t), g17(*eps), g17(b.log_c0[h][e]));
        }
    }
    rep.opt("kernel.T_lo", b.bracket.t_lo);
    rep.opt("kernel.T_hi", b.bracket.t_hi);
    if t_gcc.is_finite() {
        // only the lower edge is certified
        let lo = b.bracket.t_lo;
        rep.check("kernel.T_lo_within_flow_time", lo.map_or(true, |t| t <= t_gcc), lo.unwrap_or(f64::NAN), t_gcc, 0.0);
        rep.flag("kernel.bracket_contains_flow_time", b.consistent);
    }
    out.write("kernel_positive.csv", &csv)?;

    // L¹ bound at the smallest ε and the largest horizon
    let e_min = *eps.last().unwrap();
    let t = *res.ts.last().unwrap();
    match KernelGenerator::new(spec, &pr.f, &pr.q, e_min).and_then(|g| l1_kernel_observability(&g, &pr.omega, t, t, &ys, 2.0)) {
        Ok(l1) => {
            rep.num("kernel.l1.eps", e_min);
            rep.num("kernel.l1.eps_log_C", l1.eps_log_c);
            rep.check(
                "kernel.l1.reverse_ratio_within_gronwall",
                l1.reverse_l1_ratio <= l1.gronwall_bound * (1.0 + 1e-9),
                l1.reverse_l1_ratio,
                l1.gronwall_bound,
                1e-9,
            );
        }
        Err(e) => rep.failure("kernel.l1", e),
    }
    Ok(())
}
