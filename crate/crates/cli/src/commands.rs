use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use qlwave::data::InitialDataSet;
use qlwave::io::fmt_f64;
use qlwave::lifespan::{
    compute_h, riccati_integrate, riccati_seed, theta_on_cone, HReport, Refiner, RiccatiProblem, StartRule,
};
use qlwave::nullform::{AssumptionReport, CoefficientSet, NullMode};
use qlwave::radiation::{build_radiation_table, Radiation, RadiationTable};
use qlwave::simulator::{run, scaling_study, Outcome, Snapshot, SCALING_HEADER};
use serde::Serialize;
use serde_json::json;

use crate::config::ProblemConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    CheckNull,
    Radiation,
    Lifespan,
    Riccati,
    Simulate,
    ScalingStudy,
}

pub fn dispatch(kind: Kind, cfg: &ProblemConfig) -> Result<()> {
    let out = &cfg.output_dir;
    fs::create_dir_all(out).with_context(|| format!("cannot create output directory {}", out.display()))?;
    write_json(out, "resolved_config.json", cfg)?;
    let coeffs = cfg.coefficient_set()?;
    let assumptions = AssumptionReport::evaluate(&coeffs, &cfg.speeds)?;
    if kind == Kind::CheckNull {
        return check_null(cfg, &coeffs, &assumptions);
    }
    if !(assumptions.symmetry && assumptions.structure) && !cfg.allow_assumption_violations {
        return Err(qlwave::Error::Domain(format!(
            "refusing to run: coefficient symmetry {}, structure {}; pass --allow-violations to override",
            verdict(assumptions.symmetry),
            verdict(assumptions.structure)
        ))
        .into());
    }
    let data = cfg.initial_data()?;
    match kind {
        Kind::CheckNull => unreachable!(),
        Kind::Radiation => radiation(cfg, &data),
        Kind::Lifespan => lifespan(cfg, &coeffs, &data, &assumptions),
        Kind::Riccati => riccati(cfg, &coeffs, &data),
        Kind::Simulate => simulate(cfg, &coeffs, &data),
        Kind::ScalingStudy => scaling(cfg, &coeffs, &data),
    }
}

fn verdict(ok: bool) -> &'static str {
    if ok {
        "holds"
    } else {
        "fails"
    }
}

fn write_json<T: Serialize + ?Sized>(dir: &Path, name: &str, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    write_text(dir, name, &s)
}

fn write_text(dir: &Path, name: &str, text: &str) -> Result<()> {
    let p = dir.join(name);
    fs::write(&p, text).with_context(|| format!("cannot write {}", p.display()))
}

fn check_null(cfg: &ProblemConfig, coeffs: &CoefficientSet, rep: &AssumptionReport) -> Result<()> {
    let mut csv = String::from("form,mode,holds,witnesses\n");
    let mut forms = Vec::new();
    println!("symmetry: {}", verdict(rep.symmetry));
    println!("structure: {}", verdict(rep.structure));
    for r in &rep.null {
        let form = format!("{:?}", r.form).to_lowercase();
        let mode = match r.mode {
            NullMode::Strong => "strong",
            NullMode::Standard => "standard",
        };
        println!("{form} {mode}: {}", verdict(r.holds));
        writeln!(csv, "{form},{mode},{},{}", r.holds, r.witnesses.len())?;
        let witnesses: Vec<_> = r
            .witnesses
            .iter()
            .map(|w| {
                json!({
                    "i": w.i + 1,
                    "l": w.l + 1,
                    "theta": w.theta,
                    "sign": w.sign,
                    "value": w.value,
                })
            })
            .collect();
        forms.push(json!({ "form": form, "mode": mode, "holds": r.holds, "witnesses": witnesses }));
    }
    let hyp = rep.lifespan_hypotheses_hold();
    println!("lifespan hypotheses: {}", verdict(hyp));
    write_text(&cfg.output_dir, "null_checks.csv", &csv)?;
    write_json(
        &cfg.output_dir,
        "report.json",
        &json!({
            "subcommand": "check-null",
            "components": coeffs.m(),
            "symmetry": rep.symmetry,
            "structure": rep.structure,
            "null_forms": forms,
            "lifespan_hypotheses_hold": hyp,
        }),
    )
}

fn tables(cfg: &ProblemConfig, data: &InitialDataSet) -> Result<(Radiation, Vec<RadiationTable>)> {
    let rad = Radiation::new(cfg.radiation.quadrature);
    let tables = (0..cfg.m())
        .map(|i| {
            build_radiation_table(
                &rad,
                data,
                i,
                cfg.speeds.get(i),
                cfg.rho_min(),
                cfg.radiation.n_rho,
                cfg.radiation.n_omega,
            )
        })
        .collect::<qlwave::Result<Vec<_>>>()?;
    Ok((rad, tables))
}

fn radiation(cfg: &ProblemConfig, data: &InitialDataSet) -> Result<()> {
    let (_, tables) = tables(cfg, data)?;
    let mut summary = Vec::new();
    for t in &tables {
        let name = format!("radiation_{}.csv", t.component + 1);
        write_text(&cfg.output_dir, &name, &t.to_csv())?;
        println!(
            "component {}: {} x {} nodes -> {name}",
            t.component + 1,
            t.n_rho(),
            t.n_omega()
        );
        summary.push(json!({
            "component": t.component + 1,
            "speed": t.speed,
            "rho_min": t.rho[0],
            "rho_max": t.rho[t.n_rho() - 1],
            "n_rho": t.n_rho(),
            "n_omega": t.n_omega(),
            "decay_constants": t.decay,
            "table": name,
        }));
    }
    write_json(
        &cfg.output_dir,
        "report.json",
        &json!({ "subcommand": "radiation", "support_radius": data.support_radius(), "tables": summary }),
    )
}

fn blowup_constant(cfg: &ProblemConfig, coeffs: &CoefficientSet, data: &InitialDataSet) -> Result<HReport> {
    let (rad, tables) = tables(cfg, data)?;
    let refiner = cfg.lifespan.refine_tolerance.map(|tolerance| Refiner {
        radiation: &rad,
        data,
        tolerance,
    });
    Ok(compute_h(coeffs, &cfg.speeds, &tables, refiner)?)
}

fn h_json(h: &HReport) -> serde_json::Value {
    let comps: Vec<_> = h
        .components
        .iter()
        .map(|c| {
            json!({
                "component": c.component + 1,
                "H": c.h,
                "rho": c.rho,
                "omega": c.omega,
                "at_table_edge": c.at_table_edge,
            })
        })
        .collect();
    json!({ "H": h.h, "components": comps })
}

/// `log1p_predicted_T` stays finite when `predicted_T` overflows.
const LIFESPAN_HEADER: &str = "epsilon,H,predicted_T,empirical_T,eps2_log1pT,status,log1p_predicted_T";

fn lifespan(cfg: &ProblemConfig, coeffs: &CoefficientSet, data: &InitialDataSet, rep: &AssumptionReport) -> Result<()> {
    let h = blowup_constant(cfg, coeffs, data)?;
    let mut csv = format!("{LIFESPAN_HEADER}\n");
    let mut rows = Vec::new();
    println!("H = {}", h.h);
    for &eps in &cfg.lifespan.epsilons {
        let est = h.predict(eps)?;
        let status = if est.is_unbounded() { "unbounded" } else { "finite" };
        writeln!(
            csv,
            "{},{},{},nan,nan,{status},{}",
            fmt_f64(eps),
            fmt_f64(h.h),
            fmt_f64(est.predicted_t),
            fmt_f64(est.predicted_log_horizon)
        )?;
        println!(
            "epsilon {eps}: predicted T {}, log(1 + T) {} ({status})",
            est.predicted_t, est.predicted_log_horizon
        );
        rows.push(json!({
            "epsilon": eps,
            "predicted_T": est.predicted_t,
            "log_horizon": est.predicted_log_horizon,
            "status": status,
        }));
    }
    write_text(&cfg.output_dir, "lifespan.csv", &csv)?;
    write_json(
        &cfg.output_dir,
        "report.json",
        &json!({
            "subcommand": "lifespan",
            "blowup_constant": h_json(&h),
            "lifespan_hypotheses_hold": rep.lifespan_hypotheses_hold(),
            "rows": rows,
        }),
    )
}

fn riccati(cfg: &ProblemConfig, coeffs: &CoefficientSet, data: &InitialDataSet) -> Result<()> {
    let rc = &cfg.riccati;
    let i = rc.component - 1;
    let c = cfg.speeds.get(i);
    let (lambda, omega) = match (rc.lambda, rc.omega) {
        (Some(l), Some(w)) => (l, w),
        (l, w) => {
            let h = blowup_constant(cfg, coeffs, data)?;
            let best = &h.components[i];
            (l.unwrap_or(best.rho), w.unwrap_or(best.omega))
        }
    };
    let rad = Radiation::new(cfg.radiation.quadrature);
    let (f_rho, f_rhorho) = rad.radiation_derivatives(data, i, c, lambda, omega)?;
    let theta = theta_on_cone(coeffs, &cfg.speeds, i, omega);
    let (alpha, w0) = riccati_seed(theta, c, cfg.epsilon, f_rho, f_rhorho);
    let start = rc.start.unwrap_or(StartRule::Default { epsilon: cfg.epsilon });
    let t0 = start.t0(lambda);
    if rc.t_end <= t0 || rc.t_end.is_nan() {
        bail!(qlwave::Error::Domain(format!(
            "riccati.t_end = {} must exceed the start time {t0}",
            rc.t_end
        )));
    }
    let problem = RiccatiProblem::unforced(alpha, w0, t0, rc.t_end);
    let sol = riccati_integrate(&problem, &rc.options)?;
    let mut csv = String::from("t,w\n");
    for (t, w) in sol.t.iter().zip(&sol.w) {
        writeln!(csv, "{},{}", fmt_f64(*t), fmt_f64(*w))?;
    }
    write_text(&cfg.output_dir, "riccati.csv", &csv)?;
    match sol.blowup_time() {
        Some(t) => println!("blow-up at t = {t}"),
        None => println!("no blow-up before t = {}", rc.t_end),
    }
    write_json(
        &cfg.output_dir,
        "report.json",
        &json!({
            "subcommand": "riccati",
            "component": rc.component,
            "lambda": lambda,
            "omega": omega,
            "theta": theta,
            "F_rho": f_rho,
            "F_rhorho": f_rhorho,
            "alpha": alpha,
            "w0": w0,
            "t0": t0,
            "t_end": rc.t_end,
            "outcome": sol.outcome,
            "blowup_time": sol.blowup_time(),
            "closed_form_blowup_time": problem.unforced_blowup_time(),
        }),
    )
}

fn simulate(cfg: &ProblemConfig, coeffs: &CoefficientSet, data: &InitialDataSet) -> Result<()> {
    let sim = cfg.sim_config(coeffs, data, cfg.epsilon)?;
    let res = run(&sim)?;
    let out = &cfg.output_dir;
    write_text(out, "diagnostics.csv", &res.diagnostics_csv())?;
    let mut probes = String::from("probe,t,r,W\n");
    for (k, p) in res.probes.iter().enumerate() {
        for ((t, r), w) in p.t.iter().zip(&p.r).zip(&p.w) {
            writeln!(probes, "{},{},{},{}", k + 1, fmt_f64(*t), fmt_f64(*r), fmt_f64(*w))?;
        }
    }
    write_text(out, "probes.csv", &probes)?;
    let mut snapshots = Vec::new();
    match &res.snapshot {
        Snapshot::Radial { r, u } => {
            let mut csv = String::from("r");
            for i in 0..u.len() {
                write!(csv, ",u{}", i + 1)?;
            }
            csv.push('\n');
            for (k, rk) in r.iter().enumerate() {
                csv.push_str(&fmt_f64(*rk));
                for comp in u {
                    write!(csv, ",{}", fmt_f64(comp[k]))?;
                }
                csv.push('\n');
            }
            write_text(out, "profile.csv", &csv)?;
            snapshots.push("profile.csv".to_string());
        }
        Snapshot::Planar(fields) => {
            for (i, f) in fields.iter().enumerate() {
                let name = format!("snapshot_{}.csv", i + 1);
                write_text(out, &name, &f.to_csv())?;
                snapshots.push(name);
            }
        }
    }
    let t_emp = match res.outcome {
        Outcome::Completed => None,
        _ => Some(res.t_emp),
    };
    write_json(
        out,
        "report.json",
        &json!({
            "subcommand": "simulate",
            "epsilon": cfg.epsilon,
            "outcome": res.outcome,
            "last_time": res.t_emp,
            "empirical_T": t_emp,
            "geometry": res.geometry,
            "dt": res.dt,
            "h": res.h,
            "energy_drift": res.energy_drift(),
            "w_reference": res.w_reference,
            "gradient_crossings": res.gradient_crossings,
            "region_max": res.region_max,
            "snapshots": snapshots,
        }),
    )?;
    println!("{:?} at t = {}", res.outcome, res.t_emp);
    if res.outcome == Outcome::Unstable {
        bail!(qlwave::Error::Numerical(format!(
            "the scheme went unstable at t = {}",
            res.t_emp
        )));
    }
    Ok(())
}

fn scaling(cfg: &ProblemConfig, coeffs: &CoefficientSet, data: &InitialDataSet) -> Result<()> {
    let eps = &cfg.scaling.epsilons;
    if eps.is_empty() {
        bail!(qlwave::Error::Domain("scaling.epsilons is empty".to_string()));
    }
    let h = blowup_constant(cfg, coeffs, data)?;
    let sim = cfg.sim_config(coeffs, data, eps[0])?;
    let rows = scaling_study(&sim, eps, h.h, cfg.scaling.tolerance)?;
    let mut csv = format!("{SCALING_HEADER}\n");
    for r in &rows {
        csv.push_str(&r.csv_line(h.h));
        csv.push('\n');
        println!(
            "epsilon {}: empirical T {}, predicted T {}",
            r.epsilon,
            r.t_emp.map_or_else(|| "none".to_string(), |t| t.to_string()),
            r.predicted_t
        );
    }
    write_text(&cfg.output_dir, "scaling.csv", &csv)?;
    write_json(
        &cfg.output_dir,
        "report.json",
        &json!({
            "subcommand": "scaling-study",
            "blowup_constant": h_json(&h),
            "tolerance": cfg.scaling.tolerance,
            "rows": rows,
        }),
    )
}
