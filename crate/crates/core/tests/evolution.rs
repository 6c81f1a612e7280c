use std::sync::Arc;

use qlwave::data::{Bump, FieldSpec, InitialDataSet, Modulation, ZeroField};
use qlwave::lifespan::compute_h;
use qlwave::nullform::{CoefficientSet, SpeedVector, Tensor};
use qlwave::radiation::{build_radiation_table, Radiation, RadonOptions};
use qlwave::simulator::*;

fn unit_speed() -> SpeedVector {
    SpeedVector::new(vec![1.0]).unwrap()
}

fn radial_bump_data() -> InitialDataSet {
    InitialDataSet::new(vec![Arc::new(ZeroField)], vec![Arc::new(Bump::radial(1.0, 1.0))]).unwrap()
}

/// `u_tt = Lap u + u_t^2`.
fn time_square() -> CoefficientSet {
    let mut c = CoefficientSet::new(1);
    c.set(Tensor::B, &[0, 0, 0, 0, 0], 1.0).unwrap();
    c
}

fn q0() -> CoefficientSet {
    let mut c = CoefficientSet::new(1);
    c.set(Tensor::B, &[0, 0, 0, 0, 0], 1.0).unwrap();
    c.set(Tensor::B, &[0, 0, 0, 1, 1], -1.0).unwrap();
    c.set(Tensor::B, &[0, 0, 0, 2, 2], -1.0).unwrap();
    c
}

fn config(
    coeffs: CoefficientSet,
    data: InitialDataSet,
    eps: f64,
    geometry: Geometry,
    n: usize,
    t_max: f64,
) -> SimConfig {
    let mut settings = SimSettings::new(n, t_max);
    settings.geometry = geometry;
    settings.output_interval = 0.1;
    SimConfig::new(coeffs, unit_speed(), data, eps, settings)
}

#[test]
fn planar_blowup_agrees_with_fine_radial_reference() {
    let eps = 5.0;
    let with_extent = |geometry, n| {
        let mut cfg = config(time_square(), radial_bump_data(), eps, geometry, n, 3.0);
        cfg.settings.extent = Some(4.5);
        run(&cfg).unwrap()
    };
    let planar = with_extent(Geometry::Planar, 241);
    let radial = with_extent(Geometry::Radial, 4 * 120);
    assert_eq!(planar.outcome, Outcome::Blowup);
    assert_eq!(radial.outcome, Outcome::Blowup);
    assert!((radial.h - planar.h / 4.0).abs() < 0.05 * radial.h);
    let rel = (planar.t_emp / radial.t_emp - 1.0).abs();
    assert!(rel < 0.1, "planar {} radial {}", planar.t_emp, radial.t_emp);
}

#[test]
fn larger_amplitude_blows_up_sooner() {
    let t = |eps: f64| {
        estimate_lifespan(
            &config(time_square(), radial_bump_data(), eps, Geometry::Radial, 600, 6.0),
            eps,
        )
        .unwrap()
        .expect("blow-up")
    };
    let (small, large) = (t(4.5), t(5.0));
    assert!(large < small, "{large} >= {small}");
}

#[test]
fn halving_the_time_step_barely_moves_the_lifespan() {
    let mut cfg = config(time_square(), radial_bump_data(), 5.0, Geometry::Radial, 600, 3.0);
    let base = run(&cfg).unwrap();
    cfg.settings.cfl /= 2.0;
    let halved = run(&cfg).unwrap();
    assert!((halved.dt / base.dt - 0.5).abs() < 1e-3);
    assert_eq!(base.outcome, Outcome::Blowup);
    assert!(
        (halved.t_emp / base.t_emp - 1.0).abs() < 0.05,
        "{} vs {}",
        base.t_emp,
        halved.t_emp
    );
}

#[test]
fn linear_problem_reaches_the_horizon() {
    let cfg = config(
        CoefficientSet::new(1),
        radial_bump_data(),
        1.0,
        Geometry::Auto,
        400,
        4.0,
    );
    assert_eq!(estimate_lifespan(&cfg, 1.0).unwrap(), None);
    let r = run(&cfg).unwrap();
    assert_eq!(r.outcome, Outcome::Completed);
    assert_eq!(r.t_emp, 4.0);
    assert!(r.energy_drift() < 1e-3);
}

#[test]
fn strong_null_evolution_stays_proportional_to_amplitude() {
    let peak = |eps: f64| {
        let r = run(&config(q0(), radial_bump_data(), eps, Geometry::Auto, 800, 12.0)).unwrap();
        assert_eq!(r.outcome, Outcome::Completed);
        assert_eq!(r.geometry, Geometry::Radial);
        r.diagnostics.iter().map(|d| d.bracket_norm).fold(0.0, f64::max)
    };
    let eps = 0.2;
    let constant = peak(eps / 2.0) / (eps / 2.0);
    let bracket = peak(eps);
    assert!(bracket <= 1.1 * constant * eps, "{bracket} vs {}", constant * eps);
}

fn modulated_data() -> InitialDataSet {
    let f = FieldSpec::Bump {
        amplitude: 1.0,
        radius: 1.0,
        center: [0.2, -0.1],
        modulation: Some(Modulation {
            amplitude: 0.3,
            order: 2,
            phase: 0.1,
        }),
    };
    let g = FieldSpec::Bump {
        amplitude: 0.5,
        radius: 1.0,
        center: [0.0, 0.0],
        modulation: None,
    };
    InitialDataSet::from_specs(&[f], &[g]).unwrap()
}

#[test]
fn nothing_moves_outside_the_domain_of_influence() {
    let t_max = 1.5;
    let cfg = config(
        CoefficientSet::new(1),
        modulated_data(),
        1.0,
        Geometry::Planar,
        241,
        t_max,
    );
    let r = run(&cfg).unwrap();
    let Snapshot::Planar(fields) = &r.snapshot else {
        panic!("planar run");
    };
    let g = &fields[0];
    let limit = t_max + cfg.data.support_radius() + 2.0 * r.h;
    let mut outside = 0;
    for jy in 0..g.ny {
        for jx in 0..g.nx {
            let x = g.coords(jx, jy);
            if x[0].hypot(x[1]) > limit {
                assert!(g.get(jx, jy).abs() <= 1e-10, "{x:?}: {}", g.get(jx, jy));
                outside += 1;
            }
        }
    }
    assert!(outside > 0);
}

#[test]
fn radial_problem_keeps_the_grid_symmetry() {
    // cubic quasilinear term, rotation invariant
    let mut c = CoefficientSet::new(1);
    c.set(Tensor::C, &[0; 8], -0.5).unwrap();
    let cfg = config(c, radial_bump_data(), 1.0, Geometry::Planar, 121, 2.0);
    let r = run(&cfg).unwrap();
    assert_eq!(r.outcome, Outcome::Completed);
    let Snapshot::Planar(fields) = &r.snapshot else {
        panic!("planar run");
    };
    let g = &fields[0];
    let n = g.nx;
    let amplitude = g.max_abs_valid();
    assert!(amplitude > 0.0);
    let mut worst = 0.0f64;
    for jy in 0..n {
        for jx in 0..n {
            let v = g.get(jx, jy);
            let (mx, my) = (n - 1 - jx, n - 1 - jy);
            for (a, b) in [(mx, jy), (jx, my), (mx, my), (jy, jx), (my, mx), (my, jx), (jy, mx)] {
                worst = worst.max((v - g.get(a, b)).abs());
            }
        }
    }
    assert!(worst <= 1e-6 * amplitude, "{worst} vs {amplitude}");
}

#[test]
fn identical_configs_give_identical_results() {
    let mut c = CoefficientSet::new(1);
    c.set(Tensor::A, &[0, 0, 0, 1, 1, 0], 0.3).unwrap();
    c.set(Tensor::B, &[0, 0, 0, 0, 1], 0.5).unwrap();
    let cfg = config(c, modulated_data(), 0.5, Geometry::Planar, 81, 1.0);
    let a = run(&cfg).unwrap();
    let b = run(&cfg).unwrap();
    assert_eq!(a.diagnostics_csv(), b.diagnostics_csv());
    assert_eq!(a.snapshot, b.snapshot);
    assert_eq!(a.t_emp.to_bits(), b.t_emp.to_bits());
}

#[test]
fn zero_h_scaling_rows_all_reach_the_horizon() {
    let cfg = config(q0(), radial_bump_data(), 0.5, Geometry::Auto, 200, 3.0);
    let rows = scaling_study(&cfg, &[0.4, 0.3, 0.2], 0.0, 0.35).unwrap();
    assert_eq!(rows.len(), 3);
    for row in &rows {
        assert_eq!(row.t_emp, None);
        assert!(!row.flagged && !row.invalid);
        assert!(row.inverse_h.is_infinite());
    }
}

#[test]
fn single_epsilon_study_matches_the_estimate() {
    let mut c = CoefficientSet::new(1);
    c.set(Tensor::C, &[0; 8], -4.0).unwrap();
    let data = radial_bump_data();
    let rad = Radiation::new(RadonOptions::default());
    let table = build_radiation_table(&rad, &data, 0, 1.0, -4.0, 80, 1).unwrap();
    let h = compute_h(&c, &unit_speed(), &[table], None).unwrap().h;
    assert!(h > 0.0);
    let cfg = config(c, data, 2.0, Geometry::Radial, 400, 4.0);
    let rows = scaling_study(&cfg, &[2.0], h, 0.35).unwrap();
    let direct = estimate_lifespan(&cfg, 2.0).unwrap();
    assert_eq!(rows[0].t_emp, direct);
    assert_eq!(rows[0].inverse_h, 1.0 / h);
}

#[test]
fn probe_follows_the_front() {
    let data = radial_bump_data();
    let mut cfg = config(CoefficientSet::new(1), data.clone(), 1.0, Geometry::Radial, 400, 3.0);
    cfg.probes.push(ProbeSpec {
        component: 0,
        lambda: 0.5,
        omega: 0.0,
        t0: 1.0,
    });
    let r = run(&cfg).unwrap();
    let p = &r.probes[0];
    assert!(!p.t.is_empty());
    for (t, rr) in p.t.iter().zip(&p.r) {
        // linear problem: dr/dt = c exactly
        assert!((rr - (t + 0.5)).abs() < 1e-9, "{t} {rr}");
    }
    assert!(data.g(0).support_radius() > 0.0);
}
