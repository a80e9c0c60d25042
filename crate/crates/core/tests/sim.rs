use std::f64::consts::PI;

use nestcert::powernet::{operating_point, reference, synthesize_gains, ClosedLoop, LyapunovFunction, Stage};
use nestcert::sim::{phasor_frequency, run_scenario, Action, Event, FnField, RunOptions};
use nestcert::{integrate, Method, Scenario, Tolerances};

const OMEGA0: f64 = 2.0 * PI * 60.0;

fn tight(method: Method) -> Tolerances {
    let (abs, rel) = match method {
        Method::DormandPrince => (1e-12, 1e-10),
        // Second order: the global error needs a tighter local tolerance.
        Method::Rosenbrock => (1e-14, 1e-12),
    };
    Tolerances { abs, rel, ..Tolerances::default() }.with_method(method)
}

fn stiff() -> Tolerances {
    Tolerances { abs: 1e-8, rel: 1e-8, ..Tolerances::default() }.with_method(Method::Rosenbrock)
}

#[test]
fn exponential_decay() {
    let decay = FnField::new(1, |_, x: &[f64], dx: &mut [f64]| dx[0] = -x[0]);
    for method in [Method::DormandPrince, Method::Rosenbrock] {
        let sol = integrate(&decay, &[1.0], (0.0, 1.0), &tight(method)).unwrap();
        assert!((sol.last()[0] - (-1f64).exp()).abs() < 1e-8, "{method:?}: {}", sol.last()[0]);
        assert_eq!(sol.end_time(), 1.0);
    }
}

#[test]
fn rotation_returns_after_one_period() {
    let rot = FnField::new(2, |_, x: &[f64], dx: &mut [f64]| {
        dx[0] = -x[1];
        dx[1] = x[0];
    });
    for method in [Method::DormandPrince, Method::Rosenbrock] {
        let sol = integrate(&rot, &[1.0, 0.0], (0.0, 2.0 * PI), &tight(method)).unwrap();
        let x = sol.last();
        assert!((x[0] - 1.0).abs() < 1e-6 && x[1].abs() < 1e-6, "{method:?}: {x:?}");
    }
}

#[test]
fn stiff_linear_system() {
    // Eigenvalues -1 and -1e6; the slow mode must come out right.
    let f = FnField::new(2, |_, x: &[f64], dx: &mut [f64]| {
        dx[0] = -x[0];
        dx[1] = -1e6 * (x[1] - x[0]);
    });
    let tol = Tolerances { abs: 1e-10, rel: 1e-8, ..Tolerances::default() }.with_method(Method::Rosenbrock);
    let sol = integrate(&f, &[1.0, 0.0], (0.0, 2.0), &tol).unwrap();
    let expect = (-2f64).exp();
    assert!((sol.last()[0] - expect).abs() < 1e-6);
    assert!((sol.last()[1] - expect).abs() < 1e-5);
    assert!(sol.stats.accepted < 5_000, "{:?}", sol.stats);
}

#[test]
fn dense_output_is_hermite_accurate() {
    let rot = FnField::new(2, |_, x: &[f64], dx: &mut [f64]| {
        dx[0] = -x[1];
        dx[1] = x[0];
    });
    let sol = integrate(&rot, &[1.0, 0.0], (0.0, 3.0), &tight(Method::DormandPrince)).unwrap();
    for i in 0..sol.t.len() {
        assert_eq!(sol.interpolate(sol.t[i]), sol.x[i]);
    }
    let (ts, xs) = sol.resample(0.07);
    assert_eq!(*ts.last().unwrap(), 3.0);
    for (t, x) in ts.iter().zip(&xs) {
        assert!((x[0] - t.cos()).abs() < 1e-5 && (x[1] - t.sin()).abs() < 1e-5, "t = {t}");
    }
}

#[test]
fn invalid_inputs_are_rejected() {
    let f = FnField::new(2, |_, _: &[f64], dx: &mut [f64]| dx.fill(0.0));
    assert!(integrate(&f, &[1.0], (0.0, 1.0), &Tolerances::default()).is_err());
    let bad = Tolerances { abs: 0.0, ..Tolerances::default() };
    assert!(integrate(&f, &[1.0, 2.0], (0.0, 1.0), &bad).is_err());

    let model = ClosedLoop::new(&reference::path(2).with_gains(reference::lab_gains(2))).unwrap();
    let x0 = model.equilibrium(&[0.0, 0.0]);
    let late = Scenario { events: vec![Event { t: 2.0, action: Action::SetLoad { node: 0, conductance: 0.1 } }] };
    assert!(run_scenario(&model, &late, &x0, 1.0, &RunOptions::default()).is_err());
    assert!(run_scenario(&model, &Scenario::default(), &x0[1..], 1.0, &RunOptions::default()).is_err());
}

#[test]
fn frequency_of_rotating_phasors() {
    let t: Vec<f64> = (0..200).map(|i| i as f64 * 1e-3).collect();
    let still: Vec<[f64; 2]> = t.iter().map(|_| [120.0, 0.0]).collect();
    assert!(phasor_frequency(&t, &still, OMEGA0).iter().all(|f| (f.unwrap() - 60.0).abs() < 1e-12));
    let spinning: Vec<[f64; 2]> = t.iter().map(|s| [120.0 * s.cos(), 120.0 * s.sin()]).collect();
    let expect = 60.0 + 1.0 / (2.0 * PI);
    for f in phasor_frequency(&t, &spinning, OMEGA0) {
        assert!((f.unwrap() - expect).abs() < 1e-6);
    }
    // Wrapping past ±π does not produce jumps.
    let fast: Vec<[f64; 2]> = t.iter().map(|s| (50.0 * s).sin_cos()).map(|(s, c)| [c, s]).collect();
    for f in phasor_frequency(&t, &fast, OMEGA0) {
        assert!((f.unwrap() - (60.0 + 50.0 / (2.0 * PI))).abs() < 1e-2);
    }
    let mut gap = still.clone();
    gap[10] = [0.0, 0.0];
    let f = phasor_frequency(&t, &gap, OMEGA0);
    assert!(f[9].is_none() && f[10].is_none() && f[11].is_none() && f[12].is_some());
}

#[test]
fn scenario_runs_are_deterministic() {
    let model = ClosedLoop::new(&reference::path(2).with_gains(reference::lab_gains(2))).unwrap();
    let mut x0 = model.equilibrium(&[0.0, 0.0]);
    x0[0] += 1.0;
    let s = Scenario { events: vec![Event { t: 0.01, action: Action::SetLoad { node: 1, conductance: 0.2 } }] };
    let opts = RunOptions { tolerances: stiff(), sample_dt: 1e-3, lyapunov: None };
    let a = run_scenario(&model, &s, &x0, 0.03, &opts).unwrap();
    let b = run_scenario(&model, &s, &x0, 0.03, &opts).unwrap();
    assert_eq!(a.trajectory, b.trajectory);
    assert_eq!(a.final_state, b.final_state);
    assert_eq!(a.model.loads, vec![0.0, 0.2]);
    assert_eq!(a.trajectory.len(), 31);
}

#[test]
fn load_step_keeps_the_state_continuous() {
    let spec = reference::path(2);
    let cert = synthesize_gains(&spec).unwrap();
    let op = operating_point(&spec.with_gains(cert.gains)).unwrap();
    let step_at = 0.05;
    let s = Scenario { events: vec![Event { t: step_at, action: Action::SetLoad { node: 1, conductance: 0.13 } }] };
    let opts = RunOptions { tolerances: stiff(), sample_dt: 1e-4, lyapunov: None };
    let run = run_scenario(&op.model, &s, &op.state, 0.06, &opts).unwrap();
    let tr = &run.trajectory;
    let i = tr.index_at(step_at);
    let jump = tr.x[i].iter().zip(&tr.x[i - 1]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    let scale = tr.x[i].iter().fold(0.0f64, |a, b| a.max(b.abs()));
    assert!(jump < 1e-2 * scale, "jump {jump} vs scale {scale}");
    // The load shows in the measured power right away.
    assert!(tr.p[i][1] > tr.p[i - 1][1] + 1_000.0, "{} -> {}", tr.p[i - 1][1], tr.p[i][1]);
}

#[test]
fn enabling_stages_in_sequence() {
    let spec = reference::path(2);
    let cert = synthesize_gains(&spec).unwrap();
    let mut model = ClosedLoop::new(&spec.with_gains(cert.gains)).unwrap();
    model.set_stage(1, Stage::Disabled).unwrap();
    let x0 = model.equilibrium(&[0.0, 0.0]);
    let ev = |t, stage| Event { t, action: Action::EnableConverterStage { node: 1, stage } };
    let s = Scenario {
        events: vec![ev(0.01, Stage::CurrentOnly), ev(0.02, Stage::ReferenceVoltage), ev(0.03, Stage::Full)],
    };
    // Switching on a current loop this stiff leaves a residual near the
    // rounding floor of di_f/dt, below what an 1e-8 tolerance can resolve.
    let loose = Tolerances { abs: 1e-6, rel: 1e-6, ..stiff() };
    let opts = RunOptions { tolerances: loose, sample_dt: 1e-3, lyapunov: None };
    let run = run_scenario(&model, &s, &x0, 0.05, &opts).unwrap();
    assert_eq!(run.model.stages, vec![Stage::Full, Stage::Full]);
    assert!(run.final_state.iter().all(|v| v.is_finite()));
}

#[test]
fn setpoint_step_settles_on_the_new_dispatch() {
    const REL: f64 = 0.02;
    const T_END: f64 = 90.0;
    let mut target = reference::path(3);
    target.setpoints.p = vec![0.0, -300.0, 200.0];
    let cert = synthesize_gains(&target).unwrap();
    assert!(cert.pass);
    let flat = operating_point(&reference::path(3).with_gains(cert.gains.clone())).unwrap();
    let s = Scenario { events: vec![Event { t: 0.5, action: Action::SetSetpoints(cert.setpoints.clone()) }] };
    let model = ClosedLoop::new(&target.with_gains(cert.gains.clone()).with_setpoints(cert.setpoints.clone())).unwrap();
    let lf = LyapunovFunction::new(&model, &cert).unwrap();
    let opts = RunOptions { tolerances: stiff(), sample_dt: 0.5, lyapunov: Some(&lf) };
    let run = run_scenario(&flat.model, &s, &flat.state, T_END, &opts).unwrap();
    let (p, _) = run.model.powers(&run.final_state);
    let scale = cert.setpoints.p.iter().fold(0.0f64, |a, b| a.max(b.abs()));
    for k in 0..3 {
        let err = (p[k] - cert.setpoints.p[k]).abs() / scale;
        assert!(err < REL, "node {k}: {} vs {} ({err:.3e})", p[k], cert.setpoints.p[k]);
    }
    let nu = &run.trajectory.nu;
    assert!(nu.last().unwrap().unwrap() < nu[run.trajectory.index_at(0.5)].unwrap());
}
