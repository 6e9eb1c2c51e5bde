use super::*;
use crate::netgraph::CommGraph;
use crate::plant::{linearize, MicrogridConfig};
use approx::assert_relative_eq;
use nalgebra::{DMatrix, DVector};

fn six_bus(load_power: f64, b1: f64, b2: f64) -> MicrogridConfig {
    MicrogridConfig {
        r: vec![2.0, 2.0, 1.0, 0.5, 0.5, 2.0],
        c: vec![5.0, 5.0, 5.0, 10.0, 10.0, 10.0],
        k: vec![1.0, 1.0, 1.0, 2.0, 2.0, 2.0],
        g: vec![0.0, 0.0, 0.0, 1.0, 1.0, 1.0],
        comm: CommGraph::ring(6, 100.0),
        v_ref: 200.0,
        load_power,
        b1,
        b2,
        tau: 0.0,
    }
}

fn at_equilibrium(cfg: &MicrogridConfig) -> SimState {
    let eq = equilibrium(cfg).unwrap();
    SimState {
        t: 0.0,
        di: eq.correction_totals(cfg),
        du: vec![0.0; cfg.n()],
        currents: eq.currents.clone(),
        voltages: eq.voltages.clone(),
        bus_voltage: eq.bus_voltage,
    }
}

#[test]
fn derivatives_vanish_at_equilibrium() {
    let cfg = six_bus(5000.0, 20.0, 10.0);
    let st = at_equilibrium(&cfg);
    let view = DelayedView {
        currents: &st.currents,
        bus_voltage: st.bus_voltage,
    };
    let (a, b) = derivatives(&cfg, &st, &view, DelayPlacement::Uniform);
    assert!(a.iter().chain(&b).all(|d| d.abs() <= 1e-9));
}

#[test]
fn zero_gains_freeze_corrections() {
    let mut sc = Scenario::new(six_bus(5000.0, 0.0, 0.0), 0.2, 1e-3);
    sc.initial = InitialState::Equilibrium {
        perturbation: vec![1.0, -1.0, 0.5, 0.0, 0.0, 0.0],
    };
    let tr = run(&sc).unwrap();
    let first = &tr.samples[0];
    let last = tr.last().unwrap();
    assert_eq!(first.di, last.di);
    assert_eq!(first.du, last.du);
}

#[test]
fn case_a_from_droop_converges() {
    let mut sc = Scenario::new(six_bus(5000.0, 20.0, 10.0), 3.0, 1e-4);
    sc.decimation = 100;
    let tr = run(&sc).unwrap();
    assert_eq!(tr.outcome, Outcome::Converged, "{:?}", tr.stop_reason);
    let last = tr.last().unwrap();
    assert!((last.bus_voltage - 200.0).abs() < 0.2);
    assert!(last.sharing_error(&tr.k) < 1e-3);
    assert!(tr.max_power_residual <= 1e-6);
    assert_relative_eq!(last.t, 3.0, epsilon = 1e-12);
}

#[test]
fn droop_start_matches_bus_quadratic() {
    let mut sc = Scenario::new(six_bus(5000.0, 20.0, 10.0), 0.0, 1e-4);
    sc.distributed = false;
    let tr = run(&sc).unwrap();
    let s = &tr.samples[0];
    let sol = crate::plant::solve_bus_voltage(&sc.config, &[200.0; 6]).unwrap();
    assert_eq!(s.bus_voltage, sol.bus_voltage);
    assert!(s.bus_voltage < 200.0);
    assert_eq!(tr.outcome, Outcome::RunningStable);
}

#[test]
fn consensus_is_conserved_without_voltage_feedback() {
    let mut cfg = six_bus(5000.0, 20.0, 10.0);
    cfg.g = vec![0.0; 6];
    let mut sc = Scenario::new(cfg, 1.0, 1e-4);
    sc.decimation = 50;
    let tr = run(&sc).unwrap();
    let weighted = |s: &SimState| s.di.iter().zip(&tr.k).map(|(d, k)| k * d).sum::<f64>();
    let w0 = weighted(&tr.samples[0]);
    for s in &tr.samples {
        assert!((weighted(s) - w0).abs() <= 1e-8 * s.t.max(1e-12) + 1e-12, "t = {}", s.t);
    }
    // sharing is restored even though the voltage is not
    let last = tr.last().unwrap();
    assert!(last.sharing_error(&tr.k) < 1e-3);
    assert!(last.voltage_error(200.0) > 1e-3);
}

#[test]
fn small_perturbation_follows_matrix_exponential() {
    let cfg = six_bus(5000.0, 20.0, 10.0);
    let model = linearize(&cfg).unwrap();
    let eq = equilibrium(&cfg).unwrap();
    let perturbation = vec![0.02, -0.01, 0.015, -0.005, 0.01, -0.02];
    let mut sc = Scenario::new(cfg, 0.1, 1e-5);
    sc.decimation = 1000;
    sc.initial = InitialState::Equilibrium {
        perturbation: perturbation.clone(),
    };
    let tr = run(&sc).unwrap();
    let dev = |s: &SimState| DVector::from_iterator(6, s.currents.iter().zip(&eq.currents).map(|(a, b)| a - b));
    let d0 = dev(&tr.samples[0]);
    for s in &tr.samples[1..] {
        let predicted = (-&model.j1 * s.t).exp() * &d0;
        let err = (dev(s) - &predicted).norm() / d0.norm();
        assert!(err < 1e-3, "t = {}: {err:e}", s.t);
    }
}


#[test]
fn step_halving_is_consistent() {
    let mut sc = Scenario::new(six_bus(5000.0, 20.0, 10.0), 0.2, 2e-4);
    sc.decimation = 100;
    let coarse = run(&sc).unwrap();
    sc.dt = 1e-4;
    sc.decimation = 200;
    let fine = run(&sc).unwrap();
    assert_eq!(coarse.samples.len(), fine.samples.len());
    for (a, b) in coarse.samples.iter().zip(&fine.samples) {
        assert_relative_eq!(a.t, b.t, epsilon = 1e-12);
        assert!((a.bus_voltage - b.bus_voltage).abs() <= 1e-5 * b.bus_voltage);
        for (x, y) in a.currents.iter().zip(&b.currents) {
            assert!((x - y).abs() <= 1e-5 * y.abs().max(1.0));
        }
    }
}

#[test]
fn delay_requires_fine_step() {
    let mut cfg = six_bus(5000.0, 20.0, 10.0);
    cfg.tau = 0.005;
    let sc = Scenario::new(cfg, 0.1, 1e-3);
    assert!(matches!(run(&sc), Err(Error::InvalidConfig(_))));
}

#[test]
fn unsorted_events_rejected() {
    let mut sc = Scenario::new(six_bus(5000.0, 20.0, 10.0), 1.0, 1e-3);
    sc.events = vec![
        Event { time: 0.5, action: Action::FailAllLinks },
        Event { time: 0.1, action: Action::EnableDistributedControl },
    ];
    assert!(matches!(run(&sc), Err(Error::InvalidConfig(_))));
}

#[test]
fn infeasible_load_step_stops_early() {
    let mut sc = Scenario::new(six_bus(5000.0, 20.0, 10.0), 1.0, 1e-3);
    sc.distributed = false;
    sc.events = vec![Event {
        time: 0.5,
        action: Action::SetLoad { power: 30_000.0 },
    }];
    let tr = run(&sc).unwrap();
    assert_eq!(tr.outcome, Outcome::Infeasible);
    assert!(tr.stop_time <= 0.5 + 1e-9);
    assert!(!tr.samples.is_empty());
}

#[test]
fn total_failure_reverts_to_droop() {
    let mut sc = Scenario::new(six_bus(5000.0, 20.0, 10.0), 2.0, 1e-4);
    sc.decimation = 100;
    sc.events = vec![Event {
        time: 1.0,
        action: Action::FailAllLinks,
    }];
    let tr = run(&sc).unwrap();
    let droop = crate::plant::solve_bus_voltage(&sc.config, &[200.0; 6]).unwrap();
    let last = tr.last().unwrap();
    assert!(last.di.iter().chain(&last.du).all(|&v| v == 0.0));
    assert_relative_eq!(last.bus_voltage, droop.bus_voltage, max_relative = 1e-12);
    assert_eq!(tr.events.len(), 1);

    sc.isolated_revert_to_droop = false;
    let frozen = run(&sc).unwrap();
    let last = frozen.last().unwrap();
    assert!((last.bus_voltage - 200.0).abs() < 0.2);
}

#[test]
fn linear_scalar_threshold() {
    let j1 = DMatrix::from_element(1, 1, 1.0);
    let below = linear_dde_run_matrix(&j1, 1.55, &[1.0], 300.0, 0.01).unwrap();
    let above = linear_dde_run_matrix(&j1, 1.60, &[1.0], 300.0, 0.01).unwrap();
    assert!(below.decays(), "{}", below.growth_ratio());
    assert!(!above.decays(), "{}", above.growth_ratio());
}

#[test]
fn linear_undelayed_decay_matches_exponential() {
    let model = linearize(&six_bus(5000.0, 20.0, 10.0)).unwrap();
    let x0 = [1.0, 0.0, -1.0, 0.5, 0.0, -0.5];
    let tr = linear_dde_run(&model, 0.0, &x0, 0.05, 1e-5).unwrap();
    let exact = (-&model.j1 * 0.05).exp() * DVector::from_column_slice(&x0);
    let got = DVector::from_vec(tr.final_state.clone());
    assert!((got - &exact).norm() <= 1e-8 * exact.norm().max(1e-3));
}

#[test]
fn trace_csv_round_trip() {
    let mut sc = Scenario::new(six_bus(5000.0, 20.0, 10.0), 0.01, 1e-3);
    sc.decimation = 5;
    let tr = run(&sc).unwrap();
    let mut buf = Vec::new();
    write_trace_csv(&tr, &mut buf).unwrap();
    let text = String::from_utf8(buf).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("t,u_L,i_1,i_2,i_3,i_4,i_5,i_6,u_1"));
    assert_eq!(lines.count(), tr.samples.len());
    assert_eq!(tr.samples.len(), 3);
}
