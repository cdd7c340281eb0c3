//! The closed simulation loop and its replay.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::control::control_lateral;
use super::perception::{perceive, PerceptionOutput};
use super::plant::{decelerate, step_vehicle, VehicleState};
use super::scenario::{LoadedScenario, SignalRoute, TIME_EPS};
use super::trace::{RunTrace, StepRecord, TraceHeader, TraceRecord, TRACE_FORMAT};
use super::SimError;
use crate::ability::{AbilityGraph, SignalSample};
use crate::modes::{ModeChange, ModeMachine, OperatingMode, TransitionRequest};

fn sample(route: &Option<SignalRoute>, value: f64, unit: &str, t: f64) -> Option<SignalSample> {
    route
        .as_ref()
        .map(|r| SignalSample::new(&r.metric, &r.component, value, unit, t))
}

fn enqueue_requests(loaded: &LoadedScenario, modes: &mut ModeMachine, t: f64, dt: f64) {
    for req in &loaded.scenario.operator_requests {
        // Requests land on the first cycle at or after their time.
        if req.t <= t + TIME_EPS && req.t > t - dt + TIME_EPS {
            modes.enqueue(TransitionRequest::operator(req.target));
        }
    }
}

pub fn run_scenario(loaded: &LoadedScenario) -> Result<RunTrace, SimError> {
    let sc = &loaded.scenario;
    let plant = &sc.plant;
    let mut ag = loaded.build_ability_graph()?;
    let mut rng = ChaCha8Rng::seed_from_u64(sc.seed);
    let mut modes = ModeMachine::new(sc.degraded_policy);
    let mut offsets: VecDeque<f64> = VecDeque::with_capacity(sc.offset_window);
    let mut last_cmd = 0.0;
    let mut state = VehicleState {
        y: sc
            .lane
            .offset_for_distance(sc.initial_distance.unwrap_or(sc.target_distance)),
        v: sc.speed,
        ..VehicleState::default()
    };
    let mut records = Vec::with_capacity(sc.steps() + 8);

    for k in 0..sc.steps() {
        let t = k as f64 * sc.dt;
        let fault = sc.faults.at(t);
        let true_distance = sc.lane.distance_to_left(state.y);
        let perc = perceive(true_distance, state.psi, &fault, plant.wheelbase, &mut rng);

        let mut samples = Vec::new();
        if let PerceptionOutput::Valid(est) = &perc {
            if offsets.len() == sc.offset_window {
                offsets.pop_front();
            }
            offsets.push_back(est.distance - sc.target_distance);
            let mean_offset = offsets.iter().sum::<f64>() / offsets.len() as f64;
            samples.extend(sample(&sc.signals.distance, est.distance, "m", t));
            samples.extend(sample(&sc.signals.variance, est.variance, "m^2", t));
            samples.extend(sample(&sc.signals.validity, 1.0, "flag", t));
            samples.extend(sample(&sc.signals.offset, mean_offset, "m", t));
        }
        samples.extend(sample(
            &sc.signals.steering,
            state.delta.to_degrees(),
            "deg",
            t,
        ));
        for s in &samples {
            ag.ingest_sample(s.clone())?;
        }
        ag.propagate();
        let assessment = ag.assess(&sc.thresholds);

        enqueue_requests(loaded, &mut modes, t, sc.dt);
        let outcome = modes.cycle(t, assessment.overall);
        let mode = modes.mode();

        let cmd = match mode {
            OperatingMode::Follow => {
                match control_lateral(
                    &perc,
                    sc.target_distance,
                    fault.controller_gain_scale,
                    &sc.controller,
                    plant,
                ) {
                    Ok(c) => {
                        last_cmd = c;
                        c
                    }
                    Err(_) => last_cmd,
                }
            }
            _ => 0.0,
        };
        match mode {
            OperatingMode::Follow => state.v = sc.speed,
            OperatingMode::SafeHalt => state.v = decelerate(state.v, plant.safe_halt_decel, sc.dt),
            _ => {}
        }
        let next = step_vehicle(&state, cmd, fault.disturbance_lateral, sc.dt, plant)?;

        records.push(TraceRecord::Step(Box::new(StepRecord {
            t,
            step: k,
            s: state.s,
            y: state.y,
            psi: state.psi,
            v: next.v,
            delta: next.delta,
            distance: perc.estimate().map(|e| e.distance),
            true_distance,
            valid: perc.is_valid(),
            samples,
            levels: ag
                .levels()
                .into_iter()
                .map(|(id, l)| (id, l.value()))
                .collect(),
            status: assessment.nodes,
            overall: assessment.overall,
            mode,
        })));
        records.extend(outcome.changes.into_iter().map(TraceRecord::ModeChange));
        state = next;
    }
    Ok(RunTrace {
        header: TraceHeader {
            format: TRACE_FORMAT.to_string(),
            scenario: loaded.clone(),
        },
        records,
    })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReplayReport {
    pub steps: usize,
    pub mismatches: Vec<String>,
}

impl ReplayReport {
    pub fn is_consistent(&self) -> bool {
        self.mismatches.is_empty()
    }
}

/// Re-ingests every recorded sample into a fresh ability graph and checks
/// that levels, statuses and modes come out identical.
pub fn replay(trace: &RunTrace) -> Result<ReplayReport, SimError> {
    let loaded = &trace.header.scenario;
    let sc = &loaded.scenario;
    let mut ag: AbilityGraph = loaded.build_ability_graph()?;
    let mut modes = ModeMachine::new(sc.degraded_policy);
    let mut report = ReplayReport::default();
    let mut expected_changes: Vec<&ModeChange> = Vec::new();
    let mut actual_changes: Vec<ModeChange> = Vec::new();

    for record in &trace.records {
        let step = match record {
            TraceRecord::Step(s) => s,
            TraceRecord::ModeChange(m) => {
                expected_changes.push(m);
                continue;
            }
            TraceRecord::Header(_) => unreachable!("parser keeps a single header"),
        };
        report.steps += 1;
        for s in &step.samples {
            if let Err(e) = ag.ingest_sample(s.clone()) {
                report
                    .mismatches
                    .push(format!("step {}: sample rejected: {e}", step.step));
            }
        }
        ag.propagate();
        let assessment = ag.assess(&sc.thresholds);
        for (id, level) in ag.levels() {
            match step.levels.get(&id) {
                Some(&recorded) if recorded == level.value() => {}
                Some(&recorded) => report.mismatches.push(format!(
                    "step {}: level of `{id}` recorded {recorded}, recomputed {}",
                    step.step,
                    level.value()
                )),
                None => report
                    .mismatches
                    .push(format!("step {}: level of `{id}` missing", step.step)),
            }
        }
        if step.levels.len() != ag.nodes().len() {
            report
                .mismatches
                .push(format!("step {}: unexpected node set in levels", step.step));
        }
        if step.status != assessment.nodes || step.overall != assessment.overall {
            report
                .mismatches
                .push(format!("step {}: status differs", step.step));
        }
        enqueue_requests(loaded, &mut modes, step.t, sc.dt);
        actual_changes.extend(modes.cycle(step.t, assessment.overall).changes);
        if modes.mode() != step.mode {
            report.mismatches.push(format!(
                "step {}: mode recorded {}, recomputed {}",
                step.step,
                step.mode,
                modes.mode()
            ));
        }
    }
    if expected_changes.len() != actual_changes.len()
        || expected_changes
            .iter()
            .zip(&actual_changes)
            .any(|(a, b)| *a != b)
    {
        report.mismatches.push("mode-change records differ".into());
    }
    Ok(report)
}
