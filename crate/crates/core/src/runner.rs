//! Headless sessions driven by a simulated user.

use crate::control::{ControlError, ControllerConfig, Session};
use crate::scene::Scenario;
use crate::sim_user::{SimUser, UserPolicy};
use crate::telemetry::{Metrics, MetricsAccumulator, SessionLog};

pub const DEFAULT_TICKS_MAX: u64 = 10_000;

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub log: SessionLog,
    pub metrics: Metrics,
    pub session: Session,
}

impl RunOutcome {
    pub fn success(&self) -> bool {
        self.metrics.success
    }
}

/// Run until the task is done or `ticks_max` ticks have elapsed.
pub fn run_headless(
    scenario: &Scenario,
    config: &ControllerConfig,
    policy: UserPolicy,
    seed: u64,
    ticks_max: u64,
) -> Result<RunOutcome, ControlError> {
    let mut session = Session::new(scenario.clone(), *config)?;
    let mut user = SimUser::new(policy, seed);
    let mut log = SessionLog::new();
    let dt = scenario.tick_dt;
    let mut acc = MetricsAccumulator::with_start(dt, &session.state.gripper);
    while !session.state.is_done() && session.state.tick < ticks_max {
        let tick = session.state.tick;
        let input = user.decide(&session.state, scenario, config);
        let events = session.advance(&input)?;
        log.record(tick, &session.state, events, dt);
        acc.push(log.records.last().expect("just recorded"));
    }
    let metrics = acc.metrics().clone();
    Ok(RunOutcome { log, metrics, session })
}
