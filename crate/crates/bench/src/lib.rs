//! Fixtures shared by the benchmarks.

use shared_dof_core::control::{Session, SessionState, Variant};
use shared_dof_core::scene::{self, Scenario};
use shared_dof_core::{load_scenario, ControllerConfig, SimUser, UserPolicy};

pub fn canonical() -> Scenario {
    load_scenario(scene::CANONICAL_SCENARIO).expect("built-in scenario parses")
}

pub fn deadlock() -> Scenario {
    load_scenario(scene::DEADLOCK_SCENARIO).expect("built-in scenario parses")
}

/// Session state after `ticks` greedy-user ticks on the canonical scenario.
pub fn mid_task(variant: Variant, ticks: u64) -> (Scenario, ControllerConfig, SessionState) {
    let s = canonical();
    let cfg = ControllerConfig::with_variant(variant);
    let mut session = Session::new(s.clone(), cfg).expect("default config is valid");
    let mut user = SimUser::new(UserPolicy::default(), 1);
    while session.state.tick < ticks && !session.state.is_done() {
        let f = user.decide(&session.state, &s, &cfg);
        session.advance(&f).expect("simulated input is valid");
    }
    (s, cfg, session.state)
}
