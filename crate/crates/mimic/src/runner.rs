//! Headless sessions: a frame source plus scripted operator events run
//! through the pipeline and recorded in the store.

use mimic_core::pose::Frame;
use mimic_core::session::{start_session, EngineError, Output, SessionEvent};
use thiserror::Error;

use crate::config::{Config, ConfigError};
use crate::pipeline::{run_headless, HeadlessError, Pipeline, PipelineOutput};
use crate::replay::ReplayError;
use crate::scenario::{Action, Scenario, ScenarioError};
use crate::simulate::simulate;
use crate::store::{Store, StoreError};

#[derive(Debug, Error)]
pub enum RunError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error(transparent)]
    Headless(#[from] HeadlessError),
    #[error("cannot start session: {0}")]
    Start(EngineError),
}

/// Appends every logged engine entry among `outputs` to the session log.
pub fn record(store: &mut Store, id: &str, outputs: &[PipelineOutput]) -> Result<(), StoreError> {
    for o in outputs {
        if let PipelineOutput::Engine(Output::Logged(entry)) = o {
            store.append(id, entry)?;
        }
    }
    Ok(())
}

/// Runs one session for `scenario.participant` to completion and stores
/// it. Returns the session id.
pub fn run_session<I>(
    store: &mut Store,
    config: &Config,
    scenario: &Scenario,
    frames: I,
    events: &[SessionEvent],
) -> Result<String, RunError>
where
    I: IntoIterator<Item = Result<Frame, ReplayError>>,
{
    let mut pc = config.pipeline()?;
    pc.scene.model_on = scenario.model_on;
    let id = store.next_session_id(&scenario.participant);
    let session = start_session(&*store, &id, &scenario.participant, config.rubric, 0).map_err(RunError::Start)?;
    store.create_session(&id, &scenario.participant, config.rubric, 0)?;
    let mut pipeline = Pipeline::new(session, pc);
    let result = run_headless(&mut pipeline, frames, events);
    // Whatever was accepted before a failure is kept.
    record(store, &id, &pipeline.take_outputs())?;
    result?;
    store.close_session(&id, pipeline.session())?;
    Ok(id)
}

/// Simulates a scenario and stores the session.
pub fn run_scenario(store: &mut Store, config: &Config, scenario: &Scenario, seed: u64) -> Result<String, RunError> {
    let sim = simulate(scenario, seed)?;
    run_session(store, config, scenario, sim.frames.into_iter().map(Ok), &sim.events)
}

/// The operator events of a script. Body actions are ignored, so a
/// scenario can be paired with recorded frames.
pub fn script_events(scenario: &Scenario) -> Vec<SessionEvent> {
    scenario
        .entries
        .iter()
        .filter_map(|e| match &e.action {
            Action::Observe { observation } => Some(SessionEvent::observation(e.at_ms, *observation)),
            Action::Command { command } => Some(SessionEvent::command(e.at_ms, *command)),
            _ => None,
        })
        .collect()
}
