//! The gluing task as an episodic environment.
//!
//! Every pair action costs one point whether it glues, unglues or names two
//! objects that do not touch. Stop applies gravity and pays one point per
//! standing block, plus a bonus when the tower is fully stable with the
//! minimal amount of glue.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::scene::{graph_view, GraphMode, SceneGraph};
use crate::stability::{settle, SettleOutcome};
use crate::{Error, GlueConfig, Result, Tower};

pub const PAIR_COST: i64 = 1;
pub const STABLE_BONUS: i64 = 10;
pub const DEFAULT_MAX_STEPS: usize = 50;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Action {
    GluePair { a: usize, b: usize },
    Stop,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Gluing,
    Done,
}

/// What a step did to the glue state.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepKind {
    Glued,
    Unglued,
    Invalid,
    Stopped,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Terminal {
    pub fallen: Vec<usize>,
    pub standing: i64,
    pub bonus: i64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StepResult {
    pub reward: i64,
    pub done: bool,
    pub kind: StepKind,
    /// Set when the step ended the episode.
    pub terminal: Option<Terminal>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub t: usize,
    pub action: Action,
    pub reward: i64,
    pub glue_bits_after: GlueConfig,
}

#[derive(Clone, Debug)]
pub struct EpisodeState {
    pub tower: Arc<Tower>,
    pub glue: GlueConfig,
    /// Pair actions taken so far.
    pub steps_taken: usize,
    pub points: i64,
    pub phase: Phase,
    pub min_glue: usize,
    pub max_steps: usize,
    pub transcript: Vec<TranscriptRecord>,
}

/// Start an episode. `min_glue` comes from the oracle and decides the bonus.
pub fn reset(tower: Arc<Tower>, min_glue: usize) -> EpisodeState {
    reset_with_cap(tower, min_glue, DEFAULT_MAX_STEPS)
}

pub fn reset_with_cap(tower: Arc<Tower>, min_glue: usize, max_steps: usize) -> EpisodeState {
    let k = tower.contacts().len();
    EpisodeState {
        tower,
        glue: GlueConfig::empty(k),
        steps_taken: 0,
        points: 0,
        phase: Phase::Gluing,
        min_glue,
        max_steps,
        transcript: Vec::new(),
    }
}

/// Points for stopping with `glue` given its settle outcome.
pub fn terminal_points(n_blocks: usize, glue: &GlueConfig, outcome: &SettleOutcome, min_glue: usize) -> Terminal {
    let standing = outcome.standing(n_blocks) as i64;
    let bonus = if outcome.stable && glue.count() == min_glue { STABLE_BONUS } else { 0 };
    Terminal { fallen: outcome.fallen.clone(), standing, bonus }
}

impl EpisodeState {
    pub fn is_done(&self) -> bool {
        self.phase == Phase::Done
    }

    pub fn observation(&self, mode: GraphMode) -> SceneGraph {
        graph_view(&self.tower, &self.glue, mode)
    }

    fn check_pair(&self, a: usize, b: usize) -> Result<()> {
        let n = self.tower.n_blocks();
        if a == b || a > n || b > n {
            return Err(Error::InvalidAction(format!("pair ({a}, {b}) with {n} blocks")));
        }
        Ok(())
    }

    pub fn step(&mut self, action: Action) -> Result<StepResult> {
        if self.is_done() {
            return Err(Error::EpisodeDone);
        }
        let forced = self.steps_taken >= self.max_steps;
        let action = if forced { Action::Stop } else { action };
        let result = match action {
            Action::GluePair { a, b } => {
                self.check_pair(a, b)?;
                self.steps_taken += 1;
                let kind = match self.tower.contact_index(a, b) {
                    Some(i) => {
                        self.glue.toggle(i);
                        if self.glue.is_glued(i) {
                            StepKind::Glued
                        } else {
                            StepKind::Unglued
                        }
                    }
                    None => StepKind::Invalid,
                };
                StepResult { reward: -PAIR_COST, done: false, kind, terminal: None }
            }
            Action::Stop => {
                let outcome = settle(&self.tower, &self.glue)?;
                let term = terminal_points(self.tower.n_blocks(), &self.glue, &outcome, self.min_glue);
                self.phase = Phase::Done;
                StepResult {
                    reward: term.standing + term.bonus,
                    done: true,
                    kind: StepKind::Stopped,
                    terminal: Some(term),
                }
            }
        };
        self.points += result.reward;
        self.transcript.push(TranscriptRecord {
            t: self.transcript.len(),
            action,
            reward: result.reward,
            glue_bits_after: self.glue.clone(),
        });
        Ok(result)
    }
}

/// Replay a list of actions from reset and return the final state.
pub fn replay(tower: Arc<Tower>, min_glue: usize, actions: &[Action]) -> Result<EpisodeState> {
    let mut s = reset(tower, min_glue);
    for &a in actions {
        s.step(a)?;
    }
    Ok(s)
}
