//! Session state as a fold over its event log.
//!
//! Live requests compute their events on a scratch copy of the episode,
//! persist them, then apply them through the same [`Session::apply`] used
//! to rebuild a session after a restart. Served state is therefore always
//! the replay of the log.

use std::sync::Arc;
use std::time::{SystemTime, UNIX_EPOCH};

use gluing_core::env::{reset_with_cap, Action, EpisodeState, StepKind, Terminal, TranscriptRecord, PAIR_COST};
use gluing_core::GlueConfig;
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::ServiceError;
use crate::events::{EventKind, Header, TrialEvent};
use crate::stimuli::{Block, StimulusSet, TrialRef, SET_LENGTH};

pub fn now_ms() -> u64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_millis() as u64)
}

/// Practice towers in stored order, then the experimental towers shuffled
/// by `seed`.
pub fn trial_order(set: &StimulusSet, seed: u64) -> Vec<TrialRef> {
    let mut exp: Vec<usize> = (0..set.n_experimental()).collect();
    exp.shuffle(&mut gluing_core::rng::stream_rng(seed, 0));
    (0..set.n_practice())
        .map(|tower| TrialRef { block: Block::Practice, tower })
        .chain(exp.into_iter().map(|tower| TrialRef { block: Block::Experimental, tower }))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BlockView {
    pub id: usize,
    pub x: f64,
    pub y: f64,
    pub angle: f64,
    pub hw: f64,
    pub hh: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialView {
    pub index: usize,
    pub n_trials: usize,
    pub block: Block,
    /// Which set of 27 an experimental trial belongs to.
    pub set_number: Option<usize>,
    pub blocks: Vec<BlockView>,
    /// Touching pairs, in contact order; `glue_bits` indexes this list.
    pub contacts: Vec<[usize; 2]>,
    pub glue_bits: GlueConfig,
    pub points: i64,
    pub total: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActOutcome {
    pub event: String,
    pub delta: i64,
    pub glue_bits: GlueConfig,
    pub points: i64,
    pub total: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialScore {
    pub trial: usize,
    pub fallen_ids: Vec<usize>,
    pub standing: i64,
    pub glue_cost: i64,
    pub bonus: i64,
    pub trial_points: i64,
    pub total: i64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FinishOutcome {
    #[serde(flatten)]
    pub score: TrialScore,
    pub complete: bool,
    /// Best achievable total over the whole set, reported on completion.
    pub max_total: Option<i64>,
    pub next_trial: Option<TrialView>,
}

pub struct Session {
    pub header: Header,
    set: Arc<StimulusSet>,
    trial: usize,
    episode: Option<EpisodeState>,
    pending: Option<Terminal>,
    total: i64,
    scores: Vec<TrialScore>,
    transcripts: Vec<Vec<TranscriptRecord>>,
    last_t: u64,
}

impl Session {
    /// Fresh session with no events.
    pub fn start(header: Header, set: Arc<StimulusSet>) -> Result<Self, ServiceError> {
        if header.stimulus_set != set.name() {
            return Err(ServiceError::Corrupt(format!(
                "session uses stimulus set {:?}, got {:?}",
                header.stimulus_set,
                set.name()
            )));
        }
        let last_t = header.created_ms;
        let mut s = Self {
            header,
            set,
            trial: 0,
            episode: None,
            pending: None,
            total: 0,
            scores: Vec::new(),
            transcripts: Vec::new(),
            last_t,
        };
        s.episode = s.new_episode()?;
        Ok(s)
    }

    /// Rebuild a session by applying `events` to a fresh one.
    pub fn replay(header: Header, set: Arc<StimulusSet>, events: &[TrialEvent]) -> Result<Self, ServiceError> {
        let mut s = Self::start(header, set)?;
        for e in events {
            s.apply(e)?;
        }
        Ok(s)
    }

    fn new_episode(&self) -> Result<Option<EpisodeState>, ServiceError> {
        let Some(&r) = self.header.trials.get(self.trial) else {
            return Ok(None);
        };
        // Human trials have no action cap. The minimal glue count is filled
        // in just before gravity so the oracle only runs when needed.
        Ok(Some(reset_with_cap(Arc::clone(self.set.tower(r)?), 0, usize::MAX)))
    }

    pub fn id(&self) -> &str {
        &self.header.session_id
    }

    pub fn total(&self) -> i64 {
        self.total
    }

    pub fn scores(&self) -> &[TrialScore] {
        &self.scores
    }

    pub fn transcripts(&self) -> &[Vec<TranscriptRecord>] {
        &self.transcripts
    }

    pub fn is_complete(&self) -> bool {
        self.trial >= self.header.trials.len()
    }

    fn live(&self) -> Result<&EpisodeState, ServiceError> {
        self.episode.as_ref().ok_or(ServiceError::WrongPhase)
    }

    fn next_t(&self) -> u64 {
        now_ms().max(self.last_t + 1)
    }

    pub fn view(&self) -> Result<TrialView, ServiceError> {
        let ep = self.live()?;
        let r = self.header.trials[self.trial];
        let offset = self.header.trials.iter().take_while(|t| t.block == Block::Practice).count();
        Ok(TrialView {
            index: self.trial,
            n_trials: self.header.trials.len(),
            block: r.block,
            set_number: (r.block == Block::Experimental).then(|| (self.trial - offset) / SET_LENGTH),
            blocks: ep
                .tower
                .blocks()
                .iter()
                .map(|b| BlockView {
                    id: b.id,
                    x: b.center.x,
                    y: b.center.y,
                    angle: b.angle,
                    hw: b.half_width,
                    hh: b.half_height,
                })
                .collect(),
            contacts: ep.tower.contacts().iter().map(|c| [c.lower_id, c.upper_id]).collect(),
            glue_bits: ep.glue.clone(),
            points: ep.points,
            total: self.total,
        })
    }

    /// Events a pair click would produce, without changing the session.
    pub fn act_events(
        &self,
        a: usize,
        b: usize,
        t_select_a_ms: Option<f64>,
        t_select_b_ms: Option<f64>,
    ) -> Result<Vec<TrialEvent>, ServiceError> {
        let ep = self.live()?;
        let n = ep.tower.n_blocks();
        if a == b || a > n || b > n {
            return Err(ServiceError::MalformedIds(format!("pair ({a}, {b}) in a tower of {n} blocks")));
        }
        let mut scratch = ep.clone();
        let r = scratch.step(Action::GluePair { a, b })?;
        let kind = match r.kind {
            StepKind::Glued => EventKind::GlueApplied { a, b, delta: r.reward },
            StepKind::Unglued => EventKind::GlueRemoved { a, b, delta: r.reward },
            StepKind::Invalid => EventKind::InvalidPair { a, b, delta: r.reward },
            StepKind::Stopped => unreachable!("uncapped episodes never force a stop"),
        };
        let t = self.next_t();
        Ok(vec![
            TrialEvent { t_ms: t, trial: self.trial, kind: EventKind::SelectObject { object: a, client_ms: t_select_a_ms } },
            TrialEvent { t_ms: t + 1, trial: self.trial, kind: EventKind::SelectObject { object: b, client_ms: t_select_b_ms } },
            TrialEvent { t_ms: t + 2, trial: self.trial, kind },
        ])
    }

    pub fn finish_events(&self) -> Result<Vec<TrialEvent>, ServiceError> {
        let ep = self.live()?;
        let mut scratch = ep.clone();
        scratch.min_glue = self.set.oracle(self.header.trials[self.trial])?.min_glue_size;
        let r = scratch.step(Action::Stop)?;
        let term = r.terminal.expect("stop always ends the episode");
        let glue_cost = PAIR_COST * ep.steps_taken as i64;
        let trial_points = scratch.points;
        let t = self.next_t();
        Ok(vec![
            TrialEvent { t_ms: t, trial: self.trial, kind: EventKind::GravityStarted },
            TrialEvent {
                t_ms: t + 1,
                trial: self.trial,
                kind: EventKind::TrialScored {
                    fallen_ids: term.fallen,
                    standing: term.standing,
                    glue_cost,
                    bonus: term.bonus,
                    trial_points,
                    total: self.total + trial_points,
                },
            },
        ])
    }

    /// Apply one logged event, checking it against the environment.
    pub fn apply(&mut self, e: &TrialEvent) -> Result<(), ServiceError> {
        let corrupt = |m: String| ServiceError::Corrupt(format!("event at t={}: {m}", e.t_ms));
        if e.t_ms <= self.last_t {
            return Err(corrupt(format!("time does not advance past {}", self.last_t)));
        }
        if e.trial != self.trial {
            return Err(corrupt(format!("belongs to trial {} but trial {} is live", e.trial, self.trial)));
        }
        let trial_ref = *self.header.trials.get(self.trial).ok_or_else(|| corrupt("session is complete".into()))?;
        let ep = self.episode.as_mut().ok_or_else(|| corrupt("no live episode".into()))?;
        match &e.kind {
            EventKind::SelectObject { object, .. } => {
                if *object > ep.tower.n_blocks() {
                    return Err(corrupt(format!("no object {object}")));
                }
            }
            EventKind::GlueApplied { a, b, delta }
            | EventKind::GlueRemoved { a, b, delta }
            | EventKind::InvalidPair { a, b, delta } => {
                if self.pending.is_some() {
                    return Err(corrupt("pair action after gravity".into()));
                }
                let r = ep.step(Action::GluePair { a: *a, b: *b })?;
                let expected = match r.kind {
                    StepKind::Glued => matches!(e.kind, EventKind::GlueApplied { .. }),
                    StepKind::Unglued => matches!(e.kind, EventKind::GlueRemoved { .. }),
                    StepKind::Invalid => matches!(e.kind, EventKind::InvalidPair { .. }),
                    StepKind::Stopped => false,
                };
                if !expected || r.reward != *delta {
                    return Err(corrupt(format!("environment gives {:?} {} for ({a}, {b})", r.kind, r.reward)));
                }
            }
            EventKind::GravityStarted => {
                if self.pending.is_some() {
                    return Err(corrupt("gravity started twice".into()));
                }
                ep.min_glue = self.set.oracle(trial_ref)?.min_glue_size;
                let r = ep.step(Action::Stop)?;
                self.pending = r.terminal;
            }
            EventKind::TrialScored { fallen_ids, standing, glue_cost, bonus, trial_points, total } => {
                let term = self.pending.take().ok_or_else(|| corrupt("scored before gravity".into()))?;
                let score = TrialScore {
                    trial: self.trial,
                    fallen_ids: term.fallen,
                    standing: term.standing,
                    glue_cost: PAIR_COST * ep.steps_taken as i64,
                    bonus: term.bonus,
                    trial_points: ep.points,
                    total: self.total + ep.points,
                };
                let logged = (fallen_ids, *standing, *glue_cost, *bonus, *trial_points, *total);
                if logged != (&score.fallen_ids, score.standing, score.glue_cost, score.bonus, score.trial_points, score.total) {
                    return Err(corrupt(format!("logged score {logged:?} disagrees with replay {score:?}")));
                }
                self.total = score.total;
                self.transcripts.push(std::mem::take(&mut ep.transcript));
                self.scores.push(score);
                self.trial += 1;
                self.episode = self.new_episode()?;
            }
        }
        self.last_t = e.t_ms;
        Ok(())
    }

    pub fn act_outcome(&self, last: &TrialEvent) -> Result<ActOutcome, ServiceError> {
        let ep = self.live()?;
        let (event, delta) = match &last.kind {
            EventKind::GlueApplied { delta, .. } => ("glue_applied", *delta),
            EventKind::GlueRemoved { delta, .. } => ("glue_removed", *delta),
            EventKind::InvalidPair { delta, .. } => ("invalid_pair", *delta),
            other => return Err(ServiceError::Corrupt(format!("{other:?} is not a pair event"))),
        };
        Ok(ActOutcome { event: event.into(), delta, glue_bits: ep.glue.clone(), points: ep.points, total: self.total })
    }

    pub fn finish_outcome(&self) -> Result<FinishOutcome, ServiceError> {
        let score = self.scores.last().cloned().ok_or(ServiceError::WrongPhase)?;
        let complete = self.is_complete();
        let max_total = if complete { Some(self.max_total()?) } else { None };
        let next_trial = if complete { None } else { Some(self.view()?) };
        Ok(FinishOutcome { score, complete, max_total, next_trial })
    }

    /// Sum of the oracle optimum over every trial of the session.
    pub fn max_total(&self) -> Result<i64, ServiceError> {
        self.header.trials.iter().map(|&r| Ok(self.set.oracle(r)?.optimal_reward)).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use gluing_core::Tower;

    fn set() -> Arc<StimulusSet> {
        let t = |xs: &[f64]| Tower::stacked(xs, 0.4, 0.2).unwrap();
        Arc::new(StimulusSet::new(
            "t",
            vec![t(&[0.0, 0.45])],
            vec![t(&[0.0, 0.3, 0.75]), t(&[0.0, 0.1, 0.55]), t(&[0.0, 0.5])],
        ))
    }

    fn header(seed: u64) -> Header {
        let s = set();
        Header {
            session_id: "x".into(),
            participant: "p".into(),
            stimulus_set: "t".into(),
            seed,
            created_ms: 0,
            note: None,
            trials: trial_order(&s, seed),
        }
    }

    fn commit(s: &mut Session, evs: Vec<TrialEvent>, log: &mut Vec<TrialEvent>) {
        for e in &evs {
            s.apply(e).unwrap();
        }
        log.extend(evs);
    }

    #[test]
    fn order_keeps_practice_first() {
        let s = set();
        let o = trial_order(&s, 4);
        assert_eq!(o[0], TrialRef { block: Block::Practice, tower: 0 });
        let mut exp: Vec<usize> = o[1..].iter().map(|r| r.tower).collect();
        exp.sort_unstable();
        assert_eq!(exp, vec![0, 1, 2]);
        assert_eq!(trial_order(&s, 4), o);
    }

    #[test]
    fn pair_clicks_glue_unglue_and_cost() {
        let mut s = Session::start(header(0), set()).unwrap();
        let mut log = Vec::new();
        let evs = s.act_events(0, 1, Some(1.0), Some(2.0)).unwrap();
        assert!(matches!(evs[2].kind, EventKind::GlueApplied { delta: -1, .. }));
        commit(&mut s, evs, &mut log);
        assert_eq!(s.view().unwrap().glue_bits.to_string(), "10");
        let evs = s.act_events(1, 0, None, None).unwrap();
        assert!(matches!(evs[2].kind, EventKind::GlueRemoved { delta: -1, .. }));
        commit(&mut s, evs, &mut log);
        let evs = s.act_events(0, 2, None, None).unwrap();
        assert!(matches!(evs[2].kind, EventKind::InvalidPair { delta: -1, .. }));
        commit(&mut s, evs, &mut log);
        assert_eq!(s.view().unwrap().glue_bits.to_string(), "00");
        assert_eq!(s.view().unwrap().points, -3);
        assert!(matches!(s.act_events(1, 1, None, None), Err(ServiceError::MalformedIds(_))));
        assert!(matches!(s.act_events(0, 3, None, None), Err(ServiceError::MalformedIds(_))));
    }

    #[test]
    fn finishing_every_trial_completes_and_replays() {
        let mut s = Session::start(header(9), set()).unwrap();
        let mut log = Vec::new();
        while !s.is_complete() {
            let evs = s.act_events(1, 2, None, None).unwrap();
            commit(&mut s, evs, &mut log);
            let evs = s.finish_events().unwrap();
            commit(&mut s, evs, &mut log);
            let f = s.finish_outcome().unwrap();
            assert_eq!(f.complete, s.is_complete());
            assert_eq!(f.score.total, s.total());
        }
        assert!(matches!(s.act_events(0, 1, None, None), Err(ServiceError::WrongPhase)));
        assert!(matches!(s.finish_events(), Err(ServiceError::WrongPhase)));
        let max = s.finish_outcome().unwrap().max_total.unwrap();
        assert!(s.total() <= max);

        let r = Session::replay(header(9), set(), &log).unwrap();
        assert_eq!(r.scores(), s.scores());
        assert_eq!(r.transcripts(), s.transcripts());
    }

    #[test]
    fn tampered_logs_are_rejected() {
        let mut s = Session::start(header(1), set()).unwrap();
        let mut log = Vec::new();
        let evs = s.act_events(0, 1, None, None).unwrap();
        commit(&mut s, evs, &mut log);
        let evs = s.finish_events().unwrap();
        commit(&mut s, evs, &mut log);

        let mut bad = log.clone();
        if let EventKind::TrialScored { total, .. } = &mut bad.last_mut().unwrap().kind {
            *total += 1;
        }
        assert!(matches!(Session::replay(header(1), set(), &bad), Err(ServiceError::Corrupt(_))));

        let mut bad = log.clone();
        bad[2].kind = EventKind::GlueRemoved { a: 0, b: 1, delta: -1 };
        assert!(Session::replay(header(1), set(), &bad).is_err());

        let mut bad = log.clone();
        bad.swap(0, 1);
        assert!(Session::replay(header(1), set(), &bad).is_err());
    }
}
