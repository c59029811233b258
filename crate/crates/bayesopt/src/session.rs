//! Session documents and the live sessions rebuilt from them.
//!
//! A document holds the configuration and an append-only history. State is
//! never stored: loading a document replays its history through the core
//! state machines, so a reloaded session proposes exactly what the original
//! would have.

use std::time::{SystemTime, UNIX_EPOCH};

use bayesopt_core::{
    AcquisitionKind, Bounds, Incumbent, KernelSpec, OptimizerConfig, PairStrategy,
    PreferenceConfig, PreferenceLoop, ScalarOptimizer,
};
use serde::{Deserialize, Serialize};

use crate::error::{on_field, Result, SessionError};

pub const SCHEMA_VERSION: u32 = 1;

/// Two items shown together; the first is the incumbent once one exists.
pub type Pair = (Vec<f64>, Vec<f64>);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Scalar,
    Preference,
}

impl Mode {
    fn name(self) -> &'static str {
        match self {
            Mode::Scalar => "scalar",
            Mode::Preference => "preference",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferenceSessionConfig {
    pub model: PreferenceConfig,
    pub strategy: PairStrategy,
    pub rng_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SessionConfig {
    Scalar(OptimizerConfig),
    Preference(PreferenceSessionConfig),
}

impl SessionConfig {
    pub fn mode(&self) -> Mode {
        match self {
            SessionConfig::Scalar(_) => Mode::Scalar,
            SessionConfig::Preference(_) => Mode::Preference,
        }
    }

    pub fn bounds(&self) -> &Bounds {
        match self {
            SessionConfig::Scalar(c) => &c.bounds,
            SessionConfig::Preference(c) => &c.model.bounds,
        }
    }
}

/// Client-facing creation request. Everything but `mode` and `bounds` has a
/// default; fields that belong to the other mode are rejected.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CreateSession {
    pub mode: Option<Mode>,
    pub bounds: Vec<(f64, f64)>,
    #[serde(default)]
    pub kernel: Option<KernelSpec>,
    #[serde(default)]
    pub acquisition: Option<AcquisitionKind>,
    #[serde(default)]
    pub xi: Option<f64>,
    #[serde(default)]
    pub refit_period: Option<usize>,
    #[serde(default)]
    pub noisy: Option<bool>,
    #[serde(default)]
    pub strategy: Option<PairStrategy>,
    #[serde(default)]
    pub sigma_noise: Option<f64>,
    #[serde(default)]
    pub min_separation: Option<f64>,
    #[serde(default)]
    pub candidates: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub rng_seed: Option<u64>,
}

impl CreateSession {
    pub fn into_config(self) -> Result<SessionConfig> {
        let mode = self
            .mode
            .ok_or_else(|| SessionError::validation("mode", "required"))?;
        if self.bounds.is_empty() {
            return Err(SessionError::validation(
                "bounds",
                "at least one dimension is required",
            ));
        }
        for (i, (lo, hi)) in self.bounds.iter().enumerate() {
            if !lo.is_finite() || !hi.is_finite() || !(lo < hi) {
                return Err(SessionError::validation(
                    format!("bounds[{i}]"),
                    format!("lower bound {lo} must be finite and below upper bound {hi}"),
                ));
            }
        }
        let bounds = Bounds::new(self.bounds.clone()).map_err(on_field("bounds"))?;
        if let Some(k) = &self.kernel {
            k.validate().map_err(on_field("kernel"))?;
            k.check_dim(bounds.dim())
                .map_err(on_field("kernel.theta"))?;
        }
        if let Some(xi) = self.xi {
            if !(xi >= 0.0) || !xi.is_finite() {
                return Err(SessionError::validation(
                    "xi",
                    "must be finite and nonnegative",
                ));
            }
        }

        let foreign = |field: &str, present: bool| -> Result<()> {
            if present {
                return Err(SessionError::validation(
                    field,
                    format!("not used by {} sessions", mode.name()),
                ));
            }
            Ok(())
        };
        match mode {
            Mode::Scalar => {
                foreign("strategy", self.strategy.is_some())?;
                foreign("sigma_noise", self.sigma_noise.is_some())?;
                foreign("min_separation", self.min_separation.is_some())?;
                foreign("candidates", self.candidates.is_some())?;
                let kind = self
                    .acquisition
                    .unwrap_or(AcquisitionKind::ExpectedImprovement);
                let mut config = OptimizerConfig::new(bounds, kind);
                if let Some(k) = self.kernel {
                    config.kernel = k;
                }
                config.acquisition.xi = self.xi;
                if let Some(p) = self.refit_period {
                    config.refit_period = p;
                }
                config.noisy = self.noisy.unwrap_or(false);
                config.rng_seed = self.rng_seed.unwrap_or(0);
                config.validate().map_err(on_field("config"))?;
                Ok(SessionConfig::Scalar(config))
            }
            Mode::Preference => {
                foreign("acquisition", self.acquisition.is_some())?;
                foreign("refit_period", self.refit_period.is_some())?;
                foreign("noisy", self.noisy.is_some())?;
                let mut model = PreferenceConfig::new(bounds);
                if let Some(k) = self.kernel {
                    model.kernel = k;
                }
                if let Some(s) = self.sigma_noise {
                    if !(s > 0.0) || !s.is_finite() {
                        return Err(SessionError::validation("sigma_noise", "must be positive"));
                    }
                    model.sigma_noise = Some(s);
                }
                model.xi = self.xi;
                if let Some(m) = self.min_separation {
                    if !(0.0..1.0).contains(&m) {
                        return Err(SessionError::validation(
                            "min_separation",
                            "must lie in [0, 1)",
                        ));
                    }
                    model.min_separation = m;
                }
                if let Some(c) = &self.candidates {
                    if c.len() < 2 {
                        return Err(SessionError::validation(
                            "candidates",
                            "a gallery needs at least two items",
                        ));
                    }
                    for (i, x) in c.iter().enumerate() {
                        if x.len() != model.bounds.dim() || !model.bounds.contains(x) {
                            return Err(SessionError::validation(
                                format!("candidates[{i}]"),
                                "must lie inside the bounds",
                            ));
                        }
                    }
                }
                model.candidates = self.candidates;
                model.validate().map_err(on_field("config"))?;
                Ok(SessionConfig::Preference(PreferenceSessionConfig {
                    model,
                    strategy: self.strategy.unwrap_or(PairStrategy::MaxEi),
                    rng_seed: self.rng_seed.unwrap_or(0),
                }))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Event {
    Observation {
        x: Vec<f64>,
        y: f64,
    },
    /// A pair was shown; it stays outstanding until a preference arrives.
    PairServed {
        first: Vec<f64>,
        second: Vec<f64>,
    },
    Preference {
        winner: Vec<f64>,
        loser: Vec<f64>,
        winner_index: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryEntry {
    pub seq: u64,
    pub timestamp_ms: u64,
    /// Client idempotency token of the request that wrote this entry.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token: Option<String>,
    pub event: Event,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionDocument {
    pub schema_version: u32,
    pub id: String,
    pub created_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub create_token: Option<String>,
    pub config: SessionConfig,
    pub history: Vec<HistoryEntry>,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

#[derive(Debug, Clone)]
enum State {
    Scalar(ScalarOptimizer),
    Preference {
        lp: PreferenceLoop,
        pending: Option<Pair>,
    },
}

#[derive(Debug, Clone)]
pub struct Session {
    doc: SessionDocument,
    state: State,
}

impl Session {
    pub fn create(id: String, config: SessionConfig, create_token: Option<String>) -> Result<Self> {
        Self::from_document(SessionDocument {
            schema_version: SCHEMA_VERSION,
            id,
            created_ms: now_ms(),
            create_token,
            config,
            history: Vec::new(),
        })
    }

    /// Rebuilds the live state by replaying the history.
    pub fn from_document(doc: SessionDocument) -> Result<Self> {
        if doc.schema_version != SCHEMA_VERSION {
            return Err(SessionError::Schema(doc.schema_version));
        }
        let mut state = match &doc.config {
            SessionConfig::Scalar(c) => State::Scalar(ScalarOptimizer::new(c.clone())?),
            SessionConfig::Preference(c) => State::Preference {
                lp: PreferenceLoop::new(c.model.clone())?,
                pending: None,
            },
        };
        for (i, entry) in doc.history.iter().enumerate() {
            let corrupt =
                || SessionError::Corrupt(format!("history[{i}] does not match the session mode"));
            match (&mut state, &entry.event) {
                (State::Scalar(opt), Event::Observation { x, y }) => opt.observe(x.clone(), *y)?,
                (State::Preference { pending, .. }, Event::PairServed { first, second }) => {
                    *pending = Some((first.clone(), second.clone()));
                }
                (State::Preference { lp, pending }, Event::Preference { winner, loser, .. }) => {
                    lp.record_preference(winner.clone(), loser.clone())?;
                    *pending = None;
                }
                _ => return Err(corrupt()),
            }
        }
        Ok(Session { doc, state })
    }

    pub fn document(&self) -> &SessionDocument {
        &self.doc
    }

    pub fn id(&self) -> &str {
        &self.doc.id
    }

    pub fn mode(&self) -> Mode {
        self.doc.config.mode()
    }

    pub fn bounds(&self) -> &Bounds {
        self.doc.config.bounds()
    }

    /// Completed observations or recorded preferences.
    pub fn iteration(&self) -> usize {
        match &self.state {
            State::Scalar(opt) => opt.iteration(),
            State::Preference { lp, .. } => lp.iteration(),
        }
    }

    pub fn has_token(&self, token: &str) -> bool {
        self.doc
            .history
            .iter()
            .any(|e| e.token.as_deref() == Some(token))
    }

    fn append(&mut self, token: Option<String>, event: Event) {
        self.doc.history.push(HistoryEntry {
            seq: self.doc.history.len() as u64,
            timestamp_ms: now_ms(),
            token,
            event,
        });
    }

    pub fn scalar(&self) -> Result<&ScalarOptimizer> {
        match &self.state {
            State::Scalar(opt) => Ok(opt),
            _ => Err(SessionError::WrongMode { expected: "scalar" }),
        }
    }

    pub fn preference(&self) -> Result<&PreferenceLoop> {
        match &self.state {
            State::Preference { lp, .. } => Ok(lp),
            _ => Err(SessionError::WrongMode {
                expected: "preference",
            }),
        }
    }

    /// Next point to evaluate. Read-only.
    pub fn propose(&self) -> Result<Vec<f64>> {
        Ok(self.scalar()?.propose()?)
    }

    /// Records `y = f(x)`. Returns `false` when `token` was already used, in
    /// which case nothing changes.
    pub fn observe(&mut self, x: Vec<f64>, y: f64, token: Option<String>) -> Result<bool> {
        let State::Scalar(opt) = &mut self.state else {
            return Err(SessionError::WrongMode { expected: "scalar" });
        };
        if token.as_deref().is_some_and(|t| {
            self.doc
                .history
                .iter()
                .any(|e| e.token.as_deref() == Some(t))
        }) {
            return Ok(false);
        }
        if !y.is_finite() {
            return Err(SessionError::validation("y", "must be finite"));
        }
        if x.len() != opt.config().bounds.dim() || !opt.config().bounds.contains(&x) {
            return Err(SessionError::validation("x", "must lie inside the bounds"));
        }
        // Work on a copy so a failed refit leaves the session untouched.
        let mut next = opt.clone();
        next.observe(x.clone(), y)?;
        *opt = next;
        self.append(token, Event::Observation { x, y });
        Ok(true)
    }

    /// The outstanding pair, choosing and logging a new one if none is.
    /// The flag is `true` when the history grew.
    pub fn pair(&mut self) -> Result<(Pair, bool)> {
        let (strategy, seed) = match &self.doc.config {
            SessionConfig::Preference(c) => (c.strategy, c.rng_seed),
            SessionConfig::Scalar(_) => {
                return Err(SessionError::WrongMode {
                    expected: "preference",
                })
            }
        };
        let State::Preference { lp, pending } = &mut self.state else {
            unreachable!("config and state modes agree");
        };
        if let Some(p) = pending {
            return Ok((p.clone(), false));
        }
        let pair_seed = seed ^ (lp.iteration() as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
        let pair = lp.select_pair(strategy, pair_seed)?;
        *pending = Some(pair.clone());
        self.append(
            None,
            Event::PairServed {
                first: pair.0.clone(),
                second: pair.1.clone(),
            },
        );
        Ok((pair, true))
    }

    pub fn pending_pair(&self) -> Option<&Pair> {
        match &self.state {
            State::Preference { pending, .. } => pending.as_ref(),
            State::Scalar(_) => None,
        }
    }

    /// Records the user's choice on the outstanding pair. Returns `false`
    /// for a replayed token.
    pub fn prefer(&mut self, winner_index: usize, token: Option<String>) -> Result<bool> {
        if self.mode() != Mode::Preference {
            return Err(SessionError::WrongMode {
                expected: "preference",
            });
        }
        if token.as_deref().is_some_and(|t| self.has_token(t)) {
            return Ok(false);
        }
        if winner_index > 1 {
            return Err(SessionError::validation("winner_index", "must be 0 or 1"));
        }
        let State::Preference { lp, pending } = &mut self.state else {
            unreachable!("mode checked above");
        };
        let Some((first, second)) = pending.clone() else {
            return Err(SessionError::Conflict(
                "no outstanding pair; fetch one first".into(),
            ));
        };
        let (winner, loser) = if winner_index == 0 {
            (first, second)
        } else {
            (second, first)
        };
        let mut next = lp.clone();
        next.record_preference(winner.clone(), loser.clone())?;
        *lp = next;
        *pending = None;
        self.append(
            token,
            Event::Preference {
                winner,
                loser,
                winner_index,
            },
        );
        Ok(true)
    }

    /// Best point so far; `None` before any data.
    pub fn incumbent(&self) -> Result<Option<Incumbent>> {
        Ok(match &self.state {
            State::Scalar(opt) if opt.iteration() == 0 => None,
            State::Scalar(opt) => Some(opt.best()?),
            State::Preference { lp, .. } => lp.incumbent(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn preference_request() -> CreateSession {
        CreateSession {
            mode: Some(Mode::Preference),
            bounds: vec![(0.0, 1.0)],
            ..Default::default()
        }
    }

    #[test]
    fn bad_bounds_name_the_dimension() {
        let req = CreateSession {
            bounds: vec![(0.0, 1.0), (2.0, 2.0)],
            ..preference_request()
        };
        match req.into_config() {
            Err(SessionError::Validation { field, .. }) => assert_eq!(field, "bounds[1]"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn foreign_fields_are_rejected() {
        let req = CreateSession {
            acquisition: Some(AcquisitionKind::UpperConfidenceBound),
            ..preference_request()
        };
        assert!(
            matches!(req.into_config(), Err(SessionError::Validation { field, .. }) if field == "acquisition")
        );
    }

    #[test]
    fn pair_is_stable_until_answered() {
        let config = preference_request().into_config().unwrap();
        let mut s = Session::create("a".into(), config, None).unwrap();
        let (p1, grew) = s.pair().unwrap();
        assert!(grew);
        let (p2, grew) = s.pair().unwrap();
        assert!(!grew);
        assert_eq!(p1, p2);
        assert_eq!(p1, (vec![1.0 / 3.0], vec![2.0 / 3.0]));
        assert!(s.prefer(0, Some("t1".into())).unwrap());
        assert!(!s.prefer(0, Some("t1".into())).unwrap());
        assert_eq!(s.iteration(), 1);
        let (p3, _) = s.pair().unwrap();
        assert_eq!(p3.0, s.incumbent().unwrap().unwrap().location);
    }

    #[test]
    fn preference_without_pair_conflicts() {
        let config = preference_request().into_config().unwrap();
        let mut s = Session::create("a".into(), config, None).unwrap();
        assert!(matches!(s.prefer(0, None), Err(SessionError::Conflict(_))));
        s.pair().unwrap();
        assert!(matches!(
            s.prefer(2, None),
            Err(SessionError::Validation { .. })
        ));
    }

    #[test]
    fn mode_mismatch() {
        let config = preference_request().into_config().unwrap();
        let mut s = Session::create("a".into(), config, None).unwrap();
        assert!(matches!(s.propose(), Err(SessionError::WrongMode { .. })));
        assert!(matches!(
            s.observe(vec![0.5], 1.0, None),
            Err(SessionError::WrongMode { .. })
        ));
    }

    #[test]
    fn scalar_observe_validates() {
        let req = CreateSession {
            mode: Some(Mode::Scalar),
            bounds: vec![(0.0, 1.0)],
            ..Default::default()
        };
        let mut s = Session::create("s".into(), req.into_config().unwrap(), None).unwrap();
        assert!(
            matches!(s.observe(vec![2.0], 1.0, None), Err(SessionError::Validation { field, .. }) if field == "x")
        );
        assert!(
            matches!(s.observe(vec![0.5], f64::NAN, None), Err(SessionError::Validation { field, .. }) if field == "y")
        );
        assert!(s.observe(vec![0.5], 1.0, Some("k".into())).unwrap());
        assert!(!s.observe(vec![0.6], 2.0, Some("k".into())).unwrap());
        assert_eq!(s.iteration(), 1);
    }

    #[test]
    fn replay_rebuilds_state() {
        let config = preference_request().into_config().unwrap();
        let mut s = Session::create("a".into(), config, None).unwrap();
        for i in 0..4 {
            s.pair().unwrap();
            s.prefer(i % 2, None).unwrap();
        }
        s.pair().unwrap();
        let text = serde_json::to_string(s.document()).unwrap();
        let back = Session::from_document(serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back.document(), s.document());
        assert_eq!(back.pending_pair(), s.pending_pair());
        let (a, b) = (s.preference().unwrap(), back.preference().unwrap());
        assert_eq!(
            a.model().unwrap().laplace().f_map,
            b.model().unwrap().laplace().f_map
        );
    }

    #[test]
    fn rejects_other_schema_versions() {
        let config = preference_request().into_config().unwrap();
        let s = Session::create("a".into(), config, None).unwrap();
        let mut doc = s.document().clone();
        doc.schema_version = 2;
        assert!(matches!(
            Session::from_document(doc),
            Err(SessionError::Schema(2))
        ));
    }
}
