//! Directional trust matrix with an append-only change history.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::audit::TrustCause;
use crate::model::{pattern_matches, RobotId, TrustScope};
use crate::time::SimTime;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TrustKey {
    pub truster: RobotId,
    pub trustee: RobotId,
    pub pattern: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustChange {
    pub at: SimTime,
    pub key: TrustKey,
    pub from: TrustScope,
    pub to: TrustScope,
    pub cause: TrustCause,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrustEntry {
    pub scope: TrustScope,
    #[serde(default)]
    pub consecutive_failures: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrustMatrix {
    #[serde(with = "entry_list")]
    pub entries: BTreeMap<TrustKey, TrustEntry>,
    #[serde(default)]
    pub history: Vec<TrustChange>,
}

mod entry_list {
    use super::*;
    use serde::{Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Row {
        truster: RobotId,
        trustee: RobotId,
        pattern: String,
        scope: TrustScope,
        #[serde(default)]
        consecutive_failures: u32,
    }

    pub fn serialize<S: Serializer>(m: &BTreeMap<TrustKey, TrustEntry>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Row> = m
            .iter()
            .map(|(k, v)| Row {
                truster: k.truster.clone(),
                trustee: k.trustee.clone(),
                pattern: k.pattern.clone(),
                scope: v.scope,
                consecutive_failures: v.consecutive_failures,
            })
            .collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<BTreeMap<TrustKey, TrustEntry>, D::Error> {
        let rows = Vec::<Row>::deserialize(d)?;
        Ok(rows
            .into_iter()
            .map(|r| {
                (
                    TrustKey {
                        truster: r.truster,
                        trustee: r.trustee,
                        pattern: r.pattern,
                    },
                    TrustEntry {
                        scope: r.scope,
                        consecutive_failures: r.consecutive_failures,
                    },
                )
            })
            .collect())
    }
}

impl TrustMatrix {
    pub fn new() -> Self {
        TrustMatrix::default()
    }

    pub fn set(&mut self, truster: &RobotId, trustee: &RobotId, pattern: &str, scope: TrustScope, at: SimTime) {
        self.apply(
            TrustKey {
                truster: truster.clone(),
                trustee: trustee.clone(),
                pattern: pattern.to_string(),
            },
            scope,
            TrustCause::Initial,
            at,
        );
    }

    pub fn set_symmetric(&mut self, a: &RobotId, b: &RobotId, pattern: &str, scope: TrustScope) {
        self.set(a, b, pattern, scope, SimTime::ZERO);
        self.set(b, a, pattern, scope, SimTime::ZERO);
    }

    /// Effective scope of `truster` toward `trustee` for a capability; absent means none.
    pub fn scope(&self, truster: &RobotId, trustee: &RobotId, capability: &str) -> TrustScope {
        self.entries
            .range(
                TrustKey {
                    truster: truster.clone(),
                    trustee: trustee.clone(),
                    pattern: String::new(),
                }..,
            )
            .take_while(|(k, _)| &k.truster == truster && &k.trustee == trustee)
            .filter(|(k, _)| pattern_matches(&k.pattern, capability))
            .map(|(_, v)| v.scope)
            .max()
            .unwrap_or(TrustScope::None)
    }

    pub fn edges(&self) -> impl Iterator<Item = (&TrustKey, &TrustEntry)> {
        self.entries.iter()
    }

    fn apply(&mut self, key: TrustKey, to: TrustScope, cause: TrustCause, at: SimTime) -> TrustChange {
        let entry = self.entries.entry(key.clone()).or_default();
        let from = entry.scope;
        entry.scope = to;
        entry.consecutive_failures = 0;
        let change = TrustChange {
            at,
            key,
            from,
            to,
            cause,
        };
        self.history.push(change.clone());
        change
    }

    fn matching_keys(&self, truster: &RobotId, trustee: &RobotId, capability: &str) -> Vec<TrustKey> {
        self.entries
            .keys()
            .filter(|k| &k.truster == truster && &k.trustee == trustee && pattern_matches(&k.pattern, capability))
            .cloned()
            .collect()
    }

    /// Records an execution failure on the edge. Two consecutive failures lower it one level.
    pub fn record_failure(
        &mut self,
        truster: &RobotId,
        trustee: &RobotId,
        capability: &str,
        at: SimTime,
    ) -> Vec<TrustChange> {
        let mut changes = Vec::new();
        for key in self.matching_keys(truster, trustee, capability) {
            let entry = self.entries.get_mut(&key).expect("key exists");
            entry.consecutive_failures += 1;
            if entry.consecutive_failures >= 2 && entry.scope != TrustScope::None {
                let to = entry.scope.lowered();
                changes.push(self.apply(key, to, TrustCause::DowngradeFailure, at));
            }
        }
        changes
    }

    pub fn record_success(&mut self, truster: &RobotId, trustee: &RobotId, capability: &str) {
        for key in self.matching_keys(truster, trustee, capability) {
            if let Some(e) = self.entries.get_mut(&key) {
                e.consecutive_failures = 0;
            }
        }
    }

    /// A single policy violation lowers every edge from `truster` toward `trustee` by one level.
    pub fn record_violation(&mut self, truster: &RobotId, trustee: &RobotId, at: SimTime) -> Vec<TrustChange> {
        let keys: Vec<TrustKey> = self
            .entries
            .keys()
            .filter(|k| &k.truster == truster && &k.trustee == trustee)
            .cloned()
            .collect();
        let mut changes = Vec::new();
        for k in keys {
            let scope = self.entries[&k].scope;
            if scope != TrustScope::None {
                changes.push(self.apply(k, scope.lowered(), TrustCause::DowngradeViolation, at));
            }
        }
        changes
    }

    pub fn promote(&mut self, truster: &RobotId, trustee: &RobotId, pattern: &str, to: TrustScope, at: SimTime) -> TrustChange {
        let key = TrustKey {
            truster: truster.clone(),
            trustee: trustee.clone(),
            pattern: pattern.to_string(),
        };
        self.apply(key, to, TrustCause::OperatorPromotion, at)
    }

    /// Removes the trustee's standing with the truster on every pattern.
    pub fn revoke(&mut self, truster: &RobotId, trustee: &RobotId, at: SimTime) -> Vec<TrustChange> {
        let keys: Vec<TrustKey> = self
            .entries
            .keys()
            .filter(|k| &k.truster == truster && &k.trustee == trustee)
            .cloned()
            .collect();
        if keys.is_empty() {
            let key = TrustKey {
                truster: truster.clone(),
                trustee: trustee.clone(),
                pattern: "*".into(),
            };
            return vec![self.apply(key, TrustScope::None, TrustCause::Revocation, at)];
        }
        keys.into_iter()
            .map(|k| self.apply(k, TrustScope::None, TrustCause::Revocation, at))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn id(s: &str) -> RobotId {
        RobotId::new(s)
    }

    #[test]
    fn absent_is_none_and_directional() {
        let mut m = TrustMatrix::new();
        m.set(&id("a"), &id("b"), "*", TrustScope::Task, SimTime::ZERO);
        assert_eq!(m.scope(&id("a"), &id("b"), "door.open.secure"), TrustScope::Task);
        assert_eq!(m.scope(&id("b"), &id("a"), "door.open.secure"), TrustScope::None);
        assert_eq!(m.scope(&id("a"), &id("c"), "anything"), TrustScope::None);
    }

    #[test]
    fn pattern_scoped_entries() {
        let mut m = TrustMatrix::new();
        m.set(&id("a"), &id("b"), "door.*", TrustScope::Session, SimTime::ZERO);
        m.set(&id("a"), &id("b"), "*", TrustScope::Capability, SimTime::ZERO);
        assert_eq!(m.scope(&id("a"), &id("b"), "door.open.basic"), TrustScope::Session);
        assert_eq!(m.scope(&id("a"), &id("b"), "navigate.indoor"), TrustScope::Capability);
    }

    #[test]
    fn two_consecutive_failures_downgrade() {
        let mut m = TrustMatrix::new();
        m.set(&id("a"), &id("b"), "*", TrustScope::Task, SimTime::ZERO);
        assert!(m.record_failure(&id("a"), &id("b"), "x", SimTime(1)).is_empty());
        m.record_success(&id("a"), &id("b"), "x");
        assert!(m.record_failure(&id("a"), &id("b"), "x", SimTime(2)).is_empty());
        let ch = m.record_failure(&id("a"), &id("b"), "x", SimTime(3));
        assert_eq!(ch.len(), 1);
        assert_eq!(ch[0].cause, TrustCause::DowngradeFailure);
        assert_eq!(m.scope(&id("a"), &id("b"), "x"), TrustScope::Capability);
    }

    #[test]
    fn violation_downgrades_once_and_history_is_append_only() {
        let mut m = TrustMatrix::new();
        m.set(&id("a"), &id("b"), "*", TrustScope::Session, SimTime::ZERO);
        let before = m.history.clone();
        m.record_violation(&id("a"), &id("b"), SimTime(5));
        assert_eq!(m.scope(&id("a"), &id("b"), "x"), TrustScope::Task);
        assert_eq!(&m.history[..before.len()], &before[..]);
        assert_eq!(m.history.len(), before.len() + 1);
    }

    #[test]
    fn revoke_sets_none() {
        let mut m = TrustMatrix::new();
        m.set(&id("a"), &id("b"), "*", TrustScope::Persistent, SimTime::ZERO);
        m.revoke(&id("a"), &id("b"), SimTime(1));
        assert_eq!(m.scope(&id("a"), &id("b"), "x"), TrustScope::None);
        assert_eq!(m.history.last().unwrap().cause, TrustCause::Revocation);
    }

    #[test]
    fn serde_round_trip() {
        let mut m = TrustMatrix::new();
        m.set_symmetric(&id("a"), &id("b"), "*", TrustScope::Task);
        let s = serde_json::to_string(&m).unwrap();
        let back: TrustMatrix = serde_json::from_str(&s).unwrap();
        assert_eq!(back, m);
    }
}
