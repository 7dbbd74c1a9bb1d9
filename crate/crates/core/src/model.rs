//! Domain types and total functions of the coordination model: trust
//! ordering, authority tuples, policy composition, recovery levels and
//! delegation chains.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::SimTime;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RobotId(pub String);

impl RobotId {
    pub fn new(name: impl Into<String>) -> Self {
        RobotId(name.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for RobotId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for RobotId {
    fn from(s: &str) -> Self {
        RobotId(s.to_string())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Version {
    pub major: u32,
    pub minor: u32,
    pub patch: u32,
}

impl Version {
    pub const fn new(major: u32, minor: u32, patch: u32) -> Self {
        Version { major, minor, patch }
    }
}

impl Default for Version {
    fn default() -> Self {
        Version::new(1, 0, 0)
    }
}

/// Uniform execution-duration interval in seconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DurationModel {
    pub min: f64,
    pub max: f64,
}

impl DurationModel {
    pub fn new(min: f64, max: f64) -> Result<Self, ModelError> {
        if !(min >= 0.0 && max >= min && max.is_finite()) {
            return Err(ModelError::InvalidDuration { min, max });
        }
        Ok(DurationModel { min, max })
    }

    pub fn midpoint(&self) -> f64 {
        (self.min + self.max) / 2.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcmContract {
    #[serde(default)]
    pub preconditions: BTreeSet<String>,
    #[serde(default)]
    pub postconditions: BTreeSet<String>,
    #[serde(default)]
    pub resource_requirements: BTreeMap<String, f64>,
    pub duration_model: DurationModel,
}

impl EcmContract {
    pub fn with_duration(min: f64, max: f64) -> Self {
        EcmContract {
            preconditions: BTreeSet::new(),
            postconditions: BTreeSet::new(),
            resource_requirements: BTreeMap::new(),
            duration_model: DurationModel { min, max },
        }
    }

    /// Preconditions are named context tags that must be present.
    pub fn preconditions_hold(&self, ctx: &TaskContext) -> bool {
        self.preconditions.iter().all(|p| ctx.scope_tags.contains(p))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EcmDescriptor {
    pub capability_name: String,
    #[serde(default)]
    pub version: Version,
    pub contract: EcmContract,
}

impl EcmDescriptor {
    pub fn new(name: impl Into<String>, contract: EcmContract) -> Result<Self, ModelError> {
        let capability_name = name.into();
        if capability_name.is_empty() {
            return Err(ModelError::EmptyCapabilityName);
        }
        DurationModel::new(contract.duration_model.min, contract.duration_model.max)?;
        Ok(EcmDescriptor {
            capability_name,
            version: Version::default(),
            contract,
        })
    }

    /// Family pattern used for substitute search, e.g. `grasp.robust` -> `grasp.*`.
    pub fn family_pattern(&self) -> String {
        match self.capability_name.split_once('.') {
            Some((head, _)) => format!("{head}.*"),
            None => self.capability_name.clone(),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrustScope {
    #[default]
    None,
    Capability,
    Task,
    Session,
    Persistent,
}

impl TrustScope {
    pub const ALL: [TrustScope; 5] = [
        TrustScope::None,
        TrustScope::Capability,
        TrustScope::Task,
        TrustScope::Session,
        TrustScope::Persistent,
    ];

    /// One level lower, saturating at `none`.
    pub fn lowered(self) -> TrustScope {
        match self {
            TrustScope::None | TrustScope::Capability => TrustScope::None,
            TrustScope::Task => TrustScope::Capability,
            TrustScope::Session => TrustScope::Task,
            TrustScope::Persistent => TrustScope::Session,
        }
    }
}

pub fn trust_sufficient(granted: TrustScope, required: TrustScope) -> bool {
    required != TrustScope::None && granted >= required
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverrideLevel {
    None,
    SoftPriority,
    HardPreempt,
    EmergencyOnly,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AuditLevel {
    Local,
    Fleet,
    HumanVisible,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AuthorityTuple {
    pub a_req: bool,
    pub a_exec: bool,
    pub a_ovr: OverrideLevel,
    pub a_audit: AuditLevel,
}

impl AuthorityTuple {
    pub const fn denied() -> Self {
        AuthorityTuple {
            a_req: false,
            a_exec: false,
            a_ovr: OverrideLevel::None,
            a_audit: AuditLevel::Fleet,
        }
    }
}

/// Ordered so that the lattice meet is `min`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolicyOutcome {
    Deny,
    Review,
    Allow,
}

impl PolicyOutcome {
    pub const ALL: [PolicyOutcome; 3] = [PolicyOutcome::Deny, PolicyOutcome::Review, PolicyOutcome::Allow];

    pub fn meet(self, other: PolicyOutcome) -> PolicyOutcome {
        self.min(other)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "type", content = "value")]
pub enum ContextPredicate {
    Always,
    HasTag(String),
    LacksTag(String),
    PriorityAtLeast(i64),
}

impl ContextPredicate {
    pub fn holds(&self, ctx: &TaskContext) -> bool {
        match self {
            ContextPredicate::Always => true,
            ContextPredicate::HasTag(t) => ctx.scope_tags.contains(t),
            ContextPredicate::LacksTag(t) => !ctx.scope_tags.contains(t),
            ContextPredicate::PriorityAtLeast(p) => ctx.priority >= *p,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyRule {
    pub pattern: String,
    #[serde(default = "always")]
    pub when: ContextPredicate,
    pub outcome: PolicyOutcome,
}

fn always() -> ContextPredicate {
    ContextPredicate::Always
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PolicyScope {
    #[serde(default)]
    pub rules: Vec<PolicyRule>,
    pub default_outcome: PolicyOutcome,
}

impl Default for PolicyScope {
    fn default() -> Self {
        PolicyScope::allow_all()
    }
}

impl PolicyScope {
    pub fn allow_all() -> Self {
        PolicyScope {
            rules: Vec::new(),
            default_outcome: PolicyOutcome::Allow,
        }
    }

    pub fn with_rule(mut self, pattern: &str, when: ContextPredicate, outcome: PolicyOutcome) -> Self {
        self.rules.push(PolicyRule {
            pattern: pattern.to_string(),
            when,
            outcome,
        });
        self
    }

    pub fn evaluate(&self, ecm: &EcmDescriptor, ctx: &TaskContext) -> PolicyOutcome {
        self.rules
            .iter()
            .find(|r| pattern_matches(&r.pattern, &ecm.capability_name) && r.when.holds(ctx))
            .map(|r| r.outcome)
            .unwrap_or(self.default_outcome)
    }
}

/// Glob match of a capability pattern such as `door.*` against a dotted name.
pub fn pattern_matches(pattern: &str, name: &str) -> bool {
    match glob::Pattern::new(pattern) {
        Ok(p) => p.matches(name),
        Err(_) => pattern == name,
    }
}

pub fn compose_policy(
    requester_policy: &PolicyScope,
    executor_policy: &PolicyScope,
    ecm: &EcmDescriptor,
    ctx: &TaskContext,
) -> PolicyOutcome {
    compose_outcomes(requester_policy.evaluate(ecm, ctx), executor_policy.evaluate(ecm, ctx))
}

pub fn compose_outcomes(a: PolicyOutcome, b: PolicyOutcome) -> PolicyOutcome {
    a.meet(b)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecoveryLevel {
    Local,
    Peer,
    Fleet,
    Human,
}

impl RecoveryLevel {
    pub const ALL: [RecoveryLevel; 4] = [
        RecoveryLevel::Local,
        RecoveryLevel::Peer,
        RecoveryLevel::Fleet,
        RecoveryLevel::Human,
    ];

    pub fn rank(self) -> u8 {
        self as u8
    }
}

pub fn escalate_recovery_level(current: RecoveryLevel) -> Result<RecoveryLevel, ModelError> {
    match current {
        RecoveryLevel::Local => Ok(RecoveryLevel::Peer),
        RecoveryLevel::Peer => Ok(RecoveryLevel::Fleet),
        RecoveryLevel::Fleet => Ok(RecoveryLevel::Human),
        RecoveryLevel::Human => Err(ModelError::Unrecoverable),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecoveryBudget {
    pub t_max: f64,
    pub n_max: u32,
}

impl RecoveryBudget {
    pub fn new(t_max: f64, n_max: u32) -> Result<Self, ModelError> {
        if !(t_max > 0.0) {
            return Err(ModelError::InvalidBudget(t_max));
        }
        Ok(RecoveryBudget { t_max, n_max })
    }
}

impl Default for RecoveryBudget {
    fn default() -> Self {
        RecoveryBudget { t_max: 30.0, n_max: 2 }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct TaskContext {
    pub task_id: String,
    #[serde(default)]
    pub scope_tags: BTreeSet<String>,
    #[serde(default)]
    pub priority: i64,
    #[serde(default)]
    pub deadline: Option<SimTime>,
}

impl TaskContext {
    pub fn new(task_id: impl Into<String>) -> Self {
        TaskContext {
            task_id: task_id.into(),
            scope_tags: BTreeSet::new(),
            priority: 0,
            deadline: None,
        }
    }

    pub fn with_tag(mut self, tag: &str) -> Self {
        self.scope_tags.insert(tag.to_string());
        self
    }

    pub fn with_priority(mut self, priority: i64) -> Self {
        self.priority = priority;
        self
    }

    pub fn with_deadline(mut self, deadline: SimTime) -> Self {
        self.deadline = Some(deadline);
        self
    }

    pub fn is_emergency(&self) -> bool {
        self.scope_tags.contains("emergency")
    }
}

/// Identifier of a request: (task, requester, executor, capability, issue time).
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct RequestId {
    pub task_id: String,
    pub requester: RobotId,
    pub executor: RobotId,
    pub ecm: String,
    pub issued_at: SimTime,
}

impl fmt::Display for RequestId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{}/{}->{}/{}@{}",
            self.task_id, self.requester, self.executor, self.ecm, self.issued_at.0
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapabilityRequest {
    pub requester: RobotId,
    pub executor: RobotId,
    pub ecm: EcmDescriptor,
    pub ctx: TaskContext,
    pub issued_at: SimTime,
    pub auth: AuthorityTuple,
    #[serde(default)]
    pub parent_link: Option<RequestId>,
}

impl CapabilityRequest {
    pub fn id(&self) -> RequestId {
        RequestId {
            task_id: self.ctx.task_id.clone(),
            requester: self.requester.clone(),
            executor: self.executor.clone(),
            ecm: self.ecm.capability_name.clone(),
            issued_at: self.issued_at,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DelegationChain {
    pub links: Vec<(CapabilityRequest, AuthorityTuple)>,
}

impl DelegationChain {
    pub fn new(links: Vec<(CapabilityRequest, AuthorityTuple)>) -> Result<Self, ModelError> {
        if links.is_empty() {
            return Err(ModelError::EmptyChain);
        }
        Ok(DelegationChain { links })
    }

    pub fn prefix(&self, len: usize) -> DelegationChain {
        DelegationChain {
            links: self.links[..len].to_vec(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChainVerdict {
    pub well_formed: bool,
    pub first_violation: Option<usize>,
}

/// Each link is judged on its own; nothing is inherited from earlier links.
pub fn chain_well_formed<F>(chain: &DelegationChain, mut admissible: F) -> ChainVerdict
where
    F: FnMut(&CapabilityRequest, &AuthorityTuple) -> bool,
{
    for (i, (req, auth)) in chain.links.iter().enumerate() {
        if !admissible(req, auth) {
            return ChainVerdict {
                well_formed: false,
                first_violation: Some(i),
            };
        }
    }
    ChainVerdict {
        well_formed: true,
        first_violation: None,
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error("recovery cannot escalate past the human level")]
    Unrecoverable,
    #[error("capability name must be non-empty")]
    EmptyCapabilityName,
    #[error("invalid duration model [{min}, {max}]")]
    InvalidDuration { min: f64, max: f64 },
    #[error("recovery budget t_max must be positive, got {0}")]
    InvalidBudget(f64),
    #[error("a delegation chain needs at least one link")]
    EmptyChain,
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ecm(name: &str) -> EcmDescriptor {
        EcmDescriptor::new(name, EcmContract::with_duration(1.0, 3.0)).unwrap()
    }

    #[test]
    fn trust_examples() {
        assert!(trust_sufficient(TrustScope::Task, TrustScope::Capability));
        assert!(!trust_sufficient(TrustScope::None, TrustScope::None));
        assert!(!trust_sufficient(TrustScope::Capability, TrustScope::Session));
    }

    #[test]
    fn trust_truth_table_counts() {
        let mut none_rows = 0;
        let mut below = 0;
        for g in TrustScope::ALL {
            for r in TrustScope::ALL {
                let ok = trust_sufficient(g, r);
                if r == TrustScope::None {
                    assert!(!ok);
                    none_rows += 1;
                } else if (g as u8) < (r as u8) {
                    assert!(!ok);
                    below += 1;
                } else {
                    assert!(ok);
                }
            }
        }
        assert_eq!(none_rows, 5);
        assert_eq!(below, 10);
    }

    #[test]
    fn policy_examples() {
        let allow = PolicyScope::allow_all();
        let deny = PolicyScope {
            rules: vec![],
            default_outcome: PolicyOutcome::Deny,
        };
        let review = allow.clone().with_rule("door.*", ContextPredicate::Always, PolicyOutcome::Review);
        let e = ecm("door.open.secure");
        let ctx = TaskContext::new("t");
        assert_eq!(compose_policy(&allow, &allow, &e, &ctx), PolicyOutcome::Allow);
        assert_eq!(compose_policy(&allow, &deny, &e, &ctx), PolicyOutcome::Deny);
        assert_eq!(compose_policy(&review, &allow, &e, &ctx), PolicyOutcome::Review);
    }

    #[test]
    fn first_matching_rule_wins() {
        let p = PolicyScope::allow_all()
            .with_rule("carry.*", ContextPredicate::HasTag("after_hours".into()), PolicyOutcome::Deny)
            .with_rule("carry.*", ContextPredicate::Always, PolicyOutcome::Review);
        let e = ecm("carry.package");
        assert_eq!(p.evaluate(&e, &TaskContext::new("t").with_tag("after_hours")), PolicyOutcome::Deny);
        assert_eq!(p.evaluate(&e, &TaskContext::new("t")), PolicyOutcome::Review);
        assert_eq!(p.evaluate(&ecm("door.open.basic"), &TaskContext::new("t")), PolicyOutcome::Allow);
    }

    #[test]
    fn glob_patterns() {
        assert!(pattern_matches("door.*", "door.open.secure"));
        assert!(pattern_matches("grasp.*", "grasp.robust"));
        assert!(!pattern_matches("grasp.*", "carry.heavy"));
        assert!(pattern_matches("inspect.private_zone", "inspect.private_zone"));
        assert!(pattern_matches("*", "navigate.indoor"));
    }

    #[test]
    fn escalation_examples() {
        assert_eq!(escalate_recovery_level(RecoveryLevel::Local), Ok(RecoveryLevel::Peer));
        assert_eq!(escalate_recovery_level(RecoveryLevel::Fleet), Ok(RecoveryLevel::Human));
        assert_eq!(escalate_recovery_level(RecoveryLevel::Human), Err(ModelError::Unrecoverable));
    }

    #[test]
    fn escalation_reaches_human_in_three_steps() {
        let mut level = RecoveryLevel::Local;
        let mut seen = vec![level];
        while let Ok(next) = escalate_recovery_level(level) {
            assert_eq!(next.rank(), level.rank() + 1);
            assert!(!seen.contains(&next));
            seen.push(next);
            level = next;
        }
        assert_eq!(seen.len() - 1, 3);
        assert_eq!(level, RecoveryLevel::Human);
    }

    #[test]
    fn invalid_constructions() {
        assert!(EcmDescriptor::new("", EcmContract::with_duration(0.0, 1.0)).is_err());
        assert!(DurationModel::new(2.0, 1.0).is_err());
        assert!(DurationModel::new(-1.0, 1.0).is_err());
        assert!(RecoveryBudget::new(0.0, 2).is_err());
        assert!(DelegationChain::new(vec![]).is_err());
    }

    #[test]
    fn family_pattern() {
        assert_eq!(ecm("grasp.robust").family_pattern(), "grasp.*");
        assert_eq!(ecm("door.open.secure").family_pattern(), "door.*");
    }

    #[test]
    fn json_uses_snake_case() {
        let a = AuthorityTuple {
            a_req: true,
            a_exec: true,
            a_ovr: OverrideLevel::HardPreempt,
            a_audit: AuditLevel::HumanVisible,
        };
        let s = serde_json::to_string(&a).unwrap();
        assert_eq!(s, r#"{"a_req":true,"a_exec":true,"a_ovr":"hard_preempt","a_audit":"human_visible"}"#);
        assert_eq!(serde_json::to_string(&TrustScope::Persistent).unwrap(), "\"persistent\"");
    }
}
