//! Single-agent local runtime: capabilities, local policy, execution state,
//! request queue and budgeted local recovery.

use std::collections::{BTreeMap, VecDeque};

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audit::{EvalOutcome, ResultTag};
use crate::model::{
    pattern_matches, AuthorityTuple, CapabilityRequest, EcmDescriptor, OverrideLevel, PolicyOutcome,
    PolicyScope, RecoveryBudget, RecoveryLevel, RobotId, TaskContext,
};
use crate::time::SimTime;

pub const NOMINAL_RELIABILITY: f64 = 1.0;
pub const DEGRADED_RELIABILITY: f64 = 0.6;
pub const RETRY_BONUS: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecoveryState {
    pub budget: RecoveryBudget,
    pub attempts_used: u32,
    pub time_used: f64,
    pub current_level: RecoveryLevel,
}

impl RecoveryState {
    pub fn new(budget: RecoveryBudget) -> Self {
        RecoveryState {
            budget,
            attempts_used: 0,
            time_used: 0.0,
            current_level: RecoveryLevel::Local,
        }
    }

    pub fn reset(&mut self) {
        self.attempts_used = 0;
        self.time_used = 0.0;
        self.current_level = RecoveryLevel::Local;
    }

    pub fn exhausted(&self) -> bool {
        self.attempts_used >= self.budget.n_max || self.time_used > self.budget.t_max
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Execution {
    pub capability: String,
    pub task_id: String,
    pub priority: i64,
    pub requester: RobotId,
    pub started: SimTime,
    pub expected_end: SimTime,
    pub duration: SimTime,
    pub attempt: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "state")]
pub enum ExecState {
    Idle,
    Executing { capability: String, task_id: String },
    Degraded,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "outcome", content = "payload")]
pub enum Outcome {
    Success(String),
    Partial(String),
    Failure(String),
}

impl Outcome {
    pub fn tag(&self) -> ResultTag {
        match self {
            Outcome::Success(_) => ResultTag::Success,
            Outcome::Partial(_) => ResultTag::Partial,
            Outcome::Failure(_) => ResultTag::Failure,
        }
    }

    pub fn is_success(&self) -> bool {
        matches!(self, Outcome::Success(_))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub outcome: Outcome,
    pub duration: f64,
    pub owner: RobotId,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapReason {
    NotPossessed,
    Unexecutable,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gap {
    pub pattern: String,
    pub reason: GapReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LocalRecovery {
    Recovered { attempts: u32 },
    BudgetExhausted { attempts: u32 },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RuntimeError {
    #[error("{0} is in the failed state and cannot execute")]
    Failed(RobotId),
    #[error("{robot} does not possess {capability}")]
    NotPossessed { robot: RobotId, capability: String },
    #[error("{0} is already executing")]
    Busy(RobotId),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueuedJob {
    pub request: CapabilityRequest,
    pub enqueued_at: SimTime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotRuntime {
    pub identity: RobotId,
    pub capabilities: Vec<EcmDescriptor>,
    pub policy: PolicyScope,
    pub recovery: RecoveryState,
    pub supervisor: String,
    pub executing: Option<Execution>,
    pub degraded: bool,
    pub failed: bool,
    pub request_queue: VecDeque<QueuedJob>,
    pub reliability: f64,
    /// Named resource levels checked against ECM resource requirements.
    #[serde(default)]
    pub resources: BTreeMap<String, f64>,
}

impl RobotRuntime {
    pub fn new(identity: RobotId, capabilities: Vec<EcmDescriptor>, policy: PolicyScope, budget: RecoveryBudget) -> Self {
        let supervisor = format!("H_{}", identity.as_str());
        RobotRuntime {
            identity,
            capabilities,
            policy,
            recovery: RecoveryState::new(budget),
            supervisor,
            executing: None,
            degraded: false,
            failed: false,
            request_queue: VecDeque::new(),
            reliability: NOMINAL_RELIABILITY,
            resources: BTreeMap::new(),
        }
    }

    pub fn exec_state(&self) -> ExecState {
        if self.failed {
            ExecState::Failed
        } else if let Some(e) = &self.executing {
            ExecState::Executing {
                capability: e.capability.clone(),
                task_id: e.task_id.clone(),
            }
        } else if self.degraded {
            ExecState::Degraded
        } else {
            ExecState::Idle
        }
    }

    pub fn is_busy(&self) -> bool {
        self.executing.is_some()
    }

    pub fn possesses(&self, capability: &str) -> bool {
        self.capabilities.iter().any(|e| e.capability_name == capability)
    }

    pub fn ecm(&self, capability: &str) -> Option<&EcmDescriptor> {
        self.capabilities.iter().find(|e| e.capability_name == capability)
    }

    fn meets_requirements(&self, ecm: &EcmDescriptor) -> bool {
        ecm.contract
            .resource_requirements
            .iter()
            .all(|(k, need)| self.resources.get(k).copied().unwrap_or(f64::INFINITY) >= *need)
    }

    /// Marks actuator degradation: reliability drops and health resources fall with it.
    pub fn degrade(&mut self) {
        self.degraded = true;
        self.reliability = DEGRADED_RELIABILITY;
        self.resources.insert("actuator_health".into(), DEGRADED_RELIABILITY);
    }

    pub fn detect_capability_gap(&self, required: &str, _ctx: &TaskContext) -> Option<Gap> {
        let matching: Vec<&EcmDescriptor> = self
            .capabilities
            .iter()
            .filter(|e| pattern_matches(required, &e.capability_name))
            .collect();
        if matching.is_empty() {
            return Some(Gap {
                pattern: required.to_string(),
                reason: GapReason::NotPossessed,
            });
        }
        if self.failed || !matching.iter().any(|e| self.meets_requirements(e)) {
            return Some(Gap {
                pattern: required.to_string(),
                reason: GapReason::Unexecutable,
            });
        }
        None
    }

    /// Earliest time at which a newly queued request could start.
    pub fn earliest_start(&self, now: SimTime) -> SimTime {
        let mut t = match &self.executing {
            Some(e) => {
                let remaining = e.expected_end.saturating_sub(now);
                now + SimTime(remaining.0 / 2)
            }
            None => now,
        };
        for job in &self.request_queue {
            let mid = job.request.ecm.contract.duration_model.midpoint();
            t = t + SimTime::from_secs(mid);
        }
        t
    }

    pub fn evaluate_incoming_request(
        &self,
        req: &CapabilityRequest,
        auth: &AuthorityTuple,
        composed: PolicyOutcome,
        advertised: bool,
        now: SimTime,
    ) -> EvalOutcome {
        if !self.possesses(&req.ecm.capability_name) {
            return reject("not_possessed");
        }
        if !advertised {
            return reject("not_advertised");
        }
        if !auth.a_req {
            return reject("trust_insufficient");
        }
        if composed == PolicyOutcome::Deny || !auth.a_exec {
            return reject("policy_denied");
        }
        if self.failed {
            return reject("executor_failed");
        }
        match &self.executing {
            None if self.request_queue.is_empty() => EvalOutcome::Accept,
            Some(e) if auth.a_ovr == OverrideLevel::HardPreempt && req.ctx.priority > e.priority => EvalOutcome::Accept,
            Some(e) if self.request_queue.is_empty() => {
                let remaining = e.expected_end.saturating_sub(now);
                EvalOutcome::Defer {
                    until: now + SimTime(remaining.0 / 2),
                }
            }
            _ => EvalOutcome::Negotiate {
                counter: self.earliest_start(now),
            },
        }
    }

    /// Current success probability for an attempt, with the retry bonus applied.
    pub fn attempt_reliability(&self, attempt: u32) -> f64 {
        (self.reliability + RETRY_BONUS * attempt as f64).min(NOMINAL_RELIABILITY)
    }

    pub fn sample_duration<R: Rng>(ecm: &EcmDescriptor, rng: &mut R) -> f64 {
        let d = ecm.contract.duration_model;
        if d.max > d.min {
            rng.gen_range(d.min..d.max)
        } else {
            d.min
        }
    }

    pub fn begin_execution<R: Rng>(
        &mut self,
        ecm: &EcmDescriptor,
        ctx: &TaskContext,
        requester: &RobotId,
        attempt: u32,
        now: SimTime,
        durations: &mut R,
    ) -> Result<Execution, RuntimeError> {
        if self.failed {
            return Err(RuntimeError::Failed(self.identity.clone()));
        }
        if !self.possesses(&ecm.capability_name) {
            return Err(RuntimeError::NotPossessed {
                robot: self.identity.clone(),
                capability: ecm.capability_name.clone(),
            });
        }
        if self.executing.is_some() {
            return Err(RuntimeError::Busy(self.identity.clone()));
        }
        let duration = SimTime::from_secs(Self::sample_duration(ecm, durations));
        let mid = SimTime::from_secs(ecm.contract.duration_model.midpoint());
        let exec = Execution {
            capability: ecm.capability_name.clone(),
            task_id: ctx.task_id.clone(),
            priority: ctx.priority,
            requester: requester.clone(),
            started: now,
            expected_end: now + mid,
            duration,
            attempt,
        };
        self.executing = Some(exec.clone());
        Ok(exec)
    }

    /// Ends the current execution and rolls its outcome at the current reliability.
    pub fn finish_execution<R: Rng>(&mut self, failures: &mut R) -> Option<ExecutionResult> {
        let exec = self.executing.take()?;
        let p = self.attempt_reliability(exec.attempt);
        let roll: f64 = failures.gen();
        let outcome = if roll < p {
            Outcome::Success(format!("{}_done", exec.capability.replace('.', "_")))
        } else {
            Outcome::Failure("actuator_fault".into())
        };
        Some(ExecutionResult {
            outcome,
            duration: exec.duration.secs(),
            owner: self.identity.clone(),
        })
    }

    /// Drops the current execution without completing it.
    pub fn abort_execution(&mut self) -> Option<Execution> {
        self.executing.take()
    }

    pub fn execute_capability<R1: Rng, R2: Rng>(
        &mut self,
        ecm: &EcmDescriptor,
        ctx: &TaskContext,
        attempt: u32,
        now: SimTime,
        durations: &mut R1,
        failures: &mut R2,
    ) -> Result<ExecutionResult, RuntimeError> {
        let requester = self.identity.clone();
        self.begin_execution(ecm, ctx, &requester, attempt, now, durations)?;
        Ok(self.finish_execution(failures).expect("execution just began"))
    }

    /// Budgeted local retries of a failed capability.
    pub fn local_recover<R1: Rng, R2: Rng>(
        &mut self,
        ecm: &EcmDescriptor,
        ctx: &TaskContext,
        now: SimTime,
        durations: &mut R1,
        failures: &mut R2,
    ) -> LocalRecovery {
        self.recovery.reset();
        let mut t = now;
        while !self.recovery.exhausted() {
            self.recovery.attempts_used += 1;
            let attempt = self.recovery.attempts_used;
            let result = match self.execute_capability(ecm, ctx, attempt, t, durations, failures) {
                Ok(r) => r,
                Err(_) => break,
            };
            self.recovery.time_used += result.duration;
            t = t + SimTime::from_secs(result.duration);
            if result.outcome.is_success() {
                return LocalRecovery::Recovered { attempts: attempt };
            }
        }
        LocalRecovery::BudgetExhausted {
            attempts: self.recovery.attempts_used,
        }
    }
}

fn reject(reason: &str) -> EvalOutcome {
    EvalOutcome::Reject {
        reason: reason.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{AuditLevel, EcmContract, RecoveryBudget};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ecm(name: &str, lo: f64, hi: f64) -> EcmDescriptor {
        EcmDescriptor::new(name, EcmContract::with_duration(lo, hi)).unwrap()
    }

    fn robot(name: &str, caps: &[&str]) -> RobotRuntime {
        RobotRuntime::new(
            name.into(),
            caps.iter().map(|c| ecm(c, 0.5, 2.0)).collect(),
            PolicyScope::allow_all(),
            RecoveryBudget::default(),
        )
    }

    fn auth(a_req: bool) -> AuthorityTuple {
        AuthorityTuple {
            a_req,
            a_exec: true,
            a_ovr: OverrideLevel::None,
            a_audit: AuditLevel::Fleet,
        }
    }

    fn req(ctx: TaskContext) -> CapabilityRequest {
        CapabilityRequest {
            requester: "robot_a".into(),
            executor: "robot_b".into(),
            ecm: ecm("door.open.secure", 0.5, 2.0),
            ctx,
            issued_at: SimTime::ZERO,
            auth: auth(true),
            parent_link: None,
        }
    }

    #[test]
    fn gap_detection() {
        let a = robot("robot_a", &["navigate.indoor", "carry.package", "handover.dropoff"]);
        let b = robot("robot_b", &["navigate.indoor", "door.open.basic", "door.open.secure"]);
        let ctx = TaskContext::new("t");
        assert_eq!(a.detect_capability_gap("door.open.secure", &ctx).unwrap().reason, GapReason::NotPossessed);
        assert!(b.detect_capability_gap("door.open.secure", &ctx).is_none());
    }

    #[test]
    fn degraded_below_contract_is_a_gap() {
        let mut contract = EcmContract::with_duration(1.0, 3.0);
        contract.resource_requirements.insert("actuator_health".into(), 0.8);
        let mut d = RobotRuntime::new(
            "robot_d".into(),
            vec![EcmDescriptor::new("grasp.robust", contract).unwrap()],
            PolicyScope::allow_all(),
            RecoveryBudget::default(),
        );
        let ctx = TaskContext::new("t");
        assert!(d.detect_capability_gap("grasp.robust", &ctx).is_none());
        d.degrade();
        assert_eq!(d.detect_capability_gap("grasp.robust", &ctx).unwrap().reason, GapReason::Unexecutable);
    }

    #[test]
    fn evaluation_outcomes() {
        let mut b = robot("robot_b", &["door.open.secure"]);
        let ctx = TaskContext::new("t").with_priority(1);
        let r = req(ctx.clone());
        assert_eq!(
            b.evaluate_incoming_request(&r, &auth(true), PolicyOutcome::Allow, true, SimTime::ZERO),
            EvalOutcome::Accept
        );
        assert!(matches!(
            b.evaluate_incoming_request(&r, &auth(false), PolicyOutcome::Allow, true, SimTime::ZERO),
            EvalOutcome::Reject { reason } if reason == "trust_insufficient"
        ));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let other = TaskContext::new("u").with_priority(1);
        b.begin_execution(&r.ecm.clone(), &other, &"robot_c".into(), 0, SimTime::ZERO, &mut rng).unwrap();
        assert!(matches!(
            b.evaluate_incoming_request(&r, &auth(true), PolicyOutcome::Allow, true, SimTime(1)),
            EvalOutcome::Defer { .. }
        ));
    }

    #[test]
    fn hard_preempt_only_displaces_lower_priority() {
        let mut b = robot("robot_b", &["door.open.secure"]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let low = TaskContext::new("low").with_priority(1);
        let e = b.ecm("door.open.secure").unwrap().clone();
        b.begin_execution(&e, &low, &"robot_c".into(), 0, SimTime::ZERO, &mut rng).unwrap();
        let mut a = auth(true);
        a.a_ovr = OverrideLevel::HardPreempt;
        let high = req(TaskContext::new("high").with_priority(5));
        assert_eq!(
            b.evaluate_incoming_request(&high, &a, PolicyOutcome::Allow, true, SimTime(1)),
            EvalOutcome::Accept
        );
        let same = req(TaskContext::new("same").with_priority(1));
        assert!(matches!(
            b.evaluate_incoming_request(&same, &a, PolicyOutcome::Allow, true, SimTime(1)),
            EvalOutcome::Defer { .. }
        ));
    }

    #[test]
    fn nominal_door_open_succeeds_within_bounds() {
        let mut b = robot("robot_b", &["door.open.secure"]);
        let e = b.ecm("door.open.secure").unwrap().clone();
        for seed in 0..50 {
            let mut d = ChaCha8Rng::seed_from_u64(seed);
            let mut f = ChaCha8Rng::seed_from_u64(seed + 1000);
            let r = b
                .execute_capability(&e, &TaskContext::new("t"), 0, SimTime::ZERO, &mut d, &mut f)
                .unwrap();
            assert!(r.outcome.is_success());
            assert!((0.5..=2.0).contains(&r.duration));
            assert_eq!(r.owner, RobotId::from("robot_b"));
        }
    }

    #[test]
    fn failed_runtime_cannot_execute() {
        let mut b = robot("robot_b", &["door.open.secure"]);
        b.failed = true;
        let e = b.ecm("door.open.secure").unwrap().clone();
        let mut d = ChaCha8Rng::seed_from_u64(0);
        let mut f = ChaCha8Rng::seed_from_u64(1);
        assert!(matches!(
            b.execute_capability(&e, &TaskContext::new("t"), 0, SimTime::ZERO, &mut d, &mut f),
            Err(RuntimeError::Failed(_))
        ));
    }

    #[test]
    fn zero_retry_budget_exhausts_immediately() {
        let mut d = robot("robot_d", &["grasp.robust"]);
        d.recovery.budget = RecoveryBudget::new(10.0, 0).unwrap();
        let e = d.ecm("grasp.robust").unwrap().clone();
        let mut r1 = ChaCha8Rng::seed_from_u64(0);
        let mut r2 = ChaCha8Rng::seed_from_u64(1);
        assert_eq!(
            d.local_recover(&e, &TaskContext::new("t"), SimTime::ZERO, &mut r1, &mut r2),
            LocalRecovery::BudgetExhausted { attempts: 0 }
        );
    }

    #[test]
    fn retry_bonus_is_capped() {
        let mut d = robot("robot_d", &["grasp.robust"]);
        d.degrade();
        assert!((d.attempt_reliability(0) - 0.6).abs() < 1e-12);
        assert!((d.attempt_reliability(2) - 0.8).abs() < 1e-12);
        assert!((d.attempt_reliability(9) - 1.0).abs() < 1e-12);
    }
}
