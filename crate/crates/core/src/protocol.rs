//! Five-phase inter-robot request lifecycle and delegation-chain construction.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audit::{AuditError, AuditEvent, AuditTrace, EvalOutcome, EventKind, Payload, Principal, RequestStage};
use crate::federation::Federation;
use crate::model::{chain_well_formed, CapabilityRequest, ChainVerdict, DelegationChain, RequestId, RobotId, TaskContext};
use crate::registry::CandidateQuery;
use crate::rng::RngStreams;
use crate::runtime::{ExecutionResult, RobotRuntime, RuntimeError};
use crate::sim::messaging::sample_latency;
use crate::time::SimTime;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    NoCandidate,
    AllRejected,
    NoFederation,
    TrustInsufficient,
    PolicyDenied,
    DeadlineExceeded,
    Unrecovered,
}

impl TerminationReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            TerminationReason::NoCandidate => "no_candidate",
            TerminationReason::AllRejected => "all_rejected",
            TerminationReason::NoFederation => "no_federation",
            TerminationReason::TrustInsufficient => "trust_insufficient",
            TerminationReason::PolicyDenied => "policy_denied",
            TerminationReason::DeadlineExceeded => "deadline_exceeded",
            TerminationReason::Unrecovered => "unrecovered",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "phase", content = "detail")]
pub enum Phase {
    GapDetected,
    Discovering,
    Formulated,
    Evaluating,
    Executing,
    Completed(ExecutionResult),
    Terminated(TerminationReason),
}

impl Phase {
    pub fn rank(&self) -> u8 {
        match self {
            Phase::GapDetected => 0,
            Phase::Discovering => 1,
            Phase::Formulated => 2,
            Phase::Evaluating => 3,
            Phase::Executing => 4,
            Phase::Completed(_) | Phase::Terminated(_) => 5,
        }
    }

    pub fn is_terminal(&self) -> bool {
        self.rank() == 5
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ProtocolError {
    #[error("phase cannot move from {from:?} to {to:?}")]
    PhaseRegression { from: Phase, to: Phase },
    #[error("requester {0} has no gap for the requested capability")]
    NoGap(RobotId),
    #[error("delegation chain contains a cycle at {0}")]
    Cycle(RequestId),
    #[error("sub-request {0} is not causally linked to the chain")]
    Unlinked(RequestId),
    #[error("unknown robot {0}")]
    UnknownRobot(RobotId),
    #[error(transparent)]
    Audit(#[from] AuditError),
    #[error(transparent)]
    Runtime(#[from] RuntimeError),
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RequestState {
    pub phase: Phase,
}

impl RequestState {
    pub fn new() -> Self {
        RequestState {
            phase: Phase::GapDetected,
        }
    }

    /// Phases never go backwards. Re-entering evaluation for a fallback candidate is allowed.
    pub fn advance(&mut self, next: Phase) -> Result<(), ProtocolError> {
        let ok = !self.phase.is_terminal()
            && (next.rank() > self.phase.rank()
                || (next == Phase::Formulated && self.phase == Phase::Evaluating));
        if !ok {
            return Err(ProtocolError::PhaseRegression {
                from: self.phase.clone(),
                to: next,
            });
        }
        self.phase = next;
        Ok(())
    }
}

impl Default for RequestState {
    fn default() -> Self {
        RequestState::new()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LifecycleOutcome {
    pub state: RequestState,
    pub finished_at: SimTime,
    pub executor: Option<RobotId>,
}

fn local_supervisor(r: &RobotId) -> Principal {
    Principal::Supervisor(format!("H_{r}"))
}

/// Runs one request end to end without interleaving: gap check, discovery, formulation,
/// evaluation and execution, auditing every transition. Non-accepting candidates are
/// skipped in registry order.
pub fn run_request_lifecycle(
    requester: &RobotId,
    pattern: &str,
    ctx: &TaskContext,
    fed: &Federation,
    runtimes: &mut BTreeMap<RobotId, RobotRuntime>,
    trace: &mut AuditTrace,
    start: SimTime,
    rng: &mut RngStreams,
) -> Result<LifecycleOutcome, ProtocolError> {
    let me = runtimes
        .get(requester)
        .ok_or_else(|| ProtocolError::UnknownRobot(requester.clone()))?;
    if me.detect_capability_gap(pattern, ctx).is_none() {
        return Err(ProtocolError::NoGap(requester.clone()));
    }
    let mut state = RequestState::new();
    let mut t = start;
    let sup = local_supervisor(requester);
    let me_p = Principal::robot(requester);

    if !fed.is_available() {
        trace.append(
            AuditEvent::new(
                EventKind::ExecutionCompleted,
                t,
                me_p.clone(),
                Payload::ExecutionEnd {
                    capability: pattern.to_string(),
                    attempt: 0,
                    result: crate::audit::ResultTag::Failure,
                    reason: Some("no_federation".into()),
                },
            )
            .origin(requester)
            .owner(requester)
            .escalation(sup)
            .task(&ctx.task_id),
        )?;
        state.advance(Phase::Terminated(TerminationReason::NoFederation))?;
        return Ok(LifecycleOutcome {
            state,
            finished_at: t,
            executor: None,
        });
    }

    state.advance(Phase::Discovering)?;
    trace.append(
        AuditEvent::new(
            EventKind::RequestIssued,
            t,
            me_p.clone(),
            Payload::Request {
                stage: RequestStage::Query,
                capability: pattern.to_string(),
                target: Some(Principal::Federation("registry".into())),
            },
        )
        .origin(requester)
        .escalation(sup.clone())
        .task(&ctx.task_id),
    )?;
    t = t + SimTime::from_secs(sample_latency(rng.latency()));
    let candidates = fed.query(&CandidateQuery::new(requester, pattern, ctx));
    trace.append(
        AuditEvent::new(
            EventKind::CandidatesReturned,
            t,
            Principal::Federation("registry".into()),
            Payload::Candidates {
                pattern: pattern.to_string(),
                candidates: candidates.iter().map(|c| c.robot.clone()).collect(),
            },
        )
        .origin(requester)
        .escalation(sup.clone())
        .task(&ctx.task_id),
    )?;
    t = t + SimTime::from_secs(sample_latency(rng.latency()));
    if candidates.is_empty() {
        state.advance(Phase::Terminated(TerminationReason::NoCandidate))?;
        return Ok(LifecycleOutcome {
            state,
            finished_at: t,
            executor: None,
        });
    }

    for cand in candidates {
        state.advance(Phase::Formulated)?;
        let exec_rt = runtimes.get(&cand.robot);
        let auth = fed.evaluate_authority(requester, &cand.robot, &cand.ecm, ctx, exec_rt);
        let req = CapabilityRequest {
            requester: requester.clone(),
            executor: cand.robot.clone(),
            ecm: cand.ecm.clone(),
            ctx: ctx.clone(),
            issued_at: t,
            auth,
            parent_link: None,
        };
        let id = req.id();
        trace.append(
            AuditEvent::new(
                EventKind::RequestIssued,
                t,
                me_p.clone(),
                Payload::Request {
                    stage: RequestStage::Formulated,
                    capability: cand.ecm.capability_name.clone(),
                    target: Some(Principal::robot(&cand.robot)),
                },
            )
            .origin(requester)
            .owner(&cand.robot)
            .escalation(sup.clone())
            .request(&id),
        )?;
        t = t + SimTime::from_secs(sample_latency(rng.latency()));
        state.advance(Phase::Evaluating)?;
        let composed = fed.composed(requester, &cand.robot, &cand.ecm, ctx);
        let advertised = fed.registry.is_advertised(&cand.robot, &cand.ecm.capability_name);
        let exec_p = Principal::robot(&cand.robot);
        let exec_sup = local_supervisor(&cand.robot);
        let executor = runtimes
            .get_mut(&cand.robot)
            .ok_or_else(|| ProtocolError::UnknownRobot(cand.robot.clone()))?;
        let result = executor.evaluate_incoming_request(&req, &auth, composed, advertised, t);
        trace.append(
            AuditEvent::new(
                EventKind::RequestEvaluated,
                t,
                exec_p.clone(),
                Payload::Evaluation {
                    capability: cand.ecm.capability_name.clone(),
                    composed,
                    result: result.clone(),
                },
            )
            .origin(requester)
            .owner(&cand.robot)
            .escalation(exec_sup.clone())
            .request(&id),
        )?;
        if result != EvalOutcome::Accept {
            continue;
        }
        state.advance(Phase::Executing)?;
        let exec = executor.begin_execution(&cand.ecm, ctx, requester, 0, t, rng.durations())?;
        trace.append(
            AuditEvent::new(
                EventKind::ExecutionStarted,
                t,
                exec_p.clone(),
                Payload::ExecutionStart {
                    capability: cand.ecm.capability_name.clone(),
                    attempt: 0,
                    expected_end: exec.expected_end,
                },
            )
            .origin(requester)
            .owner(&cand.robot)
            .escalation(exec_sup.clone())
            .request(&id),
        )?;
        t = t + exec.duration;
        let outcome = executor.finish_execution(rng.failures()).expect("execution in progress");
        trace.append(
            AuditEvent::new(
                EventKind::ExecutionCompleted,
                t,
                exec_p,
                Payload::ExecutionEnd {
                    capability: cand.ecm.capability_name.clone(),
                    attempt: 0,
                    result: outcome.outcome.tag(),
                    reason: None,
                },
            )
            .origin(requester)
            .owner(&cand.robot)
            .escalation(exec_sup)
            .request(&id),
        )?;
        t = t + SimTime::from_secs(sample_latency(rng.latency()));
        state.advance(Phase::Completed(outcome))?;
        return Ok(LifecycleOutcome {
            state,
            finished_at: t,
            executor: Some(cand.robot),
        });
    }
    state.advance(Phase::Terminated(TerminationReason::AllRejected))?;
    Ok(LifecycleOutcome {
        state,
        finished_at: t,
        executor: None,
    })
}

/// Orders sub-requests causally behind the root by following `parent_link`.
pub fn build_chain(root: CapabilityRequest, subs: Vec<CapabilityRequest>) -> Result<DelegationChain, ProtocolError> {
    let mut links = vec![(root.clone(), root.auth)];
    let mut remaining = subs;
    let mut seen: BTreeSet<RobotId> = BTreeSet::new();
    seen.insert(root.requester.clone());
    seen.insert(root.executor.clone());
    let mut last = root.id();
    while !remaining.is_empty() {
        let pos = remaining
            .iter()
            .position(|r| r.parent_link.as_ref() == Some(&last))
            .ok_or_else(|| ProtocolError::Unlinked(remaining[0].id()))?;
        let next = remaining.remove(pos);
        if !seen.insert(next.executor.clone()) || next.executor == next.requester {
            return Err(ProtocolError::Cycle(next.id()));
        }
        last = next.id();
        let auth = next.auth;
        links.push((next, auth));
    }
    Ok(DelegationChain::new(links)?)
}

/// Checks every link independently against the federation's admissibility rules.
pub fn check_chain(fed: &Federation, runtimes: &BTreeMap<RobotId, RobotRuntime>, chain: &DelegationChain) -> ChainVerdict {
    chain_well_formed(chain, |req, _| {
        let auth = fed.evaluate_authority(&req.requester, &req.executor, &req.ecm, &req.ctx, runtimes.get(&req.executor));
        fed.admissible_request(req, &auth, runtimes.get(&req.executor))
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phases_are_monotone() {
        let mut s = RequestState::new();
        s.advance(Phase::Discovering).unwrap();
        s.advance(Phase::Formulated).unwrap();
        s.advance(Phase::Evaluating).unwrap();
        s.advance(Phase::Formulated).unwrap();
        assert!(s.advance(Phase::Discovering).is_err());
        s.advance(Phase::Terminated(TerminationReason::AllRejected)).unwrap();
        assert!(s.advance(Phase::Executing).is_err());
    }
}
