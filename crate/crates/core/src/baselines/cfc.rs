//! Centralized fleet coordinator. One coordinator owns matching, assignment and recovery;
//! robots keep only their local segments.

use crate::audit::{AuditEvent, Attribution, EvalOutcome, EventKind, Payload, Principal, RequestStage, ResultTag};
use crate::model::{PolicyOutcome, RecoveryLevel, RobotId};
use crate::registry::{Candidate, CandidateQuery, QueryGates};
use crate::runtime::{ExecutionResult, Outcome};
use crate::sim::engine::{fleet_supervisor, supervisor_of, ActiveFailure, Ev, Step, VStep, World, HUMAN_DELAY, REVIEW_DELAY};
use crate::sim::COORDINATOR_ID;

/// How many times the coordinator retries a failed assignment on the same robot.
pub const COORDINATOR_RETRIES: u32 = 1;

#[derive(Debug, Clone)]
pub(crate) enum CfcStep {
    Dispatch,
    ReviewDone { executor: RobotId },
    Assign { executor: RobotId },
    Contention { executor: RobotId, holder: RobotId },
    Decided { executor: RobotId, holder: RobotId, case_id: u64 },
    Requeue { executor: RobotId },
    Report,
    HumanDone,
}

#[derive(Debug, Clone)]
pub(crate) enum CfcViolation {
    Dispatch,
    Assign,
    Escalate { other: RobotId },
    Decide { other: RobotId, case_id: u64 },
}

fn coord(kind: EventKind, w: &World, payload: Payload) -> AuditEvent {
    AuditEvent::new(kind, w.now(), Principal::Coordinator, payload)
        .escalation(Principal::Coordinator)
        .attributed(Attribution::RELAY)
}

/// Coordinator matching: supervisor-level visibility, no trust gate, busy state ignored.
pub(crate) fn coordinator_match(w: &World, owner: &RobotId, cap: &str, ctx: &crate::model::TaskContext) -> Vec<Candidate> {
    let fed = &w.fleet.federation;
    let q = CandidateQuery::new(&RobotId::new(COORDINATOR_ID), cap, ctx);
    let gates = QueryGates {
        visibility: true,
        trust: false,
        policy: false,
    };
    fed.query_with(&q, gates)
        .into_iter()
        .filter(|c| &c.robot != owner)
        .filter(|c| fed.composed_full(owner, &c.robot, &c.ecm, ctx) != PolicyOutcome::Deny)
        .collect()
}

pub(crate) fn segment(w: &mut World, t: usize, gap: bool) {
    let owner = w.owner(t);
    if !gap {
        w.set_assignment(t, &owner, &owner, false);
        w.begin(t);
        return;
    }
    let ev = AuditEvent::new(
        EventKind::RequestIssued,
        w.now(),
        Principal::robot(&owner),
        Payload::Request {
            stage: RequestStage::Query,
            capability: w.capability(t),
            target: Some(Principal::Coordinator),
        },
    )
    .origin(&owner)
    .escalation(Principal::Coordinator)
    .task(&w.task_id(t));
    w.log(ev);
    let at = w.send(owner.as_str(), COORDINATOR_ID);
    w.at(at, t, Step::Cfc(CfcStep::Dispatch));
}

pub(crate) fn step(w: &mut World, t: usize, s: CfcStep) {
    match s {
        CfcStep::Dispatch => dispatch(w, t),
        CfcStep::ReviewDone { executor } => {
            let ev = AuditEvent::new(
                EventKind::SupervisorDecision,
                w.now(),
                fleet_supervisor(),
                Payload::Decision {
                    case_id: 0,
                    decision: "approve".into(),
                    winner: Some(w.owner(t)),
                },
            )
            .origin(&w.owner(t))
            .owner(&executor)
            .escalation(fleet_supervisor())
            .task(&w.task_id(t));
            w.log(ev);
            w.tasks[t].approved = true;
            assign(w, t, &executor);
        }
        CfcStep::Assign { executor } => self_check(w, t, &executor),
        CfcStep::Contention { executor, holder } => {
            let case_id = w.new_case_id();
            let ev = coord(
                EventKind::PolicyReviewRaised,
                w,
                Payload::Review {
                    case_id,
                    capability: w.capability(t),
                    claimants: vec![w.owner(t), holder.clone()],
                },
            )
            .owner(&executor)
            .escalation(fleet_supervisor())
            .task(&w.task_id(t));
            w.log(ev);
            let at = w.supervisor_delay(REVIEW_DELAY);
            w.at(at, t, Step::Cfc(CfcStep::Decided { executor, holder, case_id }));
        }
        CfcStep::Decided {
            executor,
            holder,
            case_id,
        } => {
            let ev = AuditEvent::new(
                EventKind::SupervisorDecision,
                w.now(),
                fleet_supervisor(),
                Payload::Decision {
                    case_id,
                    decision: "queue".into(),
                    winner: Some(holder),
                },
            )
            .origin(&w.owner(t))
            .owner(&executor)
            .escalation(fleet_supervisor())
            .task(&w.task_id(t));
            w.log(ev);
            if w.running.contains_key(&executor) {
                w.waiters
                    .entry(executor.clone())
                    .or_default()
                    .push_back((t, Step::Cfc(CfcStep::Requeue { executor })));
            } else {
                w.now_step(t, Step::Cfc(CfcStep::Requeue { executor }));
            }
        }
        CfcStep::Requeue { executor } => assign(w, t, &executor),
        CfcStep::Report => report(w, t),
        CfcStep::HumanDone => {
            if let Some(f) = w.tasks[t].failure.take() {
                w.log_resolution(t, &f, fleet_supervisor(), Attribution::DIRECT);
            }
            w.now_step(t, Step::Delivered);
        }
    }
}

fn dispatch(w: &mut World, t: usize) {
    let owner = w.owner(t);
    let cap = w.capability(t);
    let ctx = w.ctx(t);
    let ev = coord(
        EventKind::RequestIssued,
        w,
        Payload::Request {
            stage: RequestStage::Dispatch,
            capability: cap.clone(),
            target: None,
        },
    )
    .task(&w.task_id(t));
    w.log(ev);
    let cands = coordinator_match(w, &owner, &cap, &ctx);
    let Some(c) = cands.into_iter().next() else {
        let ev = coord(
            EventKind::RequestEvaluated,
            w,
            Payload::Evaluation {
                capability: cap,
                composed: PolicyOutcome::Deny,
                result: EvalOutcome::Reject {
                    reason: "no_candidate".into(),
                },
            },
        )
        .origin(&owner)
        .task(&w.task_id(t));
        w.log(ev);
        w.finish(t, false, Some("no_candidate"));
        return;
    };
    let composed = w.fleet.federation.composed_full(&owner, &c.robot, &c.ecm, &ctx);
    if composed == PolicyOutcome::Review && !w.tasks[t].approved {
        let case_id = w.new_case_id();
        let ev = coord(
            EventKind::PolicyReviewRaised,
            w,
            Payload::Review {
                case_id,
                capability: cap,
                claimants: vec![owner.clone()],
            },
        )
        .origin(&owner)
        .owner(&c.robot)
        .escalation(fleet_supervisor())
        .task(&w.task_id(t));
        w.log(ev);
        let at = w.supervisor_delay(REVIEW_DELAY);
        w.at(at, t, Step::Cfc(CfcStep::ReviewDone { executor: c.robot }));
        return;
    }
    assign(w, t, &c.robot);
}

fn assign(w: &mut World, t: usize, executor: &RobotId) {
    let owner = w.owner(t);
    let ctx = w.ctx(t);
    let cap = w.capability(t);
    let composed = w.fleet.federation.composed_full(&owner, executor, &w.ecm(&cap), &ctx);
    let attempt = w.tasks[t].exec.as_ref().filter(|a| &a.executor == executor).map_or(0, |a| a.attempt);
    w.set_assignment(t, executor, &owner, true);
    if let Some(a) = w.tasks[t].exec.as_mut() {
        a.attempt = attempt;
    }
    let ev = coord(
        EventKind::RequestEvaluated,
        w,
        Payload::Evaluation {
            capability: cap,
            composed,
            result: EvalOutcome::Accept,
        },
    )
    .origin(&owner)
    .owner(executor)
    .task(&w.task_id(t));
    w.log(ev);
    let at = w.send(COORDINATOR_ID, executor.as_str());
    w.at(
        at,
        t,
        Step::Cfc(CfcStep::Assign {
            executor: executor.clone(),
        }),
    );
}

/// The executor checks an assignment against what it is already doing.
fn self_check(w: &mut World, t: usize, executor: &RobotId) {
    let owner = w.owner(t);
    let holder = w.running.get(executor).map(|(u, _)| w.owner(*u));
    if let Some(holder) = holder {
        let ev = AuditEvent::new(
            EventKind::AuthorityConflictObserved,
            w.now(),
            Principal::robot(executor),
            Payload::Conflict {
                reason: "assignment_contention".into(),
                claimants: vec![Principal::robot(&holder), Principal::robot(&owner)],
            },
        )
        .origin(&owner)
        .owner(executor)
        .escalation(Principal::Coordinator)
        .task(&w.task_id(t));
        w.log(ev);
        let at = w.send(executor.as_str(), COORDINATOR_ID);
        w.at(
            at,
            t,
            Step::Cfc(CfcStep::Contention {
                executor: executor.clone(),
                holder,
            }),
        );
        return;
    }
    w.begin(t);
}

pub(crate) fn result(w: &mut World, t: usize, result: ExecutionResult) {
    let Some(a) = w.tasks[t].exec.clone() else {
        w.fail("result without assignment");
        return;
    };
    let (tag, reason) = match &result.outcome {
        Outcome::Success(_) => (ResultTag::Success, None),
        Outcome::Partial(r) | Outcome::Failure(r) => (result.outcome.tag(), Some(r.clone())),
    };
    let payload = Payload::ExecutionEnd {
        capability: a.req.ecm.clone(),
        attempt: a.attempt,
        result: tag,
        reason,
    };
    let ev = if a.delegated {
        coord(EventKind::ExecutionCompleted, w, payload).owner(&a.executor).task(&a.req.task_id)
    } else {
        AuditEvent::new(EventKind::ExecutionCompleted, w.now(), Principal::robot(&a.executor), payload)
            .origin(&a.requester)
            .owner(&a.executor)
            .escalation(supervisor_of(&a.executor))
            .request(&a.req)
    };
    w.log(ev);
    if result.outcome.is_success() {
        if a.delegated {
            let at1 = w.send(a.executor.as_str(), COORDINATOR_ID);
            let owner = w.owner(t);
            let at2 = w.send_at(COORDINATOR_ID, owner.as_str(), at1);
            w.at(at2, t, Step::Delivered);
        } else if w.tasks[t].failure.is_some() {
            let at = w.send(a.executor.as_str(), COORDINATOR_ID);
            w.at(at, t, Step::Delivered);
        } else {
            w.now_step(t, Step::Delivered);
        }
    } else {
        let at = w.send(a.executor.as_str(), COORDINATOR_ID);
        w.at(at, t, Step::Cfc(CfcStep::Report));
    }
}

/// Every failure goes straight to the coordinator: retry, reassign, then the fleet supervisor.
fn report(w: &mut World, t: usize) {
    let Some(a) = w.tasks[t].exec.clone() else {
        return;
    };
    let owner = w.owner(t);
    if w.tasks[t].failure.is_none() {
        let id = w.new_failure_id();
        let ev = coord(
            EventKind::RecoveryTriggered,
            w,
            Payload::Recovery {
                failure_id: id,
                level: RecoveryLevel::Fleet,
                resolved: None,
            },
        )
        .origin(&owner)
        .owner(&a.executor)
        .task(&w.task_id(t));
        w.log(ev);
        w.tasks[t].failure = Some(ActiveFailure {
            id,
            robot: a.executor.clone(),
            level: RecoveryLevel::Fleet,
            retries: 0,
            time_used: 0.0,
        });
    }
    let f = w.tasks[t].failure.clone().expect("failure recorded");
    if f.retries < COORDINATOR_RETRIES {
        if let Some(x) = w.tasks[t].failure.as_mut() {
            x.retries += 1;
        }
        if let Some(x) = w.tasks[t].exec.as_mut() {
            x.attempt += 1;
        }
        assign(w, t, &a.executor);
        return;
    }
    if f.retries == COORDINATOR_RETRIES {
        if let Some(x) = w.tasks[t].failure.as_mut() {
            x.retries += 1;
        }
        let cap = w.capability(t);
        let ctx = w.ctx(t);
        let alt = coordinator_match(w, &owner, &cap, &ctx)
            .into_iter()
            .find(|c| c.robot != a.executor);
        if let Some(c) = alt {
            let ev = coord(
                EventKind::Reassignment,
                w,
                Payload::Reassign {
                    failure_id: f.id,
                    from: a.executor.clone(),
                    to: c.robot.clone(),
                },
            )
            .origin(&owner)
            .owner(&c.robot)
            .task(&w.task_id(t));
            w.log(ev);
            if let Some(x) = w.tasks[t].exec.as_mut() {
                x.attempt = 0;
            }
            assign(w, t, &c.robot);
            return;
        }
    }
    let ev = coord(
        EventKind::RecoveryEscalated,
        w,
        Payload::Escalation {
            failure_id: f.id,
            from: RecoveryLevel::Fleet,
            to: RecoveryLevel::Human,
        },
    )
    .origin(&owner)
    .owner(&a.executor)
    .task(&w.task_id(t));
    w.log(ev);
    let ev = AuditEvent::new(
        EventKind::SupervisorDecision,
        w.now(),
        fleet_supervisor(),
        Payload::Decision {
            case_id: f.id,
            decision: "manual_recovery".into(),
            winner: Some(a.executor.clone()),
        },
    )
    .origin(&owner)
    .owner(&a.executor)
    .escalation(fleet_supervisor())
    .task(&w.task_id(t));
    w.log(ev);
    w.set_level(t, RecoveryLevel::Human);
    let at = w.supervisor_delay(HUMAN_DELAY);
    w.at(at, t, Step::Cfc(CfcStep::HumanDone));
}

/// The out-of-scope request goes through the coordinator like any other gap report.
pub(crate) fn violation(w: &mut World, i: usize, v: VStep) {
    let va = w.script.violations[i].clone();
    let task_id = w.task_id(va.task);
    let sched = |w: &mut World, at, s| w.clock.schedule(at, Ev::Violation(i, VStep::Cfc(s)));
    match v {
        VStep::Start => {
            let ev = AuditEvent::new(
                EventKind::RequestIssued,
                w.now(),
                Principal::robot(&va.attacker),
                Payload::Request {
                    stage: RequestStage::Query,
                    capability: va.capability.clone(),
                    target: Some(Principal::Coordinator),
                },
            )
            .origin(&va.attacker)
            .escalation(Principal::Coordinator)
            .task(&task_id);
            w.log(ev);
            let at = w.send(va.attacker.as_str(), COORDINATOR_ID);
            sched(w, at, CfcViolation::Dispatch);
        }
        VStep::Cfc(CfcViolation::Dispatch) => {
            let ev = coord(
                EventKind::RequestIssued,
                w,
                Payload::Request {
                    stage: RequestStage::Dispatch,
                    capability: va.capability.clone(),
                    target: None,
                },
            )
            .task(&task_id);
            w.log(ev);
            let ctx = w.ctx(va.task);
            let found = coordinator_match(w, &va.attacker, &va.capability, &ctx)
                .into_iter()
                .any(|c| c.robot == va.target);
            if !found {
                return;
            }
            let ev = coord(
                EventKind::RequestEvaluated,
                w,
                Payload::Evaluation {
                    capability: va.capability.clone(),
                    composed: PolicyOutcome::Allow,
                    result: EvalOutcome::Accept,
                },
            )
            .origin(&va.attacker)
            .owner(&va.target)
            .task(&task_id);
            w.log(ev);
            let at = w.send(COORDINATOR_ID, va.target.as_str());
            sched(w, at, CfcViolation::Assign);
        }
        VStep::Cfc(CfcViolation::Assign) => {
            if let Some(other) = w.claim(&task_id, &va.capability, &va.target, &va.attacker) {
                let ev = AuditEvent::new(
                    EventKind::AuthorityConflictObserved,
                    w.now(),
                    Principal::robot(&va.target),
                    Payload::Conflict {
                        reason: "duplicate_claim".into(),
                        claimants: vec![Principal::robot(&other), Principal::robot(&va.attacker)],
                    },
                )
                .origin(&va.attacker)
                .owner(&va.target)
                .escalation(Principal::Coordinator)
                .task(&task_id);
                w.log(ev);
                let at = w.send(va.target.as_str(), COORDINATOR_ID);
                sched(w, at, CfcViolation::Escalate { other });
            }
        }
        VStep::Cfc(CfcViolation::Escalate { other }) => {
            let case_id = w.new_case_id();
            let ev = coord(
                EventKind::PolicyReviewRaised,
                w,
                Payload::Review {
                    case_id,
                    capability: va.capability.clone(),
                    claimants: vec![other.clone(), va.attacker.clone()],
                },
            )
            .owner(&va.target)
            .escalation(fleet_supervisor())
            .task(&task_id);
            w.log(ev);
            let at = w.supervisor_delay(REVIEW_DELAY);
            sched(w, at, CfcViolation::Decide { other, case_id });
        }
        VStep::Cfc(CfcViolation::Decide { other, case_id }) => {
            let ev = AuditEvent::new(
                EventKind::SupervisorDecision,
                w.now(),
                fleet_supervisor(),
                Payload::Decision {
                    case_id,
                    decision: "reject".into(),
                    winner: Some(other),
                },
            )
            .origin(&va.attacker)
            .owner(&va.target)
            .escalation(fleet_supervisor())
            .task(&task_id);
            w.log(ev);
        }
        other => w.fail(format!("unexpected violation step {other:?} for the coordinator")),
    }
}
