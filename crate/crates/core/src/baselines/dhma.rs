//! Decentralized hierarchical multi-agent baseline: every robot hosts planning, execution,
//! communication and recovery sub-agents that each keep their own view of authority.

use crate::audit::{
    AuditEvent, Attribution, EvalOutcome, EventKind, Payload, Principal, RequestStage, ResultTag, SubAgentRole,
};
use crate::model::{CapabilityRequest, PolicyOutcome, RecoveryLevel, RequestId, RobotId};
use crate::registry::{Candidate, CandidateQuery, QueryGates};
use crate::rng::Stream;
use crate::runtime::{ExecutionResult, Outcome};
use crate::sim::engine::{fleet_supervisor, ActiveFailure, Assignment, Ev, Step, VStep, World, HUMAN_DELAY};

/// Probability that a recovery negotiation falls into a planning/recovery loop.
pub const LOOP_PROBABILITY: f64 = 0.23;
pub const NEGOTIATION_HOPS: u32 = 2;
pub const LOOP_HOPS: u32 = 4;

/// Nested queries skip registry visibility checks.
const NESTED: QueryGates = QueryGates {
    visibility: false,
    trust: true,
    policy: true,
};

#[derive(Debug, Clone)]
pub(crate) enum DhmaStep {
    LocalExec,
    CommQuery {
        requester: RobotId,
    },
    Offer {
        cands: Vec<Candidate>,
        idx: usize,
        requester: RobotId,
    },
    XComm {
        req: CapabilityRequest,
        cands: Vec<Candidate>,
        idx: usize,
    },
    XPlanning {
        req: CapabilityRequest,
        cands: Vec<Candidate>,
        idx: usize,
    },
    XExec,
    ResultHop,
    ResultAtRequester,
    ResultDone,
    LocalAck,
    Negotiate {
        round: u32,
        looping: bool,
    },
    HumanDone,
}

#[derive(Debug, Clone)]
pub(crate) enum DhmaViolation {
    Nested,
    AtBroker,
    Offer,
    AtTarget,
    Evaluate,
}

pub fn sub(host: &RobotId, role: SubAgentRole) -> Principal {
    Principal::SubAgent {
        host: host.clone(),
        role,
    }
}

fn hop_event(
    w: &World,
    host: &RobotId,
    from: SubAgentRole,
    to: Principal,
    cap: &str,
    origin: &RobotId,
    owner: Option<&RobotId>,
    req: Option<&RequestId>,
    task_id: &str,
) -> AuditEvent {
    let mut ev = AuditEvent::new(
        EventKind::RequestIssued,
        w.now(),
        sub(host, from),
        Payload::Request {
            stage: RequestStage::Hop,
            capability: cap.to_string(),
            target: Some(to),
        },
    )
    .origin(origin)
    .escalation(sub(host, SubAgentRole::Recovery))
    .task(task_id)
    .attributed(Attribution::HOP);
    if let Some(o) = owner {
        ev = ev.owner(o);
    }
    if let Some(r) = req {
        ev = ev.request(r);
    }
    ev
}

fn local_hop(w: &mut World, t: usize, host: &RobotId, from: SubAgentRole, to: SubAgentRole) {
    let a = w.tasks[t].exec.clone();
    let cap = w.capability(t);
    let origin = a.as_ref().map_or_else(|| w.owner(t), |a| a.requester.clone());
    let ev = hop_event(
        w,
        host,
        from,
        sub(host, to),
        &cap,
        &origin,
        a.as_ref().map(|a| &a.executor),
        a.as_ref().map(|a| &a.req),
        &w.task_id(t),
    );
    w.log(ev);
}

pub(crate) fn segment(w: &mut World, t: usize, gap: bool) {
    let owner = w.owner(t);
    if !gap {
        w.set_assignment(t, &owner, &owner, false);
        local_hop(w, t, &owner, SubAgentRole::Planning, SubAgentRole::Execution);
        let at = w.hop();
        w.at(at, t, Step::Dhma(DhmaStep::LocalExec));
        return;
    }
    let ev = AuditEvent::new(
        EventKind::RequestIssued,
        w.now(),
        sub(&owner, SubAgentRole::Planning),
        Payload::Request {
            stage: RequestStage::Query,
            capability: w.capability(t),
            target: Some(sub(&owner, SubAgentRole::Communication)),
        },
    )
    .origin(&owner)
    .escalation(sub(&owner, SubAgentRole::Recovery))
    .task(&w.task_id(t));
    w.log(ev);
    let at = w.hop();
    w.at(at, t, Step::Dhma(DhmaStep::CommQuery { requester: owner }));
}

pub(crate) fn log_started(w: &mut World, a: &Assignment, payload: Payload) {
    let ev = AuditEvent::new(
        EventKind::ExecutionStarted,
        w.now(),
        sub(&a.executor, SubAgentRole::Execution),
        payload,
    )
    .origin(&a.requester)
    .owner(&a.executor)
    .escalation(sub(&a.executor, SubAgentRole::Recovery))
    .request(&a.req);
    w.log(ev);
}

pub(crate) fn step(w: &mut World, t: usize, s: DhmaStep) {
    match s {
        DhmaStep::LocalExec | DhmaStep::XExec => w.begin(t),
        DhmaStep::CommQuery { requester } => comm_query(w, t, requester),
        DhmaStep::Offer { cands, idx, requester } => offer(w, t, cands, idx, requester),
        DhmaStep::XComm { req, cands, idx } => {
            let cap = req.ecm.capability_name.clone();
            let ev = hop_event(
                w,
                &req.executor,
                SubAgentRole::Communication,
                sub(&req.executor, SubAgentRole::Planning),
                &cap,
                &req.requester,
                Some(&req.executor),
                Some(&req.id()),
                &req.ctx.task_id,
            );
            w.log(ev);
            let at = w.hop();
            w.at(at, t, Step::Dhma(DhmaStep::XPlanning { req, cands, idx }));
        }
        DhmaStep::XPlanning { req, cands, idx } => evaluate(w, t, req, cands, idx),
        DhmaStep::ResultHop => {
            let Some(a) = w.tasks[t].exec.clone() else { return };
            let ev = hop_event(
                w,
                &a.executor,
                SubAgentRole::Communication,
                sub(&a.requester, SubAgentRole::Communication),
                &a.req.ecm,
                &a.requester,
                Some(&a.executor),
                Some(&a.req),
                &a.req.task_id,
            );
            w.log(ev);
            let at = w.send(a.executor.as_str(), a.requester.as_str());
            w.at(at, t, Step::Dhma(DhmaStep::ResultAtRequester));
        }
        DhmaStep::ResultAtRequester => {
            let Some(a) = w.tasks[t].exec.clone() else { return };
            local_hop(w, t, &a.requester, SubAgentRole::Communication, SubAgentRole::Planning);
            let at = w.hop();
            w.at(at, t, Step::Dhma(DhmaStep::ResultDone));
        }
        DhmaStep::ResultDone => {
            let Some(a) = w.tasks[t].exec.clone() else { return };
            let ev = AuditEvent::new(
                EventKind::ExecutionCompleted,
                w.now(),
                sub(&a.requester, SubAgentRole::Planning),
                Payload::ExecutionEnd {
                    capability: a.req.ecm.clone(),
                    attempt: a.attempt,
                    result: ResultTag::Success,
                    reason: None,
                },
            )
            .origin(&a.requester)
            .owner(&a.executor)
            .escalation(sub(&a.requester, SubAgentRole::Recovery))
            .request(&a.req);
            w.log(ev);
            w.now_step(t, Step::Delivered);
        }
        DhmaStep::LocalAck => w.now_step(t, Step::Delivered),
        DhmaStep::Negotiate { round, looping } => negotiate(w, t, round, looping),
        DhmaStep::HumanDone => {
            if let Some(f) = w.tasks[t].failure.take() {
                w.log_resolution(t, &f, fleet_supervisor(), Attribution::DIRECT);
            }
            w.now_step(t, Step::Delivered);
        }
    }
}

fn comm_query(w: &mut World, t: usize, requester: RobotId) {
    let cap = w.capability(t);
    let ctx = w.ctx(t);
    let failing = w.tasks[t].failure.as_ref().map(|f| f.robot.clone());
    let cands: Vec<Candidate> = w
        .fleet
        .federation
        .query_with(&CandidateQuery::new(&requester, &cap, &ctx), NESTED)
        .into_iter()
        .filter(|c| Some(&c.robot) != failing.as_ref())
        .collect();
    let ev = AuditEvent::new(
        EventKind::CandidatesReturned,
        w.now(),
        sub(&requester, SubAgentRole::Communication),
        Payload::Candidates {
            pattern: cap,
            candidates: cands.iter().map(|c| c.robot.clone()).collect(),
        },
    )
    .origin(&requester)
    .escalation(sub(&requester, SubAgentRole::Recovery))
    .task(&w.task_id(t));
    w.log(ev);
    if cands.is_empty() {
        if failing.is_some() {
            human(w, t);
        } else {
            w.finish(t, false, Some("no_candidate"));
        }
        return;
    }
    offer(w, t, cands, 0, requester);
}

fn offer(w: &mut World, t: usize, cands: Vec<Candidate>, idx: usize, requester: RobotId) {
    let Some(cand) = cands.get(idx).cloned() else {
        w.finish(t, false, Some("all_rejected"));
        return;
    };
    let ctx = w.ctx(t);
    let auth = w
        .fleet
        .federation
        .evaluate_authority(&requester, &cand.robot, &cand.ecm, &ctx, w.fleet.runtimes.get(&cand.robot));
    let req = CapabilityRequest {
        requester: requester.clone(),
        executor: cand.robot.clone(),
        ecm: cand.ecm.clone(),
        ctx,
        issued_at: w.now(),
        auth,
        parent_link: None,
    };
    let ev = AuditEvent::new(
        EventKind::RequestIssued,
        w.now(),
        sub(&requester, SubAgentRole::Communication),
        Payload::Request {
            stage: RequestStage::Formulated,
            capability: cand.ecm.capability_name.clone(),
            target: Some(sub(&cand.robot, SubAgentRole::Communication)),
        },
    )
    .origin(&requester)
    .owner(&cand.robot)
    .escalation(sub(&requester, SubAgentRole::Recovery))
    .request(&req.id());
    w.log(ev);
    let at = w.send(requester.as_str(), cand.robot.as_str());
    w.at(at, t, Step::Dhma(DhmaStep::XComm { req, cands, idx }));
}

fn evaluate(w: &mut World, t: usize, req: CapabilityRequest, cands: Vec<Candidate>, idx: usize) {
    let x = req.executor.clone();
    let now = w.now();
    let fed = &w.fleet.federation;
    let composed = fed.composed(&req.requester, &x, &req.ecm, &req.ctx);
    let effective = if composed == PolicyOutcome::Review {
        PolicyOutcome::Allow
    } else {
        composed
    };
    let advertised = fed.registry.is_advertised(&x, &req.ecm.capability_name);
    let rt = &w.fleet.runtimes[&x];
    let mut planning = rt.evaluate_incoming_request(&req, &req.auth, effective, advertised, now);
    if planning.is_accept() && w.running.contains_key(&x) {
        planning = EvalOutcome::Defer {
            until: rt.earliest_start(now),
        };
    }
    let rejected = matches!(planning, EvalOutcome::Reject { .. });
    let execution = if rejected { planning.clone() } else { EvalOutcome::Accept };
    let base = |role, kind, payload| {
        AuditEvent::new(kind, now, sub(&x, role), payload)
            .origin(&req.requester)
            .owner(&x)
            .escalation(sub(&x, SubAgentRole::Recovery))
            .request(&req.id())
    };
    let mut events = Vec::new();
    for (role, result) in [(SubAgentRole::Planning, &planning), (SubAgentRole::Execution, &execution)] {
        events.push(base(
            role,
            EventKind::RequestEvaluated,
            Payload::Evaluation {
                capability: req.ecm.capability_name.clone(),
                composed,
                result: result.clone(),
            },
        ));
    }
    if !rejected && !planning.is_accept() {
        events.push(base(
            SubAgentRole::Execution,
            EventKind::AuthorityConflictObserved,
            Payload::Conflict {
                reason: "contradictory_evaluation".into(),
                claimants: vec![sub(&x, SubAgentRole::Planning), sub(&x, SubAgentRole::Execution)],
            },
        ));
    }
    if !rejected {
        if let Some(other) = w.claim(&req.ctx.task_id, &req.ecm.capability_name, &x, &req.requester) {
            events.push(base(
                SubAgentRole::Planning,
                EventKind::AuthorityConflictObserved,
                Payload::Conflict {
                    reason: "duplicate_claim".into(),
                    claimants: vec![Principal::robot(&other), Principal::robot(&req.requester)],
                },
            ));
        }
    }
    for ev in events {
        w.log(ev);
    }
    if rejected {
        let at = w.send(x.as_str(), req.requester.as_str());
        let requester = req.requester.clone();
        w.at(at, t, Step::Dhma(DhmaStep::Offer { cands, idx: idx + 1, requester }));
        return;
    }
    w.tasks[t].exec = Some(Assignment {
        executor: x.clone(),
        requester: req.requester.clone(),
        req: req.id(),
        attempt: 0,
        delegated: true,
    });
    local_hop(w, t, &x, SubAgentRole::Planning, SubAgentRole::Execution);
    let at = w.hop();
    w.at(at, t, Step::Dhma(DhmaStep::XExec));
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
    for role in [SubAgentRole::Execution, SubAgentRole::Planning] {
        let ev = AuditEvent::new(
            EventKind::ExecutionCompleted,
            w.now(),
            sub(&a.executor, role),
            Payload::ExecutionEnd {
                capability: a.req.ecm.clone(),
                attempt: a.attempt,
                result: tag,
                reason: reason.clone(),
            },
        )
        .origin(&a.requester)
        .escalation(sub(&a.executor, SubAgentRole::Recovery))
        .owner(&a.executor)
        .request(&a.req);
        let ev = if role == SubAgentRole::Planning {
            ev.attributed(Attribution::HOP)
        } else {
            ev
        };
        w.log(ev);
    }
    if !result.outcome.is_success() {
        failure(w, t, result.duration);
        return;
    }
    if a.delegated {
        local_hop(w, t, &a.executor, SubAgentRole::Execution, SubAgentRole::Communication);
        let at = w.hop();
        w.at(at, t, Step::Dhma(DhmaStep::ResultHop));
    } else {
        local_hop(w, t, &a.executor, SubAgentRole::Execution, SubAgentRole::Planning);
        let at = w.hop();
        w.at(at, t, Step::Dhma(DhmaStep::LocalAck));
    }
}

fn recovery_event(w: &World, t: usize, robot: &RobotId, role: SubAgentRole, id: u64) -> AuditEvent {
    AuditEvent::new(
        EventKind::RecoveryTriggered,
        w.now(),
        sub(robot, role),
        Payload::Recovery {
            failure_id: id,
            level: RecoveryLevel::Local,
            resolved: None,
        },
    )
    .origin(&w.owner(t))
    .owner(robot)
    .escalation(sub(robot, SubAgentRole::Recovery))
    .task(&w.task_id(t))
}

fn failure(w: &mut World, t: usize, spent: f64) {
    let Some(a) = w.tasks[t].exec.clone() else { return };
    let x = a.executor.clone();
    if w.tasks[t].failure.is_none() {
        let id = w.new_failure_id();
        local_hop(w, t, &x, SubAgentRole::Execution, SubAgentRole::Recovery);
        for role in [SubAgentRole::Recovery, SubAgentRole::Planning] {
            let ev = recovery_event(w, t, &x, role, id);
            w.log(ev);
        }
        w.tasks[t].failure = Some(ActiveFailure {
            id,
            robot: x,
            level: RecoveryLevel::Local,
            retries: 0,
            time_used: spent,
        });
        let looping = w.rng.chance(Stream::Coordination, LOOP_PROBABILITY);
        let at = w.hop();
        w.at(at, t, Step::Dhma(DhmaStep::Negotiate { round: 0, looping }));
        return;
    }
    let budget = w.fleet.runtimes[&x].recovery.budget;
    let f = w.tasks[t].failure.as_mut().expect("failure present");
    f.time_used += spent;
    if f.level == RecoveryLevel::Local && f.robot == x && f.retries < budget.n_max && f.time_used <= budget.t_max {
        retry(w, t);
        return;
    }
    if f.level == RecoveryLevel::Local {
        let (id, robot) = (f.id, f.robot.clone());
        escalation(w, t, &robot, id, RecoveryLevel::Local, RecoveryLevel::Peer);
        f_level(w, t, RecoveryLevel::Peer);
        local_hop(w, t, &robot, SubAgentRole::Recovery, SubAgentRole::Communication);
        let at = w.hop();
        w.at(at, t, Step::Dhma(DhmaStep::CommQuery { requester: robot }));
        return;
    }
    human(w, t);
}

fn f_level(w: &mut World, t: usize, level: RecoveryLevel) {
    w.set_level(t, level);
}

fn escalation(w: &mut World, t: usize, robot: &RobotId, id: u64, from: RecoveryLevel, to: RecoveryLevel) {
    let ev = AuditEvent::new(
        EventKind::RecoveryEscalated,
        w.now(),
        sub(robot, SubAgentRole::Recovery),
        Payload::Escalation {
            failure_id: id,
            from,
            to,
        },
    )
    .origin(&w.owner(t))
    .owner(robot)
    .escalation(sub(robot, SubAgentRole::Recovery))
    .task(&w.task_id(t));
    w.log(ev);
}

fn retry(w: &mut World, t: usize) {
    let Some(f) = w.tasks[t].failure.as_mut() else { return };
    f.retries += 1;
    let attempt = f.retries;
    if let Some(a) = w.tasks[t].exec.as_mut() {
        a.attempt = attempt;
    }
    w.begin(t);
}

fn negotiate(w: &mut World, t: usize, round: u32, looping: bool) {
    let Some(f) = w.tasks[t].failure.clone() else { return };
    let limit = if looping { LOOP_HOPS } else { NEGOTIATION_HOPS };
    if round < limit {
        let (from, to) = if round % 2 == 0 {
            (SubAgentRole::Recovery, SubAgentRole::Planning)
        } else {
            (SubAgentRole::Planning, SubAgentRole::Recovery)
        };
        local_hop(w, t, &f.robot, from, to);
        let at = w.hop();
        w.at(
            at,
            t,
            Step::Dhma(DhmaStep::Negotiate {
                round: round + 1,
                looping,
            }),
        );
        return;
    }
    if looping {
        human(w, t);
    } else {
        retry(w, t);
    }
}

/// No fleet layer: anything the robot cannot settle goes to the human supervisor.
fn human(w: &mut World, t: usize) {
    let Some(f) = w.tasks[t].failure.clone() else { return };
    escalation(w, t, &f.robot, f.id, f.level, RecoveryLevel::Human);
    let ev = AuditEvent::new(
        EventKind::SupervisorDecision,
        w.now(),
        fleet_supervisor(),
        Payload::Decision {
            case_id: f.id,
            decision: "manual_recovery".into(),
            winner: Some(f.robot.clone()),
        },
    )
    .origin(&w.owner(t))
    .owner(&f.robot)
    .escalation(fleet_supervisor())
    .task(&w.task_id(t));
    w.log(ev);
    w.set_level(t, RecoveryLevel::Human);
    let at = w.supervisor_delay(HUMAN_DELAY);
    w.at(at, t, Step::Dhma(DhmaStep::HumanDone));
}

/// The attacker's communication agent borrows a peer's nested query and authority.
pub(crate) fn violation(w: &mut World, i: usize, v: VStep) {
    let va = w.script.violations[i].clone();
    let task_id = w.task_id(va.task);
    let host = w.tasks[va.task].inst.owner.clone();
    let ctx = w.ctx(va.task);
    let sched = |w: &mut World, at, s| w.clock.schedule(at, Ev::Violation(i, VStep::Dhma(s)));
    let x = va.target.clone();
    let rid = RequestId {
        task_id: task_id.clone(),
        requester: va.attacker.clone(),
        executor: x.clone(),
        ecm: va.capability.clone(),
        issued_at: va.at,
    };
    match v {
        VStep::Start => {
            let ev = AuditEvent::new(
                EventKind::RequestIssued,
                w.now(),
                sub(&va.attacker, SubAgentRole::Planning),
                Payload::Request {
                    stage: RequestStage::Query,
                    capability: va.capability.clone(),
                    target: Some(sub(&va.attacker, SubAgentRole::Communication)),
                },
            )
            .origin(&va.attacker)
            .escalation(sub(&va.attacker, SubAgentRole::Recovery))
            .task(&task_id);
            w.log(ev);
            let at = w.hop();
            sched(w, at, DhmaViolation::Nested);
        }
        VStep::Dhma(DhmaViolation::Nested) => {
            let ev = hop_event(
                w,
                &va.attacker,
                SubAgentRole::Communication,
                sub(&host, SubAgentRole::Communication),
                &va.capability,
                &va.attacker,
                None,
                None,
                &task_id,
            );
            w.log(ev);
            let at = w.send(va.attacker.as_str(), host.as_str());
            sched(w, at, DhmaViolation::AtBroker);
        }
        VStep::Dhma(DhmaViolation::AtBroker) => {
            let cands = w
                .fleet
                .federation
                .query_with(&CandidateQuery::new(&host, &va.capability, &ctx), NESTED);
            let ev = AuditEvent::new(
                EventKind::CandidatesReturned,
                w.now(),
                sub(&host, SubAgentRole::Communication),
                Payload::Candidates {
                    pattern: va.capability.clone(),
                    candidates: cands.iter().map(|c| c.robot.clone()).collect(),
                },
            )
            .origin(&va.attacker)
            .escalation(sub(&host, SubAgentRole::Recovery))
            .task(&task_id);
            w.log(ev);
            if cands.iter().any(|c| c.robot == x) {
                let at = w.send(host.as_str(), va.attacker.as_str());
                sched(w, at, DhmaViolation::Offer);
            }
        }
        VStep::Dhma(DhmaViolation::Offer) => {
            let ev = AuditEvent::new(
                EventKind::RequestIssued,
                w.now(),
                sub(&va.attacker, SubAgentRole::Communication),
                Payload::Request {
                    stage: RequestStage::Formulated,
                    capability: va.capability.clone(),
                    target: Some(sub(&x, SubAgentRole::Communication)),
                },
            )
            .origin(&va.attacker)
            .owner(&x)
            .escalation(sub(&va.attacker, SubAgentRole::Recovery))
            .request(&rid);
            w.log(ev);
            let at = w.send(va.attacker.as_str(), x.as_str());
            sched(w, at, DhmaViolation::AtTarget);
        }
        VStep::Dhma(DhmaViolation::AtTarget) => {
            let ev = hop_event(
                w,
                &x,
                SubAgentRole::Communication,
                sub(&x, SubAgentRole::Planning),
                &va.capability,
                &va.attacker,
                Some(&x),
                Some(&rid),
                &task_id,
            );
            w.log(ev);
            let at = w.hop();
            sched(w, at, DhmaViolation::Evaluate);
        }
        VStep::Dhma(DhmaViolation::Evaluate) => {
            let ecm = w.ecm(&va.capability);
            let fed = &w.fleet.federation;
            let borrowed = fed.evaluate_authority(&host, &x, &ecm, &ctx, w.fleet.runtimes.get(&x));
            let composed = fed.composed(&host, &x, &ecm, &ctx);
            let result = if borrowed.a_req && composed != PolicyOutcome::Deny {
                EvalOutcome::Accept
            } else {
                EvalOutcome::Reject {
                    reason: "trust_insufficient".into(),
                }
            };
            let now = w.now();
            for role in [SubAgentRole::Planning, SubAgentRole::Execution] {
                let ev = AuditEvent::new(
                    EventKind::RequestEvaluated,
                    now,
                    sub(&x, role),
                    Payload::Evaluation {
                        capability: va.capability.clone(),
                        composed,
                        result: result.clone(),
                    },
                )
                .origin(&va.attacker)
                .owner(&x)
                .escalation(sub(&x, SubAgentRole::Recovery))
                .request(&rid);
                w.log(ev);
            }
            if result.is_accept() {
                if let Some(other) = w.claim(&task_id, &va.capability, &x, &va.attacker) {
                    let ev = AuditEvent::new(
                        EventKind::AuthorityConflictObserved,
                        now,
                        sub(&x, SubAgentRole::Planning),
                        Payload::Conflict {
                            reason: "duplicate_claim".into(),
                            claimants: vec![Principal::robot(&other), Principal::robot(&va.attacker)],
                        },
                    )
                    .origin(&va.attacker)
                    .owner(&x)
                    .escalation(sub(&x, SubAgentRole::Recovery))
                    .request(&rid);
                    w.log(ev);
                }
            }
        }
        other => w.fail(format!("unexpected violation step {other:?} for the hierarchical baseline")),
    }
}
