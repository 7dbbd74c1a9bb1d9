//! Hand-scripted audit traces for the governance-locality worked examples.
#![allow(dead_code)]

use fsar_core::audit::{Attribution, AuditEvent, AuditTrace, EvalOutcome, EventKind, Payload, Principal, RequestStage, ResultTag};
use fsar_core::{PolicyOutcome, RecoveryLevel, RequestId, RobotId, SimTime};

pub const TASK: &str = "s1_delivery";

/// Fixture times are written in milliseconds.
pub fn ms(v: u64) -> SimTime {
    SimTime(v * 1000)
}

pub fn rid(s: &str) -> RobotId {
    RobotId::new(s)
}

pub fn robot(s: &str) -> Principal {
    Principal::Robot(rid(s))
}

pub fn request(requester: &str, executor: &str, cap: &str, at: u64) -> RequestId {
    RequestId {
        task_id: TASK.into(),
        requester: rid(requester),
        executor: rid(executor),
        ecm: cap.into(),
        issued_at: ms(at),
    }
}

pub fn started(at: u64, by: Principal, origin: &str, owner: &str, cap: &str) -> AuditEvent {
    AuditEvent::new(
        EventKind::ExecutionStarted,
        ms(at),
        by,
        Payload::ExecutionStart {
            capability: cap.into(),
            attempt: 0,
            expected_end: ms(at + 1000),
        },
    )
    .origin(&rid(origin))
    .owner(&rid(owner))
    .task(TASK)
}

pub fn completed(at: u64, by: Principal, origin: &str, owner: &str, cap: &str) -> AuditEvent {
    AuditEvent::new(
        EventKind::ExecutionCompleted,
        ms(at),
        by,
        Payload::ExecutionEnd {
            capability: cap.into(),
            attempt: 0,
            result: ResultTag::Success,
            reason: None,
        },
    )
    .origin(&rid(origin))
    .owner(&rid(owner))
    .task(TASK)
}

pub fn issued(at: u64, by: Principal, origin: &str, stage: RequestStage, cap: &str) -> AuditEvent {
    AuditEvent::new(
        EventKind::RequestIssued,
        ms(at),
        by,
        Payload::Request {
            stage,
            capability: cap.into(),
            target: None,
        },
    )
    .origin(&rid(origin))
    .task(TASK)
}

pub fn evaluated(at: u64, by: Principal, req: &RequestId) -> AuditEvent {
    AuditEvent::new(
        EventKind::RequestEvaluated,
        ms(at),
        by,
        Payload::Evaluation {
            capability: req.ecm.clone(),
            composed: PolicyOutcome::Allow,
            result: EvalOutcome::Accept,
        },
    )
    .origin(&req.requester)
    .owner(&req.executor)
    .request(req)
}

fn build(events: Vec<AuditEvent>) -> AuditTrace {
    let mut t = AuditTrace::new();
    for e in events {
        t.append_unchecked(e).expect("fixture events are time ordered");
    }
    t
}

/// Door-relay run under FSAR: ten decisions, one resolved only through the fleet layer.
pub fn fsar_door_relay() -> AuditTrace {
    let door = request("robot_a", "robot_b", "door.open.secure", 2000);
    build(vec![
        started(0, robot("robot_a"), "robot_a", "robot_a", "navigate.indoor"),
        completed(1500, robot("robot_a"), "robot_a", "robot_a", "navigate.indoor"),
        issued(1500, robot("robot_a"), "robot_a", RequestStage::Query, "door.*"),
        AuditEvent::new(
            EventKind::CandidatesReturned,
            ms(1600),
            Principal::Federation("registry".into()),
            Payload::Candidates {
                pattern: "door.*".into(),
                candidates: vec![rid("robot_b")],
            },
        )
        .origin(&rid("robot_a"))
        .task(TASK),
        issued(2000, robot("robot_a"), "robot_a", RequestStage::Formulated, "door.open.secure").request(&door),
        evaluated(2100, robot("robot_b"), &door),
        started(2100, robot("robot_b"), "robot_a", "robot_b", "door.open.secure").request(&door),
        completed(4000, robot("robot_b"), "robot_a", "robot_b", "door.open.secure").request(&door),
        // Resolution recorded by the fleet recovery orchestrator.
        AuditEvent::new(
            EventKind::RecoveryTriggered,
            ms(4100),
            Principal::Federation("recovery".into()),
            Payload::Recovery {
                failure_id: 1,
                level: RecoveryLevel::Peer,
                resolved: Some(true),
            },
        )
        .origin(&rid("robot_a"))
        .owner(&rid("robot_b"))
        .escalation(Principal::Federation("recovery".into()))
        .task(TASK)
        .attributed(Attribution::TRAVERSAL),
        started(4200, robot("robot_a"), "robot_a", "robot_a", "carry.package"),
        completed(7000, robot("robot_a"), "robot_a", "robot_a", "carry.package"),
    ])
}

fn relay(e: AuditEvent) -> AuditEvent {
    e.escalation(Principal::Coordinator).attributed(Attribution::RELAY)
}

/// The same run under the central controller: seven coordinator-mediated decisions, three local.
pub fn cfc_door_relay() -> AuditTrace {
    let door = request("robot_a", "robot_b", "door.open.secure", 2000);
    let carry = request("robot_a", "robot_a", "carry.package", 5000);
    build(vec![
        started(0, robot("robot_a"), "robot_a", "robot_a", "navigate.indoor"),
        completed(1500, robot("robot_a"), "robot_a", "robot_a", "navigate.indoor"),
        issued(1500, robot("robot_a"), "robot_a", RequestStage::Query, "door.*"),
        relay(issued(1600, Principal::Coordinator, "robot_a", RequestStage::Dispatch, "door.open.secure")),
        relay(evaluated(2000, Principal::Coordinator, &door)),
        relay(started(2100, Principal::Coordinator, "robot_a", "robot_b", "door.open.secure").request(&door)),
        relay(completed(4000, Principal::Coordinator, "robot_a", "robot_b", "door.open.secure").request(&door)),
        relay(issued(4100, Principal::Coordinator, "robot_a", RequestStage::Dispatch, "carry.package")),
        relay(evaluated(5000, Principal::Coordinator, &carry)),
        relay(started(5100, Principal::Coordinator, "robot_a", "robot_a", "carry.package").request(&carry)),
    ])
}
