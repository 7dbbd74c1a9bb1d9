use std::collections::BTreeMap;

use fsar_core::audit::{AuditEvent, AuditTrace, EventKind, Payload, Principal};
use fsar_core::metrics::{
    audit_attributability, authority_conflicts, compute, governance_locality, policy_violations, reassignment_latency,
    recovery_containment, Metric,
};
use fsar_core::sim::{run_scenario, Arch, RunConfig};
use fsar_core::{ContextPredicate, PolicyOutcome, PolicyScope, RecoveryLevel, SimTime, TaskContext};
use proptest::prelude::*;

#[path = "support/fixtures.rs"]
mod fixtures;
use fixtures::*;

fn trace(events: Vec<AuditEvent>) -> AuditTrace {
    let mut t = AuditTrace::new();
    for e in events {
        t.append_unchecked(e).unwrap();
    }
    t
}

fn detect(at: u64, id: u64) -> AuditEvent {
    AuditEvent::new(
        EventKind::RecoveryTriggered,
        ms(at),
        robot("robot_d"),
        Payload::Recovery {
            failure_id: id,
            level: RecoveryLevel::Local,
            resolved: None,
        },
    )
    .origin(&rid("robot_d"))
    .owner(&rid("robot_d"))
    .escalation(robot("robot_d"))
    .task(TASK)
}

fn resolve(at: u64, id: u64, level: RecoveryLevel) -> AuditEvent {
    AuditEvent::new(
        EventKind::RecoveryTriggered,
        ms(at),
        robot("robot_d"),
        Payload::Recovery {
            failure_id: id,
            level,
            resolved: Some(true),
        },
    )
    .origin(&rid("robot_d"))
    .owner(&rid("robot_d"))
    .escalation(robot("robot_d"))
    .task(TASK)
}

fn escalate(at: u64, id: u64, from: RecoveryLevel, to: RecoveryLevel) -> AuditEvent {
    AuditEvent::new(
        EventKind::RecoveryEscalated,
        ms(at),
        robot("robot_d"),
        Payload::Escalation { failure_id: id, from, to },
    )
    .origin(&rid("robot_d"))
    .owner(&rid("robot_d"))
    .escalation(robot("robot_d"))
    .task(TASK)
}

#[test]
fn fsar_worked_example_scores_nine_tenths() {
    let t = fsar_door_relay();
    assert_eq!(t.events.iter().filter(|e| e.kind.is_decision()).count(), 10);
    assert!((governance_locality(&t) - 0.90).abs() < 1e-12);
}

#[test]
fn cfc_worked_example_scores_three_tenths() {
    let t = cfc_door_relay();
    assert_eq!(t.events.iter().filter(|e| e.kind.is_decision()).count(), 10);
    assert!((governance_locality(&t) - 0.30).abs() < 1e-12);
}

#[test]
fn single_local_decision_is_fully_local() {
    let t = trace(vec![started(0, robot("robot_a"), "robot_a", "robot_a", "navigate.indoor")]);
    assert_eq!(governance_locality(&t), 1.0);
    assert_eq!(audit_attributability(&t), 1.0);
}

#[test]
fn two_principals_claiming_one_decision_lose_locality() {
    let e = evaluated(0, robot("robot_b"), &request("robot_a", "robot_b", "door.open.secure", 0));
    let mut twin = e.clone();
    twin.principal = robot("robot_c");
    let t = trace(vec![e, twin]);
    assert_eq!(governance_locality(&t), 0.0);
    assert_eq!(authority_conflicts(&t), 1.0);
}

#[test]
fn empty_trace_has_no_conflicts() {
    assert_eq!(authority_conflicts(&AuditTrace::new()), 0.0);
}

#[test]
fn double_assignment_is_one_conflict() {
    let a = request("robot_a", "robot_b", "door.open.secure", 0);
    let d = request("robot_d", "robot_b", "door.open.secure", 5);
    let t = trace(vec![
        started(10, robot("robot_b"), "robot_a", "robot_b", "door.open.secure").request(&a),
        started(20, robot("robot_b"), "robot_d", "robot_b", "door.open.secure").request(&d),
        completed(900, robot("robot_b"), "robot_a", "robot_b", "door.open.secure").request(&a),
        completed(1000, robot("robot_b"), "robot_d", "robot_b", "door.open.secure").request(&d),
    ]);
    assert_eq!(authority_conflicts(&t), 1.0);
}

#[test]
fn sequential_executions_do_not_conflict() {
    let a = request("robot_a", "robot_b", "door.open.secure", 0);
    let d = request("robot_d", "robot_b", "door.open.secure", 5);
    let t = trace(vec![
        started(10, robot("robot_b"), "robot_a", "robot_b", "door.open.secure").request(&a),
        completed(900, robot("robot_b"), "robot_a", "robot_b", "door.open.secure").request(&a),
        started(900, robot("robot_b"), "robot_d", "robot_b", "door.open.secure").request(&d),
        completed(1000, robot("robot_b"), "robot_d", "robot_b", "door.open.secure").request(&d),
    ]);
    assert_eq!(authority_conflicts(&t), 0.0);
}

#[test]
fn observed_conflicts_are_counted() {
    let e = AuditEvent::new(
        EventKind::AuthorityConflictObserved,
        SimTime(0),
        Principal::Coordinator,
        Payload::Conflict {
            reason: "assignment_contention".into(),
            claimants: vec![robot("robot_a"), robot("robot_d")],
        },
    )
    .owner(&rid("robot_b"));
    assert_eq!(authority_conflicts(&trace(vec![e])), 1.0);
}

#[test]
fn attributability_counts_missing_and_traversed_fields() {
    let fsar = fsar_door_relay();
    // The traversal-resolved event is the only unattributable one.
    assert!((audit_attributability(&fsar) - 10.0 / 11.0).abs() < 1e-12);
    let mut bare = issued(0, robot("robot_a"), "robot_a", fsar_core::audit::RequestStage::Query, "door.*");
    bare.request_origin = None;
    assert_eq!(audit_attributability(&trace(vec![bare])), 0.0);
}

#[test]
fn containment_by_resolution_level() {
    let local = trace(vec![detect(1000, 1), resolve(4000, 1, RecoveryLevel::Local)]);
    assert_eq!(recovery_containment(&local), Some(1.0));
    let human = trace(vec![
        detect(1000, 1),
        escalate(2000, 1, RecoveryLevel::Local, RecoveryLevel::Peer),
        escalate(3000, 1, RecoveryLevel::Peer, RecoveryLevel::Fleet),
        escalate(3500, 1, RecoveryLevel::Fleet, RecoveryLevel::Human),
        resolve(9000, 1, RecoveryLevel::Human),
    ]);
    assert_eq!(recovery_containment(&human), Some(0.0));
    assert_eq!(recovery_containment(&fsar_door_relay()), None);
}

#[test]
fn latency_runs_to_first_handoff_or_local_resolution() {
    let local = trace(vec![detect(2000, 1), resolve(4000, 1, RecoveryLevel::Local)]);
    assert!((reassignment_latency(&local).unwrap() - 2.0).abs() < 1e-9);
    let escalated = trace(vec![
        detect(2000, 1),
        escalate(5500, 1, RecoveryLevel::Local, RecoveryLevel::Peer),
        resolve(8000, 1, RecoveryLevel::Peer),
        detect(10_000, 2),
        resolve(11_000, 2, RecoveryLevel::Local),
    ]);
    // (3.5 + 1.0) / 2
    assert!((reassignment_latency(&escalated).unwrap() - 2.25).abs() < 1e-9);
    assert_eq!(reassignment_latency(&fsar_door_relay()), None);
}

#[test]
fn violations_replay_composed_policy() {
    let mut policies = BTreeMap::new();
    policies.insert(
        rid("robot_b"),
        PolicyScope::allow_all().with_rule("door.*", ContextPredicate::Always, PolicyOutcome::Deny),
    );
    let mut contexts = BTreeMap::new();
    contexts.insert(TASK.to_string(), TaskContext::new(TASK));
    assert_eq!(policy_violations(&AuditTrace::new(), &policies, &contexts), 0.0);
    assert_eq!(policy_violations(&fsar_door_relay(), &policies, &contexts), 1.0);
    assert_eq!(policy_violations(&fsar_door_relay(), &BTreeMap::new(), &contexts), 0.0);
}

#[test]
fn full_fsar_runs_replay_without_violations() {
    for s in 1..=5 {
        for seed in 0..10 {
            let r = run_scenario(&RunConfig::new(Arch::Fsar, s, 4, seed).unwrap()).unwrap();
            assert_eq!(compute(&r).policy_violations, 0.0, "scenario {s} seed {seed}");
        }
    }
}

fn arch() -> impl Strategy<Value = Arch> {
    prop_oneof![Just(Arch::Fsar), Just(Arch::Cfc), Just(Arch::Dhma)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn metrics_are_bounded_and_pure(a in arch(), s in 1u8..=5, seed in 0u64..10_000, n in prop_oneof![Just(4usize), Just(8)]) {
        let r = run_scenario(&RunConfig::new(a, s, n, seed).unwrap()).unwrap();
        let m = compute(&r);
        prop_assert_eq!(m, compute(&r));
        for f in [Metric::TaskSuccess, Metric::GovernanceLocality, Metric::AuditAttributability, Metric::RecoveryContainment, Metric::HumanInterventions] {
            if let Some(v) = m.get(f) {
                prop_assert!((0.0..=1.0).contains(&v), "{:?} = {}", f, v);
            }
        }
        prop_assert!(m.authority_conflicts >= 0.0);
        prop_assert!(m.policy_violations >= 0.0);
        if let Some(l) = m.reassignment_latency {
            prop_assert!(l >= 0.0);
        }
    }
}
