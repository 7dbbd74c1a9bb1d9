//! The five scenario scripts and their instantiation for a given fleet.

use serde::{Deserialize, Serialize};

use crate::model::{RobotId, TaskContext};
use crate::rng::{RngStreams, Stream};
use crate::time::SimTime;

use super::fleet::{duration_bounds, Fleet, Role};
use super::SimError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SegmentSpec {
    pub capability: String,
    /// Checkpoint label reached when this segment completes.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub checkpoint: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomTag {
    pub tag: String,
    pub p: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskTemplate {
    pub name: String,
    pub owner: Role,
    #[serde(default)]
    pub priority: i64,
    #[serde(default)]
    pub tags: Vec<String>,
    #[serde(default)]
    pub random_tags: Vec<RandomTag>,
    /// Release offset in seconds; a startup jitter is added per run.
    #[serde(default)]
    pub release: f64,
    /// Relative deadline in seconds after arrival.
    pub deadline: f64,
    pub segments: Vec<SegmentSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationPlan {
    pub attacker: Role,
    pub target: Role,
    pub capability: String,
    /// Index of the task whose context the attempt borrows.
    pub task: usize,
    /// Delay window after that task's arrival.
    pub delay: (f64, f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InjectionPlan {
    #[serde(default)]
    pub p_fail: f64,
    #[serde(default)]
    pub target: Option<Role>,
    /// Index of the task whose execution window hosts the degradation.
    #[serde(default)]
    pub window_task: usize,
    #[serde(default)]
    pub violation: Option<ViolationPlan>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    pub id: u8,
    pub name: String,
    pub fleet_template: Vec<Role>,
    pub tasks: Vec<TaskTemplate>,
    pub injection: InjectionPlan,
    pub time_budget: f64,
}

pub const P_FAIL: f64 = 0.3;
pub const TIME_BUDGET: f64 = 300.0;
pub const ARRIVAL_JITTER: f64 = 1.0;

fn seg(cap: &str) -> SegmentSpec {
    SegmentSpec {
        capability: cap.to_string(),
        checkpoint: None,
    }
}

fn seg_cp(cap: &str, cp: &str) -> SegmentSpec {
    SegmentSpec {
        capability: cap.to_string(),
        checkpoint: Some(cp.to_string()),
    }
}

fn task(name: &str, owner: Role, priority: i64, deadline: f64, segments: Vec<SegmentSpec>) -> TaskTemplate {
    TaskTemplate {
        name: name.to_string(),
        owner,
        priority,
        tags: Vec::new(),
        random_tags: Vec::new(),
        release: 0.0,
        deadline,
        segments,
    }
}

impl ScenarioSpec {
    pub fn builtin(id: u8) -> Result<ScenarioSpec, SimError> {
        let all = vec![Role::A, Role::B, Role::C, Role::D];
        let none = InjectionPlan {
            p_fail: 0.0,
            target: None,
            window_task: 0,
            violation: None,
        };
        let spec = match id {
            1 => ScenarioSpec {
                id,
                name: "door_relay".into(),
                fleet_template: all,
                tasks: vec![task(
                    "delivery",
                    Role::A,
                    1,
                    13.0,
                    vec![
                        seg("navigate.indoor"),
                        seg_cp("door.open.secure", "door_open"),
                        seg("carry.package"),
                        seg("handover.dropoff"),
                    ],
                )],
                injection: none,
                time_budget: TIME_BUDGET,
            },
            2 => ScenarioSpec {
                id,
                name: "multi_robot_handoff".into(),
                fleet_template: all,
                tasks: vec![task(
                    "heavy_delivery",
                    Role::A,
                    1,
                    15.0,
                    vec![
                        seg("navigate.indoor"),
                        seg_cp("door.open.secure", "door_open"),
                        seg_cp("carry.heavy", "at_dropoff"),
                        seg("handover.dropoff"),
                    ],
                )],
                injection: none,
                time_budget: TIME_BUDGET,
            },
            3 => ScenarioSpec {
                id,
                name: "degraded_recovery".into(),
                fleet_template: all,
                tasks: vec![task(
                    "heavy_pick",
                    Role::D,
                    1,
                    36.0,
                    vec![
                        seg("navigate.indoor"),
                        seg_cp("grasp.robust", "grasped"),
                        seg_cp("carry.heavy", "carried"),
                        seg("navigate.indoor"),
                    ],
                )],
                injection: InjectionPlan {
                    p_fail: P_FAIL,
                    target: Some(Role::D),
                    window_task: 0,
                    violation: None,
                },
                time_budget: TIME_BUDGET,
            },
            4 => {
                let mut inspect = task(
                    "private_inspection",
                    Role::B,
                    1,
                    9.0,
                    vec![seg("navigate.indoor"), seg("inspect.private_zone")],
                );
                inspect.tags = vec!["privacy_cleared".into()];
                let mut courier = task(
                    "basic_delivery",
                    Role::A,
                    1,
                    12.0,
                    vec![seg("navigate.indoor"), seg("door.open.basic"), seg("carry.package")],
                );
                courier.release = 0.5;
                ScenarioSpec {
                    id,
                    name: "trust_scoped_access".into(),
                    fleet_template: all,
                    tasks: vec![inspect, courier],
                    injection: InjectionPlan {
                        p_fail: 0.0,
                        target: None,
                        window_task: 0,
                        violation: Some(ViolationPlan {
                            attacker: Role::D,
                            target: Role::C,
                            capability: "inspect.private_zone".into(),
                            task: 0,
                            delay: (6.0, 9.0),
                        }),
                    },
                    time_budget: TIME_BUDGET,
                }
            }
            5 => {
                let t5a = task(
                    "secure_delivery",
                    Role::A,
                    2,
                    30.0,
                    vec![
                        seg("navigate.indoor"),
                        seg_cp("door.open.secure", "door_open"),
                        seg("carry.package"),
                        seg("handover.dropoff"),
                    ],
                );
                let mut t5b = task(
                    "time_critical_delivery",
                    Role::B,
                    3,
                    22.0,
                    vec![
                        seg("navigate.indoor"),
                        seg_cp("carry.package", "delivered"),
                        seg("door.open.basic"),
                    ],
                );
                t5b.tags = vec!["time_critical".into()];
                t5b.random_tags = vec![RandomTag {
                    tag: "emergency".into(),
                    p: 0.5,
                }];
                let mut t5c = task(
                    "oversize_transfer",
                    Role::D,
                    1,
                    40.0,
                    vec![
                        seg("navigate.indoor"),
                        seg_cp("carry.package", "handed_over"),
                        seg("carry.heavy"),
                    ],
                );
                t5c.tags = vec!["oversize".into()];
                t5c.random_tags = vec![RandomTag {
                    tag: "after_hours".into(),
                    p: 0.25,
                }];
                ScenarioSpec {
                    id,
                    name: "concurrent_contention".into(),
                    fleet_template: all,
                    tasks: vec![t5a, t5b, t5c],
                    injection: InjectionPlan {
                        p_fail: P_FAIL,
                        target: Some(Role::A),
                        window_task: 0,
                        violation: None,
                    },
                    time_budget: TIME_BUDGET,
                }
            }
            other => return Err(SimError::UnknownScenario(other)),
        };
        Ok(spec)
    }

    pub fn from_json(text: &str) -> Result<ScenarioSpec, serde_json::Error> {
        serde_json::from_str(text)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    pub fn all() -> Vec<ScenarioSpec> {
        (1..=5).map(|i| ScenarioSpec::builtin(i).expect("builtin scenario")).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskInstance {
    pub index: usize,
    pub template: usize,
    pub group: usize,
    pub owner: RobotId,
    pub ctx: TaskContext,
    pub segments: Vec<SegmentSpec>,
    pub arrival: SimTime,
    pub deadline: SimTime,
}

impl TaskInstance {
    /// Sum of segment duration midpoints, used as the nominal execution window.
    pub fn nominal_span(&self) -> f64 {
        self.segments
            .iter()
            .map(|s| {
                let (lo, hi) = duration_bounds(&s.capability);
                (lo + hi) / 2.0
            })
            .sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Degradation {
    pub robot: RobotId,
    pub at: SimTime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViolationAttempt {
    pub attacker: RobotId,
    pub target: RobotId,
    pub capability: String,
    pub task: usize,
    pub at: SimTime,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Script {
    pub tasks: Vec<TaskInstance>,
    pub degradations: Vec<Degradation>,
    pub violations: Vec<ViolationAttempt>,
}

fn task_id(scenario: u8, template: usize, group: usize) -> String {
    if group == 0 {
        format!("s{}_t{}", scenario, template + 1)
    } else {
        format!("s{}_t{}_g{}", scenario, template + 1, group + 1)
    }
}

/// Task emissions draw only from the arrival stream, so every architecture sees the same script.
pub fn instantiate(spec: &ScenarioSpec, fleet: &Fleet, rng: &mut RngStreams) -> Script {
    let mut tasks = Vec::new();
    for group in 0..fleet.groups() {
        for (ti, tt) in spec.tasks.iter().enumerate() {
            let jitter = rng.uniform(Stream::Arrivals, 0.0, ARRIVAL_JITTER);
            let mut ctx = TaskContext::new(task_id(spec.id, ti, group)).with_priority(tt.priority);
            for t in &tt.tags {
                ctx = ctx.with_tag(t);
            }
            for rt in &tt.random_tags {
                if rng.chance(Stream::Arrivals, rt.p) {
                    ctx = ctx.with_tag(&rt.tag);
                }
            }
            let Some(owner) = fleet.robot(tt.owner, group) else {
                continue;
            };
            let arrival = SimTime::from_secs(tt.release + jitter);
            let deadline = arrival + SimTime::from_secs(tt.deadline);
            ctx = ctx.with_deadline(deadline);
            tasks.push(TaskInstance {
                index: tasks.len(),
                template: ti,
                group,
                owner,
                ctx,
                segments: tt.segments.clone(),
                arrival,
                deadline,
            });
        }
    }
    let mut degradations = Vec::new();
    let mut violations = Vec::new();
    for group in 0..fleet.groups() {
        let roll = rng.uniform(Stream::Failures, 0.0, 1.0);
        let offset = rng.uniform(Stream::Failures, 0.0, 1.0);
        if let Some(target) = spec.injection.target {
            if roll < spec.injection.p_fail {
                let window = tasks
                    .iter()
                    .find(|t| t.group == group && t.template == spec.injection.window_task);
                if let (Some(w), Some(robot)) = (window, fleet.robot(target, group)) {
                    degradations.push(Degradation {
                        robot,
                        at: w.arrival + SimTime::from_secs(offset * w.nominal_span()),
                    });
                }
            }
        }
        if let Some(v) = &spec.injection.violation {
            let delay = rng.uniform(Stream::Arrivals, v.delay.0, v.delay.1);
            let host = tasks.iter().find(|t| t.group == group && t.template == v.task);
            if let (Some(h), Some(a), Some(tg)) = (host, fleet.robot(v.attacker, group), fleet.robot(v.target, group)) {
                violations.push(ViolationAttempt {
                    attacker: a,
                    target: tg,
                    capability: v.capability.clone(),
                    task: h.index,
                    at: h.arrival + SimTime::from_secs(delay),
                });
            }
        }
    }
    Script {
        tasks,
        degradations,
        violations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::fleet::build_fleet;

    #[test]
    fn builtin_ids() {
        assert_eq!(ScenarioSpec::all().len(), 5);
        assert!(ScenarioSpec::builtin(6).is_err());
    }

    #[test]
    fn scripts_replicate_per_group() {
        let spec = ScenarioSpec::builtin(5).unwrap();
        let f = build_fleet(8).unwrap();
        let s = instantiate(&spec, &f, &mut RngStreams::new(1));
        assert_eq!(s.tasks.len(), 6);
        assert_eq!(s.tasks[3].owner, RobotId::new("robot_a_2"));
    }

    #[test]
    fn injection_only_in_recovery_scenarios() {
        let f = build_fleet(4).unwrap();
        for seed in 0..50 {
            let s = instantiate(&ScenarioSpec::builtin(1).unwrap(), &f, &mut RngStreams::new(seed));
            assert!(s.degradations.is_empty());
        }
    }
}
