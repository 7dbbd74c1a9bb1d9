//! Fleet construction from the four role templates.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::federation::{DecisionRule, Federation, PriorityField, SupervisorPolicy, FLEET_SUPERVISOR};
use crate::model::{
    AuditLevel, AuthorityTuple, ContextPredicate, EcmContract, EcmDescriptor, OverrideLevel, PolicyOutcome, PolicyScope,
    RecoveryBudget, RobotId, TrustScope,
};
use crate::registry::{AdvertisementRecord, Availability, Visibility};
use crate::runtime::RobotRuntime;
use crate::time::SimTime;

use super::SimError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    A,
    B,
    C,
    D,
}

impl Role {
    pub const ALL: [Role; 4] = [Role::A, Role::B, Role::C, Role::D];

    pub fn letter(self) -> char {
        match self {
            Role::A => 'a',
            Role::B => 'b',
            Role::C => 'c',
            Role::D => 'd',
        }
    }

    pub fn capabilities(self) -> [&'static str; 3] {
        match self {
            Role::A => ["navigate.indoor", "carry.package", "handover.dropoff"],
            Role::B => ["navigate.indoor", "door.open.basic", "door.open.secure"],
            Role::C => ["navigate.indoor", "inspect.visual", "inspect.private_zone"],
            Role::D => ["navigate.indoor", "carry.heavy", "grasp.robust"],
        }
    }

    pub fn robot_id(self, group: usize) -> RobotId {
        if group == 0 {
            RobotId::new(format!("robot_{}", self.letter()))
        } else {
            RobotId::new(format!("robot_{}_{}", self.letter(), group + 1))
        }
    }

    pub fn policy(self) -> PolicyScope {
        match self {
            Role::A => PolicyScope::allow_all()
                .with_rule("carry.*", ContextPredicate::HasTag("after_hours".into()), PolicyOutcome::Deny)
                .with_rule("carry.*", ContextPredicate::HasTag("oversize".into()), PolicyOutcome::Review),
            Role::C => PolicyScope::allow_all().with_rule(
                "inspect.private_zone",
                ContextPredicate::LacksTag("privacy_cleared".into()),
                PolicyOutcome::Deny,
            ),
            Role::B | Role::D => PolicyScope::allow_all(),
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.letter().to_ascii_uppercase())
    }
}

pub fn duration_bounds(capability: &str) -> (f64, f64) {
    if capability.starts_with("door.open") {
        (0.5, 2.0)
    } else if capability.starts_with("carry.") {
        (1.0, 5.0)
    } else {
        (1.0, 3.0)
    }
}

pub fn ecm(capability: &str) -> EcmDescriptor {
    let (lo, hi) = duration_bounds(capability);
    EcmDescriptor::new(capability, EcmContract::with_duration(lo, hi)).expect("static capability table is valid")
}

fn trust_requirement(capability: &str) -> TrustScope {
    match capability {
        "door.open.secure" => TrustScope::Task,
        "inspect.private_zone" => TrustScope::Session,
        _ => TrustScope::Capability,
    }
}

fn visibility(capability: &str) -> Visibility {
    match capability {
        "inspect.private_zone" => Visibility::TrustGated(TrustScope::Session),
        _ => Visibility::Global,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdvertisementSpec {
    pub capability: String,
    pub trust_req: TrustScope,
    pub visibility: Visibility,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobotConfig {
    pub id: RobotId,
    pub role: Role,
    pub group: usize,
    pub capabilities: Vec<EcmDescriptor>,
    pub policy: PolicyScope,
    pub budget: RecoveryBudget,
    pub domains: BTreeSet<String>,
    pub advertisements: Vec<AdvertisementSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrustEdge {
    pub truster: RobotId,
    pub trustee: RobotId,
    pub pattern: String,
    pub scope: TrustScope,
}

/// Serializable fleet description: robots, ECMs, trust entries, policies, visibility and supervisors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FleetConfig {
    pub robots: Vec<RobotConfig>,
    pub trust: Vec<TrustEdge>,
    pub supervisors: Vec<SupervisorPolicy>,
    /// Identities granted supervisor-level registry visibility.
    #[serde(default)]
    pub supervisor_visibility: Vec<RobotId>,
}

#[derive(Debug, Clone)]
pub struct Fleet {
    pub runtimes: BTreeMap<RobotId, RobotRuntime>,
    pub federation: Federation,
    pub config: FleetConfig,
}

impl Fleet {
    pub fn robot_ids(&self) -> impl Iterator<Item = &RobotId> {
        self.runtimes.keys()
    }

    pub fn ecm_count(&self) -> usize {
        self.runtimes.values().map(|r| r.capabilities.len()).sum()
    }

    pub fn role_of(&self, r: &RobotId) -> Option<(Role, usize)> {
        self.config.robots.iter().find(|c| &c.id == r).map(|c| (c.role, c.group))
    }

    pub fn robot(&self, role: Role, group: usize) -> Option<RobotId> {
        let id = role.robot_id(group);
        self.runtimes.contains_key(&id).then_some(id)
    }

    pub fn groups(&self) -> usize {
        self.config.robots.iter().map(|r| r.group + 1).max().unwrap_or(0)
    }

    pub fn from_config(config: FleetConfig) -> Result<Fleet, SimError> {
        let mut fed = Federation::new();
        let mut runtimes = BTreeMap::new();
        for rc in &config.robots {
            let mut rt = RobotRuntime::new(rc.id.clone(), rc.capabilities.clone(), rc.policy.clone(), rc.budget);
            rt.supervisor = format!("H_{}", rc.id);
            fed.policies.insert(rc.id.clone(), rc.policy.clone());
            fed.domains.insert(rc.id.clone(), rc.domains.clone());
            for ad in &rc.advertisements {
                let e = rc
                    .capabilities
                    .iter()
                    .find(|e| e.capability_name == ad.capability)
                    .cloned()
                    .unwrap_or_else(|| ecm(&ad.capability));
                fed.registry.advertise(
                    AdvertisementRecord {
                        robot: rc.id.clone(),
                        ecm: e,
                        trust_req: ad.trust_req,
                        policy_req: Vec::new(),
                        auth_profile: AuthorityTuple {
                            a_req: true,
                            a_exec: true,
                            a_ovr: OverrideLevel::None,
                            a_audit: AuditLevel::Fleet,
                        },
                        availability: Availability::Ready,
                        embodiment: format!("role_{}", rc.role.letter()),
                        visibility: ad.visibility.clone(),
                    },
                    &rc.capabilities,
                )?;
            }
            runtimes.insert(rc.id.clone(), rt);
        }
        for e in &config.trust {
            fed.trust.set(&e.truster, &e.trustee, &e.pattern, e.scope, SimTime::ZERO);
        }
        for s in &config.supervisors {
            fed.supervisor_policies.insert(s.id.clone(), s.clone());
        }
        fed.supervisors = config.supervisor_visibility.iter().cloned().collect();
        Ok(Fleet {
            runtimes,
            federation: fed,
            config,
        })
    }
}

/// Fleet description for `n` robots: the four role templates replicated in groups of four.
pub fn fleet_config(n: usize) -> Result<FleetConfig, SimError> {
    if n < 1 {
        return Err(SimError::EmptyFleet);
    }
    let mut robots = Vec::new();
    for i in 0..n {
        let role = Role::ALL[i % 4];
        let group = i / 4;
        let id = role.robot_id(group);
        robots.push(RobotConfig {
            id,
            role,
            group,
            capabilities: role.capabilities().iter().map(|c| ecm(c)).collect(),
            policy: role.policy(),
            budget: RecoveryBudget::default(),
            domains: [format!("group_{}", group + 1)].into_iter().collect(),
            advertisements: role
                .capabilities()
                .iter()
                .map(|c| AdvertisementSpec {
                    capability: c.to_string(),
                    trust_req: trust_requirement(c),
                    visibility: visibility(c),
                })
                .collect(),
        });
    }
    let present: BTreeSet<RobotId> = robots.iter().map(|r| r.id.clone()).collect();
    let mut trust = Vec::new();
    let groups = n.div_ceil(4);
    for g in 0..groups {
        for (x, y, scope) in [
            (Role::A, Role::B, TrustScope::Task),
            (Role::A, Role::D, TrustScope::Capability),
            (Role::B, Role::C, TrustScope::Session),
        ] {
            let (a, b) = (x.robot_id(g), y.robot_id(g));
            if present.contains(&a) && present.contains(&b) {
                for (t, u) in [(&a, &b), (&b, &a)] {
                    trust.push(TrustEdge {
                        truster: t.clone(),
                        trustee: u.clone(),
                        pattern: "*".into(),
                        scope,
                    });
                }
            }
        }
    }
    let mut supervisors = vec![SupervisorPolicy::new(
        FLEET_SUPERVISOR,
        DecisionRule::PrioritizeBy(PriorityField::Priority),
    )];
    for r in &robots {
        supervisors.push(SupervisorPolicy::new(&format!("H_{}", r.id), DecisionRule::ApproveFirst));
    }
    Ok(FleetConfig {
        robots,
        trust,
        supervisors,
        supervisor_visibility: vec![RobotId::new(FLEET_SUPERVISOR), RobotId::new(super::COORDINATOR_ID)],
    })
}

pub fn build_fleet(n: usize) -> Result<Fleet, SimError> {
    Fleet::from_config(fleet_config(n)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn four_robot_fleet() {
        let f = build_fleet(4).unwrap();
        assert_eq!(f.runtimes.len(), 4);
        assert_eq!(f.ecm_count(), 12);
        assert_eq!(f.config.trust.len(), 6);
        assert_eq!(f.federation.registry.records().len(), 12);
    }

    #[test]
    fn replicated_fleets() {
        let f = build_fleet(8).unwrap();
        assert_eq!(f.ecm_count(), 24);
        assert!(f.runtimes.contains_key(&RobotId::new("robot_c_2")));
        assert_eq!(f.groups(), 2);
        let one = build_fleet(1).unwrap();
        assert!(one.config.trust.is_empty());
        assert!(matches!(build_fleet(0), Err(SimError::EmptyFleet)));
    }

    #[test]
    fn config_round_trips_through_json() {
        let cfg = fleet_config(4).unwrap();
        let s = serde_json::to_string(&cfg).unwrap();
        let back: FleetConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, cfg);
    }
}
