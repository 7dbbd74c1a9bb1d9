//! Event loop shared by the three architectures, plus the federated protocol itself.

use std::collections::{BTreeMap, BTreeSet, VecDeque};

use crate::audit::{
    AuditEvent, AuditTrace, Attribution, EvalOutcome, EventKind, Payload, Principal, RequestStage, ResultTag,
};
use crate::baselines::{cfc, dhma};
use crate::federation::{FailureDescriptor, RecoveryStep, ReviewCase, Verdict, FLEET_SUPERVISOR};
use crate::model::{
    CapabilityRequest, EcmDescriptor, PolicyOutcome, RecoveryLevel, RequestId, RobotId, TaskContext,
};
use crate::registry::{Availability, Candidate, CandidateQuery};
use crate::rng::{RngStreams, Stream};
use crate::runtime::{ExecutionResult, Outcome};
use crate::sim::clock::EventClock;
use crate::sim::fleet::{build_fleet, Fleet};
use crate::sim::messaging::{sample_latency, Messaging};
use crate::sim::scenarios::{instantiate, Script, TaskInstance};
use crate::sim::{Arch, RunConfig, RunResult, SimError, TaskOutcome};
use crate::time::SimTime;
use crate::trust::TrustChange;

pub const HUMAN_DELAY: (f64, f64) = (5.0, 20.0);
pub const REVIEW_DELAY: (f64, f64) = (1.0, 5.0);

#[derive(Debug, Clone)]
pub(crate) struct Assignment {
    pub executor: RobotId,
    pub requester: RobotId,
    pub req: RequestId,
    pub attempt: u32,
    pub delegated: bool,
}

#[derive(Debug, Clone)]
pub(crate) struct ActiveFailure {
    pub id: u64,
    pub robot: RobotId,
    pub level: RecoveryLevel,
    pub retries: u32,
    pub time_used: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct TaskRun {
    pub inst: TaskInstance,
    pub seg: usize,
    pub done: Option<TaskOutcome>,
    pub checkpoint: Option<String>,
    pub exec: Option<Assignment>,
    pub failure: Option<ActiveFailure>,
    pub approved: bool,
}

#[derive(Debug, Clone)]
pub(crate) enum Step {
    Arrive,
    Candidates,
    Formulate {
        cands: Vec<Candidate>,
        idx: usize,
        requester: RobotId,
    },
    Evaluate {
        req: CapabilityRequest,
        cands: Vec<Candidate>,
        idx: usize,
    },
    Review {
        case: ReviewCase,
        req: CapabilityRequest,
        cands: Vec<Candidate>,
        idx: usize,
    },
    Begin,
    Delivered,
    Escalate {
        level: RecoveryLevel,
    },
    HumanDone,
    Cfc(cfc::CfcStep),
    Dhma(dhma::DhmaStep),
}

#[derive(Debug, Clone)]
pub(crate) enum VStep {
    Start,
    Evaluate { req: CapabilityRequest },
    Cfc(cfc::CfcViolation),
    Dhma(dhma::DhmaViolation),
}

#[derive(Debug, Clone)]
pub(crate) enum Ev {
    Task(usize, Step),
    Finished { executor: RobotId, token: u64 },
    Degrade(usize),
    Violation(usize, VStep),
    Outage(bool),
}

pub(crate) struct World {
    pub cfg: RunConfig,
    pub arch: Arch,
    pub clock: EventClock<Ev>,
    pub rng: RngStreams,
    pub msg: Messaging,
    pub fleet: Fleet,
    pub trace: AuditTrace,
    pub tasks: Vec<TaskRun>,
    pub script: Script,
    pub running: BTreeMap<RobotId, (usize, u64)>,
    pub waiters: BTreeMap<RobotId, VecDeque<(usize, Step)>>,
    pub pending: BTreeMap<RobotId, Vec<(usize, CapabilityRequest)>>,
    pub reserved: BTreeMap<RobotId, usize>,
    pub claims: BTreeMap<(String, String, RobotId), RobotId>,
    pub latency_samples: Vec<f64>,
    next_token: u64,
    next_failure: u64,
    next_case: u64,
    error: Option<SimError>,
}

pub fn supervisor_of(r: &RobotId) -> Principal {
    Principal::Supervisor(format!("H_{r}"))
}

pub fn fleet_supervisor() -> Principal {
    Principal::Supervisor(FLEET_SUPERVISOR.into())
}

/// Runs one scenario to completion under the given configuration.
pub fn run_scenario(cfg: &RunConfig) -> Result<RunResult, SimError> {
    let mut world = World::new(cfg)?;
    world.run()?;
    Ok(world.into_result())
}

impl World {
    pub(crate) fn new(cfg: &RunConfig) -> Result<World, SimError> {
        let mut fleet = build_fleet(cfg.fleet_size)?;
        if cfg.arch == Arch::Fsar {
            fleet.federation.apply_ablation(cfg.ablation.clone());
        }
        let mut rng = RngStreams::new(cfg.seed);
        let script = instantiate(&cfg.scenario, &fleet, &mut rng);
        let mut clock = EventClock::new();
        for (i, t) in script.tasks.iter().enumerate() {
            clock.schedule(t.arrival, Ev::Task(i, Step::Arrive));
        }
        for (i, d) in script.degradations.iter().enumerate() {
            clock.schedule(d.at, Ev::Degrade(i));
        }
        for (i, v) in script.violations.iter().enumerate() {
            clock.schedule(v.at, Ev::Violation(i, VStep::Start));
        }
        if let Some(o) = &cfg.federation_outage {
            clock.schedule(SimTime::from_secs(o.start), Ev::Outage(false));
            clock.schedule(SimTime::from_secs(o.end), Ev::Outage(true));
        }
        let tasks = script
            .tasks
            .iter()
            .map(|inst| TaskRun {
                inst: inst.clone(),
                seg: 0,
                done: None,
                checkpoint: None,
                exec: None,
                failure: None,
                approved: false,
            })
            .collect();
        Ok(World {
            cfg: cfg.clone(),
            arch: cfg.arch,
            clock,
            rng,
            msg: Messaging::new(),
            fleet,
            trace: AuditTrace::new(),
            tasks,
            script,
            running: BTreeMap::new(),
            waiters: BTreeMap::new(),
            pending: BTreeMap::new(),
            reserved: BTreeMap::new(),
            claims: BTreeMap::new(),
            latency_samples: Vec::new(),
            next_token: 0,
            next_failure: 0,
            next_case: 0,
            error: None,
        })
    }

    pub(crate) fn run(&mut self) -> Result<(), SimError> {
        let budget = SimTime::from_secs(self.cfg.scenario.time_budget);
        while let Some((at, ev)) = self.clock.pop() {
            if at > budget {
                break;
            }
            match ev {
                Ev::Task(t, step) => {
                    if self.tasks[t].done.is_none() {
                        self.step(t, step);
                    }
                }
                Ev::Finished { executor, token } => self.on_finished(executor, token),
                Ev::Degrade(i) => self.on_degrade(i),
                Ev::Violation(i, v) => match self.arch {
                    Arch::Fsar => self.fsar_violation(i, v),
                    Arch::Cfc => cfc::violation(self, i, v),
                    Arch::Dhma => dhma::violation(self, i, v),
                },
                Ev::Outage(online) => {
                    self.fleet.federation.registry.set_online(online);
                }
            }
            if let Some(e) = self.error.take() {
                return Err(e);
            }
        }
        Ok(())
    }

    pub(crate) fn into_result(self) -> RunResult {
        let tasks = self
            .tasks
            .iter()
            .map(|t| {
                t.done.clone().unwrap_or_else(|| TaskOutcome {
                    task_id: t.inst.ctx.task_id.clone(),
                    owner: t.inst.owner.clone(),
                    success: false,
                    finished_at: None,
                    deadline: t.inst.deadline,
                    reason: Some("time_budget".into()),
                })
            })
            .collect();
        let contexts = self
            .tasks
            .iter()
            .map(|t| (t.inst.ctx.task_id.clone(), t.inst.ctx.clone()))
            .collect();
        RunResult {
            policies: self.fleet.config.robots.iter().map(|r| (r.id.clone(), r.policy.clone())).collect(),
            config: self.cfg,
            trace: self.trace,
            tasks,
            contexts,
            latency_samples: self.latency_samples,
        }
    }

    // ---- shared plumbing ----

    pub(crate) fn now(&self) -> SimTime {
        self.clock.now()
    }

    pub(crate) fn fail(&mut self, what: impl Into<String>) {
        if self.error.is_none() {
            self.error = Some(SimError::Invariant {
                at: self.now(),
                what: what.into(),
            });
        }
    }

    pub(crate) fn log(&mut self, ev: AuditEvent) {
        let r = if self.arch == Arch::Fsar {
            self.trace.append(ev)
        } else {
            self.trace.append_unchecked(ev)
        };
        if let Err(e) = r {
            if self.error.is_none() {
                self.error = Some(e.into());
            }
        }
    }

    pub(crate) fn latency(&mut self) -> f64 {
        let l = sample_latency(self.rng.latency());
        self.latency_samples.push(l);
        l
    }

    pub(crate) fn send(&mut self, from: &str, to: &str) -> SimTime {
        self.send_at(from, to, self.now())
    }

    pub(crate) fn send_at(&mut self, _from: &str, to: &str, at: SimTime) -> SimTime {
        let l = self.latency();
        self.msg.deliver(to, at, l)
    }

    pub(crate) fn hop(&mut self) -> SimTime {
        let l = self.latency();
        self.now() + SimTime::from_secs(l)
    }

    pub(crate) fn supervisor_delay(&mut self, (lo, hi): (f64, f64)) -> SimTime {
        let d = self.rng.uniform(Stream::Supervisor, lo, hi);
        self.now() + SimTime::from_secs(d)
    }

    pub(crate) fn at(&mut self, when: SimTime, t: usize, step: Step) {
        self.clock.schedule(when, Ev::Task(t, step));
    }

    pub(crate) fn now_step(&mut self, t: usize, step: Step) {
        let now = self.now();
        self.at(now, t, step);
    }

    pub(crate) fn ctx(&self, t: usize) -> TaskContext {
        self.tasks[t].inst.ctx.clone()
    }

    pub(crate) fn owner(&self, t: usize) -> RobotId {
        self.tasks[t].inst.owner.clone()
    }

    pub(crate) fn task_id(&self, t: usize) -> String {
        self.tasks[t].inst.ctx.task_id.clone()
    }

    pub(crate) fn capability(&self, t: usize) -> String {
        let task = &self.tasks[t];
        task.inst.segments[task.seg].capability.clone()
    }

    pub(crate) fn ecm(&self, cap: &str) -> EcmDescriptor {
        crate::sim::fleet::ecm(cap)
    }

    pub(crate) fn new_failure_id(&mut self) -> u64 {
        self.next_failure += 1;
        self.next_failure
    }

    pub(crate) fn new_case_id(&mut self) -> u64 {
        self.next_case += 1;
        self.next_case
    }

    pub(crate) fn request_id(&self, t: usize, requester: &RobotId, executor: &RobotId) -> RequestId {
        RequestId {
            task_id: self.task_id(t),
            requester: requester.clone(),
            executor: executor.clone(),
            ecm: self.capability(t),
            issued_at: self.now(),
        }
    }

    pub(crate) fn finish(&mut self, t: usize, success: bool, reason: Option<&str>) {
        if self.tasks[t].done.is_some() {
            return;
        }
        let now = self.now();
        let inst = &self.tasks[t].inst;
        let on_time = now <= inst.deadline;
        let reason = match (success, on_time) {
            (true, false) => Some("deadline_missed".to_string()),
            _ => reason.map(str::to_string),
        };
        self.tasks[t].done = Some(TaskOutcome {
            task_id: inst.ctx.task_id.clone(),
            owner: inst.owner.clone(),
            success: success && on_time,
            finished_at: Some(now),
            deadline: inst.deadline,
            reason,
        });
        self.reserved.retain(|_, w| *w != t);
        for v in self.pending.values_mut() {
            v.retain(|(u, _)| *u != t);
        }
    }

    pub(crate) fn set_assignment(&mut self, t: usize, executor: &RobotId, requester: &RobotId, delegated: bool) {
        let req = self.request_id(t, requester, executor);
        self.tasks[t].exec = Some(Assignment {
            executor: executor.clone(),
            requester: requester.clone(),
            req,
            attempt: 0,
            delegated,
        });
    }

    /// Starts the current assignment, or queues behind the executor's running job.
    pub(crate) fn begin(&mut self, t: usize) {
        let Some(a) = self.tasks[t].exec.clone() else {
            self.fail("begin without an assignment");
            return;
        };
        let reserved_for_other = self.reserved.get(&a.executor).is_some_and(|w| *w != t);
        if self.running.contains_key(&a.executor) || reserved_for_other {
            self.waiters
                .entry(a.executor.clone())
                .or_default()
                .push_back((t, Step::Begin));
            return;
        }
        let now = self.now();
        let ctx = self.ctx(t);
        let cap = self.capability(t);
        let Some(ecm) = self.fleet.runtimes[&a.executor].ecm(&cap).cloned() else {
            self.fail(format!("{} cannot execute {cap}", a.executor));
            return;
        };
        let rt = self.fleet.runtimes.get_mut(&a.executor).expect("executor exists");
        let exec = match rt.begin_execution(&ecm, &ctx, &a.requester, a.attempt, now, self.rng.durations()) {
            Ok(e) => e,
            Err(e) => {
                self.fail(e.to_string());
                return;
            }
        };
        self.next_token += 1;
        self.running.insert(a.executor.clone(), (t, self.next_token));
        if self.reserved.get(&a.executor) == Some(&t) {
            self.reserved.remove(&a.executor);
        }
        self.claims
            .entry((ctx.task_id.clone(), cap.clone(), a.executor.clone()))
            .or_insert_with(|| a.requester.clone());
        let payload = Payload::ExecutionStart {
            capability: cap,
            attempt: a.attempt,
            expected_end: exec.expected_end,
        };
        match self.arch {
            Arch::Fsar | Arch::Cfc => {
                let ev = AuditEvent::new(EventKind::ExecutionStarted, now, Principal::robot(&a.executor), payload)
                    .origin(&a.requester)
                    .owner(&a.executor)
                    .escalation(supervisor_of(&a.executor))
                    .request(&a.req);
                self.log(ev);
            }
            Arch::Dhma => dhma::log_started(self, &a, payload),
        }
        self.clock.schedule(
            now + exec.duration,
            Ev::Finished {
                executor: a.executor,
                token: self.next_token,
            },
        );
    }

    fn release(&mut self, robot: &RobotId) {
        let now = self.now();
        if let Some(q) = self.waiters.remove(robot) {
            for (t, step) in q {
                self.at(now, t, step);
            }
        }
    }

    fn on_finished(&mut self, executor: RobotId, token: u64) {
        let Some(&(t, tok)) = self.running.get(&executor) else {
            return;
        };
        if tok != token {
            return;
        }
        self.running.remove(&executor);
        let rt = self.fleet.runtimes.get_mut(&executor).expect("executor exists");
        let Some(result) = rt.finish_execution(self.rng.failures()) else {
            self.fail("finished without a running execution");
            return;
        };
        self.release(&executor);
        if self.tasks[t].done.is_some() {
            return;
        }
        match self.arch {
            Arch::Fsar => self.fsar_result(t, result),
            Arch::Cfc => cfc::result(self, t, result),
            Arch::Dhma => dhma::result(self, t, result),
        }
    }

    fn on_degrade(&mut self, i: usize) {
        let robot = self.script.degradations[i].robot.clone();
        let now = self.now();
        let Some(rt) = self.fleet.runtimes.get_mut(&robot) else {
            return;
        };
        rt.degrade();
        let caps: Vec<String> = rt.capabilities.iter().map(|e| e.capability_name.clone()).collect();
        for cap in caps {
            let Ok(change) = self
                .fleet
                .federation
                .registry
                .update_availability(&robot, &cap, Availability::Degraded)
            else {
                continue;
            };
            let principal = match self.arch {
                Arch::Dhma => Principal::SubAgent {
                    host: robot.clone(),
                    role: crate::audit::SubAgentRole::Execution,
                },
                _ => Principal::robot(&robot),
            };
            let ev = AuditEvent::new(
                EventKind::AvailabilityChanged,
                now,
                principal,
                Payload::Availability {
                    capability: cap,
                    from: change.from.as_str().into(),
                    to: change.to.as_str().into(),
                },
            )
            .owner(&robot)
            .escalation(supervisor_of(&robot));
            self.log(ev);
        }
    }

    /// Registers a claim on (task, capability, executor). Returns the other claimant if one exists.
    pub(crate) fn claim(&mut self, task_id: &str, cap: &str, executor: &RobotId, requester: &RobotId) -> Option<RobotId> {
        let key = (task_id.to_string(), cap.to_string(), executor.clone());
        match self.claims.get(&key) {
            Some(other) if other != requester => Some(other.clone()),
            Some(_) => None,
            None => {
                self.claims.insert(key, requester.clone());
                None
            }
        }
    }

    pub(crate) fn log_trust_changes(&mut self, changes: Vec<TrustChange>) {
        let now = self.now();
        for c in changes {
            let ev = AuditEvent::new(
                EventKind::TrustChanged,
                now,
                Principal::Federation("trust_manager".into()),
                Payload::Trust {
                    truster: c.key.truster.clone(),
                    trustee: c.key.trustee.clone(),
                    pattern: c.key.pattern.clone(),
                    from: c.from,
                    to: c.to,
                    cause: c.cause,
                },
            )
            .origin(&c.key.truster)
            .owner(&c.key.trustee)
            .escalation(fleet_supervisor());
            self.log(ev);
        }
    }

    pub(crate) fn log_resolution(&mut self, t: usize, f: &ActiveFailure, principal: Principal, attribution: Attribution) {
        let now = self.now();
        let owner = self.owner(t);
        let ev = AuditEvent::new(
            EventKind::RecoveryTriggered,
            now,
            principal.clone(),
            Payload::Recovery {
                failure_id: f.id,
                level: f.level,
                resolved: Some(true),
            },
        )
        .origin(&owner)
        .owner(&f.robot)
        .escalation(principal)
        .task(&self.task_id(t))
        .attributed(attribution);
        self.log(ev);
    }

    fn step(&mut self, t: usize, step: Step) {
        match step {
            Step::Arrive => self.on_segment(t),
            Step::Candidates => self.fsar_candidates(t),
            Step::Formulate { cands, idx, requester } => self.fsar_formulate(t, cands, idx, requester),
            Step::Evaluate { req, cands, idx } => self.fsar_evaluate(t, req, cands, idx),
            Step::Review { case, req, cands, idx } => self.fsar_review(t, case, req, cands, idx),
            Step::Begin => self.begin(t),
            Step::Delivered => self.on_delivered(t),
            Step::Escalate { level } => self.fsar_escalate(t, level),
            Step::HumanDone => self.fsar_human_done(t),
            Step::Cfc(s) => cfc::step(self, t, s),
            Step::Dhma(s) => dhma::step(self, t, s),
        }
    }

    fn on_segment(&mut self, t: usize) {
        let task = &self.tasks[t];
        if task.seg >= task.inst.segments.len() {
            self.finish(t, true, None);
            return;
        }
        if self.now() > task.inst.deadline {
            self.finish(t, false, Some("deadline_exceeded"));
            return;
        }
        let task = &mut self.tasks[t];
        task.failure = None;
        task.approved = false;
        task.exec = None;
        let owner = self.owner(t);
        let cap = self.capability(t);
        let ctx = self.ctx(t);
        let gap = self.fleet.runtimes[&owner].detect_capability_gap(&cap, &ctx).is_some();
        match self.arch {
            Arch::Fsar => {
                if !gap {
                    self.set_assignment(t, &owner, &owner, false);
                    self.begin(t);
                } else if !self.fleet.federation.registry.is_online() {
                    self.isolated_failure(t);
                } else {
                    self.fsar_query(t);
                }
            }
            Arch::Cfc => cfc::segment(self, t, gap),
            Arch::Dhma => dhma::segment(self, t, gap),
        }
    }

    /// Without a reachable federation, a capability gap ends the task locally.
    fn isolated_failure(&mut self, t: usize) {
        let owner = self.owner(t);
        let id = self.request_id(t, &owner, &owner);
        let ev = AuditEvent::new(
            EventKind::ExecutionCompleted,
            self.now(),
            Principal::robot(&owner),
            Payload::ExecutionEnd {
                capability: self.capability(t),
                attempt: 0,
                result: ResultTag::Failure,
                reason: Some("no_federation".into()),
            },
        )
        .origin(&owner)
        .owner(&owner)
        .escalation(supervisor_of(&owner))
        .request(&id);
        self.log(ev);
        self.finish(t, false, Some("no_federation"));
    }

    fn on_delivered(&mut self, t: usize) {
        if let Some(f) = self.tasks[t].failure.take() {
            let (p, a) = match self.arch {
                Arch::Fsar => match f.level {
                    RecoveryLevel::Local | RecoveryLevel::Peer => (Principal::robot(&f.robot), Attribution::DIRECT),
                    _ => (Principal::Federation("recovery".into()), Attribution::TRAVERSAL),
                },
                Arch::Cfc => (Principal::Coordinator, Attribution::RELAY),
                Arch::Dhma => (
                    Principal::SubAgent {
                        host: f.robot.clone(),
                        role: crate::audit::SubAgentRole::Recovery,
                    },
                    Attribution::DIRECT,
                ),
            };
            self.log_resolution(t, &f, p, a);
        }
        let task = &mut self.tasks[t];
        if let Some(cp) = task.inst.segments[task.seg].checkpoint.clone() {
            task.checkpoint = Some(cp);
        }
        task.seg += 1;
        self.on_segment(t);
    }

    // ---- federated protocol ----

    fn fsar_query(&mut self, t: usize) {
        let owner = self.owner(t);
        let cap = self.capability(t);
        let ev = AuditEvent::new(
            EventKind::RequestIssued,
            self.now(),
            Principal::robot(&owner),
            Payload::Request {
                stage: RequestStage::Query,
                capability: cap,
                target: Some(Principal::Federation("registry".into())),
            },
        )
        .origin(&owner)
        .escalation(supervisor_of(&owner))
        .task(&self.task_id(t));
        self.log(ev);
        let at = self.send(owner.as_str(), "registry");
        self.at(at, t, Step::Candidates);
    }

    fn fsar_candidates(&mut self, t: usize) {
        let owner = self.owner(t);
        let cap = self.capability(t);
        let ctx = self.ctx(t);
        let cands = self.fleet.federation.query(&CandidateQuery::new(&owner, &cap, &ctx));
        let ev = AuditEvent::new(
            EventKind::CandidatesReturned,
            self.now(),
            Principal::Federation("registry".into()),
            Payload::Candidates {
                pattern: cap,
                candidates: cands.iter().map(|c| c.robot.clone()).collect(),
            },
        )
        .origin(&owner)
        .escalation(supervisor_of(&owner))
        .task(&self.task_id(t));
        self.log(ev);
        let at = self.send("registry", owner.as_str());
        self.at(
            at,
            t,
            Step::Formulate {
                cands,
                idx: 0,
                requester: owner,
            },
        );
    }

    fn fsar_formulate(&mut self, t: usize, cands: Vec<Candidate>, idx: usize, requester: RobotId) {
        let Some(cand) = cands.get(idx).cloned() else {
            let reason = if cands.is_empty() { "no_candidate" } else { "all_rejected" };
            self.finish(t, false, Some(reason));
            return;
        };
        let ctx = self.ctx(t);
        let fed = &self.fleet.federation;
        let auth = fed.evaluate_authority(&requester, &cand.robot, &cand.ecm, &ctx, self.fleet.runtimes.get(&cand.robot));
        let parent_link = self.tasks[t]
            .failure
            .as_ref()
            .filter(|f| f.level == RecoveryLevel::Peer)
            .and(self.tasks[t].exec.as_ref().map(|a| a.req.clone()));
        let req = CapabilityRequest {
            requester: requester.clone(),
            executor: cand.robot.clone(),
            ecm: cand.ecm.clone(),
            ctx,
            issued_at: self.now(),
            auth,
            parent_link,
        };
        let ev = AuditEvent::new(
            EventKind::RequestIssued,
            self.now(),
            Principal::robot(&requester),
            Payload::Request {
                stage: RequestStage::Formulated,
                capability: cand.ecm.capability_name.clone(),
                target: Some(Principal::robot(&cand.robot)),
            },
        )
        .origin(&requester)
        .owner(&cand.robot)
        .escalation(supervisor_of(&requester))
        .request(&req.id());
        self.log(ev);
        let at = self.send(requester.as_str(), cand.robot.as_str());
        self.at(at, t, Step::Evaluate { req, cands, idx });
    }

    fn upsert_pending(&mut self, t: usize, req: &CapabilityRequest) {
        let list = self.pending.entry(req.executor.clone()).or_default();
        list.retain(|(u, _)| *u != t);
        list.push((t, req.clone()));
    }

    fn fsar_evaluate(&mut self, t: usize, req: CapabilityRequest, cands: Vec<Candidate>, idx: usize) {
        let x = req.executor.clone();
        let now = self.now();
        let fed = &self.fleet.federation;
        let composed = fed.composed(&req.requester, &x, &req.ecm, &req.ctx);
        if composed == PolicyOutcome::Review && !self.tasks[t].approved {
            let mut claims = vec![req.clone()];
            if let Some(list) = self.pending.get(&x) {
                for (u, r) in list {
                    if *u != t && r.ecm.capability_name == req.ecm.capability_name && self.tasks[*u].done.is_none() {
                        claims.push(r.clone());
                    }
                }
            }
            let case = ReviewCase {
                case_id: self.new_case_id(),
                executor: x.clone(),
                capability: req.ecm.capability_name.clone(),
                claims,
            };
            let ev = self.fleet.federation.review_raised_event(&case, now);
            self.log(ev);
            self.upsert_pending(t, &req);
            let at = self.supervisor_delay(REVIEW_DELAY);
            if self.cfg.review_blocking {
                self.at(at, t, Step::Review { case, req, cands, idx });
                return;
            }
            self.tasks[t].approved = true;
            self.at(
                at,
                t,
                Step::Review {
                    case,
                    req: req.clone(),
                    cands: Vec::new(),
                    idx: usize::MAX,
                },
            );
        }
        let effective = if composed == PolicyOutcome::Review {
            PolicyOutcome::Allow
        } else {
            composed
        };
        let fed = &self.fleet.federation;
        let advertised = fed.registry.is_advertised(&x, &req.ecm.capability_name);
        let rt = &self.fleet.runtimes[&x];
        let mut result = rt.evaluate_incoming_request(&req, &req.auth, effective, advertised, now);
        if result.is_accept() && self.reserved.get(&x).is_some_and(|w| *w != t) {
            let until = rt.earliest_start(now).max(now + SimTime::from_secs(0.5));
            result = EvalOutcome::Defer { until };
        }
        let mut duplicate = None;
        if result.is_accept() {
            duplicate = self.claim(&req.ctx.task_id, &req.ecm.capability_name, &x, &req.requester);
        }
        let base = |kind, payload| {
            AuditEvent::new(kind, now, Principal::robot(&x), payload)
                .origin(&req.requester)
                .owner(&x)
                .escalation(supervisor_of(&x))
                .request(&req.id())
        };
        if let Some(other) = &duplicate {
            let ev = base(
                EventKind::AuthorityConflictObserved,
                Payload::Conflict {
                    reason: "duplicate_claim".into(),
                    claimants: vec![Principal::robot(other), Principal::robot(&req.requester)],
                },
            );
            self.log(ev);
            self.claims.insert(
                (req.ctx.task_id.clone(), req.ecm.capability_name.clone(), x.clone()),
                req.requester.clone(),
            );
        }
        let ev = base(
            EventKind::RequestEvaluated,
            Payload::Evaluation {
                capability: req.ecm.capability_name.clone(),
                composed,
                result: result.clone(),
            },
        );
        self.log(ev);
        match result {
            EvalOutcome::Accept => {
                if self.running.contains_key(&x) {
                    self.preempt(&x, &req);
                }
                for list in self.pending.values_mut() {
                    list.retain(|(u, _)| *u != t);
                }
                let peer = self.tasks[t].failure.is_some();
                self.tasks[t].exec = Some(Assignment {
                    executor: x,
                    requester: req.requester.clone(),
                    req: req.id(),
                    attempt: 0,
                    delegated: true,
                });
                if !peer {
                    self.tasks[t].failure = None;
                }
                self.begin(t);
            }
            EvalOutcome::Defer { until } | EvalOutcome::Negotiate { counter: until } => {
                self.upsert_pending(t, &req);
                let mid = SimTime::from_secs(req.ecm.contract.duration_model.midpoint());
                let late = until + mid > self.tasks[t].inst.deadline;
                let back = self.send(x.as_str(), req.requester.as_str());
                let requester = req.requester.clone();
                if late && idx + 1 < cands.len() {
                    self.at(back, t, Step::Formulate { cands, idx: idx + 1, requester });
                } else {
                    self.at(back.max(until), t, Step::Formulate { cands, idx, requester });
                }
            }
            EvalOutcome::Reject { .. } => {
                let back = self.send(x.as_str(), req.requester.as_str());
                let requester = req.requester.clone();
                self.at(back, t, Step::Formulate { cands, idx: idx + 1, requester });
            }
        }
    }

    /// Hard preemption of a strictly lower-priority execution.
    fn preempt(&mut self, x: &RobotId, by: &CapabilityRequest) {
        let Some((u, _)) = self.running.remove(x) else {
            return;
        };
        self.fleet.runtimes.get_mut(x).expect("executor exists").abort_execution();
        let now = self.now();
        let Some(ua) = self.tasks[u].exec.clone() else {
            return;
        };
        let cap = ua.req.ecm.clone();
        let ev = AuditEvent::new(
            EventKind::AuthorityConflictObserved,
            now,
            Principal::robot(x),
            Payload::Conflict {
                reason: "hard_preempt".into(),
                claimants: vec![Principal::robot(&ua.requester), Principal::robot(&by.requester)],
            },
        )
        .origin(&by.requester)
        .owner(x)
        .escalation(supervisor_of(x))
        .request(&by.id());
        self.log(ev);
        let ev = AuditEvent::new(
            EventKind::ExecutionCompleted,
            now,
            Principal::robot(x),
            Payload::ExecutionEnd {
                capability: cap,
                attempt: ua.attempt,
                result: ResultTag::Partial,
                reason: Some("preempted".into()),
            },
        )
        .origin(&ua.requester)
        .owner(x)
        .escalation(supervisor_of(x))
        .request(&ua.req);
        self.log(ev);
        if self.tasks[u].failure.is_none() {
            let id = self.new_failure_id();
            let owner = self.owner(u);
            let ev = AuditEvent::new(
                EventKind::RecoveryTriggered,
                now,
                Principal::robot(x),
                Payload::Recovery {
                    failure_id: id,
                    level: RecoveryLevel::Local,
                    resolved: None,
                },
            )
            .origin(&owner)
            .owner(x)
            .escalation(Principal::robot(x))
            .task(&self.task_id(u));
            self.log(ev);
            self.tasks[u].failure = Some(ActiveFailure {
                id,
                robot: x.clone(),
                level: RecoveryLevel::Local,
                retries: 0,
                time_used: 0.0,
            });
        }
        if let Some(a) = self.tasks[u].exec.as_mut() {
            a.attempt += 1;
        }
        self.waiters.entry(x.clone()).or_default().push_front((u, Step::Begin));
    }

    fn fsar_review(&mut self, t: usize, case: ReviewCase, req: CapabilityRequest, cands: Vec<Candidate>, idx: usize) {
        let now = self.now();
        let res = match self.fleet.federation.resolve_fleet_policy(&case, now) {
            Ok(r) => r,
            Err(e) => {
                self.error.get_or_insert(e.into());
                return;
            }
        };
        for ev in res.events.clone() {
            self.log(ev);
        }
        if idx == usize::MAX {
            return;
        }
        match res.verdict(&req.id()) {
            Some(Verdict::Approved) => {
                self.tasks[t].approved = true;
                self.fsar_evaluate(t, req, cands, idx);
            }
            Some(Verdict::Deferred) => {
                self.tasks[t].approved = true;
                let winner = res
                    .verdicts
                    .iter()
                    .find(|(_, v)| *v == Verdict::Approved)
                    .and_then(|(id, _)| self.tasks.iter().position(|u| u.inst.ctx.task_id == id.task_id));
                if let Some(w) = winner.filter(|w| *w != t && self.tasks[*w].done.is_none()) {
                    self.reserved.insert(case.executor.clone(), w);
                }
                let back = self.send(case.executor.as_str(), req.requester.as_str());
                let requester = req.requester.clone();
                self.at(back, t, Step::Formulate { cands, idx, requester });
            }
            Some(Verdict::Rejected) => self.finish(t, false, Some("review_rejected")),
            None => self.fail("review verdict missing for claimant"),
        }
    }

    fn fsar_result(&mut self, t: usize, result: ExecutionResult) {
        let Some(a) = self.tasks[t].exec.clone() else {
            self.fail("result without assignment");
            return;
        };
        let now = self.now();
        let (tag, reason) = match &result.outcome {
            Outcome::Success(_) => (ResultTag::Success, None),
            Outcome::Partial(r) | Outcome::Failure(r) => (result.outcome.tag(), Some(r.clone())),
        };
        let ev = AuditEvent::new(
            EventKind::ExecutionCompleted,
            now,
            Principal::robot(&a.executor),
            Payload::ExecutionEnd {
                capability: a.req.ecm.clone(),
                attempt: a.attempt,
                result: tag,
                reason,
            },
        )
        .origin(&a.requester)
        .owner(&a.executor)
        .escalation(supervisor_of(&a.executor))
        .request(&a.req);
        self.log(ev);
        if result.outcome.is_success() {
            if a.delegated {
                self.fleet.federation.trust.record_success(&a.requester, &a.executor, &a.req.ecm);
                let owner = self.owner(t);
                let at = self.send(a.executor.as_str(), owner.as_str());
                self.at(at, t, Step::Delivered);
            } else {
                self.on_delivered(t);
            }
        } else {
            if a.delegated {
                let changes = self
                    .fleet
                    .federation
                    .trust
                    .record_failure(&a.requester, &a.executor, &a.req.ecm, now);
                self.log_trust_changes(changes);
            }
            self.fsar_failure(t, result.duration);
        }
    }

    fn fsar_failure(&mut self, t: usize, spent: f64) {
        let Some(a) = self.tasks[t].exec.clone() else {
            return;
        };
        let now = self.now();
        let owner = self.owner(t);
        if self.tasks[t].failure.is_none() {
            let id = self.new_failure_id();
            let ev = AuditEvent::new(
                EventKind::RecoveryTriggered,
                now,
                Principal::robot(&a.executor),
                Payload::Recovery {
                    failure_id: id,
                    level: RecoveryLevel::Local,
                    resolved: None,
                },
            )
            .origin(&owner)
            .owner(&a.executor)
            .escalation(Principal::robot(&a.executor))
            .task(&self.task_id(t));
            self.log(ev);
            self.tasks[t].failure = Some(ActiveFailure {
                id,
                robot: a.executor.clone(),
                level: RecoveryLevel::Local,
                retries: 0,
                time_used: 0.0,
            });
        }
        let budget = self.fleet.runtimes[&a.executor].recovery.budget;
        let layered = !self
            .fleet
            .federation
            .ablation
            .disables(crate::federation::Component::LayeredRecovery);
        let f = self.tasks[t].failure.as_mut().expect("failure just set");
        f.time_used += spent;
        match f.level {
            RecoveryLevel::Local if !layered => {
                self.fsar_escalate(t, RecoveryLevel::Local);
            }
            RecoveryLevel::Local if f.robot == a.executor && f.retries < budget.n_max && f.time_used <= budget.t_max => {
                f.retries += 1;
                let attempt = f.retries;
                if let Some(x) = self.tasks[t].exec.as_mut() {
                    x.attempt = attempt;
                }
                self.begin(t);
            }
            RecoveryLevel::Local => {
                let (id, robot) = (f.id, f.robot.clone());
                let ev = AuditEvent::new(
                    EventKind::RecoveryEscalated,
                    now,
                    Principal::robot(&robot),
                    Payload::Escalation {
                        failure_id: id,
                        from: RecoveryLevel::Local,
                        to: RecoveryLevel::Peer,
                    },
                )
                .origin(&owner)
                .owner(&robot)
                .escalation(Principal::robot(&robot))
                .task(&self.task_id(t));
                self.log(ev);
                let at = self.send(robot.as_str(), "federation");
                self.at(at, t, Step::Escalate { level: RecoveryLevel::Peer });
            }
            RecoveryLevel::Peer => {
                let at = self.send(a.executor.as_str(), "federation");
                self.at(at, t, Step::Escalate { level: RecoveryLevel::Fleet });
            }
            RecoveryLevel::Fleet | RecoveryLevel::Human => {
                let at = self.send(a.executor.as_str(), "federation");
                self.at(at, t, Step::Escalate { level: RecoveryLevel::Human });
            }
        }
    }

    fn fsar_escalate(&mut self, t: usize, level: RecoveryLevel) {
        let Some(f) = self.tasks[t].failure.clone() else {
            self.fail("escalation without failure");
            return;
        };
        let desc = FailureDescriptor {
            failure_id: f.id,
            robot: f.robot.clone(),
            capability: self.capability(t),
            ctx: self.ctx(t),
            task_owner: self.owner(t),
            checkpoint: self.tasks[t].checkpoint.clone(),
            detected_at: self.now(),
        };
        let out = match self.fleet.federation.orchestrate_recovery(&desc, level) {
            Ok(o) => o,
            Err(e) => {
                self.error.get_or_insert(e.into());
                return;
            }
        };
        for ev in out.events {
            self.log(ev);
        }
        match out.step {
            RecoveryStep::Substitute { candidate } => {
                self.set_level(t, RecoveryLevel::Peer);
                let at = self.send("federation", f.robot.as_str());
                self.at(
                    at,
                    t,
                    Step::Formulate {
                        cands: vec![candidate],
                        idx: 0,
                        requester: f.robot,
                    },
                );
            }
            RecoveryStep::Reassign { to } => {
                self.set_level(t, RecoveryLevel::Fleet);
                let owner = self.owner(t);
                let at = self.send("federation", owner.as_str());
                self.at(
                    at,
                    t,
                    Step::Formulate {
                        cands: vec![to],
                        idx: 0,
                        requester: owner,
                    },
                );
            }
            RecoveryStep::Escalate { to, .. } => {
                let at = self.hop();
                self.at(at, t, Step::Escalate { level: to });
            }
            RecoveryStep::HumanResolved { .. } => {
                self.set_level(t, RecoveryLevel::Human);
                let at = self.supervisor_delay(HUMAN_DELAY);
                self.at(at, t, Step::HumanDone);
            }
            RecoveryStep::Unrecovered => self.finish(t, false, Some("unrecovered")),
        }
    }

    pub(crate) fn set_level(&mut self, t: usize, level: RecoveryLevel) {
        if let Some(f) = self.tasks[t].failure.as_mut() {
            f.level = level;
        }
    }

    fn fsar_human_done(&mut self, t: usize) {
        if let Some(f) = self.tasks[t].failure.take() {
            self.log_resolution(t, &f, fleet_supervisor(), Attribution::DIRECT);
        }
        self.on_delivered(t);
    }

    fn fsar_violation(&mut self, i: usize, v: VStep) {
        let va = self.script.violations[i].clone();
        let now = self.now();
        match v {
            VStep::Start => {
                let ctx = self.ctx(va.task);
                let ecm = self.ecm(&va.capability);
                let fed = &self.fleet.federation;
                let auth = fed.evaluate_authority(&va.attacker, &va.target, &ecm, &ctx, self.fleet.runtimes.get(&va.target));
                let req = CapabilityRequest {
                    requester: va.attacker.clone(),
                    executor: va.target.clone(),
                    ecm,
                    ctx,
                    issued_at: now,
                    auth,
                    parent_link: None,
                };
                let ev = AuditEvent::new(
                    EventKind::RequestIssued,
                    now,
                    Principal::robot(&va.attacker),
                    Payload::Request {
                        stage: RequestStage::Formulated,
                        capability: va.capability.clone(),
                        target: Some(Principal::robot(&va.target)),
                    },
                )
                .origin(&va.attacker)
                .owner(&va.target)
                .escalation(supervisor_of(&va.attacker))
                .request(&req.id());
                self.log(ev);
                let at = self.send(va.attacker.as_str(), va.target.as_str());
                self.clock.schedule(at, Ev::Violation(i, VStep::Evaluate { req }));
            }
            VStep::Evaluate { req } => {
                let x = req.executor.clone();
                let fed = &self.fleet.federation;
                let composed = fed.composed(&req.requester, &x, &req.ecm, &req.ctx);
                let advertised = fed.registry.is_advertised(&x, &req.ecm.capability_name);
                let mut result = self.fleet.runtimes[&x].evaluate_incoming_request(&req, &req.auth, composed, advertised, now);
                let admitted = !matches!(&result, EvalOutcome::Reject { .. });
                let mut conflict = None;
                if admitted {
                    conflict = self.claim(&req.ctx.task_id, &req.ecm.capability_name, &x, &req.requester);
                    result = EvalOutcome::Reject {
                        reason: if conflict.is_some() {
                            "duplicate_claim".into()
                        } else {
                            "claim_registered".into()
                        },
                    };
                }
                let base = |kind, payload| {
                    AuditEvent::new(kind, now, Principal::robot(&x), payload)
                        .origin(&req.requester)
                        .owner(&x)
                        .escalation(supervisor_of(&x))
                        .request(&req.id())
                };
                if let Some(other) = conflict {
                    let ev = base(
                        EventKind::AuthorityConflictObserved,
                        Payload::Conflict {
                            reason: "duplicate_claim".into(),
                            claimants: vec![Principal::robot(&other), Principal::robot(&req.requester)],
                        },
                    );
                    self.log(ev);
                }
                let ev = base(
                    EventKind::RequestEvaluated,
                    Payload::Evaluation {
                        capability: req.ecm.capability_name.clone(),
                        composed,
                        result,
                    },
                );
                self.log(ev);
            }
            VStep::Cfc(_) | VStep::Dhma(_) => self.fail("baseline violation step under the federated architecture"),
        }
    }
}

/// Helper used by tests and the CLI: all tasks of a run in a stable order.
pub fn task_ids(result: &RunResult) -> BTreeSet<String> {
    result.tasks.iter().map(|t| t.task_id.clone()).collect()
}
