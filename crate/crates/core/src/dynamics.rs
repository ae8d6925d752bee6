//! Continuous-time chase-escape dynamics.
//!
//! A susceptible node becomes infected at rate `λ_I · #(infected neighbours)`
//! and an infected node becomes a white knight at rate
//! `λ_W · #(white-knight neighbours)`. The process is simulated exactly with
//! the direct Gillespie method: the waiting time is exponential with the
//! total rate, the event category (infection or patch) is drawn by aggregate
//! rate, and the node inside the category by its integer reaction count.
//!
//! Reaction counts are cached per node and updated incrementally, so a step
//! costs `O(degree + active nodes)`.

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{parameter, Error, Result};
use crate::geometry::{GilbertGraph, Mark};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum NodeState {
    #[serde(rename = "S")]
    Susceptible,
    #[serde(rename = "I")]
    Infected,
    #[serde(rename = "W")]
    Knight,
}

/// The substrate the dynamics run on.
///
/// Implementations may grow lazily: [`Network::expand`] is called right
/// before a node is infected and may append new nodes, which must start
/// susceptible.
pub trait Network {
    fn node_count(&self) -> usize;
    fn neighbors(&self, v: usize) -> &[usize];
    fn initial_state(&self, v: usize) -> NodeState;
    /// Nodes whose infection censors the run when boundary censoring is on.
    fn is_boundary(&self, v: usize) -> bool;
    /// Distance of `v` from the origin of the infection.
    fn displacement(&self, v: usize) -> f64;

    /// Materializes the neighbourhood of `v`. Returns false when a node
    /// budget prevents it.
    fn expand(&mut self, _v: usize) -> bool {
        true
    }
}

impl Network for GilbertGraph {
    fn node_count(&self) -> usize {
        GilbertGraph::node_count(self)
    }

    fn neighbors(&self, v: usize) -> &[usize] {
        GilbertGraph::neighbors(self, v)
    }

    fn initial_state(&self, v: usize) -> NodeState {
        if v == self.config().origin_index() {
            NodeState::Infected
        } else {
            match self.config().mark(v) {
                Mark::Susceptible => NodeState::Susceptible,
                Mark::WhiteKnight => NodeState::Knight,
            }
        }
    }

    fn is_boundary(&self, v: usize) -> bool {
        self.in_boundary_shell(v)
    }

    fn displacement(&self, v: usize) -> f64 {
        self.config().position(v).iter().map(|c| c * c).sum::<f64>().sqrt()
    }
}

impl Network for &GilbertGraph {
    fn node_count(&self) -> usize {
        GilbertGraph::node_count(self)
    }

    fn neighbors(&self, v: usize) -> &[usize] {
        GilbertGraph::neighbors(self, v)
    }

    fn initial_state(&self, v: usize) -> NodeState {
        (**self).initial_state(v)
    }

    fn is_boundary(&self, v: usize) -> bool {
        self.in_boundary_shell(v)
    }

    fn displacement(&self, v: usize) -> f64 {
        (**self).displacement(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateParams {
    /// Infection rate per infected neighbour.
    pub lambda_i: f64,
    /// Patch rate per white-knight neighbour.
    pub lambda_w: f64,
}

impl RateParams {
    pub fn new(lambda_i: f64, lambda_w: f64) -> Result<Self> {
        let params = RateParams { lambda_i, lambda_w };
        params.validate()?;
        Ok(params)
    }

    /// Patch rate fixed to 1.
    pub fn with_infection_rate(lambda_i: f64) -> Result<Self> {
        Self::new(lambda_i, 1.0)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_i >= 0.0) || !self.lambda_i.is_finite() {
            return Err(parameter(format!("lambda_i must be finite and non-negative, got {}", self.lambda_i)));
        }
        if !(self.lambda_w > 0.0) || !self.lambda_w.is_finite() {
            return Err(parameter(format!("lambda_w must be finite and positive, got {}", self.lambda_w)));
        }
        Ok(())
    }
}

impl Default for RateParams {
    fn default() -> Self {
        RateParams { lambda_i: 1.0, lambda_w: 1.0 }
    }
}

/// When a run stops short of absorption.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopPolicy {
    pub max_events: Option<u64>,
    /// Cap on the number of ever-infected nodes.
    pub max_infected: Option<usize>,
    pub max_time: Option<f64>,
    /// Stop as soon as an ever-infected node lies in the boundary shell.
    pub boundary_censoring: bool,
}

impl Default for StopPolicy {
    fn default() -> Self {
        StopPolicy { max_events: Some(50_000_000), max_infected: None, max_time: None, boundary_censoring: true }
    }
}

impl StopPolicy {
    pub fn validate(&self) -> Result<()> {
        if self.max_events.is_none() && self.max_infected.is_none() && self.max_time.is_none() {
            return Err(parameter("stop policy needs at least one finite cap"));
        }
        if let Some(t) = self.max_time {
            if !(t >= 0.0) {
                return Err(parameter(format!("max_time must be non-negative, got {t}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum OutcomeClass {
    Extinction,
    LocalSurvival,
    GlobalProxy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum StopReason {
    /// No transition is enabled; the configuration is frozen forever.
    Absorbed,
    /// Infection reached the boundary shell.
    Boundary,
    /// An event, time, infected-count or node-budget cap was hit.
    Cap,
}

/// Maps a stop reason and the number of currently infected nodes to the
/// outcome class.
pub fn classify(stop_reason: StopReason, infected_count: i64) -> Result<OutcomeClass> {
    match stop_reason {
        StopReason::Absorbed if infected_count < 0 => {
            Err(Error::Internal(format!("negative infected count {infected_count}")))
        }
        StopReason::Absorbed if infected_count == 0 => Ok(OutcomeClass::Extinction),
        StopReason::Absorbed => Ok(OutcomeClass::LocalSurvival),
        StopReason::Boundary | StopReason::Cap => Ok(OutcomeClass::GlobalProxy),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimOutcome {
    pub class: OutcomeClass,
    pub total_ever_infected: usize,
    /// Time of the patch that removed the last infected node.
    pub extinction_time: Option<f64>,
    pub max_displacement: f64,
    pub events: u64,
    pub stop_reason: StopReason,
    pub final_infected: usize,
    pub final_time: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Transition {
    /// S → I
    #[serde(rename = "infect")]
    Infection,
    /// I → W
    #[serde(rename = "patch")]
    Patch,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub node: usize,
    pub transition: Transition,
    /// Waiting time since the previous event.
    pub dt: f64,
    /// Process time after the event.
    pub time: f64,
}

/// Set with O(1) insert/remove and a stable iteration order that depends
/// only on the sequence of operations.
#[derive(Debug, Clone, Default)]
struct ActiveSet {
    members: Vec<usize>,
    slot: Vec<usize>,
}

const ABSENT: usize = usize::MAX;

impl ActiveSet {
    fn grow(&mut self, n: usize) {
        self.slot.resize(n, ABSENT);
    }

    fn insert(&mut self, v: usize) {
        if self.slot[v] == ABSENT {
            self.slot[v] = self.members.len();
            self.members.push(v);
        }
    }

    fn remove(&mut self, v: usize) {
        let at = self.slot[v];
        if at != ABSENT {
            self.members.swap_remove(at);
            if let Some(&moved) = self.members.get(at) {
                self.slot[moved] = at;
            }
            self.slot[v] = ABSENT;
        }
    }
}

/// Mutable state of one run. Owned by a single worker.
#[derive(Debug, Clone)]
pub struct DynamicState<N: Network> {
    network: N,
    params: RateParams,
    states: Vec<NodeState>,
    /// Infected neighbours, maintained for every node.
    infected_nbrs: Vec<u32>,
    /// White-knight neighbours, maintained for every node.
    knight_nbrs: Vec<u32>,
    /// Susceptible nodes with at least one infected neighbour.
    infectable: ActiveSet,
    /// Infected nodes with at least one knight neighbour.
    patchable: ActiveSet,
    infect_weight: u64,
    patch_weight: u64,
    clock: f64,
    events: u64,
    ever_infected: Vec<usize>,
    initial_knights: usize,
    n_infected: usize,
    max_displacement: f64,
    boundary_hit: bool,
    budget_exhausted: bool,
    extinction_time: Option<f64>,
}

/// Initial state: the network's designated infected node(s), its susceptible
/// and knight nodes, clock 0.
pub fn init_state<N: Network>(network: N, params: RateParams) -> Result<DynamicState<N>> {
    DynamicState::new(network, params)
}

impl<N: Network> DynamicState<N> {
    pub fn new(mut network: N, params: RateParams) -> Result<Self> {
        params.validate()?;
        let seeds: Vec<usize> =
            (0..network.node_count()).filter(|&v| network.initial_state(v) == NodeState::Infected).collect();
        let mut budget_exhausted = false;
        for &v in &seeds {
            budget_exhausted |= !network.expand(v);
        }
        let n = network.node_count();
        let states: Vec<NodeState> = (0..n).map(|v| network.initial_state(v)).collect();
        let mut state = DynamicState {
            network,
            params,
            states,
            infected_nbrs: vec![0; n],
            knight_nbrs: vec![0; n],
            infectable: ActiveSet::default(),
            patchable: ActiveSet::default(),
            infect_weight: 0,
            patch_weight: 0,
            clock: 0.0,
            events: 0,
            ever_infected: Vec::new(),
            initial_knights: 0,
            n_infected: 0,
            max_displacement: 0.0,
            boundary_hit: false,
            budget_exhausted,
            extinction_time: None,
        };
        state.infectable.grow(n);
        state.patchable.grow(n);
        state.rebuild();
        state.initial_knights = state.states.iter().filter(|&&s| s == NodeState::Knight).count();
        for v in 0..n {
            if state.states[v] == NodeState::Infected {
                state.ever_infected.push(v);
                state.note_infected(v);
            }
        }
        Ok(state)
    }

    /// Recomputes every cached count from the states.
    fn rebuild(&mut self) {
        let n = self.states.len();
        let (infected, knights) = recount(&self.network, &self.states);
        self.infected_nbrs = infected;
        self.knight_nbrs = knights;
        self.infectable = ActiveSet::default();
        self.patchable = ActiveSet::default();
        self.infectable.grow(n);
        self.patchable.grow(n);
        self.infect_weight = 0;
        self.patch_weight = 0;
        self.n_infected = 0;
        for v in 0..n {
            match self.states[v] {
                NodeState::Susceptible if self.infected_nbrs[v] > 0 => {
                    self.infectable.insert(v);
                    self.infect_weight += u64::from(self.infected_nbrs[v]);
                }
                NodeState::Infected => {
                    self.n_infected += 1;
                    if self.knight_nbrs[v] > 0 {
                        self.patchable.insert(v);
                        self.patch_weight += u64::from(self.knight_nbrs[v]);
                    }
                }
                _ => {}
            }
        }
    }

    fn note_infected(&mut self, v: usize) {
        self.max_displacement = self.max_displacement.max(self.network.displacement(v));
        self.boundary_hit |= self.network.is_boundary(v);
    }

    pub fn network(&self) -> &N {
        &self.network
    }

    pub fn params(&self) -> RateParams {
        self.params
    }

    pub fn state(&self, v: usize) -> NodeState {
        self.states[v]
    }

    pub fn states(&self) -> &[NodeState] {
        &self.states
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn infected_count(&self) -> usize {
        self.n_infected
    }

    /// Nodes that have ever been infected, in infection order.
    pub fn ever_infected(&self) -> &[usize] {
        &self.ever_infected
    }

    pub fn initial_knights(&self) -> usize {
        self.initial_knights
    }

    pub fn infected_neighbor_count(&self, v: usize) -> u32 {
        self.infected_nbrs[v]
    }

    pub fn knight_neighbor_count(&self, v: usize) -> u32 {
        self.knight_nbrs[v]
    }

    pub fn total_rate(&self) -> f64 {
        self.infection_rate() + self.patch_rate()
    }

    fn infection_rate(&self) -> f64 {
        self.params.lambda_i * self.infect_weight as f64
    }

    fn patch_rate(&self) -> f64 {
        self.params.lambda_w * self.patch_weight as f64
    }

    pub fn is_absorbed(&self) -> bool {
        self.total_rate() == 0.0
    }

    pub fn boundary_hit(&self) -> bool {
        self.boundary_hit
    }

    pub fn budget_exhausted(&self) -> bool {
        self.budget_exhausted
    }

    pub fn max_displacement(&self) -> f64 {
        self.max_displacement
    }

    pub fn extinction_time(&self) -> Option<f64> {
        self.extinction_time
    }

    /// Draws the next event without applying it: `(dt, node, transition)`.
    fn sample_event<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(f64, usize, Transition)> {
        let total = self.total_rate();
        if !(total > 0.0) {
            return Err(Error::Absorbed);
        }
        let dt = <Exp1 as Distribution<f64>>::sample(&Exp1, rng) / total;
        let u: f64 = rng.random();
        let infect = self.patch_weight == 0 || (self.infect_weight > 0 && u * total < self.infection_rate());
        let (set, counts, weight, transition) = if infect {
            (&self.infectable, &self.infected_nbrs, self.infect_weight, Transition::Infection)
        } else {
            (&self.patchable, &self.knight_nbrs, self.patch_weight, Transition::Patch)
        };
        let mut pick = rng.random_range(0..weight);
        for &v in &set.members {
            let w = u64::from(counts[v]);
            if pick < w {
                return Ok((dt, v, transition));
            }
            pick -= w;
        }
        Err(Error::Internal("reaction weights out of sync with active set".into()))
    }

    /// Performs one event. Fails with [`Error::Absorbed`] when no transition
    /// is enabled.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<EventRecord> {
        let (dt, node, transition) = self.sample_event(rng)?;
        self.apply(dt, node, transition);
        Ok(EventRecord { node, transition, dt, time: self.clock })
    }

    fn apply(&mut self, dt: f64, v: usize, transition: Transition) {
        self.clock += dt;
        self.events += 1;
        match transition {
            Transition::Infection => self.infect(v),
            Transition::Patch => self.patch(v),
        }
    }

    fn infect(&mut self, v: usize) {
        debug_assert_eq!(self.states[v], NodeState::Susceptible);
        let before = self.network.node_count();
        if !self.network.expand(v) {
            self.budget_exhausted = true;
        }
        self.adopt_new_nodes(before);

        self.infectable.remove(v);
        self.infect_weight -= u64::from(self.infected_nbrs[v]);
        self.states[v] = NodeState::Infected;
        self.n_infected += 1;
        self.ever_infected.push(v);
        if self.knight_nbrs[v] > 0 {
            self.patchable.insert(v);
            self.patch_weight += u64::from(self.knight_nbrs[v]);
        }
        for &u in self.network.neighbors(v) {
            self.infected_nbrs[u] += 1;
            if self.states[u] == NodeState::Susceptible {
                self.infect_weight += 1;
                self.infectable.insert(u);
            }
        }
        self.note_infected(v);
    }

    fn patch(&mut self, v: usize) {
        debug_assert_eq!(self.states[v], NodeState::Infected);
        self.patchable.remove(v);
        self.patch_weight -= u64::from(self.knight_nbrs[v]);
        self.states[v] = NodeState::Knight;
        self.n_infected -= 1;
        for &u in self.network.neighbors(v) {
            self.infected_nbrs[u] -= 1;
            self.knight_nbrs[u] += 1;
            match self.states[u] {
                NodeState::Susceptible => {
                    self.infect_weight -= 1;
                    if self.infected_nbrs[u] == 0 {
                        self.infectable.remove(u);
                    }
                }
                NodeState::Infected => {
                    self.patch_weight += 1;
                    self.patchable.insert(u);
                }
                NodeState::Knight => {}
            }
        }
        if self.n_infected == 0 {
            self.extinction_time = Some(self.clock);
        }
    }

    /// Registers nodes appended by `expand`; they start susceptible.
    fn adopt_new_nodes(&mut self, before: usize) {
        let n = self.network.node_count();
        if n == before {
            return;
        }
        self.states.resize(n, NodeState::Susceptible);
        self.infected_nbrs.resize(n, 0);
        self.knight_nbrs.resize(n, 0);
        self.infectable.grow(n);
        self.patchable.grow(n);
        for v in before..n {
            debug_assert_eq!(self.network.initial_state(v), NodeState::Susceptible);
            let (mut inf, mut kn) = (0, 0);
            for &u in self.network.neighbors(v) {
                match self.states[u] {
                    NodeState::Infected => inf += 1,
                    NodeState::Knight => kn += 1,
                    NodeState::Susceptible => {}
                }
            }
            self.infected_nbrs[v] = inf;
            self.knight_nbrs[v] = kn;
            if inf > 0 {
                self.infectable.insert(v);
                self.infect_weight += u64::from(inf);
            }
        }
    }

    /// Checks every cached quantity against a full recount.
    pub fn verify(&self) -> std::result::Result<(), String> {
        let (infected, knights) = recount(&self.network, &self.states);
        if infected != self.infected_nbrs {
            return Err("infected-neighbour counts diverged".into());
        }
        if knights != self.knight_nbrs {
            return Err("knight-neighbour counts diverged".into());
        }
        let mut infect_weight = 0u64;
        let mut patch_weight = 0u64;
        let mut n_infected = 0;
        for (v, &s) in self.states.iter().enumerate() {
            let in_infectable = self.infectable.slot[v] != ABSENT;
            let in_patchable = self.patchable.slot[v] != ABSENT;
            let want_infectable = s == NodeState::Susceptible && infected[v] > 0;
            let want_patchable = s == NodeState::Infected && knights[v] > 0;
            if in_infectable != want_infectable || in_patchable != want_patchable {
                return Err(format!("active-set membership wrong at node {v}"));
            }
            match s {
                NodeState::Susceptible => infect_weight += u64::from(infected[v]),
                NodeState::Infected => {
                    n_infected += 1;
                    patch_weight += u64::from(knights[v]);
                }
                NodeState::Knight => {}
            }
        }
        if (infect_weight, patch_weight) != (self.infect_weight, self.patch_weight) {
            return Err("aggregate weights diverged".into());
        }
        if n_infected != self.n_infected {
            return Err("infected count diverged".into());
        }
        let expected = self.params.lambda_i * infect_weight as f64 + self.params.lambda_w * patch_weight as f64;
        if expected != self.total_rate() {
            return Err("total rate diverged".into());
        }
        let knights_now = self.states.iter().filter(|&&s| s == NodeState::Knight).count();
        if self.ever_infected.len() != self.n_infected + knights_now - self.initial_knights {
            return Err("ever-infected count does not equal |I| + |W| - |W(0)|".into());
        }
        Ok(())
    }

    /// Runs until absorption, censoring or a cap. Events are appended to
    /// `trace` when one is supplied.
    pub fn run_until_stopped<R: Rng + ?Sized>(
        &mut self,
        policy: &StopPolicy,
        rng: &mut R,
        mut trace: Option<&mut Vec<EventRecord>>,
    ) -> Result<SimOutcome> {
        policy.validate()?;
        let stop_reason = loop {
            if policy.boundary_censoring && self.boundary_hit {
                break StopReason::Boundary;
            }
            if self.budget_exhausted {
                break StopReason::Cap;
            }
            if self.is_absorbed() {
                break StopReason::Absorbed;
            }
            if policy.max_infected.is_some_and(|m| self.ever_infected.len() >= m)
                || policy.max_events.is_some_and(|m| self.events >= m)
            {
                break StopReason::Cap;
            }
            let (dt, node, transition) = self.sample_event(rng)?;
            if let Some(t_max) = policy.max_time {
                if self.clock + dt > t_max {
                    self.clock = t_max;
                    break StopReason::Cap;
                }
            }
            self.apply(dt, node, transition);
            if let Some(trace) = trace.as_deref_mut() {
                trace.push(EventRecord { node, transition, dt, time: self.clock });
            }
        };
        self.outcome(stop_reason)
    }

    fn outcome(&self, stop_reason: StopReason) -> Result<SimOutcome> {
        Ok(SimOutcome {
            class: classify(stop_reason, self.n_infected as i64)?,
            total_ever_infected: self.ever_infected.len(),
            extinction_time: self.extinction_time,
            max_displacement: self.max_displacement,
            events: self.events,
            stop_reason,
            final_infected: self.n_infected,
            final_time: self.clock,
        })
    }

    pub fn into_network(self) -> N {
        self.network
    }
}

fn recount<N: Network>(network: &N, states: &[NodeState]) -> (Vec<u32>, Vec<u32>) {
    let n = states.len();
    let mut infected = vec![0u32; n];
    let mut knights = vec![0u32; n];
    for v in 0..n {
        for &u in network.neighbors(v) {
            match states[u] {
                NodeState::Infected => infected[v] += 1,
                NodeState::Knight => knights[v] += 1,
                NodeState::Susceptible => {}
            }
        }
    }
    (infected, knights)
}

/// Simulates one trajectory from the initial condition to a stop.
pub fn run<N: Network, R: Rng + ?Sized>(network: N, params: RateParams, policy: &StopPolicy, rng: &mut R) -> Result<SimOutcome> {
    DynamicState::new(network, params)?.run_until_stopped(policy, rng, None)
}

/// Like [`run`] but also returns the event list.
pub fn run_traced<N: Network, R: Rng + ?Sized>(
    network: N,
    params: RateParams,
    policy: &StopPolicy,
    rng: &mut R,
) -> Result<(SimOutcome, Vec<EventRecord>)> {
    let mut trace = Vec::new();
    let outcome = DynamicState::new(network, params)?.run_until_stopped(policy, rng, Some(&mut trace))?;
    Ok((outcome, trace))
}

/// Per-run output record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub class: OutcomeClass,
    pub total_ever_infected: usize,
    pub extinction_time: Option<f64>,
    pub max_displacement: f64,
    pub events: u64,
    pub stop_reason: StopReason,
    pub seed: u64,
    pub replication_index: u64,
}

impl RunRecord {
    pub fn new(outcome: &SimOutcome, seed: u64, replication_index: u64) -> Self {
        RunRecord {
            class: outcome.class,
            total_ever_infected: outcome.total_ever_infected,
            extinction_time: outcome.extinction_time,
            max_displacement: outcome.max_displacement,
            events: outcome.events,
            stop_reason: outcome.stop_reason,
            seed,
            replication_index,
        }
    }
}
