//! Chase-escape on fixed graphs: the half-line chain with a knight behind the
//! root, and the rooted k-ary tree. Both reuse the engine in
//! [`crate::dynamics`] through the [`Network`] trait.
//!
//! On the chain with pattern `W, I, …, I, S, S, …` the infected sites always
//! form a contiguous block between the knight front and the infection front.
//! The block length (the gap) is a birth-death chain that grows at rate
//! `λ_I` and shrinks at rate 1, so survival is a gambler's-ruin probability.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{run, Network, NodeState, OutcomeClass, RateParams, SimOutcome, StopPolicy};
use crate::error::{domain, parameter, Result};
use crate::stream::{stream, CellKey};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ChainSite {
    #[serde(rename = "S")]
    Susceptible,
    #[serde(rename = "I")]
    Infected,
    #[serde(rename = "W")]
    Knight,
    /// The site and its two edges are removed.
    #[serde(rename = "-")]
    Absent,
}

/// Half-line chain: sites `0, 1, …, length_cap`. The first sites follow
/// `pattern`, the rest are susceptible, and site `length_cap` is the
/// censoring boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChainConfig {
    pub pattern: Vec<ChainSite>,
    pub lambda_i: f64,
    pub length_cap: usize,
}

impl ChainConfig {
    /// Knight at site 0 followed by `gap` infected sites.
    pub fn knight_then_infected(gap: usize, lambda_i: f64, length_cap: usize) -> Self {
        let mut pattern = vec![ChainSite::Knight];
        pattern.extend(std::iter::repeat_n(ChainSite::Infected, gap));
        ChainConfig { pattern, lambda_i, length_cap }
    }

    pub fn validate(&self) -> Result<()> {
        if !self.pattern.contains(&ChainSite::Infected) {
            return Err(parameter("chain pattern needs at least one infected site"));
        }
        if self.pattern.len() > self.length_cap {
            return Err(parameter("chain pattern is longer than the length cap"));
        }
        if self.pattern.first() == Some(&ChainSite::Absent) || self.pattern.last() == Some(&ChainSite::Absent) {
            return Err(parameter("absent sites are only allowed in the interior of the pattern"));
        }
        RateParams::with_infection_rate(self.lambda_i)?;
        Ok(())
    }
}

/// The chain as a [`Network`]; node ids follow site order, absent sites
/// are skipped.
#[derive(Debug, Clone)]
pub struct ChainNetwork {
    sites: Vec<usize>,
    states: Vec<NodeState>,
    adjacency: Vec<Vec<usize>>,
    origin_site: usize,
    length_cap: usize,
}

impl ChainNetwork {
    pub fn new(config: &ChainConfig) -> Result<Self> {
        config.validate()?;
        let site_state = |s: usize| config.pattern.get(s).copied().unwrap_or(ChainSite::Susceptible);
        let mut sites = Vec::new();
        let mut states = Vec::new();
        for s in 0..=config.length_cap {
            let state = match site_state(s) {
                ChainSite::Absent => continue,
                ChainSite::Susceptible => NodeState::Susceptible,
                ChainSite::Infected => NodeState::Infected,
                ChainSite::Knight => NodeState::Knight,
            };
            sites.push(s);
            states.push(state);
        }
        let mut adjacency = vec![Vec::new(); sites.len()];
        for v in 1..sites.len() {
            if sites[v] == sites[v - 1] + 1 {
                adjacency[v].push(v - 1);
                adjacency[v - 1].push(v);
            }
        }
        let origin_site = config.pattern.iter().position(|&s| s == ChainSite::Infected).unwrap_or(0);
        Ok(ChainNetwork { sites, states, adjacency, origin_site, length_cap: config.length_cap })
    }

    /// Chain position of node `v`.
    pub fn site(&self, v: usize) -> usize {
        self.sites[v]
    }
}

impl Network for ChainNetwork {
    fn node_count(&self) -> usize {
        self.sites.len()
    }

    fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    fn initial_state(&self, v: usize) -> NodeState {
        self.states[v]
    }

    fn is_boundary(&self, v: usize) -> bool {
        self.sites[v] == self.length_cap
    }

    fn displacement(&self, v: usize) -> f64 {
        self.sites[v].abs_diff(self.origin_site) as f64
    }
}

fn censoring_policy(max_events: u64) -> StopPolicy {
    StopPolicy { max_events: Some(max_events), max_infected: None, max_time: None, boundary_censoring: true }
}

/// Runs the chain; reaching site `length_cap` is reported as
/// [`OutcomeClass::GlobalProxy`].
pub fn simulate_chain<R: Rng + ?Sized>(config: &ChainConfig, rng: &mut R) -> Result<SimOutcome> {
    let network = ChainNetwork::new(config)?;
    // Every site is infected and patched at most once.
    let max_events = 2 * network.node_count() as u64 + 1;
    run(network, RateParams::with_infection_rate(config.lambda_i)?, &censoring_policy(max_events), rng)
}

/// Exact survival probability of the chain `W, I×gap, S, S, …` on the
/// infinite half-line: `1 − λ^{−gap}` for `λ > 1`, else 0.
pub fn chain_survival_oracle(initial_gap: u32, lambda_i: f64) -> Result<f64> {
    if initial_gap < 1 {
        return Err(domain("initial gap must be at least 1"));
    }
    if !(lambda_i >= 0.0) || !lambda_i.is_finite() {
        return Err(domain(format!("lambda_i must be finite and non-negative, got {lambda_i}")));
    }
    if lambda_i <= 1.0 {
        return Ok(0.0);
    }
    Ok(1.0 - lambda_i.recip().powi(initial_gap as i32).min(1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProportionEstimate {
    pub estimate: f64,
    pub stderr: f64,
    pub replications: u64,
}

impl ProportionEstimate {
    pub fn from_hits(hits: u64, replications: u64) -> Self {
        let p = hits as f64 / replications as f64;
        ProportionEstimate { estimate: p, stderr: (p * (1.0 - p) / replications as f64).sqrt(), replications }
    }
}

/// Stream family used by [`chain_reach_prob`].
pub const REACH_STREAM_TAG: u64 = 0x0072_6561_6368;

/// Monte Carlo estimate of the probability that, starting from
/// `W(o′), I(o), S, S, …`, the site `n` steps beyond `o` is ever infected.
pub fn chain_reach_prob(n: usize, lambda_i: f64, replications: u64, master_seed: u64) -> Result<ProportionEstimate> {
    if n < 1 {
        return Err(parameter("reach distance must be at least 1"));
    }
    if replications == 0 {
        return Err(parameter("at least one replication is required"));
    }
    // o′ at site 0, o at site 1, so distance n is site n + 1.
    let config = ChainConfig::knight_then_infected(1, lambda_i, n + 1);
    let hits = (0..replications)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream(master_seed, CellKey::tagged(REACH_STREAM_TAG, n as u64), rep);
            simulate_chain(&config, &mut rng).map(|o| o.class == OutcomeClass::GlobalProxy)
        })
        .collect::<Result<Vec<bool>>>()?;
    Ok(ProportionEstimate::from_hits(hits.iter().filter(|&&h| h).count() as u64, replications))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TreeConfig {
    /// Branching factor.
    pub k: u32,
    pub depth_cap: u32,
    pub lambda_i: f64,
    /// Attach a white knight `o′` above the root.
    pub root_knight: bool,
    /// Maximum number of materialized nodes.
    pub node_budget: usize,
}

impl TreeConfig {
    pub fn new(k: u32, depth_cap: u32, lambda_i: f64) -> Self {
        TreeConfig { k, depth_cap, lambda_i, root_knight: true, node_budget: 5_000_000 }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k < 1 {
            return Err(parameter("tree branching factor must be at least 1"));
        }
        if self.depth_cap < 1 {
            return Err(parameter("tree depth cap must be at least 1"));
        }
        RateParams::with_infection_rate(self.lambda_i)?;
        Ok(())
    }
}

/// Rooted k-ary tree truncated at `depth_cap`. In lazy mode the children of
/// a node are created when it is first infected; in eager mode the whole
/// tree is built up front. Neighbour lists are `[parent, child_1, …, child_k]`
/// in both modes, so both produce the same event sequence from one stream.
#[derive(Debug, Clone)]
pub struct TreeNetwork {
    k: u32,
    depth_cap: u32,
    node_budget: usize,
    lazy: bool,
    depth: Vec<i64>,
    expanded: Vec<bool>,
    states: Vec<NodeState>,
    adjacency: Vec<Vec<usize>>,
}

impl TreeNetwork {
    pub fn lazy(config: &TreeConfig) -> Result<Self> {
        Self::build(config, true)
    }

    /// Materializes all `(k^{depth_cap+1} − 1)/(k − 1)` nodes.
    pub fn eager(config: &TreeConfig) -> Result<Self> {
        Self::build(config, false)
    }

    fn build(config: &TreeConfig, lazy: bool) -> Result<Self> {
        config.validate()?;
        let mut tree = TreeNetwork {
            k: config.k,
            depth_cap: config.depth_cap,
            node_budget: config.node_budget,
            lazy,
            depth: Vec::new(),
            expanded: Vec::new(),
            states: Vec::new(),
            adjacency: Vec::new(),
        };
        let root = if config.root_knight {
            tree.push(-1, NodeState::Knight, None);
            tree.expanded[0] = true;
            tree.push(0, NodeState::Infected, Some(0))
        } else {
            tree.push(0, NodeState::Infected, None)
        };
        if !lazy {
            let mut frontier = vec![root];
            while let Some(v) = frontier.pop() {
                if !tree.grow(v) {
                    return Err(parameter("eager tree exceeds the node budget"));
                }
                frontier.extend(tree.adjacency[v].iter().copied().filter(|&c| tree.depth[c] > tree.depth[v]));
            }
        }
        Ok(tree)
    }

    fn push(&mut self, depth: i64, state: NodeState, parent: Option<usize>) -> usize {
        let id = self.depth.len();
        self.depth.push(depth);
        self.expanded.push(false);
        self.states.push(state);
        self.adjacency.push(Vec::new());
        if let Some(p) = parent {
            self.adjacency[p].push(id);
            self.adjacency[id].push(p);
        }
        id
    }

    /// Creates the children of `v` unless already done or at the depth cap.
    fn grow(&mut self, v: usize) -> bool {
        if self.expanded[v] || self.depth[v] >= i64::from(self.depth_cap) {
            self.expanded[v] = true;
            return true;
        }
        if self.depth.len() + self.k as usize > self.node_budget {
            return false;
        }
        self.expanded[v] = true;
        for _ in 0..self.k {
            self.push(self.depth[v] + 1, NodeState::Susceptible, Some(v));
        }
        true
    }

    pub fn depth(&self, v: usize) -> i64 {
        self.depth[v]
    }
}

impl Network for TreeNetwork {
    fn node_count(&self) -> usize {
        self.depth.len()
    }

    fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    fn initial_state(&self, v: usize) -> NodeState {
        self.states[v]
    }

    fn is_boundary(&self, v: usize) -> bool {
        self.depth[v] == i64::from(self.depth_cap)
    }

    fn displacement(&self, v: usize) -> f64 {
        self.depth[v].unsigned_abs() as f64
    }

    fn expand(&mut self, v: usize) -> bool {
        if self.lazy {
            self.grow(v)
        } else {
            true
        }
    }
}

fn tree_policy() -> StopPolicy {
    StopPolicy { max_events: Some(u64::MAX), max_infected: None, max_time: None, boundary_censoring: true }
}

/// Chase-escape on the lazily built k-ary tree. Infection at depth
/// `depth_cap` gives [`OutcomeClass::GlobalProxy`] with a boundary stop;
/// exhausting the node budget gives a cap stop.
pub fn simulate_tree<R: Rng + ?Sized>(config: &TreeConfig, rng: &mut R) -> Result<SimOutcome> {
    run(TreeNetwork::lazy(config)?, RateParams::with_infection_rate(config.lambda_i)?, &tree_policy(), rng)
}

/// [`simulate_tree`] on an eagerly built tree.
pub fn simulate_tree_eager<R: Rng + ?Sized>(config: &TreeConfig, rng: &mut R) -> Result<SimOutcome> {
    run(TreeNetwork::eager(config)?, RateParams::with_infection_rate(config.lambda_i)?, &tree_policy(), rng)
}
