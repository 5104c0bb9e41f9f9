//! Welfare-maximizing slot allocation as a minimum-cost flow.
//!
//! The bipartite graph of agents and slots becomes a flow network
//!
//! ```text
//! source --(cap 1, cost 0)--> agent i --(cap 1, cost -v_ij)--> slot j --(cap k, cost 0)--> sink
//! ```
//!
//! and the allocation is found by successive shortest augmenting paths with
//! node potentials. Every augmenting path carries one unit (one more agent),
//! so at most `n` augmentations are needed.
//!
//! Shortest paths are computed on a contracted graph whose nodes are the `m`
//! slots plus the sink. A path `source -> agent -> slot` collapses to a single
//! edge priced by the best free agent for that slot, and a detour
//! `slot j -> agent i -> slot j'` (moving an allocated agent) collapses to an
//! edge priced by the best agent currently in `j`. Agent potentials cancel on
//! both kinds of edges, so the contracted Dijkstra sees exactly the reduced
//! costs of the full network. Candidate agents are kept in per-slot sorted
//! lists and per-slot-pair lazy heaps, which makes one augmentation cost
//! `O(m^2 log n)` instead of `O(nm log n)`.
//!
//! Ties are broken deterministically: among equally good candidate agents the
//! lower agent index wins, Dijkstra settles equal distances in increasing slot
//! order and only strictly shorter paths replace a predecessor. Augmentation
//! stops at the first shortest path with strictly positive cost.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::error::Result;
use crate::types::{Allocation, Assignment, Instance};

/// Kind of a node in the flow network.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Node {
    Source,
    Agent(usize),
    Slot(usize),
    Sink,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Arc {
    pub from: usize,
    pub to: usize,
    pub capacity: usize,
    pub cost: f64,
    pub flow: usize,
}

impl Arc {
    fn residual(&self) -> usize {
        self.capacity - self.flow
    }
}

/// The b-matching network for one instance. Node ids: source `0`, agents
/// `1..=n`, slots `n+1..=n+m`, sink `n+m+1`. Arc ids: source arcs `0..n`,
/// agent-slot arcs `n + i*m + j`, sink arcs `n + n*m + j`.
#[derive(Debug, Clone)]
pub struct FlowNetwork {
    n: usize,
    m: usize,
    k: usize,
    arcs: Vec<Arc>,
    potentials: Vec<f64>,
}

pub fn build_network(instance: &Instance) -> FlowNetwork {
    let (n, m, k) = (instance.n(), instance.m(), instance.k());
    let mut net = FlowNetwork {
        n,
        m,
        k,
        arcs: Vec::with_capacity(n + n * m + m),
        potentials: vec![0.0; n + m + 2],
    };
    for i in 0..n {
        let (from, to) = (net.node_id(Node::Source), net.node_id(Node::Agent(i)));
        net.arcs.push(Arc {
            from,
            to,
            capacity: 1,
            cost: 0.0,
            flow: 0,
        });
    }
    for i in 0..n {
        for j in 0..m {
            let (from, to) = (net.node_id(Node::Agent(i)), net.node_id(Node::Slot(j)));
            let cost = -instance.valuation(i, j);
            net.arcs.push(Arc {
                from,
                to,
                capacity: 1,
                cost,
                flow: 0,
            });
        }
    }
    for j in 0..m {
        let (from, to) = (net.node_id(Node::Slot(j)), net.node_id(Node::Sink));
        net.arcs.push(Arc {
            from,
            to,
            capacity: k,
            cost: 0.0,
            flow: 0,
        });
    }
    net
}

impl FlowNetwork {
    pub fn node_count(&self) -> usize {
        self.n + self.m + 2
    }

    /// Slot capacity, i.e. the capacity of every slot-sink arc.
    pub fn slot_capacity(&self) -> usize {
        self.k
    }

    pub fn arcs(&self) -> &[Arc] {
        &self.arcs
    }

    pub fn node_id(&self, node: Node) -> usize {
        match node {
            Node::Source => 0,
            Node::Agent(i) => 1 + i,
            Node::Slot(j) => 1 + self.n + j,
            Node::Sink => 1 + self.n + self.m,
        }
    }

    pub fn node(&self, id: usize) -> Node {
        if id == 0 {
            Node::Source
        } else if id <= self.n {
            Node::Agent(id - 1)
        } else if id <= self.n + self.m {
            Node::Slot(id - 1 - self.n)
        } else {
            Node::Sink
        }
    }

    pub fn potential(&self, node: Node) -> f64 {
        self.potentials[self.node_id(node)]
    }

    fn source_arc(&self, agent: usize) -> usize {
        agent
    }

    fn agent_arc(&self, agent: usize, slot: usize) -> usize {
        self.n + agent * self.m + slot
    }

    fn sink_arc(&self, slot: usize) -> usize {
        self.n + self.n * self.m + slot
    }

    /// Net outflow minus inflow per node.
    pub fn imbalance(&self) -> Vec<i64> {
        let mut net = vec![0i64; self.node_count()];
        for arc in &self.arcs {
            net[arc.from] += arc.flow as i64;
            net[arc.to] -= arc.flow as i64;
        }
        net
    }

    /// True when every internal node conserves flow and every arc flow lies
    /// within its capacity.
    pub fn is_feasible_flow(&self) -> bool {
        let imbalance = self.imbalance();
        let internal_ok = imbalance[1..self.node_count() - 1].iter().all(|&x| x == 0);
        let source = self.node_id(Node::Source);
        let sink = self.node_id(Node::Sink);
        internal_ok && imbalance[source] == -imbalance[sink] && self.arcs.iter().all(|a| a.flow <= a.capacity)
    }

    /// Smallest reduced cost `c(u,v) + pi(u) - pi(v)` over all residual arcs
    /// (forward arcs with spare capacity and reverses of arcs carrying flow).
    /// `None` when the residual graph has no arcs.
    pub fn min_reduced_cost(&self) -> Option<f64> {
        let pi = &self.potentials;
        let mut min: Option<f64> = None;
        let mut see = |rc: f64| min = Some(min.map_or(rc, |m: f64| m.min(rc)));
        for arc in &self.arcs {
            if arc.residual() > 0 {
                see(arc.cost + pi[arc.from] - pi[arc.to]);
            }
            if arc.flow > 0 {
                see(-arc.cost + pi[arc.to] - pi[arc.from]);
            }
        }
        min
    }

    /// Reads the 0/1 assignment off the agent-slot arcs.
    pub fn allocation(&self) -> Allocation {
        let slots: Vec<Option<usize>> = (0..self.n)
            .map(|i| (0..self.m).find(|&j| self.arcs[self.agent_arc(i, j)].flow == 1))
            .collect();
        Allocation::from_slots(&slots)
    }

    /// Total cost of the current flow (negated welfare).
    pub fn flow_cost(&self) -> f64 {
        self.arcs.iter().map(|a| a.cost * a.flow as f64).sum()
    }
}

/// Candidate entry in a lazy heap: ordered by key, then agent index.
#[derive(Debug, Clone, Copy)]
struct Candidate {
    key: f64,
    agent: usize,
    stamp: u32,
}

impl PartialEq for Candidate {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.key
            .total_cmp(&other.key)
            .then(self.agent.cmp(&other.agent))
            .then(self.stamp.cmp(&other.stamp))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Pred {
    None,
    /// Reached from the source through a free agent.
    Source {
        agent: usize,
    },
    /// Reached from another slot by moving an agent out of it.
    Slot {
        from: usize,
        agent: usize,
    },
    /// Reached from the sink along a reversed slot->sink arc.
    Sink,
    /// Reached (sink only) from a slot with spare capacity.
    SlotToSink {
        from: usize,
    },
}

/// Result of a traced solve: the final network and the cost of every
/// augmenting path, in order.
#[derive(Debug, Clone)]
pub struct SolveTrace {
    pub allocation: Allocation,
    pub network: FlowNetwork,
    pub path_costs: Vec<f64>,
}

struct Ssp<'a> {
    instance: &'a Instance,
    net: FlowNetwork,
    slot_of: Vec<Option<usize>>,
    load: Vec<usize>,
    stamp: Vec<u32>,
    /// Per slot: agents sorted by decreasing valuation for the slot.
    free_order: Vec<Vec<usize>>,
    free_cursor: Vec<usize>,
    /// `moves[j * m + j2]`: agents in slot `j` keyed by `v_ij - v_ij2`.
    moves: Vec<BinaryHeap<Reverse<Candidate>>>,
    free_count: usize,
    path_costs: Vec<f64>,
}

impl<'a> Ssp<'a> {
    fn new(instance: &'a Instance) -> Self {
        let (n, m) = (instance.n(), instance.m());
        let mut net = build_network(instance);

        // Initial potentials from one pass over the agent->slot arcs:
        // pi(slot) = min_i(-v_ij), pi(sink) = min_j pi(slot). Agents and the
        // source stay at zero. All reduced costs start non-negative.
        let mut slot_pi = vec![0.0f64; m];
        for (j, pi) in slot_pi.iter_mut().enumerate() {
            *pi = (0..n).map(|i| -instance.valuation(i, j)).fold(0.0, f64::min);
        }
        for (j, pi) in slot_pi.iter().enumerate() {
            let id = net.node_id(Node::Slot(j));
            net.potentials[id] = *pi;
        }
        let sink = net.node_id(Node::Sink);
        net.potentials[sink] = slot_pi.iter().copied().fold(f64::INFINITY, f64::min);

        let free_order = (0..m)
            .map(|j| {
                let mut agents: Vec<usize> = (0..n).collect();
                agents.sort_by(|&a, &b| {
                    instance
                        .valuation(b, j)
                        .total_cmp(&instance.valuation(a, j))
                        .then(a.cmp(&b))
                });
                agents
            })
            .collect();

        Ssp {
            instance,
            net,
            slot_of: vec![None; n],
            load: vec![0; m],
            stamp: vec![0; n],
            free_order,
            free_cursor: vec![0; m],
            moves: (0..m * m).map(|_| BinaryHeap::new()).collect(),
            free_count: n,
            path_costs: Vec::new(),
        }
    }

    fn m(&self) -> usize {
        self.instance.m()
    }

    fn slot_pi(&self, j: usize) -> f64 {
        self.net.potentials[1 + self.instance.n() + j]
    }

    fn best_free(&mut self, j: usize) -> Option<usize> {
        let order = &self.free_order[j];
        let cursor = &mut self.free_cursor[j];
        while *cursor < order.len() && self.slot_of[order[*cursor]].is_some() {
            *cursor += 1;
        }
        order.get(*cursor).copied()
    }

    fn best_move(&mut self, from: usize, to: usize) -> Option<Candidate> {
        let heap = &mut self.moves[from * self.instance.m() + to];
        while let Some(Reverse(top)) = heap.peek() {
            if self.slot_of[top.agent] == Some(from) && self.stamp[top.agent] == top.stamp {
                return Some(*top);
            }
            heap.pop();
        }
        None
    }

    fn place(&mut self, agent: usize, slot: usize) {
        self.slot_of[agent] = Some(slot);
        self.stamp[agent] += 1;
        let m = self.m();
        let stamp = self.stamp[agent];
        let row = self.instance.row(agent);
        for to in (0..m).filter(|&to| to != slot) {
            self.moves[slot * m + to].push(Reverse(Candidate {
                key: row[slot] - row[to],
                agent,
                stamp,
            }));
        }
    }

    /// One Dijkstra pass over slots + sink. Returns distances (index `m` is
    /// the sink) and predecessors.
    fn shortest_paths(&mut self) -> (Vec<f64>, Vec<Pred>) {
        let m = self.m();
        let sink_pi = self.net.potential(Node::Sink);
        let mut dist = vec![f64::INFINITY; m + 1];
        let mut pred = vec![Pred::None; m + 1];
        let mut done = vec![false; m + 1];

        for j in 0..m {
            if let Some(agent) = self.best_free(j) {
                dist[j] = -self.instance.valuation(agent, j) - self.slot_pi(j);
                pred[j] = Pred::Source { agent };
            }
        }

        loop {
            let mut u = None;
            for v in 0..=m {
                if !done[v] && dist[v].is_finite() && u.is_none_or(|u: usize| dist[v] < dist[u]) {
                    u = Some(v);
                }
            }
            let Some(u) = u else { break };
            done[u] = true;

            if u == m {
                for j in 0..m {
                    if done[j] || self.load[j] == 0 {
                        continue;
                    }
                    let d = dist[m] + sink_pi - self.slot_pi(j);
                    if d < dist[j] {
                        dist[j] = d;
                        pred[j] = Pred::Sink;
                    }
                }
                continue;
            }

            if !done[m] && self.load[u] < self.instance.k() {
                let d = dist[u] + self.slot_pi(u) - sink_pi;
                if d < dist[m] {
                    dist[m] = d;
                    pred[m] = Pred::SlotToSink { from: u };
                }
            }
            for to in 0..m {
                if done[to] || to == u {
                    continue;
                }
                if let Some(c) = self.best_move(u, to) {
                    let d = dist[u] + c.key + self.slot_pi(u) - self.slot_pi(to);
                    if d < dist[to] {
                        dist[to] = d;
                        pred[to] = Pred::Slot {
                            from: u,
                            agent: c.agent,
                        };
                    }
                }
            }
        }
        (dist, pred)
    }

    fn update_potentials(&mut self, dist: &[f64]) {
        let (n, m) = (self.instance.n(), self.m());
        for (pot, d) in self.net.potentials[1 + n..1 + n + m].iter_mut().zip(dist) {
            if d.is_finite() {
                *pot += d;
            }
        }
        self.net.potentials[1 + n + m] += dist[m];
        for i in 0..n {
            self.net.potentials[1 + i] = match self.slot_of[i] {
                None => 0.0,
                Some(j) => self.slot_pi(j) + self.instance.valuation(i, j),
            };
        }
    }

    /// Walks predecessors back from the sink: the entry slot, then a list of
    /// (agent, from_slot, to_slot) moves in path order, and the exit slot.
    fn trace_path(&self, pred: &[Pred]) -> (usize, usize, Vec<(usize, usize, usize)>) {
        let m = self.m();
        let Pred::SlotToSink { from: exit } = pred[m] else {
            unreachable!("sink is reached only from a slot")
        };
        let mut moves = Vec::new();
        let mut cur = exit;
        loop {
            match pred[cur] {
                Pred::Source { agent } => {
                    moves.reverse();
                    return (agent, exit, moves);
                }
                Pred::Slot { from, agent } => {
                    moves.push((agent, from, cur));
                    cur = from;
                }
                Pred::Sink | Pred::SlotToSink { .. } | Pred::None => {
                    unreachable!("shortest path to the sink never revisits the sink")
                }
            }
        }
    }

    fn augment(&mut self, entry_agent: usize, exit: usize, moves: &[(usize, usize, usize)]) {
        let entry_slot = moves.first().map_or(exit, |&(_, from, _)| from);
        let src = self.net.source_arc(entry_agent);
        self.net.arcs[src].flow = 1;
        let a = self.net.agent_arc(entry_agent, entry_slot);
        self.net.arcs[a].flow = 1;
        self.place(entry_agent, entry_slot);
        self.load[entry_slot] += 1;
        self.free_count -= 1;

        for &(agent, from, to) in moves {
            let old = self.net.agent_arc(agent, from);
            self.net.arcs[old].flow = 0;
            let new = self.net.agent_arc(agent, to);
            self.net.arcs[new].flow = 1;
            self.place(agent, to);
            self.load[from] -= 1;
            self.load[to] += 1;
        }
        let s = self.net.sink_arc(exit);
        self.net.arcs[s].flow += 1;
    }

    fn path_cost(&self, entry_agent: usize, exit: usize, moves: &[(usize, usize, usize)]) -> f64 {
        let entry_slot = moves.first().map_or(exit, |&(_, from, _)| from);
        let mut cost = -self.instance.valuation(entry_agent, entry_slot);
        for &(agent, from, to) in moves {
            cost += self.instance.valuation(agent, from) - self.instance.valuation(agent, to);
        }
        cost
    }

    fn run(mut self) -> SolveTrace {
        while self.free_count > 0 {
            let (dist, pred) = self.shortest_paths();
            if !dist[self.m()].is_finite() {
                break;
            }
            self.update_potentials(&dist);
            let (entry_agent, exit, moves) = self.trace_path(&pred);
            let cost = self.path_cost(entry_agent, exit, &moves);
            if cost > 0.0 {
                break;
            }
            if let Some(&prev) = self.path_costs.last() {
                debug_assert!(
                    cost >= prev - 1e-9 * (1.0 + prev.abs()),
                    "augmenting path costs must be non-decreasing: {prev} then {cost}"
                );
            }
            self.path_costs.push(cost);
            self.augment(entry_agent, exit, &moves);
        }
        let allocation = Allocation::from_slots(&self.slot_of);
        SolveTrace {
            allocation,
            network: self.net,
            path_costs: self.path_costs,
        }
    }
}

/// Runs the solver and keeps the final network and path costs.
pub fn solve_traced(instance: &Instance) -> SolveTrace {
    Ssp::new(instance).run()
}

/// A feasible allocation maximizing total valuation. Deterministic for a
/// given instance.
pub fn solve(instance: &Instance) -> Allocation {
    solve_traced(instance).allocation
}

/// Optimal allocation of the instance with `excluded` removed, reported in
/// the original agent indexing (the excluded agent is unallocated).
pub fn solve_excluding(instance: &Instance, excluded: usize) -> Result<Allocation> {
    let sub = instance.without_agent(excluded)?;
    let partial = solve(&sub);
    let mut assignment = Vec::with_capacity(instance.n());
    assignment.extend_from_slice(&partial.assignments()[..excluded]);
    assignment.push(Assignment::Unallocated);
    assignment.extend_from_slice(&partial.assignments()[excluded..]);
    Ok(Allocation::new(assignment))
}
