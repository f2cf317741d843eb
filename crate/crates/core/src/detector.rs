//! Cause-and-effect tracing of price-quakes.
//!
//! A *node* is one event `(exchange, group)`. It is critical with a sign when
//! one of its pre-event stresses exceeds the threshold with that sign.
//!
//! An impact edge `j -> i` at `i`'s event `t` (group `g`) requires
//! - `j` to be in `i`'s active set at `t`,
//! - `j`'s most recent event `tau` to satisfy `prev(i) <= tau < g`, where
//!   `prev(i)` is the group of `i`'s previous event, and
//! - `j` to have been critical with the edge's sign at `tau`.
//!
//! The edge's sign is the sign of the gated contribution
//! `c_ij = alpha_ij * beta_ij * R_ij`. A *single* edge needs `|c_ij| > R_C`.
//! A *multiple* influence takes every eligible counterpart of one sign as the
//! set `C`; when `|C| >= 2` and `|sum_C c| > R_C` each member of `C` gets a
//! multiple edge.
//!
//! Quakes are the weakly connected components (per sign) of the node graph
//! built from the edges of one kind. SIPQs use single edges; CIPQs use
//! multiple edges plus the single edges that no multiple set covers.

use alloc::collections::BTreeMap;
use alloc::vec;
use alloc::vec::Vec;

use crate::engine::{EventOutcome, StressTensor};
use crate::market::{ExchangeId, MarketEvent};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum Sign {
    Positive,
    Negative,
}

impl Sign {
    pub const BOTH: [Sign; 2] = [Sign::Positive, Sign::Negative];

    pub fn of(x: f64) -> Option<Sign> {
        if x > 0.0 {
            Some(Sign::Positive)
        } else if x < 0.0 {
            Some(Sign::Negative)
        } else {
            None
        }
    }

    pub fn index(self) -> usize {
        match self {
            Sign::Positive => 0,
            Sign::Negative => 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CriticalityMark {
    pub event: MarketEvent,
    pub versus: ExchangeId,
    pub sign: Sign,
}

/// One mark per counterpart `j` with `|R_ij| > threshold` in the pre-event tensor.
pub fn classify_critical(tensor: &StressTensor, event: &MarketEvent, threshold: f64) -> Vec<CriticalityMark> {
    let i = event.exchange;
    tensor
        .row(i)
        .iter()
        .enumerate()
        .filter(|&(j, s)| j != i && s.abs() > threshold)
        .map(|(j, &s)| CriticalityMark {
            event: *event,
            versus: j,
            sign: if s > 0.0 { Sign::Positive } else { Sign::Negative },
        })
        .collect()
}

/// Marks recovered from an outcome's active set (identical to
/// [`classify_critical`] on the pre-event tensor).
pub fn marks_from_outcome(outcome: &EventOutcome) -> Vec<CriticalityMark> {
    outcome
        .active
        .iter()
        .filter_map(|a| {
            Sign::of(a.stress).map(|sign| CriticalityMark {
                event: outcome.event,
                versus: a.counterpart,
                sign,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum InfluenceKind {
    Single,
    Multiple,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "lowercase"))]
pub enum QuakeKind {
    Sipq,
    Cipq,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ImpactEdge {
    pub from: ExchangeId,
    pub to: ExchangeId,
    /// The impacting node: `from`'s most recent event before `at`.
    pub from_event: MarketEvent,
    /// The influenced node: `to`'s event.
    pub at: MarketEvent,
    pub kind: InfluenceKind,
    pub sign: Sign,
    /// `alpha * beta * R` of this counterpart.
    pub contribution: f64,
    /// `[from]` for single edges, the set `C` for multiple edges.
    pub contributing_set: Vec<ExchangeId>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(rename_all = "snake_case"))]
pub enum Role {
    /// Critical with at least one incoming edge.
    Influenced,
    /// Critical, no incoming edge, at least one outgoing edge.
    Source,
    /// Critical but neither influenced nor impacting.
    Excluded,
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CriticalNode {
    pub event: MarketEvent,
    pub sign: Sign,
    pub role: Role,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AvalancheRecord {
    pub kind: QuakeKind,
    pub sign: Sign,
    pub source: ExchangeId,
    pub start: MarketEvent,
    pub duration_events: usize,
    pub duration_days: f64,
    pub members: Vec<ExchangeId>,
    pub edges: Vec<ImpactEdge>,
    /// Exchanges with a zero in-degree node in this quake.
    pub sources_without_influence: Vec<ExchangeId>,
}

impl AvalancheRecord {
    pub fn size(&self) -> usize {
        self.members.len()
    }

    pub fn in_degree(&self, exchange: ExchangeId) -> usize {
        self.edges.iter().filter(|e| e.to == exchange).count()
    }

    pub fn out_degree(&self, exchange: ExchangeId) -> usize {
        self.edges.iter().filter(|e| e.from == exchange).count()
    }
}

#[derive(Debug, Clone, Copy)]
struct LastEvent {
    event: MarketEvent,
    critical: [bool; 2],
}

fn critical_signs(outcome: &EventOutcome) -> [bool; 2] {
    let mut signs = [false; 2];
    for a in &outcome.active {
        if let Some(s) = Sign::of(a.stress) {
            signs[s.index()] = true;
        }
    }
    signs
}

/// Impact edges of both kinds, in event order.
pub fn detect_impacts(outcomes: &[EventOutcome], threshold: f64) -> Vec<ImpactEdge> {
    let n = outcomes
        .iter()
        .flat_map(|o| core::iter::once(o.event.exchange).chain(o.active.iter().map(|a| a.counterpart)))
        .max()
        .map_or(0, |m| m + 1);
    let mut last: Vec<Option<LastEvent>> = vec![None; n];
    let mut prev_group: Vec<Option<usize>> = vec![None; n];
    let mut edges = Vec::new();
    let mut eligible: Vec<(ExchangeId, f64, Sign, MarketEvent)> = Vec::new();

    let mut start = 0;
    while start < outcomes.len() {
        let group = outcomes[start].event.group;
        let end = start
            + outcomes[start..]
                .iter()
                .take_while(|o| o.event.group == group)
                .count();

        for outcome in &outcomes[start..end] {
            let i = outcome.event.exchange;
            eligible.clear();
            for a in &outcome.active {
                let c = a.contribution();
                let (Some(sign), Some(last_j)) = (Sign::of(c), last[a.counterpart]) else {
                    continue;
                };
                let in_window = prev_group[i].is_none_or(|p| last_j.event.group >= p);
                if in_window && last_j.critical[sign.index()] {
                    eligible.push((a.counterpart, c, sign, last_j.event));
                }
            }
            for &(j, c, sign, from_event) in &eligible {
                if c.abs() > threshold {
                    edges.push(ImpactEdge {
                        from: j,
                        to: i,
                        from_event,
                        at: outcome.event,
                        kind: InfluenceKind::Single,
                        sign,
                        contribution: c,
                        contributing_set: vec![j],
                    });
                }
            }
            for sign in Sign::BOTH {
                let members: Vec<_> = eligible.iter().filter(|e| e.2 == sign).collect();
                let total: f64 = members.iter().map(|e| e.1).sum();
                if members.len() >= 2 && total.abs() > threshold {
                    let set: Vec<ExchangeId> = members.iter().map(|e| e.0).collect();
                    for &&(j, c, sign, from_event) in &members {
                        edges.push(ImpactEdge {
                            from: j,
                            to: i,
                            from_event,
                            at: outcome.event,
                            kind: InfluenceKind::Multiple,
                            sign,
                            contribution: c,
                            contributing_set: set.clone(),
                        });
                    }
                }
            }
        }

        for outcome in &outcomes[start..end] {
            let i = outcome.event.exchange;
            last[i] = Some(LastEvent {
                event: outcome.event,
                critical: critical_signs(outcome),
            });
            prev_group[i] = Some(group);
        }
        start = end;
    }
    edges
}

/// Critical nodes (one per event and sign), with roles left as `Excluded`.
pub fn critical_nodes(outcomes: &[EventOutcome]) -> Vec<CriticalNode> {
    let mut nodes = Vec::new();
    for o in outcomes {
        let signs = critical_signs(o);
        for sign in Sign::BOTH {
            if signs[sign.index()] {
                nodes.push(CriticalNode {
                    event: o.event,
                    sign,
                    role: Role::Excluded,
                });
            }
        }
    }
    nodes
}

/// The edges that define quakes of `kind`.
pub fn edges_for_kind(edges: &[ImpactEdge], kind: QuakeKind) -> Vec<ImpactEdge> {
    match kind {
        QuakeKind::Sipq => edges
            .iter()
            .filter(|e| e.kind == InfluenceKind::Single)
            .cloned()
            .collect(),
        QuakeKind::Cipq => {
            let mut covered: Vec<(usize, ExchangeId, Sign)> = edges
                .iter()
                .filter(|e| e.kind == InfluenceKind::Multiple)
                .map(|e| (e.at.group, e.to, e.sign))
                .collect();
            covered.sort_unstable();
            covered.dedup();
            edges
                .iter()
                .filter(|e| {
                    e.kind == InfluenceKind::Multiple
                        || covered.binary_search(&(e.at.group, e.to, e.sign)).is_err()
                })
                .cloned()
                .collect()
        }
    }
}

type NodeKey = (usize, ExchangeId);

fn node_key(e: &MarketEvent) -> NodeKey {
    (e.group, e.exchange)
}

struct UnionFind {
    parent: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra != rb {
            let (lo, hi) = if ra < rb { (ra, rb) } else { (rb, ra) };
            self.parent[hi] = lo;
        }
    }
}

/// Groups `edges` (already restricted to one kind) into quake records.
pub fn assemble_quakes(edges: &[ImpactEdge], kind: QuakeKind) -> Vec<AvalancheRecord> {
    let mut records = Vec::new();
    for sign in Sign::BOTH {
        let signed: Vec<&ImpactEdge> = edges.iter().filter(|e| e.sign == sign).collect();
        let mut index: BTreeMap<NodeKey, usize> = BTreeMap::new();
        let mut events: Vec<MarketEvent> = Vec::new();
        let mut intern = |e: &MarketEvent, index: &mut BTreeMap<NodeKey, usize>| {
            *index.entry(node_key(e)).or_insert_with(|| {
                events.push(*e);
                events.len() - 1
            })
        };
        let ends: Vec<(usize, usize)> = signed
            .iter()
            .map(|e| (intern(&e.from_event, &mut index), intern(&e.at, &mut index)))
            .collect();

        let mut uf = UnionFind::new(events.len());
        for &(a, b) in &ends {
            uf.union(a, b);
        }
        let mut in_degree = vec![0usize; events.len()];
        for &(_, b) in &ends {
            in_degree[b] += 1;
        }

        let mut components: BTreeMap<usize, (Vec<usize>, Vec<usize>)> = BTreeMap::new();
        for node in 0..events.len() {
            let root = uf.find(node);
            components.entry(root).or_default().0.push(node);
        }
        for (k, &(a, _)) in ends.iter().enumerate() {
            let root = uf.find(a);
            components.get_mut(&root).expect("node interned").1.push(k);
        }

        for (nodes, edge_ids) in components.into_values() {
            let seed = nodes
                .iter()
                .copied()
                .filter(|&v| in_degree[v] == 0)
                .min_by_key(|&v| node_key(&events[v]))
                .expect("a finite DAG has a zero in-degree node");
            let start = events[seed];
            let mut quake_edges: Vec<ImpactEdge> = edge_ids.iter().map(|&k| signed[k].clone()).collect();
            quake_edges.sort_by_key(|e| (e.at.group, e.to, e.from));
            let last = quake_edges
                .iter()
                .map(|e| e.at)
                .max_by_key(|e| e.group)
                .expect("component has an edge");

            let mut members: Vec<ExchangeId> = nodes.iter().map(|&v| events[v].exchange).collect();
            members.sort_unstable();
            members.dedup();
            let mut sources: Vec<ExchangeId> = nodes
                .iter()
                .filter(|&&v| in_degree[v] == 0)
                .map(|&v| events[v].exchange)
                .collect();
            sources.sort_unstable();
            sources.dedup();

            records.push(AvalancheRecord {
                kind,
                sign,
                source: start.exchange,
                start,
                duration_events: last.group - start.group,
                duration_days: last.day_time() - start.day_time(),
                members,
                edges: quake_edges,
                sources_without_influence: sources,
            });
        }
    }
    records.sort_by_key(|r| (r.start.group, r.source, r.sign));
    records
}

/// Assigns each critical node its role under `edges` (one kind).
pub fn assign_roles(nodes: &mut [CriticalNode], edges: &[ImpactEdge]) {
    let mut incoming: Vec<(NodeKey, Sign)> = edges.iter().map(|e| (node_key(&e.at), e.sign)).collect();
    let mut outgoing: Vec<(NodeKey, Sign)> = edges.iter().map(|e| (node_key(&e.from_event), e.sign)).collect();
    incoming.sort_unstable();
    outgoing.sort_unstable();
    for node in nodes {
        let key = (node_key(&node.event), node.sign);
        node.role = if incoming.binary_search(&key).is_ok() {
            Role::Influenced
        } else if outgoing.binary_search(&key).is_ok() {
            Role::Source
        } else {
            Role::Excluded
        };
    }
}

/// Everything the detector derives from one outcome stream for one quake kind.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub kind: QuakeKind,
    pub nodes: Vec<CriticalNode>,
    pub edges: Vec<ImpactEdge>,
    pub quakes: Vec<AvalancheRecord>,
}

impl Detection {
    /// Drops nodes, edges and quakes that start before `group`.
    pub fn measured_from(mut self, group: usize) -> Self {
        self.nodes.retain(|n| n.event.group >= group);
        self.edges.retain(|e| e.at.group >= group);
        self.quakes.retain(|q| q.start.group >= group);
        self
    }
}

pub fn detect(outcomes: &[EventOutcome], threshold: f64, kind: QuakeKind) -> Detection {
    let all = detect_impacts(outcomes, threshold);
    let edges = edges_for_kind(&all, kind);
    let mut nodes = critical_nodes(outcomes);
    assign_roles(&mut nodes, &edges);
    let quakes = assemble_quakes(&edges, kind);
    Detection {
        kind,
        nodes,
        edges,
        quakes,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RasterCell {
    /// The exchange has no event in this group.
    Idle,
    NotCritical,
    Critical { sign: Sign, role: Role },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RasterRow {
    pub group: usize,
    pub day: u32,
    pub slot: u32,
    pub utc_hour: f64,
    pub cells: Vec<RasterCell>,
}

/// Grid of event groups by exchanges for rendering quake pictures.
///
/// A node critical in both signs shows its stronger role (influenced, then
/// source, then excluded), positive first on ties.
pub fn raster(outcomes: &[EventOutcome], nodes: &[CriticalNode], num_exchanges: usize) -> Vec<RasterRow> {
    let mut by_node: BTreeMap<NodeKey, (Sign, Role)> = BTreeMap::new();
    for node in nodes {
        let key = node_key(&node.event);
        let candidate = (node.sign, node.role);
        by_node
            .entry(key)
            .and_modify(|cur| {
                if (candidate.1, candidate.0) < (cur.1, cur.0) {
                    *cur = candidate;
                }
            })
            .or_insert(candidate);
    }
    let mut rows: Vec<RasterRow> = Vec::new();
    for o in outcomes {
        if rows.last().is_none_or(|r| r.group != o.event.group) {
            rows.push(RasterRow {
                group: o.event.group,
                day: o.event.day,
                slot: o.event.slot,
                utc_hour: o.event.utc_hour,
                cells: vec![RasterCell::Idle; num_exchanges],
            });
        }
        let row = rows.last_mut().expect("pushed above");
        row.cells[o.event.exchange] = match by_node.get(&node_key(&o.event)) {
            Some(&(sign, role)) => RasterCell::Critical { sign, role },
            None => RasterCell::NotCritical,
        };
    }
    rows
}
