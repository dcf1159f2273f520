//! Skeleton graph, pruning, vessel tracking and per-vessel measurements.
//!
//! Nodes are skeleton pixels whose 8-neighbour degree is not 2. Adjacent
//! junction pixels (degree ≥ 3) form one junction node whose representative
//! is the cluster pixel nearest the cluster centroid. Edges are the chains of
//! degree-2 pixels between nodes; every chain starts and ends on its nodes'
//! representative pixels, entering a junction cluster along the shortest
//! path inside it.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet, VecDeque};
use std::f64::consts::{FRAC_PI_2, PI};
use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::harmonics::{self, descriptors, HarmonicDescriptors, HarmonicsError, SampledCurve};
use crate::skeleton::{SkeletonImage, RING};
use crate::tortuosity::{self, TortuosityError};

pub type Pixel = (usize, usize);

#[derive(Debug, Error, PartialEq)]
pub enum VesselError {
    #[error("no endpoint of the vessel lies within {max} px of ({x}, {y})")]
    NotIncident { x: f64, y: f64, max: f64 },
    #[error("vessel has {0} points, need at least 4")]
    TooShort(usize),
    #[error("vessel is a closed loop")]
    Closed,
    #[error(transparent)]
    Harmonics(#[from] HarmonicsError),
    #[error(transparent)]
    Tortuosity(#[from] TortuosityError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NodeKind {
    Endpoint,
    Junction,
    /// Marker on a pure cycle.
    Anchor,
    /// Pixel with no neighbours; carries a one-pixel self-loop.
    Isolated,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Node {
    pub id: usize,
    pub x: usize,
    pub y: usize,
    pub kind: NodeKind,
    /// All skeleton pixels merged into this node.
    pub pixels: Vec<Pixel>,
}

impl Node {
    pub fn pixel(&self) -> Pixel {
        (self.x, self.y)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub a: usize,
    pub b: usize,
    pub chain: Vec<Pixel>,
}

impl Edge {
    pub fn is_loop(&self) -> bool {
        self.a == self.b
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SkeletonGraph {
    pub nodes: Vec<Node>,
    pub edges: Vec<Edge>,
}

impl SkeletonGraph {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("graph serializes")
    }

    pub fn from_json(s: &str) -> serde_json::Result<Self> {
        serde_json::from_str(s)
    }

    /// Edge count at each node; a self-loop counts twice.
    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.nodes.len()];
        for e in &self.edges {
            deg[e.a] += 1;
            deg[e.b] += 1;
        }
        deg
    }

    /// Every pixel on a chain or inside a node.
    pub fn pixels(&self) -> BTreeSet<Pixel> {
        let mut set: BTreeSet<Pixel> = self.edges.iter().flat_map(|e| e.chain.iter().copied()).collect();
        set.extend(self.nodes.iter().flat_map(|n| n.pixels.iter().copied()));
        set
    }
}

fn neighbours(p: Pixel, on: &HashSet<Pixel>) -> Vec<Pixel> {
    RING.iter()
        .filter_map(|&(dx, dy)| {
            let (x, y) = (p.0 as i64 + dx, p.1 as i64 + dy);
            if x < 0 || y < 0 {
                return None;
            }
            let q = (x as usize, y as usize);
            on.contains(&q).then_some(q)
        })
        .collect()
}

fn adjacent(p: Pixel, q: Pixel) -> bool {
    p != q && p.0.abs_diff(q.0) <= 1 && p.1.abs_diff(q.1) <= 1
}

fn dist(p: Pixel, q: Pixel) -> f64 {
    (p.0 as f64 - q.0 as f64).hypot(p.1 as f64 - q.1 as f64)
}

/// Shortest 8-connected path from `from` to `to` inside `cluster`, with
/// Euclidean step costs. Both ends included.
fn cluster_path(cluster: &[Pixel], from: Pixel, to: Pixel) -> Vec<Pixel> {
    if from == to {
        return vec![from];
    }
    let n = cluster.len();
    let idx: HashMap<Pixel, usize> = cluster.iter().enumerate().map(|(i, &p)| (p, i)).collect();
    let mut best = vec![f64::INFINITY; n];
    let mut prev = vec![usize::MAX; n];
    let mut done = vec![false; n];
    best[idx[&from]] = 0.0;
    loop {
        // clusters are a handful of pixels, so a linear scan is enough
        let Some(u) = (0..n).filter(|&i| !done[i] && best[i].is_finite()).min_by(|&i, &j| best[i].total_cmp(&best[j]))
        else {
            break;
        };
        done[u] = true;
        if cluster[u] == to {
            break;
        }
        for v in 0..n {
            if !done[v] && adjacent(cluster[u], cluster[v]) {
                let c = best[u] + dist(cluster[u], cluster[v]);
                if c < best[v] {
                    best[v] = c;
                    prev[v] = u;
                }
            }
        }
    }
    let mut path = vec![to];
    let mut cur = idx[&to];
    while cluster[cur] != from {
        cur = prev[cur];
        path.push(cluster[cur]);
    }
    path.reverse();
    path
}

fn representative(cluster: &[Pixel]) -> Pixel {
    let n = cluster.len() as f64;
    let cx = cluster.iter().map(|p| p.0 as f64).sum::<f64>() / n;
    let cy = cluster.iter().map(|p| p.1 as f64).sum::<f64>() / n;
    *cluster
        .iter()
        .min_by(|a, b| {
            let da = (a.0 as f64 - cx).hypot(a.1 as f64 - cy);
            let db = (b.0 as f64 - cx).hypot(b.1 as f64 - cy);
            da.total_cmp(&db).then((a.1, a.0).cmp(&(b.1, b.0)))
        })
        .expect("non-empty cluster")
}

/// Extract the graph of a thinned skeleton.
///
/// Junction pixels that touch are merged into one node, and a degree-2 pixel
/// whose two neighbours both belong to the same junction is merged with it.
/// Pixels that end up inside a junction node but on none of its chains are
/// listed in the node's `pixels`.
pub fn build_graph(sk: &SkeletonImage) -> SkeletonGraph {
    let mask = sk.as_mask();
    let on: HashSet<Pixel> = mask.foreground().collect();
    // row-major order keeps everything deterministic
    let mut order: Vec<Pixel> = on.iter().copied().collect();
    order.sort_by_key(|p| (p.1, p.0));
    let degree: HashMap<Pixel, usize> = order.iter().map(|&p| (p, neighbours(p, &on).len())).collect();

    let mut owner: HashMap<Pixel, usize> = HashMap::new();
    let mut clusters: Vec<Vec<Pixel>> = Vec::new();
    for &p in &order {
        if degree[&p] < 3 || owner.contains_key(&p) {
            continue;
        }
        let id = clusters.len();
        let mut members = vec![p];
        let mut queue = VecDeque::from([p]);
        owner.insert(p, id);
        while let Some(q) = queue.pop_front() {
            for r in neighbours(q, &on) {
                if degree[&r] >= 3 && !owner.contains_key(&r) {
                    owner.insert(r, id);
                    members.push(r);
                    queue.push_back(r);
                }
            }
        }
        clusters.push(members);
    }
    loop {
        let mut grew = false;
        for &p in &order {
            if degree[&p] != 2 || owner.contains_key(&p) {
                continue;
            }
            let nb = neighbours(p, &on);
            if let (Some(&a), Some(&b)) = (owner.get(&nb[0]), owner.get(&nb[1])) {
                if a == b {
                    owner.insert(p, a);
                    clusters[a].push(p);
                    grew = true;
                }
            }
        }
        if !grew {
            break;
        }
    }

    let mut nodes: Vec<Node> = Vec::new();
    let mut node_of: HashMap<Pixel, usize> = HashMap::new();
    for &p in &order {
        let d = degree[&p];
        if let Some(&c) = owner.get(&p) {
            if node_of.contains_key(&p) {
                continue;
            }
            let mut members = clusters[c].clone();
            members.sort_by_key(|q| (q.1, q.0));
            let (x, y) = representative(&members);
            let id = nodes.len();
            for &q in &members {
                node_of.insert(q, id);
            }
            nodes.push(Node { id, x, y, kind: NodeKind::Junction, pixels: members });
        } else if d <= 1 {
            let id = nodes.len();
            node_of.insert(p, id);
            let kind = if d == 0 { NodeKind::Isolated } else { NodeKind::Endpoint };
            nodes.push(Node { id, x: p.0, y: p.1, kind, pixels: vec![p] });
        }
    }

    let mut edges: Vec<Edge> = Vec::new();
    let mut visited: HashSet<Pixel> = HashSet::new();
    let mut direct_pairs: HashSet<(Pixel, Pixel)> = HashSet::new();
    let prefix = |nodes: &Vec<Node>, id: usize, from: Pixel| -> Vec<Pixel> {
        cluster_path(&nodes[id].pixels, nodes[id].pixel(), from)
    };
    for id in 0..nodes.len() {
        if nodes[id].kind == NodeKind::Isolated {
            let p = nodes[id].pixel();
            edges.push(Edge { a: id, b: id, chain: vec![p] });
            continue;
        }
        let members = nodes[id].pixels.clone();
        for &c in &members {
            for q in neighbours(c, &on) {
                if let Some(&other) = node_of.get(&q) {
                    if other == id {
                        continue;
                    }
                    let key = if c < q { (c, q) } else { (q, c) };
                    if !direct_pairs.insert(key) {
                        continue;
                    }
                    let mut chain = prefix(&nodes, id, c);
                    let mut tail = prefix(&nodes, other, q);
                    tail.reverse();
                    chain.extend(tail);
                    edges.push(Edge { a: id, b: other, chain });
                    continue;
                }
                if visited.contains(&q) {
                    continue;
                }
                let mut chain = prefix(&nodes, id, c);
                let (mut prev, mut cur) = (c, q);
                loop {
                    visited.insert(cur);
                    chain.push(cur);
                    let next = neighbours(cur, &on).into_iter().find(|&r| r != prev).expect("degree-2 pixel");
                    if let Some(&end) = node_of.get(&next) {
                        let mut tail = prefix(&nodes, end, next);
                        tail.reverse();
                        chain.extend(tail);
                        edges.push(Edge { a: id, b: end, chain });
                        break;
                    }
                    prev = cur;
                    cur = next;
                }
            }
        }
    }

    // whatever degree-2 pixels are left lie on pure cycles
    for &p in &order {
        if node_of.contains_key(&p) || visited.contains(&p) {
            continue;
        }
        let id = nodes.len();
        nodes.push(Node { id, x: p.0, y: p.1, kind: NodeKind::Anchor, pixels: vec![p] });
        node_of.insert(p, id);
        let mut chain = vec![p];
        let (mut prev, mut cur) = (p, neighbours(p, &on)[0]);
        while cur != p {
            visited.insert(cur);
            chain.push(cur);
            let next = neighbours(cur, &on).into_iter().find(|&r| r != prev).expect("degree-2 pixel");
            prev = cur;
            cur = next;
        }
        chain.push(p);
        edges.push(Edge { a: id, b: id, chain });
    }
    SkeletonGraph { nodes, edges }
}

fn component_of_edges(g: &SkeletonGraph, alive_nodes: &[bool], alive_edges: &[bool]) -> Vec<Vec<usize>> {
    let n = g.nodes.len();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], x: usize) -> usize {
        let mut r = x;
        while parent[r] != r {
            r = parent[r];
        }
        let mut c = x;
        while parent[c] != r {
            let next = parent[c];
            parent[c] = r;
            c = next;
        }
        r
    }
    for (e, edge) in g.edges.iter().enumerate() {
        if alive_edges[e] {
            let (ra, rb) = (find(&mut parent, edge.a), find(&mut parent, edge.b));
            if ra != rb {
                parent[ra.max(rb)] = ra.min(rb);
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for v in 0..n {
        if alive_nodes[v] {
            groups.entry(find(&mut parent, v)).or_default().push(v);
        }
    }
    groups.into_values().collect()
}

fn compact(g: SkeletonGraph, alive_nodes: &[bool], alive_edges: &[bool]) -> SkeletonGraph {
    let mut remap = vec![usize::MAX; g.nodes.len()];
    let mut nodes = Vec::new();
    for (i, mut node) in g.nodes.into_iter().enumerate() {
        if alive_nodes[i] {
            remap[i] = nodes.len();
            node.id = nodes.len();
            nodes.push(node);
        }
    }
    let edges = g
        .edges
        .into_iter()
        .enumerate()
        .filter(|(i, _)| alive_edges[*i])
        .map(|(_, e)| Edge { a: remap[e.a], b: remap[e.b], chain: e.chain })
        .collect();
    SkeletonGraph { nodes, edges }
}

/// Remove spurs and small components.
///
/// A spur is an edge between an endpoint and a junction with fewer than
/// `min_spur` chain pixels; at most one spur (the shortest) is cut per
/// junction per round, and only while the junction has degree ≥ 3. A junction
/// left with two edges is dissolved by joining them. Components whose pixel
/// count is below `min_component` are dropped. Rounds repeat until nothing
/// changes.
pub fn prune(graph: &SkeletonGraph, min_spur: usize, min_component: usize) -> SkeletonGraph {
    let mut g = graph.clone();
    let mut alive_nodes = vec![true; g.nodes.len()];
    let mut alive_edges = vec![true; g.edges.len()];
    loop {
        let mut changed = false;
        let mut deg = vec![0usize; g.nodes.len()];
        for (e, edge) in g.edges.iter().enumerate() {
            if alive_edges[e] {
                deg[edge.a] += 1;
                deg[edge.b] += 1;
            }
        }

        // spurs
        let mut cut: BTreeMap<usize, (usize, usize)> = BTreeMap::new();
        for (e, edge) in g.edges.iter().enumerate() {
            if !alive_edges[e] || edge.chain.len() >= min_spur {
                continue;
            }
            let (ka, kb) = (g.nodes[edge.a].kind, g.nodes[edge.b].kind);
            let (tip, junction) = match (ka, kb) {
                (NodeKind::Endpoint, NodeKind::Junction) => (edge.a, edge.b),
                (NodeKind::Junction, NodeKind::Endpoint) => (edge.b, edge.a),
                _ => continue,
            };
            if deg[junction] < 3 {
                continue;
            }
            let cand = (edge.chain.len(), e);
            let slot = cut.entry(junction).or_insert((tip, e));
            if cand < (g.edges[slot.1].chain.len(), slot.1) {
                *slot = (tip, e);
            }
        }
        let mut touched = Vec::new();
        for (&junction, &(tip, e)) in &cut {
            alive_edges[e] = false;
            alive_nodes[tip] = false;
            deg[junction] -= 1;
            touched.push(junction);
            changed = true;
        }

        // dissolve junctions that dropped to two edges
        for j in touched {
            if deg[j] != 2 {
                continue;
            }
            let incident: Vec<usize> =
                (0..g.edges.len()).filter(|&e| alive_edges[e] && (g.edges[e].a == j || g.edges[e].b == j)).collect();
            if incident.len() == 1 {
                // a self-loop is all that is left: the junction becomes a cycle marker
                g.nodes[j].kind = NodeKind::Anchor;
                continue;
            }
            let (e1, e2) = (incident[0], incident[1]);
            let mut first = g.edges[e1].clone();
            if first.b != j {
                first.chain.reverse();
                std::mem::swap(&mut first.a, &mut first.b);
            }
            let mut second = g.edges[e2].clone();
            if second.a != j {
                second.chain.reverse();
                std::mem::swap(&mut second.a, &mut second.b);
            }
            first.chain.extend_from_slice(&second.chain[1..]);
            first.b = second.b;
            if first.a == first.b {
                if g.nodes[first.a].kind == NodeKind::Junction && first.a != j {
                    // loop hanging off another junction
                } else {
                    g.nodes[first.a].kind = NodeKind::Anchor;
                }
            }
            g.edges[e1] = first;
            alive_edges[e2] = false;
            alive_nodes[j] = false;
        }

        // small components
        for comp in component_of_edges(&g, &alive_nodes, &alive_edges) {
            let members: HashSet<usize> = comp.iter().copied().collect();
            let mut px: HashSet<Pixel> = HashSet::new();
            for &v in &comp {
                px.extend(g.nodes[v].pixels.iter().copied());
            }
            let comp_edges: Vec<usize> =
                (0..g.edges.len()).filter(|&e| alive_edges[e] && members.contains(&g.edges[e].a)).collect();
            for &e in &comp_edges {
                px.extend(g.edges[e].chain.iter().copied());
            }
            if px.len() < min_component {
                for &v in &comp {
                    alive_nodes[v] = false;
                }
                for e in comp_edges {
                    alive_edges[e] = false;
                }
                changed = true;
            }
        }

        if !changed {
            break;
        }
    }
    compact(g, &alive_nodes, &alive_edges)
}

/// Turn beyond which two chains meeting at a junction are not joined.
pub const MAX_TURN: f64 = FRAC_PI_2;

/// Pixels from the junction used to estimate a chain's direction.
pub const DIRECTION_WINDOW: usize = 7;

/// A vessel followed across junctions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtendedVessel {
    pub points: Vec<(f64, f64)>,
    /// `2π / chord` for open vessels, `2π / perimeter` for closed ones.
    pub d_z: f64,
    /// Graph edges in traversal order.
    pub edges: Vec<usize>,
}

impl ExtendedVessel {
    pub fn new(points: Vec<(f64, f64)>, edges: Vec<usize>) -> Self {
        let d_z = scale_factor(&points);
        Self { points, d_z, edges }
    }

    pub fn from_points(points: Vec<(f64, f64)>) -> Result<Self, VesselError> {
        if points.len() < 2 {
            return Err(VesselError::TooShort(points.len()));
        }
        Ok(Self::new(points, Vec::new()))
    }

    pub fn from_pixels(pixels: &[Pixel], edges: Vec<usize>) -> Self {
        Self::new(pixels.iter().map(|&(x, y)| (x as f64, y as f64)).collect(), edges)
    }

    pub fn is_closed(&self) -> bool {
        harmonics::is_closed(&self.points)
    }

    pub fn arc_length(&self) -> f64 {
        self.points.windows(2).map(|w| (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1)).sum()
    }

    pub fn chord(&self) -> f64 {
        match (self.points.first(), self.points.last()) {
            (Some(a), Some(b)) => (b.0 - a.0).hypot(b.1 - a.1),
            _ => 0.0,
        }
    }
}

fn scale_factor(points: &[(f64, f64)]) -> f64 {
    let arc: f64 = points.windows(2).map(|w| (w[1].0 - w[0].0).hypot(w[1].1 - w[0].1)).sum();
    let chord = match (points.first(), points.last()) {
        (Some(a), Some(b)) => (b.0 - a.0).hypot(b.1 - a.1),
        _ => 0.0,
    };
    let extent = if harmonics::is_closed(points) {
        arc
    } else if chord > 0.0 {
        chord
    } else if arc > 0.0 {
        arc
    } else {
        1.0
    };
    2.0 * PI / extent
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
struct End {
    edge: usize,
    /// false: chain start (node a), true: chain end (node b)
    tail: bool,
}

/// Chain pixels oriented away from the given end.
fn oriented(edge: &Edge, tail: bool) -> Vec<Pixel> {
    let mut c = edge.chain.clone();
    if tail {
        c.reverse();
    }
    c
}

fn outward_direction(edge: &Edge, tail: bool) -> (f64, f64) {
    let c = oriented(edge, tail);
    let k = (DIRECTION_WINDOW - 1).min(c.len() - 1);
    (c[k].0 as f64 - c[0].0 as f64, c[k].1 as f64 - c[0].1 as f64)
}

fn angle_between(u: (f64, f64), v: (f64, f64)) -> f64 {
    let nu = u.0.hypot(u.1);
    let nv = v.0.hypot(v.1);
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    ((u.0 * v.0 + u.1 * v.1) / (nu * nv)).clamp(-1.0, 1.0).acos()
}

/// Join edges across junctions into vessels.
///
/// At each junction the two incident chain ends with the smallest direction
/// change are joined first, then the next pair among the rest, as long as the
/// turn stays within [`MAX_TURN`]. Ties prefer the longer combined chains and
/// then the smaller pixels next to the junction. Both ends at a cycle anchor
/// are always joined. Shared junction pixels appear once in a vessel.
pub fn track_vessels(graph: &SkeletonGraph) -> Vec<ExtendedVessel> {
    let mut partner: HashMap<End, End> = HashMap::new();
    for (v, node) in graph.nodes.iter().enumerate() {
        let mut ends = Vec::new();
        for (e, edge) in graph.edges.iter().enumerate() {
            if edge.a == v {
                ends.push(End { edge: e, tail: false });
            }
            if edge.b == v {
                ends.push(End { edge: e, tail: true });
            }
        }
        if ends.len() < 2 {
            continue;
        }
        match node.kind {
            NodeKind::Anchor if ends.len() == 2 => {
                partner.insert(ends[0], ends[1]);
                partner.insert(ends[1], ends[0]);
            }
            NodeKind::Junction | NodeKind::Anchor => {
                let mut cands = Vec::new();
                for i in 0..ends.len() {
                    for j in i + 1..ends.len() {
                        let (ei, ej) = (ends[i], ends[j]);
                        let (gi, gj) = (&graph.edges[ei.edge], &graph.edges[ej.edge]);
                        let turn = PI - angle_between(outward_direction(gi, ei.tail), outward_direction(gj, ej.tail));
                        let length = gi.chain.len() + gj.chain.len();
                        let (pi, pj) = (oriented(gi, ei.tail), oriented(gj, ej.tail));
                        let key_i = pi.get(1).copied().unwrap_or(pi[0]);
                        let key_j = pj.get(1).copied().unwrap_or(pj[0]);
                        let (lo, hi) =
                            if (key_i.1, key_i.0) <= (key_j.1, key_j.0) { (key_i, key_j) } else { (key_j, key_i) };
                        cands.push((turn, std::cmp::Reverse(length), (lo.1, lo.0, hi.1, hi.0), ei, ej));
                    }
                }
                cands.sort_by(|a, b| {
                    a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)).then((a.3, a.4).cmp(&(b.3, b.4)))
                });
                let mut used = HashSet::new();
                for (turn, _, _, ei, ej) in cands {
                    if turn > MAX_TURN + 1e-12 {
                        break;
                    }
                    if used.contains(&ei) || used.contains(&ej) {
                        continue;
                    }
                    used.insert(ei);
                    used.insert(ej);
                    partner.insert(ei, ej);
                    partner.insert(ej, ei);
                }
            }
            _ => {}
        }
    }

    let mut done = vec![false; graph.edges.len()];
    let mut vessels = Vec::new();
    let walk = |start: End, done: &mut Vec<bool>| -> ExtendedVessel {
        let mut pixels: Vec<Pixel> = Vec::new();
        let mut edges = Vec::new();
        let mut cur = start;
        loop {
            done[cur.edge] = true;
            edges.push(cur.edge);
            let chain = oriented(&graph.edges[cur.edge], cur.tail);
            let skip = usize::from(pixels.last() == chain.first() && !pixels.is_empty());
            pixels.extend_from_slice(&chain[skip..]);
            let exit = End { edge: cur.edge, tail: !cur.tail };
            match partner.get(&exit) {
                Some(&next) if !done[next.edge] => cur = next,
                _ => break,
            }
        }
        ExtendedVessel::from_pixels(&pixels, edges)
    };
    for e in 0..graph.edges.len() {
        if done[e] {
            continue;
        }
        let head = End { edge: e, tail: false };
        let tail = End { edge: e, tail: true };
        if !partner.contains_key(&head) {
            vessels.push(walk(head, &mut done));
        } else if !partner.contains_key(&tail) {
            vessels.push(walk(tail, &mut done));
        }
    }
    // the rest are joined into closed circuits
    for e in 0..graph.edges.len() {
        if !done[e] {
            vessels.push(walk(End { edge: e, tail: false }, &mut done));
        }
    }
    vessels
}

/// Harmonics kept (per single traversal) when estimating end tangents.
pub const TANGENT_HARMONICS: usize = 6;

/// Smooth representation of an open vessel in its canonical frame: the chord
/// ramp plus the odd reflection of the residual, whose derivatives are
/// continuous across the ends.
struct SmoothVessel {
    frame: harmonics::CanonicalFrame,
    residual: HarmonicDescriptors,
    /// chord advance per unit of the canonical parameter
    ramp: f64,
    forward: usize,
}

impl SmoothVessel {
    fn new(points: &[(f64, f64)], harmonics: Option<usize>) -> Result<Self, VesselError> {
        let frame = harmonics::CanonicalFrame::of(points)?;
        let n = points.len();
        let step = frame.chord / (n - 1) as f64;
        let res: Vec<Complex64> =
            points.iter().enumerate().map(|(i, &p)| frame.apply(p) - Complex64::new(step * i as f64, 0.0)).collect();
        let mut ext = res.clone();
        ext.extend(res[1..n - 1].iter().rev().map(|c| -c));
        let big_n = ext.len();
        let d = descriptors(&SampledCurve::new(ext, PI / frame.chord)?)?;
        let residual = match harmonics {
            Some(m) => d.truncated((2 * m).min(big_n / 2))?,
            None => d,
        };
        Ok(Self { frame, residual, ramp: step * big_n as f64 / (2.0 * PI), forward: n })
    }

    fn period(&self) -> usize {
        self.residual.len()
    }

    fn first_derivative(&self) -> HarmonicDescriptors {
        let d1 = harmonics::derivative(&self.residual, 1);
        let mut c = d1.coefficients().to_vec();
        c[0] += Complex64::new(self.ramp, 0.0);
        HarmonicDescriptors::new(c, d1.d_z()).expect("non-empty")
    }

    /// Unit tangent in image orientation at fractional forward index `t`.
    fn tangent(&self, t: f64) -> (f64, f64) {
        let v = self.frame.unrotate(harmonics::evaluate(&self.first_derivative(), t));
        let n = v.norm();
        (v.re / n, v.im / n)
    }

    /// Curvature at the forward samples.
    fn curvature(&self) -> Result<Vec<f64>, VesselError> {
        let first = self.first_derivative();
        let second = harmonics::derivative(&self.residual, 2);
        let profile = harmonics::curvature_from_derivatives(&first, &second, self.period())?;
        Ok(profile.kappa[..self.forward].to_vec())
    }
}

/// Largest junction-to-endpoint distance accepted by [`branch_angle`].
pub const INCIDENCE_RADIUS: f64 = 2.0;

/// Outward unit tangent of `v` at its end nearest `junction`.
fn outward_tangent(v: &ExtendedVessel, junction: (f64, f64)) -> Result<(f64, f64), VesselError> {
    let d = |p: &(f64, f64)| (p.0 - junction.0).hypot(p.1 - junction.1);
    let n = v.points.len();
    let (d0, d1) = (d(&v.points[0]), d(&v.points[n - 1]));
    if d0.min(d1) > INCIDENCE_RADIUS {
        return Err(VesselError::NotIncident { x: junction.0, y: junction.1, max: INCIDENCE_RADIUS });
    }
    let at_start = d0 <= d1;
    if n < 3 {
        let (a, b) = if at_start { (v.points[0], v.points[1]) } else { (v.points[1], v.points[0]) };
        let (dx, dy) = (b.0 - a.0, b.1 - a.1);
        let norm = dx.hypot(dy);
        return Ok((dx / norm, dy / norm));
    }
    let smooth = SmoothVessel::new(&v.points, Some(TANGENT_HARMONICS))?;
    if at_start {
        Ok(smooth.tangent(0.0))
    } else {
        let t = smooth.tangent((n - 1) as f64);
        Ok((-t.0, -t.1))
    }
}

/// Angle between the outward tangents of two vessels at a shared junction.
pub fn branch_angle(v1: &ExtendedVessel, v2: &ExtendedVessel, junction: (f64, f64)) -> Result<f64, VesselError> {
    let a = outward_tangent(v1, junction)?;
    let b = outward_tangent(v2, junction)?;
    Ok(angle_between(a, b))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VesselMetrics {
    pub tortuosity: f64,
    pub arc_length: f64,
    pub mean_abs_curvature: f64,
    pub branch_angles: Vec<f64>,
}

/// Share of the vessel, centred, over which curvature is averaged.
pub const CURVATURE_SPAN: f64 = 0.8;

/// Tortuosity, length and mean absolute curvature of an open vessel.
///
/// `harmonics` limits the series (per single traversal) used for both
/// tortuosity and curvature. Branch angles are left empty; see
/// [`junction_branch_angles`].
pub fn vessel_metrics(v: &ExtendedVessel, harmonics: Option<usize>) -> Result<VesselMetrics, VesselError> {
    if v.points.len() < 4 {
        return Err(VesselError::TooShort(v.points.len()));
    }
    if v.is_closed() {
        return Err(VesselError::Closed);
    }
    let tortuosity = tortuosity::vessel_tortuosity(&v.points, harmonics)?;
    let kappa = SmoothVessel::new(&v.points, harmonics)?.curvature()?;
    let n = kappa.len();
    let margin = ((1.0 - CURVATURE_SPAN) / 2.0 * n as f64).floor() as usize;
    let inner = &kappa[margin..n - margin];
    let mean_abs_curvature = inner.iter().map(|k| k.abs()).sum::<f64>() / inner.len() as f64;
    Ok(VesselMetrics { tortuosity, arc_length: v.arc_length(), mean_abs_curvature, branch_angles: Vec::new() })
}

/// For every junction node, the branch angles between each pair of vessels
/// that end there, credited to both vessels.
pub fn junction_branch_angles(graph: &SkeletonGraph, vessels: &[ExtendedVessel]) -> Vec<Vec<f64>> {
    let mut out = vec![Vec::new(); vessels.len()];
    for node in graph.nodes.iter().filter(|n| n.kind == NodeKind::Junction) {
        let j = (node.x as f64, node.y as f64);
        let ending: Vec<usize> = (0..vessels.len())
            .filter(|&i| {
                let v = &vessels[i];
                !v.is_closed() && [v.points[0], v.points[v.points.len() - 1]].iter().any(|p| p.0 == j.0 && p.1 == j.1)
            })
            .collect();
        for (a, &i) in ending.iter().enumerate() {
            for &k in &ending[a + 1..] {
                if let Ok(angle) = branch_angle(&vessels[i], &vessels[k], j) {
                    out[i].push(angle);
                    out[k].push(angle);
                }
            }
        }
    }
    out
}

/// Smoothed view of an open vessel at its own samples, in image coordinates.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VesselProfile {
    pub original: Vec<(f64, f64)>,
    pub reconstruction: Vec<(f64, f64)>,
    /// Derivative of the reconstruction with respect to the sample index.
    pub derivative: Vec<(f64, f64)>,
    pub curvature: Vec<f64>,
}

/// Reconstruction from the first `harmonics` harmonics (all when `None`),
/// its derivative and signed curvature.
pub fn vessel_profile(v: &ExtendedVessel, harmonics: Option<usize>) -> Result<VesselProfile, VesselError> {
    if v.points.len() < 4 {
        return Err(VesselError::TooShort(v.points.len()));
    }
    if v.is_closed() {
        return Err(VesselError::Closed);
    }
    let smooth = SmoothVessel::new(&v.points, harmonics)?;
    let period = smooth.period();
    let step = smooth.frame.chord / (smooth.forward - 1) as f64;
    let residual = harmonics::reconstruct(&smooth.residual, period / 2, period)?;
    let first = harmonics::reconstruct(&smooth.first_derivative(), period / 2, period)?;
    // one sample step is 2π/period of the canonical parameter
    let per_index = 2.0 * PI / period as f64;
    let mut reconstruction = Vec::with_capacity(smooth.forward);
    let mut derivative = Vec::with_capacity(smooth.forward);
    for i in 0..smooth.forward {
        let z = smooth.frame.translation
            + smooth.frame.unrotate(residual.samples()[i] + Complex64::new(step * i as f64, 0.0));
        let dz = smooth.frame.unrotate(first.samples()[i]) * per_index;
        reconstruction.push((z.re, z.im));
        derivative.push((dz.re, dz.im));
    }
    Ok(VesselProfile { original: v.points.clone(), reconstruction, derivative, curvature: smooth.curvature()? })
}

/// CSV rows `vessel_id,tortuosity,arc_length,mean_abs_curvature`.
pub fn metrics_csv(rows: &[(usize, VesselMetrics)]) -> String {
    let mut s = String::from("vessel_id,tortuosity,arc_length,mean_abs_curvature\n");
    for (id, m) in rows {
        let _ = writeln!(s, "{},{},{},{}", id, m.tortuosity, m.arc_length, m.mean_abs_curvature);
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::BinaryImage;

    fn sk(rows: &[&str]) -> SkeletonImage {
        SkeletonImage::from_thin_mask(BinaryImage::from_ascii(rows).unwrap())
    }

    fn draw(w: usize, h: usize, px: &[Pixel]) -> SkeletonImage {
        let mut m = BinaryImage::empty(w, h).unwrap();
        for &(x, y) in px {
            m.set(x, y, true);
        }
        SkeletonImage::from_thin_mask(m)
    }

    fn line(from: (i64, i64), dir: (i64, i64), len: usize) -> Vec<Pixel> {
        (0..len as i64).map(|i| ((from.0 + dir.0 * i) as usize, (from.1 + dir.1 * i) as usize)).collect()
    }

    fn y_shape(arm3: usize) -> SkeletonImage {
        // centre (10,10); arms up-left, up-right, straight down
        let mut px = vec![(10, 10)];
        px.extend(line((9, 9), (-1, -1), 6));
        px.extend(line((11, 9), (1, -1), 6));
        px.extend(line((10, 11), (0, 1), arm3));
        draw(21, 21, &px)
    }

    #[test]
    fn empty_skeleton() {
        let g = build_graph(&draw(5, 5, &[]));
        assert!(g.nodes.is_empty() && g.edges.is_empty());
    }

    #[test]
    fn straight_line() {
        let g = build_graph(&draw(12, 3, &line((1, 1), (1, 0), 10)));
        assert_eq!(g.nodes.len(), 2);
        assert!(g.nodes.iter().all(|n| n.kind == NodeKind::Endpoint));
        assert_eq!(g.edges.len(), 1);
        assert_eq!(g.edges[0].chain.len(), 10);
    }

    #[test]
    fn y_junction() {
        let g = build_graph(&y_shape(6));
        let junctions: Vec<_> = g.nodes.iter().filter(|n| n.kind == NodeKind::Junction).collect();
        assert_eq!(junctions.len(), 1);
        assert_eq!(junctions[0].pixel(), (10, 10));
        assert_eq!(g.nodes.iter().filter(|n| n.kind == NodeKind::Endpoint).count(), 3);
        assert_eq!(g.edges.len(), 3);
        assert_eq!(g.degrees()[junctions[0].id], 3);
    }

    #[test]
    fn discrete_circle() {
        let g = build_graph(&sk(&[".....", ".###.", "#...#", ".###."]));
        // 8 pixels: (1,1),(2,1),(3,1),(4,2),(3,3),(2,3),(1,3),(0,2)
        assert_eq!(g.nodes.len(), 1);
        assert_eq!(g.nodes[0].kind, NodeKind::Anchor);
        assert_eq!(g.nodes[0].pixel(), (1, 1));
        assert_eq!(g.edges.len(), 1);
        let chain = &g.edges[0].chain;
        assert_eq!(chain.len(), 9);
        assert_eq!(chain.first(), chain.last());
        assert_eq!(chain[..8].iter().collect::<HashSet<_>>().len(), 8);
    }

    #[test]
    fn isolated_pixel() {
        let g = build_graph(&sk(&["...", ".#.", "..."]));
        assert_eq!(g.nodes[0].kind, NodeKind::Isolated);
        assert_eq!(g.edges[0].chain, vec![(1, 1)]);
    }

    #[test]
    fn chains_are_adjacent_and_cover_the_skeleton() {
        let s = y_shape(6);
        let g = build_graph(&s);
        for e in &g.edges {
            assert!(e.chain.windows(2).all(|w| adjacent(w[0], w[1])));
            assert_eq!(e.chain[0], g.nodes[e.a].pixel());
            assert_eq!(*e.chain.last().unwrap(), g.nodes[e.b].pixel());
        }
        let all: BTreeSet<Pixel> = s.as_mask().foreground().collect();
        assert_eq!(g.pixels(), all);
    }

    #[test]
    fn t_junction_cluster() {
        let mut px = line((2, 5), (1, 0), 13);
        px.extend(line((8, 6), (0, 1), 8));
        let g = build_graph(&draw(20, 20, &px));
        let junctions: Vec<_> = g.nodes.iter().filter(|n| n.kind == NodeKind::Junction).collect();
        assert_eq!(junctions.len(), 1);
        assert_eq!(junctions[0].pixel(), (8, 5));
        assert_eq!(g.edges.len(), 3);
        let vessels = track_vessels(&g);
        assert_eq!(vessels.len(), 2);
        let bar = vessels.iter().find(|v| v.points.len() == 13).expect("bar tracked whole");
        assert!(bar.points.iter().all(|p| p.1 == 5.0));
    }

    #[test]
    fn prune_short_arm() {
        let g = build_graph(&y_shape(2));
        let p = prune(&g, 5, 0);
        assert_eq!(p.nodes.len(), 2);
        assert!(p.nodes.iter().all(|n| n.kind == NodeKind::Endpoint));
        assert_eq!(p.edges.len(), 1);
        assert_eq!(p.edges[0].chain.len(), 13);
        assert!(p.edges[0].chain.windows(2).all(|w| adjacent(w[0], w[1])));
    }

    #[test]
    fn prune_identity_and_blob() {
        let g = build_graph(&y_shape(2));
        assert_eq!(prune(&g, 0, 0), g);
        let blob = build_graph(&draw(10, 10, &line((2, 2), (1, 0), 3)));
        assert!(prune(&blob, 0, 10).edges.is_empty());
        assert!(prune(&blob, 0, 10).nodes.is_empty());
        let again = prune(&prune(&g, 5, 0), 5, 0);
        assert_eq!(again, prune(&g, 5, 0));
    }

    #[test]
    fn x_crossing() {
        let mut px = line((0, 0), (1, 1), 21);
        px.extend(line((20, 0), (-1, 1), 21));
        px.sort();
        px.dedup();
        let g = build_graph(&draw(21, 21, &px));
        let vessels = track_vessels(&g);
        assert_eq!(vessels.len(), 2);
        for v in &vessels {
            assert_eq!(v.points.len(), 21);
            let (a, b) = (v.points[0], v.points[20]);
            assert_eq!((a.0 - b.0).abs(), 20.0);
            assert_eq!((a.1 - b.1).abs(), 20.0);
        }
    }

    #[test]
    fn single_edge_vessel() {
        let px = line((1, 1), (1, 0), 10);
        let g = build_graph(&draw(12, 3, &px));
        let v = track_vessels(&g);
        assert_eq!(v.len(), 1);
        assert_eq!(v[0].points.len(), 10);
        assert!((v[0].d_z - 2.0 * PI / 9.0).abs() < 1e-12);
    }

    fn segment(from: (f64, f64), angle: f64, len: usize) -> ExtendedVessel {
        ExtendedVessel::from_points(
            (0..len).map(|i| (from.0 + i as f64 * angle.cos(), from.1 + i as f64 * angle.sin())).collect(),
        )
        .unwrap()
    }

    #[test]
    fn branch_angles() {
        let j = (10.0, 10.0);
        let left = ExtendedVessel::from_points((0..11).map(|i| (i as f64, 10.0)).collect()).unwrap();
        let right = segment(j, 0.0, 11);
        assert!((branch_angle(&left, &right, j).unwrap() - PI).abs() < 1e-9);
        let up = segment(j, -FRAC_PI_2, 11);
        assert!((branch_angle(&right, &up, j).unwrap() - FRAC_PI_2).abs() < 0.05);
        // pixel fork: one branch along x, the other along the diagonal
        let diag = ExtendedVessel::from_points((0..11).map(|i| (10.0 + i as f64, 10.0 + i as f64)).collect()).unwrap();
        let drawn = (1.0f64).atan2(1.0) - 0.0f64.atan2(1.0);
        assert!((branch_angle(&right, &diag, j).unwrap() - drawn).abs() < 0.05);
        let far = segment((40.0, 40.0), 0.0, 5);
        assert!(matches!(branch_angle(&right, &far, j), Err(VesselError::NotIncident { .. })));
    }

    #[test]
    fn profile_reproduces_a_smooth_vessel() {
        let pts: Vec<(f64, f64)> = (0..200)
            .map(|i| {
                let x = 10.0 + i as f64;
                (x, 40.0 + 12.0 * (2.0 * PI * i as f64 / 199.0).sin())
            })
            .collect();
        let v = ExtendedVessel::from_points(pts.clone()).unwrap();
        let p = vessel_profile(&v, None).unwrap();
        for (a, b) in p.reconstruction.iter().zip(&pts) {
            assert!((a.0 - b.0).abs() < 1e-9 && (a.1 - b.1).abs() < 1e-9);
        }
        let w = 2.0 * PI / 199.0;
        for i in [50usize, 100, 150] {
            let (dx, dy) = p.derivative[i];
            assert!((dx - 1.0).abs() < 1e-3, "{dx}");
            assert!((dy - 12.0 * w * (w * i as f64).cos()).abs() < 1e-3, "{dy}");
        }
        assert_eq!(p.curvature.len(), 200);
        assert!(matches!(vessel_profile(&segment((0.0, 0.0), 0.0, 3), None), Err(VesselError::TooShort(3))));
    }

    #[test]
    fn metrics_of_simple_vessels() {
        let line = segment((3.0, 4.0), 0.3, 40);
        let m = vessel_metrics(&line, Some(16)).unwrap();
        assert!(m.tortuosity.abs() < 1e-6);
        assert!(m.mean_abs_curvature.abs() < 1e-6);
        assert!((m.arc_length - 39.0).abs() < 1e-9);

        let n = 400;
        let semi = ExtendedVessel::from_points(
            (0..n)
                .map(|i| {
                    let a = PI * i as f64 / (n - 1) as f64;
                    (50.0 - 50.0 * a.cos(), 50.0 * a.sin())
                })
                .collect(),
        )
        .unwrap();
        let m = vessel_metrics(&semi, Some(24)).unwrap();
        assert!((m.mean_abs_curvature - 0.02).abs() < 0.02 * 0.05, "{}", m.mean_abs_curvature);

        let pts: Vec<(f64, f64)> = (0..257)
            .map(|i| {
                let t = -PI + 2.0 * PI * i as f64 / 256.0;
                (t, (2.0 * t).sin())
            })
            .collect();
        let sine = ExtendedVessel::from_points(pts).unwrap();
        assert!((sine.d_z - 1.0).abs() < 1e-12);
        let m = vessel_metrics(&sine, None).unwrap();
        assert!((m.tortuosity - 2.0).abs() < 1e-2, "{}", m.tortuosity);

        assert_eq!(vessel_metrics(&segment((0.0, 0.0), 0.0, 3), None), Err(VesselError::TooShort(3)));
    }

    #[test]
    fn json_and_csv() {
        let g = build_graph(&y_shape(6));
        let back = SkeletonGraph::from_json(&g.to_json()).unwrap();
        assert_eq!(back, g);
        assert!(g.to_json().contains("\"kind\": \"junction\""));
        let csv = metrics_csv(&[(
            0,
            VesselMetrics { tortuosity: 0.5, arc_length: 10.0, mean_abs_curvature: 0.1, branch_angles: vec![] },
        )]);
        assert_eq!(csv, "vessel_id,tortuosity,arc_length,mean_abs_curvature\n0,0.5,10,0.1\n");
    }
}
