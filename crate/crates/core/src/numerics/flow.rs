//! Edmonds–Karp max-flow on small dense-ish networks with real capacities.
//!
//! Augmenting along BFS-shortest paths bounds the number of augmentations
//! combinatorially (independently of capacity values), so float capacities
//! cannot cause nontermination.

use super::NumericsError;

#[derive(Debug, Clone)]
pub struct FlowArc {
    pub from: usize,
    pub to: usize,
    pub capacity: f64,
}

#[derive(Debug, Clone)]
pub struct FlowNetwork {
    pub nodes: usize,
    pub source: usize,
    pub sink: usize,
    pub arcs: Vec<FlowArc>,
}

#[derive(Debug, Clone)]
pub struct MaxFlowOutcome {
    pub value: f64,
    /// Flow per input arc, aligned with `FlowNetwork::arcs`.
    pub arc_flow: Vec<f64>,
}

const RESIDUAL_EPS: f64 = 1e-15;

pub fn max_flow(net: &FlowNetwork) -> Result<MaxFlowOutcome, NumericsError> {
    if net.source >= net.nodes || net.sink >= net.nodes {
        return Err(NumericsError::InvalidNetwork(
            "source or sink out of range".into(),
        ));
    }
    if net.source == net.sink {
        return Err(NumericsError::InvalidNetwork("source equals sink".into()));
    }
    for (i, arc) in net.arcs.iter().enumerate() {
        if arc.from >= net.nodes || arc.to >= net.nodes {
            return Err(NumericsError::InvalidNetwork(format!(
                "arc {i} endpoint out of range"
            )));
        }
        if !(arc.capacity.is_finite() && arc.capacity >= 0.0) {
            return Err(NumericsError::InvalidNetwork(format!(
                "arc {i} has invalid capacity {}",
                arc.capacity
            )));
        }
    }

    // Residual edges paired as (2k, 2k+1).
    let mut head: Vec<Vec<usize>> = vec![Vec::new(); net.nodes];
    let mut to = Vec::with_capacity(net.arcs.len() * 2);
    let mut residual = Vec::with_capacity(net.arcs.len() * 2);
    for arc in &net.arcs {
        head[arc.from].push(to.len());
        to.push(arc.to);
        residual.push(arc.capacity);
        head[arc.to].push(to.len());
        to.push(arc.from);
        residual.push(0.0);
    }

    let mut value = 0.0_f64;
    let mut parent_edge = vec![usize::MAX; net.nodes];
    loop {
        parent_edge.fill(usize::MAX);
        parent_edge[net.source] = usize::MAX - 1;
        let mut queue = std::collections::VecDeque::new();
        queue.push_back(net.source);
        let mut reached = false;
        'bfs: while let Some(u) = queue.pop_front() {
            for &e in &head[u] {
                let v = to[e];
                if parent_edge[v] == usize::MAX && residual[e] > RESIDUAL_EPS {
                    parent_edge[v] = e;
                    if v == net.sink {
                        reached = true;
                        break 'bfs;
                    }
                    queue.push_back(v);
                }
            }
        }
        if !reached {
            break;
        }
        let mut bottleneck = f64::INFINITY;
        let mut v = net.sink;
        while v != net.source {
            let e = parent_edge[v];
            bottleneck = bottleneck.min(residual[e]);
            v = to[e ^ 1];
        }
        let mut v = net.sink;
        while v != net.source {
            let e = parent_edge[v];
            residual[e] -= bottleneck;
            residual[e ^ 1] += bottleneck;
            v = to[e ^ 1];
        }
        value += bottleneck;
    }

    let arc_flow: Vec<f64> = net
        .arcs
        .iter()
        .enumerate()
        .map(|(k, _)| residual[2 * k + 1])
        .collect();
    Ok(MaxFlowOutcome { value, arc_flow })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn net(nodes: usize, source: usize, sink: usize, arcs: &[(usize, usize, f64)]) -> FlowNetwork {
        FlowNetwork {
            nodes,
            source,
            sink,
            arcs: arcs
                .iter()
                .map(|&(from, to, capacity)| FlowArc { from, to, capacity })
                .collect(),
        }
    }

    #[test]
    fn single_arc() {
        let out = max_flow(&net(2, 0, 1, &[(0, 1, 1.0)])).unwrap();
        assert!((out.value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn parallel_arcs() {
        let out = max_flow(&net(2, 0, 1, &[(0, 1, 0.3), (0, 1, 0.4)])).unwrap();
        assert!((out.value - 0.7).abs() < 1e-12);
    }

    #[test]
    fn conservation_holds() {
        let out = max_flow(&net(
            4,
            0,
            3,
            &[(0, 1, 0.6), (0, 2, 0.5), (1, 3, 0.4), (2, 3, 0.9), (1, 2, 0.2)],
        ))
        .unwrap();
        let n = net(
            4,
            0,
            3,
            &[(0, 1, 0.6), (0, 2, 0.5), (1, 3, 0.4), (2, 3, 0.9), (1, 2, 0.2)],
        );
        let mut excess = [0.0_f64; 4];
        for (arc, f) in n.arcs.iter().zip(&out.arc_flow) {
            assert!(*f >= -1e-12 && *f <= arc.capacity + 1e-12);
            excess[arc.from] -= f;
            excess[arc.to] += f;
        }
        assert!((excess[0] + out.value).abs() < 1e-12);
        assert!((excess[3] - out.value).abs() < 1e-12);
        assert!(excess[1].abs() < 1e-12 && excess[2].abs() < 1e-12);
    }

    /// Max-flow value equals the minimum cut value, checked by exhaustive cut
    /// enumeration on random small networks.
    #[test]
    fn value_matches_min_cut() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..30 {
            let nodes = rng.gen_range(4..=9);
            let mut arcs = Vec::new();
            for u in 0..nodes {
                for v in 0..nodes {
                    if u != v && rng.gen_bool(0.35) {
                        arcs.push((u, v, rng.gen_range(0..=8) as f64 / 8.0));
                    }
                }
            }
            let network = net(nodes, 0, nodes - 1, &arcs);
            let out = max_flow(&network).unwrap();
            let mut min_cut = f64::INFINITY;
            for mask in 0..(1u32 << nodes) {
                if mask & 1 == 0 || mask >> (nodes - 1) & 1 == 1 {
                    continue; // source must be inside, sink outside
                }
                let cut: f64 = network
                    .arcs
                    .iter()
                    .filter(|a| mask >> a.from & 1 == 1 && mask >> a.to & 1 == 0)
                    .map(|a| a.capacity)
                    .sum();
                min_cut = min_cut.min(cut);
            }
            assert!(
                (out.value - min_cut).abs() < 1e-9,
                "flow {} vs cut {}",
                out.value,
                min_cut
            );
        }
    }
}
