use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::ProblemError;
use crate::simnet::Topology;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TopologyKind {
    /// Chain `0 – 1 – … – (n−1)`.
    Path,
    /// Node 0 linked to every other node.
    Star,
    /// Path plus `⌈n/3⌉` short chords.
    WeakMesh,
    /// Path plus every chord `(i, i+2)` and `(i, i+3)`.
    StrongMesh,
    /// Random spanning tree plus uniformly sampled extra edges.
    Random,
}

impl TopologyKind {
    pub const ALL_FIXED: [TopologyKind; 4] = [
        TopologyKind::Path,
        TopologyKind::Star,
        TopologyKind::WeakMesh,
        TopologyKind::StrongMesh,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TopologyKind::Path => "path",
            TopologyKind::Star => "star",
            TopologyKind::WeakMesh => "weak-mesh",
            TopologyKind::StrongMesh => "strong-mesh",
            TopologyKind::Random => "random",
        }
    }
}

impl fmt::Display for TopologyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TopologyKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "path" => Ok(TopologyKind::Path),
            "star" => Ok(TopologyKind::Star),
            "weak-mesh" | "weakly-meshed" => Ok(TopologyKind::WeakMesh),
            "strong-mesh" | "strongly-meshed" => Ok(TopologyKind::StrongMesh),
            "random" => Ok(TopologyKind::Random),
            other => Err(format!("unknown topology kind '{other}'")),
        }
    }
}

/// Builds a connected communication graph.
///
/// `seed` and `extra_edges` only affect [`TopologyKind::Random`]; the other
/// kinds are fully determined by `nodes`.
pub fn make_topology(
    kind: TopologyKind,
    nodes: usize,
    seed: u64,
    extra_edges: usize,
) -> Result<Topology, ProblemError> {
    if nodes < 2 {
        return Err(ProblemError::TooFewNodes(nodes));
    }
    let path = (0..nodes - 1).map(|i| (i, i + 1));
    let edges: Vec<(usize, usize)> = match kind {
        TopologyKind::Path => path.collect(),
        TopologyKind::Star => (1..nodes).map(|i| (0, i)).collect(),
        TopologyKind::WeakMesh => {
            let wanted = nodes.div_ceil(3);
            let mut edges: Vec<(usize, usize)> = path.collect();
            edges.extend(chord_candidates(nodes).take(wanted));
            edges
        }
        TopologyKind::StrongMesh => {
            let mut edges: Vec<(usize, usize)> = path.collect();
            edges.extend((0..nodes).filter(|i| i + 2 < nodes).map(|i| (i, i + 2)));
            edges.extend((0..nodes).filter(|i| i + 3 < nodes).map(|i| (i, i + 3)));
            edges
        }
        TopologyKind::Random => random_edges(nodes, seed, extra_edges)?,
    };
    Ok(Topology::new(nodes, edges)?)
}

// Chords in a fixed order: (i, i+2) for even i, then odd i, then (i, i+3).
fn chord_candidates(nodes: usize) -> impl Iterator<Item = (usize, usize)> {
    let even = (0..nodes).step_by(2).filter(move |i| i + 2 < nodes).map(|i| (i, i + 2));
    let odd = (1..nodes).step_by(2).filter(move |i| i + 2 < nodes).map(|i| (i, i + 2));
    let skip3 = (0..nodes).filter(move |i| i + 3 < nodes).map(|i| (i, i + 3));
    even.chain(odd).chain(skip3)
}

fn random_edges(nodes: usize, seed: u64, extra: usize) -> Result<Vec<(usize, usize)>, ProblemError> {
    let max_extra = nodes * (nodes - 1) / 2 - (nodes - 1);
    if extra > max_extra {
        return Err(ProblemError::TooManyEdges {
            requested: nodes - 1 + extra,
            max: nodes * (nodes - 1) / 2,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..nodes).collect();
    order.shuffle(&mut rng);
    let mut set = BTreeSet::new();
    for k in 1..nodes {
        let parent = order[rng.random_range(0..k)];
        let child = order[k];
        set.insert((parent.min(child), parent.max(child)));
    }
    if extra * 4 >= max_extra {
        // Dense request: sample without replacement from the complement.
        let mut free: Vec<(usize, usize)> = (0..nodes)
            .flat_map(|a| ((a + 1)..nodes).map(move |b| (a, b)))
            .filter(|e| !set.contains(e))
            .collect();
        free.shuffle(&mut rng);
        set.extend(free.into_iter().take(extra));
    } else {
        let target = nodes - 1 + extra;
        while set.len() < target {
            let a = rng.random_range(0..nodes);
            let b = rng.random_range(0..nodes);
            if a != b {
                set.insert((a.min(b), a.max(b)));
            }
        }
    }
    Ok(set.into_iter().collect())
}
