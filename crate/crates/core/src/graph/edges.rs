use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{GraphError, Parts};
use crate::uncertainty::{NodeSet, Role};

/// Where the extra edges of uncertain (test) nodes point.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UncertainMode {
    /// No extra edges.
    None,
    /// Targets drawn from the labelled (training) nodes.
    ToCertain,
    /// Targets drawn from every node.
    #[default]
    ToRandom,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct EdgeConfig {
    /// Random global edges per node.
    pub k_rand: usize,
    /// Extra edges per test node.
    pub k_uncer: usize,
    pub uncer_mode: UncertainMode,
    pub seed: u64,
}

impl Default for EdgeConfig {
    fn default() -> Self {
        Self {
            k_rand: 16,
            k_uncer: 16,
            uncer_mode: UncertainMode::ToRandom,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeSource {
    Neighborhood,
    Global,
    Uncertain,
}

/// Undirected edge between node positions `a < b`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Edge {
    pub a: u32,
    pub b: u32,
    /// First source (in `EdgeSource` order) that produced the edge.
    pub source: EdgeSource,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EdgeCounts {
    pub neighborhood: usize,
    pub global: usize,
    pub uncertain: usize,
}

impl EdgeCounts {
    pub fn total(&self) -> usize {
        self.neighborhood + self.global + self.uncertain
    }
}

/// Deduplicated edges sorted by `(a, b)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EdgeList {
    pub n: usize,
    pub edges: Vec<Edge>,
}

impl EdgeList {
    pub fn len(&self) -> usize {
        self.edges.len()
    }

    pub fn is_empty(&self) -> bool {
        self.edges.is_empty()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.edges.iter().map(|e| (e.a, e.b))
    }

    pub fn counts(&self) -> EdgeCounts {
        let mut c = EdgeCounts::default();
        for e in &self.edges {
            match e.source {
                EdgeSource::Neighborhood => c.neighborhood += 1,
                EdgeSource::Global => c.global += 1,
                EdgeSource::Uncertain => c.uncertain += 1,
            }
        }
        c
    }
}

/// Draws distinct targets for one node from sorted candidate pools.
struct Sampler<'a> {
    rng: &'a mut ChaCha8Rng,
    taken: HashSet<u32>,
}

impl Sampler<'_> {
    fn reset(&mut self, self_id: u32) {
        self.taken.clear();
        self.taken.insert(self_id);
    }

    /// Up to `k` members of `pool` not yet taken. Returns how many were drawn.
    fn draw(&mut self, pool: &[u32], k: usize, out: &mut Vec<u32>) -> usize {
        if k == 0 || pool.is_empty() {
            return 0;
        }
        let blocked = self
            .taken
            .iter()
            .filter(|t| pool.binary_search(t).is_ok())
            .count();
        let available = pool.len() - blocked;
        if available == 0 {
            return 0;
        }
        let before = out.len();
        if k >= available {
            for &c in pool {
                if self.taken.insert(c) {
                    out.push(c);
                }
            }
        } else if available >= 2 * k {
            while out.len() - before < k {
                let c = pool[self.rng.gen_range(0..pool.len())];
                if self.taken.insert(c) {
                    out.push(c);
                }
            }
        } else {
            let mut free: Vec<u32> = pool
                .iter()
                .copied()
                .filter(|c| !self.taken.contains(c))
                .collect();
            let (chosen, _) = free.partial_shuffle(self.rng, k);
            for &c in chosen.iter() {
                self.taken.insert(c);
                out.push(c);
            }
        }
        out.len() - before
    }
}

/// Build the undirected edge set.
///
/// * every node links to its face neighbours that are also nodes;
/// * every node draws `k_rand` distinct random targets. With two or more
///   tumour parts the draws go round-robin over the parts other than the
///   node's own, falling back to the whole node set once those run out;
/// * every test node draws `k_uncer` further targets per `uncer_mode`.
///
/// Requests larger than the candidate pool degrade to the whole pool.
pub fn build_edges(nodes: &NodeSet, parts: &Parts, cfg: &EdgeConfig) -> Result<EdgeList, GraphError> {
    let n = nodes.len();
    if n == 0 {
        return Err(GraphError::EmptyNodeSet);
    }
    assert_eq!(parts.ids.len(), n, "part ids must align with nodes");
    let grid = nodes.grid();
    let mut raw: Vec<(u32, u32, EdgeSource)> = Vec::new();
    let push = |raw: &mut Vec<_>, i: u32, j: u32, s: EdgeSource| {
        if i != j {
            raw.push((i.min(j), i.max(j), s));
        }
    };

    for (i, node) in nodes.nodes().iter().enumerate() {
        for nb in grid.face_neighbors(node.voxel) {
            if nb > node.voxel {
                if let Some(j) = nodes.position(nb) {
                    push(&mut raw, i as u32, j as u32, EdgeSource::Neighborhood);
                }
            }
        }
    }

    let all: Vec<u32> = (0..n as u32).collect();
    let mut short = 0usize;

    if cfg.k_rand > 0 {
        let mut by_part: Vec<Vec<u32>> = vec![Vec::new(); parts.count as usize + 1];
        for (i, &p) in parts.ids.iter().enumerate() {
            by_part[p as usize].push(i as u32);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(1);
        let mut sampler = Sampler {
            rng: &mut rng,
            taken: HashSet::new(),
        };
        let mut targets = Vec::with_capacity(cfg.k_rand);
        for i in 0..n as u32 {
            sampler.reset(i);
            targets.clear();
            if parts.count >= 2 {
                let own = parts.ids[i as usize];
                let mut strata: Vec<&[u32]> = (1..=parts.count)
                    .filter(|&p| p != own)
                    .map(|p| by_part[p as usize].as_slice())
                    .collect();
                let mut turn = sampler.rng.gen_range(0..strata.len());
                while targets.len() < cfg.k_rand && !strata.is_empty() {
                    turn %= strata.len();
                    if sampler.draw(strata[turn], 1, &mut targets) == 0 {
                        strata.remove(turn);
                    } else {
                        turn += 1;
                    }
                }
            }
            let rest = cfg.k_rand - targets.len();
            sampler.draw(&all, rest, &mut targets);
            if targets.len() < cfg.k_rand {
                short += 1;
            }
            for &j in &targets {
                push(&mut raw, i, j, EdgeSource::Global);
            }
        }
    }

    if cfg.uncer_mode != UncertainMode::None && cfg.k_uncer > 0 {
        let certain: Vec<u32> = nodes
            .nodes()
            .iter()
            .enumerate()
            .filter(|(_, nd)| nd.role != Role::Test)
            .map(|(i, _)| i as u32)
            .collect();
        let pool = match cfg.uncer_mode {
            UncertainMode::ToCertain => &certain,
            _ => &all,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(2);
        let mut sampler = Sampler {
            rng: &mut rng,
            taken: HashSet::new(),
        };
        let mut targets = Vec::with_capacity(cfg.k_uncer);
        for (i, _) in nodes.iter_role(Role::Test) {
            sampler.reset(i as u32);
            targets.clear();
            sampler.draw(pool, cfg.k_uncer, &mut targets);
            if targets.len() < cfg.k_uncer {
                short += 1;
            }
            for &j in &targets {
                push(&mut raw, i as u32, j, EdgeSource::Uncertain);
            }
        }
    }

    if short > 0 {
        log::warn!("{short} node(s) had fewer candidate targets than requested; used all available");
    }

    raw.sort_unstable();
    raw.dedup_by_key(|e| (e.0, e.1));
    let edges = raw
        .into_iter()
        .map(|(a, b, source)| Edge { a, b, source })
        .collect();
    Ok(EdgeList { n, edges })
}
