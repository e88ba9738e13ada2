//! Buddy placement of power-of-two jobs onto nodes.
//!
//! Jobs of at most one node get one size-aligned block on a single node;
//! larger jobs take whole free nodes, so no node ever hosts more than one job
//! spanning several nodes. Empty nodes are powered off.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct NodeState {
    pub node_id: u32,
    pub gpus_total: u32,
    /// Occupant of each GPU.
    pub slots: Vec<Option<String>>,
    pub powered_on: bool,
}

impl NodeState {
    pub fn new(node_id: u32, gpus_total: u32) -> Self {
        NodeState { node_id, gpus_total, slots: vec![None; gpus_total as usize], powered_on: false }
    }

    pub fn used(&self) -> u32 {
        self.slots.iter().filter(|s| s.is_some()).count() as u32
    }

    pub fn free(&self) -> u32 {
        self.gpus_total - self.used()
    }

    pub fn is_empty(&self) -> bool {
        self.used() == 0
    }

    pub fn is_partial(&self) -> bool {
        let u = self.used();
        u > 0 && u < self.gpus_total
    }

    fn range_free(&self, start: u32, size: u32) -> bool {
        self.slots[start as usize..(start + size) as usize].iter().all(Option::is_none)
    }

    /// Maximal aligned free blocks as (start, size), by ascending start.
    pub fn free_blocks(&self) -> Vec<(u32, u32)> {
        let mut out = Vec::new();
        self.collect_free(0, self.gpus_total, &mut out);
        out
    }

    fn collect_free(&self, start: u32, size: u32, out: &mut Vec<(u32, u32)>) {
        if self.range_free(start, size) {
            out.push((start, size));
        } else if size > 1 {
            self.collect_free(start, size / 2, out);
            self.collect_free(start + size / 2, size / 2, out);
        }
    }

    /// Smallest free buddy block that can hold `n` GPUs.
    fn tightest_block(&self, n: u32) -> Option<(u32, u32)> {
        self.free_blocks()
            .into_iter()
            .filter(|&(_, size)| size >= n)
            .min_by_key(|&(start, size)| (size, start))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Block {
    pub node_id: u32,
    pub start: u32,
    pub size: u32,
}

impl Block {
    pub fn gpus(&self) -> std::ops::Range<u32> {
        self.start..self.start + self.size
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Placement {
    pub job_id: String,
    pub blocks: Vec<Block>,
}

impl Placement {
    pub fn gpus(&self) -> u32 {
        self.blocks.iter().map(|b| b.size).sum()
    }

    pub fn spans_nodes(&self) -> bool {
        self.blocks.len() > 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Migration {
    pub job_id: String,
    pub from: Placement,
    pub to: Placement,
}

/// Largest power of two not above `n_raw`.
pub fn round_worker_count(n_raw: u32) -> Result<u32> {
    if n_raw == 0 {
        return Err(Error::input("worker count must be at least 1"));
    }
    Ok(1 << (31 - n_raw.leading_zeros()))
}

fn occupy(nodes: &mut [NodeState], job_id: &str, blocks: &[Block]) {
    for b in blocks {
        let node = &mut nodes[b.node_id as usize];
        node.powered_on = true;
        for g in b.gpus() {
            node.slots[g as usize] = Some(job_id.to_string());
        }
    }
}

/// Where `n` GPUs would go, without committing.
fn find_blocks(nodes: &[NodeState], n: u32) -> Result<Vec<Block>> {
    if n == 0 || !n.is_power_of_two() {
        return Err(Error::input(format!("worker count {n} is not a power of two")));
    }
    let free: u32 = nodes.iter().map(NodeState::free).sum();
    if free < n {
        return Err(Error::Capacity { requested: n, free });
    }
    let gpn = nodes.first().map_or(0, |x| x.gpus_total);
    if n <= gpn {
        let best = nodes
            .iter()
            .filter_map(|node| node.tightest_block(n).map(|(start, size)| (node, start, size)))
            .min_by_key(|(node, start, size)| (*size, !node.powered_on, node.node_id, *start));
        return match best {
            Some((node, start, _)) => Ok(vec![Block { node_id: node.node_id, start, size: n }]),
            None => Err(Error::Placement(format!("no aligned block of {n} GPUs"))),
        };
    }
    let need = n.div_ceil(gpn) as usize;
    let whole: Vec<&NodeState> = nodes.iter().filter(|x| x.is_empty()).take(need).collect();
    if whole.len() < need {
        return Err(Error::Placement(format!("{need} whole free nodes needed for {n} GPUs")));
    }
    Ok(whole.iter().map(|x| Block { node_id: x.node_id, start: 0, size: gpn }).collect())
}

/// Places `job_id` on `n` GPUs: best-fit aligned block for single-node jobs,
/// whole free nodes (lowest ids) otherwise.
pub fn buddy_allocate(nodes: &mut [NodeState], job_id: &str, n: u32) -> Result<Placement> {
    let blocks = find_blocks(nodes, n)?;
    occupy(nodes, job_id, &blocks);
    Ok(Placement { job_id: job_id.to_string(), blocks })
}

/// Releases a placement; returns the nodes left empty, which are powered off.
pub fn buddy_free(nodes: &mut [NodeState], placement: &Placement) -> Result<Vec<u32>> {
    for b in &placement.blocks {
        let node = nodes
            .get(b.node_id as usize)
            .ok_or_else(|| Error::state(format!("unknown node {}", b.node_id)))?;
        if b.gpus().any(|g| node.slots[g as usize].as_deref() != Some(placement.job_id.as_str())) {
            return Err(Error::state(format!(
                "job {} does not hold GPUs {:?} on node {}",
                placement.job_id,
                b.gpus(),
                b.node_id
            )));
        }
    }
    let mut emptied = Vec::new();
    for b in &placement.blocks {
        let node = &mut nodes[b.node_id as usize];
        for g in b.gpus() {
            node.slots[g as usize] = None;
        }
        if node.is_empty() {
            node.powered_on = false;
            emptied.push(node.node_id);
        }
    }
    Ok(emptied)
}

pub fn partial_nodes(nodes: &[NodeState]) -> usize {
    nodes.iter().filter(|x| x.is_partial()).count()
}

/// Moves that pack single-node jobs onto fewer partially used nodes.
///
/// Jobs are tried smallest first (then by id); a job moves to the tightest
/// aligned block on another partially used node, and the move is kept only
/// if the number of partially used nodes drops. Passes repeat until no move
/// is kept. `nodes` is left unchanged.
pub fn plan_migrations(nodes: &[NodeState], placements: &BTreeMap<String, Placement>) -> Vec<Migration> {
    let mut work = nodes.to_vec();
    let mut current: BTreeMap<String, Placement> = placements.clone();
    let mut moves: Vec<Migration> = Vec::new();
    loop {
        let mut order: Vec<(u32, String)> = current
            .values()
            .filter(|p| !p.spans_nodes() && work[p.blocks[0].node_id as usize].is_partial())
            .map(|p| (p.gpus(), p.job_id.clone()))
            .collect();
        order.sort();
        let mut moved = false;
        for (size, id) in order {
            let from = current[&id].clone();
            let src = from.blocks[0].node_id;
            let before = partial_nodes(&work);
            let target = work
                .iter()
                .filter(|x| x.node_id != src && x.is_partial())
                .filter_map(|x| x.tightest_block(size).map(|(start, bsize)| (x.node_id, start, bsize)))
                .min_by_key(|&(node, start, bsize)| (bsize, std::cmp::Reverse(work[node as usize].used()), node, start));
            let Some((node, start, _)) = target else { continue };
            let mut trial = work.clone();
            buddy_free(&mut trial, &from).expect("placement held");
            let to = Placement { job_id: id.clone(), blocks: vec![Block { node_id: node, start, size }] };
            occupy(&mut trial, &id, &to.blocks);
            if partial_nodes(&trial) < before {
                work = trial;
                // a job moved twice keeps its original source
                let origin = moves
                    .iter()
                    .position(|m| m.job_id == id)
                    .map(|i| moves.remove(i).from)
                    .unwrap_or(from);
                moves.push(Migration { job_id: id.clone(), from: origin, to: to.clone() });
                current.insert(id, to);
                moved = true;
                break;
            }
        }
        if !moved {
            break;
        }
    }
    moves
}

/// Commits moves from [`plan_migrations`]: all sources are released before
/// any target is taken.
pub fn apply_migrations(nodes: &mut [NodeState], moves: &[Migration]) -> Result<()> {
    for m in moves {
        buddy_free(nodes, &m.from)?;
    }
    for m in moves {
        for b in &m.to.blocks {
            let node = nodes
                .get(b.node_id as usize)
                .ok_or_else(|| Error::state(format!("unknown node {}", b.node_id)))?;
            if b.gpus().any(|g| node.slots[g as usize].is_some()) {
                return Err(Error::state(format!("migration target of job {} is busy", m.job_id)));
            }
        }
        occupy(nodes, &m.job_id, &m.to.blocks);
    }
    Ok(())
}

/// Places every job from scratch: multi-node jobs on the lowest whole nodes,
/// then single-node jobs largest first into the tightest aligned block.
/// Always succeeds when the total fits, since all sizes are powers of two.
pub fn repack(gpus_per_node: u32, num_nodes: u32, jobs: &[(String, u32)]) -> Result<(Vec<NodeState>, Vec<Placement>)> {
    let mut nodes: Vec<NodeState> = (0..num_nodes).map(|i| NodeState::new(i, gpus_per_node)).collect();
    let mut order: Vec<&(String, u32)> = jobs.iter().collect();
    order.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    let mut out = Vec::with_capacity(jobs.len());
    for (id, n) in order {
        out.push(buddy_allocate(&mut nodes, id, *n)?);
    }
    Ok((nodes, out))
}

/// Checks block alignment, power-of-two sizes, the single spanning job per
/// node, and that powered-off nodes are empty.
pub fn check_invariants(nodes: &[NodeState], placements: &BTreeMap<String, Placement>) -> Result<()> {
    let mut spanning_per_node: BTreeMap<u32, u32> = BTreeMap::new();
    let mut held = 0usize;
    for p in placements.values() {
        let multi = p.spans_nodes();
        for b in &p.blocks {
            if !b.size.is_power_of_two() || b.start % b.size != 0 {
                return Err(Error::Invariant(format!("job {} holds misaligned block {b:?}", p.job_id)));
            }
            let node = nodes
                .get(b.node_id as usize)
                .ok_or_else(|| Error::Invariant(format!("job {} on unknown node", p.job_id)))?;
            if b.gpus().any(|g| node.slots[g as usize].as_deref() != Some(p.job_id.as_str())) {
                return Err(Error::Invariant(format!("job {} placement out of sync", p.job_id)));
            }
            held += b.size as usize;
            if multi {
                *spanning_per_node.entry(b.node_id).or_default() += 1;
            }
        }
        if !p.gpus().is_power_of_two() {
            return Err(Error::Invariant(format!("job {} holds {} GPUs", p.job_id, p.gpus())));
        }
    }
    if let Some((node, _)) = spanning_per_node.iter().find(|(_, &c)| c > 1) {
        return Err(Error::Invariant(format!("node {node} hosts several spanning jobs")));
    }
    let occupied: usize = nodes.iter().map(|x| x.used() as usize).sum();
    if occupied != held {
        return Err(Error::Invariant("GPUs occupied by unplaced jobs".into()));
    }
    if let Some(x) = nodes.iter().find(|x| !x.powered_on && !x.is_empty()) {
        return Err(Error::Invariant(format!("node {} is off but busy", x.node_id)));
    }
    Ok(())
}

#[derive(Debug, Clone, Serialize)]
pub struct NodeSnapshot<'a> {
    pub node_id: u32,
    pub powered_on: bool,
    pub gpus: &'a [Option<String>],
}

/// JSON view of the node map for debugging.
pub fn snapshot_json(time: f64, nodes: &[NodeState]) -> Result<String> {
    #[derive(Serialize)]
    struct Snap<'a> {
        time_s: f64,
        nodes: Vec<NodeSnapshot<'a>>,
    }
    let snap = Snap {
        time_s: time,
        nodes: nodes
            .iter()
            .map(|x| NodeSnapshot { node_id: x.node_id, powered_on: x.powered_on, gpus: &x.slots })
            .collect(),
    };
    Ok(serde_json::to_string(&snap)?)
}
