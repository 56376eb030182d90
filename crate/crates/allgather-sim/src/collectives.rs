//! Schedule generators and end-to-end drivers for the allgather algorithms.
//!
//! Four algorithms are implemented:
//!
//! * `bruck` — the log-step exchange: at step `i` every rank sends its
//!   first `n * 2^i` values a distance `2^i` down the rank ring, then the
//!   result is rotated into canonical order.
//! * `locality-bruck` — the locality-aware variant: an allgather inside
//!   each region, then alternating rounds of one non-local exchange per
//!   rank (local id 0 stays idle) and a local re-gather of the received
//!   chunks.
//! * `ring` — `p - 1` neighbor steps, each forwarding the most recently
//!   received block.
//! * `hierarchical` — gather onto one master per region, a log-step
//!   exchange among masters, then a flat local broadcast.
//!
//! All rank arithmetic is modulo `p`; the exchanges wrap around the ring.

use std::fmt;

use crate::buffer::Buffer;
use crate::error::{Error, Result};
use crate::event::MessageEvent;
use crate::fabric::{self, StepPlan, Tally};
use crate::topology::Topology;

/// The implemented allgather algorithms.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AlgorithmId {
    Bruck,
    LocalityBruck,
    Ring,
    Hierarchical,
}

impl AlgorithmId {
    pub const ALL: [AlgorithmId; 4] = [
        AlgorithmId::Bruck,
        AlgorithmId::LocalityBruck,
        AlgorithmId::Ring,
        AlgorithmId::Hierarchical,
    ];

    /// Stable serialized name, also the CLI-visible identifier.
    pub fn name(self) -> &'static str {
        match self {
            AlgorithmId::Bruck => "bruck",
            AlgorithmId::LocalityBruck => "locality-bruck",
            AlgorithmId::Ring => "ring",
            AlgorithmId::Hierarchical => "hierarchical",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|alg| alg.name() == name)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "unknown algorithm {name:?}; expected one of bruck, locality-bruck, ring, hierarchical"
                ))
            })
    }
}

impl fmt::Display for AlgorithmId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// How final buffers are brought into canonical origin order.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Finalize {
    /// Cyclic right-shift of the block sequence by the rank id; requires the
    /// buffer to be full and in cyclic order starting at the rank's own
    /// block.
    RotateDownByRank,
    /// Reorder blocks by origin rank.
    SortByOrigin,
}

/// A generated communication schedule plus its finalization directive.
#[derive(Debug, Clone)]
pub struct Schedule {
    pub steps: Vec<StepPlan>,
    pub finalize: Finalize,
}

fn log2(x: usize) -> usize {
    debug_assert!(x.is_power_of_two());
    x.trailing_zeros() as usize
}

/// Number of non-local exchange rounds of the locality-aware algorithm:
/// the exponent `k` with `region_size^k == region_count`.
///
/// Region counts that are not an integer power of the region size would
/// leave some ranks idle and need a variable-count gather for the local
/// rounds; that generalization is not implemented.
pub fn locality_rounds(topo: &Topology) -> Result<usize> {
    let pl = topo.region_size();
    let r = topo.region_count();
    if r == 1 {
        return Ok(0);
    }
    if pl == 1 {
        return Err(Error::UnsupportedTopology(
            "locality-aware allgather requires at least 2 ranks per region \
             when there is more than one region"
                .into(),
        ));
    }
    let mut k = 0usize;
    let mut acc = 1usize;
    while acc < r {
        acc *= pl;
        k += 1;
    }
    if acc != r {
        return Err(Error::UnsupportedTopology(format!(
            "region count {r} is not an integer power of region size {pl}; \
             general power-of-two region counts are not supported"
        )));
    }
    Ok(k)
}

/// Schedule for the log-step exchange.
///
/// Step `i` (0-based): rank `k` sends its first `n * 2^i` values to rank
/// `(k - 2^i) mod p` and appends `n * 2^i` values received from
/// `(k + 2^i) mod p`. After `log2(p)` steps every rank holds all `n * p`
/// values in cyclic origin order starting at its own block.
pub fn bruck_schedule(topo: &Topology) -> Result<Schedule> {
    let p = topo.process_count();
    let n = topo.values_per_rank();
    let mut steps = Vec::with_capacity(log2(p));
    for i in 0..log2(p) {
        let dist = 1usize << i;
        let mut plan = StepPlan::new(p, "exchange");
        for rank in 0..p {
            let dst = (rank + p - dist) % p;
            let src = (rank + dist) % p;
            let origins = (0..dist).map(|t| (rank + t) % p).collect();
            plan.post_send(rank, dst, origins);
            plan.post_recv(rank, src, n * dist);
        }
        steps.push(plan);
    }
    Ok(Schedule {
        steps,
        finalize: Finalize::RotateDownByRank,
    })
}

/// Rotate a full cyclic buffer into canonical order.
///
/// The buffer must hold all `p` blocks in cyclic origin order starting at
/// `rank`; the result is a cyclic right-shift by `rank` block positions,
/// which places origin 0 first.
pub fn rotate_down(mut buffer: Buffer, rank: usize, topo: &Topology) -> Result<Buffer> {
    let p = topo.process_count();
    if rank >= p {
        return Err(Error::InvalidArgument(format!(
            "rank {rank} out of range for {p} processes"
        )));
    }
    if buffer.block_count() != p {
        return Err(Error::InvalidArgument(format!(
            "rotation requires all {p} blocks, buffer holds {}",
            buffer.block_count()
        )));
    }
    for (pos, origin) in buffer.origins().enumerate() {
        if origin != (rank + pos) % p {
            return Err(Error::InvalidArgument(format!(
                "buffer is not in cyclic order starting at rank {rank}: \
                 position {pos} holds origin {origin}"
            )));
        }
    }
    buffer.rotate_right(rank);
    Ok(buffer)
}

/// Schedule for the neighbor ring.
///
/// `p - 1` steps; at each step rank `k` forwards the block it received most
/// recently (initially its own) to `(k - 1) mod p` and receives one block
/// from `(k + 1) mod p`.
pub fn ring_schedule(topo: &Topology) -> Result<Schedule> {
    let p = topo.process_count();
    let n = topo.values_per_rank();
    let mut steps = Vec::with_capacity(p.saturating_sub(1));
    for i in 0..p.saturating_sub(1) {
        let mut plan = StepPlan::new(p, "ring");
        for rank in 0..p {
            let carried = (rank + i) % p;
            plan.post_send(rank, (rank + p - 1) % p, vec![carried]);
            plan.post_recv(rank, (rank + 1) % p, n);
        }
        steps.push(plan);
    }
    Ok(Schedule {
        steps,
        finalize: Finalize::SortByOrigin,
    })
}

/// Log-step allgather among the ranks of every region, over per-rank units
/// of `unit_blocks` consecutive blocks. Local rank `j`'s unit starts at
/// block `region_base + j * unit_blocks` (mod `p`).
fn push_local_gather(
    steps: &mut Vec<StepPlan>,
    topo: &Topology,
    unit_blocks: usize,
    phase: usize,
    allow_duplicates: bool,
) {
    let p = topo.process_count();
    let pl = topo.region_size();
    let n = topo.values_per_rank();
    let label = format!("local-gather-{phase}");
    for s in 0..log2(pl) {
        let dist = 1usize << s;
        let mut plan = StepPlan::new(p, &label);
        for rank in 0..p {
            let lid = rank % pl;
            let base = rank - lid;
            let dst = base + (lid + pl - dist) % pl;
            let src = base + (lid + dist) % pl;
            let mut origins = Vec::with_capacity(dist * unit_blocks);
            for t in 0..dist {
                let unit = (lid + t) % pl;
                for b in 0..unit_blocks {
                    origins.push((base + unit * unit_blocks + b) % p);
                }
            }
            plan.post_send(rank, dst, origins);
            if allow_duplicates {
                plan.post_recv_dedup(rank, src, n * dist * unit_blocks);
            } else {
                plan.post_recv(rank, src, n * dist * unit_blocks);
            }
        }
        steps.push(plan);
    }
}

/// Schedule for the locality-aware variant of the log-step exchange.
///
/// Structure: an allgather inside each region; then for each round
/// `i < k = log_{p_l}(r)` a single non-local exchange per rank — local id
/// `j` trades its accumulated `n * p_l^(i+1)` values with the rank
/// `j * p_l^(i+1)` positions away, local id 0 staying idle — followed by a
/// local re-gather of the received chunks in which local id 0 contributes
/// the chunk every rank in the region already holds.
pub fn locality_bruck_schedule(topo: &Topology) -> Result<Schedule> {
    let p = topo.process_count();
    let pl = topo.region_size();
    let n = topo.values_per_rank();
    let k = locality_rounds(topo)?;

    let mut steps = Vec::new();
    let mut phase = 0usize;
    push_local_gather(&mut steps, topo, 1, phase, false);
    phase += 1;

    // Blocks accumulated per rank so far; every rank in a region holds the
    // same window starting at the region's base block.
    let mut chunk = pl;
    for _ in 0..k {
        let mut plan = StepPlan::new(p, format!("nonlocal-{phase}"));
        for rank in 0..p {
            let lid = rank % pl;
            if lid == 0 {
                continue; // first rank per region is idle off-region
            }
            let dist = lid * chunk;
            let base = rank - lid;
            let origins = (0..chunk).map(|t| (base + t) % p).collect();
            plan.post_send(rank, (rank + p - dist) % p, origins);
            plan.post_recv(rank, (rank + dist) % p, n * chunk);
        }
        steps.push(plan);
        phase += 1;

        push_local_gather(&mut steps, topo, chunk, phase, true);
        phase += 1;
        chunk *= pl;
    }

    Ok(Schedule {
        steps,
        finalize: Finalize::SortByOrigin,
    })
}

/// Schedule for the single-leader baseline: every non-master rank sends its
/// block straight to the region master (local id 0), the masters run the
/// log-step exchange over whole-region payloads, and each master then sends
/// the complete array to every rank in its region.
pub fn hierarchical_schedule(topo: &Topology) -> Result<Schedule> {
    let p = topo.process_count();
    let pl = topo.region_size();
    let r = topo.region_count();
    let n = topo.values_per_rank();
    let mut steps = Vec::new();

    for t in 1..pl {
        let mut plan = StepPlan::new(p, "gather-0");
        for region in 0..r {
            let base = region * pl;
            plan.post_send(base + t, base, vec![base + t]);
            plan.post_recv(base, base + t, n);
        }
        steps.push(plan);
    }

    for i in 0..log2(r) {
        let dist = 1usize << i;
        let mut plan = StepPlan::new(p, "exchange-1");
        for m in 0..r {
            let rank = m * pl;
            let dst = ((m + r - dist) % r) * pl;
            let src = ((m + dist) % r) * pl;
            let mut origins = Vec::with_capacity(dist * pl);
            for t in 0..dist {
                let region = (m + t) % r;
                origins.extend((0..pl).map(|b| region * pl + b));
            }
            plan.post_send(rank, dst, origins);
            plan.post_recv(rank, src, n * dist * pl);
        }
        steps.push(plan);
    }

    let everything: Vec<usize> = (0..p).collect();
    for t in 1..pl {
        let mut plan = StepPlan::new(p, "broadcast-2");
        for region in 0..r {
            let base = region * pl;
            plan.post_send(base, base + t, everything.clone());
            // The receiver still holds its own block, so the full-array
            // payload carries one permitted duplicate.
            plan.post_recv_dedup(base + t, base, n * p);
        }
        steps.push(plan);
    }

    Ok(Schedule {
        steps,
        finalize: Finalize::SortByOrigin,
    })
}

/// Generate the schedule for an algorithm.
pub fn schedule_for(alg: AlgorithmId, topo: &Topology) -> Result<Schedule> {
    match alg {
        AlgorithmId::Bruck => bruck_schedule(topo),
        AlgorithmId::LocalityBruck => locality_bruck_schedule(topo),
        AlgorithmId::Ring => ring_schedule(topo),
        AlgorithmId::Hierarchical => hierarchical_schedule(topo),
    }
}

/// Result of a full simulated allgather.
#[derive(Debug, Clone)]
pub struct RunOutput {
    /// Final per-rank buffers in canonical origin order.
    pub buffers: Vec<Buffer>,
    pub tally: Tally,
    pub events: Vec<MessageEvent>,
}

/// Simulate one allgather end to end: generate the schedule, execute it,
/// bring every buffer into canonical order, and tally the event log.
pub fn run(alg: AlgorithmId, topo: &Topology) -> Result<RunOutput> {
    let schedule = schedule_for(alg, topo)?;
    let initial = (0..topo.process_count())
        .map(|rank| Buffer::initial(rank, topo))
        .collect();
    let (buffers, events) = fabric::execute(&schedule.steps, initial, topo)?;
    let buffers = match schedule.finalize {
        Finalize::RotateDownByRank => buffers
            .into_iter()
            .enumerate()
            .map(|(rank, buf)| rotate_down(buf, rank, topo))
            .collect::<Result<Vec<_>>>()?,
        Finalize::SortByOrigin => buffers
            .into_iter()
            .map(|mut buf| {
                buf.sort_by_origin();
                buf
            })
            .collect(),
    };
    let tally = fabric::aggregate(&events, topo)?;
    Ok(RunOutput {
        buffers,
        tally,
        events,
    })
}
