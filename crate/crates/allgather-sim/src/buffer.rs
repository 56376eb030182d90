//! Gathered-data buffers.
//!
//! Payloads are modeled as blocks of origin-tagged values rather than raw
//! byte arrays: a [`Value`] is identified by the rank that initially held it
//! and its index within that rank's initial data, so tests can check both
//! content and ordering of every gather result. Tags are simulation
//! metadata only; byte accounting uses the topology's value width.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::topology::Topology;

/// One gathered value, identified by `(origin, index)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Value {
    pub origin: usize,
    pub index: usize,
}

/// A rank's complete initial block: `values_per_rank` values in index order,
/// all tagged with the same origin.
///
/// Values are immutable once created; cloning a block shares them, so
/// forwarding a block through many hops costs no copies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Block {
    origin: usize,
    values: Arc<[Value]>,
}

impl Block {
    /// Build the initial block owned by `origin`.
    pub fn initial(origin: usize, topo: &Topology) -> Self {
        let values = (0..topo.values_per_rank())
            .map(|index| Value { origin, index })
            .collect();
        Block { origin, values }
    }

    pub fn origin(&self) -> usize {
        self.origin
    }

    pub fn values(&self) -> &[Value] {
        &self.values
    }

    pub fn value_count(&self) -> usize {
        self.values.len()
    }
}

const NO_BLOCK: u32 = u32::MAX;

/// An ordered collection of blocks, at most one per origin rank.
///
/// Blocks keep their insertion order, which is how the cyclic intermediate
/// layouts of the gather algorithms are represented; sorting by origin
/// produces the canonical `0..p` layout.
#[derive(Debug, Clone, Default)]
pub struct Buffer {
    blocks: Vec<Block>,
    // position in `blocks` indexed by origin, NO_BLOCK where absent
    index: Vec<u32>,
}

impl PartialEq for Buffer {
    fn eq(&self, other: &Self) -> bool {
        self.blocks == other.blocks
    }
}

impl Eq for Buffer {}

impl Buffer {
    /// The buffer a rank starts with: exactly its own block.
    pub fn initial(rank: usize, topo: &Topology) -> Self {
        let mut buf = Buffer::default();
        buf.push_block(Block::initial(rank, topo))
            .expect("empty buffer accepts any block");
        buf
    }

    /// Build a buffer from blocks, rejecting duplicate origins.
    pub fn from_blocks(blocks: Vec<Block>) -> Result<Self> {
        let mut buf = Buffer::default();
        for block in blocks {
            buf.push_block(block)?;
        }
        Ok(buf)
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn block_count(&self) -> usize {
        self.blocks.len()
    }

    pub fn value_count(&self) -> usize {
        self.blocks.iter().map(Block::value_count).sum()
    }

    pub fn find(&self, origin: usize) -> Option<&Block> {
        match self.index.get(origin) {
            Some(&pos) if pos != NO_BLOCK => Some(&self.blocks[pos as usize]),
            _ => None,
        }
    }

    pub fn holds(&self, origin: usize) -> bool {
        matches!(self.index.get(origin), Some(&pos) if pos != NO_BLOCK)
    }

    /// Origins in buffer order.
    pub fn origins(&self) -> impl Iterator<Item = usize> + '_ {
        self.blocks.iter().map(|b| b.origin)
    }

    /// Append a block the buffer does not already hold.
    pub fn push_block(&mut self, block: Block) -> Result<()> {
        if self.holds(block.origin) {
            return Err(Error::InvalidArgument(format!(
                "buffer already holds a block from origin {}",
                block.origin
            )));
        }
        if self.index.len() <= block.origin {
            self.index.resize(block.origin + 1, NO_BLOCK);
        }
        self.index[block.origin] = self.blocks.len() as u32;
        self.blocks.push(block);
        Ok(())
    }

    /// Append a block, tolerating an exact duplicate of one already held.
    ///
    /// Returns `true` if the block was stored, `false` if it matched an
    /// existing block and was dropped. A same-origin block with different
    /// values is a conflict.
    pub fn push_block_dedup(&mut self, block: Block) -> Result<bool> {
        if let Some(existing) = self.find(block.origin) {
            if existing.values != block.values {
                return Err(Error::InvalidArgument(format!(
                    "conflicting duplicate block from origin {}",
                    block.origin
                )));
            }
            return Ok(false);
        }
        self.push_block(block)?;
        Ok(true)
    }

    /// Reorder blocks into canonical origin order `0..p`.
    pub fn sort_by_origin(&mut self) {
        self.blocks.sort_by_key(|b| b.origin);
        self.rebuild_index();
    }

    /// Cyclic right-shift of the block sequence by `positions`.
    pub(crate) fn rotate_right(&mut self, positions: usize) {
        if !self.blocks.is_empty() {
            let len = self.blocks.len();
            self.blocks.rotate_right(positions % len);
            self.rebuild_index();
        }
    }

    fn rebuild_index(&mut self) {
        self.index.fill(NO_BLOCK);
        for (pos, block) in self.blocks.iter().enumerate() {
            if self.index.len() <= block.origin {
                self.index.resize(block.origin + 1, NO_BLOCK);
            }
            self.index[block.origin] = pos as u32;
        }
    }

    /// True if the buffer holds every rank's full block in canonical order.
    pub fn is_canonical_full(&self, topo: &Topology) -> bool {
        self.blocks.len() == topo.process_count()
            && self
                .blocks
                .iter()
                .enumerate()
                .all(|(i, b)| b.origin == i && b.value_count() == topo.values_per_rank())
    }
}

/// Ground-truth allgather result: the concatenation of every rank's initial
/// block in rank order. Each `initial[k]` must hold exactly rank `k`'s own
/// block. Every allgather implementation must produce this buffer on every
/// rank.
pub fn canonical_gather_oracle(initial: &[Buffer], topo: &Topology) -> Result<Buffer> {
    let p = topo.process_count();
    if initial.len() != p {
        return Err(Error::InvalidArgument(format!(
            "expected {p} initial buffers, got {}",
            initial.len()
        )));
    }
    let mut out = Buffer::default();
    for (rank, buf) in initial.iter().enumerate() {
        let expected = Block::initial(rank, topo);
        let held = buf
            .blocks()
            .first()
            .filter(|_| buf.block_count() == 1)
            .ok_or_else(|| {
                Error::InvalidArgument(format!(
                    "rank {rank} initial buffer must hold exactly one block"
                ))
            })?;
        if *held != expected {
            return Err(Error::InvalidArgument(format!(
                "rank {rank} initial buffer does not hold its own block of {} values",
                topo.values_per_rank()
            )));
        }
        out.push_block(held.clone())?;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn initials(topo: &Topology) -> Vec<Buffer> {
        (0..topo.process_count())
            .map(|rank| Buffer::initial(rank, topo))
            .collect()
    }

    #[test]
    fn oracle_concatenates_in_rank_order() {
        let topo = Topology::new(16, 4).unwrap();
        let oracle = canonical_gather_oracle(&initials(&topo), &topo).unwrap();
        let origins: Vec<usize> = oracle.origins().collect();
        assert_eq!(origins, (0..16).collect::<Vec<_>>());
        assert!(oracle.is_canonical_full(&topo));
    }

    #[test]
    fn oracle_single_rank_is_identity() {
        let topo = Topology::new(1, 1).unwrap();
        let init = initials(&topo);
        let oracle = canonical_gather_oracle(&init, &topo).unwrap();
        assert_eq!(oracle, init[0]);
    }

    #[test]
    fn oracle_orders_values_within_blocks() {
        let topo = Topology::with_payload(8, 2, 2, 4).unwrap();
        let oracle = canonical_gather_oracle(&initials(&topo), &topo).unwrap();
        let values: Vec<Value> = oracle
            .blocks()
            .iter()
            .flat_map(|b| b.values().iter().copied())
            .collect();
        // Direct concatenation: (0,0),(0,1),(1,0),(1,1),...,(7,0),(7,1).
        let expected: Vec<Value> = (0..8)
            .flat_map(|origin| (0..2).map(move |index| Value { origin, index }))
            .collect();
        assert_eq!(values.len(), 16);
        assert_eq!(values, expected);
    }

    #[test]
    fn oracle_output_shape_over_grid() {
        for (p, pl, n) in [(4, 2, 1), (8, 4, 3), (32, 8, 2), (2, 1, 5)] {
            let topo = Topology::with_payload(p, pl, n, 4).unwrap();
            let oracle = canonical_gather_oracle(&initials(&topo), &topo).unwrap();
            assert_eq!(oracle.value_count(), n * p);
            let mut seen = std::collections::HashSet::new();
            for block in oracle.blocks() {
                for v in block.values() {
                    assert!(seen.insert(*v), "duplicate value {v:?}");
                }
            }
            assert_eq!(seen.len(), n * p);
        }
    }

    #[test]
    fn oracle_rejects_malformed_initials() {
        let topo = Topology::new(4, 2).unwrap();
        // Wrong owner.
        let mut bufs = initials(&topo);
        bufs[2] = Buffer::initial(3, &topo);
        assert!(canonical_gather_oracle(&bufs, &topo).is_err());
        // Extra block.
        let mut bufs = initials(&topo);
        bufs[0].push_block(Block::initial(1, &topo)).unwrap();
        assert!(canonical_gather_oracle(&bufs, &topo).is_err());
        // Wrong buffer count.
        assert!(canonical_gather_oracle(&initials(&topo)[..3], &topo).is_err());
    }

    #[test]
    fn duplicate_blocks_are_rejected_or_deduped() {
        let topo = Topology::new(4, 2).unwrap();
        let mut buf = Buffer::initial(0, &topo);
        assert!(buf.push_block(Block::initial(0, &topo)).is_err());
        assert!(!buf.push_block_dedup(Block::initial(0, &topo)).unwrap());
        assert!(buf.push_block_dedup(Block::initial(1, &topo)).unwrap());
        assert_eq!(buf.block_count(), 2);
        assert_eq!(buf.find(1).unwrap().origin(), 1);
    }

    #[test]
    fn sort_by_origin_restores_canonical_order() {
        let topo = Topology::new(4, 2).unwrap();
        let mut buf = Buffer::from_blocks(vec![
            Block::initial(2, &topo),
            Block::initial(0, &topo),
            Block::initial(3, &topo),
            Block::initial(1, &topo),
        ])
        .unwrap();
        buf.sort_by_origin();
        assert!(buf.is_canonical_full(&topo));
        assert_eq!(buf.find(2).unwrap().origin(), 2);
    }
}
