//! Process/region topology and the locality classifier.
//!
//! Ranks `0..p` are grouped into contiguous regions of `region_size` ranks
//! each (rank `k` belongs to region `k / region_size`). Communication inside
//! a region is *local*, communication between regions is *non-local*. A
//! region stands for whatever locality level is cheap on the target machine
//! (a node, a socket); the simulator models exactly one such level.

use crate::error::{Error, Result};

/// Locality class of a point-to-point transfer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Locality {
    Local,
    NonLocal,
}

impl Locality {
    /// Lowercase name used in CSV output.
    pub fn name(self) -> &'static str {
        match self {
            Locality::Local => "local",
            Locality::NonLocal => "nonlocal",
        }
    }
}

/// An immutable simulation topology.
///
/// `p` ranks, `region_size` ranks per region, `values_per_rank` initial
/// values on each rank, `value_width` bytes per value. Both `p` and
/// `region_size` must be powers of two (every implemented algorithm relies
/// on power-of-two exchanges) and `region_size` must divide `p`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Topology {
    p: usize,
    region_size: usize,
    values_per_rank: usize,
    value_width: usize,
}

impl Topology {
    /// Default payload: one 4-byte value per rank.
    pub const DEFAULT_VALUES_PER_RANK: usize = 1;
    pub const DEFAULT_VALUE_WIDTH: usize = 4;

    pub fn new(p: usize, region_size: usize) -> Result<Self> {
        Self::with_payload(
            p,
            region_size,
            Self::DEFAULT_VALUES_PER_RANK,
            Self::DEFAULT_VALUE_WIDTH,
        )
    }

    pub fn with_payload(
        p: usize,
        region_size: usize,
        values_per_rank: usize,
        value_width: usize,
    ) -> Result<Self> {
        if p == 0 {
            return Err(Error::InvalidArgument(
                "process count must be at least 1".into(),
            ));
        }
        if !p.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "process count {p} is not a power of two"
            )));
        }
        if region_size == 0 {
            return Err(Error::InvalidArgument(
                "region size must be at least 1".into(),
            ));
        }
        if !region_size.is_power_of_two() {
            return Err(Error::InvalidArgument(format!(
                "region size {region_size} is not a power of two"
            )));
        }
        if p % region_size != 0 {
            return Err(Error::InvalidArgument(format!(
                "region size {region_size} does not divide process count {p}"
            )));
        }
        if values_per_rank == 0 {
            return Err(Error::InvalidArgument(
                "values per rank must be at least 1".into(),
            ));
        }
        if value_width == 0 {
            return Err(Error::InvalidArgument(
                "value width must be at least 1 byte".into(),
            ));
        }
        Ok(Topology {
            p,
            region_size,
            values_per_rank,
            value_width,
        })
    }

    pub fn process_count(&self) -> usize {
        self.p
    }

    /// Ranks per region (`p_l`).
    pub fn region_size(&self) -> usize {
        self.region_size
    }

    /// Number of regions (`r = p / p_l`).
    pub fn region_count(&self) -> usize {
        self.p / self.region_size
    }

    /// Initial values held by each rank (`n`).
    pub fn values_per_rank(&self) -> usize {
        self.values_per_rank
    }

    /// Bytes per value (`w`).
    pub fn value_width(&self) -> usize {
        self.value_width
    }

    /// Payload size in bytes of a message carrying `values` values.
    pub fn bytes_for_values(&self, values: u64) -> u64 {
        values * self.value_width as u64
    }

    fn check_rank(&self, rank: usize) -> Result<()> {
        if rank >= self.p {
            return Err(Error::InvalidArgument(format!(
                "rank {rank} out of range for {} processes",
                self.p
            )));
        }
        Ok(())
    }

    /// Region holding `rank`: `floor(rank / region_size)`.
    pub fn region_of(&self, rank: usize) -> Result<usize> {
        self.check_rank(rank)?;
        Ok(rank / self.region_size)
    }

    /// Position of `rank` within its region.
    pub fn local_id(&self, rank: usize) -> Result<usize> {
        self.check_rank(rank)?;
        Ok(rank % self.region_size)
    }

    /// Classify a transfer between two distinct ranks.
    ///
    /// A self-message is not a transfer and is rejected.
    pub fn classify(&self, src: usize, dst: usize) -> Result<Locality> {
        if src == dst {
            return Err(Error::InvalidArgument(format!(
                "self-message on rank {src} is not a transfer"
            )));
        }
        if self.region_of(src)? == self.region_of(dst)? {
            Ok(Locality::Local)
        } else {
            Ok(Locality::NonLocal)
        }
    }
}
