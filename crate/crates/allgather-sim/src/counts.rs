//! Closed-form message and volume predictions.
//!
//! For each algorithm these functions predict, without simulating, the
//! field-wise maximum over ranks of the per-rank send tallies: messages and
//! values sent, split local/non-local. The predictions serve as independent
//! oracles for the fabric-derived tallies and feed the exact cost-model
//! variant.
//!
//! Derivations for the contiguous-region layout (`r` regions of `p_l`
//! ranks), with `L = log2(p)` and `k = log_{p_l}(r)`:
//!
//! * log-step exchange: every rank sends `L` messages totalling `n(p-1)`
//!   values. With more than one region, the rank at the bottom of a region
//!   sends everything non-locally, while the rank at the top of a region
//!   has the most local sends: its step-`i` send stays in-region exactly
//!   when `2^i` is at most its local id, giving `log2(p_l)` local messages
//!   of `n(p_l - 1)` total values.
//! * locality-aware: every rank sends `log2(p_l)` messages in each of the
//!   `k + 1` local gathers; ranks with local id != 0 add one non-local
//!   message of `n * p_l^(i+1)` values per round `i`.
//! * ring: every rank sends `p - 1` single-block messages to its lower
//!   neighbor, which crosses a region boundary only for local id 0.

use crate::collectives::locality_rounds;
use crate::error::Result;
use crate::topology::Topology;

/// Field-wise maxima over ranks of the per-rank send counters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct CountPrediction {
    pub max_msgs_local: u64,
    pub max_msgs_nonlocal: u64,
    pub max_values_local: u64,
    pub max_values_nonlocal: u64,
}

fn log2(x: usize) -> u64 {
    debug_assert!(x.is_power_of_two());
    x.trailing_zeros() as u64
}

/// Predicted per-rank maxima for the log-step exchange.
pub fn bruck_counts(topo: &Topology) -> CountPrediction {
    let p = topo.process_count() as u64;
    let pl = topo.region_size() as u64;
    let n = topo.values_per_rank() as u64;
    if p == 1 {
        return CountPrediction::default();
    }
    if topo.region_count() == 1 {
        return CountPrediction {
            max_msgs_local: log2(topo.process_count()),
            max_msgs_nonlocal: 0,
            max_values_local: n * (p - 1),
            max_values_nonlocal: 0,
        };
    }
    CountPrediction {
        max_msgs_local: log2(topo.region_size()),
        max_msgs_nonlocal: log2(topo.process_count()),
        max_values_local: n * (pl - 1),
        max_values_nonlocal: n * (p - 1),
    }
}

/// Predicted per-rank maxima for the locality-aware variant.
///
/// Fails on topologies the algorithm does not support (region count not an
/// integer power of the region size).
pub fn locality_counts(topo: &Topology) -> Result<CountPrediction> {
    let k = locality_rounds(topo)? as u64;
    let p = topo.process_count() as u64;
    let pl = topo.region_size() as u64;
    let n = topo.values_per_rank() as u64;
    if p == 1 {
        return Ok(CountPrediction::default());
    }
    let mut values_nonlocal = 0u64;
    let mut values_local = n * (pl - 1);
    let mut chunk = n * pl; // values exchanged non-locally in round i
    for _ in 0..k {
        values_nonlocal += chunk;
        values_local += chunk * (pl - 1);
        chunk *= pl;
    }
    Ok(CountPrediction {
        max_msgs_local: log2(topo.region_size()) * (k + 1),
        max_msgs_nonlocal: k,
        max_values_local: values_local,
        max_values_nonlocal: values_nonlocal,
    })
}

/// Predicted per-rank maxima for the neighbor ring.
pub fn ring_counts(topo: &Topology) -> CountPrediction {
    let p = topo.process_count() as u64;
    let n = topo.values_per_rank() as u64;
    if p == 1 {
        return CountPrediction::default();
    }
    let total_msgs = p - 1;
    let total_values = n * (p - 1);
    if topo.region_count() == 1 {
        CountPrediction {
            max_msgs_local: total_msgs,
            max_msgs_nonlocal: 0,
            max_values_local: total_values,
            max_values_nonlocal: 0,
        }
    } else if topo.region_size() == 1 {
        CountPrediction {
            max_msgs_local: 0,
            max_msgs_nonlocal: total_msgs,
            max_values_local: 0,
            max_values_nonlocal: total_values,
        }
    } else {
        // Local-id-0 ranks send everything across the boundary; everyone
        // else sends everything inside the region.
        CountPrediction {
            max_msgs_local: total_msgs,
            max_msgs_nonlocal: total_msgs,
            max_values_local: total_values,
            max_values_nonlocal: total_values,
        }
    }
}

/// Per-step values sent by a rank in the log-step exchange: `n * 2^i`.
pub fn bruck_step_values(topo: &Topology) -> Vec<u64> {
    let n = topo.values_per_rank() as u64;
    (0..log2(topo.process_count()))
        .map(|i| n << i)
        .collect()
}

/// Per-round non-local values sent by a rank with local id != 0 in the
/// locality-aware variant: `n * p_l^(i+1)` for round `i`.
pub fn locality_nonlocal_step_values(topo: &Topology) -> Result<Vec<u64>> {
    let k = locality_rounds(topo)?;
    let n = topo.values_per_rank() as u64;
    let pl = topo.region_size() as u64;
    let mut sizes = Vec::with_capacity(k);
    let mut chunk = n * pl;
    for _ in 0..k {
        sizes.push(chunk);
        chunk *= pl;
    }
    Ok(sizes)
}

/// Per-step local values sent by every rank in the locality-aware variant:
/// the initial gather (`n * 2^s`) followed by one re-gather per round
/// (`n * p_l^(i+1) * 2^s`).
pub fn locality_local_step_values(topo: &Topology) -> Result<Vec<u64>> {
    let k = locality_rounds(topo)?;
    let n = topo.values_per_rank() as u64;
    let pl = topo.region_size() as u64;
    let rounds = log2(topo.region_size());
    let mut sizes = Vec::new();
    let mut unit = n;
    for _ in 0..=k {
        for s in 0..rounds {
            sizes.push(unit << s);
        }
        unit *= pl;
    }
    Ok(sizes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::collectives::{run, AlgorithmId};

    fn topo(p: usize, pl: usize, n: usize) -> Topology {
        Topology::with_payload(p, pl, n, 4).unwrap()
    }

    #[test]
    fn bruck_predictions() {
        let c = bruck_counts(&topo(16, 4, 1));
        assert_eq!(c.max_msgs_nonlocal, 4);
        assert_eq!(c.max_values_nonlocal, 15);
        assert_eq!(c.max_msgs_local, 2);
        assert_eq!(c.max_values_local, 3);

        let c = bruck_counts(&topo(2, 1, 1));
        assert_eq!(c.max_msgs_nonlocal, 1);
        assert_eq!(c.max_values_nonlocal, 1);
        assert_eq!(c.max_msgs_local, 0);

        let c = bruck_counts(&topo(64, 4, 1));
        assert_eq!(c.max_msgs_nonlocal, 6);
        assert_eq!(c.max_values_nonlocal, 63);

        // One region: everything is local.
        let c = bruck_counts(&topo(8, 8, 2));
        assert_eq!(c.max_msgs_local, 3);
        assert_eq!(c.max_values_local, 14);
        assert_eq!(c.max_msgs_nonlocal, 0);

        assert_eq!(bruck_counts(&topo(1, 1, 1)), CountPrediction::default());
    }

    #[test]
    fn locality_predictions() {
        let c = locality_counts(&topo(16, 4, 1)).unwrap();
        assert_eq!(c.max_msgs_nonlocal, 1);
        assert_eq!(c.max_values_nonlocal, 4);
        assert_eq!(c.max_msgs_local, 4); // log2(4) * (1 + 1)
        assert_eq!(c.max_values_local, 15);

        let c = locality_counts(&topo(64, 4, 1)).unwrap();
        assert_eq!(c.max_msgs_nonlocal, 2);
        assert_eq!(c.max_values_nonlocal, 20); // 4 + 16
        assert_eq!(c.max_msgs_local, 6);
        assert_eq!(c.max_values_local, 63); // 3 + (4 + 16) * 3

        // Single region: only the initial gather.
        let c = locality_counts(&topo(4, 4, 1)).unwrap();
        assert_eq!(c.max_msgs_nonlocal, 0);
        assert_eq!(c.max_msgs_local, 2);
        assert_eq!(c.max_values_local, 3);

        assert!(locality_counts(&topo(32, 4, 1)).is_err());
    }

    #[test]
    fn ring_predictions() {
        let c = ring_counts(&topo(16, 4, 1));
        assert_eq!(c.max_msgs_local, 15);
        assert_eq!(c.max_msgs_nonlocal, 15);
        assert_eq!(c.max_values_local, 15);
        assert_eq!(c.max_values_nonlocal, 15);

        assert_eq!(ring_counts(&topo(1, 1, 1)), CountPrediction::default());

        let c = ring_counts(&topo(8, 8, 1));
        assert_eq!(c.max_msgs_nonlocal, 0);
        assert_eq!(c.max_msgs_local, 7);

        let c = ring_counts(&topo(8, 1, 3));
        assert_eq!(c.max_msgs_local, 0);
        assert_eq!(c.max_values_nonlocal, 21);
    }

    #[test]
    fn step_value_profiles() {
        let t = topo(16, 4, 2);
        assert_eq!(bruck_step_values(&t), vec![2, 4, 8, 16]);
        assert_eq!(locality_nonlocal_step_values(&t).unwrap(), vec![8]);
        assert_eq!(
            locality_local_step_values(&t).unwrap(),
            vec![2, 4, 8, 16] // initial gather n*2^s, then re-gather n*p_l*2^s
        );
        let t = topo(64, 4, 1);
        assert_eq!(locality_nonlocal_step_values(&t).unwrap(), vec![4, 16]);
        assert_eq!(
            locality_local_step_values(&t).unwrap(),
            vec![1, 2, 4, 8, 16, 32]
        );
    }

    /// Predictions must equal the simulated tally maxima exactly.
    #[test]
    fn predictions_match_simulated_maxima() {
        for p in [2usize, 4, 8, 16, 32, 64] {
            for pl in [1usize, 2, 4, 8, 16] {
                if pl > p {
                    continue;
                }
                for n in [1usize, 3] {
                    let t = topo(p, pl, n);
                    let w = t.value_width() as u64;

                    let sim = run(AlgorithmId::Bruck, &t).unwrap().tally;
                    let pred = bruck_counts(&t);
                    assert_eq!(pred.max_msgs_local, sim.max().msgs_local, "bruck {p}/{pl}/{n}");
                    assert_eq!(pred.max_msgs_nonlocal, sim.max().msgs_nonlocal, "bruck {p}/{pl}/{n}");
                    assert_eq!(pred.max_values_local * w, sim.max().bytes_local, "bruck {p}/{pl}/{n}");
                    assert_eq!(pred.max_values_nonlocal * w, sim.max().bytes_nonlocal, "bruck {p}/{pl}/{n}");

                    let sim = run(AlgorithmId::Ring, &t).unwrap().tally;
                    let pred = ring_counts(&t);
                    assert_eq!(pred.max_msgs_local, sim.max().msgs_local, "ring {p}/{pl}/{n}");
                    assert_eq!(pred.max_msgs_nonlocal, sim.max().msgs_nonlocal, "ring {p}/{pl}/{n}");
                    assert_eq!(pred.max_values_local * w, sim.max().bytes_local, "ring {p}/{pl}/{n}");
                    assert_eq!(pred.max_values_nonlocal * w, sim.max().bytes_nonlocal, "ring {p}/{pl}/{n}");

                    if let Ok(pred) = locality_counts(&t) {
                        let sim = run(AlgorithmId::LocalityBruck, &t).unwrap().tally;
                        assert_eq!(pred.max_msgs_local, sim.max().msgs_local, "locality {p}/{pl}/{n}");
                        assert_eq!(pred.max_msgs_nonlocal, sim.max().msgs_nonlocal, "locality {p}/{pl}/{n}");
                        assert_eq!(pred.max_values_local * w, sim.max().bytes_local, "locality {p}/{pl}/{n}");
                        assert_eq!(pred.max_values_nonlocal * w, sim.max().bytes_nonlocal, "locality {p}/{pl}/{n}");
                    }
                }
            }
        }
    }

    /// The locality-aware variant strictly reduces non-local traffic on
    /// multi-region topologies.
    #[test]
    fn locality_beats_bruck_nonlocally() {
        for p in [16usize, 64, 256, 1024] {
            for pl in [2usize, 4, 8, 16] {
                if pl > p {
                    continue;
                }
                let t = topo(p, pl, 1);
                let Ok(loc) = locality_counts(&t) else {
                    continue;
                };
                if t.region_count() == 1 {
                    continue;
                }
                let bruck = bruck_counts(&t);
                if pl > 2 {
                    assert!(
                        loc.max_msgs_nonlocal < bruck.max_msgs_nonlocal,
                        "messages at {p}/{pl}"
                    );
                }
                assert!(
                    loc.max_values_nonlocal < bruck.max_values_nonlocal,
                    "values at {p}/{pl}"
                );
            }
        }
    }
}
