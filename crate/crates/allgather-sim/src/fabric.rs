//! Step-synchronous message-passing engine.
//!
//! A schedule is an ordered list of [`StepPlan`]s. Within one step every
//! rank posts at most one send and at most one receive, and the posted
//! sends and receives must pair up exactly; all payloads of a step are
//! resolved against the buffers as they stood when the step began, then
//! delivered together. Execution is single-threaded and fully
//! deterministic: identical inputs yield byte-identical event logs.
//!
//! The engine records one [`MessageEvent`] per send. Receive-side counters
//! are derivable by symmetry and are not logged.

use std::sync::Arc;

use crate::buffer::{Block, Buffer};
use crate::error::{Error, Result};
use crate::event::MessageEvent;
use crate::topology::{Locality, Topology};

/// A posted send: which blocks (by origin rank, in order) go to `dst`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SendPlan {
    pub dst: usize,
    pub origins: Vec<usize>,
}

/// A posted receive: the expected source and total value count.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecvPlan {
    pub src: usize,
    pub expected_values: usize,
    /// Permit blocks the receiver already holds; they must match the held
    /// values exactly and are not stored twice.
    pub allow_duplicates: bool,
}

/// One synchronous step: per-rank optional send and receive posts.
#[derive(Debug, Clone)]
pub struct StepPlan {
    phase: Arc<str>,
    sends: Vec<Option<SendPlan>>,
    recvs: Vec<Option<RecvPlan>>,
}

impl StepPlan {
    pub fn new(p: usize, phase: impl AsRef<str>) -> Self {
        StepPlan {
            phase: Arc::from(phase.as_ref()),
            sends: vec![None; p],
            recvs: vec![None; p],
        }
    }

    pub fn phase(&self) -> &str {
        &self.phase
    }

    pub fn rank_count(&self) -> usize {
        self.sends.len()
    }

    pub fn send_for(&self, rank: usize) -> Option<&SendPlan> {
        self.sends.get(rank).and_then(|s| s.as_ref())
    }

    pub fn recv_for(&self, rank: usize) -> Option<&RecvPlan> {
        self.recvs.get(rank).and_then(|r| r.as_ref())
    }

    /// Post a send from `src`. At most one send per rank per step.
    pub fn post_send(&mut self, src: usize, dst: usize, origins: Vec<usize>) {
        assert!(src < self.sends.len(), "send posted for rank out of range");
        assert!(
            self.sends[src].is_none(),
            "rank {src} already posted a send this step"
        );
        self.sends[src] = Some(SendPlan { dst, origins });
    }

    /// Post a receive on `rank`. At most one receive per rank per step.
    pub fn post_recv(&mut self, rank: usize, src: usize, expected_values: usize) {
        self.post_recv_inner(rank, src, expected_values, false);
    }

    /// Post a receive that may carry blocks the receiver already holds.
    pub fn post_recv_dedup(&mut self, rank: usize, src: usize, expected_values: usize) {
        self.post_recv_inner(rank, src, expected_values, true);
    }

    fn post_recv_inner(
        &mut self,
        rank: usize,
        src: usize,
        expected_values: usize,
        allow_duplicates: bool,
    ) {
        assert!(rank < self.recvs.len(), "receive posted for rank out of range");
        assert!(
            self.recvs[rank].is_none(),
            "rank {rank} already posted a receive this step"
        );
        self.recvs[rank] = Some(RecvPlan {
            src,
            expected_values,
            allow_duplicates,
        });
    }
}

/// Execute a schedule over per-rank initial buffers.
///
/// Returns the final buffers and the event log, events ordered by
/// `(step, src)`. Payloads are appended to the receiver's buffer in payload
/// order; a permitted duplicate is verified against the held block and
/// dropped.
pub fn execute(
    schedule: &[StepPlan],
    initial: Vec<Buffer>,
    topo: &Topology,
) -> Result<(Vec<Buffer>, Vec<MessageEvent>)> {
    let p = topo.process_count();
    if initial.len() != p {
        return Err(Error::InvalidArgument(format!(
            "expected {p} initial buffers, got {}",
            initial.len()
        )));
    }
    let mut buffers = initial;
    let mut events = Vec::new();

    for (step, plan) in schedule.iter().enumerate() {
        if plan.rank_count() != p {
            return Err(Error::InvalidArgument(format!(
                "step {step} is sized for {} ranks, topology has {p}",
                plan.rank_count()
            )));
        }

        // Match every send with its receive and vice versa before moving
        // any data.
        for src in 0..p {
            let Some(send) = &plan.sends[src] else {
                continue;
            };
            if send.dst >= p {
                return Err(Error::InvalidArgument(format!(
                    "step {step}: rank {src} sends to rank {} which is out of range",
                    send.dst
                )));
            }
            if send.dst == src {
                return Err(Error::InvalidArgument(format!(
                    "step {step}: rank {src} posted a send to itself"
                )));
            }
            match &plan.recvs[send.dst] {
                Some(recv) if recv.src == src => {}
                _ => {
                    return Err(Error::Deadlock {
                        step,
                        detail: format!(
                            "rank {src} sends to rank {} but rank {} posted no matching receive",
                            send.dst, send.dst
                        ),
                    });
                }
            }
        }
        for rank in 0..p {
            let Some(recv) = &plan.recvs[rank] else {
                continue;
            };
            if recv.src >= p {
                return Err(Error::InvalidArgument(format!(
                    "step {step}: rank {rank} receives from rank {} which is out of range",
                    recv.src
                )));
            }
            match &plan.sends[recv.src] {
                Some(send) if send.dst == rank => {}
                _ => {
                    return Err(Error::Deadlock {
                        step,
                        detail: format!(
                            "rank {rank} receives from rank {} but rank {} posted no matching send",
                            recv.src, recv.src
                        ),
                    });
                }
            }
        }

        // Resolve payloads against the buffers as of the start of the step.
        let mut transfers: Vec<(usize, usize, Vec<Block>)> = Vec::new();
        for src in 0..p {
            let Some(send) = &plan.sends[src] else {
                continue;
            };
            let mut payload = Vec::with_capacity(send.origins.len());
            for &origin in &send.origins {
                let block = buffers[src].find(origin).ok_or_else(|| Error::Protocol {
                    step,
                    detail: format!("rank {src} does not hold a block from origin {origin}"),
                })?;
                payload.push(block.clone());
            }
            let values: usize = payload.iter().map(Block::value_count).sum();
            if values == 0 {
                return Err(Error::Protocol {
                    step,
                    detail: format!("rank {src} posted an empty send to rank {}", send.dst),
                });
            }
            let recv = plan.recvs[send.dst].as_ref().expect("matched above");
            if values != recv.expected_values {
                return Err(Error::Protocol {
                    step,
                    detail: format!(
                        "rank {src} sends {values} values to rank {} which expects {}",
                        send.dst, recv.expected_values
                    ),
                });
            }
            events.push(MessageEvent {
                step,
                phase: plan.phase.clone(),
                src,
                dst: send.dst,
                bytes: topo.bytes_for_values(values as u64),
                locality: topo.classify(src, send.dst)?,
            });
            transfers.push((src, send.dst, payload));
        }

        // Deliver. Every rank receives at most one payload per step, so
        // delivery order cannot affect the outcome.
        for (src, dst, payload) in transfers {
            let allow_duplicates = plan.recvs[dst]
                .as_ref()
                .expect("matched above")
                .allow_duplicates;
            for block in payload {
                let origin = block.origin();
                if !allow_duplicates && buffers[dst].holds(origin) {
                    return Err(Error::Protocol {
                        step,
                        detail: format!(
                            "rank {dst} already holds a block from origin {origin} \
                             (sent by rank {src}) and this step does not permit duplicates"
                        ),
                    });
                }
                buffers[dst].push_block_dedup(block).map_err(|_| Error::Protocol {
                    step,
                    detail: format!(
                        "conflicting duplicate block from origin {origin} delivered to rank {dst}"
                    ),
                })?;
            }
        }
    }

    Ok((buffers, events))
}

/// Per-rank send-side counters, split by locality class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct RankCounts {
    pub msgs_local: u64,
    pub msgs_nonlocal: u64,
    pub bytes_local: u64,
    pub bytes_nonlocal: u64,
}

/// Aggregated send-side counters for an event log, plus the field-wise
/// maximum over ranks.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Tally {
    per_rank: Vec<RankCounts>,
    max: RankCounts,
}

impl Tally {
    pub fn per_rank(&self) -> &[RankCounts] {
        &self.per_rank
    }

    pub fn rank(&self, rank: usize) -> RankCounts {
        self.per_rank[rank]
    }

    /// Field-wise maximum over ranks.
    pub fn max(&self) -> RankCounts {
        self.max
    }

    /// The rank with the heaviest send profile, ordered lexicographically by
    /// (non-local bytes, non-local messages, local bytes, local messages);
    /// ties resolve to the lowest rank.
    pub fn max_rank(&self) -> usize {
        let key = |c: &RankCounts| (c.bytes_nonlocal, c.msgs_nonlocal, c.bytes_local, c.msgs_local);
        let mut best = 0;
        for (rank, counts) in self.per_rank.iter().enumerate().skip(1) {
            if key(counts) > key(&self.per_rank[best]) {
                best = rank;
            }
        }
        best
    }
}

/// Tally an event log: send-side counters per rank, split by the locality
/// classifier. An empty log yields an all-zero tally.
pub fn aggregate(events: &[MessageEvent], topo: &Topology) -> Result<Tally> {
    let mut per_rank = vec![RankCounts::default(); topo.process_count()];
    for e in events {
        if e.src >= topo.process_count() {
            return Err(Error::InvalidArgument(format!(
                "event references rank {} out of range",
                e.src
            )));
        }
        let counts = &mut per_rank[e.src];
        match topo.classify(e.src, e.dst)? {
            Locality::Local => {
                counts.msgs_local += 1;
                counts.bytes_local += e.bytes;
            }
            Locality::NonLocal => {
                counts.msgs_nonlocal += 1;
                counts.bytes_nonlocal += e.bytes;
            }
        }
    }
    let mut max = RankCounts::default();
    for c in &per_rank {
        max.msgs_local = max.msgs_local.max(c.msgs_local);
        max.msgs_nonlocal = max.msgs_nonlocal.max(c.msgs_nonlocal);
        max.bytes_local = max.bytes_local.max(c.bytes_local);
        max.bytes_nonlocal = max.bytes_nonlocal.max(c.bytes_nonlocal);
    }
    Ok(Tally { per_rank, max })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn initials(topo: &Topology) -> Vec<Buffer> {
        (0..topo.process_count())
            .map(|rank| Buffer::initial(rank, topo))
            .collect()
    }

    fn pairwise_step(topo: &Topology) -> StepPlan {
        let mut step = StepPlan::new(topo.process_count(), "swap");
        step.post_send(0, 1, vec![0]);
        step.post_recv(1, 0, topo.values_per_rank());
        step.post_send(1, 0, vec![1]);
        step.post_recv(0, 1, topo.values_per_rank());
        step
    }

    #[test]
    fn pairwise_exchange() {
        let topo = Topology::new(2, 1).unwrap();
        let (buffers, events) =
            execute(&[pairwise_step(&topo)], initials(&topo), &topo).unwrap();
        assert_eq!(events.len(), 2);
        for rank in 0..2 {
            assert!(buffers[rank].holds(0));
            assert!(buffers[rank].holds(1));
        }
        // Events are ordered by (step, src).
        assert_eq!(events[0].src, 0);
        assert_eq!(events[1].src, 1);
        assert_eq!(events[0].bytes, 4);
    }

    #[test]
    fn unmatched_receive_deadlocks() {
        let topo = Topology::new(4, 2).unwrap();
        let mut step = StepPlan::new(4, "lonely");
        step.post_recv(3, 1, 1);
        let err = execute(&[step], initials(&topo), &topo).unwrap_err();
        match err {
            Error::Deadlock { step, detail } => {
                assert_eq!(step, 0);
                assert!(detail.contains("rank 3"), "{detail}");
                assert!(detail.contains("rank 1"), "{detail}");
            }
            other => panic!("expected deadlock, got {other:?}"),
        }
    }

    #[test]
    fn unmatched_send_deadlocks() {
        let topo = Topology::new(4, 2).unwrap();
        let mut step = StepPlan::new(4, "lonely");
        step.post_send(0, 2, vec![0]);
        assert!(matches!(
            execute(&[step], initials(&topo), &topo),
            Err(Error::Deadlock { step: 0, .. })
        ));
    }

    #[test]
    fn mismatched_size_is_protocol_error() {
        let topo = Topology::new(2, 1).unwrap();
        let mut step = StepPlan::new(2, "bad");
        step.post_send(0, 1, vec![0]);
        step.post_recv(1, 0, 2); // expects 2 values, gets 1
        step.post_send(1, 0, vec![1]);
        step.post_recv(0, 1, 1);
        assert!(matches!(
            execute(&[step], initials(&topo), &topo),
            Err(Error::Protocol { step: 0, .. })
        ));
    }

    #[test]
    fn destination_out_of_range_is_argument_error() {
        let topo = Topology::new(2, 1).unwrap();
        let mut step = StepPlan::new(2, "oob");
        step.post_send(0, 5, vec![0]);
        assert!(matches!(
            execute(&[step], initials(&topo), &topo),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn self_send_is_argument_error() {
        let topo = Topology::new(2, 1).unwrap();
        let mut step = StepPlan::new(2, "self");
        step.post_send(0, 0, vec![0]);
        assert!(matches!(
            execute(&[step], initials(&topo), &topo),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn missing_block_is_protocol_error() {
        let topo = Topology::new(2, 1).unwrap();
        let mut step = StepPlan::new(2, "missing");
        step.post_send(0, 1, vec![1]); // rank 0 does not hold block 1
        step.post_recv(1, 0, 1);
        step.post_send(1, 0, vec![1]);
        step.post_recv(0, 1, 1);
        assert!(matches!(
            execute(&[step], initials(&topo), &topo),
            Err(Error::Protocol { step: 0, .. })
        ));
    }

    #[test]
    fn unpermitted_duplicate_is_protocol_error() {
        let topo = Topology::new(2, 1).unwrap();
        // Exchange twice without permitting duplicates: the second step
        // redelivers blocks both ranks now hold.
        let schedule = vec![pairwise_step(&topo), pairwise_step(&topo)];
        assert!(matches!(
            execute(&schedule, initials(&topo), &topo),
            Err(Error::Protocol { step: 1, .. })
        ));
    }

    #[test]
    fn permitted_duplicate_is_verified_and_dropped() {
        let topo = Topology::new(2, 1).unwrap();
        let mut second = StepPlan::new(2, "again");
        second.post_send(0, 1, vec![0]);
        second.post_recv_dedup(1, 0, 1);
        second.post_send(1, 0, vec![1]);
        second.post_recv_dedup(0, 1, 1);
        let (buffers, events) =
            execute(&[pairwise_step(&topo), second], initials(&topo), &topo).unwrap();
        assert_eq!(events.len(), 4); // duplicate sends are still sent (and counted)
        assert_eq!(buffers[0].block_count(), 2); // but not stored twice
        assert_eq!(buffers[1].block_count(), 2);
    }

    #[test]
    fn execution_is_deterministic() {
        let topo = Topology::new(2, 1).unwrap();
        let schedule = vec![pairwise_step(&topo)];
        let a = execute(&schedule, initials(&topo), &topo).unwrap();
        let b = execute(&schedule, initials(&topo), &topo).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
    }

    #[test]
    fn events_match_the_locality_classifier() {
        let topo = Topology::new(4, 2).unwrap();
        let mut step = StepPlan::new(4, "mixed");
        step.post_send(0, 1, vec![0]); // intra-region
        step.post_recv(1, 0, 1);
        step.post_send(2, 0, vec![2]); // crosses regions
        step.post_recv(0, 2, 1);
        let (_, events) = execute(&[step], initials(&topo), &topo).unwrap();
        for e in &events {
            assert_eq!(e.locality, topo.classify(e.src, e.dst).unwrap());
        }
    }

    #[test]
    fn aggregate_empty_log_is_zero() {
        let topo = Topology::new(8, 2).unwrap();
        let tally = aggregate(&[], &topo).unwrap();
        assert_eq!(tally.max(), RankCounts::default());
        assert!(tally.per_rank().iter().all(|c| *c == RankCounts::default()));
    }

    #[test]
    fn aggregate_splits_by_locality() {
        let topo = Topology::new(4, 2).unwrap();
        let mk = |step: usize, src, dst, bytes| MessageEvent {
            step,
            phase: "t".into(),
            src,
            dst,
            bytes,
            locality: topo.classify(src, dst).unwrap(),
        };
        let events = vec![mk(0, 0, 1, 4), mk(1, 0, 2, 8), mk(1, 3, 2, 4)];
        let tally = aggregate(&events, &topo).unwrap();
        assert_eq!(
            tally.rank(0),
            RankCounts {
                msgs_local: 1,
                msgs_nonlocal: 1,
                bytes_local: 4,
                bytes_nonlocal: 8
            }
        );
        assert_eq!(tally.rank(3).msgs_local, 1);
        assert_eq!(tally.max().bytes_nonlocal, 8);
        assert_eq!(tally.max().msgs_local, 1);
        assert_eq!(tally.max_rank(), 0);
    }
}
