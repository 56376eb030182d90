//! Message events recorded by the fabric.

use std::io::Write;
use std::sync::Arc;

use crate::error::Result;
use crate::topology::Locality;

/// One simulated point-to-point transfer, recorded on the send side.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MessageEvent {
    /// Global step index within the schedule.
    pub step: usize,
    /// Label of the schedule phase the step belongs to (e.g.
    /// `local-gather-0`); shared between the events of a step.
    pub phase: Arc<str>,
    pub src: usize,
    pub dst: usize,
    /// Payload size: values carried times the topology's value width.
    pub bytes: u64,
    pub locality: Locality,
}

/// Write an event log as CSV: a header line followed by one record per
/// event, fields `step,phase,src,dst,bytes,locality`.
pub fn write_events_csv<W: Write>(events: &[MessageEvent], mut out: W) -> Result<()> {
    writeln!(out, "step,phase,src,dst,bytes,locality")?;
    for e in events {
        writeln!(
            out,
            "{},{},{},{},{},{}",
            e.step,
            e.phase,
            e.src,
            e.dst,
            e.bytes,
            e.locality.name()
        )?;
    }
    Ok(())
}

/// CSV event log as an in-memory string.
pub fn events_to_csv(events: &[MessageEvent]) -> String {
    let mut buf = Vec::new();
    write_events_csv(events, &mut buf).expect("write to Vec cannot fail");
    String::from_utf8(buf).expect("CSV output is UTF-8")
}
