//! Latency/bandwidth cost models.
//!
//! Transfers are costed with a postal-style model: a per-message latency
//! `alpha` plus a per-byte cost `beta`, with separate `alpha_local` /
//! `beta_local` for intra-region messages and two parameter sets switched
//! by message size — small messages use the eager set, messages at or above
//! `threshold_bytes` use the rendezvous set.
//!
//! Each algorithm model comes in two variants:
//!
//! * [`ModelVariant::Paper`] — the aggregate closed form: for the log-step
//!   exchange `T = log2(p)*alpha + (b-1)*beta`, and for the locality-aware
//!   variant `T = k*alpha + (b/p_l)*beta + (k+1)*alpha_local +
//!   (b-1)*beta_local` with `k = log_{p_l}(r)`, where `b` is the total
//!   gathered bytes. The protocol class is chosen once, from the largest
//!   message of the algorithm; `k` may be fractional, so this variant also
//!   covers region counts the simulation cannot run.
//! * [`ModelVariant::Exact`] — the per-step sum over the heaviest rank's
//!   actual message sizes, selecting the protocol per message. This variant
//!   agrees with evaluating the locality cost on the simulated tally.

use std::collections::HashMap;
use std::fmt;
use std::path::Path;

use crate::collectives::AlgorithmId;
use crate::counts;
use crate::error::{Error, Result};
use crate::event::MessageEvent;
use crate::topology::{Locality, Topology};

/// One latency/bandwidth parameter set (seconds per message, seconds per
/// byte; non-local and local).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParamSet {
    pub alpha: f64,
    pub beta: f64,
    pub alpha_local: f64,
    pub beta_local: f64,
}

/// Eager and rendezvous parameter sets plus the switch threshold.
///
/// The default values are illustrative of a cluster where non-local
/// messages cost several times their local counterparts; they are not
/// measurements of any particular machine.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CostParams {
    pub eager: ParamSet,
    pub rendezvous: ParamSet,
    pub threshold_bytes: u64,
}

impl Default for CostParams {
    fn default() -> Self {
        CostParams {
            eager: ParamSet {
                alpha: 2.0e-6,
                beta: 8.0e-11,
                alpha_local: 4.0e-7,
                beta_local: 1.0e-11,
            },
            rendezvous: ParamSet {
                alpha: 4.0e-6,
                beta: 5.0e-11,
                alpha_local: 8.0e-7,
                beta_local: 1.0e-11,
            },
            threshold_bytes: 8192,
        }
    }
}

/// Message protocol class.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Protocol {
    Eager,
    Rendezvous,
}

/// Select the protocol for one message: rendezvous at or above the
/// threshold, eager below it.
pub fn protocol_select(message_bytes: u64, params: &CostParams) -> Protocol {
    if message_bytes >= params.threshold_bytes {
        Protocol::Rendezvous
    } else {
        Protocol::Eager
    }
}

const PARAM_KEYS: [&str; 9] = [
    "eager.alpha",
    "eager.beta",
    "eager.alpha_local",
    "eager.beta_local",
    "rendezvous.alpha",
    "rendezvous.beta",
    "rendezvous.alpha_local",
    "rendezvous.beta_local",
    "threshold_bytes",
];

impl CostParams {
    fn set_for(&self, message_bytes: u64) -> &ParamSet {
        match protocol_select(message_bytes, self) {
            Protocol::Eager => &self.eager,
            Protocol::Rendezvous => &self.rendezvous,
        }
    }

    fn set_for_mean(&self, bytes: u64, msgs: u64) -> &ParamSet {
        let mean = bytes as f64 / msgs as f64;
        if mean >= self.threshold_bytes as f64 {
            &self.rendezvous
        } else {
            &self.eager
        }
    }

    /// Parse the flat key-value parameter format: one `key = value` pair per
    /// line, `#` comments, every key required exactly once, values in
    /// decimal or scientific notation.
    pub fn parse(text: &str) -> Result<Self> {
        let mut seen: HashMap<&str, f64> = HashMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let lineno = idx + 1;
            let (key, value) = line.split_once('=').ok_or_else(|| {
                Error::Params(format!("line {lineno}: expected `key = value`, got {line:?}"))
            })?;
            let key = key.trim();
            let key = *PARAM_KEYS
                .iter()
                .find(|&&k| k == key)
                .ok_or_else(|| Error::Params(format!("line {lineno}: unknown key {key:?}")))?;
            let value: f64 = value.trim().parse().map_err(|_| {
                Error::Params(format!(
                    "line {lineno}: cannot parse value {:?} for {key}",
                    value.trim()
                ))
            })?;
            if !value.is_finite() || value < 0.0 {
                return Err(Error::Params(format!(
                    "line {lineno}: {key} must be a finite non-negative number"
                )));
            }
            if seen.insert(key, value).is_some() {
                return Err(Error::Params(format!("line {lineno}: duplicate key {key}")));
            }
        }
        for key in PARAM_KEYS {
            if !seen.contains_key(key) {
                return Err(Error::Params(format!("missing key {key}")));
            }
        }
        let threshold = seen["threshold_bytes"];
        if threshold < 1.0 || threshold.fract() != 0.0 {
            return Err(Error::Params(
                "threshold_bytes must be a positive whole number of bytes".into(),
            ));
        }
        Ok(CostParams {
            eager: ParamSet {
                alpha: seen["eager.alpha"],
                beta: seen["eager.beta"],
                alpha_local: seen["eager.alpha_local"],
                beta_local: seen["eager.beta_local"],
            },
            rendezvous: ParamSet {
                alpha: seen["rendezvous.alpha"],
                beta: seen["rendezvous.beta"],
                alpha_local: seen["rendezvous.alpha_local"],
                beta_local: seen["rendezvous.beta_local"],
            },
            threshold_bytes: threshold as u64,
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(&text)
    }

    /// Sanity warnings for presets where locality buys nothing: a
    /// locality-meaningful preset has `alpha >= alpha_local` and
    /// `beta >= beta_local` in both protocol sets. Violations are reported,
    /// not rejected.
    pub fn locality_warnings(&self) -> Vec<String> {
        let mut warnings = Vec::new();
        for (name, set) in [("eager", &self.eager), ("rendezvous", &self.rendezvous)] {
            if set.alpha < set.alpha_local {
                warnings.push(format!(
                    "{name}: non-local latency alpha ({}) is below local alpha_local ({})",
                    set.alpha, set.alpha_local
                ));
            }
            if set.beta < set.beta_local {
                warnings.push(format!(
                    "{name}: non-local byte cost beta ({}) is below local beta_local ({})",
                    set.beta, set.beta_local
                ));
            }
        }
        warnings
    }
}

/// Per-rank communication totals fed to the postal/locality cost models,
/// optionally with the individual message sizes for per-message protocol
/// selection.
#[derive(Debug, Clone, Default)]
pub struct ModelInput {
    msgs_nonlocal: u64,
    bytes_nonlocal: u64,
    msgs_local: u64,
    bytes_local: u64,
    sizes: Option<MessageSizes>,
}

/// Individual message sizes in bytes, split by locality class.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MessageSizes {
    pub nonlocal: Vec<u64>,
    pub local: Vec<u64>,
}

impl ModelInput {
    /// Aggregate totals only; protocol selection falls back to the mean
    /// message size of each class.
    pub fn from_totals(
        msgs_nonlocal: u64,
        bytes_nonlocal: u64,
        msgs_local: u64,
        bytes_local: u64,
    ) -> Self {
        ModelInput {
            msgs_nonlocal,
            bytes_nonlocal,
            msgs_local,
            bytes_local,
            sizes: None,
        }
    }

    /// Build from individual message sizes; totals are derived, keeping the
    /// sums consistent by construction.
    pub fn from_message_sizes(nonlocal: Vec<u64>, local: Vec<u64>) -> Self {
        ModelInput {
            msgs_nonlocal: nonlocal.len() as u64,
            bytes_nonlocal: nonlocal.iter().sum(),
            msgs_local: local.len() as u64,
            bytes_local: local.iter().sum(),
            sizes: Some(MessageSizes { nonlocal, local }),
        }
    }

    /// Collect one rank's send sizes from an event log.
    pub fn for_rank(events: &[MessageEvent], rank: usize) -> Self {
        let mut nonlocal = Vec::new();
        let mut local = Vec::new();
        for e in events.iter().filter(|e| e.src == rank) {
            match e.locality {
                Locality::Local => local.push(e.bytes),
                Locality::NonLocal => nonlocal.push(e.bytes),
            }
        }
        Self::from_message_sizes(nonlocal, local)
    }

    pub fn msgs_nonlocal(&self) -> u64 {
        self.msgs_nonlocal
    }

    pub fn bytes_nonlocal(&self) -> u64 {
        self.bytes_nonlocal
    }

    pub fn msgs_local(&self) -> u64 {
        self.msgs_local
    }

    pub fn bytes_local(&self) -> u64 {
        self.bytes_local
    }

    pub fn sizes(&self) -> Option<&MessageSizes> {
        self.sizes.as_ref()
    }
}

fn message_cost(bytes: u64, local: bool, params: &CostParams) -> f64 {
    let set = params.set_for(bytes);
    if local {
        set.alpha_local + set.beta_local * bytes as f64
    } else {
        set.alpha + set.beta * bytes as f64
    }
}

/// Locality-blind postal model: every message is costed with the non-local
/// `alpha`/`beta` of its protocol class, `T = alpha*(n + n_l) +
/// beta*(s + s_l)`.
pub fn postal_cost(input: &ModelInput, params: &CostParams) -> f64 {
    match &input.sizes {
        Some(sizes) => sizes
            .nonlocal
            .iter()
            .chain(&sizes.local)
            .map(|&z| message_cost(z, false, params))
            .sum(),
        None => {
            let msgs = input.msgs_nonlocal + input.msgs_local;
            if msgs == 0 {
                return 0.0;
            }
            let bytes = input.bytes_nonlocal + input.bytes_local;
            let set = params.set_for_mean(bytes, msgs);
            set.alpha * msgs as f64 + set.beta * bytes as f64
        }
    }
}

/// Locality-aware cost, `T = alpha*n + beta*s + alpha_local*n_l +
/// beta_local*s_l`, protocol-selected per message within each class.
pub fn locality_cost(input: &ModelInput, params: &CostParams) -> f64 {
    match &input.sizes {
        Some(sizes) => {
            let nonlocal: f64 = sizes
                .nonlocal
                .iter()
                .map(|&z| message_cost(z, false, params))
                .sum();
            let local: f64 = sizes
                .local
                .iter()
                .map(|&z| message_cost(z, true, params))
                .sum();
            nonlocal + local
        }
        None => {
            let mut total = 0.0;
            if input.msgs_nonlocal > 0 {
                let set = params.set_for_mean(input.bytes_nonlocal, input.msgs_nonlocal);
                total += set.alpha * input.msgs_nonlocal as f64
                    + set.beta * input.bytes_nonlocal as f64;
            }
            if input.msgs_local > 0 {
                let set = params.set_for_mean(input.bytes_local, input.msgs_local);
                total += set.alpha_local * input.msgs_local as f64
                    + set.beta_local * input.bytes_local as f64;
            }
            total
        }
    }
}

/// Model flavor: aggregate closed form vs per-step exact sum.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelVariant {
    Paper,
    Exact,
}

impl ModelVariant {
    pub fn name(self) -> &'static str {
        match self {
            ModelVariant::Paper => "paper",
            ModelVariant::Exact => "exact",
        }
    }

    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "paper" => Ok(ModelVariant::Paper),
            "exact" => Ok(ModelVariant::Exact),
            other => Err(Error::InvalidArgument(format!(
                "unknown model variant {other:?}; expected paper or exact"
            ))),
        }
    }
}

impl fmt::Display for ModelVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Total gathered bytes `b = n * p * w`.
fn total_bytes(topo: &Topology) -> u64 {
    (topo.values_per_rank() * topo.process_count() * topo.value_width()) as u64
}

/// Largest single message of either log-step algorithm: half the gathered
/// data (the last exchange step). Decides the protocol class of the
/// aggregate model variant.
fn largest_message_bytes(topo: &Topology) -> u64 {
    if topo.process_count() == 1 {
        0
    } else {
        total_bytes(topo) / 2
    }
}

/// Modeled time of the log-step exchange.
///
/// Paper variant: `log2(p)*alpha + (b-1)*beta`. Exact variant: per-step
/// message sizes `n * 2^i * w`, costed as the heaviest rank sees them — all
/// non-local when there is more than one region, all local otherwise.
pub fn bruck_model(topo: &Topology, params: &CostParams, variant: ModelVariant) -> f64 {
    match variant {
        ModelVariant::Paper => {
            let set = params.set_for(largest_message_bytes(topo));
            let steps = topo.process_count().trailing_zeros() as f64;
            steps * set.alpha + (total_bytes(topo) as f64 - 1.0) * set.beta
        }
        ModelVariant::Exact => {
            let w = topo.value_width() as u64;
            let local = topo.region_count() == 1;
            counts::bruck_step_values(topo)
                .iter()
                .map(|&values| message_cost(values * w, local, params))
                .sum()
        }
    }
}

/// Modeled time of the locality-aware exchange.
///
/// Paper variant: `k*alpha + (b/p_l)*beta + (k+1)*alpha_local +
/// (b-1)*beta_local`; `k = log_{p_l}(r)` is evaluated as a real number, so
/// any region count works as long as regions hold at least two ranks.
/// Exact variant: the per-step sums of the heaviest rank (one non-local
/// message per round plus every local gather step), which requires a
/// topology the algorithm can actually run on.
pub fn locality_bruck_model(
    topo: &Topology,
    params: &CostParams,
    variant: ModelVariant,
) -> Result<f64> {
    match variant {
        ModelVariant::Paper => {
            let r = topo.region_count();
            let pl = topo.region_size();
            if r > 1 && pl < 2 {
                return Err(Error::UnsupportedTopology(
                    "the locality model requires at least 2 ranks per region \
                     when there is more than one region"
                        .into(),
                ));
            }
            let rounds = if r == 1 {
                0.0
            } else {
                (r as f64).ln() / (pl as f64).ln()
            };
            let b = total_bytes(topo) as f64;
            let set = params.set_for(largest_message_bytes(topo));
            Ok(rounds * set.alpha
                + b / pl as f64 * set.beta
                + (rounds + 1.0) * set.alpha_local
                + (b - 1.0) * set.beta_local)
        }
        ModelVariant::Exact => {
            let w = topo.value_width() as u64;
            let nonlocal: f64 = counts::locality_nonlocal_step_values(topo)?
                .iter()
                .map(|&values| message_cost(values * w, false, params))
                .sum();
            let local: f64 = counts::locality_local_step_values(topo)?
                .iter()
                .map(|&values| message_cost(values * w, true, params))
                .sum();
            Ok(nonlocal + local)
        }
    }
}

/// One row of a model sweep.
#[derive(Debug, Clone)]
pub struct SweepEntry {
    pub topology: Topology,
    pub algorithm: AlgorithmId,
    pub variant: ModelVariant,
    pub seconds: Option<f64>,
    /// Set when `seconds` is absent: why this cell has no value.
    pub note: Option<String>,
}

/// Evaluate the models over a list of topologies: one entry per
/// (topology, algorithm, variant), in input order. Per-topology model
/// failures become row-level notes rather than hard errors.
pub fn sweep_models(
    topos: &[Topology],
    algorithms: &[AlgorithmId],
    params: &CostParams,
) -> Vec<SweepEntry> {
    let mut rows = Vec::new();
    for &topology in topos {
        for &algorithm in algorithms {
            for variant in [ModelVariant::Paper, ModelVariant::Exact] {
                let result = match algorithm {
                    AlgorithmId::Bruck => Ok(bruck_model(&topology, params, variant)),
                    AlgorithmId::LocalityBruck => {
                        locality_bruck_model(&topology, params, variant)
                    }
                    AlgorithmId::Ring | AlgorithmId::Hierarchical => Err(
                        Error::UnsupportedTopology(format!("no closed-form model for {algorithm}")),
                    ),
                };
                let (seconds, note) = match result {
                    Ok(s) => (Some(s), None),
                    Err(e) => (None, Some(e.to_string())),
                };
                rows.push(SweepEntry {
                    topology,
                    algorithm,
                    variant,
                    seconds,
                    note,
                });
            }
        }
    }
    rows
}
