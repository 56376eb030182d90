//! Command-line front end: single simulations, model/count sweeps, and a
//! built-in self-test grid.
//!
//! Exit codes: 0 success, 1 self-test or internal failure, 2 invalid
//! input, 3 I/O or parameter-file failure.

use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use crate::buffer::{canonical_gather_oracle, Buffer};
use crate::collectives::{self, AlgorithmId};
use crate::costmodel::{self, CostParams, ModelInput, ModelVariant};
use crate::counts::{self, CountPrediction};
use crate::error::{Error, Result};
use crate::fabric::RankCounts;
use crate::topology::Topology;

pub const EXIT_OK: u8 = 0;
pub const EXIT_FAILURE: u8 = 1;
pub const EXIT_INVALID_INPUT: u8 = 2;
pub const EXIT_IO: u8 = 3;

/// Header shared by the `run` and `sweep` CSV outputs.
pub const CSV_HEADER: &str = "algorithm,p,region_size,values_per_rank,value_bytes,\
max_msgs_local,max_msgs_nonlocal,max_bytes_local,max_bytes_nonlocal,model_paper_s,model_exact_s";

#[derive(Debug, Parser)]
#[command(
    name = "allgather-sim",
    about = "Simulate allgather collective algorithms and evaluate their cost models",
    version
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Simulate one allgather and report tallied counts and modeled times
    Run(RunArgs),
    /// Evaluate count predictions and cost models over a topology grid
    Sweep(SweepArgs),
    /// Run the oracle-equivalence and count-equality suites on the built-in grid
    Selftest,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// Algorithm: bruck, locality-bruck, ring, or hierarchical
    #[arg(long)]
    algorithm: String,

    /// Process count (power of two)
    #[arg(long)]
    p: usize,

    /// Ranks per region (power of two dividing --p)
    #[arg(long, default_value_t = 1)]
    region_size: usize,

    /// Initial values on each rank
    #[arg(long, default_value_t = 1)]
    values_per_rank: usize,

    /// Bytes per value
    #[arg(long, default_value_t = 4)]
    value_bytes: usize,

    /// Cost-parameter file (flat key = value format)
    #[arg(long)]
    params: Option<PathBuf>,

    /// Model variant column(s) to fill: paper, exact, or both
    #[arg(long, default_value = "both")]
    variant: String,

    /// Write CSV here instead of standard output
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    /// Region counts to sweep; the process count of each point is
    /// regions * region-size
    #[arg(long, value_delimiter = ',')]
    regions: Vec<usize>,

    /// Process counts to sweep (alternative to --regions)
    #[arg(long, value_delimiter = ',', conflicts_with = "regions")]
    p: Vec<usize>,

    /// Ranks-per-region values to sweep
    #[arg(long, value_delimiter = ',')]
    region_size: Vec<usize>,

    /// Per-rank data sizes in bytes to sweep (multiples of --value-bytes)
    #[arg(long, value_delimiter = ',', conflicts_with = "values_per_rank")]
    data_bytes: Vec<u64>,

    /// Initial values on each rank
    #[arg(long, default_value_t = 1)]
    values_per_rank: usize,

    /// Bytes per value
    #[arg(long, default_value_t = 4)]
    value_bytes: usize,

    /// Built-in grid: node-sweep (region counts 16..1024 at 8 and 16 ranks
    /// per region) or data-sweep (1024 regions of 16, per-rank sizes 4 B to
    /// 64 KiB)
    #[arg(long, conflicts_with_all = ["regions", "p", "region_size", "data_bytes"])]
    preset: Option<String>,

    /// Cost-parameter file (flat key = value format)
    #[arg(long)]
    params: Option<PathBuf>,

    /// Model variant column(s) to fill: paper, exact, or both
    #[arg(long, default_value = "both")]
    variant: String,

    /// Write CSV here instead of standard output
    #[arg(long)]
    output: Option<PathBuf>,
}

/// Which model columns a command fills in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariantSelection {
    Paper,
    Exact,
    Both,
}

impl VariantSelection {
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "paper" => Ok(VariantSelection::Paper),
            "exact" => Ok(VariantSelection::Exact),
            "both" => Ok(VariantSelection::Both),
            other => Err(Error::InvalidArgument(format!(
                "unknown variant {other:?}; expected paper, exact, or both"
            ))),
        }
    }

    fn mask(self, paper: Option<f64>, exact: Option<f64>) -> (Option<f64>, Option<f64>) {
        match self {
            VariantSelection::Paper => (paper, None),
            VariantSelection::Exact => (None, exact),
            VariantSelection::Both => (paper, exact),
        }
    }
}

/// A validated single-run request.
#[derive(Debug, Clone)]
pub struct RunSpec {
    pub algorithm: AlgorithmId,
    pub p: usize,
    pub region_size: usize,
    pub values_per_rank: usize,
    pub value_bytes: usize,
    pub params_file: Option<PathBuf>,
    pub variant: VariantSelection,
    pub output: Option<PathBuf>,
}

impl RunArgs {
    fn to_spec(&self) -> Result<RunSpec> {
        Ok(RunSpec {
            algorithm: AlgorithmId::parse(&self.algorithm)?,
            p: self.p,
            region_size: self.region_size,
            values_per_rank: self.values_per_rank,
            value_bytes: self.value_bytes,
            params_file: self.params.clone(),
            variant: VariantSelection::parse(&self.variant)?,
            output: self.output.clone(),
        })
    }
}

fn load_params(path: &Option<PathBuf>) -> Result<CostParams> {
    let params = match path {
        Some(path) => CostParams::from_file(path)?,
        None => CostParams::default(),
    };
    for warning in params.locality_warnings() {
        eprintln!("warning: {warning}");
    }
    Ok(params)
}

fn format_seconds(value: f64) -> String {
    format!("{value:e}")
}

fn format_row(
    algorithm: AlgorithmId,
    topo: &Topology,
    max: Option<RankCounts>,
    paper: Option<f64>,
    exact: Option<f64>,
) -> String {
    let cell_u64 = |v: Option<u64>| v.map(|x| x.to_string()).unwrap_or_default();
    let cell_s = |v: Option<f64>| v.map(format_seconds).unwrap_or_default();
    format!(
        "{},{},{},{},{},{},{},{},{},{},{}",
        algorithm,
        topo.process_count(),
        topo.region_size(),
        topo.values_per_rank(),
        topo.value_width(),
        cell_u64(max.map(|m| m.msgs_local)),
        cell_u64(max.map(|m| m.msgs_nonlocal)),
        cell_u64(max.map(|m| m.bytes_local)),
        cell_u64(max.map(|m| m.bytes_nonlocal)),
        cell_s(paper),
        cell_s(exact),
    )
}

/// Build the CSV for one simulated run: header plus one row of tallied
/// maxima and modeled times.
pub fn run_csv(spec: &RunSpec, params: &CostParams) -> Result<String> {
    let topo = Topology::with_payload(
        spec.p,
        spec.region_size,
        spec.values_per_rank,
        spec.value_bytes,
    )?;
    let out = collectives::run(spec.algorithm, &topo)?;
    let (paper, exact) = match spec.algorithm {
        AlgorithmId::Bruck => (
            Some(costmodel::bruck_model(&topo, params, ModelVariant::Paper)),
            Some(costmodel::bruck_model(&topo, params, ModelVariant::Exact)),
        ),
        AlgorithmId::LocalityBruck => (
            Some(costmodel::locality_bruck_model(
                &topo,
                params,
                ModelVariant::Paper,
            )?),
            Some(costmodel::locality_bruck_model(
                &topo,
                params,
                ModelVariant::Exact,
            )?),
        ),
        // No closed form for these; the exact column reports the locality
        // cost of the heaviest rank's simulated sends.
        AlgorithmId::Ring | AlgorithmId::Hierarchical => (
            None,
            Some(costmodel::locality_cost(
                &ModelInput::for_rank(&out.events, out.tally.max_rank()),
                params,
            )),
        ),
    };
    let (paper, exact) = spec.variant.mask(paper, exact);
    let row = format_row(spec.algorithm, &topo, Some(out.tally.max()), paper, exact);
    Ok(format!("{CSV_HEADER}\n{row}\n"))
}

fn sweep_grid(args: &SweepArgs) -> Result<Vec<Topology>> {
    if let Some(preset) = &args.preset {
        return match preset.as_str() {
            "node-sweep" => {
                let mut topos = Vec::new();
                for regions in [16usize, 64, 256, 1024] {
                    for pl in [8usize, 16] {
                        topos.push(Topology::with_payload(regions * pl, pl, 1, 4)?);
                    }
                }
                Ok(topos)
            }
            "data-sweep" => {
                let mut topos = Vec::new();
                let mut size = 4usize;
                while size <= 65536 {
                    topos.push(Topology::with_payload(1024 * 16, 16, size / 4, 4)?);
                    size *= 2;
                }
                Ok(topos)
            }
            other => Err(Error::InvalidArgument(format!(
                "unknown preset {other:?}; expected node-sweep or data-sweep"
            ))),
        };
    }

    if args.regions.is_empty() && args.p.is_empty() {
        return Err(Error::InvalidArgument(
            "empty sweep grid: provide --regions or --p, or use --preset".into(),
        ));
    }
    if args.region_size.is_empty() {
        return Err(Error::InvalidArgument(
            "empty sweep grid: provide at least one --region-size".into(),
        ));
    }
    let value_counts: Vec<usize> = if args.data_bytes.is_empty() {
        vec![args.values_per_rank]
    } else {
        args.data_bytes
            .iter()
            .map(|&bytes| {
                if bytes == 0 || bytes % args.value_bytes as u64 != 0 {
                    return Err(Error::InvalidArgument(format!(
                        "data size {bytes} is not a positive multiple of the value width {}",
                        args.value_bytes
                    )));
                }
                Ok((bytes / args.value_bytes as u64) as usize)
            })
            .collect::<Result<_>>()?
    };

    let mut topos = Vec::new();
    if args.regions.is_empty() {
        for &p in &args.p {
            for &pl in &args.region_size {
                for &n in &value_counts {
                    topos.push(Topology::with_payload(p, pl, n, args.value_bytes)?);
                }
            }
        }
    } else {
        for &regions in &args.regions {
            for &pl in &args.region_size {
                for &n in &value_counts {
                    topos.push(Topology::with_payload(regions * pl, pl, n, args.value_bytes)?);
                }
            }
        }
    }
    Ok(topos)
}

/// Build the sweep CSV: for every grid point, one row per algorithm with
/// closed-form count predictions and both model columns. Points the
/// locality-aware algorithm cannot run on keep their aggregate-model cell
/// and leave the rest empty (a note goes to standard error).
pub fn sweep_csv(topos: &[Topology], variant: VariantSelection, params: &CostParams) -> String {
    let algorithms = [AlgorithmId::Bruck, AlgorithmId::LocalityBruck];
    let mut csv = String::from(CSV_HEADER);
    csv.push('\n');
    for topo in topos {
        let entries = costmodel::sweep_models(std::slice::from_ref(topo), &algorithms, params);
        for &algorithm in &algorithms {
            let model_for = |variant_wanted: ModelVariant| {
                entries
                    .iter()
                    .find(|e| e.algorithm == algorithm && e.variant == variant_wanted)
                    .and_then(|e| e.seconds)
            };
            let prediction: Option<CountPrediction> = match algorithm {
                AlgorithmId::Bruck => Some(counts::bruck_counts(topo)),
                AlgorithmId::LocalityBruck => match counts::locality_counts(topo) {
                    Ok(pred) => Some(pred),
                    Err(e) => {
                        eprintln!(
                            "note: locality-bruck at p={} region-size={}: {e}",
                            topo.process_count(),
                            topo.region_size()
                        );
                        None
                    }
                },
                _ => None,
            };
            let max = prediction.map(|pred| RankCounts {
                msgs_local: pred.max_msgs_local,
                msgs_nonlocal: pred.max_msgs_nonlocal,
                bytes_local: pred.max_values_local * topo.value_width() as u64,
                bytes_nonlocal: pred.max_values_nonlocal * topo.value_width() as u64,
            });
            let (paper, exact) = variant.mask(
                model_for(ModelVariant::Paper),
                model_for(ModelVariant::Exact),
            );
            csv.push_str(&format_row(algorithm, topo, max, paper, exact));
            csv.push('\n');
        }
    }
    csv
}

// ---------------------------------------------------------------------------
// Self-test
// ---------------------------------------------------------------------------

const GRID_P: [usize; 10] = [2, 4, 8, 16, 32, 64, 128, 256, 512, 1024];
const GRID_REGION_SIZE: [usize; 5] = [1, 2, 4, 8, 16];
const GRID_VALUES: [usize; 2] = [1, 3];

/// All valid grid topologies for the built-in suites.
pub fn builtin_grid() -> Vec<Topology> {
    let mut topos = Vec::new();
    for p in GRID_P {
        for pl in GRID_REGION_SIZE {
            if pl > p {
                continue;
            }
            for n in GRID_VALUES {
                topos.push(Topology::with_payload(p, pl, n, 4).expect("grid point is valid"));
            }
        }
    }
    topos
}

struct PropertyReport {
    name: &'static str,
    failures: Vec<String>,
    checked: usize,
}

impl PropertyReport {
    fn new(name: &'static str) -> Self {
        PropertyReport {
            name,
            failures: Vec::new(),
            checked: 0,
        }
    }

    fn check(&mut self, ok: bool, context: impl FnOnce() -> String) {
        self.checked += 1;
        if !ok {
            self.failures.push(context());
        }
    }

    fn render(&self, out: &mut String) -> bool {
        if self.failures.is_empty() {
            out.push_str(&format!("PASS {} ({} checks)\n", self.name, self.checked));
            true
        } else {
            out.push_str(&format!(
                "FAIL {} ({} of {} checks failed)\n",
                self.name,
                self.failures.len(),
                self.checked
            ));
            for failure in self.failures.iter().take(8) {
                out.push_str(&format!("  {failure}\n"));
            }
            if self.failures.len() > 8 {
                out.push_str(&format!("  ... {} more\n", self.failures.len() - 8));
            }
            false
        }
    }
}

fn prediction_matches(pred: &CountPrediction, max: &RankCounts, width: u64) -> bool {
    pred.max_msgs_local == max.msgs_local
        && pred.max_msgs_nonlocal == max.msgs_nonlocal
        && pred.max_values_local * width == max.bytes_local
        && pred.max_values_nonlocal * width == max.bytes_nonlocal
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    let scale = a.abs().max(b.abs()).max(1e-300);
    (a - b).abs() <= tol * scale
}

/// Run the oracle-equivalence, count-equality, fixture, and model
/// consistency suites on the built-in grid. Returns the printable report
/// and whether every property passed.
pub fn selftest_report() -> (String, bool) {
    let params = CostParams::default();
    let mut oracle = PropertyReport::new("oracle-equivalence");
    let mut count_equality = PropertyReport::new("count-equality");
    let mut model_consistency = PropertyReport::new("exact-model-consistency");
    let mut fixtures = PropertyReport::new("reference-fixtures");

    for topo in builtin_grid() {
        let p = topo.process_count();
        let pl = topo.region_size();
        let n = topo.values_per_rank();
        let w = topo.value_width() as u64;
        let point = move |alg: AlgorithmId| format!("({alg}, p={p}, region_size={pl}, n={n})");
        let initial: Vec<Buffer> = (0..p).map(|rank| Buffer::initial(rank, &topo)).collect();
        let expected = canonical_gather_oracle(&initial, &topo).expect("well-formed initials");

        for alg in AlgorithmId::ALL {
            if alg == AlgorithmId::LocalityBruck && collectives::locality_rounds(&topo).is_err() {
                continue;
            }
            let out = match collectives::run(alg, &topo) {
                Ok(out) => out,
                Err(e) => {
                    oracle.check(false, || format!("{} failed to run: {e}", point(alg)));
                    continue;
                }
            };
            oracle.check(out.buffers.iter().all(|buf| *buf == expected), || {
                format!("{} final buffers differ from the oracle", point(alg))
            });

            let max = out.tally.max();
            match alg {
                AlgorithmId::Bruck => {
                    let pred = counts::bruck_counts(&topo);
                    count_equality.check(prediction_matches(&pred, &max, w), || {
                        format!("{} tally {max:?} != prediction {pred:?}", point(alg))
                    });
                    let model = costmodel::bruck_model(&topo, &params, ModelVariant::Exact);
                    let sim = costmodel::locality_cost(
                        &ModelInput::for_rank(&out.events, out.tally.max_rank()),
                        &params,
                    );
                    model_consistency.check(rel_close(model, sim, 1e-12), || {
                        format!("{} exact model {model} != tally cost {sim}", point(alg))
                    });
                }
                AlgorithmId::LocalityBruck => {
                    let pred = counts::locality_counts(&topo).expect("validity checked above");
                    count_equality.check(prediction_matches(&pred, &max, w), || {
                        format!("{} tally {max:?} != prediction {pred:?}", point(alg))
                    });
                    let model = costmodel::locality_bruck_model(&topo, &params, ModelVariant::Exact)
                        .expect("validity checked above");
                    let sim = costmodel::locality_cost(
                        &ModelInput::for_rank(&out.events, out.tally.max_rank()),
                        &params,
                    );
                    model_consistency.check(rel_close(model, sim, 1e-12), || {
                        format!("{} exact model {model} != tally cost {sim}", point(alg))
                    });
                }
                AlgorithmId::Ring => {
                    let pred = counts::ring_counts(&topo);
                    count_equality.check(prediction_matches(&pred, &max, w), || {
                        format!("{} tally {max:?} != prediction {pred:?}", point(alg))
                    });
                }
                AlgorithmId::Hierarchical => {}
            }
        }
    }

    // Reference fixtures: 16 ranks in regions of 4, one 4-byte value each,
    // and the two-round extension at 64 ranks.
    {
        let topo = Topology::new(16, 4).expect("fixture topology");
        let bruck = collectives::run(AlgorithmId::Bruck, &topo).expect("fixture run");
        let r0 = bruck.tally.rank(0);
        fixtures.check(
            r0.msgs_nonlocal == 4 && r0.bytes_nonlocal == 60 && r0.msgs_local == 0,
            || format!("bruck rank 0 tally {r0:?} != 4 msgs / 60 bytes non-local"),
        );
        let locality = collectives::run(AlgorithmId::LocalityBruck, &topo).expect("fixture run");
        for rank in 0..16 {
            let counts = locality.tally.rank(rank);
            if rank % 4 == 0 {
                fixtures.check(counts.msgs_nonlocal == 0, || {
                    format!("locality-bruck rank {rank} sent non-local messages")
                });
            } else {
                fixtures.check(
                    counts.msgs_nonlocal == 1 && counts.bytes_nonlocal == 16,
                    || format!("locality-bruck rank {rank} tally {counts:?} != 1 msg / 16 bytes"),
                );
            }
        }

        let topo = Topology::new(64, 4).expect("fixture topology");
        let locality = collectives::run(AlgorithmId::LocalityBruck, &topo).expect("fixture run");
        for rank in 0..64 {
            let counts = locality.tally.rank(rank);
            if rank % 4 != 0 {
                fixtures.check(
                    counts.msgs_nonlocal == 2 && counts.bytes_nonlocal == 80,
                    || format!("locality-bruck rank {rank} tally {counts:?} != 2 msgs / 80 bytes"),
                );
            }
        }
    }

    let mut report = String::new();
    let mut all_pass = true;
    for property in [&oracle, &count_equality, &model_consistency, &fixtures] {
        all_pass &= property.render(&mut report);
    }
    (report, all_pass)
}

// ---------------------------------------------------------------------------
// Dispatch
// ---------------------------------------------------------------------------

fn write_output(output: &Option<PathBuf>, text: &str) -> Result<()> {
    match output {
        Some(path) => fs::write(path, text)?,
        None => print!("{text}"),
    }
    Ok(())
}

fn exit_code_for(err: &Error) -> u8 {
    match err {
        Error::InvalidArgument(_) | Error::UnsupportedTopology(_) => EXIT_INVALID_INPUT,
        Error::Params(_) | Error::Io(_) => EXIT_IO,
        Error::Deadlock { .. } | Error::Protocol { .. } => EXIT_FAILURE,
    }
}

fn dispatch(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Run(args) => {
            let spec = args.to_spec()?;
            let params = load_params(&spec.params_file)?;
            let csv = run_csv(&spec, &params)?;
            write_output(&spec.output, &csv)?;
            Ok(EXIT_OK)
        }
        Command::Sweep(args) => {
            let variant = VariantSelection::parse(&args.variant)?;
            let params = load_params(&args.params)?;
            let topos = sweep_grid(&args)?;
            let csv = sweep_csv(&topos, variant, &params);
            write_output(&args.output, &csv)?;
            Ok(EXIT_OK)
        }
        Command::Selftest => {
            let (report, all_pass) = selftest_report();
            print!("{report}");
            Ok(if all_pass { EXIT_OK } else { EXIT_FAILURE })
        }
    }
}

/// Entry point for the binary: parse arguments, run, map errors to exit
/// codes.
pub fn run_main() -> u8 {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code_for(&err)
        }
    }
}
