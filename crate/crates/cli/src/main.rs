use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use xbarmap::config::ToolConfig;
use xbarmap::cost::{latency_pipelined, latency_sequential, total_tile_area, AreaModel};
use xbarmap::fragment::{fragment_network, sort_in_place, Fragment, SortKey, TileGeometry};
use xbarmap::network::{load_network, NetworkSpec, RapaPlan};
use xbarmap::packing::{check_feasibility, lower_bound, pack_greedy, ExactSolver, FitPolicy, PackMode};
use xbarmap::report;
use xbarmap::sweep::{compare_one_to_one, evaluate_config, optimize, PackerChoice, SweepConfig};

/// Like `println!`, but a closed stdout (e.g. piped into `head`) is not fatal.
macro_rules! say {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($arg)*);
    }};
}

#[derive(Parser)]
#[command(name = "xbarmap", version, about = "Map neural-network layers onto crossbar tiles")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Cut every layer into tile-sized fragments.
    Fragments {
        #[command(flatten)]
        io: IoArgs,
        #[arg(long, value_name = "RxC")]
        tile: TileGeometry,
        #[command(flatten)]
        rapa: RapaArgs,
    },
    /// Pack fragments onto tiles of one geometry.
    Pack {
        #[command(flatten)]
        io: IoArgs,
        #[arg(long, value_name = "RxC")]
        tile: TileGeometry,
        #[command(flatten)]
        packing: PackArgs,
        /// Use the branch-and-bound solver instead of the greedy packer.
        #[arg(long)]
        exact: bool,
        /// Pack N random fragments instead of a network.
        #[arg(long, value_name = "N", conflicts_with = "network")]
        random_items: Option<usize>,
        /// Seed for --random-items.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        rapa: RapaArgs,
    },
    /// Evaluate a grid of tile geometries and report the cheapest.
    Sweep {
        #[command(flatten)]
        io: IoArgs,
        #[command(flatten)]
        packing: PackArgs,
        #[arg(long)]
        packer: Option<PackerChoice>,
        /// Only evaluate square tiles.
        #[arg(long)]
        square_only: bool,
        /// Row dimensions to sweep.
        #[arg(long, value_delimiter = ',')]
        rows: Option<Vec<u32>>,
        /// Column multipliers to sweep (n_col = multiplier · n_row).
        #[arg(long, value_delimiter = ',')]
        aspects: Option<Vec<u32>>,
        #[command(flatten)]
        rapa: RapaArgs,
    },
    /// Sequential and pipelined execution latency.
    Latency {
        #[command(flatten)]
        io: IoArgs,
        #[command(flatten)]
        rapa: RapaArgs,
    },
    /// Packed tile count against the one-fragment-per-tile baseline.
    Compare {
        #[command(flatten)]
        io: IoArgs,
        #[arg(long, value_name = "RxC")]
        tile: TileGeometry,
        #[command(flatten)]
        packing: PackArgs,
        #[arg(long)]
        exact: bool,
        #[command(flatten)]
        rapa: RapaArgs,
    },
}

#[derive(Args)]
struct IoArgs {
    /// Network description (TOML; the extension may be omitted).
    #[arg(long, short)]
    network: Option<PathBuf>,
    /// Run configuration; defaults to the bundled one.
    #[arg(long, short)]
    config: Option<PathBuf>,
    /// Directory for report files.
    #[arg(long, short, env = "XBARMAP_OUT_DIR", default_value = ".")]
    out: PathBuf,
    /// Report formats to write. svg and ascii apply to `pack` only.
    #[arg(long, value_delimiter = ',', default_value = "csv,json")]
    format: Vec<Format>,
}

#[derive(Args)]
struct PackArgs {
    #[arg(long, default_value = "dense")]
    mode: PackMode,
    #[arg(long)]
    policy: Option<FitPolicy>,
    #[arg(long)]
    sort: Option<SortKey>,
    /// Node budget for the exact solver.
    #[arg(long)]
    max_nodes: Option<u64>,
    /// Wall-clock budget for the exact solver, in seconds.
    #[arg(long)]
    time_limit: Option<f64>,
}

#[derive(Args)]
struct RapaArgs {
    /// Replication plan FIRST/DECAY, e.g. 128/4.
    #[arg(long, value_name = "FIRST/DECAY")]
    rapa: Option<RapaPlan>,
    /// Fixed replication for one layer, by name or index.
    #[arg(long, value_name = "LAYER=FACTOR")]
    rapa_override: Vec<String>,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Csv,
    Json,
    Svg,
    Ascii,
}

struct Ctx {
    config: ToolConfig,
    out: PathBuf,
    formats: Vec<Format>,
}

impl Ctx {
    fn new(io: &IoArgs) -> Result<Self> {
        let config = match &io.config {
            Some(path) => ToolConfig::load(path)?,
            None => ToolConfig::bundled(),
        };
        fs::create_dir_all(&io.out).with_context(|| format!("cannot create output directory {}", io.out.display()))?;
        Ok(Self {
            config,
            out: io.out.clone(),
            formats: io.format.clone(),
        })
    }

    fn wants(&self, f: Format) -> bool {
        self.formats.contains(&f)
    }

    fn write(&self, name: &str, contents: &str) -> Result<()> {
        let path = self.out.join(name);
        fs::write(&path, contents).with_context(|| format!("cannot write {}", path.display()))?;
        say!("wrote {}", path.display());
        Ok(())
    }

    fn apply_packing(&mut self, p: &PackArgs) {
        let cfg = &mut self.config.packing;
        if let Some(policy) = p.policy {
            cfg.policy = policy;
        }
        if let Some(sort) = p.sort {
            cfg.sort = sort;
        }
        if let Some(n) = p.max_nodes {
            cfg.max_nodes = n;
        }
        if let Some(t) = p.time_limit {
            cfg.time_limit_secs = t;
        }
    }

    fn sweep_config(&self, mode: PackMode, network: Option<&NetworkSpec>, rapa: &RapaArgs) -> Result<SweepConfig> {
        let mut config = self.config.sweep_config(mode)?;
        if let Some(plan) = &rapa.rapa {
            config.rapa = Some(plan.clone());
        }
        if !rapa.rapa_override.is_empty() {
            let Some(network) = network else {
                bail!("--rapa-override needs a network");
            };
            let mut plan = config.rapa.take().unwrap_or_else(RapaPlan::identity);
            for spec in &rapa.rapa_override {
                let (layer, factor) = parse_override(spec, network)?;
                plan = plan.with_override(layer, factor);
            }
            config.rapa = Some(plan);
        }
        Ok(config)
    }
}

fn parse_override(spec: &str, network: &NetworkSpec) -> Result<(usize, u32)> {
    let Some((layer, factor)) = spec.split_once('=') else {
        bail!("--rapa-override `{spec}` must look like LAYER=FACTOR");
    };
    let factor: u32 = factor
        .trim()
        .parse()
        .ok()
        .filter(|&f| f >= 1)
        .with_context(|| format!("--rapa-override `{spec}`: factor must be a positive integer"))?;
    let layer = layer.trim();
    let index = network
        .layer_index(layer)
        .or_else(|| layer.parse::<usize>().ok().filter(|&i| i < network.layers.len()))
        .with_context(|| format!("--rapa-override `{spec}`: no layer `{layer}` in {}", network.name))?;
    Ok((index, factor))
}

fn require_network(io: &IoArgs) -> Result<NetworkSpec> {
    let Some(path) = &io.network else {
        bail!("--network is required");
    };
    Ok(load_network(path)?)
}

fn layer_names(network: &NetworkSpec) -> Vec<String> {
    network.layers.iter().map(|l| l.name.clone()).collect()
}

fn random_items(n: usize, seed: u64, g: TileGeometry) -> Vec<Fragment> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| Fragment::item(i, rng.gen_range(1..=g.n_row), rng.gen_range(1..=g.n_col), g))
        .collect()
}

fn run_fragments(io: &IoArgs, tile: TileGeometry, rapa: &RapaArgs) -> Result<()> {
    let ctx = Ctx::new(io)?;
    let network = require_network(io)?;
    let config = ctx.sweep_config(PackMode::Dense, Some(&network), rapa)?;
    let layers = config.prepare_layers(&network)?;
    let set = fragment_network(&layers, tile);
    let c = set.counts;
    say!(
        "{} on {tile}: {} fragments ({} fully mapped, {} row-full, {} col-full, {} sparse)",
        network.name,
        set.len(),
        c.fully_mapped,
        c.row_full,
        c.col_full,
        c.sparse
    );
    if ctx.wants(Format::Csv) {
        ctx.write("fragments.csv", &report::fragments_csv(&set, &layer_names(&network))?)?;
    }
    if ctx.wants(Format::Json) {
        ctx.write("fragments.json", &report::fragments_json(&network.name, &set)?)?;
    }
    Ok(())
}

fn run_pack(
    io: &IoArgs,
    tile: TileGeometry,
    packing: &PackArgs,
    exact: bool,
    random: Option<usize>,
    seed: u64,
    rapa: &RapaArgs,
) -> Result<()> {
    let mut ctx = Ctx::new(io)?;
    ctx.apply_packing(packing);
    let mode = packing.mode;

    let network = match random {
        Some(_) => None,
        None => Some(require_network(io)?),
    };
    let config = ctx.sweep_config(mode, network.as_ref(), rapa)?;
    let (label, names, mut items) = match (&network, random) {
        (Some(network), _) => {
            let layers = config.prepare_layers(network)?;
            let items = fragment_network(&layers, tile).fragments;
            (network.name.clone(), layer_names(network), items)
        }
        (None, n) => {
            let n = n.unwrap_or_default();
            let names = (0..n).map(|i| format!("item{i}")).collect();
            (format!("random-{n}-seed-{seed}"), names, random_items(n, seed, tile))
        }
    };
    sort_in_place(&mut items, config.sort_key);

    let started = Instant::now();
    let (result, exact_summary) = if exact {
        let outcome = ExactSolver::new(config.budget).solve(mode, &items, tile);
        let summary = report::ExactSummary::from(&outcome);
        (outcome.result, Some(summary))
    } else {
        (pack_greedy(mode, &items, tile, config.policy), None)
    };
    let elapsed = started.elapsed();
    check_feasibility(&result, &items).context("packer produced an infeasible layout")?;

    let status = match &exact_summary {
        Some(s) => format!(" ({}, lower bound {})", report::status_str(s.status), s.lower_bound),
        None => format!(" (greedy {}, lower bound {})", config.policy, lower_bound(mode, &items, tile)),
    };
    say!(
        "{label}: {mode} packing of {} fragments on {tile}: {} bins{status}, fill {:.3}, {:.3}s",
        items.len(),
        result.bin_count,
        result.fill_ratio,
        elapsed.as_secs_f64()
    );

    let summary = report::PackSummary {
        network: &label,
        mode,
        geometry: tile,
        policy: config.policy,
        sort_key: config.sort_key.to_string(),
        packer: if exact { "exact" } else { "greedy" },
        exact: exact_summary,
        bin_count: result.bin_count,
        fill_ratio: result.fill_ratio,
        dead_area: result.dead_area(),
        tile_efficiency: config.cost.efficiency(tile),
        total_tile_area: total_tile_area(result.bin_count, tile, &config.cost),
        placements: &result.placements,
    };
    if ctx.wants(Format::Csv) {
        ctx.write("placements.csv", &report::placements_csv(&result, &names)?)?;
    }
    if ctx.wants(Format::Json) {
        ctx.write("pack.json", &report::pack_json(&summary)?)?;
    }
    if ctx.wants(Format::Svg) {
        ctx.write("layout.svg", &report::render_svg(&result, &names))?;
    }
    if ctx.wants(Format::Ascii) {
        ctx.write("layout.txt", &report::render_ascii(&result, &names))?;
    }
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn run_sweep(
    io: &IoArgs,
    packing: &PackArgs,
    packer: Option<PackerChoice>,
    square_only: bool,
    rows: Option<&[u32]>,
    aspects: Option<&[u32]>,
    rapa: &RapaArgs,
) -> Result<()> {
    let mut ctx = Ctx::new(io)?;
    ctx.apply_packing(packing);
    if let Some(p) = packer {
        ctx.config.sweep.packer = p;
    }
    if let Some(r) = rows {
        ctx.config.sweep.row_dims = r.to_vec();
    }
    if let Some(a) = aspects {
        ctx.config.sweep.aspect_multipliers = a.to_vec();
    }
    if square_only {
        ctx.config.sweep.aspect_multipliers = vec![1];
    }
    let network = require_network(io)?;
    let config = ctx.sweep_config(packing.mode, Some(&network), rapa)?;

    let started = Instant::now();
    let report = optimize(&network, &config)?;
    let elapsed = started.elapsed();

    for m in &report.aspect_minima {
        let p = &report.points[m.point];
        say!(
            "aspect {}: best {} with {} tiles, area {:.6e}",
            m.aspect, p.geometry, p.bin_count, p.total_tile_area
        );
    }
    let best = report.optimum_point();
    say!(
        "{}: {} optimum {} with {} tiles, area {:.6e} ({} points, {:.3}s)",
        network.name,
        config.mode,
        best.geometry,
        best.bin_count,
        best.total_tile_area,
        report.points.len(),
        elapsed.as_secs_f64()
    );
    if let Some(check) = &report.exact_check {
        say!(
            "exact check at {}: greedy {} bins, exact {} bins ({})",
            check.geometry,
            check.greedy_bins,
            check.exact_bins,
            report::status_str(check.status)
        );
    }
    if ctx.wants(Format::Csv) {
        ctx.write("sweep.csv", &report::sweep_csv(&report)?)?;
    }
    if ctx.wants(Format::Json) {
        ctx.write("sweep.json", &report::sweep_json(&report)?)?;
    }
    Ok(())
}

fn run_latency(io: &IoArgs, rapa: &RapaArgs) -> Result<()> {
    let ctx = Ctx::new(io)?;
    let network = require_network(io)?;
    let config = ctx.sweep_config(PackMode::Pipeline, Some(&network), rapa)?;
    let layers = config.prepare_layers(&network)?;
    let sequential = latency_sequential(&layers, &config.latency);
    let pipelined = latency_pipelined(&layers, &config.latency);
    say!("{}: sequential {sequential}, pipelined {pipelined}", network.name);

    if ctx.wants(Format::Csv) {
        let mut w = String::from("layer,m_inp,m_out,n_reuse,replication,effective_reuse\n");
        for (spec, l) in network.layers.iter().zip(&layers) {
            w.push_str(&format!(
                "{},{},{},{},{},{}\n",
                spec.name,
                l.m_inp,
                l.m_out,
                l.n_reuse,
                l.replication,
                l.effective_reuse()
            ));
        }
        ctx.write("latency.csv", &w)?;
    }
    if ctx.wants(Format::Json) {
        let summary = report::LatencySummary {
            network: &network.name,
            rapa: config.rapa.as_ref().map(ToString::to_string),
            replication: layers.iter().map(|l| l.replication).collect(),
            sequential,
            pipelined,
        };
        ctx.write("latency.json", &report::latency_json(&summary)?)?;
    }
    Ok(())
}

fn run_compare(io: &IoArgs, tile: TileGeometry, packing: &PackArgs, exact: bool, rapa: &RapaArgs) -> Result<()> {
    let mut ctx = Ctx::new(io)?;
    ctx.apply_packing(packing);
    ctx.config.sweep.packer = if exact { PackerChoice::Exact } else { PackerChoice::Greedy };
    let network = require_network(io)?;
    let config = ctx.sweep_config(packing.mode, Some(&network), rapa)?;
    let one = compare_one_to_one(&network, tile, &config)?;
    let packed = evaluate_config(&network, tile, &config)?;
    say!(
        "{} on {tile}: 1:1 {} tiles, {} packed {} tiles ({:.1}% fewer)",
        network.name,
        one.bin_count,
        config.mode,
        packed.bin_count,
        100.0 * (1.0 - packed.bin_count as f64 / one.bin_count.max(1) as f64)
    );
    if ctx.wants(Format::Csv) {
        ctx.write("compare.csv", &report::points_csv(&[one.clone(), packed.clone()])?)?;
    }
    if ctx.wants(Format::Json) {
        let summary = report::CompareSummary {
            network: &network.name,
            mode: config.mode,
            one_to_one: &one,
            packed: &packed,
        };
        ctx.write("compare.json", &report::compare_json(&summary)?)?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Fragments { io, tile, rapa } => run_fragments(io, *tile, rapa),
        Command::Pack {
            io,
            tile,
            packing,
            exact,
            random_items,
            seed,
            rapa,
        } => run_pack(io, *tile, packing, *exact, *random_items, *seed, rapa),
        Command::Sweep {
            io,
            packing,
            packer,
            square_only,
            rows,
            aspects,
            rapa,
        } => run_sweep(io, packing, *packer, *square_only, rows.as_deref(), aspects.as_deref(), rapa),
        Command::Latency { io, rapa } => run_latency(io, rapa),
        Command::Compare {
            io,
            tile,
            packing,
            exact,
            rapa,
        } => run_compare(io, *tile, packing, *exact, rapa),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
