//! Tile-geometry design-space sweep.
//!
//! For every candidate geometry the network is fragmented, packed and
//! costed. Candidates are grouped by aspect multiplier (`n_col =
//! multiplier · n_row`); the cheapest point of each group is recorded, and
//! the cheapest of those is the optimum.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cost::{latency_pipelined, latency_sequential, total_area_with, AreaModel, LatencyParams, TileCostParams};
use crate::error::{Error, Result};
use crate::fragment::{fragment_network, sort_in_place, KindCounts, SortKey, TileGeometry};
use crate::network::{plan_rapa, LogicalLayer, NetworkSpec, RapaPlan};
use crate::packing::{pack_greedy, pack_one_to_one, Budget, ExactSolver, FitPolicy, PackMode, PackingResult, SolveStatus};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PackerChoice {
    #[default]
    Greedy,
    Exact,
    /// Greedy everywhere, then an exact solve at the greedy optimum.
    GreedyThenExactAtOptimum,
}

impl fmt::Display for PackerChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PackerChoice::Greedy => "greedy",
            PackerChoice::Exact => "exact",
            PackerChoice::GreedyThenExactAtOptimum => "greedy-then-exact",
        })
    }
}

impl FromStr for PackerChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "greedy" => Ok(PackerChoice::Greedy),
            "exact" => Ok(PackerChoice::Exact),
            "greedy-then-exact" => Ok(PackerChoice::GreedyThenExactAtOptimum),
            _ => Err(Error::Config(format!(
                "unknown packer `{s}` (expected greedy, exact or greedy-then-exact)"
            ))),
        }
    }
}

/// Which algorithm produced a point's bin count.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PackerUsed {
    Greedy,
    Exact,
    OneToOne,
}

impl PackerUsed {
    pub fn as_str(&self) -> &'static str {
        match self {
            PackerUsed::Greedy => "greedy",
            PackerUsed::Exact => "exact",
            PackerUsed::OneToOne => "one-to-one",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub row_dims: Vec<u32>,
    pub aspect_multipliers: Vec<u32>,
    pub mode: PackMode,
    pub rapa: Option<RapaPlan>,
    pub packer: PackerChoice,
    pub sort_key: SortKey,
    pub policy: FitPolicy,
    pub cost: TileCostParams,
    pub latency: LatencyParams,
    pub budget: Budget,
}

pub fn default_row_dims() -> Vec<u32> {
    (6..=13).map(|k| 1u32 << k).collect()
}

pub fn default_aspect_multipliers() -> Vec<u32> {
    (1..=8).collect()
}

impl SweepConfig {
    pub fn new(mode: PackMode, cost: TileCostParams) -> Self {
        Self {
            row_dims: default_row_dims(),
            aspect_multipliers: default_aspect_multipliers(),
            mode,
            rapa: None,
            packer: PackerChoice::Greedy,
            sort_key: SortKey::default(),
            policy: FitPolicy::default(),
            cost,
            latency: LatencyParams::default(),
            budget: Budget::default(),
        }
    }

    pub fn square_only(mut self) -> Self {
        self.aspect_multipliers = vec![1];
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.row_dims.is_empty() || self.aspect_multipliers.is_empty() {
            return Err(Error::Config("sweep needs at least one row dimension and one aspect multiplier".into()));
        }
        if self.row_dims.contains(&0) || self.aspect_multipliers.contains(&0) {
            return Err(Error::Config("sweep dimensions must be ≥ 1".into()));
        }
        for &r in &self.row_dims {
            for &a in &self.aspect_multipliers {
                if r.checked_mul(a).is_none() {
                    return Err(Error::Config(format!("tile {r}x({a}·{r}) overflows")));
                }
            }
        }
        self.cost.validate()?;
        self.latency.validate()
    }

    /// Candidate geometries, grouped by aspect multiplier.
    pub fn geometries(&self) -> Vec<(u32, TileGeometry)> {
        self.aspect_multipliers
            .iter()
            .flat_map(|&a| {
                self.row_dims.iter().map(move |&r| {
                    (a, TileGeometry { n_row: r, n_col: r * a })
                })
            })
            .collect()
    }

    /// Lowered layers with the replication plan applied. Replication entries
    /// from the network file only take effect when a plan is configured.
    pub fn prepare_layers(&self, network: &NetworkSpec) -> Result<Vec<LogicalLayer>> {
        let layers = network.lower()?;
        Ok(match &self.rapa {
            None => layers,
            Some(plan) => {
                let mut plan = plan.clone();
                for (idx, factor) in network.replication_overrides() {
                    plan.overrides.entry(idx).or_insert(factor);
                }
                plan_rapa(&layers, &plan)
            }
        })
    }

    pub fn objective(&self) -> String {
        match &self.rapa {
            Some(plan) => format!("min-area/{}/rapa-{}", self.mode, plan),
            None => format!("min-area/{}", self.mode),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub geometry: TileGeometry,
    pub aspect: u32,
    pub fragments: usize,
    pub counts: KindCounts,
    pub bin_count: usize,
    pub fill_ratio: f64,
    pub efficiency: f64,
    pub tile_area: f64,
    pub total_tile_area: f64,
    pub latency_sequential: f64,
    pub latency_pipelined: f64,
    pub packer: PackerUsed,
    /// Exact-solver outcome, when one ran.
    pub status: Option<SolveStatus>,
    /// Exact solve did not prove optimality and fell back to a heuristic bound.
    pub flagged: bool,
}

impl SweepPoint {
    fn build(
        layers: &[LogicalLayer],
        aspect: u32,
        packing: &PackingResult,
        fragments: usize,
        counts: KindCounts,
        config: &SweepConfig,
        model: &dyn AreaModel,
    ) -> Self {
        let g = packing.geometry;
        Self {
            geometry: g,
            aspect,
            fragments,
            counts,
            bin_count: packing.bin_count,
            fill_ratio: packing.fill_ratio,
            efficiency: model.efficiency(g),
            tile_area: model.tile_area(g) * config.cost.cell_area_scale.unwrap_or(1.0),
            total_tile_area: total_area_with(model, packing.bin_count, g, &config.cost),
            latency_sequential: latency_sequential(layers, &config.latency),
            latency_pipelined: latency_pipelined(layers, &config.latency),
            packer: PackerUsed::Greedy,
            status: None,
            flagged: false,
        }
    }
}

/// Fragments, packs and costs `layers` on one geometry.
pub fn evaluate_layers(
    layers: &[LogicalLayer],
    geometry: TileGeometry,
    aspect: u32,
    packer: PackerChoice,
    config: &SweepConfig,
    model: &dyn AreaModel,
) -> SweepPoint {
    let set = fragment_network(layers, geometry);
    let mut items = set.fragments;
    sort_in_place(&mut items, config.sort_key);
    match packer {
        PackerChoice::Greedy => {
            let packing = pack_greedy(config.mode, &items, geometry, config.policy);
            SweepPoint::build(layers, aspect, &packing, items.len(), set.counts, config, model)
        }
        PackerChoice::Exact | PackerChoice::GreedyThenExactAtOptimum => {
            let greedy = pack_greedy(config.mode, &items, geometry, config.policy);
            let exact = ExactSolver::new(config.budget).solve(config.mode, &items, geometry);
            let packing = if exact.result.bin_count <= greedy.bin_count {
                &exact.result
            } else {
                &greedy
            };
            let mut point = SweepPoint::build(layers, aspect, packing, items.len(), set.counts, config, model);
            point.packer = PackerUsed::Exact;
            point.status = Some(exact.status);
            point.flagged = !exact.is_optimal();
            point
        }
    }
}

pub fn evaluate_config(network: &NetworkSpec, geometry: TileGeometry, config: &SweepConfig) -> Result<SweepPoint> {
    let layers = config.prepare_layers(network)?;
    let aspect = if geometry.n_col.is_multiple_of(geometry.n_row) {
        geometry.n_col / geometry.n_row
    } else {
        0
    };
    Ok(evaluate_layers(&layers, geometry, aspect, config.packer, config, &config.cost))
}

/// Every fragment on its own tile.
pub fn compare_one_to_one(network: &NetworkSpec, geometry: TileGeometry, config: &SweepConfig) -> Result<SweepPoint> {
    let layers = config.prepare_layers(network)?;
    let set = fragment_network(&layers, geometry);
    let packing = pack_one_to_one(config.mode, &set.fragments, geometry);
    let aspect = if geometry.n_col.is_multiple_of(geometry.n_row) {
        geometry.n_col / geometry.n_row
    } else {
        0
    };
    let mut point = SweepPoint::build(&layers, aspect, &packing, set.fragments.len(), set.counts, config, &config.cost);
    point.packer = PackerUsed::OneToOne;
    Ok(point)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AspectMinimum {
    pub aspect: u32,
    /// Index into [`OptimizationReport::points`].
    pub point: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExactCheck {
    pub geometry: TileGeometry,
    pub greedy_bins: usize,
    pub exact_bins: usize,
    pub status: SolveStatus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationReport {
    pub network: String,
    pub objective: String,
    pub mode: PackMode,
    pub packer: PackerChoice,
    pub policy: FitPolicy,
    pub sort_key: SortKey,
    pub rapa: Option<String>,
    pub points: Vec<SweepPoint>,
    pub aspect_minima: Vec<AspectMinimum>,
    pub optimum: usize,
    pub exact_check: Option<ExactCheck>,
}

impl OptimizationReport {
    pub fn optimum_point(&self) -> &SweepPoint {
        &self.points[self.optimum]
    }

    pub fn point(&self, geometry: TileGeometry) -> Option<&SweepPoint> {
        self.points.iter().find(|p| p.geometry == geometry)
    }
}

/// Cheaper area wins; ties go to fewer tiles, then to the earlier point.
fn better(a: &SweepPoint, b: &SweepPoint) -> bool {
    match a.total_tile_area.total_cmp(&b.total_tile_area) {
        std::cmp::Ordering::Less => true,
        std::cmp::Ordering::Greater => false,
        std::cmp::Ordering::Equal => a.bin_count < b.bin_count,
    }
}

fn select(points: &[SweepPoint], aspects: &[u32]) -> (Vec<AspectMinimum>, usize) {
    let mut minima = Vec::new();
    for &aspect in aspects {
        let mut best: Option<usize> = None;
        for (i, p) in points.iter().enumerate().filter(|(_, p)| p.aspect == aspect) {
            if best.is_none_or(|b| better(p, &points[b])) {
                best = Some(i);
            }
        }
        if let Some(point) = best {
            if !minima.iter().any(|m: &AspectMinimum| m.aspect == aspect) {
                minima.push(AspectMinimum { aspect, point });
            }
        }
    }
    let mut optimum = minima[0].point;
    for m in &minima[1..] {
        if better(&points[m.point], &points[optimum]) {
            optimum = m.point;
        }
    }
    (minima, optimum)
}

pub fn optimize(network: &NetworkSpec, config: &SweepConfig) -> Result<OptimizationReport> {
    optimize_with(network, config, &config.cost)
}

/// Sweep with a caller-supplied area model.
pub fn optimize_with(network: &NetworkSpec, config: &SweepConfig, model: &dyn AreaModel) -> Result<OptimizationReport> {
    config.validate()?;
    let layers = config.prepare_layers(network)?;
    let candidates = config.geometries();
    let first_pass = match config.packer {
        PackerChoice::Exact => PackerChoice::Exact,
        _ => PackerChoice::Greedy,
    };
    let mut points: Vec<SweepPoint> = candidates
        .par_iter()
        .map(|&(aspect, g)| evaluate_layers(&layers, g, aspect, first_pass, config, model))
        .collect();

    let (mut aspect_minima, mut optimum) = select(&points, &config.aspect_multipliers);

    let mut exact_check = None;
    if config.packer == PackerChoice::GreedyThenExactAtOptimum {
        let current = &points[optimum];
        let refined = evaluate_layers(&layers, current.geometry, current.aspect, PackerChoice::Exact, config, model);
        exact_check = Some(ExactCheck {
            geometry: current.geometry,
            greedy_bins: current.bin_count,
            exact_bins: refined.bin_count,
            status: refined.status.unwrap_or(SolveStatus::TooManyItems),
        });
        if refined.bin_count <= current.bin_count {
            points[optimum] = refined;
        }
        (aspect_minima, optimum) = select(&points, &config.aspect_multipliers);
    }

    Ok(OptimizationReport {
        network: network.name.clone(),
        objective: config.objective(),
        mode: config.mode,
        packer: config.packer,
        policy: config.policy,
        sort_key: config.sort_key,
        rapa: config.rapa.as_ref().map(ToString::to_string),
        points,
        aspect_minima,
        optimum,
        exact_check,
    })
}
