//! Branch-and-bound over the level (dense) and two-resource (pipeline)
//! bin-packing models.
//!
//! Dense model: items are taken in order of non-increasing output extent.
//! Each item either joins an open level whose input lines have room, starts a
//! new level on an open bin whose stacked height has room, or opens a bin.
//! Every level is therefore initialized by its tallest member and every bin
//! by its tallest level.
//!
//! Pipeline model: each bin is a pair of budgets (input lines, output lines)
//! and items are assigned to bins subject to both.
//!
//! Both searches start from the greedy incumbent, bound with the area or
//! projection relaxation over the items still to place, and treat
//! consecutive identical items as interchangeable: such an item never
//! goes to an earlier level/bin than its twin.

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use super::greedy::{pack_dense_greedy, pack_pipeline_greedy};
use super::{FitPolicy, PackMode, PackingResult, Placement};
use crate::fragment::{sort_in_place, Fragment, SortKey, TileGeometry};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Budget {
    pub max_nodes: u64,
    pub time_limit: Duration,
    /// Instances above this size are not searched; the greedy incumbent is
    /// returned instead.
    pub max_items: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Self {
            max_nodes: 10_000_000,
            time_limit: Duration::from_secs(60),
            max_items: 40,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SolveStatus {
    /// The bin count is provably minimal.
    Optimal,
    /// Node or time budget ran out; the result is the best incumbent.
    BudgetExhausted,
    /// Instance exceeded `Budget::max_items`; the result is greedy.
    TooManyItems,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExactOutcome {
    pub result: PackingResult,
    pub status: SolveStatus,
    pub nodes: u64,
    #[serde(skip)]
    pub elapsed: Duration,
    pub lower_bound: usize,
}

impl ExactOutcome {
    pub fn is_optimal(&self) -> bool {
        self.status == SolveStatus::Optimal
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ExactSolver {
    budget: Budget,
    symmetry_breaking: bool,
}

impl Default for ExactSolver {
    fn default() -> Self {
        Self::new(Budget::default())
    }
}

impl ExactSolver {
    pub fn new(budget: Budget) -> Self {
        Self {
            budget,
            symmetry_breaking: true,
        }
    }

    pub fn symmetry_breaking(mut self, enabled: bool) -> Self {
        self.symmetry_breaking = enabled;
        self
    }

    pub fn solve(&self, mode: PackMode, items: &[Fragment], geometry: TileGeometry) -> ExactOutcome {
        match mode {
            PackMode::Dense => self.dense(items, geometry),
            PackMode::Pipeline => self.pipeline(items, geometry),
        }
    }

    pub fn dense(&self, items: &[Fragment], geometry: TileGeometry) -> ExactOutcome {
        let start = Instant::now();
        let order = sorted_order(items, |a, b| {
            b.p_out.cmp(&a.p_out).then(b.p_in.cmp(&a.p_in))
        });
        let sorted: Vec<Fragment> = order.iter().map(|&i| items[i]).collect();
        let incumbent = pack_dense_greedy(&sorted, geometry, FitPolicy::FirstFit);
        let lower_bound = dense_root_bound(&sorted, geometry);

        let mut search = DenseSearch::new(&sorted, geometry, self, incumbent.bin_count, start);
        let mut best = remap(incumbent, &order);
        if best.bin_count > lower_bound && items.len() <= self.budget.max_items {
            search.lower_bound = lower_bound;
            search.run(0);
            if let Some(found) = search.best.take() {
                best = remap(found, &order);
            }
        }
        let status = status(best.bin_count, lower_bound, items.len(), self.budget, search.exhausted);
        ExactOutcome {
            result: best,
            status,
            nodes: search.nodes,
            elapsed: start.elapsed(),
            lower_bound,
        }
    }

    pub fn pipeline(&self, items: &[Fragment], geometry: TileGeometry) -> ExactOutcome {
        let start = Instant::now();
        let (nr, nc) = (u64::from(geometry.n_row), u64::from(geometry.n_col));
        // Largest normalized footprint first.
        let order = sorted_order(items, |a, b| {
            let wa = u64::from(a.p_in) * nc + u64::from(a.p_out) * nr;
            let wb = u64::from(b.p_in) * nc + u64::from(b.p_out) * nr;
            wb.cmp(&wa)
                .then(b.p_out.cmp(&a.p_out))
                .then(b.p_in.cmp(&a.p_in))
        });
        let sorted: Vec<Fragment> = order.iter().map(|&i| items[i]).collect();
        let mut greedy_order = sorted.clone();
        sort_in_place(&mut greedy_order, SortKey::ColDescRowDesc);
        let incumbent = {
            let a = pack_pipeline_greedy(&sorted, geometry, FitPolicy::FirstFit);
            let b = pack_pipeline_greedy(&greedy_order, geometry, FitPolicy::FirstFit);
            if b.bin_count < a.bin_count {
                // Re-express in terms of `sorted` indices.
                let back = sorted_index_of(&sorted, &greedy_order);
                let placements = b
                    .placements
                    .into_iter()
                    .map(|p| Placement { item: back[p.item], ..p })
                    .collect();
                PackingResult::new(PackMode::Pipeline, geometry, placements)
            } else {
                a
            }
        };
        let lower_bound = pipeline_root_bound(&sorted, geometry);

        let mut search = PipelineSearch::new(&sorted, geometry, self, incumbent.bin_count, start);
        let mut best = remap(incumbent, &order);
        if best.bin_count > lower_bound && items.len() <= self.budget.max_items {
            search.lower_bound = lower_bound;
            search.run(0);
            if let Some(found) = search.best.take() {
                best = remap(found, &order);
            }
        }
        let status = status(best.bin_count, lower_bound, items.len(), self.budget, search.exhausted);
        ExactOutcome {
            result: best,
            status,
            nodes: search.nodes,
            elapsed: start.elapsed(),
            lower_bound,
        }
    }
}

pub fn pack_dense_exact(items: &[Fragment], geometry: TileGeometry, budget: Budget) -> ExactOutcome {
    ExactSolver::new(budget).dense(items, geometry)
}

pub fn pack_pipeline_exact(items: &[Fragment], geometry: TileGeometry, budget: Budget) -> ExactOutcome {
    ExactSolver::new(budget).pipeline(items, geometry)
}

fn status(bins: usize, lower_bound: usize, n: usize, budget: Budget, exhausted: bool) -> SolveStatus {
    if bins <= lower_bound {
        SolveStatus::Optimal
    } else if n > budget.max_items {
        SolveStatus::TooManyItems
    } else if exhausted {
        SolveStatus::BudgetExhausted
    } else {
        SolveStatus::Optimal
    }
}

fn sorted_order(items: &[Fragment], cmp: impl Fn(&Fragment, &Fragment) -> std::cmp::Ordering) -> Vec<usize> {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| cmp(&items[a], &items[b]));
    order
}

/// For each element of `permuted`, its index in `base` (both hold the same
/// multiset; equal fragments are matched first-come).
fn sorted_index_of(base: &[Fragment], permuted: &[Fragment]) -> Vec<usize> {
    let mut used = vec![false; base.len()];
    permuted
        .iter()
        .map(|f| {
            let i = (0..base.len())
                .find(|&i| !used[i] && base[i] == *f)
                .expect("permutation of the same fragments");
            used[i] = true;
            i
        })
        .collect()
}

fn remap(result: PackingResult, order: &[usize]) -> PackingResult {
    let placements = result
        .placements
        .into_iter()
        .map(|p| Placement {
            item: order[p.item],
            ..p
        })
        .collect();
    PackingResult::new(result.mode, result.geometry, placements)
}

fn dense_root_bound(items: &[Fragment], g: TileGeometry) -> usize {
    // Items wider than half a tile in both axes can never share a tile.
    let big = items
        .iter()
        .filter(|f| 2 * f.p_in > g.n_row && 2 * f.p_out > g.n_col)
        .count();
    super::dense_lower_bound(items, g).max(big)
}

fn pipeline_root_bound(items: &[Fragment], g: TileGeometry) -> usize {
    let tall = items.iter().filter(|f| 2 * f.p_in > g.n_row).count();
    let wide = items.iter().filter(|f| 2 * f.p_out > g.n_col).count();
    super::pipeline_lower_bound(items, g).max(tall).max(wide)
}

const CLOCK_INTERVAL: u64 = 4096;

struct Limits {
    max_nodes: u64,
    deadline: Instant,
}

impl Limits {
    fn new(budget: Budget, start: Instant) -> Self {
        Self {
            max_nodes: budget.max_nodes,
            deadline: start + budget.time_limit,
        }
    }

    fn exceeded(&self, nodes: u64) -> bool {
        nodes >= self.max_nodes || (nodes.is_multiple_of(CLOCK_INTERVAL) && Instant::now() >= self.deadline)
    }
}

#[derive(Clone, Copy)]
struct Level {
    bin: usize,
    base: u32,
    used_rows: u32,
}

struct DenseSearch<'a> {
    items: &'a [Fragment],
    g: TileGeometry,
    symmetry: bool,
    limits: Limits,
    /// Area of items `j..`.
    suffix_area: Vec<u64>,
    levels: Vec<Level>,
    /// Stacked height and held area per bin.
    bins: Vec<(u32, u64)>,
    level_of: Vec<usize>,
    row_of: Vec<u32>,
    best_bins: usize,
    best: Option<PackingResult>,
    lower_bound: usize,
    nodes: u64,
    exhausted: bool,
}

impl<'a> DenseSearch<'a> {
    fn new(items: &'a [Fragment], g: TileGeometry, solver: &ExactSolver, incumbent: usize, start: Instant) -> Self {
        let mut suffix_area = vec![0u64; items.len() + 1];
        for j in (0..items.len()).rev() {
            suffix_area[j] = suffix_area[j + 1] + items[j].area();
        }
        Self {
            items,
            g,
            symmetry: solver.symmetry_breaking,
            limits: Limits::new(solver.budget, start),
            suffix_area,
            levels: Vec::new(),
            bins: Vec::new(),
            level_of: vec![0; items.len()],
            row_of: vec![0; items.len()],
            best_bins: incumbent,
            best: None,
            lower_bound: 0,
            nodes: 0,
            exhausted: false,
        }
    }

    fn done(&self) -> bool {
        self.exhausted || self.best_bins <= self.lower_bound
    }

    fn run(&mut self, j: usize) {
        self.nodes += 1;
        if self.limits.exceeded(self.nodes) {
            self.exhausted = true;
            return;
        }
        if j == self.items.len() {
            if self.bins.len() < self.best_bins {
                self.best_bins = self.bins.len();
                self.best = Some(self.snapshot());
            }
            return;
        }
        let cap = self.g.capacity();
        let held: u64 = self.bins.iter().map(|b| b.1).sum();
        let free = self.bins.len() as u64 * cap - held;
        let overflow = self.suffix_area[j].saturating_sub(free);
        if self.bins.len() + overflow.div_ceil(cap) as usize >= self.best_bins {
            return;
        }

        let f = self.items[j];
        let first_level = if self.symmetry && j > 0 && same_shape(&self.items[j - 1], &f) {
            self.level_of[j - 1]
        } else {
            0
        };

        for l in first_level..self.levels.len() {
            if self.levels[l].used_rows + f.p_in > self.g.n_row {
                continue;
            }
            let level = self.levels[l];
            self.level_of[j] = l;
            self.row_of[j] = level.used_rows;
            self.levels[l].used_rows += f.p_in;
            self.bins[level.bin].1 += f.area();
            self.run(j + 1);
            self.levels[l].used_rows -= f.p_in;
            self.bins[level.bin].1 -= f.area();
            if self.done() {
                return;
            }
        }

        for b in 0..self.bins.len() {
            if self.bins[b].0 + f.p_out > self.g.n_col {
                continue;
            }
            self.open_level(j, b);
            self.run(j + 1);
            self.close_level(j, b);
            if self.done() {
                return;
            }
        }

        if self.bins.len() + 1 < self.best_bins {
            self.bins.push((0, 0));
            let b = self.bins.len() - 1;
            self.open_level(j, b);
            self.run(j + 1);
            self.close_level(j, b);
            self.bins.pop();
        }
    }

    fn open_level(&mut self, j: usize, bin: usize) {
        let f = self.items[j];
        self.levels.push(Level {
            bin,
            base: self.bins[bin].0,
            used_rows: f.p_in,
        });
        self.bins[bin].0 += f.p_out;
        self.bins[bin].1 += f.area();
        self.level_of[j] = self.levels.len() - 1;
        self.row_of[j] = 0;
    }

    fn close_level(&mut self, j: usize, bin: usize) {
        let f = self.items[j];
        self.levels.pop();
        self.bins[bin].0 -= f.p_out;
        self.bins[bin].1 -= f.area();
    }

    fn snapshot(&self) -> PackingResult {
        // Per-bin shelf numbering in level-creation order.
        let mut local = Vec::with_capacity(self.levels.len());
        let mut per_bin = vec![0usize; self.bins.len()];
        for level in &self.levels {
            local.push(per_bin[level.bin]);
            per_bin[level.bin] += 1;
        }
        let placements = (0..self.items.len())
            .map(|j| {
                let level = self.levels[self.level_of[j]];
                Placement {
                    item: j,
                    fragment: self.items[j],
                    bin: level.bin,
                    shelf: Some(local[self.level_of[j]]),
                    row: self.row_of[j],
                    col: level.base,
                }
            })
            .collect();
        PackingResult::new(PackMode::Dense, self.g, placements)
    }
}

struct PipelineSearch<'a> {
    items: &'a [Fragment],
    g: TileGeometry,
    symmetry: bool,
    limits: Limits,
    suffix_rows: Vec<u64>,
    suffix_cols: Vec<u64>,
    /// Used (rows, cols) per bin.
    bins: Vec<(u32, u32)>,
    bin_of: Vec<usize>,
    origin_of: Vec<(u32, u32)>,
    best_bins: usize,
    best: Option<PackingResult>,
    lower_bound: usize,
    nodes: u64,
    exhausted: bool,
}

impl<'a> PipelineSearch<'a> {
    fn new(items: &'a [Fragment], g: TileGeometry, solver: &ExactSolver, incumbent: usize, start: Instant) -> Self {
        let n = items.len();
        let mut suffix_rows = vec![0u64; n + 1];
        let mut suffix_cols = vec![0u64; n + 1];
        for j in (0..n).rev() {
            suffix_rows[j] = suffix_rows[j + 1] + u64::from(items[j].p_in);
            suffix_cols[j] = suffix_cols[j + 1] + u64::from(items[j].p_out);
        }
        Self {
            items,
            g,
            symmetry: solver.symmetry_breaking,
            limits: Limits::new(solver.budget, start),
            suffix_rows,
            suffix_cols,
            bins: Vec::new(),
            bin_of: vec![0; n],
            origin_of: vec![(0, 0); n],
            best_bins: incumbent,
            best: None,
            lower_bound: 0,
            nodes: 0,
            exhausted: false,
        }
    }

    fn done(&self) -> bool {
        self.exhausted || self.best_bins <= self.lower_bound
    }

    fn run(&mut self, j: usize) {
        self.nodes += 1;
        if self.limits.exceeded(self.nodes) {
            self.exhausted = true;
            return;
        }
        if j == self.items.len() {
            if self.bins.len() < self.best_bins {
                self.best_bins = self.bins.len();
                self.best = Some(self.snapshot());
            }
            return;
        }
        let (nr, nc) = (u64::from(self.g.n_row), u64::from(self.g.n_col));
        let open = self.bins.len() as u64;
        let free_rows = open * nr - self.bins.iter().map(|b| u64::from(b.0)).sum::<u64>();
        let free_cols = open * nc - self.bins.iter().map(|b| u64::from(b.1)).sum::<u64>();
        let extra = self.suffix_rows[j]
            .saturating_sub(free_rows)
            .div_ceil(nr)
            .max(self.suffix_cols[j].saturating_sub(free_cols).div_ceil(nc));
        if self.bins.len() + extra as usize >= self.best_bins {
            return;
        }

        let f = self.items[j];
        let first_bin = if self.symmetry && j > 0 && same_shape(&self.items[j - 1], &f) {
            self.bin_of[j - 1]
        } else {
            0
        };
        for b in first_bin..self.bins.len() {
            let (r, c) = self.bins[b];
            if r + f.p_in > self.g.n_row || c + f.p_out > self.g.n_col {
                continue;
            }
            self.bin_of[j] = b;
            self.origin_of[j] = (r, c);
            self.bins[b] = (r + f.p_in, c + f.p_out);
            self.run(j + 1);
            self.bins[b] = (r, c);
            if self.done() {
                return;
            }
        }
        if self.bins.len() + 1 < self.best_bins {
            self.bin_of[j] = self.bins.len();
            self.origin_of[j] = (0, 0);
            self.bins.push((f.p_in, f.p_out));
            self.run(j + 1);
            self.bins.pop();
        }
    }

    fn snapshot(&self) -> PackingResult {
        let placements = (0..self.items.len())
            .map(|j| Placement {
                item: j,
                fragment: self.items[j],
                bin: self.bin_of[j],
                shelf: None,
                row: self.origin_of[j].0,
                col: self.origin_of[j].1,
            })
            .collect();
        PackingResult::new(PackMode::Pipeline, self.g, placements)
    }
}

fn same_shape(a: &Fragment, b: &Fragment) -> bool {
    a.p_in == b.p_in && a.p_out == b.p_out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::packing::{check_feasibility, pack_greedy};
    use crate::packing::testing::thirteen_items;

    #[test]
    fn worked_instance_optima() {
        let (items, g) = thirteen_items();
        let dense = pack_dense_exact(&items, g, Budget::default());
        assert_eq!(dense.result.bin_count, 2);
        assert!(dense.is_optimal());
        check_feasibility(&dense.result, &items).unwrap();

        let pipe = pack_pipeline_exact(&items, g, Budget::default());
        assert_eq!(pipe.result.bin_count, 4);
        assert!(pipe.is_optimal());
        check_feasibility(&pipe.result, &items).unwrap();
    }

    #[test]
    fn single_item_needs_one_bin() {
        let g = TileGeometry::new(64, 32).unwrap();
        let items = [Fragment::item(0, 10, 30, g)];
        for mode in [PackMode::Dense, PackMode::Pipeline] {
            let out = ExactSolver::default().solve(mode, &items, g);
            assert_eq!(out.result.bin_count, 1);
            assert!(out.is_optimal());
        }
    }

    #[test]
    fn full_tiles_one_per_bin() {
        let g = TileGeometry::new(16, 16).unwrap();
        let items: Vec<_> = (0..4).map(|i| Fragment::item(i, 16, 16, g)).collect();
        let out = ExactSolver::default().pipeline(&items, g);
        assert_eq!(out.result.bin_count, 4);
    }

    fn greedy_bins(mode: PackMode, items: &[Fragment], g: TileGeometry) -> usize {
        let mut sorted = items.to_vec();
        sort_in_place(&mut sorted, SortKey::ColDescRowDesc);
        pack_greedy(mode, &sorted, g, FitPolicy::FirstFit).bin_count
    }

    #[test]
    fn pipeline_search_improves_on_greedy() {
        // Greedy strands (6,1) in a third bin; {(3,7),(6,1)} and
        // {(5,5),(2,3)} share two.
        let g = TileGeometry::square(10).unwrap();
        let items: Vec<_> = [(2, 3), (5, 5), (3, 7), (6, 1)]
            .iter()
            .enumerate()
            .map(|(i, &(r, c))| Fragment::item(i, r, c, g))
            .collect();
        assert_eq!(greedy_bins(PackMode::Pipeline, &items, g), 3);
        let exact = ExactSolver::default().pipeline(&items, g);
        assert_eq!(exact.result.bin_count, 2);
        assert!(exact.is_optimal());
        check_feasibility(&exact.result, &items).unwrap();
    }

    #[test]
    fn dense_search_improves_on_greedy() {
        // Greedy pairs (5,10) with (2,9); the optimum pairs it with (5,7)
        // in one shelf and stacks (8,7),(2,9) under a height-9 shelf.
        let g = TileGeometry::square(10).unwrap();
        let items: Vec<_> = [(5, 7), (5, 10), (8, 7), (2, 9)]
            .iter()
            .enumerate()
            .map(|(i, &(r, c))| Fragment::item(i, r, c, g))
            .collect();
        assert_eq!(greedy_bins(PackMode::Dense, &items, g), 3);
        let exact = ExactSolver::default().dense(&items, g);
        assert_eq!(exact.result.bin_count, 2);
        assert!(exact.is_optimal());
        check_feasibility(&exact.result, &items).unwrap();
    }

    #[test]
    fn item_limit_falls_back_to_greedy() {
        let g = TileGeometry::square(100).unwrap();
        let items: Vec<_> = (0..12).map(|i| Fragment::item(i, 30 + i as u32, 41, g)).collect();
        let budget = Budget {
            max_items: 5,
            ..Budget::default()
        };
        let out = pack_pipeline_exact(&items, g, budget);
        assert_eq!(out.nodes, 0);
        assert_ne!(out.status, SolveStatus::BudgetExhausted);
        check_feasibility(&out.result, &items).unwrap();
    }

    #[test]
    fn node_budget_is_respected() {
        let g = TileGeometry::square(100).unwrap();
        let items: Vec<_> = (0..20)
            .map(|i| Fragment::item(i, 21 + (i as u32 * 7) % 30, 17 + (i as u32 * 11) % 40, g))
            .collect();
        let budget = Budget {
            max_nodes: 50,
            ..Budget::default()
        };
        let out = pack_dense_exact(&items, g, budget);
        assert!(out.nodes <= 50);
        check_feasibility(&out.result, &items).unwrap();
        if out.status == SolveStatus::BudgetExhausted {
            assert!(out.result.bin_count > out.lower_bound);
        }
    }
}
