//! Assigning fragments to tiles.
//!
//! Coordinates inside a bin are `(row, col)` offsets from the lower-left
//! corner: rows run up the input axis, columns run right along the output
//! axis. A fragment at `(row, col)` covers input lines `row..row + p_in` and
//! output lines `col..col + p_out`.
//!
//! Dense packing arranges fragments on shelves. A shelf spans the input axis
//! (its members' `p_in` add up to at most `n_row`) and its height is
//! measured along the output axis; shelves are stacked until their heights
//! reach `n_col`. Fragments on a dense tile may share input or output lines.
//!
//! Pipeline packing puts fragments corner to corner so no two share an
//! input or an output line, which turns the problem into two-resource bin
//! packing.

mod exact;
mod greedy;
mod oracle;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::error::Error;
use crate::fragment::{Fragment, TileGeometry};

pub use exact::{pack_dense_exact, pack_pipeline_exact, Budget, ExactOutcome, ExactSolver, SolveStatus};
pub use greedy::{pack_dense_greedy, pack_greedy, pack_pipeline_greedy};
pub use oracle::{brute_force_oracle, MAX_ORACLE_ITEMS};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum PackMode {
    Dense,
    Pipeline,
}

impl PackMode {
    pub fn as_str(&self) -> &'static str {
        match self {
            PackMode::Dense => "dense",
            PackMode::Pipeline => "pipeline",
        }
    }
}

impl fmt::Display for PackMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PackMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "dense" => Ok(PackMode::Dense),
            "pipeline" => Ok(PackMode::Pipeline),
            _ => Err(Error::Config(format!(
                "unknown mode `{s}` (expected dense or pipeline)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FitPolicy {
    /// Try every open shelf/bin in creation order.
    #[default]
    FirstFit,
    /// Only the most recently opened shelf/bin.
    NextFit,
}

impl fmt::Display for FitPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FitPolicy::FirstFit => "first-fit",
            FitPolicy::NextFit => "next-fit",
        })
    }
}

impl FromStr for FitPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s {
            "first-fit" => Ok(FitPolicy::FirstFit),
            "next-fit" => Ok(FitPolicy::NextFit),
            _ => Err(Error::Config(format!(
                "unknown fit policy `{s}` (expected first-fit or next-fit)"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    /// Index of the fragment in the packer's input slice.
    pub item: usize,
    pub fragment: Fragment,
    pub bin: usize,
    /// Shelf index within the bin (dense packings only).
    pub shelf: Option<usize>,
    pub row: u32,
    pub col: u32,
}

impl Placement {
    fn rows(&self) -> (u32, u32) {
        (self.row, self.row + self.fragment.p_in)
    }

    fn cols(&self) -> (u32, u32) {
        (self.col, self.col + self.fragment.p_out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PackingResult {
    pub mode: PackMode,
    pub geometry: TileGeometry,
    pub placements: Vec<Placement>,
    pub bin_count: usize,
    /// Stored weights over provisioned cross-points.
    pub fill_ratio: f64,
}

impl PackingResult {
    pub fn new(mode: PackMode, geometry: TileGeometry, mut placements: Vec<Placement>) -> Self {
        placements.sort_by_key(|p| (p.bin, p.shelf, p.col, p.row, p.item));
        let bin_count = placements.iter().map(|p| p.bin + 1).max().unwrap_or(0);
        let used: u64 = placements.iter().map(|p| p.fragment.area()).sum();
        let provisioned = bin_count as u64 * geometry.capacity();
        let fill_ratio = if provisioned == 0 {
            0.0
        } else {
            used as f64 / provisioned as f64
        };
        Self {
            mode,
            geometry,
            placements,
            bin_count,
            fill_ratio,
        }
    }

    /// Placements grouped per bin, in bin order.
    pub fn bins(&self) -> Vec<Vec<&Placement>> {
        let mut bins = vec![Vec::new(); self.bin_count];
        for p in &self.placements {
            bins[p.bin].push(p);
        }
        bins
    }

    /// Cross-points not holding any weight.
    pub fn dead_area(&self) -> u64 {
        let used: u64 = self.placements.iter().map(|p| p.fragment.area()).sum();
        self.bin_count as u64 * self.geometry.capacity() - used
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FeasibilityError {
    #[error("item {0} is not placed")]
    Missing(usize),
    #[error("item {0} is placed more than once")]
    Duplicate(usize),
    #[error("placement refers to unknown item {0}")]
    UnknownItem(usize),
    #[error("item {0} placement does not match its fragment")]
    Mismatch(usize),
    #[error("item {0} extends past the tile boundary")]
    OutOfBounds(usize),
    #[error("items {0} and {1} overlap")]
    Overlap(usize, usize),
    #[error("items {0} and {1} share input or output lines")]
    SharedLines(usize, usize),
    #[error("bin {0} is empty")]
    EmptyBin(usize),
    #[error("dense placement of item {0} has no shelf")]
    NoShelf(usize),
    #[error("bin {bin} shelf {shelf} is infeasible: {reason}")]
    Shelf {
        bin: usize,
        shelf: usize,
        reason: &'static str,
    },
}

fn intervals_overlap(a: (u32, u32), b: (u32, u32)) -> bool {
    a.0 < b.1 && b.0 < a.1
}

/// Re-derives every packing constraint from the placements alone.
pub fn check_feasibility(result: &PackingResult, items: &[Fragment]) -> Result<(), FeasibilityError> {
    let g = result.geometry;
    let mut seen = vec![false; items.len()];
    for p in &result.placements {
        let slot = seen.get_mut(p.item).ok_or(FeasibilityError::UnknownItem(p.item))?;
        if *slot {
            return Err(FeasibilityError::Duplicate(p.item));
        }
        *slot = true;
        let f = &items[p.item];
        if (f.p_in, f.p_out, f.layer_id, f.replica_idx) != (p.fragment.p_in, p.fragment.p_out, p.fragment.layer_id, p.fragment.replica_idx) {
            return Err(FeasibilityError::Mismatch(p.item));
        }
        if u64::from(p.row) + u64::from(f.p_in) > u64::from(g.n_row)
            || u64::from(p.col) + u64::from(f.p_out) > u64::from(g.n_col)
        {
            return Err(FeasibilityError::OutOfBounds(p.item));
        }
    }
    if let Some(missing) = seen.iter().position(|s| !s) {
        return Err(FeasibilityError::Missing(missing));
    }

    for (bin, members) in result.bins().iter().enumerate() {
        if members.is_empty() {
            return Err(FeasibilityError::EmptyBin(bin));
        }
        for (i, a) in members.iter().enumerate() {
            for b in &members[i + 1..] {
                let rows = intervals_overlap(a.rows(), b.rows());
                let cols = intervals_overlap(a.cols(), b.cols());
                match result.mode {
                    PackMode::Dense if rows && cols => {
                        return Err(FeasibilityError::Overlap(a.item, b.item))
                    }
                    PackMode::Pipeline if rows || cols => {
                        return Err(FeasibilityError::SharedLines(a.item, b.item))
                    }
                    _ => {}
                }
            }
        }
        if result.mode == PackMode::Dense {
            check_shelves(bin, members, g)?;
        }
    }
    Ok(())
}

fn check_shelves(bin: usize, members: &[&Placement], g: TileGeometry) -> Result<(), FeasibilityError> {
    let mut shelves: Vec<(usize, u32, u32, u64)> = Vec::new(); // (id, base col, height, Σ p_in)
    for p in members {
        let shelf = p.shelf.ok_or(FeasibilityError::NoShelf(p.item))?;
        match shelves.iter_mut().find(|s| s.0 == shelf) {
            Some(s) => {
                s.1 = s.1.min(p.col);
                s.2 = s.2.max(p.col + p.fragment.p_out);
                s.3 += u64::from(p.fragment.p_in);
            }
            None => shelves.push((shelf, p.col, p.col + p.fragment.p_out, u64::from(p.fragment.p_in))),
        }
    }
    let mut height_sum = 0u64;
    for &(shelf, base, top, rows) in &shelves {
        if rows > u64::from(g.n_row) {
            return Err(FeasibilityError::Shelf {
                bin,
                shelf,
                reason: "row extents exceed the tile",
            });
        }
        height_sum += u64::from(top - base);
        if members
            .iter()
            .any(|p| p.shelf == Some(shelf) && p.col != base)
        {
            return Err(FeasibilityError::Shelf {
                bin,
                shelf,
                reason: "members do not share the shelf base",
            });
        }
    }
    if height_sum > u64::from(g.n_col) {
        return Err(FeasibilityError::Shelf {
            bin,
            shelf: shelves.last().map(|s| s.0).unwrap_or(0),
            reason: "stacked shelf heights exceed the tile",
        });
    }
    Ok(())
}

/// `⌈Σ area / capacity⌉`.
pub fn dense_lower_bound(items: &[Fragment], geometry: TileGeometry) -> usize {
    let area: u64 = items.iter().map(Fragment::area).sum();
    area.div_ceil(geometry.capacity()) as usize
}

/// `max(⌈Σ p_in / n_row⌉, ⌈Σ p_out / n_col⌉)`.
pub fn pipeline_lower_bound(items: &[Fragment], geometry: TileGeometry) -> usize {
    let rows: u64 = items.iter().map(|f| u64::from(f.p_in)).sum();
    let cols: u64 = items.iter().map(|f| u64::from(f.p_out)).sum();
    rows.div_ceil(u64::from(geometry.n_row))
        .max(cols.div_ceil(u64::from(geometry.n_col))) as usize
}

pub fn lower_bound(mode: PackMode, items: &[Fragment], geometry: TileGeometry) -> usize {
    match mode {
        PackMode::Dense => dense_lower_bound(items, geometry),
        PackMode::Pipeline => pipeline_lower_bound(items, geometry),
    }
}

/// Baseline with every fragment on its own tile.
pub fn pack_one_to_one(mode: PackMode, items: &[Fragment], geometry: TileGeometry) -> PackingResult {
    let placements = items
        .iter()
        .enumerate()
        .map(|(i, f)| Placement {
            item: i,
            fragment: *f,
            bin: i,
            shelf: (mode == PackMode::Dense).then_some(0),
            row: 0,
            col: 0,
        })
        .collect();
    PackingResult::new(mode, geometry, placements)
}


#[cfg(test)]
mod tests {
    use super::testing::thirteen_items;
    use super::*;

    #[test]
    fn lower_bounds_on_worked_instance() {
        let (items, g) = thirteen_items();
        assert_eq!(dense_lower_bound(&items, g), 2);
        assert_eq!(pipeline_lower_bound(&items, g), 4);
    }

    #[test]
    fn checker_rejects_shared_lines_in_pipeline_mode() {
        let g = TileGeometry::square(512).unwrap();
        let items = vec![Fragment::item(0, 100, 100, g), Fragment::item(1, 100, 100, g)];
        let placements = vec![
            Placement { item: 0, fragment: items[0], bin: 0, shelf: None, row: 0, col: 0 },
            Placement { item: 1, fragment: items[1], bin: 0, shelf: None, row: 0, col: 100 },
        ];
        let r = PackingResult::new(PackMode::Pipeline, g, placements.clone());
        assert_eq!(check_feasibility(&r, &items), Err(FeasibilityError::SharedLines(0, 1)));

        // Same layout is fine for a dense tile once shelves are declared.
        let dense: Vec<_> = placements
            .into_iter()
            .enumerate()
            .map(|(i, p)| Placement { shelf: Some(i), ..p })
            .collect();
        let r = PackingResult::new(PackMode::Dense, g, dense);
        assert_eq!(check_feasibility(&r, &items), Ok(()));
    }

    #[test]
    fn checker_rejects_missing_and_out_of_bounds() {
        let g = TileGeometry::square(64).unwrap();
        let items = vec![Fragment::item(0, 40, 40, g), Fragment::item(1, 40, 40, g)];
        let one = vec![Placement { item: 0, fragment: items[0], bin: 0, shelf: Some(0), row: 0, col: 0 }];
        let r = PackingResult::new(PackMode::Dense, g, one);
        assert_eq!(check_feasibility(&r, &items), Err(FeasibilityError::Missing(1)));

        let oob = vec![
            Placement { item: 0, fragment: items[0], bin: 0, shelf: Some(0), row: 30, col: 0 },
            Placement { item: 1, fragment: items[1], bin: 1, shelf: Some(0), row: 0, col: 0 },
        ];
        let r = PackingResult::new(PackMode::Dense, g, oob);
        assert_eq!(check_feasibility(&r, &items), Err(FeasibilityError::OutOfBounds(0)));
    }

    #[test]
    fn one_to_one_uses_a_tile_per_fragment() {
        let (items, g) = thirteen_items();
        let r = pack_one_to_one(PackMode::Pipeline, &items, g);
        assert_eq!(r.bin_count, 13);
        assert_eq!(check_feasibility(&r, &items), Ok(()));
    }
}
