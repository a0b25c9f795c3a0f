//! Shelf and staircase heuristics. Both consume the fragments in the order
//! given; sort them first (descending output extent is the default key).

use super::{FitPolicy, PackMode, PackingResult, Placement};
use crate::fragment::{Fragment, TileGeometry};

struct Shelf {
    bin: usize,
    local: usize,
    base: u32,
    height: u32,
    used_rows: u32,
}

/// Shelf packing. A fragment joins a shelf when its input extent fits the
/// remaining rows and its output extent is no taller than the shelf, which
/// holds automatically under descending-column order.
pub fn pack_dense_greedy(items: &[Fragment], geometry: TileGeometry, policy: FitPolicy) -> PackingResult {
    let mut shelves: Vec<Shelf> = Vec::new();
    // (stacked shelf height, shelf count) per bin.
    let mut bins: Vec<(u32, usize)> = Vec::new();
    let mut placements = Vec::with_capacity(items.len());

    for (item, f) in items.iter().enumerate() {
        debug_assert!(geometry.holds(f.p_in, f.p_out));
        let fits_shelf = |s: &Shelf| f.p_out <= s.height && s.used_rows + f.p_in <= geometry.n_row;
        let shelf_idx = match policy {
            FitPolicy::FirstFit => shelves.iter().position(fits_shelf),
            FitPolicy::NextFit => shelves
                .last()
                .filter(|s| fits_shelf(s))
                .map(|_| shelves.len() - 1),
        };
        let shelf_idx = shelf_idx.unwrap_or_else(|| {
            let fits_bin = |b: &(u32, usize)| b.0 + f.p_out <= geometry.n_col;
            let bin = match policy {
                FitPolicy::FirstFit => bins.iter().position(fits_bin),
                FitPolicy::NextFit => bins.last().filter(|h| fits_bin(h)).map(|_| bins.len() - 1),
            }
            .unwrap_or_else(|| {
                bins.push((0, 0));
                bins.len() - 1
            });
            shelves.push(Shelf {
                bin,
                local: bins[bin].1,
                base: bins[bin].0,
                height: f.p_out,
                used_rows: 0,
            });
            bins[bin].0 += f.p_out;
            bins[bin].1 += 1;
            shelves.len() - 1
        });

        let shelf = &mut shelves[shelf_idx];
        placements.push(Placement {
            item,
            fragment: *f,
            bin: shelf.bin,
            shelf: Some(shelf.local),
            row: shelf.used_rows,
            col: shelf.base,
        });
        shelf.used_rows += f.p_in;
    }
    PackingResult::new(PackMode::Dense, geometry, placements)
}

/// Staircase packing: each bin tracks the input and output lines consumed so
/// far and the next fragment goes diagonally above and right of the last.
pub fn pack_pipeline_greedy(items: &[Fragment], geometry: TileGeometry, policy: FitPolicy) -> PackingResult {
    // (used rows, used cols) per bin.
    let mut bins: Vec<(u32, u32)> = Vec::new();
    let mut placements = Vec::with_capacity(items.len());

    for (item, f) in items.iter().enumerate() {
        debug_assert!(geometry.holds(f.p_in, f.p_out));
        let fits = |b: &(u32, u32)| b.0 + f.p_in <= geometry.n_row && b.1 + f.p_out <= geometry.n_col;
        let bin = match policy {
            FitPolicy::FirstFit => bins.iter().position(fits),
            FitPolicy::NextFit => bins.last().filter(|b| fits(b)).map(|_| bins.len() - 1),
        }
        .unwrap_or_else(|| {
            bins.push((0, 0));
            bins.len() - 1
        });
        let (rows, cols) = bins[bin];
        placements.push(Placement {
            item,
            fragment: *f,
            bin,
            shelf: None,
            row: rows,
            col: cols,
        });
        bins[bin] = (rows + f.p_in, cols + f.p_out);
    }
    PackingResult::new(PackMode::Pipeline, geometry, placements)
}

pub fn pack_greedy(mode: PackMode, items: &[Fragment], geometry: TileGeometry, policy: FitPolicy) -> PackingResult {
    match mode {
        PackMode::Dense => pack_dense_greedy(items, geometry, policy),
        PackMode::Pipeline => pack_pipeline_greedy(items, geometry, policy),
    }
}
