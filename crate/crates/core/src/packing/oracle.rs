//! Exhaustive reference solver for small instances.
//!
//! Enumerates every set partition of the items into bins and keeps the
//! smallest one in which every bin is feasible on its own. Bin feasibility is
//! also decided by enumeration: for dense packing a bin is feasible when some
//! partition of its items into shelves fits (each shelf's input extents add
//! up to at most `n_row`, the shelves' tallest members add up to at most
//! `n_col`); for pipeline packing it is the two sum constraints. No ordering,
//! bounds or incumbents from the branch-and-bound solvers are used.

use super::PackMode;
use crate::error::{Error, Result};
use crate::fragment::{Fragment, TileGeometry};

pub const MAX_ORACLE_ITEMS: usize = 10;

pub fn brute_force_oracle(items: &[Fragment], geometry: TileGeometry, mode: PackMode) -> Result<usize> {
    let n = items.len();
    if n > MAX_ORACLE_ITEMS {
        return Err(Error::OracleTooLarge {
            max: MAX_ORACLE_ITEMS,
            got: n,
        });
    }
    if n == 0 {
        return Ok(0);
    }
    let feasible: Vec<bool> = (0..1usize << n)
        .map(|mask| {
            let members: Vec<&Fragment> = (0..n).filter(|i| mask >> i & 1 == 1).map(|i| &items[i]).collect();
            match mode {
                PackMode::Dense => shelves_fit(&members, geometry),
                PackMode::Pipeline => {
                    members.iter().map(|f| u64::from(f.p_in)).sum::<u64>() <= u64::from(geometry.n_row)
                        && members.iter().map(|f| u64::from(f.p_out)).sum::<u64>() <= u64::from(geometry.n_col)
                }
            }
        })
        .collect();

    let mut best = n;
    let mut blocks: Vec<usize> = Vec::with_capacity(n);
    partitions(0, n, &feasible, &mut blocks, &mut best);
    Ok(best)
}

/// Restricted-growth enumeration: item `i` joins one of the existing blocks
/// or starts a new one. A block that is already infeasible stays infeasible
/// when items are added, so such branches are cut.
fn partitions(i: usize, n: usize, feasible: &[bool], blocks: &mut Vec<usize>, best: &mut usize) {
    if i == n {
        *best = (*best).min(blocks.len());
        return;
    }
    for b in 0..blocks.len() {
        let grown = blocks[b] | 1 << i;
        if feasible[grown] {
            let old = blocks[b];
            blocks[b] = grown;
            partitions(i + 1, n, feasible, blocks, best);
            blocks[b] = old;
        }
    }
    if blocks.len() < *best {
        blocks.push(1 << i);
        partitions(i + 1, n, feasible, blocks, best);
        blocks.pop();
    }
}

/// Whether `members` can be split into shelves that fit one tile.
fn shelves_fit(members: &[&Fragment], g: TileGeometry) -> bool {
    if members.iter().any(|f| !g.holds(f.p_in, f.p_out)) {
        return false;
    }
    // (Σ p_in, max p_out) per shelf.
    let mut shelves: Vec<(u64, u32)> = Vec::new();
    assign_shelves(0, members, g, &mut shelves)
}

fn assign_shelves(i: usize, members: &[&Fragment], g: TileGeometry, shelves: &mut Vec<(u64, u32)>) -> bool {
    let stacked: u64 = shelves.iter().map(|s| u64::from(s.1)).sum();
    if stacked > u64::from(g.n_col) {
        return false;
    }
    if i == members.len() {
        return true;
    }
    let f = members[i];
    for s in 0..shelves.len() {
        let (rows, height) = shelves[s];
        if rows + u64::from(f.p_in) > u64::from(g.n_row) {
            continue;
        }
        shelves[s] = (rows + u64::from(f.p_in), height.max(f.p_out));
        let ok = assign_shelves(i + 1, members, g, shelves);
        shelves[s] = (rows, height);
        if ok {
            return true;
        }
    }
    shelves.push((u64::from(f.p_in), f.p_out));
    let ok = assign_shelves(i + 1, members, g, shelves);
    shelves.pop();
    ok
}
