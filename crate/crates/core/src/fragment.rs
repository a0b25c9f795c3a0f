//! Cutting logical layers into tile-sized blocks.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::network::LogicalLayer;

/// Capacity of one crossbar array: `n_row` input lines by `n_col` output lines.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct TileGeometry {
    pub n_row: u32,
    pub n_col: u32,
}

impl TileGeometry {
    pub fn new(n_row: u32, n_col: u32) -> Result<Self> {
        if n_row == 0 || n_col == 0 {
            return Err(Error::InvalidGeometry {
                rows: n_row,
                cols: n_col,
            });
        }
        Ok(Self { n_row, n_col })
    }

    pub fn square(n: u32) -> Result<Self> {
        Self::new(n, n)
    }

    pub fn capacity(&self) -> u64 {
        u64::from(self.n_row) * u64::from(self.n_col)
    }

    pub fn holds(&self, p_in: u32, p_out: u32) -> bool {
        p_in <= self.n_row && p_out <= self.n_col
    }
}

impl fmt::Display for TileGeometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}x{}", self.n_row, self.n_col)
    }
}

impl FromStr for TileGeometry {
    type Err = Error;

    /// Parses `ROWSxCOLS`, e.g. `512x512`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("tile `{s}` must look like ROWSxCOLS, e.g. 512x512"));
        let (r, c) = s
            .split_once(['x', 'X'])
            .ok_or_else(bad)?;
        let r: u32 = r.trim().parse().map_err(|_| bad())?;
        let c: u32 = c.trim().parse().map_err(|_| bad())?;
        Self::new(r, c)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FragmentKind {
    /// Both dimensions fill the tile.
    FullyMapped,
    /// All input lines used, output lines left over.
    RowFull,
    /// All output lines used, input lines left over.
    ColFull,
    /// Neither dimension fills the tile.
    Sparse,
}

impl FragmentKind {
    pub fn classify(p_in: u32, p_out: u32, geometry: TileGeometry) -> Self {
        match (p_in == geometry.n_row, p_out == geometry.n_col) {
            (true, true) => FragmentKind::FullyMapped,
            (true, false) => FragmentKind::RowFull,
            (false, true) => FragmentKind::ColFull,
            (false, false) => FragmentKind::Sparse,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            FragmentKind::FullyMapped => "fully_mapped",
            FragmentKind::RowFull => "row_full",
            FragmentKind::ColFull => "col_full",
            FragmentKind::Sparse => "sparse",
        }
    }
}

impl fmt::Display for FragmentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One rectangular block of a (replicated) layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Fragment {
    pub layer_id: usize,
    pub replica_idx: u32,
    /// Position in the layer's cut grid (row strip, column strip).
    pub grid_row: u32,
    pub grid_col: u32,
    pub p_in: u32,
    pub p_out: u32,
    pub kind: FragmentKind,
}

impl Fragment {
    /// A standalone block, e.g. for synthetic packing instances.
    pub fn item(layer_id: usize, p_in: u32, p_out: u32, geometry: TileGeometry) -> Self {
        Self {
            layer_id,
            replica_idx: 0,
            grid_row: 0,
            grid_col: 0,
            p_in,
            p_out,
            kind: FragmentKind::classify(p_in, p_out, geometry),
        }
    }

    pub fn area(&self) -> u64 {
        u64::from(self.p_in) * u64::from(self.p_out)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindCounts {
    pub fully_mapped: usize,
    pub row_full: usize,
    pub col_full: usize,
    pub sparse: usize,
}

impl KindCounts {
    pub fn tally<'a>(fragments: impl IntoIterator<Item = &'a Fragment>) -> Self {
        let mut counts = Self::default();
        for f in fragments {
            *counts.get_mut(f.kind) += 1;
        }
        counts
    }

    pub fn get(&self, kind: FragmentKind) -> usize {
        match kind {
            FragmentKind::FullyMapped => self.fully_mapped,
            FragmentKind::RowFull => self.row_full,
            FragmentKind::ColFull => self.col_full,
            FragmentKind::Sparse => self.sparse,
        }
    }

    fn get_mut(&mut self, kind: FragmentKind) -> &mut usize {
        match kind {
            FragmentKind::FullyMapped => &mut self.fully_mapped,
            FragmentKind::RowFull => &mut self.row_full,
            FragmentKind::ColFull => &mut self.col_full,
            FragmentKind::Sparse => &mut self.sparse,
        }
    }

    pub fn total(&self) -> usize {
        self.fully_mapped + self.row_full + self.col_full + self.sparse
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FragmentSet {
    pub geometry: TileGeometry,
    pub fragments: Vec<Fragment>,
    pub counts: KindCounts,
}

impl FragmentSet {
    pub fn new(geometry: TileGeometry, fragments: Vec<Fragment>) -> Self {
        let counts = KindCounts::tally(&fragments);
        Self {
            geometry,
            fragments,
            counts,
        }
    }

    pub fn len(&self) -> usize {
        self.fragments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.fragments.is_empty()
    }

    pub fn total_area(&self) -> u64 {
        self.fragments.iter().map(Fragment::area).sum()
    }

    pub fn sorted(mut self, key: SortKey) -> Self {
        sort_in_place(&mut self.fragments, key);
        self
    }
}

/// Grid cut of one layer; every replica gets the full set in turn.
pub fn fragment_layer(layer: &LogicalLayer, geometry: TileGeometry) -> Vec<Fragment> {
    let strips = |extent: u32, cap: u32| -> Vec<u32> {
        let full = extent / cap;
        let rest = extent % cap;
        let mut v = vec![cap; full as usize];
        if rest > 0 {
            v.push(rest);
        }
        v
    };
    let rows = strips(layer.m_inp, geometry.n_row);
    let cols = strips(layer.m_out, geometry.n_col);
    let mut out = Vec::with_capacity(rows.len() * cols.len() * layer.replication as usize);
    for replica_idx in 0..layer.replication.max(1) {
        for (gr, &p_in) in rows.iter().enumerate() {
            for (gc, &p_out) in cols.iter().enumerate() {
                out.push(Fragment {
                    layer_id: layer.layer_id,
                    replica_idx,
                    grid_row: gr as u32,
                    grid_col: gc as u32,
                    p_in,
                    p_out,
                    kind: FragmentKind::classify(p_in, p_out, geometry),
                });
            }
        }
    }
    out
}

pub fn fragment_network(layers: &[LogicalLayer], geometry: TileGeometry) -> FragmentSet {
    let fragments = layers
        .iter()
        .flat_map(|l| fragment_layer(l, geometry))
        .collect();
    FragmentSet::new(geometry, fragments)
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SortKey {
    /// Descending output extent, ties broken by descending input extent.
    #[default]
    ColDescRowDesc,
    RowDescColDesc,
    RowAscColAsc,
}

impl FromStr for SortKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "col-desc-row-desc" => Ok(SortKey::ColDescRowDesc),
            "row-desc-col-desc" => Ok(SortKey::RowDescColDesc),
            "row-asc-col-asc" => Ok(SortKey::RowAscColAsc),
            _ => Err(Error::Config(format!(
                "unknown sort key `{s}` (expected col-desc-row-desc, row-desc-col-desc or row-asc-col-asc)"
            ))),
        }
    }
}

impl fmt::Display for SortKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SortKey::ColDescRowDesc => "col-desc-row-desc",
            SortKey::RowDescColDesc => "row-desc-col-desc",
            SortKey::RowAscColAsc => "row-asc-col-asc",
        })
    }
}

/// Stable sort of fragments by `key`.
pub fn sort_in_place(fragments: &mut [Fragment], key: SortKey) {
    match key {
        SortKey::ColDescRowDesc => {
            fragments.sort_by(|a, b| b.p_out.cmp(&a.p_out).then(b.p_in.cmp(&a.p_in)))
        }
        SortKey::RowDescColDesc => {
            fragments.sort_by(|a, b| b.p_in.cmp(&a.p_in).then(b.p_out.cmp(&a.p_out)))
        }
        SortKey::RowAscColAsc => {
            fragments.sort_by(|a, b| a.p_in.cmp(&b.p_in).then(a.p_out.cmp(&b.p_out)))
        }
    }
}

pub fn sort_fragments(set: FragmentSet, key: SortKey) -> FragmentSet {
    set.sorted(key)
}
