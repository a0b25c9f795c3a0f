//! CSV, JSON and layout renderings. Every writer is a pure function of its
//! inputs so repeated runs produce byte-identical files.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::Result;
use crate::fragment::{FragmentSet, TileGeometry};
use crate::packing::{ExactOutcome, FitPolicy, PackMode, PackingResult, Placement, SolveStatus};
use crate::sweep::{OptimizationReport, SweepPoint};

/// Version of the JSON report layout.
pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Label for a fragment's layer: its name when known, else its index.
fn layer_label(names: &[String], layer_id: usize) -> String {
    names
        .get(layer_id)
        .cloned()
        .unwrap_or_else(|| layer_id.to_string())
}

fn finish(writer: csv::Writer<Vec<u8>>) -> Result<String> {
    let bytes = writer.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn fragments_csv(set: &FragmentSet, names: &[String]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["layer", "replica", "p_in", "p_out", "kind"])?;
    for f in &set.fragments {
        w.write_record([
            layer_label(names, f.layer_id),
            f.replica_idx.to_string(),
            f.p_in.to_string(),
            f.p_out.to_string(),
            f.kind.as_str().to_string(),
        ])?;
    }
    finish(w)
}

pub fn placements_csv(result: &PackingResult, names: &[String]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["bin", "shelf", "item", "layer", "replica", "p_in", "p_out", "row", "col", "kind"])?;
    for p in &result.placements {
        w.write_record([
            p.bin.to_string(),
            p.shelf.map(|s| s.to_string()).unwrap_or_default(),
            p.item.to_string(),
            layer_label(names, p.fragment.layer_id),
            p.fragment.replica_idx.to_string(),
            p.fragment.p_in.to_string(),
            p.fragment.p_out.to_string(),
            p.row.to_string(),
            p.col.to_string(),
            p.fragment.kind.as_str().to_string(),
        ])?;
    }
    finish(w)
}

fn point_row(p: &SweepPoint) -> Vec<String> {
    vec![
        p.geometry.n_row.to_string(),
        p.geometry.n_col.to_string(),
        p.aspect.to_string(),
        p.fragments.to_string(),
        p.counts.fully_mapped.to_string(),
        p.counts.row_full.to_string(),
        p.counts.col_full.to_string(),
        p.counts.sparse.to_string(),
        p.bin_count.to_string(),
        p.fill_ratio.to_string(),
        p.efficiency.to_string(),
        p.tile_area.to_string(),
        p.total_tile_area.to_string(),
        p.latency_sequential.to_string(),
        p.latency_pipelined.to_string(),
        p.packer.as_str().to_string(),
        p.status.map(status_str).unwrap_or("").to_string(),
        p.flagged.to_string(),
    ]
}

const POINT_HEADER: [&str; 18] = [
    "n_row",
    "n_col",
    "aspect",
    "fragments",
    "fully_mapped",
    "row_full",
    "col_full",
    "sparse",
    "bins",
    "fill_ratio",
    "efficiency",
    "tile_area",
    "total_tile_area",
    "latency_sequential",
    "latency_pipelined",
    "packer",
    "status",
    "flagged",
];

pub fn points_csv(points: &[SweepPoint]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(POINT_HEADER)?;
    for p in points {
        w.write_record(point_row(p))?;
    }
    finish(w)
}

pub fn sweep_csv(report: &OptimizationReport) -> Result<String> {
    points_csv(&report.points)
}

pub fn status_str(s: SolveStatus) -> &'static str {
    match s {
        SolveStatus::Optimal => "optimal",
        SolveStatus::BudgetExhausted => "budget-exhausted",
        SolveStatus::TooManyItems => "too-many-items",
    }
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema_version: u32,
    kind: &'a str,
    #[serde(flatten)]
    body: T,
}

fn to_json<T: Serialize>(kind: &str, body: T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&Envelope {
        schema_version: REPORT_SCHEMA_VERSION,
        kind,
        body,
    })?;
    s.push('\n');
    Ok(s)
}

pub fn sweep_json(report: &OptimizationReport) -> Result<String> {
    to_json("sweep", report)
}

#[derive(Serialize)]
pub struct ExactSummary {
    pub status: SolveStatus,
    pub nodes: u64,
    pub lower_bound: usize,
}

impl From<&ExactOutcome> for ExactSummary {
    fn from(o: &ExactOutcome) -> Self {
        Self {
            status: o.status,
            nodes: o.nodes,
            lower_bound: o.lower_bound,
        }
    }
}

/// Everything a `pack` run reports.
#[derive(Serialize)]
pub struct PackSummary<'a> {
    pub network: &'a str,
    pub mode: PackMode,
    pub geometry: TileGeometry,
    pub policy: FitPolicy,
    pub sort_key: String,
    pub packer: &'a str,
    pub exact: Option<ExactSummary>,
    pub bin_count: usize,
    pub fill_ratio: f64,
    pub dead_area: u64,
    pub tile_efficiency: f64,
    pub total_tile_area: f64,
    pub placements: &'a [Placement],
}

pub fn pack_json(summary: &PackSummary<'_>) -> Result<String> {
    to_json("pack", summary)
}

pub fn fragments_json(network: &str, set: &FragmentSet) -> Result<String> {
    #[derive(Serialize)]
    struct Body<'a> {
        network: &'a str,
        #[serde(flatten)]
        set: &'a FragmentSet,
    }
    to_json("fragments", Body { network, set })
}

#[derive(Serialize)]
pub struct CompareSummary<'a> {
    pub network: &'a str,
    pub mode: PackMode,
    pub one_to_one: &'a SweepPoint,
    pub packed: &'a SweepPoint,
}

pub fn compare_json(summary: &CompareSummary<'_>) -> Result<String> {
    to_json("compare", summary)
}

#[derive(Serialize)]
pub struct LatencySummary<'a> {
    pub network: &'a str,
    pub rapa: Option<String>,
    pub replication: Vec<u32>,
    pub sequential: f64,
    pub pipelined: f64,
}

pub fn latency_json(summary: &LatencySummary<'_>) -> Result<String> {
    to_json("latency", summary)
}

const PALETTE: [&str; 10] = [
    "#4e79a7", "#f28e2b", "#e15759", "#76b7b2", "#59a14f", "#edc948", "#b07aa1", "#ff9da7", "#9c755f", "#bab0ac",
];

/// One panel per bin. Inside a panel the output axis runs left to right and
/// the input axis bottom to top, so row 0 sits on the panel's lower edge.
pub fn render_svg(result: &PackingResult, names: &[String]) -> String {
    const PANEL: f64 = 240.0;
    const GAP: f64 = 40.0;
    let g = result.geometry;
    let longest = f64::from(g.n_row.max(g.n_col));
    let scale = PANEL / longest;
    let (pw, ph) = (f64::from(g.n_col) * scale, f64::from(g.n_row) * scale);
    let width = GAP + result.bin_count as f64 * (pw + GAP);
    let height = ph + 2.0 * GAP;

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0}" height="{height:.0}" viewBox="0 0 {width:.0} {height:.0}" font-family="monospace" font-size="10">"#
    );
    let _ = writeln!(s, "  <title>{} packing on {} tiles: {} bins</title>", result.mode, g, result.bin_count);
    for (bin, members) in result.bins().iter().enumerate() {
        let x0 = GAP + bin as f64 * (pw + GAP);
        let y0 = GAP;
        let _ = writeln!(s, r#"  <g class="bin" data-bin="{bin}">"#);
        let _ = writeln!(
            s,
            r##"    <rect class="tile" x="{x0:.2}" y="{y0:.2}" width="{pw:.2}" height="{ph:.2}" fill="#eeeeee" stroke="#333333"/>"##
        );
        let _ = writeln!(s, r#"    <text x="{x0:.2}" y="{:.2}">bin {}</text>"#, y0 - 8.0, bin + 1);
        for p in members {
            let f = &p.fragment;
            let x = x0 + f64::from(p.col) * scale;
            let w = f64::from(f.p_out) * scale;
            let h = f64::from(f.p_in) * scale;
            let y = y0 + ph - f64::from(p.row) * scale - h;
            let color = PALETTE[f.layer_id % PALETTE.len()];
            let label = xml_escape(&layer_label(names, f.layer_id));
            let _ = writeln!(
                s,
                r##"    <rect class="fragment" data-item="{}" data-layer="{label}" data-replica="{}" data-row="{}" data-col="{}" data-p-in="{}" data-p-out="{}" x="{x:.2}" y="{y:.2}" width="{w:.2}" height="{h:.2}" fill="{color}" fill-opacity="0.8" stroke="#222222"/>"##,
                p.item, f.replica_idx, p.row, p.col, f.p_in, f.p_out
            );
            let _ = writeln!(
                s,
                r#"    <text x="{:.2}" y="{:.2}">{label}</text>"#,
                x + 2.0,
                y + h.min(12.0)
            );
        }
        let _ = writeln!(s, "  </g>");
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;").replace('"', "&quot;")
}

/// Character-grid rendering, one panel per bin, followed by the placement
/// list. Each fragment is drawn with the symbol shown in the list.
pub fn render_ascii(result: &PackingResult, names: &[String]) -> String {
    const CELLS: u32 = 32;
    const SYMBOLS: &[u8] = b"ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789";
    let g = result.geometry;
    let longest = g.n_row.max(g.n_col);
    let cols = (u64::from(g.n_col) * u64::from(CELLS)).div_ceil(u64::from(longest)).max(1) as usize;
    let rows = (u64::from(g.n_row) * u64::from(CELLS)).div_ceil(u64::from(longest)).max(1) as usize;
    let to_cells = |v: u32, extent: u32, cells: usize| -> usize {
        (u64::from(v) * cells as u64 / u64::from(extent)) as usize
    };

    let mut s = String::new();
    let _ = writeln!(s, "{} packing on {} tiles: {} bins", result.mode, g, result.bin_count);
    for (bin, members) in result.bins().iter().enumerate() {
        let mut grid = vec![vec![b'.'; cols]; rows];
        for (k, p) in members.iter().enumerate() {
            let sym = SYMBOLS[k % SYMBOLS.len()];
            let r0 = to_cells(p.row, g.n_row, rows);
            let r1 = to_cells(p.row + p.fragment.p_in, g.n_row, rows).max(r0 + 1).min(rows);
            let c0 = to_cells(p.col, g.n_col, cols);
            let c1 = to_cells(p.col + p.fragment.p_out, g.n_col, cols).max(c0 + 1).min(cols);
            for line in grid.iter_mut().take(r1).skip(r0) {
                for cell in line.iter_mut().take(c1).skip(c0) {
                    *cell = sym;
                }
            }
        }
        let _ = writeln!(s, "\nbin {}", bin + 1);
        let _ = writeln!(s, "+{}+", "-".repeat(cols));
        // Row 0 at the bottom.
        for line in grid.iter().rev() {
            let _ = writeln!(s, "|{}|", String::from_utf8_lossy(line));
        }
        let _ = writeln!(s, "+{}+", "-".repeat(cols));
        for (k, p) in members.iter().enumerate() {
            let shelf = p.shelf.map(|v| format!(" shelf {v}")).unwrap_or_default();
            let _ = writeln!(
                s,
                "  {} item {} layer {} replica {} {}x{} at ({}, {}){}",
                SYMBOLS[k % SYMBOLS.len()] as char,
                p.item,
                layer_label(names, p.fragment.layer_id),
                p.fragment.replica_idx,
                p.fragment.p_in,
                p.fragment.p_out,
                p.row,
                p.col,
                shelf
            );
        }
    }
    s
}
