//! Tile area, tile efficiency and latency.
//!
//! A tile is the weight array (`n_row × n_col` unit cells of
//! `d_unit_in × d_unit_out`) plus periphery strips of width `d_cnt` along
//! both array edges and a `d_cnt × d_cnt` control block:
//!
//! ```text
//! A_tile = Dui·Duo·n·m + (Dui·n + Duo·m)·D_cnt + D_cnt²
//! T_eff  = Dui·Duo·n·m / A_tile
//! ```
//!
//! Areas are in unit-cell-edge² units unless `cell_area_scale` is given.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fragment::TileGeometry;
use crate::network::LogicalLayer;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TileCostParams {
    pub d_unit_in: f64,
    pub d_unit_out: f64,
    /// Control-block edge, held constant across geometries.
    pub d_cnt: f64,
    /// Physical area of one `d_unit_in × d_unit_out` cell, used for absolute
    /// reporting.
    pub cell_area_scale: Option<f64>,
    /// Additive chip overhead, counted once.
    pub a_aux: f64,
}

impl Default for TileCostParams {
    fn default() -> Self {
        Self {
            d_unit_in: 1.0,
            d_unit_out: 1.0,
            d_cnt: 0.0,
            cell_area_scale: None,
            a_aux: 0.0,
        }
    }
}

impl TileCostParams {
    /// Parameters with `d_cnt` fitted so `anchor` has efficiency `efficiency`.
    pub fn calibrated(anchor: TileGeometry, efficiency: f64, d_unit_in: f64, d_unit_out: f64) -> Result<Self> {
        Ok(Self {
            d_unit_in,
            d_unit_out,
            d_cnt: calibrate_control_dimension(anchor, efficiency, d_unit_in, d_unit_out)?,
            ..Self::default()
        })
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("d_unit_in", self.d_unit_in),
            ("d_unit_out", self.d_unit_out),
            ("d_cnt", self.d_cnt),
            ("a_aux", self.a_aux),
            ("cell_area_scale", self.cell_area_scale.unwrap_or(0.0)),
        ];
        for (name, v) in fields {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("cost parameter `{name}` must be ≥ 0 (got {v})")));
            }
        }
        Ok(())
    }
}

/// Per-geometry tile area model. The default implementation on
/// [`TileCostParams`] keeps the control block constant; other periphery
/// scaling laws can be supplied by implementing this trait.
pub trait AreaModel: Sync {
    fn array_area(&self, geometry: TileGeometry) -> f64;
    fn tile_area(&self, geometry: TileGeometry) -> f64;

    fn efficiency(&self, geometry: TileGeometry) -> f64 {
        self.array_area(geometry) / self.tile_area(geometry)
    }
}

impl AreaModel for TileCostParams {
    fn array_area(&self, g: TileGeometry) -> f64 {
        self.d_unit_in * self.d_unit_out * f64::from(g.n_row) * f64::from(g.n_col)
    }

    fn tile_area(&self, g: TileGeometry) -> f64 {
        tile_area_with(self, g, self.d_cnt)
    }
}

fn tile_area_with(p: &TileCostParams, g: TileGeometry, d_cnt: f64) -> f64 {
    let (n, m) = (f64::from(g.n_row), f64::from(g.n_col));
    p.d_unit_in * p.d_unit_out * n * m + (p.d_unit_in * n + p.d_unit_out * m) * d_cnt + d_cnt * d_cnt
}

/// Control-block edge chosen per geometry by a caller-supplied function.
pub struct ScaledPeriphery<F> {
    pub params: TileCostParams,
    pub control_edge: F,
}

impl<F: Fn(TileGeometry) -> f64 + Sync> AreaModel for ScaledPeriphery<F> {
    fn array_area(&self, g: TileGeometry) -> f64 {
        self.params.array_area(g)
    }

    fn tile_area(&self, g: TileGeometry) -> f64 {
        tile_area_with(&self.params, g, (self.control_edge)(g))
    }
}

pub fn tile_efficiency(geometry: TileGeometry, params: &TileCostParams) -> f64 {
    params.efficiency(geometry)
}

/// Inverts the efficiency formula for `d_cnt`: the positive root of
/// `D² + (Dui·n + Duo·m)·D + Dui·Duo·n·m·(1 − 1/e) = 0`.
pub fn calibrate_control_dimension(
    anchor: TileGeometry,
    efficiency: f64,
    d_unit_in: f64,
    d_unit_out: f64,
) -> Result<f64> {
    if !(efficiency > 0.0 && efficiency < 1.0) {
        return Err(Error::InvalidEfficiency(efficiency));
    }
    let (n, m) = (f64::from(anchor.n_row), f64::from(anchor.n_col));
    let b = d_unit_in * n + d_unit_out * m;
    // c < 0 for e in (0, 1), so exactly one root is positive.
    let c = d_unit_in * d_unit_out * n * m * (1.0 - 1.0 / efficiency);
    let disc = b * b - 4.0 * c;
    if disc < 0.0 {
        return Err(Error::NoPositiveRoot);
    }
    // Written as 2|c| / (b + √disc) to avoid cancellation as e → 1.
    let root = -2.0 * c / (b + disc.sqrt());
    if root > 0.0 && root.is_finite() {
        Ok(root)
    } else {
        Err(Error::NoPositiveRoot)
    }
}

/// `bins · A_tile` (times the cell scale when set) plus the chip overhead.
pub fn total_tile_area(bin_count: usize, geometry: TileGeometry, params: &TileCostParams) -> f64 {
    total_area_with(params, bin_count, geometry, params)
}

pub(crate) fn total_area_with(
    model: &dyn AreaModel,
    bin_count: usize,
    geometry: TileGeometry,
    params: &TileCostParams,
) -> f64 {
    let scale = params.cell_area_scale.unwrap_or(1.0);
    bin_count as f64 * model.tile_area(geometry) * scale + params.a_aux
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LatencyParams {
    pub t_tile: f64,
    pub t_dig: f64,
    pub t_com: f64,
}

impl Default for LatencyParams {
    fn default() -> Self {
        Self {
            t_tile: 1.0,
            t_dig: 0.0,
            t_com: 0.0,
        }
    }
}

impl LatencyParams {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("t_tile", self.t_tile), ("t_dig", self.t_dig), ("t_com", self.t_com)] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::Config(format!("latency parameter `{name}` must be ≥ 0 (got {v})")));
            }
        }
        Ok(())
    }
}

/// One layer at a time: `t_tile · Σ ⌈n_reuse / replication⌉ + t_dig + t_com`.
pub fn latency_sequential(layers: &[LogicalLayer], params: &LatencyParams) -> f64 {
    let passes: u64 = layers.iter().map(LogicalLayer::effective_reuse).sum();
    params.t_tile * passes as f64 + params.t_dig + params.t_com
}

/// All layers at once; the slowest stage sets the pace.
pub fn latency_pipelined(layers: &[LogicalLayer], params: &LatencyParams) -> f64 {
    let slowest = layers.iter().map(LogicalLayer::effective_reuse).max().unwrap_or(0);
    (params.t_tile * slowest as f64).max(params.t_com).max(params.t_dig)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::LayerClass;
    use approx::assert_relative_eq;

    fn g(n: u32, m: u32) -> TileGeometry {
        TileGeometry::new(n, m).unwrap()
    }

    /// Positive root via the textbook quadratic formula.
    fn textbook_root(n: f64, m: f64, e: f64) -> f64 {
        let b = n + m;
        let c = n * m * (1.0 - 1.0 / e);
        (-b + (b * b - 4.0 * c).sqrt()) / 2.0
    }

    #[test]
    fn calibration_at_the_standard_anchor() {
        let d = calibrate_control_dimension(g(256, 256), 0.2, 1.0, 1.0).unwrap();
        assert_relative_eq!(d, textbook_root(256.0, 256.0, 0.2), max_relative = 1e-12);
        assert!((d - 316.433).abs() < 1e-3, "{d}");
        let p = TileCostParams { d_cnt: d, ..Default::default() };
        assert_relative_eq!(tile_efficiency(g(256, 256), &p), 0.2, max_relative = 1e-9);
        assert!((tile_efficiency(g(512, 512), &p) - 0.382).abs() < 1e-3);
    }

    #[test]
    fn calibration_round_trips_on_rectangles() {
        for e in [0.05, 0.2, 0.5, 0.9] {
            let p = TileCostParams::calibrated(g(256, 512), e, 1.0, 1.0).unwrap();
            assert_relative_eq!(tile_efficiency(g(256, 512), &p), e, max_relative = 1e-9);
        }
    }

    #[test]
    fn calibration_limit_and_errors() {
        let d = calibrate_control_dimension(g(256, 256), 1.0 - 1e-12, 1.0, 1.0).unwrap();
        assert!(d < 1e-6, "{d}");
        assert!(calibrate_control_dimension(g(256, 256), 1.0, 1.0, 1.0).is_err());
        assert!(calibrate_control_dimension(g(256, 256), 0.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn no_periphery_means_full_efficiency() {
        assert_eq!(tile_efficiency(g(128, 64), &TileCostParams::default()), 1.0);
    }

    #[test]
    fn total_area_counts_overhead_once() {
        let p = TileCostParams {
            d_cnt: 316.433,
            a_aux: 42.0,
            ..Default::default()
        };
        assert_eq!(total_tile_area(0, g(256, 256), &p), 42.0);
        let one = total_tile_area(1, g(256, 256), &TileCostParams { a_aux: 0.0, ..p });
        assert!((one / 327_680.0 - 1.0).abs() < 0.005, "{one}");
    }

    #[test]
    fn scaled_periphery_plugs_in() {
        let params = TileCostParams::calibrated(g(256, 256), 0.2, 1.0, 1.0).unwrap();
        let constant = ScaledPeriphery { params, control_edge: |_| params.d_cnt };
        assert_relative_eq!(constant.tile_area(g(512, 512)), params.tile_area(g(512, 512)));
        let growing = ScaledPeriphery {
            params,
            control_edge: |t: TileGeometry| params.d_cnt * f64::from(t.n_row) / 256.0,
        };
        assert!(growing.efficiency(g(512, 512)) < params.efficiency(g(512, 512)));
    }

    fn layers(reuse: &[(u64, u32)]) -> Vec<LogicalLayer> {
        reuse
            .iter()
            .enumerate()
            .map(|(i, &(n_reuse, replication))| LogicalLayer {
                replication,
                ..LogicalLayer::new(i, LayerClass::Convolution, 9, 9, n_reuse)
            })
            .collect()
    }

    #[test]
    fn sequential_latency() {
        let lp = LatencyParams { t_tile: 2.0, t_dig: 3.0, t_com: 5.0 };
        let fc: Vec<_> = (0..4)
            .map(|i| LogicalLayer::new(i, LayerClass::FullyConnected, 8, 8, 1))
            .collect();
        assert_eq!(latency_sequential(&fc, &lp), 2.0 * 4.0 + 8.0);
        assert_eq!(latency_sequential(&layers(&[(12544, 128)]), &LatencyParams::default()), 98.0);
        assert_eq!(latency_sequential(&[], &lp), 8.0);
    }

    #[test]
    fn pipelined_latency() {
        let lp = LatencyParams::default();
        assert_eq!(latency_pipelined(&layers(&[(12544, 1), (800, 1), (100, 1)]), &lp), 12544.0);
        assert_eq!(latency_pipelined(&layers(&[(12544, 128), (800, 32), (100, 8)]), &lp), 98.0);
        let fc: Vec<_> = (0..3)
            .map(|i| LogicalLayer::new(i, LayerClass::FullyConnected, 8, 8, 1))
            .collect();
        let lp = LatencyParams { t_tile: 1.0, t_dig: 0.5, t_com: 4.0 };
        assert_eq!(latency_pipelined(&fc, &lp), 4.0);
    }
}
