//! Network descriptions and their lowering to crossbar weight matrices.
//!
//! A convolution with `d_in` input channels, kernel edge `k` and `d_out`
//! filters becomes a `(k²·d_in [+1]) × d_out` matrix that is applied once per
//! output pixel, so its weight-reuse factor is the number of output positions.
//! A fully-connected layer maps directly to `(fan_in [+1]) × fan_out` and is
//! applied once per input vector.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Version of the declarative network file understood by this build.
pub const NETWORK_FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ConvParams {
    pub d_in: u32,
    pub d_out: u32,
    /// Kernel edge.
    pub k: u32,
    /// Stride.
    pub s: u32,
    /// Padding.
    pub p: u32,
    /// Input spatial edge in pixels.
    pub n_in: u32,
}

impl ConvParams {
    /// Output spatial edge `⌊(n_in − k + 2p)/s⌋ + 1`, or `None` when the kernel
    /// does not fit the padded input.
    pub fn output_edge(&self) -> Option<u64> {
        let padded = u64::from(self.n_in) + 2 * u64::from(self.p);
        let span = padded.checked_sub(u64::from(self.k))?;
        if self.s == 0 {
            return None;
        }
        Some(span / u64::from(self.s) + 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LayerKind {
    Convolution(ConvParams),
    FullyConnected { fan_in: u32, fan_out: u32 },
}

/// Coarse layer class carried through lowering.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayerClass {
    Convolution,
    FullyConnected,
}

impl LayerKind {
    pub fn class(&self) -> LayerClass {
        match self {
            LayerKind::Convolution(_) => LayerClass::Convolution,
            LayerKind::FullyConnected { .. } => LayerClass::FullyConnected,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub name: String,
    pub kind: LayerKind,
    pub bias: bool,
}

impl LayerSpec {
    pub fn conv(name: impl Into<String>, params: ConvParams, bias: bool) -> Self {
        Self {
            name: name.into(),
            kind: LayerKind::Convolution(params),
            bias,
        }
    }

    pub fn fully_connected(name: impl Into<String>, fan_in: u32, fan_out: u32, bias: bool) -> Self {
        Self {
            name: name.into(),
            kind: LayerKind::FullyConnected { fan_in, fan_out },
            bias,
        }
    }

    /// Checks every count invariant, naming the offending field.
    pub fn validate(&self) -> Result<()> {
        let invalid = |field: &'static str, reason: String| Error::InvalidLayer {
            layer: self.name.clone(),
            field,
            reason,
        };
        let positive = |field: &'static str, value: u32| {
            if value == 0 {
                Err(invalid(field, "must be ≥ 1".into()))
            } else {
                Ok(())
            }
        };
        match &self.kind {
            LayerKind::Convolution(c) => {
                positive("d_in", c.d_in)?;
                positive("d_out", c.d_out)?;
                positive("k", c.k)?;
                positive("s", c.s)?;
                positive("n_in", c.n_in)?;
                if c.output_edge().is_none() {
                    return Err(invalid(
                        "n_in",
                        format!(
                            "n_in − k + 2p must be ≥ 0 (n_in={}, k={}, p={})",
                            c.n_in, c.k, c.p
                        ),
                    ));
                }
            }
            LayerKind::FullyConnected { fan_in, fan_out } => {
                positive("fan_in", *fan_in)?;
                positive("fan_out", *fan_out)?;
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub name: String,
    pub dataset: String,
    pub layers: Vec<LayerSpec>,
    /// Per-layer replication requested by the network file, keyed by layer name.
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub replication: BTreeMap<String, u32>,
}

impl NetworkSpec {
    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::EmptyNetwork);
        }
        let mut seen = HashSet::new();
        for layer in &self.layers {
            if !seen.insert(layer.name.as_str()) {
                return Err(Error::DuplicateLayer(layer.name.clone()));
            }
            layer.validate()?;
        }
        for (name, factor) in &self.replication {
            if !seen.contains(name.as_str()) {
                return Err(Error::Config(format!(
                    "replication entry `{name}` does not name a layer"
                )));
            }
            if *factor == 0 {
                return Err(Error::InvalidLayer {
                    layer: name.clone(),
                    field: "replication",
                    reason: "must be ≥ 1".into(),
                });
            }
        }
        Ok(())
    }

    pub fn layer_index(&self, name: &str) -> Option<usize> {
        self.layers.iter().position(|l| l.name == name)
    }

    /// Lowers every layer, in order, with replication 1.
    pub fn lower(&self) -> Result<Vec<LogicalLayer>> {
        self.layers
            .iter()
            .enumerate()
            .map(|(i, l)| lower_layer(l, i))
            .collect()
    }

    /// Replication overrides from the network file, keyed by layer index.
    pub fn replication_overrides(&self) -> BTreeMap<usize, u32> {
        self.replication
            .iter()
            .filter_map(|(name, f)| self.layer_index(name).map(|i| (i, *f)))
            .collect()
    }

    /// Total number of stored weights (bias rows included).
    pub fn weight_count(&self) -> Result<u64> {
        Ok(self.lower()?.iter().map(LogicalLayer::area).sum())
    }
}

/// A layer lowered to its crossbar weight-matrix shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LogicalLayer {
    pub layer_id: usize,
    pub class: LayerClass,
    /// Input lines (matrix rows).
    pub m_inp: u32,
    /// Output lines (matrix columns).
    pub m_out: u32,
    pub n_reuse: u64,
    pub replication: u32,
}

impl LogicalLayer {
    pub fn new(layer_id: usize, class: LayerClass, m_inp: u32, m_out: u32, n_reuse: u64) -> Self {
        Self {
            layer_id,
            class,
            m_inp,
            m_out,
            n_reuse,
            replication: 1,
        }
    }

    pub fn area(&self) -> u64 {
        u64::from(self.m_inp) * u64::from(self.m_out)
    }

    /// Passes through the matrix after replication: `⌈n_reuse / replication⌉`.
    pub fn effective_reuse(&self) -> u64 {
        self.n_reuse.div_ceil(u64::from(self.replication.max(1)))
    }
}

/// Number of input-matrix columns a layer's weights are applied to.
pub fn weight_reuse(layer: &LayerSpec) -> Result<u64> {
    match &layer.kind {
        LayerKind::Convolution(c) => {
            let edge = c.output_edge().ok_or_else(|| Error::InvalidLayer {
                layer: layer.name.clone(),
                field: "n_in",
                reason: format!(
                    "n_in − k + 2p must be ≥ 0 (n_in={}, k={}, p={})",
                    c.n_in, c.k, c.p
                ),
            })?;
            Ok(edge * edge)
        }
        LayerKind::FullyConnected { .. } => Ok(1),
    }
}

pub fn lower_layer(layer: &LayerSpec, index: usize) -> Result<LogicalLayer> {
    layer.validate()?;
    let bias = u32::from(layer.bias);
    let (m_inp, m_out) = match &layer.kind {
        LayerKind::Convolution(c) => (c.k * c.k * c.d_in + bias, c.d_out),
        LayerKind::FullyConnected { fan_in, fan_out } => (fan_in + bias, *fan_out),
    };
    Ok(LogicalLayer::new(
        index,
        layer.kind.class(),
        m_inp,
        m_out,
        weight_reuse(layer)?,
    ))
}

/// Replicated Arrays with Permuted Assignment: replication schedule that
/// starts at `first_factor` on the first convolution and divides by `decay`
/// at every following convolution.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RapaPlan {
    pub first_factor: u32,
    pub decay: u32,
    /// Explicit factors by layer index; these win over the schedule.
    #[serde(default)]
    pub overrides: BTreeMap<usize, u32>,
}

impl RapaPlan {
    pub fn new(first_factor: u32, decay: u32) -> Self {
        Self {
            first_factor: first_factor.max(1),
            decay: decay.max(1),
            overrides: BTreeMap::new(),
        }
    }

    /// No replication anywhere.
    pub fn identity() -> Self {
        Self::new(1, 1)
    }

    pub fn with_override(mut self, layer_id: usize, factor: u32) -> Self {
        self.overrides.insert(layer_id, factor.max(1));
        self
    }
}

impl fmt::Display for RapaPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.first_factor, self.decay)
    }
}

impl FromStr for RapaPlan {
    type Err = Error;

    /// Parses the `first/decay` notation, e.g. `128/4`.
    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("RAPA plan `{s}` must look like FIRST/DECAY, e.g. 128/4"));
        let (first, decay) = s.split_once('/').ok_or_else(bad)?;
        let first: u32 = first.trim().parse().map_err(|_| bad())?;
        let decay: u32 = decay.trim().parse().map_err(|_| bad())?;
        if first == 0 || decay == 0 {
            return Err(bad());
        }
        Ok(Self::new(first, decay))
    }
}

/// Assigns replication factors. Convolutions follow the decaying schedule;
/// fully-connected layers stay at 1 unless overridden.
pub fn plan_rapa(layers: &[LogicalLayer], plan: &RapaPlan) -> Vec<LogicalLayer> {
    let decay = plan.decay.max(1);
    let mut previous: Option<u32> = None;
    layers
        .iter()
        .map(|layer| {
            let scheduled = match layer.class {
                LayerClass::Convolution => match previous {
                    None => plan.first_factor.max(1),
                    Some(prev) => (prev / decay).max(1),
                },
                LayerClass::FullyConnected => 1,
            };
            let factor = plan
                .overrides
                .get(&layer.layer_id)
                .copied()
                .unwrap_or(scheduled)
                .max(1);
            if layer.class == LayerClass::Convolution {
                previous = Some(factor);
            }
            LogicalLayer {
                replication: factor,
                ..*layer
            }
        })
        .collect()
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawNetwork {
    format_version: u32,
    name: String,
    #[serde(default)]
    dataset: String,
    #[serde(default)]
    layers: Vec<RawLayer>,
    #[serde(default)]
    replication: BTreeMap<String, u32>,
}

#[derive(Debug, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum RawKind {
    Convolution,
    FullyConnected,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawLayer {
    name: String,
    kind: RawKind,
    d_in: Option<u32>,
    d_out: Option<u32>,
    k: Option<u32>,
    s: Option<u32>,
    p: Option<u32>,
    n_in: Option<u32>,
    fan_in: Option<u32>,
    fan_out: Option<u32>,
    #[serde(default)]
    bias: bool,
}

impl RawLayer {
    fn into_spec(self) -> Result<LayerSpec> {
        let name = self.name;
        let missing = |field: &'static str, kind: &str| Error::InvalidLayer {
            layer: name.clone(),
            field,
            reason: format!("is required for {kind} layers"),
        };
        let foreign = |field: &'static str, kind: &str| Error::InvalidLayer {
            layer: name.clone(),
            field,
            reason: format!("does not apply to {kind} layers"),
        };
        let kind = match self.kind {
            RawKind::Convolution => {
                const KIND: &str = "convolution";
                if self.fan_in.is_some() {
                    return Err(foreign("fan_in", KIND));
                }
                if self.fan_out.is_some() {
                    return Err(foreign("fan_out", KIND));
                }
                LayerKind::Convolution(ConvParams {
                    d_in: self.d_in.ok_or_else(|| missing("d_in", KIND))?,
                    d_out: self.d_out.ok_or_else(|| missing("d_out", KIND))?,
                    k: self.k.ok_or_else(|| missing("k", KIND))?,
                    s: self.s.unwrap_or(1),
                    p: self.p.unwrap_or(0),
                    n_in: self.n_in.ok_or_else(|| missing("n_in", KIND))?,
                })
            }
            RawKind::FullyConnected => {
                const KIND: &str = "fully-connected";
                for (field, value) in [
                    ("d_in", self.d_in),
                    ("d_out", self.d_out),
                    ("k", self.k),
                    ("s", self.s),
                    ("p", self.p),
                    ("n_in", self.n_in),
                ] {
                    if value.is_some() {
                        return Err(foreign(field, KIND));
                    }
                }
                LayerKind::FullyConnected {
                    fan_in: self.fan_in.ok_or_else(|| missing("fan_in", KIND))?,
                    fan_out: self.fan_out.ok_or_else(|| missing("fan_out", KIND))?,
                }
            }
        };
        let spec = LayerSpec {
            name,
            kind,
            bias: self.bias,
        };
        spec.validate()?;
        Ok(spec)
    }
}

/// Parses and validates a network from its TOML text. `origin` labels errors.
pub fn parse_network(text: &str, origin: &str) -> Result<NetworkSpec> {
    let raw: RawNetwork = toml::from_str(text).map_err(|e| Error::Parse {
        origin: origin.to_string(),
        message: e.to_string().trim_end().to_string(),
    })?;
    if raw.format_version != NETWORK_FORMAT_VERSION {
        return Err(Error::FormatVersion {
            found: raw.format_version,
            expected: NETWORK_FORMAT_VERSION,
        });
    }
    let layers = raw
        .layers
        .into_iter()
        .map(RawLayer::into_spec)
        .collect::<Result<Vec<_>>>()?;
    let network = NetworkSpec {
        name: raw.name,
        dataset: raw.dataset,
        layers,
        replication: raw.replication,
    };
    network.validate()?;
    Ok(network)
}

/// Reads a network file. A path without extension falls back to `<path>.toml`.
pub fn load_network(path: impl AsRef<Path>) -> Result<NetworkSpec> {
    let path = path.as_ref();
    let resolved = if !path.exists() && path.extension().is_none() {
        path.with_extension("toml")
    } else {
        path.to_path_buf()
    };
    let text = std::fs::read_to_string(&resolved).map_err(|source| Error::Io {
        path: resolved.clone(),
        source,
    })?;
    parse_network(&text, &resolved.display().to_string())
}
