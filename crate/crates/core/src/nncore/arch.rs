use std::fmt;

use serde::{Deserialize, Serialize};

/// Shape family of a hidden-width vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopologyTag {
    Uniform,
    Increasing,
    Decreasing,
    Bottleneck,
    Spindle,
    Random,
}

impl TopologyTag {
    pub const ALL: [TopologyTag; 6] = [
        TopologyTag::Uniform,
        TopologyTag::Increasing,
        TopologyTag::Decreasing,
        TopologyTag::Bottleneck,
        TopologyTag::Spindle,
        TopologyTag::Random,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TopologyTag::Uniform => "uniform",
            TopologyTag::Increasing => "increasing",
            TopologyTag::Decreasing => "decreasing",
            TopologyTag::Bottleneck => "bottleneck",
            TopologyTag::Spindle => "spindle",
            TopologyTag::Random => "random",
        }
    }

    pub(crate) fn code(self) -> u8 {
        match self {
            TopologyTag::Uniform => 0,
            TopologyTag::Increasing => 1,
            TopologyTag::Decreasing => 2,
            TopologyTag::Bottleneck => 3,
            TopologyTag::Spindle => 4,
            TopologyTag::Random => 5,
        }
    }

    pub(crate) fn from_code(code: u8) -> Option<Self> {
        Self::ALL.get(code as usize).copied()
    }

    /// Infers the tag of a hidden-width vector from its shape. Vectors that
    /// match none of the structured families are `Random`.
    pub fn classify(hidden: &[usize]) -> TopologyTag {
        if hidden.windows(2).all(|w| w[0] == w[1]) {
            return TopologyTag::Uniform;
        }
        if hidden.windows(2).all(|w| w[0] <= w[1]) {
            return TopologyTag::Increasing;
        }
        if hidden.windows(2).all(|w| w[0] >= w[1]) {
            return TopologyTag::Decreasing;
        }
        if is_valley(hidden) {
            return TopologyTag::Bottleneck;
        }
        let flipped: Vec<i64> = hidden.iter().map(|&w| -(w as i64)).collect();
        if is_valley(&flipped) {
            return TopologyTag::Spindle;
        }
        TopologyTag::Random
    }
}

/// Non-increasing then non-decreasing, with both ends strictly above the
/// minimum (so the minimum sits strictly inside).
pub(crate) fn is_valley<T: PartialOrd + Copy>(xs: &[T]) -> bool {
    if xs.len() < 3 {
        return false;
    }
    let mut min_idx = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x < xs[min_idx] {
            min_idx = i;
        }
    }
    let min = xs[min_idx];
    if !(xs[0] > min && xs[xs.len() - 1] > min) {
        return false;
    }
    xs[..=min_idx].windows(2).all(|w| w[0] >= w[1]) && xs[min_idx..].windows(2).all(|w| w[0] <= w[1])
}

impl fmt::Display for TopologyTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for TopologyTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .iter()
            .copied()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| format!("unknown topology tag `{s}`"))
    }
}

/// A structural problem with an [`ArchitectureSpec`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub enum SpecDiagnostic {
    ZeroDepth,
    LengthMismatch { depth: usize, len: usize },
    ZeroWidth { index: usize },
}

impl fmt::Display for SpecDiagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            SpecDiagnostic::ZeroDepth => f.write_str("depth must be ≥ 1"),
            SpecDiagnostic::LengthMismatch { depth, len } => {
                write!(f, "widths has length {len}, expected depth + 2 = {}", depth + 2)
            }
            SpecDiagnostic::ZeroWidth { index } => write!(f, "width must be ≥ 1 (index {index})"),
        }
    }
}

/// Depth and width vector of a bias-free ReLU network.
///
/// `widths[0]` is the input dimension, `widths[depth + 1]` the output
/// dimension and `widths[1..=depth]` the hidden widths.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ArchitectureSpec {
    pub depth: usize,
    pub widths: Vec<usize>,
    pub topology: TopologyTag,
}

impl ArchitectureSpec {
    /// Builds a spec from the full width vector, inferring the topology tag.
    pub fn from_widths(widths: Vec<usize>) -> Result<Self, Vec<SpecDiagnostic>> {
        let depth = widths.len().saturating_sub(2);
        let topology = if widths.len() >= 3 {
            TopologyTag::classify(&widths[1..widths.len() - 1])
        } else {
            TopologyTag::Uniform
        };
        let spec = ArchitectureSpec { depth, widths, topology };
        let diags = spec.diagnostics();
        if diags.is_empty() {
            Ok(spec)
        } else {
            Err(diags)
        }
    }

    pub fn with_topology(mut self, topology: TopologyTag) -> Self {
        self.topology = topology;
        self
    }

    pub fn diagnostics(&self) -> Vec<SpecDiagnostic> {
        let mut out = Vec::new();
        if self.depth == 0 {
            out.push(SpecDiagnostic::ZeroDepth);
        }
        if self.widths.len() != self.depth + 2 {
            out.push(SpecDiagnostic::LengthMismatch { depth: self.depth, len: self.widths.len() });
        }
        for (index, &w) in self.widths.iter().enumerate() {
            if w == 0 {
                out.push(SpecDiagnostic::ZeroWidth { index });
            }
        }
        out
    }

    pub fn is_valid(&self) -> bool {
        self.diagnostics().is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        self.widths[self.widths.len() - 1]
    }

    pub fn hidden(&self) -> &[usize] {
        &self.widths[1..self.widths.len() - 1]
    }

    /// Number of weight matrices, including the output layer.
    pub fn num_layers(&self) -> usize {
        self.widths.len() - 1
    }

    /// `(rows, cols)` of weight matrix `l` (1-based, `1..=depth + 1`).
    pub fn layer_shape(&self, l: usize) -> (usize, usize) {
        (self.widths[l], self.widths[l - 1])
    }

    pub fn num_params(&self) -> usize {
        self.widths.windows(2).map(|w| w[0] * w[1]).sum()
    }

    /// Key used for de-duplication: depth and full width vector.
    pub fn shape_key(&self) -> (usize, &[usize]) {
        (self.depth, &self.widths)
    }
}

impl fmt::Display for ArchitectureSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let ws: Vec<String> = self.widths.iter().map(|w| w.to_string()).collect();
        write!(f, "[{}] ({})", ws.join(","), self.topology)
    }
}
