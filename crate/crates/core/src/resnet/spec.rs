//! Declarative network architecture descriptions.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which layer family the network is built from.
///
/// `Conv` and `Dense` blocks share the same two-layer residual branch
/// (layer-norm-relu-layer-norm); `Probe` blocks are a bare linear map with no
/// normalization or nonlinearity, used to study the ensemble-averaging view
/// of rescaled inference where it holds exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Flavor {
    Conv,
    Dense,
    Probe,
}

impl std::fmt::Display for Flavor {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Flavor::Conv => write!(f, "conv"),
            Flavor::Dense => write!(f, "dense"),
            Flavor::Probe => write!(f, "probe"),
        }
    }
}

/// Shape of one example, before batching.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InputShape {
    /// `[C, H, W]` images (conv flavor).
    Image {
        channels: usize,
        height: usize,
        width: usize,
    },
    /// Flat feature vectors (dense and probe flavors).
    Features { features: usize },
}

/// A run of residual blocks sharing one width.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GroupSpec {
    pub blocks: usize,
    pub width: usize,
}

/// Static description of one residual block, derived from the network spec.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ResBlockSpec {
    pub flavor: Flavor,
    pub in_width: usize,
    pub out_width: usize,
    /// Spatial stride of the first conv; always 1 for dense/probe.
    pub stride: usize,
    /// True when the identity path must change shape (pool and/or pad).
    pub is_transition: bool,
}

impl ResBlockSpec {
    pub fn new(flavor: Flavor, in_width: usize, out_width: usize, stride: usize) -> Result<Self> {
        if in_width == 0 || out_width == 0 {
            return Err(Error::InvalidArg("block widths must be positive".into()));
        }
        if stride != 1 && stride != 2 {
            return Err(Error::InvalidArg(format!("block stride {stride} not in {{1, 2}}")));
        }
        if flavor != Flavor::Conv && stride != 1 {
            return Err(Error::InvalidArg(format!(
                "{flavor} blocks cannot stride"
            )));
        }
        if out_width < in_width {
            return Err(Error::InvalidArg(format!(
                "identity path cannot shrink width {in_width} -> {out_width}"
            )));
        }
        Ok(ResBlockSpec {
            flavor,
            in_width,
            out_width,
            stride,
            is_transition: in_width != out_width || stride == 2,
        })
    }
}

/// Whole-network architecture: stem, grouped residual blocks, classifier.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkSpec {
    pub flavor: Flavor,
    pub input: InputShape,
    pub groups: Vec<GroupSpec>,
    pub num_classes: usize,
}

impl NetworkSpec {
    /// Total residual block count.
    pub fn depth(&self) -> usize {
        self.groups.iter().map(|g| g.blocks).sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.groups.is_empty() {
            return Err(Error::Config("network needs at least one group".into()));
        }
        if self.groups.iter().any(|g| g.blocks == 0 || g.width == 0) {
            return Err(Error::Config(
                "every group needs positive blocks and width".into(),
            ));
        }
        match (self.flavor, self.input) {
            (Flavor::Conv, InputShape::Image { channels, height, width }) => {
                if channels == 0 || height == 0 || width == 0 {
                    return Err(Error::Config("image dims must be positive".into()));
                }
            }
            (Flavor::Dense | Flavor::Probe, InputShape::Features { features }) => {
                if features == 0 {
                    return Err(Error::Config("feature dim must be positive".into()));
                }
            }
            (flavor, _) => {
                return Err(Error::Config(format!(
                    "{flavor} flavor does not match the input shape"
                )));
            }
        }
        match self.flavor {
            Flavor::Conv => {
                // Identity padding cannot shrink; equal widths are fine
                // because the stride still forces a transition.
                for w in self.groups.windows(2) {
                    if w[1].width < w[0].width {
                        return Err(Error::Config(format!(
                            "group width cannot shrink ({} -> {})",
                            w[0].width, w[1].width
                        )));
                    }
                }
                if self.num_classes < 2 {
                    return Err(Error::Config("need at least 2 classes".into()));
                }
            }
            Flavor::Dense => {
                // Dense transitions exist only via width growth, so widths
                // must strictly increase across group boundaries.
                for w in self.groups.windows(2) {
                    if w[1].width <= w[0].width {
                        return Err(Error::Config(format!(
                            "dense group widths must increase ({} -> {})",
                            w[0].width, w[1].width
                        )));
                    }
                }
                if self.num_classes < 2 {
                    return Err(Error::Config("need at least 2 classes".into()));
                }
            }
            Flavor::Probe => {
                if self.groups.len() != 1 {
                    return Err(Error::Config("probe networks take a single group".into()));
                }
                let InputShape::Features { features } = self.input else {
                    unreachable!("checked above");
                };
                if self.groups[0].width != features {
                    return Err(Error::Config(
                        "probe width must equal the input feature dim".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Per-block specs in network order. The first block of every group
    /// after the first is a transition (width change and, for conv, stride 2).
    pub fn block_specs(&self) -> Result<Vec<ResBlockSpec>> {
        self.validate()?;
        let mut out = Vec::with_capacity(self.depth());
        let mut prev_width = self.groups[0].width;
        for (gi, g) in self.groups.iter().enumerate() {
            for bi in 0..g.blocks {
                let first_of_later_group = gi > 0 && bi == 0;
                let in_width = if bi == 0 { prev_width } else { g.width };
                let stride = if self.flavor == Flavor::Conv && first_of_later_group {
                    2
                } else {
                    1
                };
                out.push(ResBlockSpec::new(self.flavor, in_width, g.width, stride)?);
            }
            prev_width = g.width;
        }
        Ok(out)
    }
}
