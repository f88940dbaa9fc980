//! Model-graph definition: the text format describing the layer graph, the
//! companion binary weights format, and shape inference tying them together.

mod cfg;
mod weights;

pub use cfg::parse_cfg;
pub use weights::{
    load_weights, save_weights, BatchNormWeights, ConvWeights, ModelWeights,
};

use crate::error::{Error, Result};

/// How many channels a detection head needs per anchor slot: 4 box offsets,
/// 1 objectness logit, and one logit per class — times the number of
/// anchors the scale predicts.
pub fn compute_head_depth(n_classes: usize, n_anchors_per_scale: usize) -> usize {
    (5 + n_classes) * n_anchors_per_scale
}

/// Activation applied after a convolution (and its batch norm, if any).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Linear,
    /// max(v, 0.1·v)
    Leaky,
}

/// Convolutional layer as resolved from the graph text: `padding` is the
/// final per-side pixel count (the `pad=1` flag expands to `size/2`).
#[derive(Clone, Debug, PartialEq)]
pub struct ConvSpec {
    pub filters: usize,
    pub size: usize,
    pub stride: usize,
    pub padding: usize,
    pub batch_normalize: bool,
    pub activation: Activation,
}

/// Max-pooling layer. `padding` is the *total* extra extent; the window
/// origin shifts left/up by `padding/2` and out-of-bounds positions read
/// as −∞, matching the reference implementation of this format.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct MaxpoolSpec {
    pub size: usize,
    pub stride: usize,
    pub padding: usize,
}

/// Detection head: which anchors this scale predicts and how many classes.
#[derive(Clone, Debug, PartialEq)]
pub struct YoloSpec {
    pub classes: usize,
    /// All anchor (w, h) pairs in input pixels, shared across scales.
    pub anchors: Vec<(f32, f32)>,
    /// Indices into `anchors` selecting this scale's priors.
    pub mask: Vec<usize>,
}

impl YoloSpec {
    /// Channels this head consumes: (5 + classes) · |mask|.
    pub fn depth(&self) -> usize {
        compute_head_depth(self.classes, self.mask.len())
    }
}

/// One layer of the parsed graph.
#[derive(Clone, Debug, PartialEq)]
pub enum Layer {
    Convolutional(ConvSpec),
    Maxpool(MaxpoolSpec),
    Upsample { factor: usize },
    /// Channel-wise concatenation of earlier layers' outputs, in listed
    /// order. Indices are absolute layer indices, already resolved.
    Route { sources: Vec<usize> },
    Yolo(YoloSpec),
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Convolutional(_) => "convolutional",
            Layer::Maxpool(_) => "maxpool",
            Layer::Upsample { .. } => "upsample",
            Layer::Route { .. } => "route",
            Layer::Yolo(_) => "yolo",
        }
    }
}

/// Per-layer output geometry (batch dimension omitted; it passes through).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LayerShape {
    pub c: usize,
    pub h: usize,
    pub w: usize,
}

impl std::fmt::Display for LayerShape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}x{}", self.c, self.h, self.w)
    }
}

/// Parsed and shape-checked model graph.
#[derive(Clone, Debug)]
pub struct NetConfig {
    pub input_w: usize,
    pub input_h: usize,
    pub input_c: usize,
    pub layers: Vec<Layer>,
    /// Output shape of each layer, aligned with `layers`.
    pub shapes: Vec<LayerShape>,
    /// Non-fatal parse notes (unknown keys, defaulted anchors).
    pub warnings: Vec<String>,
    /// True when the graph text omitted anchors and the built-in tiny
    /// defaults were substituted; surfaced to users as a startup notice.
    pub anchors_defaulted: bool,
}

impl NetConfig {
    /// Geometry of the tensor layer `i` consumes: the previous layer's
    /// output, or the network input for layer 0. Route layers read their
    /// listed sources instead and ignore this.
    pub fn layer_input_shape(&self, i: usize) -> LayerShape {
        if i == 0 {
            LayerShape {
                c: self.input_c,
                h: self.input_h,
                w: self.input_w,
            }
        } else {
            self.shapes[i - 1]
        }
    }

    /// Indices of the yolo layers, in file (coarse-to-fine) order.
    pub fn yolo_indices(&self) -> Vec<usize> {
        self.layers
            .iter()
            .enumerate()
            .filter_map(|(i, l)| matches!(l, Layer::Yolo(_)).then_some(i))
            .collect()
    }

    /// The yolo spec at layer `i`, if that layer is a head.
    pub fn yolo_spec(&self, i: usize) -> Option<&YoloSpec> {
        match &self.layers[i] {
            Layer::Yolo(spec) => Some(spec),
            _ => None,
        }
    }

    /// Number of classes, taken from the first yolo layer.
    pub fn num_classes(&self) -> Result<usize> {
        self.layers
            .iter()
            .find_map(|l| match l {
                Layer::Yolo(spec) => Some(spec.classes),
                _ => None,
            })
            .ok_or_else(|| Error::Data("model graph has no yolo layer".into()))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn head_depth_formula() {
        assert_eq!(compute_head_depth(6, 3), 33); // the six-class tiny graph
        assert_eq!(compute_head_depth(0, 1), 5);
        assert_eq!(compute_head_depth(80, 3), 255);
    }
}
