//! Parser for the INI-like layer-graph text format.
//!
//! A graph file is a sequence of `[kind]` sections, each followed by
//! `key=value` lines. Blank lines and lines starting with `#` or `;` are
//! ignored. For compactness, `key=value` pairs may also follow the section
//! header on the same line. The first section must be `[net]` and supplies
//! the input geometry; every later section is a layer.
//!
//! Parsing also runs shape inference and validates that each detection
//! head's input channel count equals `(5 + classes) · |mask|`, so a
//! `NetConfig` that parses is structurally sound for the forward pass.

use super::{
    Activation, ConvSpec, Layer, LayerShape, MaxpoolSpec, NetConfig, YoloSpec,
};
use crate::error::{Error, Result};
use crate::tensor::conv_out_dim;

/// Anchor priors substituted when the graph text gives none: the upstream
/// tiny-variant defaults. The coarse (first) head takes indices 3,4,5, the
/// fine head 0,1,2. Substitution is flagged on the parsed config.
pub const DEFAULT_ANCHORS: [(f32, f32); 6] = [
    (10.0, 14.0),
    (23.0, 27.0),
    (37.0, 58.0),
    (81.0, 82.0),
    (135.0, 169.0),
    (344.0, 319.0),
];

/// One `key=value` occurrence with its source line.
struct Param {
    key: String,
    value: String,
    line: usize,
}

/// A raw `[kind]` section before typing.
struct Section {
    kind: String,
    line: usize,
    params: Vec<Param>,
}

impl Section {
    fn get(&self, key: &str) -> Option<&Param> {
        self.params.iter().find(|p| p.key == key)
    }

    fn parse_usize(&self, key: &str) -> Result<Option<usize>> {
        match self.get(key) {
            None => Ok(None),
            Some(p) => p.value.parse::<usize>().map(Some).map_err(|_| Error::Cfg {
                line: p.line,
                msg: format!("{key} must be a non-negative integer, got `{}`", p.value),
            }),
        }
    }

    fn require_usize(&self, key: &str) -> Result<usize> {
        self.parse_usize(key)?.ok_or_else(|| Error::Cfg {
            line: self.line,
            msg: format!("[{}] is missing mandatory key `{key}`", self.kind),
        })
    }
}

fn split_sections(text: &str) -> Result<Vec<Section>> {
    let mut sections: Vec<Section> = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') || line.starts_with(';') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('[') {
            let Some(close) = rest.find(']') else {
                return Err(Error::Cfg {
                    line: line_no,
                    msg: "unterminated section header".into(),
                });
            };
            let kind = rest[..close].trim().to_string();
            if kind.is_empty() {
                return Err(Error::Cfg {
                    line: line_no,
                    msg: "empty section name".into(),
                });
            }
            let mut section = Section {
                kind,
                line: line_no,
                params: Vec::new(),
            };
            // Allow the compact one-line form "[conv] size=3 stride=1".
            for tok in rest[close + 1..].split_whitespace() {
                section.params.push(parse_pair(tok, line_no)?);
            }
            sections.push(section);
        } else {
            let Some(current) = sections.last_mut() else {
                return Err(Error::Cfg {
                    line: line_no,
                    msg: "key=value before any section".into(),
                });
            };
            current.params.push(parse_pair(line, line_no)?);
        }
    }
    Ok(sections)
}

fn parse_pair(tok: &str, line: usize) -> Result<Param> {
    let Some(eq) = tok.find('=') else {
        return Err(Error::Cfg {
            line,
            msg: format!("expected key=value, got `{tok}`"),
        });
    };
    let key = tok[..eq].trim().to_string();
    let value = tok[eq + 1..].trim().to_string();
    if key.is_empty() {
        return Err(Error::Cfg {
            line,
            msg: "empty key".into(),
        });
    }
    Ok(Param { key, value, line })
}

/// Warn about any section key the builder did not consume.
fn warn_unknown(section: &Section, known: &[&str], warnings: &mut Vec<String>) {
    for p in &section.params {
        if !known.contains(&p.key.as_str()) {
            warnings.push(format!(
                "line {}: ignoring unknown key `{}` in [{}]",
                p.line, p.key, section.kind
            ));
        }
    }
}

fn parse_anchor_list(p: &Param) -> Result<Vec<(f32, f32)>> {
    let values: Vec<f32> = p
        .value
        .split(',')
        .map(|v| v.trim().parse::<f32>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Cfg {
            line: p.line,
            msg: format!("anchors must be a comma-separated number list, got `{}`", p.value),
        })?;
    if values.is_empty() || values.len() % 2 != 0 {
        return Err(Error::Cfg {
            line: p.line,
            msg: format!("anchors list needs an even, non-zero count of values, got {}", values.len()),
        });
    }
    Ok(values.chunks(2).map(|c| (c[0], c[1])).collect())
}

fn parse_index_list(p: &Param) -> Result<Vec<i64>> {
    p.value
        .split(',')
        .map(|v| v.trim().parse::<i64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Cfg {
            line: p.line,
            msg: format!("expected a comma-separated integer list, got `{}`", p.value),
        })
}

/// Parse the graph text into a validated, shape-inferred [`NetConfig`].
pub fn parse_cfg(text: &str) -> Result<NetConfig> {
    let sections = split_sections(text)?;
    let Some(first) = sections.first() else {
        return Err(Error::Cfg {
            line: 1,
            msg: "first section must be net".into(),
        });
    };
    if first.kind != "net" {
        return Err(Error::Cfg {
            line: first.line,
            msg: "first section must be net".into(),
        });
    }

    let mut warnings = Vec::new();
    let input_w = first.require_usize("width")?;
    let input_h = first.require_usize("height")?;
    let input_c = first.require_usize("channels")?;
    if input_w == 0 || input_h == 0 || input_c == 0 {
        return Err(Error::Cfg {
            line: first.line,
            msg: "net width/height/channels must all be >= 1".into(),
        });
    }
    warn_unknown(first, &["width", "height", "channels"], &mut warnings);

    let mut layers: Vec<Layer> = Vec::new();
    let mut shapes: Vec<LayerShape> = Vec::new();
    let mut anchors_defaulted = false;
    // Heads seen so far, to hand out default masks scale by scale.
    let mut yolo_count = 0usize;

    for section in &sections[1..] {
        let index = layers.len();
        let input = if index == 0 {
            LayerShape {
                c: input_c,
                h: input_h,
                w: input_w,
            }
        } else {
            shapes[index - 1]
        };
        let located = |msg: String| Error::Cfg {
            line: section.line,
            msg: format!("layer {index}: {msg}"),
        };

        let (layer, out) = match section.kind.as_str() {
            "net" => {
                return Err(Error::Cfg {
                    line: section.line,
                    msg: "net section must appear exactly once, first".into(),
                })
            }
            "convolutional" => {
                let filters = section.require_usize("filters")?;
                let size = section.parse_usize("size")?.unwrap_or(1);
                let stride = section.parse_usize("stride")?.unwrap_or(1);
                if filters < 1 || size < 1 || stride < 1 {
                    return Err(located("filters, size, and stride must all be >= 1".into()));
                }
                // `padding` gives the per-side pixel count directly; the
                // `pad=1` flag means "same-ish": size/2 per side.
                let padding = match section.parse_usize("padding")? {
                    Some(p) => p,
                    None => {
                        if section.parse_usize("pad")?.unwrap_or(0) != 0 {
                            size / 2
                        } else {
                            0
                        }
                    }
                };
                let batch_normalize = section.parse_usize("batch_normalize")?.unwrap_or(0) != 0;
                let activation = match section.get("activation").map(|p| p.value.as_str()) {
                    None | Some("linear") => Activation::Linear,
                    Some("leaky") => Activation::Leaky,
                    Some(other) => {
                        return Err(located(format!("unsupported activation `{other}`")))
                    }
                };
                warn_unknown(
                    section,
                    &["filters", "size", "stride", "pad", "padding", "batch_normalize", "activation"],
                    &mut warnings,
                );
                let h = conv_out_dim(input.h, size, stride, 2 * padding).map_err(|e| located(e.to_string()))?;
                let w = conv_out_dim(input.w, size, stride, 2 * padding).map_err(|e| located(e.to_string()))?;
                (
                    Layer::Convolutional(ConvSpec {
                        filters,
                        size,
                        stride,
                        padding,
                        batch_normalize,
                        activation,
                    }),
                    LayerShape { c: filters, h, w },
                )
            }
            "maxpool" => {
                let stride = section.parse_usize("stride")?.unwrap_or(1);
                let size = section.parse_usize("size")?.unwrap_or(stride);
                let padding = section.parse_usize("padding")?.unwrap_or(size.saturating_sub(1));
                if size < 1 || stride < 1 {
                    return Err(located("size and stride must be >= 1".into()));
                }
                warn_unknown(section, &["size", "stride", "padding"], &mut warnings);
                let h = conv_out_dim(input.h, size, stride, padding).map_err(|e| located(e.to_string()))?;
                let w = conv_out_dim(input.w, size, stride, padding).map_err(|e| located(e.to_string()))?;
                (
                    Layer::Maxpool(MaxpoolSpec { size, stride, padding }),
                    LayerShape { c: input.c, h, w },
                )
            }
            "upsample" => {
                let factor = section.parse_usize("stride")?.unwrap_or(2);
                if factor < 1 {
                    return Err(located("stride must be >= 1".into()));
                }
                warn_unknown(section, &["stride"], &mut warnings);
                (
                    Layer::Upsample { factor },
                    LayerShape {
                        c: input.c,
                        h: input.h * factor,
                        w: input.w * factor,
                    },
                )
            }
            "route" => {
                let p = section.get("layers").ok_or_else(|| Error::Cfg {
                    line: section.line,
                    msg: format!("[route] layer {index} is missing mandatory key `layers`"),
                })?;
                let raw = parse_index_list(p)?;
                if raw.is_empty() {
                    return Err(located("route needs at least one source layer".into()));
                }
                let mut sources = Vec::with_capacity(raw.len());
                for v in raw {
                    // Negative indices count back from this layer; others
                    // are absolute. Either way the source must be earlier.
                    let resolved = if v < 0 { index as i64 + v } else { v };
                    if resolved < 0 || resolved >= index as i64 {
                        return Err(located(format!(
                            "route source {v} resolves to layer {resolved}, outside 0..{index}"
                        )));
                    }
                    sources.push(resolved as usize);
                }
                warn_unknown(section, &["layers"], &mut warnings);
                let base = shapes[sources[0]];
                let mut c = base.c;
                for &s in &sources[1..] {
                    let sh = shapes[s];
                    if sh.h != base.h || sh.w != base.w {
                        return Err(located(format!(
                            "route sources disagree spatially: layer {} is {}, layer {} is {}",
                            sources[0], base, s, sh
                        )));
                    }
                    c += sh.c;
                }
                (
                    Layer::Route { sources },
                    LayerShape { c, h: base.h, w: base.w },
                )
            }
            "yolo" => {
                let classes = section.require_usize("classes")?;
                if classes < 1 {
                    return Err(located("classes must be >= 1".into()));
                }
                let anchors = match section.get("anchors") {
                    Some(p) => parse_anchor_list(p)?,
                    None => {
                        anchors_defaulted = true;
                        warnings.push(format!(
                            "line {}: yolo layer {index} has no anchors; using built-in tiny defaults",
                            section.line
                        ));
                        DEFAULT_ANCHORS.to_vec()
                    }
                };
                if let Some(num) = section.parse_usize("num")? {
                    if num != anchors.len() {
                        return Err(located(format!(
                            "num={num} disagrees with {} anchor pairs",
                            anchors.len()
                        )));
                    }
                }
                let mask: Vec<usize> = match section.get("mask") {
                    Some(p) => {
                        let raw = parse_index_list(p)?;
                        let mut mask = Vec::with_capacity(raw.len());
                        for v in raw {
                            if v < 0 || v as usize >= anchors.len() {
                                return Err(located(format!(
                                    "mask index {v} outside anchor range 0..{}",
                                    anchors.len()
                                )));
                            }
                            mask.push(v as usize);
                        }
                        mask
                    }
                    // No mask: hand out the defaults by scale order —
                    // coarse (first) head gets the large anchors.
                    None if yolo_count == 0 => vec![3, 4, 5],
                    None if yolo_count == 1 => vec![0, 1, 2],
                    None => {
                        return Err(located(
                            "more than two yolo layers need explicit masks".into(),
                        ))
                    }
                };
                if mask.is_empty() {
                    return Err(located("mask selects no anchors".into()));
                }
                yolo_count += 1;
                let spec = YoloSpec { classes, anchors, mask };
                let expected = spec.depth();
                if input.c != expected {
                    return Err(located(format!(
                        "yolo input has {} channels but (5 + {} classes) x {} anchors requires {}",
                        input.c,
                        spec.classes,
                        spec.mask.len(),
                        expected
                    )));
                }
                warn_unknown(section, &["classes", "anchors", "num", "mask"], &mut warnings);
                (Layer::Yolo(spec), input)
            }
            other => {
                return Err(Error::Cfg {
                    line: section.line,
                    msg: format!("unknown section kind `{other}`"),
                })
            }
        };
        layers.push(layer);
        shapes.push(out);
    }

    Ok(NetConfig {
        input_w,
        input_h,
        input_c,
        layers,
        shapes,
        warnings,
        anchors_defaulted,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_single_conv() {
        let cfg = parse_cfg(
            "[net] width=416 height=416 channels=3\n[convolutional] filters=16 size=3 stride=1 pad=1 activation=leaky",
        )
        .unwrap();
        assert_eq!(cfg.layers.len(), 1);
        assert_eq!(cfg.shapes[0], LayerShape { c: 16, h: 416, w: 416 });
        assert!(matches!(
            &cfg.layers[0],
            Layer::Convolutional(ConvSpec { filters: 16, size: 3, stride: 1, padding: 1, activation: Activation::Leaky, .. })
        ));
    }

    #[test]
    fn missing_net_section() {
        let err = parse_cfg("[convolutional]\nfilters=4\nsize=1").unwrap_err();
        assert!(err.to_string().contains("first section must be net"), "{err}");
        let err = parse_cfg("# only comments\n").unwrap_err();
        assert!(err.to_string().contains("first section must be net"), "{err}");
    }

    #[test]
    fn comments_and_blank_lines_ignored() {
        let cfg = parse_cfg(
            "# top comment\n\n[net]\nwidth=32\nheight=32\nchannels=3\n; another\n\n[maxpool]\nsize=2\nstride=2\n",
        )
        .unwrap();
        assert_eq!(cfg.layers.len(), 1);
        assert_eq!(cfg.shapes[0], LayerShape { c: 3, h: 16, w: 16 });
    }

    #[test]
    fn maxpool_default_padding_preserves_odd_sizes() {
        // size 2 stride 1 with the default padding (size-1) keeps 13x13.
        let cfg = parse_cfg("[net] width=13 height=13 channels=1\n[maxpool] size=2 stride=1").unwrap();
        assert_eq!(cfg.shapes[0], LayerShape { c: 1, h: 13, w: 13 });
        // and the classic size 2 stride 2 halves even sizes: (416+1-2)/2+1 = 208
        let cfg = parse_cfg("[net] width=416 height=416 channels=1\n[maxpool] size=2 stride=2").unwrap();
        assert_eq!(cfg.shapes[0], LayerShape { c: 1, h: 208, w: 208 });
    }

    #[test]
    fn route_indices_relative_and_absolute() {
        let text = "\
[net] width=8 height=8 channels=3
[convolutional] filters=4 size=1
[convolutional] filters=5 size=1
[route] layers=-1,0
";
        let cfg = parse_cfg(text).unwrap();
        match &cfg.layers[2] {
            Layer::Route { sources } => assert_eq!(sources, &[1, 0]),
            other => panic!("expected route, got {other:?}"),
        }
        assert_eq!(cfg.shapes[2], LayerShape { c: 9, h: 8, w: 8 });
    }

    #[test]
    fn route_out_of_range_is_located() {
        let text = "[net] width=8 height=8 channels=3\n[route] layers=-2";
        let err = parse_cfg(text).unwrap_err().to_string();
        assert!(err.contains("layer 0") && err.contains("-2"), "{err}");
    }

    #[test]
    fn yolo_channel_mismatch_rejected() {
        // 32 input channels cannot host (5+6)*3 = 33.
        let text = "\
[net] width=416 height=416 channels=3
[convolutional] filters=32 size=1
[yolo] classes=6 mask=0,1,2 anchors=10,14,23,27,37,58
";
        let err = parse_cfg(text).unwrap_err().to_string();
        assert!(err.contains("33") && err.contains("32"), "{err}");
    }

    #[test]
    fn yolo_default_anchors_flag_and_masks() {
        let text = "\
[net] width=416 height=416 channels=3
[convolutional] filters=33 size=1
[yolo] classes=6
";
        let cfg = parse_cfg(text).unwrap();
        assert!(cfg.anchors_defaulted);
        assert!(!cfg.warnings.is_empty());
        let spec = cfg.yolo_spec(1).unwrap();
        assert_eq!(spec.anchors, DEFAULT_ANCHORS.to_vec());
        assert_eq!(spec.mask, vec![3, 4, 5]); // first head is the coarse scale
    }

    #[test]
    fn unknown_section_and_unknown_key() {
        let err = parse_cfg("[net] width=8 height=8 channels=3\n[dropout]").unwrap_err();
        assert!(err.to_string().contains("dropout"), "{err}");

        let cfg = parse_cfg("[net] width=8 height=8 channels=3 momentum=0.9\n[maxpool] size=2 stride=2").unwrap();
        assert_eq!(cfg.warnings.len(), 1);
        assert!(cfg.warnings[0].contains("momentum"));
    }

    #[test]
    fn shape_failure_names_line_and_layer() {
        let text = "[net]\nwidth=4\nheight=4\nchannels=1\n[convolutional]\nfilters=2\nsize=9\n";
        let err = parse_cfg(text).unwrap_err().to_string();
        assert!(err.contains("line 5") && err.contains("layer 0"), "{err}");
    }
}
