use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::annotation::{FrameAnnotation, Streams};
use crate::error::{invalid, Error, Result};
use crate::frame::{Rgb, RgbFrame, BLACK, WHITE};
use crate::mask::render_mask;
use crate::skeleton::{render_skeleton, Layout, SkeletonStyle};

/// The seven input representations. `op_*` skeletons come from BODY-25
/// annotations, `det_*` skeletons from COCO-17 annotations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantKind {
    Rgb,
    OpSkelNobg,
    OpSkelBg,
    DetSkelNobg,
    DetSkelBg,
    MaskNobg,
    MaskBg,
}

impl VariantKind {
    pub const ALL: [VariantKind; 7] = [
        VariantKind::Rgb,
        VariantKind::OpSkelNobg,
        VariantKind::OpSkelBg,
        VariantKind::DetSkelNobg,
        VariantKind::DetSkelBg,
        VariantKind::MaskNobg,
        VariantKind::MaskBg,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            VariantKind::Rgb => "rgb",
            VariantKind::OpSkelNobg => "op_skel_nobg",
            VariantKind::OpSkelBg => "op_skel_bg",
            VariantKind::DetSkelNobg => "det_skel_nobg",
            VariantKind::DetSkelBg => "det_skel_bg",
            VariantKind::MaskNobg => "mask_nobg",
            VariantKind::MaskBg => "mask_bg",
        }
    }

    pub fn keeps_background(self) -> bool {
        matches!(self, VariantKind::OpSkelBg | VariantKind::DetSkelBg | VariantKind::MaskBg)
    }

    pub fn skeleton_layout(self) -> Option<Layout> {
        match self {
            VariantKind::OpSkelNobg | VariantKind::OpSkelBg => Some(Layout::Body25),
            VariantKind::DetSkelNobg | VariantKind::DetSkelBg => Some(Layout::Coco17),
            _ => None,
        }
    }

    pub fn draws_masks(self) -> bool {
        matches!(self, VariantKind::MaskNobg | VariantKind::MaskBg)
    }

    /// Checks that the annotation streams this variant reads are present.
    pub fn check_streams(self, streams: &Streams) -> Result<()> {
        if let Some(l) = self.skeleton_layout() {
            if !streams.has_layout(l) {
                return Err(Error::MissingStream(l.to_string()));
            }
        }
        if (self.draws_masks() || self.keeps_background()) && !streams.masks {
            return Err(Error::MissingStream("masks".into()));
        }
        Ok(())
    }
}

impl fmt::Display for VariantKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for VariantKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        VariantKind::ALL
            .into_iter()
            .find(|v| v.as_str() == s)
            .ok_or_else(|| invalid!("unknown variant `{s}`"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RenderStyle {
    pub skeleton: SkeletonStyle,
    pub skeleton_color: Rgb,
    pub mask_fill: Rgb,
}

impl Default for RenderStyle {
    fn default() -> Self {
        RenderStyle {
            skeleton: SkeletonStyle::default(),
            skeleton_color: WHITE,
            mask_fill: WHITE,
        }
    }
}

/// Builds one privacy frame at native resolution.
///
/// Background-keeping kinds start from the frame with every person pixel
/// replaced by the background model; the others start from black.
pub fn compose_variant(
    kind: VariantKind,
    frame: &RgbFrame,
    annotation: &FrameAnnotation,
    streams: &Streams,
    background: Option<&RgbFrame>,
    style: &RenderStyle,
) -> Result<RgbFrame> {
    kind.check_streams(streams)?;
    if kind == VariantKind::Rgb {
        return Ok(frame.clone());
    }
    let (w, h) = (frame.width, frame.height);
    let mut canvas = if kind.keeps_background() {
        let bg = background.ok_or_else(|| invalid!("{kind} needs a background image"))?;
        if (bg.width, bg.height) != (w, h) {
            return Err(invalid!("background is {}x{}, frame is {w}x{h}", bg.width, bg.height));
        }
        let mut c = frame.clone();
        if let Some(m) = annotation.union_mask(w, h)? {
            for (i, _) in m.bits().iter().enumerate().filter(|(_, &b)| b) {
                c.pixels[i * 3..i * 3 + 3].copy_from_slice(&bg.pixels[i * 3..i * 3 + 3]);
            }
        }
        c
    } else {
        RgbFrame::filled(w, h, BLACK)
    };
    if let Some(layout) = kind.skeleton_layout() {
        render_skeleton(&mut canvas, &annotation.persons_with(layout), &style.skeleton, style.skeleton_color)?;
    }
    if kind.draws_masks() {
        render_mask(&mut canvas, &annotation.decode_masks(w, h)?, style.mask_fill)?;
    }
    Ok(canvas)
}
