use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::frame::{Rgb, RgbFrame};

/// Keypoint layout of a pose estimator.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    Coco17,
    Body25,
}

const COCO17_EDGES: [(usize, usize); 19] = [
    (15, 13),
    (13, 11),
    (16, 14),
    (14, 12),
    (11, 12),
    (5, 11),
    (6, 12),
    (5, 6),
    (5, 7),
    (6, 8),
    (7, 9),
    (8, 10),
    (1, 2),
    (0, 1),
    (0, 2),
    (1, 3),
    (2, 4),
    (3, 5),
    (4, 6),
];

const BODY25_EDGES: [(usize, usize); 24] = [
    (1, 8),
    (1, 2),
    (1, 5),
    (2, 3),
    (3, 4),
    (5, 6),
    (6, 7),
    (8, 9),
    (9, 10),
    (10, 11),
    (8, 12),
    (12, 13),
    (13, 14),
    (1, 0),
    (0, 15),
    (15, 17),
    (0, 16),
    (16, 18),
    (14, 19),
    (19, 20),
    (14, 21),
    (11, 22),
    (22, 23),
    (11, 24),
];

impl Layout {
    pub fn joint_count(self) -> usize {
        match self {
            Layout::Coco17 => 17,
            Layout::Body25 => 25,
        }
    }

    pub fn edges(self) -> &'static [(usize, usize)] {
        match self {
            Layout::Coco17 => &COCO17_EDGES,
            Layout::Body25 => &BODY25_EDGES,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Layout::Coco17 => "coco17",
            Layout::Body25 => "body25",
        }
    }
}

impl fmt::Display for Layout {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Layout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "coco17" => Ok(Layout::Coco17),
            "body25" => Ok(Layout::Body25),
            other => Err(invalid!("unknown keypoint layout `{other}`")),
        }
    }
}

/// One detected person: joints as `[x, y, confidence]` in pixel coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Person {
    pub layout: Layout,
    pub joints: Vec<[f32; 3]>,
}

impl Person {
    pub fn validate(&self) -> Result<()> {
        if self.joints.len() != self.layout.joint_count() {
            return Err(invalid!(
                "{} person has {} joints, expected {}",
                self.layout,
                self.joints.len(),
                self.layout.joint_count()
            ));
        }
        for (i, j) in self.joints.iter().enumerate() {
            if !(0.0..=1.0).contains(&j[2]) || !j[0].is_finite() || !j[1].is_finite() {
                return Err(invalid!("joint {i} of {} person is malformed: {j:?}", self.layout));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SkeletonStyle {
    /// Joints with lower confidence are not drawn.
    pub threshold: f32,
    pub thickness: usize,
    pub radius: usize,
}

impl Default for SkeletonStyle {
    fn default() -> Self {
        SkeletonStyle {
            threshold: 0.1,
            thickness: 2,
            radius: 2,
        }
    }
}

/// Draws every edge whose endpoints both pass the confidence threshold,
/// then a disc on every kept joint. Geometry off the canvas is clipped.
pub fn render_skeleton(canvas: &mut RgbFrame, persons: &[Person], style: &SkeletonStyle, color: Rgb) -> Result<()> {
    for p in persons {
        p.validate()?;
    }
    for p in persons {
        let kept: Vec<bool> = p.joints.iter().map(|j| j[2] >= style.threshold).collect();
        let at = |i: usize| (p.joints[i][0].round() as i64, p.joints[i][1].round() as i64);
        for &(a, b) in p.layout.edges() {
            if kept[a] && kept[b] {
                for (x, y) in thick_line(at(a), at(b), style.thickness) {
                    canvas.plot(x, y, color);
                }
            }
        }
        for i in (0..p.joints.len()).filter(|&i| kept[i]) {
            for (x, y) in disc(at(i), style.radius) {
                canvas.plot(x, y, color);
            }
        }
    }
    Ok(())
}

/// Bresenham line with `thickness` pixels stacked across the minor axis.
pub fn thick_line(p0: (i64, i64), p1: (i64, i64), thickness: usize) -> Vec<(i64, i64)> {
    let t = thickness.max(1) as i64;
    let (lo, hi) = (-(t - 1) / 2, t / 2);
    let steep = (p1.1 - p0.1).abs() > (p1.0 - p0.0).abs();
    let mut out = Vec::new();
    for (x, y) in bresenham(p0, p1) {
        for o in lo..=hi {
            out.push(if steep { (x + o, y) } else { (x, y + o) });
        }
    }
    out
}

pub fn bresenham(p0: (i64, i64), p1: (i64, i64)) -> Vec<(i64, i64)> {
    let (mut x, mut y) = p0;
    let dx = (p1.0 - x).abs();
    let dy = -(p1.1 - y).abs();
    let sx = if x < p1.0 { 1 } else { -1 };
    let sy = if y < p1.1 { 1 } else { -1 };
    let mut err = dx + dy;
    let mut out = Vec::with_capacity((dx - dy) as usize + 1);
    loop {
        out.push((x, y));
        if (x, y) == p1 {
            break;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
    out
}

pub fn disc(c: (i64, i64), radius: usize) -> impl Iterator<Item = (i64, i64)> {
    let r = radius as i64;
    (-r..=r).flat_map(move |dy| {
        (-r..=r)
            .filter(move |dx| dx * dx + dy * dy <= r * r)
            .map(move |dx| (c.0 + dx, c.1 + dy))
    })
}
