//! Deterministic hallway scenes with walking stick figures and scripted
//! anomalies.
//!
//! Every frame is a pure function of the scene config and the frame index,
//! so sequences are rendered lazily. Person pixels are painted with
//! [`SENTINEL`], a colour that never occurs elsewhere in a scene.

use std::f64::consts::PI;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::annotation::{AnnotationHeader, AnnotationWriter, FrameAnnotation, Streams};
use crate::error::{invalid, Error, Result};
use crate::frame::{Rgb, RgbFrame};
use crate::mask::Bitmask;
use crate::metrics::{write_intervals, Interval};
use crate::skeleton::{disc, thick_line, Layout, Person};
use crate::source::{frame_path, write_png, FrameSource, ANNOTATIONS_FILE, FRAMES_DIR};

pub const SENTINEL: Rgb = [255, 0, 255];
pub const SCENE_FILE: &str = "scene.json";
pub const INTERVALS_FILE: &str = "intervals.csv";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ActorSpec {
    /// Time at which the actor starts walking; earlier times hide the actor.
    pub entry_time: f64,
    /// Ground-contact points the actor walks between, back and forth.
    pub waypoints: Vec<[f64; 2]>,
    /// Pixels per second.
    pub speed: f64,
    /// Peak leg swing in radians.
    pub gait_amplitude: f64,
    /// Strides per second.
    pub gait_frequency: f64,
    /// Standing height in pixels.
    pub scale: f64,
}

/// A static box standing on the floor until an object strike moves it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneObject {
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
    pub color: Rgb,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    /// The actor topples and lies prone.
    Fall,
    /// The actor stops, swings both arms wildly and kicks.
    Flail,
    /// The actor kicks and punches while the object tumbles away.
    ObjectStrike,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnomalyEvent {
    pub kind: EventKind,
    pub actor: usize,
    pub start: f64,
    pub end: f64,
    /// Object displaced by an object strike.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub object: Option<usize>,
}

impl AnomalyEvent {
    fn active(&self, t: f64) -> bool {
        t >= self.start && t < self.end
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SceneConfig {
    /// Seeds the static layout (palette, doors, texture).
    pub seed: u64,
    pub duration: f64,
    pub fps: f64,
    pub width: usize,
    pub height: usize,
    pub actors: Vec<ActorSpec>,
    #[serde(default)]
    pub objects: Vec<SceneObject>,
    #[serde(default)]
    pub events: Vec<AnomalyEvent>,
}

impl SceneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.duration > 0.0 && self.duration.is_finite()) {
            return Err(invalid!("scene duration must be positive"));
        }
        if !(self.fps > 0.0 && self.fps.is_finite()) {
            return Err(invalid!("scene fps must be positive"));
        }
        if self.width < 16 || self.height < 16 {
            return Err(invalid!("scene must be at least 16x16"));
        }
        for (i, a) in self.actors.iter().enumerate() {
            let finite = a.waypoints.iter().flatten().all(|v| v.is_finite());
            if a.waypoints.is_empty() || !finite {
                return Err(invalid!("actor {i} needs finite waypoints"));
            }
            if !(a.speed >= 0.0 && a.gait_frequency >= 0.0 && a.scale > 0.0 && a.entry_time.is_finite()) {
                return Err(invalid!("actor {i} has a negative speed, frequency or scale"));
            }
        }
        for (i, e) in self.events.iter().enumerate() {
            if !(e.start >= 0.0 && e.start < e.end && e.end <= self.duration) {
                return Err(invalid!("event {i} [{}, {}] is outside [0, {}]", e.start, e.end, self.duration));
            }
            let actor = self
                .actors
                .get(e.actor)
                .ok_or_else(|| invalid!("event {i} names missing actor {}", e.actor))?;
            if actor.entry_time > e.start {
                return Err(invalid!("event {i} starts before actor {} enters", e.actor));
            }
            if e.kind == EventKind::ObjectStrike {
                let o = e.object.ok_or_else(|| invalid!("object strike {i} names no object"))?;
                if o >= self.objects.len() {
                    return Err(invalid!("event {i} names missing object {o}"));
                }
            }
            for (j, f) in self.events.iter().enumerate().skip(i + 1) {
                let overlap = e.start < f.end && f.start < e.end;
                let same_object = e.object.is_some() && e.object == f.object;
                if overlap && (e.actor == f.actor || same_object) {
                    return Err(invalid!("events {i} and {j} overlap on the same actor or object"));
                }
            }
        }
        Ok(())
    }

    pub fn frame_count(&self) -> usize {
        (self.duration * self.fps).round() as usize
    }

    pub fn labels(&self) -> Vec<Interval> {
        self.events.iter().map(|e| Interval::new(e.start, e.end)).collect()
    }
}

/// One rendered frame with its annotation record.
pub struct SceneFrame {
    pub rgb: RgbFrame,
    pub annotation: FrameAnnotation,
}

pub struct Scene {
    config: SceneConfig,
    backdrop: RgbFrame,
}

impl Scene {
    pub fn generate(config: SceneConfig) -> Result<Self> {
        config.validate()?;
        let backdrop = backdrop(&config);
        Ok(Scene { config, backdrop })
    }

    pub fn config(&self) -> &SceneConfig {
        &self.config
    }

    pub fn labels(&self) -> Vec<Interval> {
        self.config.labels()
    }

    pub fn time(&self, index: usize) -> f64 {
        index as f64 / self.config.fps
    }

    pub fn render(&self, index: usize) -> SceneFrame {
        self.render_with(index, &self.config.events)
    }

    /// The same frame with every event removed.
    pub fn render_counterfactual(&self, index: usize) -> SceneFrame {
        self.render_with(index, &[])
    }

    /// COCO-17 joints of an actor at time `t` (image coordinates), if visible.
    pub fn pose(&self, actor: usize, t: f64) -> Option<[[f64; 2]; 17]> {
        self.actor_pose(actor, t, &self.config.events).map(|p| p.coco)
    }

    fn render_with(&self, index: usize, events: &[AnomalyEvent]) -> SceneFrame {
        let t = self.time(index);
        let (w, h) = (self.config.width, self.config.height);
        let mut rgb = self.backdrop.clone();
        for (i, o) in self.config.objects.iter().enumerate() {
            let struck = events
                .iter()
                .find(|e| e.kind == EventKind::ObjectStrike && e.object == Some(i) && e.active(t));
            match struck {
                None => draw_object(&mut rgb, o),
                Some(e) => draw_tumbling(&mut rgb, o, t - e.start),
            }
        }
        let mut persons = Vec::new();
        let mut masks = Vec::new();
        for a in 0..self.config.actors.len() {
            let Some(pose) = self.actor_pose(a, t, events) else {
                continue;
            };
            let mask = pose.mask(w, h, self.config.actors[a].scale);
            for (i, _) in mask.bits().iter().enumerate().filter(|(_, &b)| b) {
                rgb.pixels[i * 3..i * 3 + 3].copy_from_slice(&SENTINEL);
            }
            persons.push(pose.person(Layout::Coco17));
            persons.push(pose.person(Layout::Body25));
            masks.push(mask.to_rle());
        }
        SceneFrame {
            rgb,
            annotation: FrameAnnotation {
                frame_index: index,
                persons,
                masks,
            },
        }
    }

    fn actor_pose(&self, a: usize, t: f64, events: &[AnomalyEvent]) -> Option<Pose> {
        let spec = &self.config.actors[a];
        if t < spec.entry_time {
            return None;
        }
        let event = events
            .iter()
            .find(|e| e.actor == a && e.active(t));
        let s = spec.scale;
        Some(match event {
            None => {
                let (ground, dir) = walk_position(spec, t);
                Pose::place(walking(spec, t, dir), ground, s)
            }
            Some(e) => {
                let (mut ground, dir) = walk_position(spec, e.start);
                let tau = t - e.start;
                let local = match e.kind {
                    EventKind::Fall => {
                        let u = (tau / 0.5).clamp(0.0, 1.0);
                        let smooth = u * u * (3.0 - 2.0 * u);
                        fallen(walking(spec, e.start, dir), (0.1 + 0.9 * smooth) * PI / 2.0, dir, s)
                    }
                    EventKind::Flail => {
                        ground[0] += 0.15 * s * (2.0 * PI * 1.3 * tau).sin();
                        let lean = 0.3 + 0.6 * (2.0 * PI * 0.9 * tau).sin();
                        tilted(flailing(tau, dir, s), lean, s)
                    }
                    EventKind::ObjectStrike => kicking(tau, dir, s),
                };
                Pose::place(local, ground, s)
            }
        })
    }
}

impl FrameSource for Scene {
    fn frame_count(&self) -> usize {
        self.config.frame_count()
    }

    fn fps(&self) -> f64 {
        self.config.fps
    }

    fn dimensions(&self) -> (usize, usize) {
        (self.config.width, self.config.height)
    }

    fn streams(&self) -> Streams {
        Streams {
            layouts: vec![Layout::Coco17, Layout::Body25],
            masks: true,
        }
    }

    fn frame(&self, index: usize) -> Result<RgbFrame> {
        self.check_index(index)?;
        Ok(self.render(index).rgb)
    }

    fn annotation(&self, index: usize) -> Result<FrameAnnotation> {
        self.check_index(index)?;
        Ok(self.render(index).annotation)
    }

    fn load(&self, index: usize) -> Result<(RgbFrame, FrameAnnotation)> {
        self.check_index(index)?;
        let f = self.render(index);
        Ok((f.rgb, f.annotation))
    }
}

impl Scene {
    fn check_index(&self, index: usize) -> Result<()> {
        if index >= self.frame_count() {
            return Err(invalid!("frame {index} is past the end of the scene"));
        }
        Ok(())
    }
}

// Local body coordinates: origin at the ground point, x right, y up, in pixels.
type P = [f64; 2];

/// Named joints in local or image coordinates.
#[derive(Clone, Debug)]
struct Pose {
    /// COCO-17 order.
    coco: [P; 17],
    /// Left toe, left heel, right toe, right heel.
    feet: [P; 4],
}

const NOSE: usize = 0;
const L_SHOULDER: usize = 5;
const R_SHOULDER: usize = 6;
const L_HIP: usize = 11;
const R_HIP: usize = 12;
const L_ANKLE: usize = 15;
const R_ANKLE: usize = 16;

const LIMBS: [(usize, usize); 10] = [
    (5, 7),
    (7, 9),
    (6, 8),
    (8, 10),
    (11, 13),
    (13, 15),
    (12, 14),
    (14, 16),
    (5, 6),
    (11, 12),
];

fn add(a: P, b: P) -> P {
    [a[0] + b[0], a[1] + b[1]]
}

fn mid(a: P, b: P) -> P {
    [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0]
}

/// Segment of `len` hanging at `angle` from straight down, swung toward `dir`.
fn limb(from: P, len: f64, angle: f64, dir: f64) -> P {
    add(from, [dir * len * angle.sin(), -len * angle.cos()])
}

struct Angles {
    thigh: [f64; 2],
    shin: [f64; 2],
    upper_arm: [f64; 2],
    forearm: [f64; 2],
    bob: f64,
}

fn skeleton(a: &Angles, dir: f64, s: f64) -> Pose {
    let hip = [0.0, 0.49 * s + a.bob];
    let neck = add(hip, [0.0, 0.30 * s]);
    let head = add(neck, [0.01 * s * dir, 0.09 * s]);
    let mut c = [[0.0; 2]; 17];
    c[NOSE] = add(head, [0.05 * s * dir, 0.0]);
    c[1] = add(head, [0.035 * s * dir - 0.015 * s, 0.02 * s]);
    c[2] = add(head, [0.035 * s * dir + 0.015 * s, 0.02 * s]);
    c[3] = add(head, [-0.01 * s * dir - 0.03 * s, 0.01 * s]);
    c[4] = add(head, [-0.01 * s * dir + 0.03 * s, 0.01 * s]);
    let shoulder = add(neck, [0.0, -0.02 * s]);
    for (side, off) in [(0, -1.0), (1, 1.0)] {
        let sh = add(shoulder, [off * 0.08 * s, 0.0]);
        let elbow = limb(sh, 0.16 * s, a.upper_arm[side], dir);
        let wrist = limb(elbow, 0.15 * s, a.forearm[side], dir);
        let hp = add(hip, [off * 0.05 * s, 0.0]);
        let knee = limb(hp, 0.23 * s, a.thigh[side], dir);
        let ankle = limb(knee, 0.23 * s, a.shin[side], dir);
        c[L_SHOULDER + side] = sh;
        c[7 + side] = elbow;
        c[9 + side] = wrist;
        c[L_HIP + side] = hp;
        c[13 + side] = knee;
        c[L_ANKLE + side] = ankle;
    }
    let feet = [
        add(c[L_ANKLE], [0.07 * s * dir, -0.025 * s]),
        add(c[L_ANKLE], [-0.02 * s * dir, -0.02 * s]),
        add(c[R_ANKLE], [0.07 * s * dir, -0.025 * s]),
        add(c[R_ANKLE], [-0.02 * s * dir, -0.02 * s]),
    ];
    let mut pose = Pose { coco: c, feet };
    pose.rest_on_ground(0.005 * s);
    pose
}

fn walking(spec: &ActorSpec, t: f64, dir: f64) -> Pose {
    let phase = 2.0 * PI * spec.gait_frequency * (t - spec.entry_time);
    let a = spec.gait_amplitude;
    let swing = phase.sin();
    let bend = 0.5 * a * (1.0 - phase.cos());
    let bend_r = 0.5 * a * (1.0 + phase.cos());
    let angles = Angles {
        thigh: [a * swing, -a * swing],
        shin: [a * swing - bend, -a * swing - bend_r],
        upper_arm: [-0.8 * a * swing, 0.8 * a * swing],
        forearm: [-0.8 * a * swing + 0.35, 0.8 * a * swing + 0.35],
        bob: 0.0,
    };
    skeleton(&angles, dir, spec.scale)
}

/// Wild arm swings and kicks.
fn flailing(tau: f64, dir: f64, s: f64) -> Pose {
    let w = 2.0 * PI * tau;
    let up = 0.5 * PI;
    let arm = [up + 1.4 * (3.0 * w).sin(), up + 1.4 * (3.0 * w + 2.0).sin()];
    let kick = [1.3 * (2.0 * w).sin().max(0.0), -0.7 * (2.0 * w).sin().min(0.0)];
    let angles = Angles {
        thigh: [kick[0], -kick[1]],
        shin: [0.4 * kick[0], -0.4 * kick[1]],
        upper_arm: arm,
        forearm: [arm[0] + (5.0 * w).sin(), arm[1] + (5.0 * w + 1.0).sin()],
        bob: 0.15 * s * (2.5 * w).sin().abs(),
    };
    skeleton(&angles, dir, s)
}

/// Standing in place, kicking and punching forward.
fn kicking(tau: f64, dir: f64, s: f64) -> Pose {
    let w = 2.0 * PI * tau;
    let kick = 1.4 * (1.2 * w).sin().max(0.0);
    let punch = 0.5 * PI * (0.5 + 0.5 * (1.7 * w).sin());
    let angles = Angles {
        thigh: [kick, -0.15],
        shin: [kick - 0.6 * (1.0 - kick / 1.4), -0.15],
        upper_arm: [punch, -0.8],
        forearm: [punch, -0.5],
        bob: 0.0,
    };
    skeleton(&angles, dir, s)
}

/// Tips the whole body over its feet by `theta` toward `dir`.
fn fallen(pose: Pose, theta: f64, dir: f64, s: f64) -> Pose {
    let mut pose = tilted(pose, dir * theta, s);
    pose.rest_on_ground(0.02 * s);
    pose
}

/// Rotates the body clockwise by `theta` about its ground point.
fn tilted(mut pose: Pose, theta: f64, s: f64) -> Pose {
    let (sin, cos) = (-theta).sin_cos();
    let rot = |p: P| [p[0] * cos - p[1] * sin, p[0] * sin + p[1] * cos];
    for p in pose.points_mut() {
        *p = rot(*p);
    }
    pose.rest_on_ground(0.005 * s);
    pose
}

impl Pose {
    fn points_mut(&mut self) -> impl Iterator<Item = &mut P> {
        self.coco.iter_mut().chain(self.feet.iter_mut())
    }

    fn rest_on_ground(&mut self, clearance: f64) {
        let low = self.points_mut().map(|p| p[1]).fold(f64::INFINITY, f64::min);
        for p in self.points_mut() {
            p[1] += clearance - low;
        }
    }

    /// Moves local coordinates to image coordinates around `ground`.
    fn place(mut local: Pose, ground: P, _scale: f64) -> Pose {
        for p in local.points_mut() {
            *p = [ground[0] + p[0], ground[1] - p[1]];
        }
        local
    }

    fn mask(&self, w: usize, h: usize, scale: f64) -> Bitmask {
        let mut m = Bitmask::new(w, h);
        let ip = |p: P| (p[0].round() as i64, p[1].round() as i64);
        let thickness = ((0.07 * scale).round() as usize).max(2);
        let c = &self.coco;
        let neck = mid(c[L_SHOULDER], c[R_SHOULDER]);
        let head = mid(c[3], c[4]);
        let mut segments: Vec<(P, P)> = LIMBS.iter().map(|&(a, b)| (c[a], c[b])).collect();
        segments.push((neck, mid(c[1], c[2])));
        segments.push((c[L_ANKLE], self.feet[0]));
        segments.push((self.feet[1], self.feet[0]));
        segments.push((c[R_ANKLE], self.feet[2]));
        segments.push((self.feet[3], self.feet[2]));
        for (a, b) in segments {
            for (x, y) in thick_line(ip(a), ip(b), thickness) {
                m.plot(x, y);
            }
        }
        fill_polygon(&mut m, &[c[L_SHOULDER], c[R_SHOULDER], c[R_HIP], c[L_HIP]]);
        for (x, y) in disc(ip(head), ((0.075 * scale).round() as usize).max(2)) {
            m.plot(x, y);
        }
        for p in c.iter().chain(&self.feet) {
            for (x, y) in disc(ip(*p), 1) {
                m.plot(x, y);
            }
        }
        m
    }

    fn person(&self, layout: Layout) -> Person {
        let c = &self.coco;
        let pts: Vec<P> = match layout {
            Layout::Coco17 => c.to_vec(),
            Layout::Body25 => vec![
                c[0],
                mid(c[5], c[6]),
                c[6],
                c[8],
                c[10],
                c[5],
                c[7],
                c[9],
                mid(c[11], c[12]),
                c[12],
                c[14],
                c[16],
                c[11],
                c[13],
                c[15],
                c[2],
                c[1],
                c[4],
                c[3],
                self.feet[0],
                mid(self.feet[0], c[15]),
                self.feet[1],
                self.feet[2],
                mid(self.feet[2], c[16]),
                self.feet[3],
            ],
        };
        Person {
            layout,
            joints: pts.iter().map(|p| [p[0] as f32, p[1] as f32, 0.95]).collect(),
        }
    }
}

fn fill_polygon(m: &mut Bitmask, poly: &[P]) {
    let (w, h) = (m.width as i64, m.height as i64);
    let y0 = poly.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min).floor().max(0.0) as i64;
    let y1 = poly.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max).ceil().min((h - 1) as f64) as i64;
    let x0 = poly.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min).floor().max(0.0) as i64;
    let x1 = poly.iter().map(|p| p[0]).fold(f64::NEG_INFINITY, f64::max).ceil().min((w - 1) as f64) as i64;
    for y in y0..=y1 {
        for x in x0..=x1 {
            let (px, py) = (x as f64, y as f64);
            let mut inside = false;
            let mut j = poly.len() - 1;
            for i in 0..poly.len() {
                let (a, b) = (poly[i], poly[j]);
                if (a[1] > py) != (b[1] > py) && px < (b[0] - a[0]) * (py - a[1]) / (b[1] - a[1]) + a[0] {
                    inside = !inside;
                }
                j = i;
            }
            if inside {
                m.plot(x, y);
            }
        }
    }
}

/// Ground point and facing direction (±1) on the back-and-forth path.
fn walk_position(spec: &ActorSpec, t: f64) -> (P, f64) {
    let pts = &spec.waypoints;
    let lengths: Vec<f64> = pts
        .windows(2)
        .map(|w| ((w[1][0] - w[0][0]).powi(2) + (w[1][1] - w[0][1]).powi(2)).sqrt())
        .collect();
    let total: f64 = lengths.iter().sum();
    if total == 0.0 || spec.speed == 0.0 {
        return (pts[0], 1.0);
    }
    let m = (spec.speed * (t - spec.entry_time)).rem_euclid(2.0 * total);
    let (mut d, backward) = if m <= total { (m, false) } else { (2.0 * total - m, true) };
    for (i, &len) in lengths.iter().enumerate() {
        if d <= len || i == lengths.len() - 1 {
            let f = if len > 0.0 { (d / len).min(1.0) } else { 0.0 };
            let (a, b) = (pts[i], pts[i + 1]);
            let p = [a[0] + (b[0] - a[0]) * f, a[1] + (b[1] - a[1]) * f];
            let mut dir = if b[0] >= a[0] { 1.0 } else { -1.0 };
            if backward {
                dir = -dir;
            }
            return (p, dir);
        }
        d -= len;
    }
    unreachable!("path has at least one segment")
}

/// A struck object shoved toward the frame centre, tumbling end over end.
fn draw_tumbling(frame: &mut RgbFrame, o: &SceneObject, tau: f64) {
    let centre = frame.width as f64 / 2.0;
    let shove = 1.2 * o.width.max(o.height) + 20.0;
    let toward = if o.x + o.width / 2.0 < centre { 1.0 } else { -1.0 };
    let travel = (0.3 + tau / 0.6).min(1.0);
    let cx = o.x + o.width / 2.0 + toward * shove * travel;
    let cy = o.y + o.height / 2.0 - 0.3 * o.height * (2.0 * PI * 1.2 * tau).sin().abs();
    let (sin, cos) = (0.3 + 2.0 * PI * 0.6 * tau).sin_cos();
    let (hw, hh) = (o.width / 2.0, o.height / 2.0);
    let corners: Vec<P> = [[-hw, -hh], [hw, -hh], [hw, hh], [-hw, hh]]
        .iter()
        .map(|c| [cx + c[0] * cos - c[1] * sin, cy + c[0] * sin + c[1] * cos])
        .collect();
    let mut body = Bitmask::new(frame.width, frame.height);
    fill_polygon(&mut body, &corners);
    let rim = [o.color[0] / 2, o.color[1] / 2, o.color[2] / 2];
    for (i, _) in body.bits().iter().enumerate().filter(|(_, &b)| b) {
        frame.pixels[i * 3..i * 3 + 3].copy_from_slice(&o.color);
    }
    for k in 0..4 {
        let (a, b) = (corners[k], corners[(k + 1) % 4]);
        let ip = |p: P| (p[0].round() as i64, p[1].round() as i64);
        for (x, y) in thick_line(ip(a), ip(b), 2) {
            frame.plot(x, y, rim);
        }
    }
}

fn draw_object(frame: &mut RgbFrame, o: &SceneObject) {
    let (x0, y0) = (o.x.round() as i64, o.y.round() as i64);
    let (x1, y1) = ((o.x + o.width).round() as i64, (o.y + o.height).round() as i64);
    let rim = [o.color[0] / 2, o.color[1] / 2, o.color[2] / 2];
    for y in y0..y1 {
        for x in x0..x1 {
            let edge = x == x0 || y == y0 || x == x1 - 1 || y == y1 - 1;
            frame.plot(x, y, if edge { rim } else { o.color });
        }
    }
}

/// Floor line of the hallway as a fraction of frame height.
const HORIZON: f64 = 0.45;

fn palette(rng: &mut ChaCha8Rng, lo: u8, hi: u8) -> Rgb {
    let base = rng.gen_range(lo..=hi) as i32;
    let tint = |rng: &mut ChaCha8Rng| (base + rng.gen_range(-18..=18)).clamp(20, 230) as u8;
    [tint(rng), tint(rng), tint(rng)]
}

fn shade(c: Rgb, d: i32) -> Rgb {
    c.map(|v| (v as i32 + d).clamp(20, 230) as u8)
}

fn backdrop(config: &SceneConfig) -> RgbFrame {
    let (w, h) = (config.width, config.height);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let wall = palette(&mut rng, 150, 200);
    let floor = palette(&mut rng, 70, 120);
    let door = palette(&mut rng, 60, 110);
    let horizon = (HORIZON * h as f64) as usize;
    let tile = 8;
    let jitter: Vec<i32> = (0..w.div_ceil(tile) * h.div_ceil(tile)).map(|_| rng.gen_range(-6..=6)).collect();
    let mut f = RgbFrame::black(w, h);
    for y in 0..h {
        for x in 0..w {
            let j = jitter[(y / tile) * w.div_ceil(tile) + x / tile];
            let c = if y < horizon {
                shade(wall, j)
            } else if y < horizon + 3 {
                shade(wall, -70)
            } else {
                let stripe = if ((y - horizon) / 12) % 2 == 0 { 0 } else { -8 };
                shade(floor, j + stripe)
            };
            f.set(x, y, c);
        }
    }
    let doors = rng.gen_range(2..=3);
    for d in 0..doors {
        let dw = (0.09 * w as f64) as usize;
        let dh = (0.30 * h as f64) as usize;
        let slot = w / doors;
        let x0 = d * slot + rng.gen_range(0..slot.saturating_sub(dw).max(1));
        let y0 = horizon.saturating_sub(dh);
        for y in y0..horizon {
            for x in x0..(x0 + dw).min(w) {
                let edge = x == x0 || x + 1 == (x0 + dw).min(w) || y == y0;
                f.set(x, y, if edge { shade(door, -30) } else { door });
            }
        }
    }
    f
}

/// Train/test scene pair sharing one hallway layout.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusConfig {
    pub seed: u64,
    pub fps: f64,
    pub width: usize,
    pub height: usize,
    pub train_seconds: f64,
    pub test_seconds: f64,
    pub actors: usize,
    pub objects: usize,
    /// Test-split events; the train split never has any.
    pub events: Vec<AnomalyEvent>,
}

impl Default for CorpusConfig {
    fn default() -> Self {
        CorpusConfig::desk_scale(7)
    }
}

impl CorpusConfig {
    /// 200 training and 120 test windows with six risk windows.
    pub fn desk_scale(seed: u64) -> Self {
        let event = |kind, actor, start: f64, object| AnomalyEvent {
            kind,
            actor,
            start,
            end: start + 10.0,
            object,
        };
        CorpusConfig {
            seed,
            fps: 30.0,
            width: 352,
            height: 240,
            train_seconds: 1000.0,
            test_seconds: 600.0,
            actors: 2,
            objects: 2,
            events: vec![
                event(EventKind::Fall, 0, 100.0, None),
                event(EventKind::ObjectStrike, 1, 300.0, Some(0)),
                event(EventKind::Flail, 1, 480.0, None),
            ],
        }
    }

    pub fn scenes(&self) -> (SceneConfig, SceneConfig) {
        let objects = self.layout_objects();
        let scene = |stream: u64, duration: f64, events: Vec<AnomalyEvent>| SceneConfig {
            seed: self.seed,
            duration,
            fps: self.fps,
            width: self.width,
            height: self.height,
            actors: self.actor_specs(stream),
            objects: objects.clone(),
            events,
        };
        (
            scene(2, self.train_seconds, Vec::new()),
            scene(3, self.test_seconds, self.events.clone()),
        )
    }

    fn rng(&self, stream: u64) -> ChaCha8Rng {
        let mut r = ChaCha8Rng::seed_from_u64(self.seed);
        r.set_stream(stream);
        r
    }

    fn layout_objects(&self) -> Vec<SceneObject> {
        let mut rng = self.rng(1);
        let (w, h) = (self.width as f64, self.height as f64);
        let floor = HORIZON * h;
        (0..self.objects)
            .map(|i| {
                let ow = rng.gen_range(0.11..0.16) * w;
                let oh = rng.gen_range(0.16..0.22) * h;
                let slot = w / self.objects as f64;
                let x = i as f64 * slot + rng.gen_range(0.05..0.4) * (slot - ow).max(1.0);
                SceneObject {
                    x,
                    y: floor + rng.gen_range(0.02..0.06) * h - oh,
                    width: ow,
                    height: oh,
                    color: palette(&mut rng, 35, 70),
                }
            })
            .collect()
    }

    fn actor_specs(&self, stream: u64) -> Vec<ActorSpec> {
        let mut rng = self.rng(stream);
        let (w, h) = (self.width as f64, self.height as f64);
        (0..self.actors)
            .map(|i| {
                let lane = 0.72 + 0.2 * (i as f64 + rng.gen_range(0.0..0.5)) / self.actors.max(1) as f64;
                let y = lane * h;
                let (x0, x1) = (0.08 * w, 0.92 * w);
                let waypoints = if rng.gen_bool(0.5) {
                    vec![[x0, y], [x1, y - 0.03 * h]]
                } else {
                    vec![[x1, y], [x0, y + 0.02 * h]]
                };
                ActorSpec {
                    entry_time: -rng.gen_range(0.0..60.0),
                    waypoints,
                    speed: rng.gen_range(0.07..0.12) * w,
                    gait_amplitude: rng.gen_range(0.35..0.5),
                    gait_frequency: rng.gen_range(0.9..1.3),
                    scale: rng.gen_range(0.40..0.46) * h,
                }
            })
            .collect()
    }
}

/// Renders a scene to a sequence directory: PNG frames, annotations,
/// risk intervals and the scene config.
pub fn write_scene(scene: &Scene, dir: &Path) -> Result<()> {
    let frames_dir = dir.join(FRAMES_DIR);
    std::fs::create_dir_all(&frames_dir).map_err(|e| Error::io(&frames_dir, e))?;
    let cfg = scene.config();
    let header = AnnotationHeader::new(cfg.width, cfg.height, cfg.fps, vec![Layout::Coco17, Layout::Body25], true);
    let mut ann = AnnotationWriter::create(&dir.join(ANNOTATIONS_FILE), &header)?;
    let indices: Vec<usize> = (0..scene.frame_count()).collect();
    for chunk in indices.chunks(256) {
        let records: Vec<FrameAnnotation> = chunk
            .par_iter()
            .map(|&i| {
                let f = scene.render(i);
                write_png(&frame_path(dir, i), &f.rgb)?;
                Ok(f.annotation)
            })
            .collect::<Result<_>>()?;
        for r in &records {
            ann.write(r)?;
        }
    }
    ann.finish()?;
    write_intervals(&dir.join(INTERVALS_FILE), &scene.labels())?;
    let path = dir.join(SCENE_FILE);
    let json = serde_json::to_string_pretty(cfg).map_err(|e| Error::format(&path, e))?;
    std::fs::write(&path, json).map_err(|e| Error::io(&path, e))
}

/// Writes `train/` (normal only) and `test/` sequence directories under `out`.
pub fn generate_corpus(train: &SceneConfig, test: &SceneConfig, out: &Path) -> Result<()> {
    if !train.events.is_empty() {
        return Err(invalid!(
            "the training scene must be normal-only but has {} events",
            train.events.len()
        ));
    }
    write_scene(&Scene::generate(train.clone())?, &out.join("train"))?;
    write_scene(&Scene::generate(test.clone())?, &out.join("test"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(events: Vec<AnomalyEvent>) -> SceneConfig {
        let mut c = CorpusConfig {
            train_seconds: 20.0,
            test_seconds: 20.0,
            events,
            ..CorpusConfig::desk_scale(3)
        };
        c.width = 176;
        c.height = 120;
        c.scenes().1
    }

    fn ev(kind: EventKind, actor: usize, start: f64, end: f64) -> AnomalyEvent {
        AnomalyEvent {
            kind,
            actor,
            start,
            end,
            object: (kind == EventKind::ObjectStrike).then_some(0),
        }
    }

    #[test]
    fn same_seed_same_frames() {
        let a = Scene::generate(small(vec![])).unwrap();
        let b = Scene::generate(small(vec![])).unwrap();
        for i in [0, 17, 301] {
            assert_eq!(a.render(i).rgb, b.render(i).rgb);
            assert_eq!(a.render(i).annotation, b.render(i).annotation);
        }
    }

    #[test]
    fn zero_actors_render_background_only() {
        let mut cfg = small(vec![]);
        cfg.actors.clear();
        let s = Scene::generate(cfg).unwrap();
        let f = s.render(5);
        assert!(f.annotation.persons.is_empty() && f.annotation.masks.is_empty());
        assert!(s.labels().is_empty());
        assert!(!f.rgb.contains_color(SENTINEL));
        assert_eq!(f.rgb, s.render(100).rgb);
    }

    #[test]
    fn sentinel_pixels_are_exactly_the_masks() {
        let s = Scene::generate(small(vec![ev(EventKind::Fall, 0, 2.0, 6.0)])).unwrap();
        for i in (0..s.frame_count()).step_by(23) {
            let f = s.render(i);
            let union = f.annotation.union_mask(176, 120).unwrap().unwrap();
            for (k, c) in f.rgb.colors().enumerate() {
                assert_eq!(c == SENTINEL, union.bits()[k], "frame {i} pixel {k}");
            }
        }
    }

    #[test]
    fn keypoints_lie_in_their_mask_box() {
        let s = Scene::generate(small(vec![ev(EventKind::Flail, 1, 1.0, 9.0)])).unwrap();
        for i in (0..s.frame_count()).step_by(7) {
            let a = s.render(i).annotation;
            let masks = a.decode_masks(176, 120).unwrap();
            for (k, m) in masks.iter().enumerate() {
                let (x0, y0, x1, y1) = m.bounding_box().unwrap();
                for p in &a.persons[2 * k..2 * k + 2] {
                    p.validate().unwrap();
                    for j in &p.joints {
                        let (x, y) = (j[0].round() as usize, j[1].round() as usize);
                        assert!(x >= x0 && x <= x1 && y >= y0 && y <= y1, "frame {i}: {j:?}");
                    }
                }
            }
        }
    }

    #[test]
    fn fall_drops_the_head() {
        let s = Scene::generate(small(vec![ev(EventKind::Fall, 0, 4.0, 9.0)])).unwrap();
        let scale = s.config().actors[0].scale;
        let ground_y = |p: &[[f64; 2]; 17]| p[15][1].max(p[16][1]);
        let before = s.pose(0, 3.9).unwrap();
        let after = s.pose(0, 4.5).unwrap();
        let height = |p: &[[f64; 2]; 17]| ground_y(p) - p[NOSE][1];
        assert!(height(&before) - height(&after) > 0.5 * scale);
        // prone for the rest of the event
        assert!(height(&s.pose(0, 8.9).unwrap()) < 0.3 * scale);
    }

    #[test]
    fn events_only_change_frames_inside_them() {
        let events = vec![
            ev(EventKind::Fall, 0, 2.0, 4.0),
            ev(EventKind::Flail, 1, 6.0, 8.0),
            ev(EventKind::ObjectStrike, 0, 10.0, 12.0),
        ];
        let s = Scene::generate(small(events.clone())).unwrap();
        for i in (0..s.frame_count()).step_by(5) {
            let t = s.time(i);
            let inside = events.iter().any(|e| e.active(t));
            let same = s.render(i).rgb == s.render_counterfactual(i).rgb;
            assert_eq!(same, !inside, "frame {i} at {t}s");
        }
        assert_eq!(s.labels().len(), 3);
        assert_eq!(s.labels()[1], Interval::new(6.0, 8.0));
    }

    #[test]
    fn contradictory_events_are_rejected() {
        let bad = small(vec![ev(EventKind::Fall, 0, 2.0, 6.0), ev(EventKind::Flail, 0, 5.0, 8.0)]);
        assert!(Scene::generate(bad).is_err());
        let outside = small(vec![ev(EventKind::Fall, 0, 15.0, 25.0)]);
        assert!(Scene::generate(outside).is_err());
        let no_actor = small(vec![ev(EventKind::Fall, 9, 1.0, 2.0)]);
        assert!(Scene::generate(no_actor).is_err());
    }

    #[test]
    fn desk_scale_corpus_arithmetic() {
        let c = CorpusConfig::desk_scale(1);
        let (train, test) = c.scenes();
        // 30 fps halved to 15, 75 frames per window
        assert_eq!(train.frame_count() / 2 / 75, 200);
        assert_eq!(test.frame_count() / 2 / 75, 120);
        assert!(train.events.is_empty());
        let risk_seconds: f64 = test.events.iter().map(|e| e.end - e.start).sum();
        let prevalence = risk_seconds / 5.0 / 120.0;
        assert!((0.04..=0.06).contains(&prevalence));
        assert_eq!(train.objects, test.objects);
        assert_eq!(train.seed, test.seed);
        assert_eq!(c.scenes(), (train, test));
    }

    #[test]
    fn corpus_writer_rejects_training_events() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = small(vec![ev(EventKind::Fall, 0, 1.0, 2.0)]);
        assert!(generate_corpus(&cfg, &cfg, dir.path()).is_err());
    }
}
