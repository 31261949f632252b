//! JSONL streams: one frame, ground-truth frame or track record per line.
//!
//! Writers print every real number with exactly 6 fractional digits and a fixed key order,
//! so files are byte-identical across runs and platforms.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::detection::{Frame, Modality};
use crate::error::{Error, Result};
use crate::eval::{GroundTruthFrame, PredictedObject};
use crate::inter_frame::{Track, TrackStatus};

/// How unknown fields are treated when parsing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ParseMode {
    /// Unknown fields are errors.
    #[default]
    Strict,
    /// Unknown fields are ignored.
    Lenient,
}

/// One track at one timestamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRecord {
    pub t: f64,
    pub track: u64,
    pub status: TrackStatus,
    pub modality: Modality,
    pub range: f64,
    pub azimuth: f64,
    pub x: f64,
    pub y: f64,
    pub vel: f64,
    /// Whether a detection was absorbed in this frame (otherwise the state is a prediction).
    pub updated: bool,
    pub vision_id: Option<u32>,
    pub radar_id: Option<u32>,
    /// Object class, known once a vision detection has joined the track.
    pub class: Option<String>,
}

impl TrackRecord {
    pub fn from_track(t: f64, track: &Track) -> Self {
        let s = track.state();
        let (vision_id, radar_id) = match (track.updated(), track.latest()) {
            (true, Some(e)) => (e.vision_id, e.radar_id),
            _ => (None, None),
        };
        Self {
            t,
            track: track.id(),
            status: track.status(),
            modality: track.modality(),
            range: s.range,
            azimuth: s.azimuth,
            x: s.x(),
            y: s.y(),
            vel: s.velocity,
            updated: track.updated(),
            vision_id,
            radar_id,
            class: track.class().map(str::to_string),
        }
    }

    pub fn prediction(&self) -> PredictedObject {
        PredictedObject {
            id: self.track,
            range: self.range,
            azimuth: self.azimuth,
        }
    }
}

fn num(out: &mut String, x: f64) {
    let s = format!("{x:.6}");
    // Avoid "-0.000000" so that sign-of-zero noise never changes bytes.
    if s.trim_start_matches('-').bytes().all(|b| b == b'0' || b == b'.') {
        out.push_str(&s.replace('-', ""));
    } else {
        out.push_str(&s);
    }
}

fn opt_id(out: &mut String, id: Option<u32>) {
    match id {
        Some(i) => {
            let _ = write!(out, "{i}");
        }
        None => out.push_str("null"),
    }
}

fn json_str(s: &str) -> String {
    serde_json::to_string(s).expect("string serializes")
}

pub fn write_frame_line(out: &mut String, f: &Frame) {
    out.push_str("{\"t\":");
    num(out, f.t);
    out.push_str(",\"vision\":[");
    for (k, v) in f.vision.iter().enumerate() {
        if k > 0 {
            out.push(',');
        }
        let _ = write!(out, "{{\"id\":{},\"u\":", v.id);
        num(out, v.u);
        out.push_str(",\"v\":");
        num(out, v.v);
        out.push_str(",\"w\":");
        num(out, v.w);
        out.push_str(",\"h\":");
        num(out, v.h);
        out.push_str(",\"conf\":");
        num(out, v.conf);
        let _ = write!(out, ",\"class\":{}", json_str(&v.class));
        if let Some(r) = v.range {
            out.push_str(",\"range\":");
            num(out, r);
        }
        if let Some(vel) = v.vel {
            out.push_str(",\"vel\":");
            num(out, vel);
        }
        out.push('}');
    }
    out.push_str("],\"radar\":[");
    for (k, r) in f.radar.iter().enumerate() {
        if k > 0 {
            out.push(',');
        }
        let _ = write!(out, "{{\"id\":{},\"range\":", r.id);
        num(out, r.range);
        out.push_str(",\"azimuth\":");
        num(out, r.azimuth);
        out.push_str(",\"vel\":");
        num(out, r.vel);
        out.push_str(",\"conf\":");
        num(out, r.conf);
        out.push('}');
    }
    out.push_str("]}\n");
}

pub fn write_ground_truth_line(out: &mut String, g: &GroundTruthFrame) {
    out.push_str("{\"t\":");
    num(out, g.t);
    out.push_str(",\"pitch\":");
    num(out, g.pitch);
    out.push_str(",\"objects\":[");
    for (k, o) in g.objects.iter().enumerate() {
        if k > 0 {
            out.push(',');
        }
        let _ = write!(out, "{{\"id\":{},\"corners\":[", o.id);
        for (c, p) in o.corners.iter().enumerate() {
            if c > 0 {
                out.push(',');
            }
            out.push('[');
            num(out, p[0]);
            out.push(',');
            num(out, p[1]);
            out.push(']');
        }
        out.push_str("],\"distance\":");
        num(out, o.distance);
        let _ = write!(out, ",\"visible\":{}", o.visible);
        if let Some(id) = o.vision_id {
            let _ = write!(out, ",\"vision_id\":{id}");
        }
        if let Some(id) = o.radar_id {
            let _ = write!(out, ",\"radar_id\":{id}");
        }
        out.push('}');
    }
    out.push_str("]}\n");
}

pub fn write_track_line(out: &mut String, r: &TrackRecord) {
    out.push_str("{\"t\":");
    num(out, r.t);
    let _ = write!(
        out,
        ",\"track\":{},\"status\":\"{}\",\"modality\":\"{}\",\"range\":",
        r.track,
        r.status.as_str(),
        r.modality
    );
    num(out, r.range);
    out.push_str(",\"azimuth\":");
    num(out, r.azimuth);
    out.push_str(",\"x\":");
    num(out, r.x);
    out.push_str(",\"y\":");
    num(out, r.y);
    out.push_str(",\"vel\":");
    num(out, r.vel);
    let _ = write!(out, ",\"updated\":{},\"vision_id\":", r.updated);
    opt_id(out, r.vision_id);
    out.push_str(",\"radar_id\":");
    opt_id(out, r.radar_id);
    out.push_str(",\"class\":");
    match &r.class {
        Some(c) => out.push_str(&json_str(c)),
        None => out.push_str("null"),
    }
    out.push_str("}\n");
}

fn render<T>(items: &[T], f: impl Fn(&mut String, &T)) -> String {
    let mut out = String::new();
    for item in items {
        f(&mut out, item);
    }
    out
}

pub fn save_frames(path: &Path, frames: &[Frame]) -> Result<()> {
    Ok(fs::write(path, render(frames, write_frame_line))?)
}

pub fn save_ground_truth(path: &Path, truth: &[GroundTruthFrame]) -> Result<()> {
    Ok(fs::write(path, render(truth, write_ground_truth_line))?)
}

pub fn save_tracks(path: &Path, records: &[TrackRecord]) -> Result<()> {
    Ok(fs::write(path, render(records, write_track_line))?)
}

/// Allowed keys per object path; `[]` marks array elements.
type Schema = &'static [(&'static str, &'static [&'static str])];

const FRAME_SCHEMA: Schema = &[
    ("", &["t", "vision", "radar"]),
    ("vision[]", &["id", "u", "v", "w", "h", "conf", "class", "range", "vel"]),
    ("radar[]", &["id", "range", "azimuth", "vel", "conf"]),
];

const GT_SCHEMA: Schema = &[
    ("", &["t", "pitch", "objects"]),
    ("objects[]", &["id", "corners", "distance", "visible", "vision_id", "radar_id"]),
];

const TRACK_SCHEMA: Schema = &[(
    "",
    &[
        "t", "track", "status", "modality", "range", "azimuth", "x", "y", "vel", "updated", "vision_id",
        "radar_id", "class",
    ],
)];

/// Finds the first key not in the schema, returning its concrete path (e.g. `vision[2].foo`).
fn unknown_field(v: &Value, schema: Schema, shape: &str, path: &str) -> Option<String> {
    match v {
        Value::Object(map) => {
            let allowed = schema.iter().find(|(s, _)| *s == shape).map(|(_, k)| *k);
            for (key, child) in map {
                let child_path = if path.is_empty() {
                    key.clone()
                } else {
                    format!("{path}.{key}")
                };
                if let Some(allowed) = allowed {
                    if !allowed.contains(&key.as_str()) {
                        return Some(child_path);
                    }
                }
                let child_shape = if shape.is_empty() {
                    key.clone()
                } else {
                    format!("{shape}.{key}")
                };
                if let Some(p) = unknown_field(child, schema, &child_shape, &child_path) {
                    return Some(p);
                }
            }
            None
        }
        Value::Array(items) => items.iter().enumerate().find_map(|(i, item)| {
            unknown_field(item, schema, &format!("{shape}[]"), &format!("{path}[{i}]"))
        }),
        _ => None,
    }
}

fn parse_lines<T: DeserializeOwned>(text: &str, mode: ParseMode, schema: Schema, source: &str) -> Result<Vec<T>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.trim().is_empty() {
            continue;
        }
        let err = |path: String, message: String| Error::Parse {
            line: line_no,
            path,
            message: format!("{source}: {message}"),
        };
        let value: Value = serde_json::from_str(line).map_err(|e| err(String::from("."), e.to_string()))?;
        if mode == ParseMode::Strict {
            if let Some(p) = unknown_field(&value, schema, "", "") {
                return Err(err(p, "unknown field".into()));
            }
        }
        let item: T = serde_path_to_error::deserialize(value).map_err(|e| err(e.path().to_string(), e.inner().to_string()))?;
        out.push(item);
    }
    Ok(out)
}

pub fn parse_frames(text: &str, mode: ParseMode) -> Result<Vec<Frame>> {
    parse_lines(text, mode, FRAME_SCHEMA, "frame")
}

pub fn parse_ground_truth(text: &str, mode: ParseMode) -> Result<Vec<GroundTruthFrame>> {
    parse_lines(text, mode, GT_SCHEMA, "ground truth")
}

pub fn parse_tracks(text: &str, mode: ParseMode) -> Result<Vec<TrackRecord>> {
    parse_lines(text, mode, TRACK_SCHEMA, "track")
}

pub fn load_frames(path: &Path, mode: ParseMode) -> Result<Vec<Frame>> {
    parse_frames(&fs::read_to_string(path)?, mode)
}

pub fn load_ground_truth(path: &Path, mode: ParseMode) -> Result<Vec<GroundTruthFrame>> {
    parse_ground_truth(&fs::read_to_string(path)?, mode)
}

pub fn load_tracks(path: &Path, mode: ParseMode) -> Result<Vec<TrackRecord>> {
    parse_tracks(&fs::read_to_string(path)?, mode)
}
