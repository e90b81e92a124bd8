//! Detection file ingestion and serialization.
//!
//! Two input formats are supported: MOT-16 style comma-separated text and a
//! native JSON-lines format. Appearance descriptors arrive through a binary
//! sidecar of little-endian f32 values, 128 per record, in detection order.

use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::Path;

use super::{BBox, ClassLabel, Detection, APPEARANCE_DIM};
use crate::error::{Error, Result};

/// On-disk detection formats.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectionFormat {
    /// `frame,id,left,top,width,height,conf,...` — one record per line.
    Mot16,
    /// One JSON object per line:
    /// `{"frame":..,"bbox":[l,t,w,h],"class":..,"conf":..,"contour":..}`.
    JsonLines,
}

/// Ingestion options.
#[derive(Debug, Clone, Copy, Default)]
pub struct ParseOptions {
    /// When set, bboxes are clamped to `[0,w] x [0,h]` and clamps recorded.
    pub image_size: Option<(u32, u32)>,
}

/// A non-fatal ingestion finding, tied to a 1-based line number.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseWarning {
    pub line: usize,
    pub message: String,
}

/// Detections grouped by frame, in frame order.
#[derive(Debug, Clone, Default)]
pub struct ParsedDetections {
    /// `(frame_index, detections)` with frame indices strictly increasing;
    /// detections within a frame sorted by bbox left edge.
    pub frames: Vec<(u64, Vec<Detection>)>,
    pub warnings: Vec<ParseWarning>,
}

impl ParsedDetections {
    pub fn total_detections(&self) -> usize {
        self.frames.iter().map(|(_, d)| d.len()).sum()
    }

    pub fn iter_all(&self) -> impl Iterator<Item = &Detection> {
        self.frames.iter().flat_map(|(_, d)| d.iter())
    }
}

#[derive(Serialize, Deserialize)]
struct JsonDetection {
    frame: u64,
    bbox: [f64; 4],
    class: String,
    conf: f64,
    contour: Option<Vec<[f64; 2]>>,
}

/// Parses a detection file and, when given, joins the appearance sidecar by
/// record order. Frame indices must be non-decreasing; malformed lines are
/// skipped and reported with their line numbers.
pub fn parse_detection_file(
    path: &Path,
    format: DetectionFormat,
    sidecar: Option<&Path>,
    options: &ParseOptions,
) -> Result<ParsedDetections> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut warnings = Vec::new();
    let mut records: Vec<Detection> = Vec::new();
    let mut last_frame: Option<u64> = None;

    for (idx, raw_line) in text.lines().enumerate() {
        let line_no = idx + 1;
        let line = raw_line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let parsed = match format {
            DetectionFormat::Mot16 => parse_mot_line(line),
            DetectionFormat::JsonLines => parse_json_line(line),
        };
        let mut det = match parsed {
            Ok((det, mut line_warnings)) => {
                for w in line_warnings.drain(..) {
                    warnings.push(ParseWarning {
                        line: line_no,
                        message: w,
                    });
                }
                det
            }
            Err(message) => {
                warnings.push(ParseWarning {
                    line: line_no,
                    message,
                });
                continue;
            }
        };
        if let Some(last) = last_frame {
            if det.frame_index < last {
                return Err(Error::NonMonotoneFrames {
                    last,
                    got: det.frame_index,
                });
            }
        }
        last_frame = Some(det.frame_index);
        if let Some(clamp_msg) = clamp_detection(&mut det, options.image_size) {
            warnings.push(ParseWarning {
                line: line_no,
                message: clamp_msg,
            });
        }
        if det.bbox.width <= 0.0 || det.bbox.height <= 0.0 {
            warnings.push(ParseWarning {
                line: line_no,
                message: "bbox has no area inside the image extent, skipped".into(),
            });
            continue;
        }
        records.push(det);
    }

    if let Some(sidecar_path) = sidecar {
        let vectors = read_appearance_sidecar(sidecar_path)?;
        if vectors.len() != records.len() {
            return Err(Error::AppearanceCount {
                records: vectors.len(),
                detections: records.len(),
            });
        }
        for (i, (det, vec)) in records.iter_mut().zip(vectors.iter()).enumerate() {
            let norm = vec.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !norm.is_finite() || norm == 0.0 {
                warnings.push(ParseWarning {
                    line: i + 1,
                    message: format!("sidecar record {} has zero/non-finite norm, ignored", i),
                });
                continue;
            }
            det.appearance = Some(vec.iter().map(|v| v / norm).collect());
        }
    }

    // Group into frame buckets; sort within a frame by left edge.
    let mut frames: Vec<(u64, Vec<Detection>)> = Vec::new();
    for det in records {
        match frames.last_mut() {
            Some((frame, bucket)) if *frame == det.frame_index => bucket.push(det),
            _ => frames.push((det.frame_index, vec![det])),
        }
    }
    for (_, bucket) in frames.iter_mut() {
        bucket.sort_by(|a, b| a.bbox.left.total_cmp(&b.bbox.left));
    }

    for w in &warnings {
        log::warn!("{}:{}: {}", path.display(), w.line, w.message);
    }

    Ok(ParsedDetections { frames, warnings })
}

fn parse_mot_line(line: &str) -> std::result::Result<(Detection, Vec<String>), String> {
    let fields: Vec<&str> = line.split(',').map(str::trim).collect();
    if fields.len() < 7 {
        return Err(format!("expected at least 7 fields, got {}", fields.len()));
    }
    let frame: u64 = fields[0]
        .parse()
        .map_err(|_| format!("bad frame index `{}`", fields[0]))?;
    if frame < 1 {
        return Err("frame index must be >= 1".into());
    }
    let num = |i: usize| -> std::result::Result<f64, String> {
        fields[i]
            .parse::<f64>()
            .map_err(|_| format!("bad number `{}` in field {}", fields[i], i + 1))
    };
    let (left, top, width, height, conf) = (num(2)?, num(3)?, num(4)?, num(5)?, num(6)?);
    if !(width > 0.0 && height > 0.0) {
        return Err(format!("bbox must have positive size, got {width}x{height}"));
    }
    let mut warnings = Vec::new();
    let confidence = clamp_confidence(conf, &mut warnings);
    let det = Detection::new(
        frame,
        BBox::new(left, top, width, height),
        // MOT-16 detection records carry no class; the pipeline is
        // person-centric so they ingest as pedestrians.
        ClassLabel::Pedestrian,
        confidence,
    );
    Ok((det, warnings))
}

fn parse_json_line(line: &str) -> std::result::Result<(Detection, Vec<String>), String> {
    let rec: JsonDetection = serde_json::from_str(line).map_err(|e| format!("bad JSON: {e}"))?;
    if rec.frame < 1 {
        return Err("frame index must be >= 1".into());
    }
    let [l, t, w, h] = rec.bbox;
    if !(w > 0.0 && h > 0.0) {
        return Err(format!("bbox must have positive size, got {w}x{h}"));
    }
    let mut warnings = Vec::new();
    let (class_label, known) = ClassLabel::parse_lossy(&rec.class);
    if !known {
        warnings.push(format!(
            "unknown class `{}` mapped to people_other",
            rec.class
        ));
    }
    let confidence = clamp_confidence(rec.conf, &mut warnings);
    let mut det = Detection::new(rec.frame, BBox::new(l, t, w, h), class_label, confidence);
    det.contour = rec
        .contour
        .map(|pts| pts.into_iter().map(|[u, v]| (u, v)).collect());
    Ok((det, warnings))
}

fn clamp_confidence(conf: f64, warnings: &mut Vec<String>) -> f64 {
    if (0.0..=1.0).contains(&conf) {
        conf
    } else {
        let clamped = conf.clamp(0.0, 1.0);
        warnings.push(format!("confidence {conf} clamped to {clamped}"));
        clamped
    }
}

fn clamp_detection(det: &mut Detection, image_size: Option<(u32, u32)>) -> Option<String> {
    let (img_w, img_h) = image_size?;
    let (img_w, img_h) = (img_w as f64, img_h as f64);
    let b = det.bbox;
    let left = b.left.clamp(0.0, img_w);
    let top = b.top.clamp(0.0, img_h);
    let right = b.right().clamp(0.0, img_w);
    let bottom = b.bottom().clamp(0.0, img_h);
    let clamped = BBox::new(left, top, right - left, bottom - top);
    if clamped != b {
        det.bbox = clamped;
        Some(format!(
            "bbox clamped to image extent {img_w}x{img_h}: ({},{},{},{}) -> ({},{},{},{})",
            b.left, b.top, b.width, b.height, clamped.left, clamped.top, clamped.width,
            clamped.height
        ))
    } else {
        None
    }
}

/// Serializes detections in the given format. The output of
/// `parse_detection_file` round-trips through this modulo whitespace.
pub fn write_detection_file(
    path: &Path,
    format: DetectionFormat,
    frames: &[(u64, Vec<Detection>)],
) -> Result<()> {
    let mut out = String::new();
    for (frame, dets) in frames {
        for det in dets {
            match format {
                DetectionFormat::Mot16 => {
                    out.push_str(&format!(
                        "{},-1,{},{},{},{},{},-1,-1,-1\n",
                        frame,
                        det.bbox.left,
                        det.bbox.top,
                        det.bbox.width,
                        det.bbox.height,
                        det.confidence
                    ));
                }
                DetectionFormat::JsonLines => {
                    let rec = JsonDetection {
                        frame: *frame,
                        bbox: [det.bbox.left, det.bbox.top, det.bbox.width, det.bbox.height],
                        class: det.class_label.as_str().to_string(),
                        conf: det.confidence,
                        contour: det
                            .contour
                            .as_ref()
                            .map(|pts| pts.iter().map(|&(u, v)| [u, v]).collect()),
                    };
                    out.push_str(&serde_json::to_string(&rec).expect("serializable"));
                    out.push('\n');
                }
            }
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Reads a binary appearance sidecar: little-endian f32, 128 per record.
pub fn read_appearance_sidecar(path: &Path) -> Result<Vec<Vec<f64>>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.len() % 4 != 0 {
        return Err(Error::AppearanceLength {
            got: bytes.len() % 4,
            expected: APPEARANCE_DIM,
        });
    }
    let floats = bytes.len() / 4;
    if floats % APPEARANCE_DIM != 0 {
        return Err(Error::AppearanceLength {
            got: floats % APPEARANCE_DIM,
            expected: APPEARANCE_DIM,
        });
    }
    let mut vectors = Vec::with_capacity(floats / APPEARANCE_DIM);
    for record in bytes.chunks_exact(4 * APPEARANCE_DIM) {
        let mut v = Vec::with_capacity(APPEARANCE_DIM);
        for quad in record.chunks_exact(4) {
            v.push(f32::from_le_bytes([quad[0], quad[1], quad[2], quad[3]]) as f64);
        }
        vectors.push(v);
    }
    Ok(vectors)
}

/// Writes appearance vectors as a binary sidecar in record order.
pub fn write_appearance_sidecar(path: &Path, vectors: &[Vec<f64>]) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let mut buf = Vec::with_capacity(vectors.len() * APPEARANCE_DIM * 4);
    for v in vectors {
        assert_eq!(v.len(), APPEARANCE_DIM, "sidecar records must be 128 wide");
        for &x in v {
            buf.extend_from_slice(&(x as f32).to_le_bytes());
        }
    }
    file.write_all(&buf).map_err(|e| Error::io(path, e))
}
