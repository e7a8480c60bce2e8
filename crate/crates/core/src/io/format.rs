//! Sequence interchange files.
//!
//! The canonical form is line-delimited JSON: one header object, then one
//! object per frame. Coordinates are meters written with the shortest
//! decimal form that parses back to the same `f64`, so text files round-trip
//! bit-exactly and identical sequences serialize to identical bytes.
//!
//! ```text
//! {"format":"mmwave-synth-sequence","version":1,"units":"m","source":"lidar","frame_rate_hz":10.0,"joints":["pelvis",...]}
//! {"t":0,"points":[x0,y0,z0,x1,y1,z1,...],"skeleton":[x0,y0,z0,...,x14,y14,z14]}
//! ```
//!
//! `joints` is empty and `skeleton` is omitted for unlabeled sequences.
//!
//! The binary variant stores coordinates as little-endian `f32`; see
//! [`to_binary`] for the layout.

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geom::{Frame, Point3, PointCloud, Sequence, Skeleton, SourceTag, Vec3, JOINT_NAMES, NUM_JOINTS};

pub const FORMAT_NAME: &str = "mmwave-synth-sequence";
pub const FORMAT_VERSION: u32 = 1;
pub const BINARY_MAGIC: &[u8; 8] = b"MMSYNTHB";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Encoding {
    Text,
    Binary,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    format: String,
    version: u32,
    units: String,
    source: SourceTag,
    frame_rate_hz: f64,
    joints: Vec<String>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameRecord {
    t: u64,
    points: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    skeleton: Option<Vec<f64>>,
}

fn flatten(points: &[Point3]) -> Vec<f64> {
    points.iter().flat_map(|p| p.to_array()).collect()
}

fn unflatten(values: &[f64]) -> Option<Vec<Point3>> {
    if !values.len().is_multiple_of(3) {
        return None;
    }
    Some(values.chunks_exact(3).map(|c| Vec3::new(c[0], c[1], c[2])).collect())
}

/// Serializes to the canonical text form.
pub fn to_text(seq: &Sequence) -> Result<String> {
    if seq.is_empty() {
        return Err(Error::EmptySequence);
    }
    let header = Header {
        format: FORMAT_NAME.into(),
        version: FORMAT_VERSION,
        units: "m".into(),
        source: seq.source,
        frame_rate_hz: seq.frame_rate_hz,
        joints: if seq.is_labeled() {
            JOINT_NAMES.iter().map(|s| s.to_string()).collect()
        } else {
            Vec::new()
        },
    };
    let json_err = |e: serde_json::Error| Error::Invalid(e.to_string());
    let mut out = serde_json::to_string(&header).map_err(json_err)?;
    out.push('\n');
    for f in seq.frames() {
        let rec = FrameRecord {
            t: f.t,
            points: flatten(f.cloud.points()),
            skeleton: f.skeleton.map(|s| flatten(s.joints())),
        };
        out.push_str(&serde_json::to_string(&rec).map_err(json_err)?);
        out.push('\n');
    }
    Ok(out)
}

/// Parses the text form. `origin` labels error messages.
pub fn from_text(text: &str, origin: &Path) -> Result<Sequence> {
    let perr = |line: usize, msg: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        msg,
    };
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (hline, htext) = lines.next().ok_or_else(|| perr(1, "missing header line".into()))?;
    let header: Header = serde_json::from_str(htext).map_err(|e| perr(hline + 1, format!("bad header: {e}")))?;
    if header.format != FORMAT_NAME {
        return Err(perr(hline + 1, format!("unknown format `{}`", header.format)));
    }
    if header.version != FORMAT_VERSION {
        return Err(perr(hline + 1, format!("unsupported version {}", header.version)));
    }
    if header.units != "m" {
        return Err(perr(
            hline + 1,
            format!("coordinates must be in meters, header declares `{}`", header.units),
        ));
    }
    if !header.joints.is_empty() && header.joints.iter().map(String::as_str).ne(JOINT_NAMES) {
        return Err(perr(
            hline + 1,
            "joint order does not match the canonical 15-joint order".into(),
        ));
    }

    let mut frames = Vec::new();
    for (i, line) in lines {
        let lineno = i + 1;
        let rec: FrameRecord =
            serde_json::from_str(line).map_err(|e| perr(lineno, format!("bad frame record: {e}")))?;
        let pts = unflatten(&rec.points).ok_or_else(|| {
            perr(
                lineno,
                format!(
                    "frame t={}: point list length {} is not a multiple of 3",
                    rec.t,
                    rec.points.len()
                ),
            )
        })?;
        let cloud = PointCloud::new(pts).map_err(|e| perr(lineno, format!("frame t={}: {e}", rec.t)))?;
        let skeleton = match rec.skeleton {
            None => None,
            Some(v) => {
                if header.joints.is_empty() {
                    return Err(perr(
                        lineno,
                        format!("frame t={}: skeleton present but header lists no joints", rec.t),
                    ));
                }
                let joints = unflatten(&v).ok_or_else(|| {
                    perr(
                        lineno,
                        format!("frame t={}: skeleton length {} is not a multiple of 3", rec.t, v.len()),
                    )
                })?;
                if joints.len() != NUM_JOINTS {
                    return Err(perr(
                        lineno,
                        format!(
                            "frame t={}: skeleton has {} joints, expected {NUM_JOINTS}",
                            rec.t,
                            joints.len()
                        ),
                    ));
                }
                Some(Skeleton::from_slice(&joints).map_err(|e| perr(lineno, format!("frame t={}: {e}", rec.t)))?)
            }
        };
        if let Some(prev) = frames.last().map(|f: &Frame| f.t) {
            if rec.t <= prev {
                return Err(perr(
                    lineno,
                    format!("timestep {} does not increase after {prev}", rec.t),
                ));
            }
        }
        frames.push(Frame::new(rec.t, cloud, skeleton));
    }
    if frames.is_empty() {
        return Err(perr(hline + 1, "sequence must contain at least one frame".into()));
    }
    Sequence::new(frames, header.source, header.frame_rate_hz).map_err(|e| perr(hline + 1, e.to_string()))
}

fn source_code(tag: SourceTag) -> u8 {
    match tag {
        SourceTag::Lidar => 0,
        SourceTag::Mmwave => 1,
        SourceTag::Converted => 2,
    }
}

/// Binary layout, all little-endian:
///
/// ```text
/// magic        8 bytes  "MMSYNTHB"
/// version      u32      1
/// source       u8       0 lidar, 1 mmwave, 2 converted
/// labeled      u8       0 or 1
/// reserved     u16      0
/// frame_rate   f64      Hz
/// frame_count  u32
/// per frame:
///   t          u64
///   n_points   u32
///   points     n_points × 3 × f32
///   skeleton   15 × 3 × f32   (labeled only)
/// ```
///
/// Coordinates are rounded to `f32`.
pub fn to_binary(seq: &Sequence) -> Result<Vec<u8>> {
    if seq.is_empty() {
        return Err(Error::EmptySequence);
    }
    let mut buf = Vec::new();
    let io = |e| Error::Invalid(format!("binary encoding failed: {e}"));
    buf.extend_from_slice(BINARY_MAGIC);
    buf.write_u32::<LittleEndian>(FORMAT_VERSION).map_err(io)?;
    buf.write_u8(source_code(seq.source)).map_err(io)?;
    buf.write_u8(u8::from(seq.is_labeled())).map_err(io)?;
    buf.write_u16::<LittleEndian>(0).map_err(io)?;
    buf.write_f64::<LittleEndian>(seq.frame_rate_hz).map_err(io)?;
    let count = u32::try_from(seq.len()).map_err(|_| Error::Invalid("too many frames".into()))?;
    buf.write_u32::<LittleEndian>(count).map_err(io)?;
    for f in seq.frames() {
        buf.write_u64::<LittleEndian>(f.t).map_err(io)?;
        let n = u32::try_from(f.cloud.len()).map_err(|_| Error::Invalid("too many points".into()))?;
        buf.write_u32::<LittleEndian>(n).map_err(io)?;
        let joints = f.skeleton.as_ref().map(|s| s.joints().as_slice()).unwrap_or(&[]);
        for p in f.cloud.points().iter().chain(joints) {
            for v in p.to_array() {
                buf.write_f32::<LittleEndian>(v as f32).map_err(io)?;
            }
        }
    }
    Ok(buf)
}

pub fn from_binary(bytes: &[u8], origin: &Path) -> Result<Sequence> {
    let perr = |msg: String| Error::Parse {
        path: origin.to_path_buf(),
        line: 0,
        msg,
    };
    let trunc = |_| perr("truncated binary sequence".into());
    let mut r = Cursor::new(bytes);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic).map_err(trunc)?;
    if &magic != BINARY_MAGIC {
        return Err(perr("bad magic".into()));
    }
    let version = r.read_u32::<LittleEndian>().map_err(trunc)?;
    if version != FORMAT_VERSION {
        return Err(perr(format!("unsupported version {version}")));
    }
    let source = match r.read_u8().map_err(trunc)? {
        0 => SourceTag::Lidar,
        1 => SourceTag::Mmwave,
        2 => SourceTag::Converted,
        c => return Err(perr(format!("unknown source code {c}"))),
    };
    let labeled = match r.read_u8().map_err(trunc)? {
        0 => false,
        1 => true,
        c => return Err(perr(format!("bad labeled flag {c}"))),
    };
    let _reserved = r.read_u16::<LittleEndian>().map_err(trunc)?;
    let frame_rate = r.read_f64::<LittleEndian>().map_err(trunc)?;
    let count = r.read_u32::<LittleEndian>().map_err(trunc)?;
    let read_points = |r: &mut Cursor<&[u8]>, n: usize| -> Result<Vec<Point3>> {
        (0..n)
            .map(|_| {
                let mut c = [0.0f64; 3];
                for v in &mut c {
                    *v = f64::from(r.read_f32::<LittleEndian>().map_err(trunc)?);
                }
                Ok(Vec3::from_array(c))
            })
            .collect()
    };
    let mut frames = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let t = r.read_u64::<LittleEndian>().map_err(trunc)?;
        let n = r.read_u32::<LittleEndian>().map_err(trunc)? as usize;
        if n.saturating_mul(12) > bytes.len() {
            return Err(perr("truncated binary sequence".into()));
        }
        let cloud = PointCloud::new(read_points(&mut r, n)?).map_err(|e| perr(format!("frame t={t}: {e}")))?;
        let skeleton = if labeled {
            let j = read_points(&mut r, NUM_JOINTS)?;
            Some(Skeleton::from_slice(&j).map_err(|e| perr(format!("frame t={t}: {e}")))?)
        } else {
            None
        };
        frames.push(Frame::new(t, cloud, skeleton));
    }
    if (r.position() as usize) != bytes.len() {
        return Err(perr("trailing bytes after last frame".into()));
    }
    if frames.is_empty() {
        return Err(perr("sequence must contain at least one frame".into()));
    }
    Sequence::new(frames, source, frame_rate).map_err(|e| perr(e.to_string()))
}

/// Reads either encoding, detected from the leading magic bytes.
pub fn read_sequence(path: impl AsRef<Path>) -> Result<Sequence> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    if bytes.starts_with(BINARY_MAGIC) {
        return from_binary(&bytes, path);
    }
    let text = String::from_utf8(bytes).map_err(|_| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        msg: "file is neither UTF-8 text nor a binary sequence".into(),
    })?;
    from_text(&text, path)
}

pub fn write_sequence(seq: &Sequence, path: impl AsRef<Path>) -> Result<()> {
    write_sequence_as(seq, path, Encoding::Text)
}

pub fn write_sequence_as(seq: &Sequence, path: impl AsRef<Path>, encoding: Encoding) -> Result<()> {
    let path = path.as_ref();
    let bytes = match encoding {
        Encoding::Text => to_text(seq)?.into_bytes(),
        Encoding::Binary => to_binary(seq)?,
    };
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}
