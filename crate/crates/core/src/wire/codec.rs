use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use thiserror::Error;

use crate::edge::{FeatureRecord, FrameFeatureSet, QuantizedBox};
use crate::Fixed3;

/// A frame block longer than this without an `END` line is rejected.
pub const MAX_BLOCK_BYTES: usize = 1 << 20;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum WireError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("FRAME {start} closed by END {end}")]
    Framing { start: u64, end: u64 },
    #[error("no END line within {MAX_BLOCK_BYTES} bytes")]
    Oversized,
}

/// A decode failure plus the number of bytes the caller should discard to resynchronize.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("{kind} (skipping {consumed} bytes)")]
pub struct DecodeError {
    pub kind: WireError,
    pub consumed: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Decoded {
    Complete(FrameFeatureSet, usize),
    Incomplete,
}

pub fn is_valid_camera_id(id: &str) -> bool {
    !id.is_empty()
        && id.len() <= 64
        && id
            .bytes()
            .all(|b| b.is_ascii_alphanumeric() || matches!(b, b'-' | b'_' | b'.'))
}

pub fn encode_frame(frame: &FrameFeatureSet) -> Vec<u8> {
    debug_assert!(is_valid_camera_id(&frame.camera_id));
    let mut out = String::with_capacity(48 + frame.objects.len() * 96);
    let _ = write!(
        out,
        "FRAME {}\nCAM {}\nTS {}\n",
        frame.frame_index, frame.camera_id, frame.timestamp
    );
    for (id, rec) in &frame.objects {
        debug_assert_eq!(*id, rec.object_id);
        out.push_str(&obj_line(rec));
        out.push('\n');
    }
    let _ = writeln!(out, "END {}", frame.frame_index);
    out.into_bytes()
}

/// `OBJ ...` line for one record, without the trailing LF.
pub(crate) fn obj_line(rec: &FeatureRecord) -> String {
    let b = &rec.bbox;
    format!(
        "OBJ {} SPEED={} DIRCH={} DWELL={} BBOX={},{},{},{}",
        rec.object_id, rec.speed, rec.direction_changes, rec.dwell, b.x_min, b.y_min, b.x_max, b.y_max
    )
}

pub(crate) fn parse_obj_line(text: &str, line: usize) -> Result<FeatureRecord, WireError> {
    let rest = text
        .strip_prefix("OBJ ")
        .ok_or_else(|| malformed(line, "expected OBJ"))?;
    parse_obj(rest, line)
}

fn malformed(line: usize, reason: impl Into<String>) -> WireError {
    WireError::Malformed {
        line,
        reason: reason.into(),
    }
}

fn parse_index(s: &str, line: usize) -> Result<u64, WireError> {
    if s.is_empty() || !s.bytes().all(|b| b.is_ascii_digit()) || (s.len() > 1 && s.starts_with('0')) {
        return Err(malformed(line, format!("bad frame index {s:?}")));
    }
    s.parse().map_err(|_| malformed(line, format!("bad frame index {s:?}")))
}

fn parse_fixed(s: &str, line: usize, what: &str) -> Result<Fixed3, WireError> {
    Fixed3::from_str(s).map_err(|_| malformed(line, format!("bad {what} {s:?}")))
}

fn keyed<'a>(token: &'a str, key: &str, line: usize) -> Result<&'a str, WireError> {
    token
        .strip_prefix(key)
        .and_then(|t| t.strip_prefix('='))
        .ok_or_else(|| malformed(line, format!("expected {key}=")))
}

fn parse_obj(rest: &str, line: usize) -> Result<FeatureRecord, WireError> {
    let tokens: Vec<&str> = rest.split(' ').collect();
    if tokens.len() != 5 {
        return Err(malformed(line, "OBJ needs id SPEED DIRCH DWELL BBOX"));
    }
    let object_id = parse_fixed(tokens[0], line, "object id")?;
    let speed = parse_fixed(keyed(tokens[1], "SPEED", line)?, line, "speed")?;
    let dirch = keyed(tokens[2], "DIRCH", line)?;
    if dirch.is_empty() || !dirch.bytes().all(|b| b.is_ascii_digit()) || (dirch.len() > 1 && dirch.starts_with('0')) {
        return Err(malformed(line, format!("bad DIRCH {dirch:?}")));
    }
    let direction_changes = dirch
        .parse()
        .map_err(|_| malformed(line, format!("bad DIRCH {dirch:?}")))?;
    let dwell = parse_fixed(keyed(tokens[3], "DWELL", line)?, line, "dwell")?;
    let coords: Vec<&str> = keyed(tokens[4], "BBOX", line)?.split(',').collect();
    if coords.len() != 4 {
        return Err(malformed(line, "BBOX needs four coordinates"));
    }
    let bbox = QuantizedBox {
        x_min: parse_fixed(coords[0], line, "bbox")?,
        y_min: parse_fixed(coords[1], line, "bbox")?,
        x_max: parse_fixed(coords[2], line, "bbox")?,
        y_max: parse_fixed(coords[3], line, "bbox")?,
    };
    if !bbox.is_valid() {
        return Err(malformed(line, "degenerate bbox"));
    }
    Ok(FeatureRecord {
        object_id,
        speed,
        direction_changes,
        dwell,
        bbox,
    })
}

/// Decodes the first frame block in `buf`.
///
/// Returns [`Decoded::Incomplete`] until a full `FRAME ... END` block is buffered; lines of
/// an unfinished block are not inspected beyond the opening `FRAME` line, except that a
/// second `FRAME` line ends the block as malformed.
pub fn decode_frame(buf: &[u8]) -> Result<Decoded, DecodeError> {
    let mut lines: Vec<&[u8]> = Vec::new();
    let mut pos = 0;
    let mut end_seen = false;
    while let Some(off) = buf[pos..].iter().position(|&b| b == b'\n') {
        let line = &buf[pos..pos + off];
        pos += off + 1;
        if lines.is_empty() && !line.starts_with(b"FRAME ") {
            return Err(DecodeError {
                kind: malformed(1, "expected FRAME"),
                consumed: pos,
            });
        }
        if !lines.is_empty() && line.starts_with(b"FRAME ") {
            // the block lost its END; resynchronize at the next FRAME line
            return Err(DecodeError {
                kind: malformed(lines.len() + 1, "FRAME before END"),
                consumed: pos - off - 1,
            });
        }
        lines.push(line);
        if line.starts_with(b"END") {
            end_seen = true;
            break;
        }
        if pos > MAX_BLOCK_BYTES {
            return Err(DecodeError {
                kind: WireError::Oversized,
                consumed: pos,
            });
        }
    }
    if !end_seen {
        if buf.len() > MAX_BLOCK_BYTES {
            return Err(DecodeError {
                kind: WireError::Oversized,
                consumed: buf.len(),
            });
        }
        return Ok(Decoded::Incomplete);
    }
    parse_block(&lines)
        .map(|frame| Decoded::Complete(frame, pos))
        .map_err(|kind| DecodeError { kind, consumed: pos })
}

fn parse_block(lines: &[&[u8]]) -> Result<FrameFeatureSet, WireError> {
    let text = |i: usize| std::str::from_utf8(lines[i]).map_err(|_| malformed(i + 1, "not UTF-8"));
    let n = lines.len();
    let frame_index = parse_index(&text(0)?["FRAME ".len()..], 1)?;
    if n < 4 {
        return Err(malformed(n, "block too short"));
    }
    let camera_id = text(1)?
        .strip_prefix("CAM ")
        .filter(|c| is_valid_camera_id(c))
        .ok_or_else(|| malformed(2, "expected CAM <id>"))?
        .to_string();
    let timestamp = parse_fixed(
        text(2)?.strip_prefix("TS ").ok_or_else(|| malformed(3, "expected TS"))?,
        3,
        "timestamp",
    )?;
    let mut objects = BTreeMap::new();
    let mut last_id: Option<Fixed3> = None;
    for i in 3..n - 1 {
        let line_no = i + 1;
        let rec = parse_obj_line(text(i)?, line_no)?;
        if last_id.is_some_and(|prev| rec.object_id <= prev) {
            return Err(malformed(line_no, "object ids must be strictly ascending"));
        }
        last_id = Some(rec.object_id);
        objects.insert(rec.object_id, rec);
    }
    let end = text(n - 1)?
        .strip_prefix("END ")
        .ok_or_else(|| malformed(n, "expected END <idx>"))?;
    let end = parse_index(end, n)?;
    if end != frame_index {
        return Err(WireError::Framing {
            start: frame_index,
            end,
        });
    }
    Ok(FrameFeatureSet {
        frame_index,
        camera_id,
        timestamp,
        objects,
    })
}

/// A frame together with the exact bytes it was decoded from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecodedFrame {
    pub frame: FrameFeatureSet,
    pub raw: Vec<u8>,
}

/// Incremental decoder over an arbitrarily chunked byte stream.
#[derive(Debug, Default)]
pub struct FrameDecoder {
    buf: Vec<u8>,
}

impl FrameDecoder {
    pub fn new() -> Self {
        FrameDecoder::default()
    }

    pub fn push(&mut self, bytes: &[u8]) {
        self.buf.extend_from_slice(bytes);
    }

    /// Bytes buffered but not yet part of a complete frame.
    pub fn pending(&self) -> usize {
        self.buf.len()
    }

    /// Next complete frame, or `None` when more bytes are needed. Malformed blocks are
    /// reported once and then discarded.
    pub fn next_frame(&mut self) -> Option<Result<DecodedFrame, DecodeError>> {
        match decode_frame(&self.buf) {
            Ok(Decoded::Incomplete) => None,
            Ok(Decoded::Complete(frame, consumed)) => {
                let raw: Vec<u8> = self.buf.drain(..consumed).collect();
                Some(Ok(DecodedFrame { frame, raw }))
            }
            Err(e) => {
                self.buf.drain(..e.consumed.min(self.buf.len()));
                Some(Err(e))
            }
        }
    }
}

impl Iterator for FrameDecoder {
    type Item = Result<DecodedFrame, DecodeError>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_frame()
    }
}
