//! Danmaku corpus formats.
//!
//! Two wire formats are handled here:
//!
//! * the Tencent-style crawler dump, a JSON object `{"comments": [...]}` whose
//!   records carry the upvote counters used for quality scoring, and
//! * the Bilibili-style display file, an XML document rooted at `<i>` with one
//!   `<d p="...">text</d>` element per bullet.
//!
//! Everything in this module is a pure function over its input.

use std::fmt::Write as _;

use quick_xml::escape::escape;
use quick_xml::events::Event;
use quick_xml::Reader;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CorpusError {
    #[error("malformed input: {0}")]
    MalformedInput(String),
    #[error("bad record at index {index}: {reason}")]
    BadRecord { index: usize, reason: String },
}

/// One raw comment record as produced by the crawler.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Bullet {
    pub comment_id: String,
    pub content: String,
    pub upcount: u32,
    pub is_friend: u32,
    pub is_op: u32,
}

impl Bullet {
    pub fn score(&self) -> i64 {
        score(self)
    }
}

/// Comment text paired with its quality score.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoredRecord {
    pub content: String,
    pub score: i64,
}

impl ScoredRecord {
    pub fn new(content: impl Into<String>, score: i64) -> Self {
        Self {
            content: content.into(),
            score,
        }
    }
}

impl From<&Bullet> for ScoredRecord {
    fn from(b: &Bullet) -> Self {
        ScoredRecord::new(b.content.clone(), b.score())
    }
}

/// Quality score of a bullet: `upcount - is_friend + is_op`.
pub fn score(b: &Bullet) -> i64 {
    i64::from(b.upcount) - i64::from(b.is_friend) + i64::from(b.is_op)
}

/// Parses a Tencent-style JSON corpus.
///
/// Missing counters default to zero; unknown keys are ignored. A record
/// without `commentid` or `content` is rejected with its array index.
pub fn parse_tencent_json(bytes: &[u8]) -> Result<Vec<Bullet>, CorpusError> {
    let root: Value =
        serde_json::from_slice(bytes).map_err(|e| CorpusError::MalformedInput(e.to_string()))?;
    let comments = root
        .as_object()
        .and_then(|o| o.get("comments"))
        .and_then(Value::as_array)
        .ok_or_else(|| {
            CorpusError::MalformedInput("expected an object with a \"comments\" array".into())
        })?;

    comments
        .iter()
        .enumerate()
        .map(|(index, rec)| parse_tencent_record(index, rec))
        .collect()
}

fn parse_tencent_record(index: usize, rec: &Value) -> Result<Bullet, CorpusError> {
    let bad = |reason: String| CorpusError::BadRecord { index, reason };
    let obj = rec
        .as_object()
        .ok_or_else(|| bad("record is not an object".into()))?;

    let comment_id = match obj.get("commentid") {
        Some(Value::String(s)) if !s.is_empty() => s.clone(),
        Some(Value::Number(n)) => n.to_string(),
        Some(Value::String(_)) => return Err(bad("empty commentid".into())),
        Some(_) => return Err(bad("commentid is not a string".into())),
        None => return Err(bad("missing commentid".into())),
    };
    let content = match obj.get("content") {
        Some(Value::String(s)) => s.clone(),
        Some(_) => return Err(bad("content is not a string".into())),
        None => return Err(bad("missing content".into())),
    };
    let counter = |key: &str| -> Result<u32, CorpusError> {
        match obj.get(key) {
            None | Some(Value::Null) => Ok(0),
            Some(v) => v
                .as_u64()
                .and_then(|n| u32::try_from(n).ok())
                .ok_or_else(|| bad(format!("{key} is not a non-negative integer"))),
        }
    };

    Ok(Bullet {
        comment_id,
        content,
        upcount: counter("upcount")?,
        is_friend: counter("isfriend")?,
        is_op: counter("isop")?,
    })
}

/// Serializes bullets back into the Tencent-style JSON layout.
pub fn serialize_tencent_json(bullets: &[Bullet]) -> Vec<u8> {
    #[derive(Serialize)]
    struct Rec<'a> {
        commentid: &'a str,
        content: &'a str,
        upcount: u32,
        isfriend: u32,
        isop: u32,
    }
    #[derive(Serialize)]
    struct Root<'a> {
        comments: Vec<Rec<'a>>,
    }
    let root = Root {
        comments: bullets
            .iter()
            .map(|b| Rec {
                commentid: &b.comment_id,
                content: &b.content,
                upcount: b.upcount,
                isfriend: b.is_friend,
                isop: b.is_op,
            })
            .collect(),
    };
    let mut out = serde_json::to_vec_pretty(&root).expect("corpus serialization is infallible");
    out.push(b'\n');
    out
}

/// Display mode of a danmaku bullet.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DisplayMode {
    Scroll = 1,
    Bottom = 4,
    Top = 5,
}

impl DisplayMode {
    pub fn code(self) -> u8 {
        self as u8
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(Self::Scroll),
            4 => Some(Self::Bottom),
            5 => Some(Self::Top),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisplayBullet {
    /// Seconds from the start of the video.
    pub appear_time: f64,
    pub mode: DisplayMode,
    pub font_size: u32,
    /// `0xRRGGBB`.
    pub color: u32,
    pub send_timestamp: i64,
    pub pool: u32,
    pub user_hash: String,
    pub row_id: String,
    pub content: String,
}

/// A video's danmaku document. Bullet order is significant: filter masks are
/// positional.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DanmakuFile {
    /// The `cid` the danmaku server indexes this file by.
    pub video_id: String,
    pub bullets: Vec<DisplayBullet>,
}

impl DanmakuFile {
    pub fn contents(&self) -> Vec<String> {
        self.bullets.iter().map(|b| b.content.clone()).collect()
    }

    /// Keeps the bullets whose mask entry is 1. Returns the cleaned file and
    /// the number removed.
    ///
    /// # Panics
    ///
    /// If the mask length differs from the bullet count.
    pub fn retain_by_mask(&self, mask: &[u8]) -> (DanmakuFile, usize) {
        assert_eq!(mask.len(), self.bullets.len(), "mask length mismatch");
        let bullets: Vec<_> = self
            .bullets
            .iter()
            .zip(mask)
            .filter(|(_, &m)| m == 1)
            .map(|(b, _)| b.clone())
            .collect();
        let removed = self.bullets.len() - bullets.len();
        (
            DanmakuFile {
                video_id: self.video_id.clone(),
                bullets,
            },
            removed,
        )
    }
}

#[derive(PartialEq)]
enum Capture {
    None,
    VideoId,
    Bullet,
}

/// Parses a Bilibili-style XML danmaku file.
pub fn parse_bilibili_xml(bytes: &[u8]) -> Result<DanmakuFile, CorpusError> {
    let text = std::str::from_utf8(bytes)
        .map_err(|e| CorpusError::MalformedInput(format!("not UTF-8: {e}")))?;
    let mut reader = Reader::from_str(text);
    let malformed = |e: &dyn std::fmt::Display| CorpusError::MalformedInput(e.to_string());

    let mut seen_root = false;
    let mut closed_root = false;
    let mut depth = 0usize;
    let mut video_id: Option<String> = None;
    let mut bullets = Vec::new();

    let mut capture = Capture::None;
    let mut buf = String::new();
    let mut pending_p: Option<String> = None;

    loop {
        match reader.read_event().map_err(|e| malformed(&e))? {
            Event::Start(e) => {
                depth += 1;
                let name = e.name();
                if depth == 1 {
                    if name.as_ref() != b"i" {
                        return Err(CorpusError::MalformedInput(format!(
                            "root element is <{}>, expected <i>",
                            String::from_utf8_lossy(name.as_ref())
                        )));
                    }
                    if closed_root {
                        return Err(CorpusError::MalformedInput("multiple root elements".into()));
                    }
                    seen_root = true;
                } else if depth == 2 {
                    buf.clear();
                    match name.as_ref() {
                        b"chatid" | b"oid" => capture = Capture::VideoId,
                        b"d" => {
                            capture = Capture::Bullet;
                            pending_p = Some(p_attribute(&e, bullets.len())?);
                        }
                        _ => capture = Capture::None,
                    }
                }
            }
            Event::Empty(e) => {
                if depth == 0 {
                    if e.name().as_ref() != b"i" {
                        return Err(CorpusError::MalformedInput("root element must be <i>".into()));
                    }
                    seen_root = true;
                    closed_root = true;
                } else if depth == 1 && e.name().as_ref() == b"d" {
                    let index = bullets.len();
                    let p = p_attribute(&e, index)?;
                    bullets.push(display_bullet(index, &p, String::new())?);
                }
            }
            Event::Text(t) if depth == 2 && capture != Capture::None => {
                let s = t.unescape().map_err(|e| malformed(&e))?;
                buf.push_str(&s);
            }
            Event::CData(t) if depth == 2 && capture != Capture::None => {
                buf.push_str(&String::from_utf8_lossy(&t.into_inner()));
            }
            Event::End(_) => {
                if depth == 2 {
                    match capture {
                        Capture::VideoId => {
                            if video_id.is_none() {
                                video_id = Some(buf.trim().to_string());
                            }
                        }
                        Capture::Bullet => {
                            let index = bullets.len();
                            let p = pending_p.take().unwrap_or_default();
                            bullets.push(display_bullet(index, &p, std::mem::take(&mut buf))?);
                        }
                        Capture::None => {}
                    }
                    capture = Capture::None;
                }
                depth = depth.saturating_sub(1);
                if depth == 0 {
                    closed_root = true;
                }
            }
            Event::Eof => break,
            _ => {}
        }
    }

    if !seen_root || !closed_root || depth != 0 {
        return Err(CorpusError::MalformedInput("missing or unclosed <i> root".into()));
    }
    Ok(DanmakuFile {
        video_id: video_id.unwrap_or_default(),
        bullets,
    })
}

fn p_attribute(e: &quick_xml::events::BytesStart<'_>, index: usize) -> Result<String, CorpusError> {
    let attr = e
        .try_get_attribute("p")
        .map_err(|err| CorpusError::BadRecord {
            index,
            reason: err.to_string(),
        })?
        .ok_or_else(|| CorpusError::BadRecord {
            index,
            reason: "missing p attribute".into(),
        })?;
    attr.unescape_value()
        .map(|v| v.into_owned())
        .map_err(|err| CorpusError::BadRecord {
            index,
            reason: err.to_string(),
        })
}

fn display_bullet(index: usize, p: &str, content: String) -> Result<DisplayBullet, CorpusError> {
    let bad = |reason: String| CorpusError::BadRecord { index, reason };
    let fields: Vec<&str> = p.split(',').collect();
    if fields.len() < 8 {
        return Err(bad(format!("p has {} fields, expected 8", fields.len())));
    }
    fn num<T: std::str::FromStr>(field: &str, name: &str) -> Result<T, String> {
        field
            .trim()
            .parse()
            .map_err(|_| format!("{name} is not numeric: {field:?}"))
    }
    let appear_time: f64 = num(fields[0], "appear_time").map_err(bad)?;
    if !appear_time.is_finite() || appear_time < 0.0 {
        return Err(bad(format!("appear_time out of range: {appear_time}")));
    }
    let mode_code: u8 = num(fields[1], "mode").map_err(bad)?;
    let mode = DisplayMode::from_code(mode_code)
        .ok_or_else(|| bad(format!("unsupported mode {mode_code}")))?;
    Ok(DisplayBullet {
        appear_time,
        mode,
        font_size: num(fields[2], "font_size").map_err(bad)?,
        color: num(fields[3], "color").map_err(bad)?,
        send_timestamp: num(fields[4], "send_timestamp").map_err(bad)?,
        pool: num(fields[5], "pool").map_err(bad)?,
        user_hash: fields[6].to_string(),
        row_id: fields[7].to_string(),
        content,
    })
}

/// Writes a danmaku file in the layout `parse_bilibili_xml` reads.
pub fn serialize_bilibili_xml(f: &DanmakuFile) -> Vec<u8> {
    let mut out = String::new();
    out.push_str("<i><chatid>");
    out.push_str(&escape(f.video_id.as_str()));
    out.push_str("</chatid>");
    for b in &f.bullets {
        let p = format!(
            "{},{},{},{},{},{},{},{}",
            b.appear_time,
            b.mode.code(),
            b.font_size,
            b.color,
            b.send_timestamp,
            b.pool,
            b.user_hash,
            b.row_id
        );
        let _ = write!(
            out,
            "\n<d p=\"{}\">{}</d>",
            escape(p.as_str()),
            escape(b.content.as_str())
        );
    }
    if !f.bullets.is_empty() {
        out.push('\n');
    }
    out.push_str("</i>\n");
    out.into_bytes()
}
