//! Detection and symbol file formats.
//!
//! Detection files are JSON Lines: a header object
//! `{"sequence_id": .., "label": .., "grid": [w, h], "model_arity": 3|5}`
//! followed by one object per frame
//! `{"frame": i, "persons": [{"id": k, "parts": {"torso": [{"x","y","score"}], ..}}]}`.
//!
//! Symbol files are a header `{"p": .., "n": .., "M": ..}` followed by one line
//! of `n` space-separated symbols per frame.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PartId {
    Head,
    Torso,
    LeftArm,
    RightArm,
    LeftLeg,
    RightLeg,
}

impl PartId {
    pub const ALL: [PartId; 6] = [
        PartId::Head,
        PartId::Torso,
        PartId::LeftArm,
        PartId::RightArm,
        PartId::LeftLeg,
        PartId::RightLeg,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PartId::Head => "head",
            PartId::Torso => "torso",
            PartId::LeftArm => "left_arm",
            PartId::RightArm => "right_arm",
            PartId::LeftLeg => "left_leg",
            PartId::RightLeg => "right_leg",
        }
    }

    pub fn parse(s: &str) -> Option<PartId> {
        PartId::ALL.into_iter().find(|p| p.as_str() == s)
    }
}

impl fmt::Display for PartId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Number of body parts per person. The torso slot stands for head and torso.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum ModelArity {
    Three,
    Five,
}

impl ModelArity {
    pub fn parts(self) -> &'static [PartId] {
        match self {
            ModelArity::Three => &[PartId::Torso, PartId::LeftArm, PartId::RightArm],
            ModelArity::Five => &[
                PartId::Torso,
                PartId::LeftArm,
                PartId::RightArm,
                PartId::LeftLeg,
                PartId::RightLeg,
            ],
        }
    }

    pub fn count(self) -> usize {
        self.parts().len()
    }
}

impl TryFrom<u8> for ModelArity {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, String> {
        match v {
            3 => Ok(ModelArity::Three),
            5 => Ok(ModelArity::Five),
            other => Err(format!("model arity must be 3 or 5, got {other}")),
        }
    }
}

impl From<ModelArity> for u8 {
    fn from(a: ModelArity) -> u8 {
        a.count() as u8
    }
}

/// One candidate location for a body part, with its detector log-evidence.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartState {
    pub part: PartId,
    pub x: f64,
    pub y: f64,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Person {
    pub id: i64,
    pub parts: BTreeMap<PartId, Vec<PartState>>,
}

impl Person {
    pub fn candidates(&self, part: PartId) -> &[PartState] {
        self.parts.get(&part).map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrameDetections {
    pub frame_index: u64,
    pub persons: Vec<Person>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grid {
    pub width: u32,
    pub height: u32,
}

impl Grid {
    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= 0.0 && y >= 0.0 && x <= f64::from(self.width) && y <= f64::from(self.height)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DetectionSequence {
    pub sequence_id: String,
    pub label: Option<String>,
    pub arity: ModelArity,
    pub grid: Grid,
    pub frames: Vec<FrameDetections>,
}

impl DetectionSequence {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IssueKind {
    EmptySequence,
    NonMonotoneFrame,
    DuplicatePerson { person: i64 },
    MissingPart { person: i64, part: PartId },
    UnexpectedPart { person: i64, part: PartId },
    NonFinite { person: i64, part: PartId },
    OutOfGrid { person: i64, part: PartId },
    PersonCountMismatch { expected: usize, got: usize },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Issue {
    pub frame: Option<u64>,
    #[serde(flatten)]
    pub kind: IssueKind,
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.issues.is_empty()
    }
}

/// Check every invariant of a sequence against a model arity. Never fails;
/// each violation is reported with its frame index.
pub fn validate(seq: &DetectionSequence, arity: ModelArity) -> ValidationReport {
    let mut issues = Vec::new();
    if seq.frames.is_empty() {
        issues.push(Issue {
            frame: None,
            kind: IssueKind::EmptySequence,
        });
    }
    let allowed = arity.parts();
    let mut prev: Option<u64> = None;
    for frame in &seq.frames {
        let f = Some(frame.frame_index);
        if let Some(p) = prev {
            if frame.frame_index <= p {
                issues.push(Issue {
                    frame: f,
                    kind: IssueKind::NonMonotoneFrame,
                });
            }
        }
        prev = Some(frame.frame_index);
        let mut seen = BTreeSet::new();
        for person in &frame.persons {
            if !seen.insert(person.id) {
                issues.push(Issue {
                    frame: f,
                    kind: IssueKind::DuplicatePerson { person: person.id },
                });
            }
            for &part in allowed {
                if person.candidates(part).is_empty() {
                    issues.push(Issue {
                        frame: f,
                        kind: IssueKind::MissingPart {
                            person: person.id,
                            part,
                        },
                    });
                }
            }
            for (&part, cands) in &person.parts {
                if !allowed.contains(&part) {
                    issues.push(Issue {
                        frame: f,
                        kind: IssueKind::UnexpectedPart {
                            person: person.id,
                            part,
                        },
                    });
                }
                for c in cands {
                    if !(c.x.is_finite() && c.y.is_finite() && c.score.is_finite()) {
                        issues.push(Issue {
                            frame: f,
                            kind: IssueKind::NonFinite {
                                person: person.id,
                                part,
                            },
                        });
                    } else if !seq.grid.contains(c.x, c.y) {
                        issues.push(Issue {
                            frame: f,
                            kind: IssueKind::OutOfGrid {
                                person: person.id,
                                part,
                            },
                        });
                    }
                }
            }
        }
    }
    ValidationReport { issues }
}

fn malformed(line: usize, reason: impl Into<String>) -> Error {
    Error::MalformedRecord {
        line,
        reason: reason.into(),
    }
}

fn parse_header(line_no: usize, v: &Value) -> Result<(String, Option<String>, Grid, ModelArity)> {
    let obj = v
        .as_object()
        .ok_or_else(|| malformed(line_no, "header is not an object"))?;
    let id = obj
        .get("sequence_id")
        .and_then(Value::as_str)
        .ok_or_else(|| malformed(line_no, "header missing sequence_id"))?
        .to_string();
    let label = match obj.get("label") {
        None | Some(Value::Null) => None,
        Some(Value::String(s)) => Some(s.clone()),
        Some(_) => return Err(malformed(line_no, "label must be a string")),
    };
    let grid = obj
        .get("grid")
        .and_then(Value::as_array)
        .filter(|a| a.len() == 2)
        .and_then(|a| Some((a[0].as_u64()?, a[1].as_u64()?)))
        .filter(|&(w, h)| w > 0 && h > 0 && w <= u64::from(u32::MAX) && h <= u64::from(u32::MAX))
        .ok_or_else(|| malformed(line_no, "grid must be [width, height] of positive integers"))?;
    let arity = obj
        .get("model_arity")
        .and_then(Value::as_u64)
        .ok_or_else(|| malformed(line_no, "header missing model_arity"))
        .and_then(|a| {
            u8::try_from(a)
                .map_err(|_| a.to_string())
                .and_then(ModelArity::try_from)
                .map_err(|e| malformed(line_no, e))
        })?;
    Ok((
        id,
        label,
        Grid {
            width: grid.0 as u32,
            height: grid.1 as u32,
        },
        arity,
    ))
}

fn parse_frame(line_no: usize, v: &Value, arity: ModelArity) -> Result<FrameDetections> {
    let obj = v
        .as_object()
        .ok_or_else(|| malformed(line_no, "frame record is not an object"))?;
    let frame_index = obj
        .get("frame")
        .and_then(Value::as_u64)
        .ok_or_else(|| malformed(line_no, "missing non-negative integer `frame`"))?;
    let persons_v = obj
        .get("persons")
        .and_then(Value::as_array)
        .ok_or_else(|| malformed(line_no, "missing `persons` array"))?;
    let mut persons = Vec::with_capacity(persons_v.len());
    for pv in persons_v {
        let po = pv
            .as_object()
            .ok_or_else(|| malformed(line_no, "person is not an object"))?;
        let id = po
            .get("id")
            .and_then(Value::as_i64)
            .ok_or_else(|| malformed(line_no, "person missing integer `id`"))?;
        let parts_o = po
            .get("parts")
            .and_then(Value::as_object)
            .ok_or_else(|| malformed(line_no, format!("person {id} missing `parts` object")))?;
        let mut parts = BTreeMap::new();
        for (name, cands_v) in parts_o {
            let part = PartId::parse(name)
                .ok_or_else(|| malformed(line_no, format!("unknown part `{name}`")))?;
            if !arity.parts().contains(&part) {
                return Err(malformed(
                    line_no,
                    format!("part `{name}` is not a slot of the {}-part model", arity.count()),
                ));
            }
            let arr = cands_v
                .as_array()
                .ok_or_else(|| malformed(line_no, format!("part `{name}` is not an array")))?;
            let mut cands = Vec::with_capacity(arr.len());
            for c in arr {
                let num = |key: &str| {
                    c.get(key).and_then(Value::as_f64).ok_or_else(|| {
                        malformed(line_no, format!("candidate of `{name}` missing numeric `{key}`"))
                    })
                };
                cands.push(PartState {
                    part,
                    x: num("x")?,
                    y: num("y")?,
                    score: num("score")?,
                });
            }
            parts.insert(part, cands);
        }
        for &part in arity.parts() {
            if parts.get(&part).is_none_or(Vec::is_empty) {
                return Err(malformed(
                    line_no,
                    format!("person {id} has no `{part}` candidate"),
                ));
            }
        }
        persons.push(Person { id, parts });
    }
    Ok(FrameDetections {
        frame_index,
        persons,
    })
}

/// Parse a detection stream. Frames are returned sorted by index.
pub fn parse_detections<R: Read>(reader: R) -> Result<DetectionSequence> {
    let reader = BufReader::new(reader);
    let mut header = None;
    let mut frames = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| malformed(line_no, format!("unreadable line: {e}")))?;
        if line.trim().is_empty() {
            continue;
        }
        let v: Value =
            serde_json::from_str(&line).map_err(|e| malformed(line_no, e.to_string()))?;
        match &header {
            None => header = Some(parse_header(line_no, &v)?),
            Some((_, _, _, arity)) => frames.push((line_no, parse_frame(line_no, &v, *arity)?)),
        }
    }
    let (sequence_id, label, grid, arity) = header.ok_or(Error::EmptySequence)?;
    if frames.is_empty() {
        return Err(Error::EmptySequence);
    }
    frames.sort_by_key(|(_, f)| f.frame_index);
    for w in frames.windows(2) {
        if w[0].1.frame_index == w[1].1.frame_index {
            return Err(Error::NonMonotoneFrames {
                frame: w[1].1.frame_index,
            });
        }
    }
    for (line_no, f) in &frames {
        let mut ids = BTreeSet::new();
        for p in &f.persons {
            if !ids.insert(p.id) {
                return Err(malformed(*line_no, format!("duplicate person id {}", p.id)));
            }
            for c in p.parts.values().flatten() {
                if !(c.x.is_finite() && c.y.is_finite() && c.score.is_finite()) {
                    return Err(malformed(*line_no, "non-finite candidate value"));
                }
                if !grid.contains(c.x, c.y) {
                    return Err(Error::OutOfGrid {
                        frame: f.frame_index,
                        x: c.x,
                        y: c.y,
                        width: grid.width,
                        height: grid.height,
                    });
                }
            }
        }
    }
    Ok(DetectionSequence {
        sequence_id,
        label,
        arity,
        grid,
        frames: frames.into_iter().map(|(_, f)| f).collect(),
    })
}

pub fn load_detections(path: impl AsRef<Path>) -> Result<DetectionSequence> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_detections(file)
}

pub fn write_detections<W: Write>(seq: &DetectionSequence, mut w: W) -> std::io::Result<()> {
    let header = serde_json::json!({
        "sequence_id": seq.sequence_id,
        "label": seq.label,
        "grid": [seq.grid.width, seq.grid.height],
        "model_arity": seq.arity.count(),
    });
    writeln!(w, "{header}")?;
    for f in &seq.frames {
        let persons: Vec<Value> = f
            .persons
            .iter()
            .map(|p| {
                let parts: serde_json::Map<String, Value> = p
                    .parts
                    .iter()
                    .map(|(part, cands)| {
                        let arr = cands
                            .iter()
                            .map(|c| serde_json::json!({"x": c.x, "y": c.y, "score": c.score}))
                            .collect();
                        (part.as_str().to_string(), Value::Array(arr))
                    })
                    .collect();
                serde_json::json!({"id": p.id, "parts": parts})
            })
            .collect();
        writeln!(w, "{}", serde_json::json!({"frame": f.frame_index, "persons": persons}))?;
    }
    Ok(())
}

pub fn save_detections(seq: &DetectionSequence, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_detections(seq, &mut buf).map_err(|e| Error::io(path, e))?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

/// Quantized realizations of a sequence: `frames[m][j]` is the symbol of
/// realization `j` at frame `m`, in `0..p`.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub struct SymbolSequence {
    pub sequence_id: String,
    pub label: Option<String>,
    pub p: u32,
    pub n: usize,
    pub frames: Vec<Vec<u32>>,
}

impl SymbolSequence {
    pub fn new(
        sequence_id: impl Into<String>,
        label: Option<String>,
        p: u32,
        frames: Vec<Vec<u32>>,
    ) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::EmptySequence);
        }
        let n = frames[0].len();
        for (m, row) in frames.iter().enumerate() {
            if row.len() != n {
                return Err(Error::LengthMismatch(format!(
                    "frame {m} has {} realizations, expected {n}",
                    row.len()
                )));
            }
            if let Some(&s) = row.iter().find(|&&s| s >= p) {
                return Err(Error::SymbolOutOfRange { symbol: s, size: p });
            }
        }
        Ok(SymbolSequence {
            sequence_id: sequence_id.into(),
            label,
            p,
            n,
            frames,
        })
    }

    /// Number of frames, `M`.
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Frames `start..start + len` as a new sequence.
    pub fn window(&self, start: usize, len: usize) -> SymbolSequence {
        SymbolSequence {
            sequence_id: self.sequence_id.clone(),
            label: self.label.clone(),
            p: self.p,
            n: self.n,
            frames: self.frames[start..start + len].to_vec(),
        }
    }

    /// Frames in reverse order.
    pub fn reversed(&self) -> SymbolSequence {
        let mut out = self.clone();
        out.frames.reverse();
        out
    }
}

#[derive(Serialize, Deserialize)]
struct SymbolHeader {
    #[serde(default = "symbol_format_version")]
    version: u32,
    p: u32,
    n: usize,
    #[serde(rename = "M")]
    m: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sequence_id: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label: Option<String>,
}

pub const SYMBOL_FORMAT_VERSION: u32 = 1;

fn symbol_format_version() -> u32 {
    SYMBOL_FORMAT_VERSION
}

pub fn write_symbols<W: Write>(seq: &SymbolSequence, mut w: W) -> std::io::Result<()> {
    let header = SymbolHeader {
        version: SYMBOL_FORMAT_VERSION,
        p: seq.p,
        n: seq.n,
        m: seq.frames.len(),
        sequence_id: Some(seq.sequence_id.clone()),
        label: seq.label.clone(),
    };
    writeln!(w, "{}", serde_json::to_string(&header).expect("header serializes"))?;
    let mut line = String::new();
    for row in &seq.frames {
        line.clear();
        for (j, s) in row.iter().enumerate() {
            if j > 0 {
                line.push(' ');
            }
            line.push_str(&s.to_string());
        }
        writeln!(w, "{line}")?;
    }
    Ok(())
}

pub fn save_symbols(seq: &SymbolSequence, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_symbols(seq, &mut buf).map_err(|e| Error::io(path, e))?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn parse_symbols<R: Read>(reader: R) -> Result<SymbolSequence> {
    let mut lines = BufReader::new(reader).lines();
    let first = lines
        .next()
        .ok_or(Error::EmptySequence)?
        .map_err(|e| malformed(1, e.to_string()))?;
    let header: SymbolHeader = serde_json::from_str(&first)
        .map_err(|e| Error::VersionMismatch(format!("bad symbol header: {e}")))?;
    if header.version != SYMBOL_FORMAT_VERSION {
        return Err(Error::VersionMismatch(format!(
            "symbol format version {} (expected {SYMBOL_FORMAT_VERSION})",
            header.version
        )));
    }
    if header.p < 1 {
        return Err(Error::VersionMismatch("alphabet size p must be >= 1".into()));
    }
    if header.m == 0 {
        return Err(Error::EmptySequence);
    }
    let mut frames = Vec::with_capacity(header.m);
    for (i, line) in lines.enumerate() {
        let line_no = i + 2;
        let line = line.map_err(|e| malformed(line_no, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split_ascii_whitespace()
            .map(|t| {
                let s: u32 = t
                    .parse()
                    .map_err(|_| malformed(line_no, format!("bad symbol `{t}`")))?;
                if s >= header.p {
                    return Err(malformed(
                        line_no,
                        format!("symbol {s} outside alphabet of size {}", header.p),
                    ));
                }
                Ok(s)
            })
            .collect::<Result<Vec<u32>>>()?;
        if row.len() != header.n {
            return Err(malformed(
                line_no,
                format!("{} symbols, header declares n={}", row.len(), header.n),
            ));
        }
        frames.push(row);
    }
    if frames.len() != header.m {
        return Err(malformed(
            frames.len() + 2,
            format!("{} frames, header declares M={}", frames.len(), header.m),
        ));
    }
    Ok(SymbolSequence {
        sequence_id: header.sequence_id.unwrap_or_default(),
        label: header.label,
        p: header.p,
        n: header.n,
        frames,
    })
}

pub fn load_symbols(path: impl AsRef<Path>) -> Result<SymbolSequence> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_symbols(file)
}
