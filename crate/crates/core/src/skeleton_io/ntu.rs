//! Reader for the plain-text NTU RGB+D skeleton layout.
//!
//! ```text
//! F                      frame count
//! B                      body count (per frame)
//! <header tokens...>     per body; the first token identifies the body
//! V                      joint count
//! x y z [extra...]       V joint lines
//! ```

use std::collections::HashMap;
use std::path::Path;

use super::{Expected, SequenceWarning, SkeletonError, SkeletonSequence};

struct Cursor<'a> {
    lines: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Cursor<'a> {
    fn new(src: &'a str) -> Self {
        Self {
            lines: src.lines().enumerate(),
            last: 0,
        }
    }

    /// Next line with its 1-based number, or a MalformedLine pointing past EOF.
    fn next(&mut self, expected: Expected) -> Result<(usize, &'a str), SkeletonError> {
        match self.lines.next() {
            Some((i, l)) => {
                self.last = i + 1;
                Ok((i + 1, l))
            }
            None => Err(SkeletonError::MalformedLine {
                line: self.last + 1,
                expected,
            }),
        }
    }

    fn count(&mut self, expected: Expected) -> Result<(usize, usize), SkeletonError> {
        let (line, text) = self.next(expected)?;
        let mut tokens = text.split_whitespace();
        match (tokens.next().map(str::parse::<usize>), tokens.next()) {
            (Some(Ok(n)), None) => Ok((line, n)),
            _ => Err(SkeletonError::MalformedLine { line, expected }),
        }
    }
}

struct BodyTrack {
    id: String,
    joints: usize,
    frames: Vec<Option<Vec<f64>>>,
}

/// Parses one NTU-format record into one sequence per tracked body.
///
/// Bodies are keyed by the first token of their header line and returned in
/// order of first appearance. A body missing from some frames gets
/// zero-filled joints there and a [`SequenceWarning::ZeroFilledFrames`].
pub fn parse_ntu_text(src: &str) -> Result<Vec<SkeletonSequence>, SkeletonError> {
    if src.trim().is_empty() {
        return Err(SkeletonError::EmptyFile);
    }
    let mut cur = Cursor::new(src);
    let (_, n_frames) = cur.count(Expected::FrameCount)?;
    if n_frames == 0 {
        return Err(SkeletonError::EmptyFile);
    }

    let mut bodies: Vec<BodyTrack> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();

    for t in 0..n_frames {
        let (_, n_bodies) = cur.count(Expected::BodyCount)?;
        for slot in 0..n_bodies {
            let (_, header) = cur.next(Expected::BodyHeader)?;
            let id = header
                .split_whitespace()
                .next()
                .map_or_else(|| format!("slot{slot}"), str::to_owned);
            let (count_line, n_joints) = cur.count(Expected::JointCount)?;

            let k = match index.get(&id) {
                Some(&k) => k,
                None => {
                    index.insert(id.clone(), bodies.len());
                    bodies.push(BodyTrack {
                        id: id.clone(),
                        joints: n_joints,
                        frames: vec![None; n_frames],
                    });
                    bodies.len() - 1
                }
            };
            let body = &mut bodies[k];
            if body.joints != n_joints {
                return Err(SkeletonError::JointCountMismatch {
                    line: count_line,
                    body: id,
                    expected: body.joints,
                    found: n_joints,
                });
            }

            let mut coords = Vec::with_capacity(n_joints * 3);
            for _ in 0..n_joints {
                let (line, text) = cur.next(Expected::JointCoordinates)?;
                let mut tokens = text.split_whitespace();
                for _ in 0..3 {
                    let value = tokens
                        .next()
                        .and_then(|tok| tok.parse::<f64>().ok())
                        .filter(|x| x.is_finite())
                        .ok_or(SkeletonError::MalformedLine {
                            line,
                            expected: Expected::JointCoordinates,
                        })?;
                    coords.push(value);
                }
            }
            // A repeated body id within one frame keeps the last record.
            body.frames[t] = Some(coords);
        }
    }

    if bodies.is_empty() {
        return Err(SkeletonError::EmptyFile);
    }

    bodies
        .into_iter()
        .map(|body| {
            let mut missing = Vec::new();
            let mut data = Vec::with_capacity(n_frames * body.joints * 3);
            for (t, frame) in body.frames.into_iter().enumerate() {
                match frame {
                    Some(coords) => data.extend(coords),
                    None => {
                        missing.push(t);
                        data.extend(std::iter::repeat_n(0.0, body.joints * 3));
                    }
                }
            }
            let mut seq = SkeletonSequence::new(n_frames, body.joints, 3, data)?;
            seq.meta.insert("body".into(), body.id);
            if !missing.is_empty() {
                seq.warnings
                    .push(SequenceWarning::ZeroFilledFrames(missing));
            }
            Ok(seq)
        })
        .collect()
}

/// Extracts the zero-based action label from an NTU file name such as
/// `S001C001P001R001A043.skeleton` (label 42).
pub fn label_from_ntu_name(name: &str) -> Option<usize> {
    let pos = name.rfind('A')?;
    let digits: String = name[pos + 1..]
        .chars()
        .take_while(char::is_ascii_digit)
        .collect();
    match digits.parse::<usize>() {
        Ok(n) if n >= 1 && digits.len() == 3 => Some(n - 1),
        _ => None,
    }
}

/// Reads an NTU file, attaching the label encoded in its name when present.
pub fn read_ntu_file(path: &Path) -> Result<Vec<SkeletonSequence>, SkeletonError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| SkeletonError::Io(format!("{}: {e}", path.display())))?;
    let label = path
        .file_name()
        .and_then(|n| n.to_str())
        .and_then(label_from_ntu_name);
    let stem = path
        .file_stem()
        .and_then(|n| n.to_str())
        .unwrap_or_default()
        .to_owned();
    let mut seqs = parse_ntu_text(&text)?;
    for s in &mut seqs {
        s.label = label;
        s.meta.insert("source".into(), stem.clone());
    }
    Ok(seqs)
}
