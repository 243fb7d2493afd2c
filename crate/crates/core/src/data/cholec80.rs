#![allow(clippy::tabs_in_doc_comments)]

//! Cholec80-style annotation files.
//!
//! Phase files carry one line per video frame at the source rate:
//!
//! ```text
//! Frame	Phase
//! 0	Preparation
//! 1	Preparation
//! ```
//!
//! Tool files carry one row every 25 frames with seven binary columns:
//!
//! ```text
//! Frame	Grasper	Bipolar	Hook	Scissors	Clipper	Irrigator	SpecimenBag
//! 0	1	0	0	0	0	0	0
//! 25	1	0	1	0	0	0	0
//! ```

use super::label::{phase_index, FrameLabel, N_PHYSICAL_TOOLS, PHASE_NAMES, TOOL_NAMES};
use super::VideoAnnotation;
use crate::error::{Error, Result};

/// Frames per tool annotation row (25 fps video, 1 fps tool labels).
pub const TOOL_STRIDE: usize = 25;
pub const SOURCE_FPS: f64 = 25.0;

fn data_lines(text: &str) -> impl Iterator<Item = (usize, Vec<&str>)> {
    text.lines()
        .enumerate()
        .skip(1)
        .map(|(i, l)| (i + 1, l.split_whitespace().collect::<Vec<_>>()))
        .filter(|(_, f)| !f.is_empty())
}

fn parse_frame(field: &str, line: usize) -> Result<usize> {
    field.parse().map_err(|_| Error::Parse { line, message: format!("invalid frame index `{field}`") })
}

/// Per-frame phase ids at the source frame rate.
pub fn parse_phase_file(text: &str) -> Result<Vec<usize>> {
    let mut phases = Vec::new();
    for (line, fields) in data_lines(text) {
        if fields.len() != 2 {
            return Err(Error::Parse { line, message: format!("expected 2 columns, found {}", fields.len()) });
        }
        let frame = parse_frame(fields[0], line)?;
        if frame != phases.len() {
            return Err(Error::Parse {
                line,
                message: format!("non-consecutive frame {frame}, expected {}", phases.len()),
            });
        }
        let phase = phase_index(fields[1])
            .ok_or_else(|| Error::Parse { line, message: format!("unknown phase name `{}`", fields[1]) })?;
        phases.push(phase);
    }
    if phases.is_empty() {
        return Err(Error::EmptyAnnotation);
    }
    Ok(phases)
}

/// Physical-tool bit masks, one per annotated (every 25th) frame.
pub fn parse_tool_file(text: &str) -> Result<Vec<u8>> {
    let header: Vec<&str> = text.lines().next().map(|l| l.split_whitespace().collect()).unwrap_or_default();
    let expected_header: Vec<&str> =
        std::iter::once("Frame").chain(TOOL_NAMES[..N_PHYSICAL_TOOLS].iter().copied()).collect();
    if header.is_empty() {
        return Err(Error::EmptyAnnotation);
    }
    if header.len() != expected_header.len() {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected {} header columns, found {}", expected_header.len(), header.len()),
        });
    }
    if header != expected_header {
        return Err(Error::Parse { line: 1, message: format!("unexpected tool header {header:?}") });
    }
    let mut rows = Vec::new();
    for (line, fields) in data_lines(text) {
        if fields.len() != expected_header.len() {
            return Err(Error::Parse {
                line,
                message: format!("column-count mismatch: expected {}, found {}", expected_header.len(), fields.len()),
            });
        }
        let frame = parse_frame(fields[0], line)?;
        let expected = rows.len() * TOOL_STRIDE;
        if frame != expected {
            return Err(Error::Stride { line, expected, found: frame });
        }
        let mut mask = 0u8;
        for (t, v) in fields[1..].iter().enumerate() {
            match *v {
                "0" => {}
                "1" => mask |= 1 << t,
                other => {
                    return Err(Error::Parse {
                        line,
                        message: format!("non-binary value `{other}` for {}", TOOL_NAMES[t]),
                    })
                }
            }
        }
        rows.push(mask);
    }
    if rows.is_empty() {
        return Err(Error::EmptyAnnotation);
    }
    Ok(rows)
}

/// Pairs source-rate phases with stride-25 tool rows into 1 fps labels.
pub fn rate_match(video_id: &str, phases: &[usize], tool_rows: &[u8]) -> Result<VideoAnnotation> {
    let available = phases.len().div_ceil(TOOL_STRIDE);
    let n = available.min(tool_rows.len());
    if n == 0 {
        return Err(Error::EmptyAnnotation);
    }
    let labels = (0..n)
        .map(|k| {
            FrameLabel::new(phases[k * TOOL_STRIDE], tool_rows[k])
                .map_err(|e| Error::Parse { line: k + 2, message: format!("tool row {k}: {e}") })
        })
        .collect::<Result<Vec<_>>>()?;
    VideoAnnotation::new(video_id.to_string(), labels, None)
}

/// Writes a source-rate phase file that repeats each 1 fps label 25 times.
pub fn write_phase_file(labels: &[FrameLabel]) -> String {
    let mut out = String::from("Frame\tPhase\n");
    for (k, l) in labels.iter().enumerate() {
        for j in 0..TOOL_STRIDE {
            out.push_str(&format!("{}\t{}\n", k * TOOL_STRIDE + j, PHASE_NAMES[l.phase()]));
        }
    }
    out
}

pub fn write_tool_file(labels: &[FrameLabel]) -> String {
    let mut out = String::from("Frame");
    for name in &TOOL_NAMES[..N_PHYSICAL_TOOLS] {
        out.push('\t');
        out.push_str(name);
    }
    out.push('\n');
    for (k, l) in labels.iter().enumerate() {
        out.push_str(&(k * TOOL_STRIDE).to_string());
        for t in 0..N_PHYSICAL_TOOLS {
            out.push_str(if l.has_tool(t) { "\t1" } else { "\t0" });
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::label::NO_TOOL;

    const TOOL_HEADER: &str = "Frame\tGrasper\tBipolar\tHook\tScissors\tClipper\tIrrigator\tSpecimenBag\n";

    #[test]
    fn phase_file_basic() {
        let text = "Frame\tPhase\n0\tPreparation\n1\tPreparation\n2\tCalotTriangleDissection\n";
        assert_eq!(parse_phase_file(text).unwrap(), vec![0, 0, 1]);
        // multiple spaces are accepted
        let text = "Frame  Phase\n0   Preparation\n1  ClippingCutting\n\n";
        assert_eq!(parse_phase_file(text).unwrap(), vec![0, 2]);
    }

    #[test]
    fn phase_file_errors() {
        let err = parse_phase_file("Frame\tPhase\n0\tPreparation\n1\tFoo\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        assert!(matches!(parse_phase_file("Frame\tPhase\n"), Err(Error::EmptyAnnotation)));
        assert!(matches!(
            parse_phase_file("Frame\tPhase\n0\tPreparation\n2\tPreparation\n"),
            Err(Error::Parse { line: 3, .. })
        ));
        assert!(parse_phase_file("Frame\tPhase\n0\tpreparation\n").is_err());
    }

    #[test]
    fn tool_file_basic() {
        let text = format!("{TOOL_HEADER}0\t1\t0\t0\t0\t0\t0\t0\n25\t1\t0\t1\t0\t0\t0\t0\n50\t0\t0\t0\t0\t0\t0\t0\n");
        assert_eq!(parse_tool_file(&text).unwrap(), vec![0b1, 0b101, 0]);
    }

    #[test]
    fn tool_file_errors() {
        let bad_value = format!("{TOOL_HEADER}0\t2\t0\t0\t0\t0\t0\t0\n");
        assert!(matches!(parse_tool_file(&bad_value), Err(Error::Parse { line: 2, .. })));
        let bad_stride = format!("{TOOL_HEADER}0\t1\t0\t0\t0\t0\t0\t0\n30\t1\t0\t0\t0\t0\t0\t0\n");
        assert!(matches!(parse_tool_file(&bad_stride), Err(Error::Stride { line: 3, expected: 25, found: 30 })));
        let bad_cols = format!("{TOOL_HEADER}0\t1\t0\t0\n");
        assert!(matches!(parse_tool_file(&bad_cols), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_tool_file(TOOL_HEADER), Err(Error::EmptyAnnotation)));
        assert!(parse_tool_file(
            "Frame\tgrasper\tBipolar\tHook\tScissors\tClipper\tIrrigator\tSpecimenBag\n0\t0\t0\t0\t0\t0\t0\t0\n"
        )
        .is_err());
    }

    #[test]
    fn rate_matching() {
        let mut phases = vec![0; 25];
        phases.extend(vec![1; 25]);
        phases.extend(vec![2; 25]);
        let v = rate_match("v", &phases, &[1, 0, 4]).unwrap();
        assert_eq!(v.labels().iter().map(|l| l.phase()).collect::<Vec<_>>(), vec![0, 1, 2]);
        assert!(v.labels()[1].has_tool(NO_TOOL));
        assert_eq!(v.fps(), 1.0);

        phases.extend(vec![2; 5]);
        assert_eq!(rate_match("v", &phases, &[1, 0, 4]).unwrap().len(), 3);
        assert_eq!(rate_match("v", &phases[..30], &[1, 0, 4]).unwrap().len(), 2);
        assert!(matches!(rate_match("v", &phases, &[]), Err(Error::EmptyAnnotation)));
    }

    #[test]
    fn writer_roundtrip() {
        let labels = vec![
            FrameLabel::new(0, 0).unwrap(),
            FrameLabel::new(1, 0b100).unwrap(),
            FrameLabel::new(1, 0b101).unwrap(),
            FrameLabel::new(6, 0b1000000).unwrap(),
        ];
        let phases = parse_phase_file(&write_phase_file(&labels)).unwrap();
        assert_eq!(phases.len(), 100);
        let tools = parse_tool_file(&write_tool_file(&labels)).unwrap();
        assert_eq!(rate_match("x", &phases, &tools).unwrap().labels(), &labels[..]);
    }
}
