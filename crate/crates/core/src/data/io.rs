//! On-disk dataset: `manifest.json` plus one JSON-lines file per video
//! under `videos/`, one object per frame:
//!
//! ```text
//! {"t":0,"phase":1,"tools":[1,0,1,0,0,0,0,0],"feature":"<base64 LE f64>"}
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::label::{FrameLabel, N_TOOLS};
use super::synthetic::SyntheticConfig;
use super::{split_first_half, Split, VideoAnnotation};
use crate::codec::{decode_f64s, encode_f64s};
use crate::error::{Error, Result};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const VIDEO_DIR: &str = "videos";
const FORMAT_NAME: &str = "surgflow-dataset";

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct FrameRecord {
    t: usize,
    phase: usize,
    tools: [u8; N_TOOLS],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    feature: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestVideo {
    pub id: String,
    pub frames: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub format: String,
    pub version: u32,
    pub fps: f64,
    pub feature_dim: Option<usize>,
    pub videos: Vec<ManifestVideo>,
    pub generator: Option<SyntheticConfig>,
    /// Unix seconds; the only non-reproducible field in a dataset.
    pub created_at: u64,
}

impl Manifest {
    pub fn ids(&self) -> Vec<String> {
        self.videos.iter().map(|v| v.id.clone()).collect()
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: Manifest,
    pub videos: Vec<VideoAnnotation>,
}

impl Dataset {
    pub fn split(&self) -> Result<Split> {
        split_first_half(&self.manifest.ids())
    }

    /// Videos of the first-half/second-half split, in manifest order.
    pub fn train_test(&self) -> Result<(Vec<&VideoAnnotation>, Vec<&VideoAnnotation>)> {
        let split = self.split()?;
        let pick = |ids: &[String]| ids.iter().map(|id| self.video(id)).collect::<Result<Vec<_>>>();
        Ok((pick(&split.train)?, pick(&split.test)?))
    }

    pub fn video(&self, id: &str) -> Result<&VideoAnnotation> {
        self.videos.iter().find(|v| v.id() == id).ok_or_else(|| Error::Mismatch(format!("video {id} not in dataset")))
    }

    pub fn feature_dim(&self) -> Option<usize> {
        self.manifest.feature_dim
    }
}

pub fn video_to_jsonl(video: &VideoAnnotation) -> Result<String> {
    let mut out = String::new();
    for (t, label) in video.labels().iter().enumerate() {
        let rec = FrameRecord {
            t,
            phase: label.phase(),
            tools: label.tool_bits(),
            feature: video.features().map(|f| encode_f64s(&f[t])),
        };
        out.push_str(&serde_json::to_string(&rec)?);
        out.push('\n');
    }
    Ok(out)
}

pub fn read_video_jsonl(video_id: &str, text: &str) -> Result<VideoAnnotation> {
    let mut labels = Vec::new();
    let mut features: Vec<Vec<f64>> = Vec::new();
    let mut with_features = None;
    for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let line_no = i + 1;
        let rec: FrameRecord =
            serde_json::from_str(line).map_err(|e| Error::Parse { line: line_no, message: e.to_string() })?;
        if rec.t != labels.len() {
            return Err(Error::Parse { line: line_no, message: format!("frame t={} out of order", rec.t) });
        }
        let mut mask = 0u8;
        for (b, &v) in rec.tools.iter().enumerate() {
            match v {
                0 => {}
                1 => mask |= 1 << b,
                _ => return Err(Error::Parse { line: line_no, message: format!("non-binary tool value {v}") }),
            }
        }
        let label = FrameLabel::from_mask(rec.phase, mask)
            .map_err(|e| Error::Parse { line: line_no, message: e.to_string() })?;
        labels.push(label);
        match (with_features, rec.feature) {
            (None, f) => {
                with_features = Some(f.is_some());
                if let Some(f) = f {
                    features.push(decode_f64s(&f)?);
                }
            }
            (Some(true), Some(f)) => features.push(decode_f64s(&f)?),
            (Some(false), None) => {}
            _ => return Err(Error::Parse { line: line_no, message: "feature present on only some frames".into() }),
        }
    }
    let features = if with_features == Some(true) { Some(features) } else { None };
    VideoAnnotation::new(video_id.to_string(), labels, features)
}

fn now_unix() -> u64 {
    std::time::SystemTime::now().duration_since(std::time::UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0)
}

fn video_path(dir: &Path, id: &str) -> PathBuf {
    dir.join(VIDEO_DIR).join(format!("{id}.jsonl"))
}

pub fn write_dataset(dir: &Path, videos: &[VideoAnnotation], generator: Option<&SyntheticConfig>) -> Result<Manifest> {
    let feature_dim = videos.first().and_then(VideoAnnotation::feature_dim);
    if videos.iter().any(|v| v.feature_dim() != feature_dim) {
        return Err(Error::Dimension("videos disagree on feature dimension".into()));
    }
    let vdir = dir.join(VIDEO_DIR);
    fs::create_dir_all(&vdir).map_err(|e| Error::io(&vdir, e))?;
    for v in videos {
        let path = video_path(dir, v.id());
        fs::write(&path, video_to_jsonl(v)?).map_err(|e| Error::io(&path, e))?;
    }
    let manifest = Manifest {
        format: FORMAT_NAME.into(),
        version: 1,
        fps: 1.0,
        feature_dim,
        videos: videos.iter().map(|v| ManifestVideo { id: v.id().to_string(), frames: v.len() }).collect(),
        generator: generator.cloned(),
        created_at: now_unix(),
    };
    let path = dir.join(MANIFEST_FILE);
    fs::write(&path, serde_json::to_string_pretty(&manifest)? + "\n").map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let path = dir.join(MANIFEST_FILE);
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: Manifest = serde_json::from_str(&text)?;
    if manifest.format != FORMAT_NAME {
        return Err(Error::Mismatch(format!("unknown dataset format `{}`", manifest.format)));
    }
    let mut videos = Vec::with_capacity(manifest.videos.len());
    for entry in &manifest.videos {
        let path = video_path(dir, &entry.id);
        let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let v = read_video_jsonl(&entry.id, &text)?;
        if v.len() != entry.frames || v.feature_dim() != manifest.feature_dim {
            return Err(Error::Mismatch(format!("video {} disagrees with the manifest", entry.id)));
        }
        videos.push(v);
    }
    Ok(Dataset { manifest, videos })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn jsonl_roundtrip_with_and_without_features() {
        let labels = vec![FrameLabel::new(0, 0).unwrap(), FrameLabel::new(3, 0b110).unwrap()];
        let v =
            VideoAnnotation::new("v1".into(), labels.clone(), Some(vec![vec![0.1, -2.5], vec![3.0, 1e-300]])).unwrap();
        let text = video_to_jsonl(&v).unwrap();
        assert!(text.lines().next().unwrap().starts_with("{\"t\":0,\"phase\":0,\"tools\":[0,0,0,0,0,0,0,1]"));
        assert_eq!(read_video_jsonl("v1", &text).unwrap(), v);

        let v = VideoAnnotation::new("v2".into(), labels, None).unwrap();
        let text = video_to_jsonl(&v).unwrap();
        assert!(!text.contains("feature"));
        assert_eq!(read_video_jsonl("v2", &text).unwrap(), v);
    }

    #[test]
    fn jsonl_rejects_inconsistent_labels() {
        let bad = "{\"t\":0,\"phase\":0,\"tools\":[1,0,0,0,0,0,0,1]}\n";
        assert!(matches!(read_video_jsonl("x", bad), Err(Error::Parse { line: 1, .. })));
        let bad = "{\"t\":1,\"phase\":0,\"tools\":[1,0,0,0,0,0,0,0]}\n";
        assert!(read_video_jsonl("x", bad).is_err());
    }

    #[test]
    fn dataset_dir_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = SyntheticConfig { n_videos: 3, feature_dim: 3, time_scale: 0.01, ..Default::default() };
        let videos = crate::data::generate_synthetic(&cfg).unwrap();
        let m = write_dataset(dir.path(), &videos, Some(&cfg)).unwrap();
        assert_eq!(m.videos.len(), 3);
        let ds = load_dataset(dir.path()).unwrap();
        assert_eq!(ds.videos, videos);
        assert_eq!(ds.manifest.generator.as_ref(), Some(&cfg));
        let (train, test) = ds.train_test().unwrap();
        assert_eq!((train.len(), test.len()), (2, 1));
        assert!(matches!(load_dataset(&dir.path().join("nope")), Err(Error::Io { .. })));
    }
}
