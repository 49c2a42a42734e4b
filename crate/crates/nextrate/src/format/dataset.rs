use std::path::Path;

use nextrate_core::multimask::ShotLayout;
use nextrate_core::world::{Dataset, SceneParams, ShotParams, VideoSequence};

use super::tmv::{decode_tmv, encode_tmv};
use super::{len32, read_file, write_file, Reader, Writer};
use crate::error::{CliError, CliResult};

pub const DATASET_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"TMDS";

/// A dataset plus, optionally, each scene rendered at full rate.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetFile {
    pub dataset: Dataset,
    pub sequences: Option<Vec<VideoSequence>>,
}

fn encode_scene(scene: &SceneParams, seq: Option<&VideoSequence>) -> Result<Vec<u8>, String> {
    let mut w = Writer::default();
    w.u32(len32(scene.duration_frames)?);
    w.u32(len32(scene.shots.len())?);
    for shot in &scene.shots {
        let v = shot.to_vec();
        w.u32(len32(v.len())?);
        v.iter().for_each(|&x| w.f64(x));
    }
    w.u32(len32(scene.layout.boundaries.len())?);
    for &b in &scene.layout.boundaries {
        w.u32(len32(b)?);
    }
    match seq {
        Some(s) => {
            w.u8(1);
            w.block(&encode_tmv(s)?)?;
        }
        None => w.u8(0),
    }
    Ok(w.buf)
}

fn decode_scene(bytes: &[u8]) -> Result<(SceneParams, Option<VideoSequence>), String> {
    let mut r = Reader::new(bytes);
    let duration = r.u32()? as usize;
    let n_shots = r.u32()? as usize;
    let mut shots = Vec::new();
    for _ in 0..n_shots {
        let n = r.u32()? as usize;
        let v = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>, _>>()?;
        shots.push(ShotParams::from_slice(&v).map_err(|e| e.to_string())?);
    }
    let nb = r.u32()? as usize;
    let boundaries = (0..nb).map(|_| r.u32().map(|b| b as usize)).collect::<Result<Vec<_>, _>>()?;
    let layout = ShotLayout::new(boundaries, duration).map_err(|e| e.to_string())?;
    let scene = SceneParams {
        shots,
        layout,
        duration_frames: duration,
    };
    scene.validate().map_err(|e| e.to_string())?;
    let seq = match r.u8()? {
        0 => None,
        1 => Some(decode_tmv(r.block()?)?),
        x => return Err(format!("bad sequence flag {x}")),
    };
    r.finish()?;
    Ok((scene, seq))
}

pub fn encode_dataset(file: &DatasetFile) -> Result<Vec<u8>, String> {
    let ds = &file.dataset;
    if let Some(seqs) = &file.sequences {
        if seqs.len() != ds.scenes.len() {
            return Err(format!("{} sequences for {} scenes", seqs.len(), ds.scenes.len()));
        }
    }
    let mut w = Writer::default();
    w.bytes(MAGIC);
    w.u32(DATASET_VERSION);
    w.u64(ds.seed);
    w.f64(ds.multi_shot_fraction);
    w.u32(len32(ds.scenes.len())?);
    for (k, scene) in ds.scenes.iter().enumerate() {
        let seq = file.sequences.as_ref().map(|s| &s[k]);
        w.block(&encode_scene(scene, seq)?)?;
    }
    Ok(w.buf)
}

pub fn decode_dataset(bytes: &[u8]) -> Result<DatasetFile, String> {
    let mut r = Reader::new(bytes);
    r.magic(MAGIC)?;
    r.version(DATASET_VERSION)?;
    let seed = r.u64()?;
    let multi_shot_fraction = r.f64()?;
    let n = r.u32()? as usize;
    let mut scenes = Vec::with_capacity(n.min(1 << 16));
    let mut seqs = Vec::new();
    for k in 0..n {
        let (scene, seq) = decode_scene(r.block()?).map_err(|m| format!("scene {k}: {m}"))?;
        scenes.push(scene);
        seqs.push(seq);
    }
    r.finish()?;
    let embedded = seqs.iter().filter(|s| s.is_some()).count();
    let sequences = match embedded {
        0 => None,
        e if e == n => Some(seqs.into_iter().flatten().collect()),
        e => return Err(format!("{e} of {n} scenes carry sequences; expected all or none")),
    };
    Ok(DatasetFile {
        dataset: Dataset {
            seed,
            multi_shot_fraction,
            scenes,
        },
        sequences,
    })
}

pub fn save_dataset(path: &Path, file: &DatasetFile) -> CliResult<()> {
    let bytes = encode_dataset(file).map_err(|m| CliError::format(path, m))?;
    write_file(path, &bytes)
}

pub fn load_dataset(path: &Path) -> CliResult<DatasetFile> {
    decode_dataset(&read_file(path)?).map_err(|m| CliError::format(path, m))
}
