use std::path::Path;

use nextrate_core::temporal::{RateLevel, TemporalIndexPlan};
use nextrate_core::world::{VideoSequence, BASE_FPS};
use nextrate_core::Tensor;

use super::{len32, read_file, write_file, Reader, Writer};
use crate::error::{CliError, CliResult};

pub const TMV_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"TMV1";

/// Header, then `T·D` frame values row by row. The base rate is always
/// written as 24 fps; indices are rebuilt as `t_start + j·2^level`.
pub fn encode_tmv(seq: &VideoSequence) -> Result<Vec<u8>, String> {
    if !seq.indices.is_uniform() {
        return Err("only uniformly spaced sequences can be stored".into());
    }
    let mut w = Writer::default();
    w.bytes(MAGIC);
    w.u32(TMV_VERSION);
    w.u32(len32(seq.frames.rows())?);
    w.u32(len32(seq.frames.last_dim())?);
    w.f32(BASE_FPS as f32);
    w.u32(seq.level.level());
    w.f64(seq.indices.t_start);
    for &x in seq.frames.data() {
        w.f32(x);
    }
    Ok(w.buf)
}

pub fn decode_tmv(bytes: &[u8]) -> Result<VideoSequence, String> {
    let mut r = Reader::new(bytes);
    r.magic(MAGIC)?;
    r.version(TMV_VERSION)?;
    let t = r.u32()? as usize;
    let d = r.u32()? as usize;
    let fps = r.f32()?;
    if fps != BASE_FPS as f32 {
        return Err(format!("base rate {fps} fps is not supported"));
    }
    let level = RateLevel::new(r.u32()?).map_err(|e| e.to_string())?;
    let t_start = r.f64()?;
    if !t_start.is_finite() {
        return Err("non-finite t_start".into());
    }
    let data = r.f32s(t.checked_mul(d).ok_or("T·D overflows")?)?;
    r.finish()?;
    let frames = Tensor::matrix(t, d, data).map_err(|e| e.to_string())?;
    let m = level.stride() as f64;
    let indices: Vec<f64> = (0..t).map(|j| t_start + j as f64 * m).collect();
    let plan = TemporalIndexPlan {
        t_start,
        level,
        t_max: t_start.max(0.0),
        indices,
    };
    VideoSequence::new(frames, level, plan).map_err(|e| e.to_string())
}

pub fn save_tmv(path: &Path, seq: &VideoSequence) -> CliResult<()> {
    let bytes = encode_tmv(seq).map_err(|m| CliError::format(path, m))?;
    write_file(path, &bytes)
}

pub fn load_tmv(path: &Path) -> CliResult<VideoSequence> {
    decode_tmv(&read_file(path)?).map_err(|m| CliError::format(path, m))
}
