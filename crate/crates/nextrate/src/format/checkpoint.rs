use std::path::Path;

use nextrate_core::denoiser::{ModelConfig, ModelParams};
use nextrate_core::trainer::{Checkpoint, Stage, TrainConfig};
use nextrate_core::Tensor;
use serde::{Deserialize, Serialize};

use super::{len32, read_file, write_file, Reader, Writer};
use crate::error::{CliError, CliResult};

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 4] = b"TMCK";
const GROUPS: [&str; 4] = ["params", "ema", "adam_m", "adam_v"];

/// Every random stream of training is keyed by `(seed, stage, update)`, so
/// the next update number is the whole generator state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: u64,
    pub stage: u32,
    pub next_update: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    pub stage: Stage,
    pub step: u64,
    pub seed: u64,
    /// The training config that produced the file, if any.
    pub train: Option<TrainConfig>,
    pub rng: RngState,
}

pub fn encode_checkpoint(state: &Checkpoint<f32>, train: Option<&TrainConfig>) -> Result<Vec<u8>, String> {
    state.validate().map_err(|e| e.to_string())?;
    let meta = CheckpointMeta {
        model: state.model,
        stage: state.stage,
        step: state.step,
        seed: state.seed,
        train: train.cloned(),
        rng: RngState {
            seed: state.seed,
            stage: state.stage.number(),
            next_update: state.step + 1,
        },
    };
    let json = serde_json::to_vec(&meta).map_err(|e| e.to_string())?;
    let mut w = Writer::default();
    w.bytes(MAGIC);
    w.u32(CHECKPOINT_VERSION);
    w.block(&json)?;
    let names = state.params.names();
    let sets: [&[Tensor<f32>]; 4] = [state.params.tensors(), state.ema.tensors(), &state.adam_m, &state.adam_v];
    w.u32(len32(names.len() * sets.len())?);
    for (group, set) in GROUPS.iter().zip(sets) {
        for (name, t) in names.iter().zip(set) {
            w.block(format!("{group}/{name}").as_bytes())?;
            w.u32(len32(t.shape().len())?);
            for &d in t.shape() {
                w.u32(len32(d)?);
            }
            for &x in t.data() {
                w.f32(x);
            }
        }
    }
    Ok(w.buf)
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<(Checkpoint<f32>, CheckpointMeta), String> {
    let mut r = Reader::new(bytes);
    r.magic(MAGIC)?;
    r.version(CHECKPOINT_VERSION)?;
    let meta: CheckpointMeta =
        serde_json::from_slice(r.block()?).map_err(|e| format!("metadata: {e}"))?;
    let count = r.u32()? as usize;
    let mut groups: Vec<Vec<(String, Tensor<f32>)>> = vec![Vec::new(); GROUPS.len()];
    for _ in 0..count {
        let full = std::str::from_utf8(r.block()?).map_err(|_| "array name is not UTF-8".to_string())?;
        let (group, name) = full.split_once('/').ok_or_else(|| format!("array name {full:?} has no group"))?;
        let g = GROUPS
            .iter()
            .position(|&x| x == group)
            .ok_or_else(|| format!("unknown array group {group:?}"))?;
        let ndim = r.u32()? as usize;
        let shape = (0..ndim).map(|_| r.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        let numel = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or("shape overflows")?;
        let data = r.f32s(numel)?;
        let t = Tensor::new(shape, data).map_err(|e| e.to_string())?;
        groups[g].push((name.to_string(), t));
    }
    r.finish()?;
    let mut it = groups.into_iter();
    let mut next_params = || ModelParams::from_named(&meta.model, it.next().expect("four groups"));
    let params = next_params().map_err(|e| format!("params: {e}"))?;
    let ema = next_params().map_err(|e| format!("ema: {e}"))?;
    let adam_m = next_params().map_err(|e| format!("adam_m: {e}"))?.tensors().to_vec();
    let adam_v = next_params().map_err(|e| format!("adam_v: {e}"))?.tensors().to_vec();
    let state = Checkpoint {
        model: meta.model,
        params,
        ema,
        adam_m,
        adam_v,
        stage: meta.stage,
        step: meta.step,
        seed: meta.seed,
    };
    Ok((state, meta))
}

pub fn save_checkpoint(path: &Path, state: &Checkpoint<f32>, train: Option<&TrainConfig>) -> CliResult<()> {
    let bytes = encode_checkpoint(state, train).map_err(|m| CliError::format(path, m))?;
    write_file(path, &bytes)
}

pub fn load_checkpoint(path: &Path) -> CliResult<(Checkpoint<f32>, CheckpointMeta)> {
    decode_checkpoint(&read_file(path)?).map_err(|m| CliError::format(path, m))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> ModelConfig {
        ModelConfig {
            width: 16,
            layers: 1,
            heads: 2,
            max_t: 32,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn save_load_save_is_identical() {
        let mut state = Checkpoint::<f32>::fresh(small(), 11).unwrap();
        state.adam_v[3].data_mut()[0] = 0.125;
        state.step = 17;
        let cfg = TrainConfig::stage1();
        let a = encode_checkpoint(&state, Some(&cfg)).unwrap();
        let (back, meta) = decode_checkpoint(&a).unwrap();
        assert_eq!(back, state);
        assert_eq!(meta.train.as_ref(), Some(&cfg));
        assert_eq!(meta.rng.next_update, 18);
        assert_eq!(encode_checkpoint(&back, meta.train.as_ref()).unwrap(), a);
    }

    #[test]
    fn mismatched_arrays_are_rejected() {
        let state = Checkpoint::<f32>::fresh(small(), 1).unwrap();
        let bytes = encode_checkpoint(&state, None).unwrap();
        assert!(decode_checkpoint(&bytes[..bytes.len() - 4]).is_err());
        // claim a wider model than the arrays hold
        let key = b"\"width\":16";
        let at = bytes.windows(key.len()).position(|w| w == key).unwrap();
        let mut tampered = bytes.clone();
        tampered[at + key.len() - 2..at + key.len()].copy_from_slice(b"32");
        let err = decode_checkpoint(&tampered).unwrap_err();
        assert!(err.contains("params"), "{err}");
    }
}
