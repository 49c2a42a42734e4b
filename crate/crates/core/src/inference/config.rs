//! The `f(…)m(…)[s(…)]` parallel-generation config grammar.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::temporal::RateLevel;

pub const DEFAULT_DENOISE_STEPS: usize = 50;

/// Stage rates (fps), segments per stage and denoising steps per stage.
/// The last rate is the full rate.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParallelConfig {
    pub stage_fps: Vec<u32>,
    pub stage_segments: Vec<usize>,
    pub denoise_steps: Vec<usize>,
    /// Uniform branching factor, when `M_s = W^s`.
    pub w: Option<usize>,
}

impl ParallelConfig {
    pub fn new(stage_fps: Vec<u32>, stage_segments: Vec<usize>, denoise_steps: Vec<usize>) -> Result<Self> {
        let w = uniform_branching(&stage_segments);
        let c = Self {
            stage_fps,
            stage_segments,
            denoise_steps,
            w,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn stage_count(&self) -> usize {
        self.stage_fps.len()
    }

    pub fn validate(&self) -> Result<()> {
        let k = self.stage_fps.len();
        if k == 0 {
            return Err(Error::config("at least one stage is required"));
        }
        if self.stage_segments.len() != k || self.denoise_steps.len() != k {
            return Err(Error::config(format!(
                "stage lists disagree: {} rates, {} segment counts, {} step counts",
                k,
                self.stage_segments.len(),
                self.denoise_steps.len()
            )));
        }
        if self.stage_fps.iter().any(|&f| f == 0)
            || self.stage_segments.iter().any(|&m| m == 0)
            || self.denoise_steps.iter().any(|&s| s == 0)
        {
            return Err(Error::config("rates, segment counts and steps must be positive"));
        }
        for w in self.stage_fps.windows(2) {
            if w[1] <= w[0] || w[1] % w[0] != 0 || !(w[1] / w[0]).is_power_of_two() {
                return Err(Error::config(format!(
                    "{} fps to {} fps is not an increasing power-of-two step",
                    w[0], w[1]
                )));
            }
        }
        Ok(())
    }

    /// Rate level of each stage relative to the last (full) rate.
    pub fn levels(&self) -> Vec<RateLevel> {
        let full = *self.stage_fps.last().expect("validated");
        self.stage_fps
            .iter()
            .map(|&f| RateLevel::new((full / f).trailing_zeros()).expect("validated"))
            .collect()
    }

    pub fn strides(&self) -> Vec<usize> {
        self.levels().iter().map(|l| l.stride()).collect()
    }
}

fn uniform_branching(segments: &[usize]) -> Option<usize> {
    if segments.len() < 2 || segments[0] != 1 {
        return None;
    }
    let w = segments[1];
    let mut expect = 1usize;
    for &m in segments {
        if m != expect {
            return None;
        }
        expect = expect.checked_mul(w)?;
    }
    (w >= 2).then_some(w)
}

impl fmt::Display for ParallelConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let join = |v: &[String]| v.join(",");
        let fps: Vec<String> = self.stage_fps.iter().map(|x| format!("{x}")).collect();
        let seg: Vec<String> = self.stage_segments.iter().map(|x| format!("{x}")).collect();
        write!(f, "f({})m({})", join(&fps), join(&seg))?;
        if self.denoise_steps.iter().any(|&s| s != DEFAULT_DENOISE_STEPS) {
            let st: Vec<String> = self.denoise_steps.iter().map(|x| format!("{x}")).collect();
            write!(f, "s({})", join(&st))?;
        }
        Ok(())
    }
}

struct Cursor<'a> {
    s: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn err(&self, msg: impl Into<String>) -> Error {
        Error::Parse {
            pos: self.pos,
            msg: msg.into(),
        }
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.s.get(self.pos) == Some(&c) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected '{}'", c as char)))
        }
    }

    fn number(&mut self) -> Result<u64> {
        let start = self.pos;
        while self.pos < self.s.len() && self.s[self.pos].is_ascii_digit() {
            self.pos += 1;
        }
        if start == self.pos {
            return Err(self.err("expected a positive integer"));
        }
        let text = core::str::from_utf8(&self.s[start..self.pos]).expect("ascii digits");
        let v: u64 = text.parse().map_err(|_| Error::Parse {
            pos: start,
            msg: "integer too large".into(),
        })?;
        if v == 0 {
            return Err(Error::Parse {
                pos: start,
                msg: "values must be positive".into(),
            });
        }
        Ok(v)
    }

    /// `tag(n, n, …)`, returning the list and the position of its first value.
    fn list(&mut self, tag: u8) -> Result<(Vec<u64>, usize)> {
        self.expect(tag)?;
        self.expect(b'(')?;
        let at = self.pos;
        let mut out = alloc::vec![self.number()?];
        while self.s.get(self.pos) == Some(&b',') {
            self.pos += 1;
            out.push(self.number()?);
        }
        self.expect(b')')?;
        Ok((out, at))
    }
}

/// Parses e.g. `f(6,12,24)m(1,2,4)` or `f(6,24)m(1,8)s(50,20)`.
pub fn parse_config(text: &str) -> Result<ParallelConfig> {
    let mut c = Cursor {
        s: text.as_bytes(),
        pos: 0,
    };
    let (fps, _) = c.list(b'f')?;
    let (segments, seg_at) = c.list(b'm')?;
    let steps = if c.pos < c.s.len() {
        Some(c.list(b's')?)
    } else {
        None
    };
    if c.pos != c.s.len() {
        return Err(c.err("unexpected trailing input"));
    }
    if segments.len() != fps.len() {
        return Err(Error::Parse {
            pos: seg_at,
            msg: format!("{} segment counts for {} rates", segments.len(), fps.len()),
        });
    }
    let steps = match steps {
        Some((s, at)) => {
            if s.len() != fps.len() {
                return Err(Error::Parse {
                    pos: at,
                    msg: format!("{} step counts for {} rates", s.len(), fps.len()),
                });
            }
            s
        }
        None => alloc::vec![DEFAULT_DENOISE_STEPS as u64; fps.len()],
    };
    let mut at = 2;
    for (i, w) in fps.windows(2).enumerate() {
        at += format!("{}", fps[i]).len() + 1;
        if w[1] <= w[0] || w[1] % w[0] != 0 || !(w[1] / w[0]).is_power_of_two() {
            return Err(Error::Parse {
                pos: at,
                msg: format!("{} fps to {} fps is not an increasing power-of-two step", w[0], w[1]),
            });
        }
    }
    let small = |v: Vec<u64>| -> Result<Vec<usize>> {
        v.into_iter()
            .map(|x| usize::try_from(x).map_err(|_| Error::config("value out of range")))
            .collect()
    };
    let fps: Vec<u32> = fps
        .into_iter()
        .map(|x| u32::try_from(x).map_err(|_| Error::Parse { pos: 2, msg: "rate out of range".into() }))
        .collect::<Result<_>>()?;
    ParallelConfig::new(fps, small(segments)?, small(steps)?)
}
