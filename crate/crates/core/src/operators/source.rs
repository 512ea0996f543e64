use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::{Duration, Instant};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};

use crate::clock::{monotonic_ns, ServiceTimer};
use crate::config::SourcePacing;
use crate::dataflow::SourceOp;
use crate::error::{Error, Result};
use crate::image::{read_ppm_file, Frame};
use crate::tensor::TensorF32;

use super::Packet;

#[derive(Debug, Clone, PartialEq)]
pub enum FrameInput {
    /// PPM files, read in lexicographic order.
    Files(Vec<PathBuf>),
    /// Black frames of a fixed size, for backends that ignore pixels.
    Blank { width: u32, height: u32 },
}

impl FrameInput {
    /// All `*.ppm` files directly inside `dir`, sorted by file name.
    pub fn ppm_dir(dir: &Path) -> Result<Self> {
        let entries = std::fs::read_dir(dir).map_err(|e| Error::io_path(dir, e))?;
        let mut files = Vec::new();
        for entry in entries {
            let path = entry.map_err(|e| Error::io_path(dir, e))?.path();
            if path.extension().is_some_and(|x| x.eq_ignore_ascii_case("ppm")) && path.is_file() {
                files.push(path);
            }
        }
        files.sort();
        Ok(FrameInput::Files(files))
    }
}

/// Time the source spends producing each frame, counted from the
/// start of the read, so slow reads are covered by the same budget.
#[derive(Debug)]
pub enum Pacer {
    Immediate,
    Fixed(Duration),
    Poisson { dist: Exp<f64>, rng: ChaCha8Rng, mean: Duration },
}

impl Pacer {
    pub fn new(pacing: SourcePacing, latency_us: u64, seed: u64) -> Result<Self> {
        Ok(match (pacing, latency_us) {
            (_, 0) => Pacer::Immediate,
            (SourcePacing::Fixed, us) => Pacer::Fixed(Duration::from_micros(us)),
            (SourcePacing::Poisson, us) => Pacer::Poisson {
                dist: Exp::new(1.0 / us as f64)
                    .map_err(|e| Error::Config(format!("poisson pacing: {e}")))?,
                rng: ChaCha8Rng::seed_from_u64(seed),
                mean: Duration::from_micros(us),
            },
        })
    }

    /// Mean production time per frame.
    pub fn mean_gap(&self) -> Duration {
        match self {
            Pacer::Immediate => Duration::ZERO,
            Pacer::Fixed(d) => *d,
            Pacer::Poisson { mean, .. } => *mean,
        }
    }

    /// Production time of the next frame.
    pub fn next_gap(&mut self) -> Duration {
        match self {
            Pacer::Immediate => Duration::ZERO,
            Pacer::Fixed(d) => *d,
            Pacer::Poisson { dist, rng, .. } => Duration::from_nanos((dist.sample(rng) * 1e3) as u64),
        }
    }
}

/// Operator 1: reads (or synthesizes) frames and stamps them with seq ids.
pub struct DecodeSource {
    input: FrameInput,
    limit: Option<u64>,
    pacer: Pacer,
    next: u64,
    blank: Option<Arc<TensorF32>>,
    timer: ServiceTimer,
}

impl DecodeSource {
    pub fn new(input: FrameInput, limit: Option<u64>, pacer: Pacer) -> Self {
        let timer = ServiceTimer::new(pacer.mean_gap());
        Self {
            timer,
            input,
            limit,
            pacer,
            next: 0,
            blank: None,
        }
    }

    fn exhausted(&self) -> bool {
        if self.limit.is_some_and(|n| self.next >= n) {
            return true;
        }
        match &self.input {
            FrameInput::Files(f) => self.next >= f.len() as u64,
            FrameInput::Blank { .. } => false,
        }
    }
}

impl SourceOp<Packet> for DecodeSource {
    fn next_item(&mut self) -> Result<Option<Packet>> {
        if self.exhausted() {
            return Ok(None);
        }
        let started = Instant::now();
        let image = match &self.input {
            FrameInput::Files(files) => Arc::new(read_ppm_file(&files[self.next as usize])?),
            FrameInput::Blank { width, height } => Arc::clone(
                self.blank
                    .get_or_insert_with(|| Arc::new(TensorF32::zeros(vec![*height, *width, 3]))),
            ),
        };
        let gap = self.pacer.next_gap();
        if !gap.is_zero() {
            self.timer.sleep_until(started + gap);
        }
        let frame = Frame::new(self.next, image, monotonic_ns())?;
        self.next += 1;
        Ok(Some(Packet::new(frame)))
    }
}
