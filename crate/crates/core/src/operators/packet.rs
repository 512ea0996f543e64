use crate::dataflow::Traced;
use crate::error::{Error, Result};
use crate::image::Frame;
use crate::pose::{FeatureMaps, HumanPose};
use crate::tensor::TensorF32;

/// What a frame has been turned into so far.
#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    /// Straight from the source.
    Raw,
    /// `[3, input_h, input_w]` network input.
    NetInput(TensorF32),
    Maps(FeatureMaps),
    Poses(Vec<HumanPose>),
}

impl Payload {
    fn label(&self) -> &'static str {
        match self {
            Payload::Raw => "raw frame",
            Payload::NetInput(_) => "network input",
            Payload::Maps(_) => "feature maps",
            Payload::Poses(_) => "poses",
        }
    }
}

/// The item type of the pose pipeline. The original frame rides along so
/// the last stage can draw on it.
#[derive(Debug, Clone, PartialEq)]
pub struct Packet {
    pub frame: Frame,
    pub payload: Payload,
}

impl Packet {
    pub fn new(frame: Frame) -> Self {
        Self {
            frame,
            payload: Payload::Raw,
        }
    }

    pub fn seq_id(&self) -> u64 {
        self.frame.seq_id
    }

    fn unexpected(&self, wanted: &str) -> Error {
        Error::Contract(format!(
            "frame {}: expected {wanted}, got {}",
            self.frame.seq_id,
            self.payload.label()
        ))
    }

    pub fn take_net_input(&mut self) -> Result<TensorF32> {
        match std::mem::replace(&mut self.payload, Payload::Raw) {
            Payload::NetInput(t) => Ok(t),
            other => {
                self.payload = other;
                Err(self.unexpected("network input"))
            }
        }
    }

    pub fn take_maps(&mut self) -> Result<FeatureMaps> {
        match std::mem::replace(&mut self.payload, Payload::Raw) {
            Payload::Maps(m) => Ok(m),
            other => {
                self.payload = other;
                Err(self.unexpected("feature maps"))
            }
        }
    }

    pub fn poses(&self) -> Result<&[HumanPose]> {
        match &self.payload {
            Payload::Poses(p) => Ok(p),
            _ => Err(self.unexpected("poses")),
        }
    }
}

impl Traced for Packet {
    fn seq_id(&self) -> u64 {
        self.frame.seq_id
    }

    fn ingest_ns(&self) -> u64 {
        self.frame.ingest_ns
    }
}
