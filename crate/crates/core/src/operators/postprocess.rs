use std::sync::Arc;

use crate::dataflow::{Emit, TransformOp};
use crate::error::Result;
use crate::parser::PoseParser;
use crate::topology::SkeletonTopology;

use super::{Packet, Payload};

/// Operator 4: turns feature maps into poses. Stateless per frame.
pub struct ParseOp {
    parser: Arc<dyn PoseParser>,
    topo: Arc<SkeletonTopology>,
}

impl ParseOp {
    pub fn new(parser: Arc<dyn PoseParser>, topo: Arc<SkeletonTopology>) -> Self {
        Self { parser, topo }
    }
}

impl TransformOp<Packet> for ParseOp {
    fn process(&mut self, mut item: Packet, emit: &mut Emit<'_, Packet>) -> Result<()> {
        let maps = item.take_maps()?;
        let poses = self.parser.parse(&maps, &self.topo)?;
        item.payload = Payload::Poses(poses);
        emit(item)
    }
}
