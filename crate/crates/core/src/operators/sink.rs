use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde_json::json;

use crate::config::OverlayStyle;
use crate::dataflow::{Extras, SinkOp};
use crate::error::{Error, Result};
use crate::image::write_ppm_file;
use crate::pose::FrameRecord;
use crate::topology::SkeletonTopology;

use super::visualize::draw_overlay;
use super::Packet;

pub const POSES_FILE: &str = "poses.jsonl";
pub const STATS_FILE: &str = "stats.json";

pub fn overlay_path(dir: &Path, seq_id: u64) -> PathBuf {
    dir.join(format!("frame_{seq_id}.ppm"))
}

/// Operator 5: draws overlays and exports one JSON line per frame.
pub struct ExportSink {
    topo: Arc<SkeletonTopology>,
    dir: PathBuf,
    jsonl: BufWriter<File>,
    overlay: Option<OverlayStyle>,
    net_w: u32,
    net_h: u32,
    frames: u64,
    humans: u64,
}

impl ExportSink {
    /// Creates `dir` and truncates `dir/poses.jsonl`, so an unwritable
    /// location is reported before any frame is processed.
    pub fn create(
        dir: &Path,
        topo: Arc<SkeletonTopology>,
        overlay: Option<OverlayStyle>,
        net_w: u32,
        net_h: u32,
    ) -> Result<Self> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io_path(dir, e))?;
        let path = dir.join(POSES_FILE);
        let file = File::create(&path).map_err(|e| Error::io_path(&path, e))?;
        Ok(Self {
            topo,
            dir: dir.to_owned(),
            jsonl: BufWriter::new(file),
            overlay,
            net_w,
            net_h,
            frames: 0,
            humans: 0,
        })
    }
}

impl SinkOp<Packet> for ExportSink {
    fn consume(&mut self, item: Packet) -> Result<()> {
        let poses = item.poses()?;
        let line = FrameRecord::new(item.seq_id(), poses, &self.topo).to_json_line();
        writeln!(self.jsonl, "{line}").map_err(|e| Error::io(POSES_FILE, e))?;
        if let Some(style) = &self.overlay {
            let img = draw_overlay(&item.frame.image, poses, &self.topo, style, self.net_w, self.net_h)?;
            write_ppm_file(&overlay_path(&self.dir, item.seq_id()), &img)?;
        }
        self.frames += 1;
        self.humans += poses.len() as u64;
        Ok(())
    }

    fn finish(&mut self) -> Result<()> {
        self.jsonl.flush().map_err(|e| Error::io(POSES_FILE, e))
    }

    fn extras(&self) -> Extras {
        let mut e = Extras::new();
        e.insert("frames_written".into(), json!(self.frames));
        e.insert("humans_written".into(), json!(self.humans));
        e
    }
}
