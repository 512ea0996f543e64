use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::pose::FeatureMaps;
use crate::tensor::{read_tensor_file, write_tensor_file, TensorF32};
use crate::topology::SkeletonTopology;

use super::InferenceBackend;

/// Dump file for `seq_id`: `<dir>/<seq_id, 8 digits>.hpt`, holding the conf and
/// PAF channels stacked into one `[K + 1 + 2L, H', W']` HPT1 tensor.
pub fn dump_path(dir: &Path, seq_id: u64) -> PathBuf {
    dir.join(format!("{seq_id:08}.hpt"))
}

pub fn write_dump(dir: &Path, maps: &FeatureMaps) -> Result<()> {
    write_tensor_file(&dump_path(dir, maps.frame_ref), &maps.to_stacked()).map(|_| ())
}

/// Replays feature maps dumped earlier, one HPT1 file per frame.
pub struct FileBackend {
    dir: PathBuf,
    topo: SkeletonTopology,
    input_w: u32,
    input_h: u32,
}

impl FileBackend {
    pub fn new(dir: PathBuf, topo: SkeletonTopology, input_w: u32, input_h: u32) -> Result<Self> {
        if !dir.is_dir() {
            return Err(Error::Config(format!("map directory {} does not exist", dir.display())));
        }
        Ok(Self {
            dir,
            topo,
            input_w,
            input_h,
        })
    }

    fn load(&self, seq_id: u64) -> Result<FeatureMaps> {
        let path = dump_path(&self.dir, seq_id);
        if !path.is_file() {
            return Err(Error::backend(
                [seq_id],
                format!("missing map file {}", path.display()),
            ));
        }
        let stacked = read_tensor_file(&path).map_err(|e| e.into_backend([seq_id]))?;
        let d = stacked.dims();
        let stride = match d {
            [_, h, w] if *h > 0 && self.input_h % h == 0 && self.input_w % w == 0 && self.input_h / h == self.input_w / w => {
                self.input_h / h
            }
            _ => {
                return Err(Error::backend(
                    [seq_id],
                    format!("map dims {d:?} do not divide input {}x{}", self.input_w, self.input_h),
                ))
            }
        };
        FeatureMaps::from_stacked(stacked, &self.topo, stride, seq_id).map_err(|e| e.into_backend([seq_id]))
    }
}

impl InferenceBackend for FileBackend {
    fn name(&self) -> &str {
        "file"
    }

    fn max_batch(&self) -> u32 {
        u32::MAX
    }

    fn infer(&mut self, _batch: &TensorF32, seq_ids: &[u64]) -> Result<Vec<FeatureMaps>> {
        seq_ids.iter().map(|&s| self.load(s)).collect()
    }
}

/// Wraps another backend and writes every result to a dump directory.
pub struct DumpingBackend {
    inner: Box<dyn InferenceBackend>,
    dir: PathBuf,
}

impl DumpingBackend {
    pub fn new(inner: Box<dyn InferenceBackend>, dir: PathBuf) -> Result<Self> {
        std::fs::create_dir_all(&dir).map_err(|e| Error::io_path(&dir, e))?;
        Ok(Self { inner, dir })
    }
}

impl InferenceBackend for DumpingBackend {
    fn name(&self) -> &str {
        self.inner.name()
    }

    fn max_batch(&self) -> u32 {
        self.inner.max_batch()
    }

    fn infer(&mut self, batch: &TensorF32, seq_ids: &[u64]) -> Result<Vec<FeatureMaps>> {
        let out = self.inner.infer(batch, seq_ids)?;
        for maps in &out {
            write_dump(&self.dir, maps).map_err(|e| e.into_backend([maps.frame_ref]))?;
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{SceneRegistry, SceneSource, SynthParams};
    use crate::backend::SynthBackend;

    fn synth() -> SynthBackend {
        SynthBackend::new(
            SkeletonTopology::coco18(),
            SynthParams::default(),
            SceneRegistry::new(SceneSource::Procedural { seed: 1 }, 128, 96),
            128,
            96,
        )
        .unwrap()
    }

    #[test]
    fn replay_matches_dumps_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let mut dumper = DumpingBackend::new(Box::new(synth()), dir.path().to_owned()).unwrap();
        let batch = TensorF32::zeros(vec![10, 3, 96, 128]);
        let ids: Vec<u64> = (0..10).collect();
        let original = dumper.infer(&batch, &ids).unwrap();

        let mut replay = FileBackend::new(dir.path().to_owned(), SkeletonTopology::coco18(), 128, 96).unwrap();
        let replayed = replay.infer(&batch, &ids).unwrap();
        assert_eq!(original, replayed);

        let err = replay.infer(&TensorF32::zeros(vec![1, 3, 96, 128]), &[10]).unwrap_err();
        assert!(matches!(err, Error::Backend { ref seq_ids, .. } if seq_ids == &[10]));
    }

    #[test]
    fn corrupt_file_surfaces_format_cause() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dump_path(dir.path(), 0), b"HPT1\x03garbage").unwrap();
        let mut replay = FileBackend::new(dir.path().to_owned(), SkeletonTopology::coco18(), 128, 96).unwrap();
        match replay.infer(&TensorF32::zeros(vec![1, 3, 96, 128]), &[0]) {
            Err(Error::Backend { cause: Some(cause), .. }) => assert!(matches!(*cause, Error::Format(_))),
            other => panic!("unexpected {other:?}"),
        }
    }
}
