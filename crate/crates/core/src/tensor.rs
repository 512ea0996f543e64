//! Dense row-major `f32` tensors and the HPT1 binary format.
//!
//! HPT1 layout: magic `b"HPT1"`, one `u8` rank, `rank` little-endian `u32`
//! extents (outermost first), then the payload as little-endian `f32` in
//! row-major order. There is no trailer.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::sync::{Arc, Mutex};

use crate::error::{Error, Result};

pub const HPT1_MAGIC: [u8; 4] = *b"HPT1";

#[derive(Debug, Clone, PartialEq)]
pub struct TensorF32 {
    dims: Vec<u32>,
    data: Vec<f32>,
}

impl TensorF32 {
    pub fn new(dims: Vec<u32>, data: Vec<f32>) -> Result<Self> {
        let expected = element_count(&dims)
            .ok_or_else(|| Error::Contract(format!("dims {dims:?} overflow u64")))?;
        if expected != data.len() as u64 {
            return Err(Error::Contract(format!(
                "dims {dims:?} need {expected} values, got {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn zeros(dims: Vec<u32>) -> Self {
        Self::filled(dims, 0.0)
    }

    pub fn filled(dims: Vec<u32>, value: f32) -> Self {
        let n = element_count(&dims).expect("tensor extent overflow") as usize;
        Self {
            dims,
            data: vec![value; n],
        }
    }

    pub fn dims(&self) -> &[u32] {
        &self.dims
    }

    pub fn rank(&self) -> usize {
        self.dims.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Contiguous slice of the `index`-th sub-tensor along the outermost axis.
    pub fn outer(&self, index: usize) -> &[f32] {
        let stride = self.outer_stride();
        &self.data[index * stride..(index + 1) * stride]
    }

    pub fn outer_mut(&mut self, index: usize) -> &mut [f32] {
        let stride = self.outer_stride();
        &mut self.data[index * stride..(index + 1) * stride]
    }

    fn outer_stride(&self) -> usize {
        self.dims[1..].iter().map(|&d| d as usize).product()
    }

    /// Stack equally-shaped tensors along a new outermost axis.
    pub fn stack<'a>(items: impl IntoIterator<Item = &'a TensorF32>) -> Result<Self> {
        let mut iter = items.into_iter();
        let first = iter
            .next()
            .ok_or_else(|| Error::Contract("cannot stack zero tensors".into()))?;
        let mut data = first.data.clone();
        let mut count = 1u32;
        for t in iter {
            if t.dims != first.dims {
                return Err(Error::Contract(format!(
                    "stack shape mismatch: {:?} vs {:?}",
                    t.dims, first.dims
                )));
            }
            data.extend_from_slice(&t.data);
            count += 1;
        }
        let mut dims = Vec::with_capacity(first.dims.len() + 1);
        dims.push(count);
        dims.extend_from_slice(&first.dims);
        Ok(Self { dims, data })
    }

    /// Like [`stack`](Self::stack) but writes into `buf`, whose previous
    /// contents are discarded and whose allocation is reused.
    pub fn stack_into(items: &[TensorF32], mut buf: Vec<f32>) -> Result<Self> {
        let first = items
            .first()
            .ok_or_else(|| Error::Contract("cannot stack zero tensors".into()))?;
        buf.clear();
        buf.reserve(items.len() * first.data.len());
        for t in items {
            if t.dims != first.dims {
                return Err(Error::Contract(format!(
                    "stack shape mismatch: {:?} vs {:?}",
                    t.dims, first.dims
                )));
            }
            buf.extend_from_slice(&t.data);
        }
        let mut dims = Vec::with_capacity(first.dims.len() + 1);
        dims.push(items.len() as u32);
        dims.extend_from_slice(&first.dims);
        Ok(Self { dims, data: buf })
    }
}

/// Recycles large `f32` buffers between threads so that steady-state frame
/// processing does not keep mapping and faulting in fresh memory.
/// Holds at most `max_buffers` idle buffers; extra returns are dropped.
#[derive(Debug, Clone)]
pub struct BufferPool {
    idle: Arc<Mutex<Vec<Vec<f32>>>>,
    max_buffers: usize,
}

impl BufferPool {
    pub fn new(max_buffers: usize) -> Self {
        Self {
            idle: Arc::new(Mutex::new(Vec::new())),
            max_buffers,
        }
    }

    /// An empty buffer, with capacity left over from earlier use if one is idle.
    pub fn take(&self) -> Vec<f32> {
        self.idle.lock().unwrap_or_else(|p| p.into_inner()).pop().unwrap_or_default()
    }

    pub fn give(&self, mut buf: Vec<f32>) {
        buf.clear();
        let mut idle = self.idle.lock().unwrap_or_else(|p| p.into_inner());
        if idle.len() < self.max_buffers {
            idle.push(buf);
        }
    }

    pub fn idle(&self) -> usize {
        self.idle.lock().unwrap_or_else(|p| p.into_inner()).len()
    }
}

fn element_count(dims: &[u32]) -> Option<u64> {
    dims.iter()
        .try_fold(1u64, |acc, &d| acc.checked_mul(u64::from(d)))
}

/// Serialize `t` as HPT1. Returns the number of bytes written.
pub fn write_tensor<W: Write>(t: &TensorF32, mut sink: W) -> Result<u64> {
    let rank = u8::try_from(t.dims.len())
        .map_err(|_| Error::Contract(format!("rank {} exceeds 255", t.dims.len())))?;
    let mut header = Vec::with_capacity(5 + 4 * t.dims.len());
    header.extend_from_slice(&HPT1_MAGIC);
    header.push(rank);
    for d in &t.dims {
        header.extend_from_slice(&d.to_le_bytes());
    }
    let mut payload = Vec::with_capacity(4 * t.data.len());
    for v in &t.data {
        payload.extend_from_slice(&v.to_le_bytes());
    }
    sink.write_all(&header)
        .and_then(|_| sink.write_all(&payload))
        .map_err(|e| Error::io("writing HPT1 tensor", e))?;
    Ok((header.len() + payload.len()) as u64)
}

pub fn read_tensor<R: Read>(mut source: R) -> Result<TensorF32> {
    let mut magic = [0u8; 4];
    read_exact_or_format(&mut source, &mut magic, "magic")?;
    if magic != HPT1_MAGIC {
        return Err(Error::Format(format!("bad HPT1 magic {magic:?}")));
    }
    let mut rank = [0u8; 1];
    read_exact_or_format(&mut source, &mut rank, "rank")?;
    let mut dims = Vec::with_capacity(rank[0] as usize);
    for _ in 0..rank[0] {
        let mut d = [0u8; 4];
        read_exact_or_format(&mut source, &mut d, "dims")?;
        dims.push(u32::from_le_bytes(d));
    }
    let count = element_count(&dims)
        .ok_or_else(|| Error::Format(format!("dim product of {dims:?} overflows u64")))?;
    let n_bytes = count
        .checked_mul(4)
        .filter(|&b| usize::try_from(b).is_ok())
        .ok_or_else(|| Error::Format(format!("payload for {dims:?} is too large")))?;

    let mut payload = Vec::new();
    source
        .take(n_bytes)
        .read_to_end(&mut payload)
        .map_err(|e| Error::io("reading HPT1 payload", e))?;
    if payload.len() as u64 != n_bytes {
        return Err(Error::Format(format!(
            "truncated payload: expected {n_bytes} bytes, got {}",
            payload.len()
        )));
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect();
    Ok(TensorF32 { dims, data })
}

fn read_exact_or_format<R: Read>(source: &mut R, buf: &mut [u8], what: &str) -> Result<()> {
    source.read_exact(buf).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format(format!("truncated HPT1 {what}")),
        _ => Error::io(format!("reading HPT1 {what}"), e),
    })
}

pub fn write_tensor_file(path: &Path, t: &TensorF32) -> Result<u64> {
    let file = File::create(path).map_err(|e| Error::io_path(path, e))?;
    let mut w = BufWriter::new(file);
    let n = write_tensor(t, &mut w).map_err(|e| with_path(path, e))?;
    w.flush().map_err(|e| Error::io_path(path, e))?;
    Ok(n)
}

pub fn read_tensor_file(path: &Path) -> Result<TensorF32> {
    let file = File::open(path).map_err(|e| Error::io_path(path, e))?;
    read_tensor(BufReader::new(file)).map_err(|e| with_path(path, e))
}

fn with_path(path: &Path, e: Error) -> Error {
    match e {
        Error::Io { context, source } => Error::io(format!("{}: {context}", path.display()), source),
        Error::Format(msg) => Error::Format(format!("{}: {msg}", path.display())),
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn two_by_two_is_29_bytes() {
        let t = TensorF32::new(vec![2, 2], vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let mut buf = Vec::new();
        assert_eq!(write_tensor(&t, &mut buf).unwrap(), 29);
        assert_eq!(buf.len(), 29);
        assert_eq!(&buf[..4], b"HPT1");
        assert_eq!(buf[4], 2);
        assert_eq!(&buf[5..9], &2u32.to_le_bytes());
        assert_eq!(read_tensor(&buf[..]).unwrap(), t);
    }

    #[test]
    fn scalar_like_tensor() {
        let t = TensorF32::new(vec![1], vec![0.0]).unwrap();
        let mut buf = Vec::new();
        assert_eq!(write_tensor(&t, &mut buf).unwrap(), 4 + 1 + 4 + 4);
    }

    #[test]
    fn bad_magic() {
        let t = TensorF32::new(vec![1], vec![1.0]).unwrap();
        let mut buf = Vec::new();
        write_tensor(&t, &mut buf).unwrap();
        buf[..4].copy_from_slice(b"XXXX");
        assert!(matches!(read_tensor(&buf[..]), Err(Error::Format(_))));
    }

    #[test]
    fn truncated_payload() {
        let t = TensorF32::new(vec![2, 2], vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let mut buf = Vec::new();
        write_tensor(&t, &mut buf).unwrap();
        buf.truncate(buf.len() - 4);
        assert!(matches!(read_tensor(&buf[..]), Err(Error::Format(_))));
        assert!(matches!(read_tensor(&buf[..7]), Err(Error::Format(_))));
    }

    #[test]
    fn dim_product_overflow() {
        let mut buf = b"HPT1".to_vec();
        buf.push(3);
        for _ in 0..3 {
            buf.extend_from_slice(&u32::MAX.to_le_bytes());
        }
        assert!(matches!(read_tensor(&buf[..]), Err(Error::Format(_))));
    }

    #[test]
    fn new_rejects_length_mismatch() {
        assert!(matches!(
            TensorF32::new(vec![2, 3], vec![0.0; 5]),
            Err(Error::Contract(_))
        ));
    }

    #[test]
    fn stack_prepends_axis() {
        let a = TensorF32::filled(vec![2, 3], 1.0);
        let b = TensorF32::filled(vec![2, 3], 2.0);
        let s = TensorF32::stack([&a, &b]).unwrap();
        assert_eq!(s.dims(), &[2, 2, 3]);
        assert_eq!(s.outer(1), b.data());
        let reused = TensorF32::stack_into(&[a.clone(), b.clone()], vec![9.0; 40]).unwrap();
        assert_eq!(reused, s);
        assert!(TensorF32::stack_into(&[a, TensorF32::zeros(vec![3, 2])], Vec::new()).is_err());
        assert!(TensorF32::stack_into(&[], Vec::new()).is_err());
    }

    #[test]
    fn pool_recycles_capacity_up_to_its_limit() {
        let pool = BufferPool::new(1);
        assert_eq!(pool.take().capacity(), 0);
        pool.give(Vec::with_capacity(64));
        pool.give(Vec::with_capacity(8));
        assert_eq!(pool.idle(), 1);
        let buf = pool.take();
        assert!(buf.is_empty() && buf.capacity() >= 64);
        assert_eq!(pool.idle(), 0);
    }

    proptest! {
        #[test]
        fn hpt1_round_trip_is_bit_exact(
            dims in proptest::collection::vec(1u32..6, 0..4),
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let n: u32 = dims.iter().product();
            let data: Vec<f32> = (0..n).map(|_| f32::from_bits(rng.random())).collect();
            let t = TensorF32::new(dims, data).unwrap();
            let mut buf = Vec::new();
            write_tensor(&t, &mut buf).unwrap();
            let back = read_tensor(&buf[..]).unwrap();
            prop_assert_eq!(back.dims(), t.dims());
            let same_bits = back.data().iter().zip(t.data()).all(|(a, b)| a.to_bits() == b.to_bits());
            prop_assert!(same_bits);
        }
    }
}
