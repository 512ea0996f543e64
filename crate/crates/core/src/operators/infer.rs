use std::time::Instant;

use serde_json::json;

use crate::backend::InferenceBackend;
use crate::dataflow::{Emit, Extras, InputPort, OutputPort, TransformOp};
use crate::error::{Error, Result};
use crate::scheduler::{run_batched, split_batch_results, BatchStats, SchedulerPolicy};
use crate::tensor::{BufferPool, TensorF32};

use super::{Packet, Payload};

/// Operator 3: runs the backend on batches chosen by the scheduler.
pub struct InferOp {
    backend: Box<dyn InferenceBackend>,
    policy: SchedulerPolicy,
    batches: BatchStats,
    backend_ns: u64,
    buffers: Buffers,
}

/// Input buffers go back to `pool` once stacked; `stack` keeps the batch
/// allocation alive between calls.
struct Buffers {
    pool: BufferPool,
    stack: Vec<f32>,
}

impl InferOp {
    pub fn new(backend: Box<dyn InferenceBackend>, policy: SchedulerPolicy) -> Result<Self> {
        Self::with_pool(backend, policy, BufferPool::new(0))
    }

    /// Return consumed network inputs to `pool` for reuse upstream.
    pub fn with_pool(backend: Box<dyn InferenceBackend>, policy: SchedulerPolicy, pool: BufferPool) -> Result<Self> {
        if policy.batch_max() > backend.max_batch() as usize {
            return Err(Error::Config(format!(
                "scheduler.batch_max {} exceeds the `{}` backend's limit of {}",
                policy.batch_max(),
                backend.name(),
                backend.max_batch()
            )));
        }
        Ok(Self {
            backend,
            policy,
            batches: BatchStats::default(),
            backend_ns: 0,
            buffers: Buffers {
                pool,
                stack: Vec::new(),
            },
        })
    }
}

/// Stack the batch, call the backend, and attach each result to its packet.
fn infer_batch(
    backend: &mut dyn InferenceBackend,
    backend_ns: &mut u64,
    buffers: &mut Buffers,
    mut batch: Vec<Packet>,
) -> Result<Vec<Packet>> {
    batch.sort_by_key(Packet::seq_id);
    let seq_ids: Vec<u64> = batch.iter().map(Packet::seq_id).collect();
    let mut inputs = batch
        .iter_mut()
        .map(Packet::take_net_input)
        .collect::<Result<Vec<_>>>()?;
    let stacked = if inputs.len() == 1 {
        let single = inputs.pop().expect("one input");
        let mut dims = vec![1];
        dims.extend_from_slice(single.dims());
        TensorF32::new(dims, single.into_data())
    } else {
        let stacked = TensorF32::stack_into(&inputs, std::mem::take(&mut buffers.stack));
        for t in inputs {
            buffers.pool.give(t.into_data());
        }
        stacked
    }
    .map_err(|e| e.into_backend(seq_ids.clone()))?;

    let t = Instant::now();
    let outputs = backend.infer(&stacked, &seq_ids);
    *backend_ns += t.elapsed().as_nanos() as u64;
    if stacked.dims()[0] == 1 {
        buffers.pool.give(stacked.into_data());
    } else {
        buffers.stack = stacked.into_data();
    }

    let results = split_batch_results(outputs?, &seq_ids)?;
    for (packet, (seq, maps)) in batch.iter_mut().zip(results) {
        debug_assert_eq!(packet.seq_id(), seq);
        packet.payload = Payload::Maps(maps);
    }
    Ok(batch)
}

impl TransformOp<Packet> for InferOp {
    fn process(&mut self, item: Packet, emit: &mut Emit<'_, Packet>) -> Result<()> {
        let out = infer_batch(self.backend.as_mut(), &mut self.backend_ns, &mut self.buffers, vec![item])?;
        self.batches.record(1);
        out.into_iter().try_for_each(emit)
    }

    fn run(&mut self, input: &InputPort<'_, Packet>, output: &OutputPort<'_, Packet>) -> Result<()> {
        let backend = self.backend.as_mut();
        let (backend_ns, buffers) = (&mut self.backend_ns, &mut self.buffers);
        let stats = run_batched(input, output, self.policy, &mut |batch| {
            infer_batch(backend, backend_ns, buffers, batch)
        })?;
        self.batches = stats;
        Ok(())
    }

    fn extras(&self) -> Extras {
        let mut e = Extras::new();
        e.insert("backend".into(), json!(self.backend.name()));
        e.insert("batch_histogram".into(), json!(self.batches.histogram));
        e.insert("batches".into(), json!(self.batches.batches));
        e.insert("mean_batch".into(), json!(self.batches.mean_batch()));
        e.insert("backend_ns".into(), json!(self.backend_ns));
        e
    }
}
