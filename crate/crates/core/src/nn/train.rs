//! Minibatch training with Adam.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::system::{composite_loss_with, AeSystem, Batch, TrainConfig};
use super::Adam;
use crate::par::Exec;
use crate::rng::{streams, substream};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub loss: f64,
    pub xent_term: f64,
    pub power_term: f64,
}

#[derive(Debug, Clone)]
pub struct Trained {
    pub system: AeSystem,
    pub trace: Vec<TraceRow>,
}

/// Training stopped on a non-finite loss; the trace up to that point is kept.
#[derive(Debug, Clone)]
pub struct Diverged {
    pub iteration: usize,
    pub trace: Vec<TraceRow>,
}

#[derive(Debug)]
pub enum TrainError {
    Invalid(Error),
    Diverged(Diverged),
}

impl From<Error> for TrainError {
    fn from(e: Error) -> Self {
        TrainError::Invalid(e)
    }
}

impl From<TrainError> for Error {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Invalid(e) => e,
            TrainError::Diverged(d) => Error::TrainingDiverged { iteration: d.iteration },
        }
    }
}

/// Trains `sys` under `config`. The architecture fields (`n`, `hidden`)
/// must match the system; the rest replace the system's settings.
pub fn train(sys: &AeSystem, config: &TrainConfig) -> std::result::Result<Trained, TrainError> {
    train_with(sys, config, Exec::default())
}

pub fn train_with(sys: &AeSystem, config: &TrainConfig, exec: Exec) -> std::result::Result<Trained, TrainError> {
    config.validate()?;
    if config.n != sys.config.n || config.hidden != sys.config.hidden {
        return Err(Error::domain("training config changes the network architecture").into());
    }
    let mut sys = sys.clone();
    sys.config = config.clone();
    let mut msg_rng = substream(config.seed, streams::MESSAGES);
    let mut noise_rng = substream(config.seed, streams::NOISE);
    let mut enc_opt: Vec<Adam> = sys.encoders.iter().map(|n| Adam::new(n.params().len(), config.learning_rate)).collect();
    let mut dec_opt: Vec<Adam> = sys.decoders.iter().map(|n| Adam::new(n.params().len(), config.learning_rate)).collect();
    let mut trace = Vec::with_capacity(config.iterations);
    for iteration in 0..config.iterations {
        let batch = Batch::sample(&sys, config.batch_size, &mut msg_rng, &mut noise_rng);
        let out = match composite_loss_with(&sys, &batch, exec) {
            Ok(o) => o,
            Err(Error::Normalization) => return Err(TrainError::Diverged(Diverged { iteration, trace })),
            Err(e) => return Err(e.into()),
        };
        let finite = out.loss.is_finite()
            && out.grads.encoders.iter().chain(&out.grads.decoders).flatten().all(|g| g.is_finite());
        if !finite {
            return Err(TrainError::Diverged(Diverged { iteration, trace }));
        }
        trace.push(TraceRow {
            iteration,
            loss: out.loss,
            xent_term: out.xent,
            power_term: out.power,
        });
        for ((net, opt), g) in sys.encoders.iter_mut().zip(&mut enc_opt).zip(&out.grads.encoders) {
            opt.step(net.params_mut(), g);
        }
        for ((net, opt), g) in sys.decoders.iter_mut().zip(&mut dec_opt).zip(&out.grads.decoders) {
            opt.step(net.params_mut(), g);
        }
    }
    sys.final_loss = trace.last().map(|r| r.loss);
    Ok(Trained { system: sys, trace })
}

/// Writes the loss trace as `iteration,loss,xent_term,power_term`.
pub fn write_trace_csv<W: Write>(out: W, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    if rows.is_empty() {
        w.write_record(["iteration", "loss", "xent_term", "power_term"])?;
    }
    for row in rows {
        w.serialize(row)?;
    }
    w.flush()?;
    Ok(())
}
