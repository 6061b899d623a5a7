//! Learned modulation: encoder/decoder networks trained end to end through
//! the channel and the harvester.

mod adam;
mod mlp;
mod system;
mod train;

pub use adam::Adam;
pub use mlp::{argmax, param_count, softmax, Activation, Layer, Mlp, Trace};
pub use system::{
    composite_loss, composite_loss_with, encode_all, receive, extract_design, gradient_check, gradient_check_params,
    simulate_system, AeSystem, Batch, Design, GradCheckReport, Grads, LearnedDecoder, LossOutput, ParamRef,
    SystemEval, Topology, TopologyKind, TrainConfig, GRAD_CHECK_MAX_PARAMS,
};
pub use train::{train, train_with, write_trace_csv, Diverged, TraceRow, TrainError, Trained};

/// Default λ sweep: zero followed by nine log-spaced values on `[1e-3, 10]`.
pub fn default_lambda_grid() -> Vec<f64> {
    let mut grid = vec![0.0];
    grid.extend((0..9).map(|i| 10f64.powf(-3.0 + 4.0 * i as f64 / 8.0)));
    grid
}
