//! Autoencoder systems over the point-to-point, broadcast, multiple-access
//! and interference topologies, with the composite information/power loss.

use num_complex::Complex64;
use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::mlp::{softmax, Activation, Layer, Mlp, Trace};
use crate::channel::{Decoder, SerEstimate, BLOCK};
use crate::codebook::Codebook;
use crate::constellation::{Constellation, ConstellationMeta};
use crate::design::{CodeMatrix, Rho};
use crate::eh::{Harvester, HarvesterModel};
use crate::par::{self, Exec};
use crate::rng::{normal, streams, substream, Rng};
use crate::{Error, Result};

/// Samples per gradient chunk. Chunk results are summed in index order so
/// the gradient does not depend on the execution policy.
const CHUNK: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopologyKind {
    P2p,
    Bc,
    Mac,
    Ic,
}

/// Users, links and powers of a system.
///
/// `gains[t][r]` scales transmitter `t`'s signal at receiver `r`. The
/// noise at receiver `r` has total variance `p_a[min(r, T−1)] / snr[r]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Topology {
    pub kind: TopologyKind,
    /// Message-set size per user.
    pub m: Vec<usize>,
    /// Linear SNR per receiver.
    pub snr: Vec<f64>,
    pub gains: Vec<Vec<f64>>,
    /// Average power per transmitter, µW.
    pub p_a: Vec<f64>,
}

impl Topology {
    pub fn p2p(m: usize, snr: f64, p_a: f64) -> Result<Self> {
        Self {
            kind: TopologyKind::P2p,
            m: vec![m],
            snr: vec![snr],
            gains: vec![vec![1.0]],
            p_a: vec![p_a],
        }
        .validated()
    }

    /// One transmitter serving two receivers with independent messages.
    pub fn bc(m1: usize, m2: usize, snr1: f64, snr2: f64, p_a: f64) -> Result<Self> {
        Self {
            kind: TopologyKind::Bc,
            m: vec![m1, m2],
            snr: vec![snr1, snr2],
            gains: vec![vec![1.0, 1.0]],
            p_a: vec![p_a],
        }
        .validated()
    }

    /// Two transmitters, one receiver decoding both messages.
    pub fn mac(m1: usize, m2: usize, snr: f64, p_a: f64) -> Result<Self> {
        Self {
            kind: TopologyKind::Mac,
            m: vec![m1, m2],
            snr: vec![snr],
            gains: vec![vec![1.0], vec![1.0]],
            p_a: vec![p_a, p_a],
        }
        .validated()
    }

    /// Two transmitter-receiver pairs with symmetric cross gain.
    pub fn ic(m1: usize, m2: usize, snr1: f64, snr2: f64, cross_gain: f64, p_a: f64) -> Result<Self> {
        Self {
            kind: TopologyKind::Ic,
            m: vec![m1, m2],
            snr: vec![snr1, snr2],
            gains: vec![vec![1.0, cross_gain], vec![cross_gain, 1.0]],
            p_a: vec![p_a, p_a],
        }
        .validated()
    }

    fn validated(self) -> Result<Self> {
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        let (users, tx, rx) = match self.kind {
            TopologyKind::P2p => (1, 1, 1),
            TopologyKind::Bc => (2, 1, 2),
            TopologyKind::Mac => (2, 2, 1),
            TopologyKind::Ic => (2, 2, 2),
        };
        if self.m.len() != users || self.p_a.len() != tx || self.snr.len() != rx {
            return Err(Error::domain(format!("{:?} topology has wrong user, power or SNR count", self.kind)));
        }
        if self.gains.len() != tx || self.gains.iter().any(|g| g.len() != rx) {
            return Err(Error::domain("gain matrix must be transmitters × receivers"));
        }
        if self.m.iter().any(|&m| m < 2) {
            return Err(Error::domain("every message set needs at least 2 messages"));
        }
        if self.snr.iter().any(|&s| !(s > 0.0)) {
            return Err(Error::domain("SNRs must be positive"));
        }
        if self.p_a.iter().any(|&p| !(p > 0.0 && p.is_finite())) {
            return Err(Error::domain("average powers must be positive"));
        }
        if self.gains.iter().flatten().any(|g| !g.is_finite()) {
            return Err(Error::domain("gains must be finite"));
        }
        let unit_diag = match self.kind {
            TopologyKind::Ic => (0..2).all(|j| self.gains[j][j] == 1.0),
            _ => self.gains.iter().flatten().all(|&g| g == 1.0),
        };
        if !unit_diag {
            return Err(Error::domain("direct-link gains must be 1"));
        }
        Ok(())
    }

    pub fn users(&self) -> usize {
        self.m.len()
    }

    pub fn transmitters(&self) -> usize {
        self.p_a.len()
    }

    pub fn receivers(&self) -> usize {
        self.snr.len()
    }

    /// Number of distinct signals transmitter `t` can emit.
    pub fn signal_count(&self, t: usize) -> usize {
        match self.kind {
            TopologyKind::P2p => self.m[0],
            TopologyKind::Bc => self.m[0] * self.m[1],
            _ => self.m[t],
        }
    }

    fn encoder_input_dim(&self, t: usize) -> usize {
        match self.kind {
            TopologyKind::Bc => self.m[0] + self.m[1],
            _ => self.signal_count(t),
        }
    }

    /// Encoder input for signal `q`: a one-hot, or for the broadcast
    /// transmitter the concatenated one-hots of the message pair.
    fn encoder_input(&self, t: usize, q: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.encoder_input_dim(t)];
        match self.kind {
            TopologyKind::Bc => {
                v[q / self.m[1]] = 1.0;
                v[self.m[0] + q % self.m[1]] = 1.0;
            }
            _ => v[q] = 1.0,
        }
        v
    }

    /// Signal index sent by transmitter `t` for the user messages `msgs`.
    pub fn signal_index(&self, t: usize, msgs: &[usize]) -> usize {
        match self.kind {
            TopologyKind::Bc => msgs[0] * self.m[1] + msgs[1],
            _ => msgs[t],
        }
    }

    /// Users whose messages receiver `r` decodes.
    pub fn decoded_users(&self, r: usize) -> Vec<usize> {
        match self.kind {
            TopologyKind::Mac => vec![0, 1],
            _ => vec![r],
        }
    }

    fn reference_power(&self, r: usize) -> f64 {
        self.p_a[r.min(self.transmitters() - 1)]
    }

    /// Total complex noise variance at receiver `r`, µW.
    pub fn noise_var(&self, r: usize) -> f64 {
        self.reference_power(r) / self.snr[r]
    }

    /// Factor applied to received samples before they enter a decoder.
    pub fn decoder_input_scale(&self, r: usize) -> f64 {
        1.0 / self.reference_power(r).sqrt()
    }
}

fn default_hidden() -> Vec<usize> {
    vec![64, 64]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Weight of the delivered-power penalty.
    pub lambda: f64,
    /// Channel uses per message.
    pub n: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub iterations: usize,
    pub seed: u64,
    /// Floor on delivered power inside the penalty, µW.
    pub pd_floor: f64,
    #[serde(default = "default_hidden")]
    pub hidden: Vec<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            n: 1,
            learning_rate: 1e-3,
            batch_size: 256,
            iterations: 2000,
            seed: 1,
            pd_floor: 1e-3,
            hidden: default_hidden(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::domain(format!("lambda must be nonnegative, got {}", self.lambda)));
        }
        if self.n == 0 {
            return Err(Error::domain("n must be at least 1"));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::domain("learning rate must be positive"));
        }
        if self.batch_size == 0 {
            return Err(Error::domain("batch size must be at least 1"));
        }
        if !(self.pd_floor > 0.0) {
            return Err(Error::domain("pd_floor must be positive"));
        }
        if self.hidden.contains(&0) {
            return Err(Error::domain("hidden layers must be nonempty"));
        }
        Ok(())
    }
}

/// Encoders (one per transmitter) and decoders (one per receiver).
#[derive(Debug, Clone, PartialEq)]
pub struct AeSystem {
    pub topology: Topology,
    pub config: TrainConfig,
    pub harvester: HarvesterModel,
    pub encoders: Vec<Mlp>,
    pub decoders: Vec<Mlp>,
    pub final_loss: Option<f64>,
}

impl AeSystem {
    /// Freshly initialized system; weights come from the config seed.
    pub fn new(topology: Topology, config: TrainConfig, harvester: HarvesterModel) -> Result<Self> {
        topology.validate()?;
        config.validate()?;
        let mut rng = substream(config.seed, streams::INIT);
        let two_n = 2 * config.n;
        let mut encoders = Vec::new();
        for t in 0..topology.transmitters() {
            let mut sizes = vec![topology.encoder_input_dim(t)];
            sizes.extend(&config.hidden);
            sizes.push(two_n);
            encoders.push(Mlp::new(&sizes, Activation::Identity, &mut rng)?);
        }
        let mut decoders = Vec::new();
        for r in 0..topology.receivers() {
            let mut sizes = vec![two_n];
            sizes.extend(&config.hidden);
            sizes.push(topology.decoded_users(r).iter().map(|&u| topology.m[u]).sum());
            decoders.push(Mlp::new(&sizes, Activation::Softmax, &mut rng)?);
        }
        Ok(Self {
            topology,
            config,
            harvester,
            encoders,
            decoders,
            final_loss: None,
        })
    }

    pub fn n(&self) -> usize {
        self.config.n
    }

    pub fn param_count(&self) -> usize {
        self.encoders.iter().chain(&self.decoders).map(|n| n.params().len()).sum()
    }

    pub fn to_json(&self) -> Result<String> {
        let file = SystemFile {
            topology: self.topology.clone(),
            config: self.config.clone(),
            harvester: self.harvester.clone(),
            encoders: self.encoders.iter().map(Mlp::to_layers).collect(),
            decoders: self.decoders.iter().map(Mlp::to_layers).collect(),
            final_loss: self.final_loss,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: SystemFile = serde_json::from_str(text)?;
        f.topology.validate()?;
        f.config.validate()?;
        let encoders = f.encoders.iter().map(|l| Mlp::from_layers(l)).collect::<Result<Vec<_>>>()?;
        let decoders = f.decoders.iter().map(|l| Mlp::from_layers(l)).collect::<Result<Vec<_>>>()?;
        let reference = AeSystem::new(f.topology.clone(), f.config.clone(), f.harvester.clone())?;
        let shapes_match = encoders.len() == reference.encoders.len()
            && decoders.len() == reference.decoders.len()
            && encoders.iter().zip(&reference.encoders).all(|(a, b)| a.sizes() == b.sizes())
            && decoders.iter().zip(&reference.decoders).all(|(a, b)| a.sizes() == b.sizes());
        if !shapes_match {
            return Err(Error::domain("network shapes do not match the topology and config"));
        }
        Ok(Self {
            topology: f.topology,
            config: f.config,
            harvester: f.harvester,
            encoders,
            decoders,
            final_loss: f.final_loss,
        })
    }

    /// Max-softmax decoder of receiver `r` for user `u`.
    pub fn decoder_for(&self, r: usize, u: usize) -> Result<LearnedDecoder<'_>> {
        if r >= self.decoders.len() {
            return Err(Error::domain(format!("no receiver {r}")));
        }
        let users = self.topology.decoded_users(r);
        let pos = users
            .iter()
            .position(|&x| x == u)
            .ok_or_else(|| Error::domain(format!("receiver {r} does not decode user {u}")))?;
        let offset = users[..pos].iter().map(|&x| self.topology.m[x]).sum();
        Ok(LearnedDecoder {
            net: &self.decoders[r],
            input_scale: self.topology.decoder_input_scale(r),
            offset,
            len: self.topology.m[u],
        })
    }
}

#[derive(Serialize, Deserialize)]
struct SystemFile {
    topology: Topology,
    config: TrainConfig,
    harvester: HarvesterModel,
    encoders: Vec<Vec<Layer>>,
    decoders: Vec<Vec<Layer>>,
    final_loss: Option<f64>,
}

/// Decision by the largest logit of one decoder head.
pub struct LearnedDecoder<'a> {
    net: &'a Mlp,
    input_scale: f64,
    offset: usize,
    len: usize,
}

impl Decoder for LearnedDecoder<'_> {
    fn decide(&self, y: &[Complex64]) -> usize {
        let input: Vec<f64> = y
            .iter()
            .flat_map(|v| [v.re * self.input_scale, v.im * self.input_scale])
            .collect();
        let out = self.net.eval(&input);
        super::mlp::argmax(&out[self.offset..self.offset + self.len])
    }
}

/// Encoder outputs of one transmitter before and after normalization.
struct Encoded {
    traces: Vec<Trace>,
    raw: Vec<f64>,
    x: Vec<f64>,
    gain: f64,
    sum_sq: f64,
}

fn encode(sys: &AeSystem, t: usize) -> Result<Encoded> {
    let topo = &sys.topology;
    let net = &sys.encoders[t];
    let q_count = topo.signal_count(t);
    let width = 2 * sys.n();
    let mut traces = Vec::with_capacity(q_count);
    let mut raw = Vec::with_capacity(q_count * width);
    for q in 0..q_count {
        let mut tr = net.new_trace();
        net.forward(&topo.encoder_input(t, q), &mut tr);
        raw.extend_from_slice(tr.output());
        traces.push(tr);
    }
    let sum_sq: f64 = raw.iter().map(|v| v * v).sum();
    if !(sum_sq > 0.0) || !sum_sq.is_finite() {
        return Err(Error::Normalization);
    }
    let gain = (q_count as f64 * sys.n() as f64 * topo.p_a[t] / sum_sq).sqrt();
    let x = raw.iter().map(|v| v * gain).collect();
    Ok(Encoded {
        traces,
        raw,
        x,
        gain,
        sum_sq,
    })
}

fn to_code(x: &[f64], rows: usize, n: usize) -> CodeMatrix {
    let symbols = x.chunks_exact(2).map(|c| Complex64::new(c[0], c[1])).collect();
    CodeMatrix::new(rows, n, symbols)
}

/// Normalized transmit signals of transmitter `t`, one row per signal.
pub fn encode_all(sys: &AeSystem, t: usize) -> Result<CodeMatrix> {
    if t >= sys.encoders.len() {
        return Err(Error::domain(format!("no transmitter {t}")));
    }
    let e = encode(sys, t)?;
    Ok(to_code(&e.x, sys.topology.signal_count(t), sys.n()))
}

/// Received samples at every receiver for user messages `msgs` and
/// standard-normal noise draws `unit_noise` (`receivers × 2n`).
pub fn receive(sys: &AeSystem, msgs: &[usize], unit_noise: &[f64]) -> Result<Vec<Vec<Complex64>>> {
    let topo = &sys.topology;
    let n = sys.n();
    if msgs.len() != topo.users() || unit_noise.len() != topo.receivers() * 2 * n {
        return Err(Error::domain("message or noise count does not match the system"));
    }
    let codes = (0..topo.transmitters()).map(|t| encode_all(sys, t)).collect::<Result<Vec<_>>>()?;
    Ok((0..topo.receivers())
        .map(|r| {
            let sd = (topo.noise_var(r) / 2.0).sqrt();
            (0..n)
                .map(|i| {
                    let w = &unit_noise[(r * n + i) * 2..(r * n + i) * 2 + 2];
                    let mut v = Complex64::new(0.0, 0.0);
                    for (t, code) in codes.iter().enumerate() {
                        v += topo.gains[t][r] * code.row(topo.signal_index(t, msgs))[i];
                    }
                    v + Complex64::new(sd * w[0], sd * w[1])
                })
                .collect()
        })
        .collect())
}

/// A minibatch: user messages per sample and unit-variance noise draws.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// `len × users`, row-major.
    pub messages: Vec<usize>,
    /// `len × receivers × 2n` standard normals, scaled by the receiver's
    /// noise level inside the loss.
    pub noise: Vec<f64>,
    pub len: usize,
}

impl Batch {
    pub fn sample(sys: &AeSystem, len: usize, msg_rng: &mut Rng, noise_rng: &mut Rng) -> Self {
        let topo = &sys.topology;
        let mut messages = Vec::with_capacity(len * topo.users());
        for _ in 0..len {
            for &m in &topo.m {
                messages.push(msg_rng.random_range(0..m));
            }
        }
        let noise = (0..len * topo.receivers() * 2 * sys.n()).map(|_| normal(noise_rng)).collect();
        Self { messages, noise, len }
    }
}

/// Gradients laid out like the system's networks.
#[derive(Debug, Clone, PartialEq)]
pub struct Grads {
    pub encoders: Vec<Vec<f64>>,
    pub decoders: Vec<Vec<f64>>,
}

impl Grads {
    fn zeros(sys: &AeSystem) -> Self {
        Self {
            encoders: sys.encoders.iter().map(|n| vec![0.0; n.params().len()]).collect(),
            decoders: sys.decoders.iter().map(|n| vec![0.0; n.params().len()]).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossOutput {
    pub loss: f64,
    /// Mean cross-entropy per sample, summed over decoded users.
    pub xent: f64,
    /// `Σ_r λ / max(P̄_d,r, pd_floor)`.
    pub power: f64,
    /// Batch-mean delivered power per receiver, µW.
    pub pd: Vec<f64>,
    pub grads: Grads,
}

/// Cross-entropy plus delivered-power penalty on one batch, with gradients
/// for every parameter.
///
/// Delivered power is the batch mean over samples and codeword positions of
/// `harvester(|y_i|²)` on the noisy received samples; each receiver adds
/// `λ / max(P̄_d, pd_floor)`.
pub fn composite_loss(sys: &AeSystem, batch: &Batch) -> Result<LossOutput> {
    composite_loss_with(sys, batch, Exec::default())
}

pub fn composite_loss_with(sys: &AeSystem, batch: &Batch, exec: Exec) -> Result<LossOutput> {
    let topo = &sys.topology;
    let users = topo.users();
    let rx = topo.receivers();
    let tx = topo.transmitters();
    let n = sys.n();
    let width = 2 * n;
    let b_len = batch.len;
    if b_len == 0 {
        return Err(Error::domain("batch must be nonempty"));
    }
    if batch.messages.len() != b_len * users || batch.noise.len() != b_len * rx * width {
        return Err(Error::domain("batch dimensions do not match the system"));
    }
    let encoded = (0..tx).map(|t| encode(sys, t)).collect::<Result<Vec<_>>>()?;
    let h = &sys.harvester;

    // Received samples for every (sample, receiver), and delivered power.
    let mut y = vec![0.0; b_len * rx * width];
    let mut pd = vec![0.0; rx];
    for b in 0..b_len {
        let msgs = &batch.messages[b * users..(b + 1) * users];
        for r in 0..rx {
            let sd = (topo.noise_var(r) / 2.0).sqrt();
            let base = (b * rx + r) * width;
            let out = &mut y[base..base + width];
            out.fill(0.0);
            for (t, enc) in encoded.iter().enumerate() {
                let g = topo.gains[t][r];
                let q = topo.signal_index(t, msgs);
                for (o, x) in out.iter_mut().zip(&enc.x[q * width..(q + 1) * width]) {
                    *o += g * x;
                }
            }
            for (o, w) in out.iter_mut().zip(&batch.noise[base..base + width]) {
                *o += sd * w;
            }
            pd[r] += out.chunks_exact(2).map(|c| h.power(c[0] * c[0] + c[1] * c[1])).sum::<f64>();
        }
    }
    for v in &mut pd {
        *v /= (b_len * n) as f64;
    }
    let lambda = sys.config.lambda;
    let floor = sys.config.pd_floor;
    let power: f64 = pd.iter().map(|&p| lambda / p.max(floor)).sum();
    // d(power)/d(h(|y_i|²)) for one symbol of one sample.
    let coef: Vec<f64> = pd
        .iter()
        .map(|&p| if lambda > 0.0 && p > floor { -lambda / (p * p) / (b_len * n) as f64 } else { 0.0 })
        .collect();

    let heads: Vec<Vec<usize>> = (0..rx).map(|r| topo.decoded_users(r)).collect();
    let chunks = b_len.div_ceil(CHUNK);
    let parts = par::map_indexed(exec, chunks, |c| {
        let mut dec_grads: Vec<Vec<f64>> = sys.decoders.iter().map(|d| vec![0.0; d.params().len()]).collect();
        let mut dx: Vec<Vec<f64>> = encoded.iter().map(|e| vec![0.0; e.x.len()]).collect();
        let mut traces: Vec<Trace> = sys.decoders.iter().map(Mlp::new_trace).collect();
        let mut xent = 0.0;
        let mut input = vec![0.0; width];
        let mut d_in = vec![0.0; width];
        for b in c * CHUNK..((c + 1) * CHUNK).min(b_len) {
            let msgs = &batch.messages[b * users..(b + 1) * users];
            for r in 0..rx {
                let yr = &y[(b * rx + r) * width..(b * rx + r + 1) * width];
                let scale = topo.decoder_input_scale(r);
                for (i, v) in input.iter_mut().zip(yr) {
                    *i = v * scale;
                }
                let net = &sys.decoders[r];
                net.forward(&input, &mut traces[r]);
                let logits = traces[r].output().to_vec();
                let mut d_logits = vec![0.0; logits.len()];
                let mut off = 0;
                for &u in &heads[r] {
                    let m = topo.m[u];
                    let z = &logits[off..off + m];
                    let max = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                    let lse = max + z.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
                    xent += lse - z[msgs[u]];
                    let p = softmax(z);
                    for (k, pk) in p.iter().enumerate() {
                        let truth = if k == msgs[u] { 1.0 } else { 0.0 };
                        d_logits[off + k] = (pk - truth) / b_len as f64;
                    }
                    off += m;
                }
                net.backward(&mut traces[r], &d_logits, &mut dec_grads[r], Some(&mut d_in));
                for i in 0..n {
                    let (re, im) = (yr[2 * i], yr[2 * i + 1]);
                    let k = coef[r] * h.slope(re * re + im * im) * 2.0;
                    d_in[2 * i] = d_in[2 * i] * scale + k * re;
                    d_in[2 * i + 1] = d_in[2 * i + 1] * scale + k * im;
                }
                for t in 0..tx {
                    let g = topo.gains[t][r];
                    if g == 0.0 {
                        continue;
                    }
                    let q = topo.signal_index(t, msgs);
                    for (d, v) in dx[t][q * width..(q + 1) * width].iter_mut().zip(&d_in) {
                        *d += g * v;
                    }
                }
            }
        }
        (xent, dec_grads, dx)
    });

    let mut grads = Grads::zeros(sys);
    let mut xent = 0.0;
    let mut dx: Vec<Vec<f64>> = encoded.iter().map(|e| vec![0.0; e.x.len()]).collect();
    for (xe, dg, dxc) in parts {
        xent += xe;
        for (acc, part) in grads.decoders.iter_mut().zip(&dg) {
            for (a, p) in acc.iter_mut().zip(part) {
                *a += p;
            }
        }
        for (acc, part) in dx.iter_mut().zip(&dxc) {
            for (a, p) in acc.iter_mut().zip(part) {
                *a += p;
            }
        }
    }
    xent /= b_len as f64;

    // Back through the normalization and the encoders.
    for (t, mut enc) in encoded.into_iter().enumerate() {
        let dot: f64 = dx[t].iter().zip(&enc.raw).map(|(d, r)| d * r).sum();
        let k = enc.gain / enc.sum_sq * dot;
        let d_raw: Vec<f64> = dx[t].iter().zip(&enc.raw).map(|(d, r)| enc.gain * d - k * r).collect();
        let net = &sys.encoders[t];
        for (q, tr) in enc.traces.iter_mut().enumerate() {
            net.backward(tr, &d_raw[q * width..(q + 1) * width], &mut grads.encoders[t], None);
        }
    }

    Ok(LossOutput {
        loss: xent + power,
        xent,
        power,
        pd,
        grads,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
}

/// Which parameter to perturb: network group, network index, position.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamRef {
    Encoder(usize, usize),
    Decoder(usize, usize),
}

/// Largest system accepted by [`gradient_check`].
pub const GRAD_CHECK_MAX_PARAMS: usize = 200;

const FD_STEP: f64 = 1e-4;

/// Compares analytic gradients with central finite differences over every
/// parameter, using the fourth-order five-point stencil with step `1e-4`.
/// Relative error is `|a − f| / max(|a|, |f|, 1e-7)`.
pub fn gradient_check(sys: &AeSystem, batch: &Batch) -> Result<GradCheckReport> {
    if sys.param_count() > GRAD_CHECK_MAX_PARAMS {
        return Err(Error::domain(format!(
            "gradient check is limited to {GRAD_CHECK_MAX_PARAMS} parameters, system has {}",
            sys.param_count()
        )));
    }
    let mut all = Vec::new();
    for (e, net) in sys.encoders.iter().enumerate() {
        all.extend((0..net.params().len()).map(|i| ParamRef::Encoder(e, i)));
    }
    for (d, net) in sys.decoders.iter().enumerate() {
        all.extend((0..net.params().len()).map(|i| ParamRef::Decoder(d, i)));
    }
    gradient_check_params(sys, batch, &all)
}

/// [`gradient_check`] restricted to `params`; an empty set reports zero.
pub fn gradient_check_params(sys: &AeSystem, batch: &Batch, params: &[ParamRef]) -> Result<GradCheckReport> {
    let analytic = composite_loss_with(sys, batch, Exec::Sequential)?.grads;
    let mut worst: f64 = 0.0;
    let mut probe = sys.clone();
    for &p in params {
        let a = match p {
            ParamRef::Encoder(e, i) => analytic.encoders[e][i],
            ParamRef::Decoder(d, i) => analytic.decoders[d][i],
        };
        let loss_at = |sys: &mut AeSystem, delta: f64| -> Result<f64> {
            *param_mut(sys, p) += delta;
            let out = composite_loss_with(sys, batch, Exec::Sequential).map(|o| o.loss);
            *param_mut(sys, p) -= delta;
            out
        };
        let f = |k: f64, probe: &mut AeSystem| loss_at(probe, k * FD_STEP);
        let fd = (8.0 * (f(1.0, &mut probe)? - f(-1.0, &mut probe)?) - (f(2.0, &mut probe)? - f(-2.0, &mut probe)?))
            / (12.0 * FD_STEP);
        let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-7);
        worst = worst.max(rel);
    }
    Ok(GradCheckReport {
        max_rel_error: worst,
        checked: params.len(),
    })
}

fn param_mut(sys: &mut AeSystem, p: ParamRef) -> &mut f64 {
    match p {
        ParamRef::Encoder(e, i) => &mut sys.encoders[e].params_mut()[i],
        ParamRef::Decoder(d, i) => &mut sys.decoders[d].params_mut()[i],
    }
}

/// A design extracted from a trained transmitter.
#[derive(Debug, Clone, PartialEq)]
pub enum Design {
    Constellation(Constellation),
    Codebook(Codebook),
}

impl Design {
    pub fn to_code(&self) -> CodeMatrix {
        match self {
            Design::Constellation(c) => c.to_code(),
            Design::Codebook(c) => c.to_code(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        match self {
            Design::Constellation(c) => c.to_json(),
            Design::Codebook(c) => c.to_json(),
        }
    }
}

/// Packages every transmitter's normalized outputs as a constellation
/// (`n = 1`) or a codebook, with `rho` set to `"learned"`.
pub fn extract_design(sys: &AeSystem) -> Result<Vec<Design>> {
    let n = sys.n();
    (0..sys.topology.transmitters())
        .map(|t| {
            let code = encode_all(sys, t)?;
            let p_a = sys.topology.p_a[t];
            if n == 1 {
                Ok(Design::Constellation(Constellation::new(
                    code.symbols().to_vec(),
                    p_a,
                    Rho::LEARNED,
                    ConstellationMeta::default(),
                )?))
            } else {
                let words = (0..code.m()).map(|s| (0..n).map(|i| s * n + i).collect()).collect();
                Ok(Design::Codebook(Codebook::new(code.symbols().to_vec(), words, p_a, Rho::LEARNED)?))
            }
        })
        .collect()
}

/// End-to-end evaluation of a system with its own decoders.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemEval {
    /// Per user.
    pub ser: Vec<SerEstimate>,
    /// Mean per-symbol harvested power per receiver, µW.
    pub pd_uw: Vec<f64>,
}

/// Monte Carlo SER and delivered power of the full system, in the same
/// block layout as the channel simulator.
pub fn simulate_system(sys: &AeSystem, trials: usize, seed: u64, exec: Exec) -> Result<SystemEval> {
    if trials < crate::channel::MIN_TRIALS {
        return Err(Error::domain(format!("need at least {} trials", crate::channel::MIN_TRIALS)));
    }
    let topo = &sys.topology;
    let codes = (0..topo.transmitters()).map(|t| encode_all(sys, t)).collect::<Result<Vec<_>>>()?;
    let users = topo.users();
    let rx = topo.receivers();
    let n = sys.n();
    let mut decoders = Vec::new();
    for r in 0..rx {
        for u in topo.decoded_users(r) {
            decoders.push((r, u, sys.decoder_for(r, u)?));
        }
    }
    let blocks = trials.div_ceil(BLOCK);
    let parts = par::map_indexed(exec, blocks, |b| {
        let mut rng = substream(seed, streams::MONTE_CARLO + b as u64);
        let count = BLOCK.min(trials - b * BLOCK);
        let mut errors = vec![0u64; users];
        let mut power = vec![0.0; rx];
        let mut msgs = vec![0; users];
        let mut y = vec![Complex64::new(0.0, 0.0); n];
        for _ in 0..count {
            for (s, &m) in msgs.iter_mut().zip(&topo.m) {
                *s = rng.random_range(0..m);
            }
            let mut received = Vec::with_capacity(rx);
            for r in 0..rx {
                let sd = (topo.noise_var(r) / 2.0).sqrt();
                y.fill(Complex64::new(0.0, 0.0));
                for (t, code) in codes.iter().enumerate() {
                    let row = code.row(topo.signal_index(t, &msgs));
                    for (v, x) in y.iter_mut().zip(row) {
                        *v += topo.gains[t][r] * x;
                    }
                }
                for v in y.iter_mut() {
                    let re = normal(&mut rng);
                    let im = normal(&mut rng);
                    *v += Complex64::new(sd * re, sd * im);
                }
                power[r] += y.iter().map(|v| sys.harvester.power(v.norm_sqr())).sum::<f64>();
                received.push(y.clone());
            }
            for (r, u, dec) in &decoders {
                if dec.decide(&received[*r]) != msgs[*u] {
                    errors[*u] += 1;
                }
            }
        }
        (errors, power)
    });
    let mut errors = vec![0u64; users];
    let mut power = vec![0.0; rx];
    for (e, p) in parts {
        for (a, b) in errors.iter_mut().zip(e) {
            *a += b;
        }
        for (a, b) in power.iter_mut().zip(p) {
            *a += b;
        }
    }
    let ser = errors
        .into_iter()
        .map(|e| {
            let s = e as f64 / trials as f64;
            SerEstimate {
                ser: s,
                ci: crate::channel::ci_halfwidth(s, trials as u64),
                errors: e,
                trials: trials as u64,
                degenerate: false,
            }
        })
        .collect();
    let pd_uw = power.into_iter().map(|p| p / (trials * n) as f64).collect();
    Ok(SystemEval { ser, pd_uw })
}
