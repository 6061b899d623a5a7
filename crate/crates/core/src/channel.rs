//! Monte Carlo evaluation over the AWGN channel.
//!
//! Noise convention: `snr = P_a / σ²` with `σ²` the total variance of the
//! complex noise sample, so each real dimension carries `σ²/2`.
//!
//! Trials run in fixed blocks of [`BLOCK`]; block `b` draws from its own
//! substream of the seed and block results are reduced in index order, so
//! every estimate depends only on `(seed, trials)`.

use std::io::Write;

use num_complex::Complex64;
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::codebook::{decode_onoff_block, OnOffBlockCode};
use crate::constellation::Constellation;
use crate::design::{dist_sq, CodeMatrix, Rho};
use crate::eh::Harvester;
use crate::par::{self, Exec};
use crate::rng::{normal, streams, substream, Rng};
use crate::{Error, Result};

/// Trials per Monte Carlo block.
pub const BLOCK: usize = 8192;

/// Smallest trial count accepted by the estimators.
pub const MIN_TRIALS: usize = 1000;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChannelSpec {
    /// Linear SNR, `P_a/σ²`. Infinite for a noiseless channel.
    pub snr: f64,
    /// µW.
    pub p_a: f64,
    pub seed: u64,
}

impl ChannelSpec {
    pub fn new(snr: f64, p_a: f64, seed: u64) -> Result<Self> {
        if !(snr > 0.0) {
            return Err(Error::domain(format!("snr must be positive, got {snr}")));
        }
        if !(p_a > 0.0 && p_a.is_finite()) {
            return Err(Error::domain(format!("average power must be positive, got {p_a}")));
        }
        Ok(Self { snr, p_a, seed })
    }

    pub fn from_db(snr_db: f64, p_a: f64, seed: u64) -> Result<Self> {
        Self::new(10f64.powf(snr_db / 10.0), p_a, seed)
    }

    pub fn noiseless(p_a: f64, seed: u64) -> Result<Self> {
        Self::new(f64::INFINITY, p_a, seed)
    }

    /// Total complex noise variance, µW.
    pub fn sigma_sq(&self) -> f64 {
        self.p_a / self.snr
    }

    pub fn snr_db(&self) -> f64 {
        10.0 * self.snr.log10()
    }
}

/// Adds complex Gaussian noise of total variance `sigma_sq` to each symbol.
pub fn awgn(x: &[Complex64], sigma_sq: f64, rng: &mut Rng) -> Vec<Complex64> {
    let mut y = x.to_vec();
    add_noise(&mut y, sigma_sq, rng);
    y
}

fn add_noise(y: &mut [Complex64], sigma_sq: f64, rng: &mut Rng) {
    if sigma_sq == 0.0 {
        return;
    }
    let sd = (sigma_sq / 2.0).sqrt();
    for v in y {
        let re = normal(rng);
        let im = normal(rng);
        *v += Complex64::new(sd * re, sd * im);
    }
}

/// Maps a received block to a message index.
pub trait Decoder: Sync {
    fn decide(&self, y: &[Complex64]) -> usize;
}

/// Minimum-Euclidean-distance decoding; ties go to the smallest index.
pub struct MlDecoder<'a> {
    code: &'a CodeMatrix,
}

impl<'a> MlDecoder<'a> {
    pub fn new(code: &'a CodeMatrix) -> Self {
        Self { code }
    }
}

impl Decoder for MlDecoder<'_> {
    fn decide(&self, y: &[Complex64]) -> usize {
        let mut best = (f64::INFINITY, 0);
        for (s, row) in self.code.rows().enumerate() {
            let d = dist_sq(row, y);
            if d < best.0 {
                best = (d, s);
            }
        }
        best.1
    }
}

impl Decoder for OnOffBlockCode {
    fn decide(&self, y: &[Complex64]) -> usize {
        decode_onoff_block(y, self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SerEstimate {
    pub ser: f64,
    /// 3σ binomial half-width.
    pub ci: f64,
    pub errors: u64,
    pub trials: u64,
    /// All codewords coincide; `ser` is the chance level `(M−1)/M`.
    pub degenerate: bool,
}

impl SerEstimate {
    fn from_counts(errors: u64, trials: u64) -> Self {
        let ser = errors as f64 / trials as f64;
        Self {
            ser,
            ci: ci_halfwidth(ser, trials),
            errors,
            trials,
            degenerate: false,
        }
    }
}

/// `3·√(ser(1−ser)/trials)`.
pub fn ci_halfwidth(ser: f64, trials: u64) -> f64 {
    3.0 * (ser * (1.0 - ser) / trials as f64).sqrt()
}

/// Joint SER and delivered-power estimate from one set of trials.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub ser: SerEstimate,
    /// Mean harvested power per symbol, µW.
    pub pd_uw: f64,
}

fn check_trials(trials: usize) -> Result<()> {
    if trials < MIN_TRIALS {
        return Err(Error::domain(format!("need at least {MIN_TRIALS} trials, got {trials}")));
    }
    Ok(())
}

/// Neumaier-compensated running sum.
#[derive(Default, Clone, Copy)]
struct Sum {
    total: f64,
    comp: f64,
}

impl Sum {
    fn add(&mut self, x: f64) {
        let t = self.total + x;
        if self.total.abs() >= x.abs() {
            self.comp += (self.total - t) + x;
        } else {
            self.comp += (x - t) + self.total;
        }
        self.total = t;
    }

    fn value(self) -> f64 {
        self.total + self.comp
    }
}

/// Runs `trials` uniform-message transmissions. `decoder` and `harvester`
/// are optional so callers pay only for what they measure.
fn run<D: Decoder + ?Sized, H: Harvester + ?Sized>(
    code: &CodeMatrix,
    decoder: Option<&D>,
    harvester: Option<&H>,
    spec: &ChannelSpec,
    trials: usize,
    exec: Exec,
) -> (u64, f64) {
    let n = code.n();
    let m = code.m();
    let sigma_sq = spec.sigma_sq();
    let blocks = trials.div_ceil(BLOCK);
    let parts = par::map_indexed(exec, blocks, |b| {
        let mut rng = substream(spec.seed, streams::MONTE_CARLO + b as u64);
        let count = BLOCK.min(trials - b * BLOCK);
        let mut y = vec![Complex64::new(0.0, 0.0); n];
        let mut errors = 0u64;
        let mut power = Sum::default();
        for _ in 0..count {
            let s = rng.random_range(0..m);
            y.copy_from_slice(code.row(s));
            add_noise(&mut y, sigma_sq, &mut rng);
            if let Some(d) = decoder {
                if d.decide(&y) != s {
                    errors += 1;
                }
            }
            if let Some(h) = harvester {
                for v in &y {
                    power.add(h.power(v.norm_sqr()));
                }
            }
        }
        (errors, power)
    });
    let mut errors = 0;
    let mut power = Sum::default();
    for (e, p) in parts {
        errors += e;
        power.add(p.value());
    }
    (errors, power.value() / (trials * n) as f64)
}

fn degenerate_estimate(code: &CodeMatrix, trials: usize) -> SerEstimate {
    let ser = (code.m() - 1) as f64 / code.m() as f64;
    SerEstimate {
        ser,
        ci: 0.0,
        errors: 0,
        trials: trials as u64,
        degenerate: true,
    }
}

/// Symbol error rate under minimum-distance decoding.
pub fn ser_mc(code: &CodeMatrix, spec: &ChannelSpec, trials: usize) -> Result<SerEstimate> {
    ser_mc_with(code, &MlDecoder::new(code), spec, trials, Exec::default())
}

/// Symbol error rate with an arbitrary decoder, such as a learned one or
/// the position detector of an On-Off block code.
pub fn ser_mc_with<D: Decoder + ?Sized>(
    code: &CodeMatrix,
    decoder: &D,
    spec: &ChannelSpec,
    trials: usize,
    exec: Exec,
) -> Result<SerEstimate> {
    check_trials(trials)?;
    if code.m() > 1 && code.is_degenerate() {
        return Ok(degenerate_estimate(code, trials));
    }
    let (errors, _) = run::<D, dyn Harvester>(code, Some(decoder), None, spec, trials, exec);
    Ok(SerEstimate::from_counts(errors, trials as u64))
}

/// Mean per-symbol harvested power of the received samples.
pub fn delivered_power_mc<H: Harvester + ?Sized>(
    code: &CodeMatrix,
    spec: &ChannelSpec,
    harvester: &H,
    trials: usize,
) -> Result<f64> {
    check_trials(trials)?;
    let (_, pd) = run::<dyn Decoder, H>(code, None, Some(harvester), spec, trials, Exec::default());
    Ok(pd)
}

/// Noiseless delivered power averaged exactly over equiprobable messages.
pub fn delivered_power_exact<H: Harvester + ?Sized>(code: &CodeMatrix, harvester: &H) -> f64 {
    let mut sum = Sum::default();
    for x in code.symbols() {
        sum.add(harvester.power(x.norm_sqr()));
    }
    sum.value() / code.symbols().len() as f64
}

/// SER and delivered power from the same trials.
pub fn evaluate<D: Decoder + ?Sized, H: Harvester + ?Sized>(
    code: &CodeMatrix,
    decoder: &D,
    harvester: &H,
    spec: &ChannelSpec,
    trials: usize,
    exec: Exec,
) -> Result<Evaluation> {
    check_trials(trials)?;
    let (errors, pd_uw) = run(code, Some(decoder), Some(harvester), spec, trials, exec);
    let ser = if code.m() > 1 && code.is_degenerate() {
        degenerate_estimate(code, trials)
    } else {
        SerEstimate::from_counts(errors, trials as u64)
    };
    Ok(Evaluation { ser, pd_uw })
}

/// One row of a rate-power sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TradeoffPoint {
    /// λ or ρ.
    pub control: f64,
    pub ser: f64,
    #[serde(rename = "ci")]
    pub ci_halfwidth: f64,
    pub pd_uw: f64,
    pub snr_db: f64,
    pub trials: u64,
    pub seed: u64,
}

impl TradeoffPoint {
    pub fn new(control: f64, eval: &Evaluation, spec: &ChannelSpec) -> Self {
        Self {
            control,
            ser: eval.ser.ser,
            ci_halfwidth: eval.ser.ci,
            pd_uw: eval.pd_uw,
            snr_db: spec.snr_db(),
            trials: eval.ser.trials,
            seed: spec.seed,
        }
    }
}

/// Evaluates a family of designs with minimum-distance decoding. Rows
/// follow ascending control value.
pub fn rp_sweep<F, H>(
    mut designer: F,
    controls: &[f64],
    spec: &ChannelSpec,
    harvester: &H,
    trials: usize,
) -> Result<Vec<TradeoffPoint>>
where
    F: FnMut(f64) -> Result<CodeMatrix>,
    H: Harvester + ?Sized,
{
    if controls.is_empty() {
        return Err(Error::domain("sweep needs at least one control value"));
    }
    if controls.iter().any(|c| !c.is_finite()) {
        return Err(Error::domain("control values must be finite"));
    }
    let mut sorted = controls.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut rows = Vec::with_capacity(sorted.len());
    for control in sorted {
        let code = designer(control)?;
        let eval = evaluate(&code, &MlDecoder::new(&code), harvester, spec, trials, Exec::default())?;
        rows.push(TradeoffPoint::new(control, &eval, spec));
    }
    Ok(rows)
}

pub const TRADEOFF_HEADER: [&str; 7] = ["control", "ser", "ci", "pd_uw", "snr_db", "trials", "seed"];

/// Writes sweep rows as CSV with the standard header.
pub fn write_tradeoff_csv<W: Write>(out: W, rows: &[TradeoffPoint]) -> Result<()> {
    let mut w = csv::WriterBuilder::new()
        .terminator(csv::Terminator::Any(b'\n'))
        .from_writer(out);
    for row in rows {
        w.serialize(row)?;
    }
    if rows.is_empty() {
        w.write_record(TRADEOFF_HEADER)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads sweep rows; lines starting with `#` are skipped.
pub fn read_tradeoff_csv<R: std::io::Read>(input: R) -> Result<Vec<TradeoffPoint>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(input);
    let rows = r.deserialize().collect::<std::result::Result<Vec<TradeoffPoint>, _>>()?;
    Ok(rows)
}

/// Gaussian tail probability `Q(x)`.
pub fn q_func(x: f64) -> f64 {
    0.5 * erfc(x / std::f64::consts::SQRT_2)
}

/// Exact SER of square `M`-QAM under minimum-distance decoding.
pub fn qam_ser(m: usize, snr: f64) -> Result<f64> {
    let k = square_side(m)?;
    let p = 2.0 * (1.0 - 1.0 / k as f64) * q_func((3.0 * snr / (m as f64 - 1.0)).sqrt());
    Ok(1.0 - (1.0 - p) * (1.0 - p))
}

/// Exact SER of antipodal signalling `{±√P_a}`.
pub fn antipodal_ser(snr: f64) -> f64 {
    q_func((2.0 * snr).sqrt())
}

fn square_side(m: usize) -> Result<usize> {
    match m {
        4 => Ok(2),
        16 => Ok(4),
        64 => Ok(8),
        _ => Err(Error::domain(format!("square QAM supports M in {{4, 16, 64}}, got {m}"))),
    }
}

/// Square QAM scaled to average power `p_a`, indexed row by row from the
/// most negative corner.
pub fn qam_reference(m: usize, p_a: f64) -> Result<Constellation> {
    let k = square_side(m)?;
    if !(p_a > 0.0 && p_a.is_finite()) {
        return Err(Error::domain(format!("average power must be positive, got {p_a}")));
    }
    let a = (3.0 * p_a / (2.0 * (m as f64 - 1.0))).sqrt();
    let level = |i: usize| (2.0 * i as f64 - (k as f64 - 1.0)) * a;
    let points = (0..k)
        .flat_map(|q| (0..k).map(move |i| (i, q)))
        .map(|(i, q)| Complex64::new(level(i), level(q)))
        .collect();
    Constellation::new(points, p_a, Rho::Value(0.0), Default::default())
}
