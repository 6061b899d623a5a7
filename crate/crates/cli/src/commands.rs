//! Subcommand bodies. Each resolves its options (flags over config over
//! defaults), hashes the resolved set for provenance and writes its outputs.

use std::fs::File;
use std::path::{Path, PathBuf};

use serde_json::Value;

use swipt::channel::{
    evaluate, rp_sweep, write_tradeoff_csv, ChannelSpec, Decoder, MlDecoder, TradeoffPoint,
};
use swipt::codebook::{build_info_codebook, onoff_block_code, swipt_codebook, Codebook, GreedyConfig, OnOffBlockCode};
use swipt::constellation::{layout_info, swipt_transform, Constellation};
use swipt::eh::{self, optimal_pon, synth_dataset, EhModel, FitHyper, HarvesterModel, PowerDataset};
use swipt::nn::{
    encode_all, extract_design, simulate_system, write_trace_csv, AeSystem, Topology, TrainConfig, TrainError,
};
use swipt::par::Exec;
use swipt::CodeMatrix;

use crate::opts::{message_count, need, parse_grid, parse_list, snr, DesignOpts, FitEhOpts, SimulateOpts, SweepOpts, TrainOpts};
use crate::output::{csv_with_provenance, emit, json_with_provenance, Provenance};
use crate::CliError;

const DEFAULT_SNR: f64 = 50.0;
const DEFAULT_TRIALS: usize = 100_000;
const DEFAULT_SEED: u64 = 1;
const PON_GRID: usize = 10_000;

/// Prints to stdout when stdout is free, otherwise to stderr.
fn note(stdout_free: bool, msg: &str) {
    if stdout_free {
        println!("{msg}");
    } else {
        eprintln!("{msg}");
    }
}

fn read_text(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::usage(format!("cannot read {}: {e}", path.display())))
}

/// Reads a JSON object written by this tool, dropping its provenance.
fn read_json(path: &Path) -> Result<serde_json::Map<String, Value>, CliError> {
    let value: Value = serde_json::from_str(&read_text(path)?)
        .map_err(|e| CliError::usage(format!("{} is not valid JSON: {e}", path.display())))?;
    let Value::Object(mut map) = value else {
        return Err(CliError::usage(format!("{} does not hold a JSON object", path.display())));
    };
    map.remove("provenance");
    Ok(map)
}

fn bad_file(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::usage(format!("{}: {e}", path.display()))
}

/// `canonical`, `linear`, or a file holding a fitted model (or any
/// serialized harvester choice).
fn harvester(spec: &str) -> Result<HarvesterModel, CliError> {
    match spec {
        "canonical" => Ok(HarvesterModel::Canonical),
        "linear" => Ok(HarvesterModel::Linear),
        path => {
            let path = Path::new(path);
            let map = read_json(path)?;
            if map.contains_key("kind") {
                serde_json::from_value(Value::Object(map)).map_err(|e| bad_file(path, e))
            } else {
                let model: EhModel = serde_json::from_value(Value::Object(map)).map_err(|e| bad_file(path, e))?;
                model.validate().map_err(|e| bad_file(path, e))?;
                Ok(HarvesterModel::Learned(model))
            }
        }
    }
}

fn json_out(text: &str, prov: &Provenance, path: Option<&Path>) -> Result<(), CliError> {
    emit(path, json_with_provenance(text, prov)?.as_bytes())
}

fn csv_out(rows: &[TradeoffPoint], prov: &Provenance, path: Option<&Path>) -> Result<(), CliError> {
    let mut body = Vec::new();
    write_tradeoff_csv(&mut body, rows)?;
    emit(path, &csv_with_provenance(&body, prov))
}

pub fn fit_eh(mut o: FitEhOpts, file_seed: Option<u64>) -> Result<(), CliError> {
    let defaults = FitHyper::default();
    let seed = *o.seed.get_or_insert(file_seed.unwrap_or(defaults.seed));
    let hyper = FitHyper {
        learning_rate: *o.lr.get_or_insert(defaults.learning_rate),
        epochs: *o.epochs.get_or_insert(defaults.epochs),
        seed,
        ..defaults
    };
    let data = match (&o.data, o.synthetic.unwrap_or(false)) {
        (Some(_), true) => return Err(CliError::usage("give either --data or --synthetic, not both")),
        (Some(path), false) => {
            let file = File::open(path).map_err(|e| bad_file(path, e))?;
            PowerDataset::read_csv(file).map_err(|e| bad_file(path, e))?
        }
        (None, true) => {
            let points = *o.points.get_or_insert(2000);
            let p_max = *o.p_max.get_or_insert(1000.0);
            let noise = *o.noise.get_or_insert(0.0);
            synth_dataset(points, p_max, noise, seed)?
        }
        (None, false) => return Err(CliError::usage("missing required option --data (or --synthetic)")),
    };
    let prov = Provenance::new("fit-eh", &o, seed);
    let report = eh::fit_eh(&data, &hyper)?;

    let mut model = report.model.clone();
    model.rmse = Some(report.rmse);
    let model_json = serde_json::to_string(&model).expect("model serializes");
    json_out(&model_json, &prov, o.output.as_deref())?;

    let max_out = data.pairs().iter().map(|p| p.1).fold(0.0, f64::max);
    let summary = serde_json::json!({
        "points": data.len(),
        "epochs": report.epochs,
        "final_loss": report.final_loss,
        "rmse_uw": report.rmse,
        "max_output_uw": max_out,
        "rmse_rel_max_output": if max_out > 0.0 { report.rmse / max_out } else { f64::NAN },
    });
    let summary = json_with_provenance(&summary.to_string(), &prov)?;
    match (&o.report, &o.output) {
        (Some(path), _) => emit(Some(path), summary.as_bytes()),
        (None, Some(_)) => emit(None, summary.as_bytes()),
        (None, None) => {
            eprint!("{summary}");
            Ok(())
        }
    }
}

pub fn design(mut o: DesignOpts, file_seed: Option<u64>) -> Result<(), CliError> {
    let m = message_count(o.m, o.k)?;
    let n = *o.n.get_or_insert(1);
    let pa = need(&o.pa, "pa")?;
    let rho = *o.rho.get_or_insert(0.0);
    let h = harvester(o.eh.get_or_insert_with(|| "canonical".into()))?;
    let p_star = match o.p_star {
        Some(p) => p,
        None => *o.p_star.insert(optimal_pon(pa, &h, PON_GRID)?),
    };
    let kind = o
        .kind
        .get_or_insert_with(|| if n == 1 { "constellation" } else { "codebook" }.into())
        .clone();
    let seed = *o.seed.get_or_insert(file_seed.unwrap_or(DEFAULT_SEED));
    let to_stdout = o.output.is_some();

    let json = match kind.as_str() {
        "constellation" => {
            if n != 1 {
                return Err(CliError::usage("constellations have n = 1; use --kind codebook"));
            }
            let c = swipt_transform(&layout_info(m, pa)?, rho, p_star)?;
            let meta = c.meta();
            let fmt = |v: Option<f64>| v.map_or("none".into(), |v| format!("{v:.6}"));
            note(
                to_stdout,
                &format!(
                    "C = {}, t = {}, M_on = {}, p_star = {p_star:.6}",
                    meta.c.map_or("none".into(), |c| c.to_string()),
                    fmt(meta.t),
                    meta.m_on.map_or("none".into(), |v| v.to_string()),
                ),
            );
            c.to_json()?
        }
        "codebook" => {
            let cfg = greedy_config(&mut o.dmin_init, &mut o.epsilon, &mut o.max_rounds, &mut o.candidate_cap, seed);
            let base = build_info_codebook(m, n, pa, &cfg)?;
            let cb = if rho > 0.0 { swipt_codebook(&base, rho, p_star)? } else { base };
            let m_on = swipt::codebook::codebook_m_on(m, n, p_star)?;
            note(
                to_stdout,
                &format!(
                    "dmin_sq = {:.6}, M_on^c = {m_on}, p_star = {p_star:.6}, converged = {}",
                    cb.achieved_dmin_sq(),
                    cb.converged()
                ),
            );
            if !cb.converged() {
                eprintln!("warning: greedy search hit max_rounds before the bracket closed");
            }
            cb.to_json()?
        }
        "onoff-block" => {
            let code = onoff_block_code(n, pa, p_star, m)?;
            note(
                to_stdout,
                &format!("N_on = {}, r_on = {:.6}, p_star = {p_star:.6}", code.n_on, code.r_on),
            );
            serde_json::to_string(&code).expect("code serializes")
        }
        other => {
            return Err(CliError::usage(format!(
                "unknown --kind '{other}' (expected constellation, codebook or onoff-block)"
            )))
        }
    };
    let prov = Provenance::new("design", &o, seed);
    json_out(&json, &prov, o.output.as_deref())
}

fn greedy_config(
    dmin_init: &mut Option<f64>,
    epsilon: &mut Option<f64>,
    max_rounds: &mut Option<usize>,
    candidate_cap: &mut Option<usize>,
    seed: u64,
) -> GreedyConfig {
    let d = GreedyConfig::default();
    GreedyConfig {
        dmin_init: *dmin_init,
        epsilon: *epsilon,
        max_rounds: *max_rounds.get_or_insert(d.max_rounds),
        candidate_cap: *candidate_cap.get_or_insert(d.candidate_cap),
        seed,
    }
}

pub fn train(mut o: TrainOpts, file_seed: Option<u64>) -> Result<(), CliError> {
    let d = TrainConfig::default();
    let kind = o.topology.get_or_insert_with(|| "p2p".into()).clone();
    let m = need(&o.m, "m")?;
    let pa = need(&o.pa, "pa")?;
    // Broadcast defaults to a strong and a weak receiver.
    let (snr1_default, snr2_default) = if kind == "bc" { (100.0, 50.0) } else { (DEFAULT_SNR, DEFAULT_SNR) };
    let snr1 = *o.snr.get_or_insert(snr1_default);
    let topology = match kind.as_str() {
        "p2p" => Topology::p2p(m, snr1, pa)?,
        "bc" | "mac" | "ic" => {
            let m2 = *o.m2.get_or_insert(m);
            let snr2 = *o.snr2.get_or_insert(snr2_default);
            match kind.as_str() {
                "bc" => Topology::bc(m, m2, snr1, snr2, pa)?,
                "mac" => Topology::mac(m, m2, snr1, pa)?,
                _ => Topology::ic(m, m2, snr1, snr2, *o.gain.get_or_insert(0.5), pa)?,
            }
        }
        other => {
            return Err(CliError::usage(format!(
                "unknown --topology '{other}' (expected p2p, bc, mac or ic)"
            )))
        }
    };
    let hidden = parse_list(o.hidden.get_or_insert_with(|| {
        d.hidden.iter().map(|w| w.to_string()).collect::<Vec<_>>().join(",")
    }))?;
    let config = TrainConfig {
        lambda: *o.lambda.get_or_insert(d.lambda),
        n: *o.n.get_or_insert(d.n),
        learning_rate: *o.lr.get_or_insert(d.learning_rate),
        batch_size: *o.batch.get_or_insert(d.batch_size),
        iterations: *o.iterations.get_or_insert(d.iterations),
        seed: *o.seed.get_or_insert(file_seed.unwrap_or(d.seed)),
        pd_floor: *o.pd_floor.get_or_insert(d.pd_floor),
        hidden,
    };
    let h = harvester(o.eh.get_or_insert_with(|| "canonical".into()))?;
    let prov = Provenance::new("train", &o, config.seed);
    let initial = AeSystem::new(topology, config.clone(), h)?;

    let write_trace = |rows: &[swipt::nn::TraceRow]| -> Result<(), CliError> {
        if let Some(path) = &o.trace {
            let mut body = Vec::new();
            write_trace_csv(&mut body, rows)?;
            emit(Some(path), &csv_with_provenance(&body, &prov))?;
        }
        Ok(())
    };
    let trained = match swipt::nn::train(&initial, &config) {
        Ok(t) => t,
        Err(TrainError::Diverged(d)) => {
            write_trace(&d.trace)?;
            return Err(CliError::numeric(format!("training diverged at iteration {}", d.iteration)));
        }
        Err(TrainError::Invalid(e)) => return Err(e.into()),
    };
    write_trace(&trained.trace)?;
    let sys = trained.system;
    json_out(&sys.to_json()?, &prov, o.output.as_deref())?;
    if let Some(path) = &o.extract {
        let designs = extract_design(&sys)?;
        let many = designs.len() > 1;
        for (t, design) in designs.iter().enumerate() {
            let target = if many { numbered(path, t + 1) } else { path.clone() };
            json_out(&design.to_json()?, &prov, Some(&target))?;
        }
    }
    if let Some(loss) = sys.final_loss {
        note(o.output.is_some(), &format!("final loss = {loss:.6}"));
    }
    Ok(())
}

/// `dir/name.ext` to `dir/name.txK.ext`.
fn numbered(path: &Path, k: usize) -> PathBuf {
    let stem = path.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    let name = match path.extension() {
        Some(ext) => format!("{stem}.tx{k}.{}", ext.to_string_lossy()),
        None => format!("{stem}.tx{k}"),
    };
    path.with_file_name(name)
}

fn load_system(path: &Path) -> Result<AeSystem, CliError> {
    let map = read_json(path)?;
    AeSystem::from_json(&Value::Object(map).to_string()).map_err(|e| bad_file(path, e))
}

pub fn sweep(mut o: SweepOpts, file_seed: Option<u64>) -> Result<(), CliError> {
    let seed = *o.seed.get_or_insert(file_seed.unwrap_or(DEFAULT_SEED));
    let trials = *o.trials.get_or_insert(DEFAULT_TRIALS);
    let designer = o.designer.get_or_insert_with(|| "algorithmic".into()).clone();
    let rows = match designer.as_str() {
        "algorithmic" => sweep_algorithmic(&mut o, seed, trials)?,
        "learned" => sweep_learned(&mut o, seed, trials)?,
        other => {
            return Err(CliError::usage(format!(
                "unknown --designer '{other}' (expected algorithmic or learned)"
            )))
        }
    };
    let prov = Provenance::new("sweep", &o, seed);
    csv_out(&rows, &prov, o.output.as_deref())
}

fn sweep_algorithmic(o: &mut SweepOpts, seed: u64, trials: usize) -> Result<Vec<TradeoffPoint>, CliError> {
    let grid = parse_grid(o.rho_grid.get_or_insert_with(|| "0:1:11".into()))?;
    if grid.iter().any(|r| !(0.0..=1.0).contains(r)) {
        return Err(CliError::usage("rho values must lie in [0, 1]"));
    }
    let m = message_count(o.m, o.k)?;
    let n = *o.n.get_or_insert(1);
    let pa = need(&o.pa, "pa")?;
    let snr = snr(o.snr, o.snr_db, DEFAULT_SNR)?;
    let h = harvester(o.eh.get_or_insert_with(|| "canonical".into()))?;
    let p_star = match o.p_star {
        Some(p) => p,
        None => *o.p_star.insert(optimal_pon(pa, &h, PON_GRID)?),
    };
    let spec = ChannelSpec::new(snr, pa, seed)?;
    let rows = if n == 1 {
        let base = layout_info(m, pa)?;
        rp_sweep(|rho| Ok(swipt_transform(&base, rho, p_star)?.to_code()), &grid, &spec, &h, trials)?
    } else {
        let cfg = greedy_config(&mut None, &mut None, &mut o.max_rounds, &mut o.candidate_cap, seed);
        let base = build_info_codebook(m, n, pa, &cfg)?;
        rp_sweep(
            |rho| {
                if rho > 0.0 {
                    Ok(swipt_codebook(&base, rho, p_star)?.to_code())
                } else {
                    Ok(base.to_code())
                }
            },
            &grid,
            &spec,
            &h,
            trials,
        )?
    };
    Ok(rows)
}

fn sweep_learned(o: &mut SweepOpts, seed: u64, trials: usize) -> Result<Vec<TradeoffPoint>, CliError> {
    let list = need(&o.systems, "systems")?;
    let paths: Vec<&str> = list.split(',').map(str::trim).filter(|s| !s.is_empty()).collect();
    if paths.is_empty() {
        return Err(CliError::usage("--systems lists no files"));
    }
    let h_override = o.eh.as_deref().map(harvester).transpose()?;
    let mut rows = Vec::new();
    for path in paths {
        let path = Path::new(path);
        let sys = load_system(path)?;
        if sys.topology.transmitters() != 1 || sys.topology.users() != 1 {
            return Err(bad_file(path, "learned sweeps take point-to-point systems"));
        }
        let code = encode_all(&sys, 0)?;
        let decoder = sys.decoder_for(0, 0)?;
        let snr = snr(o.snr, o.snr_db, sys.topology.snr[0])?;
        let spec = ChannelSpec::new(snr, sys.topology.p_a[0], seed)?;
        let h = h_override.as_ref().unwrap_or(&sys.harvester);
        let eval = evaluate(&code, &decoder, h, &spec, trials, Exec::default())?;
        rows.push(TradeoffPoint::new(sys.config.lambda, &eval, &spec));
    }
    rows.sort_by(|a, b| a.control.total_cmp(&b.control));
    Ok(rows)
}

pub fn simulate(mut o: SimulateOpts, file_seed: Option<u64>) -> Result<(), CliError> {
    let seed = *o.seed.get_or_insert(file_seed.unwrap_or(DEFAULT_SEED));
    let trials = *o.trials.get_or_insert(DEFAULT_TRIALS);
    let rows = match (o.design.clone(), o.system.clone()) {
        (Some(_), Some(_)) => return Err(CliError::usage("give either --design or --system, not both")),
        (None, None) => return Err(CliError::usage("missing required option --design (or --system)")),
        (Some(path), None) => simulate_design(&mut o, &path, seed, trials)?,
        (None, Some(path)) => simulate_trained(&o, &path, seed, trials)?,
    };
    let prov = Provenance::new("simulate", &o, seed);
    csv_out(&rows, &prov, o.output.as_deref())
}

fn simulate_design(o: &mut SimulateOpts, path: &Path, seed: u64, trials: usize) -> Result<Vec<TradeoffPoint>, CliError> {
    let map = read_json(path)?;
    let text = Value::Object(map.clone()).to_string();
    let snr = snr(o.snr, o.snr_db, DEFAULT_SNR)?;
    let h = harvester(o.eh.get_or_insert_with(|| "canonical".into()))?;
    let run = |code: &CodeMatrix, decoder: &dyn Decoder, p_a: f64, control: f64| -> Result<TradeoffPoint, CliError> {
        let spec = ChannelSpec::new(snr, p_a, seed)?;
        let eval = evaluate(code, decoder, &h, &spec, trials, Exec::default())?;
        Ok(TradeoffPoint::new(control, &eval, &spec))
    };
    let row = if map.contains_key("supports") {
        let block: OnOffBlockCode = serde_json::from_str(&text).map_err(|e| bad_file(path, e))?;
        if block.supports.is_empty() || block.supports.iter().any(|s| s.count_ones() as usize != block.n_on) {
            return Err(bad_file(path, "support sets do not match n_on"));
        }
        run(&block.to_code(), &block, block.p_a, f64::NAN)?
    } else if map.contains_key("codewords") {
        let cb = Codebook::from_json(&text).map_err(|e| bad_file(path, e))?;
        let code = cb.to_code();
        run(&code, &MlDecoder::new(&code), cb.p_a(), cb.rho().value().unwrap_or(f64::NAN))?
    } else if map.contains_key("points") {
        let c = Constellation::from_json(&text).map_err(|e| bad_file(path, e))?;
        let code = c.to_code();
        run(&code, &MlDecoder::new(&code), c.p_a(), c.rho().value().unwrap_or(f64::NAN))?
    } else {
        return Err(bad_file(path, "not a constellation, codebook or block code"));
    };
    Ok(vec![row])
}

/// One row per user, each reporting the power at the receiver that
/// decodes that user.
fn simulate_trained(o: &SimulateOpts, path: &Path, seed: u64, trials: usize) -> Result<Vec<TradeoffPoint>, CliError> {
    if o.snr.is_some() || o.snr_db.is_some() || o.eh.is_some() {
        return Err(CliError::usage("--snr and --eh come from the system file when simulating --system"));
    }
    let sys = load_system(path)?;
    let eval = simulate_system(&sys, trials, seed, Exec::default())?;
    let topo = &sys.topology;
    let mut rows = Vec::new();
    for (u, ser) in eval.ser.iter().enumerate() {
        let r = (0..topo.receivers())
            .find(|&r| topo.decoded_users(r).contains(&u))
            .expect("every user has a receiver");
        rows.push(TradeoffPoint {
            control: sys.config.lambda,
            ser: ser.ser,
            ci_halfwidth: ser.ci,
            pd_uw: eval.pd_uw[r],
            snr_db: 10.0 * topo.snr[r].log10(),
            trials: ser.trials,
            seed,
        });
    }
    Ok(rows)
}
