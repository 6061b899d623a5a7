//! Subcommand options. Each struct is both a clap argument group and a
//! config-file section; flags given on the command line win over the file.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::CliError;

/// Declares an options struct whose fields are all optional, parse from
/// `--kebab-case` flags and from `snake_case` keys of a config section, and
/// can be merged with a lower-priority copy.
macro_rules! options {
    ($(#[$meta:meta])* $name:ident { $($(#[$fmeta:meta])* $field:ident: $ty:ty,)* }) => {
        $(#[$meta])*
        #[derive(clap::Args, Serialize, Deserialize, Debug, Clone, Default, PartialEq)]
        #[serde(default, deny_unknown_fields)]
        pub struct $name {
            $($(#[$fmeta])* #[arg(long)] pub $field: Option<$ty>,)*
        }

        impl $name {
            /// Fills unset fields from `base`.
            pub fn merge(self, base: Self) -> Self {
                Self { $($field: self.$field.or(base.$field),)* }
            }
        }
    };
}

options!(FitEhOpts {
    /// CSV with header `p_in_uw,p_out_uw`.
    data: PathBuf,
    /// Fit a generated dataset from the canonical curve instead of a file.
    #[arg(num_args = 0..=1, default_missing_value = "true")]
    synthetic: bool,
    points: usize,
    /// Largest input power of the generated dataset, µW.
    p_max: f64,
    /// Relative standard deviation of multiplicative noise on generated outputs.
    noise: f64,
    epochs: usize,
    lr: f64,
    seed: u64,
    #[arg(short = 'o')]
    #[serde(skip_serializing)]
    output: PathBuf,
    /// Where to write the fit report; stdout when absent.
    #[serde(skip_serializing)]
    report: PathBuf,
});

options!(DesignOpts {
    /// constellation, codebook or onoff-block; inferred from `n` when absent.
    kind: String,
    m: usize,
    /// Alternative to `m`: bits per message, M = 2^k.
    k: u32,
    n: usize,
    pa: f64,
    rho: f64,
    /// Harvester: `canonical`, `linear`, or a fitted model file.
    eh: String,
    /// On probability; computed from the harvester when absent.
    p_star: f64,
    seed: u64,
    dmin_init: f64,
    epsilon: f64,
    max_rounds: usize,
    candidate_cap: usize,
    #[arg(short = 'o')]
    #[serde(skip_serializing)]
    output: PathBuf,
});

options!(TrainOpts {
    /// p2p, bc, mac or ic.
    topology: String,
    m: usize,
    m2: usize,
    snr: f64,
    snr2: f64,
    /// Cross-link gain of the interference channel.
    gain: f64,
    pa: f64,
    lambda: f64,
    n: usize,
    lr: f64,
    batch: usize,
    iterations: usize,
    pd_floor: f64,
    /// Comma-separated hidden layer widths.
    hidden: String,
    seed: u64,
    eh: String,
    #[arg(short = 'o')]
    #[serde(skip_serializing)]
    output: PathBuf,
    #[serde(skip_serializing)]
    trace: PathBuf,
    /// Also write the learned design(s) here.
    #[serde(skip_serializing)]
    extract: PathBuf,
});

options!(SweepOpts {
    /// algorithmic or learned.
    designer: String,
    m: usize,
    k: u32,
    n: usize,
    pa: f64,
    snr: f64,
    snr_db: f64,
    /// `start:stop:count` or a comma list.
    rho_grid: String,
    /// Comma-separated trained-system files, one per control value.
    systems: String,
    trials: usize,
    seed: u64,
    eh: String,
    p_star: f64,
    max_rounds: usize,
    candidate_cap: usize,
    #[arg(short = 'o')]
    #[serde(skip_serializing)]
    output: PathBuf,
});

options!(SimulateOpts {
    /// Constellation, codebook or On-Off block code file.
    design: PathBuf,
    /// Trained-system file, evaluated with its own decoders.
    system: PathBuf,
    snr: f64,
    snr_db: f64,
    trials: usize,
    seed: u64,
    eh: String,
    #[arg(short = 'o')]
    #[serde(skip_serializing)]
    output: PathBuf,
});

/// Top-level config file: one optional section per subcommand, plus a
/// `seed` used by any section that does not set its own.
#[derive(Deserialize, Debug, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub seed: Option<u64>,
    pub fit_eh: FitEhOpts,
    pub design: DesignOpts,
    pub train: TrainOpts,
    pub sweep: SweepOpts,
    pub simulate: SimulateOpts,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
        toml::from_str(&text).map_err(|e| CliError::usage(format!("invalid config {}: {e}", path.display())))
    }
}

/// Required option lookup with a usage error naming the flag.
pub fn need<T: Clone>(value: &Option<T>, flag: &str) -> Result<T, CliError> {
    value.clone().ok_or_else(|| CliError::usage(format!("missing required option --{flag}")))
}

/// Parses `start:stop:count` (inclusive, evenly spaced) or `a,b,c`.
pub fn parse_grid(text: &str) -> Result<Vec<f64>, CliError> {
    let bad = || CliError::usage(format!("invalid grid '{text}'"));
    let text = text.trim();
    let grid: Vec<f64> = if text.contains(':') {
        let parts: Vec<&str> = text.split(':').collect();
        let [start, stop, count] = parts[..] else { return Err(bad()) };
        let start: f64 = start.trim().parse().map_err(|_| bad())?;
        let stop: f64 = stop.trim().parse().map_err(|_| bad())?;
        let count: usize = count.trim().parse().map_err(|_| bad())?;
        match count {
            0 => Vec::new(),
            1 => vec![start],
            _ => (0..count)
                .map(|i| start + (stop - start) * i as f64 / (count - 1) as f64)
                .collect(),
        }
    } else if text.is_empty() {
        Vec::new()
    } else {
        text.split(',')
            .map(|s| s.trim().parse::<f64>().map_err(|_| bad()))
            .collect::<Result<_, _>>()?
    };
    if grid.is_empty() {
        return Err(CliError::usage("grid is empty"));
    }
    if grid.iter().any(|v| !v.is_finite()) {
        return Err(bad());
    }
    Ok(grid)
}

pub fn parse_list(text: &str) -> Result<Vec<usize>, CliError> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse()
                .map_err(|_| CliError::usage(format!("invalid list '{text}'")))
        })
        .collect()
}

/// Message count from `--m` or `--k`.
pub fn message_count(m: Option<usize>, k: Option<u32>) -> Result<usize, CliError> {
    match (m, k) {
        (Some(_), Some(_)) => Err(CliError::usage("give either --m or --k, not both")),
        (Some(m), None) => Ok(m),
        (None, Some(k)) if k < 32 => Ok(1usize << k),
        (None, Some(k)) => Err(CliError::usage(format!("--k {k} is too large"))),
        (None, None) => Err(CliError::usage("missing required option --m (or --k)")),
    }
}

/// Linear SNR from `--snr` or `--snr-db`.
pub fn snr(linear: Option<f64>, db: Option<f64>, default: f64) -> Result<f64, CliError> {
    match (linear, db) {
        (Some(_), Some(_)) => Err(CliError::usage("give either --snr or --snr-db, not both")),
        (Some(s), None) => Ok(s),
        (None, Some(d)) => Ok(10f64.powf(d / 10.0)),
        (None, None) => Ok(default),
    }
}
