//! Coded modulation over `n` channel uses.
//!
//! [`build_info_codebook`] draws codewords from the `n`-permutations of an
//! `Mn`-point concentric-circle constellation with a greedy
//! minimum-distance search; [`swipt_codebook`] deforms the result toward
//! On-Off signalling; [`onoff_block_code`] is the position code where each
//! block carries a fixed number of equal-amplitude nonzero symbols.

use std::collections::{HashMap, HashSet};

use num_complex::Complex64;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::constellation::{layout_info, m_on_count, perturb, select_on_points};
use crate::design::{dist_sq, CodeMatrix, Rho};
use crate::par::{self, Exec};
use crate::rng::{streams, substream};
use crate::{Error, Result};

/// Relative slack on the distance threshold so that exactly-tight pairs
/// (distance equal to the threshold up to rounding) are kept.
const THRESHOLD_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GreedyConfig {
    /// Initial squared-distance target; `t²` of the `Mn`-point layout when
    /// unset.
    pub dmin_init: Option<f64>,
    /// Adjustment step for the target; `0.05·t²` when unset.
    pub epsilon: Option<f64>,
    pub max_rounds: usize,
    /// Largest candidate set enumerated; bigger permutation spaces are
    /// sampled.
    pub candidate_cap: usize,
    pub seed: u64,
}

impl Default for GreedyConfig {
    fn default() -> Self {
        Self {
            dmin_init: None,
            epsilon: None,
            max_rounds: 200,
            candidate_cap: 1_000_000,
            seed: 1,
        }
    }
}

/// `M` codewords of `n` symbols, each an index into `base_points`.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    m: usize,
    n: usize,
    p_a: f64,
    rho: Rho,
    base_points: Vec<Complex64>,
    codewords: Vec<Vec<usize>>,
    achieved_dmin_sq: f64,
    /// False when the distance search ran out of rounds.
    converged: bool,
}

impl Codebook {
    pub fn new(
        base_points: Vec<Complex64>,
        codewords: Vec<Vec<usize>>,
        p_a: f64,
        rho: Rho,
    ) -> Result<Self> {
        let m = codewords.len();
        let n = codewords.first().map_or(0, Vec::len);
        if m == 0 || n == 0 {
            return Err(Error::domain("codebook needs at least one nonempty codeword"));
        }
        if codewords.iter().any(|c| c.len() != n) {
            return Err(Error::domain("codewords must share one length"));
        }
        if codewords.iter().flatten().any(|&i| i >= base_points.len()) {
            return Err(Error::domain("codeword references a missing base point"));
        }
        let mut cb = Self {
            m,
            n,
            p_a,
            rho,
            base_points,
            codewords,
            achieved_dmin_sq: f64::INFINITY,
            converged: true,
        };
        cb.achieved_dmin_sq = if m >= 2 {
            codebook_min_dist(&cb)?
        } else {
            f64::INFINITY
        };
        Ok(cb)
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn p_a(&self) -> f64 {
        self.p_a
    }

    pub fn rho(&self) -> Rho {
        self.rho
    }

    pub fn base_points(&self) -> &[Complex64] {
        &self.base_points
    }

    pub fn codeword_indices(&self) -> &[Vec<usize>] {
        &self.codewords
    }

    /// Smallest pairwise squared codeword distance; `+∞` for one codeword.
    pub fn achieved_dmin_sq(&self) -> f64 {
        self.achieved_dmin_sq
    }

    pub fn converged(&self) -> bool {
        self.converged
    }

    pub fn codeword(&self, s: usize) -> Vec<Complex64> {
        self.codewords[s].iter().map(|&i| self.base_points[i]).collect()
    }

    pub fn to_code(&self) -> CodeMatrix {
        let symbols = self
            .codewords
            .iter()
            .flat_map(|c| c.iter().map(|&i| self.base_points[i]))
            .collect();
        CodeMatrix::new(self.m, self.n, symbols)
    }

    pub fn average_power(&self) -> f64 {
        self.to_code().average_power()
    }

    pub fn to_json(&self) -> Result<String> {
        let file = CodebookFile {
            m: self.m,
            n: self.n,
            p_a_uw: self.p_a,
            rho: self.rho,
            dmin_sq: self.achieved_dmin_sq.is_finite().then_some(self.achieved_dmin_sq),
            base_points: self.base_points.iter().map(|p| [p.re, p.im]).collect(),
            codewords: self
                .codewords
                .iter()
                .map(|c| CodewordEntry {
                    indices: c.clone(),
                    symbols: c.iter().map(|&i| [self.base_points[i].re, self.base_points[i].im]).collect(),
                })
                .collect(),
            converged: self.converged,
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: CodebookFile = serde_json::from_str(text)?;
        let base = f.base_points.iter().map(|&[re, im]| Complex64::new(re, im)).collect();
        let words = f.codewords.into_iter().map(|c| c.indices).collect();
        let mut cb = Codebook::new(base, words, f.p_a_uw, f.rho)?;
        if cb.m != f.m || cb.n != f.n {
            return Err(Error::domain("codebook file dimensions do not match its codewords"));
        }
        cb.converged = f.converged;
        Ok(cb)
    }
}

#[derive(Serialize, Deserialize)]
struct CodewordEntry {
    indices: Vec<usize>,
    symbols: Vec<[f64; 2]>,
}

#[derive(Serialize, Deserialize)]
struct CodebookFile {
    m: usize,
    n: usize,
    p_a_uw: f64,
    rho: Rho,
    /// `null` when the codebook holds a single codeword.
    dmin_sq: Option<f64>,
    base_points: Vec<[f64; 2]>,
    codewords: Vec<CodewordEntry>,
    #[serde(default = "yes")]
    converged: bool,
}

fn yes() -> bool {
    true
}

/// Exact minimum pairwise squared Euclidean distance between codewords.
pub fn codebook_min_dist(cb: &Codebook) -> Result<f64> {
    if cb.m < 2 {
        return Err(Error::domain("minimum distance needs at least two codewords"));
    }
    let words: Vec<Vec<Complex64>> = (0..cb.m).map(|s| cb.codeword(s)).collect();
    let mut best = f64::INFINITY;
    for i in 0..words.len() {
        for j in i + 1..words.len() {
            best = best.min(dist_sq(&words[i], &words[j]));
        }
    }
    Ok(best)
}

/// Candidate n-permutations stored flat, `n` base-point indices each.
struct Candidates {
    n: usize,
    idx: Vec<u16>,
}

impl Candidates {
    fn len(&self) -> usize {
        self.idx.len() / self.n
    }

    fn get(&self, c: u32) -> &[u16] {
        let c = c as usize;
        &self.idx[c * self.n..(c + 1) * self.n]
    }
}

/// `k!/(k−n)!`, saturating.
fn falling_factorial(k: usize, n: usize) -> u128 {
    (0..n).fold(1u128, |acc, i| acc.saturating_mul((k - i) as u128))
}

fn enumerate_permutations(k: usize, n: usize) -> Vec<u16> {
    let mut out = Vec::new();
    let mut cur = Vec::with_capacity(n);
    let mut used = vec![false; k];
    fn rec(k: usize, n: usize, cur: &mut Vec<u16>, used: &mut [bool], out: &mut Vec<u16>) {
        if cur.len() == n {
            out.extend_from_slice(cur);
            return;
        }
        for i in 0..k {
            if !used[i] {
                used[i] = true;
                cur.push(i as u16);
                rec(k, n, cur, used, out);
                cur.pop();
                used[i] = false;
            }
        }
    }
    rec(k, n, &mut cur, &mut used, &mut out);
    out
}

fn sample_permutations(k: usize, n: usize, count: usize, seed: u64) -> Vec<u16> {
    let mut rng = substream(seed, streams::CANDIDATES);
    let mut seen: HashSet<Vec<u16>> = HashSet::with_capacity(count);
    let mut out = Vec::with_capacity(count * n);
    let mut pool: Vec<u16> = (0..k as u16).collect();
    while seen.len() < count {
        // Partial Fisher-Yates: the first n slots become a uniform n-permutation.
        for i in 0..n {
            let j = rng.random_range(i..k);
            pool.swap(i, j);
        }
        let perm = pool[..n].to_vec();
        if seen.insert(perm.clone()) {
            out.extend_from_slice(&perm);
        }
    }
    out
}

struct Greedy<'a> {
    cands: &'a Candidates,
    /// Squared distances between base points, row-major.
    table: Vec<f64>,
    k: usize,
    exec: Exec,
}

impl Greedy<'_> {
    fn dist(&self, a: u32, b: u32) -> f64 {
        let (x, y) = (self.cands.get(a), self.cands.get(b));
        x.iter()
            .zip(y)
            .map(|(&i, &j)| self.table[i as usize * self.k + j as usize])
            .sum()
    }

    /// One greedy pass at threshold `dmin`, stopping after `limit` picks.
    fn pass(&self, first: u32, dmin: f64, limit: usize) -> Vec<u32> {
        let threshold = dmin * (1.0 - THRESHOLD_SLACK);
        let mut alive: Vec<u32> = (0..self.cands.len() as u32).collect();
        let mut picked = vec![first];
        let mut current = first;
        while picked.len() < limit {
            alive = par::filter(self.exec, &alive, |&c| {
                let d = self.dist(c, current);
                d > 0.0 && d >= threshold
            });
            match par::argmin_by_key(self.exec, &alive, |&c| self.dist(c, current)) {
                Some(pos) => {
                    current = alive[pos];
                    picked.push(current);
                }
                None => break,
            }
        }
        picked
    }
}

/// Builds an `M`-word information codebook of length `n` under average
/// power `p_a`, maximizing the minimum distance with a greedy search.
pub fn build_info_codebook(m: usize, n: usize, p_a: f64, cfg: &GreedyConfig) -> Result<Codebook> {
    build_info_codebook_with(m, n, p_a, cfg, Exec::default())
}

pub fn build_info_codebook_with(
    m: usize,
    n: usize,
    p_a: f64,
    cfg: &GreedyConfig,
    exec: Exec,
) -> Result<Codebook> {
    if m == 0 || n == 0 {
        return Err(Error::domain("M and n must be at least 1"));
    }
    if cfg.candidate_cap < m {
        return Err(Error::domain(format!(
            "candidate_cap {} is below the message count {m}",
            cfg.candidate_cap
        )));
    }
    if cfg.max_rounds == 0 {
        return Err(Error::domain("max_rounds must be positive"));
    }
    let k = m * n;
    if k > u16::MAX as usize {
        return Err(Error::domain(format!("Mn = {k} base points is too many")));
    }
    let layout = layout_info(k, p_a)?;
    let base = layout.points().to_vec();
    let t_sq = layout.meta().t.map_or(0.0, |t| t * t);

    let total = falling_factorial(k, n);
    let idx = if total <= cfg.candidate_cap as u128 {
        enumerate_permutations(k, n)
    } else {
        sample_permutations(k, n, cfg.candidate_cap, cfg.seed)
    };
    let cands = Candidates { n, idx };
    if cands.len() < m {
        return Err(Error::Construction(format!(
            "only {} candidate codewords for {m} messages",
            cands.len()
        )));
    }

    let mut rng = substream(cfg.seed, streams::INIT);
    let first = rng.random_range(0..cands.len() as u32);

    if m == 1 {
        let word: Vec<usize> = cands.get(first).iter().map(|&i| i as usize).collect();
        return finish(base, vec![word], p_a, true);
    }

    let mut table = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            table[i * k + j] = (base[i] - base[j]).norm_sqr();
        }
    }
    let greedy = Greedy {
        cands: &cands,
        table,
        k,
        exec,
    };

    let dmin_init = cfg.dmin_init.unwrap_or(t_sq).max(0.0);
    let (best, mut converged) = match cfg.epsilon {
        Some(eps) => {
            if !(eps > 0.0) {
                return Err(Error::domain("epsilon must be positive"));
            }
            step_search(&greedy, first, m, dmin_init, eps, cfg.max_rounds)
        }
        None => bracket_search(&greedy, first, m, dmin_init, 0.05 * t_sq, cfg.max_rounds),
    };
    let picked = match best {
        Some((_, p)) => p,
        None => {
            // Threshold zero keeps every distinct candidate, so this always
            // reaches M.
            converged = false;
            greedy.pass(first, 0.0, m)
        }
    };
    if picked.len() < m {
        return Err(Error::Construction(format!(
            "greedy search found only {} codewords for {m} messages",
            picked.len()
        )));
    }
    let words: Vec<Vec<usize>> = picked[..m]
        .iter()
        .map(|&c| cands.get(c).iter().map(|&i| i as usize).collect())
        .collect();
    finish(base, words, p_a, converged)
}

/// Fixed-step walk: raise the target by `eps` while a pass still yields
/// `m` codewords, lower it while it does not, and stop once the feasible
/// and infeasible targets are one step apart.
fn step_search(g: &Greedy, first: u32, m: usize, init: f64, eps: f64, rounds: usize) -> (Option<(f64, Vec<u32>)>, bool) {
    let tol = 1e-9 * eps;
    let mut dmin = init;
    let mut best: Option<(f64, Vec<u32>)> = None;
    let mut lowest_short: Option<f64> = None;
    for _ in 0..rounds {
        let picked = g.pass(first, dmin, m + 1);
        if picked.len() >= m {
            if best.as_ref().map_or(true, |(d, _)| dmin > *d) {
                best = Some((dmin, picked.clone()));
            }
            if picked.len() == m || lowest_short.is_some_and(|s| s <= dmin + eps + tol) {
                return (best, true);
            }
            dmin += eps;
        } else {
            lowest_short = Some(lowest_short.map_or(dmin, |s: f64| s.min(dmin)));
            if best.as_ref().is_some_and(|(d, _)| *d >= dmin - eps - tol) || dmin == 0.0 {
                let ok = best.is_some();
                return (best, ok);
            }
            dmin = (dmin - eps).max(0.0);
        }
    }
    (best, false)
}

/// Doubling steps until the target is bracketed, then bisection down to a
/// bracket of width `resolution`. Needs far fewer passes than a fixed step
/// when the final distance is many steps from the starting guess.
fn bracket_search(
    g: &Greedy,
    first: u32,
    m: usize,
    init: f64,
    resolution: f64,
    rounds: usize,
) -> (Option<(f64, Vec<u32>)>, bool) {
    let mut best: Option<(f64, Vec<u32>)> = None;
    let mut short: Option<f64> = None;
    let mut step = resolution.max(f64::MIN_POSITIVE);
    let mut dmin = init;
    for _ in 0..rounds {
        let picked = g.pass(first, dmin, m + 1);
        let feasible = picked.len() >= m;
        if feasible {
            if best.as_ref().map_or(true, |(d, _)| dmin > *d) {
                best = Some((dmin, picked.clone()));
            }
            if picked.len() == m {
                return (best, true);
            }
        } else {
            short = Some(short.map_or(dmin, |s: f64| s.min(dmin)));
            if dmin == 0.0 {
                break;
            }
        }
        let lo = best.as_ref().map(|(d, _)| *d);
        dmin = match (lo, short) {
            (Some(lo), Some(hi)) => {
                if hi - lo <= resolution {
                    return (best, true);
                }
                0.5 * (lo + hi)
            }
            (Some(lo), None) => {
                step *= 2.0;
                lo + step
            }
            (None, Some(hi)) => {
                step *= 2.0;
                (hi - step).max(0.0)
            }
            (None, None) => unreachable!("every pass is feasible or short"),
        };
    }
    (best, false)
}

/// Rescales so the codewords meet the average-power constraint with
/// equality, then records the achieved distance.
fn finish(mut base: Vec<Complex64>, words: Vec<Vec<usize>>, p_a: f64, converged: bool) -> Result<Codebook> {
    let slots = words.len() * words[0].len();
    let power: f64 = words.iter().flatten().map(|&i| base[i].norm_sqr()).sum::<f64>() / slots as f64;
    if power > 0.0 {
        let g = (p_a / power).sqrt();
        for p in &mut base {
            *p *= g;
        }
    }
    let mut cb = Codebook::new(base, words, p_a, Rho::Value(0.0))?;
    cb.converged = converged;
    Ok(cb)
}

/// Deforms an information codebook toward On-Off signalling.
///
/// The `Mn` codeword symbols are treated as one `Mn`-point constellation:
/// the `M_on^c` largest move onto a circle of radius `√(Mn·P_a/M_on^c)` and
/// the rest shrink. The returned codebook's base points are the `Mn`
/// symbol slots, codeword `s` position `i` referencing slot `s·n + i`.
pub fn swipt_codebook(cb: &Codebook, rho: f64, p_star: f64) -> Result<Codebook> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::domain(format!("rho must lie in [0, 1], got {rho}")));
    }
    if cb.rho != Rho::Value(0.0) {
        return Err(Error::domain("swipt_codebook expects an undeformed (rho = 0) codebook"));
    }
    let slots = cb.to_code().symbols().to_vec();
    let m_on = m_on_count(slots.len(), p_star)?;
    let on = select_on_points(&slots, m_on);
    let moved = perturb(&slots, cb.p_a, rho, &on);
    let words = (0..cb.m)
        .map(|s| (0..cb.n).map(|i| s * cb.n + i).collect())
        .collect();
    Codebook::new(moved, words, cb.p_a, Rho::Value(rho))
}

/// Number of On slots used by [`swipt_codebook`] for a codebook of
/// `m × n` symbols.
pub fn codebook_m_on(m: usize, n: usize, p_star: f64) -> Result<usize> {
    m_on_count(m * n, p_star)
}

/// Position code: each block of `n` symbols has `n_on` nonzero entries of
/// amplitude `r_on`, and the message is the support set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OnOffBlockCode {
    pub n: usize,
    pub n_on: usize,
    /// √µW.
    pub r_on: f64,
    pub p_a: f64,
    /// Support sets as bitmasks over positions `0..n`.
    pub supports: Vec<u64>,
    #[serde(skip)]
    lookup: HashMap<u64, usize>,
}

impl OnOffBlockCode {
    pub fn m(&self) -> usize {
        self.supports.len()
    }

    /// Support set of message `s` as sorted positions.
    pub fn support(&self, s: usize) -> Vec<usize> {
        (0..self.n).filter(|i| self.supports[s] >> i & 1 == 1).collect()
    }

    pub fn codeword(&self, s: usize) -> Vec<Complex64> {
        (0..self.n)
            .map(|i| {
                if self.supports[s] >> i & 1 == 1 {
                    Complex64::new(self.r_on, 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            })
            .collect()
    }

    pub fn to_code(&self) -> CodeMatrix {
        let rows: Vec<_> = (0..self.m()).map(|s| self.codeword(s)).collect();
        CodeMatrix::from_rows(&rows)
    }
}

pub fn binomial(n: usize, k: usize) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut acc: u128 = 1;
    for i in 0..k {
        acc = acc * (n - i) as u128 / (i + 1) as u128;
    }
    u64::try_from(acc).unwrap_or(u64::MAX)
}

/// Builds the On-Off position code for block length `n`.
pub fn onoff_block_code(n: usize, p_a: f64, p_star: f64, m_req: usize) -> Result<OnOffBlockCode> {
    if n == 0 || n > 63 {
        return Err(Error::domain(format!("block length must be in 1..=63, got {n}")));
    }
    if !(p_a > 0.0) {
        return Err(Error::domain("average power must be positive"));
    }
    if m_req == 0 {
        return Err(Error::domain("need at least one message"));
    }
    let n_on = m_on_count(n, p_star)?;
    let bound = binomial(n, n_on);
    if m_req as u64 > bound {
        return Err(Error::Capacity {
            requested: m_req as u64,
            bound,
        });
    }
    let r_on = (n as f64 * p_a / n_on as f64).sqrt();
    // Ascending bitmasks with n_on bits set enumerate subsets in colex order.
    let mut supports = Vec::with_capacity(m_req);
    let mut mask: u64 = (1u64 << n_on) - 1;
    while supports.len() < m_req {
        supports.push(mask);
        let c = mask & mask.wrapping_neg();
        let r = mask + c;
        mask = (((r ^ mask) >> 2) / c) | r;
    }
    let lookup = supports.iter().enumerate().map(|(i, &s)| (s, i)).collect();
    Ok(OnOffBlockCode {
        n,
        n_on,
        r_on,
        p_a,
        supports,
        lookup,
    })
}

/// Detects the positions of the nonzero symbols in `y`.
pub fn decode_onoff_block(y: &[Complex64], code: &OnOffBlockCode) -> usize {
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&a, &b| {
        y[b].norm_sqr()
            .partial_cmp(&y[a].norm_sqr())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mask = order[..code.n_on].iter().fold(0u64, |m, &i| m | 1 << i);
    let hit = if code.lookup.is_empty() {
        code.supports.iter().position(|&s| s == mask)
    } else {
        code.lookup.get(&mask).copied()
    };
    if let Some(s) = hit {
        return s;
    }
    let mut best = (f64::NEG_INFINITY, 0);
    for (s, &support) in code.supports.iter().enumerate() {
        let energy: f64 = (0..code.n)
            .filter(|i| support >> i & 1 == 1)
            .map(|i| y[i].norm_sqr())
            .sum();
        if energy > best.0 {
            best = (energy, s);
        }
    }
    best.1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::relative_error;
    use crate::eh::{canonical_model, Harvester, Linear};

    fn small_cfg(seed: u64) -> GreedyConfig {
        GreedyConfig {
            seed,
            ..GreedyConfig::default()
        }
    }

    #[test]
    fn two_point_code() {
        let cb = build_info_codebook(2, 1, 5.0, &small_cfg(1)).unwrap();
        assert_eq!(cb.m(), 2);
        let mut pts: Vec<f64> = (0..2).map(|s| cb.codeword(s)[0].norm()).collect();
        pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!(pts[0].abs() < 1e-12);
        assert!((pts[1] - 10f64.sqrt()).abs() < 1e-12);
        assert!((cb.achieved_dmin_sq() - 10.0).abs() < 1e-9);
        assert!((codebook_min_dist(&cb).unwrap() - 10.0).abs() < 1e-9);
    }

    #[test]
    fn single_codeword() {
        let cb = build_info_codebook(1, 3, 2.0, &small_cfg(4)).unwrap();
        assert_eq!(cb.m(), 1);
        assert!(cb.achieved_dmin_sq().is_infinite());
        assert!(codebook_min_dist(&cb).is_err());
        assert!(relative_error(cb.average_power(), 2.0) < 1e-9);
    }

    #[test]
    fn duplicate_codewords_have_zero_distance() {
        let base = vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)];
        let cb = Codebook::new(base, vec![vec![0, 1], vec![0, 1]], 1.0, Rho::Value(0.0)).unwrap();
        assert_eq!(codebook_min_dist(&cb).unwrap(), 0.0);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = build_info_codebook(16, 2, 5.0, &small_cfg(9)).unwrap();
        let b = build_info_codebook(16, 2, 5.0, &small_cfg(9)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn contract_for_rate_two_codes() {
        for &(m, n) in &[(4, 1), (16, 2)] {
            let cb = build_info_codebook(m, n, 5.0, &small_cfg(2)).unwrap();
            assert_eq!(cb.m(), m);
            assert!(relative_error(cb.average_power(), 5.0) < 1e-9);
            let d = codebook_min_dist(&cb).unwrap();
            assert!(d >= cb.achieved_dmin_sq());
            for w in cb.codeword_indices() {
                let set: HashSet<_> = w.iter().collect();
                assert_eq!(set.len(), n, "repeated base point in {w:?}");
            }
        }
    }

    #[test]
    fn sequential_and_parallel_agree() {
        let cfg = small_cfg(3);
        let a = build_info_codebook_with(16, 2, 5.0, &cfg, Exec::Sequential).unwrap();
        let b = build_info_codebook_with(16, 2, 5.0, &cfg, Exec::Parallel).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn sampled_candidates_are_distinct_permutations() {
        let s = sample_permutations(10, 3, 500, 4);
        let perms: HashSet<&[u16]> = s.chunks(3).collect();
        assert_eq!(perms.len(), 500);
        for p in s.chunks(3) {
            assert!(p[0] != p[1] && p[1] != p[2] && p[0] != p[2]);
        }
        assert_eq!(enumerate_permutations(4, 2).len() / 2, 12);
    }

    #[test]
    fn capped_candidate_set_too_small() {
        let cfg = GreedyConfig {
            candidate_cap: 3,
            ..GreedyConfig::default()
        };
        assert!(build_info_codebook(4, 1, 1.0, &cfg).is_err());
    }

    #[test]
    fn swipt_codebook_endpoints() {
        let cb = build_info_codebook(16, 2, 5.0, &small_cfg(5)).unwrap();
        let same = swipt_codebook(&cb, 0.0, 5.0 / 317.0).unwrap();
        assert_eq!(same.to_code().symbols().len(), 32);
        for (a, b) in cb.to_code().symbols().iter().zip(same.to_code().symbols()) {
            assert!((a - b).norm() < 1e-12);
        }

        let p_star = 0.2;
        let m_on = codebook_m_on(16, 2, p_star).unwrap();
        let full = swipt_codebook(&cb, 1.0, p_star).unwrap();
        let radius = (32.0 * 5.0 / m_on as f64).sqrt();
        let code = full.to_code();
        let on: Vec<_> = code.symbols().iter().filter(|p| p.norm() > 0.0).collect();
        assert_eq!(on.len(), m_on);
        for p in on {
            assert!((p.norm() - radius).abs() < 1e-12 * radius);
        }
        assert!(relative_error(full.average_power(), 5.0) < 1e-12);
        assert!(swipt_codebook(&cb, 2.0, p_star).is_err());
    }

    #[test]
    fn swipt_codebook_bookkeeping_identity() {
        let cb = build_info_codebook(4, 1, 5.0, &small_cfg(5)).unwrap();
        let p_star = 0.4;
        let m_on = codebook_m_on(4, 1, p_star).unwrap();
        let full = swipt_codebook(&cb, 1.0, p_star).unwrap();
        let h = canonical_model();
        let code = full.to_code();
        let delivered: f64 =
            code.symbols().iter().map(|x| h.power(x.norm_sqr())).sum::<f64>() / code.symbols().len() as f64;
        let expect = m_on as f64 / 4.0 * h.power(4.0 * 5.0 / m_on as f64);
        assert!((delivered - expect).abs() <= 1e-12 * expect.max(1e-300));
        let lin: f64 = code.symbols().iter().map(|x| Linear.power(x.norm_sqr())).sum::<f64>() / 4.0;
        assert!((lin - 5.0).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip() {
        let cb = build_info_codebook(4, 2, 5.0, &small_cfg(8)).unwrap();
        let text = cb.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        for key in ["m", "n", "p_a_uw", "rho", "dmin_sq", "base_points", "codewords"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        assert_eq!(Codebook::from_json(&text).unwrap(), cb);
    }

    #[test]
    fn block_code_parameters() {
        let c = onoff_block_code(4, 5.0, 0.25, 4).unwrap();
        assert_eq!(c.n_on, 1);
        assert!((c.r_on - 2.0 * 5f64.sqrt()).abs() < 1e-12);
        assert!(matches!(
            onoff_block_code(4, 5.0, 0.25, 5),
            Err(Error::Capacity { requested: 5, bound: 4 })
        ));

        let full = onoff_block_code(6, 3.0, 1.0, 1).unwrap();
        assert_eq!(full.n_on, 6);
        assert!((full.r_on - 3f64.sqrt()).abs() < 1e-12);
        assert!(onoff_block_code(6, 3.0, 1.0, 2).is_err());

        let two = onoff_block_code(2, 5.0, 0.5, 2).unwrap();
        assert_eq!(two.n_on, 1);
        assert!((two.r_on - 10f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn block_code_colex_order_and_power() {
        let c = onoff_block_code(5, 2.0, 0.4, 10).unwrap();
        assert_eq!(c.n_on, 2);
        let sets: Vec<Vec<usize>> = (0..10).map(|s| c.support(s)).collect();
        assert_eq!(sets[0], vec![0, 1]);
        assert_eq!(sets[1], vec![0, 2]);
        assert_eq!(sets[2], vec![1, 2]);
        assert_eq!(sets[3], vec![0, 3]);
        assert_eq!(sets[9], vec![3, 4]);
        assert!(relative_error(c.to_code().average_power(), 2.0) < 1e-12);
    }

    #[test]
    fn block_decoding_noiseless_and_ties() {
        let c = onoff_block_code(6, 1.0, 0.34, 15).unwrap();
        for s in 0..c.m() {
            assert_eq!(decode_onoff_block(&c.codeword(s), &c), s);
        }
        let zeros = vec![Complex64::new(0.0, 0.0); 6];
        assert_eq!(decode_onoff_block(&zeros, &c), 0);
    }

    #[test]
    fn block_decoding_falls_back_to_energy() {
        // Only supports {0}, {1} exist; strongest position 3 is not one.
        let c = onoff_block_code(4, 1.0, 0.25, 2).unwrap();
        let y = [
            Complex64::new(0.1, 0.0),
            Complex64::new(0.5, 0.0),
            Complex64::new(0.0, 0.0),
            Complex64::new(3.0, 0.0),
        ];
        assert_eq!(decode_onoff_block(&y, &c), 1);
    }

    #[test]
    fn binomials() {
        assert_eq!(binomial(4, 1), 4);
        assert_eq!(binomial(10, 3), 120);
        assert_eq!(binomial(3, 5), 0);
        assert_eq!(binomial(60, 30), 118264581564861424);
    }
}
