//! Concentric-circle information constellations and their On-Off
//! deformation.
//!
//! Points sit on circles of radius `0, t, 2t, …, Ct`. Inner circles are
//! filled to capacity, the remainder goes on the outermost circle, and `t`
//! is chosen so the average power equals `P_a`. [`swipt_transform`] then
//! pulls the `M_on` largest points onto a circle of radius `√(M·P_a/M_on)`
//! as ρ goes from 0 to 1 and shrinks the rest to preserve average power.

use std::cmp::Ordering;
use std::f64::consts::{PI, TAU};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::design::{CodeMatrix, Rho};
use crate::{Error, Result};

/// Relative tolerance under which two moduli count as the same circle.
const MODULUS_TIE: f64 = 1e-9;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ConstellationMeta {
    /// Index of the outermost circle.
    pub c: Option<usize>,
    /// Radius step, √µW. `None` for the single-point layout.
    pub t: Option<f64>,
    pub m_on: Option<usize>,
    #[serde(default)]
    pub on_indices: Vec<usize>,
    /// Set when the layout cannot meet the power constraint (M = 1).
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub degenerate: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Constellation {
    points: Vec<Complex64>,
    p_a: f64,
    rho: Rho,
    meta: ConstellationMeta,
}

impl Constellation {
    pub fn new(points: Vec<Complex64>, p_a: f64, rho: Rho, meta: ConstellationMeta) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::domain("constellation needs at least one point"));
        }
        if points.iter().any(|p| !(p.re.is_finite() && p.im.is_finite())) {
            return Err(Error::domain("constellation points must be finite"));
        }
        Ok(Self {
            points,
            p_a,
            rho,
            meta,
        })
    }

    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    pub fn m(&self) -> usize {
        self.points.len()
    }

    pub fn p_a(&self) -> f64 {
        self.p_a
    }

    pub fn rho(&self) -> Rho {
        self.rho
    }

    pub fn meta(&self) -> &ConstellationMeta {
        &self.meta
    }

    pub fn average_power(&self) -> f64 {
        self.points.iter().map(|p| p.norm_sqr()).sum::<f64>() / self.points.len() as f64
    }

    pub fn min_distance(&self) -> f64 {
        let mut best = f64::INFINITY;
        for (i, a) in self.points.iter().enumerate() {
            for b in &self.points[i + 1..] {
                best = best.min((a - b).norm());
            }
        }
        best
    }

    pub fn to_code(&self) -> CodeMatrix {
        CodeMatrix::new(self.points.len(), 1, self.points.clone())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ConstellationFile::from(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: ConstellationFile = serde_json::from_str(text)?;
        if f.m != f.points.len() {
            return Err(Error::domain(format!(
                "constellation file declares m = {} but holds {} points",
                f.m,
                f.points.len()
            )));
        }
        let points = f.points.iter().map(|&[re, im]| Complex64::new(re, im)).collect();
        Constellation::new(points, f.p_a_uw, f.rho, f.meta)
    }
}

#[derive(Serialize, Deserialize)]
struct ConstellationFile {
    m: usize,
    p_a_uw: f64,
    rho: Rho,
    points: Vec<[f64; 2]>,
    meta: ConstellationMeta,
}

impl From<&Constellation> for ConstellationFile {
    fn from(c: &Constellation) -> Self {
        Self {
            m: c.m(),
            p_a_uw: c.p_a,
            rho: c.rho,
            points: c.points.iter().map(|p| [p.re, p.im]).collect(),
            meta: c.meta.clone(),
        }
    }
}

/// Most points that fit on circle `m` (radius `m·t`) with pairwise
/// distance at least `t`: `⌊π / arcsin(1/(2m))⌋`, and 1 for the origin.
pub fn circle_capacity(m: usize) -> usize {
    if m == 0 {
        return 1;
    }
    let q = PI / (1.0 / (2.0 * m as f64)).asin();
    // π/arcsin(1/2) is exactly 6; absorb the rounding that lands just below.
    (q + 1e-9).floor() as usize
}

/// Per-circle point counts for `M` points: full circles then the remainder.
pub(crate) fn circle_fill(m_total: usize) -> Vec<usize> {
    let mut counts = Vec::new();
    let mut placed = 0;
    let mut ring = 0;
    while placed < m_total {
        let k = circle_capacity(ring).min(m_total - placed);
        counts.push(k);
        placed += k;
        ring += 1;
    }
    counts
}

/// Phase of the first point on circle `ring` holding `k` points.
fn ring_offset(ring: usize, k: usize) -> f64 {
    if ring % 2 == 0 {
        0.0
    } else {
        PI / k as f64
    }
}

/// Builds the `M`-point concentric-circle information constellation with
/// average power `p_a`.
pub fn layout_info(m_total: usize, p_a: f64) -> Result<Constellation> {
    if m_total == 0 {
        return Err(Error::domain("M must be at least 1"));
    }
    if !(p_a > 0.0 && p_a.is_finite()) {
        return Err(Error::domain(format!("average power must be positive, got {p_a}")));
    }
    let counts = circle_fill(m_total);
    let c = counts.len() - 1;
    if m_total == 1 {
        let meta = ConstellationMeta {
            c: Some(0),
            degenerate: true,
            ..Default::default()
        };
        return Constellation::new(vec![Complex64::new(0.0, 0.0)], p_a, Rho::Value(0.0), meta);
    }
    let denom: f64 = counts
        .iter()
        .enumerate()
        .map(|(ring, &k)| (k * ring * ring) as f64)
        .sum();
    let t = (m_total as f64 * p_a / denom).sqrt();
    let mut points = Vec::with_capacity(m_total);
    for (ring, &k) in counts.iter().enumerate() {
        let radius = ring as f64 * t;
        let offset = ring_offset(ring, k);
        for j in 0..k {
            let phase = TAU * j as f64 / k as f64 + offset;
            points.push(Complex64::from_polar(radius, phase));
        }
    }
    let meta = ConstellationMeta {
        c: Some(c),
        t: Some(t),
        ..Default::default()
    };
    Constellation::new(points, p_a, Rho::Value(0.0), meta)
}

/// `argmin_{m ∈ 1..=M} |p_star − m/M|`, ties toward the smaller `m`.
pub fn m_on_count(m_total: usize, p_star: f64) -> Result<usize> {
    if m_total == 0 {
        return Err(Error::domain("M must be at least 1"));
    }
    if !(p_star > 0.0 && p_star <= 1.0) {
        return Err(Error::domain(format!("p_star must lie in (0, 1], got {p_star}")));
    }
    let mut best = (f64::INFINITY, 1);
    for m in 1..=m_total {
        let gap = (p_star - m as f64 / m_total as f64).abs();
        if gap < best.0 {
            best = (gap, m);
        }
    }
    Ok(best.1)
}

/// Phase folded into `[0, 2π)`.
pub(crate) fn phase(z: Complex64) -> f64 {
    let a = z.arg();
    let a = if a < 0.0 { a + TAU } else { a };
    if a >= TAU {
        0.0
    } else {
        a
    }
}

/// Indices of the `count` largest-modulus points, ordered by ascending
/// phase. Modulus ties break by ascending phase, then by index.
pub(crate) fn select_on_points(points: &[Complex64], count: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&i, &j| {
        let (a, b) = (points[i].norm(), points[j].norm());
        let scale = a.max(b);
        if (a - b).abs() > MODULUS_TIE * scale {
            return b.partial_cmp(&a).unwrap_or(Ordering::Equal);
        }
        phase(points[i])
            .partial_cmp(&phase(points[j]))
            .unwrap_or(Ordering::Equal)
            .then(i.cmp(&j))
    });
    let mut chosen: Vec<usize> = order.into_iter().take(count).collect();
    chosen.sort_by(|&i, &j| {
        phase(points[i])
            .partial_cmp(&phase(points[j]))
            .unwrap_or(Ordering::Equal)
            .then(i.cmp(&j))
    });
    chosen
}

/// Moves `on` points toward `m_on` equally phased points of modulus
/// `√(len·p_a/m_on)` and rescales the rest so that the mean power over
/// `points` stays `p_a`.
pub(crate) fn perturb(points: &[Complex64], p_a: f64, rho: f64, on: &[usize]) -> Vec<Complex64> {
    let total = points.len() as f64 * p_a;
    let m_on = on.len();
    let target = (total / m_on as f64).sqrt();
    let mut out = points.to_vec();
    let mut is_on = vec![false; points.len()];
    let mut on_power = 0.0;
    for (i, &idx) in on.iter().enumerate() {
        is_on[idx] = true;
        let c = points[idx];
        let modulus = (1.0 - rho) * c.norm() + rho * target;
        let angle = (1.0 - rho) * phase(c) + rho * (TAU * i as f64 / m_on as f64);
        out[idx] = Complex64::from_polar(modulus, angle);
        on_power += modulus * modulus;
    }
    let off_power: f64 = points
        .iter()
        .zip(&is_on)
        .filter(|(_, on)| !**on)
        .map(|(p, _)| p.norm_sqr())
        .sum();
    let mut remaining = total - on_power;
    if rho >= 1.0 || remaining <= 1e-12 * total {
        remaining = 0.0;
    }
    if off_power > 0.0 {
        let s = (remaining / off_power).sqrt();
        for (p, on) in out.iter_mut().zip(&is_on) {
            if !*on {
                *p *= s;
            }
        }
    }
    // Only reachable when the off points carry no power to trade.
    let achieved = out.iter().map(|p| p.norm_sqr()).sum::<f64>();
    if achieved > 0.0 && ((achieved - total) / total).abs() > 1e-12 {
        let g = (total / achieved).sqrt();
        for p in &mut out {
            *p *= g;
        }
    }
    out
}

fn check_rho(rho: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&rho) {
        return Err(Error::domain(format!("rho must lie in [0, 1], got {rho}")));
    }
    Ok(())
}

/// Deforms an information constellation toward On-Off signalling with On
/// probability `p_star`.
pub fn swipt_transform(base: &Constellation, rho: f64, p_star: f64) -> Result<Constellation> {
    check_rho(rho)?;
    if base.rho != Rho::Value(0.0) {
        return Err(Error::domain("swipt_transform expects an undeformed (rho = 0) base"));
    }
    if !(base.p_a > 0.0) {
        return Err(Error::domain("average power must be positive"));
    }
    let m_on = m_on_count(base.m(), p_star)?;
    let on = select_on_points(&base.points, m_on);
    let points = perturb(&base.points, base.p_a, rho, &on);
    let meta = ConstellationMeta {
        m_on: Some(m_on),
        on_indices: on,
        ..base.meta.clone()
    };
    Constellation::new(points, base.p_a, Rho::Value(rho), meta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::design::relative_error;
    use proptest::prelude::*;

    /// Chord length between neighbours of `k` equally spaced points on a
    /// circle of radius `r`.
    fn chord(r: f64, k: usize) -> f64 {
        if k == 1 {
            f64::INFINITY
        } else {
            2.0 * r * (PI / k as f64).sin()
        }
    }

    #[test]
    fn capacities_match_geometry() {
        assert_eq!(circle_capacity(0), 1);
        let expected = [6, 12, 18, 25, 31];
        for (m, &k) in (1..=5).zip(&expected) {
            assert_eq!(circle_capacity(m), k, "ring {m}");
            assert!(chord(m as f64, k) >= 1.0 - 1e-12);
            assert!(chord(m as f64, k + 1) < 1.0);
        }
        for m in 1..200 {
            let k = circle_capacity(m);
            assert!(chord(m as f64, k) >= 1.0 - 1e-12 && chord(m as f64, k + 1) < 1.0);
        }
    }

    #[test]
    fn sixteen_point_layout() {
        let c = layout_info(16, 1.0).unwrap();
        assert_eq!(c.meta().c, Some(2));
        assert_eq!(circle_fill(16), vec![1, 6, 9]);
        let t = c.meta().t.unwrap();
        assert!((t - (16.0f64 / 42.0).sqrt()).abs() < 1e-12);
        assert!((t - 0.61721).abs() < 1e-5);
    }

    #[test]
    fn sixty_four_point_layout() {
        let c = layout_info(64, 3.0).unwrap();
        assert_eq!(c.meta().c, Some(5));
        assert_eq!(*circle_fill(64).last().unwrap(), 2);
    }

    #[test]
    fn single_point_is_flagged() {
        let c = layout_info(1, 2.0).unwrap();
        assert!(c.meta().degenerate);
        assert_eq!(c.points(), &[Complex64::new(0.0, 0.0)]);
        assert_eq!(c.meta().t, None);
        assert!(layout_info(0, 1.0).is_err());
    }

    #[test]
    fn layout_power_and_distance() {
        for m in 2..=256 {
            let c = layout_info(m, 5.0).unwrap();
            assert!(relative_error(c.average_power(), 5.0) < 1e-9, "M={m}");
            let t = c.meta().t.unwrap();
            assert!(c.min_distance() >= t * (1.0 - 1e-9), "M={m}");
        }
    }

    #[test]
    fn m_on_fingerprints() {
        assert_eq!(m_on_count(32, 5.0 / 317.0).unwrap(), 1);
        assert_eq!(m_on_count(32, 120.0 / 317.0).unwrap(), 12);
        assert_eq!(m_on_count(8, 1.0).unwrap(), 8);
        assert_eq!(m_on_count(8, 0.25).unwrap(), 2);
        // Exact tie between 1/4 and 2/4 goes to the smaller count.
        assert_eq!(m_on_count(4, 0.375).unwrap(), 1);
        assert!(m_on_count(4, 0.0).is_err());
    }

    #[test]
    fn zero_rho_is_identity() {
        let base = layout_info(16, 5.0).unwrap();
        let out = swipt_transform(&base, 0.0, 0.3).unwrap();
        for (a, b) in base.points().iter().zip(out.points()) {
            assert!((a - b).norm() < 1e-12);
        }
    }

    #[test]
    fn full_rho_single_on_point() {
        let base = layout_info(32, 5.0).unwrap();
        let out = swipt_transform(&base, 1.0, 5.0 / 317.0).unwrap();
        let on = &out.meta().on_indices;
        assert_eq!(on.len(), 1);
        for (i, p) in out.points().iter().enumerate() {
            if i == on[0] {
                assert!((p.norm() - 160f64.sqrt()).abs() < 1e-12);
                assert!((p.norm() - 12.649).abs() < 1e-3);
            } else {
                assert_eq!(p.norm(), 0.0);
            }
        }
        assert!(relative_error(out.average_power(), 5.0) < 1e-12);
    }

    #[test]
    fn all_on_limit_is_psk() {
        let base = layout_info(8, 2.0).unwrap();
        let out = swipt_transform(&base, 1.0, 1.0).unwrap();
        let mut phases: Vec<f64> = out.points().iter().map(|p| phase(*p)).collect();
        phases.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for (i, p) in phases.iter().enumerate() {
            assert!((p - TAU * i as f64 / 8.0).abs() < 1e-12);
        }
        for p in out.points() {
            assert!((p.norm() - 2f64.sqrt()).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_rho_and_deformed_base() {
        let base = layout_info(8, 1.0).unwrap();
        assert!(swipt_transform(&base, 1.5, 0.5).is_err());
        assert!(swipt_transform(&base, -0.1, 0.5).is_err());
        let half = swipt_transform(&base, 0.5, 0.5).unwrap();
        assert!(swipt_transform(&half, 0.5, 0.5).is_err());
    }

    #[test]
    fn json_round_trip() {
        let base = layout_info(12, 3.0).unwrap();
        let c = swipt_transform(&base, 0.4, 0.2).unwrap();
        let text = c.to_json().unwrap();
        let v: serde_json::Value = serde_json::from_str(&text).unwrap();
        for key in ["m", "p_a_uw", "rho", "points", "meta"] {
            assert!(v.get(key).is_some(), "missing {key}");
        }
        for key in ["c", "t", "m_on", "on_indices"] {
            assert!(v["meta"].get(key).is_some(), "missing meta.{key}");
        }
        assert_eq!(Constellation::from_json(&text).unwrap(), c);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn transform_keeps_average_power(m in 2usize..128, p_a in 0.1f64..500.0,
                                         rho in 0.0f64..=1.0, p_star in 0.001f64..=1.0) {
            let base = layout_info(m, p_a).unwrap();
            let out = swipt_transform(&base, rho, p_star).unwrap();
            prop_assert!(relative_error(out.average_power(), p_a) < 1e-9);
        }

        #[test]
        fn transform_endpoint_geometry(m in 2usize..128, p_a in 0.1f64..500.0, p_star in 0.001f64..=1.0) {
            let base = layout_info(m, p_a).unwrap();
            let out = swipt_transform(&base, 1.0, p_star).unwrap();
            let m_on = out.meta().m_on.unwrap();
            let radius = (m as f64 * p_a / m_on as f64).sqrt();
            for (i, &idx) in out.meta().on_indices.iter().enumerate() {
                let p = out.points()[idx];
                prop_assert!((p.norm() - radius).abs() <= 1e-12 * radius);
                let expect = TAU * i as f64 / m_on as f64;
                let got = phase(p);
                let diff = (got - expect).abs().min(TAU - (got - expect).abs());
                prop_assert!(diff < 1e-12);
            }
            let zeros = out.points().iter().filter(|p| p.norm() == 0.0).count();
            prop_assert_eq!(zeros, m - m_on);
        }

        #[test]
        fn m_on_tracks_probability(m in 1usize..300, p in 0.0f64..=1.0) {
            let p = p.max(1.0 / m as f64);
            let k = m_on_count(m, p).unwrap();
            prop_assert!((k as f64 / m as f64 - p).abs() <= 0.5 / m as f64 + 1e-12);
        }
    }

    #[test]
    fn transform_is_continuous_in_rho() {
        // The power-restoring factor of the off points behaves like
        // √(1 − ρ) near ρ = 1, so the Lipschitz band is checked on [0, 0.99]
        // and the last stretch against a √δ modulus of continuity.
        for &(m, p_a, p_star) in &[
            (16, 5.0, 5.0 / 317.0),
            (32, 120.0, 120.0 / 317.0),
            (8, 1.0, 1.0),
            (64, 300.0, 300.0 / 317.0),
        ] {
            let base = layout_info(m, p_a).unwrap();
            let scale = (m as f64 * p_a).sqrt();
            let mut prev = base.points().to_vec();
            for step in 1..=1000 {
                let rho = step as f64 / 1000.0;
                let cur = swipt_transform(&base, rho, p_star).unwrap();
                let worst = prev
                    .iter()
                    .zip(cur.points())
                    .map(|(a, b)| (a - b).norm())
                    .fold(0.0, f64::max);
                let band = if step <= 990 {
                    1e-2 * scale
                } else {
                    2.0 * 1e-3f64.sqrt() * scale
                };
                assert!(worst <= band, "M={m} rho={rho}: moved {worst} > {band}");
                prev = cur.points().to_vec();
            }
        }
    }
}
