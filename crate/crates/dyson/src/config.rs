//! Point configurations on the real line with multiplicities, finite or
//! generated by a lattice rule η^κ beyond a finite core.
//!
//! Also: shift/dilate/square, the condition diagnostics (C.1)-(C.3) and the
//! cluster decomposition used by the cluster-form kernel.

use serde::Serialize;
use std::collections::BTreeMap;
use std::fmt;
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("cannot parse configuration literal {literal:?}: {reason}")]
    Parse { literal: String, reason: String },
    #[error("operation needs a finite configuration")]
    NotFinite,
    #[error("interval [{lo}, {hi}] leaves the known window [{wlo}, {whi}]")]
    OutsideWindow { lo: f64, hi: f64, wlo: f64, whi: f64 },
    #[error("no admissible cluster interval in cell {k}")]
    NoAdmissibleInterval { k: i64 },
}

/// g^κ(x) = sgn(x)|x|^κ.
pub fn g_kappa(kappa: f64, x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x.signum() * x.abs().powf(kappa)
    }
}

pub fn g_kappa_inv(kappa: f64, u: f64) -> f64 {
    if u == 0.0 {
        0.0
    } else {
        u.signum() * u.abs().powf(1.0 / kappa)
    }
}

/// Points offset + scale·g^κ(ℓ) for all |ℓ| ≥ first_index, each simple.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LatticeTail {
    pub kappa: f64,
    pub offset: f64,
    pub scale: f64,
    pub first_index: u64,
}

impl LatticeTail {
    pub fn position(&self, l: i64) -> f64 {
        self.offset + self.scale * g_kappa(self.kappa, l as f64)
    }

    pub fn contains_index(&self, l: i64) -> bool {
        l.unsigned_abs() >= self.first_index
    }

    /// Indices ℓ (tail or not) with position in [lo, hi]; empty when lo > hi.
    pub fn index_span(&self, lo: f64, hi: f64) -> Option<(i64, i64)> {
        if lo > hi {
            return None;
        }
        let inv = |u: f64| g_kappa_inv(self.kappa, (u - self.offset) / self.scale);
        let clamp = |v: f64| v.clamp(-9.0e15, 9.0e15) as i64;
        let mut a = clamp(inv(lo).ceil());
        while self.position(a - 1) >= lo {
            a -= 1;
        }
        while self.position(a) < lo {
            a += 1;
        }
        let mut b = clamp(inv(hi).floor());
        while self.position(b + 1) <= hi {
            b += 1;
        }
        while self.position(b) > hi {
            b -= 1;
        }
        if a > b {
            None
        } else {
            Some((a, b))
        }
    }

    /// Density dℓ/du = C|u − offset|^p of the tail points.
    pub fn density_params(&self) -> (f64, f64) {
        let p = 1.0 / self.kappa - 1.0;
        let c = 1.0 / (self.kappa * self.scale.powf(1.0 / self.kappa));
        (c, p)
    }

    /// Open interval free of tail points that the core must fit in.
    fn core_gap(&self) -> (f64, f64) {
        if self.first_index == 0 {
            (0.0, 0.0)
        } else {
            let f = self.first_index as i64;
            (self.position(-f), self.position(f))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum TailRule {
    None,
    Lattice(LatticeTail),
    /// Explicit points known only on [lo, hi].
    Window { lo: f64, hi: f64 },
}

/// A locally finite point multiset on ℝ.
#[derive(Debug, Clone, PartialEq)]
pub struct Configuration {
    points: Vec<(f64, u32)>,
    tail: TailRule,
}

fn normalize(mut pts: Vec<(f64, u32)>) -> Result<Vec<(f64, u32)>, ConfigError> {
    for &(x, m) in &pts {
        if !x.is_finite() {
            return Err(ConfigError::InvalidParameter(format!("non-finite position {x}")));
        }
        if m == 0 {
            return Err(ConfigError::InvalidParameter(format!("zero multiplicity at {x}")));
        }
    }
    pts.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut out: Vec<(f64, u32)> = Vec::with_capacity(pts.len());
    for (x, m) in pts {
        match out.last_mut() {
            Some(last) if last.0 == x => last.1 += m,
            _ => out.push((if x == 0.0 { 0.0 } else { x }, m)),
        }
    }
    Ok(out)
}

impl Configuration {
    /// Finite configuration from (position, multiplicity) pairs; coincident
    /// positions merge.
    pub fn finite(points: &[(f64, u32)]) -> Result<Self, ConfigError> {
        Ok(Configuration { points: normalize(points.to_vec())?, tail: TailRule::None })
    }

    /// Finite configuration from a list of positions (repeats give multiplicity).
    pub fn from_positions(xs: &[f64]) -> Result<Self, ConfigError> {
        let pts: Vec<(f64, u32)> = xs.iter().map(|&x| (x, 1)).collect();
        Self::finite(&pts)
    }

    /// ξ^Z.
    pub fn lattice() -> Self {
        Self::eta(1.0).expect("κ = 1 is valid")
    }

    /// η^κ = Σ_ℓ δ_{g^κ(ℓ)}.
    pub fn eta(kappa: f64) -> Result<Self, ConfigError> {
        if !(kappa > 0.5 && kappa <= 1.0) {
            return Err(ConfigError::InvalidParameter(format!("κ must lie in (1/2, 1], got {kappa}")));
        }
        Ok(Configuration {
            points: Vec::new(),
            tail: TailRule::Lattice(LatticeTail { kappa, offset: 0.0, scale: 1.0, first_index: 0 }),
        })
    }

    /// Explicit core points plus a lattice tail outside them.
    pub fn with_lattice_tail(core: &[(f64, u32)], tail: LatticeTail) -> Result<Self, ConfigError> {
        if !(tail.kappa > 0.5 && tail.kappa <= 1.0) || !(tail.scale > 0.0) || !tail.offset.is_finite() {
            return Err(ConfigError::InvalidParameter(format!("bad lattice tail {tail:?}")));
        }
        let points = normalize(core.to_vec())?;
        let (glo, ghi) = tail.core_gap();
        if points.iter().any(|&(x, _)| !(x > glo && x < ghi)) {
            return Err(ConfigError::InvalidParameter(format!(
                "core points must lie strictly inside ({glo}, {ghi})"
            )));
        }
        Ok(Configuration { points, tail: TailRule::Lattice(tail) }.normalized())
    }

    /// Points known only on [lo, hi]; anything outside is unknown.
    pub fn window(points: &[(f64, u32)], lo: f64, hi: f64) -> Result<Self, ConfigError> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(ConfigError::InvalidParameter(format!("bad window [{lo}, {hi}]")));
        }
        let points = normalize(points.to_vec())?;
        if points.iter().any(|&(x, _)| x < lo || x > hi) {
            return Err(ConfigError::InvalidParameter("window points outside the window".into()));
        }
        Ok(Configuration { points, tail: TailRule::Window { lo, hi } })
    }

    /// Parse "Z", "eta:<κ>" or "points:x1^m1,x2^m2,...".
    pub fn parse(literal: &str) -> Result<Self, ConfigError> {
        let s = literal.trim();
        let fail = |reason: &str| ConfigError::Parse { literal: literal.to_string(), reason: reason.to_string() };
        if s == "Z" {
            return Ok(Self::lattice());
        }
        if let Some(rest) = s.strip_prefix("eta:") {
            let kappa: f64 = rest.trim().parse().map_err(|_| fail("κ is not a number"))?;
            return Self::eta(kappa).map_err(|e| fail(&e.to_string()));
        }
        if let Some(rest) = s.strip_prefix("points:") {
            let mut pts = Vec::new();
            for item in rest.split(',') {
                let item = item.trim();
                if item.is_empty() {
                    return Err(fail("empty point entry"));
                }
                let (x, m) = match item.split_once('^') {
                    Some((x, m)) => (x, m.trim().parse::<u32>().map_err(|_| fail("bad multiplicity"))?),
                    None => (item, 1),
                };
                let x: f64 = x.trim().parse().map_err(|_| fail("bad position"))?;
                pts.push((x, m));
            }
            return Self::finite(&pts).map_err(|e| fail(&e.to_string()));
        }
        Err(fail("expected Z, eta:<κ> or points:<list>"))
    }

    pub fn tail(&self) -> &TailRule {
        &self.tail
    }

    /// The explicitly stored points (the whole configuration when finite).
    pub fn core(&self) -> &[(f64, u32)] {
        &self.points
    }

    pub fn is_finite(&self) -> bool {
        matches!(self.tail, TailRule::None)
    }

    /// ξ(ℝ) for finite configurations.
    pub fn total(&self) -> Option<u64> {
        self.is_finite().then(|| self.points.iter().map(|p| p.1 as u64).sum())
    }

    pub fn is_simple(&self) -> bool {
        self.points.iter().all(|p| p.1 == 1)
    }

    fn check_window(&self, lo: f64, hi: f64) -> Result<(), ConfigError> {
        if let TailRule::Window { lo: wlo, hi: whi } = self.tail {
            if lo < wlo || hi > whi {
                return Err(ConfigError::OutsideWindow { lo, hi, wlo, whi });
            }
        }
        if lo.is_nan() || hi.is_nan() || (!self.is_finite() && !(lo.is_finite() && hi.is_finite())) {
            return Err(ConfigError::InvalidParameter(format!("unbounded interval [{lo}, {hi}]")));
        }
        Ok(())
    }

    /// Points of ξ in the closed interval [lo, hi], increasing.
    pub fn points_in(&self, lo: f64, hi: f64) -> Result<Vec<(f64, u32)>, ConfigError> {
        self.check_window(lo, hi)?;
        let a = self.points.partition_point(|p| p.0 < lo);
        let b = self.points.partition_point(|p| p.0 <= hi);
        let mut out: Vec<(f64, u32)> = self.points[a..b.max(a)].to_vec();
        if let TailRule::Lattice(t) = self.tail {
            if let Some((i, j)) = t.index_span(lo, hi) {
                let mut tail_pts: Vec<(f64, u32)> =
                    (i..=j).filter(|&l| t.contains_index(l)).map(|l| (t.position(l), 1)).collect();
                if !tail_pts.is_empty() {
                    tail_pts.append(&mut out);
                    tail_pts.sort_by(|x, y| x.0.total_cmp(&y.0));
                    out = tail_pts;
                }
            }
        }
        Ok(out)
    }

    /// ξ([lo, hi]).
    pub fn mass_in(&self, lo: f64, hi: f64) -> Result<u64, ConfigError> {
        Ok(self.points_in(lo, hi)?.iter().map(|p| p.1 as u64).sum())
    }

    /// Multiplicity at exactly x.
    pub fn multiplicity_at(&self, x: f64) -> Result<u32, ConfigError> {
        Ok(self.points_in(x, x)?.first().map(|p| p.1).unwrap_or(0))
    }

    /// ξ ∩ [lo, hi] as a finite configuration.
    pub fn restrict(&self, lo: f64, hi: f64) -> Result<Self, ConfigError> {
        let pts = self.points_in(lo, hi)?;
        Ok(Configuration { points: pts, tail: TailRule::None })
    }

    fn normalized(mut self) -> Self {
        // a full lattice with κ = 1 is invariant under shifts by its spacing
        if let TailRule::Lattice(ref mut t) = self.tail {
            if t.kappa == 1.0 && t.first_index == 0 && self.points.is_empty() {
                let mut o = t.offset.rem_euclid(t.scale);
                if o > t.scale * (1.0 - 1e-13) || o < t.scale * 1e-13 {
                    o = 0.0;
                }
                t.offset = o;
            }
        }
        self
    }

    /// τ_u ξ: every point x moves to x + u.
    pub fn shift(&self, u: f64) -> Self {
        let points = self.points.iter().map(|&(x, m)| (x + u, m)).collect();
        let tail = match self.tail {
            TailRule::None => TailRule::None,
            TailRule::Lattice(t) => TailRule::Lattice(LatticeTail { offset: t.offset + u, ..t }),
            TailRule::Window { lo, hi } => TailRule::Window { lo: lo + u, hi: hi + u },
        };
        Configuration { points, tail }.normalized()
    }

    /// c∘ξ: every point x moves to c·x.
    pub fn dilate(&self, c: f64) -> Result<Self, ConfigError> {
        if !(c > 0.0) || !c.is_finite() {
            return Err(ConfigError::InvalidParameter(format!("dilation factor must be positive, got {c}")));
        }
        let points = self.points.iter().map(|&(x, m)| (c * x, m)).collect();
        let tail = match self.tail {
            TailRule::None => TailRule::None,
            TailRule::Lattice(t) => TailRule::Lattice(LatticeTail { offset: c * t.offset, scale: c * t.scale, ..t }),
            TailRule::Window { lo, hi } => TailRule::Window { lo: c * lo, hi: c * hi },
        };
        Ok(Configuration { points, tail }.normalized())
    }

    /// ξ^⟨2⟩ = Σ δ_{x²}; finite configurations only (restrict first).
    pub fn square(&self) -> Result<Self, ConfigError> {
        if !self.is_finite() {
            return Err(ConfigError::NotFinite);
        }
        let pts: Vec<(f64, u32)> = self.points.iter().map(|&(x, m)| (x * x, m)).collect();
        Self::finite(&pts)
    }

    /// Nondecreasing labeling x_1 ≤ … ≤ x_N with repeats.
    pub fn labeled(&self) -> Result<Vec<f64>, ConfigError> {
        if !self.is_finite() {
            return Err(ConfigError::NotFinite);
        }
        let mut out = Vec::new();
        for &(x, m) in &self.points {
            out.extend(std::iter::repeat_n(x, m as usize));
        }
        Ok(out)
    }

    /// Sample points of supp ξ ∩ [lo, hi] at most `limit` of them, evenly by index.
    fn support_sample(&self, lo: f64, hi: f64, limit: usize) -> Result<Vec<f64>, ConfigError> {
        let pts = self.points_in(lo, hi)?;
        if pts.len() <= limit {
            return Ok(pts.iter().map(|p| p.0).collect());
        }
        let step = pts.len() as f64 / limit as f64;
        Ok((0..limit).map(|i| pts[(i as f64 * step) as usize].0).collect())
    }
}

impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let list = |f: &mut fmt::Formatter<'_>| -> fmt::Result {
            for (i, (x, m)) in self.points.iter().enumerate() {
                if i > 0 {
                    write!(f, ",")?;
                }
                write!(f, "{x}^{m}")?;
            }
            Ok(())
        };
        match self.tail {
            TailRule::None => {
                write!(f, "points:")?;
                list(f)
            }
            TailRule::Lattice(t) if t.offset == 0.0 && t.scale == 1.0 && t.first_index == 0 && self.points.is_empty() => {
                if t.kappa == 1.0 {
                    write!(f, "Z")
                } else {
                    write!(f, "eta:{}", t.kappa)
                }
            }
            TailRule::Lattice(t) => {
                write!(f, "lattice(kappa={},offset={},scale={},from={})+points:", t.kappa, t.offset, t.scale, t.first_index)?;
                list(f)
            }
            TailRule::Window { lo, hi } => {
                write!(f, "window[{lo},{hi}]+points:")?;
                list(f)
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Holds,
    Fails,
    Undetermined,
}

/// Diagnostics of the conditions (C.1), (C.2)(i), (C.2)(ii) and (C.3).
#[derive(Debug, Clone, Serialize)]
pub struct ConditionReport {
    pub l_max: f64,
    pub alpha: f64,
    pub kappa: f64,
    pub l_grid: Vec<f64>,
    pub m_signed_trend: Vec<f64>,
    pub m_alpha_trend: Vec<f64>,
    /// M(ξ, L_max)
    pub m_signed: f64,
    /// M_α(ξ, L_max)
    pub m_alpha: f64,
    pub c1: Verdict,
    pub c0: Option<f64>,
    pub c2i: Verdict,
    pub c1_const: Option<f64>,
    pub c2ii: Verdict,
    pub c2_const: Option<f64>,
    pub beta_exp: Option<f64>,
    pub c3: Verdict,
    pub m_cell: Option<u32>,
}

impl ConditionReport {
    pub fn c1_holds(&self) -> bool {
        self.c1 == Verdict::Holds
    }
    pub fn c2i_holds(&self) -> bool {
        self.c2i == Verdict::Holds
    }
    pub fn c2ii_holds(&self) -> bool {
        self.c2ii == Verdict::Holds
    }
    pub fn c3_holds(&self) -> bool {
        self.c3 == Verdict::Holds
    }
}

/// M(ξ, L) = ∫_{[−L,L]∖{0}} ξ(dx)/x, summed in ± pairs so symmetric
/// configurations give exactly zero.
pub fn m_signed(xi: &Configuration, l: f64) -> Result<f64, ConfigError> {
    let pts = xi.points_in(-l, l)?;
    let mut by_abs: BTreeMap<u64, i64> = BTreeMap::new();
    for (x, m) in pts {
        if x == 0.0 {
            continue;
        }
        let e = by_abs.entry(x.abs().to_bits()).or_insert(0);
        *e += if x > 0.0 { m as i64 } else { -(m as i64) };
    }
    Ok(by_abs.iter().map(|(&bits, &c)| c as f64 / f64::from_bits(bits)).sum())
}

/// M_α(ξ, L) = (∫_{[−L,L]∖{0}} ξ(dx)/|x|^α)^{1/α}.
pub fn m_alpha(xi: &Configuration, l: f64, alpha: f64) -> Result<f64, ConfigError> {
    Ok(m_alpha_pow(xi, l, alpha)?.powf(1.0 / alpha))
}

fn m_alpha_pow(xi: &Configuration, l: f64, alpha: f64) -> Result<f64, ConfigError> {
    let pts = xi.points_in(-l, l)?;
    Ok(pts.iter().filter(|p| p.0 != 0.0).map(|&(x, m)| m as f64 / x.abs().powf(alpha)).sum())
}

/// M_1(τ_{−a²} ξ^⟨2⟩, L²) = Σ_{|x| ≤ L, x² ≠ a²} m/|x² − a²|.
fn m1_shifted_square(xi: &Configuration, a: f64, l: f64) -> Result<f64, ConfigError> {
    let pts = xi.points_in(-l, l)?;
    let a2 = a * a;
    Ok(pts.iter().filter(|p| p.0 * p.0 != a2).map(|&(x, m)| m as f64 / (x * x - a2).abs()).sum())
}

/// m(ξ, κ) = max_k ξ([g^κ(k), g^κ(k+1)]) over cells k in [k_lo, k_hi].
pub fn cell_mass_max(xi: &Configuration, kappa: f64, k_lo: i64, k_hi: i64) -> Result<u32, ConfigError> {
    let mut best = 0u64;
    for k in k_lo..=k_hi {
        let m = xi.mass_in(g_kappa(kappa, k as f64), g_kappa(kappa, (k + 1) as f64))?;
        best = best.max(m);
    }
    Ok(best as u32)
}

/// Condition diagnostics on a geometric grid of L up to `l_max`.
pub fn check_conditions(xi: &Configuration, l_max: f64, alpha: f64, kappa: f64) -> Result<ConditionReport, ConfigError> {
    if !(alpha > 1.0 && alpha < 2.0) {
        return Err(ConfigError::InvalidParameter(format!("α must lie in (1, 2), got {alpha}")));
    }
    if !(kappa > 0.5 && kappa <= 1.0) {
        return Err(ConfigError::InvalidParameter(format!("κ must lie in (1/2, 1], got {kappa}")));
    }
    if !(l_max >= 1.0) || !l_max.is_finite() {
        return Err(ConfigError::InvalidParameter(format!("L_max must be ≥ 1, got {l_max}")));
    }
    let l_max = match xi.tail {
        TailRule::Window { lo, hi } => l_max.min(hi.min(-lo)),
        _ => l_max,
    };
    let mut l_grid = Vec::new();
    let mut l = l_max;
    while l >= 1.0 && l_grid.len() < 40 {
        l_grid.push(l);
        l /= 2.0;
    }
    l_grid.reverse();
    let mut m_signed_trend = Vec::new();
    let mut m_alpha_trend = Vec::new();
    for &l in &l_grid {
        m_signed_trend.push(m_signed(xi, l)?);
        m_alpha_trend.push(m_alpha(xi, l, alpha)?);
    }
    let m_s = *m_signed_trend.last().unwrap_or(&0.0);
    let m_a = *m_alpha_trend.last().unwrap_or(&0.0);

    let mut report = ConditionReport {
        l_max,
        alpha,
        kappa,
        l_grid: l_grid.clone(),
        m_signed_trend: m_signed_trend.clone(),
        m_alpha_trend: m_alpha_trend.clone(),
        m_signed: m_s,
        m_alpha: m_a,
        c1: Verdict::Undetermined,
        c0: None,
        c2i: Verdict::Undetermined,
        c1_const: None,
        c2ii: Verdict::Undetermined,
        c2_const: None,
        beta_exp: None,
        c3: Verdict::Undetermined,
        m_cell: None,
    };

    match xi.tail {
        TailRule::None => {
            // exact: partial sums only change at the support points
            let pts = xi.points.clone();
            let mut radii: Vec<f64> = pts.iter().map(|p| p.0.abs()).filter(|&r| r > 0.0).collect();
            radii.sort_by(f64::total_cmp);
            radii.dedup();
            let mut sup = 0.0f64;
            for &r in &radii {
                sup = sup.max(m_signed(xi, r)?.abs());
            }
            let far = radii.last().copied().unwrap_or(0.0) + 1.0;
            report.c1 = Verdict::Holds;
            report.c0 = Some(sup);
            report.c2i = Verdict::Holds;
            report.c1_const = Some(m_alpha(xi, far, alpha)?);
            let mut c2 = 0.0f64;
            let beta = 1.0;
            for &(a, _) in &pts {
                let v = m1_shifted_square(xi, a, far)?;
                c2 = c2.max(v * a.abs().max(1.0).powf(beta));
            }
            report.c2ii = Verdict::Holds;
            report.c2_const = Some(c2);
            report.beta_exp = Some(beta);
            let (lo, hi) = (pts.first().map(|p| p.0).unwrap_or(0.0), pts.last().map(|p| p.0).unwrap_or(0.0));
            let k_lo = g_kappa_inv(kappa, lo).floor() as i64 - 1;
            let k_hi = g_kappa_inv(kappa, hi).ceil() as i64 + 1;
            report.m_cell = Some(cell_mass_max(xi, kappa, k_lo, k_hi)?);
            report.c3 = Verdict::Holds;
        }
        TailRule::Lattice(t) => {
            let (c, p) = t.density_params();
            // (C.1): paired terms 2o/(o² − s²g²) decay like ℓ^{−2κ}; summable for κ > 1/2
            let sup = m_signed_trend.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            let tail_m = if t.offset == 0.0 {
                0.0
            } else {
                2.0 * t.offset.abs() * c * l_max.powf(p - 1.0) / (1.0 - p).max(1e-12)
            };
            report.c1 = if t.kappa > 0.5 { Verdict::Holds } else { Verdict::Fails };
            report.c0 = Some(sup + tail_m);
            // (C.2)(i): Σ|x|^{−α} converges iff α > 1/κ
            if alpha * t.kappa > 1.0 {
                let tail = 2.0 * c * l_max.powf(p + 1.0 - alpha) / (alpha - 1.0 - p);
                report.c2i = Verdict::Holds;
                report.c1_const = Some((m_alpha_pow(xi, l_max, alpha)? + tail).powf(1.0 / alpha));
            } else {
                report.c2i = Verdict::Fails;
            }
            // (C.2)(ii): fit the decay exponent of M_1(τ_{−a²}ξ^⟨2⟩) over a ∈ supp ξ
            let a_max = (l_max / 8.0).max(2.0);
            let sample = xi.support_sample(-a_max, a_max, 48)?;
            let mut pairs = Vec::new();
            let mut values = Vec::new();
            for &a in &sample {
                let tail = 2.0 * c * l_max.powf(p - 1.0) / (1.0 - p).max(1e-12);
                let v = m1_shifted_square(xi, a, l_max)? + tail;
                values.push((a, v));
                if a.abs() >= 2.0 && v > 0.0 {
                    pairs.push((a.abs().ln(), v.ln()));
                }
            }
            if pairs.len() >= 3 {
                let n = pairs.len() as f64;
                let mx = pairs.iter().map(|q| q.0).sum::<f64>() / n;
                let my = pairs.iter().map(|q| q.1).sum::<f64>() / n;
                let sxy: f64 = pairs.iter().map(|q| (q.0 - mx) * (q.1 - my)).sum();
                let sxx: f64 = pairs.iter().map(|q| (q.0 - mx) * (q.0 - mx)).sum();
                let beta_hat = -sxy / sxx;
                if beta_hat > 0.0 {
                    let beta = 0.9 * beta_hat;
                    let c2 = values.iter().fold(0.0f64, |acc, &(a, v)| acc.max(v * a.abs().max(1.0).powf(beta)));
                    report.c2ii = Verdict::Holds;
                    report.c2_const = Some(c2);
                    report.beta_exp = Some(beta);
                } else {
                    report.c2ii = Verdict::Fails;
                    report.beta_exp = Some(beta_hat);
                }
            }
            // (C.3): cells inside the window, then the far-cell ratio width/spacing
            let k_edge = g_kappa_inv(kappa, l_max).floor() as i64;
            let m_win = cell_mass_max(xi, kappa, -k_edge - 1, k_edge)?;
            if t.kappa >= kappa {
                let width = kappa * (k_edge as f64).max(1.0).powf(kappa - 1.0);
                let u = l_max;
                let spacing = t.scale * t.kappa * ((u / t.scale).powf(1.0 / t.kappa)).powf(t.kappa - 1.0);
                let far = (width / spacing).floor() as u32 + 2;
                report.m_cell = Some(m_win.max(far));
                report.c3 = if kappa < 1.0 || t.kappa == 1.0 { Verdict::Holds } else { Verdict::Undetermined };
            } else {
                report.m_cell = Some(m_win);
                report.c3 = Verdict::Fails;
            }
        }
        TailRule::Window { .. } => {
            let sup = m_signed_trend.iter().fold(0.0f64, |a, b| a.max(b.abs()));
            report.c0 = Some(sup);
            report.c1_const = Some(m_a);
            let k_edge = g_kappa_inv(kappa, l_max).floor() as i64;
            report.m_cell = Some(cell_mass_max(xi, kappa, -k_edge, k_edge - 1)?);
        }
    }
    Ok(report)
}

/// One cluster 𝔠_k = ξ ∩ [b̄_{k−1}, b̲_k].
#[derive(Debug, Clone, Serialize)]
pub struct Cluster {
    pub k: i64,
    /// b̄_{k−1}
    pub lo: f64,
    /// b̲_k
    pub hi: f64,
    /// c_k
    pub center: f64,
    /// Δ_k
    pub half_gap: f64,
    /// Δ̄_k = Δ_k + (ε_{k−1} ∧ ε_k)/2
    pub padded_half_gap: f64,
    /// ε_{k−1} ∧ ε_k
    pub separation: f64,
    pub members: Vec<(f64, u32)>,
    pub size: u32,
    pub center_is_point: bool,
}

impl Cluster {
    /// v_k with repeats, increasing.
    pub fn labeled(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for &(x, m) in &self.members {
            out.extend(std::iter::repeat_n(x, m as usize));
        }
        out
    }
}

/// Which admissible slot to take in each cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SlotChoice {
    First,
    Last,
}

#[derive(Debug, Clone, Serialize)]
pub struct ClusterDecomposition {
    pub kappa: f64,
    /// max cell mass over the cells the decomposition looked at
    pub m: u32,
    pub choice: SlotChoice,
    /// I_j = [b̲_j, b̄_j] for j ≥ 0; negative indices by mirror symmetry
    nonneg_intervals: Vec<(f64, f64)>,
    clusters: BTreeMap<i64, Cluster>,
}

impl ClusterDecomposition {
    /// I_k = [b̲_k, b̄_k].
    pub fn interval(&self, k: i64) -> Option<(f64, f64)> {
        if k >= 0 {
            self.nonneg_intervals.get(k as usize).copied()
        } else {
            self.nonneg_intervals.get((-k - 1) as usize).map(|&(a, b)| (-b, -a))
        }
    }

    /// ε_k = |I_k|.
    pub fn gap(&self, k: i64) -> Option<f64> {
        self.interval(k).map(|(a, b)| b - a)
    }

    pub fn cluster(&self, k: i64) -> Option<&Cluster> {
        self.clusters.get(&k)
    }

    pub fn clusters(&self) -> impl Iterator<Item = &Cluster> {
        self.clusters.values()
    }

    pub fn k_range(&self) -> (i64, i64) {
        let lo = *self.clusters.keys().next().unwrap_or(&0);
        let hi = *self.clusters.keys().next_back().unwrap_or(&0);
        (lo, hi)
    }
}

fn interval_free(xi: &Configuration, a: f64, b: f64) -> Result<bool, ConfigError> {
    Ok(xi.mass_in(a, b)? == 0 && xi.mass_in(-b, -a)? == 0)
}

/// Candidate intervals of cell j ≥ 0 in preference order.
fn cell_candidates(xi: &Configuration, kappa: f64, m: u32, j: i64, choice: SlotChoice) -> Result<Vec<(f64, f64)>, ConfigError> {
    let g0 = g_kappa(kappa, j as f64);
    let g1 = g_kappa(kappa, (j + 1) as f64);
    let slots = 2 * m.max(1) as usize + 1;
    let delta = (g1 - g0) / slots as f64;
    let mut out = Vec::new();
    let mut order: Vec<usize> = (0..slots).collect();
    if choice == SlotChoice::Last {
        order.reverse();
    }
    for i in order {
        let a = g0 + delta * i as f64;
        let b = if i + 1 == slots { g1 } else { g0 + delta * (i + 1) as f64 };
        if a > g0 && b < g1 && interval_free(xi, a, b)? {
            out.push((a, b));
        }
    }
    if out.is_empty() {
        // fall back to the widest free gap among points of ξ and −ξ in the cell
        let mut obstacles = vec![g0, g1];
        obstacles.extend(xi.points_in(g0, g1)?.iter().map(|p| p.0));
        obstacles.extend(xi.points_in(-g1, -g0)?.iter().map(|p| -p.0));
        obstacles.sort_by(f64::total_cmp);
        let mut best: Option<(f64, f64)> = None;
        for w in obstacles.windows(2) {
            if best.is_none_or(|(a, b)| w[1] - w[0] > b - a) {
                best = Some((w[0], w[1]));
            }
        }
        if let Some((a, b)) = best {
            if b - a > delta {
                let mid = 0.5 * (a + b);
                let (ja, jb) = (mid - 0.5 * delta, mid + 0.5 * delta);
                if ja > a && jb < b && interval_free(xi, ja, jb)? {
                    out.push((ja, jb));
                }
            }
        }
    }
    Ok(out)
}

/// Cluster decomposition of ξ for clusters k_lo..=k_hi.
pub fn decompose_clusters(xi: &Configuration, kappa: f64, k_lo: i64, k_hi: i64) -> Result<ClusterDecomposition, ConfigError> {
    decompose_clusters_with(xi, kappa, k_lo, k_hi, SlotChoice::First)
}

pub fn decompose_clusters_with(
    xi: &Configuration,
    kappa: f64,
    k_lo: i64,
    k_hi: i64,
    choice: SlotChoice,
) -> Result<ClusterDecomposition, ConfigError> {
    if !(kappa > 0.5 && kappa <= 1.0) {
        return Err(ConfigError::InvalidParameter(format!("κ must lie in (1/2, 1], got {kappa}")));
    }
    if k_lo > k_hi {
        return Err(ConfigError::InvalidParameter(format!("empty cluster range {k_lo}..={k_hi}")));
    }
    // nonnegative interval indices needed: k−1 and k for every cluster k
    let jmax = k_hi.max(-k_lo).max(0);
    let m = cell_mass_max(xi, kappa, -jmax - 1, jmax)?;
    let mut intervals: Vec<(f64, f64)> = Vec::with_capacity(jmax as usize + 1);
    let is_point = |c: f64| -> Result<bool, ConfigError> { Ok(xi.multiplicity_at(c)? > 0 || xi.multiplicity_at(-c)? > 0) };
    for j in 0..=jmax {
        let cands = cell_candidates(xi, kappa, m, j, choice)?;
        if cands.is_empty() {
            return Err(ConfigError::NoAdmissibleInterval { k: j });
        }
        let mut chosen = cands[0];
        if j >= 1 {
            let prev_hi = intervals[j as usize - 1].1;
            for &c in &cands {
                if !is_point(0.5 * (prev_hi + c.0))? {
                    chosen = c;
                    break;
                }
            }
        }
        intervals.push(chosen);
    }
    let mut dec = ClusterDecomposition { kappa, m, choice, nonneg_intervals: intervals, clusters: BTreeMap::new() };
    for k in k_lo..=k_hi {
        let (_, lo) = dec.interval(k - 1).expect("interval computed");
        let (hi, _) = dec.interval(k).expect("interval computed");
        let members = xi.points_in(lo, hi)?;
        let size = members.iter().map(|p| p.1).sum();
        let center = 0.5 * (lo + hi);
        let half_gap = 0.5 * (hi - lo);
        let separation = dec.gap(k - 1).unwrap().min(dec.gap(k).unwrap());
        let center_is_point = xi.multiplicity_at(center)? > 0;
        dec.clusters.insert(
            k,
            Cluster {
                k,
                lo,
                hi,
                center,
                half_gap,
                padded_half_gap: half_gap + 0.5 * separation,
                separation,
                members,
                size,
                center_is_point,
            },
        );
    }
    Ok(dec)
}
