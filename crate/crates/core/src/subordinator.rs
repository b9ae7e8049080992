//! One-sided α-stable subordinator density with Laplace transform `e^{-λ^α}`,
//! and the subordination route for fractional heat kernels.
//!
//! Large arguments use the convergent tail series; small arguments use Zolotarev's
//! integral representation over `φ ∈ (0, π)`, which is positive and free of
//! cancellation. At `α = 1/2` the closed form is used.

use crate::error::{Error, Result};
use crate::fit::loglog_fit;
use crate::quadrature::{composite, gauss_legendre, Rule};
use crate::spectral::{KernelSlice, Route};
use statrs::function::gamma::{gamma, ln_gamma};
use std::f64::consts::PI;

const SERIES_MAX_TERMS: usize = 400;
/// Number of e-folds kept in the Zolotarev integrand.
const ZOLOTAREV_EFOLDS: f64 = 45.0;

#[derive(Debug, Clone)]
pub struct SubordinatorDensity {
    alpha: f64,
    crossover: f64,
    rule: Rule,
}

impl SubordinatorDensity {
    pub fn new(alpha: f64) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::InvalidParameter(format!("alpha must lie in (0,1) (got {alpha})")));
        }
        Ok(Self { alpha, crossover: 1.0, rule: gauss_legendre(64) })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn crossover(&self) -> f64 {
        self.crossover
    }

    /// `η^α_1(s)`, closed form at `α = 1/2`.
    pub fn density(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        if self.alpha == 0.5 {
            return 0.5 / PI.sqrt() * s.powf(-1.5) * (-0.25 / s).exp();
        }
        self.density_general(s)
    }

    /// Series / integral evaluator without the `α = 1/2` shortcut.
    pub fn density_general(&self, s: f64) -> f64 {
        if s <= 0.0 {
            0.0
        } else if s > self.crossover {
            self.series_density(s)
        } else {
            self.zolotarev(s, false)
        }
    }

    /// `η^α_t(s) = t^{-1/α} η^α_1(s / t^{1/α})`.
    pub fn density_t(&self, t: f64, s: f64) -> f64 {
        let tau = t.powf(1.0 / self.alpha);
        self.density(s / tau) / tau
    }

    /// Distribution function `F(s) = ∫_0^s η^α_1`.
    pub fn cdf(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 0.0;
        }
        if s > self.crossover {
            1.0 - self.series_tail(s)
        } else {
            self.zolotarev(s, true)
        }
    }

    /// `1 - F(s)`, accurate in the far tail.
    pub fn tail(&self, s: f64) -> f64 {
        if s <= 0.0 {
            return 1.0;
        }
        if s > self.crossover {
            self.series_tail(s)
        } else {
            1.0 - self.zolotarev(s, true)
        }
    }

    fn series_terms(&self, s: f64, tail: bool) -> f64 {
        let a = self.alpha;
        let ls = s.ln();
        let mut sum = 0.0;
        let mut small = 0;
        for k in 1..=SERIES_MAX_TERMS {
            let kf = k as f64;
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            let sn = (PI * a * kf).sin();
            // Γ(αk+1)/(αk) = Γ(αk) for the tail series
            let lg = if tail { ln_gamma(a * kf) } else { ln_gamma(a * kf + 1.0) };
            let power = if tail { -a * kf * ls } else { -(a * kf + 1.0) * ls };
            let term = sign * sn * (lg - ln_gamma(kf + 1.0) + power).exp() / PI;
            sum += term;
            if term.abs() <= 1e-17 * sum.abs() {
                small += 1;
                if small >= 3 {
                    break;
                }
            } else {
                small = 0;
            }
        }
        sum
    }

    fn series_density(&self, s: f64) -> f64 {
        self.series_terms(s, false).max(0.0)
    }

    fn series_tail(&self, s: f64) -> f64 {
        self.series_terms(s, true).clamp(0.0, 1.0)
    }

    /// `ln A(φ)` for Zolotarev's function.
    fn ln_zolotarev_a(&self, phi: f64) -> f64 {
        let a = self.alpha;
        (a * (a * phi).sin().ln() + (1.0 - a) * ((1.0 - a) * phi).sin().ln() - phi.sin().ln())
            / (1.0 - a)
    }

    /// Density (`cdf = false`) or distribution function (`cdf = true`) by the φ-integral.
    fn zolotarev(&self, s: f64, cdf: bool) -> f64 {
        let a = self.alpha;
        let ly = -a / (1.0 - a) * s.ln();
        let y = ly.exp();
        let a0 = (a * a.ln() + (1.0 - a) * (1.0 - a).ln()) / (1.0 - a);
        let a0 = a0.exp();
        let base = a0 * y;
        if base > 745.0 {
            return 0.0;
        }
        // cut φ where the integrand has decayed by ZOLOTAREV_EFOLDS relative to φ → 0
        let excess = |phi: f64| y * (self.ln_zolotarev_a(phi).exp() - a0);
        let (mut lo, mut hi) = (0.0, PI);
        if excess(PI * (1.0 - 1e-12)) > ZOLOTAREV_EFOLDS {
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if excess(mid) > ZOLOTAREV_EFOLDS {
                    hi = mid;
                } else {
                    lo = mid;
                }
            }
        }
        let upper = hi;
        let integral: f64 = composite(&self.rule, &[0.0, 0.5 * upper, upper], 1)
            .into_iter()
            .map(|(phi, w)| {
                let la = self.ln_zolotarev_a(phi);
                let av = la.exp();
                let e = (-(av - a0) * y).exp();
                if cdf {
                    w * e
                } else {
                    w * av * e
                }
            })
            .sum();
        let damp = (-base).exp();
        if cdf {
            integral * damp / PI
        } else {
            let pref = a / ((1.0 - a) * PI) * (-(1.0 / (1.0 - a)) * s.ln()).exp();
            pref * integral * damp
        }
    }
}

/// Free-function form of [`SubordinatorDensity::density`].
pub fn density(alpha: f64, s: f64) -> Result<f64> {
    if !(s > 0.0) {
        return Err(Error::InvalidParameter(format!("density argument must be positive (got {s})")));
    }
    Ok(SubordinatorDensity::new(alpha)?.density(s))
}

/// Log-s Gauss–Legendre rule for `∫_0^∞ η^α_t(s) g(s) ds`.
#[derive(Debug, Clone)]
pub struct SubordinationQuad {
    pub s_lo: f64,
    pub s_hi: f64,
    pub panels: usize,
    pub nodes_per_panel: usize,
    /// Add `(1 - F(s_hi / t^{1/α}))·g(s_hi)` for the mass beyond `s_hi`.
    pub tail_closure: bool,
}

impl SubordinationQuad {
    /// Range `[s_lo, s_hi]` with `s_lo ≤ 1e-3 t^{1/α}` below any relevant head mass and
    /// `s_hi ≥ max(1e3 t^{1/α}, decay_time)`.
    pub fn for_time(dens: &SubordinatorDensity, t: f64, decay_time: f64) -> Self {
        let tau = t.powf(1.0 / dens.alpha());
        let mut lo = 1e-3;
        while dens.cdf(lo) > 1e-17 && lo > 1e-300 {
            lo *= 0.5;
        }
        let s_hi = (1e3 * tau).max(decay_time);
        Self { s_lo: lo * tau, s_hi, panels: 16, nodes_per_panel: 16, tail_closure: true }
    }

    pub fn node_count(&self) -> usize {
        self.panels * self.nodes_per_panel
    }

    /// `(s_q, w_q)` with `w_q` including `η^α_t(s_q)` and the log-s Jacobian.
    pub fn weighted_nodes(&self, dens: &SubordinatorDensity, t: f64) -> Result<Vec<(f64, f64)>> {
        let tau = t.powf(1.0 / dens.alpha());
        if !(self.s_lo < tau && self.s_hi > tau) {
            return Err(Error::Quadrature(format!(
                "range [{:e}, {:e}] does not bracket the scaling time {tau:e}",
                self.s_lo, self.s_hi
            )));
        }
        if self.node_count() < 64 {
            return Err(Error::Quadrature(format!("{} nodes (< 64)", self.node_count())));
        }
        let rule = gauss_legendre(self.nodes_per_panel);
        let mut out: Vec<(f64, f64)> =
            composite(&rule, &[self.s_lo.ln(), self.s_hi.ln()], self.panels)
                .into_iter()
                .map(|(v, w)| {
                    let s = v.exp();
                    (s, w * s * dens.density_t(t, s))
                })
                .collect();
        if self.tail_closure {
            out.push((self.s_hi, dens.tail(self.s_hi / tau)));
        }
        Ok(out)
    }
}

/// Source of heat kernels `K_s` on a common grid.
pub trait HeatSource {
    fn heat_kernel(&self, s: f64) -> Result<KernelSlice>;
}

/// `K_{α,t} = ∫ η^α_t(s) K_s ds` as a quadrature sum of heat-kernel tables.
pub fn subordinate_kernel(
    source: &dyn HeatSource,
    dens: &SubordinatorDensity,
    t: f64,
    quad: &SubordinationQuad,
) -> Result<KernelSlice> {
    let nodes = quad.weighted_nodes(dens, t)?;
    let mut acc: Option<KernelSlice> = None;
    for (s, w) in nodes {
        if w == 0.0 {
            continue;
        }
        let k = source.heat_kernel(s)?;
        match acc.as_mut() {
            None => acc = Some(k.scaled(w)),
            Some(a) => a.add_scaled(&k, w)?,
        }
    }
    let mut out = acc.ok_or_else(|| Error::Quadrature("all subordination weights vanish".into()))?;
    out.t = t;
    out.alpha = Some(dens.alpha());
    out.beta = None;
    out.route = Route::Subordinated;
    Ok(out)
}

/// `∫ η^α_t(s) e^{-sλ} ds` with the same nodes as [`subordinate_kernel`].
pub fn laplace_by_quadrature(
    dens: &SubordinatorDensity,
    t: f64,
    lambda: f64,
    quad: &SubordinationQuad,
) -> Result<f64> {
    Ok(quad.weighted_nodes(dens, t)?.into_iter().map(|(s, w)| w * (-s * lambda).exp()).sum())
}

#[derive(Debug, Clone, PartialEq)]
pub struct DensitySelftest {
    pub alpha: f64,
    pub normalization_defect: f64,
    pub tail_slope: f64,
    pub tail_r_squared: f64,
    /// `(γ, ∫ s^{-γ} η, Γ(1+γ/α)/Γ(1+γ))`.
    pub negative_moments: Vec<(f64, f64, f64)>,
    /// Largest relative gap between the series and the φ-integral on `[0.5, 2]`.
    pub overlap_gap: f64,
    /// `sup_{s ∈ [1e-2, 1e4]} s^{1+α} η(s)`.
    pub power_bound: f64,
}

/// `∫_lo^hi g(s) ds` on log s with composite Gauss–Legendre.
fn log_integral(lo: f64, hi: f64, panels: usize, g: impl Fn(f64) -> f64) -> f64 {
    let rule = gauss_legendre(16);
    composite(&rule, &[lo.ln(), hi.ln()], panels)
        .into_iter()
        .map(|(v, w)| {
            let s = v.exp();
            w * s * g(s)
        })
        .sum()
}

pub fn density_selftest(alpha: f64) -> Result<DensitySelftest> {
    let d = SubordinatorDensity::new(alpha)?;
    let mut lo = 1.0;
    while d.cdf(lo) > 1e-18 && lo > 1e-300 {
        lo *= 0.5;
    }
    let hi = 1e6;
    let body = log_integral(lo, hi, 64, |s| d.density(s));
    let total = body + d.tail(hi) + d.cdf(lo);
    let normalization_defect = (total - 1.0).abs();

    let xs: Vec<f64> = (0..=40).map(|k| 10f64.powf(2.0 + 2.0 * k as f64 / 40.0)).collect();
    let ys: Vec<f64> = xs.iter().map(|&s| d.density(s)).collect();
    let fit = loglog_fit(&xs, &ys);

    let mut negative_moments = Vec::new();
    for g in [0.5, 1.0] {
        let v = log_integral(lo, hi, 64, |s| s.powf(-g) * d.density(s));
        // leading tail term α/Γ(1-α) s^{-1-α}
        let tail = alpha / gamma(1.0 - alpha) * hi.powf(-g - alpha) / (g + alpha);
        negative_moments.push((g, v + tail, gamma(1.0 + g / alpha) / gamma(1.0 + g)));
    }

    let mut overlap_gap: f64 = 0.0;
    for k in 0..=20 {
        let s = 0.5 * 4f64.powf(k as f64 / 20.0);
        let a = d.series_density(s);
        let b = d.zolotarev(s, false);
        overlap_gap = overlap_gap.max((a - b).abs() / b.abs().max(1e-300));
    }
    let power_bound = (0..=120)
        .map(|k| {
            let s = 10f64.powf(-2.0 + 6.0 * k as f64 / 120.0);
            s.powf(1.0 + alpha) * d.density(s)
        })
        .fold(0.0, f64::max);
    Ok(DensitySelftest {
        alpha,
        normalization_defect,
        tail_slope: fit.slope,
        tail_r_squared: fit.r_squared,
        negative_moments,
        overlap_gap,
        power_bound,
    })
}
