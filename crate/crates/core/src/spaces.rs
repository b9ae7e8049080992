//! Campanato/Lipschitz norms, Hardy-space atoms, square functions, Carleson
//! measures, and the norm-equivalence experiment.
//!
//! Conventions:
//! * `D_t = t^β ∂_t^β e^{-tL^α}` acts through the multiplier `(tλ^α)^β e^{-tλ^α}`.
//! * Time integrals `∫_0^∞ · dt/t` use the trapezoid rule in `log t` on a [`LogTimeGrid`]
//!   whose truncated tails are below `1e-8` relative for the positive spectrum.
//! * Ball averages use the exact continuum volume `|B|` times the mean over grid members.
//! * Sups of `N₂ … N₅` run over the inner half box.

use crate::error::{Error, Result};
use crate::grid::{ball_points, unit_ball_volume, Grid, GridFunction, Point};
use crate::potential::AuxFunction;
use crate::spectral::{Multiplier, SpectralDecomposition};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use statrs::function::gamma::{gamma, gamma_ur};

const TAIL: f64 = 1e-8;

/// `2^{2β} / Γ(2β)`, the reproducing-formula constant.
pub fn reproducing_constant(beta: f64) -> f64 {
    4f64.powf(beta) / gamma(2.0 * beta)
}

/// `Γ(2β) / 2^{2β}`, the pairing constant.
pub fn pairing_constant(beta: f64) -> f64 {
    1.0 / reproducing_constant(beta)
}

/// `2^{-β} Γ(2β)^{1/2}`, the g-function isometry constant.
pub fn g_constant(beta: f64) -> f64 {
    pairing_constant(beta).sqrt()
}

/// Log-spaced times with trapezoid weights for `dt/t`.
#[derive(Debug, Clone, PartialEq)]
pub struct LogTimeGrid {
    pub times: Vec<f64>,
    pub weights: Vec<f64>,
}

impl LogTimeGrid {
    pub fn new(t_min: f64, t_max: f64, j: usize) -> Result<Self> {
        if !(t_min > 0.0 && t_max > t_min) || j < 16 {
            return Err(Error::InvalidParameter(format!(
                "time grid needs 0 < t_min < t_max and J ≥ 16 (got {t_min:e}, {t_max:e}, {j})"
            )));
        }
        let step = (t_max / t_min).ln() / (j - 1) as f64;
        let times = (0..j).map(|k| t_min * (step * k as f64).exp()).collect();
        let weights = (0..j).map(|k| if k == 0 || k + 1 == j { 0.5 * step } else { step }).collect();
        Ok(Self { times, weights })
    }

    /// Covers `∫ (tμ)^e e^{-2tμ} dt/t` for `μ = λ^α` over the positive spectrum with
    /// both truncated tails below `1e-8` of the full integral.
    pub fn for_spectrum(sd: &SpectralDecomposition, alpha: f64, exponent: f64, j: usize) -> Result<Self> {
        let mu_min = sd.lambda_min_positive().powf(alpha);
        let mu_max = sd.lambda_max().powf(alpha);
        Self::for_rates(mu_min, mu_max, exponent, j)
    }

    pub fn for_rates(mu_min: f64, mu_max: f64, exponent: f64, j: usize) -> Result<Self> {
        let e = exponent;
        if !(e > 0.0 && mu_min > 0.0 && mu_max >= mu_min) {
            return Err(Error::InvalidParameter("invalid rates for the time grid".into()));
        }
        // ∫_0^a (tμ)^e e^{-2tμ} dt/t ≤ (aμ)^e / e;  full integral Γ(e)/2^e
        let full = gamma(e) / 2f64.powf(e);
        let t_min = (TAIL * e * full).powf(1.0 / e) / mu_max;
        // upper tail Γ(e, 2bμ)/2^e = full·Q(e, 2bμ)
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        while gamma_ur(e, hi) > TAIL {
            hi *= 2.0;
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if gamma_ur(e, mid) > TAIL {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let t_max = hi / (2.0 * mu_min);
        Self::new(t_min, t_max.max(2.0 * t_min), j)
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }
}

fn check_zero_mode(sd: &SpectralDecomposition, f: &GridFunction) -> Result<()> {
    let overlap = sd.zero_mode_overlap(f);
    if overlap.abs() > 1e-10 * f.l2_norm().max(1e-300) {
        return Err(Error::ZeroMode(overlap));
    }
    Ok(())
}

/// `D_t f` for every time of the grid.
pub fn d_slices(
    sd: &SpectralDecomposition,
    alpha: f64,
    beta: f64,
    f: &GridFunction,
    tg: &LogTimeGrid,
) -> Result<Vec<GridFunction>> {
    slices(sd, f, tg, |t| Multiplier::FracDerivative { alpha, beta, t })
}

fn slices(
    sd: &SpectralDecomposition,
    f: &GridFunction,
    tg: &LogTimeGrid,
    make: impl Fn(f64) -> Multiplier + Sync,
) -> Result<Vec<GridFunction>> {
    if f.grid() != &sd.grid {
        return Err(Error::ShapeMismatch { expected: sd.grid.len(), got: f.values().len() });
    }
    f.check_finite()?;
    let c = sd.coefficients(f);
    tg.times
        .par_iter()
        .map(|&t| {
            let w = sd.multiplier_values(&make(t))?;
            let ck: Vec<f64> = c.iter().zip(&w).map(|(a, b)| a * b).collect();
            Ok(sd.synthesize(&ck))
        })
        .collect()
}

/// `g(f)(x) = (∫ |D_t f(x)|² dt/t)^{1/2}`.
pub fn g_function(
    sd: &SpectralDecomposition,
    alpha: f64,
    beta: f64,
    f: &GridFunction,
    tg: &LogTimeGrid,
) -> Result<GridFunction> {
    check_zero_mode(sd, f)?;
    let ds = d_slices(sd, alpha, beta, f, tg)?;
    let mut acc = vec![0.0; sd.grid.len()];
    for (d, w) in ds.iter().zip(&tg.weights) {
        for (a, v) in acc.iter_mut().zip(d.values()) {
            *a += w * v * v;
        }
    }
    GridFunction::new(&sd.grid, acc.into_iter().map(f64::sqrt).collect())
}

/// Area function: `S(f)(x)² = ∫∫_{|x-y| < t^{1/2α}} |D_t f(y)|² dy dt / t^{n/2α+1}`.
///
/// Cones narrower than one grid cell use the column `y = x` with the exact ball volume.
pub fn area_function(
    sd: &SpectralDecomposition,
    alpha: f64,
    beta: f64,
    f: &GridFunction,
    tg: &LogTimeGrid,
) -> Result<GridFunction> {
    check_zero_mode(sd, f)?;
    let grid = &sd.grid;
    let n = grid.dim();
    let hn = grid.weight();
    let ds = d_slices(sd, alpha, beta, f, tg)?;
    let points: Vec<Point> = (0..grid.len()).map(|i| grid.point(i)).collect();
    let mut acc = vec![0.0; grid.len()];
    for ((d, &w), &t) in ds.iter().zip(&tg.weights).zip(&tg.times) {
        let s = t.powf(0.5 / alpha);
        let scale = w / s.powi(n as i32);
        let sq: Vec<f64> = d.values().iter().map(|v| v * v).collect();
        let contrib: Vec<f64> = (0..grid.len())
            .into_par_iter()
            .map(|x| {
                let mut sum = 0.0;
                let mut count = 0usize;
                for (y, py) in points.iter().enumerate() {
                    if grid.distance(&points[x], py) < s {
                        sum += sq[y];
                        count += 1;
                    }
                }
                if count <= 1 {
                    unit_ball_volume(n) * s.powi(n as i32) * sq[x]
                } else {
                    sum * hn
                }
            })
            .collect();
        for (a, c) in acc.iter_mut().zip(contrib) {
            *a += scale * c;
        }
    }
    GridFunction::new(grid, acc.into_iter().map(f64::sqrt).collect())
}

/// `(Σ |f|^p hⁿ)^{1/p}`.
pub fn lp_norm(f: &GridFunction, p: f64) -> f64 {
    let w = f.grid().weight();
    (f.values().iter().map(|v| v.abs().powf(p)).sum::<f64>() * w).powf(1.0 / p)
}

/// `c_{α,β} ∫ D_t(D_t f) dt/t` compared to `f`: returns `‖· − f‖₂ / ‖f‖₂`.
pub fn reproducing_check(
    sd: &SpectralDecomposition,
    alpha: f64,
    beta: f64,
    f: &GridFunction,
    tg: &LogTimeGrid,
) -> Result<f64> {
    check_zero_mode(sd, f)?;
    let c = sd.coefficients(f);
    let mut total = vec![0.0; c.len()];
    for (&t, &w) in tg.times.iter().zip(&tg.weights) {
        let m = sd.multiplier_values(&Multiplier::FracDerivative { alpha, beta, t })?;
        for (acc, mk) in total.iter_mut().zip(&m) {
            *acc += w * mk * mk;
        }
    }
    let cab = reproducing_constant(beta);
    let rec: Vec<f64> = c.iter().zip(&total).map(|(a, s)| cab * a * s).collect();
    let out = sd.synthesize(&rec);
    let diff: Vec<f64> = out.values().iter().zip(f.values()).map(|(a, b)| a - b).collect();
    let diff = GridFunction::new(&sd.grid, diff)?;
    Ok(diff.l2_norm() / f.l2_norm())
}

/// `[∬ D_t f · D_t a dx dt/t] / [C_{α,β} ∫ f a dx]`.
pub fn duality_pairing_check(
    f: &GridFunction,
    a: &GridFunction,
    sd: &SpectralDecomposition,
    alpha: f64,
    beta: f64,
    tg: &LogTimeGrid,
) -> Result<f64> {
    let pair = f.dot(a);
    if pair.abs() <= 1e-12 * f.l2_norm() * a.l2_norm() {
        return Err(Error::OrthogonalPair(pair));
    }
    check_zero_mode(sd, f)?;
    check_zero_mode(sd, a)?;
    let df = d_slices(sd, alpha, beta, f, tg)?;
    let da = d_slices(sd, alpha, beta, a, tg)?;
    let lhs: f64 = df.iter().zip(&da).zip(&tg.weights).map(|((u, v), w)| w * u.dot(v)).sum();
    Ok(lhs / (pairing_constant(beta) * pair))
}

/// Balls used by the BMO and Carleson sups.
#[derive(Debug, Clone, PartialEq)]
pub struct BallFamily {
    /// `(center index, radius, members)`.
    pub balls: Vec<(usize, f64, Vec<usize>)>,
}

impl BallFamily {
    /// Grid-centred balls in the inner box with radii `radii ∪ {ρ(x_B)}`, contained in the inner box.
    pub fn new(grid: &Grid, radii: &[f64], aux: &AuxFunction) -> Result<Self> {
        let half = 0.5 * grid.half_width();
        let n = grid.dim();
        let mut balls = Vec::new();
        for c in grid.inner_half_indices() {
            let p = grid.point(c);
            let mut rs: Vec<f64> = radii.to_vec();
            let rho = aux.at(c);
            if rho.is_finite() {
                rs.push(rho);
            }
            for r in rs {
                if p[..n].iter().all(|&x| x - r >= -half && x + r <= half) {
                    if let Ok(b) = ball_points(grid, &p, r) {
                        balls.push((c, r, b.members));
                    }
                }
            }
        }
        if balls.is_empty() {
            return Err(Error::NoAdmissibleBall("no ball of the family fits in the inner box"));
        }
        Ok(Self { balls })
    }

    /// Log-spaced radii in `[h, L/4]`.
    pub fn default_radii(grid: &Grid, count: usize) -> Vec<f64> {
        let lo = grid.spacing();
        let hi = 0.25 * grid.half_width();
        (0..count).map(|k| lo * (hi / lo).powf(k as f64 / (count - 1).max(1) as f64)).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BmoParams {
    pub gamma: f64,
    pub radii: Vec<f64>,
}

impl BmoParams {
    pub fn new(grid: &Grid, gamma: f64) -> Result<Self> {
        if !(gamma > 0.0 && gamma <= 1.0) {
            return Err(Error::InvalidParameter(format!("gamma must lie in (0,1] (got {gamma})")));
        }
        Ok(Self { gamma, radii: BallFamily::default_radii(grid, 24) })
    }
}

fn bmo_sup(f: &GridFunction, p: &BmoParams, aux: &AuxFunction, small_only: bool) -> Result<f64> {
    f.check_finite()?;
    let grid = f.grid();
    let n = grid.dim();
    let family = BallFamily::new(grid, &p.radii, aux)?;
    let v = f.values();
    let best = family
        .balls
        .par_iter()
        .map(|(c, r, members)| {
            let small = *r < aux.at(*c);
            if small_only && !small {
                return 0.0;
            }
            let k = members.len() as f64;
            let centre = if small { members.iter().map(|&i| v[i]).sum::<f64>() / k } else { 0.0 };
            let osc = members.iter().map(|&i| (v[i] - centre).abs()).sum::<f64>() / k;
            let vol = unit_ball_volume(n) * r.powi(n as i32);
            vol.powf(-p.gamma / n as f64) * osc
        })
        .reduce(|| 0.0, f64::max);
    Ok(best)
}

/// `sup_B |B|^{-1-γ/n} ∫_B |f − f(B,V)|`, `f(B,V)` = mean for `r_B < ρ(x_B)`, else 0.
pub fn bmo_norm(f: &GridFunction, p: &BmoParams, aux: &AuxFunction) -> Result<f64> {
    bmo_sup(f, p, aux, false)
}

/// The same sup restricted to balls with `r_B < ρ(x_B)` (invariant under adding constants).
pub fn bmo_small_ball_norm(f: &GridFunction, p: &BmoParams, aux: &AuxFunction) -> Result<f64> {
    bmo_sup(f, p, aux, true)
}

/// `max( sup |f(x)−f(y)|/|x−y|^γ, sup |f(x)|/ρ(x)^γ )` over inner-box points.
pub fn lipschitz_norm(f: &GridFunction, gamma: f64, aux: &AuxFunction) -> f64 {
    let grid = f.grid();
    let pts = grid.inner_half_indices();
    let v = f.values();
    let holder = pts
        .par_iter()
        .map(|&i| {
            pts.iter()
                .filter(|&&j| j != i)
                .map(|&j| (v[i] - v[j]).abs() / grid.point_distance(i, j).powf(gamma))
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max);
    let size = pts.iter().map(|&i| v[i].abs() / aux.at(i).powf(gamma)).fold(0.0, f64::max);
    holder.max(size)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AtomKind {
    /// Zero-mean difference of two bumps.
    Oscillating,
    /// Single bump, only for `r_B ≥ ρ(x_B)/4`.
    Plain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Atom {
    pub function: GridFunction,
    pub center: usize,
    pub radius: f64,
    /// `p = n/(n+γ)`.
    pub p: f64,
    pub cancellation: bool,
}

fn bump(u: f64) -> f64 {
    if u < 1.0 {
        (1.0 - u * u).powi(2)
    } else {
        0.0
    }
}

pub fn make_atom(
    grid: &Grid,
    center: usize,
    radius: f64,
    gamma: f64,
    aux: &AuxFunction,
    kind: AtomKind,
) -> Result<Atom> {
    let n = grid.dim();
    let rho = aux.at(center);
    if radius > rho {
        return Err(Error::InvalidParameter(format!("atom radius {radius} exceeds ρ(x_B) = {rho}")));
    }
    if kind == AtomKind::Plain && radius < 0.25 * rho {
        return Err(Error::InvalidParameter(format!(
            "plain atom needs r_B ≥ ρ(x_B)/4 (r_B = {radius}, ρ = {rho})"
        )));
    }
    let c = grid.point(center);
    let ball = ball_points(grid, &c, radius)?;
    let mut values = vec![0.0; grid.len()];
    for &i in &ball.members {
        let p = grid.point(i);
        let rel: Vec<f64> = (0..n).map(|d| p[d] - c[d]).collect();
        values[i] = match kind {
            AtomKind::Plain => bump(rel.iter().map(|v| v * v).sum::<f64>().sqrt() / radius),
            AtomKind::Oscillating => {
                let half = 0.5 * radius;
                let dist = |shift: f64| {
                    let mut s = (rel[0] - shift).powi(2);
                    s += rel[1..].iter().map(|v| v * v).sum::<f64>();
                    s.sqrt() / half
                };
                bump(dist(-half)) - bump(dist(half))
            }
        };
    }
    let cancellation = kind == AtomKind::Oscillating;
    if cancellation {
        let mean = ball.members.iter().map(|&i| values[i]).sum::<f64>() / ball.members.len() as f64;
        for &i in &ball.members {
            values[i] -= mean;
        }
    }
    let sup = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if sup == 0.0 {
        return Err(Error::EmptyBall { radius, spacing: grid.spacing() });
    }
    let p = n as f64 / (n as f64 + gamma);
    let target = ball.volume(n).powf(-1.0 / p);
    for v in &mut values {
        *v *= target / sup;
    }
    Ok(Atom { function: GridFunction::new(grid, values)?, center, radius, p, cancellation })
}

/// Random atom: centre in the inner box where `ρ ≥ 2h`, log-uniform radius in `[2h, min(ρ, L/8)]`.
pub fn random_atom(grid: &Grid, gamma: f64, aux: &AuxFunction, rng: &mut ChaCha8Rng) -> Result<Atom> {
    let lo = 2.0 * grid.spacing();
    let pts: Vec<usize> = grid.inner_half_indices().into_iter().filter(|&i| aux.at(i) >= lo).collect();
    if pts.is_empty() {
        return Err(Error::InvalidParameter("ρ below two grid cells everywhere: no resolvable atom".into()));
    }
    let center = pts[rng.gen_range(0..pts.len())];
    let hi = aux.at(center).min(grid.half_width() / 8.0);
    let radius = lo * (hi / lo).powf(rng.gen::<f64>());
    let plain_ok = radius >= 0.25 * aux.at(center);
    let kind = if plain_ok && rng.gen_bool(0.5) { AtomKind::Plain } else { AtomKind::Oscillating };
    make_atom(grid, center, radius, gamma, aux, kind)
}

/// Time-indexed nonnegative density on the grid with `dt/t` weights.
#[derive(Debug, Clone, PartialEq)]
pub struct SpaceTimeField {
    pub grid: Grid,
    pub times: Vec<f64>,
    pub weights: Vec<f64>,
    /// `values[j][i] = F(x_i, t_j)`.
    pub values: Vec<Vec<f64>>,
    /// Carleson box height is `r^{height_exponent}` in the field's time variable.
    pub height_exponent: f64,
}

impl SpaceTimeField {
    pub fn new(grid: &Grid, tg: &LogTimeGrid, values: Vec<Vec<f64>>, height_exponent: f64) -> Result<Self> {
        if tg.len() < 16 {
            return Err(Error::InvalidParameter("space-time field needs at least 16 times".into()));
        }
        if values.len() != tg.len() || values.iter().any(|v| v.len() != grid.len()) {
            return Err(Error::ShapeMismatch { expected: tg.len() * grid.len(), got: values.iter().map(Vec::len).sum() });
        }
        if let Some(i) = values.iter().flatten().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(i % grid.len()));
        }
        Ok(Self {
            grid: grid.clone(),
            times: tg.times.clone(),
            weights: tg.weights.clone(),
            values,
            height_exponent,
        })
    }

    /// `ν(B × (0, r^e))` for a ball given by its members.
    pub fn box_mass(&self, radius: f64, members: &[usize]) -> f64 {
        let top = radius.powf(self.height_exponent);
        let hn = self.grid.weight();
        self.times
            .iter()
            .zip(&self.weights)
            .zip(&self.values)
            .filter(|((t, _), _)| **t <= top)
            .map(|((_, w), v)| w * members.iter().map(|&i| v[i]).sum::<f64>() * hn)
            .sum()
    }
}

/// `sup_B ν(B × (0, r_B^e)) / |B|^κ`.
pub fn carleson_norm(field: &SpaceTimeField, kappa: f64, balls: &BallFamily) -> Result<f64> {
    if balls.balls.is_empty() {
        return Err(Error::NoAdmissibleBall("empty ball family"));
    }
    let n = field.grid.dim();
    Ok(balls
        .balls
        .par_iter()
        .map(|(_, r, members)| {
            let vol = unit_ball_volume(n) * r.powi(n as i32);
            field.box_mass(*r, members) / vol.powf(kappa)
        })
        .reduce(|| 0.0, f64::max))
}

/// Field `|D_t f|²` (height `r^{2α}`), the Carleson density of the `D`-characterisation.
pub fn d_field(
    sd: &SpectralDecomposition,
    alpha: f64,
    beta: f64,
    f: &GridFunction,
    tg: &LogTimeGrid,
) -> Result<SpaceTimeField> {
    let ds = d_slices(sd, alpha, beta, f, tg)?;
    let values = ds.into_iter().map(|d| d.values().iter().map(|v| v * v).collect()).collect();
    SpaceTimeField::new(&sd.grid, tg, values, 2.0 * alpha)
}

/// Density of `dν_α = |s ∇ e^{-s^{2α}L^α} f|² dx ds/s` written in `τ = s^{2α}`:
/// `τ^{1/α} |∇ e^{-τL^α} f|² · (1/2α) dτ/τ`, height `r^{2α}`.
pub fn gradient_field(
    sd: &SpectralDecomposition,
    alpha: f64,
    f: &GridFunction,
    tg: &LogTimeGrid,
) -> Result<SpaceTimeField> {
    let us = slices(sd, f, tg, |t| Multiplier::FracHeat { alpha, t })?;
    let values = us
        .iter()
        .zip(&tg.times)
        .map(|(u, &tau)| {
            let g = crate::fracderiv::grid_gradient(u)?;
            let scale = tau.powf(1.0 / alpha) / (2.0 * alpha);
            Ok((0..u.values().len()).map(|i| scale * g.norm_at(i).powi(2)).collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    SpaceTimeField::new(&sd.grid, tg, values, 2.0 * alpha)
}

/// Suite member for the equivalence experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteFunction {
    pub label: String,
    pub f: GridFunction,
}

/// Smooth cutoff: 1 on the inner box, 0 beyond `3L/4` along every axis.
pub fn smooth_cutoff(grid: &Grid) -> GridFunction {
    let l = grid.half_width();
    let n = grid.dim();
    let step = |z: f64| {
        if z <= 0.0 {
            0.0
        } else if z >= 1.0 {
            1.0
        } else {
            let a = (-1.0 / z).exp();
            let b = (-1.0 / (1.0 - z)).exp();
            a / (a + b)
        }
    };
    grid.from_fn(|p| (0..n).map(|d| step((0.75 * l - p[d].abs()) / (0.25 * l))).product())
}

/// Ten functions: truncated `|x - c|^γ` profiles, atoms, and seeded low-frequency mixtures.
pub fn equivalence_suite(grid: &Grid, gamma: f64, aux: &AuxFunction, seed: u64) -> Result<Vec<SuiteFunction>> {
    let n = grid.dim();
    let l = grid.half_width();
    let chi = smooth_cutoff(grid);
    let mut out = Vec::new();
    let times = |g: GridFunction| {
        let v = g.values().iter().zip(chi.values()).map(|(a, b)| a * b).collect();
        GridFunction::new(grid, v).expect("shape")
    };
    for (k, shift) in [0.0, 0.3 * l / 2.0, -0.2 * l / 2.0].into_iter().enumerate() {
        let f = grid.from_fn(|p| {
            let mut r2 = (p[0] - shift).powi(2);
            r2 += p[1..n].iter().map(|v| v * v).sum::<f64>();
            r2.sqrt().powf(gamma)
        });
        out.push(SuiteFunction { label: format!("power_profile_{k}"), f: times(f) });
    }
    let capped = grid.from_fn(|p| {
        let r = p[..n].iter().map(|v| v * v).sum::<f64>().sqrt();
        r.min(0.125 * l).powf(gamma)
    });
    out.push(SuiteFunction { label: "capped_power_profile".into(), f: times(capped) });

    let inner = grid.inner_half_indices();
    let min_r = 2.0 * grid.spacing();
    let start = inner.len() / 3;
    let centre = (0..inner.len())
        .flat_map(|k| [start + k, start.wrapping_sub(k)])
        .filter_map(|i| inner.get(i).copied())
        .find(|&i| aux.at(i) >= min_r)
        .ok_or(Error::NoAdmissibleBall("suite atom"))?;
    let rho = aux.at(centre);
    for (k, frac) in [1.0, 0.35].into_iter().enumerate() {
        let r = (frac * rho).min(l / 8.0).max(min_r);
        let a = make_atom(grid, centre, r, gamma, aux, AtomKind::Oscillating)?;
        out.push(SuiteFunction { label: format!("atom_{k}"), f: a.function });
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for k in 0..4 {
        let terms: Vec<([f64; 3], f64, f64)> = (0..4)
            .map(|_| {
                let mut freq = [0.0; 3];
                for fd in freq.iter_mut().take(n) {
                    *fd = std::f64::consts::PI * rng.gen_range(1..=4) as f64 / l;
                }
                (freq, rng.gen_range(0.0..std::f64::consts::TAU), rng.gen_range(-1.0..1.0))
            })
            .collect();
        let f = grid.from_fn(|p| {
            terms
                .iter()
                .map(|(fr, ph, amp)| amp * ((0..n).map(|d| fr[d] * p[d]).sum::<f64>() + ph).cos())
                .sum()
        });
        out.push(SuiteFunction { label: format!("low_frequency_{k}"), f: times(f) });
    }
    Ok(out)
}

/// The five norm functionals of one function.
#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceRow {
    pub label: String,
    /// `[N₁, …, N₅]`.
    pub norms: [f64; 5],
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceTable {
    pub rows: Vec<EquivalenceRow>,
    pub excluded: Vec<String>,
    /// `((j, k), min N_j/N_k, max N_j/N_k)` for `j < k`.
    pub ratio_ranges: Vec<((usize, usize), f64, f64)>,
    /// Smallest `c` with every ratio in `[1/c, c]`.
    pub c_star: f64,
}

/// Inputs shared by every suite member.
pub struct EquivalenceSetup<'a> {
    pub sd: &'a SpectralDecomposition,
    pub aux: &'a AuxFunction,
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub tg: &'a LogTimeGrid,
}

fn inner_sup(grid: &Grid, v: impl Fn(usize) -> f64) -> f64 {
    grid.inner_half_indices().into_iter().map(v).fold(0.0, f64::max)
}

/// `[N₁ … N₅]` for one function.
pub fn norm_functionals(setup: &EquivalenceSetup<'_>, f: &GridFunction) -> Result<[f64; 5]> {
    let EquivalenceSetup { sd, aux, alpha, beta, gamma, tg } = *setup;
    let grid = &sd.grid;
    let n = grid.dim() as f64;
    let params = BmoParams::new(grid, gamma)?;
    let n1 = bmo_norm(f, &params, aux)?;

    let ds = d_slices(sd, alpha, beta, f, tg)?;
    let n2 = ds
        .iter()
        .zip(&tg.times)
        .map(|(d, &t)| t.powf(-gamma / (2.0 * alpha)) * inner_sup(grid, |i| d.values()[i].abs()))
        .fold(0.0, f64::max);

    let balls = BallFamily::new(grid, &params.radii, aux)?;
    let kappa = 1.0 + 2.0 * gamma / n;
    let dfield = SpaceTimeField::new(
        grid,
        tg,
        ds.iter().map(|d| d.values().iter().map(|v| v * v).collect()).collect(),
        2.0 * alpha,
    )?;
    let n3 = carleson_norm(&dfield, kappa, &balls)?.sqrt();

    let us = slices(sd, f, tg, |t| Multiplier::FracHeat { alpha, t })?;
    let time_parts = slices(sd, f, tg, |t| Multiplier::FracDerivative { alpha, beta: 0.5 / alpha, t })?;
    let mut n4 = 0.0f64;
    for ((u, tp), &t) in us.iter().zip(&time_parts).zip(&tg.times) {
        let s = t.powf(0.5 / alpha);
        let g = crate::fracderiv::grid_gradient(u)?;
        // s·∂_t^{1/2α}u equals the D-operator with β = 1/2α
        let sup = inner_sup(grid, |i| (s * s * g.norm_at(i).powi(2) + tp.values()[i].powi(2)).sqrt());
        n4 = n4.max(t.powf(-gamma / (2.0 * alpha)) * sup);
    }

    let gfield = gradient_field(sd, alpha, f, tg)?;
    let n5 = carleson_norm(&gfield, kappa, &balls)?.sqrt();
    Ok([n1, n2, n3, n4, n5])
}

pub fn equivalence_experiment(suite: &[SuiteFunction], setup: &EquivalenceSetup<'_>) -> Result<EquivalenceTable> {
    let lim = (2.0 * setup.alpha).min(2.0 * setup.alpha * setup.beta);
    if !(setup.gamma > 0.0 && setup.gamma < lim) {
        return Err(Error::InvalidParameter(format!(
            "gamma must satisfy 0 < gamma < min(2α, 2αβ) = {lim} (got {})",
            setup.gamma
        )));
    }
    let mut rows = Vec::new();
    let mut excluded = Vec::new();
    for s in suite {
        let norms = norm_functionals(setup, &s.f)?;
        if norms[0] == 0.0 {
            excluded.push(s.label.clone());
        } else {
            rows.push(EquivalenceRow { label: s.label.clone(), norms });
        }
    }
    let mut ratio_ranges = Vec::new();
    let mut c_star = 1.0f64;
    for j in 0..5 {
        for k in (j + 1)..5 {
            let rs: Vec<f64> = rows.iter().map(|r| r.norms[j] / r.norms[k]).collect();
            let lo = rs.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = rs.iter().copied().fold(0.0, f64::max);
            c_star = c_star.max(hi).max(1.0 / lo);
            ratio_ranges.push(((j, k), lo, hi));
        }
    }
    Ok(EquivalenceTable { rows, excluded, ratio_ranges, c_star })
}
