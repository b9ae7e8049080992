//! Potential catalog, ball integrals, reverse Hölder diagnostics and the critical radius ρ.

use crate::error::{Error, Result};
use crate::grid::{unit_ball_volume, unit_sphere_area, Ball, Grid, Point};
use crate::quadrature::{gauss_legendre, simpson, Rule};
use std::collections::HashMap;

/// Nonnegative potential from a small catalog.
#[derive(Debug, Clone, PartialEq)]
pub enum PotentialSpec {
    Zero,
    Constant(f64),
    /// `coef · |x|^sigma`.
    Power { coef: f64, sigma: f64 },
    /// `height` on the sub-box `[lo, hi]`, zero elsewhere.
    Well { lo: Point, hi: Point, height: f64 },
    Sum(Vec<PotentialSpec>),
}

impl PotentialSpec {
    pub fn constant(c: f64) -> Result<Self> {
        let s = Self::Constant(c);
        s.validate()?;
        Ok(s)
    }
    pub fn power(coef: f64, sigma: f64) -> Result<Self> {
        let s = Self::Power { coef, sigma };
        s.validate()?;
        Ok(s)
    }
    pub fn well(lo: Point, hi: Point, height: f64) -> Result<Self> {
        let s = Self::Well { lo, hi, height };
        s.validate()?;
        Ok(s)
    }
    pub fn sum(parts: Vec<PotentialSpec>) -> Result<Self> {
        let s = Self::Sum(parts);
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidPotential(m));
        match self {
            Self::Zero => Ok(()),
            Self::Constant(c) if !(*c > 0.0 && c.is_finite()) => {
                bad(format!("constant must be positive (got {c}); use the zero kind for V = 0"))
            }
            Self::Constant(_) => Ok(()),
            Self::Power { coef, sigma } => {
                if !(*sigma > 0.0 && sigma.is_finite()) {
                    bad(format!("power exponent {sigma} not in catalog (sigma > 0 required)"))
                } else if !(*coef > 0.0 && coef.is_finite()) {
                    bad(format!("power coefficient must be positive (got {coef})"))
                } else {
                    Ok(())
                }
            }
            Self::Well { lo, hi, height } => {
                if !(*height > 0.0 && height.is_finite()) {
                    bad(format!("well height must be positive (got {height})"))
                } else if lo.iter().zip(hi).any(|(a, b)| a > b) {
                    bad("well lower corner exceeds upper corner".into())
                } else {
                    Ok(())
                }
            }
            Self::Sum(parts) => {
                if parts.is_empty() {
                    return bad("empty sum".into());
                }
                for p in parts {
                    if matches!(p, Self::Zero) {
                        return bad("zero term inside a sum".into());
                    }
                    p.validate()?;
                }
                Ok(())
            }
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Self::Zero)
    }

    /// Pointwise value; coordinates beyond `n` are ignored.
    pub fn eval(&self, x: &Point, n: usize) -> f64 {
        match self {
            Self::Zero => 0.0,
            Self::Constant(c) => *c,
            Self::Power { coef, sigma } => {
                let r2: f64 = x[..n].iter().map(|v| v * v).sum();
                if *sigma == 2.0 {
                    coef * r2
                } else {
                    coef * r2.powf(0.5 * sigma)
                }
            }
            Self::Well { lo, hi, height } => {
                if (0..n).all(|d| x[d] >= lo[d] && x[d] <= hi[d]) {
                    *height
                } else {
                    0.0
                }
            }
            Self::Sum(parts) => parts.iter().map(|p| p.eval(x, n)).sum(),
        }
    }

    /// Multiply the potential by `c > 0`.
    pub fn scaled(&self, c: f64) -> Self {
        match self {
            Self::Zero => Self::Zero,
            Self::Constant(v) => Self::Constant(c * v),
            Self::Power { coef, sigma } => Self::Power { coef: c * coef, sigma: *sigma },
            Self::Well { lo, hi, height } => Self::Well { lo: *lo, hi: *hi, height: c * height },
            Self::Sum(parts) => Self::Sum(parts.iter().map(|p| p.scaled(c)).collect()),
        }
    }

    /// `(c, a)` with `V(x) = c + a|x|²`, when the potential has that form.
    pub fn constant_plus_quadratic(&self) -> Option<(f64, f64)> {
        match self {
            Self::Zero => Some((0.0, 0.0)),
            Self::Constant(c) => Some((*c, 0.0)),
            Self::Power { coef, sigma } if *sigma == 2.0 => Some((0.0, *coef)),
            Self::Sum(parts) => parts.iter().try_fold((0.0, 0.0), |(c, a), p| {
                p.constant_plus_quadratic().map(|(c2, a2)| (c + c2, a + a2))
            }),
            _ => None,
        }
    }

    /// Radially symmetric about the origin.
    pub fn is_radial(&self) -> bool {
        match self {
            Self::Zero | Self::Constant(_) | Self::Power { .. } => true,
            Self::Well { .. } => false,
            Self::Sum(parts) => parts.iter().all(|p| p.is_radial()),
        }
    }

    fn radial_value(&self, r: f64) -> f64 {
        self.eval(&[r, 0.0, 0.0], 1)
    }

    fn kinks(&self, n: usize, out: &mut Vec<(usize, f64)>) {
        match self {
            Self::Power { .. } => (0..n).for_each(|d| out.push((d, 0.0))),
            Self::Well { lo, hi, .. } => (0..n).for_each(|d| {
                out.push((d, lo[d]));
                out.push((d, hi[d]));
            }),
            Self::Sum(parts) => parts.iter().for_each(|p| p.kinks(n, out)),
            _ => {}
        }
    }

    /// Closed-form `∫_{B(center, r)} V` where available.
    fn ball_integral_exact(&self, n: usize, center: &Point, r: f64) -> Option<f64> {
        let vol = unit_ball_volume(n) * r.powi(n as i32);
        match self {
            Self::Zero => Some(0.0),
            Self::Constant(c) => Some(c * vol),
            Self::Power { coef, sigma } if *sigma == 2.0 => {
                let c2: f64 = center[..n].iter().map(|v| v * v).sum();
                Some(coef * vol * (c2 + n as f64 * r * r / (n as f64 + 2.0)))
            }
            Self::Sum(parts) => parts.iter().map(|p| p.ball_integral_exact(n, center, r)).sum(),
            _ => None,
        }
    }

    /// `∫_{B(center, r)} V(y)^q dy` by closed form, radial Simpson, or Gauss rules.
    pub fn ball_integral_pow(&self, n: usize, center: &Point, r: f64, q: f64) -> f64 {
        if q == 1.0 {
            if let Some(v) = self.ball_integral_exact(n, center, r) {
                return v;
            }
        }
        let centred = center[..n].iter().all(|c| c.abs() < 1e-14);
        if self.is_radial() && centred {
            let area = unit_sphere_area(n);
            return simpson(0.0, r, 512, |s| {
                self.radial_value(s).powf(q) * area * s.powi(n as i32 - 1)
            });
        }
        let f = |y: &Point| self.eval(y, n).powf(q);
        match n {
            1 => {
                let mut breaks = vec![center[0] - r, center[0] + r];
                let mut ks = Vec::new();
                self.kinks(1, &mut ks);
                for (_, k) in ks {
                    if k > breaks[0] && k < breaks[1] {
                        breaks.push(k);
                    }
                }
                breaks.sort_by(f64::total_cmp);
                breaks.dedup();
                let rule = gauss_legendre(16);
                crate::quadrature::composite(&rule, &breaks, 4)
                    .into_iter()
                    .map(|(x, w)| w * f(&[x, 0.0, 0.0]))
                    .sum()
            }
            _ => polar_integral(n, center, r, &f, self.is_radial()),
        }
    }

    pub fn ball_integral(&self, n: usize, center: &Point, r: f64) -> f64 {
        self.ball_integral_pow(n, center, r, 1.0)
    }

    /// `∫_{ℝⁿ} e^{-c|x-y|²/t} V(y) dy`.
    pub fn gaussian_average(&self, n: usize, x: &Point, t: f64, c: f64) -> f64 {
        let gauss_mass = (std::f64::consts::PI * t / c).powf(0.5 * n as f64);
        match self {
            Self::Zero => return 0.0,
            Self::Constant(v) => return v * gauss_mass,
            Self::Power { coef, sigma } if *sigma == 2.0 => {
                let x2: f64 = x[..n].iter().map(|v| v * v).sum();
                return coef * gauss_mass * (x2 + n as f64 * t / (2.0 * c));
            }
            Self::Sum(parts) => return parts.iter().map(|p| p.gaussian_average(n, x, t, c)).sum(),
            _ => {}
        }
        // tensor Gauss rule on a box carrying all but e^{-40} of the Gaussian
        let half = (40.0 * t / c).sqrt();
        let rule = gauss_legendre(24);
        let axis: Vec<Vec<(f64, f64)>> = (0..n)
            .map(|d| {
                let mut breaks = vec![x[d] - half, x[d] + half];
                let mut ks = Vec::new();
                self.kinks(n, &mut ks);
                for (kd, k) in ks {
                    if kd == d && k > breaks[0] && k < breaks[1] {
                        breaks.push(k);
                    }
                }
                breaks.sort_by(f64::total_cmp);
                crate::quadrature::composite(&rule, &breaks, 4)
            })
            .collect();
        let mut total = 0.0;
        let mut y = [0.0; 3];
        let sizes: Vec<usize> = axis.iter().map(|a| a.len()).collect();
        let count: usize = sizes.iter().product();
        for k in 0..count {
            let mut rem = k;
            let mut w = 1.0;
            let mut d2 = 0.0;
            for d in 0..n {
                let (yd, wd) = axis[d][rem % sizes[d]];
                rem /= sizes[d];
                y[d] = yd;
                w *= wd;
                d2 += (yd - x[d]).powi(2);
            }
            total += w * (-c * d2 / t).exp() * self.eval(&y, n);
        }
        total
    }
}

fn polar_integral(n: usize, center: &Point, r: f64, f: &dyn Fn(&Point) -> f64, smooth: bool) -> f64 {
    let (radial_nodes, ang) = if smooth { (24, 48) } else { (64, 192) };
    let radial = gauss_legendre(radial_nodes);
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut total = 0.0;
    match n {
        2 => {
            for (s, ws) in radial.mapped(0.0, r) {
                for k in 0..ang {
                    let th = two_pi * (k as f64 + 0.5) / ang as f64;
                    let y = [center[0] + s * th.cos(), center[1] + s * th.sin(), 0.0];
                    total += ws * s * (two_pi / ang as f64) * f(&y);
                }
            }
        }
        3 => {
            let polar: Rule = gauss_legendre(ang / 4);
            for (s, ws) in radial.mapped(0.0, r) {
                for (ct, wc) in polar.mapped(-1.0, 1.0) {
                    let st = (1.0 - ct * ct).sqrt();
                    for k in 0..ang / 2 {
                        let ph = two_pi * (k as f64 + 0.5) / (ang / 2) as f64;
                        let y = [
                            center[0] + s * st * ph.cos(),
                            center[1] + s * st * ph.sin(),
                            center[2] + s * ct,
                        ];
                        total += ws * s * s * wc * (two_pi / (ang / 2) as f64) * f(&y);
                    }
                }
            }
        }
        _ => unreachable!("polar quadrature needs n >= 2"),
    }
    total
}

/// Reverse Hölder constant over a ball sample.
#[derive(Debug, Clone, PartialEq)]
pub struct ReverseHolderReport {
    pub c_best: f64,
    pub holds: bool,
    /// Balls dropped because the plain average of V vanished.
    pub excluded: usize,
}

pub fn reverse_holder_constant(
    spec: &PotentialSpec,
    n: usize,
    q: f64,
    balls: &[Ball],
) -> Result<ReverseHolderReport> {
    if !(q > 1.0) {
        return Err(Error::InvalidParameter(format!("reverse Hölder exponent q must exceed 1 (got {q})")));
    }
    let mut c_best: f64 = 0.0;
    let mut excluded = 0;
    for b in balls {
        if b.members.len() < 32 {
            return Err(Error::InvalidParameter(format!(
                "ball of radius {} has {} interior points (< 32)",
                b.radius,
                b.members.len()
            )));
        }
        let vol = b.volume(n);
        let avg = spec.ball_integral(n, &b.center, b.radius) / vol;
        if avg <= 0.0 {
            excluded += 1;
            continue;
        }
        let avg_q = (spec.ball_integral_pow(n, &b.center, b.radius, q) / vol).powf(1.0 / q);
        c_best = c_best.max(avg_q / avg);
    }
    if excluded == balls.len() {
        return Err(Error::InvalidParameter("every sampled ball has zero potential average".into()));
    }
    Ok(ReverseHolderReport { c_best, holds: c_best.is_finite(), excluded })
}

/// How the bisection for ρ terminated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RhoFlag {
    Interior,
    /// Upper bracket (box diameter) still satisfies the constraint.
    BoxLimited,
    /// Root below the grid spacing; bracket extended downward.
    SubGrid,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RhoValue {
    pub rho: f64,
    pub flag: RhoFlag,
}

/// Normalized potential mass `r^{2-n} ∫_{B(x,r)} V`.
pub fn rho_functional(spec: &PotentialSpec, n: usize, x: &Point, r: f64) -> f64 {
    r.powi(2 - n as i32) * spec.ball_integral(n, x, r)
}

/// `sup{r : r^{2-n} ∫_{B(x,r)} V ≤ 1}` by bisection in log r.
pub fn compute_rho(spec: &PotentialSpec, grid: &Grid, x: &Point, tol: f64) -> Result<RhoValue> {
    if spec.is_zero() {
        return Err(Error::InvalidPotential("ρ undefined for V = 0".into()));
    }
    if !(tol > 0.0) {
        return Err(Error::InvalidParameter(format!("tolerance must be positive (got {tol})")));
    }
    let n = grid.dim();
    let f = |r: f64| rho_functional(spec, n, x, r);
    let mut hi = 2.0 * grid.half_width() * (n as f64).sqrt();
    if f(hi) <= 1.0 {
        return Ok(RhoValue { rho: hi, flag: RhoFlag::BoxLimited });
    }
    let mut lo = grid.spacing();
    let mut flag = RhoFlag::Interior;
    let mut shrink = 0;
    while f(lo) > 1.0 {
        flag = RhoFlag::SubGrid;
        hi = lo;
        lo *= 0.5;
        shrink += 1;
        if shrink > 200 {
            return Err(Error::BisectionFailed(200));
        }
    }
    const MAX_ITER: usize = 200;
    for _ in 0..MAX_ITER {
        let mid = (lo * hi).sqrt();
        if f(mid) <= 1.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi / lo - 1.0 < 1e-15 {
            let r = lo;
            if (f(r) - 1.0).abs() > tol && (f(hi) - 1.0).abs() > tol {
                return Err(Error::BisectionFailed(MAX_ITER));
            }
            return Ok(RhoValue { rho: r, flag });
        }
    }
    Err(Error::BisectionFailed(MAX_ITER))
}

/// ρ at every grid point.
#[derive(Debug, Clone)]
pub struct AuxFunction {
    pub grid: Grid,
    pub rho: Vec<f64>,
    pub flags: Vec<RhoFlag>,
    pub tol: f64,
}

impl AuxFunction {
    /// `ρ ≡ +∞` for the zero potential.
    pub fn new(spec: &PotentialSpec, grid: &Grid, tol: f64) -> Result<Self> {
        let len = grid.len();
        if spec.is_zero() {
            return Ok(Self {
                grid: grid.clone(),
                rho: vec![f64::INFINITY; len],
                flags: vec![RhoFlag::Interior; len],
                tol,
            });
        }
        let n = grid.dim();
        let mut cache: HashMap<u64, RhoValue> = HashMap::new();
        let mut rho = Vec::with_capacity(len);
        let mut flags = Vec::with_capacity(len);
        for i in 0..len {
            let p = grid.point(i);
            // radial potentials: ρ depends on |x| only; constants: not at all
            let key = match spec {
                PotentialSpec::Constant(_) => Some(0u64),
                s if s.is_radial() => {
                    let r2: f64 = p[..n].iter().map(|v| v * v).sum();
                    Some((r2 * 1e9).round() as u64)
                }
                _ => None,
            };
            let v = match key.and_then(|k| cache.get(&k).copied()) {
                Some(v) => v,
                None => {
                    let v = compute_rho(spec, grid, &p, tol)?;
                    if let Some(k) = key {
                        cache.insert(k, v);
                    }
                    v
                }
            };
            rho.push(v.rho);
            flags.push(v.flag);
        }
        Ok(Self { grid: grid.clone(), rho, flags, tol })
    }

    pub fn is_infinite(&self) -> bool {
        self.rho.iter().all(|r| r.is_infinite())
    }

    pub fn at(&self, i: usize) -> f64 {
        self.rho[i]
    }
}

/// Measured constants of the auxiliary-function lemmas.
#[derive(Debug, Clone, PartialEq)]
pub struct AuxLemmaReport {
    /// Reason the checks were skipped, if any.
    pub skipped: Option<String>,
    /// `sup ∫_{B(x,2r)} V / ∫_{B(x,r)} V`.
    pub doubling: f64,
    /// Measured constant of the small-ball scaling inequality.
    pub scaling: f64,
    /// `sup max(ρ(x)/ρ(y), ρ(y)/ρ(x))` over pairs with `|x-y| ≤ ρ(x)`.
    pub comparability: f64,
    /// Gaussian-average constant for `√t < ρ(x)` with exponent `delta`.
    pub gaussian_small: f64,
    pub delta: f64,
    /// Fitted growth exponent for `√t ≥ ρ(x)` and the constant it yields.
    pub gaussian_large_exponent: f64,
    pub gaussian_large: f64,
}

pub fn check_aux_lemmas(
    spec: &PotentialSpec,
    grid: &Grid,
    points: &[Point],
    scales: &[f64],
    q: f64,
) -> Result<AuxLemmaReport> {
    let n = grid.dim();
    if spec.is_zero() {
        return Ok(AuxLemmaReport {
            skipped: Some("ρ undefined".into()),
            doubling: f64::NAN,
            scaling: f64::NAN,
            comparability: f64::NAN,
            gaussian_small: f64::NAN,
            delta: f64::NAN,
            gaussian_large_exponent: f64::NAN,
            gaussian_large: f64::NAN,
        });
    }
    let tol = 1e-10;
    let mut doubling: f64 = 0.0;
    let mut scaling: f64 = 0.0;
    let exponent = 2.0 - n as f64 / q;
    for x in points {
        for &r in scales {
            let a = spec.ball_integral(n, x, r);
            if a > 0.0 {
                doubling = doubling.max(spec.ball_integral(n, x, 2.0 * r) / a);
            }
            for &big in scales.iter().filter(|&&big| big > r) {
                let lhs = rho_functional(spec, n, x, r);
                let rhs = (r / big).powf(exponent) * rho_functional(spec, n, x, big);
                if rhs > 0.0 {
                    scaling = scaling.max(lhs / rhs);
                }
            }
        }
    }

    let rhos: Vec<f64> = points
        .iter()
        .map(|x| compute_rho(spec, grid, x, tol).map(|v| v.rho))
        .collect::<Result<_>>()?;
    let mut comparability: f64 = 1.0;
    for (i, x) in points.iter().enumerate() {
        let mut partners: Vec<(Point, f64)> = Vec::new();
        for (j, y) in points.iter().enumerate() {
            if grid.distance(x, y) <= rhos[i] {
                partners.push((*y, rhos[j]));
            }
        }
        for frac in [0.25, 0.5, 1.0] {
            let mut y = *x;
            y[0] += frac * rhos[i];
            partners.push((y, compute_rho(spec, grid, &y, tol)?.rho));
        }
        for (_, ry) in partners {
            comparability = comparability.max((rhos[i] / ry).max(ry / rhos[i]));
        }
    }

    let c = 0.25;
    let delta = exponent;
    let mut gaussian_small: f64 = 0.0;
    let mut large: Vec<(f64, f64)> = Vec::new();
    for (i, x) in points.iter().enumerate() {
        for &r in scales {
            let t = r * r;
            let avg = spec.gaussian_average(n, x, t, c) / t.powf(0.5 * n as f64);
            let ratio = r / rhos[i];
            if r < rhos[i] {
                gaussian_small = gaussian_small.max(avg * t / ratio.powf(delta));
            } else if avg > 0.0 {
                large.push((ratio.ln(), (avg * t).ln()));
            }
        }
    }
    let (gaussian_large_exponent, gaussian_large) = if large.len() >= 2 {
        let l = crate::fit::linear_fit(&large).slope.max(0.0);
        let c_large = large.iter().map(|(lr, la)| (la - l * lr).exp()).fold(0.0, f64::max);
        (l, c_large)
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(AuxLemmaReport {
        skipped: None,
        doubling,
        scaling,
        comparability,
        gaussian_small,
        delta,
        gaussian_large_exponent,
        gaussian_large,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, BoundaryCondition};

    #[test]
    fn eval_examples() {
        assert_eq!(PotentialSpec::constant(1.0).unwrap().eval(&[0.3, 0.0, 0.0], 1), 1.0);
        assert_eq!(PotentialSpec::power(1.0, 2.0).unwrap().eval(&[1.0, 1.0, 1.0], 3), 3.0);
        assert_eq!(PotentialSpec::Zero.eval(&[1.0, 0.0, 0.0], 1), 0.0);
        assert!(PotentialSpec::power(1.0, -1.0).is_err());
        assert!(PotentialSpec::constant(0.0).is_err());
    }

    #[test]
    fn rho_examples() {
        let g3 = build_grid(3, 4.0, 16, BoundaryCondition::Dirichlet).unwrap();
        let one = PotentialSpec::constant(1.0).unwrap();
        let r = compute_rho(&one, &g3, &[0.0; 3], 1e-10).unwrap().rho;
        assert!((r - (3.0 / (4.0 * std::f64::consts::PI)).sqrt()).abs() < 1e-9);
        let sq = PotentialSpec::power(1.0, 2.0).unwrap();
        let r = compute_rho(&sq, &g3, &[0.0; 3], 1e-10).unwrap().rho;
        assert!((r - (5.0 / (4.0 * std::f64::consts::PI)).powf(0.25)).abs() < 1e-9);
        let g1 = build_grid(1, 16.0, 256, BoundaryCondition::Dirichlet).unwrap();
        let r = compute_rho(&one, &g1, &[0.0; 3], 1e-10).unwrap().rho;
        assert!((r - 0.5f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn radial_simpson_matches_closed_form() {
        let sq = PotentialSpec::power(1.0, 2.0).unwrap();
        let exact = sq.ball_integral(3, &[0.0; 3], 0.7);
        let simpson = sq.ball_integral_pow(3, &[0.0; 3], 0.7, 1.0 + 1e-15);
        assert!((exact - simpson).abs() / exact < 1e-9);
    }

    #[test]
    fn polar_matches_closed_form_off_centre() {
        let sq = PotentialSpec::power(1.0, 2.0).unwrap();
        let c = [0.4, -0.2, 0.1];
        for n in [2usize, 3] {
            let exact = sq.ball_integral(n, &c, 0.9);
            let f = |y: &Point| sq.eval(y, n);
            let num = polar_integral(n, &c, 0.9, &f, true);
            assert!((exact - num).abs() / exact < 1e-10, "n={n}: {exact} vs {num}");
        }
    }
}
