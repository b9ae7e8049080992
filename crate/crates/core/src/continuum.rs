//! Free-space (`V = 0`) kernels on ℝⁿ sampled at grid points: closed forms,
//! Fourier integrals, and subordinated Gaussians.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::quadrature::{gauss_legendre, Rule};
use crate::spectral::{KernelSlice, Route};
use crate::subordinator::HeatSource;
use nalgebra::DMatrix;
use std::collections::HashMap;
use std::f64::consts::PI;

/// Heat kernel of `-Δ` on ℝⁿ.
pub fn gaussian(n: usize, t: f64, d: f64) -> f64 {
    (4.0 * PI * t).powf(-0.5 * n as f64) * (-d * d / (4.0 * t)).exp()
}

/// Poisson kernel `c_n t / (t² + d²)^{(n+1)/2}`.
pub fn poisson(n: usize, t: f64, d: f64) -> f64 {
    let nf = n as f64;
    let c = statrs::function::gamma::gamma(0.5 * (nf + 1.0)) / PI.powf(0.5 * (nf + 1.0));
    c * t / (t * t + d * d).powf(0.5 * (nf + 1.0))
}

/// `(1/π) ∫_0^∞ m(ξ) cos(ξ d) dξ`, the one-dimensional radial Fourier inverse.
///
/// `cutoff` must satisfy `|m(ξ)| ≤ 1e-17 · sup|m|` for `ξ > cutoff`.
pub fn fourier_inverse_1d(m: &dyn Fn(f64) -> f64, d: f64, cutoff: f64, rule: &Rule) -> f64 {
    let width = if d > 0.0 { (0.5 * PI / d).min(cutoff / 32.0) } else { cutoff / 32.0 };
    let g = |xi: f64| m(xi) * (xi * d).cos();
    let mut total = 0.0;
    // geometric grading towards the non-smooth point ξ = 0
    let mut hi = width;
    for _ in 0..60 {
        let lo = 0.5 * hi;
        total += rule.integrate(lo, hi, g);
        hi = lo;
    }
    let panels = ((cutoff - width) / width).ceil().max(0.0) as usize;
    for p in 0..panels {
        let a = width * (1 + p) as f64;
        total += rule.integrate(a, a + width, g);
    }
    total / PI
}

/// Sampled free-space kernels on a grid's points (Euclidean distances).
#[derive(Debug, Clone)]
pub struct FreeSpace {
    grid: Grid,
}

impl FreeSpace {
    pub fn new(grid: &Grid) -> Self {
        Self { grid: grid.clone() }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    fn euclid(&self, i: usize, j: usize) -> f64 {
        let a = self.grid.point(i);
        let b = self.grid.point(j);
        (0..self.grid.dim()).map(|d| (a[d] - b[d]).powi(2)).sum::<f64>().sqrt()
    }

    /// Table of a radial profile `f(|x - y|)`, evaluated once per distinct distance.
    pub fn radial_table(&self, t: f64, route: Route, profile: impl Fn(f64) -> f64) -> Result<KernelSlice> {
        let len = self.grid.len();
        let h = self.grid.spacing();
        let mut cache: HashMap<u64, f64> = HashMap::new();
        let mut values = DMatrix::<f64>::zeros(len, len);
        for i in 0..len {
            for j in 0..=i {
                let d = self.euclid(i, j);
                let key = ((d / h).powi(2) * 64.0).round() as u64;
                let v = *cache.entry(key).or_insert_with(|| profile(d));
                values[(i, j)] = v;
                values[(j, i)] = v;
            }
        }
        KernelSlice::new(&self.grid, t, values, route)
    }

    pub fn heat(&self, t: f64) -> Result<KernelSlice> {
        let n = self.grid.dim();
        self.radial_table(t, Route::ClosedForm, |d| gaussian(n, t, d))
    }

    pub fn poisson(&self, t: f64) -> Result<KernelSlice> {
        let n = self.grid.dim();
        let mut k = self.radial_table(t, Route::ClosedForm, |d| poisson(n, t, d))?;
        k.alpha = Some(0.5);
        Ok(k)
    }

    fn require_1d(&self) -> Result<()> {
        if self.grid.dim() != 1 {
            return Err(Error::Unsupported("Fourier oracle implemented for n = 1".into()));
        }
        Ok(())
    }

    /// `K_{α,t}` from `(1/π)∫ e^{-tξ^{2α}} cos(ξd) dξ` (n = 1).
    pub fn frac_heat_fourier(&self, alpha: f64, t: f64) -> Result<KernelSlice> {
        self.require_1d()?;
        let rule = gauss_legendre(16);
        let cutoff = (42.0 / t).powf(0.5 / alpha);
        let m = move |xi: f64| (-t * xi.powf(2.0 * alpha)).exp();
        let mut k = self.radial_table(t, Route::FourierOracle, |d| fourier_inverse_1d(&m, d, cutoff, &rule))?;
        k.alpha = Some(alpha);
        Ok(k)
    }

    /// Kernel of `(tλ^α)^β e^{-tλ^α}` with `λ = ξ²` (n = 1).
    pub fn frac_derivative_fourier(&self, alpha: f64, beta: f64, t: f64) -> Result<KernelSlice> {
        self.require_1d()?;
        let rule = gauss_legendre(16);
        let u_max = 45.0 + 2.0 * beta * (45.0f64 + 2.0 * beta).ln();
        let cutoff = (u_max / t).powf(0.5 / alpha);
        let m = move |xi: f64| {
            let u = t * xi.powf(2.0 * alpha);
            if u == 0.0 {
                0.0
            } else {
                u.powf(beta) * (-u).exp()
            }
        };
        let mut k = self.radial_table(t, Route::FourierOracle, |d| fourier_inverse_1d(&m, d, cutoff, &rule))?;
        k.alpha = Some(alpha);
        k.beta = Some(beta);
        Ok(k)
    }
}

impl HeatSource for FreeSpace {
    fn heat_kernel(&self, s: f64) -> Result<KernelSlice> {
        self.heat(s)
    }
}
