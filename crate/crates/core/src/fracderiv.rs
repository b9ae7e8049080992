//! Time-fractional derivatives of kernel paths, spatial gradients, and the
//! combined gradient `(∇_x, ∂_t^{1/2α})`.
//!
//! Sign convention: `∂_t^β e^{-at} = a^β e^{-at}` for every `β > 0`, i.e.
//!
//! ```text
//! ∂_t^β K_t = (-1)^m / Γ(m-β) ∫_0^∞ ∂_t^m K_{t+u} u^{m-β-1} du,   m = ⌊β⌋ + 1.
//! ```
//!
//! The `u`-integral is split at `u₀ ≈ 1/μ_max` (fastest decay rate of the path):
//! Gauss–Jacobi on `[0, u₀]` absorbs `u^{m-β-1}`, and composite Gauss–Legendre in
//! `log u` covers `[u₀, 50t + 50/μ_min]`.

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction};
use crate::quadrature::{composite, gauss_jacobi, gauss_legendre};
use crate::spectral::{multiplier_kernel, KernelSlice, Multiplier, Route, SpectralDecomposition};
use rayon::prelude::*;
use statrs::function::gamma::gamma;

#[derive(Debug, Clone, PartialEq)]
pub struct FracDerivSpec {
    beta: f64,
    m: u32,
    pub jacobi_nodes: usize,
    pub panel_nodes: usize,
    /// Upper bound on the log-u width of one panel.
    pub panel_log_width: f64,
    /// Explicit upper truncation; `None` selects `50t + 50/μ_min`.
    pub u_max: Option<f64>,
}

impl FracDerivSpec {
    pub fn new(beta: f64) -> Result<Self> {
        if !(beta > 0.0 && beta.is_finite()) {
            return Err(Error::InvalidParameter(format!("fractional order must be positive (got {beta})")));
        }
        let m = beta.floor() as u32 + 1;
        Ok(Self { beta, m, jacobi_nodes: 32, panel_nodes: 16, panel_log_width: 0.5, u_max: None })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn order(&self) -> u32 {
        self.m
    }

    /// `u`-nodes and weights for rates in `[mu_min, mu_max]`, including `(-1)^m/Γ(m-β)`.
    pub fn nodes(&self, t: f64, mu_min: f64, mu_max: f64) -> Result<Vec<(f64, f64)>> {
        if !(t > 0.0) {
            return Err(Error::InvalidParameter(format!("t must be positive (got {t})")));
        }
        if !(mu_min > 0.0 && mu_max >= mu_min) {
            return Err(Error::Quadrature(format!("decay rates [{mu_min:e}, {mu_max:e}] invalid")));
        }
        let u_max = self.u_max.unwrap_or(50.0 * t + 50.0 / mu_min);
        if u_max < 50.0 * t {
            return Err(Error::Quadrature(format!("upper range {u_max:e} < 50·t = {:e}", 50.0 * t)));
        }
        let u0 = (1.0 / mu_max).min(t).min(0.5 * u_max);
        let c = self.m as f64 - self.beta - 1.0;
        let scale = if self.m.is_multiple_of(2) { 1.0 } else { -1.0 } / gamma(self.m as f64 - self.beta);

        let gj = gauss_jacobi(self.jacobi_nodes, 0.0, c)?;
        let half = 0.5 * u0;
        let mut out: Vec<(f64, f64)> = gj
            .nodes
            .iter()
            .zip(&gj.weights)
            .map(|(&x, &w)| (half * (1.0 + x), scale * half.powf(c + 1.0) * w))
            .collect();

        let span = (u_max / u0).ln();
        let panels = ((span / self.panel_log_width).ceil() as usize).max(4);
        let gl = gauss_legendre(self.panel_nodes);
        out.extend(composite(&gl, &[u0.ln(), u_max.ln()], panels).into_iter().map(|(v, w)| {
            let u = v.exp();
            (u, scale * w * u * u.powf(c))
        }));
        if out.len() < 64 {
            return Err(Error::Quadrature(format!("{} nodes (< 64)", out.len())));
        }
        Ok(out)
    }
}

/// A kernel-valued time path `s ↦ K_s` with its time derivatives.
pub trait KernelPath: Sync {
    /// `∂_s^m K_s`.
    fn time_derivative(&self, m: u32, s: f64) -> Result<KernelSlice>;

    /// Slowest and fastest exponential decay rates of the path.
    fn decay_rates(&self) -> (f64, f64);

    /// `Σ_q w_q ∂^m K_{t+u_q}`.
    fn combine(&self, m: u32, t: f64, nodes: &[(f64, f64)]) -> Result<KernelSlice> {
        let mut acc: Option<KernelSlice> = None;
        for chunk in nodes.chunks(16) {
            let tables: Vec<KernelSlice> =
                chunk.par_iter().map(|&(u, _)| self.time_derivative(m, t + u)).collect::<Result<_>>()?;
            for (k, &(_, w)) in tables.iter().zip(chunk) {
                match acc.as_mut() {
                    None => acc = Some(k.scaled(w)),
                    Some(a) => a.add_scaled(k, w)?,
                }
            }
        }
        acc.ok_or_else(|| Error::Quadrature("empty node set".into()))
    }
}

/// `s ↦ e^{-sL^α}` on a spectral decomposition.
#[derive(Debug, Clone, Copy)]
pub struct SpectralPath<'a> {
    pub sd: &'a SpectralDecomposition,
    pub alpha: f64,
}

impl KernelPath for SpectralPath<'_> {
    fn time_derivative(&self, m: u32, s: f64) -> Result<KernelSlice> {
        multiplier_kernel(self.sd, &Multiplier::RawFracHeatTimeDerivative { alpha: self.alpha, m, t: s })
    }

    fn decay_rates(&self) -> (f64, f64) {
        (self.sd.lambda_min_positive().powf(self.alpha), self.sd.lambda_max().powf(self.alpha))
    }

    /// Sums the per-node multipliers first, then builds one table.
    fn combine(&self, m: u32, t: f64, nodes: &[(f64, f64)]) -> Result<KernelSlice> {
        let sign = if m.is_multiple_of(2) { 1.0 } else { -1.0 };
        let w: Vec<f64> = self
            .sd
            .eigenvalues
            .iter()
            .map(|&l| {
                if l == 0.0 {
                    return 0.0;
                }
                let mu = l.powf(self.alpha);
                let dm = sign * mu.powi(m as i32);
                nodes.iter().map(|&(u, wq)| wq * dm * (-(t + u) * mu).exp()).sum()
            })
            .collect();
        KernelSlice::new(&self.sd.grid, t, self.sd.kernel_from_weights(&w), Route::Quadrature)
    }
}

/// `∂_t^β K_t` by quadrature along `path`.
pub fn frac_time_derivative(path: &dyn KernelPath, spec: &FracDerivSpec, t: f64) -> Result<KernelSlice> {
    let (mu_min, mu_max) = path.decay_rates();
    let nodes = spec.nodes(t, mu_min, mu_max)?;
    let mut k = path.combine(spec.order(), t, &nodes)?;
    k.t = t;
    k.beta = Some(spec.beta());
    k.route = Route::Quadrature;
    Ok(k)
}

/// Scalar analogue: `∂_t^β g(t)` where `deriv(m, s) = g^{(m)}(s)` decays at rates in `[mu_min, mu_max]`.
pub fn frac_time_derivative_scalar(
    deriv: impl Fn(u32, f64) -> f64,
    spec: &FracDerivSpec,
    t: f64,
    mu_min: f64,
    mu_max: f64,
) -> Result<f64> {
    let nodes = spec.nodes(t, mu_min, mu_max)?;
    Ok(nodes.iter().map(|&(u, w)| w * deriv(spec.order(), t + u)).sum())
}

fn check_time_params(alpha: f64, beta: f64, t: f64) -> Result<()> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidParameter(format!("alpha must lie in (0,1] (got {alpha})")));
    }
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter(format!("beta must be positive (got {beta})")));
    }
    if !(t > 0.0) {
        return Err(Error::InvalidParameter(format!("t must be positive (got {t})")));
    }
    Ok(())
}

/// Kernel of `t^β ∂_t^β e^{-tL^α}`, multiplier `(tλ^α)^β e^{-tλ^α}`.
pub fn d_operator(sd: &SpectralDecomposition, alpha: f64, beta: f64, t: f64) -> Result<KernelSlice> {
    check_time_params(alpha, beta, t)?;
    multiplier_kernel(sd, &Multiplier::FracDerivative { alpha, beta, t })
}

/// [`d_operator`] through the `u`-quadrature instead of the closed multiplier.
pub fn d_operator_quadrature(sd: &SpectralDecomposition, alpha: f64, beta: f64, t: f64) -> Result<KernelSlice> {
    check_time_params(alpha, beta, t)?;
    let spec = FracDerivSpec::new(beta)?;
    let mut k = frac_time_derivative(&SpectralPath { sd, alpha }, &spec, t)?;
    k.values *= t.powf(beta);
    k.alpha = Some(alpha);
    Ok(k)
}

/// Per-point gradient vectors (unused trailing components are zero).
#[derive(Debug, Clone, PartialEq)]
pub struct GradientField {
    pub grid: Grid,
    pub values: Vec<[f64; 3]>,
}

impl GradientField {
    pub fn norm_at(&self, i: usize) -> f64 {
        self.values[i].iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn component(&self, axis: usize) -> GridFunction {
        GridFunction::new(&self.grid, self.values.iter().map(|v| v[axis]).collect()).expect("shape")
    }

    pub fn max_norm(&self) -> f64 {
        (0..self.values.len()).map(|i| self.norm_at(i)).fold(0.0, f64::max)
    }
}

fn central_difference(grid: &Grid, values: &[f64], i: usize) -> [f64; 3] {
    let inv = 0.5 / grid.spacing();
    let mut g = [0.0; 3];
    for (d, gd) in g.iter_mut().enumerate().take(grid.dim()) {
        // outside a Dirichlet box the function vanishes
        let fwd = grid.shifted(i, d, 1).map_or(0.0, |j| values[j]);
        let bwd = grid.shifted(i, d, -1).map_or(0.0, |j| values[j]);
        *gd = (fwd - bwd) * inv;
    }
    g
}

/// Second-order central-difference gradient of a grid function.
pub fn grid_gradient(f: &GridFunction) -> Result<GradientField> {
    f.check_finite()?;
    let grid = f.grid();
    let values = (0..grid.len()).map(|i| central_difference(grid, f.values(), i)).collect();
    Ok(GradientField { grid: grid.clone(), values })
}

/// `∇_x K(x, y)` for all `x` at fixed `y`.
pub fn spatial_gradient(k: &KernelSlice, y: usize) -> Result<GradientField> {
    if y >= k.grid.len() {
        return Err(Error::ShapeMismatch { expected: k.grid.len(), got: y });
    }
    let col = GridFunction::new(&k.grid, k.values.column(y).iter().copied().collect())?;
    grid_gradient(&col)
}

/// `∇_x K(x, y)` at one point; rejects the outermost Dirichlet layer.
pub fn gradient_at(k: &KernelSlice, x: usize, y: usize) -> Result<[f64; 3]> {
    if k.grid.in_boundary_layer(x) {
        return Err(Error::BoundaryLayer(x));
    }
    let col: Vec<f64> = k.values.column(y).iter().copied().collect();
    Ok(central_difference(&k.grid, &col, x))
}

/// `(∇_x u, ∂_t^{1/2α} u)` for `u = e^{-tL^α} f`.
pub fn nabla_alpha(
    sd: &SpectralDecomposition,
    alpha: f64,
    f: &GridFunction,
    t: f64,
) -> Result<(GradientField, GridFunction)> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha must lie in (0,1) (got {alpha})")));
    }
    check_time_params(alpha, 1.0, t)?;
    let u = sd.apply_multiplier(&Multiplier::FracHeat { alpha, t }, f)?;
    let grad = grid_gradient(&u)?;
    let time = sd.apply_multiplier(&Multiplier::TimeDerivative { alpha, beta: 0.5 / alpha, t }, f)?;
    Ok((grad, time))
}
