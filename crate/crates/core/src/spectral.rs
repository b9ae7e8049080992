//! Discrete Schrödinger operator `-Δ_h + V`, its eigendecomposition, and
//! functional-calculus kernels.

use crate::error::{Error, Result};
use crate::grid::{BoundaryCondition, Grid, GridFunction};
use crate::potential::PotentialSpec;
use crate::subordinator::HeatSource;
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use std::f64::consts::PI;

/// Discretization of the Laplacian.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum LaplacianScheme {
    /// 3/5/7-point stencil.
    #[default]
    FiniteDifference,
    /// Sine (Dirichlet) or Fourier (periodic) collocation; exact on the box's
    /// own eigenfunctions, so heat kernels converge spectrally.
    Spectral,
}

impl std::str::FromStr for LaplacianScheme {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "fd" | "finite_difference" | "stencil" => Ok(Self::FiniteDifference),
            "spectral" => Ok(Self::Spectral),
            other => Err(Error::InvalidParameter(format!("unknown Laplacian scheme '{other}'"))),
        }
    }
}

impl std::fmt::Display for LaplacianScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::FiniteDifference => "fd",
            Self::Spectral => "spectral",
        })
    }
}

#[derive(Debug, Clone)]
pub struct DiscreteOperator {
    pub grid: Grid,
    pub scheme: LaplacianScheme,
    pub potential: PotentialSpec,
    pub matrix: DMatrix<f64>,
}

/// One-dimensional `-d²/dx²` on `M` points.
fn laplacian_1d(grid: &Grid, scheme: LaplacianScheme) -> DMatrix<f64> {
    let m = grid.points_per_axis();
    let h = grid.spacing();
    let l = grid.half_width();
    let mut a = DMatrix::<f64>::zeros(m, m);
    match scheme {
        LaplacianScheme::FiniteDifference => {
            let c = 1.0 / (h * h);
            for i in 0..m {
                a[(i, i)] = 2.0 * c;
                if i + 1 < m {
                    a[(i, i + 1)] = -c;
                    a[(i + 1, i)] = -c;
                }
            }
            if grid.bc() == BoundaryCondition::Periodic {
                a[(0, m - 1)] = -c;
                a[(m - 1, 0)] = -c;
            }
        }
        LaplacianScheme::Spectral => match grid.bc() {
            BoundaryCondition::Dirichlet => {
                // orthonormal sine basis at cell centres: sin(πk(i+½)/M), k = 1..M
                let mut basis = DMatrix::<f64>::zeros(m, m);
                let mut eig = DVector::<f64>::zeros(m);
                for k in 1..=m {
                    let norm = if k == m { (1.0 / m as f64).sqrt() } else { (2.0 / m as f64).sqrt() };
                    for i in 0..m {
                        basis[(i, k - 1)] = norm * (PI * k as f64 * (i as f64 + 0.5) / m as f64).sin();
                    }
                    eig[k - 1] = (PI * k as f64 / (2.0 * l)).powi(2);
                }
                let mut scaled = basis.clone();
                for (k, mut col) in scaled.column_iter_mut().enumerate() {
                    col *= eig[k];
                }
                a = &scaled * basis.transpose();
            }
            BoundaryCondition::Periodic => {
                let half = m as i64 / 2;
                let mut row = vec![0.0; m];
                for (d, r) in row.iter_mut().enumerate() {
                    let mut s = 0.0;
                    for k in -half..half {
                        let xi = PI * k as f64 / l;
                        s += xi * xi * (2.0 * PI * (k * d as i64) as f64 / m as f64).cos();
                    }
                    *r = s / m as f64;
                }
                for i in 0..m {
                    for j in 0..m {
                        a[(i, j)] = row[(i + m - j) % m];
                    }
                }
            }
        },
    }
    a
}

/// Assemble with the finite-difference stencil.
pub fn assemble(grid: &Grid, spec: &PotentialSpec) -> DiscreteOperator {
    assemble_with(grid, spec, LaplacianScheme::FiniteDifference)
}

pub fn assemble_with(grid: &Grid, spec: &PotentialSpec, scheme: LaplacianScheme) -> DiscreteOperator {
    let n = grid.dim();
    let m = grid.points_per_axis();
    let len = grid.len();
    let a1 = laplacian_1d(grid, scheme);
    let mut mat = DMatrix::<f64>::zeros(len, len);
    // Kronecker sum over axes; axis 0 varies slowest in the flat index
    for d in 0..n {
        let stride = m.pow((n - 1 - d) as u32);
        for i in 0..len {
            let id = (i / stride) % m;
            let base = i - id * stride;
            for jd in 0..m {
                let v = a1[(id, jd)];
                if v != 0.0 {
                    mat[(i, base + jd * stride)] += v;
                }
            }
        }
    }
    for i in 0..len {
        mat[(i, i)] += spec.eval(&grid.point(i), n);
    }
    DiscreteOperator { grid: grid.clone(), scheme, potential: spec.clone(), matrix: mat }
}

#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub grid: Grid,
    pub scheme: LaplacianScheme,
    /// Ascending eigenvalues.
    pub eigenvalues: Vec<f64>,
    /// Columns are Euclidean-orthonormal eigenvectors; `φ_k = ψ_k / h^{n/2}`.
    vectors: DMatrix<f64>,
    pub has_zero_mode: bool,
}

const ZERO_MODE_THRESHOLD: f64 = 1e-9;

/// Eigenpairs of a symmetric matrix, ascending, each vector's largest entry positive.
fn sorted_pairs(matrix: &DMatrix<f64>) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let len = matrix.nrows();
    let eig = SymmetricEigen::try_new(matrix.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::Eigensolver("symmetric eigensolver did not converge".into()))?;
    let mut order: Vec<usize> = (0..len).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let mut vectors = DMatrix::<f64>::zeros(len, len);
    let mut eigenvalues = Vec::with_capacity(len);
    for (new, &old) in order.iter().enumerate() {
        let lam = eig.eigenvalues[old];
        if !lam.is_finite() {
            return Err(Error::Eigensolver("non-finite eigenvalue".into()));
        }
        eigenvalues.push(lam);
        let mut col = eig.eigenvectors.column(old).into_owned();
        normalize_sign(col.as_mut_slice());
        vectors.set_column(new, &col);
    }
    Ok((eigenvalues, vectors))
}

fn normalize_sign(col: &mut [f64]) {
    let (imax, _) = col.iter().enumerate().fold((0, 0.0), |acc, (i, v)| {
        if v.abs() > acc.1 + 1e-12 {
            (i, v.abs())
        } else {
            acc
        }
    });
    if col[imax] < 0.0 {
        col.iter_mut().for_each(|v| *v = -*v);
    }
}

/// Products of one-dimensional eigenpairs for `V = c + a|x|²` with `n > 1`.
fn tensor_pairs(op: &DiscreteOperator, c: f64, a: f64) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let grid = &op.grid;
    let (n, m) = (grid.dim(), grid.points_per_axis());
    let line = Grid::new(1, grid.half_width(), m, grid.bc())?;
    let v1 = if a > 0.0 { PotentialSpec::Power { coef: a, sigma: 2.0 } } else { PotentialSpec::Zero };
    let (l1, u1) = sorted_pairs(&assemble_with(&line, &v1, op.scheme).matrix)?;
    let len = grid.len();
    let mut modes: Vec<([usize; 3], f64)> = (0..len)
        .map(|j| {
            let k = grid.multi_index(j);
            (k, c + k[..n].iter().map(|&kd| l1[kd]).sum::<f64>())
        })
        .collect();
    modes.sort_by(|x, y| x.1.total_cmp(&y.1));
    let points: Vec<[usize; 3]> = (0..len).map(|i| grid.multi_index(i)).collect();
    let mut vectors = DMatrix::<f64>::zeros(len, len);
    for (col, (k, _)) in modes.iter().enumerate() {
        let mut v: Vec<f64> = points.iter().map(|p| (0..n).map(|d| u1[(p[d], k[d])]).product()).collect();
        normalize_sign(&mut v);
        vectors.set_column(col, &DVector::from_vec(v));
    }
    Ok((modes.into_iter().map(|(_, l)| l).collect(), vectors))
}

/// Eigendecomposition of the assembled operator. For `n > 1` and `V = c + a|x|²` the
/// operator is a Kronecker sum and the eigenpairs are built from one axis.
pub fn eigendecompose(op: &DiscreteOperator) -> Result<SpectralDecomposition> {
    let len = op.grid.len();
    let asym = (0..len)
        .flat_map(|i| (0..i).map(move |j| (i, j)))
        .map(|(i, j)| (op.matrix[(i, j)] - op.matrix[(j, i)]).abs())
        .fold(0.0, f64::max);
    if asym > 1e-12 * op.matrix.amax().max(1.0) {
        return Err(Error::Eigensolver(format!("matrix not symmetric (defect {asym:e})")));
    }
    let (mut eigenvalues, vectors) = match op.potential.constant_plus_quadratic() {
        Some((c, a)) if op.grid.dim() > 1 => tensor_pairs(op, c, a)?,
        _ => sorted_pairs(&op.matrix)?,
    };
    for lam in eigenvalues.iter_mut() {
        if *lam < 0.0 {
            if *lam < -1e-10 {
                return Err(Error::Eigensolver(format!("negative eigenvalue {lam:e}")));
            }
            *lam = 0.0;
        }
    }
    let has_zero_mode = eigenvalues[0] < ZERO_MODE_THRESHOLD;
    for l in eigenvalues.iter_mut().take_while(|l| **l < ZERO_MODE_THRESHOLD) {
        *l = 0.0;
    }
    Ok(SpectralDecomposition { grid: op.grid.clone(), scheme: op.scheme, eigenvalues, vectors, has_zero_mode })
}

/// Spectral quantities checked after a decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpectralDiagnostics {
    pub orthonormality: f64,
    /// `max_k ‖Lφ_k − λ_kφ_k‖_∞ / (1 + λ_k)`.
    pub residual: f64,
    pub min_eigenvalue: f64,
}

impl SpectralDecomposition {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }
    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }
    pub fn lambda_min_positive(&self) -> f64 {
        self.eigenvalues.iter().copied().find(|&l| l >= ZERO_MODE_THRESHOLD).unwrap_or(f64::NAN)
    }
    pub fn lambda_max(&self) -> f64 {
        *self.eigenvalues.last().unwrap()
    }

    /// Eigenfunction `φ_k`, orthonormal in `Σ f g hⁿ`.
    pub fn eigenfunction(&self, k: usize) -> GridFunction {
        let s = 1.0 / self.grid.weight().sqrt();
        let v: Vec<f64> = self.vectors.column(k).iter().map(|x| x * s).collect();
        GridFunction::new(&self.grid, v).expect("shape")
    }

    pub fn diagnostics(&self, op: &DiscreteOperator) -> SpectralDiagnostics {
        let gram = self.vectors.transpose() * &self.vectors;
        let len = self.len();
        let mut orth: f64 = 0.0;
        for i in 0..len {
            for j in 0..len {
                let target = if i == j { 1.0 } else { 0.0 };
                orth = orth.max((gram[(i, j)] - target).abs());
            }
        }
        let av = &op.matrix * &self.vectors;
        let s = 1.0 / self.grid.weight().sqrt();
        let mut residual: f64 = 0.0;
        for k in 0..len {
            let lam = self.eigenvalues[k];
            let r = (0..len).map(|i| (av[(i, k)] - lam * self.vectors[(i, k)]).abs()).fold(0.0, f64::max);
            residual = residual.max(r * s / (1.0 + lam));
        }
        SpectralDiagnostics { orthonormality: orth, residual, min_eigenvalue: self.eigenvalues[0] }
    }

    pub fn multiplier_values(&self, m: &Multiplier) -> Result<Vec<f64>> {
        self.eigenvalues
            .iter()
            .map(|&l| {
                let v = m.eval(l);
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(Error::InvalidParameter(format!("multiplier non-finite at λ = {l:e}")))
                }
            })
            .collect()
    }

    /// Table of `Σ_k w_k φ_k(x) φ_k(y)` for per-mode weights `w_k`.
    pub fn kernel_from_weights(&self, w: &[f64]) -> DMatrix<f64> {
        let mut b = self.vectors.clone();
        for (k, mut col) in b.column_iter_mut().enumerate() {
            col *= w[k];
        }
        let mut k = &b * self.vectors.transpose();
        k /= self.grid.weight();
        k
    }

    /// Multiply the spectral coefficients of `f` by `w_k`.
    pub fn apply_weights(&self, w: &[f64], f: &GridFunction) -> GridFunction {
        let fv = DVector::from_column_slice(f.values());
        let mut c = self.vectors.tr_mul(&fv);
        for (k, ck) in c.iter_mut().enumerate() {
            *ck *= w[k];
        }
        let out = &self.vectors * c;
        GridFunction::new(&self.grid, out.as_slice().to_vec()).expect("shape")
    }

    /// Euclidean coefficients `⟨ψ_k, f⟩`; the weighted ones are `h^{n/2}` times these.
    pub fn coefficients(&self, f: &GridFunction) -> Vec<f64> {
        let fv = DVector::from_column_slice(f.values());
        self.vectors.tr_mul(&fv).as_slice().to_vec()
    }

    /// Inverse of [`Self::coefficients`]: `Σ_k c_k ψ_k`.
    pub fn synthesize(&self, c: &[f64]) -> GridFunction {
        let out = &self.vectors * DVector::from_column_slice(c);
        GridFunction::new(&self.grid, out.as_slice().to_vec()).expect("shape")
    }

    pub fn apply_multiplier(&self, m: &Multiplier, f: &GridFunction) -> Result<GridFunction> {
        if f.grid() != &self.grid {
            return Err(Error::ShapeMismatch { expected: self.grid.len(), got: f.values().len() });
        }
        Ok(self.apply_weights(&self.multiplier_values(m)?, f))
    }

    /// Weighted projection of `f` onto the zero mode (0 when none exists).
    pub fn zero_mode_overlap(&self, f: &GridFunction) -> f64 {
        if !self.has_zero_mode {
            return 0.0;
        }
        let phi = self.eigenfunction(0);
        phi.dot(f)
    }

    /// Remove the zero-mode component.
    pub fn project_out_zero_mode(&self, f: &GridFunction) -> GridFunction {
        if !self.has_zero_mode {
            return f.clone();
        }
        let w: Vec<f64> = (0..self.len()).map(|k| if k == 0 { 0.0 } else { 1.0 }).collect();
        self.apply_weights(&w, f)
    }
}

/// Spectral multipliers `m(λ)`.
#[derive(Clone)]
pub enum Multiplier {
    Identity,
    Heat { t: f64 },
    FracHeat { alpha: f64, t: f64 },
    Poisson { t: f64 },
    /// `(tλ^α)^β e^{-tλ^α}`.
    FracDerivative { alpha: f64, beta: f64, t: f64 },
    /// `λ^{αβ} e^{-tλ^α}`, the unscaled `∂_t^β` of the fractional semigroup.
    TimeDerivative { alpha: f64, beta: f64, t: f64 },
    /// `t^m (-λ)^m e^{-tλ}`.
    HeatTimeDerivative { m: u32, t: f64 },
    /// `t^m (-λ^α)^m e^{-tλ^α}`.
    FracHeatTimeDerivative { alpha: f64, m: u32, t: f64 },
    /// `(-λ^α)^m e^{-tλ^α}` without the `t^m` factor.
    RawFracHeatTimeDerivative { alpha: f64, m: u32, t: f64 },
    Custom(std::sync::Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for Multiplier {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::Identity => write!(f, "Identity"),
            Self::Heat { t } => write!(f, "Heat(t={t})"),
            Self::FracHeat { alpha, t } => write!(f, "FracHeat(alpha={alpha}, t={t})"),
            Self::Poisson { t } => write!(f, "Poisson(t={t})"),
            Self::FracDerivative { alpha, beta, t } => write!(f, "FracDerivative({alpha}, {beta}, t={t})"),
            Self::TimeDerivative { alpha, beta, t } => write!(f, "TimeDerivative({alpha}, {beta}, t={t})"),
            Self::HeatTimeDerivative { m, t } => write!(f, "HeatTimeDerivative(m={m}, t={t})"),
            Self::FracHeatTimeDerivative { alpha, m, t } => {
                write!(f, "FracHeatTimeDerivative({alpha}, m={m}, t={t})")
            }
            Self::RawFracHeatTimeDerivative { alpha, m, t } => {
                write!(f, "RawFracHeatTimeDerivative({alpha}, m={m}, t={t})")
            }
            Self::Custom(_) => write!(f, "Custom"),
        }
    }
}

fn pow_alpha(l: f64, alpha: f64) -> f64 {
    if l == 0.0 {
        0.0
    } else {
        l.powf(alpha)
    }
}

impl Multiplier {
    pub fn eval(&self, l: f64) -> f64 {
        match self {
            Self::Identity => 1.0,
            Self::Heat { t } => (-t * l).exp(),
            Self::FracHeat { alpha, t } => (-t * pow_alpha(l, *alpha)).exp(),
            Self::Poisson { t } => (-t * l.sqrt()).exp(),
            Self::FracDerivative { alpha, beta, t } => {
                let u = t * pow_alpha(l, *alpha);
                if u == 0.0 {
                    0.0
                } else {
                    u.powf(*beta) * (-u).exp()
                }
            }
            Self::TimeDerivative { alpha, beta, t } => {
                let la = pow_alpha(l, *alpha);
                if la == 0.0 {
                    0.0
                } else {
                    la.powf(*beta) * (-t * la).exp()
                }
            }
            Self::HeatTimeDerivative { m, t } => {
                let u = t * l;
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                sign * u.powi(*m as i32) * (-u).exp()
            }
            Self::FracHeatTimeDerivative { alpha, m, t } => {
                let u = t * pow_alpha(l, *alpha);
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                sign * u.powi(*m as i32) * (-u).exp()
            }
            Self::RawFracHeatTimeDerivative { alpha, m, t } => {
                let la = pow_alpha(l, *alpha);
                let sign = if m % 2 == 0 { 1.0 } else { -1.0 };
                sign * la.powi(*m as i32) * (-t * la).exp()
            }
            Self::Custom(f) => f(l),
        }
    }

    fn time(&self) -> f64 {
        match self {
            Self::Heat { t }
            | Self::FracHeat { t, .. }
            | Self::Poisson { t }
            | Self::FracDerivative { t, .. }
            | Self::TimeDerivative { t, .. }
            | Self::HeatTimeDerivative { t, .. }
            | Self::FracHeatTimeDerivative { t, .. }
            | Self::RawFracHeatTimeDerivative { t, .. } => *t,
            _ => 0.0,
        }
    }

    fn params(&self) -> (Option<f64>, Option<f64>, Option<u32>) {
        match self {
            Self::FracHeat { alpha, .. } => (Some(*alpha), None, None),
            Self::Poisson { .. } => (Some(0.5), None, None),
            Self::FracDerivative { alpha, beta, .. } | Self::TimeDerivative { alpha, beta, .. } => {
                (Some(*alpha), Some(*beta), None)
            }
            Self::HeatTimeDerivative { m, .. } => (None, None, Some(*m)),
            Self::FracHeatTimeDerivative { alpha, m, .. } | Self::RawFracHeatTimeDerivative { alpha, m, .. } => {
                (Some(*alpha), None, Some(*m))
            }
            _ => (None, None, None),
        }
    }
}

/// How a kernel table was produced.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Route {
    Spectral,
    Subordinated,
    ClosedForm,
    FourierOracle,
    /// Time-fractional derivative by quadrature in the time variable.
    Quadrature,
}

impl std::fmt::Display for Route {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Spectral => "spectral",
            Self::Subordinated => "subordinated",
            Self::ClosedForm => "closed_form",
            Self::FourierOracle => "fourier_oracle",
            Self::Quadrature => "quadrature",
        })
    }
}

/// Dense two-point kernel `K(x_i, y_j)` at a fixed time.
#[derive(Debug, Clone)]
pub struct KernelSlice {
    pub grid: Grid,
    pub t: f64,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub order: Option<u32>,
    pub values: DMatrix<f64>,
    pub route: Route,
}

impl KernelSlice {
    pub fn new(grid: &Grid, t: f64, values: DMatrix<f64>, route: Route) -> Result<Self> {
        let len = grid.len();
        if values.nrows() != len || values.ncols() != len {
            return Err(Error::ShapeMismatch { expected: len * len, got: values.len() });
        }
        Ok(Self { grid: grid.clone(), t, alpha: None, beta: None, order: None, values, route })
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[(i, j)]
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.values *= c;
        out
    }

    pub fn add_scaled(&mut self, other: &KernelSlice, c: f64) -> Result<()> {
        if other.values.shape() != self.values.shape() {
            return Err(Error::ShapeMismatch { expected: self.values.len(), got: other.values.len() });
        }
        self.values.zip_apply(&other.values, |a, b| *a += c * b);
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.amax()
    }

    pub fn max_abs_diff(&self, other: &KernelSlice) -> f64 {
        (&self.values - &other.values).amax()
    }

    pub fn symmetry_defect(&self) -> f64 {
        (&self.values - self.values.transpose()).amax()
    }

    /// `∫ K(x_i, y) dy` for every `i`.
    pub fn row_integrals(&self) -> Vec<f64> {
        let w = self.grid.weight();
        self.values.row_iter().map(|r| r.sum() * w).collect()
    }

    /// Kernel of the composition `K ∘ other`.
    pub fn compose(&self, other: &KernelSlice) -> KernelSlice {
        let mut out = self.clone();
        out.values = &self.values * &other.values * self.grid.weight();
        out
    }
}

/// `K(x,y) = Σ_k m(λ_k) φ_k(x) φ_k(y)`.
pub fn multiplier_kernel(sd: &SpectralDecomposition, m: &Multiplier) -> Result<KernelSlice> {
    let w = sd.multiplier_values(m)?;
    let mut k = KernelSlice::new(&sd.grid, m.time(), sd.kernel_from_weights(&w), Route::Spectral)?;
    let (alpha, beta, order) = m.params();
    k.alpha = alpha;
    k.beta = beta;
    k.order = order;
    Ok(k)
}

/// `(Kf)(x_i) = Σ_j K(x_i, y_j) f(y_j) hⁿ`.
pub fn apply_kernel(k: &KernelSlice, f: &GridFunction) -> Result<GridFunction> {
    if f.grid() != &k.grid {
        return Err(Error::ShapeMismatch { expected: k.grid.len(), got: f.values().len() });
    }
    let fv = DVector::from_column_slice(f.values());
    let out = &k.values * fv * k.grid.weight();
    GridFunction::new(&k.grid, out.as_slice().to_vec())
}

impl HeatSource for SpectralDecomposition {
    fn heat_kernel(&self, s: f64) -> Result<KernelSlice> {
        multiplier_kernel(self, &Multiplier::Heat { t: s })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;

    fn decomposition(m: usize, bc: BoundaryCondition, v: PotentialSpec, scheme: LaplacianScheme) -> SpectralDecomposition {
        let g = build_grid(1, 16.0, m, bc).unwrap();
        eigendecompose(&assemble_with(&g, &v, scheme)).unwrap()
    }

    #[test]
    fn stencil_examples() {
        let g = build_grid(1, 16.0, 64, BoundaryCondition::Periodic).unwrap();
        let op = assemble(&g, &PotentialSpec::Zero);
        for r in op.matrix.row_iter() {
            assert!(r.sum().abs() < 1e-12);
        }
        let g = build_grid(1, 16.0, 64, BoundaryCondition::Dirichlet).unwrap();
        let op = assemble(&g, &PotentialSpec::constant(1.0).unwrap());
        let h = g.spacing();
        assert!((op.matrix[(5, 5)] - (2.0 / (h * h) + 1.0)).abs() < 1e-12);
        assert!((op.matrix[(5, 6)] + 1.0 / (h * h)).abs() < 1e-12);
    }

    #[test]
    fn periodic_fd_spectrum() {
        let sd = decomposition(64, BoundaryCondition::Periodic, PotentialSpec::Zero, LaplacianScheme::FiniteDifference);
        let h = 0.5;
        let mut exact: Vec<f64> =
            (0..64).map(|k| (2.0 / (h * h)) * (1.0 - (2.0 * PI * k as f64 / 64.0).cos())).collect();
        exact.sort_by(f64::total_cmp);
        for (a, b) in sd.eigenvalues.iter().zip(&exact) {
            assert!((a - b).abs() < 1e-10);
        }
        assert!(sd.has_zero_mode);
    }

    #[test]
    fn identity_kernel_is_discrete_delta() {
        let sd = decomposition(32, BoundaryCondition::Dirichlet, PotentialSpec::constant(1.0).unwrap(), LaplacianScheme::FiniteDifference);
        let k = multiplier_kernel(&sd, &Multiplier::Identity).unwrap();
        let h = sd.grid.spacing();
        for i in 0..32 {
            for j in 0..32 {
                let target = if i == j { 1.0 / h } else { 0.0 };
                assert!((k.get(i, j) - target).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn spectral_dirichlet_eigenvalues_exact() {
        let sd = decomposition(32, BoundaryCondition::Dirichlet, PotentialSpec::Zero, LaplacianScheme::Spectral);
        for (k, l) in sd.eigenvalues.iter().enumerate() {
            let exact = (PI * (k + 1) as f64 / 32.0).powi(2);
            assert!((l - exact).abs() < 1e-9 * (1.0 + exact));
        }
    }
}
