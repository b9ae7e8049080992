//! Uniform cell-centred grids on a box, grid functions, and balls.

use crate::error::{Error, Result};

/// A point of ℝⁿ, n ≤ 3; unused trailing coordinates are zero.
pub type Point = [f64; 3];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryCondition {
    Dirichlet,
    Periodic,
}

impl std::str::FromStr for BoundaryCondition {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "dirichlet" => Ok(Self::Dirichlet),
            "periodic" => Ok(Self::Periodic),
            other => Err(Error::InvalidGrid(format!("unknown boundary condition '{other}'"))),
        }
    }
}

impl std::fmt::Display for BoundaryCondition {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Dirichlet => "dirichlet",
            Self::Periodic => "periodic",
        })
    }
}

/// Box `[-L, L)ⁿ` sampled at the cell centres `-L + (i + 1/2) h`, `h = 2L/M`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    n: usize,
    half_width: f64,
    m: usize,
    h: f64,
    bc: BoundaryCondition,
}

impl Grid {
    pub fn new(n: usize, half_width: f64, m: usize, bc: BoundaryCondition) -> Result<Self> {
        if !(1..=3).contains(&n) {
            return Err(Error::InvalidGrid(format!("dimension {n} outside 1..=3")));
        }
        if m < 8 || !m.is_multiple_of(2) {
            return Err(Error::InvalidGrid(format!("M must be even and >= 8 (got {m})")));
        }
        if !(half_width > 0.0 && half_width.is_finite()) {
            return Err(Error::InvalidGrid(format!("half width must be positive (got {half_width})")));
        }
        Ok(Self { n, half_width, m, h: 2.0 * half_width / m as f64, bc })
    }

    pub fn dim(&self) -> usize {
        self.n
    }
    pub fn half_width(&self) -> f64 {
        self.half_width
    }
    pub fn points_per_axis(&self) -> usize {
        self.m
    }
    pub fn spacing(&self) -> f64 {
        self.h
    }
    pub fn bc(&self) -> BoundaryCondition {
        self.bc
    }
    /// Cell volume `hⁿ`.
    pub fn weight(&self) -> f64 {
        self.h.powi(self.n as i32)
    }
    /// Total number of points `Mⁿ`.
    pub fn len(&self) -> usize {
        self.m.pow(self.n as u32)
    }
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn axis_coord(&self, i: usize) -> f64 {
        -self.half_width + (i as f64 + 0.5) * self.h
    }

    /// Per-axis indices of a flat index; axis 0 varies slowest.
    pub fn multi_index(&self, flat: usize) -> [usize; 3] {
        let mut idx = [0usize; 3];
        let mut rem = flat;
        for d in (0..self.n).rev() {
            idx[d] = rem % self.m;
            rem /= self.m;
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx[..self.n].iter().fold(0, |acc, &i| acc * self.m + i)
    }

    pub fn point(&self, flat: usize) -> Point {
        let idx = self.multi_index(flat);
        let mut p = [0.0; 3];
        for d in 0..self.n {
            p[d] = self.axis_coord(idx[d]);
        }
        p
    }

    /// Distance between two arbitrary points, torus metric on periodic grids.
    pub fn distance(&self, a: &Point, b: &Point) -> f64 {
        let period = 2.0 * self.half_width;
        let mut s = 0.0;
        for d in 0..self.n {
            let mut delta = (a[d] - b[d]).abs();
            if self.bc == BoundaryCondition::Periodic {
                delta %= period;
                delta = delta.min(period - delta);
            }
            s += delta * delta;
        }
        s.sqrt()
    }

    pub fn point_distance(&self, i: usize, j: usize) -> f64 {
        self.distance(&self.point(i), &self.point(j))
    }

    /// Neighbour of `flat` shifted by `steps` along `axis`; `None` when it leaves a Dirichlet box.
    pub fn shifted(&self, flat: usize, axis: usize, steps: isize) -> Option<usize> {
        let mut idx = self.multi_index(flat);
        let m = self.m as isize;
        let k = idx[axis] as isize + steps;
        let k = match self.bc {
            BoundaryCondition::Periodic => k.rem_euclid(m),
            BoundaryCondition::Dirichlet if (0..m).contains(&k) => k,
            BoundaryCondition::Dirichlet => return None,
        };
        idx[axis] = k as usize;
        Some(self.flat_index(&idx))
    }

    /// True when some axis index is on the outermost layer of a Dirichlet grid.
    pub fn in_boundary_layer(&self, flat: usize) -> bool {
        if self.bc == BoundaryCondition::Periodic {
            return false;
        }
        let idx = self.multi_index(flat);
        idx[..self.n].iter().any(|&i| i == 0 || i + 1 == self.m)
    }

    /// Points with every coordinate in `[-L/2, L/2)`.
    pub fn inner_half_indices(&self) -> Vec<usize> {
        (0..self.len()).filter(|&i| self.in_inner_half(i)).collect()
    }

    pub fn in_inner_half(&self, flat: usize) -> bool {
        let p = self.point(flat);
        let half = 0.5 * self.half_width;
        p[..self.n].iter().all(|&x| x >= -half && x < half)
    }

    /// Every `stride`-th inner-half point along each axis.
    pub fn inner_sublattice(&self, stride: usize) -> Vec<usize> {
        let half = 0.5 * self.half_width;
        let axis: Vec<usize> = (0..self.m)
            .filter(|&i| {
                let x = self.axis_coord(i);
                x >= -half && x < half
            })
            .collect();
        let axis: Vec<usize> = axis.into_iter().step_by(stride.max(1)).collect();
        let mut out = Vec::new();
        let count = axis.len().pow(self.n as u32);
        for k in 0..count {
            let mut rem = k;
            let mut idx = [0usize; 3];
            for d in (0..self.n).rev() {
                idx[d] = axis[rem % axis.len()];
                rem /= axis.len();
            }
            out.push(self.flat_index(&idx));
        }
        out
    }

    pub fn zeros(&self) -> GridFunction {
        GridFunction { grid: self.clone(), values: vec![0.0; self.len()] }
    }

    pub fn from_fn(&self, f: impl Fn(&Point) -> f64) -> GridFunction {
        let values = (0..self.len()).map(|i| f(&self.point(i))).collect();
        GridFunction { grid: self.clone(), values }
    }
}

/// Convenience constructor mirroring [`Grid::new`].
pub fn build_grid(n: usize, half_width: f64, m: usize, bc: BoundaryCondition) -> Result<Grid> {
    Grid::new(n, half_width, m, bc)
}

/// One real value per grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Grid,
    values: Vec<f64>,
}

impl GridFunction {
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(Error::ShapeMismatch { expected: grid.len(), got: values.len() });
        }
        Ok(Self { grid: grid.clone(), values })
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }
    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self { grid: self.grid.clone(), values: self.values.iter().map(|v| c * v).collect() }
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Weighted L² norm `(Σ f² hⁿ)^{1/2}`.
    pub fn l2_norm(&self) -> f64 {
        (self.values.iter().map(|v| v * v).sum::<f64>() * self.grid.weight()).sqrt()
    }

    /// Weighted inner product `Σ f g hⁿ`.
    pub fn dot(&self, other: &GridFunction) -> f64 {
        self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum::<f64>() * self.grid.weight()
    }

    pub fn check_finite(&self) -> Result<()> {
        match self.values.iter().position(|v| !v.is_finite()) {
            Some(i) => Err(Error::NonFinite(i)),
            None => Ok(()),
        }
    }
}

/// Midpoint rule `Σ f(x_i) hⁿ`.
pub fn grid_integrate(f: &GridFunction) -> Result<f64> {
    f.check_finite()?;
    Ok(f.values.iter().sum::<f64>() * f.grid.weight())
}

/// Grid points strictly inside `B(center, radius)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Ball {
    pub center: Point,
    pub radius: f64,
    pub members: Vec<usize>,
    /// Whether the closed ball lies inside the box.
    pub contained: bool,
}

impl Ball {
    /// Lebesgue measure of the continuum ball.
    pub fn volume(&self, n: usize) -> f64 {
        unit_ball_volume(n) * self.radius.powi(n as i32)
    }
}

pub fn unit_ball_volume(n: usize) -> f64 {
    match n {
        1 => 2.0,
        2 => std::f64::consts::PI,
        3 => 4.0 * std::f64::consts::PI / 3.0,
        _ => f64::NAN,
    }
}

/// Surface measure of the unit sphere in ℝⁿ.
pub fn unit_sphere_area(n: usize) -> f64 {
    n as f64 * unit_ball_volume(n)
}

pub fn ball_points(grid: &Grid, center: &Point, radius: f64) -> Result<Ball> {
    let n = grid.dim();
    let h = grid.spacing();
    let l = grid.half_width();
    // restrict the scan to the bounding index box (all points on periodic grids)
    let members: Vec<usize> = if grid.bc() == BoundaryCondition::Periodic || radius >= l {
        (0..grid.len()).filter(|&i| grid.distance(&grid.point(i), center) < radius).collect()
    } else {
        let mut lo = [0usize; 3];
        let mut hi = [0usize; 3];
        for d in 0..n {
            let a = ((center[d] - radius + l) / h - 0.5).floor().max(0.0) as usize;
            let b = ((center[d] + radius + l) / h - 0.5).ceil().max(0.0) as usize;
            lo[d] = a.min(grid.points_per_axis() - 1);
            hi[d] = b.min(grid.points_per_axis() - 1);
        }
        let mut out = Vec::new();
        let mut idx = lo;
        'scan: loop {
            let flat = grid.flat_index(&idx);
            if grid.distance(&grid.point(flat), center) < radius {
                out.push(flat);
            }
            // odometer increment over the index box
            for d in (0..n).rev() {
                if idx[d] < hi[d] {
                    idx[d] += 1;
                    continue 'scan;
                }
                idx[d] = lo[d];
            }
            break;
        }
        out.sort_unstable();
        out
    };
    if members.is_empty() {
        return Err(Error::EmptyBall { radius, spacing: h });
    }
    let contained = center[..n].iter().all(|&c| c - radius >= -l && c + radius <= l);
    Ok(Ball { center: *center, radius, members, contained })
}
