//! The unit-area flat torus R²/Z², its translation charts, the periodic
//! node-centered grid and the discrete differential operators.
//!
//! All stencils are second-order central differences with periodic
//! indexing. The grid size is a power of two so the periodic wrap is a
//! bit mask and `n * h == 1` holds exactly.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum GridError {
    #[error("grid size {0} must be a power of two >= 64")]
    BadSize(usize),
    #[error("field sizes differ: {0} vs {1}")]
    SizeMismatch(usize, usize),
}

/// A point on the unit square torus; coordinates are kept reduced into [0,1).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TorusPoint {
    x: f64,
    y: f64,
}

fn reduce_mod_1(v: f64) -> f64 {
    let r = v - v.floor();
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

impl TorusPoint {
    pub fn new(x: f64, y: f64) -> Self {
        TorusPoint {
            x: reduce_mod_1(x),
            y: reduce_mod_1(y),
        }
    }

    pub fn x(&self) -> f64 {
        self.x
    }

    pub fn y(&self) -> f64 {
        self.y
    }
}

/// Chart coordinates of a wrapped displacement, always in (-1/2, 1/2]².
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChartDisplacement {
    pub dx: f64,
    pub dy: f64,
}

impl ChartDisplacement {
    pub fn new(dx: f64, dy: f64) -> Self {
        debug_assert!(dx > -0.5 - 1e-12 && dx <= 0.5 + 1e-12);
        debug_assert!(dy > -0.5 - 1e-12 && dy <= 0.5 + 1e-12);
        ChartDisplacement { dx, dy }
    }

    pub fn norm(&self) -> f64 {
        (self.dx * self.dx + self.dy * self.dy).sqrt()
    }

    pub fn is_zero(&self) -> bool {
        self.dx == 0.0 && self.dy == 0.0
    }
}

fn wrap_coord(d: f64) -> f64 {
    let r = reduce_mod_1(d);
    if r > 0.5 {
        r - 1.0
    } else {
        r
    }
}

/// The representative of `p - a` in (-1/2, 1/2]² — the flat translation
/// chart centered at `a`.
pub fn wrap_displacement(p: TorusPoint, a: TorusPoint) -> ChartDisplacement {
    ChartDisplacement::new(wrap_coord(p.x - a.x), wrap_coord(p.y - a.y))
}

/// Flat geodesic distance on the torus; at most sqrt(2)/2.
pub fn geodesic_distance(p: TorusPoint, q: TorusPoint) -> f64 {
    wrap_displacement(p, q).norm()
}

/// Periodic node-centered grid with n points per side, spacing h = 1/n.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Grid {
    n: usize,
}

impl Grid {
    pub fn new(n: usize) -> Result<Self, GridError> {
        if n < 64 || !n.is_power_of_two() {
            return Err(GridError::BadSize(n));
        }
        Ok(Grid { n })
    }

    /// Unchecked constructor for small test grids.
    pub fn new_unchecked(n: usize) -> Self {
        assert!(n.is_power_of_two() && n >= 4);
        Grid { n }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn point(&self, i: usize, j: usize) -> TorusPoint {
        let h = self.h();
        TorusPoint::new(i as f64 * h, j as f64 * h)
    }
}

/// n x n samples of a real scalar, row-major (index = i*n + j, i along x).
#[derive(Clone, Debug, PartialEq)]
pub struct ScalarField {
    n: usize,
    data: Vec<f64>,
}

/// n x n samples of an R³ vector field, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct Vec3Field {
    n: usize,
    data: Vec<[f64; 3]>,
}

impl ScalarField {
    pub fn zeros(grid: Grid) -> Self {
        ScalarField {
            n: grid.n,
            data: vec![0.0; grid.n * grid.n],
        }
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let n = grid.n;
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        ScalarField { n, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        let m = self.n - 1;
        self.data[(i & m) * self.n + (j & m)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        let m = self.n - 1;
        self.data[(i & m) * self.n + (j & m)] = v;
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    /// Central differences per axis: (f_{i+1} - f_{i-1}) / 2h.
    pub fn grad(&self) -> (ScalarField, ScalarField) {
        let n = self.n;
        let m = n - 1;
        let inv_2h = 0.5 * n as f64;
        let mut gx = vec![0.0; n * n];
        let mut gy = vec![0.0; n * n];
        for i in 0..n {
            let ip = ((i + 1) & m) * n;
            let im = ((i + m) & m) * n;
            let row = i * n;
            for j in 0..n {
                let jp = (j + 1) & m;
                let jm = (j + m) & m;
                gx[row + j] = (self.data[ip + j] - self.data[im + j]) * inv_2h;
                gy[row + j] = (self.data[row + jp] - self.data[row + jm]) * inv_2h;
            }
        }
        (
            ScalarField { n, data: gx },
            ScalarField { n, data: gy },
        )
    }

    /// Five-point stencil (f_E + f_W + f_N + f_S - 4 f) / h².
    pub fn laplacian(&self) -> ScalarField {
        let n = self.n;
        let m = n - 1;
        let inv_h2 = (n * n) as f64;
        let mut out = vec![0.0; n * n];
        for i in 0..n {
            let ip = ((i + 1) & m) * n;
            let im = ((i + m) & m) * n;
            let row = i * n;
            for j in 0..n {
                let jp = (j + 1) & m;
                let jm = (j + m) & m;
                out[row + j] = (self.data[ip + j]
                    + self.data[im + j]
                    + self.data[row + jp]
                    + self.data[row + jm]
                    - 4.0 * self.data[row + j])
                    * inv_h2;
            }
        }
        ScalarField { n, data: out }
    }

    /// h² times the node sum; the periodic trapezoid rule, exact for
    /// resolved Fourier modes.
    pub fn integrate(&self) -> f64 {
        let h2 = 1.0 / (self.n * self.n) as f64;
        self.data.iter().sum::<f64>() * h2
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }
}

impl Vec3Field {
    pub fn zeros(grid: Grid) -> Self {
        Vec3Field {
            n: grid.n,
            data: vec![[0.0; 3]; grid.n * grid.n],
        }
    }

    pub fn constant(grid: Grid, v: [f64; 3]) -> Self {
        Vec3Field {
            n: grid.n,
            data: vec![v; grid.n * grid.n],
        }
    }

    pub fn from_fn(grid: Grid, mut f: impl FnMut(usize, usize) -> [f64; 3]) -> Self {
        let n = grid.n;
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Vec3Field { n, data }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn h(&self) -> f64 {
        1.0 / self.n as f64
    }

    pub fn grid(&self) -> Grid {
        Grid { n: self.n }
    }

    pub fn at(&self, i: usize, j: usize) -> [f64; 3] {
        let m = self.n - 1;
        self.data[(i & m) * self.n + (j & m)]
    }

    pub fn set(&mut self, i: usize, j: usize, v: [f64; 3]) {
        let m = self.n - 1;
        self.data[(i & m) * self.n + (j & m)] = v;
    }

    pub fn data(&self) -> &[[f64; 3]] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [[f64; 3]] {
        &mut self.data
    }

    /// Central differences per axis, componentwise.
    pub fn grad(&self) -> (Vec3Field, Vec3Field) {
        let n = self.n;
        let m = n - 1;
        let inv_2h = 0.5 * n as f64;
        let mut gx = vec![[0.0; 3]; n * n];
        let mut gy = vec![[0.0; 3]; n * n];
        for i in 0..n {
            let ip = ((i + 1) & m) * n;
            let im = ((i + m) & m) * n;
            let row = i * n;
            for j in 0..n {
                let jp = (j + 1) & m;
                let jm = (j + m) & m;
                for c in 0..3 {
                    gx[row + j][c] = (self.data[ip + j][c] - self.data[im + j][c]) * inv_2h;
                    gy[row + j][c] = (self.data[row + jp][c] - self.data[row + jm][c]) * inv_2h;
                }
            }
        }
        (
            Vec3Field { n, data: gx },
            Vec3Field { n, data: gy },
        )
    }

    /// Five-point stencil, componentwise.
    pub fn laplacian(&self) -> Vec3Field {
        let n = self.n;
        let m = n - 1;
        let inv_h2 = (n * n) as f64;
        let mut out = vec![[0.0; 3]; n * n];
        for i in 0..n {
            let ip = ((i + 1) & m) * n;
            let im = ((i + m) & m) * n;
            let row = i * n;
            for j in 0..n {
                let jp = (j + 1) & m;
                let jm = (j + m) & m;
                for c in 0..3 {
                    out[row + j][c] = (self.data[ip + j][c]
                        + self.data[im + j][c]
                        + self.data[row + jp][c]
                        + self.data[row + jm][c]
                        - 4.0 * self.data[row + j][c])
                        * inv_h2;
                }
            }
        }
        Vec3Field { n, data: out }
    }

    /// Composition of the central-difference gradient with its (negated)
    /// adjoint: (f_{i+2} - 2 f_i + f_{i-2}) / 4h² per axis. This is the
    /// Laplacian that pairs exactly with the central-difference Dirichlet
    /// energy under summation by parts.
    pub fn laplacian_wide(&self) -> Vec3Field {
        let n = self.n;
        let m = n - 1;
        let inv_4h2 = 0.25 * (n * n) as f64;
        let mut out = vec![[0.0; 3]; n * n];
        for i in 0..n {
            let ip = ((i + 2) & m) * n;
            let im = ((i + n - 2) & m) * n;
            let row = i * n;
            for j in 0..n {
                let jp = (j + 2) & m;
                let jm = (j + n - 2) & m;
                for c in 0..3 {
                    out[row + j][c] = (self.data[ip + j][c]
                        + self.data[im + j][c]
                        + self.data[row + jp][c]
                        + self.data[row + jm][c]
                        - 4.0 * self.data[row + j][c])
                        * inv_4h2;
                }
            }
        }
        Vec3Field { n, data: out }
    }

    /// Pointwise dot product with another field.
    pub fn dot_field(&self, other: &Vec3Field) -> ScalarField {
        assert_eq!(self.n, other.n);
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a[0] * b[0] + a[1] * b[1] + a[2] * b[2])
            .collect();
        ScalarField { n: self.n, data }
    }

    /// Grid inner product h² Σ u·v.
    pub fn inner_l2(&self, other: &Vec3Field) -> f64 {
        assert_eq!(self.n, other.n);
        let h2 = 1.0 / (self.n * self.n) as f64;
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| a[0] * b[0] + a[1] * b[1] + a[2] * b[2])
            .sum::<f64>()
            * h2
    }

    pub fn norm_l2(&self) -> f64 {
        self.inner_l2(self).sqrt()
    }

    /// Pointwise |u|², as a scalar field.
    pub fn norm2_field(&self) -> ScalarField {
        self.dot_field(self)
    }

    /// self + t * other, elementwise.
    pub fn axpy(&self, t: f64, other: &Vec3Field) -> Vec3Field {
        assert_eq!(self.n, other.n);
        let data = self
            .data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| [a[0] + t * b[0], a[1] + t * b[1], a[2] + t * b[2]])
            .collect();
        Vec3Field { n: self.n, data }
    }

    pub fn scale(&self, t: f64) -> Vec3Field {
        let data = self.data.iter().map(|a| [t * a[0], t * a[1], t * a[2]]).collect();
        Vec3Field { n: self.n, data }
    }

    /// Componentwise scaling by a scalar field.
    pub fn mul_scalar_field(&self, s: &ScalarField) -> Vec3Field {
        assert_eq!(self.n, s.n);
        let data = self
            .data
            .iter()
            .zip(&s.data)
            .map(|(a, f)| [a[0] * f, a[1] * f, a[2] * f])
            .collect();
        Vec3Field { n: self.n, data }
    }

    pub fn max_norm(&self) -> f64 {
        self.data
            .iter()
            .fold(0.0_f64, |acc, v| acc.max(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]))
            .sqrt()
    }

    /// Worst deviation of |u| from 1 over all nodes.
    pub fn unit_defect(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |acc, v| {
            acc.max(((v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt() - 1.0).abs())
        })
    }

    /// Worst pointwise |u·v| over all nodes.
    pub fn max_abs_dot(&self, other: &Vec3Field) -> f64 {
        assert_eq!(self.n, other.n);
        self.data
            .iter()
            .zip(&other.data)
            .fold(0.0_f64, |acc, (a, b)| {
                acc.max((a[0] * b[0] + a[1] * b[1] + a[2] * b[2]).abs())
            })
    }

    /// Remove the component along `base` at each node: v - (v·u)u.
    pub fn project_tangent(&self, base: &Vec3Field) -> Vec3Field {
        assert_eq!(self.n, base.n);
        let data = self
            .data
            .iter()
            .zip(&base.data)
            .map(|(v, u)| {
                let d = v[0] * u[0] + v[1] * u[1] + v[2] * u[2];
                [v[0] - d * u[0], v[1] - d * u[1], v[2] - d * u[2]]
            })
            .collect();
        Vec3Field { n: self.n, data }
    }
}
