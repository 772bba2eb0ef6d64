//! The Green's function of the unit square torus and its regular part.
//!
//! `g` solves -Δg = 2π(δ₀ - 1) with mean zero, evaluated by Ewald
//! summation: a Gaussian-screened real-space lattice sum plus a rapidly
//! convergent Fourier tail. With the default splitting both tails are
//! below 1e-12 uniformly on the chart.
//!
//! The regular part J of G(p,q) = -log|x-y| + J_a(x,y) enters the bubble
//! construction only through ∇_y J_a(x,0), which is smooth across the
//! chart; its mixed second derivatives at the origin give the function 𝒥.

use crate::torus::{ChartDisplacement, Grid, ScalarField};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum GreensError {
    #[error("the Green's function is singular at zero displacement")]
    SingularInput,
    #[error("finite differencing of the regular part did not converge: estimated relative error {0:.3e}")]
    DifferencingError(f64),
}

/// Mixed derivatives of the regular part J at the origin of the chart.
#[derive(Clone, Copy, Debug)]
pub struct RegularPartJet {
    /// ∂²_{x^i y^j} J_a(0,0), symmetric for the square torus.
    pub mixed_hess: [[f64; 2]; 2],
    /// ∂³_{x^i x^j y^j} J_a(0,0) for (i,j) in row-major order.
    pub third_derivs: [f64; 4],
    /// Estimated relative differencing error of the mixed trace.
    pub trace_error: f64,
}

impl RegularPartJet {
    /// trace of the mixed Hessian; equals 𝒥(a).
    pub fn mixed_trace(&self) -> f64 {
        self.mixed_hess[0][0] + self.mixed_hess[1][1]
    }
}

/// Anything that can supply ∇_y J_a(x,0) on the chart. The direct Ewald
/// evaluator implements it exactly; `ChartGreensTable` interpolates a
/// precomputed table for hot loops.
pub trait GreensSource {
    fn grad_j_y(&self, d: ChartDisplacement) -> [f64; 2];
}

/// Ewald-summed evaluator for g and the derivatives of J.
#[derive(Clone, Debug)]
pub struct GreensEvaluator {
    /// Gaussian splitting length.
    ewald_split: f64,
    /// Lattice shells kept in the real-space sum (L∞ radius).
    real_space_cutoff: i32,
    /// Mode shells kept in the Fourier tail (L∞ radius).
    fourier_cutoff: i32,
    /// Cached Fourier data: (k1, k2, weight) with weight = e^{-4π²η²|k|²}/(2π|k|²).
    fourier: Vec<(f64, f64, f64)>,
}

impl Default for GreensEvaluator {
    fn default() -> Self {
        GreensEvaluator::new()
    }
}

/// Exponential integral E₁(x) for x > 0, accurate to ~1e-14.
fn exp_int_e1(x: f64) -> f64 {
    assert!(x > 0.0);
    if x <= 1.0 {
        // E₁(x) = -γ - ln x + Σ_{k≥1} (-1)^{k+1} x^k / (k·k!)
        const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..=30 {
            term *= -x / k as f64;
            let add = -term / k as f64;
            sum += add;
            if add.abs() < 1e-18 {
                break;
            }
        }
        -EULER_GAMMA - x.ln() + sum
    } else {
        // Continued fraction, modified Lentz.
        let tiny = 1e-300;
        let mut b = x + 1.0;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..200 {
            let a = -(i as f64) * (i as f64);
            b += 2.0;
            d = 1.0 / (a * d + b);
            c = b + a / c;
            let delta = c * d;
            h *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        h * (-x).exp()
    }
}

impl GreensEvaluator {
    pub fn new() -> Self {
        // η = 1/4: real tail e^{-r²/4η²} < 1e-13 for r > 2.75 (4 shells),
        // Fourier tail e^{-4π²η²k²} < 1e-13 for |k|² > 12 (4 shells).
        Self::with_params(0.25, 4, 4)
    }

    pub fn with_params(ewald_split: f64, real_space_cutoff: i32, fourier_cutoff: i32) -> Self {
        let mut fourier = Vec::new();
        let damp = 4.0 * PI * PI * ewald_split * ewald_split;
        for k1 in -fourier_cutoff..=fourier_cutoff {
            for k2 in -fourier_cutoff..=fourier_cutoff {
                if k1 == 0 && k2 == 0 {
                    continue;
                }
                let k_sq = (k1 * k1 + k2 * k2) as f64;
                let weight = (-damp * k_sq).exp() / (2.0 * PI * k_sq);
                fourier.push((k1 as f64, k2 as f64, weight));
            }
        }
        GreensEvaluator {
            ewald_split,
            real_space_cutoff,
            fourier_cutoff,
            fourier,
        }
    }

    pub fn ewald_split(&self) -> f64 {
        self.ewald_split
    }

    pub fn fourier_cutoff(&self) -> i32 {
        self.fourier_cutoff
    }

    /// g(d) with -Δg = 2π(δ₀ - 1) and mean zero.
    pub fn eval_g(&self, d: ChartDisplacement) -> Result<f64, GreensError> {
        if d.is_zero() {
            return Err(GreensError::SingularInput);
        }
        let inv_4eta2 = 0.25 / (self.ewald_split * self.ewald_split);
        let mut real = 0.0;
        for n1 in -self.real_space_cutoff..=self.real_space_cutoff {
            for n2 in -self.real_space_cutoff..=self.real_space_cutoff {
                let rx = d.dx + n1 as f64;
                let ry = d.dy + n2 as f64;
                let r2 = rx * rx + ry * ry;
                real += 0.5 * exp_int_e1(r2 * inv_4eta2);
            }
        }
        let mut tail = 0.0;
        for &(k1, k2, w) in &self.fourier {
            tail += w * (2.0 * PI * (k1 * d.dx + k2 * d.dy)).cos();
        }
        Ok(real + tail - 2.0 * PI * self.ewald_split * self.ewald_split)
    }

    /// ∇g(d) for d ≠ 0.
    pub fn eval_grad_g(&self, d: ChartDisplacement) -> Result<[f64; 2], GreensError> {
        if d.is_zero() {
            return Err(GreensError::SingularInput);
        }
        let w = self.grad_j_y(d);
        let r2 = d.dx * d.dx + d.dy * d.dy;
        // ∇_y J(x,0) = -∇g(x) - x/|x|²
        Ok([-w[0] - d.dx / r2, -w[1] - d.dy / r2])
    }

    /// ∇_y J_a(x,0): the smooth part of -∇g, with the removable
    /// singularity at the origin filled by its limit.
    pub fn eval_grad_j_y(&self, d: ChartDisplacement) -> [f64; 2] {
        let inv_4eta2 = 0.25 / (self.ewald_split * self.ewald_split);
        let mut out = [0.0; 2];

        // n = 0 term of Σ (x+n) e^{-z_n}/|x+n|² minus the full x/|x|²:
        // x (e^{-z} - 1)/|x|² = x expm1(-z)/|x|², smooth through x = 0.
        let r2 = d.dx * d.dx + d.dy * d.dy;
        if r2 > 0.0 {
            let f = (-r2 * inv_4eta2).exp_m1() / r2;
            out[0] += d.dx * f;
            out[1] += d.dy * f;
        }
        for n1 in -self.real_space_cutoff..=self.real_space_cutoff {
            for n2 in -self.real_space_cutoff..=self.real_space_cutoff {
                if n1 == 0 && n2 == 0 {
                    continue;
                }
                let rx = d.dx + n1 as f64;
                let ry = d.dy + n2 as f64;
                let rr = rx * rx + ry * ry;
                let f = (-rr * inv_4eta2).exp() / rr;
                out[0] += rx * f;
                out[1] += ry * f;
            }
        }
        // Subtract the Fourier part of ∇g: -2π Σ k sin(2πk·x) w(k).
        for &(k1, k2, w) in &self.fourier {
            let s = (2.0 * PI * (k1 * d.dx + k2 * d.dy)).sin() * 2.0 * PI * w;
            out[0] += k1 * s;
            out[1] += k2 * s;
        }
        out
    }

    /// 𝒥 from the holomorphic one-form definition. On the unit square
    /// torus the single L²-normalized one-form has |φ|² ≡ 1/Area = 1, so
    /// 𝒥(a) = -2π c₁ |φ(a)|² = -2π for every a.
    pub fn script_j_forms(&self) -> f64 {
        let area = 1.0;
        let c_gamma = 1.0;
        let phi_sq = 1.0 / area;
        -2.0 * PI * c_gamma * phi_sq
    }

    /// Mixed derivatives of J at the origin by symmetric finite
    /// differences of ∇_y J with Richardson extrapolation.
    pub fn regular_part_jet(&self) -> RegularPartJet {
        let w = |x: f64, y: f64| self.eval_grad_j_y(ChartDisplacement::new(x, y));

        // D_i w_j at 0 with step s.
        let mixed = |s: f64| -> [[f64; 2]; 2] {
            let px = w(s, 0.0);
            let mx = w(-s, 0.0);
            let py = w(0.0, s);
            let my = w(0.0, -s);
            [
                [(px[0] - mx[0]) / (2.0 * s), (px[1] - mx[1]) / (2.0 * s)],
                [(py[0] - my[0]) / (2.0 * s), (py[1] - my[1]) / (2.0 * s)],
            ]
        };
        let h = 1e-2;
        let d1 = mixed(h);
        let d2 = mixed(h / 2.0);
        let d3 = mixed(h / 4.0);
        let mut r1 = [[0.0; 2]; 2];
        let mut r2 = [[0.0; 2]; 2];
        let mut hess = [[0.0; 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                r1[i][j] = (4.0 * d2[i][j] - d1[i][j]) / 3.0;
                r2[i][j] = (4.0 * d3[i][j] - d2[i][j]) / 3.0;
                hess[i][j] = (16.0 * r2[i][j] - r1[i][j]) / 15.0;
            }
        }
        let trace = hess[0][0] + hess[1][1];
        let trace_error =
            ((r2[0][0] + r2[1][1]) - (r1[0][0] + r1[1][1])).abs() / trace.abs().max(1e-300);

        // ∂³_{x^i x^j y^j} J(0,0) = ∂²_{x^i x^j} of (∇_y J)_j at 0.
        let s = 2e-2;
        let mut third = [0.0; 4];
        for i in 0..2 {
            for j in 0..2 {
                let v = if i == j {
                    let shift = |t: f64| if i == 0 { w(t, 0.0)[j] } else { w(0.0, t)[j] };
                    (shift(s) - 2.0 * shift(0.0) + shift(-s)) / (s * s)
                } else {
                    (w(s, s)[j] - w(s, -s)[j] - w(-s, s)[j] + w(-s, -s)[j]) / (4.0 * s * s)
                };
                third[i * 2 + j] = v;
            }
        }

        RegularPartJet {
            mixed_hess: hess,
            third_derivs: third,
            trace_error,
        }
    }

    /// 𝒥 from the Green's-function route: trace of the mixed Hessian of J.
    pub fn script_j_greens(&self) -> Result<f64, GreensError> {
        let jet = self.regular_part_jet();
        if jet.trace_error > 1e-3 {
            return Err(GreensError::DifferencingError(jet.trace_error));
        }
        Ok(jet.mixed_trace())
    }

    /// max |-Δ_h g + 2π| over nodes more than 3h away from the
    /// singularity (the δ term is excluded by the mask).
    pub fn check_pde_residual(&self, grid: Grid) -> f64 {
        let n = grid.n();
        let h = grid.h();
        let origin = crate::torus::TorusPoint::new(0.0, 0.0);
        let sampled = ScalarField::from_fn(grid, |i, j| {
            let d = crate::torus::wrap_displacement(grid.point(i, j), origin);
            if d.is_zero() {
                0.0 // placeholder; only read by masked neighbours
            } else {
                self.eval_g(d).expect("nonzero displacement")
            }
        });
        let lap = sampled.laplacian();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let d = crate::torus::wrap_displacement(grid.point(i, j), origin);
                if d.norm() <= 3.0 * h {
                    continue;
                }
                worst = worst.max((lap.at(i, j) - 2.0 * PI).abs());
            }
        }
        worst
    }

    /// Same residual restricted to the annulus 0.1 <= |x| <= 0.5.
    pub fn pde_residual_annulus(&self, grid: Grid) -> f64 {
        let n = grid.n();
        let origin = crate::torus::TorusPoint::new(0.0, 0.0);
        let sampled = ScalarField::from_fn(grid, |i, j| {
            let d = crate::torus::wrap_displacement(grid.point(i, j), origin);
            if d.is_zero() {
                0.0
            } else {
                self.eval_g(d).expect("nonzero displacement")
            }
        });
        let lap = sampled.laplacian();
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in 0..n {
                let d = crate::torus::wrap_displacement(grid.point(i, j), origin);
                if d.norm() < 0.1 {
                    continue;
                }
                worst = worst.max((lap.at(i, j) - 2.0 * PI).abs());
            }
        }
        worst
    }

    /// Precompute a chart-wide interpolation table for ∇_y J.
    pub fn chart_table(&self, samples_per_side: usize) -> ChartGreensTable {
        ChartGreensTable::build(self, samples_per_side)
    }
}

impl GreensSource for GreensEvaluator {
    fn grad_j_y(&self, d: ChartDisplacement) -> [f64; 2] {
        self.eval_grad_j_y(d)
    }
}

/// Catmull-Rom interpolation table for ∇_y J_a(·,0) over the chart square,
/// padded so the cubic stencil never leaves the tabulated region.
#[derive(Clone, Debug)]
pub struct ChartGreensTable {
    m: usize,
    lo: f64,
    step: f64,
    // (m+1) x (m+1) samples, row-major, two components.
    data: Vec<[f64; 2]>,
}

impl ChartGreensTable {
    fn build(greens: &GreensEvaluator, samples_per_side: usize) -> Self {
        let m = samples_per_side;
        let pad = 3.0 / m as f64;
        let lo = -0.5 - pad;
        let hi = 0.5 + pad;
        let step = (hi - lo) / m as f64;
        let mut data = Vec::with_capacity((m + 1) * (m + 1));
        for i in 0..=m {
            let x = lo + i as f64 * step;
            for j in 0..=m {
                let y = lo + j as f64 * step;
                // Direct Ewald formula; valid slightly outside the chart.
                data.push(greens.eval_grad_j_y(ChartDisplacement { dx: x, dy: y }));
            }
        }
        ChartGreensTable { m, lo, step, data }
    }

    fn sample(&self, i: i64, j: i64) -> [f64; 2] {
        let i = i.clamp(0, self.m as i64) as usize;
        let j = j.clamp(0, self.m as i64) as usize;
        self.data[i * (self.m + 1) + j]
    }
}

fn catmull_rom(p0: f64, p1: f64, p2: f64, p3: f64, t: f64) -> f64 {
    let a = -0.5 * p0 + 1.5 * p1 - 1.5 * p2 + 0.5 * p3;
    let b = p0 - 2.5 * p1 + 2.0 * p2 - 0.5 * p3;
    let c = -0.5 * p0 + 0.5 * p2;
    ((a * t + b) * t + c) * t + p1
}

impl GreensSource for ChartGreensTable {
    fn grad_j_y(&self, d: ChartDisplacement) -> [f64; 2] {
        let fx = (d.dx - self.lo) / self.step;
        let fy = (d.dy - self.lo) / self.step;
        let ix = fx.floor() as i64;
        let iy = fy.floor() as i64;
        let tx = fx - ix as f64;
        let ty = fy - iy as f64;
        let mut out = [0.0; 2];
        for c in 0..2 {
            let mut rows = [0.0; 4];
            for (r, row) in rows.iter_mut().enumerate() {
                let i = ix - 1 + r as i64;
                *row = catmull_rom(
                    self.sample(i, iy - 1)[c],
                    self.sample(i, iy)[c],
                    self.sample(i, iy + 1)[c],
                    self.sample(i, iy + 2)[c],
                    ty,
                );
            }
            out[c] = catmull_rom(rows[0], rows[1], rows[2], rows[3], tx);
        }
        out
    }
}
