//! Recovery of bubble parameters (a, λ, R) from a computed sphere-valued
//! field: coarse closed-form estimators followed by a derivative-free
//! refinement of the z-norm distance to the model family.

use crate::greens::GreensSource;
use crate::linalg::{self, Mat3};
use crate::model::{build_z, rho_z_squared_field, stereo, BubbleParams, ModelError};
use crate::torus::{wrap_displacement, ScalarField, TorusPoint, Vec3Field};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum FitError {
    #[error("field is flat: max |grad u| = {0:.3e} < 1, no bubble to locate")]
    FlatField(f64),
    #[error("rotation covariance is rank-deficient")]
    RankDeficient,
    #[error("refinement left the basin: lambda = {lambda:.3} outside [{lo:.3}, {hi:.3}]")]
    BasinEscape { lambda: f64, lo: f64, hi: f64 },
    #[error("model evaluation failed during refinement: {0}")]
    Model(#[from] ModelError),
}

/// A fitted parameter point with its z-norm distance and the
/// coarse-to-refined history.
#[derive(Clone, Debug)]
pub struct FitResult {
    pub params: BubbleParams,
    pub z_distance: f64,
    pub stage_trace: Vec<(BubbleParams, f64)>,
}

/// Pointwise Frobenius density |∇u|² of the central-difference gradient.
fn grad_density(u: &Vec3Field) -> ScalarField {
    let (ux, uy) = u.grad();
    let mut g = ux.norm2_field();
    let g2 = uy.norm2_field();
    let n = g.n();
    for i in 0..n {
        for j in 0..n {
            g.set(i, j, g.at(i, j) + g2.at(i, j));
        }
    }
    g
}

/// Sub-node offset and peak value of the concave quadratic through
/// (-1, fm), (0, f0), (1, fp); falls back to the node itself when the
/// samples are not concave.
fn quadratic_peak(fm: f64, f0: f64, fp: f64) -> (f64, f64) {
    let curv = 2.0 * f0 - fm - fp;
    if curv <= 0.0 {
        return (0.0, f0);
    }
    let offset = ((fp - fm) / (2.0 * curv)).clamp(-0.5, 0.5);
    (offset, f0 + 0.25 * (fp - fm) * offset)
}

fn peak_of_density(g: &ScalarField) -> Result<(TorusPoint, f64), FitError> {
    let n = g.n();
    let (mut bi, mut bj, mut best) = (0usize, 0usize, f64::NEG_INFINITY);
    for i in 0..n {
        for j in 0..n {
            let v = g.at(i, j);
            if v > best {
                best = v;
                bi = i;
                bj = j;
            }
        }
    }
    if best.sqrt() < 1.0 {
        return Err(FitError::FlatField(best.sqrt()));
    }
    let (ox, px) = quadratic_peak(g.at(bi.wrapping_sub(1), bj), best, g.at(bi + 1, bj));
    let (oy, py) = quadratic_peak(g.at(bi, bj.wrapping_sub(1)), best, g.at(bi, bj + 1));
    let h = g.h();
    let a = TorusPoint::new((bi as f64 + ox) * h, (bj as f64 + oy) * h);
    // combine the two one-dimensional peak corrections
    Ok((a, px + py - best))
}

/// Bubble center: the sub-grid peak of the gradient density.
pub fn locate(u: &Vec3Field) -> Result<TorusPoint, FitError> {
    Ok(peak_of_density(&grad_density(u))?.0)
}

/// Bubble scale from the interpolated peak gradient magnitude; the model
/// has |∇π_λ|_F = 2√2 λ at its center.
///
/// The central-difference stencil sees the bubble profile at ±h and reads
/// 2λ/(1 + λ²h²) instead of 2λ, so the raw estimate is deflated by that
/// symbol factor; invert it exactly.
pub fn scale_estimate(u: &Vec3Field, _a: TorusPoint) -> Result<f64, FitError> {
    let (_, peak) = peak_of_density(&grad_density(u))?;
    let raw = peak.sqrt() / (2.0 * 2.0_f64.sqrt());
    let h2 = u.h() * u.h();
    let disc = 1.0 - 4.0 * raw * raw * h2;
    if disc > 0.0 {
        Ok((1.0 - disc.sqrt()) / (2.0 * raw * h2))
    } else {
        Ok(raw)
    }
}

/// Orthogonal frame minimizing Σ |u - R π_λ(x-a)|² over the nodes with
/// |x-a| <= 2/λ: the polar factor of the cross-covariance. The sign of
/// the determinant follows the data, so reflections are recovered too.
pub fn fit_rotation(u: &Vec3Field, a: TorusPoint, lambda: f64) -> Result<Mat3, FitError> {
    let grid = u.grid();
    let radius = 2.0 / lambda;
    let mut m = [[0.0; 3]; 3];
    for i in 0..grid.n() {
        for j in 0..grid.n() {
            let x = wrap_displacement(grid.point(i, j), a);
            if x.norm() > radius {
                continue;
            }
            let pi = stereo(lambda, [x.dx, x.dy]);
            let v = u.at(i, j);
            for c in 0..3 {
                for d in 0..3 {
                    m[c][d] += v[c] * pi[d];
                }
            }
        }
    }
    linalg::polar_factor(&m).ok_or(FitError::RankDeficient)
}

/// One z-norm objective evaluation: build the model at (a, λ) with the
/// identity frame, refit R in closed form, return (distance, R).
///
/// With |u| = |z| = 1 the distance expands as
/// ‖u - Rz‖_z² = ∫|∇u|² + ∫|∇z|² + 2∫ρ_z² - 2 tr(Rᵀ M)
/// where M is the z-inner cross-covariance; the best R over O(3) is the
/// polar factor of M.
struct Objective<'a, G: GreensSource> {
    greens: &'a G,
    u: &'a Vec3Field,
    ux: Vec3Field,
    uy: Vec3Field,
    u_dirichlet: f64,
}

impl<'a, G: GreensSource> Objective<'a, G> {
    fn new(greens: &'a G, u: &'a Vec3Field) -> Self {
        let (ux, uy) = u.grad();
        let u_dirichlet = ux.inner_l2(&ux) + uy.inner_l2(&uy);
        Objective {
            greens,
            u,
            ux,
            uy,
            u_dirichlet,
        }
    }

    fn eval(&self, params: &BubbleParams) -> Result<(f64, Mat3), FitError> {
        let grid = self.u.grid();
        let z = build_z(self.greens, params, grid)?.field;
        let (zx, zy) = z.grad();
        let rho2 = rho_z_squared_field(params, grid);
        let h2 = grid.h() * grid.h();

        let mut m = [[0.0; 3]; 3];
        let mut z_dirichlet = 0.0;
        let mut rho_mass = 0.0;
        for (idx, r2) in rho2.data().iter().enumerate() {
            let (a, b) = (self.ux.data()[idx], self.uy.data()[idx]);
            let (c, d) = (zx.data()[idx], zy.data()[idx]);
            let (uv, zv) = (self.u.data()[idx], z.data()[idx]);
            for p in 0..3 {
                for q in 0..3 {
                    m[p][q] += a[p] * c[q] + b[p] * d[q] + r2 * uv[p] * zv[q];
                }
                z_dirichlet += c[p] * c[p] + d[p] * d[p];
            }
            rho_mass += r2;
        }
        for row in &mut m {
            for v in row.iter_mut() {
                *v *= h2;
            }
        }
        let r = linalg::polar_factor(&m).ok_or(FitError::RankDeficient)?;
        let mut trace = 0.0;
        for p in 0..3 {
            for q in 0..3 {
                trace += r[p][q] * m[p][q];
            }
        }
        let dist2 =
            self.u_dirichlet + h2 * (z_dirichlet + 2.0 * rho_mass) - 2.0 * trace;
        Ok((dist2.max(0.0).sqrt(), r))
    }
}

/// Nelder-Mead over (a₁, a₂, log λ) with the frame refit in closed form
/// at every probe.
pub fn refine<G: GreensSource>(
    greens: &G,
    u: &Vec3Field,
    coarse: &BubbleParams,
) -> Result<FitResult, FitError> {
    let objective = Objective::new(greens, u);
    let (lam_lo, lam_hi) = (coarse.lambda / 4.0, coarse.lambda * 4.0);

    let make_params = |x: &[f64; 3]| -> Result<BubbleParams, FitError> {
        let lambda = x[2].exp();
        if lambda < lam_lo || lambda > lam_hi {
            return Err(FitError::BasinEscape {
                lambda,
                lo: lam_lo,
                hi: lam_hi,
            });
        }
        Ok(BubbleParams {
            a: TorusPoint::new(x[0], x[1]),
            lambda,
            rotation: linalg::IDENTITY,
        })
    };
    let eval = |x: &[f64; 3]| -> Result<(f64, Mat3), FitError> {
        objective.eval(&make_params(x)?)
    };

    let x0 = [
        coarse.a.x(),
        coarse.a.y(),
        coarse.lambda.ln(),
    ];
    let (coarse_dist, _) = eval(&x0)?;

    // initial simplex spans a fraction of the expected basin
    let steps = [0.5 / coarse.lambda, 0.5 / coarse.lambda, 0.05];
    let mut simplex: Vec<([f64; 3], f64)> = Vec::with_capacity(4);
    simplex.push((x0, coarse_dist));
    for k in 0..3 {
        let mut x = x0;
        x[k] += steps[k];
        let (f, _) = eval(&x)?;
        simplex.push((x, f));
    }

    let diameter = |s: &[([f64; 3], f64)]| -> f64 {
        let mut d: f64 = 0.0;
        for i in 0..s.len() {
            for j in i + 1..s.len() {
                for k in 0..3 {
                    d = d.max((s[i].0[k] - s[j].0[k]).abs());
                }
            }
        }
        d
    };

    for _ in 0..800 {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        if diameter(&simplex) < 1e-7 {
            break;
        }
        let centroid = {
            let mut c = [0.0; 3];
            for v in &simplex[..3] {
                for k in 0..3 {
                    c[k] += v.0[k] / 3.0;
                }
            }
            c
        };
        let worst = simplex[3];
        let probe = |t: f64| {
            let mut x = [0.0; 3];
            for k in 0..3 {
                x[k] = centroid[k] + t * (worst.0[k] - centroid[k]);
            }
            x
        };

        let xr = probe(-1.0);
        let (fr, _) = eval(&xr)?;
        if fr < simplex[0].1 {
            let xe = probe(-2.0);
            let (fe, _) = eval(&xe)?;
            simplex[3] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[2].1 {
            simplex[3] = (xr, fr);
        } else {
            let (xc, fc) = if fr < worst.1 {
                let x = probe(-0.5);
                let (f, _) = eval(&x)?;
                (x, f)
            } else {
                let x = probe(0.5);
                let (f, _) = eval(&x)?;
                (x, f)
            };
            if fc < worst.1.min(fr) {
                simplex[3] = (xc, fc);
            } else {
                // shrink toward the best vertex
                let best = simplex[0].0;
                for v in simplex.iter_mut().skip(1) {
                    for k in 0..3 {
                        v.0[k] = best[k] + 0.5 * (v.0[k] - best[k]);
                    }
                    let (f, _) = eval(&v.0)?;
                    v.1 = f;
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));

    let (best_x, best_f) = simplex[0];
    let (_, best_r) = eval(&best_x)?;
    let mut params = make_params(&best_x)?;
    params.rotation = best_r;
    Ok(FitResult {
        params,
        z_distance: best_f,
        stage_trace: vec![(*coarse, coarse_dist), (params, best_f)],
    })
}

/// Full pipeline: locate the center, invert the peak gradient for the
/// scale, Procrustes for the frame, then refine on the z-norm.
pub fn fit<G: GreensSource>(greens: &G, u: &Vec3Field) -> Result<FitResult, FitError> {
    let a = locate(u)?;
    let lambda = scale_estimate(u, a)?;
    let rotation = fit_rotation(u, a, lambda)?;
    let coarse = BubbleParams {
        a,
        lambda,
        rotation,
    };
    refine(greens, u, &coarse)
}
