//! The family of near-bubble maps z_{λ,a,R} on the torus: a stereographic
//! bubble of scale λ glued at a into a Green's-function far field, then
//! projected to the sphere and rotated.

use crate::greens::GreensSource;
use crate::linalg::{self, Mat3};
use crate::torus::{geodesic_distance, wrap_displacement, Grid, ScalarField, TorusPoint, Vec3Field};
use thiserror::Error;

/// ι = half the injectivity radius of the unit square torus.
pub const INJECTIVITY_HALF: f64 = 0.25;
/// ρ = 2ι, the chart radius.
pub const CHART_RADIUS: f64 = 0.5;
/// r = ρ/4, the inner cutoff radius.
pub const CUTOFF_INNER_RADIUS: f64 = 0.125;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("bubble scale lambda = {0} must be >= 1")]
    LambdaTooSmall(f64),
    #[error("rotation matrix is not orthogonal (defect {0:.3e})")]
    NotOrthogonal(f64),
    #[error("pre-normalization field degenerate: min |z~| = {0:.3e} < 1/2")]
    DegeneratePreNorm(f64),
    #[error("tangent basis requires lambda >= 2, got {0}")]
    LambdaTooSmallForBasis(f64),
}

/// Coordinates on the model family: center, scale and O(3) frame.
#[derive(Clone, Copy, Debug)]
pub struct BubbleParams {
    pub a: TorusPoint,
    pub lambda: f64,
    pub rotation: Mat3,
}

impl BubbleParams {
    pub fn new(a: TorusPoint, lambda: f64, rotation: Mat3) -> Result<Self, ModelError> {
        if !(lambda >= 1.0) {
            return Err(ModelError::LambdaTooSmall(lambda));
        }
        let defect = linalg::orthogonality_defect(&rotation);
        if defect > 1e-12 {
            return Err(ModelError::NotOrthogonal(defect));
        }
        Ok(BubbleParams { a, lambda, rotation })
    }

    pub fn upright(a: TorusPoint, lambda: f64) -> Result<Self, ModelError> {
        BubbleParams::new(a, lambda, linalg::IDENTITY)
    }
}

/// Radial C² cutoff: 1 on |x| <= r, 0 on |x| >= 2r, quintic smoothstep
/// in between.
#[derive(Clone, Copy, Debug)]
pub struct CutoffProfile {
    pub inner_radius: f64,
}

impl Default for CutoffProfile {
    fn default() -> Self {
        CutoffProfile {
            inner_radius: CUTOFF_INNER_RADIUS,
        }
    }
}

impl CutoffProfile {
    pub fn eval(&self, radius: f64) -> f64 {
        let r = self.inner_radius;
        if radius <= r {
            1.0
        } else if radius >= 2.0 * r {
            0.0
        } else {
            let t = (radius - r) / r;
            1.0 - t * t * t * (10.0 - 15.0 * t + 6.0 * t * t)
        }
    }
}

/// Stereographic projection at scale λ; exactly unit norm.
pub fn stereo(lambda: f64, x: [f64; 2]) -> [f64; 3] {
    let lr2 = lambda * lambda * (x[0] * x[0] + x[1] * x[1]);
    let denom = 1.0 + lr2;
    [
        2.0 * lambda * x[0] / denom,
        2.0 * lambda * x[1] / denom,
        (1.0 - lr2) / denom,
    ]
}

/// Closed-form first derivatives of π_λ.
#[derive(Clone, Copy, Debug)]
pub struct StereoJet {
    pub value: [f64; 3],
    /// grad[c][axis] = ∂_axis (π_λ)_c.
    pub grad: [[f64; 2]; 3],
    pub laplacian: [f64; 3],
    pub d_lambda: [f64; 3],
}

pub fn stereo_jet(lambda: f64, x: [f64; 2]) -> StereoJet {
    let l2 = lambda * lambda;
    let r2 = x[0] * x[0] + x[1] * x[1];
    let denom = 1.0 + l2 * r2;
    let value = stereo(lambda, x);

    let pref = 2.0 * lambda / (denom * denom);
    let grad = [
        [
            pref * (1.0 - l2 * x[0] * x[0] + l2 * x[1] * x[1]),
            pref * (-2.0 * l2 * x[0] * x[1]),
        ],
        [
            pref * (-2.0 * l2 * x[0] * x[1]),
            pref * (1.0 + l2 * x[0] * x[0] - l2 * x[1] * x[1]),
        ],
        [pref * (-2.0 * lambda * x[0]), pref * (-2.0 * lambda * x[1])],
    ];

    let lap_pref = -8.0 * l2 / (denom * denom);
    let laplacian = [lap_pref * value[0], lap_pref * value[1], lap_pref * value[2]];

    // ∂_λ π_λ = (1/λ)(x·∇)π_λ
    let d_lambda = [
        (x[0] * grad[0][0] + x[1] * grad[0][1]) / lambda,
        (x[0] * grad[1][0] + x[1] * grad[1][1]) / lambda,
        (x[0] * grad[2][0] + x[1] * grad[2][1]) / lambda,
    ];

    StereoJet {
        value,
        grad,
        laplacian,
        d_lambda,
    }
}

/// A sampled model map together with its construction data.
#[derive(Clone, Debug)]
pub struct ModelField {
    pub field: Vec3Field,
    pub params: BubbleParams,
    /// Smallest |z~| seen before normalization.
    pub min_pre_norm: f64,
    /// True when λh > 0.25 and the bubble is under-resolved.
    pub under_resolved: bool,
}

/// Sample z_{λ,a,R} on the grid: stereographic bubble plus the
/// ∇_y J correction inside the chart, Green's-function tail outside,
/// normalized to the sphere and rotated.
pub fn build_z(
    greens: &impl GreensSource,
    params: &BubbleParams,
    grid: Grid,
) -> Result<ModelField, ModelError> {
    let lambda = params.lambda;
    if !(lambda >= 1.0) {
        return Err(ModelError::LambdaTooSmall(lambda));
    }
    let cutoff = CutoffProfile::default();
    let w0 = greens.grad_j_y(wrap_displacement(params.a, params.a));
    let two_over_lambda = 2.0 / lambda;
    let n = grid.n();
    let mut min_pre_norm = f64::INFINITY;

    let mut field = Vec3Field::zeros(grid);
    for i in 0..n {
        for j in 0..n {
            let x = wrap_displacement(grid.point(i, j), params.a);
            let r = x.norm();
            let w = greens.grad_j_y(x);
            let z_tilde: [f64; 3];
            if r < INJECTIVITY_HALF {
                let phi = cutoff.eval(r);
                let mut acc = [0.0; 3];
                if phi > 0.0 {
                    let pi = stereo(lambda, [x.dx, x.dy]);
                    acc[0] = phi * (pi[0] + two_over_lambda * (w[0] - w0[0]));
                    acc[1] = phi * (pi[1] + two_over_lambda * (w[1] - w0[1]));
                    acc[2] = phi * pi[2];
                }
                if phi < 1.0 {
                    // ∇_y G(x,0) = w(x) + x/|x|²; the far-field formula.
                    let r2 = r * r;
                    let g1 = w[0] + x.dx / r2;
                    let g2 = w[1] + x.dy / r2;
                    acc[0] += (1.0 - phi) * two_over_lambda * (g1 - w0[0]);
                    acc[1] += (1.0 - phi) * two_over_lambda * (g2 - w0[1]);
                    acc[2] += (1.0 - phi) * -1.0;
                }
                z_tilde = acc;
            } else {
                let r2 = r * r;
                let g1 = w[0] + x.dx / r2;
                let g2 = w[1] + x.dy / r2;
                z_tilde = [
                    two_over_lambda * (g1 - w0[0]),
                    two_over_lambda * (g2 - w0[1]),
                    -1.0,
                ];
            }
            let norm = linalg::norm(z_tilde);
            min_pre_norm = min_pre_norm.min(norm);
            let unit = [z_tilde[0] / norm, z_tilde[1] / norm, z_tilde[2] / norm];
            field.set(i, j, linalg::mat_vec(&params.rotation, unit));
        }
    }
    if min_pre_norm < 0.5 {
        return Err(ModelError::DegeneratePreNorm(min_pre_norm));
    }
    Ok(ModelField {
        field,
        params: *params,
        min_pre_norm,
        under_resolved: lambda * grid.h() > 0.25,
    })
}

/// The bubble-concentration weight of the z-norm.
pub fn rho_z(params: &BubbleParams, p: TorusPoint) -> f64 {
    let lambda = params.lambda;
    let d = geodesic_distance(p, params.a);
    if d < INJECTIVITY_HALF {
        lambda / (1.0 + lambda * lambda * d * d)
    } else {
        lambda / (1.0 + lambda * lambda * INJECTIVITY_HALF * INJECTIVITY_HALF)
    }
}

pub fn rho_z_squared_field(params: &BubbleParams, grid: Grid) -> ScalarField {
    ScalarField::from_fn(grid, |i, j| {
        let r = rho_z(params, grid.point(i, j));
        r * r
    })
}

/// The z inner product ⟨V,W⟩_z = ∫ ∇V·∇W + ρ_z² V·W.
pub fn z_inner(v: &Vec3Field, w: &Vec3Field, params: &BubbleParams) -> f64 {
    assert_eq!(v.n(), w.n());
    let grid = v.grid();
    let (vx, vy) = v.grad();
    let (wx, wy) = w.grad();
    let mut total = vx.inner_l2(&wx) + vy.inner_l2(&wy);
    let rho2 = rho_z_squared_field(params, grid);
    let dots = v.dot_field(w);
    let h2 = grid.h() * grid.h();
    total += dots
        .data()
        .iter()
        .zip(rho2.data())
        .map(|(d, r)| d * r)
        .sum::<f64>()
        * h2;
    total
}

/// The six parameter directions of the model family at z: scale, two
/// translations (by central differences in the parameters) and three
/// rotations (exact), all projected pointwise tangent to the sphere.
pub fn tangent_basis(
    greens: &impl GreensSource,
    params: &BubbleParams,
    grid: Grid,
) -> Result<[Vec3Field; 6], ModelError> {
    if params.lambda < 2.0 {
        return Err(ModelError::LambdaTooSmallForBasis(params.lambda));
    }
    let base = build_z(greens, params, grid)?;
    let z = &base.field;

    let d_lambda_step = 1e-3 * params.lambda;
    let plus = build_z(
        greens,
        &BubbleParams {
            lambda: params.lambda + d_lambda_step,
            ..*params
        },
        grid,
    )?;
    let minus = build_z(
        greens,
        &BubbleParams {
            lambda: params.lambda - d_lambda_step,
            ..*params
        },
        grid,
    )?;
    let d_lambda = plus
        .field
        .axpy(-1.0, &minus.field)
        .scale(0.5 / d_lambda_step)
        .project_tangent(z);

    let d_a_step = 1e-4;
    let mut translations = Vec::with_capacity(2);
    for axis in 0..2 {
        let shift = |s: f64| {
            let a = if axis == 0 {
                TorusPoint::new(params.a.x() + s, params.a.y())
            } else {
                TorusPoint::new(params.a.x(), params.a.y() + s)
            };
            build_z(greens, &BubbleParams { a, ..*params }, grid)
        };
        let plus = shift(d_a_step)?;
        let minus = shift(-d_a_step)?;
        translations.push(
            plus.field
                .axpy(-1.0, &minus.field)
                .scale(0.5 / d_a_step)
                .project_tangent(z),
        );
    }

    let rot = |omega: [f64; 3]| {
        let mut out = Vec3Field::zeros(grid);
        for i in 0..grid.n() {
            for j in 0..grid.n() {
                out.set(i, j, linalg::cross(omega, z.at(i, j)));
            }
        }
        out
    };

    let t_a2 = translations.pop().unwrap();
    let t_a1 = translations.pop().unwrap();
    Ok([
        d_lambda,
        t_a1,
        t_a2,
        rot([1.0, 0.0, 0.0]),
        rot([0.0, 1.0, 0.0]),
        rot([0.0, 0.0, 1.0]),
    ])
}
