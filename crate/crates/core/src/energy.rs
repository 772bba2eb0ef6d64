//! The ε-regularized Dirichlet energy E_ε[u] = ½∫ |∇u|² + ε|Δu|², its
//! first and second variations, the topological degree, and closed-form
//! expansion oracles for the model family.
//!
//! The Dirichlet pairing uses central differences and the biharmonic
//! pairing the squared five-point stencil, so the strong-form residual
//! assembled from the adjoint stencils is the exact derivative of the
//! discrete energy.

use crate::torus::{ScalarField, Vec3Field};
use std::f64::consts::PI;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnergyError {
    #[error("field is not unit-norm: worst deviation {0:.3e}")]
    NotUnitNorm(f64),
    #[error("variation field is not tangent: worst |V.u| = {0:.3e}")]
    NotTangent(f64),
    #[error("no balanced scale exists for nonnegative script J = {0}")]
    NonnegativeScriptJ(f64),
}

/// One energy evaluation, split into its two quadratic parts.
#[derive(Clone, Copy, Debug)]
pub struct EnergyBreakdown {
    pub dirichlet: f64,
    /// ½∫|Δu|², before multiplication by ε.
    pub biharmonic: f64,
    pub epsilon: f64,
    pub total: f64,
}

/// E_ε[u] with the global ½ convention on both terms.
pub fn energy(u: &Vec3Field, epsilon: f64) -> Result<EnergyBreakdown, EnergyError> {
    let defect = u.unit_defect();
    if defect > 1e-8 {
        return Err(EnergyError::NotUnitNorm(defect));
    }
    Ok(energy_unchecked(u, epsilon))
}

/// Same as [`energy`] without the unit-norm precondition check; the
/// minimizer's inner loop keeps |u| = 1 by construction.
pub fn energy_unchecked(u: &Vec3Field, epsilon: f64) -> EnergyBreakdown {
    let (ux, uy) = u.grad();
    let dirichlet = 0.5 * (ux.inner_l2(&ux) + uy.inner_l2(&uy));
    let lap = u.laplacian();
    let biharmonic = 0.5 * lap.inner_l2(&lap);
    EnergyBreakdown {
        dirichlet,
        biharmonic,
        epsilon,
        total: dirichlet + epsilon * biharmonic,
    }
}

/// dE_ε(u)[V] = ∫ ∇u·∇V + ε ∫ Δu·ΔV for pointwise-tangent V.
pub fn first_variation(u: &Vec3Field, epsilon: f64, v: &Vec3Field) -> Result<f64, EnergyError> {
    let worst = v.max_abs_dot(u);
    if worst > 1e-8 {
        return Err(EnergyError::NotTangent(worst));
    }
    let (ux, uy) = u.grad();
    let (vx, vy) = v.grad();
    let mut total = ux.inner_l2(&vx) + uy.inner_l2(&vy);
    total += epsilon * u.laplacian().inner_l2(&v.laplacian());
    Ok(total)
}

/// Strong-form Euler-Lagrange residual: the pointwise tangential
/// projection of -Δu + εΔ²u, assembled from the stencil adjoints so that
/// ∫ r·V equals `first_variation` exactly for tangent V.
pub fn el_residual(u: &Vec3Field, epsilon: f64) -> Vec3Field {
    let mut r = u.laplacian_wide().scale(-1.0);
    if epsilon != 0.0 {
        let bilap = u.laplacian().laplacian();
        r = r.axpy(epsilon, &bilap);
    }
    r.project_tangent(u)
}

/// d²E_ε(u)[V,W] = ∫ ∇V·∇W - |∇u|²(V·W) + ε ∫ ΔV·ΔW - Δu·Δ(u(V·W)).
pub fn second_variation(
    u: &Vec3Field,
    epsilon: f64,
    v: &Vec3Field,
    w: &Vec3Field,
) -> Result<f64, EnergyError> {
    for t in [v, w] {
        let worst = t.max_abs_dot(u);
        if worst > 1e-8 {
            return Err(EnergyError::NotTangent(worst));
        }
    }
    let (vx, vy) = v.grad();
    let (wx, wy) = w.grad();
    let mut total = vx.inner_l2(&wx) + vy.inner_l2(&wy);

    let (ux, uy) = u.grad();
    let grad_u_sq = ScalarField::from_fn(u.grid(), |i, j| {
        let gx = ux.at(i, j);
        let gy = uy.at(i, j);
        gx[0] * gx[0] + gx[1] * gx[1] + gx[2] * gx[2] + gy[0] * gy[0] + gy[1] * gy[1] + gy[2] * gy[2]
    });
    let vw = v.dot_field(w);
    let h2 = u.h() * u.h();
    total -= grad_u_sq
        .data()
        .iter()
        .zip(vw.data())
        .map(|(g, d)| g * d)
        .sum::<f64>()
        * h2;

    if epsilon != 0.0 {
        total += epsilon * v.laplacian().inner_l2(&w.laplacian());
        let u_vw = u.mul_scalar_field(&vw);
        total -= epsilon * u.laplacian().inner_l2(&u_vw.laplacian());
    }
    Ok(total)
}

/// Topological degree by the Jacobian integral (1/4π)∫ u·(∂₁u × ∂₂u).
pub fn degree(u: &Vec3Field) -> f64 {
    let (ux, uy) = u.grad();
    let h2 = u.h() * u.h();
    let mut total = 0.0;
    for ((a, b), c) in u.data().iter().zip(ux.data()).zip(uy.data()) {
        let cross = [
            b[1] * c[2] - b[2] * c[1],
            b[2] * c[0] - b[0] * c[2],
            b[0] * c[1] - b[1] * c[0],
        ];
        total += a[0] * cross[0] + a[1] * cross[1] + a[2] * cross[2];
    }
    total * h2 / (4.0 * PI)
}

/// Inputs of the closed-form energy expansions along the model family.
#[derive(Clone, Copy, Debug)]
pub struct ExpansionInputs {
    pub script_j: f64,
    pub lambda: f64,
    pub epsilon: f64,
    /// 1 on flat surfaces, 4 on hyperbolic ones.
    pub c_gamma: f64,
}

/// Leading terms of E_ε[z]: 4π - 4π𝒥/λ² + (32π/3c_γ) ελ².
pub fn expansion_energy(inputs: &ExpansionInputs) -> f64 {
    4.0 * PI - 4.0 * PI * inputs.script_j / (inputs.lambda * inputs.lambda)
        + 32.0 * PI / (3.0 * inputs.c_gamma) * inputs.epsilon * inputs.lambda * inputs.lambda
}

/// Leading terms of ∂_λE_ε[z]: 8π𝒥/λ³ + (64π/3c_γ) ελ.
pub fn expansion_dlambda(inputs: &ExpansionInputs) -> f64 {
    8.0 * PI * inputs.script_j / inputs.lambda.powi(3)
        + 64.0 * PI / (3.0 * inputs.c_gamma) * inputs.epsilon * inputs.lambda
}

/// Leading term of ∇_A E_ε[z]: 4π ∇_A𝒥 / λ².
pub fn expansion_da(grad_j_a: f64, lambda: f64) -> f64 {
    4.0 * PI * grad_j_a / (lambda * lambda)
}

/// The balanced bubble scale (3 c_γ |𝒥| / 8ε)^{1/4}, the root of the
/// two-term λ-derivative model.
pub fn predicted_lambda(epsilon: f64, script_j: f64, c_gamma: f64) -> Result<f64, EnergyError> {
    if script_j >= 0.0 {
        return Err(EnergyError::NonnegativeScriptJ(script_j));
    }
    Ok((3.0 * c_gamma * script_j.abs() / (8.0 * epsilon)).powf(0.25))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::minimize::retract;
    use crate::torus::Grid;

    fn smooth_unit_field(grid: Grid, seed: u64) -> Vec3Field {
        let mut state = seed.wrapping_mul(0x9e3779b97f4a7c15).wrapping_add(1);
        let mut rng = move || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            (state >> 11) as f64 / (1u64 << 53) as f64 - 0.5
        };
        let mut coef = [[0.0; 6]; 3];
        for row in coef.iter_mut() {
            for c in row.iter_mut() {
                *c = rng();
            }
        }
        let h = grid.h();
        let mut f = Vec3Field::from_fn(grid, |i, j| {
            let (x, y) = (i as f64 * h * 2.0 * PI, j as f64 * h * 2.0 * PI);
            let mut v = [1.2, -0.4, 0.8];
            for (c, row) in coef.iter().enumerate() {
                v[c] += 0.3
                    * (row[0] * x.sin() + row[1] * y.cos() + row[2] * (x + y).sin()
                        + row[3] * (2.0 * x).cos()
                        + row[4] * (2.0 * y).sin()
                        + row[5] * (x - y).cos());
            }
            v
        });
        for v in f.data_mut() {
            let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
            *v = [v[0] / n, v[1] / n, v[2] / n];
        }
        f
    }

    fn smooth_tangent_field(u: &Vec3Field, seed: u64) -> Vec3Field {
        let raw = smooth_unit_field(u.grid(), seed.wrapping_add(17));
        raw.project_tangent(u)
    }

    #[test]
    fn constant_map_has_zero_energy_and_degree() {
        let grid = Grid::new(64).unwrap();
        let u = Vec3Field::constant(grid, [0.0, 0.0, 1.0]);
        let e = energy(&u, 1e-3).unwrap();
        assert_eq!(e.total, 0.0);
        assert_eq!(degree(&u), 0.0);
        let v = smooth_tangent_field(&u, 3);
        assert_eq!(first_variation(&u, 1e-3, &v).unwrap(), 0.0);
        assert_eq!(el_residual(&u, 1e-3).max_norm(), 0.0);
    }

    #[test]
    fn energy_rejects_non_unit_fields() {
        let grid = Grid::new(64).unwrap();
        let u = Vec3Field::constant(grid, [0.0, 0.0, 1.5]);
        assert!(matches!(energy(&u, 0.0), Err(EnergyError::NotUnitNorm(_))));
    }

    #[test]
    fn energy_is_rotation_invariant() {
        let grid = Grid::new(64).unwrap();
        let u = smooth_unit_field(grid, 5);
        let r = crate::linalg::rotation_about([1.0, 0.3, -0.2], 0.9);
        let mut ru = u.clone();
        for v in ru.data_mut() {
            *v = crate::linalg::mat_vec(&r, *v);
        }
        let e1 = energy(&u, 1e-4).unwrap();
        let e2 = energy(&ru, 1e-4).unwrap();
        assert!((e1.total - e2.total).abs() < 1e-12 * e1.total);
    }

    #[test]
    fn first_variation_matches_finite_differences() {
        let grid = Grid::new(128).unwrap();
        let eps = 1e-4;
        for seed in 0..5u64 {
            let u = smooth_unit_field(grid, seed);
            let v = smooth_tangent_field(&u, seed + 100);
            let dv = first_variation(&u, eps, &v).unwrap();
            let t = 1e-5;
            let ep = energy_unchecked(&retract(&u, &v, t).unwrap(), eps).total;
            let em = energy_unchecked(&retract(&u, &v, -t).unwrap(), eps).total;
            let fd = (ep - em) / (2.0 * t);
            assert!(
                (fd - dv).abs() <= 1e-8 * dv.abs().max(1e-8),
                "seed {seed}: fd {fd} vs analytic {dv}"
            );
        }
    }

    #[test]
    fn el_residual_is_adjoint_consistent() {
        let grid = Grid::new(64).unwrap();
        let eps = 1e-4;
        let u = smooth_unit_field(grid, 11);
        let r = el_residual(&u, eps);
        for seed in 0..5u64 {
            let v = smooth_tangent_field(&u, 200 + seed);
            let lhs = r.inner_l2(&v);
            let rhs = first_variation(&u, eps, &v).unwrap();
            assert!(
                (lhs - rhs).abs() <= 1e-10 * rhs.abs().max(1.0),
                "pairing {lhs} vs variation {rhs}"
            );
        }
    }

    #[test]
    fn second_variation_is_symmetric_and_matches_fd() {
        let grid = Grid::new(128).unwrap();
        let eps = 1e-4;
        let u = smooth_unit_field(grid, 21);
        let v = smooth_tangent_field(&u, 22);
        let w = smooth_tangent_field(&u, 23);
        let a = second_variation(&u, eps, &v, &w).unwrap();
        let b = second_variation(&u, eps, &w, &v).unwrap();
        assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));

        let d2 = second_variation(&u, eps, &v, &v).unwrap();
        let t = 1e-3;
        let e0 = energy_unchecked(&u, eps).total;
        let ep = energy_unchecked(&retract(&u, &v, t).unwrap(), eps).total;
        let em = energy_unchecked(&retract(&u, &v, -t).unwrap(), eps).total;
        let fd = (ep - 2.0 * e0 + em) / (t * t);
        assert!(
            (fd - d2).abs() <= 1e-4 * d2.abs(),
            "fd {fd} vs analytic {d2}"
        );
    }

    #[test]
    fn expansion_examples() {
        let base = ExpansionInputs {
            script_j: 0.0,
            lambda: 10.0,
            epsilon: 0.0,
            c_gamma: 1.0,
        };
        assert!((expansion_energy(&base) - 4.0 * PI).abs() < 1e-15);

        let at16 = ExpansionInputs {
            script_j: -2.0 * PI,
            lambda: 16.0,
            epsilon: 0.0,
            c_gamma: 1.0,
        };
        let expected = 4.0 * PI + 8.0 * PI * PI / 256.0;
        assert!((expansion_energy(&at16) - expected).abs() < 1e-12);
        assert!((expected - 12.8747958).abs() < 1e-6);

        let at20 = ExpansionInputs {
            script_j: -2.0 * PI,
            lambda: 20.0,
            epsilon: 1e-5,
            c_gamma: 1.0,
        };
        assert!((expansion_energy(&at20) - 12.89780).abs() < 1e-5);
        assert!((expansion_dlambda(&at20) + 0.006335).abs() < 1e-6);

        // root of the two-term model
        let lam = predicted_lambda(1e-5, -2.0 * PI, 1.0).unwrap();
        assert!((lam - 22.03).abs() < 0.01);
        let at_root = ExpansionInputs {
            script_j: -2.0 * PI,
            lambda: lam,
            epsilon: 1e-5,
            c_gamma: 1.0,
        };
        assert!(expansion_dlambda(&at_root).abs() < 1e-12);

        // quarter-power scaling
        let l1 = predicted_lambda(1e-5, -2.0 * PI, 1.0).unwrap();
        let l2 = predicted_lambda(1e-5 / 16.0, -2.0 * PI, 1.0).unwrap();
        assert!((l2 - 2.0 * l1).abs() < 1e-12);

        // linearity and decay of the a-derivative model
        assert_eq!(expansion_da(2.0, 8.0), 2.0 * expansion_da(1.0, 8.0));
        assert!((expansion_da(1.0, 16.0) - expansion_da(1.0, 8.0) / 4.0).abs() < 1e-15);

        assert!(matches!(
            predicted_lambda(1e-5, 0.5, 1.0),
            Err(EnergyError::NonnegativeScriptJ(_))
        ));
    }
}
