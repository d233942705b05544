//! The auxiliary boundary elliptic problem: find z in the feedback space with
//!
//!   int a z'' phi'' + beta z(1) phi(1) + gamma z'(1) phi'(1)
//!       = lambda phi(1) + mu phi'(1)      for all test functions phi,
//!
//! whose strong form is (a z'')'' = 0 with beta z(1) - (a z'')'(1) = lambda
//! and gamma z'(1) + (a z'')(1) = mu. Its solution bounds feed the
//! stabilization estimates; both bounds are checked against the measured
//! norms with the slack recorded.

use crate::coeff::{integral_one_over_a, DegeneracyClass, DegeneracyCoefficient, Kind};
use crate::error::{Error, Result};
use crate::femdisc::{
    assemble, hermite, rotation_dof, value_dof, BeamMesh, BoundaryRegime,
};
use crate::linalg::SpdSolver;
use crate::quadrature::GaussRule;
use nalgebra::{DMatrix, DVector};
use serde::Serialize;

/// Solution of the boundary elliptic problem with its measured norms and the
/// explicit bound constants.
#[derive(Debug, Clone)]
pub struct EllipticSolution {
    pub z: DVector<f64>,
    pub mesh: BeamMesh,
    pub lambda: f64,
    pub mu: f64,
    pub beta: f64,
    pub gamma: f64,
    pub class: DegeneracyClass,
    pub a_at_one: f64,
    pub da_at_one: f64,
    /// |||z|||^2 = int a (z'')^2 + beta z(1)^2 + gamma z'(1)^2.
    pub triple_norm_sq: f64,
    /// C^2_{a,K,lambda,mu} = C2 (|lambda| sqrt(C1) + |mu|)^2.
    pub bound_c_sq: f64,
    pub l2_norm_sq: f64,
    pub c1: f64,
    pub c2: f64,
}

/// Solve the variational problem on the K-space constraints of the class.
///
/// gamma must be positive except in the WD class, where the improved trace
/// bound keeps the problem well posed for gamma = 0 as long as the form
/// stays definite.
pub fn solve_boundary_elliptic(
    coeff: &DegeneracyCoefficient,
    class: &DegeneracyClass,
    mesh: &BeamMesh,
    beta: f64,
    gamma: f64,
    lambda: f64,
    mu: f64,
) -> Result<EllipticSolution> {
    if beta < 0.0 || gamma < 0.0 {
        return Err(Error::Precondition("beta and gamma must be nonnegative".into()));
    }
    if gamma == 0.0 && class.kind == Kind::StronglyDegenerate {
        return Err(Error::OutOfScope(
            "strongly degenerate elliptic problem with gamma = 0 is an open problem".into(),
        ));
    }
    // the feedback regime carries the right essential constraints; its
    // beta/gamma are irrelevant here because the boundary form is rebuilt
    let base = assemble(coeff, class, mesh, BoundaryRegime::Feedback { beta: 1.0, gamma: 1.0 })?;
    let n = mesh.n_elements();
    let (ev, er) = (value_dof(n), rotation_dof(n));
    let nf = base.dof_map.n_free();
    let pv = base.dof_map.free_position(ev).expect("value at 1 is free");
    let pr = base.dof_map.free_position(er).expect("rotation at 1 is free");
    let mut a_ff = DMatrix::from_fn(nf, nf, |i, j| {
        base.stiffness[(base.dof_map.free[i], base.dof_map.free[j])]
    });
    a_ff[(pv, pv)] += beta;
    a_ff[(pr, pr)] += gamma;
    let mut rhs = DVector::zeros(nf);
    rhs[pv] = lambda;
    rhs[pr] = mu;
    let solver = SpdSolver::new(a_ff.clone())
        .map_err(|_| Error::Singular("elliptic form is not positive definite".into()))?;
    let z_free = solver.solve(&rhs);
    let z = base.embed_free(&z_free);

    let triple_norm_sq = z_free.dot(&(&a_ff * &z_free));
    let c1 = 2.0 * 1.0_f64.max(1.0 / (base.a_at_one * (2.0 - class.k)));
    // for gamma = 0 (WD only) the role of C2 is taken by A_gamma
    let c2 = if gamma > 0.0 {
        1.0_f64.max(1.0 / gamma)
    } else {
        1.0 + integral_one_over_a(coeff, class)?
    };
    let bound_c_sq = c2 * (lambda.abs() * c1.sqrt() + mu.abs()).powi(2);
    let l2_norm_sq = l2_norm_sq(&z, mesh);
    Ok(EllipticSolution {
        z,
        mesh: mesh.clone(),
        lambda,
        mu,
        beta,
        gamma,
        class: *class,
        a_at_one: coeff.a(1.0),
        da_at_one: coeff.da(1.0),
        triple_norm_sq,
        bound_c_sq,
        l2_norm_sq,
        c1,
        c2,
    })
}

fn l2_norm_sq(z: &DVector<f64>, mesh: &BeamMesh) -> f64 {
    let rule = GaussRule::new(6);
    let mut total = 0.0;
    for e in 0..mesh.n_elements() {
        let xl = mesh.nodes()[e];
        let h = mesh.width(e);
        let dofs = [value_dof(e), rotation_dof(e), value_dof(e + 1), rotation_dof(e + 1)];
        let ze: Vec<f64> = dofs.iter().map(|&d| z[d]).collect();
        let (xs, ws) = rule.mapped(xl, xl + h);
        for (&x, &w) in xs.iter().zip(&ws) {
            let s = (x - xl) / h;
            let nv = hermite::values(s, h);
            let v: f64 = (0..4).map(|i| nv[i] * ze[i]).sum();
            total += w * v * v;
        }
    }
    total
}

/// Verification record of the two solution bounds and the strong-form
/// residuals of the boundary system.
#[derive(Debug, Clone, Serialize)]
pub struct EllipticReport {
    pub triple_norm_sq: f64,
    pub triple_bound: f64,
    pub triple_holds: bool,
    pub triple_slack: f64,
    pub l2_norm_sq: f64,
    pub l2_bound: f64,
    pub l2_holds: bool,
    pub l2_slack: f64,
    /// WD-improved L2 bound when applicable (must not exceed the general one).
    pub l2_bound_wd: Option<f64>,
    /// Deviation of a z'' from linearity across interior elements,
    /// normalized by its boundary magnitude.
    pub interior_residual: f64,
    /// |beta z(1) - (a z'')'(1) - lambda|.
    pub bc_value_residual: f64,
    /// |gamma z'(1) + (a z'')(1) - mu|.
    pub bc_rotation_residual: f64,
}

/// Check both solution estimates and the strong-form residuals.
///
/// The boundary fluxes (a z'')(1) and (a z'')'(1) are recovered from the last
/// element: z'' is linear there, so a z'' differentiates analytically.
pub fn elliptic_estimate_check(
    sol: &EllipticSolution,
    coeff: &DegeneracyCoefficient,
    class: &DegeneracyClass,
) -> Result<EllipticReport> {
    let mesh = &sol.mesh;
    let n = mesh.n_elements();

    // bounds
    let triple_bound = sol.bound_c_sq;
    let triple_holds = sol.triple_norm_sq <= triple_bound * (1.0 + 1e-9);
    let l2_bound = sol.c1 * sol.c2 * sol.bound_c_sq;
    let l2_holds = sol.l2_norm_sq <= l2_bound * (1.0 + 1e-9);
    let l2_bound_wd = if class.is_wd() {
        let one_over_a = integral_one_over_a(coeff, class)?;
        let a_gamma = if sol.gamma != 0.0 {
            1.0_f64.max(1.0 / sol.gamma).min(1.0 + one_over_a)
        } else {
            1.0 + one_over_a
        };
        let c_wd_sq = a_gamma * (sol.lambda.abs() * sol.c1.sqrt() + sol.mu.abs()).powi(2);
        Some(sol.c1 * a_gamma * c_wd_sq)
    } else {
        None
    };

    // interior: a z'' sampled at element midpoints must be affine in x;
    // measure the width-weighted L2 deviation from the best affine fit so
    // the pointwise junk of the vanishing-weight tail cannot dominate
    let mut samples = Vec::with_capacity(n);
    for e in 0..n {
        let xm = 0.5 * (mesh.nodes()[e] + mesh.nodes()[e + 1]);
        let (_, _, zxx) = crate::femdisc::evaluate(&sol.z, mesh, xm);
        samples.push((xm, coeff.a(xm) * zxx, mesh.width(e)));
    }
    let interior_residual = {
        let sw: f64 = samples.iter().map(|s| s.2).sum();
        let sx: f64 = samples.iter().map(|s| s.2 * s.0).sum();
        let sxx: f64 = samples.iter().map(|s| s.2 * s.0 * s.0).sum();
        let sf: f64 = samples.iter().map(|s| s.2 * s.1).sum();
        let sxf: f64 = samples.iter().map(|s| s.2 * s.0 * s.1).sum();
        let det = sw * sxx - sx * sx;
        let slope = (sw * sxf - sx * sf) / det;
        let icept = (sxx * sf - sx * sxf) / det;
        let dev2: f64 = samples
            .iter()
            .map(|s| s.2 * (s.1 - icept - slope * s.0) * (s.1 - icept - slope * s.0))
            .sum();
        let scale2: f64 = samples.iter().map(|s| s.2 * s.1 * s.1).sum();
        (dev2 / scale2.max(1e-300)).sqrt()
    };

    // boundary rows from the last element: z'' = p + q (x - x_{n-1}) there
    let h = mesh.width(n - 1);
    let dofs =
        [value_dof(n - 1), rotation_dof(n - 1), value_dof(n), rotation_dof(n)];
    let ze: Vec<f64> = dofs.iter().map(|&d| sol.z[d]).collect();
    let dd1 = hermite::second_derivs(1.0, h);
    let zxx1: f64 = (0..4).map(|i| dd1[i] * ze[i]).sum();
    // third derivative of the cubic is constant on the element
    let ddd = [12.0 / (h * h * h), 6.0 / (h * h), -12.0 / (h * h * h), 6.0 / (h * h)];
    let zxxx: f64 = (0..4).map(|i| ddd[i] * ze[i]).sum();
    let az_at_one = sol.a_at_one * zxx1;
    let az_prime_at_one = sol.da_at_one * zxx1 + sol.a_at_one * zxxx;
    let z1 = sol.z[value_dof(n)];
    let zp1 = sol.z[rotation_dof(n)];
    let bc_value_residual = (sol.beta * z1 - az_prime_at_one - sol.lambda).abs();
    let bc_rotation_residual = (sol.gamma * zp1 + az_at_one - sol.mu).abs();

    Ok(EllipticReport {
        triple_norm_sq: sol.triple_norm_sq,
        triple_bound,
        triple_holds,
        triple_slack: triple_bound - sol.triple_norm_sq,
        l2_norm_sq: sol.l2_norm_sq,
        l2_bound,
        l2_holds,
        l2_slack: l2_bound - sol.l2_norm_sq,
        l2_bound_wd,
        interior_residual,
        bc_value_residual,
        bc_rotation_residual,
    })
}

/// Closed-form solution for power-law coefficients: (a z'')'' = 0 forces
/// a z'' = c1 + c2 x, and the class's essential conditions at 0 fix the
/// integration constants. Used as the independent oracle in tests and kept
/// here because the CLI reports it alongside the finite element solution.
pub fn power_law_closed_form(
    alpha: f64,
    class_kind: Kind,
    beta: f64,
    gamma: f64,
    lambda: f64,
    mu: f64,
) -> Box<dyn Fn(f64) -> (f64, f64)> {
    // z(x) and z'(x)
    match class_kind {
        Kind::WeaklyDegenerate => {
            // z'' = (c1 + c2 x) x^-alpha, z(0) = z'(0) = 0
            let a1 = 1.0 / ((1.0 - alpha) * (2.0 - alpha));
            let a2 = 1.0 / ((2.0 - alpha) * (3.0 - alpha));
            let b1 = 1.0 / (1.0 - alpha);
            let b2 = 1.0 / (2.0 - alpha);
            // beta z(1) - c2 = lambda; gamma z'(1) + c1 + c2 = mu
            let m11 = beta * a1;
            let m12 = beta * a2 - 1.0;
            let m21 = gamma * b1 + 1.0;
            let m22 = gamma * b2 + 1.0;
            let det = m11 * m22 - m12 * m21;
            let c1 = (lambda * m22 - m12 * mu) / det;
            let c2 = (m11 * mu - lambda * m21) / det;
            Box::new(move |x: f64| {
                let z = c1 * x.powf(2.0 - alpha) * a1 + c2 * x.powf(3.0 - alpha) * a2;
                let zp = c1 * x.powf(1.0 - alpha) * b1 + c2 * x.powf(2.0 - alpha) * b2;
                (z, zp)
            })
        }
        Kind::StronglyDegenerate => {
            // (a z'')(0) = 0 forces c1 = 0; rotation at 0 stays free:
            // z = c2 x^(3-alpha) A2 + d1 x
            let a2 = 1.0 / ((2.0 - alpha) * (3.0 - alpha));
            let b2 = 1.0 / (2.0 - alpha);
            // beta (c2 A2 + d1) - c2 = lambda; gamma (c2 B2 + d1) + c2 = mu
            let m11 = beta * a2 - 1.0;
            let m12 = beta;
            let m21 = gamma * b2 + 1.0;
            let m22 = gamma;
            let det = m11 * m22 - m12 * m21;
            let c2 = (lambda * m22 - m12 * mu) / det;
            let d1 = (m11 * mu - lambda * m21) / det;
            Box::new(move |x: f64| {
                let z = c2 * x.powf(3.0 - alpha) * a2 + d1 * x;
                let zp = c2 * x.powf(2.0 - alpha) * b2 + d1;
                (z, zp)
            })
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::{classify, default_sample_grid};
    use crate::femdisc::{build_mesh, Grading};

    fn graded(n: usize) -> BeamMesh {
        build_mesh(n, Grading::PowerTowardZero { exponent: 5.0 }).unwrap()
    }

    #[test]
    fn zero_data_gives_zero_solution() {
        let c = DegeneracyCoefficient::power_law(0.5).unwrap();
        let cls = classify(&c, &default_sample_grid()).unwrap();
        let sol =
            solve_boundary_elliptic(&c, &cls, &graded(16), 1.0, 1.0, 0.0, 0.0).unwrap();
        assert!(sol.z.norm() < 1e-14);
        assert!(sol.triple_norm_sq.abs() < 1e-20);
    }

    #[test]
    fn solution_is_linear_in_data() {
        let c = DegeneracyCoefficient::power_law(0.5).unwrap();
        let cls = classify(&c, &default_sample_grid()).unwrap();
        let mesh = graded(16);
        let s1 = solve_boundary_elliptic(&c, &cls, &mesh, 1.0, 1.0, 1.0, 0.5).unwrap();
        let s2 = solve_boundary_elliptic(&c, &cls, &mesh, 1.0, 1.0, 2.0, 1.0).unwrap();
        let diff = (&s2.z - &s1.z * 2.0).norm() / s2.z.norm();
        assert!(diff < 1e-12, "nonlinearity {diff}");
    }

    #[test]
    fn wd_matches_closed_form() {
        let c = DegeneracyCoefficient::power_law(0.5).unwrap();
        let cls = classify(&c, &default_sample_grid()).unwrap();
        let exact = power_law_closed_form(0.5, Kind::WeaklyDegenerate, 1.0, 1.0, 1.0, 0.0);
        let mesh = graded(128);
        let sol = solve_boundary_elliptic(&c, &cls, &mesh, 1.0, 1.0, 1.0, 0.0).unwrap();
        let (z1, zp1) = exact(1.0);
        assert!((sol.z[value_dof(128)] - z1).abs() < 1e-5, "z(1)");
        assert!((sol.z[rotation_dof(128)] - zp1).abs() < 1e-5, "z'(1)");
        // L2 error small
        let rule = GaussRule::new(6);
        let mut err2 = 0.0;
        for e in 0..mesh.n_elements() {
            let (xs, ws) = rule.mapped(mesh.nodes()[e], mesh.nodes()[e + 1]);
            for (&x, &w) in xs.iter().zip(&ws) {
                let (zv, _, _) = crate::femdisc::evaluate(&sol.z, &mesh, x);
                err2 += w * (zv - exact(x).0).powi(2);
            }
        }
        assert!(err2.sqrt() < 1e-5, "L2 err {}", err2.sqrt());
    }

    #[test]
    fn sd_matches_closed_form_with_free_rotation() {
        let c = DegeneracyCoefficient::power_law(1.5).unwrap();
        let cls = classify(&c, &default_sample_grid()).unwrap();
        let exact = power_law_closed_form(1.5, Kind::StronglyDegenerate, 1.0, 1.0, 1.0, 0.0);
        let mesh = graded(64);
        let sol = solve_boundary_elliptic(&c, &cls, &mesh, 1.0, 1.0, 1.0, 0.0).unwrap();
        let (z1, _) = exact(1.0);
        assert!((sol.z[value_dof(64)] - z1).abs() < 1e-6, "z(1): {} vs {z1}", sol.z[value_dof(64)]);
        // rotation at 0 is a genuine unknown here
        assert!(sol.z[rotation_dof(0)].abs() > 1e-3);
    }

    #[test]
    fn estimates_hold_with_slack() {
        let c = DegeneracyCoefficient::power_law(0.5).unwrap();
        let cls = classify(&c, &default_sample_grid()).unwrap();
        let sol = solve_boundary_elliptic(&c, &cls, &graded(64), 1.0, 1.0, 1.0, 0.0).unwrap();
        let rep = elliptic_estimate_check(&sol, &c, &cls).unwrap();
        assert!(rep.triple_holds && rep.l2_holds, "{rep:?}");
        assert!(rep.triple_slack > 0.0 && rep.l2_slack > 0.0);
        // WD bound tightens or matches the general one
        let wd = rep.l2_bound_wd.unwrap();
        assert!(wd <= rep.l2_bound * (1.0 + 1e-12));
        // strong-form residuals at the discretization level
        assert!(rep.interior_residual < 1e-3, "interior {}", rep.interior_residual);
        assert!(rep.bc_value_residual < 5e-2, "bc value {}", rep.bc_value_residual);
        assert!(rep.bc_rotation_residual < 5e-2, "bc rot {}", rep.bc_rotation_residual);
    }

    #[test]
    fn bc_residuals_converge_at_first_order() {
        let c = DegeneracyCoefficient::power_law(0.5).unwrap();
        let cls = classify(&c, &default_sample_grid()).unwrap();
        let mut previous = f64::INFINITY;
        for n in [32usize, 64, 128] {
            let sol = solve_boundary_elliptic(&c, &cls, &graded(n), 1.0, 1.0, 1.0, 0.0).unwrap();
            let rep = elliptic_estimate_check(&sol, &c, &cls).unwrap();
            let worst = rep.bc_value_residual.max(rep.bc_rotation_residual);
            assert!(worst < 0.6 * previous, "n={n}: {worst} vs {previous}");
            previous = worst;
        }
    }

    #[test]
    fn gamma_zero_only_for_wd() {
        let c = DegeneracyCoefficient::power_law(1.5).unwrap();
        let cls = classify(&c, &default_sample_grid()).unwrap();
        assert!(matches!(
            solve_boundary_elliptic(&c, &cls, &graded(16), 1.0, 0.0, 1.0, 0.0),
            Err(Error::OutOfScope(_))
        ));
        let c = DegeneracyCoefficient::power_law(0.5).unwrap();
        let cls = classify(&c, &default_sample_grid()).unwrap();
        let sol = solve_boundary_elliptic(&c, &cls, &graded(16), 1.0, 0.0, 1.0, 0.0).unwrap();
        assert!(sol.z.norm().is_finite());
    }

    #[test]
    fn time_differentiated_data_from_feedback_traces() {
        // feeding (lambda, mu) = (y_t(t,1), y_tx(t,1)) keeps the estimates valid
        use crate::dynamics::{simulate, BeamState, ModalSystem};
        use crate::femdisc::assemble;
        let c = DegeneracyCoefficient::power_law(0.5).unwrap();
        let cls = classify(&c, &default_sample_grid()).unwrap();
        let mesh = build_mesh(16, Grading::Uniform).unwrap();
        let m = assemble(&c, &cls, &mesh, BoundaryRegime::Feedback { beta: 1.0, gamma: 1.0 })
            .unwrap();
        let modal = ModalSystem::new(&m).unwrap();
        let init = BeamState::from_free(
            &m,
            0.0,
            &modal.shape(0),
            &nalgebra::DVector::zeros(modal.n_modes()),
        );
        let traj = simulate(&m, &init, 1.0, 1.0 / 16.0, None, false).unwrap();
        let gm = graded(32);
        for k in [0usize, 8, 16] {
            let lam = traj.traces.y_t[k];
            let mu = traj.traces.y_tx[k];
            let sol = solve_boundary_elliptic(&c, &cls, &gm, 1.0, 1.0, lam, mu).unwrap();
            let rep = elliptic_estimate_check(&sol, &c, &cls).unwrap();
            assert!(rep.triple_holds && rep.l2_holds, "step {k}: {rep:?}");
        }
    }
}
