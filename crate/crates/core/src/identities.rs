//! Residual evaluation of the energy laws, multiplier identities and
//! functional inequalities on discrete states and trajectories.
//!
//! The two multiplier identities equate the boundary observation term
//! (a(1)/2) int y_xx(t,1)^2 dt with interior space-time integrals: the x^2
//! multiplier produces the terms int [y_t x^2 y_x], int x y_t^2,
//! int (3xa - x^2 a'/2) y_xx^2 and -int a' y_x^2, the x multiplier the terms
//! int [x y_t y_x], (1/2) int y_t^2 and (1/2) int (3a - x a') y_xx^2. Both
//! are exact for classical solutions, so their discrete residuals measure
//! the discretization error and must shrink under (h, dt) refinement.
//!
//! Quadrature of the a' y_x^2 integrand: a' may blow up at the degenerate
//! end in the WD class while x|a'| <= K a keeps the product integrable, so
//! the leftmost element is subdivided geometrically toward 0.

use crate::coeff::{DegeneracyClass, DegeneracyCoefficient};
use crate::dynamics::{BeamState, Trajectory};
use crate::error::{Error, Result};
use crate::femdisc::{hermite, rotation_dof, value_dof, BeamMesh, BoundaryRegime, SystemMatrices};
use crate::quadrature::{trapezoid, GaussRule};
use nalgebra::DVector;
use serde::Serialize;

/// Number of geometric subcells of the first element in weighted quadrature.
const FIRST_ELEMENT_SUBCELLS: usize = 24;

/// Named identity with both sides and the normalized residual.
#[derive(Debug, Clone, Serialize)]
pub struct IdentityResidual {
    #[serde(rename = "identity")]
    pub identity_name: String,
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    #[serde(rename = "h")]
    pub mesh_size: f64,
    pub dt: f64,
}

impl IdentityResidual {
    fn new(name: &str, lhs: f64, rhs: f64, mesh_size: f64, dt: f64) -> Self {
        let residual = (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1.0);
        Self { identity_name: name.into(), lhs, rhs, residual, mesh_size, dt }
    }
}

/// Energy history of a trajectory.
#[derive(Debug, Clone, Serialize)]
pub struct EnergyTrace {
    pub regime: BoundaryRegime,
    pub times: Vec<f64>,
    pub energies: Vec<f64>,
}

impl EnergyTrace {
    pub fn from_trajectory(traj: &Trajectory) -> Self {
        Self { regime: traj.regime, times: traj.times.clone(), energies: traj.energies.clone() }
    }
}

/// Total energy of a state: (1/2)(v^T M v + u^T S u) plus the boundary
/// stiffness terms in the feedback regime.
pub fn energy(state: &BeamState, matrices: &SystemMatrices) -> f64 {
    let sb = &matrices.stiffness + &matrices.boundary_stiffness;
    0.5 * (state.v.dot(&(&matrices.mass * &state.v)) + state.u.dot(&(&sb * &state.u)))
}

/// Max relative deviation of the energy from its initial value; zero data
/// reports zero drift by convention.
pub fn conservation_drift(traj: &Trajectory, _matrices: &SystemMatrices) -> Result<f64> {
    if !matches!(traj.regime, BoundaryRegime::Adjoint) {
        return Err(Error::WrongRegime {
            expected: "adjoint".into(),
            got: traj.regime.name().into(),
        });
    }
    let e0 = traj.energies[0];
    if e0 == 0.0 {
        return Ok(0.0);
    }
    Ok(traj
        .energies
        .iter()
        .map(|e| (e - e0).abs() / e0)
        .fold(0.0, f64::max))
}

/// Per-step residual of E(t+dt) - E(t) = -int (y_t(.,1)^2 + y_tx(.,1)^2)
/// with midpoint quadrature of the traces; returns the max over steps.
pub fn dissipation_residual(traj: &Trajectory, _matrices: &SystemMatrices) -> Result<IdentityResidual> {
    if !matches!(traj.regime, BoundaryRegime::Feedback { .. }) {
        return Err(Error::WrongRegime {
            expected: "feedback".into(),
            got: traj.regime.name().into(),
        });
    }
    let dt = traj.dt;
    let mut worst = IdentityResidual::new("dissipation", 0.0, 0.0, 0.0, dt);
    for k in 0..traj.n_steps() {
        let lhs = traj.energies[k + 1] - traj.energies[k];
        let vt = 0.5 * (traj.traces.y_t[k] + traj.traces.y_t[k + 1]);
        let vtx = 0.5 * (traj.traces.y_tx[k] + traj.traces.y_tx[k + 1]);
        let rhs = -dt * (vt * vt + vtx * vtx);
        let r = IdentityResidual::new("dissipation", lhs, rhs, 0.0, dt);
        if r.residual > worst.residual {
            worst = r;
        }
    }
    Ok(worst)
}

struct SpatialIntegrals {
    x_yt2: f64,
    weighted_yxx2_x2: f64,
    da_yx2: f64,
    yt2: f64,
    weighted_yxx2_x: f64,
    bracket_x2: f64,
    bracket_x: f64,
}

fn spatial_integrals(
    state: &BeamState,
    mesh: &BeamMesh,
    coeff: &DegeneracyCoefficient,
) -> SpatialIntegrals {
    let rule = GaussRule::new(6);
    let mut out = SpatialIntegrals {
        x_yt2: 0.0,
        weighted_yxx2_x2: 0.0,
        da_yx2: 0.0,
        yt2: 0.0,
        weighted_yxx2_x: 0.0,
        bracket_x2: 0.0,
        bracket_x: 0.0,
    };
    for e in 0..mesh.n_elements() {
        let xl = mesh.nodes()[e];
        let h = mesh.width(e);
        let dofs = [value_dof(e), rotation_dof(e), value_dof(e + 1), rotation_dof(e + 1)];
        let ue: Vec<f64> = dofs.iter().map(|&d| state.u[d]).collect();
        let ve: Vec<f64> = dofs.iter().map(|&d| state.v[d]).collect();
        let cells: Vec<f64> = if e == 0 {
            crate::quadrature::geometric_cells(h, FIRST_ELEMENT_SUBCELLS, 0.5)
        } else {
            vec![0.0, h]
        };
        for win in cells.windows(2) {
            let (xs, ws) = rule.mapped(xl + win[0], xl + win[1]);
            for (&x, &w) in xs.iter().zip(&ws) {
                let s = (x - xl) / h;
                let nv = hermite::values(s, h);
                let nd = hermite::first_derivs(s, h);
                let ndd = hermite::second_derivs(s, h);
                let (mut yt, mut yx, mut yxx) = (0.0, 0.0, 0.0);
                for i in 0..4 {
                    yt += nv[i] * ve[i];
                    yx += nd[i] * ue[i];
                    yxx += ndd[i] * ue[i];
                }
                let a = coeff.a(x);
                let da = if x > 0.0 { coeff.da(x) } else { 0.0 };
                out.x_yt2 += w * x * yt * yt;
                out.weighted_yxx2_x2 += w * (3.0 * x * a - 0.5 * x * x * da) * yxx * yxx;
                out.da_yx2 += w * da * yx * yx;
                out.yt2 += w * yt * yt;
                out.weighted_yxx2_x += w * (3.0 * a - x * da) * yxx * yxx;
                out.bracket_x2 += w * yt * x * x * yx;
                out.bracket_x += w * x * yt * yx;
            }
        }
    }
    out
}

fn multiplier_identity(
    traj: &Trajectory,
    matrices: &SystemMatrices,
    coeff: &DegeneracyCoefficient,
    x_squared: bool,
) -> Result<IdentityResidual> {
    if !matches!(traj.regime, BoundaryRegime::Adjoint) {
        return Err(Error::WrongRegime {
            expected: "adjoint".into(),
            got: traj.regime.name().into(),
        });
    }
    let states = traj
        .states
        .as_ref()
        .ok_or_else(|| Error::Precondition("trajectory must store states".into()))?;
    let mesh = &matrices.mesh;
    let dt = traj.dt;
    let n = traj.n_steps();

    let mut time_acc = [0.0; 4]; // x y_t^2 | (3xa - x^2 a'/2) y_xx^2 | a' y_x^2 | identity-specific
    let mut first = None;
    let mut last = None;
    for (k, state) in states.iter().enumerate() {
        let ints = spatial_integrals(state, mesh, coeff);
        let weight = if k == 0 || k == n { 0.5 * dt } else { dt };
        if x_squared {
            time_acc[0] += weight * ints.x_yt2;
            time_acc[1] += weight * ints.weighted_yxx2_x2;
            time_acc[2] += weight * ints.da_yx2;
        } else {
            time_acc[0] += weight * 0.5 * ints.yt2;
            time_acc[1] += weight * 0.5 * ints.weighted_yxx2_x;
        }
        if k == 0 {
            first = Some(if x_squared { ints.bracket_x2 } else { ints.bracket_x });
        }
        if k == n {
            last = Some(if x_squared { ints.bracket_x2 } else { ints.bracket_x });
        }
    }
    let bracket = last.unwrap() - first.unwrap();
    let yxx_sq: Vec<f64> = traj.traces.y_xx.iter().map(|y| y * y).collect();
    let lhs = 0.5 * matrices.a_at_one * trapezoid(&yxx_sq, dt);
    let (name, rhs) = if x_squared {
        ("multiplier_x2", bracket + time_acc[0] + time_acc[1] - time_acc[2])
    } else {
        ("multiplier_x", bracket + time_acc[0] + time_acc[1])
    };
    Ok(IdentityResidual::new(name, lhs, rhs, mesh.h_max(), dt))
}

/// Residual of the x^2-multiplier identity on an adjoint trajectory.
pub fn multiplier_identity_x2(
    traj: &Trajectory,
    matrices: &SystemMatrices,
    coeff: &DegeneracyCoefficient,
) -> Result<IdentityResidual> {
    multiplier_identity(traj, matrices, coeff, true)
}

/// Residual of the x-multiplier identity on an adjoint trajectory.
pub fn multiplier_identity_x(
    traj: &Trajectory,
    matrices: &SystemMatrices,
    coeff: &DegeneracyCoefficient,
) -> Result<IdentityResidual> {
    multiplier_identity(traj, matrices, coeff, false)
}

/// Both sides of the weighted Hardy inequality for a Hermite grid function w
/// with w(0) = 0, against the constant 4/(1-theta)^2.
#[derive(Debug, Clone, Serialize)]
pub struct HardyPoincareCheck {
    pub theta: f64,
    pub c_hp: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

/// lhs = int (a/x^2) w^2, rhs = C_HP int a (w')^2 with C_HP = 4/(1-theta)^2.
///
/// Requires theta in (0,1), a/x^theta nonincreasing on a sample grid, and
/// w(0) = 0. Near x = 0 the integrand (w/x)^2 a stays bounded because the
/// Hermite cubic vanishing at 0 factors as x q(x).
pub fn hardy_poincare_check(
    coeff: &DegeneracyCoefficient,
    theta: f64,
    w: &DVector<f64>,
    mesh: &BeamMesh,
) -> Result<HardyPoincareCheck> {
    if !(theta > 0.0 && theta < 1.0) {
        return Err(Error::Precondition(format!("theta must lie in (0,1), got {theta}")));
    }
    if w[value_dof(0)].abs() > 1e-13 {
        return Err(Error::Precondition("w(0) must vanish".into()));
    }
    // monotonicity of a/x^theta, sampled
    let mut prev = f64::INFINITY;
    for j in 1..=400 {
        let x = j as f64 / 400.0;
        let v = coeff.a(x) / x.powf(theta);
        if v > prev * (1.0 + 1e-9) {
            return Err(Error::Precondition(format!(
                "a(x)/x^theta is not nonincreasing near x = {x}"
            )));
        }
        prev = v;
    }
    let rule = GaussRule::new(6);
    let mut lhs = 0.0;
    let mut rhs_int = 0.0;
    for e in 0..mesh.n_elements() {
        let xl = mesh.nodes()[e];
        let h = mesh.width(e);
        let dofs = [value_dof(e), rotation_dof(e), value_dof(e + 1), rotation_dof(e + 1)];
        let we: Vec<f64> = dofs.iter().map(|&d| w[d]).collect();
        let cells: Vec<f64> = if e == 0 {
            crate::quadrature::geometric_cells(h, FIRST_ELEMENT_SUBCELLS, 0.5)
        } else {
            vec![0.0, h]
        };
        for win in cells.windows(2) {
            let (xs, ws) = rule.mapped(xl + win[0], xl + win[1]);
            for (&x, &wq) in xs.iter().zip(&ws) {
                let s = (x - xl) / h;
                let nv = hermite::values(s, h);
                let nd = hermite::first_derivs(s, h);
                let (mut wv, mut wp) = (0.0, 0.0);
                for i in 0..4 {
                    wv += nv[i] * we[i];
                    wp += nd[i] * we[i];
                }
                let a = coeff.a(x);
                lhs += wq * a * (wv / x) * (wv / x);
                rhs_int += wq * a * wp * wp;
            }
        }
    }
    let c_hp = 4.0 / ((1.0 - theta) * (1.0 - theta));
    let rhs = c_hp * rhs_int;
    Ok(HardyPoincareCheck { theta, c_hp, lhs, rhs, holds: lhs <= rhs * (1.0 + 1e-9) })
}

/// Which weighted space the norm chain refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum SpaceKind {
    /// Clamped space of the adjoint problem (value and rotation pinned at 1).
    H2a0,
    /// Feedback space (only the degenerate end constrained).
    K2a0,
}

/// Measured norms and the inequality chain of the space.
#[derive(Debug, Clone, Serialize)]
pub struct NormEquivalenceReport {
    pub space: SpaceKind,
    pub l2_sq: f64,
    pub h1_sq: f64,
    pub bending_sq: f64,
    pub slope_at_one_sq: f64,
    pub chain_holds: bool,
}

/// Check the norm chain on a free-DOF vector of the matching regime:
/// H2a0: ||u||^2 <= ||u'||^2 <= (1/(a(1)(2-K))) u^T S u;
/// K2a0: ||u||^2 <= ||u'||^2 <= 2(|u'(1)|^2 + u^T S u / (a(1)(2-K)))
///       <= 2 max{1, 1/(a(1)(2-K))} (|u'(1)|^2 + u^T S u).
pub fn norm_equivalence_check(
    matrices: &SystemMatrices,
    _coeff: &DegeneracyCoefficient,
    class: &DegeneracyClass,
    space: SpaceKind,
    u_free: &DVector<f64>,
) -> Result<NormEquivalenceReport> {
    match (space, matrices.regime) {
        (SpaceKind::H2a0, BoundaryRegime::Adjoint) => {}
        (SpaceKind::K2a0, BoundaryRegime::Feedback { .. }) => {}
        _ => {
            return Err(Error::Precondition(format!(
                "space {space:?} does not match regime {}",
                matrices.regime.name()
            )))
        }
    }
    let full = matrices.embed_free(u_free);
    let mesh = &matrices.mesh;
    let rule = GaussRule::new(6);
    let mut l2 = 0.0;
    let mut h1 = 0.0;
    for e in 0..mesh.n_elements() {
        let xl = mesh.nodes()[e];
        let h = mesh.width(e);
        let dofs = [value_dof(e), rotation_dof(e), value_dof(e + 1), rotation_dof(e + 1)];
        let ue: Vec<f64> = dofs.iter().map(|&d| full[d]).collect();
        let (xs, ws) = rule.mapped(xl, xl + h);
        for (&x, &wq) in xs.iter().zip(&ws) {
            let s = (x - xl) / h;
            let nv = hermite::values(s, h);
            let nd = hermite::first_derivs(s, h);
            let (mut uv, mut up) = (0.0, 0.0);
            for i in 0..4 {
                uv += nv[i] * ue[i];
                up += nd[i] * ue[i];
            }
            l2 += wq * uv * uv;
            h1 += wq * up * up;
        }
    }
    // bending energy through the assembled stiffness (no boundary part)
    let bending = {
        let su = &matrices.stiffness * &full;
        full.dot(&su)
    };
    let norm_const = 1.0 / (matrices.a_at_one * (2.0 - class.k));
    let slope_one = full[rotation_dof(mesh.n_elements())];
    let slope_sq = slope_one * slope_one;
    let tol = 1e-9 + 1e-3 * bending.abs();
    let chain_holds = match space {
        SpaceKind::H2a0 => l2 <= h1 * (1.0 + 1e-9) + 1e-12 && h1 <= norm_const * bending + tol,
        SpaceKind::K2a0 => {
            let mid = 2.0 * (slope_sq + bending * norm_const);
            let outer = 2.0 * norm_const.max(1.0) * (slope_sq + bending);
            l2 <= h1 * (1.0 + 1e-9) + 1e-12
                && h1 <= mid + tol
                && mid <= outer * (1.0 + 1e-9) + 1e-12
        }
    };
    Ok(NormEquivalenceReport {
        space,
        l2_sq: l2,
        h1_sq: h1,
        bending_sq: bending,
        slope_at_one_sq: slope_sq,
        chain_holds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::{classify, default_sample_grid, DegeneracyCoefficient};
    use crate::dynamics::{simulate, BeamState, ModalSystem};
    use crate::femdisc::{assemble, build_mesh, interpolate, Grading};
    use rand::{Rng, SeedableRng};

    fn wd_setup(n: usize, regime: BoundaryRegime) -> (DegeneracyCoefficient, DegeneracyClass, SystemMatrices) {
        let c = DegeneracyCoefficient::power_law(0.5).unwrap();
        let cls = classify(&c, &default_sample_grid()).unwrap();
        let mesh = build_mesh(n, Grading::Uniform).unwrap();
        let m = assemble(&c, &cls, &mesh, regime).unwrap();
        (c, cls, m)
    }

    #[test]
    fn energy_examples() {
        let (_, _, m) = wd_setup(8, BoundaryRegime::Adjoint);
        assert_eq!(energy(&BeamState::zero(&m), &m), 0.0);

        // u = 0, v = 1: energy is (1/2) int v^2 = 1/2 (constants are
        // reproduced exactly by the Hermite basis)
        let v = interpolate(&m.mesh, |_| 1.0, |_| 0.0);
        let st = BeamState { t: 0.0, u: nalgebra::DVector::zeros(v.len()), v };
        assert!((energy(&st, &m) - 0.5).abs() < 1e-12);

        // feedback beta = 2: a state with y(1) = 1 gains exactly 1.0 from
        // the beta term relative to the same state without boundary stiffness
        let (_, _, mf) = wd_setup(8, BoundaryRegime::Feedback { beta: 2.0, gamma: 1.0 });
        let mut u = nalgebra::DVector::zeros(mf.dof_map.n_dofs);
        u[mf.value_dof_at_one()] = 1.0;
        let st = BeamState { t: 0.0, u, v: nalgebra::DVector::zeros(mf.dof_map.n_dofs) };
        let with_b = energy(&st, &mf);
        let without_b = 0.5 * st.u.dot(&(&mf.stiffness * &st.u));
        assert!((with_b - without_b - 1.0).abs() < 1e-12);
    }

    #[test]
    fn conservation_drift_examples() {
        let (_, _, m) = wd_setup(16, BoundaryRegime::Adjoint);
        let zero = simulate(&m, &BeamState::zero(&m), 1.0, 1.0 / 16.0, None, false).unwrap();
        assert_eq!(conservation_drift(&zero, &m).unwrap(), 0.0);

        let modal = ModalSystem::new(&m).unwrap();
        let init = BeamState::from_free(&m, 0.0, &modal.shape(0), &modal.shape(1));
        let traj = simulate(&m, &init, 1000.0 / 16.0, 1.0 / 16.0, None, false).unwrap();
        assert!(conservation_drift(&traj, &m).unwrap() < 1e-10);

        let (_, _, mf) = wd_setup(8, BoundaryRegime::Feedback { beta: 1.0, gamma: 1.0 });
        let tf = simulate(&mf, &BeamState::zero(&mf), 1.0, 0.125, None, false).unwrap();
        assert!(matches!(conservation_drift(&tf, &mf), Err(Error::WrongRegime { .. })));
    }

    #[test]
    fn dissipation_residual_small_for_smooth_data() {
        let (_, _, m) = wd_setup(16, BoundaryRegime::Feedback { beta: 1.0, gamma: 1.0 });
        let zero = simulate(&m, &BeamState::zero(&m), 1.0, 1.0 / 16.0, None, false).unwrap();
        assert_eq!(dissipation_residual(&zero, &m).unwrap().residual, 0.0);

        let modal = ModalSystem::new(&m).unwrap();
        let shape = modal.shape(0);
        let scale = (0.5 * modal.omega2[0]).sqrt();
        let init = BeamState::from_free(&m, 0.0, &(shape / scale), &nalgebra::DVector::zeros(modal.n_modes()));
        let traj = simulate(&m, &init, 10.0, 1.0 / 16.0, None, false).unwrap();
        let r = dissipation_residual(&traj, &m).unwrap();
        assert!(r.residual < 1e-9, "residual {}", r.residual);
    }

    #[test]
    fn dissipation_residual_with_trapezoid_quadrature_refines_quadratically() {
        // replacing the midpoint average of the traces by their trapezoid
        // turns the exact per-step identity into an O(dt^2) one
        let mut residuals = Vec::new();
        for n in [16usize, 32] {
            let (_, _, m) = wd_setup(n, BoundaryRegime::Feedback { beta: 1.0, gamma: 1.0 });
            let modal = ModalSystem::new(&m).unwrap();
            let scale = (0.5 * modal.omega2[0]).sqrt();
            let init = BeamState::from_free(
                &m,
                0.0,
                &(modal.shape(0) / scale),
                &nalgebra::DVector::zeros(modal.n_modes()),
            );
            let dt = 1.0 / n as f64;
            let traj = simulate(&m, &init, 2.0, dt, None, false).unwrap();
            let mut worst: f64 = 0.0;
            for k in 0..traj.n_steps() {
                let lhs = traj.energies[k + 1] - traj.energies[k];
                let t0 = traj.traces.y_t[k] * traj.traces.y_t[k]
                    + traj.traces.y_tx[k] * traj.traces.y_tx[k];
                let t1 = traj.traces.y_t[k + 1] * traj.traces.y_t[k + 1]
                    + traj.traces.y_tx[k + 1] * traj.traces.y_tx[k + 1];
                let rhs = -dt * 0.5 * (t0 + t1);
                worst = worst.max((lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(1.0));
            }
            residuals.push(worst);
        }
        // midpoint-squared version is at solver tolerance; this one is not,
        // but it contracts by about 4 per dt halving
        assert!(residuals[0] > 1e-7, "unexpectedly exact: {residuals:?}");
        let ratio = residuals[0] / residuals[1];
        assert!((2.5..8.0).contains(&ratio), "contraction {ratio}: {residuals:?}");
    }

    #[test]
    fn conservation_drift_has_no_secular_growth() {
        let (_, _, m) = wd_setup(16, BoundaryRegime::Adjoint);
        let modal = ModalSystem::new(&m).unwrap();
        let init = BeamState::from_free(&m, 0.0, &modal.shape(0), &modal.shape(1));
        let dt = 1.0 / 16.0;
        let short = simulate(&m, &init, 200.0 * dt, dt, None, false).unwrap();
        let long = simulate(&m, &init, 2000.0 * dt, dt, None, false).unwrap();
        let d_short = conservation_drift(&short, &m).unwrap();
        let d_long = conservation_drift(&long, &m).unwrap();
        assert!(d_long <= 10.0 * d_short + 1e-13, "short {d_short}, long {d_long}");
    }

    #[test]
    fn multiplier_identities_zero_and_decreasing() {
        let (c, _, m) = wd_setup(16, BoundaryRegime::Adjoint);
        let zero = simulate(&m, &BeamState::zero(&m), 0.5, 1.0 / 16.0, None, true).unwrap();
        let r = multiplier_identity_x2(&zero, &m, &c).unwrap();
        assert_eq!(r.residual, 0.0);
        let r = multiplier_identity_x(&zero, &m, &c).unwrap();
        assert_eq!(r.residual, 0.0);

        // residual shrinks from n=16 to n=32 on first-eigenmode data
        let mut residuals = Vec::new();
        for n in [16usize, 32] {
            let (c, cls, m) = wd_setup(n, BoundaryRegime::Adjoint);
            let _ = cls;
            let modal = ModalSystem::new(&m).unwrap();
            let init = BeamState::from_free(
                &m,
                0.0,
                &modal.shape(0),
                &nalgebra::DVector::zeros(modal.n_modes()),
            );
            let traj = simulate(&m, &init, 1.0, 1.0 / n as f64, None, true).unwrap();
            residuals.push((
                multiplier_identity_x2(&traj, &m, &c).unwrap().residual,
                multiplier_identity_x(&traj, &m, &c).unwrap().residual,
            ));
        }
        assert!(residuals[1].0 < residuals[0].0, "{residuals:?}");
        assert!(residuals[1].1 < residuals[0].1, "{residuals:?}");
    }

    #[test]
    fn multiplier_identity_requires_states() {
        let (c, _, m) = wd_setup(16, BoundaryRegime::Adjoint);
        let modal = ModalSystem::new(&m).unwrap();
        let init = BeamState::from_free(&m, 0.0, &modal.shape(0), &nalgebra::DVector::zeros(modal.n_modes()));
        let traj = simulate(&m, &init, 0.5, 1.0 / 16.0, None, false).unwrap();
        assert!(multiplier_identity_x2(&traj, &m, &c).is_err());
    }

    #[test]
    fn hardy_poincare_analytic_case() {
        // a = x^theta, w = x: lhs = 1/(theta+1), rhs = C_HP/(theta+1)
        let theta = 0.5;
        let c = DegeneracyCoefficient::power_law(theta).unwrap();
        let mesh = build_mesh(32, Grading::Uniform).unwrap();
        let w = interpolate(&mesh, |x| x, |_| 1.0);
        let chk = hardy_poincare_check(&c, theta, &w, &mesh).unwrap();
        assert!((chk.lhs - 1.0 / 1.5).abs() < 1e-9, "lhs {}", chk.lhs);
        assert!((chk.rhs / chk.lhs - 16.0).abs() < 1e-7, "ratio {}", chk.rhs / chk.lhs);
        assert!(chk.holds);

        let w0 = nalgebra::DVector::zeros(w.len());
        let chk = hardy_poincare_check(&c, theta, &w0, &mesh).unwrap();
        assert_eq!(chk.lhs, 0.0);
        assert_eq!(chk.rhs, 0.0);
        assert!(chk.holds);
    }

    #[test]
    fn hardy_poincare_rejects_bad_preconditions() {
        let c = DegeneracyCoefficient::power_law(0.5).unwrap();
        let mesh = build_mesh(8, Grading::Uniform).unwrap();
        let w = interpolate(&mesh, |x| x, |_| 1.0);
        assert!(hardy_poincare_check(&c, 1.2, &w, &mesh).is_err());
        // theta below the exponent: a/x^theta increasing, precondition fails
        assert!(hardy_poincare_check(&c, 0.2, &w, &mesh).is_err());
        // w(0) != 0
        let wbad = interpolate(&mesh, |x| x + 1.0, |_| 1.0);
        assert!(hardy_poincare_check(&c, 0.5, &wbad, &mesh).is_err());
    }

    #[test]
    fn hardy_poincare_randomized_suite() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mesh = build_mesh(16, Grading::GeometricTowardZero { ratio: 0.6 }).unwrap();
        for _ in 0..25 {
            let theta: f64 = rng.gen_range(0.05..0.95);
            let alpha = theta * rng.gen_range(0.2..1.0);
            let c = DegeneracyCoefficient::power_law(alpha).unwrap();
            let mut w = nalgebra::DVector::from_fn(2 * 17, |_, _| rng.gen_range(-1.0..1.0));
            w[0] = 0.0;
            let chk = hardy_poincare_check(&c, theta, &w, &mesh).unwrap();
            assert!(chk.holds, "failed for theta={theta} alpha={alpha}: {chk:?}");
        }
    }

    #[test]
    fn norm_equivalence_analytic_and_random() {
        let (c, cls, m) = wd_setup(32, BoundaryRegime::Adjoint);
        // u = x^2 (1-x)^2 satisfies all four essential constraints
        let full = interpolate(&m.mesh, |x| x * x * (1.0 - x) * (1.0 - x), |x| {
            2.0 * x * (1.0 - x) * (1.0 - x) - 2.0 * x * x * (1.0 - x)
        });
        let ufree = m.restrict_free(&full);
        let rep = norm_equivalence_check(&m, &c, &cls, SpaceKind::H2a0, &ufree).unwrap();
        assert!((rep.h1_sq - 2.0 / 105.0).abs() < 1e-6, "h1 {}", rep.h1_sq);
        assert!(rep.chain_holds);

        // zero vector
        let z = nalgebra::DVector::zeros(m.dof_map.n_free());
        let rep = norm_equivalence_check(&m, &c, &cls, SpaceKind::H2a0, &z).unwrap();
        assert!(rep.chain_holds && rep.l2_sq == 0.0);

        // random constrained vectors in both spaces
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let u = nalgebra::DVector::from_fn(m.dof_map.n_free(), |_, _| rng.gen_range(-1.0..1.0));
            let rep = norm_equivalence_check(&m, &c, &cls, SpaceKind::H2a0, &u).unwrap();
            assert!(rep.chain_holds, "H2a0 chain failed: {rep:?}");
        }
        let (c2, cls2, mf) = wd_setup(32, BoundaryRegime::Feedback { beta: 1.0, gamma: 1.0 });
        for _ in 0..50 {
            let u = nalgebra::DVector::from_fn(mf.dof_map.n_free(), |_, _| rng.gen_range(-1.0..1.0));
            let rep = norm_equivalence_check(&mf, &c2, &cls2, SpaceKind::K2a0, &u).unwrap();
            assert!(rep.chain_holds, "K2a0 chain failed: {rep:?}");
        }
    }
}
