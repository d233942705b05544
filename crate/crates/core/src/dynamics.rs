//! Time integration of the semi-discrete systems
//!
//!   M u'' + (S + B) u + D u' = 0          (feedback)
//!   M u'' + S u = 0                        (adjoint / controlled, driven DOFs
//!                                           moved to the right-hand side)
//!
//! by the implicit midpoint rule: unconditionally stable, time reversible,
//! and exactly energy conserving for the conservative case, which is what the
//! conservation, dissipation and reversibility checks lean on.
//!
//! Two equivalent realizations of the same one-step map are provided. The
//! direct path factorizes W = M + dt^2/4 (S+B) + dt/2 D once per (matrices,
//! dt) pair. The modal path diagonalizes (S+B, M) once and advances each mode
//! by its 2x2 midpoint map; with no damping the two paths agree to roundoff,
//! but the modal one evaluates energies as sums of nonnegative per-mode terms
//! and therefore tracks the conserved quantity to machine precision over long
//! runs, where quadratic-form evaluation in nodal coordinates loses digits to
//! cancellation.

use crate::error::{Error, Result};
use crate::femdisc::{BoundaryRegime, SystemMatrices};
use crate::linalg::{generalized_eigen, SpdSolver};
use nalgebra::DVector;
use serde::Serialize;

/// Displacement and velocity DOF vectors at one instant (full numbering;
/// constrained DOFs hold their prescribed values).
#[derive(Debug, Clone)]
pub struct BeamState {
    pub t: f64,
    pub u: DVector<f64>,
    pub v: DVector<f64>,
}

impl BeamState {
    pub fn zero(matrices: &SystemMatrices) -> Self {
        let n = matrices.dof_map.n_dofs;
        Self { t: 0.0, u: DVector::zeros(n), v: DVector::zeros(n) }
    }

    /// Build a full state from free-DOF vectors (constrained DOFs zero).
    pub fn from_free(
        matrices: &SystemMatrices,
        t: f64,
        u_free: &DVector<f64>,
        v_free: &DVector<f64>,
    ) -> Self {
        Self { t, u: matrices.embed_free(u_free), v: matrices.embed_free(v_free) }
    }
}

/// Boundary trace histories at x = 1, one sample per stored time.
#[derive(Debug, Clone, Default, Serialize)]
pub struct TraceSeries {
    pub y: Vec<f64>,
    pub y_x: Vec<f64>,
    pub y_t: Vec<f64>,
    pub y_tx: Vec<f64>,
    pub y_xx: Vec<f64>,
}

/// Result of a simulation: per-step energies and boundary traces, the end
/// states, and (on request) every intermediate state.
#[derive(Debug, Clone)]
pub struct Trajectory {
    pub regime: BoundaryRegime,
    /// Signed step: negative for backward runs.
    pub dt: f64,
    pub times: Vec<f64>,
    pub energies: Vec<f64>,
    pub traces: TraceSeries,
    pub initial: BeamState,
    pub last: BeamState,
    pub states: Option<Vec<BeamState>>,
}

impl Trajectory {
    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    /// CSV with header t,E,y1,yx1,yt1,ytx1,yxx1.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,E,y1,yx1,yt1,ytx1,yxx1\r\n");
        for k in 0..self.times.len() {
            out.push_str(&format!(
                "{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e},{:.12e}\r\n",
                self.times[k],
                self.energies[k],
                self.traces.y[k],
                self.traces.y_x[k],
                self.traces.y_t[k],
                self.traces.y_tx[k],
                self.traces.y_xx[k],
            ));
        }
        out
    }
}

/// Drive values of the rotation DOF at x = 1 across one step.
#[derive(Debug, Clone, Copy)]
pub struct DriveWindow {
    pub f_start: f64,
    pub f_end: f64,
    pub accel_start: f64,
    pub accel_end: f64,
}

/// One-step implicit midpoint with a reusable SPD factorization.
pub struct MidpointStepper<'a> {
    matrices: &'a SystemMatrices,
    dt: f64,
    solver: SpdSolver,
}

impl<'a> MidpointStepper<'a> {
    pub fn new(matrices: &'a SystemMatrices, dt: f64) -> Result<Self> {
        if dt == 0.0 || !dt.is_finite() {
            return Err(Error::Precondition(format!("dt must be nonzero and finite, got {dt}")));
        }
        let w = matrices.mass_free()
            + matrices.stiffness_free() * (dt * dt / 4.0)
            + matrices.damping_free() * (dt / 2.0);
        let solver = SpdSolver::new(w)?;
        Ok(Self { matrices, dt, solver })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Advance free-DOF vectors one step; returns the midpoint velocity,
    /// whose boundary entries enter the discrete dissipation identity.
    pub fn step_free(
        &self,
        u: &mut DVector<f64>,
        v: &mut DVector<f64>,
        rhs_mid: Option<&DVector<f64>>,
    ) -> DVector<f64> {
        let dt = self.dt;
        let mut b = self.matrices.mass_free() * &*v - self.matrices.stiffness_free() * &*u * (dt / 2.0);
        if let Some(g) = rhs_mid {
            b += g * (dt / 2.0);
        }
        let v_bar = self.solver.solve(&b);
        *u += &v_bar * dt;
        *v = &v_bar * 2.0 - &*v;
        v_bar
    }
}

/// Single midpoint step of the spec'd update; `simulate` reuses one
/// factorization across steps, this convenience rebuilds it.
pub fn step_midpoint(
    matrices: &SystemMatrices,
    state: &BeamState,
    dt: f64,
    drive: Option<&DriveWindow>,
) -> Result<BeamState> {
    let needs_drive = matches!(matrices.regime, BoundaryRegime::Controlled);
    if needs_drive && drive.is_none() {
        return Err(Error::Precondition("controlled regime requires a drive window".into()));
    }
    if !needs_drive && drive.is_some() {
        return Err(Error::Precondition(format!(
            "{} regime takes no drive",
            matrices.regime.name()
        )));
    }
    let stepper = MidpointStepper::new(matrices, dt)?;
    let mut u = matrices.restrict_free(&state.u);
    let mut v = matrices.restrict_free(&state.v);
    let rhs = drive.map(|w| {
        let g0 = -(matrices.mass_free_driven() * w.accel_start
            + matrices.stiffness_free_driven() * w.f_start);
        let g1 = -(matrices.mass_free_driven() * w.accel_end
            + matrices.stiffness_free_driven() * w.f_end);
        (g0 + g1) * 0.5
    });
    stepper.step_free(&mut u, &mut v, rhs.as_ref());
    let mut next = BeamState::from_free(matrices, state.t + dt, &u, &v);
    if let Some(w) = drive {
        if let Some(d) = matrices.dof_map.driven {
            next.u[d] = w.f_end;
        }
    }
    Ok(next)
}

/// Modal diagonalization of (S+B, M) on the free DOFs; the conservative
/// midpoint map decouples into per-mode 2x2 updates.
pub struct ModalSystem {
    pub omega2: DVector<f64>,
    /// M-orthonormal mode shapes as columns (free-DOF coordinates).
    pub basis: nalgebra::DMatrix<f64>,
    basis_t_m: nalgebra::DMatrix<f64>,
}

impl ModalSystem {
    pub fn new(matrices: &SystemMatrices) -> Result<Self> {
        let ge = generalized_eigen(matrices.stiffness_free(), matrices.mass_free())?;
        let basis_t_m = ge.eigenvectors.transpose() * matrices.mass_free();
        Ok(Self { omega2: ge.eigenvalues, basis: ge.eigenvectors, basis_t_m })
    }

    pub fn n_modes(&self) -> usize {
        self.omega2.len()
    }

    pub fn omega(&self, k: usize) -> f64 {
        self.omega2[k].max(0.0).sqrt()
    }

    pub fn to_modal(&self, free: &DVector<f64>) -> DVector<f64> {
        &self.basis_t_m * free
    }

    pub fn from_modal(&self, modal: &DVector<f64>) -> DVector<f64> {
        &self.basis * modal
    }

    /// Free-DOF shape of mode k.
    pub fn shape(&self, k: usize) -> DVector<f64> {
        self.basis.column(k).into_owned()
    }

    /// In-place midpoint step in modal coordinates.
    pub fn step_modal(&self, u: &mut DVector<f64>, v: &mut DVector<f64>, dt: f64) {
        for k in 0..self.n_modes() {
            let w2 = self.omega2[k].max(0.0);
            let denom = 1.0 + dt * dt / 4.0 * w2;
            let v_bar = (v[k] - dt / 2.0 * w2 * u[k]) / denom;
            u[k] += dt * v_bar;
            v[k] = 2.0 * v_bar - v[k];
        }
    }

    /// Modal energy: sum of nonnegative per-mode contributions.
    pub fn energy_modal(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        let mut e = 0.0;
        for k in 0..self.n_modes() {
            e += 0.5 * (v[k] * v[k] + self.omega2[k].max(0.0) * u[k] * u[k]);
        }
        e
    }

    /// A free-DOF row r^T u expressed in modal coordinates.
    pub fn row_to_modal(&self, row: &DVector<f64>) -> DVector<f64> {
        self.basis.transpose() * row
    }
}

/// Reusable integrator for one (matrices, dt) pair. Conservative undriven
/// regimes run on the modal path, everything else on the factorized direct
/// path; the two realize the same one-step map.
pub struct Simulator<'a> {
    matrices: &'a SystemMatrices,
    dt: f64,
    modal: Option<ModalSystem>,
    direct: Option<MidpointStepper<'a>>,
}

impl<'a> Simulator<'a> {
    pub fn new(matrices: &'a SystemMatrices, dt: f64) -> Result<Self> {
        let conservative = matrices.damping_free().norm() == 0.0
            && !matches!(matrices.regime, BoundaryRegime::Controlled);
        if conservative {
            Ok(Self { matrices, dt, modal: Some(ModalSystem::new(matrices)?), direct: None })
        } else {
            Ok(Self {
                matrices,
                dt,
                modal: None,
                direct: Some(MidpointStepper::new(matrices, dt)?),
            })
        }
    }

    /// Share a prebuilt modal system (probes, repeated runs).
    pub fn with_modal(matrices: &'a SystemMatrices, dt: f64, modal: ModalSystem) -> Self {
        Self { matrices, dt, modal: Some(modal), direct: None }
    }

    pub fn modal(&self) -> Option<&ModalSystem> {
        self.modal.as_ref()
    }

    pub fn run(
        &self,
        initial: &BeamState,
        t_span: f64,
        drive: Option<&[f64]>,
        store_states: bool,
    ) -> Result<Trajectory> {
        if t_span <= 0.0 {
            return Err(Error::Precondition(format!("time span must be positive, got {t_span}")));
        }
        let dt = self.dt;
        let n_steps = (t_span / dt.abs()).round() as usize;
        if n_steps == 0 || ((n_steps as f64) * dt.abs() - t_span).abs() > 1e-9 * t_span.max(1.0) {
            return Err(Error::Precondition(format!(
                "dt = {dt} does not divide the time span {t_span}"
            )));
        }
        let is_controlled = matches!(self.matrices.regime, BoundaryRegime::Controlled);
        if is_controlled {
            let need = n_steps + 1;
            match drive {
                None => {
                    return Err(Error::Precondition(
                        "controlled regime requires drive samples".into(),
                    ))
                }
                Some(f) if f.len() != need => {
                    return Err(Error::Precondition(format!(
                        "drive must have {need} samples, got {}",
                        f.len()
                    )))
                }
                _ => {}
            }
        } else if drive.is_some() {
            return Err(Error::Precondition(format!(
                "{} regime takes no drive",
                self.matrices.regime.name()
            )));
        }

        let m = self.matrices;
        let mut u = m.restrict_free(&initial.u);
        let mut v = m.restrict_free(&initial.v);

        // finite-difference velocity and acceleration of the drive samples
        let (f_dot, f_ddot) = match drive {
            Some(f) => drive_derivatives(f, dt),
            None => (Vec::new(), Vec::new()),
        };

        let nf = m.dof_map.n_free();
        let mut recorder = Recorder::new(m, n_steps, store_states);
        // the modal path drops no damping: it only serves conservative runs
        let conservative = m.damping_free().norm() == 0.0;
        match (&self.modal, &self.direct) {
            (Some(modal), _) if !is_controlled && conservative => {
                let mut uh = modal.to_modal(&u);
                let mut vh = modal.to_modal(&v);
                let trace_modal = modal.row_to_modal(m.trace_row_free());
                recorder.record_modal(modal, &uh, &vh, &trace_modal, initial.t);
                for k in 0..n_steps {
                    modal.step_modal(&mut uh, &mut vh, dt);
                    recorder.record_modal(modal, &uh, &vh, &trace_modal, initial.t + (k + 1) as f64 * dt);
                }
                u = modal.from_modal(&uh);
                v = modal.from_modal(&vh);
            }
            _ => {
                // direct path (feedback, controlled, or prebuilt direct)
                let local;
                let stepper = match &self.direct {
                    Some(s) => s,
                    None => {
                        local = MidpointStepper::new(m, dt)?;
                        &local
                    }
                };
                let mut g = DVector::zeros(nf);
                let gvec = |k: usize, f: &[f64], fdd: &[f64]| {
                    -(m.mass_free_driven() * fdd[k] + m.stiffness_free_driven() * f[k])
                };
                recorder.record_direct(&u, &v, drive, &f_dot, 0, initial.t);
                for k in 0..n_steps {
                    let rhs = drive.map(|f| {
                        g = (gvec(k, f, &f_ddot) + gvec(k + 1, f, &f_ddot)) * 0.5;
                        &g
                    });
                    stepper.step_free(&mut u, &mut v, rhs);
                    recorder.record_direct(
                        &u,
                        &v,
                        drive,
                        &f_dot,
                        k + 1,
                        initial.t + (k + 1) as f64 * dt,
                    );
                }
            }
        }

        let mut last = BeamState::from_free(m, initial.t + n_steps as f64 * dt, &u, &v);
        if let (Some(f), Some(d)) = (drive, m.dof_map.driven) {
            last.u[d] = f[n_steps];
            last.v[d] = f_dot[n_steps];
        }
        Ok(Trajectory {
            regime: m.regime,
            dt,
            times: (0..=n_steps).map(|k| initial.t + k as f64 * dt).collect(),
            energies: recorder.energies,
            traces: recorder.traces,
            initial: initial.clone(),
            last,
            states: recorder.states,
        })
    }
}

/// Forward simulation over [0, T] in steps of dt.
pub fn simulate(
    matrices: &SystemMatrices,
    initial: &BeamState,
    t_span: f64,
    dt: f64,
    drive: Option<&[f64]>,
    store_states: bool,
) -> Result<Trajectory> {
    if dt <= 0.0 {
        return Err(Error::Precondition(format!("dt must be positive, got {dt}")));
    }
    Simulator::new(matrices, dt)?.run(initial, t_span, drive, store_states)
}

/// Backward simulation from terminal data: the same midpoint map with
/// dt -> -dt, which is exactly its inverse.
pub fn simulate_backward(
    matrices: &SystemMatrices,
    terminal: &BeamState,
    t_span: f64,
    dt: f64,
    store_states: bool,
) -> Result<Trajectory> {
    if dt <= 0.0 {
        return Err(Error::Precondition(format!("dt must be positive, got {dt}")));
    }
    Simulator::new(matrices, -dt)?.run(terminal, t_span, None, store_states)
}

/// Central second differences of the drive samples (one-sided at the ends),
/// plus central first differences for the trace record.
fn drive_derivatives(f: &[f64], dt: f64) -> (Vec<f64>, Vec<f64>) {
    let n = f.len();
    let mut fd = vec![0.0; n];
    let mut fdd = vec![0.0; n];
    if n >= 3 {
        for k in 1..n - 1 {
            fd[k] = (f[k + 1] - f[k - 1]) / (2.0 * dt);
            fdd[k] = (f[k + 1] - 2.0 * f[k] + f[k - 1]) / (dt * dt);
        }
        fd[0] = (f[1] - f[0]) / dt;
        fd[n - 1] = (f[n - 1] - f[n - 2]) / dt;
        fdd[0] = (f[2] - 2.0 * f[1] + f[0]) / (dt * dt);
        fdd[n - 1] = (f[n - 1] - 2.0 * f[n - 2] + f[n - 3]) / (dt * dt);
    } else if n == 2 {
        fd[0] = (f[1] - f[0]) / dt;
        fd[1] = fd[0];
    }
    (fd, fdd)
}

struct Recorder<'a> {
    m: &'a SystemMatrices,
    energies: Vec<f64>,
    traces: TraceSeries,
    states: Option<Vec<BeamState>>,
    value_pos: Option<usize>,
    rot_pos: Option<usize>,
}

impl<'a> Recorder<'a> {
    fn new(m: &'a SystemMatrices, n_steps: usize, store_states: bool) -> Self {
        let cap = n_steps + 1;
        Self {
            m,
            energies: Vec::with_capacity(cap),
            traces: TraceSeries::default(),
            states: if store_states { Some(Vec::with_capacity(cap)) } else { None },
            value_pos: m.dof_map.free_position(m.value_dof_at_one()),
            rot_pos: m.dof_map.free_position(m.rotation_dof_at_one()),
        }
    }

    fn record_modal(
        &mut self,
        modal: &ModalSystem,
        uh: &DVector<f64>,
        vh: &DVector<f64>,
        trace_modal: &DVector<f64>,
        t: f64,
    ) {
        self.energies.push(modal.energy_modal(uh, vh));
        self.traces.y_xx.push(trace_modal.dot(uh));
        // adjoint/feedback boundary values need nodal coordinates only when
        // they are free DOFs
        if self.value_pos.is_some() || self.rot_pos.is_some() || self.states.is_some() {
            let u = modal.from_modal(uh);
            let v = modal.from_modal(vh);
            self.push_nodal_traces(&u, &v, None, &[], 0);
            if let Some(states) = &mut self.states {
                states.push(BeamState::from_free(self.m, t, &u, &v));
            }
        } else {
            self.traces.y.push(0.0);
            self.traces.y_x.push(0.0);
            self.traces.y_t.push(0.0);
            self.traces.y_tx.push(0.0);
        }
    }

    fn record_direct(
        &mut self,
        u: &DVector<f64>,
        v: &DVector<f64>,
        drive: Option<&[f64]>,
        f_dot: &[f64],
        k: usize,
        t: f64,
    ) {
        let m = self.m;
        let mut e = 0.5
            * (v.dot(&(m.mass_free() * v)) + u.dot(&(m.stiffness_free() * u)));
        let mut yxx = m.trace_row_free().dot(u);
        if let (Some(f), Some(d)) = (drive, m.dof_map.driven) {
            // driven-DOF contributions to energy and trace
            let fd = f_dot[k];
            let md = m.mass[(d, d)];
            let sd = m.stiffness[(d, d)];
            e += f[k] * m.stiffness_free_driven().dot(u)
                + fd * m.mass_free_driven().dot(v)
                + 0.5 * (sd * f[k] * f[k] + md * fd * fd);
            yxx += crate::femdisc::trace_row_full(&m.mesh)[d] * f[k];
        }
        self.energies.push(e);
        self.traces.y_xx.push(yxx);
        self.push_nodal_traces(u, v, drive, f_dot, k);
        if let Some(states) = &mut self.states {
            let mut st = BeamState::from_free(m, t, u, v);
            if let (Some(f), Some(d)) = (drive, m.dof_map.driven) {
                st.u[d] = f[k];
                st.v[d] = f_dot[k];
            }
            states.push(st);
        }
    }

    fn push_nodal_traces(
        &mut self,
        u: &DVector<f64>,
        v: &DVector<f64>,
        drive: Option<&[f64]>,
        f_dot: &[f64],
        k: usize,
    ) {
        let (mut y, mut yx, mut yt, mut ytx) = (0.0, 0.0, 0.0, 0.0);
        if let Some(p) = self.value_pos {
            y = u[p];
            yt = v[p];
        }
        if let Some(p) = self.rot_pos {
            yx = u[p];
            ytx = v[p];
        } else if let Some(f) = drive {
            yx = f[k];
            ytx = f_dot[k];
        }
        self.traces.y.push(y);
        self.traces.y_x.push(yx);
        self.traces.y_t.push(yt);
        self.traces.y_tx.push(ytx);
    }
}
