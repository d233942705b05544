//! One function per subcommand. Every command writes a JSON report (with the
//! resolved config embedded) and, where it applies, CSV traces; the returned
//! flag says whether all asserted checks passed.

use crate::config::{DataSpec, DriveSpec, RunConfig, SCHEMA_VERSION};
use degenbeam::coeff::{self, DegeneracyClass, DegeneracyCoefficient};
use degenbeam::constants::{
    decay_envelope, stability_constants, stability_constants_with, StabilityOptions,
};
use degenbeam::dynamics::{simulate, BeamState, ModalSystem, Simulator};
use degenbeam::elliptic::{elliptic_estimate_check, power_law_closed_form, solve_boundary_elliptic};
use degenbeam::error::{Error, Result};
use degenbeam::femdisc::{
    self, assemble, build_mesh, interpolate, rotation_dof, value_dof, BoundaryRegime,
};
use degenbeam::hum::{driven_terminal_ratio, solve_null_control, verify_null_control};
use degenbeam::identities::{
    conservation_drift, dissipation_residual, hardy_poincare_check, multiplier_identity_x,
    multiplier_identity_x2, norm_equivalence_check, IdentityResidual, SpaceKind,
};
use degenbeam::observability::empirical_observability_constant;
use degenbeam::SystemMatrices;
use nalgebra::DVector;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use std::fs;
use std::path::Path;

pub struct Ctx<'a> {
    pub cfg: &'a RunConfig,
    pub out: &'a Path,
}

#[derive(Serialize)]
struct Report<'a, T: Serialize> {
    schema_version: u32,
    command: &'a str,
    passed: bool,
    config: &'a RunConfig,
    #[serde(flatten)]
    body: T,
}

impl<'a> Ctx<'a> {
    fn write_report<T: Serialize>(&self, command: &str, passed: bool, body: T) -> Result<()> {
        let rep = Report { schema_version: SCHEMA_VERSION, command, passed, config: self.cfg, body };
        let text = serde_json::to_string_pretty(&rep).expect("report serializes");
        let path = self.out.join(format!("{command}_report.json"));
        fs::write(&path, text + "\n")
            .map_err(|e| Error::Precondition(format!("cannot write {}: {e}", path.display())))?;
        Ok(())
    }

    fn write_text(&self, name: &str, text: &str) -> Result<()> {
        let path = self.out.join(name);
        fs::write(&path, text)
            .map_err(|e| Error::Precondition(format!("cannot write {}: {e}", path.display())))
    }

    fn coefficient(&self) -> Result<DegeneracyCoefficient> {
        match &self.cfg.coefficient {
            crate::config::CoefficientSpec::Power { alpha } => {
                DegeneracyCoefficient::power_law(*alpha)
            }
            crate::config::CoefficientSpec::Expression { a, da } => {
                DegeneracyCoefficient::from_expressions(a, da)
            }
        }
    }

    fn classify(&self, c: &DegeneracyCoefficient) -> Result<DegeneracyClass> {
        coeff::classify(c, &coeff::default_sample_grid())
    }

    fn matrices(&self, regime: BoundaryRegime) -> Result<(DegeneracyCoefficient, DegeneracyClass, SystemMatrices)> {
        let c = self.coefficient()?;
        let cls = self.classify(&c)?;
        let mesh = build_mesh(self.cfg.mesh.n_elements, self.cfg.mesh.grading.to_grading())?;
        let m = assemble(&c, &cls, &mesh, regime)?;
        Ok((c, cls, m))
    }

    /// Step count and size: dt defaults to the mesh width, rounded so an
    /// integer number of steps covers t_final, capped at max_steps.
    fn resolve_dt(&self, m: &SystemMatrices, t_final: f64) -> (f64, usize) {
        let pref = self.cfg.time.dt.unwrap_or_else(|| m.mesh.h_max());
        let n = (t_final / pref).ceil().max(1.0) as usize;
        let n = n.min(self.cfg.time.max_steps.max(1));
        (t_final / n as f64, n)
    }

    fn state_from_spec(
        &self,
        m: &SystemMatrices,
        modal: &ModalSystem,
        spec: &DataSpec,
    ) -> Result<DVector<f64>> {
        let full = match spec {
            DataSpec::Zero => DVector::zeros(m.dof_map.n_dofs),
            DataSpec::Eigenmode { index } => {
                if *index == 0 || *index > modal.n_modes() {
                    return Err(Error::Precondition(format!(
                        "eigenmode index {index} out of range 1..={}",
                        modal.n_modes()
                    )));
                }
                m.embed_free(&modal.shape(index - 1))
            }
            DataSpec::Polynomial { coeffs } => {
                let cs = coeffs.clone();
                let eval = move |x: f64| {
                    cs.iter().rev().fold(0.0, |acc, c| acc * x + c)
                };
                let cs2 = coeffs.clone();
                let deriv = move |x: f64| {
                    let mut acc = 0.0;
                    for (i, c) in cs2.iter().enumerate().skip(1) {
                        acc += i as f64 * c * x.powi(i as i32 - 1);
                    }
                    acc
                };
                interpolate(&m.mesh, eval, deriv)
            }
            DataSpec::File { path } => {
                let text = fs::read_to_string(path).map_err(|e| {
                    Error::Precondition(format!("cannot read data file {path}: {e}"))
                })?;
                let vals: Vec<f64> = text
                    .lines()
                    .filter(|l| !l.trim().is_empty())
                    .map(|l| l.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::Precondition(format!("bad number in {path}: {e}")))?;
                if vals.len() != m.dof_map.n_dofs {
                    return Err(Error::Precondition(format!(
                        "data file {path} has {} values, expected {}",
                        vals.len(),
                        m.dof_map.n_dofs
                    )));
                }
                DVector::from_vec(vals)
            }
        };
        // project onto the regime's constraints
        Ok(m.embed_free(&m.restrict_free(&full)))
    }

    fn initial_state(&self, m: &SystemMatrices, modal: &ModalSystem) -> Result<BeamState> {
        let u = self.state_from_spec(m, modal, &self.cfg.initial.displacement)?;
        let v = self.state_from_spec(m, modal, &self.cfg.initial.velocity)?;
        Ok(BeamState { t: 0.0, u, v })
    }

    fn drive_samples(&self, n_steps: usize, dt: f64) -> Result<Vec<f64>> {
        match &self.cfg.drive {
            None | Some(DriveSpec::Zero) => Ok(vec![0.0; n_steps + 1]),
            Some(DriveSpec::Sine { amplitude, frequency }) => Ok((0..=n_steps)
                .map(|k| {
                    amplitude * (2.0 * std::f64::consts::PI * frequency * k as f64 * dt).sin()
                })
                .collect()),
            Some(DriveSpec::File { path }) => {
                let text = fs::read_to_string(path).map_err(|e| {
                    Error::Precondition(format!("cannot read drive file {path}: {e}"))
                })?;
                let vals: Vec<f64> = text
                    .lines()
                    .filter(|l| !l.trim().is_empty())
                    .map(|l| l.trim().parse::<f64>())
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|e| Error::Precondition(format!("bad number in {path}: {e}")))?;
                if vals.len() != n_steps + 1 {
                    return Err(Error::Precondition(format!(
                        "drive file {path} has {} samples, expected {}",
                        vals.len(),
                        n_steps + 1
                    )));
                }
                Ok(vals)
            }
        }
    }
}

#[derive(Serialize)]
struct ClassifyBody {
    kind: degenbeam::Kind,
    #[serde(rename = "K")]
    k: f64,
}

pub fn run_classify(ctx: &Ctx) -> Result<bool> {
    let c = ctx.coefficient()?;
    let cls = ctx.classify(&c)?;
    ctx.write_report("classify", true, ClassifyBody { kind: cls.kind, k: cls.k })?;
    Ok(true)
}

#[derive(Serialize)]
struct ConstantsBody {
    report: degenbeam::constants::ConstantsReport,
    t_final: f64,
    ct_lower_at_t: f64,
    cost_at_t: Option<f64>,
}

pub fn run_constants(ctx: &Ctx) -> Result<bool> {
    let c = ctx.coefficient()?;
    let cls = ctx.classify(&c)?;
    let (beta, gamma) = ctx.cfg.regime.feedback_parameters();
    let options = StabilityOptions { eps0: ctx.cfg.constants.eps0, delta: ctx.cfg.constants.delta };
    let report = stability_constants_with(&c, &cls, beta, gamma, options)?;
    let t = ctx.cfg.time.t_final;
    let ct = report.controllability.ct_lower(t);
    let cost = report.controllability.cost(t).ok();
    ctx.write_report(
        "constants",
        true,
        ConstantsBody { report, t_final: t, ct_lower_at_t: ct, cost_at_t: cost },
    )?;
    Ok(true)
}

#[derive(Serialize)]
struct SimulateBody {
    dt: f64,
    n_steps: usize,
    initial_energy: f64,
    final_energy: f64,
    drift: Option<f64>,
    dissipation_identity_residual: Option<f64>,
}

pub fn run_simulate(ctx: &Ctx) -> Result<bool> {
    let regime = ctx.cfg.regime.to_regime();
    let (_c, _cls, m) = ctx.matrices(regime)?;
    let modal = ModalSystem::new(&m)?;
    let init = ctx.initial_state(&m, &modal)?;
    let t_final = ctx.cfg.time.t_final;
    let (dt, n_steps) = ctx.resolve_dt(&m, t_final);
    let drive = match regime {
        BoundaryRegime::Controlled => Some(ctx.drive_samples(n_steps, dt)?),
        _ => None,
    };
    let traj = simulate(&m, &init, t_final, dt, drive.as_deref(), false)?;
    ctx.write_text("trajectory.csv", &traj.to_csv())?;
    let (drift, dissipation, passed) = match regime {
        BoundaryRegime::Adjoint => {
            let d = conservation_drift(&traj, &m)?;
            (Some(d), None, d <= 1e-8)
        }
        BoundaryRegime::Feedback { .. } => {
            let r = dissipation_residual(&traj, &m)?;
            (None, Some(r.residual), r.residual <= 1e-8)
        }
        BoundaryRegime::Controlled => (None, None, true),
    };
    ctx.write_report(
        "simulate",
        passed,
        SimulateBody {
            dt,
            n_steps,
            initial_energy: traj.energies[0],
            final_energy: *traj.energies.last().unwrap(),
            drift,
            dissipation_identity_residual: dissipation,
        },
    )?;
    Ok(passed)
}

#[derive(Serialize)]
struct DecayBody {
    m_decay: f64,
    delta_star: f64,
    horizon: f64,
    dt: f64,
    initial_energy: f64,
    final_energy: f64,
    max_energy_over_envelope: f64,
    satisfied: bool,
}

pub fn run_decay(ctx: &Ctx) -> Result<bool> {
    let (beta, gamma) = match ctx.cfg.regime {
        crate::config::RegimeSpec::Feedback { beta, gamma } => (beta, gamma),
        _ => {
            return Err(Error::Precondition(
                "decay requires the feedback regime in the config".into(),
            ))
        }
    };
    let (c, cls, m) =
        ctx.matrices(BoundaryRegime::Feedback { beta, gamma })?;
    let rep = stability_constants(&c, &cls, beta, gamma)?;
    let m_decay = rep.decay_constant()?;
    let delta_star = rep
        .general
        .as_ref()
        .map(|g| g.delta_star)
        .or_else(|| rep.wd.as_ref().map(|w| w.chain.delta_star))
        .unwrap_or(f64::NAN);
    // the defining experiment: five decay constants of horizon
    let horizon = 5.0 * m_decay;
    let n_steps = ctx.cfg.time.max_steps.max(1);
    let dt = horizon / n_steps as f64;
    let modal = ModalSystem::new(&m)?;
    let init = ctx.initial_state(&m, &modal)?;
    let traj = simulate(&m, &init, horizon, dt, None, false)?;
    let env = decay_envelope(&rep, traj.energies[0])?;
    let mut max_ratio: f64 = 0.0;
    let mut csv = String::from("t,E,envelope\r\n");
    for (k, &e) in traj.energies.iter().enumerate() {
        let bound = env.eval(traj.times[k]);
        max_ratio = max_ratio.max(e / bound);
        // keep the CSV at a plottable size
        if k % 10 == 0 || k == traj.energies.len() - 1 {
            csv.push_str(&format!("{:.9e},{:.9e},{:.9e}\r\n", traj.times[k], e, bound));
        }
    }
    let satisfied = max_ratio <= 1.0;
    ctx.write_text("decay.csv", &csv)?;
    ctx.write_report(
        "decay",
        satisfied,
        DecayBody {
            m_decay,
            delta_star,
            horizon,
            dt,
            initial_energy: traj.energies[0],
            final_energy: *traj.energies.last().unwrap(),
            max_energy_over_envelope: max_ratio,
            satisfied,
        },
    )?;
    Ok(satisfied)
}

#[derive(Serialize)]
struct HardySummary {
    trials: usize,
    all_hold: bool,
}

#[derive(Serialize)]
struct NormSummary {
    trials: usize,
    h2a0_all_hold: bool,
    k2a0_all_hold: bool,
}

#[derive(Serialize)]
struct IdentitiesBody {
    conservation_drift: f64,
    multiplier_x2: Vec<IdentityResidual>,
    multiplier_x: Vec<IdentityResidual>,
    residuals_decrease: bool,
    final_residual_tol: f64,
    hardy: Option<HardySummary>,
    norms: NormSummary,
}

pub fn run_identities(ctx: &Ctx) -> Result<bool> {
    let c = ctx.coefficient()?;
    let cls = ctx.classify(&c)?;
    let levels = ctx.cfg.identities.refinements.max(1);
    let mut rx2 = Vec::new();
    let mut rx = Vec::new();
    let mut drift = 0.0;
    for level in 0..levels {
        let n = ctx.cfg.mesh.n_elements * (1usize << level);
        let mesh = build_mesh(n, ctx.cfg.mesh.grading.to_grading())?;
        let m = assemble(&c, &cls, &mesh, BoundaryRegime::Adjoint)?;
        // dt tracks the level's mesh width
        let t_final = ctx.cfg.time.t_final;
        let steps = (t_final * n as f64).round().max(1.0) as usize;
        let sim = Simulator::new(&m, t_final / steps as f64)?;
        let modal = sim.modal().expect("adjoint runs on the modal path");
        let init = ctx.initial_state(&m, modal)?;
        let traj = sim.run(&init, t_final, None, true)?;
        if level == 0 {
            drift = conservation_drift(&traj, &m)?;
        }
        rx2.push(multiplier_identity_x2(&traj, &m, &c)?);
        rx.push(multiplier_identity_x(&traj, &m, &c)?);
    }
    let decrease = rx2.windows(2).all(|w| w[1].residual < w[0].residual)
        && rx.windows(2).all(|w| w[1].residual < w[0].residual);
    let tol = ctx.cfg.identities.final_residual_tol;
    let final_ok =
        rx2.last().unwrap().residual <= tol && rx.last().unwrap().residual <= tol;

    // randomized functional-inequality suites on the base mesh
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.cfg.seed);
    let hardy = if let Some(alpha) = c.power_law_alpha() {
        if cls.is_wd() {
            let mesh = build_mesh(
                ctx.cfg.mesh.n_elements.min(32),
                degenbeam::Grading::GeometricTowardZero { ratio: 0.6 },
            )?;
            let mut all = true;
            let trials = 50;
            for _ in 0..trials {
                use rand_chacha::rand_core::RngCore;
                let theta = alpha + (1.0 - alpha) * (rng.next_u64() as f64 / u64::MAX as f64) * 0.95;
                let mut w = DVector::from_fn(2 * (mesh.n_elements() + 1), |_, _| {
                    rng.next_u64() as f64 / u64::MAX as f64 - 0.5
                });
                w[0] = 0.0;
                all &= hardy_poincare_check(&c, theta, &w, &mesh)?.holds;
            }
            Some(HardySummary { trials, all_hold: all })
        } else {
            None
        }
    } else {
        None
    };

    let mesh = build_mesh(ctx.cfg.mesh.n_elements, ctx.cfg.mesh.grading.to_grading())?;
    let ma = assemble(&c, &cls, &mesh, BoundaryRegime::Adjoint)?;
    let mf = assemble(&c, &cls, &mesh, BoundaryRegime::Feedback { beta: 1.0, gamma: 1.0 })?;
    let trials = 50;
    let mut h2 = true;
    let mut k2 = true;
    for _ in 0..trials {
        use rand_chacha::rand_core::RngCore;
        let ua = DVector::from_fn(ma.dof_map.n_free(), |_, _| {
            rng.next_u64() as f64 / u64::MAX as f64 - 0.5
        });
        h2 &= norm_equivalence_check(&ma, &c, &cls, SpaceKind::H2a0, &ua)?.chain_holds;
        let uf = DVector::from_fn(mf.dof_map.n_free(), |_, _| {
            rng.next_u64() as f64 / u64::MAX as f64 - 0.5
        });
        k2 &= norm_equivalence_check(&mf, &c, &cls, SpaceKind::K2a0, &uf)?.chain_holds;
    }

    let hardy_ok = hardy.as_ref().is_none_or(|h| h.all_hold);
    let passed = decrease && final_ok && drift <= 1e-8 && hardy_ok && h2 && k2;
    ctx.write_report(
        "identities",
        passed,
        IdentitiesBody {
            conservation_drift: drift,
            multiplier_x2: rx2,
            multiplier_x: rx,
            residuals_decrease: decrease,
            final_residual_tol: tol,
            hardy,
            norms: NormSummary { trials, h2a0_all_hold: h2, k2a0_all_hold: k2 },
        },
    )?;
    Ok(passed)
}

pub fn run_observability(ctx: &Ctx) -> Result<bool> {
    let (_c, _cls, m) = ctx.matrices(BoundaryRegime::Adjoint)?;
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.cfg.seed);
    let rep = empirical_observability_constant(
        ctx.cfg.time.t_final,
        &m,
        ctx.cfg.observability.n_probes,
        ctx.cfg.observability.slack,
        &mut rng,
    )?;
    let passed = rep.satisfied;
    ctx.write_report("observability", passed, rep)?;
    Ok(passed)
}

#[derive(Serialize)]
struct ControlBody {
    result: degenbeam::hum::ControlResult,
    verified_terminal_ratio: f64,
    target_ratio: f64,
    driven_diagnostic_ratio: Option<f64>,
}

pub fn run_control(ctx: &Ctx) -> Result<bool> {
    let (c, cls, m) = ctx.matrices(BoundaryRegime::Adjoint)?;
    let modal = ModalSystem::new(&m)?;
    let init = ctx.initial_state(&m, &modal)?;
    let u0 = m.restrict_free(&init.u);
    let u1 = m.restrict_free(&init.v);
    let t_final = ctx.cfg.time.t_final;
    let result = solve_null_control(
        &u0,
        &u1,
        t_final,
        &m,
        ctx.cfg.control.cg_tol,
        ctx.cfg.control.max_iter,
    )?;
    // independent verification on freshly assembled matrices
    let m2 = assemble(&c, &cls, &m.mesh, BoundaryRegime::Adjoint)?;
    let verified = verify_null_control(&result, &u0, &u1, t_final, &m2)?;
    let driven = if ctx.cfg.control.driven_diagnostic {
        let mc = assemble(&c, &cls, &m.mesh, BoundaryRegime::Controlled)?;
        Some(driven_terminal_ratio(&mc, &u0, &u1, &result.f, 1.0, result.dt)?)
    } else {
        None
    };
    let mut csv = String::from("t,f\r\n");
    for (k, fk) in result.f.iter().enumerate() {
        csv.push_str(&format!("{:.9e},{:.9e}\r\n", k as f64 * result.dt, fk));
    }
    ctx.write_text("control.csv", &csv)?;
    let passed = result.converged && verified <= ctx.cfg.control.target_ratio;
    ctx.write_report(
        "control",
        passed,
        ControlBody {
            result,
            verified_terminal_ratio: verified,
            target_ratio: ctx.cfg.control.target_ratio,
            driven_diagnostic_ratio: driven,
        },
    )?;
    Ok(passed)
}

#[derive(Serialize)]
struct EllipticBody {
    lambda: f64,
    mu: f64,
    beta: f64,
    gamma: f64,
    report: degenbeam::elliptic::EllipticReport,
    closed_form_l2_error: Option<f64>,
}

pub fn run_elliptic(ctx: &Ctx) -> Result<bool> {
    let c = ctx.coefficient()?;
    let cls = ctx.classify(&c)?;
    let mesh = build_mesh(ctx.cfg.mesh.n_elements, ctx.cfg.mesh.grading.to_grading())?;
    let (beta, gamma) = ctx.cfg.regime.feedback_parameters();
    let (lambda, mu) = (ctx.cfg.elliptic.lambda, ctx.cfg.elliptic.mu);
    let sol = solve_boundary_elliptic(&c, &cls, &mesh, beta, gamma, lambda, mu)?;
    let report = elliptic_estimate_check(&sol, &c, &cls)?;

    let closed_form_l2_error = c.power_law_alpha().map(|alpha| {
        let exact = power_law_closed_form(alpha, cls.kind, beta, gamma, lambda, mu);
        let rule = degenbeam::quadrature::GaussRule::new(6);
        let mut err2 = 0.0;
        for e in 0..mesh.n_elements() {
            let (xs, ws) = rule.mapped(mesh.nodes()[e], mesh.nodes()[e + 1]);
            for (&x, &w) in xs.iter().zip(&ws) {
                let (zv, _, _) = femdisc::evaluate(&sol.z, &mesh, x);
                err2 += w * (zv - exact(x).0).powi(2);
            }
        }
        err2.sqrt()
    });

    let mut csv = String::from("x,z,zp\r\n");
    for (i, &x) in mesh.nodes().iter().enumerate() {
        csv.push_str(&format!(
            "{:.9e},{:.9e},{:.9e}\r\n",
            x,
            sol.z[value_dof(i)],
            sol.z[rotation_dof(i)]
        ));
    }
    ctx.write_text("elliptic.csv", &csv)?;
    let passed = report.triple_holds && report.l2_holds;
    ctx.write_report(
        "elliptic",
        passed,
        EllipticBody { lambda, mu, beta, gamma, report, closed_form_l2_error },
    )?;
    Ok(passed)
}
