//! Explicit constants of the controllability and stabilization estimates,
//! assembled exactly as displayed, plus the exponential decay envelope.
//!
//! Controllability side: with m = min{6-3K, K+2} and
//! q = max{1, 1/(a(1)(2-K))}, observability holds for T beyond
//! T0 = (K+4) q / m and the observability constant is bounded below by the
//! affine function m T - (K+4) q.
//!
//! Stabilization side (feedback parameters beta, gamma): the chain
//! eps0 -> (theta, rho, sigma) -> (C1, C2) -> (nu, C_delta) ->
//! (C3, C5, C4) -> M = C4/(eps0 - delta C3) for any admissible delta, and
//! the energy obeys E(t) <= E(0) exp(1 - t/M). Every max/min below is a
//! literal transcription; each formula has its own unit test because
//! transcription is the dominant risk.
//!
//! In the weakly degenerate class the boundary-trace bounds improve through
//! ||1/a||_L1: A_gamma, C_beta, C_gamma replace their generic counterparts
//! and produce a second, usually tighter, chain.

use crate::coeff::{integral_one_over_a, DegeneracyClass, DegeneracyCoefficient, Kind};
use crate::error::{Error, Result};
use serde::Serialize;

/// Observability time threshold and the affine lower bound for C_T.
#[derive(Debug, Clone, Serialize)]
pub struct ControllabilityConstants {
    pub k: f64,
    pub a_at_one: f64,
    pub t0: f64,
    /// Slope of T -> CT_lower(T), namely min{6-3K, K+2}.
    pub ct_slope: f64,
    /// Intercept, namely -(K+4) max{1, 1/(a(1)(2-K))}.
    pub ct_intercept: f64,
}

impl ControllabilityConstants {
    pub fn new(class: &DegeneracyClass, a_at_one: f64) -> Self {
        let k = class.k;
        let m = (6.0 - 3.0 * k).min(k + 2.0);
        let q = 1.0_f64.max(1.0 / (a_at_one * (2.0 - k)));
        Self {
            k,
            a_at_one,
            t0: (k + 4.0) * q / m,
            ct_slope: m,
            ct_intercept: -(k + 4.0) * q,
        }
    }

    /// CT lower bound at horizon T; positive exactly when T > T0.
    pub fn ct_lower(&self, t: f64) -> f64 {
        self.ct_slope * t + self.ct_intercept
    }

    /// Cost of control 1/CT_lower(T); undefined at or below T0.
    pub fn cost(&self, t: f64) -> Result<f64> {
        let ct = self.ct_lower(t);
        if ct <= 0.0 {
            return Err(Error::UndefinedQuotient(format!(
                "control cost undefined for T = {t} <= T0 = {}",
                self.t0
            )));
        }
        Ok(1.0 / ct)
    }
}

/// Shortcut used by the CLI and tests.
pub fn controllability_constants(
    class: &DegeneracyClass,
    a_at_one: f64,
) -> ControllabilityConstants {
    ControllabilityConstants::new(class, a_at_one)
}

/// One full stabilization chain evaluated at its best delta.
#[derive(Debug, Clone, Serialize)]
pub struct StabilityChain {
    pub eps0: f64,
    pub theta: f64,
    pub rho: f64,
    pub sigma: f64,
    pub c1: f64,
    pub c2: f64,
    pub nu: f64,
    pub delta_star: f64,
    pub c_delta: f64,
    pub c3: f64,
    pub c4: f64,
    pub c5: f64,
    pub m_decay: f64,
}

/// Weakly degenerate improvements and the chain they induce.
#[derive(Debug, Clone, Serialize)]
pub struct WdImprovements {
    pub one_over_a_l1: f64,
    pub a_gamma: f64,
    pub c_beta: f64,
    pub c_gamma: f64,
    pub chain: StabilityChain,
}

/// Every explicit constant for one (coefficient, beta, gamma) configuration.
#[derive(Debug, Clone, Serialize)]
pub struct ConstantsReport {
    pub kind: Kind,
    pub k: f64,
    pub a_at_one: f64,
    /// Hardy constant 4/(1-K)^2; only defined in the WD class where K < 1.
    pub c_hp: Option<f64>,
    /// 1/(a(1)(2-K)).
    pub norm_const: f64,
    pub beta: f64,
    pub gamma: f64,
    pub controllability: ControllabilityConstants,
    /// Generic chain (requires beta, gamma > 0).
    pub general: Option<StabilityChain>,
    /// WD chain (defined for beta, gamma >= 0 when the class is WD).
    pub wd: Option<WdImprovements>,
}

impl ConstantsReport {
    /// Decay constant of the envelope: the generic chain when available,
    /// otherwise the WD one.
    pub fn decay_constant(&self) -> Result<f64> {
        self.general
            .as_ref()
            .map(|c| c.m_decay)
            .or_else(|| self.wd.as_ref().map(|w| w.chain.m_decay))
            .ok_or_else(|| Error::InfeasibleConstants("no stabilization chain available".into()))
    }
}

struct ChainInputs {
    k: f64,
    a1: f64,
    beta: f64,
    gamma: f64,
    eps0: f64,
    theta: f64,
    rho: f64,
    sigma: f64,
    c1: f64,
    c2: f64,
    nu: f64,
    /// C_delta slope: C_delta = 1 - delta * cd_slope.
    cd_slope: f64,
    /// delta-independent factor of C5's second parenthesis.
    c5_second: f64,
    /// coefficients of C5's first parenthesis: const + per_delta/delta.
    c5_const: f64,
    c5_per_delta: f64,
    /// C4 head: theta + rho + sigma + trace term.
    c4_head: f64,
}

impl ChainInputs {
    fn c3(&self, c_delta: f64) -> f64 {
        let (k, beta, gamma, eps0, a1) = (self.k, self.beta, self.gamma, self.eps0, self.a1);
        (k / 4.0 + k * beta / 2.0 + beta + eps0 * beta / 2.0) * 2.0 / c_delta
            + (beta + 1.0 + 2.0 * gamma * gamma / a1 + eps0 * gamma / 2.0) * 2.0 / c_delta
    }

    fn c5(&self, delta: f64, c_delta: f64) -> f64 {
        (self.c5_const + self.c5_per_delta / delta) / c_delta * self.c5_second
    }

    fn evaluate(&self, delta: f64) -> Option<StabilityChain> {
        let c_delta = 1.0 - delta * self.cd_slope;
        if c_delta <= 0.0 {
            return None;
        }
        let c3 = self.c3(c_delta);
        let denom = self.eps0 - delta * c3;
        if denom <= 0.0 {
            return None;
        }
        let c5 = self.c5(delta, c_delta);
        let c4 = self.c4_head + c5;
        Some(StabilityChain {
            eps0: self.eps0,
            theta: self.theta,
            rho: self.rho,
            sigma: self.sigma,
            c1: self.c1,
            c2: self.c2,
            nu: self.nu,
            delta_star: delta,
            c_delta,
            c3,
            c4,
            c5,
            m_decay: c4 / denom,
        })
    }
}

/// Scan a logarithmic delta grid over (0, nu) and keep the feasible delta
/// minimizing M; the interval endpoints are always infeasible (C_delta or
/// the denominator vanish), so the minimizer is interior.
fn choose_delta_for(inputs: &ChainInputs) -> Result<StabilityChain> {
    let nu = inputs.nu;
    if nu <= 0.0 || !nu.is_finite() {
        return Err(Error::InfeasibleConstants(format!("nu = {nu} leaves no admissible delta")));
    }
    let n = 1000;
    let lo = (nu * 1e-6).ln();
    let hi = (nu * (1.0 - 1e-9)).ln();
    let mut best: Option<StabilityChain> = None;
    for j in 0..n {
        let delta = (lo + (hi - lo) * j as f64 / (n - 1) as f64).exp();
        if let Some(chain) = inputs.evaluate(delta) {
            if best.as_ref().is_none_or(|b| chain.m_decay < b.m_decay) {
                best = Some(chain);
            }
        }
    }
    best.ok_or_else(|| {
        Error::InfeasibleConstants(
            "no delta in (0, nu) satisfies C_delta > 0 and delta < eps0/C3".into(),
        )
    })
}

/// Evaluate the stabilization chain at a caller-chosen delta instead of the
/// grid minimizer.
pub fn chain_at_delta(
    coeff: &DegeneracyCoefficient,
    class: &DegeneracyClass,
    beta: f64,
    gamma: f64,
    delta: f64,
) -> Result<StabilityChain> {
    let inputs = general_inputs(coeff, class, beta, gamma)?;
    if delta.is_nan() || delta <= 0.0 || delta >= inputs.nu {
        return Err(Error::Precondition(format!(
            "delta must lie in (0, nu) = (0, {}), got {delta}",
            inputs.nu
        )));
    }
    inputs.evaluate(delta).ok_or_else(|| {
        Error::InfeasibleConstants(format!("delta = {delta} violates delta < eps0/C3"))
    })
}

fn validate_eps0(class: &DegeneracyClass, eps0: Option<f64>) -> Result<f64> {
    let max = 2.0 - class.k;
    match eps0 {
        None => Ok(max),
        Some(e) if e > 0.0 && e <= max => Ok(e),
        Some(e) => Err(Error::Precondition(format!(
            "eps0 must lie in (0, 2-K] = (0, {max}], got {e}"
        ))),
    }
}

fn general_inputs(
    coeff: &DegeneracyCoefficient,
    class: &DegeneracyClass,
    beta: f64,
    gamma: f64,
) -> Result<ChainInputs> {
    general_inputs_with(coeff, class, beta, gamma, None)
}

fn general_inputs_with(
    coeff: &DegeneracyCoefficient,
    class: &DegeneracyClass,
    beta: f64,
    gamma: f64,
    eps0_override: Option<f64>,
) -> Result<ChainInputs> {
    let k = class.k;
    let a1 = coeff.a(1.0);
    let eps0 = validate_eps0(class, eps0_override)?;
    let norm2 = 2.0 / (a1 * (2.0 - k));
    let c1 = 2.0 * 1.0_f64.max(1.0 / (a1 * (2.0 - k)));
    let c2 = 1.0_f64.max(1.0 / gamma);
    let theta = k * 1.0_f64.max(norm2).max(2.0 / gamma);
    let rho = 4.0 * (2.0 / gamma).max(norm2).max(1.0);
    let sigma = (k / 4.0 + 2.0).max(2.0 / a1);
    let nu = beta * gamma / (2.0 * c2 * 1.0_f64.max(c1) * (beta + gamma));
    let cd_slope = 2.0 * c2 * 1.0_f64.max(c1) * (1.0 / beta + 1.0 / gamma);
    let c5_second = k / 4.0 + k * beta / 2.0 + 2.0 * beta + eps0 * beta / 2.0
        + 1.0
        + 2.0 * gamma * gamma / a1
        + eps0 * gamma / 2.0;
    let c5_const = 2.0 + 4.0 * c1 * c1 * c2 * c2 / beta + 4.0 * c1 * c2 * c2 / gamma;
    let c5_per_delta = 1.0 + 2.0 * c1 * c2 * c2 * 1.0_f64.max(c1);
    let c4_head = theta + rho + sigma + (2.0 - k / 2.0) / gamma;
    Ok(ChainInputs {
        k,
        a1,
        beta,
        gamma,
        eps0,
        theta,
        rho,
        sigma,
        c1,
        c2,
        nu,
        cd_slope,
        c5_second,
        c5_const,
        c5_per_delta,
        c4_head,
    })
}

fn wd_inputs(
    coeff: &DegeneracyCoefficient,
    class: &DegeneracyClass,
    beta: f64,
    gamma: f64,
    eps0_override: Option<f64>,
) -> Result<(f64, f64, f64, f64, ChainInputs)> {
    let k = class.k;
    let a1 = coeff.a(1.0);
    let one_over_a = integral_one_over_a(coeff, class)?;
    let eps0 = validate_eps0(class, eps0_override)?;
    let norm2 = 2.0 / (a1 * (2.0 - k));
    let c1 = 2.0 * 1.0_f64.max(1.0 / (a1 * (2.0 - k)));
    let a_gamma = if gamma != 0.0 {
        1.0_f64.max(1.0 / gamma).min(1.0 + one_over_a)
    } else {
        1.0 + one_over_a
    };
    let c_beta = if beta != 0.0 { 2.0 * one_over_a.min(1.0 / beta) } else { 2.0 * one_over_a };
    let c_gamma = if gamma != 0.0 { 2.0 * one_over_a.min(1.0 / gamma) } else { 2.0 * one_over_a };
    let theta = k * 1.0_f64.max(norm2).max(c_gamma);
    let rho = 4.0 * c_gamma.max(norm2).max(1.0);
    let sigma = (k / 4.0 + 2.0).max(2.0 / a1);
    let nu = 1.0 / (1.0_f64.max(c1) * (c_beta + c_gamma) * a_gamma);
    let cd_slope = 1.0_f64.max(c1) * (c_beta + c_gamma) * a_gamma;
    let c5_second = k / 4.0 + k * beta / 2.0 + 2.0 * beta + eps0 * beta / 2.0
        + 1.0
        + 2.0 * gamma * gamma / a1
        + eps0 * gamma / 2.0;
    let c5_const = 2.0
        + 2.0 * c1 * c1 * a_gamma * a_gamma * c_beta
        + 2.0 * c1 * a_gamma * a_gamma * c_gamma;
    let c5_per_delta = 1.0 + 2.0 * c1 * a_gamma * a_gamma * 1.0_f64.max(c1);
    let c4_head = theta + rho + sigma + (2.0 - k / 2.0) * c_gamma / 2.0;
    Ok((
        one_over_a,
        a_gamma,
        c_beta,
        c_gamma,
        ChainInputs {
            k,
            a1,
            beta,
            gamma,
            eps0,
            theta,
            rho,
            sigma,
            c1,
            c2: if gamma > 0.0 { 1.0_f64.max(1.0 / gamma) } else { 1.0 },
            nu,
            cd_slope,
            c5_second,
            c5_const,
            c5_per_delta,
            c4_head,
        },
    ))
}

/// Optional overrides of the chain's free parameters: eps0 may be lowered
/// below its maximal value 2-K, and delta may replace the grid minimizer.
#[derive(Debug, Clone, Copy, Default)]
pub struct StabilityOptions {
    pub eps0: Option<f64>,
    pub delta: Option<f64>,
}

/// Assemble the full constants report for a coefficient and feedback
/// parameters. SD with beta = 0 or gamma = 0 is refused (open problem);
/// WD accepts nonnegative parameters through the improved chain.
pub fn stability_constants(
    coeff: &DegeneracyCoefficient,
    class: &DegeneracyClass,
    beta: f64,
    gamma: f64,
) -> Result<ConstantsReport> {
    stability_constants_with(coeff, class, beta, gamma, StabilityOptions::default())
}

/// As `stability_constants` with explicit eps0/delta choices.
pub fn stability_constants_with(
    coeff: &DegeneracyCoefficient,
    class: &DegeneracyClass,
    beta: f64,
    gamma: f64,
    options: StabilityOptions,
) -> Result<ConstantsReport> {
    if beta < 0.0 || gamma < 0.0 {
        return Err(Error::Precondition("beta and gamma must be nonnegative".into()));
    }
    let is_wd = class.is_wd();
    if !is_wd && (beta == 0.0 || gamma == 0.0) {
        return Err(Error::OutOfScope(
            "strongly degenerate stabilization with beta = 0 or gamma = 0 is an open problem"
                .into(),
        ));
    }
    let resolve = |inputs: &ChainInputs| -> Result<StabilityChain> {
        match options.delta {
            None => choose_delta_for(inputs),
            Some(d) => {
                if d.is_nan() || d <= 0.0 || d >= inputs.nu {
                    return Err(Error::Precondition(format!(
                        "delta must lie in (0, nu) = (0, {}), got {d}",
                        inputs.nu
                    )));
                }
                inputs.evaluate(d).ok_or_else(|| {
                    Error::InfeasibleConstants(format!("delta = {d} violates delta < eps0/C3"))
                })
            }
        }
    };
    let a1 = coeff.a(1.0);
    let k = class.k;
    let general = if beta > 0.0 && gamma > 0.0 {
        Some(resolve(&general_inputs_with(coeff, class, beta, gamma, options.eps0)?)?)
    } else {
        None
    };
    let wd = if is_wd {
        let (one_over_a, a_gamma, c_beta, c_gamma, inputs) =
            wd_inputs(coeff, class, beta, gamma, options.eps0)?;
        Some(WdImprovements {
            one_over_a_l1: one_over_a,
            a_gamma,
            c_beta,
            c_gamma,
            chain: resolve(&inputs)?,
        })
    } else {
        None
    };
    Ok(ConstantsReport {
        kind: class.kind,
        k,
        a_at_one: a1,
        c_hp: if is_wd { Some(4.0 / ((1.0 - k) * (1.0 - k))) } else { None },
        norm_const: 1.0 / (a1 * (2.0 - k)),
        beta,
        gamma,
        controllability: ControllabilityConstants::new(class, a1),
        general,
        wd,
    })
}

/// The explicit exponential envelope E(0) exp(1 - t/M).
#[derive(Debug, Clone, Copy, Serialize)]
pub struct DecayEnvelope {
    pub e0: f64,
    pub m_decay: f64,
}

impl DecayEnvelope {
    pub fn eval(&self, t: f64) -> f64 {
        self.e0 * (1.0 - t / self.m_decay).exp()
    }
}

/// Envelope from a completed report and the measured initial energy.
pub fn decay_envelope(report: &ConstantsReport, e0: f64) -> Result<DecayEnvelope> {
    Ok(DecayEnvelope { e0, m_decay: report.decay_constant()? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coeff::{classify, default_sample_grid};

    fn wd_half() -> (DegeneracyCoefficient, DegeneracyClass) {
        let c = DegeneracyCoefficient::power_law(0.5).unwrap();
        let cls = classify(&c, &default_sample_grid()).unwrap();
        (c, cls)
    }

    #[test]
    fn controllability_formulas_for_sqrt() {
        let (_, cls) = wd_half();
        let cc = ControllabilityConstants::new(&cls, 1.0);
        // K = 0.5: min{4.5, 2.5} = 2.5, max{1, 1/1.5} = 1, T0 = 4.5/2.5
        assert_eq!(cc.ct_slope, 2.5);
        assert_eq!(cc.ct_intercept, -4.5);
        assert!((cc.t0 - 1.8).abs() < 1e-15);
        assert!((cc.ct_lower(2.0) - 0.5).abs() < 1e-15);
        assert!(cc.ct_lower(1.8).abs() < 1e-12);
        assert!(cc.cost(1.8).is_err());
        assert!((cc.cost(2.0).unwrap() - 2.0).abs() < 1e-12);
    }

    #[test]
    fn chain_formula_transcriptions() {
        let (c, cls) = wd_half();
        let inp = general_inputs(&c, &cls, 1.0, 1.0).unwrap();
        assert_eq!(inp.eps0, 1.5);
        assert_eq!(inp.c1, 2.0);
        assert_eq!(inp.c2, 1.0);
        // theta = K max{1, 2/(a(1)(2-K)), 2/gamma} = 0.5 * 2 = 1
        assert_eq!(inp.theta, 1.0);
        // rho = 4 max{2, 4/3, 1} = 8
        assert_eq!(inp.rho, 8.0);
        // sigma = max{K/4 + 2, 2} = 2.125
        assert_eq!(inp.sigma, 2.125);
        // nu = beta gamma / (2 C2 max{1,C1} (beta+gamma)) = 1/8
        assert_eq!(inp.nu, 0.125);
        // C_delta = 1 - 8 delta
        assert_eq!(inp.cd_slope, 8.0);
        // C3 at delta -> 0: (0.125+0.25+1+0.75)*2 + (1+1+2+0.75)*2 = 13.75
        assert!((inp.c3(1.0) - 13.75).abs() < 1e-12);
        // C5 parenthesis pieces: 2+16+8 = 26 and 1+8 = 9, times 6.875
        assert_eq!(inp.c5_const, 26.0);
        assert_eq!(inp.c5_per_delta, 9.0);
        assert_eq!(inp.c5_second, 6.875);
        // C4 head: 1 + 8 + 2.125 + 1.75
        assert_eq!(inp.c4_head, 12.875);
    }

    #[test]
    fn stability_report_for_sqrt_beam() {
        let (c, cls) = wd_half();
        let rep = stability_constants(&c, &cls, 1.0, 1.0).unwrap();
        let g = rep.general.as_ref().unwrap();
        assert!(g.m_decay > 0.0 && g.m_decay.is_finite());
        // grid minimum sits near delta = 0.028, M near 3079
        assert!((g.m_decay - 3079.0).abs() < 15.0, "M = {}", g.m_decay);
        assert!(g.delta_star > 0.0 && g.delta_star < g.nu);
        assert!(g.c_delta > 0.0);
        // interior minimizer: M blows up toward both admissible endpoints
        let inp = general_inputs(&c, &cls, 1.0, 1.0).unwrap();
        let at_edge = inp.evaluate(g.nu * 0.99999).map(|ch| ch.m_decay);
        assert!(at_edge.is_none() || at_edge.unwrap() > g.m_decay);
        let near_zero = inp.evaluate(g.nu * 1e-6).unwrap();
        assert!(near_zero.m_decay > g.m_decay);

        let wd = rep.wd.as_ref().unwrap();
        assert_eq!(wd.one_over_a_l1, 2.0);
        assert_eq!(wd.a_gamma, 1.0);
        assert_eq!(wd.c_beta, 2.0);
        assert_eq!(wd.c_gamma, 2.0);
        // claimed improvements: each WD constant bounded by its counterpart
        assert!(wd.a_gamma <= 1.0_f64.max(1.0 / rep.gamma));
        assert!(wd.c_beta <= 2.0 / rep.beta);
        assert!(wd.c_gamma <= 2.0 / rep.gamma);
    }

    #[test]
    fn sd_open_cases_are_refused() {
        let c = DegeneracyCoefficient::power_law(1.5).unwrap();
        let cls = classify(&c, &default_sample_grid()).unwrap();
        assert!(matches!(
            stability_constants(&c, &cls, 1.0, 0.0),
            Err(Error::OutOfScope(_))
        ));
        assert!(matches!(
            stability_constants(&c, &cls, 0.0, 1.0),
            Err(Error::OutOfScope(_))
        ));
        let rep = stability_constants(&c, &cls, 1.0, 1.0).unwrap();
        assert!(rep.wd.is_none());
        assert!(rep.c_hp.is_none());
        assert!(rep.general.is_some());
    }

    #[test]
    fn wd_zero_gamma_uses_improved_chain() {
        let (c, cls) = wd_half();
        let rep = stability_constants(&c, &cls, 1.0, 0.0).unwrap();
        assert!(rep.general.is_none());
        let wd = rep.wd.as_ref().unwrap();
        assert_eq!(wd.c_gamma, 4.0); // 2 ||1/a||_L1
        assert!(wd.chain.m_decay.is_finite());
        assert!(rep.decay_constant().is_ok());
    }

    #[test]
    fn gamma_changes_every_downstream_constant() {
        let (c, cls) = wd_half();
        let r1 = stability_constants(&c, &cls, 1.0, 1.0).unwrap();
        let r2 = stability_constants(&c, &cls, 1.0, 2.0).unwrap();
        let (g1, g2) = (r1.general.unwrap(), r2.general.unwrap());
        assert!(g1.m_decay != g2.m_decay);
        assert!(g1.rho != g2.rho);
        assert!(g1.nu != g2.nu);
    }

    #[test]
    fn envelope_examples() {
        let (c, cls) = wd_half();
        let rep = stability_constants(&c, &cls, 1.0, 1.0).unwrap();
        let env = decay_envelope(&rep, 2.0).unwrap();
        let m = rep.decay_constant().unwrap();
        assert!((env.eval(0.0) - 2.0 * std::f64::consts::E).abs() < 1e-12);
        assert!((env.eval(m) - 2.0).abs() < 1e-12);
        // strictly decreasing and positive
        let mut prev = env.eval(0.0);
        for j in 1..50 {
            let v = env.eval(j as f64 * m / 10.0);
            assert!(v > 0.0 && v < prev);
            prev = v;
        }
    }

    #[test]
    fn eps0_override_shrinks_the_rate() {
        let (c, cls) = wd_half();
        let base = stability_constants(&c, &cls, 1.0, 1.0).unwrap();
        let opts = StabilityOptions { eps0: Some(0.8), delta: None };
        let tweaked = stability_constants_with(&c, &cls, 1.0, 1.0, opts).unwrap();
        // smaller eps0 shrinks the decay-rate denominator: larger M
        assert!(
            tweaked.general.as_ref().unwrap().m_decay > base.general.as_ref().unwrap().m_decay
        );
        let bad = StabilityOptions { eps0: Some(1.6), delta: None };
        assert!(stability_constants_with(&c, &cls, 1.0, 1.0, bad).is_err());
    }

    #[test]
    fn delta_override_is_respected() {
        let (c, cls) = wd_half();
        let opts = StabilityOptions { eps0: None, delta: Some(0.02) };
        let rep = stability_constants_with(&c, &cls, 1.0, 1.0, opts).unwrap();
        assert_eq!(rep.general.as_ref().unwrap().delta_star, 0.02);
        assert_eq!(rep.wd.as_ref().unwrap().chain.delta_star, 0.02);
    }

    #[test]
    fn chain_at_delta_respects_bounds() {
        let (c, cls) = wd_half();
        assert!(chain_at_delta(&c, &cls, 1.0, 1.0, 0.2).is_err()); // above nu
        let ch = chain_at_delta(&c, &cls, 1.0, 1.0, 0.03).unwrap();
        assert!(ch.m_decay.is_finite() && ch.m_decay > 0.0);
        // infeasible delta inside (0, nu) but above eps0/C3
        assert!(chain_at_delta(&c, &cls, 1.0, 1.0, 0.12).is_err());
    }
}
