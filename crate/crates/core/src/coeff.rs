//! The degenerate flexural rigidity coefficient and its classification.
//!
//! A coefficient a: [0,1] -> R with a(0) = 0 and a > 0 on (0,1] is
//! characterized by K = sup over (0,1] of x|a'(x)|/a(x). Values K in (0,1)
//! are the weakly degenerate class (WD), K in [1,2) the strongly degenerate
//! one (SD); K >= 2 is an open case and is refused. The natural boundary
//! conditions at the degenerate end differ between the classes, which is why
//! every discretization step downstream carries the class along.

use crate::error::{Error, Result};
use crate::expr::Expr;
use crate::quadrature::GaussRule;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::sync::Arc;

/// Tolerance under which a(0) is accepted as zero.
pub const A0_TOLERANCE: f64 = 1e-12;

type Callable = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Declared analytic form of the coefficient, used for exact shortcuts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DeclaredForm {
    PowerLaw { alpha: f64 },
    General,
}

/// The coefficient a together with its derivative a'.
///
/// The derivative must be supplied, not differenced: a' is unbounded at 0 in
/// the weakly degenerate case, so finite differences are unreliable exactly
/// where the classification looks.
#[derive(Clone)]
pub struct DegeneracyCoefficient {
    evaluate: Callable,
    derivative: Callable,
    declared_form: DeclaredForm,
}

impl fmt::Debug for DegeneracyCoefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("DegeneracyCoefficient")
            .field("declared_form", &self.declared_form)
            .finish()
    }
}

impl DegeneracyCoefficient {
    /// a(x) = x^alpha. Requires alpha > 0.
    pub fn power_law(alpha: f64) -> Result<Self> {
        if alpha <= 0.0 || !alpha.is_finite() {
            return Err(Error::InvalidCoefficient(format!(
                "power-law exponent must be positive and finite, got {alpha}"
            )));
        }
        Ok(Self {
            evaluate: Arc::new(move |x: f64| x.powf(alpha)),
            derivative: Arc::new(move |x: f64| alpha * x.powf(alpha - 1.0)),
            declared_form: DeclaredForm::PowerLaw { alpha },
        })
    }

    /// General coefficient from explicit callables for a and a'.
    pub fn from_callables<F, G>(a: F, da: G) -> Result<Self>
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        G: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let c = Self {
            evaluate: Arc::new(a),
            derivative: Arc::new(da),
            declared_form: DeclaredForm::General,
        };
        c.check_admissible()?;
        Ok(c)
    }

    /// General coefficient from expression strings for a(x) and a'(x).
    pub fn from_expressions(a_src: &str, da_src: &str) -> Result<Self> {
        let a = Expr::parse(a_src)?;
        let da = Expr::parse(da_src)?;
        Self::from_callables(move |x| a.eval(x), move |x| da.eval(x))
    }

    /// Coefficient without admissibility checks, for validation studies with
    /// non-degenerate weights such as a = 1 or a = 0.
    pub fn unchecked<F, G>(a: F, da: G) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
        G: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        Self {
            evaluate: Arc::new(a),
            derivative: Arc::new(da),
            declared_form: DeclaredForm::General,
        }
    }

    fn check_admissible(&self) -> Result<()> {
        let a0 = (self.evaluate)(0.0);
        if a0.abs() > A0_TOLERANCE {
            return Err(Error::InvalidCoefficient(format!(
                "a(0) = {a0:e} exceeds the zero tolerance {A0_TOLERANCE:e}"
            )));
        }
        for &x in &[1e-8, 1e-4, 0.01, 0.1, 0.5, 1.0] {
            let v = (self.evaluate)(x);
            if v <= 0.0 || !v.is_finite() {
                return Err(Error::InvalidCoefficient(format!(
                    "a({x}) = {v} is not strictly positive"
                )));
            }
        }
        Ok(())
    }

    pub fn a(&self, x: f64) -> f64 {
        (self.evaluate)(x)
    }

    pub fn da(&self, x: f64) -> f64 {
        (self.derivative)(x)
    }

    pub fn declared_form(&self) -> DeclaredForm {
        self.declared_form
    }

    pub fn power_law_alpha(&self) -> Option<f64> {
        match self.declared_form {
            DeclaredForm::PowerLaw { alpha } => Some(alpha),
            DeclaredForm::General => None,
        }
    }
}

/// WD or SD, per the classification of the degeneracy strength K.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Kind {
    #[serde(rename = "WD")]
    WeaklyDegenerate,
    #[serde(rename = "SD")]
    StronglyDegenerate,
}

impl fmt::Display for Kind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Kind::WeaklyDegenerate => write!(f, "WD"),
            Kind::StronglyDegenerate => write!(f, "SD"),
        }
    }
}

/// Classification result: the class kind plus the constant K it came from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DegeneracyClass {
    pub kind: Kind,
    pub k: f64,
}

impl DegeneracyClass {
    pub fn is_wd(&self) -> bool {
        self.kind == Kind::WeaklyDegenerate
    }
}

/// Default sampling grid for the supremum in K: 10^4 points geometrically
/// clustered at 0, where the degeneracy lives.
pub fn default_sample_grid() -> Vec<f64> {
    let n = 10_000;
    let lo: f64 = 1e-10;
    (1..=n)
        .map(|j| {
            let t = (n - j) as f64 / (n - 1) as f64;
            lo.powf(t)
        })
        .collect()
}

/// K = sup over the grid of x |a'(x)| / a(x); exact shortcut for power laws.
pub fn degeneracy_constant(coeff: &DegeneracyCoefficient, grid: &[f64]) -> Result<f64> {
    if let Some(alpha) = coeff.power_law_alpha() {
        return Ok(alpha);
    }
    if grid.is_empty() {
        return Err(Error::Precondition("sample grid is empty".into()));
    }
    let mut sup: f64 = 0.0;
    for &x in grid {
        if x.is_nan() || x <= 0.0 || x > 1.0 {
            return Err(Error::Precondition(format!("grid point {x} outside (0,1]")));
        }
        let a = coeff.a(x);
        if a.is_nan() || a <= 0.0 {
            return Err(Error::InvalidCoefficient(format!("a({x}) = {a} <= 0")));
        }
        sup = sup.max(x * coeff.da(x).abs() / a);
    }
    Ok(sup)
}

/// Classify as WD (K in (0,1)) or SD (K in [1,2)); K outside (0,2) is refused.
pub fn classify(coeff: &DegeneracyCoefficient, grid: &[f64]) -> Result<DegeneracyClass> {
    let k = degeneracy_constant(coeff, grid)?;
    if k >= 2.0 {
        return Err(Error::OutOfScope(format!(
            "K = {k} >= 2: behaviour beyond K = 2 is an open problem"
        )));
    }
    if k <= 0.0 {
        return Err(Error::OutOfScope(format!("K = {k} <= 0: coefficient does not degenerate")));
    }
    let kind = if k < 1.0 { Kind::WeaklyDegenerate } else { Kind::StronglyDegenerate };
    Ok(DegeneracyClass { kind, k })
}

/// Integral of 1/a over (0,1). Finite only in the weakly degenerate case;
/// 1/(1-alpha) analytically for power laws.
pub fn integral_one_over_a(
    coeff: &DegeneracyCoefficient,
    class: &DegeneracyClass,
) -> Result<f64> {
    if !class.is_wd() {
        return Err(Error::DivergentIntegral(
            "1/a is not integrable for a strongly degenerate coefficient".into(),
        ));
    }
    if let Some(alpha) = coeff.power_law_alpha() {
        return Ok(1.0 / (1.0 - alpha));
    }
    // Composite Gauss over geometric cells, plus the analytic tail bound
    // 1/a(x) <= eps^K / (a(eps) x^K) below the smallest resolved cell,
    // which integrates to eps/(a(eps)(1-K)).
    let rule = GaussRule::new(16);
    let k = class.k;
    let mut total = 0.0;
    let mut hi = 1.0;
    let mut eps = 1.0;
    for _ in 0..200 {
        let lo = hi * 0.5;
        total += rule.integrate(lo, hi, |x| 1.0 / coeff.a(x));
        hi = lo;
        eps = lo;
        let tail_bound = eps / (coeff.a(eps) * (1.0 - k));
        if tail_bound < 1e-12 * total.max(1.0) {
            break;
        }
    }
    let tail = eps / (coeff.a(eps) * (1.0 - k));
    Ok(total + tail)
}

/// Discrete check that x -> x^gamma / a(x) is nondecreasing on the grid,
/// required for every gamma >= K.
pub fn weight_monotonicity_holds(
    coeff: &DegeneracyCoefficient,
    gamma: f64,
    grid: &[f64],
) -> bool {
    let mut prev: Option<f64> = None;
    // tolerate roundoff at the level of the values themselves
    for &x in grid {
        let v = x.powf(gamma) / coeff.a(x);
        if let Some(p) = prev {
            if v < p * (1.0 - 1e-10) {
                return false;
            }
        }
        prev = Some(v);
    }
    true
}
