//! Function classes, fixed-step methods and the preset catalog.

use std::fmt;
use std::str::FromStr;

use crate::error::{CoeffKind, Error, Result};

/// Tolerance on the fixed-point conditions `sum(beta) = sum(gamma) = 1`.
pub const SUM_TOL: f64 = 1e-12;

/// The class of `L`-smooth, `mu`-strongly convex functions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FunctionClass {
    mu: f64,
    l: f64,
}

impl FunctionClass {
    pub fn new(mu: f64, l: f64) -> Result<Self> {
        if !(mu.is_finite() && l.is_finite() && mu > 0.0 && mu <= l) {
            return Err(Error::InvalidClass { mu, l });
        }
        Ok(Self { mu, l })
    }

    /// Class with `mu = 1` and `L = kappa`.
    pub fn with_condition_number(kappa: f64) -> Result<Self> {
        Self::new(1.0, kappa)
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    pub fn l(&self) -> f64 {
        self.l
    }

    pub fn kappa(&self) -> f64 {
        self.l / self.mu
    }

    /// The same class rescaled so that `L = 1`.
    pub fn normalized(&self) -> Self {
        Self {
            mu: self.mu / self.l,
            l: 1.0,
        }
    }

    /// `(c mu, c L)`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.mu * c, self.l * c)
    }
}

/// A fixed-step method of degree `N`:
///
/// ```text
/// y_k     = sum_j gamma_j x_{k-j}
/// x_{k+1} = sum_j beta_j  x_{k-j} - alpha grad f(y_k)
/// ```
#[derive(Debug, Clone, PartialEq)]
pub struct MethodSpec {
    alpha: f64,
    beta: Vec<f64>,
    gamma: Vec<f64>,
}

impl MethodSpec {
    /// Builds and validates a method.
    pub fn new(alpha: f64, beta: Vec<f64>, gamma: Vec<f64>) -> Result<Self> {
        Self::from_raw(alpha, beta, gamma).validate()
    }

    /// Builds a method without checking any invariant. Call
    /// [`MethodSpec::validate`] before handing it to the assembly.
    pub fn from_raw(alpha: f64, beta: Vec<f64>, gamma: Vec<f64>) -> Self {
        Self { alpha, beta, gamma }
    }

    /// Degree-one method in the two-parameter momentum form
    /// `y_k = x_k + gamma (x_k - x_{k-1})`,
    /// `x_{k+1} = x_k + beta (x_k - x_{k-1}) - alpha grad f(y_k)`.
    pub fn momentum_form(alpha: f64, beta: f64, gamma: f64) -> Self {
        Self::from_raw(alpha, vec![1.0 + beta, -beta], vec![1.0 + gamma, -gamma])
    }

    /// Plain gradient descent with step `alpha` (degree zero).
    pub fn gradient_method(alpha: f64) -> Self {
        Self::from_raw(alpha, vec![1.0], vec![1.0])
    }

    pub fn validate(self) -> Result<Self> {
        let n1 = self.beta.len();
        if n1 == 0 {
            return Err(Error::CoefficientLength {
                kind: CoeffKind::Beta,
                expected: 1,
                found: 0,
            });
        }
        if self.gamma.len() != n1 {
            return Err(Error::CoefficientLength {
                kind: CoeffKind::Gamma,
                expected: n1,
                found: self.gamma.len(),
            });
        }
        let all_finite = self.alpha.is_finite()
            && self.beta.iter().chain(&self.gamma).all(|v| v.is_finite());
        if !all_finite {
            return Err(Error::InvalidArgument("non-finite step-size".into()));
        }
        let sb: f64 = self.beta.iter().sum();
        if (sb - 1.0).abs() > SUM_TOL {
            return Err(Error::SumNotOne(CoeffKind::Beta, sb));
        }
        let sg: f64 = self.gamma.iter().sum();
        if (sg - 1.0).abs() > SUM_TOL {
            return Err(Error::SumNotOne(CoeffKind::Gamma, sg));
        }
        if self.alpha == 0.0 {
            return Err(Error::ZeroAlpha);
        }
        if self.gamma[0] == 0.0 {
            return Err(Error::ZeroGammaZero);
        }
        Ok(self)
    }

    /// Memory length `N`.
    pub fn degree(&self) -> usize {
        self.beta.len().saturating_sub(1)
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> &[f64] {
        &self.beta
    }

    pub fn gamma(&self) -> &[f64] {
        &self.gamma
    }

    /// Same method with the gradient step multiplied by `c`. Running the
    /// result on `f / c` reproduces the iterates of `self` on `f`.
    pub fn with_scaled_step(&self, c: f64) -> Self {
        Self {
            alpha: self.alpha * c,
            beta: self.beta.clone(),
            gamma: self.gamma.clone(),
        }
    }
}

/// Named methods from the standard catalog.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Preset {
    /// Gradient method, step `1/L`.
    Gm,
    /// Heavy-ball method.
    Hbm,
    /// Nesterov's fast gradient method for strongly convex functions.
    Fgm,
    /// Triple momentum method.
    Tmm,
}

impl Preset {
    pub const ALL: [Preset; 4] = [Preset::Gm, Preset::Hbm, Preset::Fgm, Preset::Tmm];

    pub fn name(&self) -> &'static str {
        match self {
            Preset::Gm => "gm",
            Preset::Hbm => "hbm",
            Preset::Fgm => "fgm",
            Preset::Tmm => "tmm",
        }
    }

    /// `(alpha, beta, gamma)` of the two-parameter momentum form.
    pub fn parameters(&self, class: &FunctionClass) -> (f64, f64, f64) {
        let (mu, l) = (class.mu(), class.l());
        let sk = class.kappa().sqrt();
        match self {
            Preset::Gm => (1.0 / l, 0.0, 0.0),
            Preset::Hbm => {
                let a = 4.0 / (l.sqrt() + mu.sqrt()).powi(2);
                let b = ((sk - 1.0) / (sk + 1.0)).powi(2);
                (a, b, 0.0)
            }
            Preset::Fgm => {
                let b = (sk - 1.0) / (sk + 1.0);
                (1.0 / l, b, b)
            }
            Preset::Tmm => {
                let a = (2.0 * l.sqrt() - mu.sqrt()) / (l * l.sqrt());
                let b = (sk - 1.0).powi(2) / (sk * sk + sk);
                let g = (sk - 1.0).powi(2) / (2.0 * sk * sk + sk - 1.0);
                (a, b, g)
            }
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gm" => Ok(Preset::Gm),
            "hbm" => Ok(Preset::Hbm),
            "fgm" => Ok(Preset::Fgm),
            "tmm" => Ok(Preset::Tmm),
            _ => Err(Error::UnknownPreset(s.to_string())),
        }
    }
}

/// Expands a preset into method coefficients. GM is returned with degree
/// zero; the momentum methods with degree one.
pub fn make_preset(preset: Preset, class: &FunctionClass) -> MethodSpec {
    let (a, b, g) = preset.parameters(class);
    match preset {
        Preset::Gm => MethodSpec::gradient_method(a),
        _ => MethodSpec::momentum_form(a, b, g),
    }
}

/// Parses a preset name and expands it.
pub fn make_preset_by_name(name: &str, class: &FunctionClass) -> Result<MethodSpec> {
    Ok(make_preset(name.parse()?, class))
}
