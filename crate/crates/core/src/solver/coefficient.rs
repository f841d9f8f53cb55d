use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Something that supplies the noise coefficient at cell `i` given the local value `u`.
///
/// Solution-dependent coefficients ignore `i`; frozen coefficients ignore `u`.
pub trait Forcing {
    fn sigma(&self, i: usize, u: f64) -> f64;

    fn tag(&self) -> String;
}

/// Named coefficient families understood by the CLI and the Python bindings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum Preset {
    /// `sigma(u) = c`
    Constant { c: f64 },
    /// `sigma(u) = c0 + c1 u`
    Affine { c0: f64, c1: f64 },
    /// `sigma(u) = c0 + c1 sin(u)`
    Sine { c0: f64, c1: f64 },
}

#[derive(Clone)]
enum Kind {
    Preset(Preset),
    Custom(Arc<dyn Fn(f64) -> f64 + Send + Sync>),
}

/// A globally Lipschitz noise coefficient `sigma`.
#[derive(Clone)]
pub struct Coefficient {
    kind: Kind,
    lipschitz: f64,
    sigma0: f64,
    bound: Option<f64>,
    tag: String,
}

impl fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Coefficient")
            .field("tag", &self.tag)
            .field("lipschitz", &self.lipschitz)
            .field("sigma0", &self.sigma0)
            .field("bound", &self.bound)
            .finish()
    }
}

impl Coefficient {
    pub fn constant(c: f64) -> Self {
        Self::from_preset(Preset::Constant { c })
    }

    pub fn affine(c0: f64, c1: f64) -> Self {
        Self::from_preset(Preset::Affine { c0, c1 })
    }

    pub fn sine(c0: f64, c1: f64) -> Self {
        Self::from_preset(Preset::Sine { c0, c1 })
    }

    pub fn from_preset(preset: Preset) -> Self {
        let (lipschitz, bound, tag) = match preset {
            Preset::Constant { c } => (0.0, Some(c.abs()), format!("constant({c})")),
            Preset::Affine { c0, c1 } => (
                c1.abs(),
                (c1 == 0.0).then_some(c0.abs()),
                format!("affine({c0},{c1})"),
            ),
            Preset::Sine { c0, c1 } => {
                (c1.abs(), Some(c0.abs() + c1.abs()), format!("sine({c0},{c1})"))
            }
        };
        let mut coef = Self {
            kind: Kind::Preset(preset),
            lipschitz,
            sigma0: 0.0,
            bound,
            tag,
        };
        coef.sigma0 = coef.eval(0.0);
        coef
    }

    /// Wrap an arbitrary function. `lipschitz` and `bound` are the caller's
    /// declarations; [`Coefficient::spot_check`] can test them.
    pub fn custom<F>(tag: impl Into<String>, f: F, lipschitz: f64, bound: Option<f64>) -> Self
    where
        F: Fn(f64) -> f64 + Send + Sync + 'static,
    {
        let sigma0 = f(0.0);
        Self {
            kind: Kind::Custom(Arc::new(f)),
            lipschitz,
            sigma0,
            bound,
            tag: tag.into(),
        }
    }

    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        match &self.kind {
            Kind::Preset(Preset::Constant { c }) => *c,
            Kind::Preset(Preset::Affine { c0, c1 }) => c0 + c1 * u,
            Kind::Preset(Preset::Sine { c0, c1 }) => c0 + c1 * u.sin(),
            Kind::Custom(f) => f(u),
        }
    }

    pub fn preset(&self) -> Option<Preset> {
        match self.kind {
            Kind::Preset(p) => Some(p),
            Kind::Custom(_) => None,
        }
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn sigma0(&self) -> f64 {
        self.sigma0
    }

    pub fn bound(&self) -> Option<f64> {
        self.bound
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    /// Replace the Lipschitz constant by a declared one, to be tested by
    /// [`Coefficient::spot_check`].
    pub fn with_lipschitz(mut self, lipschitz: f64) -> Self {
        self.lipschitz = lipschitz;
        self
    }

    /// `-sigma`, with the same Lipschitz constant and bound.
    pub fn negated(&self) -> Self {
        let kind = match self.kind.clone() {
            Kind::Preset(Preset::Constant { c }) => Kind::Preset(Preset::Constant { c: -c }),
            Kind::Preset(Preset::Affine { c0, c1 }) => {
                Kind::Preset(Preset::Affine { c0: -c0, c1: -c1 })
            }
            Kind::Preset(Preset::Sine { c0, c1 }) => Kind::Preset(Preset::Sine { c0: -c0, c1: -c1 }),
            Kind::Custom(f) => Kind::Custom(Arc::new(move |u| -f(u))),
        };
        Self {
            kind,
            lipschitz: self.lipschitz,
            sigma0: -self.sigma0,
            bound: self.bound,
            tag: format!("-{}", self.tag),
        }
    }

    /// Check the declared Lipschitz constant and bound on `samples`
    /// deterministic pairs drawn from `[-span, span]`.
    pub fn spot_check(&self, samples: usize, span: f64) -> Result<()> {
        if self.sigma0 != self.eval(0.0) {
            return Err(Error::Config(format!("{}: sigma(0) mismatch", self.tag)));
        }
        let mut state = 0x853c_49e6_748f_ea9bu64;
        let mut uniform = || {
            state = state
                .wrapping_mul(6_364_136_223_846_793_005)
                .wrapping_add(1_442_695_040_888_963_407);
            ((state >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0) * span
        };
        for _ in 0..samples {
            let (u, v) = (uniform(), uniform());
            let (su, sv) = (self.eval(u), self.eval(v));
            let slack = 1e-12 * (1.0 + su.abs().max(sv.abs()));
            if (su - sv).abs() > self.lipschitz * (u - v).abs() + slack {
                return Err(Error::Config(format!(
                    "{}: |sigma({u}) - sigma({v})| exceeds declared Lipschitz constant {}",
                    self.tag, self.lipschitz
                )));
            }
            if let Some(b) = self.bound {
                if su.abs() > b * (1.0 + 1e-12) {
                    return Err(Error::Config(format!(
                        "{}: |sigma({u})| = {} exceeds declared bound {b}",
                        self.tag,
                        su.abs()
                    )));
                }
            }
        }
        Ok(())
    }
}

impl Forcing for Coefficient {
    #[inline]
    fn sigma(&self, _i: usize, u: f64) -> f64 {
        self.eval(u)
    }

    fn tag(&self) -> String {
        self.tag.clone()
    }
}

/// `sigma` clipped to `[-m, m]` with `m = 2 |sigma(0)|`.
#[derive(Debug, Clone)]
pub struct TruncatedCoefficient {
    base: Coefficient,
    m: f64,
}

/// Build the truncated coefficient. Fails when `sigma(0) = 0`.
pub fn truncate_coefficient(sigma: &Coefficient) -> Result<TruncatedCoefficient> {
    if sigma.sigma0() == 0.0 || !sigma.sigma0().is_finite() {
        return Err(Error::Precondition(format!(
            "{}: truncation needs sigma(0) != 0",
            sigma.tag()
        )));
    }
    Ok(TruncatedCoefficient {
        base: sigma.clone(),
        m: 2.0 * sigma.sigma0().abs(),
    })
}

impl TruncatedCoefficient {
    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        let s = self.base.eval(u);
        if s > self.m {
            self.m
        } else if s < -self.m {
            -self.m
        } else {
            s
        }
    }

    /// Whether the clip is active at `u`, i.e. `eval(u) != base().eval(u)`.
    #[inline]
    pub fn clips(&self, u: f64) -> bool {
        let s = self.base.eval(u);
        s > self.m || s < -self.m
    }

    pub fn m(&self) -> f64 {
        self.m
    }

    pub fn base(&self) -> &Coefficient {
        &self.base
    }
}

impl Forcing for TruncatedCoefficient {
    #[inline]
    fn sigma(&self, _i: usize, u: f64) -> f64 {
        self.eval(u)
    }

    fn tag(&self) -> String {
        format!("truncated[{}]", self.base.tag())
    }
}

/// A coefficient fixed per cell, independent of the solution.
#[derive(Debug, Clone, PartialEq)]
pub struct FrozenCoefficient {
    values: Vec<f64>,
    tag: String,
}

impl FrozenCoefficient {
    pub fn new(values: Vec<f64>, tag: impl Into<String>) -> Self {
        Self {
            values,
            tag: tag.into(),
        }
    }

    /// `sigma_tilde` evaluated on a spatial profile.
    pub fn freeze(sigma: &TruncatedCoefficient, profile: &[f64]) -> Self {
        Self {
            values: profile.iter().map(|&u| sigma.eval(u)).collect(),
            tag: format!("frozen[{}]", sigma.base().tag()),
        }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }
}

impl Forcing for FrozenCoefficient {
    #[inline]
    fn sigma(&self, i: usize, _u: f64) -> f64 {
        self.values[i]
    }

    fn tag(&self) -> String {
        self.tag.clone()
    }
}
