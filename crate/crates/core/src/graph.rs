//! The monotone enthalpy-to-temperature graph in its general two-phase form,
//! its canonical normalization, the strictly monotone approximations used
//! for the contraction argument, and the one-phase graph.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::Field;

/// Latent-heat interval `[e1, e2]` and phase slopes `c1`, `c2`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphParams {
    pub e1: f64,
    pub e2: f64,
    pub c1: f64,
    pub c2: f64,
}

impl GraphParams {
    pub fn new(e1: f64, e2: f64, c1: f64, c2: f64) -> Result<Self> {
        let p = Self { e1, e2, c1, c2 };
        p.validate()?;
        Ok(p)
    }

    pub const CANONICAL: GraphParams = GraphParams { e1: -1.0, e2: 1.0, c1: 1.0, c2: 1.0 };

    pub fn validate(&self) -> Result<()> {
        let finite = [self.e1, self.e2, self.c1, self.c2].iter().all(|v| v.is_finite());
        if !finite || !(self.e1 < 0.0 && 0.0 < self.e2) || !(self.c1 > 0.0 && self.c2 > 0.0) {
            return Err(Error::InvalidGraph(format!("need e1 < 0 < e2 and c1, c2 > 0, got {self:?}")));
        }
        Ok(())
    }
}

/// Canonical graph `sign(s) (|s| - 1)_+`.
pub fn gamma(s: f64) -> f64 {
    if s > 1.0 {
        s - 1.0
    } else if s < -1.0 {
        s + 1.0
    } else {
        0.0
    }
}

pub fn gamma_general(s: f64, p: &GraphParams) -> f64 {
    if s < p.e1 {
        p.c1 * (s - p.e1)
    } else if s > p.e2 {
        p.c2 * (s - p.e2)
    } else {
        0.0
    }
}

/// Strictly increasing approximation of [`gamma`].
///
/// Implemented exactly as the three-branch formula `s + 1`, `s / (n + 1)`,
/// `s - 1` with breakpoints `±(n + 1)/n`; the branches meet at the
/// breakpoints (both sides give `±1/n`) and `sup |gamma_n - gamma| = 1/(n+1)`.
pub fn gamma_n(s: f64, n: u32) -> f64 {
    assert!(n >= 1, "gamma_n needs n >= 1");
    let n = f64::from(n);
    let knee = (n + 1.0) / n;
    if s < -knee {
        s + 1.0
    } else if s > knee {
        s - 1.0
    } else {
        s / (n + 1.0)
    }
}

/// One-phase graph `(s - 1)_+`.
pub fn one_phase(s: f64) -> f64 {
    (s - 1.0).max(0.0)
}

/// Affine rescaling `u_hat = u_scale * u`, `v_hat = v_scale * v` of one phase.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhaseScaling {
    pub u_scale: f64,
    pub v_scale: f64,
}

/// Per-phase changes of units taking a general graph to the canonical one.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UnitChange {
    /// Applies where `u > 0` (the `e2`, `c2` phase).
    pub positive: PhaseScaling,
    /// Applies where `u < 0` (the `e1`, `c1` phase).
    pub negative: PhaseScaling,
}

impl UnitChange {
    fn phase(&self, u: f64) -> &PhaseScaling {
        if u >= 0.0 {
            &self.positive
        } else {
            &self.negative
        }
    }

    pub fn is_identity(&self) -> bool {
        [self.positive, self.negative].iter().all(|p| p.u_scale == 1.0 && p.v_scale == 1.0)
    }

    pub fn to_canonical_u(&self, u: f64) -> f64 {
        self.phase(u).u_scale * u
    }

    pub fn from_canonical_u(&self, u_hat: f64) -> f64 {
        u_hat / self.phase(u_hat).u_scale
    }

    /// Temperature in canonical units for an original enthalpy `u`.
    pub fn to_canonical_v(&self, u: f64, v: f64) -> f64 {
        self.phase(u).v_scale * v
    }

    pub fn from_canonical_v(&self, u: f64, v_hat: f64) -> f64 {
        v_hat / self.phase(u).v_scale
    }

    /// Evaluates the original graph through the canonical one:
    /// `v = gamma(u_hat) / v_scale`.
    pub fn general_via_canonical(&self, u: f64) -> f64 {
        self.from_canonical_v(u, gamma(self.to_canonical_u(u)))
    }
}

/// The unit change `u_hat = u / e2`, `v_hat = v / (c2 e2)` on the positive
/// phase and `u_hat = u / |e1|`, `v_hat = v / (c1 |e1|)` on the negative one.
pub fn normalize_units(p: &GraphParams) -> Result<UnitChange> {
    p.validate()?;
    Ok(UnitChange {
        positive: PhaseScaling { u_scale: 1.0 / p.e2, v_scale: 1.0 / (p.c2 * p.e2) },
        negative: PhaseScaling { u_scale: -1.0 / p.e1, v_scale: -1.0 / (p.c1 * p.e1) },
    })
}

/// Which graph drives an evolution.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Graph {
    Canonical,
    General { params: GraphParams },
    Regularized { n: u32 },
    OnePhase,
}

impl Graph {
    pub fn validate(&self) -> Result<()> {
        match self {
            Graph::General { params } => params.validate(),
            Graph::Regularized { n } if *n == 0 => {
                Err(Error::InvalidGraph("regularization index n must be >= 1".into()))
            }
            _ => Ok(()),
        }
    }

    #[inline]
    pub fn apply(&self, s: f64) -> f64 {
        match self {
            Graph::Canonical => gamma(s),
            Graph::General { params } => gamma_general(s, params),
            Graph::Regularized { n } => gamma_n(s, *n),
            Graph::OnePhase => one_phase(s),
        }
    }

    /// Largest slope of the graph.
    pub fn lipschitz(&self) -> f64 {
        match self {
            Graph::General { params } => params.c1.max(params.c2),
            _ => 1.0,
        }
    }

    pub fn apply_field(&self, u: &Field) -> Field {
        u.map(|s| self.apply(s))
    }
}
