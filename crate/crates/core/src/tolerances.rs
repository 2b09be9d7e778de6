//! Central tolerance and step-size record.
//!
//! Every numerical threshold used by the library lives here so that runs can
//! be reproduced from the serialized record alone. Fields deserialize
//! individually; omitted fields keep their defaults, which are the values the
//! shipped test suite is calibrated against.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Smallest admissible metric eigenvalue; below this the chart point is
    /// treated as degenerate rather than inverted.
    pub eps_pd: f64,
    /// Smallest admissible |det| for a frame matrix.
    pub eps_frame: f64,
    /// Allowed relative drift of geodesic speed over one integration.
    pub tol_speed: f64,
    /// Allowed residual for curvature identities (flatness, nullity).
    pub tol_curv: f64,
    /// Allowed deviation of a transported frame from orthonormality.
    pub tol_orth: f64,
    /// Fixed-point residual threshold, relative to the translation scale
    /// `max(1, max_i |b_i|)`.
    pub tol_fp: f64,
    /// Ridge added to the fixed-point normal equations for numerical safety.
    pub eps_ridge: f64,
    /// Invariance threshold for subspace splitting and product-block checks.
    pub tol_split: f64,
    /// Relative singular-value threshold for translation rank decisions.
    pub tol_rank: f64,
    /// Deviation from the identity element below which a holonomy element
    /// counts as trivial.
    pub tol_trivial: f64,
    /// Radial fields shorter than this cannot anchor a cone certificate.
    pub eps_v: f64,
    /// Per-identity residual bound for a positive cone certificate; the
    /// refutation threshold is 100 times this.
    pub tol_cone: f64,
    /// Finite-difference step for derivatives of propagated fields.
    pub h_field: f64,
    /// Central finite-difference step for metric derivatives.
    pub h_fd: f64,
    /// Default fixed RK4 step in curve-parameter units (parameter tracks
    /// chart arc length).
    pub rk4_step: f64,
    /// Chart-coordinate tolerance for loop closure.
    pub eps_closure: f64,
    /// Target residual for two-point geodesic shooting.
    pub bvp_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            eps_pd: 1e-10,
            eps_frame: 1e-12,
            tol_speed: 1e-6,
            tol_curv: 1e-4,
            tol_orth: 1e-6,
            tol_fp: 1e-4,
            eps_ridge: 1e-12,
            tol_split: 1e-6,
            tol_rank: 1e-4,
            tol_trivial: 1e-8,
            eps_v: 1e-6,
            tol_cone: 1e-4,
            h_field: 1e-4,
            h_fd: 1e-5,
            rk4_step: 1e-3,
            eps_closure: 1e-13,
            bvp_tol: 1e-12,
        }
    }
}

impl Tolerances {
    /// Finite-difference step for differentiating Christoffel symbols.
    ///
    /// When the symbols themselves come from finite differences of the
    /// metric, their noise floor is roughly `eps_machine / h_fd`; the outer
    /// derivative therefore uses the larger step `sqrt(h_fd)` to keep the
    /// nested scheme stable. Analytic symbols are smooth, so a step near the
    /// cube root of machine epsilon minimizes the usual central-difference
    /// error balance.
    pub fn h_gamma(&self, analytic: bool) -> f64 {
        if analytic {
            6e-6
        } else {
            self.h_fd.sqrt()
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let fields = [
            ("eps_pd", self.eps_pd),
            ("eps_frame", self.eps_frame),
            ("tol_speed", self.tol_speed),
            ("tol_curv", self.tol_curv),
            ("tol_orth", self.tol_orth),
            ("tol_fp", self.tol_fp),
            ("eps_ridge", self.eps_ridge),
            ("tol_split", self.tol_split),
            ("tol_rank", self.tol_rank),
            ("tol_trivial", self.tol_trivial),
            ("eps_v", self.eps_v),
            ("tol_cone", self.tol_cone),
            ("h_field", self.h_field),
            ("h_fd", self.h_fd),
            ("rk4_step", self.rk4_step),
            ("eps_closure", self.eps_closure),
            ("bvp_tol", self.bvp_tol),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(format!("tolerance {name} must be finite and positive, got {value}"));
            }
        }
        Ok(())
    }
}
