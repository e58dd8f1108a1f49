//! Ground profiles and penalty-contact parameters.

use serde::{Deserialize, Serialize};

/// Height field under the character. Flat ground is the common case;
/// the generated profiles are used for robustness evaluation.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum GroundProfile {
    Flat {
        #[serde(default)]
        height: f64,
    },
    /// Piecewise-constant steps: `knots[i] = (x_i, h_i)` gives height `h_i`
    /// for `x >= x_i` (knots sorted by x). Height before the first knot is
    /// `h_0`.
    Steps { knots: Vec<(f64, f64)> },
    /// Piecewise-linear ramps through the knots, clamped to the end
    /// heights beyond the knot range.
    Ramps { knots: Vec<(f64, f64)> },
}

impl Default for GroundProfile {
    fn default() -> Self {
        GroundProfile::Flat { height: 0.0 }
    }
}

impl GroundProfile {
    pub fn height_at(&self, x: f64) -> f64 {
        match self {
            GroundProfile::Flat { height } => *height,
            GroundProfile::Steps { knots } => {
                if knots.is_empty() {
                    return 0.0;
                }
                let mut h = knots[0].1;
                for &(kx, kh) in knots {
                    if x >= kx {
                        h = kh;
                    } else {
                        break;
                    }
                }
                h
            }
            GroundProfile::Ramps { knots } => {
                if knots.is_empty() {
                    return 0.0;
                }
                if x <= knots[0].0 {
                    return knots[0].1;
                }
                for w in knots.windows(2) {
                    let (x0, h0) = w[0];
                    let (x1, h1) = w[1];
                    if x <= x1 {
                        let t = if x1 > x0 { (x - x0) / (x1 - x0) } else { 1.0 };
                        return h0 + t * (h1 - h0);
                    }
                }
                knots.last().unwrap().1
            }
        }
    }
}

/// Penalty-contact constants. The normal force is a spring-damper on
/// penetration depth, friction is regularized Coulomb.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct ContactConfig {
    /// Normal stiffness, N/m.
    pub k_normal: f64,
    /// Normal damping, N s/m.
    pub c_normal: f64,
    /// Coulomb friction coefficient.
    pub friction: f64,
    /// Tangential velocity scale for friction regularization, m/s.
    pub v_reg: f64,
}

impl Default for ContactConfig {
    fn default() -> Self {
        ContactConfig {
            k_normal: 40_000.0,
            c_normal: 600.0,
            friction: 0.9,
            v_reg: 0.05,
        }
    }
}
