//! Hill-type musculotendon units.
//!
//! Each unit is a contractile element (CE) in parallel with a passive
//! spring (PE), both in series with a tendon spring (SE). The tendon force
//! is what reaches the skeleton:
//!
//! ```text
//! F_MTU = F_SE = F_CE + F_PE
//! F_CE  = a * F0 * f_l(l_CE) * f_v(v_CE) * cos(pennation)
//! ```
//!
//! Muscle routing over joints uses a sinusoidal moment-arm model: per
//! spanned joint, r(q) = r0 * cos(q_max - q), which integrates to the
//! path-length contribution r0 * (sin(q_max - q_rest) - sin(q_max - q))
//! relative to the rest orientation. The sign of r0 selects the pull
//! direction, so a single scalar encodes flexor vs extensor routing.
//!
//! Each substep solves the series-equilibrium equation for v_CE by
//! inverting f_v in closed form, then advances l_CE by explicit Euler.
//! v_CE is bounded by the f_v branches, so the muscle state cannot run
//! away even under abrupt activation changes.

use serde::{Deserialize, Serialize};

/// Shared force-curve constants. Values are normalized: lengths by l_opt,
/// velocities by v_max, forces by F0.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
#[serde(default)]
pub struct MuscleCurves {
    /// Force-length bell width: f_l drops to `fl_floor` at a relative
    /// length offset of `fl_width`.
    pub fl_width: f64,
    pub fl_floor: f64,
    /// Hill shortening curvature constant.
    pub fv_shortening_k: f64,
    /// Eccentric force plateau.
    pub fv_max: f64,
    /// Maximum shortening velocity in optimal lengths per second.
    pub v_max_scale: f64,
    /// SE strain at which tendon force reaches F0.
    pub se_strain_ref: f64,
    /// PE strain (beyond l_opt) at which parallel force reaches F0.
    pub pe_strain_ref: f64,
}

impl Default for MuscleCurves {
    fn default() -> Self {
        MuscleCurves {
            fl_width: 0.56,
            fl_floor: 0.05,
            fv_shortening_k: 0.25,
            fv_max: 1.5,
            v_max_scale: 10.0,
            se_strain_ref: 0.04,
            pe_strain_ref: 0.56,
        }
    }
}

impl MuscleCurves {
    /// Force-length bell: 1 at l = l_opt, `fl_floor` at the width edges.
    pub fn f_l(&self, l_ce: f64, l_opt: f64) -> f64 {
        let x = ((l_ce - l_opt) / (l_opt * self.fl_width)).abs();
        (self.fl_floor.ln() * x.powi(3)).exp()
    }

    /// Force-velocity factor as a function of u = v_CE / v_max
    /// (u < 0 shortening). Hill hyperbola while shortening, saturating
    /// branch while lengthening; both meet at f_v(0) = 1 with equal slope.
    pub fn f_v(&self, u: f64) -> f64 {
        let k = self.fv_shortening_k;
        if u <= 0.0 {
            if u <= -1.0 {
                0.0
            } else {
                (1.0 + u) / (1.0 - u / k)
            }
        } else {
            // (c1*u + c0)/(u + c0) with c0 chosen for C1 continuity at 0:
            // slope there is (c1 - 1)/c0 and must equal the Hill slope
            // (1 + 1/k).
            let c1 = self.fv_max;
            let c0 = (c1 - 1.0) / (1.0 + 1.0 / k);
            (c1 * u + c0) / (u + c0)
        }
    }

    /// Inverse of f_v, clamped to the representable force range.
    /// Monotone, so each branch inverts in closed form.
    pub fn f_v_inverse(&self, phi: f64) -> f64 {
        let k = self.fv_shortening_k;
        if phi <= 0.0 {
            -1.0
        } else if phi <= 1.0 {
            // phi = (1 + u)/(1 - u/k)  =>  u = (phi - 1)/(1 + phi/k)
            (phi - 1.0) / (1.0 + phi / k)
        } else {
            let c1 = self.fv_max;
            let c0 = (c1 - 1.0) / (1.0 + 1.0 / k);
            // Saturates at c1; cap just below to keep the inverse finite.
            let phi = phi.min(c1 - 0.05);
            c0 * (phi - 1.0) / (c1 - phi)
        }
    }

    /// Tendon force: quadratic in strain above the rest length.
    pub fn se_force(&self, l_se: f64, l_se_rest: f64, f0: f64) -> f64 {
        let strain = (l_se - l_se_rest) / l_se_rest;
        if strain <= 0.0 {
            0.0
        } else {
            f0 * (strain / self.se_strain_ref).powi(2)
        }
    }

    /// Parallel elastic force: engages beyond the optimal CE length.
    pub fn pe_force(&self, l_ce: f64, l_opt: f64, f0: f64) -> f64 {
        let strain = (l_ce - l_opt) / l_opt;
        if strain <= 0.0 {
            0.0
        } else {
            f0 * (strain / self.pe_strain_ref).powi(2)
        }
    }
}

/// One joint spanned by a muscle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MtuSpanDoc {
    pub joint: String,
    /// Peak moment arm, metres; sign selects the pull direction.
    pub r0: f64,
    /// Joint angle of maximum moment arm, radians.
    pub q_max: f64,
    /// Joint angle at which this span contributes zero path length, radians.
    pub q_rest: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MtuUnitDoc {
    pub name: String,
    /// Maximum isometric force, N.
    pub f0: f64,
    /// Optimal contractile-element length, m.
    pub l_opt: f64,
    /// Serial elastic rest length, m.
    pub l_se_rest: f64,
    /// Pennation angle, rad.
    #[serde(default)]
    pub pennation: f64,
    pub spans: Vec<MtuSpanDoc>,
}

/// Resolved span: joint by index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MtuSpan {
    pub joint: usize,
    pub r0: f64,
    pub q_max: f64,
    pub q_rest: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MtuUnit {
    pub name: String,
    pub f0: f64,
    pub l_opt: f64,
    pub l_se_rest: f64,
    pub pennation: f64,
    pub spans: Vec<MtuSpan>,
}

/// Result of one muscle substep.
#[derive(Debug, Clone, Copy)]
pub struct MtuStep {
    /// Tendon force transmitted to the skeleton, N.
    pub f_mtu: f64,
    pub l_ce_new: f64,
    /// |F_SE - (F_CE + F_PE)| at the solved contraction velocity, N.
    pub residual: f64,
}

impl MtuSpan {
    pub fn moment_arm(&self, q: f64) -> f64 {
        self.r0 * (self.q_max - q).cos()
    }

    /// Path-length contribution relative to the rest orientation.
    pub fn length_contribution(&self, q: f64) -> f64 {
        self.r0 * ((self.q_max - self.q_rest).sin() - (self.q_max - q).sin())
    }
}

impl MtuUnit {
    /// Total musculotendon path length at the given joint angles.
    pub fn l_mtu(&self, q_joints: &[f64]) -> f64 {
        let mut l = self.l_se_rest + self.l_opt;
        for s in &self.spans {
            l += s.length_contribution(q_joints[s.joint]);
        }
        l
    }

    pub fn v_max(&self, curves: &MuscleCurves) -> f64 {
        curves.v_max_scale * self.l_opt
    }

    /// Lower/upper clamp for the CE length.
    pub fn l_ce_range(&self) -> (f64, f64) {
        (0.2 * self.l_opt, 1.8 * self.l_opt)
    }

    pub fn active_force(&self, curves: &MuscleCurves, a: f64, l_ce: f64, u: f64) -> f64 {
        a * self.f0 * curves.f_l(l_ce, self.l_opt) * curves.f_v(u) * self.pennation.cos()
    }

    /// One substep: equilibrate the series element against the CE+PE pair
    /// by solving for the contraction velocity, emit the tendon force, and
    /// advance l_CE.
    pub fn substep(
        &self,
        curves: &MuscleCurves,
        q_joints: &[f64],
        l_ce: f64,
        activation: f64,
        dt: f64,
    ) -> MtuStep {
        let a = activation.clamp(0.0, 1.0);
        let l_mtu = self.l_mtu(q_joints);
        let l_se = l_mtu - l_ce;
        let f_se = curves.se_force(l_se, self.l_se_rest, self.f0);
        let f_pe = curves.pe_force(l_ce, self.l_opt, self.f0);

        // Activation floor keeps the inversion well-conditioned; the
        // transmitted force still uses F_SE, so a slack muscle stays silent.
        let a_solve = a.max(1e-3);
        let denom = a_solve * self.f0 * curves.f_l(l_ce, self.l_opt) * self.pennation.cos();
        let phi = ((f_se - f_pe) / denom).max(0.0);
        let u = self.clamp_u(curves, phi);
        let f_ce = self.active_force(curves, a_solve, l_ce, u);
        let residual = (f_se - (f_ce + f_pe)).abs();

        let (lo, hi) = self.l_ce_range();
        let l_ce_new = (l_ce + dt * u * self.v_max(curves)).clamp(lo, hi);
        MtuStep {
            f_mtu: f_se,
            l_ce_new,
            residual,
        }
    }

    fn clamp_u(&self, curves: &MuscleCurves, phi: f64) -> f64 {
        curves.f_v_inverse(phi).clamp(-1.0, 1.0)
    }

    /// Passive equilibrium CE length at the given pose: F_SE = F_PE with
    /// zero activation. Solved by bisection; the balance is monotone in
    /// l_CE (longer CE slackens the tendon and stretches PE).
    pub fn passive_equilibrium_l_ce(&self, curves: &MuscleCurves, q_joints: &[f64]) -> f64 {
        let l_mtu = self.l_mtu(q_joints);
        let (mut lo, mut hi) = self.l_ce_range();
        let balance = |l_ce: f64| {
            curves.se_force(l_mtu - l_ce, self.l_se_rest, self.f0)
                - curves.pe_force(l_ce, self.l_opt, self.f0)
        };
        if balance(lo) <= 0.0 {
            // Tendon slack even at the shortest CE: park the CE wherever
            // the geometry leaves it, clamped to range.
            return (l_mtu - self.l_se_rest).clamp(lo, hi);
        }
        if balance(hi) >= 0.0 {
            return hi;
        }
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if balance(mid) > 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        0.5 * (lo + hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn curves() -> MuscleCurves {
        MuscleCurves::default()
    }

    fn unit() -> MtuUnit {
        MtuUnit {
            name: "test".into(),
            f0: 1000.0,
            l_opt: 0.1,
            l_se_rest: 0.25,
            pennation: 0.0,
            spans: vec![MtuSpan {
                joint: 0,
                r0: 0.05,
                q_max: 0.3,
                q_rest: 0.0,
            }],
        }
    }

    #[test]
    fn force_length_peaks_at_one() {
        let c = curves();
        assert_eq!(c.f_l(0.1, 0.1), 1.0);
        assert!(c.f_l(0.12, 0.1) < 1.0);
        assert!(c.f_l(0.08, 0.1) < 1.0);
        // Floor value at the width edges.
        assert_relative_eq!(c.f_l(0.1 * (1.0 + 0.56), 0.1), 0.05, max_relative = 1e-12);
    }

    #[test]
    fn force_velocity_normalization_and_endpoints() {
        let c = curves();
        assert_eq!(c.f_v(0.0), 1.0);
        assert_eq!(c.f_v(-1.0), 0.0);
        assert_eq!(c.f_v(-2.0), 0.0);
        assert!(c.f_v(10.0) < c.fv_max);
        assert!(c.f_v(10.0) > 1.4);
    }

    #[test]
    fn force_velocity_is_monotone() {
        let c = curves();
        let mut prev = c.f_v(-1.0);
        let mut u = -1.0;
        while u < 1.0 {
            u += 0.01;
            let f = c.f_v(u);
            assert!(f >= prev, "f_v not monotone at u = {u}");
            prev = f;
        }
    }

    #[test]
    fn force_velocity_is_continuous_in_value_and_slope_at_zero() {
        let c = curves();
        let h = 1e-7;
        let left = (c.f_v(0.0) - c.f_v(-h)) / h;
        let right = (c.f_v(h) - c.f_v(0.0)) / h;
        assert_relative_eq!(left, right, max_relative = 1e-5);
    }

    #[test]
    fn force_velocity_inversion_round_trips() {
        let c = curves();
        for i in 0..200 {
            let u = -0.999 + i as f64 * 0.008; // interior of both branches
            let phi = c.f_v(u);
            if phi < c.fv_max - 0.05 {
                assert_relative_eq!(c.f_v_inverse(phi), u, epsilon = 1e-10);
            }
        }
    }

    #[test]
    fn isometric_fully_activated_force_is_f0() {
        let u = unit();
        let f = u.active_force(&curves(), 1.0, u.l_opt, 0.0);
        assert_eq!(f, u.f0);
    }

    #[test]
    fn slack_passive_muscle_transmits_nothing() {
        let u = unit();
        // q = q_rest puts the path at rest length; l_CE = l_opt leaves the
        // tendon exactly at its rest length and the PE at its slack limit.
        let step = u.substep(&curves(), &[0.0], u.l_opt, 0.0, 1.0 / 600.0);
        assert_eq!(step.f_mtu, 0.0);
    }

    #[test]
    fn moment_arm_is_path_length_derivative() {
        let u = unit();
        let h = 1e-6;
        for q in [-0.5, -0.1, 0.0, 0.2, 0.7] {
            let fd = (u.l_mtu(&[q + h]) - u.l_mtu(&[q - h])) / (2.0 * h);
            assert_relative_eq!(fd, u.spans[0].moment_arm(q), epsilon = 1e-8);
        }
    }

    #[test]
    fn moment_arm_peaks_at_q_max() {
        let u = unit();
        let s = u.spans[0];
        assert!(s.moment_arm(s.q_max).abs() >= s.moment_arm(s.q_max + 0.3).abs());
        assert!(s.moment_arm(s.q_max).abs() >= s.moment_arm(s.q_max - 0.3).abs());
        assert_eq!(s.moment_arm(s.q_max), s.r0);
    }

    #[test]
    fn stretched_tendon_builds_force_and_equilibrium_is_exact() {
        let u = unit();
        let c = curves();
        // Stretch the path by bending the joint away from rest.
        let q = [0.8];
        let mut l_ce = u.passive_equilibrium_l_ce(&c, &q);
        let dt = 1.0 / 600.0;
        for _ in 0..300 {
            let step = u.substep(&c, &q, l_ce, 0.6, dt);
            assert!(
                step.residual < 1e-6 * u.f0,
                "residual {} N",
                step.residual
            );
            l_ce = step.l_ce_new;
        }
        let last = u.substep(&c, &q, l_ce, 0.6, dt);
        assert!(last.f_mtu > 0.0);
        let (lo, hi) = u.l_ce_range();
        assert!(l_ce > lo && l_ce < hi);
    }

    #[test]
    fn passive_equilibrium_balances_forces() {
        let u = unit();
        let c = curves();
        for q in [-0.4, 0.0, 0.3, 0.9] {
            let l_ce = u.passive_equilibrium_l_ce(&c, &[q]);
            let l_se = u.l_mtu(&[q]) - l_ce;
            let gap = c.se_force(l_se, u.l_se_rest, u.f0) - c.pe_force(l_ce, u.l_opt, u.f0);
            assert!(
                gap.abs() < 1e-6 * u.f0 || l_se <= u.l_se_rest,
                "q = {q}: gap {gap}"
            );
        }
    }

    #[test]
    fn l_ce_stays_positive_and_bounded_under_random_activation() {
        let u = unit();
        let c = curves();
        let mut l_ce = u.passive_equilibrium_l_ce(&c, &[0.0]);
        let dt = 1.0 / 600.0;
        let mut x = 0u64;
        for i in 0..6000 {
            // Cheap deterministic pseudo-random activation and pose sweep.
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            let a = (x >> 40) as f64 / (1u64 << 24) as f64;
            let q = 0.6 * (i as f64 * 0.01).sin();
            let step = u.substep(&c, &[q], l_ce, a, dt);
            l_ce = step.l_ce_new;
            assert!(l_ce > 0.0 && l_ce.is_finite());
        }
        let (lo, hi) = u.l_ce_range();
        assert!(l_ce >= lo && l_ce <= hi);
    }
}
