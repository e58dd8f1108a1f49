//! Action parameterizations: torques, target velocities, PD target
//! angles, and musculotendon activations.
//!
//! An [`Actuation`] is resolved against a character and maps the policy's
//! action vector to joint torques once per simulation substep. The tunable
//! constants of each model (gains, muscle geometry and strength) flatten
//! into a parameter vector for the actuator optimizer; torque mode has
//! none.

pub mod mtu;

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};
use crate::rigid2d::CharacterModel;
pub use mtu::{MtuSpan, MtuSpanDoc, MtuStep, MtuUnit, MtuUnitDoc, MuscleCurves};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActuationKind {
    Torque,
    Velocity,
    Pd,
    Mtu,
}

impl ActuationKind {
    pub fn parse(name: &str) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "tor" | "torque" => Ok(ActuationKind::Torque),
            "vel" | "velocity" => Ok(ActuationKind::Velocity),
            "pd" => Ok(ActuationKind::Pd),
            "mtu" => Ok(ActuationKind::Mtu),
            other => Err(Error::config(
                "actuation",
                format!("unknown kind `{other}` (expected tor, vel, pd, or mtu)"),
            )),
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ActuationKind::Torque => "tor",
            ActuationKind::Velocity => "vel",
            ActuationKind::Pd => "pd",
            ActuationKind::Mtu => "mtu",
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum NumOrVec {
    Num(f64),
    Vec(Vec<f64>),
}

impl NumOrVec {
    fn broadcast(&self, n: usize, field: &str) -> Result<Vec<f64>> {
        match self {
            NumOrVec::Num(v) => Ok(vec![*v; n]),
            NumOrVec::Vec(vs) if vs.len() == n => Ok(vs.clone()),
            NumOrVec::Vec(vs) => Err(Error::dim(field, n, vs.len())),
        }
    }
}

/// On-disk actuation description.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct ActuationDoc {
    kind: ActuationKind,
    #[serde(default)]
    kp: Option<Vec<f64>>,
    #[serde(default)]
    kd: Option<Vec<f64>>,
    /// Symmetric action bound for target-velocity mode, rad/s.
    #[serde(default)]
    velocity_bound: Option<NumOrVec>,
    /// Exploration stddev per action dimension (scalar broadcasts).
    #[serde(default)]
    sigma: Option<NumOrVec>,
    #[serde(default)]
    muscles: Vec<MtuUnitDoc>,
    #[serde(default)]
    curves: Option<MuscleCurves>,
}

/// Torques produced by one actuation substep.
#[derive(Debug, Clone)]
pub struct ActuationOutput {
    pub torques: Vec<f64>,
    /// Per-unit tendon forces; empty unless the kind is MTU.
    pub mtu_forces: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Actuation {
    pub kind: ActuationKind,
    pub curves: MuscleCurves,
    pub muscles: Vec<MtuUnit>,
    kp: Vec<f64>,
    kd: Vec<f64>,
    bounds: Vec<[f64; 2]>,
    sigma: Vec<f64>,
    joint_names: Vec<String>,
    /// Search-window half-width for multiplicative parameter bounds.
    pub psi_window: f64,
    /// Search half-width for angular parameters, radians.
    pub psi_angle_window: f64,
}

impl Actuation {
    pub fn load(path: impl AsRef<Path>, model: &CharacterModel) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        Self::from_json_str(&text, &path.display().to_string(), model)
    }

    pub fn from_json_str(text: &str, path: &str, model: &CharacterModel) -> Result<Self> {
        let doc: ActuationDoc = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: path.to_string(),
            detail: e.to_string(),
        })?;
        Self::resolve(doc, model)
    }

    /// Pure-torque actuation needs no file.
    pub fn torque_default(model: &CharacterModel) -> Self {
        Self::resolve(
            ActuationDoc {
                kind: ActuationKind::Torque,
                kp: None,
                kd: None,
                velocity_bound: None,
                sigma: None,
                muscles: Vec::new(),
                curves: None,
            },
            model,
        )
        .expect("torque actuation has no invalid inputs")
    }

    fn resolve(doc: ActuationDoc, model: &CharacterModel) -> Result<Self> {
        let nj = model.num_joints();
        let joint_names: Vec<String> = model.joints.iter().map(|j| j.name.clone()).collect();
        let need = |opt: Option<Vec<f64>>, field: &str| -> Result<Vec<f64>> {
            let v = opt.ok_or_else(|| Error::invalid(field, "required for this kind"))?;
            if v.len() != nj {
                return Err(Error::dim(field, nj, v.len()));
            }
            if v.iter().any(|g| *g < 0.0 || !g.is_finite()) {
                return Err(Error::invalid(field, "gains must be non-negative and finite"));
            }
            Ok(v)
        };

        let (kp, kd, muscles) = match doc.kind {
            ActuationKind::Torque => (Vec::new(), Vec::new(), Vec::new()),
            ActuationKind::Velocity => (Vec::new(), need(doc.kd, "kd")?, Vec::new()),
            ActuationKind::Pd => (need(doc.kp, "kp")?, need(doc.kd, "kd")?, Vec::new()),
            ActuationKind::Mtu => {
                if doc.muscles.is_empty() {
                    return Err(Error::invalid("muscles", "mtu actuation needs at least one unit"));
                }
                let mut resolved = Vec::with_capacity(doc.muscles.len());
                for m in &doc.muscles {
                    let field = |f: &str| format!("muscles.{}.{f}", m.name);
                    if !(m.l_opt > 0.0) {
                        return Err(Error::invalid(field("l_opt"), "must be positive"));
                    }
                    if !(m.l_se_rest > 0.0) {
                        return Err(Error::invalid(field("l_se_rest"), "must be positive"));
                    }
                    if !(m.f0 > 0.0) {
                        return Err(Error::invalid(field("f0"), "must be positive"));
                    }
                    if !(0.0..std::f64::consts::FRAC_PI_2).contains(&m.pennation) {
                        return Err(Error::invalid(field("pennation"), "must lie in [0, pi/2)"));
                    }
                    if m.spans.is_empty() {
                        return Err(Error::invalid(field("spans"), "unit spans no joints"));
                    }
                    let mut spans = Vec::with_capacity(m.spans.len());
                    for s in &m.spans {
                        let joint = model.joint_index(&s.joint).ok_or_else(|| {
                            Error::invalid(field("spans"), format!("unknown joint `{}`", s.joint))
                        })?;
                        if s.r0 == 0.0 || !s.r0.is_finite() {
                            return Err(Error::invalid(field("spans.r0"), "must be nonzero"));
                        }
                        spans.push(MtuSpan {
                            joint,
                            r0: s.r0,
                            q_max: s.q_max,
                            q_rest: s.q_rest,
                        });
                    }
                    resolved.push(MtuUnit {
                        name: m.name.clone(),
                        f0: m.f0,
                        l_opt: m.l_opt,
                        l_se_rest: m.l_se_rest,
                        pennation: m.pennation,
                        spans,
                    });
                }
                (Vec::new(), Vec::new(), resolved)
            }
        };

        let bounds: Vec<[f64; 2]> = match doc.kind {
            ActuationKind::Torque => model
                .joints
                .iter()
                .map(|j| [-j.torque_limit, j.torque_limit])
                .collect(),
            ActuationKind::Velocity => {
                let vb = doc
                    .velocity_bound
                    .unwrap_or(NumOrVec::Num(10.0))
                    .broadcast(nj, "velocity_bound")?;
                if vb.iter().any(|v| *v <= 0.0) {
                    return Err(Error::invalid("velocity_bound", "must be positive"));
                }
                vb.iter().map(|v| [-v, *v]).collect()
            }
            ActuationKind::Pd => model.joints.iter().map(|j| j.limits).collect(),
            ActuationKind::Mtu => muscles.iter().map(|_| [0.0, 1.0]).collect(),
        };

        let default_sigma: Vec<f64> = match doc.kind {
            ActuationKind::Torque => model.joints.iter().map(|j| 0.1 * j.torque_limit).collect(),
            ActuationKind::Velocity => vec![1.0; nj],
            ActuationKind::Pd => vec![0.15; nj],
            ActuationKind::Mtu => vec![0.1; muscles.len()],
        };
        let sigma = match doc.sigma {
            Some(s) => {
                let s = s.broadcast(bounds.len(), "sigma")?;
                if s.iter().any(|v| *v <= 0.0 || !v.is_finite()) {
                    return Err(Error::invalid("sigma", "must be positive and finite"));
                }
                s
            }
            None => default_sigma,
        };

        Ok(Actuation {
            kind: doc.kind,
            curves: doc.curves.unwrap_or_default(),
            muscles,
            kp,
            kd,
            bounds,
            sigma,
            joint_names,
            psi_window: 0.5,
            psi_angle_window: 0.5,
        })
    }

    pub fn num_joints(&self) -> usize {
        self.joint_names.len()
    }

    pub fn action_dim(&self) -> usize {
        match self.kind {
            ActuationKind::Mtu => self.muscles.len(),
            _ => self.num_joints(),
        }
    }

    pub fn action_bounds(&self) -> &[[f64; 2]] {
        &self.bounds
    }

    /// Exploration noise scale per action dimension.
    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    /// Number of state features contributed by internal actuator state.
    pub fn extra_state_dims(&self) -> usize {
        match self.kind {
            ActuationKind::Mtu => self.muscles.len(),
            _ => 0,
        }
    }

    /// Initial contractile-element lengths: passive equilibrium at the
    /// given joint pose. Empty for stateless kinds.
    pub fn init_l_ce(&self, q_joints: &[f64]) -> Vec<f64> {
        self.muscles
            .iter()
            .map(|m| m.passive_equilibrium_l_ce(&self.curves, q_joints))
            .collect()
    }

    /// Maps an action to joint torques for one substep. The action is
    /// clamped to the model's bounds before use; `l_ce` is advanced in
    /// place when the kind is MTU.
    pub fn compute_torques(
        &self,
        action: &[f64],
        q_joints: &[f64],
        qd_joints: &[f64],
        l_ce: &mut [f64],
        dt: f64,
    ) -> Result<ActuationOutput> {
        if action.len() != self.action_dim() {
            return Err(Error::dim("action", self.action_dim(), action.len()));
        }
        let nj = self.num_joints();
        let mut torques = vec![0.0; nj];
        let mut mtu_forces = Vec::new();

        match self.kind {
            ActuationKind::Torque => {
                for (i, t) in torques.iter_mut().enumerate() {
                    *t = action[i].clamp(self.bounds[i][0], self.bounds[i][1]);
                }
            }
            ActuationKind::Velocity => {
                for (i, t) in torques.iter_mut().enumerate() {
                    let target = action[i].clamp(self.bounds[i][0], self.bounds[i][1]);
                    *t = self.kd[i] * (target - qd_joints[i]);
                }
            }
            ActuationKind::Pd => {
                for (i, t) in torques.iter_mut().enumerate() {
                    let target = action[i].clamp(self.bounds[i][0], self.bounds[i][1]);
                    *t = self.kp[i] * (target - q_joints[i]) - self.kd[i] * qd_joints[i];
                }
            }
            ActuationKind::Mtu => {
                debug_assert_eq!(l_ce.len(), self.muscles.len());
                mtu_forces.reserve(self.muscles.len());
                for (mi, m) in self.muscles.iter().enumerate() {
                    let a = action[mi].clamp(0.0, 1.0);
                    let step = m.substep(&self.curves, q_joints, l_ce[mi], a, dt);
                    l_ce[mi] = step.l_ce_new;
                    mtu_forces.push(step.f_mtu);
                    // Tension pulls every spanned joint toward a shorter
                    // muscle path: torque opposes the path-length gradient.
                    for s in &m.spans {
                        torques[s.joint] -= step.f_mtu * s.moment_arm(q_joints[s.joint]);
                    }
                    if !step.f_mtu.is_finite() {
                        return Err(Error::Actuation {
                            source_name: m.name.clone(),
                            detail: "non-finite tendon force".to_string(),
                        });
                    }
                }
            }
        }

        for (i, t) in torques.iter().enumerate() {
            if !t.is_finite() {
                return Err(Error::Actuation {
                    source_name: self.joint_names[i].clone(),
                    detail: format!("non-finite torque {t}"),
                });
            }
        }
        Ok(ActuationOutput { torques, mtu_forces })
    }

    /// Flattened actuator parameters. Ordering: PD [kp..., kd...];
    /// Vel [kd...]; MTU per unit [l_opt, l_se_rest, f0] then per span
    /// [r0, q_max, q_rest]; Tor empty.
    pub fn pack_psi(&self) -> Vec<f64> {
        match self.kind {
            ActuationKind::Torque => Vec::new(),
            ActuationKind::Velocity => self.kd.clone(),
            ActuationKind::Pd => self.kp.iter().chain(&self.kd).copied().collect(),
            ActuationKind::Mtu => {
                let mut psi = Vec::with_capacity(self.psi_len());
                for m in &self.muscles {
                    psi.extend([m.l_opt, m.l_se_rest, m.f0]);
                    for s in &m.spans {
                        psi.extend([s.r0, s.q_max, s.q_rest]);
                    }
                }
                psi
            }
        }
    }

    pub fn psi_len(&self) -> usize {
        match self.kind {
            ActuationKind::Torque => 0,
            ActuationKind::Velocity => self.num_joints(),
            ActuationKind::Pd => 2 * self.num_joints(),
            ActuationKind::Mtu => self
                .muscles
                .iter()
                .map(|m| 3 + 3 * m.spans.len())
                .sum(),
        }
    }

    /// Per-entry search bounds around the current parameters. Scale-like
    /// entries (gains, lengths, forces, moment arms) get a multiplicative
    /// window that preserves sign; angular entries get an additive window,
    /// since a relative window collapses for angles near zero.
    pub fn psi_bounds(&self) -> Vec<[f64; 2]> {
        let w = self.psi_window;
        let scale = |v: f64| -> [f64; 2] {
            if v.abs() < 1e-9 {
                [-0.1, 0.1]
            } else {
                let (a, b) = (v * (1.0 - w), v * (1.0 + w));
                [a.min(b), a.max(b)]
            }
        };
        let angle = |v: f64| [v - self.psi_angle_window, v + self.psi_angle_window];
        match self.kind {
            ActuationKind::Torque => Vec::new(),
            ActuationKind::Velocity | ActuationKind::Pd => {
                self.pack_psi().iter().map(|v| scale(*v)).collect()
            }
            ActuationKind::Mtu => {
                let mut out = Vec::with_capacity(self.psi_len());
                for m in &self.muscles {
                    out.extend([scale(m.l_opt), scale(m.l_se_rest), scale(m.f0)]);
                    for s in &m.spans {
                        out.extend([scale(s.r0), angle(s.q_max), angle(s.q_rest)]);
                    }
                }
                out
            }
        }
    }

    /// Serializes back to the on-disk schema, so optimized parameter
    /// sets can be written as ordinary actuation files.
    pub fn to_json_string(&self) -> String {
        let velocity_bound = match self.kind {
            ActuationKind::Velocity => Some(NumOrVec::Vec(
                self.bounds.iter().map(|b| b[1]).collect(),
            )),
            _ => None,
        };
        let muscles = self
            .muscles
            .iter()
            .map(|m| MtuUnitDoc {
                name: m.name.clone(),
                f0: m.f0,
                l_opt: m.l_opt,
                l_se_rest: m.l_se_rest,
                pennation: m.pennation,
                spans: m
                    .spans
                    .iter()
                    .map(|s| MtuSpanDoc {
                        joint: self.joint_names[s.joint].clone(),
                        r0: s.r0,
                        q_max: s.q_max,
                        q_rest: s.q_rest,
                    })
                    .collect(),
            })
            .collect();
        let doc = ActuationDoc {
            kind: self.kind,
            kp: if self.kp.is_empty() { None } else { Some(self.kp.clone()) },
            kd: if self.kd.is_empty() { None } else { Some(self.kd.clone()) },
            velocity_bound,
            sigma: Some(NumOrVec::Vec(self.sigma.clone())),
            muscles,
            curves: Some(self.curves.clone()),
        };
        serde_json::to_string_pretty(&doc).expect("actuation doc is plain data")
    }

    /// Rebuilds the model with parameters from `psi`, clamped to this
    /// model's search bounds.
    pub fn unpack_psi(&self, psi: &[f64]) -> Result<Actuation> {
        if psi.len() != self.psi_len() {
            return Err(Error::dim("psi", self.psi_len(), psi.len()));
        }
        let bounds = self.psi_bounds();
        let clamped: Vec<f64> = psi
            .iter()
            .zip(&bounds)
            .map(|(v, b)| v.clamp(b[0], b[1]))
            .collect();
        let mut out = self.clone();
        match self.kind {
            ActuationKind::Torque => {}
            ActuationKind::Velocity => out.kd.copy_from_slice(&clamped),
            ActuationKind::Pd => {
                let nj = self.num_joints();
                out.kp.copy_from_slice(&clamped[..nj]);
                out.kd.copy_from_slice(&clamped[nj..]);
            }
            ActuationKind::Mtu => {
                let mut it = clamped.iter();
                let mut next = || *it.next().expect("length checked above");
                for m in out.muscles.iter_mut() {
                    m.l_opt = next();
                    m.l_se_rest = next();
                    m.f0 = next();
                    for s in m.spans.iter_mut() {
                        s.r0 = next();
                        s.q_max = next();
                        s.q_rest = next();
                    }
                }
            }
        }
        Ok(out)
    }
}
