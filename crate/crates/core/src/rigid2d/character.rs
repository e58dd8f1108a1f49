//! Character description: a tree of links connected by revolute joints.
//!
//! Characters are loaded from JSON documents shaped like:
//!
//! ```json
//! {
//!   "links": [{"name": "torso", "length": 0.7, "mass": 30.0,
//!              "com_offset": [0.35, 0.0], "inertia": 1.25}],
//!   "joints": [{"name": "hip_l", "parent": "torso", "child": "thigh_l",
//!               "parent_anchor": [0.0, 0.0], "child_anchor": [0.0, 0.0],
//!               "rest_angle": -3.1416, "limits": [-1.5, 1.5],
//!               "torque_limit": 120.0}],
//!   "trunk": ["torso"],
//!   "end_effectors": ["foot_l", "foot_r"],
//!   "contact_points": [{"link": "foot_l", "offset": [-0.07, -0.05]}]
//! }
//! ```
//!
//! The root link is the unique link that is never a joint's child. Joint
//! angles are deviations from `rest_angle`, so a sensible rest pose has
//! q = 0 for every joint.

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Link {
    pub name: String,
    /// Geometric extent along the link frame's +x axis, metres.
    pub length: f64,
    pub mass: f64,
    /// Centre of mass in the link frame, metres.
    pub com_offset: [f64; 2],
    /// Rotational inertia about the COM, kg m^2.
    pub inertia: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Joint {
    pub name: String,
    pub parent: String,
    pub child: String,
    pub parent_anchor: [f64; 2],
    pub child_anchor: [f64; 2],
    /// Child orientation relative to parent at q = 0, radians.
    #[serde(default)]
    pub rest_angle: f64,
    /// Allowed joint angle range [lo, hi], radians.
    pub limits: [f64; 2],
    /// Maximum actuation torque magnitude, N m.
    pub torque_limit: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ContactPoint {
    pub link: String,
    pub offset: [f64; 2],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CharacterDoc {
    #[serde(default)]
    name: String,
    links: Vec<Link>,
    joints: Vec<Joint>,
    trunk: Vec<String>,
    #[serde(default)]
    end_effectors: Vec<String>,
    #[serde(default)]
    contact_points: Vec<ContactPoint>,
    /// Pin the root link to the world (test fixtures such as pendulums).
    #[serde(default)]
    fixed_root: bool,
}

/// Resolved contact point: link index plus link-frame offset.
#[derive(Debug, Clone, Copy)]
pub struct ResolvedContact {
    pub link: usize,
    pub offset: Vector2<f64>,
}

/// A validated kinematic tree. Link 0 is not necessarily the root; use
/// [`CharacterModel::root`]. Joints are stored in topological order
/// (parents before children), which the dynamics relies on.
#[derive(Debug, Clone)]
pub struct CharacterModel {
    pub name: String,
    pub links: Vec<Link>,
    pub joints: Vec<JointResolved>,
    root: usize,
    /// Links whose ground contact counts as a trunk fall.
    pub trunk: Vec<usize>,
    pub end_effectors: Vec<usize>,
    pub contact_points: Vec<ResolvedContact>,
    pub fixed_root: bool,
    /// For every link, the joints on the path root -> link, in order.
    path_joints: Vec<Vec<usize>>,
}

#[derive(Debug, Clone)]
pub struct JointResolved {
    pub name: String,
    pub parent: usize,
    pub child: usize,
    pub parent_anchor: Vector2<f64>,
    pub child_anchor: Vector2<f64>,
    pub rest_angle: f64,
    pub limits: [f64; 2],
    pub torque_limit: f64,
}

impl CharacterModel {
    pub fn from_json_str(text: &str, path: &str) -> Result<Self> {
        let doc: CharacterDoc = serde_json::from_str(text).map_err(|e| Error::Parse {
            path: path.to_string(),
            detail: e.to_string(),
        })?;
        Self::from_doc(doc)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::Parse {
            path: path.display().to_string(),
            detail: e.to_string(),
        })?;
        Self::from_json_str(&text, &path.display().to_string())
    }

    fn from_doc(doc: CharacterDoc) -> Result<Self> {
        if doc.links.is_empty() {
            return Err(Error::invalid("links", "character has no links"));
        }
        let find_link = |name: &str, field: &str| -> Result<usize> {
            doc.links
                .iter()
                .position(|l| l.name == name)
                .ok_or_else(|| Error::invalid(field, format!("unknown link `{name}`")))
        };

        for link in &doc.links {
            if !(link.mass > 0.0) || !link.mass.is_finite() {
                return Err(Error::invalid(
                    format!("links.{}.mass", link.name),
                    "must be strictly positive and finite",
                ));
            }
            if !(link.inertia > 0.0) || !link.inertia.is_finite() {
                return Err(Error::invalid(
                    format!("links.{}.inertia", link.name),
                    "must be strictly positive and finite",
                ));
            }
        }

        let mut joints = Vec::with_capacity(doc.joints.len());
        for j in &doc.joints {
            if !(j.limits[0] < j.limits[1]) {
                return Err(Error::invalid(
                    format!("joints.{}.limits", j.name),
                    "lower limit must be below upper limit",
                ));
            }
            if !(j.torque_limit > 0.0) || !j.torque_limit.is_finite() {
                return Err(Error::invalid(
                    format!("joints.{}.torque_limit", j.name),
                    "must be positive and finite",
                ));
            }
            joints.push(JointResolved {
                name: j.name.clone(),
                parent: find_link(&j.parent, &format!("joints.{}.parent", j.name))?,
                child: find_link(&j.child, &format!("joints.{}.child", j.name))?,
                parent_anchor: Vector2::new(j.parent_anchor[0], j.parent_anchor[1]),
                child_anchor: Vector2::new(j.child_anchor[0], j.child_anchor[1]),
                rest_angle: j.rest_angle,
                limits: j.limits,
                torque_limit: j.torque_limit,
            });
        }

        // Tree check: every link except the root is the child of exactly one
        // joint, and walking parents from any link terminates at the root.
        let n = doc.links.len();
        let mut parent_joint = vec![usize::MAX; n];
        for (ji, j) in joints.iter().enumerate() {
            if j.child == j.parent {
                return Err(Error::invalid(
                    format!("joints.{}", j.name),
                    "parent and child are the same link",
                ));
            }
            if parent_joint[j.child] != usize::MAX {
                return Err(Error::invalid(
                    format!("joints.{}", j.name),
                    format!("link `{}` has two parents", doc.links[j.child].name),
                ));
            }
            parent_joint[j.child] = ji;
        }
        let roots: Vec<usize> = (0..n).filter(|&i| parent_joint[i] == usize::MAX).collect();
        if roots.len() != 1 {
            return Err(Error::invalid(
                "links",
                format!(
                    "link graph is not a tree rooted at a single link ({} roots)",
                    roots.len()
                ),
            ));
        }
        let root = roots[0];

        // Path to root for every link; a cycle shows up as a path longer
        // than the joint count.
        let mut path_joints = vec![Vec::new(); n];
        for i in 0..n {
            let mut path = Vec::new();
            let mut cur = i;
            while cur != root {
                let ji = parent_joint[cur];
                if path.len() > joints.len() {
                    return Err(Error::invalid("joints", "cycle in the link graph"));
                }
                path.push(ji);
                cur = joints[ji].parent;
            }
            path.reverse();
            path_joints[i] = path;
        }

        // Topological order: joints sorted by path depth of their child.
        let mut order: Vec<usize> = (0..joints.len()).collect();
        order.sort_by_key(|&ji| path_joints[joints[ji].child].len());
        let remap: Vec<usize> = {
            let mut inv = vec![0; order.len()];
            for (new, &old) in order.iter().enumerate() {
                inv[old] = new;
            }
            inv
        };
        let joints: Vec<JointResolved> = order.iter().map(|&ji| joints[ji].clone()).collect();
        for path in path_joints.iter_mut() {
            for j in path.iter_mut() {
                *j = remap[*j];
            }
        }

        let trunk = doc
            .trunk
            .iter()
            .map(|name| find_link(name, "trunk"))
            .collect::<Result<Vec<_>>>()?;
        let end_effectors = doc
            .end_effectors
            .iter()
            .map(|name| find_link(name, "end_effectors"))
            .collect::<Result<Vec<_>>>()?;
        let contact_points = doc
            .contact_points
            .iter()
            .map(|cp| {
                Ok(ResolvedContact {
                    link: find_link(&cp.link, "contact_points.link")?,
                    offset: Vector2::new(cp.offset[0], cp.offset[1]),
                })
            })
            .collect::<Result<Vec<_>>>()?;

        Ok(CharacterModel {
            name: doc.name,
            links: doc.links,
            joints,
            root,
            trunk,
            end_effectors,
            contact_points,
            fixed_root: doc.fixed_root,
            path_joints,
        })
    }

    pub fn root(&self) -> usize {
        self.root
    }

    pub fn num_links(&self) -> usize {
        self.links.len()
    }

    pub fn num_joints(&self) -> usize {
        self.joints.len()
    }

    /// Generalized-coordinate dimension: root (x, y, angle) plus one angle
    /// per joint.
    pub fn dof(&self) -> usize {
        3 + self.joints.len()
    }

    /// Joints on the path from the root to `link`, in root-first order.
    pub fn path_joints(&self, link: usize) -> &[usize] {
        &self.path_joints[link]
    }

    pub fn link_index(&self, name: &str) -> Option<usize> {
        self.links.iter().position(|l| l.name == name)
    }

    pub fn joint_index(&self, name: &str) -> Option<usize> {
        self.joints.iter().position(|j| j.name == name)
    }

    pub fn total_mass(&self) -> f64 {
        self.links.iter().map(|l| l.mass).sum()
    }

    pub fn is_trunk(&self, link: usize) -> bool {
        self.trunk.contains(&link)
    }

    /// Clamps per-joint torques to the model's limits.
    pub fn clamp_torques(&self, torques: &mut [f64]) {
        for (t, j) in torques.iter_mut().zip(&self.joints) {
            *t = t.clamp(-j.torque_limit, j.torque_limit);
        }
    }
}

pub fn load_character(path: impl AsRef<Path>) -> Result<CharacterModel> {
    CharacterModel::load(path)
}
