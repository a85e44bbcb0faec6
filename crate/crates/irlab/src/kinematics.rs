//! Forward kinematics for serial arms described by Denavit-Hartenberg chains,
//! plus Monte Carlo workspace-volume estimation.

use std::collections::HashSet;
use std::path::Path;

use nalgebra::Matrix4;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::KinematicsError;

/// One link of a serial chain in classic DH convention.
///
/// `theta_offset` is added to the joint variable (or used alone when the
/// joint is not actuated and held at its zero position).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DhLink {
    /// Link length (m).
    pub a: f64,
    /// Link twist (rad).
    pub alpha: f64,
    /// Link offset (m).
    pub d: f64,
    /// Fixed rotation about z added to the joint variable (rad).
    pub theta_offset: f64,
    /// Lower joint limit (rad).
    pub joint_min: f64,
    /// Upper joint limit (rad).
    pub joint_max: f64,
    /// Whether this joint is actuated; non-actuated joints stay at zero.
    pub actuated: bool,
}

impl DhLink {
    pub fn validate(&self) -> Result<(), KinematicsError> {
        let fields = [
            self.a,
            self.alpha,
            self.d,
            self.theta_offset,
            self.joint_min,
            self.joint_max,
        ];
        if fields.iter().any(|v| !v.is_finite()) {
            return Err(KinematicsError::InvalidLink("non-finite field".into()));
        }
        if self.joint_min >= self.joint_max {
            return Err(KinematicsError::InvalidLink(format!(
                "joint_min {} must be < joint_max {}",
                self.joint_min, self.joint_max
            )));
        }
        Ok(())
    }

    /// Homogeneous transform of this link for joint variable `q`
    /// (ignored when the link is not actuated).
    pub fn transform(&self, q: f64) -> Matrix4<f64> {
        let theta = self.theta_offset + if self.actuated { q } else { 0.0 };
        // Classic DH: RotZ(theta) * TransZ(d) * TransX(a) * RotX(alpha),
        // composed from the four elementary transforms.
        let rot_z = Matrix4::new(
            theta.cos(),
            -theta.sin(),
            0.0,
            0.0,
            theta.sin(),
            theta.cos(),
            0.0,
            0.0,
            0.0,
            0.0,
            1.0,
            0.0,
            0.0,
            0.0,
            0.0,
            1.0,
        );
        let trans_z = Matrix4::new_translation(&nalgebra::Vector3::new(0.0, 0.0, self.d));
        let trans_x = Matrix4::new_translation(&nalgebra::Vector3::new(self.a, 0.0, 0.0));
        let rot_x = Matrix4::new(
            1.0,
            0.0,
            0.0,
            0.0,
            0.0,
            self.alpha.cos(),
            -self.alpha.sin(),
            0.0,
            0.0,
            self.alpha.sin(),
            self.alpha.cos(),
            0.0,
            0.0,
            0.0,
            0.0,
            1.0,
        );
        rot_z * trans_z * trans_x * rot_x
    }
}

/// A serial kinematic chain with a declared task-space dimension (2 or 3).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KinematicChain {
    pub name: String,
    pub task_space_dim: usize,
    pub links: Vec<DhLink>,
}

impl KinematicChain {
    pub fn new(
        name: impl Into<String>,
        task_space_dim: usize,
        links: Vec<DhLink>,
    ) -> Result<Self, KinematicsError> {
        let chain = Self {
            name: name.into(),
            task_space_dim,
            links,
        };
        chain.validate()?;
        Ok(chain)
    }

    pub fn validate(&self) -> Result<(), KinematicsError> {
        if self.task_space_dim != 2 && self.task_space_dim != 3 {
            return Err(KinematicsError::InvalidChain(format!(
                "task_space_dim must be 2 or 3, got {}",
                self.task_space_dim
            )));
        }
        for link in &self.links {
            link.validate()?;
        }
        if self.dof() == 0 {
            return Err(KinematicsError::InvalidChain(
                "chain has no actuated link".into(),
            ));
        }
        if self.task_space_dim == 2 {
            self.check_planar()?;
        }
        Ok(())
    }

    /// Number of actuated joints.
    pub fn dof(&self) -> usize {
        self.links.iter().filter(|l| l.actuated).count()
    }

    /// Limits of the actuated joints, in chain order.
    pub fn actuated_limits(&self) -> Vec<(f64, f64)> {
        self.links
            .iter()
            .filter(|l| l.actuated)
            .map(|l| (l.joint_min, l.joint_max))
            .collect()
    }

    /// Widest single actuated joint range (rad).
    pub fn max_joint_range(&self) -> f64 {
        self.actuated_limits()
            .iter()
            .map(|(lo, hi)| hi - lo)
            .fold(0.0, f64::max)
    }

    // A 2-D task space claim is checked by sampling: all reachable points
    // must lie in the z = const plane of the base frame.
    fn check_planar(&self) -> Result<(), KinematicsError> {
        let mut rng = ChaCha8Rng::seed_from_u64(0x9e3779b9);
        let limits = self.actuated_limits();
        let z0 = self.end_effector_transform(&vec![0.0; self.dof()].into())[(2, 3)];
        for _ in 0..256 {
            let q: Vec<f64> = limits
                .iter()
                .map(|&(lo, hi)| rng.gen_range(lo..=hi))
                .collect();
            let t = self.end_effector_transform(&JointConfig::new(q));
            if (t[(2, 3)] - z0).abs() > 1e-9 {
                return Err(KinematicsError::InvalidChain(
                    "task_space_dim = 2 but reachable points leave the base plane".into(),
                ));
            }
        }
        Ok(())
    }

    fn end_effector_transform(&self, q: &JointConfig) -> Matrix4<f64> {
        let mut t = Matrix4::identity();
        let mut qi = q.angles.iter();
        for link in &self.links {
            let joint = if link.actuated {
                *qi.next().expect("joint config shorter than DoF")
            } else {
                0.0
            };
            t *= link.transform(joint);
        }
        t
    }
}

/// A joint configuration of the actuated joints, in chain order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointConfig {
    pub angles: Vec<f64>,
}

impl JointConfig {
    pub fn new(angles: Vec<f64>) -> Self {
        Self { angles }
    }
}

impl From<Vec<f64>> for JointConfig {
    fn from(angles: Vec<f64>) -> Self {
        Self { angles }
    }
}

/// An end-effector position; length equals the chain's task-space dimension.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CartesianPoint {
    pub coordinates: Vec<f64>,
}

impl CartesianPoint {
    pub fn new(coordinates: Vec<f64>) -> Self {
        Self { coordinates }
    }

    pub fn distance(&self, other: &CartesianPoint) -> f64 {
        self.coordinates
            .iter()
            .zip(&other.coordinates)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// End-effector position for joint configuration `q`.
///
/// Joint-limit violations are an error here; clamping out-of-range commands
/// is the environment's job.
pub fn forward_kinematics(
    chain: &KinematicChain,
    q: &JointConfig,
) -> Result<CartesianPoint, KinematicsError> {
    let dof = chain.dof();
    if q.angles.len() != dof {
        return Err(KinematicsError::DimensionMismatch {
            expected: dof,
            got: q.angles.len(),
        });
    }
    for (i, (&angle, &(lo, hi))) in q
        .angles
        .iter()
        .zip(chain.actuated_limits().iter())
        .enumerate()
    {
        if angle < lo || angle > hi {
            return Err(KinematicsError::JointLimit {
                joint: i,
                value: angle,
                min: lo,
                max: hi,
            });
        }
    }
    let t = chain.end_effector_transform(q);
    let coords = (0..chain.task_space_dim).map(|i| t[(i, 3)]).collect();
    Ok(CartesianPoint::new(coords))
}

/// Sample a joint configuration uniformly within the chain's limits.
pub fn sample_joint_config(chain: &KinematicChain, rng: &mut impl Rng) -> JointConfig {
    let angles = chain
        .actuated_limits()
        .iter()
        .map(|&(lo, hi)| rng.gen_range(lo..=hi))
        .collect();
    JointConfig::new(angles)
}

/// Monte Carlo workspace area/volume estimate via grid occupancy.
///
/// Joint configurations are sampled uniformly, mapped through FK, and binned
/// on a uniform grid with edge `cell_size`; the estimate is the occupied-cell
/// count times the cell area/volume. `cell_size` should match the resolution
/// the estimate feeds (the goal-zone radius for episode budgets).
pub fn estimate_workspace_volume(
    chain: &KinematicChain,
    cell_size: f64,
    n_samples: usize,
    rng_seed: u64,
) -> Result<f64, KinematicsError> {
    if n_samples < 10_000 {
        return Err(KinematicsError::InvalidChain(format!(
            "workspace estimation needs >= 10^4 samples, got {n_samples}"
        )));
    }
    if !(cell_size > 0.0) {
        return Err(KinematicsError::InvalidChain(
            "cell_size must be positive".into(),
        ));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut occupied: HashSet<Vec<i64>> = HashSet::new();
    for _ in 0..n_samples {
        let q = sample_joint_config(chain, &mut rng);
        let p = forward_kinematics(chain, &q)?;
        let cell: Vec<i64> = p
            .coordinates
            .iter()
            .map(|&c| (c / cell_size).floor() as i64)
            .collect();
        occupied.insert(cell);
    }
    Ok(occupied.len() as f64 * cell_size.powi(chain.task_space_dim as i32))
}

/// Chain definition file: TOML with `name`, `task_space_dim` and a `[[links]]`
/// table per link. Angles in radians, lengths in meters.
pub fn load_chain(path: impl AsRef<Path>) -> Result<KinematicChain, KinematicsError> {
    let text = std::fs::read_to_string(path.as_ref())
        .map_err(|e| KinematicsError::Io(format!("{}: {e}", path.as_ref().display())))?;
    parse_chain(&text)
}

pub fn parse_chain(text: &str) -> Result<KinematicChain, KinematicsError> {
    let chain: KinematicChain =
        toml::from_str(text).map_err(|e| KinematicsError::Parse(e.to_string()))?;
    chain.validate()?;
    Ok(chain)
}

pub fn save_chain(chain: &KinematicChain, path: impl AsRef<Path>) -> Result<(), KinematicsError> {
    let text = toml::to_string_pretty(chain).map_err(|e| KinematicsError::Parse(e.to_string()))?;
    std::fs::write(path.as_ref(), text)
        .map_err(|e| KinematicsError::Io(format!("{}: {e}", path.as_ref().display())))
}

/// Planar test chain with unit links and the given symmetric joint range.
pub fn planar_chain(name: &str, link_lengths: &[f64], half_range: f64) -> KinematicChain {
    let links = link_lengths
        .iter()
        .map(|&a| DhLink {
            a,
            alpha: 0.0,
            d: 0.0,
            theta_offset: 0.0,
            joint_min: -half_range,
            joint_max: half_range,
            actuated: true,
        })
        .collect();
    KinematicChain::new(name, 2, links).expect("planar test chain is valid")
}
