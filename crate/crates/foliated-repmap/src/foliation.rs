//! Configurations, foliations, leaves and intersections.
//!
//! A foliation is a family of non-intersecting manifolds (leaves) carved out
//! of the ambient space by a single constraint family: leaf `(i, theta)` is
//! the set of configurations whose constraint residual for co-parameter
//! `theta` vanishes. Switching between leaves of different foliations is only
//! possible at declared intersection witnesses.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A point in the ambient configuration space.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Configuration(pub Vec<f64>);

impl Configuration {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidConfiguration(
                "non-finite coordinate".to_string(),
            ));
        }
        Ok(Configuration(coords))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn distance(&self, other: &Configuration) -> f64 {
        self.0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

impl From<Vec<f64>> for Configuration {
    fn from(coords: Vec<f64>) -> Self {
        Configuration(coords)
    }
}

/// Identifies one leaf: a foliation index plus an index into that
/// foliation's co-parameter list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct LeafId {
    pub foliation: usize,
    pub co_param: usize,
}

impl LeafId {
    pub fn new(foliation: usize, co_param: usize) -> Self {
        LeafId {
            foliation,
            co_param,
        }
    }
}

impl std::fmt::Display for LeafId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({},{})", self.foliation, self.co_param)
    }
}

/// Continuous parameter selecting one leaf of a foliation, e.g. a grasp or
/// placement pose. Extra components beyond what the constraint consumes are
/// free payload (object offsets, parked positions) and still contribute to
/// the similarity metric.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CoParameter {
    pub label: String,
    pub value: Vec<f64>,
}

impl CoParameter {
    pub fn new(label: impl Into<String>, value: Vec<f64>) -> Self {
        CoParameter {
            label: label.into(),
            value,
        }
    }

    pub fn distance(&self, other: &CoParameter) -> f64 {
        self.value
            .iter()
            .zip(&other.value)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Analytic constraint family. The residual of `(q, theta)` is zero exactly
/// when `q` lies on leaf `theta`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ConstraintKind {
    /// No constraint: every configuration lies on the (single) leaf.
    Free,
    /// Pins coordinate `axis` to `theta.value[0]`. Leaves are parallel
    /// hyperplanes orthogonal to `axis`.
    AxisOffset { axis: usize },
    /// Pins the distance from `center` to `theta.value[0]`. Leaves are
    /// concentric spheres.
    SphereRadius { center: Vec<f64> },
}

impl ConstraintKind {
    /// Raw residual vector (empty for `Free`).
    pub fn residual(&self, q: &Configuration, theta: &CoParameter) -> Vec<f64> {
        match self {
            ConstraintKind::Free => Vec::new(),
            ConstraintKind::AxisOffset { axis } => vec![q.0[*axis] - theta.value[0]],
            ConstraintKind::SphereRadius { center } => {
                let d = q
                    .0
                    .iter()
                    .zip(center)
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
                vec![d - theta.value[0]]
            }
        }
    }

    /// Gradient of the (single) residual component, or `None` when the
    /// residual is empty or the gradient is singular at `q`.
    fn residual_gradient(&self, q: &Configuration) -> Option<Vec<f64>> {
        match self {
            ConstraintKind::Free => None,
            ConstraintKind::AxisOffset { axis } => {
                let mut g = vec![0.0; q.dim()];
                g[*axis] = 1.0;
                Some(g)
            }
            ConstraintKind::SphereRadius { center } => {
                let diff: Vec<f64> = q.0.iter().zip(center).map(|(a, b)| a - b).collect();
                let norm = diff.iter().map(|d| d * d).sum::<f64>().sqrt();
                if norm < 1e-12 {
                    return None;
                }
                Some(diff.into_iter().map(|d| d / norm).collect())
            }
        }
    }

    fn validate(&self, dim: usize, theta: &CoParameter) -> Result<()> {
        match self {
            ConstraintKind::Free => Ok(()),
            ConstraintKind::AxisOffset { axis } => {
                if *axis >= dim {
                    return Err(Error::InvalidProblem(format!(
                        "axis {} out of range for dimension {}",
                        axis, dim
                    )));
                }
                if theta.value.is_empty() {
                    return Err(Error::InvalidProblem(format!(
                        "co-parameter '{}' has empty value",
                        theta.label
                    )));
                }
                Ok(())
            }
            ConstraintKind::SphereRadius { center } => {
                if center.len() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: center.len(),
                    });
                }
                if theta.value.is_empty() {
                    return Err(Error::InvalidProblem(format!(
                        "co-parameter '{}' has empty value",
                        theta.label
                    )));
                }
                Ok(())
            }
        }
    }
}

/// Where the manipulated object sits as a function of `(q, theta)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObjectPoseRule {
    /// No object is carried or parked on this foliation's leaves.
    None,
    /// Carried object: center = q + theta.value[offset_start..offset_start+dim].
    Attached { offset_start: usize },
    /// Parked object: center = theta.value[position_start..position_start+dim].
    Parked { position_start: usize },
}

impl ObjectPoseRule {
    /// Center of the object footprint, or `None` when no object is present.
    pub fn object_center(&self, q: &Configuration, theta: &CoParameter) -> Option<Vec<f64>> {
        match self {
            ObjectPoseRule::None => None,
            ObjectPoseRule::Attached { offset_start } => Some(
                q.0.iter()
                    .enumerate()
                    .map(|(d, c)| c + theta.value[offset_start + d])
                    .collect(),
            ),
            ObjectPoseRule::Parked { position_start } => {
                Some(theta.value[*position_start..position_start + q.dim()].to_vec())
            }
        }
    }

    fn validate(&self, dim: usize, theta: &CoParameter) -> Result<()> {
        let need = match self {
            ObjectPoseRule::None => return Ok(()),
            ObjectPoseRule::Attached { offset_start } => offset_start + dim,
            ObjectPoseRule::Parked { position_start } => position_start + dim,
        };
        if theta.value.len() < need {
            return Err(Error::InvalidProblem(format!(
                "co-parameter '{}' too short for object pose rule (need {} components)",
                theta.label, need
            )));
        }
        Ok(())
    }
}

/// A constraint family with its finite co-parameter list and similarity
/// bandwidth.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Foliation {
    pub id: usize,
    pub name: String,
    pub constraint: ConstraintKind,
    pub co_params: Vec<CoParameter>,
    /// Constraint tolerance: `q` lies on a leaf iff the residual inf-norm is
    /// at most `epsilon`.
    pub epsilon: f64,
    /// Bandwidth of the squared-exponential similarity kernel. If absent it
    /// defaults to the median pairwise co-parameter distance.
    #[serde(default)]
    pub sigma_sim: Option<f64>,
    #[serde(default = "default_object_pose")]
    pub object_pose: ObjectPoseRule,
}

fn default_object_pose() -> ObjectPoseRule {
    ObjectPoseRule::None
}

pub const DEFAULT_EPSILON: f64 = 1e-6;
pub const DEFAULT_PROJECTION_ITERS: usize = 50;

/// Step-norm clip for the damped Newton projection.
const PROJECTION_STEP_CLIP: f64 = 2.0;

impl Foliation {
    /// Effective kernel bandwidth: the declared one, else the median pairwise
    /// co-parameter distance (1.0 for singleton foliations).
    pub fn effective_sigma(&self) -> f64 {
        if let Some(s) = self.sigma_sim {
            return s;
        }
        let mut dists = Vec::new();
        for a in 0..self.co_params.len() {
            for b in (a + 1)..self.co_params.len() {
                dists.push(self.co_params[a].distance(&self.co_params[b]));
            }
        }
        if dists.is_empty() {
            return 1.0;
        }
        dists.sort_by(|a, b| a.partial_cmp(b).unwrap());
        dists[dists.len() / 2]
    }

    /// Squared-exponential similarity between two of this foliation's
    /// co-parameters, in [0, 1] with unit diagonal.
    pub fn similarity(&self, a: usize, b: usize) -> f64 {
        if a == b {
            return 1.0;
        }
        let d = self.co_params[a].distance(&self.co_params[b]);
        let sigma = self.effective_sigma();
        (-d * d / (sigma * sigma)).exp().clamp(0.0, 1.0)
    }

    fn validate(&self, dim: usize) -> Result<()> {
        if self.co_params.is_empty() {
            return Err(Error::InvalidProblem(format!(
                "foliation '{}' has no co-parameters",
                self.name
            )));
        }
        if self.epsilon <= 0.0 {
            return Err(Error::InvalidProblem(format!(
                "foliation '{}' has non-positive epsilon",
                self.name
            )));
        }
        if let Some(s) = self.sigma_sim {
            if s <= 0.0 {
                return Err(Error::InvalidProblem(format!(
                    "foliation '{}' has non-positive sigma_sim",
                    self.name
                )));
            }
        }
        let len0 = self.co_params[0].value.len();
        for theta in &self.co_params {
            if theta.value.len() != len0 {
                return Err(Error::InvalidProblem(format!(
                    "foliation '{}': co-parameter value lengths differ",
                    self.name
                )));
            }
            if theta.value.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidProblem(format!(
                    "co-parameter '{}' has non-finite entries",
                    theta.label
                )));
            }
            self.constraint.validate(dim, theta)?;
            self.object_pose.validate(dim, theta)?;
        }
        // Distinct co-parameters keep leaves of one foliation disjoint.
        for a in 0..self.co_params.len() {
            for b in (a + 1)..self.co_params.len() {
                if self.co_params[a].value == self.co_params[b].value {
                    return Err(Error::InvalidProblem(format!(
                        "foliation '{}': duplicate co-parameters '{}' and '{}'",
                        self.name, self.co_params[a].label, self.co_params[b].label
                    )));
                }
            }
        }
        Ok(())
    }
}

/// A configuration lying on two leaves from different foliations: the only
/// gateway for switching leaves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntersectionWitness {
    pub leaf_a: LeafId,
    pub leaf_b: LeafId,
    pub config: Configuration,
}

/// The problem's foliations, with precomputed similarity tables.
#[derive(Debug, Clone)]
pub struct FoliationSet {
    foliations: Vec<Foliation>,
    dimension: usize,
    similarity: Vec<Vec<f64>>,
}

impl FoliationSet {
    /// Builds the set and precomputes similarity tables. `dimension` is the
    /// ambient dimension the constraints must be consistent with.
    pub fn new(foliations: Vec<Foliation>, dimension: usize) -> Result<Self> {
        for (idx, f) in foliations.iter().enumerate() {
            if f.id != idx {
                return Err(Error::InvalidProblem(format!(
                    "foliation '{}' has id {} but sits at index {}",
                    f.name, f.id, idx
                )));
            }
            f.validate(dimension)?;
        }
        let similarity = foliations
            .iter()
            .map(|f| {
                let n = f.co_params.len();
                let mut table = vec![0.0; n * n];
                for a in 0..n {
                    for b in 0..n {
                        table[a * n + b] = f.similarity(a, b);
                    }
                }
                table
            })
            .collect();
        Ok(FoliationSet {
            foliations,
            dimension,
            similarity,
        })
    }

    /// The foliation list in declaration order, e.g. for serialization.
    pub fn to_vec(&self) -> Vec<Foliation> {
        self.foliations.clone()
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.foliations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.foliations.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Foliation> {
        self.foliations.iter()
    }

    pub fn foliation(&self, id: usize) -> Result<&Foliation> {
        self.foliations
            .get(id)
            .ok_or_else(|| Error::InvalidProblem(format!("unknown foliation {}", id)))
    }

    pub fn co_param(&self, leaf: LeafId) -> Result<&CoParameter> {
        let f = self.foliation(leaf.foliation)?;
        f.co_params
            .get(leaf.co_param)
            .ok_or_else(|| Error::InvalidProblem(format!("unknown leaf {}", leaf)))
    }

    pub fn contains_leaf(&self, leaf: LeafId) -> bool {
        self.co_param(leaf).is_ok()
    }

    /// Precomputed similarity between co-parameters `a` and `b` of one
    /// foliation.
    pub fn similarity(&self, foliation: usize, a: usize, b: usize) -> f64 {
        let n = self.foliations[foliation].co_params.len();
        self.similarity[foliation][a * n + b]
    }

    /// Inf-norm of the constraint residual of `q` on `leaf`.
    pub fn evaluate_constraint(&self, q: &Configuration, leaf: LeafId) -> Result<f64> {
        if q.dim() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                got: q.dim(),
            });
        }
        let f = self.foliation(leaf.foliation)?;
        let theta = self.co_param(leaf)?;
        Ok(f.constraint
            .residual(q, theta)
            .iter()
            .fold(0.0, |acc, r| acc.max(r.abs())))
    }

    /// True when `q` lies on `leaf` within the foliation's tolerance.
    pub fn on_leaf(&self, q: &Configuration, leaf: LeafId) -> Result<bool> {
        let res = self.evaluate_constraint(q, leaf)?;
        Ok(res <= self.foliation(leaf.foliation)?.epsilon)
    }

    /// Damped Newton projection of `q` onto `leaf`. Fails when the residual
    /// has not converged within `max_iters` sweeps.
    pub fn project_to_manifold(
        &self,
        q: &Configuration,
        leaf: LeafId,
        max_iters: usize,
    ) -> Result<Configuration> {
        if q.dim() != self.dimension {
            return Err(Error::DimensionMismatch {
                expected: self.dimension,
                got: q.dim(),
            });
        }
        let f = self.foliation(leaf.foliation)?;
        let theta = self.co_param(leaf)?;
        let eps = f.epsilon;
        let mut cur = q.clone();
        for _ in 0..max_iters.max(1) {
            let residual = f.constraint.residual(&cur, theta);
            let norm = residual.iter().fold(0.0f64, |acc, r| acc.max(r.abs()));
            if norm <= eps {
                return Ok(cur);
            }
            let grad = f.constraint.residual_gradient(&cur).ok_or_else(|| {
                Error::InvalidConfiguration("projection gradient singular".to_string())
            })?;
            let g2: f64 = grad.iter().map(|g| g * g).sum();
            if g2 < 1e-18 {
                return Err(Error::InvalidConfiguration(
                    "projection gradient vanished".to_string(),
                ));
            }
            // Newton step for a single residual component, with step clipping.
            let mut step: Vec<f64> = grad.iter().map(|g| -residual[0] * g / g2).collect();
            let step_norm = step.iter().map(|s| s * s).sum::<f64>().sqrt();
            if step_norm > PROJECTION_STEP_CLIP {
                for s in &mut step {
                    *s *= PROJECTION_STEP_CLIP / step_norm;
                }
            }
            for (c, s) in cur.0.iter_mut().zip(&step) {
                *c += s;
            }
        }
        let final_norm = f
            .constraint
            .residual(&cur, theta)
            .iter()
            .fold(0.0f64, |acc, r| acc.max(r.abs()));
        if final_norm <= eps {
            Ok(cur)
        } else {
            Err(Error::InvalidConfiguration(format!(
                "projection onto leaf {} did not converge (residual {:.3e})",
                leaf, final_norm
            )))
        }
    }

    /// Checks witness invariants: distinct foliations and on-leaf residuals.
    pub fn validate_witness(&self, w: &IntersectionWitness) -> Result<()> {
        if w.leaf_a.foliation == w.leaf_b.foliation {
            return Err(Error::InvalidProblem(format!(
                "witness connects leaves {} and {} of the same foliation",
                w.leaf_a, w.leaf_b
            )));
        }
        for leaf in [w.leaf_a, w.leaf_b] {
            let res = self.evaluate_constraint(&w.config, leaf)?;
            let eps = self.foliation(leaf.foliation)?.epsilon;
            if res > eps {
                return Err(Error::InvalidProblem(format!(
                    "witness config violates leaf {} (residual {:.3e} > {:.1e})",
                    leaf, res, eps
                )));
            }
        }
        Ok(())
    }
}
