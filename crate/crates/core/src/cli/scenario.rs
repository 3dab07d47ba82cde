use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{read_trajectory_controls, CliError};
use crate::costgen::{compile_with, CompileOptions, RunningCostTable};
use crate::ddp::{BaselineConfig, SolverConfig};
use crate::dynamics::{double_integrator, gravity_torque, single_integrator, DynamicsModel, PlanarArm, PlanarArmParams, ARM_LINKS};
use crate::smoothing::SmoothParams;
use crate::stl::{parse_spec, Predicate, PredicateKind, PredicateTable, Specification, DEFAULT_BALL_EPSILON};

const BUNDLED: &[(&str, &str)] = &[
    ("reach_avoid", include_str!("../../scenarios/reach_avoid.json")),
    ("either_or", include_str!("../../scenarios/either_or.json")),
    ("arm_reach_left", include_str!("../../scenarios/arm_reach_left.json")),
    ("arm_reach_right", include_str!("../../scenarios/arm_reach_right.json")),
];

/// Names of the scenarios compiled into the binary.
pub fn bundled_names() -> impl Iterator<Item = &'static str> {
    BUNDLED.iter().map(|(n, _)| *n)
}

pub fn bundled_scenario(name: &str) -> Option<Scenario> {
    let (_, text) = BUNDLED.iter().find(|(n, _)| *n == name)?;
    Some(Scenario::from_json(text, None).expect("bundled scenarios are valid"))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    SingleIntegrator {
        dt: f64,
    },
    DoubleIntegrator {
        dt: f64,
        axes: usize,
    },
    /// Defaults to uniform rods of lengths 0.5, 0.4, 0.3 m and masses 1.0, 0.8, 0.5 kg.
    PlanarArm {
        dt: f64,
        #[serde(default)]
        params: Option<PlanarArmParams>,
    },
}

impl ModelSpec {
    pub fn arm_params(&self) -> Option<PlanarArmParams> {
        match self {
            ModelSpec::PlanarArm { params, .. } => Some(params.clone().unwrap_or_else(default_arm)),
            _ => None,
        }
    }

    pub fn build(&self) -> Result<Box<dyn DynamicsModel>, CliError> {
        Ok(match self {
            ModelSpec::SingleIntegrator { dt } => Box::new(single_integrator(*dt)?),
            ModelSpec::DoubleIntegrator { dt, axes } => Box::new(double_integrator(*dt, *axes)?),
            ModelSpec::PlanarArm { dt, .. } => Box::new(PlanarArm::new(self.arm_params().expect("arm model"), *dt)?),
        })
    }
}

fn default_arm() -> PlanarArmParams {
    PlanarArmParams::uniform_rods([0.5, 0.4, 0.3], [1.0, 0.8, 0.5])
}

fn default_epsilon() -> f64 {
    DEFAULT_BALL_EPSILON
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PredicateSpec {
    Affine {
        name: String,
        coeffs: Vec<f64>,
        offset: f64,
    },
    Ball {
        name: String,
        center: Vec<f64>,
        radius: f64,
        #[serde(default = "default_epsilon")]
        epsilon: f64,
    },
    Box {
        name: String,
        lower: Vec<f64>,
        upper: Vec<f64>,
    },
    /// Ball in joint space around the inverse-kinematics solution for an
    /// end-effector target. Planar arm only.
    IkBall {
        name: String,
        target: [f64; 2],
        #[serde(default)]
        seed: Option<[f64; ARM_LINKS]>,
        radius: f64,
        #[serde(default = "default_epsilon")]
        epsilon: f64,
    },
}

impl PredicateSpec {
    pub fn name(&self) -> &str {
        match self {
            PredicateSpec::Affine { name, .. } | PredicateSpec::Ball { name, .. } | PredicateSpec::Box { name, .. } | PredicateSpec::IkBall { name, .. } => {
                name
            }
        }
    }

    pub fn resolve(&self, arm: Option<&PlanarArmParams>) -> Result<Predicate, CliError> {
        Ok(match self {
            PredicateSpec::Affine { name, coeffs, offset } => Predicate::affine(name.clone(), coeffs.clone(), *offset)?,
            PredicateSpec::Ball { name, center, radius, epsilon } => Predicate::ball(name.clone(), center.clone(), *radius, *epsilon)?,
            PredicateSpec::Box { name, lower, upper } => Predicate::boxed(name.clone(), lower, upper)?,
            PredicateSpec::IkBall { name, target, seed, radius, epsilon } => {
                let arm = arm.ok_or_else(|| CliError::config(format!("predicates.{name}"), "ik_ball predicates need a planar_arm model"))?;
                let q = arm.inverse_kinematics(*target, seed.unwrap_or([0.5, 0.5, 0.3]))?;
                Predicate::ball(name.clone(), q.to_vec(), *radius, *epsilon)?
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitPolicy {
    /// Every control component drawn independently from `Uniform[lo, hi]`.
    RandomUniform {
        #[serde(default = "neg_one")]
        lo: f64,
        #[serde(default = "one")]
        hi: f64,
        #[serde(default)]
        seed: u64,
    },
    /// Constant torque holding the initial configuration. Planar arm only.
    GravityCompensation,
    Zeros,
    /// Controls read from the `u_*` columns of a trajectory CSV, resolved
    /// relative to the scenario file.
    File {
        path: PathBuf,
    },
}

fn neg_one() -> f64 {
    -1.0
}

fn one() -> f64 {
    1.0
}

impl InitPolicy {
    pub fn is_random(&self) -> bool {
        matches!(self, InitPolicy::RandomUniform { .. })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RetryPolicy {
    /// Additional attempts after the first.
    pub budget: usize,
    /// Factor applied to `k1` and `k2` on each sharpening retry.
    pub k_escalation: f64,
    /// Alternate sharpening retries with fresh random initializations
    /// (random initialization policies only).
    pub fresh_init: bool,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        RetryPolicy { budget: 3, k_escalation: 10.0, fresh_init: true }
    }
}

/// A complete synthesis problem as stored in a scenario file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: Option<String>,
    pub model: ModelSpec,
    pub predicates: Vec<PredicateSpec>,
    pub specification: String,
    pub horizon: usize,
    pub x0: Vec<f64>,
    #[serde(default)]
    pub smoothing: SmoothParams,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub baseline: BaselineConfig,
    pub init: InitPolicy,
    #[serde(default)]
    pub retry: RetryPolicy,
    /// Switching-time overrides keyed by conjunct index.
    #[serde(default)]
    pub switching: BTreeMap<usize, usize>,
    /// Directory of the scenario file, for resolving relative paths.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

/// A scenario resolved into a model, a specification and its compiled costs.
pub struct Problem {
    pub model: Box<dyn DynamicsModel>,
    pub predicates: PredicateTable,
    pub spec: Specification,
    pub table: RunningCostTable,
    pub x0: DVector<f64>,
}

impl Scenario {
    pub fn from_json(text: &str, base_dir: Option<&Path>) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let mut s: Scenario = serde_path_to_error::deserialize(de).map_err(|e| CliError::config(e.path().to_string(), e.inner().to_string()))?;
        s.base_dir = base_dir.map(Path::to_path_buf);
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Scenario::from_json(&text, path.parent())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scenario serializes")
    }

    fn validate(&self) -> Result<(), CliError> {
        SmoothParams::new(self.smoothing.k1, self.smoothing.k2).map_err(|e| CliError::config("smoothing", e.to_string()))?;
        self.solver.validate().map_err(|e| CliError::config("solver", e.to_string()))?;
        self.baseline.validate().map_err(|e| CliError::config("baseline", e.to_string()))?;
        if !(self.retry.k_escalation >= 1.0) {
            return Err(CliError::config("retry.k_escalation", "must be at least 1"));
        }
        if let InitPolicy::RandomUniform { lo, hi, .. } = self.init {
            if !(lo < hi) {
                return Err(CliError::config("init", "random_uniform needs lo < hi"));
            }
        }
        if matches!(self.init, InitPolicy::GravityCompensation) && self.model.arm_params().is_none() {
            return Err(CliError::config("init", "gravity_compensation needs a planar_arm model"));
        }
        let mut seen = std::collections::BTreeSet::new();
        for (i, p) in self.predicates.iter().enumerate() {
            if !seen.insert(p.name()) {
                return Err(CliError::config(format!("predicates[{i}].name"), format!("duplicate predicate `{}`", p.name())));
            }
        }
        Ok(())
    }

    /// Builds the model, resolves predicates and compiles the specification.
    pub fn build(&self) -> Result<Problem, CliError> {
        let model = self.model.build()?;
        let arm = self.model.arm_params();
        let mut predicates = PredicateTable::new();
        for (i, p) in self.predicates.iter().enumerate() {
            let pred = p.resolve(arm.as_ref())?;
            if pred.dim() != model.output_dim() {
                return Err(CliError::config(
                    format!("predicates[{i}]"),
                    format!("predicate `{}` has dimension {}, but the model output has {}", p.name(), pred.dim(), model.output_dim()),
                ));
            }
            predicates.insert(pred);
        }
        let spec = parse_spec(&self.specification, self.horizon, &predicates).map_err(|e| CliError::config("specification", e.to_string()))?;
        let table = compile_with(&spec, &CompileOptions { switching: self.switching.clone() }).map_err(|e| CliError::config("switching", e.to_string()))?;
        if self.x0.len() != model.state_dim() {
            return Err(CliError::config("x0", format!("expected {} entries, got {}", model.state_dim(), self.x0.len())));
        }
        let x0 = DVector::from_column_slice(&self.x0);
        Ok(Problem { model, predicates, spec, table, x0 })
    }

    pub fn seed(&self) -> Option<u64> {
        match self.init {
            InitPolicy::RandomUniform { seed, .. } => Some(seed),
            _ => None,
        }
    }

    /// Replaces the seed of a random initialization policy.
    pub fn set_seed(&mut self, new_seed: u64) {
        if let InitPolicy::RandomUniform { seed, .. } = &mut self.init {
            *seed = new_seed;
        }
    }

    /// Initial control sequence `u_0 .. u_T` under the scenario's policy.
    pub fn initial_controls(&self, problem: &Problem) -> Result<Vec<DVector<f64>>, CliError> {
        let (m, len) = (problem.model.control_dim(), self.horizon + 1);
        match &self.init {
            InitPolicy::RandomUniform { lo, hi, seed } => Ok(random_controls(m, len, *lo, *hi, *seed)),
            InitPolicy::Zeros => Ok(vec![DVector::zeros(m); len]),
            InitPolicy::GravityCompensation => {
                let arm = self.model.arm_params().expect("validated");
                let tau = gravity_torque(&arm, &self.x0[..ARM_LINKS]);
                Ok(vec![DVector::from_column_slice(&tau); len])
            }
            InitPolicy::File { path } => {
                let path = match &self.base_dir {
                    Some(dir) if path.is_relative() => dir.join(path),
                    _ => path.clone(),
                };
                let controls = read_trajectory_controls(&path)?;
                if controls.len() != len || controls.iter().any(|u| u.len() != m) {
                    return Err(CliError::config("init.path", format!("{} does not hold {len} controls of length {m}", path.display())));
                }
                Ok(controls)
            }
        }
    }

    pub fn predicate_kinds(&self, problem: &Problem) -> Vec<(String, PredicateKind)> {
        problem.predicates.iter().map(|p| (p.name.clone(), p.kind.clone())).collect()
    }
}

/// `len` controls of dimension `m`, drawn time-major from a seeded stream.
pub fn random_controls(m: usize, len: usize, lo: f64, hi: f64, seed: u64) -> Vec<DVector<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..len).map(|_| DVector::from_fn(m, |_, _| rng.gen_range(lo..hi))).collect()
}
