//! Resolved per-command settings. Each one can be read from a JSON file
//! (unknown keys are rejected) and is then overridden by command-line flags.

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};
use torsion_core::fem::ProbeDepths;
use torsion_core::functionals::{EvalParams, MeshSize};
use torsion_core::optimizer::{Objective, OptConfig, Symmetry};

/// Mesh and probe settings shared by the commands that solve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MeshConfig {
    /// Target edge length as `diameter / mesh_div`.
    pub mesh_div: f64,
    /// Absolute target edge length; overrides `mesh_div`.
    pub h: Option<f64>,
    pub grading: f64,
    pub samples: usize,
}

impl Default for MeshConfig {
    fn default() -> Self {
        MeshConfig { mesh_div: 150.0, h: None, grading: 0.5, samples: 256 }
    }
}

impl MeshConfig {
    pub fn eval_params(&self) -> EvalParams {
        EvalParams {
            mesh_size: match self.h {
                Some(h) => MeshSize::Absolute(h),
                None => MeshSize::DiameterOver(self.mesh_div),
            },
            grading: self.grading,
            n_samples: self.samples,
            depths: ProbeDepths::default(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolveConfig {
    pub shape: PathBuf,
    pub mesh: MeshConfig,
    /// Solution dump; standard output if absent.
    pub out: Option<PathBuf>,
    /// Mesh dump in `v x y` / `t i j k` lines.
    pub mesh_out: Option<PathBuf>,
    /// Contour level as a fraction of `max u`.
    pub contour_level: Option<f64>,
    /// Shape file receiving the contour.
    pub contour_out: Option<PathBuf>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub shape: PathBuf,
    pub mesh: MeshConfig,
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizeConfig {
    pub objective: Objective,
    pub n_start: usize,
    pub n_angles: usize,
    pub symmetry: Symmetry,
    pub max_evals: usize,
    pub restarts: usize,
    pub seed: u64,
    pub simplex_scale: f64,
    pub stop_tol: f64,
    pub repair_penalty: f64,
    /// Search mesh as `diameter / search_mesh_div`.
    pub search_mesh_div: f64,
    /// Mesh and probe settings for the reported optimum.
    pub mesh: MeshConfig,
    pub out: PathBuf,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        let d = OptConfig::default();
        let search_mesh_div = match d.search_eval.mesh_size {
            MeshSize::DiameterOver(k) => k,
            MeshSize::Absolute(_) => 30.0,
        };
        OptimizeConfig {
            objective: d.objective,
            n_start: d.n_start,
            n_angles: d.n_angles,
            symmetry: d.symmetry,
            max_evals: d.max_evals,
            restarts: d.restarts,
            seed: d.rng_seed,
            simplex_scale: d.simplex_init_scale,
            stop_tol: d.stop_tol,
            repair_penalty: d.repair_penalty,
            search_mesh_div,
            mesh: MeshConfig::default(),
            out: PathBuf::from("run"),
        }
    }
}

impl OptimizeConfig {
    pub fn opt_config(&self) -> OptConfig {
        let final_eval = self.mesh.eval_params();
        OptConfig {
            objective: self.objective,
            n_start: self.n_start,
            n_angles: self.n_angles,
            symmetry: self.symmetry,
            max_evals: self.max_evals,
            restarts: self.restarts,
            simplex_init_scale: self.simplex_scale,
            rng_seed: self.seed,
            search_eval: EvalParams { mesh_size: MeshSize::DiameterOver(self.search_mesh_div), ..final_eval.clone() },
            final_eval,
            stop_tol: self.stop_tol,
            repair_penalty: self.repair_penalty,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidateConfig {
    pub shape: PathBuf,
    /// `auto5` or a JSON file holding `[[x, y], ...]`.
    pub points: String,
    pub walks: usize,
    /// Absorption distance; `1e-4 · diameter` if absent.
    pub eps: Option<f64>,
    pub seed: u64,
    /// Coarse comparison mesh as `diameter / mesh_div`; the finite element
    /// value comes from its uniform refinement.
    pub mesh_div: f64,
    pub out: Option<PathBuf>,
}

impl Default for ValidateConfig {
    fn default() -> Self {
        ValidateConfig {
            shape: PathBuf::new(),
            points: "auto5".into(),
            walks: 100_000,
            eps: None,
            seed: 1,
            mesh_div: 75.0,
            out: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckConfig {
    pub shape: PathBuf,
    pub mesh: MeshConfig,
    pub out: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    pub shape: PathBuf,
    pub out: PathBuf,
    /// Fill triangles by `|∇u|/√|Ω|` and mark the gradient maximum.
    pub heatmap: bool,
    pub mesh: MeshConfig,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            shape: PathBuf::new(),
            out: PathBuf::from("shape.svg"),
            heatmap: false,
            mesh: MeshConfig { mesh_div: 60.0, ..MeshConfig::default() },
        }
    }
}

/// Reads a config file, or the defaults when no file is given.
pub fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> anyhow::Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| anyhow::anyhow!("reading {}: {e}", p.display()))?;
            serde_json::from_str(&text).map_err(|e| anyhow::anyhow!("config {}: {e}", p.display()))
        }
    }
}
