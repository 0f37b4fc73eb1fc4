//! Invariant suite for one shape: subharmonicity of `|∇u|²`, convexity of
//! superlevel sets, the inradius bound and scale invariance.

use crate::error::{Error, Result};
use crate::fem::{subharmonicity_check, superlevel_curve};
use crate::functionals::{evaluate_on_mesh, shape_id, EvalParams, BOUND_SLACK};
use crate::mesh::triangulate;
use crate::shape::{measures, ConvexPolygon};
use serde::{Deserialize, Serialize};

pub const SUBHARMONIC_MAX_FRACTION: f64 = 0.01;
pub const CONVEXITY_MAX_DEFECT: f64 = 1e-3;
pub const SCALE_TOL: f64 = 1e-10;
pub const LEVELS: [f64; 3] = [0.2, 0.5, 0.8];
pub const SCALES: [f64; 2] = [0.5, 3.0];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub value: f64,
    pub threshold: f64,
    pub pass: bool,
}

impl CheckOutcome {
    fn at_most(name: &str, value: f64, threshold: f64) -> Self {
        CheckOutcome { name: name.into(), value, threshold, pass: value <= threshold }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckSuite {
    pub shape_id: String,
    pub node_count: usize,
    pub checks: Vec<CheckOutcome>,
    pub all_pass: bool,
}

/// Runs the four checks on one mesh of `p` built from `params`.
pub fn run_checks(p: &ConvexPolygon, params: &EvalParams) -> Result<CheckSuite> {
    let mesh = triangulate(p, params.mesh_size.resolve(p), params.grading)?;
    let node_count = mesh.nodes().len();
    let inradius = measures(p).inradius;
    let eval = match evaluate_on_mesh(mesh.clone(), params) {
        Ok(e) => e,
        Err(Error::BoundViolation { g_max, inradius }) => {
            let checks = vec![CheckOutcome::at_most("inradius_bound", g_max / inradius, BOUND_SLACK)];
            return Ok(CheckSuite { shape_id: shape_id(p), node_count, checks, all_pass: false });
        }
        Err(e) => return Err(e),
    };
    let sol = &eval.solution;

    let sub = subharmonicity_check(sol);
    let mut defect: f64 = 0.0;
    for c in LEVELS {
        // An extraction failure (open or branching contour) counts as a defect.
        defect = defect.max(superlevel_curve(sol, c * sol.u_max()).map_or(f64::INFINITY, |l| l.convexity_defect()));
    }
    let mut scale_dev: f64 = 0.0;
    for t in SCALES {
        let r = evaluate_on_mesh(mesh.scaled(t)?, params)?.report;
        scale_dev = scale_dev.max((r.j - eval.report.j).abs()).max((r.jp - eval.report.jp).abs());
    }

    let checks = vec![
        CheckOutcome::at_most("subharmonicity", sub.violation_fraction, SUBHARMONIC_MAX_FRACTION),
        CheckOutcome::at_most("superlevel_convexity", defect, CONVEXITY_MAX_DEFECT),
        CheckOutcome::at_most("inradius_bound", eval.report.g_max / inradius, BOUND_SLACK),
        CheckOutcome::at_most("scale_invariance", scale_dev, SCALE_TOL),
    ];
    let all_pass = checks.iter().all(|c| c.pass);
    Ok(CheckSuite { shape_id: shape_id(p), node_count, checks, all_pass })
}
