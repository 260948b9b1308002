//! Experiment configuration files (TOML).

use std::path::Path;

use finhol::algebra::AlgebraOptions;
use finhol::models::ModelSpec;
use finhol::transport::{CurveSpec, HolonomyOptions, LoopFamily, TransportOptions};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Seed for every sampled quantity; `--seed` overrides it.
    #[serde(default)]
    pub seed: u64,
    pub model: ModelSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub inspect: Option<InspectConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub algebra: Option<AlgebraConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub holonomy: Option<HolonomyConfig>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub transport: Option<TransportConfig>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InspectConfig {
    pub points: Vec<Vec<f64>>,
    /// Tangent vectors to evaluate at; indicatrix samples when empty.
    pub directions: Vec<Vec<f64>>,
    /// Indicatrix samples per point when `directions` is empty.
    pub samples: usize,
    /// Directions checked for positivity, definiteness and homogeneity.
    pub validation_samples: usize,
}

impl Default for InspectConfig {
    fn default() -> Self {
        InspectConfig {
            points: Vec::new(),
            directions: Vec::new(),
            samples: 2,
            validation_samples: finhol::models::DEFAULT_VALIDATION_SAMPLES,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AlgebraKind {
    Curvature,
    InfinitesimalHolonomy,
}

impl AlgebraKind {
    pub fn as_str(self) -> &'static str {
        match self {
            AlgebraKind::Curvature => "curvature",
            AlgebraKind::InfinitesimalHolonomy => "infinitesimal_holonomy",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AlgebraConfig {
    pub points: Vec<Vec<f64>>,
    pub kinds: Vec<AlgebraKind>,
    pub options: AlgebraOptions,
}

impl Default for AlgebraConfig {
    fn default() -> Self {
        AlgebraConfig {
            points: Vec::new(),
            kinds: vec![AlgebraKind::Curvature, AlgebraKind::InfinitesimalHolonomy],
            options: AlgebraOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransportRun {
    pub curve: CurveSpec,
    /// Initial vectors; indicatrix samples at the curve start when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub y0: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransportConfig {
    pub runs: Vec<TransportRun>,
    pub samples: usize,
    /// Also transport back along the reversed curve and report the residual.
    pub check_reverse: bool,
    pub options: TransportOptions,
}

impl Default for TransportConfig {
    fn default() -> Self {
        TransportConfig { runs: Vec::new(), samples: 4, check_reverse: true, options: TransportOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LoopConfig {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub h: Vec<f64>,
}

impl Default for LoopConfig {
    fn default() -> Self {
        LoopConfig { x: Vec::new(), y: Vec::new(), h: vec![2e-2, 1e-2, 5e-3] }
    }
}

/// Berwald translate of the curvature field `r(x, y)` from the start of
/// `curve` to its end.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TranslateConfig {
    pub curve: CurveSpec,
    pub x: Vec<f64>,
    pub y: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct HolonomyAlgebraConfig {
    /// Curves from source points to `p`.
    pub sources: Vec<CurveSpec>,
    pub options: HolonomyOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CommutatorConfig {
    pub xi: LoopFamily,
    pub eta: LoopFamily,
    #[serde(default = "default_commutator_steps")]
    pub h: Vec<f64>,
}

fn default_commutator_steps() -> Vec<f64> {
    vec![0.1, 0.05]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HolonomyConfig {
    pub p: Vec<f64>,
    /// Indicatrix samples at `p` for the loop experiments.
    pub samples: usize,
    pub transport: TransportOptions,
    /// Closed curves whose holonomy rotation angle is tabulated.
    pub angles: Vec<TransportRun>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub loops: Option<LoopConfig>,
    pub translates: Vec<TranslateConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub algebra: Option<HolonomyAlgebraConfig>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub commutator: Option<CommutatorConfig>,
}

impl Default for HolonomyConfig {
    fn default() -> Self {
        HolonomyConfig {
            p: Vec::new(),
            samples: 4,
            transport: TransportOptions::default(),
            angles: Vec::new(),
            loops: None,
            translates: Vec::new(),
            algebra: None,
            commutator: None,
        }
    }
}

fn origin(n: usize) -> Vec<f64> {
    vec![0.0; n]
}

fn positive(name: &str, v: f64) -> Result<(), CliError> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(CliError::Config(format!("{name} must be positive, got {v}")))
    }
}

fn check_ode(prefix: &str, o: &TransportOptions) -> Result<(), CliError> {
    positive(&format!("{prefix}.rtol"), o.rtol)?;
    positive(&format!("{prefix}.atol"), o.atol)?;
    if o.max_steps == 0 || o.fixed_steps == Some(0) {
        return Err(CliError::Config(format!("{prefix}: step budgets must be positive")));
    }
    if let Some(h) = o.max_step {
        positive(&format!("{prefix}.max_step"), h)?;
    }
    Ok(())
}

fn check_points(name: &str, pts: &[Vec<f64>], n: usize) -> Result<(), CliError> {
    for p in pts {
        if p.len() != n {
            return Err(CliError::Config(format!("{name}: {p:?} has {} components, model dimension is {n}", p.len())));
        }
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))
    }

    /// Fill point defaults, propagate the seed and validate budgets. The
    /// result is what the report echoes.
    pub fn resolve(mut self, seed: Option<u64>) -> Result<Self, CliError> {
        if let Some(s) = seed {
            self.seed = s;
        }
        let n = self.model.dim;
        if let Some(c) = &mut self.inspect {
            if c.points.is_empty() {
                c.points.push(origin(n));
            }
            check_points("inspect.points", &c.points, n)?;
            check_points("inspect.directions", &c.directions, n)?;
            if c.samples == 0 || c.validation_samples == 0 {
                return Err(CliError::Config("inspect: sample counts must be positive".into()));
            }
        }
        if let Some(c) = &mut self.algebra {
            if c.points.is_empty() {
                c.points.push(origin(n));
            }
            check_points("algebra.points", &c.points, n)?;
            c.options.seed = self.seed;
            c.options.validate().map_err(|e| CliError::Config(e.to_string()))?;
        }
        if let Some(c) = &mut self.transport {
            check_ode("transport.options", &c.options)?;
            if c.samples == 0 {
                return Err(CliError::Config("transport.samples must be positive".into()));
            }
            for r in &c.runs {
                if let Some(ys) = &r.y0 {
                    check_points("transport.runs.y0", ys, n)?;
                }
            }
        }
        if let Some(c) = &mut self.holonomy {
            if c.p.is_empty() {
                c.p = origin(n);
            }
            check_points("holonomy.p", std::slice::from_ref(&c.p), n)?;
            check_ode("holonomy.transport", &c.transport)?;
            if c.samples == 0 {
                return Err(CliError::Config("holonomy.samples must be positive".into()));
            }
            if let Some(l) = &mut c.loops {
                if l.x.is_empty() && l.y.is_empty() && n >= 2 {
                    l.x = basis(n, 0);
                    l.y = basis(n, 1);
                }
                check_points("holonomy.loops", &[l.x.clone(), l.y.clone()], n)?;
                for &h in &l.h {
                    positive("holonomy.loops.h", h)?;
                }
            }
            for t in &c.translates {
                check_points("holonomy.translates", &[t.x.clone(), t.y.clone()], n)?;
            }
            if let Some(a) = &mut c.algebra {
                a.options.algebra.seed = self.seed;
                a.options.algebra.validate().map_err(|e| CliError::Config(e.to_string()))?;
                check_ode("holonomy.algebra.options.transport", &a.options.transport)?;
                positive("holonomy.algebra.options.stencil_step", a.options.stencil_step)?;
            }
            if let Some(cm) = &c.commutator {
                check_points(
                    "holonomy.commutator",
                    &[cm.xi.x.clone(), cm.xi.y.clone(), cm.eta.x.clone(), cm.eta.y.clone()],
                    n,
                )?;
                for &h in &cm.h {
                    positive("holonomy.commutator.h", h)?;
                }
            }
        }
        Ok(self)
    }
}

fn basis(n: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; n];
    v[i] = 1.0;
    v
}
