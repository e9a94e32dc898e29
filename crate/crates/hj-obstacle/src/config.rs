//! Plain-text experiment configuration (TOML sections, every numeric knob
//! explicit). A report's config echo is the serialized resolved config, so
//! re-running it reproduces the experiment. See `docs/config.md` for the
//! field-by-field description.

use crate::domain::{
    catalog_problem, DiffusionSpec, HamiltonianSpec, ProblemSpec, TrigPoly,
};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

fn default_seed() -> u64 {
    7
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RunSection {
    pub seed: u64,
    /// Worker threads for sweep cells; 0 uses all cores.
    pub jobs: usize,
}

impl Default for RunSection {
    fn default() -> Self {
        RunSection {
            seed: default_seed(),
            jobs: 0,
        }
    }
}

/// Trigonometric polynomial as explicit coefficient lists:
/// `cos`/`sin` rows are `[k, coef]` in 1D and `[k1, k2, coef]` in 2D.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct PolySection {
    pub constant: f64,
    pub cos: Vec<Vec<f64>>,
    pub sin: Vec<Vec<f64>>,
}

impl PolySection {
    pub fn to_poly(&self, dim: usize) -> Result<TrigPoly> {
        let mut poly = TrigPoly::constant(self.constant);
        for (rows, is_cos) in [(&self.cos, true), (&self.sin, false)] {
            for row in rows {
                if row.len() != dim + 1 {
                    return Err(Error::Config(format!(
                        "coefficient row {row:?} must have {} entries in {dim}D ([k..., coef])",
                        dim + 1
                    )));
                }
                let mut wave = [0i32; 2];
                for (k, w) in wave.iter_mut().enumerate().take(dim) {
                    let raw = row[k];
                    if raw.fract() != 0.0 {
                        return Err(Error::Config(format!(
                            "wave number {raw} in row {row:?} is not an integer"
                        )));
                    }
                    *w = raw as i32;
                }
                let coef = row[dim];
                if is_cos {
                    poly = poly.with_term(wave, coef, 0.0);
                } else {
                    poly = poly.with_term(wave, 0.0, coef);
                }
            }
        }
        Ok(poly)
    }

    pub fn from_poly(poly: &TrigPoly, dim: usize) -> Self {
        let mut section = PolySection {
            constant: poly.constant,
            ..Default::default()
        };
        for term in &poly.terms {
            let mut cos_row: Vec<f64> = term.wave.iter().take(dim).map(|w| *w as f64).collect();
            let mut sin_row = cos_row.clone();
            if term.cos_coef != 0.0 {
                cos_row.push(term.cos_coef);
                section.cos.push(cos_row);
            }
            if term.sin_coef != 0.0 {
                sin_row.push(term.sin_coef);
                section.sin.push(sin_row);
            }
        }
        section
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ProblemSection {
    /// Builtin key; leave empty to define the problem inline below.
    pub catalog: String,
    pub dim: usize,
    pub family: String,
    pub potential: PolySection,
    pub drift: Vec<PolySection>,
    /// "zero" | "constant-isotropic" | "diagonal-variable".
    pub diffusion_form: String,
    pub diffusion_value: f64,
    pub diffusion_entries: Vec<PolySection>,
    pub obstacle: PolySection,
    pub initial: PolySection,
}

impl ProblemSection {
    pub fn resolve(&self) -> Result<ProblemSpec> {
        if !self.catalog.is_empty() {
            return catalog_problem(&self.catalog);
        }
        let dim = self.dim;
        if dim == 0 || dim > 2 {
            return Err(Error::Config(format!(
                "inline problem needs dim in {{1, 2}}, got {dim}"
            )));
        }
        if !self.family.is_empty() && self.family != "quadratic-with-drift" {
            return Err(Error::Config(format!(
                "unsupported hamiltonian family {:?}; only \"quadratic-with-drift\" is built in",
                self.family
            )));
        }
        let drift: Vec<TrigPoly> = if self.drift.is_empty() {
            vec![TrigPoly::zero(); dim]
        } else {
            self.drift
                .iter()
                .map(|p| p.to_poly(dim))
                .collect::<Result<_>>()?
        };
        let diffusion = match self.diffusion_form.as_str() {
            "" | "zero" => DiffusionSpec::Zero,
            "constant-isotropic" => DiffusionSpec::ConstantIsotropic {
                value: self.diffusion_value,
            },
            "diagonal-variable" => DiffusionSpec::DiagonalVariable {
                entries: self
                    .diffusion_entries
                    .iter()
                    .map(|p| p.to_poly(dim))
                    .collect::<Result<_>>()?,
            },
            other => {
                return Err(Error::Config(format!(
                    "unknown diffusion form {other:?}"
                )))
            }
        };
        Ok(ProblemSpec {
            name: "inline".into(),
            dim,
            hamiltonian: HamiltonianSpec::quadratic(self.potential.to_poly(dim)?, drift),
            diffusion,
            obstacle: self.obstacle.to_poly(dim)?,
            initial: self.initial.to_poly(dim)?,
        })
    }

    pub fn from_catalog_key(key: &str) -> Self {
        ProblemSection {
            catalog: key.into(),
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveSection {
    pub t_final: f64,
    pub points_per_axis: usize,
    pub snapshots: usize,
    pub export_csv: bool,
}

impl Default for SolveSection {
    fn default() -> Self {
        SolveSection {
            t_final: 10.0,
            points_per_axis: 256,
            snapshots: 64,
            export_csv: true,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct RateStudySection {
    pub eps_schedule: Vec<f64>,
    pub points_per_axis: usize,
    pub min_slope: f64,
}

impl Default for RateStudySection {
    fn default() -> Self {
        RateStudySection {
            eps_schedule: vec![0.4, 0.2, 0.1, 0.05],
            points_per_axis: 1024,
            min_slope: 0.3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct ErgodicSection {
    pub alphas: Vec<f64>,
    pub t_longtime: f64,
    pub points_per_axis: usize,
    pub cross_check_tol: f64,
    /// Check against the closed-form constant when the catalog knows it.
    pub known_tol: f64,
}

impl Default for ErgodicSection {
    fn default() -> Self {
        ErgodicSection {
            alphas: vec![0.1, 0.05, 0.025],
            t_longtime: 40.0,
            points_per_axis: 512,
            cross_check_tol: 0.02,
            known_tol: 0.02,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct DichotomySection {
    pub t_max: f64,
    pub points_per_axis: usize,
    pub osc_tol: f64,
    pub limit_tol: f64,
    pub near_critical_band: f64,
}

impl Default for DichotomySection {
    fn default() -> Self {
        DichotomySection {
            t_max: 20.0,
            points_per_axis: 128,
            osc_tol: 1e-2,
            limit_tol: 1e-2,
            near_critical_band: 0.05,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct AdjointAuditSection {
    pub eps_schedule: Vec<f64>,
    pub points_per_axis: usize,
    /// Energy-audit refinement keeps this eps and sends (h, dt) to
    /// (h/2, dt/4).
    pub refine_eps: f64,
    pub max_ratio: f64,
}

impl Default for AdjointAuditSection {
    fn default() -> Self {
        AdjointAuditSection {
            eps_schedule: vec![0.4, 0.2, 0.1],
            points_per_axis: 48,
            refine_eps: 0.2,
            max_ratio: 10.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct KeyStabilitySection {
    pub eps_schedule: Vec<f64>,
    pub points_per_axis: usize,
    pub min_slope: f64,
    pub noise_floor: f64,
}

impl Default for KeyStabilitySection {
    fn default() -> Self {
        KeyStabilitySection {
            eps_schedule: vec![0.4, 0.2, 0.1, 0.05],
            points_per_axis: 128,
            min_slope: 0.15,
            noise_floor: 1e-12,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default)]
pub struct McSection {
    pub t: f64,
    pub points_per_axis: usize,
    pub samples: usize,
    pub sample_nodes: usize,
    pub dominance_slack: f64,
    pub tightness_gap: f64,
    pub tightness_fraction: f64,
}

impl Default for McSection {
    fn default() -> Self {
        McSection {
            t: 2.0,
            points_per_axis: 128,
            samples: 10_000,
            sample_nodes: 8,
            dominance_slack: 1e-2,
            tightness_gap: 5e-2,
            tightness_fraction: 0.8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
#[serde(default)]
pub struct ExperimentConfig {
    pub run: RunSection,
    pub problem: ProblemSection,
    pub solve: SolveSection,
    pub rate_study: RateStudySection,
    pub ergodic: ErgodicSection,
    pub dichotomy: DichotomySection,
    pub adjoint_audit: AdjointAuditSection,
    pub key_stability: KeyStabilitySection,
    pub mc: McSection,
}

impl ExperimentConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_str(&text)
    }

    pub fn from_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Defaults with the problem set from a catalog key.
    pub fn for_problem(key: &str) -> Self {
        ExperimentConfig {
            problem: ProblemSection::from_catalog_key(key),
            ..Default::default()
        }
    }

    pub fn resolve_problem(&self) -> Result<ProblemSpec> {
        self.problem.resolve()
    }

    /// The fully resolved echo that reports embed.
    pub fn echo(&self) -> String {
        toml::to_string_pretty(self).unwrap_or_else(|e| format!("# echo failed: {e}"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_roundtrips_through_toml() {
        let cfg = ExperimentConfig::for_problem("subcritical-obstacle-1d");
        let echo = cfg.echo();
        let back = ExperimentConfig::from_str(&echo).unwrap();
        assert_eq!(back.problem.catalog, "subcritical-obstacle-1d");
        assert_eq!(back.rate_study.eps_schedule, cfg.rate_study.eps_schedule);
        assert_eq!(back.run.seed, cfg.run.seed);
    }

    #[test]
    fn inline_problem_parses_and_matches_catalog() {
        let text = r#"
[problem]
dim = 1
family = "quadratic-with-drift"
diffusion_form = "diagonal-variable"

[problem.potential]
constant = -1.1
cos = [[1.0, 0.4]]

[[problem.diffusion_entries]]
constant = 0.06
cos = [[1.0, 0.04]]

[problem.obstacle]
sin = [[1.0, 0.25]]

[problem.initial]
constant = -0.5
sin = [[1.0, 0.25]]
"#;
        let cfg = ExperimentConfig::from_str(text).unwrap();
        let inline = cfg.resolve_problem().unwrap();
        let builtin = catalog_problem("subcritical-cos-obstacle-1d").unwrap();
        assert_eq!(inline.hamiltonian.potential, builtin.hamiltonian.potential);
        assert_eq!(inline.obstacle, builtin.obstacle);
        assert_eq!(inline.initial, builtin.initial);
        assert_eq!(inline.diffusion, builtin.diffusion);
    }

    #[test]
    fn bad_configs_are_rejected() {
        assert!(matches!(
            ExperimentConfig::from_str("run = 3"),
            Err(Error::Config(_))
        ));
        let bad_family = r#"
[problem]
dim = 1
family = "exotic"
"#;
        let cfg = ExperimentConfig::from_str(bad_family).unwrap();
        assert!(matches!(cfg.resolve_problem(), Err(Error::Config(_))));
        let bad_row = r#"
[problem]
dim = 2
[problem.potential]
cos = [[1.0, 0.5]]
"#;
        let cfg = ExperimentConfig::from_str(bad_row).unwrap();
        assert!(matches!(cfg.resolve_problem(), Err(Error::Config(_))));
    }

    #[test]
    fn poly_section_roundtrip() {
        let poly = TrigPoly::cosine(2, 0.3, -1.0).with_term([1, 0], 0.0, 0.25);
        let section = PolySection::from_poly(&poly, 1);
        let back = section.to_poly(1).unwrap();
        assert_eq!(back, poly);
    }
}
