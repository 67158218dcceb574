use std::path::{Path, PathBuf};

use chernweil::residue::{check_sphere_resolution, default_eps_list, ResidueConfig};
use chernweil::scenarios::{
    build_hopf_vector_field, build_line_bundle_zeros, build_riemann_hurwitz, build_surjective_demo, riemann_sphere,
    Scenario, VectorFieldProfile, ZeroLocation, CHART_HALF_WIDTH,
};
use chernweil::transgression::{QuadratureSpec, DEFAULT_QUAD_NODES};
use chernweil::Error;
use serde::{Deserialize, Serialize};

pub const SCENARIOS: [&str; 5] = ["line_zeros", "hopf", "riemann_hurwitz", "surjective_demo", "s4_instanton"];

pub const DEFAULT_RESOLUTION: usize = 128;

/// Everything a run depends on. Loaded from JSON (unknown keys are an error) and then
/// overridden by command-line flags.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub scenario: String,
    pub resolution: usize,
    /// Sphere radii for the residues; the default list scales with the chart.
    pub eps: Option<Vec<f64>>,
    pub quad_nodes: usize,
    /// Invariant polynomial; the scenario's own choice when absent.
    pub phi: Option<String>,
    /// Gram–Schmidt seed for complement frames.
    pub seed: usize,
    pub normalize: bool,
    /// `line_zeros`: degree of the target bundle `O(k)`.
    pub k: i32,
    /// `line_zeros`: zero placement; poles when absent.
    pub zeros: Option<Vec<ZeroLocation>>,
    /// `riemann_hurwitz`: degree of `z ↦ z^d`.
    pub d: i32,
    /// `hopf`: which vector field.
    pub field: VectorFieldProfile,
    /// `hopf`: global phase of the field.
    pub phase: f64,
    /// `surjective_demo`: whether the map drops rank at the north pole.
    pub collapse: bool,
    /// `surjective_demo`: constant rotation of the source frame.
    pub gauge: f64,
    pub enable_4d: bool,
    pub out: Option<PathBuf>,
    pub verbose: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            scenario: "line_zeros".into(),
            resolution: DEFAULT_RESOLUTION,
            eps: None,
            quad_nodes: DEFAULT_QUAD_NODES,
            phi: None,
            seed: 0,
            normalize: true,
            k: 2,
            zeros: None,
            d: 2,
            field: VectorFieldProfile::Rotational,
            phase: 0.0,
            collapse: true,
            gauge: 0.0,
            enable_4d: false,
            out: None,
            verbose: false,
        }
    }
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self, Error> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn eps_list(&self) -> Vec<f64> {
        self.eps.clone().unwrap_or_else(|| default_eps_list(CHART_HALF_WIDTH))
    }

    /// Zeros of the `line_zeros` section: the given ones, else the poles.
    pub fn zero_locations(&self) -> Result<Vec<ZeroLocation>, Error> {
        if let Some(z) = &self.zeros {
            return Ok(z.clone());
        }
        match self.k {
            0 => Ok(vec![]),
            1 => Ok(vec![ZeroLocation::Finite(0.0, 0.0)]),
            2 => Ok(vec![ZeroLocation::Finite(0.0, 0.0), ZeroLocation::Infinity]),
            k => Err(Error::Config(format!("k = {k} needs explicit --zeros"))),
        }
    }

    /// Reject anything that cannot run before building bundles.
    pub fn validate(&self) -> Result<(), Error> {
        if !SCENARIOS.contains(&self.scenario.as_str()) {
            return Err(Error::Config(format!(
                "unknown scenario '{}' (known: {})",
                self.scenario,
                SCENARIOS.join(", ")
            )));
        }
        if self.scenario == "s4_instanton" {
            return Err(Error::Budget(if self.enable_4d {
                "s4_instanton is not built in this release; 4-D runs are refused".into()
            } else {
                "s4_instanton needs --enable-4d".into()
            }));
        }
        QuadratureSpec::new(self.quad_nodes)?;
        check_sphere_resolution(&*riemann_sphere(self.resolution)?, &self.eps_list())
    }

    pub fn residue_config(&self, scenario: &Scenario) -> Result<ResidueConfig, Error> {
        Ok(ResidueConfig {
            profile: if self.normalize { scenario.profile } else { None },
            eps_list: self.eps_list(),
            quadrature: QuadratureSpec::new(self.quad_nodes)?,
            seed: self.seed,
            ..Default::default()
        })
    }

    pub fn build(&self, resolution: usize) -> Result<Scenario, Error> {
        match self.scenario.as_str() {
            "line_zeros" => build_line_bundle_zeros(resolution, self.k, &self.zero_locations()?),
            "hopf" => build_hopf_vector_field(resolution, self.field, self.phase),
            "riemann_hurwitz" => build_riemann_hurwitz(resolution, self.d),
            "surjective_demo" => build_surjective_demo(resolution, self.collapse, self.gauge),
            other => Err(Error::Config(format!("unknown scenario '{other}'"))),
        }
    }
}

/// `x,y` pairs for finite zeros and `inf` for the south pole, separated by `;`.
pub fn parse_zeros(s: &str) -> Result<Vec<ZeroLocation>, String> {
    s.split(';')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| {
            if p.eq_ignore_ascii_case("inf") {
                return Ok(ZeroLocation::Infinity);
            }
            let v: Vec<f64> = p
                .split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|e| format!("bad zero '{p}': {e}")))
                .collect::<Result<_, _>>()?;
            match v[..] {
                [x, y] => Ok(ZeroLocation::Finite(x, y)),
                _ => Err(format!("zero '{p}' needs two coordinates")),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        let err = serde_json::from_str::<RunConfig>(r#"{"scenario": "hopf", "resolutoin": 64}"#).unwrap_err();
        assert!(err.to_string().contains("resolutoin"));
        let ok: RunConfig = serde_json::from_str(r#"{"scenario": "hopf", "field": "Gradient"}"#).unwrap();
        assert_eq!(ok.field, VectorFieldProfile::Gradient);
        assert_eq!(ok.resolution, DEFAULT_RESOLUTION);
    }

    #[test]
    fn zeros_parse() {
        assert_eq!(
            parse_zeros("0.1,-0.2; inf").unwrap(),
            vec![ZeroLocation::Finite(0.1, -0.2), ZeroLocation::Infinity]
        );
        assert!(parse_zeros("0.1").is_err());
        assert!(parse_zeros("a,b").is_err());
    }

    #[test]
    fn validation() {
        assert!(RunConfig::default().validate().is_ok());
        let low = RunConfig {
            resolution: 8,
            ..Default::default()
        };
        assert!(matches!(low.validate(), Err(Error::Config(_))));
        let s4 = RunConfig {
            scenario: "s4_instanton".into(),
            ..Default::default()
        };
        assert!(matches!(s4.validate(), Err(Error::Budget(_))));
    }
}
