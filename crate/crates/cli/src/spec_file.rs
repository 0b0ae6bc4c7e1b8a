//! Domain description files.
//!
//! ```toml
//! space = "hyperbolic"        # or "euclidean", "hemisphere"
//! n = 2
//! resolution = 128            # optional
//!
//! [shape.ball]
//! d = 0.5
//! R = 0.7
//!
//! [tolerances]                # optional, verdict name -> tolerance
//! pde_residual = 1e-4
//! ```
//!
//! Star-shaped domains use `[shape.star]` with either `fourier = [a0, a1,
//! b1, ...]` (n = 2) or `profile = [[phi, rho], ...]` (n = 3, colatitudes
//! from 0 to pi).

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use wmink_core::domain::{Domain, Resolution, Shape};
use wmink_core::{Curvature, SpaceForm};

use crate::error::{CliError, CliResult};
use crate::report::KNOWN_VERDICTS;

pub const DEFAULT_RESOLUTION: usize = 128;
pub const RESOLUTION_ENV: &str = "WMINK_RESOLUTION";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainSpecFile {
    pub space: String,
    pub n: usize,
    pub shape: ShapeSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub resolution: Option<usize>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub tolerances: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase", deny_unknown_fields)]
pub enum ShapeSpec {
    Ball {
        d: f64,
        #[serde(rename = "R")]
        big_r: f64,
    },
    Star(StarSpec),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StarSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fourier: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile: Option<Vec<[f64; 2]>>,
}

pub fn curvature_of(space: &str) -> CliResult<Curvature> {
    match space {
        "hyperbolic" => Ok(Curvature::Hyperbolic),
        "euclidean" => Ok(Curvature::Euclidean),
        "hemisphere" => Ok(Curvature::Spherical),
        other => Err(CliError::parse(
            "space_name",
            format!("unknown space `{other}` (expected hyperbolic, euclidean or hemisphere)"),
        )),
    }
}

/// Resolution level from, in order of precedence, an explicit override, the
/// file, the `WMINK_RESOLUTION` environment variable and the default.
pub fn resolve_level(explicit: Option<usize>, file: Option<usize>) -> CliResult<usize> {
    if let Some(level) = explicit.or(file) {
        return Ok(level);
    }
    match std::env::var(RESOLUTION_ENV) {
        Ok(s) => s
            .trim()
            .parse()
            .map_err(|_| CliError::parse("resolution", format!("{RESOLUTION_ENV}={s:?} is not an integer"))),
        Err(_) => Ok(DEFAULT_RESOLUTION),
    }
}

impl DomainSpecFile {
    pub fn from_toml(text: &str) -> CliResult<Self> {
        let spec: DomainSpecFile = toml::from_str(text).map_err(|e| CliError::parse("syntax", e.message()))?;
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("domain spec serializes")
    }

    /// Checks everything that does not need the geometry, then builds the
    /// domain once so that the first violated domain invariant is reported.
    pub fn validate(&self) -> CliResult<()> {
        curvature_of(&self.space)?;
        if !(self.n == 2 || self.n == 3) {
            return Err(CliError::parse("dimension", format!("n = {} is not 2 or 3", self.n)));
        }
        if let ShapeSpec::Star(star) = &self.shape {
            match (&star.fourier, &star.profile) {
                (Some(_), Some(_)) | (None, None) => {
                    return Err(CliError::parse(
                        "star_representation",
                        "a star needs exactly one of `fourier` or `profile`",
                    ))
                }
                _ => {}
            }
        }
        for (name, tol) in &self.tolerances {
            if !KNOWN_VERDICTS.contains(&name.as_str()) {
                return Err(CliError::parse("tolerance_name", format!("no verdict named `{name}`")));
            }
            if !(tol.is_finite() && *tol >= 0.0) {
                return Err(CliError::parse("tolerance_value", format!("{name} = {tol}")));
            }
        }
        self.domain(Some(16))?;
        Ok(())
    }

    pub fn space_form(&self) -> CliResult<SpaceForm> {
        Ok(SpaceForm::new(curvature_of(&self.space)?, self.n)?)
    }

    pub fn shape(&self) -> CliResult<Shape> {
        match &self.shape {
            ShapeSpec::Ball { d, big_r } => Ok(Shape::ball(*d, *big_r)),
            ShapeSpec::Star(StarSpec {
                fourier: Some(c), ..
            }) => Ok(Shape::fourier(c.clone())),
            ShapeSpec::Star(StarSpec {
                profile: Some(p), ..
            }) => {
                let nodes: Vec<(f64, f64)> = p.iter().map(|[a, b]| (*a, *b)).collect();
                Ok(Shape::profile(&nodes)?)
            }
            ShapeSpec::Star(_) => Err(CliError::parse("star_representation", "empty star")),
        }
    }

    pub fn is_ball(&self) -> bool {
        matches!(self.shape, ShapeSpec::Ball { .. })
    }

    pub fn level(&self, explicit: Option<usize>) -> CliResult<usize> {
        resolve_level(explicit, self.resolution)
    }

    pub fn domain(&self, level: Option<usize>) -> CliResult<Domain> {
        let level = self.level(level)?;
        Ok(Domain::new(self.space_form()?, self.shape()?, Resolution::new(level))?)
    }

    pub fn tolerance(&self, verdict: &str, default: f64) -> f64 {
        self.tolerances.get(verdict).copied().unwrap_or(default)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_an_off_center_ball() {
        let s = DomainSpecFile::from_toml("space = \"hyperbolic\"\nn = 2\n[shape.ball]\nd = 0.5\nR = 0.7\n").unwrap();
        assert_eq!(s.shape, ShapeSpec::Ball { d: 0.5, big_r: 0.7 });
        assert_eq!(DomainSpecFile::from_toml(&s.to_toml()).unwrap(), s);
    }

    #[test]
    fn reports_the_first_violated_invariant() {
        let cases = [
            ("space = \"sphere\"\nn = 2\n[shape.ball]\nd = 0\nR = 1\n", "space_name"),
            ("space = \"hyperbolic\"\nn = 4\n[shape.ball]\nd = 0\nR = 1\n", "dimension"),
            ("space = \"hyperbolic\"\nn = 2\n[shape.ball]\nd = 0\nR = -1\n", "radius_positive"),
            ("space = \"hyperbolic\"\nn = 2\n[shape.ball]\nd = 0.8\nR = 0.7\n", "base_point_inside"),
            ("space = \"hemisphere\"\nn = 2\n[shape.ball]\nd = 0\nR = 1.6\n", "hemisphere"),
            ("space = \"hyperbolic\"\nn = 2\n[shape.star]\nfourier = [0.1, 0.5]\n", "radial_positive"),
            ("space = \"hyperbolic\"\nn = 3\n[shape.star]\nfourier = [1.0]\n", "fourier_dimension"),
            ("space = \"hyperbolic\"\nn = 2\n[shape.star]\n", "star_representation"),
            ("space = \"hyperbolic\"\nn = 2\n[shape.ball]\nd = 0\nR = 1\n[tolerances]\nbogus = 1.0\n", "tolerance_name"),
            ("space = \"hyperbolic\"\nn = 2\n", "syntax"),
        ];
        for (text, invariant) in cases {
            let err = DomainSpecFile::from_toml(text).unwrap_err();
            assert_eq!(err.invariant(), invariant, "{text}");
            assert_eq!(err.exit_code(), 2);
        }
    }

    #[test]
    fn profile_stars_need_the_full_colatitude_range() {
        let text = "space = \"euclidean\"\nn = 3\n[shape.star]\nprofile = [[0.0, 1.0], [1.0, 1.0], [2.0, 1.0], [3.0, 1.0]]\n";
        assert_eq!(DomainSpecFile::from_toml(text).unwrap_err().invariant(), "profile_range");
    }
}
