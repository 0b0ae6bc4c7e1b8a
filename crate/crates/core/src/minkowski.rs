//! Direct evaluation of the weighted Minkowski inequality
//!
//! ```text
//! (int_M V)^2 >= n int_Omega V int_M H V
//! ```
//!
//! together with its convexity hypothesis `h >= (V_nu / V) g` and equality
//! detection.

use crate::domain::{convexity_margin, horoconvexity_margin, min_eigenvalue, Domain, Resolution};
use crate::error::Result;
use crate::neumann::HYPOTHESIS_TOLERANCE;
use crate::quadrature::{weighted_integrals, WeightedIntegrals};
use crate::spaceform::Curvature;

/// Floor of the equality tolerance.
pub const EQUALITY_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Debug, PartialEq)]
pub struct MinkowskiReport {
    pub integrals: WeightedIntegrals,
    pub deficit: f64,
    pub normalized_deficit: f64,
    pub convexity_margin: f64,
    /// Only in hyperbolic space.
    pub horoconvexity_margin: Option<f64>,
    pub hypothesis_satisfied: bool,
    /// Small normalized deficit and constant mean curvature, both to `tol`.
    pub equality_flag: bool,
    /// Relative standard deviation of `H` over the boundary, area weighted.
    pub mean_curvature_spread: f64,
    /// `max(1e-8, 10 * |normalized deficit - normalized deficit at half
    /// resolution|)`.
    pub tol: f64,
}

fn mean_curvature_spread(domain: &Domain) -> f64 {
    let bg = domain.boundary();
    let h: Vec<f64> = bg.samples().iter().map(|s| s.mean_curvature).collect();
    let area = bg.area();
    let mean = bg.integrate(&h) / area;
    let sq: Vec<f64> = h.iter().map(|v| (v - mean) * (v - mean)).collect();
    (bg.integrate(&sq) / area).max(0.0).sqrt() / mean.abs().max(1e-300)
}

fn coarse_resolution(res: Resolution) -> Option<Resolution> {
    let boundary = res.boundary / 2;
    if boundary < 8 {
        return None;
    }
    Some(Resolution {
        boundary,
        radial: (res.radial / 2).max(8),
    })
}

pub fn minkowski_report(domain: &Domain) -> Result<MinkowskiReport> {
    let n = domain.space().dim();
    let integrals = weighted_integrals(domain)?;
    let normalized_deficit = integrals.normalized_deficit(n);
    let estimate = match coarse_resolution(domain.resolution()) {
        Some(res) => {
            let coarse = weighted_integrals(&domain.with_resolution(res)?)?;
            (coarse.normalized_deficit(n) - normalized_deficit).abs()
        }
        None => 0.0,
    };
    let tol = EQUALITY_TOLERANCE.max(10.0 * estimate);
    let margin = convexity_margin(domain.boundary())?;
    let horo = match domain.space().curvature() {
        Curvature::Hyperbolic => Some(horoconvexity_margin(domain.boundary())?),
        _ => None,
    };
    let spread = mean_curvature_spread(domain);
    Ok(MinkowskiReport {
        integrals,
        deficit: integrals.deficit(n),
        normalized_deficit,
        convexity_margin: margin,
        horoconvexity_margin: horo,
        hypothesis_satisfied: margin >= -HYPOTHESIS_TOLERANCE,
        equality_flag: normalized_deficit.abs() < tol && spread < tol,
        mean_curvature_spread: spread,
        tol,
    })
}

#[derive(Clone, Debug, PartialEq)]
pub struct AuditSample {
    pub index: usize,
    /// Smallest principal curvature.
    pub min_curvature: f64,
    pub vnu_over_v: f64,
    /// `V_nu - V`, hyperbolic space only.
    pub vnu_minus_v: Option<f64>,
    pub v_nu: f64,
    /// Smallest eigenvalue of `h - (V_nu / V) g`.
    pub condition: f64,
}

/// The sufficient condition and the bridge inequality that together imply
/// the weighted convexity hypothesis in the given space form:
///
/// * hyperbolic: horoconvexity `h >= g` and `V_nu < V`,
/// * hemisphere: convexity `h >= 0` and `V_nu <= 0`,
/// * Euclidean: convexity `h >= 0`; `V = 1` so the bridge is `V_nu = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImplicationChain {
    pub premise: &'static str,
    pub premise_holds: bool,
    pub bridge: &'static str,
    pub bridge_holds: bool,
    pub condition_holds: bool,
    /// `premise && bridge => condition` held on every sample.
    pub consistent: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct HypothesisAudit {
    pub samples: Vec<AuditSample>,
    pub premise_violations: Vec<usize>,
    pub bridge_violations: Vec<usize>,
    pub condition_violations: Vec<usize>,
    pub chain: ImplicationChain,
}

pub fn hypothesis_audit(domain: &Domain) -> Result<HypothesisAudit> {
    let curvature = domain.space().curvature();
    let tol = HYPOTHESIS_TOLERANCE;
    let mut samples = Vec::new();
    let mut premise_violations = Vec::new();
    let mut bridge_violations = Vec::new();
    let mut condition_violations = Vec::new();
    let mut consistent = true;
    for (index, s) in domain.boundary().samples().iter().enumerate() {
        let min_curvature = min_eigenvalue(&s.h);
        let vnu_over_v = s.v_nu / s.v;
        let condition = min_curvature - vnu_over_v;
        let (premise, bridge) = match curvature {
            Curvature::Hyperbolic => (min_curvature >= 1.0 - tol, s.v_nu < s.v),
            Curvature::Spherical => (min_curvature >= -tol, s.v_nu <= tol),
            Curvature::Euclidean => (min_curvature >= -tol, s.v_nu.abs() <= tol),
        };
        let holds = condition >= -tol;
        if !premise {
            premise_violations.push(index);
        }
        if !bridge {
            bridge_violations.push(index);
        }
        if !holds {
            condition_violations.push(index);
        }
        if premise && bridge && !holds {
            consistent = false;
        }
        samples.push(AuditSample {
            index,
            min_curvature,
            vnu_over_v,
            vnu_minus_v: (curvature == Curvature::Hyperbolic).then_some(s.v_nu - s.v),
            v_nu: s.v_nu,
            condition,
        });
    }
    let (premise, bridge) = match curvature {
        Curvature::Hyperbolic => ("horoconvex", "V_nu < V"),
        Curvature::Spherical => ("convex", "V_nu <= 0"),
        Curvature::Euclidean => ("convex", "V_nu = 0"),
    };
    let chain = ImplicationChain {
        premise,
        premise_holds: premise_violations.is_empty(),
        bridge,
        bridge_holds: bridge_violations.is_empty(),
        condition_holds: condition_violations.is_empty(),
        consistent,
    };
    Ok(HypothesisAudit {
        samples,
        premise_violations,
        bridge_violations,
        condition_violations,
        chain,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::Shape;
    use crate::SpaceForm;
    use std::f64::consts::{FRAC_PI_4, PI};

    fn star(eps: f64) -> Shape {
        Shape::fourier(vec![1.0, 0.0, 0.0, 0.0, 0.0, eps, 0.0])
    }

    #[test]
    fn closed_form_ball_identity() {
        let (s, c) = (1f64.sinh(), 1f64.cosh());
        let area = 2.0 * PI * c * s;
        let lhs = area * area;
        let rhs = 2.0 * (PI * s * s) * (2.0 * PI * c * c);
        assert!((lhs - rhs).abs() < 1e-12 * lhs);
        // hemisphere, R = pi/4: pi^2 - 2 (pi/2) pi
        assert_eq!(PI * PI - 2.0 * (PI / 2.0) * PI, 0.0);
    }

    #[test]
    fn balls_are_equality_cases() {
        for (k, d, big_r) in [(-1, 0.0, 1.0), (1, 0.0, FRAC_PI_4), (0, 0.0, 1.0), (-1, 0.5, 0.7), (1, 0.2, 0.5)] {
            let space = SpaceForm::from_sign(k, 2).unwrap();
            let dom = Domain::new(space, Shape::ball(d, big_r), Resolution::new(64)).unwrap();
            let rep = minkowski_report(&dom).unwrap();
            assert!(rep.normalized_deficit.abs() < 1e-8, "k={k} d={d}: {:e}", rep.normalized_deficit);
            assert!(rep.equality_flag && rep.hypothesis_satisfied);
        }
    }

    #[test]
    fn perturbed_star_has_quadratic_deficit() {
        let h2 = SpaceForm::hyperbolic(2).unwrap();
        let eps = [0.025, 0.05, 0.1];
        let defs: Vec<f64> = eps
            .iter()
            .map(|&e| {
                let d = Domain::new(h2, star(e), Resolution::new(128)).unwrap();
                let rep = minkowski_report(&d).unwrap();
                assert!(rep.normalized_deficit > 0.0 && !rep.equality_flag);
                rep.normalized_deficit
            })
            .collect();
        let slope = (defs[2] / defs[0]).ln() / (eps[2] / eps[0]).ln();
        assert!((1.8..=2.2).contains(&slope), "slope {slope}");
    }

    #[test]
    fn audit_of_balls() {
        let h2 = SpaceForm::hyperbolic(2).unwrap();
        let d = Domain::new(h2, Shape::ball(0.0, 1.0), Resolution::new(32)).unwrap();
        let a = hypothesis_audit(&d).unwrap();
        for s in &a.samples {
            assert!((s.min_curvature - 1.0 / 1f64.tanh()).abs() < 1e-12);
            assert!((s.vnu_minus_v.unwrap() - (1f64.sinh() - 1f64.cosh())).abs() < 1e-12);
        }
        assert!(a.chain.premise_holds && a.chain.bridge_holds && a.chain.condition_holds);
        let s2 = SpaceForm::hemisphere(2).unwrap();
        let d = Domain::new(s2, Shape::ball(0.0, FRAC_PI_4), Resolution::new(32)).unwrap();
        let a = hypothesis_audit(&d).unwrap();
        for s in &a.samples {
            assert!((s.v_nu + 0.5f64.sqrt()).abs() < 1e-12);
        }
        assert_eq!(a.chain.premise, "convex");
        assert!(a.chain.premise_holds && a.chain.bridge_holds && a.chain.condition_holds);
    }

    #[test]
    fn audit_lists_horoconvexity_violations() {
        let h2 = SpaceForm::hyperbolic(2).unwrap();
        let d = Domain::new(h2, Shape::fourier(vec![1.0, 0.0, 0.0, 0.3, 0.0]), Resolution::new(64)).unwrap();
        let a = hypothesis_audit(&d).unwrap();
        assert!(!a.chain.premise_holds);
        assert!(!a.premise_violations.is_empty());
        assert!(a.premise_violations.iter().all(|&i| a.samples[i].min_curvature < 1.0));
        assert!(a.chain.consistent);
    }

    #[test]
    fn euclidean_audit_is_plain_convexity() {
        let e2 = SpaceForm::euclidean(2).unwrap();
        let d = Domain::new(e2, star(0.02), Resolution::new(64)).unwrap();
        let a = hypothesis_audit(&d).unwrap();
        for s in &a.samples {
            assert_eq!(s.v_nu, 0.0);
            assert_eq!(s.condition, s.min_curvature);
        }
    }
}
