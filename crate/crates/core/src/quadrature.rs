//! Weighted volume, area and mean-curvature integrals, and their closed forms
//! for geodesic balls.

use std::f64::consts::PI;

use crate::domain::{BoundaryGeometry, Domain};
use crate::error::{Error, Result};
use crate::spaceform::{trig, Curvature, PolarPoint, SpaceForm};
use crate::spectral::neumaier_sum;

/// The integrals entering the weighted Minkowski inequality.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct WeightedIntegrals {
    /// `int_Omega V`
    pub weighted_volume: f64,
    /// `int_M V`
    pub weighted_area: f64,
    /// `int_M H V`
    pub weighted_mean_curv: f64,
    pub unweighted_volume: f64,
    pub unweighted_area: f64,
}

impl WeightedIntegrals {
    /// `(int_M V)^2 - n int_Omega V int_M H V`.
    pub fn deficit(&self, n: usize) -> f64 {
        self.weighted_area * self.weighted_area
            - n as f64 * self.weighted_volume * self.weighted_mean_curv
    }

    pub fn normalized_deficit(&self, n: usize) -> f64 {
        self.deficit(n) / (self.weighted_area * self.weighted_area)
    }
}

/// `int_Omega F` on the polar interior grid.
pub fn integrate_domain<F>(domain: &Domain, integrand: F) -> Result<f64>
where
    F: Fn(&PolarPoint) -> Result<f64>,
{
    let grid = domain.interior();
    let terms = grid
        .points
        .iter()
        .zip(&grid.weights)
        .map(|(x, w)| Ok(w * integrand(x)?))
        .collect::<Result<Vec<f64>>>()?;
    Ok(neumaier_sum(terms))
}

pub fn weighted_integrals(domain: &Domain) -> Result<WeightedIntegrals> {
    let k = domain.space().k();
    let bg = domain.boundary();
    let grid = domain.interior();
    let weighted_volume = neumaier_sum(
        grid.points
            .iter()
            .zip(&grid.weights)
            .map(|(x, w)| w * trig(k, x.r).1),
    );
    let unweighted_volume = neumaier_sum(grid.weights.iter().copied());
    let v: Vec<f64> = bg.samples().iter().map(|s| s.v).collect();
    let hv: Vec<f64> = bg.samples().iter().map(|s| s.v * s.mean_curvature).collect();
    Ok(WeightedIntegrals {
        weighted_volume,
        weighted_area: bg.integrate(&v),
        weighted_mean_curv: bg.integrate(&hv),
        unweighted_volume,
        unweighted_area: bg.area(),
    })
}

/// Area of the unit sphere S^m, from `|S^m| = 2 pi |S^{m-2}| / (m - 1)`.
pub fn unit_sphere_area(m: usize) -> f64 {
    match m {
        0 => 2.0,
        1 => 2.0 * PI,
        _ => 2.0 * PI * unit_sphere_area(m - 2) / (m - 1) as f64,
    }
}

/// Closed forms for the geodesic ball `B_R(p)`.
pub fn ball_closed_forms(space: &SpaceForm, big_r: f64) -> Result<WeightedIntegrals> {
    if !(big_r > 0.0) {
        return Err(Error::Domain(format!("ball radius must be positive, got {big_r}")));
    }
    let (sn, cs) = space.warp(big_r)?;
    let n = space.dim();
    let omega = unit_sphere_area(n - 1);
    let ni = n as i32;
    // int_0^R sn^{n-1}
    let radial = match (space.curvature(), n) {
        (Curvature::Hyperbolic, 2) => cs - 1.0,
        (Curvature::Euclidean, 2) => 0.5 * big_r * big_r,
        (Curvature::Spherical, 2) => 1.0 - cs,
        (Curvature::Hyperbolic, _) => 0.5 * (sn * cs - big_r),
        (Curvature::Euclidean, _) => big_r.powi(3) / 3.0,
        (Curvature::Spherical, _) => 0.5 * (big_r - sn * cs),
    };
    Ok(WeightedIntegrals {
        weighted_volume: omega / n as f64 * sn.powi(ni),
        weighted_area: omega * cs * sn.powi(ni - 1),
        weighted_mean_curv: omega * cs * cs * sn.powi(ni - 2),
        unweighted_volume: omega * radial,
        unweighted_area: omega * sn.powi(ni - 1),
    })
}

/// Relative residual `|int_M V - int_M H <sn(r) d_r, nu>| / int_M V` of the
/// Minkowski formula. The support function `<sn d_r, nu>` equals `V_nu` in
/// hyperbolic space and `-V_nu` on the hemisphere.
pub fn minkowski_formula_residual(bg: &BoundaryGeometry) -> f64 {
    let k = bg.space().k();
    let v: Vec<f64> = bg.samples().iter().map(|s| s.v).collect();
    let hs: Vec<f64> = bg
        .samples()
        .iter()
        .map(|s| s.mean_curvature * trig(k, s.position.r).0 * s.normal[0])
        .collect();
    let lhs = bg.integrate(&v);
    (lhs - bg.integrate(&hs)).abs() / lhs
}

/// `int_Omega V / int_M V`, the only constant for which the weighted Neumann
/// problem is solvable.
pub fn compatibility_constant(domain: &Domain) -> Result<f64> {
    let w = weighted_integrals(domain)?;
    Ok(w.weighted_volume / w.weighted_area)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Resolution, Shape};
    use std::f64::consts::FRAC_PI_4;

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1e-300)
    }

    #[test]
    fn sphere_areas() {
        assert!((unit_sphere_area(2) - 4.0 * PI).abs() < 1e-14);
        assert!((unit_sphere_area(3) - 2.0 * PI * PI).abs() < 1e-13);
    }

    #[test]
    fn closed_form_examples() {
        let h2 = SpaceForm::hyperbolic(2).unwrap();
        let c = ball_closed_forms(&h2, 1.0).unwrap();
        assert!((c.weighted_area - 11.394118).abs() < 1e-6);
        assert!((c.weighted_mean_curv - 14.960879).abs() < 1e-6);
        assert!((c.weighted_volume - 4.3388468).abs() < 1e-7);
        let h3 = SpaceForm::hyperbolic(3).unwrap();
        let c = ball_closed_forms(&h3, 0.5).unwrap();
        assert!((c.weighted_volume - 4.0 * PI / 3.0 * 0.5f64.sinh().powi(3)).abs() < 1e-15);
        assert!((c.weighted_volume - 0.5927070).abs() < 1e-7);
        let s2 = SpaceForm::hemisphere(2).unwrap();
        let c = ball_closed_forms(&s2, FRAC_PI_4).unwrap();
        assert!(rel(c.weighted_area, PI) < 1e-15);
        assert!(rel(c.weighted_mean_curv, PI) < 1e-15);
        assert!(rel(c.weighted_volume, PI / 2.0) < 1e-15);
        assert!(ball_closed_forms(&s2, 1.6).is_err());
    }

    #[test]
    fn quadrature_matches_closed_forms() {
        for k in [-1, 0, 1] {
            for n in [2, 3] {
                let space = SpaceForm::from_sign(k, n).unwrap();
                let big_r = if k == 1 { 0.9 } else { 1.2 };
                let d = Domain::new(space, Shape::ball(0.0, big_r), Resolution::new(64)).unwrap();
                let q = weighted_integrals(&d).unwrap();
                let c = ball_closed_forms(&space, big_r).unwrap();
                assert!(rel(q.weighted_volume, c.weighted_volume) < 1e-10, "k={k} n={n}");
                assert!(rel(q.weighted_area, c.weighted_area) < 1e-10);
                assert!(rel(q.weighted_mean_curv, c.weighted_mean_curv) < 1e-10);
                assert!(rel(q.unweighted_volume, c.unweighted_volume) < 1e-10);
                assert!(rel(q.unweighted_area, c.unweighted_area) < 1e-10);
                assert!(minkowski_formula_residual(d.boundary()) < 1e-13);
            }
        }
    }

    #[test]
    fn integrate_examples() {
        let h2 = SpaceForm::hyperbolic(2).unwrap();
        let d = Domain::new(h2, Shape::ball(0.0, 1.0), Resolution::new(64)).unwrap();
        let v = integrate_domain(&d, |x| Ok(x.r.cosh())).unwrap();
        assert!((v - PI * 1f64.sinh().powi(2)).abs() < 1e-12);
        assert_eq!(integrate_domain(&d, |_| Ok(0.0)).unwrap(), 0.0);
        let s2 = SpaceForm::hemisphere(2).unwrap();
        let d = Domain::new(s2, Shape::ball(0.0, FRAC_PI_4), Resolution::new(64)).unwrap();
        let v = integrate_domain(&d, |x| Ok(x.r.cos())).unwrap();
        assert!((v - PI / 2.0).abs() < 1e-13);
    }

    #[test]
    fn minkowski_formula_on_general_boundaries() {
        let h2 = SpaceForm::hyperbolic(2).unwrap();
        let off = Domain::new(h2, Shape::ball(0.5, 0.7), Resolution::new(128)).unwrap();
        assert!(minkowski_formula_residual(off.boundary()) < 1e-8);
        let star = Domain::new(
            h2,
            Shape::fourier(vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.05, 0.0]),
            Resolution::new(128),
        )
        .unwrap();
        assert!(minkowski_formula_residual(star.boundary()) < 1e-8);
        let s3 = SpaceForm::hemisphere(3).unwrap();
        let off = Domain::new(s3, Shape::ball(0.2, 0.5), Resolution::new(32)).unwrap();
        assert!(minkowski_formula_residual(off.boundary()) < 1e-8);
    }
}
