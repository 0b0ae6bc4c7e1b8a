//! Star-shaped domains about the base point and the extrinsic geometry of
//! their boundaries.
//!
//! Every domain is a radial graph `r = rho(theta)`. Off-center balls are
//! converted to this form with the space-form law of cosines; the offset is
//! taken along `theta = 0` for n = 2 and along the polar axis for n = 3, so
//! three-dimensional domains are always axisymmetric.

use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::spaceform::{trig, Curvature, PolarPoint, SpaceForm, HEMISPHERE_GUARD};
use crate::spectral::{fejer_colatitude, gauss_legendre_unit, neumaier_sum, periodic_derivative};

/// Axisymmetric profile `rho(phi) = sum_{k < m} c_k cos(k phi)` through `m`
/// nodes on `[0, pi]`. Even in `phi` about both poles, so the surface is
/// smooth there.
#[derive(Clone, Debug, PartialEq)]
pub struct ProfileCurve {
    nodes: Vec<(f64, f64)>,
    coeffs: Vec<f64>,
}

impl ProfileCurve {
    pub fn new(nodes: &[(f64, f64)]) -> Result<Self> {
        let m = nodes.len();
        let a = DMatrix::from_fn(m, m, |i, k| (k as f64 * nodes[i].0).cos());
        let y = DVector::from_iterator(m, nodes.iter().map(|p| p.1));
        let coeffs = a
            .lu()
            .solve(&y)
            .filter(|c| c.iter().all(|v| v.is_finite()))
            .ok_or_else(|| Error::Domain("profile interpolation system is singular".into()))?;
        Ok(ProfileCurve {
            nodes: nodes.to_vec(),
            coeffs: coeffs.iter().copied().collect(),
        })
    }

    /// Value and first two derivatives at `t`.
    pub fn eval(&self, t: f64) -> (f64, f64, f64) {
        let mut out = (0.0, 0.0, 0.0);
        for (k, c) in self.coeffs.iter().enumerate() {
            let kf = k as f64;
            let (sk, ck) = (kf * t).sin_cos();
            out.0 += c * ck;
            out.1 -= c * kf * sk;
            out.2 -= c * kf * kf * ck;
        }
        out
    }

    pub fn nodes(&self) -> Vec<(f64, f64)> {
        self.nodes.clone()
    }
}

/// Shape of the domain.
#[derive(Clone, Debug, PartialEq)]
pub enum Shape {
    /// Geodesic ball of radius `radius` whose center lies at distance
    /// `offset` from the base point.
    Ball { offset: f64, radius: f64 },
    /// n = 2 radial graph `rho = a0 + sum_k a_k cos k theta + b_k sin k theta`,
    /// coefficients stored as `[a0, a1, b1, a2, b2, ...]`.
    Fourier { coeffs: Vec<f64> },
    /// n = 3 axisymmetric radial graph interpolating `(phi, rho)` samples.
    Profile { curve: ProfileCurve },
}

impl Shape {
    pub fn ball(offset: f64, radius: f64) -> Self {
        Shape::Ball { offset, radius }
    }

    pub fn fourier(coeffs: Vec<f64>) -> Self {
        Shape::Fourier { coeffs }
    }

    pub fn profile(nodes: &[(f64, f64)]) -> Result<Self> {
        if nodes.len() < 4 {
            return Err(invalid("profile_nodes", "a profile needs at least 4 nodes"));
        }
        let first = nodes[0].0;
        let last = nodes[nodes.len() - 1].0;
        let increasing = nodes.windows(2).all(|w| w[1].0 > w[0].0);
        if !increasing || first.abs() > 1e-12 || (last - PI).abs() > 1e-12 {
            return Err(invalid(
                "profile_range",
                "profile colatitudes must increase strictly from 0 to pi",
            ));
        }
        Ok(Shape::Profile {
            curve: ProfileCurve::new(nodes)?,
        })
    }

    pub fn is_ball(&self) -> bool {
        matches!(self, Shape::Ball { .. })
    }
}

/// Boundary sample count and radial quadrature order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Resolution {
    pub boundary: usize,
    pub radial: usize,
}

impl Resolution {
    /// `level` boundary samples and `max(16, level / 4)` radial nodes. For
    /// n = 3 the boundary grid is `level / 2` colatitudes by `level`
    /// longitudes.
    pub fn new(level: usize) -> Self {
        Resolution {
            boundary: level,
            radial: (level / 4).max(16),
        }
    }
}

/// Sampling layout of the boundary.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layout {
    Curve { count: usize },
    Surface { colat: usize, lon: usize },
}

/// Geometry at one boundary sample. Vectors are components in the polar
/// frame at `position`; `h` is expressed in `tangent_frame`.
#[derive(Clone, Debug, PartialEq)]
pub struct BoundarySample {
    pub position: PolarPoint,
    pub normal: DVector<f64>,
    pub tangent_frame: Vec<DVector<f64>>,
    pub area_weight: f64,
    pub h: DMatrix<f64>,
    pub mean_curvature: f64,
    pub v: f64,
    pub v_nu: f64,
    /// Radial function and its first two derivatives in the graph angle.
    pub rho: (f64, f64, f64),
    /// Length of the graph-angle coordinate vector.
    pub metric_len: f64,
    /// Length of the longitude coordinate vector (n = 3 only, else 1).
    pub lon_len: f64,
}

/// Boundary samples plus spectral intrinsic calculus on the boundary.
#[derive(Clone, Debug)]
pub struct BoundaryGeometry {
    space: SpaceForm,
    layout: Layout,
    samples: Vec<BoundarySample>,
}

/// Polar quadrature grid of the interior: rays through boundary directions
/// with Gauss-Legendre nodes along each ray.
#[derive(Clone, Debug)]
pub struct InteriorGrid {
    pub points: Vec<PolarPoint>,
    pub weights: Vec<f64>,
}

#[derive(Debug)]
pub struct Domain {
    space: SpaceForm,
    shape: Shape,
    resolution: Resolution,
    geometry: BoundaryGeometry,
    grid: OnceLock<InteriorGrid>,
}

impl Clone for Domain {
    fn clone(&self) -> Self {
        Domain {
            space: self.space,
            shape: self.shape.clone(),
            resolution: self.resolution,
            geometry: self.geometry.clone(),
            grid: self.grid.clone(),
        }
    }
}

fn invalid(invariant: &'static str, detail: impl Into<String>) -> Error {
    Error::InvalidDomain {
        invariant,
        detail: detail.into(),
    }
}

/// Radial function of an off-center ball and its first two derivatives in
/// the angle `g` measured from the offset axis.
fn ball_radial(k: Curvature, d: f64, big_r: f64, g: f64) -> (f64, f64, f64) {
    let (sg, cg) = g.sin_cos();
    // rho, then the partials of the law-of-cosines residual G(rho, g)
    let (rho, gr, grr, gg, ggg, grg) = match k {
        Curvature::Hyperbolic => {
            let (a, b) = (d.cosh(), d.sinh() * cg);
            let delta = (b / a).atanh();
            let rho = delta + (big_r.cosh() / (a * a - b * b).sqrt()).acosh();
            let (sr, cr) = (rho.sinh(), rho.cosh());
            let sd = d.sinh();
            (
                rho,
                a * sr - b * cr,
                a * cr - b * sr,
                sd * sg * sr,
                sd * cg * sr,
                sd * sg * cr,
            )
        }
        Curvature::Spherical => {
            let (a, b) = (d.cos(), d.sin() * cg);
            let delta = b.atan2(a);
            let rho = delta + (big_r.cos() / (a * a + b * b).sqrt()).acos();
            let (sr, cr) = rho.sin_cos();
            let sd = d.sin();
            (
                rho,
                -a * sr + b * cr,
                -a * cr - b * sr,
                -sd * sg * sr,
                -sd * cg * sr,
                -sd * sg * cr,
            )
        }
        Curvature::Euclidean => {
            let rho = d * cg + (big_r * big_r - d * d * sg * sg).sqrt();
            (
                rho,
                2.0 * rho - 2.0 * d * cg,
                2.0,
                2.0 * rho * d * sg,
                2.0 * rho * d * cg,
                2.0 * d * sg,
            )
        }
    };
    let d1 = -gg / gr;
    let d2 = -(ggg + 2.0 * grg * d1 + grr * d1 * d1) / gr;
    (rho, d1, d2)
}

fn fourier_radial(coeffs: &[f64], t: f64) -> (f64, f64, f64) {
    let mut v = coeffs[0];
    let mut d1 = 0.0;
    let mut d2 = 0.0;
    for (i, pair) in coeffs[1..].chunks(2).enumerate() {
        let k = (i + 1) as f64;
        let (s, c) = (k * t).sin_cos();
        let a = pair[0];
        let b = pair.get(1).copied().unwrap_or(0.0);
        v += a * c + b * s;
        d1 += k * (-a * s + b * c);
        d2 += -k * k * (a * c + b * s);
    }
    (v, d1, d2)
}

impl Domain {
    pub fn new(space: SpaceForm, shape: Shape, resolution: Resolution) -> Result<Self> {
        let n = space.dim();
        if resolution.boundary < 8 || resolution.boundary % 2 != 0 {
            return Err(invalid(
                "resolution",
                format!("boundary resolution must be even and >= 8, got {}", resolution.boundary),
            ));
        }
        if resolution.radial < 4 {
            return Err(invalid("resolution", "radial order must be >= 4"));
        }
        let limit = FRAC_PI_2 - HEMISPHERE_GUARD;
        let spherical = space.curvature() == Curvature::Spherical;
        match &shape {
            Shape::Ball { offset, radius } => {
                if !(radius.is_finite() && *radius > 0.0) {
                    return Err(invalid("radius_positive", format!("R = {radius}")));
                }
                if !(offset.is_finite() && *offset >= 0.0) {
                    return Err(invalid("offset_nonnegative", format!("d = {offset}")));
                }
                if offset >= radius {
                    return Err(invalid(
                        "base_point_inside",
                        format!("offset d = {offset} must be below R = {radius} so the ball is a radial graph"),
                    ));
                }
                if spherical && offset + radius >= limit {
                    return Err(invalid(
                        "hemisphere",
                        format!("d + R = {} must stay below pi/2", offset + radius),
                    ));
                }
            }
            Shape::Fourier { coeffs } => {
                if n != 2 {
                    return Err(invalid("fourier_dimension", "Fourier radial graphs need n = 2"));
                }
                if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) {
                    return Err(invalid("fourier_layout", "coefficients must be finite and start with a0"));
                }
            }
            Shape::Profile { .. } => {
                if n != 3 {
                    return Err(invalid("profile_dimension", "profile radial graphs need n = 3"));
                }
            }
        }
        if !shape.is_ball() {
            let probe = 4096;
            let span = if n == 2 { TAU } else { PI };
            let mut lo = f64::INFINITY;
            let mut hi: f64 = 0.0;
            for j in 0..=probe {
                let t = span * j as f64 / probe as f64;
                let r = radial_of(&space, &shape, t).0;
                lo = lo.min(r);
                hi = hi.max(r);
            }
            if !(lo > 0.0) {
                return Err(invalid("radial_positive", format!("min rho = {lo}")));
            }
            if spherical && hi >= limit {
                return Err(invalid("hemisphere", format!("max rho = {hi} must stay below pi/2")));
            }
        }
        let geometry = BoundaryGeometry::build(&space, &shape, resolution);
        Ok(Domain {
            space,
            shape,
            resolution,
            geometry,
            grid: OnceLock::new(),
        })
    }

    /// Same shape at another resolution.
    pub fn with_resolution(&self, resolution: Resolution) -> Result<Self> {
        Domain::new(self.space, self.shape.clone(), resolution)
    }

    pub fn space(&self) -> &SpaceForm {
        &self.space
    }

    pub fn shape(&self) -> &Shape {
        &self.shape
    }

    pub fn resolution(&self) -> Resolution {
        self.resolution
    }

    pub fn boundary(&self) -> &BoundaryGeometry {
        &self.geometry
    }

    /// `(rho, rho', rho'')` in the graph angle (theta for n = 2, colatitude
    /// for n = 3).
    pub fn radial(&self, angle: f64) -> (f64, f64, f64) {
        radial_of(&self.space, &self.shape, angle)
    }

    pub fn max_radius(&self) -> f64 {
        self.geometry
            .samples
            .iter()
            .map(|s| s.position.r)
            .fold(0.0, f64::max)
    }

    pub fn min_radius(&self) -> f64 {
        self.geometry
            .samples
            .iter()
            .map(|s| s.position.r)
            .fold(f64::INFINITY, f64::min)
    }

    /// Interior quadrature grid, built on first use.
    pub fn interior(&self) -> &InteriorGrid {
        self.grid.get_or_init(|| self.build_interior(self.resolution.radial))
    }

    /// Interior grid with a custom radial order.
    pub fn interior_with_radial(&self, radial: usize) -> InteriorGrid {
        if radial == self.resolution.radial {
            return self.interior().clone();
        }
        self.build_interior(radial)
    }

    fn build_interior(&self, radial: usize) -> InteriorGrid {
        let k = self.space.k();
        let n = self.space.dim();
        let gl = gauss_legendre_unit(radial).expect("radial order validated");
        let mut points = Vec::new();
        let mut weights = Vec::new();
        for (dir, w_dir) in self.geometry.directions() {
            let rho = self.radial(dir.0).0;
            for &(s, w) in &gl {
                let r = s * rho;
                let sn = trig(k, r).0;
                points.push(match self.geometry.layout {
                    Layout::Curve { .. } => PolarPoint::planar(r, dir.0),
                    Layout::Surface { .. } => PolarPoint::spatial(r, dir.0, dir.1),
                });
                weights.push(w_dir * rho * w * sn.powi(n as i32 - 1));
            }
        }
        InteriorGrid { points, weights }
    }
}

fn radial_of(space: &SpaceForm, shape: &Shape, angle: f64) -> (f64, f64, f64) {
    match shape {
        Shape::Ball { offset, radius } => ball_radial(space.curvature(), *offset, *radius, angle),
        Shape::Fourier { coeffs } => fourier_radial(coeffs, angle),
        Shape::Profile { curve } => curve.eval(angle),
    }
}

fn ambient(parts: (f64, &DVector<f64>)) -> DVector<f64> {
    let mut out = DVector::zeros(parts.1.len() + 1);
    out[0] = parts.0;
    for i in 0..parts.1.len() {
        out[i + 1] = parts.1[i];
    }
    out
}

impl BoundaryGeometry {
    fn build(space: &SpaceForm, shape: &Shape, res: Resolution) -> Self {
        let n = space.dim();
        let mut samples = Vec::new();
        let layout = if n == 2 {
            Layout::Curve {
                count: res.boundary,
            }
        } else {
            Layout::Surface {
                colat: res.boundary / 2,
                lon: res.boundary,
            }
        };
        match layout {
            Layout::Curve { count } => {
                for j in 0..count {
                    let th = TAU * j as f64 / count as f64;
                    let rho = radial_of(space, shape, th);
                    samples.push(curve_sample(space, th, rho, TAU / count as f64));
                }
            }
            Layout::Surface { colat, lon } => {
                let rule = fejer_colatitude(colat);
                for &(phi, w) in &rule {
                    let rho = radial_of(space, shape, phi);
                    for l in 0..lon {
                        let lam = TAU * l as f64 / lon as f64;
                        samples.push(surface_sample(space, phi, lam, rho, w * TAU / lon as f64));
                    }
                }
            }
        }
        BoundaryGeometry {
            space: *space,
            layout,
            samples,
        }
    }

    pub fn space(&self) -> &SpaceForm {
        &self.space
    }

    pub fn layout(&self) -> Layout {
        self.layout
    }

    pub fn samples(&self) -> &[BoundarySample] {
        &self.samples
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Ray directions of the samples as `(graph angle, longitude)` with the
    /// matching weight on the sphere of directions.
    fn directions(&self) -> Vec<((f64, f64), f64)> {
        match self.layout {
            Layout::Curve { count } => (0..count)
                .map(|j| ((TAU * j as f64 / count as f64, 0.0), TAU / count as f64))
                .collect(),
            Layout::Surface { colat, lon } => {
                let mut out = Vec::new();
                for &(phi, w) in &fejer_colatitude(colat) {
                    for l in 0..lon {
                        out.push(((phi, TAU * l as f64 / lon as f64), w * TAU / lon as f64));
                    }
                }
                out
            }
        }
    }

    /// `sum_i area_weight_i values_i`.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        neumaier_sum(self.samples.iter().zip(values).map(|(s, v)| s.area_weight * v))
    }

    pub fn area(&self) -> f64 {
        neumaier_sum(self.samples.iter().map(|s| s.area_weight))
    }

    /// Tangential gradient of boundary data, in each sample's tangent frame.
    pub fn gradient(&self, z: &[f64]) -> Vec<DVector<f64>> {
        match self.layout {
            Layout::Curve { .. } => {
                let dz = periodic_derivative(z, 1);
                self.samples
                    .iter()
                    .zip(dz)
                    .map(|(s, d)| DVector::from_element(1, d / s.metric_len))
                    .collect()
            }
            Layout::Surface { colat, lon } => {
                let z_phi = self.colatitude_derivative(z, colat, lon);
                let z_lam = self.longitude_derivative(z, colat, lon, 1);
                self.samples
                    .iter()
                    .enumerate()
                    .map(|(i, s)| {
                        DVector::from_vec(vec![z_phi[i] / s.metric_len, z_lam[i] / s.lon_len])
                    })
                    .collect()
            }
        }
    }

    /// Intrinsic Laplace-Beltrami operator of boundary data.
    pub fn laplacian(&self, z: &[f64]) -> Vec<f64> {
        match self.layout {
            Layout::Curve { .. } => {
                let dz = periodic_derivative(z, 1);
                let flux: Vec<f64> = dz
                    .iter()
                    .zip(&self.samples)
                    .map(|(d, s)| d / s.metric_len)
                    .collect();
                periodic_derivative(&flux, 1)
                    .iter()
                    .zip(&self.samples)
                    .map(|(d, s)| d / s.metric_len)
                    .collect()
            }
            Layout::Surface { colat, lon } => {
                let z_phi = self.colatitude_derivative(z, colat, lon);
                let flux: Vec<f64> = z_phi
                    .iter()
                    .zip(&self.samples)
                    .map(|(d, s)| d * s.lon_len / s.metric_len)
                    .collect();
                let div = self.colatitude_derivative(&flux, colat, lon);
                let z_ll = self.longitude_derivative(z, colat, lon, 2);
                self.samples
                    .iter()
                    .enumerate()
                    .map(|(i, s)| {
                        div[i] / (s.metric_len * s.lon_len) + z_ll[i] / (s.lon_len * s.lon_len)
                    })
                    .collect()
            }
        }
    }

    /// Colatitude derivative of data that is smooth on the sphere, by
    /// continuing each meridian through the poles onto the opposite one.
    fn colatitude_derivative(&self, z: &[f64], colat: usize, lon: usize) -> Vec<f64> {
        let mut out = vec![0.0; z.len()];
        let mut circle = vec![0.0; 2 * colat];
        for l in 0..lon {
            let opposite = (l + lon / 2) % lon;
            for m in 0..colat {
                circle[m] = z[m * lon + l];
                circle[2 * colat - 1 - m] = z[m * lon + opposite];
            }
            let d = periodic_derivative(&circle, 1);
            for m in 0..colat {
                out[m * lon + l] = d[m];
            }
        }
        out
    }

    fn longitude_derivative(&self, z: &[f64], colat: usize, lon: usize, order: u32) -> Vec<f64> {
        let mut out = vec![0.0; z.len()];
        for m in 0..colat {
            let ring = &z[m * lon..(m + 1) * lon];
            let d = periodic_derivative(ring, order);
            out[m * lon..(m + 1) * lon].copy_from_slice(&d);
        }
        out
    }

    /// Values of a function of position at every sample.
    pub fn trace<F>(&self, f: F) -> Result<Vec<f64>>
    where
        F: Fn(&PolarPoint) -> Result<f64>,
    {
        self.samples.iter().map(|s| f(&s.position)).collect()
    }
}

fn curve_sample(space: &SpaceForm, th: f64, rho: (f64, f64, f64), dtheta: f64) -> BoundarySample {
    let k = space.k();
    let (r, d1, d2) = rho;
    let (sn, cs) = trig(k, r);
    let len = (d1 * d1 + sn * sn).sqrt();
    let normal = DVector::from_vec(vec![sn / len, -d1 / len]);
    let tangent = DVector::from_vec(vec![d1 / len, sn / len]);
    let (s_t, c_t) = th.sin_cos();
    let u = DVector::from_vec(vec![c_t, s_t]);
    let u_t = DVector::from_vec(vec![-s_t, c_t]);
    let x_tt = ambient((
        -k * (cs * d1 * d1 + sn * d2),
        &(&u * (-k * sn * d1 * d1 + cs * d2) + &u_t * (2.0 * cs * d1) - &u * sn),
    ));
    let nu = ambient((-k * sn * sn / len, &(&u * (cs * sn / len) - &u_t * (d1 / len))));
    let h11 = -space.inner(&nu, &x_tt) / (len * len);
    BoundarySample {
        position: PolarPoint::planar(r, th),
        normal,
        tangent_frame: vec![tangent],
        area_weight: len * dtheta,
        h: DMatrix::from_element(1, 1, h11),
        mean_curvature: h11,
        v: cs,
        v_nu: -k * sn * sn / len,
        rho,
        metric_len: len,
        lon_len: 1.0,
    }
}

fn surface_sample(
    space: &SpaceForm,
    phi: f64,
    lam: f64,
    rho: (f64, f64, f64),
    weight: f64,
) -> BoundarySample {
    let k = space.k();
    let (r, d1, d2) = rho;
    let (sn, cs) = trig(k, r);
    let len = (d1 * d1 + sn * sn).sqrt();
    let (sp, cp) = phi.sin_cos();
    let (sl, cl) = lam.sin_cos();
    let u = DVector::from_vec(vec![sp * cl, sp * sl, cp]);
    let u_p = DVector::from_vec(vec![cp * cl, cp * sl, -sp]);
    let e_l = DVector::from_vec(vec![-sl, cl, 0.0]);
    let u_ll = DVector::from_vec(vec![-sp * cl, -sp * sl, 0.0]);
    let lon_len = sn * sp;
    let nu = ambient((-k * sn * sn / len, &(&u * (cs * sn / len) - &u_p * (d1 / len))));
    let x_pp = ambient((
        -k * (cs * d1 * d1 + sn * d2),
        &(&u * (-k * sn * d1 * d1 + cs * d2) + &u_p * (2.0 * cs * d1) - &u * sn),
    ));
    let x_ll = ambient((0.0, &(&u_ll * sn)));
    let x_pl = ambient((0.0, &(&e_l * (cs * d1 * sp + sn * cp))));
    let h11 = -space.inner(&nu, &x_pp) / (len * len);
    let h22 = -space.inner(&nu, &x_ll) / (lon_len * lon_len);
    let h12 = -space.inner(&nu, &x_pl) / (len * lon_len);
    let h = DMatrix::from_row_slice(2, 2, &[h11, h12, h12, h22]);
    BoundarySample {
        position: PolarPoint::spatial(r, phi, lam),
        normal: DVector::from_vec(vec![sn / len, -d1 / len, 0.0]),
        tangent_frame: vec![
            DVector::from_vec(vec![d1 / len, sn / len, 0.0]),
            DVector::from_vec(vec![0.0, 0.0, 1.0]),
        ],
        area_weight: weight * len * sn,
        mean_curvature: 0.5 * (h11 + h22),
        h,
        v: cs,
        v_nu: -k * sn * sn / len,
        rho,
        metric_len: len,
        lon_len,
    }
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    match m.nrows() {
        1 => m[(0, 0)],
        2 => {
            let (a, b, c) = (m[(0, 0)], m[(0, 1)], m[(1, 1)]);
            0.5 * (a + c) - (0.25 * (a - c) * (a - c) + b * b).sqrt()
        }
        _ => SymmetricEigen::new(m.clone()).eigenvalues.min(),
    }
}

/// Per-sample smallest eigenvalue of `h - (V_nu / V) Id`.
pub fn convexity_profile(bg: &BoundaryGeometry) -> Result<Vec<f64>> {
    bg.samples
        .iter()
        .map(|s| {
            if !(s.v > 0.0) {
                return Err(Error::Precondition {
                    name: "positive_potential",
                    detail: format!("V = {} at r = {}", s.v, s.position.r),
                });
            }
            Ok(min_eigenvalue(&s.h) - s.v_nu / s.v)
        })
        .collect()
}

/// `min_i lambda_min(h - (V_nu / V) Id)`; nonnegative iff the weighted
/// convexity condition holds on the sampled boundary.
pub fn convexity_margin(bg: &BoundaryGeometry) -> Result<f64> {
    Ok(convexity_profile(bg)?.into_iter().fold(f64::INFINITY, f64::min))
}

/// `min_i lambda_min(h) - 1`, hyperbolic space only.
pub fn horoconvexity_margin(bg: &BoundaryGeometry) -> Result<f64> {
    if bg.space.curvature() != Curvature::Hyperbolic {
        return Err(Error::Unsupported(
            "horospherical convexity is only defined in hyperbolic space".into(),
        ));
    }
    Ok(bg
        .samples
        .iter()
        .map(|s| min_eigenvalue(&s.h) - 1.0)
        .fold(f64::INFINITY, f64::min))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn h2() -> SpaceForm {
        SpaceForm::hyperbolic(2).unwrap()
    }

    #[test]
    fn centered_ball_closed_forms() {
        let d = Domain::new(h2(), Shape::ball(0.0, 1.0), Resolution::new(64)).unwrap();
        for s in d.boundary().samples() {
            assert!((s.mean_curvature - 1.0 / 1f64.tanh()).abs() < 1e-13);
            assert!((s.mean_curvature - 1.3130352854993312).abs() < 1e-12);
            assert!((s.v - 1f64.cosh()).abs() < 1e-14);
            assert!((s.v_nu - 1f64.sinh()).abs() < 1e-14);
        }
        let s2 = SpaceForm::hemisphere(2).unwrap();
        let d = Domain::new(s2, Shape::ball(0.0, PI / 4.0), Resolution::new(16)).unwrap();
        for s in d.boundary().samples() {
            assert!((s.mean_curvature - 1.0).abs() < 1e-14);
            assert!((s.v_nu + 0.5f64.sqrt()).abs() < 1e-14);
        }
    }

    #[test]
    fn constant_star_matches_ball() {
        let a = Domain::new(h2(), Shape::ball(0.0, 1.0), Resolution::new(32)).unwrap();
        let b = Domain::new(h2(), Shape::fourier(vec![1.0]), Resolution::new(32)).unwrap();
        for (x, y) in a.boundary().samples().iter().zip(b.boundary().samples()) {
            assert!((x.mean_curvature - y.mean_curvature).abs() < 1e-12);
            assert!((x.v_nu - y.v_nu).abs() < 1e-12);
            assert!((x.area_weight - y.area_weight).abs() < 1e-12);
        }
    }

    #[test]
    fn off_center_ball_has_constant_curvature() {
        for (k, d, big_r) in [(-1, 0.5, 0.7), (0, 0.3, 1.0), (1, 0.2, 0.5)] {
            for n in [2, 3] {
                let space = SpaceForm::from_sign(k, n).unwrap();
                let dom = Domain::new(space, Shape::ball(d, big_r), Resolution::new(64)).unwrap();
                let (sn, cs) = trig(space.k(), big_r);
                let (vmin, vmax) = dom
                    .boundary()
                    .samples()
                    .iter()
                    .fold((f64::INFINITY, 0.0f64), |a, s| (a.0.min(s.v), a.1.max(s.v)));
                for s in dom.boundary().samples() {
                    assert!((s.mean_curvature - cs / sn).abs() < 1e-11, "k={k} n={n} {:?} {} {}", s.rho, s.h, cs / sn);
                    assert!((&s.h - DMatrix::identity(n - 1, n - 1) * (cs / sn)).amax() < 1e-11);
                }
                if k != 0 {
                    assert!(vmax - vmin > 1e-3);
                }
                let (sn, _) = trig(space.k(), big_r);
                let area = if n == 2 { TAU * sn } else { 2.0 * TAU * sn * sn };
                assert!((dom.boundary().area() - area).abs() < 1e-10 * area, "k={k} n={n} {} {}", dom.boundary().area(), area);
            }
        }
    }

    #[test]
    fn convexity_margins() {
        let ball = Domain::new(h2(), Shape::ball(0.0, 1.0), Resolution::new(32)).unwrap();
        let m = convexity_margin(ball.boundary()).unwrap();
        assert!((m - (1.0 / 1f64.tanh() - 1f64.tanh())).abs() < 1e-12);
        assert!((m - 0.5514411).abs() < 1e-7);
        let hm = horoconvexity_margin(ball.boundary()).unwrap();
        assert!((hm - 0.3130353).abs() < 1e-7);

        let big = Domain::new(h2(), Shape::ball(0.0, 10.0), Resolution::new(16)).unwrap();
        let hm = horoconvexity_margin(big.boundary()).unwrap();
        assert!(hm >= 0.0 && (hm - 4.122307e-9).abs() < 1e-13);

        let e2 = SpaceForm::euclidean(2).unwrap();
        let d = Domain::new(e2, Shape::ball(0.0, 2.0), Resolution::new(16)).unwrap();
        assert!((convexity_margin(d.boundary()).unwrap() - 0.5).abs() < 1e-14);
        assert!(horoconvexity_margin(d.boundary()).is_err());

        let star = |eps: f64, mode: usize, level: usize| {
            let mut c = vec![0.0; 2 * mode + 1];
            c[0] = 1.0;
            c[2 * mode - 1] = eps;
            Domain::new(h2(), Shape::fourier(c), Resolution::new(level)).unwrap()
        };
        let a = convexity_margin(star(0.05, 3, 64).boundary()).unwrap();
        let b = convexity_margin(star(0.05, 3, 128).boundary()).unwrap();
        assert!(a > 0.0 && (a - b).abs() < 1e-3 * a.abs());
        assert!(horoconvexity_margin(star(0.3, 2, 64).boundary()).unwrap() < 0.0);
    }

    #[test]
    fn intrinsic_calculus_on_geodesic_spheres() {
        // z = cos(phi) on a geodesic sphere of radius R is an eigenfunction
        // with eigenvalue -2 / sn(R)^2
        let space = SpaceForm::hyperbolic(3).unwrap();
        let big_r = 0.8;
        let dom = Domain::new(space, Shape::ball(0.0, big_r), Resolution::new(24)).unwrap();
        let bg = dom.boundary();
        let sn = big_r.sinh();
        let z: Vec<f64> = bg
            .samples()
            .iter()
            .map(|s| match s.position.theta {
                crate::spaceform::Direction::Sphere { colat, lon } => colat.cos() + colat.sin() * lon.sin(),
                _ => unreachable!(),
            })
            .collect();
        let lap = bg.laplacian(&z);
        for (l, v) in lap.iter().zip(&z) {
            assert!((l + 2.0 * v / (sn * sn)).abs() < 1e-10);
        }
        let grad = bg.gradient(&z);
        let energy = bg.integrate(&grad.iter().map(|g| g.norm_squared()).collect::<Vec<_>>());
        let dirichlet = -bg.integrate(&z.iter().zip(&lap).map(|(a, b)| a * b).collect::<Vec<_>>());
        assert!((energy - dirichlet).abs() < 1e-10 * energy);
    }

    #[test]
    fn invariant_names_are_reported() {
        let check = |space: SpaceForm, shape: Shape, name: &str| {
            match Domain::new(space, shape, Resolution::new(16)) {
                Err(Error::InvalidDomain { invariant, .. }) => assert_eq!(invariant, name),
                other => panic!("expected {name}, got {other:?}"),
            }
        };
        let s2 = SpaceForm::hemisphere(2).unwrap();
        check(h2(), Shape::ball(0.0, -1.0), "radius_positive");
        check(h2(), Shape::ball(0.8, 0.7), "base_point_inside");
        check(s2, Shape::ball(0.5, 1.1), "hemisphere");
        check(h2(), Shape::fourier(vec![0.1, 0.2]), "radial_positive");
        check(s2, Shape::fourier(vec![1.6]), "hemisphere");
        check(SpaceForm::hyperbolic(3).unwrap(), Shape::fourier(vec![1.0]), "fourier_dimension");
    }

    #[test]
    fn profile_curve_reproduces_sphere() {
        let nodes: Vec<(f64, f64)> = (0..=16).map(|i| (PI * i as f64 / 16.0, 0.6)).collect();
        let space = SpaceForm::hyperbolic(3).unwrap();
        let dom = Domain::new(space, Shape::profile(&nodes).unwrap(), Resolution::new(16)).unwrap();
        let cs = 0.6f64.cosh() / 0.6f64.sinh();
        for s in dom.boundary().samples() {
            assert!((s.mean_curvature - cs).abs() < 1e-12);
        }
    }
}
