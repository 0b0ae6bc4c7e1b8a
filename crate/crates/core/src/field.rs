//! Scalar fields supplied together with their gradient and covariant Hessian
//! in the orthonormal polar frame.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::spaceform::{potential, trig, Curvature, PolarPoint, SpaceForm};

/// Value, frame gradient and covariant Hessian of a field at one point.
#[derive(Clone, Debug, PartialEq)]
pub struct Jet {
    pub value: f64,
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

impl Jet {
    pub fn constant(value: f64, n: usize) -> Self {
        Jet {
            value,
            grad: DVector::zeros(n),
            hess: DMatrix::zeros(n, n),
        }
    }

    pub fn laplacian(&self) -> f64 {
        self.hess.trace()
    }

    /// Product rule.
    pub fn product(&self, other: &Jet) -> Jet {
        let cross = &self.grad * other.grad.transpose();
        Jet {
            value: self.value * other.value,
            grad: &self.grad * other.value + &other.grad * self.value,
            hess: &self.hess * other.value
                + &other.hess * self.value
                + &cross
                + cross.transpose(),
        }
    }

    pub fn scaled(&self, a: f64) -> Jet {
        Jet {
            value: a * self.value,
            grad: &self.grad * a,
            hess: &self.hess * a,
        }
    }

    pub fn add(&self, other: &Jet) -> Jet {
        Jet {
            value: self.value + other.value,
            grad: &self.grad + &other.grad,
            hess: &self.hess + &other.hess,
        }
    }
}

/// A scalar field on a space form with analytic or discrete derivatives.
pub trait ScalarField: Send + Sync {
    fn jet(&self, space: &SpaceForm, x: &PolarPoint) -> Result<Jet>;

    fn value(&self, space: &SpaceForm, x: &PolarPoint) -> Result<f64> {
        Ok(self.jet(space, x)?.value)
    }
}

impl<T: ScalarField + ?Sized> ScalarField for &T {
    fn jet(&self, space: &SpaceForm, x: &PolarPoint) -> Result<Jet> {
        (**self).jet(space, x)
    }
    fn value(&self, space: &SpaceForm, x: &PolarPoint) -> Result<f64> {
        (**self).value(space, x)
    }
}

impl<T: ScalarField + ?Sized> ScalarField for Box<T> {
    fn jet(&self, space: &SpaceForm, x: &PolarPoint) -> Result<Jet> {
        (**self).jet(space, x)
    }
    fn value(&self, space: &SpaceForm, x: &PolarPoint) -> Result<f64> {
        (**self).value(space, x)
    }
}

/// The model potential `cosh r`, `1` or `cos r`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Potential;

impl ScalarField for Potential {
    fn jet(&self, space: &SpaceForm, x: &PolarPoint) -> Result<Jet> {
        potential(space, x)
    }
}

#[derive(Clone, Copy, Debug)]
pub struct Constant(pub f64);

impl ScalarField for Constant {
    fn jet(&self, space: &SpaceForm, x: &PolarPoint) -> Result<Jet> {
        space.check_point(x)?;
        Ok(Jet::constant(self.0, space.dim()))
    }
}

/// Small-radius safe evaluations of the warped-product ratios
/// `r / sn`, `(1 - r cs / sn) / sn` and `cs / sn - r / sn^2`.
fn polar_ratios(k: f64, r: f64) -> (f64, f64, f64) {
    if k == 0.0 {
        return (1.0, 0.0, 0.0);
    }
    if r < 2e-3 {
        let r2 = r * r;
        let q1 = 1.0 + k * r2 / 6.0 + 7.0 * r2 * r2 / 360.0;
        let q2 = k * r / 3.0 + 7.0 * r * r2 / 90.0;
        let q3 = -2.0 * k * r / 3.0 - 4.0 * r * r2 / 45.0;
        return (q1, q2, q3);
    }
    let (sn, cs) = trig(k, r);
    (r / sn, (1.0 - r * cs / sn) / sn, cs / sn - r / (sn * sn))
}

/// Converts a Euclidean jet in geodesic normal coordinates `y = r u` into the
/// covariant jet in the polar frame of the warped metric.
pub fn normal_chart_to_frame(
    space: &SpaceForm,
    x: &PolarPoint,
    value: f64,
    grad_y: &DVector<f64>,
    hess_y: &DMatrix<f64>,
) -> Jet {
    let n = space.dim();
    let (q1, q2, q3) = polar_ratios(space.k(), x.r);
    let u = x.theta.unit();
    let tangents = x.theta.tangent_basis();
    let mut dirs = vec![u];
    dirs.extend(tangents);
    let g_dir: Vec<f64> = dirs.iter().map(|d| grad_y.dot(d)).collect();
    let mut grad = DVector::zeros(n);
    grad[0] = g_dir[0];
    for a in 1..n {
        grad[a] = q1 * g_dir[a];
    }
    let mut hess = DMatrix::zeros(n, n);
    let hd: Vec<DVector<f64>> = dirs.iter().map(|d| hess_y * d).collect();
    hess[(0, 0)] = dirs[0].dot(&hd[0]);
    for a in 1..n {
        let v = q1 * dirs[0].dot(&hd[a]) + q2 * g_dir[a];
        hess[(0, a)] = v;
        hess[(a, 0)] = v;
        for b in 1..n {
            let mut v = q1 * q1 * dirs[a].dot(&hd[b]);
            if a == b {
                v += q3 * g_dir[0];
            }
            hess[(a, b)] = v;
        }
    }
    Jet { value, grad, hess }
}

/// A function of the ambient coordinates `X in R^{n+1}`, with partial
/// derivatives up to second order.
pub trait AmbientFunction: Send + Sync {
    fn ambient_jet(&self, x: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>);
}

/// Restriction of an ambient function to the model, with the covariant
/// Hessian `D^2 F(a, b) - K dF(X) <a, b>`.
pub fn ambient_to_frame(
    space: &SpaceForm,
    x: &PolarPoint,
    f: &dyn AmbientFunction,
) -> Result<Jet> {
    let n = space.dim();
    let pos = space.embed(x)?;
    let frame = space.frame(x)?;
    let (value, d1, d2) = f.ambient_jet(&pos);
    let radial = d1.dot(&pos);
    let mut grad = DVector::zeros(n);
    let mut hess = DMatrix::zeros(n, n);
    let d2e: Vec<DVector<f64>> = frame.iter().map(|e| &d2 * e).collect();
    for i in 0..n {
        grad[i] = d1.dot(&frame[i]);
        for j in 0..n {
            hess[(i, j)] = frame[i].dot(&d2e[j]);
        }
        hess[(i, i)] -= space.k() * radial;
    }
    Ok(Jet { value, grad, hess })
}

/// Wrapper turning an [`AmbientFunction`] into a [`ScalarField`].
#[derive(Clone, Debug)]
pub struct Embedded<F>(pub F);

impl<F: AmbientFunction> ScalarField for Embedded<F> {
    fn jet(&self, space: &SpaceForm, x: &PolarPoint) -> Result<Jet> {
        ambient_to_frame(space, x, &self.0)
    }
}

/// Polynomial in the ambient coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct AmbientPolynomial {
    pub terms: Vec<(f64, Vec<u32>)>,
}

fn powi(x: f64, e: i64) -> f64 {
    if e < 0 {
        0.0
    } else {
        x.powi(e as i32)
    }
}

impl AmbientFunction for AmbientPolynomial {
    fn ambient_jet(&self, x: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
        let m = x.len();
        let mut v = 0.0;
        let mut g = DVector::zeros(m);
        let mut h = DMatrix::zeros(m, m);
        for (c, pw) in &self.terms {
            let p: Vec<i64> = pw.iter().map(|&e| e as i64).collect();
            let mono = |skip: &[(usize, i64)]| -> f64 {
                let mut out = 1.0;
                for i in 0..m {
                    let mut e = p[i];
                    let mut fac = 1.0;
                    for &(j, d) in skip {
                        if j == i {
                            for s in 0..d {
                                fac *= (e - s) as f64;
                            }
                            e -= d;
                        }
                    }
                    if fac == 0.0 {
                        return 0.0;
                    }
                    out *= fac * powi(x[i], e);
                }
                out
            };
            v += c * mono(&[]);
            for i in 0..m {
                if p[i] > 0 {
                    g[i] += c * mono(&[(i, 1)]);
                }
                for j in 0..m {
                    let val = if i == j {
                        if p[i] > 1 {
                            mono(&[(i, 2)])
                        } else {
                            0.0
                        }
                    } else if p[i] > 0 && p[j] > 0 {
                        mono(&[(i, 1), (j, 1)])
                    } else {
                        0.0
                    };
                    h[(i, j)] += c * val;
                }
            }
        }
        (v, g, h)
    }
}

/// `sum_j a_j sin(k_j . X + phase_j)`.
#[derive(Clone, Debug, PartialEq)]
pub struct AmbientTrig {
    pub terms: Vec<(f64, Vec<f64>, f64)>,
}

impl AmbientFunction for AmbientTrig {
    fn ambient_jet(&self, x: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
        let m = x.len();
        let mut v = 0.0;
        let mut g = DVector::zeros(m);
        let mut h = DMatrix::zeros(m, m);
        for (a, kv, ph) in &self.terms {
            let kv = DVector::from_column_slice(kv);
            let arg = kv.dot(x) + ph;
            let (s, c) = arg.sin_cos();
            v += a * s;
            g += &kv * (a * c);
            h -= &kv * kv.transpose() * (a * s);
        }
        (v, g, h)
    }
}

/// Sum of ambient functions.
pub struct AmbientSum(pub Vec<Box<dyn AmbientFunction>>);

impl AmbientFunction for AmbientSum {
    fn ambient_jet(&self, x: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
        let m = x.len();
        let mut out = (0.0, DVector::zeros(m), DMatrix::zeros(m, m));
        for f in &self.0 {
            let (v, g, h) = f.ambient_jet(x);
            out.0 += v;
            out.1 += g;
            out.2 += h;
        }
        out
    }
}

/// `exp(F)`, always positive.
pub struct AmbientExp<F>(pub F);

impl<F: AmbientFunction> AmbientFunction for AmbientExp<F> {
    fn ambient_jet(&self, x: &DVector<f64>) -> (f64, DVector<f64>, DMatrix<f64>) {
        let (v, g, h) = self.0.ambient_jet(x);
        let e = v.exp();
        let gg = &g * g.transpose();
        (e, &g * e, (h + gg) * e)
    }
}

/// The squared distance `r^2` to the base point.
#[derive(Clone, Copy, Debug, Default)]
pub struct RadiusSquared;

impl ScalarField for RadiusSquared {
    fn jet(&self, space: &SpaceForm, x: &PolarPoint) -> Result<Jet> {
        space.check_point(x)?;
        let y = x.normal_coordinates();
        let n = space.dim();
        Ok(normal_chart_to_frame(
            space,
            x,
            x.r * x.r,
            &(y * 2.0),
            &(DMatrix::identity(n, n) * 2.0),
        ))
    }
}

/// Distance to the base point; not differentiable at `r = 0`.
#[derive(Clone, Copy, Debug, Default)]
pub struct Radius;

impl ScalarField for Radius {
    fn jet(&self, space: &SpaceForm, x: &PolarPoint) -> Result<Jet> {
        space.check_point(x)?;
        if x.r < 1e-12 {
            return Err(Error::Domain("distance function is singular at r = 0".into()));
        }
        let n = space.dim();
        let (sn, cs) = trig(space.k(), x.r);
        let mut grad = DVector::zeros(n);
        grad[0] = 1.0;
        let mut hess = DMatrix::identity(n, n) * (cs / sn);
        hess[(0, 0)] = 0.0;
        Ok(Jet {
            value: x.r,
            grad,
            hess,
        })
    }
}

/// First ambient spatial coordinate `sn(r) u_1`; satisfies the same Hessian
/// law `Hess f = -K f g` as the potential.
pub fn linear_field() -> Embedded<AmbientPolynomial> {
    Embedded(AmbientPolynomial {
        terms: vec![(1.0, vec![0, 1, 0, 0])],
    })
}

/// Linear combination `sum_i a_i f_i` of fields.
pub struct FieldSum<'a>(pub Vec<(f64, &'a dyn ScalarField)>);

impl ScalarField for FieldSum<'_> {
    fn jet(&self, space: &SpaceForm, x: &PolarPoint) -> Result<Jet> {
        let mut out = Jet::constant(0.0, space.dim());
        for (a, f) in &self.0 {
            out = out.add(&f.jet(space, x)?.scaled(*a));
        }
        Ok(out)
    }
}

fn exponent_vectors(vars: usize, max_degree: u32) -> Vec<Vec<u32>> {
    let mut out = vec![vec![]];
    for _ in 0..vars {
        let mut next = Vec::new();
        for e in &out {
            let used: u32 = e.iter().sum();
            for d in 0..=(max_degree - used) {
                let mut v = e.clone();
                v.push(d);
                next.push(v);
            }
        }
        out = next;
    }
    out
}

fn padded(mut e: Vec<u32>) -> Vec<u32> {
    e.resize(4, 0);
    e
}

/// Seeded smooth test field: a random cubic in the ambient coordinates plus
/// two random ambient sine waves.
pub fn random_field(space: &SpaceForm, seed: u64) -> Embedded<AmbientSum> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vars = space.dim() + 1;
    let skip_x0 = space.curvature() == Curvature::Euclidean;
    let terms = exponent_vectors(vars, 3)
        .into_iter()
        .filter(|e| !(skip_x0 && e[0] > 0))
        .map(|e| (rng.random_range(-0.5..0.5), padded(e)))
        .collect();
    let trig_terms = (0..2)
        .map(|_| {
            let a = rng.random_range(-0.5..0.5);
            let k: Vec<f64> = (0..vars).map(|_| rng.random_range(-1.5..1.5)).collect();
            let ph = rng.random_range(0.0..std::f64::consts::TAU);
            (a, k, ph)
        })
        .collect();
    Embedded(AmbientSum(vec![
        Box::new(AmbientPolynomial { terms }),
        Box::new(AmbientTrig { terms: trig_terms }),
    ]))
}

/// Seeded positive weight `exp(q)` with `q` a small random quadratic. It does
/// not satisfy the potential's Hessian law.
pub fn random_weight(space: &SpaceForm, seed: u64) -> Embedded<AmbientExp<AmbientPolynomial>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9e37_79b9_7f4a_7c15);
    let vars = space.dim() + 1;
    let skip_x0 = space.curvature() == Curvature::Euclidean;
    let terms = exponent_vectors(vars, 2)
        .into_iter()
        .filter(|e| !(skip_x0 && e[0] > 0))
        .map(|e| (rng.random_range(-0.3..0.3), padded(e)))
        .collect();
    Embedded(AmbientExp(AmbientPolynomial { terms }))
}

/// Built-in fields by name: `V`, `one`, `rsq`, `linear`, `random-seeded`.
pub fn named_field(name: &str, space: &SpaceForm, seed: u64) -> Result<Box<dyn ScalarField>> {
    Ok(match name {
        "V" => Box::new(Potential),
        "one" => Box::new(Constant(1.0)),
        "rsq" => Box::new(RadiusSquared),
        "linear" => Box::new(linear_field()),
        "random-seeded" => Box::new(random_field(space, seed)),
        other => return Err(Error::Domain(format!("unknown field `{other}`"))),
    })
}

/// Built-in weights by name: `V`, `one`, `random-seeded`.
pub fn named_weight(name: &str, space: &SpaceForm, seed: u64) -> Result<Box<dyn ScalarField>> {
    Ok(match name {
        "V" => Box::new(Potential),
        "one" => Box::new(Constant(1.0)),
        "random-seeded" => Box::new(random_weight(space, seed)),
        other => return Err(Error::Domain(format!("unknown weight `{other}`"))),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spaceform::{fd_hessian, geodesic_flow_point, laplace_beltrami};

    fn points(n: usize) -> Vec<PolarPoint> {
        (0..12)
            .map(|i| {
                let r = 0.05 + 0.11 * i as f64;
                if n == 2 {
                    PolarPoint::planar(r, 0.9 * i as f64)
                } else {
                    PolarPoint::spatial(r, 0.2 + 0.23 * i as f64, 0.7 * i as f64)
                }
            })
            .collect()
    }

    fn check_against_fd(space: &SpaceForm, f: &dyn ScalarField, tol: f64) {
        let n = space.dim();
        let h = 1e-4;
        for x in points(n) {
            let jet = f.jet(space, &x).unwrap();
            let fd = fd_hessian(space, |y| f.value(space, y), &x, 1e-3).unwrap();
            assert!((&jet.hess - &fd).amax() < tol * (1.0 + jet.hess.amax()), "hessian at {x:?}: {} vs {}", jet.hess, fd);
            assert!((&jet.hess - jet.hess.transpose()).amax() < 1e-12);
            for i in 0..n {
                let mut d = DVector::zeros(n);
                d[i] = 1.0;
                let p = f.value(space, &geodesic_flow_point(space, &x, &d, h).unwrap()).unwrap();
                let m = f.value(space, &geodesic_flow_point(space, &x, &d, -h).unwrap()).unwrap();
                assert!(((p - m) / (2.0 * h) - jet.grad[i]).abs() < 1e-7 * (1.0 + jet.value.abs()));
            }
        }
    }

    #[test]
    fn analytic_jets_match_finite_differences() {
        for k in [-1, 0, 1] {
            for n in [2, 3] {
                let space = SpaceForm::from_sign(k, n).unwrap();
                check_against_fd(&space, &Potential, 1e-5);
                check_against_fd(&space, &RadiusSquared, 1e-5);
                check_against_fd(&space, &linear_field(), 1e-5);
                check_against_fd(&space, &random_field(&space, 7), 1e-4);
                check_against_fd(&space, &random_weight(&space, 7), 1e-4);
            }
        }
    }

    #[test]
    fn linear_field_obeys_potential_law() {
        for k in [-1, 1] {
            let space = SpaceForm::from_sign(k, 2).unwrap();
            let f = linear_field();
            for x in points(2) {
                let jet = f.jet(&space, &x).unwrap();
                let res = jet.hess.clone() + DMatrix::identity(2, 2) * (space.k() * jet.value);
                assert!(res.amax() < 1e-13);
            }
        }
    }

    #[test]
    fn laplacian_examples() {
        let h2 = SpaceForm::hyperbolic(2).unwrap();
        let x = PolarPoint::planar(1.0, 0.0);
        let lap = laplace_beltrami(&h2, &Potential, &x).unwrap();
        assert!((lap - 2.0 * 1f64.cosh()).abs() < 1e-14);
        assert!((lap - 3.0861612696304874).abs() < 1e-12);

        assert_eq!(laplace_beltrami(&h2, &Constant(4.0), &x).unwrap(), 0.0);

        // r^2 / 2 near the origin in H^3 has Laplacian -> 3
        let h3 = SpaceForm::hyperbolic(3).unwrap();
        let half = FieldSum(vec![(0.5, &RadiusSquared)]);
        for r in [0.0, 1e-6, 1e-3] {
            let lap = laplace_beltrami(&h3, &half, &PolarPoint::spatial(r, 0.4, 0.1)).unwrap();
            assert!((lap - 3.0).abs() < 3.0 * r + 1e-12, "r={r} lap={lap}");
        }
    }

    #[test]
    fn normal_chart_conversion_is_smooth_at_origin() {
        let space = SpaceForm::hyperbolic(2).unwrap();
        let near = RadiusSquared.jet(&space, &PolarPoint::planar(1.999e-3, 0.3)).unwrap();
        let far = RadiusSquared.jet(&space, &PolarPoint::planar(2.001e-3, 0.3)).unwrap();
        assert!((near.hess - far.hess).amax() < 1e-5);
    }
}
