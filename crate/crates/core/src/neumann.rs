//! Weighted Neumann problem
//!
//! ```text
//! div(V^2 grad w) = V  in Omega,     V^2 dw/dnu = c V  on M,
//! ```
//!
//! solved by a Galerkin method for `f = w V` on separated solutions of
//! `Lap u + nKu = 0` about the base point, plus a fixed particular solution. The problem is solvable
//! exactly for `c = int_Omega V / int_M V`; the solution is fixed by the gauge
//! `int_Omega w V^2 = 0`. Then `f = w V` solves
//! `Lap f + nKf = 1`, `V f_nu - V_nu f = c V`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::domain::{convexity_margin, Domain, InteriorGrid, Shape};
use crate::error::{Error, Result};
use crate::field::{Jet, Potential, ScalarField};
use crate::quadrature::{compatibility_constant, weighted_integrals};
use crate::reilly::{grouped_boundary_form_with, potential_breakdown, GroupedBoundaryForm, ReillyBreakdown};
use crate::spaceform::{geodesic_flow_point, trig, Curvature, Direction, PolarPoint, SpaceForm};
use crate::spectral::neumaier_sum;

/// Relative compatibility residual above which the solve is refused.
pub const COMPATIBILITY_TOLERANCE: f64 = 1e-10;
/// Smallest admissible radius of a domain for the solver.
pub const MIN_RADIUS: f64 = 1e-3;
/// Minimal distance to the equator for hemisphere domains.
pub const EQUATOR_MARGIN: f64 = 1e-2;
/// Convexity margin below which the Minkowski chain is flagged.
pub const HYPOTHESIS_TOLERANCE: f64 = 1e-9;

const CHUNK: usize = 1024;

/// `2F1(a, b; c; x)` and its derivative in `x`, by direct summation. Callers
/// keep `|x| <= 0.6`.
fn hyp2f1(a: f64, b: f64, c: f64, x: f64) -> (f64, f64) {
    let mut coef = 1.0;
    let mut pw = 1.0;
    let mut sum = 1.0;
    let mut dsum = 0.0;
    for k in 0..4000 {
        let kf = k as f64;
        coef *= (a + kf) * (b + kf) / ((c + kf) * (kf + 1.0));
        if coef == 0.0 {
            break;
        }
        let dterm = (kf + 1.0) * coef * pw;
        dsum += dterm;
        pw *= x;
        let term = coef * pw;
        sum += term;
        if k > 2 && term.abs() <= 1e-17 * sum.abs() && dterm.abs() <= 1e-17 * dsum.abs() {
            break;
        }
    }
    (sum, dsum)
}

/// Regular solution `R_l` of
/// `R'' + (n-1)(cs/sn) R' - l(l+n-2)/sn^2 R + nK R = 0`, up to a constant,
/// with its first derivative. `R_0 = cs(r)`.
fn radial_mode(k: f64, n: usize, l: usize, r: f64) -> (f64, f64) {
    let nf = n as f64;
    let lf = l as f64;
    let lpow = |x: f64, p: usize| if p == 0 { 1.0 } else { x.powi(p as i32) };
    if k == 0.0 {
        let d = if l == 0 { 0.0 } else { lf * lpow(r, l - 1) };
        return (lpow(r, l), d);
    }
    if k > 0.0 {
        // sin^l r 2F1(l-1, l+n; l+n/2; sin^2(r/2))
        let (s, c) = r.sin_cos();
        let z = (0.5 * r).sin().powi(2);
        let (f, fz) = hyp2f1(lf - 1.0, lf + nf, lf + 0.5 * nf, z);
        let d = if l == 0 { 0.0 } else { lf * lpow(s, l - 1) * c * f };
        (lpow(s, l) * f, d + lpow(s, l) * fz * 0.5 * s)
    } else {
        // Pfaff transform of the same series to w = tanh^2(r/2):
        // R = tanh^l(r/2) cosh^2(r/2) 2F1(l-1, -n/2; l+n/2; w)
        let t = (0.5 * r).tanh();
        let ch2 = (0.5 * r).cosh().powi(2);
        let (f, fw) = hyp2f1(lf - 1.0, -0.5 * nf, lf + 0.5 * nf, t * t);
        let d = if l == 0 { 0.0 } else { 0.5 * lf * lpow(t, l - 1) * f };
        (
            lpow(t, l) * ch2 * f,
            d + lpow(t, l) * 0.5 * r.sinh() * f + lpow(t, l + 1) * fw,
        )
    }
}

/// Legendre `P_l(x)` with first and second derivatives for `l = 0..=lmax`.
fn legendre(x: f64, lmax: usize) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut p = vec![0.0; lmax + 1];
    let mut d1 = vec![0.0; lmax + 1];
    let mut d2 = vec![0.0; lmax + 1];
    p[0] = 1.0;
    if lmax >= 1 {
        p[1] = x;
        d1[1] = 1.0;
    }
    for l in 1..lmax {
        let lf = l as f64;
        p[l + 1] = ((2.0 * lf + 1.0) * x * p[l] - lf * p[l - 1]) / (lf + 1.0);
        d1[l + 1] = d1[l - 1] + (2.0 * lf + 1.0) * p[l];
        d2[l + 1] = d2[l - 1] + (2.0 * lf + 1.0) * d1[l];
    }
    (p, d1, d2)
}

/// Separated solutions of the homogeneous equation `Lap u + nKu = 0`:
/// `R_m(r) cos m theta`, `R_m(r) sin m theta` for n = 2 and the zonal
/// `R_l(r) P_l(cos colat)` for n = 3 (every n = 3 shape is axisymmetric
/// about the pole). The expansion is about the center of a ball and about
/// the base point otherwise, and each `R_l` is scaled to 1 at the largest
/// boundary distance from there. The first function is `V` up to scale, the
/// kernel of the problem.
#[derive(Clone, Debug, PartialEq)]
pub struct HarmonicBasis {
    space: SpaceForm,
    dim: usize,
    k: f64,
    degree: usize,
    /// Distance of the expansion center from the base point along the axis
    /// `angle = 0` (n = 2) or `colat = 0` (n = 3).
    center: f64,
    scale: Vec<f64>,
}

/// Values, polar-frame gradients and Hessians of every basis function at
/// one point, stored flat. Hessians are only filled on request.
struct BasisValues {
    val: Vec<f64>,
    grad: Vec<f64>,
    hess: Vec<f64>,
}

/// Below this radius jets are taken at the radius itself; the polar frame
/// degenerates at the base point.
const ORIGIN_RADIUS: f64 = 1e-9;

impl HarmonicBasis {
    pub fn for_domain(domain: &Domain, degree: usize) -> Self {
        let space = *domain.space();
        let (k, n) = (space.k(), space.dim());
        let center = match domain.shape() {
            Shape::Ball { offset, .. } => *offset,
            _ => 0.0,
        };
        let mut basis = HarmonicBasis {
            space,
            dim: n,
            k,
            degree,
            center,
            scale: vec![1.0; degree + 1],
        };
        let r_max = domain
            .boundary()
            .samples()
            .iter()
            .map(|s| basis.recenter(&s.position).map_or(0.0, |(y, _)| y.r))
            .fold(0.0, f64::max);
        basis.scale = (0..=degree)
            .map(|l| {
                let v = radial_mode(k, n, l, r_max).0;
                if v.abs() > 1e-300 { 1.0 / v } else { 1.0 }
            })
            .collect();
        basis
    }

    /// Polar coordinates of `x` about the expansion center, and the matrix
    /// taking polar-frame components there to polar-frame components at `x`.
    fn recenter(&self, x: &PolarPoint) -> Result<(PolarPoint, DMatrix<f64>)> {
        let n = self.dim;
        let (sd, cd) = trig(self.k, self.center);
        // isometry of the ambient model moving the center to the base point
        let axis = if n == 2 { 1 } else { 3 };
        let k = self.k;
        let apply = |v: &DVector<f64>| {
            let mut out = v.clone();
            out[0] = cd * v[0] + k * sd * v[axis];
            out[axis] = -sd * v[0] + cd * v[axis];
            out
        };
        let y = self.space.locate(&apply(&self.space.embed(x)?))?;
        let fx = self.space.frame(x)?;
        let fy = self.space.frame(&y)?;
        let mut m = DMatrix::zeros(n, n);
        for a in 0..n {
            let moved = apply(&fx[a]);
            for b in 0..n {
                m[(a, b)] = self.space.inner(&moved, &fy[b]);
            }
        }
        Ok((y, m))
    }

    pub fn len(&self) -> usize {
        if self.dim == 2 {
            2 * self.degree + 1
        } else {
            self.degree + 1
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    /// `(R, R', R'')` of every radial mode, scaled.
    fn radial_table(&self, r: f64) -> Vec<[f64; 3]> {
        let (n, k) = (self.dim, self.k);
        let nf = n as f64;
        let (sn, cs) = trig(k, r);
        (0..=self.degree)
            .map(|l| {
                let (v, d) = radial_mode(k, n, l, r);
                let lf = l as f64;
                let d2 = if k == 0.0 {
                    if l >= 2 { lf * (lf - 1.0) * r.powi(l as i32 - 2) } else { 0.0 }
                } else {
                    -(nf - 1.0) * cs / sn * d + lf * (lf + nf - 2.0) / (sn * sn) * v - nf * k * v
                };
                let s = self.scale[l];
                [s * v, s * d, s * d2]
            })
            .collect()
    }

    /// Derivative orders: 0 values only, 1 adds gradients, 2 adds Hessians.
    fn evaluate(&self, x: &PolarPoint, order: usize) -> Result<BasisValues> {
        if self.center == 0.0 {
            return Ok(self.evaluate_local(x, order));
        }
        let n = self.dim;
        let (y, m) = self.recenter(x)?;
        let mut b = self.evaluate_local(&y, order);
        for i in 0..self.len() {
            if order >= 1 {
                let g = &mut b.grad[i * n..(i + 1) * n];
                let moved = &m * DVector::from_column_slice(g);
                g.copy_from_slice(moved.as_slice());
            }
            if order >= 2 {
                let h = &mut b.hess[i * n * n..(i + 1) * n * n];
                let moved = &m * DMatrix::from_column_slice(n, n, h) * m.transpose();
                h.copy_from_slice(moved.as_slice());
            }
        }
        Ok(b)
    }

    fn evaluate_local(&self, x: &PolarPoint, order: usize) -> BasisValues {
        let n = self.dim;
        let nb = self.len();
        let r = if order > 0 { x.r.max(ORIGIN_RADIUS) } else { x.r };
        let rad = self.radial_table(r);
        let (sn, cs) = trig(self.k, r);
        let mut val = vec![0.0; nb];
        let mut grad = if order >= 1 { vec![0.0; nb * n] } else { Vec::new() };
        let mut hess = if order >= 2 { vec![0.0; nb * n * n] } else { Vec::new() };
        // angular factor with its unit-sphere gradient and Hessian
        let mut put = |i: usize, rl: &[f64; 3], y: f64, dy: [f64; 2], hy: [f64; 3]| {
            val[i] = rl[0] * y;
            if order >= 1 {
                grad[i * n] = rl[1] * y;
                for a in 0..n - 1 {
                    grad[i * n + 1 + a] = rl[0] / sn * dy[a];
                }
            }
            if order >= 2 {
                let h = &mut hess[i * n * n..(i + 1) * n * n];
                let mixed = (rl[1] - rl[0] * cs / sn) / sn;
                let normal = cs / sn * rl[1] * y;
                let curv = rl[0] / (sn * sn);
                h[0] = rl[2] * y;
                for a in 0..n - 1 {
                    h[1 + a] = mixed * dy[a];
                    h[(1 + a) * n] = mixed * dy[a];
                }
                if n == 2 {
                    h[3] = curv * hy[0] + normal;
                } else {
                    h[4] = curv * hy[0] + normal;
                    h[5] = curv * hy[1];
                    h[7] = curv * hy[1];
                    h[8] = curv * hy[2] + normal;
                }
            }
        };
        match x.theta {
            Direction::Circle { angle } => {
                put(0, &rad[0], 1.0, [0.0; 2], [0.0; 3]);
                for m in 1..=self.degree {
                    let mf = m as f64;
                    let (s, c) = (mf * angle).sin_cos();
                    put(2 * m - 1, &rad[m], c, [-mf * s, 0.0], [-mf * mf * c, 0.0, 0.0]);
                    put(2 * m, &rad[m], s, [mf * c, 0.0], [-mf * mf * s, 0.0, 0.0]);
                }
            }
            Direction::Sphere { colat, .. } => {
                let (sp, cp) = colat.sin_cos();
                let (p, d1, d2) = legendre(cp, self.degree);
                for l in 0..=self.degree {
                    let dy = [-sp * d1[l], 0.0];
                    // (colat, colat), (colat, lon), (lon, lon)
                    let hy = [sp * sp * d2[l] - cp * d1[l], 0.0, -cp * d1[l]];
                    put(l, &rad[l], p[l], dy, hy);
                }
            }
        }
        BasisValues { val, grad, hess }
    }

    /// Particular solution of `Lap f + nKf = 1`: `1/(nK)`, or `r^2/(2n)` for
    /// K = 0, as `(value, radial derivative, radial second derivative)`.
    /// Its Hessian is `f'' dr^2 + (f'/r) g_S`, which for both cases is
    /// diagonal with equal tangential entries.
    fn particular(&self, r: f64) -> [f64; 3] {
        let nf = self.dim as f64;
        if self.k == 0.0 {
            [r * r / (2.0 * nf), r / nf, 1.0 / nf]
        } else {
            [1.0 / (nf * self.k), 0.0, 0.0]
        }
    }
}

/// `f = f_p + sum_i coeffs_i u_i` with `f_p` the particular solution and
/// `u_i` the harmonic basis.
#[derive(Clone, Debug, PartialEq)]
pub struct GalerkinField {
    basis: HarmonicBasis,
    coeffs: Vec<f64>,
}

impl GalerkinField {
    pub fn coefficients(&self) -> &[f64] {
        &self.coeffs
    }
}

impl ScalarField for GalerkinField {
    fn jet(&self, space: &SpaceForm, x: &PolarPoint) -> Result<Jet> {
        space.check_point(x)?;
        let n = self.basis.dim;
        let b = self.basis.evaluate(x, 2)?;
        let fp = self.basis.particular(x.r);
        let value = fp[0] + neumaier_sum(self.coeffs.iter().zip(&b.val).map(|(c, v)| c * v));
        let mut grad = DVector::zeros(n);
        let mut hess = DMatrix::zeros(n, n);
        grad[0] = fp[1];
        for a in 0..n {
            hess[(a, a)] = fp[2];
        }
        for a in 0..n {
            grad[a] += neumaier_sum(self.coeffs.iter().enumerate().map(|(i, c)| c * b.grad[i * n + a]));
            for l in 0..n {
                hess[(a, l)] += neumaier_sum(
                    self.coeffs
                        .iter()
                        .enumerate()
                        .map(|(i, c)| c * b.hess[(i * n + a) * n + l]),
                );
            }
        }
        Ok(Jet { value, grad, hess })
    }

    fn value(&self, space: &SpaceForm, x: &PolarPoint) -> Result<f64> {
        space.check_point(x)?;
        let b = self.basis.evaluate(x, 0)?;
        Ok(self.basis.particular(x.r)[0] + neumaier_sum(self.coeffs.iter().zip(&b.val).map(|(c, v)| c * v)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NeumannResiduals {
    /// Max norm of `Lap f + nKf - 1` on the interior nodes.
    pub pde_interior: f64,
    /// Max norm of `V f_nu - V_nu f - c V` on the boundary samples.
    pub bc_boundary: f64,
    /// `|int_Omega V - c int_M V| / int_Omega V`.
    pub compatibility: f64,
}

#[derive(Clone, Debug)]
pub struct NeumannSolution {
    /// Values of `w = f / V` at the interior quadrature nodes.
    pub w_values: Vec<f64>,
    /// `f = w V` with analytic derivatives of the Galerkin expansion.
    pub f_field: GalerkinField,
    pub c: f64,
    /// Lagrange multiplier of the gauge constraint; vanishes when the load
    /// is compatible.
    pub gauge_multiplier: f64,
    /// `int_Omega w V^2` after gauge fixing.
    pub gauge_integral: f64,
    pub residuals: NeumannResiduals,
    pub degree: usize,
    pub basis_size: usize,
}

/// Degree of the Galerkin basis used at a given boundary resolution.
pub fn galerkin_degree(dim: usize, level: usize) -> usize {
    if dim == 2 {
        (level / 4).clamp(4, 48)
    } else {
        (level / 4).clamp(4, 24)
    }
}

fn check_inputs(domain: &Domain) -> Result<()> {
    let min_r = domain.min_radius();
    if min_r < MIN_RADIUS {
        return Err(Error::Precondition {
            name: "min_radius",
            detail: format!("boundary comes within {min_r:.3e} of the base point"),
        });
    }
    if domain.space().curvature() == Curvature::Spherical {
        let max_r = domain.max_radius();
        if max_r > std::f64::consts::FRAC_PI_2 - EQUATOR_MARGIN {
            return Err(Error::Precondition {
                name: "equator_margin",
                detail: format!("max r = {max_r} is within {EQUATOR_MARGIN} of the equator"),
            });
        }
    }
    Ok(())
}

/// Assembled Galerkin system for the coefficients of
/// `f = f_p + sum_i a_i u_i`, i.e. `w = f / V`, before the gauge is fixed.
pub struct GalerkinSystem {
    pub basis: HarmonicBasis,
    /// `int V^2 <grad(u_i / V), grad(u_j / V)>`
    pub matrix: DMatrix<f64>,
    /// Upper triangular `T` with `matrix = T^T T`, accumulated by QR of the
    /// weighted gradient rows.
    pub factor: DMatrix<f64>,
    /// `-int u_i + c int_M u_i - int V^2 <grad(f_p / V), grad(u_i / V)>`
    pub rhs: DVector<f64>,
    /// `int u_i V`, the gauge functional `int w V^2` on the basis.
    pub moments: DVector<f64>,
    /// `int f_p V`
    pub particular_moment: f64,
    pub grid: InteriorGrid,
    pub c: f64,
}

pub fn assemble(domain: &Domain, c: f64) -> Result<GalerkinSystem> {
    let space = domain.space();
    let n = space.dim();
    let k = space.k();
    let degree = galerkin_degree(n, domain.resolution().boundary);
    let basis = HarmonicBasis::for_domain(domain, degree);
    let nb = basis.len();
    // the particular solution is carried as the last column
    let nc = nb + 1;
    let grid = domain.interior_with_radial(domain.resolution().radial.max(degree + 8));
    let mut factor = DMatrix::<f64>::zeros(0, nc);
    // per-chunk partial sums, combined with compensated summation
    let mut load = vec![Vec::new(); nb];
    let mut moments = vec![Vec::new(); nc];
    for start in (0..grid.points.len()).step_by(CHUNK) {
        let mut load_chunk = vec![Vec::with_capacity(CHUNK); nb];
        let mut moment_chunk = vec![Vec::with_capacity(CHUNK); nc];
        let end = (start + CHUNK).min(grid.points.len());
        let mut rows: Vec<DMatrix<f64>> = (0..n).map(|_| DMatrix::zeros(end - start, nc)).collect();
        for p in start..end {
            let x = &grid.points[p];
            let bv = basis.evaluate(x, 1)?;
            let fp = basis.particular(x.r);
            let (sn, cs) = trig(k, x.r);
            // grad V / V is radial
            let dlog_v = -k * sn / cs;
            let wq = grid.weights[p];
            let scale = wq.sqrt();
            for i in 0..nc {
                let (psi, gr) = if i < nb { (bv.val[i], bv.grad[i * n]) } else { (fp[0], fp[1]) };
                rows[0][(p - start, i)] = scale * (gr - psi * dlog_v);
                for a in 1..n {
                    rows[a][(p - start, i)] = if i < nb { scale * bv.grad[i * n + a] } else { 0.0 };
                }
                if i < nb {
                    load_chunk[i].push(-wq * psi);
                }
                moment_chunk[i].push(wq * cs * psi);
            }
        }
        for i in 0..nc {
            if i < nb {
                load[i].push(neumaier_sum(load_chunk[i].drain(..)));
            }
            moments[i].push(neumaier_sum(moment_chunk[i].drain(..)));
        }
        let mut stacked = DMatrix::<f64>::zeros(factor.nrows() + n * (end - start), nc);
        stacked.view_mut((0, 0), (factor.nrows(), nc)).copy_from(&factor);
        for (a, r) in rows.iter().enumerate() {
            stacked
                .view_mut((factor.nrows() + a * (end - start), 0), (end - start, nc))
                .copy_from(r);
        }
        factor = stacked.qr().r();
    }
    for s in domain.boundary().samples() {
        let bv = basis.evaluate(&s.position, 0)?;
        for i in 0..nb {
            load[i].push(c * s.area_weight * bv.val[i]);
        }
    }
    if factor.nrows() < nc {
        return Err(Error::Solver("interior grid smaller than the Galerkin basis".into()));
    }
    let coupling = factor.view((0, 0), (nb, nb)).tr_mul(&factor.view((0, nb), (nb, 1)));
    let factor = factor.view((0, 0), (nb, nb)).into_owned();
    let rhs = DVector::from_iterator(nb, load.into_iter().map(neumaier_sum)) - coupling.column(0);
    let mut moments: Vec<f64> = moments.into_iter().map(neumaier_sum).collect();
    let particular_moment = moments.pop().unwrap_or(0.0);
    let moments = DVector::from_vec(moments);
    let matrix = factor.tr_mul(&factor);
    Ok(GalerkinSystem {
        basis,
        matrix,
        factor,
        rhs,
        moments,
        particular_moment,
        grid,
        c,
    })
}

/// `|int_Omega V - c int_M V| / int_Omega V` for a trial constant `c`.
pub fn compatibility_residual(domain: &Domain, c: f64) -> Result<f64> {
    let w = weighted_integrals(domain)?;
    Ok((w.weighted_volume - c * w.weighted_area).abs() / w.weighted_volume)
}

/// Relative singular value cutoff of the gauge-reduced Galerkin factor.
const SINGULAR_CUTOFF: f64 = 1e-14;

/// Solves `A x + lambda m = b`, `m . x = g` with `A = T^T T`, without
/// forming `A`: after column equilibration the constraint is eliminated with
/// a Householder reflector and the reduced problem is solved through the SVD
/// of `T Z`, dropping singular values below `SINGULAR_CUTOFF` (high modes
/// that are negligible on the domain).
fn solve_constrained(
    t: &DMatrix<f64>,
    a: &DMatrix<f64>,
    m: &DVector<f64>,
    g: f64,
    b: &DVector<f64>,
) -> Result<(DVector<f64>, f64)> {
    let nb = b.len();
    let d = DVector::from_iterator(
        nb,
        (0..nb).map(|i| {
            let norm = t.column(i).norm();
            if norm > 0.0 { 1.0 / norm } else { 1.0 }
        }),
    );
    let mut ts = t.clone();
    for j in 0..nb {
        ts.column_mut(j).scale_mut(d[j]);
    }
    let ms = m.component_mul(&d);
    let bs = b.component_mul(&d);
    // reflector H = I - 2 v v^T / v^T v with H ms = -sign(ms_0) |ms| e_0
    let mut v = ms.clone();
    let alpha = ms.norm();
    v[0] += if ms[0] >= 0.0 { alpha } else { -alpha };
    let vv = v.norm_squared();
    if !(alpha > 0.0 && vv > 0.0) {
        return Err(Error::Solver("vanishing gauge functional".into()));
    }
    let x0 = &ms * (g / (alpha * alpha));
    let mut z = DMatrix::<f64>::identity(nb, nb);
    z.ger(-2.0 / vv, &v, &v, 1.0);
    let z = z.columns(1, nb - 1).into_owned();
    let reduced = &ts * &z;
    let svd = reduced.svd(false, true);
    let vt = svd
        .v_t
        .ok_or_else(|| Error::Solver("SVD of the Galerkin factor failed".into()))?;
    let smax = svd.singular_values.max();
    let residual = &bs - ts.tr_mul(&(&ts * &x0));
    let proj = &vt * (z.transpose() * residual);
    let mut y = DVector::<f64>::zeros(nb - 1);
    for (i, s) in svd.singular_values.iter().enumerate() {
        if *s > SINGULAR_CUTOFF * smax {
            y[i] = proj[i] / (s * s);
        }
    }
    let xs = x0 + &z * (vt.transpose() * y);
    let x = xs.component_mul(&d);
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Solver("non-finite Galerkin coefficients".into()));
    }
    let lambda = m.dot(&(b - a * &x)) / m.norm_squared();
    Ok((x, lambda))
}

pub fn solve_weighted_neumann(domain: &Domain) -> Result<NeumannSolution> {
    check_inputs(domain)?;
    let c = compatibility_constant(domain)?;
    let compatibility = compatibility_residual(domain, c)?;
    if compatibility > COMPATIBILITY_TOLERANCE {
        return Err(Error::Solver(format!(
            "discrete compatibility residual {compatibility:.3e} exceeds {COMPATIBILITY_TOLERANCE:e}"
        )));
    }
    solve_with_constant(domain, c)
}

/// Galerkin solve for a prescribed boundary constant, without the
/// compatibility check. For incompatible `c` the gauge multiplier absorbs the
/// inconsistency and the boundary residual no longer vanishes.
pub fn solve_with_constant(domain: &Domain, c: f64) -> Result<NeumannSolution> {
    check_inputs(domain)?;
    let space = domain.space();
    let n = space.dim();
    let k = space.k();
    let compatibility = compatibility_residual(domain, c)?;
    let sys = assemble(domain, c)?;
    let nb = sys.basis.len();
    let (coeffs, multiplier) = solve_constrained(&sys.factor, &sys.matrix, &sys.moments, -sys.particular_moment, &sys.rhs)?;
    let gauge_integral = sys.moments.dot(&coeffs) + sys.particular_moment;
    let f_field = GalerkinField {
        basis: sys.basis,
        coeffs: coeffs.iter().copied().collect(),
    };
    let grid = domain.interior();
    let mut w_values = Vec::with_capacity(grid.points.len());
    let mut pde: f64 = 0.0;
    for x in &grid.points {
        let fj = f_field.jet(space, x)?;
        w_values.push(fj.value / trig(k, x.r).1);
        pde = pde.max((fj.laplacian() + n as f64 * k * fj.value - 1.0).abs());
    }
    let bc = crate::reilly::neumann_bc_residual(domain, &f_field, c)?;
    Ok(NeumannSolution {
        w_values,
        degree: f_field.basis.degree(),
        f_field,
        c,
        gauge_multiplier: multiplier,
        gauge_integral,
        residuals: NeumannResiduals {
            pde_interior: pde,
            bc_boundary: bc,
            compatibility,
        },
        basis_size: nb,
    })
}

/// Eigenvalues (ascending) of the assembled stiffness matrix after unit
/// diagonal scaling. The smallest one is the discrete kernel spanned by `V`.
pub fn operator_spectrum(domain: &Domain) -> Result<Vec<f64>> {
    let c = compatibility_constant(domain)?;
    let sys = assemble(domain, c)?;
    let nb = sys.basis.len();
    let mut a = sys.matrix;
    let d: Vec<f64> = (0..nb)
        .map(|i| 1.0 / (a[(i, i)] + sys.moments[i] * sys.moments[i]).sqrt())
        .collect();
    for i in 0..nb {
        for j in 0..nb {
            a[(i, j)] *= d[i] * d[j];
        }
    }
    let mut ev: Vec<f64> = SymmetricEigen::new(a).eigenvalues.iter().copied().collect();
    ev.sort_by(f64::total_cmp);
    Ok(ev)
}

fn fd_step(domain: &Domain) -> f64 {
    let mut h = (domain.max_radius() / 16.0).min(1e-2);
    if domain.space().curvature() == Curvature::Spherical {
        h = h.min((std::f64::consts::FRAC_PI_2 - domain.max_radius()) / 4.0);
    }
    h
}

// sixth-order central stencils on offsets -3..=3
const D1: [f64; 7] = [-1.0, 9.0, -45.0, 0.0, 45.0, -9.0, 1.0];
const D2: [f64; 7] = [2.0, -27.0, 270.0, -490.0, 270.0, -27.0, 2.0];

/// Residuals of `Lap f + nKf = 1` (max over interior nodes) and
/// `V f_nu - V_nu f = c V` (max over boundary samples), from sixth-order
/// finite differences of the values of `f` along geodesics.
pub fn verify_field(domain: &Domain, f: &dyn ScalarField, c: f64) -> Result<(f64, f64)> {
    let space = domain.space();
    let n = space.dim();
    let k = space.k();
    let h = fd_step(domain);
    let line = |x: &PolarPoint, d: &DVector<f64>| -> Result<[f64; 7]> {
        let mut out = [0.0; 7];
        for (j, v) in out.iter_mut().enumerate() {
            let t = (j as f64 - 3.0) * h;
            *v = if j == 3 {
                f.value(space, x)?
            } else {
                f.value(space, &geodesic_flow_point(space, x, d, t)?)?
            };
        }
        Ok(out)
    };
    let apply = |w: &[f64; 7], v: &[f64; 7]| neumaier_sum(w.iter().zip(v).map(|(a, b)| a * b));
    let mut pde: f64 = 0.0;
    for x in &domain.interior().points {
        let mut lap = 0.0;
        let mut f0 = 0.0;
        for i in 0..n {
            let mut d = DVector::zeros(n);
            d[i] = 1.0;
            let v = line(x, &d)?;
            f0 = v[3];
            lap += apply(&D2, &v) / (180.0 * h * h);
        }
        pde = pde.max((lap + n as f64 * k * f0 - 1.0).abs());
    }
    let mut bc: f64 = 0.0;
    for s in domain.boundary().samples() {
        let v = line(&s.position, &s.normal)?;
        let f_nu = apply(&D1, &v) / (60.0 * h);
        bc = bc.max((s.v * f_nu - s.v_nu * v[3] - c * s.v).abs());
    }
    Ok((pde, bc))
}

pub fn verify_transform(sol: &NeumannSolution, domain: &Domain) -> Result<(f64, f64)> {
    verify_field(domain, &sol.f_field, sol.c)
}

/// The Minkowski inequality reproduced through the Reilly identity applied to
/// the Neumann solution.
#[derive(Clone, Debug)]
pub struct ProofChain {
    /// `(n-1)/n int_Omega V`
    pub lhs: f64,
    /// `(n-1) c^2 int_M H V`
    pub rhs: f64,
    pub slack: f64,
    /// `int_Omega V |A - (tr A / n) g|^2` with `A = Hess f + K f g`.
    pub hessian_deficit: f64,
    pub quadratic_form: f64,
    /// `|slack - hessian_deficit - quadratic_form| / lhs`.
    pub accounting_error: f64,
    /// `lhs_bulk <= (n-1)/n int_Omega V`, up to `1e-9` relative.
    pub holder_ok: bool,
    pub convexity_margin: f64,
    /// Set when the weighted convexity condition fails; the chain is then
    /// evaluated but not asserted.
    pub hypothesis_warning: bool,
    pub breakdown: ReillyBreakdown,
    pub grouped: GroupedBoundaryForm,
    pub solution: NeumannSolution,
}

pub fn minkowski_via_reilly(domain: &Domain) -> Result<ProofChain> {
    let space = domain.space();
    let n = space.dim();
    let nf = n as f64;
    let k = space.k();
    let margin = convexity_margin(domain.boundary())?;
    let sol = solve_weighted_neumann(domain)?;
    let f = &sol.f_field;
    let breakdown = potential_breakdown(domain, f)?;
    let grouped = grouped_boundary_form_with(domain, f, sol.c, false)?;
    let w = weighted_integrals(domain)?;
    let lhs = (nf - 1.0) / nf * w.weighted_volume;
    let rhs = (nf - 1.0) * sol.c * sol.c * w.weighted_mean_curv;
    let grid = domain.interior();
    let mut deficit = Vec::with_capacity(grid.points.len());
    for (x, wq) in grid.points.iter().zip(&grid.weights) {
        let fj = f.jet(space, x)?;
        let vj = Potential.jet(space, x)?;
        let a = &fj.hess + DMatrix::identity(n, n) * (k * fj.value);
        let tr = a.trace();
        let free = a - DMatrix::identity(n, n) * (tr / nf);
        deficit.push(wq * vj.value * free.norm_squared());
    }
    let hessian_deficit = neumaier_sum(deficit);
    let slack = lhs - rhs;
    let accounting_error = (slack - hessian_deficit - grouped.quadratic_form).abs() / lhs;
    Ok(ProofChain {
        lhs,
        rhs,
        slack,
        hessian_deficit,
        quadratic_form: grouped.quadratic_form,
        accounting_error,
        holder_ok: breakdown.lhs_bulk <= lhs * (1.0 + 1e-9),
        convexity_margin: margin,
        hypothesis_warning: margin < -HYPOTHESIS_TOLERANCE,
        breakdown,
        grouped,
        solution: sol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{Resolution, Shape};
    use crate::field::{FieldSum, Radius};
    use std::f64::consts::{FRAC_PI_4, PI};

    /// Regular solution of `f'' + (cs/sn) f' + 2K f = 1` with `f(0) = 0`, by
    /// RK4 from a Taylor start.
    fn radial_particular(k: f64, r: f64) -> f64 {
        let r0 = 1e-4;
        // f = r^2/4 + O(r^4)
        let mut y = [r0 * r0 / 4.0, r0 / 2.0];
        let rhs = |t: f64, y: [f64; 2]| {
            let (sn, cs) = trig(k, t);
            [y[1], 1.0 - cs / sn * y[1] - 2.0 * k * y[0]]
        };
        let steps = ((r - r0) / 2e-4).ceil().max(1.0) as usize;
        let h = (r - r0) / steps as f64;
        let mut t = r0;
        for _ in 0..steps {
            let a = rhs(t, y);
            let b = rhs(t + h / 2.0, [y[0] + h / 2.0 * a[0], y[1] + h / 2.0 * a[1]]);
            let c = rhs(t + h / 2.0, [y[0] + h / 2.0 * b[0], y[1] + h / 2.0 * b[1]]);
            let d = rhs(t + h, [y[0] + h * c[0], y[1] + h * c[1]]);
            y[0] += h / 6.0 * (a[0] + 2.0 * b[0] + 2.0 * c[0] + d[0]);
            y[1] += h / 6.0 * (a[1] + 2.0 * b[1] + 2.0 * c[1] + d[1]);
            t += h;
        }
        y[0]
    }

    fn radial_oracle_error(k: i32, big_r: f64) -> f64 {
        let space = SpaceForm::from_sign(k, 2).unwrap();
        let d = Domain::new(space, Shape::ball(0.0, big_r), Resolution::new(128)).unwrap();
        let sol = solve_weighted_neumann(&d).unwrap();
        let kf = k as f64;
        let alpha = sol.f_field.value(&space, &PolarPoint::planar(0.0, 0.0)).unwrap();
        let mut err: f64 = 0.0;
        let mut cache: Vec<(f64, f64)> = Vec::new();
        for x in &d.interior().points {
            let fp = match cache.iter().find(|(r, _)| (r - x.r).abs() < 1e-15) {
                Some(&(_, v)) => v,
                None => {
                    let v = radial_particular(kf, x.r);
                    cache.push((x.r, v));
                    v
                }
            };
            let f = sol.f_field.value(&space, x).unwrap();
            err = err.max((f - fp - alpha * trig(kf, x.r).1).abs());
        }
        err
    }

    #[test]
    fn radial_modes_solve_the_radial_equation() {
        let h = 2e-4;
        for (k, n) in [(-1.0, 2), (1.0, 2), (0.0, 2), (-1.0, 3), (1.0, 3), (0.0, 3)] {
            let nf = n as f64;
            for l in 0..12 {
                let lf = l as f64;
                for r in [0.3, 0.8, 1.2] {
                    let v = |t: f64| radial_mode(k, n, l, t).0;
                    let d1 = (v(r - 2.0 * h) - 8.0 * v(r - h) + 8.0 * v(r + h) - v(r + 2.0 * h)) / (12.0 * h);
                    let d2 = (-v(r - 2.0 * h) + 16.0 * v(r - h) - 30.0 * v(r) + 16.0 * v(r + h) - v(r + 2.0 * h))
                        / (12.0 * h * h);
                    let (sn, cs) = trig(k, r);
                    let (u, du) = radial_mode(k, n, l, r);
                    let scale = u.abs().max(du.abs());
                    assert!((du - d1).abs() < 1e-7 * scale, "k={k} n={n} l={l} r={r}");
                    let ode = d2 + (nf - 1.0) * cs / sn * du - lf * (lf + nf - 2.0) / (sn * sn) * u + nf * k * u;
                    assert!(ode.abs() < 1e-6 * scale, "k={k} n={n} l={l} r={r}: {ode:e}");
                }
            }
        }
    }

    #[test]
    fn planar_modes_match_closed_forms() {
        // tanh^m(r/2)(m + cosh r) and tan^m(r/2)(m + cos r), up to scale
        for m in 0..8 {
            let mf = m as f64;
            let hyp = |r: f64| (0.5 * r).tanh().powi(m) * (mf + r.cosh());
            let sph = |r: f64| (0.5 * r).tan().powi(m) * (mf + r.cos());
            let kh = radial_mode(-1.0, 2, m as usize, 0.5).0 / hyp(0.5);
            let ks = radial_mode(1.0, 2, m as usize, 0.5).0 / sph(0.5);
            for r in [0.2f64, 0.9, 1.4] {
                let (u, v) = (radial_mode(-1.0, 2, m as usize, r).0, radial_mode(1.0, 2, m as usize, r).0);
                assert!((u - kh * hyp(r)).abs() < 1e-13 * u.abs(), "m={m} r={r}");
                assert!((v - ks * sph(r)).abs() < 1e-13 * v.abs(), "m={m} r={r}");
            }
        }
        assert!((radial_mode(-1.0, 3, 0, 0.7).0 - 0.7f64.cosh()).abs() < 1e-15);
        assert!((radial_mode(1.0, 3, 0, 0.7).0 - 0.7f64.cos()).abs() < 1e-15);
    }

    #[test]
    fn euclidean_disk_solution() {
        let e2 = SpaceForm::euclidean(2).unwrap();
        let d = Domain::new(e2, Shape::ball(0.0, 1.0), Resolution::new(64)).unwrap();
        let sol = solve_weighted_neumann(&d).unwrap();
        assert!((sol.c - 0.5).abs() < 1e-13);
        let f0 = sol.f_field.value(&e2, &PolarPoint::planar(0.0, 0.0)).unwrap();
        for x in &d.interior().points {
            let f = sol.f_field.value(&e2, x).unwrap();
            assert!((f - f0 - x.r * x.r / 4.0).abs() < 1e-10);
        }
        assert!(sol.gauge_integral.abs() < 1e-12);
    }

    #[test]
    fn hyperbolic_disk_matches_radial_ode() {
        assert!(radial_oracle_error(-1, 1.0) < 1e-6);
    }

    #[test]
    fn spherical_disk_matches_radial_ode() {
        assert!(radial_oracle_error(1, FRAC_PI_4) < 1e-6);
    }

    #[test]
    fn radial_oracle_agrees_with_closed_form() {
        // -1/2 + cosh r / 2 vanishes at the origin
        for r in [0.1, 0.5, 1.0] {
            let exact = -0.5 + 0.5 * f64::cosh(r);
            assert!((radial_particular(-1.0, r) - exact).abs() < 1e-11);
        }
    }

    #[test]
    fn compatibility_constants_of_balls() {
        let h2 = SpaceForm::hyperbolic(2).unwrap();
        let d = Domain::new(h2, Shape::ball(0.0, 1.0), Resolution::new(64)).unwrap();
        let sol = solve_weighted_neumann(&d).unwrap();
        assert!((sol.c - 1f64.tanh() / 2.0).abs() < 1e-12);
        assert!((sol.c - 0.3807971).abs() < 1e-7);
        assert!(sol.gauge_integral.abs() < 1e-10);
        let h3 = SpaceForm::hyperbolic(3).unwrap();
        let d = Domain::new(h3, Shape::ball(0.0, 0.8), Resolution::new(32)).unwrap();
        assert!((compatibility_constant(&d).unwrap() - 0.8f64.tanh() / 3.0).abs() < 1e-12);
        let s2 = SpaceForm::hemisphere(2).unwrap();
        let d = Domain::new(s2, Shape::ball(0.0, FRAC_PI_4), Resolution::new(64)).unwrap();
        assert!((compatibility_constant(&d).unwrap() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn compatibility_perturbation_is_detected() {
        let h2 = SpaceForm::hyperbolic(2).unwrap();
        let d = Domain::new(h2, Shape::ball(0.5, 0.7), Resolution::new(64)).unwrap();
        let c = compatibility_constant(&d).unwrap();
        assert!(compatibility_residual(&d, c).unwrap() < 1e-14);
        let bad = compatibility_residual(&d, c + 1e-3).unwrap();
        assert!(bad > 1e-4 && bad < 1e-2, "{bad}");
        let good = solve_with_constant(&d, c).unwrap();
        let off = solve_with_constant(&d, c + 1e-3).unwrap();
        assert!(good.gauge_multiplier.abs() < 1e-10);
        assert!(off.gauge_multiplier.abs() > 1e-5);
        // the particular solution keeps the equation exact; the boundary
        // condition cannot be met
        assert!(off.residuals.pde_interior < 1e-10);
        assert!(off.residuals.bc_boundary > 1e-5);
    }

    #[test]
    fn transform_residuals_refine() {
        for (k, big_r) in [(-1, 1.0), (1, FRAC_PI_4)] {
            let space = SpaceForm::from_sign(k, 2).unwrap();
            for (level, tol) in [(128, 1e-5), (256, 2.5e-6)] {
                let d = Domain::new(space, Shape::ball(0.0, big_r), Resolution::new(level)).unwrap();
                let sol = solve_weighted_neumann(&d).unwrap();
                let (pde, bc) = verify_transform(&sol, &d).unwrap();
                assert!(pde < tol && bc < tol, "k={k} level={level}: {pde:e} {bc:e}");
            }
        }
    }

    #[test]
    fn kernel_shift_is_invisible_and_other_shifts_are_not() {
        let h2 = SpaceForm::hyperbolic(2).unwrap();
        let d = Domain::new(h2, Shape::ball(0.3, 0.8), Resolution::new(64)).unwrap();
        let sol = solve_weighted_neumann(&d).unwrap();
        let (pde, bc) = verify_transform(&sol, &d).unwrap();
        let shifted = FieldSum(vec![(1.0, &sol.f_field), (0.37, &Potential)]);
        let (pde_v, bc_v) = verify_field(&d, &shifted, sol.c).unwrap();
        assert!((pde - pde_v).abs() < 1e-10 && (bc - bc_v).abs() < 1e-10, "{pde:e} {pde_v:e} {bc:e} {bc_v:e}");
        let bent = FieldSum(vec![(1.0, &sol.f_field), (0.37, &Radius)]);
        let (pde_r, bc_r) = verify_field(&d, &bent, sol.c).unwrap();
        assert!(pde_r > 0.1 && bc_r > 0.1, "{pde_r} {bc_r}");
    }

    #[test]
    fn stiffness_is_symmetric_with_potential_kernel() {
        let h2 = SpaceForm::hyperbolic(2).unwrap();
        let d = Domain::new(h2, Shape::ball(0.3, 0.8), Resolution::new(16)).unwrap();
        let sys = assemble(&d, 0.3).unwrap();
        let asym = (&sys.matrix - sys.matrix.transpose()).amax() / sys.matrix.amax();
        assert!(asym < 1e-12);
        let ev = operator_spectrum(&d).unwrap();
        let top = ev[ev.len() - 1];
        assert!(ev[0].abs() < 1e-10 * top, "{:e}", ev[0] / top);
        assert!(ev[1] > 1e3 * ev[0].abs().max(1e-16 * top));
    }

    #[test]
    fn euclidean_kernel_is_exact() {
        let e2 = SpaceForm::euclidean(2).unwrap();
        let d = Domain::new(e2, Shape::fourier(vec![1.0, 0.1, 0.0]), Resolution::new(16)).unwrap();
        let ev = operator_spectrum(&d).unwrap();
        assert!(ev[0].abs() < 1e-14 * ev[ev.len() - 1]);
    }

    #[test]
    fn proof_chain_on_balls_and_stars() {
        let h2 = SpaceForm::hyperbolic(2).unwrap();
        let d = Domain::new(h2, Shape::ball(0.0, 1.0), Resolution::new(64)).unwrap();
        let p = minkowski_via_reilly(&d).unwrap();
        assert!((p.lhs - 0.5 * PI * 1f64.sinh().powi(2)).abs() < 1e-10);
        assert!(p.slack.abs() < 1e-7);
        assert!(p.hessian_deficit < 1e-6);
        assert!(p.holder_ok && !p.hypothesis_warning);
        let d = Domain::new(h2, Shape::ball(0.5, 0.7), Resolution::new(64)).unwrap();
        assert!(minkowski_via_reilly(&d).unwrap().slack.abs() < 1e-6);
        let d = Domain::new(h2, Shape::fourier(vec![1.0, 0.0, 0.0, 0.0, 0.0, 0.05, 0.0]), Resolution::new(128))
            .unwrap();
        let p = minkowski_via_reilly(&d).unwrap();
        assert!(p.slack > 1e-3);
        assert!(p.accounting_error < 1e-6);
        assert!(p.holder_ok);
    }

    #[test]
    fn three_dimensional_ball() {
        let h3 = SpaceForm::hyperbolic(3).unwrap();
        let d = Domain::new(h3, Shape::ball(0.0, 1.0), Resolution::new(32)).unwrap();
        let p = minkowski_via_reilly(&d).unwrap();
        assert!(p.solution.residuals.pde_interior < 1e-4);
        assert!(p.slack.abs() < 1e-7);
    }

    #[test]
    fn rejects_degenerate_domains() {
        let s2 = SpaceForm::hemisphere(2).unwrap();
        let d = Domain::new(s2, Shape::ball(0.0, 1.565), Resolution::new(16)).unwrap();
        assert!(matches!(
            solve_weighted_neumann(&d),
            Err(Error::Precondition { name: "equator_margin", .. })
        ));
        let h2 = SpaceForm::hyperbolic(2).unwrap();
        let d = Domain::new(h2, Shape::ball(0.0, 5e-4), Resolution::new(16)).unwrap();
        assert!(matches!(
            solve_weighted_neumann(&d),
            Err(Error::Precondition { name: "min_radius", .. })
        ));
    }
}
