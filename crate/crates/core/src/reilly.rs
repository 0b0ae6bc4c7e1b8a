//! Term-by-term evaluation of the weighted Reilly identity
//!
//! ```text
//! int_Omega W ((Lap f + nKf)^2 - |Hess f + K f g|^2)
//!   = int_M W (2 u Lap_M z + (n-1) H u^2 + h(grad z, grad z) + (2n-2) K u z)
//!   + int_M W_nu (|grad z|^2 - (n-1) K z^2)
//!   + int_Omega (Hess W - Lap W g - (2n-2) K W g + W Ric)(grad f, grad f)
//!   + (n-1) int_Omega (K Lap W + n K^2 W) f^2
//! ```
//!
//! with `z = f|_M`, `u = df(nu)`, an arbitrary real `K` and the ambient Ricci
//! tensor `Ric = (n-1) K_ambient g`.

use nalgebra::{DMatrix, DVector};

use crate::domain::{min_eigenvalue, Domain};
use crate::error::{Error, Result};
use crate::field::{Jet, Potential, ScalarField};
use crate::quadrature::compatibility_constant;
use crate::spectral::neumaier_sum;

/// Boundary-condition tolerance required before regrouping the boundary
/// terms.
pub const GROUPING_BC_TOLERANCE: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ReillyBreakdown {
    pub lhs_bulk: f64,
    pub b_main: f64,
    pub b_vnu: f64,
    pub t_ricci: f64,
    pub t_zero: f64,
    pub residual: f64,
}

impl ReillyBreakdown {
    pub fn rhs(&self) -> f64 {
        self.b_main + self.b_vnu + self.t_ricci + self.t_zero
    }

    /// `|residual| / max(|lhs_bulk|, 1)`.
    pub fn relative_residual(&self) -> f64 {
        self.residual.abs() / self.lhs_bulk.abs().max(1.0)
    }
}

/// Traces of a field on the boundary: `z`, `u = df(nu)` and the intrinsic
/// gradient and Laplacian of `z`.
pub(crate) struct BoundaryTrace {
    pub z: Vec<f64>,
    pub u: Vec<f64>,
    pub grad: Vec<DVector<f64>>,
    pub lap: Vec<f64>,
}

pub(crate) fn boundary_trace(domain: &Domain, f: &dyn ScalarField) -> Result<BoundaryTrace> {
    let space = domain.space();
    let bg = domain.boundary();
    let mut z = Vec::with_capacity(bg.len());
    let mut u = Vec::with_capacity(bg.len());
    for s in bg.samples() {
        let jet = f.jet(space, &s.position)?;
        z.push(jet.value);
        u.push(jet.grad.dot(&s.normal));
    }
    let grad = bg.gradient(&z);
    let lap = bg.laplacian(&z);
    Ok(BoundaryTrace { z, u, grad, lap })
}

fn positive_weight(w: &Jet, where_: &str) -> Result<()> {
    if w.value > 0.0 {
        Ok(())
    } else {
        Err(Error::Precondition {
            name: "positive_weight",
            detail: format!("weight = {} at {where_}", w.value),
        })
    }
}

pub fn reilly_breakdown(
    domain: &Domain,
    f: &dyn ScalarField,
    weight: &dyn ScalarField,
    k_param: f64,
) -> Result<ReillyBreakdown> {
    let space = domain.space();
    let n = space.dim();
    let nf = n as f64;
    let ric = (nf - 1.0) * space.k();
    let grid = domain.interior();
    let id = DMatrix::<f64>::identity(n, n);

    let mut lhs = Vec::with_capacity(grid.points.len());
    let mut ricci = Vec::with_capacity(grid.points.len());
    let mut zero = Vec::with_capacity(grid.points.len());
    for (x, wq) in grid.points.iter().zip(&grid.weights) {
        let fj = f.jet(space, x)?;
        let wj = weight.jet(space, x)?;
        positive_weight(&wj, "an interior node")?;
        let a = &fj.hess + &id * (k_param * fj.value);
        let tr = fj.laplacian() + k_param * nf * fj.value;
        lhs.push(wq * wj.value * (tr * tr - a.norm_squared()));
        let lap_w = wj.laplacian();
        let t = &wj.hess + &id * (-lap_w - (2.0 * nf - 2.0) * k_param * wj.value + wj.value * ric);
        ricci.push(wq * (fj.grad.transpose() * &t * &fj.grad)[(0, 0)]);
        zero.push(wq * (nf - 1.0) * (k_param * lap_w + nf * k_param * k_param * wj.value) * fj.value * fj.value);
    }

    let bg = domain.boundary();
    let tr = boundary_trace(domain, f)?;
    let mut main = Vec::with_capacity(bg.len());
    let mut vnu = Vec::with_capacity(bg.len());
    for (i, s) in bg.samples().iter().enumerate() {
        let wj = weight.jet(space, &s.position)?;
        positive_weight(&wj, "a boundary sample")?;
        let w_nu = wj.grad.dot(&s.normal);
        let (z, u, g) = (tr.z[i], tr.u[i], &tr.grad[i]);
        let hgg = (g.transpose() * &s.h * g)[(0, 0)];
        main.push(
            wj.value
                * (2.0 * u * tr.lap[i]
                    + (nf - 1.0) * s.mean_curvature * u * u
                    + hgg
                    + (2.0 * nf - 2.0) * k_param * u * z),
        );
        vnu.push(w_nu * (g.norm_squared() - (nf - 1.0) * k_param * z * z));
    }

    let lhs_bulk = neumaier_sum(lhs);
    let t_ricci = neumaier_sum(ricci);
    let t_zero = neumaier_sum(zero);
    let b_main = bg.integrate(&main);
    let b_vnu = bg.integrate(&vnu);
    Ok(ReillyBreakdown {
        lhs_bulk,
        b_main,
        b_vnu,
        t_ricci,
        t_zero,
        residual: lhs_bulk - (b_main + b_vnu + t_ricci + t_zero),
    })
}

/// Max-norm residuals of `grad_M V_nu = h(grad_M V)` and
/// `Lap_M V = -(n-1) K V - (n-1) H V_nu` on the boundary, with both sides
/// built from intrinsic differentiation of the boundary traces.
pub fn boundary_identity_residuals(domain: &Domain) -> Result<(f64, f64)> {
    let bg = domain.boundary();
    let k = domain.space().k();
    let nf = domain.space().dim() as f64;
    let v: Vec<f64> = bg.samples().iter().map(|s| s.v).collect();
    let v_nu: Vec<f64> = bg.samples().iter().map(|s| s.v_nu).collect();
    let grad_v = bg.gradient(&v);
    let grad_vnu = bg.gradient(&v_nu);
    let lap_v = bg.laplacian(&v);
    let mut r_ss: f64 = 0.0;
    let mut r_rr: f64 = 0.0;
    for (i, s) in bg.samples().iter().enumerate() {
        r_ss = r_ss.max((&grad_vnu[i] - &s.h * &grad_v[i]).amax());
        let rhs = -(nf - 1.0) * k * s.v - (nf - 1.0) * s.mean_curvature * s.v_nu;
        r_rr = r_rr.max((lap_v[i] - rhs).abs());
    }
    Ok((r_ss, r_rr))
}

/// Boundary terms regrouped under the Neumann condition
/// `V u - V_nu z = c V`.
#[derive(Clone, Debug, PartialEq)]
pub struct GroupedBoundaryForm {
    /// `(n-1) c^2 int_M H V`
    pub mean_curv_term: f64,
    /// `int_M V h(w, w) - V_nu |w|^2` with `w = grad z - z grad V / V`
    pub quadratic_form: f64,
    /// Per-sample smallest eigenvalue of `V h - V_nu Id`.
    pub pointwise_margins: Vec<f64>,
    pub bc_residual: f64,
    pub c: f64,
}

/// Max-norm residual of `V u - V_nu z - c V` on the boundary.
pub fn neumann_bc_residual(domain: &Domain, f: &dyn ScalarField, c: f64) -> Result<f64> {
    let tr = boundary_trace(domain, f)?;
    Ok(domain
        .boundary()
        .samples()
        .iter()
        .enumerate()
        .map(|(i, s)| (s.v * tr.u[i] - s.v_nu * tr.z[i] - c * s.v).abs())
        .fold(0.0, f64::max))
}

pub fn grouped_boundary_form(domain: &Domain, f: &dyn ScalarField) -> Result<GroupedBoundaryForm> {
    let c = compatibility_constant(domain)?;
    grouped_boundary_form_with(domain, f, c, true)
}

pub(crate) fn grouped_boundary_form_with(
    domain: &Domain,
    f: &dyn ScalarField,
    c: f64,
    enforce: bool,
) -> Result<GroupedBoundaryForm> {
    let bg = domain.boundary();
    let nf = domain.space().dim() as f64;
    let bc = neumann_bc_residual(domain, f, c)?;
    if enforce && bc > GROUPING_BC_TOLERANCE {
        return Err(Error::Precondition {
            name: "neumann_boundary_condition",
            detail: format!("boundary residual {bc:.3e} exceeds {GROUPING_BC_TOLERANCE:e}"),
        });
    }
    let tr = boundary_trace(domain, f)?;
    let v: Vec<f64> = bg.samples().iter().map(|s| s.v).collect();
    let grad_v = bg.gradient(&v);
    let mut hv = Vec::with_capacity(bg.len());
    let mut quad = Vec::with_capacity(bg.len());
    let mut margins = Vec::with_capacity(bg.len());
    for (i, s) in bg.samples().iter().enumerate() {
        let w = &tr.grad[i] - &grad_v[i] * (tr.z[i] / s.v);
        let hww = (w.transpose() * &s.h * &w)[(0, 0)];
        quad.push(s.v * hww - s.v_nu * w.norm_squared());
        hv.push((nf - 1.0) * c * c * s.mean_curvature * s.v);
        let m = &s.h * s.v - DMatrix::identity(s.h.nrows(), s.h.nrows()) * s.v_nu;
        margins.push(min_eigenvalue(&m));
    }
    Ok(GroupedBoundaryForm {
        mean_curv_term: bg.integrate(&hv),
        quadratic_form: bg.integrate(&quad),
        pointwise_margins: margins,
        bc_residual: bc,
        c,
    })
}

/// Reilly breakdown with the model potential as weight and `K` equal to the
/// ambient curvature, the configuration used by the Minkowski argument.
pub fn potential_breakdown(domain: &Domain, f: &dyn ScalarField) -> Result<ReillyBreakdown> {
    reilly_breakdown(domain, f, &Potential, domain.space().k())
}
