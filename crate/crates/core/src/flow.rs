//! Outward equidistant flow `Omega_t = {x : dist(x, Omega) <= t}`, the
//! variational formulas for `A(t) = int_{Omega_t} V` and
//! `S(t) = int_{M_t} V`, and the concavity of `A^{1/n}`.
//!
//! Along each normal geodesic the data obey
//!
//! ```text
//! kappa' = -kappa^2 - K,   J' = (sum kappa) J,   V' = V_nu,   V_nu' = -K V,
//! ```
//!
//! which have the closed forms `kappa(t) = (kappa cs - K sn) / (cs + kappa sn)`,
//! `J(t) = J prod(cs + kappa sn)`, `V(t) = cs V + sn V_nu`,
//! `V_nu(t) = -K sn V + cs V_nu` with `(sn, cs) = (sn_K(t), cs_K(t))`.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::domain::{Domain, Layout};
use crate::error::{Error, Result};
use crate::quadrature::{unit_sphere_area, weighted_integrals};
use crate::spaceform::{trig, Curvature, PolarPoint, SpaceForm};
use crate::spectral::{fd_weights, gauss_legendre_unit, neumaier_sum, periodic_derivative};

/// Distance kept from the hemisphere exit time.
pub const EXIT_MARGIN: f64 = 1e-2;

const STENCIL: usize = 7;

/// Data transported along one normal geodesic.
#[derive(Clone, Debug, PartialEq)]
pub struct FlowSample {
    pub position: PolarPoint,
    /// Unit normal (flow direction) in the polar frame at `position`.
    pub normal: DVector<f64>,
    /// Principal curvatures, ascending.
    pub kappa: Vec<f64>,
    /// Area element relative to `t = 0`.
    pub j: f64,
    pub v: f64,
    pub v_nu: f64,
    /// Quadrature weight of the sample on the initial boundary.
    pub area_weight: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FlowState {
    pub space: SpaceForm,
    pub layout: Layout,
    pub t: f64,
    pub samples: Vec<FlowSample>,
}

impl FlowState {
    /// Initial state on the boundary of `domain`. All principal curvatures
    /// must be positive so the outward flow has no caustics.
    pub fn initial(domain: &Domain) -> Result<Self> {
        let bg = domain.boundary();
        let mut samples = Vec::with_capacity(bg.len());
        for (i, s) in bg.samples().iter().enumerate() {
            let mut kappa: Vec<f64> = SymmetricEigen::new(s.h.clone()).eigenvalues.iter().copied().collect();
            kappa.sort_by(f64::total_cmp);
            if !(kappa[0] > 0.0) {
                return Err(Error::Precondition {
                    name: "initial_convexity",
                    detail: format!("principal curvature {} at sample {i}", kappa[0]),
                });
            }
            samples.push(FlowSample {
                position: s.position.clone(),
                normal: s.normal.clone(),
                kappa,
                j: 1.0,
                v: s.v,
                v_nu: s.v_nu,
                area_weight: s.area_weight,
            });
        }
        Ok(FlowState {
            space: *domain.space(),
            layout: bg.layout(),
            t: 0.0,
            samples,
        })
    }

    /// `int_{M_t} V`.
    pub fn weighted_area(&self) -> f64 {
        neumaier_sum(self.samples.iter().map(|s| s.area_weight * s.j * s.v))
    }

    /// `int_{M_t} (n - 1) H V`.
    pub fn weighted_mean_curv(&self) -> f64 {
        neumaier_sum(
            self.samples
                .iter()
                .map(|s| s.area_weight * s.j * s.v * s.kappa.iter().sum::<f64>()),
        )
    }

    /// First time at which some normal geodesic reaches the equator
    /// (hemisphere only).
    pub fn exit_time(&self) -> Option<f64> {
        if self.space.curvature() != Curvature::Spherical {
            return None;
        }
        // V(tau) = cos(tau) V + sin(tau) V_nu vanishes at atan2(V, -V_nu)
        Some(
            self.samples
                .iter()
                .map(|s| s.v.atan2(-s.v_nu))
                .fold(f64::INFINITY, f64::min),
        )
    }

    /// `int_{M_{t + tau}} V` from the closed forms, without moving samples.
    fn weighted_area_after(&self, tau: f64) -> f64 {
        let k = self.space.k();
        let (sn, cs) = trig(k, tau);
        neumaier_sum(self.samples.iter().map(|s| {
            let j: f64 = s.kappa.iter().map(|kap| cs + kap * sn).product();
            s.area_weight * s.j * j * (cs * s.v + sn * s.v_nu)
        }))
    }
}

fn check_step(state: &FlowState, dt: f64) -> Result<()> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Precondition {
            name: "positive_step",
            detail: format!("dt = {dt}"),
        });
    }
    if let Some(exit) = state.exit_time() {
        if dt >= exit {
            return Err(Error::HemisphereExit {
                t_max: state.t + dt,
                exit_bound: state.t + exit,
            });
        }
    }
    Ok(())
}

fn moved(space: &SpaceForm, s: &FlowSample, dt: f64) -> Result<(PolarPoint, DVector<f64>)> {
    space.geodesic(&s.position, &s.normal, dt).map_err(|e| match e {
        Error::Hemisphere { r, .. } => Error::HemisphereExit {
            t_max: dt,
            exit_bound: r,
        },
        other => other,
    })
}

fn caustic_check(t: f64, index: usize, j: f64) -> Result<()> {
    if j > 0.0 && j.is_finite() {
        Ok(())
    } else {
        Err(Error::Caustic {
            t,
            sample: index,
            jacobian: j,
        })
    }
}

/// Advances every sample by `dt` along its normal geodesic with the closed
/// form solutions of the transport equations.
pub fn flow_advance(state: &FlowState, dt: f64) -> Result<FlowState> {
    check_step(state, dt)?;
    let space = state.space;
    let k = space.k();
    let (sn, cs) = trig(k, dt);
    let t = state.t + dt;
    let mut samples = Vec::with_capacity(state.samples.len());
    for (i, s) in state.samples.iter().enumerate() {
        let (position, normal) = moved(&space, s, dt)?;
        let mut j = s.j;
        let mut kappa = Vec::with_capacity(s.kappa.len());
        for &kap in &s.kappa {
            let den = cs + kap * sn;
            j *= den;
            kappa.push((kap * cs - k * sn) / den);
        }
        caustic_check(t, i, j)?;
        samples.push(FlowSample {
            position,
            normal,
            kappa,
            j,
            v: cs * s.v + sn * s.v_nu,
            v_nu: -k * sn * s.v + cs * s.v_nu,
            area_weight: s.area_weight,
        });
    }
    Ok(FlowState {
        space,
        layout: state.layout,
        t,
        samples,
    })
}

/// Same as [`flow_advance`] with the transport equations integrated by the
/// classical fourth-order Runge-Kutta method. Substeps are sized by the
/// largest curvature so that `h max(1, |kappa|) <= 0.02`.
pub fn flow_advance_rk4(state: &FlowState, dt: f64) -> Result<FlowState> {
    check_step(state, dt)?;
    let space = state.space;
    let k = space.k();
    let t = state.t + dt;
    let mut samples = Vec::with_capacity(state.samples.len());
    for (i, s) in state.samples.iter().enumerate() {
        let (position, normal) = moved(&space, s, dt)?;
        let m = s.kappa.len();
        // y = (kappa_1..kappa_m, log J, V, V_nu)
        let mut y: Vec<f64> = s.kappa.clone();
        y.extend([s.j.ln(), s.v, s.v_nu]);
        let rhs = |y: &[f64]| -> Vec<f64> {
            let mut d: Vec<f64> = y[..m].iter().map(|kap| -kap * kap - k).collect();
            d.push(y[..m].iter().sum());
            d.push(y[m + 2]);
            d.push(-k * y[m + 1]);
            d
        };
        let scale = s.kappa.iter().fold(1.0f64, |a, kap| a.max(kap.abs()));
        let steps = (dt * scale / 0.02).ceil().max(1.0) as usize;
        let h = dt / steps as f64;
        for _ in 0..steps {
            let axpy = |a: &[f64], b: &[f64], c: f64| -> Vec<f64> {
                a.iter().zip(b).map(|(x, y)| x + c * y).collect()
            };
            let k1 = rhs(&y);
            let k2 = rhs(&axpy(&y, &k1, h / 2.0));
            let k3 = rhs(&axpy(&y, &k2, h / 2.0));
            let k4 = rhs(&axpy(&y, &k3, h));
            for q in 0..y.len() {
                y[q] += h / 6.0 * (k1[q] + 2.0 * k2[q] + 2.0 * k3[q] + k4[q]);
            }
        }
        let j = y[m].exp();
        caustic_check(t, i, j)?;
        samples.push(FlowSample {
            position,
            normal,
            kappa: y[..m].to_vec(),
            j,
            v: y[m + 1],
            v_nu: y[m + 2],
            area_weight: s.area_weight,
        });
    }
    Ok(FlowState {
        space,
        layout: state.layout,
        t,
        samples,
    })
}

#[derive(Clone, Debug)]
pub struct FlowTrace {
    pub dim: usize,
    pub k: f64,
    pub times: Vec<f64>,
    /// `A(t) = int_{Omega_t} V`
    pub a: Vec<f64>,
    /// `S(t) = int_{M_t} V`
    pub s: Vec<f64>,
    /// `int_{M_t} (n - 1) H V`
    pub mh: Vec<f64>,
    /// `A^{1/n}`
    pub a_pow: Vec<f64>,
    /// `(A^{1/n})'' + K A^{1/n}` from finite differences of `a_pow`.
    pub concavity_residuals: Vec<f64>,
    /// The same quantity from `A' = S`, `A'' = MH - nKA`.
    pub concavity_analytic: Vec<f64>,
    pub final_state: FlowState,
}

/// Finite-difference derivative of order `m` at node `i` from the
/// `STENCIL` nearest nodes.
fn node_derivative(times: &[f64], values: &[f64], i: usize, m: usize) -> f64 {
    let width = STENCIL.min(times.len());
    let start = i.saturating_sub(width / 2).min(times.len() - width);
    let w = fd_weights(times[i], &times[start..start + width], m);
    neumaier_sum((0..width).map(|q| w[m][q] * values[start + q]))
}

/// Traces the flow of `domain` to `t_max` in `steps` equal steps.
pub fn flow_trace(domain: &Domain, t_max: f64, steps: usize) -> Result<FlowTrace> {
    let state = FlowState::initial(domain)?;
    let a0 = weighted_integrals(domain)?.weighted_volume;
    flow_trace_from(&state, a0, t_max, steps)
}

/// Continues a flow from `state`, where `a0` is the weighted volume enclosed
/// by it.
pub fn flow_trace_from(state: &FlowState, a0: f64, t_max: f64, steps: usize) -> Result<FlowTrace> {
    if steps == 0 || !(t_max > 0.0) {
        return Err(Error::Precondition {
            name: "trace_steps",
            detail: format!("t_max = {t_max}, steps = {steps}"),
        });
    }
    if let Some(exit) = state.exit_time() {
        if t_max > exit - EXIT_MARGIN {
            return Err(Error::HemisphereExit {
                t_max,
                exit_bound: exit,
            });
        }
    }
    let n = state.space.dim();
    let k = state.space.k();
    let dt = t_max / steps as f64;
    let rule = gauss_legendre_unit(10)?;
    let mut times = vec![state.t];
    let mut a = vec![a0];
    let mut s = vec![state.weighted_area()];
    let mut mh = vec![state.weighted_mean_curv()];
    let mut current = state.clone();
    for i in 0..steps {
        let gained = neumaier_sum(rule.iter().map(|(x, w)| w * dt * current.weighted_area_after(x * dt)));
        current = flow_advance(&current, dt)?;
        times.push(state.t + (i + 1) as f64 * dt);
        a.push(a[i] + gained);
        s.push(current.weighted_area());
        mh.push(current.weighted_mean_curv());
    }
    let nf = n as f64;
    let a_pow: Vec<f64> = a.iter().map(|v| v.powf(1.0 / nf)).collect();
    let concavity_residuals = (0..times.len())
        .map(|i| node_derivative(&times, &a_pow, i, 2) + k * a_pow[i])
        .collect();
    let concavity_analytic = (0..times.len())
        .map(|i| {
            let second = mh[i] - nf * k * a[i];
            let p = 1.0 / nf;
            p * a[i].powf(p - 1.0) * second + p * (p - 1.0) * a[i].powf(p - 2.0) * s[i] * s[i] + k * a_pow[i]
        })
        .collect();
    Ok(FlowTrace {
        dim: n,
        k,
        times,
        a,
        s,
        mh,
        a_pow,
        concavity_residuals,
        concavity_analytic,
        final_state: current,
    })
}

/// Residuals of `dA/dt = S` and `dS/dt = MH - nKA` with the time derivatives
/// taken by finite differences over the trace nodes.
pub fn variational_formula_check(trace: &FlowTrace) -> Result<(f64, f64)> {
    if trace.times.len() < 5 {
        return Err(Error::Precondition {
            name: "trace_length",
            detail: format!("{} time nodes, need at least 5", trace.times.len()),
        });
    }
    let nf = trace.dim as f64;
    let mut res1: f64 = 0.0;
    let mut res2: f64 = 0.0;
    for i in 0..trace.times.len() {
        let da = node_derivative(&trace.times, &trace.a, i, 1);
        let ds = node_derivative(&trace.times, &trace.s, i, 1);
        res1 = res1.max((da - trace.s[i]).abs());
        res2 = res2.max((ds - (trace.mh[i] - nf * trace.k * trace.a[i])).abs());
    }
    Ok((res1, res2))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ComparisonReport {
    /// `hyperbolic`, `euclidean` or `spherical`.
    pub kind: &'static str,
    /// The spherical bound is the cos/sin analogue of the hyperbolic one.
    pub extrapolated: bool,
    /// `bound(t) - A(t)^{1/n}` at every trace node.
    pub slack: Vec<f64>,
    pub min_slack: f64,
    /// Euclidean only: `lim A^{1/n} / t` from the leading coefficient of a
    /// degree-n polynomial fit of `A(t)`.
    pub euclidean_limit: Option<f64>,
    /// `|B^n|^{1/n}`, the value the Euclidean limit is compared against.
    pub unit_ball_constant: Option<f64>,
    /// Hyperbolic only: `A^{1/n} / sinh t` at the last node. Reported
    /// without an inequality.
    pub hyperbolic_ratio: Option<f64>,
}

/// Comparison bounds obtained by integrating `y'' + K y <= 0` with
/// `y = A^{1/n}`, `y(0) = A_0^{1/n}`, `y'(0) = A_0^{1/n - 1} S_0 / n`.
pub fn comparison_inequalities(trace: &FlowTrace) -> Result<ComparisonReport> {
    let nf = trace.dim as f64;
    let t0 = trace.times[0];
    let y0 = trace.a_pow[0];
    let dy0 = trace.a[0].powf(1.0 / nf - 1.0) * trace.s[0] / nf;
    let (kind, extrapolated) = match trace.k {
        k if k < 0.0 => ("hyperbolic", false),
        k if k > 0.0 => ("spherical", true),
        _ => ("euclidean", false),
    };
    let slack: Vec<f64> = trace
        .times
        .iter()
        .zip(&trace.a_pow)
        .map(|(t, y)| {
            let (sn, cs) = trig(trace.k, t - t0);
            y0 * cs + dy0 * sn - y
        })
        .collect();
    let min_slack = slack.iter().copied().fold(f64::INFINITY, f64::min);
    let (euclidean_limit, unit_ball_constant) = if kind == "euclidean" {
        (
            Some(steiner_leading_coefficient(trace)?.powf(1.0 / nf)),
            Some((unit_sphere_area(trace.dim - 1) / nf).powf(1.0 / nf)),
        )
    } else {
        (None, None)
    };
    let last = trace.times.len() - 1;
    let hyperbolic_ratio =
        (kind == "hyperbolic").then(|| trace.a_pow[last] / (trace.times[last] - t0).sinh());
    Ok(ComparisonReport {
        kind,
        extrapolated,
        slack,
        min_slack,
        euclidean_limit,
        unit_ball_constant,
        hyperbolic_ratio,
    })
}

/// Leading coefficient of the least-squares fit of `A(t)` by a polynomial
/// of degree `n` in `t - t_0` (exact for convex bodies with `V = 1`).
fn steiner_leading_coefficient(trace: &FlowTrace) -> Result<f64> {
    let n = trace.dim;
    let m = trace.times.len();
    if m <= n {
        return Err(Error::Precondition {
            name: "trace_length",
            detail: format!("{m} nodes cannot determine a degree-{n} fit"),
        });
    }
    let t0 = trace.times[0];
    let span = trace.times[m - 1] - t0;
    // scaled variable keeps the Vandermonde matrix well conditioned
    let vander = DMatrix::from_fn(m, n + 1, |i, p| ((trace.times[i] - t0) / span).powi(p as i32));
    let rhs = DVector::from_column_slice(&trace.a);
    let coeffs = vander
        .svd(true, true)
        .solve(&rhs, 1e-14)
        .map_err(|e| Error::Solver(e.to_string()))?;
    Ok(coeffs[n] / span.powi(n as i32))
}

/// Max deviation between the transported curvature of an n = 2 state and
/// the geodesic curvature recomputed from the flowed positions by spectral
/// differentiation in the sample index.
pub fn riccati_geometric_residual(state: &FlowState) -> Result<f64> {
    if state.space.dim() != 2 {
        return Err(Error::Unsupported(
            "the geometric curvature check is implemented for curves".into(),
        ));
    }
    let space = state.space;
    let m = state.samples.len();
    let pts: Vec<DVector<f64>> = state
        .samples
        .iter()
        .map(|s| space.embed(&s.position))
        .collect::<Result<_>>()?;
    let normals: Vec<DVector<f64>> = state
        .samples
        .iter()
        .map(|s| space.tangent_to_ambient(&s.position, &s.normal))
        .collect::<Result<_>>()?;
    let mut first = vec![DVector::zeros(3); m];
    let mut second = vec![DVector::zeros(3); m];
    for c in 0..3 {
        let comp: Vec<f64> = pts.iter().map(|p| p[c]).collect();
        let d1 = periodic_derivative(&comp, 1);
        let d2 = periodic_derivative(&comp, 2);
        for i in 0..m {
            first[i][c] = d1[i];
            second[i][c] = d2[i];
        }
    }
    let mut worst: f64 = 0.0;
    for i in 0..m {
        let speed2 = space.inner(&first[i], &first[i]);
        let kappa = -space.inner(&normals[i], &second[i]) / speed2;
        worst = worst.max((kappa - state.samples[i].kappa[0]).abs());
    }
    Ok(worst)
}

/// Geodesic distance between two points of the model.
pub fn distance(space: &SpaceForm, a: &PolarPoint, b: &PolarPoint) -> Result<f64> {
    let (x, y) = (space.embed(a)?, space.embed(b)?);
    Ok(match space.curvature() {
        Curvature::Hyperbolic => (-space.inner(&x, &y)).max(1.0).acosh(),
        Curvature::Spherical => space.inner(&x, &y).clamp(-1.0, 1.0).acos(),
        Curvature::Euclidean => (x - y).norm(),
    })
}

/// Standard deviation of the distances from `center` to the flowed samples.
pub fn radius_spread(state: &FlowState, center: &PolarPoint) -> Result<f64> {
    let d: Vec<f64> = state
        .samples
        .iter()
        .map(|s| distance(&state.space, center, &s.position))
        .collect::<Result<_>>()?;
    let mean = neumaier_sum(d.iter().copied()) / d.len() as f64;
    Ok((neumaier_sum(d.iter().map(|v| (v - mean) * (v - mean))) / d.len() as f64).sqrt())
}
