//! Metric charts and the Levi-Civita geometry kernels built on them.
//!
//! A chart is a coordinate box with a metric function. Coordinates may be
//! declared periodic; a periodic coordinate has no box constraint and the
//! metric function must be periodic in it. That is what lets loops wind
//! around closed directions (equators, cone circles) while staying inside a
//! single chart.

use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::Real;
use crate::tolerances::Tolerances;
use nalgebra::{DMatrix, DVector};
use std::sync::Arc;

pub type MetricFn<S> = Arc<dyn Fn(&DVector<S>) -> DMatrix<S> + Send + Sync>;
pub type ChristoffelFn<S> = Arc<dyn Fn(&DVector<S>) -> Vec<DMatrix<S>> + Send + Sync>;

/// Tangent vector anchored at a chart point.
#[derive(Debug, Clone, PartialEq)]
pub struct TangentVector<S: Real> {
    pub base: DVector<S>,
    pub vector: DVector<S>,
}

/// Orthonormal frame at a chart point. Column `k` of `matrix` holds the
/// chart components of the k-th frame vector; columns satisfy `Uᵀ g U = I`.
#[derive(Debug, Clone, PartialEq)]
pub struct FramePoint<S: Real> {
    pub base: DVector<S>,
    pub matrix: DMatrix<S>,
}

/// Curvature operator `R(X, Y)` at a point, stored as the matrix acting on
/// chart components of tangent vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct CurvatureOperator<S: Real> {
    pub base: DVector<S>,
    pub x: DVector<S>,
    pub y: DVector<S>,
    pub matrix: DMatrix<S>,
}

/// Result of a geodesic integration. If the trace leaves the chart domain it
/// is truncated and flagged rather than treated as an error.
#[derive(Debug, Clone)]
pub struct GeodesicTrace<S: Real> {
    pub times: Vec<S>,
    pub points: Vec<DVector<S>>,
    pub velocities: Vec<DVector<S>>,
    pub exited_domain: bool,
    pub speed_drift: S,
}

impl<S: Real> GeodesicTrace<S> {
    pub fn endpoint(&self) -> (&DVector<S>, &DVector<S>) {
        (
            self.points.last().expect("trace has at least the start"),
            self.velocities.last().expect("trace has at least the start"),
        )
    }
}

/// Riemannian metric chart on an axis-aligned coordinate box.
#[derive(Clone)]
pub struct MetricChart<S: Real> {
    dim: usize,
    domain: Vec<(S, S)>,
    periods: Vec<Option<S>>,
    metric: MetricFn<S>,
    christoffel: Option<ChristoffelFn<S>>,
    label: String,
}

impl<S: Real> std::fmt::Debug for MetricChart<S> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MetricChart")
            .field("label", &self.label)
            .field("dim", &self.dim)
            .field("domain", &self.domain)
            .field("periods", &self.periods)
            .field("analytic_christoffel", &self.christoffel.is_some())
            .finish()
    }
}

impl<S: Real> MetricChart<S> {
    pub fn new(
        label: impl Into<String>,
        domain: Vec<(S, S)>,
        metric: MetricFn<S>,
    ) -> Self {
        let dim = domain.len();
        Self {
            dim,
            domain,
            periods: vec![None; dim],
            metric,
            christoffel: None,
            label: label.into(),
        }
    }

    /// Declares coordinate `index` periodic with the given period. The
    /// caller guarantees the metric function is periodic in it.
    pub fn with_period(mut self, index: usize, period: S) -> Self {
        self.periods[index] = Some(period);
        self
    }

    /// Attaches analytic Christoffel symbols; when present they are used
    /// verbatim instead of finite differences.
    pub fn with_christoffel(mut self, f: ChristoffelFn<S>) -> Self {
        self.christoffel = Some(f);
        self
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn domain(&self) -> &[(S, S)] {
        &self.domain
    }

    pub fn periods(&self) -> &[Option<S>] {
        &self.periods
    }

    pub fn has_analytic_christoffel(&self) -> bool {
        self.christoffel.is_some()
    }

    /// Shared handle on the metric closure, for charts built from this one
    /// (cones, products).
    pub fn metric_fn(&self) -> MetricFn<S> {
        Arc::clone(&self.metric)
    }

    /// Shared handle on the analytic Christoffel closure, when present.
    pub fn christoffel_fn(&self) -> Option<ChristoffelFn<S>> {
        self.christoffel.as_ref().map(Arc::clone)
    }

    /// Whether a point lies in the chart domain. Periodic coordinates are
    /// unconstrained.
    pub fn in_domain(&self, x: &DVector<S>) -> bool {
        x.len() == self.dim
            && x.iter().enumerate().all(|(i, &xi)| {
                self.periods[i].is_some() || (xi > self.domain[i].0 && xi < self.domain[i].1)
            })
    }

    fn check_point(&self, x: &DVector<S>) -> Result<()> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if !self.in_domain(x) {
            return Err(Error::OutOfDomain {
                point: x.iter().map(|v| v.as_f64()).collect(),
            });
        }
        Ok(())
    }

    /// Shortest coordinate displacement from `a` to `b`, wrapping periodic
    /// coordinates to their nearest representative.
    pub fn wrapped_delta(&self, a: &DVector<S>, b: &DVector<S>) -> DVector<S> {
        let mut d = b - a;
        for i in 0..self.dim {
            if let Some(p) = self.periods[i] {
                let half = p * S::of(0.5);
                while d[i] > half {
                    d[i] -= p;
                }
                while d[i] < -half {
                    d[i] += p;
                }
            }
        }
        d
    }

    /// Metric evaluated without positive-definiteness screening; used in
    /// inner loops where the screening already happened nearby.
    pub fn metric_raw(&self, x: &DVector<S>) -> DMatrix<S> {
        let g = (self.metric)(x);
        // Symmetrize to wash out roundoff asymmetry in user closures.
        (&g + g.transpose()) * S::of(0.5)
    }

    /// Metric at a domain point, checked symmetric positive definite with
    /// smallest eigenvalue above `eps_pd`.
    pub fn metric_at(&self, x: &DVector<S>, tol: &Tolerances) -> Result<DMatrix<S>> {
        self.check_point(x)?;
        let g = self.metric_raw(x);
        let (vals, _) = linalg::sym_eigen_sorted(&g);
        let min_eig = vals[0];
        if min_eig <= S::of(tol.eps_pd) {
            return Err(Error::MetricDegenerate {
                point: x.iter().map(|v| v.as_f64()).collect(),
                min_eig: min_eig.as_f64(),
            });
        }
        Ok(g)
    }

    /// Inverse metric with the same screening as [`Self::metric_at`].
    pub fn metric_inverse_at(&self, x: &DVector<S>, tol: &Tolerances) -> Result<DMatrix<S>> {
        self.check_point(x)?;
        let g = self.metric_raw(x);
        let (vals, vecs) = linalg::sym_eigen_sorted(&g);
        if vals[0] <= S::of(tol.eps_pd) {
            return Err(Error::MetricDegenerate {
                point: x.iter().map(|v| v.as_f64()).collect(),
                min_eig: vals[0].as_f64(),
            });
        }
        let mut inv = DMatrix::<S>::zeros(self.dim, self.dim);
        for k in 0..self.dim {
            let v = vecs.column(k);
            inv += v * v.transpose() / vals[k];
        }
        Ok(inv)
    }

    /// Christoffel symbols `Γ[k][(i, j)] = Γ^k_{ij}` at a domain point.
    /// Analytic symbols win when attached; otherwise central finite
    /// differences of the metric with step `h_fd`.
    pub fn christoffels(&self, x: &DVector<S>, tol: &Tolerances) -> Result<Vec<DMatrix<S>>> {
        self.check_point(x)?;
        if let Some(f) = &self.christoffel {
            return Ok(f(x));
        }
        self.christoffels_fd(x, tol)
    }

    /// Finite-difference Christoffel symbols, available even when analytic
    /// symbols are attached (used to cross-validate them).
    pub fn christoffels_fd(&self, x: &DVector<S>, tol: &Tolerances) -> Result<Vec<DMatrix<S>>> {
        self.check_point(x)?;
        let m = self.dim;
        let h = S::of(tol.h_fd);
        let ginv = self.metric_inverse_at(x, tol)?;
        // dg[l] = ∂_l g, central difference. Stencil points may poke slightly
        // past the open box; metric closures are assumed valid there.
        let mut dg = Vec::with_capacity(m);
        for l in 0..m {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[l] += h;
            xm[l] -= h;
            let d = (self.metric_raw(&xp) - self.metric_raw(&xm)) / (S::of(2.0) * h);
            dg.push(d);
        }
        let mut gammas = vec![DMatrix::<S>::zeros(m, m); m];
        for i in 0..m {
            for j in i..m {
                // t[l] = ∂_i g_{jl} + ∂_j g_{il} − ∂_l g_{ij}
                for k in 0..m {
                    let mut acc = S::zero();
                    for l in 0..m {
                        let t = dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)];
                        acc += ginv[(k, l)] * t;
                    }
                    let val = acc * S::of(0.5);
                    gammas[k][(i, j)] = val;
                    gammas[k][(j, i)] = val;
                }
            }
        }
        Ok(gammas)
    }

    /// Curvature operator `R(X, Y)` as a matrix on chart components, with
    /// the sign convention that for constant curvature `K = 1`
    /// `R(X, Y)Z = g(Y, Z)X − g(X, Z)Y`.
    pub fn curvature_op(
        &self,
        x: &DVector<S>,
        xv: &DVector<S>,
        yv: &DVector<S>,
        tol: &Tolerances,
    ) -> Result<CurvatureOperator<S>> {
        self.check_point(x)?;
        let m = self.dim;
        if xv.len() != m || yv.len() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: xv.len().max(yv.len()),
            });
        }
        let h = S::of(tol.h_gamma(self.christoffel.is_some()));
        let gamma_at = |p: &DVector<S>| -> Result<Vec<DMatrix<S>>> {
            if let Some(f) = &self.christoffel {
                Ok(f(p))
            } else {
                self.christoffels_fd(p, tol)
            }
        };
        let g0 = gamma_at(x)?;
        // dgamma[i][l][(j, k)] = ∂_i Γ^l_{jk}, central difference.
        let mut dgamma: Vec<Vec<DMatrix<S>>> = Vec::with_capacity(m);
        for i in 0..m {
            let mut xp = x.clone();
            let mut xm = x.clone();
            xp[i] += h;
            xm[i] -= h;
            let gp = gamma_at(&xp)?;
            let gm = gamma_at(&xm)?;
            let d: Vec<DMatrix<S>> = gp
                .iter()
                .zip(gm.iter())
                .map(|(p, q)| (p - q) / (S::of(2.0) * h))
                .collect();
            dgamma.push(d);
        }
        // Contract R^l_{kij} X^i Y^j =
        //   ∂_X (G_Y) − ∂_Y (G_X) + G_X G_Y − G_Y G_X
        // where (G_w)^l_k = Σ_i w^i Γ^l_{ik}.
        let g_of = |w: &DVector<S>, gam: &[DMatrix<S>]| -> DMatrix<S> {
            let mut out = DMatrix::<S>::zeros(m, m);
            for l in 0..m {
                for k in 0..m {
                    let mut acc = S::zero();
                    for i in 0..m {
                        acc += w[i] * gam[l][(i, k)];
                    }
                    out[(l, k)] = acc;
                }
            }
            out
        };
        let dg_along = |w: &DVector<S>, v: &DVector<S>| -> DMatrix<S> {
            // Σ_i w^i ∂_i (G_v) with (G_v)^l_k = Σ_j v^j Γ^l_{jk}
            let mut out = DMatrix::<S>::zeros(m, m);
            for l in 0..m {
                for k in 0..m {
                    let mut acc = S::zero();
                    for i in 0..m {
                        for j in 0..m {
                            acc += w[i] * v[j] * dgamma[i][l][(j, k)];
                        }
                    }
                    out[(l, k)] = acc;
                }
            }
            out
        };
        let gx = g_of(xv, &g0);
        let gy = g_of(yv, &g0);
        let matrix = dg_along(xv, yv) - dg_along(yv, xv) + &gx * &gy - &gy * &gx;
        Ok(CurvatureOperator {
            base: x.clone(),
            x: xv.clone(),
            y: yv.clone(),
            matrix,
        })
    }

    /// Ricci curvature `Ric(v, v)` via an orthonormal frame:
    /// `Σ_a g(R(e_a, v)v, e_a)`.
    pub fn ricci_quadratic(&self, x: &DVector<S>, v: &DVector<S>, tol: &Tolerances) -> Result<S> {
        let g = self.metric_at(x, tol)?;
        let frame = self.orthonormal_frame(x, None, tol)?;
        let mut acc = S::zero();
        for a in 0..self.dim {
            let ea = frame.matrix.column(a).clone_owned();
            let op = self.curvature_op(x, &ea, v, tol)?;
            let rv = op.matrix * v;
            acc += (g.clone() * rv).dot(&ea);
        }
        Ok(acc)
    }

    /// Orthonormal frame at `x` by Gram–Schmidt over the chart basis, taken
    /// in `order` (default: coordinate order). Deterministic.
    pub fn orthonormal_frame(
        &self,
        x: &DVector<S>,
        order: Option<&[usize]>,
        tol: &Tolerances,
    ) -> Result<FramePoint<S>> {
        let g = self.metric_at(x, tol)?;
        let default_order: Vec<usize> = (0..self.dim).collect();
        let ord = order.unwrap_or(&default_order);
        let u = linalg::gram_schmidt_frame(&g, ord, S::of(tol.eps_frame))?;
        Ok(FramePoint {
            base: x.clone(),
            matrix: u,
        })
    }

    /// Integrates the geodesic equation with fixed-step RK4. The step is
    /// measured in arc length, so `t_end · |v|_g / step` integration steps
    /// are taken. The trace truncates with a flag when it leaves the domain;
    /// speed drift beyond `10 · tol_speed` is an error.
    pub fn geodesic(
        &self,
        x: &DVector<S>,
        v: &DVector<S>,
        t_end: S,
        step: S,
        tol: &Tolerances,
    ) -> Result<GeodesicTrace<S>> {
        self.check_point(x)?;
        let g0 = self.metric_at(x, tol)?;
        let speed0 = (g0 * v).dot(v).sqrt();
        let arc = (t_end * speed0).abs();
        let n_steps = (arc / step).as_f64().ceil().max(8.0) as usize;
        let dt = t_end / S::of(n_steps as f64);

        let m = self.dim;
        let rhs = |pos: &DVector<S>, vel: &DVector<S>| -> Result<(DVector<S>, DVector<S>)> {
            let gammas = if let Some(f) = &self.christoffel {
                f(pos)
            } else {
                self.christoffels_fd(pos, tol)?
            };
            let mut acc = DVector::<S>::zeros(m);
            for k in 0..m {
                acc[k] = -(vel.transpose() * &gammas[k] * vel)[(0, 0)];
            }
            Ok((vel.clone(), acc))
        };

        let mut times = Vec::with_capacity(n_steps + 1);
        let mut points = Vec::with_capacity(n_steps + 1);
        let mut velocities = Vec::with_capacity(n_steps + 1);
        times.push(S::zero());
        points.push(x.clone());
        velocities.push(v.clone());

        let mut pos = x.clone();
        let mut vel = v.clone();
        let mut drift_max = S::zero();
        let mut exited = false;
        for i in 0..n_steps {
            let (k1p, k1v) = rhs(&pos, &vel)?;
            let (k2p, k2v) = rhs(&(&pos + &k1p * (dt * S::of(0.5))), &(&vel + &k1v * (dt * S::of(0.5))))?;
            let (k3p, k3v) = rhs(&(&pos + &k2p * (dt * S::of(0.5))), &(&vel + &k2v * (dt * S::of(0.5))))?;
            let (k4p, k4v) = rhs(&(&pos + &k3p * dt), &(&vel + &k3v * dt))?;
            pos += (k1p + k2p * S::of(2.0) + k3p * S::of(2.0) + k4p) * (dt / S::of(6.0));
            vel += (k1v + k2v * S::of(2.0) + k3v * S::of(2.0) + k4v) * (dt / S::of(6.0));
            if !self.in_domain(&pos) {
                exited = true;
                break;
            }
            let speed = (self.metric_raw(&pos) * &vel).dot(&vel).sqrt();
            let drift = ((speed - speed0) / speed0).abs();
            drift_max = drift_max.max(drift);
            times.push(dt * S::of((i + 1) as f64));
            points.push(pos.clone());
            velocities.push(vel.clone());
        }
        let limit = S::of(10.0 * tol.tol_speed);
        if drift_max > limit {
            return Err(Error::StepTooLarge {
                drift: drift_max.as_f64(),
                limit: limit.as_f64(),
            });
        }
        Ok(GeodesicTrace {
            times,
            points,
            velocities,
            exited_domain: exited,
            speed_drift: drift_max,
        })
    }

    /// Endpoint of the unit-time geodesic with initial velocity `v`.
    pub fn exp_map(&self, x: &DVector<S>, v: &DVector<S>, step: S, tol: &Tolerances) -> Result<DVector<S>> {
        let trace = self.geodesic(x, v, S::one(), step, tol)?;
        if trace.exited_domain {
            return Err(Error::OutOfDomain {
                point: trace.points.last().unwrap().iter().map(|s| s.as_f64()).collect(),
            });
        }
        Ok(trace.points.last().unwrap().clone())
    }

    /// Initial velocity of the unit-time geodesic from `from` to `to`, found
    /// by Newton shooting on the exponential map.
    pub fn geodesic_connect(
        &self,
        from: &DVector<S>,
        to: &DVector<S>,
        step: S,
        tol: &Tolerances,
    ) -> Result<DVector<S>> {
        let m = self.dim;
        let mut v = self.wrapped_delta(from, to);
        let target_tol = S::of(tol.bvp_tol) * (S::one() + to.norm());
        let mut residual = S::of(f64::INFINITY);
        for _iter in 0..30 {
            let end = self.exp_map(from, &v, step, tol)?;
            let gap = self.wrapped_delta(&end, to);
            residual = gap.norm();
            if residual < target_tol {
                return Ok(v);
            }
            // Finite-difference Jacobian of the endpoint in v.
            let fd = S::of(1e-6) * (S::one() + v.norm());
            let mut jac = DMatrix::<S>::zeros(m, m);
            for c in 0..m {
                let mut vp = v.clone();
                let mut vm = v.clone();
                vp[c] += fd;
                vm[c] -= fd;
                let ep = self.exp_map(from, &vp, step, tol)?;
                let em = self.exp_map(from, &vm, step, tol)?;
                let col = self.wrapped_delta(&em, &ep) / (S::of(2.0) * fd);
                jac.set_column(c, &col);
            }
            let update = jac
                .lu()
                .solve(&gap)
                .ok_or(Error::ConvergenceFailure {
                    what: "geodesic shooting (singular Jacobian)",
                    iterations: 30,
                    residual: residual.as_f64(),
                })?;
            v += update;
        }
        Err(Error::ConvergenceFailure {
            what: "geodesic shooting",
            iterations: 30,
            residual: residual.as_f64(),
        })
    }
}
