//! Development of curves and loops into the affine group of a tangent space.
//!
//! Parallel transport around a loop gives the linear holonomy; integrating
//! the base-frame coordinates of the velocity alongside gives the
//! development, and the two combine into an affine isometry of the tangent
//! space at the base point. Sampling many loops yields a finite subset of
//! the affine holonomy group that the analysis layer classifies.
//!
//! Conventions, fixed once here and relied on everywhere else:
//!
//! * the frame `U(t)` transported along a curve solves `U' = -G(γ̇) U` with
//!   `(G(w))^k_j = Σ_i w^i Γ^k_{ij}`, starting from a metric-orthonormal
//!   frame `U₀` at the base point;
//! * the development `d(t) = ∫₀ᵗ U(s)⁻¹ γ̇(s) ds` accumulates the velocity
//!   pulled back to base-frame coordinates; its endpoint for a loop is the
//!   "rolled" displacement;
//! * the loop's holonomy element is `(A, -A d)` with `A = U₀⁻¹ U_end`.
//!   With this normalization concatenating loops multiplies elements (later
//!   loop on the left), and a field satisfying `∇_X V = -X` has its value at
//!   the base point fixed by every element, which is what the fixed-point
//!   solver exploits. The translation of a closed geodesic then has the
//!   loop's length but points opposite to the initial velocity; only the
//!   magnitude and collinearity are contractual.

use crate::affine::{self, AffineIsometry};
use crate::chart::{MetricChart, TangentVector};
use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tolerances::Tolerances;
use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

/// One side of a piecewise curve.
#[derive(Debug, Clone, PartialEq)]
pub enum Segment<S: Real> {
    /// Straight segment in chart coordinates, given as a displacement from
    /// the current point. Used for coordinate rectangles, sampled polylines,
    /// and loops that wind a periodic coordinate.
    Line { delta: DVector<S> },
    /// Geodesic from the current point to `target`, found by shooting.
    GeodesicTo { target: DVector<S> },
}

/// What a loop is, for labeling and protocol bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type")]
pub enum LoopKind {
    /// Coordinate rectangle in the plane of coordinates `(i, j)` with side
    /// `scale`.
    Rectangle { i: usize, j: usize, scale: f64 },
    /// Straight loop winding periodic coordinate `coord` by `turns` periods.
    Winding { coord: usize, turns: i64 },
    /// Random geodesic triangle number `index` of the sampling protocol.
    Polygon { index: usize },
    /// Closed polyline through explicit sample points.
    Polyline,
    Custom,
}

/// Piecewise loop based at a chart point. The segment chain must return to
/// the base point modulo coordinate periods; rectangles, windings, and
/// polygons close by construction, polylines are checked.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopSpec<S: Real> {
    pub base: DVector<S>,
    pub segments: Vec<Segment<S>>,
    pub label: String,
    pub kind: LoopKind,
}

impl<S: Real> LoopSpec<S> {
    /// Coordinate rectangle `+εe_i, +εe_j, -εe_i, -εe_j` based at `base`.
    pub fn rectangle(base: DVector<S>, i: usize, j: usize, scale: S) -> Self {
        let m = base.len();
        let step = |axis: usize, sign: f64| {
            let mut d = DVector::<S>::zeros(m);
            d[axis] = scale * S::of(sign);
            Segment::Line { delta: d }
        };
        Self {
            base,
            segments: vec![step(i, 1.0), step(j, 1.0), step(i, -1.0), step(j, -1.0)],
            label: format!("rect({i},{j})@{:.3}", scale.as_f64()),
            kind: LoopKind::Rectangle {
                i,
                j,
                scale: scale.as_f64(),
            },
        }
    }

    /// Straight loop winding periodic coordinate `coord` by `turns` full
    /// periods.
    pub fn winding(base: DVector<S>, coord: usize, period: S, turns: i64) -> Self {
        let m = base.len();
        let mut d = DVector::<S>::zeros(m);
        d[coord] = period * S::of(turns as f64);
        Self {
            base,
            segments: vec![Segment::Line { delta: d }],
            label: format!("wind({coord})x{turns}"),
            kind: LoopKind::Winding { coord, turns },
        }
    }

    /// Geodesic polygon through the given vertices, starting and ending at
    /// `base`.
    pub fn geodesic_polygon(base: DVector<S>, vertices: Vec<DVector<S>>, index: usize) -> Self {
        let mut segments: Vec<Segment<S>> = vertices
            .into_iter()
            .map(|v| Segment::GeodesicTo { target: v })
            .collect();
        segments.push(Segment::GeodesicTo {
            target: base.clone(),
        });
        Self {
            base,
            segments,
            label: format!("poly#{index}"),
            kind: LoopKind::Polygon { index },
        }
    }

    /// Closed polyline through explicit chart points, traversed in order.
    /// Consecutive duplicates are dropped; the chain must end where it
    /// started (checked at development time, not here). Each side integrates
    /// with steps proportional to its length, so the parametrization is
    /// uniform-speed per side regardless of how the input was sampled.
    pub fn param_curve(points: Vec<DVector<S>>) -> Result<Self> {
        let first = points
            .first()
            .ok_or_else(|| Error::ConfigInvalid("polyline needs at least two points".into()))?
            .clone();
        let mut segments = Vec::new();
        for w in points.windows(2) {
            let delta = &w[1] - &w[0];
            if delta.amax() > S::zero() {
                segments.push(Segment::Line { delta });
            }
        }
        if segments.is_empty() {
            return Err(Error::ConfigInvalid(
                "polyline needs at least two distinct points".into(),
            ));
        }
        Ok(Self {
            base: first,
            segments,
            label: "polyline".into(),
            kind: LoopKind::Polyline,
        })
    }

    /// Vertex chain `base = v₀, v₁, …, v_n`; the last entry should match the
    /// base modulo periods.
    pub fn vertices(&self) -> Vec<DVector<S>> {
        let mut out = Vec::with_capacity(self.segments.len() + 1);
        out.push(self.base.clone());
        for seg in &self.segments {
            let prev = out.last().expect("chain starts at base");
            let next = match seg {
                Segment::Line { delta } => prev + delta,
                Segment::GeodesicTo { target } => target.clone(),
            };
            out.push(next);
        }
        out
    }

    /// The same loop traversed backwards. Its holonomy element is the group
    /// inverse of the original.
    pub fn reversed(&self) -> Self {
        let verts = self.vertices();
        let mut segments = Vec::with_capacity(self.segments.len());
        for (idx, seg) in self.segments.iter().enumerate().rev() {
            let from = &verts[idx];
            segments.push(match seg {
                Segment::Line { delta } => Segment::Line { delta: -delta },
                Segment::GeodesicTo { .. } => Segment::GeodesicTo {
                    target: from.clone(),
                },
            });
        }
        Self {
            base: self.base.clone(),
            segments,
            label: format!("{}-rev", self.label),
            kind: LoopKind::Custom,
        }
    }

    /// Concatenation: this loop first, then `next`. The bases must agree.
    pub fn then(&self, next: &Self) -> Result<Self> {
        if self.base != next.base {
            return Err(Error::ConfigInvalid(
                "concatenated loops must share a base point".into(),
            ));
        }
        let mut segments = self.segments.clone();
        segments.extend(next.segments.iter().cloned());
        Ok(Self {
            base: self.base.clone(),
            segments,
            label: format!("{}+{}", self.label, next.label),
            kind: LoopKind::Custom,
        })
    }

    fn check_closure(&self, chart: &MetricChart<S>, tol: &Tolerances) -> Result<()> {
        let verts = self.vertices();
        let last = verts.last().expect("chain is nonempty");
        let gap = chart.wrapped_delta(last, &self.base).norm();
        let limit = S::of(tol.eps_closure) * (S::one() + self.base.norm());
        if gap > limit {
            return Err(Error::NonClosedCurve {
                gap: gap.as_f64(),
                limit: limit.as_f64(),
            });
        }
        Ok(())
    }
}

/// Holonomy element of one loop, with the diagnostics needed to judge it.
#[derive(Debug, Clone)]
pub struct HolonomySample<S: Real> {
    /// Affine isometry of the base tangent space, in base-frame coordinates.
    pub element: AffineIsometry<S>,
    /// Development endpoint `d`, in base-frame coordinates.
    pub development: DVector<S>,
    /// Riemannian length of the loop.
    pub arc_length: S,
    /// Chart distance between the integrated endpoint and the base point.
    pub endpoint_gap: S,
    /// Worst relative speed drift over the geodesic sides.
    pub speed_drift: S,
    /// Deviation of the linear part from orthogonality.
    pub orthogonality_defect: S,
    pub label: String,
    pub kind: LoopKind,
    pub base: DVector<S>,
}

/// Sampled development of a curve: cumulative arc length, chart position,
/// and the developed image in base-frame coordinates, one row per
/// integration step.
#[derive(Debug, Clone)]
pub struct DevelopmentTrace<S: Real> {
    pub arc: Vec<S>,
    pub positions: Vec<DVector<S>>,
    pub dev_points: Vec<DVector<S>>,
    pub speed_drift: S,
}

struct DevState<S: Real> {
    u: DMatrix<S>,
    d: DVector<S>,
    len: S,
}

struct WalkOutcome<S: Real> {
    u0: DMatrix<S>,
    state: DevState<S>,
    end: DVector<S>,
    drift: S,
}

// G(w) with (G(w))^k_j = Σ_i w^i Γ^k_{ij}.
fn g_of<S: Real>(w: &DVector<S>, gammas: &[DMatrix<S>]) -> DMatrix<S> {
    let m = w.len();
    let mut out = DMatrix::<S>::zeros(m, m);
    for k in 0..m {
        for j in 0..m {
            let mut acc = S::zero();
            for i in 0..m {
                acc += w[i] * gammas[k][(i, j)];
            }
            out[(k, j)] = acc;
        }
    }
    out
}

fn frame_solve<S: Real>(u: &DMatrix<S>, rhs: &DVector<S>) -> Result<DVector<S>> {
    u.clone().lu().solve(rhs).ok_or(Error::SingularFrame {
        det: u.determinant().as_f64(),
    })
}

// Walks the segment chain from `base`, integrating the transport state and
// reporting (arc length, position, development) after every accepted step.
fn walk_segments<S: Real>(
    chart: &MetricChart<S>,
    base: &DVector<S>,
    segments: &[Segment<S>],
    frame_order: Option<&[usize]>,
    step: S,
    tol: &Tolerances,
    record: &mut impl FnMut(S, &DVector<S>, &DVector<S>),
) -> Result<WalkOutcome<S>> {
    let m = chart.dim();
    if base.len() != m {
        return Err(Error::DimensionMismatch {
            expected: m,
            got: base.len(),
        });
    }
    let u0 = chart.orthonormal_frame(base, frame_order, tol)?.matrix;
    let mut state = DevState {
        u: u0.clone(),
        d: DVector::<S>::zeros(m),
        len: S::zero(),
    };
    let mut cur = base.clone();
    let mut drift_max = S::zero();
    record(S::zero(), &cur, &state.d);

    for seg in segments {
        match seg {
            Segment::Line { delta } => {
                integrate_line(chart, &mut state, &cur, delta, step, tol, record)?;
                cur += delta;
            }
            Segment::GeodesicTo { target } => {
                let v0 = chart.geodesic_connect(&cur, target, step, tol)?;
                let drift =
                    integrate_geodesic(chart, &mut state, &mut cur, &v0, step, tol, record)?;
                drift_max = drift_max.max(drift);
            }
        }
        if !chart.in_domain(&cur) {
            return Err(Error::OutOfDomain {
                point: cur.iter().map(|v| v.as_f64()).collect(),
            });
        }
    }
    Ok(WalkOutcome {
        u0,
        state,
        end: cur,
        drift: drift_max,
    })
}

/// Develops one loop into its holonomy element.
///
/// `frame_order` selects the Gram-Schmidt order of the base frame; changing
/// it conjugates the whole sample by a fixed orthogonal matrix and maps
/// fixed points through the same change, which is what the frame-covariance
/// tests check.
pub fn develop_loop<S: Real>(
    chart: &MetricChart<S>,
    spec: &LoopSpec<S>,
    frame_order: Option<&[usize]>,
    step: S,
    tol: &Tolerances,
) -> Result<HolonomySample<S>> {
    spec.check_closure(chart, tol)?;
    let mut sink = |_: S, _: &DVector<S>, _: &DVector<S>| {};
    let out = walk_segments(
        chart,
        &spec.base,
        &spec.segments,
        frame_order,
        step,
        tol,
        &mut sink,
    )?;
    let endpoint_gap = chart.wrapped_delta(&out.end, &spec.base).norm();
    let u0_inv = out
        .u0
        .clone()
        .lu()
        .try_inverse()
        .ok_or(Error::SingularFrame {
            det: out.u0.determinant().as_f64(),
        })?;
    let a = &u0_inv * &out.state.u;
    let b = -(&a * &out.state.d);
    let element = AffineIsometry::new(a, b)?;
    let defect = element.orthogonality_defect();
    Ok(HolonomySample {
        element,
        development: out.state.d,
        arc_length: out.state.len,
        endpoint_gap,
        speed_drift: out.drift,
        orthogonality_defect: defect,
        label: spec.label.clone(),
        kind: spec.kind.clone(),
        base: spec.base.clone(),
    })
}

/// Develops an open or closed curve, returning the sampled development
/// path. The curve is the segment chain from `base`; no closure is
/// required.
pub fn develop_curve<S: Real>(
    chart: &MetricChart<S>,
    base: &DVector<S>,
    segments: &[Segment<S>],
    frame_order: Option<&[usize]>,
    step: S,
    tol: &Tolerances,
) -> Result<DevelopmentTrace<S>> {
    let mut arc = Vec::new();
    let mut positions = Vec::new();
    let mut dev_points = Vec::new();
    let mut sink = |len: S, pos: &DVector<S>, dev: &DVector<S>| {
        arc.push(len);
        positions.push(pos.clone());
        dev_points.push(dev.clone());
    };
    let out = walk_segments(chart, base, segments, frame_order, step, tol, &mut sink)?;
    Ok(DevelopmentTrace {
        arc,
        positions,
        dev_points,
        speed_drift: out.drift,
    })
}

/// Parallel transport of a single tangent vector along a segment chain:
/// solves `v' = -G(γ̇)v`. The g-norm is conserved by the exact flow; drift
/// beyond `10·tol_speed` is an integration failure.
pub fn transport_vector<S: Real>(
    chart: &MetricChart<S>,
    start: &TangentVector<S>,
    segments: &[Segment<S>],
    step: S,
    tol: &Tolerances,
) -> Result<TangentVector<S>> {
    let g0 = chart.metric_at(&start.base, tol)?;
    let norm0 = (g0 * &start.vector).dot(&start.vector).sqrt();
    let mut dummy = |_: S, _: &DVector<S>, _: &DVector<S>| {};
    let out = walk_segments(
        chart,
        &start.base,
        segments,
        None,
        step,
        tol,
        &mut dummy,
    )?;
    // v(t) = U(t) · U₀⁻¹ v₀ transports v₀: frame coordinates are constant
    // along the exact flow.
    let w = frame_solve(&out.u0, &start.vector)?;
    let vector = &out.state.u * w;
    let g1 = chart.metric_at(&out.end, tol)?;
    let norm1 = (g1 * &vector).dot(&vector).sqrt();
    let drift = ((norm1 - norm0) / norm0.max(S::of(1e-300))).abs();
    let limit = S::of(10.0 * tol.tol_speed);
    if drift > limit {
        return Err(Error::StepTooLarge {
            drift: drift.as_f64(),
            limit: limit.as_f64(),
        });
    }
    Ok(TangentVector {
        base: out.end,
        vector,
    })
}

/// Rectangle loops in one coordinate plane over a list of scales, developed
/// in order. The shrinking family probes the local holonomy and its scaling
/// exponents.
pub fn small_loop_family<S: Real>(
    chart: &MetricChart<S>,
    base: &DVector<S>,
    plane: (usize, usize),
    scales: &[f64],
    frame_order: Option<&[usize]>,
    step: S,
    tol: &Tolerances,
) -> Result<Vec<HolonomySample<S>>> {
    scales
        .iter()
        .map(|&eps| {
            let spec = LoopSpec::rectangle(base.clone(), plane.0, plane.1, S::of(eps));
            develop_loop(chart, &spec, frame_order, step, tol)
        })
        .collect()
}

// Transports (U, d, len) along the chart-straight segment cur + t·delta,
// t ∈ [0, 1], with fixed-step RK4. The position is analytic, so only the
// transport state is integrated.
fn integrate_line<S: Real>(
    chart: &MetricChart<S>,
    state: &mut DevState<S>,
    cur: &DVector<S>,
    delta: &DVector<S>,
    step: S,
    tol: &Tolerances,
    record: &mut impl FnMut(S, &DVector<S>, &DVector<S>),
) -> Result<()> {
    let g0 = chart.metric_at(cur, tol)?;
    let arc_est = (g0 * delta).dot(delta).sqrt();
    let n_steps = (arc_est / step).as_f64().ceil().max(8.0) as usize;
    let dt = S::one() / S::of(n_steps as f64);

    let deriv = |t: S, st: &DevState<S>| -> Result<(DMatrix<S>, DVector<S>, S)> {
        let pos = cur + delta * t;
        let gammas = chart.christoffels(&pos, tol)?;
        let gmat = g_of(delta, &gammas);
        let du = -(&gmat * &st.u);
        let dd = frame_solve(&st.u, delta)?;
        let dlen = dd.norm();
        Ok((du, dd, dlen))
    };

    for i in 0..n_steps {
        let t = dt * S::of(i as f64);
        let half = dt * S::of(0.5);
        let at = |u: DMatrix<S>, d: DVector<S>, len: S| DevState { u, d, len };
        let (u1, d1, l1) = deriv(t, state)?;
        let s2 = at(
            &state.u + &u1 * half,
            &state.d + &d1 * half,
            state.len + l1 * half,
        );
        let (u2, d2, l2) = deriv(t + half, &s2)?;
        let s3 = at(
            &state.u + &u2 * half,
            &state.d + &d2 * half,
            state.len + l2 * half,
        );
        let (u3, d3, l3) = deriv(t + half, &s3)?;
        let s4 = at(&state.u + &u3 * dt, &state.d + &d3 * dt, state.len + l3 * dt);
        let (u4, d4, l4) = deriv(t + dt, &s4)?;
        let w = dt / S::of(6.0);
        let two = S::of(2.0);
        state.u += (u1 + u2 * two + u3 * two + u4) * w;
        state.d += (d1 + d2 * two + d3 * two + d4) * w;
        state.len += (l1 + (l2 + l3) * two + l4) * w;
        let pos = cur + delta * (dt * S::of((i + 1) as f64));
        record(state.len, &pos, &state.d);
    }
    Ok(())
}

// Transports (U, d, len) along the unit-time geodesic with initial velocity
// v0, integrating position and velocity alongside. Returns the worst
// relative speed drift. Updates `cur` to the integrated endpoint.
fn integrate_geodesic<S: Real>(
    chart: &MetricChart<S>,
    state: &mut DevState<S>,
    cur: &mut DVector<S>,
    v0: &DVector<S>,
    step: S,
    tol: &Tolerances,
    record: &mut impl FnMut(S, &DVector<S>, &DVector<S>),
) -> Result<S> {
    let m = chart.dim();
    let g0 = chart.metric_at(cur, tol)?;
    let speed0 = (g0 * v0).dot(v0).sqrt();
    let n_steps = (speed0 / step).as_f64().ceil().max(8.0) as usize;
    let dt = S::one() / S::of(n_steps as f64);

    let mut pos = cur.clone();
    let mut vel = v0.clone();
    let mut drift_max = S::zero();

    let deriv = |pos: &DVector<S>,
                 vel: &DVector<S>,
                 u: &DMatrix<S>|
     -> Result<(DVector<S>, DVector<S>, DMatrix<S>, DVector<S>, S)> {
        let gammas = chart.christoffels(pos, tol)?;
        let mut acc = DVector::<S>::zeros(m);
        for k in 0..m {
            acc[k] = -(vel.transpose() * &gammas[k] * vel)[(0, 0)];
        }
        let gmat = g_of(vel, &gammas);
        let du = -(&gmat * u);
        let dd = frame_solve(u, vel)?;
        let dlen = dd.norm();
        Ok((vel.clone(), acc, du, dd, dlen))
    };

    for _ in 0..n_steps {
        let h = dt;
        let half = h * S::of(0.5);
        let (p1, v1, u1, d1, l1) = deriv(&pos, &vel, &state.u)?;
        let (p2, v2, u2, d2, l2) = deriv(
            &(&pos + &p1 * half),
            &(&vel + &v1 * half),
            &(&state.u + &u1 * half),
        )?;
        let (p3, v3, u3, d3, l3) = deriv(
            &(&pos + &p2 * half),
            &(&vel + &v2 * half),
            &(&state.u + &u2 * half),
        )?;
        let (p4, v4, u4, d4, l4) = deriv(
            &(&pos + &p3 * h),
            &(&vel + &v3 * h),
            &(&state.u + &u3 * h),
        )?;
        let w = h / S::of(6.0);
        let two = S::of(2.0);
        pos += (p1 + p2 * two + p3 * two + p4) * w;
        vel += (v1 + v2 * two + v3 * two + v4) * w;
        state.u += (u1 + u2 * two + u3 * two + u4) * w;
        state.d += (d1 + d2 * two + d3 * two + d4) * w;
        state.len += (l1 + (l2 + l3) * two + l4) * w;
        if !chart.in_domain(&pos) {
            return Err(Error::OutOfDomain {
                point: pos.iter().map(|v| v.as_f64()).collect(),
            });
        }
        let speed = (chart.metric_raw(&pos) * &vel).dot(&vel).sqrt();
        drift_max = drift_max.max(((speed - speed0) / speed0).abs());
        record(state.len, &pos, &state.d);
    }
    let limit = S::of(10.0 * tol.tol_speed);
    if drift_max > limit {
        return Err(Error::StepTooLarge {
            drift: drift_max.as_f64(),
            limit: limit.as_f64(),
        });
    }
    *cur = pos;
    Ok(drift_max)
}

/// How a holonomy sample is drawn: coordinate rectangles at several scales,
/// one winding loop per periodic coordinate, and seeded random geodesic
/// triangles. The seed is the only field without a default; runs must pin
/// it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingProtocol {
    pub seed: u64,
    #[serde(default = "default_epsilons")]
    pub epsilons: Vec<f64>,
    #[serde(default = "default_n_polygons")]
    pub n_polygons: usize,
    #[serde(default = "default_polygon_side")]
    pub polygon_side: f64,
    #[serde(default = "default_include_winding")]
    pub include_winding: bool,
    #[serde(default)]
    pub frame_order: Option<Vec<usize>>,
}

fn default_epsilons() -> Vec<f64> {
    vec![0.4, 0.2, 0.1]
}
fn default_n_polygons() -> usize {
    20
}
fn default_polygon_side() -> f64 {
    0.5
}
fn default_include_winding() -> bool {
    true
}

impl SamplingProtocol {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            epsilons: default_epsilons(),
            n_polygons: default_n_polygons(),
            polygon_side: default_polygon_side(),
            include_winding: default_include_winding(),
            frame_order: None,
        }
    }

    pub fn validate(&self, dim: usize) -> Result<()> {
        if self.epsilons.iter().any(|&e| !(e > 0.0)) {
            return Err(Error::ConfigInvalid(
                "protocol scales must be positive".into(),
            ));
        }
        if !(self.polygon_side > 0.0) {
            return Err(Error::ConfigInvalid("polygon side must be positive".into()));
        }
        if let Some(order) = &self.frame_order {
            let mut seen = vec![false; dim];
            if order.len() != dim
                || order
                    .iter()
                    .any(|&i| i >= dim || std::mem::replace(&mut seen[i], true))
            {
                return Err(Error::ConfigInvalid(format!(
                    "frame_order must be a permutation of 0..{dim}"
                )));
            }
        }
        Ok(())
    }
}

/// Builds the protocol's loop specs at `base`. Deterministic for a fixed
/// seed: the random triangles come from a counter-seeded stream, and vertex
/// attempts that leave the chart are retried with shrinking sides.
pub fn protocol_loops<S: Real>(
    chart: &MetricChart<S>,
    base: &DVector<S>,
    protocol: &SamplingProtocol,
    step: S,
    tol: &Tolerances,
) -> Result<Vec<LoopSpec<S>>> {
    let m = chart.dim();
    protocol.validate(m)?;
    chart.metric_at(base, tol)?;
    let mut specs = Vec::new();

    for &eps in &protocol.epsilons {
        for i in 0..m {
            for j in (i + 1)..m {
                specs.push(LoopSpec::rectangle(base.clone(), i, j, S::of(eps)));
            }
        }
    }

    if protocol.include_winding {
        for (coord, period) in chart.periods().iter().enumerate() {
            if let Some(p) = period {
                specs.push(LoopSpec::winding(base.clone(), coord, *p, 1));
            }
        }
    }

    if protocol.n_polygons > 0 {
        let u0 = chart
            .orthonormal_frame(base, protocol.frame_order.as_deref(), tol)?
            .matrix;
        let mut rng = ChaCha8Rng::seed_from_u64(protocol.seed);
        for index in 0..protocol.n_polygons {
            let mut built = None;
            for attempt in 0..40usize {
                let side = S::of(protocol.polygon_side / f64::powi(2.0, (attempt / 10) as i32));
                let u1: DVector<S> = affine::random_unit_vector(m, &mut rng);
                let mut u2: DVector<S> = affine::random_unit_vector(m, &mut rng);
                let mut tries = 0;
                while u1.dot(&u2).abs() > S::of(0.9) && tries < 20 {
                    u2 = affine::random_unit_vector(m, &mut rng);
                    tries += 1;
                }
                let v1 = &u0 * &u1 * side;
                let v2 = &u0 * &u2 * side;
                let p1 = match chart.exp_map(base, &v1, step, tol) {
                    Ok(p) => p,
                    Err(_) => continue,
                };
                let p2 = match chart.exp_map(base, &v2, step, tol) {
                    Ok(p) => p,
                    Err(_) => continue,
                };
                built = Some(LoopSpec::geodesic_polygon(base.clone(), vec![p1, p2], index));
                break;
            }
            specs.push(built.ok_or(Error::ConvergenceFailure {
                what: "random polygon construction",
                iterations: 40,
                residual: f64::NAN,
            })?);
        }
    }
    Ok(specs)
}

/// Runs the sampling protocol: builds the loop specs and develops each one.
/// Loops develop in parallel but the output keeps generation order, so
/// fixed seeds give byte-identical reports.
pub fn sample_holonomy<S: Real>(
    chart: &MetricChart<S>,
    base: &DVector<S>,
    protocol: &SamplingProtocol,
    step: S,
    tol: &Tolerances,
) -> Result<Vec<HolonomySample<S>>> {
    let specs = protocol_loops(chart, base, protocol, step, tol)?;
    let order = protocol.frame_order.clone();
    specs
        .par_iter()
        .map(|spec| develop_loop(chart, spec, order.as_deref(), step, tol))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use approx::assert_abs_diff_eq;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn rectangle_spec_closes_and_reverses() {
        let base = DVector::from_vec(vec![1.0f64, 2.0]);
        let spec = LoopSpec::rectangle(base.clone(), 0, 1, 0.3);
        let verts = spec.vertices();
        assert_eq!(verts.len(), 5);
        assert_abs_diff_eq!((verts[4].clone() - base).amax(), 0.0, epsilon = 1e-15);
        let rev = spec.reversed();
        let rv = rev.vertices();
        for (a, b) in rv.iter().zip(verts.iter().rev()) {
            assert_abs_diff_eq!((a - b).amax(), 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn non_closed_spec_rejected() {
        let chart = catalog::flat_chart::<f64>(2);
        let base = DVector::from_vec(vec![0.0f64, 0.0]);
        let spec = LoopSpec {
            base: base.clone(),
            segments: vec![Segment::Line {
                delta: DVector::from_vec(vec![1.0, 0.0]),
            }],
            label: "open".into(),
            kind: LoopKind::Custom,
        };
        assert!(matches!(
            develop_loop(&chart, &spec, None, 1e-2, &tol()),
            Err(Error::NonClosedCurve { .. })
        ));
    }

    #[test]
    fn flat_loops_develop_trivially() {
        let chart = catalog::flat_chart::<f64>(3);
        let base = DVector::from_vec(vec![0.2f64, -0.5, 1.0]);
        let spec = LoopSpec::rectangle(base, 0, 2, 0.7);
        let sample = develop_loop(&chart, &spec, None, 1e-2, &tol()).unwrap();
        assert!(sample.element.deviation_from_identity() < 1e-12);
        assert_abs_diff_eq!(sample.arc_length, 2.8, epsilon = 1e-10);
        assert!(sample.endpoint_gap < 1e-14);
    }

    #[test]
    fn flat_transport_returns_vector_unchanged() {
        let chart = catalog::flat_chart::<f64>(2);
        let start = TangentVector {
            base: DVector::from_vec(vec![0.0f64, 0.0]),
            vector: DVector::from_vec(vec![0.3, -0.8]),
        };
        let spec = LoopSpec::rectangle(start.base.clone(), 0, 1, 0.5);
        let end = transport_vector(&chart, &start, &spec.segments, 1e-2, &tol()).unwrap();
        assert!((end.vector - start.vector).amax() < 1e-12);
    }

    #[test]
    fn sphere_equator_translates_by_circumference() {
        // Winding the equator of the unit sphere transports trivially but
        // develops to a straight segment of length 2π.
        let chart = catalog::sphere_chart::<f64>(1.0);
        let base = DVector::from_vec(vec![std::f64::consts::FRAC_PI_2, 0.0]);
        let spec = LoopSpec::winding(base, 1, 2.0 * std::f64::consts::PI, 1);
        let sample = develop_loop(&chart, &spec, None, 1e-3, &tol()).unwrap();
        let eye = DMatrix::<f64>::identity(2, 2);
        assert!((sample.element.a.clone() - eye).amax() < 1e-9);
        assert_abs_diff_eq!(
            sample.element.b.norm(),
            2.0 * std::f64::consts::PI,
            epsilon = 1e-8
        );
        assert_abs_diff_eq!(
            sample.arc_length,
            2.0 * std::f64::consts::PI,
            epsilon = 1e-8
        );
    }

    #[test]
    fn equator_development_is_straight_line_of_loop_length() {
        let chart = catalog::sphere_chart::<f64>(1.0);
        let base = DVector::from_vec(vec![std::f64::consts::FRAC_PI_2, 0.0]);
        let quarter = std::f64::consts::FRAC_PI_2;
        let segments = vec![Segment::Line {
            delta: DVector::from_vec(vec![0.0, quarter]),
        }];
        let trace = develop_curve(&chart, &base, &segments, None, 1e-3, &tol()).unwrap();
        let dev_end = trace.dev_points.last().unwrap();
        // Quarter equator develops to a segment of length π/2 along one
        // frame axis.
        assert_abs_diff_eq!(dev_end.norm(), quarter, epsilon = 1e-9);
        assert_abs_diff_eq!(*trace.arc.last().unwrap(), quarter, epsilon = 1e-9);
        // Straightness: every sample sits at its own arc length along the
        // fixed endpoint direction.
        let dir = dev_end / dev_end.norm();
        for (dev, arc) in trace.dev_points.iter().zip(trace.arc.iter()) {
            assert!((dev - &dir * *arc).norm() < 1e-8, "arc {arc}");
        }
    }

    #[test]
    fn reversed_loop_inverts_element() {
        let chart = catalog::sphere_chart::<f64>(1.0);
        let base = DVector::from_vec(vec![1.1f64, 0.4]);
        let spec = LoopSpec::rectangle(base, 0, 1, 0.4);
        let fwd = develop_loop(&chart, &spec, None, 1e-3, &tol()).unwrap();
        let bwd = develop_loop(&chart, &spec.reversed(), None, 1e-3, &tol()).unwrap();
        let prod = fwd.element.compose(&bwd.element).unwrap();
        assert!(prod.deviation_from_identity() < 1e-9);
    }

    #[test]
    fn concatenation_multiplies_elements() {
        let chart = catalog::sphere_chart::<f64>(1.0);
        let base = DVector::from_vec(vec![1.0f64, 0.2]);
        let l1 = LoopSpec::rectangle(base.clone(), 0, 1, 0.3);
        let l2 = LoopSpec::rectangle(base.clone(), 0, 1, 0.5);
        let h1 = develop_loop(&chart, &l1, None, 1e-3, &tol()).unwrap();
        let h2 = develop_loop(&chart, &l2, None, 1e-3, &tol()).unwrap();
        let joined = develop_loop(&chart, &l1.then(&l2).unwrap(), None, 1e-3, &tol()).unwrap();
        // Later loop acts on the left.
        let expected = h2.element.compose(&h1.element).unwrap();
        assert!(joined.element.deviation_from(&expected) < 1e-9);
    }

    #[test]
    fn protocol_is_seed_deterministic() {
        let chart = catalog::sphere_chart::<f64>(1.0);
        let base = DVector::from_vec(vec![1.2f64, 0.3]);
        let mut proto = SamplingProtocol::with_seed(42);
        proto.n_polygons = 3;
        proto.epsilons = vec![0.2];
        let a = sample_holonomy(&chart, &base, &proto, 1e-2, &tol()).unwrap();
        let b = sample_holonomy(&chart, &base, &proto, 1e-2, &tol()).unwrap();
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b.iter()) {
            assert_eq!(x.label, y.label);
            assert_eq!(x.element.a, y.element.a);
            assert_eq!(x.element.b, y.element.b);
        }
        let mut proto2 = proto.clone();
        proto2.seed = 43;
        let c = sample_holonomy(&chart, &base, &proto2, 1e-2, &tol()).unwrap();
        let differs = a
            .iter()
            .zip(c.iter())
            .any(|(x, y)| x.kind != y.kind || x.element.a != y.element.a);
        assert!(differs);
    }

    #[test]
    fn polyline_winding_the_cone_matches_straight_winding() {
        let chart = catalog::cone_circle_chart::<f64>(0.5, 0.05, 10.0).unwrap();
        let base = DVector::from_vec(vec![1.0f64, 0.0]);
        let tau = 2.0 * std::f64::consts::PI;
        let n = 64;
        let points: Vec<DVector<f64>> = (0..=n)
            .map(|k| DVector::from_vec(vec![1.0, tau * k as f64 / n as f64]))
            .collect();
        let poly = LoopSpec::param_curve(points).unwrap();
        let straight = LoopSpec::winding(base, 1, tau, 1);
        let a = develop_loop(&chart, &poly, None, 1e-3, &tol()).unwrap();
        let b = develop_loop(&chart, &straight, None, 1e-3, &tol()).unwrap();
        assert!(a.element.deviation_from(&b.element) < 1e-9);
    }

    #[test]
    fn frame_order_permutation_rejected_when_invalid() {
        let mut proto = SamplingProtocol::with_seed(1);
        proto.frame_order = Some(vec![0, 0]);
        assert!(matches!(proto.validate(2), Err(Error::ConfigInvalid(_))));
    }
}
