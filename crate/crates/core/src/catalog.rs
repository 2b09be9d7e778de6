//! Built-in metric charts and the JSON descriptor that assembles them.
//!
//! Every chart here is a single coordinate box with a closed-form metric;
//! the named entries span the behaviors the classifier distinguishes: flat,
//! compact-with-fixed-point (cones), full semidirect (round spheres,
//! hyperbolic plane), products of those, and a generic curved surface that
//! is none of the above.

use crate::chart::MetricChart;
use crate::cone;
use crate::error::{Error, Result};
use crate::scalar::Real;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Flat chart on a coordinate box, identity metric.
pub fn flat_chart<S: Real>(dim: usize) -> MetricChart<S> {
    let metric = Arc::new(move |_: &DVector<S>| DMatrix::<S>::identity(dim, dim));
    let gammas = Arc::new(move |_: &DVector<S>| vec![DMatrix::<S>::zeros(dim, dim); dim]);
    MetricChart::new(
        format!("flat({dim})"),
        vec![(S::of(-10.0), S::of(10.0)); dim],
        metric,
    )
    .with_christoffel(gammas)
}

/// Circle of radius `radius` as a 1-dimensional chart with a periodic
/// coordinate; total length `2π·radius`.
pub fn circle_chart<S: Real>(radius: f64) -> MetricChart<S> {
    let metric = Arc::new(move |_: &DVector<S>| {
        DMatrix::<S>::from_element(1, 1, S::of(radius * radius))
    });
    let gammas = Arc::new(move |_: &DVector<S>| vec![DMatrix::<S>::zeros(1, 1)]);
    MetricChart::new(
        format!("circle({radius})"),
        vec![(S::of(-10.0), S::of(10.0))],
        metric,
    )
    .with_period(0, S::of(2.0 * std::f64::consts::PI))
    .with_christoffel(gammas)
}

/// Round 2-sphere of the given radius in colatitude/longitude coordinates
/// `(θ, φ)`; the chart excludes neighborhoods of the poles and `φ` is
/// periodic.
pub fn sphere_chart<S: Real>(radius: f64) -> MetricChart<S> {
    let r2 = radius * radius;
    let metric = Arc::new(move |x: &DVector<S>| {
        let s = x[0].sin();
        let mut g = DMatrix::<S>::zeros(2, 2);
        g[(0, 0)] = S::of(r2);
        g[(1, 1)] = S::of(r2) * s * s;
        g
    });
    let gammas = Arc::new(move |x: &DVector<S>| {
        let (s, c) = (x[0].sin(), x[0].cos());
        let mut g_theta = DMatrix::<S>::zeros(2, 2);
        let mut g_phi = DMatrix::<S>::zeros(2, 2);
        g_theta[(1, 1)] = -s * c;
        let cot = c / s;
        g_phi[(0, 1)] = cot;
        g_phi[(1, 0)] = cot;
        vec![g_theta, g_phi]
    });
    MetricChart::new(
        format!("sphere({radius})"),
        vec![
            (S::of(0.05), S::of(std::f64::consts::PI - 0.05)),
            (S::of(-10.0), S::of(10.0)),
        ],
        metric,
    )
    .with_period(1, S::of(2.0 * std::f64::consts::PI))
    .with_christoffel(gammas)
}

/// Hyperbolic plane as the upper half-plane `(x, y)`, `y > 0`, with metric
/// `(dx² + dy²)/y²`; curvature -1.
pub fn hyperbolic_chart<S: Real>() -> MetricChart<S> {
    let metric = Arc::new(move |x: &DVector<S>| {
        let inv = S::one() / (x[1] * x[1]);
        let mut g = DMatrix::<S>::zeros(2, 2);
        g[(0, 0)] = inv;
        g[(1, 1)] = inv;
        g
    });
    let gammas = Arc::new(move |x: &DVector<S>| {
        let inv_y = S::one() / x[1];
        let mut g_x = DMatrix::<S>::zeros(2, 2);
        let mut g_y = DMatrix::<S>::zeros(2, 2);
        g_x[(0, 1)] = -inv_y;
        g_x[(1, 0)] = -inv_y;
        g_y[(0, 0)] = inv_y;
        g_y[(1, 1)] = -inv_y;
        vec![g_x, g_y]
    });
    MetricChart::new(
        "hyperbolic",
        vec![(S::of(-50.0), S::of(50.0)), (S::of(0.01), S::of(100.0))],
        metric,
    )
    .with_christoffel(gammas)
}

/// Paraboloid of revolution `z = (x² + y²)/2` with the metric induced from
/// Euclidean 3-space. Ships without analytic Christoffel symbols on purpose:
/// it exercises the finite-difference connection path, and it is curved but
/// neither a cone nor constant-curvature.
pub fn paraboloid_chart<S: Real>() -> MetricChart<S> {
    let metric = Arc::new(move |p: &DVector<S>| {
        let (x, y) = (p[0], p[1]);
        let mut g = DMatrix::<S>::zeros(2, 2);
        g[(0, 0)] = S::one() + x * x;
        g[(0, 1)] = x * y;
        g[(1, 0)] = x * y;
        g[(1, 1)] = S::one() + y * y;
        g
    });
    MetricChart::new(
        "paraboloid",
        vec![(S::of(-5.0), S::of(5.0)), (S::of(-5.0), S::of(5.0))],
        metric,
    )
}

/// Product chart: coordinates are concatenated, the metric is block
/// diagonal, and analytic Christoffel symbols survive when both factors
/// have them.
pub fn product_chart<S: Real>(a: &MetricChart<S>, b: &MetricChart<S>) -> MetricChart<S> {
    let (ma, mb) = (a.dim(), b.dim());
    let m = ma + mb;
    let (ga, gb) = (a.metric_fn(), b.metric_fn());
    let metric = Arc::new(move |x: &DVector<S>| {
        let xa = x.rows(0, ma).clone_owned();
        let xb = x.rows(ma, mb).clone_owned();
        let blk_a = ga(&xa);
        let blk_b = gb(&xb);
        let mut g = DMatrix::<S>::zeros(m, m);
        g.view_mut((0, 0), (ma, ma)).copy_from(&blk_a);
        g.view_mut((ma, ma), (mb, mb)).copy_from(&blk_b);
        g
    });

    let mut domain = a.domain().to_vec();
    domain.extend_from_slice(b.domain());
    let mut chart = MetricChart::new(
        format!("product({},{})", a.label(), b.label()),
        domain,
        metric,
    );
    for (i, p) in a.periods().iter().enumerate() {
        if let Some(p) = p {
            chart = chart.with_period(i, *p);
        }
    }
    for (i, p) in b.periods().iter().enumerate() {
        if let Some(p) = p {
            chart = chart.with_period(ma + i, *p);
        }
    }

    if let (Some(ca), Some(cb)) = (a.christoffel_fn(), b.christoffel_fn()) {
        let gammas = Arc::new(move |x: &DVector<S>| {
            let xa = x.rows(0, ma).clone_owned();
            let xb = x.rows(ma, mb).clone_owned();
            let blk_a = ca(&xa);
            let blk_b = cb(&xb);
            let mut out = vec![DMatrix::<S>::zeros(m, m); m];
            for k in 0..ma {
                out[k].view_mut((0, 0), (ma, ma)).copy_from(&blk_a[k]);
            }
            for k in 0..mb {
                out[ma + k]
                    .view_mut((ma, ma), (mb, mb))
                    .copy_from(&blk_b[k]);
            }
            out
        });
        chart = chart.with_christoffel(gammas);
    }
    chart
}

/// Flat 2-dimensional cone with circumference angle `2πc`, i.e. the cone
/// over a circle of radius `c`, in coordinates `(r, θ)`.
pub fn cone_circle_chart<S: Real>(c: f64, r_min: f64, r_max: f64) -> Result<MetricChart<S>> {
    cone::make_cone(&circle_chart(c), S::of(r_min), S::of(r_max))
}

fn default_radius() -> f64 {
    1.0
}
fn default_r_min() -> f64 {
    0.05
}
fn default_r_max() -> f64 {
    10.0
}

/// JSON-facing chart descriptor. `cone` wraps a base descriptor with the
/// metric `dr² + r²·(base metric)`; `product` concatenates factors;
/// `custom` names a registered chart that has no parametric family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ChartDescriptor {
    Flat {
        dim: usize,
    },
    Circle {
        radius: f64,
    },
    Sphere {
        #[serde(default = "default_radius")]
        radius: f64,
    },
    Hyperbolic,
    Cone {
        base: Box<ChartDescriptor>,
        #[serde(default = "default_r_min")]
        r_min: f64,
        #[serde(default = "default_r_max")]
        r_max: f64,
    },
    Product {
        factors: Vec<ChartDescriptor>,
    },
    Custom {
        name: String,
    },
}

impl ChartDescriptor {
    pub fn build<S: Real>(&self) -> Result<MetricChart<S>> {
        match self {
            Self::Flat { dim } => {
                if *dim == 0 {
                    return Err(Error::ConfigInvalid("flat chart needs dim >= 1".into()));
                }
                Ok(flat_chart(*dim))
            }
            Self::Circle { radius } => {
                if !(*radius > 0.0) {
                    return Err(Error::ConfigInvalid("circle radius must be positive".into()));
                }
                Ok(circle_chart(*radius))
            }
            Self::Sphere { radius } => {
                if !(*radius > 0.0) {
                    return Err(Error::ConfigInvalid("sphere radius must be positive".into()));
                }
                Ok(sphere_chart(*radius))
            }
            Self::Hyperbolic => Ok(hyperbolic_chart()),
            Self::Cone { base, r_min, r_max } => {
                let base_chart = base.build::<S>()?;
                cone::make_cone(&base_chart, S::of(*r_min), S::of(*r_max))
            }
            Self::Product { factors } => {
                if factors.len() < 2 {
                    return Err(Error::ConfigInvalid(
                        "product needs at least two factors".into(),
                    ));
                }
                let mut charts = factors.iter().map(|f| f.build::<S>());
                let first = charts.next().expect("len checked")?;
                charts.try_fold(first, |acc, next| Ok(product_chart(&acc, &next?)))
            }
            Self::Custom { name } => match name.as_str() {
                "paraboloid" => Ok(paraboloid_chart()),
                other => Err(Error::ConfigInvalid(format!(
                    "unknown custom chart '{other}'"
                ))),
            },
        }
    }
}

/// A shipped catalog entry: a named descriptor with a default base point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CatalogEntry {
    pub name: String,
    pub descriptor: ChartDescriptor,
    pub base: Vec<f64>,
    pub summary: String,
}

/// The shipped catalog. Order is fixed; reports and suite runs iterate it
/// deterministically.
pub fn entries() -> Vec<CatalogEntry> {
    use ChartDescriptor as D;
    let half_pi = std::f64::consts::FRAC_PI_2;
    let e = |name: &str, descriptor: D, base: Vec<f64>, summary: &str| CatalogEntry {
        name: name.into(),
        descriptor,
        base,
        summary: summary.into(),
    };
    vec![
        e(
            "flat-r2",
            D::Flat { dim: 2 },
            vec![0.5, -0.3],
            "Euclidean plane; trivial holonomy",
        ),
        e(
            "flat-r3",
            D::Flat { dim: 3 },
            vec![0.5, -0.3, 0.2],
            "Euclidean 3-space; trivial holonomy",
        ),
        e(
            "sphere-s2",
            D::Sphere { radius: 1.0 },
            vec![half_pi, 0.0],
            "unit round 2-sphere; rotations with unbounded translations",
        ),
        e(
            "sphere-s2-scaled",
            D::Sphere { radius: 1.5 },
            vec![half_pi, 0.0],
            "round 2-sphere of radius 1.5",
        ),
        e(
            "hyperbolic-h2",
            D::Hyperbolic,
            vec![0.0, 1.0],
            "hyperbolic plane, upper half-plane model",
        ),
        e(
            "cone-circle",
            D::Cone {
                base: Box::new(D::Circle { radius: 0.5 }),
                r_min: 0.05,
                r_max: 10.0,
            },
            vec![1.0, 0.0],
            "flat cone with half the full angle; fixed point at the apex",
        ),
        e(
            "cone-sphere",
            D::Cone {
                base: Box::new(D::Sphere { radius: 0.8 }),
                r_min: 0.05,
                r_max: 10.0,
            },
            vec![1.0, 1.2, 0.4],
            "curved 3d cone over a shrunken sphere; fixed point at the apex",
        ),
        e(
            "product-cone-cone",
            D::Product {
                factors: vec![
                    D::Cone {
                        base: Box::new(D::Circle { radius: 0.5 }),
                        r_min: 0.05,
                        r_max: 10.0,
                    },
                    D::Cone {
                        base: Box::new(D::Circle { radius: 0.75 }),
                        r_min: 0.05,
                        r_max: 10.0,
                    },
                ],
            },
            vec![1.0, 0.0, 1.0, 0.0],
            "product of two flat cones; splits into two fixed-point factors",
        ),
        e(
            "product-flat-sphere",
            D::Product {
                factors: vec![D::Flat { dim: 1 }, D::Sphere { radius: 1.0 }],
            },
            vec![0.1, half_pi, 0.3],
            "line times unit sphere; one flat factor, one irreducible factor",
        ),
        e(
            "paraboloid",
            D::Custom {
                name: "paraboloid".into(),
            },
            vec![0.6, -0.4],
            "paraboloid of revolution; curved, not a cone",
        ),
    ]
}

pub fn lookup(name: &str) -> Option<CatalogEntry> {
    entries().into_iter().find(|e| e.name == name)
}
