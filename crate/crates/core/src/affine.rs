//! The affine isometry group of a tangent space and its realizations.
//!
//! An element is a pair `(A, b)` acting on vectors as `v ↦ A v + b`,
//! equivalently the block matrix `[[A, b], [0, 1]]`. Holonomy elements are
//! expressed in an orthonormal reference frame, so linear parts of genuine
//! holonomy samples are orthogonal.
//!
//! The module also carries the bundle-level maps that identify three pictures
//! of the same object: affine frames `(p, u)`, pairs `(u, v)` in the product
//! trivialization, and frames paired with a structure-group element. These
//! are pure linear algebra at a fixed point and are tested as exact
//! identities.

use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::Real;
use crate::tolerances::Tolerances;
use nalgebra::{DMatrix, DVector};
use rand::Rng;

/// Affine map `v ↦ A v + b`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineIsometry<S: Real> {
    pub a: DMatrix<S>,
    pub b: DVector<S>,
}

// Wire format: {"A": row-major m x m array, "b": m array}. Reports and
// golden files rely on this shape, so it is implemented by hand instead of
// leaking the nalgebra storage layout.
impl<S: Real> serde::Serialize for AffineIsometry<S> {
    fn serialize<Ser: serde::Serializer>(
        &self,
        serializer: Ser,
    ) -> std::result::Result<Ser::Ok, Ser::Error> {
        use serde::ser::SerializeStruct;
        let m = self.dim();
        let a: Vec<Vec<f64>> = (0..m)
            .map(|i| (0..m).map(|j| self.a[(i, j)].as_f64()).collect())
            .collect();
        let b: Vec<f64> = self.b.iter().map(|x| x.as_f64()).collect();
        let mut st = serializer.serialize_struct("AffineIsometry", 2)?;
        st.serialize_field("A", &a)?;
        st.serialize_field("b", &b)?;
        st.end()
    }
}

impl<'de, S: Real> serde::Deserialize<'de> for AffineIsometry<S> {
    fn deserialize<D: serde::Deserializer<'de>>(
        deserializer: D,
    ) -> std::result::Result<Self, D::Error> {
        #[derive(serde::Deserialize)]
        #[serde(deny_unknown_fields)]
        struct Repr {
            #[serde(rename = "A")]
            a: Vec<Vec<f64>>,
            b: Vec<f64>,
        }
        let repr = Repr::deserialize(deserializer)?;
        let m = repr.b.len();
        if repr.a.len() != m || repr.a.iter().any(|row| row.len() != m) {
            return Err(serde::de::Error::custom(format!(
                "field A must be a {m} x {m} row-major matrix matching b"
            )));
        }
        Ok(Self {
            a: DMatrix::from_fn(m, m, |i, j| S::of(repr.a[i][j])),
            b: DVector::from_fn(m, |i, _| S::of(repr.b[i])),
        })
    }
}

impl<S: Real> AffineIsometry<S> {
    pub fn new(a: DMatrix<S>, b: DVector<S>) -> Result<Self> {
        if a.nrows() != a.ncols() || a.nrows() != b.len() {
            return Err(Error::DimensionMismatch {
                expected: b.len(),
                got: a.nrows(),
            });
        }
        Ok(Self { a, b })
    }

    pub fn identity(dim: usize) -> Self {
        Self {
            a: DMatrix::identity(dim, dim),
            b: DVector::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.b.len()
    }

    /// Applies the affine action to a tangent vector viewed as a point.
    pub fn act(&self, v: &DVector<S>) -> Result<DVector<S>> {
        if v.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: v.len(),
            });
        }
        Ok(&self.a * v + &self.b)
    }

    /// Group product: `(self ∘ first)(v) = self(first(v))`, so `first` acts
    /// first. Matches block-matrix multiplication `self · first`.
    pub fn compose(&self, first: &Self) -> Result<Self> {
        if self.dim() != first.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: first.dim(),
            });
        }
        Ok(Self {
            a: &self.a * &first.a,
            b: &self.a * &first.b + &self.b,
        })
    }

    pub fn inverse(&self) -> Result<Self> {
        let lu = self.a.clone().lu();
        let a_inv = lu.try_inverse().ok_or(Error::SingularLinearPart)?;
        let b = -(&a_inv * &self.b);
        Ok(Self { a: a_inv, b })
    }

    /// Max-abs deviation from the identity element.
    pub fn deviation_from_identity(&self) -> S {
        let m = self.dim();
        let lin = linalg::max_abs(&(&self.a - DMatrix::<S>::identity(m, m)));
        lin.max(self.b.amax())
    }

    /// Max-abs deviation between two elements.
    pub fn deviation_from(&self, other: &Self) -> S {
        let lin = linalg::max_abs(&(&self.a - &other.a));
        lin.max((&self.b - &other.b).amax())
    }

    pub fn is_trivial(&self, tol: S) -> bool {
        self.deviation_from_identity() <= tol
    }

    /// Deviation of the linear part from orthogonality.
    pub fn orthogonality_defect(&self) -> S {
        linalg::orthogonality_defect(&self.a)
    }

    /// Restricts the element to a subspace with orthonormal basis columns
    /// `basis`: `(Bᵀ A B, Bᵀ b)`.
    pub fn restrict(&self, basis: &DMatrix<S>) -> Self {
        Self {
            a: basis.transpose() * &self.a * basis,
            b: basis.transpose() * &self.b,
        }
    }
}

/// Affine frame `(p, u)`: a tangent-space point `p` together with a frame
/// matrix `u`, both in chart components at a fixed base point.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineFrame<S: Real> {
    pub point: DVector<S>,
    pub frame: DMatrix<S>,
}

/// Point `(u, v)` of the product trivialization: a frame together with a
/// vector of frame coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct ProductPoint<S: Real> {
    pub frame: DMatrix<S>,
    pub vector: DVector<S>,
}

/// Right action of `(A, b)` on an affine frame:
/// `(p, u) · (A, b) = (p + u b, u A)`.
pub fn frame_right_action<S: Real>(
    af: &AffineFrame<S>,
    g: &AffineIsometry<S>,
) -> Result<AffineFrame<S>> {
    if af.point.len() != g.dim() {
        return Err(Error::DimensionMismatch {
            expected: af.point.len(),
            got: g.dim(),
        });
    }
    Ok(AffineFrame {
        point: &af.point + &af.frame * &g.b,
        frame: &af.frame * &g.a,
    })
}

/// Right action of `(a, ξ)` on a product-trivialization point:
/// `(u, v) · (a, ξ) = (u a, a⁻¹ v − a⁻¹ ξ)`.
pub fn product_right_action<S: Real>(
    p: &ProductPoint<S>,
    g: &AffineIsometry<S>,
) -> Result<ProductPoint<S>> {
    if p.vector.len() != g.dim() {
        return Err(Error::DimensionMismatch {
            expected: p.vector.len(),
            got: g.dim(),
        });
    }
    let lu = g.a.clone().lu();
    let v = lu.solve(&(&p.vector - &g.b)).ok_or(Error::SingularLinearPart)?;
    Ok(ProductPoint {
        frame: &p.frame * &g.a,
        vector: v,
    })
}

/// Equivariant identification of affine frames with product-trivialization
/// points: `(p, u) ↦ (u, −u⁻¹ p)`.
pub fn affine_frame_to_product<S: Real>(
    af: &AffineFrame<S>,
    tol: &Tolerances,
) -> Result<ProductPoint<S>> {
    let det = af.frame.determinant();
    if det.abs() <= S::of(tol.eps_frame) {
        return Err(Error::SingularFrame { det: det.as_f64() });
    }
    let lu = af.frame.clone().lu();
    let v = lu.solve(&(-&af.point)).ok_or(Error::SingularFrame { det: det.as_f64() })?;
    Ok(ProductPoint {
        frame: af.frame.clone(),
        vector: v,
    })
}

/// Inverse of [`affine_frame_to_product`]: `(u, v) ↦ (−u v, u)`.
pub fn product_to_affine_frame<S: Real>(p: &ProductPoint<S>) -> AffineFrame<S> {
    AffineFrame {
        point: -(&p.frame * &p.vector),
        frame: p.frame.clone(),
    }
}

/// Identification of a frame paired with a structure-group element `(a, ξ)`
/// with a product-trivialization point: `(u, (a, ξ)) ↦ (u a, −a⁻¹ ξ)`.
pub fn extended_to_product<S: Real>(
    frame: &DMatrix<S>,
    g: &AffineIsometry<S>,
) -> Result<ProductPoint<S>> {
    let lu = g.a.clone().lu();
    let v = lu.solve(&(-&g.b)).ok_or(Error::SingularLinearPart)?;
    Ok(ProductPoint {
        frame: frame * &g.a,
        vector: v,
    })
}

/// Fixed-point solve outcome over a holonomy sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum FixedPointVerdict {
    #[serde(rename = "FIXED_POINT")]
    FixedPoint,
    #[serde(rename = "NO_FIXED_POINT")]
    NoFixedPoint,
    #[serde(rename = "DEGENERATE")]
    Degenerate,
}

#[derive(Debug, Clone)]
pub struct FixedPointResult<S: Real> {
    /// Least-squares common fixed point in frame coordinates.
    pub point: DVector<S>,
    /// Root-mean-square of `|(I − A_i) p − b_i|` over the sample.
    pub residual: S,
    /// Residuals are judged relative to `max(1, max_i |b_i|)`.
    pub scale: S,
    /// Singular values of the stacked `(I − A_i)` blocks, descending.
    pub stack_singular_values: Vec<S>,
    pub verdict: FixedPointVerdict,
}

/// Least-squares solve for a common fixed point of the sample: minimizes
/// `Σ_i |(I − A_i) p − b_i|²` through ridge-stabilized normal equations.
///
/// The verdict is `NO_FIXED_POINT` when the residual exceeds
/// `tol_fp · scale`, otherwise `DEGENERATE` when the stacked system has
/// rank below the dimension (fixed-point set is affine of positive
/// dimension), otherwise `FIXED_POINT`.
pub fn solve_fixed_point<S: Real>(
    samples: &[AffineIsometry<S>],
    tol: &Tolerances,
) -> Result<FixedPointResult<S>> {
    let first = samples.first().ok_or(Error::EmptySample)?;
    let m = first.dim();
    for s in samples {
        if s.dim() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: s.dim(),
            });
        }
    }
    let eye = DMatrix::<S>::identity(m, m);
    let mut normal = DMatrix::<S>::zeros(m, m);
    let mut rhs = DVector::<S>::zeros(m);
    let mut stack = DMatrix::<S>::zeros(samples.len() * m, m);
    let mut scale = S::one();
    for (i, s) in samples.iter().enumerate() {
        let d = &eye - &s.a;
        normal += d.transpose() * &d;
        rhs += d.transpose() * &s.b;
        stack.view_mut((i * m, 0), (m, m)).copy_from(&d);
        scale = scale.max(s.b.norm());
    }
    let ridge = S::of(tol.eps_ridge);
    let point = linalg::solve_spd(&(&normal + &eye * ridge), &rhs)
        .or_else(|| (&normal + &eye * ridge).lu().solve(&rhs))
        .ok_or(Error::SingularLinearPart)?;

    let mut sq_sum = S::zero();
    for s in samples {
        let r = (&eye - &s.a) * &point - &s.b;
        sq_sum += r.norm_squared();
    }
    let residual = (sq_sum / S::of(samples.len() as f64)).sqrt();

    let mut sv: Vec<S> = stack.svd(false, false).singular_values.iter().copied().collect();
    sv.sort_by(|a, b| b.partial_cmp(a).expect("finite singular values"));
    let sigma_max = sv.first().copied().unwrap_or(S::zero());
    let rank_floor = S::of(1e-8) * sigma_max.max(S::one());
    let deficient = sv.len() < m || sv[m - 1] <= rank_floor;

    let verdict = if residual >= S::of(tol.tol_fp) * scale {
        FixedPointVerdict::NoFixedPoint
    } else if deficient {
        FixedPointVerdict::Degenerate
    } else {
        FixedPointVerdict::FixedPoint
    };
    Ok(FixedPointResult {
        point,
        residual,
        scale,
        stack_singular_values: sv,
        verdict,
    })
}

/// Compactness call for a sampled holonomy group.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum CompactnessVerdict {
    #[serde(rename = "TRIVIAL")]
    Trivial,
    #[serde(rename = "COMPACT")]
    Compact,
    #[serde(rename = "NONCOMPACT")]
    Noncompact,
}

/// Classifies the sample as trivial, compact (a common fixed point exists or
/// the fixed-point set is degenerate), or noncompact. Linear parts must be
/// orthogonal within `tol_orth`; anything else signals broken transport
/// rather than interesting geometry.
pub fn compactness_verdict<S: Real>(
    samples: &[AffineIsometry<S>],
    tol: &Tolerances,
) -> Result<(CompactnessVerdict, FixedPointResult<S>)> {
    if samples.is_empty() {
        return Err(Error::EmptySample);
    }
    for s in samples {
        let defect = s.orthogonality_defect();
        if defect > S::of(tol.tol_orth) {
            return Err(Error::NonOrthogonalLinearPart {
                deviation: defect.as_f64(),
                limit: tol.tol_orth,
            });
        }
    }
    let fp = solve_fixed_point(samples, tol)?;
    let trivial = samples
        .iter()
        .all(|s| s.is_trivial(S::of(tol.tol_trivial) * fp.scale));
    let verdict = if trivial {
        CompactnessVerdict::Trivial
    } else {
        match fp.verdict {
            FixedPointVerdict::FixedPoint | FixedPointVerdict::Degenerate => {
                CompactnessVerdict::Compact
            }
            FixedPointVerdict::NoFixedPoint => CompactnessVerdict::Noncompact,
        }
    };
    Ok((verdict, fp))
}

/// Haar-ish random rotation: QR of a Gaussian matrix with the sign fix that
/// makes the factorization unique, then a determinant flip to land in the
/// rotation group. Deterministic for a fixed RNG stream.
pub fn random_rotation<S: Real>(dim: usize, rng: &mut impl Rng) -> DMatrix<S> {
    let gauss = DMatrix::<f64>::from_fn(dim, dim, |_, _| {
        rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng)
    });
    let qr = gauss.qr();
    let mut q = qr.q();
    let r = qr.r();
    for c in 0..dim {
        if r[(c, c)] < 0.0 {
            for row in 0..dim {
                q[(row, c)] = -q[(row, c)];
            }
        }
    }
    if q.determinant() < 0.0 {
        for row in 0..dim {
            q[(row, dim - 1)] = -q[(row, dim - 1)];
        }
    }
    DMatrix::from_fn(dim, dim, |i, j| S::of(q[(i, j)]))
}

/// Random affine isometry with rotation linear part and Gaussian translation.
pub fn random_affine<S: Real>(dim: usize, rng: &mut impl Rng) -> AffineIsometry<S> {
    let a = random_rotation(dim, rng);
    let b = DVector::<S>::from_fn(dim, |_, _| {
        S::of(rand_distr::Distribution::sample(
            &rand_distr::StandardNormal,
            rng,
        ))
    });
    AffineIsometry { a, b }
}

/// Random unit vector, uniform on the sphere.
pub fn random_unit_vector<S: Real>(dim: usize, rng: &mut impl Rng) -> DVector<S> {
    loop {
        let v = DVector::<f64>::from_fn(dim, |_, _| {
            rand_distr::Distribution::sample(&rand_distr::StandardNormal, rng)
        });
        let n = v.norm();
        if n > 1e-6 {
            return DVector::from_fn(dim, |i, _| S::of(v[i] / n));
        }
    }
}
