//! Analysis of holonomy samples: invariant splitting of the tangent space,
//! per-factor classification into the trivial / compact-with-fixed-point /
//! full-semidirect trichotomy, block-structure verification for products,
//! and translation-growth diagnostics along loop families.

use crate::affine::{self, AffineIsometry, FixedPointVerdict};
use crate::chart::MetricChart;
use crate::error::{Error, Result};
use crate::linalg;
use crate::scalar::Real;
use crate::tolerances::Tolerances;
use crate::transport::{self, HolonomySample, LoopSpec};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// One invariant subspace of the sample action.
#[derive(Debug, Clone)]
pub struct SplitFactor<S: Real> {
    /// Orthonormal basis columns, in base-frame coordinates.
    pub basis: DMatrix<S>,
    /// Whether every sampled linear part acts as the identity here.
    pub flat: bool,
}

impl<S: Real> SplitFactor<S> {
    pub fn dim(&self) -> usize {
        self.basis.ncols()
    }
}

/// Invariant orthogonal splitting of the sample. The flat factor (if any)
/// comes first, curved factors follow in a deterministic order.
#[derive(Debug, Clone)]
pub struct SplittingResult<S: Real> {
    pub factors: Vec<SplitFactor<S>>,
    /// Eigenvalues of `Σ (A_i - I)ᵀ(A_i - I)`, ascending.
    pub spectrum: Vec<S>,
    /// Worst residual coupling between distinct factors under the sample.
    pub leakage: S,
}

impl<S: Real> SplittingResult<S> {
    /// Combined basis with factor blocks side by side.
    pub fn combined_basis(&self) -> DMatrix<S> {
        let m = self.factors.iter().map(|f| f.basis.nrows()).max().unwrap_or(0);
        let total: usize = self.factors.iter().map(SplitFactor::dim).sum();
        let mut out = DMatrix::<S>::zeros(m, total);
        let mut col = 0;
        for f in &self.factors {
            out.view_mut((0, col), (m, f.dim())).copy_from(&f.basis);
            col += f.dim();
        }
        out
    }
}

fn find(parent: &mut [usize], i: usize) -> usize {
    let mut root = i;
    while parent[root] != root {
        root = parent[root];
    }
    let mut cur = i;
    while parent[cur] != root {
        let next = parent[cur];
        parent[cur] = root;
        cur = next;
    }
    root
}

/// Flip each column so its largest-magnitude entry is positive. Eigenvector
/// signs are arbitrary; this pins them for reproducible output.
fn sign_normalize<S: Real>(basis: &mut DMatrix<S>) {
    for j in 0..basis.ncols() {
        let mut idx = 0;
        let mut best = S::zero();
        for (i, v) in basis.column(j).iter().enumerate() {
            if v.abs() > best {
                best = v.abs();
                idx = i;
            }
        }
        if basis[(idx, j)] < S::zero() {
            basis.column_mut(j).neg_mut();
        }
    }
}

fn lex_less<S: Real>(a: &DMatrix<S>, b: &DMatrix<S>) -> bool {
    for (x, y) in a.iter().zip(b.iter()) {
        if x < y {
            return true;
        }
        if x > y {
            return false;
        }
    }
    a.len() < b.len()
}

/// Splits the tangent space into subspaces invariant under every sampled
/// linear part.
///
/// The eigenspaces of `T = Σ (A_i - I)ᵀ(A_i - I)` with eigenvalue at most
/// `tol_split` form the flat factor; the remaining eigenvalue clusters are
/// candidate curved factors, merged transitively whenever some sampled
/// element maps one into another by more than `tol_split`. A residual
/// cross-factor coupling above a tenth of `tol_split` cannot be told apart
/// from a genuine one, so it aborts with `ToleranceAmbiguity` instead of
/// silently choosing a side.
pub fn derham_split<S: Real>(
    elements: &[AffineIsometry<S>],
    tol: &Tolerances,
) -> Result<SplittingResult<S>> {
    let first = elements.first().ok_or(Error::EmptySample)?;
    let m = first.dim();
    for e in elements {
        if e.dim() != m {
            return Err(Error::DimensionMismatch {
                expected: m,
                got: e.dim(),
            });
        }
    }

    let eye = DMatrix::<S>::identity(m, m);
    let mut t = DMatrix::<S>::zeros(m, m);
    for e in elements {
        let d = &e.a - &eye;
        t += d.transpose() * d;
    }
    let t = (&t + &t.transpose()) * S::of(0.5);
    let (spectrum, vecs) = linalg::sym_eigen_sorted(&t);
    let tol_split = S::of(tol.tol_split);

    let flat_idx: Vec<usize> = (0..m).filter(|&i| spectrum[i] <= tol_split).collect();
    let curved_idx: Vec<usize> = (0..m).filter(|&i| spectrum[i] > tol_split).collect();

    // Cluster nearly equal eigenvalues: a repeated eigenvalue leaves the
    // choice of eigenvectors inside its eigenspace arbitrary, so such
    // directions must travel together.
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for &i in &curved_idx {
        match clusters.last_mut() {
            Some(c) if (spectrum[i] - spectrum[*c.last().unwrap()]).abs() < S::of(1e-8) => {
                c.push(i)
            }
            _ => clusters.push(vec![i]),
        }
    }

    let cluster_basis = |cluster: &[usize]| -> DMatrix<S> {
        let mut b = DMatrix::<S>::zeros(m, cluster.len());
        for (j, &i) in cluster.iter().enumerate() {
            b.set_column(j, &vecs.column(i));
        }
        b
    };

    // Invariance closure: merge clusters the sample action couples.
    let k = clusters.len();
    let bases: Vec<DMatrix<S>> = clusters.iter().map(|c| cluster_basis(c)).collect();
    let mut parent: Vec<usize> = (0..k).collect();
    for e in elements {
        for p in 0..k {
            for q in 0..k {
                if p == q {
                    continue;
                }
                let leak = linalg::max_abs(&(bases[q].transpose() * &e.a * &bases[p]));
                if leak > tol_split {
                    let (rp, rq) = (find(&mut parent, p), find(&mut parent, q));
                    if rp != rq {
                        parent[rp.max(rq)] = rp.min(rq);
                    }
                }
            }
        }
    }
    let mut merged: Vec<Vec<usize>> = Vec::new();
    let mut root_slot: Vec<Option<usize>> = vec![None; k];
    for c in 0..k {
        let root = find(&mut parent, c);
        match root_slot[root] {
            Some(slot) => merged[slot].extend_from_slice(&clusters[c]),
            None => {
                root_slot[root] = Some(merged.len());
                merged.push(clusters[c].clone());
            }
        }
    }

    let mut factors: Vec<SplitFactor<S>> = Vec::new();
    if !flat_idx.is_empty() {
        let mut basis = cluster_basis(&flat_idx);
        sign_normalize(&mut basis);
        factors.push(SplitFactor { basis, flat: true });
    }
    let mut curved: Vec<SplitFactor<S>> = merged
        .iter()
        .map(|idxs| {
            let mut basis = cluster_basis(idxs);
            sign_normalize(&mut basis);
            SplitFactor { basis, flat: false }
        })
        .collect();
    curved.sort_by(|a, b| {
        a.dim()
            .cmp(&b.dim())
            .then_with(|| {
                if lex_less(&a.basis, &b.basis) {
                    std::cmp::Ordering::Less
                } else {
                    std::cmp::Ordering::Greater
                }
            })
    });
    factors.extend(curved);

    // Residual coupling between the final factors. Anything close to the
    // split tolerance is undecidable at this tolerance; report it rather
    // than pick a side.
    let mut leakage = S::zero();
    for e in elements {
        for p in 0..factors.len() {
            for q in 0..factors.len() {
                if p == q {
                    continue;
                }
                let leak = linalg::max_abs(
                    &(factors[q].basis.transpose() * &e.a * &factors[p].basis),
                );
                leakage = leakage.max(leak);
            }
        }
    }
    if factors.len() > 1 && leakage >= S::of(0.1) * tol_split {
        return Err(Error::ToleranceAmbiguity {
            residual: leakage.as_f64(),
            tol: tol.tol_split,
        });
    }

    Ok(SplittingResult {
        factors,
        spectrum,
        leakage,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FactorVerdict {
    #[serde(rename = "TRIVIAL")]
    Trivial,
    #[serde(rename = "COMPACT_FIXED_POINT")]
    CompactFixedPoint,
    #[serde(rename = "FULL_SEMIDIRECT")]
    FullSemidirect,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OverallVerdict {
    #[serde(rename = "TRIVIAL")]
    Trivial,
    #[serde(rename = "COMPACT")]
    Compact,
    #[serde(rename = "FULL_SEMIDIRECT")]
    FullSemidirect,
}

/// Classification of one invariant factor.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FactorReport {
    pub dim: usize,
    pub flat: bool,
    /// Basis columns in base-frame coordinates.
    pub basis: Vec<Vec<f64>>,
    pub verdict: FactorVerdict,
    /// Worst max-abs deviation of the restricted elements from the
    /// identity.
    pub max_deviation: f64,
    /// Common fixed point in factor coordinates, when one exists.
    pub fixed_point: Option<Vec<f64>>,
    pub fixed_point_residual: Option<f64>,
    /// Rank of the translation parts after recentering at the least-squares
    /// fixed point; expected 0 (fixed point) or `dim` (full semidirect).
    pub translation_rank: usize,
    pub translation_singular_values: Vec<f64>,
    /// Set when no fixed point exists yet the translations do not span the
    /// factor either: the sample then contradicts the expected dichotomy.
    pub inconsistent: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub dim: usize,
    pub n_loops: usize,
    pub overall: OverallVerdict,
    /// Worst orthogonality defect among the sampled linear parts.
    pub orthogonality_defect: f64,
    /// Worst cross-factor coupling left after splitting.
    pub splitting_leakage: f64,
    /// Eigenvalues of the splitting operator, ascending.
    pub spectrum: Vec<f64>,
    /// Largest loop length in the sample; ranks are judged relative to it.
    pub arc_scale: f64,
    pub factors: Vec<FactorReport>,
}

/// Classifies a holonomy sample factor by factor.
///
/// Gate: every linear part must be orthogonal to within `tol_orth` (they
/// are pushed through a metric-orthonormal frame, so anything worse signals
/// an integration problem, not geometry). Factors whose restricted
/// elements all sit within `tol_trivial` of the identity are `TRIVIAL`;
/// otherwise the common fixed-point solve decides between
/// `COMPACT_FIXED_POINT` and `FULL_SEMIDIRECT`. Translation rank is
/// measured on the recentered residuals `b_i - (I - A_i)p̂` so that pure
/// rotation about a far-away point does not masquerade as translation.
pub fn classify<S: Real>(
    samples: &[HolonomySample<S>],
    tol: &Tolerances,
) -> Result<ClassificationReport> {
    let first = samples.first().ok_or(Error::EmptySample)?;
    let m = first.element.dim();
    let elements: Vec<AffineIsometry<S>> = samples.iter().map(|s| s.element.clone()).collect();

    let mut worst_orth = 0.0f64;
    for e in &elements {
        worst_orth = worst_orth.max(e.orthogonality_defect().as_f64());
    }
    if worst_orth > tol.tol_orth {
        return Err(Error::NonOrthogonalLinearPart {
            deviation: worst_orth,
            limit: tol.tol_orth,
        });
    }
    let arc_scale = samples
        .iter()
        .map(|s| s.arc_length.as_f64())
        .fold(0.0f64, f64::max);

    let split = derham_split(&elements, tol)?;
    let mut factors = Vec::with_capacity(split.factors.len());
    let mut any_full = false;
    let mut all_trivial = true;

    for f in &split.factors {
        let d = f.dim();
        let restricted: Vec<AffineIsometry<S>> =
            elements.iter().map(|e| e.restrict(&f.basis)).collect();
        let max_deviation = restricted
            .iter()
            .map(|e| e.deviation_from_identity().as_f64())
            .fold(0.0f64, f64::max);
        let basis_cols: Vec<Vec<f64>> = (0..d)
            .map(|j| f.basis.column(j).iter().map(|s| s.as_f64()).collect())
            .collect();

        let report = if max_deviation <= tol.tol_trivial {
            FactorReport {
                dim: d,
                flat: f.flat,
                basis: basis_cols,
                verdict: FactorVerdict::Trivial,
                max_deviation,
                fixed_point: None,
                fixed_point_residual: None,
                translation_rank: 0,
                translation_singular_values: Vec::new(),
                inconsistent: false,
            }
        } else {
            all_trivial = false;
            let fp = affine::solve_fixed_point(&restricted, tol)?;
            let eye = DMatrix::<S>::identity(d, d);
            let rows: Vec<DVector<S>> = restricted
                .iter()
                .map(|e| &e.b - (&eye - &e.a) * &fp.point)
                .collect();
            let svals = linalg::stacked_singular_values(&rows);
            let sigma_max = svals.first().map(|s| s.as_f64()).unwrap_or(0.0);
            let threshold = tol.tol_rank * sigma_max.max(arc_scale);
            let rank = svals.iter().filter(|s| s.as_f64() > threshold).count();
            let no_fixed_point = fp.verdict == FixedPointVerdict::NoFixedPoint;
            if no_fixed_point {
                any_full = true;
            }
            FactorReport {
                dim: d,
                flat: f.flat,
                basis: basis_cols,
                verdict: if no_fixed_point {
                    FactorVerdict::FullSemidirect
                } else {
                    FactorVerdict::CompactFixedPoint
                },
                max_deviation,
                fixed_point: (!no_fixed_point)
                    .then(|| fp.point.iter().map(|s| s.as_f64()).collect()),
                fixed_point_residual: Some(fp.residual.as_f64()),
                translation_rank: rank,
                translation_singular_values: svals.iter().map(|s| s.as_f64()).collect(),
                inconsistent: no_fixed_point && rank != d,
            }
        };
        factors.push(report);
    }

    let overall = if all_trivial {
        OverallVerdict::Trivial
    } else if any_full {
        OverallVerdict::FullSemidirect
    } else {
        OverallVerdict::Compact
    };

    Ok(ClassificationReport {
        dim: m,
        n_loops: samples.len(),
        overall,
        orthogonality_defect: worst_orth,
        splitting_leakage: split.leakage.as_f64(),
        spectrum: split.spectrum.iter().map(|s| s.as_f64()).collect(),
        arc_scale,
        factors,
    })
}

/// Block-structure audit of a sample against a splitting.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ProductBlockReport {
    pub pass: bool,
    /// Worst off-diagonal block entry of any linear part across factor
    /// pairs.
    pub worst_off_block: f64,
    /// Worst translation component inside a flat factor.
    pub worst_flat_translation: f64,
    /// Translation scale the flat components are compared against.
    pub scale: f64,
    /// Index of the loop with the worst violation, when failing.
    pub offending_loop: Option<usize>,
    pub tol: f64,
}

/// Checks that every sampled element respects the product structure: linear
/// parts must be block diagonal in the split basis and flat factors must
/// carry no translation.
pub fn verify_product_blocks<S: Real>(
    elements: &[AffineIsometry<S>],
    split: &SplittingResult<S>,
    tol: &Tolerances,
) -> ProductBlockReport {
    let scale = elements
        .iter()
        .map(|e| e.b.amax().as_f64())
        .fold(1.0f64, f64::max);
    let mut worst_off = 0.0f64;
    let mut worst_flat = 0.0f64;
    let mut offender: Option<usize> = None;
    let mut worst_ratio = 0.0f64;
    for (idx, e) in elements.iter().enumerate() {
        let mut off = 0.0f64;
        for p in 0..split.factors.len() {
            for q in 0..split.factors.len() {
                if p == q {
                    continue;
                }
                let leak = linalg::max_abs(
                    &(split.factors[q].basis.transpose() * &e.a * &split.factors[p].basis),
                )
                .as_f64();
                off = off.max(leak);
            }
        }
        let mut flat_t = 0.0f64;
        for f in split.factors.iter().filter(|f| f.flat) {
            flat_t = flat_t.max((f.basis.transpose() * &e.b).amax().as_f64());
        }
        worst_off = worst_off.max(off);
        worst_flat = worst_flat.max(flat_t);
        let ratio = (off / tol.tol_split).max(flat_t / (tol.tol_split * scale));
        if ratio > worst_ratio {
            worst_ratio = ratio;
            offender = Some(idx);
        }
    }
    let pass = worst_off < tol.tol_split && worst_flat < tol.tol_split * scale;
    ProductBlockReport {
        pass,
        worst_off_block: worst_off,
        worst_flat_translation: worst_flat,
        scale,
        offending_loop: if pass { None } else { offender },
        tol: tol.tol_split,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GrowthStatus {
    #[serde(rename = "EVIDENCE_NONCOMPACT")]
    EvidenceNoncompact,
    #[serde(rename = "BOUNDED")]
    Bounded,
    #[serde(rename = "NOT_APPLICABLE")]
    NotApplicable,
}

/// Translation growth along a family of concatenated loops.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GrowthReport {
    pub status: GrowthStatus,
    /// `|b|` for the k-fold loop, k = 1..
    pub translation_norms: Vec<f64>,
    /// `max|A - I|` for the k-fold loop.
    pub linear_deviations: Vec<f64>,
    /// Whether the family still admits a common fixed point.
    pub fixed_point_persists: bool,
    pub note: String,
}

/// Probes translation growth along k-fold loops, k = 1..=k_max. Uses the
/// first periodic coordinate when the chart has one (the k-turn winding),
/// otherwise a k-fold concatenated coordinate rectangle.
///
/// `EVIDENCE_NONCOMPACT` needs strictly growing norms that gain at least
/// 50% overall; bounded oscillation reports `BOUNDED`; a family with no
/// translation at all reports `NOT_APPLICABLE`.
pub fn global_noncompactness_evidence<S: Real>(
    chart: &MetricChart<S>,
    base: &DVector<S>,
    k_max: usize,
    frame_order: Option<&[usize]>,
    step: S,
    tol: &Tolerances,
) -> Result<GrowthReport> {
    let note = "growing |b_k| witnesses unbounded translation parts in the sampled family; \
                it is evidence against compactness, not a proof"
        .to_string();
    if k_max == 0 {
        return Err(Error::ConfigInvalid("k_max must be at least 1".into()));
    }
    let m = chart.dim();
    let periodic = chart
        .periods()
        .iter()
        .position(|p| p.is_some())
        .map(|i| (i, chart.periods()[i].unwrap()));
    if periodic.is_none() && m < 2 {
        return Ok(GrowthReport {
            status: GrowthStatus::NotApplicable,
            translation_norms: Vec::new(),
            linear_deviations: Vec::new(),
            fixed_point_persists: true,
            note,
        });
    }

    let mut elements = Vec::with_capacity(k_max);
    let mut norms = Vec::with_capacity(k_max);
    let mut devs = Vec::with_capacity(k_max);
    for k in 1..=k_max {
        let spec = match periodic {
            Some((coord, period)) => {
                LoopSpec::winding(base.clone(), coord, period, k as i64)
            }
            None => {
                let unit = LoopSpec::rectangle(base.clone(), 0, 1, S::of(0.4));
                let mut spec = unit.clone();
                for _ in 1..k {
                    spec = spec.then(&unit)?;
                }
                spec
            }
        };
        let sample = transport::develop_loop(chart, &spec, frame_order, step, tol)?;
        norms.push(sample.element.b.norm().as_f64());
        devs.push(sample.element.deviation_from_identity().as_f64());
        elements.push(sample.element);
    }

    let max_norm = norms.iter().fold(0.0f64, |a, &b| a.max(b));
    let status = if max_norm < 1e-8 {
        GrowthStatus::NotApplicable
    } else {
        let increasing = norms.windows(2).all(|w| w[1] > w[0] * (1.0 + 1e-6));
        if increasing && *norms.last().unwrap() > 1.5 * norms[0] {
            GrowthStatus::EvidenceNoncompact
        } else {
            GrowthStatus::Bounded
        }
    };
    let fp = affine::solve_fixed_point(&elements, tol)?;
    Ok(GrowthReport {
        status,
        translation_norms: norms,
        linear_deviations: devs,
        fixed_point_persists: fp.verdict != FixedPointVerdict::NoFixedPoint,
        note,
    })
}

/// Least-squares slope of `log y` against `log x`. Non-positive pairs are
/// skipped; fewer than two usable points gives NaN.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = xs
        .iter()
        .zip(ys.iter())
        .filter(|(&x, &y)| x > 0.0 && y > 0.0)
        .map(|(&x, &y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return f64::NAN;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    (n * sxy - sx * sy) / (n * sxx - sx * sx)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog;
    use crate::transport::SamplingProtocol;
    use approx::assert_abs_diff_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rot2(angle: f64) -> DMatrix<f64> {
        let (s, c) = angle.sin_cos();
        DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
    }

    fn block_diag(blocks: &[DMatrix<f64>]) -> DMatrix<f64> {
        let m: usize = blocks.iter().map(|b| b.nrows()).sum();
        let mut out = DMatrix::<f64>::zeros(m, m);
        let mut at = 0;
        for b in blocks {
            out.view_mut((at, at), (b.nrows(), b.ncols())).copy_from(b);
            at += b.nrows();
        }
        out
    }

    fn iso(a: DMatrix<f64>, b: &[f64]) -> AffineIsometry<f64> {
        AffineIsometry::new(a, DVector::from_row_slice(b)).unwrap()
    }

    #[test]
    fn split_separates_two_rotation_planes() {
        let tol = Tolerances::default();
        let eye = DMatrix::<f64>::identity(2, 2);
        let elements = vec![
            iso(block_diag(&[rot2(1.0), eye.clone()]), &[0.0; 4]),
            iso(block_diag(&[eye.clone(), rot2(0.5)]), &[0.0; 4]),
        ];
        let split = derham_split(&elements, &tol).unwrap();
        assert_eq!(split.factors.len(), 2);
        assert!(split.factors.iter().all(|f| f.dim() == 2 && !f.flat));
        // The smaller-rotation plane has the smaller spectrum and sorts by
        // basis; both bases must be axis-aligned.
        for f in &split.factors {
            let b = &f.basis;
            let mass_first: f64 = (0..2).map(|j| b[(0, j)].abs() + b[(1, j)].abs()).sum();
            assert!(mass_first < 1e-10 || mass_first > 2.0 - 1e-10);
        }
    }

    #[test]
    fn split_reports_flat_directions_first() {
        let tol = Tolerances::default();
        let elements = vec![
            iso(block_diag(&[rot2(0.8), DMatrix::identity(1, 1)]), &[0.1, 0.2, 1e-12]),
            iso(block_diag(&[rot2(-0.3), DMatrix::identity(1, 1)]), &[-0.2, 0.05, -2e-12]),
        ];
        let split = derham_split(&elements, &tol).unwrap();
        assert_eq!(split.factors.len(), 2);
        assert!(split.factors[0].flat);
        assert_eq!(split.factors[0].dim(), 1);
        assert_abs_diff_eq!(split.factors[0].basis[(2, 0)].abs(), 1.0, epsilon = 1e-10);
        assert_eq!(split.factors[1].dim(), 2);
    }

    #[test]
    fn split_is_covariant_under_conjugation() {
        let tol = Tolerances::default();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = affine::random_rotation::<f64>(3, &mut rng);
        let raw = [
            iso(block_diag(&[rot2(0.8), DMatrix::identity(1, 1)]), &[0.0; 3]),
            iso(block_diag(&[rot2(-0.3), DMatrix::identity(1, 1)]), &[0.0; 3]),
        ];
        let conj: Vec<_> = raw
            .iter()
            .map(|e| iso(&q * &e.a * q.transpose(), &[0.0; 3]))
            .collect();
        let split = derham_split(&conj, &tol).unwrap();
        assert!(split.factors[0].flat);
        // The flat direction must be Q·e3 up to sign.
        let e3 = q.column(2);
        let overlap = (split.factors[0].basis.column(0).dot(&e3)).abs();
        assert_abs_diff_eq!(overlap, 1.0, epsilon = 1e-10);
    }

    #[test]
    fn split_merges_planes_coupled_by_the_sample() {
        let tol = Tolerances::default();
        // Distinct rotation angles would split, but a swap of the two
        // planes forces them into one factor.
        let mut swap = DMatrix::<f64>::zeros(4, 4);
        swap[(0, 2)] = 1.0;
        swap[(1, 3)] = 1.0;
        swap[(2, 0)] = 1.0;
        swap[(3, 1)] = 1.0;
        let elements = vec![
            iso(block_diag(&[rot2(1.0), rot2(0.5)]), &[0.0; 4]),
            iso(swap, &[0.0; 4]),
        ];
        let split = derham_split(&elements, &tol).unwrap();
        assert_eq!(split.factors.len(), 1);
        assert_eq!(split.factors[0].dim(), 4);
    }

    #[test]
    fn split_rejects_borderline_coupling() {
        let tol = Tolerances::default();
        let mut a = block_diag(&[rot2(1.0), rot2(0.5)]);
        a[(0, 2)] = 5e-7;
        let elements = vec![AffineIsometry {
            a,
            b: DVector::zeros(4),
        }];
        let out = derham_split(&elements, &tol);
        assert!(matches!(out, Err(Error::ToleranceAmbiguity { .. })), "{out:?}");
    }

    #[test]
    fn split_of_trivial_sample_is_one_flat_factor() {
        let tol = Tolerances::default();
        let elements = vec![
            iso(DMatrix::identity(3, 3), &[1e-12, 0.0, -1e-13]),
            iso(DMatrix::identity(3, 3), &[0.0, 2e-12, 0.0]),
        ];
        let split = derham_split(&elements, &tol).unwrap();
        assert_eq!(split.factors.len(), 1);
        assert!(split.factors[0].flat);
        assert_eq!(split.factors[0].dim(), 3);
    }

    #[test]
    fn empty_sample_is_rejected() {
        let tol = Tolerances::default();
        let empty: Vec<AffineIsometry<f64>> = Vec::new();
        assert!(matches!(derham_split(&empty, &tol), Err(Error::EmptySample)));
    }

    fn sample_from(elements: Vec<AffineIsometry<f64>>, arc: f64) -> Vec<HolonomySample<f64>> {
        elements
            .into_iter()
            .map(|e| {
                let m = e.dim();
                HolonomySample {
                    element: e,
                    development: DVector::zeros(m),
                    arc_length: arc,
                    endpoint_gap: 0.0,
                    speed_drift: 0.0,
                    orthogonality_defect: 0.0,
                    label: "synthetic".into(),
                    kind: crate::transport::LoopKind::Custom,
                    base: DVector::zeros(m),
                }
            })
            .collect()
    }

    #[test]
    fn classify_recovers_common_fixed_point() {
        let tol = Tolerances::default();
        let p = DVector::from_row_slice(&[0.7, -0.2]);
        let eye = DMatrix::<f64>::identity(2, 2);
        let elements: Vec<_> = [0.9f64, -0.4, 2.2]
            .iter()
            .map(|&ang| {
                let a = rot2(ang);
                let b = (&eye - &a) * &p;
                AffineIsometry { a, b }
            })
            .collect();
        let report = classify(&sample_from(elements, 1.0), &tol).unwrap();
        assert_eq!(report.overall, OverallVerdict::Compact);
        assert_eq!(report.factors.len(), 1);
        let f = &report.factors[0];
        assert_eq!(f.verdict, FactorVerdict::CompactFixedPoint);
        assert_eq!(f.translation_rank, 0);
        let fp = f.fixed_point.as_ref().unwrap();
        assert_abs_diff_eq!(fp[0], 0.7, epsilon = 1e-10);
        assert_abs_diff_eq!(fp[1], -0.2, epsilon = 1e-10);
        assert!(!f.inconsistent);
    }

    #[test]
    fn classify_flags_translations_that_do_not_span() {
        let tol = Tolerances::default();
        let eye = DMatrix::<f64>::identity(2, 2);
        let elements = vec![
            iso(eye.clone(), &[1.0, 0.0]),
            iso(eye.clone(), &[2.0, 0.0]),
            iso(rot2(0.5), &[0.0, 0.0]),
        ];
        let report = classify(&sample_from(elements, 1.0), &tol).unwrap();
        assert_eq!(report.overall, OverallVerdict::FullSemidirect);
        let f = &report.factors[0];
        assert_eq!(f.verdict, FactorVerdict::FullSemidirect);
        assert_eq!(f.translation_rank, 1);
        assert!(f.inconsistent);
    }

    #[test]
    fn classify_trivial_sample() {
        let tol = Tolerances::default();
        let elements = vec![
            iso(DMatrix::identity(2, 2), &[1e-12, 0.0]),
            iso(DMatrix::identity(2, 2), &[0.0, -3e-13]),
        ];
        let report = classify(&sample_from(elements, 1.0), &tol).unwrap();
        assert_eq!(report.overall, OverallVerdict::Trivial);
        assert_eq!(report.factors.len(), 1);
        assert_eq!(report.factors[0].verdict, FactorVerdict::Trivial);
    }

    #[test]
    fn classify_gates_on_orthogonality() {
        let tol = Tolerances::default();
        let mut a = DMatrix::<f64>::identity(2, 2);
        a[(0, 0)] = 1.01;
        let elements = vec![AffineIsometry {
            a,
            b: DVector::zeros(2),
        }];
        let out = classify(&sample_from(elements, 1.0), &tol);
        assert!(matches!(out, Err(Error::NonOrthogonalLinearPart { .. })));
    }

    #[test]
    fn product_blocks_pass_on_block_sample_and_fail_on_coupling() {
        let tol = Tolerances::default();
        let eye = DMatrix::<f64>::identity(2, 2);
        let elements = vec![
            iso(block_diag(&[rot2(1.0), eye.clone()]), &[0.3, 0.1, 0.0, 0.0]),
            iso(block_diag(&[eye.clone(), rot2(0.5)]), &[0.0, 0.0, 0.2, -0.1]),
        ];
        let split = derham_split(&elements, &tol).unwrap();
        let ok = verify_product_blocks(&elements, &split, &tol);
        assert!(ok.pass, "{ok:?}");

        // A genuinely coupled extra element breaks the audit against the
        // same splitting.
        let mut bad_a = block_diag(&[rot2(1.0), eye.clone()]);
        bad_a[(0, 2)] = 1e-3;
        let mut with_bad = elements.clone();
        with_bad.push(AffineIsometry {
            a: bad_a,
            b: DVector::zeros(4),
        });
        let bad = verify_product_blocks(&with_bad, &split, &tol);
        assert!(!bad.pass);
        assert_eq!(bad.offending_loop, Some(2));
        assert!(bad.worst_off_block >= 1e-3 - 1e-12);
    }

    #[test]
    fn growth_on_sphere_windings_is_noncompact_evidence() {
        let tol = Tolerances::default();
        let chart = catalog::sphere_chart::<f64>(1.0);
        let base = DVector::from_row_slice(&[std::f64::consts::FRAC_PI_2, 0.0]);
        let report =
            global_noncompactness_evidence(&chart, &base, 5, None, 1e-3, &tol).unwrap();
        assert_eq!(report.status, GrowthStatus::EvidenceNoncompact);
        assert!(!report.fixed_point_persists);
        for (k, norm) in report.translation_norms.iter().enumerate() {
            let expect = 2.0 * std::f64::consts::PI * (k as f64 + 1.0);
            assert_abs_diff_eq!(*norm, expect, epsilon = 1e-3);
        }
    }

    #[test]
    fn growth_on_flat_cone_windings_stays_bounded() {
        let tol = Tolerances::default();
        let chart = catalog::cone_circle_chart::<f64>(0.5, 0.05, 10.0).unwrap();
        let base = DVector::from_row_slice(&[1.0, 0.0]);
        let report =
            global_noncompactness_evidence(&chart, &base, 4, None, 1e-3, &tol).unwrap();
        assert_eq!(report.status, GrowthStatus::Bounded);
        assert!(report.fixed_point_persists);
        let max = report
            .translation_norms
            .iter()
            .fold(0.0f64, |a, &b| a.max(b));
        assert!(max <= 2.0 + 1e-6, "{:?}", report.translation_norms);
    }

    #[test]
    fn growth_on_flat_space_is_not_applicable() {
        let tol = Tolerances::default();
        let chart = catalog::flat_chart::<f64>(2);
        let base = DVector::from_row_slice(&[0.5, -0.3]);
        let report =
            global_noncompactness_evidence(&chart, &base, 3, None, 1e-3, &tol).unwrap();
        assert_eq!(report.status, GrowthStatus::NotApplicable);
    }

    #[test]
    fn loglog_slope_recovers_power() {
        let xs: [f64; 4] = [0.4, 0.2, 0.1, 0.05];
        let ys: Vec<f64> = xs.iter().map(|x| 3.0 * x.powi(3)).collect();
        assert_abs_diff_eq!(loglog_slope(&xs, &ys), 3.0, epsilon = 1e-12);
    }

    #[test]
    fn classify_catalog_sphere_end_to_end() {
        let tol = Tolerances::default();
        let chart = catalog::sphere_chart::<f64>(1.0);
        let base = DVector::from_row_slice(&[std::f64::consts::FRAC_PI_2, 0.0]);
        let mut protocol = SamplingProtocol::with_seed(12);
        protocol.n_polygons = 6;
        let samples = transport::sample_holonomy(&chart, &base, &protocol, 1e-3, &tol).unwrap();
        let report = classify(&samples, &tol).unwrap();
        assert_eq!(report.overall, OverallVerdict::FullSemidirect);
        assert_eq!(report.factors.len(), 1);
        let f = &report.factors[0];
        assert_eq!(f.verdict, FactorVerdict::FullSemidirect);
        assert_eq!(f.translation_rank, 2);
        assert!(!f.inconsistent, "{f:?}");
    }
}
