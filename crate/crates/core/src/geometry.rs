// Copyright 2026 The dpaudit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

//! Scenario sample sizes and minimum-volume enclosing ellipsoids.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{check_open_unit, Error, Result};

/// Default solver tolerance for [`mvee`].
pub const DEFAULT_MVEE_TOLERANCE: f64 = 1e-7;

/// Ridge added to the weighted covariance of rank-deficient clouds.
pub const DEFAULT_REGULARIZATION: f64 = 1e-9;

/// The ellipsoid `{x : |A x - b|_2 <= 1}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "EllipsoidRepr", into = "EllipsoidRepr")]
pub struct Ellipsoid {
    shape: DMatrix<f64>,
    center_image: DVector<f64>,
}

#[derive(Serialize, Deserialize)]
struct EllipsoidRepr {
    dim: usize,
    /// Row-major.
    shape: Vec<f64>,
    center_image: Vec<f64>,
}

impl From<Ellipsoid> for EllipsoidRepr {
    fn from(e: Ellipsoid) -> Self {
        let dim = e.dim();
        let mut shape = Vec::with_capacity(dim * dim);
        for i in 0..dim {
            for j in 0..dim {
                shape.push(e.shape[(i, j)]);
            }
        }
        Self {
            dim,
            shape,
            center_image: e.center_image.iter().copied().collect(),
        }
    }
}

impl TryFrom<EllipsoidRepr> for Ellipsoid {
    type Error = Error;

    fn try_from(r: EllipsoidRepr) -> Result<Self> {
        if r.shape.len() != r.dim * r.dim {
            return Err(Error::DimensionMismatch {
                expected: r.dim * r.dim,
                got: r.shape.len(),
            });
        }
        Ellipsoid::new(
            DMatrix::from_row_slice(r.dim, r.dim, &r.shape),
            DVector::from_vec(r.center_image),
        )
    }
}

impl Ellipsoid {
    pub fn new(shape: DMatrix<f64>, center_image: DVector<f64>) -> Result<Self> {
        let dim = center_image.len();
        if dim == 0 {
            return Err(Error::DimensionMismatch {
                expected: 1,
                got: 0,
            });
        }
        if shape.nrows() != dim || shape.ncols() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: shape.nrows().max(shape.ncols()),
            });
        }
        let det = shape.determinant();
        if !(det > 0.0) || !det.is_finite() {
            return Err(Error::Degenerate(format!(
                "ellipsoid shape matrix must have positive determinant, got {det}"
            )));
        }
        Ok(Self {
            shape,
            center_image,
        })
    }

    /// Ellipsoid with the given center and quadratic form `P`, i.e. the set
    /// `(x - c)^T P (x - c) <= 1`. `P` must be symmetric positive definite.
    pub fn from_center_and_form(center: &DVector<f64>, form: &DMatrix<f64>) -> Result<Self> {
        let shape = sym_sqrt(form)?;
        let center_image = &shape * center;
        Self::new(shape, center_image)
    }

    pub fn unit_ball(dim: usize) -> Self {
        Self {
            shape: DMatrix::identity(dim, dim),
            center_image: DVector::zeros(dim),
        }
    }

    pub fn dim(&self) -> usize {
        self.center_image.len()
    }

    pub fn shape(&self) -> &DMatrix<f64> {
        &self.shape
    }

    pub fn center_image(&self) -> &DVector<f64> {
        &self.center_image
    }

    pub fn center(&self) -> DVector<f64> {
        self.shape
            .clone()
            .lu()
            .solve(&self.center_image)
            .expect("shape is invertible")
    }

    /// `|A x - b|_2`; at most one inside the ellipsoid.
    pub fn level(&self, x: &DVector<f64>) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: x.len(),
            });
        }
        Ok((&self.shape * x - &self.center_image).norm())
    }

    pub fn contains(&self, x: &DVector<f64>, slack: f64) -> Result<bool> {
        Ok(self.level(x)? <= 1.0 + slack)
    }

    pub fn log_det_shape(&self) -> f64 {
        self.shape.determinant().ln()
    }

    /// Axis-aligned bounding box `(lower, upper)`.
    pub fn bounding_box(&self) -> (DVector<f64>, DVector<f64>) {
        let inv = self
            .shape
            .clone()
            .try_inverse()
            .expect("shape is invertible");
        let center = &inv * &self.center_image;
        let half: DVector<f64> =
            DVector::from_iterator(self.dim(), inv.row_iter().map(|row| row.norm()));
        (&center - &half, &center + &half)
    }

    /// The same ellipsoid translated by `t`.
    pub fn translated(&self, t: &DVector<f64>) -> Self {
        Self {
            shape: self.shape.clone(),
            center_image: &self.center_image + &self.shape * t,
        }
    }
}

/// Membership test `|A x - b|_2 <= 1 + slack`.
pub fn ellipsoid_contains(e: &Ellipsoid, x: &DVector<f64>, slack: f64) -> Result<bool> {
    e.contains(x, slack)
}

/// Number of scenarios needed so that the fitted ellipsoid holds at least
/// `1 - beta` of the output mass with confidence `1 - gamma`:
///
/// `ceil( (1/beta) * e/(e-1) * (ln(1/gamma) + d(d+1)/2 + d) )`
pub fn required_sample_count(beta: f64, gamma: f64, dim: usize) -> Result<usize> {
    check_open_unit("beta", beta)?;
    check_open_unit("gamma", gamma)?;
    if dim == 0 {
        return Err(Error::Domain {
            name: "dim",
            value: 0.0,
            expected: "a positive integer",
        });
    }
    let e = std::f64::consts::E;
    let d = dim as f64;
    let count = (1.0 / beta) * (e / (e - 1.0)) * ((1.0 / gamma).ln() + d * (d + 1.0) / 2.0 + d);
    Ok(count.ceil() as usize)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MveeOptions {
    pub tolerance: f64,
    /// Defaults to `100 * d * N` when unset.
    pub max_iterations: Option<usize>,
    /// Ridge for rank-deficient clouds; `None` turns degeneracy into an error.
    pub regularization: Option<f64>,
}

impl Default for MveeOptions {
    fn default() -> Self {
        Self {
            tolerance: DEFAULT_MVEE_TOLERANCE,
            max_iterations: None,
            regularization: Some(DEFAULT_REGULARIZATION),
        }
    }
}

impl MveeOptions {
    pub fn with_tolerance(tolerance: f64) -> Self {
        Self {
            tolerance,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone)]
pub struct MveeFit {
    pub ellipsoid: Ellipsoid,
    /// Set when the cloud was rank-deficient and a ridge was applied.
    pub regularized: bool,
    pub converged: bool,
    pub iterations: usize,
}

/// Minimum-volume enclosing ellipsoid with default options and the given
/// tolerance. See [`mvee_with`].
pub fn mvee(points: &[DVector<f64>], tolerance: f64) -> Result<Ellipsoid> {
    Ok(mvee_with(points, &MveeOptions::with_tolerance(tolerance))?.ellipsoid)
}

/// Khachiyan's barycentric coordinate ascent on the dual weights, with
/// Todd-Yildirim away steps.
///
/// The returned ellipsoid always contains every input point: the weighted
/// covariance from the final iterate is rescaled by the largest Mahalanobis
/// radius among the points. Convergence is declared when both the largest and
/// smallest lifted leverages are within `tolerance` of `d + 1` (relative),
/// which bounds the log-determinant gap to the optimum.
pub fn mvee_with(points: &[DVector<f64>], opts: &MveeOptions) -> Result<MveeFit> {
    let n = points.len();
    if n == 0 {
        return Err(Error::Degenerate("no points".into()));
    }
    if !(opts.tolerance > 0.0) {
        return Err(Error::Domain {
            name: "tolerance",
            value: opts.tolerance,
            expected: "a positive value",
        });
    }
    let d = points[0].len();
    if d == 0 {
        return Err(Error::DimensionMismatch {
            expected: 1,
            got: 0,
        });
    }
    if let Some(p) = points.iter().find(|p| p.len() != d) {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: p.len(),
        });
    }

    // Work in centered coordinates.
    let mean = points.iter().fold(DVector::zeros(d), |acc, p| acc + p) / n as f64;
    let centered: Vec<DVector<f64>> = points.iter().map(|p| p - &mean).collect();

    let degenerate = n < d + 1 || is_rank_deficient(&centered);
    let ridge = match (degenerate, opts.regularization) {
        (false, _) => 0.0,
        (true, Some(r)) if r > 0.0 => r,
        (true, _) => {
            return Err(Error::Degenerate(format!(
                "{n} points in dimension {d} span a lower-dimensional affine subspace"
            )))
        }
    };

    let lifted: Vec<DVector<f64>> = centered
        .iter()
        .map(|p| DVector::from_iterator(d + 1, p.iter().copied().chain(std::iter::once(1.0))))
        .collect();

    let max_iterations = opts.max_iterations.unwrap_or(100 * d * n);
    let target = (d + 1) as f64;
    let mut weights = vec![1.0 / n as f64; n];
    let mut leverage = vec![0.0; n];
    let mut iterations = 0;
    let mut converged = false;

    while iterations < max_iterations {
        let mut x = DMatrix::<f64>::zeros(d + 1, d + 1);
        for (q, &w) in lifted.iter().zip(&weights) {
            if w > 0.0 {
                x.ger(w, q, q, 1.0);
            }
        }
        for i in 0..d {
            x[(i, i)] += ridge;
        }
        let Some(chol) = x.cholesky() else {
            break;
        };
        for (m, q) in leverage.iter_mut().zip(&lifted) {
            let y = chol
                .l()
                .solve_lower_triangular(q)
                .expect("nonsingular factor");
            *m = y.norm_squared();
        }

        let (up, m_up) = argmax(&leverage);
        let (down, m_down) = leverage
            .iter()
            .zip(&weights)
            .enumerate()
            .filter(|(_, (_, &w))| w > 0.0)
            .map(|(i, (&m, _))| (i, m))
            .fold((usize::MAX, f64::INFINITY), |best, cur| {
                if cur.1 < best.1 {
                    cur
                } else {
                    best
                }
            });

        let gap_up = m_up / target - 1.0;
        let gap_down = 1.0 - m_down / target;
        if gap_up <= opts.tolerance && gap_down <= opts.tolerance {
            converged = true;
            break;
        }
        iterations += 1;

        if gap_up >= gap_down {
            if m_up <= 1.0 + f64::EPSILON {
                break;
            }
            let step = (m_up - target) / (target * (m_up - 1.0));
            for w in weights.iter_mut() {
                *w *= 1.0 - step;
            }
            weights[up] += step;
        } else {
            let w_down = weights[down];
            if m_down <= 1.0 + f64::EPSILON || w_down >= 1.0 {
                break;
            }
            let cap = w_down / (1.0 - w_down);
            let step = ((target - m_down) / (target * (m_down - 1.0))).min(cap);
            for w in weights.iter_mut() {
                *w *= 1.0 + step;
            }
            weights[down] -= step;
            if step >= cap {
                weights[down] = 0.0;
            }
        }
    }

    let center = centered
        .iter()
        .zip(&weights)
        .fold(DVector::zeros(d), |acc, (p, &w)| acc + p * w);
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for (p, &w) in centered.iter().zip(&weights) {
        if w > 0.0 {
            cov.ger(w, p, p, 1.0);
        }
    }
    cov.ger(-1.0, &center, &center, 1.0);
    for i in 0..d {
        cov[(i, i)] += ridge;
    }
    let cov = symmetrize(&cov);
    let chol = cov
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Degenerate("weighted covariance is not positive definite".into()))?;
    let radius = centered
        .iter()
        .map(|p| {
            let y = chol
                .l()
                .solve_lower_triangular(&(p - &center))
                .expect("nonsingular factor");
            y.norm_squared()
        })
        .fold(0.0, f64::max);
    let scale = if degenerate {
        radius.max(d as f64)
    } else {
        radius
    };
    if !(scale > 0.0) {
        return Err(Error::Degenerate("zero-radius point cloud".into()));
    }
    let form = symmetrize(&(chol.inverse() / scale));
    let ellipsoid = Ellipsoid::from_center_and_form(&(center + &mean), &form)?;

    Ok(MveeFit {
        ellipsoid,
        regularized: degenerate,
        converged,
        iterations,
    })
}

fn argmax(values: &[f64]) -> (usize, f64) {
    values
        .iter()
        .copied()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, cur| {
            if cur.1 > best.1 {
                cur
            } else {
                best
            }
        })
}

fn is_rank_deficient(centered: &[DVector<f64>]) -> bool {
    let d = centered[0].len();
    let mut cov = DMatrix::<f64>::zeros(d, d);
    for p in centered {
        cov.ger(1.0, p, p, 1.0);
    }
    let eig = cov.symmetric_eigen();
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    max <= 0.0 || min <= 1e-12 * max
}

pub(crate) fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Symmetric square root of a symmetric positive definite matrix.
pub(crate) fn sym_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let eig = symmetrize(m).symmetric_eigen();
    if eig.eigenvalues.iter().any(|&l| !(l > 0.0)) {
        return Err(Error::Degenerate(
            "quadratic form is not positive definite".into(),
        ));
    }
    let root = DMatrix::from_diagonal(&eig.eigenvalues.map(f64::sqrt));
    Ok(symmetrize(
        &(&eig.eigenvectors * root * eig.eigenvectors.transpose()),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(xs: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(xs)
    }

    #[test]
    fn sample_count_matches_high_precision_grid() {
        // ceilings evaluated with 50-digit arithmetic
        let grid = [
            (0.05, 1e-9, 2, 814),
            (0.5, 0.5, 1, 9),
            (0.1, 0.01, 4, 295),
            (0.01, 1e-6, 2, 2977),
            (0.2, 0.05, 3, 95),
            (0.05, 1e-9, 10, 2713),
        ];
        for (b, g, d, want) in grid {
            assert_eq!(required_sample_count(b, g, d).unwrap(), want, "{b} {g} {d}");
        }
        assert!(
            required_sample_count(0.01, 1e-9, 2).unwrap()
                > required_sample_count(0.05, 1e-9, 2).unwrap()
        );
        assert!(required_sample_count(0.0, 0.5, 1).is_err());
        assert!(required_sample_count(0.5, 1.0, 1).is_err());
        assert!(required_sample_count(0.5, 0.5, 0).is_err());
    }

    #[test]
    fn containment_examples() {
        let e = Ellipsoid::unit_ball(2);
        assert!(ellipsoid_contains(&e, &v(&[0.0, 0.0]), 0.0).unwrap());
        assert!(!ellipsoid_contains(&e, &v(&[1.5, 0.0]), 0.0).unwrap());
        assert!(ellipsoid_contains(&e, &v(&[1.0005, 0.0]), 1e-3).unwrap());
        assert!(ellipsoid_contains(&e, &v(&[1.0]), 0.0).is_err());
    }

    #[test]
    fn four_points_give_unit_circle() {
        let pts = [
            v(&[1.0, 0.0]),
            v(&[-1.0, 0.0]),
            v(&[0.0, 1.0]),
            v(&[0.0, -1.0]),
        ];
        let e = mvee(&pts, 1e-9).unwrap();
        assert!((e.shape() - DMatrix::identity(2, 2)).amax() < 1e-6);
        assert!(e.center_image().amax() < 1e-6);
    }

    #[test]
    fn one_dimensional_interval() {
        let pts = [v(&[2.0]), v(&[5.0]), v(&[3.0])];
        let e = mvee(&pts, 1e-9).unwrap();
        assert!((e.shape()[(0, 0)] - 2.0 / 3.0).abs() < 1e-9);
        assert!((e.center_image()[0] - 7.0 / 3.0).abs() < 1e-9);
    }

    #[test]
    fn cloud_is_contained_and_tight() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let pts: Vec<_> = (0..50)
            .map(|_| v(&[rng.gen_range(-3.0..2.0), rng.gen_range(0.0..0.5)]))
            .collect();
        let tol = 1e-7;
        let fit = mvee_with(&pts, &MveeOptions::with_tolerance(tol)).unwrap();
        assert!(fit.converged && !fit.regularized);
        let e = &fit.ellipsoid;
        assert!(pts.iter().all(|p| e.contains(p, tol).unwrap()));
        let shrunk = Ellipsoid::new(e.shape() * 1.01, e.center_image() * 1.01).unwrap();
        assert!(pts.iter().any(|p| !shrunk.contains(p, 0.0).unwrap()));
    }

    #[test]
    fn near_optimal_volume_in_the_plane() {
        // the MVEE of a square is its circumscribed circle
        let pts = [
            v(&[1.0, 1.0]),
            v(&[-1.0, 1.0]),
            v(&[1.0, -1.0]),
            v(&[-1.0, -1.0]),
            v(&[0.2, 0.3]),
        ];
        let e = mvee(&pts, 1e-9).unwrap();
        let want = DMatrix::identity(2, 2) / 2f64.sqrt();
        assert!((e.shape() - want).amax() < 1e-5);
    }

    #[test]
    fn degenerate_cloud_is_regularized_or_rejected() {
        let pts: Vec<_> = (0..10).map(|i| v(&[i as f64, 2.0 * i as f64])).collect();
        let fit = mvee_with(&pts, &MveeOptions::default()).unwrap();
        assert!(fit.regularized);
        assert!(pts.iter().all(|p| fit.ellipsoid.contains(p, 1e-7).unwrap()));
        let strict = MveeOptions {
            regularization: None,
            ..MveeOptions::default()
        };
        assert!(matches!(
            mvee_with(&pts, &strict),
            Err(Error::Degenerate(_))
        ));
        assert!(mvee(&[], 1e-7).is_err());
    }

    #[test]
    fn bounding_box_and_translation() {
        let form = DMatrix::from_row_slice(2, 2, &[0.25, 0.0, 0.0, 1.0]);
        let e = Ellipsoid::from_center_and_form(&v(&[1.0, -1.0]), &form).unwrap();
        let (lo, hi) = e.bounding_box();
        assert!((lo - v(&[-1.0, -2.0])).amax() < 1e-12);
        assert!((hi - v(&[3.0, 0.0])).amax() < 1e-12);
        let t = e.translated(&v(&[2.0, 2.0]));
        assert!((t.center() - v(&[3.0, 1.0])).amax() < 1e-12);
    }

    #[test]
    fn serde_round_trip() {
        let e = Ellipsoid::from_center_and_form(
            &v(&[0.5, 1.0]),
            &DMatrix::from_row_slice(2, 2, &[2.0, 0.3, 0.3, 1.0]),
        )
        .unwrap();
        let json = serde_json::to_value(&e).unwrap();
        assert_eq!(json["dim"], 2);
        assert_eq!(json["shape"].as_array().unwrap().len(), 4);
        let back: Ellipsoid = serde_json::from_value(json).unwrap();
        assert!((back.shape() - e.shape()).amax() < 1e-15);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn one_dimensional_fit_is_covering_interval(xs in prop::collection::vec(-100.0f64..100.0, 2..30)) {
            let lo = xs.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            prop_assume!(hi - lo > 1e-3);
            let pts: Vec<_> = xs.iter().map(|&x| v(&[x])).collect();
            let e = mvee(&pts, 1e-10).unwrap();
            let (blo, bhi) = e.bounding_box();
            prop_assert!((blo[0] - lo).abs() < 1e-9 * (1.0 + lo.abs()));
            prop_assert!((bhi[0] - hi).abs() < 1e-9 * (1.0 + hi.abs()));
        }

        #[test]
        fn translation_moves_center_only(
            seed in any::<u64>(),
            tx in -50.0f64..50.0,
            ty in -50.0f64..50.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let pts: Vec<_> = (0..20)
                .map(|_| v(&[rng.gen_range(-1.0..1.0), rng.gen_range(-2.0..2.0)]))
                .collect();
            let t = v(&[tx, ty]);
            let moved: Vec<_> = pts.iter().map(|p| p + &t).collect();
            let tol = 1e-8;
            let a = mvee(&pts, tol).unwrap();
            let b = mvee(&moved, tol).unwrap();
            prop_assert!((b.center() - a.center() - &t).amax() < 1e-5);
            prop_assert!((b.shape() - a.shape()).amax() < 1e-5 * a.shape().amax());
            prop_assert!(moved.iter().all(|p| b.contains(p, tol).unwrap()));
        }
    }
}
