//! Frank-Wolfe for `min ½ zᵀQz + cᵀz` over the probability simplex.
//!
//! Every step moves toward the vertex with the smallest gradient entry (or,
//! with away steps enabled, away from the support vertex with the largest
//! one) with an exact line search, so iterates remain convex combinations of
//! simplex points. `Qz` and `zᵀQz` are carried along incrementally, making each
//! iteration `O(m)` once the starting point has been multiplied through.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Iteration limits and tolerances.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FwParams<T> {
    pub max_iter: usize,
    /// Stop once the Frank-Wolfe gap `-gᵀd` drops to this value.
    pub gap_tol: T,
    /// Curvature `dᵀQd` at or below this takes a full step.
    pub curvature_tol: T,
    pub variant: FwVariant,
}

/// Which steps the solver may take. All variants keep iterates on the simplex.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FwVariant {
    /// Toward steps only.
    Classic,
    /// Toward steps or away steps off the worst vertex in the support.
    Away,
    /// Move weight from the worst support vertex straight to the best vertex.
    Pairwise,
    /// Pairwise steps, each followed by an exact minimization over the
    /// affine hull of the support (truncated at the simplex boundary).
    /// Identifies the optimal face in few iterations.
    #[default]
    Corrective,
}

impl std::str::FromStr for FwVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classic" => Ok(FwVariant::Classic),
            "away" => Ok(FwVariant::Away),
            "pairwise" => Ok(FwVariant::Pairwise),
            "corrective" => Ok(FwVariant::Corrective),
            _ => Err(Error::Unknown {
                kind: "Frank-Wolfe variant",
                name: s.to_string(),
            }),
        }
    }
}

/// Outcome of one solve.
#[derive(Debug, Clone, PartialEq)]
pub struct FwSolution<T> {
    pub z: Vec<T>,
    /// `gᵀd` at the last evaluated iterate; `>= -gap_tol` when converged.
    pub delta: T,
    pub iterations: usize,
    pub converged: bool,
}

/// Solves from `z0`, which must lie in the simplex.
pub fn frank_wolfe<T: Scalar>(
    q: ArrayView2<'_, T>,
    c: &[T],
    z0: &[T],
    params: &FwParams<T>,
) -> FwSolution<T> {
    let mut z = z0.to_vec();
    let mut scratch = FwScratch::new(z.len());
    let stats = scratch.solve(q, c, &mut z, params);
    FwSolution {
        z,
        delta: stats.delta,
        iterations: stats.iterations,
        converged: stats.converged,
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct FwStats<T> {
    pub delta: T,
    pub iterations: usize,
    pub converged: bool,
    /// `zᵀQz` at the returned point.
    pub quad: T,
}

/// Reusable buffers so the per-column solves in the ADMM loop do not allocate.
pub(crate) struct FwScratch<T> {
    qz: Vec<T>,
    support: Vec<usize>,
    /// Lower Cholesky factor of `Q` restricted to the support, row-major.
    chol: Vec<T>,
    ones: Vec<T>,
    rhs: Vec<T>,
    low_rank: Option<LowRank<T>>,
    /// Whether `chol` holds the Woodbury capacitance factor.
    woodbury: bool,
}

/// `Q = scale·HᵀH + ridge·I` with `H` stored as `m` rows of length `d`.
struct LowRank<T> {
    h: Vec<T>,
    d: usize,
    scale: T,
    ridge: T,
    hz: Vec<T>,
}

/// In-place lower Cholesky factor of the row-major `s×s` matrix `a`
/// (upper triangle ignored); false if a pivot falls to `tol` or below.
fn cholesky<T: Scalar>(a: &mut [T], s: usize, tol: T) -> bool {
    for i in 0..s {
        for j in 0..=i {
            let mut v = a[i * s + j];
            for p in 0..j {
                v -= a[i * s + p] * a[j * s + p];
            }
            if i == j {
                if v <= tol {
                    return false;
                }
                a[i * s + i] = v.sqrt();
            } else {
                a[i * s + j] = v / a[j * s + j];
            }
        }
    }
    true
}

/// Solves `L Lᵀ x = b` in place for the factor from [`cholesky`].
fn tri_solve<T: Scalar>(l: &[T], s: usize, b: &mut [T]) {
    for a in 0..s {
        let mut v = b[a];
        for p in 0..a {
            v -= l[a * s + p] * b[p];
        }
        b[a] = v / l[a * s + a];
    }
    for a in (0..s).rev() {
        let mut v = b[a];
        for p in a + 1..s {
            v -= l[p * s + a] * b[p];
        }
        b[a] = v / l[a * s + a];
    }
}

/// Recompute `Qz` from scratch this often to cancel accumulated rounding.
const REFRESH_EVERY: usize = 64;

impl<T: Scalar> FwScratch<T> {
    pub fn new(m: usize) -> Self {
        FwScratch {
            qz: vec![T::zero(); m],
            support: Vec::with_capacity(m),
            chol: Vec::with_capacity(m * m),
            ones: Vec::with_capacity(m),
            rhs: Vec::with_capacity(m),
            low_rank: None,
            woodbury: false,
        }
    }

    /// Declares `Q = scale·HᵀH + ridge·I`, with `h` the `m` rows of `H`
    /// laid out contiguously. `Qz` then costs O(md) instead of O(m²); the
    /// dense `Q` passed to the solver must still match.
    pub fn set_low_rank(&mut self, h: &[T], d: usize, scale: T, ridge: T) {
        debug_assert_eq!(h.len(), self.qz.len() * d);
        self.low_rank = Some(LowRank {
            h: h.to_vec(),
            d,
            scale,
            ridge,
            hz: vec![T::zero(); d],
        });
    }

    /// Factors `Q_SS` for the current support; false if it is not
    /// numerically positive definite. With a low-rank `Q` and a support
    /// wider than `d`, only the `d×d` capacitance matrix
    /// `ridge·I + scale·H_S H_Sᵀ` is factored (Woodbury).
    fn factor_support(&mut self, q: ArrayView2<'_, T>, tol: T) -> bool {
        let s = self.support.len();
        self.chol.clear();
        match &self.low_rank {
            Some(lr) if lr.d < s && lr.ridge > tol => {
                let d = lr.d;
                self.chol.resize(d * d, T::zero());
                for &l in &self.support {
                    let h = &lr.h[l * d..(l + 1) * d];
                    for a in 0..d {
                        for b in 0..=a {
                            self.chol[a * d + b] += lr.scale * h[a] * h[b];
                        }
                    }
                }
                for a in 0..d {
                    self.chol[a * d + a] += lr.ridge;
                }
                self.woodbury = true;
                cholesky(&mut self.chol, d, tol)
            }
            _ => {
                self.chol.extend(
                    self.support
                        .iter()
                        .flat_map(|&a| self.support.iter().map(move |&b| q[[a, b]])),
                );
                self.woodbury = false;
                cholesky(&mut self.chol, s, tol)
            }
        }
    }

    /// Solves `Q_SS x = b` in place with the current factor.
    fn chol_solve(&mut self, b: &mut [T]) {
        match &mut self.low_rank {
            Some(lr) if self.woodbury => {
                // x = (b − scale·H_Sᵀ M⁻¹ H_S b) / ridge
                let d = lr.d;
                lr.hz.iter_mut().for_each(|v| *v = T::zero());
                for (&bv, &l) in b.iter().zip(&self.support) {
                    for (acc, &hp) in lr.hz.iter_mut().zip(&lr.h[l * d..(l + 1) * d]) {
                        *acc += bv * hp;
                    }
                }
                tri_solve(&self.chol, d, &mut lr.hz);
                for (bv, &l) in b.iter_mut().zip(&self.support) {
                    let dot: T = lr.h[l * d..(l + 1) * d]
                        .iter()
                        .zip(&lr.hz)
                        .map(|(&a, &w)| a * w)
                        .sum();
                    *bv = (*bv - lr.scale * dot) / lr.ridge;
                }
            }
            _ => tri_solve(&self.chol, b.len(), b),
        }
    }

    /// Moves `z` toward the minimizer of the quadratic over the affine hull
    /// of its support, stopping where a coordinate reaches zero. The
    /// objective cannot increase along that segment.
    fn correct(&mut self, q: ArrayView2<'_, T>, c: &[T], z: &mut [T], tol: T) {
        self.support.clear();
        self.support.extend(
            z.iter()
                .enumerate()
                .filter(|(_, &v)| v > T::zero())
                .map(|(l, _)| l),
        );
        if self.support.len() < 2 || !self.factor_support(q, tol) {
            return;
        }
        // y = μ Q⁻¹1 − Q⁻¹c with μ chosen so that Σ y = 1
        let mut ones = std::mem::take(&mut self.ones);
        let mut rhs = std::mem::take(&mut self.rhs);
        ones.clear();
        ones.resize(self.support.len(), T::one());
        rhs.clear();
        rhs.extend(self.support.iter().map(|&l| c[l]));
        self.chol_solve(&mut ones);
        self.chol_solve(&mut rhs);
        let sum_ones: T = ones.iter().copied().sum();
        if sum_ones > T::zero() {
            let mu = (T::one() + rhs.iter().copied().sum::<T>()) / sum_ones;
            let mut gamma = T::one();
            let mut blocking = None;
            for (a, &l) in self.support.iter().enumerate() {
                let d = mu * ones[a] - rhs[a] - z[l];
                if d < T::zero() && z[l] < -d * gamma {
                    gamma = z[l] / -d;
                    blocking = Some(l);
                }
            }
            for (a, &l) in self.support.iter().enumerate() {
                let d = mu * ones[a] - rhs[a] - z[l];
                // sub-epsilon weights are rounding noise from an exact zero
                let v = z[l] + gamma * d;
                z[l] = if v <= T::epsilon() { T::zero() } else { v };
            }
            if let Some(l) = blocking {
                z[l] = T::zero();
            }
        }
        self.ones = ones;
        self.rhs = rhs;
    }

    /// Rescales `z` onto the simplex, cancelling drift from the
    /// multiplicative updates, and recomputes `Qz`; returns `zᵀQz`.
    fn refresh(&mut self, q: ArrayView2<'_, T>, z: &mut [T]) -> T {
        let total: T = z.iter().copied().sum();
        if total != T::one() && total > T::zero() {
            z.iter_mut().for_each(|v| *v /= total);
        }
        match &mut self.low_rank {
            Some(lr) => {
                lr.hz.iter_mut().for_each(|v| *v = T::zero());
                for (&w, h) in z.iter().zip(lr.h.chunks(lr.d)) {
                    for (acc, &hp) in lr.hz.iter_mut().zip(h) {
                        *acc += w * hp;
                    }
                }
                for ((out, &w), h) in self.qz.iter_mut().zip(z.iter()).zip(lr.h.chunks(lr.d)) {
                    let dot: T = h.iter().zip(&lr.hz).map(|(&a, &b)| a * b).sum();
                    *out = lr.scale * dot + lr.ridge * w;
                }
            }
            None => {
                for (row, out) in q.rows().into_iter().zip(self.qz.iter_mut()) {
                    *out = row.iter().zip(z.iter()).map(|(&a, &b)| a * b).sum();
                }
            }
        }
        z.iter().zip(&self.qz).map(|(&a, &b)| a * b).sum()
    }

    pub fn solve(
        &mut self,
        q: ArrayView2<'_, T>,
        c: &[T],
        z: &mut [T],
        params: &FwParams<T>,
    ) -> FwStats<T> {
        let m = z.len();
        debug_assert_eq!(q.dim(), (m, m));
        debug_assert_eq!(c.len(), m);

        let mut zqz = self.refresh(q, z);

        let mut delta = T::zero();
        let mut converged = false;
        let mut iterations = 0;

        for it in 0..params.max_iter {
            if it > 0 && it % REFRESH_EVERY == 0 {
                zqz = self.refresh(q, z);
            }
            // g = Qz + c, vertex j = argmin g, d = e_j - z
            let mut j = 0;
            let mut g_min = T::infinity();
            let mut a = usize::MAX;
            let mut g_max = T::neg_infinity();
            let mut g_dot_z = T::zero();
            for (l, ((&qz, &cl), &zl)) in self.qz.iter().zip(c).zip(z.iter()).enumerate() {
                let g = qz + cl;
                if g < g_min {
                    g_min = g;
                    j = l;
                }
                if zl > T::zero() && g > g_max {
                    g_max = g;
                    a = l;
                }
                g_dot_z += g * zl;
            }
            delta = g_min - g_dot_z;
            if delta >= -params.gap_tol {
                converged = true;
                break;
            }
            iterations = it + 1;

            let away_gap = g_max - g_dot_z;
            let has_away = a != usize::MAX && a != j;
            let pairwise = matches!(params.variant, FwVariant::Pairwise | FwVariant::Corrective);
            if pairwise && has_away {
                // d = e_j - e_a, feasible up to γ = z_a
                let gamma_max = z[a];
                let (qj, qa) = (q.row(j), q.row(a));
                let curvature = qj[j] + qa[a] - qj[a] - qa[j];
                let slope = g_min - g_max;
                let gamma = if curvature <= params.curvature_tol {
                    gamma_max
                } else {
                    (-slope / curvature).max(T::zero()).min(gamma_max)
                };
                zqz = zqz + (gamma + gamma) * (self.qz[j] - self.qz[a]) + gamma * gamma * curvature;
                for ((qz, &x), &y) in self.qz.iter_mut().zip(qj).zip(qa) {
                    *qz += gamma * (x - y);
                }
                z[j] += gamma;
                z[a] = if gamma == gamma_max {
                    T::zero()
                } else {
                    z[a] - gamma
                };
                if params.variant == FwVariant::Corrective {
                    self.correct(q, c, z, params.curvature_tol);
                    zqz = self.refresh(q, z);
                }
                continue;
            }
            if params.variant == FwVariant::Away && has_away && z[a] < T::one() && away_gap > -delta
            {
                // d = z - e_a, feasible up to γ = z_a / (1 - z_a)
                let gamma_max = z[a] / (T::one() - z[a]);
                let curvature = q[[a, a]] - self.qz[a] - self.qz[a] + zqz;
                let gamma = if curvature <= params.curvature_tol {
                    gamma_max
                } else {
                    (away_gap / curvature).max(T::zero()).min(gamma_max)
                };
                let grow = T::one() + gamma;
                let z_q_d = zqz - self.qz[a];
                zqz = zqz + (gamma + gamma) * z_q_d + gamma * gamma * curvature;
                // Q is symmetric: row a is column a
                for ((zl, qz), &qa) in z.iter_mut().zip(self.qz.iter_mut()).zip(q.row(a)) {
                    *zl = grow * *zl;
                    *qz = grow * *qz - gamma * qa;
                }
                if gamma == gamma_max {
                    z[a] = T::zero();
                } else {
                    z[a] -= gamma;
                }
                continue;
            }

            // dᵀQd = Q_jj - 2 (Qz)_j + zᵀQz
            let curvature = q[[j, j]] - self.qz[j] - self.qz[j] + zqz;
            let gamma = if curvature <= params.curvature_tol {
                T::one()
            } else {
                (-delta / curvature).max(T::zero()).min(T::one())
            };
            let keep = T::one() - gamma;

            // zᵀQd = (Qz)_j - zᵀQz
            let z_q_d = self.qz[j] - zqz;
            zqz = zqz + (gamma + gamma) * z_q_d + gamma * gamma * curvature;
            for ((zl, qz), &qj) in z.iter_mut().zip(self.qz.iter_mut()).zip(q.row(j)) {
                *zl = keep * *zl;
                *qz = keep * *qz + gamma * qj;
            }
            z[j] += gamma;
        }
        if iterations > 0 && !converged {
            log::trace!(
                "frank-wolfe stopped at the iteration limit with gap {}",
                -delta
            );
        }
        let quad = if iterations > 0 {
            self.refresh(q, z)
        } else {
            zqz
        };
        FwStats {
            delta,
            iterations,
            converged,
            quad,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{array, Array2};

    fn params(max_iter: usize) -> FwParams<f64> {
        FwParams {
            max_iter,
            gap_tol: 1e-12,
            curvature_tol: 1e-12,
            variant: FwVariant::Classic,
        }
    }

    #[test]
    fn optimal_vertex_returns_immediately() {
        let q = Array2::<f64>::eye(3);
        let c = [-5.0, 0.0, 0.0];
        let sol = frank_wolfe(q.view(), &c, &[1.0, 0.0, 0.0], &params(100));
        assert_eq!(sol.iterations, 0);
        assert!(sol.converged);
        assert_eq!(sol.z, vec![1.0, 0.0, 0.0]);
    }

    #[test]
    fn one_step_hand_trace() {
        // Q = 2I, c = 0, z0 = e_1: g = (2, 0), d = (-1, 1), δ = -2, q = 4, γ = 0.5
        let q = array![[2.0, 0.0], [0.0, 2.0]];
        let sol = frank_wolfe(q.view(), &[0.0, 0.0], &[1.0, 0.0], &params(1));
        assert_eq!(sol.iterations, 1);
        assert_eq!(sol.z, vec![0.5, 0.5]);
    }

    #[test]
    fn uniform_minimizer_for_isotropic_quadratic() {
        let q = Array2::<f64>::eye(4) * 2.0;
        let sol = frank_wolfe(q.view(), &[0.0; 4], &[0.0, 0.0, 1.0, 0.0], &params(10_000));
        for v in &sol.z {
            assert!((v - 0.25).abs() < 1e-5, "{:?}", sol.z);
        }
    }

    #[test]
    fn zero_curvature_takes_full_step() {
        let q = Array2::<f64>::zeros((3, 3));
        let sol = frank_wolfe(q.view(), &[1.0, -1.0, 0.5], &[1.0, 0.0, 0.0], &params(10));
        assert_eq!(sol.z, vec![0.0, 1.0, 0.0]);
        assert!(sol.converged);
    }

    #[test]
    fn corrective_variants_reach_face_optimum_exactly() {
        // optimum (0.5, 0.5, 0) lies on a face; vanilla steps only approach it
        let q = Array2::<f64>::eye(3) * 2.0;
        let c = [0.0, 0.0, 1.0];
        let mut p = params(50);
        let vanilla = frank_wolfe(q.view(), &c, &[1.0 / 3.0; 3], &p);
        assert!(vanilla.z[2] > 0.0);
        for variant in [FwVariant::Away, FwVariant::Pairwise, FwVariant::Corrective] {
            p.variant = variant;
            let sol = frank_wolfe(q.view(), &c, &[1.0 / 3.0; 3], &p);
            assert!(sol.converged, "{variant:?}");
            assert_eq!(sol.z[2], 0.0);
            assert!((sol.z[0] - 0.5).abs() < 1e-12);
        }
    }

    #[test]
    fn corrective_variants_keep_simplex() {
        let q = array![
            [3.0, 1.0, 0.5, 0.0],
            [1.0, 2.0, 0.3, 0.1],
            [0.5, 0.3, 1.0, 0.2],
            [0.0, 0.1, 0.2, 0.5]
        ];
        let c = [-1.0, 0.4, -0.2, 0.3];
        for variant in [FwVariant::Away, FwVariant::Pairwise, FwVariant::Corrective] {
            let mut p = params(1000);
            p.variant = variant;
            let sol = frank_wolfe(q.view(), &c, &[0.25; 4], &p);
            assert!(sol.converged, "{variant:?}");
            assert!(sol.z.iter().all(|&v| v >= 0.0));
            assert!((sol.z.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn low_rank_path_matches_dense() {
        // rows of H for m = 6 anchors in d = 2
        let h = [
            1.0, 0.5, -0.3, 2.0, 0.8, -1.1, 0.0, 0.4, -2.0, 0.1, 1.5, 1.5,
        ];
        let (m, d, ridge) = (6, 2, 0.05);
        let q = Array2::from_shape_fn((m, m), |(a, b)| {
            let g: f64 = (0..d).map(|p| h[a * d + p] * h[b * d + p]).sum();
            2.0 * g + if a == b { ridge } else { 0.0 }
        });
        let c = [-1.0, 0.3, 0.2, -0.4, 0.9, -0.6];
        let mut p = params(1000);
        p.variant = FwVariant::Corrective;

        let mut dense = vec![1.0 / 6.0; m];
        let dense_stats = FwScratch::new(m).solve(q.view(), &c, &mut dense, &p);
        let mut low = vec![1.0 / 6.0; m];
        let mut scratch = FwScratch::new(m);
        scratch.set_low_rank(&h, d, 2.0, ridge);
        let low_stats = scratch.solve(q.view(), &c, &mut low, &p);

        assert!(dense_stats.converged && low_stats.converged);
        for (a, b) in dense.iter().zip(&low) {
            assert!((a - b).abs() < 1e-10, "{dense:?} vs {low:?}");
        }
        assert!((dense_stats.quad - low_stats.quad).abs() < 1e-10);
    }

    #[test]
    fn f32_instantiation() {
        let q = array![[2.0f32, 0.0], [0.0, 2.0]];
        let sol = frank_wolfe(
            q.view(),
            &[0.0, 0.0],
            &[1.0, 0.0],
            &FwParams {
                max_iter: 1,
                gap_tol: 1e-6,
                curvature_tol: 1e-9,
                variant: FwVariant::Classic,
            },
        );
        assert_eq!(sol.z, vec![0.5f32, 0.5]);
    }
}
