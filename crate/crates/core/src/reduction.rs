//! POD bases from snapshot matrices and Q-DEIM interpolation operators.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::integrators::Trajectory;
use crate::lattice::{nonlinear_vector, LatticeConfig};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SnapshotKind {
    P,
    Q,
    Nonlinearity,
}

impl SnapshotKind {
    pub fn label(&self) -> &'static str {
        match self {
            SnapshotKind::P => "p",
            SnapshotKind::Q => "q",
            SnapshotKind::Nonlinearity => "m",
        }
    }
}

/// Column-stacked samples of one lattice quantity.
#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotSet<T: Real> {
    pub data: DMatrix<T>,
    pub times: Vec<T>,
    pub kind: SnapshotKind,
}

impl<T: Real> SnapshotSet<T> {
    pub fn new(data: DMatrix<T>, times: Vec<T>, kind: SnapshotKind) -> Result<Self> {
        if data.ncols() != times.len() {
            return Err(Error::DimensionMismatch {
                what: "snapshot timestamps",
                expected: data.ncols(),
                found: times.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("snapshot matrix"));
        }
        Ok(Self { data, times, kind })
    }

    pub fn n_rows(&self) -> usize {
        self.data.nrows()
    }

    pub fn n_samples(&self) -> usize {
        self.data.ncols()
    }
}

/// Splits the sampled states of a full-order trajectory into the `p`, `q`
/// and nonlinearity `m` snapshot matrices.
pub fn fom_snapshots<T: Real>(
    traj: &Trajectory<T>,
    config: &LatticeConfig<T>,
) -> Result<(SnapshotSet<T>, SnapshotSet<T>, SnapshotSet<T>)> {
    let n = config.n_sites;
    let k = traj.samples.len();
    let mut sp = DMatrix::zeros(n, k);
    let mut sq = DMatrix::zeros(n, k);
    let mut sm = DMatrix::zeros(n, k);
    for (j, z) in traj.samples.iter().enumerate() {
        if z.len() != 2 * n {
            return Err(Error::DimensionMismatch {
                what: "trajectory sample",
                expected: 2 * n,
                found: z.len(),
            });
        }
        let p = z.rows(0, n).into_owned();
        let q = z.rows(n, n).into_owned();
        sm.set_column(j, &nonlinear_vector(&p, &q, config.gamma, config.mesh));
        sp.set_column(j, &p);
        sq.set_column(j, &q);
    }
    let times = traj.sample_times();
    Ok((
        SnapshotSet::new(sp, times.clone(), SnapshotKind::P)?,
        SnapshotSet::new(sq, times.clone(), SnapshotKind::Q)?,
        SnapshotSet::new(sm, times, SnapshotKind::Nonlinearity)?,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Truncation<T: Real> {
    /// Cumulative-energy tolerance `kappa` in `(0, 1)`.
    Tolerance(T),
    Fixed(usize),
}

/// Orthonormal POD modes with the full singular spectrum.
#[derive(Debug, Clone, PartialEq)]
pub struct PodBasis<T: Real> {
    pub modes: DMatrix<T>,
    pub singular_values: DVector<T>,
    pub retained: usize,
    pub captured_energy: T,
}

impl<T: Real> PodBasis<T> {
    pub fn project(&self, v: &DVector<T>) -> DVector<T> {
        self.modes.tr_mul(v)
    }

    pub fn lift(&self, coeffs: &DVector<T>) -> DVector<T> {
        &self.modes * coeffs
    }

    /// Fraction of the snapshot energy captured by the leading `r` modes.
    pub fn energy_ratio(&self, r: usize) -> T {
        energy_ratio(&self.singular_values, r)
    }
}

fn energy_ratio<T: Real>(sv: &DVector<T>, r: usize) -> T {
    let total: T = sv.iter().map(|s| *s * *s).fold(T::zero(), |a, b| a + b);
    let head: T = sv.iter().take(r).map(|s| *s * *s).fold(T::zero(), |a, b| a + b);
    head / total
}

/// Smallest `r` with `sum_{j<=r} s_j^2 / sum_j s_j^2 > 1 - kappa`.
pub fn truncation_rank<T: Real>(singular_values: &DVector<T>, kappa: T) -> usize {
    let total: T = singular_values.iter().map(|s| *s * *s).fold(T::zero(), |a, b| a + b);
    let threshold = T::one() - kappa;
    let mut acc = T::zero();
    for (j, s) in singular_values.iter().enumerate() {
        acc += *s * *s;
        if acc / total > threshold {
            return j + 1;
        }
    }
    singular_values.len()
}

/// Thin SVD `S = W Sigma Z^T` with singular values sorted nonincreasing; only
/// the left factor is returned.
fn left_singular<T: Real>(data: &DMatrix<T>) -> Result<(DMatrix<T>, DVector<T>)> {
    let svd = data.clone().svd(true, false);
    let u = svd.u.ok_or_else(|| Error::Singular("SVD left factor".into()))?;
    let sv = svd.singular_values;
    let mut order: Vec<usize> = (0..sv.len()).collect();
    order.sort_by(|&a, &b| sv[b].partial_cmp(&sv[a]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&b)));
    let mut w = DMatrix::zeros(u.nrows(), order.len());
    let mut s = DVector::zeros(order.len());
    for (dst, &src) in order.iter().enumerate() {
        w.set_column(dst, &u.column(src));
        s[dst] = sv[src];
    }
    Ok((w, s))
}

/// POD basis: leading left singular vectors of the (uncentred) snapshot matrix.
pub fn pod_basis<T: Real>(snapshots: &SnapshotSet<T>, truncation: Truncation<T>) -> Result<PodBasis<T>> {
    let data = &snapshots.data;
    if data.is_empty() || data.iter().all(|v| *v == T::zero()) {
        return Err(Error::InvalidArgument("snapshot matrix is zero".into()));
    }
    let max_rank = data.nrows().min(data.ncols());
    if let Truncation::Tolerance(kappa) = truncation {
        if !(kappa > T::zero() && kappa < T::one()) {
            return Err(Error::InvalidArgument(format!("tolerance {kappa} outside (0, 1)")));
        }
    }
    if let Truncation::Fixed(r) = truncation {
        if r == 0 || r > max_rank {
            return Err(Error::InvalidArgument(format!(
                "requested {r} modes, snapshot rank bound is {max_rank}"
            )));
        }
    }
    let (w, sv) = left_singular(data)?;
    let retained = match truncation {
        Truncation::Tolerance(kappa) => truncation_rank(&sv, kappa),
        Truncation::Fixed(r) => r,
    };
    Ok(PodBasis {
        modes: w.columns(0, retained).into_owned(),
        captured_energy: energy_ratio(&sv, retained),
        singular_values: sv,
        retained,
    })
}

/// Spectrum scaled so that its first entry is one.
pub fn normalized_singular_values<T: Real>(basis: &PodBasis<T>) -> Result<DVector<T>> {
    let sv = &basis.singular_values;
    if sv.is_empty() {
        return Err(Error::InvalidArgument("empty spectrum".into()));
    }
    let first = sv[0];
    if first == T::zero() {
        return Err(Error::InvalidArgument("leading singular value is zero".into()));
    }
    Ok(sv / first)
}

/// Q-DEIM point selection: the first `N_d` column pivots of a column-pivoted
/// Householder QR of `Phi^T`. Ties go to the lowest site index.
pub fn qdeim_points<T: Real>(phi: &DMatrix<T>) -> Result<Vec<usize>> {
    let (n, nd) = phi.shape();
    if nd == 0 || nd > n {
        return Err(Error::InvalidArgument(format!("basis of shape {n}x{nd} cannot be sampled")));
    }
    let mut a = phi.transpose();
    let mut perm: Vec<usize> = (0..n).collect();
    let col_norm = |a: &DMatrix<T>, j: usize, c: usize| -> T {
        let mut s = T::zero();
        for r in j..nd {
            s += a[(r, c)] * a[(r, c)];
        }
        s.sqrt()
    };
    let scale = (0..n).map(|c| col_norm(&a, 0, c)).fold(T::zero(), |m, v| if v > m { v } else { m });
    let tol = T::machine_eps() * T::from_count(n.max(nd)) * scale;
    for j in 0..nd {
        let mut best = j;
        let mut best_norm = col_norm(&a, j, j);
        for c in j + 1..n {
            let v = col_norm(&a, j, c);
            if v > best_norm {
                best = c;
                best_norm = v;
            }
        }
        if best_norm <= tol {
            return Err(Error::RankDeficient { mode: j, pivot: best_norm.as_f64() });
        }
        a.swap_columns(j, best);
        perm.swap(j, best);

        // Householder reflector zeroing a[j+1.., j].
        let alpha = if a[(j, j)] >= T::zero() { -best_norm } else { best_norm };
        let mut v = DVector::zeros(nd - j);
        for r in j..nd {
            v[r - j] = a[(r, j)];
        }
        v[0] -= alpha;
        let vnorm2 = v.norm_squared();
        if vnorm2 > T::zero() {
            for c in j..n {
                let mut dot = T::zero();
                for r in j..nd {
                    dot += v[r - j] * a[(r, c)];
                }
                let f = T::lit(2.0) * dot / vnorm2;
                for r in j..nd {
                    a[(r, c)] -= f * v[r - j];
                }
            }
        }
    }
    Ok(perm[..nd].to_vec())
}

/// DEIM interpolation operator `Psi = Phi (P^T Phi)^{-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DeimOperator<T: Real> {
    pub basis: DMatrix<T>,
    /// Selected 0-based site indices, in pivot order.
    pub points: Vec<usize>,
    pub interpolator: DMatrix<T>,
}

impl<T: Real> DeimOperator<T> {
    pub fn n_points(&self) -> usize {
        self.points.len()
    }

    /// `P^T v`.
    pub fn sample(&self, v: &DVector<T>) -> DVector<T> {
        DVector::from_iterator(self.points.len(), self.points.iter().map(|&i| v[i]))
    }

    /// `Psi P^T v`.
    pub fn approximate(&self, v: &DVector<T>) -> DVector<T> {
        &self.interpolator * self.sample(v)
    }

    /// `P^T Phi`.
    pub fn sampled_basis(&self) -> DMatrix<T> {
        select_rows(&self.basis, &self.points)
    }

    /// 2-norm condition number of `P^T Phi`.
    pub fn condition_number(&self) -> T {
        let sv = self.sampled_basis().singular_values();
        let max = sv.max();
        let min = sv.min();
        max / min
    }
}

pub(crate) fn select_rows<T: Real>(m: &DMatrix<T>, rows: &[usize]) -> DMatrix<T> {
    DMatrix::from_fn(rows.len(), m.ncols(), |i, j| m[(rows[i], j)])
}

pub fn deim_operator<T: Real>(phi: &DMatrix<T>, points: &[usize]) -> Result<DeimOperator<T>> {
    let (n, nd) = phi.shape();
    if points.len() != nd {
        return Err(Error::DimensionMismatch {
            what: "interpolation points",
            expected: nd,
            found: points.len(),
        });
    }
    let mut seen = vec![false; n];
    for &p in points {
        if p >= n || seen[p] {
            return Err(Error::InvalidArgument(format!("interpolation point {p} out of range or repeated")));
        }
        seen[p] = true;
    }
    let sampled = select_rows(phi, points);
    // Psi^T = (P^T Phi)^{-T} Phi^T
    let lu = sampled.transpose().lu();
    if !lu.is_invertible() {
        return Err(Error::Singular("P^T Phi".into()));
    }
    let psi_t = lu
        .solve(&phi.transpose())
        .ok_or_else(|| Error::Singular("P^T Phi".into()))?;
    Ok(DeimOperator {
        basis: phi.clone(),
        points: points.to_vec(),
        interpolator: psi_t.transpose(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(r: usize, c: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0))
    }

    fn orthonormal(r: usize, c: usize, seed: u64) -> DMatrix<f64> {
        random_matrix(r, c, seed).qr().q()
    }

    fn set(data: DMatrix<f64>) -> SnapshotSet<f64> {
        let k = data.ncols();
        SnapshotSet::new(data, (0..k).map(|i| i as f64).collect(), SnapshotKind::P).unwrap()
    }

    #[test]
    fn snapshot_set_validation() {
        assert!(SnapshotSet::new(DMatrix::<f64>::zeros(3, 2), vec![0.0], SnapshotKind::Q).is_err());
        let mut m = DMatrix::<f64>::zeros(2, 1);
        m[(0, 0)] = f64::NAN;
        assert!(SnapshotSet::new(m, vec![0.0], SnapshotKind::Q).is_err());
    }

    #[test]
    fn rank_one_snapshots() {
        let c = DVector::from_vec(vec![3.0, 0.0, 4.0, 0.0]);
        let k = 7;
        let data = DMatrix::from_fn(4, k, |i, _| c[i]);
        let b = pod_basis(&set(data), Truncation::Tolerance(1e-6)).unwrap();
        assert_eq!(b.retained, 1);
        let mode = b.modes.column(0);
        let sign = mode[0].signum();
        assert!((mode * sign - &c / 5.0).amax() < 1e-14);
        assert!((b.singular_values[0] - 5.0 * (k as f64).sqrt()).abs() < 1e-12);
        assert!((b.captured_energy - 1.0).abs() < 1e-15);
    }

    #[test]
    fn equal_energy_modes_and_strict_criterion() {
        // Five orthogonal columns of equal norm: p/5 > 0.5 first holds at p = 3.
        let data = orthonormal(9, 5, 1) * 2.0;
        let b = pod_basis(&set(data), Truncation::Tolerance(0.5)).unwrap();
        assert_eq!(b.retained, 3);
        // Exact spectrum with a tie at the threshold: 2/4 is not > 0.5.
        let sv = DVector::from_vec(vec![1.0, 1.0, 1.0, 1.0]);
        assert_eq!(truncation_rank(&sv, 0.5), 3);
        assert_eq!(truncation_rank(&sv, 0.8), 1);
    }

    #[test]
    fn pod_errors() {
        assert!(pod_basis(&set(DMatrix::zeros(3, 3)), Truncation::Fixed(1)).is_err());
        let data = random_matrix(6, 4, 2);
        assert!(pod_basis(&set(data.clone()), Truncation::Tolerance(0.0)).is_err());
        assert!(pod_basis(&set(data.clone()), Truncation::Tolerance(1.0)).is_err());
        assert!(pod_basis(&set(data.clone()), Truncation::Fixed(5)).is_err());
        assert!(pod_basis(&set(data), Truncation::Fixed(0)).is_err());
    }

    #[test]
    fn projection_error_equals_spectral_tail() {
        let data = random_matrix(20, 13, 3);
        for r in [1, 4, 9, 13] {
            let b = pod_basis(&set(data.clone()), Truncation::Fixed(r)).unwrap();
            let resid = &data - &b.modes * b.modes.tr_mul(&data);
            let tail: f64 = b.singular_values.iter().skip(r).map(|s| s * s).sum();
            let err = resid.norm_squared();
            assert!((err - tail).abs() <= 1e-9 * data.norm_squared(), "r={r}");
            let gram = b.modes.tr_mul(&b.modes) - DMatrix::identity(r, r);
            assert!(gram.amax() < 1e-12);
        }
    }

    #[test]
    fn pod_is_optimal_among_random_subspaces() {
        let data = random_matrix(15, 30, 4);
        for r in [2, 5, 8] {
            let b = pod_basis(&set(data.clone()), Truncation::Fixed(r)).unwrap();
            let best = (&data - &b.modes * b.modes.tr_mul(&data)).norm();
            for seed in 0..20 {
                let comp = orthonormal(15, r, 1000 + seed);
                let err = (&data - &comp * comp.tr_mul(&data)).norm();
                assert!(best <= err + 1e-12);
            }
        }
    }

    #[test]
    fn captured_energy_is_monotone() {
        let data = random_matrix(10, 10, 5);
        let b = pod_basis(&set(data), Truncation::Fixed(10)).unwrap();
        let mut prev = 0.0;
        for r in 1..=10 {
            let e = b.energy_ratio(r);
            assert!(e >= prev);
            prev = e;
        }
        assert!((prev - 1.0).abs() < 1e-14);
        assert!(b.singular_values.as_slice().windows(2).all(|w| w[0] >= w[1] && w[1] >= 0.0));
    }

    #[test]
    fn normalized_spectrum() {
        let b = PodBasis {
            modes: DMatrix::identity(2, 2),
            singular_values: DVector::from_vec(vec![2.0, 1.0]),
            retained: 2,
            captured_energy: 1.0,
        };
        assert_eq!(normalized_singular_values(&b).unwrap().as_slice(), &[1.0, 0.5]);
        let zero = PodBasis { singular_values: DVector::zeros(2), ..b.clone() };
        assert!(normalized_singular_values(&zero).is_err());
        let empty = PodBasis { singular_values: DVector::zeros(0), ..b };
        assert!(normalized_singular_values(&empty).is_err());
    }

    #[test]
    fn qdeim_on_identity_columns() {
        // Columns e_3 and e_7 (1-based).
        let mut phi = DMatrix::<f64>::zeros(10, 2);
        phi[(2, 0)] = 1.0;
        phi[(6, 1)] = 1.0;
        let pts = qdeim_points(&phi).unwrap();
        assert_eq!(pts, vec![2, 6]);
        let op = deim_operator(&phi, &pts).unwrap();
        assert_eq!(op.interpolator, phi);
    }

    #[test]
    fn qdeim_rank_deficiency_names_the_mode() {
        let mut phi = DMatrix::<f64>::zeros(6, 3);
        phi[(0, 0)] = 1.0;
        phi[(1, 1)] = 1.0;
        phi[(0, 2)] = 2.0;
        phi[(1, 2)] = -1.0;
        match qdeim_points(&phi) {
            Err(Error::RankDeficient { mode, .. }) => assert_eq!(mode, 2),
            other => panic!("{other:?}"),
        }
    }

    /// Residual norm of column `c` of `Phi^T` after orthogonal projection
    /// away from the span of the already selected columns.
    fn residual_norm(phi_t: &DMatrix<f64>, chosen: &[usize], c: usize) -> f64 {
        let col = phi_t.column(c).into_owned();
        if chosen.is_empty() {
            return col.norm();
        }
        let basis = DMatrix::from_fn(phi_t.nrows(), chosen.len(), |r, k| phi_t[(r, chosen[k])]);
        let q = basis.qr().q();
        (&col - &q * q.tr_mul(&col)).norm()
    }

    #[test]
    fn qdeim_pivots_are_greedy_maximisers() {
        let phi = orthonormal(50, 5, 6);
        let pts = qdeim_points(&phi).unwrap();
        let phi_t = phi.transpose();
        for j in 0..pts.len() {
            let chosen = &pts[..j];
            let picked = residual_norm(&phi_t, chosen, pts[j]);
            for c in (0..50).filter(|c| !chosen.contains(c)) {
                assert!(residual_norm(&phi_t, chosen, c) <= picked + 1e-12, "pivot {j}, site {c}");
            }
        }
        assert_eq!(qdeim_points(&phi).unwrap(), pts);
    }

    #[test]
    fn deim_operator_errors() {
        let phi = orthonormal(8, 2, 7);
        assert!(deim_operator(&phi, &[1]).is_err());
        assert!(deim_operator(&phi, &[1, 1]).is_err());
        assert!(deim_operator(&phi, &[1, 8]).is_err());
        let mut degenerate = DMatrix::<f64>::zeros(4, 2);
        degenerate[(0, 0)] = 1.0;
        degenerate[(1, 1)] = 1.0;
        assert!(matches!(deim_operator(&degenerate, &[0, 2]), Err(Error::Singular(_))));
    }

    #[test]
    fn out_of_span_error_matches_oblique_projection() {
        let phi = orthonormal(25, 4, 8);
        let pts = qdeim_points(&phi).unwrap();
        let op = deim_operator(&phi, &pts).unwrap();
        let m = random_matrix(25, 1, 9).column(0).into_owned();
        let ptp = DMatrix::from_fn(4, 4, |i, j| phi[(pts[i], j)]);
        let ptm = DVector::from_fn(4, |i, _| m[pts[i]]);
        let oracle = &phi * ptp.try_inverse().unwrap() * ptm;
        let expected = (&m - &oracle).norm();
        let got = (&m - op.approximate(&m)).norm();
        assert!((got - expected).abs() < 1e-12 * expected);
        assert!(op.condition_number() >= 1.0);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(48))]

        #[test]
        fn deim_interpolates_exactly(seed in 0u64..10_000, n in 6usize..40, nd in 1usize..6) {
            let phi = orthonormal(n, nd.min(n), seed);
            let pts = qdeim_points(&phi).unwrap();
            let op = deim_operator(&phi, &pts).unwrap();
            let ptpsi = select_rows(&op.interpolator, &pts);
            prop_assert!((ptpsi - DMatrix::identity(pts.len(), pts.len())).amax() <= 1e-12);
            prop_assert!(op.sampled_basis().determinant().abs() > 0.0);
            let a = random_matrix(pts.len(), 1, seed + 1).column(0).into_owned();
            let m = &phi * a;
            let rec = op.approximate(&m);
            prop_assert!((rec - &m).norm() <= 1e-12 * m.norm());
        }
    }
}
