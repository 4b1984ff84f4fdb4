//! Accuracy, conservation and dissipation-balance diagnostics.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiagnosticKind {
    Hamiltonian,
    Momentum,
    RelError,
    BalanceResidualH,
    BalanceResidualI,
}

impl DiagnosticKind {
    pub fn label(&self) -> &'static str {
        match self {
            DiagnosticKind::Hamiltonian => "hamiltonian",
            DiagnosticKind::Momentum => "momentum",
            DiagnosticKind::RelError => "rel_error",
            DiagnosticKind::BalanceResidualH => "balance_residual_H",
            DiagnosticKind::BalanceResidualI => "balance_residual_I",
        }
    }
}

/// A scalar time series.
#[derive(Debug, Clone, PartialEq)]
pub struct DiagnosticSeries<T: Real> {
    pub times: Vec<T>,
    pub values: Vec<T>,
    pub kind: DiagnosticKind,
}

impl<T: Real> DiagnosticSeries<T> {
    pub fn new(times: Vec<T>, values: Vec<T>, kind: DiagnosticKind) -> Result<Self> {
        if times.len() != values.len() {
            return Err(Error::DimensionMismatch { what: "series times", expected: values.len(), found: times.len() });
        }
        if values.iter().chain(times.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("diagnostic series"));
        }
        Ok(Self { times, values, kind })
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Per-step log-dissipation coefficients: `r^k = ln(Q^{k+1}/Q^k) + c mu dt`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateConstants<T: Real> {
    pub c_h: T,
    pub c_i: T,
}

impl<T: Real> RateConstants<T> {
    /// Quadratic invariants under the exponential midpoint rule: both decay
    /// by `exp(-2 mu dt)` per step.
    pub fn derived() -> Self {
        Self { c_h: T::lit(2.0), c_i: T::lit(2.0) }
    }

    /// The alternative `(1, -2)` pair. It does not describe the scheme and
    /// leaves nonzero residuals.
    pub fn literal() -> Self {
        Self { c_h: T::one(), c_i: T::lit(-2.0) }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.c_h.is_finite() && self.c_i.is_finite()) {
            return Err(Error::InvalidArgument("rate constants must be finite".into()));
        }
        Ok(())
    }

    pub fn for_kind(&self, kind: DiagnosticKind) -> Result<T> {
        match kind {
            DiagnosticKind::Hamiltonian => Ok(self.c_h),
            DiagnosticKind::Momentum => Ok(self.c_i),
            other => Err(Error::InvalidArgument(format!("no rate constant for a {} series", other.label()))),
        }
    }
}

fn mean<T: Real>(values: impl Iterator<Item = T>) -> Option<T> {
    let mut n = 0usize;
    let mut acc = T::zero();
    for v in values {
        acc += v;
        n += 1;
    }
    (n > 0).then(|| acc / T::from_count(n))
}

/// Per-sample `||psi^k - psi_hat^k|| / ||psi^k||` with `||psi||^2 = sum p^2 + q^2`.
pub fn relative_error_series<T: Real>(fom: &[DVector<T>], rom: &[DVector<T>]) -> Result<Vec<T>> {
    if fom.len() != rom.len() {
        return Err(Error::DimensionMismatch { what: "trajectory samples", expected: fom.len(), found: rom.len() });
    }
    if fom.is_empty() {
        return Err(Error::InvalidArgument("empty trajectory".into()));
    }
    fom.iter()
        .zip(rom)
        .enumerate()
        .map(|(k, (a, b))| {
            if a.len() != b.len() {
                return Err(Error::DimensionMismatch { what: "sample length", expected: a.len(), found: b.len() });
            }
            let norm = a.norm();
            if norm == T::zero() {
                return Err(Error::ZeroNorm { sample: k });
            }
            Ok((a - b).norm() / norm)
        })
        .collect()
}

/// `(1/K) sum_{k=1..K}` of a series indexed `0..=K`.
fn time_average<T: Real>(values: impl Iterator<Item = T>) -> Result<T> {
    mean(values.skip(1)).ok_or_else(|| Error::InvalidArgument("time average needs at least two values".into()))
}

/// Time-averaged relative L2 error over the samples after the initial one.
pub fn relative_solution_error<T: Real>(fom: &[DVector<T>], rom: &[DVector<T>]) -> Result<T> {
    time_average(relative_error_series(fom, rom)?.into_iter())
}

/// `(1/K) sum_{k=1..K} |Q^k - Q^0| / |Q^0|`.
pub fn conservation_error<T: Real>(series: &[T]) -> Result<T> {
    let q0 = *series.first().ok_or_else(|| Error::InvalidArgument("empty series".into()))?;
    conservation_error_against(series, q0)
}

/// As [`conservation_error`] but measured against an external reference,
/// such as the full-order initial invariant.
pub fn conservation_error_against<T: Real>(series: &[T], reference: T) -> Result<T> {
    if reference == T::zero() || !reference.is_finite() {
        return Err(Error::InvalidArgument("reference invariant vanishes".into()));
    }
    time_average(series.iter().map(|q| ((*q - reference) / reference).abs()))
}

/// Largest `|Q^k - Q^0| / |Q^0|`.
pub fn max_relative_drift<T: Real>(series: &[T]) -> Result<T> {
    let q0 = *series.first().ok_or_else(|| Error::InvalidArgument("empty series".into()))?;
    if q0 == T::zero() {
        return Err(Error::InvalidArgument("initial invariant vanishes".into()));
    }
    Ok(series.iter().map(|q| ((*q - q0) / q0).abs()).fold(T::zero(), |a, b| if b > a { b } else { a }))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AggregateKind {
    /// `(1/K) sum |r^k - r^0| / |r^0|`.
    RelativeToFirst,
    /// `(1/K) sum |r^k|`, used when `r^0` is numerically zero.
    MeanAbsolute,
}

impl AggregateKind {
    pub fn label(&self) -> &'static str {
        match self {
            AggregateKind::RelativeToFirst => "relative_to_first",
            AggregateKind::MeanAbsolute => "mean_absolute",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BalanceReport<T: Real> {
    pub residuals: DiagnosticSeries<T>,
    pub aggregate: T,
    pub aggregate_kind: AggregateKind,
}

/// Per-step residuals `r^k = ln(Q^{k+1}/Q^k) + c mu dt` of an `H` or `I` series.
///
/// Only the ratio of consecutive values has to be positive, so a series of
/// one sign (the momentum is negative for the soliton) is accepted.
pub fn balance_residuals<T: Real>(
    series: &DiagnosticSeries<T>,
    mu: T,
    dt: T,
    rates: &RateConstants<T>,
) -> Result<BalanceReport<T>> {
    rates.validate()?;
    let c = rates.for_kind(series.kind)?;
    let kind = match series.kind {
        DiagnosticKind::Hamiltonian => DiagnosticKind::BalanceResidualH,
        _ => DiagnosticKind::BalanceResidualI,
    };
    if series.len() < 3 {
        return Err(Error::InvalidArgument("balance residuals need at least three values".into()));
    }
    let shift = c * mu * dt;
    let mut values = Vec::with_capacity(series.len() - 1);
    for k in 0..series.len() - 1 {
        let ratio = series.values[k + 1] / series.values[k];
        if !ratio.is_finite() || ratio <= T::zero() {
            return Err(Error::NonPositiveInvariant { step: k, ratio: ratio.as_f64() });
        }
        values.push(ratio.ln() + shift);
    }
    let r0 = values[0];
    let threshold = T::machine_eps().sqrt() * shift.abs().max(T::machine_eps());
    let (aggregate, aggregate_kind) = if r0.abs() > threshold {
        (time_average(values.iter().map(|r| ((*r - r0) / r0).abs()))?, AggregateKind::RelativeToFirst)
    } else {
        (mean(values.iter().map(|r| r.abs())).expect("nonempty"), AggregateKind::MeanAbsolute)
    };
    let times = series.times[..series.len() - 1].to_vec();
    Ok(BalanceReport { residuals: DiagnosticSeries::new(times, values, kind)?, aggregate, aggregate_kind })
}

/// Balance error of the rescaled invariant:
/// `(1/K) sum_{k=1..K} |e^{c mu t_k} Q^k - Q_ref| / |Q_ref|`.
/// For an exactly balanced series and `Q_ref = Q^0` this vanishes.
pub fn scaled_balance_error<T: Real>(series: &DiagnosticSeries<T>, mu: T, c: T, reference: T) -> Result<T> {
    if reference == T::zero() || !reference.is_finite() {
        return Err(Error::InvalidArgument("reference invariant vanishes".into()));
    }
    let t0 = *series.times.first().ok_or_else(|| Error::InvalidArgument("empty series".into()))?;
    time_average(
        series
            .times
            .iter()
            .zip(&series.values)
            .map(|(t, q)| (((c * mu * (*t - t0)).exp() * *q - reference) / reference).abs()),
    )
}

/// Relative residuals of `e^{2 X_1} Q^{k+1} = e^{2 X_0} Q^k` with
/// `X_0 = -mu dt / 2`, `X_1 = mu dt / 2`.
pub fn scaled_identity_residuals<T: Real>(series: &[T], mu: T, dt: T) -> Vec<T> {
    let up = (mu * dt).exp();
    let down = (-mu * dt).exp();
    series
        .windows(2)
        .map(|w| {
            let lhs = up * w[1];
            let rhs = down * w[0];
            ((lhs - rhs) / rhs).abs()
        })
        .collect()
}

/// `Q^{k+1} / Q^k`.
pub fn decay_ratios<T: Real>(series: &[T]) -> Vec<T> {
    series.windows(2).map(|w| w[1] / w[0]).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(values: Vec<f64>, kind: DiagnosticKind) -> DiagnosticSeries<f64> {
        let times = (0..values.len()).map(|k| k as f64 * 0.01).collect();
        DiagnosticSeries::new(times, values, kind).unwrap()
    }

    fn traj(seed: f64, k: usize) -> Vec<DVector<f64>> {
        (0..k).map(|j| DVector::from_fn(6, |i, _| 1.0 + ((i + j) as f64 * seed).sin())).collect()
    }

    #[test]
    fn series_validation() {
        assert!(DiagnosticSeries::new(vec![0.0], vec![], DiagnosticKind::Hamiltonian).is_err());
        assert!(DiagnosticSeries::new(vec![0.0], vec![f64::INFINITY], DiagnosticKind::Hamiltonian).is_err());
    }

    #[test]
    fn relative_error_cases() {
        let a = traj(0.3, 5);
        assert_eq!(relative_solution_error(&a, &a).unwrap(), 0.0);
        let eps = 1e-3;
        let b: Vec<_> = a.iter().map(|v| v * (1.0 + eps)).collect();
        assert!((relative_solution_error(&a, &b).unwrap() - eps).abs() < 1e-15);
        assert!(relative_solution_error(&a, &b[..4]).is_err());
        let mut z = a.clone();
        z[2] = DVector::zeros(6);
        assert!(matches!(relative_solution_error(&z, &a), Err(Error::ZeroNorm { sample: 2 })));
    }

    #[test]
    fn relative_error_is_scale_covariant() {
        let a = traj(0.3, 7);
        let b = traj(0.31, 7);
        let e = relative_solution_error(&a, &b).unwrap();
        for alpha in [-3.0, 0.25, 1e3] {
            let sa: Vec<_> = a.iter().map(|v| v * alpha).collect();
            let sb: Vec<_> = b.iter().map(|v| v * alpha).collect();
            assert!((relative_solution_error(&sa, &sb).unwrap() - e).abs() < 1e-14);
        }
    }

    #[test]
    fn conservation_error_cases() {
        assert_eq!(conservation_error(&[2.0; 10]).unwrap(), 0.0);
        let q0 = -1.5;
        let delta = 1e-4;
        let k = 8;
        let s: Vec<f64> = (0..k).map(|j| if j == 0 { q0 } else { q0 * (1.0 + delta) }).collect();
        assert!((conservation_error(&s).unwrap() - delta).abs() < 1e-15);
        assert!(conservation_error(&[0.0, 1.0]).is_err());
        assert!(conservation_error(&[1.0]).is_err());
        assert!(conservation_error::<f64>(&[]).is_err());
        assert!((conservation_error_against(&[1.0f64, 1.0], 2.0).unwrap() - 0.5).abs() < 1e-16);
        assert!((max_relative_drift(&[1.0f64, 1.1, 0.8]).unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn exact_geometric_decay_has_zero_residual() {
        let (mu, dt) = (0.01, 0.01);
        for c in [1.0, 2.0] {
            let rates = RateConstants { c_h: c, c_i: c };
            for (q0, kind) in [(3.0, DiagnosticKind::Hamiltonian), (-2.0, DiagnosticKind::Momentum)] {
                let values = (0..50).map(|k| q0 * (-c * mu * dt * k as f64).exp()).collect();
                let rep = balance_residuals(&series(values, kind), mu, dt, &rates).unwrap();
                assert_eq!(rep.residuals.len(), 49);
                assert!(rep.residuals.values.iter().all(|r| r.abs() < 1e-14));
                assert_eq!(rep.aggregate_kind, AggregateKind::MeanAbsolute);
            }
        }
    }

    #[test]
    fn undamped_residuals_are_log_drift() {
        let values = vec![1.0, 1.0 + 1e-12, 1.0 - 1e-12, 1.0];
        let rep = balance_residuals(&series(values.clone(), DiagnosticKind::Hamiltonian), 0.0, 0.01, &RateConstants::derived()).unwrap();
        for (k, r) in rep.residuals.values.iter().enumerate() {
            assert!((r - (values[k + 1] / values[k]).ln()).abs() < 1e-20);
            assert!(r.abs() <= 1e-10);
        }
    }

    #[test]
    fn literal_constants_leave_a_template_aggregate() {
        let (mu, dt) = (0.01, 0.01);
        let values: Vec<f64> = (0..20).map(|k| (-2.0 * mu * dt * k as f64).exp()).collect();
        let rep = balance_residuals(&series(values, DiagnosticKind::Hamiltonian), mu, dt, &RateConstants::literal()).unwrap();
        assert_eq!(rep.aggregate_kind, AggregateKind::RelativeToFirst);
        assert!((rep.residuals.values[0] + mu * dt).abs() < 1e-15);
        assert!(rep.aggregate < 1e-9);
    }

    #[test]
    fn balance_errors() {
        let rates = RateConstants::derived();
        let s = series(vec![1.0, -1.0, 1.0], DiagnosticKind::Hamiltonian);
        assert!(matches!(balance_residuals(&s, 0.01, 0.01, &rates), Err(Error::NonPositiveInvariant { step: 0, .. })));
        let s = series(vec![1.0, 1.0], DiagnosticKind::Hamiltonian);
        assert!(balance_residuals(&s, 0.01, 0.01, &rates).is_err());
        let s = series(vec![1.0, 1.0, 1.0], DiagnosticKind::RelError);
        assert!(balance_residuals(&s, 0.01, 0.01, &rates).is_err());
        let bad = RateConstants { c_h: f64::NAN, c_i: 2.0 };
        let s = series(vec![1.0, 1.0, 1.0], DiagnosticKind::Hamiltonian);
        assert!(balance_residuals(&s, 0.01, 0.01, &bad).is_err());
    }

    #[test]
    fn scaled_balance_and_identity() {
        let (mu, dt) = (0.02, 0.01);
        let values: Vec<f64> = (0..30).map(|k| -4.0 * (-2.0 * mu * dt * k as f64).exp()).collect();
        let s = series(values.clone(), DiagnosticKind::Momentum);
        assert!(scaled_balance_error(&s, mu, 2.0, -4.0).unwrap() < 1e-14);
        let off = scaled_balance_error(&s, mu, 2.0, -4.4).unwrap();
        assert!((off - 0.4 / 4.4).abs() < 1e-14);
        assert!(scaled_identity_residuals(&values, mu, dt).iter().all(|r| *r < 1e-14));
        assert!(decay_ratios(&values).iter().all(|r| (r - (-2.0 * mu * dt).exp()).abs() < 1e-15));
    }

    #[test]
    fn aggregates_are_deterministic() {
        let a = traj(0.7, 9);
        let b = traj(0.71, 9);
        let x = relative_solution_error(&a, &b).unwrap();
        assert_eq!(x.to_bits(), relative_solution_error(&a, &b).unwrap().to_bits());
    }
}
