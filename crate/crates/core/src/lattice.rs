//! Conservative and linearly damped Ablowitz-Ladik lattices.
//!
//! The state is the real/imaginary split `w = p + i q` of the lattice wave
//! function on `N` periodic sites `x_n = -L + n h` (0-based `n`). The system
//!
//! ```text
//! dp_n/dt = -m_n (q_{n+1} + q_{n-1}) / h^2 - mu p_n
//! dq_n/dt =  m_n (p_{n+1} + p_{n-1}) / h^2 - mu q_n
//! m_n     = 1 + gamma h^2 (p_n^2 + q_n^2)
//! ```
//!
//! is the skew-gradient field `S(z) grad H(z) - mu z` with
//! `S(z) = [[0, -M], [M, 0]]`, `M = diag(m)` and the quadratic Hamiltonian
//! `H = (1/h^2) sum_n (p_n p_{n-1} + q_n q_{n-1})`.
//!
//! Site indices are 0-based throughout the code. Documentation and CSV
//! output that speak of "site 1..N" add one at the boundary.

use nalgebra::{DVector, Matrix2};

use crate::error::{Error, Result};
use crate::linalg::PeriodicBlockTridiagonal;
use crate::scalar::Real;

/// Physical and discrete parameters of the lattice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LatticeConfig<T: Real> {
    pub n_sites: usize,
    pub half_length: T,
    /// Grid spacing `h = 2L / N`.
    pub mesh: T,
    pub gamma: T,
    /// Linear damping rate; zero for the conservative lattice.
    pub mu: T,
    pub dt: T,
    pub t_final: T,
}

impl<T: Real> LatticeConfig<T> {
    /// Builds a configuration with `h = 2L/N`.
    pub fn new(n_sites: usize, half_length: T, gamma: T, mu: T, dt: T, t_final: T) -> Result<Self> {
        if n_sites == 0 {
            return Err(Error::InvalidConfig("n_sites must be positive".into()));
        }
        let mesh = T::lit(2.0) * half_length / T::from_count(n_sites);
        let cfg = Self {
            n_sites,
            half_length,
            mesh,
            gamma,
            mu,
            dt,
            t_final,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_owned()));
        if self.n_sites == 0 {
            return bad("n_sites must be positive");
        }
        for (name, v) in [
            ("half_length", self.half_length),
            ("mesh", self.mesh),
            ("gamma", self.gamma),
            ("mu", self.mu),
            ("dt", self.dt),
            ("t_final", self.t_final),
        ] {
            if !v.is_finite() {
                return Err(Error::InvalidConfig(format!("{name} is not finite")));
            }
        }
        if self.mesh <= T::zero() {
            return bad("mesh must be positive");
        }
        let span = T::lit(2.0) * self.half_length;
        let rel = (self.mesh * T::from_count(self.n_sites) - span).abs() / span.abs();
        if rel.as_f64() > 1e-12 {
            return bad("mesh * n_sites must equal 2 * half_length");
        }
        if self.mu < T::zero() {
            return bad("mu must be nonnegative");
        }
        if self.dt <= T::zero() {
            return bad("dt must be positive");
        }
        if self.t_final <= T::zero() {
            return bad("t_final must be positive");
        }
        Ok(())
    }

    pub fn is_conservative(&self) -> bool {
        self.mu == T::zero()
    }

    /// Number of time steps `K = T / dt`; rejects horizons that are not an
    /// integer multiple of the step within 1e-9.
    pub fn steps(&self) -> Result<usize> {
        let ratio = (self.t_final / self.dt).as_f64();
        let k = ratio.round();
        if (ratio - k).abs() > 1e-9 * ratio.max(1.0) || k < 1.0 {
            return Err(Error::InvalidConfig(format!(
                "t_final / dt = {ratio} is not a positive integer"
            )));
        }
        Ok(k as usize)
    }

    /// Grid point of 0-based site `n`.
    pub fn node(&self, n: usize) -> T {
        -self.half_length + T::from_count(n) * self.mesh
    }

    pub fn grid(&self) -> Vec<T> {
        (0..self.n_sites).map(|n| self.node(n)).collect()
    }

    fn inv_h2(&self) -> T {
        T::one() / (self.mesh * self.mesh)
    }
}

/// Lattice wave function at one time instant.
#[derive(Debug, Clone, PartialEq)]
pub struct State<T: Real> {
    pub p: DVector<T>,
    pub q: DVector<T>,
    pub t: T,
}

/// Time derivative of a [`State`].
#[derive(Debug, Clone, PartialEq)]
pub struct Tangent<T: Real> {
    pub dp: DVector<T>,
    pub dq: DVector<T>,
}

impl<T: Real> State<T> {
    pub fn new(p: DVector<T>, q: DVector<T>, t: T) -> Result<Self> {
        if p.len() != q.len() {
            return Err(Error::DimensionMismatch {
                what: "state components",
                expected: p.len(),
                found: q.len(),
            });
        }
        if p.iter().chain(q.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("state"));
        }
        Ok(Self { p, q, t })
    }

    pub fn zeros(n: usize) -> Self {
        Self {
            p: DVector::zeros(n),
            q: DVector::zeros(n),
            t: T::zero(),
        }
    }

    pub fn len(&self) -> usize {
        self.p.len()
    }

    pub fn is_empty(&self) -> bool {
        self.p.is_empty()
    }

    /// Stacked vector `z = (p, q)`.
    pub fn to_vector(&self) -> DVector<T> {
        let n = self.len();
        DVector::from_fn(2 * n, |i, _| if i < n { self.p[i] } else { self.q[i - n] })
    }

    pub fn from_vector(z: &DVector<T>, t: T) -> Self {
        let n = z.len() / 2;
        Self {
            p: z.rows(0, n).into_owned(),
            q: z.rows(n, n).into_owned(),
            t,
        }
    }

    /// Squared discrete L2 norm `sum (p_n^2 + q_n^2)`.
    pub fn norm_squared(&self) -> T {
        self.p.norm_squared() + self.q.norm_squared()
    }

    /// Modulus `|w_n|` at every site.
    pub fn modulus(&self) -> DVector<T> {
        self.p.zip_map(&self.q, |a, b| (a * a + b * b).sqrt())
    }

    fn check(&self, config: &LatticeConfig<T>) {
        assert_eq!(self.p.len(), config.n_sites, "state length differs from n_sites");
        assert_eq!(self.q.len(), config.n_sites, "state length differs from n_sites");
    }
}

impl<T: Real> Tangent<T> {
    pub fn to_vector(&self) -> DVector<T> {
        let n = self.dp.len();
        DVector::from_fn(2 * n, |i, _| if i < n { self.dp[i] } else { self.dq[i - n] })
    }
}

fn sech<T: Real>(x: T) -> T {
    let e = (-x.abs()).exp();
    T::lit(2.0) * e / (T::one() + e * e)
}

fn from_profile<T: Real>(config: &LatticeConfig<T>, f: impl Fn(T) -> (T, T)) -> State<T> {
    let n = config.n_sites;
    let mut p = DVector::zeros(n);
    let mut q = DVector::zeros(n);
    for i in 0..n {
        let (re, im) = f(config.node(i));
        p[i] = re;
        q[i] = im;
    }
    State { p, q, t: T::zero() }
}

/// Bright soliton `psi(x, 0) = 2 eta exp(2 i xi x) sech(2 eta x)`.
pub fn initial_soliton_conservative<T: Real>(config: &LatticeConfig<T>, eta: T, xi: T) -> Result<State<T>> {
    if !config.is_conservative() {
        return Err(Error::InvalidArgument(
            "conservative soliton requested for a damped lattice".into(),
        ));
    }
    if eta <= T::zero() || !eta.is_finite() {
        return Err(Error::InvalidArgument(format!("eta must be positive, got {eta}")));
    }
    let two = T::lit(2.0);
    Ok(from_profile(config, |x| {
        let amp = two * eta * sech(two * eta * x);
        let phase = two * xi * x;
        (amp * phase.cos(), amp * phase.sin())
    }))
}

/// Damped-lattice soliton `psi(x, 0) = (sqrt 2 / 2) exp(i (x + phase) / 2) sech((x + phase) / 2)`.
pub fn initial_soliton_damped<T: Real>(config: &LatticeConfig<T>, phase: T) -> State<T> {
    let half = T::lit(0.5);
    let amp0 = T::lit(2.0).sqrt() * half;
    from_profile(config, |x| {
        let s = (x + phase) * half;
        let amp = amp0 * sech(s);
        (amp * s.cos(), amp * s.sin())
    })
}

#[inline]
fn neighbours<T: Real>(v: &DVector<T>, i: usize) -> (T, T) {
    let n = v.len();
    (v[(i + n - 1) % n], v[(i + 1) % n])
}

/// `H = (1/h^2) sum_n (p_n p_{n-1} + q_n q_{n-1})` with periodic wrap.
pub fn hamiltonian<T: Real>(state: &State<T>, config: &LatticeConfig<T>) -> T {
    state.check(config);
    let mut acc = T::zero();
    for i in 0..state.len() {
        let (pp, _) = neighbours(&state.p, i);
        let (qp, _) = neighbours(&state.q, i);
        acc += state.p[i] * pp + state.q[i] * qp;
    }
    acc * config.inv_h2()
}

/// `I = sum_n [q_n (p_{n+1} - p_{n-1}) - p_n (q_{n+1} - q_{n-1})] / (2h)`.
pub fn momentum<T: Real>(state: &State<T>, config: &LatticeConfig<T>) -> T {
    state.check(config);
    let mut acc = T::zero();
    for i in 0..state.len() {
        let (pp, pn) = neighbours(&state.p, i);
        let (qp, qn) = neighbours(&state.q, i);
        acc += state.q[i] * (pn - pp) - state.p[i] * (qn - qp);
    }
    acc / (T::lit(2.0) * config.mesh)
}

/// `(D v)_n = (v_{n+1} + v_{n-1}) / h^2`.
pub fn apply_gradient_matrix<T: Real>(v: &DVector<T>, mesh: T) -> DVector<T> {
    let inv_h2 = T::one() / (mesh * mesh);
    DVector::from_fn(v.len(), |i, _| {
        let (a, b) = neighbours(v, i);
        (a + b) * inv_h2
    })
}

/// `(Delta v)_n = (v_{n+1} - v_{n-1}) / (2h)`, so that `I = 2 q^T Delta p`.
pub fn apply_central_difference<T: Real>(v: &DVector<T>, mesh: T) -> DVector<T> {
    let inv_2h = T::one() / (T::lit(2.0) * mesh);
    DVector::from_fn(v.len(), |i, _| {
        let (a, b) = neighbours(v, i);
        (b - a) * inv_2h
    })
}

/// `grad H = (D p, D q)`.
pub fn grad_hamiltonian<T: Real>(state: &State<T>, config: &LatticeConfig<T>) -> Tangent<T> {
    state.check(config);
    Tangent {
        dp: apply_gradient_matrix(&state.p, config.mesh),
        dq: apply_gradient_matrix(&state.q, config.mesh),
    }
}

/// Diagonal of `M`: `m_n = 1 + gamma h^2 (p_n^2 + q_n^2)`.
pub fn nonlinear_diag<T: Real>(state: &State<T>, config: &LatticeConfig<T>) -> DVector<T> {
    state.check(config);
    nonlinear_vector(&state.p, &state.q, config.gamma, config.mesh)
}

pub(crate) fn nonlinear_vector<T: Real>(p: &DVector<T>, q: &DVector<T>, gamma: T, mesh: T) -> DVector<T> {
    let c = gamma * mesh * mesh;
    p.zip_map(q, |a, b| T::one() + c * (a * a + b * b))
}

/// Full right-hand side `S(z) grad H(z) - mu z`.
pub fn fom_rhs<T: Real>(state: &State<T>, config: &LatticeConfig<T>) -> Tangent<T> {
    rhs_with_damping(state, config, config.mu)
}

fn rhs_with_damping<T: Real>(state: &State<T>, config: &LatticeConfig<T>, mu: T) -> Tangent<T> {
    state.check(config);
    let n = state.len();
    let c = config.gamma * config.mesh * config.mesh;
    let inv_h2 = config.inv_h2();
    let mut dp = DVector::zeros(n);
    let mut dq = DVector::zeros(n);
    for i in 0..n {
        let (p, q) = (state.p[i], state.q[i]);
        let m = T::one() + c * (p * p + q * q);
        let (qp, qn) = neighbours(&state.q, i);
        let (pp, pn) = neighbours(&state.p, i);
        dp[i] = -m * (qn + qp) * inv_h2 - mu * p;
        dq[i] = m * (pn + pp) * inv_h2 - mu * q;
    }
    Tangent { dp, dq }
}

/// Exact Jacobian of [`fom_rhs`], banded with periodic corner blocks.
pub fn fom_rhs_jacobian<T: Real>(state: &State<T>, config: &LatticeConfig<T>) -> PeriodicBlockTridiagonal<T> {
    jacobian_with_damping(state, config, config.mu)
}

fn jacobian_with_damping<T: Real>(
    state: &State<T>,
    config: &LatticeConfig<T>,
    mu: T,
) -> PeriodicBlockTridiagonal<T> {
    state.check(config);
    let n = state.len();
    let inv_h2 = config.inv_h2();
    let two_gamma = T::lit(2.0) * config.gamma;
    let c = config.gamma * config.mesh * config.mesh;
    let mut jac = PeriodicBlockTridiagonal::zeros(n);
    for i in 0..n {
        let (p, q) = (state.p[i], state.q[i]);
        let m = T::one() + c * (p * p + q * q);
        let (qp, qn) = neighbours(&state.q, i);
        let (pp, pn) = neighbours(&state.p, i);
        let qs = qn + qp;
        let ps = pn + pp;
        // d(m_n)/dp_n = 2 gamma h^2 p_n, and the 1/h^2 cancels.
        jac.diag[i] = Matrix2::new(
            -two_gamma * p * qs - mu,
            -two_gamma * q * qs,
            two_gamma * p * ps,
            two_gamma * q * ps - mu,
        );
        let coupling = Matrix2::new(T::zero(), -m * inv_h2, m * inv_h2, T::zero());
        jac.lower[i] = coupling;
        jac.upper[i] = coupling;
    }
    jac
}

/// The full-order lattice as a skew-gradient system.
///
/// The vector field it exposes is the conservative part `S(z) grad H(z)`;
/// the damping `-mu z` is handled by the exponential midpoint stepper.
#[derive(Debug, Clone)]
pub struct FullOrderModel<T: Real> {
    pub config: LatticeConfig<T>,
}

impl<T: Real> FullOrderModel<T> {
    pub fn new(config: LatticeConfig<T>) -> Self {
        Self { config }
    }
}

impl<T: Real> crate::integrators::SkewGradientSystem<T> for FullOrderModel<T> {
    type Jacobian = PeriodicBlockTridiagonal<T>;

    fn dim(&self) -> usize {
        2 * self.config.n_sites
    }

    fn rhs(&self, z: &DVector<T>, t: T) -> DVector<T> {
        rhs_with_damping(&State::from_vector(z, t), &self.config, T::zero()).to_vector()
    }

    fn jacobian(&self, z: &DVector<T>, t: T) -> Self::Jacobian {
        jacobian_with_damping(&State::from_vector(z, t), &self.config, T::zero())
    }

    fn invariants(&self, z: &DVector<T>) -> Option<(T, T)> {
        let s = State::from_vector(z, T::zero());
        Some((hamiltonian(&s, &self.config), momentum(&s, &self.config)))
    }
}
