//! One-step integrators for skew-gradient systems.
//!
//! * [`implicit_midpoint_step`] solves `z1 - z0 = dt f((z0 + z1) / 2)`. For a
//!   quadratic Hamiltonian it coincides with the average vector field scheme
//!   and preserves `H` and every quadratic first integral.
//! * [`exponential_midpoint_step`] handles `dz/dt = f(z) - mu z` by stepping
//!   the rescaled variable `u = exp(mu (t - t_{k+1/2})) z` with the midpoint
//!   rule, so quadratic invariants decay by exactly `exp(-2 mu dt)` per step.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::linalg::ShiftedSolve;
use crate::scalar::Real;

/// Conservative vector field `f(z) = S(z) grad H(z)` plus its exact Jacobian.
///
/// Linear damping is not part of the system; it is supplied to the stepper.
pub trait SkewGradientSystem<T: Real> {
    type Jacobian: ShiftedSolve<T>;

    fn dim(&self) -> usize;

    fn rhs(&self, z: &DVector<T>, t: T) -> DVector<T>;

    fn jacobian(&self, z: &DVector<T>, t: T) -> Self::Jacobian;

    /// `(H, I)` evaluated at `z`, if the system knows its invariants.
    fn invariants(&self, _z: &DVector<T>) -> Option<(T, T)> {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolverStrategy {
    Newton,
    /// Picard iteration on the midpoint map.
    FixedPoint,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverOptions<T: Real> {
    /// Convergence threshold on the infinity norm of the step residual.
    pub abs_tol: T,
    pub max_iters: usize,
    pub strategy: SolverStrategy,
}

impl<T: Real> Default for SolverOptions<T> {
    fn default() -> Self {
        Self {
            abs_tol: T::lit(1e-12),
            max_iters: 50,
            strategy: SolverStrategy::Newton,
        }
    }
}

impl<T: Real> SolverOptions<T> {
    pub fn validate(&self) -> Result<()> {
        if !self.abs_tol.is_finite() || self.abs_tol <= T::zero() {
            return Err(Error::InvalidConfig("solver abs_tol must be positive".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidConfig("solver max_iters must be at least 1".into()));
        }
        Ok(())
    }
}

fn midpoint_residual<T: Real, S: SkewGradientSystem<T>>(
    system: &S,
    z0: &DVector<T>,
    z1: &DVector<T>,
    t_mid: T,
    dt: T,
) -> (DVector<T>, DVector<T>) {
    let mid = (z0 + z1) * T::lit(0.5);
    let r = z1 - z0 - system.rhs(&mid, t_mid) * dt;
    (r, mid)
}

/// Implicit midpoint step from `(t_k, z_k)` to `t_k + dt`.
pub fn implicit_midpoint_step<T: Real, S: SkewGradientSystem<T>>(
    system: &S,
    z_k: &DVector<T>,
    t_k: T,
    dt: T,
    opts: &SolverOptions<T>,
) -> Result<DVector<T>> {
    if z_k.len() != system.dim() {
        return Err(Error::DimensionMismatch {
            what: "integrator state",
            expected: system.dim(),
            found: z_k.len(),
        });
    }
    let t_mid = t_k + dt * T::lit(0.5);
    let half_dt = dt * T::lit(0.5);
    let mut z = z_k.clone();
    let mut residual_norm = T::zero();
    for _ in 0..=opts.max_iters {
        let (r, mid) = midpoint_residual(system, z_k, &z, t_mid, dt);
        residual_norm = r.amax();
        if !residual_norm.is_finite() {
            break;
        }
        if residual_norm <= opts.abs_tol {
            return Ok(z);
        }
        match opts.strategy {
            SolverStrategy::FixedPoint => z -= r,
            SolverStrategy::Newton => {
                let jac = system.jacobian(&mid, t_mid);
                let delta = jac
                    .solve_shifted(half_dt, &r)
                    .ok_or_else(|| Error::Singular("Newton iteration matrix".into()))?;
                z -= delta;
            }
        }
    }
    Err(Error::NonConvergence {
        step: None,
        iterations: opts.max_iters,
        residual: residual_norm.as_f64(),
    })
}

/// Exponential midpoint step for `dz/dt = f(z) - mu z`.
///
/// With `X0 = -mu dt / 2` and `X1 = mu dt / 2` this performs one midpoint
/// step on `u_k = exp(X0) z_k` and returns `exp(-X1) u_{k+1}`.
pub fn exponential_midpoint_step<T: Real, S: SkewGradientSystem<T>>(
    system: &S,
    z_k: &DVector<T>,
    t_k: T,
    dt: T,
    mu: T,
    opts: &SolverOptions<T>,
) -> Result<DVector<T>> {
    if mu < T::zero() {
        return Err(Error::InvalidArgument("damping rate must be nonnegative".into()));
    }
    let (x0, x1) = exponent_pair(mu, dt);
    let u_k = z_k * x0.exp();
    let u_next = implicit_midpoint_step(system, &u_k, t_k, dt, opts)?;
    Ok(u_next * (-x1).exp())
}

/// `(X0, X1) = (mu (t_k - t_{k+1/2}), mu (t_{k+1} - t_{k+1/2}))`.
pub fn exponent_pair<T: Real>(mu: T, dt: T) -> (T, T) {
    let half = mu * dt * T::lit(0.5);
    (-half, half)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Stepper<T: Real> {
    Midpoint,
    ExponentialMidpoint { mu: T },
}

impl<T: Real> Stepper<T> {
    /// Midpoint for `mu = 0`, exponential midpoint otherwise.
    pub fn for_damping(mu: T) -> Self {
        if mu == T::zero() {
            Stepper::Midpoint
        } else {
            Stepper::ExponentialMidpoint { mu }
        }
    }

    pub fn step<S: SkewGradientSystem<T>>(
        &self,
        system: &S,
        z: &DVector<T>,
        t: T,
        dt: T,
        opts: &SolverOptions<T>,
    ) -> Result<DVector<T>> {
        match *self {
            Stepper::Midpoint => implicit_midpoint_step(system, z, t, dt, opts),
            Stepper::ExponentialMidpoint { mu } => exponential_midpoint_step(system, z, t, dt, mu, opts),
        }
    }
}

/// Uniform time grid `t_k = t0 + k dt`, `k = 0..=steps`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimeGrid<T: Real> {
    pub t0: T,
    pub dt: T,
    pub steps: usize,
}

impl<T: Real> TimeGrid<T> {
    pub fn time(&self, k: usize) -> T {
        self.t0 + T::from_count(k) * self.dt
    }
}

/// Result of [`integrate`]: states every `stride` steps (always including
/// the initial state) and, when the system provides them, `(H, I)` at every step.
#[derive(Debug, Clone)]
pub struct Trajectory<T: Real> {
    pub grid: TimeGrid<T>,
    pub stride: usize,
    /// Step indices of the stored samples.
    pub sample_steps: Vec<usize>,
    pub samples: Vec<DVector<T>>,
    pub hamiltonian: Vec<T>,
    pub momentum: Vec<T>,
}

impl<T: Real> Trajectory<T> {
    /// Number of steps `K`.
    pub fn steps(&self) -> usize {
        self.grid.steps
    }

    pub fn sample_times(&self) -> Vec<T> {
        self.sample_steps.iter().map(|&k| self.grid.time(k)).collect()
    }

    pub fn last(&self) -> &DVector<T> {
        self.samples.last().expect("trajectory holds the initial state")
    }

    /// Step times `t_0..t_K`.
    pub fn step_times(&self) -> Vec<T> {
        (0..=self.grid.steps).map(|k| self.grid.time(k)).collect()
    }
}

/// Marches `steps` steps of size `dt` from `z0`; a sample is stored at every
/// step index divisible by `stride` (and at `k = 0`).
pub fn integrate<T: Real, S: SkewGradientSystem<T>>(
    system: &S,
    z0: &DVector<T>,
    stepper: Stepper<T>,
    grid: TimeGrid<T>,
    stride: usize,
    opts: &SolverOptions<T>,
) -> Result<Trajectory<T>> {
    opts.validate()?;
    if stride == 0 {
        return Err(Error::InvalidArgument("snapshot stride must be at least 1".into()));
    }
    if grid.steps == 0 {
        return Err(Error::InvalidArgument("trajectory needs at least one step".into()));
    }
    let mut traj = Trajectory {
        grid,
        stride,
        sample_steps: vec![0],
        samples: vec![z0.clone()],
        hamiltonian: Vec::new(),
        momentum: Vec::new(),
    };
    let record = |traj: &mut Trajectory<T>, z: &DVector<T>| {
        if let Some((h, i)) = system.invariants(z) {
            traj.hamiltonian.push(h);
            traj.momentum.push(i);
        }
    };
    record(&mut traj, z0);
    let mut z = z0.clone();
    for k in 0..grid.steps {
        z = stepper
            .step(system, &z, grid.time(k), grid.dt, opts)
            .map_err(|e| match e {
                Error::NonConvergence { iterations, residual, .. } => Error::NonConvergence {
                    step: Some(k + 1),
                    iterations,
                    residual,
                },
                other => other,
            })?;
        record(&mut traj, &z);
        if (k + 1) % stride == 0 {
            traj.sample_steps.push(k + 1);
            traj.samples.push(z.clone());
        }
    }
    Ok(traj)
}
