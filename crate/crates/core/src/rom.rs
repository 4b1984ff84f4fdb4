//! Offline assembly and online evaluation of the POD and POD-DEIM reduced
//! skew-gradient systems.
//!
//! With `z_r = (p_r, q_r)`, `p ~ V_p p_r`, `q ~ V_q q_r` and the reduced
//! gradients `A_p = V_p^T D V_p`, `A_q = V_q^T D V_q`, the POD field is
//!
//! ```text
//! dp_r/dt = -V_p^T [ m(V_p p_r, V_q q_r) .* (V_q A_q q_r) ] - mu p_r
//! dq_r/dt = +V_q^T [ m(V_p p_r, V_q q_r) .* (V_p A_p p_r) ] - mu q_r
//! ```
//!
//! The DEIM field replaces `m` by `Psi m_r`, where `m_r` is `m` sampled at the
//! selected sites, and contracts everything of size `N` into the constants
//! `kron_p = V_p^T G_p` and `kron_q = V_q^T G_q` with
//! `G_p(i, j r_q + k) = Psi(i, j) (V_q A_q)(i, k)`.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::integrators::SkewGradientSystem;
use crate::lattice::{apply_central_difference, apply_gradient_matrix, nonlinear_vector, LatticeConfig, State};
use crate::reduction::{select_rows, DeimOperator};
use crate::scalar::Real;

/// Sites processed per block during the offline Kronecker assembly.
pub const DEFAULT_ASSEMBLY_BLOCK: usize = 64;

/// Hyper-reduction data of the POD-DEIM model.
#[derive(Debug, Clone, PartialEq)]
pub struct DeimTerms<T: Real> {
    pub points: Vec<usize>,
    /// `P^T V_p`, `N_d x r_p`.
    pub sampled_rows_p: DMatrix<T>,
    /// `P^T V_q`, `N_d x r_q`.
    pub sampled_rows_q: DMatrix<T>,
    /// `r_p x (N_d r_q)`.
    pub kron_p: DMatrix<T>,
    /// `r_q x (N_d r_p)`.
    pub kron_q: DMatrix<T>,
}

impl<T: Real> DeimTerms<T> {
    pub fn n_points(&self) -> usize {
        self.points.len()
    }
}

/// Everything the online stage needs. Immutable once assembled.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedModel<T: Real> {
    pub v_p: DMatrix<T>,
    pub v_q: DMatrix<T>,
    /// `V_p^T D V_p`.
    pub grad_p: DMatrix<T>,
    /// `V_q^T D V_q`.
    pub grad_q: DMatrix<T>,
    /// `V_q^T Delta V_p`, so that `I(V_z z_r) = 2 q_r^T C p_r`.
    pub momentum_cross: DMatrix<T>,
    pub deim: Option<DeimTerms<T>>,
    pub gamma: T,
    pub mesh: T,
    pub mu: T,
}

fn apply_columns<T: Real>(v: &DMatrix<T>, f: impl Fn(&DVector<T>) -> DVector<T>) -> DMatrix<T> {
    let mut out = DMatrix::zeros(v.nrows(), v.ncols());
    for c in 0..v.ncols() {
        out.set_column(c, &f(&v.column(c).into_owned()));
    }
    out
}

/// Streams over sites in blocks of `block` rows, accumulating
/// `V_p^T G_p` and `V_q^T G_q` in site order. The matricized tensor is never
/// formed; the result does not depend on `block`.
pub fn assemble_kron_constants<T: Real>(
    v_p: &DMatrix<T>,
    v_q: &DMatrix<T>,
    psi: &DMatrix<T>,
    grad_p: &DMatrix<T>,
    grad_q: &DMatrix<T>,
    block: usize,
) -> Result<(DMatrix<T>, DMatrix<T>)> {
    let n = v_p.nrows();
    if v_q.nrows() != n || psi.nrows() != n {
        return Err(Error::DimensionMismatch { what: "basis rows", expected: n, found: v_q.nrows().min(psi.nrows()) });
    }
    if block == 0 {
        return Err(Error::InvalidArgument("assembly block size must be positive".into()));
    }
    let (rp, rq, nd) = (v_p.ncols(), v_q.ncols(), psi.ncols());
    // Right factors V_q A_q and V_p A_p.
    let right_q = v_q * grad_q;
    let right_p = v_p * grad_p;
    let kron_p = kron_block_sum(v_p, psi, &right_q, rp, rq, nd, block);
    let kron_q = kron_block_sum(v_q, psi, &right_p, rq, rp, nd, block);
    Ok((kron_p, kron_q))
}

fn kron_block_sum<T: Real>(
    left: &DMatrix<T>,
    psi: &DMatrix<T>,
    right: &DMatrix<T>,
    r_left: usize,
    r_right: usize,
    nd: usize,
    block: usize,
) -> DMatrix<T> {
    let n = left.nrows();
    let width = nd * r_right;
    let mut out = DMatrix::zeros(r_left, width);
    let mut g_rows = DMatrix::zeros(block.min(n), width);
    let mut start = 0;
    while start < n {
        let end = (start + block).min(n);
        // Rows of G: vec of the outer product Psi(i,:)^T right(i,:).
        for i in start..end {
            for j in 0..nd {
                let a = psi[(i, j)];
                for k in 0..r_right {
                    g_rows[(i - start, j * r_right + k)] = a * right[(i, k)];
                }
            }
        }
        for i in start..end {
            for col in 0..width {
                let g = g_rows[(i - start, col)];
                for l in 0..r_left {
                    out[(l, col)] += left[(i, l)] * g;
                }
            }
        }
        start = end;
    }
    out
}

impl<T: Real> ReducedModel<T> {
    /// Offline stage: reduced gradients, momentum form and, when a DEIM
    /// operator is given, the sampled rows and Kronecker constants.
    pub fn assemble(
        config: &LatticeConfig<T>,
        v_p: DMatrix<T>,
        v_q: DMatrix<T>,
        deim: Option<&DeimOperator<T>>,
        block: usize,
    ) -> Result<Self> {
        config.validate()?;
        let n = config.n_sites;
        for (what, v) in [("V_p rows", &v_p), ("V_q rows", &v_q)] {
            if v.nrows() != n {
                return Err(Error::DimensionMismatch { what, expected: n, found: v.nrows() });
            }
            if v.ncols() == 0 {
                return Err(Error::InvalidArgument(format!("{what}: empty basis")));
            }
        }
        let h = config.mesh;
        let dv_p = apply_columns(&v_p, |c| apply_gradient_matrix(c, h));
        let dv_q = apply_columns(&v_q, |c| apply_gradient_matrix(c, h));
        let grad_p = v_p.tr_mul(&dv_p);
        let grad_q = v_q.tr_mul(&dv_q);
        let momentum_cross = v_q.tr_mul(&apply_columns(&v_p, |c| apply_central_difference(c, h)));
        let deim = match deim {
            None => None,
            Some(op) => {
                if op.interpolator.nrows() != n {
                    return Err(Error::DimensionMismatch {
                        what: "DEIM interpolator rows",
                        expected: n,
                        found: op.interpolator.nrows(),
                    });
                }
                let (kron_p, kron_q) = assemble_kron_constants(&v_p, &v_q, &op.interpolator, &grad_p, &grad_q, block)?;
                Some(DeimTerms {
                    points: op.points.clone(),
                    sampled_rows_p: select_rows(&v_p, &op.points),
                    sampled_rows_q: select_rows(&v_q, &op.points),
                    kron_p,
                    kron_q,
                })
            }
        };
        let model = Self {
            v_p,
            v_q,
            grad_p,
            grad_q,
            momentum_cross,
            deim,
            gamma: config.gamma,
            mesh: config.mesh,
            mu: config.mu,
        };
        model.validate()?;
        Ok(model)
    }

    /// Shape and finiteness checks, used after assembly and after loading.
    pub fn validate(&self) -> Result<()> {
        let (n, rp, rq) = (self.v_p.nrows(), self.p_modes(), self.q_modes());
        let check = |what: &'static str, m: &DMatrix<T>, shape: (usize, usize)| -> Result<()> {
            if m.shape() != shape {
                return Err(Error::DimensionMismatch {
                    what,
                    expected: shape.0 * shape.1,
                    found: m.nrows() * m.ncols(),
                });
            }
            if m.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(what));
            }
            Ok(())
        };
        check("V_q", &self.v_q, (n, rq))?;
        check("reduced gradient p", &self.grad_p, (rp, rp))?;
        check("reduced gradient q", &self.grad_q, (rq, rq))?;
        check("momentum form", &self.momentum_cross, (rq, rp))?;
        if let Some(d) = &self.deim {
            let nd = d.points.len();
            if nd == 0 || d.points.iter().any(|&i| i >= n) {
                return Err(Error::InvalidArgument("DEIM points out of range".into()));
            }
            check("sampled rows p", &d.sampled_rows_p, (nd, rp))?;
            check("sampled rows q", &d.sampled_rows_q, (nd, rq))?;
            check("kron_p", &d.kron_p, (rp, nd * rq))?;
            check("kron_q", &d.kron_q, (rq, nd * rp))?;
        }
        if !(self.gamma.is_finite() && self.mesh > T::zero() && self.mu >= T::zero()) {
            return Err(Error::InvalidConfig("reduced model parameters".into()));
        }
        Ok(())
    }

    pub fn n_sites(&self) -> usize {
        self.v_p.nrows()
    }

    pub fn p_modes(&self) -> usize {
        self.v_p.ncols()
    }

    pub fn q_modes(&self) -> usize {
        self.v_q.ncols()
    }

    pub fn dim(&self) -> usize {
        self.p_modes() + self.q_modes()
    }

    fn nonlinear_coefficient(&self) -> T {
        self.gamma * self.mesh * self.mesh
    }

    /// `H(V_z z_r)` from the reduced quadratic forms only.
    pub fn hamiltonian(&self, rs: &ReducedState<T>) -> T {
        let half = T::lit(0.5);
        half * rs.p_r.dot(&(&self.grad_p * &rs.p_r)) + half * rs.q_r.dot(&(&self.grad_q * &rs.q_r))
    }

    /// `I(V_z z_r)` from the reduced quadratic form only.
    pub fn momentum(&self, rs: &ReducedState<T>) -> T {
        T::lit(2.0) * rs.q_r.dot(&(&self.momentum_cross * &rs.p_r))
    }

    pub fn split(&self, z: &DVector<T>) -> ReducedState<T> {
        ReducedState::from_vector(z, self.p_modes(), T::zero())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedState<T: Real> {
    pub p_r: DVector<T>,
    pub q_r: DVector<T>,
    pub t: T,
}

impl<T: Real> ReducedState<T> {
    pub fn to_vector(&self) -> DVector<T> {
        let mut z = DVector::zeros(self.p_r.len() + self.q_r.len());
        z.rows_mut(0, self.p_r.len()).copy_from(&self.p_r);
        z.rows_mut(self.p_r.len(), self.q_r.len()).copy_from(&self.q_r);
        z
    }

    pub fn from_vector(z: &DVector<T>, p_modes: usize, t: T) -> Self {
        Self {
            p_r: z.rows(0, p_modes).into_owned(),
            q_r: z.rows(p_modes, z.len() - p_modes).into_owned(),
            t,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReducedTangent<T: Real> {
    pub dp_r: DVector<T>,
    pub dq_r: DVector<T>,
}

impl<T: Real> ReducedTangent<T> {
    pub fn to_vector(&self) -> DVector<T> {
        ReducedState { p_r: self.dp_r.clone(), q_r: self.dq_r.clone(), t: T::zero() }.to_vector()
    }
}

/// Galerkin projection `p_r = V_p^T p`, `q_r = V_q^T q`.
pub fn project_initial<T: Real>(v_p: &DMatrix<T>, v_q: &DMatrix<T>, state: &State<T>) -> Result<ReducedState<T>> {
    if v_p.nrows() != state.len() || v_q.nrows() != state.len() {
        return Err(Error::DimensionMismatch { what: "basis rows", expected: state.len(), found: v_p.nrows() });
    }
    Ok(ReducedState { p_r: v_p.tr_mul(&state.p), q_r: v_q.tr_mul(&state.q), t: state.t })
}

/// `z_hat = V_z z_r`.
pub fn lift<T: Real>(model: &ReducedModel<T>, rs: &ReducedState<T>) -> State<T> {
    State { p: &model.v_p * &rs.p_r, q: &model.v_q * &rs.q_r, t: rs.t }
}

struct PodParts<T: Real> {
    p: DVector<T>,
    q: DVector<T>,
    m: DVector<T>,
    gp: DVector<T>,
    gq: DVector<T>,
}

fn pod_parts<T: Real>(model: &ReducedModel<T>, rs: &ReducedState<T>) -> PodParts<T> {
    let p = &model.v_p * &rs.p_r;
    let q = &model.v_q * &rs.q_r;
    let m = nonlinear_vector(&p, &q, model.gamma, model.mesh);
    let gp = &model.v_p * (&model.grad_p * &rs.p_r);
    let gq = &model.v_q * (&model.grad_q * &rs.q_r);
    PodParts { p, q, m, gp, gq }
}

fn pod_field<T: Real>(model: &ReducedModel<T>, rs: &ReducedState<T>, mu: T) -> ReducedTangent<T> {
    let parts = pod_parts(model, rs);
    let dp_r = -model.v_p.tr_mul(&parts.m.component_mul(&parts.gq)) - &rs.p_r * mu;
    let dq_r = model.v_q.tr_mul(&parts.m.component_mul(&parts.gp)) - &rs.q_r * mu;
    ReducedTangent { dp_r, dq_r }
}

/// POD reduced field, damping included.
pub fn pod_rhs<T: Real>(model: &ReducedModel<T>, rs: &ReducedState<T>) -> ReducedTangent<T> {
    pod_field(model, rs, model.mu)
}

fn pod_jacobian<T: Real>(model: &ReducedModel<T>, rs: &ReducedState<T>) -> DMatrix<T> {
    let PodParts { p, q, m, gp, gq } = pod_parts(model, rs);
    let two_c = T::lit(2.0) * model.nonlinear_coefficient();
    let (rp, rq) = (model.p_modes(), model.q_modes());
    let scale_rows = |d: &DVector<T>, v: &DMatrix<T>| -> DMatrix<T> {
        let mut out = v.clone();
        for (i, mut row) in out.row_iter_mut().enumerate() {
            row *= d[i];
        }
        out
    };
    let vq_aq = &model.v_q * &model.grad_q;
    let vp_ap = &model.v_p * &model.grad_p;
    let gq_p = gq.component_mul(&p) * two_c;
    let gq_q = gq.component_mul(&q) * two_c;
    let gp_p = gp.component_mul(&p) * two_c;
    let gp_q = gp.component_mul(&q) * two_c;
    let j_pp = -model.v_p.tr_mul(&scale_rows(&gq_p, &model.v_p));
    let j_pq = -model.v_p.tr_mul(&(scale_rows(&m, &vq_aq) + scale_rows(&gq_q, &model.v_q)));
    let j_qp = model.v_q.tr_mul(&(scale_rows(&m, &vp_ap) + scale_rows(&gp_p, &model.v_p)));
    let j_qq = model.v_q.tr_mul(&scale_rows(&gp_q, &model.v_q));
    let mut jac = DMatrix::zeros(rp + rq, rp + rq);
    jac.view_mut((0, 0), (rp, rp)).copy_from(&j_pp);
    jac.view_mut((0, rp), (rp, rq)).copy_from(&j_pq);
    jac.view_mut((rp, 0), (rq, rp)).copy_from(&j_qp);
    jac.view_mut((rp, rp), (rq, rq)).copy_from(&j_qq);
    jac
}

fn deim_terms<T: Real>(model: &ReducedModel<T>) -> Result<&DeimTerms<T>> {
    model
        .deim
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("reduced model has no DEIM terms".into()))
}

struct DeimParts<T: Real> {
    ap: DVector<T>,
    bq: DVector<T>,
    m_r: DVector<T>,
}

fn deim_parts<T: Real>(model: &ReducedModel<T>, d: &DeimTerms<T>, rs: &ReducedState<T>) -> DeimParts<T> {
    let ap = &d.sampled_rows_p * &rs.p_r;
    let bq = &d.sampled_rows_q * &rs.q_r;
    let c = model.nonlinear_coefficient();
    let m_r = ap.zip_map(&bq, |a, b| T::one() + c * (a * a + b * b));
    DeimParts { ap, bq, m_r }
}

/// `kron * (a (x) b)` with index `j len(b) + k`.
fn kron_apply<T: Real>(kron: &DMatrix<T>, a: &DVector<T>, b: &DVector<T>) -> DVector<T> {
    let nb = b.len();
    let x = DVector::from_fn(a.len() * nb, |idx, _| a[idx / nb] * b[idx % nb]);
    kron * x
}

fn deim_field<T: Real>(model: &ReducedModel<T>, d: &DeimTerms<T>, rs: &ReducedState<T>, mu: T) -> ReducedTangent<T> {
    let DeimParts { m_r, .. } = deim_parts(model, d, rs);
    let dp_r = -kron_apply(&d.kron_p, &m_r, &rs.q_r) - &rs.p_r * mu;
    let dq_r = kron_apply(&d.kron_q, &m_r, &rs.p_r) - &rs.q_r * mu;
    ReducedTangent { dp_r, dq_r }
}

/// POD-DEIM reduced field, damping included. Only reduced-size quantities
/// are formed.
pub fn deim_rhs<T: Real>(model: &ReducedModel<T>, rs: &ReducedState<T>) -> Result<ReducedTangent<T>> {
    let d = deim_terms(model)?;
    Ok(deim_field(model, d, rs, model.mu))
}

/// Splits `kron (m (x) x)` into `E(l, j) = sum_k K(l, j r + k) x_k` and
/// `F(l, k) = sum_j K(l, j r + k) m_j`.
fn kron_partials<T: Real>(kron: &DMatrix<T>, m: &DVector<T>, x: &DVector<T>) -> (DMatrix<T>, DMatrix<T>) {
    let (rows, nd, r) = (kron.nrows(), m.len(), x.len());
    let mut e = DMatrix::zeros(rows, nd);
    let mut f = DMatrix::zeros(rows, r);
    for j in 0..nd {
        for k in 0..r {
            let col = kron.column(j * r + k);
            for l in 0..rows {
                e[(l, j)] += col[l] * x[k];
                f[(l, k)] += col[l] * m[j];
            }
        }
    }
    (e, f)
}

fn deim_jacobian<T: Real>(model: &ReducedModel<T>, d: &DeimTerms<T>, rs: &ReducedState<T>) -> DMatrix<T> {
    let DeimParts { ap, bq, m_r } = deim_parts(model, d, rs);
    let two_c = T::lit(2.0) * model.nonlinear_coefficient();
    let (rp, rq) = (model.p_modes(), model.q_modes());
    let weighted = |w: &DVector<T>, rows: &DMatrix<T>| -> DMatrix<T> {
        let mut out = rows.clone();
        for (j, mut row) in out.row_iter_mut().enumerate() {
            row *= two_c * w[j];
        }
        out
    };
    // dm_r/dp_r and dm_r/dq_r.
    let dm_dp = weighted(&ap, &d.sampled_rows_p);
    let dm_dq = weighted(&bq, &d.sampled_rows_q);
    let (e_p, f_p) = kron_partials(&d.kron_p, &m_r, &rs.q_r);
    let (e_q, f_q) = kron_partials(&d.kron_q, &m_r, &rs.p_r);
    let mut jac = DMatrix::zeros(rp + rq, rp + rq);
    jac.view_mut((0, 0), (rp, rp)).copy_from(&(-(&e_p * &dm_dp)));
    jac.view_mut((0, rp), (rp, rq)).copy_from(&(-(f_p + &e_p * &dm_dq)));
    jac.view_mut((rp, 0), (rq, rp)).copy_from(&(f_q + &e_q * &dm_dp));
    jac.view_mut((rp, rp), (rq, rq)).copy_from(&(&e_q * &dm_dq));
    jac
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Variant {
    Pod,
    PodDeim,
}

impl Variant {
    pub fn label(&self) -> &'static str {
        match self {
            Variant::Pod => "pod",
            Variant::PodDeim => "pod_deim",
        }
    }
}

/// A reduced model exposed to the integrators. As for the full-order model,
/// the field is the conservative part; damping goes to the stepper.
#[derive(Debug, Clone, Copy)]
pub struct ReducedSystem<'a, T: Real> {
    pub model: &'a ReducedModel<T>,
    pub variant: Variant,
}

pub fn reduced_system<T: Real>(model: &ReducedModel<T>, variant: Variant) -> Result<ReducedSystem<'_, T>> {
    if variant == Variant::PodDeim {
        deim_terms(model)?;
    }
    Ok(ReducedSystem { model, variant })
}

impl<T: Real> SkewGradientSystem<T> for ReducedSystem<'_, T> {
    type Jacobian = DMatrix<T>;

    fn dim(&self) -> usize {
        self.model.dim()
    }

    fn rhs(&self, z: &DVector<T>, _t: T) -> DVector<T> {
        let rs = self.model.split(z);
        match (self.variant, &self.model.deim) {
            (Variant::PodDeim, Some(d)) => deim_field(self.model, d, &rs, T::zero()).to_vector(),
            _ => pod_field(self.model, &rs, T::zero()).to_vector(),
        }
    }

    fn jacobian(&self, z: &DVector<T>, _t: T) -> DMatrix<T> {
        let rs = self.model.split(z);
        match (self.variant, &self.model.deim) {
            (Variant::PodDeim, Some(d)) => deim_jacobian(self.model, d, &rs),
            _ => pod_jacobian(self.model, &rs),
        }
    }

    fn invariants(&self, z: &DVector<T>) -> Option<(T, T)> {
        let rs = self.model.split(z);
        Some((self.model.hamiltonian(&rs), self.model.momentum(&rs)))
    }
}
