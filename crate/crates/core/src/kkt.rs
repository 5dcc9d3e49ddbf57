//! Structured linear algebra for the primal-dual Newton system
//!
//! ```text
//! ℳ = [ Q  Gᵀ Hᵀ 0 ]      ℳ·(Δz, Δλ, Δμ, Δs) = −(q̂, ĝ, ĥ, m̂)
//!     [ G  0  0  0 ]
//!     [ H  0  0  I ]
//!     [ 0  0  S  M ]
//! ```
//!
//! The slack and inequality-multiplier blocks are eliminated, leaving the
//! reduced matrix `M̃ = [Q + HᵀS⁻¹MH, Gᵀ; G, 0]`, which is factorized by a
//! backward Riccati recursion over the stages. The recursion only needs the
//! reduced Hessian to be positive definite on the null space of the
//! dynamics, so indefinite stage Hessians are fine.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, Result};
use crate::nlp::{Iterate, NlpDims};
use crate::ocp::{OcpDimensions, StageQpData};

/// Relative pivot threshold on the control-control block.
pub const PIVOT_THRESHOLD: f64 = 1e-12;

/// Columns processed per traversal in multi-rhs solves.
pub const PANEL_WIDTH: usize = 16;

/// Dense oracle size limit on `n_w`.
pub const DENSE_ORACLE_LIMIT: usize = 2000;

/// Diagonal of `S⁻¹M` together with the `μ`, `s` it was built from.
#[derive(Debug, Clone, PartialEq)]
pub struct BarrierWeights {
    pub d: DVector<f64>,
    pub mu: DVector<f64>,
    pub s: DVector<f64>,
}

impl BarrierWeights {
    pub fn new(mu: &DVector<f64>, s: &DVector<f64>) -> Result<Self> {
        check_len("s", mu.len(), s.len())?;
        for (i, (&m, &si)) in mu.iter().zip(s.iter()).enumerate() {
            if !(m > 0.0 && si > 0.0 && m.is_finite() && si.is_finite()) {
                return Err(Error::Domain(format!(
                    "barrier weights need mu, s > 0 (index {i}: mu = {m:e}, s = {si:e})"
                )));
            }
        }
        let d = mu.component_div(s);
        if d.iter().any(|v| !v.is_finite()) {
            return Err(Error::Domain("barrier weight overflow".into()));
        }
        Ok(BarrierWeights {
            d,
            mu: mu.clone(),
            s: s.clone(),
        })
    }

    pub fn len(&self) -> usize {
        self.d.len()
    }

    pub fn is_empty(&self) -> bool {
        self.d.is_empty()
    }
}

/// Stage blocks of `M̃`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedKkt {
    pub dims: OcpDimensions,
    /// `Q̃_n = Q_n + [C_n D_n]ᵀ diag(d) [C_n D_n]` for `n < N`.
    pub q: Vec<DMatrix<f64>>,
    pub q_terminal: DMatrix<f64>,
    pub a: Vec<DMatrix<f64>>,
    pub b: Vec<DMatrix<f64>>,
}

pub fn assemble_reduced(
    qp: &StageQpData,
    mu: &DVector<f64>,
    s: &DVector<f64>,
) -> Result<ReducedKkt> {
    let dims = qp.dims;
    check_len("mu", dims.nh_total(), mu.len())?;
    let weights = BarrierWeights::new(mu, s)?;
    Ok(assemble_with_weights(qp, &weights))
}

pub(crate) fn assemble_with_weights(qp: &StageQpData, weights: &BarrierWeights) -> ReducedKkt {
    let dims = qp.dims;
    let (nx, nu) = (dims.nx, dims.nu);
    let mut q = Vec::with_capacity(dims.horizon);
    for (n, st) in qp.stages.iter().enumerate() {
        let mut h = DMatrix::zeros(dims.nh, nx + nu);
        h.columns_mut(0, nx).copy_from(&st.c);
        h.columns_mut(nx, nu).copy_from(&st.d);
        let d = weights.d.rows(dims.h_offset(n), dims.nh);
        let mut qt = st.hess.clone();
        add_weighted_gram(&mut qt, &h, d.as_slice());
        q.push(qt);
    }
    let mut q_terminal = qp.terminal.hess.clone();
    let d = weights
        .d
        .rows(dims.h_offset(dims.horizon), dims.nh_terminal);
    add_weighted_gram(&mut q_terminal, &qp.terminal.c, d.as_slice());
    ReducedKkt {
        dims,
        q,
        q_terminal,
        a: qp.stages.iter().map(|st| st.a.clone()).collect(),
        b: qp.stages.iter().map(|st| st.b.clone()).collect(),
    }
}

/// `target += Hᵀ diag(d) H`.
fn add_weighted_gram(target: &mut DMatrix<f64>, h: &DMatrix<f64>, d: &[f64]) {
    if h.nrows() == 0 {
        return;
    }
    let mut scaled = h.clone();
    for (i, &di) in d.iter().enumerate() {
        scaled.row_mut(i).scale_mut(di);
    }
    target.gemm_tr(1.0, h, &scaled, 1.0);
}

impl ReducedKkt {
    /// Dense `M̃` over `(z, λ)`.
    pub fn to_dense(&self) -> DMatrix<f64> {
        let d = self.dims;
        let (nz, ng, nx, nu) = (d.nz(), d.ng(), d.nx, d.nu);
        let mut m = DMatrix::zeros(nz + ng, nz + ng);
        let put_g = |m: &mut DMatrix<f64>, r: usize, c: usize, blk: &DMatrix<f64>| {
            m.view_mut((nz + r, c), blk.shape()).copy_from(blk);
            m.view_mut((c, nz + r), (blk.ncols(), blk.nrows()))
                .copy_from(&blk.transpose());
        };
        let eye = DMatrix::<f64>::identity(nx, nx);
        put_g(&mut m, 0, 0, &eye);
        for n in 0..d.horizon {
            let xo = d.x_offset(n);
            m.view_mut((xo, xo), (nx + nu, nx + nu)).copy_from(&self.q[n]);
            let row = d.lam_offset(n + 1);
            put_g(&mut m, row, xo, &self.a[n]);
            put_g(&mut m, row, d.u_offset(n), &self.b[n]);
            put_g(&mut m, row, d.x_offset(n + 1), &(-&eye));
        }
        let xo = d.x_offset(d.horizon);
        m.view_mut((xo, xo), (nx, nx)).copy_from(&self.q_terminal);
        m
    }
}

/// Backward Riccati recursion of `M̃`, reusable for any number of solves.
#[derive(Debug, Clone)]
pub struct RiccatiFactorization {
    dims: OcpDimensions,
    /// Cost-to-go `P_n`, `n = 0..=N`.
    pub p: Vec<DMatrix<f64>>,
    /// Feedback gains `K_n = −R̄_n⁻¹ S̄_n`.
    pub k: Vec<DMatrix<f64>>,
    /// Lower Cholesky factor of `R̄_n = Q̃_uu + BᵀP_{n+1}B`.
    chol: Vec<DMatrix<f64>>,
    /// `S̄_n = Q̃_ux + BᵀP_{n+1}A`.
    sbar: Vec<DMatrix<f64>>,
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

/// Cholesky factor; each pivot is checked against its own diagonal entry,
/// so a few huge barrier weights do not mask the other columns.
fn checked_cholesky(r: &DMatrix<f64>, stage: usize) -> Result<DMatrix<f64>> {
    let n = r.nrows();
    let mut l = DMatrix::zeros(n, n);
    for j in 0..n {
        let mut pivot = r[(j, j)];
        for k in 0..j {
            pivot -= l[(j, k)] * l[(j, k)];
        }
        if !(pivot > PIVOT_THRESHOLD * r[(j, j)].abs()) || !pivot.is_finite() {
            return Err(Error::Breakdown { stage, pivot });
        }
        let root = pivot.sqrt();
        l[(j, j)] = root;
        for i in j + 1..n {
            let mut v = r[(i, j)];
            for k in 0..j {
                v -= l[(i, k)] * l[(j, k)];
            }
            l[(i, j)] = v / root;
        }
    }
    Ok(l)
}

/// Overwrites `b` with `(LLᵀ)⁻¹ b`.
fn chol_solve(l: &DMatrix<f64>, b: &mut DMatrix<f64>) {
    if l.nrows() == 0 {
        return;
    }
    l.solve_lower_triangular_mut(b);
    l.tr_solve_lower_triangular_mut(b);
}

pub fn riccati_factorize(red: &ReducedKkt) -> Result<RiccatiFactorization> {
    let d = red.dims;
    let (nx, nu) = (d.nx, d.nu);
    let n_stages = d.horizon;
    let mut p = vec![DMatrix::zeros(nx, nx); n_stages + 1];
    let mut k = vec![DMatrix::zeros(nu, nx); n_stages];
    let mut chol = vec![DMatrix::zeros(nu, nu); n_stages];
    let mut sbar = vec![DMatrix::zeros(nu, nx); n_stages];
    let mut pn = red.q_terminal.clone();
    symmetrize(&mut pn);
    p[n_stages] = pn;
    for n in (0..n_stages).rev() {
        let q = &red.q[n];
        let (a, b) = (&red.a[n], &red.b[n]);
        let pa = &p[n + 1] * a;
        let pb = &p[n + 1] * b;
        let mut rbar = q.view((nx, nx), (nu, nu)).into_owned();
        rbar.gemm_tr(1.0, b, &pb, 1.0);
        symmetrize(&mut rbar);
        let mut s_n = q.view((nx, 0), (nu, nx)).into_owned();
        s_n.gemm_tr(1.0, b, &pa, 1.0);
        let l = checked_cholesky(&rbar, n)?;
        let mut gain = s_n.clone();
        chol_solve(&l, &mut gain);
        gain.neg_mut();
        let mut pnew = q.view((0, 0), (nx, nx)).into_owned();
        pnew.gemm_tr(1.0, a, &pa, 1.0);
        pnew.gemm_tr(1.0, &s_n, &gain, 1.0);
        symmetrize(&mut pnew);
        if pnew.iter().any(|v| !v.is_finite()) {
            return Err(Error::Breakdown {
                stage: n,
                pivot: f64::NAN,
            });
        }
        p[n] = pnew;
        k[n] = gain;
        chol[n] = l;
        sbar[n] = s_n;
    }
    Ok(RiccatiFactorization {
        dims: d,
        p,
        k,
        chol,
        sbar,
    })
}

impl RiccatiFactorization {
    pub fn dims(&self) -> OcpDimensions {
        self.dims
    }

    /// Solves `M̃·(dz, dλ) = −(r_z, r_λ)` for every column of the panels.
    pub fn solve_panel(
        &self,
        red: &ReducedKkt,
        r_z: &DMatrix<f64>,
        r_lam: &DMatrix<f64>,
    ) -> (DMatrix<f64>, DMatrix<f64>) {
        let d = self.dims;
        let m = r_z.ncols();
        let mut dz = DMatrix::zeros(d.nz(), m);
        let mut dlam = DMatrix::zeros(d.ng(), m);
        let mut start = 0;
        while start < m {
            let w = PANEL_WIDTH.min(m - start);
            let (z, l) = self.solve_block(
                red,
                &r_z.columns(start, w).into_owned(),
                &r_lam.columns(start, w).into_owned(),
            );
            dz.columns_mut(start, w).copy_from(&z);
            dlam.columns_mut(start, w).copy_from(&l);
            start += w;
        }
        (dz, dlam)
    }

    fn solve_block(
        &self,
        red: &ReducedKkt,
        r_z: &DMatrix<f64>,
        r_lam: &DMatrix<f64>,
    ) -> (DMatrix<f64>, DMatrix<f64>) {
        let d = self.dims;
        let (nx, nu, n_stages) = (d.nx, d.nu, d.horizon);
        let m = r_z.ncols();
        let mut pvec = vec![DMatrix::zeros(nx, m); n_stages + 1];
        let mut kvec = vec![DMatrix::zeros(nu, m); n_stages];
        pvec[n_stages] = r_z.rows(d.x_offset(n_stages), nx).into_owned();
        for n in (0..n_stages).rev() {
            let c = r_lam.rows(d.lam_offset(n + 1), nx);
            let mut t = pvec[n + 1].clone();
            t.gemm(1.0, &self.p[n + 1], &c, 1.0);
            let mut g = r_z.rows(d.u_offset(n), nu).into_owned();
            g.gemm_tr(1.0, &red.b[n], &t, 1.0);
            chol_solve(&self.chol[n], &mut g);
            g.neg_mut();
            let mut pn = r_z.rows(d.x_offset(n), nx).into_owned();
            pn.gemm_tr(1.0, &red.a[n], &t, 1.0);
            pn.gemm_tr(1.0, &self.sbar[n], &g, 1.0);
            pvec[n] = pn;
            kvec[n] = g;
        }
        let mut dz = DMatrix::zeros(d.nz(), m);
        let mut dlam = DMatrix::zeros(d.ng(), m);
        let mut dx = -r_lam.rows(0, nx).into_owned();
        let mut l0 = pvec[0].clone();
        l0.gemm(1.0, &self.p[0], &dx, 1.0);
        dlam.rows_mut(0, nx).copy_from(&(-l0));
        for n in 0..n_stages {
            let mut du = kvec[n].clone();
            du.gemm(1.0, &self.k[n], &dx, 1.0);
            let mut next = r_lam.rows(d.lam_offset(n + 1), nx).into_owned();
            next.gemm(1.0, &red.a[n], &dx, 1.0);
            next.gemm(1.0, &red.b[n], &du, 1.0);
            let mut lam = pvec[n + 1].clone();
            lam.gemm(1.0, &self.p[n + 1], &next, 1.0);
            dz.rows_mut(d.x_offset(n), nx).copy_from(&dx);
            dz.rows_mut(d.u_offset(n), nu).copy_from(&du);
            dlam.rows_mut(d.lam_offset(n + 1), nx).copy_from(&lam);
            dx = next;
        }
        dz.rows_mut(d.x_offset(n_stages), nx).copy_from(&dx);
        (dz, dlam)
    }
}

/// Single right-hand-side form of [`RiccatiFactorization::solve_panel`].
pub fn riccati_solve(
    fact: &RiccatiFactorization,
    red: &ReducedKkt,
    r_z: &DVector<f64>,
    r_lam: &DVector<f64>,
) -> (DVector<f64>, DVector<f64>) {
    let rz = DMatrix::from_column_slice(r_z.len(), 1, r_z.as_slice());
    let rl = DMatrix::from_column_slice(r_lam.len(), 1, r_lam.as_slice());
    let (dz, dl) = fact.solve_panel(red, &rz, &rl);
    (dz.column(0).into_owned(), dl.column(0).into_owned())
}

/// Newton direction `(Δz, Δλ, Δμ, Δs)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PrimalDualStep {
    pub dz: DVector<f64>,
    pub dlam: DVector<f64>,
    pub dmu: DVector<f64>,
    pub ds: DVector<f64>,
}

impl PrimalDualStep {
    pub fn to_flat(&self) -> DVector<f64> {
        Iterate {
            z: self.dz.clone(),
            lam: self.dlam.clone(),
            mu: self.dmu.clone(),
            s: self.ds.clone(),
        }
        .to_flat()
    }

    pub fn from_flat(dims: NlpDims, flat: &DVector<f64>) -> Result<Self> {
        let w = Iterate::from_flat(dims, flat)?;
        Ok(PrimalDualStep {
            dz: w.z,
            dlam: w.lam,
            dmu: w.mu,
            ds: w.s,
        })
    }
}

fn nlp_dims(d: OcpDimensions) -> NlpDims {
    NlpDims {
        nz: d.nz(),
        ng: d.ng(),
        nh: d.nh_total(),
        ntheta: 0,
    }
}

fn scale_rows(m: &mut DMatrix<f64>, d: &DVector<f64>) {
    for (i, &di) in d.iter().enumerate() {
        m.row_mut(i).scale_mut(di);
    }
}

/// Recovers `(Δμ, Δs)` from a reduced solution; every argument is a panel
/// and `rhs_full` stacks `(q̂, ĝ, ĥ, m̂)`.
fn expand_panel(
    qp: &StageQpData,
    weights: &BarrierWeights,
    dz: &DMatrix<f64>,
    h_hat: &DMatrix<f64>,
    m_hat: &DMatrix<f64>,
) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut ds = -qp.ineq_jac_mul(dz);
    ds -= h_hat;
    let mut dmu = -m_hat.clone();
    let mut mds = ds.clone();
    scale_rows(&mut mds, &weights.mu);
    dmu -= mds;
    let inv_s = weights.s.map(|v| 1.0 / v);
    scale_rows(&mut dmu, &inv_s);
    (dmu, ds)
}

/// Completes a reduced solution `(dz, dlam)` to the full step.
pub fn expand_step(
    dz: &DVector<f64>,
    dlam: &DVector<f64>,
    qp: &StageQpData,
    mu: &DVector<f64>,
    s: &DVector<f64>,
    rhs_full: &DVector<f64>,
) -> Result<PrimalDualStep> {
    let d = qp.dims;
    let nd = nlp_dims(d);
    check_len("rhs", nd.nw(), rhs_full.len())?;
    let weights = BarrierWeights::new(mu, s)?;
    let nh = d.nh_total();
    let h_hat = column(&rhs_full.rows(nd.nz + nd.ng, nh).into_owned());
    let m_hat = column(&rhs_full.rows(nd.nz + nd.ng + nh, nh).into_owned());
    let (dmu, ds) = expand_panel(qp, &weights, &column(dz), &h_hat, &m_hat);
    Ok(PrimalDualStep {
        dz: dz.clone(),
        dlam: dlam.clone(),
        dmu: dmu.column(0).into_owned(),
        ds: ds.column(0).into_owned(),
    })
}

fn column(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v.as_slice())
}

/// QP data, barrier weights and Riccati factorization of one Newton matrix.
#[derive(Debug, Clone)]
pub struct KktSystem {
    pub qp: StageQpData,
    pub weights: BarrierWeights,
    pub reduced: ReducedKkt,
    pub factorization: RiccatiFactorization,
}

impl KktSystem {
    pub fn new(qp: StageQpData, mu: &DVector<f64>, s: &DVector<f64>) -> Result<Self> {
        check_len("mu", qp.dims.nh_total(), mu.len())?;
        let weights = BarrierWeights::new(mu, s)?;
        let reduced = assemble_with_weights(&qp, &weights);
        let factorization = riccati_factorize(&reduced)?;
        Ok(KktSystem {
            qp,
            weights,
            reduced,
            factorization,
        })
    }

    pub fn nlp_dims(&self) -> NlpDims {
        nlp_dims(self.qp.dims)
    }

    /// Solves `ℳX = −R` column by column; `R` has `n_w` rows.
    pub fn solve_panel(&self, rhs: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let nd = self.nlp_dims();
        check_len("rhs rows", nd.nw(), rhs.nrows())?;
        let (nz, ng, nh) = (nd.nz, nd.ng, nd.nh);
        let q_hat = rhs.rows(0, nz);
        let h_hat = rhs.rows(nz + ng, nh).into_owned();
        let m_hat = rhs.rows(nz + ng + nh, nh).into_owned();
        // q̃ = q̂ + HᵀS⁻¹(Mĥ − m̂)
        let mut t = h_hat.clone();
        scale_rows(&mut t, &self.weights.mu);
        t -= &m_hat;
        scale_rows(&mut t, &self.weights.s.map(|v| 1.0 / v));
        let q_tilde = self.qp.ineq_jac_tr_mul(&t) + q_hat;
        let (dz, dlam) =
            self.factorization
                .solve_panel(&self.reduced, &q_tilde, &rhs.rows(nz, ng).into_owned());
        let (dmu, ds) = expand_panel(&self.qp, &self.weights, &dz, &h_hat, &m_hat);
        let mut out = DMatrix::zeros(nd.nw(), rhs.ncols());
        out.rows_mut(0, nz).copy_from(&dz);
        out.rows_mut(nz, ng).copy_from(&dlam);
        out.rows_mut(nz + ng, nh).copy_from(&dmu);
        out.rows_mut(nz + ng + nh, nh).copy_from(&ds);
        Ok(out)
    }

    /// Newton step for the residual `rhs_full = (q̂, ĝ, ĥ, m̂)`.
    pub fn solve(&self, rhs_full: &DVector<f64>) -> Result<PrimalDualStep> {
        let x = self.solve_panel(&column(rhs_full))?;
        PrimalDualStep::from_flat(self.nlp_dims(), &x.column(0).into_owned())
    }

    /// Product `ℳX` for a panel `X` ordered `(Δz, Δλ, Δμ, Δs)`.
    pub fn apply(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let nd = self.nlp_dims();
        check_len("panel rows", nd.nw(), x.nrows())?;
        let (nz, ng, nh) = (nd.nz, nd.ng, nd.nh);
        let dz = x.rows(0, nz).into_owned();
        let dlam = x.rows(nz, ng).into_owned();
        let dmu = x.rows(nz + ng, nh).into_owned();
        let ds = x.rows(nz + ng + nh, nh).into_owned();
        let mut out = DMatrix::zeros(nd.nw(), x.ncols());
        out.rows_mut(0, nz).copy_from(
            &(self.qp.hess_mul(&dz) + self.qp.eq_jac_tr_mul(&dlam) + self.qp.ineq_jac_tr_mul(&dmu)),
        );
        out.rows_mut(nz, ng).copy_from(&self.qp.eq_jac_mul(&dz));
        out.rows_mut(nz + ng, nh).copy_from(&(self.qp.ineq_jac_mul(&dz) + &ds));
        let mut a = dmu;
        scale_rows(&mut a, &self.weights.s);
        let mut b = ds;
        scale_rows(&mut b, &self.weights.mu);
        out.rows_mut(nz + ng + nh, nh).copy_from(&(a + b));
        Ok(out)
    }

    /// Product `ℳᵀX`.
    pub fn apply_transpose(&self, x: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let nd = self.nlp_dims();
        check_len("panel rows", nd.nw(), x.nrows())?;
        let (nz, ng, nh) = (nd.nz, nd.ng, nd.nh);
        let xz = x.rows(0, nz).into_owned();
        let xl = x.rows(nz, ng).into_owned();
        let xh = x.rows(nz + ng, nh).into_owned();
        let xc = x.rows(nz + ng + nh, nh).into_owned();
        let mut out = DMatrix::zeros(nd.nw(), x.ncols());
        out.rows_mut(0, nz).copy_from(
            &(self.qp.hess_mul(&xz) + self.qp.eq_jac_tr_mul(&xl) + self.qp.ineq_jac_tr_mul(&xh)),
        );
        out.rows_mut(nz, ng).copy_from(&self.qp.eq_jac_mul(&xz));
        let mut sc = xc.clone();
        scale_rows(&mut sc, &self.weights.s);
        out.rows_mut(nz + ng, nh).copy_from(&(self.qp.ineq_jac_mul(&xz) + sc));
        let mut mc = xc;
        scale_rows(&mut mc, &self.weights.mu);
        out.rows_mut(nz + ng + nh, nh).copy_from(&(xh + mc));
        Ok(out)
    }

    /// [`KktSystem::solve_panel`] followed by `steps` rounds of iterative
    /// refinement against the unreduced matrix. Large barrier weights make
    /// the reduced system badly scaled, and refinement recovers the digits
    /// lost there.
    pub fn solve_panel_refined(&self, rhs: &DMatrix<f64>, steps: usize) -> Result<DMatrix<f64>> {
        let mut x = self.solve_panel(rhs)?;
        for _ in 0..steps {
            let r = self.apply(&x)? + rhs;
            x += self.solve_panel(&r)?;
        }
        Ok(x)
    }

    /// Transposed counterpart of [`KktSystem::solve_panel_refined`].
    pub fn solve_transpose_panel_refined(&self, nu: &DMatrix<f64>, steps: usize) -> Result<DMatrix<f64>> {
        let mut x = self.solve_transpose_panel(nu)?;
        for _ in 0..steps {
            let r = nu - self.apply_transpose(&x)?;
            x += self.solve_transpose_panel(&r)?;
        }
        Ok(x)
    }

    /// Solves `ℳᵀX = V` column by column; `V` has `n_w` rows.
    pub fn solve_transpose_panel(&self, nu: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let nd = self.nlp_dims();
        check_len("seed rows", nd.nw(), nu.nrows())?;
        let (nz, ng, nh) = (nd.nz, nd.ng, nd.nh);
        let nu_mu = nu.rows(nz + ng, nh).into_owned();
        let nu_s = nu.rows(nz + ng + nh, nh).into_owned();
        // r_z = Hᵀ(ν_s − MS⁻¹ν_μ) − ν_z,  r_λ = −ν_λ
        let mut t = nu_mu.clone();
        scale_rows(&mut t, &self.weights.d);
        let t = &nu_s - t;
        let r_z = self.qp.ineq_jac_tr_mul(&t) - nu.rows(0, nz);
        let r_lam = -nu.rows(nz, ng).into_owned();
        let (xz, xlam) = self.factorization.solve_panel(&self.reduced, &r_z, &r_lam);
        // x_s = S⁻¹(ν_μ − H x_z),  x_μ = ν_s − M x_s
        let mut xs = nu_mu - self.qp.ineq_jac_mul(&xz);
        scale_rows(&mut xs, &self.weights.s.map(|v| 1.0 / v));
        let mut mxs = xs.clone();
        scale_rows(&mut mxs, &self.weights.mu);
        let xmu = nu_s - mxs;
        let mut out = DMatrix::zeros(nd.nw(), nu.ncols());
        out.rows_mut(0, nz).copy_from(&xz);
        out.rows_mut(nz, ng).copy_from(&xlam);
        out.rows_mut(nz + ng, nh).copy_from(&xmu);
        out.rows_mut(nz + ng + nh, nh).copy_from(&xs);
        Ok(out)
    }
}

/// Solution of `ℳᵀx = ν` through the Riccati factorization.
pub fn solve_transpose(
    fact: &RiccatiFactorization,
    red: &ReducedKkt,
    qp: &StageQpData,
    mu: &DVector<f64>,
    s: &DVector<f64>,
    nu: &Iterate,
) -> Result<Iterate> {
    let nd = nlp_dims(qp.dims);
    nu.dims_match(nd)?;
    let sys = KktSystem {
        qp: qp.clone(),
        weights: BarrierWeights::new(mu, s)?,
        reduced: red.clone(),
        factorization: fact.clone(),
    };
    let x = sys.solve_transpose_panel(&column(&nu.to_flat()))?;
    Iterate::from_flat(nd, &x.column(0).into_owned())
}

/// Dense `ℳ` of the full Newton system.
pub fn dense_kkt_matrix(
    qp: &StageQpData,
    mu: &DVector<f64>,
    s: &DVector<f64>,
) -> Result<DMatrix<f64>> {
    let nd = nlp_dims(qp.dims);
    check_len("mu", nd.nh, mu.len())?;
    check_len("s", nd.nh, s.len())?;
    if nd.nw() > DENSE_ORACLE_LIMIT {
        return Err(Error::Oracle(format!(
            "system of size {} exceeds the dense limit {DENSE_ORACLE_LIMIT}",
            nd.nw()
        )));
    }
    let dq = qp.to_dense();
    let (nz, ng, nh) = (nd.nz, nd.ng, nd.nh);
    let mut m = DMatrix::zeros(nd.nw(), nd.nw());
    m.view_mut((0, 0), (nz, nz)).copy_from(&dq.hess);
    m.view_mut((0, nz), (nz, ng)).copy_from(&dq.eq_jac.transpose());
    m.view_mut((0, nz + ng), (nz, nh))
        .copy_from(&dq.ineq_jac.transpose());
    m.view_mut((nz, 0), (ng, nz)).copy_from(&dq.eq_jac);
    m.view_mut((nz + ng, 0), (nh, nz)).copy_from(&dq.ineq_jac);
    for i in 0..nh {
        m[(nz + ng + i, nz + ng + nh + i)] = 1.0;
        m[(nz + ng + nh + i, nz + ng + i)] = s[i];
        m[(nz + ng + nh + i, nz + ng + nh + i)] = mu[i];
    }
    Ok(m)
}

/// Direct LU solve of `ℳ·step = −rhs`.
pub fn dense_kkt_oracle(
    qp: &StageQpData,
    mu: &DVector<f64>,
    s: &DVector<f64>,
    rhs: &DVector<f64>,
) -> Result<PrimalDualStep> {
    let nd = nlp_dims(qp.dims);
    check_len("rhs", nd.nw(), rhs.len())?;
    let m = dense_kkt_matrix(qp, mu, s)?;
    let x = m
        .lu()
        .solve(&(-rhs))
        .ok_or_else(|| Error::Oracle("singular Newton matrix".into()))?;
    if x.iter().any(|v| !v.is_finite()) {
        return Err(Error::Oracle("non-finite dense solution".into()));
    }
    PrimalDualStep::from_flat(nd, &x)
}
