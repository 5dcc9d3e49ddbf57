use nalgebra::{DMatrix, DVector};

use super::model::OcpDimensions;
use crate::error::{check_len, Error, Result};
use crate::nlp::{Iterate, Nlp, NlpDims, ParamJacobians, ParamVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HessianKind {
    /// `∇²_zz L` including dynamics and constraint curvature.
    Exact,
    /// Cost curvature only (`JᵀWJ` for least-squares costs).
    GaussNewton,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HessianMode {
    pub kind: HessianKind,
    /// Added to the Hessian diagonal after assembly.
    pub levenberg_marquardt: f64,
}

impl HessianMode {
    pub fn exact() -> Self {
        HessianMode {
            kind: HessianKind::Exact,
            levenberg_marquardt: 0.0,
        }
    }

    pub fn gauss_newton() -> Self {
        HessianMode {
            kind: HessianKind::GaussNewton,
            levenberg_marquardt: 0.0,
        }
    }

    pub fn with_levenberg_marquardt(mut self, lm: f64) -> Self {
        self.levenberg_marquardt = lm;
        self
    }

    /// Exact Hessian without regularization, as needed for sensitivities.
    pub fn is_unregularized_exact(&self) -> bool {
        self.kind == HessianKind::Exact && self.levenberg_marquardt == 0.0
    }
}

impl Default for HessianMode {
    fn default() -> Self {
        HessianMode::exact()
    }
}

/// QP data of stage `n < N` over `(x_n, u_n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StageQp {
    /// Hessian block `Q_n` over `(x, u)`.
    pub hess: DMatrix<f64>,
    pub grad: DVector<f64>,
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    /// `φ_n(x_n, u_n) − x_{n+1}`.
    pub dyn_res: DVector<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub h: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TerminalQp {
    pub hess: DMatrix<f64>,
    pub grad: DVector<f64>,
    pub c: DMatrix<f64>,
    pub h: DVector<f64>,
}

/// Block-structured linearization of the OCP at one iterate.
#[derive(Debug, Clone, PartialEq)]
pub struct StageQpData {
    pub dims: OcpDimensions,
    pub stages: Vec<StageQp>,
    pub terminal: TerminalQp,
    /// `x_0 − x̄_0`.
    pub init_res: DVector<f64>,
    pub hessian_mode: HessianMode,
}

/// The same QP in dense form: `min qᵀΔz + ½ΔzᵀQΔz  s.t.  g + GΔz = 0, h + HΔz ≤ 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseQp {
    pub hess: DMatrix<f64>,
    pub grad: DVector<f64>,
    pub eq_jac: DMatrix<f64>,
    pub eq: DVector<f64>,
    pub ineq_jac: DMatrix<f64>,
    pub ineq: DVector<f64>,
}

impl StageQpData {
    pub fn nlp_dims(&self) -> NlpDims {
        NlpDims {
            nz: self.dims.nz(),
            ng: self.dims.ng(),
            nh: self.dims.nh_total(),
            ntheta: 0,
        }
    }

    /// `Q·X` for a panel `X` with `n_z` rows.
    pub fn hess_mul(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let d = self.dims;
        let w = d.stage_width();
        let mut out = DMatrix::zeros(d.nz(), x.ncols());
        for (n, st) in self.stages.iter().enumerate() {
            let xo = d.x_offset(n);
            out.rows_mut(xo, w).gemm(1.0, &st.hess, &x.rows(xo, w), 0.0);
        }
        let xo = d.x_offset(d.horizon);
        out.rows_mut(xo, d.nx)
            .gemm(1.0, &self.terminal.hess, &x.rows(xo, d.nx), 0.0);
        out
    }

    /// `G·X` (without the constant term).
    pub fn eq_jac_mul(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let d = self.dims;
        let mut out = DMatrix::zeros(d.ng(), x.ncols());
        out.rows_mut(0, d.nx).copy_from(&x.rows(0, d.nx));
        for (n, st) in self.stages.iter().enumerate() {
            let mut blk = out.rows_mut(d.lam_offset(n + 1), d.nx);
            blk.gemm(1.0, &st.a, &x.rows(d.x_offset(n), d.nx), 0.0);
            blk.gemm(1.0, &st.b, &x.rows(d.u_offset(n), d.nu), 1.0);
            blk -= x.rows(d.x_offset(n + 1), d.nx);
        }
        out
    }

    /// `Gᵀ·Y` for a panel `Y` with `n_g` rows.
    pub fn eq_jac_tr_mul(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        let d = self.dims;
        let mut out = DMatrix::zeros(d.nz(), y.ncols());
        out.rows_mut(0, d.nx).copy_from(&y.rows(0, d.nx));
        for (n, st) in self.stages.iter().enumerate() {
            let yn = y.rows(d.lam_offset(n + 1), d.nx);
            out.rows_mut(d.x_offset(n), d.nx).gemm_tr(1.0, &st.a, &yn, 1.0);
            out.rows_mut(d.u_offset(n), d.nu).gemm_tr(1.0, &st.b, &yn, 0.0);
            let mut next = out.rows_mut(d.x_offset(n + 1), d.nx);
            next -= yn;
        }
        out
    }

    /// `H·X`.
    pub fn ineq_jac_mul(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let d = self.dims;
        let mut out = DMatrix::zeros(d.nh_total(), x.ncols());
        for (n, st) in self.stages.iter().enumerate() {
            let mut blk = out.rows_mut(d.h_offset(n), d.nh);
            blk.gemm(1.0, &st.c, &x.rows(d.x_offset(n), d.nx), 0.0);
            blk.gemm(1.0, &st.d, &x.rows(d.u_offset(n), d.nu), 1.0);
        }
        let mut blk = out.rows_mut(d.h_offset(d.horizon), d.nh_terminal);
        blk.gemm(1.0, &self.terminal.c, &x.rows(d.x_offset(d.horizon), d.nx), 0.0);
        out
    }

    /// `Hᵀ·Y`.
    pub fn ineq_jac_tr_mul(&self, y: &DMatrix<f64>) -> DMatrix<f64> {
        let d = self.dims;
        let mut out = DMatrix::zeros(d.nz(), y.ncols());
        for (n, st) in self.stages.iter().enumerate() {
            let yn = y.rows(d.h_offset(n), d.nh);
            out.rows_mut(d.x_offset(n), d.nx).gemm_tr(1.0, &st.c, &yn, 0.0);
            out.rows_mut(d.u_offset(n), d.nu).gemm_tr(1.0, &st.d, &yn, 0.0);
        }
        let yn = y.rows(d.h_offset(d.horizon), d.nh_terminal);
        out.rows_mut(d.x_offset(d.horizon), d.nx)
            .gemm_tr(1.0, &self.terminal.c, &yn, 0.0);
        out
    }

    /// Stacked `q`, constant part of `g` and `h`.
    pub fn constant_terms(&self) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
        let d = self.dims;
        let mut q = DVector::zeros(d.nz());
        let mut g = DVector::zeros(d.ng());
        let mut h = DVector::zeros(d.nh_total());
        g.rows_mut(0, d.nx).copy_from(&self.init_res);
        for (n, st) in self.stages.iter().enumerate() {
            q.rows_mut(d.x_offset(n), d.stage_width()).copy_from(&st.grad);
            g.rows_mut(d.lam_offset(n + 1), d.nx).copy_from(&st.dyn_res);
            h.rows_mut(d.h_offset(n), d.nh).copy_from(&st.h);
        }
        q.rows_mut(d.x_offset(d.horizon), d.nx)
            .copy_from(&self.terminal.grad);
        h.rows_mut(d.h_offset(d.horizon), d.nh_terminal)
            .copy_from(&self.terminal.h);
        (q, g, h)
    }

    pub fn to_dense(&self) -> DenseQp {
        let d = self.dims;
        let (nz, ng, nh) = (d.nz(), d.ng(), d.nh_total());
        let (nx, w) = (d.nx, d.stage_width());
        let mut out = DenseQp {
            hess: DMatrix::zeros(nz, nz),
            grad: DVector::zeros(nz),
            eq_jac: DMatrix::zeros(ng, nz),
            eq: DVector::zeros(ng),
            ineq_jac: DMatrix::zeros(nh, nz),
            ineq: DVector::zeros(nh),
        };
        for i in 0..nx {
            out.eq_jac[(i, i)] = 1.0;
        }
        out.eq.rows_mut(0, nx).copy_from(&self.init_res);
        for (n, st) in self.stages.iter().enumerate() {
            let xo = d.x_offset(n);
            out.hess.view_mut((xo, xo), (w, w)).copy_from(&st.hess);
            out.grad.rows_mut(xo, w).copy_from(&st.grad);
            let row = d.lam_offset(n + 1);
            out.eq_jac.view_mut((row, xo), (nx, nx)).copy_from(&st.a);
            out.eq_jac.view_mut((row, d.u_offset(n)), (nx, d.nu)).copy_from(&st.b);
            let next = d.x_offset(n + 1);
            for i in 0..nx {
                out.eq_jac[(row + i, next + i)] = -1.0;
            }
            out.eq.rows_mut(row, nx).copy_from(&st.dyn_res);
            let hrow = d.h_offset(n);
            out.ineq_jac.view_mut((hrow, xo), (d.nh, nx)).copy_from(&st.c);
            out.ineq_jac
                .view_mut((hrow, d.u_offset(n)), (d.nh, d.nu))
                .copy_from(&st.d);
            out.ineq.rows_mut(hrow, d.nh).copy_from(&st.h);
        }
        let xo = d.x_offset(d.horizon);
        let t = &self.terminal;
        out.hess.view_mut((xo, xo), (nx, nx)).copy_from(&t.hess);
        out.grad.rows_mut(xo, nx).copy_from(&t.grad);
        let hrow = d.h_offset(d.horizon);
        out.ineq_jac
            .view_mut((hrow, xo), (d.nh_terminal, nx))
            .copy_from(&t.c);
        out.ineq.rows_mut(hrow, d.nh_terminal).copy_from(&t.h);
        out
    }
}

impl DenseQp {
    /// Reads the stage blocks back out of a dense QP with OCP structure.
    pub fn to_stages(&self, dims: OcpDimensions, hessian_mode: HessianMode) -> Result<StageQpData> {
        check_len("dense hessian", dims.nz(), self.hess.nrows())?;
        check_len("dense equalities", dims.ng(), self.eq.len())?;
        check_len("dense inequalities", dims.nh_total(), self.ineq.len())?;
        let (nx, nu, w) = (dims.nx, dims.nu, dims.stage_width());
        let stages = (0..dims.horizon)
            .map(|n| {
                let xo = dims.x_offset(n);
                let uo = dims.u_offset(n);
                let row = dims.lam_offset(n + 1);
                let hrow = dims.h_offset(n);
                StageQp {
                    hess: self.hess.view((xo, xo), (w, w)).into_owned(),
                    grad: self.grad.rows(xo, w).into_owned(),
                    a: self.eq_jac.view((row, xo), (nx, nx)).into_owned(),
                    b: self.eq_jac.view((row, uo), (nx, nu)).into_owned(),
                    dyn_res: self.eq.rows(row, nx).into_owned(),
                    c: self.ineq_jac.view((hrow, xo), (dims.nh, nx)).into_owned(),
                    d: self.ineq_jac.view((hrow, uo), (dims.nh, nu)).into_owned(),
                    h: self.ineq.rows(hrow, dims.nh).into_owned(),
                }
            })
            .collect();
        let xo = dims.x_offset(dims.horizon);
        let hrow = dims.h_offset(dims.horizon);
        Ok(StageQpData {
            dims,
            stages,
            terminal: TerminalQp {
                hess: self.hess.view((xo, xo), (nx, nx)).into_owned(),
                grad: self.grad.rows(xo, nx).into_owned(),
                c: self
                    .ineq_jac
                    .view((hrow, xo), (dims.nh_terminal, nx))
                    .into_owned(),
                h: self.ineq.rows(hrow, dims.nh_terminal).into_owned(),
            },
            init_res: self.eq.rows(0, nx).into_owned(),
            hessian_mode,
        })
    }
}

/// Reference solvers that ignore the stage structure, for cross-checking.
impl DenseQp {
    /// `(Δz, λ)` of the problem without inequalities, from one LU solve of
    /// `[Q Gᵀ; G 0]`.
    pub fn solve_equality_constrained(&self) -> Result<(DVector<f64>, DVector<f64>)> {
        let (nz, ng) = (self.grad.len(), self.eq.len());
        let mut k = DMatrix::zeros(nz + ng, nz + ng);
        k.view_mut((0, 0), (nz, nz)).copy_from(&self.hess);
        k.view_mut((0, nz), (nz, ng)).copy_from(&self.eq_jac.transpose());
        k.view_mut((nz, 0), (ng, nz)).copy_from(&self.eq_jac);
        let mut rhs = DVector::zeros(nz + ng);
        rhs.rows_mut(0, nz).copy_from(&(-&self.grad));
        rhs.rows_mut(nz, ng).copy_from(&(-&self.eq));
        let x = k
            .lu()
            .solve(&rhs)
            .ok_or_else(|| Error::Oracle("singular equality KKT matrix".into()))?;
        Ok((x.rows(0, nz).into_owned(), x.rows(nz, ng).into_owned()))
    }

    /// Smoothed solution with `μ_i s_i = τ_min` from a Mehrotra
    /// predictor-corrector interior-point method. The equalities are
    /// eliminated once with an orthonormal null-space basis from a Householder
    /// QR of `Gᵀ`, which needs `G` to have full row rank. Stops when every
    /// residual block relative to the size of its terms is at most `tol`, or
    /// when progress stalls within `10³·tol` of that. The primal start is the projection of `z0` (zero if
    /// absent) onto the equalities, with `s_i = max(1, 1 − h_i)` and
    /// `μ_i = 1/s_i`.
    pub fn solve_interior_point(
        &self,
        tau_min: f64,
        tol: f64,
        max_iter: usize,
        z0: Option<&DVector<f64>>,
    ) -> Result<Iterate> {
        let (nz, ng, nh) = (self.grad.len(), self.eq.len(), self.ineq.len());
        if ng > nz {
            return Err(Error::Oracle("more equalities than variables".into()));
        }
        let nv = nz - ng;
        let mut padded = DMatrix::zeros(nz, nz);
        padded.columns_mut(0, ng).copy_from(&self.eq_jac.transpose());
        let qr = padded.qr();
        let basis = qr.q();
        let r = qr.r().view((0, 0), (ng, ng)).into_owned();
        let range = basis.columns(0, ng).into_owned();
        let null = basis.columns(ng, nv).into_owned();
        let r_inv_t = |v: &DVector<f64>| -> Result<DVector<f64>> {
            r.transpose()
                .solve_lower_triangular(v)
                .ok_or_else(|| Error::Oracle("equality Jacobian is rank deficient".into()))
        };
        // z = z_p + Z v with G z_p = −g
        let z_p = -(&range * r_inv_t(&self.eq)?);
        let hess = null.tr_mul(&(&self.hess * &null));
        let grad = null.tr_mul(&(&self.grad + &self.hess * &z_p));
        let jac = &self.ineq_jac * &null;
        let h0 = &self.ineq + &self.ineq_jac * &z_p;

        let mut v = match z0 {
            Some(z0) => {
                check_len("z0", nz, z0.len())?;
                null.tr_mul(&(z0 - &z_p))
            }
            None => DVector::zeros(nv),
        };
        let mut s = (&h0 + &jac * &v).map(|h| (1.0 - h).max(1.0));
        let mut mu = s.map(|si| 1.0 / si);
        let data_scale = [self.hess.amax(), self.grad.amax(), self.eq.amax(), self.ineq.amax(), 1.0]
            .into_iter()
            .fold(0.0, f64::max);
        // Each block is measured against the magnitude of the terms it sums,
        // which is where rounding puts its floor.
        let relative_residual = |v: &DVector<f64>, mu: &DVector<f64>, s: &DVector<f64>| {
            let (hv, jmu) = (&hess * v, jac.tr_mul(mu));
            let stat = (&grad + &hv + &jmu).amax()
                / [1.0, grad.amax(), hv.amax(), jmu.amax()].into_iter().fold(0.0, f64::max);
            let feas = (&h0 + &jac * v + s).amax() / data_scale.max((&jac * v).amax());
            let comp = mu.component_mul(s).add_scalar(-tau_min).amax() / mu.amax().max(1.0);
            stat.max(feas).max(comp)
        };
        // The best iterate is kept since iterations past the rounding floor of
        // badly scaled problems can wander off again.
        let mut best: Option<(f64, DVector<f64>, DVector<f64>, DVector<f64>)> = None;
        let mut since_best = 0;
        for _ in 0..max_iter {
            let r_stat = &grad + &hess * &v + jac.tr_mul(&mu);
            let r_in = &h0 + &jac * &v + &s;
            let comp = mu.component_mul(&s);
            let norm = relative_residual(&v, &mu, &s);
            if best.as_ref().is_none_or(|b| norm < b.0) {
                best = Some((norm, v.clone(), mu.clone(), s.clone()));
                since_best = 0;
            } else {
                since_best += 1;
            }
            let stalled = since_best >= 20 && best.as_ref().is_some_and(|b| b.0 <= 1e3 * tol);
            if norm <= tol || stalled {
                break;
            }
            // Augmented system in (Δv, Δμ), which stays well conditioned for
            // barrier weights where the normal equations lose all digits:
            // [Q_r Jᵀ; J −S/M]·(Δv, Δμ) = (−r_stat, −r_in + r_c/μ)
            let mut k = DMatrix::zeros(nv + nh, nv + nh);
            k.view_mut((0, 0), (nv, nv)).copy_from(&hess);
            k.view_mut((0, nv), (nv, nh)).copy_from(&jac.transpose());
            k.view_mut((nv, 0), (nh, nv)).copy_from(&jac);
            for i in 0..nh {
                k[(nv + i, nv + i)] = -s[i] / mu[i];
            }
            let lu = k.lu();
            let step = |r_c: &DVector<f64>| -> (DVector<f64>, DVector<f64>, DVector<f64>) {
                let mut rhs = DVector::zeros(nv + nh);
                rhs.rows_mut(0, nv).copy_from(&(-&r_stat));
                rhs.rows_mut(nv, nh)
                    .copy_from(&(r_c.component_div(&mu) - &r_in));
                let x = lu
                    .solve(&rhs)
                    .unwrap_or_else(|| DVector::from_element(nv + nh, f64::NAN));
                let dmu = x.rows(nv, nh).into_owned();
                // Δs = −(r_c + s∘Δμ)/μ
                let ds = -(r_c + s.component_mul(&dmu)).component_div(&mu);
                (x.rows(0, nv).into_owned(), dmu, ds)
            };
            let (dv, dmu, ds) = if nh > 0 {
                let gap = comp.sum() / nh as f64;
                let (_, dmu_a, ds_a) = step(&comp);
                let a = crate::ipm::fraction_to_boundary(&s, &mu, &ds_a, &dmu_a, 1.0);
                let gap_a = (&mu + &dmu_a * a).dot(&(&s + &ds_a * a)) / nh as f64;
                let sigma = (gap_a / gap).powi(3).min(1.0);
                let tau = tau_min.max(sigma * gap);
                step(&(&comp + dmu_a.component_mul(&ds_a)).add_scalar(-tau))
            } else {
                step(&comp)
            };
            let alpha = crate::ipm::fraction_to_boundary(&s, &mu, &ds, &dmu, 0.995);
            v.axpy(alpha, &dv, 1.0);
            mu.axpy(alpha, &dmu, 1.0);
            s.axpy(alpha, &ds, 1.0);
            if !(v.iter().chain(mu.iter()).chain(s.iter()).all(|x| x.is_finite())) {
                return Err(Error::Oracle("non-finite dense interior-point iterate".into()));
            }
        }
        let (norm, v, mu, s) = best.ok_or_else(|| Error::Oracle("no iterations allowed".into()))?;
        if norm > 1e3 * tol {
            return Err(Error::Oracle(format!(
                "dense interior-point method stalled at residual {norm:.3e}"
            )));
        }
        let z = &z_p + &null * &v;
        // Gᵀλ = −(q + Qz + Hᵀμ) in the range of Gᵀ
        let rest = -(&self.grad + &self.hess * &z + self.ineq_jac.tr_mul(&mu));
        let lam = r
            .solve_upper_triangular(&range.tr_mul(&rest))
            .ok_or_else(|| Error::Oracle("equality Jacobian is rank deficient".into()))?;
        Ok(Iterate { z, lam, mu, s })
    }
}

fn as_panel(v: &DVector<f64>) -> DMatrix<f64> {
    DMatrix::from_column_slice(v.len(), 1, v.as_slice())
}

/// The QP as an NLP in `Δz` without parameters.
impl Nlp for DenseQp {
    fn nlp_dims(&self) -> NlpDims {
        NlpDims {
            nz: self.grad.len(),
            ng: self.eq.len(),
            nh: self.ineq.len(),
            ntheta: 0,
        }
    }

    fn objective(&self, z: &DVector<f64>, _theta: &ParamVector) -> Result<f64> {
        Ok(self.grad.dot(z) + 0.5 * z.dot(&(&self.hess * z)))
    }

    fn objective_gradient(&self, z: &DVector<f64>, _theta: &ParamVector) -> Result<DVector<f64>> {
        Ok(&self.grad + &self.hess * z)
    }

    fn equalities(&self, z: &DVector<f64>, _theta: &ParamVector) -> Result<DVector<f64>> {
        Ok(&self.eq + &self.eq_jac * z)
    }

    fn equality_jacobian(&self, _z: &DVector<f64>, _theta: &ParamVector) -> Result<DMatrix<f64>> {
        Ok(self.eq_jac.clone())
    }

    fn inequalities(&self, z: &DVector<f64>, _theta: &ParamVector) -> Result<DVector<f64>> {
        Ok(&self.ineq + &self.ineq_jac * z)
    }

    fn inequality_jacobian(&self, _z: &DVector<f64>, _theta: &ParamVector) -> Result<DMatrix<f64>> {
        Ok(self.ineq_jac.clone())
    }

    fn lagrangian_hessian(
        &self,
        _z: &DVector<f64>,
        _lam: &DVector<f64>,
        _mu: &DVector<f64>,
        _theta: &ParamVector,
    ) -> Result<DMatrix<f64>> {
        Ok(self.hess.clone())
    }

    fn param_jacobians(
        &self,
        z: &DVector<f64>,
        _lam: &DVector<f64>,
        _mu: &DVector<f64>,
        _theta: &ParamVector,
    ) -> Result<ParamJacobians> {
        Ok(ParamJacobians {
            stat: DMatrix::zeros(z.len(), 0),
            eq: DMatrix::zeros(self.eq.len(), 0),
            ineq: DMatrix::zeros(self.ineq.len(), 0),
        })
    }
}

impl StageQpData {
    /// `Q Δz + q + Gᵀλ + Hᵀμ`, evaluated stage-wise.
    pub fn stationarity(&self, dz: &DVector<f64>, lam: &DVector<f64>, mu: &DVector<f64>) -> DVector<f64> {
        let (q, _, _) = self.constant_terms();
        let r = self.hess_mul(&as_panel(dz)) + self.eq_jac_tr_mul(&as_panel(lam))
            + self.ineq_jac_tr_mul(&as_panel(mu));
        r.column(0) + q
    }

    /// `g + GΔz` and `h + HΔz`.
    pub fn constraint_values(&self, dz: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let (_, g, h) = self.constant_terms();
        let p = as_panel(dz);
        (
            self.eq_jac_mul(&p).column(0) + g,
            self.ineq_jac_mul(&p).column(0) + h,
        )
    }
}
