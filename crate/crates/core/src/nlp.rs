//! Dense view of a parametric NLP
//!
//! ```text
//! min_z f(z; θ)  s.t.  g(z; θ) = 0,  h(z; θ) ≤ 0
//! ```
//!
//! together with the primal-dual iterate `w = (z, λ, μ, s)`, the residual of
//! the smoothed KKT system and complementarity diagnostics. Every structured
//! solver in this crate reduces to these definitions.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, Error, KktBlock, Result};

/// Parameter vector `θ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamVector(DVector<f64>);

impl ParamVector {
    pub fn new(values: Vec<f64>) -> Self {
        ParamVector(DVector::from_vec(values))
    }

    pub fn from_slice(values: &[f64]) -> Self {
        ParamVector(DVector::from_column_slice(values))
    }

    pub fn scalar(value: f64) -> Self {
        ParamVector::new(vec![value])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        self.0.as_slice()
    }

    pub fn values(&self) -> &DVector<f64> {
        &self.0
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }

    /// Copy with entry `j` shifted by `delta`.
    pub fn perturbed(&self, j: usize, delta: f64) -> Self {
        let mut v = self.0.clone();
        v[j] += delta;
        ParamVector(v)
    }
}

impl From<Vec<f64>> for ParamVector {
    fn from(v: Vec<f64>) -> Self {
        ParamVector::new(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NlpDims {
    pub nz: usize,
    pub ng: usize,
    pub nh: usize,
    pub ntheta: usize,
}

impl NlpDims {
    /// `n_w = n_z + n_g + 2 n_h`.
    pub fn nw(&self) -> usize {
        self.nz + self.ng + 2 * self.nh
    }
}

/// Primal-dual point `w = (z, λ, μ, s)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Iterate {
    pub z: DVector<f64>,
    pub lam: DVector<f64>,
    pub mu: DVector<f64>,
    pub s: DVector<f64>,
}

impl Iterate {
    pub fn zeros(dims: NlpDims) -> Self {
        Iterate {
            z: DVector::zeros(dims.nz),
            lam: DVector::zeros(dims.ng),
            mu: DVector::zeros(dims.nh),
            s: DVector::zeros(dims.nh),
        }
    }

    pub fn dims_match(&self, dims: NlpDims) -> Result<()> {
        check_len("z", dims.nz, self.z.len())?;
        check_len("lambda", dims.ng, self.lam.len())?;
        check_len("mu", dims.nh, self.mu.len())?;
        check_len("s", dims.nh, self.s.len())
    }

    pub fn len(&self) -> usize {
        self.z.len() + self.lam.len() + self.mu.len() + self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Stacked vector `[z; λ; μ; s]`.
    pub fn to_flat(&self) -> DVector<f64> {
        let mut out = DVector::zeros(self.len());
        let mut k = 0;
        for block in [&self.z, &self.lam, &self.mu, &self.s] {
            out.rows_mut(k, block.len()).copy_from(block);
            k += block.len();
        }
        out
    }

    pub fn from_flat(dims: NlpDims, flat: &DVector<f64>) -> Result<Self> {
        check_len("flat iterate", dims.nw(), flat.len())?;
        let (nz, ng, nh) = (dims.nz, dims.ng, dims.nh);
        Ok(Iterate {
            z: flat.rows(0, nz).into_owned(),
            lam: flat.rows(nz, ng).into_owned(),
            mu: flat.rows(nz + ng, nh).into_owned(),
            s: flat.rows(nz + ng + nh, nh).into_owned(),
        })
    }

    pub fn is_finite(&self) -> bool {
        [&self.z, &self.lam, &self.mu, &self.s]
            .iter()
            .all(|b| b.iter().all(|v| v.is_finite()))
    }

    /// `μ_i > 0` and `s_i > 0` for all i.
    pub fn is_strictly_interior(&self) -> bool {
        self.mu.iter().all(|&m| m > 0.0) && self.s.iter().all(|&s| s > 0.0)
    }
}

/// Derivatives of the residual blocks with respect to `θ`.
#[derive(Debug, Clone)]
pub struct ParamJacobians {
    /// `∂(∇_z L)/∂θ`, `n_z × n_θ`.
    pub stat: DMatrix<f64>,
    /// `∂g/∂θ`, `n_g × n_θ`.
    pub eq: DMatrix<f64>,
    /// `∂h/∂θ`, `n_h × n_θ`.
    pub ineq: DMatrix<f64>,
}

/// Evaluation interface of a parametric NLP.
pub trait Nlp {
    fn nlp_dims(&self) -> NlpDims;
    fn objective(&self, z: &DVector<f64>, theta: &ParamVector) -> Result<f64>;
    fn objective_gradient(&self, z: &DVector<f64>, theta: &ParamVector) -> Result<DVector<f64>>;
    fn equalities(&self, z: &DVector<f64>, theta: &ParamVector) -> Result<DVector<f64>>;
    fn equality_jacobian(&self, z: &DVector<f64>, theta: &ParamVector) -> Result<DMatrix<f64>>;
    fn inequalities(&self, z: &DVector<f64>, theta: &ParamVector) -> Result<DVector<f64>>;
    fn inequality_jacobian(&self, z: &DVector<f64>, theta: &ParamVector)
        -> Result<DMatrix<f64>>;
    /// `∇²_zz L(z, λ, μ; θ)`.
    fn lagrangian_hessian(
        &self,
        z: &DVector<f64>,
        lam: &DVector<f64>,
        mu: &DVector<f64>,
        theta: &ParamVector,
    ) -> Result<DMatrix<f64>>;
    fn param_jacobians(
        &self,
        z: &DVector<f64>,
        lam: &DVector<f64>,
        mu: &DVector<f64>,
        theta: &ParamVector,
    ) -> Result<ParamJacobians>;

    /// `∇f + ∇g λ + ∇h μ`.
    fn lagrangian_gradient(
        &self,
        z: &DVector<f64>,
        lam: &DVector<f64>,
        mu: &DVector<f64>,
        theta: &ParamVector,
    ) -> Result<DVector<f64>> {
        let mut grad = self.objective_gradient(z, theta)?;
        grad += self.equality_jacobian(z, theta)?.tr_mul(lam);
        grad += self.inequality_jacobian(z, theta)?.tr_mul(mu);
        Ok(grad)
    }
}

/// Residual of the smoothed KKT system at a point.
#[derive(Debug, Clone, PartialEq)]
pub struct KktResidual {
    pub stat: DVector<f64>,
    pub eq: DVector<f64>,
    /// `h(z; θ) + s`.
    pub ineq: DVector<f64>,
    /// `μ_i s_i − τ`.
    pub comp: DVector<f64>,
    pub inf_norm: f64,
}

impl KktResidual {
    pub fn new(
        stat: DVector<f64>,
        eq: DVector<f64>,
        ineq: DVector<f64>,
        comp: DVector<f64>,
    ) -> Result<Self> {
        let mut inf_norm: f64 = 0.0;
        for (block, v) in [
            (KktBlock::Stationarity, &stat),
            (KktBlock::Equality, &eq),
            (KktBlock::Inequality, &ineq),
            (KktBlock::Complementarity, &comp),
        ] {
            for (index, x) in v.iter().enumerate() {
                if !x.is_finite() {
                    return Err(Error::Evaluation { block, index });
                }
                inf_norm = inf_norm.max(x.abs());
            }
        }
        Ok(KktResidual {
            stat,
            eq,
            ineq,
            comp,
            inf_norm,
        })
    }

    /// Stacked `[stat; eq; ineq; comp]`, ordered like [`Iterate::to_flat`].
    pub fn to_flat(&self) -> DVector<f64> {
        let n = self.stat.len() + self.eq.len() + self.ineq.len() + self.comp.len();
        let mut out = DVector::zeros(n);
        let mut k = 0;
        for block in [&self.stat, &self.eq, &self.ineq, &self.comp] {
            out.rows_mut(k, block.len()).copy_from(block);
            k += block.len();
        }
        out
    }
}

/// Smoothed KKT residual of `problem` at `w` with barrier value `tau`.
pub fn eval_kkt_residual<P: Nlp + ?Sized>(
    problem: &P,
    w: &Iterate,
    tau: f64,
    theta: &ParamVector,
) -> Result<KktResidual> {
    let dims = problem.nlp_dims();
    w.dims_match(dims)?;
    check_len("theta", dims.ntheta, theta.len())?;
    if tau < 0.0 {
        return Err(Error::Domain(format!("negative barrier value {tau}")));
    }
    let stat = problem.lagrangian_gradient(&w.z, &w.lam, &w.mu, theta)?;
    let eq = problem.equalities(&w.z, theta)?;
    let ineq = problem.inequalities(&w.z, theta)? + &w.s;
    let comp = w.mu.component_mul(&w.s).add_scalar(-tau);
    KktResidual::new(stat, eq, ineq, comp)
}

/// Lagrangian `f + λᵀg + μᵀh` and its gradient in `z`.
pub fn lagrangian_value_grad<P: Nlp + ?Sized>(
    problem: &P,
    w: &Iterate,
    theta: &ParamVector,
) -> Result<(f64, DVector<f64>)> {
    w.dims_match(problem.nlp_dims())?;
    let value = problem.objective(&w.z, theta)?
        + w.lam.dot(&problem.equalities(&w.z, theta)?)
        + w.mu.dot(&problem.inequalities(&w.z, theta)?);
    if !value.is_finite() {
        return Err(Error::Evaluation {
            block: KktBlock::Stationarity,
            index: 0,
        });
    }
    let grad = problem.lagrangian_gradient(&w.z, &w.lam, &w.mu, theta)?;
    Ok((value, grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegularityDiagnostics {
    /// Constraint `i` is classified active iff `μ_i ≥ s_i`.
    pub active_set: Vec<bool>,
    /// `min_i max(μ_i, s_i)`; `+∞` without inequalities.
    pub strict_comp_margin: f64,
    /// Outcome of the reduced-Hessian positivity check, when a factorization
    /// has been attempted.
    pub hessian_inertia_ok: Option<bool>,
}

impl RegularityDiagnostics {
    pub fn active_count(&self) -> usize {
        self.active_set.iter().filter(|&&a| a).count()
    }
}

pub fn strict_complementarity_margin(w: &Iterate) -> RegularityDiagnostics {
    let active_set = w
        .mu
        .iter()
        .zip(w.s.iter())
        .map(|(&m, &s)| m >= s)
        .collect();
    let strict_comp_margin = w
        .mu
        .iter()
        .zip(w.s.iter())
        .map(|(&m, &s)| m.max(s))
        .fold(f64::INFINITY, f64::min);
    RegularityDiagnostics {
        active_set,
        strict_comp_margin,
        hessian_inertia_ok: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn margin_classification() {
        let w = Iterate {
            z: DVector::zeros(0),
            lam: DVector::zeros(0),
            mu: DVector::from_vec(vec![1e-8, 2.0]),
            s: DVector::from_vec(vec![3.0, 1e-8]),
        };
        let d = strict_complementarity_margin(&w);
        assert_eq!(d.active_set, vec![false, true]);
        assert_eq!(d.strict_comp_margin, 2.0);
        assert_eq!(d.active_count(), 1);
    }

    #[test]
    fn margin_without_inequalities() {
        let w = Iterate::zeros(NlpDims {
            nz: 2,
            ng: 1,
            nh: 0,
            ntheta: 0,
        });
        let d = strict_complementarity_margin(&w);
        assert!(d.active_set.is_empty());
        assert_eq!(d.strict_comp_margin, f64::INFINITY);
    }

    #[test]
    fn flat_round_trip() {
        let dims = NlpDims {
            nz: 3,
            ng: 2,
            nh: 1,
            ntheta: 0,
        };
        let w = Iterate {
            z: DVector::from_vec(vec![1.0, 2.0, 3.0]),
            lam: DVector::from_vec(vec![4.0, 5.0]),
            mu: DVector::from_vec(vec![6.0]),
            s: DVector::from_vec(vec![7.0]),
        };
        let flat = w.to_flat();
        assert_eq!(flat.as_slice(), &[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
        assert_eq!(Iterate::from_flat(dims, &flat).unwrap(), w);
    }

    #[test]
    fn residual_rejects_non_finite() {
        let r = KktResidual::new(
            DVector::from_vec(vec![0.0]),
            DVector::zeros(0),
            DVector::from_vec(vec![0.0, f64::NAN]),
            DVector::zeros(2),
        );
        assert_eq!(
            r,
            Err(Error::Evaluation {
                block: KktBlock::Inequality,
                index: 1
            })
        );
    }
}
