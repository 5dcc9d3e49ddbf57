//! Forward-mode dual numbers and derivative helpers.
//!
//! Model functions are written once, generically over [`Real`], and evaluated
//! on `f64` for values, on [`Dual<f64>`] for Jacobians and on
//! `Dual<Dual<f64>>` for exact second derivatives.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Scalar type model functions are generic over.
pub trait Real:
    Copy
    + Debug
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + Add<f64, Output = Self>
    + Sub<f64, Output = Self>
    + Mul<f64, Output = Self>
    + Div<f64, Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    fn from_f64(v: f64) -> Self;
    /// Underlying real value, dropping all infinitesimal parts.
    fn value(&self) -> f64;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn tanh(self) -> Self;
    fn powi(self, n: i32) -> Self;
    /// Absolute value; differentiating it at zero poisons the derivative.
    fn abs(self) -> Self;

    fn zero() -> Self {
        Self::from_f64(0.0)
    }
}

impl Real for f64 {
    fn from_f64(v: f64) -> Self {
        v
    }
    fn value(&self) -> f64 {
        *self
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn tanh(self) -> Self {
        f64::tanh(self)
    }
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    fn abs(self) -> Self {
        f64::abs(self)
    }
}

/// Dual number `re + eps·ε` with `ε² = 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Dual<T> {
    pub re: T,
    pub eps: T,
}

impl<T: Real> Dual<T> {
    pub fn new(re: T, eps: T) -> Self {
        Dual { re, eps }
    }

    pub fn constant(re: T) -> Self {
        Dual { re, eps: T::zero() }
    }

    pub fn variable(re: T) -> Self {
        Dual {
            re,
            eps: T::from_f64(1.0),
        }
    }
}

impl<T: Real> Add for Dual<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Dual::new(self.re + o.re, self.eps + o.eps)
    }
}

impl<T: Real> Sub for Dual<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Dual::new(self.re - o.re, self.eps - o.eps)
    }
}

impl<T: Real> Mul for Dual<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Dual::new(self.re * o.re, self.re * o.eps + self.eps * o.re)
    }
}

impl<T: Real> Div for Dual<T> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let re = self.re / o.re;
        Dual::new(re, (self.eps - re * o.eps) / o.re)
    }
}

impl<T: Real> Neg for Dual<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Dual::new(-self.re, -self.eps)
    }
}

impl<T: Real> Add<f64> for Dual<T> {
    type Output = Self;
    fn add(self, o: f64) -> Self {
        Dual::new(self.re + o, self.eps)
    }
}

impl<T: Real> Sub<f64> for Dual<T> {
    type Output = Self;
    fn sub(self, o: f64) -> Self {
        Dual::new(self.re - o, self.eps)
    }
}

impl<T: Real> Mul<f64> for Dual<T> {
    type Output = Self;
    fn mul(self, o: f64) -> Self {
        Dual::new(self.re * o, self.eps * o)
    }
}

impl<T: Real> Div<f64> for Dual<T> {
    type Output = Self;
    fn div(self, o: f64) -> Self {
        Dual::new(self.re / o, self.eps / o)
    }
}

impl<T: Real> AddAssign for Dual<T> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<T: Real> SubAssign for Dual<T> {
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<T: Real> MulAssign for Dual<T> {
    fn mul_assign(&mut self, o: Self) {
        *self = *self * o;
    }
}

impl<T: Real> Real for Dual<T> {
    fn from_f64(v: f64) -> Self {
        Dual::constant(T::from_f64(v))
    }
    fn value(&self) -> f64 {
        self.re.value()
    }
    fn sin(self) -> Self {
        Dual::new(self.re.sin(), self.re.cos() * self.eps)
    }
    fn cos(self) -> Self {
        Dual::new(self.re.cos(), -(self.re.sin() * self.eps))
    }
    fn exp(self) -> Self {
        let e = self.re.exp();
        Dual::new(e, e * self.eps)
    }
    fn ln(self) -> Self {
        Dual::new(self.re.ln(), self.eps / self.re)
    }
    fn sqrt(self) -> Self {
        let r = self.re.sqrt();
        Dual::new(r, self.eps / (r * 2.0))
    }
    fn tanh(self) -> Self {
        let t = self.re.tanh();
        Dual::new(t, (T::from_f64(1.0) - t * t) * self.eps)
    }
    fn powi(self, n: i32) -> Self {
        if n == 0 {
            return Dual::from_f64(1.0);
        }
        let lower = self.re.powi(n - 1);
        Dual::new(lower * self.re, lower * (n as f64) * self.eps)
    }
    fn abs(self) -> Self {
        let v = self.re.value();
        if v > 0.0 {
            self
        } else if v < 0.0 {
            -self
        } else {
            Dual::new(self.re.abs(), T::from_f64(f64::NAN))
        }
    }
}

pub type HyperDual = Dual<Dual<f64>>;

/// Scalar-valued function evaluable on any [`Real`].
pub trait ScalarFn {
    fn call<S: Real>(&self, x: &[S]) -> S;
}

/// Vector-valued function evaluable on any [`Real`].
pub trait VectorFn {
    fn call<S: Real>(&self, x: &[S]) -> Vec<S>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    First,
    Second,
}

#[derive(Debug, Clone)]
pub struct Derivatives {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: Option<DMatrix<f64>>,
}

fn checked(value: f64, derivative: f64) -> Result<f64> {
    if !value.is_finite() {
        return Err(Error::Domain("non-finite function value".into()));
    }
    if !derivative.is_finite() {
        return Err(Error::Unsupported("non-smooth primitive in differentiated expression"));
    }
    Ok(derivative)
}

/// Value, gradient and (for [`Order::Second`]) Hessian of a scalar function.
pub fn derivatives<F: ScalarFn>(f: &F, x: &[f64], order: Order) -> Result<Derivatives> {
    match order {
        Order::First => {
            let (value, gradient) = gradient(f, x)?;
            Ok(Derivatives {
                value,
                gradient,
                hessian: None,
            })
        }
        Order::Second => {
            let (value, gradient, hessian) = hessian(f, x)?;
            Ok(Derivatives {
                value,
                gradient,
                hessian: Some(hessian),
            })
        }
    }
}

pub fn gradient<F: ScalarFn>(f: &F, x: &[f64]) -> Result<(f64, DVector<f64>)> {
    let all: Vec<usize> = (0..x.len()).collect();
    gradient_wrt(f, x, &all)
}

/// Value and partial gradient with respect to the entries listed in `wrt`.
pub fn gradient_wrt<F: ScalarFn>(f: &F, x: &[f64], wrt: &[usize]) -> Result<(f64, DVector<f64>)> {
    let value = f.call(x);
    if !value.is_finite() {
        return Err(Error::Domain("non-finite function value".into()));
    }
    let mut grad = DVector::zeros(wrt.len());
    let mut seeded: Vec<Dual<f64>> = x.iter().map(|&v| Dual::constant(v)).collect();
    for (k, &i) in wrt.iter().enumerate() {
        seeded[i].eps = 1.0;
        let out = f.call(&seeded);
        seeded[i].eps = 0.0;
        grad[k] = checked(out.re, out.eps)?;
    }
    Ok((value, grad))
}

/// Value and Jacobian (rows = outputs) of a vector function.
pub fn jacobian<F: VectorFn>(f: &F, x: &[f64]) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let all: Vec<usize> = (0..x.len()).collect();
    jacobian_wrt(f, x, &all)
}

/// Value and the Jacobian columns for the entries listed in `wrt`.
pub fn jacobian_wrt<F: VectorFn>(
    f: &F,
    x: &[f64],
    wrt: &[usize],
) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let value = DVector::from_vec(f.call(x));
    if value.iter().any(|v| !v.is_finite()) {
        return Err(Error::Domain("non-finite function value".into()));
    }
    let mut jac = DMatrix::zeros(value.len(), wrt.len());
    let mut seeded: Vec<Dual<f64>> = x.iter().map(|&v| Dual::constant(v)).collect();
    for (k, &j) in wrt.iter().enumerate() {
        seeded[j].eps = 1.0;
        let out = f.call(&seeded);
        seeded[j].eps = 0.0;
        for (i, o) in out.iter().enumerate() {
            jac[(i, k)] = checked(o.re, o.eps)?;
        }
    }
    Ok((value, jac))
}

/// Value, gradient and Hessian via nested duals.
pub fn hessian<F: ScalarFn>(f: &F, x: &[f64]) -> Result<(f64, DVector<f64>, DMatrix<f64>)> {
    let all: Vec<usize> = (0..x.len()).collect();
    let (value, grad) = gradient(f, x)?;
    let hess = mixed_second_derivatives(f, x, &all, &all)?;
    Ok((value, grad, hess))
}

/// Block `∂²f/∂x_r∂x_c` for `r ∈ rows`, `c ∈ cols`.
///
/// When the two index sets coincide only the upper triangle is evaluated.
pub fn mixed_second_derivatives<F: ScalarFn>(
    f: &F,
    x: &[f64],
    rows: &[usize],
    cols: &[usize],
) -> Result<DMatrix<f64>> {
    let symmetric = rows == cols;
    let mut out = DMatrix::zeros(rows.len(), cols.len());
    let mut seeded: Vec<HyperDual> = x
        .iter()
        .map(|&v| Dual::constant(Dual::constant(v)))
        .collect();
    for (a, &r) in rows.iter().enumerate() {
        for (b, &c) in cols.iter().enumerate() {
            if symmetric && b < a {
                continue;
            }
            seeded[r].re.eps = 1.0;
            seeded[c].eps.re = 1.0;
            let v = f.call(&seeded);
            seeded[r].re.eps = 0.0;
            seeded[c].eps.re = 0.0;
            let d = checked(v.re.re, v.eps.eps)?;
            out[(a, b)] = d;
            if symmetric {
                out[(b, a)] = d;
            }
        }
    }
    Ok(out)
}
