//! Differentiable primitives.
//!
//! Each primitive has a forward function and a `*_backward` function that maps
//! the upstream gradient to the gradients of its inputs. The slice kernels at
//! the bottom are the hot-path versions used by the encoders and the model.

use super::tensor::{Shape, Tensor};
use crate::error::{Error, Result};
use crate::scalar::{self, Scalar};

fn same_shape<T: Scalar>(op: &'static str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() == b.shape() {
        Ok(())
    } else {
        Err(Error::Shape {
            op,
            lhs: a.shape().dims(),
            rhs: b.shape().dims(),
        })
    }
}

fn zip_map<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>, f: impl Fn(T, T) -> T) -> Tensor<T> {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_vec(a.shape(), data).expect("shape preserved")
}

fn map<T: Scalar>(a: &Tensor<T>, f: impl Fn(T) -> T) -> Tensor<T> {
    let data = a.data().iter().map(|&x| f(x)).collect();
    Tensor::from_vec(a.shape(), data).expect("shape preserved")
}

fn vector_len<T: Scalar>(op: &'static str, a: &Tensor<T>) -> Result<usize> {
    match a.shape() {
        Shape::Vector(n) => Ok(n),
        s => Err(Error::Shape {
            op,
            lhs: s.dims(),
            rhs: vec![],
        }),
    }
}

pub fn add<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    same_shape("add", a, b)?;
    Ok(zip_map(a, b, |x, y| x + y))
}

pub fn add_backward<T: Scalar>(upstream: &Tensor<T>) -> (Tensor<T>, Tensor<T>) {
    (upstream.clone(), upstream.clone())
}

pub fn scale<T: Scalar>(a: &Tensor<T>, s: T) -> Tensor<T> {
    map(a, |x| x * s)
}

/// Gradients with respect to `a` and to the scale factor.
pub fn scale_backward<T: Scalar>(a: &Tensor<T>, s: T, upstream: &Tensor<T>) -> Result<(Tensor<T>, T)> {
    same_shape("scale_backward", a, upstream)?;
    let ds = dot(a.data(), upstream.data());
    Ok((scale(upstream, s), ds))
}

pub fn elementwise_mul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    same_shape("elementwise_mul", a, b)?;
    Ok(zip_map(a, b, |x, y| x * y))
}

pub fn elementwise_mul_backward<T: Scalar>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    upstream: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    same_shape("elementwise_mul_backward", a, b)?;
    same_shape("elementwise_mul_backward", a, upstream)?;
    Ok((zip_map(upstream, b, |g, y| g * y), zip_map(upstream, a, |g, x| g * x)))
}

pub fn matvec<T: Scalar>(m: &Tensor<T>, x: &Tensor<T>) -> Result<Tensor<T>> {
    let (rows, cols) = match m.shape() {
        Shape::Matrix(r, c) => (r, c),
        s => {
            return Err(Error::Shape {
                op: "matvec",
                lhs: s.dims(),
                rhs: x.shape().dims(),
            })
        }
    };
    if x.shape() != Shape::Vector(cols) {
        return Err(Error::Shape {
            op: "matvec",
            lhs: m.shape().dims(),
            rhs: x.shape().dims(),
        });
    }
    let mut out = vec![T::zero(); rows];
    matvec_into(m.data(), rows, cols, x.data(), &mut out);
    Ok(Tensor::vector(out))
}

/// Returns `(dM, dx)` with `dM = g xᵀ` and `dx = Mᵀ g`.
pub fn matvec_backward<T: Scalar>(
    m: &Tensor<T>,
    x: &Tensor<T>,
    upstream: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (rows, cols) = m.shape().as_rows();
    if x.shape() != Shape::Vector(cols) || upstream.shape() != Shape::Vector(rows) {
        return Err(Error::Shape {
            op: "matvec_backward",
            lhs: m.shape().dims(),
            rhs: upstream.shape().dims(),
        });
    }
    let mut dm = vec![T::zero(); rows * cols];
    outer_acc(&mut dm, upstream.data(), x.data());
    let mut dx = vec![T::zero(); cols];
    matvec_t_acc(m.data(), rows, cols, upstream.data(), &mut dx);
    Ok((Tensor::matrix(rows, cols, dm)?, Tensor::vector(dx)))
}

pub fn concat<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    vector_len("concat", a)?;
    vector_len("concat", b)?;
    let mut data = a.data().to_vec();
    data.extend_from_slice(b.data());
    Ok(Tensor::vector(data))
}

/// Splits the upstream gradient at `left_len`.
pub fn concat_backward<T: Scalar>(left_len: usize, upstream: &Tensor<T>) -> Result<(Tensor<T>, Tensor<T>)> {
    let n = vector_len("concat_backward", upstream)?;
    if left_len > n {
        return Err(Error::Shape {
            op: "concat_backward",
            lhs: vec![left_len],
            rhs: vec![n],
        });
    }
    let (l, r) = upstream.data().split_at(left_len);
    Ok((Tensor::vector(l.to_vec()), Tensor::vector(r.to_vec())))
}

/// Sums the rows of a matrix into a vector.
pub fn sum_rows<T: Scalar>(m: &Tensor<T>) -> Tensor<T> {
    let (rows, cols) = m.shape().as_rows();
    let mut out = vec![T::zero(); cols];
    for r in 0..rows {
        axpy(T::one(), m.row(r), &mut out);
    }
    Tensor::vector(out)
}

pub fn sum_rows_backward<T: Scalar>(rows: usize, upstream: &Tensor<T>) -> Result<Tensor<T>> {
    let cols = vector_len("sum_rows_backward", upstream)?;
    let data = (0..rows).flat_map(|_| upstream.data().iter().copied()).collect();
    Tensor::matrix(rows, cols, data)
}

pub fn l1_dist<T: Scalar>(u: &Tensor<T>, v: &Tensor<T>) -> Result<T> {
    same_shape("l1_dist", u, v)?;
    Ok(u.data().iter().zip(v.data()).map(|(&a, &b)| (a - b).abs()).sum())
}

/// Subgradient with `sign(0) = 0`.
pub fn l1_dist_backward<T: Scalar>(u: &Tensor<T>, v: &Tensor<T>, upstream: T) -> Result<(Tensor<T>, Tensor<T>)> {
    same_shape("l1_dist_backward", u, v)?;
    let du = zip_map(u, v, |a, b| upstream * sign(a - b));
    let dv = map(&du, |x| -x);
    Ok((du, dv))
}

pub fn sq_l2_dist<T: Scalar>(u: &Tensor<T>, v: &Tensor<T>) -> Result<T> {
    same_shape("sq_l2_dist", u, v)?;
    Ok(u.data().iter().zip(v.data()).map(|(&a, &b)| (a - b) * (a - b)).sum())
}

pub fn sq_l2_dist_backward<T: Scalar>(u: &Tensor<T>, v: &Tensor<T>, upstream: T) -> Result<(Tensor<T>, Tensor<T>)> {
    same_shape("sq_l2_dist_backward", u, v)?;
    let du = zip_map(u, v, |a, b| upstream * T::two() * (a - b));
    let dv = map(&du, |x| -x);
    Ok((du, dv))
}

pub fn sigmoid<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    map(x, scalar::sigmoid)
}

/// Uses the forward output `y = σ(x)`.
pub fn sigmoid_backward<T: Scalar>(y: &Tensor<T>, upstream: &Tensor<T>) -> Result<Tensor<T>> {
    same_shape("sigmoid_backward", y, upstream)?;
    Ok(zip_map(y, upstream, |s, g| g * s * (T::one() - s)))
}

pub fn tanh<T: Scalar>(x: &Tensor<T>) -> Tensor<T> {
    map(x, T::tanh)
}

/// Uses the forward output `y = tanh(x)`.
pub fn tanh_backward<T: Scalar>(y: &Tensor<T>, upstream: &Tensor<T>) -> Result<Tensor<T>> {
    same_shape("tanh_backward", y, upstream)?;
    Ok(zip_map(y, upstream, |t, g| g * (T::one() - t * t)))
}

pub fn softmax<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    vector_len("softmax", x)?;
    let mut out = x.data().to_vec();
    softmax_in_place(&mut out);
    Ok(Tensor::vector(out))
}

/// Uses the forward output `y = softmax(x)`.
pub fn softmax_backward<T: Scalar>(y: &Tensor<T>, upstream: &Tensor<T>) -> Result<Tensor<T>> {
    same_shape("softmax_backward", y, upstream)?;
    let mut out = vec![T::zero(); y.len()];
    softmax_backward_into(y.data(), upstream.data(), &mut out);
    Ok(Tensor::vector(out))
}

// ---- slice kernels -------------------------------------------------------

#[inline]
pub(crate) fn sign<T: Scalar>(x: T) -> T {
    if x > T::zero() {
        T::one()
    } else if x < T::zero() {
        -T::one()
    } else {
        T::zero()
    }
}

#[inline]
pub(crate) fn dot<T: Scalar>(a: &[T], b: &[T]) -> T {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(&x, &y)| x * y).sum()
}

/// `y += alpha * x`
#[inline]
pub(crate) fn axpy<T: Scalar>(alpha: T, x: &[T], y: &mut [T]) {
    debug_assert_eq!(x.len(), y.len());
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += alpha * xi;
    }
}

/// `out = M x` for row-major `M` of shape `rows × cols`.
pub(crate) fn matvec_into<T: Scalar>(m: &[T], rows: usize, cols: usize, x: &[T], out: &mut [T]) {
    debug_assert_eq!(m.len(), rows * cols);
    debug_assert_eq!(x.len(), cols);
    for (r, o) in out.iter_mut().enumerate().take(rows) {
        *o = dot(&m[r * cols..(r + 1) * cols], x);
    }
}

/// `out += M x`
pub(crate) fn matvec_acc<T: Scalar>(m: &[T], rows: usize, cols: usize, x: &[T], out: &mut [T]) {
    for (r, o) in out.iter_mut().enumerate().take(rows) {
        *o += dot(&m[r * cols..(r + 1) * cols], x);
    }
}

/// `out += Mᵀ g`
pub(crate) fn matvec_t_acc<T: Scalar>(m: &[T], rows: usize, cols: usize, g: &[T], out: &mut [T]) {
    debug_assert_eq!(g.len(), rows);
    debug_assert_eq!(out.len(), cols);
    for (r, &gr) in g.iter().enumerate() {
        if gr != T::zero() {
            axpy(gr, &m[r * cols..(r + 1) * cols], out);
        }
    }
}

/// `dm += g xᵀ`
pub(crate) fn outer_acc<T: Scalar>(dm: &mut [T], g: &[T], x: &[T]) {
    let cols = x.len();
    debug_assert_eq!(dm.len(), g.len() * cols);
    for (r, &gr) in g.iter().enumerate() {
        if gr != T::zero() {
            axpy(gr, x, &mut dm[r * cols..(r + 1) * cols]);
        }
    }
}

pub(crate) fn softmax_in_place<T: Scalar>(x: &mut [T]) {
    let max = x.iter().copied().fold(T::neg_infinity(), T::max);
    let mut total = T::zero();
    for v in x.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in x.iter_mut() {
        *v = *v / total;
    }
}

pub(crate) fn softmax_backward_into<T: Scalar>(y: &[T], g: &[T], out: &mut [T]) {
    let inner = dot(y, g);
    for ((o, &yi), &gi) in out.iter_mut().zip(y).zip(g) {
        *o = yi * (gi - inner);
    }
}
