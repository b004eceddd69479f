//! Double-double arithmetic for the exponentially ill-conditioned Gram pencils.
//!
//! Observation Gramians on `J(Lambda)` have condition numbers near `exp(K sqrt(Lambda))`, past
//! `1e16` within the first few dozen modes, so their Cholesky factors are formed with about
//! 32 significant digits. Inputs are ordinary `f64` data; only the factorization and the
//! triangular solves run in extended precision.

use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub, SubAssign};

/// Unevaluated sum `hi + lo` with `|lo| <= ulp(hi) / 2`.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Dd {
    pub hi: f64,
    pub lo: f64,
}

#[inline]
fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    (s, (a - (s - bb)) + (b - bb))
}

#[inline]
fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    (s, b - (s - a))
}

impl Dd {
    pub const ZERO: Dd = Dd { hi: 0.0, lo: 0.0 };
    pub const ONE: Dd = Dd { hi: 1.0, lo: 0.0 };
    const LN_2: Dd = Dd {
        hi: std::f64::consts::LN_2,
        lo: 2.319_046_813_846_299_6e-17,
    };

    #[inline]
    pub fn new(x: f64) -> Self {
        Dd { hi: x, lo: 0.0 }
    }

    /// Exact product of two doubles.
    #[inline]
    pub fn prod(a: f64, b: f64) -> Self {
        let p = a * b;
        Dd {
            hi: p,
            lo: a.mul_add(b, -p),
        }
    }

    #[inline]
    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    #[inline]
    fn renorm(hi: f64, lo: f64) -> Self {
        let (hi, lo) = quick_two_sum(hi, lo);
        Dd { hi, lo }
    }

    #[inline]
    pub fn mul_f64(self, b: f64) -> Self {
        let p = Dd::prod(self.hi, b);
        Dd::renorm(p.hi, p.lo + self.lo * b)
    }

    pub fn sqrt(self) -> Self {
        if self.hi <= 0.0 {
            return Dd::new(self.hi.sqrt());
        }
        let s = Dd::new(self.hi.sqrt());
        s + (self - s * s) / s.mul_f64(2.0)
    }

    /// `exp(self)`, accurate to a few units of `1e-32` relative.
    pub fn exp(self) -> Self {
        if self.hi < -745.0 {
            return Dd::ZERO;
        }
        let k = (self.hi / std::f64::consts::LN_2).round();
        let r = (self - Dd::LN_2.mul_f64(k)).mul_f64(1.0 / 16.0);
        let mut term = Dd::ONE;
        let mut sum = Dd::ONE;
        for n in 1..=20 {
            term = term * r / Dd::new(n as f64);
            sum += term;
        }
        for _ in 0..4 {
            sum = sum * sum;
        }
        // split the power of two so subnormal results still scale exactly when possible
        let e = k as i32;
        let (e1, e2) = (e / 2, e - e / 2);
        let (s1, s2) = (2f64.powi(e1), 2f64.powi(e2));
        Dd {
            hi: sum.hi * s1 * s2,
            lo: sum.lo * s1 * s2,
        }
    }

    /// `1 - exp(-x)` for `x >= 0`.
    pub fn one_minus_exp_neg(x: Dd) -> Self {
        if x.hi < 0.5 {
            // alternating series avoids the cancellation in 1 - exp(-x)
            let mut term = x;
            let mut sum = x;
            let mut n = 1.0;
            while term.hi.abs() > 1e-34 * sum.hi.abs() {
                n += 1.0;
                term = -(term * x) / Dd::new(n);
                sum += term;
            }
            sum
        } else {
            Dd::ONE - (-x).exp()
        }
    }
}

impl From<f64> for Dd {
    fn from(x: f64) -> Self {
        Dd::new(x)
    }
}

impl Neg for Dd {
    type Output = Dd;
    #[inline]
    fn neg(self) -> Dd {
        Dd {
            hi: -self.hi,
            lo: -self.lo,
        }
    }
}

impl Add for Dd {
    type Output = Dd;
    #[inline]
    fn add(self, b: Dd) -> Dd {
        let (s, e) = two_sum(self.hi, b.hi);
        let (t, f) = two_sum(self.lo, b.lo);
        let (s, e) = quick_two_sum(s, e + t);
        Dd::renorm(s, e + f)
    }
}

impl Sub for Dd {
    type Output = Dd;
    #[inline]
    fn sub(self, b: Dd) -> Dd {
        self + (-b)
    }
}

impl Mul for Dd {
    type Output = Dd;
    #[inline]
    fn mul(self, b: Dd) -> Dd {
        let p = Dd::prod(self.hi, b.hi);
        Dd::renorm(p.hi, p.lo + (self.hi * b.lo + self.lo * b.hi))
    }
}

impl Div for Dd {
    type Output = Dd;
    fn div(self, b: Dd) -> Dd {
        let q1 = self.hi / b.hi;
        let r = self - b.mul_f64(q1);
        let q2 = r.hi / b.hi;
        let r = r - b.mul_f64(q2);
        let q3 = r.hi / b.hi;
        let (q1, q2) = quick_two_sum(q1, q2);
        Dd { hi: q1, lo: q2 } + Dd::new(q3)
    }
}

impl AddAssign for Dd {
    #[inline]
    fn add_assign(&mut self, b: Dd) {
        *self = *self + b;
    }
}

impl SubAssign for Dd {
    #[inline]
    fn sub_assign(&mut self, b: Dd) {
        *self = *self - b;
    }
}

/// Dense square matrix in row-major order.
#[derive(Debug, Clone, PartialEq)]
pub struct DdMatrix {
    n: usize,
    data: Vec<Dd>,
}

impl DdMatrix {
    pub fn zeros(n: usize) -> Self {
        Self {
            n,
            data: vec![Dd::ZERO; n * n],
        }
    }

    pub fn from_fn(n: usize, f: impl Fn(usize, usize) -> Dd) -> Self {
        let mut data = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                data.push(f(i, j));
            }
        }
        Self { n, data }
    }

    /// `R^T R` with every product and sum carried in double-double.
    pub fn gram_of(rows: faer::MatRef<'_, f64>) -> Self {
        let n = rows.ncols();
        let mut g = Self::zeros(n);
        for i in 0..n {
            for j in 0..=i {
                let mut s = Dd::ZERO;
                for r in 0..rows.nrows() {
                    s += Dd::prod(rows[(r, i)], rows[(r, j)]);
                }
                g[(i, j)] = s;
                g[(j, i)] = s;
            }
        }
        g
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn to_f64(&self) -> faer::Mat<f64> {
        faer::Mat::from_fn(self.n, self.n, |i, j| self[(i, j)].to_f64())
    }

    pub fn trace(&self) -> Dd {
        (0..self.n).fold(Dd::ZERO, |s, i| s + self[(i, i)])
    }

    /// Lower Cholesky factor, or `None` at the first non-positive pivot.
    pub fn cholesky(&self) -> Option<DdMatrix> {
        let n = self.n;
        let mut l = DdMatrix::zeros(n);
        for j in 0..n {
            let mut d = self[(j, j)];
            for k in 0..j {
                d -= l[(j, k)] * l[(j, k)];
            }
            if !(d.hi > 0.0) {
                return None;
            }
            let djj = d.sqrt();
            l[(j, j)] = djj;
            for i in j + 1..n {
                let mut s = self[(i, j)];
                for k in 0..j {
                    s -= l[(i, k)] * l[(j, k)];
                }
                l[(i, j)] = s / djj;
            }
        }
        Some(l)
    }

    /// Solves `L x = b` in place for lower-triangular `self`.
    pub fn solve_lower(&self, b: &mut [Dd]) {
        for i in 0..self.n {
            let mut s = b[i];
            for k in 0..i {
                s -= self[(i, k)] * b[k];
            }
            b[i] = s / self[(i, i)];
        }
    }

    /// Solves `L^T x = b` in place for lower-triangular `self`.
    pub fn solve_lower_transpose(&self, b: &mut [Dd]) {
        for i in (0..self.n).rev() {
            let mut s = b[i];
            for k in i + 1..self.n {
                s -= self[(k, i)] * b[k];
            }
            b[i] = s / self[(i, i)];
        }
    }

    /// `L^{-1} diag(d)` for lower-triangular `self`, itself lower triangular.
    pub fn lower_inverse_scaled_dd(&self, d: &[Dd]) -> DdMatrix {
        let n = self.n;
        let mut out = DdMatrix::zeros(n);
        for j in 0..n {
            out[(j, j)] = d[j] / self[(j, j)];
            for i in j + 1..n {
                let mut s = Dd::ZERO;
                for k in j..i {
                    s -= self[(i, k)] * out[(k, j)];
                }
                out[(i, j)] = s / self[(i, i)];
            }
        }
        out
    }

    /// `L^{-1} diag(d)` rounded to `f64`.
    pub fn lower_inverse_scaled(&self, d: &[Dd]) -> faer::Mat<f64> {
        self.lower_inverse_scaled_dd(d).to_f64()
    }

    /// `X diag(v) X^T` for lower-triangular `self = X`, rounded to `f64` and symmetric.
    pub fn lower_congruence(&self, v: &[Dd]) -> faer::Mat<f64> {
        let n = self.n;
        let mut out = faer::Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let mut s = Dd::ZERO;
                for k in 0..=j {
                    s += self[(i, k)] * self[(j, k)] * v[k];
                }
                let x = s.to_f64();
                out[(i, j)] = x;
                out[(j, i)] = x;
            }
        }
        out
    }
}

impl std::ops::Index<(usize, usize)> for DdMatrix {
    type Output = Dd;
    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &Dd {
        &self.data[i * self.n + j]
    }
}

impl std::ops::IndexMut<(usize, usize)> for DdMatrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut Dd {
        &mut self.data[i * self.n + j]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn err(a: Dd, hi: f64, lo: f64) -> f64 {
        ((a - Dd { hi, lo }).to_f64() / hi).abs()
    }

    #[test]
    fn exp_reaches_double_double_accuracy() {
        // reference digits from a 40-digit evaluation
        let cases = [
            (-0.4, 0.6703200460356393, -4.1681506122420287e-17),
            (-7.5, 0.0005530843701478336, -4.382887767098959e-20),
            (-23.0, 1.026187963170189e-10, 1.2076075579263726e-27),
            (-80.3, 1.3370667937385733e-35, 8.316791215531916e-52),
        ];
        for (x, hi, lo) in cases {
            let e = err(Dd::new(x).exp(), hi, lo);
            assert!(e < 1e-30, "x = {x}: {e:e} {:?}", Dd::new(x).exp());
        }
    }

    #[test]
    fn division_and_sqrt() {
        let third = Dd::ONE / Dd::new(3.0);
        assert!(err(third, 0.3333333333333333, 1.850371707708594e-17) < 1e-31);
        let r2 = Dd::new(2.0).sqrt();
        assert!(err(r2, std::f64::consts::SQRT_2, -9.667293313452913e-17) < 1e-31);
    }

    #[test]
    fn one_minus_exp_neg_is_continuous() {
        for x in [1e-8, 0.1, 0.49, 0.51, 3.0] {
            let a = Dd::one_minus_exp_neg(Dd::new(x));
            let b = Dd::ONE - Dd::new(-x).exp();
            assert!(((a - b).to_f64() / a.to_f64()).abs() < 1e-29 / x.min(1.0), "x = {x}");
        }
    }

    #[test]
    fn hilbert_cholesky_beyond_double_precision() {
        // the 14x14 Hilbert matrix has condition ~ 1e19
        let n = 14;
        let h = DdMatrix::from_fn(n, |i, j| Dd::ONE / Dd::new((i + j + 1) as f64));
        let l = h.cholesky().expect("positive definite in double-double");
        let x_true: Vec<Dd> = (0..n).map(|i| Dd::new(1.0 + i as f64)).collect();
        let mut b: Vec<Dd> = (0..n)
            .map(|i| (0..n).fold(Dd::ZERO, |s, j| s + h[(i, j)] * x_true[j]))
            .collect();
        l.solve_lower(&mut b);
        l.solve_lower_transpose(&mut b);
        for (x, t) in b.iter().zip(&x_true) {
            assert!(((*x - *t).to_f64() / t.hi).abs() < 1e-9);
        }
        let inv = l.lower_inverse_scaled(&vec![Dd::ONE; n]);
        let mut col: Vec<Dd> = (0..n).map(|i| Dd::new(if i == 3 { 1.0 } else { 0.0 })).collect();
        l.solve_lower(&mut col);
        for i in 0..n {
            assert!((inv[(i, 3)] - col[i].to_f64()).abs() <= 1e-15 * col[i].to_f64().abs());
        }
    }
}
