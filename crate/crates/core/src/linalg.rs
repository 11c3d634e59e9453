//! Small dense square matrices: determinants, solves, singular values.

use crate::real::Real;

#[derive(Clone, Debug, PartialEq)]
pub struct Mat<T> {
    n: usize,
    data: Vec<T>,
}

impl<T: Real> Mat<T> {
    pub fn zeros(n: usize) -> Self {
        Mat { n, data: vec![T::zero(); n * n] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n);
        for i in 0..n {
            m[(i, i)] = T::one();
        }
        m
    }

    pub fn from_rows(rows: &[Vec<T>]) -> Self {
        let n = rows.len();
        let mut m = Self::zeros(n);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), n, "matrix must be square");
            for (j, &v) in r.iter().enumerate() {
                m[(i, j)] = v;
            }
        }
        m
    }

    pub fn from_int(rows: &[Vec<i64>]) -> Self {
        let r: Vec<Vec<T>> = rows
            .iter()
            .map(|row| row.iter().map(|&v| T::lit(v as f64)).collect())
            .collect();
        Self::from_rows(&r)
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn rows(&self) -> Vec<Vec<T>> {
        (0..self.n).map(|i| self.data[i * self.n..(i + 1) * self.n].to_vec()).collect()
    }

    pub fn mul_vec(&self, v: &[T]) -> Vec<T> {
        (0..self.n)
            .map(|i| {
                let mut s = T::zero();
                for j in 0..self.n {
                    s = s + self[(i, j)] * v[j];
                }
                s
            })
            .collect()
    }

    pub fn mul(&self, o: &Mat<T>) -> Mat<T> {
        let n = self.n;
        let mut m = Self::zeros(n);
        for i in 0..n {
            for k in 0..n {
                let a = self[(i, k)];
                if a == T::zero() {
                    continue;
                }
                for j in 0..n {
                    m[(i, j)] = m[(i, j)] + a * o[(k, j)];
                }
            }
        }
        m
    }

    pub fn transpose(&self) -> Mat<T> {
        let mut m = Self::zeros(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                m[(j, i)] = self[(i, j)];
            }
        }
        m
    }

    pub fn sub(&self, o: &Mat<T>) -> Mat<T> {
        Mat { n: self.n, data: self.data.iter().zip(&o.data).map(|(&a, &b)| a - b).collect() }
    }

    /// Determinant by partial-pivot elimination.
    pub fn det(&self) -> T {
        let n = self.n;
        let mut a = self.data.clone();
        let mut det = T::one();
        for c in 0..n {
            let mut p = c;
            for r in c + 1..n {
                if a[r * n + c].abs() > a[p * n + c].abs() {
                    p = r;
                }
            }
            if a[p * n + c] == T::zero() {
                return T::zero();
            }
            if p != c {
                for j in 0..n {
                    a.swap(c * n + j, p * n + j);
                }
                det = -det;
            }
            let piv = a[c * n + c];
            det = det * piv;
            for r in c + 1..n {
                let f = a[r * n + c] / piv;
                if f != T::zero() {
                    for j in c..n {
                        a[r * n + j] = a[r * n + j] - f * a[c * n + j];
                    }
                }
            }
        }
        det
    }

    /// Solves `self * x = b`; `None` when singular.
    pub fn solve(&self, b: &[T]) -> Option<Vec<T>> {
        let n = self.n;
        let mut a = self.data.clone();
        let mut x = b.to_vec();
        for c in 0..n {
            let mut p = c;
            for r in c + 1..n {
                if a[r * n + c].abs() > a[p * n + c].abs() {
                    p = r;
                }
            }
            if a[p * n + c] == T::zero() {
                return None;
            }
            if p != c {
                for j in 0..n {
                    a.swap(c * n + j, p * n + j);
                }
                x.swap(c, p);
            }
            let piv = a[c * n + c];
            for r in c + 1..n {
                let f = a[r * n + c] / piv;
                if f != T::zero() {
                    for j in c..n {
                        a[r * n + j] = a[r * n + j] - f * a[c * n + j];
                    }
                    x[r] = x[r] - f * x[c];
                }
            }
        }
        for c in (0..n).rev() {
            let mut s = x[c];
            for j in c + 1..n {
                s = s - a[c * n + j] * x[j];
            }
            x[c] = s / a[c * n + c];
        }
        if x.iter().all(|v| v.is_finite()) {
            Some(x)
        } else {
            None
        }
    }

    pub fn inverse(&self) -> Option<Mat<T>> {
        let n = self.n;
        let mut inv = Self::zeros(n);
        for j in 0..n {
            let mut e = vec![T::zero(); n];
            e[j] = T::one();
            let col = self.solve(&e)?;
            for i in 0..n {
                inv[(i, j)] = col[i];
            }
        }
        Some(inv)
    }

    /// Singular values in ascending order.
    pub fn singular_values(&self) -> Vec<T> {
        let ata = self.transpose().mul(self);
        let mut ev = sym_eigenvalues(&ata);
        for v in ev.iter_mut() {
            *v = v.max(T::zero()).sqrt();
        }
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
        ev
    }

    /// `1 / ||M^-1||_2`, i.e. the smallest singular value.
    pub fn min_norm(&self) -> T {
        if self.n == 2 {
            let (a, b, c, d) = (self[(0, 0)], self[(0, 1)], self[(1, 0)], self[(1, 1)]);
            let s = a * a + b * b + c * c + d * d;
            let det = (a * d - b * c).abs();
            let disc = (s * s - T::lit(4.0) * det * det).max(T::zero()).sqrt();
            let big = ((s + disc) / T::lit(2.0)).sqrt();
            if big == T::zero() {
                return T::zero();
            }
            return det / big;
        }
        self.singular_values()[0]
    }

    /// Operator 2-norm.
    pub fn norm2(&self) -> T {
        if self.n == 1 {
            return self.data[0].abs();
        }
        *self.singular_values().last().unwrap()
    }

    /// Induced infinity norm (max row sum).
    pub fn norm_inf(&self) -> T {
        (0..self.n)
            .map(|i| (0..self.n).fold(T::zero(), |s, j| s + self[(i, j)].abs()))
            .fold(T::zero(), T::max)
    }
}

impl<T> std::ops::Index<(usize, usize)> for Mat<T> {
    type Output = T;
    fn index(&self, (i, j): (usize, usize)) -> &T {
        &self.data[i * self.n + j]
    }
}

impl<T> std::ops::IndexMut<(usize, usize)> for Mat<T> {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut T {
        &mut self.data[i * self.n + j]
    }
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations.
pub fn sym_eigenvalues<T: Real>(m: &Mat<T>) -> Vec<T> {
    let n = m.dim();
    let mut a = m.clone();
    let two = T::lit(2.0);
    for _sweep in 0..64 {
        let mut off = T::zero();
        for i in 0..n {
            for j in i + 1..n {
                off = off + a[(i, j)] * a[(i, j)];
            }
        }
        let scale = (0..n).fold(T::zero(), |s, i| s + a[(i, i)] * a[(i, i)]);
        if off <= T::epsilon() * T::epsilon() * scale.max(T::min_positive_value()) {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == T::zero() {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (two * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + T::one()).sqrt());
                let c = T::one() / (t * t + T::one()).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    (0..n).map(|i| a[(i, i)]).collect()
}

/// Exact determinant of an integer matrix (Bareiss).
pub fn int_det(rows: &[Vec<i64>]) -> i128 {
    let n = rows.len();
    let mut a: Vec<Vec<i128>> = rows.iter().map(|r| r.iter().map(|&v| v as i128).collect()).collect();
    let mut sign = 1i128;
    let mut prev = 1i128;
    for k in 0..n {
        if a[k][k] == 0 {
            match (k + 1..n).find(|&r| a[r][k] != 0) {
                Some(r) => {
                    a.swap(k, r);
                    sign = -sign;
                }
                None => return 0,
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) / prev;
            }
        }
        prev = a[k][k];
    }
    sign * a[n - 1][n - 1]
}

/// Integer adjugate, so that `A * adj(A) = det(A) I`.
pub fn int_adjugate(rows: &[Vec<i64>]) -> Vec<Vec<i128>> {
    let n = rows.len();
    if n == 1 {
        return vec![vec![1]];
    }
    let mut adj = vec![vec![0i128; n]; n];
    for i in 0..n {
        for j in 0..n {
            let minor: Vec<Vec<i64>> = rows
                .iter()
                .enumerate()
                .filter(|&(r, _)| r != i)
                .map(|(_, row)| row.iter().enumerate().filter(|&(c, _)| c != j).map(|(_, &v)| v).collect())
                .collect();
            let s = if (i + j) % 2 == 0 { 1 } else { -1 };
            adj[j][i] = s * int_det(&minor);
        }
    }
    adj
}

/// Coset representatives of `Z^n / A Z^n`: integer points `r` with `A^-1 r` in `[0,1)^n`.
pub fn lattice_residues(rows: &[Vec<i64>]) -> Vec<Vec<i64>> {
    let n = rows.len();
    let det = int_det(rows);
    assert!(det != 0, "singular linear part");
    let adj = int_adjugate(rows);
    // bounding box of A [0,1]^n
    let mut lo = vec![0i64; n];
    let mut hi = vec![0i64; n];
    for i in 0..n {
        for j in 0..n {
            let a = rows[i][j];
            if a < 0 {
                lo[i] += a;
            } else {
                hi[i] += a;
            }
        }
    }
    let mut out = Vec::new();
    let mut r = lo.clone();
    loop {
        let inside = (0..n).all(|i| {
            let v: i128 = (0..n).map(|j| adj[i][j] * r[j] as i128).sum();
            if det > 0 {
                v >= 0 && v < det
            } else {
                v <= 0 && v > det
            }
        });
        if inside {
            out.push(r.clone());
        }
        let mut k = 0;
        loop {
            if k == n {
                return out;
            }
            r[k] += 1;
            if r[k] <= hi[k] {
                break;
            }
            r[k] = lo[k];
            k += 1;
        }
    }
}
