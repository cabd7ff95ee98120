//! Exact dense linear algebra over Q(i) and fraction-free elimination over Q.

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Signed, Zero};

use crate::error::Error;
use crate::gaussian::{GaussianRational, Rational};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CMatrix {
    rows: usize,
    cols: usize,
    data: Vec<GaussianRational>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix { rows, cols, data: vec![GaussianRational::zero(); rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = CMatrix::zeros(n, n);
        for i in 0..n {
            m.set(i, i, GaussianRational::one());
        }
        m
    }

    pub fn diag(entries: &[GaussianRational]) -> Self {
        let mut m = CMatrix::zeros(entries.len(), entries.len());
        for (i, e) in entries.iter().enumerate() {
            m.set(i, i, e.clone());
        }
        m
    }

    /// `diag(-I_ell, I_{n-ell})`
    pub fn signature(n: usize, ell: usize) -> Self {
        let d: Vec<GaussianRational> =
            (0..n).map(|j| GaussianRational::from(if j < ell { -1 } else { 1 })).collect();
        CMatrix::diag(&d)
    }

    pub fn from_rows(rows: Vec<Vec<GaussianRational>>) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        assert!(rows.iter().all(|row| row.len() == c), "ragged matrix");
        CMatrix { rows: r, cols: c, data: rows.into_iter().flatten().collect() }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, i: usize, j: usize) -> &GaussianRational {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: GaussianRational) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> Vec<GaussianRational> {
        self.data[i * self.cols..(i + 1) * self.cols].to_vec()
    }

    pub fn col(&self, j: usize) -> Vec<GaussianRational> {
        (0..self.rows).map(|i| self.get(i, j).clone()).collect()
    }

    pub fn to_rows(&self) -> Vec<Vec<GaussianRational>> {
        (0..self.rows).map(|i| self.row(i)).collect()
    }

    pub fn is_zero(&self) -> bool {
        self.data.iter().all(GaussianRational::is_zero)
    }

    pub fn mul(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.cols, other.rows, "matrix product shape");
        let mut out = CMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.get(i, k);
                if a.is_zero() {
                    continue;
                }
                for j in 0..other.cols {
                    let b = other.get(k, j);
                    if !b.is_zero() {
                        out.data[i * other.cols + j] += &(a * b);
                    }
                }
            }
        }
        out
    }

    /// Row vector times matrix.
    pub fn left_mul(&self, y: &[GaussianRational]) -> Vec<GaussianRational> {
        assert_eq!(y.len(), self.rows, "row vector length");
        let mut out = vec![GaussianRational::zero(); self.cols];
        for (i, yi) in y.iter().enumerate() {
            if yi.is_zero() {
                continue;
            }
            for (j, o) in out.iter_mut().enumerate() {
                *o += &(yi * self.get(i, j));
            }
        }
        out
    }

    pub fn add(&self, other: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        CMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().zip(&other.data).map(|(a, b)| a + b).collect() }
    }

    pub fn sub(&self, other: &CMatrix) -> CMatrix {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        CMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect() }
    }

    pub fn scale(&self, c: &GaussianRational) -> CMatrix {
        CMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|a| a * c).collect() }
    }

    pub fn transpose(&self) -> CMatrix {
        let mut out = CMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j).clone());
            }
        }
        out
    }

    /// Conjugate transpose.
    pub fn adjoint(&self) -> CMatrix {
        let mut out = CMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out.set(j, i, self.get(i, j).conj());
            }
        }
        out
    }

    pub fn conj(&self) -> CMatrix {
        CMatrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(GaussianRational::conj).collect() }
    }

    pub fn is_hermitian(&self) -> bool {
        self.rows == self.cols && *self == self.adjoint()
    }

    /// Row-echelon reduction; returns the reduced matrix and pivot columns.
    fn echelon(&self) -> (CMatrix, Vec<usize>) {
        let mut m = self.clone();
        let mut pivots = Vec::new();
        let mut r = 0;
        for c in 0..m.cols {
            if r == m.rows {
                break;
            }
            let Some(p) = (r..m.rows).find(|&i| !m.get(i, c).is_zero()) else { continue };
            m.swap_rows(r, p);
            let inv = m.get(r, c).inv().expect("nonzero pivot");
            for j in c..m.cols {
                let v = m.get(r, j) * &inv;
                m.set(r, j, v);
            }
            for i in 0..m.rows {
                if i == r || m.get(i, c).is_zero() {
                    continue;
                }
                let f = m.get(i, c).clone();
                for j in c..m.cols {
                    let v = m.get(i, j) - &(&f * m.get(r, j));
                    m.set(i, j, v);
                }
            }
            pivots.push(c);
            r += 1;
        }
        (m, pivots)
    }

    pub fn swap_rows(&mut self, a: usize, b: usize) {
        if a == b {
            return;
        }
        for j in 0..self.cols {
            self.data.swap(a * self.cols + j, b * self.cols + j);
        }
    }

    pub fn rank(&self) -> usize {
        self.echelon().1.len()
    }

    pub fn inverse(&self) -> Option<CMatrix> {
        if self.rows != self.cols {
            return None;
        }
        let n = self.rows;
        let mut aug = CMatrix::zeros(n, 2 * n);
        for i in 0..n {
            for j in 0..n {
                aug.set(i, j, self.get(i, j).clone());
            }
            aug.set(i, n + i, GaussianRational::one());
        }
        let (red, piv) = aug.echelon();
        if piv.len() < n || piv[n - 1] != n - 1 {
            return None;
        }
        let mut out = CMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                out.set(i, j, red.get(i, n + j).clone());
            }
        }
        Some(out)
    }

    /// Basis of `{x : self * x = 0}`.
    pub fn nullspace(&self) -> Vec<Vec<GaussianRational>> {
        let (red, piv) = self.echelon();
        let free: Vec<usize> = (0..self.cols).filter(|c| !piv.contains(c)).collect();
        free.iter()
            .map(|&f| {
                let mut x = vec![GaussianRational::zero(); self.cols];
                x[f] = GaussianRational::one();
                for (r, &p) in piv.iter().enumerate() {
                    x[p] = -red.get(r, f);
                }
                x
            })
            .collect()
    }

    /// Solves `self * x = b` for one particular solution.
    pub fn solve(&self, b: &[GaussianRational]) -> Option<Vec<GaussianRational>> {
        assert_eq!(b.len(), self.rows);
        let mut aug = CMatrix::zeros(self.rows, self.cols + 1);
        for i in 0..self.rows {
            for j in 0..self.cols {
                aug.set(i, j, self.get(i, j).clone());
            }
            aug.set(i, self.cols, b[i].clone());
        }
        let (red, piv) = aug.echelon();
        if piv.last() == Some(&self.cols) {
            return None;
        }
        let mut x = vec![GaussianRational::zero(); self.cols];
        for (r, &p) in piv.iter().enumerate() {
            x[p] = red.get(r, self.cols).clone();
        }
        Some(x)
    }

    pub fn max_abs_entry_f64(&self) -> f64 {
        self.data
            .iter()
            .map(|v| {
                let (a, b) = v.to_f64_pair();
                a.hypot(b)
            })
            .fold(0.0, f64::max)
    }
}

// ---------------------------------------------------------------------------
// real rational systems

/// Outcome of an exact solve of `M x = b` over Q.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum SolveOutcome {
    /// A particular solution (free variables set to zero).
    Solution(Vec<Rational>),
    /// `y` with `y^T M = 0` and `y^T b != 0`.
    Inconsistent(Vec<Rational>),
}

/// Dense rational matrix with fraction-free (Bareiss) elimination.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct QMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<Rational>,
}

fn lcm_denominators<'a>(it: impl Iterator<Item = &'a Rational>) -> BigInt {
    it.fold(BigInt::one(), |acc, r| acc.lcm(r.denom()))
}

impl QMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        QMatrix { rows, cols, data: vec![Rational::zero(); rows * cols] }
    }

    pub fn get(&self, i: usize, j: usize) -> &Rational {
        &self.data[i * self.cols + j]
    }

    pub fn set(&mut self, i: usize, j: usize, v: Rational) {
        self.data[i * self.cols + j] = v;
    }

    pub fn mul_vec(&self, x: &[Rational]) -> Vec<Rational> {
        (0..self.rows)
            .map(|i| (0..self.cols).fold(Rational::zero(), |acc, j| acc + self.get(i, j) * &x[j]))
            .collect()
    }

    /// `y^T M`
    pub fn left_mul_vec(&self, y: &[Rational]) -> Vec<Rational> {
        (0..self.cols)
            .map(|j| (0..self.rows).fold(Rational::zero(), |acc, i| acc + &y[i] * self.get(i, j)))
            .collect()
    }

    /// Fraction-free forward elimination of `[M | b | I]` after clearing
    /// denominators row by row. Returns the integer echelon form, the pivot
    /// columns and the per-row scale factors.
    fn bareiss(&self, b: &[Rational]) -> (Vec<Vec<BigInt>>, Vec<usize>, Vec<BigInt>) {
        let (m, n) = (self.rows, self.cols);
        let width = n + 1 + m;
        let mut scales = Vec::with_capacity(m);
        let mut a: Vec<Vec<BigInt>> = (0..m)
            .map(|i| {
                let row = &self.data[i * n..(i + 1) * n];
                let l = lcm_denominators(row.iter().chain(std::iter::once(&b[i])));
                let mut out = Vec::with_capacity(width);
                for r in row.iter().chain(std::iter::once(&b[i])) {
                    out.push(r.numer() * (&l / r.denom()));
                }
                for k in 0..m {
                    out.push(if k == i { BigInt::one() } else { BigInt::zero() });
                }
                scales.push(l);
                out
            })
            .collect();
        let mut prev = BigInt::one();
        let mut r = 0;
        let mut pivots = Vec::new();
        for c in 0..n {
            if r == m {
                break;
            }
            let Some(p) = (r..m).find(|&i| !a[i][c].is_zero()) else { continue };
            a.swap(r, p);
            let piv = a[r][c].clone();
            for i in r + 1..m {
                let f = a[i][c].clone();
                for j in 0..width {
                    if j < c && j < n {
                        continue;
                    }
                    let v = &piv * &a[i][j] - &f * &a[r][j];
                    a[i][j] = v / &prev;
                }
            }
            prev = piv;
            pivots.push(c);
            r += 1;
        }
        (a, pivots, scales)
    }

    pub fn rank(&self) -> usize {
        let zero = vec![Rational::zero(); self.rows];
        self.bareiss(&zero).1.len()
    }

    pub fn solve(&self, b: &[Rational]) -> SolveOutcome {
        assert_eq!(b.len(), self.rows);
        let (m, n) = (self.rows, self.cols);
        let (a, pivots, scales) = self.bareiss(b);
        let rank = pivots.len();
        for row in a.iter().skip(rank) {
            if !row[n].is_zero() {
                // the identity block records the row combination; undo the
                // denominator clearing to express it against the input rows
                let y: Vec<Rational> = (0..m)
                    .map(|k| Rational::from_integer(&row[n + 1 + k] * &scales[k]))
                    .collect();
                let g = y.iter().filter(|v| !v.is_zero()).fold(BigInt::zero(), |g, v| g.gcd(v.numer()));
                let y = if g.is_zero() { y } else { y.into_iter().map(|v| v / Rational::from_integer(g.clone())).collect() };
                return SolveOutcome::Inconsistent(y);
            }
        }
        // back substitution on the echelon rows
        let mut x = vec![Rational::zero(); n];
        for (r, &p) in pivots.iter().enumerate().rev() {
            let mut acc = Rational::from_integer(a[r][n].clone());
            for j in p + 1..n {
                if !a[r][j].is_zero() && !x[j].is_zero() {
                    acc -= Rational::from_integer(a[r][j].clone()) * &x[j];
                }
            }
            x[p] = acc / Rational::from_integer(a[r][p].clone());
        }
        SolveOutcome::Solution(x)
    }

    /// Basis of the right kernel.
    pub fn nullspace(&self) -> Vec<Vec<Rational>> {
        let n = self.cols;
        let zero = vec![Rational::zero(); self.rows];
        let (a, pivots, _) = self.bareiss(&zero);
        let free: Vec<usize> = (0..n).filter(|c| !pivots.contains(c)).collect();
        free.iter()
            .map(|&f| {
                let mut x = vec![Rational::zero(); n];
                x[f] = Rational::one();
                for (r, &p) in pivots.iter().enumerate().rev() {
                    let mut acc = Rational::zero();
                    for j in p + 1..n {
                        if !a[r][j].is_zero() && !x[j].is_zero() {
                            acc -= Rational::from_integer(a[r][j].clone()) * &x[j];
                        }
                    }
                    x[p] = acc / Rational::from_integer(a[r][p].clone());
                }
                x
            })
            .collect()
    }
}

/// Connected components of the bipartite row/column incidence graph of a
/// sparse matrix given by its nonzero positions. Returns for each component
/// its sorted rows and columns; empty rows and columns form singleton
/// components.
pub fn split_blocks(rows: usize, cols: usize, nonzeros: &[(usize, usize)]) -> Vec<(Vec<usize>, Vec<usize>)> {
    let mut parent: Vec<usize> = (0..rows + cols).collect();
    fn find(p: &mut [usize], mut x: usize) -> usize {
        while p[x] != x {
            p[x] = p[p[x]];
            x = p[x];
        }
        x
    }
    for &(i, j) in nonzeros {
        let a = find(&mut parent, i);
        let b = find(&mut parent, rows + j);
        if a != b {
            parent[a.max(b)] = a.min(b);
        }
    }
    let mut groups: std::collections::BTreeMap<usize, (Vec<usize>, Vec<usize>)> = Default::default();
    for i in 0..rows {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().0.push(i);
    }
    for j in 0..cols {
        let r = find(&mut parent, rows + j);
        groups.entry(r).or_default().1.push(j);
    }
    groups.into_values().collect()
}

/// Number of positive and negative entries of a real diagonal.
pub fn inertia_of(diag: &[Rational]) -> (usize, usize) {
    let pos = diag.iter().filter(|d| d.is_positive()).count();
    let neg = diag.iter().filter(|d| d.is_negative()).count();
    (pos, neg)
}

fn form_product(x: &[GaussianRational], y: &[GaussianRational], j: &[Rational]) -> GaussianRational {
    let mut acc = GaussianRational::zero();
    for ((a, b), d) in x.iter().zip(y).zip(j) {
        acc += &(a * &b.conj()).scale(d);
    }
    acc
}

/// Row matrix of y -> y - c h(y, u) u, where h is the diagonal hermitian form `j`.
fn quasi_reflection(u: &[GaussianRational], c: &GaussianRational, j: &[Rational]) -> CMatrix {
    let n = u.len();
    let mut m = CMatrix::identity(n);
    for a in 0..n {
        let left = (c * &u[a].conj()).scale(&j[a]);
        for b in 0..n {
            let v = m.get(a, b) - &(&left * &u[b]);
            m.set(a, b, v);
        }
    }
    m
}

/// Unitary W for the diagonal form `j` with `src[i] W = dst[i]` for every i.
///
/// Sources are orthogonalized first; dependent sources must map to the matching
/// combination of targets. The extension is a product of rational quasi-reflections.
pub fn extend_isometry(src: &[Vec<GaussianRational>], dst: &[Vec<GaussianRational>], j: &[Rational]) -> Result<CMatrix, Error> {
    let n = j.len();
    if src.len() != dst.len() || src.iter().chain(dst).any(|v| v.len() != n) {
        return Err(Error::Mismatch("isometry data has inconsistent lengths".into()));
    }
    if j.iter().any(|d| d.is_zero()) {
        return Err(Error::Precondition("form must be nondegenerate".into()));
    }
    let mut basis: Vec<(Vec<GaussianRational>, Vec<GaussianRational>, GaussianRational)> = Vec::new();
    for (s, t) in src.iter().zip(dst) {
        let mut e = s.clone();
        let mut x = t.clone();
        for (eb, xb, norm) in &basis {
            let c = &form_product(s, eb, j) * &norm.inv().unwrap();
            for k in 0..n {
                e[k] -= &(&c * &eb[k]);
                x[k] -= &(&c * &xb[k]);
            }
        }
        let norm = form_product(&e, &e, j);
        if norm.is_zero() {
            if e.iter().all(|v| v.is_zero()) {
                if x.iter().all(|v| v.is_zero()) {
                    continue;
                }
                return Err(Error::Isometry("linear relation among sources is not preserved".into()));
            }
            return Err(Error::Precondition("isotropic source direction".into()));
        }
        basis.push((e, x, norm));
    }
    let mut w = CMatrix::identity(n);
    for (e, x, norm) in &basis {
        let winv = w.inverse().ok_or_else(|| Error::Singular("isometry factor".into()))?;
        let pulled = winv.left_mul(x);
        if &pulled == e {
            continue;
        }
        let mut step = CMatrix::identity(n);
        let mut e_cur = e.clone();
        let mut t = norm - &form_product(&e_cur, &pulled, j);
        if t.is_zero() {
            // e -> -e first so that the second reflection is defined
            let c = GaussianRational::from_real(Rational::from_integer(2.into())) * norm.inv().unwrap();
            step = quasi_reflection(&e_cur, &c, j);
            e_cur = e_cur.iter().map(|v| -v).collect();
            t = norm - &form_product(&e_cur, &pulled, j);
            if t.is_zero() {
                return Err(Error::Isometry("source and target norms differ".into()));
            }
        }
        if e_cur != pulled {
            let u: Vec<GaussianRational> = e_cur.iter().zip(&pulled).map(|(a, b)| a - b).collect();
            step = step.mul(&quasi_reflection(&u, &t.inv().unwrap(), j));
        }
        w = step.mul(&w);
    }
    let jm = CMatrix::diag(&j.iter().cloned().map(GaussianRational::from_real).collect::<Vec<_>>());
    if w.mul(&jm).mul(&w.adjoint()) != jm {
        return Err(Error::Isometry("source and target Gram matrices differ".into()));
    }
    for (s, t) in src.iter().zip(dst) {
        if &w.left_mul(s) != t {
            return Err(Error::Isometry("extension does not reproduce the targets".into()));
        }
    }
    Ok(w)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gaussian::{rat, rat_int};

    fn g(a: i64, b: i64) -> GaussianRational {
        GaussianRational::from_ints(a, b)
    }

    #[test]
    fn inverse_and_rank() {
        let m = CMatrix::from_rows(vec![vec![g(1, 1), g(2, 0)], vec![g(0, -1), g(3, 2)]]);
        let inv = m.inverse().unwrap();
        assert_eq!(m.mul(&inv), CMatrix::identity(2));
        let s = CMatrix::from_rows(vec![vec![g(1, 1), g(2, 0)], vec![g(2, 2), g(4, 0)]]);
        assert_eq!(s.rank(), 1);
        assert!(s.inverse().is_none());
        let ns = s.nullspace();
        assert_eq!(ns.len(), 1);
        let col = CMatrix::from_rows(ns[0].iter().map(|v| vec![v.clone()]).collect());
        assert!(s.mul(&col).is_zero());
    }

    #[test]
    fn bareiss_solution_and_certificate() {
        let mut m = QMatrix::zeros(3, 2);
        for (i, j, v) in [(0, 0, rat(1, 2)), (0, 1, rat(1, 3)), (1, 0, rat_int(1)), (1, 1, rat(2, 3)), (2, 1, rat_int(5))] {
            m.set(i, j, v);
        }
        // rows 0 and 1 are proportional
        let b = vec![rat_int(1), rat_int(2), rat_int(5)];
        match m.solve(&b) {
            SolveOutcome::Solution(x) => assert_eq!(m.mul_vec(&x), b),
            other => panic!("{other:?}"),
        }
        let b = vec![rat_int(1), rat_int(3), rat_int(5)];
        match m.solve(&b) {
            SolveOutcome::Inconsistent(y) => {
                assert!(m.left_mul_vec(&y).iter().all(Zero::is_zero));
                let yb: Rational = y.iter().zip(&b).map(|(a, c)| a * c).sum();
                assert!(!yb.is_zero());
            }
            other => panic!("{other:?}"),
        }
        assert_eq!(m.rank(), 2);
    }

    #[test]
    fn rational_nullspace() {
        let mut m = QMatrix::zeros(1, 3);
        m.set(0, 0, rat_int(1));
        m.set(0, 1, rat(1, 2));
        m.set(0, 2, rat_int(-3));
        let ns = m.nullspace();
        assert_eq!(ns.len(), 2);
        for x in ns {
            assert!(m.mul_vec(&x).iter().all(Zero::is_zero));
        }
    }

    #[test]
    fn blocks() {
        let b = split_blocks(3, 3, &[(0, 0), (1, 2), (2, 2)]);
        assert_eq!(b.len(), 3);
        assert!(b.contains(&(vec![0], vec![0])));
        assert!(b.contains(&(vec![1, 2], vec![2])));
        assert!(b.contains(&(vec![], vec![1])));
    }

    #[test]
    fn isometry_extension_maps_basis_to_null_frame() {
        // indefinite form, targets are a rotated frame
        let j = vec![rat_int(-1), rat_int(1), rat_int(1)];
        let src = vec![vec![g(0, 0), g(1, 0), g(0, 0)]];
        let dst = vec![vec![g(1, 0), g(1, 1), g(0, 0)]];
        let w = extend_isometry(&src, &dst, &j).unwrap();
        assert_eq!(w.left_mul(&src[0]), dst[0]);
        let bad = vec![vec![g(2, 0), g(0, 0), g(0, 0)]];
        assert!(extend_isometry(&src, &bad, &j).is_err());
        // target equal to minus source needs the preliminary flip
        let neg = vec![vec![g(0, 0), g(-1, 0), g(0, 0)]];
        let w = extend_isometry(&src, &neg, &j).unwrap();
        assert_eq!(w.left_mul(&src[0]), neg[0]);
    }
}
