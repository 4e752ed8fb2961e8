//! Coordinate assembly, compressed rows, and a direct solve with residual control.

use crate::error::{Error, Result};
use faer::prelude::*;
use faer::sparse::{SparseColMat, Triplet};
use faer::Mat;

#[derive(Clone, Debug, Default)]
pub struct Triplets {
    pub n: usize,
    pub entries: Vec<(usize, usize, f64)>,
}

impl Triplets {
    pub fn new(n: usize) -> Self {
        Self { n, entries: Vec::new() }
    }

    #[inline]
    pub fn push(&mut self, r: usize, c: usize, v: f64) {
        if v != 0.0 {
            self.entries.push((r, c, v));
        }
    }

    pub fn to_csr(&self) -> Csr {
        let mut e = self.entries.clone();
        e.sort_by_key(|a| (a.0, a.1));
        let mut indptr = vec![0usize; self.n + 1];
        let mut indices = Vec::with_capacity(e.len());
        let mut data: Vec<f64> = Vec::with_capacity(e.len());
        let mut last: Option<(usize, usize)> = None;
        for (r, c, v) in e {
            if last == Some((r, c)) {
                *data.last_mut().unwrap() += v;
            } else {
                indices.push(c);
                data.push(v);
                indptr[r + 1] += 1;
                last = Some((r, c));
            }
        }
        for r in 0..self.n {
            indptr[r + 1] += indptr[r];
        }
        Csr { n: self.n, indptr, indices, data }
    }
}

/// Square matrix in compressed sparse row form.
#[derive(Clone, Debug)]
pub struct Csr {
    pub n: usize,
    pub indptr: Vec<usize>,
    pub indices: Vec<usize>,
    pub data: Vec<f64>,
}

impl Csr {
    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n)
            .map(|r| (self.indptr[r]..self.indptr[r + 1]).map(|q| self.data[q] * x[self.indices[q]]).sum())
            .collect()
    }

    /// x^T A y.
    pub fn form(&self, x: &[f64], y: &[f64]) -> f64 {
        dot(x, &self.matvec(y))
    }

    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let mut d = vec![vec![0.0; self.n]; self.n];
        for r in 0..self.n {
            for q in self.indptr[r]..self.indptr[r + 1] {
                d[r][self.indices[q]] += self.data[q];
            }
        }
        d
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        (self.indptr[r]..self.indptr[r + 1]).filter(|&q| self.indices[q] == c).map(|q| self.data[q]).sum()
    }

    /// Largest |A_ij - A_ji|.
    pub fn asymmetry(&self) -> f64 {
        let mut m: f64 = 0.0;
        for r in 0..self.n {
            for q in self.indptr[r]..self.indptr[r + 1] {
                let c = self.indices[q];
                m = m.max((self.data[q] - self.get(c, r)).abs());
            }
        }
        m
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Reusable sparse LU factorization of a square matrix.
pub struct Factorization {
    a: Csr,
    lu: faer::sparse::linalg::solvers::Lu<usize, f64>,
}

impl Factorization {
    pub fn new(a: &Csr) -> Result<Self> {
        let n = a.n;
        let mut trip = Vec::with_capacity(a.data.len());
        for r in 0..n {
            for q in a.indptr[r]..a.indptr[r + 1] {
                trip.push(Triplet::new(r, a.indices[q], a.data[q]));
            }
        }
        let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &trip)
            .map_err(|e| Error::Solver { reason: format!("matrix build: {e:?}"), residual: f64::NAN })?;
        let lu = mat.sp_lu().map_err(|e| Error::Solver { reason: format!("factorization: {e:?}"), residual: f64::NAN })?;
        Ok(Self { a: a.clone(), lu })
    }

    /// Solve with iterative refinement until the relative residual is at most `tol`.
    pub fn solve(&self, b: &[f64], tol: f64) -> Result<(Vec<f64>, f64)> {
        let n = self.a.n;
        let bn = norm(b);
        if bn == 0.0 {
            return Ok((vec![0.0; n], 0.0));
        }
        let mut x = vec![0.0; n];
        let mut res = b.to_vec();
        let mut rel = 1.0;
        for _ in 0..4 {
            let mut rhs = Mat::<f64>::zeros(n, 1);
            for i in 0..n {
                rhs[(i, 0)] = res[i];
            }
            let dx = self.lu.solve(&rhs);
            for i in 0..n {
                x[i] += dx[(i, 0)];
            }
            let ax = self.a.matvec(&x);
            for i in 0..n {
                res[i] = b[i] - ax[i];
            }
            rel = norm(&res) / bn;
            if !rel.is_finite() {
                break;
            }
            if rel <= tol {
                return Ok((x, rel));
            }
        }
        Err(Error::Solver { reason: "residual above tolerance".into(), residual: rel })
    }
}

/// One-shot factor and solve.
pub fn solve(a: &Csr, b: &[f64], tol: f64) -> Result<(Vec<f64>, f64)> {
    if norm(b) == 0.0 {
        return Ok((vec![0.0; a.n], 0.0));
    }
    Factorization::new(a)?.solve(b, tol)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn duplicates_are_summed_and_solve_works() {
        let mut t = Triplets::new(3);
        t.push(0, 0, 1.0);
        t.push(0, 0, 1.0);
        t.push(1, 1, 3.0);
        t.push(2, 2, 1.0);
        t.push(0, 2, 1.0);
        t.push(2, 0, 0.5);
        let a = t.to_csr();
        assert_eq!(a.get(0, 0), 2.0);
        let (x, r) = solve(&a, &[3.0, 3.0, 1.5], 1e-14).unwrap();
        assert!(r < 1e-14);
        assert!((x[0] - 1.0).abs() < 1e-14 && (x[1] - 1.0).abs() < 1e-14 && (x[2] - 1.0).abs() < 1e-14);
        assert_eq!(a.asymmetry(), 0.5);
    }
}
