//! Two-field block systems `[[uu, uq], [qu, qq]] (u, q) = (f, g)`.

use super::csr::{SparseMatrix, Triplets};
use crate::error::{Error, Result};

/// Coupled system in the primal unknown and the multiplier, with essential
/// (zero) conditions on a subset of multiplier degrees of freedom.
#[derive(Debug, Clone)]
pub struct BlockSystem {
    pub uu: SparseMatrix,
    pub uq: SparseMatrix,
    pub qu: SparseMatrix,
    pub qq: SparseMatrix,
    pub rhs_u: Vec<f64>,
    pub rhs_q: Vec<f64>,
    /// Multiplier indices fixed to zero. Sorted.
    pub constrained_q: Vec<usize>,
}

impl BlockSystem {
    /// Size of the primal block.
    pub fn n_u(&self) -> usize {
        self.uu.dim()
    }

    pub fn n_q(&self) -> usize {
        self.qq.dim()
    }

    fn check(&self) -> Result<()> {
        let (nu, nq) = (self.n_u(), self.n_q());
        // Blocks are stored square; the coupling blocks need nu == nq.
        let ok = self.uq.dim() == nu
            && self.qu.dim() == nu
            && nu == nq
            && self.rhs_u.len() == nu
            && self.rhs_q.len() == nq
            && self.constrained_q.iter().all(|&i| i < nq);
        if ok {
            Ok(())
        } else {
            Err(Error::Dimension(format!(
                "inconsistent blocks: uu {nu}, uq {}, qu {}, qq {nq}, rhs {}+{}",
                self.uq.dim(),
                self.qu.dim(),
                self.rhs_u.len(),
                self.rhs_q.len()
            )))
        }
    }

    /// Global matrix with primal unknowns first and multipliers second.
    /// Constrained multiplier rows become identity rows with zero right-hand
    /// side and their columns are removed.
    pub fn compose(&self) -> Result<(SparseMatrix, Vec<f64>)> {
        self.check()?;
        let nu = self.n_u();
        let n = nu + self.n_q();
        let mut fixed = vec![false; self.n_q()];
        for &i in &self.constrained_q {
            fixed[i] = true;
        }
        let mut t = Triplets::with_capacity(
            n,
            self.uu.nnz() + self.uq.nnz() + self.qu.nnz() + self.qq.nnz(),
        );
        self.uu.push_into(&mut t, 0, 0);
        for i in 0..nu {
            let (cols, vals) = self.uq.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if !fixed[j] {
                    t.push(i, nu + j, v);
                }
            }
        }
        for i in 0..self.n_q() {
            if fixed[i] {
                t.push(nu + i, nu + i, 1.0);
                continue;
            }
            let (cols, vals) = self.qu.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                t.push(nu + i, j, v);
            }
            let (cols, vals) = self.qq.row(i);
            for (&j, &v) in cols.iter().zip(vals) {
                if !fixed[j] {
                    t.push(nu + i, nu + j, v);
                }
            }
        }
        let mut rhs = Vec::with_capacity(n);
        rhs.extend_from_slice(&self.rhs_u);
        rhs.extend(
            self.rhs_q
                .iter()
                .enumerate()
                .map(|(i, &g)| if fixed[i] { 0.0 } else { g }),
        );
        Ok((t.finalize()?, rhs))
    }

    /// Splits a global solution into `(u, q)`.
    pub fn split(&self, x: Vec<f64>) -> (Vec<f64>, Vec<f64>) {
        let mut u = x;
        let q = u.split_off(self.n_u());
        (u, q)
    }
}
