use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Feature reordering that moves far-apart features next to each other.
///
/// Features `1..=N` are laid out row-major in an `R×L` grid (`L =
/// ceil(sqrt N)`, `R = ceil(N / L)`, trailing cells left empty); reading
/// the transposed grid row-major, skipping the empty cells, gives the
/// sequence. `M[i][sequence[i] - 1] = 1`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PermutationSpec {
    n: usize,
    rows: usize,
    cols: usize,
    /// 1-based feature numbers in their new order.
    sequence: Vec<usize>,
}

pub fn build_permutation(n: usize) -> Result<PermutationSpec> {
    PermutationSpec::new(n)
}

impl PermutationSpec {
    pub fn new(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::Config(format!("permutation needs at least 2 features, got {n}")));
        }
        let cols = ceil_sqrt(n);
        let rows = n.div_ceil(cols);
        let mut sequence = Vec::with_capacity(n);
        for c in 0..cols {
            for r in 0..rows {
                let element = r * cols + c + 1;
                if element <= n {
                    sequence.push(element);
                }
            }
        }
        let spec = Self {
            n,
            rows,
            cols,
            sequence,
        };
        if spec.is_identity() {
            log::warn!("permutation for N={n} is the identity; the P branch sees A unchanged");
        }
        Ok(spec)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Grid shape `(R, L)`.
    pub fn grid(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn sequence(&self) -> &[usize] {
        &self.sequence
    }

    pub fn is_identity(&self) -> bool {
        self.sequence.iter().enumerate().all(|(i, &s)| s == i + 1)
    }

    /// The 0/1 matrix `M` as integers, row-major `N×N`.
    pub fn matrix(&self) -> Vec<u8> {
        let mut m = vec![0u8; self.n * self.n];
        for (i, &s) in self.sequence.iter().enumerate() {
            m[i * self.n + s - 1] = 1;
        }
        m
    }

    pub fn matrix_tensor(&self) -> Tensor {
        let data = self.matrix().into_iter().map(f64::from).collect();
        Tensor::new(vec![self.n, self.n], data).expect("square matrix")
    }

    /// The permutation undoing this one (`M⁻¹ = Mᵀ`).
    pub fn inverse(&self) -> Self {
        let mut sequence = vec![0; self.n];
        for (i, &s) in self.sequence.iter().enumerate() {
            sequence[s - 1] = i + 1;
        }
        Self {
            n: self.n,
            rows: self.rows,
            cols: self.cols,
            sequence,
        }
    }

    /// `M·A·Mᵀ` by direct indexing: `P[i][j] = A[s_i][s_j]`.
    pub fn permute(&self, a: &Tensor) -> Result<Tensor> {
        if a.shape() != [self.n, self.n] {
            return Err(Error::Dimension {
                op: "permute_matrix",
                lhs: a.shape().to_vec(),
                rhs: vec![self.n, self.n],
            });
        }
        let n = self.n;
        let src = a.data();
        let mut out = Vec::with_capacity(n * n);
        for &si in &self.sequence {
            for &sj in &self.sequence {
                out.push(src[(si - 1) * n + sj - 1]);
            }
        }
        Tensor::new(vec![n, n], out)
    }
}

fn ceil_sqrt(n: usize) -> usize {
    let mut r = (n as f64).sqrt() as usize;
    while r * r < n {
        r += 1;
    }
    while r > 1 && (r - 1) * (r - 1) >= n {
        r -= 1;
    }
    r
}
