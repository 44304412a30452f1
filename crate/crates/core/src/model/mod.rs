//! The EAPCR network.
//!
//! For one encoded row `x` of `N` feature indices:
//!
//! ```text
//! E = embedding[x]                (N×d)
//! A = E·Eᵀ                        (N×N feature correlation)
//! P = M·A·Mᵀ                      (A with rows/columns permuted)
//! h = concat(cnn_a(A), cnn_p(P))
//! ŷ = head(h) + mlp(flatten(E))   (residual merge at the output)
//! ```
//!
//! Each CNN branch is conv3×3(1→c1) → relu → maxpool2 → conv3×3(c1→c2) →
//! relu → maxpool2 → flatten, with unshared weights between branches.

mod permutation;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use permutation::{build_permutation, PermutationSpec};

use crate::error::{Error, Result};
use crate::features::EncodedRow;
use crate::tensor::{Tape, Tensor, Var};

/// Architecture hyperparameters independent of the data.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ArchConfig {
    /// Embedding size `d`.
    pub embed_dim: usize,
    pub conv_channels: [usize; 2],
    pub mlp_hidden: Vec<usize>,
    pub output_dim: usize,
}

impl Default for ArchConfig {
    fn default() -> Self {
        Self {
            embed_dim: 128,
            conv_channels: [8, 16],
            mlp_hidden: vec![64],
            output_dim: 1,
        }
    }
}

/// Full model shape: architecture plus the per-column index-space sizes
/// produced by the fitted feature encoder.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub arch: ArchConfig,
    pub cardinalities: Vec<usize>,
}

impl ModelConfig {
    pub fn new(arch: ArchConfig, cardinalities: Vec<usize>) -> Result<Self> {
        let config = Self { arch, cardinalities };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let a = &self.arch;
        if self.cardinalities.len() < 2 {
            return Err(Error::Config(format!(
                "model needs N >= 2 features, got {}",
                self.cardinalities.len()
            )));
        }
        if self.cardinalities.contains(&0) {
            return Err(Error::Config("every column needs a non-empty index space".into()));
        }
        if a.embed_dim == 0 || a.output_dim == 0 || a.conv_channels.contains(&0) {
            return Err(Error::Config(
                "embed_dim, output_dim and conv channels must be positive".into(),
            ));
        }
        if a.mlp_hidden.contains(&0) {
            return Err(Error::Config("hidden layer widths must be positive".into()));
        }
        Ok(())
    }

    pub fn n_features(&self) -> usize {
        self.cardinalities.len()
    }

    /// Rows of the shared embedding table.
    pub fn vocab_total(&self) -> usize {
        self.cardinalities.iter().sum()
    }

    /// First embedding row of each column.
    pub fn offsets(&self) -> Vec<usize> {
        self.cardinalities
            .iter()
            .scan(0, |acc, &c| {
                let start = *acc;
                *acc += c;
                Some(start)
            })
            .collect()
    }

    /// Length of one CNN branch's flattened output.
    pub fn branch_features(&self) -> usize {
        let side = self.n_features().div_ceil(2).div_ceil(2);
        self.arch.conv_channels[1] * side * side
    }

    /// Names and shapes of every parameter tensor, in storage order.
    pub fn layout(&self) -> Vec<(String, Vec<usize>)> {
        let [c1, c2] = self.arch.conv_channels;
        let d = self.arch.embed_dim;
        let mut out = vec![("embedding".to_owned(), vec![self.vocab_total(), d])];
        for branch in ["branch_a", "branch_p"] {
            out.push((format!("{branch}.conv1.kernels"), vec![c1, 1, 3, 3]));
            out.push((format!("{branch}.conv1.bias"), vec![c1]));
            out.push((format!("{branch}.conv2.kernels"), vec![c2, c1, 3, 3]));
            out.push((format!("{branch}.conv2.bias"), vec![c2]));
        }
        let out_dim = self.arch.output_dim;
        out.push(("head.weight".into(), vec![out_dim, 2 * self.branch_features()]));
        out.push(("head.bias".into(), vec![out_dim]));
        let mut fan_in = self.n_features() * d;
        let widths = self.arch.mlp_hidden.iter().copied().chain([out_dim]);
        for (i, width) in widths.enumerate() {
            out.push((format!("mlp.{i}.weight"), vec![width, fan_in]));
            out.push((format!("mlp.{i}.bias"), vec![width]));
            fan_in = width;
        }
        out
    }
}

// storage positions within `EapcrParams::tensors`
const EMBEDDING: usize = 0;
const BRANCH_A: usize = 1;
const BRANCH_P: usize = 5;
const HEAD: usize = 9;
const MLP: usize = 11;

/// All learnable tensors of one model, stored in [`ModelConfig::layout`]
/// order.
#[derive(Clone, Debug, PartialEq)]
pub struct EapcrParams {
    config: ModelConfig,
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl EapcrParams {
    /// Glorot-uniform weights, bound `sqrt(6 / (fan_in + fan_out))`, and
    /// zero biases, drawn from a ChaCha stream seeded with `seed`.
    pub fn init(config: &ModelConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (names, shapes): (Vec<_>, Vec<_>) = config.layout().into_iter().unzip();
        let tensors = shapes
            .into_iter()
            .map(|shape| {
                let numel = shape.iter().product();
                let data = match fans(&shape) {
                    None => vec![0.0; numel],
                    Some((fan_in, fan_out)) => {
                        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                        (0..numel).map(|_| rng.gen_range(-bound..bound)).collect()
                    }
                };
                Tensor::new(shape, data)
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            config: config.clone(),
            names,
            tensors,
        })
    }

    /// Rebuilds parameters from named tensors, checking every name and
    /// shape against the config's layout.
    pub fn from_named(config: ModelConfig, named: Vec<(String, Tensor)>) -> Result<Self> {
        config.validate()?;
        let layout = config.layout();
        if layout.len() != named.len() {
            return Err(Error::Format(format!(
                "expected {} parameter tensors, found {}",
                layout.len(),
                named.len()
            )));
        }
        let mut names = Vec::with_capacity(named.len());
        let mut tensors = Vec::with_capacity(named.len());
        for ((want_name, want_shape), (name, tensor)) in layout.into_iter().zip(named) {
            if want_name != name || want_shape != tensor.shape() {
                return Err(Error::Format(format!(
                    "parameter `{name}` {:?} does not match expected `{want_name}` {want_shape:?}",
                    tensor.shape()
                )));
            }
            if !tensor.is_finite() {
                return Err(Error::Format(format!("parameter `{name}` is not finite")));
            }
            names.push(name);
            tensors.push(tensor.with_requires_grad(false));
        }
        Ok(Self { config, names, tensors })
    }

    pub fn config(&self) -> &ModelConfig {
        &self.config
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn named(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names.iter().position(|n| n == name).map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        let i = self.names.iter().position(|n| n == name)?;
        Some(&mut self.tensors[i])
    }

    pub fn embedding(&self) -> &Tensor {
        &self.tensors[EMBEDDING]
    }

    pub fn parameter_count(&self) -> usize {
        self.tensors.iter().map(Tensor::numel).sum()
    }

    /// Records every parameter on `tape` along with the permutation
    /// constants. Parameters receive gradients iff `trainable`.
    pub fn register(&self, tape: &mut Tape, spec: &PermutationSpec, trainable: bool) -> Result<ModelVars> {
        if spec.n() != self.config.n_features() {
            return Err(Error::Dimension {
                op: "register",
                lhs: vec![spec.n()],
                rhs: vec![self.config.n_features()],
            });
        }
        let params = self
            .tensors
            .iter()
            .map(|t| tape.leaf(t.clone().with_requires_grad(trainable)))
            .collect::<Result<_>>()?;
        let perm = tape.constant(spec.matrix_tensor())?;
        let perm_t = tape.transpose(perm)?;
        Ok(ModelVars { params, perm, perm_t })
    }
}

fn fans(shape: &[usize]) -> Option<(usize, usize)> {
    match shape {
        [_] => None,
        [out, inp] => Some((*inp, *out)),
        [c_out, c_in, kh, kw] => Some((c_in * kh * kw, c_out * kh * kw)),
        _ => unreachable!("no parameter of rank {}", shape.len()),
    }
}

/// Tape handles for one registered [`EapcrParams`].
#[derive(Clone, Debug)]
pub struct ModelVars {
    /// Parameter handles in layout order.
    pub params: Vec<Var>,
    perm: Var,
    perm_t: Var,
}

/// Tape handles of one row's intermediate values.
#[derive(Clone, Copy, Debug)]
pub struct TraceVars {
    pub e: Var,
    pub a: Var,
    pub p: Var,
    pub z: Var,
    pub branch_a: Var,
    pub branch_p: Var,
    pub head: Var,
    pub mlp: Var,
    pub prediction: Var,
}

/// Values of every intermediate of one forward pass.
#[derive(Clone, Debug, PartialEq)]
pub struct ForwardTrace {
    /// Embedded features, `N×d`.
    pub e: Tensor,
    /// Correlation matrix `E·Eᵀ`.
    pub a: Tensor,
    /// Permuted correlation matrix `M·A·Mᵀ`.
    pub p: Tensor,
    /// Flattened embedding fed to the residual MLP.
    pub z: Tensor,
    pub branch_a: Tensor,
    pub branch_p: Tensor,
    /// Fully connected head over both branches.
    pub head: Tensor,
    /// Residual MLP output.
    pub mlp: Tensor,
    pub prediction: Tensor,
}

/// Global embedding rows of `x`, validating each local index against its
/// column's cardinality.
pub fn embedding_indices(x: &EncodedRow, config: &ModelConfig) -> Result<Vec<usize>> {
    if x.indices.len() != config.n_features() {
        return Err(Error::Dimension {
            op: "embed",
            lhs: vec![x.indices.len()],
            rhs: vec![config.n_features()],
        });
    }
    x.indices
        .iter()
        .zip(config.cardinalities.iter().zip(config.offsets()))
        .map(|(&ix, (&card, offset))| {
            if ix >= card {
                Err(Error::Lookup { index: ix, size: card })
            } else {
                Ok(offset + ix)
            }
        })
        .collect()
}

/// `E = embedding[x]`.
pub fn embed(tape: &mut Tape, vars: &ModelVars, config: &ModelConfig, x: &EncodedRow) -> Result<Var> {
    let rows = embedding_indices(x, config)?;
    tape.gather_rows(vars.params[EMBEDDING], &rows)
}

/// `A = E·Eᵀ`.
pub fn bilinear_attention(tape: &mut Tape, e: Var) -> Result<Var> {
    let e_t = tape.transpose(e)?;
    tape.matmul(e, e_t)
}

/// `P = M·A·Mᵀ`.
pub fn permute_matrix(tape: &mut Tape, vars: &ModelVars, a: Var) -> Result<Var> {
    let ma = tape.matmul(vars.perm, a)?;
    tape.matmul(ma, vars.perm_t)
}

/// One CNN branch over an `N×N` matrix; `first` is the position of the
/// branch's conv1 kernels among the parameters.
fn cnn_branch_at(tape: &mut Tape, params: &[Var], first: usize, m: Var) -> Result<Var> {
    let s = tape.value(m).shape().to_vec();
    let &[h, w] = s.as_slice() else {
        return Err(Error::Dimension {
            op: "cnn_branch",
            lhs: s,
            rhs: vec![],
        });
    };
    let x = tape.reshape(m, &[1, h, w])?;
    let x = tape.conv2d(x, params[first], params[first + 1])?;
    let x = tape.relu(x)?;
    let x = tape.maxpool2(x)?;
    let x = tape.conv2d(x, params[first + 2], params[first + 3])?;
    let x = tape.relu(x)?;
    let x = tape.maxpool2(x)?;
    tape.flatten(x)
}

/// Which of the two CNN branches to run.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Branch {
    Correlation,
    Permuted,
}

pub fn cnn_branch(tape: &mut Tape, vars: &ModelVars, branch: Branch, m: Var) -> Result<Var> {
    let first = match branch {
        Branch::Correlation => BRANCH_A,
        Branch::Permuted => BRANCH_P,
    };
    cnn_branch_at(tape, &vars.params, first, m)
}

/// `weight·x + bias` for a vector `x`.
fn dense(tape: &mut Tape, weight: Var, bias: Var, x: Var) -> Result<Var> {
    let k = tape.value(x).numel();
    let m = tape.value(weight).shape()[0];
    let col = tape.reshape(x, &[k, 1])?;
    let y = tape.matmul(weight, col)?;
    let y = tape.reshape(y, &[m])?;
    tape.add(y, bias)
}

/// Hidden layers with relu, then a linear output layer.
pub fn residual_mlp(tape: &mut Tape, vars: &ModelVars, config: &ModelConfig, z: Var) -> Result<Var> {
    let hidden = config.arch.mlp_hidden.len();
    let mut x = z;
    for layer in 0..=hidden {
        let w = vars.params[MLP + 2 * layer];
        let b = vars.params[MLP + 2 * layer + 1];
        x = dense(tape, w, b, x)?;
        if layer < hidden {
            x = tape.relu(x)?;
        }
    }
    Ok(x)
}

/// Records the full forward pass for one row.
pub fn forward_on_tape(tape: &mut Tape, vars: &ModelVars, config: &ModelConfig, x: &EncodedRow) -> Result<TraceVars> {
    let e = embed(tape, vars, config, x)?;
    let a = bilinear_attention(tape, e)?;
    let p = permute_matrix(tape, vars, a)?;
    let branch_a = cnn_branch(tape, vars, Branch::Correlation, a)?;
    let branch_p = cnn_branch(tape, vars, Branch::Permuted, p)?;
    let features = tape.concat(&[branch_a, branch_p], 0)?;
    let head = dense(tape, vars.params[HEAD], vars.params[HEAD + 1], features)?;
    let z = tape.flatten(e)?;
    let mlp = residual_mlp(tape, vars, config, z)?;
    let prediction = tape.add(head, mlp)?;
    Ok(TraceVars {
        e,
        a,
        p,
        z,
        branch_a,
        branch_p,
        head,
        mlp,
        prediction,
    })
}

/// Runs one row through the model and returns every intermediate.
pub fn forward(x: &EncodedRow, params: &EapcrParams, spec: &PermutationSpec) -> Result<ForwardTrace> {
    let mut tape = Tape::new();
    let vars = params.register(&mut tape, spec, false)?;
    let t = forward_on_tape(&mut tape, &vars, params.config(), x)?;
    let v = |var: Var| tape.value(var).clone();
    Ok(ForwardTrace {
        e: v(t.e),
        a: v(t.a),
        p: v(t.p),
        z: v(t.z),
        branch_a: v(t.branch_a),
        branch_p: v(t.branch_p),
        head: v(t.head),
        mlp: v(t.mlp),
        prediction: v(t.prediction),
    })
}

/// First output of the model for each row.
pub fn predict(rows: &[EncodedRow], params: &EapcrParams, spec: &PermutationSpec) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let vars = params.register(&mut tape, spec, false)?;
    let base = tape.len();
    let mut out = Vec::with_capacity(rows.len());
    for x in rows {
        let t = forward_on_tape(&mut tape, &vars, params.config(), x)?;
        out.push(tape.value(t.prediction).data()[0]);
        tape.truncate(base);
    }
    Ok(out)
}
