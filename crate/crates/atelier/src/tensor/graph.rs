//! Define-by-run tape.
//!
//! A [`Graph`] records one forward pass as an append-only list of nodes in
//! topological order; [`Graph::backward`] walks it once in reverse and
//! accumulates gradients into every node that needs them. Calling `backward`
//! a second time on the same graph accumulates again, i.e. gradients double;
//! build a fresh graph per pass instead.

use super::{
    gelu, gelu_derivative, matmul_nn_acc, matmul_nt_acc, matmul_tn_acc, sigmoid, Tensor,
};
use crate::error::{Error, Result};

/// Handle to a node in a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    /// C[m,n] = A[m,k] · B[k,n]
    MatMul { a: usize, b: usize },
    /// C[m,n] = A[m,k] · B[n,k]ᵀ
    MatMulNt { a: usize, b: usize },
    Add { a: usize, b: usize },
    AddScalar { a: usize },
    Mul { a: usize, b: usize },
    Scale { a: usize, c: f64 },
    Gelu { a: usize },
    Sigmoid { a: usize },
    Abs { a: usize },
    /// rows of `a` plus a bias vector
    AddBias { a: usize, bias: usize },
    LayerNorm { x: usize, gamma: usize, beta: usize, eps: f64 },
    /// row-wise softmax over a square matrix where row i sees columns 0..=i
    CausalSoftmax { a: usize },
    SliceCols { a: usize, start: usize },
    ConcatCols { parts: Vec<usize> },
    ConcatRows { a: usize, b: usize },
    Row { a: usize, index: usize },
    Embed { table: usize, ids: Vec<usize> },
    SoftmaxXent { logits: usize, targets: Vec<usize>, ignore: usize },
    Sum { a: usize },
    Mean { a: usize },
}

struct Node {
    data: Vec<f64>,
    shape: Vec<usize>,
    grad: Option<Vec<f64>>,
    needs_grad: bool,
    op: Op,
}

/// One recorded forward pass.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    fn push(&mut self, data: Vec<f64>, shape: Vec<usize>, needs_grad: bool, op: Op) -> Var {
        self.nodes.push(Node {
            data,
            shape,
            grad: None,
            needs_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    /// Copy a tensor in as a leaf; gradients accumulate iff `requires_grad`.
    pub fn leaf(&mut self, t: &Tensor) -> Var {
        self.push(t.data.clone(), t.shape.clone(), t.requires_grad, Op::Leaf)
    }

    pub fn leaf_scalar(&mut self, value: f64) -> Var {
        self.push(vec![value], vec![1], false, Op::Leaf)
    }

    pub fn data(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].data
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn value(&self, v: Var) -> f64 {
        self.nodes[v.0].data[0]
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    fn rows_cols(&self, v: Var) -> (usize, usize) {
        let s = &self.nodes[v.0].shape;
        match s.len() {
            1 => (1, s[0]),
            2 => (s[0], s[1]),
            _ => unreachable!("tensors are at most 2-D"),
        }
    }

    // ── Forward operations ──────────────────────────────────────────────

    /// C = A · B with dA = dC·Bᵀ and dB = Aᵀ·dC.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.rows_cols(a);
        let (k2, n) = self.rows_cols(b);
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                left: self.nodes[a.0].shape.clone(),
                right: self.nodes[b.0].shape.clone(),
            });
        }
        let mut data = vec![0.0; m * n];
        matmul_nn_acc(&self.nodes[a.0].data, &self.nodes[b.0].data, m, k, n, &mut data);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(data, vec![m, n], ng, Op::MatMul { a: a.0, b: b.0 }))
    }

    /// C = A · Bᵀ where B is stored row-major as [n, k].
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (m, k) = self.rows_cols(a);
        let (n, k2) = self.rows_cols(b);
        if k != k2 {
            return Err(Error::ShapeMismatch {
                op: "matmul_nt",
                left: self.nodes[a.0].shape.clone(),
                right: self.nodes[b.0].shape.clone(),
            });
        }
        let mut data = vec![0.0; m * n];
        matmul_nt_acc(&self.nodes[a.0].data, &self.nodes[b.0].data, m, k, n, &mut data);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(data, vec![m, n], ng, Op::MatMulNt { a: a.0, b: b.0 }))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.nodes[a.0].shape != self.nodes[b.0].shape {
            return Err(Error::ShapeMismatch {
                op: "add",
                left: self.nodes[a.0].shape.clone(),
                right: self.nodes[b.0].shape.clone(),
            });
        }
        let data = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(x, y)| x + y)
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(data, shape, ng, Op::Add { a: a.0, b: b.0 }))
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let data = self.nodes[a.0].data.iter().map(|x| x + c).collect();
        let shape = self.nodes[a.0].shape.clone();
        let ng = self.needs(a);
        self.push(data, shape, ng, Op::AddScalar { a: a.0 })
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.nodes[a.0].shape != self.nodes[b.0].shape {
            return Err(Error::ShapeMismatch {
                op: "mul",
                left: self.nodes[a.0].shape.clone(),
                right: self.nodes[b.0].shape.clone(),
            });
        }
        let data = self.nodes[a.0]
            .data
            .iter()
            .zip(&self.nodes[b.0].data)
            .map(|(x, y)| x * y)
            .collect();
        let shape = self.nodes[a.0].shape.clone();
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(data, shape, ng, Op::Mul { a: a.0, b: b.0 }))
    }

    /// Multiply by a constant scalar.
    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let data = self.nodes[a.0].data.iter().map(|x| x * c).collect();
        let shape = self.nodes[a.0].shape.clone();
        let ng = self.needs(a);
        self.push(data, shape, ng, Op::Scale { a: a.0, c })
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let data = self.nodes[a.0].data.iter().map(|&x| gelu(x)).collect();
        let shape = self.nodes[a.0].shape.clone();
        let ng = self.needs(a);
        self.push(data, shape, ng, Op::Gelu { a: a.0 })
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let data = self.nodes[a.0].data.iter().map(|&x| sigmoid(x)).collect();
        let shape = self.nodes[a.0].shape.clone();
        let ng = self.needs(a);
        self.push(data, shape, ng, Op::Sigmoid { a: a.0 })
    }

    pub fn abs(&mut self, a: Var) -> Var {
        let data = self.nodes[a.0].data.iter().map(|x| x.abs()).collect();
        let shape = self.nodes[a.0].shape.clone();
        let ng = self.needs(a);
        self.push(data, shape, ng, Op::Abs { a: a.0 })
    }

    /// Add a bias vector to every row of `a`.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Result<Var> {
        let (m, n) = self.rows_cols(a);
        if self.nodes[bias.0].data.len() != n {
            return Err(Error::ShapeMismatch {
                op: "add_bias",
                left: self.nodes[a.0].shape.clone(),
                right: self.nodes[bias.0].shape.clone(),
            });
        }
        let mut data = self.nodes[a.0].data.clone();
        for i in 0..m {
            for (d, b) in data[i * n..(i + 1) * n].iter_mut().zip(&self.nodes[bias.0].data) {
                *d += b;
            }
        }
        let shape = self.nodes[a.0].shape.clone();
        let ng = self.needs(a) || self.needs(bias);
        Ok(self.push(data, shape, ng, Op::AddBias { a: a.0, bias: bias.0 }))
    }

    /// Per-row normalization to zero mean and unit population variance,
    /// followed by the affine map `gamma * xhat + beta`.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var, eps: f64) -> Result<Var> {
        let (rows, d) = self.rows_cols(x);
        if d == 0 || self.nodes[gamma.0].data.len() != d || self.nodes[beta.0].data.len() != d {
            return Err(Error::ShapeMismatch {
                op: "layer_norm",
                left: self.nodes[x.0].shape.clone(),
                right: self.nodes[gamma.0].shape.clone(),
            });
        }
        let mut data = vec![0.0; rows * d];
        {
            let xd = &self.nodes[x.0].data;
            let g = &self.nodes[gamma.0].data;
            let b = &self.nodes[beta.0].data;
            for r in 0..rows {
                let row = &xd[r * d..(r + 1) * d];
                let mean = row.iter().sum::<f64>() / d as f64;
                let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
                let inv_std = 1.0 / (var + eps).sqrt();
                for j in 0..d {
                    data[r * d + j] = (row[j] - mean) * inv_std * g[j] + b[j];
                }
            }
        }
        let shape = self.nodes[x.0].shape.clone();
        let ng = self.needs(x) || self.needs(gamma) || self.needs(beta);
        Ok(self.push(
            data,
            shape,
            ng,
            Op::LayerNorm { x: x.0, gamma: gamma.0, beta: beta.0, eps },
        ))
    }

    /// Row-wise softmax over a square score matrix with a causal mask:
    /// row i is a distribution over columns 0..=i, masked columns are 0.
    pub fn causal_softmax(&mut self, a: Var) -> Result<Var> {
        let (m, n) = self.rows_cols(a);
        if m != n {
            return Err(Error::ShapeMismatch {
                op: "causal_softmax",
                left: self.nodes[a.0].shape.clone(),
                right: self.nodes[a.0].shape.clone(),
            });
        }
        let mut data = vec![0.0; m * n];
        {
            let ad = &self.nodes[a.0].data;
            for i in 0..m {
                let row = &ad[i * n..i * n + i + 1];
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut sum = 0.0;
                for (j, &v) in row.iter().enumerate() {
                    let e = (v - max).exp();
                    data[i * n + j] = e;
                    sum += e;
                }
                for v in &mut data[i * n..i * n + i + 1] {
                    *v /= sum;
                }
            }
        }
        let shape = self.nodes[a.0].shape.clone();
        let ng = self.needs(a);
        Ok(self.push(data, shape, ng, Op::CausalSoftmax { a: a.0 }))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (m, n) = self.rows_cols(a);
        if start + len > n {
            return Err(Error::Length(format!(
                "slice_cols {start}..{} out of {n} columns",
                start + len
            )));
        }
        let ad = &self.nodes[a.0].data;
        let mut data = Vec::with_capacity(m * len);
        for i in 0..m {
            data.extend_from_slice(&ad[i * n + start..i * n + start + len]);
        }
        let ng = self.needs(a);
        Ok(self.push(data, vec![m, len], ng, Op::SliceCols { a: a.0, start }))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let m = self.rows_cols(parts[0]).0;
        let mut n_total = 0;
        for &p in parts {
            let (pm, pn) = self.rows_cols(p);
            if pm != m {
                return Err(Error::ShapeMismatch {
                    op: "concat_cols",
                    left: self.nodes[parts[0].0].shape.clone(),
                    right: self.nodes[p.0].shape.clone(),
                });
            }
            n_total += pn;
        }
        let mut data = Vec::with_capacity(m * n_total);
        for i in 0..m {
            for &p in parts {
                let pn = self.rows_cols(p).1;
                let pd = &self.nodes[p.0].data;
                data.extend_from_slice(&pd[i * pn..(i + 1) * pn]);
            }
        }
        let ng = parts.iter().any(|&p| self.needs(p));
        let ids = parts.iter().map(|p| p.0).collect();
        Ok(self.push(data, vec![m, n_total], ng, Op::ConcatCols { parts: ids }))
    }

    pub fn concat_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ma, na) = self.rows_cols(a);
        let (mb, nb) = self.rows_cols(b);
        if na != nb {
            return Err(Error::ShapeMismatch {
                op: "concat_rows",
                left: self.nodes[a.0].shape.clone(),
                right: self.nodes[b.0].shape.clone(),
            });
        }
        let mut data = Vec::with_capacity((ma + mb) * na);
        data.extend_from_slice(&self.nodes[a.0].data);
        data.extend_from_slice(&self.nodes[b.0].data);
        let ng = self.needs(a) || self.needs(b);
        Ok(self.push(data, vec![ma + mb, na], ng, Op::ConcatRows { a: a.0, b: b.0 }))
    }

    /// One row of a matrix as a [1, n] tensor.
    pub fn row(&mut self, a: Var, index: usize) -> Result<Var> {
        let (m, n) = self.rows_cols(a);
        if index >= m {
            return Err(Error::Length(format!("row {index} out of {m} rows")));
        }
        let data = self.nodes[a.0].data[index * n..(index + 1) * n].to_vec();
        let ng = self.needs(a);
        Ok(self.push(data, vec![1, n], ng, Op::Row { a: a.0, index }))
    }

    /// Gather rows of an embedding table.
    pub fn embed(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let (v, d) = self.rows_cols(table);
        if let Some(&bad) = ids.iter().find(|&&id| id >= v) {
            return Err(Error::Length(format!("token id {bad} out of vocabulary {v}")));
        }
        let td = &self.nodes[table.0].data;
        let mut data = Vec::with_capacity(ids.len() * d);
        for &id in ids {
            data.extend_from_slice(&td[id * d..(id + 1) * d]);
        }
        let ng = self.needs(table);
        Ok(self.push(
            data,
            vec![ids.len(), d],
            ng,
            Op::Embed { table: table.0, ids: ids.to_vec() },
        ))
    }

    /// Mean over non-ignored positions of -log softmax(logits)[target].
    /// Rows whose target equals `ignore` contribute nothing.
    pub fn softmax_cross_entropy(
        &mut self,
        logits: Var,
        targets: &[usize],
        ignore: usize,
    ) -> Result<Var> {
        let (n, v) = self.rows_cols(logits);
        if targets.len() != n {
            return Err(Error::ShapeMismatch {
                op: "softmax_cross_entropy",
                left: vec![n, v],
                right: vec![targets.len()],
            });
        }
        if let Some(&bad) = targets.iter().find(|&&t| t != ignore && t >= v) {
            return Err(Error::Length(format!("target {bad} out of vocabulary {v}")));
        }
        let n_live = targets.iter().filter(|&&t| t != ignore).count();
        if n_live == 0 {
            return Err(Error::AllPositionsIgnored);
        }
        let ld = &self.nodes[logits.0].data;
        let mut total = 0.0;
        for (i, &t) in targets.iter().enumerate() {
            if t == ignore {
                continue;
            }
            let row = &ld[i * v..(i + 1) * v];
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let log_sum = row.iter().map(|&x| (x - max).exp()).sum::<f64>().ln() + max;
            total += log_sum - row[t];
        }
        let loss = total / n_live as f64;
        let ng = self.needs(logits);
        Ok(self.push(
            vec![loss],
            vec![1],
            ng,
            Op::SoftmaxXent { logits: logits.0, targets: targets.to_vec(), ignore },
        ))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.nodes[a.0].data.iter().sum();
        let ng = self.needs(a);
        self.push(vec![s], vec![1], ng, Op::Sum { a: a.0 })
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.nodes[a.0].data.len() as f64;
        let s = self.nodes[a.0].data.iter().sum::<f64>() / n;
        let ng = self.needs(a);
        self.push(vec![s], vec![1], ng, Op::Mean { a: a.0 })
    }

    // ── Backward ────────────────────────────────────────────────────────

    /// Reverse-topological gradient accumulation from a scalar loss.
    /// Gradients of shared operands sum; leaves with `requires_grad = false`
    /// keep `grad = None`.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes[loss.0].data.len() != 1 {
            return Err(Error::NotScalar {
                op: "backward",
                shape: self.nodes[loss.0].shape.clone(),
            });
        }
        // Intermediate gradients are scratch space recomputed per call; leaf
        // gradients accumulate, so calling backward twice doubles them.
        for node in &mut self.nodes {
            if !matches!(node.op, Op::Leaf) {
                node.grad = None;
            }
        }
        if matches!(self.nodes[loss.0].op, Op::Leaf) {
            add_to(&mut self.nodes[loss.0].grad, &[1.0]);
        } else {
            self.nodes[loss.0].grad = Some(vec![1.0]);
        }
        for i in (0..=loss.0).rev() {
            if !self.nodes[i].needs_grad || self.nodes[i].grad.is_none() {
                continue;
            }
            let grad = self.nodes[i].grad.clone().expect("grad present");
            let op = self.nodes[i].op.clone();
            match op {
                Op::Leaf => {}

                Op::MatMul { a, b } => {
                    let (m, k) = shape2(&self.nodes[a].shape);
                    let n = self.nodes[i].shape[1];
                    if self.nodes[a].needs_grad {
                        let mut da = vec![0.0; m * k];
                        matmul_nt_acc(&grad, &self.nodes[b].data, m, n, k, &mut da);
                        add_to(&mut self.nodes[a].grad, &da);
                    }
                    if self.nodes[b].needs_grad {
                        let mut db = vec![0.0; k * n];
                        matmul_tn_acc(&self.nodes[a].data, &grad, m, k, n, &mut db);
                        add_to(&mut self.nodes[b].grad, &db);
                    }
                }

                Op::MatMulNt { a, b } => {
                    // C[m,n] = A[m,k]·B[n,k]ᵀ: dA = dC·B, dB = dCᵀ·A.
                    let (m, k) = shape2(&self.nodes[a].shape);
                    let n = self.nodes[i].shape[1];
                    if self.nodes[a].needs_grad {
                        let mut da = vec![0.0; m * k];
                        matmul_nn_acc(&grad, &self.nodes[b].data, m, n, k, &mut da);
                        add_to(&mut self.nodes[a].grad, &da);
                    }
                    if self.nodes[b].needs_grad {
                        let mut db = vec![0.0; n * k];
                        matmul_tn_acc(&grad, &self.nodes[a].data, m, n, k, &mut db);
                        add_to(&mut self.nodes[b].grad, &db);
                    }
                }

                Op::Add { a, b } => {
                    if self.nodes[a].needs_grad {
                        add_to(&mut self.nodes[a].grad, &grad);
                    }
                    if self.nodes[b].needs_grad {
                        add_to(&mut self.nodes[b].grad, &grad);
                    }
                }

                Op::AddScalar { a } => {
                    if self.nodes[a].needs_grad {
                        add_to(&mut self.nodes[a].grad, &grad);
                    }
                }

                Op::Mul { a, b } => {
                    if self.nodes[a].needs_grad {
                        let da: Vec<f64> = grad
                            .iter()
                            .zip(&self.nodes[b].data)
                            .map(|(g, y)| g * y)
                            .collect();
                        add_to(&mut self.nodes[a].grad, &da);
                    }
                    if self.nodes[b].needs_grad {
                        let db: Vec<f64> = grad
                            .iter()
                            .zip(&self.nodes[a].data)
                            .map(|(g, x)| g * x)
                            .collect();
                        add_to(&mut self.nodes[b].grad, &db);
                    }
                }

                Op::Scale { a, c } => {
                    if self.nodes[a].needs_grad {
                        let da: Vec<f64> = grad.iter().map(|g| g * c).collect();
                        add_to(&mut self.nodes[a].grad, &da);
                    }
                }

                Op::Gelu { a } => {
                    if self.nodes[a].needs_grad {
                        let da: Vec<f64> = grad
                            .iter()
                            .zip(&self.nodes[a].data)
                            .map(|(g, &x)| g * gelu_derivative(x))
                            .collect();
                        add_to(&mut self.nodes[a].grad, &da);
                    }
                }

                Op::Sigmoid { a } => {
                    if self.nodes[a].needs_grad {
                        let da: Vec<f64> = grad
                            .iter()
                            .zip(&self.nodes[i].data)
                            .map(|(g, s)| g * s * (1.0 - s))
                            .collect();
                        add_to(&mut self.nodes[a].grad, &da);
                    }
                }

                Op::Abs { a } => {
                    if self.nodes[a].needs_grad {
                        // subgradient 0 at the kink
                        let da: Vec<f64> = grad
                            .iter()
                            .zip(&self.nodes[a].data)
                            .map(|(g, &x)| g * if x > 0.0 { 1.0 } else if x < 0.0 { -1.0 } else { 0.0 })
                            .collect();
                        add_to(&mut self.nodes[a].grad, &da);
                    }
                }

                Op::AddBias { a, bias } => {
                    let n = self.nodes[bias].data.len();
                    if self.nodes[a].needs_grad {
                        add_to(&mut self.nodes[a].grad, &grad);
                    }
                    if self.nodes[bias].needs_grad {
                        let mut db = vec![0.0; n];
                        for chunk in grad.chunks_exact(n) {
                            for (d, g) in db.iter_mut().zip(chunk) {
                                *d += g;
                            }
                        }
                        add_to(&mut self.nodes[bias].grad, &db);
                    }
                }

                Op::LayerNorm { x, gamma, beta, eps } => {
                    let d = self.nodes[gamma].data.len();
                    let rows = self.nodes[x].data.len() / d;
                    let mut dx = vec![0.0; rows * d];
                    let mut dgamma = vec![0.0; d];
                    let mut dbeta = vec![0.0; d];
                    {
                        let xd = &self.nodes[x].data;
                        let g = &self.nodes[gamma].data;
                        for r in 0..rows {
                            let row = &xd[r * d..(r + 1) * d];
                            let grow = &grad[r * d..(r + 1) * d];
                            let mean = row.iter().sum::<f64>() / d as f64;
                            let var =
                                row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
                            let inv_std = 1.0 / (var + eps).sqrt();
                            let xhat: Vec<f64> =
                                row.iter().map(|&v| (v - mean) * inv_std).collect();
                            let mut dxhat_sum = 0.0;
                            let mut dxhat_dot = 0.0;
                            for j in 0..d {
                                dgamma[j] += grow[j] * xhat[j];
                                dbeta[j] += grow[j];
                                let dxh = grow[j] * g[j];
                                dxhat_sum += dxh;
                                dxhat_dot += dxh * xhat[j];
                            }
                            let df = d as f64;
                            for j in 0..d {
                                let dxh = grow[j] * g[j];
                                dx[r * d + j] =
                                    inv_std / df * (df * dxh - dxhat_sum - xhat[j] * dxhat_dot);
                            }
                        }
                    }
                    if self.nodes[x].needs_grad {
                        add_to(&mut self.nodes[x].grad, &dx);
                    }
                    if self.nodes[gamma].needs_grad {
                        add_to(&mut self.nodes[gamma].grad, &dgamma);
                    }
                    if self.nodes[beta].needs_grad {
                        add_to(&mut self.nodes[beta].grad, &dbeta);
                    }
                }

                Op::CausalSoftmax { a } => {
                    if self.nodes[a].needs_grad {
                        let n = self.nodes[i].shape[0];
                        let s = &self.nodes[i].data;
                        let mut da = vec![0.0; n * n];
                        for r in 0..n {
                            let mut dot = 0.0;
                            for j in 0..=r {
                                dot += grad[r * n + j] * s[r * n + j];
                            }
                            for j in 0..=r {
                                da[r * n + j] = s[r * n + j] * (grad[r * n + j] - dot);
                            }
                        }
                        add_to(&mut self.nodes[a].grad, &da);
                    }
                }

                Op::SliceCols { a, start } => {
                    if self.nodes[a].needs_grad {
                        let (m, n) = shape2(&self.nodes[a].shape);
                        let len = self.nodes[i].shape[1];
                        let mut da = vec![0.0; m * n];
                        for r in 0..m {
                            da[r * n + start..r * n + start + len]
                                .copy_from_slice(&grad[r * len..(r + 1) * len]);
                        }
                        add_to(&mut self.nodes[a].grad, &da);
                    }
                }

                Op::ConcatCols { parts } => {
                    let m = self.nodes[i].shape[0];
                    let n_total = self.nodes[i].shape[1];
                    let mut offset = 0;
                    for p in parts {
                        let pn = shape2(&self.nodes[p].shape).1;
                        if self.nodes[p].needs_grad {
                            let mut dp = vec![0.0; m * pn];
                            for r in 0..m {
                                dp[r * pn..(r + 1) * pn].copy_from_slice(
                                    &grad[r * n_total + offset..r * n_total + offset + pn],
                                );
                            }
                            add_to(&mut self.nodes[p].grad, &dp);
                        }
                        offset += pn;
                    }
                }

                Op::ConcatRows { a, b } => {
                    let na = self.nodes[a].data.len();
                    if self.nodes[a].needs_grad {
                        add_to(&mut self.nodes[a].grad, &grad[..na]);
                    }
                    if self.nodes[b].needs_grad {
                        add_to(&mut self.nodes[b].grad, &grad[na..]);
                    }
                }

                Op::Row { a, index } => {
                    if self.nodes[a].needs_grad {
                        let (m, n) = shape2(&self.nodes[a].shape);
                        let mut da = vec![0.0; m * n];
                        da[index * n..(index + 1) * n].copy_from_slice(&grad);
                        add_to(&mut self.nodes[a].grad, &da);
                    }
                }

                Op::Embed { table, ids } => {
                    if self.nodes[table].needs_grad {
                        let d = self.nodes[i].shape[1];
                        let vlen = self.nodes[table].data.len();
                        let mut dt = vec![0.0; vlen];
                        for (r, &id) in ids.iter().enumerate() {
                            for (t, g) in dt[id * d..(id + 1) * d].iter_mut().zip(&grad[r * d..]) {
                                *t += g;
                            }
                        }
                        add_to(&mut self.nodes[table].grad, &dt);
                    }
                }

                Op::SoftmaxXent { logits, targets, ignore } => {
                    if self.nodes[logits].needs_grad {
                        let (n, v) = shape2(&self.nodes[logits].shape);
                        let n_live = targets.iter().filter(|&&t| t != ignore).count() as f64;
                        let ld = &self.nodes[logits].data;
                        let mut dl = vec![0.0; n * v];
                        let g = grad[0];
                        for (r, &t) in targets.iter().enumerate() {
                            if t == ignore {
                                continue;
                            }
                            let row = &ld[r * v..(r + 1) * v];
                            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                            let exps: Vec<f64> = row.iter().map(|&x| (x - max).exp()).collect();
                            let sum: f64 = exps.iter().sum();
                            for c in 0..v {
                                let p = exps[c] / sum;
                                let y = if c == t { 1.0 } else { 0.0 };
                                dl[r * v + c] = g * (p - y) / n_live;
                            }
                        }
                        add_to(&mut self.nodes[logits].grad, &dl);
                    }
                }

                Op::Sum { a } => {
                    if self.nodes[a].needs_grad {
                        let da = vec![grad[0]; self.nodes[a].data.len()];
                        add_to(&mut self.nodes[a].grad, &da);
                    }
                }

                Op::Mean { a } => {
                    if self.nodes[a].needs_grad {
                        let n = self.nodes[a].data.len();
                        let da = vec![grad[0] / n as f64; n];
                        add_to(&mut self.nodes[a].grad, &da);
                    }
                }
            }
        }
        Ok(())
    }
}

fn shape2(shape: &[usize]) -> (usize, usize) {
    match shape.len() {
        1 => (1, shape[0]),
        2 => (shape[0], shape[1]),
        _ => unreachable!(),
    }
}

fn add_to(target: &mut Option<Vec<f64>>, src: &[f64]) {
    match target {
        Some(t) => {
            for (a, b) in t.iter_mut().zip(src) {
                *a += b;
            }
        }
        None => *target = Some(src.to_vec()),
    }
}
