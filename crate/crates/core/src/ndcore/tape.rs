//! Reverse-mode autodiff over a linear tape.
//!
//! Every primitive appends one node whose parents are earlier nodes, so the
//! node vector is already in topological order and `backward` is a single
//! reverse sweep.

use super::tensor::{matmul_acc, matmul_at_acc, matmul_bt_acc, Tensor};
use crate::error::{Error, Result};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    Affine {
        x: Var,
        w: Var,
        b: Var,
    },
    Add(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Tanh(Var),
    LayerNorm {
        x: Var,
        gain: Option<Var>,
        bias: Option<Var>,
        xhat: Vec<f64>,
        rstd: Vec<f64>,
    },
    Reshape(Var),
    ConcatCols(Var, Var),
    Mse(Var, Var),
    SumSquares(Var),
    WeightedSum(Vec<(Var, f64)>),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Trainable leaf; receives a gradient on `backward`.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Non-trainable leaf (inputs, targets, frozen weights).
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    /// Gradient stored on a leaf by the last `backward` call.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].value.grad()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, vars: &[Var]) -> bool {
        vars.iter().any(|v| self.nodes[v.0].requires_grad)
    }

    fn mat(&self, v: Var, what: &str) -> Result<(usize, usize)> {
        let t = self.value(v);
        t.dims2()
            .ok_or_else(|| Error::dim(format!("{what} must be 2-D, got shape {:?}", t.shape())))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, k) = self.mat(a, "matmul lhs")?;
        let (k2, m) = self.mat(b, "matmul rhs")?;
        if k != k2 {
            return Err(Error::dim(format!(
                "matmul: lhs {:?} vs rhs {:?}",
                self.value(a).shape(),
                self.value(b).shape()
            )));
        }
        let mut out = vec![0.0; n * m];
        matmul_acc(self.value(a).data(), self.value(b).data(), &mut out, n, k, m);
        let rg = self.needs(&[a, b]);
        Ok(self.push(Tensor::new(vec![n, m], out)?, Op::MatMul(a, b), rg))
    }

    /// `x W + b` with `b` broadcast over rows.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (n, d_in) = self.mat(x, "affine input")?;
        let (w_in, d_out) = self.mat(w, "affine weight")?;
        let bt = self.value(b);
        if d_in != w_in || bt.numel() != d_out {
            return Err(Error::dim(format!(
                "affine: x {:?}, W {:?}, b {:?}",
                self.value(x).shape(),
                self.value(w).shape(),
                bt.shape()
            )));
        }
        let mut out = Vec::with_capacity(n * d_out);
        for _ in 0..n {
            out.extend_from_slice(bt.data());
        }
        matmul_acc(
            self.value(x).data(),
            self.value(w).data(),
            &mut out,
            n,
            d_in,
            d_out,
        );
        let rg = self.needs(&[x, w, b]);
        Ok(self.push(Tensor::new(vec![n, d_out], out)?, Op::Affine { x, w, b }, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        if ta.shape() != tb.shape() {
            return Err(Error::dim(format!(
                "add: {:?} vs {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let out: Vec<f64> = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let shape = ta.shape().to_vec();
        let rg = self.needs(&[a, b]);
        Ok(self.push(Tensor::new(shape, out)?, Op::Add(a, b), rg))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let ta = self.value(a);
        let value = Tensor::new(
            ta.shape().to_vec(),
            ta.data().iter().map(|x| x * s).collect(),
        )
        .expect("shape preserved");
        let rg = self.needs(&[a]);
        self.push(value, Op::Scale(a, s), rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let value = Tensor::new(
            tx.shape().to_vec(),
            tx.data().iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(),
        )
        .expect("shape preserved");
        let rg = self.needs(&[x]);
        self.push(value, Op::Relu(x), rg)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let tx = self.value(x);
        let value = Tensor::new(
            tx.shape().to_vec(),
            tx.data().iter().map(|v| v.tanh()).collect(),
        )
        .expect("shape preserved");
        let rg = self.needs(&[x]);
        self.push(value, Op::Tanh(x), rg)
    }

    /// Row-wise normalization over the last axis of an `n x d` matrix, then
    /// optional elementwise gain and bias (both length `d`).
    pub fn layer_norm(
        &mut self,
        x: Var,
        gain: Option<Var>,
        bias: Option<Var>,
        eps: f64,
    ) -> Result<Var> {
        let (n, d) = self.mat(x, "layer_norm input")?;
        if d < 2 {
            return Err(Error::dim(format!(
                "layer_norm needs at least 2 features per row, got {d}"
            )));
        }
        if !(eps > 0.0) {
            return Err(Error::config("eps", "must be positive"));
        }
        for (name, p) in [("gain", gain), ("bias", bias)] {
            if let Some(p) = p {
                if self.value(p).numel() != d {
                    return Err(Error::dim(format!(
                        "layer_norm {name} {:?} does not match row width {d}",
                        self.value(p).shape()
                    )));
                }
            }
        }
        let xs = self.value(x).data();
        let mut xhat = vec![0.0; n * d];
        let mut rstd = vec![0.0; n];
        for r in 0..n {
            let row = &xs[r * d..(r + 1) * d];
            let mean = row.iter().sum::<f64>() / d as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / d as f64;
            let rs = 1.0 / (var + eps).sqrt();
            rstd[r] = rs;
            for (o, v) in xhat[r * d..(r + 1) * d].iter_mut().zip(row) {
                *o = (v - mean) * rs;
            }
        }
        let mut out = xhat.clone();
        if let Some(g) = gain {
            let gd = self.value(g).data();
            for row in out.chunks_mut(d) {
                row.iter_mut().zip(gd).for_each(|(o, g)| *o *= g);
            }
        }
        if let Some(b) = bias {
            let bd = self.value(b).data();
            for row in out.chunks_mut(d) {
                row.iter_mut().zip(bd).for_each(|(o, b)| *o += b);
            }
        }
        let mut parents = vec![x];
        parents.extend(gain);
        parents.extend(bias);
        let rg = self.needs(&parents);
        Ok(self.push(
            Tensor::new(vec![n, d], out)?,
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            },
            rg,
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let value = self.value(x).reshaped(shape)?;
        let rg = self.needs(&[x]);
        Ok(self.push(value, Op::Reshape(x), rg))
    }

    /// `[a | b]` for `a: n x p`, `b: n x q`.
    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (n, p) = self.mat(a, "concat lhs")?;
        let (n2, q) = self.mat(b, "concat rhs")?;
        if n != n2 {
            return Err(Error::dim(format!("concat: {n} rows vs {n2} rows")));
        }
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let mut out = Vec::with_capacity(n * (p + q));
        for r in 0..n {
            out.extend_from_slice(&da[r * p..(r + 1) * p]);
            out.extend_from_slice(&db[r * q..(r + 1) * q]);
        }
        let rg = self.needs(&[a, b]);
        Ok(self.push(Tensor::new(vec![n, p + q], out)?, Op::ConcatCols(a, b), rg))
    }

    /// Mean of squared elementwise differences.
    pub fn mse(&mut self, pred: Var, target: Var) -> Result<Var> {
        let (tp, tt) = (self.value(pred), self.value(target));
        if tp.shape() != tt.shape() {
            return Err(Error::dim(format!(
                "mse: prediction {:?} vs target {:?}",
                tp.shape(),
                tt.shape()
            )));
        }
        let n = tp.numel() as f64;
        let loss = tp
            .data()
            .iter()
            .zip(tt.data())
            .map(|(p, t)| (p - t) * (p - t))
            .sum::<f64>()
            / n;
        let rg = self.needs(&[pred, target]);
        Ok(self.push(Tensor::scalar(loss), Op::Mse(pred, target), rg))
    }

    pub fn sum_squares(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().map(|v| v * v).sum();
        let rg = self.needs(&[x]);
        self.push(Tensor::scalar(s), Op::SumSquares(x), rg)
    }

    /// `sum_i w_i * s_i` over scalar nodes.
    pub fn weighted_sum(&mut self, terms: &[(Var, f64)]) -> Result<Var> {
        let mut total = 0.0;
        for &(v, w) in terms {
            let t = self.value(v);
            if !t.is_scalar() {
                return Err(Error::dim(format!(
                    "weighted_sum term has shape {:?}, expected a scalar",
                    t.shape()
                )));
            }
            total += w * t.item();
        }
        let vars: Vec<Var> = terms.iter().map(|t| t.0).collect();
        let rg = self.needs(&vars);
        Ok(self.push(Tensor::scalar(total), Op::WeightedSum(terms.to_vec()), rg))
    }

    /// `sum_l gamma_l * ||theta_l||^2`.
    pub fn l2_penalty(&mut self, blocks: &[Var], gammas: &[f64]) -> Result<Var> {
        if blocks.len() != gammas.len() {
            return Err(Error::dim(format!(
                "l2_penalty: {} blocks but {} weights",
                blocks.len(),
                gammas.len()
            )));
        }
        if let Some(g) = gammas.iter().find(|g| !(**g >= 0.0)) {
            return Err(Error::config("gamma", format!("must be >= 0, got {g}")));
        }
        let terms: Vec<(Var, f64)> = blocks
            .iter()
            .zip(gammas)
            .map(|(&b, &g)| (self.sum_squares(b), g))
            .collect();
        self.weighted_sum(&terms)
    }

    /// Populates the gradient of every trainable leaf with d(loss)/d(leaf).
    /// Trainable leaves the loss does not depend on get an all-zero gradient.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if !self.value(loss).is_scalar() {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            if !self.nodes[i].requires_grad {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            if matches!(self.nodes[i].op, Op::Leaf) {
                grads[i] = Some(g);
                continue;
            }
            self.propagate(i, &g, &mut grads);
        }

        for (i, node) in self.nodes.iter_mut().enumerate() {
            if matches!(node.op, Op::Leaf) && node.requires_grad {
                let g = grads
                    .get_mut(i)
                    .and_then(Option::take)
                    .unwrap_or_else(|| vec![0.0; node.value.numel()]);
                node.value.grad = Some(g);
            }
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        let mut acc = |v: Var, f: &dyn Fn(&mut [f64])| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            let slot = grads[v.0].get_or_insert_with(|| vec![0.0; self.nodes[v.0].value.numel()]);
            f(slot);
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (n, k) = self.value(*a).dims2().unwrap();
                let m = self.value(*b).dims2().unwrap().1;
                let (ad, bd) = (self.value(*a).data(), self.value(*b).data());
                acc(*a, &|s| matmul_bt_acc(g, bd, s, n, m, k));
                acc(*b, &|s| matmul_at_acc(ad, g, s, n, k, m));
            }
            Op::Affine { x, w, b } => {
                let (n, d_in) = self.value(*x).dims2().unwrap();
                let d_out = self.value(*w).dims2().unwrap().1;
                let (xd, wd) = (self.value(*x).data(), self.value(*w).data());
                acc(*x, &|s| matmul_bt_acc(g, wd, s, n, d_out, d_in));
                acc(*w, &|s| matmul_at_acc(xd, g, s, n, d_in, d_out));
                acc(*b, &|s| {
                    for row in g.chunks(d_out) {
                        s.iter_mut().zip(row).for_each(|(o, v)| *o += v);
                    }
                });
            }
            Op::Add(a, b) => {
                acc(*a, &|s| s.iter_mut().zip(g).for_each(|(o, v)| *o += v));
                acc(*b, &|s| s.iter_mut().zip(g).for_each(|(o, v)| *o += v));
            }
            Op::Scale(a, c) => {
                acc(*a, &|s| s.iter_mut().zip(g).for_each(|(o, v)| *o += c * v));
            }
            Op::Relu(x) => {
                let xd = self.value(*x).data();
                acc(*x, &|s| {
                    for ((o, v), xv) in s.iter_mut().zip(g).zip(xd) {
                        if *xv > 0.0 {
                            *o += v;
                        }
                    }
                });
            }
            Op::Tanh(x) => {
                let yd = node.value.data();
                acc(*x, &|s| {
                    for ((o, v), y) in s.iter_mut().zip(g).zip(yd) {
                        *o += v * (1.0 - y * y);
                    }
                });
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                rstd,
            } => {
                let d = self.value(*x).dims2().unwrap().1;
                let gain_data = gain.map(|v| self.value(v).data());
                acc(*x, &|s| {
                    let mut dxhat = vec![0.0; d];
                    for (r, (srow, grow)) in s.chunks_mut(d).zip(g.chunks(d)).enumerate() {
                        let xh = &xhat[r * d..(r + 1) * d];
                        match gain_data {
                            Some(gd) => dxhat
                                .iter_mut()
                                .zip(grow.iter().zip(gd))
                                .for_each(|(o, (a, b))| *o = a * b),
                            None => dxhat.copy_from_slice(grow),
                        }
                        let sum: f64 = dxhat.iter().sum();
                        let dot: f64 = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum();
                        let c = rstd[r] / d as f64;
                        for ((o, dh), h) in srow.iter_mut().zip(&dxhat).zip(xh) {
                            *o += c * (d as f64 * dh - sum - h * dot);
                        }
                    }
                });
                if let Some(gv) = gain {
                    acc(*gv, &|s| {
                        for (grow, xh) in g.chunks(d).zip(xhat.chunks(d)) {
                            for ((o, a), b) in s.iter_mut().zip(grow).zip(xh) {
                                *o += a * b;
                            }
                        }
                    });
                }
                if let Some(bv) = bias {
                    acc(*bv, &|s| {
                        for grow in g.chunks(d) {
                            s.iter_mut().zip(grow).for_each(|(o, v)| *o += v);
                        }
                    });
                }
            }
            Op::Reshape(x) => {
                acc(*x, &|s| s.iter_mut().zip(g).for_each(|(o, v)| *o += v));
            }
            Op::ConcatCols(a, b) => {
                let (n, p) = self.value(*a).dims2().unwrap();
                let q = self.value(*b).dims2().unwrap().1;
                acc(*a, &|s| {
                    for r in 0..n {
                        let src = &g[r * (p + q)..r * (p + q) + p];
                        s[r * p..(r + 1) * p]
                            .iter_mut()
                            .zip(src)
                            .for_each(|(o, v)| *o += v);
                    }
                });
                acc(*b, &|s| {
                    for r in 0..n {
                        let src = &g[r * (p + q) + p..(r + 1) * (p + q)];
                        s[r * q..(r + 1) * q]
                            .iter_mut()
                            .zip(src)
                            .for_each(|(o, v)| *o += v);
                    }
                });
            }
            Op::Mse(pred, target) => {
                let (pd, td) = (self.value(*pred).data(), self.value(*target).data());
                let c = 2.0 * g[0] / pd.len() as f64;
                acc(*pred, &|s| {
                    for ((o, p), t) in s.iter_mut().zip(pd).zip(td) {
                        *o += c * (p - t);
                    }
                });
                acc(*target, &|s| {
                    for ((o, p), t) in s.iter_mut().zip(pd).zip(td) {
                        *o -= c * (p - t);
                    }
                });
            }
            Op::SumSquares(x) => {
                let xd = self.value(*x).data();
                acc(*x, &|s| {
                    s.iter_mut()
                        .zip(xd)
                        .for_each(|(o, v)| *o += 2.0 * g[0] * v)
                });
            }
            Op::WeightedSum(terms) => {
                for &(v, w) in terms {
                    acc(v, &|s| s[0] += w * g[0]);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(shape: Vec<usize>, data: Vec<f64>) -> Tensor {
        Tensor::new(shape, data).unwrap()
    }

    #[test]
    fn affine_identity_and_swap() {
        let mut tape = Tape::new();
        let x = tape.constant(t(vec![1, 2], vec![1.0, 2.0]));
        let w = tape.param(t(vec![2, 2], vec![1.0, 0.0, 0.0, 1.0]));
        let b = tape.param(t(vec![2], vec![0.0, 0.0]));
        let y = tape.affine(x, w, b).unwrap();
        assert_eq!(tape.value(y).data(), &[1.0, 2.0]);

        let x = tape.constant(t(vec![1, 2], vec![1.0, 0.0]));
        let w = tape.param(t(vec![2, 2], vec![0.0, 1.0, 1.0, 0.0]));
        let b = tape.param(t(vec![2], vec![1.0, 1.0]));
        let y = tape.affine(x, w, b).unwrap();
        assert_eq!(tape.value(y).data(), &[1.0, 2.0]);
    }

    #[test]
    fn affine_shape_error_names_both_shapes() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::zeros(vec![1, 3]));
        let w = tape.param(Tensor::zeros(vec![2, 2]));
        let b = tape.param(Tensor::zeros(vec![2]));
        let err = tape.affine(x, w, b).unwrap_err().to_string();
        assert!(err.contains("[1, 3]") && err.contains("[2, 2]"), "{err}");
    }

    #[test]
    fn relu_values() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![-1.0, 0.0, 2.0]));
        let y = tape.relu(x);
        assert_eq!(tape.value(y).data(), &[0.0, 0.0, 2.0]);
        let x = tape.constant(Tensor::vector(vec![0.5, 3.0]));
        let y = tape.relu(x);
        assert_eq!(tape.value(y).data(), &[0.5, 3.0]);
    }

    #[test]
    fn relu_subgradient_at_zero_is_zero() {
        let mut tape = Tape::new();
        let x = tape.param(Tensor::vector(vec![0.0, 1.0]));
        let y = tape.relu(x);
        let s = tape.sum_squares(y);
        let z = tape.param(Tensor::vector(vec![0.0, 1.0]));
        let y2 = tape.relu(z);
        let w = tape.constant(Tensor::vector(vec![0.0, 0.0]));
        let m = tape.mse(y2, w).unwrap();
        let total = tape.weighted_sum(&[(s, 1.0), (m, 0.0)]).unwrap();
        tape.backward(total).unwrap();
        assert_eq!(tape.grad(x).unwrap(), &[0.0, 2.0]);
    }

    #[test]
    fn layer_norm_cases() {
        let mut tape = Tape::new();
        let x = tape.constant(t(vec![1, 4], vec![1.0; 4]));
        let y = tape.layer_norm(x, None, None, 1e-5).unwrap();
        assert!(tape.value(y).data().iter().all(|v| v.abs() < 1e-12));

        let a = 10.0;
        let x = tape.constant(t(vec![1, 2], vec![-a, a]));
        let g = tape.param(Tensor::vector(vec![1.0, 1.0]));
        let b = tape.param(Tensor::vector(vec![0.0, 0.0]));
        let y = tape.layer_norm(x, Some(g), Some(b), 1e-8).unwrap();
        let v = tape.value(y).data();
        assert!((v[0] + 1.0).abs() < 1e-8 && (v[1] - 1.0).abs() < 1e-8);

        let x = tape.constant(t(vec![3, 1], vec![1.0, 2.0, 3.0]));
        assert!(matches!(
            tape.layer_norm(x, None, None, 1e-5),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn mse_values() {
        let mut tape = Tape::new();
        let cases = [
            (vec![1.0, 2.0], vec![1.0, 2.0], 0.0),
            (vec![0.0], vec![2.0], 4.0),
            (vec![0.0, 0.0], vec![1.0, 3.0], 5.0),
        ];
        for (p, q, want) in cases {
            let p = tape.constant(Tensor::vector(p));
            let q = tape.constant(Tensor::vector(q));
            let l = tape.mse(p, q).unwrap();
            assert_eq!(tape.value(l).item(), want);
        }
        let p = tape.constant(Tensor::vector(vec![0.0, 1.0]));
        let q = tape.constant(Tensor::vector(vec![0.0]));
        assert!(matches!(tape.mse(p, q), Err(Error::Dimension(_))));
    }

    #[test]
    fn l2_penalty_values() {
        let mut tape = Tape::new();
        let a = tape.param(Tensor::vector(vec![1.0, 1.0]));
        let p = tape.l2_penalty(&[a], &[0.1]).unwrap();
        assert!((tape.value(p).item() - 0.2).abs() < 1e-15);

        let z = tape.param(Tensor::zeros(vec![3]));
        let p = tape.l2_penalty(&[z], &[0.7]).unwrap();
        assert_eq!(tape.value(p).item(), 0.0);

        let b1 = tape.param(Tensor::vector(vec![1.0]));
        let b2 = tape.param(Tensor::vector(vec![2.0]));
        let p = tape.l2_penalty(&[b1, b2], &[1.0, 0.5]).unwrap();
        assert_eq!(tape.value(p).item(), 3.0);

        assert!(matches!(
            tape.l2_penalty(&[b1], &[-0.1]),
            Err(Error::Config { .. })
        ));
        assert!(matches!(
            tape.l2_penalty(&[b1, b2], &[0.1]),
            Err(Error::Dimension(_))
        ));
    }

    #[test]
    fn backward_simple_cases() {
        let mut tape = Tape::new();
        let w = tape.param(Tensor::vector(vec![3.0]));
        let unused = tape.param(Tensor::vector(vec![5.0, 6.0]));
        let zero = tape.constant(Tensor::vector(vec![0.0]));
        let loss = tape.mse(w, zero).unwrap();
        tape.backward(loss).unwrap();
        assert_eq!(tape.grad(w).unwrap(), &[6.0]);
        assert_eq!(tape.grad(unused).unwrap(), &[0.0, 0.0]);
        assert!(tape.grad(zero).is_none());
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut tape = Tape::new();
        let w = tape.param(Tensor::vector(vec![1.0, 2.0]));
        let y = tape.relu(w);
        assert!(matches!(tape.backward(y), Err(Error::Contract(_))));
    }

    #[test]
    fn concat_and_reshape_route_gradients() {
        let mut tape = Tape::new();
        let a = tape.param(t(vec![2, 1], vec![1.0, 2.0]));
        let b = tape.param(t(vec![2, 2], vec![3.0, 4.0, 5.0, 6.0]));
        let c = tape.concat_cols(a, b).unwrap();
        assert_eq!(tape.value(c).data(), &[1.0, 3.0, 4.0, 2.0, 5.0, 6.0]);
        let r = tape.reshape(c, vec![3, 2]).unwrap();
        let s = tape.sum_squares(r);
        tape.backward(s).unwrap();
        assert_eq!(tape.grad(a).unwrap(), &[2.0, 4.0]);
        assert_eq!(tape.grad(b).unwrap(), &[6.0, 8.0, 10.0, 12.0]);
    }
}
