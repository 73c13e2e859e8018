//! Reverse-mode differentiation over an explicit operation record.
//!
//! Every call on [`Tape`] evaluates one primitive eagerly and appends it to
//! the record. Inputs always precede the operation that consumes them, so a
//! single reverse sweep over the record is a valid backward pass.

use super::ops::{log_softmax_rows, matmul_kernel, sigmoid};
use super::{ParamId, ParamSet, Tensor};
use crate::error::{Error, Result};

const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Sigmoid(Var),
    Tanh(Var),
    Cols(Var, usize),
    Row(Var, usize),
    ConcatRows(Vec<Var>),
    Gather(Var, Vec<Option<usize>>),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        normed: Vec<f64>,
        inv_std: Vec<f64>,
    },
    OuterSum(Var, Var),
    LogSoftmax(Var),
    External(Var, Vec<f64>),
}

#[derive(Debug)]
struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar root with respect to every recorded value.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Vec<f64>>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&[f64]> {
        self.grads.get(v.0).and_then(|g| g.as_deref())
    }
}

fn dims2(shape: &[usize]) -> (usize, usize) {
    (shape[0], shape[1..].iter().product())
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op) -> Var {
        debug_assert_eq!(shape.iter().product::<usize>(), value.len());
        self.nodes.push(Node { shape, value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        &self.nodes[v.0].shape
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor::new(n.shape.clone(), n.value.clone()).expect("recorded shapes are valid")
    }

    /// Scalar value of a one-element node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn input(&mut self, t: &Tensor) -> Var {
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Input)
    }

    /// Records a parameter leaf; its gradient flows back to `params[id]`.
    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> Var {
        let t = params.get(id);
        self.push(t.shape().to_vec(), t.data().to_vec(), Op::Param(id))
    }

    fn mismatch(&self, op: &'static str, a: Var, b: Var) -> Error {
        Error::ShapeMismatch {
            op,
            left: self.shape(a).to_vec(),
            right: self.shape(b).to_vec(),
        }
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(self.mismatch("matmul", a, b));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let value = matmul_kernel(self.value(a), self.value(b), m, k, n);
        Ok(self.push(vec![m, n], value, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(self.mismatch("add", a, b));
        }
        let value = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x + y)
            .collect();
        Ok(self.push(self.shape(a).to_vec(), value, Op::Add(a, b)))
    }

    /// Adds a length-`n` vector to every row of an `m×n` matrix.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (_, n) = dims2(self.shape(a));
        if self.value(row).len() != n {
            return Err(self.mismatch("add_row", a, row));
        }
        let r = self.value(row);
        let value = self
            .value(a)
            .chunks_exact(n)
            .flat_map(|chunk| chunk.iter().zip(r).map(|(x, y)| x + y))
            .collect();
        Ok(self.push(self.shape(a).to_vec(), value, Op::AddRow(a, row)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(self.mismatch("mul", a, b));
        }
        let value = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x * y)
            .collect();
        Ok(self.push(self.shape(a).to_vec(), value, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, c: f64) -> Var {
        let value = self.value(a).iter().map(|x| x * c).collect();
        self.push(self.shape(a).to_vec(), value, Op::Scale(a, c))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        let value = self.value(a).iter().copied().map(sigmoid).collect();
        self.push(self.shape(a).to_vec(), value, Op::Sigmoid(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).iter().map(|x| x.tanh()).collect();
        self.push(self.shape(a).to_vec(), value, Op::Tanh(a))
    }

    /// Columns `[start, start + width)` of a matrix.
    pub fn cols(&mut self, a: Var, start: usize, width: usize) -> Result<Var> {
        let (m, n) = dims2(self.shape(a));
        if width == 0 || start + width > n {
            return Err(Error::invalid(format!(
                "column slice {start}..{} of a {m}x{n} matrix",
                start + width
            )));
        }
        let value = self
            .value(a)
            .chunks_exact(n)
            .flat_map(|r| r[start..start + width].iter().copied())
            .collect();
        Ok(self.push(vec![m, width], value, Op::Cols(a, start)))
    }

    /// Row `i` of a matrix as a `1×n` matrix.
    pub fn row(&mut self, a: Var, i: usize) -> Result<Var> {
        let (m, n) = dims2(self.shape(a));
        if i >= m {
            return Err(Error::invalid(format!("row {i} of a {m}-row matrix")));
        }
        let value = self.value(a)[i * n..(i + 1) * n].to_vec();
        Ok(self.push(vec![1, n], value, Op::Row(a, i)))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::Empty("concat_rows"));
        };
        let (_, n) = dims2(self.shape(first));
        let mut rows = 0;
        let mut value = Vec::new();
        for &p in parts {
            let (m, c) = dims2(self.shape(p));
            if c != n {
                return Err(self.mismatch("concat_rows", first, p));
            }
            rows += m;
            value.extend_from_slice(self.value(p));
        }
        Ok(self.push(vec![rows, n], value, Op::ConcatRows(parts.to_vec())))
    }

    /// Row lookup into a table; `None` selects an all-zero row.
    pub fn gather(&mut self, table: Var, rows: &[Option<usize>]) -> Result<Var> {
        let (m, n) = dims2(self.shape(table));
        if rows.is_empty() {
            return Err(Error::Empty("gather"));
        }
        let mut value = vec![0.0; rows.len() * n];
        for (r, idx) in rows.iter().enumerate() {
            if let Some(k) = *idx {
                if k >= m {
                    return Err(Error::TokenOutOfRange { id: k, limit: m });
                }
                value[r * n..(r + 1) * n].copy_from_slice(&self.value(table)[k * n..(k + 1) * n]);
            }
        }
        Ok(self.push(vec![rows.len(), n], value, Op::Gather(table, rows.to_vec())))
    }

    /// Per-row normalization followed by an elementwise gain and bias.
    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Result<Var> {
        let (m, n) = dims2(self.shape(x));
        if self.value(gain).len() != n || self.value(bias).len() != n {
            return Err(self.mismatch("layer_norm", x, gain));
        }
        let mut normed = vec![0.0; m * n];
        let mut inv_std = vec![0.0; m];
        for (i, row) in self.value(x).chunks_exact(n).enumerate() {
            let mean = row.iter().sum::<f64>() / n as f64;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
            let s = 1.0 / (var + LAYER_NORM_EPS).sqrt();
            inv_std[i] = s;
            for (o, v) in normed[i * n..(i + 1) * n].iter_mut().zip(row) {
                *o = (v - mean) * s;
            }
        }
        let (g, b) = (self.value(gain), self.value(bias));
        let value = normed
            .chunks_exact(n)
            .flat_map(|r| r.iter().zip(g).zip(b).map(|((v, g), b)| v * g + b))
            .collect();
        Ok(self.push(
            vec![m, n],
            value,
            Op::LayerNorm {
                x,
                gain,
                bias,
                normed,
                inv_std,
            },
        ))
    }

    /// `out[t,u,:] = a[t,:] + b[u,:]` for `a: T×K`, `b: U×K`.
    pub fn outer_sum(&mut self, a: Var, b: Var) -> Result<Var> {
        let (t, k) = dims2(self.shape(a));
        let (u, k2) = dims2(self.shape(b));
        if k != k2 {
            return Err(self.mismatch("outer_sum", a, b));
        }
        let (va, vb) = (self.value(a), self.value(b));
        let mut value = Vec::with_capacity(t * u * k);
        for ra in va.chunks_exact(k) {
            for rb in vb.chunks_exact(k) {
                value.extend(ra.iter().zip(rb).map(|(x, y)| x + y));
            }
        }
        Ok(self.push(vec![t, u, k], value, Op::OuterSum(a, b)))
    }

    pub fn log_softmax(&mut self, a: Var) -> Result<Var> {
        if self.value(a).iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("log_softmax"));
        }
        let width = *self.shape(a).last().expect("non-empty shape");
        let value = log_softmax_rows(self.value(a), width);
        Ok(self.push(self.shape(a).to_vec(), value, Op::LogSoftmax(a)))
    }

    /// Attaches a scalar computed outside the tape together with its gradient
    /// with respect to `input`.
    pub fn external(&mut self, input: Var, value: f64, grad: Vec<f64>) -> Result<Var> {
        if grad.len() != self.value(input).len() {
            return Err(Error::ShapeMismatch {
                op: "external",
                left: self.shape(input).to_vec(),
                right: vec![grad.len()],
            });
        }
        Ok(self.push(vec![1], vec![value], Op::External(input, grad)))
    }

    /// Sum of scalars.
    pub fn sum_scalars(&mut self, parts: &[Var]) -> Result<Var> {
        let Some(&first) = parts.first() else {
            return Err(Error::Empty("sum_scalars"));
        };
        let mut acc = first;
        for &p in &parts[1..] {
            acc = self.add(acc, p)?;
        }
        Ok(acc)
    }

    /// Reverse sweep from a one-element root.
    pub fn backward(&self, root: Var) -> Result<Gradients> {
        if self.nodes[root.0].value.len() != 1 {
            return Err(Error::invalid("backward root must be a scalar"));
        }
        let mut grads: Vec<Option<Vec<f64>>> = Vec::with_capacity(root.0 + 1);
        grads.resize_with(root.0 + 1, || None);
        grads[root.0] = Some(vec![1.0]);

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn slot<'a>(&self, grads: &'a mut [Option<Vec<f64>>], v: Var) -> &'a mut [f64] {
        let len = self.nodes[v.0].value.len();
        grads[v.0].get_or_insert_with(|| vec![0.0; len])
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        match &node.op {
            Op::Input | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (sa, sb) = (self.shape(*a), self.shape(*b));
                let (m, k, n) = (sa[0], sa[1], sb[1]);
                let bv = self.value(*b);
                let da = self.slot(grads, *a);
                for i in 0..m {
                    let grow = &g[i * n..(i + 1) * n];
                    for p in 0..k {
                        let brow = &bv[p * n..(p + 1) * n];
                        da[i * k + p] += grow.iter().zip(brow).map(|(x, y)| x * y).sum::<f64>();
                    }
                }
                let av = self.value(*a);
                let db = self.slot(grads, *b);
                for i in 0..m {
                    let grow = &g[i * n..(i + 1) * n];
                    for p in 0..k {
                        let aval = av[i * k + p];
                        if aval == 0.0 {
                            continue;
                        }
                        for (d, gv) in db[p * n..(p + 1) * n].iter_mut().zip(grow) {
                            *d += aval * gv;
                        }
                    }
                }
            }
            Op::Add(a, b) => {
                for v in [a, b] {
                    for (d, gv) in self.slot(grads, *v).iter_mut().zip(g) {
                        *d += gv;
                    }
                }
            }
            Op::AddRow(a, r) => {
                for (d, gv) in self.slot(grads, *a).iter_mut().zip(g) {
                    *d += gv;
                }
                let n = self.value(*r).len();
                let dr = self.slot(grads, *r);
                for chunk in g.chunks_exact(n) {
                    for (d, gv) in dr.iter_mut().zip(chunk) {
                        *d += gv;
                    }
                }
            }
            Op::Mul(a, b) => {
                let (av, bv) = (self.value(*a), self.value(*b));
                for (i, d) in self.slot(grads, *a).iter_mut().enumerate() {
                    *d += g[i] * bv[i];
                }
                for (i, d) in self.slot(grads, *b).iter_mut().enumerate() {
                    *d += g[i] * av[i];
                }
            }
            Op::Scale(a, c) => {
                for (d, gv) in self.slot(grads, *a).iter_mut().zip(g) {
                    *d += c * gv;
                }
            }
            Op::Sigmoid(a) => {
                let y = &node.value;
                for (i, d) in self.slot(grads, *a).iter_mut().enumerate() {
                    *d += g[i] * y[i] * (1.0 - y[i]);
                }
            }
            Op::Tanh(a) => {
                let y = &node.value;
                for (i, d) in self.slot(grads, *a).iter_mut().enumerate() {
                    *d += g[i] * (1.0 - y[i] * y[i]);
                }
            }
            Op::Cols(a, start) => {
                let (_, n) = dims2(self.shape(*a));
                let w = node.shape[1];
                let da = self.slot(grads, *a);
                for (r, chunk) in g.chunks_exact(w).enumerate() {
                    for (d, gv) in da[r * n + start..r * n + start + w].iter_mut().zip(chunk) {
                        *d += gv;
                    }
                }
            }
            Op::Row(a, i) => {
                let n = g.len();
                let da = self.slot(grads, *a);
                for (d, gv) in da[i * n..(i + 1) * n].iter_mut().zip(g) {
                    *d += gv;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = self.value(*p).len();
                    for (d, gv) in self.slot(grads, *p).iter_mut().zip(&g[offset..offset + len]) {
                        *d += gv;
                    }
                    offset += len;
                }
            }
            Op::Gather(table, rows) => {
                let n = node.shape[1];
                let dt = self.slot(grads, *table);
                for (r, idx) in rows.iter().enumerate() {
                    if let Some(k) = *idx {
                        for (d, gv) in dt[k * n..(k + 1) * n].iter_mut().zip(&g[r * n..(r + 1) * n]) {
                            *d += gv;
                        }
                    }
                }
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                normed,
                inv_std,
            } => {
                let n = node.shape[1];
                let gv = self.value(*gain);
                {
                    let dg = self.slot(grads, *gain);
                    for (gc, nc) in g.chunks_exact(n).zip(normed.chunks_exact(n)) {
                        for j in 0..n {
                            dg[j] += gc[j] * nc[j];
                        }
                    }
                }
                {
                    let db = self.slot(grads, *bias);
                    for gc in g.chunks_exact(n) {
                        for j in 0..n {
                            db[j] += gc[j];
                        }
                    }
                }
                let dx = self.slot(grads, *x);
                for (i, (gc, nc)) in g.chunks_exact(n).zip(normed.chunks_exact(n)).enumerate() {
                    let dn: Vec<f64> = gc.iter().zip(gv).map(|(a, b)| a * b).collect();
                    let mean_dn = dn.iter().sum::<f64>() / n as f64;
                    let mean_dn_n = dn.iter().zip(nc).map(|(a, b)| a * b).sum::<f64>() / n as f64;
                    for j in 0..n {
                        dx[i * n + j] += inv_std[i] * (dn[j] - mean_dn - nc[j] * mean_dn_n);
                    }
                }
            }
            Op::OuterSum(a, b) => {
                let (t, u, k) = (node.shape[0], node.shape[1], node.shape[2]);
                {
                    let da = self.slot(grads, *a);
                    for ti in 0..t {
                        let drow = &mut da[ti * k..(ti + 1) * k];
                        for ui in 0..u {
                            let off = (ti * u + ui) * k;
                            for (d, gv) in drow.iter_mut().zip(&g[off..off + k]) {
                                *d += gv;
                            }
                        }
                    }
                }
                let db = self.slot(grads, *b);
                for ti in 0..t {
                    for ui in 0..u {
                        let off = (ti * u + ui) * k;
                        for (d, gv) in db[ui * k..(ui + 1) * k].iter_mut().zip(&g[off..off + k]) {
                            *d += gv;
                        }
                    }
                }
            }
            Op::LogSoftmax(a) => {
                let k = *node.shape.last().expect("non-empty shape");
                let y = &node.value;
                let da = self.slot(grads, *a);
                for ((dc, gc), yc) in da.chunks_exact_mut(k).zip(g.chunks_exact(k)).zip(y.chunks_exact(k)) {
                    let total: f64 = gc.iter().sum();
                    for j in 0..k {
                        dc[j] += gc[j] - yc[j].exp() * total;
                    }
                }
            }
            Op::External(a, local) => {
                let scale = g[0];
                for (d, l) in self.slot(grads, *a).iter_mut().zip(local) {
                    *d += scale * l;
                }
            }
        }
    }

    /// Adds the gradient of every parameter leaf into the matching tensor of `params`.
    pub fn accumulate_param_grads(&self, grads: &Gradients, params: &mut ParamSet) -> Result<()> {
        for (i, node) in self.nodes.iter().enumerate() {
            if let Op::Param(id) = node.op {
                if let Some(Some(g)) = grads.grads.get(i) {
                    params.get_mut(id).accumulate_grad(g)?;
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gradcheck::grad_check;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
        let n = shape.iter().product();
        Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    /// Builds `sum(w ⊙ f(inputs))` with fixed random weights `w` so every
    /// output coordinate contributes to the scalar.
    fn check<F>(inputs: Vec<Tensor>, seed: u64, f: F) -> f64
    where
        F: Fn(&mut Tape, &[Var]) -> Result<Var>,
    {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let weights: std::cell::RefCell<Option<Vec<f64>>> = Default::default();
        grad_check(
            |ps: &[Tensor]| {
                let mut tape = Tape::new();
                let vars: Vec<Var> = ps.iter().map(|p| tape.input(p)).collect();
                let out = f(&mut tape, &vars)?;
                let n = tape.value(out).len();
                let w = weights
                    .borrow_mut()
                    .get_or_insert_with(|| (0..n).map(|_| rng.random_range(-1.0..1.0)).collect())
                    .clone();
                let value: f64 = tape.value(out).iter().zip(&w).map(|(a, b)| a * b).sum();
                let root = tape.external(out, value, w)?;
                let grads = tape.backward(root)?;
                Ok((value, vars.iter().map(|v| grads.get(*v).map(<[f64]>::to_vec).unwrap_or_else(|| vec![0.0; tape.value(*v).len()])).collect()))
            },
            &inputs,
            1e-6,
        )
        .unwrap()
    }

    #[test]
    fn matmul_gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let a = random(&mut rng, &[3, 4]);
        let b = random(&mut rng, &[4, 2]);
        let err = check(vec![a, b], 2, |t, v| t.matmul(v[0], v[1]));
        assert!(err < 1e-6, "rel err {err}");
    }

    #[test]
    fn elementwise_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let a = random(&mut rng, &[2, 3]);
        let b = random(&mut rng, &[2, 3]);
        let r = random(&mut rng, &[3]);
        let err = check(vec![a, b, r], 4, |t, v| {
            let s = t.add(v[0], v[1])?;
            let m = t.mul(s, v[1])?;
            let sg = t.sigmoid(m);
            let th = t.tanh(v[0]);
            let p = t.mul(sg, th)?;
            let q = t.add_row(p, v[2])?;
            Ok(t.scale(q, -1.5))
        });
        assert!(err < 1e-4, "rel err {err}");
    }

    #[test]
    fn slicing_and_stacking_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = random(&mut rng, &[3, 4]);
        let table = random(&mut rng, &[4, 2]);
        let err = check(vec![a, table], 6, |t, v| {
            let c = t.cols(v[0], 1, 2)?;
            let r0 = t.row(c, 0)?;
            let r2 = t.row(c, 2)?;
            let g = t.gather(v[1], &[Some(3), None, Some(3), Some(0)])?;
            let top = t.concat_rows(&[r2, r0])?;
            let both = t.concat_rows(&[top, g])?;
            t.log_softmax(both)
        });
        assert!(err < 1e-4, "rel err {err}");
    }

    #[test]
    fn layer_norm_and_outer_sum_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random(&mut rng, &[3, 5]);
        let gain = random(&mut rng, &[5]);
        let bias = random(&mut rng, &[5]);
        let p = random(&mut rng, &[2, 5]);
        let err = check(vec![x, gain, bias, p], 8, |t, v| {
            let ln = t.layer_norm(v[0], v[1], v[2])?;
            let o = t.outer_sum(ln, v[3])?;
            t.log_softmax(o)
        });
        assert!(err < 1e-4, "rel err {err}");
    }

    #[test]
    fn shared_inputs_receive_summed_gradients() {
        let x = Tensor::new(vec![1, 1], vec![3.0]).unwrap();
        let mut tape = Tape::new();
        let v = tape.input(&x);
        let sq = tape.mul(v, v).unwrap();
        let root = tape.external(sq, 9.0, vec![1.0]).unwrap();
        let grads = tape.backward(root).unwrap();
        assert_eq!(grads.get(v).unwrap(), &[6.0]);
    }

    #[test]
    fn param_grads_accumulate_and_are_deterministic() {
        let mut params = ParamSet::new();
        let w = params
            .add("w", Tensor::new(vec![2, 2], vec![0.5, -0.2, 0.1, 0.3]).unwrap())
            .unwrap();
        let x = Tensor::new(vec![1, 2], vec![1.0, 2.0]).unwrap();
        let run = |params: &mut ParamSet| {
            let mut tape = Tape::new();
            let xv = tape.input(&x);
            let wv = tape.param(params, w);
            let h = tape.matmul(xv, wv).unwrap();
            let wv2 = tape.param(params, w);
            let h2 = tape.matmul(h, wv2).unwrap();
            let root = tape.external(h2, 0.0, vec![1.0, 1.0]).unwrap();
            let grads = tape.backward(root).unwrap();
            tape.accumulate_param_grads(&grads, params).unwrap();
        };
        run(&mut params);
        let once = params.get(w).grad().unwrap().to_vec();
        params.zero_grad();
        run(&mut params);
        assert_eq!(params.get(w).grad().unwrap(), once.as_slice());
        run(&mut params);
        let twice: Vec<f64> = once.iter().map(|v| 2.0 * v).collect();
        assert_eq!(params.get(w).grad().unwrap(), twice.as_slice());
    }

    #[test]
    fn shape_errors_are_reported() {
        let mut tape = Tape::new();
        let a = tape.input(&Tensor::zeros(&[2, 3]));
        let b = tape.input(&Tensor::zeros(&[2, 3]));
        assert!(matches!(tape.matmul(a, b), Err(Error::ShapeMismatch { .. })));
        assert!(tape.cols(a, 2, 2).is_err());
        assert!(tape.row(a, 2).is_err());
        assert!(tape.backward(a).is_err());
    }
}
