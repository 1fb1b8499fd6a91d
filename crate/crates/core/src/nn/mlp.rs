//! Batched multilayer perceptron with exact reverse-mode gradients.

use rand::Rng;

use super::matrix::Matrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Linear,
}

impl Activation {
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Relu => z.max(0.0),
            Activation::Linear => z,
        }
    }

    /// Subgradient; relu at exactly 0 is defined as 0.
    fn derivative(self, z: f64) -> f64 {
        match self {
            Activation::Relu => {
                if z > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Linear => 1.0,
        }
    }
}

/// One affine layer; `w` is out_dim x in_dim, rows are neurons.
#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    pub w: Matrix,
    pub b: Vec<f64>,
    pub act: Activation,
}

/// Dot product over four independent accumulator lanes. The summation order
/// is fixed, so results stay bit-reproducible run to run.
#[inline]
fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let chunks = a.len() / 4;
    let mut acc = [0.0f64; 4];
    for k in 0..chunks {
        let i = 4 * k;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut s = (acc[0] + acc[1]) + (acc[2] + acc[3]);
    for i in 4 * chunks..a.len() {
        s += a[i] * b[i];
    }
    s
}

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Layer>,
}

/// Activations recorded by `forward`, consumed by `backward`.
#[derive(Debug, Clone)]
pub struct MlpCache {
    inputs: Vec<Matrix>,
    preacts: Vec<Matrix>,
}

/// Per-layer parameter gradients, shapes mirroring the network.
#[derive(Debug, Clone)]
pub struct MlpGrads {
    pub layers: Vec<(Matrix, Vec<f64>)>,
}

impl Mlp {
    /// Glorot-uniform weights (a = sqrt(6/(fan_in+fan_out))), zero biases.
    pub fn glorot(dims: &[usize], acts: &[Activation], rng: &mut impl Rng) -> Self {
        assert!(dims.len() >= 2);
        assert_eq!(acts.len(), dims.len() - 1);
        let mut layers = Vec::with_capacity(acts.len());
        for (l, &act) in acts.iter().enumerate() {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let mut w = Matrix::zeros(fan_out, fan_in);
            for v in w.data_mut() {
                *v = rng.random::<f64>() * 2.0 * a - a;
            }
            layers.push(Layer { w, b: vec![0.0; fan_out], act });
        }
        Mlp { layers }
    }

    /// The house standard: one relu hidden layer, linear output.
    pub fn standard(in_dim: usize, hidden: usize, out_dim: usize, rng: &mut impl Rng) -> Self {
        Self::glorot(&[in_dim, hidden, out_dim], &[Activation::Relu, Activation::Linear], rng)
    }

    pub fn in_dim(&self) -> usize {
        self.layers[0].w.cols()
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().unwrap().w.rows()
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.w.data().len() + l.b.len()).sum()
    }

    /// Parameter tensors in a fixed order (w then b per layer).
    pub fn params(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for l in &self.layers {
            out.push(l.w.data());
            out.push(l.b.as_slice());
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for l in &mut self.layers {
            out.push(l.w.data_mut());
            out.push(l.b.as_mut_slice());
        }
        out
    }

    /// Batched forward pass; rows of `x` are independent samples.
    pub fn forward(&self, x: Matrix) -> (Matrix, MlpCache) {
        assert_eq!(x.cols(), self.in_dim(), "input dimension mismatch");
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut preacts = Vec::with_capacity(self.layers.len());
        let mut cur = x;
        for layer in &self.layers {
            let batch = cur.rows();
            let out_dim = layer.w.rows();
            let mut z = Matrix::zeros(batch, out_dim);
            let mut y = Matrix::zeros(batch, out_dim);
            for r in 0..batch {
                let xin = cur.row(r);
                let zrow = z.row_mut(r);
                let yrow = y.row_mut(r);
                for o in 0..out_dim {
                    let v = layer.b[o] + dot(xin, layer.w.row(o));
                    zrow[o] = v;
                    yrow[o] = layer.act.apply(v);
                }
            }
            debug_assert!(y.data().iter().all(|v| v.is_finite()), "non-finite activation");
            inputs.push(cur);
            preacts.push(z);
            cur = y;
        }
        (cur, MlpCache { inputs, preacts })
    }

    /// Forward without recording a cache.
    pub fn infer(&self, x: Matrix) -> Matrix {
        self.forward(x).0
    }

    /// Reverse-mode pass. Returns parameter gradients and the gradient with
    /// respect to the input batch.
    pub fn backward(&self, cache: &MlpCache, d_out: &Matrix) -> (MlpGrads, Matrix) {
        assert_eq!(d_out.cols(), self.out_dim(), "output gradient dimension mismatch");
        let mut grads = MlpGrads::zeros_like(self);
        let mut d_cur = d_out.clone();
        for (l, layer) in self.layers.iter().enumerate().rev() {
            let x = &cache.inputs[l];
            let z = &cache.preacts[l];
            let batch = x.rows();
            let (out_dim, in_dim) = (layer.w.rows(), layer.w.cols());

            // dZ = dY * act'(Z)
            let mut dz = d_cur;
            for (v, zv) in dz.data_mut().iter_mut().zip(z.data()) {
                *v *= layer.act.derivative(*zv);
            }

            let (dw, db) = &mut grads.layers[l];
            let mut dx = Matrix::zeros(batch, in_dim);
            for r in 0..batch {
                let dzrow = dz.row(r);
                let xrow = x.row(r);
                let dxrow = dx.row_mut(r);
                for o in 0..out_dim {
                    let g = dzrow[o];
                    if g == 0.0 {
                        continue;
                    }
                    db[o] += g;
                    let dwrow = dw.row_mut(o);
                    for (dwi, xi) in dwrow.iter_mut().zip(xrow) {
                        *dwi += g * xi;
                    }
                    let wrow = layer.w.row(o);
                    for (dxi, wi) in dxrow.iter_mut().zip(wrow) {
                        *dxi += g * wi;
                    }
                }
            }
            d_cur = dx;
        }
        (grads, d_cur)
    }
}

impl MlpGrads {
    pub fn zeros_like(net: &Mlp) -> Self {
        MlpGrads {
            layers: net
                .layers
                .iter()
                .map(|l| (Matrix::zeros(l.w.rows(), l.w.cols()), vec![0.0; l.b.len()]))
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &MlpGrads) {
        for ((w, b), (ow, ob)) in self.layers.iter_mut().zip(&other.layers) {
            for (a, o) in w.data_mut().iter_mut().zip(ow.data()) {
                *a += o;
            }
            for (a, o) in b.iter_mut().zip(ob) {
                *a += o;
            }
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for (w, b) in &mut self.layers {
            for v in w.data_mut() {
                *v *= factor;
            }
            for v in b {
                *v *= factor;
            }
        }
    }

    /// Gradient tensors in the same order as `Mlp::params`.
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::with_capacity(self.layers.len() * 2);
        for (w, b) in &self.layers {
            out.push(w.data());
            out.push(b.as_slice());
        }
        out
    }
}
