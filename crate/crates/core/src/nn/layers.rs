use super::{gemm, Mat, NnError, Scalar, Tensor};

fn expect_rank<T>(x: &Tensor<T>, rank: usize, what: &[usize]) -> Result<(), NnError> {
    if x.shape.len() != rank {
        return Err(NnError::ShapeMismatch { expected: what.to_vec(), found: x.shape.clone() });
    }
    Ok(())
}

/// 3x3 valid cross-correlation, `F x C x 3 x 3` kernels plus bias.
#[derive(Debug, Clone)]
pub struct Conv2d<T> {
    pub in_channels: usize,
    pub out_channels: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
    pub grad_weight: Vec<T>,
    pub grad_bias: Vec<T>,
    cols: Vec<T>,
    input_shape: Vec<usize>,
}

pub const KERNEL: usize = 3;

impl<T: Scalar> Conv2d<T> {
    pub fn new(in_channels: usize, out_channels: usize) -> Self {
        let k = in_channels * KERNEL * KERNEL;
        Self {
            in_channels,
            out_channels,
            weight: vec![T::zero(); out_channels * k],
            bias: vec![T::zero(); out_channels],
            grad_weight: vec![T::zero(); out_channels * k],
            grad_bias: vec![T::zero(); out_channels],
            cols: Vec::new(),
            input_shape: Vec::new(),
        }
    }

    fn patch_len(&self) -> usize {
        self.in_channels * KERNEL * KERNEL
    }

    /// Unfold one `C x H x W` sample into a `C*9 x Ho*Wo` matrix.
    fn im2col(channels: usize, x: &[T], h: usize, w: usize, cols: &mut [T]) {
        let (ho, wo) = (h - 2, w - 2);
        let p = ho * wo;
        for c in 0..channels {
            let plane = &x[c * h * w..(c + 1) * h * w];
            for ki in 0..KERNEL {
                for kj in 0..KERNEL {
                    let row = &mut cols[((c * KERNEL + ki) * KERNEL + kj) * p..][..p];
                    for oy in 0..ho {
                        let src = &plane[(oy + ki) * w + kj..][..wo];
                        row[oy * wo..(oy + 1) * wo].copy_from_slice(src);
                    }
                }
            }
        }
    }

    fn col2im(channels: usize, cols: &[T], h: usize, w: usize, dx: &mut [T]) {
        let (ho, wo) = (h - 2, w - 2);
        let p = ho * wo;
        for c in 0..channels {
            let plane = &mut dx[c * h * w..(c + 1) * h * w];
            for ki in 0..KERNEL {
                for kj in 0..KERNEL {
                    let row = &cols[((c * KERNEL + ki) * KERNEL + kj) * p..][..p];
                    for oy in 0..ho {
                        let dst = &mut plane[(oy + ki) * w + kj..][..wo];
                        for (d, &s) in dst.iter_mut().zip(&row[oy * wo..(oy + 1) * wo]) {
                            *d += s;
                        }
                    }
                }
            }
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>, train: bool) -> Result<Tensor<T>, NnError> {
        expect_rank(x, 4, &[0, self.in_channels, 0, 0])?;
        let (n, c, h, w) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
        if c != self.in_channels || h < KERNEL || w < KERNEL {
            return Err(NnError::ShapeMismatch { expected: vec![n, self.in_channels, h.max(3), w.max(3)], found: x.shape.clone() });
        }
        let (ho, wo) = (h - 2, w - 2);
        let (k, p, f) = (self.patch_len(), ho * wo, self.out_channels);
        let mut out = Tensor::zeros(&[n, f, ho, wo]);
        let mut scratch = Vec::new();
        if train {
            self.cols.resize(n * k * p, T::zero());
            self.input_shape = x.shape.clone();
        } else {
            scratch.resize(k * p, T::zero());
        }
        for s in 0..n {
            let cols = if train { &mut self.cols[s * k * p..(s + 1) * k * p] } else { &mut scratch[..] };
            let sample = &x.data[s * c * h * w..(s + 1) * c * h * w];
            Self::im2col(c, sample, h, w, cols);
            let y = &mut out.data[s * f * p..(s + 1) * f * p];
            gemm(Mat::new(&self.weight, f, k), Mat::new(cols, k, p), y, false);
            for (row, &b) in y.chunks_exact_mut(p).zip(&self.bias) {
                row.iter_mut().for_each(|v| *v += b);
            }
        }
        Ok(out)
    }

    pub fn backward(&mut self, grad: &Tensor<T>, need_input: bool) -> Option<Tensor<T>> {
        let (n, c, h, w) = (self.input_shape[0], self.input_shape[1], self.input_shape[2], self.input_shape[3]);
        let (k, p, f) = (self.patch_len(), (h - 2) * (w - 2), self.out_channels);
        let mut dx = need_input.then(|| Tensor::zeros(&self.input_shape));
        let mut dcols = vec![T::zero(); if need_input { k * p } else { 0 }];
        for s in 0..n {
            let dy = &grad.data[s * f * p..(s + 1) * f * p];
            let cols = &self.cols[s * k * p..(s + 1) * k * p];
            gemm(Mat::new(dy, f, p), Mat::t(cols, k, p), &mut self.grad_weight, true);
            for (gb, row) in self.grad_bias.iter_mut().zip(dy.chunks_exact(p)) {
                *gb += row.iter().copied().sum::<T>();
            }
            if let Some(dx) = dx.as_mut() {
                gemm(Mat::t(&self.weight, f, k), Mat::new(dy, f, p), &mut dcols, false);
                Self::col2im(c, &dcols, h, w, &mut dx.data[s * c * h * w..(s + 1) * c * h * w]);
            }
        }
        dx
    }
}

/// Fully connected layer on flattened samples.
#[derive(Debug, Clone)]
pub struct Dense<T> {
    pub inputs: usize,
    pub outputs: usize,
    pub weight: Vec<T>,
    pub bias: Vec<T>,
    pub grad_weight: Vec<T>,
    pub grad_bias: Vec<T>,
    input: Tensor<T>,
}

impl<T: Scalar> Dense<T> {
    pub fn new(inputs: usize, outputs: usize) -> Self {
        Self {
            inputs,
            outputs,
            weight: vec![T::zero(); inputs * outputs],
            bias: vec![T::zero(); outputs],
            grad_weight: vec![T::zero(); inputs * outputs],
            grad_bias: vec![T::zero(); outputs],
            input: Tensor { shape: Vec::new(), data: Vec::new() },
        }
    }

    pub fn forward(&mut self, x: &Tensor<T>, train: bool) -> Result<Tensor<T>, NnError> {
        if x.shape.is_empty() || x.sample_len() != self.inputs {
            return Err(NnError::ShapeMismatch { expected: vec![x.shape.first().copied().unwrap_or(0), self.inputs], found: x.shape.clone() });
        }
        let n = x.batch();
        let mut out = Tensor::zeros(&[n, self.outputs]);
        gemm(Mat::new(&x.data, n, self.inputs), Mat::t(&self.weight, self.outputs, self.inputs), &mut out.data, false);
        for row in out.data.chunks_exact_mut(self.outputs) {
            row.iter_mut().zip(&self.bias).for_each(|(v, &b)| *v += b);
        }
        if train {
            self.input = x.clone();
        }
        Ok(out)
    }

    pub fn backward(&mut self, grad: &Tensor<T>, need_input: bool) -> Option<Tensor<T>> {
        let n = self.input.batch();
        gemm(Mat::t(&grad.data, n, self.outputs), Mat::new(&self.input.data, n, self.inputs), &mut self.grad_weight, true);
        for row in grad.data.chunks_exact(self.outputs) {
            self.grad_bias.iter_mut().zip(row).for_each(|(g, &d)| *g += d);
        }
        need_input.then(|| {
            let mut dx = Tensor::zeros(&self.input.shape);
            gemm(Mat::new(&grad.data, n, self.outputs), Mat::new(&self.weight, self.outputs, self.inputs), &mut dx.data, false);
            dx
        })
    }
}

#[derive(Debug, Clone, Default)]
pub struct Relu {
    mask: Vec<bool>,
}

impl Relu {
    pub fn forward<T: Scalar>(&mut self, x: &Tensor<T>, train: bool) -> Tensor<T> {
        if train {
            self.mask = x.data.iter().map(|&v| v > T::zero()).collect();
        }
        Tensor { shape: x.shape.clone(), data: x.data.iter().map(|&v| v.max(T::zero())).collect() }
    }

    pub fn backward<T: Scalar>(&self, grad: &Tensor<T>) -> Tensor<T> {
        Tensor {
            shape: grad.shape.clone(),
            data: grad.data.iter().zip(&self.mask).map(|(&g, &on)| if on { g } else { T::zero() }).collect(),
        }
    }
}

/// 2x2 max pooling with stride 2; odd trailing rows/columns are dropped.
#[derive(Debug, Clone, Default)]
pub struct MaxPool2 {
    argmax: Vec<usize>,
    input_shape: Vec<usize>,
}

impl MaxPool2 {
    pub fn forward<T: Scalar>(&mut self, x: &Tensor<T>, train: bool) -> Result<Tensor<T>, NnError> {
        expect_rank(x, 4, &[0, 0, 2, 2])?;
        let (n, c, h, w) = (x.shape[0], x.shape[1], x.shape[2], x.shape[3]);
        let (ho, wo) = (h / 2, w / 2);
        let mut out = Tensor::zeros(&[n, c, ho, wo]);
        let mut argmax = Vec::with_capacity(if train { out.len() } else { 0 });
        for plane in 0..n * c {
            let base = plane * h * w;
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = base + 2 * oy * w + 2 * ox;
                    for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                        let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                        if x.data[idx] > x.data[best] {
                            best = idx;
                        }
                    }
                    out.data[(plane * ho + oy) * wo + ox] = x.data[best];
                    if train {
                        argmax.push(best);
                    }
                }
            }
        }
        if train {
            self.argmax = argmax;
            self.input_shape = x.shape.clone();
        }
        Ok(out)
    }

    pub fn backward<T: Scalar>(&self, grad: &Tensor<T>) -> Tensor<T> {
        let mut dx = Tensor::zeros(&self.input_shape);
        for (&idx, &g) in self.argmax.iter().zip(&grad.data) {
            dx.data[idx] += g;
        }
        dx
    }
}

/// Mean cross-entropy of softmax(logits) against `labels`; returns the loss,
/// the probabilities and the gradient with respect to the logits.
pub fn softmax_cross_entropy<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<(f64, Tensor<T>, Tensor<T>), NnError> {
    if logits.shape.len() != 2 || logits.batch() != labels.len() {
        return Err(NnError::ShapeMismatch { expected: vec![labels.len(), 0], found: logits.shape.clone() });
    }
    let (n, k) = (logits.shape[0], logits.shape[1]);
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(NnError::ShapeMismatch { expected: vec![k], found: vec![bad + 1] });
    }
    let mut probs = Tensor::zeros(&logits.shape);
    let mut grad = Tensor::zeros(&logits.shape);
    let mut loss = 0.0;
    let inv_n = T::from_f64(1.0 / n as f64);
    for (s, &label) in labels.iter().enumerate() {
        let row = &logits.data[s * k..(s + 1) * k];
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let exps: Vec<T> = row.iter().map(|&v| (v - max).exp()).collect();
        let total: T = exps.iter().copied().sum();
        for j in 0..k {
            let p = exps[j] / total;
            probs.data[s * k + j] = p;
            let target = if j == label { T::one() } else { T::zero() };
            grad.data[s * k + j] = (p - target) * inv_n;
        }
        loss -= (row[label] - max - total.ln()).as_f64();
    }
    Ok((loss / n as f64, probs, grad))
}

/// One stage of a sequential network.
#[derive(Debug, Clone)]
pub enum Layer<T> {
    Conv(Conv2d<T>),
    Relu(Relu),
    Pool(MaxPool2),
    Dense(Dense<T>),
}

impl<T: Scalar> Layer<T> {
    pub fn forward(&mut self, x: &Tensor<T>, train: bool) -> Result<Tensor<T>, NnError> {
        match self {
            Layer::Conv(l) => l.forward(x, train),
            Layer::Relu(l) => Ok(l.forward(x, train)),
            Layer::Pool(l) => l.forward(x, train),
            Layer::Dense(l) => l.forward(x, train),
        }
    }

    pub fn backward(&mut self, grad: &Tensor<T>, need_input: bool) -> Option<Tensor<T>> {
        match self {
            Layer::Conv(l) => l.backward(grad, need_input),
            Layer::Relu(l) => Some(l.backward(grad)),
            Layer::Pool(l) => Some(l.backward(grad)),
            Layer::Dense(l) => l.backward(grad, need_input),
        }
    }

    /// `(parameters, gradients)` pairs, weights before biases.
    pub fn parameters_mut(&mut self) -> Vec<(&mut [T], &mut [T])> {
        match self {
            Layer::Conv(l) => vec![(&mut l.weight[..], &mut l.grad_weight[..]), (&mut l.bias[..], &mut l.grad_bias[..])],
            Layer::Dense(l) => vec![(&mut l.weight[..], &mut l.grad_weight[..]), (&mut l.bias[..], &mut l.grad_bias[..])],
            _ => Vec::new(),
        }
    }

    pub fn parameters(&self) -> Vec<&[T]> {
        match self {
            Layer::Conv(l) => vec![&l.weight[..], &l.bias[..]],
            Layer::Dense(l) => vec![&l.weight[..], &l.bias[..]],
            _ => Vec::new(),
        }
    }

    pub fn zero_grad(&mut self) {
        for (_, g) in self.parameters_mut() {
            g.iter_mut().for_each(|v| *v = T::zero());
        }
    }
}
