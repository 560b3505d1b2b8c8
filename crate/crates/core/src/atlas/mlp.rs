use alloc::vec::Vec;
use rand::Rng;

/// Fully connected network with ReLU hidden layers and a linear output.
///
/// All weights and biases live in one flat buffer so a single optimizer
/// state covers the whole network. Layer `l` stores an `out × in`
/// row-major weight block followed by its bias.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct Mlp {
    dims: Vec<usize>,
    params: Vec<f32>,
}

/// Activations of one batched forward pass, kept for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct Tape {
    rows: usize,
    /// `acts[0]` is the input, `acts[l + 1]` the output of layer `l`.
    acts: Vec<Vec<f32>>,
    grad: Vec<f32>,
    grad_next: Vec<f32>,
}

impl Tape {
    pub fn output(&self) -> &[f32] {
        self.acts.last().map(|a| &a[..]).unwrap_or(&[])
    }
}

impl Mlp {
    /// He-uniform initialization; `dims = [in, hidden.., out]`.
    pub fn new<R: Rng + ?Sized>(dims: &[usize], rng: &mut R) -> Self {
        assert!(dims.len() >= 2 && dims.iter().all(|&d| d > 0), "mlp needs positive layer sizes");
        let mut params = Vec::with_capacity(Self::param_count(dims));
        for w in dims.windows(2) {
            let bound = libm::sqrtf(6.0 / w[0] as f32);
            params.extend((0..w[0] * w[1]).map(|_| rng.random_range(-bound..bound)));
            params.extend(core::iter::repeat_n(0.0f32, w[1]));
        }
        Self {
            dims: dims.to_vec(),
            params,
        }
    }

    pub fn from_parts(dims: Vec<usize>, params: Vec<f32>) -> Option<Self> {
        (dims.len() >= 2 && params.len() == Self::param_count(&dims)).then_some(Self { dims, params })
    }

    fn param_count(dims: &[usize]) -> usize {
        dims.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn input_dim(&self) -> usize {
        self.dims[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    pub fn params(&self) -> &[f32] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f32] {
        &mut self.params
    }

    /// Zeroes the output layer so the network starts as the constant 0.
    pub fn zero_output_layer(&mut self) {
        let n = self.dims.len();
        let (i, o) = (self.dims[n - 2], self.dims[n - 1]);
        let len = self.params.len();
        self.params[len - (i * o + o)..].fill(0.0);
    }

    fn layer_offsets(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let mut off = 0;
        self.dims.windows(2).map(move |w| {
            let o = off;
            off += w[0] * w[1] + w[1];
            (o, w[0], w[1])
        })
    }

    /// Forward pass over `rows` row-major inputs; the output is `tape.output()`.
    pub fn forward(&self, input: &[f32], rows: usize, tape: &mut Tape) {
        assert_eq!(input.len(), rows * self.input_dim(), "mlp input length");
        let layers = self.dims.len() - 1;
        tape.rows = rows;
        tape.acts.resize_with(layers + 1, Vec::new);
        tape.acts[0].clear();
        tape.acts[0].extend_from_slice(input);
        for (l, (off, din, dout)) in self.layer_offsets().enumerate() {
            let (prev, rest) = tape.acts.split_at_mut(l + 1);
            let x = &prev[l];
            let y = &mut rest[0];
            y.resize(rows * dout, 0.0);
            let w = &self.params[off..off + din * dout];
            let b = &self.params[off + din * dout..off + din * dout + dout];
            for row in y.chunks_exact_mut(dout) {
                row.copy_from_slice(b);
            }
            // y (rows × dout) += x (rows × din) · wᵀ (din × dout)
            unsafe {
                matrixmultiply::sgemm(
                    rows,
                    din,
                    dout,
                    1.0,
                    x.as_ptr(),
                    din as isize,
                    1,
                    w.as_ptr(),
                    1,
                    din as isize,
                    1.0,
                    y.as_mut_ptr(),
                    dout as isize,
                    1,
                );
            }
            if l + 1 < layers {
                y.iter_mut().for_each(|v| *v = v.max(0.0));
            }
        }
    }

    /// Backpropagates `grad_out` (same shape as the output) through the last
    /// forward pass, accumulating parameter gradients into `grads` and
    /// optionally writing the input gradient.
    pub fn backward(&self, tape: &mut Tape, grad_out: &[f32], grads: &mut [f32], grad_input: Option<&mut Vec<f32>>) {
        let rows = tape.rows;
        assert_eq!(grad_out.len(), rows * self.output_dim(), "mlp output gradient length");
        assert_eq!(grads.len(), self.params.len(), "mlp gradient buffer length");
        let layers = self.dims.len() - 1;
        let offsets: Vec<(usize, usize, usize)> = self.layer_offsets().collect();
        let mut grad = core::mem::take(&mut tape.grad);
        let mut grad_next = core::mem::take(&mut tape.grad_next);
        grad.clear();
        grad.extend_from_slice(grad_out);
        let want_input = grad_input.is_some();
        for l in (0..layers).rev() {
            let (off, din, dout) = offsets[l];
            let x = &tape.acts[l];
            {
                let (gw, gb) = grads[off..off + din * dout + dout].split_at_mut(din * dout);
                // gw (dout × din) += gradᵀ (dout × rows) · x (rows × din)
                unsafe {
                    matrixmultiply::sgemm(
                        dout,
                        rows,
                        din,
                        1.0,
                        grad.as_ptr(),
                        1,
                        dout as isize,
                        x.as_ptr(),
                        din as isize,
                        1,
                        1.0,
                        gw.as_mut_ptr(),
                        din as isize,
                        1,
                    );
                }
                for row in grad.chunks_exact(dout) {
                    for (b, g) in gb.iter_mut().zip(row) {
                        *b += g;
                    }
                }
            }
            if l == 0 && !want_input {
                break;
            }
            grad_next.clear();
            grad_next.resize(rows * din, 0.0);
            let w = &self.params[off..off + din * dout];
            // grad_next (rows × din) = grad (rows × dout) · w (dout × din)
            unsafe {
                matrixmultiply::sgemm(
                    rows,
                    dout,
                    din,
                    1.0,
                    grad.as_ptr(),
                    dout as isize,
                    1,
                    w.as_ptr(),
                    din as isize,
                    1,
                    0.0,
                    grad_next.as_mut_ptr(),
                    din as isize,
                    1,
                );
            }
            if l > 0 {
                for (g, a) in grad_next.iter_mut().zip(x) {
                    if *a <= 0.0 {
                        *g = 0.0;
                    }
                }
            }
            core::mem::swap(&mut grad, &mut grad_next);
        }
        if let Some(out) = grad_input {
            out.clear();
            out.extend_from_slice(&grad);
        }
        tape.grad = grad;
        tape.grad_next = grad_next;
    }

    /// Single-row convenience evaluation.
    pub fn eval(&self, input: &[f32]) -> Vec<f32> {
        let mut tape = Tape::default();
        self.forward(input, 1, &mut tape);
        tape.output().to_vec()
    }
}

/// `[c, sin(2^k π c), cos(2^k π c)]` for every coordinate, `k < frequencies`.
pub fn encode_into(coords: &[f32], frequencies: usize, out: &mut Vec<f32>) {
    for &c in coords {
        out.push(c);
        let mut w = core::f32::consts::PI;
        for _ in 0..frequencies {
            out.push(libm::sinf(w * c));
            out.push(libm::cosf(w * c));
            w *= 2.0;
        }
    }
}

pub fn encoded_dim(coords: usize, frequencies: usize) -> usize {
    coords * (1 + 2 * frequencies)
}

/// Chains an encoding gradient back to the raw coordinates of one row.
pub fn encode_backward(coords: &[f32], frequencies: usize, grad_enc: &[f32], grad_coords: &mut [f32]) {
    let per = 1 + 2 * frequencies;
    for (i, &c) in coords.iter().enumerate() {
        let g = &grad_enc[i * per..(i + 1) * per];
        let mut acc = g[0];
        let mut w = core::f32::consts::PI;
        for k in 0..frequencies {
            acc += w * (g[1 + 2 * k] * libm::cosf(w * c) - g[2 + 2 * k] * libm::sinf(w * c));
            w *= 2.0;
        }
        grad_coords[i] = acc;
    }
}
