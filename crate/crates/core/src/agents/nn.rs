//! Small dense networks with hand-written backpropagation, and Adam.
//!
//! Parameters live in one flat vector, layer by layer, each layer stored as
//! its row-major `out x in` weight matrix followed by its `out` biases. Hidden
//! layers use tanh. Weights start Xavier-uniform, `U(-a, a)` with
//! `a = sqrt(6 / (fan_in + fan_out))`, drawn in storage order from the
//! caller's seeded stream; biases start at zero.

use rand::Rng;

#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    activate_output: bool,
    params: Vec<f64>,
}

/// Layer inputs recorded by [`Mlp::forward_cached`]; the last entry is the output.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    activations: Vec<Vec<f64>>,
}

impl ForwardCache {
    pub fn output(&self) -> &[f64] {
        self.activations.last().expect("cache holds at least the input")
    }
}

fn param_count_for(sizes: &[usize]) -> usize {
    sizes.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
}

impl Mlp {
    /// `sizes` lists layer widths from input to output. With `activate_output`
    /// the final layer is followed by tanh as well, which suits a shared trunk.
    pub fn new<R: Rng + ?Sized>(sizes: &[usize], activate_output: bool, rng: &mut R) -> Self {
        assert!(sizes.len() >= 2, "an mlp needs at least an input and an output width");
        let mut params = Vec::with_capacity(param_count_for(sizes));
        for w in sizes.windows(2) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
            params.extend((0..fan_in * fan_out).map(|_| rng.random_range(-bound..bound)));
            params.extend(std::iter::repeat_n(0.0, fan_out));
        }
        Self { sizes: sizes.to_vec(), activate_output, params }
    }

    pub fn from_params(sizes: &[usize], activate_output: bool, params: Vec<f64>) -> Option<Self> {
        (sizes.len() >= 2 && params.len() == param_count_for(sizes))
            .then(|| Self { sizes: sizes.to_vec(), activate_output, params })
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn activates_output(&self) -> bool {
        self.activate_output
    }

    pub fn input_len(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_len(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.len()
    }

    pub fn zero_grad(&self) -> Vec<f64> {
        vec![0.0; self.params.len()]
    }

    fn layer_count(&self) -> usize {
        self.sizes.len() - 1
    }

    fn activated(&self, layer: usize) -> bool {
        layer + 1 < self.layer_count() || self.activate_output
    }

    pub fn forward(&self, input: &[f64]) -> Vec<f64> {
        debug_assert_eq!(input.len(), self.input_len());
        let mut x = input.to_vec();
        let mut offset = 0;
        for layer in 0..self.layer_count() {
            let (n_in, n_out) = (self.sizes[layer], self.sizes[layer + 1]);
            x = self.affine(offset, n_in, n_out, &x, self.activated(layer));
            offset += n_in * n_out + n_out;
        }
        x
    }

    pub fn forward_cached(&self, input: &[f64]) -> ForwardCache {
        let mut activations = Vec::with_capacity(self.sizes.len());
        activations.push(input.to_vec());
        let mut offset = 0;
        for layer in 0..self.layer_count() {
            let (n_in, n_out) = (self.sizes[layer], self.sizes[layer + 1]);
            let next = self.affine(offset, n_in, n_out, &activations[layer], self.activated(layer));
            activations.push(next);
            offset += n_in * n_out + n_out;
        }
        ForwardCache { activations }
    }

    fn affine(&self, offset: usize, n_in: usize, n_out: usize, x: &[f64], tanh: bool) -> Vec<f64> {
        let weights = &self.params[offset..offset + n_in * n_out];
        let bias = &self.params[offset + n_in * n_out..offset + n_in * n_out + n_out];
        weights
            .chunks_exact(n_in)
            .zip(bias)
            .map(|(row, b)| {
                let z = row.iter().zip(x).map(|(w, xi)| w * xi).sum::<f64>() + b;
                if tanh {
                    z.tanh()
                } else {
                    z
                }
            })
            .collect()
    }

    /// Accumulates d(loss)/d(params) into `grads` given d(loss)/d(output) and
    /// returns d(loss)/d(input).
    pub fn backward(&self, cache: &ForwardCache, grad_output: &[f64], grads: &mut [f64]) -> Vec<f64> {
        debug_assert_eq!(grads.len(), self.params.len());
        let mut delta = grad_output.to_vec();
        let mut offset = self.params.len();
        for layer in (0..self.layer_count()).rev() {
            let (n_in, n_out) = (self.sizes[layer], self.sizes[layer + 1]);
            offset -= n_in * n_out + n_out;
            if self.activated(layer) {
                let out = &cache.activations[layer + 1];
                for (d, y) in delta.iter_mut().zip(out) {
                    *d *= 1.0 - y * y;
                }
            }
            let x = &cache.activations[layer];
            let weights = &self.params[offset..offset + n_in * n_out];
            let (gw, gb) = grads[offset..offset + n_in * n_out + n_out].split_at_mut(n_in * n_out);
            let mut prev = vec![0.0; n_in];
            for (o, &d) in delta.iter().enumerate() {
                if d == 0.0 {
                    continue;
                }
                gb[o] += d;
                let row = &weights[o * n_in..(o + 1) * n_in];
                let grow = &mut gw[o * n_in..(o + 1) * n_in];
                for i in 0..n_in {
                    grow[i] += d * x[i];
                    prev[i] += d * row[i];
                }
            }
            delta = prev;
        }
        delta
    }
}

/// Scales `grads` in place so their global L2 norm is at most `max_norm`.
pub fn clip_grad_norm(grads: &mut [f64], max_norm: f64) -> f64 {
    let norm = grads.iter().map(|g| g * g).sum::<f64>().sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let scale = max_norm / (norm + 1e-12);
        grads.iter_mut().for_each(|g| *g *= scale);
    }
    norm
}

/// Adam with bias correction.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
}

impl Adam {
    pub fn new(param_count: usize, learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            m: vec![0.0; param_count],
            v: vec![0.0; param_count],
            t: 0,
        }
    }

    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) {
        debug_assert_eq!(params.len(), self.m.len());
        self.t += 1;
        let c1 = 1.0 - self.beta1.powf(self.t as f64);
        let c2 = 1.0 - self.beta2.powf(self.t as f64);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            *m = self.beta1 * *m + (1.0 - self.beta1) * g;
            *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
            let m_hat = *m / c1;
            let v_hat = *v / c2;
            *p -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn layout_and_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let net = Mlp::new(&[3, 64, 64, 3], false, &mut rng);
        assert_eq!(net.param_count(), 3 * 64 + 64 + 64 * 64 + 64 + 64 * 3 + 3);
        assert_eq!(net.forward(&[0.1, 0.2, 0.3]).len(), 3);
    }

    #[test]
    fn seeded_init_is_reproducible() {
        let a = Mlp::new(&[3, 8, 2], false, &mut ChaCha8Rng::seed_from_u64(5));
        let b = Mlp::new(&[3, 8, 2], false, &mut ChaCha8Rng::seed_from_u64(5));
        assert_eq!(a, b);
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let net = Mlp::new(&[3, 5, 4, 2], true, &mut rng);
        let x = [0.3, -0.7, 0.5];
        let weights = [0.7, -1.3];
        let loss = |n: &Mlp| n.forward(&x).iter().zip(&weights).map(|(y, w)| y * w).sum::<f64>();

        let cache = net.forward_cached(&x);
        let mut grads = net.zero_grad();
        let dx = net.backward(&cache, &weights, &mut grads);

        let h = 1e-6;
        for i in 0..net.param_count() {
            let mut plus = net.clone();
            plus.params_mut()[i] += h;
            let mut minus = net.clone();
            minus.params_mut()[i] -= h;
            let numeric = (loss(&plus) - loss(&minus)) / (2.0 * h);
            assert!((numeric - grads[i]).abs() < 1e-7, "param {i}: {numeric} vs {}", grads[i]);
        }
        for i in 0..3 {
            let mut xp = x;
            xp[i] += h;
            let mut xm = x;
            xm[i] -= h;
            let f = |v: &[f64]| net.forward(v).iter().zip(&weights).map(|(y, w)| y * w).sum::<f64>();
            let numeric = (f(&xp) - f(&xm)) / (2.0 * h);
            assert!((numeric - dx[i]).abs() < 1e-7);
        }
    }

    #[test]
    fn adam_descends_a_quadratic() {
        let mut p = vec![3.0, -2.0];
        let mut opt = Adam::new(2, 0.1);
        for _ in 0..500 {
            let g: Vec<f64> = p.iter().map(|x| 2.0 * x).collect();
            opt.step(&mut p, &g);
        }
        assert!(p.iter().all(|x| x.abs() < 1e-2), "{p:?}");
    }

    #[test]
    fn clipping_bounds_norm() {
        let mut g = vec![3.0, 4.0];
        let norm = clip_grad_norm(&mut g, 1.0);
        assert_eq!(norm, 5.0);
        assert!((g[0].hypot(g[1]) - 1.0).abs() < 1e-9);
    }
}
