use rand::Rng;

use super::ParamBuffer;
use crate::scalar::{dot, Scalar};

/// Fully connected layer stored row-major (`w[o][i]`) inside a flat buffer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Linear {
    pub w: usize,
    pub b: usize,
    pub inp: usize,
    pub out: usize,
}

impl Linear {
    pub fn register<T: Scalar>(p: &mut ParamBuffer<T>, name: &str, inp: usize, out: usize) -> Self {
        let w = p.add(format!("{name}.w"), &[out, inp]);
        let b = p.add(format!("{name}.b"), &[out]);
        Self { w, b, inp, out }
    }

    pub fn init<T: Scalar, R: Rng + ?Sized>(&self, p: &mut [T], scale: f64, rng: &mut R) {
        let bound = scale / (self.inp as f64).sqrt();
        for x in &mut p[self.w..self.w + self.inp * self.out] {
            *x = T::lit(rng.random_range(-bound..=bound));
        }
        p[self.b..self.b + self.out].iter_mut().for_each(|x| *x = T::zero());
    }

    #[inline]
    pub fn forward<T: Scalar>(&self, p: &[T], x: &[T], y: &mut [T]) {
        debug_assert_eq!(x.len(), self.inp);
        for (o, yo) in y.iter_mut().enumerate().take(self.out) {
            let row = &p[self.w + o * self.inp..self.w + (o + 1) * self.inp];
            *yo = p[self.b + o] + dot(row, x);
        }
    }

    /// Accumulates parameter gradients into `g` and, if given, input
    /// gradients into `dx`.
    #[inline]
    pub fn backward<T: Scalar>(&self, p: &[T], x: &[T], dy: &[T], g: &mut [T], mut dx: Option<&mut [T]>) {
        for o in 0..self.out {
            let d = dy[o];
            if d == T::zero() {
                continue;
            }
            g[self.b + o] += d;
            let base = self.w + o * self.inp;
            for i in 0..self.inp {
                g[base + i] += d * x[i];
            }
            if let Some(dx) = dx.as_deref_mut() {
                let row = &p[base..base + self.inp];
                for i in 0..self.inp {
                    dx[i] += d * row[i];
                }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Tanh,
    Identity,
}

/// Multi-layer perceptron: hidden layers use `hidden`, the last is linear.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub hidden: Activation,
}

/// Per-layer activations of one forward pass; `acts[0]` is the input.
#[derive(Debug, Clone, Default)]
pub struct MlpCache<T> {
    pub acts: Vec<Vec<T>>,
}

impl<T: Scalar> MlpCache<T> {
    pub fn output(&self) -> &[T] {
        self.acts.last().map_or(&[], |v| v.as_slice())
    }
}

impl Mlp {
    pub fn register<T: Scalar>(p: &mut ParamBuffer<T>, prefix: &str, sizes: &[usize], hidden: Activation) -> Self {
        let layers =
            sizes.windows(2).enumerate().map(|(i, w)| Linear::register(p, &format!("{prefix}.l{i}"), w[0], w[1])).collect();
        Self { layers, hidden }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].inp
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().expect("at least one layer").out
    }

    /// Uniform ±1/sqrt(fan-in) weights, zero biases; the output layer is
    /// scaled by `out_scale`.
    pub fn init<T: Scalar, R: Rng + ?Sized>(&self, p: &mut [T], out_scale: f64, rng: &mut R) {
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            l.init(p, if i == last { out_scale } else { 1.0 }, rng);
        }
    }

    pub fn forward<T: Scalar>(&self, p: &[T], x: &[T], cache: &mut MlpCache<T>) {
        cache.acts.resize_with(self.layers.len() + 1, Vec::new);
        cache.acts[0].clear();
        cache.acts[0].extend_from_slice(x);
        let last = self.layers.len() - 1;
        for (i, l) in self.layers.iter().enumerate() {
            let (head, tail) = cache.acts.split_at_mut(i + 1);
            let y = &mut tail[0];
            y.clear();
            y.resize(l.out, T::zero());
            l.forward(p, &head[i], y);
            if i < last && self.hidden == Activation::Tanh {
                y.iter_mut().for_each(|v| *v = v.tanh());
            }
        }
    }

    /// Backpropagates `dout` (gradient w.r.t. the output) through the cached
    /// pass, accumulating into `g`. Returns the gradient w.r.t. the input.
    pub fn backward<T: Scalar>(&self, p: &[T], cache: &MlpCache<T>, dout: &[T], g: &mut [T]) -> Vec<T> {
        let mut dy = dout.to_vec();
        let last = self.layers.len() - 1;
        for i in (0..self.layers.len()).rev() {
            let l = &self.layers[i];
            if i < last && self.hidden == Activation::Tanh {
                for (d, &a) in dy.iter_mut().zip(&cache.acts[i + 1]) {
                    *d *= T::one() - a * a;
                }
            }
            let mut dx = vec![T::zero(); l.inp];
            l.backward(p, &cache.acts[i], &dy, g, Some(&mut dx));
            dy = dx;
        }
        dy
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::rng_for;

    #[test]
    fn mlp_gradients_match_finite_differences() {
        let mut p = ParamBuffer::<f64>::new();
        let mlp = Mlp::register(&mut p, "m", &[3, 5, 4, 2], Activation::Tanh);
        let mut rng = rng_for(3, 0, 0);
        mlp.init(&mut p.data, 1.0, &mut rng);
        let x = [0.3, -0.7, 1.1];
        let w = [0.6, -1.3];
        let loss = |d: &[f64]| {
            let mut c = MlpCache::default();
            mlp.forward(d, &x, &mut c);
            c.output().iter().zip(&w).map(|(a, b)| a * b).sum::<f64>()
        };
        let mut c = MlpCache::default();
        mlp.forward(&p.data, &x, &mut c);
        let mut g = vec![0.0; p.len()];
        let dx = mlp.backward(&p.data, &c, &w, &mut g);
        let h = 1e-6;
        for i in 0..p.len() {
            let mut a = p.data.clone();
            a[i] += h;
            let mut b = p.data.clone();
            b[i] -= h;
            let fd = (loss(&a) - loss(&b)) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-7 * (1.0 + fd.abs()), "param {i}: {fd} vs {}", g[i]);
        }
        assert_eq!(dx.len(), 3);
    }
}
