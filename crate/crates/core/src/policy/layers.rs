//! Dense and convolution layers over slices of a flat parameter vector.

use serde::{Deserialize, Serialize};

/// Fully connected layer `y = W x + b`, `W` row-major `out x in`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub offset: usize,
}

impl Dense {
    pub fn param_count(&self) -> usize {
        self.outputs * (self.inputs + 1)
    }

    fn bias_offset(&self) -> usize {
        self.offset + self.outputs * self.inputs
    }

    pub fn forward(&self, params: &[f64], x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.inputs);
        debug_assert_eq!(y.len(), self.outputs);
        let w = &params[self.offset..self.bias_offset()];
        let b = &params[self.bias_offset()..self.bias_offset() + self.outputs];
        for (o, (row, bias)) in w.chunks_exact(self.inputs).zip(b).enumerate() {
            y[o] = bias + row.iter().zip(x).map(|(w, x)| w * x).sum::<f64>();
        }
    }

    /// Accumulates parameter gradients and, if requested, the input gradient.
    pub fn backward(
        &self,
        params: &[f64],
        x: &[f64],
        dy: &[f64],
        grad: &mut [f64],
        dx: Option<&mut [f64]>,
    ) {
        let (gw, gb) = grad[self.offset..self.offset + self.param_count()]
            .split_at_mut(self.outputs * self.inputs);
        for (o, &d) in dy.iter().enumerate() {
            if d == 0.0 {
                continue;
            }
            gb[o] += d;
            for (g, &xi) in gw[o * self.inputs..(o + 1) * self.inputs].iter_mut().zip(x) {
                *g += d * xi;
            }
        }
        if let Some(dx) = dx {
            dx.fill(0.0);
            let w = &params[self.offset..self.bias_offset()];
            for (row, &d) in w.chunks_exact(self.inputs).zip(dy) {
                if d == 0.0 {
                    continue;
                }
                for (g, &wi) in dx.iter_mut().zip(row) {
                    *g += d * wi;
                }
            }
        }
    }
}

/// Square-kernel 2-D convolution with zero padding, layout `[channel][row][col]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub offset: usize,
}

impl Conv2d {
    pub fn out_h(&self) -> usize {
        (self.in_h + 2 * self.padding - self.kernel) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.in_w + 2 * self.padding - self.kernel) / self.stride + 1
    }

    pub fn in_len(&self) -> usize {
        self.in_channels * self.in_h * self.in_w
    }

    pub fn out_len(&self) -> usize {
        self.out_channels * self.out_h() * self.out_w()
    }

    fn weights_len(&self) -> usize {
        self.out_channels * self.in_channels * self.kernel * self.kernel
    }

    pub fn param_count(&self) -> usize {
        self.weights_len() + self.out_channels
    }

    /// Calls `f(out_index, in_index, weight_index)` for every in-bounds tap.
    #[inline]
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        let (oh, ow, k) = (self.out_h(), self.out_w(), self.kernel);
        for oc in 0..self.out_channels {
            for oy in 0..oh {
                for ox in 0..ow {
                    let out_idx = (oc * oh + oy) * ow + ox;
                    for ic in 0..self.in_channels {
                        let w_base = (oc * self.in_channels + ic) * k * k;
                        for ky in 0..k {
                            let iy = (oy * self.stride + ky) as isize - self.padding as isize;
                            if iy < 0 || iy >= self.in_h as isize {
                                continue;
                            }
                            let row = (ic * self.in_h + iy as usize) * self.in_w;
                            for kx in 0..k {
                                let ix = (ox * self.stride + kx) as isize - self.padding as isize;
                                if ix < 0 || ix >= self.in_w as isize {
                                    continue;
                                }
                                f(out_idx, row + ix as usize, w_base + ky * k + kx);
                            }
                        }
                    }
                }
            }
        }
    }

    pub fn forward(&self, params: &[f64], x: &[f64], y: &mut [f64]) {
        debug_assert_eq!(x.len(), self.in_len());
        debug_assert_eq!(y.len(), self.out_len());
        let w = &params[self.offset..self.offset + self.weights_len()];
        let b = &params[self.offset + self.weights_len()..self.offset + self.param_count()];
        let plane = self.out_h() * self.out_w();
        for (oc, chunk) in y.chunks_exact_mut(plane).enumerate() {
            chunk.fill(b[oc]);
        }
        self.for_each_tap(|o, i, k| y[o] += w[k] * x[i]);
    }

    pub fn backward(
        &self,
        params: &[f64],
        x: &[f64],
        dy: &[f64],
        grad: &mut [f64],
        dx: Option<&mut [f64]>,
    ) {
        let wl = self.weights_len();
        let plane = self.out_h() * self.out_w();
        {
            let (gw, gb) = grad[self.offset..self.offset + self.param_count()].split_at_mut(wl);
            for (oc, chunk) in dy.chunks_exact(plane).enumerate() {
                gb[oc] += chunk.iter().sum::<f64>();
            }
            self.for_each_tap(|o, i, k| gw[k] += dy[o] * x[i]);
        }
        if let Some(dx) = dx {
            dx.fill(0.0);
            let w = &params[self.offset..self.offset + wl];
            self.for_each_tap(|o, i, k| dx[i] += dy[o] * w[k]);
        }
    }
}

pub fn tanh_inplace(v: &mut [f64]) {
    v.iter_mut().for_each(|x| *x = x.tanh());
}

/// Multiplies `d` by the tanh derivative given the activation outputs `y`.
pub fn tanh_backward(y: &[f64], d: &mut [f64]) {
    for (g, &a) in d.iter_mut().zip(y) {
        *g *= 1.0 - a * a;
    }
}

pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dense_forward() {
        let layer = Dense {
            inputs: 2,
            outputs: 2,
            offset: 1,
        };
        let params = [9.0, 1.0, 2.0, 3.0, 4.0, 0.5, -0.5];
        let mut y = [0.0; 2];
        layer.forward(&params, &[1.0, -1.0], &mut y);
        assert_eq!(y, [-0.5, -1.5]);
    }

    #[test]
    fn conv_shapes() {
        let c = Conv2d {
            in_channels: 1,
            out_channels: 8,
            kernel: 3,
            stride: 2,
            padding: 1,
            in_h: 18,
            in_w: 60,
            offset: 0,
        };
        assert_eq!((c.out_h(), c.out_w()), (9, 30));
        assert_eq!(c.param_count(), 80);
    }

    #[test]
    fn conv_identity_kernel() {
        let c = Conv2d {
            in_channels: 1,
            out_channels: 1,
            kernel: 3,
            stride: 1,
            padding: 1,
            in_h: 3,
            in_w: 4,
            offset: 0,
        };
        let mut params = vec![0.0; c.param_count()];
        params[4] = 1.0;
        params[9] = 0.25;
        let x: Vec<f64> = (0..12).map(f64::from).collect();
        let mut y = vec![0.0; 12];
        c.forward(&params, &x, &mut y);
        for (a, b) in y.iter().zip(&x) {
            assert_eq!(*a, b + 0.25);
        }
    }

    fn numeric_check(
        n_params: usize,
        n_in: usize,
        n_out: usize,
        fwd: &dyn Fn(&[f64], &[f64], &mut [f64]),
        bwd: &dyn Fn(&[f64], &[f64], &[f64], &mut [f64], &mut [f64]),
    ) {
        let params: Vec<f64> = (0..n_params)
            .map(|i| ((i * 37 % 23) as f64 / 23.0) - 0.5)
            .collect();
        let x: Vec<f64> = (0..n_in)
            .map(|i| ((i * 13 % 17) as f64 / 17.0) - 0.4)
            .collect();
        let dy: Vec<f64> = (0..n_out)
            .map(|i| ((i * 7 % 11) as f64 / 11.0) - 0.3)
            .collect();
        let loss = |p: &[f64], x: &[f64]| {
            let mut y = vec![0.0; n_out];
            fwd(p, x, &mut y);
            y.iter().zip(&dy).map(|(a, b)| a * b).sum::<f64>()
        };
        let mut g = vec![0.0; n_params];
        let mut dx = vec![0.0; n_in];
        bwd(&params, &x, &dy, &mut g, &mut dx);
        let h = 1e-6;
        for i in 0..n_params {
            let (mut a, mut b) = (params.clone(), params.clone());
            a[i] += h;
            b[i] -= h;
            let num = (loss(&a, &x) - loss(&b, &x)) / (2.0 * h);
            assert!((num - g[i]).abs() < 1e-8, "param {i}: {num} vs {}", g[i]);
        }
        for i in 0..n_in {
            let (mut a, mut b) = (x.clone(), x.clone());
            a[i] += h;
            b[i] -= h;
            let num = (loss(&params, &a) - loss(&params, &b)) / (2.0 * h);
            assert!((num - dx[i]).abs() < 1e-8, "input {i}");
        }
    }

    #[test]
    fn dense_gradients() {
        let l = Dense {
            inputs: 5,
            outputs: 3,
            offset: 0,
        };
        numeric_check(
            l.param_count(),
            5,
            3,
            &|p, x, y| l.forward(p, x, y),
            &|p, x, dy, g, dx| l.backward(p, x, dy, g, Some(dx)),
        );
    }

    #[test]
    fn conv_gradients() {
        let c = Conv2d {
            in_channels: 2,
            out_channels: 3,
            kernel: 3,
            stride: 2,
            padding: 1,
            in_h: 5,
            in_w: 7,
            offset: 0,
        };
        numeric_check(
            c.param_count(),
            c.in_len(),
            c.out_len(),
            &|p, x, y| c.forward(p, x, y),
            &|p, x, dy, g, dx| c.backward(p, x, dy, g, Some(dx)),
        );
    }

    #[test]
    fn softplus_is_stable() {
        assert!((softplus(0.0) - 2f64.ln()).abs() < 1e-15);
        assert_eq!(softplus(100.0), 100.0);
        assert!(softplus(-100.0) > 0.0);
    }
}
