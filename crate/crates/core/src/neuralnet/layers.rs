//! Forward and backward kernels on `[time][width][channel]` activations.

use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy)]
pub(crate) struct ConvGeom {
    pub steps: usize,
    pub w_in: usize,
    pub c_in: usize,
    pub kt: usize,
    pub kf: usize,
    pub sf: usize,
    pub c_out: usize,
    pub w_out: usize,
}

impl ConvGeom {
    fn pad(&self) -> usize {
        (self.kt - 1) / 2
    }

    #[inline]
    fn src_time(&self, t: usize, dt: usize) -> Option<usize> {
        let ti = (t + dt).checked_sub(self.pad())?;
        (ti < self.steps).then_some(ti)
    }
}

/// Pre-activation output of a convolution.
pub(crate) fn conv_forward<S: Scalar>(g: &ConvGeom, x: &[S], kernel: &[S], bias: &[S]) -> Vec<S> {
    let mut out = vec![S::zero(); g.steps * g.w_out * g.c_out];
    for t in 0..g.steps {
        for wo in 0..g.w_out {
            let o = (t * g.w_out + wo) * g.c_out;
            for co in 0..g.c_out {
                let mut acc = bias[co];
                for dt in 0..g.kt {
                    let Some(ti) = g.src_time(t, dt) else { continue };
                    for df in 0..g.kf {
                        let xs = (ti * g.w_in + wo * g.sf + df) * g.c_in;
                        let ks = ((co * g.kt + dt) * g.kf + df) * g.c_in;
                        let xr = &x[xs..xs + g.c_in];
                        let kr = &kernel[ks..ks + g.c_in];
                        for ci in 0..g.c_in {
                            acc += kr[ci] * xr[ci];
                        }
                    }
                }
                out[o + co] = acc;
            }
        }
    }
    out
}

/// Accumulates kernel and bias gradients and, if requested, the input gradient.
pub(crate) fn conv_backward<S: Scalar>(
    g: &ConvGeom,
    x: &[S],
    kernel: &[S],
    dout: &[S],
    dkernel: &mut [S],
    dbias: &mut [S],
    mut dx: Option<&mut [S]>,
) {
    for t in 0..g.steps {
        for wo in 0..g.w_out {
            let o = (t * g.w_out + wo) * g.c_out;
            for co in 0..g.c_out {
                let d = dout[o + co];
                if d == S::zero() {
                    continue;
                }
                dbias[co] += d;
                for dt in 0..g.kt {
                    let Some(ti) = g.src_time(t, dt) else { continue };
                    for df in 0..g.kf {
                        let xs = (ti * g.w_in + wo * g.sf + df) * g.c_in;
                        let ks = ((co * g.kt + dt) * g.kf + df) * g.c_in;
                        for ci in 0..g.c_in {
                            dkernel[ks + ci] += d * x[xs + ci];
                        }
                        if let Some(dx) = dx.as_deref_mut() {
                            for ci in 0..g.c_in {
                                dx[xs + ci] += d * kernel[ks + ci];
                            }
                        }
                    }
                }
            }
        }
    }
}

#[inline]
pub(crate) fn leaky<S: Scalar>(x: S, slope: S) -> S {
    if x > S::zero() {
        x
    } else {
        slope * x
    }
}

#[inline]
pub(crate) fn leaky_grad<S: Scalar>(pre: S, slope: S) -> S {
    if pre > S::zero() {
        S::one()
    } else {
        slope
    }
}

/// Max over a centred window of `pool` timesteps (clipped at the edges).
/// Returns the pooled values and the source time of each maximum (first on ties).
pub(crate) fn pool_forward<S: Scalar>(
    steps: usize,
    width: usize,
    channels: usize,
    pool: usize,
    x: &[S],
) -> (Vec<S>, Vec<u32>) {
    let pad = (pool - 1) / 2;
    let plane = width * channels;
    let mut out = vec![S::zero(); steps * plane];
    let mut src = vec![0u32; steps * plane];
    for t in 0..steps {
        let lo = t.saturating_sub(pad);
        let hi = (t + pool - pad).min(steps);
        for j in 0..plane {
            let mut best = lo;
            for ti in lo + 1..hi {
                if x[ti * plane + j] > x[best * plane + j] {
                    best = ti;
                }
            }
            out[t * plane + j] = x[best * plane + j];
            src[t * plane + j] = best as u32;
        }
    }
    (out, src)
}

pub(crate) fn pool_backward<S: Scalar>(plane: usize, src: &[u32], dout: &[S], dx: &mut [S]) {
    for (i, (&s, &d)) in src.iter().zip(dout).enumerate() {
        let j = i % plane;
        dx[s as usize * plane + j] += d;
    }
}

#[inline]
pub(crate) fn sigmoid<S: Scalar>(x: S) -> S {
    if x >= S::zero() {
        S::one() / (S::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (S::one() + e)
    }
}

pub(crate) fn softmax<S: Scalar>(logits: &[S; 3]) -> [S; 3] {
    let m = logits[0].max(logits[1]).max(logits[2]);
    let e = logits.map(|z| (z - m).exp());
    let s = e[0] + e[1] + e[2];
    e.map(|v| v / s)
}

/// `-ln softmax(logits)[label]`, computed stably.
pub(crate) fn cross_entropy<S: Scalar>(logits: &[S; 3], label: usize) -> S {
    let m = logits[0].max(logits[1]).max(logits[2]);
    let lse = logits.iter().map(|&z| (z - m).exp()).sum::<S>().ln() + m;
    lse - logits[label]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn conv_same_padding_over_time() {
        // 3 timesteps, width 1, one channel; kernel [1, 2, 3] over time
        let g = ConvGeom {
            steps: 3,
            w_in: 1,
            c_in: 1,
            kt: 3,
            kf: 1,
            sf: 1,
            c_out: 1,
            w_out: 1,
        };
        let x = [1.0, 10.0, 100.0];
        let out = conv_forward(&g, &x, &[1.0, 2.0, 3.0], &[0.5]);
        // t0: 2*1 + 3*10; t1: 1 + 20 + 300; t2: 10 + 200
        assert_eq!(out, vec![32.5, 321.5, 210.5]);
    }

    #[test]
    fn conv_strided_features() {
        let g = ConvGeom {
            steps: 1,
            w_in: 4,
            c_in: 1,
            kt: 1,
            kf: 2,
            sf: 2,
            c_out: 1,
            w_out: 2,
        };
        let out = conv_forward(&g, &[1.0, 2.0, 3.0, 4.0], &[1.0, -1.0], &[0.0]);
        assert_eq!(out, vec![-1.0, -1.0]);
    }

    #[test]
    fn pool_routes_gradient_to_argmax() {
        let x = [1.0, 5.0, 2.0, 0.0];
        let (out, src) = pool_forward(4, 1, 1, 3, &x);
        assert_eq!(out, vec![5.0, 5.0, 5.0, 2.0]);
        let mut dx = vec![0.0; 4];
        pool_backward(1, &src, &[1.0, 1.0, 1.0, 1.0], &mut dx);
        assert_eq!(dx, vec![0.0, 3.0, 1.0, 0.0]);
    }

    #[test]
    fn softmax_and_cross_entropy() {
        let p = softmax(&[0.0f64, 0.0, 0.0]);
        assert!((p[0] - 1.0 / 3.0).abs() < 1e-15);
        assert!((cross_entropy(&[0.0f64, 0.0, 0.0], 2) - 3f64.ln()).abs() < 1e-15);
        let big = softmax(&[1000.0f64, 0.0, -1000.0]);
        assert_eq!(big[0], 1.0);
        assert!(cross_entropy(&[1000.0f64, 0.0, -1000.0], 2).is_finite());
    }

    #[test]
    fn sigmoid_is_stable() {
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert!(sigmoid(-800.0f64) >= 0.0);
        assert_eq!(sigmoid(800.0f64), 1.0);
    }
}
