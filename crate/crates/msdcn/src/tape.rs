//! Tape-based reverse-mode differentiation over whole-array operations.
//!
//! A forward pass records one node per operation in creation order; the
//! tape is therefore already topologically sorted and backward is a single
//! reverse sweep. Gradients for shared inputs accumulate additively. A
//! tape can be differentiated once; a second `backward` call is an error.

use crate::error::{Error, Result};
use crate::grid::Grid3;
use crate::kernels;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ValueId(usize);

enum Op<S: Scalar> {
    Leaf,
    Conv {
        x: ValueId,
        kernel: ValueId,
        bias: ValueId,
        kernel_size: usize,
        dilation: usize,
        pad_left: usize,
    },
    BatchNorm {
        x: ValueId,
        gamma: ValueId,
        beta: ValueId,
        x_hat: Grid3<S>,
        inv_std: Vec<S>,
    },
    Relu {
        x: ValueId,
    },
    Fuse {
        hs: Vec<ValueId>,
        w: ValueId,
        n_cols: usize,
        cols: Vec<usize>,
    },
    ChannelAffine {
        x: ValueId,
        w: ValueId,
        b: ValueId,
    },
    Add {
        a: ValueId,
        b: ValueId,
    },
    Mul {
        a: ValueId,
        b: ValueId,
    },
}

struct Node<S: Scalar> {
    op: Op<S>,
    val: Grid3<S>,
}

/// Gradients produced by one backward sweep, indexed by [`ValueId`].
pub struct Gradients<S: Scalar> {
    grads: Vec<Option<Grid3<S>>>,
}

impl<S: Scalar> Gradients<S> {
    /// Gradient for a value, or `None` if the loss does not depend on it.
    pub fn get(&self, id: ValueId) -> Option<&Grid3<S>> {
        self.grads[id.0].as_ref()
    }

    /// Gradient data for a leaf, zeros if unreached.
    pub fn take_or_zeros(&mut self, id: ValueId, len: usize) -> Vec<S> {
        match self.grads[id.0].take() {
            Some(g) => g.into_vec(),
            None => vec![S::zero(); len],
        }
    }
}

pub struct Tape<S: Scalar> {
    nodes: Vec<Node<S>>,
    consumed: bool,
}

impl<S: Scalar> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            consumed: false,
        }
    }

    fn push(&mut self, op: Op<S>, val: Grid3<S>) -> ValueId {
        self.nodes.push(Node { op, val });
        ValueId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: ValueId) -> &Grid3<S> {
        &self.nodes[id.0].val
    }

    pub fn leaf(&mut self, val: Grid3<S>) -> ValueId {
        self.push(Op::Leaf, val)
    }

    /// Leaf holding a flat parameter array viewed as `(1, c, t)`.
    pub fn leaf_slice(&mut self, data: &[S], c: usize, t: usize) -> Result<ValueId> {
        Ok(self.leaf(Grid3::from_vec(1, c, t, data.to_vec())?))
    }

    pub fn conv(
        &mut self,
        x: ValueId,
        kernel: ValueId,
        bias: ValueId,
        dilation: usize,
        pad_left: usize,
        pad_right: usize,
    ) -> Result<ValueId> {
        let kernel_size = self.value(kernel).time_len();
        let y = kernels::dilated_depthwise_conv1d(
            self.value(x),
            self.value(kernel).data(),
            kernel_size,
            self.value(bias).data(),
            dilation,
            pad_left,
            pad_right,
        )?;
        Ok(self.push(
            Op::Conv {
                x,
                kernel,
                bias,
                kernel_size,
                dilation,
                pad_left,
            },
            y,
        ))
    }

    /// Train-mode batch norm; returns the node plus batch statistics so the
    /// caller can update running stats.
    pub fn batchnorm_train(
        &mut self,
        x: ValueId,
        gamma: ValueId,
        beta: ValueId,
        eps: S,
    ) -> Result<(ValueId, Vec<S>, Vec<S>)> {
        let fwd = kernels::bn_train_forward(
            self.value(x),
            self.value(gamma).data(),
            self.value(beta).data(),
            eps,
        )?;
        let id = self.push(
            Op::BatchNorm {
                x,
                gamma,
                beta,
                x_hat: fwd.x_hat,
                inv_std: fwd.inv_std,
            },
            fwd.y,
        );
        Ok((id, fwd.batch_mean, fwd.batch_var))
    }

    pub fn relu(&mut self, x: ValueId) -> ValueId {
        let y = kernels::relu(self.value(x));
        self.push(Op::Relu { x }, y)
    }

    pub fn fuse(
        &mut self,
        hs: &[ValueId],
        w: ValueId,
        n_cols: usize,
        cols: &[usize],
    ) -> Result<ValueId> {
        let views: Vec<&Grid3<S>> = hs.iter().map(|&h| self.value(h)).collect();
        let y = kernels::fuse_cols(&views, self.value(w).data(), n_cols, cols)?;
        Ok(self.push(
            Op::Fuse {
                hs: hs.to_vec(),
                w,
                n_cols,
                cols: cols.to_vec(),
            },
            y,
        ))
    }

    pub fn channel_affine(&mut self, x: ValueId, w: ValueId, b: ValueId) -> Result<ValueId> {
        let out_len = self.value(b).channels();
        let y = kernels::channel_affine(
            self.value(x),
            self.value(w).data(),
            self.value(b).data(),
            out_len,
        )?;
        Ok(self.push(Op::ChannelAffine { x, w, b }, y))
    }

    pub fn add(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let y = self.value(a).add(self.value(b))?;
        Ok(self.push(Op::Add { a, b }, y))
    }

    pub fn mul(&mut self, a: ValueId, b: ValueId) -> Result<ValueId> {
        let av = self.value(a);
        let bv = self.value(b);
        if !av.same_shape(bv) {
            return Err(Error::ShapeMismatch("mul: shapes differ".into()));
        }
        let (bs, c, t) = av.shape();
        let data = av
            .data()
            .iter()
            .zip(bv.data())
            .map(|(&x, &y)| x * y)
            .collect();
        let y = Grid3::from_vec(bs, c, t, data)?;
        Ok(self.push(Op::Mul { a, b }, y))
    }

    /// Reverse sweep seeded with `d loss / d root`.
    pub fn backward(&mut self, root: ValueId, seed: Grid3<S>) -> Result<Gradients<S>> {
        if self.consumed {
            return Err(Error::TapeConsumed);
        }
        self.consumed = true;
        if !seed.same_shape(&self.nodes[root.0].val) {
            return Err(Error::ShapeMismatch("backward seed shape".into()));
        }

        let mut grads: Vec<Option<Grid3<S>>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(seed);

        for i in (0..self.nodes.len()).rev() {
            let dy = match grads[i].take() {
                Some(g) => g,
                None => continue,
            };
            match &self.nodes[i].op {
                Op::Leaf => {
                    grads[i] = Some(dy); // keep leaf gradient for the caller
                    continue;
                }
                Op::Conv {
                    x,
                    kernel,
                    bias,
                    kernel_size,
                    dilation,
                    pad_left,
                } => {
                    let (x, kernel, bias) = (*x, *kernel, *bias);
                    let (k, d, pl) = (*kernel_size, *dilation, *pad_left);
                    let xv = &self.nodes[x.0].val;
                    let kv = &self.nodes[kernel.0].val;
                    let (b, c, t) = xv.shape();
                    let mut dx = Grid3::zeros(b, c, t);
                    let mut dk = Grid3::zeros(1, c, k);
                    let mut db = Grid3::zeros(1, c, 1);
                    for bi in 0..b {
                        for ci in 0..c {
                            let x_lane = xv.lane(bi, ci);
                            let dy_lane = dy.lane(bi, ci);
                            let k_lane = kv.lane(0, ci);
                            let dx_lane = dx.lane_mut(bi, ci);
                            let mut bias_acc = S::zero();
                            let mut k_acc = vec![S::zero(); k];
                            for ti in 0..t {
                                let g = dy_lane[ti];
                                bias_acc = bias_acc + g;
                                let base = ti as isize - pl as isize;
                                for j in 0..k {
                                    let src = base + (j * d) as isize;
                                    if src >= 0 && (src as usize) < t {
                                        let s = src as usize;
                                        dx_lane[s] = dx_lane[s] + k_lane[j] * g;
                                        k_acc[j] = k_acc[j] + x_lane[s] * g;
                                    }
                                }
                            }
                            for j in 0..k {
                                let cur = dk.get(0, ci, j);
                                dk.set(0, ci, j, cur + k_acc[j]);
                            }
                            let cur = db.get(0, ci, 0);
                            db.set(0, ci, 0, cur + bias_acc);
                        }
                    }
                    accumulate(&mut grads, x, dx)?;
                    accumulate(&mut grads, kernel, dk)?;
                    accumulate(&mut grads, bias, db)?;
                }
                Op::BatchNorm {
                    x,
                    gamma,
                    beta,
                    x_hat,
                    inv_std,
                } => {
                    let (x, gamma, beta) = (*x, *gamma, *beta);
                    let gv = &self.nodes[gamma.0].val;
                    let (b, c, t) = x_hat.shape();
                    let n = S::from_f64((b * t) as f64);
                    let mut dx = Grid3::zeros(b, c, t);
                    let mut dgamma = Grid3::zeros(1, c, 1);
                    let mut dbeta = Grid3::zeros(1, c, 1);
                    for ci in 0..c {
                        let mut sum_dy = S::zero();
                        let mut sum_dy_xhat = S::zero();
                        for bi in 0..b {
                            let dyl = dy.lane(bi, ci);
                            let xh = x_hat.lane(bi, ci);
                            for ti in 0..t {
                                sum_dy = sum_dy + dyl[ti];
                                sum_dy_xhat = sum_dy_xhat + dyl[ti] * xh[ti];
                            }
                        }
                        dgamma.set(0, ci, 0, sum_dy_xhat);
                        dbeta.set(0, ci, 0, sum_dy);
                        let scale = gv.get(0, ci, 0) * inv_std[ci] / n;
                        for bi in 0..b {
                            let dyl = dy.lane(bi, ci);
                            let xh = x_hat.lane(bi, ci);
                            let dxl = dx.lane_mut(bi, ci);
                            for ti in 0..t {
                                dxl[ti] = dxl[ti]
                                    + scale * (n * dyl[ti] - sum_dy - xh[ti] * sum_dy_xhat);
                            }
                        }
                    }
                    accumulate(&mut grads, x, dx)?;
                    accumulate(&mut grads, gamma, dgamma)?;
                    accumulate(&mut grads, beta, dbeta)?;
                }
                Op::Relu { x } => {
                    let x = *x;
                    let xv = &self.nodes[x.0].val;
                    let (b, c, t) = xv.shape();
                    let data = xv
                        .data()
                        .iter()
                        .zip(dy.data())
                        .map(|(&xi, &g)| if xi > S::zero() { g } else { S::zero() })
                        .collect();
                    accumulate(&mut grads, x, Grid3::from_vec(b, c, t, data)?)?;
                }
                Op::Fuse {
                    hs,
                    w,
                    n_cols,
                    cols,
                } => {
                    let (hs, w, n_cols, cols) = (hs.clone(), *w, *n_cols, cols.clone());
                    let wv = &self.nodes[w.0].val;
                    let (b, c, t) = dy.shape();
                    let mut dw = Grid3::zeros(1, c, n_cols);
                    for (hi, (&h, &col)) in hs.iter().zip(&cols).enumerate() {
                        let _ = hi;
                        let hv = &self.nodes[h.0].val;
                        let mut dh = Grid3::zeros(b, c, t);
                        for bi in 0..b {
                            for ci in 0..c {
                                let wc = wv.get(0, ci, col);
                                let dyl = dy.lane(bi, ci);
                                let hl = hv.lane(bi, ci);
                                let dhl = dh.lane_mut(bi, ci);
                                let mut acc = S::zero();
                                for ti in 0..t {
                                    dhl[ti] = dhl[ti] + dyl[ti] * wc;
                                    acc = acc + dyl[ti] * hl[ti];
                                }
                                let cur = dw.get(0, ci, col);
                                dw.set(0, ci, col, cur + acc);
                            }
                        }
                        accumulate(&mut grads, h, dh)?;
                    }
                    accumulate(&mut grads, w, dw)?;
                }
                Op::ChannelAffine { x, w, b } => {
                    let (x, w, b) = (*x, *w, *b);
                    let xv = &self.nodes[x.0].val;
                    let wv = &self.nodes[w.0].val;
                    let (bs, c, t) = xv.shape();
                    let l = dy.time_len();
                    let mut dx = Grid3::zeros(bs, c, t);
                    let mut dw = Grid3::zeros(1, l, t);
                    let mut db = Grid3::zeros(1, l, 1);
                    for bi in 0..bs {
                        for ci in 0..c {
                            let x_lane = xv.lane(bi, ci);
                            let dy_lane = dy.lane(bi, ci);
                            let dx_lane = dx.lane_mut(bi, ci);
                            for li in 0..l {
                                let g = dy_lane[li];
                                let w_row = wv.lane(0, li);
                                let dw_row = dw.lane_mut(0, li);
                                for ti in 0..t {
                                    dx_lane[ti] = dx_lane[ti] + w_row[ti] * g;
                                    dw_row[ti] = dw_row[ti] + x_lane[ti] * g;
                                }
                                let cur = db.get(0, li, 0);
                                db.set(0, li, 0, cur + g);
                            }
                        }
                    }
                    accumulate(&mut grads, x, dx)?;
                    accumulate(&mut grads, w, dw)?;
                    accumulate(&mut grads, b, db)?;
                }
                Op::Add { a, b } => {
                    let (a, b) = (*a, *b);
                    accumulate(&mut grads, a, dy.clone())?;
                    accumulate(&mut grads, b, dy)?;
                }
                Op::Mul { a, b } => {
                    let (a, b) = (*a, *b);
                    let av = self.nodes[a.0].val.clone();
                    let bv = &self.nodes[b.0].val;
                    let (bs, c, t) = av.shape();
                    let da: Vec<S> = dy
                        .data()
                        .iter()
                        .zip(bv.data())
                        .map(|(&g, &v)| g * v)
                        .collect();
                    let db: Vec<S> = dy
                        .data()
                        .iter()
                        .zip(av.data())
                        .map(|(&g, &v)| g * v)
                        .collect();
                    accumulate(&mut grads, a, Grid3::from_vec(bs, c, t, da)?)?;
                    accumulate(&mut grads, b, Grid3::from_vec(bs, c, t, db)?)?;
                }
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate<S: Scalar>(
    grads: &mut [Option<Grid3<S>>],
    id: ValueId,
    delta: Grid3<S>,
) -> Result<()> {
    match &mut grads[id.0] {
        Some(g) => {
            *g = g.add(&delta)?;
        }
        slot @ None => {
            *slot = Some(delta);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_grid(v: f64) -> Grid3<f64> {
        Grid3::from_vec(1, 1, 1, vec![v]).unwrap()
    }

    #[test]
    fn relu_of_product_positive_branch() {
        // loss = relu(w*x) at w=2, x=3 -> dloss/dw = 3
        let mut tape = Tape::new();
        let w = tape.leaf(scalar_grid(2.0));
        let x = tape.leaf(scalar_grid(3.0));
        let p = tape.mul(w, x).unwrap();
        let y = tape.relu(p);
        let grads = tape.backward(y, scalar_grid(1.0)).unwrap();
        assert_eq!(grads.get(w).unwrap().data(), &[3.0]);
        assert_eq!(grads.get(x).unwrap().data(), &[2.0]);
    }

    #[test]
    fn relu_of_product_clamped_branch() {
        let mut tape = Tape::new();
        let w = tape.leaf(scalar_grid(-2.0));
        let x = tape.leaf(scalar_grid(3.0));
        let p = tape.mul(w, x).unwrap();
        let y = tape.relu(p);
        let grads = tape.backward(y, scalar_grid(1.0)).unwrap();
        // unreached or zero both mean zero gradient
        let g = grads.get(w).map(|g| g.data()[0]).unwrap_or(0.0);
        assert_eq!(g, 0.0);
    }

    #[test]
    fn shared_leaf_accumulates() {
        // loss = w*x + w*x -> dloss/dw = 2x
        let mut tape = Tape::new();
        let w = tape.leaf(scalar_grid(1.5));
        let x = tape.leaf(scalar_grid(4.0));
        let p1 = tape.mul(w, x).unwrap();
        let p2 = tape.mul(w, x).unwrap();
        let y = tape.add(p1, p2).unwrap();
        let grads = tape.backward(y, scalar_grid(1.0)).unwrap();
        assert_eq!(grads.get(w).unwrap().data(), &[8.0]);
    }

    #[test]
    fn backward_twice_is_an_error() {
        let mut tape = Tape::new();
        let w = tape.leaf(scalar_grid(1.0));
        let y = tape.relu(w);
        tape.backward(y, scalar_grid(1.0)).unwrap();
        assert!(matches!(
            tape.backward(y, scalar_grid(1.0)),
            Err(Error::TapeConsumed)
        ));
    }

    /// Central finite differences for a scalar-output function of one
    /// leaf array; independent oracle for all primitive backward rules.
    fn finite_diff(f: &dyn Fn(&[f64]) -> f64, at: &[f64], step: f64) -> Vec<f64> {
        let mut g = Vec::with_capacity(at.len());
        for i in 0..at.len() {
            let mut hi = at.to_vec();
            let mut lo = at.to_vec();
            hi[i] += step;
            lo[i] -= step;
            g.push((f(&hi) - f(&lo)) / (2.0 * step));
        }
        g
    }

    fn assert_close(analytic: &[f64], numeric: &[f64], tol: f64) {
        for (a, n) in analytic.iter().zip(numeric) {
            let denom = n.abs().max(a.abs()).max(1.0);
            assert!(
                ((a - n) / denom).abs() < tol,
                "analytic {a} vs numeric {n}"
            );
        }
    }

    #[test]
    fn conv_gradients_match_finite_differences() {
        let x0 = [0.3, -0.7, 1.2, 0.5, -0.1, 0.9];
        let k0 = [0.4, -0.2, 0.6];
        let b0 = [0.1];
        let (d, pl, pr) = (2, 2, 2);

        let loss = |x: &[f64], k: &[f64], b: &[f64]| -> f64 {
            let xg = Grid3::from_vec(1, 1, 6, x.to_vec()).unwrap();
            let y = kernels::dilated_depthwise_conv1d(&xg, k, 3, b, d, pl, pr).unwrap();
            // squared sum keeps the test sensitive to every output
            y.data().iter().map(|v| v * v * 0.5).sum()
        };

        let mut tape = Tape::new();
        let x = tape.leaf(Grid3::from_vec(1, 1, 6, x0.to_vec()).unwrap());
        let k = tape.leaf_slice(&k0, 1, 3).unwrap();
        let b = tape.leaf_slice(&b0, 1, 1).unwrap();
        let y = tape.conv(x, k, b, d, pl, pr).unwrap();
        let seed = tape.value(y).clone(); // d(0.5*sum y^2)/dy = y
        let grads = tape.backward(y, seed).unwrap();

        let fd_x = finite_diff(&|v| loss(v, &k0, &b0), &x0, 1e-6);
        let fd_k = finite_diff(&|v| loss(&x0, v, &b0), &k0, 1e-6);
        let fd_b = finite_diff(&|v| loss(&x0, &k0, v), &b0, 1e-6);
        assert_close(grads.get(x).unwrap().data(), &fd_x, 1e-7);
        assert_close(grads.get(k).unwrap().data(), &fd_k, 1e-7);
        assert_close(grads.get(b).unwrap().data(), &fd_b, 1e-7);
    }

    #[test]
    fn batchnorm_gradients_match_finite_differences() {
        let x0 = [0.3, -0.7, 1.2, 0.5];
        let g0 = [1.3];
        let b0 = [-0.2];
        let eps = 1e-5;

        let loss = |x: &[f64], g: &[f64], b: &[f64]| -> f64 {
            let xg = Grid3::from_vec(2, 1, 2, x.to_vec()).unwrap();
            let f = kernels::bn_train_forward(&xg, g, b, eps).unwrap();
            f.y.data()
                .iter()
                .enumerate()
                .map(|(i, v)| v * (i as f64 + 1.0))
                .sum()
        };

        let mut tape = Tape::new();
        let x = tape.leaf(Grid3::from_vec(2, 1, 2, x0.to_vec()).unwrap());
        let g = tape.leaf_slice(&g0, 1, 1).unwrap();
        let b = tape.leaf_slice(&b0, 1, 1).unwrap();
        let (y, _, _) = tape.batchnorm_train(x, g, b, eps).unwrap();
        let seed = Grid3::from_vec(2, 1, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let grads = tape.backward(y, seed).unwrap();

        assert_close(
            grads.get(x).unwrap().data(),
            &finite_diff(&|v| loss(v, &g0, &b0), &x0, 1e-6),
            1e-6,
        );
        assert_close(
            grads.get(g).unwrap().data(),
            &finite_diff(&|v| loss(&x0, v, &b0), &g0, 1e-6),
            1e-6,
        );
        assert_close(
            grads.get(b).unwrap().data(),
            &finite_diff(&|v| loss(&x0, &g0, v), &b0, 1e-6),
            1e-6,
        );
    }

    #[test]
    fn channel_affine_gradients_match_finite_differences() {
        let x0 = [0.3, -0.7, 1.2, 0.5, 0.8, -0.4]; // (1, 2, 3)
        let w0 = [0.4, -0.2, 0.6, 0.1, 0.9, -0.5]; // L=2, T=3
        let b0 = [0.2, -0.3];

        let loss = |x: &[f64], w: &[f64], b: &[f64]| -> f64 {
            let xg = Grid3::from_vec(1, 2, 3, x.to_vec()).unwrap();
            let y = kernels::channel_affine(&xg, w, b, 2).unwrap();
            y.data().iter().map(|v| v * v * 0.5).sum()
        };

        let mut tape = Tape::new();
        let x = tape.leaf(Grid3::from_vec(1, 2, 3, x0.to_vec()).unwrap());
        let w = tape.leaf_slice(&w0, 2, 3).unwrap();
        let b = tape.leaf_slice(&b0, 2, 1).unwrap();
        let y = tape.channel_affine(x, w, b).unwrap();
        let seed = tape.value(y).clone();
        let grads = tape.backward(y, seed).unwrap();

        assert_close(
            grads.get(x).unwrap().data(),
            &finite_diff(&|v| loss(v, &w0, &b0), &x0, 1e-6),
            1e-7,
        );
        assert_close(
            grads.get(w).unwrap().data(),
            &finite_diff(&|v| loss(&x0, v, &b0), &w0, 1e-6),
            1e-7,
        );
        assert_close(
            grads.get(b).unwrap().data(),
            &finite_diff(&|v| loss(&x0, &w0, v), &b0, 1e-6),
            1e-7,
        );
    }

    #[test]
    fn fuse_gradients_match_finite_differences() {
        let h1 = [0.3, -0.7, 1.2, 0.5];
        let h2 = [0.8, -0.4, 0.2, -0.9];
        let w0 = [0.25, 0.75, -0.5, 0.1]; // C=2, n_cols=2

        let loss = |a: &[f64], b: &[f64], w: &[f64]| -> f64 {
            let ha = Grid3::from_vec(1, 2, 2, a.to_vec()).unwrap();
            let hb = Grid3::from_vec(1, 2, 2, b.to_vec()).unwrap();
            let m = kernels::fuse_cols(&[&ha, &hb], w, 2, &[0, 1]).unwrap();
            m.data().iter().map(|v| v * v * 0.5).sum()
        };

        let mut tape = Tape::new();
        let a = tape.leaf(Grid3::from_vec(1, 2, 2, h1.to_vec()).unwrap());
        let b = tape.leaf(Grid3::from_vec(1, 2, 2, h2.to_vec()).unwrap());
        let w = tape.leaf_slice(&w0, 2, 2).unwrap();
        let m = tape.fuse(&[a, b], w, 2, &[0, 1]).unwrap();
        let seed = tape.value(m).clone();
        let grads = tape.backward(m, seed).unwrap();

        assert_close(
            grads.get(a).unwrap().data(),
            &finite_diff(&|v| loss(v, &h2, &w0), &h1, 1e-6),
            1e-7,
        );
        assert_close(
            grads.get(b).unwrap().data(),
            &finite_diff(&|v| loss(&h1, v, &w0), &h2, 1e-6),
            1e-7,
        );
        assert_close(
            grads.get(w).unwrap().data(),
            &finite_diff(&|v| loss(&h1, &h2, v), &w0, 1e-6),
            1e-7,
        );
    }
}
