//! Whole-batch evaluation on `f64` with matrix products for the dense layers.

use super::{Coords, InrModel};
use crate::error::{Error, Result};
use crate::numkit::gemm;

pub(crate) struct BatchTape {
    u: Vec<f64>,
    z: Vec<Vec<f64>>,
    h: Vec<Vec<f64>>,
    pub output: Vec<f64>,
}

impl InrModel {
    pub(crate) fn batch_forward(&self, theta: &[f64], coords: &Coords, keep: bool) -> BatchTape {
        let n = coords.len();
        let d = coords.dim();
        let map = self.realize_as(theta);
        let t = map.c.len();
        let mut u = vec![0.0; n * t];
        gemm(n, d, t, map.scale, (coords.data(), d, 1), (&map.a, 1, d), 0.0, (&mut u, t, 1));
        for row in u.chunks_mut(t) {
            for (x, c) in row.iter_mut().zip(&map.c) {
                *x += map.scale * c;
            }
        }
        let z0: Vec<f64> = u.iter().map(|x| x.sin()).collect();

        let hidden = self.layers.len() - 1;
        let mut z = vec![z0];
        let mut h = Vec::with_capacity(hidden);
        for (layer, slot) in self.layers[..hidden].iter().zip(&self.slots) {
            let prev = z.last().expect("features");
            let mut hl = vec![0.0; n * slot.fan_out];
            gemm(
                n,
                slot.fan_in,
                slot.fan_out,
                1.0,
                (prev, slot.fan_in, 1),
                (&theta[slot.weight..], 1, slot.fan_in),
                0.0,
                (&mut hl, slot.fan_out, 1),
            );
            let bias = &theta[slot.bias..slot.bias + slot.fan_out];
            for row in hl.chunks_mut(slot.fan_out) {
                for (x, b) in row.iter_mut().zip(bias) {
                    *x += b;
                }
            }
            let zl: Vec<f64> = hl.iter().map(|&x| layer.activation.apply(x)).collect();
            if keep {
                h.push(hl);
            } else {
                z.clear();
            }
            z.push(zl);
        }
        let out = &self.slots[hidden];
        let w = &theta[out.weight..out.weight + out.fan_in];
        let b = theta[out.bias];
        let last = z.last().expect("features");
        let output = last
            .chunks(out.fan_in)
            .map(|row| b + row.iter().zip(w).map(|(x, y)| x * y).sum::<f64>())
            .collect();
        BatchTape {
            u: if keep { u } else { Vec::new() },
            z,
            h,
            output,
        }
    }

    /// ∇θ Σ_n e_n f(r_n) from a tape recorded with `keep = true`.
    pub(crate) fn batch_backward(&self, theta: &[f64], coords: &Coords, tape: &BatchTape, e: &[f64]) -> Vec<f64> {
        let n = coords.len();
        let hidden = self.layers.len() - 1;
        let mut grad = vec![0.0; theta.len()];
        let out = &self.slots[hidden];
        let last = &tape.z[hidden];
        {
            let gw = &mut grad[out.weight..out.weight + out.fan_in];
            for (row, &en) in last.chunks(out.fan_in).zip(e) {
                for (g, x) in gw.iter_mut().zip(row) {
                    *g += en * x;
                }
            }
        }
        grad[out.bias] = e.iter().sum();
        let w_out = &theta[out.weight..out.weight + out.fan_in];
        let mut dz = Vec::with_capacity(n * out.fan_in);
        for &en in e {
            dz.extend(w_out.iter().map(|w| en * w));
        }

        for l in (0..hidden).rev() {
            let slot = &self.slots[l];
            let act = &self.layers[l].activation;
            for (g, &hv) in dz.iter_mut().zip(&tape.h[l]) {
                *g *= act.derivative(hv);
            }
            gemm(
                slot.fan_out,
                n,
                slot.fan_in,
                1.0,
                (&dz, 1, slot.fan_out),
                (&tape.z[l], slot.fan_in, 1),
                0.0,
                (&mut grad[slot.weight..], slot.fan_in, 1),
            );
            let gb = &mut grad[slot.bias..slot.bias + slot.fan_out];
            for row in dz.chunks(slot.fan_out) {
                for (g, x) in gb.iter_mut().zip(row) {
                    *g += x;
                }
            }
            if l == 0 && !self.mapping.trainable {
                return grad;
            }
            let mut dprev = vec![0.0; n * slot.fan_in];
            gemm(
                n,
                slot.fan_out,
                slot.fan_in,
                1.0,
                (&dz, slot.fan_out, 1),
                (&theta[slot.weight..], slot.fan_in, 1),
                0.0,
                (&mut dprev, slot.fan_in, 1),
            );
            dz = dprev;
        }
        if !self.mapping.trainable {
            return grad;
        }

        let map = self.realize_as(theta);
        let t = map.c.len();
        let d = coords.dim();
        for (g, &uv) in dz.iter_mut().zip(&tape.u) {
            *g *= map.scale * uv.cos();
        }
        let mut mg = self.mapping_grad::<f64>();
        gemm(t, n, d, 1.0, (&dz, 1, t), (coords.data(), d, 1), 0.0, (&mut mg.da, d, 1));
        for row in dz.chunks(t) {
            for (c, x) in mg.dc.iter_mut().zip(row) {
                *c += x;
            }
        }
        self.finish_mapping_grad(&mg, &mut grad);
        grad
    }

    /// Mean squared error over `coords` and its gradient with respect to
    /// `theta`.
    pub fn mse_and_gradient(&self, theta: &[f64], coords: &Coords, targets: &[f64]) -> Result<(f64, Vec<f64>)> {
        self.check_coords(coords)?;
        self.check_theta(theta)?;
        if targets.len() != coords.len() || targets.is_empty() {
            return Err(Error::Argument(format!(
                "{} targets for {} coordinates",
                targets.len(),
                coords.len()
            )));
        }
        let tape = self.batch_forward(theta, coords, true);
        let n = targets.len() as f64;
        let mut loss = 0.0;
        let e: Vec<f64> = tape
            .output
            .iter()
            .zip(targets)
            .map(|(y, t)| {
                let r = y - t;
                loss += r * r;
                2.0 * r / n
            })
            .collect();
        let grad = self.batch_backward(theta, coords, &tape, &e);
        Ok((loss / n, grad))
    }
}
