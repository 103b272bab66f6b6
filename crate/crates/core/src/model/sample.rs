//! Per-coordinate reverse-mode evaluation, generic over the scalar type so
//! the same code yields gradients (`f64`) and Hessian-vector products
//! (`Dual`, forward-over-reverse).

use rayon::prelude::*;

use super::mapping::Realized;
use super::{Coords, Dual, InrModel, Scalar};

pub(crate) struct Tape<S> {
    u: Vec<S>,
    z: Vec<Vec<S>>,
    h: Vec<Vec<S>>,
    pub y: S,
}

/// Gradient buffers for the realized mapping, pulled back once per batch.
pub(crate) struct MappingGrad<S> {
    pub da: Vec<S>,
    pub dc: Vec<S>,
}

impl InrModel {
    pub(crate) fn realize_as<S: Scalar>(&self, theta: &[S]) -> Realized<S> {
        if self.mapping.trainable {
            self.mapping.realize(&theta[..self.mapping.param_count()])
        } else {
            let p: Vec<S> = self.frozen_mapping.iter().map(|&v| S::from_f64(v)).collect();
            self.mapping.realize(&p)
        }
    }

    pub(crate) fn mapping_grad<S: Scalar>(&self) -> MappingGrad<S> {
        let t = self.mapping.feature_count();
        MappingGrad {
            da: vec![S::zero(); t * self.input_dim()],
            dc: vec![S::zero(); t],
        }
    }

    pub(crate) fn finish_mapping_grad<S: Scalar>(&self, mg: &MappingGrad<S>, grad: &mut [S]) {
        if self.mapping.trainable {
            let mp = self.mapping.param_count();
            self.mapping.pullback(&mg.da, &mg.dc, &mut grad[..mp]);
        }
    }

    pub(crate) fn sample_tape<S: Scalar>(&self, theta: &[S], map: &Realized<S>, r: &[f64]) -> Tape<S> {
        let d = r.len();
        let t = map.c.len();
        let mut u = Vec::with_capacity(t);
        let mut z0 = Vec::with_capacity(t);
        for k in 0..t {
            let mut acc = map.c[k];
            for (a, &x) in map.a[k * d..(k + 1) * d].iter().zip(r) {
                acc += a.scale(x);
            }
            let uk = acc.scale(map.scale);
            u.push(uk);
            z0.push(uk.sin());
        }
        let hidden = self.layers.len() - 1;
        let mut z = Vec::with_capacity(hidden + 1);
        let mut h = Vec::with_capacity(hidden);
        z.push(z0);
        for (layer, slot) in self.layers[..hidden].iter().zip(&self.slots) {
            let prev = z.last().expect("input features");
            let mut hl = Vec::with_capacity(slot.fan_out);
            let mut zl = Vec::with_capacity(slot.fan_out);
            for o in 0..slot.fan_out {
                let w = &theta[slot.weight + o * slot.fan_in..slot.weight + (o + 1) * slot.fan_in];
                let mut acc = theta[slot.bias + o];
                for (wi, zi) in w.iter().zip(prev) {
                    acc += *wi * *zi;
                }
                hl.push(acc);
                zl.push(layer.activation.apply(acc));
            }
            h.push(hl);
            z.push(zl);
        }
        let out = &self.slots[hidden];
        let last = z.last().expect("features");
        let mut y = theta[out.bias];
        for (wi, zi) in theta[out.weight..out.weight + out.fan_in].iter().zip(last) {
            y += *wi * *zi;
        }
        Tape { u, z, h, y }
    }

    /// Adds `seed · ∇θ f(r)` to `grad` (mapping contributions go to `mg`).
    pub(crate) fn sample_backprop<S: Scalar>(
        &self,
        theta: &[S],
        map: &Realized<S>,
        r: &[f64],
        tape: &Tape<S>,
        seed: S,
        grad: &mut [S],
        mg: &mut MappingGrad<S>,
    ) {
        let hidden = self.layers.len() - 1;
        let out = &self.slots[hidden];
        let last = &tape.z[hidden];
        let mut dz: Vec<S> = Vec::with_capacity(out.fan_in);
        for (i, zi) in last.iter().enumerate() {
            grad[out.weight + i] += seed * *zi;
            dz.push(seed * theta[out.weight + i]);
        }
        grad[out.bias] += seed;

        for l in (0..hidden).rev() {
            let slot = &self.slots[l];
            let act = &self.layers[l].activation;
            let prev = &tape.z[l];
            let mut dprev = vec![S::zero(); slot.fan_in];
            for o in 0..slot.fan_out {
                let dh = dz[o] * act.derivative(tape.h[l][o]);
                grad[slot.bias + o] += dh;
                let base = slot.weight + o * slot.fan_in;
                for i in 0..slot.fan_in {
                    grad[base + i] += dh * prev[i];
                    dprev[i] += dh * theta[base + i];
                }
            }
            dz = dprev;
        }

        if self.mapping.trainable {
            let d = r.len();
            for (k, (dzk, uk)) in dz.iter().zip(&tape.u).enumerate() {
                let g = (*dzk * uk.cos()).scale(map.scale);
                mg.dc[k] += g;
                for (a, &x) in mg.da[k * d..(k + 1) * d].iter_mut().zip(r) {
                    *a += g.scale(x);
                }
            }
        }
    }

    pub(crate) fn sample_gradient(&self, theta: &[f64], r: &[f64]) -> Vec<f64> {
        let map = self.realize_as(theta);
        let mut grad = vec![0.0; theta.len()];
        let mut mg = self.mapping_grad();
        let tape = self.sample_tape(theta, &map, r);
        self.sample_backprop(theta, &map, r, &tape, 1.0, &mut grad, &mut mg);
        self.finish_mapping_grad(&mg, &mut grad);
        grad
    }

    pub(crate) fn jacobian_into(&self, coords: &Coords, batch_size: usize, out: &mut [f64]) {
        let theta = self.theta.values();
        let p = theta.len();
        let map = self.realize_as(theta);
        out.par_chunks_mut(p * batch_size)
            .enumerate()
            .for_each(|(b, block)| {
                for (k, row) in block.chunks_mut(p).enumerate() {
                    let r = coords.point(b * batch_size + k);
                    let mut mg = self.mapping_grad();
                    let tape = self.sample_tape(theta, &map, r);
                    self.sample_backprop(theta, &map, r, &tape, 1.0, row, &mut mg);
                    self.finish_mapping_grad(&mg, row);
                }
            });
    }

    /// Gradient of the mean squared error over `coords` and its Hessian
    /// applied to `v`, both at `theta`.
    pub fn mse_gradient_hvp(&self, theta: &[f64], v: &[f64], coords: &Coords, targets: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let td: Vec<Dual> = theta.iter().zip(v).map(|(&a, &b)| Dual::new(a, b)).collect();
        let map = self.realize_as(&td);
        let mut grad = vec![Dual::default(); theta.len()];
        let mut mg = self.mapping_grad();
        let w = 2.0 / coords.len() as f64;
        for (i, &target) in targets.iter().enumerate() {
            let r = coords.point(i);
            let tape = self.sample_tape(&td, &map, r);
            let seed = (tape.y - Dual::from_f64(target)).scale(w);
            self.sample_backprop(&td, &map, r, &tape, seed, &mut grad, &mut mg);
        }
        self.finish_mapping_grad(&mg, &mut grad);
        (grad.iter().map(|g| g.v).collect(), grad.iter().map(|g| g.d).collect())
    }
}
