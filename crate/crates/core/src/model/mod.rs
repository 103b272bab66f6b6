//! Coordinate networks: an input mapping followed by a fully connected stack.

mod batch;
mod io;
mod mapping;
mod sample;
mod scalar;

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numkit::{Distribution, Matrix, SeededRng};

pub use io::{load_model, read_model, save_model, write_model};
pub use mapping::{MappingSpec, MappingVariant};
pub use scalar::{Dual, Scalar};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Activation {
    Relu,
    /// `sin(ω₀ h)`.
    Sine { omega0: f64 },
    /// `Σ_k α_k h^k` with `coeffs = [α_0, …, α_K]`.
    Polynomial { coeffs: Vec<f64> },
    Identity,
}

impl Activation {
    pub fn eval(&self, h: f64) -> f64 {
        self.apply(h)
    }

    #[inline]
    pub(crate) fn apply<S: Scalar>(&self, h: S) -> S {
        match self {
            Activation::Relu => {
                if h.value() > 0.0 {
                    h
                } else {
                    S::zero()
                }
            }
            Activation::Sine { omega0 } => h.scale(*omega0).sin(),
            Activation::Polynomial { coeffs } => {
                let mut acc = S::zero();
                for &a in coeffs.iter().rev() {
                    acc = acc * h + S::from_f64(a);
                }
                acc
            }
            Activation::Identity => h,
        }
    }

    /// Derivative; ReLU uses 0 at the kink.
    #[inline]
    pub(crate) fn derivative<S: Scalar>(&self, h: S) -> S {
        match self {
            Activation::Relu => S::from_f64(if h.value() > 0.0 { 1.0 } else { 0.0 }),
            Activation::Sine { omega0 } => h.scale(*omega0).cos().scale(*omega0),
            Activation::Polynomial { coeffs } => {
                let mut acc = S::zero();
                for (k, &a) in coeffs.iter().enumerate().skip(1).rev() {
                    acc = acc * h + S::from_f64(a * k as f64);
                }
                acc
            }
            Activation::Identity => S::from_f64(1.0),
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            Activation::Sine { omega0 } if !(omega0.is_finite() && *omega0 > 0.0) => {
                Err(Error::Config(format!("sine omega0 must be > 0, got {omega0}")))
            }
            Activation::Polynomial { coeffs } if coeffs.is_empty() || coeffs.iter().any(|c| !c.is_finite()) => {
                Err(Error::Config("polynomial activation needs finite coefficients".into()))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayerSpec {
    pub width: usize,
    pub activation: Activation,
}

impl LayerSpec {
    pub fn new(width: usize, activation: Activation) -> Self {
        LayerSpec { width, activation }
    }

    pub fn output() -> Self {
        LayerSpec::new(1, Activation::Identity)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamBlock {
    pub name: String,
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl ParamBlock {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn range(&self) -> std::ops::Range<usize> {
        self.offset..self.offset + self.len()
    }
}

/// Offsets of the named tensors inside a flat parameter vector.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParamLayout {
    blocks: Vec<ParamBlock>,
    len: usize,
}

impl ParamLayout {
    fn from_shapes(shapes: Vec<(String, usize, usize)>) -> Self {
        let mut offset = 0;
        let blocks = shapes
            .into_iter()
            .map(|(name, rows, cols)| {
                let b = ParamBlock {
                    name,
                    offset,
                    rows,
                    cols,
                };
                offset += rows * cols;
                b
            })
            .collect();
        ParamLayout { blocks, len: offset }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn blocks(&self) -> &[ParamBlock] {
        &self.blocks
    }

    pub fn block(&self, name: &str) -> Option<&ParamBlock> {
        self.blocks.iter().find(|b| b.name == name)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ParamVector {
    values: Vec<f64>,
    layout: Arc<ParamLayout>,
}

impl ParamVector {
    pub fn new(values: Vec<f64>, layout: Arc<ParamLayout>) -> Result<Self> {
        if values.len() != layout.len() {
            return Err(Error::Argument(format!(
                "{} values for a layout of {} parameters",
                values.len(),
                layout.len()
            )));
        }
        Ok(ParamVector { values, layout })
    }

    pub fn zeros_like(other: &ParamVector) -> Self {
        ParamVector {
            values: vec![0.0; other.len()],
            layout: other.layout.clone(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn layout(&self) -> &Arc<ParamLayout> {
        &self.layout
    }

    pub fn block(&self, name: &str) -> Option<&[f64]> {
        self.layout.block(name).map(|b| &self.values[b.range()])
    }

    pub fn with_values(&self, values: Vec<f64>) -> Result<Self> {
        ParamVector::new(values, self.layout.clone())
    }

    /// `self + alpha * other`.
    pub fn add_scaled(&self, alpha: f64, other: &ParamVector) -> Result<Self> {
        self.check_layout(other)?;
        let values = self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| a + alpha * b)
            .collect();
        Ok(ParamVector {
            values,
            layout: self.layout.clone(),
        })
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn check_layout(&self, other: &ParamVector) -> Result<()> {
        if Arc::ptr_eq(&self.layout, &other.layout) || self.layout == other.layout {
            Ok(())
        } else {
            Err(Error::Argument("parameter layouts differ".into()))
        }
    }
}

/// A list of `dim`-dimensional points stored contiguously.
#[derive(Clone, Debug, PartialEq)]
pub struct Coords {
    dim: usize,
    data: Vec<f64>,
}

impl Coords {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(Error::Dimension(format!(
                "{} values do not form points of dimension {dim}",
                data.len()
            )));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::Argument("coordinates must be finite".into()));
        }
        Ok(Coords { dim, data })
    }

    pub fn from_points(points: &[Vec<f64>]) -> Result<Self> {
        let dim = points.first().map_or(1, Vec::len);
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::Dimension("points of mixed dimension".into()));
        }
        Coords::new(dim, points.concat())
    }

    /// Row-major `rows × cols` grid on [−1, 1)², point `(y_i, x_j)` with
    /// `x_j = −1 + 2j/cols`. The grid is periodic: one step past the last
    /// sample wraps to the first.
    pub fn grid_2d(rows: usize, cols: usize) -> Self {
        let mut data = Vec::with_capacity(2 * rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(-1.0 + 2.0 * i as f64 / rows as f64);
                data.push(-1.0 + 2.0 * j as f64 / cols as f64);
            }
        }
        Coords { dim: 2, data }
    }

    /// `n` points `i / fs` on the line.
    pub fn line(n: usize, fs: f64) -> Self {
        Coords {
            dim: 1,
            data: (0..n).map(|i| i as f64 / fs).collect(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn select(&self, indices: &[usize]) -> Coords {
        let mut data = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            data.extend_from_slice(self.point(i));
        }
        Coords { dim: self.dim, data }
    }
}

/// Offsets of one dense layer inside theta.
#[derive(Clone, Debug, PartialEq)]
pub(crate) struct LayerSlot {
    pub fan_in: usize,
    pub fan_out: usize,
    pub weight: usize,
    pub bias: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InrModel {
    mapping: MappingSpec,
    layers: Vec<LayerSpec>,
    theta: ParamVector,
    frozen_mapping: Vec<f64>,
    slots: Vec<LayerSlot>,
}

fn layer_shapes(mapping: &MappingSpec, layers: &[LayerSpec]) -> Vec<(String, usize, usize)> {
    let mut shapes = Vec::new();
    if mapping.trainable {
        shapes.extend(mapping.blocks());
    }
    let mut fan_in = mapping.feature_count();
    for (i, layer) in layers.iter().enumerate() {
        shapes.push((format!("layer{i}.weight"), layer.width, fan_in));
        shapes.push((format!("layer{i}.bias"), layer.width, 1));
        fan_in = layer.width;
    }
    shapes
}

fn validate_architecture(mapping: &MappingSpec, layers: &[LayerSpec]) -> Result<()> {
    mapping.validate()?;
    let last = layers
        .last()
        .ok_or_else(|| Error::Config("a model needs at least an output layer".into()))?;
    for (i, layer) in layers.iter().enumerate() {
        if layer.width == 0 {
            return Err(Error::Config(format!("layer {i} has zero width")));
        }
        layer.activation.validate()?;
    }
    if last.width != 1 || last.activation != Activation::Identity {
        return Err(Error::Config("the output layer must be linear with width 1".into()));
    }
    Ok(())
}

/// Declared parameter count of an architecture.
pub fn parameter_count(mapping: &MappingSpec, layers: &[LayerSpec]) -> usize {
    layer_shapes(mapping, layers).iter().map(|(_, r, c)| r * c).sum()
}

fn init_bound(layer: &LayerSpec, fan_in: usize, is_output: bool, prev_omega: Option<f64>) -> f64 {
    let f = fan_in as f64;
    if is_output {
        return match prev_omega {
            Some(w) => (6.0 / f).sqrt() / w,
            None => 1.0 / f.sqrt(),
        };
    }
    match layer.activation {
        Activation::Sine { omega0 } => (6.0 / f).sqrt() / omega0,
        Activation::Relu => (6.0 / f).sqrt(),
        Activation::Polynomial { .. } | Activation::Identity => 1.0 / f.sqrt(),
    }
}

/// Builds a model with freshly initialized parameters. Biases start at zero.
pub fn build_model(mapping: MappingSpec, layers: Vec<LayerSpec>, rng: &mut SeededRng) -> Result<InrModel> {
    validate_architecture(&mapping, &layers)?;
    let mapping_params = mapping.init_params(rng)?;
    let mut values = Vec::with_capacity(parameter_count(&mapping, &layers));
    let frozen_mapping = if mapping.trainable {
        values.extend_from_slice(&mapping_params);
        Vec::new()
    } else {
        mapping_params
    };
    let mut fan_in = mapping.feature_count();
    let mut prev_omega = match mapping.variant {
        MappingVariant::SirenFirst { omega0, .. } => Some(omega0),
        _ => None,
    };
    for (i, layer) in layers.iter().enumerate() {
        let bound = init_bound(layer, fan_in, i + 1 == layers.len(), prev_omega);
        values.extend(rng.draw(
            Distribution::Uniform {
                low: -bound,
                high: bound,
            },
            layer.width * fan_in,
        )?);
        values.extend(std::iter::repeat_n(0.0, layer.width));
        prev_omega = match layer.activation {
            Activation::Sine { omega0 } => Some(omega0),
            _ => None,
        };
        fan_in = layer.width;
    }
    InrModel::from_parts(mapping, layers, values, frozen_mapping)
}

impl InrModel {
    /// Assembles a model from explicit parameter values (`frozen_mapping`
    /// must be empty when the mapping is trainable).
    pub fn from_parts(
        mapping: MappingSpec,
        layers: Vec<LayerSpec>,
        theta: Vec<f64>,
        frozen_mapping: Vec<f64>,
    ) -> Result<Self> {
        validate_architecture(&mapping, &layers)?;
        let layout = Arc::new(ParamLayout::from_shapes(layer_shapes(&mapping, &layers)));
        if theta.len() != layout.len() {
            return Err(Error::Validation(format!(
                "architecture has {} parameters, {} supplied",
                layout.len(),
                theta.len()
            )));
        }
        let want_frozen = if mapping.trainable { 0 } else { mapping.param_count() };
        if frozen_mapping.len() != want_frozen {
            return Err(Error::Validation(format!(
                "mapping needs {want_frozen} frozen values, {} supplied",
                frozen_mapping.len()
            )));
        }
        if theta.iter().chain(&frozen_mapping).any(|v| !v.is_finite()) {
            return Err(Error::Validation("parameters must be finite".into()));
        }
        let mut slots = Vec::with_capacity(layers.len());
        let mut fan_in = mapping.feature_count();
        for (i, layer) in layers.iter().enumerate() {
            slots.push(LayerSlot {
                fan_in,
                fan_out: layer.width,
                weight: layout.block(&format!("layer{i}.weight")).expect("weight block").offset,
                bias: layout.block(&format!("layer{i}.bias")).expect("bias block").offset,
            });
            fan_in = layer.width;
        }
        Ok(InrModel {
            mapping,
            layers,
            theta: ParamVector {
                values: theta,
                layout,
            },
            frozen_mapping,
            slots,
        })
    }

    pub fn mapping(&self) -> &MappingSpec {
        &self.mapping
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn theta(&self) -> &ParamVector {
        &self.theta
    }

    pub fn frozen_mapping(&self) -> &[f64] {
        &self.frozen_mapping
    }

    pub fn trainable_mapping(&self) -> bool {
        self.mapping.trainable
    }

    pub fn input_dim(&self) -> usize {
        self.mapping.input_dim
    }

    pub fn param_count(&self) -> usize {
        self.theta.len()
    }

    /// Values parameterizing the mapping, trainable or not.
    pub fn mapping_params(&self) -> &[f64] {
        if self.mapping.trainable {
            &self.theta.values[..self.mapping.param_count()]
        } else {
            &self.frozen_mapping
        }
    }

    /// The mapping as `sin(Ω r + φ)`: returns `Ω` (row-major, one row per
    /// feature) and `φ`.
    pub fn realized_mapping(&self) -> (Vec<f64>, Vec<f64>) {
        let r = self.realize_as(self.theta.values());
        (
            r.a.iter().map(|v| v * r.scale).collect(),
            r.c.iter().map(|v| v * r.scale).collect(),
        )
    }

    /// Replaces theta; the layout must match.
    pub fn set_theta(&mut self, theta: ParamVector) -> Result<()> {
        self.theta.check_layout(&theta)?;
        if theta.values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("non-finite parameter".into()));
        }
        self.theta = theta;
        Ok(())
    }

    pub fn with_theta_values(&self, values: Vec<f64>) -> Result<InrModel> {
        let mut m = self.clone();
        m.set_theta(self.theta.with_values(values)?)?;
        Ok(m)
    }

    fn check_coords(&self, coords: &Coords) -> Result<()> {
        if coords.dim() != self.input_dim() {
            return Err(Error::Argument(format!(
                "coordinates have dimension {}, model expects {}",
                coords.dim(),
                self.input_dim()
            )));
        }
        Ok(())
    }

    fn check_theta(&self, theta: &[f64]) -> Result<()> {
        if theta.len() != self.param_count() {
            return Err(Error::Argument(format!(
                "theta has {} entries, model has {}",
                theta.len(),
                self.param_count()
            )));
        }
        Ok(())
    }

    /// Network output at every coordinate.
    pub fn forward(&self, coords: &Coords) -> Result<Vec<f64>> {
        self.forward_with(self.theta.values(), coords)
    }

    /// Output under an alternative parameter vector with this model's layout.
    pub fn forward_with(&self, theta: &[f64], coords: &Coords) -> Result<Vec<f64>> {
        self.check_coords(coords)?;
        self.check_theta(theta)?;
        Ok(self.batch_forward(theta, coords, false).output)
    }

    /// ∇θ f(r) at one coordinate.
    pub fn param_gradient(&self, coord: &[f64]) -> Result<ParamVector> {
        if coord.len() != self.input_dim() {
            return Err(Error::Argument(format!(
                "coordinate has dimension {}, model expects {}",
                coord.len(),
                self.input_dim()
            )));
        }
        let grad = self.sample_gradient(self.theta.values(), coord);
        self.theta.with_values(grad)
    }

    /// Jacobian of the outputs with respect to theta, one row per coordinate.
    /// Each row is computed independently, so the result does not depend on
    /// `batch_size`, which only sets the unit of parallel work.
    pub fn jacobian(&self, coords: &Coords, batch_size: usize) -> Result<Matrix> {
        self.check_coords(coords)?;
        let p = self.param_count();
        let mut data = vec![0.0; coords.len() * p];
        self.jacobian_into(coords, batch_size.max(1), &mut data);
        Matrix::from_vec(coords.len(), p, data)
    }

    /// First-order Taylor prediction f_θ0(r) + (θ − θ0)ᵀ ∇θ f_θ0(r).
    pub fn linearized_predict(&self, theta: &ParamVector, coords: &Coords) -> Result<Vec<f64>> {
        self.theta.check_layout(theta)?;
        self.check_coords(coords)?;
        let delta: Vec<f64> = theta
            .values()
            .iter()
            .zip(self.theta.values())
            .map(|(a, b)| a - b)
            .collect();
        let base = self.forward(coords)?;
        Ok(base
            .iter()
            .enumerate()
            .map(|(i, f0)| {
                let g = self.sample_gradient(self.theta.values(), coords.point(i));
                f0 + crate::numkit::dot(&delta, &g)
            })
            .collect())
    }

    /// 64-bit digest of the specs and parameter bits.
    pub fn fingerprint(&self) -> u64 {
        let mut h = Sha256::new();
        h.update(serde_json::to_vec(&self.mapping).expect("mapping serializes"));
        h.update(serde_json::to_vec(&self.layers).expect("layers serialize"));
        for v in self.theta.values().iter().chain(&self.frozen_mapping) {
            h.update(v.to_bits().to_le_bytes());
        }
        let digest = h.finalize();
        let mut bytes = [0u8; 8];
        bytes.copy_from_slice(&digest[..8]);
        u64::from_be_bytes(bytes)
    }
}
