//! Single-hidden-layer sigmoid autoencoder with hand-written backprop.
//!
//! Parameters live in one flat row-major vector laid out as
//! `[W_enc (input x latent) | b_enc (latent) | W_dec (latent x input) | b_dec (input)]`.
//! The same layout is used by [`Gradient`] and by the text checkpoint format.

use std::fmt::Write as _;
use std::path::Path;

use rand::Rng;

use crate::data::SparseRow;
use crate::error::{Error, Result};

pub const CHECKPOINT_HEADER: &str = "afmc-autoencoder v1";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Sigmoid,
}

impl Activation {
    fn name(self) -> &'static str {
        match self {
            Activation::Sigmoid => "sigmoid",
        }
    }
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// A feature vector fed to the autoencoder.
pub trait FeatureRow {
    fn width(&self) -> usize;
    /// Calls `f(column, value)` for every nonzero entry.
    fn for_each_nonzero(&self, f: impl FnMut(usize, f64));
}

impl FeatureRow for [f64] {
    fn width(&self) -> usize {
        self.len()
    }

    fn for_each_nonzero(&self, mut f: impl FnMut(usize, f64)) {
        for (j, &x) in self.iter().enumerate() {
            if x != 0.0 {
                f(j, x);
            }
        }
    }
}

impl FeatureRow for Vec<f64> {
    fn width(&self) -> usize {
        self.len()
    }

    fn for_each_nonzero(&self, f: impl FnMut(usize, f64)) {
        self.as_slice().for_each_nonzero(f)
    }
}

impl FeatureRow for SparseRow {
    fn width(&self) -> usize {
        self.width
    }

    fn for_each_nonzero(&self, mut f: impl FnMut(usize, f64)) {
        for (&j, &x) in self.indices.iter().zip(&self.values) {
            if x != 0.0 {
                f(j as usize, x);
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Layout {
    input: usize,
    latent: usize,
}

impl Layout {
    fn len(&self) -> usize {
        2 * self.input * self.latent + self.input + self.latent
    }
    fn enc_w(&self) -> std::ops::Range<usize> {
        0..self.input * self.latent
    }
    fn enc_b(&self) -> std::ops::Range<usize> {
        let s = self.input * self.latent;
        s..s + self.latent
    }
    fn dec_w(&self) -> std::ops::Range<usize> {
        let s = self.input * self.latent + self.latent;
        s..s + self.latent * self.input
    }
    fn dec_b(&self) -> std::ops::Range<usize> {
        let s = 2 * self.input * self.latent + self.latent;
        s..s + self.input
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    layout: Layout,
    activation: Activation,
    values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gradient {
    layout: Layout,
    values: Vec<f64>,
}

fn check_dims(input_dim: usize, latent_dim: usize) -> Result<()> {
    if latent_dim == 0 || latent_dim >= input_dim {
        return Err(Error::Config(format!(
            "autoencoder needs 0 < latent_dim < input_dim, got latent {latent_dim}, input {input_dim}"
        )));
    }
    Ok(())
}

impl ModelParams {
    /// All-zero parameters.
    pub fn zeros(input_dim: usize, latent_dim: usize) -> Result<Self> {
        check_dims(input_dim, latent_dim)?;
        let layout = Layout {
            input: input_dim,
            latent: latent_dim,
        };
        Ok(Self {
            layout,
            activation: Activation::Sigmoid,
            values: vec![0.0; layout.len()],
        })
    }

    /// Build from a flat vector in checkpoint order.
    pub fn from_flat(input_dim: usize, latent_dim: usize, values: Vec<f64>) -> Result<Self> {
        let mut m = Self::zeros(input_dim, latent_dim)?;
        if values.len() != m.values.len() {
            return Err(Error::Shape(format!(
                "expected {} parameters, got {}",
                m.values.len(),
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Shape("non-finite parameter".into()));
        }
        m.values = values;
        Ok(m)
    }

    pub fn input_dim(&self) -> usize {
        self.layout.input
    }

    pub fn latent_dim(&self) -> usize {
        self.layout.latent
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn num_params(&self) -> usize {
        self.values.len()
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.values
    }

    pub fn as_flat_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn encoder_weights(&self) -> &[f64] {
        &self.values[self.layout.enc_w()]
    }

    pub fn encoder_bias(&self) -> &[f64] {
        &self.values[self.layout.enc_b()]
    }

    pub fn decoder_weights(&self) -> &[f64] {
        &self.values[self.layout.dec_w()]
    }

    pub fn decoder_bias(&self) -> &[f64] {
        &self.values[self.layout.dec_b()]
    }

    pub fn same_shape(&self, other: &ModelParams) -> bool {
        self.layout == other.layout
    }

    fn ensure_same_shape(&self, other: &ModelParams) -> Result<()> {
        if !self.same_shape(other) {
            return Err(Error::Shape(format!(
                "models {}x{} and {}x{} differ",
                self.layout.input, self.layout.latent, other.layout.input, other.layout.latent
            )));
        }
        Ok(())
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    /// Squared Euclidean distance over all parameters.
    pub fn squared_distance(&self, other: &ModelParams) -> Result<f64> {
        self.ensure_same_shape(other)?;
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .map(|(a, b)| (a - b) * (a - b))
            .sum())
    }

    /// Text checkpoint: header line, `input latent activation count` line,
    /// then one value per line in flat order.
    pub fn to_text(&self) -> String {
        let mut s = String::with_capacity(self.values.len() * 24);
        let _ = writeln!(s, "{CHECKPOINT_HEADER}");
        let _ = writeln!(
            s,
            "{} {} {} {}",
            self.layout.input,
            self.layout.latent,
            self.activation.name(),
            self.values.len()
        );
        for v in &self.values {
            let _ = writeln!(s, "{v:?}");
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim() == CHECKPOINT_HEADER => {}
            other => {
                return Err(Error::Checkpoint(format!("bad header {other:?}")));
            }
        }
        let dims = lines
            .next()
            .ok_or_else(|| Error::Checkpoint("missing dimension line".into()))?;
        let parts: Vec<&str> = dims.split_whitespace().collect();
        if parts.len() != 4 || parts[2] != Activation::Sigmoid.name() {
            return Err(Error::Checkpoint(format!("bad dimension line {dims:?}")));
        }
        let parse = |s: &str| -> Result<usize> {
            s.parse().map_err(|_| Error::Checkpoint(format!("bad integer {s:?}")))
        };
        let (input, latent, count) = (parse(parts[0])?, parse(parts[1])?, parse(parts[3])?);
        let values = lines
            .take(count)
            .map(|l| {
                l.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Checkpoint(format!("bad value {l:?}")))
            })
            .collect::<Result<Vec<f64>>>()?;
        if values.len() != count {
            return Err(Error::Checkpoint(format!("expected {count} values, found {}", values.len())));
        }
        Self::from_flat(input, latent, values)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

impl Gradient {
    pub fn zeros_like(model: &ModelParams) -> Self {
        Self {
            layout: model.layout,
            values: vec![0.0; model.values.len()],
        }
    }

    pub fn from_flat_like(model: &ModelParams, values: Vec<f64>) -> Result<Self> {
        if values.len() != model.values.len() {
            return Err(Error::Shape(format!(
                "expected {} gradient entries, got {}",
                model.values.len(),
                values.len()
            )));
        }
        Ok(Self {
            layout: model.layout,
            values,
        })
    }

    pub fn as_flat(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn matches(&self, model: &ModelParams) -> bool {
        self.layout == model.layout
    }

    /// `self += scale * other`.
    pub fn add_scaled(&mut self, other: &Gradient, scale: f64) -> Result<()> {
        if self.layout != other.layout {
            return Err(Error::Shape("gradient shapes differ".into()));
        }
        for (a, b) in self.values.iter_mut().zip(&other.values) {
            *a += scale * b;
        }
        Ok(())
    }

    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn all_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }
}

/// Xavier-uniform weights, zero biases.
pub fn init_model<R: Rng + ?Sized>(input_dim: usize, latent_dim: usize, rng: &mut R) -> Result<ModelParams> {
    let mut model = ModelParams::zeros(input_dim, latent_dim)?;
    let bound = xavier_bound(input_dim, latent_dim);
    let layout = model.layout;
    for r in [layout.enc_w(), layout.dec_w()] {
        for w in &mut model.values[r] {
            *w = rng.random_range(-bound..=bound);
        }
    }
    Ok(model)
}

/// `sqrt(6 / (fan_in + fan_out))`; both layers share it since fan_in + fan_out is symmetric.
pub fn xavier_bound(input_dim: usize, latent_dim: usize) -> f64 {
    (6.0 / (input_dim + latent_dim) as f64).sqrt()
}

fn check_row<X: FeatureRow + ?Sized>(model: &ModelParams, x: &X) -> Result<()> {
    if x.width() != model.layout.input {
        return Err(Error::Shape(format!(
            "feature width {} does not match model input {}",
            x.width(),
            model.layout.input
        )));
    }
    Ok(())
}

fn check_batch<X: FeatureRow>(model: &ModelParams, batch: &[X]) -> Result<()> {
    if batch.is_empty() {
        return Err(Error::Shape("empty batch".into()));
    }
    batch.iter().try_for_each(|x| check_row(model, x))
}

fn encode_into<X: FeatureRow + ?Sized>(model: &ModelParams, x: &X, latent: &mut [f64]) {
    let l = model.layout.latent;
    latent.copy_from_slice(model.encoder_bias());
    let w = model.encoder_weights();
    x.for_each_nonzero(|j, v| {
        for (z, &wj) in latent.iter_mut().zip(&w[j * l..(j + 1) * l]) {
            *z += v * wj;
        }
    });
    for z in latent.iter_mut() {
        *z = sigmoid(*z);
    }
}

fn decode_into(model: &ModelParams, latent: &[f64], out: &mut [f64]) {
    let d = model.layout.input;
    out.copy_from_slice(model.decoder_bias());
    let w = model.decoder_weights();
    for (h, &z) in latent.iter().enumerate() {
        for (o, &wh) in out.iter_mut().zip(&w[h * d..(h + 1) * d]) {
            *o += z * wh;
        }
    }
    for o in out.iter_mut() {
        *o = sigmoid(*o);
    }
}

/// Encoder output only.
pub fn encode<X: FeatureRow + ?Sized>(model: &ModelParams, x: &X) -> Result<Vec<f64>> {
    check_row(model, x)?;
    let mut latent = vec![0.0; model.layout.latent];
    encode_into(model, x, &mut latent);
    Ok(latent)
}

/// Returns `(latent, reconstruction)`.
pub fn forward<X: FeatureRow + ?Sized>(model: &ModelParams, x: &X) -> Result<(Vec<f64>, Vec<f64>)> {
    let latent = encode(model, x)?;
    let mut out = vec![0.0; model.layout.input];
    decode_into(model, &latent, &mut out);
    Ok((latent, out))
}

/// Per-example squared error summed over coordinates, for a computed reconstruction.
fn squared_error<X: FeatureRow + ?Sized>(x: &X, recon: &[f64]) -> f64 {
    let mut total: f64 = recon.iter().map(|o| o * o).sum();
    x.for_each_nonzero(|j, v| {
        let o = recon[j];
        total += (o - v) * (o - v) - o * o;
    });
    total.max(0.0)
}

/// Mean over the batch of the per-coordinate mean squared reconstruction error.
pub fn mse_loss<X: FeatureRow>(model: &ModelParams, batch: &[X]) -> Result<f64> {
    check_batch(model, batch)?;
    let mut latent = vec![0.0; model.layout.latent];
    let mut out = vec![0.0; model.layout.input];
    let mut total = 0.0;
    for x in batch {
        encode_into(model, x, &mut latent);
        decode_into(model, &latent, &mut out);
        total += squared_error(x, &out);
    }
    Ok(total / (batch.len() * model.layout.input) as f64)
}

/// `mse_loss + rho/2 * ||global - model||^2`.
pub fn regularized_loss<X: FeatureRow>(
    model: &ModelParams,
    batch: &[X],
    global: &ModelParams,
    rho: f64,
) -> Result<f64> {
    let prox = model.squared_distance(global)?;
    Ok(mse_loss(model, batch)? + 0.5 * rho * prox)
}

/// Output columns processed together, so a decoder tile stays in cache
/// while every example of the batch uses it.
const TILE: usize = 256;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yi, &xi) in y.iter_mut().zip(x) {
        *yi += a * xi;
    }
}

/// Analytic gradient of [`regularized_loss`] with respect to `model`.
pub fn gradient<X: FeatureRow>(
    model: &ModelParams,
    batch: &[X],
    global: &ModelParams,
    rho: f64,
) -> Result<Gradient> {
    let mut grad = Gradient::zeros_like(model);
    gradient_into(model, batch, global, rho, &mut grad)?;
    Ok(grad)
}

/// [`gradient`] written into an existing buffer, which is overwritten.
pub fn gradient_into<X: FeatureRow>(
    model: &ModelParams,
    batch: &[X],
    global: &ModelParams,
    rho: f64,
    grad: &mut Gradient,
) -> Result<()> {
    if !grad.matches(model) {
        return Err(Error::Shape("gradient buffer does not match model".into()));
    }
    model.ensure_same_shape(global)?;
    check_batch(model, batch)?;
    let Layout { input: d, latent: l } = model.layout;
    let layout = model.layout;
    let n = batch.len();
    let scale = 2.0 / (n * d) as f64;
    let w_dec = model.decoder_weights();
    let b_dec = model.decoder_bias();

    // Forward pass for the whole batch; `delta` first holds the outputs.
    let mut z = vec![0.0; n * l];
    for (x, zb) in batch.iter().zip(z.chunks_exact_mut(l)) {
        encode_into(model, x, zb);
    }
    let mut delta = vec![0.0; n * d];
    for c0 in (0..d).step_by(TILE) {
        let c1 = (c0 + TILE).min(d);
        for b in 0..n {
            delta[b * d + c0..b * d + c1].copy_from_slice(&b_dec[c0..c1]);
        }
        for h in 0..l {
            let w = &w_dec[h * d + c0..h * d + c1];
            for b in 0..n {
                axpy(&mut delta[b * d + c0..b * d + c1], z[b * l + h], w);
            }
        }
    }

    // delta = dL/d(output pre-activation) = scale * (o - x) * o * (1 - o)
    for (x, db) in batch.iter().zip(delta.chunks_exact_mut(d)) {
        for o in db.iter_mut() {
            *o = sigmoid(*o);
        }
        let mut targets = Vec::new();
        x.for_each_nonzero(|j, v| targets.push((j, v * db[j] * (1.0 - db[j]))));
        for o in db.iter_mut() {
            *o = scale * *o * *o * (1.0 - *o);
        }
        for (j, t) in targets {
            db[j] -= scale * t;
        }
    }

    grad.values.fill(0.0);
    let g = &mut grad.values;
    let mut dz = vec![0.0; n * l];
    {
        let g_bias = &mut g[layout.dec_b()];
        for db in delta.chunks_exact(d) {
            for (gb, &dj) in g_bias.iter_mut().zip(db) {
                *gb += dj;
            }
        }
    }
    let dec_start = layout.dec_w().start;
    for c0 in (0..d).step_by(TILE) {
        let c1 = (c0 + TILE).min(d);
        for h in 0..l {
            let w = &w_dec[h * d + c0..h * d + c1];
            let gw = &mut g[dec_start + h * d + c0..dec_start + h * d + c1];
            for b in 0..n {
                let db = &delta[b * d + c0..b * d + c1];
                dz[b * l + h] += dot(w, db);
                axpy(gw, z[b * l + h], db);
            }
        }
    }
    for (dzb, zb) in dz.chunks_exact_mut(l).zip(z.chunks_exact(l)) {
        for (dh, &zh) in dzb.iter_mut().zip(zb) {
            *dh *= zh * (1.0 - zh);
        }
    }
    for dzb in dz.chunks_exact(l) {
        for (gb, &dh) in g[layout.enc_b()].iter_mut().zip(dzb) {
            *gb += dh;
        }
    }
    for (x, dzb) in batch.iter().zip(dz.chunks_exact(l)) {
        x.for_each_nonzero(|j, v| axpy(&mut g[j * l..(j + 1) * l], v, dzb));
    }

    if rho != 0.0 {
        for ((gv, &w), &wg) in grad.values.iter_mut().zip(&model.values).zip(&global.values) {
            *gv += rho * (w - wg);
        }
    }
    Ok(())
}

/// Central-difference estimate of the [`regularized_loss`] gradient.
pub fn finite_diff_gradient<X: FeatureRow>(
    model: &ModelParams,
    batch: &[X],
    global: &ModelParams,
    rho: f64,
    step: f64,
) -> Result<Gradient> {
    if !(step > 0.0) {
        return Err(Error::Config(format!("finite-difference step must be positive, got {step}")));
    }
    model.ensure_same_shape(global)?;
    check_batch(model, batch)?;
    let mut probe = model.clone();
    let mut values = Vec::with_capacity(model.values.len());
    for i in 0..model.values.len() {
        let orig = probe.values[i];
        probe.values[i] = orig + step;
        let up = regularized_loss(&probe, batch, global, rho)?;
        probe.values[i] = orig - step;
        let down = regularized_loss(&probe, batch, global, rho)?;
        probe.values[i] = orig;
        values.push((up - down) / (2.0 * step));
    }
    Gradient::from_flat_like(model, values)
}

/// `model - lr * direction`.
pub fn apply_step(model: &ModelParams, direction: &Gradient, lr: f64) -> Result<ModelParams> {
    let mut next = model.clone();
    step_in_place(&mut next, direction, lr)?;
    Ok(next)
}

/// [`apply_step`] without the copy.
pub fn step_in_place(model: &mut ModelParams, direction: &Gradient, lr: f64) -> Result<()> {
    if !direction.matches(model) {
        return Err(Error::Shape("gradient does not match model".into()));
    }
    for (w, &g) in model.values.iter_mut().zip(&direction.values) {
        *w -= lr * g;
    }
    Ok(())
}

/// Largest coordinate-wise relative difference `|a - b| / max(|a|, |b|, floor)`.
pub fn max_relative_error(a: &Gradient, b: &Gradient, floor: f64) -> f64 {
    a.as_flat()
        .iter()
        .zip(b.as_flat())
        .map(|(x, y)| (x - y).abs() / x.abs().max(y.abs()).max(floor))
        .fold(0.0, f64::max)
}
