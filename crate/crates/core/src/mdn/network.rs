//! Parameter layout, forward pass and exact backpropagation of the mixture
//! density network.
//!
//! Input vector (each block `embed_dim` wide):
//! `[week | week of year | region | mean of neighbour regions | property type | bedrooms? | land band?]`,
//! followed by three tanh layers and a linear head emitting `3K` values:
//! weight logits, standardized means and raw variances.

use rand::Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::data::time::WEEKS_PER_YEAR;
use crate::data::{FeatureKey, RegionIdx, RegionRegistry};
use crate::error::{Error, Result};
use crate::mixture::{normal_ln_pdf, Component, GaussianMixture, VARIANCE_FLOOR};

const EMBED_INIT: f64 = 0.05;
const HEAD_WEIGHT_SCALE: f64 = 0.1;

/// Categorical vocabulary of the inputs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct InputSchema {
    pub week_min: u32,
    pub week_count: usize,
    pub regions: usize,
    /// Bedroom categories, including category 0 for "missing".
    pub bedroom_categories: Option<usize>,
    /// Land-band categories, including category 0 for "missing".
    pub land_categories: Option<usize>,
}

impl InputSchema {
    pub fn week_max(&self) -> u32 {
        self.week_min + self.week_count as u32 - 1
    }

    pub fn clamp_week(&self, week: u32) -> u32 {
        week.clamp(self.week_min, self.week_max())
    }
}

/// Shift and scale mapping standardized network means to log prices.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetScale {
    pub shift: f64,
    pub scale: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
struct LayoutSpec {
    schema: InputSchema,
    embed_dim: usize,
    hidden: usize,
    components: usize,
}

/// Offsets of every parameter block in the flat parameter vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "LayoutSpec", into = "LayoutSpec")]
pub struct Layout {
    pub schema: InputSchema,
    pub embed_dim: usize,
    pub hidden: usize,
    pub components: usize,
    pub input_dim: usize,
    week: usize,
    woy: usize,
    region: usize,
    prop: usize,
    bedrooms: Option<usize>,
    land: Option<usize>,
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    w3: usize,
    b3: usize,
    wo: usize,
    bo: usize,
    total: usize,
}

impl From<LayoutSpec> for Layout {
    fn from(s: LayoutSpec) -> Self {
        Layout::new(s.schema, s.embed_dim, s.hidden, s.components)
    }
}

impl From<Layout> for LayoutSpec {
    fn from(l: Layout) -> Self {
        LayoutSpec {
            schema: l.schema,
            embed_dim: l.embed_dim,
            hidden: l.hidden,
            components: l.components,
        }
    }
}

impl Layout {
    pub fn new(schema: InputSchema, embed_dim: usize, hidden: usize, components: usize) -> Self {
        let e = embed_dim;
        let mut at = 0;
        let mut take = |n: usize| {
            let o = at;
            at += n;
            o
        };
        let week = take(schema.week_count * e);
        let woy = take(WEEKS_PER_YEAR as usize * e);
        let region = take(schema.regions * e);
        let prop = take(2 * e);
        let bedrooms = schema.bedroom_categories.map(|n| take(n * e));
        let land = schema.land_categories.map(|n| take(n * e));
        let blocks = 5 + usize::from(bedrooms.is_some()) + usize::from(land.is_some());
        let input_dim = blocks * e;
        let w1 = take(hidden * input_dim);
        let b1 = take(hidden);
        let w2 = take(hidden * hidden);
        let b2 = take(hidden);
        let w3 = take(hidden * hidden);
        let b3 = take(hidden);
        let wo = take(3 * components * hidden);
        let bo = take(3 * components);
        Layout {
            schema,
            embed_dim,
            hidden,
            components,
            input_dim,
            week,
            woy,
            region,
            prop,
            bedrooms,
            land,
            w1,
            b1,
            w2,
            b2,
            w3,
            b3,
            wo,
            bo,
            total: at,
        }
    }

    pub fn len(&self) -> usize {
        self.total
    }

    pub fn is_empty(&self) -> bool {
        self.total == 0
    }

    pub fn output_dim(&self) -> usize {
        3 * self.components
    }
}

/// Resolved categorical indices of one input cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub(crate) struct Cell {
    pub week: usize,
    pub woy: usize,
    pub region: usize,
    pub prop: usize,
    pub bedrooms: usize,
    pub land: usize,
}

/// Scratch buffers for one forward/backward pass.
#[derive(Debug, Clone)]
pub(crate) struct Workspace {
    pub x: Vec<f64>,
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    pub h3: Vec<f64>,
    pub out: Vec<f64>,
    pub d_out: Vec<f64>,
    dz3: Vec<f64>,
    dz2: Vec<f64>,
    dz1: Vec<f64>,
    dx: Vec<f64>,
    pub alpha: Vec<f64>,
    pub ln_alpha: Vec<f64>,
    pub mu: Vec<f64>,
    pub var: Vec<f64>,
    terms: Vec<f64>,
}

impl Workspace {
    pub fn new(layout: &Layout) -> Self {
        let h = layout.hidden;
        let k = layout.components;
        Self {
            x: vec![0.0; layout.input_dim],
            h1: vec![0.0; h],
            h2: vec![0.0; h],
            h3: vec![0.0; h],
            out: vec![0.0; 3 * k],
            d_out: vec![0.0; 3 * k],
            dz3: vec![0.0; h],
            dz2: vec![0.0; h],
            dz1: vec![0.0; h],
            dx: vec![0.0; layout.input_dim],
            alpha: vec![0.0; k],
            ln_alpha: vec![0.0; k],
            mu: vec![0.0; k],
            var: vec![0.0; k],
            terms: vec![0.0; k],
        }
    }
}

/// Trainable parameters in one flat vector, plus the fixed target scaling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkParams {
    pub layout: Layout,
    pub target: TargetScale,
    pub values: Vec<f64>,
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// `out = W x + b` for row-major `W` of shape `out.len() × x.len()`.
fn affine(w: &[f64], b: &[f64], x: &[f64], out: &mut [f64]) {
    let n = x.len();
    for (i, o) in out.iter_mut().enumerate() {
        let row = &w[i * n..(i + 1) * n];
        *o = b[i] + row.iter().zip(x).map(|(a, c)| a * c).sum::<f64>();
    }
}

impl NetworkParams {
    /// All-zero parameters: uniform weights, means at the target shift.
    pub fn zeros(layout: Layout, target: TargetScale) -> Self {
        Self {
            values: vec![0.0; layout.len()],
            layout,
            target,
        }
    }

    /// Uniform embeddings in ±0.05, Glorot-uniform dense layers, and a head
    /// whose mean biases start at standard normal quantiles so components
    /// begin spread out over the data.
    pub fn init<R: Rng + ?Sized>(layout: Layout, target: TargetScale, rng: &mut R) -> Self {
        let mut p = Self::zeros(layout, target);
        let l = layout;
        let v = &mut p.values;
        for x in &mut v[..l.w1] {
            *x = rng.random_range(-EMBED_INIT..EMBED_INIT);
        }
        let mut glorot = |v: &mut [f64], fan_in: usize, fan_out: usize, gain: f64| {
            let a = gain * (6.0 / (fan_in + fan_out) as f64).sqrt();
            for x in v {
                *x = rng.random_range(-a..a);
            }
        };
        let (d, h, k) = (l.input_dim, l.hidden, l.components);
        glorot(&mut v[l.w1..l.b1], d, h, 1.0);
        glorot(&mut v[l.w2..l.b2], h, h, 1.0);
        glorot(&mut v[l.w3..l.b3], h, h, 1.0);
        glorot(&mut v[l.wo..l.bo], h, 3 * k, HEAD_WEIGHT_SCALE);
        let std = Normal::new(0.0, 1.0).expect("valid normal");
        for j in 0..k {
            v[l.bo + k + j] = std.inverse_cdf((j as f64 + 0.5) / k as f64);
            // softplus(raw) = 0.25, i.e. component sd of half the target sd
            v[l.bo + 2 * k + j] = (0.25f64.exp() - 1.0).ln();
        }
        p
    }

    pub(crate) fn cell(&self, key: &FeatureKey, week: u32) -> Cell {
        let s = &self.layout.schema;
        let week = s.clamp_week(week);
        let cat = |v: Option<u8>, n: Option<usize>| match (v, n) {
            (Some(b), Some(n)) => (usize::from(b) + 1).min(n - 1),
            _ => 0,
        };
        Cell {
            week: (week - s.week_min) as usize,
            woy: (week % WEEKS_PER_YEAR) as usize,
            region: key.region.index(),
            prop: key.prop_type.index(),
            bedrooms: cat(key.bedrooms, s.bedroom_categories),
            land: cat(key.land_band, s.land_categories),
        }
    }

    fn embedding(&self, block: usize, row: usize) -> &[f64] {
        let e = self.layout.embed_dim;
        &self.values[block + row * e..block + (row + 1) * e]
    }

    fn gather(&self, cell: &Cell, neighbors: &[RegionIdx], x: &mut [f64]) {
        let l = &self.layout;
        let e = l.embed_dim;
        x[..e].copy_from_slice(self.embedding(l.week, cell.week));
        x[e..2 * e].copy_from_slice(self.embedding(l.woy, cell.woy));
        x[2 * e..3 * e].copy_from_slice(self.embedding(l.region, cell.region));
        let nb = &mut x[3 * e..4 * e];
        nb.fill(0.0);
        if !neighbors.is_empty() {
            for n in neighbors {
                for (a, b) in nb.iter_mut().zip(self.embedding(l.region, n.index())) {
                    *a += b;
                }
            }
            let inv = 1.0 / neighbors.len() as f64;
            nb.iter_mut().for_each(|a| *a *= inv);
        }
        x[4 * e..5 * e].copy_from_slice(self.embedding(l.prop, cell.prop));
        let mut at = 5 * e;
        if let Some(b) = l.bedrooms {
            x[at..at + e].copy_from_slice(self.embedding(b, cell.bedrooms));
            at += e;
        }
        if let Some(b) = l.land {
            x[at..at + e].copy_from_slice(self.embedding(b, cell.land));
        }
    }

    /// Runs the network and fills the mixture parameters in `ws`.
    pub(crate) fn forward_cell(&self, cell: &Cell, neighbors: &[RegionIdx], ws: &mut Workspace) {
        let l = &self.layout;
        let v = &self.values;
        self.gather(cell, neighbors, &mut ws.x);
        affine(&v[l.w1..l.b1], &v[l.b1..l.w2], &ws.x, &mut ws.h1);
        ws.h1.iter_mut().for_each(|a| *a = a.tanh());
        affine(&v[l.w2..l.b2], &v[l.b2..l.w3], &ws.h1, &mut ws.h2);
        ws.h2.iter_mut().for_each(|a| *a = a.tanh());
        affine(&v[l.w3..l.b3], &v[l.b3..l.wo], &ws.h2, &mut ws.h3);
        ws.h3.iter_mut().for_each(|a| *a = a.tanh());
        affine(&v[l.wo..l.bo], &v[l.bo..l.total], &ws.h3, &mut ws.out);

        let k = l.components;
        let logits = &ws.out[..k];
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|a| (a - max).exp()).sum::<f64>().ln();
        let TargetScale { shift, scale } = self.target;
        for j in 0..k {
            ws.ln_alpha[j] = logits[j] - lse;
            ws.alpha[j] = ws.ln_alpha[j].exp();
            ws.mu[j] = shift + scale * ws.out[k + j];
            ws.var[j] = scale * scale * softplus(ws.out[2 * k + j]) + VARIANCE_FLOOR;
        }
    }

    pub(crate) fn mixture_from(&self, ws: &Workspace) -> GaussianMixture {
        let k = self.layout.components;
        let total: f64 = ws.alpha.iter().sum();
        GaussianMixture::from_valid(
            (0..k)
                .map(|j| Component::new(ws.alpha[j] / total, ws.mu[j], ws.var[j]))
                .collect(),
        )
    }

    /// Accumulates `Σ_i -ln f(y_i)` over the cell's records into the return
    /// value and `scale · ∂/∂out` of that sum into `ws.d_out`.
    /// Must follow [`forward_cell`](Self::forward_cell).
    pub(crate) fn cell_loss(&self, ys: &[f64], scale: f64, ws: &mut Workspace) -> f64 {
        let k = self.layout.components;
        let TargetScale { scale: ts, .. } = self.target;
        ws.d_out.fill(0.0);
        let mut loss = 0.0;
        for &y in ys {
            let mut max = f64::NEG_INFINITY;
            for j in 0..k {
                ws.terms[j] = ws.ln_alpha[j] + normal_ln_pdf(y, ws.mu[j], ws.var[j]);
                max = max.max(ws.terms[j]);
            }
            let lse = max + ws.terms.iter().map(|t| (t - max).exp()).sum::<f64>().ln();
            loss -= lse;
            for j in 0..k {
                let gamma = (ws.terms[j] - lse).exp();
                let r = y - ws.mu[j];
                let inv_var = 1.0 / ws.var[j];
                ws.d_out[j] += ws.alpha[j] - gamma;
                ws.d_out[k + j] -= gamma * r * inv_var * ts;
                let d_var = 0.5 * gamma * (inv_var - r * r * inv_var * inv_var);
                ws.d_out[2 * k + j] += d_var * ts * ts * sigmoid(ws.out[2 * k + j]);
            }
        }
        ws.d_out.iter_mut().for_each(|g| *g *= scale);
        loss
    }

    /// Backpropagates `ws.d_out` into `grad`. Must follow [`forward_cell`](Self::forward_cell).
    pub(crate) fn backward_cell(&self, cell: &Cell, neighbors: &[RegionIdx], ws: &mut Workspace, grad: &mut [f64]) {
        let l = &self.layout;
        let v = &self.values;
        let h = l.hidden;
        let o = l.output_dim();
        let d = l.input_dim;

        // head
        for i in 0..o {
            let g = ws.d_out[i];
            grad[l.bo + i] += g;
            let row = &mut grad[l.wo + i * h..l.wo + (i + 1) * h];
            for (r, a) in row.iter_mut().zip(&ws.h3) {
                *r += g * a;
            }
        }
        ws.dz3.fill(0.0);
        for i in 0..o {
            let g = ws.d_out[i];
            let row = &v[l.wo + i * h..l.wo + (i + 1) * h];
            for (dz, w) in ws.dz3.iter_mut().zip(row) {
                *dz += g * w;
            }
        }
        for (dz, a) in ws.dz3.iter_mut().zip(&ws.h3) {
            *dz *= 1.0 - a * a;
        }

        // hidden layers
        back_dense(
            &v[l.w3..l.b3],
            &ws.dz3,
            &ws.h2,
            &mut grad[l.w3..l.wo],
            h,
            h,
            &mut ws.dz2,
        );
        for (dz, a) in ws.dz2.iter_mut().zip(&ws.h2) {
            *dz *= 1.0 - a * a;
        }
        back_dense(
            &v[l.w2..l.b2],
            &ws.dz2,
            &ws.h1,
            &mut grad[l.w2..l.w3],
            h,
            h,
            &mut ws.dz1,
        );
        for (dz, a) in ws.dz1.iter_mut().zip(&ws.h1) {
            *dz *= 1.0 - a * a;
        }
        back_dense(&v[l.w1..l.b1], &ws.dz1, &ws.x, &mut grad[l.w1..l.w2], h, d, &mut ws.dx);

        // embeddings
        let e = l.embed_dim;
        let mut add = |block: usize, row: usize, g: &[f64], scale: f64| {
            let dst = &mut grad[block + row * e..block + (row + 1) * e];
            for (a, b) in dst.iter_mut().zip(g) {
                *a += scale * b;
            }
        };
        add(l.week, cell.week, &ws.dx[..e], 1.0);
        add(l.woy, cell.woy, &ws.dx[e..2 * e], 1.0);
        add(l.region, cell.region, &ws.dx[2 * e..3 * e], 1.0);
        if !neighbors.is_empty() {
            let inv = 1.0 / neighbors.len() as f64;
            for n in neighbors {
                add(l.region, n.index(), &ws.dx[3 * e..4 * e], inv);
            }
        }
        add(l.prop, cell.prop, &ws.dx[4 * e..5 * e], 1.0);
        let mut at = 5 * e;
        if let Some(b) = l.bedrooms {
            add(b, cell.bedrooms, &ws.dx[at..at + e], 1.0);
            at += e;
        }
        if let Some(b) = l.land {
            add(b, cell.land, &ws.dx[at..at + e], 1.0);
        }
    }
}

/// Gradient of a dense layer `z = W a + b`: accumulates into `grad_wb`
/// (weights then biases) and writes `Wᵀ dz` into `d_in`.
fn back_dense(w: &[f64], dz: &[f64], a: &[f64], grad_wb: &mut [f64], rows: usize, cols: usize, d_in: &mut [f64]) {
    let (gw, gb) = grad_wb.split_at_mut(rows * cols);
    d_in.fill(0.0);
    for i in 0..rows {
        let g = dz[i];
        gb[i] += g;
        let grow = &mut gw[i * cols..(i + 1) * cols];
        for (r, x) in grow.iter_mut().zip(a) {
            *r += g * x;
        }
        let wrow = &w[i * cols..(i + 1) * cols];
        for (dx, wv) in d_in.iter_mut().zip(wrow) {
            *dx += g * wv;
        }
    }
}

/// Mixture for one feature cell and week. Weeks outside the trained range
/// are clamped to its ends.
pub fn forward(
    params: &NetworkParams,
    registry: &RegionRegistry,
    key: &FeatureKey,
    week: u32,
) -> Result<GaussianMixture> {
    if key.region.index() >= params.layout.schema.regions || !registry.contains(key.region) {
        return Err(Error::UnknownRegion(key.region.to_string()));
    }
    let cell = params.cell(key, week);
    let mut ws = Workspace::new(&params.layout);
    params.forward_cell(&cell, registry.neighbors(key.region), &mut ws);
    Ok(params.mixture_from(&ws))
}
