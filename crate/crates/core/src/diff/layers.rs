use rand::Rng;

use super::params::{ParamId, ParameterStore};
use super::tape::{Tape, Var};
use super::tensor::Tensor;

/// Affine map `x W + b`.
#[derive(Clone, Debug)]
pub struct Linear {
    pub w: ParamId,
    pub b: ParamId,
    pub fan_in: usize,
    pub fan_out: usize,
}

impl Linear {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        name: &str,
        fan_in: usize,
        fan_out: usize,
        rng: &mut R,
    ) -> Self {
        let w = store.add_glorot(format!("{name}/w"), fan_in, fan_out, rng);
        let b = store.add(format!("{name}/b"), Tensor::zeros(&[1, fan_out]));
        Self { w, b, fan_in, fan_out }
    }

    pub fn apply(&self, tape: &mut Tape<'_>, x: Var) -> Var {
        let w = tape.param(self.w);
        let b = tape.param(self.b);
        let y = tape.matmul(x, w);
        tape.add_row(y, b)
    }
}

/// Stack of linear layers with ReLU between them.
#[derive(Clone, Debug)]
pub struct Mlp {
    pub layers: Vec<Linear>,
    pub activate_final: bool,
}

impl Mlp {
    /// `widths` lists the output width of each layer.
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        name: &str,
        input: usize,
        widths: &[usize],
        activate_final: bool,
        rng: &mut R,
    ) -> Self {
        let mut layers = Vec::with_capacity(widths.len());
        let mut fan_in = input;
        for (i, &w) in widths.iter().enumerate() {
            layers.push(Linear::new(store, &format!("{name}/{i}"), fan_in, w, rng));
            fan_in = w;
        }
        Self { layers, activate_final }
    }

    pub fn output_width(&self) -> usize {
        self.layers.last().map_or(0, |l| l.fan_out)
    }

    pub fn apply(&self, tape: &mut Tape<'_>, x: Var) -> Var {
        mlp_apply(tape, self, x)
    }
}

pub fn mlp_apply(tape: &mut Tape<'_>, mlp: &Mlp, mut x: Var) -> Var {
    let n = mlp.layers.len();
    for (i, layer) in mlp.layers.iter().enumerate() {
        x = layer.apply(tape, x);
        if i + 1 < n || mlp.activate_final {
            x = tape.relu(x);
        }
    }
    x
}

/// Gated recurrent unit. With update gate `z`,
/// `h' = z * h + (1 - z) * tanh(x Wh + (r * h) Uh + bh)`.
#[derive(Clone, Debug)]
pub struct GruCell {
    pub xz: Linear,
    pub xr: Linear,
    pub xh: Linear,
    pub hz: ParamId,
    pub hr: ParamId,
    pub hh: ParamId,
    pub hidden: usize,
}

impl GruCell {
    pub fn new<R: Rng + ?Sized>(
        store: &mut ParameterStore,
        name: &str,
        input: usize,
        hidden: usize,
        rng: &mut R,
    ) -> Self {
        let xz = Linear::new(store, &format!("{name}/xz"), input, hidden, rng);
        let xr = Linear::new(store, &format!("{name}/xr"), input, hidden, rng);
        let xh = Linear::new(store, &format!("{name}/xh"), input, hidden, rng);
        let hz = store.add_glorot(format!("{name}/hz"), hidden, hidden, rng);
        let hr = store.add_glorot(format!("{name}/hr"), hidden, hidden, rng);
        let hh = store.add_glorot(format!("{name}/hh"), hidden, hidden, rng);
        Self { xz, xr, xh, hz, hr, hh, hidden }
    }

    pub fn step(&self, tape: &mut Tape<'_>, x: Var, h: Var) -> Var {
        gru_step(tape, self, x, h)
    }
}

pub fn gru_step(tape: &mut Tape<'_>, cell: &GruCell, x: Var, h: Var) -> Var {
    let gate = |tape: &mut Tape<'_>, lin: &Linear, u: ParamId, hv: Var| {
        let a = lin.apply(tape, x);
        let u = tape.param(u);
        let b = tape.matmul(hv, u);
        tape.add(a, b)
    };
    let z = gate(tape, &cell.xz, cell.hz, h);
    let z = tape.sigmoid(z);
    let r = gate(tape, &cell.xr, cell.hr, h);
    let r = tape.sigmoid(r);
    let rh = tape.mul(r, h);
    let cand = gate(tape, &cell.xh, cell.hh, rh);
    let cand = tape.tanh(cand);
    let keep = tape.mul(z, h);
    let one_minus_z = tape.one_minus(z);
    let fresh = tape.mul(one_minus_z, cand);
    tape.add(keep, fresh)
}
