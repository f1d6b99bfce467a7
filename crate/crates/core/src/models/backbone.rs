use super::{ArchConfig, Backbone, BatchLayout, BoundParams};
use crate::autodiff::{Tape, Var};
use crate::error::{ensure, Result};

/// Encodes a time-major batch `x` (`steps·B × N`) into embeddings `B × d`.
///
/// Recurrent backbones return the hidden state at each record's last valid
/// step; attention mean-pools its last block over the valid positions.
pub fn backbone_forward(
    arch: &ArchConfig,
    params: &BoundParams,
    tape: &mut Tape,
    x: Var,
    layout: &BatchLayout,
) -> Result<Var> {
    let b = layout.size();
    ensure!(b > 0, InvalidArgument, "empty batch");
    ensure!(
        layout.lengths.iter().all(|&l| l >= 1),
        InvalidArgument,
        "record length must be positive"
    );
    ensure!(
        layout.lengths.iter().all(|&l| l <= layout.steps),
        InvalidArgument,
        "record length exceeds the {} rows provided",
        layout.steps
    );
    let shape = tape.shape(x);
    ensure!(
        shape.len() == 2 && shape[0] == layout.steps * b && shape[1] == arch.input_dim,
        Shape,
        "input of shape {shape:?}, expected [{}, {}]",
        layout.steps * b,
        arch.input_dim
    );
    match arch.backbone {
        Backbone::Rnn | Backbone::Gru => recurrent(arch, params, tape, x, layout),
        Backbone::Attention => attention(arch, params, tape, x, layout),
    }
}

fn recurrent(
    arch: &ArchConfig,
    params: &BoundParams,
    tape: &mut Tape,
    x: Var,
    layout: &BatchLayout,
) -> Result<Var> {
    let b = layout.size();
    let d = arch.hidden_dim;
    let horizon = *layout.lengths.iter().max().expect("non-empty batch");
    // Layer inputs per step; the first layer slices the projected input matrix.
    let mut inputs: Vec<Var> = Vec::new();
    let mut outputs: Vec<Var> = Vec::new();
    for layer in 0..arch.layers {
        let h0 = tape.constant(&[b, d], vec![0.0; b * d])?;
        let mut h = h0;
        outputs.clear();
        match arch.backbone {
            Backbone::Rnn => {
                let w = params.get(&format!("rnn.{layer}.w_ih"))?;
                let u = params.get(&format!("rnn.{layer}.w_hh"))?;
                let bias = params.get(&format!("rnn.{layer}.b"))?;
                let proj_all = if layer == 0 { Some(project(tape, x, w, bias)?) } else { None };
                for t in 0..horizon {
                    let xin = match proj_all {
                        Some(p) => tape.slice_rows(p, t * b, (t + 1) * b)?,
                        None => project(tape, inputs[t], w, bias)?,
                    };
                    let rec = tape.matmul_nt(h, u)?;
                    let pre = tape.add(xin, rec)?;
                    h = tape.tanh(pre);
                    outputs.push(h);
                }
            }
            Backbone::Gru => {
                let get = |p: &str| params.get(&format!("gru.{layer}.{p}"));
                let (wr, ur, br) = (get("w_r")?, get("u_r")?, get("b_r")?);
                let (wz, uz, bz) = (get("w_z")?, get("u_z")?, get("b_z")?);
                let (wn, un, bn) = (get("w_n")?, get("u_n")?, get("b_n")?);
                let all = if layer == 0 {
                    Some((
                        project(tape, x, wr, br)?,
                        project(tape, x, wz, bz)?,
                        project(tape, x, wn, bn)?,
                    ))
                } else {
                    None
                };
                for t in 0..horizon {
                    let (xr, xz, xn) = match all {
                        Some((pr, pz, pn)) => (
                            tape.slice_rows(pr, t * b, (t + 1) * b)?,
                            tape.slice_rows(pz, t * b, (t + 1) * b)?,
                            tape.slice_rows(pn, t * b, (t + 1) * b)?,
                        ),
                        None => (
                            project(tape, inputs[t], wr, br)?,
                            project(tape, inputs[t], wz, bz)?,
                            project(tape, inputs[t], wn, bn)?,
                        ),
                    };
                    let hr = tape.matmul_nt(h, ur)?;
                    let r_pre = tape.add(xr, hr)?;
                    let r = tape.sigmoid(r_pre);
                    let hz = tape.matmul_nt(h, uz)?;
                    let z_pre = tape.add(xz, hz)?;
                    let z = tape.sigmoid(z_pre);
                    let hn = tape.matmul_nt(h, un)?;
                    let gated = tape.mul(r, hn)?;
                    let n_pre = tape.add(xn, gated)?;
                    let n = tape.tanh(n_pre);
                    // h' = (1 − z) ⊙ n + z ⊙ h
                    let keep_new = tape.affine(z, -1.0, 1.0);
                    let fresh = tape.mul(keep_new, n)?;
                    let carried = tape.mul(z, h)?;
                    h = tape.add(fresh, carried)?;
                    outputs.push(h);
                }
            }
            Backbone::Attention => unreachable!("attention is not recurrent"),
        }
        inputs = std::mem::take(&mut outputs);
    }
    let picks: Vec<(Var, usize)> = layout
        .lengths
        .iter()
        .enumerate()
        .map(|(row, &len)| (inputs[len - 1], row))
        .collect();
    tape.stack_rows(&picks)
}

/// `x · wᵀ + b`
fn project(tape: &mut Tape, x: Var, w: Var, b: Var) -> Result<Var> {
    let xw = tape.matmul_nt(x, w)?;
    tape.add(xw, b)
}

/// Sinusoidal position table, `len × d`.
pub fn positional_encoding(len: usize, d: usize) -> Vec<f64> {
    let mut pe = vec![0.0; len * d];
    for t in 0..len {
        for i in 0..d {
            let pair = (i / 2) as f64;
            let angle = t as f64 / 10000f64.powf(2.0 * pair / d as f64);
            pe[t * d + i] = if i % 2 == 0 { angle.sin() } else { angle.cos() };
        }
    }
    pe
}

fn attention(
    arch: &ArchConfig,
    params: &BoundParams,
    tape: &mut Tape,
    x: Var,
    layout: &BatchLayout,
) -> Result<Var> {
    let b = layout.size();
    let d = arch.hidden_dim;
    let w_in = params.get("attn.in.w")?;
    let b_in = params.get("attn.in.b")?;
    let inv_sqrt_d = 1.0 / (d as f64).sqrt();
    let mut pooled = Vec::with_capacity(b);
    for (rec, &len) in layout.lengths.iter().enumerate() {
        let rows: Vec<(Var, usize)> = (0..len).map(|t| (x, t * b + rec)).collect();
        let xr = tape.stack_rows(&rows)?;
        let proj = project(tape, xr, w_in, b_in)?;
        let pe = tape.constant(&[len, d], positional_encoding(len, d))?;
        let mut h = tape.add(proj, pe)?;
        for layer in 0..arch.layers {
            let get = |p: &str| params.get(&format!("attn.{layer}.{p}"));
            let q = project(tape, h, get("wq")?, get("bq")?)?;
            let k = tape.matmul_nt(h, get("wk")?)?;
            let v = project(tape, h, get("wv")?, get("bv")?)?;
            let scores = tape.matmul_nt(q, k)?;
            let scores = tape.scale(scores, inv_sqrt_d);
            let weights = tape.softmax_rows(scores)?;
            let ctx = tape.matmul(weights, v)?;
            let out = project(tape, ctx, get("wo")?, get("bo")?)?;
            let h1 = tape.add(h, out)?;
            let f = project(tape, h1, get("ff1.w")?, get("ff1.b")?)?;
            let f = tape.relu(f);
            let f = project(tape, f, get("ff2.w")?, get("ff2.b")?)?;
            h = tape.add(h1, f)?;
        }
        let avg = tape.constant(&[1, len], vec![1.0 / len as f64; len])?;
        pooled.push(tape.matmul(avg, h)?);
    }
    let picks: Vec<(Var, usize)> = pooled.into_iter().map(|p| (p, 0)).collect();
    tape.stack_rows(&picks)
}
