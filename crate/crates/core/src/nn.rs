//! Dense layers, the GRU cell, the mean-pooled set encoder and their
//! composition into the recurrent updater.
//!
//! Weights live in plain [`Tensor`]s owned by the layer structs. To run a
//! forward pass they are bound onto a [`Tape`], which yields `Bound*`
//! mirrors holding [`Var`] handles; gradients are read back through the same
//! handles in [`RecurrentUpdater::parameters`] order.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RandomSource;
use crate::tape::{Activation, Tape, Var};
use crate::tensor::Tensor;

fn uniform_tensor(shape: &[usize], bound: f64, rng: &mut RandomSource) -> Tensor {
    let n = shape.iter().product();
    let data = (0..n).map(|_| bound * (2.0 * rng.uniform() - 1.0)).collect();
    Tensor::new(shape.to_vec(), data).expect("shape")
}

#[derive(Clone, Debug, PartialEq)]
pub struct DenseLayer {
    /// `out x in`
    pub weight: Tensor,
    pub bias: Tensor,
    pub activation: Activation,
}

#[derive(Clone, Copy, Debug)]
pub struct BoundDense {
    pub weight: Var,
    pub bias: Var,
    pub activation: Activation,
}

impl DenseLayer {
    /// Uniform(-1/sqrt(in), 1/sqrt(in)) initialisation.
    pub fn new(input: usize, output: usize, activation: Activation, rng: &mut RandomSource) -> Self {
        let bound = 1.0 / (input as f64).sqrt();
        Self {
            weight: uniform_tensor(&[output, input], bound, rng),
            bias: uniform_tensor(&[output], bound, rng),
            activation,
        }
    }

    pub fn zeros(input: usize, output: usize, activation: Activation) -> Self {
        Self {
            weight: Tensor::zeros(&[output, input]),
            bias: Tensor::zeros(&[output]),
            activation,
        }
    }

    pub fn from_parts(weight: Tensor, bias: Tensor, activation: Activation) -> Result<Self> {
        if weight.shape().len() != 2 || bias.len() != weight.shape()[0] {
            return Err(Error::shape("dense", weight.shape(), bias.shape()));
        }
        Ok(Self {
            weight,
            bias,
            activation,
        })
    }

    pub fn input_dim(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn output_dim(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundDense {
        BoundDense {
            weight: tape.leaf(self.weight.clone()),
            bias: tape.leaf(self.bias.clone()),
            activation: self.activation,
        }
    }
}

/// `activation(x W^T + b)`.
pub fn dense_forward(tape: &mut Tape, layer: &BoundDense, x: Var) -> Result<Var> {
    let y = tape.affine(x, layer.weight, layer.bias)?;
    Ok(tape.activate(y, layer.activation))
}

fn mlp_forward(tape: &mut Tape, layers: &[BoundDense], mut x: Var) -> Result<Var> {
    for l in layers {
        x = dense_forward(tape, l, x)?;
    }
    Ok(x)
}

/// Gated recurrent unit with separate input (`w_*`, `h x k`) and recurrent
/// (`u_*`, `h x h`) blocks for the update gate `z`, reset gate `r` and the
/// candidate state.
#[derive(Clone, Debug, PartialEq)]
pub struct GruCell {
    pub w_update: Tensor,
    pub u_update: Tensor,
    pub b_update: Tensor,
    pub w_reset: Tensor,
    pub u_reset: Tensor,
    pub b_reset: Tensor,
    pub w_candidate: Tensor,
    pub u_candidate: Tensor,
    pub b_candidate: Tensor,
}

#[derive(Clone, Copy, Debug)]
pub struct BoundGru {
    w: [Var; 3],
    u: [Var; 3],
    b: [Var; 3],
    zero_bias: Var,
}

impl GruCell {
    pub fn new(input: usize, hidden: usize, rng: &mut RandomSource) -> Self {
        let bi = 1.0 / (input as f64).sqrt();
        let bh = 1.0 / (hidden as f64).sqrt();
        let mut block = |rows: usize, cols: usize, bound: f64| uniform_tensor(&[rows, cols], bound, rng);
        let (w_update, u_update) = (block(hidden, input, bi), block(hidden, hidden, bh));
        let (w_reset, u_reset) = (block(hidden, input, bi), block(hidden, hidden, bh));
        let (w_candidate, u_candidate) = (block(hidden, input, bi), block(hidden, hidden, bh));
        Self {
            w_update,
            u_update,
            b_update: uniform_tensor(&[hidden], bh, rng),
            w_reset,
            u_reset,
            b_reset: uniform_tensor(&[hidden], bh, rng),
            w_candidate,
            u_candidate,
            b_candidate: uniform_tensor(&[hidden], bh, rng),
        }
    }

    pub fn zeros(input: usize, hidden: usize) -> Self {
        let w = || Tensor::zeros(&[hidden, input]);
        let u = || Tensor::zeros(&[hidden, hidden]);
        let b = || Tensor::zeros(&[hidden]);
        Self {
            w_update: w(),
            u_update: u(),
            b_update: b(),
            w_reset: w(),
            u_reset: u(),
            b_reset: b(),
            w_candidate: w(),
            u_candidate: u(),
            b_candidate: b(),
        }
    }

    pub fn input_dim(&self) -> usize {
        self.w_update.shape()[1]
    }

    pub fn hidden_dim(&self) -> usize {
        self.w_update.shape()[0]
    }

    pub fn validate(&self) -> Result<()> {
        let (h, k) = (self.hidden_dim(), self.input_dim());
        for w in [&self.w_update, &self.w_reset, &self.w_candidate] {
            if w.shape() != [h, k] {
                return Err(Error::shape("gru", &[h, k], w.shape()));
            }
        }
        for u in [&self.u_update, &self.u_reset, &self.u_candidate] {
            if u.shape() != [h, h] {
                return Err(Error::shape("gru", &[h, h], u.shape()));
            }
        }
        for b in [&self.b_update, &self.b_reset, &self.b_candidate] {
            if b.len() != h {
                return Err(Error::shape("gru", &[h], b.shape()));
            }
        }
        Ok(())
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundGru {
        let mut leaf = |t: &Tensor| tape.leaf(t.clone());
        let w = [leaf(&self.w_update), leaf(&self.w_reset), leaf(&self.w_candidate)];
        let u = [leaf(&self.u_update), leaf(&self.u_reset), leaf(&self.u_candidate)];
        let b = [leaf(&self.b_update), leaf(&self.b_reset), leaf(&self.b_candidate)];
        let zero_bias = tape.constant(Tensor::zeros(&[self.hidden_dim()]));
        BoundGru { w, u, b, zero_bias }
    }

    pub fn parameters(&self) -> [&Tensor; 9] {
        [
            &self.w_update,
            &self.u_update,
            &self.b_update,
            &self.w_reset,
            &self.u_reset,
            &self.b_reset,
            &self.w_candidate,
            &self.u_candidate,
            &self.b_candidate,
        ]
    }

    fn parameters_mut(&mut self) -> [&mut Tensor; 9] {
        [
            &mut self.w_update,
            &mut self.u_update,
            &mut self.b_update,
            &mut self.w_reset,
            &mut self.u_reset,
            &mut self.b_reset,
            &mut self.w_candidate,
            &mut self.u_candidate,
            &mut self.b_candidate,
        ]
    }
}

impl BoundGru {
    fn vars(&self) -> [Var; 9] {
        [
            self.w[0], self.u[0], self.b[0], self.w[1], self.u[1], self.b[1], self.w[2], self.u[2], self.b[2],
        ]
    }
}

/// One GRU step: `h' = (1 - z) * h + z * tanh(W x + U (r * h) + b)`.
pub fn gru_step(tape: &mut Tape, cell: &BoundGru, x: Var, h: Var) -> Result<Var> {
    let hidden = tape.value(cell.b[0]).len();
    if tape.value(h).cols() != hidden {
        return Err(Error::shape("gru_step", tape.shape(h), &[hidden]));
    }
    let gate = |tape: &mut Tape, i: usize, recurrent: Var| -> Result<Var> {
        let a = tape.affine(x, cell.w[i], cell.b[i])?;
        let c = tape.affine(recurrent, cell.u[i], cell.zero_bias)?;
        tape.add(a, c)
    };
    let z_pre = gate(tape, 0, h)?;
    let z = tape.sigmoid(z_pre);
    let r_pre = gate(tape, 1, h)?;
    let r = tape.sigmoid(r_pre);
    let rh = tape.mul(r, h)?;
    let c_pre = gate(tape, 2, rh)?;
    let candidate = tape.tanh(c_pre);
    let diff = tape.sub(candidate, h)?;
    let step = tape.mul(z, diff)?;
    tape.add(h, step)
}

/// Per-element MLP followed by mean pooling.
#[derive(Clone, Debug, PartialEq)]
pub struct SetEncoder {
    pub layers: Vec<DenseLayer>,
}

#[derive(Clone, Debug)]
pub struct BoundSetEncoder {
    layers: Vec<BoundDense>,
}

impl SetEncoder {
    /// Hidden layers use relu; the code layer is linear.
    pub fn new(input: usize, hidden: &[usize], code: usize, rng: &mut RandomSource) -> Self {
        let mut layers = Vec::new();
        let mut width = input;
        for &h in hidden {
            layers.push(DenseLayer::new(width, h, Activation::Relu, rng));
            width = h;
        }
        layers.push(DenseLayer::new(width, code, Activation::Identity, rng));
        Self { layers }
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].input_dim()
    }

    pub fn code_dim(&self) -> usize {
        self.layers.last().unwrap().output_dim()
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundSetEncoder {
        BoundSetEncoder {
            layers: self.layers.iter().map(|l| l.bind(tape)).collect(),
        }
    }

    /// Mean code of a set of observations.
    pub fn encode(&self, observations: &[Vec<f64>]) -> Result<Vec<f64>> {
        if observations.is_empty() {
            return Err(Error::EmptyInput("encode_set"));
        }
        let mut tape = Tape::no_grad();
        let bound = self.bind(&mut tape);
        let x = tape.constant(Tensor::from_rows(observations)?);
        let e = encode_sets(&mut tape, &bound, x, observations.len())?;
        Ok(tape.value(e).data().to_vec())
    }
}

/// Encodes consecutive groups of `group` rows of `x` into one code each:
/// `(k * group, in) -> (k, code)`.
pub fn encode_sets(tape: &mut Tape, enc: &BoundSetEncoder, x: Var, group: usize) -> Result<Var> {
    let rows = tape.value(x).rows();
    if rows == 0 || group == 0 {
        return Err(Error::EmptyInput("encode_set"));
    }
    let expected = tape.value(enc.layers[0].weight).shape()[1];
    if tape.value(x).cols() != expected {
        return Err(Error::shape("encode_set", tape.shape(x), &[expected]));
    }
    let h = mlp_forward(tape, &enc.layers, x)?;
    tape.group_mean_rows(h, group)
}

/// Layer widths of the updater.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetworkConfig {
    pub encoder_hidden: Vec<usize>,
    pub code: usize,
    pub combiner_hidden: Vec<usize>,
    pub pre: usize,
    pub gru_hidden: usize,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            encoder_hidden: vec![16, 16],
            code: 8,
            combiner_hidden: vec![32, 32],
            pre: 32,
            gru_hidden: 32,
        }
    }
}

impl NetworkConfig {
    /// Wider layout for runs with more compute available.
    pub fn large() -> Self {
        Self {
            encoder_hidden: vec![64, 64],
            code: 32,
            combiner_hidden: vec![64, 64],
            pre: 64,
            gru_hidden: 128,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let all = self
            .encoder_hidden
            .iter()
            .chain(&self.combiner_hidden)
            .chain([&self.code, &self.pre, &self.gru_hidden]);
        if all.into_iter().any(|&w| w == 0) || self.combiner_hidden.is_empty() {
            return Err(Error::Configuration("network widths must be positive and the combiner non-empty".into()));
        }
        Ok(())
    }
}

/// Affine map applied to proposal parameters before they enter the network:
/// `(psi - shift) * gain`. Used to put the mean block on a unit scale.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InputScaling {
    pub shift: Vec<f64>,
    pub gain: Vec<f64>,
}

impl InputScaling {
    pub fn identity(dim: usize) -> Self {
        Self {
            shift: vec![0.0; dim],
            gain: vec![1.0; dim],
        }
    }
}

/// The trainable update function: shared data encoder, combining encoder,
/// pre-processing layer, GRU cell and post-processing layer emitting a
/// clipped proposal update.
#[derive(Clone, Debug, PartialEq)]
pub struct RecurrentUpdater {
    pub encoder: SetEncoder,
    pub combiner: Vec<DenseLayer>,
    pub pre: DenseLayer,
    pub gru: GruCell,
    pub post: DenseLayer,
    pub clip: f64,
    pub param_dim: usize,
    pub psi_scaling: InputScaling,
}

/// Updater weights bound onto a tape.
#[derive(Clone, Debug)]
pub struct BoundUpdater {
    pub encoder: BoundSetEncoder,
    combiner: Vec<BoundDense>,
    pre: BoundDense,
    gru: BoundGru,
    post: BoundDense,
    clip: f64,
    param_dim: usize,
    gru_hidden: usize,
    psi_shift: Var,
    psi_gain: Var,
}

impl RecurrentUpdater {
    /// Freshly initialised updater. The post-processing layer starts at zero
    /// so the initial policy leaves the proposal unchanged.
    pub fn new(
        obs_dim: usize,
        param_dim: usize,
        net: &NetworkConfig,
        clip: f64,
        psi_scaling: InputScaling,
        rng: &mut RandomSource,
    ) -> Result<Self> {
        net.validate()?;
        if !(clip > 0.0) {
            return Err(Error::Configuration(format!("clip bound must be positive, got {clip}")));
        }
        if psi_scaling.shift.len() != 2 * param_dim || psi_scaling.gain.len() != 2 * param_dim {
            return Err(Error::Dimension("proposal scaling must cover 2 * param_dim entries".into()));
        }
        let encoder = SetEncoder::new(obs_dim, &net.encoder_hidden, net.code, rng);
        let psi_dim = 2 * param_dim;
        let mut combiner = Vec::new();
        let mut width = 2 * net.code + psi_dim;
        for &h in &net.combiner_hidden {
            combiner.push(DenseLayer::new(width, h, Activation::Relu, rng));
            width = h;
        }
        let pre = DenseLayer::new(psi_dim + width, net.pre, Activation::Tanh, rng);
        let gru = GruCell::new(net.pre, net.gru_hidden, rng);
        let post = DenseLayer::zeros(net.gru_hidden, psi_dim, Activation::Identity);
        Ok(Self {
            encoder,
            combiner,
            pre,
            gru,
            post,
            clip,
            param_dim,
            psi_scaling,
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.encoder.input_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.gru.hidden_dim()
    }

    pub fn network_config(&self) -> NetworkConfig {
        NetworkConfig {
            encoder_hidden: self.encoder.layers[..self.encoder.layers.len() - 1]
                .iter()
                .map(DenseLayer::output_dim)
                .collect(),
            code: self.encoder.code_dim(),
            combiner_hidden: self.combiner.iter().map(DenseLayer::output_dim).collect(),
            pre: self.pre.output_dim(),
            gru_hidden: self.gru.hidden_dim(),
        }
    }

    /// All weight tensors with stable names, in binding order.
    pub fn parameters(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        for (i, l) in self.encoder.layers.iter().enumerate() {
            out.push((format!("encoder.{i}.weight"), &l.weight));
            out.push((format!("encoder.{i}.bias"), &l.bias));
        }
        for (i, l) in self.combiner.iter().enumerate() {
            out.push((format!("combiner.{i}.weight"), &l.weight));
            out.push((format!("combiner.{i}.bias"), &l.bias));
        }
        out.push(("pre.weight".into(), &self.pre.weight));
        out.push(("pre.bias".into(), &self.pre.bias));
        let names = ["w_update", "u_update", "b_update", "w_reset", "u_reset", "b_reset", "w_candidate", "u_candidate", "b_candidate"];
        for (n, t) in names.iter().zip(self.gru.parameters()) {
            out.push((format!("gru.{n}"), t));
        }
        out.push(("post.weight".into(), &self.post.weight));
        out.push(("post.bias".into(), &self.post.bias));
        out
    }

    pub fn parameters_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        for l in &mut self.encoder.layers {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        for l in &mut self.combiner {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out.push(&mut self.pre.weight);
        out.push(&mut self.pre.bias);
        out.extend(self.gru.parameters_mut());
        out.push(&mut self.post.weight);
        out.push(&mut self.post.bias);
        out
    }

    pub fn num_parameters(&self) -> usize {
        self.parameters().iter().map(|(_, t)| t.len()).sum()
    }

    /// All weights flattened in [`Self::parameters`] order.
    pub fn flat_parameters(&self) -> Vec<f64> {
        self.parameters().iter().flat_map(|(_, t)| t.data().iter().copied()).collect()
    }

    pub fn set_flat_parameters(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.num_parameters() {
            return Err(Error::Dimension(format!(
                "expected {} weights, got {}",
                self.num_parameters(),
                flat.len()
            )));
        }
        let mut offset = 0;
        for t in self.parameters_mut() {
            let n = t.len();
            t.data_mut().copy_from_slice(&flat[offset..offset + n]);
            offset += n;
        }
        Ok(())
    }

    pub fn bind(&self, tape: &mut Tape) -> BoundUpdater {
        let encoder = self.encoder.bind(tape);
        let combiner = self.combiner.iter().map(|l| l.bind(tape)).collect();
        let pre = self.pre.bind(tape);
        let gru = self.gru.bind(tape);
        let post = self.post.bind(tape);
        let psi_shift = tape.constant(Tensor::row(&self.psi_scaling.shift));
        let psi_gain = tape.constant(Tensor::row(&self.psi_scaling.gain));
        BoundUpdater {
            encoder,
            combiner,
            pre,
            gru,
            post,
            clip: self.clip,
            param_dim: self.param_dim,
            gru_hidden: self.gru.hidden_dim(),
            psi_shift,
            psi_gain,
        }
    }
}

impl BoundUpdater {
    /// Tape handles in [`RecurrentUpdater::parameters`] order.
    pub fn vars(&self) -> Vec<Var> {
        let mut out = Vec::new();
        for l in &self.encoder.layers {
            out.push(l.weight);
            out.push(l.bias);
        }
        for l in &self.combiner {
            out.push(l.weight);
            out.push(l.bias);
        }
        out.push(self.pre.weight);
        out.push(self.pre.bias);
        out.extend(self.gru.vars());
        out.push(self.post.weight);
        out.push(self.post.bias);
        out
    }

    pub fn initial_state(&self, tape: &mut Tape) -> Var {
        tape.constant(Tensor::zeros(&[1, self.gru_hidden]))
    }

    pub fn clip(&self) -> f64 {
        self.clip
    }
}

/// One update: combine the real-data code with each candidate's generated
/// code and score, mean-pool over candidates, feed the pooled features and
/// the scaled proposal parameters through the GRU, and emit the clipped
/// update `delta psi`.
///
/// `psi: (1, 2p)`, `state: (1, h)`, `real_code: (1, d)`, `gen_codes: (B, d)`,
/// `scores: (B, 2p)`.
pub fn updater_forward(
    tape: &mut Tape,
    f: &BoundUpdater,
    psi: Var,
    state: Var,
    real_code: Var,
    gen_codes: Var,
    scores: Var,
) -> Result<(Var, Var)> {
    let psi_dim = 2 * f.param_dim;
    let b = tape.value(gen_codes).rows();
    if b == 0 {
        return Err(Error::EmptyInput("updater_forward candidates"));
    }
    if tape.shape(scores) != [b, psi_dim] {
        return Err(Error::shape("updater_forward", tape.shape(scores), &[b, psi_dim]));
    }
    if tape.shape(psi) != [1, psi_dim] {
        return Err(Error::shape("updater_forward", tape.shape(psi), &[1, psi_dim]));
    }
    if tape.shape(real_code)[1..] != tape.shape(gen_codes)[1..] {
        return Err(Error::shape("updater_forward", tape.shape(real_code), tape.shape(gen_codes)));
    }
    let real = tape.repeat_rows(real_code, b)?;
    let joint = tape.concat(&[real, gen_codes, scores])?;
    let per_candidate = mlp_forward(tape, &f.combiner, joint)?;
    let pooled = tape.group_mean_rows(per_candidate, b)?;

    let centred = tape.sub(psi, f.psi_shift)?;
    let scaled = tape.mul(centred, f.psi_gain)?;
    let input = tape.concat(&[scaled, pooled])?;
    let x = dense_forward(tape, &f.pre, input)?;
    let next_state = gru_step(tape, &f.gru, x, state)?;
    let raw = dense_forward(tape, &f.post, next_state)?;
    let delta = tape.clamp(raw, -f.clip, f.clip)?;
    Ok((delta, next_state))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gradcheck::grad_check;

    fn rng(seed: u64) -> RandomSource {
        RandomSource::new(seed)
    }

    fn random_tensor(shape: &[usize], r: &mut RandomSource) -> Tensor {
        uniform_tensor(shape, 1.0, r)
    }

    #[test]
    fn dense_identity_and_relu_bias() {
        let mut t = Tape::new();
        let id = DenseLayer::from_parts(Tensor::eye(3), Tensor::zeros(&[3]), Activation::Identity).unwrap();
        let b = id.bind(&mut t);
        let x = t.constant(Tensor::row(&[0.5, -2.0, 3.0]));
        let y = dense_forward(&mut t, &b, x).unwrap();
        assert_eq!(t.value(y).data(), &[0.5, -2.0, 3.0]);

        let relu = DenseLayer::from_parts(Tensor::zeros(&[2, 3]), Tensor::vector(&[1.0, -1.0]), Activation::Relu).unwrap();
        let b = relu.bind(&mut t);
        let y = dense_forward(&mut t, &b, x).unwrap();
        assert_eq!(t.value(y).data(), &[1.0, 0.0]);
    }

    #[test]
    fn dense_rejects_wrong_input() {
        let mut t = Tape::new();
        let l = DenseLayer::new(3, 2, Activation::Tanh, &mut rng(0)).bind(&mut t);
        let x = t.constant(Tensor::row(&[1.0, 2.0]));
        assert!(matches!(dense_forward(&mut t, &l, x), Err(Error::InvalidShape { .. })));
    }

    #[test]
    fn dense_weight_gradient() {
        let mut r = rng(1);
        let layer = DenseLayer::new(4, 3, Activation::Tanh, &mut r);
        let x = random_tensor(&[5, 4], &mut r);
        let res = grad_check(
            |t, w| {
                let b = t.constant(layer.bias.clone());
                let bound = BoundDense { weight: w, bias: b, activation: Activation::Tanh };
                let xv = t.constant(x.clone());
                let y = dense_forward(t, &bound, xv)?;
                Ok(t.mean(y))
            },
            &layer.weight,
            1e-5,
        )
        .unwrap();
        assert!(res.max_rel_error < 1e-5, "{}", res.max_rel_error);
    }

    #[test]
    fn gru_zero_weights_halves_state() {
        let mut t = Tape::new();
        let cell = GruCell::zeros(3, 4).bind(&mut t);
        let x = t.constant(Tensor::row(&[1.0, 2.0, 3.0]));
        let h = t.constant(Tensor::row(&[0.2, -0.4, 1.0, 3.0]));
        let h2 = gru_step(&mut t, &cell, x, h).unwrap();
        assert_eq!(t.value(h2).data(), &[0.1, -0.2, 0.5, 1.5]);
    }

    #[test]
    fn gru_saturates_to_candidate() {
        let mut cell = GruCell::zeros(2, 3);
        cell.b_update = Tensor::full(&[3], 50.0);
        cell.b_candidate = Tensor::full(&[3], 50.0);
        let mut t = Tape::new();
        let c = cell.bind(&mut t);
        let x = t.constant(Tensor::row(&[0.3, -0.3]));
        let h = t.constant(Tensor::zeros(&[1, 3]));
        let h2 = gru_step(&mut t, &c, x, h).unwrap();
        for &v in t.value(h2).data() {
            assert!((v - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn gru_shape_mismatch() {
        let mut t = Tape::new();
        let c = GruCell::zeros(2, 3).bind(&mut t);
        let x = t.constant(Tensor::row(&[0.3, -0.3]));
        let h = t.constant(Tensor::zeros(&[1, 4]));
        assert!(gru_step(&mut t, &c, x, h).is_err());
        assert!(GruCell::new(2, 3, &mut rng(0)).validate().is_ok());
    }

    #[test]
    fn gru_three_step_gradient() {
        let mut r = rng(2);
        let cell = GruCell::new(3, 4, &mut r);
        let xs: Vec<Tensor> = (0..3).map(|_| random_tensor(&[1, 3], &mut r)).collect();
        let h0 = random_tensor(&[1, 4], &mut r);
        // Check every block: flatten the cell into one input vector.
        let flat: Vec<f64> = cell.parameters().iter().flat_map(|t| t.data().to_vec()).collect();
        let shapes: Vec<Vec<usize>> = cell.parameters().iter().map(|t| t.shape().to_vec()).collect();
        let res = grad_check(
            |t, p| {
                let mut blocks = Vec::new();
                let mut off = 0;
                for s in &shapes {
                    let n: usize = s.iter().product();
                    let sl = t.slice(p, off, off + n)?;
                    blocks.push((sl, s.clone()));
                    off += n;
                }
                gru_chain_from_flat(t, &blocks, &xs, &h0)
            },
            &Tensor::row(&flat),
            1e-5,
        )
        .unwrap();
        assert!(res.max_rel_error < 1e-5, "{}", res.max_rel_error);
    }

    /// Three chained GRU steps whose weights are column slices of one row
    /// vector. Matrices are applied as `sum_k w[o, k] * x[k]` built from
    /// elementwise ops so the flat input stays on the gradient path.
    fn gru_chain_from_flat(t: &mut Tape, blocks: &[(Var, Vec<usize>)], xs: &[Tensor], h0: &Tensor) -> Result<Var> {
        let matvec = |t: &mut Tape, w: Var, rows: usize, cols: usize, v: Var| -> Result<Var> {
            let mut outs = Vec::with_capacity(rows);
            for o in 0..rows {
                let wr = t.slice(w, o * cols, (o + 1) * cols)?;
                let p = t.mul(wr, v)?;
                let s = t.sum(p);
                // scalar -> (1, 1) through a broadcast add
                let z = t.constant(Tensor::zeros(&[1, 1]));
                outs.push(t.add(z, s)?);
            }
            t.concat(&outs)
        };
        let get = |i: usize| (blocks[i].0, &blocks[i].1);
        let mut h = t.constant(h0.clone());
        for x in xs {
            let xv = t.constant(x.clone());
            let gate = |t: &mut Tape, wi: usize, ui: usize, bi: usize, rec: Var| -> Result<Var> {
                let (w, ws) = get(wi);
                let (u, us) = get(ui);
                let (b, _) = get(bi);
                let a = matvec(t, w, ws[0], ws[1], xv)?;
                let c = matvec(t, u, us[0], us[1], rec)?;
                let s = t.add(a, c)?;
                t.add(s, b)
            };
            let z = gate(t, 0, 1, 2, h)?;
            let z = t.sigmoid(z);
            let rr = gate(t, 3, 4, 5, h)?;
            let rr = t.sigmoid(rr);
            let rh = t.mul(rr, h)?;
            let c = gate(t, 6, 7, 8, rh)?;
            let c = t.tanh(c);
            let d = t.sub(c, h)?;
            let s = t.mul(z, d)?;
            h = t.add(h, s)?;
        }
        let y = t.tanh(h);
        Ok(t.sum(y))
    }

    #[test]
    fn gru_tape_matches_reference_chain() {
        // gru_step on bound weights agrees with the slice-based reference
        let mut r = rng(3);
        let cell = GruCell::new(3, 4, &mut r);
        let xs: Vec<Tensor> = (0..3).map(|_| random_tensor(&[1, 3], &mut r)).collect();
        let h0 = random_tensor(&[1, 4], &mut r);
        let mut t = Tape::new();
        let c = cell.bind(&mut t);
        let mut h = t.constant(h0.clone());
        for x in &xs {
            let xv = t.constant(x.clone());
            h = gru_step(&mut t, &c, xv, h).unwrap();
        }
        let y = t.tanh(h);
        let direct = t.sum(y);
        t.backward(direct).unwrap();

        let flat: Vec<f64> = cell.parameters().iter().flat_map(|t| t.data().to_vec()).collect();
        let shapes: Vec<Vec<usize>> = cell.parameters().iter().map(|t| t.shape().to_vec()).collect();
        let mut t2 = Tape::new();
        let p = t2.leaf(Tensor::row(&flat));
        let mut blocks = Vec::new();
        let mut off = 0;
        for s in &shapes {
            let n: usize = s.iter().product();
            blocks.push((t2.slice(p, off, off + n).unwrap(), s.clone()));
            off += n;
        }
        let reference = gru_chain_from_flat(&mut t2, &blocks, &xs, &h0).unwrap();
        assert!((t.value(direct).item() - t2.value(reference).item()).abs() < 1e-12);
        t2.backward(reference).unwrap();
        let g_ref = t2.grad(p).unwrap().data().to_vec();
        let g_direct: Vec<f64> = c.vars().iter().flat_map(|v| t.grad(*v).unwrap().data().to_vec()).collect();
        for (a, b) in g_ref.iter().zip(&g_direct) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn encode_identical_elements() {
        let mut r = rng(4);
        let enc = SetEncoder::new(2, &[8, 8], 4, &mut r);
        let v = vec![0.3, -1.1];
        let one = enc.encode(std::slice::from_ref(&v)).unwrap();
        let three = enc.encode(&[v.clone(), v.clone(), v]).unwrap();
        for (a, b) in one.iter().zip(&three) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn encode_empty_set_rejected() {
        let enc = SetEncoder::new(2, &[4], 3, &mut rng(5));
        assert!(matches!(enc.encode(&[]), Err(Error::EmptyInput(_))));
        assert!(enc.encode(&[vec![1.0, 2.0, 3.0]]).is_err());
    }

    fn updater(clip: f64, seed: u64) -> RecurrentUpdater {
        RecurrentUpdater::new(2, 1, &NetworkConfig::default(), clip, InputScaling::identity(2), &mut rng(seed)).unwrap()
    }

    fn run_forward(f: &RecurrentUpdater, gen: &Tensor, scores: &Tensor) -> (Vec<f64>, Vec<f64>) {
        let mut t = Tape::no_grad();
        let b = f.bind(&mut t);
        let psi = t.constant(Tensor::row(&[1.0, 0.5]));
        let s = b.initial_state(&mut t);
        let real = t.constant(Tensor::row(&vec![0.1; f.encoder.code_dim()]));
        let g = t.constant(gen.clone());
        let sc = t.constant(scores.clone());
        let (d, h) = updater_forward(&mut t, &b, psi, s, real, g, sc).unwrap();
        (t.value(d).data().to_vec(), t.value(h).data().to_vec())
    }

    #[test]
    fn zero_post_layer_gives_no_update() {
        let f = updater(0.5, 6);
        let mut r = rng(7);
        let gen = random_tensor(&[3, f.encoder.code_dim()], &mut r);
        let sc = random_tensor(&[3, 2], &mut r);
        let (d, _) = run_forward(&f, &gen, &sc);
        assert!(d.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn duplicated_candidates_same_output() {
        let mut f = updater(0.5, 8);
        let mut r = rng(9);
        f.post = DenseLayer::new(f.hidden_dim(), 2, Activation::Identity, &mut r);
        let d = f.encoder.code_dim();
        let gen = random_tensor(&[2, d], &mut r);
        let sc = random_tensor(&[2, 2], &mut r);
        let mut gen2 = gen.data().to_vec();
        gen2.extend_from_slice(gen.data());
        let mut sc2 = sc.data().to_vec();
        sc2.extend_from_slice(sc.data());
        let a = run_forward(&f, &gen, &sc);
        let b = run_forward(
            &f,
            &Tensor::new(vec![4, d], gen2).unwrap(),
            &Tensor::new(vec![4, 2], sc2).unwrap(),
        );
        for (x, y) in a.0.iter().zip(&b.0) {
            assert!((x - y).abs() < 1e-14);
        }
    }

    #[test]
    fn updater_feature_mismatch() {
        let f = updater(0.5, 10);
        let mut t = Tape::no_grad();
        let b = f.bind(&mut t);
        let psi = t.constant(Tensor::row(&[1.0, 0.5]));
        let s = b.initial_state(&mut t);
        let real = t.constant(Tensor::row(&vec![0.1; f.encoder.code_dim()]));
        let g = t.constant(Tensor::zeros(&[3, f.encoder.code_dim()]));
        let sc = t.constant(Tensor::zeros(&[3, 3]));
        assert!(updater_forward(&mut t, &b, psi, s, real, g, sc).is_err());
    }

    #[test]
    fn flat_parameters_round_trip() {
        let mut f = updater(0.25, 11);
        let flat = f.flat_parameters();
        assert_eq!(flat.len(), f.num_parameters());
        let shifted: Vec<f64> = flat.iter().map(|x| x + 1.0).collect();
        f.set_flat_parameters(&shifted).unwrap();
        assert_eq!(f.flat_parameters(), shifted);
        assert!(f.set_flat_parameters(&flat[1..]).is_err());
        assert_eq!(f.parameters().len(), f.bind(&mut Tape::new()).vars().len());
        assert_eq!(f.network_config(), NetworkConfig::default());
    }
}
