//! Graph construction for the forward pass.

use crate::imagio::GrayImage;
use crate::rarity::{encode_rarity, ETA_COUNT};
use crate::tensor::{softmax_cross_entropy, ElementwiseOp, Graph, Objective, Probe, Tensor, Var};

use super::{Model, ModelError, Result};

/// Network inputs derived from one image: the image and its four code maps,
/// each `M × M × 1` and scaled into `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedInput {
    pub image: Tensor,
    pub rarity: [Tensor; ETA_COUNT],
}

/// Intermediate results of one forward pass.
#[derive(Debug, Clone)]
pub struct Activations {
    pub hbef: Tensor,
    pub a1: Tensor,
    pub a2: Tensor,
    /// Stride-4 skip from `a1`, added into the MSSEC output.
    pub skip: Tensor,
    pub mssec: Tensor,
    pub rq: [Tensor; 3],
    pub features: Tensor,
    pub logits: Tensor,
}

/// Parameter handles on a graph, resolved by name.
struct Bound<'m> {
    model: &'m Model,
    vars: Vec<Var>,
}

impl Bound<'_> {
    fn var(&self, name: &str) -> Var {
        self.vars[self.model.index_of(name)]
    }

    fn conv(&self, g: &mut Graph, x: Var, layer: &str) -> Result<Var> {
        let spec = self
            .model
            .topology
            .conv(layer)
            .ok_or_else(|| ModelError::UnknownParam(layer.to_string()))?;
        let w = self.var(&format!("{layer}.weight"));
        let b = self.var(&format!("{layer}.bias"));
        Ok(g.conv2d(x, w, b, spec)?)
    }

    fn conv_relu(&self, g: &mut Graph, x: Var, layer: &str) -> Result<Var> {
        let y = self.conv(g, x, layer)?;
        Ok(g.relu(y))
    }

    fn dense(&self, g: &mut Graph, x: Var, layer: &str) -> Result<Var> {
        let w = self.var(&format!("{layer}.weight"));
        let b = self.var(&format!("{layer}.bias"));
        Ok(g.fully_connected(x, w, b)?)
    }
}

pub(crate) struct Evaluation {
    pub loss: f64,
    pub grads: Option<Vec<Vec<f64>>>,
    pub fingerprint: u64,
    pub predicted: usize,
}

struct Handles {
    hbef: Var,
    a1: Var,
    a2: Var,
    skip: Var,
    mssec: Var,
    rq: [Var; 3],
    features: Var,
    logits: Var,
}

impl Model {
    fn bind<'m>(&'m self, g: &mut Graph, params: &[Tensor], requires_grad: bool) -> Bound<'m> {
        let vars = params.iter().map(|p| g.leaf(p.clone(), requires_grad)).collect();
        Bound { model: self, vars }
    }

    /// Encodes the descriptor maps and scales image and maps by 1/255.
    pub fn prepare(&self, image: &GrayImage) -> Result<PreparedInput> {
        let m = self.config.input_size;
        if image.width() != m || image.height() != m {
            return Err(ModelError::ImageSize {
                expected: m,
                width: image.width(),
                height: image.height(),
            });
        }
        let resp = encode_rarity(image, &self.config.ring)?;
        let scale = |data: Vec<f64>| Tensor::new(&[m, m, 1], data).expect("image-sized map");
        let rarity = std::array::from_fn(|eta| scale(resp.map(eta).iter().map(|&c| c as f64 / 255.0).collect()));
        Ok(PreparedInput {
            image: scale(image.data().iter().map(|v| v / 255.0).collect()),
            rarity,
        })
    }

    fn check_input(&self, input: &PreparedInput) -> Result<()> {
        let m = self.config.input_size;
        let want = [m, m, 1];
        if input.image.shape() != want || input.rarity.iter().any(|r| r.shape() != want) {
            return Err(ModelError::ImageSize {
                expected: m,
                width: input.image.shape().get(1).copied().unwrap_or(0),
                height: input.image.shape().first().copied().unwrap_or(0),
            });
        }
        Ok(())
    }

    fn hbef_graph(&self, g: &mut Graph, net: &Bound, image: Var, rarity: &[Var; ETA_COUNT]) -> Result<Var> {
        let l1 = net.conv_relu(g, image, "hbef.l1")?;
        let l2 = net.conv_relu(g, image, "hbef.l2")?;
        let mut lateral = Vec::with_capacity(ETA_COUNT);
        for (l, &r) in rarity.iter().enumerate() {
            lateral.push(net.conv_relu(g, r, &format!("hbef.rarity{l}"))?);
        }
        let mut s = Vec::with_capacity(8);
        for b in 0..8 {
            let base = if b < 4 { l1 } else { l2 };
            s.push(g.sub(base, lateral[b % 4])?);
        }
        let s = g.concat(&s)?;
        let refined3 = net.conv_relu(g, l1, "hbef.refine3")?;
        let refined7 = net.conv_relu(g, l2, "hbef.refine7")?;
        let left = g.sub(s, refined3)?;
        let right = g.sub(s, refined7)?;
        Ok(g.concat(&[left, right])?)
    }

    /// Returns `(a1, a2, skip, out)`.
    fn mssec_graph(&self, g: &mut Graph, net: &Bound, h: Var) -> Result<(Var, Var, Var, Var)> {
        let mut branches = Vec::with_capacity(3);
        for z in [3, 5, 7] {
            branches.push(net.conv(g, h, &format!("mssec.a1.k{z}"))?);
        }
        let summed = g.add(&branches)?;
        let a1_main = g.relu(summed);
        let pooled = g.avg_pool_2x2(h)?;
        let proj = net.conv(g, pooled, "mssec.a1.proj")?;
        let a1 = g.add(&[a1_main, proj])?;

        let mut branches = Vec::with_capacity(4);
        for z in [3, 5, 7, 1] {
            branches.push(net.conv(g, a1, &format!("mssec.a2.k{z}"))?);
        }
        let summed = g.add(&branches)?;
        let a2 = g.relu(summed);

        let mut branches = Vec::with_capacity(5);
        for z in [3, 5, 7, 1] {
            branches.push(net.conv(g, a2, &format!("mssec.out.k{z}"))?);
        }
        let skip = net.conv(g, a1, "mssec.skip")?;
        let (a2_side, skip_side) = (&g.value(branches[0]).shape()[..2], &g.value(skip).shape()[..2]);
        if a2_side != skip_side {
            return Err(crate::tensor::TensorError::ShapeMismatch(format!(
                "dense path {a2_side:?} and stride-4 skip {skip_side:?} disagree"
            ))
            .into());
        }
        branches.push(skip);
        let summed = g.add(&branches)?;
        let out = g.relu(summed);
        Ok((a1, a2, skip, out))
    }

    fn ruccf_graph(&self, g: &mut Graph, net: &Bound, rarity: &[Var; ETA_COUNT]) -> Result<[Var; 3]> {
        let mut q = Vec::with_capacity(ETA_COUNT);
        for (t, &r) in rarity.iter().enumerate() {
            q.push(net.conv_relu(g, r, &format!("ruccf.q{t}"))?);
        }
        let mut rq = Vec::with_capacity(3);
        for op in [ElementwiseOp::Mean, ElementwiseOp::Max, ElementwiseOp::Add] {
            let merged = g.elementwise(op, &q)?;
            rq.push(g.global_avg_pool(merged)?);
        }
        Ok([rq[0], rq[1], rq[2]])
    }

    fn build_graph(&self, g: &mut Graph, params: &[Tensor], input: &PreparedInput, requires_grad: bool) -> Result<Handles> {
        self.check_input(input)?;
        let net = self.bind(g, params, requires_grad);
        let image = g.leaf(input.image.clone(), false);
        let rarity = input.rarity.clone().map(|r| g.leaf(r, false));
        let hbef = self.hbef_graph(g, &net, image, &rarity)?;
        let (a1, a2, skip, mssec) = self.mssec_graph(g, &net, hbef)?;
        let rq = self.ruccf_graph(g, &net, &rarity)?;
        let flat = g.flatten(mssec);
        let features = g.concat(&[flat, rq[0], rq[1], rq[2]])?;
        let h1 = net.dense(g, features, "head.fc1")?;
        let h1 = g.relu(h1);
        let h2 = net.dense(g, h1, "head.fc2")?;
        let h2 = g.relu(h2);
        let logits = net.dense(g, h2, "head.fc3")?;
        Ok(Handles {
            hbef,
            a1,
            a2,
            skip,
            mssec,
            rq,
            features,
            logits,
        })
    }

    /// Class scores for an `M × M` image.
    pub fn forward(&self, image: &GrayImage) -> Result<Tensor> {
        self.forward_prepared(&self.prepare(image)?)
    }

    pub fn forward_prepared(&self, input: &PreparedInput) -> Result<Tensor> {
        let mut g = Graph::new();
        let h = self.build_graph(&mut g, &self.params, input, false)?;
        Ok(g.value(h.logits).clone())
    }

    /// Index of the highest logit (lowest index on ties).
    pub fn predict(&self, input: &PreparedInput) -> Result<usize> {
        Ok(self.forward_prepared(input)?.argmax())
    }

    /// Runs the forward pass and keeps every stream's output.
    pub fn activations(&self, input: &PreparedInput) -> Result<Activations> {
        let mut g = Graph::new();
        let h = self.build_graph(&mut g, &self.params, input, false)?;
        let v = |x: Var| g.value(x).clone();
        Ok(Activations {
            hbef: v(h.hbef),
            a1: v(h.a1),
            a2: v(h.a2),
            skip: v(h.skip),
            mssec: v(h.mssec),
            rq: h.rq.map(v),
            features: v(h.features),
            logits: v(h.logits),
        })
    }

    /// HBEF stream on already scaled inputs.
    pub fn hbef_forward(&self, image: &Tensor, rarity: &[Tensor; ETA_COUNT]) -> Result<Tensor> {
        let mut g = Graph::new();
        let net = self.bind(&mut g, &self.params, false);
        let image = g.leaf(image.clone(), false);
        let rarity = rarity.clone().map(|r| g.leaf(r, false));
        let out = self.hbef_graph(&mut g, &net, image, &rarity)?;
        Ok(g.value(out).clone())
    }

    /// MSSEC stream on an HBEF output.
    pub fn mssec_forward(&self, h: &Tensor) -> Result<Tensor> {
        let mut g = Graph::new();
        let net = self.bind(&mut g, &self.params, false);
        let h = g.leaf(h.clone(), false);
        let (_, _, _, out) = self.mssec_graph(&mut g, &net, h)?;
        Ok(g.value(out).clone())
    }

    /// RUCCF stream: the mean, max and sum summaries, each of length 16.
    pub fn ruccf_forward(&self, rarity: &[Tensor; ETA_COUNT]) -> Result<[Tensor; 3]> {
        let mut g = Graph::new();
        let net = self.bind(&mut g, &self.params, false);
        let rarity = rarity.clone().map(|r| g.leaf(r, false));
        let rq = self.ruccf_graph(&mut g, &net, &rarity)?;
        Ok(rq.map(|v| g.value(v).clone()))
    }

    /// Cross-entropy loss at `params` and, when `backward` is set, its
    /// gradient with respect to every parameter tensor.
    pub(crate) fn evaluate(&self, params: &[Tensor], input: &PreparedInput, label: usize, backward: bool) -> Result<Evaluation> {
        let classes = self.config.num_classes;
        if label >= classes {
            return Err(ModelError::LabelOutOfRange { label, classes });
        }
        let mut g = Graph::new();
        let h = self.build_graph(&mut g, params, input, backward)?;
        let (loss, seed) = softmax_cross_entropy(g.value(h.logits), label)?;
        let fingerprint = g.fingerprint();
        let predicted = g.value(h.logits).argmax();
        if !backward {
            return Ok(Evaluation {
                loss,
                grads: None,
                fingerprint,
                predicted,
            });
        }
        g.backward(h.logits, seed)?;
        // Parameters are the first leaves pushed, in canonical order.
        let grads = (0..params.len())
            .map(|i| g.take_grad(crate::tensor::Var::from_index(i)))
            .collect();
        Ok(Evaluation {
            loss,
            grads: Some(grads),
            fingerprint,
            predicted,
        })
    }

    /// Loss and parameter gradients for one labelled input.
    pub fn loss_and_gradient(&self, input: &PreparedInput, label: usize) -> Result<(f64, Vec<Vec<f64>>)> {
        let e = self.evaluate(&self.params, input, label, true)?;
        Ok((e.loss, e.grads.expect("backward requested")))
    }

    pub fn loss(&self, input: &PreparedInput, label: usize) -> Result<f64> {
        Ok(self.evaluate(&self.params, input, label, false)?.loss)
    }
}

/// Cross-entropy of one labelled input as a function of all parameters,
/// for [`crate::tensor::grad_check`].
pub struct NetObjective<'m> {
    pub model: &'m Model,
    pub input: PreparedInput,
    pub label: usize,
}

impl Objective for NetObjective<'_> {
    fn probe(&self, params: &[Tensor]) -> Probe {
        let e = self
            .model
            .evaluate(params, &self.input, self.label, false)
            .expect("objective inputs validated at construction");
        Probe {
            loss: e.loss,
            fingerprint: e.fingerprint,
        }
    }

    fn gradient(&self, params: &[Tensor]) -> Vec<Vec<f64>> {
        self.model
            .evaluate(params, &self.input, self.label, true)
            .expect("objective inputs validated at construction")
            .grads
            .expect("backward requested")
    }
}
