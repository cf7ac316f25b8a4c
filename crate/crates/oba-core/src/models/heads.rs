use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{export_bn, import_bn, set_param, ConvUnit, StateMap};
use crate::error::{ObaError, Result};
use crate::nn::{
    sigmoid, BatchNorm2d, Conv2d, Dropout, FullyConnected, GlobalAvgPool, Mode, Param,
};
use crate::tensor::Tensor;

const PROB_EPS: f64 = 1e-7;
const HEAD_DROPOUT: f64 = 0.2;

/// Table-1 trunk with a 1×1-projected skip connection added back in before
/// pooling (the "Down Sampler" row).
struct ResidualTrunk {
    units: Vec<ConvUnit>,
    skip_conv: Conv2d,
    skip_bn: BatchNorm2d,
}

impl ResidualTrunk {
    fn new(c_in: usize, specs: &[(usize, usize)], rng: &mut impl Rng) -> Self {
        let mut units = Vec::with_capacity(specs.len());
        let mut c = c_in;
        for &(c_out, kernel) in specs {
            units.push(ConvUnit::new(c, c_out, kernel, 1, kernel / 2, rng));
            c = c_out;
        }
        Self {
            units,
            skip_conv: Conv2d::new(c_in, c, 1, 1, 0, rng),
            skip_bn: BatchNorm2d::new(c),
        }
    }

    fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let mut t = x.clone();
        for u in &mut self.units {
            t = u.forward(&t, mode)?;
        }
        let skip = self
            .skip_bn
            .forward(&self.skip_conv.forward(x, mode)?, mode)?;
        t.add_assign(&skip)?;
        Ok(t)
    }

    fn backward_params_only(&mut self, grad: &Tensor) -> Result<()> {
        let mut g = grad.clone();
        let (first, rest) = self.units.split_at_mut(1);
        for u in rest.iter_mut().rev() {
            g = u.backward(&g)?;
        }
        first[0].backward_params_only(&g)?;
        self.skip_conv
            .backward_params_only(&self.skip_bn.backward(grad)?)
    }

    fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        let mut g = grad.clone();
        for u in self.units.iter_mut().rev() {
            g = u.backward(&g)?;
        }
        let mut dx = g;
        let ds = self.skip_conv.backward(&self.skip_bn.backward(grad)?)?;
        dx.add_assign(&ds)?;
        Ok(dx)
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(String, &mut Param)) {
        for (i, u) in self.units.iter_mut().enumerate() {
            u.visit_params(&format!("t{}", i + 1), f);
        }
        self.skip_conv.visit_params("skip.conv", f);
        self.skip_bn.visit_params("skip.bn", f);
    }

    fn export_state(&self, out: &mut Vec<(String, Tensor)>) -> Result<()> {
        for (i, u) in self.units.iter().enumerate() {
            u.export_state(&format!("t{}", i + 1), out)?;
        }
        out.push((
            "skip.conv.weight".into(),
            self.skip_conv.weight.value.clone(),
        ));
        out.push(("skip.conv.bias".into(), self.skip_conv.bias.value.clone()));
        export_bn(&self.skip_bn, "skip", out)
    }

    fn import_state(&mut self, map: &mut StateMap) -> Result<()> {
        for (i, u) in self.units.iter_mut().enumerate() {
            u.import_state(&format!("t{}", i + 1), map)?;
        }
        set_param(&mut self.skip_conv.weight, map.take("skip.conv.weight")?)?;
        set_param(&mut self.skip_conv.bias, map.take("skip.conv.bias")?)?;
        import_bn(&mut self.skip_bn, "skip", map)
    }
}

fn prior_logit(p: f64) -> f64 {
    let p = p.clamp(0.02, 0.98);
    (p / (1.0 - p)).ln()
}

/// One ordinal boosting subnet: trunk + skip on z, pooled sigmoid head
/// emitting P(y > r_k).
pub struct OrdinalSubnet {
    trunk: ResidualTrunk,
    pool: GlobalAvgPool,
    dropout: Dropout,
    fc: FullyConnected,
    probs: Option<Tensor>,
}

impl OrdinalSubnet {
    /// `prior` initializes the head bias at the rank's positive frequency so
    /// an untrained subnet already predicts climatology.
    pub fn new(c_in: usize, prior: f64, rng: &mut ChaCha8Rng) -> Result<Self> {
        let trunk = ResidualTrunk::new(c_in, &[(128, 3), (128, 3), (32, 1), (32, 1)], rng);
        let mut fc = FullyConnected::new(32, 1, rng);
        fc.bias.value.data_mut()[0] = prior_logit(prior);
        Ok(Self {
            trunk,
            pool: GlobalAvgPool::new(),
            dropout: Dropout::new(HEAD_DROPOUT)?,
            fc,
            probs: None,
        })
    }

    /// B×C×H×W features → B×1 probabilities.
    pub fn forward(&mut self, z: &Tensor, mode: Mode, rng: &mut ChaCha8Rng) -> Result<Tensor> {
        let t = self.trunk.forward(z, mode)?;
        let pooled = self.pool.forward(&t, mode)?;
        let dropped = self.dropout.forward(&pooled, mode, rng);
        let logits = self.fc.forward(&dropped, mode)?;
        let probs = logits.map(sigmoid);
        if mode.caches() {
            self.probs = Some(probs.clone());
        }
        Ok(probs)
    }

    fn head_backward(&mut self, dprobs: &Tensor) -> Result<Tensor> {
        let probs = self
            .probs
            .take()
            .ok_or_else(|| ObaError::InvalidArg("subnet backward without cached forward".into()))?;
        if probs.shape() != dprobs.shape() {
            return Err(ObaError::Shape(format!(
                "subnet backward grad shape {:?}, expected {:?}",
                dprobs.shape(),
                probs.shape()
            )));
        }
        let mut dlogits = dprobs.clone();
        for (d, &p) in dlogits.data_mut().iter_mut().zip(probs.data()) {
            *d *= p * (1.0 - p);
        }
        let g = self.fc.backward(&dlogits)?;
        let g = self.dropout.backward(&g)?;
        self.pool.backward(&g)
    }

    /// Parameter gradients only; z is a frozen input during head training.
    pub fn backward_params_only(&mut self, dprobs: &Tensor) -> Result<()> {
        let g = self.head_backward(dprobs)?;
        self.trunk.backward_params_only(&g)
    }

    /// Full backward, returning the gradient w.r.t. z.
    pub fn backward(&mut self, dprobs: &Tensor) -> Result<Tensor> {
        let g = self.head_backward(dprobs)?;
        self.trunk.backward(&g)
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(String, &mut Param)) {
        self.trunk.visit_params(f);
        self.fc.visit_params("fc", f);
    }

    pub fn zero_grad(&mut self) {
        self.visit_params(&mut |_, p| p.zero_grad());
    }

    pub fn export_state(&self) -> Result<Vec<(String, Tensor)>> {
        let mut out = Vec::new();
        self.trunk.export_state(&mut out)?;
        out.push(("fc.weight".into(), self.fc.weight.value.clone()));
        out.push(("fc.bias".into(), self.fc.bias.value.clone()));
        Ok(out)
    }

    pub fn import_state(&mut self, entries: Vec<(String, Tensor)>, file: &str) -> Result<()> {
        let mut map = StateMap::new(entries, file)?;
        self.trunk.import_state(&mut map)?;
        set_param(&mut self.fc.weight, map.take("fc.weight")?)?;
        set_param(&mut self.fc.bias, map.take("fc.bias")?)?;
        map.finish()
    }
}

/// Rainfall sample selector: trained on normalized raw features x, not on z.
pub struct SelectorModel {
    trunk: ResidualTrunk,
    pool: GlobalAvgPool,
    fc: FullyConnected,
    probs: Option<Tensor>,
}

impl SelectorModel {
    pub fn new(c_in: usize, rng: &mut ChaCha8Rng) -> Result<Self> {
        Ok(Self {
            trunk: ResidualTrunk::new(c_in, &[(64, 3), (64, 3), (128, 3), (128, 3)], rng),
            pool: GlobalAvgPool::new(),
            fc: FullyConnected::new(128, 1, rng),
            probs: None,
        })
    }

    /// B×C×H×W features → B×1 rain probabilities.
    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let t = self.trunk.forward(x, mode)?;
        let pooled = self.pool.forward(&t, mode)?;
        let logits = self.fc.forward(&pooled, mode)?;
        let probs = logits.map(sigmoid);
        if mode.caches() {
            self.probs = Some(probs.clone());
        }
        Ok(probs)
    }

    pub fn backward_params_only(&mut self, dprobs: &Tensor) -> Result<()> {
        let probs = self.probs.take().ok_or_else(|| {
            ObaError::InvalidArg("selector backward without cached forward".into())
        })?;
        if probs.shape() != dprobs.shape() {
            return Err(ObaError::Shape(format!(
                "selector backward grad shape {:?}, expected {:?}",
                dprobs.shape(),
                probs.shape()
            )));
        }
        let mut dlogits = dprobs.clone();
        for (d, &p) in dlogits.data_mut().iter_mut().zip(probs.data()) {
            *d *= p * (1.0 - p);
        }
        let g = self.fc.backward(&dlogits)?;
        let g = self.pool.backward(&g)?;
        self.trunk.backward_params_only(&g)
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(String, &mut Param)) {
        self.trunk.visit_params(f);
        self.fc.visit_params("fc", f);
    }

    pub fn zero_grad(&mut self) {
        self.visit_params(&mut |_, p| p.zero_grad());
    }

    pub fn export_state(&self) -> Result<Vec<(String, Tensor)>> {
        let mut out = Vec::new();
        self.trunk.export_state(&mut out)?;
        out.push(("fc.weight".into(), self.fc.weight.value.clone()));
        out.push(("fc.bias".into(), self.fc.bias.value.clone()));
        Ok(out)
    }

    pub fn import_state(&mut self, entries: Vec<(String, Tensor)>, file: &str) -> Result<()> {
        let mut map = StateMap::new(entries, file)?;
        self.trunk.import_state(&mut map)?;
        set_param(&mut self.fc.weight, map.take("fc.weight")?)?;
        set_param(&mut self.fc.bias, map.take("fc.bias")?)?;
        map.finish()
    }
}

/// SRA baseline: the subnet architecture with a linear scalar head (Eq. 5).
pub struct SraModel {
    trunk: ResidualTrunk,
    pool: GlobalAvgPool,
    dropout: Dropout,
    fc: FullyConnected,
}

impl SraModel {
    /// `prior_mean` initializes the head bias at the mean rain amount.
    pub fn new(c_in: usize, prior_mean: f64, rng: &mut ChaCha8Rng) -> Result<Self> {
        let trunk = ResidualTrunk::new(c_in, &[(128, 3), (128, 3), (32, 1), (32, 1)], rng);
        let mut fc = FullyConnected::new(32, 1, rng);
        fc.bias.value.data_mut()[0] = prior_mean;
        Ok(Self {
            trunk,
            pool: GlobalAvgPool::new(),
            dropout: Dropout::new(HEAD_DROPOUT)?,
            fc,
        })
    }

    /// B×C×H×W features → B×1 raw regression outputs.
    pub fn forward(&mut self, z: &Tensor, mode: Mode, rng: &mut ChaCha8Rng) -> Result<Tensor> {
        let t = self.trunk.forward(z, mode)?;
        let pooled = self.pool.forward(&t, mode)?;
        let dropped = self.dropout.forward(&pooled, mode, rng);
        self.fc.forward(&dropped, mode)
    }

    /// Deterministic inference, clamped at the physical floor of 0 mm.
    pub fn predict(&mut self, z: &Tensor) -> Result<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(0); // never sampled in eval mode
        let out = self.forward(z, Mode::Eval, &mut rng)?;
        Ok(out.data().iter().map(|&v| v.max(0.0)).collect())
    }

    pub fn backward_params_only(&mut self, dpred: &Tensor) -> Result<()> {
        let g = self.fc.backward(dpred)?;
        let g = self.dropout.backward(&g)?;
        let g = self.pool.backward(&g)?;
        self.trunk.backward_params_only(&g)
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(String, &mut Param)) {
        self.trunk.visit_params(f);
        self.fc.visit_params("fc", f);
    }

    pub fn zero_grad(&mut self) {
        self.visit_params(&mut |_, p| p.zero_grad());
    }

    pub fn export_state(&self) -> Result<Vec<(String, Tensor)>> {
        let mut out = Vec::new();
        self.trunk.export_state(&mut out)?;
        out.push(("fc.weight".into(), self.fc.weight.value.clone()));
        out.push(("fc.bias".into(), self.fc.bias.value.clone()));
        Ok(out)
    }

    pub fn import_state(&mut self, entries: Vec<(String, Tensor)>, file: &str) -> Result<()> {
        let mut map = StateMap::new(entries, file)?;
        self.trunk.import_state(&mut map)?;
        set_param(&mut self.fc.weight, map.take("fc.weight")?)?;
        set_param(&mut self.fc.bias, map.take("fc.bias")?)?;
        map.finish()
    }
}

/// Plain binary cross-entropy over probabilities, with gradient w.r.t. p.
pub fn bce_loss(probs: &Tensor, targets: &Tensor) -> Result<(f64, Tensor)> {
    if probs.shape() != targets.shape() {
        return Err(ObaError::Shape(format!(
            "bce shapes {:?} vs {:?}",
            probs.shape(),
            targets.shape()
        )));
    }
    if probs.is_empty() {
        return Err(ObaError::InvalidArg("bce on empty batch".into()));
    }
    let n = probs.len() as f64;
    let mut grad = Tensor::zeros(probs.shape());
    let mut loss = 0.0;
    for (g, (&p, &t)) in grad
        .data_mut()
        .iter_mut()
        .zip(probs.data().iter().zip(targets.data()))
    {
        if t != 0.0 && t != 1.0 {
            return Err(ObaError::InvalidArg(format!(
                "bce target must be 0 or 1, got {t}"
            )));
        }
        let p = p.clamp(PROB_EPS, 1.0 - PROB_EPS);
        loss -= t * p.ln() + (1.0 - t) * (1.0 - p).ln();
        *g = (-t / p + (1.0 - t) / (1.0 - p)) / n;
    }
    Ok((loss / n, grad))
}

/// Eq. 5: mean squared error of a scalar head over the batch, with gradient.
pub fn mse_scalar_loss(preds: &Tensor, targets: &[f64]) -> Result<(f64, Tensor)> {
    let b = match preds.shape() {
        [b, 1] => *b,
        s => {
            return Err(ObaError::Shape(format!(
                "scalar mse expects B×1 predictions, got {s:?}"
            )))
        }
    };
    if b != targets.len() || b == 0 {
        return Err(ObaError::Shape(format!(
            "{} predictions vs {} targets",
            b,
            targets.len()
        )));
    }
    let n = b as f64;
    let mut grad = Tensor::zeros(preds.shape());
    let mut loss = 0.0;
    for (i, (g, &p)) in grad.data_mut().iter_mut().zip(preds.data()).enumerate() {
        let d = p - targets[i];
        loss += d * d;
        *g = 2.0 * d / n;
    }
    Ok((loss / n, grad))
}
