//! The four networks and their training: the enhanced denoising autoencoder,
//! the K−1 ordinal boosting subnets, the rainfall sample selector, the SRA
//! baseline head, and the bundle that ties them to a partition and
//! normalization stats for self-contained inference.

mod bundle;
mod eda;
mod heads;
mod train;

pub use bundle::{load_bundle, save_bundle, ModelBundle, BUNDLE_FORMAT};
pub use eda::{reconstruction_loss, EdaModel};
pub use heads::{bce_loss, mse_scalar_loss, OrdinalSubnet, SelectorModel, SraModel};
pub use train::{
    encode_dataset, selector_accuracy, train_eda, train_ordinal, train_selector, train_sra,
    EdaTrainConfig, HeadTrainConfig, Z_CHANNELS,
};

use std::collections::BTreeMap;

use rand::Rng;

use crate::error::{ObaError, Result};
use crate::nn::{BatchNorm2d, Conv2d, LeakyRelu, Mode, Param};
use crate::tensor::Tensor;

/// §4.3: "leaky ReLU with a negative slope of 0.01".
pub const LEAKY_SLOPE: f64 = 0.01;

/// One Table-1 "Conv Block" layer: convolution, batch norm, leaky ReLU.
pub(crate) struct ConvUnit {
    conv: Conv2d,
    bn: BatchNorm2d,
    act: LeakyRelu,
}

impl ConvUnit {
    pub(crate) fn new(
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut impl Rng,
    ) -> Self {
        Self {
            conv: Conv2d::new(c_in, c_out, kernel, stride, padding, rng),
            bn: BatchNorm2d::new(c_out),
            act: LeakyRelu::new(LEAKY_SLOPE),
        }
    }

    pub(crate) fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let y = self.bn.forward(&self.conv.forward(x, mode)?, mode)?;
        Ok(self.act.forward(&y, mode))
    }

    pub(crate) fn backward(&mut self, grad: &Tensor) -> Result<Tensor> {
        self.conv
            .backward(&self.bn.backward(&self.act.backward(grad)?)?)
    }

    /// Backward for the first layer of a network: parameter gradients only.
    pub(crate) fn backward_params_only(&mut self, grad: &Tensor) -> Result<()> {
        self.conv
            .backward_params_only(&self.bn.backward(&self.act.backward(grad)?)?)
    }

    pub(crate) fn visit_params(&mut self, prefix: &str, f: &mut dyn FnMut(String, &mut Param)) {
        self.conv.visit_params(&format!("{prefix}.conv"), f);
        self.bn.visit_params(&format!("{prefix}.bn"), f);
    }

    pub(crate) fn export_state(&self, prefix: &str, out: &mut Vec<(String, Tensor)>) -> Result<()> {
        out.push((
            format!("{prefix}.conv.weight"),
            self.conv.weight.value.clone(),
        ));
        out.push((format!("{prefix}.conv.bias"), self.conv.bias.value.clone()));
        export_bn(&self.bn, prefix, out)
    }

    pub(crate) fn import_state(&mut self, prefix: &str, map: &mut StateMap) -> Result<()> {
        set_param(
            &mut self.conv.weight,
            map.take(&format!("{prefix}.conv.weight"))?,
        )?;
        set_param(
            &mut self.conv.bias,
            map.take(&format!("{prefix}.conv.bias"))?,
        )?;
        import_bn(&mut self.bn, prefix, map)
    }
}

pub(crate) fn export_bn(
    bn: &BatchNorm2d,
    prefix: &str,
    out: &mut Vec<(String, Tensor)>,
) -> Result<()> {
    let (mean, var) = bn.running_stats().ok_or_else(|| {
        ObaError::InvalidArg(format!(
            "{prefix}.bn has no running statistics; the model was never trained"
        ))
    })?;
    out.push((format!("{prefix}.bn.scale"), bn.scale.value.clone()));
    out.push((format!("{prefix}.bn.shift"), bn.shift.value.clone()));
    out.push((
        format!("{prefix}.bn.running_mean"),
        Tensor::from_vec(&[mean.len()], mean.to_vec())?,
    ));
    out.push((
        format!("{prefix}.bn.running_var"),
        Tensor::from_vec(&[var.len()], var.to_vec())?,
    ));
    Ok(())
}

pub(crate) fn import_bn(bn: &mut BatchNorm2d, prefix: &str, map: &mut StateMap) -> Result<()> {
    set_param(&mut bn.scale, map.take(&format!("{prefix}.bn.scale"))?)?;
    set_param(&mut bn.shift, map.take(&format!("{prefix}.bn.shift"))?)?;
    let mean = map.take(&format!("{prefix}.bn.running_mean"))?;
    let var = map.take(&format!("{prefix}.bn.running_var"))?;
    bn.set_running_stats(mean.into_vec(), var.into_vec())
}

fn set_param(param: &mut Param, value: Tensor) -> Result<()> {
    if param.value.shape() != value.shape() {
        return Err(ObaError::Format(format!(
            "stored tensor has shape {:?}, model expects {:?}",
            value.shape(),
            param.value.shape()
        )));
    }
    param.value = value;
    Ok(())
}

/// Name-addressed tensor entries from one OBAWT001 file. Every entry must be
/// consumed exactly once, so architecture mismatches surface as errors.
pub(crate) struct StateMap {
    entries: BTreeMap<String, Tensor>,
    file: String,
}

impl StateMap {
    pub(crate) fn new(entries: Vec<(String, Tensor)>, file: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (name, t) in entries {
            if map.insert(name.clone(), t).is_some() {
                return Err(ObaError::Format(format!(
                    "duplicate tensor '{name}' in {file}"
                )));
            }
        }
        Ok(Self {
            entries: map,
            file: file.to_string(),
        })
    }

    pub(crate) fn take(&mut self, name: &str) -> Result<Tensor> {
        self.entries
            .remove(name)
            .ok_or_else(|| ObaError::Format(format!("missing tensor '{name}' in {}", self.file)))
    }

    pub(crate) fn finish(self) -> Result<()> {
        if let Some(name) = self.entries.keys().next() {
            return Err(ObaError::Format(format!(
                "unexpected tensor '{name}' in {}",
                self.file
            )));
        }
        Ok(())
    }
}
