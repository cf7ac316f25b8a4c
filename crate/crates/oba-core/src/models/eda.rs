use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::{ConvUnit, StateMap};
use crate::error::{ObaError, Result};
use crate::nn::{BilinearUpsample, Conv2d, Mode, NoisePerturbation, Param};
use crate::tensor::Tensor;

/// Enhanced denoising autoencoder. Noise is injected at the input (Eq. 1)
/// and after the first encoder stage (Eq. 2); the decoder reconstructs the
/// clean input from the squeezed bottleneck (Eq. 3). The final 1×1 conv is a
/// plain linear projection so reconstructions can take any standardized value.
pub struct EdaModel {
    channels: usize,
    grid_h: usize,
    grid_w: usize,
    noise: NoisePerturbation,
    enc1a: ConvUnit,
    enc1b: ConvUnit,
    enc2a: ConvUnit,
    enc2b: ConvUnit,
    dec1: ConvUnit,
    up: BilinearUpsample,
    dec2: ConvUnit,
    dec3: Conv2d,
}

impl EdaModel {
    pub fn new(
        channels: usize,
        grid_h: usize,
        grid_w: usize,
        mu: f64,
        sigma: f64,
        rng: &mut impl Rng,
    ) -> Result<Self> {
        if channels == 0 || grid_h < 2 || grid_w < 2 {
            return Err(ObaError::InvalidArg(format!(
                "EDA needs channels ≥ 1 and grid ≥ 2×2, got {channels}×{grid_h}×{grid_w}"
            )));
        }
        Ok(Self {
            channels,
            grid_h,
            grid_w,
            noise: NoisePerturbation::new(mu, sigma)?,
            enc1a: ConvUnit::new(channels, 32, 1, 1, 0, rng),
            enc1b: ConvUnit::new(32, 32, 3, 1, 1, rng),
            enc2a: ConvUnit::new(32, 64, 3, 1, 1, rng),
            enc2b: ConvUnit::new(64, 64, 3, 2, 1, rng),
            dec1: ConvUnit::new(64, 64, 3, 1, 1, rng),
            up: BilinearUpsample::new(grid_h, grid_w),
            dec2: ConvUnit::new(64, 32, 3, 1, 1, rng),
            dec3: Conv2d::new(32, channels, 1, 1, 0, rng),
        })
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn grid(&self) -> (usize, usize) {
        (self.grid_h, self.grid_w)
    }

    pub fn mu(&self) -> f64 {
        self.noise.mu()
    }

    pub fn sigma(&self) -> f64 {
        self.noise.sigma()
    }

    fn check_input(&self, x: &Tensor) -> Result<()> {
        match x.shape() {
            [_, c, h, w] if *c == self.channels && *h == self.grid_h && *w == self.grid_w => Ok(()),
            s => Err(ObaError::Shape(format!(
                "EDA expects B×{}×{}×{}, got {s:?}",
                self.channels, self.grid_h, self.grid_w
            ))),
        }
    }

    /// Full forward: (z, h, x̂). Noise fires only when `mode` is stochastic.
    pub fn forward_train(
        &mut self,
        x: &Tensor,
        mode: Mode,
        rng: &mut ChaCha8Rng,
    ) -> Result<(Tensor, Tensor, Tensor)> {
        self.check_input(x)?;
        let xn = self.noise.forward(x, mode, rng);
        let a = self.enc1a.forward(&xn, mode)?;
        let z = self.enc1b.forward(&a, mode)?;
        let zn = self.noise.forward(&z, mode, rng);
        let b = self.enc2a.forward(&zn, mode)?;
        let h = self.enc2b.forward(&b, mode)?;
        let d = self.dec1.forward(&h, mode)?;
        let u = self.up.forward(&d, mode)?;
        let e = self.dec2.forward(&u, mode)?;
        let x_hat = self.dec3.forward(&e, mode)?;
        Ok((z, h, x_hat))
    }

    /// Noise-free first-stage features z for the regression heads.
    pub fn encode_eval(&mut self, x: &Tensor) -> Result<Tensor> {
        self.check_input(x)?;
        let a = self.enc1a.forward(x, Mode::Eval)?;
        self.enc1b.forward(&a, Mode::Eval)
    }

    /// Accumulate parameter gradients from the reconstruction gradient.
    pub fn backward(&mut self, d_xhat: &Tensor) -> Result<()> {
        let g = self.dec3.backward(d_xhat)?;
        let g = self.dec2.backward(&g)?;
        let g = self.up.backward(&g)?;
        let g = self.dec1.backward(&g)?;
        let g = self.enc2b.backward(&g)?;
        let g = self.enc2a.backward(&g)?;
        let g = self.enc1b.backward(&g)?;
        self.enc1a.backward_params_only(&g)
    }

    pub fn visit_params(&mut self, f: &mut dyn FnMut(String, &mut Param)) {
        self.enc1a.visit_params("eda.enc1a", f);
        self.enc1b.visit_params("eda.enc1b", f);
        self.enc2a.visit_params("eda.enc2a", f);
        self.enc2b.visit_params("eda.enc2b", f);
        self.dec1.visit_params("eda.dec1", f);
        self.dec2.visit_params("eda.dec2", f);
        self.dec3.visit_params("eda.dec3", f);
    }

    pub fn zero_grad(&mut self) {
        self.visit_params(&mut |_, p| p.zero_grad());
    }

    pub fn export_state(&self) -> Result<Vec<(String, Tensor)>> {
        let mut out = Vec::new();
        self.enc1a.export_state("enc1a", &mut out)?;
        self.enc1b.export_state("enc1b", &mut out)?;
        self.enc2a.export_state("enc2a", &mut out)?;
        self.enc2b.export_state("enc2b", &mut out)?;
        self.dec1.export_state("dec1", &mut out)?;
        self.dec2.export_state("dec2", &mut out)?;
        out.push(("dec3.weight".into(), self.dec3.weight.value.clone()));
        out.push(("dec3.bias".into(), self.dec3.bias.value.clone()));
        Ok(out)
    }

    pub fn import_state(&mut self, entries: Vec<(String, Tensor)>, file: &str) -> Result<()> {
        let mut map = StateMap::new(entries, file)?;
        self.enc1a.import_state("enc1a", &mut map)?;
        self.enc1b.import_state("enc1b", &mut map)?;
        self.enc2a.import_state("enc2a", &mut map)?;
        self.enc2b.import_state("enc2b", &mut map)?;
        self.dec1.import_state("dec1", &mut map)?;
        self.dec2.import_state("dec2", &mut map)?;
        super::set_param(&mut self.dec3.weight, map.take("dec3.weight")?)?;
        super::set_param(&mut self.dec3.bias, map.take("dec3.bias")?)?;
        map.finish()
    }
}

/// Eq. 4: mean squared reconstruction error over the whole batch, with its
/// gradient w.r.t. x̂.
pub fn reconstruction_loss(x: &Tensor, x_hat: &Tensor) -> Result<(f64, Tensor)> {
    if x.shape() != x_hat.shape() {
        return Err(ObaError::Shape(format!(
            "reconstruction loss shapes {:?} vs {:?}",
            x.shape(),
            x_hat.shape()
        )));
    }
    if x.is_empty() {
        return Err(ObaError::InvalidArg(
            "reconstruction loss on empty tensors".into(),
        ));
    }
    let n = x.len() as f64;
    let mut grad = Tensor::zeros(x.shape());
    let mut loss = 0.0;
    for (g, (&xh, &xv)) in grad
        .data_mut()
        .iter_mut()
        .zip(x_hat.data().iter().zip(x.data()))
    {
        let d = xh - xv;
        loss += d * d;
        *g = 2.0 * d / n;
    }
    Ok((loss / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn random_input(b: usize, c: usize, h: usize, w: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Tensor::from_vec(
            &[b, c, h, w],
            (0..b * c * h * w)
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn shape_propagation_through_table_1() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut eda = EdaModel::new(12, 17, 17, 0.0, 0.01, &mut rng).unwrap();
        let x = random_input(2, 12, 17, 17, 1);
        let (z, h, x_hat) = eda.forward_train(&x, Mode::Train, &mut rng).unwrap();
        assert_eq!(z.shape(), &[2, 32, 17, 17]);
        assert_eq!(h.shape(), &[2, 64, 9, 9]);
        assert_eq!(x_hat.shape(), &[2, 12, 17, 17]);
    }

    #[test]
    fn same_rng_seed_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut eda = EdaModel::new(3, 9, 9, 0.0, 0.05, &mut rng).unwrap();
        let x = random_input(2, 3, 9, 9, 2);
        let mut r1 = ChaCha8Rng::seed_from_u64(77);
        let (_, _, a) = eda.forward_train(&x, Mode::Train, &mut r1).unwrap();
        let mut r2 = ChaCha8Rng::seed_from_u64(77);
        let (_, _, b) = eda.forward_train(&x, Mode::Train, &mut r2).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_sigma_frozen_forward_equals_eval_forward() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut eda = EdaModel::new(4, 9, 9, 0.0, 0.0, &mut rng).unwrap();
        let x = random_input(4, 4, 9, 9, 3);
        // one train pass to populate batch-norm running statistics
        eda.forward_train(&x, Mode::Train, &mut rng).unwrap();
        let (z_f, _, xh_f) = eda.forward_train(&x, Mode::Frozen, &mut rng).unwrap();
        let (z_e, _, xh_e) = eda.forward_train(&x, Mode::Eval, &mut rng).unwrap();
        assert_eq!(xh_f, xh_e);
        assert_eq!(z_f, z_e);
        assert_eq!(z_e, eda.encode_eval(&x).unwrap());
    }

    #[test]
    fn train_mode_noise_actually_fires() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut eda = EdaModel::new(2, 5, 5, 0.0, 0.05, &mut rng).unwrap();
        let x = random_input(2, 2, 5, 5, 4);
        eda.forward_train(&x, Mode::Train, &mut rng).unwrap();
        let (z_t, _, _) = eda.forward_train(&x, Mode::Train, &mut rng).unwrap();
        let z_e = eda.encode_eval(&x).unwrap();
        assert_ne!(z_t, z_e);
    }

    #[test]
    fn reconstruction_loss_matches_hand_values() {
        let x = Tensor::zeros(&[2, 1, 2, 2]);
        let (zero, _) = reconstruction_loss(&x, &x).unwrap();
        assert_eq!(zero, 0.0);
        let ones = Tensor::filled(&[2, 1, 2, 2], 1.0);
        let (one, grad) = reconstruction_loss(&x, &ones).unwrap();
        assert!((one - 1.0).abs() < 1e-15);
        // gradient is 2(x̂−x)/n
        for &g in grad.data() {
            assert!((g - 2.0 / 8.0).abs() < 1e-12);
        }
        assert!(reconstruction_loss(&x, &Tensor::zeros(&[2, 1, 2, 3])).is_err());
    }

    #[test]
    fn state_roundtrip_preserves_eval_output() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut eda = EdaModel::new(3, 7, 7, 0.0, 0.01, &mut rng).unwrap();
        let x = random_input(3, 3, 7, 7, 8);
        eda.forward_train(&x, Mode::Train, &mut rng).unwrap();
        let before = eda.encode_eval(&x).unwrap();
        let state = eda.export_state().unwrap();
        let mut other = EdaModel::new(3, 7, 7, 0.0, 0.01, &mut rng).unwrap();
        other.import_state(state, "eda.obawt").unwrap();
        assert_eq!(other.encode_eval(&x).unwrap(), before);
        // importing into a mismatched architecture is a format error
        let mut small = EdaModel::new(2, 7, 7, 0.0, 0.01, &mut rng).unwrap();
        let err = small.import_state(eda.export_state().unwrap(), "eda.obawt");
        assert!(matches!(err, Err(ObaError::Format(_))));
    }
}
