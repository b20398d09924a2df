//! Reproducible random sampling shared by all stochastic modules.
//!
//! Every draw in the crate flows through an [`RngStream`], a `(seed,
//! stream_id)` pair mapped onto a counter-based ChaCha8 generator. Distinct
//! stream ids select independent ChaCha streams under the same key, so
//! replication workers can run in any order (or in parallel) without
//! perturbing each other's sequences.

use nalgebra::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};

use crate::error::{Error, Result};

/// A reproducible stream of randomness identified by `(seed, stream_id)`.
///
/// The stream is value-like: it can be copied freely, and every sampling
/// method restarts from the stream origin, so two calls with the same
/// arguments return identical sequences. Use [`RngStream::substream`] to
/// derive decoupled streams for different purposes within one replication.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngStream {
    seed: u64,
    stream_id: u64,
}

/// SplitMix64 finalizer, used to spread substream tags over the id space.
fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl RngStream {
    pub fn new(seed: u64, stream_id: u64) -> Self {
        RngStream { seed, stream_id }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream_id(&self) -> u64 {
        self.stream_id
    }

    /// Stream for the `index`-th replication: same key, shifted stream id.
    pub fn replication(&self, index: u64) -> Self {
        RngStream {
            seed: self.seed,
            stream_id: self.stream_id.wrapping_add(index),
        }
    }

    /// Derive a decoupled stream for a named purpose (layout, clustering,
    /// channel, retry, ...). The tag is hashed so derived ids do not collide
    /// with the consecutive ids used for replications.
    pub fn substream(&self, tag: u64) -> Self {
        RngStream {
            seed: self.seed,
            stream_id: splitmix64(self.stream_id ^ splitmix64(tag)),
        }
    }

    /// Instantiate the generator at the stream origin.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream_id);
        rng
    }

    /// `n` i.i.d. draws from the standard complex Gaussian: independent real
    /// and imaginary parts, each normal with mean 0 and variance 1/2, so the
    /// total complex variance is 1.
    pub fn sample_complex_gaussian(&self, n: usize) -> Vec<Complex<f64>> {
        let mut rng = self.rng();
        complex_gaussian_with(&mut rng, n)
    }

    /// One draw from Poisson(lambda). `lambda = 0` is the degenerate
    /// point mass at zero.
    pub fn sample_poisson(&self, lambda: f64) -> Result<u64> {
        if !lambda.is_finite() || lambda < 0.0 {
            return Err(Error::invalid_argument(
                "lambda",
                format!("Poisson rate must be finite and nonnegative, got {lambda}"),
            ));
        }
        if lambda == 0.0 {
            return Ok(0);
        }
        let mut rng = self.rng();
        Ok(poisson_with(&mut rng, lambda))
    }

    /// `n` i.i.d. draws from the normal(mu, sigma^2) distribution truncated
    /// to `[lo, hi]`, sampled by inverse CDF on the truncated interval
    /// (exact, rejection-free even under heavy truncation).
    pub fn sample_truncated_normal(
        &self,
        mu: f64,
        sigma: f64,
        lo: f64,
        hi: f64,
        n: usize,
    ) -> Result<Vec<f64>> {
        if !(lo < hi) {
            return Err(Error::invalid_argument(
                "lo",
                format!("truncation interval must satisfy lo < hi, got [{lo}, {hi}]"),
            ));
        }
        if !(sigma > 0.0) {
            return Err(Error::invalid_argument(
                "sigma",
                format!("sigma must be positive, got {sigma}"),
            ));
        }
        let mut rng = self.rng();
        Ok((0..n)
            .map(|_| truncated_normal_with(&mut rng, mu, sigma, lo, hi))
            .collect())
    }
}

/// Fill from an already-positioned generator; used by modules that thread
/// one generator through a multi-step construction.
pub fn complex_gaussian_with<R: Rng + ?Sized>(rng: &mut R, n: usize) -> Vec<Complex<f64>> {
    (0..n).map(|_| one_complex_gaussian(rng)).collect()
}

pub fn one_complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex<f64> {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

pub fn poisson_with<R: Rng + ?Sized>(rng: &mut R, lambda: f64) -> u64 {
    if lambda == 0.0 {
        return 0;
    }
    let poisson = Poisson::new(lambda).expect("validated rate");
    let draw: f64 = poisson.sample(rng);
    draw as u64
}

pub fn truncated_normal_with<R: Rng + ?Sized>(
    rng: &mut R,
    mu: f64,
    sigma: f64,
    lo: f64,
    hi: f64,
) -> f64 {
    let alpha = (lo - mu) / sigma;
    let beta = (hi - mu) / sigma;
    let p_lo = std_normal_cdf(alpha);
    let p_hi = std_normal_cdf(beta);
    let u: f64 = rng.gen();
    let z = std_normal_quantile(p_lo + u * (p_hi - p_lo)).clamp(alpha, beta);
    mu + sigma * z
}

/// Standard normal CDF.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z * std::f64::consts::FRAC_1_SQRT_2)
}

/// Standard normal quantile (inverse CDF), Wichura's AS 241 double-precision
/// rational approximation. Relative error below 1e-15 on (0, 1).
#[allow(clippy::excessive_precision)] // published coefficients, kept verbatim
pub fn std_normal_quantile(p: f64) -> f64 {
    debug_assert!((0.0..=1.0).contains(&p));
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }

    const A: [f64; 8] = [
        3.387_132_872_796_366_608,
        1.331_416_678_917_843_774_5e2,
        1.971_590_950_306_551_442_7e3,
        1.373_169_376_550_946_112_5e4,
        4.592_195_393_154_987_145_7e4,
        6.726_577_092_700_870_085_3e4,
        3.343_057_558_358_812_810_5e4,
        2.509_080_928_730_122_672_7e3,
    ];
    const B: [f64; 7] = [
        4.231_333_070_160_091_125_2e1,
        6.871_870_074_920_579_083e2,
        5.394_196_021_424_751_107_7e3,
        2.121_379_430_158_659_586_7e4,
        3.930_789_580_009_271_061e4,
        2.872_908_573_572_194_267_4e4,
        5.226_495_278_852_854_561e3,
    ];
    const C: [f64; 8] = [
        1.423_437_110_749_683_577_34,
        4.630_337_846_156_545_295_9,
        5.769_497_221_460_691_405_5,
        3.647_848_324_763_204_605_04,
        1.270_458_252_452_368_382_58,
        2.417_807_251_774_506_117_7e-1,
        2.272_384_498_926_918_458_33e-2,
        7.745_450_142_783_414_076_4e-4,
    ];
    const D: [f64; 7] = [
        2.053_191_626_637_758_821_87,
        1.676_384_830_183_803_849_4,
        6.897_673_349_851_000_045_5e-1,
        1.481_039_764_274_800_745_9e-1,
        1.519_866_656_361_645_719_66e-2,
        5.475_938_084_995_344_946e-4,
        1.050_750_071_644_416_843_24e-9,
    ];
    const E: [f64; 8] = [
        6.657_904_643_501_103_777_2,
        5.463_784_911_164_114_369_9,
        1.784_826_539_917_291_335_8,
        2.965_605_718_285_048_912_3e-1,
        2.653_218_952_657_612_309_3e-2,
        1.242_660_947_388_078_438_6e-3,
        2.711_555_568_743_487_578_15e-5,
        2.010_334_399_292_288_132_65e-7,
    ];
    const F: [f64; 7] = [
        5.998_322_065_558_879_376_9e-1,
        1.369_298_809_227_358_053_1e-1,
        1.487_536_129_085_061_485_25e-2,
        7.868_691_311_456_132_591e-4,
        1.846_318_317_510_054_681_8e-5,
        1.421_511_758_316_445_888_7e-7,
        2.044_263_103_389_939_785_64e-15,
    ];

    fn rational(r: f64, num: &[f64; 8], den: &[f64; 7]) -> f64 {
        let p = num
            .iter()
            .rev()
            .fold(0.0, |acc: f64, &coeff| acc * r + coeff);
        let q = den
            .iter()
            .rev()
            .fold(0.0, |acc: f64, &coeff| acc * r + coeff)
            * r
            + 1.0;
        p / q
    }

    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180_625 - q * q;
        return q * rational(r, &A, &B);
    }

    let r = if q < 0.0 { p } else { 1.0 - p };
    let r = (-r.ln()).sqrt();
    let x = if r <= 5.0 {
        rational(r - 1.6, &C, &D)
    } else {
        rational(r - 5.0, &E, &F)
    };
    if q < 0.0 {
        -x
    } else {
        x
    }
}
