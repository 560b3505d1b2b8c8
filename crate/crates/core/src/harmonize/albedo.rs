use crate::image::{Image, Mask};

/// Pointwise albedo adjustment `y_c = exposure · wb_c · x_c^gamma`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct HarmonizeParams {
    pub exposure: f64,
    pub white_balance: [f64; 3],
    pub gamma: f64,
}

impl Default for HarmonizeParams {
    fn default() -> Self {
        Self::IDENTITY
    }
}

impl HarmonizeParams {
    pub const IDENTITY: Self = Self {
        exposure: 1.0,
        white_balance: [1.0; 3],
        gamma: 1.0,
    };

    pub fn is_valid(&self) -> bool {
        self.exposure > 0.0 && self.gamma > 0.0 && self.white_balance.iter().all(|g| *g > 0.0)
    }

    #[inline]
    pub fn apply_value(&self, x: f64, channel: usize) -> f64 {
        (self.exposure * self.white_balance[channel] * libm::pow(x.max(0.0), self.gamma)).clamp(0.0, 1.0)
    }

    pub fn apply(&self, img: &Image) -> Image {
        let mut out = img.clone();
        for px in out.data_mut().chunks_exact_mut(3) {
            for (c, v) in px.iter_mut().enumerate() {
                *v = self.apply_value(*v, c);
            }
        }
        out
    }
}

/// Per-channel mean and standard deviation of `ln(x + δ)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AlbedoStats {
    pub mean_log: [f64; 3],
    pub std_log: [f64; 3],
}

/// Offset keeping the log finite on black pixels.
pub const LOG_OFFSET: f64 = 1e-4;

impl AlbedoStats {
    /// Statistics over pixels where `mask` equals `select` (all pixels without a mask).
    pub fn from_image(img: &Image, mask: Option<&Mask>, select: bool) -> Option<Self> {
        let mut sum = [0.0; 3];
        let mut sq = [0.0; 3];
        let mut n = 0usize;
        for i in 0..img.pixel_count() {
            if mask.is_some_and(|m| m.data()[i] != select) {
                continue;
            }
            n += 1;
            for (c, v) in img.pixel_at(i).iter().enumerate().take(3) {
                let l = libm::log(v.max(0.0) + LOG_OFFSET);
                sum[c] += l;
                sq[c] += l * l;
            }
        }
        if n == 0 {
            return None;
        }
        let nf = n as f64;
        let mean_log = sum.map(|s| s / nf);
        let mut std_log = [0.0; 3];
        for c in 0..3 {
            std_log[c] = libm::sqrt((sq[c] / nf - mean_log[c] * mean_log[c]).max(0.0));
        }
        Some(Self { mean_log, std_log })
    }
}

/// Parameters mapping `fg` log statistics onto `bg`: one gamma (the mean
/// per-channel std ratio), per-channel gains split into a geometric-mean
/// exposure and white balance.
pub fn fit_params(fg: &AlbedoStats, bg: &AlbedoStats) -> HarmonizeParams {
    let ratios: alloc::vec::Vec<f64> = (0..3)
        .filter(|&c| fg.std_log[c] > 1e-12 && bg.std_log[c] > 1e-12)
        .map(|c| bg.std_log[c] / fg.std_log[c])
        .collect();
    let gamma = if ratios.is_empty() {
        1.0
    } else {
        ratios.iter().sum::<f64>() / ratios.len() as f64
    };
    // ln y = ln g_c + γ·ln x, with x + δ standing in for x.
    let log_gain = [0, 1, 2].map(|c| bg.mean_log[c] - gamma * fg.mean_log[c]);
    let log_exposure = log_gain.iter().sum::<f64>() / 3.0;
    HarmonizeParams {
        exposure: libm::exp(log_exposure),
        white_balance: log_gain.map(|g| libm::exp(g - log_exposure)),
        gamma,
    }
}

/// Adjusts the foreground albedo, fitting parameters to `bg` unless given.
/// Statistics of `fg` are taken over `fg_mask` when present.
pub fn harmonize_albedo(
    fg: &Image,
    fg_mask: Option<&Mask>,
    bg: &AlbedoStats,
    params: Option<HarmonizeParams>,
) -> (Image, HarmonizeParams) {
    let params = params.unwrap_or_else(|| match AlbedoStats::from_image(fg, fg_mask, true) {
        Some(fs) => fit_params(&fs, bg),
        None => HarmonizeParams::IDENTITY,
    });
    (params.apply(fg), params)
}
