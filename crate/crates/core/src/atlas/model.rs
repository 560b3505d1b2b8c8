use alloc::vec;
use alloc::vec::Vec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::mlp::{encode_backward, encode_into, encoded_dim, Mlp, Tape};
use super::{AtlasError, VideoClip};
use crate::image::Image;
use crate::optim::{Adam, AdamConfig};

/// Default discretized atlas size `(width, height)`.
pub const DEFAULT_ATLAS_SIZE: (usize, usize) = (768, 432);

const EVAL_CHUNK: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(default, deny_unknown_fields))]
pub struct AtlasConfig {
    pub hidden_layers: usize,
    pub hidden_units: usize,
    /// Positional-encoding frequency count.
    pub frequencies: usize,
    /// Pixels per training batch.
    pub batch: usize,
    pub lr: f64,
    /// Learning rate at the last iteration as a fraction of `lr`; decay is
    /// geometric.
    pub lr_final_fraction: f64,
    pub rigidity_weight: f64,
    /// Reference uv scale per normalized pixel coordinate.
    pub rigidity_scale: f64,
    /// Fraction of each batch that also evaluates the rigidity term.
    pub rigidity_fraction: f64,
    /// Weight of the flow-consistency term, used when the clip carries flow.
    pub flow_weight: f64,
    /// Fraction of each batch paired with its flow correspondent.
    pub flow_fraction: f64,
    /// Slope of the identity-like prior added before the uv squashing.
    pub base_gain: f64,
    pub seed: u64,
}

impl Default for AtlasConfig {
    fn default() -> Self {
        Self {
            hidden_layers: 4,
            hidden_units: 128,
            frequencies: 6,
            batch: 256,
            lr: 1e-3,
            lr_final_fraction: 0.1,
            rigidity_weight: 1e-3,
            rigidity_scale: 0.3,
            rigidity_fraction: 0.25,
            flow_weight: 1.0,
            flow_fraction: 0.25,
            base_gain: 0.6,
            seed: 0,
        }
    }
}

impl AtlasConfig {
    pub fn validate(&self) -> Result<(), AtlasError> {
        let ok = self.hidden_layers >= 1
            && self.hidden_units >= 1
            && self.batch >= 1
            && self.lr > 0.0
            && self.lr_final_fraction > 0.0
            && self.rigidity_weight >= 0.0
            && self.rigidity_scale > 0.0
            && (0.0..=1.0).contains(&self.rigidity_fraction)
            && self.flow_weight >= 0.0
            && (0.0..=1.0).contains(&self.flow_fraction);
        if ok {
            Ok(())
        } else {
            Err(AtlasError::Config)
        }
    }

    fn dims(&self, input: usize, output: usize) -> Vec<usize> {
        let mut d = vec![input];
        d.extend(core::iter::repeat_n(self.hidden_units, self.hidden_layers));
        d.push(output);
        d
    }
}

/// Frame-pixel → atlas-coordinate map.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum UvMapping {
    /// `uv = (tanh(g·(x, y) + mlp(γ(x, y, t))) + 1) / 2`
    Network(Mlp),
    /// Every pixel of every frame maps to one coordinate.
    Constant([f64; 2]),
}

/// Trained background atlas: a uv network and a color network over uv.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct AtlasModel {
    uv: UvMapping,
    color: Mlp,
    frequencies: usize,
    base_gain: f64,
    width: usize,
    height: usize,
    frames: usize,
    loss_history: Vec<(usize, f64)>,
}

#[inline]
fn normalized(i: usize, n: usize) -> f32 {
    (2.0 * (i as f64 + 0.5) / n as f64 - 1.0) as f32
}

#[inline]
fn sigmoid(x: f32) -> f32 {
    1.0 / (1.0 + libm::expf(-x))
}

impl AtlasModel {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn uv_mapping(&self) -> &UvMapping {
        &self.uv
    }

    pub fn color_net(&self) -> &Mlp {
        &self.color
    }

    pub fn frequencies(&self) -> usize {
        self.frequencies
    }

    /// `(iteration, batch loss)` samples recorded during training.
    pub fn loss_history(&self) -> &[(usize, f64)] {
        &self.loss_history
    }

    /// Copy of this model whose uv map is the constant `uv`.
    pub fn with_constant_uv(&self, uv: [f64; 2]) -> Self {
        Self {
            uv: UvMapping::Constant([uv[0].clamp(0.0, 1.0), uv[1].clamp(0.0, 1.0)]),
            ..self.clone()
        }
    }

    pub fn from_parts(
        uv: UvMapping,
        color: Mlp,
        frequencies: usize,
        base_gain: f64,
        dims: (usize, usize, usize),
    ) -> Result<Self, AtlasError> {
        if color.input_dim() != encoded_dim(2, frequencies) || color.output_dim() != 3 {
            return Err(AtlasError::Config);
        }
        if let UvMapping::Network(m) = &uv {
            if m.input_dim() != encoded_dim(3, frequencies) || m.output_dim() != 2 {
                return Err(AtlasError::Config);
            }
        }
        Ok(Self {
            uv,
            color,
            frequencies,
            base_gain,
            width: dims.0,
            height: dims.1,
            frames: dims.2,
            loss_history: Vec::new(),
        })
    }

    fn check_frame(&self, frame: usize) -> Result<(), AtlasError> {
        if frame >= self.frames {
            Err(AtlasError::FrameOutOfRange {
                frame,
                frames: self.frames,
            })
        } else {
            Ok(())
        }
    }

    /// Atlas coordinates of every pixel of `frame`, row-major.
    pub fn uv_field(&self, frame: usize) -> Result<Vec<[f64; 2]>, AtlasError> {
        self.check_frame(frame)?;
        let n = self.width * self.height;
        let net = match &self.uv {
            UvMapping::Constant(uv) => return Ok(vec![*uv; n]),
            UvMapping::Network(net) => net,
        };
        let t = normalized(frame, self.frames);
        let mut out = Vec::with_capacity(n);
        let mut input = Vec::new();
        let mut tape = Tape::default();
        let g = self.base_gain as f32;
        for start in (0..n).step_by(EVAL_CHUNK) {
            let end = (start + EVAL_CHUNK).min(n);
            input.clear();
            for p in start..end {
                let c = [normalized(p % self.width, self.width), normalized(p / self.width, self.height), t];
                encode_into(&c, self.frequencies, &mut input);
            }
            net.forward(&input, end - start, &mut tape);
            for (p, o) in (start..end).zip(tape.output().chunks_exact(2)) {
                let (xn, yn) = (normalized(p % self.width, self.width), normalized(p / self.width, self.height));
                let u = 0.5 * (libm::tanhf(g * xn + o[0]) + 1.0);
                let v = 0.5 * (libm::tanhf(g * yn + o[1]) + 1.0);
                out.push([u as f64, v as f64]);
            }
        }
        Ok(out)
    }

    /// Atlas color at each coordinate.
    pub fn atlas_colors(&self, uvs: &[[f64; 2]]) -> Vec<[f64; 3]> {
        let mut out = Vec::with_capacity(uvs.len());
        let mut input = Vec::new();
        let mut tape = Tape::default();
        for chunk in uvs.chunks(EVAL_CHUNK) {
            input.clear();
            for uv in chunk {
                encode_into(&[2.0 * uv[0] as f32 - 1.0, 2.0 * uv[1] as f32 - 1.0], self.frequencies, &mut input);
            }
            self.color.forward(&input, chunk.len(), &mut tape);
            out.extend(
                tape.output()
                    .chunks_exact(3)
                    .map(|o| [sigmoid(o[0]) as f64, sigmoid(o[1]) as f64, sigmoid(o[2]) as f64]),
            );
        }
        out
    }

    /// `atlasNet(uvNet(pixel, frame))` for every pixel of `frame`.
    pub fn reconstruct(&self, frame: usize) -> Result<Image, AtlasError> {
        let uvs = self.uv_field(frame)?;
        let colors = self.atlas_colors(&uvs);
        Ok(Image::from_vec(self.width, self.height, 3, colors.into_iter().flatten().collect()).expect("frame-sized buffer"))
    }

    /// Atlas image on the regular texel-center grid.
    pub fn discretize(&self, width: usize, height: usize) -> Image {
        let uvs: Vec<[f64; 2]> = (0..width * height)
            .map(|p| [((p % width) as f64 + 0.5) / width as f64, ((p / width) as f64 + 0.5) / height as f64])
            .collect();
        let colors = self.atlas_colors(&uvs);
        Image::from_vec(width, height, 3, colors.into_iter().flatten().collect()).expect("atlas-sized buffer")
    }

    /// Frame `frame` re-rendered from an edited atlas by bilinear lookup at
    /// each pixel's uv.
    pub fn propagate_edit(&self, edited: &Image, frame: usize) -> Result<Image, AtlasError> {
        if edited.width() < 2 || edited.height() < 2 || edited.channels() != 3 {
            return Err(AtlasError::EditedAtlasShape {
                width: edited.width(),
                height: edited.height(),
                channels: edited.channels(),
            });
        }
        let uvs = self.uv_field(frame)?;
        let mut out = Image::new(self.width, self.height, 3);
        let mut rgb = [0.0; 3];
        for (p, uv) in uvs.iter().enumerate() {
            edited.sample_uv(uv[0], uv[1], &mut rgb);
            out.pixel_at_mut(p).copy_from_slice(&rgb);
        }
        Ok(out)
    }
}

/// Atlas image at [`DEFAULT_ATLAS_SIZE`] or the given size.
pub fn discretize_atlas(model: &AtlasModel, size: Option<(usize, usize)>) -> Image {
    let (w, h) = size.unwrap_or(DEFAULT_ATLAS_SIZE);
    model.discretize(w, h)
}

pub fn reconstruct(model: &AtlasModel, frame: usize) -> Result<Image, AtlasError> {
    model.reconstruct(frame)
}

pub fn propagate_edit(model: &AtlasModel, edited: &Image, frame: usize) -> Result<Image, AtlasError> {
    model.propagate_edit(edited, frame)
}

/// Paints a disc of uv radius `radius` at the atlas coordinate of `pixel`
/// in frame `source`, propagates it, and returns per frame the centroid (in
/// continuous pixel coordinates) of the change it causes, or `None` where
/// the dot is not visible.
pub fn track_dot(
    model: &AtlasModel,
    source: usize,
    pixel: (usize, usize),
    radius: f64,
    atlas_size: (usize, usize),
) -> Result<Vec<Option<[f64; 2]>>, AtlasError> {
    let (w, h) = (model.width(), model.height());
    if pixel.0 >= w || pixel.1 >= h {
        return Err(AtlasError::FrameShape { frame: source });
    }
    let center = model.uv_field(source)?[pixel.1 * w + pixel.0];
    let atlas = model.discretize(atlas_size.0, atlas_size.1);
    let mut edited = atlas.clone();
    for y in 0..atlas_size.1 {
        for x in 0..atlas_size.0 {
            let du = (x as f64 + 0.5) / atlas_size.0 as f64 - center[0];
            let dv = (y as f64 + 0.5) / atlas_size.1 as f64 - center[1];
            if du * du + dv * dv < radius * radius {
                edited.pixel_mut(x, y).copy_from_slice(&[1.0, 0.0, 1.0]);
            }
        }
    }
    (0..model.frames())
        .map(|f| {
            let a = model.propagate_edit(&atlas, f)?;
            let b = model.propagate_edit(&edited, f)?;
            let (mut sx, mut sy, mut sw) = (0.0, 0.0, 0.0);
            for i in 0..w * h {
                let d: f64 = a.pixel_at(i).iter().zip(b.pixel_at(i)).map(|(p, q)| (p - q).abs()).sum();
                sx += d * ((i % w) as f64 + 0.5);
                sy += d * ((i / w) as f64 + 0.5);
                sw += d;
            }
            Ok((sw > 1e-9).then(|| [sx / sw, sy / sw]))
        })
        .collect()
}

/// Checks an externally edited atlas against the requested resolution.
pub fn validate_edited_atlas(edited: &Image, expected: (usize, usize)) -> Result<(), AtlasError> {
    if (edited.width(), edited.height()) != expected || edited.channels() != 3 {
        return Err(AtlasError::EditedAtlasShape {
            width: edited.width(),
            height: edited.height(),
            channels: edited.channels(),
        });
    }
    Ok(())
}

struct Workspace {
    coords: Vec<[f32; 3]>,
    targets: Vec<[f32; 3]>,
    uv_in: Vec<f32>,
    uv: Vec<[f32; 2]>,
    tanh: Vec<[f32; 2]>,
    color_in: Vec<f32>,
    rgb_grad: Vec<f32>,
    color_in_grad: Vec<f32>,
    uv_grad: Vec<[f32; 2]>,
    pre_grad: Vec<f32>,
    uv_tape: Tape,
    color_tape: Tape,
    uv_param_grad: Vec<f32>,
    color_param_grad: Vec<f32>,
}

/// Fits an atlas to the background pixels of `clip` by minimizing mean
/// squared reconstruction error plus a uv rigidity penalty.
pub fn train_atlas(clip: &VideoClip, iters: usize, cfg: &AtlasConfig) -> Result<AtlasModel, AtlasError> {
    clip.validate()?;
    cfg.validate()?;
    let (w, h) = clip.dims();
    let n_frames = clip.len();
    let samples: Vec<u32> = (0..n_frames * w * h)
        .filter(|&s| {
            let (f, p) = (s / (w * h), s % (w * h));
            clip.is_background(f, p % w, p / w)
        })
        .map(|s| s as u32)
        .collect();
    if samples.is_empty() {
        return Err(AtlasError::AllMasked);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let freq = cfg.frequencies;
    let uv_dim = encoded_dim(3, freq);
    let color_dim = encoded_dim(2, freq);
    let mut uv_net = Mlp::new(&cfg.dims(uv_dim, 2), &mut rng);
    uv_net.zero_output_layer();
    let mut color_net = Mlp::new(&cfg.dims(color_dim, 3), &mut rng);
    let mut uv_adam = Adam::<f32>::new(AdamConfig::with_lr(cfg.lr), uv_net.params().len());
    let mut color_adam = Adam::<f32>::new(AdamConfig::with_lr(cfg.lr), color_net.params().len());

    let b = cfg.batch;
    let r = libm::round(cfg.rigidity_fraction * b as f64) as usize;
    let r = if cfg.rigidity_weight > 0.0 { r } else { 0 };
    let q = match &clip.flow {
        Some(_) if cfg.flow_weight > 0.0 && n_frames > 1 => libm::round(cfg.flow_fraction * b as f64) as usize,
        _ => 0,
    };
    let rows = b + 2 * r + q;
    let gain = cfg.base_gain as f32;
    let (hx, hy) = (2.0 / w as f32, 2.0 / h as f32);
    let inv_s2 = (1.0 / (cfg.rigidity_scale * cfg.rigidity_scale)) as f32;
    let rig_w = if r > 0 { (cfg.rigidity_weight / r as f64) as f32 } else { 0.0 };
    let mse_scale = 1.0 / (3 * b) as f32;
    // uv offsets measured in reference pixels
    let flow_w = if q > 0 {
        (cfg.flow_weight / (q as f64 * cfg.rigidity_scale * cfg.rigidity_scale * (hx * hx) as f64)) as f32
    } else {
        0.0
    };
    let mut flow_active = vec![false; q];

    let mut ws = Workspace {
        coords: vec![[0.0; 3]; rows],
        targets: vec![[0.0; 3]; b],
        uv_in: Vec::with_capacity(rows * uv_dim),
        uv: vec![[0.0; 2]; rows],
        tanh: vec![[0.0; 2]; rows],
        color_in: Vec::with_capacity(b * color_dim),
        rgb_grad: vec![0.0; b * 3],
        color_in_grad: Vec::new(),
        uv_grad: vec![[0.0; 2]; rows],
        pre_grad: vec![0.0; rows * 2],
        uv_tape: Tape::default(),
        color_tape: Tape::default(),
        uv_param_grad: vec![0.0; uv_net.params().len()],
        color_param_grad: vec![0.0; color_net.params().len()],
    };
    let mut history = Vec::new();
    let record_every = (iters / 100).max(1);
    let decay = if iters > 1 {
        libm::pow(cfg.lr_final_fraction, 1.0 / (iters - 1) as f64)
    } else {
        1.0
    };
    let mut lr = cfg.lr;

    for it in 0..iters {
        for k in 0..b {
            let s = samples[rng.random_range(0..samples.len())] as usize;
            let (f, p) = (s / (w * h), s % (w * h));
            let (x, y) = (p % w, p / w);
            ws.coords[k] = [normalized(x, w), normalized(y, h), normalized(f, n_frames)];
            let px = clip.frames[f].pixel(x, y);
            ws.targets[k] = [px[0] as f32, px[1] as f32, px[2] as f32];
        }
        for k in 0..r {
            let c = ws.coords[k];
            ws.coords[b + 2 * k] = [c[0] + hx, c[1], c[2]];
            ws.coords[b + 2 * k + 1] = [c[0], c[1] + hy, c[2]];
        }
        if let Some(flows) = &clip.flow {
            for k in 0..q {
                // sample k sits at pixel p of frame f; its correspondent is p + flow in f − 1
                let c = ws.coords[k];
                let f = libm::roundf(((c[2] + 1.0) * n_frames as f32 - 1.0) / 2.0) as usize;
                let x = libm::roundf(((c[0] + 1.0) * w as f32 - 1.0) / 2.0) as usize;
                let y = libm::roundf(((c[1] + 1.0) * h as f32 - 1.0) / 2.0) as usize;
                let row = b + 2 * r + k;
                flow_active[k] = false;
                ws.coords[row] = c;
                if f == 0 {
                    continue;
                }
                let d = flows[f - 1].get(x, y);
                let (sx, sy) = (x as f64 + d[0], y as f64 + d[1]);
                if sx < 0.0 || sy < 0.0 || sx > (w - 1) as f64 || sy > (h - 1) as f64 {
                    continue;
                }
                if !clip.is_background(f - 1, libm::round(sx) as usize, libm::round(sy) as usize) {
                    continue;
                }
                flow_active[k] = true;
                ws.coords[row] = [c[0] + d[0] as f32 * hx, c[1] + d[1] as f32 * hy, normalized(f - 1, n_frames)];
            }
        }
        ws.uv_in.clear();
        for c in &ws.coords {
            encode_into(c, freq, &mut ws.uv_in);
        }
        uv_net.forward(&ws.uv_in, rows, &mut ws.uv_tape);
        for (k, o) in ws.uv_tape.output().chunks_exact(2).enumerate() {
            let c = ws.coords[k];
            let t = [libm::tanhf(gain * c[0] + o[0]), libm::tanhf(gain * c[1] + o[1])];
            ws.tanh[k] = t;
            ws.uv[k] = [0.5 * (t[0] + 1.0), 0.5 * (t[1] + 1.0)];
        }

        ws.color_in.clear();
        for uv in &ws.uv[..b] {
            encode_into(&[2.0 * uv[0] - 1.0, 2.0 * uv[1] - 1.0], freq, &mut ws.color_in);
        }
        color_net.forward(&ws.color_in, b, &mut ws.color_tape);
        let mut loss = 0.0f64;
        for (k, o) in ws.color_tape.output().chunks_exact(3).enumerate() {
            for c in 0..3 {
                let s = sigmoid(o[c]);
                let d = s - ws.targets[k][c];
                loss += (d * d) as f64;
                ws.rgb_grad[3 * k + c] = 2.0 * d * mse_scale * s * (1.0 - s);
            }
        }
        loss *= mse_scale as f64;
        color_net.backward(&mut ws.color_tape, &ws.rgb_grad, &mut ws.color_param_grad, Some(&mut ws.color_in_grad));

        ws.uv_grad.iter_mut().for_each(|g| *g = [0.0; 2]);
        for k in 0..b {
            let uv = ws.uv[k];
            let mut g = [0.0f32; 2];
            encode_backward(
                &[2.0 * uv[0] - 1.0, 2.0 * uv[1] - 1.0],
                freq,
                &ws.color_in_grad[k * color_dim..(k + 1) * color_dim],
                &mut g,
            );
            ws.uv_grad[k] = [2.0 * g[0], 2.0 * g[1]];
        }

        // ‖JᵀJ/s² − I‖² with forward-difference Jacobians.
        for k in 0..r {
            let (u0, ux, uy) = (ws.uv[k], ws.uv[b + 2 * k], ws.uv[b + 2 * k + 1]);
            let j = [[(ux[0] - u0[0]) / hx, (uy[0] - u0[0]) / hy], [(ux[1] - u0[1]) / hx, (uy[1] - u0[1]) / hy]];
            let a00 = (j[0][0] * j[0][0] + j[1][0] * j[1][0]) * inv_s2 - 1.0;
            let a11 = (j[0][1] * j[0][1] + j[1][1] * j[1][1]) * inv_s2 - 1.0;
            let a01 = (j[0][0] * j[0][1] + j[1][0] * j[1][1]) * inv_s2;
            loss += (rig_w * (a00 * a00 + a11 * a11 + 2.0 * a01 * a01)) as f64;
            let e = [[a00, a01], [a01, a11]];
            let s = 4.0 * rig_w * inv_s2;
            let mut gj = [[0.0f32; 2]; 2];
            for row in 0..2 {
                for col in 0..2 {
                    gj[row][col] = s * (j[row][0] * e[0][col] + j[row][1] * e[1][col]);
                }
            }
            for row in 0..2 {
                ws.uv_grad[b + 2 * k][row] += gj[row][0] / hx;
                ws.uv_grad[b + 2 * k + 1][row] += gj[row][1] / hy;
                ws.uv_grad[k][row] -= gj[row][0] / hx + gj[row][1] / hy;
            }
        }

        for k in 0..q {
            if !flow_active[k] {
                continue;
            }
            let row = b + 2 * r + k;
            let d = [ws.uv[k][0] - ws.uv[row][0], ws.uv[k][1] - ws.uv[row][1]];
            loss += (flow_w * (d[0] * d[0] + d[1] * d[1])) as f64;
            for a in 0..2 {
                ws.uv_grad[k][a] += 2.0 * flow_w * d[a];
                ws.uv_grad[row][a] -= 2.0 * flow_w * d[a];
            }
        }

        for (k, g) in ws.uv_grad.iter().enumerate() {
            let t = ws.tanh[k];
            ws.pre_grad[2 * k] = 0.5 * g[0] * (1.0 - t[0] * t[0]);
            ws.pre_grad[2 * k + 1] = 0.5 * g[1] * (1.0 - t[1] * t[1]);
        }
        uv_net.backward(&mut ws.uv_tape, &ws.pre_grad, &mut ws.uv_param_grad, None);

        uv_adam.set_lr(lr);
        color_adam.set_lr(lr);
        uv_adam.update(uv_net.params_mut(), &ws.uv_param_grad);
        color_adam.update(color_net.params_mut(), &ws.color_param_grad);
        ws.uv_param_grad.fill(0.0);
        ws.color_param_grad.fill(0.0);
        lr *= decay;

        if it % record_every == 0 || it + 1 == iters {
            history.push((it, loss));
        }
    }

    Ok(AtlasModel {
        uv: UvMapping::Network(uv_net),
        color: color_net,
        frequencies: freq,
        base_gain: cfg.base_gain,
        width: w,
        height: h,
        frames: n_frames,
        loss_history: history,
    })
}
