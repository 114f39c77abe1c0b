//! The augmentation zoo, stochastic policy composition, and exact outcome
//! enumeration for discretely stochastic transforms.
//!
//! Conventions: every transform preserves image dimensions; geometric maps
//! use bilinear interpolation with zero fill; noise transforms operate in
//! scaled `[0, 1]` space and clip back into it.

use crate::error::{Error, Result};
use crate::image::Image;
use crate::rng::Stream;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

const DEG: f64 = core::f64::consts::PI / 180.0;

#[derive(Debug, Clone, PartialEq)]
pub enum TransformKind {
    Identity,
    FlipLR,
    FlipUD,
    /// Zero-pad by `pad` on each side, crop back at a random offset.
    Crop { pad: usize },
    /// Fill a size x size square (center uniform over the image, clipped to
    /// bounds) with a constant gray value. The fill defaults to mid-gray and
    /// is usually set to the dataset's per-channel mean.
    Cutout { size: usize, fill: Option<Vec<f32>> },
    /// Rotate by exactly `degrees`, direction chosen at random.
    RotateFixed { degrees: f64 },
    /// Rotate by a random amount up to `max_degrees`, random direction.
    RotateVariable { max_degrees: f64 },
    /// Rotate by one of 0, 90, 180, 270 degrees, uniformly.
    RotateSquare,
    ShearFixed { degrees: f64 },
    ShearVariable { max_degrees: f64 },
    /// Gaussian noise in a patch contained entirely within the image;
    /// sigma drawn uniformly from `[0, sigma_max]` per application.
    PatchGaussianFixed { patch: usize, sigma_max: f64 },
    /// Patch size drawn uniformly up to `max_patch`; the patch is centered
    /// anywhere on the image and may extend past the bounds.
    PatchGaussianVariable { max_patch: usize, sigma_max: f64 },
    /// Gaussian noise over the whole image.
    FullGaussian { sigma_max: f64 },
    /// Like Cutout, but the patch pixels are resampled uniformly at random.
    RandomErasing { size: usize },
    /// Adds `delta` to every pixel below `threshold`.
    SolarizeAdd { threshold: f64, delta: f64 },
}

impl TransformKind {
    pub fn name(&self) -> &'static str {
        match self {
            TransformKind::Identity => "Identity",
            TransformKind::FlipLR => "FlipLR",
            TransformKind::FlipUD => "FlipUD",
            TransformKind::Crop { .. } => "Crop",
            TransformKind::Cutout { .. } => "Cutout",
            TransformKind::RotateFixed { .. }
            | TransformKind::RotateVariable { .. }
            | TransformKind::RotateSquare => "Rotate",
            TransformKind::ShearFixed { .. } | TransformKind::ShearVariable { .. } => "Shear",
            TransformKind::PatchGaussianFixed { .. }
            | TransformKind::PatchGaussianVariable { .. } => "PatchGaussian",
            TransformKind::FullGaussian { .. } => "FullGaussian",
            TransformKind::RandomErasing { .. } => "RandomErasing",
            TransformKind::SolarizeAdd { .. } => "SolarizeAdd",
        }
    }
}

/// A transform plus its application probability.
#[derive(Debug, Clone, PartialEq)]
pub struct TransformSpec {
    pub kind: TransformKind,
    pub probability: f64,
}

impl TransformSpec {
    pub fn new(kind: TransformKind, probability: f64) -> Result<TransformSpec> {
        if !(0.0..=1.0).contains(&probability) || !probability.is_finite() {
            return Err(Error::Validation(format!(
                "probability {probability} outside [0, 1]"
            )));
        }
        let mag_ok = match &kind {
            TransformKind::RotateFixed { degrees } | TransformKind::ShearFixed { degrees } => {
                *degrees >= 0.0
            }
            TransformKind::RotateVariable { max_degrees }
            | TransformKind::ShearVariable { max_degrees } => *max_degrees >= 0.0,
            TransformKind::PatchGaussianFixed { sigma_max, .. }
            | TransformKind::PatchGaussianVariable { sigma_max, .. }
            | TransformKind::FullGaussian { sigma_max } => *sigma_max >= 0.0,
            TransformKind::SolarizeAdd { threshold, delta } => *threshold >= 0.0 && *delta >= 0.0,
            _ => true,
        };
        if !mag_ok {
            return Err(Error::Validation(format!(
                "negative magnitude for {}",
                kind.name()
            )));
        }
        Ok(TransformSpec { kind, probability })
    }

    pub fn identity() -> TransformSpec {
        TransformSpec {
            kind: TransformKind::Identity,
            probability: 1.0,
        }
    }

    /// Dimension-dependent validity checks, run before the spec is first
    /// applied to images of a known size.
    pub fn validate_for(&self, height: usize, width: usize) -> Result<()> {
        let side = height.min(width);
        match &self.kind {
            TransformKind::Cutout { size, .. } if *size > side => Err(Error::Validation(format!(
                "cutout size {size} exceeds image side {side}"
            ))),
            TransformKind::RandomErasing { size } if *size > side => Err(Error::Validation(
                format!("erasing size {size} exceeds image side {side}"),
            )),
            TransformKind::PatchGaussianFixed { patch, .. } if *patch > side => {
                Err(Error::Validation(format!(
                    "patch size {patch} cannot be contained in image side {side}"
                )))
            }
            TransformKind::RotateSquare if height != width => Err(Error::Validation(
                "square rotation requires a square image".to_string(),
            )),
            _ => Ok(()),
        }
    }

    /// Whether this spec has an exact, enumerable outcome distribution.
    pub fn is_discrete(&self) -> bool {
        matches!(
            self.kind,
            TransformKind::Identity
                | TransformKind::FlipLR
                | TransformKind::FlipUD
                | TransformKind::Crop { .. }
                | TransformKind::Cutout { .. }
                | TransformKind::RotateFixed { .. }
                | TransformKind::RotateSquare
                | TransformKind::ShearFixed { .. }
        )
    }

    pub fn label(&self) -> String {
        let pct = fmt_num(self.probability * 100.0);
        match &self.kind {
            TransformKind::Identity => "Identity".to_string(),
            TransformKind::FlipLR => format!("FlipLR({pct}%)"),
            TransformKind::FlipUD => format!("FlipUD({pct}%)"),
            TransformKind::Crop { pad } => format!("Crop({pad},{pct}%)"),
            TransformKind::Cutout { size, .. } => format!("Cutout({size},{pct}%)"),
            TransformKind::RotateFixed { degrees } => {
                format!("Rotate(fixed,{}deg,{pct}%)", fmt_num(*degrees))
            }
            TransformKind::RotateVariable { max_degrees } => {
                format!("Rotate(variable,{}deg,{pct}%)", fmt_num(*max_degrees))
            }
            TransformKind::RotateSquare => format!("Rotate(square,{pct}%)"),
            TransformKind::ShearFixed { degrees } => {
                format!("Shear(fixed,{}deg,{pct}%)", fmt_num(*degrees))
            }
            TransformKind::ShearVariable { max_degrees } => {
                format!("Shear(variable,{}deg,{pct}%)", fmt_num(*max_degrees))
            }
            TransformKind::PatchGaussianFixed { patch, sigma_max } => {
                format!("PatchGaussian(fixed,{patch},{},{pct}%)", fmt_num(*sigma_max))
            }
            TransformKind::PatchGaussianVariable { max_patch, sigma_max } => format!(
                "PatchGaussian(variable,{max_patch},{},{pct}%)",
                fmt_num(*sigma_max)
            ),
            TransformKind::FullGaussian { sigma_max } => {
                format!("FullGaussian({},{pct}%)", fmt_num(*sigma_max))
            }
            TransformKind::RandomErasing { size } => format!("RandomErasing({size},{pct}%)"),
            TransformKind::SolarizeAdd { threshold, delta } => format!(
                "SolarizeAdd({},{},{pct}%)",
                fmt_num(*threshold),
                fmt_num(*delta)
            ),
        }
    }

    /// Parses a canonical label, e.g. `Rotate(fixed,60deg,50%)`.
    pub fn parse(text: &str) -> Result<TransformSpec> {
        let text = text.trim();
        if text == "Identity" {
            return Ok(TransformSpec::identity());
        }
        let open = text
            .find('(')
            .ok_or_else(|| Error::Validation(format!("malformed transform label `{text}`")))?;
        if !text.ends_with(')') {
            return Err(Error::Validation(format!(
                "malformed transform label `{text}`"
            )));
        }
        let name = &text[..open];
        let args: Vec<&str> = text[open + 1..text.len() - 1]
            .split(',')
            .map(str::trim)
            .collect();
        let probability = parse_percent(args.last().copied().unwrap_or(""), text)?;
        let inner = &args[..args.len() - 1];
        let kind = match (name, inner) {
            ("FlipLR", []) => TransformKind::FlipLR,
            ("FlipUD", []) => TransformKind::FlipUD,
            ("Crop", [pad]) => TransformKind::Crop {
                pad: parse_count(pad, text)?,
            },
            ("Cutout", [size]) => TransformKind::Cutout {
                size: parse_count(size, text)?,
                fill: None,
            },
            ("Rotate", ["square"]) => TransformKind::RotateSquare,
            ("Rotate", ["fixed", deg]) => TransformKind::RotateFixed {
                degrees: parse_degrees(deg, text)?,
            },
            ("Rotate", ["variable", deg]) => TransformKind::RotateVariable {
                max_degrees: parse_degrees(deg, text)?,
            },
            ("Shear", ["fixed", deg]) => TransformKind::ShearFixed {
                degrees: parse_degrees(deg, text)?,
            },
            ("Shear", ["variable", deg]) => TransformKind::ShearVariable {
                max_degrees: parse_degrees(deg, text)?,
            },
            ("PatchGaussian", ["fixed", patch, sigma]) => TransformKind::PatchGaussianFixed {
                patch: parse_count(patch, text)?,
                sigma_max: parse_float(sigma, text)?,
            },
            ("PatchGaussian", ["variable", patch, sigma]) => {
                TransformKind::PatchGaussianVariable {
                    max_patch: parse_count(patch, text)?,
                    sigma_max: parse_float(sigma, text)?,
                }
            }
            ("FullGaussian", [sigma]) => TransformKind::FullGaussian {
                sigma_max: parse_float(sigma, text)?,
            },
            ("RandomErasing", [size]) => TransformKind::RandomErasing {
                size: parse_count(size, text)?,
            },
            ("SolarizeAdd", [threshold, delta]) => TransformKind::SolarizeAdd {
                threshold: parse_float(threshold, text)?,
                delta: parse_float(delta, text)?,
            },
            _ => {
                return Err(Error::Validation(format!(
                    "unknown transform label `{text}`"
                )))
            }
        };
        TransformSpec::new(kind, probability)
    }
}

fn fmt_num(x: f64) -> String {
    format!("{x}")
}

fn parse_percent(arg: &str, ctx: &str) -> Result<f64> {
    let digits = arg
        .strip_suffix('%')
        .ok_or_else(|| Error::Validation(format!("missing probability in `{ctx}`")))?;
    let pct: f64 = digits
        .parse()
        .map_err(|_| Error::Validation(format!("bad probability `{arg}` in `{ctx}`")))?;
    Ok(pct / 100.0)
}

fn parse_degrees(arg: &str, ctx: &str) -> Result<f64> {
    let digits = arg
        .strip_suffix("deg")
        .ok_or_else(|| Error::Validation(format!("missing `deg` suffix in `{ctx}`")))?;
    digits
        .parse()
        .map_err(|_| Error::Validation(format!("bad angle `{arg}` in `{ctx}`")))
}

fn parse_count(arg: &str, ctx: &str) -> Result<usize> {
    arg.parse()
        .map_err(|_| Error::Validation(format!("bad count `{arg}` in `{ctx}`")))
}

fn parse_float(arg: &str, ctx: &str) -> Result<f64> {
    arg.parse()
        .map_err(|_| Error::Validation(format!("bad number `{arg}` in `{ctx}`")))
}

/// One stochastic parameter draw of a transform.
#[derive(Debug, Clone, PartialEq)]
pub enum Draw {
    Identity,
    FlipLR,
    FlipUD,
    /// Signed degrees.
    Rotate(f64),
    /// Quarter turns, 1..=3 (0 is the identity arm).
    QuarterRotate(u8),
    Shear(f64),
    /// Offset relative to the centered crop; (0, 0) is the identity arm.
    CropOffset(i32, i32),
    Cutout { cy: usize, cx: usize },
    PatchGaussian { top: isize, left: isize, size: usize, sigma: f64 },
    FullGaussian { sigma: f64 },
    RandomErase { cy: usize, cx: usize },
    SolarizeAdd,
}

/// Draws the transform's stochastic parameters for an image of the given
/// size. Identity-equivalent draws collapse to `Draw::Identity`, mirroring
/// the outcome enumeration.
pub fn draw(spec: &TransformSpec, height: usize, width: usize, rng: &mut Stream) -> Draw {
    if !rng.bernoulli(spec.probability) {
        return Draw::Identity;
    }
    match &spec.kind {
        TransformKind::Identity => Draw::Identity,
        TransformKind::FlipLR => Draw::FlipLR,
        TransformKind::FlipUD => Draw::FlipUD,
        TransformKind::Crop { pad } => {
            if *pad == 0 {
                return Draw::Identity;
            }
            let m = 2 * *pad as i32 + 1;
            let dy = rng.below(m as usize) as i32 - *pad as i32;
            let dx = rng.below(m as usize) as i32 - *pad as i32;
            if dy == 0 && dx == 0 {
                Draw::Identity
            } else {
                Draw::CropOffset(dy, dx)
            }
        }
        TransformKind::Cutout { size, .. } => {
            if *size == 0 {
                return Draw::Identity;
            }
            Draw::Cutout {
                cy: rng.below(height),
                cx: rng.below(width),
            }
        }
        TransformKind::RotateFixed { degrees } => {
            if *degrees == 0.0 {
                return Draw::Identity;
            }
            let sign = if rng.below(2) == 0 { 1.0 } else { -1.0 };
            Draw::Rotate(sign * degrees)
        }
        TransformKind::RotateVariable { max_degrees } => {
            let sign = if rng.below(2) == 0 { 1.0 } else { -1.0 };
            Draw::Rotate(sign * rng.uniform_in(0.0, *max_degrees))
        }
        TransformKind::RotateSquare => {
            let q = rng.below(4) as u8;
            if q == 0 {
                Draw::Identity
            } else {
                Draw::QuarterRotate(q)
            }
        }
        TransformKind::ShearFixed { degrees } => {
            if *degrees == 0.0 {
                return Draw::Identity;
            }
            let sign = if rng.below(2) == 0 { 1.0 } else { -1.0 };
            Draw::Shear(sign * degrees)
        }
        TransformKind::ShearVariable { max_degrees } => {
            let sign = if rng.below(2) == 0 { 1.0 } else { -1.0 };
            Draw::Shear(sign * rng.uniform_in(0.0, *max_degrees))
        }
        TransformKind::PatchGaussianFixed { patch, sigma_max } => {
            let size = (*patch).min(height.min(width));
            let top = rng.below(height - size + 1) as isize;
            let left = rng.below(width - size + 1) as isize;
            Draw::PatchGaussian {
                top,
                left,
                size,
                sigma: rng.uniform_in(0.0, *sigma_max),
            }
        }
        TransformKind::PatchGaussianVariable { max_patch, sigma_max } => {
            let size = 1 + rng.below((*max_patch).max(1));
            let cy = rng.below(height) as isize;
            let cx = rng.below(width) as isize;
            Draw::PatchGaussian {
                top: cy - (size / 2) as isize,
                left: cx - (size / 2) as isize,
                size,
                sigma: rng.uniform_in(0.0, *sigma_max),
            }
        }
        TransformKind::FullGaussian { sigma_max } => Draw::FullGaussian {
            sigma: rng.uniform_in(0.0, *sigma_max),
        },
        TransformKind::RandomErasing { size } => {
            if *size == 0 {
                return Draw::Identity;
            }
            Draw::RandomErase {
                cy: rng.below(height),
                cx: rng.below(width),
            }
        }
        TransformKind::SolarizeAdd { .. } => Draw::SolarizeAdd,
    }
}

/// Descriptor string for a discrete draw; matches the outcome enumeration.
pub fn descriptor(d: &Draw) -> String {
    match d {
        Draw::Identity => "identity".to_string(),
        Draw::FlipLR | Draw::FlipUD => "flip".to_string(),
        Draw::Rotate(deg) => format!("rotate({})", fmt_num(*deg)),
        Draw::QuarterRotate(q) => format!("rotate({})", *q as u32 * 90),
        Draw::Shear(deg) => format!("shear({})", fmt_num(*deg)),
        Draw::CropOffset(dy, dx) => format!("offset({dy},{dx})"),
        Draw::Cutout { cy, cx } => format!("center({cy},{cx})"),
        _ => "continuous".to_string(),
    }
}

/// Applies a drawn transform to an image. The stream supplies per-pixel
/// randomness for the noise transforms only.
pub fn apply_drawn(spec: &TransformSpec, img: &Image, d: &Draw, rng: &mut Stream) -> Image {
    let (h, w, ch) = (img.height, img.width, img.channels);
    match d {
        Draw::Identity => img.clone(),
        Draw::FlipLR => {
            let mut out = Image::zeros(h, w, ch);
            for r in 0..h {
                for c in 0..w {
                    for k in 0..ch {
                        out.set(r, c, k, img.get(r, w - 1 - c, k));
                    }
                }
            }
            out
        }
        Draw::FlipUD => {
            let mut out = Image::zeros(h, w, ch);
            for r in 0..h {
                for c in 0..w {
                    for k in 0..ch {
                        out.set(r, c, k, img.get(h - 1 - r, c, k));
                    }
                }
            }
            out
        }
        Draw::Rotate(deg) => {
            let a = deg * DEG;
            let (sin, cos) = (libm::sin(a), libm::cos(a));
            let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
            let mut out = Image::zeros(h, w, ch);
            for r in 0..h {
                for c in 0..w {
                    let dy = r as f64 - cy;
                    let dx = c as f64 - cx;
                    // Inverse rotation of the output grid.
                    let sy = cy + cos * dy - sin * dx;
                    let sx = cx + sin * dy + cos * dx;
                    for k in 0..ch {
                        out.set(r, c, k, img.sample_bilinear(sy, sx, k));
                    }
                }
            }
            out
        }
        Draw::QuarterRotate(q) => {
            debug_assert_eq!(h, w);
            let n = h;
            let mut out = Image::zeros(h, w, ch);
            for r in 0..n {
                for c in 0..n {
                    let (sr, sc) = match q {
                        1 => (c, n - 1 - r),
                        2 => (n - 1 - r, n - 1 - c),
                        _ => (n - 1 - c, r),
                    };
                    for k in 0..ch {
                        out.set(r, c, k, img.get(sr, sc, k));
                    }
                }
            }
            out
        }
        Draw::Shear(deg) => {
            let t = libm::tan(deg * DEG);
            let cy = (h as f64 - 1.0) / 2.0;
            let mut out = Image::zeros(h, w, ch);
            for r in 0..h {
                for c in 0..w {
                    let sx = c as f64 - t * (r as f64 - cy);
                    for k in 0..ch {
                        out.set(r, c, k, img.sample_bilinear(r as f64, sx, k));
                    }
                }
            }
            out
        }
        Draw::CropOffset(dy, dx) => {
            let mut out = Image::zeros(h, w, ch);
            for r in 0..h {
                for c in 0..w {
                    for k in 0..ch {
                        out.set(
                            r,
                            c,
                            k,
                            img.get_or_zero(r as isize + *dy as isize, c as isize + *dx as isize, k),
                        );
                    }
                }
            }
            out
        }
        Draw::Cutout { cy, cx } => {
            let (size, fill) = match &spec.kind {
                TransformKind::Cutout { size, fill } => (*size, fill.clone()),
                _ => unreachable!(),
            };
            let mut out = img.clone();
            let top = *cy as isize - (size / 2) as isize;
            let left = *cx as isize - (size / 2) as isize;
            for r in top.max(0)..(top + size as isize).min(h as isize) {
                for c in left.max(0)..(left + size as isize).min(w as isize) {
                    for k in 0..ch {
                        let v = fill.as_ref().map(|f| f[k]).unwrap_or(0.5);
                        out.set(r as usize, c as usize, k, v);
                    }
                }
            }
            out
        }
        Draw::PatchGaussian { top, left, size, sigma } => {
            let mut out = img.clone();
            for r in (*top).max(0)..(top + *size as isize).min(h as isize) {
                for c in (*left).max(0)..(left + *size as isize).min(w as isize) {
                    for k in 0..ch {
                        let v = out.get(r as usize, c as usize, k) as f64
                            + sigma * rng.normal();
                        out.set(r as usize, c as usize, k, (v as f32).clamp(0.0, 1.0));
                    }
                }
            }
            out
        }
        Draw::FullGaussian { sigma } => {
            let mut out = img.clone();
            for v in out.values.iter_mut() {
                *v = ((*v as f64 + sigma * rng.normal()) as f32).clamp(0.0, 1.0);
            }
            out
        }
        Draw::RandomErase { cy, cx } => {
            let size = match &spec.kind {
                TransformKind::RandomErasing { size } => *size,
                _ => unreachable!(),
            };
            let mut out = img.clone();
            let top = *cy as isize - (size / 2) as isize;
            let left = *cx as isize - (size / 2) as isize;
            for r in top.max(0)..(top + size as isize).min(h as isize) {
                for c in left.max(0)..(left + size as isize).min(w as isize) {
                    for k in 0..ch {
                        out.set(r as usize, c as usize, k, rng.uniform() as f32);
                    }
                }
            }
            out
        }
        Draw::SolarizeAdd => {
            let (threshold, delta) = match &spec.kind {
                TransformKind::SolarizeAdd { threshold, delta } => (*threshold, *delta),
                _ => unreachable!(),
            };
            let mut out = img.clone();
            for v in out.values.iter_mut() {
                if (*v as f64) < threshold {
                    *v = ((*v as f64 + delta) as f32).min(1.0);
                }
            }
            out
        }
    }
}

/// Applies the transform: with probability `1 - p` the image passes through
/// unchanged; otherwise the kind-specific map runs with fresh randomness.
pub fn apply(spec: &TransformSpec, img: &Image, rng: &mut Stream) -> Image {
    let d = draw(spec, img.height, img.width, rng);
    apply_drawn(spec, img, &d, rng)
}

/// Exact distribution over a discrete transform's parameter draws.
#[derive(Debug, Clone, PartialEq)]
pub struct OutcomeDistribution {
    /// `(descriptor, probability)` pairs; probabilities sum to 1 and are all
    /// positive. Identity-equivalent arms are merged into `identity`.
    pub outcomes: Vec<(String, f64)>,
    pub is_discrete: bool,
}

impl OutcomeDistribution {
    fn from_arms(identity_mass: f64, arms: Vec<(String, f64)>) -> OutcomeDistribution {
        let mut outcomes = Vec::with_capacity(arms.len() + 1);
        if identity_mass > 0.0 {
            outcomes.push(("identity".to_string(), identity_mass));
        }
        outcomes.extend(arms.into_iter().filter(|(_, p)| *p > 0.0));
        OutcomeDistribution {
            outcomes,
            is_discrete: true,
        }
    }

    /// Shannon entropy in nats.
    pub fn entropy(&self) -> f64 {
        -self
            .outcomes
            .iter()
            .map(|(_, p)| p * libm::log(*p))
            .sum::<f64>()
    }

    pub fn probability_of(&self, descriptor: &str) -> f64 {
        self.outcomes
            .iter()
            .find(|(d, _)| d == descriptor)
            .map(|(_, p)| *p)
            .unwrap_or(0.0)
    }
}

/// Enumerates the exact outcome distribution of a discretely stochastic
/// transform on images of the given size. Continuous kinds are rejected and
/// the caller falls back to loss-based diversity.
pub fn enumerate_outcomes(
    spec: &TransformSpec,
    height: usize,
    width: usize,
) -> Result<OutcomeDistribution> {
    if !spec.is_discrete() {
        return Err(Error::NotDiscrete(spec.label()));
    }
    let p = spec.probability;
    let dist = match &spec.kind {
        TransformKind::Identity => OutcomeDistribution::from_arms(1.0, vec![]),
        TransformKind::FlipLR | TransformKind::FlipUD => {
            OutcomeDistribution::from_arms(1.0 - p, vec![("flip".to_string(), p)])
        }
        TransformKind::RotateFixed { degrees } | TransformKind::ShearFixed { degrees } => {
            if *degrees == 0.0 {
                OutcomeDistribution::from_arms(1.0, vec![])
            } else {
                let tag = if matches!(spec.kind, TransformKind::RotateFixed { .. }) {
                    "rotate"
                } else {
                    "shear"
                };
                OutcomeDistribution::from_arms(
                    1.0 - p,
                    vec![
                        (format!("{tag}({})", fmt_num(*degrees)), p / 2.0),
                        (format!("{tag}({})", fmt_num(-*degrees)), p / 2.0),
                    ],
                )
            }
        }
        TransformKind::RotateSquare => OutcomeDistribution::from_arms(
            1.0 - p + p / 4.0,
            (1..4).map(|q| (format!("rotate({})", q * 90), p / 4.0)).collect(),
        ),
        TransformKind::Crop { pad } => {
            if *pad == 0 {
                OutcomeDistribution::from_arms(1.0, vec![])
            } else {
                let k = *pad as i32;
                let m = ((2 * k + 1) * (2 * k + 1)) as f64;
                let mut arms = Vec::new();
                for dy in -k..=k {
                    for dx in -k..=k {
                        if dy != 0 || dx != 0 {
                            arms.push((format!("offset({dy},{dx})"), p / m));
                        }
                    }
                }
                OutcomeDistribution::from_arms(1.0 - p + p / m, arms)
            }
        }
        TransformKind::Cutout { size, .. } => {
            if *size == 0 {
                OutcomeDistribution::from_arms(1.0, vec![])
            } else {
                let m = (height * width) as f64;
                let mut arms = Vec::with_capacity(height * width);
                for cy in 0..height {
                    for cx in 0..width {
                        arms.push((format!("center({cy},{cx})"), p / m));
                    }
                }
                OutcomeDistribution::from_arms(1.0 - p, arms)
            }
        }
        _ => unreachable!("is_discrete gate"),
    };
    debug_assert!((dist.outcomes.iter().map(|(_, q)| q).sum::<f64>() - 1.0).abs() < 1e-12);
    Ok(dist)
}

/// Ordered stochastic composition: every pre-op in list order, then Crop,
/// then FlipLR, then Cutout.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Policy {
    pub pre_ops: Vec<TransformSpec>,
    pub crop: Option<TransformSpec>,
    pub flip_lr: Option<TransformSpec>,
    pub cutout: Option<TransformSpec>,
}

impl Policy {
    pub fn identity() -> Policy {
        Policy::default()
    }

    pub fn single(spec: TransformSpec) -> Policy {
        Policy::from_ops(alloc::vec![spec]).expect("single op cannot collide")
    }

    /// Routes ops into their mandated slots; Crop/FlipLR/Cutout land in the
    /// standard trailing positions regardless of list order.
    pub fn from_ops(ops: Vec<TransformSpec>) -> Result<Policy> {
        let mut policy = Policy::identity();
        for op in ops {
            let slot = match op.kind {
                TransformKind::Crop { .. } => &mut policy.crop,
                TransformKind::FlipLR => &mut policy.flip_lr,
                TransformKind::Cutout { .. } => &mut policy.cutout,
                _ => {
                    policy.pre_ops.push(op);
                    continue;
                }
            };
            if slot.is_some() {
                return Err(Error::Validation(format!(
                    "duplicate {} op in policy",
                    op.kind.name()
                )));
            }
            *slot = Some(op);
        }
        Ok(policy)
    }

    /// The constituent transforms in application order.
    pub fn ops_in_order(&self) -> Vec<&TransformSpec> {
        let mut ops: Vec<&TransformSpec> = self.pre_ops.iter().collect();
        ops.extend(self.crop.iter());
        ops.extend(self.flip_lr.iter());
        ops.extend(self.cutout.iter());
        ops
    }

    pub fn is_identity(&self) -> bool {
        self.ops_in_order()
            .iter()
            .all(|op| matches!(op.kind, TransformKind::Identity))
    }

    pub fn validate_for(&self, height: usize, width: usize) -> Result<()> {
        for op in self.ops_in_order() {
            op.validate_for(height, width)?;
        }
        Ok(())
    }

    /// Sets the Cutout gray fill (per-channel dataset means, computed on
    /// scaled but unnormalized values).
    pub fn set_cutout_fill(&mut self, means: &[f32]) {
        if let Some(spec) = &mut self.cutout {
            if let TransformKind::Cutout { fill, .. } = &mut spec.kind {
                *fill = Some(means.to_vec());
            }
        }
    }

    pub fn label(&self) -> String {
        let ops = self.ops_in_order();
        if ops.is_empty() {
            return "Identity".to_string();
        }
        let labels: Vec<String> = ops.iter().map(|op| op.label()).collect();
        labels.join(" + ")
    }

    /// Parses a `+`-joined list of transform labels in application order.
    pub fn parse(text: &str) -> Result<Policy> {
        let text = text.trim();
        if text.is_empty() || text == "Identity" {
            return Ok(Policy::identity());
        }
        let ops = text
            .split('+')
            .map(|part| TransformSpec::parse(part.trim()))
            .collect::<Result<Vec<_>>>()?;
        Policy::from_ops(ops)
    }
}

/// Dynamic application: each constituent transform fires independently per
/// its own probability, in the policy's mandated order.
pub fn apply_policy_dynamic(policy: &Policy, img: &Image, rng: &mut Stream) -> Image {
    let mut out = img.clone();
    for op in policy.ops_in_order() {
        out = apply(op, &out, rng);
    }
    out
}

/// One stochastic draw of the policy applied to every image; labels and
/// size unchanged; deterministic per seed via per-image derived streams.
pub fn materialize_static(
    policy: &Policy,
    ds: &crate::data::LabeledDataset,
    seed: u64,
) -> crate::data::LabeledDataset {
    let mut out = ds.clone();
    for (i, img) in out.images.iter_mut().enumerate() {
        let mut stream = Stream::indexed(seed, "static", &[i as u64]);
        *img = apply_policy_dynamic(policy, img, &mut stream);
    }
    out
}

/// The single static pass over validation data required by the affinity
/// protocol; same contract as [`materialize_static`].
pub fn augment_validation(
    policy: &Policy,
    val: &crate::data::LabeledDataset,
    seed: u64,
) -> crate::data::LabeledDataset {
    materialize_static(policy, val, seed)
}
