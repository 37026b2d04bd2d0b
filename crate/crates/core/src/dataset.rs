//! Annotations, positive-sample augmentation and synthetic corpora.
//!
//! Annotation files hold one object per line:
//! `image_path center_row center_col size`, with `#` comments.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use thiserror::Error;

use crate::imgcore::{add_gaussian_noise, save_image, GrayImage, ImageError, Window};
use crate::rng;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("annotation line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Image(#[from] ImageError),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Annotation {
    pub image: PathBuf,
    pub row: f64,
    pub col: f64,
    pub size: f64,
}

impl Annotation {
    /// `(row, col, size)` of the annotated square.
    pub fn square(&self) -> (f64, f64, f64) {
        (self.row, self.col, self.size)
    }
}

pub fn parse_annotations(text: &str) -> Result<Vec<Annotation>, DatasetError> {
    let mut out = Vec::new();
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap().trim();
        if line.is_empty() {
            continue;
        }
        let err = |message: String| DatasetError::Parse { line: i + 1, message };
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() != 4 {
            return Err(err(format!("expected 4 fields, found {}", fields.len())));
        }
        let num = |s: &str, what: &str| {
            s.parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| err(format!("bad {what} {s:?}")))
        };
        let size = num(fields[3], "size")?;
        if size <= 0.0 {
            return Err(err(format!("size must be positive, got {size}")));
        }
        out.push(Annotation {
            image: PathBuf::from(fields[0]),
            row: num(fields[1], "row")?,
            col: num(fields[2], "col")?,
            size,
        });
    }
    Ok(out)
}

pub fn load_annotations(path: impl AsRef<Path>) -> Result<Vec<Annotation>, DatasetError> {
    parse_annotations(&fs::read_to_string(path)?)
}

pub fn format_annotations(annotations: &[Annotation]) -> String {
    let mut out = String::new();
    for a in annotations {
        writeln!(out, "{} {} {} {}", a.image.display(), a.row, a.col, a.size).unwrap();
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AugmentParams {
    pub count: usize,
    /// Maximum center shift per axis, as a fraction of the object size.
    pub position_jitter: f64,
    /// Maximum relative change of the object size.
    pub scale_jitter: f64,
}

impl Default for AugmentParams {
    fn default() -> Self {
        Self {
            count: 15,
            position_jitter: 0.05,
            scale_jitter: 0.10,
        }
    }
}

fn uniform<R: Rng + ?Sized>(rng: &mut R, lo: f64, hi: f64) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

/// One perturbed `(row, col, size)` square, before clamping to an image.
pub fn jitter<R: Rng + ?Sized>(a: &Annotation, params: &AugmentParams, rng: &mut R) -> (f64, f64, f64) {
    let shift = params.position_jitter * a.size;
    let dr = uniform(rng, -shift, shift);
    let dc = uniform(rng, -shift, shift);
    let scale = uniform(rng, 1.0 - params.scale_jitter, 1.0 + params.scale_jitter);
    (a.row + dr, a.col + dc, a.size * scale)
}

/// The window closest to `(row, col, size)` that lies fully inside a
/// `width x height` image: shifted inward, and shrunk only when the image
/// is smaller than the window.
pub fn clamp_window(row: f64, col: f64, size: f64, width: usize, height: usize) -> Window {
    let size = (size.round() as i64).max(1).min(width as i64).min(height as i64) as i32;
    let top = (row.round() as i64 - (size / 2) as i64).clamp(0, height as i64 - size as i64) as i32;
    let left = (col.round() as i64 - (size / 2) as i64).clamp(0, width as i64 - size as i64) as i32;
    Window::from_top_left(top, left, size)
}

/// `params.count` perturbed copies of the annotated window, each fully
/// inside a `width x height` image.
pub fn augment<R: Rng + ?Sized>(
    a: &Annotation,
    width: usize,
    height: usize,
    params: &AugmentParams,
    rng: &mut R,
) -> Vec<Window> {
    assert!(params.count >= 1, "augmentation count must be at least 1");
    (0..params.count)
        .map(|_| {
            let (r, c, s) = jitter(a, params, rng);
            clamp_window(r, c, s, width, height)
        })
        .collect()
}

/// Parameters of a synthetic image: value-noise texture with at most one
/// filled disc.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthSpec {
    pub width: usize,
    pub height: usize,
    pub with_object: bool,
    /// Disc diameter range.
    pub size_range: (f64, f64),
    /// Disc intensity offset from its surrounding background.
    pub contrast_range: (f64, f64),
    /// Intensity range of the background texture.
    pub texture_range: (f64, f64),
    /// Keep the disc's bounding square inside the image under any rotation
    /// about the image center.
    pub rotation_safe: bool,
    /// Number of distractor shapes (rectangles, ellipses, rings) drawn
    /// away from the disc.
    pub clutter: usize,
    /// Longest-side range of distractor shapes.
    pub clutter_size: (f64, f64),
    /// Standard deviation of per-pixel Gaussian grain added last.
    pub grain: f64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            width: 128,
            height: 128,
            with_object: true,
            size_range: (24.0, 56.0),
            contrast_range: (50.0, 80.0),
            texture_range: (70.0, 185.0),
            rotation_safe: false,
            clutter: 2,
            clutter_size: (12.0, 112.0),
            grain: 6.0,
        }
    }
}

impl SynthSpec {
    pub fn background() -> Self {
        Self {
            with_object: false,
            ..Self::default()
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SynthObject {
    pub row: f64,
    pub col: f64,
    /// Disc diameter.
    pub size: f64,
    /// Disc intensity before grain.
    pub value: u8,
    /// Mean texture intensity in the ring around the disc, before grain.
    pub surround: f64,
    /// Requested interior-to-surround contrast; the generated image meets
    /// it after grain.
    pub contrast: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthImage {
    pub image: GrayImage,
    pub object: Option<SynthObject>,
}

const OCTAVES: [(f64, f64); 4] = [(32.0, 1.0), (16.0, 0.5), (8.0, 0.25), (4.0, 0.125)];

fn value_noise<R: Rng + ?Sized>(rng: &mut R, width: usize, height: usize) -> Vec<f64> {
    let mut acc = vec![0.0; width * height];
    let total: f64 = OCTAVES.iter().map(|o| o.1).sum();
    for &(cell, amplitude) in &OCTAVES {
        let gw = (width as f64 / cell).ceil() as usize + 2;
        let gh = (height as f64 / cell).ceil() as usize + 2;
        let grid: Vec<f64> = (0..gw * gh).map(|_| rng.random::<f64>()).collect();
        let (oy, ox) = (rng.random::<f64>(), rng.random::<f64>());
        let smooth = |t: f64| t * t * (3.0 - 2.0 * t);
        for r in 0..height {
            let y = r as f64 / cell + oy;
            let (y0, ty) = (y.floor() as usize, smooth(y.fract()));
            for c in 0..width {
                let x = c as f64 / cell + ox;
                let (x0, tx) = (x.floor() as usize, smooth(x.fract()));
                let g = |yy: usize, xx: usize| grid[yy * gw + xx];
                let top = g(y0, x0) * (1.0 - tx) + g(y0, x0 + 1) * tx;
                let bottom = g(y0 + 1, x0) * (1.0 - tx) + g(y0 + 1, x0 + 1) * tx;
                acc[r * width + c] += amplitude * (top * (1.0 - ty) + bottom * ty);
            }
        }
    }
    acc.iter_mut().for_each(|v| *v /= total);
    acc
}

/// Pixels whose center lies in the ring `inner <= d <= outer` around `(row, col)`.
pub fn ring_mean(img: &GrayImage, row: f64, col: f64, inner: f64, outer: f64) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    let r0 = (row - outer).floor().max(0.0) as usize;
    let r1 = ((row + outer).ceil() as usize).min(img.height() - 1);
    let c0 = (col - outer).floor().max(0.0) as usize;
    let c1 = ((col + outer).ceil() as usize).min(img.width() - 1);
    for r in r0..=r1 {
        for c in c0..=c1 {
            let d = ((r as f64 - row).powi(2) + (c as f64 - col).powi(2)).sqrt();
            if d >= inner && d <= outer {
                sum += img.get(r, c) as f64;
                n += 1;
            }
        }
    }
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

#[derive(Clone, Copy, Debug)]
enum Shape {
    Rectangle { half_u: f64, half_v: f64 },
    Ellipse { half_u: f64, half_v: f64 },
    Ring { outer: f64, inner: f64 },
}

impl Shape {
    fn contains(&self, u: f64, v: f64) -> bool {
        match *self {
            Shape::Rectangle { half_u, half_v } => u.abs() <= half_u && v.abs() <= half_v,
            Shape::Ellipse { half_u, half_v } => (u / half_u).powi(2) + (v / half_v).powi(2) <= 1.0,
            Shape::Ring { outer, inner } => {
                let d = (u * u + v * v).sqrt();
                d <= outer && d >= inner
            }
        }
    }

    fn reach(&self) -> f64 {
        match *self {
            Shape::Rectangle { half_u, half_v } => (half_u * half_u + half_v * half_v).sqrt(),
            Shape::Ellipse { half_u, half_v } => half_u.max(half_v),
            Shape::Ring { outer, .. } => outer,
        }
    }

    fn random<R: Rng + ?Sized>(rng: &mut R, size_range: (f64, f64)) -> Self {
        let long = uniform(rng, size_range.0, size_range.1) / 2.0;
        match rng.random_range(0..4) {
            0 => Shape::Rectangle {
                half_u: long,
                half_v: long,
            },
            1 => Shape::Rectangle {
                half_u: long,
                half_v: long / uniform(rng, 1.3, 3.0),
            },
            2 => Shape::Ellipse {
                half_u: long,
                half_v: long / uniform(rng, 1.5, 3.0),
            },
            _ => Shape::Ring {
                outer: long,
                inner: long * uniform(rng, 0.45, 0.75),
            },
        }
    }
}

/// Intensity at `contrast` from `surround`, on whichever side stays in range.
fn contrasting<R: Rng + ?Sized>(rng: &mut R, surround: f64, contrast: f64) -> f64 {
    let mut bright = rng.random::<bool>();
    if bright && surround + contrast > 255.0 {
        bright = false;
    } else if !bright && surround - contrast < 0.0 {
        bright = true;
    }
    if bright {
        (surround + contrast).ceil().min(255.0)
    } else {
        (surround - contrast).floor().max(0.0)
    }
}

/// Draws `shape` centered at `(row, col)` and rotated by `angle`, with
/// 4-sample coverage for soft edges.
fn draw_shape(image: &mut GrayImage, shape: &Shape, row: f64, col: f64, angle: f64, value: f64) {
    let (h, w) = (image.height() as f64, image.width() as f64);
    let reach = shape.reach() + 1.0;
    let (s, c) = angle.sin_cos();
    let r0 = (row - reach).floor().max(0.0) as usize;
    let r1 = (row + reach).ceil().min(h - 1.0).max(0.0) as usize;
    let c0 = (col - reach).floor().max(0.0) as usize;
    let c1 = (col + reach).ceil().min(w - 1.0).max(0.0) as usize;
    for r in r0..=r1 {
        for cc in c0..=c1 {
            let mut hits = 0;
            for (dy, dx) in [(-0.25, -0.25), (-0.25, 0.25), (0.25, -0.25), (0.25, 0.25)] {
                let (y, x) = (r as f64 + dy - row, cc as f64 + dx - col);
                if shape.contains(y * c + x * s, -y * s + x * c) {
                    hits += 1;
                }
            }
            if hits > 0 {
                let alpha = hits as f64 / 4.0;
                let bg = image.get(r, cc) as f64;
                image.set(r, cc, (alpha * value + (1.0 - alpha) * bg).round() as u8);
            }
        }
    }
}

/// Places `spec.clutter` shapes whose extent stays clear of `keep_out`
/// (`row, col, radius`). Gives up on a shape after a few failed placements.
fn add_clutter<R: Rng + ?Sized>(
    image: &mut GrayImage,
    spec: &SynthSpec,
    keep_out: Option<(f64, f64, f64)>,
    rng: &mut R,
) {
    let (h, w) = (spec.height as f64, spec.width as f64);
    for _ in 0..spec.clutter {
        let shape = Shape::random(rng, spec.clutter_size);
        let angle = uniform(rng, 0.0, std::f64::consts::PI);
        let contrast = uniform(rng, spec.contrast_range.0, spec.contrast_range.1);
        let reach = shape.reach();
        let placed = (0..20).find_map(|_| {
            let (row, col) = (uniform(rng, 0.0, h - 1.0), uniform(rng, 0.0, w - 1.0));
            let clear =
                keep_out.is_none_or(|(kr, kc, kd)| ((row - kr).powi(2) + (col - kc).powi(2)).sqrt() > kd + reach + 2.0);
            clear.then_some((row, col))
        });
        if let Some((row, col)) = placed {
            let surround = ring_mean(image, row, col, reach + 1.0, reach + 6.0);
            let value = contrasting(rng, surround, contrast);
            draw_shape(image, &shape, row, col, angle, value);
        }
    }
}

fn synth_one<R: Rng + ?Sized>(spec: &SynthSpec, rng: &mut R) -> SynthImage {
    let (w, h) = (spec.width, spec.height);
    let (lo, hi) = spec.texture_range;
    let noise = value_noise(rng, w, h);
    let mut image = GrayImage::from_fn(w, h, |r, c| {
        (lo + (hi - lo) * noise[r * w + c]).round().clamp(0.0, 255.0) as u8
    });
    if !spec.with_object {
        add_clutter(&mut image, spec, None, rng);
        let image = add_gaussian_noise(&image, spec.grain, rng.random());
        return SynthImage { image, object: None };
    }

    let max_fit = (w.min(h) as f64 - 2.0).max(2.0);
    let size = uniform(rng, spec.size_range.0, spec.size_range.1).min(max_fit);
    let radius = size / 2.0;
    let (row, col) = loop {
        let (row, col) = if spec.rotation_safe {
            // The bounding square's half-diagonal must fit inside the
            // inscribed circle of the image.
            let reach = (w.min(h) as f64 / 2.0 - 1.0 - radius * std::f64::consts::SQRT_2).max(0.0);
            let (cy, cx) = ((h as f64 - 1.0) / 2.0, (w as f64 - 1.0) / 2.0);
            let (dy, dx) = (uniform(rng, -reach, reach), uniform(rng, -reach, reach));
            if dy * dy + dx * dx > reach * reach {
                continue;
            }
            (cy + dy, cx + dx)
        } else {
            (
                uniform(rng, radius + 1.0, h as f64 - radius - 1.0),
                uniform(rng, radius + 1.0, w as f64 - radius - 1.0),
            )
        };
        break (row, col);
    };

    let surround = ring_mean(&image, row, col, radius + 1.0, 1.5 * radius + 1.0);
    let contrast = uniform(rng, spec.contrast_range.0, spec.contrast_range.1);
    let value = contrasting(rng, surround, contrast);

    let reach = radius + 0.5;
    let r0 = (row - reach).floor().max(0.0) as usize;
    let r1 = ((row + reach).ceil() as usize).min(h - 1);
    let c0 = (col - reach).floor().max(0.0) as usize;
    let c1 = ((col + reach).ceil() as usize).min(w - 1);
    for r in r0..=r1 {
        for c in c0..=c1 {
            let d = ((r as f64 - row).powi(2) + (c as f64 - col).powi(2)).sqrt();
            let alpha = (reach - d).clamp(0.0, 1.0);
            if alpha > 0.0 {
                let bg = image.get(r, c) as f64;
                image.set(r, c, (alpha * value + (1.0 - alpha) * bg).round() as u8);
            }
        }
    }
    add_clutter(&mut image, spec, Some((row, col, 1.5 * radius + 1.0)), rng);
    let mut image = add_gaussian_noise(&image, spec.grain, rng.random());
    restore_contrast(&mut image, row, col, radius, value - surround, contrast);
    SynthImage {
        image,
        object: Some(SynthObject {
            row,
            col,
            size,
            value: value as u8,
            surround,
            contrast,
        }),
    }
}

/// Shifts the disc interior until its mean differs from the surrounding
/// ring's by at least `contrast`, in the direction of `sign`.
fn restore_contrast(image: &mut GrayImage, row: f64, col: f64, radius: f64, sign: f64, contrast: f64) {
    let inner = radius - 1.0;
    for _ in 0..4 {
        let gap = ring_mean(image, row, col, 0.0, inner) - ring_mean(image, row, col, radius + 1.0, 1.5 * radius + 1.0);
        let short = contrast - gap * sign.signum();
        if short <= 0.0 {
            return;
        }
        let step = short.ceil() * sign.signum();
        let r0 = (row - inner).floor().max(0.0) as usize;
        let c0 = (col - inner).floor().max(0.0) as usize;
        for r in r0..=((row + inner).ceil() as usize).min(image.height() - 1) {
            for c in c0..=((col + inner).ceil() as usize).min(image.width() - 1) {
                if ((r as f64 - row).powi(2) + (c as f64 - col).powi(2)).sqrt() <= inner {
                    let v = image.get(r, c) as f64 + step;
                    image.set(r, c, v.clamp(0.0, 255.0) as u8);
                }
            }
        }
    }
}

/// Generates `count` images; image `i` depends only on `(seed, i)`.
pub fn generate_synthetic(spec: &SynthSpec, count: usize, seed: u64) -> Vec<SynthImage> {
    (0..count)
        .map(|i| synth_one(spec, &mut rng::substream(seed, &[0x7379_6e74, i as u64])))
        .collect()
}

/// Writes `prefix#####.pgm` files into `dir` plus an `annotations.txt`
/// listing every object. Returns the annotations written.
pub fn write_corpus(
    dir: impl AsRef<Path>,
    corpus: &[SynthImage],
    prefix: &str,
) -> Result<Vec<Annotation>, DatasetError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut annotations = Vec::new();
    for (i, item) in corpus.iter().enumerate() {
        let name = format!("{prefix}{i:05}.pgm");
        save_image(&item.image, dir.join(&name))?;
        if let Some(o) = &item.object {
            annotations.push(Annotation {
                image: PathBuf::from(name),
                row: o.row,
                col: o.col,
                size: o.size,
            });
        }
    }
    fs::write(dir.join("annotations.txt"), format_annotations(&annotations))?;
    Ok(annotations)
}

/// Rotates `(row, col)` by `angle` radians about the center of a
/// `width x height` image, matching [`rotate_image`].
pub fn rotate_point(row: f64, col: f64, angle: f64, width: usize, height: usize) -> (f64, f64) {
    let (cy, cx) = ((height as f64 - 1.0) / 2.0, (width as f64 - 1.0) / 2.0);
    let (dy, dx) = (row - cy, col - cx);
    let (s, c) = angle.sin_cos();
    (cy + dy * c + dx * s, cx - dy * s + dx * c)
}

/// Rotates the image content by `angle` radians about its center using
/// bilinear sampling; samples outside the source take the nearest border
/// pixel.
pub fn rotate_image(img: &GrayImage, angle: f64) -> GrayImage {
    let (w, h) = (img.width(), img.height());
    GrayImage::from_fn(w, h, |r, c| {
        // Inverse map: where does this output pixel come from?
        let (sr, sc) = rotate_point(r as f64, c as f64, -angle, w, h);
        let sr = sr.clamp(0.0, h as f64 - 1.0);
        let sc = sc.clamp(0.0, w as f64 - 1.0);
        let (r0, c0) = (sr.floor() as usize, sc.floor() as usize);
        let (r1, c1) = ((r0 + 1).min(h - 1), (c0 + 1).min(w - 1));
        let (ty, tx) = (sr - r0 as f64, sc - c0 as f64);
        let p = |rr: usize, cc: usize| img.get(rr, cc) as f64;
        let top = p(r0, c0) * (1.0 - tx) + p(r0, c1) * tx;
        let bottom = p(r1, c0) * (1.0 - tx) + p(r1, c1) * tx;
        (top * (1.0 - ty) + bottom * ty).round().clamp(0.0, 255.0) as u8
    })
}
