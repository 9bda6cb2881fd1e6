//! Deterministic input preparation: images become NCHW/NHWC `f32` tensors in
//! `.npy` form, texts become whitespace tokens capped at `max_seq_len`.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use image::imageops::FilterType;
use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::types::{ChannelOrder, ImagePreprocess, ResizePolicy, TensorLayout, TextPreprocess, TruncationPolicy};

#[derive(Debug, Clone, PartialEq)]
pub struct ImageTensor {
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

fn resize(img: &image::DynamicImage, cfg: &ImagePreprocess) -> RgbImage {
    let (w, h) = (cfg.width, cfg.height);
    match cfg.resize {
        ResizePolicy::Stretch => img.resize_exact(w, h, FilterType::Triangle).to_rgb8(),
        ResizePolicy::ShorterSideCrop => {
            let (iw, ih) = (img.width().max(1), img.height().max(1));
            let scale = f64::max(w as f64 / iw as f64, h as f64 / ih as f64);
            let sw = ((iw as f64 * scale).round() as u32).max(w);
            let sh = ((ih as f64 * scale).round() as u32).max(h);
            let scaled = img.resize_exact(sw, sh, FilterType::Triangle);
            let (x, y) = ((sw - w) / 2, (sh - h) / 2);
            scaled.crop_imm(x, y, w, h).to_rgb8()
        }
    }
}

/// Decode, resize, normalize. Output has a leading batch dimension of 1.
pub fn preprocess_image(path: &Path, cfg: &ImagePreprocess) -> Result<ImageTensor, String> {
    let img = image::open(path).map_err(|e| format!("{}: {e}", path.display()))?;
    Ok(image_to_tensor(&resize(&img, cfg), cfg))
}

pub fn image_to_tensor(rgb: &RgbImage, cfg: &ImagePreprocess) -> ImageTensor {
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let order: [usize; 3] = match cfg.channel_order {
        ChannelOrder::Rgb => [0, 1, 2],
        ChannelOrder::Bgr => [2, 1, 0],
    };
    let mut data = vec![0f32; 3 * w * h];
    for (x, y, px) in rgb.enumerate_pixels() {
        let (x, y) = (x as usize, y as usize);
        for (c, &src) in order.iter().enumerate() {
            let v = (f32::from(px.0[src]) * cfg.pixel_scale - cfg.mean[c]) / cfg.std[c];
            let idx = match cfg.layout {
                TensorLayout::Nchw => c * h * w + y * w + x,
                TensorLayout::Nhwc => (y * w + x) * 3 + c,
            };
            data[idx] = v;
        }
    }
    let shape = match cfg.layout {
        TensorLayout::Nchw => vec![1, 3, h, w],
        TensorLayout::Nhwc => vec![1, h, w, 3],
    };
    ImageTensor { shape, data }
}

/// Serialize as a little-endian `<f4` NumPy v1.0 array.
pub fn write_npy(out: &mut impl Write, tensor: &ImageTensor) -> std::io::Result<()> {
    let dims = tensor
        .shape
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join(", ");
    let trailing = if tensor.shape.len() == 1 { "," } else { "" };
    let mut header = format!("{{'descr': '<f4', 'fortran_order': False, 'shape': ({dims}{trailing}), }}");
    // magic(6) + version(2) + len(2) + header + '\n' must be a multiple of 64
    let pad = (64 - (10 + header.len() + 1) % 64) % 64;
    header.push_str(&" ".repeat(pad));
    header.push('\n');
    out.write_all(b"\x93NUMPY\x01\x00")?;
    out.write_all(&(header.len() as u16).to_le_bytes())?;
    out.write_all(header.as_bytes())?;
    for v in &tensor.data {
        out.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

/// Tokenized text input handed to the runner adapter.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TextInput {
    pub tokenizer: String,
    pub fields: BTreeMap<String, Vec<String>>,
    pub max_new_tokens: usize,
}

pub fn tokenize_text(text: &str, cfg: &TextPreprocess) -> Vec<String> {
    let tokens: Vec<String> = text.split_whitespace().map(str::to_lowercase).collect();
    if tokens.len() <= cfg.max_seq_len {
        return tokens;
    }
    match cfg.truncation {
        TruncationPolicy::Head => tokens[..cfg.max_seq_len].to_vec(),
        TruncationPolicy::Tail => tokens[tokens.len() - cfg.max_seq_len..].to_vec(),
    }
}

pub fn preprocess_text(
    fields: &BTreeMap<String, String>,
    cfg: &TextPreprocess,
    max_new_tokens: usize,
) -> TextInput {
    TextInput {
        tokenizer: cfg.tokenizer.clone(),
        fields: fields
            .iter()
            .map(|(k, v)| (k.clone(), tokenize_text(v, cfg)))
            .collect(),
        max_new_tokens,
    }
}
