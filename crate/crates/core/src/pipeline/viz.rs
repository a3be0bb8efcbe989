use std::io::Cursor;

use base64::Engine as _;
use image::{ImageFormat, Rgb, RgbImage};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::engine::Annotation;
use crate::error::{FanError, Result};
use crate::types::DescriptorField;

const PROJECTION_SEED: u64 = 0x5eed_f00d;

/// Colors each pixel by a fixed random projection of its unit descriptor to
/// RGB and outlines the annotation boxes in white.
pub fn render_rgb(field: &DescriptorField, annotations: &[Annotation]) -> RgbImage {
    let d = field.dim();
    let mut rng = ChaCha8Rng::seed_from_u64(PROJECTION_SEED);
    let proj: Vec<f32> = (0..3 * d).map(|_| StandardNormal.sample(&mut rng)).collect();
    let (h, w) = field.shape();
    let mut img = RgbImage::new(w as u32, h as u32);
    for (i, px) in field.pixels().enumerate() {
        let n = px.iter().map(|v| v * v).sum::<f32>().sqrt().max(1e-12);
        let mut rgb = [0u8; 3];
        for (c, out) in rgb.iter_mut().enumerate() {
            let p: f32 = px.iter().zip(&proj[c * d..(c + 1) * d]).map(|(a, b)| a * b).sum::<f32>() / n;
            *out = (128.0 + 60.0 * p).clamp(0.0, 255.0) as u8;
        }
        img.put_pixel((i % w) as u32, (i / w) as u32, Rgb(rgb));
    }
    for a in annotations {
        let [x, y, bw, bh] = a.bbox;
        if bw == 0 || bh == 0 {
            continue;
        }
        let (x1, y1) = ((x + bw - 1).min(w as u32 - 1), (y + bh - 1).min(h as u32 - 1));
        for xx in x..=x1 {
            img.put_pixel(xx, y, Rgb([255; 3]));
            img.put_pixel(xx, y1, Rgb([255; 3]));
        }
        for yy in y..=y1 {
            img.put_pixel(x, yy, Rgb([255; 3]));
            img.put_pixel(x1, yy, Rgb([255; 3]));
        }
    }
    img
}

pub fn render_png(field: &DescriptorField, annotations: &[Annotation]) -> Result<Vec<u8>> {
    let mut out = Cursor::new(Vec::new());
    render_rgb(field, annotations)
        .write_to(&mut out, ImageFormat::Png)
        .map_err(|e| FanError::Io(std::io::Error::other(e)))?;
    Ok(out.into_inner())
}

pub fn png_base64(png: &[u8]) -> String {
    base64::engine::general_purpose::STANDARD.encode(png)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn png_has_signature_and_box() {
        let f = DescriptorField::uniform(8, 10, &[0.2, -0.4, 0.9]).unwrap();
        let a = Annotation { label: "x".into(), score: 1.0, bbox: [2, 2, 3, 3] };
        let img = render_rgb(&f, std::slice::from_ref(&a));
        assert_eq!(img.get_pixel(2, 2).0, [255; 3]);
        assert_ne!(img.get_pixel(3, 3).0, [255; 3]);
        assert_eq!(img.get_pixel(0, 0), img.get_pixel(9, 7));
        let png = render_png(&f, &[a]).unwrap();
        assert_eq!(&png[..8], b"\x89PNG\r\n\x1a\n");
        assert!(!png_base64(&png).is_empty());
    }
}
