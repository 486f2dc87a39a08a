//! Image file IO. PNG (8/16-bit) and binary PPM are decoded to unit-interval
//! reals by `v / 255` or `v / 65535`; encoding clamps to `[0, 1]` and rounds
//! half up.

use std::io::Write;
use std::path::Path;

use image::codecs::pnm::{PnmEncoder, PnmSubtype, SampleEncoding};
use image::{DynamicImage, ExtendedColorType, ImageEncoder, ImageFormat};

use crate::error::{Error, Result};
use crate::image::{clamp01, Image, Plane, Rgb};
use crate::scalar::Real;

/// File extensions treated as images when scanning directories.
pub const IMAGE_EXTENSIONS: &[&str] = &["png", "ppm", "pnm", "jpg", "jpeg"];

pub fn is_image_path(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| IMAGE_EXTENSIONS.contains(&e.to_ascii_lowercase().as_str()))
        .unwrap_or(false)
}

fn image_err(path: &Path, source: image::ImageError) -> Error {
    Error::Image {
        path: path.to_path_buf(),
        source,
    }
}

pub fn load_rgb<T: Real>(path: impl AsRef<Path>) -> Result<Image<Rgb, T>> {
    let path = path.as_ref();
    let reader = image::ImageReader::open(path)
        .map_err(|e| Error::io(path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(path, e))?;
    let img = reader.decode().map_err(|e| image_err(path, e))?;
    Ok(from_dynamic(&img))
}

pub fn from_dynamic<T: Real>(img: &DynamicImage) -> Image<Rgb, T> {
    let (w, h) = (img.width() as usize, img.height() as usize);
    let sixteen = matches!(
        img,
        DynamicImage::ImageLuma16(_)
            | DynamicImage::ImageLumaA16(_)
            | DynamicImage::ImageRgb16(_)
            | DynamicImage::ImageRgba16(_)
    );
    let data: Vec<T> = if sixteen {
        let scale = T::lit(65535.0);
        img.to_rgb16().into_raw().into_iter().map(|v| T::lit(v as f64) / scale).collect()
    } else {
        let scale = T::lit(255.0);
        img.to_rgb8().into_raw().into_iter().map(|v| T::lit(v as f64) / scale).collect()
    };
    Image::new(w, h, data).expect("decoder returns w×h×3 samples")
}

/// Clamp, scale and round half up.
#[inline]
pub fn quantize<T: Real>(v: T, max: f64) -> u32 {
    (clamp01(v).as_f64() * max + 0.5).floor() as u32
}

fn encode(path: &Path, bytes: &[u8], w: u32, h: u32, color: ExtendedColorType) -> Result<()> {
    let format = ImageFormat::from_path(path).map_err(|e| image_err(path, e))?;
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    let out = std::io::BufWriter::new(file);
    let res = match format {
        ImageFormat::Png => image::codecs::png::PngEncoder::new(out).write_image(bytes, w, h, color),
        ImageFormat::Pnm if matches!(color, ExtendedColorType::Rgb16 | ExtendedColorType::L16) => {
            write_pnm16(out, bytes, w, h, color == ExtendedColorType::Rgb16)
        }
        ImageFormat::Pnm => {
            let subtype = match color {
                ExtendedColorType::L8 | ExtendedColorType::L16 => PnmSubtype::Graymap(SampleEncoding::Binary),
                _ => PnmSubtype::Pixmap(SampleEncoding::Binary),
            };
            PnmEncoder::new(out).with_subtype(subtype).write_image(bytes, w, h, color)
        }
        other => {
            return Err(Error::invalid(format!(
                "{}: unsupported output format {other:?} (use .png or .ppm)",
                path.display()
            )))
        }
    };
    res.map_err(|e| image_err(path, e))
}

// The PNM encoder only does 8-bit pixmaps, so 16-bit P5/P6 are written directly
// (big-endian samples, maxval 65535).
fn write_pnm16(mut out: impl Write, ne_bytes: &[u8], w: u32, h: u32, rgb: bool) -> image::ImageResult<()> {
    let magic = if rgb { "P6" } else { "P5" };
    write!(out, "{magic}\n{w} {h}\n65535\n")?;
    let be: Vec<u8> = ne_bytes
        .chunks_exact(2)
        .flat_map(|c| u16::from_ne_bytes([c[0], c[1]]).to_be_bytes())
        .collect();
    out.write_all(&be)?;
    out.flush()?;
    Ok(())
}

/// Writes an 8-bit PNG or PPM, chosen by extension.
pub fn save_rgb8<T: Real>(path: impl AsRef<Path>, img: &Image<Rgb, T>) -> Result<()> {
    let bytes: Vec<u8> = img.data().iter().map(|&v| quantize(v, 255.0) as u8).collect();
    encode(path.as_ref(), &bytes, img.width() as u32, img.height() as u32, ExtendedColorType::Rgb8)
}

/// Writes a 16-bit PNG or PPM, chosen by extension.
pub fn save_rgb16<T: Real>(path: impl AsRef<Path>, img: &Image<Rgb, T>) -> Result<()> {
    let bytes = sixteen_bit_bytes(img.data().iter().copied());
    encode(path.as_ref(), &bytes, img.width() as u32, img.height() as u32, ExtendedColorType::Rgb16)
}

/// Writes a 16-bit grayscale PNG or PGM from a `[0, 1]` plane.
pub fn save_gray16<T: Real>(path: impl AsRef<Path>, plane: &Plane<T>) -> Result<()> {
    let bytes = sixteen_bit_bytes(plane.data().iter().copied());
    encode(path.as_ref(), &bytes, plane.width() as u32, plane.height() as u32, ExtendedColorType::L16)
}

// The encoders take 16-bit samples as native-endian bytes.
fn sixteen_bit_bytes<T: Real>(values: impl Iterator<Item = T>) -> Vec<u8> {
    values.flat_map(|v| (quantize(v, 65535.0) as u16).to_ne_bytes()).collect()
}
