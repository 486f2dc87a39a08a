//! Six-dimensional shooting-condition vector: ISO, exposure time, f-number,
//! shutter speed (APEX), focal length and exposure bias.
//!
//! Values come from a JSON sidecar (`<stem>.exif.json`) or, as a convenience,
//! from the APP1 EXIF block of a JPEG. Anything missing is stored as `0`.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Copy, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ExifVector {
    pub iso: f64,
    /// Seconds.
    pub exposure_time: f64,
    pub fnumber: f64,
    /// APEX Tv value.
    pub shutter_speed: f64,
    /// Millimeters.
    pub focal_length: f64,
    /// EV.
    pub bias_value: f64,
}

/// Field names in vector order, as used by the JSON sidecar.
pub const FIELD_NAMES: [&str; 6] = [
    "iso",
    "exposure_time",
    "fnumber",
    "shutter_speed",
    "focal_length",
    "bias_value",
];

const NON_NEGATIVE: [bool; 6] = [true, true, true, false, true, false];

impl ExifVector {
    pub fn from_array(v: [f64; 6]) -> Self {
        Self {
            iso: v[0],
            exposure_time: v[1],
            fnumber: v[2],
            shutter_speed: v[3],
            focal_length: v[4],
            bias_value: v[5],
        }
    }

    pub fn to_array(&self) -> [f64; 6] {
        [
            self.iso,
            self.exposure_time,
            self.fnumber,
            self.shutter_speed,
            self.focal_length,
            self.bias_value,
        ]
    }

    fn set(&mut self, idx: usize, v: f64) {
        match idx {
            0 => self.iso = v,
            1 => self.exposure_time = v,
            2 => self.fnumber = v,
            3 => self.shutter_speed = v,
            4 => self.focal_length = v,
            _ => self.bias_value = v,
        }
    }

    /// Scales each coordinate so the dimensions carry comparable weight:
    /// `[iso / 1000, exposure_time × 1000, fnumber, shutter_speed, focal_length / 10, bias_value]`.
    /// `[iso / 1000, exposure_time · 1000, fnumber, shutter_speed, focal_length / 10, bias_value]`.
    pub fn normalize(&self) -> NormalizedCondition {
        NormalizedCondition([
            scale_pow10(self.iso, -3),
            scale_pow10(self.exposure_time, 3),
            self.fnumber,
            self.shutter_speed,
            scale_pow10(self.focal_length, -1),
            self.bias_value,
        ])
    }
}

/// `x · 10^k`, computed by shifting the decimal exponent of the shortest
/// representation of `x`. Values written in decimal map to the decimal result
/// (0.2423 → 242.3), where a binary multiply can land one ulp away
/// (242.29999999999998). Never more than one ulp from `x * 10^k`.
pub fn scale_pow10(x: f64, k: i32) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x * 10f64.powi(k);
    }
    let s = format!("{x:e}");
    let (mantissa, exp) = s.split_once('e').expect("LowerExp output has an exponent");
    let exp: i32 = exp.parse().expect("integer exponent");
    format!("{mantissa}e{}", exp + k).parse().expect("valid float literal")
}

/// Normalized condition vector, order `[iso, exposure, fnumber, speed, flength, bias]`.
#[derive(Copy, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct NormalizedCondition<T = f64>(pub [T; 6]);

impl<T: Real> NormalizedCondition<T> {
    pub fn zero() -> Self {
        Self([T::zero(); 6])
    }

    pub fn values(&self) -> &[T; 6] {
        &self.0
    }

    pub fn cast<U: Real>(&self) -> NormalizedCondition<U> {
        NormalizedCondition(self.0.map(|v| U::lit(v.as_f64())))
    }
}

pub fn normalize(v: &ExifVector) -> NormalizedCondition {
    v.normalize()
}

/// Parses a JSON sidecar. Keys are optional; absent or `null` keys read as 0,
/// unknown keys are ignored.
pub fn parse_sidecar(text: &str) -> Result<ExifVector> {
    let value: Value = serde_json::from_str(text).map_err(|e| Error::parse("<document>", e.to_string()))?;
    let obj = value
        .as_object()
        .ok_or_else(|| Error::parse("<document>", "expected a JSON object"))?;
    let mut out = ExifVector::default();
    for (idx, name) in FIELD_NAMES.iter().enumerate() {
        let v = match obj.get(*name) {
            None | Some(Value::Null) => continue,
            Some(Value::Number(n)) => n
                .as_f64()
                .ok_or_else(|| Error::parse(*name, "number out of range"))?,
            Some(other) => return Err(Error::parse(*name, format!("expected a number, found {other}"))),
        };
        check_value(idx, v)?;
        out.set(idx, v);
    }
    Ok(out)
}

fn check_value(idx: usize, v: f64) -> Result<()> {
    if !v.is_finite() {
        return Err(Error::parse(FIELD_NAMES[idx], "value is not finite"));
    }
    if NON_NEGATIVE[idx] && v < 0.0 {
        return Err(Error::parse(FIELD_NAMES[idx], format!("must be non-negative, got {v}")));
    }
    Ok(())
}

/// Sidecar path for an image: `<dir>/<stem>.exif.json`.
pub fn sidecar_path(image: &Path) -> PathBuf {
    let stem = image.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
    image.with_file_name(format!("{stem}.exif.json"))
}

fn is_jpeg(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| matches!(e.to_ascii_lowercase().as_str(), "jpg" | "jpeg"))
        .unwrap_or(false)
}

/// Reads a condition vector from a `.json` sidecar or a JPEG file.
pub fn load_exif(path: impl AsRef<Path>) -> Result<ExifVector> {
    let path = path.as_ref();
    let is_json = path.extension().map(|e| e.eq_ignore_ascii_case("json")).unwrap_or(false);
    if is_json {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        parse_sidecar(&text)
    } else if is_jpeg(path) {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        parse_jpeg(&bytes)
    } else {
        Err(Error::invalid(format!(
            "{}: expected a .json sidecar or a JPEG file",
            path.display()
        )))
    }
}

/// Condition for an image: its sidecar if present, else the JPEG's own EXIF,
/// else all zeros.
pub fn load_for_image(image: &Path) -> Result<ExifVector> {
    let sidecar = sidecar_path(image);
    if sidecar.is_file() {
        load_exif(&sidecar)
    } else if is_jpeg(image) {
        load_exif(image)
    } else {
        Ok(ExifVector::default())
    }
}

/// Extracts the six tags from the first APP1 `Exif` segment of a JPEG stream.
/// A stream without one yields all zeros.
pub fn parse_jpeg(bytes: &[u8]) -> Result<ExifVector> {
    if bytes.len() < 2 || bytes[0] != 0xFF || bytes[1] != 0xD8 {
        return Err(Error::parse("jpeg", "missing SOI marker"));
    }
    let mut pos = 2;
    while pos + 1 < bytes.len() {
        if bytes[pos] != 0xFF {
            return Err(Error::parse("jpeg", format!("expected marker at byte {pos}")));
        }
        let marker = bytes[pos + 1];
        pos += 2;
        match marker {
            0xFF => {
                pos -= 1; // fill byte
                continue;
            }
            0xD9 | 0xDA => break,
            0x01 | 0xD0..=0xD7 => continue,
            _ => {}
        }
        if pos + 2 > bytes.len() {
            return Err(Error::parse("jpeg", "truncated segment length"));
        }
        let len = u16::from_be_bytes([bytes[pos], bytes[pos + 1]]) as usize;
        if len < 2 || pos + len > bytes.len() {
            return Err(Error::parse("jpeg", format!("segment 0x{marker:02X} overruns the file")));
        }
        let payload = &bytes[pos + 2..pos + len];
        if marker == 0xE1 && payload.starts_with(b"Exif\0\0") {
            return parse_tiff(&payload[6..]);
        }
        pos += len;
    }
    Ok(ExifVector::default())
}

mod tag {
    pub const EXIF_IFD_POINTER: u16 = 0x8769;
    pub const EXPOSURE_TIME: u16 = 0x829A;
    pub const FNUMBER: u16 = 0x829D;
    pub const ISO_SPEED_RATINGS: u16 = 0x8827;
    pub const SHUTTER_SPEED_VALUE: u16 = 0x9201;
    pub const EXPOSURE_BIAS_VALUE: u16 = 0x9204;
    pub const FOCAL_LENGTH: u16 = 0x920A;
}

fn field_for_tag(t: u16) -> Option<usize> {
    match t {
        tag::ISO_SPEED_RATINGS => Some(0),
        tag::EXPOSURE_TIME => Some(1),
        tag::FNUMBER => Some(2),
        tag::SHUTTER_SPEED_VALUE => Some(3),
        tag::FOCAL_LENGTH => Some(4),
        tag::EXPOSURE_BIAS_VALUE => Some(5),
        _ => None,
    }
}

struct Tiff<'a> {
    data: &'a [u8],
    big_endian: bool,
}

impl Tiff<'_> {
    fn bytes<const N: usize>(&self, at: usize, field: &str) -> Result<[u8; N]> {
        self.data
            .get(at..at + N)
            .map(|s| s.try_into().expect("slice of length N"))
            .ok_or_else(|| Error::parse(field, format!("offset {at} outside the EXIF block")))
    }

    fn u16(&self, at: usize, field: &str) -> Result<u16> {
        let b = self.bytes::<2>(at, field)?;
        Ok(if self.big_endian { u16::from_be_bytes(b) } else { u16::from_le_bytes(b) })
    }

    fn u32(&self, at: usize, field: &str) -> Result<u32> {
        let b = self.bytes::<4>(at, field)?;
        Ok(if self.big_endian { u32::from_be_bytes(b) } else { u32::from_le_bytes(b) })
    }

    fn f64_bits(&self, at: usize, field: &str) -> Result<f64> {
        let b = self.bytes::<8>(at, field)?;
        Ok(if self.big_endian { f64::from_be_bytes(b) } else { f64::from_le_bytes(b) })
    }

    fn ratio(num: f64, den: f64) -> f64 {
        if den == 0.0 {
            0.0
        } else {
            num / den
        }
    }

    /// First component of an IFD entry as a real.
    fn value(&self, entry: usize, field: &str) -> Result<f64> {
        let ty = self.u16(entry + 2, field)?;
        let count = self.u32(entry + 4, field)? as usize;
        if count == 0 {
            return Ok(0.0);
        }
        let size = match ty {
            3 | 8 => 2,
            4 | 9 | 11 => 4,
            5 | 10 | 12 => 8,
            _ => return Err(Error::parse(field, format!("unsupported TIFF type {ty}"))),
        };
        let at = if size * count <= 4 {
            entry + 8
        } else {
            self.u32(entry + 8, field)? as usize
        };
        // validate the whole array lies inside the block
        let end = at
            .checked_add(size * count)
            .ok_or_else(|| Error::parse(field, "value size overflow"))?;
        if end > self.data.len() {
            return Err(Error::parse(field, format!("value at {at} outside the EXIF block")));
        }
        Ok(match ty {
            3 => self.u16(at, field)? as f64,
            8 => self.u16(at, field)? as i16 as f64,
            4 => self.u32(at, field)? as f64,
            9 => self.u32(at, field)? as i32 as f64,
            11 => f32::from_bits(self.u32(at, field)?) as f64,
            5 => Self::ratio(self.u32(at, field)? as f64, self.u32(at + 4, field)? as f64),
            10 => Self::ratio(
                self.u32(at, field)? as i32 as f64,
                self.u32(at + 4, field)? as i32 as f64,
            ),
            _ => self.f64_bits(at, field)?,
        })
    }

    fn read_ifd(&self, offset: usize, out: &mut ExifVector, seen: &mut Vec<usize>) -> Result<()> {
        if seen.contains(&offset) {
            return Err(Error::parse("ifd", format!("IFD loop at offset {offset}")));
        }
        seen.push(offset);
        let count = self.u16(offset, "ifd")? as usize;
        for i in 0..count {
            let entry = offset + 2 + 12 * i;
            let t = self.u16(entry, "ifd")?;
            if t == tag::EXIF_IFD_POINTER {
                let sub = self.u32(entry + 8, "ExifIFDPointer")? as usize;
                self.read_ifd(sub, out, seen)?;
            } else if let Some(idx) = field_for_tag(t) {
                let name = FIELD_NAMES[idx];
                let v = self.value(entry, name)?;
                check_value(idx, v)?;
                out.set(idx, v);
            }
        }
        Ok(())
    }
}

/// Parses a TIFF-structured EXIF block (the payload after `Exif\0\0`).
pub fn parse_tiff(data: &[u8]) -> Result<ExifVector> {
    let big_endian = match data.get(0..2) {
        Some(b"II") => false,
        Some(b"MM") => true,
        _ => return Err(Error::parse("tiff header", "unknown byte order")),
    };
    let tiff = Tiff { data, big_endian };
    if tiff.u16(2, "tiff header")? != 42 {
        return Err(Error::parse("tiff header", "bad magic number"));
    }
    let ifd0 = tiff.u32(4, "tiff header")? as usize;
    let mut out = ExifVector::default();
    tiff.read_ifd(ifd0, &mut out, &mut Vec::new())?;
    Ok(out)
}

#[cfg(test)]
pub(crate) mod fixture {
    //! Minimal EXIF JPEG builder for tests.

    /// `(tag, type, raw value bytes in file order)`; values longer than four
    /// bytes are placed after the IFD.
    pub struct Entry {
        pub tag: u16,
        pub ty: u16,
        pub count: u32,
        pub value: Vec<u8>,
    }

    pub fn short(tag: u16, v: u16, be: bool) -> Entry {
        let mut value = if be { v.to_be_bytes() } else { v.to_le_bytes() }.to_vec();
        value.extend_from_slice(&[0, 0]);
        Entry { tag, ty: 3, count: 1, value }
    }

    pub fn rational(tag: u16, num: u32, den: u32, be: bool) -> Entry {
        let enc = |x: u32| if be { x.to_be_bytes() } else { x.to_le_bytes() };
        let mut value = enc(num).to_vec();
        value.extend_from_slice(&enc(den));
        Entry { tag, ty: 5, count: 1, value }
    }

    pub fn srational(tag: u16, num: i32, den: i32, be: bool) -> Entry {
        let mut e = rational(tag, num as u32, den as u32, be);
        e.ty = 10;
        e
    }

    /// TIFF block with IFD0 holding only an Exif IFD pointer, and the given
    /// entries in the Exif IFD.
    pub fn tiff(entries: &[Entry], be: bool) -> Vec<u8> {
        let u16b = |x: u16| if be { x.to_be_bytes() } else { x.to_le_bytes() };
        let u32b = |x: u32| if be { x.to_be_bytes() } else { x.to_le_bytes() };
        let mut out = Vec::new();
        out.extend_from_slice(if be { b"MM" } else { b"II" });
        out.extend_from_slice(&u16b(42));
        out.extend_from_slice(&u32b(8));
        // IFD0 at 8: one entry, then next-IFD = 0
        let exif_ifd = 8 + 2 + 12 + 4;
        out.extend_from_slice(&u16b(1));
        out.extend_from_slice(&u16b(0x8769));
        out.extend_from_slice(&u16b(4));
        out.extend_from_slice(&u32b(1));
        out.extend_from_slice(&u32b(exif_ifd as u32));
        out.extend_from_slice(&u32b(0));
        let mut extra_at = exif_ifd + 2 + 12 * entries.len() + 4;
        let mut extra = Vec::new();
        out.extend_from_slice(&u16b(entries.len() as u16));
        for e in entries {
            out.extend_from_slice(&u16b(e.tag));
            out.extend_from_slice(&u16b(e.ty));
            out.extend_from_slice(&u32b(e.count));
            if e.value.len() <= 4 {
                let mut v = e.value.clone();
                v.resize(4, 0);
                out.extend_from_slice(&v);
            } else {
                out.extend_from_slice(&u32b(extra_at as u32));
                extra.extend_from_slice(&e.value);
                extra_at += e.value.len();
            }
        }
        out.extend_from_slice(&u32b(0));
        out.extend_from_slice(&extra);
        out
    }

    pub fn jpeg(tiff: &[u8]) -> Vec<u8> {
        let mut out = vec![0xFF, 0xD8];
        // an unrelated APP0 first
        out.extend_from_slice(&[0xFF, 0xE0, 0x00, 0x07, b'J', b'F', b'I', b'F', 0]);
        let len = (2 + 6 + tiff.len()) as u16;
        out.extend_from_slice(&[0xFF, 0xE1]);
        out.extend_from_slice(&len.to_be_bytes());
        out.extend_from_slice(b"Exif\0\0");
        out.extend_from_slice(tiff);
        out.extend_from_slice(&[0xFF, 0xD9]);
        out
    }
}

#[cfg(test)]
mod tests {
    use super::fixture::*;
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn empty_sidecar_is_all_zero() {
        assert_eq!(parse_sidecar("{}").unwrap(), ExifVector::default());
    }

    #[test]
    fn full_sidecar_round_trips_values() {
        let v = parse_sidecar(
            r#"{"iso":456.131,"exposure_time":0.2423,"fnumber":6.4261,
                "shutter_speed":7.0484,"focal_length":55.9858,"bias_value":0.02}"#,
        )
        .unwrap();
        assert_eq!(v.to_array(), [456.131, 0.2423, 6.4261, 7.0484, 55.9858, 0.02]);
    }

    #[test]
    fn sidecar_errors_name_the_field() {
        let err = parse_sidecar(r#"{"fnumber":"f/2.8"}"#).unwrap_err();
        assert!(matches!(&err, Error::Parse { field, .. } if field == "fnumber"), "{err}");
        let err = parse_sidecar(r#"{"iso":-100}"#).unwrap_err();
        assert!(matches!(&err, Error::Parse { field, .. } if field == "iso"));
        assert!(parse_sidecar("{\"iso\": 1").is_err());
        assert!(parse_sidecar("[1,2]").is_err());
        // negative bias and shutter speed are legitimate
        let v = parse_sidecar(r#"{"bias_value":-0.7,"shutter_speed":-1,"iso":null}"#).unwrap();
        assert_eq!(v.bias_value, -0.7);
        assert_eq!(v.iso, 0.0);
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(ExifVector::default().normalize().0, [0.0; 6]);
        let n = ExifVector::from_array([1000.0, 0.001, 8.0, 10.0, 50.0, -1.0]).normalize();
        assert_eq!(n.0, [1.0, 1.0, 8.0, 10.0, 5.0, -1.0]);
        let avg = ExifVector::from_array([456.131, 0.2423, 6.4261, 7.0484, 55.9858, 0.02]).normalize();
        assert_eq!(avg.0, [0.456131, 242.3, 6.4261, 7.0484, 5.59858, 0.02]);
        // the plain binary products miss two of these by one ulp
        assert_ne!(0.2423 * 1000.0, 242.3);
        assert_ne!(456.131 / 1000.0, 0.456131);
    }

    #[test]
    fn decimal_scaling_edge_cases() {
        assert_eq!(scale_pow10(0.0, 3), 0.0);
        assert_eq!(scale_pow10(-2.5, 1), -25.0);
        assert_eq!(scale_pow10(1e300, 10), f64::INFINITY);
        assert!(scale_pow10(f64::NAN, 1).is_nan());
        assert_eq!(scale_pow10(1.0 / 250.0, 3), 4.0);
    }

    #[test]
    fn jpeg_with_only_iso() {
        for be in [false, true] {
            let jpg = jpeg(&tiff(&[short(tag::ISO_SPEED_RATINGS, 100, be)], be));
            let v = parse_jpeg(&jpg).unwrap();
            assert_eq!(v.to_array(), [100.0, 0.0, 0.0, 0.0, 0.0, 0.0]);
        }
    }

    #[test]
    fn jpeg_with_all_six_tags() {
        for be in [false, true] {
            let entries = [
                rational(tag::EXPOSURE_TIME, 1, 250, be),
                rational(tag::FNUMBER, 28, 10, be),
                short(tag::ISO_SPEED_RATINGS, 400, be),
                srational(tag::SHUTTER_SPEED_VALUE, 797, 100, be),
                srational(tag::EXPOSURE_BIAS_VALUE, -2, 3, be),
                rational(tag::FOCAL_LENGTH, 50, 1, be),
            ];
            let v = parse_jpeg(&jpeg(&tiff(&entries, be))).unwrap();
            assert_eq!(v.iso, 400.0);
            assert_eq!(v.exposure_time, 1.0 / 250.0);
            assert_eq!(v.fnumber, 2.8);
            assert_eq!(v.shutter_speed, 7.97);
            assert_eq!(v.bias_value, -2.0 / 3.0);
            assert_eq!(v.focal_length, 50.0);
        }
    }

    #[test]
    fn jpeg_without_exif_is_zero() {
        let jpg = [0xFF, 0xD8, 0xFF, 0xE0, 0x00, 0x04, 0, 0, 0xFF, 0xD9];
        assert_eq!(parse_jpeg(&jpg).unwrap(), ExifVector::default());
    }

    #[test]
    fn corrupt_blocks_are_reported() {
        assert!(parse_jpeg(b"not a jpeg").is_err());
        let mut t = tiff(&[rational(tag::FNUMBER, 28, 10, false)], false);
        // point the rational's offset past the end
        let n = t.len();
        t.truncate(n - 8);
        let err = parse_jpeg(&jpeg(&t)).unwrap_err();
        assert!(matches!(&err, Error::Parse { field, .. } if field == "fnumber"), "{err}");
        let mut bad = jpeg(&tiff(&[], true));
        bad[21] = b'X'; // byte-order mark
        assert!(parse_jpeg(&bad).is_err());
        // segment length overruns the file
        assert!(parse_jpeg(&[0xFF, 0xD8, 0xFF, 0xE1, 0x40, 0x00, 0x00]).is_err());
    }

    #[test]
    fn load_from_files() {
        let dir = tempfile::tempdir().unwrap();
        let img = dir.path().join("a0001.png");
        assert_eq!(load_for_image(&img).unwrap(), ExifVector::default());
        std::fs::write(sidecar_path(&img), r#"{"iso": 200}"#).unwrap();
        assert_eq!(sidecar_path(&img).file_name().unwrap(), "a0001.exif.json");
        assert_eq!(load_for_image(&img).unwrap().iso, 200.0);
        let jpg = dir.path().join("b.jpg");
        std::fs::write(&jpg, jpeg(&tiff(&[short(tag::ISO_SPEED_RATINGS, 100, false)], false))).unwrap();
        assert_eq!(load_for_image(&jpg).unwrap().iso, 100.0);
        assert!(load_exif(dir.path().join("c.txt")).is_err());
    }

    proptest! {
        #[test]
        fn decimal_scaling_within_one_ulp(x in -1e12f64..1e12, k in -6i32..6) {
            let binary = x * 10f64.powi(k);
            let decimal = scale_pow10(x, k);
            prop_assert!((decimal - binary).abs() <= 2.0 * f64::EPSILON * binary.abs(), "{x} {k}: {decimal} vs {binary}");
        }

        #[test]
        fn normalize_is_positively_homogeneous(v in proptest::array::uniform6(0.0f64..1e4), t in 0.0f64..100.0) {
            let base = ExifVector::from_array(v).normalize().0;
            let factors = [1.0 / 1000.0, 1000.0, 1.0, 1.0, 1.0 / 10.0, 1.0];
            for i in 0..6 {
                let mut scaled = v;
                scaled[i] *= t;
                let n = ExifVector::from_array(scaled).normalize().0;
                prop_assert!((n[i] - t * base[i]).abs() <= 1e-12 * (1.0 + (t * base[i]).abs()));
                prop_assert!((n[i] - factors[i] * scaled[i]).abs() <= 1e-12 * (1.0 + n[i].abs()));
            }
        }
    }
}
