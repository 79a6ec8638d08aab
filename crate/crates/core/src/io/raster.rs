//! Raster files. Raw form: width and height as u32 LE, then row-major
//! samples (f32 LE for depth, u8 for masks). PNG form: 16-bit depth in
//! millimeters, 8-bit class masks. The form follows the file extension.

use std::path::Path;

use crate::error::{Error, Result};
use crate::raster::{DepthMap, Raster};
use crate::taxonomy::ClassId;

use super::{read_bytes, write_bytes};

fn is_png(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("png"))
}

fn header(bytes: &[u8], path: &Path, sample: usize) -> Result<(u32, u32, usize)> {
    if bytes.len() < 8 {
        return Err(Error::format(path, "short raster header"));
    }
    let w = u32::from_le_bytes(bytes[0..4].try_into().unwrap());
    let h = u32::from_le_bytes(bytes[4..8].try_into().unwrap());
    let n = w as usize * h as usize;
    if bytes.len() != 8 + n * sample {
        return Err(Error::format(path, format!("expected {} bytes for {w}x{h}, got {}", 8 + n * sample, bytes.len())));
    }
    Ok((w, h, n))
}

fn with_header(w: u32, h: u32, cap: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + cap);
    out.extend_from_slice(&w.to_le_bytes());
    out.extend_from_slice(&h.to_le_bytes());
    out
}

pub fn read_depth(path: &Path) -> Result<DepthMap> {
    let bytes = read_bytes(path)?;
    if is_png(path) {
        let (w, h, data) = decode_png(path, &bytes, png::BitDepth::Sixteen)?;
        let depth = data.chunks_exact(2).map(|c| u16::from_be_bytes([c[0], c[1]]) as f32 / 1000.0).collect();
        return Raster::from_vec(w, h, depth);
    }
    let (w, h, _) = header(&bytes, path, 4)?;
    let data = bytes[8..].chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
    Raster::from_vec(w, h, data)
}

pub fn write_depth(path: &Path, depth: &DepthMap) -> Result<()> {
    let (w, h) = depth.dims();
    if is_png(path) {
        let mut data = Vec::with_capacity(depth.data().len() * 2);
        for &d in depth.data() {
            let mm = (d as f64 * 1000.0).round().clamp(0.0, u16::MAX as f64) as u16;
            data.extend_from_slice(&mm.to_be_bytes());
        }
        return write_bytes(path, &encode_png(path, w, h, png::BitDepth::Sixteen, &data)?);
    }
    let mut out = with_header(w, h, depth.data().len() * 4);
    for &d in depth.data() {
        out.extend_from_slice(&d.to_le_bytes());
    }
    write_bytes(path, &out)
}

pub fn read_mask(path: &Path) -> Result<Raster<ClassId>> {
    let bytes = read_bytes(path)?;
    let (w, h, data) = if is_png(path) {
        decode_png(path, &bytes, png::BitDepth::Eight)?
    } else {
        let (w, h, _) = header(&bytes, path, 1)?;
        (w, h, bytes[8..].to_vec())
    };
    Raster::from_vec(w, h, data.into_iter().map(ClassId::from).collect())
}

pub fn write_mask(path: &Path, mask: &Raster<ClassId>) -> Result<()> {
    let (w, h) = mask.dims();
    let data = mask
        .data()
        .iter()
        .map(|&c| u8::try_from(c).map_err(|_| Error::format(path, format!("class {c} does not fit in 8 bits"))))
        .collect::<Result<Vec<u8>>>()?;
    if is_png(path) {
        return write_bytes(path, &encode_png(path, w, h, png::BitDepth::Eight, &data)?);
    }
    let mut out = with_header(w, h, data.len());
    out.extend_from_slice(&data);
    write_bytes(path, &out)
}

/// 8-bit grayscale PNG of a boolean raster, for debugging.
pub fn write_bool_png(path: &Path, raster: &Raster<bool>) -> Result<()> {
    let (w, h) = raster.dims();
    let data: Vec<u8> = raster.data().iter().map(|&b| if b { 255 } else { 0 }).collect();
    write_bytes(path, &encode_png(path, w, h, png::BitDepth::Eight, &data)?)
}

fn encode_png(path: &Path, w: u32, h: u32, depth: png::BitDepth, data: &[u8]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    {
        let mut enc = png::Encoder::new(&mut out, w, h);
        enc.set_color(png::ColorType::Grayscale);
        enc.set_depth(depth);
        let mut writer = enc.write_header().map_err(|e| Error::format(path, e.to_string()))?;
        writer.write_image_data(data).map_err(|e| Error::format(path, e.to_string()))?;
    }
    Ok(out)
}

fn decode_png(path: &Path, bytes: &[u8], want: png::BitDepth) -> Result<(u32, u32, Vec<u8>)> {
    let bad = |e: png::DecodingError| Error::format(path, e.to_string());
    let dec = png::Decoder::new(std::io::Cursor::new(bytes));
    let mut reader = dec.read_info().map_err(bad)?;
    let info = reader.info();
    if info.color_type != png::ColorType::Grayscale || info.bit_depth != want {
        return Err(Error::format(path, format!("expected {:?}-bit grayscale png", want)));
    }
    let (w, h) = (info.width, info.height);
    let mut buf = vec![0u8; reader.output_buffer_size().ok_or_else(|| Error::format(path, "png too large"))?];
    let frame = reader.next_frame(&mut buf).map_err(bad)?;
    buf.truncate(frame.buffer_size());
    Ok((w, h, buf))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn raw_depth_roundtrip_and_layout() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.depth");
        let depth = Raster::from_vec(3, 2, vec![0.0, 1.5, 2.25, 3.0, -1.0, 1e-3]).unwrap();
        write_depth(&path, &depth).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(&bytes[..8], &[3, 0, 0, 0, 2, 0, 0, 0]);
        assert_eq!(bytes.len(), 8 + 24);
        assert_eq!(read_depth(&path).unwrap(), depth);
    }

    #[test]
    fn png_depth_is_millimeter_quantized() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.png");
        let depth = Raster::from_vec(2, 1, vec![12.3456, 0.0]).unwrap();
        write_depth(&path, &depth).unwrap();
        let back = read_depth(&path).unwrap();
        assert!((back.get(0, 0) - 12.346).abs() < 1e-6);
        assert_eq!(back.get(1, 0), 0.0);
    }

    #[test]
    fn mask_roundtrip_raw_and_png() {
        let dir = tempfile::tempdir().unwrap();
        let mask = Raster::from_vec(2, 2, vec![0, 1, 17, 22]).unwrap();
        for name in ["m.mask", "m.png"] {
            let path = dir.path().join(name);
            write_mask(&path, &mask).unwrap();
            assert_eq!(read_mask(&path).unwrap(), mask);
        }
    }

    #[test]
    fn short_raster_is_error() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.depth");
        std::fs::write(&path, [2, 0, 0, 0, 2, 0, 0, 0, 1, 2, 3]).unwrap();
        assert!(matches!(read_depth(&path), Err(Error::Format { .. })));
    }
}
