//! Camera list: one frame per line,
//! `id fx fy cx cy width height r00 r01 r02 r10 r11 r12 r20 r21 r22 t0 t1 t2`,
//! world-to-camera. Blank lines and `#` comments are skipped.

use std::fmt::Write as _;
use std::path::Path;

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::geometry::{CameraFrame, CameraIntrinsics, Pose};

use super::{read_text, write_bytes};

pub fn read_cameras(path: &Path) -> Result<Vec<CameraFrame>> {
    parse_cameras(path, &read_text(path)?)
}

pub fn write_cameras(path: &Path, frames: &[CameraFrame]) -> Result<()> {
    write_bytes(path, encode_cameras(frames).as_bytes())
}

pub(crate) fn parse_cameras(path: &Path, text: &str) -> Result<Vec<CameraFrame>> {
    let mut frames = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let bad = |msg: String| Error::format(path, format!("line {}: {msg}", n + 1));
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 19 {
            return Err(bad(format!("expected 19 fields, got {}", toks.len())));
        }
        let id: u32 = toks[0].parse().map_err(|_| bad(format!("bad frame id {}", toks[0])))?;
        let w: u32 = toks[5].parse().map_err(|_| bad(format!("bad width {}", toks[5])))?;
        let h: u32 = toks[6].parse().map_err(|_| bad(format!("bad height {}", toks[6])))?;
        let mut f = [0.0f64; 16];
        for (slot, i) in f.iter_mut().zip((1..5).chain(7..19)) {
            *slot = toks[i].parse().map_err(|_| bad(format!("bad number {}", toks[i])))?;
        }
        let intrinsics = CameraIntrinsics::new(f[0], f[1], f[2], f[3], w, h).map_err(|e| bad(e.to_string()))?;
        let rotation = Matrix3::from_row_slice(&f[4..13]);
        let translation = Vector3::new(f[13], f[14], f[15]);
        let pose = Pose::new(rotation, translation).map_err(|e| bad(e.to_string()))?;
        if frames.iter().any(|fr: &CameraFrame| fr.id == id) {
            return Err(bad(format!("duplicate frame id {id}")));
        }
        frames.push(CameraFrame { id, intrinsics, pose });
    }
    Ok(frames)
}

pub(crate) fn encode_cameras(frames: &[CameraFrame]) -> String {
    let mut out = String::from("# id fx fy cx cy width height r00 r01 r02 r10 r11 r12 r20 r21 r22 t0 t1 t2\n");
    for fr in frames {
        let k = &fr.intrinsics;
        write!(out, "{} {} {} {} {} {} {}", fr.id, k.fx, k.fy, k.cx, k.cy, k.width, k.height).unwrap();
        let r = fr.pose.rotation();
        for i in 0..3 {
            for j in 0..3 {
                write!(out, " {}", r[(i, j)]).unwrap();
            }
        }
        for v in fr.pose.translation().iter() {
            write!(out, " {v}").unwrap();
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Point3;

    fn p() -> &'static Path {
        Path::new("cameras.txt")
    }

    #[test]
    fn identity_line_gives_identity_pose() {
        let text = "# header\n3 100 100 50 40 100 80 1 0 0 0 1 0 0 0 1 0 0 0\n\n";
        let frames = parse_cameras(p(), text).unwrap();
        assert_eq!(frames.len(), 1);
        assert_eq!(frames[0].id, 3);
        assert_eq!(frames[0].pose, Pose::identity());
        assert_eq!(frames[0].intrinsics.width, 100);
    }

    #[test]
    fn non_orthonormal_rotation_is_error() {
        let text = "0 100 100 50 40 100 80 1 0 0 0 2 0 0 0 1 0 0 0\n";
        assert!(matches!(parse_cameras(p(), text), Err(Error::Format { .. })));
    }

    #[test]
    fn wrong_field_count_is_error() {
        assert!(parse_cameras(p(), "0 1 2 3\n").is_err());
    }

    #[test]
    fn roundtrip_is_bit_identical() {
        let k = CameraIntrinsics::new(123.456789, 98.7654321, 64.1, 47.9, 128, 96).unwrap();
        let frames: Vec<CameraFrame> = (0..5)
            .map(|i| {
                let eye = Point3::new(i as f64 * 3.3, -1.7 * i as f64, 40.0 + i as f64 / 7.0);
                let target = Point3::new(0.3 * i as f64, 2.0, 0.0);
                let pose = Pose::look_at(&eye, &target, &Vector3::y()).unwrap();
                CameraFrame { id: i, intrinsics: k, pose }
            })
            .collect();
        let text = encode_cameras(&frames);
        let back = parse_cameras(p(), &text).unwrap();
        assert_eq!(back, frames);
        assert_eq!(encode_cameras(&back), text);
    }
}
