//! Plain-text calibration file.
//!
//! ```text
//! # comment lines start with '#'
//! convention forward          # or: convention inverse
//! X
//!   r00 r01 r02 tx
//!   r10 r11 r12 ty
//!   r20 r21 r22 tz
//!   0   0   0   1
//! Z1
//!   ... 16 numbers ...
//! B_0_1                     # pose j = 0, camera c = 1
//!   ... 16 numbers ...
//! intrinsics_1
//!   fx fy cx cy k1 k2 width height
//! ```
//!
//! Matrices are row-major, translations in mm. Numbers may be spread over any
//! number of lines; a block ends once its values have been read.
//!
//! Under `convention forward` (the default when the line is absent):
//! * `X` maps robot-base coordinates to world coordinates,
//! * `Z<c>` maps hand (end-effector) coordinates to camera `c` coordinates,
//! * `B_<j>_<c>` maps robot-base coordinates to hand coordinates for image `(j, c)`,
//!
//! so that the world→camera transform is `A = Z · B · X⁻¹`. Under
//! `convention inverse` every stored matrix is the inverse of the above, which
//! is the direction most hand-eye solvers report.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use nalgebra::Matrix4;

use super::{compute_extrinsics, CalibrationError, CameraIntrinsics, HomogeneousTransform};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Convention {
    #[default]
    Forward,
    Inverse,
}

impl FromStr for Convention {
    type Err = CalibrationError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "forward" => Ok(Convention::Forward),
            "inverse" => Ok(Convention::Inverse),
            other => Err(CalibrationError::Parse {
                line: 0,
                message: format!("unknown convention '{other}'"),
            }),
        }
    }
}

impl Convention {
    fn as_str(self) -> &'static str {
        match self {
            Convention::Forward => "forward",
            Convention::Inverse => "inverse",
        }
    }
}

/// Everything read from a calibration file, normalized to the forward convention.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct CalibrationSet {
    pub x: HomogeneousTransform,
    pub z: BTreeMap<u32, HomogeneousTransform>,
    /// keyed by (pose j, camera c)
    pub b: BTreeMap<(u32, u32), HomogeneousTransform>,
    pub intrinsics: BTreeMap<u32, CameraIntrinsics>,
}

enum Block {
    X,
    Z(u32),
    B(u32, u32),
    Intrinsics(u32),
}

fn parse_label(label: &str, line: usize) -> Result<Block, CalibrationError> {
    let bad = || CalibrationError::Parse {
        line,
        message: format!("unknown block label '{label}'"),
    };
    if label == "X" {
        return Ok(Block::X);
    }
    if let Some(rest) = label.strip_prefix("intrinsics_") {
        return rest.parse().map(Block::Intrinsics).map_err(|_| bad());
    }
    if let Some(rest) = label.strip_prefix("B_") {
        let mut it = rest.split('_');
        let j = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        let c = it.next().and_then(|s| s.parse().ok()).ok_or_else(bad)?;
        if it.next().is_some() {
            return Err(bad());
        }
        return Ok(Block::B(j, c));
    }
    if let Some(rest) = label.strip_prefix('Z') {
        return rest.parse().map(Block::Z).map_err(|_| bad());
    }
    Err(bad())
}

impl CalibrationSet {
    pub fn load(path: &Path) -> Result<Self, CalibrationError> {
        let text = std::fs::read_to_string(path).map_err(|source| CalibrationError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::parse(&text, None)
    }

    /// Parses file contents. `override_convention` wins over the file's own
    /// `convention` line.
    pub fn parse(text: &str, override_convention: Option<Convention>) -> Result<Self, CalibrationError> {
        // (line number, token)
        let mut tokens = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let body = raw.split('#').next().unwrap_or("");
            tokens.extend(body.split_whitespace().map(|t| (n + 1, t)));
        }
        let mut convention = Convention::Forward;
        let mut x = None;
        let mut set = CalibrationSet::default();
        let mut it = tokens.into_iter().peekable();
        while let Some((line, label)) = it.next() {
            if label == "convention" {
                let (_, value) = it.next().ok_or(CalibrationError::Parse {
                    line,
                    message: "missing convention value".into(),
                })?;
                convention = value.parse().map_err(|_| CalibrationError::Parse {
                    line,
                    message: format!("unknown convention '{value}'"),
                })?;
                continue;
            }
            let block = parse_label(label, line)?;
            let want = if matches!(block, Block::Intrinsics(_)) { 8 } else { 16 };
            let mut values = Vec::with_capacity(want);
            for _ in 0..want {
                let (vline, tok) = it.next().ok_or(CalibrationError::Parse {
                    line,
                    message: format!("block '{label}' ended early"),
                })?;
                let v: f64 = tok.parse().map_err(|_| CalibrationError::Parse {
                    line: vline,
                    message: format!("expected a number, found '{tok}'"),
                })?;
                values.push(v);
            }
            match block {
                Block::Intrinsics(c) => {
                    let dim = |v: f64| -> Result<u32, CalibrationError> {
                        if v.fract() != 0.0 || v <= 0.0 || v > u32::MAX as f64 {
                            return Err(CalibrationError::Parse {
                                line,
                                message: format!("image dimension {v} is not a positive integer"),
                            });
                        }
                        Ok(v as u32)
                    };
                    let k = CameraIntrinsics::new(
                        values[0],
                        values[1],
                        values[2],
                        values[3],
                        values[4],
                        values[5],
                        dim(values[6])?,
                        dim(values[7])?,
                    )?;
                    set.intrinsics.insert(c, k);
                }
                _ => {
                    let m = Matrix4::from_row_slice(&values);
                    let t = HomogeneousTransform::from_matrix(&m).map_err(|e| CalibrationError::Parse {
                        line,
                        message: format!("block '{label}': {e}"),
                    })?;
                    match block {
                        Block::X => x = Some(t),
                        Block::Z(c) => {
                            set.z.insert(c, t);
                        }
                        Block::B(j, c) => {
                            set.b.insert((j, c), t);
                        }
                        Block::Intrinsics(_) => unreachable!(),
                    }
                }
            }
        }
        set.x = x.ok_or(CalibrationError::MissingBlock("X".into()))?;
        if override_convention.unwrap_or(convention) == Convention::Inverse {
            set.x = set.x.invert();
            set.z.values_mut().for_each(|t| *t = t.invert());
            set.b.values_mut().for_each(|t| *t = t.invert());
        }
        Ok(set)
    }

    /// World→camera transform for image `(j, c)`.
    pub fn extrinsics(&self, pose: u32, camera: u32) -> Result<HomogeneousTransform, CalibrationError> {
        let z = self
            .z
            .get(&camera)
            .ok_or_else(|| CalibrationError::MissingBlock(format!("Z{camera}")))?;
        let b = self
            .b
            .get(&(pose, camera))
            .ok_or_else(|| CalibrationError::MissingBlock(format!("B_{pose}_{camera}")))?;
        Ok(compute_extrinsics(z, b, &self.x))
    }

    pub fn intrinsics_for(&self, camera: u32) -> Result<&CameraIntrinsics, CalibrationError> {
        self.intrinsics
            .get(&camera)
            .ok_or_else(|| CalibrationError::MissingBlock(format!("intrinsics_{camera}")))
    }

    /// Image keys `(j, c)` in file order (sorted by pose, then camera).
    pub fn images(&self) -> impl Iterator<Item = (u32, u32)> + '_ {
        self.b.keys().copied()
    }

    pub fn to_text(&self, convention: Convention) -> String {
        let fix = |t: &HomogeneousTransform| match convention {
            Convention::Forward => *t,
            Convention::Inverse => t.invert(),
        };
        let mut out = String::new();
        let _ = writeln!(out, "# arborscan calibration");
        let _ = writeln!(out, "convention {}", convention.as_str());
        write_matrix(&mut out, "X", &fix(&self.x));
        for (c, z) in &self.z {
            write_matrix(&mut out, &format!("Z{c}"), &fix(z));
        }
        for (c, k) in &self.intrinsics {
            let _ = writeln!(out, "intrinsics_{c}");
            let _ = writeln!(
                out,
                "  {:e} {:e} {:e} {:e} {:e} {:e} {} {}",
                k.fx, k.fy, k.cx, k.cy, k.k1, k.k2, k.width, k.height
            );
        }
        for ((j, c), b) in &self.b {
            write_matrix(&mut out, &format!("B_{j}_{c}"), &fix(b));
        }
        out
    }

    pub fn save(&self, path: &Path, convention: Convention) -> Result<(), CalibrationError> {
        std::fs::write(path, self.to_text(convention)).map_err(|source| CalibrationError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

fn write_matrix(out: &mut String, label: &str, t: &HomogeneousTransform) {
    let m = t.to_matrix();
    let _ = writeln!(out, "{label}");
    for r in 0..4 {
        // `{:e}` prints the shortest representation that round-trips exactly
        let _ = writeln!(
            out,
            "  {:e} {:e} {:e} {:e}",
            m[(r, 0)],
            m[(r, 1)],
            m[(r, 2)],
            m[(r, 3)]
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Vector3;

    fn sample() -> CalibrationSet {
        let mut set = CalibrationSet {
            x: HomogeneousTransform::from_axis_angle(Vector3::new(0.2, 1.0, 0.1), 0.4, Vector3::new(10.0, -5.0, 3.0)),
            ..Default::default()
        };
        set.z.insert(
            1,
            HomogeneousTransform::from_axis_angle(Vector3::new(1.0, 0.0, 0.3), -0.7, Vector3::new(0.0, 40.0, 1.0)),
        );
        set.b.insert(
            (0, 1),
            HomogeneousTransform::from_axis_angle(Vector3::new(0.0, 0.0, 1.0), 1.1, Vector3::new(500.0, 0.0, 20.0)),
        );
        set.intrinsics
            .insert(1, CameraIntrinsics::new(600.0, 601.0, 319.5, 239.5, 0.01, -0.002, 640, 480).unwrap());
        set
    }

    #[test]
    fn text_round_trip_is_exact() {
        let set = sample();
        let parsed = CalibrationSet::parse(&set.to_text(Convention::Forward), None).unwrap();
        assert_eq!(parsed, set);
    }

    #[test]
    fn inverse_convention_normalizes() {
        let set = sample();
        let parsed = CalibrationSet::parse(&set.to_text(Convention::Inverse), None).unwrap();
        let a = set.extrinsics(0, 1).unwrap();
        let b = parsed.extrinsics(0, 1).unwrap();
        assert!(a.max_abs_diff(&b) < 1e-9);
    }

    #[test]
    fn override_flag_wins() {
        let set = sample();
        // written as forward, forced to be read as inverse
        let parsed = CalibrationSet::parse(&set.to_text(Convention::Forward), Some(Convention::Inverse)).unwrap();
        assert!(parsed.x.max_abs_diff(&set.x.invert()) < 1e-12);
    }

    #[test]
    fn missing_x_reported() {
        let err = CalibrationSet::parse("Z1\n1 0 0 0\n0 1 0 0\n0 0 1 0\n0 0 0 1\n", None).unwrap_err();
        assert!(matches!(err, CalibrationError::MissingBlock(ref n) if n == "X"));
    }

    #[test]
    fn bad_number_reports_line() {
        let err = CalibrationSet::parse("X\n1 0 0 0\n0 1 0 oops\n", None).unwrap_err();
        assert!(matches!(err, CalibrationError::Parse { line: 3, .. }));
    }

    #[test]
    fn unknown_label_rejected() {
        assert!(CalibrationSet::parse("Q7\n", None).is_err());
        assert!(CalibrationSet::parse("B_1\n", None).is_err());
    }
}
