//! ASCII PLY export for point clouds, labeled voxels and polylines.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use nalgebra::Vector3;

/// Writes `points` with an optional per-point scalar property.
pub fn write_points(path: &Path, points: &[Vector3<f64>], scalar: Option<(&str, &[f64])>) -> io::Result<()> {
    if let Some((_, values)) = scalar {
        if values.len() != points.len() {
            return Err(io::Error::new(io::ErrorKind::InvalidInput, "scalar count differs from point count"));
        }
    }
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "ply\nformat ascii 1.0\nelement vertex {}", points.len())?;
    writeln!(w, "property double x\nproperty double y\nproperty double z")?;
    if let Some((name, _)) = scalar {
        writeln!(w, "property double {name}")?;
    }
    writeln!(w, "end_header")?;
    for (i, p) in points.iter().enumerate() {
        write!(w, "{} {} {}", p.x, p.y, p.z)?;
        if let Some((_, values)) = scalar {
            write!(w, " {}", values[i])?;
        }
        writeln!(w)?;
    }
    w.flush()
}

/// Writes polylines as vertices plus one edge per consecutive vertex pair.
pub fn write_polylines(path: &Path, polylines: &[Vec<Vector3<f64>>]) -> io::Result<()> {
    let n_vertices: usize = polylines.iter().map(Vec::len).sum();
    let n_edges: usize = polylines.iter().map(|l| l.len().saturating_sub(1)).sum();
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "ply\nformat ascii 1.0\nelement vertex {n_vertices}")?;
    writeln!(w, "property double x\nproperty double y\nproperty double z")?;
    writeln!(w, "property int polyline")?;
    writeln!(w, "element edge {n_edges}\nproperty int vertex1\nproperty int vertex2\nend_header")?;
    for (k, line) in polylines.iter().enumerate() {
        for p in line {
            writeln!(w, "{} {} {} {k}", p.x, p.y, p.z)?;
        }
    }
    let mut base = 0;
    for line in polylines {
        for i in 1..line.len() {
            writeln!(w, "{} {}", base + i - 1, base + i)?;
        }
        base += line.len();
    }
    w.flush()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_counts() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.ply");
        let pts = vec![Vector3::new(1.0, 2.0, 3.0), Vector3::new(4.0, 5.0, 6.0)];
        write_points(&p, &pts, Some(("label", &[1.0, 2.0]))).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.contains("element vertex 2"));
        assert!(text.contains("property double label"));
        assert!(text.ends_with("4 5 6 2\n"));
        assert!(write_points(&p, &pts, Some(("label", &[1.0]))).is_err());

        let lines = vec![pts.clone(), vec![pts[0], pts[1], pts[0]]];
        write_polylines(&p, &lines).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        assert!(text.contains("element vertex 5"));
        assert!(text.contains("element edge 3"));
        assert!(text.ends_with("0 1\n2 3\n3 4\n"));
    }
}
