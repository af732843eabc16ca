//! Point files: a `# manifold=sphere:d` or `# manifold=spd:d` header followed
//! by one point per row. Sphere rows hold the `d+1` coordinates; SPD rows hold
//! the upper triangle, row-major, unscaled.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::manifold::{ManifoldId, Point};

const HEADER_KEY: &str = "manifold=";

/// Reads a point file. Line numbers in errors are 1-based.
pub fn read_points<R: BufRead>(reader: R) -> Result<(ManifoldId, Vec<Point>)> {
    let mut manifold = None;
    let mut points = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() {
            continue;
        }
        if let Some(comment) = trimmed.strip_prefix('#') {
            let comment = comment.trim();
            if let Some(id) = comment.strip_prefix(HEADER_KEY) {
                if manifold.is_some() {
                    return Err(Error::Parse {
                        line: lineno,
                        reason: "duplicate manifold header".into(),
                    });
                }
                manifold = Some(id.trim().parse::<ManifoldId>().map_err(|e| Error::Parse {
                    line: lineno,
                    reason: e.to_string(),
                })?);
            }
            continue;
        }
        let m = manifold.ok_or_else(|| Error::Parse {
            line: lineno,
            reason: "data row before the `# manifold=` header".into(),
        })?;
        let row = trimmed
            .split(',')
            .map(|f| f.trim().parse::<f64>())
            .collect::<std::result::Result<Vec<_>, _>>()
            .map_err(|e| Error::Parse {
                line: lineno,
                reason: format!("bad number: {e}"),
            })?;
        let p = Point::from_row(m, &row).map_err(|e| Error::Parse {
            line: lineno,
            reason: e.to_string(),
        })?;
        points.push(p);
    }
    let m = manifold.ok_or_else(|| Error::Parse {
        line: 0,
        reason: "missing `# manifold=` header".into(),
    })?;
    Ok((m, points))
}

pub fn read_points_file(path: &std::path::Path) -> Result<(ManifoldId, Vec<Point>)> {
    let f = std::fs::File::open(path)?;
    read_points(std::io::BufReader::new(f))
}

/// Writes points with shortest round-trip float formatting.
pub fn write_points<W: Write>(mut w: W, m: ManifoldId, points: &[Point]) -> Result<()> {
    writeln!(w, "# {HEADER_KEY}{m}")?;
    for p in points {
        if p.manifold() != m {
            return Err(Error::ManifoldMismatch(m, p.manifold()));
        }
        let row: Vec<String> = p.to_row().iter().map(|v| v.to_string()).collect();
        writeln!(w, "{}", row.join(","))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_sphere_and_spd() {
        let s = ManifoldId::sphere(2).unwrap();
        let pts = vec![
            Point::new(s, vec![0.0, 0.6, 0.8]).unwrap(),
            Point::new(s, vec![1.0, 0.0, 0.0]).unwrap(),
        ];
        let mut buf = Vec::new();
        write_points(&mut buf, s, &pts).unwrap();
        let (m, back) = read_points(buf.as_slice()).unwrap();
        assert_eq!(m, s);
        assert_eq!(back, pts);

        let text = "# manifold=spd:2\n2,0.5,1\n";
        let (m, back) = read_points(text.as_bytes()).unwrap();
        assert_eq!(m, ManifoldId::spd(2).unwrap());
        assert_eq!(back[0].coords().as_slice(), &[2.0, 0.5, 0.5, 1.0]);
    }

    #[test]
    fn errors_name_the_line() {
        let text = "# manifold=sphere:2\n1,0,0\n1,0\n";
        match read_points(text.as_bytes()) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let text = "# manifold=sphere:2\n1,0,x\n";
        assert!(matches!(read_points(text.as_bytes()), Err(Error::Parse { line: 2, .. })));
        let text = "# manifold=spd:2\n1,2,1\n";
        assert!(matches!(read_points(text.as_bytes()), Err(Error::Parse { line: 2, .. })));
        assert!(read_points("1,0,0\n".as_bytes()).is_err());
        assert!(read_points("".as_bytes()).is_err());
    }
}
