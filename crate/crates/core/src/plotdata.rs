//! Data-only plot output: zero-level contours on 2D lattices and point lists.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

fn crossing(p: (f64, f64), q: (f64, f64), vp: f64, vq: f64) -> (f64, f64) {
    let t = vp / (vp - vq);
    (p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1))
}

/// Marching squares for the boundary of `{v > 0}`.
///
/// `values[i + xs.len() * j]` is the field at `(xs[i], ys[j])`. Saddle
/// cells are resolved with the mean of the four corners.
pub fn zero_contour(xs: &[f64], ys: &[f64], values: &[f64]) -> Result<Vec<Segment>> {
    let (nx, ny) = (xs.len(), ys.len());
    if values.len() != nx * ny {
        return Err(Error::InvalidArgument(format!("{} values for a {nx}x{ny} lattice", values.len())));
    }
    let at = |i: usize, j: usize| values[i + nx * j];
    let mut out = Vec::new();
    for j in 0..ny.saturating_sub(1) {
        for i in 0..nx.saturating_sub(1) {
            let p = [(xs[i], ys[j]), (xs[i + 1], ys[j]), (xs[i + 1], ys[j + 1]), (xs[i], ys[j + 1])];
            let v = [at(i, j), at(i + 1, j), at(i + 1, j + 1), at(i, j + 1)];
            let inside = v.map(|x| x > 0.0);
            // Edge k joins corner k and corner k+1.
            let mut cross: [Option<(f64, f64)>; 4] = [None; 4];
            for k in 0..4 {
                let l = (k + 1) % 4;
                if inside[k] != inside[l] {
                    cross[k] = Some(crossing(p[k], p[l], v[k], v[l]));
                }
            }
            let hits: Vec<usize> = (0..4).filter(|&k| cross[k].is_some()).collect();
            let mut push = |a: usize, b: usize| {
                let (pa, pb) = (cross[a].unwrap(), cross[b].unwrap());
                out.push(Segment { x0: pa.0, y0: pa.1, x1: pb.0, y1: pb.1 });
            };
            match hits.len() {
                2 => push(hits[0], hits[1]),
                4 => {
                    let center = v.iter().sum::<f64>() / 4.0 > 0.0;
                    if center == inside[0] {
                        // Corners 0 and 2 connect; cut off corners 1 and 3.
                        push(0, 1);
                        push(2, 3);
                    } else {
                        push(3, 0);
                        push(1, 2);
                    }
                }
                _ => {}
            }
        }
    }
    Ok(out)
}

pub fn write_segments_csv(path: &Path, segments: &[Segment]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["x0", "y0", "x1", "y1"])?;
    for s in segments {
        w.write_record([s.x0, s.y0, s.x1, s.y1].map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_segments_csv(path: &Path) -> Result<Vec<Segment>> {
    let mut r = csv::Reader::from_path(path)?;
    Ok(r.deserialize().collect::<std::result::Result<Vec<Segment>, _>>()?)
}

/// Rows of named numeric columns.
pub fn write_points_csv(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        if r.len() != header.len() {
            return Err(Error::InvalidArgument(format!("row of {} values for {} columns", r.len(), header.len())));
        }
        w.write_record(r.iter().map(|v| v.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::linspace;

    fn field(n: usize, f: impl Fn(f64, f64) -> f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
        let xs = linspace(-1.0, 1.0, n);
        let ys = linspace(-1.0, 1.0, n);
        let mut v = Vec::new();
        for y in &ys {
            for x in &xs {
                v.push(f(*x, *y));
            }
        }
        (xs, ys, v)
    }

    #[test]
    fn linear_field_contour_lies_on_the_line() {
        let (xs, ys, v) = field(21, |x, y| 0.3 - x - 0.5 * y);
        let segs = zero_contour(&xs, &ys, &v).unwrap();
        assert!(!segs.is_empty());
        for s in &segs {
            assert!((0.3 - s.x0 - 0.5 * s.y0).abs() < 1e-12);
            assert!((0.3 - s.x1 - 0.5 * s.y1).abs() < 1e-12);
        }
    }

    #[test]
    fn circle_contour_is_close_to_radius() {
        let (xs, ys, v) = field(61, |x, y| 0.36 - x * x - y * y);
        let segs = zero_contour(&xs, &ys, &v).unwrap();
        let len: f64 = segs.iter().map(|s| (s.x1 - s.x0).hypot(s.y1 - s.y0)).sum();
        assert!((len - 2.0 * std::f64::consts::PI * 0.6).abs() < 0.02, "{len}");
        for s in &segs {
            assert!((s.x0.hypot(s.y0) - 0.6).abs() < 2e-3);
        }
    }

    #[test]
    fn constant_sign_has_no_contour() {
        let (xs, ys, v) = field(5, |_, _| 1.0);
        assert!(zero_contour(&xs, &ys, &v).unwrap().is_empty());
        assert!(zero_contour(&xs, &ys, &v[1..]).is_err());
    }

    #[test]
    fn saddle_gives_two_segments() {
        let segs = zero_contour(&[0.0, 1.0], &[0.0, 1.0], &[1.0, -1.0, -1.0, 1.0]).unwrap();
        assert_eq!(segs.len(), 2);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("c.csv");
        let segs = vec![Segment { x0: 0.1, y0: -0.2, x1: 0.3, y1: 1.0 / 3.0 }];
        write_segments_csv(&p, &segs).unwrap();
        assert_eq!(read_segments_csv(&p).unwrap(), segs);
        assert!(write_points_csv(&p, &["a", "b"], &[vec![1.0]]).is_err());
    }
}
