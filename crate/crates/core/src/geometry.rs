//! Planar points, displacement vectors and ordered boundary curves.
//!
//! A [`BoundaryCurve`] is an open, ordered list of nodes. The index of a node
//! is its identity across iterations of the inverse solver, so no operation in
//! this crate reorders, resamples or drops points.

use std::f64::consts::PI;
use std::io::{BufRead, BufReader, Read, Write};
use std::ops::{Add, AddAssign, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Header line of the geometry CSV format.
pub const POINT_HEADER: &str = "x,y";

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vector2 {
    pub dx: f64,
    pub dy: f64,
}

impl Point2 {
    pub const ORIGIN: Point2 = Point2 { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Point2 { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    /// Position vector relative to the origin.
    pub fn to_vector(self) -> Vector2 {
        Vector2::new(self.x, self.y)
    }

    pub fn distance(&self, other: &Point2) -> f64 {
        (*self - *other).norm()
    }
}

impl Vector2 {
    pub const ZERO: Vector2 = Vector2 { dx: 0.0, dy: 0.0 };

    pub const fn new(dx: f64, dy: f64) -> Self {
        Vector2 { dx, dy }
    }

    pub fn is_finite(&self) -> bool {
        self.dx.is_finite() && self.dy.is_finite()
    }

    /// Euclidean norm.
    pub fn norm(&self) -> f64 {
        self.dx.hypot(self.dy)
    }
}

impl Add<Vector2> for Point2 {
    type Output = Point2;
    fn add(self, v: Vector2) -> Point2 {
        Point2::new(self.x + v.dx, self.y + v.dy)
    }
}

impl Sub for Point2 {
    type Output = Vector2;
    fn sub(self, other: Point2) -> Vector2 {
        Vector2::new(self.x - other.x, self.y - other.y)
    }
}

impl Add for Vector2 {
    type Output = Vector2;
    fn add(self, v: Vector2) -> Vector2 {
        Vector2::new(self.dx + v.dx, self.dy + v.dy)
    }
}

impl AddAssign for Vector2 {
    fn add_assign(&mut self, v: Vector2) {
        self.dx += v.dx;
        self.dy += v.dy;
    }
}

impl Sub for Vector2 {
    type Output = Vector2;
    fn sub(self, v: Vector2) -> Vector2 {
        Vector2::new(self.dx - v.dx, self.dy - v.dy)
    }
}

impl Neg for Vector2 {
    type Output = Vector2;
    fn neg(self) -> Vector2 {
        Vector2::new(-self.dx, -self.dy)
    }
}

impl Mul<Vector2> for f64 {
    type Output = Vector2;
    fn mul(self, v: Vector2) -> Vector2 {
        Vector2::new(self * v.dx, self * v.dy)
    }
}

/// Ordered set of boundary nodes. Always holds at least one finite point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundaryCurve {
    points: Vec<Point2>,
    label: String,
}

impl BoundaryCurve {
    pub fn new(points: Vec<Point2>, label: impl Into<String>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidArgument(
                "a boundary curve needs at least one point".into(),
            ));
        }
        if let Some(i) = points.iter().position(|p| !p.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "point {i} has a non-finite coordinate"
            )));
        }
        Ok(BoundaryCurve {
            points,
            label: label.into(),
        })
    }

    pub fn points(&self) -> &[Point2] {
        &self.points
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    pub fn with_label(mut self, label: impl Into<String>) -> Self {
        self.label = label.into();
        self
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    /// Always false; kept for API symmetry with `len`.
    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Diagonal of the axis-aligned bounding box.
    pub fn characteristic_length(&self) -> f64 {
        let (mut xmin, mut xmax) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut ymin, mut ymax) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in &self.points {
            xmin = xmin.min(p.x);
            xmax = xmax.max(p.x);
            ymin = ymin.min(p.y);
            ymax = ymax.max(p.y);
        }
        (xmax - xmin).hypot(ymax - ymin)
    }

    /// Largest absolute coordinate over all points.
    pub fn max_abs_coordinate(&self) -> f64 {
        self.points
            .iter()
            .fold(0.0_f64, |m, p| m.max(p.x.abs()).max(p.y.abs()))
    }

    pub fn centroid(&self) -> Point2 {
        let n = self.points.len() as f64;
        let (sx, sy) = self
            .points
            .iter()
            .fold((0.0, 0.0), |(sx, sy), p| (sx + p.x, sy + p.y));
        Point2::new(sx / n, sy / n)
    }
}

/// `n_points` equally spaced points on a circle, counter-clockwise from angle 0.
pub fn make_disc(radius: f64, n_points: usize, center: Point2) -> Result<BoundaryCurve> {
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::InvalidArgument(format!(
            "disc radius must be positive and finite, got {radius}"
        )));
    }
    if n_points < 3 {
        return Err(Error::InvalidArgument(format!(
            "a disc needs at least 3 points, got {n_points}"
        )));
    }
    if !center.is_finite() {
        return Err(Error::InvalidArgument("disc center must be finite".into()));
    }
    let points = (0..n_points)
        .map(|k| {
            let theta = 2.0 * PI * k as f64 / n_points as f64;
            let (s, c) = theta.sin_cos();
            Point2::new(center.x + radius * c, center.y + radius * s)
        })
        .collect();
    BoundaryCurve::new(points, format!("disc(r={radius}, n={n_points})"))
}

/// Writes a curve as `x,y` CSV with shortest round-trip float formatting.
pub fn write_curve<W: Write>(curve: &BoundaryCurve, sink: W) -> std::io::Result<()> {
    write_pairs(
        sink,
        POINT_HEADER,
        curve.points().iter().map(|p| (p.x, p.y)),
    )
}

/// Reads a curve from `x,y` CSV.
pub fn read_curve<R: Read>(source: R) -> Result<BoundaryCurve> {
    let pairs = read_pairs(source, POINT_HEADER)?;
    if pairs.is_empty() {
        return Err(Error::Parse {
            line: 1,
            message: "no points after header".into(),
        });
    }
    BoundaryCurve::new(
        pairs.into_iter().map(|(x, y)| Point2::new(x, y)).collect(),
        "",
    )
}

pub(crate) fn write_pairs<W: Write>(
    sink: W,
    header: &str,
    rows: impl Iterator<Item = (f64, f64)>,
) -> std::io::Result<()> {
    let mut out = std::io::BufWriter::new(sink);
    writeln!(out, "{header}")?;
    for (a, b) in rows {
        // `Display` for f64 prints the shortest decimal that parses back to the same bits.
        writeln!(out, "{a},{b}")?;
    }
    out.flush()
}

/// Parses a two-column CSV with an exact header. Line numbers are 1-based.
pub(crate) fn read_pairs<R: Read>(source: R, header: &str) -> Result<Vec<(f64, f64)>> {
    let reader = BufReader::new(source);
    let mut lines = reader.lines().enumerate();
    match lines.next() {
        Some((_, Ok(first))) if first == header => {}
        Some((_, Ok(first))) => {
            return Err(Error::Parse {
                line: 1,
                message: format!("expected header `{header}`, found `{first}`"),
            })
        }
        Some((_, Err(e))) => {
            return Err(Error::Parse {
                line: 1,
                message: e.to_string(),
            })
        }
        None => {
            return Err(Error::Parse {
                line: 1,
                message: format!("missing header `{header}`"),
            })
        }
    }

    let mut rows = Vec::new();
    for (idx, line) in lines {
        let lineno = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: lineno,
            message: e.to_string(),
        })?;
        if line.is_empty() {
            continue;
        }
        let mut fields = line.split(',');
        let (a, b) = match (fields.next(), fields.next(), fields.next()) {
            (Some(a), Some(b), None) => (a, b),
            _ => {
                return Err(Error::Parse {
                    line: lineno,
                    message: format!("expected 2 fields, found `{line}`"),
                })
            }
        };
        rows.push((parse_float(a, lineno)?, parse_float(b, lineno)?));
    }
    Ok(rows)
}

fn parse_float(field: &str, line: usize) -> Result<f64> {
    match field.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        Ok(_) => Err(Error::Parse {
            line,
            message: format!("non-finite value `{field}`"),
        }),
        Err(_) => Err(Error::Parse {
            line,
            message: format!("not a number: `{field}`"),
        }),
    }
}
