//! Spherical pillar binning of LiDAR returns into single-channel range images.
//!
//! A cloud in the body frame is expressed in spherical coordinates, the sensor
//! field of view is partitioned into `(N_phi, N_theta)` angular pillars and each
//! pillar keeps the minimum range of the points it contains. Empty pillars read
//! as the sensor's maximum range.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, PI};
use std::io::{BufRead, Write};

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use crate::error::{NavError, Result};

/// Relative slack applied before flooring bin counts, so that a span that is an
/// exact multiple of the resolution is not lost to rounding.
const COUNT_SNAP: f64 = 1e-9;

/// A point in spherical coordinates: range, azimuth in `[-pi, pi)`, polar angle
/// from +Z in `[0, pi]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SphericalPoint {
    pub r: f64,
    pub theta: f64,
    pub phi: f64,
}

impl SphericalPoint {
    pub fn to_cartesian(&self) -> Vector3<f64> {
        let (st, ct) = self.theta.sin_cos();
        let (sp, cp) = self.phi.sin_cos();
        Vector3::new(self.r * sp * ct, self.r * sp * st, self.r * cp)
    }
}

/// Converts a body-frame Cartesian point to spherical coordinates.
///
/// The origin maps to `(0, 0, 0)`. Azimuth `pi` is folded onto `-pi` so the
/// result always lies in the half-open interval.
pub fn cartesian_to_spherical(p: &Vector3<f64>) -> Result<SphericalPoint> {
    if !(p.x.is_finite() && p.y.is_finite() && p.z.is_finite()) {
        return Err(NavError::InvalidInput(format!(
            "non-finite point ({}, {}, {})",
            p.x, p.y, p.z
        )));
    }
    let r = p.norm();
    if r == 0.0 {
        return Ok(SphericalPoint {
            r: 0.0,
            theta: 0.0,
            phi: 0.0,
        });
    }
    let mut theta = p.y.atan2(p.x);
    if theta >= PI {
        theta = -PI;
    }
    let phi = (p.z / r).clamp(-1.0, 1.0).acos();
    Ok(SphericalPoint { r, theta, phi })
}

/// A body-frame point cloud.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PointCloud {
    pub points: Vec<SphericalPoint>,
}

impl PointCloud {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_cartesian(points: &[Vector3<f64>]) -> Result<Self> {
        let points = points
            .iter()
            .map(cartesian_to_spherical)
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn push(&mut self, p: SphericalPoint) {
        self.points.push(p);
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct GridSpecRaw {
    theta_min: f64,
    theta_max: f64,
    phi_min: f64,
    phi_max: f64,
    d_theta: f64,
    d_phi: f64,
    r_max: f64,
}

/// Angular extent, resolution and maximum range of the pillar grid.
///
/// Construction validates the spec, so every operation taking a
/// `PillarGridSpec` may assume it is well formed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridSpecRaw", into = "GridSpecRaw")]
pub struct PillarGridSpec {
    theta_min: f64,
    theta_max: f64,
    phi_min: f64,
    phi_max: f64,
    d_theta: f64,
    d_phi: f64,
    r_max: f64,
    n_theta: usize,
    n_phi: usize,
}

impl TryFrom<GridSpecRaw> for PillarGridSpec {
    type Error = NavError;

    fn try_from(raw: GridSpecRaw) -> Result<Self> {
        PillarGridSpec::new(
            (raw.theta_min, raw.theta_max),
            (raw.phi_min, raw.phi_max),
            raw.d_theta,
            raw.d_phi,
            raw.r_max,
        )
    }
}

impl From<PillarGridSpec> for GridSpecRaw {
    fn from(s: PillarGridSpec) -> Self {
        GridSpecRaw {
            theta_min: s.theta_min,
            theta_max: s.theta_max,
            phi_min: s.phi_min,
            phi_max: s.phi_max,
            d_theta: s.d_theta,
            d_phi: s.d_phi,
            r_max: s.r_max,
        }
    }
}

fn bin_count(span: f64, step: f64) -> usize {
    let ratio = span / step;
    (ratio * (1.0 + COUNT_SNAP)).floor() as usize
}

impl PillarGridSpec {
    pub fn new(
        theta: (f64, f64),
        phi: (f64, f64),
        d_theta: f64,
        d_phi: f64,
        r_max: f64,
    ) -> Result<Self> {
        let all = [theta.0, theta.1, phi.0, phi.1, d_theta, d_phi, r_max];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(NavError::Config("grid spec has non-finite values".into()));
        }
        if theta.0 >= theta.1 || phi.0 >= phi.1 {
            return Err(NavError::Config(format!(
                "empty angular range theta=[{}, {}) phi=[{}, {})",
                theta.0, theta.1, phi.0, phi.1
            )));
        }
        if d_theta <= 0.0 || d_phi <= 0.0 || r_max <= 0.0 {
            return Err(NavError::Config(
                "resolutions and r_max must be positive".into(),
            ));
        }
        let n_theta = bin_count(theta.1 - theta.0, d_theta);
        let n_phi = bin_count(phi.1 - phi.0, d_phi);
        if n_theta == 0 || n_phi == 0 {
            return Err(NavError::Config(format!(
                "grid has zero bins (n_phi={n_phi}, n_theta={n_theta})"
            )));
        }
        Ok(Self {
            theta_min: theta.0,
            theta_max: theta.1,
            phi_min: phi.0,
            phi_max: phi.1,
            d_theta,
            d_phi,
            r_max,
            n_theta,
            n_phi,
        })
    }

    /// Front half-plane azimuth at pi/60 and a polar band of +-pi/4 around the
    /// horizon at pi/36, 10 m range.
    pub fn paper_default() -> Self {
        Self::new(
            (-FRAC_PI_2, FRAC_PI_2),
            (FRAC_PI_2 - FRAC_PI_4, FRAC_PI_2 + FRAC_PI_4),
            PI / 60.0,
            PI / 36.0,
            10.0,
        )
        .expect("default grid is valid")
    }

    pub fn theta_range(&self) -> (f64, f64) {
        (self.theta_min, self.theta_max)
    }
    pub fn phi_range(&self) -> (f64, f64) {
        (self.phi_min, self.phi_max)
    }
    pub fn d_theta(&self) -> f64 {
        self.d_theta
    }
    pub fn d_phi(&self) -> f64 {
        self.d_phi
    }
    pub fn r_max(&self) -> f64 {
        self.r_max
    }
    pub fn n_theta(&self) -> usize {
        self.n_theta
    }
    pub fn n_phi(&self) -> usize {
        self.n_phi
    }
    pub fn cells(&self) -> usize {
        self.n_theta * self.n_phi
    }

    /// Azimuth of the centre of column `i`.
    pub fn theta_center(&self, i: usize) -> f64 {
        self.theta_min + (i as f64 + 0.5) * self.d_theta
    }

    /// Polar angle of the centre of row `j`.
    pub fn phi_center(&self, j: usize) -> f64 {
        self.phi_min + (j as f64 + 0.5) * self.d_phi
    }
}

/// `(N_phi, N_theta)` for the grid.
pub fn grid_dims(spec: &PillarGridSpec) -> (usize, usize) {
    (spec.n_phi, spec.n_theta)
}

/// Pillar `(azimuth index, polar index)` containing `pt`, or `None` when the
/// point falls outside the half-open field of view.
pub fn bin_index(spec: &PillarGridSpec, pt: &SphericalPoint) -> Option<(usize, usize)> {
    if !(pt.theta >= spec.theta_min && pt.theta < spec.theta_max) {
        return None;
    }
    if !(pt.phi >= spec.phi_min && pt.phi < spec.phi_max) {
        return None;
    }
    let i = ((pt.theta - spec.theta_min) / spec.d_theta).floor() as usize;
    let j = ((pt.phi - spec.phi_min) / spec.d_phi).floor() as usize;
    if i < spec.n_theta && j < spec.n_phi {
        Some((i, j))
    } else {
        None
    }
}

/// Minimum-range image over the pillar grid. Row index is the polar bin,
/// column index the azimuth bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PseudoImage {
    spec: PillarGridSpec,
    values: Vec<f64>,
}

impl PseudoImage {
    /// Image with every pillar empty.
    pub fn empty(spec: PillarGridSpec) -> Self {
        Self {
            values: vec![spec.r_max; spec.cells()],
            spec,
        }
    }

    pub fn from_values(spec: PillarGridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.cells() {
            return Err(NavError::Shape(format!(
                "expected {} values, got {}",
                spec.cells(),
                values.len()
            )));
        }
        if values
            .iter()
            .any(|v| !v.is_finite() || *v < 0.0 || *v > spec.r_max)
        {
            return Err(NavError::InvalidInput(
                "pseudo-image values must lie in [0, r_max]".into(),
            ));
        }
        Ok(Self { spec, values })
    }

    pub fn spec(&self) -> &PillarGridSpec {
        &self.spec
    }

    /// Value at polar row `j`, azimuth column `i`.
    pub fn get(&self, j: usize, i: usize) -> f64 {
        self.values[j * self.spec.n_theta + i]
    }

    /// Row-major values.
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    fn update_min(&mut self, j: usize, i: usize, r: f64) {
        let cell = &mut self.values[j * self.spec.n_theta + i];
        if r < *cell {
            *cell = r;
        }
    }

    /// Writes the `N_phi N_theta r_max` header followed by one line per row.
    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(
            w,
            "{} {} {}",
            self.spec.n_phi, self.spec.n_theta, self.spec.r_max
        )?;
        for row in self.values.chunks(self.spec.n_theta) {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(w, "{}", line.join(" "))?;
        }
        Ok(())
    }

    /// Parses a dump produced by [`PseudoImage::write_to`], checking it against
    /// `spec`.
    pub fn read_from<R: BufRead>(spec: PillarGridSpec, r: R) -> Result<Self> {
        let mut tokens = Vec::new();
        let mut header: Option<(usize, usize, f64)> = None;
        for line in r.lines() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if header.is_none() {
                let parts: Vec<&str> = line.split_whitespace().collect();
                if parts.len() != 3 {
                    return Err(NavError::Parse(format!("bad header '{line}'")));
                }
                let parse_err = |e: &dyn std::fmt::Display| NavError::Parse(e.to_string());
                header = Some((
                    parts[0].parse().map_err(|e| parse_err(&e))?,
                    parts[1].parse().map_err(|e| parse_err(&e))?,
                    parts[2].parse().map_err(|e| parse_err(&e))?,
                ));
                continue;
            }
            for t in line.split_whitespace() {
                tokens.push(
                    t.parse::<f64>()
                        .map_err(|e| NavError::Parse(format!("'{t}': {e}")))?,
                );
            }
        }
        let (n_phi, n_theta, r_max) =
            header.ok_or_else(|| NavError::Parse("missing header".into()))?;
        if n_phi != spec.n_phi || n_theta != spec.n_theta || r_max != spec.r_max {
            return Err(NavError::Shape(format!(
                "image header {n_phi}x{n_theta} r_max={r_max} does not match grid {}x{} r_max={}",
                spec.n_phi, spec.n_theta, spec.r_max
            )));
        }
        Self::from_values(spec, tokens)
    }
}

/// Projects a cloud onto the pillar grid in a single pass. Over-range returns
/// are clamped to `r_max`; out-of-view points are dropped.
pub fn project(spec: &PillarGridSpec, cloud: &PointCloud) -> PseudoImage {
    let mut img = PseudoImage::empty(*spec);
    for p in &cloud.points {
        if let Some((i, j)) = bin_index(spec, p) {
            img.update_min(j, i, p.r.min(spec.r_max));
        }
    }
    img
}

/// Reads `x y z` records, one per line. Blank lines and `#` comments are
/// skipped.
pub fn read_xyz<R: BufRead>(r: R) -> Result<Vec<Vector3<f64>>> {
    let mut out = Vec::new();
    for (lineno, line) in r.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| NavError::Parse(format!("line {}: {e}", lineno + 1)))?;
        if vals.len() != 3 {
            return Err(NavError::Parse(format!(
                "line {}: expected 3 values, got {}",
                lineno + 1,
                vals.len()
            )));
        }
        out.push(Vector3::new(vals[0], vals[1], vals[2]));
    }
    Ok(out)
}

pub fn write_xyz<W: Write>(mut w: W, points: &[Vector3<f64>]) -> Result<()> {
    for p in points {
        writeln!(w, "{} {} {}", p.x, p.y, p.z)?;
    }
    Ok(())
}
