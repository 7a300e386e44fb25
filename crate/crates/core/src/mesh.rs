//! Structured triangulation of the axisymmetric half-section `(0, R) x (0, H)`.
//!
//! The grid is uniform per direction except that the grid line closest to the
//! laser penetration depth (in `z`) and to the observation disc radius (in `r`)
//! is moved onto that value, so source and observation integrals see element
//! boundaries at their cutoffs.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Sample geometry and experiment timing, in SI units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentGeometry {
    /// Sample radius `R` (m).
    pub radius: f64,
    /// Sample height `H` (m).
    pub height: f64,
    /// Laser penetration depth `z_f` (m).
    pub penetration_depth: f64,
    /// Flash duration `t_f` (s).
    pub flash_duration: f64,
    /// Experiment duration `T` (s).
    pub duration: f64,
    /// Radius `L` of the observed disc on the top face (m).
    pub disc_radius: f64,
}

impl ExperimentGeometry {
    /// Copper sample of the reference experiment with an observation disc of
    /// half the sample radius.
    pub fn copper_reference() -> Self {
        Self {
            radius: 1.240e-2,
            height: 2.037e-3,
            penetration_depth: 1.273e-4,
            flash_duration: 4.000e-4,
            duration: 4.000e-2,
            disc_radius: 0.5 * 1.240e-2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("radius", self.radius),
            ("height", self.height),
            ("penetration_depth", self.penetration_depth),
            ("flash_duration", self.flash_duration),
            ("duration", self.duration),
            ("disc_radius", self.disc_radius),
        ];
        for (name, value) in fields {
            if !(value.is_finite() && value > 0.0) {
                return Err(invalid(format!(
                    "geometry.{name} must be positive and finite, got {value}"
                )));
            }
        }
        if self.penetration_depth > self.height {
            return Err(invalid(
                "geometry.penetration_depth must not exceed the height",
            ));
        }
        if self.flash_duration > self.duration {
            return Err(invalid(
                "geometry.flash_duration must not exceed the duration",
            ));
        }
        if self.disc_radius > self.radius {
            return Err(invalid("geometry.disc_radius must not exceed the radius"));
        }
        Ok(())
    }
}

/// Which part of the boundary an edge lies on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BoundaryTag {
    /// Symmetry axis `r = 0`.
    Axis,
    /// Curved surface `r = R`.
    Outer,
    /// Heated face `z = 0`.
    Bottom,
    /// Observed face `z = H`.
    Top,
}

impl BoundaryTag {
    /// Faces carry the Robin heat-loss condition.
    pub fn is_face(self) -> bool {
        matches!(self, BoundaryTag::Bottom | BoundaryTag::Top)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundaryEdge {
    pub vertices: [usize; 2],
    pub tag: BoundaryTag,
}

/// Conforming triangle mesh of the half-section.
#[derive(Debug, Clone)]
pub struct Mesh {
    /// Vertex coordinates `(r, z)`.
    pub vertices: Vec<[f64; 2]>,
    /// Counter-clockwise vertex triples.
    pub triangles: Vec<[usize; 3]>,
    pub boundary_edges: Vec<BoundaryEdge>,
    /// Longest edge length.
    pub h: f64,
    /// Grid lines in `r`, ascending.
    pub r_lines: Vec<f64>,
    /// Grid lines in `z`, ascending.
    pub z_lines: Vec<f64>,
}

impl Mesh {
    pub fn n_vertices(&self) -> usize {
        self.vertices.len()
    }

    pub fn n_cells_r(&self) -> usize {
        self.r_lines.len() - 1
    }

    pub fn n_cells_z(&self) -> usize {
        self.z_lines.len() - 1
    }

    /// Signed area of triangle `t` in the `(r, z)` plane.
    pub fn signed_area(&self, t: usize) -> f64 {
        let [a, b, c] = self.triangles[t];
        let (pa, pb, pc) = (self.vertices[a], self.vertices[b], self.vertices[c]);
        0.5 * ((pb[0] - pa[0]) * (pc[1] - pa[1]) - (pc[0] - pa[0]) * (pb[1] - pa[1]))
    }

    /// Writes the vertex and triangle tables as CSV.
    pub fn write_csv<W1: Write, W2: Write>(
        &self,
        mut vertices: W1,
        mut triangles: W2,
    ) -> std::io::Result<()> {
        writeln!(vertices, "index,r_m,z_m")?;
        for (i, v) in self.vertices.iter().enumerate() {
            writeln!(vertices, "{i},{},{}", v[0], v[1])?;
        }
        writeln!(triangles, "index,v0,v1,v2")?;
        for (i, t) in self.triangles.iter().enumerate() {
            writeln!(triangles, "{i},{},{},{}", t[0], t[1], t[2])?;
        }
        Ok(())
    }
}

fn cell_count(extent: f64, h_target: f64) -> usize {
    // guard against 1/(1/3) style round-off pushing an exact ratio up a cell
    let ratio = extent / h_target * (1.0 - 1e-12);
    (ratio.ceil() as usize).max(1)
}

/// Uniform lines on `[0, extent]` with the line nearest `breakpoint` moved onto it.
/// The second return value reports whether `breakpoint` ends up on a line.
fn grid_lines(extent: f64, h_target: f64, breakpoint: f64) -> (Vec<f64>, bool) {
    let n = cell_count(extent, h_target);
    let dx = extent / n as f64;
    let mut lines: Vec<f64> = (0..=n).map(|i| i as f64 * dx).collect();
    lines[n] = extent;

    let tol = 1e-12 * extent;
    let nearest = ((breakpoint / dx).round() as usize).min(n);
    if (lines[nearest] - breakpoint).abs() <= tol {
        if nearest > 0 && nearest < n {
            lines[nearest] = breakpoint;
        }
        return (lines, true);
    }
    if nearest > 0 && nearest < n {
        lines[nearest] = breakpoint;
        return (lines, true);
    }
    (lines, false)
}

/// Builds a structured mesh with `ceil(R/h) x ceil(H/h)` cells, each split along
/// the diagonal from its lower-left to its upper-right corner.
pub fn build_rect_mesh(geometry: &ExperimentGeometry, h_target: f64) -> Result<Mesh> {
    if !(h_target.is_finite() && h_target > 0.0) {
        return Err(invalid(format!(
            "h_target must be positive and finite, got {h_target}"
        )));
    }
    geometry.validate()?;

    let (r_lines, r_aligned) = grid_lines(geometry.radius, h_target, geometry.disc_radius);
    let (z_lines, z_aligned) = grid_lines(geometry.height, h_target, geometry.penetration_depth);
    if !r_aligned {
        log::warn!("no grid line at the observation disc radius; partial elements will be clipped");
    }
    if !z_aligned {
        log::warn!("no grid line at the penetration depth; partial elements will be clipped");
    }

    let nr = r_lines.len() - 1;
    let nz = z_lines.len() - 1;
    // number along the shorter direction first to keep the matrix band narrow
    let z_fastest = nz <= nr;
    let index = |i: usize, j: usize| {
        if z_fastest {
            i * (nz + 1) + j
        } else {
            j * (nr + 1) + i
        }
    };

    let mut vertices = vec![[0.0; 2]; (nr + 1) * (nz + 1)];
    for (i, &r) in r_lines.iter().enumerate() {
        for (j, &z) in z_lines.iter().enumerate() {
            vertices[index(i, j)] = [r, z];
        }
    }

    let mut triangles = Vec::with_capacity(2 * nr * nz);
    let mut h: f64 = 0.0;
    for i in 0..nr {
        for j in 0..nz {
            let (v00, v10, v11, v01) = (
                index(i, j),
                index(i + 1, j),
                index(i + 1, j + 1),
                index(i, j + 1),
            );
            triangles.push([v00, v10, v11]);
            triangles.push([v00, v11, v01]);
            let dr = r_lines[i + 1] - r_lines[i];
            let dz = z_lines[j + 1] - z_lines[j];
            h = h.max(dr.hypot(dz));
        }
    }

    let mut boundary_edges = Vec::with_capacity(2 * (nr + nz));
    for i in 0..nr {
        boundary_edges.push(BoundaryEdge {
            vertices: [index(i, 0), index(i + 1, 0)],
            tag: BoundaryTag::Bottom,
        });
        boundary_edges.push(BoundaryEdge {
            vertices: [index(i, nz), index(i + 1, nz)],
            tag: BoundaryTag::Top,
        });
    }
    for j in 0..nz {
        boundary_edges.push(BoundaryEdge {
            vertices: [index(0, j), index(0, j + 1)],
            tag: BoundaryTag::Axis,
        });
        boundary_edges.push(BoundaryEdge {
            vertices: [index(nr, j), index(nr, j + 1)],
            tag: BoundaryTag::Outer,
        });
    }

    Ok(Mesh {
        vertices,
        triangles,
        boundary_edges,
        h,
        r_lines,
        z_lines,
    })
}
