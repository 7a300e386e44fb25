//! Axisymmetric P1 finite element operators.
//!
//! Every integral carries the radial weight `r`; the azimuthal factor `2 pi` is
//! left out throughout since it cancels from the Galerkin equations and from
//! the disc average.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::linalg::{Pattern, SparseMatrix};
use crate::mesh::{BoundaryTag, ExperimentGeometry, Mesh};

/// Known thermal properties of the sample and its surroundings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaterialProperties {
    /// Density (kg m^-3).
    pub density: f64,
    /// Specific heat capacity (J kg^-1 K^-1).
    pub specific_heat: f64,
    /// Face heat transfer coefficient `kappa` (W m^-2 K^-1).
    pub heat_transfer: f64,
    /// Ambient (and initial) temperature (K).
    pub ambient_temperature: f64,
}

impl MaterialProperties {
    pub fn copper_reference() -> Self {
        Self {
            density: 8.930e3,
            specific_heat: 3.970e2,
            heat_transfer: 1.100e3,
            ambient_temperature: 385.0,
        }
    }

    /// Volumetric heat capacity `rho c_p`.
    pub fn heat_capacity(&self) -> f64 {
        self.density * self.specific_heat
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("density", self.density),
            ("specific_heat", self.specific_heat),
            ("ambient_temperature", self.ambient_temperature),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!(
                    "material.{name} must be positive and finite, got {v}"
                )));
            }
        }
        if !(self.heat_transfer.is_finite() && self.heat_transfer >= 0.0) {
            return Err(invalid(format!(
                "material.heat_transfer must be non-negative and finite, got {}",
                self.heat_transfer
            )));
        }
        Ok(())
    }
}

/// Radial shape `chi(r)` of the laser pulse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum LaserProfile {
    Uniform,
    /// `chi(r) = exp(-r^2 / (2 width^2))`.
    Gaussian {
        width: f64,
    },
}

impl LaserProfile {
    pub fn chi(&self, r: f64) -> f64 {
        match *self {
            LaserProfile::Uniform => 1.0,
            LaserProfile::Gaussian { width } => (-r * r / (2.0 * width * width)).exp(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            LaserProfile::Uniform => Ok(()),
            LaserProfile::Gaussian { width } if width.is_finite() && width > 0.0 => Ok(()),
            LaserProfile::Gaussian { width } => Err(invalid(format!(
                "laser width must be positive and finite, got {width}"
            ))),
        }
    }
}

/// Assembled operators, all unscaled by material coefficients.
#[derive(Debug, Clone)]
pub struct FemOperators {
    /// `M_ij = int phi_i phi_j r`.
    pub mass: SparseMatrix,
    /// `K_ij = int grad phi_i . grad phi_j r`.
    pub stiffness: SparseMatrix,
    /// Face mass over `z = 0` and `z = H`.
    pub face_mass: SparseMatrix,
    /// Face load `int_faces phi_i r`.
    pub face_load: Vec<f64>,
    /// Source load for unit intensity, `int_{z <= z_f} chi phi_i r`.
    pub source: Vec<f64>,
    /// Disc-average functional over `{z = H, r <= L}`.
    pub observation: Vec<f64>,
    pub n_h: usize,
}

fn barycentric(p: [[f64; 2]; 3], x: [f64; 2]) -> [f64; 3] {
    let det = (p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]);
    let l1 =
        ((x[0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (x[1] - p[0][1])) / det;
    let l2 =
        ((p[1][0] - p[0][0]) * (x[1] - p[0][1]) - (x[0] - p[0][0]) * (p[1][1] - p[0][1])) / det;
    [1.0 - l1 - l2, l1, l2]
}

fn triangle_area(p: [[f64; 2]; 3]) -> f64 {
    0.5 * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1]) - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]))
}

fn midpoint(a: [f64; 2], b: [f64; 2]) -> [f64; 2] {
    [0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]
}

/// Part of a triangle with `z <= cut`, as a convex polygon.
fn clip_below(p: [[f64; 2]; 3], cut: f64) -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(4);
    for k in 0..3 {
        let (a, b) = (p[k], p[(k + 1) % 3]);
        let (ina, inb) = (a[1] <= cut, b[1] <= cut);
        if ina {
            out.push(a);
        }
        if ina != inb {
            let s = (cut - a[1]) / (b[1] - a[1]);
            out.push([a[0] + s * (b[0] - a[0]), cut]);
        }
    }
    out
}

/// Adds `int_sub chi phi_a r` over a sub-triangle of `parent` to `load`, using
/// the edge-midpoint rule.
fn add_source(
    load: &mut [f64],
    verts: [usize; 3],
    parent: [[f64; 2]; 3],
    sub: [[f64; 2]; 3],
    profile: &LaserProfile,
) {
    let area = triangle_area(sub);
    if area <= 0.0 {
        return;
    }
    for q in [
        midpoint(sub[0], sub[1]),
        midpoint(sub[1], sub[2]),
        midpoint(sub[2], sub[0]),
    ] {
        let phi = barycentric(parent, q);
        let weight = area / 3.0 * profile.chi(q[0]) * q[0];
        for a in 0..3 {
            load[verts[a]] += weight * phi[a];
        }
    }
}

const GAUSS2: [f64; 2] = [0.211_324_865_405_187_1, 0.788_675_134_594_812_9];

pub fn assemble_operators(
    mesh: &Mesh,
    geometry: &ExperimentGeometry,
    material: &MaterialProperties,
    profile: &LaserProfile,
) -> Result<FemOperators> {
    geometry.validate()?;
    material.validate()?;
    profile.validate()?;

    let (radius, height) = (geometry.radius, geometry.height);
    let tol_r = 1e-12 * radius;
    let tol_z = 1e-12 * height;
    for (i, v) in mesh.vertices.iter().enumerate() {
        if !(v[0] >= -tol_r && v[0] <= radius + tol_r && v[1] >= -tol_z && v[1] <= height + tol_z) {
            return Err(Error::Assembly(format!(
                "vertex {i} at ({}, {}) lies outside [0, {radius}] x [0, {height}]",
                v[0], v[1]
            )));
        }
    }

    let n = mesh.n_vertices();
    let pattern = Arc::new(Pattern::from_triangles(n, &mesh.triangles));
    let mut mass = SparseMatrix::zeros(pattern.clone());
    let mut stiffness = SparseMatrix::zeros(pattern.clone());
    let mut face_mass = SparseMatrix::zeros(pattern);
    let mut face_load = vec![0.0; n];
    let mut source = vec![0.0; n];
    let mut observation = vec![0.0; n];

    let z_cut = geometry.penetration_depth;
    let mut clipped_elements = 0usize;

    for (t, tri) in mesh.triangles.iter().enumerate() {
        let p = tri.map(|v| mesh.vertices[v]);
        let area = triangle_area(p);
        if area <= 0.0 {
            return Err(Error::Assembly(format!(
                "triangle {t} has non-positive area {area}"
            )));
        }

        let grads: [[f64; 2]; 3] = std::array::from_fn(|a| {
            let (b, c) = ((a + 1) % 3, (a + 2) % 3);
            [
                (p[b][1] - p[c][1]) / (2.0 * area),
                (p[c][0] - p[b][0]) / (2.0 * area),
            ]
        });
        let r_centroid = (p[0][0] + p[1][0] + p[2][0]) / 3.0;
        let mids = [
            midpoint(p[0], p[1]),
            midpoint(p[1], p[2]),
            midpoint(p[2], p[0]),
        ];
        // barycentric values at the edge midpoints
        let mid_phi = [[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]];

        for a in 0..3 {
            for b in 0..3 {
                let k_ab =
                    (grads[a][0] * grads[b][0] + grads[a][1] * grads[b][1]) * area * r_centroid;
                let m_ab: f64 = (0..3)
                    .map(|q| area / 3.0 * mids[q][0] * mid_phi[q][a] * mid_phi[q][b])
                    .sum();
                stiffness.add(tri[a], tri[b], k_ab);
                mass.add(tri[a], tri[b], m_ab);
            }
        }

        let z_min = p.iter().map(|v| v[1]).fold(f64::INFINITY, f64::min);
        let z_max = p.iter().map(|v| v[1]).fold(f64::NEG_INFINITY, f64::max);
        if z_max <= z_cut + tol_z {
            add_source(&mut source, *tri, p, p, profile);
        } else if z_min < z_cut - tol_z {
            clipped_elements += 1;
            let poly = clip_below(p, z_cut);
            for k in 1..poly.len().saturating_sub(1) {
                add_source(
                    &mut source,
                    *tri,
                    p,
                    [poly[0], poly[k], poly[k + 1]],
                    profile,
                );
            }
        }
    }

    let disc = geometry.disc_radius;
    let disc_scale = 2.0 / (disc * disc);
    for edge in &mesh.boundary_edges {
        if !edge.tag.is_face() {
            continue;
        }
        let [va, vb] = edge.vertices;
        let (pa, pb) = (mesh.vertices[va], mesh.vertices[vb]);
        let len = (pb[0] - pa[0]).hypot(pb[1] - pa[1]);
        for s in GAUSS2 {
            let r = pa[0] + s * (pb[0] - pa[0]);
            let phi = [1.0 - s, s];
            let w = 0.5 * len * r;
            for (a, &ia) in [va, vb].iter().enumerate() {
                face_load[ia] += w * phi[a];
                for (b, &ib) in [va, vb].iter().enumerate() {
                    face_mass.add(ia, ib, w * phi[a] * phi[b]);
                }
            }
        }

        if edge.tag == BoundaryTag::Top {
            // parameter interval of the edge where r <= L
            let (ra, rb) = (pa[0], pb[0]);
            let (s0, s1) = if (rb - ra).abs() < f64::MIN_POSITIVE {
                if ra <= disc {
                    (0.0, 1.0)
                } else {
                    (0.0, 0.0)
                }
            } else {
                let s_cut = ((disc - ra) / (rb - ra)).clamp(0.0, 1.0);
                if rb > ra {
                    (0.0, s_cut)
                } else {
                    (s_cut, 1.0)
                }
            };
            if s1 > s0 {
                if s1 - s0 < 1.0 - 1e-12 {
                    clipped_elements += 1;
                }
                let sub_len = (s1 - s0) * (rb - ra).abs();
                for g in GAUSS2 {
                    let s = s0 + g * (s1 - s0);
                    let r = ra + s * (rb - ra);
                    let w = 0.5 * sub_len * r * disc_scale;
                    observation[va] += w * (1.0 - s);
                    observation[vb] += w * s;
                }
            }
        }
    }

    if clipped_elements > 0 {
        log::warn!(
            "{clipped_elements} elements straddle the source depth or disc radius and were clipped"
        );
    }

    Ok(FemOperators {
        mass,
        stiffness,
        face_mass,
        face_load,
        source,
        observation,
        n_h: n,
    })
}
