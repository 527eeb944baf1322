//! Chern number of the normal bundle `Q = v^⊥` over a closed surface.
//!
//! Each fiber is represented by the unit vector `ψ = (u − i ê₁×u)/√2`, which
//! spans the `+i` eigenline of the rotation `u ↦ ê₁×u` in `Q ⊗ ℂ`. Transport
//! between neighbouring fibers is orthogonal projection, so the holonomy of a
//! triangle is the phase of the product of its three link overlaps. The total
//! phase over the surface, divided by `2π`, is the Chern number.

use super::mesh::TriangulatedSurface;
use super::NormalPlane;
use crate::calc3::{Vec3, VectorField};
use crate::error::{Error, Result};
use nalgebra::Complex;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_1_SQRT_2, PI, TAU};

type Fiber = [Complex<f64>; 3];

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChernResult {
    pub number: i64,
    /// Total holonomy over `2π`, before rounding.
    pub real: f64,
    pub defect: f64,
    /// Smallest `|⟨ψ_a, ψ_b⟩|` over mesh edges.
    pub min_overlap: f64,
    /// Largest per-triangle holonomy angle.
    pub max_flux: f64,
    pub triangles: usize,
}

fn fiber(e1: &Vec3, u: &Vec3) -> Fiber {
    let w = e1.cross(u);
    [0, 1, 2].map(|k| Complex::new(u[k], -w[k]) * FRAC_1_SQRT_2)
}

fn overlap(a: &Fiber, b: &Fiber) -> Complex<f64> {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

/// Chern number of `Q` restricted to `surface`, with the fiber gauge
/// chosen per vertex from the coordinate axis least aligned with `v`.
pub fn chern_number(v: &dyn VectorField, surface: &TriangulatedSurface) -> Result<ChernResult> {
    chern_number_with_gauge(v, surface, None)
}

/// As [`chern_number`], with the fiber at each vertex built from
/// `gauge(x)` projected into `Q`. The result does not depend on the gauge.
pub fn chern_number_with_gauge(
    v: &dyn VectorField,
    surface: &TriangulatedSurface,
    gauge: Option<&(dyn Fn(&Vec3) -> Vec3 + Sync)>,
) -> Result<ChernResult> {
    surface.validate()?;
    let fibers = surface
        .vertices
        .par_iter()
        .map(|x| {
            let q = NormalPlane::at(&v.value(x)?, x)?;
            let u = match gauge {
                None => q.u,
                Some(g) => {
                    let p = q.project(&g(x));
                    if p.norm() < 1e-8 {
                        return Err(Error::InvalidArgument(format!("gauge vector leaves the normal plane at {x:?}")));
                    }
                    p.normalize()
                }
            };
            Ok(fiber(&q.e1, &u))
        })
        .collect::<Result<Vec<_>>>()?;
    let per_triangle = surface
        .triangles
        .par_iter()
        .enumerate()
        .map(|(t, &[a, b, c])| {
            let links = [overlap(&fibers[a], &fibers[b]), overlap(&fibers[b], &fibers[c]), overlap(&fibers[c], &fibers[a])];
            let min = links.iter().map(|l| l.norm()).fold(f64::INFINITY, f64::min);
            if min <= 0.5 {
                return Err(Error::RefineMesh { triangle: t, detail: format!("fiber overlap {min:.3} ≤ 0.5") });
            }
            let flux = (links[0] * links[1] * links[2]).arg();
            if flux.abs() >= PI / 2.0 {
                return Err(Error::RefineMesh { triangle: t, detail: format!("holonomy angle {flux:.3} ≥ π/2") });
            }
            Ok((flux, min))
        })
        .collect::<Result<Vec<_>>>()?;
    let fluxes: Vec<f64> = per_triangle.iter().map(|p| p.0).collect();
    // orientation: the outward radial field on the sphere gives +χ(S²)
    let real = -super::pairwise_sum(&fluxes) / TAU;
    let number = real.round() as i64;
    Ok(ChernResult {
        number,
        real,
        defect: (real - number as f64).abs(),
        min_overlap: per_triangle.iter().map(|p| p.1).fold(f64::INFINITY, f64::min),
        max_flux: fluxes.iter().fold(0.0, |a, f| a.max(f.abs())),
        triangles: surface.triangles.len(),
    })
}
