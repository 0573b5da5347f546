//! Regular-set geometry of magnetization vectors.
//!
//! A magnetization σ ∈ [−1,1]^N is regular when every nonnegative spinor
//! weight distribution realizing it spans all of ℝ^N; the complement is cut
//! out of the cube by a finite hyperplane arrangement. The cutting planes
//! used here are the cube facets |σ_n| = 1 and the sign-symmetric planes
//! through the origin spanned by cube vertices (for N ≤ 3 exactly the pair
//! diagonals σ_i = ±σ_j), which reproduces the component counts 1, 4 and 24
//! for N = 1, 2, 3. Arrangement data is exact ±1 arithmetic, so membership
//! tolerances can sit at 1e−12.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::par::parallel_map;

/// Default distance tolerance for hyperplane membership.
pub const MEMBERSHIP_TOL: f64 = 1e-12;

/// Largest N the subset enumeration accepts (2^N vertices, N-subsets).
pub const MAX_SPINS: usize = 4;

/// Affine hyperplane {σ : normal·σ = offset} with unit normal and canonical
/// sign (first nonzero normal component positive).
#[derive(Debug, Clone, PartialEq)]
pub struct Hyperplane {
    pub normal: Vec<f64>,
    pub offset: f64,
}

impl Hyperplane {
    pub fn signed_distance(&self, sigma: &[f64]) -> f64 {
        let dot: f64 = self.normal.iter().zip(sigma).map(|(n, s)| n * s).sum();
        dot - self.offset
    }

    /// True for planes through the origin (the diagonal family).
    pub fn is_central(&self) -> bool {
        self.offset == 0.0
    }

    /// True for cube facets σ_n = ±1.
    pub fn is_facet(&self) -> bool {
        self.offset.abs() == 1.0 && self.normal.iter().filter(|&&c| c != 0.0).count() == 1
    }

    fn canonical(mut normal: Vec<f64>, mut offset: f64) -> Self {
        let norm: f64 = normal.iter().map(|c| c * c).sum::<f64>().sqrt();
        for c in &mut normal {
            *c /= norm;
        }
        offset /= norm;
        let lead = normal.iter().find(|&&c| c.abs() > 1e-12).copied().unwrap_or(1.0);
        if lead < 0.0 {
            for c in &mut normal {
                *c = -*c;
            }
            offset = -offset;
        }
        // normalize −0.0 so canonical forms compare and print identically
        for c in &mut normal {
            *c = snap(*c);
        }
        Hyperplane {
            normal,
            offset: snap(offset),
        }
    }
}

fn snap(x: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x
    }
}

/// All 2^N spin configurations as cube vertices in {−1,1}^N; vertex `s`
/// lists the σ_z eigenvalues of each spin slot (bit 0 of the slot ⇔ +1).
pub fn cube_vertices(n: usize) -> Vec<Vec<f64>> {
    let count = 1usize << n;
    (0..count)
        .map(|s| {
            (0..n)
                .map(|slot| if s & (1 << (n - 1 - slot)) == 0 { 1.0 } else { -1.0 })
                .collect()
        })
        .collect()
}

/// Hyperplanes bounding the regular set: cube facets plus the sign-symmetric
/// vertex hulls through the origin.
///
/// Candidate hulls come from brute-force enumeration of N-vertex subsets
/// with affine dimension N−1; hulls that miss the origin support spinor
/// weights whose linear span is still full, so they do not bound regularity
/// and are dropped. Deduplicated to canonical form, facets listed first.
pub fn irregular_hyperplanes(n: usize) -> Result<Vec<Hyperplane>> {
    if n == 0 || n > MAX_SPINS {
        return Err(Error::Sizing {
            dim: n,
            cap: MAX_SPINS,
        });
    }
    let mut planes: Vec<Hyperplane> = Vec::new();
    // facets ±σ_k = 1
    for k in 0..n {
        for sign in [1.0, -1.0] {
            let mut normal = vec![0.0; n];
            normal[k] = sign;
            planes.push(Hyperplane::canonical(normal, 1.0));
        }
    }
    if n == 1 {
        return Ok(planes); // the endpoints are the whole arrangement
    }

    let vertices = cube_vertices(n);
    let mut subset = vec![0usize; n];
    enumerate_subsets(&vertices, &mut subset, 0, 0, &mut |pts| {
        if let Some(plane) = affine_hull_hyperplane(pts) {
            if plane.is_central() && !planes.iter().any(|p| same_plane(p, &plane)) {
                planes.push(plane);
            }
        }
    });
    Ok(planes)
}

fn enumerate_subsets(
    vertices: &[Vec<f64>],
    subset: &mut [usize],
    depth: usize,
    start: usize,
    visit: &mut impl FnMut(&[&[f64]]),
) {
    let n = subset.len();
    if depth == n {
        let pts: Vec<&[f64]> = subset.iter().map(|&i| vertices[i].as_slice()).collect();
        visit(&pts);
        return;
    }
    for i in start..vertices.len() {
        subset[depth] = i;
        enumerate_subsets(vertices, subset, depth + 1, i + 1, visit);
    }
}

/// Hyperplane through `pts` when they are affinely independent (dim N−1).
///
/// The normal is the generalized cross product of the difference vectors:
/// signed maximal minors of the (N−1)×N difference matrix. Differences of
/// cube vertices are integers, so this is exact.
fn affine_hull_hyperplane(pts: &[&[f64]]) -> Option<Hyperplane> {
    let n = pts[0].len();
    debug_assert_eq!(pts.len(), n);
    let mut diffs = DMatrix::zeros(n - 1, n);
    for r in 1..n {
        for c in 0..n {
            diffs[(r - 1, c)] = pts[r][c] - pts[0][c];
        }
    }
    let mut normal = vec![0.0; n];
    let mut minor = DMatrix::zeros(n - 1, n - 1);
    #[allow(clippy::needless_range_loop)] // `drop` names the removed column
    for drop in 0..n {
        let mut cc = 0;
        for c in 0..n {
            if c == drop {
                continue;
            }
            for r in 0..n - 1 {
                minor[(r, cc)] = diffs[(r, c)];
            }
            cc += 1;
        }
        let det = if n == 2 { minor[(0, 0)] } else { minor.clone().determinant() };
        normal[drop] = if drop % 2 == 0 { det } else { -det };
    }
    if normal.iter().all(|c| c.abs() < 1e-9) {
        return None; // affine dimension below N−1
    }
    let offset: f64 = normal.iter().zip(pts[0]).map(|(a, b)| a * b).sum();
    Some(Hyperplane::canonical(normal, offset))
}

fn same_plane(a: &Hyperplane, b: &Hyperplane) -> bool {
    (a.offset - b.offset).abs() <= 1e-9
        && a.normal
            .iter()
            .zip(&b.normal)
            .all(|(x, y)| (x - y).abs() <= 1e-9)
}

/// True iff σ lies strictly inside the cube and farther than `tol` from
/// every irregular hyperplane.
pub fn is_regular(sigma: &[f64], tol: f64) -> Result<bool> {
    let n = sigma.len();
    for (i, &s) in sigma.iter().enumerate() {
        if s.abs() > 1.0 + tol {
            return Err(Error::Domain(format!(
                "sigma[{i}] = {s} outside [-1,1] beyond tolerance"
            )));
        }
    }
    let planes = irregular_hyperplanes(n)?;
    Ok(planes
        .iter()
        .all(|p| p.signed_distance(sigma).abs() > tol))
}

/// [`is_regular`] against a precomputed arrangement (hot loops).
pub fn is_regular_with(planes: &[Hyperplane], sigma: &[f64], tol: f64) -> bool {
    planes.iter().all(|p| p.signed_distance(sigma).abs() > tol)
}

/// Sign vector of σ with respect to the arrangement; `None` when σ is within
/// `tol` of some plane.
pub fn sign_vector(planes: &[Hyperplane], sigma: &[f64], tol: f64) -> Option<Vec<i8>> {
    let mut signs = Vec::with_capacity(planes.len());
    for p in planes {
        let d = p.signed_distance(sigma);
        if d.abs() <= tol {
            return None;
        }
        signs.push(if d > 0.0 { 1 } else { -1 });
    }
    Some(signs)
}

/// Counts connected components of the regular set by Monte Carlo point
/// location: uniform samples in the open cube, classified by arrangement
/// sign vector. Components are arrangement cells, so distinct accepted sign
/// vectors count them exactly once the sampler has seen every cell.
pub fn count_components(n: usize, samples: usize, seed: u64) -> Result<usize> {
    let planes = irregular_hyperplanes(n)?;
    let chunk = 4096usize;
    let chunks: Vec<u64> = (0..samples.div_ceil(chunk) as u64).collect();
    let results: Vec<(Vec<Vec<i8>>, usize)> = parallel_map(&chunks, |&c| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ (0x9e3779b97f4a7c15u64.wrapping_mul(c + 1)));
        let take = chunk.min(samples - (c as usize) * chunk);
        let mut seen: Vec<Vec<i8>> = Vec::new();
        let mut accepted = 0usize;
        for _ in 0..take {
            let sigma: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
            if let Some(sv) = sign_vector(&planes, &sigma, 1e-9) {
                accepted += 1;
                if !seen.contains(&sv) {
                    seen.push(sv);
                }
            }
        }
        (seen, accepted)
    });
    let mut seen: Vec<Vec<i8>> = Vec::new();
    let mut accepted = 0usize;
    for (chunk_seen, chunk_accepted) in results {
        accepted += chunk_accepted;
        for sv in chunk_seen {
            if !seen.contains(&sv) {
                seen.push(sv);
            }
        }
    }
    if accepted < samples / 2 {
        return Err(Error::Statistical(format!(
            "only {accepted} of {samples} samples accepted"
        )));
    }
    Ok(seen.len())
}

/// Rejection-samples a regular magnetization, reproducible for a fixed seed.
/// The irregular set has measure zero, so acceptance is immediate in practice.
pub fn sample_regular(n: usize, seed: u64) -> Result<DVector<f64>> {
    let planes = irregular_hyperplanes(n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let sigma: Vec<f64> = (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect();
        if is_regular_with(&planes, &sigma, MEMBERSHIP_TOL) {
            return Ok(DVector::from_vec(sigma));
        }
    }
}

/// Closed form of the N = 2 regular set: open square minus both diagonals.
pub fn regular_closed_form_n2(sigma: &[f64], tol: f64) -> bool {
    debug_assert_eq!(sigma.len(), 2);
    let (a, b) = (sigma[0], sigma[1]);
    a.abs() < 1.0 - tol && b.abs() < 1.0 - tol && (a - b).abs() > tol && (a + b).abs() > tol
}
