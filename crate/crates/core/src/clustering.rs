//! Constrained two-way image segmentation by a relaxed normalized cut.
//!
//! Pixels are graph nodes with weights
//! `w_ij = exp(−(F_i − F_j)²/δ_F)` for `‖X_i − X_j‖∞ < r`. With degrees `D`,
//! the relaxation minimizes `xᵀ(D − W)x` subject to `xᵀDx = 1`,
//! `(Dx)ᵀ1 = 0`, `x_i = ĉ₊` on foreground seeds and `x_j = ĉ₋` on background
//! seeds. Substituting `v = D^{1/2}x` gives a constrained Rayleigh quotient
//! problem with `A = I − D^{-1/2}WD^{-1/2}`, `C = D^{-1/2}N` and the seed
//! values as `b`, where the columns of `N` are `e_i`, `e_j` and `D1`.

use std::sync::Arc;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::driver::{solve, SolveOptions};
use crate::error::{Error, Result};
use crate::io::labels::{Label, Side};
use crate::operator::{CsrMatrix, SymOperator};
use crate::problem::CrqProblem;

/// Affinity parameters: `δ` as a fraction of the squared intensity range,
/// and the neighbourhood radius `r` in pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GraphParams {
    pub delta: f64,
    pub r: usize,
}

impl Default for GraphParams {
    fn default() -> Self {
        Self { delta: 0.1, r: 5 }
    }
}

/// Pixel affinity graph.
#[derive(Debug, Clone)]
pub struct ImageGraph {
    pub width: usize,
    pub height: usize,
    pub w: CsrMatrix,
    pub degrees: Vec<f64>,
    pub params: GraphParams,
}

impl ImageGraph {
    pub fn len(&self) -> usize {
        self.width * self.height
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn volume(&self, nodes: impl IntoIterator<Item = usize>) -> f64 {
        nodes.into_iter().map(|i| self.degrees[i]).sum()
    }

    /// `cut/vol(A) + cut/vol(B)` for the partition `A = {i : in_a[i]}`.
    pub fn ncut(&self, in_a: &[bool]) -> f64 {
        let n = self.len();
        let cut: f64 = (0..n)
            .filter(|&i| in_a[i])
            .map(|i| self.w.row(i).filter(|&(j, _)| !in_a[j]).map(|(_, v)| v).sum::<f64>())
            .sum();
        let vol_a = self.volume((0..n).filter(|&i| in_a[i]));
        let vol_b = self.volume((0..n).filter(|&i| !in_a[i]));
        if vol_a == 0.0 || vol_b == 0.0 {
            return f64::INFINITY;
        }
        cut / vol_a + cut / vol_b
    }
}

/// Builds the affinity graph of a row-major grayscale raster.
pub fn build_graph(width: usize, height: usize, intensity: &[f64], params: GraphParams) -> Result<ImageGraph> {
    if intensity.len() != width * height {
        return Err(Error::Dimension(format!(
            "{width}×{height} image needs {} samples, got {}",
            width * height,
            intensity.len()
        )));
    }
    if params.r < 1 {
        return Err(Error::InvalidArgument("radius must be at least 1".into()));
    }
    if !(params.delta > 0.0 && params.delta < 1.0) {
        return Err(Error::InvalidArgument(format!("delta must lie in (0, 1), got {}", params.delta)));
    }
    let (lo, hi) = intensity
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let delta_f = params.delta * (hi - lo) * (hi - lo);
    let reach = params.r as isize - 1;
    let rows: Vec<Vec<(usize, f64)>> = (0..width * height)
        .into_par_iter()
        .map(|p| {
            let (py, px) = ((p / width) as isize, (p % width) as isize);
            let mut row = Vec::new();
            for y in (py - reach).max(0)..=(py + reach).min(height as isize - 1) {
                for x in (px - reach).max(0)..=(px + reach).min(width as isize - 1) {
                    let q = y as usize * width + x as usize;
                    if q == p {
                        continue;
                    }
                    let d = intensity[p] - intensity[q];
                    // A constant image has δ_F = 0 and all weights 1.
                    let w = if delta_f > 0.0 { (-d * d / delta_f).exp() } else { 1.0 };
                    if w > 0.0 {
                        row.push((q, w));
                    }
                }
            }
            row
        })
        .collect();
    let w = CsrMatrix::from_sorted_rows(rows);
    let degrees = w.row_sums();
    if let Some(i) = degrees.iter().position(|&d| d <= 0.0) {
        return Err(Error::IsolatedPixel(i));
    }
    Ok(ImageGraph {
        width,
        height,
        w,
        degrees,
        params,
    })
}

/// Seed pixels by side, as flat indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelSet {
    pub foreground: Vec<usize>,
    pub background: Vec<usize>,
}

impl LabelSet {
    /// Converts `(row, col)` labels, dropping duplicates. A pixel on both
    /// sides is an error.
    pub fn from_labels(labels: &[Label], width: usize, height: usize) -> Result<Self> {
        let mut fg = Vec::new();
        let mut bg = Vec::new();
        for l in labels {
            if l.row >= height || l.col >= width {
                return Err(Error::InvalidArgument(format!(
                    "label at ({}, {}) lies outside the {width}×{height} image",
                    l.row, l.col
                )));
            }
            let p = l.row * width + l.col;
            match l.side {
                Side::Foreground => fg.push(p),
                Side::Background => bg.push(p),
            }
        }
        fg.sort_unstable();
        fg.dedup();
        bg.sort_unstable();
        bg.dedup();
        if let Some(p) = fg.iter().find(|p| bg.binary_search(p).is_ok()) {
            return Err(Error::InvalidArgument(format!("pixel {p} is labeled on both sides")));
        }
        let set = Self {
            foreground: fg,
            background: bg,
        };
        set.check_nonempty()?;
        Ok(set)
    }

    fn check_nonempty(&self) -> Result<()> {
        if self.foreground.is_empty() {
            return Err(Error::EmptySide("foreground"));
        }
        if self.background.is_empty() {
            return Err(Error::EmptySide("background"));
        }
        Ok(())
    }
}

/// Linear constraints `Nᵀx = b` on the relaxed indicator `x`.
#[derive(Debug, Clone)]
pub struct Constraints {
    /// Columns `e_i` (foreground), `e_j` (background), then `D1`.
    pub n: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c_plus: f64,
    pub c_minus: f64,
}

pub fn encode_constraints(graph: &ImageGraph, labels: &LabelSet) -> Result<Constraints> {
    labels.check_nonempty()?;
    let vol_i = graph.volume(labels.foreground.iter().copied());
    let vol_j = graph.volume(labels.background.iter().copied());
    let vol_v = graph.volume(0..graph.len());
    let c_plus = (vol_j / (vol_i * vol_v)).sqrt();
    let c_minus = -(vol_i / (vol_j * vol_v)).sqrt();
    let seeds: Vec<(usize, f64)> = labels
        .foreground
        .iter()
        .map(|&i| (i, c_plus))
        .chain(labels.background.iter().map(|&j| (j, c_minus)))
        .collect();
    let m = seeds.len() + 1;
    let mut n = DMatrix::zeros(graph.len(), m);
    let mut b = DVector::zeros(m);
    for (col, &(i, value)) in seeds.iter().enumerate() {
        n[(i, col)] = 1.0;
        b[col] = value;
    }
    n.column_mut(m - 1).copy_from_slice(&graph.degrees);
    Ok(Constraints { n, b, c_plus, c_minus })
}

/// `I − D^{-1/2} W D^{-1/2}`.
#[derive(Debug, Clone)]
pub struct NormalizedLaplacian {
    w: CsrMatrix,
    inv_sqrt_d: Vec<f64>,
}

impl NormalizedLaplacian {
    pub fn new(graph: &ImageGraph) -> Self {
        Self {
            w: graph.w.clone(),
            inv_sqrt_d: graph.degrees.iter().map(|d| 1.0 / d.sqrt()).collect(),
        }
    }
}

impl SymOperator for NormalizedLaplacian {
    fn dim(&self) -> usize {
        self.w.dim()
    }

    fn apply(&self, x: &[f64], y: &mut [f64]) {
        let s = &self.inv_sqrt_d;
        let sx: Vec<f64> = x.iter().zip(s).map(|(a, b)| a * b).collect();
        self.w.apply(&sx, y);
        for i in 0..y.len() {
            y[i] = x[i] - s[i] * y[i];
        }
    }
}

/// The constrained Rayleigh quotient problem in `v = D^{1/2}x`.
pub fn to_crqopt(graph: &ImageGraph, constraints: &Constraints) -> Result<CrqProblem> {
    let mut c = constraints.n.clone();
    for (i, d) in graph.degrees.iter().enumerate() {
        c.row_mut(i).scale_mut(1.0 / d.sqrt());
    }
    CrqProblem::new(Arc::new(NormalizedLaplacian::new(graph)), c, constraints.b.clone())
}

#[derive(Debug, Clone)]
pub struct SegmentStats {
    pub lanczos_steps: usize,
    pub runtime_secs: f64,
    pub ncut: f64,
    pub mu: f64,
    pub objective: f64,
    pub c_plus: f64,
    pub c_minus: f64,
    pub converged: bool,
    pub foreground_pixels: usize,
}

impl SegmentStats {
    /// `key=value` lines.
    pub fn to_kv(&self) -> String {
        format!(
            "lanczos_steps={}\nruntime_secs={:.6}\nncut={:.12e}\nmu={:.12e}\nobjective={:.12e}\n\
             c_plus={:.12e}\nc_minus={:.12e}\nconverged={}\nforeground_pixels={}\n",
            self.lanczos_steps,
            self.runtime_secs,
            self.ncut,
            self.mu,
            self.objective,
            self.c_plus,
            self.c_minus,
            self.converged,
            self.foreground_pixels
        )
    }
}

#[derive(Debug, Clone)]
pub struct Segmentation {
    /// `true` for foreground, row-major.
    pub mask: Vec<bool>,
    /// `x` rescaled to `[0, 1]`.
    pub heat: Vec<f64>,
    /// The relaxed indicator `x = D^{-1/2}v`.
    pub x: Vec<f64>,
    pub stats: SegmentStats,
}

/// Full pipeline. A run that stops at `maxit` still yields a segmentation
/// from the last iterate, with `stats.converged = false`.
pub fn segment(
    width: usize,
    height: usize,
    intensity: &[f64],
    labels: &[Label],
    params: GraphParams,
    opts: &SolveOptions,
) -> Result<Segmentation> {
    let start = Instant::now();
    let graph = build_graph(width, height, intensity, params)?;
    let set = LabelSet::from_labels(labels, width, height)?;
    let cons = encode_constraints(&graph, &set)?;
    let problem = to_crqopt(&graph, &cons)?;
    let sol = match solve(&problem, opts) {
        Ok(s) => s,
        Err(Error::NotConverged(s)) => *s,
        Err(e) => return Err(e),
    };
    let x: Vec<f64> = sol
        .v
        .iter()
        .zip(&graph.degrees)
        .map(|(v, d)| v / d.sqrt())
        .collect();
    let mask: Vec<bool> = x.iter().map(|&v| v > 0.0).collect();
    let (lo, hi) = x
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &v| (l.min(v), h.max(v)));
    let span = hi - lo;
    let heat = x
        .iter()
        .map(|&v| if span > 0.0 { (v - lo) / span } else { 0.5 })
        .collect();
    let stats = SegmentStats {
        lanczos_steps: sol.k,
        runtime_secs: start.elapsed().as_secs_f64(),
        ncut: graph.ncut(&mask),
        mu: sol.mu,
        objective: sol.objective,
        c_plus: cons.c_plus,
        c_minus: cons.c_minus,
        converged: sol.converged,
        foreground_pixels: mask.iter().filter(|&&m| m).count(),
    };
    Ok(Segmentation { mask, heat, x, stats })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::seeded_normal_vector;

    fn two_block(w: usize, h: usize) -> Vec<f64> {
        (0..w * h).map(|p| if p % w < w / 2 { 0.0 } else { 1.0 }).collect()
    }

    fn weight(g: &ImageGraph, i: usize, j: usize) -> f64 {
        g.w.row(i).find(|&(c, _)| c == j).map_or(0.0, |(_, v)| v)
    }

    #[test]
    fn constant_image_has_unit_weights() {
        let g = build_graph(5, 4, &[0.3; 20], GraphParams { delta: 0.1, r: 2 }).unwrap();
        assert!(g.w.row(7).all(|(_, v)| v == 1.0));
        // Corner pixel with r = 2 sees its three neighbours.
        assert_eq!(g.degrees[0], 3.0);
    }

    #[test]
    fn radius_is_strict() {
        let g = build_graph(6, 1, &[0.0, 0.1, 0.2, 0.3, 0.4, 0.5], GraphParams { delta: 0.1, r: 2 }).unwrap();
        assert!(weight(&g, 0, 1) > 0.0);
        assert_eq!(weight(&g, 0, 2), 0.0);
    }

    #[test]
    fn two_block_weights() {
        let g = build_graph(8, 8, &two_block(8, 8), GraphParams { delta: 0.1, r: 2 }).unwrap();
        assert!((weight(&g, 3, 4) - (-10.0f64).exp()).abs() < 1e-15);
        assert_eq!(weight(&g, 2, 3), 1.0);
    }

    #[test]
    fn balanced_seeds_give_symmetric_values() {
        let g = build_graph(4, 4, &[0.5; 16], GraphParams { delta: 0.1, r: 2 }).unwrap();
        // Pixels 5 and 10 are interior with equal degree.
        let set = LabelSet {
            foreground: vec![5],
            background: vec![10],
        };
        let c = encode_constraints(&g, &set).unwrap();
        let vol = g.volume(0..16);
        assert!((c.c_plus - 1.0 / vol.sqrt()).abs() < 1e-15);
        assert!((c.c_minus + 1.0 / vol.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn laplacian_null_vector_and_semidefiniteness() {
        let img: Vec<f64> = seeded_normal_vector(100, 4).iter().map(|v| v.abs()).collect();
        let g = build_graph(10, 10, &img, GraphParams { delta: 0.1, r: 3 }).unwrap();
        let a = NormalizedLaplacian::new(&g);
        let s = DVector::from_iterator(100, g.degrees.iter().map(|d| d.sqrt()));
        assert!(a.apply_vec(&s).norm() <= 1e-12 * s.norm());
        for seed in 0..100 {
            let x = seeded_normal_vector(100, 100 + seed);
            assert!(x.dot(&a.apply_vec(&x)) / x.norm_squared() >= -1e-10);
        }
    }

    #[test]
    fn constraint_matrix_has_full_rank() {
        let g = build_graph(8, 8, &two_block(8, 8), GraphParams { delta: 0.1, r: 2 }).unwrap();
        let set = LabelSet {
            foreground: vec![0, 9],
            background: vec![7],
        };
        let c = encode_constraints(&g, &set).unwrap();
        assert_eq!(c.n.ncols(), 4);
        assert_eq!(crate::problem::numerical_rank(&c.n), 4);
    }

    #[test]
    fn empty_side_is_rejected() {
        let labels = [Label {
            row: 0,
            col: 0,
            side: Side::Foreground,
        }];
        assert!(matches!(LabelSet::from_labels(&labels, 2, 2), Err(Error::EmptySide("background"))));
    }

    #[test]
    fn conflicting_labels_are_rejected() {
        let labels = [
            Label { row: 0, col: 0, side: Side::Foreground },
            Label { row: 0, col: 0, side: Side::Background },
        ];
        assert!(LabelSet::from_labels(&labels, 2, 2).is_err());
    }

    #[test]
    fn ncut_of_block_split() {
        let g = build_graph(4, 1, &[0.0, 0.0, 1.0, 1.0], GraphParams { delta: 0.5, r: 2 }).unwrap();
        let w = (-2.0f64).exp();
        let cut = w;
        let vol_a = 1.0 + 1.0 + w;
        let expect = 2.0 * cut / vol_a;
        assert!((g.ncut(&[true, true, false, false]) - expect).abs() < 1e-15);
    }
}
