//! Radial meshes, per-annulus fields and the weighted quadrature behind every
//! volume integral.
//!
//! A radial function `u(|x|)` on a ball of radius `R` in three dimensions is
//! represented by continuous piecewise-linear nodal values in `t = |x|`.
//! Every integral over a region of space is evaluated as `4π ∫ f(t) t² dt`
//! with a five-point Gauss-Legendre rule per cell, so polynomial integrands
//! of degree up to 9 (including the `t²` weight) are integrated exactly.

use std::f64::consts::PI;
use std::fmt;
use std::fmt::Write as _;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const FOUR_PI: f64 = 4.0 * PI;

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
const GAUSS_NODES: [f64; 5] = [
    -0.906_179_845_938_664,
    -0.538_469_310_105_683_1,
    0.0,
    0.538_469_310_105_683_1,
    0.906_179_845_938_664,
];
const GAUSS_WEIGHTS: [f64; 5] = [
    0.236_926_885_056_189_08,
    0.478_628_670_499_366_47,
    0.568_888_888_888_888_9,
    0.478_628_670_499_366_47,
    0.236_926_885_056_189_08,
];

/// Highest polynomial degree (in `t`, weight included) integrated exactly per cell.
pub const QUADRATURE_DEGREE: usize = 9;

type RadialFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Radial potential `V(r)`.
#[derive(Clone)]
pub enum Potential {
    Constant(f64),
    /// Piecewise-linear interpolation of `(r, V)` samples; constant extension
    /// outside the sampled range. The derivative is the slope of the segment.
    Table {
        r: Vec<f64>,
        v: Vec<f64>,
    },
    Custom {
        value: RadialFn,
        derivative: Option<RadialFn>,
    },
}

impl fmt::Debug for Potential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Potential::Constant(v) => write!(f, "Constant({v})"),
            Potential::Table { r, .. } => write!(f, "Table({} samples)", r.len()),
            Potential::Custom { derivative, .. } => {
                write!(f, "Custom(derivative: {})", derivative.is_some())
            }
        }
    }
}

impl Potential {
    pub fn table(r: Vec<f64>, v: Vec<f64>) -> Result<Self> {
        if r.len() < 2 || r.len() != v.len() {
            return Err(Error::InvalidParams(
                "potential table needs at least two (r, V) samples of equal length".into(),
            ));
        }
        if r.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParams(
                "potential table radii must be strictly increasing".into(),
            ));
        }
        Ok(Potential::Table { r, v })
    }

    pub fn value(&self, t: f64) -> f64 {
        match self {
            Potential::Constant(v) => *v,
            Potential::Table { r, v } => {
                let seg = table_segment(r, t);
                match seg {
                    None if t < r[0] => v[0],
                    None => v[v.len() - 1],
                    Some(j) => {
                        let s = (t - r[j]) / (r[j + 1] - r[j]);
                        v[j] + s * (v[j + 1] - v[j])
                    }
                }
            }
            Potential::Custom { value, .. } => value(t),
        }
    }

    pub fn derivative(&self, t: f64) -> Option<f64> {
        match self {
            Potential::Constant(_) => Some(0.0),
            Potential::Table { r, v } => Some(match table_segment(r, t) {
                None => 0.0,
                Some(j) => (v[j + 1] - v[j]) / (r[j + 1] - r[j]),
            }),
            Potential::Custom { derivative, .. } => derivative.as_ref().map(|d| d(t)),
        }
    }

    pub fn has_derivative(&self) -> bool {
        !matches!(
            self,
            Potential::Custom {
                derivative: None,
                ..
            }
        )
    }

    /// Infimum of `V` over `[0, radius]`.
    pub fn lower_bound(&self, radius: f64) -> f64 {
        match self {
            Potential::Constant(v) => *v,
            Potential::Table { r, .. } => {
                let mut lo = self.value(0.0).min(self.value(radius));
                for &ri in r.iter().filter(|&&ri| ri > 0.0 && ri < radius) {
                    lo = lo.min(self.value(ri));
                }
                lo
            }
            Potential::Custom { value, .. } => (0..=2000)
                .map(|j| value(radius * j as f64 / 2000.0))
                .fold(f64::INFINITY, f64::min),
        }
    }
}

fn table_segment(r: &[f64], t: f64) -> Option<usize> {
    if t < r[0] || t >= r[r.len() - 1] {
        return None;
    }
    let j = r.partition_point(|&x| x <= t);
    Some(j - 1)
}

/// Whether the domain is a genuine ball or a truncation of all of space.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DomainMode {
    Ball,
    R3Emulation,
}

impl fmt::Display for DomainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DomainMode::Ball => f.write_str("ball"),
            DomainMode::R3Emulation => f.write_str("r3-emulation"),
        }
    }
}

/// Physical parameters of `-(1 + b∫|∇u|²)Δu + V(|x|)u = |u|^{p-2}u`.
#[derive(Debug, Clone)]
pub struct ProblemParams {
    b: f64,
    p: f64,
    potential: Potential,
    radius: f64,
    k: usize,
    mode: DomainMode,
    v0: f64,
}

impl ProblemParams {
    pub fn new(
        b: f64,
        p: f64,
        potential: Potential,
        radius: f64,
        k: usize,
        mode: DomainMode,
    ) -> Result<Self> {
        let mut problems = Vec::new();
        if !(p > 2.0 && p < 4.0) {
            problems.push(format!("p must lie in (2,4), got {p}"));
        } else if mode == DomainMode::R3Emulation && !(p > 3.0) {
            problems.push(format!(
                "r3-emulation requires p in (3,4), got {p}; use mode = ball for 2 < p <= 3"
            ));
        }
        if !(b >= 0.0) || !b.is_finite() {
            problems.push(format!("b must be nonnegative, got {b}"));
        }
        if !(radius > 0.0) || !radius.is_finite() {
            problems.push(format!("domain radius must be positive, got {radius}"));
        }
        let v0 = if radius > 0.0 && radius.is_finite() {
            potential.lower_bound(radius)
        } else {
            f64::NAN
        };
        if !(v0 > 0.0) {
            problems.push(format!(
                "potential must be bounded below by V0 > 0, got V0 = {v0}"
            ));
        }
        if !problems.is_empty() {
            return Err(Error::InvalidParams(problems.join("; ")));
        }
        Ok(Self {
            b,
            p,
            potential,
            radius,
            k,
            mode,
            v0,
        })
    }

    /// Constant potential `V ≡ 1` on a ball: the default desk-scale instance.
    pub fn unit_ball(b: f64, p: f64, radius: f64, k: usize) -> Result<Self> {
        Self::new(b, p, Potential::Constant(1.0), radius, k, DomainMode::Ball)
    }

    pub fn b(&self) -> f64 {
        self.b
    }
    pub fn p(&self) -> f64 {
        self.p
    }
    pub fn potential(&self) -> &Potential {
        &self.potential
    }
    pub fn radius(&self) -> f64 {
        self.radius
    }
    pub fn k(&self) -> usize {
        self.k
    }
    pub fn mode(&self) -> DomainMode {
        self.mode
    }
    pub fn v0(&self) -> f64 {
        self.v0
    }

    pub fn with_b(&self, b: f64) -> Result<Self> {
        Self::new(
            b,
            self.p,
            self.potential.clone(),
            self.radius,
            self.k,
            self.mode,
        )
    }

    pub fn with_k(&self, k: usize) -> Result<Self> {
        Self::new(
            self.b,
            self.p,
            self.potential.clone(),
            self.radius,
            k,
            self.mode,
        )
    }
}

/// Nodal radii `0 = r_0 < r_1 < ... < r_k < r_{k+1} = R`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadiiVector {
    interior: Vec<f64>,
    outer: f64,
}

impl RadiiVector {
    pub fn new(interior: Vec<f64>, outer: f64) -> Result<Self> {
        if !(outer > 0.0) || !outer.is_finite() {
            return Err(Error::InvalidParams(format!(
                "outer radius must be positive, got {outer}"
            )));
        }
        let mut prev = 0.0;
        for (j, &r) in interior.iter().enumerate() {
            if !(r > prev) || !r.is_finite() {
                return Err(Error::InvalidParams(format!(
                    "radii must be strictly increasing: r_{} = {r} after {prev}",
                    j + 1
                )));
            }
            prev = r;
        }
        if !(outer > prev) {
            return Err(Error::InvalidParams(format!(
                "last nodal radius {prev} must be below the outer radius {outer}"
            )));
        }
        Ok(Self { interior, outer })
    }

    /// Radii splitting the ball into `k + 1` shells of equal volume.
    pub fn equipartition(k: usize, outer: f64) -> Result<Self> {
        let interior = (1..=k)
            .map(|i| outer * (i as f64 / (k + 1) as f64).cbrt())
            .collect();
        Self::new(interior, outer)
    }

    pub fn k(&self) -> usize {
        self.interior.len()
    }
    pub fn interior(&self) -> &[f64] {
        &self.interior
    }
    pub fn outer(&self) -> f64 {
        self.outer
    }

    /// `[r_0, r_1, ..., r_{k+1}]`.
    pub fn edges(&self) -> Vec<f64> {
        let mut e = Vec::with_capacity(self.interior.len() + 2);
        e.push(0.0);
        e.extend_from_slice(&self.interior);
        e.push(self.outer);
        e
    }

    /// Widths `r_i - r_{i-1}` of all `k + 1` annuli.
    pub fn gaps(&self) -> Vec<f64> {
        self.edges().windows(2).map(|w| w[1] - w[0]).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
#[derive(Default)]
pub enum Grading {
    #[default]
    Uniform,
    /// Cell widths shrink by `ratio` per cell when approaching a junction.
    Geometric { ratio: f64 },
}

/// Node index range `[first, last]` of one annulus.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnnulusSpan {
    pub first: usize,
    pub last: usize,
}

impl AnnulusSpan {
    pub fn len(&self) -> usize {
        self.last - self.first + 1
    }
    pub fn is_empty(&self) -> bool {
        false
    }
}

/// A quadrature point with its volume weight `4π w h t²` and the two local
/// hat-function values of its cell.
#[derive(Debug, Clone, Copy)]
pub struct QuadPoint {
    pub cell: usize,
    pub t: f64,
    pub weight: f64,
    pub phi: [f64; 2],
}

#[derive(Debug, Clone)]
pub struct RadialMesh {
    nodes: Vec<f64>,
    annuli: Vec<AnnulusSpan>,
    radii: RadiiVector,
    quad: Vec<QuadPoint>,
}

impl RadialMesh {
    /// Builds the mesh for `radii` with `cells_per_annulus` cells in every
    /// annulus; junctions are always nodes.
    pub fn build(radii: &RadiiVector, cells_per_annulus: usize, grading: Grading) -> Result<Self> {
        if cells_per_annulus == 0 {
            return Err(Error::InvalidParams(
                "cells_per_annulus must be positive".into(),
            ));
        }
        if let Grading::Geometric { ratio } = grading {
            if !(ratio > 0.0) || !ratio.is_finite() {
                return Err(Error::InvalidParams(format!(
                    "grading ratio must be positive, got {ratio}"
                )));
            }
        }
        let edges = radii.edges();
        let floor = 1e-12 * radii.outer();
        let k = radii.k();
        let mut nodes = vec![0.0];
        let mut annuli = Vec::with_capacity(k + 1);
        for i in 0..=k {
            let (a, b) = (edges[i], edges[i + 1]);
            if b - a <= floor {
                return Err(Error::DegenerateAnnulus {
                    index: i + 1,
                    gap: b - a,
                });
            }
            let toward_left = i > 0;
            let toward_right = i < k;
            let widths = cell_widths(cells_per_annulus, grading, toward_left, toward_right, b - a);
            let first = nodes.len() - 1;
            let mut t = a;
            for (c, w) in widths.iter().enumerate() {
                t = if c + 1 == widths.len() { b } else { t + w };
                nodes.push(t);
            }
            annuli.push(AnnulusSpan {
                first,
                last: nodes.len() - 1,
            });
        }
        Ok(Self::assemble(nodes, annuli, radii.clone()))
    }

    /// Mesh from explicit node coordinates; every nodal radius must be a node.
    pub fn from_nodes(nodes: Vec<f64>, radii: &RadiiVector) -> Result<Self> {
        if nodes.len() < 2 || nodes[0] != 0.0 {
            return Err(Error::Structure(
                "mesh nodes must start at 0 and contain at least one cell".into(),
            ));
        }
        if nodes.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Structure(
                "mesh nodes must be strictly increasing".into(),
            ));
        }
        let edges = radii.edges();
        let tol = 1e-12 * radii.outer();
        let mut idx = Vec::with_capacity(edges.len());
        for &e in &edges {
            let j = nodes
                .iter()
                .position(|&x| (x - e).abs() <= tol)
                .ok_or_else(|| Error::Structure(format!("radius {e} is not a mesh node")))?;
            idx.push(j);
        }
        if idx[idx.len() - 1] != nodes.len() - 1 {
            return Err(Error::Structure(
                "last mesh node must be the outer radius".into(),
            ));
        }
        let mut nodes = nodes;
        for (&j, &e) in idx.iter().zip(&edges) {
            nodes[j] = e;
        }
        let annuli = idx
            .windows(2)
            .enumerate()
            .map(|(i, w)| {
                if w[1] <= w[0] {
                    Err(Error::DegenerateAnnulus {
                        index: i + 1,
                        gap: 0.0,
                    })
                } else {
                    Ok(AnnulusSpan {
                        first: w[0],
                        last: w[1],
                    })
                }
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self::assemble(nodes, annuli, radii.clone()))
    }

    fn assemble(nodes: Vec<f64>, annuli: Vec<AnnulusSpan>, radii: RadiiVector) -> Self {
        let mut quad = Vec::with_capacity(5 * (nodes.len() - 1));
        for (cell, w) in nodes.windows(2).enumerate() {
            let (a, b) = (w[0], w[1]);
            let h = b - a;
            for (&x, &wq) in GAUSS_NODES.iter().zip(&GAUSS_WEIGHTS) {
                let s = 0.5 * (x + 1.0);
                let t = a + s * h;
                quad.push(QuadPoint {
                    cell,
                    t,
                    weight: FOUR_PI * 0.5 * wq * h * t * t,
                    phi: [1.0 - s, s],
                });
            }
        }
        Self {
            nodes,
            annuli,
            radii,
            quad,
        }
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }
    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }
    pub fn cell_count(&self) -> usize {
        self.nodes.len() - 1
    }
    pub fn cell_width(&self, cell: usize) -> f64 {
        self.nodes[cell + 1] - self.nodes[cell]
    }
    pub fn radii(&self) -> &RadiiVector {
        &self.radii
    }
    pub fn annuli(&self) -> &[AnnulusSpan] {
        &self.annuli
    }
    pub fn span(&self, annulus: usize) -> AnnulusSpan {
        self.annuli[annulus]
    }
    pub fn quadrature(&self) -> &[QuadPoint] {
        &self.quad
    }

    /// Quadrature points of the cells in `[first, last]` node range.
    pub fn quadrature_in(&self, span: AnnulusSpan) -> &[QuadPoint] {
        &self.quad[5 * span.first..5 * span.last]
    }

    /// `4π Σ_q w_q f(t_q) t_q²`.
    pub fn integrate(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.quad.iter().map(|q| q.weight * f(q.t)).sum()
    }

    /// Integrates `g(u(t), t)` for the piecewise-linear field with global nodal values.
    pub fn integrate_field(&self, values: &[f64], g: impl Fn(f64, f64) -> f64) -> f64 {
        self.quad
            .iter()
            .map(|q| {
                let u = q.phi[0] * values[q.cell] + q.phi[1] * values[q.cell + 1];
                q.weight * g(u, q.t)
            })
            .sum()
    }

    /// Same mesh with every cell halved.
    pub fn refined(&self) -> Self {
        let mut nodes = Vec::with_capacity(2 * self.nodes.len() - 1);
        nodes.push(self.nodes[0]);
        for w in self.nodes.windows(2) {
            nodes.push(0.5 * (w[0] + w[1]));
            nodes.push(w[1]);
        }
        let annuli = self
            .annuli
            .iter()
            .map(|s| AnnulusSpan {
                first: 2 * s.first,
                last: 2 * s.last,
            })
            .collect();
        Self::assemble(nodes, annuli, self.radii.clone())
    }

    pub fn same_as(&self, other: &RadialMesh) -> bool {
        self.nodes == other.nodes && self.annuli == other.annuli
    }
}

fn cell_widths(
    n: usize,
    grading: Grading,
    toward_left: bool,
    toward_right: bool,
    gap: f64,
) -> Vec<f64> {
    let raw: Vec<f64> = match grading {
        Grading::Uniform => vec![1.0; n],
        Grading::Geometric { ratio } => (0..n)
            .map(|j| {
                let from_left = j;
                let from_right = n - 1 - j;
                let steps = match (toward_left, toward_right) {
                    (true, true) => from_left.min(from_right),
                    (true, false) => from_left,
                    (false, true) => from_right,
                    (false, false) => 0,
                };
                ratio.powi(steps as i32)
            })
            .collect(),
    };
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|w| w * gap / total).collect()
}

/// Symmetric tridiagonal matrix over all mesh nodes.
#[derive(Debug, Clone)]
pub struct Tridiag {
    pub diag: Vec<f64>,
    pub off: Vec<f64>,
}

impl Tridiag {
    fn zeros(n: usize) -> Self {
        Self {
            diag: vec![0.0; n],
            off: vec![0.0; n.saturating_sub(1)],
        }
    }

    /// `(A u)_j` for `j` in `rows`, using only entries of `u` with global
    /// indices in `[lo, hi]`; `u` is indexed from `lo`.
    pub fn apply_range(&self, lo: usize, hi: usize, u: &[f64]) -> Vec<f64> {
        let n = hi - lo + 1;
        (0..n)
            .map(|j| {
                let g = lo + j;
                let mut s = self.diag[g] * u[j];
                if j > 0 {
                    s += self.off[g - 1] * u[j - 1];
                }
                if j + 1 < n {
                    s += self.off[g] * u[j + 1];
                }
                s
            })
            .collect()
    }

    pub fn quad_form_range(&self, lo: usize, u: &[f64]) -> f64 {
        let mut s = 0.0;
        for j in 0..u.len() {
            let g = lo + j;
            s += self.diag[g] * u[j] * u[j];
            if j + 1 < u.len() {
                s += 2.0 * self.off[g] * u[j] * u[j + 1];
            }
        }
        s
    }

    pub fn bilinear_range(&self, lo: usize, u: &[f64], v: &[f64]) -> f64 {
        let au = self.apply_range(lo, lo + u.len() - 1, u);
        au.iter().zip(v).map(|(a, b)| a * b).sum()
    }
}

/// Solves `A x = rhs` for the principal submatrix of `a + c·b` on global
/// indices `[lo, hi]` (Thomas algorithm; `a + c·b` must be SPD there).
pub fn solve_tridiag_combo(
    a: &Tridiag,
    b: &Tridiag,
    c: f64,
    lo: usize,
    hi: usize,
    rhs: &[f64],
) -> Vec<f64> {
    let n = hi - lo + 1;
    debug_assert_eq!(rhs.len(), n);
    let mut cp = vec![0.0; n];
    let mut dp = vec![0.0; n];
    let diag = |j: usize| a.diag[lo + j] + c * b.diag[lo + j];
    let off = |j: usize| a.off[lo + j] + c * b.off[lo + j];
    let mut denom = diag(0);
    cp[0] = if n > 1 { off(0) / denom } else { 0.0 };
    dp[0] = rhs[0] / denom;
    for j in 1..n {
        let lower = off(j - 1);
        denom = diag(j) - lower * cp[j - 1];
        if j + 1 < n {
            cp[j] = off(j) / denom;
        }
        dp[j] = (rhs[j] - lower * dp[j - 1]) / denom;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = dp[n - 1];
    for j in (0..n - 1).rev() {
        x[j] = dp[j] - cp[j] * x[j + 1];
    }
    x
}

/// Stiffness `4π∫u'v't²` and potential mass `4π∫V u v t²` on a mesh.
#[derive(Debug, Clone)]
pub struct Assembly {
    mesh: Arc<RadialMesh>,
    pub stiffness: Tridiag,
    pub mass: Tridiag,
}

impl Assembly {
    pub fn new(mesh: Arc<RadialMesh>, potential: &Potential) -> Self {
        let n = mesh.node_count();
        let mut stiffness = Tridiag::zeros(n);
        let mut mass = Tridiag::zeros(n);
        for q in mesh.quadrature() {
            let c = q.cell;
            let h = mesh.cell_width(c);
            let grad = q.weight / (h * h);
            stiffness.diag[c] += grad;
            stiffness.diag[c + 1] += grad;
            stiffness.off[c] -= grad;
            let vw = q.weight * potential.value(q.t);
            mass.diag[c] += vw * q.phi[0] * q.phi[0];
            mass.diag[c + 1] += vw * q.phi[1] * q.phi[1];
            mass.off[c] += vw * q.phi[0] * q.phi[1];
        }
        Self {
            mesh,
            stiffness,
            mass,
        }
    }

    pub fn mesh(&self) -> &RadialMesh {
        &self.mesh
    }
    pub fn mesh_arc(&self) -> &Arc<RadialMesh> {
        &self.mesh
    }

    /// Solves `(K + M) x = rhs` on free nodes `[lo, hi]`.
    pub fn solve_h(&self, lo: usize, hi: usize, rhs: &[f64]) -> Vec<f64> {
        solve_tridiag_combo(&self.stiffness, &self.mass, 1.0, lo, hi, rhs)
    }
}

/// A function supported on one annulus, stored by its nodal values on that annulus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnnularField {
    index: usize,
    values: Vec<f64>,
}

impl AnnularField {
    /// `index` is zero-based. Boundary values must be exactly zero (except the
    /// origin value of the innermost annulus).
    pub fn new(mesh: &RadialMesh, index: usize, values: Vec<f64>) -> Result<Self> {
        let span = *mesh
            .annuli()
            .get(index)
            .ok_or_else(|| Error::Structure(format!("annulus {} does not exist", index + 1)))?;
        if values.len() != span.len() {
            return Err(Error::Structure(format!(
                "annulus {} has {} nodes, got {} values",
                index + 1,
                span.len(),
                values.len()
            )));
        }
        if values[values.len() - 1] != 0.0 || (index > 0 && values[0] != 0.0) {
            return Err(Error::Structure(format!(
                "component {} must vanish on the boundary of its annulus",
                index + 1
            )));
        }
        Ok(Self { index, values })
    }

    /// Samples `f` at the annulus nodes, forcing the boundary values to zero.
    pub fn from_fn(mesh: &RadialMesh, index: usize, f: impl Fn(f64) -> f64) -> Self {
        let span = mesh.span(index);
        let mut values: Vec<f64> = mesh.nodes()[span.first..=span.last]
            .iter()
            .map(|&t| f(t))
            .collect();
        let n = values.len();
        values[n - 1] = 0.0;
        if index > 0 {
            values[0] = 0.0;
        }
        Self { index, values }
    }

    pub fn zeros(mesh: &RadialMesh, index: usize) -> Self {
        Self {
            index,
            values: vec![0.0; mesh.span(index).len()],
        }
    }

    pub fn index(&self) -> usize {
        self.index
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Local indices of the free degrees of freedom.
    pub fn free_range(&self) -> std::ops::Range<usize> {
        let start = if self.index == 0 { 0 } else { 1 };
        start..self.values.len() - 1
    }

    /// Mutable access to interior values; boundary zeros cannot be touched.
    pub fn free_values_mut(&mut self) -> &mut [f64] {
        let r = self.free_range();
        &mut self.values[r]
    }

    pub fn scale(&mut self, s: f64) {
        for v in self.free_values_mut() {
            *v *= s;
        }
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Tuple of annular components on a shared mesh.
#[derive(Debug, Clone)]
pub struct NodalCandidate {
    mesh: Arc<RadialMesh>,
    components: Vec<AnnularField>,
}

impl NodalCandidate {
    pub fn new(mesh: Arc<RadialMesh>, components: Vec<AnnularField>) -> Result<Self> {
        if components.len() != mesh.annuli().len() {
            return Err(Error::Structure(format!(
                "mesh has {} annuli but {} components were given",
                mesh.annuli().len(),
                components.len()
            )));
        }
        for (i, c) in components.iter().enumerate() {
            if c.index != i || c.values.len() != mesh.span(i).len() {
                return Err(Error::Structure(format!(
                    "component {} does not match its annulus",
                    i + 1
                )));
            }
        }
        Ok(Self { mesh, components })
    }

    /// One smooth bump per annulus with alternating signs `(-1)^{i+1}`.
    pub fn sine_bumps(mesh: Arc<RadialMesh>) -> Self {
        let edges = mesh.radii().edges();
        let components = (0..mesh.annuli().len())
            .map(|i| {
                let (a, b) = (edges[i], edges[i + 1]);
                let sign = alternating_sign(i);
                if i == 0 {
                    // even extension through the origin: cos profile vanishing at r_1
                    AnnularField::from_fn(&mesh, i, |t| sign * (0.5 * PI * t / b).cos())
                } else {
                    AnnularField::from_fn(&mesh, i, |t| sign * (PI * (t - a) / (b - a)).sin())
                }
            })
            .collect();
        Self { mesh, components }
    }

    pub fn mesh(&self) -> &RadialMesh {
        &self.mesh
    }
    pub fn mesh_arc(&self) -> &Arc<RadialMesh> {
        &self.mesh
    }
    pub fn radii(&self) -> &RadiiVector {
        self.mesh.radii()
    }
    pub fn k(&self) -> usize {
        self.components.len() - 1
    }
    pub fn components(&self) -> &[AnnularField] {
        &self.components
    }
    pub fn component_mut(&mut self, i: usize) -> &mut AnnularField {
        &mut self.components[i]
    }

    /// Componentwise scaling `(t_1 u_1, ..., t_{k+1} u_{k+1})`.
    pub fn scaled(&self, t: &[f64]) -> Self {
        let mut out = self.clone();
        for (c, &s) in out.components.iter_mut().zip(t) {
            c.scale(s);
        }
        out
    }

    /// Replaces component `i` by `(-1)^{i+1}|u_i|` nodewise.
    pub fn enforce_signs(&mut self) {
        for (i, c) in self.components.iter_mut().enumerate() {
            let s = alternating_sign(i);
            for v in c.free_values_mut() {
                *v = s * v.abs();
            }
        }
    }

    /// Whether `(-1)^{i+1} u_i >= -tol·max|u_i|` nodewise for every component.
    pub fn has_alternating_signs(&self, tol: f64) -> bool {
        self.components.iter().enumerate().all(|(i, c)| {
            let s = alternating_sign(i);
            let floor = -tol * c.max_abs();
            c.values.iter().all(|&v| s * v >= floor)
        })
    }

    /// Sum of the components as a field on the whole mesh.
    pub fn glue(&self) -> RadialField {
        let mut values = vec![0.0; self.mesh.node_count()];
        for (c, span) in self.components.iter().zip(self.mesh.annuli()) {
            for (j, &v) in c.values.iter().enumerate() {
                values[span.first + j] += v;
            }
        }
        RadialField {
            mesh: self.mesh.clone(),
            values,
        }
    }
}

/// `(-1)^{i+1}` for the one-based annulus `i + 1`.
pub fn alternating_sign(zero_based: usize) -> f64 {
    if zero_based.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

/// Radial field on the whole mesh, vanishing at `R`.
#[derive(Debug, Clone)]
pub struct RadialField {
    mesh: Arc<RadialMesh>,
    values: Vec<f64>,
}

impl RadialField {
    pub fn new(mesh: Arc<RadialMesh>, values: Vec<f64>) -> Result<Self> {
        if values.len() != mesh.node_count() {
            return Err(Error::Structure(format!(
                "field has {} values for {} mesh nodes",
                values.len(),
                mesh.node_count()
            )));
        }
        if values[values.len() - 1] != 0.0 {
            return Err(Error::Structure(
                "radial field must vanish at the outer radius".into(),
            ));
        }
        Ok(Self { mesh, values })
    }

    pub fn mesh(&self) -> &RadialMesh {
        &self.mesh
    }
    pub fn mesh_arc(&self) -> &Arc<RadialMesh> {
        &self.mesh
    }
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Piecewise-linear interpolation at `t` (zero outside `[0, R]`).
    pub fn eval(&self, t: f64) -> f64 {
        let nodes = self.mesh.nodes();
        if t < 0.0 || t > nodes[nodes.len() - 1] {
            return 0.0;
        }
        let j = nodes.partition_point(|&x| x <= t).clamp(1, nodes.len() - 1);
        let (a, b) = (nodes[j - 1], nodes[j]);
        let s = (t - a) / (b - a);
        self.values[j - 1] * (1.0 - s) + self.values[j] * s
    }

    /// Number of strict sign flips between consecutive significant nodes;
    /// values below `rel_tol·max|u|` count as zero.
    pub fn sign_changes(&self, rel_tol: f64) -> usize {
        count_sign_changes(&self.values, rel_tol)
    }

    pub fn max_abs_slope(&self) -> f64 {
        let nodes = self.mesh.nodes();
        (0..nodes.len() - 1)
            .map(|c| ((self.values[c + 1] - self.values[c]) / (nodes[c + 1] - nodes[c])).abs())
            .fold(0.0, f64::max)
    }
}

pub fn count_sign_changes(values: &[f64], rel_tol: f64) -> usize {
    let max = values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let floor = rel_tol * max;
    let mut last = 0.0_f64;
    let mut count = 0;
    for &v in values {
        if v.abs() <= floor {
            continue;
        }
        if last != 0.0 && last.signum() != v.signum() {
            count += 1;
        }
        last = v;
    }
    count
}

/// Decoded columnar profile file.
#[derive(Debug, Clone, PartialEq)]
pub struct ProfileFile {
    /// Zero-based annulus index, `None` for a glued field.
    pub annulus: Option<usize>,
    pub radii: Vec<f64>,
    pub t: Vec<f64>,
    pub u: Vec<f64>,
}

fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `t,u` columns for the nodes of one annulus.
pub fn write_annular_profile(mesh: &RadialMesh, field: &AnnularField) -> String {
    let span = mesh.span(field.index);
    let nodes = &mesh.nodes()[span.first..=span.last];
    write_profile(
        Some(field.index),
        &mesh.radii().edges(),
        nodes,
        &field.values,
    )
}

pub fn write_glued_profile(field: &RadialField) -> String {
    write_profile(
        None,
        &field.mesh.radii().edges(),
        field.mesh.nodes(),
        &field.values,
    )
}

fn write_profile(annulus: Option<usize>, radii: &[f64], t: &[f64], u: &[f64]) -> String {
    let mut s = String::new();
    let label = annulus.map_or_else(|| "glued".to_string(), |i| (i + 1).to_string());
    let radii: Vec<String> = radii.iter().map(|&r| fmt17(r)).collect();
    let _ = writeln!(s, "# annulus={label} radii={}", radii.join(";"));
    s.push_str("t,u\n");
    for (a, b) in t.iter().zip(u) {
        let _ = writeln!(s, "{},{}", fmt17(*a), fmt17(*b));
    }
    s
}

pub fn read_profile(text: &str) -> Result<ProfileFile> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty profile".into()))?;
    let header = header
        .strip_prefix("# ")
        .ok_or_else(|| Error::Parse("profile header must start with '# '".into()))?;
    let mut annulus = None;
    let mut radii = None;
    for part in header.split_whitespace() {
        if let Some(a) = part.strip_prefix("annulus=") {
            annulus = Some(if a == "glued" {
                None
            } else {
                let i: usize = a
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad annulus index {a}")))?;
                if i == 0 {
                    return Err(Error::Parse("annulus indices are one-based".into()));
                }
                Some(i - 1)
            });
        } else if let Some(r) = part.strip_prefix("radii=") {
            radii = Some(
                r.split(';')
                    .map(|x| {
                        x.parse::<f64>()
                            .map_err(|_| Error::Parse(format!("bad radius {x}")))
                    })
                    .collect::<Result<Vec<_>>>()?,
            );
        }
    }
    let annulus = annulus.ok_or_else(|| Error::Parse("header lacks annulus=".into()))?;
    let radii = radii.ok_or_else(|| Error::Parse("header lacks radii=".into()))?;
    match lines.next() {
        Some("t,u") => {}
        other => {
            return Err(Error::Parse(format!(
                "expected column header 't,u', got {other:?}"
            )))
        }
    }
    let mut t = Vec::new();
    let mut u = Vec::new();
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (a, b) = line
            .split_once(',')
            .ok_or_else(|| Error::Parse(format!("line {}: expected two columns", n + 3)))?;
        t.push(
            a.trim()
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: bad t", n + 3)))?,
        );
        u.push(
            b.trim()
                .parse()
                .map_err(|_| Error::Parse(format!("line {}: bad u", n + 3)))?,
        );
    }
    Ok(ProfileFile {
        annulus,
        radii,
        t,
        u,
    })
}

/// Rebuilds a candidate from one profile file per component (any order).
pub fn candidate_from_profiles(files: &[ProfileFile]) -> Result<NodalCandidate> {
    if files.is_empty() {
        return Err(Error::Parse("no component profiles".into()));
    }
    let radii_edges = &files[0].radii;
    if radii_edges.len() < 2 {
        return Err(Error::Parse("radii list too short".into()));
    }
    let radii = RadiiVector::new(
        radii_edges[1..radii_edges.len() - 1].to_vec(),
        radii_edges[radii_edges.len() - 1],
    )?;
    let k = radii.k();
    let mut ordered: Vec<Option<&ProfileFile>> = vec![None; k + 1];
    for f in files {
        if &f.radii != radii_edges {
            return Err(Error::Structure(
                "component profiles disagree on radii".into(),
            ));
        }
        let i = f.annulus.ok_or_else(|| {
            Error::Structure("glued profile given where a component was expected".into())
        })?;
        if i > k || ordered[i].is_some() {
            return Err(Error::Structure(format!(
                "unexpected or duplicate component {}",
                i + 1
            )));
        }
        ordered[i] = Some(f);
    }
    let mut nodes: Vec<f64> = Vec::new();
    for (i, f) in ordered.iter().enumerate() {
        let f = f.ok_or_else(|| Error::Structure(format!("component {} missing", i + 1)))?;
        let skip = if nodes.is_empty() { 0 } else { 1 };
        nodes.extend_from_slice(&f.t[skip..]);
    }
    let mesh = Arc::new(RadialMesh::from_nodes(nodes, &radii)?);
    let components = ordered
        .iter()
        .enumerate()
        .map(|(i, f)| AnnularField::new(&mesh, i, f.unwrap().u.clone()))
        .collect::<Result<Vec<_>>>()?;
    NodalCandidate::new(mesh, components)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn radii(interior: &[f64], outer: f64) -> RadiiVector {
        RadiiVector::new(interior.to_vec(), outer).unwrap()
    }

    #[test]
    fn uniform_mesh_nodes() {
        let mesh = RadialMesh::build(&radii(&[1.0], 2.0), 4, Grading::Uniform).unwrap();
        let expected = [0.0, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 1.75, 2.0];
        assert_eq!(mesh.node_count(), 9);
        for (a, b) in mesh.nodes().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(mesh.span(0), AnnulusSpan { first: 0, last: 4 });
        assert_eq!(mesh.span(1), AnnulusSpan { first: 4, last: 8 });
    }

    #[test]
    fn single_cell_ball() {
        let mesh = RadialMesh::build(&radii(&[], 1.0), 1, Grading::Uniform).unwrap();
        assert_eq!(mesh.nodes(), &[0.0, 1.0]);
    }

    #[test]
    fn geometric_grading_halves_toward_junction() {
        let mesh =
            RadialMesh::build(&radii(&[1.0], 2.0), 4, Grading::Geometric { ratio: 2.0 }).unwrap();
        let w: Vec<f64> = (0..8).map(|c| mesh.cell_width(c)).collect();
        // inner annulus graded toward r_1 (its right end), outer toward r_1 (its left end)
        for c in 0..3 {
            assert!((w[c + 1] / w[c] - 0.5).abs() < 1e-12, "{w:?}");
        }
        for c in 4..7 {
            assert!((w[c + 1] / w[c] - 2.0).abs() < 1e-12, "{w:?}");
        }
        assert!((mesh.nodes()[4] - 1.0).abs() == 0.0);
    }

    #[test]
    fn degenerate_annulus_named() {
        let r = radii(&[1.0, 1.0 + 1e-14], 2.0);
        match RadialMesh::build(&r, 4, Grading::Uniform) {
            Err(Error::DegenerateAnnulus { index, .. }) => assert_eq!(index, 2),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn ball_volume_and_t_moment() {
        let mesh =
            RadialMesh::build(&radii(&[0.7], 3.0), 6, Grading::Geometric { ratio: 1.3 }).unwrap();
        let vol = mesh.integrate(|_| 1.0);
        assert!((vol - 4.0 * PI * 27.0 / 3.0).abs() < 1e-12 * vol);
        let unit = RadialMesh::build(&radii(&[], 1.0), 5, Grading::Uniform).unwrap();
        assert!((unit.integrate(|t| t) - PI).abs() < 1e-14);
    }

    #[test]
    fn quadrature_exact_to_degree_nine() {
        let mesh = RadialMesh::build(&radii(&[0.4], 1.0), 3, Grading::Uniform).unwrap();
        // ∫ t^7 t² dt on [0,1] = 1/10
        let v = mesh.integrate(|t| t.powi(7)) / FOUR_PI;
        assert!((v - 0.1).abs() < 1e-15);
    }

    #[test]
    fn sign_changes_ignore_junction_zeros() {
        assert_eq!(
            count_sign_changes(&[1.0, 0.5, 0.0, -0.3, -1.0, 0.0, 0.2, 0.0], 1e-9),
            2
        );
        assert_eq!(count_sign_changes(&[1.0, 1e-12, -1e-12, 1.0, 0.0], 1e-9), 0);
        assert_eq!(count_sign_changes(&[0.0, 0.0], 1e-9), 0);
    }

    #[test]
    fn boundary_values_stay_zero() {
        let mesh =
            Arc::new(RadialMesh::build(&radii(&[1.0, 2.0], 3.0), 4, Grading::Uniform).unwrap());
        let mut cand = NodalCandidate::sine_bumps(mesh.clone());
        for c in cand.components() {
            let v = c.values();
            assert_eq!(v[v.len() - 1], 0.0);
        }
        assert!(cand.components()[0].values()[0] > 0.0);
        assert_eq!(cand.components()[1].values()[0], 0.0);
        cand.component_mut(1).scale(1e300);
        cand.component_mut(1).scale(1e10);
        cand.enforce_signs();
        let v = cand.components()[1].values();
        assert_eq!(v[0], 0.0);
        assert_eq!(v[v.len() - 1], 0.0);
        assert!(AnnularField::new(&mesh, 1, vec![1.0, 0.0, 0.0, 0.0, 0.0]).is_err());
    }

    #[test]
    fn profile_round_trip_is_bit_exact() {
        let mesh = Arc::new(
            RadialMesh::build(&radii(&[1.3], 3.1), 7, Grading::Geometric { ratio: 1.1 }).unwrap(),
        );
        let cand = NodalCandidate::sine_bumps(mesh.clone()).scaled(&[1.0 / 3.0, 7.0 / 9.0]);
        let files: Vec<ProfileFile> = cand
            .components()
            .iter()
            .map(|c| read_profile(&write_annular_profile(&mesh, c)).unwrap())
            .collect();
        let back = candidate_from_profiles(&files).unwrap();
        assert!(back.mesh().same_as(&mesh));
        for (a, b) in back.components().iter().zip(cand.components()) {
            assert_eq!(a.values(), b.values());
        }
        let glued = read_profile(&write_glued_profile(&cand.glue())).unwrap();
        assert_eq!(glued.annulus, None);
        assert_eq!(glued.u, cand.glue().values());
    }

    #[test]
    fn table_potential_interpolates() {
        let v = Potential::table(vec![0.0, 1.0, 2.0], vec![2.0, 1.0, 1.5]).unwrap();
        assert!((v.value(0.5) - 1.5).abs() < 1e-15);
        assert_eq!(v.derivative(0.5), Some(-1.0));
        assert_eq!(v.derivative(5.0), Some(0.0));
        assert!((v.lower_bound(3.0) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn params_validation() {
        assert!(ProblemParams::unit_ball(0.01, 4.5, 10.0, 1).is_err());
        assert!(ProblemParams::new(
            0.01,
            2.5,
            Potential::Constant(1.0),
            10.0,
            1,
            DomainMode::R3Emulation
        )
        .is_err());
        assert!(ProblemParams::new(
            0.01,
            3.5,
            Potential::Constant(1.0),
            10.0,
            1,
            DomainMode::R3Emulation
        )
        .is_ok());
        assert!(ProblemParams::unit_ball(-1.0, 3.0, 10.0, 1).is_err());
        assert!(ProblemParams::new(
            0.0,
            3.0,
            Potential::Constant(0.0),
            10.0,
            1,
            DomainMode::Ball
        )
        .is_err());
    }
}
