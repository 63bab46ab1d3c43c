//! Green function columns `G_{E + i zeta}(x, .)`, exponential decay fits and
//! the small-`zeta` sweep of the l1 row sum.

use nalgebra::{DMatrix, DVector, Dyn, LU};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::LatticeBox;
use crate::hamiltonian::SymOperator;
use crate::spectral::EigenDecomposition;

/// Relative residual accepted for a Green column.
pub const GREEN_RESIDUAL_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct GreenColumn {
    pub source: usize,
    pub energy: f64,
    pub zeta: f64,
    pub values: Vec<Complex64>,
    /// `||(H - z) G - delta_x||_2`.
    pub residual: f64,
}

impl GreenColumn {
    pub fn z(&self) -> Complex64 {
        Complex64::new(self.energy, self.zeta)
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
    }
}

/// `sum_y |G(x, y)|`.
pub fn row_l1(col: &GreenColumn) -> f64 {
    col.values.iter().map(|v| v.norm()).sum()
}

fn check_params(h: &SymOperator, zeta: f64, x: usize) -> Result<()> {
    if !(zeta > 0.0) {
        return Err(Error::Parameter(format!("zeta = {zeta} must be > 0")));
    }
    if x >= h.dim() {
        return Err(Error::SiteOutOfRange {
            index: x,
            site_count: h.dim(),
        });
    }
    Ok(())
}

fn resolvent_residual(h: &SymOperator, z: Complex64, x: usize, g: &[Complex64]) -> f64 {
    let hg = h.matvec_complex(g);
    hg.iter()
        .zip(g)
        .enumerate()
        .map(|(i, (a, b))| {
            let delta = if i == x { 1.0 } else { 0.0 };
            (a - b * z - delta).norm_sqr()
        })
        .sum::<f64>()
        .sqrt()
}

/// Anything that can produce Green columns of a fixed operator.
pub trait GreenSolver {
    fn operator(&self) -> &SymOperator;
    fn column(&self, energy: f64, zeta: f64, x: usize) -> Result<GreenColumn>;
}

/// Factorization of `H - z` for one spectral parameter, reused across sources.
pub struct Resolvent<'a> {
    h: &'a SymOperator,
    z: Complex64,
    lu: LU<Complex64, Dyn, Dyn>,
}

impl<'a> Resolvent<'a> {
    pub fn new(h: &'a SymOperator, energy: f64, zeta: f64) -> Result<Self> {
        check_params(h, zeta, 0)?;
        let n = h.dim();
        let z = Complex64::new(energy, zeta);
        let dense = h.to_dense();
        let m = DMatrix::from_fn(n, n, |i, j| {
            let v = Complex64::new(dense[(i, j)], 0.0);
            if i == j {
                v - z
            } else {
                v
            }
        });
        Ok(Resolvent { h, z, lu: m.lu() })
    }

    pub fn column(&self, x: usize) -> Result<GreenColumn> {
        check_params(self.h, self.z.im, x)?;
        let n = self.h.dim();
        let mut rhs = DVector::from_element(n, Complex64::new(0.0, 0.0));
        rhs[x] = Complex64::new(1.0, 0.0);
        let singular = || Error::Singular {
            re: self.z.re,
            im: self.z.im,
        };
        let mut g: Vec<Complex64> = self
            .lu
            .solve(&rhs)
            .ok_or_else(singular)?
            .iter()
            .copied()
            .collect();
        let bound = GREEN_RESIDUAL_TOL * (self.h.norm_bound() + self.z.norm());
        let mut res = resolvent_residual(self.h, self.z, x, &g);
        if res > bound {
            // One step of iterative refinement.
            let hg = self.h.matvec_complex(&g);
            let r = DVector::from_fn(n, |i, _| {
                let delta = if i == x { 1.0 } else { 0.0 };
                Complex64::new(delta, 0.0) - (hg[i] - g[i] * self.z)
            });
            let corr = self.lu.solve(&r).ok_or_else(singular)?;
            for (gi, ci) in g.iter_mut().zip(corr.iter()) {
                *gi += ci;
            }
            res = resolvent_residual(self.h, self.z, x, &g);
        }
        if !res.is_finite() {
            return Err(singular());
        }
        if res > bound {
            return Err(Error::Accuracy(format!(
                "Green column residual {res:e} exceeds {bound:e}"
            )));
        }
        Ok(GreenColumn {
            source: x,
            energy: self.z.re,
            zeta: self.z.im,
            values: g,
            residual: res,
        })
    }
}

/// Direct complex LU solver; each call factorizes `H - z`.
pub struct DirectSolver<'a> {
    pub h: &'a SymOperator,
}

impl GreenSolver for DirectSolver<'_> {
    fn operator(&self) -> &SymOperator {
        self.h
    }

    fn column(&self, energy: f64, zeta: f64, x: usize) -> Result<GreenColumn> {
        green_column(self.h, energy, zeta, x)
    }
}

/// Solves `(H - (E + i zeta)) u = delta_x` by a dense complex LU.
pub fn green_column(h: &SymOperator, energy: f64, zeta: f64, x: usize) -> Result<GreenColumn> {
    check_params(h, zeta, x)?;
    Resolvent::new(h, energy, zeta)?.column(x)
}

/// Green columns from a full eigendecomposition,
/// `G(x, y) = sum_n psi_n(x) psi_n(y) / (E_n - z)`; `O(n^2)` per column once
/// the eigensolve is paid for.
pub struct SpectralResolvent<'a> {
    h: &'a SymOperator,
    decomp: &'a EigenDecomposition,
}

impl<'a> SpectralResolvent<'a> {
    pub fn new(h: &'a SymOperator, decomp: &'a EigenDecomposition) -> Result<Self> {
        if decomp.vectors.is_none() {
            return Err(Error::Parameter(
                "spectral resolvent needs eigenvectors".into(),
            ));
        }
        if decomp.dim() != h.dim() {
            return Err(Error::Mismatch(
                "eigendecomposition and operator differ in size".into(),
            ));
        }
        Ok(SpectralResolvent { h, decomp })
    }
}

impl GreenSolver for SpectralResolvent<'_> {
    fn operator(&self) -> &SymOperator {
        self.h
    }

    fn column(&self, energy: f64, zeta: f64, x: usize) -> Result<GreenColumn> {
        check_params(self.h, zeta, x)?;
        let v = self.decomp.vectors.as_ref().expect("checked in new");
        let n = self.h.dim();
        let z = Complex64::new(energy, zeta);
        let weights: Vec<Complex64> = (0..n)
            .map(|k| {
                Complex64::new(v[(x, k)], 0.0) / (Complex64::new(self.decomp.values[k], 0.0) - z)
            })
            .collect();
        let values: Vec<Complex64> = (0..n)
            .map(|y| {
                let row = v.row(y);
                weights.iter().zip(row.iter()).map(|(w, &a)| w * a).sum()
            })
            .collect();
        let residual = resolvent_residual(self.h, z, x, &values);
        Ok(GreenColumn {
            source: x,
            energy,
            zeta,
            values,
            residual,
        })
    }
}

/// Least-squares fit `log max_{|y - x| = r} |G(x, y)| ~ log C - m r`.
#[derive(Debug, Clone, Serialize)]
pub struct DecayFit {
    pub mass: f64,
    pub log_prefactor: f64,
    pub r_squared: f64,
    pub min_dist: usize,
    pub max_dist: usize,
    pub points: usize,
}

pub const MIN_FIT_DISTANCES: usize = 5;

/// Fits exponential decay of `col` over minimum-image distances in
/// `[min_dist, D - boundary_margin]`, where `D` is the largest distance from
/// the source (the torus antipode).
pub fn decay_fit(
    col: &GreenColumn,
    lattice: &LatticeBox,
    min_dist: usize,
    boundary_margin: usize,
) -> Result<DecayFit> {
    if col.values.len() != lattice.site_count() {
        return Err(Error::Mismatch(
            "Green column and box differ in size".into(),
        ));
    }
    let dmax = lattice.max_distance_from(col.source)?;
    let upper = dmax.saturating_sub(boundary_margin);
    let mut sphere_max = vec![0.0f64; dmax + 1];
    for (y, g) in col.values.iter().enumerate() {
        let r = lattice.torus_distance(col.source, y)?;
        sphere_max[r] = sphere_max[r].max(g.norm());
    }
    let pts: Vec<(f64, f64)> = (min_dist..=upper)
        .filter(|&r| r < sphere_max.len() && sphere_max[r] > 0.0)
        .map(|r| (r as f64, sphere_max[r].ln()))
        .collect();
    if pts.len() < MIN_FIT_DISTANCES {
        return Err(Error::FitRange {
            found: pts.len(),
            needed: MIN_FIT_DISTANCES,
        });
    }
    let (slope, intercept, r2) = linear_fit(&pts);
    Ok(DecayFit {
        mass: -slope,
        log_prefactor: intercept,
        r_squared: r2,
        min_dist,
        max_dist: upper,
        points: pts.len(),
    })
}

/// Ordinary least squares; returns `(slope, intercept, R^2)` with `R^2`
/// clamped to `[0, 1]`.
pub fn linear_fit(pts: &[(f64, f64)]) -> (f64, f64, f64) {
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
    if sxx == 0.0 {
        return (0.0, my, 0.0);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        let ss_res: f64 = pts
            .iter()
            .map(|p| (p.1 - intercept - slope * p.0).powi(2))
            .sum();
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    (slope, intercept, r2)
}

/// Row sums `S(zeta)` over a decreasing geometric grid.
#[derive(Debug, Clone, Serialize)]
pub struct ZetaSweep {
    pub energy: f64,
    pub source: usize,
    pub zetas: Vec<f64>,
    pub sums: Vec<f64>,
    pub zeta_sums: Vec<f64>,
    /// Exponent of `S ~ zeta^-alpha` fitted over the whole grid.
    pub alpha: f64,
    /// Fit over grid points `0..=i` (the first entry repeats the second).
    pub alpha_running: Vec<f64>,
    pub min_zeta_sum: f64,
    pub max_residual: f64,
    pub warnings: Vec<String>,
}

impl ZetaSweep {
    /// `max S / min S` over the grid.
    pub fn sum_ratio(&self) -> f64 {
        let max = self.sums.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = self.sums.iter().copied().fold(f64::INFINITY, f64::min);
        max / min
    }
}

pub const DEFAULT_ZETA_MAX: f64 = 1e-1;
pub const DEFAULT_ZETA_MIN: f64 = 1e-4;
pub const DEFAULT_ZETA_POINTS: usize = 9;

/// Geometric grid from `zeta_max` down to `zeta_min`, strictly decreasing.
pub fn zeta_grid(zeta_max: f64, zeta_min: f64, points: usize) -> Result<Vec<f64>> {
    if !(zeta_min > 0.0 && zeta_max > zeta_min) {
        return Err(Error::Parameter(format!(
            "need zeta_max > zeta_min > 0, got {zeta_max}, {zeta_min}"
        )));
    }
    if points < 2 {
        return Err(Error::Parameter("zeta grid needs at least 2 points".into()));
    }
    let ratio = (zeta_min / zeta_max).ln();
    Ok((0..points)
        .map(|i| {
            if i == points - 1 {
                zeta_min
            } else {
                zeta_max * (ratio * i as f64 / (points - 1) as f64).exp()
            }
        })
        .collect())
}

fn alpha_of(zetas: &[f64], sums: &[f64]) -> f64 {
    let pts: Vec<(f64, f64)> = zetas
        .iter()
        .zip(sums)
        .map(|(z, s)| (z.ln(), s.ln()))
        .collect();
    -linear_fit(&pts).0
}

/// Sweeps `zeta` with a direct solver.
pub fn zeta_sweep(
    h: &SymOperator,
    energy: f64,
    x: usize,
    zeta_max: f64,
    zeta_min: f64,
    points: usize,
) -> Result<ZetaSweep> {
    zeta_sweep_with(&DirectSolver { h }, energy, x, zeta_max, zeta_min, points)
}

pub fn zeta_sweep_with(
    solver: &dyn GreenSolver,
    energy: f64,
    x: usize,
    zeta_max: f64,
    zeta_min: f64,
    points: usize,
) -> Result<ZetaSweep> {
    let zetas = zeta_grid(zeta_max, zeta_min, points)?;
    let mut sums = Vec::with_capacity(points);
    let mut max_residual: f64 = 0.0;
    for &z in &zetas {
        let col = solver.column(energy, z, x)?;
        max_residual = max_residual.max(col.residual);
        sums.push(row_l1(&col));
    }
    let zeta_sums: Vec<f64> = zetas.iter().zip(&sums).map(|(z, s)| z * s).collect();
    let alpha = alpha_of(&zetas, &sums);
    let mut alpha_running: Vec<f64> = (1..points)
        .map(|i| alpha_of(&zetas[..=i], &sums[..=i]))
        .collect();
    alpha_running.insert(0, alpha_running[0]);
    let h = solver.operator();
    let (lo, hi) = h.gershgorin_bounds();
    let spacing = (hi - lo) / h.dim() as f64;
    let mut warnings = Vec::new();
    if zeta_min < 1e-2 * spacing {
        warnings.push(format!(
            "zeta_min = {zeta_min:e} is below 1e-2 x estimated mean level spacing {spacing:e}; finite-volume poles dominate"
        ));
    }
    Ok(ZetaSweep {
        energy,
        source: x,
        min_zeta_sum: zeta_sums.iter().copied().fold(f64::INFINITY, f64::min),
        zetas,
        sums,
        zeta_sums,
        alpha,
        alpha_running,
        max_residual,
        warnings,
    })
}
