//! Dense symmetric eigensolves, spectrum-set arithmetic, the closed-form
//! energy regions, spectral endpoints and the Hellmann–Feynman derivative.

use std::cmp::Ordering;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::disorder::{constant_potential, is_admissible, DistributionSpec};
use crate::error::{Error, Result};
use crate::geometry::{build_trim_mask, BoundaryCondition, LatticeBox, SiteCoord, TrimMask};
use crate::hamiltonian::{assemble_h, assemble_h0, restrict_simple, PotentialField, SymOperator};

/// Default cap on the dimension of a dense eigensolve.
pub const DEFAULT_DENSE_CAP: usize = 4096;

/// Relative residual accepted for an eigenpair, `||H psi - E psi|| <= tol * ||H||`.
pub const EIGEN_RESIDUAL_TOL: f64 = 1e-10;

/// Union of disjoint closed intervals and isolated points, kept normalized.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(try_from = "RawSpectrumSet")]
pub struct SpectrumSet {
    intervals: Vec<(f64, f64)>,
    points: Vec<f64>,
}

#[derive(Deserialize)]
struct RawSpectrumSet {
    intervals: Vec<(f64, f64)>,
    points: Vec<f64>,
}

impl TryFrom<RawSpectrumSet> for SpectrumSet {
    type Error = Error;
    fn try_from(raw: RawSpectrumSet) -> Result<Self> {
        SpectrumSet::new(raw.intervals, raw.points)
    }
}

impl SpectrumSet {
    pub fn new(intervals: Vec<(f64, f64)>, points: Vec<f64>) -> Result<Self> {
        for &(lo, hi) in &intervals {
            if !(lo <= hi) {
                return Err(Error::InvalidInterval(format!(
                    "[{lo}, {hi}] is not an interval"
                )));
            }
        }
        if points.iter().any(|p| p.is_nan()) {
            return Err(Error::InvalidInterval("NaN point".into()));
        }
        let mut s = SpectrumSet { intervals, points };
        s.normalize();
        Ok(s)
    }

    pub fn empty() -> Self {
        SpectrumSet::default()
    }

    pub fn interval(lo: f64, hi: f64) -> Result<Self> {
        SpectrumSet::new(vec![(lo, hi)], Vec::new())
    }

    pub fn from_points(points: impl IntoIterator<Item = f64>) -> Self {
        let mut s = SpectrumSet {
            intervals: Vec::new(),
            points: points.into_iter().collect(),
        };
        s.normalize();
        s
    }

    pub fn intervals(&self) -> &[(f64, f64)] {
        &self.intervals
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty() && self.points.is_empty()
    }

    /// Merges touching or overlapping intervals and absorbs covered points.
    /// Idempotent.
    pub fn normalize(&mut self) {
        self.intervals
            .sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
        let mut merged: Vec<(f64, f64)> = Vec::with_capacity(self.intervals.len());
        for &(lo, hi) in &self.intervals {
            match merged.last_mut() {
                Some(last) if lo <= last.1 => last.1 = last.1.max(hi),
                _ => merged.push((lo, hi)),
            }
        }
        self.intervals = merged;
        self.points.sort_by(f64::total_cmp);
        self.points.dedup();
        let ivs = &self.intervals;
        self.points
            .retain(|&p| !interval_containing(ivs, p).is_some());
    }

    pub fn union(&self, other: &SpectrumSet) -> SpectrumSet {
        let mut s = SpectrumSet {
            intervals: self
                .intervals
                .iter()
                .chain(&other.intervals)
                .copied()
                .collect(),
            points: self.points.iter().chain(&other.points).copied().collect(),
        };
        s.normalize();
        s
    }

    /// Dilates every component by `[-c, c]`.
    pub fn minkowski_sum(&self, c: f64) -> Result<SpectrumSet> {
        if !(c >= 0.0) {
            return Err(Error::InvalidInterval(format!(
                "half-width {c} must be >= 0"
            )));
        }
        if c == 0.0 {
            return Ok(self.clone());
        }
        let intervals = self
            .intervals
            .iter()
            .map(|&(lo, hi)| (lo - c, hi + c))
            .chain(self.points.iter().map(|&p| (p - c, p + c)))
            .collect();
        Ok(SpectrumSet::new(intervals, Vec::new()).expect("dilated intervals are valid"))
    }

    pub fn inf(&self) -> Option<f64> {
        let a = self.intervals.first().map(|i| i.0);
        let b = self.points.first().copied();
        match (a, b) {
            (Some(x), Some(y)) => Some(x.min(y)),
            (x, y) => x.or(y),
        }
    }

    pub fn sup(&self) -> Option<f64> {
        let a = self.intervals.last().map(|i| i.1);
        let b = self.points.last().copied();
        match (a, b) {
            (Some(x), Some(y)) => Some(x.max(y)),
            (x, y) => x.or(y),
        }
    }

    pub fn distance_to(&self, e: f64) -> Result<f64> {
        if self.is_empty() {
            return Err(Error::EmptySet);
        }
        let di = self
            .intervals
            .iter()
            .map(|&(lo, hi)| {
                if e < lo {
                    lo - e
                } else if e > hi {
                    e - hi
                } else {
                    0.0
                }
            })
            .fold(f64::INFINITY, f64::min);
        let dp = nearest_sorted(&self.points, e).map_or(f64::INFINITY, |p| (p - e).abs());
        Ok(di.min(dp))
    }

    pub fn contains(&self, e: f64, tol: f64) -> bool {
        self.distance_to(e).map_or(false, |d| d <= tol)
    }

    /// Smallest `s >= e` in the set (`e` itself when covered).
    pub fn next_at_or_above(&self, e: f64) -> Option<f64> {
        let from_iv = self
            .intervals
            .iter()
            .filter(|&&(_, hi)| hi >= e)
            .map(|&(lo, _)| lo.max(e))
            .fold(f64::INFINITY, f64::min);
        let from_pt = self
            .points
            .iter()
            .copied()
            .filter(|&p| p >= e)
            .fold(f64::INFINITY, f64::min);
        let v = from_iv.min(from_pt);
        v.is_finite().then_some(v)
    }

    /// Largest `s <= e` in the set.
    pub fn next_at_or_below(&self, e: f64) -> Option<f64> {
        let from_iv = self
            .intervals
            .iter()
            .filter(|&&(lo, _)| lo <= e)
            .map(|&(_, hi)| hi.min(e))
            .fold(f64::NEG_INFINITY, f64::max);
        let from_pt = self
            .points
            .iter()
            .copied()
            .filter(|&p| p <= e)
            .fold(f64::NEG_INFINITY, f64::max);
        let v = from_iv.max(from_pt);
        v.is_finite().then_some(v)
    }

    /// Hausdorff distance between two nonempty sets.
    pub fn hausdorff(&self, other: &SpectrumSet) -> Result<f64> {
        Ok(self
            .directed_hausdorff(other)?
            .max(other.directed_hausdorff(self)?))
    }

    fn directed_hausdorff(&self, other: &SpectrumSet) -> Result<f64> {
        if self.is_empty() || other.is_empty() {
            return Err(Error::EmptySet);
        }
        // dist(., other) is piecewise linear; its maxima over an interval sit
        // at the endpoints or at midpoints between consecutive components.
        let mut comps: Vec<(f64, f64)> = other
            .intervals
            .iter()
            .copied()
            .chain(other.points.iter().map(|&p| (p, p)))
            .collect();
        comps.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mids: Vec<f64> = comps.windows(2).map(|w| 0.5 * (w[0].1 + w[1].0)).collect();
        let mut worst: f64 = 0.0;
        for &p in &self.points {
            worst = worst.max(other.distance_to(p)?);
        }
        for &(lo, hi) in &self.intervals {
            worst = worst
                .max(other.distance_to(lo)?)
                .max(other.distance_to(hi)?);
            for &m in mids.iter().filter(|&&m| m > lo && m < hi) {
                worst = worst.max(other.distance_to(m)?);
            }
        }
        Ok(worst)
    }
}

fn interval_containing(ivs: &[(f64, f64)], p: f64) -> Option<usize> {
    let idx = ivs.partition_point(|iv| iv.0 <= p);
    (idx > 0 && p <= ivs[idx - 1].1).then(|| idx - 1)
}

fn nearest_sorted(sorted: &[f64], e: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let i = sorted.partition_point(|&p| p < e);
    let cands = [i.checked_sub(1).map(|j| sorted[j]), sorted.get(i).copied()];
    cands.into_iter().flatten().min_by(|a, b| {
        (a - e)
            .abs()
            .partial_cmp(&(b - e).abs())
            .unwrap_or(Ordering::Equal)
    })
}

/// Sorted eigenvalues with optional orthonormal eigenvectors (columns).
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    pub vectors: Option<DMatrix<f64>>,
    /// Largest `||H psi - E psi||_2` over returned pairs, when vectors exist.
    pub residual: Option<f64>,
}

impl EigenDecomposition {
    pub fn dim(&self) -> usize {
        self.values.len()
    }

    pub fn vector(&self, n: usize) -> Option<nalgebra::DVectorView<'_, f64>> {
        self.vectors.as_ref().map(|v| v.column(n))
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }
}

/// Full spectrum of `h` with the default dimension cap.
pub fn eigen_sym(h: &SymOperator, want_vectors: bool) -> Result<EigenDecomposition> {
    eigen_sym_capped(h, want_vectors, DEFAULT_DENSE_CAP)
}

pub fn eigen_sym_capped(
    h: &SymOperator,
    want_vectors: bool,
    cap: usize,
) -> Result<EigenDecomposition> {
    let n = h.dim();
    if n > cap {
        return Err(Error::SizeCap {
            what: "dense eigensolve dimension",
            size: n,
            cap,
        });
    }
    if n == 0 {
        return Ok(EigenDecomposition {
            values: Vec::new(),
            vectors: None,
            residual: None,
        });
    }
    let dense = h.to_dense();
    if !want_vectors {
        let mut values: Vec<f64> = dense.symmetric_eigenvalues().iter().copied().collect();
        values.sort_by(f64::total_cmp);
        return Ok(EigenDecomposition {
            values,
            vectors: None,
            residual: None,
        });
    }
    let eig = dense.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    let hv = &dense * &vectors;
    let mut residual: f64 = 0.0;
    for c in 0..n {
        let r = (hv.column(c) - vectors.column(c) * values[c]).norm();
        residual = residual.max(r);
    }
    let scale = h.norm_bound().max(1.0);
    if residual > EIGEN_RESIDUAL_TOL * scale {
        return Err(Error::Accuracy(format!(
            "eigenpair residual {residual:e} exceeds {:e}",
            EIGEN_RESIDUAL_TOL * scale
        )));
    }
    Ok(EigenDecomposition {
        values,
        vectors: Some(vectors),
        residual: Some(residual),
    })
}

/// `#{n : E_n <= e}`.
pub fn count_below(decomp: &EigenDecomposition, e: f64) -> usize {
    decomp.values.partition_point(|&x| x <= e)
}

/// Number of eigenvalues in the window `(e - eps, e + eps]`.
pub fn window_count(decomp: &EigenDecomposition, e: f64, eps: f64) -> usize {
    count_below(decomp, e + eps) - count_below(decomp, e - eps)
}

/// Sorted tensor-sum spectrum `{lambda_i + mu_j}`.
pub fn tensor_sum(a: &[f64], b: &[f64]) -> Vec<f64> {
    let mut out: Vec<f64> = a
        .iter()
        .flat_map(|&x| b.iter().map(move |&y| x + y))
        .collect();
    out.sort_by(f64::total_cmp);
    out
}

/// `2 cos(pi * num / den)` with exact zeros and signs at the special angles.
pub(crate) fn two_cos_pi_ratio(num: usize, den: usize) -> f64 {
    let r = num % (2 * den);
    if 2 * r == den || 2 * r == 3 * den {
        return 0.0;
    }
    2.0 * (std::f64::consts::PI * r as f64 / den as f64).cos()
}

/// Iterates over all confined modes `L` with `1 <= l_nu <= p_nu - 1`.
pub fn confined_modes(periods: &[usize], d1: usize) -> Vec<Vec<usize>> {
    let mut modes = vec![Vec::new()];
    for &p in &periods[..d1] {
        modes = modes
            .into_iter()
            .flat_map(|m| {
                (1..p).map(move |l| {
                    let mut next = m.clone();
                    next.push(l);
                    next
                })
            })
            .collect();
    }
    modes
}

/// `e_L = 2 * sum_{nu <= d1} cos(pi * l_nu / p_nu)`.
pub fn compute_e_l(periods: &[usize], d1: usize, mode: &[usize]) -> Result<f64> {
    if d1 == 0 || d1 > periods.len() {
        return Err(Error::InvalidMode(format!("d1 = {d1} out of range")));
    }
    if mode.len() != d1 {
        return Err(Error::InvalidMode(format!(
            "mode has {} entries, expected d1 = {d1}",
            mode.len()
        )));
    }
    let mut e = 0.0;
    for (nu, (&l, &p)) in mode.iter().zip(periods).enumerate() {
        if l == 0 || l >= p {
            return Err(Error::InvalidMode(format!(
                "l_{} = {} outside 1..={}",
                nu + 1,
                l,
                p - 1
            )));
        }
        e += two_cos_pi_ratio(l, p);
    }
    Ok(e)
}

/// The explicit region `union_L (e_L + [-2 d2, 2 d2])`.
pub fn energy_region(periods: &[usize], d1: usize, d2: usize) -> Result<SpectrumSet> {
    if periods.len() < d1 || periods[..d1].iter().any(|&p| p < 2) {
        return Err(Error::InvalidGeometry(
            "energy region needs d1 periods >= 2".into(),
        ));
    }
    let pts = confined_modes(periods, d1)
        .into_iter()
        .map(|l| compute_e_l(periods, d1, &l))
        .collect::<Result<Vec<_>>>()?;
    SpectrumSet::from_points(pts).minkowski_sum(2.0 * d2 as f64)
}

/// Closed form of `sigma(H_{0, Gamma^c})` for `Gamma = pZ x Z^d2`: the
/// spectrum `{2 cos(k pi / p)}` of the trapped `(p-1)`-site segments plus the
/// free band.
pub fn sigma0_single_layer(p: usize, d1: usize, d2: usize) -> Result<SpectrumSet> {
    if d1 != 1 {
        return Err(Error::Unsupported(format!(
            "closed form needs d1 = 1, got {d1}; use sigma0_numeric"
        )));
    }
    if p < 2 {
        return Err(Error::InvalidGeometry(format!(
            "period {p} violates p >= 2"
        )));
    }
    SpectrumSet::from_points((1..p).map(|k| two_cos_pi_ratio(k, p))).minkowski_sum(2.0 * d2 as f64)
}

/// Eigenvalues of `H0` restricted to `Gamma^c` on a periodic box, as points.
pub fn sigma0_numeric(mask: &TrimMask) -> Result<SpectrumSet> {
    let b = mask.lattice();
    if !b.is_fully_periodic() {
        return Err(Error::Precondition(
            "sigma0_numeric needs periodic boundary conditions".into(),
        ));
    }
    let comp = mask.complement();
    if comp.is_empty() {
        return Err(Error::InvalidTrim("Gamma^c is empty".into()));
    }
    let h = restrict_simple(b, &comp)?;
    Ok(SpectrumSet::from_points(eigen_sym(&h, false)?.values))
}

/// `(min, max)` eigenvalue of `H_a = H0 + a chi_Gamma` on the box.
pub fn spectrum_endpoints(mask: &TrimMask, a: f64) -> Result<(f64, f64)> {
    let h = assemble_h(mask.lattice(), &constant_potential(mask, a))?;
    let d = eigen_sym(&h, false)?;
    Ok((d.min(), d.max()))
}

/// Ground state of the periodic unit-cell operator `h_a`.
#[derive(Debug, Clone)]
pub struct CellGroundState {
    pub energy: f64,
    /// `sum_{j in C0 cap Gamma} |psi_a(j)|^2 = dE_a / da`.
    pub derivative: f64,
    pub gap: f64,
}

/// Minimum spectral gap for a ground state to count as nondegenerate.
pub const DEGENERACY_GAP: f64 = 1e-8;

/// Hellmann–Feynman derivative of the bottom of the spectrum with respect to
/// the constant coupling `a`, from the unit-cell operator with periodic bc.
pub fn hellmann_feynman(
    periods: &[usize],
    d1: usize,
    gamma0: &[SiteCoord],
    a: f64,
) -> Result<CellGroundState> {
    let cell = LatticeBox::new(
        periods.to_vec(),
        vec![BoundaryCondition::Periodic; periods.len()],
        periods.to_vec(),
        d1,
    )?;
    let mask = build_trim_mask(&cell, gamma0)?;
    let h = assemble_h(&cell, &constant_potential(&mask, a))?;
    let dec = eigen_sym(&h, true)?;
    let gap = if dec.dim() > 1 {
        dec.values[1] - dec.values[0]
    } else {
        f64::INFINITY
    };
    if gap < DEGENERACY_GAP {
        return Err(Error::Degenerate {
            gap,
            threshold: DEGENERACY_GAP,
        });
    }
    let psi = dec.vector(0).expect("vectors requested");
    let derivative = mask.active_sites().map(|j| psi[j] * psi[j]).sum();
    Ok(CellGroundState {
        energy: dec.values[0],
        derivative,
        gap,
    })
}

/// Outcome of checking `sigma(H0 + W)` against `[E_min(a), E_max(b)]`.
#[derive(Debug, Clone, Serialize)]
pub struct ContainmentReport {
    pub e_min_a: f64,
    pub e_max_b: f64,
    pub min: f64,
    pub max: f64,
    /// `min - E_min(a)`; nonnegative up to the tolerance when contained.
    pub lower_margin: f64,
    /// `E_max(b) - max`.
    pub upper_margin: f64,
    pub contained: bool,
}

pub const CONTAINMENT_TOL: f64 = 1e-8;

/// Checks the spectrum of `H0 + W` against the constant-potential endpoints.
/// `endpoints` may carry precomputed `(E_min(a), E_max(b))`.
pub fn admissible_containment(
    mask: &TrimMask,
    dist: &DistributionSpec,
    w: &PotentialField,
    endpoints: Option<(f64, f64)>,
) -> Result<ContainmentReport> {
    if !is_admissible(w, dist, mask) {
        return Err(Error::Inadmissible(
            "W vanishes off Gamma and takes values in the support".into(),
        ));
    }
    let (e_min_a, e_max_b) = match endpoints {
        Some(e) => e,
        None => (
            spectrum_endpoints(mask, dist.a)?.0,
            spectrum_endpoints(mask, dist.b)?.1,
        ),
    };
    let dec = eigen_sym(&assemble_h(mask.lattice(), w)?, false)?;
    let (min, max) = (dec.min(), dec.max());
    let lower_margin = min - e_min_a;
    let upper_margin = e_max_b - max;
    Ok(ContainmentReport {
        e_min_a,
        e_max_b,
        min,
        max,
        lower_margin,
        upper_margin,
        contained: lower_margin >= -CONTAINMENT_TOL && upper_margin >= -CONTAINMENT_TOL,
    })
}

/// Free-operator spectrum of a box, convenience for bounds checks.
pub fn free_spectrum(lattice: &LatticeBox) -> Result<Vec<f64>> {
    Ok(eigen_sym(&assemble_h0(lattice), false)?.values)
}
