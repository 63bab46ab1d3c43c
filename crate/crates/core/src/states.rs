//! Explicit extended states `Phi_L (x) plane wave` for single-layer trims.
//!
//! `Phi_L(x) = prod_{nu <= d1} sin(pi l_nu x_nu / p_nu)` vanishes on every
//! hyperplane `x_nu in p_nu Z`, so it never sees a potential supported there.
//! In the free directions the state is a torus plane wave
//! `exp(2 pi i m_nu y_nu / N_nu)` with `N_nu = k_nu p_nu`, and the energy is
//! `e_L + 2 sum cos(2 pi m_nu / N_nu)`.

use std::fmt::Write as _;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{BoundaryCondition, TrimMask};
use crate::hamiltonian::SymOperator;
use crate::spectral::{compute_e_l, confined_modes, two_cos_pi_ratio};

/// Confined mode `L` plus torus momenta `m`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ModeIndex {
    pub ell: Vec<usize>,
    pub m: Vec<usize>,
}

/// `sin(pi * num / den)` with exact zeros at integer multiples of pi.
fn sin_pi_ratio(num: i64, den: i64) -> f64 {
    let r = num.rem_euclid(2 * den);
    if r == 0 || r == den {
        return 0.0;
    }
    if 2 * r == den {
        return 1.0;
    }
    if 2 * r == 3 * den {
        return -1.0;
    }
    (std::f64::consts::PI * r as f64 / den as f64).sin()
}

/// `Phi_L(x) = prod sin(pi l_nu x_nu / p_nu)` over the confined coordinates.
pub fn phi_l(x: &[i64], periods: &[usize], ell: &[usize]) -> f64 {
    x.iter()
        .zip(periods)
        .zip(ell)
        .map(|((&xn, &p), &l)| sin_pi_ratio(l as i64 * xn, p as i64))
        .product()
}

/// A complex state on the box with its attached energy.
#[derive(Debug, Clone)]
pub struct ExtendedState {
    pub values: Vec<Complex64>,
    pub mode: ModeIndex,
    pub energy: f64,
    /// False when built with the parity override on an odd-width periodic box.
    pub verified: bool,
}

impl ExtendedState {
    pub fn sup_norm(&self) -> f64 {
        self.values.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    pub fn l2_norm(&self) -> f64 {
        self.values.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// `site_index,re,im` CSV with header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("site_index,re,im\n");
        for (i, z) in self.values.iter().enumerate() {
            writeln!(out, "{i},{},{}", z.re, z.im).unwrap();
        }
        out
    }
}

fn check_mode(mask: &TrimMask, mode: &ModeIndex) -> Result<()> {
    let b = mask.lattice();
    let d1 = b.confined_dims();
    let d2 = b.dim() - d1;
    compute_e_l(b.periods(), d1, &mode.ell)?;
    if mode.m.len() != d2 {
        return Err(Error::InvalidMode(format!(
            "m has {} entries, expected d2 = {d2}",
            mode.m.len()
        )));
    }
    for (i, &m) in mode.m.iter().enumerate() {
        let side = b.sides()[d1 + i];
        if m >= side {
            return Err(Error::InvalidMode(format!(
                "m_{} = {m} outside 0..{side}",
                i + 1
            )));
        }
    }
    Ok(())
}

/// Preconditions for exact extended states: periodic free directions, a
/// single-layer trim, and even width in periodic confined directions.
/// Returns whether the state is exact on this box; simple bc in a confined
/// direction cuts the edge neighbor `x = -1`, where `Phi_L` does not vanish.
fn check_box(mask: &TrimMask, allow_odd_width: bool) -> Result<bool> {
    let b = mask.lattice();
    let d1 = b.confined_dims();
    if b.bcs()[d1..]
        .iter()
        .any(|&bc| bc != BoundaryCondition::Periodic)
    {
        return Err(Error::Precondition(
            "free directions must be periodic".into(),
        ));
    }
    if !mask.is_single_layer() {
        return Err(Error::Support("trim set is not a single-layer set".into()));
    }
    let mut parity_ok = true;
    for nu in 0..d1 {
        if b.bcs()[nu] == BoundaryCondition::Simple {
            parity_ok = false;
            continue;
        }
        let width = b.sides()[nu] / b.periods()[nu];
        if b.bcs()[nu] == BoundaryCondition::Periodic
            && (width % 2 == 1 || b.sides()[nu] % b.periods()[nu] != 0)
        {
            parity_ok = false;
            if !allow_odd_width {
                return Err(Error::Parity(format!(
                    "confined direction {} spans {} periods with periodic bc; M2 - M1 must be even",
                    nu + 1,
                    width
                )));
            }
        }
    }
    Ok(parity_ok)
}

/// Builds `Psi_{L,m}` on the box of `mask`.
pub fn build_extended_state(
    mask: &TrimMask,
    mode: &ModeIndex,
    allow_odd_width: bool,
) -> Result<ExtendedState> {
    let verified = check_box(mask, allow_odd_width)?;
    check_mode(mask, mode)?;
    Ok(extended_state_unchecked(mask, mode, verified))
}

fn extended_state_unchecked(mask: &TrimMask, mode: &ModeIndex, verified: bool) -> ExtendedState {
    let b = mask.lattice();
    let d1 = b.confined_dims();
    let periods = &b.periods()[..d1];
    let mut x = vec![0i64; d1];
    let values = (0..b.site_count())
        .map(|s| {
            for (nu, xn) in x.iter_mut().enumerate() {
                *xn = b.coord_along(s, nu) as i64;
            }
            let amp = phi_l(&x, periods, &mode.ell);
            if amp == 0.0 {
                return Complex64::new(0.0, 0.0);
            }
            let mut phase = Complex64::new(1.0, 0.0);
            for (i, &m) in mode.m.iter().enumerate() {
                let side = b.sides()[d1 + i];
                let r = (m * b.coord_along(s, d1 + i)) % side;
                let theta = 2.0 * std::f64::consts::PI * r as f64 / side as f64;
                phase *= Complex64::new(theta.cos(), theta.sin());
            }
            phase * amp
        })
        .collect();
    let energy = mode_energy(mask, mode);
    ExtendedState {
        values,
        mode: mode.clone(),
        energy,
        verified,
    }
}

fn mode_energy(mask: &TrimMask, mode: &ModeIndex) -> f64 {
    let b = mask.lattice();
    let d1 = b.confined_dims();
    let e_l: f64 = mode
        .ell
        .iter()
        .zip(b.periods())
        .map(|(&l, &p)| two_cos_pi_ratio(l, p))
        .sum();
    let eta: f64 = mode
        .m
        .iter()
        .enumerate()
        .map(|(i, &m)| two_cos_pi_ratio(2 * m, b.sides()[d1 + i]))
        .sum();
    e_l + eta
}

/// All torus momenta `m` of the free directions, lexicographic.
pub fn torus_momenta(mask: &TrimMask) -> Vec<Vec<usize>> {
    let b = mask.lattice();
    let d1 = b.confined_dims();
    let mut out = vec![Vec::new()];
    for &side in &b.sides()[d1..] {
        out = out
            .into_iter()
            .flat_map(|m| {
                (0..side).map(move |j| {
                    let mut next = m.clone();
                    next.push(j);
                    next
                })
            })
            .collect();
    }
    out
}

/// Every `(L, m)` mode of the box.
pub fn all_modes(mask: &TrimMask) -> Vec<ModeIndex> {
    let b = mask.lattice();
    let momenta = torus_momenta(mask);
    confined_modes(b.periods(), b.confined_dims())
        .into_iter()
        .flat_map(|ell| {
            momenta.iter().map(move |m| ModeIndex {
                ell: ell.clone(),
                m: m.clone(),
            })
        })
        .collect()
}

/// `||H Psi - E Psi||_inf`.
pub fn residual(h: &SymOperator, state: &ExtendedState, e: f64) -> Result<f64> {
    if h.dim() != state.values.len() {
        return Err(Error::Mismatch(format!(
            "operator dimension {} vs state length {}",
            h.dim(),
            state.values.len()
        )));
    }
    let hpsi = h.matvec_complex(&state.values);
    Ok(hpsi
        .iter()
        .zip(&state.values)
        .map(|(hp, p)| (hp - p * e).norm())
        .fold(0.0, f64::max))
}

/// Result of checking that `span{Psi_{L,m}}` over all momenta is invariant.
#[derive(Debug, Clone, Serialize)]
pub struct SubspaceReport {
    pub ell: Vec<usize>,
    pub modes: usize,
    /// Largest `||H u - P H u||_2` over normalized basis states `u`.
    pub max_off_residual: f64,
    pub invariant: bool,
}

pub const SUBSPACE_TOL: f64 = 1e-10;

/// Projects `H Psi_{L,m}` back onto the span for every `m` and reports the
/// largest component that leaks out.
pub fn invariant_subspace_check(
    h: &SymOperator,
    mask: &TrimMask,
    ell: &[usize],
) -> Result<SubspaceReport> {
    let verified = check_box(mask, true)?;
    let basis: Vec<Vec<Complex64>> = torus_momenta(mask)
        .into_iter()
        .map(|m| {
            let mode = ModeIndex {
                ell: ell.to_vec(),
                m,
            };
            check_mode(mask, &mode)?;
            let st = extended_state_unchecked(mask, &mode, verified);
            let norm = st.l2_norm();
            Ok(st.values.into_iter().map(|z| z / norm).collect())
        })
        .collect::<Result<_>>()?;
    if h.dim() != mask.lattice().site_count() {
        return Err(Error::Mismatch(
            "operator and mask live on different boxes".into(),
        ));
    }
    let mut worst: f64 = 0.0;
    for u in &basis {
        let mut hu = h.matvec_complex(u);
        for v in &basis {
            let c: Complex64 = v.iter().zip(&hu).map(|(a, b)| a.conj() * b).sum();
            for (x, y) in hu.iter_mut().zip(v) {
                *x -= c * y;
            }
        }
        let off = hu.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        worst = worst.max(off);
    }
    Ok(SubspaceReport {
        ell: ell.to_vec(),
        modes: basis.len(),
        max_off_residual: worst,
        invariant: worst <= SUBSPACE_TOL,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::disorder::{sample_potential, DistributionSpec, EnsembleSpec};
    use crate::geometry::{
        build_box, build_periodic_box, build_trim_mask, single_layer_gamma0, GeometrySpec,
    };
    use crate::hamiltonian::{assemble_h, assemble_h0, PotentialField};

    fn mask(periods: Vec<usize>, w: i64, k: usize) -> TrimMask {
        let spec = GeometrySpec::new(1, 1, periods.clone(), 0, w, vec![k]).unwrap();
        let b = build_periodic_box(&spec).unwrap();
        build_trim_mask(&b, &single_layer_gamma0(&periods, 1, None).unwrap()).unwrap()
    }

    #[test]
    fn phi_values() {
        assert_eq!(phi_l(&[0], &[2], &[1]), 0.0);
        assert_eq!(phi_l(&[1], &[2], &[1]), 1.0);
        let v: Vec<f64> = (0..4).map(|x| phi_l(&[x], &[3], &[1])).collect();
        let s = (std::f64::consts::PI / 3.0).sin();
        assert_eq!(v[0], 0.0);
        assert!((v[1] - s).abs() < 1e-15 && (v[2] - s).abs() < 1e-15);
        assert_eq!(v[3], 0.0);
        for k in -20..20 {
            assert_eq!(phi_l(&[3 * k], &[3], &[2]), 0.0);
        }
    }

    #[test]
    fn p2_state_shape() {
        let m = mask(vec![2, 2], 2, 2);
        let st = build_extended_state(
            &m,
            &ModeIndex {
                ell: vec![1],
                m: vec![0],
            },
            false,
        )
        .unwrap();
        assert_eq!(st.energy, 2.0);
        let b = m.lattice();
        for s in 0..b.site_count() {
            let x = b.coord_along(s, 0) as i64;
            let expect = sin_pi_ratio(x, 2);
            assert!((st.values[s] - Complex64::new(expect, 0.0)).norm() < 1e-15);
        }
        for s in m.active_sites() {
            assert_eq!(st.values[s], Complex64::new(0.0, 0.0));
        }
    }

    #[test]
    fn sup_norm_and_vanishing_all_modes() {
        let m = mask(vec![3, 2], 2, 3);
        for mode in all_modes(&m) {
            let st = build_extended_state(&m, &mode, false).unwrap();
            assert!(st.sup_norm() <= 1.0 + 1e-15);
            assert!(m.active_sites().all(|s| st.values[s].norm() == 0.0));
        }
    }

    #[test]
    fn residual_free_and_random() {
        let m = mask(vec![3, 2], 2, 4);
        let b = m.lattice().clone();
        let h0 = assemble_h0(&b);
        let ens = EnsembleSpec {
            seed: 3,
            realizations: 2,
            distribution: DistributionSpec::uniform(0.0, 5.0).unwrap(),
            mask: m.clone(),
        };
        let hw = assemble_h(&b, &sample_potential(&ens, 1).unwrap()).unwrap();
        for mode in all_modes(&m) {
            let st = build_extended_state(&m, &mode, false).unwrap();
            assert!(residual(&h0, &st, st.energy).unwrap() <= 1e-12);
            assert!(residual(&hw, &st, st.energy).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn residual_negative_control() {
        let m = mask(vec![2, 2], 2, 4);
        let b = m.lattice().clone();
        let st = build_extended_state(
            &m,
            &ModeIndex {
                ell: vec![1],
                m: vec![1],
            },
            false,
        )
        .unwrap();
        let site = m.inactive_sites().next().unwrap();
        let mut vals = vec![0.0; b.site_count()];
        vals[site] = 0.7;
        let h = assemble_h(&b, &PotentialField::unrestricted(&b, vals).unwrap()).unwrap();
        let r = residual(&h, &st, st.energy).unwrap();
        assert!(st.values[site].norm() > 0.0);
        assert!(r >= 0.7 * st.values[site].norm() - 1e-12);
        let bad = SymOperator::zeros(3);
        assert!(matches!(residual(&bad, &st, 0.0), Err(Error::Mismatch(_))));
    }

    #[test]
    fn parity_and_support_errors() {
        let m = mask(vec![2, 2], 3, 2);
        let mode = ModeIndex {
            ell: vec![1],
            m: vec![0],
        };
        assert!(matches!(
            build_extended_state(&m, &mode, false),
            Err(Error::Parity(_))
        ));
        let st = build_extended_state(&m, &mode, true).unwrap();
        assert!(!st.verified);

        // Simple bc in the confined direction: built, but not exact at the
        // Gamma site x = 0 whose missing neighbor x = -1 carries Phi = -1.
        let spec = GeometrySpec::new(1, 1, vec![2, 2], 0, 3, vec![2]).unwrap();
        let b = build_box(
            &spec,
            &[BoundaryCondition::Simple, BoundaryCondition::Periodic],
        )
        .unwrap();
        let ms = build_trim_mask(&b, &single_layer_gamma0(&[2, 2], 1, None).unwrap()).unwrap();
        let st = build_extended_state(&ms, &mode, false).unwrap();
        assert!(!st.verified);
        assert!((residual(&assemble_h0(&b), &st, st.energy).unwrap() - 1.0).abs() <= 1e-12);

        let m2 = mask(vec![2, 2], 2, 2);
        let not_layer =
            build_trim_mask(m2.lattice(), &[crate::geometry::SiteCoord(vec![1, 0])]).unwrap();
        assert!(matches!(
            build_extended_state(&not_layer, &mode, false),
            Err(Error::Support(_))
        ));
        assert!(matches!(
            build_extended_state(
                &m2,
                &ModeIndex {
                    ell: vec![2],
                    m: vec![0]
                },
                false
            ),
            Err(Error::InvalidMode(_))
        ));
        assert!(matches!(
            build_extended_state(
                &m2,
                &ModeIndex {
                    ell: vec![1],
                    m: vec![4]
                },
                false
            ),
            Err(Error::InvalidMode(_))
        ));
    }

    #[test]
    fn subspace_invariance() {
        let m = mask(vec![2, 2], 2, 4);
        let b = m.lattice().clone();
        let rep = invariant_subspace_check(&assemble_h0(&b), &m, &[1]).unwrap();
        assert!(rep.invariant, "{rep:?}");
        assert_eq!(rep.modes, 8);

        let ens = EnsembleSpec {
            seed: 11,
            realizations: 1,
            distribution: DistributionSpec::uniform(0.0, 5.0).unwrap(),
            mask: m.clone(),
        };
        let hw = assemble_h(&b, &sample_potential(&ens, 0).unwrap()).unwrap();
        assert!(invariant_subspace_check(&hw, &m, &[1]).unwrap().invariant);

        let mut vals = vec![0.0; b.site_count()];
        vals[m.inactive_sites().next().unwrap()] = 1.0;
        let hoff = assemble_h(&b, &PotentialField::unrestricted(&b, vals).unwrap()).unwrap();
        let rep = invariant_subspace_check(&hoff, &m, &[1]).unwrap();
        assert!(!rep.invariant);
    }

    #[test]
    fn eigenvalues_cover_mode_energies() {
        let m = mask(vec![3, 2], 2, 2);
        let b = m.lattice().clone();
        let d = crate::spectral::eigen_sym(&assemble_h0(&b), false).unwrap();
        for mode in all_modes(&m) {
            let e = build_extended_state(&m, &mode, false).unwrap().energy;
            assert!(d.values.iter().any(|&x| (x - e).abs() < 1e-10));
        }
    }
}
