//! Trimmed i.i.d. potentials with replayable, order-independent sampling.
//!
//! The value at `(seed, r, site)` is drawn from a ChaCha8 keystream:
//! `ChaCha8Rng::seed_from_u64(seed)` with stream `r`, positioned at word
//! `2 * site`; one `next_u64` gives 64 bits, of which the top 53 form
//! `u in [0, 1)` and the sample is `a + (b - a) * u` (clamped to `[a, b]`).
//! Any site can be evaluated in isolation and the result does not depend on
//! iteration order or worker count.

use rand_chacha::rand_core::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::TrimMask;
use crate::hamiltonian::PotentialField;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DistributionKind {
    Uniform,
}

/// Single-site law with compact support `[a, b]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DistributionSpec {
    pub kind: DistributionKind,
    pub a: f64,
    pub b: f64,
}

impl DistributionSpec {
    pub fn uniform(a: f64, b: f64) -> Result<Self> {
        let d = DistributionSpec {
            kind: DistributionKind::Uniform,
            a,
            b,
        };
        d.validate()?;
        Ok(d)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a.is_finite() && self.b.is_finite()) {
            return Err(Error::InvalidDistribution(
                "support endpoints must be finite".into(),
            ));
        }
        if self.b <= self.a {
            return Err(Error::InvalidDistribution(format!(
                "support [{}, {}] violates a < b",
                self.a, self.b
            )));
        }
        Ok(())
    }

    /// Sup norm of the density.
    pub fn rho_max(&self) -> f64 {
        match self.kind {
            DistributionKind::Uniform => 1.0 / (self.b - self.a),
        }
    }

    pub fn width(&self) -> f64 {
        self.b - self.a
    }

    /// Maps a uniform variate in `[0, 1)` to a sample.
    pub fn quantile(&self, u: f64) -> f64 {
        match self.kind {
            DistributionKind::Uniform => (self.a + (self.b - self.a) * u).min(self.b),
        }
    }

    pub fn contains(&self, v: f64) -> bool {
        v >= self.a && v <= self.b
    }
}

/// Parameters of a disorder ensemble on a fixed trim mask.
#[derive(Debug, Clone)]
pub struct EnsembleSpec {
    pub seed: u64,
    pub realizations: u64,
    pub distribution: DistributionSpec,
    pub mask: TrimMask,
}

#[inline]
fn unit_from_bits(bits: u64) -> f64 {
    (bits >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

fn stream(seed: u64, r: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(r);
    rng
}

/// Uniform variate in `[0, 1)` for `(seed, r, site)`.
pub fn site_uniform(seed: u64, r: u64, site: usize) -> f64 {
    let mut rng = stream(seed, r);
    rng.set_word_pos(2 * site as u128);
    unit_from_bits(rng.next_u64())
}

/// Potential of realization `r`: independent samples on active sites, zero
/// elsewhere.
pub fn sample_potential(ensemble: &EnsembleSpec, r: u64) -> Result<PotentialField> {
    if r >= ensemble.realizations {
        return Err(Error::RealizationOutOfRange {
            r,
            count: ensemble.realizations,
        });
    }
    ensemble.distribution.validate()?;
    let mask = &ensemble.mask;
    let n = mask.lattice().site_count();
    // Sequential reads hit the same keystream words as `site_uniform`.
    let mut rng = stream(ensemble.seed, r);
    let values = (0..n)
        .map(|s| {
            let u = unit_from_bits(rng.next_u64());
            if mask.is_active(s) {
                ensemble.distribution.quantile(u)
            } else {
                0.0
            }
        })
        .collect();
    PotentialField::new(mask, values)
}

/// `V_a = a * chi_Gamma`.
pub fn constant_potential(mask: &TrimMask, a: f64) -> PotentialField {
    let values = mask
        .as_slice()
        .iter()
        .map(|&on| if on { a } else { 0.0 })
        .collect();
    PotentialField::new(mask, values).expect("constant potential is supported on the mask")
}

/// `V'(x1, x2) = V(x1, x2 - j)` with torus wrap; `j` must be a multiple of
/// the free-direction periods.
pub fn shift_potential(v: &PotentialField, j: &[i64]) -> Result<PotentialField> {
    let b = v.lattice();
    let d1 = b.confined_dims();
    let d2 = b.dim() - d1;
    if j.len() != d2 {
        return Err(Error::InvalidShift(format!(
            "shift has {} components, expected d2 = {}",
            j.len(),
            d2
        )));
    }
    for (i, &ji) in j.iter().enumerate() {
        let p = b.periods()[d1 + i] as i64;
        if ji.rem_euclid(p) != 0 {
            return Err(Error::InvalidShift(format!(
                "component {} = {} is not a multiple of the period {}",
                i + 1,
                ji,
                p
            )));
        }
    }
    let n = b.site_count();
    let mut values = vec![0.0; n];
    let mut support = vec![false; n];
    for s in 0..n {
        let mut c = b.coord(s);
        for (i, &ji) in j.iter().enumerate() {
            let side = b.sides()[d1 + i] as i64;
            c.0[d1 + i] = (c.0[d1 + i] as i64 + ji).rem_euclid(side) as usize;
        }
        let t = b.index(&c)?;
        values[t] = v.value(s);
        support[t] = v.support()[s];
    }
    Ok(PotentialField::from_parts(b.clone(), values, support))
}

/// `V` vanishes off `Gamma` and takes values in the support on `Gamma`.
pub fn is_admissible(v: &PotentialField, dist: &DistributionSpec, mask: &TrimMask) -> bool {
    if v.lattice() != mask.lattice() {
        return false;
    }
    (0..v.values().len()).all(|s| {
        let x = v.value(s);
        if mask.is_active(s) {
            dist.contains(x)
        } else {
            x == 0.0
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{build_periodic_box, build_trim_mask, single_layer_gamma0, GeometrySpec};

    fn mask(w: i64, k: usize) -> TrimMask {
        let spec = GeometrySpec::new(1, 1, vec![2, 2], 0, w, vec![k]).unwrap();
        let b = build_periodic_box(&spec).unwrap();
        build_trim_mask(&b, &single_layer_gamma0(&[2, 2], 1, None).unwrap()).unwrap()
    }

    fn ensemble(m: TrimMask, a: f64, b: f64) -> EnsembleSpec {
        EnsembleSpec {
            seed: 0,
            realizations: 4,
            distribution: DistributionSpec::uniform(a, b).unwrap(),
            mask: m,
        }
    }

    #[test]
    fn golden_uniform_values() {
        // Frozen keystream outputs; changing the generator breaks replay.
        let got: Vec<f64> = (0..4).map(|s| site_uniform(0, 0, s)).collect();
        let expected = [
            0.7090754154265618,
            0.46592172228961015,
            0.6991432426747317,
            0.0601711656341718,
        ];
        assert_eq!(got, expected);
        assert_eq!(site_uniform(7, 3, 11), 0.3730903000262822);
    }

    #[test]
    fn sequential_matches_random_access() {
        let e = ensemble(mask(2, 4), 0.0, 10.0);
        let v = sample_potential(&e, 2).unwrap();
        for s in e.mask.active_sites() {
            assert_eq!(v.value(s), e.distribution.quantile(site_uniform(0, 2, s)));
        }
    }

    #[test]
    fn determinism_and_support() {
        let e = ensemble(mask(2, 4), 0.0, 10.0);
        let v1 = sample_potential(&e, 1).unwrap();
        let v2 = sample_potential(&e, 1).unwrap();
        assert_eq!(v1.values(), v2.values());
        assert_ne!(v1.values(), sample_potential(&e, 0).unwrap().values());
        for s in e.mask.inactive_sites() {
            assert_eq!(v1.value(s), 0.0);
        }
        assert!(matches!(
            sample_potential(&e, 4),
            Err(Error::RealizationOutOfRange { r: 4, count: 4 })
        ));
    }

    #[test]
    fn law_of_large_numbers_and_density() {
        // 2 x 50 periods of 2x2 cells: 10^4 active sites.
        let e = ensemble(mask(100, 50), 0.0, 10.0);
        assert_eq!(e.mask.active_count(), 10_000);
        let v = sample_potential(&e, 0).unwrap();
        let samples: Vec<f64> = e.mask.active_sites().map(|s| v.value(s)).collect();
        let mean = samples.iter().sum::<f64>() / samples.len() as f64;
        assert!((4.8..=5.2).contains(&mean), "mean {mean}");
        let bins = 20;
        let mut hist = vec![0usize; bins];
        for &x in &samples {
            assert!((0.0..=10.0).contains(&x));
            hist[((x / 10.0 * bins as f64) as usize).min(bins - 1)] += 1;
        }
        let width = 10.0 / bins as f64;
        let max_density = *hist.iter().max().unwrap() as f64 / (samples.len() as f64 * width);
        assert!(
            max_density <= 1.2 * e.distribution.rho_max(),
            "{max_density}"
        );
    }

    #[test]
    fn constant_and_admissible() {
        let m = mask(2, 2);
        let d = DistributionSpec::uniform(1.0, 4.0).unwrap();
        assert!(constant_potential(&m, 0.0)
            .values()
            .iter()
            .all(|&x| x == 0.0));
        let v3 = constant_potential(&m, 3.0);
        assert_eq!(m.active_count(), 8);
        assert_eq!(v3.values().iter().sum::<f64>(), 24.0);
        assert!(is_admissible(&v3, &d, &m));
        assert!(is_admissible(&constant_potential(&m, 1.0), &d, &m));
        assert!(!is_admissible(&constant_potential(&m, 5.0), &d, &m));

        let mut vals = v3.values().to_vec();
        vals[m.inactive_sites().next().unwrap()] = 1.0;
        let off = PotentialField::unrestricted(m.lattice(), vals).unwrap();
        assert!(!is_admissible(&off, &d, &m));

        let e = EnsembleSpec {
            seed: 9,
            realizations: 1,
            distribution: d,
            mask: m.clone(),
        };
        assert!(is_admissible(&sample_potential(&e, 0).unwrap(), &d, &m));
    }

    #[test]
    fn distribution_validation() {
        assert!(DistributionSpec::uniform(0.0, 0.0).is_err());
        assert!(DistributionSpec::uniform(1.0, 0.0).is_err());
        let d = DistributionSpec::uniform(0.0, 10.0).unwrap();
        assert!((d.rho_max() * d.width() - 1.0).abs() < 1e-15);
        assert_eq!(
            d.quantile(1.0 - f64::EPSILON / 2.0),
            d.quantile(1.0 - f64::EPSILON / 2.0).min(10.0)
        );
    }

    #[test]
    fn shifts() {
        let e = ensemble(mask(2, 4), 0.0, 10.0);
        let v = sample_potential(&e, 0).unwrap();
        assert_eq!(shift_potential(&v, &[0]).unwrap(), v);
        assert_eq!(shift_potential(&v, &[8]).unwrap().values(), v.values());
        assert_eq!(shift_potential(&v, &[-8]).unwrap().values(), v.values());
        assert!(matches!(
            shift_potential(&v, &[1]),
            Err(Error::InvalidShift(_))
        ));
        assert!(matches!(
            shift_potential(&v, &[2, 2]),
            Err(Error::InvalidShift(_))
        ));
        let s = shift_potential(&v, &[2]).unwrap();
        let b = v.lattice();
        let x = b.index(&[0, 5]).unwrap();
        let y = b.index(&[0, 3]).unwrap();
        assert_eq!(s.value(x), v.value(y));
        assert!(is_admissible(&s, &e.distribution, &e.mask));
    }
}
