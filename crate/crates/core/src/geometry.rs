//! Lattice geometry: unit cells, periodized boxes, trim sets and neighbor maps.
//!
//! A box is the finite computational stand-in for the waveguide
//! `C0 + L_{M1 M2}`: confined directions have `(m2 - m1) * p` sites, free
//! directions are truncated to a torus of `k * p` sites. Coordinates are
//! local to the box (origin shifted by `m1 * p`, which is a lattice vector, so
//! residues mod `p` are unchanged).
//!
//! Sites are numbered lexicographically with direction 1 varying fastest:
//! `index = x_1 + s_1 * (x_2 + s_2 * (x_3 + ...))`.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default cap on the number of sites in a box.
pub const DEFAULT_SITE_CAP: usize = 200_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundaryCondition {
    /// Keep only edges with both endpoints inside the box.
    Simple,
    /// Wrap-around neighbor maps; a side of length 2 yields a doubled edge.
    Periodic,
}

/// Shape parameters of a waveguide box.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySpec {
    pub d1: usize,
    pub d2: usize,
    pub periods: Vec<usize>,
    pub m1: i64,
    pub m2: i64,
    pub k: Vec<usize>,
}

impl GeometrySpec {
    pub fn new(
        d1: usize,
        d2: usize,
        periods: Vec<usize>,
        m1: i64,
        m2: i64,
        k: Vec<usize>,
    ) -> Result<Self> {
        let spec = GeometrySpec {
            d1,
            d2,
            periods,
            m1,
            m2,
            k,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Checks every structural invariant, naming the first one violated.
    pub fn validate(&self) -> Result<()> {
        if self.d1 < 1 {
            return Err(Error::InvalidGeometry("d1 must be >= 1".into()));
        }
        if self.d2 < 1 {
            return Err(Error::InvalidGeometry("d2 must be >= 1".into()));
        }
        if self.periods.len() != self.d() {
            return Err(Error::InvalidGeometry(format!(
                "periods has {} entries, expected d1 + d2 = {}",
                self.periods.len(),
                self.d()
            )));
        }
        if let Some((nu, p)) = self.periods.iter().enumerate().find(|(_, &p)| p < 2) {
            return Err(Error::InvalidGeometry(format!(
                "period p_{} = {} violates p >= 2",
                nu + 1,
                p
            )));
        }
        if self.m2 - self.m1 < 1 {
            return Err(Error::InvalidGeometry(format!(
                "m2 - m1 = {} violates m1 < m2",
                self.m2 - self.m1
            )));
        }
        if self.k.len() != self.d2 {
            return Err(Error::InvalidGeometry(format!(
                "k has {} entries, expected d2 = {}",
                self.k.len(),
                self.d2
            )));
        }
        if let Some((nu, _)) = self.k.iter().enumerate().find(|(_, &k)| k < 1) {
            return Err(Error::InvalidGeometry(format!("k_{} must be >= 1", nu + 1)));
        }
        Ok(())
    }

    pub fn d(&self) -> usize {
        self.d1 + self.d2
    }

    /// Number of periods spanned in each confined direction.
    pub fn width(&self) -> usize {
        (self.m2 - self.m1) as usize
    }

    /// Side lengths in sites, confined directions first.
    pub fn sides(&self) -> Vec<usize> {
        let w = self.width();
        self.periods
            .iter()
            .enumerate()
            .map(|(nu, &p)| {
                if nu < self.d1 {
                    w * p
                } else {
                    self.k[nu - self.d1] * p
                }
            })
            .collect()
    }

    /// Same geometry with every torus truncation multiplied by `factor`.
    pub fn with_k_scaled(&self, factor: usize) -> Self {
        let mut out = self.clone();
        for k in &mut out.k {
            *k *= factor;
        }
        out
    }
}

/// A lattice point, local to the box or cell it belongs to.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SiteCoord(pub Vec<usize>);

impl SiteCoord {
    pub fn dim(&self) -> usize {
        self.0.len()
    }
}

impl std::ops::Deref for SiteCoord {
    type Target = [usize];
    fn deref(&self) -> &[usize] {
        &self.0
    }
}

impl fmt::Display for SiteCoord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

impl From<Vec<usize>> for SiteCoord {
    fn from(v: Vec<usize>) -> Self {
        SiteCoord(v)
    }
}

/// Enumerates the unit cell `{0 <= x_nu <= p_nu - 1}` lexicographically
/// (direction 1 fastest).
pub fn build_unit_cell(periods: &[usize]) -> Result<Vec<SiteCoord>> {
    if periods.is_empty() {
        return Err(Error::InvalidGeometry(
            "unit cell needs at least one direction".into(),
        ));
    }
    if let Some((nu, p)) = periods.iter().enumerate().find(|(_, &p)| p < 2) {
        return Err(Error::InvalidGeometry(format!(
            "period p_{} = {} violates p >= 2",
            nu + 1,
            p
        )));
    }
    let cell = LatticeBox::new(
        periods.to_vec(),
        vec![BoundaryCondition::Periodic; periods.len()],
        periods.to_vec(),
        periods.len(),
    )?;
    Ok((0..cell.site_count()).map(|i| cell.coord(i)).collect())
}

/// Finite rectangular lattice with per-direction boundary conditions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LatticeBox {
    sides: Vec<usize>,
    bcs: Vec<BoundaryCondition>,
    periods: Vec<usize>,
    confined_dims: usize,
    strides: Vec<usize>,
    site_count: usize,
}

impl LatticeBox {
    /// Generic constructor. `periods` are only used to reduce coordinates to
    /// the unit cell; `confined_dims` counts the leading confined directions.
    pub fn new(
        sides: Vec<usize>,
        bcs: Vec<BoundaryCondition>,
        periods: Vec<usize>,
        confined_dims: usize,
    ) -> Result<Self> {
        Self::with_cap(sides, bcs, periods, confined_dims, DEFAULT_SITE_CAP)
    }

    pub fn with_cap(
        sides: Vec<usize>,
        bcs: Vec<BoundaryCondition>,
        periods: Vec<usize>,
        confined_dims: usize,
        cap: usize,
    ) -> Result<Self> {
        let d = sides.len();
        if d == 0 || bcs.len() != d || periods.len() != d || confined_dims > d {
            return Err(Error::InvalidGeometry(format!(
                "inconsistent box description: {} sides, {} bcs, {} periods, {} confined",
                d,
                bcs.len(),
                periods.len(),
                confined_dims
            )));
        }
        for nu in 0..d {
            if sides[nu] < 1 {
                return Err(Error::InvalidGeometry(format!("side {} is empty", nu + 1)));
            }
            if bcs[nu] == BoundaryCondition::Periodic && sides[nu] < 2 {
                return Err(Error::InvalidGeometry(format!(
                    "periodic direction {} needs at least 2 sites",
                    nu + 1
                )));
            }
            if periods[nu] < 1 {
                return Err(Error::InvalidGeometry(format!("period {} is zero", nu + 1)));
            }
        }
        let mut strides = Vec::with_capacity(d);
        let mut count: usize = 1;
        for &s in &sides {
            strides.push(count);
            count = count
                .checked_mul(s)
                .filter(|&c| c <= cap)
                .ok_or(Error::SizeCap {
                    what: "site_count",
                    size: sides.iter().fold(1usize, |a, &s| a.saturating_mul(s)),
                    cap,
                })?;
        }
        Ok(LatticeBox {
            sides,
            bcs,
            periods,
            confined_dims,
            strides,
            site_count: count,
        })
    }

    pub fn dim(&self) -> usize {
        self.sides.len()
    }

    pub fn sides(&self) -> &[usize] {
        &self.sides
    }

    pub fn bcs(&self) -> &[BoundaryCondition] {
        &self.bcs
    }

    pub fn periods(&self) -> &[usize] {
        &self.periods
    }

    pub fn confined_dims(&self) -> usize {
        self.confined_dims
    }

    pub fn site_count(&self) -> usize {
        self.site_count
    }

    pub fn is_fully_periodic(&self) -> bool {
        self.bcs.iter().all(|&b| b == BoundaryCondition::Periodic)
    }

    pub fn index(&self, coord: &[usize]) -> Result<usize> {
        if coord.len() != self.dim() {
            return Err(Error::Mismatch(format!(
                "coordinate has {} components, box has dimension {}",
                coord.len(),
                self.dim()
            )));
        }
        let mut idx = 0;
        for nu in 0..self.dim() {
            if coord[nu] >= self.sides[nu] {
                return Err(Error::InvalidGeometry(format!(
                    "coordinate {} out of range in direction {}",
                    coord[nu],
                    nu + 1
                )));
            }
            idx += coord[nu] * self.strides[nu];
        }
        Ok(idx)
    }

    pub fn coord(&self, index: usize) -> SiteCoord {
        debug_assert!(index < self.site_count);
        let mut rem = index;
        let coords = self
            .sides
            .iter()
            .map(|&s| {
                let c = rem % s;
                rem /= s;
                c
            })
            .collect();
        SiteCoord(coords)
    }

    /// Coordinate of `index` along direction `nu` without allocating.
    #[inline]
    pub fn coord_along(&self, index: usize, nu: usize) -> usize {
        (index / self.strides[nu]) % self.sides[nu]
    }

    /// Residue class of a site in the unit cell.
    pub fn residue(&self, index: usize) -> SiteCoord {
        SiteCoord(
            (0..self.dim())
                .map(|nu| self.coord_along(index, nu) % self.periods[nu])
                .collect(),
        )
    }

    fn check_site(&self, site: usize) -> Result<()> {
        if site >= self.site_count {
            return Err(Error::SiteOutOfRange {
                index: site,
                site_count: self.site_count,
            });
        }
        Ok(())
    }

    /// Nearest neighbors of `site` along direction `nu`, as a multiset.
    ///
    /// Periodic directions always return two entries (`N+ x`, `N- x`), which
    /// coincide when the side has length 2. Simple directions return the
    /// in-box neighbors only.
    pub fn neighbors(&self, site: usize, nu: usize) -> Result<Vec<usize>> {
        self.check_site(site)?;
        if nu >= self.dim() {
            return Err(Error::InvalidGeometry(format!(
                "direction {} out of range",
                nu + 1
            )));
        }
        let mut out = Vec::with_capacity(2);
        self.for_each_neighbor(site, nu, |j| out.push(j));
        Ok(out)
    }

    #[inline]
    pub(crate) fn for_each_neighbor(&self, site: usize, nu: usize, mut f: impl FnMut(usize)) {
        let side = self.sides[nu];
        let stride = self.strides[nu];
        let c = (site / stride) % side;
        let base = site - c * stride;
        match self.bcs[nu] {
            BoundaryCondition::Periodic => {
                let up = if c + 1 < side { c + 1 } else { 0 };
                let down = if c > 0 { c - 1 } else { side - 1 };
                f(base + up * stride);
                f(base + down * stride);
            }
            BoundaryCondition::Simple => {
                if c + 1 < side {
                    f(base + (c + 1) * stride);
                }
                if c > 0 {
                    f(base + (c - 1) * stride);
                }
            }
        }
    }

    /// l1 distance with minimum-image wrap in periodic directions.
    pub fn torus_distance(&self, x: usize, y: usize) -> Result<usize> {
        self.check_site(x)?;
        self.check_site(y)?;
        Ok((0..self.dim())
            .map(|nu| {
                let a = self.coord_along(x, nu);
                let b = self.coord_along(y, nu);
                let diff = a.abs_diff(b);
                match self.bcs[nu] {
                    BoundaryCondition::Periodic => diff.min(self.sides[nu] - diff),
                    BoundaryCondition::Simple => diff,
                }
            })
            .sum())
    }

    /// Largest `torus_distance` from `x` to any site of the box.
    pub fn max_distance_from(&self, x: usize) -> Result<usize> {
        self.check_site(x)?;
        Ok((0..self.dim())
            .map(|nu| {
                let side = self.sides[nu];
                match self.bcs[nu] {
                    BoundaryCondition::Periodic => side / 2,
                    BoundaryCondition::Simple => {
                        let c = self.coord_along(x, nu);
                        c.max(side - 1 - c)
                    }
                }
            })
            .sum())
    }
}

/// Builds the box for `spec` with the given boundary condition per direction.
pub fn build_box(spec: &GeometrySpec, bcs: &[BoundaryCondition]) -> Result<LatticeBox> {
    build_box_capped(spec, bcs, DEFAULT_SITE_CAP)
}

pub fn build_box_capped(
    spec: &GeometrySpec,
    bcs: &[BoundaryCondition],
    cap: usize,
) -> Result<LatticeBox> {
    spec.validate()?;
    if bcs.len() != spec.d() {
        return Err(Error::InvalidGeometry(format!(
            "{} boundary conditions given for d = {}",
            bcs.len(),
            spec.d()
        )));
    }
    LatticeBox::with_cap(
        spec.sides(),
        bcs.to_vec(),
        spec.periods.clone(),
        spec.d1,
        cap,
    )
}

/// Box with periodic boundary conditions in every direction.
pub fn build_periodic_box(spec: &GeometrySpec) -> Result<LatticeBox> {
    build_box(spec, &vec![BoundaryCondition::Periodic; spec.d()])
}

/// Characteristic function of the active set on a box.
#[derive(Debug, Clone, PartialEq)]
pub struct TrimMask {
    lattice: LatticeBox,
    active: Vec<bool>,
}

impl TrimMask {
    /// Wraps a raw per-site mask without periodicity checks.
    pub fn from_raw(lattice: LatticeBox, active: Vec<bool>) -> Result<Self> {
        if active.len() != lattice.site_count() {
            return Err(Error::Mismatch(format!(
                "mask has {} entries, box has {} sites",
                active.len(),
                lattice.site_count()
            )));
        }
        Ok(TrimMask { lattice, active })
    }

    pub fn lattice(&self) -> &LatticeBox {
        &self.lattice
    }

    pub fn is_active(&self, site: usize) -> bool {
        self.active[site]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.active
    }

    pub fn active_count(&self) -> usize {
        self.active.iter().filter(|&&a| a).count()
    }

    pub fn active_sites(&self) -> impl Iterator<Item = usize> + '_ {
        self.active
            .iter()
            .enumerate()
            .filter(|(_, &a)| a)
            .map(|(i, _)| i)
    }

    pub fn inactive_sites(&self) -> impl Iterator<Item = usize> + '_ {
        self.active
            .iter()
            .enumerate()
            .filter(|(_, &a)| !a)
            .map(|(i, _)| i)
    }

    pub fn complement(&self) -> TrimMask {
        TrimMask {
            lattice: self.lattice.clone(),
            active: self.active.iter().map(|a| !a).collect(),
        }
    }

    pub fn is_empty(&self) -> bool {
        !self.active.iter().any(|&a| a)
    }

    pub fn is_full(&self) -> bool {
        self.active.iter().all(|&a| a)
    }

    /// Every active site has a confined coordinate divisible by its period,
    /// i.e. the set lies in `G0 x Z^d2`.
    pub fn is_single_layer(&self) -> bool {
        let b = &self.lattice;
        self.active_sites()
            .all(|s| (0..b.confined_dims()).any(|nu| b.coord_along(s, nu) % b.periods()[nu] == 0))
    }

    /// Mask value depends only on the confined coordinates.
    pub fn is_product_form(&self) -> bool {
        let b = &self.lattice;
        let confined_block: usize = b.sides()[..b.confined_dims()].iter().product();
        (0..b.site_count()).all(|s| self.active[s] == self.active[s % confined_block])
    }
}

/// `Gamma = Gamma0 + L`: a site is active iff its residue lies in `gamma0`.
pub fn build_trim_mask(lattice: &LatticeBox, gamma0: &[SiteCoord]) -> Result<TrimMask> {
    let cell = build_unit_cell(lattice.periods())?;
    if gamma0.is_empty() {
        return Err(Error::InvalidTrim("gamma0 is empty".into()));
    }
    let cell_box = LatticeBox::new(
        lattice.periods().to_vec(),
        vec![BoundaryCondition::Simple; lattice.dim()],
        lattice.periods().to_vec(),
        lattice.confined_dims(),
    )?;
    let mut in_cell = vec![false; cell.len()];
    for c in gamma0 {
        let idx = cell_box.index(c).map_err(|_| {
            Error::InvalidTrim(format!("gamma0 site {c} lies outside the unit cell"))
        })?;
        in_cell[idx] = true;
    }
    if in_cell.iter().all(|&a| a) {
        return Err(Error::InvalidTrim(
            "gamma0 equals the whole unit cell".into(),
        ));
    }
    let active = (0..lattice.site_count())
        .map(|s| {
            let r = lattice.residue(s);
            in_cell[cell_box.index(&r).expect("residue in cell")]
        })
        .collect();
    Ok(TrimMask {
        lattice: lattice.clone(),
        active,
    })
}

/// Sites of the unit cell with some confined coordinate equal to 0,
/// optionally intersected with `subset`.
pub fn single_layer_gamma0(
    periods: &[usize],
    d1: usize,
    subset: Option<&[SiteCoord]>,
) -> Result<Vec<SiteCoord>> {
    if d1 < 1 || d1 > periods.len() {
        return Err(Error::InvalidGeometry(format!("d1 = {d1} out of range")));
    }
    let cell = build_unit_cell(periods)?;
    Ok(cell
        .into_iter()
        .filter(|x| x[..d1].iter().any(|&c| c == 0))
        .filter(|x| subset.map_or(true, |s| s.contains(x)))
        .collect())
}

/// The hyperplane `x_nu = 0` of the unit cell.
pub fn hyperplane_gamma0(periods: &[usize], nu: usize) -> Result<Vec<SiteCoord>> {
    if nu >= periods.len() {
        return Err(Error::InvalidGeometry(format!(
            "direction {} out of range",
            nu + 1
        )));
    }
    Ok(build_unit_cell(periods)?
        .into_iter()
        .filter(|x| x[nu] == 0)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ring(n: usize) -> LatticeBox {
        LatticeBox::new(vec![n], vec![BoundaryCondition::Periodic], vec![n], 1).unwrap()
    }

    fn path(n: usize) -> LatticeBox {
        LatticeBox::new(vec![n], vec![BoundaryCondition::Simple], vec![n], 1).unwrap()
    }

    #[test]
    fn unit_cell_enumeration() {
        assert_eq!(
            build_unit_cell(&[2]).unwrap(),
            vec![SiteCoord(vec![0]), SiteCoord(vec![1])]
        );
        assert_eq!(build_unit_cell(&[2, 3]).unwrap().len(), 6);
        let c = build_unit_cell(&[3, 3]).unwrap();
        assert_eq!(c.len(), 9);
        assert_eq!(c[0], SiteCoord(vec![0, 0]));
        assert_eq!(c[1], SiteCoord(vec![1, 0]));
        assert_eq!(c[8], SiteCoord(vec![2, 2]));
        assert!(matches!(
            build_unit_cell(&[2, 1]),
            Err(Error::InvalidGeometry(_))
        ));
    }

    #[test]
    fn box_sizes() {
        let s = GeometrySpec::new(1, 1, vec![2, 2], 0, 2, vec![4]).unwrap();
        let b = build_periodic_box(&s).unwrap();
        assert_eq!(b.sides(), &[4, 8]);
        assert_eq!(b.site_count(), 32);

        let s = GeometrySpec::new(1, 1, vec![2, 2], 0, 1, vec![1]).unwrap();
        assert_eq!(build_periodic_box(&s).unwrap().site_count(), 4);

        let s = GeometrySpec::new(2, 1, vec![2, 2, 2], 0, 2, vec![2]).unwrap();
        let b = build_periodic_box(&s).unwrap();
        assert_eq!(b.sides(), &[4, 4, 4]);
        assert_eq!(b.site_count(), 64);
    }

    #[test]
    fn spec_validation_names_invariant() {
        let e = GeometrySpec::new(1, 1, vec![1, 2], 0, 1, vec![1]).unwrap_err();
        assert!(e.to_string().contains("p >= 2"), "{e}");
        let e = GeometrySpec::new(1, 1, vec![2, 2], 1, 1, vec![1]).unwrap_err();
        assert!(e.to_string().contains("m1 < m2"), "{e}");
        assert!(GeometrySpec::new(0, 1, vec![2], 0, 1, vec![1]).is_err());
        assert!(GeometrySpec::new(1, 1, vec![2, 2], 0, 1, vec![0]).is_err());
    }

    #[test]
    fn size_cap() {
        let s = GeometrySpec::new(1, 1, vec![2, 2], 0, 10, vec![10]).unwrap();
        let e = build_box_capped(&s, &[BoundaryCondition::Periodic; 2], 100).unwrap_err();
        assert!(matches!(
            e,
            Error::SizeCap {
                size: 400,
                cap: 100,
                ..
            }
        ));
    }

    #[test]
    fn trim_masks() {
        let s = GeometrySpec::new(1, 1, vec![2, 2], 0, 2, vec![2]).unwrap();
        let b = build_periodic_box(&s).unwrap();
        let g0 = vec![SiteCoord(vec![0, 0]), SiteCoord(vec![0, 1])];
        let m = build_trim_mask(&b, &g0).unwrap();
        assert_eq!(m.active_count(), 8);
        for s in m.active_sites() {
            assert_eq!(b.coord_along(s, 0) % 2, 0);
        }
        assert!(m.is_single_layer());
        assert!(m.is_product_form());

        let s = GeometrySpec::new(1, 1, vec![2, 2], 0, 1, vec![1]).unwrap();
        let b = build_periodic_box(&s).unwrap();
        let m = build_trim_mask(&b, &[SiteCoord(vec![1, 1])]).unwrap();
        assert_eq!(m.active_count(), 1);
        assert!(!m.is_product_form());

        let full = build_unit_cell(&[2, 2]).unwrap();
        assert!(matches!(
            build_trim_mask(&b, &full),
            Err(Error::InvalidTrim(_))
        ));
        assert!(matches!(
            build_trim_mask(&b, &[]),
            Err(Error::InvalidTrim(_))
        ));
        assert!(build_trim_mask(&b, &[SiteCoord(vec![2, 0])]).is_err());
    }

    #[test]
    fn single_layer_sets() {
        let g = single_layer_gamma0(&[2, 2], 1, None).unwrap();
        assert_eq!(g, vec![SiteCoord(vec![0, 0]), SiteCoord(vec![0, 1])]);
        assert_eq!(single_layer_gamma0(&[2, 2, 2], 2, None).unwrap().len(), 6);
        let g = single_layer_gamma0(&[3, 2], 1, None).unwrap();
        assert_eq!(g, vec![SiteCoord(vec![0, 0]), SiteCoord(vec![0, 1])]);
        let sub = [SiteCoord(vec![0, 1]), SiteCoord(vec![1, 1])];
        assert_eq!(
            single_layer_gamma0(&[3, 2], 1, Some(&sub)).unwrap(),
            vec![SiteCoord(vec![0, 1])]
        );
        assert_eq!(hyperplane_gamma0(&[2, 2, 2], 1).unwrap().len(), 4);
    }

    #[test]
    fn neighbor_examples() {
        assert_eq!(path(3).neighbors(0, 0).unwrap(), vec![1]);
        let mut n = ring(4).neighbors(0, 0).unwrap();
        n.sort();
        assert_eq!(n, vec![1, 3]);
        assert_eq!(ring(2).neighbors(0, 0).unwrap(), vec![1, 1]);
        assert!(matches!(
            ring(4).neighbors(4, 0),
            Err(Error::SiteOutOfRange { .. })
        ));
    }

    #[test]
    fn distance_examples() {
        assert_eq!(ring(8).torus_distance(0, 7).unwrap(), 1);
        assert_eq!(path(8).torus_distance(0, 7).unwrap(), 7);
        let t = LatticeBox::new(
            vec![4, 4],
            vec![BoundaryCondition::Periodic; 2],
            vec![2, 2],
            1,
        )
        .unwrap();
        let y = t.index(&[3, 3]).unwrap();
        assert_eq!(t.torus_distance(0, y).unwrap(), 2);
        assert_eq!(t.max_distance_from(0).unwrap(), 4);
        assert_eq!(path(8).max_distance_from(2).unwrap(), 5);
    }

    fn arb_box() -> impl Strategy<Value = LatticeBox> {
        (1usize..=3)
            .prop_flat_map(|d| {
                (
                    prop::collection::vec(2usize..=5, d),
                    prop::collection::vec(any::<bool>(), d),
                )
            })
            .prop_map(|(sides, per)| {
                let d = sides.len();
                let bcs = per
                    .into_iter()
                    .map(|p| {
                        if p {
                            BoundaryCondition::Periodic
                        } else {
                            BoundaryCondition::Simple
                        }
                    })
                    .collect();
                LatticeBox::new(sides, bcs, vec![2; d], 1).unwrap()
            })
    }

    proptest! {
        #[test]
        fn index_bijection(b in arb_box()) {
            for i in 0..b.site_count() {
                prop_assert_eq!(b.index(&b.coord(i)).unwrap(), i);
            }
        }

        #[test]
        fn neighbor_symmetry_and_count(b in arb_box()) {
            for x in 0..b.site_count() {
                let mut slots = 0;
                for nu in 0..b.dim() {
                    let nx = b.neighbors(x, nu).unwrap();
                    slots += nx.len();
                    for &y in &nx {
                        let mult_xy = nx.iter().filter(|&&z| z == y).count();
                        let ny = b.neighbors(y, nu).unwrap();
                        let mult_yx = ny.iter().filter(|&&z| z == x).count();
                        prop_assert_eq!(mult_xy, mult_yx);
                    }
                }
                if b.is_fully_periodic() {
                    prop_assert_eq!(slots, 2 * b.dim());
                } else {
                    prop_assert!(slots <= 2 * b.dim());
                }
            }
        }

        #[test]
        fn trim_periodicity(k in 1usize..4, w in 1i64..4, mask_bits in 1u8..15) {
            let spec = GeometrySpec::new(1, 1, vec![2, 2], 0, w, vec![k]).unwrap();
            let b = build_periodic_box(&spec).unwrap();
            let cell = build_unit_cell(&[2, 2]).unwrap();
            let g0: Vec<_> = cell.into_iter().enumerate()
                .filter(|(i, _)| mask_bits >> i & 1 == 1).map(|(_, c)| c).collect();
            let m = build_trim_mask(&b, &g0).unwrap();
            for s in 0..b.site_count() {
                let c = b.coord(s);
                for nu in 0..2 {
                    if c[nu] + 2 < b.sides()[nu] {
                        let mut shifted = c.0.clone();
                        shifted[nu] += 2;
                        let t = b.index(&shifted).unwrap();
                        prop_assert_eq!(m.is_active(s), m.is_active(t));
                    }
                }
            }
        }
    }
}
