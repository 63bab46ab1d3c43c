//! Operator assembly: the free hopping operator, potentials, restrictions with
//! simple boundary conditions, the Gamma / Gamma^c block split, and the tensor
//! factors of a constant trimmed potential.

use std::fmt::Write as _;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::geometry::{LatticeBox, TrimMask};

/// Real symmetric sparse matrix. Off-diagonal entries are edge
/// multiplicities (1, or 2 on periodic sides of length 2); the diagonal holds
/// the potential.
#[derive(Debug, Clone, PartialEq)]
pub struct SymOperator {
    diag: Vec<f64>,
    // Off-diagonal part, row-wise, sorted by column. Stored on both triangles.
    rows: Vec<Vec<(usize, f64)>>,
}

impl SymOperator {
    pub fn zeros(n: usize) -> Self {
        SymOperator {
            diag: vec![0.0; n],
            rows: vec![Vec::new(); n],
        }
    }

    /// Builds an operator from an explicit symmetric entry list. Entries with
    /// the same position are summed; both triangles must be listed.
    pub fn from_entries(n: usize, entries: &[(usize, usize, f64)]) -> Result<Self> {
        let mut op = SymOperator::zeros(n);
        for &(i, j, v) in entries {
            if i >= n || j >= n {
                return Err(Error::Mismatch(format!("entry ({i},{j}) outside {n}x{n}")));
            }
            if i == j {
                op.diag[i] += v;
            } else {
                op.rows[i].push((j, v));
            }
        }
        op.canonicalize();
        for i in 0..n {
            for &(j, v) in &op.rows[i] {
                if op.entry(j, i) != v {
                    return Err(Error::Mismatch(format!(
                        "entries ({i},{j}) and ({j},{i}) differ"
                    )));
                }
            }
        }
        Ok(op)
    }

    fn canonicalize(&mut self) {
        for row in &mut self.rows {
            row.sort_by_key(|&(j, _)| j);
            let mut merged: Vec<(usize, f64)> = Vec::with_capacity(row.len());
            for &(j, v) in row.iter() {
                match merged.last_mut() {
                    Some(last) if last.0 == j => last.1 += v,
                    _ => merged.push((j, v)),
                }
            }
            *row = merged;
        }
    }

    pub fn dim(&self) -> usize {
        self.diag.len()
    }

    pub fn diagonal(&self) -> &[f64] {
        &self.diag
    }

    pub fn off_diagonal(&self, i: usize) -> &[(usize, f64)] {
        &self.rows[i]
    }

    pub fn entry(&self, i: usize, j: usize) -> f64 {
        if i == j {
            return self.diag[i];
        }
        match self.rows[i].binary_search_by_key(&j, |&(c, _)| c) {
            Ok(pos) => self.rows[i][pos].1,
            Err(_) => 0.0,
        }
    }

    /// Same hopping, new diagonal.
    pub fn with_diagonal(&self, diag: Vec<f64>) -> Result<Self> {
        if diag.len() != self.dim() {
            return Err(Error::Mismatch(format!(
                "diagonal has {} entries, operator has dimension {}",
                diag.len(),
                self.dim()
            )));
        }
        Ok(SymOperator {
            diag,
            rows: self.rows.clone(),
        })
    }

    /// Adds `shift` to a single diagonal entry.
    pub fn shift_site(&mut self, site: usize, shift: f64) {
        self.diag[site] += shift;
    }

    /// Upper bound on the spectral norm (max absolute row sum).
    pub fn norm_bound(&self) -> f64 {
        (0..self.dim())
            .map(|i| self.diag[i].abs() + self.rows[i].iter().map(|(_, v)| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    /// Gershgorin enclosure of the spectrum.
    pub fn gershgorin_bounds(&self) -> (f64, f64) {
        let mut lo = f64::INFINITY;
        let mut hi = f64::NEG_INFINITY;
        for i in 0..self.dim() {
            let r: f64 = self.rows[i].iter().map(|(_, v)| v.abs()).sum();
            lo = lo.min(self.diag[i] - r);
            hi = hi.max(self.diag[i] + r);
        }
        (lo, hi)
    }

    pub fn matvec(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim(), "matvec dimension mismatch");
        (0..self.dim())
            .map(|i| self.diag[i] * x[i] + self.rows[i].iter().map(|&(j, v)| v * x[j]).sum::<f64>())
            .collect()
    }

    pub fn matvec_complex(&self, x: &[Complex64]) -> Vec<Complex64> {
        assert_eq!(x.len(), self.dim(), "matvec dimension mismatch");
        (0..self.dim())
            .map(|i| {
                self.rows[i]
                    .iter()
                    .fold(x[i] * self.diag[i], |acc, &(j, v)| acc + x[j] * v)
            })
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.dim();
        let mut m = DMatrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = self.diag[i];
            for &(j, v) in &self.rows[i] {
                m[(i, j)] = v;
            }
        }
        m
    }

    /// Principal submatrix on `sites`, in the given order. Values are copied.
    pub fn principal_submatrix(&self, sites: &[usize]) -> SymOperator {
        let mut local = vec![usize::MAX; self.dim()];
        for (k, &s) in sites.iter().enumerate() {
            local[s] = k;
        }
        let diag = sites.iter().map(|&s| self.diag[s]).collect();
        let rows = sites
            .iter()
            .map(|&s| {
                let mut row: Vec<(usize, f64)> = self.rows[s]
                    .iter()
                    .filter(|&&(j, _)| local[j] != usize::MAX)
                    .map(|&(j, v)| (local[j], v))
                    .collect();
                row.sort_by_key(|&(j, _)| j);
                row
            })
            .collect();
        SymOperator { diag, rows }
    }

    /// Coordinate-list dump: one `i j value` line per stored nonzero, sorted
    /// by `(i, j)`.
    pub fn to_coo_text(&self) -> String {
        let mut out = String::new();
        for i in 0..self.dim() {
            let mut wrote_diag = self.diag[i] == 0.0;
            for &(j, v) in &self.rows[i] {
                if !wrote_diag && j > i {
                    writeln!(out, "{i} {i} {}", self.diag[i]).unwrap();
                    wrote_diag = true;
                }
                writeln!(out, "{i} {j} {v}").unwrap();
            }
            if !wrote_diag {
                writeln!(out, "{i} {i} {}", self.diag[i]).unwrap();
            }
        }
        out
    }
}

/// Real potential on a box, declared on a support set.
#[derive(Debug, Clone, PartialEq)]
pub struct PotentialField {
    lattice: LatticeBox,
    values: Vec<f64>,
    support: Vec<bool>,
}

impl PotentialField {
    /// Potential supported on `mask`; values off the mask must be zero.
    pub fn new(mask: &TrimMask, values: Vec<f64>) -> Result<Self> {
        let lattice = mask.lattice().clone();
        if values.len() != lattice.site_count() {
            return Err(Error::Mismatch(format!(
                "potential has {} values, box has {} sites",
                values.len(),
                lattice.site_count()
            )));
        }
        if let Some(s) = mask.inactive_sites().find(|&s| values[s] != 0.0) {
            return Err(Error::Support(format!(
                "potential nonzero at inactive site {s}"
            )));
        }
        Ok(PotentialField {
            lattice,
            values,
            support: mask.as_slice().to_vec(),
        })
    }

    /// Potential with no support restriction (every site may be nonzero).
    pub fn unrestricted(lattice: &LatticeBox, values: Vec<f64>) -> Result<Self> {
        if values.len() != lattice.site_count() {
            return Err(Error::Mismatch(format!(
                "potential has {} values, box has {} sites",
                values.len(),
                lattice.site_count()
            )));
        }
        let n = values.len();
        Ok(PotentialField {
            lattice: lattice.clone(),
            values,
            support: vec![true; n],
        })
    }

    pub fn zero(lattice: &LatticeBox) -> Self {
        let n = lattice.site_count();
        PotentialField {
            lattice: lattice.clone(),
            values: vec![0.0; n],
            support: vec![false; n],
        }
    }

    pub fn lattice(&self) -> &LatticeBox {
        &self.lattice
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, site: usize) -> f64 {
        self.values[site]
    }

    pub fn support(&self) -> &[bool] {
        &self.support
    }

    pub(crate) fn from_parts(lattice: LatticeBox, values: Vec<f64>, support: Vec<bool>) -> Self {
        PotentialField {
            lattice,
            values,
            support,
        }
    }

    /// `site_index,value` CSV with header.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("site_index,value\n");
        for (i, v) in self.values.iter().enumerate() {
            writeln!(out, "{i},{v}").unwrap();
        }
        out
    }
}

/// Free hopping operator `H0` on the box, following its boundary conditions.
pub fn assemble_h0(lattice: &LatticeBox) -> SymOperator {
    let n = lattice.site_count();
    let mut op = SymOperator::zeros(n);
    for s in 0..n {
        let row = &mut op.rows[s];
        for nu in 0..lattice.dim() {
            lattice.for_each_neighbor(s, nu, |j| row.push((j, 1.0)));
        }
    }
    op.canonicalize();
    op
}

/// `H = H0 + V`.
pub fn assemble_h(lattice: &LatticeBox, potential: &PotentialField) -> Result<SymOperator> {
    if potential.lattice() != lattice {
        return Err(Error::Mismatch("potential lives on a different box".into()));
    }
    let mut op = assemble_h0(lattice);
    op.diag.copy_from_slice(potential.values());
    Ok(op)
}

/// `H0` restricted to `subset` with simple boundary conditions: only edges of
/// the parent box with both endpoints in the subset survive. Rows follow
/// increasing site index.
pub fn restrict_simple(lattice: &LatticeBox, subset: &TrimMask) -> Result<SymOperator> {
    if subset.lattice() != lattice {
        return Err(Error::Mismatch(
            "subset mask lives on a different box".into(),
        ));
    }
    let sites: Vec<usize> = subset.active_sites().collect();
    if sites.is_empty() {
        return Err(Error::InvalidRestriction("subset is empty".into()));
    }
    Ok(assemble_h0(lattice).principal_submatrix(&sites))
}

/// Rectangular coupling block `T : l2(Lambda_2) -> l2(Lambda_1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinkMatrix {
    pub rows: usize,
    pub cols: usize,
    /// `(row, col, value)`, sorted by `(row, col)`.
    pub entries: Vec<(usize, usize, f64)>,
}

impl LinkMatrix {
    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.rows, self.cols);
        for &(i, j, v) in &self.entries {
            m[(i, j)] = v;
        }
        m
    }

    /// Largest singular value.
    pub fn norm(&self) -> f64 {
        if self.rows == 0 || self.cols == 0 {
            return 0.0;
        }
        self.to_dense().singular_values().max()
    }

    /// Largest total weight in a single column.
    pub fn max_column_weight(&self) -> f64 {
        let mut w = vec![0.0; self.cols];
        for &(_, j, v) in &self.entries {
            w[j] += v.abs();
        }
        w.into_iter().fold(0.0, f64::max)
    }
}

/// `H = [[H1, T], [T^t, H2]]` with `Lambda_1 = Gamma^c`, `Lambda_2 = Gamma`.
#[derive(Debug, Clone)]
pub struct BlockSplit {
    pub h1: SymOperator,
    pub h2: SymOperator,
    pub link: LinkMatrix,
    /// Parent indices of `Lambda_1`, increasing.
    pub outer_sites: Vec<usize>,
    /// Parent indices of `Lambda_2`, increasing.
    pub active_sites: Vec<usize>,
}

impl BlockSplit {
    /// New index -> parent index for the `[Lambda_1, Lambda_2]` ordering.
    pub fn permutation(&self) -> Vec<usize> {
        self.outer_sites
            .iter()
            .chain(&self.active_sites)
            .copied()
            .collect()
    }

    /// Reassembles the block matrix in the permuted order.
    pub fn reassemble(&self) -> SymOperator {
        let n1 = self.h1.dim();
        let n = n1 + self.h2.dim();
        let mut diag = Vec::with_capacity(n);
        diag.extend_from_slice(&self.h1.diag);
        diag.extend_from_slice(&self.h2.diag);
        let mut rows: Vec<Vec<(usize, f64)>> = Vec::with_capacity(n);
        rows.extend(self.h1.rows.iter().cloned());
        rows.extend(
            self.h2
                .rows
                .iter()
                .map(|r| r.iter().map(|&(j, v)| (j + n1, v)).collect()),
        );
        for &(i, j, v) in &self.link.entries {
            rows[i].push((j + n1, v));
            rows[j + n1].push((i, v));
        }
        let mut op = SymOperator { diag, rows };
        op.canonicalize();
        op
    }
}

/// Splits `h` along the trim mask.
pub fn block_split(h: &SymOperator, mask: &TrimMask) -> Result<BlockSplit> {
    if h.dim() != mask.lattice().site_count() {
        return Err(Error::Mismatch(format!(
            "operator dimension {} does not match box with {} sites",
            h.dim(),
            mask.lattice().site_count()
        )));
    }
    if mask.is_empty() || mask.is_full() {
        return Err(Error::InvalidTrim(
            "block split needs a mask that is neither empty nor full".into(),
        ));
    }
    let outer_sites: Vec<usize> = mask.inactive_sites().collect();
    let active_sites: Vec<usize> = mask.active_sites().collect();
    let mut col_of = vec![usize::MAX; h.dim()];
    for (k, &s) in active_sites.iter().enumerate() {
        col_of[s] = k;
    }
    let mut entries = Vec::new();
    for (i, &s) in outer_sites.iter().enumerate() {
        for &(j, v) in h.off_diagonal(s) {
            if col_of[j] != usize::MAX {
                entries.push((i, col_of[j], v));
            }
        }
    }
    entries.sort_by_key(|&(i, j, _)| (i, j));
    Ok(BlockSplit {
        h1: h.principal_submatrix(&outer_sites),
        h2: h.principal_submatrix(&active_sites),
        link: LinkMatrix {
            rows: outer_sites.len(),
            cols: active_sites.len(),
            entries,
        },
        outer_sites,
        active_sites,
    })
}

/// Factors `H_a = H1_a (x) 1 + 1 (x) H0^(2)` for a product-form trim mask.
///
/// The confined factor lives on the confined sides of the box with its
/// boundary conditions and carries `a` on the confined slice `G`; the free
/// factor is the hopping operator on the free torus.
pub fn tensor_factors(mask: &TrimMask, a: f64) -> Result<(SymOperator, SymOperator)> {
    let b = mask.lattice();
    if !mask.is_product_form() {
        return Err(Error::NotSeparable);
    }
    let d1 = b.confined_dims();
    if d1 == 0 || d1 == b.dim() {
        return Err(Error::NotSeparable);
    }
    let confined = LatticeBox::new(
        b.sides()[..d1].to_vec(),
        b.bcs()[..d1].to_vec(),
        b.periods()[..d1].to_vec(),
        d1,
    )?;
    let free = LatticeBox::new(
        b.sides()[d1..].to_vec(),
        b.bcs()[d1..].to_vec(),
        b.periods()[d1..].to_vec(),
        0,
    )?;
    let mut h1 = assemble_h0(&confined);
    // The first `confined.site_count()` box sites have zero free coordinates
    // and share their index with the confined factor.
    for s in 0..confined.site_count() {
        if mask.is_active(s) {
            h1.diag[s] = a;
        }
    }
    Ok((h1, assemble_h0(&free)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{
        build_periodic_box, build_trim_mask, single_layer_gamma0, BoundaryCondition, GeometrySpec,
    };
    use proptest::prelude::*;

    fn sorted_eigs(op: &SymOperator) -> Vec<f64> {
        let mut e: Vec<f64> = op
            .to_dense()
            .symmetric_eigenvalues()
            .iter()
            .copied()
            .collect();
        e.sort_by(f64::total_cmp);
        e
    }

    fn line(n: usize, bc: BoundaryCondition) -> LatticeBox {
        LatticeBox::new(vec![n], vec![bc], vec![n.max(1)], 1).unwrap()
    }

    fn assert_close(a: &[f64], b: &[f64], tol: f64) {
        assert_eq!(a.len(), b.len());
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= tol, "{a:?} vs {b:?}");
        }
    }

    #[test]
    fn h0_small_cases() {
        let single = line(1, BoundaryCondition::Simple);
        assert_eq!(
            assemble_h0(&single).to_dense(),
            DMatrix::from_element(1, 1, 0.0)
        );

        let p2 = assemble_h0(&line(2, BoundaryCondition::Simple));
        assert_eq!(
            p2.to_dense(),
            DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])
        );
        assert_close(&sorted_eigs(&p2), &[-1.0, 1.0], 1e-14);

        let r2 = assemble_h0(&line(2, BoundaryCondition::Periodic));
        assert_eq!(
            r2.to_dense(),
            DMatrix::from_row_slice(2, 2, &[0.0, 2.0, 2.0, 0.0])
        );
        assert_close(&sorted_eigs(&r2), &[-2.0, 2.0], 1e-14);
    }

    #[test]
    fn h_with_potential() {
        let r4 = line(4, BoundaryCondition::Periodic);
        let h = assemble_h(&r4, &PotentialField::zero(&r4)).unwrap();
        assert_close(&sorted_eigs(&h), &[-2.0, 0.0, 0.0, 2.0], 1e-12);

        let one = line(1, BoundaryCondition::Simple);
        let v = PotentialField::unrestricted(&one, vec![5.0]).unwrap();
        assert_close(&sorted_eigs(&assemble_h(&one, &v).unwrap()), &[5.0], 0.0);

        let p2 = line(2, BoundaryCondition::Simple);
        let a = 2.5;
        let v = PotentialField::unrestricted(&p2, vec![a, a]).unwrap();
        assert_close(
            &sorted_eigs(&assemble_h(&p2, &v).unwrap()),
            &[a - 1.0, a + 1.0],
            1e-14,
        );

        let other = line(3, BoundaryCondition::Simple);
        assert!(matches!(assemble_h(&other, &v), Err(Error::Mismatch(_))));
    }

    #[test]
    fn potential_support_enforced() {
        let spec = GeometrySpec::new(1, 1, vec![2, 2], 0, 1, vec![1]).unwrap();
        let b = build_periodic_box(&spec).unwrap();
        let m = build_trim_mask(&b, &single_layer_gamma0(&[2, 2], 1, None).unwrap()).unwrap();
        let off = m.inactive_sites().next().unwrap();
        let mut vals = vec![0.0; 4];
        vals[off] = 1.0;
        assert!(matches!(
            PotentialField::new(&m, vals),
            Err(Error::Support(_))
        ));
    }

    #[test]
    fn restriction_to_gamma_complement_p3() {
        // Confined ring of 3 with x1 = 0 trimmed, free ring of 2.
        let spec = GeometrySpec::new(1, 1, vec![3, 2], 0, 1, vec![1]).unwrap();
        let b = build_periodic_box(&spec).unwrap();
        let m = build_trim_mask(&b, &single_layer_gamma0(&[3, 2], 1, None).unwrap()).unwrap();
        let r = restrict_simple(&b, &m.complement()).unwrap();
        assert_eq!(r.dim(), 4);
        // Segment {1,2} couples with weight 1; the free ring of 2 doubles.
        assert_close(&sorted_eigs(&r), &[-3.0, -1.0, 1.0, 3.0], 1e-12);

        // Free direction with simple bc isolates the 2-site segments.
        let bs = LatticeBox::new(
            vec![3, 2],
            vec![BoundaryCondition::Periodic, BoundaryCondition::Simple],
            vec![3, 2],
            1,
        )
        .unwrap();
        let ms = build_trim_mask(&bs, &single_layer_gamma0(&[3, 2], 1, None).unwrap()).unwrap();
        let r = restrict_simple(&bs, &ms.complement()).unwrap();
        assert_close(&sorted_eigs(&r), &[-2.0, 0.0, 0.0, 2.0], 1e-12);
        // Segments alone: 2cos(k pi / 3) = +-1.
        let seg = LatticeBox::new(
            vec![3, 1],
            vec![BoundaryCondition::Periodic, BoundaryCondition::Simple],
            vec![3, 1],
            1,
        )
        .unwrap();
        let ms = TrimMask::from_raw(seg.clone(), vec![true, false, false]).unwrap();
        let r = restrict_simple(&seg, &ms.complement()).unwrap();
        assert_close(&sorted_eigs(&r), &[-1.0, 1.0], 1e-14);
    }

    #[test]
    fn restriction_edge_cases() {
        let b = line(5, BoundaryCondition::Periodic);
        let full = TrimMask::from_raw(b.clone(), vec![true; 5]).unwrap();
        assert_eq!(restrict_simple(&b, &full).unwrap(), assemble_h0(&b));
        let mut one = vec![false; 5];
        one[2] = true;
        let r = restrict_simple(&b, &TrimMask::from_raw(b.clone(), one).unwrap()).unwrap();
        assert_eq!(r.to_dense(), DMatrix::from_element(1, 1, 0.0));
        let empty = TrimMask::from_raw(b.clone(), vec![false; 5]).unwrap();
        assert!(matches!(
            restrict_simple(&b, &empty),
            Err(Error::InvalidRestriction(_))
        ));
    }

    #[test]
    fn block_split_examples() {
        let p2 = line(2, BoundaryCondition::Simple);
        let m = TrimMask::from_raw(p2.clone(), vec![false, true]).unwrap();
        let v = PotentialField::new(&m, vec![0.0, 3.0]).unwrap();
        let h = assemble_h(&p2, &v).unwrap();
        let s = block_split(&h, &m).unwrap();
        assert_eq!(s.h1.to_dense(), DMatrix::from_element(1, 1, 0.0));
        assert_eq!(s.h2.to_dense(), DMatrix::from_element(1, 1, 3.0));
        assert_eq!(s.link.to_dense(), DMatrix::from_element(1, 1, 1.0));

        let r4 = line(4, BoundaryCondition::Periodic);
        let m = TrimMask::from_raw(r4.clone(), vec![true, false, true, false]).unwrap();
        let s = block_split(&assemble_h0(&r4), &m).unwrap();
        assert_eq!(s.link.to_dense(), DMatrix::from_element(2, 2, 1.0));
        assert!((s.link.norm() - 2.0).abs() < 1e-12);

        let full = TrimMask::from_raw(r4.clone(), vec![true; 4]).unwrap();
        assert!(matches!(
            block_split(&assemble_h0(&r4), &full),
            Err(Error::InvalidTrim(_))
        ));
    }

    #[test]
    fn tensor_factor_shapes() {
        let spec = GeometrySpec::new(1, 1, vec![2, 2], 0, 2, vec![2]).unwrap();
        let b = build_periodic_box(&spec).unwrap();
        let m = build_trim_mask(&b, &single_layer_gamma0(&[2, 2], 1, None).unwrap()).unwrap();
        let (h1, h2) = tensor_factors(&m, 0.0).unwrap();
        assert_eq!(h1.dim(), 4);
        assert_eq!(h2.dim(), 4);
        for e in sorted_eigs(&h1) {
            assert!(e.abs() <= 2.0 + 1e-12);
        }
        assert_close(&sorted_eigs(&h2), &[-2.0, 0.0, 0.0, 2.0], 1e-12);
        let (h1, _) = tensor_factors(&m, 3.0).unwrap();
        assert_eq!(h1.diagonal(), &[3.0, 0.0, 3.0, 0.0]);

        let bad = build_trim_mask(&b, &[crate::geometry::SiteCoord(vec![0, 0])]).unwrap();
        assert!(matches!(
            tensor_factors(&bad, 1.0),
            Err(Error::NotSeparable)
        ));
    }

    #[test]
    fn coo_dump_is_sorted() {
        let p2 = line(2, BoundaryCondition::Simple);
        let v = PotentialField::unrestricted(&p2, vec![0.5, 0.0]).unwrap();
        let h = assemble_h(&p2, &v).unwrap();
        assert_eq!(h.to_coo_text(), "0 0 0.5\n0 1 1\n1 0 1\n");
        let r3 = line(3, BoundaryCondition::Periodic);
        let v = PotentialField::unrestricted(&r3, vec![0.0, 2.0, 0.0]).unwrap();
        let text = assemble_h(&r3, &v).unwrap().to_coo_text();
        assert_eq!(text, "0 1 1\n0 2 1\n1 0 1\n1 1 2\n1 2 1\n2 0 1\n2 1 1\n");
    }

    fn arb_case() -> impl Strategy<Value = (LatticeBox, Vec<bool>, Vec<f64>)> {
        (prop::collection::vec(2usize..=4, 1..=3), any::<u64>()).prop_map(|(sides, bits)| {
            let d = sides.len();
            let bcs = (0..d)
                .map(|i| {
                    if bits >> i & 1 == 1 {
                        BoundaryCondition::Periodic
                    } else {
                        BoundaryCondition::Simple
                    }
                })
                .collect();
            let b = LatticeBox::new(sides, bcs, vec![2; d], 1).unwrap();
            let n = b.site_count();
            let mut mask: Vec<bool> = (0..n).map(|i| (bits >> (8 + i % 50)) & 1 == 1).collect();
            mask[0] = true;
            mask[n - 1] = false;
            let vals = (0..n)
                .map(|i| {
                    if mask[i] {
                        ((i * 37 + 11) % 13) as f64 - 6.0
                    } else {
                        0.0
                    }
                })
                .collect();
            (b, mask, vals)
        })
    }

    proptest! {
        #[test]
        fn operator_invariants((b, mask, vals) in arb_case()) {
            let h0 = assemble_h0(&b);
            let d = b.dim() as f64;
            for i in 0..h0.dim() {
                prop_assert!(h0.off_diagonal(i).len() <= 2 * b.dim());
                let mut rsum = 0.0;
                for &(j, v) in h0.off_diagonal(i) {
                    prop_assert!(v == 1.0 || v == 2.0);
                    prop_assert_eq!(h0.entry(j, i), v);
                    rsum += v;
                }
                prop_assert!(rsum <= 2.0 * d);
            }
            let m = TrimMask::from_raw(b.clone(), mask).unwrap();
            let h = assemble_h(&b, &PotentialField::new(&m, vals).unwrap()).unwrap();
            let split = block_split(&h, &m).unwrap();
            prop_assert!(split.link.max_column_weight() <= 2.0 * d);
            prop_assert!(split.link.norm() <= 2.0 * d + 1e-12);
            let re = split.reassemble();
            let perm = split.permutation();
            for i in 0..re.dim() {
                for j in 0..re.dim() {
                    prop_assert_eq!(re.entry(i, j), h.entry(perm[i], perm[j]));
                }
            }
        }
    }
}
