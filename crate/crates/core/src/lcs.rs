//! Local contact space: the cone `J q >= c` stacked from contact features.

use nalgebra::{DMatrix, DVector};

use crate::error::LcsError;
use crate::geometry::Vec3;
use crate::proximity::ContactFeature;

/// Smallest Cholesky pivot a row may add before it counts as redundant.
pub const RANK_PIVOT: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct LocalContactSpace {
    /// Unit rows, one per kept feature.
    pub j: DMatrix<f64>,
    /// Plane offsets in absolute translation coordinates.
    pub c: DVector<f64>,
    /// Every feature the space was built from, in input order.
    pub features: Vec<ContactFeature>,
    /// Index into `features` for each row of `j`.
    pub kept: Vec<usize>,
}

impl LocalContactSpace {
    pub fn rows(&self) -> usize {
        self.j.nrows()
    }

    pub fn row(&self, i: usize) -> Vec3 {
        Vec3::new(self.j[(i, 0)], self.j[(i, 1)], self.j[(i, 2)])
    }

    /// Offsets for the shifted variable `d = q - origin`.
    pub fn relative_bias(&self, origin: &Vec3) -> DVector<f64> {
        DVector::from_iterator(
            self.rows(),
            (0..self.rows()).map(|i| self.c[i] - self.row(i).dot(origin)),
        )
    }
}

/// Stacks feature planes in order, skipping any row that would make
/// `J J^T` singular.
pub fn build_lcs(features: &[ContactFeature]) -> Result<LocalContactSpace, LcsError> {
    if features.is_empty() {
        return Err(LcsError::NoFeatures);
    }
    let mut rows: Vec<Vec3> = Vec::new();
    let mut biases = Vec::new();
    let mut kept = Vec::new();
    // lower Cholesky factor of the accepted rows' Gram matrix, row-major
    let mut chol: Vec<Vec<f64>> = Vec::new();
    for (idx, f) in features.iter().enumerate() {
        let r = f.row.normalize();
        let mut l = Vec::with_capacity(rows.len() + 1);
        for (k, prev) in rows.iter().enumerate() {
            let mut x = prev.dot(&r);
            for (m, lm) in l.iter().enumerate() {
                x -= chol[k][m] * lm;
            }
            l.push(x / chol[k][k]);
        }
        let pivot = r.norm_squared() - l.iter().map(|x| x * x).sum::<f64>();
        if pivot <= RANK_PIVOT {
            continue;
        }
        l.push(pivot.sqrt());
        chol.push(l);
        rows.push(r);
        biases.push(f.bias * r.dot(&f.row) / f.row.norm_squared());
        kept.push(idx);
    }
    let j = DMatrix::from_fn(rows.len(), 3, |i, k| rows[i][k]);
    Ok(LocalContactSpace {
        j,
        c: DVector::from_vec(biases),
        features: features.to_vec(),
        kept,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::proximity::{FeatureIds, FeatureKind};

    fn plane(n: Vec3, c: f64, id: u32) -> ContactFeature {
        ContactFeature {
            kind: FeatureKind::VF,
            ids: FeatureIds::VertexFace {
                vertex_a: id,
                triangle_b: 0,
            },
            witness_a: n * c,
            witness_b: n * c,
            normal: n,
            row: n,
            bias: c,
            gap: 0.0,
        }
    }

    #[test]
    fn single_plane() {
        let l = build_lcs(&[plane(Vec3::x(), 1.0, 0)]).unwrap();
        assert_eq!(l.j, DMatrix::from_row_slice(1, 3, &[1.0, 0.0, 0.0]));
        assert_eq!(l.c, DVector::from_column_slice(&[1.0]));
    }

    #[test]
    fn identical_planes_collapse() {
        let l = build_lcs(&[plane(Vec3::x(), 1.0, 0), plane(Vec3::x(), 1.0, 1)]).unwrap();
        assert_eq!(l.rows(), 1);
        assert_eq!(l.kept, vec![0]);
    }

    #[test]
    fn orthogonal_cone_has_identity_gram() {
        let l = build_lcs(&[plane(Vec3::x(), 1.0, 0), plane(Vec3::y(), 1.0, 1)]).unwrap();
        assert_eq!(
            l.j,
            DMatrix::from_row_slice(2, 3, &[1.0, 0.0, 0.0, 0.0, 1.0, 0.0])
        );
        assert_eq!(&l.j * l.j.transpose(), DMatrix::identity(2, 2));
        assert_eq!(
            l.relative_bias(&Vec3::new(0.25, 0.5, 9.0)),
            DVector::from_column_slice(&[0.75, 0.5])
        );
    }

    #[test]
    fn at_most_three_rows_survive() {
        let feats: Vec<_> = (0..8)
            .map(|i| {
                let a = i as f64 * 0.7;
                plane(
                    Vec3::new(a.cos(), a.sin(), 0.3 * (i as f64 - 3.0)).normalize(),
                    0.1,
                    i,
                )
            })
            .collect();
        let l = build_lcs(&feats).unwrap();
        assert_eq!(l.rows(), 3);
        let gram = &l.j * l.j.transpose();
        assert!(gram.symmetric_eigenvalues().min() > 0.0);
    }

    #[test]
    fn empty_is_an_error() {
        assert_eq!(build_lcs(&[]).unwrap_err(), LcsError::NoFeatures);
    }
}
