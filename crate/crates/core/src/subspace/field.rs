use crate::error::{Error, Result};
use crate::laplacian::DiagonalMass;
use crate::numerics::DenseMatrix;

/// What a block of per-point fields represents.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FieldRole {
    /// Raw predicted fields `F`, no structure assumed.
    RawF,
    /// M-orthonormal basis `Y`.
    OrthoY,
    /// M-orthonormal eigen or Ritz vectors, ascending by value.
    EigvecU,
}

impl FieldRole {
    pub fn as_str(self) -> &'static str {
        match self {
            FieldRole::RawF => "raw_F",
            FieldRole::OrthoY => "ortho_Y",
            FieldRole::EigvecU => "eigvec_U",
        }
    }
}

/// `N x m` column-major fields with a role tag.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldMatrix {
    values: DenseMatrix,
    role: FieldRole,
}

impl FieldMatrix {
    pub fn raw(values: DenseMatrix) -> Self {
        Self {
            values,
            role: FieldRole::RawF,
        }
    }

    /// Tags `values` with `role` after checking `YᵀMY = I` within `1e-8` for
    /// the orthonormal roles.
    pub fn with_role(values: DenseMatrix, role: FieldRole, mass: &DiagonalMass) -> Result<Self> {
        let f = Self { values, role };
        if role != FieldRole::RawF {
            let dev = f.orthonormality_error(mass)?;
            if !(dev <= 1e-8) {
                return Err(Error::Numerical(format!(
                    "{} fields are not M-orthonormal (deviation {dev:e})",
                    role.as_str()
                )));
            }
        }
        Ok(f)
    }

    /// Tags without checking; for results the caller built orthonormal.
    pub(crate) fn tagged(values: DenseMatrix, role: FieldRole) -> Self {
        Self { values, role }
    }

    pub fn role(&self) -> FieldRole {
        self.role
    }

    pub fn n_points(&self) -> usize {
        self.values.rows()
    }

    pub fn n_fields(&self) -> usize {
        self.values.cols()
    }

    pub fn matrix(&self) -> &DenseMatrix {
        &self.values
    }

    pub fn into_matrix(self) -> DenseMatrix {
        self.values
    }

    /// `‖FᵀMF - I‖_max`.
    pub fn orthonormality_error(&self, mass: &DiagonalMass) -> Result<f64> {
        if mass.len() != self.n_points() {
            return Err(Error::DimensionMismatch {
                expected: self.n_points(),
                found: mass.len(),
            });
        }
        let g = self
            .values
            .t_matmul(&self.values.scale_rows(mass.weights()));
        Ok(g.sub(&DenseMatrix::identity(self.n_fields())).max_abs())
    }
}
