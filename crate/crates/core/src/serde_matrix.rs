//! JSON form of complex matrices: row-major nested arrays of `[re, im]` pairs.

use nalgebra::DMatrix;
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::operator_space::{OperatorMatrix, C64};

#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix(pub OperatorMatrix);

impl Serialize for CMatrix {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<[f64; 2]>> = self
            .0
            .row_iter()
            .map(|r| r.iter().map(|z| [z.re, z.im]).collect())
            .collect();
        rows.serialize(s)
    }
}

impl<'de> Deserialize<'de> for CMatrix {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let rows: Vec<Vec<[f64; 2]>> = Vec::deserialize(d)?;
        let n = rows.len();
        if n == 0 {
            return Err(D::Error::custom("matrix must have at least one row"));
        }
        if let Some(i) = rows.iter().position(|r| r.len() != n) {
            return Err(D::Error::custom(format!("row {i} has {} entries, expected {n}", rows[i].len())));
        }
        let flat: Vec<C64> = rows.iter().flatten().map(|p| C64::new(p[0], p[1])).collect();
        if flat.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(D::Error::custom("matrix entries must be finite"));
        }
        Ok(CMatrix(DMatrix::from_row_slice(n, n, &flat)))
    }
}

impl From<OperatorMatrix> for CMatrix {
    fn from(m: OperatorMatrix) -> Self {
        CMatrix(m)
    }
}
