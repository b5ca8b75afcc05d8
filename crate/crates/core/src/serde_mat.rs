//! JSON layouts for complex matrices: row-major with `[re, im]` pairs.
//!
//! ```text
//! {"rows": 2, "cols": 2, "data": [[1.0, 0.0], [0.0, 0.0], [0.0, 0.0], [1.0, 0.0]]}
//! ```

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::{CMat, CVec, C64};

#[derive(Serialize, Deserialize)]
struct MatrixJson {
    rows: usize,
    cols: usize,
    data: Vec<[f64; 2]>,
}

impl From<&CMat> for MatrixJson {
    fn from(m: &CMat) -> Self {
        let mut data = Vec::with_capacity(m.len());
        for i in 0..m.nrows() {
            for j in 0..m.ncols() {
                let z = m[(i, j)];
                data.push([z.re, z.im]);
            }
        }
        MatrixJson {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }
}

impl MatrixJson {
    fn into_mat<E: serde::de::Error>(self) -> Result<CMat, E> {
        if self.data.len() != self.rows * self.cols {
            return Err(E::custom(format!(
                "matrix data has {} entries, expected {}x{}",
                self.data.len(),
                self.rows,
                self.cols
            )));
        }
        Ok(CMat::from_row_iterator(
            self.rows,
            self.cols,
            self.data.into_iter().map(|[re, im]| C64::new(re, im)),
        ))
    }
}

pub mod mat {
    use super::*;

    pub fn serialize<S: Serializer>(m: &CMat, s: S) -> Result<S::Ok, S::Error> {
        MatrixJson::from(m).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CMat, D::Error> {
        MatrixJson::deserialize(d)?.into_mat()
    }
}

pub mod opt_mat {
    use super::*;

    pub fn serialize<S: Serializer>(m: &Option<CMat>, s: S) -> Result<S::Ok, S::Error> {
        m.as_ref().map(MatrixJson::from).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<CMat>, D::Error> {
        Option::<MatrixJson>::deserialize(d)?
            .map(MatrixJson::into_mat)
            .transpose()
    }
}

pub mod mats {
    use super::*;

    pub fn serialize<S: Serializer>(ms: &[CMat], s: S) -> Result<S::Ok, S::Error> {
        ms.iter()
            .map(MatrixJson::from)
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<CMat>, D::Error> {
        Vec::<MatrixJson>::deserialize(d)?
            .into_iter()
            .map(MatrixJson::into_mat)
            .collect()
    }
}

pub mod nested_mats {
    use super::*;

    pub fn serialize<S: Serializer>(ms: &[Vec<CMat>], s: S) -> Result<S::Ok, S::Error> {
        ms.iter()
            .map(|row| row.iter().map(MatrixJson::from).collect::<Vec<_>>())
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<Vec<CMat>>, D::Error> {
        Vec::<Vec<MatrixJson>>::deserialize(d)?
            .into_iter()
            .map(|row| row.into_iter().map(MatrixJson::into_mat).collect())
            .collect()
    }
}

pub mod vector {
    use super::*;

    pub fn serialize<S: Serializer>(v: &CVec, s: S) -> Result<S::Ok, S::Error> {
        v.iter()
            .map(|z| [z.re, z.im])
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CVec, D::Error> {
        let raw = Vec::<[f64; 2]>::deserialize(d)?;
        Ok(CVec::from_iterator(
            raw.len(),
            raw.into_iter().map(|[re, im]| C64::new(re, im)),
        ))
    }
}

pub mod vectors {
    use super::*;

    pub fn serialize<S: Serializer>(vs: &[CVec], s: S) -> Result<S::Ok, S::Error> {
        vs.iter()
            .map(|v| v.iter().map(|z| [z.re, z.im]).collect::<Vec<_>>())
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<CVec>, D::Error> {
        Ok(Vec::<Vec<[f64; 2]>>::deserialize(d)?
            .into_iter()
            .map(|raw| {
                CVec::from_iterator(raw.len(), raw.into_iter().map(|[re, im]| C64::new(re, im)))
            })
            .collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Serialize, Deserialize, PartialEq, Debug)]
    struct Holder {
        #[serde(with = "mat")]
        m: CMat,
        #[serde(with = "vector")]
        v: CVec,
    }

    #[test]
    fn row_major_layout() {
        let h = Holder {
            m: CMat::from_row_slice(1, 2, &[C64::new(1.0, 2.0), C64::new(3.0, -4.0)]),
            v: CVec::from_vec(vec![C64::new(0.5, 0.0)]),
        };
        let s = serde_json::to_string(&h).unwrap();
        assert_eq!(
            s,
            r#"{"m":{"rows":1,"cols":2,"data":[[1.0,2.0],[3.0,-4.0]]},"v":[[0.5,0.0]]}"#
        );
        let back: Holder = serde_json::from_str(&s).unwrap();
        assert_eq!(back, h);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let bad = r#"{"m":{"rows":2,"cols":2,"data":[[1.0,0.0]]},"v":[]}"#;
        assert!(serde_json::from_str::<Holder>(bad).is_err());
    }
}
