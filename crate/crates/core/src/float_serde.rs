//! Serde helpers that keep NaN and ±∞ through JSON, which has no literal
//! for them. Non-finite values are written as the strings `"NaN"`, `"inf"`
//! and `"-inf"`.

use nalgebra::{DMatrix, DVector};
use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum Repr {
    Num(f64),
    Text(String),
}

fn to_repr(v: f64) -> Repr {
    if v.is_finite() {
        Repr::Num(v)
    } else if v.is_nan() {
        Repr::Text("NaN".into())
    } else if v > 0.0 {
        Repr::Text("inf".into())
    } else {
        Repr::Text("-inf".into())
    }
}

fn from_repr<E: serde::de::Error>(r: Repr) -> Result<f64, E> {
    match r {
        Repr::Num(v) => Ok(v),
        Repr::Text(s) => match s.as_str() {
            "NaN" => Ok(f64::NAN),
            "inf" => Ok(f64::INFINITY),
            "-inf" => Ok(f64::NEG_INFINITY),
            other => Err(E::custom(format!("invalid float `{other}`"))),
        },
    }
}

pub mod scalar {
    use super::*;

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        to_repr(*v).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        from_repr(Repr::deserialize(d)?)
    }
}

#[derive(Serialize, Deserialize)]
struct MatrixRepr {
    nrows: usize,
    ncols: usize,
    /// Column-major.
    data: Vec<Repr>,
}

pub mod matrix {
    use super::*;

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        MatrixRepr {
            nrows: m.nrows(),
            ncols: m.ncols(),
            data: m.iter().map(|&v| to_repr(v)).collect(),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let r = MatrixRepr::deserialize(d)?;
        if r.data.len() != r.nrows * r.ncols {
            return Err(D::Error::custom("matrix data length does not match its shape"));
        }
        let data = r
            .data
            .into_iter()
            .map(from_repr)
            .collect::<Result<Vec<f64>, D::Error>>()?;
        Ok(DMatrix::from_vec(r.nrows, r.ncols, data))
    }
}

pub mod vector {
    use super::*;

    pub fn serialize<S: Serializer>(v: &DVector<f64>, s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|&x| to_repr(x)).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DVector<f64>, D::Error> {
        let data = Vec::<Repr>::deserialize(d)?
            .into_iter()
            .map(from_repr)
            .collect::<Result<Vec<f64>, D::Error>>()?;
        Ok(DVector::from_vec(data))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Serialize, Deserialize)]
    struct Probe {
        #[serde(with = "scalar")]
        a: f64,
        #[serde(with = "matrix")]
        m: DMatrix<f64>,
        #[serde(with = "vector")]
        v: DVector<f64>,
    }

    #[test]
    fn non_finite_round_trip() {
        let p = Probe {
            a: f64::NAN,
            m: DMatrix::from_row_slice(2, 2, &[1.0, f64::INFINITY, 0.1 + 0.2, f64::NEG_INFINITY]),
            v: DVector::from_vec(vec![f64::NAN, -0.0, 1e-300]),
        };
        let s = serde_json::to_string(&p).unwrap();
        let q: Probe = serde_json::from_str(&s).unwrap();
        assert!(q.a.is_nan());
        assert_eq!(q.m[(0, 1)], f64::INFINITY);
        assert_eq!(q.m[(1, 0)], 0.1 + 0.2);
        assert_eq!(q.m[(1, 1)], f64::NEG_INFINITY);
        assert!(q.v[0].is_nan());
        assert_eq!(q.v[2], 1e-300);
        assert_eq!(serde_json::to_string(&q).unwrap(), s);
    }
}
