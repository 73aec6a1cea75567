//! Lossless hex-float encoding of reals, complex numbers, vectors and
//! matrices for JSON artifacts.
//!
//! Reals are written as C99 hex-float literals (`0x1.8p-1`), complex numbers
//! as `[re, im]` pairs, matrices as lists of columns.

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::linalg::{CMatrix, CVector, C64};

/// Format an `f64` as a hex-float literal that parses back bit-for-bit.
pub fn format_hex(x: f64) -> String {
    if x.is_nan() {
        return "nan".to_string();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let bits = x.to_bits();
    let sign = if bits >> 63 == 1 { "-" } else { "" };
    let exp_bits = ((bits >> 52) & 0x7ff) as i64;
    let mantissa = bits & ((1u64 << 52) - 1);
    if exp_bits == 0 && mantissa == 0 {
        return format!("{sign}0x0p+0");
    }
    let (lead, exp) = if exp_bits == 0 { (0, -1022) } else { (1, exp_bits - 1023) };
    let mut digits = format!("{mantissa:013x}");
    while digits.ends_with('0') {
        digits.pop();
    }
    let exp_sign = if exp >= 0 { "+" } else { "-" };
    if digits.is_empty() {
        format!("{sign}0x{lead}p{exp_sign}{}", exp.abs())
    } else {
        format!("{sign}0x{lead}.{digits}p{exp_sign}{}", exp.abs())
    }
}

pub fn parse_hex(s: &str) -> Result<f64, String> {
    match s {
        "nan" => return Ok(f64::NAN),
        "inf" => return Ok(f64::INFINITY),
        "-inf" => return Ok(f64::NEG_INFINITY),
        _ => {}
    }
    hexf_parse::parse_hexf64(s, false).map_err(|e| format!("bad hex float `{s}`: {e}"))
}

pub mod hex_f64 {
    use super::*;

    pub fn serialize<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        format_hex(*x).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        let s = String::deserialize(d)?;
        parse_hex(&s).map_err(D::Error::custom)
    }
}

pub mod hex_f64_vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[f64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(|&x| format_hex(x)).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<f64>, D::Error> {
        let v = Vec::<String>::deserialize(d)?;
        v.iter().map(|s| parse_hex(s).map_err(D::Error::custom)).collect()
    }
}

fn complex_to_pair(z: &C64) -> [String; 2] {
    [format_hex(z.re), format_hex(z.im)]
}

fn pair_to_complex(p: &[String; 2]) -> Result<C64, String> {
    Ok(C64::new(parse_hex(&p[0])?, parse_hex(&p[1])?))
}

pub mod hex_c64 {
    use super::*;

    pub fn serialize<S: Serializer>(z: &C64, s: S) -> Result<S::Ok, S::Error> {
        complex_to_pair(z).serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<C64, D::Error> {
        let p = <[String; 2]>::deserialize(d)?;
        pair_to_complex(&p).map_err(D::Error::custom)
    }
}

pub mod hex_c64_vec {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[C64], s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(complex_to_pair).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<C64>, D::Error> {
        let v = Vec::<[String; 2]>::deserialize(d)?;
        v.iter().map(|p| pair_to_complex(p).map_err(D::Error::custom)).collect()
    }
}

pub mod hex_cvector {
    use super::*;

    pub fn serialize<S: Serializer>(v: &CVector, s: S) -> Result<S::Ok, S::Error> {
        v.iter().map(complex_to_pair).collect::<Vec<_>>().serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CVector, D::Error> {
        let v = Vec::<[String; 2]>::deserialize(d)?;
        let data: Result<Vec<C64>, _> = v.iter().map(pair_to_complex).collect();
        Ok(CVector::from_vec(data.map_err(D::Error::custom)?))
    }
}

pub mod hex_cmatrix {
    use super::*;

    #[derive(Serialize, Deserialize)]
    struct Encoded {
        rows: usize,
        cols: usize,
        columns: Vec<Vec<[String; 2]>>,
    }

    pub fn serialize<S: Serializer>(m: &CMatrix, s: S) -> Result<S::Ok, S::Error> {
        Encoded {
            rows: m.nrows(),
            cols: m.ncols(),
            columns: m
                .column_iter()
                .map(|c| c.iter().map(complex_to_pair).collect())
                .collect(),
        }
        .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<CMatrix, D::Error> {
        let e = Encoded::deserialize(d)?;
        if e.columns.len() != e.cols || e.columns.iter().any(|c| c.len() != e.rows) {
            return Err(D::Error::custom("matrix shape does not match its columns"));
        }
        let mut m = CMatrix::zeros(e.rows, e.cols);
        for (j, col) in e.columns.iter().enumerate() {
            for (i, p) in col.iter().enumerate() {
                m[(i, j)] = pair_to_complex(p).map_err(D::Error::custom)?;
            }
        }
        Ok(m)
    }
}

pub mod hex_cvector_list {
    use super::*;

    pub fn serialize<S: Serializer>(v: &[CVector], s: S) -> Result<S::Ok, S::Error> {
        v.iter()
            .map(|c| c.iter().map(complex_to_pair).collect::<Vec<_>>())
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<CVector>, D::Error> {
        let v = Vec::<Vec<[String; 2]>>::deserialize(d)?;
        v.iter()
            .map(|c| {
                let data: Result<Vec<C64>, _> = c.iter().map(pair_to_complex).collect();
                data.map(CVector::from_vec).map_err(D::Error::custom)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn known_literals() {
        assert_eq!(format_hex(0.75), "0x1.8p-1");
        assert_eq!(format_hex(1.0), "0x1p+0");
        assert_eq!(format_hex(-2.0), "-0x1p+1");
        assert_eq!(format_hex(0.0), "0x0p+0");
        assert_eq!(format_hex(f64::MIN_POSITIVE / 4.0), "0x0.4p-1022");
    }

    #[test]
    fn negative_zero_survives() {
        let back = parse_hex(&format_hex(-0.0)).unwrap();
        assert_eq!(back.to_bits(), (-0.0f64).to_bits());
    }

    proptest! {
        #[test]
        fn bit_exact_round_trip(bits in any::<u64>()) {
            let x = f64::from_bits(bits);
            prop_assume!(x.is_finite());
            let back = parse_hex(&format_hex(x)).unwrap();
            prop_assert_eq!(back.to_bits(), x.to_bits());
        }
    }
}
