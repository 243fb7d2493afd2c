//! Base64 little-endian f64 arrays, used by the JSON file formats.

use base64::engine::general_purpose::STANDARD;
use base64::Engine;

use crate::error::{Error, Result};

pub fn f64s_to_le_bytes(values: &[f64]) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * 8);
    for v in values {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn le_bytes_to_f64s(bytes: &[u8]) -> Result<Vec<f64>> {
    if bytes.len() % 8 != 0 {
        return Err(Error::Mismatch(format!("f64 array byte length {} is not a multiple of 8", bytes.len())));
    }
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8"))).collect())
}

pub fn encode_f64s(values: &[f64]) -> String {
    STANDARD.encode(f64s_to_le_bytes(values))
}

pub fn decode_f64s(text: &str) -> Result<Vec<f64>> {
    let bytes = STANDARD.decode(text).map_err(|e| Error::Mismatch(format!("invalid base64 f64 array: {e}")))?;
    le_bytes_to_f64s(&bytes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn roundtrip_is_bit_exact(v in prop::collection::vec(any::<f64>(), 0..32)) {
            let back = decode_f64s(&encode_f64s(&v)).unwrap();
            prop_assert_eq!(
                back.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                v.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
            );
        }
    }

    #[test]
    fn rejects_ragged() {
        assert!(decode_f64s(&STANDARD.encode([1u8, 2, 3])).is_err());
        assert!(decode_f64s("not base64!").is_err());
    }
}
