use alloc::string::{String, ToString};

use super::DataError;

/// Token for an integer attribute: `"NA"` when missing, the value itself up
/// to 2, and `floor(ln(z)^2)` above.
pub fn discretize_integer(z: Option<i64>) -> String {
    match z {
        None => "NA".to_string(),
        Some(z) if z <= 2 => z.to_string(),
        Some(z) => {
            let l = libm::log(z as f64);
            (libm::floor(l * l) as i64).to_string()
        }
    }
}

/// Parses a raw integer cell; empty and `NA` are missing.
pub fn parse_integer(field: &str, raw: &str) -> Result<Option<i64>, DataError> {
    let raw = raw.trim();
    if raw.is_empty() || raw == "NA" {
        return Ok(None);
    }
    raw.parse::<i64>().map(Some).map_err(|_| DataError::InvalidInteger {
        field: field.to_string(),
        value: raw.to_string(),
    })
}

/// Rating to label: 3 is dropped, below 3 is negative, above is positive.
pub fn binarize_rating(rating: i64) -> Result<Option<u8>, DataError> {
    match rating {
        1 | 2 => Ok(Some(0)),
        3 => Ok(None),
        4 | 5 => Ok(Some(1)),
        r => Err(DataError::InvalidRating(r)),
    }
}
