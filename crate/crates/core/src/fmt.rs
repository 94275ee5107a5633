//! Fixed two-decimal rendering of percentages.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

/// Renders `value` with exactly two decimals, rounding half away from zero
/// on the shortest decimal representation of the float.
///
/// Rounding the shortest representation (rather than the binary value)
/// makes `7.105` print as `7.11` even though the nearest double is
/// slightly below it.
pub fn percent2(value: f64) -> String {
    if !value.is_finite() {
        return format!("{value}");
    }
    let negative = value < 0.0;
    let repr = format!("{}", libm::fabs(value));
    let (int_part, frac_part) = match repr.split_once('.') {
        Some((i, f)) => (i, f),
        None => (repr.as_str(), ""),
    };
    let mut digits: Vec<u8> = int_part.bytes().map(|b| b - b'0').collect();
    let frac: Vec<u8> = frac_part.bytes().map(|b| b - b'0').collect();
    digits.push(frac.first().copied().unwrap_or(0));
    digits.push(frac.get(1).copied().unwrap_or(0));
    if frac.get(2).copied().unwrap_or(0) >= 5 {
        let mut i = digits.len();
        loop {
            if i == 0 {
                digits.insert(0, 1);
                break;
            }
            i -= 1;
            if digits[i] == 9 {
                digits[i] = 0;
            } else {
                digits[i] += 1;
                break;
            }
        }
    }
    let split = digits.len() - 2;
    let mut out = String::new();
    let is_zero = digits.iter().all(|&d| d == 0);
    if negative && !is_zero {
        out.push('-');
    }
    for d in &digits[..split] {
        out.push((b'0' + d) as char);
    }
    out.push('.');
    for d in &digits[split..] {
        out.push((b'0' + d) as char);
    }
    out
}
