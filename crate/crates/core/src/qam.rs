//! Gray-coded square QAM with unit average symbol energy.

use num_complex::Complex64;

use crate::error::{invalid, Result};

/// Bits carried by one symbol of a square constellation of order `m`.
pub fn bits_per_symbol(m: usize) -> Result<usize> {
    if m < 4 || !m.is_power_of_two() || !m.trailing_zeros().is_multiple_of(2) {
        return Err(invalid(
            "qam_order",
            format!("{m} is not a square QAM order"),
        ));
    }
    Ok(m.trailing_zeros() as usize)
}

fn gray_to_binary(mut g: usize) -> usize {
    let mut b = g;
    while g > 0 {
        g >>= 1;
        b ^= g;
    }
    b
}

fn scale(m: usize) -> f64 {
    // mean energy of the +-1, +-3, ... lattice is 2(M-1)/3
    (2.0 * (m as f64 - 1.0) / 3.0).sqrt().recip()
}

fn axis_level(bits: &[bool], levels: usize) -> f64 {
    let g = bits.iter().fold(0usize, |acc, &b| (acc << 1) | b as usize);
    let i = gray_to_binary(g);
    2.0 * i as f64 - (levels as f64 - 1.0)
}

fn axis_bits(x: f64, levels: usize, per_axis: usize, out: &mut Vec<bool>) {
    let i = ((x + levels as f64 - 1.0) / 2.0).round();
    let i = i.clamp(0.0, levels as f64 - 1.0) as usize;
    let g = i ^ (i >> 1);
    for k in (0..per_axis).rev() {
        out.push((g >> k) & 1 == 1);
    }
}

/// Map bits onto a Gray-coded M-QAM constellation. The first half of each
/// symbol's bits selects the in-phase level, the second half quadrature.
pub fn map_bits_to_qam(bits: &[bool], m: usize) -> Result<Vec<Complex64>> {
    let k = bits_per_symbol(m)?;
    if !bits.len().is_multiple_of(k) {
        return Err(invalid(
            "bits",
            format!("{} bits is not a multiple of {k}", bits.len()),
        ));
    }
    let levels = 1usize << (k / 2);
    let s = scale(m);
    Ok(bits
        .chunks_exact(k)
        .map(|c| {
            let (i_bits, q_bits) = c.split_at(k / 2);
            Complex64::new(axis_level(i_bits, levels), axis_level(q_bits, levels)) * s
        })
        .collect())
}

/// Nearest-point hard decision back to bits.
pub fn demap_qam(symbols: &[Complex64], m: usize) -> Result<Vec<bool>> {
    let k = bits_per_symbol(m)?;
    let levels = 1usize << (k / 2);
    let inv = scale(m).recip();
    let mut out = Vec::with_capacity(symbols.len() * k);
    for z in symbols {
        axis_bits(z.re * inv, levels, k / 2, &mut out);
        axis_bits(z.im * inv, levels, k / 2, &mut out);
    }
    Ok(out)
}

/// Every point of the constellation, indexed by its bit label.
pub fn constellation(m: usize) -> Result<Vec<Complex64>> {
    let k = bits_per_symbol(m)?;
    let bits: Vec<bool> = (0..m)
        .flat_map(|label| (0..k).rev().map(move |b| (label >> b) & 1 == 1))
        .collect();
    map_bits_to_qam(&bits, m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn qpsk_points() {
        let pts = constellation(4).unwrap();
        let r = std::f64::consts::FRAC_1_SQRT_2;
        assert_eq!(pts.len(), 4);
        for p in &pts {
            assert!((p.re.abs() - r).abs() < 1e-15 && (p.im.abs() - r).abs() < 1e-15);
        }
        // 00, 01, 11, 10 walk the square with single-bit steps
        let order = [0b00, 0b01, 0b11, 0b10];
        for w in order.windows(2) {
            let d = (pts[w[0]] - pts[w[1]]).norm();
            assert!((d - 2.0 * r).abs() < 1e-12);
        }
    }

    #[test]
    fn unit_average_energy() {
        for m in [4, 16, 64] {
            let pts = constellation(m).unwrap();
            let e: f64 = pts.iter().map(|p| p.norm_sqr()).sum::<f64>() / m as f64;
            assert!((e - 1.0).abs() < 1e-12, "M={m}: {e}");
        }
    }

    #[test]
    fn gray_neighbours_differ_by_one_bit() {
        for m in [16, 64] {
            let pts = constellation(m).unwrap();
            let step = 2.0 * scale(m);
            for a in 0..m {
                for b in 0..m {
                    let d = (pts[a] - pts[b]).norm();
                    if (d - step).abs() < 1e-9 {
                        assert_eq!((a ^ b).count_ones(), 1, "M={m} labels {a} {b}");
                    }
                }
            }
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(map_bits_to_qam(&[true, false, true], 4).is_err());
        assert!(map_bits_to_qam(&[true; 8], 8).is_err());
        assert!(bits_per_symbol(32).is_err());
        assert_eq!(bits_per_symbol(256).unwrap(), 8);
    }

    proptest! {
        #[test]
        fn round_trip(m_idx in 0usize..3, raw in proptest::collection::vec(any::<bool>(), 0..60)) {
            let m = [4, 16, 64][m_idx];
            let k = bits_per_symbol(m).unwrap();
            let bits = &raw[..raw.len() / k * k];
            let syms = map_bits_to_qam(bits, m).unwrap();
            prop_assert_eq!(demap_qam(&syms, m).unwrap(), bits.to_vec());
        }
    }
}
