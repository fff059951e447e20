//! Standard normal CDF and its inverse.
//!
//! The inverse uses Wichura's AS 241 (PPND16), accurate to about 1e-16
//! relative over the whole open unit interval.

use crate::error::{Error, Result};

/// `Φ(x)`.
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / std::f64::consts::SQRT_2)
}

/// `Φ⁻¹(p)` for `p ∈ (0, 1)`.
pub fn norm_inv(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::InvalidArgument(format!("probability {p} outside (0, 1)")));
    }
    Ok(ppnd16(p))
}

#[allow(clippy::excessive_precision)]
fn ppnd16(p: f64) -> f64 {
    let q = p - 0.5;
    if q.abs() <= 0.425 {
        let r = 0.180625 - q * q;
        return q
            * (((((((r * 2509.0809287301226727 + 33430.575583588128105) * r + 67265.770927008700853) * r
                + 45921.953931549871457)
                * r
                + 13731.693765509461125)
                * r
                + 1971.5909503065514427)
                * r
                + 133.14166789178437745)
                * r
                + 3.387132872796366608)
            / (((((((r * 5226.495278852545925 + 28729.085735721942674) * r + 39307.89580009271061) * r
                + 21213.794301586595867)
                * r
                + 5394.1960214247511077)
                * r
                + 687.1870074920579083)
                * r
                + 42.313330701600911252)
                * r
                + 1.0);
    }
    let tail = if q < 0.0 { p } else { 1.0 - p };
    let mut r = (-tail.ln()).sqrt();
    let val = if r <= 5.0 {
        r -= 1.6;
        (((((((r * 7.7454501427834140764e-4 + 0.0227238449892691845833) * r + 0.24178072517745061177) * r
            + 1.27045825245236838258)
            * r
            + 3.64784832476320460504)
            * r
            + 5.7694972214606914055)
            * r
            + 4.6303378461565452959)
            * r
            + 1.42343711074968357734)
            / (((((((r * 1.05075007164441684324e-9 + 5.475938084995344946e-4) * r + 0.0151986665636164571966)
                * r
                + 0.14810397642748007459)
                * r
                + 0.68976733498510000455)
                * r
                + 1.6763848301838038494)
                * r
                + 2.05319162663775882187)
                * r
                + 1.0)
    } else {
        r -= 5.0;
        (((((((r * 2.01033439929228813265e-7 + 2.71155556874348757815e-5) * r + 0.0012426609473880784386) * r
            + 0.026532189526576123093)
            * r
            + 0.29656057182850489123)
            * r
            + 1.7848265399172913358)
            * r
            + 5.4637849111641143699)
            * r
            + 6.6579046435011037772)
            / (((((((r * 2.04426310338993978564e-15 + 1.4215117583164458887e-7) * r + 1.8463183175100546818e-5)
                * r
                + 7.868691311456132591e-4)
                * r
                + 0.0148753612908506148525)
                * r
                + 0.13692988092273580531)
                * r
                + 0.59983220655588793769)
                * r
                + 1.0)
    };
    if q < 0.0 {
        -val
    } else {
        val
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // 40-digit references, rounded.
    const REFERENCE: [(f64, f64); 7] = [
        (0.75, 0.674_489_750_196_081_7),
        (0.975, 1.959_963_984_540_054_2),
        (0.999, 3.090_232_306_167_813_5),
        (0.001, -3.090_232_306_167_813_5),
        (0.02425, -1.972_961_051_311_884_9),
        (0.9, 1.281_551_565_544_600_5),
        (1e-10, -6.361_340_902_404_056),
    ];

    #[test]
    fn matches_reference_values() {
        assert_eq!(norm_inv(0.5).unwrap(), 0.0);
        for (p, x) in REFERENCE {
            assert!((norm_inv(p).unwrap() - x).abs() < 1e-9, "p={p}");
        }
    }

    #[test]
    fn symmetric() {
        for i in 1..1000 {
            let p = i as f64 / 1000.0;
            assert!((norm_inv(p).unwrap() + norm_inv(1.0 - p).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn inverts_cdf() {
        for i in 1..200 {
            let p = i as f64 / 200.0;
            assert!((norm_cdf(norm_inv(p).unwrap()) - p).abs() < 1e-14);
        }
    }

    #[test]
    fn rejects_closed_endpoints() {
        assert!(norm_inv(0.0).is_err());
        assert!(norm_inv(1.0).is_err());
        assert!(norm_inv(f64::NAN).is_err());
    }
}
