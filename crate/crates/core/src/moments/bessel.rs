//! Modified Bessel function of the first kind, order zero.

const SWITCH: f64 = 30.0;

/// `I0(x)`.
pub fn i0(x: f64) -> f64 {
    let ax = x.abs();
    if ax < SWITCH {
        series(ax)
    } else {
        asymptotic_scaled(ax) * ax.exp()
    }
}

/// Exponentially scaled `exp(-|x|) I0(x)`, finite for every `x`.
pub fn i0e(x: f64) -> f64 {
    let ax = x.abs();
    if ax < SWITCH {
        series(ax) * (-ax).exp()
    } else {
        asymptotic_scaled(ax)
    }
}

/// `ln I0(x)`.
pub fn ln_i0(x: f64) -> f64 {
    let ax = x.abs();
    i0e(ax).ln() + ax
}

fn series(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    while term > f64::EPSILON * 1e-2 * sum {
        term *= q / (k * k);
        sum += term;
        k += 1.0;
    }
    sum
}

fn asymptotic_scaled(x: f64) -> f64 {
    let mut term = 1.0;
    let mut sum = 1.0;
    let mut k = 1.0;
    loop {
        let next = term * (2.0 * k - 1.0) * (2.0 * k - 1.0) / (8.0 * k * x);
        if next < f64::EPSILON * 1e-2 * sum || next > term {
            break;
        }
        term = next;
        sum += term;
        k += 1.0;
    }
    sum / (2.0 * std::f64::consts::PI * x).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    /// `(1/pi) int_0^pi exp(x (cos t - 1)) dt`, trapezoid on a periodic
    /// integrand (spectrally accurate).
    fn scaled_oracle(x: f64) -> f64 {
        let n = 4096;
        let h = PI / n as f64;
        let mut s = 0.5 * (1.0 + (-2.0 * x).exp());
        for j in 1..n {
            s += (x * ((j as f64 * h).cos() - 1.0)).exp();
        }
        s * h / PI
    }

    #[test]
    fn value_at_zero_is_one() {
        assert_eq!(i0(0.0), 1.0);
        assert_eq!(i0e(0.0), 1.0);
    }

    #[test]
    fn matches_integral_representation() {
        for x in [
            1e-3, 0.5, 1.0, 5.0, 12.0, 29.9, 30.0, 30.1, 45.0, 100.0, 700.0, 5000.0,
        ] {
            let got = i0e(x);
            let want = scaled_oracle(x);
            assert!(
                ((got - want) / want).abs() < 1e-12,
                "x={x}: {got} vs {want}"
            );
        }
    }

    #[test]
    fn scaled_and_unscaled_agree() {
        for x in [0.3, 10.0, 40.0, 200.0] {
            assert!(((i0(x) * (-x).exp() - i0e(x)) / i0e(x)).abs() < 1e-13);
            assert!((ln_i0(x) - i0(x).ln()).abs() < 1e-12 * i0(x).ln().max(1.0));
        }
        assert_eq!(i0(-3.0), i0(3.0));
    }

    #[test]
    fn known_values() {
        assert!((i0(1.0) - 1.266_065_877_752_008_4).abs() < 1e-15);
        assert!((i0(10.0) - 2_815.716_628_466_254).abs() < 1e-9);
    }
}
