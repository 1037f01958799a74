//! Independent numerical oracles for tests. Nothing here calls into the
//! library's own numerics.
#![allow(dead_code)]

use std::f64::consts::PI;

/// erfc for z >= 0: positive-term series below 3, Lentz continued fraction
/// above.
pub fn erfc_oracle(z: f64) -> f64 {
    assert!(z >= 0.0);
    if z < 3.0 {
        // erf(z) = 2/√π e^{-z²} Σ 2^n z^{2n+1} / (2n+1)!!
        let mut term = z;
        let mut sum = z;
        let mut n = 0.0;
        while term > 1e-18 * sum {
            n += 1.0;
            term *= 2.0 * z * z / (2.0 * n + 1.0);
            sum += term;
        }
        1.0 - 2.0 / PI.sqrt() * (-z * z).exp() * sum
    } else {
        // erfc(z) = e^{-z²}/√π · 1/(z + (1/2)/(z + 1/(z + (3/2)/(z + ...))))
        let tiny = 1e-300;
        let mut f = z;
        let mut c = z;
        let mut d = 0.0;
        for k in 1..500 {
            let a = k as f64 / 2.0;
            d = z + a * d;
            d = if d.abs() < tiny { tiny } else { d };
            c = z + a / c;
            c = if c.abs() < tiny { tiny } else { c };
            d = 1.0 / d;
            let delta = c * d;
            f *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        (-z * z).exp() / PI.sqrt() / f
    }
}

pub fn phi_oracle(x: f64) -> f64 {
    let z = x / std::f64::consts::SQRT_2;
    if z <= 0.0 {
        0.5 * erfc_oracle(-z)
    } else {
        1.0 - 0.5 * erfc_oracle(z)
    }
}

pub fn pdf_oracle(x: f64) -> f64 {
    (-0.5 * x * x).exp() / (2.0 * PI).sqrt()
}

/// Composite Simpson rule with `n` (even) intervals.
pub fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
    assert!(n.is_multiple_of(2));
    let h = (b - a) / n as f64;
    let mut s = f(a) + f(b);
    for i in 1..n {
        let x = a + i as f64 * h;
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
    }
    s * h / 3.0
}

/// Mean and variance of `w` under `p(w) ∝ Φ(r·w) N(w; μ, σ²)`, by
/// quadrature in the standardized coordinate.
pub fn probit_posterior_moments(mu: f64, var: f64, r: f64) -> (f64, f64) {
    let sd = var.sqrt();
    let lik = |z: f64| phi_oracle(r * (mu + sd * z)) * pdf_oracle(z);
    let n = 40_000;
    let z0 = simpson(lik, -12.0, 12.0, n);
    let z1 = simpson(|z| z * lik(z), -12.0, 12.0, n) / z0;
    let z2 = simpson(|z| z * z * lik(z), -12.0, 12.0, n) / z0;
    (mu + sd * z1, var * (z2 - z1 * z1))
}

/// ln Γ(x) for x > 0 by the Lanczos approximation (g = 7, n = 9).
pub fn ln_gamma_oracle(x: f64) -> f64 {
    const G: f64 = 7.0;
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    if x < 0.5 {
        return (PI / (PI * x).sin()).ln() - ln_gamma_oracle(1.0 - x);
    }
    let x = x - 1.0;
    let mut a = C[0];
    let t = x + G + 0.5;
    for (i, &c) in C.iter().enumerate().skip(1) {
        a += c / (x + i as f64);
    }
    0.5 * (2.0 * PI).ln() + (x + 0.5) * t.ln() - t + a.ln()
}

/// Upper regularized incomplete gamma Q(a, x): series for x < a + 1,
/// Lentz continued fraction otherwise.
pub fn gamma_q_oracle(a: f64, x: f64) -> f64 {
    if x <= 0.0 {
        return 1.0;
    }
    let front = (-x + a * x.ln() - ln_gamma_oracle(a)).exp();
    if x < a + 1.0 {
        let mut term = 1.0 / a;
        let mut sum = term;
        let mut n = a;
        for _ in 0..100_000 {
            n += 1.0;
            term *= x / n;
            sum += term;
            if term < sum * 1e-17 {
                break;
            }
        }
        1.0 - front * sum
    } else {
        let tiny = 1e-300;
        let mut b = x + 1.0 - a;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..100_000 {
            let an = -(i as f64) * (i as f64 - a);
            b += 2.0;
            d = an * d + b;
            if d.abs() < tiny {
                d = tiny;
            }
            c = b + an / c;
            if c.abs() < tiny {
                c = tiny;
            }
            d = 1.0 / d;
            let delta = d * c;
            h *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        front * h
    }
}

/// Chi-square survival function.
pub fn chi_square_sf_oracle(stat: f64, df: usize) -> f64 {
    gamma_q_oracle(df as f64 / 2.0, stat / 2.0)
}
