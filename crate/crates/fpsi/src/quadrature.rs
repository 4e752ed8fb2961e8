//! Gauss-Legendre rules on the unit interval and their tensor products.

use crate::scalar::Real;

/// Points and weights of the n-point Gauss-Legendre rule on [0, 1].
pub fn gauss_unit<T: Real>(n: usize) -> (Vec<T>, Vec<T>) {
    let (x, w): (&[f64], &[f64]) = match n {
        1 => (&[0.0], &[2.0]),
        2 => (&[-0.577_350_269_189_625_8, 0.577_350_269_189_625_8], &[1.0, 1.0]),
        3 => (
            &[-0.774_596_669_241_483_4, 0.0, 0.774_596_669_241_483_4],
            &[5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0],
        ),
        4 => (
            &[
                -0.861_136_311_594_052_6,
                -0.339_981_043_584_856_3,
                0.339_981_043_584_856_3,
                0.861_136_311_594_052_6,
            ],
            &[
                0.347_854_845_137_453_9,
                0.652_145_154_862_546_1,
                0.652_145_154_862_546_1,
                0.347_854_845_137_453_9,
            ],
        ),
        5 => (
            &[
                -0.906_179_845_938_664,
                -0.538_469_310_105_683_1,
                0.0,
                0.538_469_310_105_683_1,
                0.906_179_845_938_664,
            ],
            &[
                0.236_926_885_056_189_1,
                0.478_628_670_499_366_5,
                0.568_888_888_888_888_9,
                0.478_628_670_499_366_5,
                0.236_926_885_056_189_1,
            ],
        ),
        _ => panic!("gauss rule with {n} points not tabulated"),
    };
    let half = T::lit(0.5);
    (
        x.iter().map(|&v| half * (T::lit(v) + T::one())).collect(),
        w.iter().map(|&v| half * T::lit(v)).collect(),
    )
}

/// Tensor rule on the unit square: (s, t, weight).
pub fn gauss_square<T: Real>(n: usize) -> Vec<(T, T, T)> {
    let (x, w) = gauss_unit::<T>(n);
    let mut out = Vec::with_capacity(n * n);
    for j in 0..n {
        for i in 0..n {
            out.push((x[i], x[j], w[i] * w[j]));
        }
    }
    out
}

/// Tensor rule on the unit cube: ([s, t, u], weight).
pub fn gauss_cube<T: Real>(n: usize) -> Vec<([T; 3], T)> {
    let (x, w) = gauss_unit::<T>(n);
    let mut out = Vec::with_capacity(n * n * n);
    for k in 0..n {
        for j in 0..n {
            for i in 0..n {
                out.push(([x[i], x[j], x[k]], w[i] * w[j] * w[k]));
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn integrates_monomials_exactly() {
        for n in 1..=5 {
            let (x, w) = gauss_unit::<f64>(n);
            for p in 0..(2 * n) {
                let q: f64 = x.iter().zip(&w).map(|(a, b)| b * a.powi(p as i32)).sum();
                assert!((q - 1.0 / (p as f64 + 1.0)).abs() < 1e-14, "n={n} p={p}");
            }
        }
    }

    #[test]
    fn cube_weights_sum_to_one() {
        let s: f64 = gauss_cube::<f64>(3).iter().map(|q| q.1).sum();
        assert!((s - 1.0).abs() < 1e-15);
    }
}
