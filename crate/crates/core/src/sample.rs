//! Seeded low-discrepancy sampling of chart boxes.
//!
//! Uses the additive-recurrence (Kronecker) sequence with irrational strides
//! derived from the generalized golden ratio; the seed only shifts the start
//! point, so two runs with the same seed sample identical points.

/// Root of x^(d+1) = x + 1 (the "harmonious" number for dimension d).
fn phi(d: usize) -> f64 {
    let mut x = 2.0f64;
    for _ in 0..64 {
        x = (1.0 + x).powf(1.0 / (d as f64 + 1.0));
    }
    x
}

fn splitmix(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e3779b97f4a7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

/// `n` quasi-random points inside the box, deterministic in `seed`.
pub fn quasirandom_points(bounds: &[(f64, f64)], n: usize, seed: u64) -> Vec<Vec<f64>> {
    let d = bounds.len();
    let g = phi(d);
    let alphas: Vec<f64> = (1..=d).map(|k| (1.0 / g.powi(k as i32)).fract()).collect();
    let mut st = seed ^ 0xd1b54a32d192ed03;
    let offsets: Vec<f64> = (0..d)
        .map(|_| (splitmix(&mut st) >> 11) as f64 / ((1u64 << 53) as f64))
        .collect();
    (0..n)
        .map(|k| {
            (0..d)
                .map(|i| {
                    let u = (offsets[i] + (k as f64 + 1.0) * alphas[i]).fract();
                    let (lo, hi) = bounds[i];
                    lo + u * (hi - lo)
                })
                .collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_inside() {
        let b = [(-1.0, 1.0), (0.0, 2.0), (-0.5, 0.5)];
        let a = quasirandom_points(&b, 64, 7);
        let c = quasirandom_points(&b, 64, 7);
        assert_eq!(a, c);
        for p in &a {
            for (x, (lo, hi)) in p.iter().zip(&b) {
                assert!(x >= lo && x <= hi);
            }
        }
        let d = quasirandom_points(&b, 4, 8);
        assert_ne!(a[0], d[0]);
    }
}
