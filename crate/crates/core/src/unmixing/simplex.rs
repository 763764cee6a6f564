/// Euclidean projection onto the probability simplex `{x ≥ 0, Σx = 1}`, in place.
///
/// Sort-based: with `u` sorted descending and `c_j` its prefix sums, the
/// threshold is `θ = (c_ρ − 1)/ρ` for the largest `ρ` with `u_ρ > (c_ρ − 1)/ρ`.
pub fn project_simplex(v: &mut [f64]) {
    let n = v.len();
    if n == 0 {
        return;
    }
    let mut sorted = v.to_vec();
    sorted.sort_unstable_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (j, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (j + 1) as f64;
        if u > t {
            theta = t;
        }
    }
    for x in v.iter_mut() {
        *x = (*x - theta).max(0.0);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn feasible_point_is_fixed() {
        let mut v = [0.2, 0.5, 0.3];
        project_simplex(&mut v);
        assert!((v[0] - 0.2).abs() < 1e-15 && (v[1] - 0.5).abs() < 1e-15);
    }

    #[test]
    fn far_point_goes_to_vertex() {
        let mut v = [10.0, 0.0, -3.0];
        project_simplex(&mut v);
        assert_eq!(v, [1.0, 0.0, 0.0]);
    }

    #[test]
    fn uniform_shift() {
        let mut v = [1.0, 1.0];
        project_simplex(&mut v);
        assert_eq!(v, [0.5, 0.5]);
    }

    proptest! {
        #[test]
        fn projection_is_feasible_and_optimal(
            v in proptest::collection::vec(-5.0f64..5.0, 1..8),
            probe in proptest::collection::vec(0.0f64..1.0, 8),
        ) {
            let mut p = v.clone();
            project_simplex(&mut p);
            prop_assert!(p.iter().all(|&x| x >= 0.0));
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            // Any other simplex point is no closer to v.
            let mut q: Vec<f64> = probe[..v.len()].to_vec();
            let s: f64 = q.iter().sum();
            if s > 0.0 {
                q.iter_mut().for_each(|x| *x /= s);
                let d = |a: &[f64]| a.iter().zip(&v).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
                prop_assert!(d(&p) <= d(&q) + 1e-12);
            }
        }
    }
}
