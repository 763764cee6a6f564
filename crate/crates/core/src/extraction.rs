//! Reference endmember extraction and pure-pixel selection.

use std::cmp::Ordering;

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result, Warning};
use crate::model::{EndmemberMatrix, ImageCube};

/// Angle in radians between two spectra, in `[0, π]`.
///
/// Evaluated as `2·atan2(‖x̂ − ŷ‖, ‖x̂ + ŷ‖)` on the normalized vectors, which
/// equals `arccos(xᵀy / ‖x‖‖y‖)` but stays accurate near 0 and π.
pub fn spectral_angle(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::shape(format!(
            "spectra have {} and {} bands",
            x.len(),
            y.len()
        )));
    }
    let nx = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    let ny = y.iter().map(|v| v * v).sum::<f64>().sqrt();
    if !(nx > 0.0) || !(ny > 0.0) {
        return Err(Error::arg("spectral angle of a zero-norm spectrum"));
    }
    Ok(unit_angle(x, nx, y, ny))
}

pub(crate) fn unit_angle(x: &[f64], nx: f64, y: &[f64], ny: f64) -> f64 {
    let (mut diff, mut sum) = (0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (u, v) = (a / nx, b / ny);
        diff += (u - v) * (u - v);
        sum += (u + v) * (u + v);
    }
    2.0 * diff.sqrt().atan2(sum.sqrt())
}

/// How pure pixels are selected for each endmember.
#[derive(Debug, Clone, PartialEq)]
pub enum PurePolicy {
    /// Every pixel whose angle to the endmember is below this many radians.
    Threshold(f64),
    /// The given number of smallest-angle pixels for each endmember.
    Counts(Vec<usize>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct PurePixelSets {
    /// One list of `(n1, n2)` coordinates per endmember, sorted lexicographically.
    pub sets: Vec<Vec<(usize, usize)>>,
    /// The threshold for [`PurePolicy::Threshold`]; for [`PurePolicy::Counts`]
    /// the largest angle that made it into any set.
    pub threshold_used: f64,
    pub warnings: Vec<Warning>,
}

impl PurePixelSets {
    pub fn empty(endmembers: usize) -> Self {
        Self {
            sets: vec![Vec::new(); endmembers],
            threshold_used: 0.0,
            warnings: Vec::new(),
        }
    }

    pub fn from_sets(sets: Vec<Vec<(usize, usize)>>) -> Self {
        Self {
            sets,
            threshold_used: 0.0,
            warnings: Vec::new(),
        }
    }

    pub fn endmembers(&self) -> usize {
        self.sets.len()
    }

    pub fn total(&self) -> usize {
        self.sets.iter().map(Vec::len).sum()
    }

    /// Per-pixel membership: `Some(k)` when pixel `n = n1 + N1·n2` is pure for endmember `k`.
    pub fn membership(&self, n1: usize, n2: usize) -> Result<Vec<Option<usize>>> {
        let mut out = vec![None; n1 * n2];
        for (k, set) in self.sets.iter().enumerate() {
            for &(a, b) in set {
                if a >= n1 || b >= n2 {
                    return Err(Error::arg(format!(
                        "pure pixel ({a}, {b}) lies outside the {n1}x{n2} image"
                    )));
                }
                let n = a + n1 * b;
                if let Some(prev) = out[n] {
                    return Err(Error::arg(format!(
                        "pixel ({a}, {b}) is pure for both endmember {prev} and {k}"
                    )));
                }
                out[n] = Some(k);
            }
        }
        Ok(out)
    }

    /// Swaps endmember labels; set `k` of the result is set `perm[k]` of `self`.
    pub fn permuted(&self, perm: &[usize]) -> PurePixelSets {
        PurePixelSets {
            sets: perm.iter().map(|&p| self.sets[p].clone()).collect(),
            threshold_used: self.threshold_used,
            warnings: self.warnings.clone(),
        }
    }
}

/// Angles of every pixel (rows) to every endmember (columns); zero-norm pixels get `+∞`.
pub fn angle_table(cube: &ImageCube, m0: &EndmemberMatrix) -> Result<DMatrix<f64>> {
    if cube.bands() != m0.bands() {
        return Err(Error::shape(format!(
            "cube has {} bands, endmembers have {}",
            cube.bands(),
            m0.bands()
        )));
    }
    let refs: Vec<(Vec<f64>, f64)> = (0..m0.count())
        .map(|k| {
            let c: Vec<f64> = m0.column(k).iter().copied().collect();
            let norm = c.iter().map(|v| v * v).sum::<f64>().sqrt();
            (c, norm)
        })
        .collect();
    Ok(DMatrix::from_fn(cube.pixels(), m0.count(), |n, k| {
        let px = cube.pixel(n);
        let norm = px.norm();
        if norm > 0.0 {
            unit_angle(px.as_slice(), norm, &refs[k].0, refs[k].1)
        } else {
            f64::INFINITY
        }
    }))
}

/// Pixels whose angle to endmember `k` is strictly below `threshold`, before
/// any conflict resolution between endmembers.
pub fn pixels_within_angle(
    cube: &ImageCube,
    m0: &EndmemberMatrix,
    k: usize,
    threshold: f64,
) -> Result<Vec<(usize, usize)>> {
    if k >= m0.count() {
        return Err(Error::arg(format!("endmember {k} out of range")));
    }
    let angles = angle_table(cube, m0)?;
    let mut out: Vec<(usize, usize)> = (0..cube.pixels())
        .filter(|&n| angles[(n, k)] < threshold)
        .map(|n| cube.coords(n))
        .collect();
    out.sort_unstable();
    Ok(out)
}

/// Builds the pure-pixel sets for every endmember of `m0`.
///
/// A pixel claimed by several endmembers goes to the one with the smallest
/// angle (lowest endmember index on exact ties). Equal angles within an
/// endmember are ranked by lexicographic `(n1, n2)` order.
pub fn find_pure_pixels(
    cube: &ImageCube,
    m0: &EndmemberMatrix,
    policy: &PurePolicy,
) -> Result<PurePixelSets> {
    let r = m0.count();
    let n = cube.pixels();
    let angles = angle_table(cube, m0)?;

    let mut claimed: Vec<Vec<usize>> = vec![Vec::new(); r];
    let threshold_used = match policy {
        PurePolicy::Threshold(t) => {
            if !(*t >= 0.0) {
                return Err(Error::arg(format!("pure-pixel threshold must be >= 0, got {t}")));
            }
            for (k, list) in claimed.iter_mut().enumerate() {
                list.extend((0..n).filter(|&p| angles[(p, k)] < *t));
            }
            *t
        }
        PurePolicy::Counts(counts) => {
            if counts.len() != r {
                return Err(Error::arg(format!(
                    "{} pure-pixel counts given for {r} endmembers",
                    counts.len()
                )));
            }
            if let Some(&c) = counts.iter().find(|&&c| c > n) {
                return Err(Error::arg(format!("pure-pixel count {c} exceeds {n} pixels")));
            }
            let mut largest: f64 = 0.0;
            for (k, list) in claimed.iter_mut().enumerate() {
                let mut order: Vec<usize> = (0..n).filter(|&p| angles[(p, k)].is_finite()).collect();
                order.sort_by(|&a, &b| {
                    angles[(a, k)]
                        .total_cmp(&angles[(b, k)])
                        .then_with(|| cube.coords(a).cmp(&cube.coords(b)))
                });
                order.truncate(counts[k]);
                if let Some(&last) = order.last() {
                    largest = largest.max(angles[(last, k)]);
                }
                list.extend(order);
            }
            largest
        }
    };

    // Resolve pixels claimed by more than one endmember.
    let mut owner: Vec<Option<usize>> = vec![None; n];
    for (k, list) in claimed.iter().enumerate() {
        for &p in list {
            owner[p] = match owner[p] {
                Some(j) if angles[(p, j)].total_cmp(&angles[(p, k)]) != Ordering::Greater => Some(j),
                _ => Some(k),
            };
        }
    }
    let mut sets = vec![Vec::new(); r];
    for (p, o) in owner.iter().enumerate() {
        if let Some(k) = o {
            sets[*k].push(cube.coords(p));
        }
    }
    let mut warnings = Vec::new();
    for (k, set) in sets.iter_mut().enumerate() {
        set.sort_unstable();
        if set.is_empty() {
            log::debug!("no pure pixels found for endmember {k}");
            warnings.push(Warning::EmptyPureSet { endmember: k });
        }
    }
    Ok(PurePixelSets {
        sets,
        threshold_used,
        warnings,
    })
}

/// Endmembers picked by vertex component analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub endmembers: EndmemberMatrix,
    /// Linear pixel index of every extracted column, in extraction order.
    pub pixel_indices: Vec<usize>,
}

/// Relative singular-value floor used to decide the affine rank of the data.
const RANK_TOL: f64 = 1e-8;

/// Vertex component analysis.
///
/// The data is first reduced to `R` dimensions. When the estimated SNR is
/// above `15 + 10·log10(R)` dB the reduction is projective: pixels are
/// projected on the leading `R` singular directions and divided by their
/// inner product with the mean projection, which maps scaled copies of a
/// spectrum to one point. Otherwise the mean-removed data is projected on its
/// leading `R − 1` principal directions and lifted with a constant coordinate.
/// Endmembers are then picked one at a time as the pixel with the largest
/// `|fᵀy|` along a random direction `f` orthogonal to everything picked so far.
/// Negative entries of the picked spectra are clamped to zero.
pub fn extract_endmembers_vca(cube: &ImageCube, r: usize, seed: u64) -> Result<Extraction> {
    let (l, n) = (cube.bands(), cube.pixels());
    if r == 0 || r > l || r > n {
        return Err(Error::arg(format!(
            "cannot extract {r} endmembers from {n} pixels with {l} bands"
        )));
    }
    let data = cube.matrix();
    let mean = data.column_mean();
    let centered = DMatrix::from_fn(l, n, |b, p| data[(b, p)] - mean[b]);

    let d = r - 1;
    let basis = principal_directions(&centered, d)?;
    let projected = match projective_reduction(data, r, vca_snr_db(data, &centered, &mean, r)) {
        Some(y) => y,
        None => lifted_reduction(&centered, &basis, r),
    };

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked: Vec<usize> = Vec::with_capacity(r);
    let mut ortho: Vec<DVector<f64>> = Vec::with_capacity(r);
    // The constant coordinate is excluded from the first direction.
    let mut aux = DVector::zeros(r);
    aux[d] = 1.0;
    for i in 0..r {
        let w = DVector::from_fn(r, |_, _| StandardNormal.sample(&mut rng));
        let mut f = w.clone();
        let against: &[DVector<f64>] = if i == 0 { std::slice::from_ref(&aux) } else { &ortho };
        for q in against {
            let c = q.dot(&f);
            f.axpy(-c, q, 1.0);
        }
        if f.norm() <= 1e-12 * w.norm() {
            f = w;
        }
        let scores = f.transpose() * &projected;
        let mut best = 0;
        for p in 1..n {
            if scores[p].abs() > scores[best].abs() {
                best = p;
            }
        }
        // Gram-Schmidt update of the span of the picked projections.
        let mut q = projected.column(best).clone_owned();
        for prev in &ortho {
            let c = prev.dot(&q);
            q.axpy(-c, prev, 1.0);
        }
        let qn = q.norm();
        if qn <= RANK_TOL * projected.column(best).norm().max(f64::MIN_POSITIVE) || picked.contains(&best) {
            return Err(Error::Degenerate {
                achieved: i,
                requested: r,
            });
        }
        ortho.push(q / qn);
        picked.push(best);
    }

    let values = DMatrix::from_fn(l, r, |b, k| data[(b, picked[k])].max(0.0));
    let endmembers = EndmemberMatrix::new(values).map_err(|_| Error::Degenerate {
        achieved: r - 1,
        requested: r,
    })?;
    Ok(Extraction {
        endmembers,
        pixel_indices: picked,
    })
}

/// SNR estimate used to choose the reduction: signal power is the energy
/// captured by the leading `r` principal directions plus the mean, corrected
/// for the noise that falls in that subspace.
fn vca_snr_db(data: &DMatrix<f64>, centered: &DMatrix<f64>, mean: &DVector<f64>, r: usize) -> f64 {
    let (l, n) = (data.nrows() as f64, data.ncols() as f64);
    let u = leading_left_vectors(centered, r);
    let py = data.norm_squared() / n;
    let px = (u.transpose() * centered).norm_squared() / n + mean.norm_squared();
    let noise = py - px;
    if noise <= 0.0 {
        return f64::INFINITY;
    }
    let signal = px - r as f64 / l * py;
    if signal <= 0.0 {
        return f64::NEG_INFINITY;
    }
    10.0 * (signal / noise).log10()
}

/// Projective reduction, or `None` when the SNR is below the threshold or a
/// pixel projects on the wrong side of the mean.
fn projective_reduction(data: &DMatrix<f64>, r: usize, snr_db: f64) -> Option<DMatrix<f64>> {
    if snr_db <= 15.0 + 10.0 * (r as f64).log10() {
        return None;
    }
    let u = leading_left_vectors(data, r);
    let x = u.transpose() * data;
    let xm = x.column_mean();
    let mut y = x;
    for mut c in y.column_iter_mut() {
        let s = c.dot(&xm);
        if s <= 0.0 {
            return None;
        }
        c /= s;
    }
    Some(y)
}

fn lifted_reduction(centered: &DMatrix<f64>, basis: &DMatrix<f64>, r: usize) -> DMatrix<f64> {
    let (d, n) = (r - 1, centered.ncols());
    let mut projected = DMatrix::zeros(r, n);
    if d > 0 {
        projected.rows_mut(0, d).copy_from(&(basis.transpose() * centered));
    }
    let lift = (0..n)
        .map(|p| projected.column(p).norm())
        .fold(0.0_f64, f64::max);
    projected.row_mut(d).fill(if lift > 0.0 { lift } else { 1.0 });
    projected
}

/// Leading `k` left singular vectors, by descending singular value; columns
/// beyond the rank of `m` are zero.
fn leading_left_vectors(m: &DMatrix<f64>, k: usize) -> DMatrix<f64> {
    let svd = m.clone().svd(true, false);
    let u = svd.u.as_ref().expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let mut out = DMatrix::zeros(m.nrows(), k);
    for (j, &i) in order.iter().take(k).enumerate() {
        out.set_column(j, &u.column(i));
    }
    out
}

/// Leading `d` left singular vectors of `centered`, erroring when the data
/// spans fewer than `d` affine dimensions.
fn principal_directions(centered: &DMatrix<f64>, d: usize) -> Result<DMatrix<f64>> {
    let l = centered.nrows();
    if d == 0 {
        return Ok(DMatrix::zeros(l, 0));
    }
    let svd = centered.clone().svd(true, false);
    let u = svd.u.as_ref().expect("left singular vectors requested");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&a, &b| svd.singular_values[b].total_cmp(&svd.singular_values[a]));
    let smax = svd.singular_values[order[0]];
    let affine = if smax > 0.0 {
        order
            .iter()
            .filter(|&&i| svd.singular_values[i] > RANK_TOL * smax)
            .count()
    } else {
        0
    };
    if affine < d {
        return Err(Error::Degenerate {
            achieved: affine + 1,
            requested: d + 1,
        });
    }
    Ok(u.select_columns(&order[..d]))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};

    fn cube_from_pixels(n1: usize, n2: usize, pixels: &[Vec<f64>]) -> ImageCube {
        let l = pixels[0].len();
        let data = DMatrix::from_fn(l, pixels.len(), |b, p| pixels[p][b]);
        ImageCube::new(n1, n2, data).unwrap()
    }

    fn em(cols: &[Vec<f64>]) -> EndmemberMatrix {
        let l = cols[0].len();
        EndmemberMatrix::new(DMatrix::from_fn(l, cols.len(), |b, k| cols[k][b])).unwrap()
    }

    #[test]
    fn angle_examples() {
        assert_eq!(spectral_angle(&[0.2, 0.4, 0.1], &[0.2, 0.4, 0.1]).unwrap(), 0.0);
        assert!((spectral_angle(&[1.0, 0.0], &[0.0, 1.0]).unwrap() - FRAC_PI_2).abs() < 1e-15);
        let a = spectral_angle(&[1.0, 1.0], &[1.0, 0.0]).unwrap();
        assert!((a - FRAC_PI_4).abs() < 1e-15);
    }

    #[test]
    fn angle_rejects_zero_norm() {
        assert!(matches!(
            spectral_angle(&[0.0, 0.0], &[1.0, 0.0]),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn angle_is_scale_invariant_and_symmetric() {
        let x = [0.3, 0.1, 0.7, 0.2];
        let y = [0.5, 0.4, 0.2, 0.1];
        let base = spectral_angle(&x, &y).unwrap();
        let scaled: Vec<f64> = x.iter().map(|v| v * 17.5).collect();
        assert!((spectral_angle(&scaled, &y).unwrap() - base).abs() < 1e-12);
        assert!((spectral_angle(&y, &x).unwrap() - base).abs() < 1e-15);
    }

    #[test]
    fn threshold_finds_exact_copy() {
        let m0 = em(&[vec![0.1, 0.5, 0.9], vec![0.8, 0.3, 0.1]]);
        let cube = cube_from_pixels(
            2,
            2,
            &[
                vec![0.1, 0.5, 0.9],
                vec![0.4, 0.4, 0.4],
                vec![0.45, 0.4, 0.5],
                vec![0.3, 0.35, 0.4],
            ],
        );
        let sets = find_pure_pixels(&cube, &m0, &PurePolicy::Threshold(1e-6)).unwrap();
        assert!(sets.sets[0].contains(&(0, 0)));
        assert_eq!(sets.warnings, vec![Warning::EmptyPureSet { endmember: 1 }]);
    }

    #[test]
    fn counts_pick_exact_matches() {
        let cols = vec![vec![1.0, 0.1, 0.2], vec![0.2, 1.0, 0.1], vec![0.1, 0.3, 1.0]];
        let m0 = em(&cols);
        let mixed = vec![0.5, 0.5, 0.5];
        // 3x3 image, diagonal pixel (i, i) holds endmember i.
        let mut pixels = vec![mixed; 9];
        for i in 0..3 {
            pixels[i + 3 * i] = cols[i].clone();
        }
        let cube = cube_from_pixels(3, 3, &pixels);
        let sets = find_pure_pixels(&cube, &m0, &PurePolicy::Counts(vec![1, 1, 1])).unwrap();
        for k in 0..3 {
            assert_eq!(sets.sets[k], vec![(k, k)]);
        }
        assert!(sets.warnings.is_empty());
    }

    #[test]
    fn conflicts_go_to_smallest_angle() {
        let m0 = em(&[vec![1.0, 0.0], vec![1.0, 0.2]]);
        let cube = cube_from_pixels(1, 2, &[vec![1.0, 0.15], vec![1.0, 0.01]]);
        let sets = find_pure_pixels(&cube, &m0, &PurePolicy::Threshold(0.5)).unwrap();
        assert_eq!(sets.sets[0], vec![(0, 1)]);
        assert_eq!(sets.sets[1], vec![(0, 0)]);
        sets.membership(1, 2).unwrap();
    }

    #[test]
    fn count_policy_validates_input() {
        let m0 = em(&[vec![1.0, 0.0]]);
        let cube = cube_from_pixels(1, 2, &[vec![1.0, 0.1], vec![0.2, 1.0]]);
        assert!(find_pure_pixels(&cube, &m0, &PurePolicy::Counts(vec![3])).is_err());
        assert!(find_pure_pixels(&cube, &m0, &PurePolicy::Counts(vec![1, 1])).is_err());
        assert!(find_pure_pixels(&cube, &m0, &PurePolicy::Threshold(-1.0)).is_err());
    }

    #[test]
    fn ties_break_lexicographically() {
        let m0 = em(&[vec![1.0, 0.5]]);
        let p = vec![1.0, 0.5];
        let cube = cube_from_pixels(2, 2, &[vec![0.1, 1.0], p.clone(), p.clone(), p]);
        // Pixels n=1,2,3 are (1,0), (0,1), (1,1): lexicographic winner is (0,1).
        let sets = find_pure_pixels(&cube, &m0, &PurePolicy::Counts(vec![1])).unwrap();
        assert_eq!(sets.sets[0], vec![(0, 1)]);
    }

    #[test]
    fn vca_recovers_simplex_vertices() {
        let verts = vec![
            vec![0.9, 0.1, 0.2, 0.3, 0.5],
            vec![0.1, 0.8, 0.3, 0.2, 0.1],
            vec![0.3, 0.2, 0.9, 0.6, 0.2],
        ];
        let mut pixels = verts.clone();
        pixels.extend(verts.iter().cloned());
        let cube = cube_from_pixels(2, 3, &pixels);
        for seed in 0..5 {
            let ex = extract_endmembers_vca(&cube, 3, seed).unwrap();
            let mut found: Vec<Vec<f64>> = (0..3)
                .map(|k| ex.endmembers.column(k).iter().copied().collect())
                .collect();
            found.sort_by(|a, b| a.partial_cmp(b).unwrap());
            let mut want = verts.clone();
            want.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert_eq!(found, want, "seed {seed}");
        }
    }

    #[test]
    fn vca_single_point() {
        let p = vec![0.2, 0.4, 0.6];
        let cube = cube_from_pixels(2, 2, &vec![p.clone(); 4]);
        let ex = extract_endmembers_vca(&cube, 1, 3).unwrap();
        assert_eq!(ex.endmembers.column(0).iter().copied().collect::<Vec<_>>(), p);
    }

    #[test]
    fn vca_reports_achieved_rank() {
        let p = vec![0.2, 0.4, 0.6];
        let q = vec![0.6, 0.4, 0.2];
        let cube = cube_from_pixels(2, 2, &[p.clone(), q.clone(), p, q]);
        match extract_endmembers_vca(&cube, 3, 0) {
            Err(Error::Degenerate { achieved, requested }) => {
                assert_eq!((achieved, requested), (2, 3));
            }
            other => panic!("expected degenerate error, got {other:?}"),
        }
    }

    #[test]
    fn vca_rejects_bad_counts() {
        let cube = cube_from_pixels(1, 2, &[vec![0.2, 0.4], vec![0.6, 0.1]]);
        assert!(matches!(extract_endmembers_vca(&cube, 0, 0), Err(Error::InvalidArgument(_))));
        assert!(matches!(extract_endmembers_vca(&cube, 3, 0), Err(Error::InvalidArgument(_))));
    }
}
