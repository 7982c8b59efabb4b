//! Seeded k-means with k-means++ initialization and a fixed iteration count.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::model::dot_f32;

/// Index of the nearest centroid (squared L2) for every point.
pub fn assign(points: &[f32], dim: usize, centroids: &[f32]) -> Vec<u32> {
    let norms: Vec<f32> = centroids.chunks_exact(dim).map(|c| dot_f32(c, c)).collect();
    points
        .chunks_exact(dim)
        .map(|p| nearest(p, centroids, &norms, dim).0)
        .collect()
}

/// `(index, squared distance)` of the nearest centroid.
#[inline]
pub fn nearest(p: &[f32], centroids: &[f32], norms: &[f32], dim: usize) -> (u32, f32) {
    let pn = dot_f32(p, p);
    let mut best = (0u32, f32::INFINITY);
    for (i, c) in centroids.chunks_exact(dim).enumerate() {
        // |p - c|^2 = |p|^2 - 2 p.c + |c|^2
        let d = pn - 2.0 * dot_f32(p, c) + norms[i];
        if d < best.1 {
            best = (i as u32, d);
        }
    }
    (best.0, best.1.max(0.0))
}

fn sq_dist(a: &[f32], b: &[f32]) -> f32 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Trains `k` centroids over `points` (row-major, `dim` columns).
///
/// Requires `1 <= k <= n_points`. Empty clusters keep their previous center.
pub fn train(points: &[f32], dim: usize, k: usize, iters: usize, rng: &mut ChaCha8Rng) -> Vec<f32> {
    let n = points.len() / dim;
    assert!(k >= 1 && k <= n, "k-means needs 1 <= k <= n (k={k}, n={n})");
    let row = |i: usize| &points[i * dim..(i + 1) * dim];

    // k-means++ seeding.
    let mut centroids = Vec::with_capacity(k * dim);
    let first = rng.random_range(0..n);
    centroids.extend_from_slice(row(first));
    let mut d2: Vec<f32> = (0..n).map(|i| sq_dist(row(i), row(first))).collect();
    while centroids.len() < k * dim {
        let total: f64 = d2.iter().map(|&d| d as f64).sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &d) in d2.iter().enumerate() {
                target -= d as f64;
                if target < 0.0 && d > 0.0 {
                    chosen = i;
                    break;
                }
            }
            while d2[chosen] == 0.0 {
                chosen -= 1;
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let c = row(pick).to_vec();
        for (i, d) in d2.iter_mut().enumerate() {
            *d = d.min(sq_dist(row(i), &c));
        }
        centroids.extend_from_slice(&c);
    }

    let mut sums = vec![0f64; k * dim];
    let mut counts = vec![0usize; k];
    for _ in 0..iters {
        let labels = assign(points, dim, &centroids);
        sums.iter_mut().for_each(|s| *s = 0.0);
        counts.iter_mut().for_each(|c| *c = 0);
        for (i, &l) in labels.iter().enumerate() {
            let l = l as usize;
            counts[l] += 1;
            for (s, &x) in sums[l * dim..(l + 1) * dim].iter_mut().zip(row(i)) {
                *s += x as f64;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let inv = 1.0 / counts[c] as f64;
                for j in 0..dim {
                    centroids[c * dim + j] = (sums[c * dim + j] * inv) as f32;
                }
            }
        }
    }
    centroids
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn recovers_distinct_points() {
        let pts: Vec<f32> = vec![0.0, 0.0, 5.0, 5.0, -3.0, 1.0];
        let mut data = Vec::new();
        for _ in 0..4 {
            data.extend_from_slice(&pts);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = train(&data, 2, 3, 20, &mut rng);
        let mut got: Vec<(i32, i32)> = c
            .chunks(2)
            .map(|p| (p[0].round() as i32, p[1].round() as i32))
            .collect();
        got.sort();
        assert_eq!(got, vec![(-3, 1), (0, 0), (5, 5)]);
        for (p, l) in data.chunks(2).zip(assign(&data, 2, &c)) {
            assert_eq!(&c[l as usize * 2..l as usize * 2 + 2], p);
        }
    }

    #[test]
    fn identical_points_do_not_hang() {
        let data = vec![1.0f32; 10];
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let c = train(&data, 2, 3, 5, &mut rng);
        assert_eq!(c, vec![1.0; 6]);
    }
}
