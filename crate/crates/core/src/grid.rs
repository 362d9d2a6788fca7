//! Sample grids.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

/// Points from `lo` to `hi` (both included, `0 < lo <= hi`) with `per_decade`
/// points per factor of ten.
pub fn log_spaced(lo: f64, hi: f64, per_decade: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi >= lo, "log grid needs 0 < lo <= hi");
    let decades = (hi / lo).log10();
    let n = ((decades * per_decade as f64).ceil() as usize).max(1);
    let (l0, l1) = (lo.ln(), hi.ln());
    let mut out: Vec<f64> = (0..=n).map(|i| (l0 + (l1 - l0) * i as f64 / n as f64).exp()).collect();
    out[0] = lo;
    out[n] = hi;
    out
}

/// `n >= 2` evenly spaced points from `lo` to `hi`, both included.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2);
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Roughly uniform unit vectors in `dim` dimensions: `+-1` in one dimension,
/// an even circle in two, a Fibonacci sphere in three and fixed-seed
/// Gaussian directions otherwise. From three dimensions on the coordinate
/// axes are included.
pub fn directions(dim: usize, count: usize) -> Vec<Vec<f64>> {
    match dim {
        1 => vec![vec![1.0], vec![-1.0]],
        2 => (0..count.max(4))
            .map(|i| {
                let t = std::f64::consts::TAU * i as f64 / count.max(4) as f64;
                vec![t.cos(), t.sin()]
            })
            .collect(),
        _ => {
            let mut out: Vec<Vec<f64>> = Vec::new();
            for i in 0..dim {
                for s in [1.0, -1.0] {
                    let mut v = vec![0.0; dim];
                    v[i] = s;
                    out.push(v);
                }
            }
            if dim == 3 {
                let golden = std::f64::consts::PI * (3.0 - 5f64.sqrt());
                for i in 0..count {
                    let z = 1.0 - 2.0 * (i as f64 + 0.5) / count as f64;
                    let r = (1.0 - z * z).sqrt();
                    let t = golden * i as f64;
                    out.push(vec![r * t.cos(), r * t.sin(), z]);
                }
            } else {
                // Fixed-seed Gaussian directions keep the set reproducible.
                let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
                for _ in 0..count {
                    let mut v: Vec<f64> = (0..dim).map(|_| rng.sample::<f64, _>(StandardNormal)).collect();
                    let n = v.iter().map(|c| c * c).sum::<f64>().sqrt();
                    v.iter_mut().for_each(|c| *c /= n);
                    out.push(v);
                }
            }
            out
        }
    }
}
