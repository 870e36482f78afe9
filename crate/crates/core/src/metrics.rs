//! Point-set distances and Monte-Carlo sweep summaries.

use std::fmt::Write as _;

use rayon::prelude::*;
use thiserror::Error;

use crate::geometry::Vec3;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("empty point set")]
    EmptySet,
}

fn nonempty(a: &[Vec3], b: &[Vec3]) -> Result<(), MetricsError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricsError::EmptySet);
    }
    Ok(())
}

/// `h(A, B) = max_a min_b |a - b|` by exhaustive pair enumeration.
pub fn directed_hausdorff_brute(a: &[Vec3], b: &[Vec3]) -> Result<f64, MetricsError> {
    nonempty(a, b)?;
    Ok(a.iter()
        .map(|p| b.iter().map(|q| (p - q).norm()).fold(f64::INFINITY, f64::min))
        .fold(0.0, f64::max))
}

/// Uniform bucket grid over a point set.
struct CellIndex<'a> {
    points: &'a [Vec3],
    lo: Vec3,
    cell: f64,
    dims: [i64; 3],
    /// Start offsets into `order`, one per cell plus a sentinel.
    starts: Vec<usize>,
    order: Vec<usize>,
}

impl<'a> CellIndex<'a> {
    fn new(points: &'a [Vec3]) -> Self {
        let mut lo = points[0];
        let mut hi = points[0];
        for p in points {
            lo = lo.inf(p);
            hi = hi.sup(p);
        }
        let extent = hi - lo;
        let volume_side = (extent.x.max(1e-12) * extent.y.max(1e-12) * extent.z.max(1e-12) / points.len() as f64).cbrt();
        let cell = volume_side.max(extent.max() / 64.0).max(1e-9);
        let dims = [0, 1, 2].map(|a| ((extent[a] / cell).floor() as i64 + 1).max(1));
        let mut index = Self {
            points,
            lo,
            cell,
            dims,
            starts: Vec::new(),
            order: Vec::new(),
        };
        let n_cells = (dims[0] * dims[1] * dims[2]) as usize;
        let keys: Vec<usize> = points.iter().map(|p| index.flat(index.cell_of(p))).collect();
        let mut counts = vec![0usize; n_cells + 1];
        for &k in &keys {
            counts[k + 1] += 1;
        }
        for i in 0..n_cells {
            counts[i + 1] += counts[i];
        }
        let mut fill = counts.clone();
        let mut order = vec![0; points.len()];
        for (i, &k) in keys.iter().enumerate() {
            order[fill[k]] = i;
            fill[k] += 1;
        }
        index.starts = counts;
        index.order = order;
        index
    }

    /// Unclamped cell coordinates of `p`.
    fn cell_of(&self, p: &Vec3) -> [i64; 3] {
        [0, 1, 2].map(|a| {
            let c = ((p[a] - self.lo[a]) / self.cell).floor();
            c.clamp(-1e15, 1e15) as i64
        })
    }

    fn flat(&self, c: [i64; 3]) -> usize {
        let c = [0, 1, 2].map(|a| c[a].clamp(0, self.dims[a] - 1));
        ((c[0] * self.dims[1] + c[1]) * self.dims[2] + c[2]) as usize
    }

    /// Smallest distance from `p` to any indexed point, or stops early once
    /// it is certain to be `<= stop_below`.
    fn nearest(&self, p: &Vec3, stop_below: f64) -> f64 {
        let c = self.cell_of(p);
        // Chebyshev distance from c to the grid box
        let r0 = (0..3)
            .map(|a| (-c[a]).max(c[a] - (self.dims[a] - 1)).max(0))
            .max()
            .unwrap_or(0);
        let r_max = (0..3)
            .map(|a| (c[a]).abs().max((c[a] - (self.dims[a] - 1)).abs()))
            .max()
            .unwrap_or(0);
        let mut best = f64::INFINITY;
        for r in r0..=r_max {
            // every point in ring r lies at least (r - 1) cells away
            let bound = (r - 1).max(0) as f64 * self.cell;
            if bound > best || best <= stop_below {
                break;
            }
            let span = |a: usize| ((c[a] - r).max(0), (c[a] + r).min(self.dims[a] - 1));
            let (x0, x1) = span(0);
            let (y0, y1) = span(1);
            let (z0, z1) = span(2);
            for i in x0..=x1 {
                for j in y0..=y1 {
                    let on_x = (i - c[0]).abs() == r;
                    for k in z0..=z1 {
                        let on_shell = on_x || (j - c[1]).abs() == r || (k - c[2]).abs() == r;
                        if !on_shell {
                            continue;
                        }
                        let flat = ((i * self.dims[1] + j) * self.dims[2] + k) as usize;
                        for &q in &self.order[self.starts[flat]..self.starts[flat + 1]] {
                            let d = (p - self.points[q]).norm();
                            if d < best {
                                best = d;
                            }
                        }
                    }
                }
            }
        }
        best
    }
}

/// `h(A, B) = max_a min_b |a - b|`.
///
/// `B` is bucketed into a uniform grid and each query walks outward shell by
/// shell until no closer point can exist. Queries whose nearest distance
/// already falls under a running lower bound of the answer stop early; the
/// returned maximum is bit-identical to [`directed_hausdorff_brute`].
pub fn directed_hausdorff(a: &[Vec3], b: &[Vec3]) -> Result<f64, MetricsError> {
    nonempty(a, b)?;
    if a.len() * b.len() <= 4096 {
        return directed_hausdorff_brute(a, b);
    }
    let index = CellIndex::new(b);
    // A cheap lower bound: the exact nearest distance of a few samples.
    let stride = (a.len() / 16).max(1);
    let seed = a
        .iter()
        .step_by(stride)
        .map(|p| index.nearest(p, -1.0))
        .fold(0.0, f64::max);
    Ok(a.par_iter()
        .map(|p| {
            let d = index.nearest(p, seed);
            // below `seed` the value cannot be the maximum
            if d <= seed {
                seed
            } else {
                d
            }
        })
        .reduce(|| seed, f64::max))
}

/// `H(A, B) = max(h(A, B), h(B, A))`.
pub fn hausdorff(a: &[Vec3], b: &[Vec3]) -> Result<f64, MetricsError> {
    Ok(directed_hausdorff(a, b)?.max(directed_hausdorff(b, a)?))
}

/// Mean and sample standard deviation; the deviation of a single value is 0.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

/// One Monte-Carlo outcome.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRun {
    pub param: f64,
    pub hausdorff: f64,
    pub directed: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub param: f64,
    pub runs: usize,
    pub mean_hausdorff: f64,
    pub std_hausdorff: f64,
    pub mean_directed: f64,
    pub std_directed: f64,
}

pub const SWEEP_CSV_HEADER: &str = "param,mean_hausdorff,std_hausdorff,mean_directed,std_directed";

/// Groups runs by parameter value (ascending) and summarizes each group.
pub fn sweep_stats(runs: &[SweepRun]) -> Vec<SweepRow> {
    let mut params: Vec<f64> = runs.iter().map(|r| r.param).collect();
    params.sort_by(f64::total_cmp);
    params.dedup();
    params
        .into_iter()
        .map(|param| {
            let group: Vec<&SweepRun> = runs.iter().filter(|r| r.param == param).collect();
            let h: Vec<f64> = group.iter().map(|r| r.hausdorff).collect();
            let d: Vec<f64> = group.iter().map(|r| r.directed).collect();
            let (mean_hausdorff, std_hausdorff) = mean_std(&h);
            let (mean_directed, std_directed) = mean_std(&d);
            SweepRow {
                param,
                runs: group.len(),
                mean_hausdorff,
                std_hausdorff,
                mean_directed,
                std_directed,
            }
        })
        .collect()
}

pub fn sweep_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(SWEEP_CSV_HEADER);
    out.push('\n');
    for r in rows {
        let _ = writeln!(
            out,
            "{},{:.9},{:.9},{:.9},{:.9}",
            r.param, r.mean_hausdorff, r.std_hausdorff, r.mean_directed, r.std_directed
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn v(x: f64, y: f64, z: f64) -> Vec3 {
        Vec3::new(x, y, z)
    }

    #[test]
    fn small_examples() {
        let a = vec![v(0.0, 0.0, 0.0), v(2.0, 0.0, 0.0)];
        let b = vec![v(0.0, 0.0, 0.0)];
        assert_eq!(directed_hausdorff(&a, &a).unwrap(), 0.0);
        assert_eq!(directed_hausdorff(&a, &b).unwrap(), 2.0);
        assert_eq!(directed_hausdorff(&b, &a).unwrap(), 0.0);
        assert_eq!(hausdorff(&a, &b).unwrap(), 2.0);
        assert_eq!(directed_hausdorff(&b, &[v(1.0, 0.0, 0.0)]).unwrap(), 1.0);
        assert_eq!(hausdorff(&[], &b), Err(MetricsError::EmptySet));
    }

    fn cloud(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<Vec3> {
        (0..n)
            .map(|_| v(rng.random::<f64>() * scale, rng.random::<f64>() * scale * 0.3, rng.random::<f64>() * scale * 0.2))
            .collect()
    }

    #[test]
    fn pruned_matches_brute_force() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for trial in 0..20 {
            let a = cloud(&mut rng, 100 + trial * 40, 3.0);
            let mut b = cloud(&mut rng, 500, 3.0);
            b.truncate(50 + trial * 20);
            assert_eq!(directed_hausdorff(&a, &b).unwrap(), directed_hausdorff_brute(&a, &b).unwrap());
            assert_eq!(directed_hausdorff(&b, &a).unwrap(), directed_hausdorff_brute(&b, &a).unwrap());
        }
    }

    #[test]
    fn distant_and_degenerate_sets() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let a = cloud(&mut rng, 300, 1.0);
        let far: Vec<Vec3> = cloud(&mut rng, 300, 1.0).into_iter().map(|p| p + v(40.0, -3.0, 7.0)).collect();
        assert_eq!(directed_hausdorff(&a, &far).unwrap(), directed_hausdorff_brute(&a, &far).unwrap());
        let line: Vec<Vec3> = (0..400).map(|i| v(i as f64 * 0.01, 0.0, 0.0)).collect();
        assert_eq!(directed_hausdorff(&a, &line).unwrap(), directed_hausdorff_brute(&a, &line).unwrap());
        let dup = vec![v(0.5, 0.5, 0.5); 300];
        assert_eq!(directed_hausdorff(&a, &dup).unwrap(), directed_hausdorff_brute(&a, &dup).unwrap());
    }

    #[test]
    fn sweep_examples() {
        let rows = sweep_stats(&[SweepRun { param: 1.0, hausdorff: 0.3, directed: 0.1 }]);
        assert_eq!((rows[0].mean_hausdorff, rows[0].std_hausdorff), (0.3, 0.0));
        let rows = sweep_stats(&[
            SweepRun { param: 2.0, hausdorff: 0.3, directed: 0.2 },
            SweepRun { param: 1.0, hausdorff: 0.7, directed: 0.7 },
            SweepRun { param: 2.0, hausdorff: 0.5, directed: 0.2 },
        ]);
        assert_eq!(rows.len(), 2);
        assert_eq!(rows[0].param, 1.0);
        assert!((rows[1].mean_hausdorff - 0.4).abs() < 1e-15);
        assert!((rows[1].std_hausdorff - 0.02f64.sqrt()).abs() < 1e-12);
        assert_eq!(rows[1].std_directed, 0.0);
        let csv = sweep_csv(&rows);
        assert!(csv.starts_with("param,mean_hausdorff,std_hausdorff,mean_directed,std_directed\n"));
        assert_eq!(csv.lines().count(), 3);
    }

    fn small_set() -> impl Strategy<Value = Vec<Vec3>> {
        prop::collection::vec((-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64).prop_map(|(x, y, z)| v(x, y, z)), 1..12)
    }

    proptest! {
        #[test]
        fn hausdorff_is_a_metric(a in small_set(), b in small_set(), c in small_set()) {
            let ab = hausdorff(&a, &b).unwrap();
            prop_assert_eq!(ab, hausdorff(&b, &a).unwrap());
            prop_assert_eq!(hausdorff(&a, &a).unwrap(), 0.0);
            prop_assert!(ab <= hausdorff(&a, &c).unwrap() + hausdorff(&c, &b).unwrap() + 1e-12);
        }
    }
}
