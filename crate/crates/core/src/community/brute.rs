//! Exhaustive search over all set partitions; a test oracle for tiny graphs.

use super::{quality, Edge, Partition, QualityConfig};
use crate::error::{Error, Result};

pub const BRUTE_FORCE_MAX_NODES: usize = 10;

/// Globally optimal partition by enumerating every restricted growth string.
///
/// Ties within 1e-12 go to the partition with fewer clusters, then to the
/// lexicographically smallest growth string. A graph without edges yields
/// singletons.
pub fn brute_force_best_partition(edges: &[Edge], n: usize, cfg: &QualityConfig) -> Result<Partition> {
    if n > BRUTE_FORCE_MAX_NODES {
        return Err(Error::TooManyNodes {
            n,
            max: BRUTE_FORCE_MAX_NODES,
        });
    }
    if edges.iter().all(|&(u, v, _)| u == v) {
        return Ok(Partition::singletons(n));
    }
    let mut rgs = vec![0usize; n];
    // max label used in rgs[..=i]
    let mut prefix_max = vec![0usize; n];
    let mut best: Option<(f64, usize, Partition)> = None;
    loop {
        let p = Partition::from_labels(&rgs);
        let q = quality(edges, n, &p, cfg);
        let clusters = prefix_max[n - 1] + 1;
        let better = match &best {
            None => true,
            Some((bq, bc, _)) => q > bq + 1e-12 || ((q - bq).abs() <= 1e-12 && clusters < *bc),
        };
        if better {
            best = Some((q, clusters, p));
        }

        // next restricted growth string
        let mut i = n - 1;
        loop {
            if i == 0 {
                return Ok(best.unwrap().2);
            }
            if rgs[i] <= prefix_max[i - 1] {
                rgs[i] += 1;
                prefix_max[i] = prefix_max[i - 1].max(rgs[i]);
                for j in i + 1..n {
                    rgs[j] = 0;
                    prefix_max[j] = prefix_max[i];
                }
                break;
            }
            i -= 1;
        }
    }
}
