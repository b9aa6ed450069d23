//! Exact against double-precision orbits on a short prefix.

use erglim_core::cfmaps::cylinder_prefix;
use erglim_core::{ExactEngine, FloatEngine, MapId, Start};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Agreement {
    pub map: MapId,
    pub digits: usize,
    pub total: u64,
    pub agree: u64,
    /// `(seed, first step that differs)`; the step is `digits` when the
    /// exact engine itself failed.
    pub mismatches: Vec<(u64, usize)>,
}

impl Agreement {
    pub fn fraction(&self) -> f64 {
        self.agree as f64 / self.total as f64
    }
}

/// Compares the first `digits` cylinder indices of both engines for each
/// seed. Float trouble (a boundary hit) counts as disagreement.
pub fn engine_agreement(map: MapId, seeds: &[u64], digits: usize, start: &Start) -> Agreement {
    let results: Vec<Option<usize>> = seeds
        .par_iter()
        .map(|&seed| {
            let exact = cylinder_prefix(&mut ExactEngine::new(map, seed, start), digits);
            let float = cylinder_prefix(&mut FloatEngine::new(map, seed, start), digits);
            match (exact, float) {
                (Ok(a), Ok(b)) if a == b => None,
                (Ok(a), Ok(b)) => Some(a.iter().zip(&b).take_while(|(x, y)| x == y).count()),
                (Ok(a), Err((b, _))) => Some(a.iter().zip(&b).take_while(|(x, y)| x == y).count()),
                (Err(_), _) => Some(digits),
            }
        })
        .collect();
    let mismatches: Vec<(u64, usize)> = seeds
        .iter()
        .zip(&results)
        .filter_map(|(&s, r)| r.map(|k| (s, k)))
        .collect();
    Agreement {
        map,
        digits,
        total: seeds.len() as u64,
        agree: (seeds.len() - mismatches.len()) as u64,
        mismatches,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn most_short_prefixes_agree() {
        for map in MapId::ALL {
            let seeds: Vec<u64> = (0..50).collect();
            let a = engine_agreement(map, &seeds, 10, &Start::UniformE);
            assert!(a.fraction() >= 0.9, "{a:?}");
        }
    }
}
