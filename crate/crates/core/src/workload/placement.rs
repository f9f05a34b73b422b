use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;
use crate::trace::Placement;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "scheme", content = "seed")]
pub enum PlacementScheme {
    /// Contiguous chunks: expert `l` on rank `l / (E/P)`.
    Block,
    /// Expert `l` on rank `l mod P`.
    RoundRobin,
    /// Seeded shuffle of the block layout.
    Random(u64),
}

pub fn make_placement(experts: usize, ranks: usize, scheme: PlacementScheme) -> Result<Placement> {
    if ranks == 0 || experts == 0 || experts % ranks != 0 {
        return Err(Error::Divisibility { experts, ranks });
    }
    let per = experts / ranks;
    let map = match scheme {
        PlacementScheme::Block => (0..experts).map(|l| l / per).collect(),
        PlacementScheme::RoundRobin => (0..experts).map(|l| l % ranks).collect(),
        PlacementScheme::Random(s) => {
            let mut v: Vec<usize> = (0..experts).map(|l| l / per).collect();
            v.shuffle(&mut seed::rng(
                s,
                "placement",
                &[experts as u64, ranks as u64],
            ));
            v
        }
    };
    Placement::new(ranks, map)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_schemes() {
        let b = make_placement(8, 4, PlacementScheme::Block).unwrap();
        assert_eq!(b.as_slice(), &[0, 0, 1, 1, 2, 2, 3, 3]);
        let r = make_placement(8, 4, PlacementScheme::RoundRobin).unwrap();
        assert_eq!(r.as_slice(), &[0, 1, 2, 3, 0, 1, 2, 3]);
    }

    #[test]
    fn random_is_seeded_and_balanced() {
        let a = make_placement(64, 8, PlacementScheme::Random(5)).unwrap();
        let b = make_placement(64, 8, PlacementScheme::Random(5)).unwrap();
        let c = make_placement(64, 8, PlacementScheme::Random(6)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_eq!(a.experts_per_rank(), 8);
    }

    #[test]
    fn divisibility() {
        assert!(matches!(
            make_placement(10, 4, PlacementScheme::Block),
            Err(Error::Divisibility { .. })
        ));
    }
}
