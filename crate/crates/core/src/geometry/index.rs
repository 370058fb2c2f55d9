use rstar::primitives::{GeomWithData, Rectangle};
use rstar::{RTree, AABB};

use super::BBox;

type Entry = GeomWithData<Rectangle<[f64; 2]>, usize>;

/// Bounding-box R-tree over a fixed set of polygons, addressed by position.
pub struct PolygonIndex {
    tree: RTree<Entry>,
}

impl PolygonIndex {
    pub fn new(boxes: impl IntoIterator<Item = BBox>) -> Self {
        let entries = boxes
            .into_iter()
            .enumerate()
            .filter(|(_, b)| !b.is_empty())
            .map(|(i, b)| {
                GeomWithData::new(
                    Rectangle::from_corners([b.min_x, b.min_y], [b.max_x, b.max_y]),
                    i,
                )
            })
            .collect();
        Self {
            tree: RTree::bulk_load(entries),
        }
    }

    /// Ids whose boxes meet the probe box, in ascending order.
    pub fn query(&self, probe: &BBox) -> Vec<usize> {
        let env = AABB::from_corners([probe.min_x, probe.min_y], [probe.max_x, probe.max_y]);
        let mut ids: Vec<usize> = self
            .tree
            .locate_in_envelope_intersecting(&env)
            .map(|e| e.data)
            .collect();
        ids.sort_unstable();
        ids
    }

    pub fn len(&self) -> usize {
        self.tree.size()
    }

    pub fn is_empty(&self) -> bool {
        self.tree.size() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn disjoint_probe_is_empty() {
        let idx = PolygonIndex::new([BBox::new(0.0, 0.0, 1.0, 1.0)]);
        assert!(idx.query(&BBox::new(5.0, 5.0, 6.0, 6.0)).is_empty());
    }

    #[test]
    fn probe_equal_to_member() {
        let b = BBox::new(2.0, 2.0, 3.0, 4.0);
        let idx = PolygonIndex::new([BBox::new(0.0, 0.0, 1.0, 1.0), b]);
        assert!(idx.query(&b).contains(&1));
    }

    #[test]
    fn no_false_negatives_against_scan() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let rand_box = |rng: &mut ChaCha8Rng| {
            let x = rng.gen_range(0.0..100.0);
            let y = rng.gen_range(0.0..100.0);
            BBox::new(x, y, x + rng.gen_range(0.1..20.0), y + rng.gen_range(0.1..20.0))
        };
        let boxes: Vec<BBox> = (0..10).map(|_| rand_box(&mut rng)).collect();
        let idx = PolygonIndex::new(boxes.clone());
        for _ in 0..200 {
            let probe = rand_box(&mut rng);
            let got = idx.query(&probe);
            for (i, b) in boxes.iter().enumerate() {
                if b.intersects(&probe) {
                    assert!(got.contains(&i), "missed {i}");
                }
            }
        }
    }
}
