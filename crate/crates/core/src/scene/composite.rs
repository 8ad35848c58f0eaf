use super::contact::GlueConfig;
use super::geometry::{Tower, Vec2, FLOOR_ID};
use crate::{Error, Result};

/// A maximal set of objects welded together by glue.
#[derive(Clone, Debug, PartialEq)]
pub struct CompositeBody {
    /// Sorted object ids.
    pub member_ids: Vec<usize>,
    pub total_mass: f64,
    pub com: Vec2,
    /// True iff the floor is a member.
    pub anchored: bool,
}

impl CompositeBody {
    pub fn contains(&self, id: usize) -> bool {
        self.member_ids.binary_search(&id).is_ok()
    }

    /// Member ids excluding the floor.
    pub fn block_ids(&self) -> impl Iterator<Item = usize> + '_ {
        self.member_ids.iter().copied().filter(|&id| id != FLOOR_ID)
    }
}

struct DisjointSet {
    parent: Vec<usize>,
}

impl DisjointSet {
    fn new(n: usize) -> Self {
        Self { parent: (0..n).collect() }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (ra, rb) = (self.find(a), self.find(b));
        // Smaller root wins so the representative is deterministic.
        if ra < rb {
            self.parent[rb] = ra;
        } else if rb < ra {
            self.parent[ra] = rb;
        }
    }
}

/// Group objects connected through glued contacts.
///
/// Composites are ordered by their smallest member id, so the floor's
/// composite is always first.
pub fn merge_composites(tower: &Tower, glue: &GlueConfig) -> Result<Vec<CompositeBody>> {
    let contacts = tower.contacts();
    if glue.len() != contacts.len() {
        return Err(Error::GlueLength { expected: contacts.len(), got: glue.len() });
    }
    let n = tower.n_objects();
    let mut dsu = DisjointSet::new(n);
    for i in glue.glued_indices() {
        dsu.union(contacts[i].lower_id, contacts[i].upper_id);
    }

    let mut slot_of_root = vec![usize::MAX; n];
    let mut out: Vec<CompositeBody> = Vec::new();
    for id in 0..n {
        let root = dsu.find(id);
        if slot_of_root[root] == usize::MAX {
            slot_of_root[root] = out.len();
            out.push(CompositeBody {
                member_ids: Vec::new(),
                total_mass: 0.0,
                com: Vec2::ZERO,
                anchored: false,
            });
        }
        let body = &mut out[slot_of_root[root]];
        body.member_ids.push(id);
        if id == FLOOR_ID {
            body.anchored = true;
        } else {
            let b = tower.block(id);
            body.total_mass += b.mass;
            body.com = body.com + b.center * b.mass;
        }
    }
    for body in &mut out {
        if body.total_mass > 0.0 {
            body.com = body.com * (1.0 / body.total_mass);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chain3() -> Tower {
        Tower::stacked(&[0.0, 0.2, 0.4], 0.4, 0.2).unwrap()
    }

    fn members(c: &[CompositeBody]) -> Vec<Vec<usize>> {
        c.iter().map(|b| b.member_ids.clone()).collect()
    }

    #[test]
    fn no_glue_gives_singletons() {
        let t = chain3();
        let c = merge_composites(&t, &GlueConfig::empty(3)).unwrap();
        assert_eq!(members(&c), vec![vec![0], vec![1], vec![2], vec![3]]);
        assert!(c[0].anchored && !c[1].anchored);
        assert_eq!(c[0].total_mass, 0.0);
    }

    #[test]
    fn all_glued_is_one_anchored_body() {
        let t = chain3();
        let c = merge_composites(&t, &GlueConfig::full(3)).unwrap();
        assert_eq!(members(&c), vec![vec![0, 1, 2, 3]]);
        assert!(c[0].anchored);
        assert!((c[0].com.x - 0.2).abs() < 1e-12);
        assert!((c[0].com.y - 0.6).abs() < 1e-12);
    }

    #[test]
    fn middle_glue_merges_pair() {
        let t = chain3();
        // contacts: (0,1), (1,2), (2,3)
        let g = GlueConfig::from_bits(vec![false, true, false]);
        let c = merge_composites(&t, &g).unwrap();
        assert_eq!(members(&c), vec![vec![0], vec![1, 2], vec![3]]);
        assert!((c[1].com.x - 0.1).abs() < 1e-12);
    }

    #[test]
    fn glue_length_is_checked() {
        assert!(matches!(
            merge_composites(&chain3(), &GlueConfig::empty(2)),
            Err(Error::GlueLength { expected: 3, got: 2 })
        ));
    }
}
