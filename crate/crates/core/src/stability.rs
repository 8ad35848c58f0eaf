//! Quasi-static stability: which blocks fall under gravity for a given glue
//! configuration.
//!
//! Glue welds objects into rigid composites. Every non-anchored composite
//! must be held in static equilibrium by compressive, friction-limited forces
//! at the endpoints of its unglued contact segments. Equilibrium is posed as a
//! linear program with signed slack on each balance row; composites whose
//! minimal slack is positive cannot be held and are removed, and the process
//! repeats on what remains.

use std::collections::VecDeque;

use crate::lp::{LinearProgram, Relation};
use crate::scene::{merge_composites, CompositeBody, Contact, GlueConfig, Tower, Vec2};
use crate::Result;

pub const DEFAULT_FRICTION: f64 = 0.7;
pub const DEFAULT_GRAVITY: f64 = 9.81;
/// Slack threshold relative to the heaviest composite's weight.
pub const EQUILIBRIUM_REL_TOL: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Physics {
    pub friction_mu: f64,
    pub gravity_g: f64,
}

impl Default for Physics {
    fn default() -> Self {
        Self { friction_mu: DEFAULT_FRICTION, gravity_g: DEFAULT_GRAVITY }
    }
}

#[derive(Clone, Debug)]
pub struct EquilibriumProblem {
    pub composites: Vec<CompositeBody>,
    /// Unglued contacts between two different composites.
    pub active_contacts: Vec<Contact>,
    pub friction_mu: f64,
    pub gravity_g: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SettleIteration {
    /// Minimal slack of every composite still standing at this iteration.
    pub slacks: Vec<f64>,
    /// Blocks removed at the end of this iteration.
    pub removed: Vec<usize>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SettleOutcome {
    /// Sorted ids of blocks that fall.
    pub fallen: Vec<usize>,
    pub stable: bool,
    pub slack_trace: Vec<SettleIteration>,
}

impl SettleOutcome {
    pub fn n_fallen(&self) -> usize {
        self.fallen.len()
    }

    /// Blocks left standing.
    pub fn standing(&self, n_blocks: usize) -> usize {
        n_blocks - self.fallen.len()
    }
}

/// For each composite, the set of composites it transitively supports
/// (itself included), skipping anchored ones.
fn support_closures(problem: &EquilibriumProblem, owner: &dyn Fn(usize) -> usize) -> Vec<Vec<bool>> {
    let n = problem.composites.len();
    let mut above: Vec<Vec<usize>> = vec![Vec::new(); n];
    for c in &problem.active_contacts {
        above[owner(c.lower_id)].push(owner(c.upper_id));
    }
    (0..n)
        .map(|root| {
            let mut seen = vec![false; n];
            if problem.composites[root].anchored {
                return seen;
            }
            let mut queue = VecDeque::from([root]);
            seen[root] = true;
            while let Some(x) = queue.pop_front() {
                for &y in &above[x] {
                    if !seen[y] && !problem.composites[y].anchored {
                        seen[y] = true;
                        queue.push_back(y);
                    }
                }
            }
            seen
        })
        .collect()
}

/// Minimal total slack each composite needs to be in static equilibrium.
///
/// Anchored composites are excluded from the balance rows and report zero.
/// Each non-anchored composite gets three balance rows (two forces, one
/// torque about the centre of mass) written over its support closure; the
/// closure rows are an invertible recombination of per-body rows, so a zero
/// total means the whole system can stand.
pub fn solve_equilibrium(problem: &EquilibriumProblem) -> Result<Vec<f64>> {
    let n_comp = problem.composites.len();
    let max_id = problem
        .composites
        .iter()
        .flat_map(|c| c.member_ids.iter().copied())
        .max()
        .unwrap_or(0);
    let mut owner_of = vec![usize::MAX; max_id + 1];
    for (i, c) in problem.composites.iter().enumerate() {
        for &id in &c.member_ids {
            owner_of[id] = i;
        }
    }
    let owner = |id: usize| owner_of[id];
    let closures = support_closures(problem, &owner);

    let mut lp = LinearProgram::new(0);
    // Per contact endpoint: normal force and the two halves of the tangential force.
    let mut force_vars = Vec::with_capacity(problem.active_contacts.len());
    for _ in &problem.active_contacts {
        let mut ends = [[0usize; 3]; 2];
        for end in &mut ends {
            for v in end.iter_mut() {
                *v = lp.add_var(0.0);
            }
            let [fn_, fp, fm] = *end;
            lp.constrain(
                vec![(fp, 1.0), (fm, 1.0), (fn_, -problem.friction_mu)],
                Relation::Le,
                0.0,
            );
        }
        force_vars.push(ends);
    }

    let mut slack_vars: Vec<Option<[usize; 6]>> = vec![None; n_comp];
    for (b, body) in problem.composites.iter().enumerate() {
        if body.anchored {
            continue;
        }
        let closure = &closures[b];
        let (mut mass, mut moment) = (0.0, Vec2::ZERO);
        for (i, c) in problem.composites.iter().enumerate() {
            if closure[i] {
                mass += c.total_mass;
                moment = moment + c.com * c.total_mass;
            }
        }
        let com = if mass > 0.0 { moment * (1.0 / mass) } else { body.com };
        let weight = mass * problem.gravity_g;

        let mut rows: [Vec<(usize, f64)>; 3] = Default::default();
        for (contact, ends) in problem.active_contacts.iter().zip(&force_vars) {
            let upper_in = closure[owner(contact.upper_id)];
            let lower_in = closure[owner(contact.lower_id)];
            if upper_in == lower_in {
                continue;
            }
            // Force on the upper object; the lower one feels its negation.
            let sign = if upper_in { 1.0 } else { -1.0 };
            let n = contact.normal;
            let t = Vec2::new(-n.y, n.x);
            for (p, &[fn_, fp, fm]) in contact.segment.iter().zip(ends) {
                let r = *p - com;
                rows[0].push((fn_, sign * n.x));
                rows[0].push((fp, sign * t.x));
                rows[0].push((fm, -sign * t.x));
                rows[1].push((fn_, sign * n.y));
                rows[1].push((fp, sign * t.y));
                rows[1].push((fm, -sign * t.y));
                rows[2].push((fn_, sign * r.cross(n)));
                rows[2].push((fp, sign * r.cross(t)));
                rows[2].push((fm, -sign * r.cross(t)));
            }
        }
        let mut slack = [0usize; 6];
        for (k, (mut row, rhs)) in rows.into_iter().zip([0.0, weight, 0.0]).enumerate() {
            let plus = lp.add_var(1.0);
            let minus = lp.add_var(1.0);
            slack[2 * k] = plus;
            slack[2 * k + 1] = minus;
            row.push((plus, 1.0));
            row.push((minus, -1.0));
            lp.constrain(row, Relation::Eq, rhs);
        }
        slack_vars[b] = Some(slack);
    }

    let sol = lp.solve()?;
    Ok(slack_vars
        .iter()
        .map(|s| s.map_or(0.0, |vars| vars.iter().map(|&v| sol.x[v]).sum()))
        .collect())
}

/// Apply gravity quasi-statically and report which blocks fall.
pub fn settle(tower: &Tower, glue: &GlueConfig) -> Result<SettleOutcome> {
    settle_with(tower, glue, Physics::default())
}

pub fn settle_with(tower: &Tower, glue: &GlueConfig, physics: Physics) -> Result<SettleOutcome> {
    let composites = merge_composites(tower, glue)?;
    let mut owner = vec![0usize; tower.n_objects()];
    for (i, c) in composites.iter().enumerate() {
        for &id in &c.member_ids {
            owner[id] = i;
        }
    }
    // Unglued contacts between different composites.
    let candidate: Vec<&Contact> = tower
        .contacts()
        .iter()
        .enumerate()
        .filter(|(i, c)| !glue.is_glued(*i) && owner[c.lower_id] != owner[c.upper_id])
        .map(|(_, c)| c)
        .collect();

    let mut alive = vec![true; composites.len()];
    let mut trace = Vec::new();
    loop {
        let mut removed = prune_unsupported(&composites, &candidate, &owner, &mut alive);

        let live: Vec<usize> = (0..composites.len()).filter(|&i| alive[i]).collect();
        let problem = EquilibriumProblem {
            composites: live.iter().map(|&i| composites[i].clone()).collect(),
            active_contacts: candidate
                .iter()
                .filter(|c| alive[owner[c.lower_id]] && alive[owner[c.upper_id]])
                .map(|&c| c.clone())
                .collect(),
            friction_mu: physics.friction_mu,
            gravity_g: physics.gravity_g,
        };
        let slacks = solve_equilibrium(&problem)?;
        let max_weight = problem
            .composites
            .iter()
            .map(|c| c.total_mass * physics.gravity_g)
            .fold(0.0, f64::max);
        let eps = EQUILIBRIUM_REL_TOL * max_weight;
        let failing: Vec<usize> = live
            .iter()
            .zip(&slacks)
            .filter(|(_, &s)| s > eps)
            .map(|(&i, _)| i)
            .collect();
        for &i in &failing {
            alive[i] = false;
            removed.extend(composites[i].block_ids());
        }
        if !failing.is_empty() {
            removed.extend(prune_unsupported(&composites, &candidate, &owner, &mut alive));
        }
        removed.sort_unstable();
        let done = failing.is_empty();
        trace.push(SettleIteration { slacks, removed });
        if done {
            break;
        }
    }

    let mut fallen: Vec<usize> = (0..composites.len())
        .filter(|&i| !alive[i])
        .flat_map(|i| composites[i].block_ids())
        .collect();
    fallen.sort_unstable();
    Ok(SettleOutcome { stable: fallen.is_empty(), fallen, slack_trace: trace })
}

/// Mark composites without a chain of supports down to an anchored composite
/// as fallen; returns the block ids newly removed.
fn prune_unsupported(
    composites: &[CompositeBody],
    contacts: &[&Contact],
    owner: &[usize],
    alive: &mut [bool],
) -> Vec<usize> {
    let n = composites.len();
    let mut supported: Vec<bool> = (0..n).map(|i| alive[i] && composites[i].anchored).collect();
    let mut queue: VecDeque<usize> = (0..n).filter(|&i| supported[i]).collect();
    while let Some(x) = queue.pop_front() {
        for c in contacts {
            if owner[c.lower_id] == x {
                let up = owner[c.upper_id];
                if alive[up] && !supported[up] {
                    supported[up] = true;
                    queue.push_back(up);
                }
            }
        }
    }
    let mut removed = Vec::new();
    for i in 0..n {
        if alive[i] && !supported[i] {
            alive[i] = false;
            removed.extend(composites[i].block_ids());
        }
    }
    removed
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scene::{Block, Tower};

    const HW: f64 = 0.4;
    const HH: f64 = 0.2;

    fn problem_for(tower: &Tower, glue: &GlueConfig) -> EquilibriumProblem {
        let composites = merge_composites(tower, glue).unwrap();
        let owner = |id: usize| composites.iter().position(|c| c.contains(id)).unwrap();
        let active = tower
            .contacts()
            .iter()
            .enumerate()
            .filter(|(i, c)| !glue.is_glued(*i) && owner(c.lower_id) != owner(c.upper_id))
            .map(|(_, c)| c.clone())
            .collect();
        EquilibriumProblem {
            composites,
            active_contacts: active,
            friction_mu: DEFAULT_FRICTION,
            gravity_g: DEFAULT_GRAVITY,
        }
    }

    #[test]
    fn centred_block_needs_no_slack() {
        let t = Tower::stacked(&[0.0], HW, HH).unwrap();
        let s = solve_equilibrium(&problem_for(&t, &GlueConfig::empty(1))).unwrap();
        assert_eq!(s[0], 0.0);
        assert!(s[1].abs() < 1e-12);
    }

    #[test]
    fn balanced_two_block_stack_needs_no_slack() {
        let t = Tower::stacked(&[0.0, 0.1], HW, HH).unwrap();
        let s = solve_equilibrium(&problem_for(&t, &GlueConfig::empty(2))).unwrap();
        assert!(s.iter().sum::<f64>().abs() < 1e-12, "{s:?}");
    }

    #[test]
    fn overhanging_com_leaves_exact_torque_deficit() {
        // A wide lower block supports a narrow upper block whose centre sits
        // 0.1 m beyond the right end of the shared surface. Cheapest fix is a
        // pure torque slack of m g 0.1 about the pivot: a force slack of size
        // F only buys 0.1 F of torque and a friction couple costs F / hh.
        let lower = Block::new(1, Vec2::new(0.0, HH), HW, HH);
        let upper = Block::new(2, Vec2::new(HW + 0.1, 3.0 * HH), 0.3, HH);
        let t = Tower::new(vec![lower, upper.clone()]).unwrap();
        let s = solve_equilibrium(&problem_for(&t, &GlueConfig::empty(2))).unwrap();
        let expected = upper.mass * DEFAULT_GRAVITY * 0.1;
        assert!((s[2] - expected).abs() < 1e-9 * expected, "{} vs {expected}", s[2]);
        assert!(s[1].abs() < 1e-12);
    }

    #[test]
    fn anchored_composite_has_zero_slack() {
        let t = Tower::stacked(&[0.0, 0.7], HW, HH).unwrap();
        let glue = GlueConfig::from_bits(vec![true, true]);
        let s = solve_equilibrium(&problem_for(&t, &glue)).unwrap();
        assert_eq!(s, vec![0.0]);
    }

    #[test]
    fn fully_glued_tower_stands() {
        let t = Tower::stacked(&[0.0, 0.7, 1.4, 2.1], HW, HH).unwrap();
        let out = settle(&t, &GlueConfig::full(4)).unwrap();
        assert!(out.stable && out.fallen.is_empty());
    }

    #[test]
    fn only_the_critically_overhanging_top_falls() {
        // Blocks 1 and 2 are well centred; block 3's centre is 0.5 m right of
        // block 2's centre, beyond its 0.4 m half width. Combined COM of 2+3
        // is 0.25 right of block 1's centre, inside its support.
        let t = Tower::stacked(&[0.0, 0.0, 0.5], HW, HH).unwrap();
        let out = settle(&t, &GlueConfig::empty(3)).unwrap();
        assert_eq!(out.fallen, vec![3]);
        assert_eq!(out.slack_trace[0].removed, vec![3]);
        assert_eq!(out.slack_trace.len(), 2);
    }

    #[test]
    fn substack_topples_as_a_unit() {
        // Block 3 is balanced on block 2 (offset 0.3 < 0.4), but the COM of
        // 2+3 is at 0.35 + 0.15 = 0.5 beyond block 1's edge at 0.4.
        let t = Tower::stacked(&[0.0, 0.35, 0.65], HW, HH).unwrap();
        let out = settle(&t, &GlueConfig::empty(3)).unwrap();
        assert_eq!(out.fallen, vec![2, 3]);
        // Gluing 1-2 keeps everything up: the 1+2+3 composite COM is at
        // 0.333, inside the floor contact [-0.4, 0.4].
        let out = settle(&t, &GlueConfig::from_bits(vec![false, true, false])).unwrap();
        assert!(out.stable, "{out:?}");
    }

    #[test]
    fn gluing_an_overhanging_top_saves_it() {
        // Block 3 overhangs block 2 by 0.05, but the 2+3 COM (0.325) is
        // inside block 1's top face.
        let t = Tower::stacked(&[0.0, 0.1, 0.55], HW, HH).unwrap();
        let none = settle(&t, &GlueConfig::empty(3)).unwrap();
        assert_eq!(none.fallen, vec![3]);
        let top = settle(&t, &GlueConfig::from_bits(vec![false, false, true])).unwrap();
        assert!(top.stable);
    }

    #[test]
    fn tipping_pair_falls_together() {
        // Block 3 overhangs block 2 and the 2+3 COM (0.525) is past
        // block 1's edge, so the pair goes as well.
        let t = Tower::stacked(&[0.0, 0.3, 0.75], HW, HH).unwrap();
        assert_eq!(settle(&t, &GlueConfig::empty(3)).unwrap().fallen, vec![2, 3]);
    }

    #[test]
    fn com_exactly_on_the_edge_stands() {
        let t = Tower::stacked(&[0.0, 0.4], HW, HH).unwrap();
        assert!(settle(&t, &GlueConfig::empty(2)).unwrap().stable);
    }

    #[test]
    fn fallen_count_is_monotone_over_iterations() {
        let t = Tower::stacked(&[0.0, 0.6, 1.2, 1.5, 1.0], HW, HH).unwrap();
        let out = settle(&t, &GlueConfig::empty(5)).unwrap();
        let mut total = 0;
        for it in &out.slack_trace {
            total += it.removed.len();
        }
        assert_eq!(total, out.fallen.len());
        // The whole-tower COM (0.86) is past the floor contact as well.
        assert_eq!(out.fallen, vec![1, 2, 3, 4, 5]);
    }
}
