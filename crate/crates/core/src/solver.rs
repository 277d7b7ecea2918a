//! Budget-constrained box packing: overload-and-remove with decantation, the
//! notation calculus it relies on, and an exhaustive oracle for small inputs.

use std::collections::{BTreeMap, BTreeSet, VecDeque};
use std::path::Path;

use itertools::Itertools;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Relative sizes are compared with this slack; see [`Instance::relative_size`].
const EPS: f64 = 1e-9;

pub const EXACT_LIMIT: usize = 20;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PricedItem {
    pub id: String,
    pub price: u64,
}

/// JSON form of an instance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstanceFile {
    pub items: Vec<PricedItem>,
    pub outfits: Vec<Vec<String>>,
    pub budget: u64,
}

/// Validated instance. Items and outfits are addressed by index; each outfit
/// holds sorted, distinct item indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Instance {
    ids: Vec<String>,
    prices: Vec<u64>,
    outfits: Vec<Vec<usize>>,
    budget: u64,
}

impl Instance {
    pub fn new(items: Vec<PricedItem>, outfits: Vec<Vec<String>>, budget: u64) -> Result<Self> {
        if budget == 0 {
            return Err(Error::Invalid("budget must be positive".into()));
        }
        let mut index = BTreeMap::new();
        let mut ids = Vec::with_capacity(items.len());
        let mut prices = Vec::with_capacity(items.len());
        for item in items {
            if item.price == 0 {
                return Err(Error::Invalid(format!("item `{}` has zero price", item.id)));
            }
            if index.insert(item.id.clone(), ids.len()).is_some() {
                return Err(Error::DuplicateId(item.id));
            }
            ids.push(item.id);
            prices.push(item.price);
        }
        let mut resolved = Vec::with_capacity(outfits.len());
        for (j, outfit) in outfits.iter().enumerate() {
            if outfit.is_empty() {
                return Err(Error::Invalid(format!("outfit {j} is empty")));
            }
            let mut set = BTreeSet::new();
            for id in outfit {
                let x = *index.get(id).ok_or_else(|| Error::UnknownItem(id.clone()))?;
                if !set.insert(x) {
                    return Err(Error::Invalid(format!("outfit {j} lists `{id}` twice")));
                }
            }
            resolved.push(set.into_iter().collect());
        }
        Ok(Instance {
            ids,
            prices,
            outfits: resolved,
            budget,
        })
    }

    pub fn from_file(file: InstanceFile) -> Result<Self> {
        Self::new(file.items, file.outfits, file.budget)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let file: InstanceFile = serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::from_file(file)
    }

    pub fn to_file(&self) -> InstanceFile {
        InstanceFile {
            items: self
                .ids
                .iter()
                .zip(&self.prices)
                .map(|(id, &price)| PricedItem { id: id.clone(), price })
                .collect(),
            outfits: self
                .outfits
                .iter()
                .map(|o| o.iter().map(|&x| self.ids[x].clone()).collect())
                .collect(),
            budget: self.budget,
        }
    }

    pub fn budget(&self) -> u64 {
        self.budget
    }

    pub fn item_count(&self) -> usize {
        self.ids.len()
    }

    pub fn item_id(&self, x: usize) -> &str {
        &self.ids[x]
    }

    pub fn price(&self, x: usize) -> u64 {
        self.prices[x]
    }

    pub fn outfit_count(&self) -> usize {
        self.outfits.len()
    }

    pub fn outfit(&self, j: usize) -> &[usize] {
        &self.outfits[j]
    }

    /// Sum of the item prices of one outfit.
    pub fn outfit_price(&self, j: usize) -> u64 {
        self.outfits[j].iter().map(|&x| self.prices[x]).sum()
    }

    /// Number of outfits of `boxed` containing item `x`.
    pub fn multiplicity(&self, boxed: &[usize], x: usize) -> usize {
        boxed.iter().filter(|&&j| self.outfits[j].contains(&x)).count()
    }

    /// Sum over the items of outfit `j` of the reciprocal multiplicity in
    /// `boxed`. Multiplicities are taken over `boxed` plus `j` when `j` is not
    /// a member, so the value is defined for candidate insertions too.
    pub fn relative_size(&self, j: usize, boxed: &[usize]) -> f64 {
        let extra = usize::from(!boxed.contains(&j));
        self.outfits[j]
            .iter()
            .map(|&x| 1.0 / (self.multiplicity(boxed, x) + extra) as f64)
            .sum()
    }

    /// Total number of item slots: the sum of outfit sizes.
    pub fn card(&self, boxed: &[usize]) -> usize {
        boxed.iter().map(|&j| self.outfits[j].len()).sum()
    }

    pub fn distinct_items(&self, boxed: &[usize]) -> BTreeSet<usize> {
        boxed.iter().flat_map(|&j| self.outfits[j].iter().copied()).collect()
    }

    /// Price of the distinct items of the box.
    pub fn total_price(&self, boxed: &[usize]) -> u64 {
        self.distinct_items(boxed).iter().map(|&x| self.prices[x]).sum()
    }

    pub fn is_feasible(&self, boxed: &[usize]) -> bool {
        self.total_price(boxed) <= self.budget
    }

    /// Partition of the box into groups of outfits linked by shared items,
    /// ordered by first member.
    pub fn connected_components(&self, boxed: &[usize]) -> Vec<Vec<usize>> {
        let n = boxed.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(parent: &mut [usize], mut i: usize) -> usize {
            while parent[i] != i {
                parent[i] = parent[parent[i]];
                i = parent[i];
            }
            i
        }
        let mut owner: BTreeMap<usize, usize> = BTreeMap::new();
        for (pos, &j) in boxed.iter().enumerate() {
            for &x in &self.outfits[j] {
                match owner.get(&x) {
                    Some(&other) => {
                        let (a, b) = (find(&mut parent, pos), find(&mut parent, other));
                        parent[a.max(b)] = a.min(b);
                    }
                    None => {
                        owner.insert(x, pos);
                    }
                }
            }
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (pos, &j) in boxed.iter().enumerate() {
            groups.entry(find(&mut parent, pos)).or_default().push(j);
        }
        groups.into_values().collect()
    }

    pub fn describe(&self, boxed: &[usize]) -> BoxSummary {
        BoxSummary {
            outfits: boxed.to_vec(),
            items: self
                .distinct_items(boxed)
                .into_iter()
                .map(|x| self.ids[x].clone())
                .collect(),
            total_price: self.total_price(boxed),
            card: self.card(boxed),
        }
    }
}

/// A box reported by its outfit indices and derived quantities.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoxSummary {
    pub outfits: Vec<usize>,
    /// Distinct item ids, sorted by item index.
    pub items: Vec<String>,
    pub total_price: u64,
    pub card: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DecantStage {
    Boxes,
    Components,
    Outfits,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageTrace {
    pub stage: DecantStage,
    /// Collection after the stage, as outfit indices per box.
    pub collection: Vec<Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Solution {
    pub chosen: BoxSummary,
    /// Outfits priced above the budget, left out before solving.
    pub dropped: Vec<usize>,
    /// Collection produced by overload-and-remove, before decantation.
    pub overloaded: Vec<Vec<usize>>,
    pub decantation: Vec<StageTrace>,
    /// Index of the chosen box in the decanted collection.
    pub chosen_index: usize,
}

/// Box under construction with item multiplicities kept up to date.
#[derive(Debug, Clone)]
struct WorkBox {
    outfits: Vec<usize>,
    counts: BTreeMap<usize, usize>,
    total: u64,
}

impl WorkBox {
    fn new() -> Self {
        WorkBox {
            outfits: Vec::new(),
            counts: BTreeMap::new(),
            total: 0,
        }
    }

    fn count(&self, x: usize) -> usize {
        self.counts.get(&x).copied().unwrap_or(0)
    }

    fn candidate_size(&self, inst: &Instance, j: usize) -> f64 {
        inst.outfits[j].iter().map(|&x| 1.0 / (self.count(x) + 1) as f64).sum()
    }

    fn member_size(&self, inst: &Instance, j: usize) -> f64 {
        inst.outfits[j].iter().map(|&x| 1.0 / self.count(x) as f64).sum()
    }

    fn insert(&mut self, inst: &Instance, j: usize) {
        for &x in &inst.outfits[j] {
            let c = self.counts.entry(x).or_insert(0);
            if *c == 0 {
                self.total += inst.prices[x];
            }
            *c += 1;
        }
        self.outfits.push(j);
    }

    fn remove_at(&mut self, inst: &Instance, pos: usize) -> usize {
        let j = self.outfits.remove(pos);
        for &x in &inst.outfits[j] {
            let c = self.counts.get_mut(&x).expect("member item is counted");
            *c -= 1;
            if *c == 0 {
                self.counts.remove(&x);
                self.total -= inst.prices[x];
            }
        }
        j
    }
}

/// Overload-and-remove followed by decantation; returns the box with the
/// most outfits (ties: lower total price, then lower index).
pub fn olr_solve(inst: &Instance) -> Result<Solution> {
    let (affordable, dropped): (Vec<usize>, Vec<usize>) =
        (0..inst.outfit_count()).partition(|&j| inst.outfit_price(j) <= inst.budget);

    let overloaded = overload_and_remove(inst, &affordable)?;
    let decantation = decantate(inst, overloaded.clone())?;
    let decanted = decantation
        .last()
        .map(|s| s.collection.clone())
        .unwrap_or_default();

    let mut chosen_index = 0;
    let mut best: Option<(usize, u64)> = None;
    for (i, b) in decanted.iter().enumerate() {
        let key = (b.len(), inst.total_price(b));
        let better = match best {
            None => true,
            Some((len, price)) => key.0 > len || (key.0 == len && key.1 < price),
        };
        if better {
            best = Some(key);
            chosen_index = i;
        }
    }
    let chosen = decanted.get(chosen_index).cloned().unwrap_or_default();
    Ok(Solution {
        chosen: inst.describe(&chosen),
        dropped,
        overloaded,
        decantation,
        chosen_index,
    })
}

fn overload_and_remove(inst: &Instance, outfits: &[usize]) -> Result<Vec<Vec<usize>>> {
    let mut queue: VecDeque<usize> = outfits.iter().copied().collect();
    let mut boxes = vec![WorkBox::new()];
    let mut visited: BTreeMap<usize, BTreeSet<usize>> = BTreeMap::new();
    // Each dequeue puts an outfit in a box it never visited; this bounds the loop.
    let cap = 4 * outfits.len().pow(3) + 16;
    let mut steps = 0;

    while let Some(o) = queue.pop_front() {
        steps += 1;
        if steps > cap {
            return Err(Error::Invalid("overload-and-remove did not settle".into()));
        }
        let seen = visited.entry(o).or_default();
        let size = inst.outfits[o].len() as f64;
        let mut target: Option<(usize, f64)> = None;
        let mut empty: Option<usize> = None;
        for (i, b) in boxes.iter().enumerate() {
            if seen.contains(&i) {
                continue;
            }
            if b.outfits.is_empty() {
                empty.get_or_insert(i);
                continue;
            }
            let rel = b.candidate_size(inst, o);
            if rel < size - EPS && target.is_none_or(|(_, best)| rel < best - EPS) {
                target = Some((i, rel));
            }
        }
        let i = match (target, empty) {
            (Some((i, _)), _) => i,
            (None, Some(i)) => i,
            (None, None) => {
                boxes.push(WorkBox::new());
                boxes.len() - 1
            }
        };
        seen.insert(i);
        let b = &mut boxes[i];
        b.insert(inst, o);
        while b.total > inst.budget {
            let mut victim = 0;
            let mut best = f64::INFINITY;
            for (pos, &j) in b.outfits.iter().enumerate() {
                let ratio = inst.outfits[j].len() as f64 / b.member_size(inst, j);
                if ratio < best - EPS {
                    best = ratio;
                    victim = pos;
                }
            }
            let removed = b.remove_at(inst, victim);
            queue.push_back(removed);
        }
    }
    Ok(boxes
        .into_iter()
        .map(|b| b.outfits)
        .filter(|b| !b.is_empty())
        .collect())
}

/// Settles boxes, then connected components, then single outfits into the
/// lowest earlier box that stays within budget. Each stage repeats until
/// nothing moves; emptied boxes are dropped. Components made of a single
/// outfit are left to the outfit stage. Input boxes need not be feasible;
/// a move is made only if its destination stays within budget.
pub fn decantate(inst: &Instance, collection: Vec<Vec<usize>>) -> Result<Vec<StageTrace>> {
    let mut current: Vec<Vec<usize>> = collection.into_iter().filter(|b| !b.is_empty()).collect();
    let mut trace = Vec::with_capacity(3);
    for stage in [DecantStage::Boxes, DecantStage::Components, DecantStage::Outfits] {
        let cap = (current.len() + 1).pow(2);
        let mut passes = 0;
        loop {
            passes += 1;
            if passes > cap {
                return Err(Error::DecantationDiverged(cap));
            }
            if !decant_pass(inst, &mut current, stage) {
                break;
            }
            current.retain(|b| !b.is_empty());
        }
        trace.push(StageTrace {
            stage,
            collection: current.clone(),
        });
    }
    Ok(trace)
}

fn decant_pass(inst: &Instance, boxes: &mut [Vec<usize>], stage: DecantStage) -> bool {
    let mut moved = false;
    for j in (1..boxes.len()).rev() {
        let units: Vec<Vec<usize>> = match stage {
            DecantStage::Boxes => vec![boxes[j].clone()],
            DecantStage::Components => inst
                .connected_components(&boxes[j])
                .into_iter()
                .filter(|c| c.len() > 1)
                .collect(),
            DecantStage::Outfits => boxes[j].iter().map(|&o| vec![o]).collect(),
        };
        for unit in units {
            if unit.is_empty() {
                continue;
            }
            let destination = (0..j).find(|&i| {
                let mut merged = boxes[i].clone();
                merged.extend(&unit);
                inst.is_feasible(&merged)
            });
            if let Some(i) = destination {
                boxes[j].retain(|o| !unit.contains(o));
                boxes[i].extend(&unit);
                moved = true;
            }
        }
    }
    moved
}

/// Largest feasible subset by exhaustive search; among equally large subsets
/// the lexicographically smallest index set wins.
pub fn exact_solve(inst: &Instance) -> Result<BoxSummary> {
    let n = inst.outfit_count();
    if n > EXACT_LIMIT {
        return Err(Error::InstanceTooLarge(n, EXACT_LIMIT));
    }
    for k in (1..=n).rev() {
        if let Some(subset) = (0..n).combinations(k).find(|s| inst.is_feasible(s)) {
            return Ok(inst.describe(&subset));
        }
    }
    Ok(inst.describe(&[]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn instance(prices: &[(&str, u64)], outfits: &[&[&str]], budget: u64) -> Instance {
        Instance::new(
            prices
                .iter()
                .map(|(id, price)| PricedItem {
                    id: id.to_string(),
                    price: *price,
                })
                .collect(),
            outfits
                .iter()
                .map(|o| o.iter().map(|s| s.to_string()).collect())
                .collect(),
            budget,
        )
        .unwrap()
    }

    fn abcde() -> Instance {
        let items: Vec<(&str, u64)> = ["a", "b", "c", "d", "e"].iter().map(|s| (*s, 1)).collect();
        instance(&items, &[&["a", "b", "c"], &["a", "d", "e"], &["a", "b", "c"]], 10)
    }

    #[test]
    fn multiplicity_and_relative_size() {
        let inst = abcde();
        assert_eq!(inst.multiplicity(&[0, 1], 0), 2);
        assert_eq!(inst.multiplicity(&[0, 1], 1), 1);
        assert_eq!(inst.multiplicity(&[0], 4), 0);
        assert_eq!(inst.relative_size(0, &[0, 1]), 2.5);
        assert_eq!(inst.relative_size(0, &[0]), 3.0);
        assert_eq!(inst.relative_size(0, &[0, 2]), 1.5);
        // candidate: 1 joins {0}
        assert_eq!(inst.relative_size(1, &[0]), 2.5);
        assert_eq!(inst.card(&[0, 1]), 6);
        assert_eq!(inst.total_price(&[0, 1]), 5);
    }

    #[test]
    fn feasibility_is_inclusive() {
        let inst = instance(&[("a", 2), ("b", 3)], &[&["a", "b"]], 5);
        assert!(inst.is_feasible(&[]));
        assert!(inst.is_feasible(&[0]));
        let tight = instance(&[("a", 2), ("b", 4)], &[&["a", "b"]], 5);
        assert!(!tight.is_feasible(&[0]));
    }

    #[test]
    fn components() {
        let items: Vec<(&str, u64)> = ["1", "2", "3", "4", "5", "6", "7", "a", "b", "c", "d"]
            .iter()
            .map(|s| (*s, 1))
            .collect();
        let inst = instance(
            &items,
            &[
                &["1", "2", "3"],
                &["3", "4", "5"],
                &["a", "b"],
                &["c", "d"],
                &["1", "2", "3", "4", "5"],
                &["4", "5", "6"],
                &["5", "6", "7"],
            ],
            100,
        );
        assert_eq!(inst.connected_components(&[0, 1]), vec![vec![0, 1]]);
        assert_eq!(inst.connected_components(&[2, 3]), vec![vec![2], vec![3]]);
        assert_eq!(inst.connected_components(&[4, 6, 5]), vec![vec![4, 6, 5]]);
        assert_eq!(inst.connected_components(&[4, 6]), vec![vec![4, 6]]);
    }

    #[test]
    fn single_outfit_and_empty_input() {
        let inst = instance(&[("a", 2)], &[&["a"]], 5);
        let sol = olr_solve(&inst).unwrap();
        assert_eq!(sol.chosen.outfits, [0]);
        let empty = instance(&[("a", 2)], &[], 5);
        let sol = olr_solve(&empty).unwrap();
        assert!(sol.chosen.outfits.is_empty());
        assert!(exact_solve(&empty).unwrap().outfits.is_empty());
    }

    #[test]
    fn unaffordable_outfits_are_dropped() {
        let inst = instance(&[("a", 2), ("b", 9)], &[&["a"], &["b"]], 5);
        let sol = olr_solve(&inst).unwrap();
        assert_eq!(sol.dropped, [1]);
        assert_eq!(sol.chosen.outfits, [0]);
    }

    #[test]
    fn exact_prefers_smallest_index_set() {
        let inst = instance(&[("a", 3), ("b", 3)], &[&["a"], &["b"]], 4);
        assert_eq!(exact_solve(&inst).unwrap().outfits, [0]);
    }

    #[test]
    fn decantation_is_idempotent() {
        let inst = abcde();
        let once = decantate(&inst, vec![vec![0], vec![1], vec![2]]).unwrap();
        let settled = once.last().unwrap().collection.clone();
        let twice = decantate(&inst, settled.clone()).unwrap();
        assert!(twice.iter().all(|s| s.collection == settled));
    }

    #[test]
    fn invalid_instances() {
        let items = vec![PricedItem {
            id: "a".into(),
            price: 1,
        }];
        assert!(Instance::new(items.clone(), vec![vec![]], 3).is_err());
        assert!(Instance::new(items.clone(), vec![vec!["z".into()]], 3).is_err());
        assert!(Instance::new(items.clone(), vec![vec!["a".into(), "a".into()]], 3).is_err());
        assert!(Instance::new(items, vec![], 0).is_err());
    }
}
