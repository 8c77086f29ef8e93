//! Brute-force reference implementations used to check the table queries.
//! They scan the full matrix and classify states by decoding them, without
//! touching the block arithmetic.

#![allow(dead_code)]

use ffc::{Cell, GridSpec, StateIndex, TransitionTable};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// (centroid, probability) or None when nothing leaves `from`'s centroid.
pub fn oracle_centroid(table: &TransitionTable, from: Cell) -> Option<(Cell, f64)> {
    let spec = table.spec();
    let n = spec.state_count();
    let states: Vec<_> = spec.enumerate_states().collect();
    // Candidate centroids keyed by the lowest state index carrying them.
    let mut mass: Vec<(usize, Cell, u64)> = Vec::new();
    for (i, s) in &states {
        if !mass.iter().any(|(_, c, _)| *c == s.centroid) {
            mass.push((i.value(), s.centroid, 0));
        }
    }
    let mut total = 0u64;
    for (fi, fs) in &states {
        if fs.centroid != from {
            continue;
        }
        for (ti, ts) in &states {
            let c = table.count(*fi, *ti);
            if c == 0 {
                continue;
            }
            total += c;
            mass.iter_mut()
                .find(|(_, cc, _)| *cc == ts.centroid)
                .unwrap()
                .2 += c;
        }
    }
    assert_eq!(states.len(), n);
    if total == 0 {
        return None;
    }
    mass.sort_by_key(|(first, _, _)| *first);
    let mut best = mass[0];
    for m in &mass {
        if m.2 > best.2 {
            best = *m;
        }
    }
    Some((best.1, best.2 as f64 / total as f64))
}

/// Most likely TO state with the given centroid, probability over the full row.
pub fn oracle_transition(
    table: &TransitionTable,
    from: StateIndex,
    to_centroid: Cell,
) -> Option<(usize, f64)> {
    let spec = table.spec();
    let mut row_total = 0u64;
    let mut best: Option<(usize, u64)> = None;
    for (j, s) in spec.enumerate_states() {
        let c = table.count(from, j);
        row_total += c;
        if c > 0 && s.centroid == to_centroid {
            match best {
                Some((_, b)) if b >= c => {}
                _ => best = Some((j.value(), c)),
            }
        }
    }
    if row_total == 0 {
        return None;
    }
    best.map(|(j, c)| (j, c as f64 / row_total as f64))
}

/// A sparse table with small counts, so ties are common.
pub fn random_table(spec: GridSpec, seed: u64) -> TransitionTable {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut table = TransitionTable::new(spec).unwrap();
    let n = spec.state_count();
    let entries = rng.random_range(0..=3 * n);
    for _ in 0..entries {
        let from = spec.index(rng.random_range(0..n)).unwrap();
        let to = spec.index(rng.random_range(0..n)).unwrap();
        for _ in 0..rng.random_range(1..=2) {
            table.record(from, to).unwrap();
        }
    }
    table
}

pub fn all_cells(spec: &GridSpec) -> Vec<Cell> {
    (0..spec.cells_x())
        .flat_map(|x| (0..spec.cells_y()).map(move |y| Cell::new(x, y)))
        .collect()
}

/// Compares both queries against the oracle for every FROM centroid and
/// every (state, TO centroid) pair. Returns the number of tie cases seen.
pub fn check_against_oracle(table: &TransitionTable) -> Result<usize, String> {
    let spec = *table.spec();
    let mut ties = 0;
    for c in all_cells(&spec) {
        let got = table
            .most_likely_centroid(c)
            .unwrap()
            .map(|ch| (ch.centroid, ch.probability));
        let want = oracle_centroid(table, c);
        if got != want {
            return Err(format!("centroid {c}: got {got:?}, oracle {want:?}"));
        }
    }
    for (from, _) in spec.enumerate_states() {
        for c in all_cells(&spec) {
            let block = ffc::centroid_block(&spec, c);
            let got = table
                .most_likely_transition(from, block)
                .unwrap()
                .map(|ch| (ch.to.value(), ch.probability));
            let want = oracle_transition(table, from, c);
            if got != want {
                return Err(format!(
                    "transition {from} -> centroid {c}: got {got:?}, oracle {want:?}"
                ));
            }
            if let Some((j, _)) = got {
                let best = table.count(from, spec.index(j).unwrap());
                let tied = (block.start..block.end)
                    .filter(|&k| table.count(from, spec.index(k).unwrap()) == best)
                    .count();
                if tied > 1 {
                    ties += 1;
                }
            }
        }
    }
    Ok(ties)
}
