use std::collections::HashMap;

use crate::flow::{FlowSystem, KeyCoord};

/// Key coordinates used per orbit endpoint.
const KEY_DIMS_PER_END: usize = 2;

type Cell = [i64; 2 * KEY_DIMS_PER_END];

/// Cell index of one key coordinate, and the number of cells when periodic.
fn cell_index(c: &KeyCoord, eps: f64) -> (i64, Option<i64>) {
    match c.period {
        Some(p) => {
            let n = ((p / eps).floor() as i64).max(1);
            let idx = ((c.value.rem_euclid(p) / p) * n as f64).floor() as i64;
            (idx.clamp(0, n - 1), Some(n))
        }
        None => ((c.value / eps).floor() as i64, None),
    }
}

struct Grid {
    eps: f64,
    cells: HashMap<Cell, Vec<usize>>,
}

impl Grid {
    fn key(&self, system: &dyn FlowSystem, orbit: &[Vec<f64>]) -> Vec<(i64, Option<i64>)> {
        let mut coords: Vec<KeyCoord> = system
            .packing_key(&orbit[0])
            .into_iter()
            .take(KEY_DIMS_PER_END)
            .collect();
        if orbit.len() > 1 {
            coords.extend(
                system
                    .packing_key(orbit.last().expect("non-empty orbit"))
                    .into_iter()
                    .take(KEY_DIMS_PER_END),
            );
        }
        coords.iter().map(|c| cell_index(c, self.eps)).collect()
    }

    fn cell_of(key: &[(i64, Option<i64>)]) -> Cell {
        let mut cell = [0; 2 * KEY_DIMS_PER_END];
        for (c, (idx, _)) in cell.iter_mut().zip(key) {
            *c = *idx;
        }
        cell
    }

    /// All cells within one step of `key` in every coordinate, wrapping periodic ones.
    fn neighbours(key: &[(i64, Option<i64>)]) -> Vec<Cell> {
        let mut out: Vec<Cell> = vec![[0; 2 * KEY_DIMS_PER_END]];
        for (d, (idx, period)) in key.iter().enumerate() {
            let mut options: Vec<i64> = (-1..=1)
                .map(|o| match period {
                    Some(n) => (idx + o).rem_euclid(*n),
                    None => idx + o,
                })
                .collect();
            options.sort_unstable();
            options.dedup();
            out = out
                .into_iter()
                .flat_map(|c| {
                    options.iter().map(move |v| {
                        let mut c = c;
                        c[d] = *v;
                        c
                    })
                })
                .collect();
        }
        out
    }
}

/// Whether the two sampled orbits stay within `eps` at every sampled time.
fn shadowing(system: &dyn FlowSystem, a: &[Vec<f64>], b: &[Vec<f64>], eps: f64) -> bool {
    a.iter().zip(b).all(|(x, y)| system.distance(x, y) < eps)
}

/// Greedy maximal `(ε, T)`-separated subset of the sampled orbits, scanned in the given
/// order. Each orbit holds the states at the common sample times in `[0, T]`; a
/// candidate is admitted when every admitted orbit is at distance `≥ ε` from it at
/// some sampled time. Returns indices into `orbits`.
pub fn greedy_separated_set(system: &dyn FlowSystem, orbits: &[&[Vec<f64>]], eps: f64) -> Vec<usize> {
    let mut grid = Grid {
        eps,
        cells: HashMap::new(),
    };
    let mut selected = Vec::new();
    for (i, orbit) in orbits.iter().enumerate() {
        if orbit.is_empty() {
            continue;
        }
        let key = grid.key(system, orbit);
        let blocked = Grid::neighbours(&key).iter().any(|cell| {
            grid.cells.get(cell).is_some_and(|members| {
                members
                    .iter()
                    .any(|&m| shadowing(system, orbits[m], orbit, eps))
            })
        });
        if !blocked {
            grid.cells.entry(Grid::cell_of(&key)).or_default().push(i);
            selected.push(i);
        }
    }
    selected
}
