use crate::error::{Error, Result};
use crate::graph::StreetGraph;
use crate::real::Real;
use crate::schema::Column;

#[derive(Debug, Clone, PartialEq)]
pub struct Interpolated<T> {
    pub column: Column<T>,
    /// Cells filled from neighbours, per round.
    pub filled_per_round: Vec<usize>,
    /// Cells that fell back to the global mean.
    pub fallback: usize,
}

/// Fills missing cells from graph-adjacent segments (see [`interpolate_with_adjacency`]).
pub fn interpolate_missing<T: Real>(graph: &StreetGraph<T>, column: &Column<T>, max_rounds: usize) -> Result<Interpolated<T>> {
    interpolate_with_adjacency(&graph.segment_adjacency(), column, max_rounds)
}

/// Jacobi-style rounds: every missing cell with at least one known neighbour
/// takes the unweighted mean of the neighbours known at the start of the
/// round. Cells still missing after `max_rounds` get the global mean of the
/// originally known values.
pub fn interpolate_with_adjacency<T: Real>(
    adjacency: &[Vec<usize>],
    column: &Column<T>,
    max_rounds: usize,
) -> Result<Interpolated<T>> {
    let n = column.values.len();
    if adjacency.len() != n {
        return Err(Error::Input(format!("adjacency covers {} segments, column has {n}", adjacency.len())));
    }
    let known: Vec<T> = column.known().collect();
    if known.is_empty() {
        return Err(Error::schema(&column.name, "column entirely missing; nothing to propagate"));
    }
    let global = known.iter().copied().sum::<T>() / T::count(known.len());
    let mut values = column.values.clone();
    let mut missing = column.missing.clone();
    let mut filled_per_round = Vec::new();
    for _ in 0..max_rounds {
        let updates: Vec<(usize, T)> = (0..n)
            .filter(|&i| missing[i])
            .filter_map(|i| {
                let nb: Vec<T> = adjacency[i].iter().filter(|&&j| !missing[j]).map(|&j| values[j]).collect();
                (!nb.is_empty()).then(|| (i, nb.iter().copied().sum::<T>() / T::count(nb.len())))
            })
            .collect();
        if updates.is_empty() {
            break;
        }
        filled_per_round.push(updates.len());
        for (i, v) in updates {
            values[i] = v;
            missing[i] = false;
        }
    }
    let mut fallback = 0;
    for i in 0..n {
        if missing[i] {
            values[i] = global;
            missing[i] = false;
            fallback += 1;
        }
    }
    Ok(Interpolated { column: Column { name: column.name.clone(), values, missing }, filled_per_round, fallback })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_of_known_neighbours() {
        let adj = vec![vec![1, 2], vec![0], vec![0]];
        let col = Column::with_missing("P_sky", vec![None, Some(2.0), Some(4.0)]);
        let r = interpolate_with_adjacency(&adj, &col, 5).unwrap();
        assert_eq!(r.column.values[0], 3.0);
        assert!(r.column.missing.iter().all(|m| !m));
    }

    #[test]
    fn isolated_gets_global_mean() {
        let adj = vec![vec![1], vec![0], vec![]];
        let col = Column::with_missing("P_sky", vec![Some(1.0), Some(3.0), None]);
        let r = interpolate_with_adjacency(&adj, &col, 5).unwrap();
        assert_eq!(r.column.values[2], 2.0);
        assert_eq!(r.fallback, 1);
    }

    #[test]
    fn chain_fills_simultaneously() {
        // A(1) - B(?) - C(?) - D(5)
        let adj = vec![vec![1], vec![0, 2], vec![1, 3], vec![2]];
        let col = Column::with_missing("P_sky", vec![Some(1.0), None, None, Some(5.0)]);
        let r = interpolate_with_adjacency(&adj, &col, 5).unwrap();
        assert_eq!(r.column.values, vec![1.0, 1.0, 5.0, 5.0]);
        assert_eq!(r.filled_per_round, vec![2]);
    }

    #[test]
    fn all_missing_errors() {
        let col: Column<f64> = Column::with_missing("P_sky", vec![None, None]);
        assert!(interpolate_with_adjacency(&[vec![1], vec![0]], &col, 5).is_err());
    }
}
