use crate::error::{Error, Result};
use crate::real::{mean, population_std, Real};
use crate::schema::{Column, NormRecord, TransformKind};

fn forward<T: Real>(v: T, kind: TransformKind) -> T {
    match kind {
        TransformKind::Log1pZscore => v.ln_1p(),
        TransformKind::Zscore | TransformKind::None => v,
    }
}

/// Standardizes `values` under `kind`; mean and population std are taken
/// after the log. Constant columns come back as zeros with `degenerate` set.
pub fn normalize<T: Real>(name: &str, values: &[T], kind: TransformKind) -> Result<(Vec<T>, NormRecord<T>)> {
    let col = Column::complete(name, values.to_vec());
    let (c, rec) = normalize_column(&col, kind)?;
    Ok((c.values, rec))
}

/// Column form of [`normalize`]; missing cells stay missing and are ignored
/// by the moments.
pub fn normalize_column<T: Real>(column: &Column<T>, kind: TransformKind) -> Result<(Column<T>, NormRecord<T>)> {
    if kind == TransformKind::None {
        let rec = NormRecord { feature: column.name.clone(), kind, mean: T::zero(), std: T::one(), degenerate: false };
        return Ok((column.clone(), rec));
    }
    let known: Vec<T> = column.known().collect();
    if kind == TransformKind::Log1pZscore {
        if let Some(v) = known.iter().find(|v| **v < T::zero()) {
            return Err(Error::domain(&column.name, format!("negative value {v} under log1p")));
        }
    }
    let logged: Vec<T> = known.iter().map(|&v| forward(v, kind)).collect();
    let mu = mean(&logged).unwrap_or_else(T::zero);
    let sd = population_std(&logged, mu);
    let degenerate = !(sd > T::zero()) || logged.len() < 2;
    if degenerate {
        log::warn!("column `{}` is constant; emitted as zeros", column.name);
    }
    let values = column
        .values
        .iter()
        .zip(&column.missing)
        .map(|(&v, &m)| {
            if m {
                T::nan()
            } else if degenerate {
                T::zero()
            } else {
                (forward(v, kind) - mu) / sd
            }
        })
        .collect();
    let rec = NormRecord { feature: column.name.clone(), kind, mean: mu, std: if degenerate { T::zero() } else { sd }, degenerate };
    Ok((Column { name: column.name.clone(), values, missing: column.missing.clone() }, rec))
}

pub fn invert_value<T: Real>(z: T, rec: &NormRecord<T>) -> T {
    let v = if rec.degenerate { rec.mean } else { z * rec.std + rec.mean };
    match rec.kind {
        TransformKind::Log1pZscore => v.exp_m1(),
        TransformKind::Zscore => v,
        TransformKind::None => z,
    }
}

/// Maps standardized values back to the original scale.
pub fn invert<T: Real>(values: &[T], rec: &NormRecord<T>) -> Vec<T> {
    values.iter().map(|&z| invert_value(z, rec)).collect()
}
