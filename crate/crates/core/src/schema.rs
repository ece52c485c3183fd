//! Shared data model: road segments, feature tables, the C/O/P/L triad
//! schema, grid cells and normalization parameters.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use crate::error::{Error, Result};
use crate::geometry::{polyline_length, Point};
use crate::real::Real;

/// Triad dimension of a feature.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Dimension {
    /// Conceived space: network structure and road attributes.
    C,
    /// Objective land-use context (`C_D_*` columns).
    O,
    /// Perceived space: street-view proportions.
    P,
    /// Lived space: social-media and POI-derived indicators.
    L,
}

impl Dimension {
    pub const ALL: [Dimension; 4] = [Dimension::C, Dimension::O, Dimension::P, Dimension::L];

    /// Position in [`Dimension::ALL`].
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Dimension::C => "C",
            Dimension::O => "O",
            Dimension::P => "P",
            Dimension::L => "L",
        }
    }

    /// O folds into C wherever the three-way scheme is used.
    pub fn triad(self) -> Dimension {
        if self == Dimension::O {
            Dimension::C
        } else {
            self
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            "C" | "c" => Some(Dimension::C),
            "O" | "o" => Some(Dimension::O),
            "P" | "p" => Some(Dimension::P),
            "L" | "l" => Some(Dimension::L),
            _ => None,
        }
    }
}

impl fmt::Display for Dimension {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Prefix-based mapping from feature names to triad dimensions, with
/// optional explicit overrides.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TriadSchema {
    pub assignments: BTreeMap<String, Dimension>,
    pub merge_o_into_c: bool,
}

impl TriadSchema {
    pub fn merged() -> Self {
        Self { assignments: BTreeMap::new(), merge_o_into_c: true }
    }

    pub fn classify(&self, name: &str) -> Result<Dimension> {
        classify_feature(name, self)
    }
}

/// Resolves a feature name to its dimension: explicit assignment first, then
/// the prefix rule `C_D_` -> O, `C_` -> C, `P_` -> P, `L_` -> L.
pub fn classify_feature(name: &str, schema: &TriadSchema) -> Result<Dimension> {
    if name.is_empty() {
        return Err(Error::schema(name, "empty feature name"));
    }
    let dim = if let Some(&d) = schema.assignments.get(name) {
        d
    } else if name.starts_with("C_D_") {
        Dimension::O
    } else if name.starts_with("C_") {
        Dimension::C
    } else if name.starts_with("P_") {
        Dimension::P
    } else if name.starts_with("L_") {
        Dimension::L
    } else {
        return Err(Error::schema(name, "name carries no C_/C_D_/P_/L_ prefix"));
    };
    Ok(if schema.merge_o_into_c { dim.triad() } else { dim })
}

/// Road segment polyline in projected meters.
#[derive(Debug, Clone, PartialEq)]
pub struct RoadSegment<T> {
    pub id: String,
    pub geometry: Vec<Point<T>>,
    pub length_m: T,
    pub district: Option<String>,
}

impl<T: Real> RoadSegment<T> {
    pub fn new(id: impl Into<String>, geometry: Vec<Point<T>>, district: Option<String>) -> Result<Self> {
        let id = id.into();
        if geometry.len() < 2 {
            return Err(Error::Input(format!("segment `{id}` has fewer than two points")));
        }
        if geometry.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(Error::Input(format!("segment `{id}` has non-finite coordinates")));
        }
        let length_m = polyline_length(&geometry);
        if length_m <= T::zero() {
            return Err(Error::Input(format!("segment `{id}` has zero length")));
        }
        Ok(Self { id, geometry, length_m, district })
    }

    pub fn start(&self) -> Point<T> {
        self.geometry[0]
    }

    pub fn end(&self) -> Point<T> {
        *self.geometry.last().expect("validated geometry")
    }

    /// True when both endpoints coincide (explicit loop).
    pub fn is_loop(&self) -> bool {
        self.start() == self.end()
    }
}

/// Named column with an explicit missing-cell mask. Missing cells hold NaN
/// but the mask is authoritative.
#[derive(Debug, Clone, PartialEq)]
pub struct Column<T> {
    pub name: String,
    pub values: Vec<T>,
    pub missing: Vec<bool>,
}

impl<T: Real> Column<T> {
    pub fn complete(name: impl Into<String>, values: Vec<T>) -> Self {
        let missing = vec![false; values.len()];
        Self { name: name.into(), values, missing }
    }

    pub fn with_missing(name: impl Into<String>, values: Vec<Option<T>>) -> Self {
        let missing = values.iter().map(Option::is_none).collect();
        let values = values.into_iter().map(|v| v.unwrap_or_else(T::nan)).collect();
        Self { name: name.into(), values, missing }
    }

    pub fn missing_count(&self) -> usize {
        self.missing.iter().filter(|&&m| m).count()
    }

    pub fn known(&self) -> impl Iterator<Item = T> + '_ {
        self.values.iter().zip(&self.missing).filter(|(_, &m)| !m).map(|(&v, _)| v)
    }
}

/// Segments x named feature columns, plus an optional response.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable<T> {
    pub segment_ids: Vec<String>,
    pub columns: Vec<Column<T>>,
    pub response: Option<Column<T>>,
}

impl<T: Real> FeatureTable<T> {
    pub fn new(segment_ids: Vec<String>) -> Self {
        Self { segment_ids, columns: Vec::new(), response: None }
    }

    pub fn n_rows(&self) -> usize {
        self.segment_ids.len()
    }

    pub fn push(&mut self, column: Column<T>) -> Result<()> {
        if column.values.len() != self.n_rows() || column.missing.len() != self.n_rows() {
            return Err(Error::schema(
                &column.name,
                format!("{} values for {} segments", column.values.len(), self.n_rows()),
            ));
        }
        if self.column(&column.name).is_some() {
            return Err(Error::schema(&column.name, "duplicate column"));
        }
        self.columns.push(column);
        Ok(())
    }

    /// Inserts or replaces a column by name, keeping position on replace.
    pub fn upsert(&mut self, column: Column<T>) -> Result<()> {
        if let Some(i) = self.column_index(&column.name) {
            if column.values.len() != self.n_rows() {
                return Err(Error::schema(&column.name, "length mismatch"));
            }
            self.columns[i] = column;
            Ok(())
        } else {
            self.push(column)
        }
    }

    pub fn set_response(&mut self, column: Column<T>) -> Result<()> {
        if column.values.len() != self.n_rows() {
            return Err(Error::schema(&column.name, "response length mismatch"));
        }
        self.response = Some(column);
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<&Column<T>> {
        self.columns.iter().find(|c| c.name == name)
    }

    pub fn column_index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.columns.iter().map(|c| c.name.clone()).collect()
    }

    pub fn row_index(&self) -> HashMap<&str, usize> {
        self.segment_ids.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect()
    }

    /// Dense model matrix over `names`; refuses missing or unknown columns.
    pub fn matrix(&self, names: &[String]) -> Result<crate::matrix::Matrix<T>> {
        let mut cols = Vec::with_capacity(names.len());
        for n in names {
            let c = self
                .column(n)
                .ok_or_else(|| Error::Lookup { kind: "feature column", id: n.clone() })?;
            if c.missing_count() > 0 {
                return Err(Error::schema(n, "column still has missing cells"));
            }
            cols.push(c.values.as_slice());
        }
        if cols.is_empty() {
            return crate::matrix::Matrix::new(self.n_rows(), 0, Vec::new());
        }
        crate::matrix::Matrix::from_columns(&cols)
    }

    pub fn response_values(&self) -> Result<&[T]> {
        let r = self.response.as_ref().ok_or_else(|| Error::Input("table has no response column".into()))?;
        if r.missing_count() > 0 {
            return Err(Error::schema(&r.name, "response has missing cells"));
        }
        Ok(&r.values)
    }
}

/// 200 m (by default) harmonization cell.
#[derive(Debug, Clone, PartialEq)]
pub struct GridCell<T> {
    pub id: String,
    pub row: usize,
    pub col: usize,
    pub origin_x: T,
    pub origin_y: T,
    pub size_m: T,
    pub population: T,
    pub aggregates: BTreeMap<String, T>,
    /// False when no segment intersects the cell.
    pub has_supply: bool,
}

impl<T: Real> GridCell<T> {
    pub fn cell_id(row: usize, col: usize) -> String {
        format!("r{row}c{col}")
    }

    pub fn rect(&self) -> crate::geometry::Rect<T> {
        crate::geometry::Rect {
            min_x: self.origin_x,
            min_y: self.origin_y,
            max_x: self.origin_x + self.size_m,
            max_y: self.origin_y + self.size_m,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformKind {
    Log1pZscore,
    Zscore,
    None,
}

impl TransformKind {
    pub fn as_str(self) -> &'static str {
        match self {
            TransformKind::Log1pZscore => "log1p_zscore",
            TransformKind::Zscore => "zscore",
            TransformKind::None => "none",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s {
            "log1p_zscore" => Some(Self::Log1pZscore),
            "zscore" => Some(Self::Zscore),
            "none" => Some(Self::None),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NormRecord<T> {
    pub feature: String,
    pub kind: TransformKind,
    pub mean: T,
    pub std: T,
    /// Constant column: passed through as zeros, never divided.
    pub degenerate: bool,
}

/// Per-feature transform parameters, stored for exact inversion.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NormalizationParams<T> {
    pub records: Vec<NormRecord<T>>,
}

impl<T: Real> NormalizationParams<T> {
    pub fn get(&self, feature: &str) -> Option<&NormRecord<T>> {
        self.records.iter().find(|r| r.feature == feature)
    }

    pub fn upsert(&mut self, rec: NormRecord<T>) {
        if let Some(r) = self.records.iter_mut().find(|r| r.feature == rec.feature) {
            *r = rec;
        } else {
            self.records.push(rec);
        }
    }
}

/// One dataset problem found by [`validate_dataset`].
#[derive(Debug, Clone, PartialEq)]
pub enum Issue {
    RowCountMismatch { table_rows: usize, segments: usize },
    UnknownSegment { segment_id: String },
    DuplicateSegment { segment_id: String },
    UnresolvableColumn { column: String, reason: String },
    MissingCells { column: String, missing: usize, rows: usize },
    NonFinite { column: String, count: usize },
}

impl fmt::Display for Issue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Issue::RowCountMismatch { table_rows, segments } => {
                write!(f, "row count mismatch: table has {table_rows} rows, {segments} segments")
            }
            Issue::UnknownSegment { segment_id } => write!(f, "table row `{segment_id}` matches no segment"),
            Issue::DuplicateSegment { segment_id } => write!(f, "duplicate segment id `{segment_id}`"),
            Issue::UnresolvableColumn { column, reason } => write!(f, "column `{column}`: {reason}"),
            Issue::MissingCells { column, missing, rows } => {
                write!(f, "column `{column}`: {missing} of {rows} cells missing")
            }
            Issue::NonFinite { column, count } => write!(f, "column `{column}`: {count} non-finite values"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub issues: Vec<Issue>,
}

impl ValidationReport {
    pub fn is_ready(&self) -> bool {
        self.issues.is_empty()
    }
}

/// Reports everything that keeps `table` from being pipeline-ready.
pub fn validate_dataset<T: Real>(
    table: &FeatureTable<T>,
    segments: &[RoadSegment<T>],
    schema: &TriadSchema,
) -> ValidationReport {
    let mut issues = Vec::new();
    if table.n_rows() != segments.len() {
        issues.push(Issue::RowCountMismatch { table_rows: table.n_rows(), segments: segments.len() });
    }
    let known: HashSet<&str> = segments.iter().map(|s| s.id.as_str()).collect();
    let mut seen = HashSet::new();
    for id in &table.segment_ids {
        if !seen.insert(id.as_str()) {
            issues.push(Issue::DuplicateSegment { segment_id: id.clone() });
        }
        if !known.contains(id.as_str()) {
            issues.push(Issue::UnknownSegment { segment_id: id.clone() });
        }
    }
    let response = table.response.iter();
    for col in table.columns.iter() {
        if let Err(Error::Schema { reason, .. }) = classify_feature(&col.name, schema) {
            issues.push(Issue::UnresolvableColumn { column: col.name.clone(), reason });
        }
    }
    for col in table.columns.iter().chain(response) {
        let missing = col.missing_count();
        if missing > 0 {
            issues.push(Issue::MissingCells { column: col.name.clone(), missing, rows: table.n_rows() });
        }
        let bad = col.known().filter(|v| !v.is_finite()).count();
        if bad > 0 {
            issues.push(Issue::NonFinite { column: col.name.clone(), count: bad });
        }
    }
    ValidationReport { issues }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn seg(id: &str) -> RoadSegment<f64> {
        RoadSegment::new(id, vec![Point::new(0.0, 0.0), Point::new(3.0, 4.0)], None).unwrap()
    }

    #[test]
    fn prefix_rule_classifies_table_one_families() {
        let s = TriadSchema::default();
        assert_eq!(classify_feature("C_free_speed", &s).unwrap(), Dimension::C);
        assert_eq!(classify_feature("C_D_tree", &s).unwrap(), Dimension::O);
        assert_eq!(classify_feature("C_D_tree", &TriadSchema::merged()).unwrap(), Dimension::C);
        assert_eq!(classify_feature("P_sky", &s).unwrap(), Dimension::P);
        assert_eq!(classify_feature("L_poi_entropy300", &s).unwrap(), Dimension::L);
    }

    #[test]
    fn unknown_prefix_names_the_column() {
        let err = classify_feature("speed", &TriadSchema::default()).unwrap_err();
        assert!(err.to_string().contains("`speed`"));
        assert!(classify_feature("", &TriadSchema::default()).is_err());
    }

    #[test]
    fn explicit_assignment_overrides_prefix() {
        let mut s = TriadSchema::default();
        s.assignments.insert("C_D_transport".into(), Dimension::C);
        assert_eq!(s.classify("C_D_transport").unwrap(), Dimension::C);
    }

    #[test]
    fn segment_length_is_arc_length() {
        let s = seg("a");
        assert_eq!(s.length_m, 5.0);
        assert!(RoadSegment::<f64>::new("b", vec![Point::new(0.0, 0.0)], None).is_err());
    }

    #[test]
    fn validation_flags_all_missing_column() {
        let mut t = FeatureTable::new(vec!["a".into(), "b".into()]);
        t.push(Column::with_missing("P_sky", vec![None, None])).unwrap();
        let r = validate_dataset(&t, &[seg("a"), seg("b")], &TriadSchema::default());
        assert_eq!(r.issues, vec![Issue::MissingCells { column: "P_sky".into(), missing: 2, rows: 2 }]);
    }

    #[test]
    fn validation_clean_and_mismatch() {
        let mut t = FeatureTable::new(vec!["a".into(), "b".into()]);
        t.push(Column::complete("C_x", vec![1.0, 2.0])).unwrap();
        assert!(validate_dataset(&t, &[seg("a"), seg("b")], &TriadSchema::default()).is_ready());
        let r = validate_dataset(&t, &[seg("a")], &TriadSchema::default());
        assert!(r.issues.contains(&Issue::RowCountMismatch { table_rows: 2, segments: 1 }));
    }

    #[test]
    fn validation_flags_bad_names_and_nonfinite() {
        let mut t = FeatureTable::new(vec!["a".into()]);
        t.push(Column::complete("speed", vec![f64::INFINITY])).unwrap();
        let r = validate_dataset(&t, &[seg("a")], &TriadSchema::default());
        assert_eq!(r.issues.len(), 2);
    }
}
