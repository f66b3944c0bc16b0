//! Village data: house records, derived spatial covariates and the
//! standardized design matrix used by the model.

pub mod geometry;
pub mod schema;
pub mod standardize;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::Path;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub use geometry::{PerimeterDistances, DENSITY_RADIUS_M, PERIMETER_OFFSET_M};
pub use schema::{CovariateKind, CovariateSchema, CovariateSpec};
pub use standardize::{standardize, ColumnStats};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HouseStatus {
    Unknown,
    Infested,
    Clear,
}

impl HouseStatus {
    pub fn as_str(&self) -> &'static str {
        match self {
            HouseStatus::Unknown => "unknown",
            HouseStatus::Infested => "infested",
            HouseStatus::Clear => "clear",
        }
    }

    pub fn observed(&self) -> Option<bool> {
        match self {
            HouseStatus::Unknown => None,
            HouseStatus::Infested => Some(true),
            HouseStatus::Clear => Some(false),
        }
    }

    pub fn from_infested(infested: bool) -> Self {
        if infested {
            HouseStatus::Infested
        } else {
            HouseStatus::Clear
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CovariateValue {
    Continuous(f64),
    Categorical(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HouseRecord {
    pub id: String,
    pub x_m: f64,
    pub y_m: f64,
    pub covariates: BTreeMap<String, CovariateValue>,
    pub status: HouseStatus,
    /// Ground truth, present only for synthetic or fully labelled villages.
    pub true_status: Option<bool>,
}

/// Which covariates enter the design matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CovariateSet {
    /// Intercept, density and distance to perimeter: everything derivable from coordinates.
    Global,
    /// The global set plus every declared household covariate.
    All,
}

impl CovariateSet {
    pub fn as_str(&self) -> &'static str {
        match self {
            CovariateSet::Global => "global",
            CovariateSet::All => "all",
        }
    }
}

impl std::str::FromStr for CovariateSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" | "global-only" | "globalonly" => Ok(CovariateSet::Global),
            "all" => Ok(CovariateSet::All),
            other => Err(Error::invalid("covset", format!("expected global|all, got {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnKind {
    Intercept,
    Continuous,
    /// One-hot indicator of a non-reference categorical level.
    Indicator,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignColumn {
    pub name: String,
    pub kind: ColumnKind,
    pub stats: ColumnStats,
}

impl DesignColumn {
    pub fn is_constant(&self) -> bool {
        self.kind == ColumnKind::Continuous && self.stats.is_constant()
    }
}

#[derive(Debug)]
struct FrameData {
    houses: Vec<HouseRecord>,
    schema: CovariateSchema,
    covariate_set: CovariateSet,
    scaled_coords: Vec<[f64; 2]>,
    origin_m: [f64; 2],
    diameter_m: f64,
    density: Vec<usize>,
    perimeter: PerimeterDistances,
    design: DMatrix<f64>,
    columns: Vec<DesignColumn>,
    distances: DMatrix<f64>,
    index_of: HashMap<String, usize>,
}

/// Immutable per-village dataset. Cloning is cheap and shares the data.
#[derive(Debug, Clone)]
pub struct VillageFrame {
    inner: Arc<FrameData>,
}

impl VillageFrame {
    /// Builds the frame: derives density and perimeter distance in meters,
    /// scales coordinates by the village diameter and encodes the design matrix.
    pub fn from_houses(
        houses: Vec<HouseRecord>,
        schema: &CovariateSchema,
        covariate_set: CovariateSet,
    ) -> Result<Self> {
        schema.validate()?;
        let n = houses.len();
        if n < 2 {
            return Err(Error::TooFewHouses(n));
        }
        let mut index_of = HashMap::with_capacity(n);
        for (i, h) in houses.iter().enumerate() {
            if !h.x_m.is_finite() || !h.y_m.is_finite() {
                return Err(Error::invalid(
                    "coordinates",
                    format!("house {} has non-finite coordinates", h.id),
                ));
            }
            if index_of.insert(h.id.clone(), i).is_some() {
                return Err(Error::DuplicateId(h.id.clone()));
            }
        }
        let raw: Vec<[f64; 2]> = houses.iter().map(|h| [h.x_m, h.y_m]).collect();
        let diameter_m = geometry::diameter(&raw);
        if diameter_m <= 0.0 {
            return Err(Error::invalid("coordinates", "all houses share one location"));
        }
        let origin_m = [
            raw.iter().map(|p| p[0]).fold(f64::INFINITY, f64::min),
            raw.iter().map(|p| p[1]).fold(f64::INFINITY, f64::min),
        ];
        let scaled_coords: Vec<[f64; 2]> = raw
            .iter()
            .map(|p| [(p[0] - origin_m[0]) / diameter_m, (p[1] - origin_m[1]) / diameter_m])
            .collect();
        let density = geometry::density(&raw, DENSITY_RADIUS_M);
        let perimeter = geometry::distance_to_perimeter(&raw);

        let mut raw_columns: Vec<(String, ColumnKind, Vec<f64>)> = vec![
            ("intercept".into(), ColumnKind::Intercept, vec![1.0; n]),
            (
                "density".into(),
                ColumnKind::Continuous,
                density.iter().map(|&c| c as f64).collect(),
            ),
            (
                "distance_to_perimeter".into(),
                ColumnKind::Continuous,
                perimeter.values.clone(),
            ),
        ];
        if covariate_set == CovariateSet::All {
            for spec in &schema.covariates {
                let values: Vec<&CovariateValue> = houses
                    .iter()
                    .map(|h| {
                        h.covariates
                            .get(&spec.name)
                            .ok_or_else(|| Error::invalid(&spec.name, format!("missing for house {}", h.id)))
                    })
                    .collect::<Result<_>>()?;
                match &spec.kind {
                    CovariateKind::Continuous => {
                        let col = values
                            .iter()
                            .map(|v| match v {
                                CovariateValue::Continuous(x) => Ok(*x),
                                CovariateValue::Categorical(s) => s
                                    .parse::<f64>()
                                    .map_err(|_| Error::invalid(&spec.name, format!("{s:?} is not numeric"))),
                            })
                            .collect::<Result<Vec<f64>>>()?;
                        raw_columns.push((spec.name.clone(), ColumnKind::Continuous, col));
                    }
                    CovariateKind::Categorical { levels } => {
                        let mut sorted = levels.clone();
                        sorted.sort();
                        let labels = values
                            .iter()
                            .map(|v| {
                                let s = match v {
                                    CovariateValue::Categorical(s) => s.clone(),
                                    CovariateValue::Continuous(x) => format!("{x}"),
                                };
                                if sorted.contains(&s) {
                                    Ok(s)
                                } else {
                                    Err(Error::invalid(&spec.name, format!("unknown level {s:?}")))
                                }
                            })
                            .collect::<Result<Vec<String>>>()?;
                        for level in sorted.iter().skip(1) {
                            let col = labels.iter().map(|l| if l == level { 1.0 } else { 0.0 }).collect();
                            raw_columns.push((format!("{}[{}]", spec.name, level), ColumnKind::Indicator, col));
                        }
                    }
                }
            }
        }

        let p = raw_columns.len();
        let mut design = DMatrix::zeros(n, p);
        let mut columns = Vec::with_capacity(p);
        for (j, (name, kind, values)) in raw_columns.into_iter().enumerate() {
            let (scaled, stats) = match kind {
                ColumnKind::Continuous => standardize(&values)?,
                _ => (values, ColumnStats { mean: 0.0, sd: 1.0 }),
            };
            for (i, v) in scaled.into_iter().enumerate() {
                design[(i, j)] = v;
            }
            columns.push(DesignColumn { name, kind, stats });
        }

        let distances = DMatrix::from_fn(n, n, |i, j| geometry::dist(scaled_coords[i], scaled_coords[j]));

        Ok(VillageFrame {
            inner: Arc::new(FrameData {
                houses,
                schema: schema.clone(),
                covariate_set,
                scaled_coords,
                origin_m,
                diameter_m,
                density,
                perimeter,
                design,
                columns,
                distances,
                index_of,
            }),
        })
    }

    /// The same houses encoded with a different covariate set.
    pub fn with_covariate_set(&self, covariate_set: CovariateSet) -> Result<Self> {
        if covariate_set == self.inner.covariate_set {
            return Ok(self.clone());
        }
        Self::from_houses(self.inner.houses.clone(), &self.inner.schema, covariate_set)
    }

    pub fn len(&self) -> usize {
        self.inner.houses.len()
    }

    pub fn is_empty(&self) -> bool {
        self.inner.houses.is_empty()
    }

    pub fn houses(&self) -> &[HouseRecord] {
        &self.inner.houses
    }

    pub fn house(&self, index: usize) -> &HouseRecord {
        &self.inner.houses[index]
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.inner.index_of.get(id).copied()
    }

    pub fn schema(&self) -> &CovariateSchema {
        &self.inner.schema
    }

    pub fn covariate_set(&self) -> CovariateSet {
        self.inner.covariate_set
    }

    pub fn scaled_coords(&self) -> &[[f64; 2]] {
        &self.inner.scaled_coords
    }

    pub fn origin_m(&self) -> [f64; 2] {
        self.inner.origin_m
    }

    pub fn diameter_m(&self) -> f64 {
        self.inner.diameter_m
    }

    pub fn density(&self) -> &[usize] {
        &self.inner.density
    }

    pub fn perimeter(&self) -> &PerimeterDistances {
        &self.inner.perimeter
    }

    /// Standardized design matrix, one row per house.
    pub fn design(&self) -> &DMatrix<f64> {
        &self.inner.design
    }

    pub fn columns(&self) -> &[DesignColumn] {
        &self.inner.columns
    }

    pub fn n_columns(&self) -> usize {
        self.inner.columns.len()
    }

    /// Pairwise distances between scaled coordinates.
    pub fn distances(&self) -> &DMatrix<f64> {
        &self.inner.distances
    }

    pub fn has_truth(&self) -> bool {
        self.inner.houses.iter().all(|h| h.true_status.is_some())
    }

    pub fn export(&self) -> FrameExport {
        FrameExport {
            covariate_set: self.covariate_set(),
            diameter_m: self.diameter_m(),
            origin_m: self.origin_m(),
            degenerate_hull: self.perimeter().degenerate,
            columns: self.columns().to_vec(),
            houses: (0..self.len())
                .map(|i| {
                    let h = self.house(i);
                    HouseExport {
                        id: h.id.clone(),
                        x_m: h.x_m,
                        y_m: h.y_m,
                        x: self.scaled_coords()[i][0],
                        y: self.scaled_coords()[i][1],
                        density: self.density()[i],
                        distance_to_perimeter_m: self.perimeter().values[i],
                        status: h.status,
                        true_status: h.true_status,
                        row: self.design().row(i).iter().copied().collect(),
                    }
                })
                .collect(),
        }
    }
}

/// JSON view of a prepared village.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrameExport {
    pub covariate_set: CovariateSet,
    pub diameter_m: f64,
    pub origin_m: [f64; 2],
    pub degenerate_hull: bool,
    pub columns: Vec<DesignColumn>,
    pub houses: Vec<HouseExport>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct HouseExport {
    pub id: String,
    pub x_m: f64,
    pub y_m: f64,
    pub x: f64,
    pub y: f64,
    pub density: usize,
    pub distance_to_perimeter_m: f64,
    pub status: HouseStatus,
    pub true_status: Option<bool>,
    pub row: Vec<f64>,
}

/// Loads a village CSV. A sidecar `<stem>.schema.json` is used when present.
pub fn load_village(path: &Path, covariate_set: CovariateSet) -> Result<VillageFrame> {
    let sidecar = schema::sidecar_schema_path(path);
    let schema_path = sidecar.exists().then_some(sidecar);
    load_village_with_schema(path, schema_path.as_deref(), covariate_set)
}

pub fn load_village_with_schema(
    path: &Path,
    schema_path: Option<&Path>,
    covariate_set: CovariateSet,
) -> Result<VillageFrame> {
    let text = fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let schema = schema_path.map(CovariateSchema::read).transpose()?;
    parse_village(&text, schema.as_ref(), covariate_set)
}

pub fn parse_village(
    csv_text: &str,
    schema: Option<&CovariateSchema>,
    covariate_set: CovariateSet,
) -> Result<VillageFrame> {
    let (houses, schema) = schema::parse_village_csv(csv_text, schema)?;
    VillageFrame::from_houses(houses, &schema, covariate_set)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy_csv() -> &'static str {
        "id,x_m,y_m\na,0,0\nb,0,100\nc,0,200\n"
    }

    #[test]
    fn three_collinear_houses_scale_to_unit_diameter() {
        let f = parse_village(toy_csv(), None, CovariateSet::Global).unwrap();
        assert_eq!(f.diameter_m(), 200.0);
        let ys: Vec<f64> = f.scaled_coords().iter().map(|p| p[1]).collect();
        assert_eq!(ys, vec![0.0, 0.5, 1.0]);
        assert!(f.perimeter().degenerate);
        // global design: intercept, density, perimeter
        assert_eq!(f.n_columns(), 3);
        // all perimeter distances equal -> constant column
        assert!(f.columns()[2].is_constant());
        assert!(f.design().column(2).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rejects_duplicates_short_villages_and_bad_numbers() {
        assert!(matches!(
            parse_village("id,x_m,y_m\na,0,0\na,1,1\n", None, CovariateSet::Global),
            Err(Error::DuplicateId(_))
        ));
        assert!(matches!(
            parse_village("id,x_m,y_m\na,0,0\n", None, CovariateSet::Global),
            Err(Error::TooFewHouses(1))
        ));
        assert!(matches!(
            parse_village("id,x_m,y_m\na,0,zero\nb,1,1\n", None, CovariateSet::Global),
            Err(Error::Csv { line: 2, .. })
        ));
        assert!(matches!(
            parse_village("id,x_m,y_m,rats\na,0,0,\nb,1,1,yes\n", None, CovariateSet::Global),
            Err(Error::Csv { .. })
        ));
    }

    fn schema() -> CovariateSchema {
        CovariateSchema {
            covariates: vec![
                CovariateSpec {
                    name: "rats".into(),
                    kind: CovariateKind::Categorical {
                        levels: vec!["yes".into(), "no".into()],
                    },
                },
                CovariateSpec {
                    name: "n_dogs".into(),
                    kind: CovariateKind::Continuous,
                },
            ],
        }
    }

    #[test]
    fn categorical_levels_are_one_hot_with_alphabetical_reference() {
        let csv = "id,x_m,y_m,rats,n_dogs\na,0,0,yes,1\nb,100,0,no,2\nc,0,100,yes,3\nd,50,50,no,3\n";
        let f = parse_village(csv, Some(&schema()), CovariateSet::All).unwrap();
        let names: Vec<&str> = f.columns().iter().map(|c| c.name.as_str()).collect();
        assert_eq!(
            names,
            vec!["intercept", "density", "distance_to_perimeter", "rats[yes]", "n_dogs"]
        );
        let rats: Vec<f64> = f.design().column(3).iter().copied().collect();
        assert_eq!(rats, vec![1.0, 0.0, 1.0, 0.0]);
        let dogs: Vec<f64> = f.design().column(4).iter().copied().collect();
        let m: f64 = dogs.iter().sum::<f64>() / 4.0;
        assert!(m.abs() < 1e-12);
        let g = f.with_covariate_set(CovariateSet::Global).unwrap();
        assert_eq!(g.n_columns(), 3);
    }

    #[test]
    fn schema_violations_are_reported() {
        let unknown_level = "id,x_m,y_m,rats,n_dogs\na,0,0,maybe,1\nb,1,1,no,2\n";
        assert!(matches!(
            parse_village(unknown_level, Some(&schema()), CovariateSet::All),
            Err(Error::Csv { .. })
        ));
        let undeclared = "id,x_m,y_m,rats,n_dogs,cats\na,0,0,yes,1,0\nb,1,1,no,2,1\n";
        assert!(matches!(
            parse_village(undeclared, Some(&schema()), CovariateSet::All),
            Err(Error::Schema(_))
        ));
    }

    #[test]
    fn csv_round_trip_preserves_records() {
        let csv = "id,x_m,y_m,status,true_status,rats,n_dogs\na,0,0,infested,1,yes,1\nb,100,0,unknown,0,no,2\n";
        let (houses, schema) = schema::parse_village_csv(csv, Some(&schema())).unwrap();
        let text = schema::write_village_csv(&houses, &schema).unwrap();
        let (again, _) = schema::parse_village_csv(&text, Some(&schema)).unwrap();
        assert_eq!(houses, again);
    }

    #[test]
    fn sidecar_schema_is_picked_up() {
        let dir = tempfile::tempdir().unwrap();
        let csv = dir.path().join("v.csv");
        fs::write(
            &csv,
            "id,x_m,y_m,rats,n_dogs\na,0,0,yes,1\nb,100,0,no,2\nc,0,100,no,0\n",
        )
        .unwrap();
        schema().write(&schema::sidecar_schema_path(&csv)).unwrap();
        let f = load_village(&csv, CovariateSet::All).unwrap();
        assert_eq!(f.columns()[3].name, "rats[yes]");
    }
}
