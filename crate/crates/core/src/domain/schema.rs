//! Village CSV and covariate-schema file formats.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{CovariateValue, HouseRecord, HouseStatus};
use crate::{Error, Result};

/// Declared type of one covariate column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum CovariateKind {
    Continuous,
    Categorical { levels: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateSpec {
    pub name: String,
    #[serde(flatten)]
    pub kind: CovariateKind,
}

/// Sidecar schema declaring every covariate column of a village CSV.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CovariateSchema {
    pub covariates: Vec<CovariateSpec>,
}

impl CovariateSchema {
    pub fn get(&self, name: &str) -> Option<&CovariateSpec> {
        self.covariates.iter().find(|c| c.name == name)
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for c in &self.covariates {
            if RESERVED.contains(&c.name.as_str()) {
                return Err(Error::Schema(format!("covariate name {:?} is reserved", c.name)));
            }
            if !seen.insert(c.name.as_str()) {
                return Err(Error::Schema(format!("covariate {:?} declared twice", c.name)));
            }
            if let CovariateKind::Categorical { levels } = &c.kind {
                if levels.is_empty() {
                    return Err(Error::Schema(format!("categorical {:?} has no levels", c.name)));
                }
                let distinct: HashSet<_> = levels.iter().collect();
                if distinct.len() != levels.len() {
                    return Err(Error::Schema(format!("categorical {:?} repeats a level", c.name)));
                }
            }
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let schema: CovariateSchema =
            serde_json::from_str(&text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))?;
        schema.validate()?;
        Ok(schema)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        fs::write(path, text).map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

const RESERVED: [&str; 5] = ["id", "x_m", "y_m", "status", "true_status"];

/// `village.csv` → `village.schema.json`.
pub fn sidecar_schema_path(csv_path: &Path) -> PathBuf {
    csv_path.with_extension("schema.json")
}

fn parse_status(raw: &str, line: u64) -> Result<HouseStatus> {
    match raw.trim().to_ascii_lowercase().as_str() {
        "infested" => Ok(HouseStatus::Infested),
        "clear" => Ok(HouseStatus::Clear),
        "unknown" => Ok(HouseStatus::Unknown),
        other => Err(Error::Csv {
            line,
            message: format!("status must be infested|clear|unknown, got {other:?}"),
        }),
    }
}

fn parse_f64(raw: &str, column: &str, line: u64) -> Result<f64> {
    let v: f64 = raw.trim().parse().map_err(|_| Error::Csv {
        line,
        message: format!("column {column}: {raw:?} is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Csv {
            line,
            message: format!("column {column}: value must be finite"),
        });
    }
    Ok(v)
}

/// Parses village CSV text. Without a schema every extra column is continuous.
pub fn parse_village_csv(text: &str, schema: Option<&CovariateSchema>) -> Result<(Vec<HouseRecord>, CovariateSchema)> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| Error::Csv {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h == name);
    let id_col = col("id").ok_or_else(|| Error::Csv {
        line: 1,
        message: "missing column id".into(),
    })?;
    let x_col = col("x_m").ok_or_else(|| Error::Csv {
        line: 1,
        message: "missing column x_m".into(),
    })?;
    let y_col = col("y_m").ok_or_else(|| Error::Csv {
        line: 1,
        message: "missing column y_m".into(),
    })?;
    let status_col = col("status");
    let truth_col = col("true_status");

    let covariate_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| !RESERVED.contains(h))
        .map(|(i, h)| (i, h.to_string()))
        .collect();

    let schema = match schema {
        Some(s) => {
            s.validate()?;
            for (_, name) in &covariate_cols {
                if s.get(name).is_none() {
                    return Err(Error::Schema(format!("column {name:?} is not declared in the schema")));
                }
            }
            for spec in &s.covariates {
                if !covariate_cols.iter().any(|(_, n)| n == &spec.name) {
                    return Err(Error::Schema(format!(
                        "declared covariate {:?} is missing from the CSV",
                        spec.name
                    )));
                }
            }
            s.clone()
        }
        None => CovariateSchema {
            covariates: covariate_cols
                .iter()
                .map(|(_, name)| CovariateSpec {
                    name: name.clone(),
                    kind: CovariateKind::Continuous,
                })
                .collect(),
        },
    };

    let mut houses = Vec::new();
    let mut ids = HashSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Csv {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if let Some((i, _)) = record.iter().enumerate().find(|(_, v)| v.is_empty()) {
            return Err(Error::Csv {
                line,
                message: format!("missing value in column {}", &headers[i]),
            });
        }
        let id = record[id_col].to_string();
        if !ids.insert(id.clone()) {
            return Err(Error::DuplicateId(id));
        }
        let x_m = parse_f64(&record[x_col], "x_m", line)?;
        let y_m = parse_f64(&record[y_col], "y_m", line)?;
        let status = match status_col {
            Some(c) => parse_status(&record[c], line)?,
            None => HouseStatus::Unknown,
        };
        let true_status = match truth_col {
            Some(c) => match record[c].trim() {
                "0" => Some(false),
                "1" => Some(true),
                other => {
                    return Err(Error::Csv {
                        line,
                        message: format!("true_status must be 0 or 1, got {other:?}"),
                    })
                }
            },
            None => None,
        };
        let mut covariates = BTreeMap::new();
        for (c, name) in &covariate_cols {
            let raw = &record[*c];
            let spec = schema.get(name).expect("validated above");
            let value = match &spec.kind {
                CovariateKind::Continuous => CovariateValue::Continuous(parse_f64(raw, name, line)?),
                CovariateKind::Categorical { levels } => {
                    if !levels.iter().any(|l| l == raw) {
                        return Err(Error::Csv {
                            line,
                            message: format!("column {name}: unknown level {raw:?}"),
                        });
                    }
                    CovariateValue::Categorical(raw.to_string())
                }
            };
            covariates.insert(name.clone(), value);
        }
        houses.push(HouseRecord {
            id,
            x_m,
            y_m,
            covariates,
            status,
            true_status,
        });
    }
    Ok((houses, schema))
}

/// Serializes houses in the village CSV layout, covariates in schema order.
pub fn write_village_csv(houses: &[HouseRecord], schema: &CovariateSchema) -> Result<String> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    let include_truth = houses.iter().any(|h| h.true_status.is_some());
    let mut header = vec!["id".to_string(), "x_m".into(), "y_m".into(), "status".into()];
    if include_truth {
        header.push("true_status".into());
    }
    header.extend(schema.covariates.iter().map(|c| c.name.clone()));
    let csv_err = |e: csv::Error| Error::Csv {
        line: 0,
        message: e.to_string(),
    };
    writer.write_record(&header).map_err(csv_err)?;
    for h in houses {
        let mut row = vec![
            h.id.clone(),
            format!("{}", h.x_m),
            format!("{}", h.y_m),
            h.status.as_str().to_string(),
        ];
        if include_truth {
            row.push(match h.true_status {
                Some(true) => "1".into(),
                Some(false) => "0".into(),
                None => {
                    return Err(Error::invalid(
                        "true_status",
                        format!("house {} lacks ground truth", h.id),
                    ))
                }
            });
        }
        for spec in &schema.covariates {
            let value = h
                .covariates
                .get(&spec.name)
                .ok_or_else(|| Error::invalid(&spec.name, format!("house {} lacks this covariate", h.id)))?;
            row.push(match value {
                CovariateValue::Continuous(v) => format!("{v}"),
                CovariateValue::Categorical(s) => s.clone(),
            });
        }
        writer.write_record(&row).map_err(csv_err)?;
    }
    let bytes = writer.into_inner().map_err(|e| Error::Csv {
        line: 0,
        message: e.to_string(),
    })?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}
