//! CSV input for the estimation and partially linear logistic commands.
//!
//! Both schemas are headed: `y, a, x1..xd` plus optional nuisance columns
//! (`omega_hat`/`pi_hat` and `mu_hat`, or `v_hat` and `m_hat`). Covariate
//! columns are matched by name, so their order in the file is free.

use crate::data::{Bounds, Dataset, NuisanceValues};
use crate::error::{Error, Result};
use crate::plm::PlmData;

/// Parsed numeric columns, prior to semantic validation.
#[derive(Debug, Clone, PartialEq)]
pub struct RawTable {
    pub y: Vec<f64>,
    pub a: Vec<f64>,
    /// Row-major covariates, `d` per row.
    pub x: Vec<f64>,
    pub d: usize,
    /// Optional nuisance columns keyed by header name.
    pub extra: Vec<(String, Vec<f64>)>,
}

impl RawTable {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.extra
            .iter()
            .find(|(k, _)| k == name)
            .map(|(_, v)| v.as_slice())
    }

    pub fn x_rows(&self) -> Vec<&[f64]> {
        if self.d == 0 {
            return vec![&[][..]; self.len()];
        }
        self.x.chunks(self.d).collect()
    }
}

fn parse_table(bytes: &[u8], optional: &[&str]) -> Result<RawTable> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(bytes);
    let header = reader
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let names: Vec<String> = header.iter().map(|h| h.to_ascii_lowercase()).collect();
    let find = |name: &str| names.iter().position(|h| h == name);
    let missing = |name: &str| Error::Parse {
        line: 1,
        message: format!("missing required column `{name}`"),
    };
    let y_col = find("y").ok_or_else(|| missing("y"))?;
    let a_col = find("a").ok_or_else(|| missing("a"))?;

    let mut x_cols = Vec::new();
    let mut extra_cols = Vec::new();
    for (c, name) in names.iter().enumerate() {
        if c == y_col || c == a_col {
            continue;
        }
        if let Some(idx) = name.strip_prefix('x').and_then(|s| s.parse::<usize>().ok()) {
            x_cols.push((idx, c));
        } else if optional.contains(&name.as_str()) {
            if extra_cols.iter().any(|(n, _): &(String, usize)| n == name) {
                return Err(Error::Parse {
                    line: 1,
                    message: format!("duplicate column `{name}`"),
                });
            }
            extra_cols.push((name.clone(), c));
        } else {
            return Err(Error::Parse {
                line: 1,
                message: format!("unknown column `{}`", header.get(c).unwrap_or_default()),
            });
        }
    }
    x_cols.sort_unstable();
    for (expected, &(idx, _)) in (1..).zip(&x_cols) {
        if idx != expected {
            return Err(Error::Parse {
                line: 1,
                message: format!("covariate columns must be x1..x{}, found x{idx}", x_cols.len()),
            });
        }
    }

    let d = x_cols.len();
    let mut table = RawTable {
        y: Vec::new(),
        a: Vec::new(),
        x: Vec::new(),
        d,
        extra: extra_cols.iter().map(|(n, _)| (n.clone(), Vec::new())).collect(),
    };
    for (r, record) in reader.records().enumerate() {
        let line = r + 2;
        let record = record.map_err(|e| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let field = |c: usize| -> Result<f64> {
            let raw = record.get(c).unwrap_or_default();
            raw.parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("column `{}`: cannot parse `{raw}` as a number", names[c]),
            })
        };
        table.y.push(field(y_col)?);
        table.a.push(field(a_col)?);
        for &(_, c) in &x_cols {
            table.x.push(field(c)?);
        }
        for (slot, &(_, c)) in table.extra.iter_mut().zip(&extra_cols) {
            slot.1.push(field(c)?);
        }
    }
    Ok(table)
}

/// Parses the `y, a, x1..xd[, omega_hat | pi_hat][, mu_hat]` schema.
pub fn parse_dataset_csv(bytes: &[u8]) -> Result<RawTable> {
    let table = parse_table(bytes, &["omega_hat", "pi_hat", "mu_hat"])?;
    if table.column("omega_hat").is_some() && table.column("pi_hat").is_some() {
        return Err(Error::Parse {
            line: 1,
            message: "give either omega_hat or pi_hat, not both".into(),
        });
    }
    Ok(table)
}

/// Parses the `y, a, x1..xd[, v_hat, m_hat]` schema.
pub fn parse_plm_csv(bytes: &[u8]) -> Result<RawTable> {
    parse_table(bytes, &["v_hat", "m_hat"])
}

/// Validated estimation input; `nuisance` is present when the file carried
/// both nuisance columns.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetInput {
    pub dataset: Dataset,
    pub nuisance: Option<NuisanceValues>,
}

impl RawTable {
    /// Converts to a [`Dataset`], checking treatment labels and, when present,
    /// the supplied nuisances.
    pub fn into_dataset(self, bounds: &Bounds) -> Result<DatasetInput> {
        let mut treated = Vec::with_capacity(self.len());
        for (row, &a) in self.a.iter().enumerate() {
            if a == 1.0 || a == 0.0 {
                treated.push(a == 1.0);
            } else {
                return Err(Error::InvalidTreatment { row, value: a });
            }
        }
        let omega = match (self.column("omega_hat"), self.column("pi_hat")) {
            (Some(w), _) => Some(w.to_vec()),
            (None, Some(p)) => Some(p.iter().map(|p| 1.0 / p).collect()),
            (None, None) => None,
        };
        let mu = self.column("mu_hat").map(<[f64]>::to_vec);
        let nuisance = match (omega, mu) {
            (Some(w), Some(m)) => Some(NuisanceValues::new(w, m)),
            (None, None) => None,
            _ => {
                return Err(Error::Parse {
                    line: 1,
                    message: "nuisance columns must be given together (omega_hat or pi_hat, and mu_hat)".into(),
                })
            }
        };
        let dataset = Dataset::from_columns(self.y, treated, self.x, self.d, bounds)?;
        if let Some(nuis) = &nuisance {
            crate::data::validate(&dataset, nuis, bounds)?;
        }
        Ok(DatasetInput { dataset, nuisance })
    }

    /// Builds [`PlmData`] from the file's own `v_hat`/`m_hat` columns.
    pub fn to_plm_data(&self) -> Result<Option<PlmData>> {
        match (self.column("v_hat"), self.column("m_hat")) {
            (Some(v), Some(m)) => Ok(Some(PlmData::new(
                self.y.clone(),
                self.a.clone(),
                v.to_vec(),
                m.to_vec(),
            )?)),
            (None, None) => Ok(None),
            _ => Err(Error::Parse {
                line: 1,
                message: "v_hat and m_hat must be given together".into(),
            }),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reads_columns_by_name() {
        let csv = b"x2,y,a,x1,mu_hat,omega_hat\n0.5,1,1,0.1,0.4,2\n0.6, 0 ,0,0.2,0.3,1.5\n";
        let t = parse_dataset_csv(csv).unwrap();
        assert_eq!(t.d, 2);
        assert_eq!(t.x, vec![0.1, 0.5, 0.2, 0.6]);
        assert_eq!(t.y, vec![1.0, 0.0]);
        let input = t.into_dataset(&Bounds::default()).unwrap();
        assert_eq!(input.nuisance.unwrap().omega_hat, vec![2.0, 1.5]);
    }

    #[test]
    fn pi_hat_is_inverted() {
        let t = parse_dataset_csv(b"y,a,pi_hat,mu_hat\n1,1,0.25,0.5\n0,0,0.5,0.5\n").unwrap();
        let input = t.into_dataset(&Bounds::default()).unwrap();
        assert_eq!(input.nuisance.unwrap().omega_hat, vec![4.0, 2.0]);
    }

    #[test]
    fn bad_cell_reports_line() {
        let err = parse_dataset_csv(b"y,a,x1\n1,1,0.1\n1,1,abc\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{err}");
        let err = parse_dataset_csv(b"y,x1\n1,0.1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        let err = parse_dataset_csv(b"y,a,x1,x3\n1,1,0,0\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
        assert!(parse_dataset_csv(b"y,a,zz\n1,1,0\n").is_err());
        assert!(parse_dataset_csv(b"y,a,x1\n1,1\n").is_err());
    }

    #[test]
    fn omega_below_one_names_row() {
        let t = parse_dataset_csv(b"y,a,omega_hat,mu_hat\n1,1,2,0.5\n0,0,0.5,0.5\n").unwrap();
        let err = t.into_dataset(&Bounds::default()).unwrap_err();
        assert!(matches!(err, Error::OmegaBelowOne { row: 1, .. }));
    }

    #[test]
    fn plm_schema() {
        let t = parse_plm_csv(b"y,a,x1,v_hat,m_hat\n1,0.3,0,0.2,0.1\n0,1.5,1,0.9,-0.2\n").unwrap();
        assert_eq!(t.to_plm_data().unwrap().unwrap().len(), 2);
        let t = parse_plm_csv(b"y,a,x1\n1,0.3,0\n0,1.5,1\n").unwrap();
        assert!(t.to_plm_data().unwrap().is_none());
        assert!(parse_plm_csv(b"y,a,omega_hat\n1,1,2\n").is_err());
    }
}
