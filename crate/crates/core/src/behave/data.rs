use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MOTIVATION: [&str; 13] = [
    "happiness",
    "sadness",
    "anger",
    "fear",
    "disgust",
    "surprise",
    "attitude",
    "subjective_norm",
    "openness",
    "conscientiousness",
    "extraversion",
    "agreeableness",
    "neuroticism",
];

pub const CAPABILITY: [&str; 3] = ["breaking", "farming", "violence"];

/// Feature names per branch; CSV columns carry an `m_`, `o_` or `c_` prefix.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BehaveSchema {
    pub motivation: Vec<String>,
    pub opportunity: Vec<String>,
    pub capability: Vec<String>,
}

impl Default for BehaveSchema {
    /// 13 motivation features, 26 peer-trust indicators plus trust in the
    /// leader, and 3 topic rates.
    fn default() -> Self {
        let mut opportunity: Vec<String> = (1..=26).map(|i| format!("trust_peer_{i:02}")).collect();
        opportunity.push("trust_leader".into());
        Self {
            motivation: MOTIVATION.iter().map(|s| s.to_string()).collect(),
            opportunity,
            capability: CAPABILITY.iter().map(|s| s.to_string()).collect(),
        }
    }
}

impl BehaveSchema {
    pub fn dims(&self) -> [usize; 3] {
        [self.motivation.len(), self.opportunity.len(), self.capability.len()]
    }

    pub fn columns(&self) -> Vec<String> {
        let mut out = Vec::new();
        out.extend(self.motivation.iter().map(|n| format!("m_{n}")));
        out.extend(self.opportunity.iter().map(|n| format!("o_{n}")));
        out.extend(self.capability.iter().map(|n| format!("c_{n}")));
        out
    }
}

/// One person's observed features and Brexit vote counts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BehaveRecord {
    pub person_id: String,
    pub x_m: Vec<f64>,
    /// Binary trust indicators.
    pub x_o: Vec<f64>,
    pub x_c: Vec<f64>,
    pub n_w: u64,
    pub n_v: u32,
    pub n_b: u32,
}

impl BehaveRecord {
    pub fn validate(&self) -> Result<()> {
        if self.n_b > self.n_v {
            return Err(Error::invalid(format!(
                "{}: n_b {} exceeds n_v {}",
                self.person_id, self.n_b, self.n_v
            )));
        }
        if self.x_o.iter().any(|v| *v != 0.0 && *v != 1.0) {
            return Err(Error::invalid(format!("{}: trust indicators must be 0 or 1", self.person_id)));
        }
        if self.x_m.iter().chain(&self.x_c).any(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("{}: non-finite feature", self.person_id)));
        }
        Ok(())
    }

    pub fn vote_share(&self) -> Option<f64> {
        (self.n_v > 0).then(|| self.n_b as f64 / self.n_v as f64)
    }

    pub fn branch(&self, b: usize) -> &[f64] {
        match b {
            0 => &self.x_m,
            1 => &self.x_o,
            _ => &self.x_c,
        }
    }
}

/// Parses `behave.csv`: `person_id`, prefixed feature columns, `n_w`,
/// `n_v`, `n_b`. Branch sizes follow the header.
pub fn parse_behave_csv<R: std::io::Read>(reader: R, context: &str) -> Result<(BehaveSchema, Vec<BehaveRecord>)> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header = rdr.headers()?.clone();
    let mut schema = BehaveSchema {
        motivation: vec![],
        opportunity: vec![],
        capability: vec![],
    };
    let mut slots = Vec::new();
    let (mut id_col, mut nw, mut nv, mut nb) = (None, None, None, None);
    for (i, h) in header.iter().enumerate() {
        match h {
            "person_id" => id_col = Some(i),
            "n_w" => nw = Some(i),
            "n_v" => nv = Some(i),
            "n_b" => nb = Some(i),
            _ => {
                let (branch, name) = match h.split_at_checked(2) {
                    Some(("m_", n)) => (0, n),
                    Some(("o_", n)) => (1, n),
                    Some(("c_", n)) => (2, n),
                    _ => {
                        return Err(Error::Parse {
                            context: context.into(),
                            line: 1,
                            message: format!("unrecognised column `{h}`"),
                        })
                    }
                };
                [&mut schema.motivation, &mut schema.opportunity, &mut schema.capability][branch].push(name.into());
                slots.push((i, branch));
            }
        }
    }
    let missing = |n: &str| Error::Parse {
        context: context.into(),
        line: 1,
        message: format!("missing column `{n}`"),
    };
    let id_col = id_col.ok_or_else(|| missing("person_id"))?;
    let (nw, nv, nb) = (nw.ok_or_else(|| missing("n_w"))?, nv.ok_or_else(|| missing("n_v"))?, nb.ok_or_else(|| missing("n_b"))?);

    let mut records = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = row + 2;
        let bad = |m: String| Error::Parse {
            context: context.into(),
            line,
            message: m,
        };
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .unwrap_or("")
                .trim()
                .parse::<f64>()
                .map_err(|e| bad(format!("column `{}`: {e}", &header[i])))
        };
        let count = |i: usize| -> Result<u64> {
            rec.get(i)
                .unwrap_or("")
                .trim()
                .parse::<u64>()
                .map_err(|e| bad(format!("column `{}`: {e}", &header[i])))
        };
        let mut x = [Vec::new(), Vec::new(), Vec::new()];
        for &(i, b) in &slots {
            x[b].push(num(i)?);
        }
        let [x_m, x_o, x_c] = x;
        let r = BehaveRecord {
            person_id: rec.get(id_col).unwrap_or("").to_string(),
            x_m,
            x_o,
            x_c,
            n_w: count(nw)?,
            n_v: count(nv)? as u32,
            n_b: count(nb)? as u32,
        };
        r.validate().map_err(|e| bad(e.to_string()))?;
        records.push(r);
    }
    Ok((schema, records))
}

pub fn read_behave_csv(path: &Path) -> Result<(BehaveSchema, Vec<BehaveRecord>)> {
    let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_behave_csv(f, &path.display().to_string())
}

pub fn write_behave_csv<W: std::io::Write>(w: W, schema: &BehaveSchema, records: &[BehaveRecord]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["person_id".to_string()];
    header.extend(schema.columns());
    header.extend(["n_w", "n_v", "n_b"].map(String::from));
    out.write_record(&header)?;
    for r in records {
        let mut row = vec![r.person_id.clone()];
        row.extend(r.x_m.iter().chain(&r.x_o).chain(&r.x_c).map(f64::to_string));
        row.extend([r.n_w.to_string(), r.n_v.to_string(), r.n_b.to_string()]);
        out.write_record(&row)?;
    }
    out.flush().map_err(|e| Error::io("<output>", e))?;
    Ok(())
}

/// Named numeric columns of equal length.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataTable {
    pub names: Vec<String>,
    pub columns: Vec<Vec<f64>>,
}

impl DataTable {
    pub fn new(names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        if names.len() != columns.len() {
            return Err(Error::invalid("one name per column required"));
        }
        let n = columns.first().map_or(0, Vec::len);
        if let Some((i, c)) = columns.iter().enumerate().find(|(_, c)| c.len() != n) {
            return Err(Error::DimensionMismatch {
                id: Some(names[i].clone()),
                expected: n,
                got: c.len(),
            });
        }
        if columns.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::invalid("table contains non-finite values"));
        }
        Ok(Self { names, columns })
    }

    pub fn n_rows(&self) -> usize {
        self.columns.first().map_or(0, Vec::len)
    }

    pub fn n_vars(&self) -> usize {
        self.columns.len()
    }

    /// Every feature column plus `vote_share`; persons without votes are
    /// dropped.
    pub fn from_records(schema: &BehaveSchema, records: &[BehaveRecord]) -> Result<Self> {
        let mut names = schema.columns();
        names.push("vote_share".into());
        let mut columns = vec![Vec::new(); names.len()];
        for r in records {
            let Some(share) = r.vote_share() else { continue };
            for (c, v) in columns.iter_mut().zip(r.x_m.iter().chain(&r.x_o).chain(&r.x_c).chain([&share])) {
                c.push(*v);
            }
        }
        Self::new(names, columns)
    }

    /// Reads a plain numeric CSV with a header row.
    pub fn read_csv(path: &Path) -> Result<Self> {
        let f = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut rdr = csv::Reader::from_reader(f);
        let names: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
        let mut columns = vec![Vec::new(); names.len()];
        for (row, rec) in rdr.records().enumerate() {
            let rec = rec?;
            for (i, c) in columns.iter_mut().enumerate() {
                let v = rec.get(i).unwrap_or("").trim().parse::<f64>().map_err(|e| Error::Parse {
                    context: path.display().to_string(),
                    line: row + 2,
                    message: format!("column `{}`: {e}", names[i]),
                })?;
                c.push(v);
            }
        }
        Self::new(names, columns)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record() -> BehaveRecord {
        BehaveRecord {
            person_id: "a".into(),
            x_m: vec![0.5; 13],
            x_o: vec![1.0; 27],
            x_c: vec![0.1, 0.2, 0.3],
            n_w: 1200,
            n_v: 24,
            n_b: 6,
        }
    }

    #[test]
    fn csv_round_trip() {
        let schema = BehaveSchema::default();
        assert_eq!(schema.dims(), [13, 27, 3]);
        let mut buf = Vec::new();
        write_behave_csv(&mut buf, &schema, &[record()]).unwrap();
        let (s2, recs) = parse_behave_csv(buf.as_slice(), "t").unwrap();
        assert_eq!(s2, schema);
        assert_eq!(recs, vec![record()]);
    }

    #[test]
    fn validation() {
        let mut r = record();
        r.n_b = 25;
        assert!(r.validate().is_err());
        let mut r = record();
        r.x_o[3] = 0.5;
        assert!(r.validate().is_err());
    }

    #[test]
    fn parse_reports_line() {
        let text = "person_id,m_a,o_b,c_c,n_w,n_v,n_b\nx,1,0,2,3,4,1\ny,1,0,2,3,4,9\n";
        let err = parse_behave_csv(text.as_bytes(), "b.csv").unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn table_from_records() {
        let mut r2 = record();
        r2.n_v = 0;
        r2.n_b = 0;
        let t = DataTable::from_records(&BehaveSchema::default(), &[record(), r2]).unwrap();
        assert_eq!(t.n_vars(), 44);
        assert_eq!(t.n_rows(), 1);
        assert_eq!(t.columns[43][0], 0.25);
    }
}
