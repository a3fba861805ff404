//! Headered CSV datasets: `x1..xd`, optional `y`, `cov_*` covariates and an
//! optional `split` tag column.

use std::path::Path;

use fsagp::kernels::LocationSet;
use fsagp::linalg::DenseMatrix;

use crate::error::{io_err, CliError, CliResult};

/// 17 significant digits, enough to round-trip every f64.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub locs: LocationSet,
    pub y: Option<Vec<f64>>,
    /// Named covariate columns, without the `cov_` prefix.
    pub covariates: Vec<(String, Vec<f64>)>,
    pub split: Option<Vec<String>>,
}

fn schema(path: &Path, msg: impl std::fmt::Display) -> CliError {
    CliError::config(format!("{}: {msg}", path.display()))
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.locs.len()
    }

    pub fn read(path: &Path) -> CliResult<Self> {
        let file = std::fs::File::open(path).map_err(io_err(path))?;
        Self::from_reader(file, path)
    }

    fn from_reader<R: std::io::Read>(r: R, path: &Path) -> CliResult<Self> {
        let mut rd = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let headers = rd.headers().map_err(|e| schema(path, e))?.clone();
        let mut x_cols = Vec::new();
        let (mut y_col, mut split_col) = (None, None);
        let mut cov_cols = Vec::new();
        for (i, h) in headers.iter().enumerate() {
            if h == "y" {
                y_col = Some(i);
            } else if h == "split" {
                split_col = Some(i);
            } else if let Some(name) = h.strip_prefix("cov_") {
                if name.is_empty() {
                    return Err(schema(path, "covariate column 'cov_' has no name"));
                }
                cov_cols.push((name.to_string(), i));
            } else if let Some(k) = h.strip_prefix('x').and_then(|k| k.parse::<usize>().ok()) {
                x_cols.push((k, i));
            } else {
                return Err(schema(path, format!("unexpected column '{h}'")));
            }
        }
        let check_unique = |name: &str, count: usize| -> CliResult<()> {
            if count > 1 {
                return Err(schema(path, format!("column '{name}' appears more than once")));
            }
            Ok(())
        };
        check_unique("y", headers.iter().filter(|h| *h == "y").count())?;
        check_unique("split", headers.iter().filter(|h| *h == "split").count())?;
        x_cols.sort();
        if x_cols.is_empty() {
            return Err(schema(path, "missing coordinate column 'x1'"));
        }
        for (want, (k, _)) in (1..).zip(&x_cols) {
            if *k != want {
                return Err(schema(path, format!("missing coordinate column 'x{want}'")));
            }
        }
        let d = x_cols.len();
        let mut coords = Vec::new();
        let mut y = Vec::new();
        let mut covs: Vec<Vec<f64>> = vec![Vec::new(); cov_cols.len()];
        let mut split = Vec::new();
        for (row, rec) in rd.records().enumerate() {
            let rec = rec.map_err(|e| schema(path, e))?;
            let line = row + 2;
            let num = |i: usize, name: &str| -> CliResult<f64> {
                let s = rec.get(i).unwrap_or("");
                let v: f64 = s
                    .parse()
                    .map_err(|_| schema(path, format!("line {line}: column '{name}' holds '{s}', not a number")))?;
                if !v.is_finite() {
                    return Err(schema(path, format!("line {line}: column '{name}' is not finite")));
                }
                Ok(v)
            };
            for (k, i) in &x_cols {
                coords.push(num(*i, &format!("x{k}"))?);
            }
            if let Some(i) = y_col {
                y.push(num(i, "y")?);
            }
            for ((name, i), c) in cov_cols.iter().zip(covs.iter_mut()) {
                c.push(num(*i, &format!("cov_{name}"))?);
            }
            if let Some(i) = split_col {
                split.push(rec.get(i).unwrap_or("").to_string());
            }
        }
        if coords.is_empty() {
            return Err(schema(path, "no data rows"));
        }
        Ok(Self {
            locs: LocationSet::new(coords, d)?,
            y: y_col.map(|_| y),
            covariates: cov_cols.into_iter().map(|(n, _)| n).zip(covs).collect(),
            split: split_col.map(|_| split),
        })
    }

    pub fn write(&self, path: &Path) -> CliResult<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => io_err(path)(io),
            other => CliError::config(format!("{}: {other:?}", path.display())),
        })?;
        self.write_to(&mut w).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
    }

    fn write_to<W: std::io::Write>(&self, w: &mut csv::Writer<W>) -> csv::Result<()> {
        let d = self.locs.dim();
        let mut header: Vec<String> = (1..=d).map(|k| format!("x{k}")).collect();
        if self.y.is_some() {
            header.push("y".into());
        }
        header.extend(self.covariates.iter().map(|(n, _)| format!("cov_{n}")));
        if self.split.is_some() {
            header.push("split".into());
        }
        w.write_record(&header)?;
        for i in 0..self.len() {
            let mut rec: Vec<String> = self.locs.point(i).iter().map(|v| fmt17(*v)).collect();
            if let Some(y) = &self.y {
                rec.push(fmt17(y[i]));
            }
            rec.extend(self.covariates.iter().map(|(_, c)| fmt17(c[i])));
            if let Some(s) = &self.split {
                rec.push(s[i].clone());
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Rows tagged `tag`; every row when there is no split column.
    pub fn rows_tagged(&self, tag: &str) -> CliResult<Self> {
        let Some(split) = &self.split else {
            return Ok(self.clone());
        };
        let idx: Vec<usize> = (0..self.len()).filter(|&i| split[i] == tag).collect();
        if idx.is_empty() {
            return Err(CliError::config(format!("no rows tagged '{tag}' in the split column")));
        }
        Ok(Self {
            locs: self.locs.subset(&idx)?,
            y: self.y.as_ref().map(|y| idx.iter().map(|&i| y[i]).collect()),
            covariates: self
                .covariates
                .iter()
                .map(|(n, c)| (n.clone(), idx.iter().map(|&i| c[i]).collect()))
                .collect(),
            split: Some(idx.iter().map(|&i| split[i].clone()).collect()),
        })
    }

    pub fn response(&self, path: &Path) -> CliResult<&[f64]> {
        self.y
            .as_deref()
            .ok_or_else(|| schema(path, "missing response column 'y'"))
    }

    /// Covariate columns, preceded by ones when `intercept`; `None` when
    /// there are no columns at all.
    pub fn design(&self, intercept: bool) -> Option<DenseMatrix> {
        let k = self.covariates.len() + usize::from(intercept);
        if k == 0 {
            return None;
        }
        let n = self.len();
        Some(DenseMatrix::from_fn(n, k, |i, j| match (intercept, j) {
            (true, 0) => 1.0,
            (true, j) => self.covariates[j - 1].1[i],
            (false, j) => self.covariates[j].1[i],
        }))
    }

    pub fn covariate_names(&self) -> Vec<&str> {
        self.covariates.iter().map(|(n, _)| n.as_str()).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> CliResult<Dataset> {
        Dataset::from_reader(text.as_bytes(), Path::new("mem.csv"))
    }

    fn render(d: &Dataset) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        d.write_to(&mut w).unwrap();
        String::from_utf8(w.into_inner().unwrap()).unwrap()
    }

    #[test]
    fn reads_all_column_kinds() {
        let d = parse("x2,x1,y,cov_a,split\n1,2,3,4,train\n0.5,0.25,1e-3,-1,test\n").unwrap();
        assert_eq!(d.locs.dim(), 2);
        assert_eq!(d.locs.point(0), &[2.0, 1.0]);
        assert_eq!(d.y.as_deref(), Some(&[3.0, 1e-3][..]));
        assert_eq!(d.covariate_names(), vec!["a"]);
        let t = d.rows_tagged("test").unwrap();
        assert_eq!(t.len(), 1);
        assert_eq!(t.covariates[0].1, vec![-1.0]);
        let x = d.design(true).unwrap();
        assert_eq!((x.nrows(), x.ncols()), (2, 2));
        assert_eq!((x[(1, 0)], x[(1, 1)]), (1.0, -1.0));
        assert!(d.design(false).is_some() && parse("x1\n0\n").unwrap().design(false).is_none());
    }

    #[test]
    fn schema_errors_name_the_column() {
        let e = parse("x1,x2\n0,0\n").unwrap().response(Path::new("d.csv")).unwrap_err();
        assert!(e.to_string().contains("'y'"), "{e}");
        assert!(parse("x2,y\n0,1\n").unwrap_err().to_string().contains("x1"));
        assert!(parse("x1,z\n0,1\n").unwrap_err().to_string().contains("'z'"));
        assert!(parse("x1,y\n0,abc\n").unwrap_err().to_string().contains("line 2"));
        assert!(parse("x1,y\n0,NaN\n").is_err());
        assert!(parse("x1,y\n").is_err());
    }

    #[test]
    fn write_read_write_is_byte_identical() {
        let d = parse("x1,x2,y,cov_t,split\n0.1,0.7,-2.5,3,train\n1e-300,0.3333333333333333,7,0,test\n").unwrap();
        let once = render(&d);
        let back = parse(&once).unwrap();
        assert_eq!(back, d);
        assert_eq!(render(&back), once);
    }

    #[test]
    fn seventeen_digits_round_trip() {
        for x in [0.1, 1.0 / 3.0, -2.0e-308, 1.7976931348623157e308, 123456789.123456789] {
            assert_eq!(fmt17(x).parse::<f64>().unwrap(), x);
        }
    }
}
