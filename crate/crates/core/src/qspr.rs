//! Property datasets, corpus reduction, stratified cross-validation and the
//! regression metrics.

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::fingerprint::{ecfp6, tanimoto, FingerprintBits};
use crate::molgraph::{canonical_smiles, parse_smiles, Molecule};
use crate::scoring::{KnnModel, PredictorKind, RidgeModel, ScoringError, TrainingPoint, STANDARD_TEMPERATURE};

pub const SIMILARITY_CUTOFF: f64 = 0.323;
pub const DEFAULT_FOLDS: usize = 5;
const QUANTILE_BINS: usize = 5;

#[derive(Debug, Error)]
pub enum QsprError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Schema { line: u64, msg: String },
    #[error("line {line}: duplicate key {key}")]
    DuplicateKey { line: u64, key: String },
    #[error("need at least {need} rows, have {have}")]
    TooFewRows { need: usize, have: usize },
    #[error("fold {0} has zero target variance")]
    DegenerateFold(usize),
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("zero variance in y_true")]
    ZeroVariance,
    #[error("empty input")]
    Empty,
    #[error(transparent)]
    Model(#[from] Box<ScoringError>),
}

impl From<ScoringError> for QsprError {
    fn from(e: ScoringError) -> Self {
        QsprError::Model(Box::new(e))
    }
}

#[derive(Debug, Clone)]
pub struct DataRow {
    pub smiles: String,
    pub mol: Molecule,
    pub value: f64,
    pub temperature: Option<f64>,
}

#[derive(Debug, Clone, Default)]
pub struct PropertyDataset {
    pub property: String,
    pub unit: String,
    pub rows: Vec<DataRow>,
    /// One line-numbered message per rejected row.
    pub warnings: Vec<String>,
}

impl PropertyDataset {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn values(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.value).collect()
    }

    /// Builds a dataset from already-parsed rows, rejecting duplicate keys.
    pub fn from_rows(property: &str, unit: &str, rows: Vec<(Molecule, f64, Option<f64>)>) -> Result<Self, QsprError> {
        let mut ds = PropertyDataset {
            property: property.into(),
            unit: unit.into(),
            ..Default::default()
        };
        let mut keys = HashSet::new();
        for (i, (mol, value, temperature)) in rows.into_iter().enumerate() {
            let smiles = canonical_smiles(&mol);
            let key = (smiles.clone(), temperature.map(f64::to_bits));
            if !keys.insert(key) {
                return Err(QsprError::DuplicateKey {
                    line: i as u64 + 1,
                    key: smiles,
                });
            }
            ds.rows.push(DataRow {
                smiles,
                mol,
                value,
                temperature,
            });
        }
        Ok(ds)
    }
}

/// CSV with header `smiles,value[,temperature]`. An optional comment line
/// `# property=<name>; unit=<unit>` names the property; other `#` lines are
/// ignored. Rows with unparseable SMILES are skipped with a warning.
pub fn parse_dataset(text: &str) -> Result<PropertyDataset, QsprError> {
    let mut ds = PropertyDataset::default();
    for line in text.lines() {
        let Some(meta) = line.trim().strip_prefix('#') else {
            continue;
        };
        for field in meta.split(';') {
            if let Some((k, v)) = field.split_once('=') {
                match k.trim() {
                    "property" => ds.property = v.trim().to_string(),
                    "unit" => ds.unit = v.trim().to_string(),
                    _ => {}
                }
            }
        }
    }
    let mut rdr = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let header: Vec<String> = rdr
        .headers()
        .map_err(|e| QsprError::Schema {
            line: 1,
            msg: e.to_string(),
        })?
        .iter()
        .map(|h| h.to_ascii_lowercase())
        .collect();
    let with_temp = match header.iter().map(String::as_str).collect::<Vec<_>>()[..] {
        ["smiles", "value"] => false,
        ["smiles", "value", "temperature"] => true,
        _ => {
            return Err(QsprError::Schema {
                line: 1,
                msg: format!("expected header smiles,value[,temperature], got {}", header.join(",")),
            })
        }
    };
    let mut keys = HashSet::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| QsprError::Schema {
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line());
        let num = |i: usize, what: &str| -> Result<f64, QsprError> {
            rec[i]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| QsprError::Schema {
                    line,
                    msg: format!("invalid {what} '{}'", &rec[i]),
                })
        };
        let value = num(1, "value")?;
        let temperature = if with_temp { Some(num(2, "temperature")?) } else { None };
        let mol = match parse_smiles(&rec[0]) {
            Ok(m) => m,
            Err(e) => {
                ds.warnings.push(format!("line {line}: {}: {e}", &rec[0]));
                continue;
            }
        };
        let smiles = canonical_smiles(&mol);
        if !keys.insert((smiles.clone(), temperature.map(f64::to_bits))) {
            return Err(QsprError::DuplicateKey { line, key: smiles });
        }
        ds.rows.push(DataRow {
            smiles,
            mol,
            value,
            temperature,
        });
    }
    Ok(ds)
}

pub fn load_dataset(path: &Path) -> Result<PropertyDataset, QsprError> {
    parse_dataset(&std::fs::read_to_string(path)?)
}

/// Keeps molecules with weight ≤ `max_mw` whose maximum Tanimoto similarity
/// to every target is ≤ `sim_cutoff`. Input order is preserved.
pub fn filter_corpus(mols: &[Molecule], max_mw: f64, targets: &[Molecule], sim_cutoff: f64) -> Vec<Molecule> {
    let target_fps: Vec<FingerprintBits> = targets.iter().map(ecfp6).collect();
    mols.iter()
        .filter(|m| {
            if m.molecular_weight() > max_mw {
                return false;
            }
            let fp = ecfp6(m);
            target_fps
                .iter()
                .all(|t| tanimoto(&fp, t).unwrap_or(1.0) <= sim_cutoff)
        })
        .cloned()
        .collect()
}

/// Fold index per row. Rows are ranked by value into five quantile bins;
/// each bin is shuffled and dealt round-robin, continuing the deal across
/// bins so fold sizes differ by at most one.
pub fn quintile_stratified_folds(values: &[f64], k: usize, seed: u64) -> Result<Vec<usize>, QsprError> {
    let n = values.len();
    if k == 0 || n < k {
        return Err(QsprError::TooFewRows { need: k.max(1), have: n });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut bins: Vec<Vec<usize>> = vec![Vec::new(); QUANTILE_BINS];
    for (rank, &i) in order.iter().enumerate() {
        bins[rank * QUANTILE_BINS / n].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![0; n];
    let mut deal = 0;
    for bin in &mut bins {
        bin.shuffle(&mut rng);
        for &i in bin.iter() {
            folds[i] = deal % k;
            deal += 1;
        }
    }
    Ok(folds)
}

/// Coefficient of determination and mean absolute error.
pub fn metrics(y_true: &[f64], y_pred: &[f64]) -> Result<(f64, f64), QsprError> {
    if y_true.len() != y_pred.len() {
        return Err(QsprError::LengthMismatch(y_true.len(), y_pred.len()));
    }
    if y_true.is_empty() {
        return Err(QsprError::Empty);
    }
    let n = y_true.len() as f64;
    let mean = y_true.iter().sum::<f64>() / n;
    let ss_tot: f64 = y_true.iter().map(|y| (y - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(QsprError::ZeroVariance);
    }
    let ss_res: f64 = y_true.iter().zip(y_pred).map(|(y, p)| (y - p).powi(2)).sum();
    let mae = y_true.iter().zip(y_pred).map(|(y, p)| (y - p).abs()).sum::<f64>() / n;
    Ok((1.0 - ss_res / ss_tot, mae))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FoldMetrics {
    pub train_r2: f64,
    pub train_mae: f64,
    pub test_r2: f64,
    pub test_mae: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CvReport {
    pub folds: Vec<FoldMetrics>,
}

fn mean_sd(xs: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let n = xs.clone().count() as f64;
    let mean = xs.clone().sum::<f64>() / n;
    let var = if n > 1.0 {
        xs.map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

impl CvReport {
    pub fn mean(&self) -> FoldMetrics {
        self.aggregate().0
    }

    /// Mean and sample standard deviation of each column.
    pub fn aggregate(&self) -> (FoldMetrics, FoldMetrics) {
        let col = |f: fn(&FoldMetrics) -> f64| mean_sd(self.folds.iter().map(f));
        let (a, b, c, d) = (
            col(|m| m.train_r2),
            col(|m| m.train_mae),
            col(|m| m.test_r2),
            col(|m| m.test_mae),
        );
        (
            FoldMetrics {
                train_r2: a.0,
                train_mae: b.0,
                test_r2: c.0,
                test_mae: d.0,
            },
            FoldMetrics {
                train_r2: a.1,
                train_mae: b.1,
                test_r2: c.1,
                test_mae: d.1,
            },
        )
    }

    pub const CSV_HEADER: &'static str = "Task,Model,Fold,Train R-squared,Train MAE,Test R-squared,Test MAE";

    /// Rows per fold followed by `mean` and `sd` rows.
    pub fn to_csv(&self, task: &str, model: &str) -> String {
        let mut out = String::new();
        writeln!(out, "{}", Self::CSV_HEADER).unwrap();
        let row = |out: &mut String, fold: &str, m: &FoldMetrics| {
            writeln!(
                out,
                "{task},{model},{fold},{:.4},{:.4},{:.4},{:.4}",
                m.train_r2, m.train_mae, m.test_r2, m.test_mae
            )
            .unwrap();
        };
        for (i, m) in self.folds.iter().enumerate() {
            row(&mut out, &(i + 1).to_string(), m);
        }
        let (mean, sd) = self.aggregate();
        row(&mut out, "mean", &mean);
        row(&mut out, "sd", &sd);
        out
    }
}

/// Generic k-fold harness over row indices: `fit` trains on the training
/// indices and returns a predictor taking a row index.
pub fn cross_validate_with<F, P>(ds: &PropertyDataset, folds: &[usize], mut fit: F) -> Result<CvReport, QsprError>
where
    F: FnMut(&[usize]) -> Result<P, QsprError>,
    P: Fn(usize) -> f64,
{
    if folds.len() != ds.len() {
        return Err(QsprError::LengthMismatch(folds.len(), ds.len()));
    }
    let k = folds.iter().max().map_or(0, |m| m + 1);
    let mut out = Vec::with_capacity(k);
    for f in 0..k {
        let (test, train): (Vec<usize>, Vec<usize>) = (0..ds.len()).partition(|&i| folds[i] == f);
        let predict = fit(&train)?;
        let eval = |idx: &[usize]| -> Result<(f64, f64), QsprError> {
            let y: Vec<f64> = idx.iter().map(|&i| ds.rows[i].value).collect();
            let p: Vec<f64> = idx.iter().map(|&i| predict(i)).collect();
            metrics(&y, &p).map_err(|e| match e {
                QsprError::ZeroVariance | QsprError::Empty => QsprError::DegenerateFold(f),
                other => other,
            })
        };
        let (train_r2, train_mae) = eval(&train)?;
        let (test_r2, test_mae) = eval(&test)?;
        out.push(FoldMetrics {
            train_r2,
            train_mae,
            test_r2,
            test_mae,
        });
    }
    Ok(CvReport { folds: out })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hyper {
    pub k: usize,
    pub lambda: f64,
}

impl Default for Hyper {
    fn default() -> Self {
        Hyper { k: 5, lambda: 1.0 }
    }
}

/// Cross-validates a k-NN or ridge learner on `featurizer` bits.
pub fn cross_validate(
    ds: &PropertyDataset,
    kind: PredictorKind,
    hyper: Hyper,
    featurizer: &dyn Fn(&Molecule) -> FingerprintBits,
    folds: &[usize],
) -> Result<CvReport, QsprError> {
    let feats: Vec<FingerprintBits> = ds.rows.iter().map(|r| featurizer(&r.mol)).collect();
    let temps: Vec<f64> = ds
        .rows
        .iter()
        .map(|r| r.temperature.unwrap_or(STANDARD_TEMPERATURE))
        .collect();
    let points = |train: &[usize]| -> Vec<TrainingPoint> {
        train
            .iter()
            .map(|&i| TrainingPoint {
                fingerprint: feats[i].clone(),
                temperature: ds.rows[i].temperature,
                value: ds.rows[i].value,
            })
            .collect()
    };
    let (feats, temps) = (&feats, &temps);
    match kind {
        PredictorKind::Knn => cross_validate_with(ds, folds, |train| {
            let m = KnnModel::fit(points(train), hyper.k);
            Ok(move |i: usize| m.predict(&feats[i], temps[i]))
        }),
        PredictorKind::Ridge => cross_validate_with(ds, folds, |train| {
            let m = RidgeModel::fit(&points(train), hyper.lambda)?;
            Ok(move |i: usize| m.predict(&feats[i], temps[i]))
        }),
        PredictorKind::Lookup => Err(ScoringError::BadPredictorSpec(
            "lookup tables cannot be cross-validated".into(),
        )
        .into()),
    }
}

/// Parses `k=1,3,5` or `lambda=0.1,1,10` into grid points.
pub fn parse_grid(kind: PredictorKind, spec: &str) -> Result<Vec<Hyper>, String> {
    let spec = spec.trim();
    if spec.is_empty() {
        return Ok(vec![Hyper::default()]);
    }
    let (key, vals) = spec.split_once('=').ok_or_else(|| format!("bad grid '{spec}'"))?;
    let mut out = Vec::new();
    for v in vals.split(',') {
        let v = v.trim();
        let h = match (kind, key.trim()) {
            (PredictorKind::Knn, "k") => Hyper {
                k: v.parse().map_err(|_| format!("bad k '{v}'"))?,
                ..Hyper::default()
            },
            (PredictorKind::Ridge, "lambda") => Hyper {
                lambda: v.parse().map_err(|_| format!("bad lambda '{v}'"))?,
                ..Hyper::default()
            },
            _ => return Err(format!("grid key '{key}' does not apply to {}", kind.name())),
        };
        out.push(h);
    }
    Ok(out)
}

/// Evaluates every grid point and picks the one maximizing mean train R²
/// times mean test R².
pub fn grid_search(
    ds: &PropertyDataset,
    kind: PredictorKind,
    grid: &[Hyper],
    featurizer: &dyn Fn(&Molecule) -> FingerprintBits,
    folds: &[usize],
) -> Result<(Hyper, Vec<(Hyper, CvReport)>), QsprError> {
    let mut results = Vec::new();
    for &h in grid {
        results.push((h, cross_validate(ds, kind, h, featurizer, folds)?));
    }
    let best = results
        .iter()
        .max_by(|a, b| {
            let s = |r: &CvReport| {
                let m = r.mean();
                m.train_r2 * m.test_r2
            };
            s(&a.1).total_cmp(&s(&b.1))
        })
        .map(|r| r.0)
        .ok_or(QsprError::Empty)?;
    Ok((best, results))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fingerprint::ecfp6;

    #[test]
    fn metrics_hand_case() {
        let (r2, mae) = metrics(&[1.0, 2.0, 3.0], &[1.0, 2.0, 4.0]).unwrap();
        assert_eq!(r2, 0.5);
        assert_eq!(mae, 1.0 / 3.0);
        assert_eq!(metrics(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), (1.0, 0.0));
        let (r2, mae) = metrics(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0]).unwrap();
        assert_eq!(r2, 0.0);
        assert_eq!(mae, 2.0 / 3.0);
        assert!(matches!(metrics(&[1.0], &[1.0, 2.0]), Err(QsprError::LengthMismatch(1, 2))));
        assert!(matches!(metrics(&[1.0, 1.0], &[1.0, 2.0]), Err(QsprError::ZeroVariance)));
    }

    #[test]
    fn folds_balance() {
        let values: Vec<f64> = (0..100).map(|i| i as f64).collect();
        let folds = quintile_stratified_folds(&values, 5, 42).unwrap();
        for f in 0..5 {
            assert_eq!(folds.iter().filter(|&&g| g == f).count(), 20);
            for q in 0..5 {
                let in_bin = (q * 20..q * 20 + 20).filter(|&i| folds[i] == f).count();
                assert_eq!(in_bin, 4);
            }
        }
        assert_eq!(folds, quintile_stratified_folds(&values, 5, 42).unwrap());
        assert!(matches!(
            quintile_stratified_folds(&values[..3], 5, 0),
            Err(QsprError::TooFewRows { .. })
        ));
    }

    #[test]
    fn dataset_parsing() {
        let text = "# property=pKa; unit=-\nsmiles,value\nNCCO,9.16\nCCNCC,11.0\nC1CNCCN1,9.73\n";
        let ds = parse_dataset(text).unwrap();
        assert_eq!(ds.len(), 3);
        assert_eq!(ds.property, "pKa");
        let bad = "smiles,value\nNCCO,1\nC(,2\nCCN,3\n";
        let ds = parse_dataset(bad).unwrap();
        assert_eq!(ds.len(), 2);
        assert_eq!(ds.warnings.len(), 1);
        assert!(ds.warnings[0].starts_with("line 3"));
        let dup = "smiles,value\nNCCO,1\nOCCN,2\n";
        match parse_dataset(dup) {
            Err(QsprError::DuplicateKey { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let temps = "smiles,value,temperature\nNCCO,1,298.15\nNCCO,0.5,323.15\n";
        assert_eq!(parse_dataset(temps).unwrap().len(), 2);
        assert!(matches!(parse_dataset("smi,val\nC,1\n"), Err(QsprError::Schema { .. })));
        assert!(matches!(parse_dataset("smiles,value\nC,abc\n"), Err(QsprError::Schema { line: 2, .. })));
    }

    #[test]
    fn corpus_filter() {
        let p = |s: &str| parse_smiles(s).unwrap();
        let targets = vec![p("NCCO"), p("OCCNCCO")];
        let corpus = vec![p("NCCO"), p("C"), p("CCCCCCCCCCCCCCCCCCCCCC")];
        let kept = filter_corpus(&corpus, 250.0, &targets, SIMILARITY_CUTOFF);
        let kept: Vec<String> = kept.iter().map(canonical_smiles).collect();
        assert_eq!(kept, vec![canonical_smiles(&p("C"))]);
        let t = tanimoto(&ecfp6(&p("C")), &ecfp6(&p("NCCO"))).unwrap();
        assert!(t < SIMILARITY_CUTOFF);
    }

    #[test]
    fn perfect_and_constant_predictors() {
        let rows = (1..=20)
            .map(|i| (parse_smiles(&"C".repeat(i)).unwrap(), i as f64, None))
            .collect();
        let ds = PropertyDataset::from_rows("len", "atoms", rows).unwrap();
        let folds = quintile_stratified_folds(&ds.values(), 5, 1).unwrap();
        let values = ds.values();
        let report = cross_validate_with(&ds, &folds, |_| Ok(|i: usize| values[i])).unwrap();
        for f in &report.folds {
            assert_eq!((f.test_r2, f.test_mae), (1.0, 0.0));
        }
        let report = cross_validate_with(&ds, &folds, |train| {
            let m = train.iter().map(|&i| values[i]).sum::<f64>() / train.len() as f64;
            Ok(move |_: usize| m)
        })
        .unwrap();
        for f in &report.folds {
            assert!(f.test_r2 <= 0.0);
            assert!(f.train_r2.abs() < 1e-12);
        }
        assert!(report.to_csv("len", "mean").starts_with(CvReport::CSV_HEADER));
    }

    #[test]
    fn grid_specs() {
        let g = parse_grid(PredictorKind::Knn, "k=1,3").unwrap();
        assert_eq!(g.iter().map(|h| h.k).collect::<Vec<_>>(), vec![1, 3]);
        assert!(parse_grid(PredictorKind::Knn, "lambda=1").is_err());
        assert_eq!(parse_grid(PredictorKind::Ridge, "lambda=0.5,2").unwrap()[1].lambda, 2.0);
    }
}
