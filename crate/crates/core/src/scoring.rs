//! Desirability scalers, property predictors and the SPO/MPO objectives.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::chemclass::{classify_amine, matches_restriction, AmineType, Restriction};
use crate::fingerprint::{ecfp6, tanimoto, FingerprintBits};
use crate::molgraph::{canonical_smiles, Molecule};
use crate::qspr::{load_dataset, PropertyDataset, QsprError};

pub const STANDARD_TEMPERATURE: f64 = 298.15;
pub const RESTRICTION_PENALTY: f64 = 0.1;

#[derive(Debug, Error)]
pub enum ScoringError {
    #[error("molecule is not an amine")]
    NotAmine,
    #[error("no lookup entry for {0}")]
    MissingKey(String),
    #[error("no predictor configured for {0}")]
    MissingPredictor(Property),
    #[error("invalid scaler spec '{0}'")]
    BadScaler(String),
    #[error("invalid predictor spec '{0}'")]
    BadPredictorSpec(String),
    #[error("loading predictor from {path}: {source}")]
    Load { path: PathBuf, source: QsprError },
    #[error("ridge fit failed: {0}")]
    Fit(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Property {
    Pka,
    Viscosity,
    VaporPressure,
    BoilingPoint,
    MeltingPoint,
    LogS,
    RaScore,
    Price,
}

impl Property {
    pub const ALL: [Property; 8] = [
        Property::Pka,
        Property::Viscosity,
        Property::VaporPressure,
        Property::BoilingPoint,
        Property::MeltingPoint,
        Property::LogS,
        Property::RaScore,
        Property::Price,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Property::Pka => "pka",
            Property::Viscosity => "viscosity",
            Property::VaporPressure => "vapor_pressure",
            Property::BoilingPoint => "boiling_point",
            Property::MeltingPoint => "melting_point",
            Property::LogS => "log_s",
            Property::RaScore => "ra_score",
            Property::Price => "price",
        }
    }

    /// Whether the predictor is queried at the standard temperature.
    pub fn temperature_dependent(self) -> bool {
        matches!(self, Property::Viscosity | Property::VaporPressure)
    }
}

impl fmt::Display for Property {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Property {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Property::ALL
            .into_iter()
            .find(|p| p.name() == s.trim())
            .ok_or_else(|| format!("unknown property '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Direction {
    Increasing,
    Decreasing,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalerSpec {
    pub lo: f64,
    pub hi: f64,
    pub direction: Direction,
}

impl ScalerSpec {
    pub fn new(lo: f64, hi: f64, direction: Direction) -> Result<Self, ScoringError> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(ScoringError::BadScaler(format!("{lo}:{hi}")));
        }
        Ok(ScalerSpec { lo, hi, direction })
    }

    const fn inc(lo: f64, hi: f64) -> Self {
        ScalerSpec {
            lo,
            hi,
            direction: Direction::Increasing,
        }
    }

    const fn dec(lo: f64, hi: f64) -> Self {
        ScalerSpec {
            lo,
            hi,
            direction: Direction::Decreasing,
        }
    }
}

/// `lo:hi:inc` or `lo:hi:dec`.
impl FromStr for ScalerSpec {
    type Err = ScoringError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ScoringError::BadScaler(s.to_string());
        let parts: Vec<&str> = s.trim().split(':').collect();
        let [lo, hi, dir] = parts[..] else {
            return Err(bad());
        };
        let lo: f64 = lo.trim().parse().map_err(|_| bad())?;
        let hi: f64 = hi.trim().parse().map_err(|_| bad())?;
        let direction = match dir.trim() {
            "inc" => Direction::Increasing,
            "dec" => Direction::Decreasing,
            _ => return Err(bad()),
        };
        ScalerSpec::new(lo, hi, direction).map_err(|_| bad())
    }
}

impl fmt::Display for ScalerSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = match self.direction {
            Direction::Increasing => "inc",
            Direction::Decreasing => "dec",
        };
        write!(f, "{}:{}:{}", self.lo, self.hi, d)
    }
}

pub fn scale(x: f64, spec: &ScalerSpec) -> f64 {
    let t = ((x - spec.lo) / (spec.hi - spec.lo)).clamp(0.0, 1.0);
    match spec.direction {
        Direction::Increasing => t,
        Direction::Decreasing => 1.0 - t,
    }
}

pub type Scalers = BTreeMap<Property, ScalerSpec>;

pub fn default_scalers() -> Scalers {
    BTreeMap::from([
        (Property::Pka, ScalerSpec::inc(7.0, 14.0)),
        (Property::Viscosity, ScalerSpec::dec(-1.0, 2.0)),
        (Property::VaporPressure, ScalerSpec::dec(-3.0, 3.0)),
        (Property::BoilingPoint, ScalerSpec::inc(80.0, 250.0)),
        (Property::MeltingPoint, ScalerSpec::dec(40.0, 80.0)),
        (Property::LogS, ScalerSpec::inc(-4.0, 2.0)),
        (Property::RaScore, ScalerSpec::inc(0.0, 1.0)),
        (Property::Price, ScalerSpec::dec(0.0, 10.0)),
    ])
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct PropertyVector {
    pub pka: f64,
    pub viscosity: f64,
    pub vapor_pressure: f64,
    pub boiling_point: f64,
    pub melting_point: f64,
    pub log_s: f64,
    pub ra_score: f64,
    pub price: f64,
}

impl PropertyVector {
    pub fn get(&self, p: Property) -> f64 {
        match p {
            Property::Pka => self.pka,
            Property::Viscosity => self.viscosity,
            Property::VaporPressure => self.vapor_pressure,
            Property::BoilingPoint => self.boiling_point,
            Property::MeltingPoint => self.melting_point,
            Property::LogS => self.log_s,
            Property::RaScore => self.ra_score,
            Property::Price => self.price,
        }
    }

    pub fn set(&mut self, p: Property, v: f64) {
        let slot = match p {
            Property::Pka => &mut self.pka,
            Property::Viscosity => &mut self.viscosity,
            Property::VaporPressure => &mut self.vapor_pressure,
            Property::BoilingPoint => &mut self.boiling_point,
            Property::MeltingPoint => &mut self.melting_point,
            Property::LogS => &mut self.log_s,
            Property::RaScore => &mut self.ra_score,
            Property::Price => &mut self.price,
        };
        *slot = v;
    }
}

/// Scaled temperature feature appended to fingerprint bits.
pub fn temperature_feature(t: f64) -> f64 {
    (t - STANDARD_TEMPERATURE) / 100.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LookupTable {
    values: HashMap<String, f64>,
}

impl LookupTable {
    /// Keys are canonicalized by the caller.
    pub fn new(values: HashMap<String, f64>) -> Self {
        LookupTable { values }
    }

    pub fn from_dataset(ds: &PropertyDataset) -> Self {
        // multiple temperatures: keep the row nearest the standard temperature
        let mut best: HashMap<String, (f64, f64)> = HashMap::new();
        for r in &ds.rows {
            let dt = (r.temperature.unwrap_or(STANDARD_TEMPERATURE) - STANDARD_TEMPERATURE).abs();
            let e = best.entry(r.smiles.clone()).or_insert((dt, r.value));
            if dt < e.0 {
                *e = (dt, r.value);
            }
        }
        LookupTable {
            values: best.into_iter().map(|(k, (_, v))| (k, v)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, canonical: &str) -> Option<f64> {
        self.values.get(canonical).copied()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingPoint {
    pub fingerprint: FingerprintBits,
    pub temperature: Option<f64>,
    pub value: f64,
}

pub fn training_points(ds: &PropertyDataset) -> Vec<TrainingPoint> {
    ds.rows
        .iter()
        .map(|r| TrainingPoint {
            fingerprint: ecfp6(&r.mol),
            temperature: r.temperature,
            value: r.value,
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnnModel {
    pub k: usize,
    points: Vec<TrainingPoint>,
}

impl KnnModel {
    pub fn fit(points: Vec<TrainingPoint>, k: usize) -> Self {
        KnnModel { k: k.max(1), points }
    }

    /// Similarity-weighted mean over the k most similar points; ties in
    /// similarity go to the nearer temperature, then to the earlier row.
    pub fn predict(&self, fp: &FingerprintBits, temperature: f64) -> f64 {
        let mut scored: Vec<(f64, f64, usize)> = self
            .points
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let s = tanimoto(fp, &p.fingerprint).unwrap_or(0.0);
                let dt = p.temperature.map_or(0.0, |t| (t - temperature).abs());
                (s, dt, i)
            })
            .collect();
        scored.sort_by(|a, b| {
            b.0.total_cmp(&a.0)
                .then(a.1.total_cmp(&b.1))
                .then(a.2.cmp(&b.2))
        });
        let top = &scored[..self.k.min(scored.len())];
        if top.is_empty() {
            return 0.0;
        }
        let wsum: f64 = top.iter().map(|t| t.0).sum();
        if wsum > 0.0 {
            top.iter().map(|t| t.0 * self.points[t.2].value).sum::<f64>() / wsum
        } else {
            top.iter().map(|t| self.points[t.2].value).sum::<f64>() / top.len() as f64
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RidgeModel {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub width: usize,
    pub uses_temperature: bool,
}

fn features(fp: &FingerprintBits, temperature: Option<f64>) -> Vec<f64> {
    let mut x = fp.to_dense();
    if let Some(t) = temperature {
        x.push(temperature_feature(t));
    }
    x
}

impl RidgeModel {
    pub fn fit(points: &[TrainingPoint], lambda: f64) -> Result<Self, ScoringError> {
        let n = points.len();
        if n == 0 {
            return Err(ScoringError::Fit("no training rows".into()));
        }
        let width = points[0].fingerprint.width();
        let uses_temperature = points.iter().any(|p| p.temperature.is_some());
        let rows: Vec<Vec<f64>> = points
            .iter()
            .map(|p| {
                let t = uses_temperature.then(|| p.temperature.unwrap_or(STANDARD_TEMPERATURE));
                features(&p.fingerprint, t)
            })
            .collect();
        let d = rows[0].len();
        let mut x = DMatrix::from_fn(n, d, |i, j| rows[i][j]);
        let y = DVector::from_iterator(n, points.iter().map(|p| p.value));
        let x_mean: Vec<f64> = (0..d).map(|j| x.column(j).mean()).collect();
        let y_mean = y.mean();
        for j in 0..d {
            x.column_mut(j).add_scalar_mut(-x_mean[j]);
        }
        let yc = y.add_scalar(-y_mean);
        let lambda = lambda.max(0.0);
        let w = if n <= d {
            // dual form: w = Xᵀ (X Xᵀ + λI)⁻¹ y
            let gram = &x * x.transpose() + DMatrix::identity(n, n) * lambda;
            let a = solve_spd(gram, &yc)?;
            x.transpose() * a
        } else {
            let gram = x.transpose() * &x + DMatrix::identity(d, d) * lambda;
            let rhs = x.transpose() * &yc;
            solve_spd(gram, &rhs)?
        };
        let bias = y_mean - (0..d).map(|j| w[j] * x_mean[j]).sum::<f64>();
        Ok(RidgeModel {
            weights: w.iter().copied().collect(),
            bias,
            width,
            uses_temperature,
        })
    }

    pub fn predict(&self, fp: &FingerprintBits, temperature: f64) -> f64 {
        let t = self.uses_temperature.then_some(temperature);
        let x = features(fp, t);
        self.bias
            + x.iter()
                .zip(&self.weights)
                .map(|(a, b)| a * b)
                .sum::<f64>()
    }
}

fn solve_spd(a: DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>, ScoringError> {
    if let Some(ch) = a.clone().cholesky() {
        return Ok(ch.solve(b));
    }
    a.svd(true, true)
        .solve(b, 1e-10)
        .map_err(|e| ScoringError::Fit(e.to_string()))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Predictor {
    LookupTable(LookupTable),
    Knn(KnnModel),
    Ridge(RidgeModel),
}

impl Predictor {
    pub fn predict(&self, mol: &Molecule) -> Result<f64, ScoringError> {
        self.predict_at(mol, STANDARD_TEMPERATURE)
    }

    pub fn predict_at(&self, mol: &Molecule, temperature: f64) -> Result<f64, ScoringError> {
        match self {
            Predictor::LookupTable(t) => {
                let key = canonical_smiles(mol);
                t.get(&key).ok_or(ScoringError::MissingKey(key))
            }
            Predictor::Knn(m) => Ok(m.predict(&ecfp6(mol), temperature)),
            Predictor::Ridge(m) => Ok(m.predict(&ecfp6(mol), temperature)),
        }
    }

    pub fn kind(&self) -> PredictorKind {
        match self {
            Predictor::LookupTable(_) => PredictorKind::Lookup,
            Predictor::Knn(_) => PredictorKind::Knn,
            Predictor::Ridge(_) => PredictorKind::Ridge,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PredictorKind {
    Lookup,
    Knn,
    Ridge,
}

impl PredictorKind {
    pub fn name(self) -> &'static str {
        match self {
            PredictorKind::Lookup => "lookup",
            PredictorKind::Knn => "knn",
            PredictorKind::Ridge => "ridge",
        }
    }
}

impl FromStr for PredictorKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "lookup" => Ok(PredictorKind::Lookup),
            "knn" => Ok(PredictorKind::Knn),
            "ridge" => Ok(PredictorKind::Ridge),
            _ => Err(format!("unknown predictor kind '{s}'")),
        }
    }
}

/// `kind:path[:k=5][:lambda=1.0]`, built by training on the CSV at `path`.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictorSpec {
    pub kind: PredictorKind,
    pub path: PathBuf,
    pub k: usize,
    pub lambda: f64,
}

impl FromStr for PredictorSpec {
    type Err = ScoringError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || ScoringError::BadPredictorSpec(s.to_string());
        let mut parts = s.trim().split(':');
        let kind: PredictorKind = parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())?;
        let path = PathBuf::from(parts.next().filter(|p| !p.is_empty()).ok_or_else(bad)?);
        let mut spec = PredictorSpec {
            kind,
            path,
            k: 5,
            lambda: 1.0,
        };
        for opt in parts {
            let (key, val) = opt.split_once('=').ok_or_else(bad)?;
            match key {
                "k" => spec.k = val.parse().map_err(|_| bad())?,
                "lambda" => spec.lambda = val.parse().map_err(|_| bad())?,
                _ => return Err(bad()),
            }
        }
        Ok(spec)
    }
}

impl fmt::Display for PredictorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.kind.name(), self.path.display())?;
        match self.kind {
            PredictorKind::Lookup => Ok(()),
            PredictorKind::Knn => write!(f, ":k={}", self.k),
            PredictorKind::Ridge => write!(f, ":lambda={}", self.lambda),
        }
    }
}

pub fn file_sha256(path: &Path) -> std::io::Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

pub fn build_predictor(kind: PredictorKind, ds: &PropertyDataset, k: usize, lambda: f64) -> Result<Predictor, ScoringError> {
    Ok(match kind {
        PredictorKind::Lookup => Predictor::LookupTable(LookupTable::from_dataset(ds)),
        PredictorKind::Knn => Predictor::Knn(KnnModel::fit(training_points(ds), k)),
        PredictorKind::Ridge => Predictor::Ridge(RidgeModel::fit(&training_points(ds), lambda)?),
    })
}

/// Loads and trains the predictor; returns it with the SHA-256 of its file.
pub fn load_predictor(spec: &PredictorSpec) -> Result<(Predictor, String), ScoringError> {
    let load_err = |source| ScoringError::Load {
        path: spec.path.clone(),
        source,
    };
    let ds = load_dataset(&spec.path).map_err(load_err)?;
    let hash = file_sha256(&spec.path).map_err(|e| load_err(QsprError::Io(e)))?;
    Ok((build_predictor(spec.kind, &ds, spec.k, spec.lambda)?, hash))
}

#[derive(Debug, Clone, Default)]
pub struct PredictorSet {
    predictors: BTreeMap<Property, Predictor>,
}

impl PredictorSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, p: Property, predictor: Predictor) {
        self.predictors.insert(p, predictor);
    }

    pub fn with(mut self, p: Property, predictor: Predictor) -> Self {
        self.insert(p, predictor);
        self
    }

    pub fn get(&self, p: Property) -> Option<&Predictor> {
        self.predictors.get(&p)
    }

    /// Raw prediction; temperature-dependent properties are queried at
    /// 298.15 K. Molecule-level pKa predictors give one value that is also
    /// the mean over the molecule's amine sites.
    pub fn predict(&self, p: Property, mol: &Molecule) -> Result<f64, ScoringError> {
        let pred = self.get(p).ok_or(ScoringError::MissingPredictor(p))?;
        pred.predict_at(mol, STANDARD_TEMPERATURE)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SpoObjective {
    MaxPka,
    MinViscosity,
    MinVaporPressure,
}

impl SpoObjective {
    pub const ALL: [SpoObjective; 3] = [
        SpoObjective::MaxPka,
        SpoObjective::MinViscosity,
        SpoObjective::MinVaporPressure,
    ];

    pub fn property(self) -> Property {
        match self {
            SpoObjective::MaxPka => Property::Pka,
            SpoObjective::MinViscosity => Property::Viscosity,
            SpoObjective::MinVaporPressure => Property::VaporPressure,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            SpoObjective::MaxPka => "max_pka",
            SpoObjective::MinViscosity => "min_viscosity",
            SpoObjective::MinVaporPressure => "min_vapor_pressure",
        }
    }
}

impl FromStr for SpoObjective {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        SpoObjective::ALL
            .into_iter()
            .find(|o| o.name() == s.trim())
            .ok_or_else(|| format!("unknown objective '{s}'"))
    }
}

fn penalty(t: AmineType, restriction: Restriction) -> Result<f64, ScoringError> {
    if t == AmineType::NotAmine {
        return Err(ScoringError::NotAmine);
    }
    Ok(if matches_restriction(t, restriction) {
        1.0
    } else {
        RESTRICTION_PENALTY
    })
}

pub fn spo_score(
    mol: &Molecule,
    objective: SpoObjective,
    restriction: Restriction,
    predictors: &PredictorSet,
    scalers: &Scalers,
) -> Result<f64, ScoringError> {
    let factor = penalty(classify_amine(mol), restriction)?;
    let p = objective.property();
    let raw = predictors.predict(p, mol)?;
    Ok(scale(raw, &scalers[&p]) * factor)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MpoScore {
    pub value: f64,
    pub raw: PropertyVector,
    pub components: BTreeMap<Property, f64>,
    pub penalized: bool,
}

/// Mean of the eight scaled components, times 0.1 when the amine type
/// violates the restriction.
pub fn mpo_from_raw(raw: &PropertyVector, t: AmineType, restriction: Restriction, scalers: &Scalers) -> Result<MpoScore, ScoringError> {
    let factor = penalty(t, restriction)?;
    let components: BTreeMap<Property, f64> = Property::ALL
        .iter()
        .map(|&p| (p, scale(raw.get(p), &scalers[&p])))
        .collect();
    let mean = components.values().sum::<f64>() / components.len() as f64;
    Ok(MpoScore {
        value: mean * factor,
        raw: *raw,
        components,
        penalized: factor != 1.0,
    })
}

pub fn mpo_score(
    mol: &Molecule,
    restriction: Restriction,
    predictors: &PredictorSet,
    scalers: &Scalers,
) -> Result<MpoScore, ScoringError> {
    let t = classify_amine(mol);
    if t == AmineType::NotAmine {
        return Err(ScoringError::NotAmine);
    }
    let mut raw = PropertyVector::default();
    for p in Property::ALL {
        raw.set(p, predictors.predict(p, mol)?);
    }
    mpo_from_raw(&raw, t, restriction, scalers)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::molgraph::parse_smiles;

    fn spec(p: Property) -> ScalerSpec {
        default_scalers()[&p]
    }

    #[test]
    fn scaler_examples() {
        assert_eq!(scale(14.0, &spec(Property::Pka)), 1.0);
        assert_eq!(scale(7.0, &spec(Property::Pka)), 0.0);
        assert_eq!(scale(10.5, &spec(Property::Pka)), 0.5);
        assert_eq!(scale(3.0, &spec(Property::VaporPressure)), 0.0);
        assert_eq!(scale(-3.0, &spec(Property::VaporPressure)), 1.0);
        assert_eq!(scale(40.0, &spec(Property::MeltingPoint)), 1.0);
        assert_eq!(scale(10.0, &spec(Property::Price)), 0.0);
        assert_eq!(scale(2.0, &spec(Property::LogS)), 1.0);
        assert_eq!(scale(0.37, &spec(Property::RaScore)), 0.37);
    }

    #[test]
    fn scaler_spec_parsing() {
        let s: ScalerSpec = "7:14:inc".parse().unwrap();
        assert_eq!(s, spec(Property::Pka));
        assert_eq!(s.to_string().parse::<ScalerSpec>().unwrap(), s);
        assert!("14:7:inc".parse::<ScalerSpec>().is_err());
        assert!("1:2".parse::<ScalerSpec>().is_err());
        assert!("1:2:up".parse::<ScalerSpec>().is_err());
    }

    fn lookup(entries: &[(&str, f64)]) -> Predictor {
        Predictor::LookupTable(LookupTable::new(
            entries
                .iter()
                .map(|(s, v)| (canonical_smiles(&parse_smiles(s).unwrap()), *v))
                .collect(),
        ))
    }

    #[test]
    fn lookup_predictor() {
        let p = lookup(&[("NCCO", 9.16)]);
        assert_eq!(p.predict(&parse_smiles("OCCN").unwrap()).unwrap(), 9.16);
        assert!(matches!(
            p.predict(&parse_smiles("CCO").unwrap()),
            Err(ScoringError::MissingKey(_))
        ));
    }

    #[test]
    fn zero_weight_ridge_is_bias() {
        let r = Predictor::Ridge(RidgeModel {
            weights: vec![0.0; 1024],
            bias: 2.5,
            width: 1024,
            uses_temperature: false,
        });
        for s in ["C", "NCCO", "C1CNCCN1"] {
            assert_eq!(r.predict(&parse_smiles(s).unwrap()).unwrap(), 2.5);
        }
    }

    #[test]
    fn knn_exact_hit() {
        let pts: Vec<TrainingPoint> = [("NCCO", 1.0), ("CCNCC", 2.0), ("C1CNCCN1", 3.0)]
            .iter()
            .map(|(s, v)| TrainingPoint {
                fingerprint: ecfp6(&parse_smiles(s).unwrap()),
                temperature: None,
                value: *v,
            })
            .collect();
        let m = Predictor::Knn(KnnModel::fit(pts, 1));
        assert_eq!(m.predict(&parse_smiles("CCNCC").unwrap()).unwrap(), 2.0);
    }

    #[test]
    fn spo_penalty_and_saturation() {
        let set = PredictorSet::new()
            .with(Property::Pka, lookup(&[("NCCO", 15.0), ("CCO", 15.0)]))
            .with(Property::Viscosity, lookup(&[("NCCO", -1.0)]));
        let mea = parse_smiles("NCCO").unwrap();
        let sc = default_scalers();
        let ok = spo_score(&mea, SpoObjective::MaxPka, Restriction::PrimarySecondary, &set, &sc).unwrap();
        assert_eq!(ok, 1.0);
        let bad = spo_score(&mea, SpoObjective::MaxPka, Restriction::TertiaryCyclicPoly, &set, &sc).unwrap();
        assert_eq!(bad, 0.1);
        assert_eq!(
            spo_score(&mea, SpoObjective::MinViscosity, Restriction::None, &set, &sc).unwrap(),
            1.0
        );
        let ethanol = parse_smiles("CCO").unwrap();
        assert!(matches!(
            spo_score(&ethanol, SpoObjective::MaxPka, Restriction::None, &set, &sc),
            Err(ScoringError::NotAmine)
        ));
    }

    #[test]
    fn mpo_means() {
        let sc = default_scalers();
        let best = PropertyVector {
            pka: 20.0,
            viscosity: -5.0,
            vapor_pressure: -5.0,
            boiling_point: 300.0,
            melting_point: 0.0,
            log_s: 5.0,
            ra_score: 1.0,
            price: -1.0,
        };
        let worst = PropertyVector {
            pka: 0.0,
            viscosity: 5.0,
            vapor_pressure: 5.0,
            boiling_point: 0.0,
            melting_point: 100.0,
            log_s: -10.0,
            ra_score: 0.0,
            price: 50.0,
        };
        let half = PropertyVector {
            pka: 20.0,
            viscosity: 5.0,
            vapor_pressure: -5.0,
            boiling_point: 0.0,
            melting_point: 0.0,
            log_s: -10.0,
            ra_score: 1.0,
            price: 50.0,
        };
        let t = AmineType::Primary;
        assert_eq!(mpo_from_raw(&best, t, Restriction::None, &sc).unwrap().value, 1.0);
        assert_eq!(mpo_from_raw(&worst, t, Restriction::None, &sc).unwrap().value, 0.0);
        assert_eq!(mpo_from_raw(&half, t, Restriction::None, &sc).unwrap().value, 0.5);
        let pen = mpo_from_raw(&half, t, Restriction::TertiaryCyclicPoly, &sc).unwrap();
        assert_eq!(pen.value, 0.05);
        assert!(pen.penalized);
    }

    #[test]
    fn predictor_spec_parsing() {
        let s: PredictorSpec = "knn:data/pka.csv:k=3".parse().unwrap();
        assert_eq!(s.kind, PredictorKind::Knn);
        assert_eq!(s.k, 3);
        let r: PredictorSpec = "ridge:v.csv:lambda=0.5".parse().unwrap();
        assert_eq!(r.lambda, 0.5);
        assert_eq!(r.to_string(), "ridge:v.csv:lambda=0.5");
        assert!("svm:x.csv".parse::<PredictorSpec>().is_err());
        assert!("knn:x.csv:q=1".parse::<PredictorSpec>().is_err());
    }
}
