//! Run configuration: named matrices, per-criterion settings, seeds and the output directory.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::convolution::ConvolutionConfig;
use crate::covers::BumpShape;
use crate::cubes::CubeBatteryConfig;
use crate::error::{Error, Result};
use crate::experiments::{AtomTrainConfig, CoincidenceConfig, KhintchineConfig, QDetectionConfig, SingleAtomConfig};
use crate::linalg::ExpansiveMatrix;

/// A matrix given inline or as a file of whitespace-separated rows (relative to the config file).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MatrixSpec {
    Rows(Vec<Vec<f64>>),
    File { file: PathBuf },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct QuasiNormSection {
    pub battery: Vec<String>,
    pub points: usize,
    pub scales: (i64, i64),
    pub seed: u64,
}

impl Default for QuasiNormSection {
    fn default() -> Self {
        Self { battery: default_battery(), points: 1000, scales: (-30, 30), seed: 1 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EllipsoidSection {
    pub battery: Vec<String>,
    pub volume_tol: f64,
}

impl Default for EllipsoidSection {
    fn default() -> Self {
        Self { battery: default_battery(), volume_tol: 1e-8 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ClassificationSection {
    pub equivalent: Vec<(String, String)>,
    pub inequivalent: Vec<(String, String)>,
}

impl Default for ClassificationSection {
    fn default() -> Self {
        let p = |a: &str, b: &str| (a.to_string(), b.to_string());
        Self {
            equivalent: vec![p("two_id", "three_id"), p("two_id", "two_rot")],
            inequivalent: vec![p("two_id", "diag24"), p("two_id", "jordan"), p("diag24", "diag42_rot")],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PartitionSection {
    pub battery: Vec<String>,
    pub points: usize,
    /// log10 |ξ| range
    pub decades: (f64, f64),
    pub tol: f64,
    pub seed: u64,
}

impl Default for PartitionSection {
    fn default() -> Self {
        Self { battery: default_battery(), points: 1000, decades: (-4.0, 4.0), tol: 1e-6, seed: 2 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SingleAtomSection {
    pub matrix: String,
    pub config: SingleAtomConfig,
    /// the grid is rerun at twice this many points per axis
    pub stability: f64,
}

impl Default for SingleAtomSection {
    fn default() -> Self {
        Self { matrix: "diag24".into(), config: SingleAtomConfig::default(), stability: 0.25 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AtomTrainSection {
    pub matrix: String,
    pub config: AtomTrainConfig,
}

impl Default for AtomTrainSection {
    fn default() -> Self {
        Self { matrix: "diag24".into(), config: AtomTrainConfig::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PairSection<C> {
    pub a: String,
    pub b: String,
    pub config: C,
}

impl Default for PairSection<QDetectionConfig> {
    fn default() -> Self {
        Self { a: "two_id".into(), b: "diag24".into(), config: QDetectionConfig::default() }
    }
}

impl Default for PairSection<CoincidenceConfig> {
    fn default() -> Self {
        Self { a: "two_rot".into(), b: "two_id".into(), config: CoincidenceConfig::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RunConfig {
    pub output: PathBuf,
    /// rayon worker cap; 0 keeps the default pool
    pub workers: usize,
    /// criteria to run (1..=12); empty runs all
    pub only: Vec<u32>,
    /// rerun everything and compare artifacts (criterion 12)
    pub repeat: bool,
    pub depth: i64,
    pub shape: BumpShape,
    pub matrices: BTreeMap<String, MatrixSpec>,
    pub quasinorm: QuasiNormSection,
    pub ellipsoid: EllipsoidSection,
    pub classification: ClassificationSection,
    pub partition: PartitionSection,
    pub single_atom: SingleAtomSection,
    pub atom_train: AtomTrainSection,
    pub khintchine: KhintchineConfig,
    pub q_detection: PairSection<QDetectionConfig>,
    pub coincidence: PairSection<CoincidenceConfig>,
    pub convolution: ConvolutionConfig,
    pub cubes: CubeBatteryConfig,
    #[serde(skip)]
    pub base: Option<PathBuf>,
}

fn default_battery() -> Vec<String> {
    ["two_id", "three_id", "diag24", "jordan", "two_rot", "diag235"].iter().map(|s| s.to_string()).collect()
}

pub fn default_matrices() -> BTreeMap<String, MatrixSpec> {
    let m = |rows: &[&[f64]]| MatrixSpec::Rows(rows.iter().map(|r| r.to_vec()).collect());
    BTreeMap::from([
        ("two_id".into(), m(&[&[2.0, 0.0], &[0.0, 2.0]])),
        ("three_id".into(), m(&[&[3.0, 0.0], &[0.0, 3.0]])),
        ("diag24".into(), m(&[&[2.0, 0.0], &[0.0, 4.0]])),
        ("jordan".into(), m(&[&[2.0, 1.0], &[0.0, 2.0]])),
        ("two_rot".into(), m(&[&[0.0, -2.0], &[2.0, 0.0]])),
        ("diag42_rot".into(), m(&[&[0.0, -4.0], &[2.0, 0.0]])),
        ("diag235".into(), m(&[&[2.0, 0.0, 0.0], &[0.0, 3.0, 0.0], &[0.0, 0.0, 5.0]])),
    ])
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            output: PathBuf::from("aniso-tl-out"),
            workers: 0,
            only: vec![],
            repeat: true,
            depth: 40,
            shape: BumpShape::default(),
            matrices: default_matrices(),
            quasinorm: QuasiNormSection::default(),
            ellipsoid: EllipsoidSection::default(),
            classification: ClassificationSection::default(),
            partition: PartitionSection::default(),
            single_atom: SingleAtomSection::default(),
            atom_train: AtomTrainSection::default(),
            khintchine: KhintchineConfig::default(),
            q_detection: PairSection::<QDetectionConfig>::default(),
            coincidence: PairSection::<CoincidenceConfig>::default(),
            convolution: ConvolutionConfig::default(),
            cubes: CubeBatteryConfig::default(),
            base: None,
        }
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 {
        Ok(())
    } else {
        Err(Error::Param(format!("{name} must be positive, got {v}")))
    }
}

fn pow2(name: &str, n: usize) -> Result<()> {
    if n.is_power_of_two() && n >= 64 {
        Ok(())
    } else {
        Err(Error::Param(format!("{name} must be a power of two >= 64, got {n}")))
    }
}

impl RunConfig {
    /// Reads a TOML file; missing keys take their defaults. Named matrices are merged into the defaults.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        cfg.base = path.parent().map(Path::to_path_buf);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        let mut all = default_matrices();
        all.append(&mut cfg.matrices);
        cfg.matrices = all;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn matrix(&self, name: &str) -> Result<ExpansiveMatrix> {
        match self.matrices.get(name) {
            None => Err(Error::Param(format!("unknown matrix name {name}"))),
            Some(MatrixSpec::Rows(r)) => ExpansiveMatrix::from_rows(r),
            Some(MatrixSpec::File { file }) => {
                let p = match &self.base {
                    Some(b) if file.is_relative() => b.join(file),
                    _ => file.clone(),
                };
                let text = std::fs::read_to_string(&p).map_err(|e| Error::Io(format!("{}: {e}", p.display())))?;
                ExpansiveMatrix::parse(&text)
            }
        }
    }

    pub fn runs(&self, criterion: u32) -> bool {
        self.only.is_empty() || self.only.contains(&criterion)
    }

    pub fn validate(&self) -> Result<()> {
        if let Some(&c) = self.only.iter().find(|&&c| !(1..=12).contains(&c)) {
            return Err(Error::Param(format!("no criterion {c}")));
        }
        if self.depth < 1 {
            return Err(Error::Param("depth must be >= 1".into()));
        }
        positive("shape.spread", self.shape.spread)?;
        positive("ellipsoid.volume_tol", self.ellipsoid.volume_tol)?;
        positive("partition.tol", self.partition.tol)?;
        positive("single_atom.stability", self.single_atom.stability)?;
        positive("single_atom.config.bound", self.single_atom.config.bound)?;
        positive("atom_train.config.bound", self.atom_train.config.bound)?;
        positive("q_detection.config.tol", self.q_detection.config.tol)?;
        positive("q_detection.config.agree_tol", self.q_detection.config.agree_tol)?;
        positive("coincidence.config.bound", self.coincidence.config.bound)?;
        positive("coincidence.config.stability", self.coincidence.config.stability)?;
        positive("convolution.slack", self.convolution.slack)?;
        positive("convolution.decay_bound", self.convolution.decay_bound)?;
        positive("cubes.bound", self.cubes.bound)?;
        pow2("single_atom.config.grid.n", self.single_atom.config.grid.n)?;
        pow2("atom_train.config.grid.n", self.atom_train.config.grid.n)?;
        pow2("q_detection.config.grid.n", self.q_detection.config.grid.n)?;
        pow2("convolution.n", self.convolution.n)?;
        for &n in &self.coincidence.config.ns {
            pow2("coincidence.config.ns", n)?;
        }
        let mut names: Vec<&String> = vec![&self.single_atom.matrix, &self.atom_train.matrix, &self.q_detection.a, &self.q_detection.b, &self.coincidence.a, &self.coincidence.b];
        names.extend(&self.quasinorm.battery);
        names.extend(&self.ellipsoid.battery);
        names.extend(&self.partition.battery);
        for (a, b) in self.classification.equivalent.iter().chain(&self.classification.inequivalent) {
            names.extend([a, b]);
        }
        for n in names {
            if !self.matrices.contains_key(n) {
                return Err(Error::Param(format!("unknown matrix name {n}")));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_round_trips_through_toml() {
        let c = RunConfig::default();
        let back = RunConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        c.validate().unwrap();
    }

    #[test]
    fn partial_file_keeps_defaults() {
        let c = RunConfig::from_toml("only = [1, 2]\n[matrices]\nmine = [[3.0, 1.0], [0.0, 3.0]]\n[quasinorm]\npoints = 10\n").unwrap();
        assert_eq!(c.quasinorm.points, 10);
        assert_eq!(c.quasinorm.seed, 1);
        assert!(c.matrices.contains_key("two_id"));
        assert_eq!(c.matrix("mine").unwrap().det_abs(), 9.0);
        assert!(c.runs(2) && !c.runs(3));
    }

    #[test]
    fn invalid_values_are_rejected() {
        assert!(RunConfig::from_toml("[partition]\ntol = -1.0\n").unwrap().validate().is_err());
        assert!(RunConfig::from_toml("[convolution]\nn = 1000\n").unwrap().validate().is_err());
        assert!(RunConfig::from_toml("only = [13]\n").unwrap().validate().is_err());
        assert!(RunConfig::from_toml("[single_atom]\nmatrix = \"nope\"\n").unwrap().validate().is_err());
        assert!(RunConfig::from_toml("depth = \"x\"\n").is_err());
    }
}
