//! Scenario files: one JSON document describing a grid, kernel, initial
//! data, solver settings and requested outputs.

use std::path::{Path, PathBuf};

use nlstefan::asymptotics::LimitConfig;
use nlstefan::evolution::DT_MAX;
use nlstefan::phaseloss::{PhaseLossConfig, RadiusSource};
use nlstefan::{Field, Graph, Grid, KernelSpec, SimConfig, StopRule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub grid: GridSpec,
    pub kernel: KernelSpec,
    pub initial: InitialData,
    #[serde(default)]
    pub solver: SolverSpec,
    #[serde(default)]
    pub outputs: OutputSpec,
}

/// Either a centered box (`half_width`) or an explicit `shape` and `origin`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub dim: usize,
    pub spacing: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub half_width: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub shape: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub origin: Option<Vec<f64>>,
}

impl GridSpec {
    pub fn build(&self) -> Result<Grid, CliError> {
        let grid = match (self.half_width, &self.shape, &self.origin) {
            (Some(half), None, None) => match self.dim {
                1 => Grid::centered_line(half, self.spacing),
                2 => Grid::centered_square(half, self.spacing),
                d => return Err(CliError::Config(format!("grid.dim must be 1 or 2, got {d}"))),
            },
            (None, Some(shape), Some(origin)) => {
                if shape.len() != self.dim {
                    return Err(CliError::Config(format!(
                        "grid.shape has {} entries for dim {}",
                        shape.len(),
                        self.dim
                    )));
                }
                Grid::new(shape.clone(), self.spacing, origin.clone())
            }
            _ => return Err(CliError::Config("grid needs either half_width, or both shape and origin".to_string())),
        };
        grid.map_err(|e| CliError::Config(format!("grid: {e}")))
    }
}

/// A scalar in 1D or a coordinate list.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Point {
    Scalar(f64),
    Coords(Vec<f64>),
}

impl Point {
    fn coords(&self, dim: usize, what: &str) -> Result<[f64; 2], CliError> {
        match self {
            Point::Scalar(x) if dim == 1 => Ok([*x, 0.0]),
            Point::Coords(c) if c.len() == dim => Ok([c[0], c.get(1).copied().unwrap_or(0.0)]),
            _ => Err(CliError::Config(format!("{what} must have {dim} coordinate(s)"))),
        }
    }
}

/// Axis-aligned box `[lo, hi]` (closed) carrying a constant value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub lo: Point,
    pub hi: Point,
    pub value: f64,
}

/// `height (1 - |x - center|^2 / width^2)_+^2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Bump {
    pub center: Point,
    pub height: f64,
    pub width: f64,
}

fn bump_value(r2: f64, width: f64) -> f64 {
    let s = 1.0 - r2 / (width * width);
    if s > 0.0 {
        s * s
    } else {
        0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum InitialData {
    /// Sum of constant boxes.
    Segments { segments: Vec<Segment> },
    /// Sum of compactly supported bumps.
    Bumps { bumps: Vec<Bump> },
    /// Field snapshot in the JSON snapshot format, relative to the scenario file.
    File { path: PathBuf },
    /// `count` bumps with centers in `[-extent, extent]^N`, widths in
    /// `[0.5, 2] width` and heights uniform in `[-max_height, max_height]`.
    Random { seed: u64, count: usize, extent: f64, max_height: f64, width: f64 },
}

impl InitialData {
    pub fn resolve(&self, grid: &Grid, base: &Path) -> Result<Field, CliError> {
        let dim = grid.dim();
        let tol = 1e-9 * grid.spacing();
        let field = match self {
            InitialData::Segments { segments } => {
                let boxes = segments
                    .iter()
                    .map(|s| Ok((s.lo.coords(dim, "segment.lo")?, s.hi.coords(dim, "segment.hi")?, s.value)))
                    .collect::<Result<Vec<_>, CliError>>()?;
                Field::from_fn(grid, |x| {
                    boxes
                        .iter()
                        .filter(|(lo, hi, _)| (0..dim).all(|a| x[a] >= lo[a] - tol && x[a] <= hi[a] + tol))
                        .map(|b| b.2)
                        .sum()
                })
            }
            InitialData::Bumps { bumps } => {
                let parsed = bumps
                    .iter()
                    .map(|b| {
                        if !(b.width > 0.0) {
                            return Err(CliError::Config(format!("bump width must be positive, got {}", b.width)));
                        }
                        Ok((b.center.coords(dim, "bump.center")?, b.height, b.width))
                    })
                    .collect::<Result<Vec<_>, CliError>>()?;
                Field::from_fn(grid, |x| sum_bumps(&parsed, x, dim))
            }
            InitialData::File { path } => {
                let full = base.join(path);
                let text = std::fs::read_to_string(&full)
                    .map_err(|e| CliError::Config(format!("cannot read {}: {e}", full.display())))?;
                let field =
                    Field::from_json(&text).map_err(|e| CliError::Config(format!("{}: {e}", full.display())))?;
                if field.grid() != grid {
                    return Err(CliError::Config(format!("{} does not match the scenario grid", full.display())));
                }
                return Ok(field);
            }
            InitialData::Random { seed, count, extent, max_height, width } => {
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let parsed: Vec<([f64; 2], f64, f64)> = (0..*count)
                    .map(|_| {
                        let mut c = [0.0; 2];
                        for v in c.iter_mut().take(dim) {
                            *v = rng.gen_range(-extent..=*extent);
                        }
                        let h = rng.gen_range(-max_height..=*max_height);
                        let w = width * rng.gen_range(0.5..=2.0);
                        (c, h, w)
                    })
                    .collect();
                Field::from_fn(grid, |x| sum_bumps(&parsed, x, dim))
            }
        };
        field.map_err(|e| CliError::Config(format!("initial data: {e}")))
    }
}

fn sum_bumps(bumps: &[([f64; 2], f64, f64)], x: [f64; 2], dim: usize) -> f64 {
    bumps
        .iter()
        .map(|(c, h, w)| {
            let r2: f64 = (0..dim).map(|a| (x[a] - c[a]).powi(2)).sum();
            h * bump_value(r2, *w)
        })
        .sum()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSpec {
    pub dt: f64,
    pub t_end: f64,
    pub stride: usize,
    pub graph: Graph,
    pub margin: Option<usize>,
    pub eps: Option<f64>,
    /// Rest tolerance for limit computations; `None` is `1e-8 (1 + ||f||_1)`.
    pub tol: Option<f64>,
    /// Horizon for limit computations.
    pub horizon: f64,
    /// Fixed confinement radius for the phase-loss criterion.
    pub radius: Option<f64>,
    pub radius_margin: Option<f64>,
    pub verify: bool,
    pub verify_horizon: f64,
}

impl Default for SolverSpec {
    fn default() -> Self {
        Self {
            dt: 0.1,
            t_end: 10.0,
            stride: 1,
            graph: Graph::Canonical,
            margin: None,
            eps: None,
            tol: None,
            horizon: 2000.0,
            radius: None,
            radius_margin: None,
            verify: true,
            verify_horizon: 50.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SnapshotFormat {
    Csv,
    Json,
    Both,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    /// Write every recorded enthalpy snapshot.
    pub snapshots: bool,
    pub format: SnapshotFormat,
    pub kernel_dump: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self { snapshots: false, format: SnapshotFormat::Csv, kernel_dump: false }
    }
}

/// Scalars settable from the command line.
#[derive(Clone, Copy, Debug, Default)]
pub struct Overrides {
    pub dt: Option<f64>,
    pub t_end: Option<f64>,
    pub tol: Option<f64>,
}

impl Scenario {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn apply(&mut self, o: Overrides) {
        if let Some(dt) = o.dt {
            self.solver.dt = dt;
        }
        if let Some(t) = o.t_end {
            self.solver.t_end = t;
        }
        if let Some(tol) = o.tol {
            self.solver.tol = Some(tol);
        }
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let s = &self.solver;
        if !(s.dt > 0.0 && s.dt <= DT_MAX) {
            return Err(CliError::Config(format!("solver.dt must lie in (0, {DT_MAX}], got {}", s.dt)));
        }
        if !(s.t_end >= 0.0) || !(s.horizon > 0.0) || !(s.verify_horizon > 0.0) {
            return Err(CliError::Config("solver.t_end, horizon and verify_horizon must be positive".into()));
        }
        if s.stride == 0 {
            return Err(CliError::Config("solver.stride must be at least 1".into()));
        }
        if let Some(tol) = s.tol {
            if !(tol > 0.0) {
                return Err(CliError::Config(format!("solver.tol must be positive, got {tol}")));
            }
        }
        Ok(())
    }

    pub fn sim(&self) -> SimConfig {
        let s = &self.solver;
        SimConfig {
            kernel: self.kernel,
            graph: s.graph,
            dt: s.dt,
            t_end: s.t_end,
            stride: s.stride,
            margin: s.margin,
            stop: StopRule::FixedHorizon,
            eps: s.eps,
        }
    }

    pub fn limit(&self) -> LimitConfig {
        let cfg = LimitConfig::new(self.sim(), self.solver.horizon);
        match self.solver.tol {
            Some(tol) => cfg.with_tol(tol),
            None => cfg,
        }
    }

    pub fn phase_loss(&self) -> PhaseLossConfig {
        let mut cfg = PhaseLossConfig::new(self.sim());
        cfg.radius = match self.solver.radius {
            Some(r) => RadiusSource::Fixed { r },
            None => RadiusSource::Estimated { margin: self.solver.radius_margin },
        };
        cfg.verify = self.solver.verify;
        cfg.verify_horizon = self.solver.verify_horizon;
        cfg
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scenario(initial: &str) -> Scenario {
        let text = format!(
            r#"{{"name":"t","grid":{{"dim":1,"spacing":0.5,"half_width":4.0}},
                "kernel":{{"profile":"tent","radius":1.0}},"initial":{initial}}}"#
        );
        serde_json::from_str(&text).unwrap()
    }

    #[test]
    fn segments_are_closed_boxes() {
        let s = scenario(r#"{"kind":"segments","segments":[{"lo":-1.0,"hi":1.0,"value":2.0}]}"#);
        let grid = s.grid.build().unwrap();
        let f = s.initial.resolve(&grid, Path::new(".")).unwrap();
        let nonzero: Vec<f64> = (0..grid.len()).filter(|&i| f.values()[i] != 0.0).map(|i| grid.coord(i)[0]).collect();
        assert_eq!(nonzero, vec![-1.0, -0.5, 0.0, 0.5, 1.0]);
    }

    #[test]
    fn bump_profile() {
        let s = scenario(r#"{"kind":"bumps","bumps":[{"center":0.0,"height":3.0,"width":1.0}]}"#);
        let grid = s.grid.build().unwrap();
        let f = s.initial.resolve(&grid, Path::new(".")).unwrap();
        let at = |x: f64| f.values()[(0..grid.len()).find(|&i| grid.coord(i)[0] == x).unwrap()];
        assert_eq!(at(0.0), 3.0);
        assert_eq!(at(0.5), 3.0 * 0.75 * 0.75);
        assert_eq!(at(1.0), 0.0);
    }

    #[test]
    fn random_data_depend_only_on_the_seed() {
        let text = r#"{"kind":"random","seed":3,"count":4,"extent":2.0,"max_height":3.0,"width":1.0}"#;
        let s = scenario(text);
        let grid = s.grid.build().unwrap();
        let a = s.initial.resolve(&grid, Path::new(".")).unwrap();
        let b = s.initial.resolve(&grid, Path::new(".")).unwrap();
        assert_eq!(a, b);
        let other = scenario(&text.replace("\"seed\":3", "\"seed\":4"));
        assert_ne!(a, other.initial.resolve(&grid, Path::new(".")).unwrap());
    }

    #[test]
    fn overrides_and_validation() {
        let mut s = scenario(r#"{"kind":"segments","segments":[]}"#);
        s.apply(Overrides { dt: Some(0.7), t_end: Some(3.0), tol: None });
        assert_eq!(s.solver.t_end, 3.0);
        assert!(matches!(s.validate(), Err(CliError::Config(_))));
    }

    #[test]
    fn bad_grid_is_a_config_error() {
        let mut s = scenario(r#"{"kind":"segments","segments":[]}"#);
        s.grid.dim = 3;
        assert!(matches!(s.grid.build(), Err(CliError::Config(_))));
    }
}
