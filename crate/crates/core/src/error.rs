use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("invalid field: {0}")]
    InvalidField(String),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("kernel under-resolved: radius {radius} < 2h = {}", 2.0 * spacing)]
    KernelUnderResolved { radius: f64, spacing: f64 },
    #[error("invalid kernel: {0}")]
    InvalidKernel(String),
    #[error("invalid graph parameters: {0}")]
    InvalidGraph(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("domain too small: support reached boundary margin (t = {t}, node {node}, value {value:e})")]
    SupportGuard { t: f64, node: usize, value: f64 },
    #[error("blow-up: reduce dt (non-finite value at t = {t}, node {node})")]
    BlowUp { t: f64, node: usize },
    #[error("initial data must be nonnegative (node {node} holds {value})")]
    NegativeData { node: usize, value: f64 },
    #[error("Picard iteration did not converge in {iterations} sweeps (last distance {distance:e})")]
    PicardDiverged { iterations: usize, distance: f64 },
    #[error("horizon {horizon} exhausted before tolerance {tol:e} was reached (residual {residual:e})")]
    HorizonExhausted { horizon: f64, tol: f64, residual: f64 },
    #[error("direct sweep did not converge in {sweeps} sweeps (last update {last_update:e})")]
    SweepDiverged { sweeps: usize, last_update: f64, history: Vec<f64> },
    #[error("phases interact: BOP theory not applicable ({0})")]
    PhasesInteract(String),
    #[error("criterion hypothesis fails: eta_bar = {eta_bar} <= 0")]
    CriterionHypothesis { eta_bar: f64 },
    #[error("not applicable: {0}")]
    NotApplicable(String),
}
