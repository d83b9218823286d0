//! Pinned tolerances and run parameters shared by the library, the CLI and
//! the acceptance suite. Every value here can be overridden per call.

/// Relative gap separating two exponent plateaus.
pub const GAP_TOL: f64 = 1e-6;
/// Ψ eigenvalues below this are reported as exactly 0.
pub const UNDERFLOW_FLOOR: f64 = 1e-300;
/// Relative Gram–Schmidt residual below which a pushed direction is
/// treated as annihilated by the product.
pub const RANK_TOL: f64 = 1e-10;
/// Moduli closer than this share a plateau in a spectrum report.
pub const SPECTRUM_GROUP_TOL: f64 = 1e-9;
/// Slack at both ends of `(ϑ, 0)` when listing exceptional exponents.
pub const EXCEPTIONAL_MARGIN: f64 = 1e-9;
/// Smallest acceptable singular value of a pushed frame.
pub const PUSH_CONDITIONING_TOL: f64 = 1e-12;

/// Gram depth and push length of the π-digit experiment.
pub const SEC7_DEPTH: usize = 40;
pub const SEC7_PUSH: usize = 20;
/// Push length of the periodic experiment (a multiple of the period).
pub const THM1_PUSH: usize = 12;

/// Tolerances of the reproduction checks.
pub const SPECTRUM_TOL: f64 = 1e-9;
pub const THM1_ROOT_TOL: f64 = 5e-4;
pub const SEC7_EIGEN_TARGET: f64 = 0.81;
pub const SEC7_EIGEN_TOL: f64 = 1e-2;
pub const SEC7_LOG_TOL: f64 = 1e-2;
pub const DELTA_TOL: f64 = 1e-8;
pub const SUBSPACE_TOL: f64 = 1e-6;
pub const SAME_SYMBOL_TOL: f64 = 1e-8;
pub const CANCELLATION_TOL: f64 = 1e-12;

/// Harness tolerances.
pub const EQUIVARIANCE_TOL: f64 = 1e-6;
pub const DIRECT_SUM_COND: f64 = 1e6;
pub const GROWTH_TOL: f64 = 1e-2;
pub const ORACLE_TOL: f64 = 1e-2;

/// Version of this table, recorded in every reproduction report.
pub const TABLE_VERSION: &str = "1";

/// The check tolerances as one overridable value.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Tolerances {
    pub spectrum: f64,
    pub thm1_root: f64,
    pub sec7_eigen_target: f64,
    pub sec7_eigen: f64,
    pub sec7_log: f64,
    pub delta: f64,
    pub subspace: f64,
    pub same_symbol: f64,
    pub cancellation: f64,
    pub equivariance: f64,
    pub direct_sum_condition: f64,
    pub growth: f64,
    pub oracle: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            spectrum: SPECTRUM_TOL,
            thm1_root: THM1_ROOT_TOL,
            sec7_eigen_target: SEC7_EIGEN_TARGET,
            sec7_eigen: SEC7_EIGEN_TOL,
            sec7_log: SEC7_LOG_TOL,
            delta: DELTA_TOL,
            subspace: SUBSPACE_TOL,
            same_symbol: SAME_SYMBOL_TOL,
            cancellation: CANCELLATION_TOL,
            equivariance: EQUIVARIANCE_TOL,
            direct_sum_condition: DIRECT_SUM_COND,
            growth: GROWTH_TOL,
            oracle: ORACLE_TOL,
        }
    }
}

impl Tolerances {
    /// Overrides one field by name, e.g. `"delta"`.
    pub fn set(&mut self, name: &str, value: f64) -> Result<(), String> {
        let slot = match name {
            "spectrum" => &mut self.spectrum,
            "thm1_root" => &mut self.thm1_root,
            "sec7_eigen_target" => &mut self.sec7_eigen_target,
            "sec7_eigen" => &mut self.sec7_eigen,
            "sec7_log" => &mut self.sec7_log,
            "delta" => &mut self.delta,
            "subspace" => &mut self.subspace,
            "same_symbol" => &mut self.same_symbol,
            "cancellation" => &mut self.cancellation,
            "equivariance" => &mut self.equivariance,
            "direct_sum_condition" => &mut self.direct_sum_condition,
            "growth" => &mut self.growth,
            "oracle" => &mut self.oracle,
            _ => return Err(format!("unknown tolerance {name:?}")),
        };
        if !(value.is_finite() && value > 0.0) {
            return Err(format!("tolerance {name} must be positive, got {value}"));
        }
        *slot = value;
        Ok(())
    }
}
