//! Filter runs over simulated scenarios: per-epoch records, the GEKF/GMEKF
//! lockstep comparison, Monte-Carlo NEES statistics and CSV output.

use std::fmt;
use std::io::{self, Write};

use nalgebra::Vector6;
use rayon::prelude::*;
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::attitude::Vec3;
use crate::filter::{
    attitude_error, nees, propagate, Covariance6, ErrorModel, FilterError, FilterState, GyroSample,
    MeasurementSet, NoiseParams,
};
use crate::gekf::gekf_measurement_update;
use crate::gmekf::{gmekf_measurement_update_with, CovarianceReset, UpdateResult};
use crate::mekf::mekf_measurement_update;
use crate::sim::{generate_scenario, Scenario, ScenarioConfig, SimError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum FilterKind {
    Mekf,
    Gmekf,
    Gekf,
}

impl FilterKind {
    pub fn error_model(self) -> ErrorModel {
        match self {
            FilterKind::Mekf => ErrorModel::Classical,
            FilterKind::Gmekf | FilterKind::Gekf => ErrorModel::Geometric,
        }
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FilterKind::Mekf => "mekf",
            FilterKind::Gmekf => "gmekf",
            FilterKind::Gekf => "gekf",
        })
    }
}

/// Filter tuning and reset options. Tuning is independent of the noise the
/// scenario was simulated with.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterOptions {
    pub tuning: NoiseParams,
    /// Post-reset covariance treatment for GMEKF.
    pub covariance_reset: CovarianceReset,
    /// Whether MEKF rotates its attitude covariance through the reset map.
    pub mekf_attitude_reset: bool,
}

impl FilterOptions {
    pub fn matching(cfg: &ScenarioConfig) -> Self {
        Self {
            tuning: cfg.noise.clone(),
            covariance_reset: CovarianceReset::Geometric,
            mekf_attitude_reset: true,
        }
    }
}

#[derive(Debug, Error)]
pub enum RunError {
    #[error("numerical failure at epoch {epoch}: {source}")]
    Numerical {
        epoch: usize,
        #[source]
        source: FilterError,
    },
    #[error("covariance lost positive definiteness at epoch {epoch}")]
    Indefinite { epoch: usize },
    #[error(transparent)]
    Scenario(#[from] SimError),
}

/// A running filter instance.
#[derive(Debug, Clone)]
pub struct Filter {
    pub kind: FilterKind,
    pub state: FilterState,
    pub p: Covariance6,
    options: FilterOptions,
}

impl Filter {
    pub fn new(
        kind: FilterKind,
        state: FilterState,
        p: Covariance6,
        options: FilterOptions,
    ) -> Self {
        Self {
            kind,
            state,
            p,
            options,
        }
    }

    pub fn propagate(&mut self, gyro: &GyroSample) -> Result<(), FilterError> {
        let (state, p) = propagate(
            &self.state,
            &self.p,
            gyro,
            &self.options.tuning,
            self.kind.error_model(),
        )?;
        self.state = state;
        self.p = p;
        Ok(())
    }

    pub fn update(&mut self, meas: &MeasurementSet) -> Result<UpdateResult, FilterError> {
        let out = match self.kind {
            FilterKind::Mekf => mekf_measurement_update(
                &self.state,
                &self.p,
                meas,
                self.options.mekf_attitude_reset,
            ),
            FilterKind::Gmekf => gmekf_measurement_update_with(
                &self.state,
                &self.p,
                meas,
                self.options.covariance_reset,
            ),
            FilterKind::Gekf => gekf_measurement_update(&self.state, &self.p, meas),
        }?;
        self.state = out.state_plus;
        self.p = out.p_plus_plus;
        Ok(out)
    }
}

/// Filter-versus-truth record at one measurement epoch.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunRecord {
    pub t: f64,
    /// Attitude error rotation vector (rad).
    pub err_att: Vec3,
    /// Bias error under the filter's own error definition (rad/s).
    pub err_bias: Vec3,
    pub p_diag: Vector6<f64>,
    pub nees: f64,
}

/// Steps a filter through a scenario, reporting after every measurement update.
pub fn run_filter(
    scenario: &Scenario,
    kind: FilterKind,
    options: &FilterOptions,
) -> Result<Vec<RunRecord>, RunError> {
    let mut filter = Filter::new(
        kind,
        scenario.initial_estimate,
        scenario.initial_covariance,
        options.clone(),
    );
    let model = kind.error_model();
    let mut records = Vec::with_capacity(scenario.epochs.len());
    let mut epochs = scenario.epochs.iter().enumerate().peekable();

    for (k, gyro) in scenario.gyro.iter().enumerate() {
        filter
            .propagate(gyro)
            .map_err(|source| RunError::Numerical {
                epoch: records.len(),
                source,
            })?;
        let Some((index, epoch)) = epochs.next_if(|(_, e)| e.step == k + 1) else {
            continue;
        };
        let numerical = |source| RunError::Numerical {
            epoch: index,
            source,
        };
        let meas = scenario
            .measurement_set(epoch, &options.tuning.sigma_meas)
            .map_err(numerical)?;
        filter.update(&meas).map_err(numerical)?;

        let truth = &scenario.truth[epoch.step];
        let err_att = attitude_error(&truth.q_true, &filter.state.q_hat);
        let err_bias = model.bias_error(&err_att, &truth.b_true, &filter.state.b_hat);
        let e = Vector6::new(
            err_att.x, err_att.y, err_att.z, err_bias.x, err_bias.y, err_bias.z,
        );
        let nees = nees(&e, &filter.p).ok_or(RunError::Indefinite { epoch: index })?;
        records.push(RunRecord {
            t: truth.t,
            err_att,
            err_bias,
            p_diag: filter.p.diagonal(),
            nees,
        });
    }
    Ok(records)
}

/// GEKF versus GMEKF discrepancy after one measurement update.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquivalenceRecord {
    pub t: f64,
    /// Sign-aligned rotation angle between the two quaternions (rad).
    pub dq_rad: f64,
    /// `‖b̂_GEKF − b̂_GMEKF‖` (rad/s).
    pub db_norm: f64,
    /// `‖P_GEKF − P_GMEKF‖_F / ‖P_GMEKF‖_F`.
    pub dp_rel: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EquivalenceReport {
    pub records: Vec<EquivalenceRecord>,
    pub max_dq_rad: f64,
    pub max_db_norm: f64,
    pub max_dp_rel: f64,
}

/// Discrepancy between two filter outputs.
pub fn discrepancy(
    t: f64,
    a: &FilterState,
    pa: &Covariance6,
    b: &FilterState,
    pb: &Covariance6,
) -> EquivalenceRecord {
    let scale = pb.norm();
    EquivalenceRecord {
        t,
        dq_rad: a.q_hat.angle_to(&b.q_hat),
        db_norm: (a.b_hat - b.b_hat).norm(),
        dp_rel: if scale > 0.0 {
            (pa - pb).norm() / scale
        } else {
            (pa - pb).norm()
        },
    }
}

/// Runs GEKF and GMEKF side by side on identical inputs.
pub fn equivalence_report(
    scenario: &Scenario,
    options: &FilterOptions,
) -> Result<EquivalenceReport, RunError> {
    let mut gekf = Filter::new(
        FilterKind::Gekf,
        scenario.initial_estimate,
        scenario.initial_covariance,
        options.clone(),
    );
    let gmekf_options = FilterOptions {
        covariance_reset: CovarianceReset::Geometric,
        ..options.clone()
    };
    let mut gmekf = Filter::new(
        FilterKind::Gmekf,
        scenario.initial_estimate,
        scenario.initial_covariance,
        gmekf_options,
    );

    let mut records = Vec::with_capacity(scenario.epochs.len());
    let mut epochs = scenario.epochs.iter().enumerate().peekable();
    for (k, gyro) in scenario.gyro.iter().enumerate() {
        let numerical = |epoch| move |source| RunError::Numerical { epoch, source };
        gekf.propagate(gyro).map_err(numerical(records.len()))?;
        gmekf.propagate(gyro).map_err(numerical(records.len()))?;
        let Some((index, epoch)) = epochs.next_if(|(_, e)| e.step == k + 1) else {
            continue;
        };
        let meas = scenario
            .measurement_set(epoch, &options.tuning.sigma_meas)
            .map_err(numerical(index))?;
        gekf.update(&meas).map_err(numerical(index))?;
        gmekf.update(&meas).map_err(numerical(index))?;
        records.push(discrepancy(
            scenario.truth[epoch.step].t,
            &gekf.state,
            &gekf.p,
            &gmekf.state,
            &gmekf.p,
        ));
    }
    let max = |f: fn(&EquivalenceRecord) -> f64| records.iter().map(f).fold(0.0, f64::max);
    Ok(EquivalenceReport {
        max_dq_rad: max(|r| r.dq_rad),
        max_db_norm: max(|r| r.db_norm),
        max_dp_rel: max(|r| r.dp_rel),
        records,
    })
}

/// Two-sided interval containing `prob` of a chi-square(dof) distribution.
pub fn chi_square_interval(dof: f64, prob: f64) -> (f64, f64) {
    let dist = ChiSquared::new(dof).expect("positive degrees of freedom");
    let tail = 0.5 * (1.0 - prob);
    (dist.inverse_cdf(tail), dist.inverse_cdf(1.0 - tail))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub epochs: usize,
    /// `√(mean ‖e_att‖²)` (rad).
    pub rmse_attitude: f64,
    /// `√(mean ‖e_bias‖²)` (rad/s).
    pub rmse_bias: f64,
    pub mean_nees: f64,
    /// Fraction of epochs whose NEES lies in the 95% chi-square(6) interval.
    pub nees_coverage: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("cannot summarize an empty record set")]
pub struct EmptyRecords;

pub fn summarize(records: &[RunRecord]) -> Result<Summary, EmptyRecords> {
    if records.is_empty() {
        return Err(EmptyRecords);
    }
    let n = records.len() as f64;
    let (lo, hi) = chi_square_interval(6.0, 0.95);
    let mean = |f: &dyn Fn(&RunRecord) -> f64| records.iter().map(f).sum::<f64>() / n;
    Ok(Summary {
        epochs: records.len(),
        rmse_attitude: mean(&|r| r.err_att.norm_squared()).sqrt(),
        rmse_bias: mean(&|r| r.err_bias.norm_squared()).sqrt(),
        mean_nees: mean(&|r| r.nees),
        nees_coverage: mean(&|r| f64::from(u8::from((lo..=hi).contains(&r.nees)))),
    })
}

/// Monte-Carlo NEES statistics across seeds.
#[derive(Debug, Clone, PartialEq)]
pub struct MonteCarloResult {
    pub seeds: Vec<u64>,
    /// Records per run, in seed order.
    pub runs: Vec<Vec<RunRecord>>,
    /// Epoch times and the NEES averaged across runs.
    pub mean_nees: Vec<(f64, f64)>,
    /// 95% band for the run-averaged NEES, `χ²(6N)/N`.
    pub band: (f64, f64),
    pub fraction_inside: f64,
}

/// Runs `runs` scenarios with seeds `base_seed..base_seed + runs` in parallel.
pub fn monte_carlo(
    cfg: &ScenarioConfig,
    kind: FilterKind,
    options: &FilterOptions,
    runs: usize,
    base_seed: u64,
) -> Result<MonteCarloResult, RunError> {
    let seeds: Vec<u64> = (0..runs as u64).map(|i| base_seed + i).collect();
    let mut results: Vec<(u64, Vec<RunRecord>)> = seeds
        .par_iter()
        .map(|&seed| {
            let scenario = generate_scenario(&ScenarioConfig {
                seed,
                ..cfg.clone()
            })?;
            Ok((seed, run_filter(&scenario, kind, options)?))
        })
        .collect::<Result<_, RunError>>()?;
    results.sort_by_key(|(seed, _)| *seed);
    let runs_records: Vec<Vec<RunRecord>> = results.into_iter().map(|(_, r)| r).collect();

    let n = runs_records.len() as f64;
    let epochs = runs_records.first().map_or(0, Vec::len);
    let mean_nees: Vec<(f64, f64)> = (0..epochs)
        .map(|i| {
            let avg = runs_records.iter().map(|r| r[i].nees).sum::<f64>() / n;
            (runs_records[0][i].t, avg)
        })
        .collect();
    let (lo, hi) = chi_square_interval(6.0 * n, 0.95);
    let band = (lo / n, hi / n);
    let inside = mean_nees
        .iter()
        .filter(|(_, v)| (band.0..=band.1).contains(v))
        .count();
    Ok(MonteCarloResult {
        seeds,
        runs: runs_records,
        mean_nees,
        band,
        fraction_inside: if epochs == 0 {
            0.0
        } else {
            inside as f64 / epochs as f64
        },
    })
}

pub const RUN_CSV_HEADER: &str =
    "t,err_att_x,err_att_y,err_att_z,err_bias_x,err_bias_y,err_bias_z,\
P11,P22,P33,P44,P55,P66,nees";
pub const EQUIV_CSV_HEADER: &str = "t,dq_rad,db_norm,dP_rel";
pub const NEES_CSV_HEADER: &str = "t,mean_nees,band_lo,band_hi";

// `{:e}` prints the shortest round-tripping representation, so output is
// reproducible to the bit.
pub fn write_run_csv<W: Write>(mut w: W, records: &[RunRecord]) -> io::Result<()> {
    writeln!(w, "{RUN_CSV_HEADER}")?;
    for r in records {
        write!(w, "{:e}", r.t)?;
        for v in r
            .err_att
            .iter()
            .chain(r.err_bias.iter())
            .chain(r.p_diag.iter())
        {
            write!(w, ",{v:e}")?;
        }
        writeln!(w, ",{:e}", r.nees)?;
    }
    Ok(())
}

pub fn write_equivalence_csv<W: Write>(mut w: W, report: &EquivalenceReport) -> io::Result<()> {
    writeln!(w, "{EQUIV_CSV_HEADER}")?;
    for r in &report.records {
        writeln!(w, "{:e},{:e},{:e},{:e}", r.t, r.dq_rad, r.db_norm, r.dp_rel)?;
    }
    Ok(())
}

pub fn write_nees_csv<W: Write>(mut w: W, mc: &MonteCarloResult) -> io::Result<()> {
    writeln!(w, "{NEES_CSV_HEADER}")?;
    for (t, v) in &mc.mean_nees {
        writeln!(w, "{t:e},{v:e},{:e},{:e}", mc.band.0, mc.band.1)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::InitialError;

    fn record(err_att: Vec3, err_bias: Vec3, nees: f64) -> RunRecord {
        RunRecord {
            t: 0.0,
            err_att,
            err_bias,
            p_diag: Vector6::zeros(),
            nees,
        }
    }

    #[test]
    fn summarize_cases() {
        assert_eq!(summarize(&[]), Err(EmptyRecords));
        let s = summarize(&[record(Vec3::zeros(), Vec3::zeros(), 6.0)]).unwrap();
        assert_eq!(s.rmse_attitude, 0.0);
        assert_eq!(s.rmse_bias, 0.0);

        let e = Vec3::new(1e-4, -2e-4, 3e-4);
        let recs = vec![record(e, e * 1e-3, 6.0); 100];
        let s = summarize(&recs).unwrap();
        assert!((s.rmse_attitude - e.norm()).abs() < 1e-18);
        assert_eq!(s.nees_coverage, 1.0);
    }

    #[test]
    fn summarize_matches_closed_form() {
        // Attitude error k·e₁ for k = 1..=N: mean ‖e‖² = (N+1)(2N+1)/6.
        let n = 50usize;
        let recs: Vec<RunRecord> = (1..=n)
            .map(|k| {
                let nees = if k % 5 == 0 { 20.0 } else { 5.0 };
                record(Vec3::x() * k as f64, Vec3::y() * (2.0 * k as f64), nees)
            })
            .collect();
        let s = summarize(&recs).unwrap();
        let ms = ((n + 1) * (2 * n + 1)) as f64 / 6.0;
        assert!((s.rmse_attitude - ms.sqrt()).abs() < 1e-12);
        assert!((s.rmse_bias - (4.0 * ms).sqrt()).abs() < 1e-12);
        assert!((s.mean_nees - (0.8 * 5.0 + 0.2 * 20.0)).abs() < 1e-12);
        assert!((s.nees_coverage - 0.8).abs() < 1e-12);
    }

    #[test]
    fn chi_square_interval_known_values() {
        let (lo, hi) = chi_square_interval(6.0, 0.95);
        assert!((lo - 1.237_344).abs() < 1e-5);
        assert!((hi - 14.449_375).abs() < 1e-5);
    }

    fn short_zero_noise() -> ScenarioConfig {
        let mut cfg = ScenarioConfig::desk_default();
        cfg.duration = 120.0;
        cfg.noise.sigma_v = 0.0;
        cfg.noise.sigma_u = 0.0;
        cfg.noise.sigma_meas = vec![0.0; 2];
        cfg.initial_error = InitialError::Fixed {
            attitude: Vec3::zeros(),
            bias: Vec3::zeros(),
        };
        cfg
    }

    #[test]
    fn zero_noise_runs_track_truth() {
        let cfg = short_zero_noise();
        let scenario = generate_scenario(&cfg).unwrap();
        let mut options = FilterOptions::matching(&ScenarioConfig::desk_default());
        options.tuning.sigma_meas = vec![1e-5; 2];
        for kind in [FilterKind::Mekf, FilterKind::Gmekf, FilterKind::Gekf] {
            let recs = run_filter(&scenario, kind, &options).unwrap();
            assert_eq!(recs.len(), 120);
            assert!(recs.last().unwrap().err_att.norm() < 1e-9, "{kind}");
        }
    }

    #[test]
    fn runs_are_deterministic() {
        let mut cfg = ScenarioConfig::desk_default();
        cfg.duration = 60.0;
        let scenario = generate_scenario(&cfg).unwrap();
        let options = FilterOptions::matching(&cfg);
        let a = run_filter(&scenario, FilterKind::Gmekf, &options).unwrap();
        let b = run_filter(&scenario, FilterKind::Gmekf, &options).unwrap();
        assert_eq!(a, b);
        let mut buf_a = Vec::new();
        let mut buf_b = Vec::new();
        write_run_csv(&mut buf_a, &a).unwrap();
        write_run_csv(&mut buf_b, &b).unwrap();
        assert_eq!(buf_a, buf_b);
        let text = String::from_utf8(buf_a).unwrap();
        assert_eq!(text.lines().next(), Some(RUN_CSV_HEADER));
        assert_eq!(text.lines().count(), 61);
        assert_eq!(text.lines().nth(1).unwrap().split(',').count(), 14);
    }

    #[test]
    fn single_zero_innovation_update_has_zero_discrepancy() {
        let mut cfg = short_zero_noise();
        cfg.duration = 1.0;
        let scenario = generate_scenario(&cfg).unwrap();
        // Sensor noise is zero and the estimate starts on truth, so the
        // only innovation is propagation roundoff.
        let mut options = FilterOptions::matching(&cfg);
        options.tuning.sigma_meas = vec![1e-5; 2];
        let report = equivalence_report(&scenario, &options).unwrap();
        assert_eq!(report.records.len(), 1);
        assert!(report.max_dq_rad < 1e-15);
        assert!(report.max_db_norm < 1e-18);
        assert!(report.max_dp_rel < 1e-14);
    }

    #[test]
    fn numerical_failure_reports_epoch() {
        let mut cfg = ScenarioConfig::desk_default();
        cfg.duration = 5.0;
        cfg.initial_sigma_attitude = Vec3::zeros();
        cfg.initial_sigma_bias = Vec3::zeros();
        let scenario = generate_scenario(&cfg).unwrap();
        let mut options = FilterOptions::matching(&cfg);
        options.tuning = NoiseParams {
            sigma_v: 0.0,
            sigma_u: 0.0,
            sigma_meas: vec![1e-300; 2],
        };
        let err = run_filter(&scenario, FilterKind::Gmekf, &options).unwrap_err();
        assert!(matches!(err, RunError::Numerical { epoch: 0, .. }), "{err}");
    }
}
