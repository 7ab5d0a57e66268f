//! End-to-end orchestration: data collection → representation → latent
//! identification (explicit or implicit) → cost learning → planning →
//! evaluation, producing one structured run record per configuration.

use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::control_eval::{evaluate_analytic, evaluate_rollout, plan, Policy};
use crate::diagnostics::{latent_errors, LatentErrors};
use crate::error::{Error, Result};
use crate::latent_id::{cosysid, learn_cost, sysid_explicit, CosysidTrace, IdMethod, LatentModel};
use crate::lqg_model::{
    check_assumptions, normalize_model, optimal_average_cost, DerivedGains, LqgModel,
};
use crate::matstat::{rng_from_seed, spectral_radius, Mat};
use crate::repr_learn::{
    discover_rank, encode_rows, factor_psd, quadratic_regress, Representation, DEFAULT_RANK_RATIO,
};
use crate::simulate::{build_histories, rollout_excite, true_repr, Trajectory};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum EvalMode {
    Analytic,
    Rollout { t_eval: usize, burn_in: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    pub t: usize,
    /// History length; `None` selects the ceil(log(100T)/log(1/ρ̄)) rule.
    pub h: Option<usize>,
    pub sigma_u: f64,
    /// Latent dimension; `None` discovers it from the spectrum of N̂.
    pub d_x: Option<usize>,
    pub rank_threshold_ratio: f64,
    pub method: IdMethod,
    pub seed: u64,
    pub eval: EvalMode,
}

impl RunConfig {
    pub fn new(t: usize, method: IdMethod, seed: u64) -> Self {
        Self {
            t,
            h: None,
            sigma_u: 1.0,
            d_x: None,
            rank_threshold_ratio: DEFAULT_RANK_RATIO,
            method,
            seed,
            eval: EvalMode::Analytic,
        }
    }
}

/// Everything one pipeline run produces. Failed stages leave a reason and
/// whatever artifacts already existed; wall-clock timings stay in memory
/// only, so serialized records are byte-stable across reruns.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub config: RunConfig,
    pub h_used: usize,
    pub d_x_used: Option<usize>,
    /// Regression rows actually available, T − d_x + 1.
    pub effective_samples: Option<usize>,
    pub gram_min_eig: Option<f64>,
    pub representation: Option<Representation>,
    pub latent: Option<LatentModel>,
    pub policy: Option<Policy>,
    pub cosysid_trace: Option<CosysidTrace>,
    pub j_hat: Option<f64>,
    pub j_star: Option<f64>,
    pub gap: Option<f64>,
    pub errors: Option<LatentErrors>,
    pub failure: Option<String>,
    #[serde(skip)]
    pub timings: Vec<(String, f64)>,
}

impl RunRecord {
    fn empty(config: &RunConfig, h_used: usize) -> Self {
        Self {
            config: config.clone(),
            h_used,
            d_x_used: None,
            effective_samples: None,
            gram_min_eig: None,
            representation: None,
            latent: None,
            policy: None,
            cosysid_trace: None,
            j_hat: None,
            j_star: None,
            gap: None,
            errors: None,
            failure: None,
            timings: Vec::new(),
        }
    }

    pub fn ok(&self) -> bool {
        self.failure.is_none()
    }

    pub fn summary_line(&self) -> String {
        let fmt = |v: Option<f64>| v.map_or("n/a".to_string(), |x| format!("{x:.6e}"));
        let m_err = self.errors.as_ref().map(|e| e.m_err);
        match &self.failure {
            None => format!(
                "method={} T={} gap={} M_err={}",
                self.config.method,
                self.config.t,
                fmt(self.gap),
                fmt(m_err)
            ),
            Some(reason) => format!(
                "method={} T={} status=failed reason={reason}",
                self.config.method, self.config.t
            ),
        }
    }
}

/// H = ceil(log(100·T) / log(1/ρ(Ā))), the experiment-design default.
pub fn default_history_len(model: &LqgModel, t: usize) -> Result<usize> {
    let gains = DerivedGains::compute(model)?;
    let rho_bar = spectral_radius(&gains.a_bar)?;
    if rho_bar >= 1.0 {
        return Err(Error::Instability { rho: rho_bar, context: "predictor dynamics".into() });
    }
    if rho_bar <= 0.0 {
        return Ok(1);
    }
    let h = ((100.0 * t as f64).ln() / (1.0 / rho_bar).ln()).ceil();
    Ok((h.max(1.0)) as usize)
}

/// One full run: collect a trajectory, then learn/plan/evaluate on it.
pub fn run_corel(config: &RunConfig, model: &LqgModel) -> RunRecord {
    let mut record = RunRecord::empty(config, config.h.unwrap_or(0));
    if config.sigma_u <= 0.0 {
        record.failure = Some("refused: excitation sigma_u must be positive".into());
        return record;
    }
    if config.t <= model.d_x() {
        record.failure = Some(format!(
            "refused: T = {} must exceed the latent dimension {}",
            config.t,
            model.d_x()
        ));
        return record;
    }
    let report = check_assumptions(model);
    if !report.all_pass() {
        record.failure = Some("refused: model fails the standing assumptions".into());
        return record;
    }
    let h_used = match config.h {
        Some(h) if h >= 1 => h,
        Some(_) => {
            record.failure = Some("refused: H must be at least 1".into());
            return record;
        }
        None => match default_history_len(model, config.t) {
            Ok(h) => h,
            Err(e) => {
                record.failure = Some(format!("H selection failed: {e}"));
                return record;
            }
        },
    };
    record.h_used = h_used;

    let start = Instant::now();
    let mut rng = rng_from_seed(config.seed);
    let traj = match rollout_excite(model, config.t, h_used, config.sigma_u, &mut rng, false) {
        Ok(t) => t,
        Err(e) => {
            record.failure = Some(format!("data collection failed: {e}"));
            return record;
        }
    };
    record.timings.push(("collect".into(), start.elapsed().as_secs_f64()));
    let mut rest = run_with_trajectory(config, model, &traj);
    rest.h_used = h_used;
    rest.timings.splice(0..0, record.timings);
    rest
}

/// Learning, planning, and evaluation stages on an already-collected
/// trajectory (exposed so the same data can drive equivalent models).
pub fn run_with_trajectory(config: &RunConfig, model: &LqgModel, traj: &Trajectory) -> RunRecord {
    let h_used = config.h.unwrap_or(traj.total_steps().saturating_sub(config.t).max(1));
    let mut record = RunRecord::empty(config, h_used);
    let mut clock = Instant::now();
    let mut lap = |record: &mut RunRecord, stage: &str| {
        record.timings.push((stage.into(), clock.elapsed().as_secs_f64()));
        clock = Instant::now();
    };

    macro_rules! stage {
        ($record:expr, $what:expr, $call:expr) => {
            match $call {
                Ok(v) => v,
                Err(e) => {
                    $record.failure = Some(format!("{} failed: {e}", $what));
                    return $record;
                }
            }
        };
    }

    // normalized ground truth, used only for error reporting
    let (model_norm, _) = stage!(record, "normalization", normalize_model(model));
    let gains_norm = stage!(record, "normalized gains", DerivedGains::compute(&model_norm));
    let m_star = true_repr(&gains_norm, h_used);
    lap(&mut record, "ground-truth");

    let dataset = stage!(
        record,
        "history construction",
        build_histories(traj, h_used, model.d_x(), &model.r)
    );
    record.effective_samples = Some(dataset.n);
    lap(&mut record, "histories");

    let fit = stage!(record, "cost regression", quadratic_regress(&dataset.hs, &dataset.cbar));
    record.gram_min_eig = Some(fit.gram_min_eig);
    let spectrum = stage!(record, "spectrum", crate::matstat::sym_eig(&fit.n_hat));
    let eigvals: Vec<f64> = spectrum.values.iter().cloned().collect();
    let d_x_used = match config.d_x {
        Some(d) => d,
        None => {
            let d = stage!(
                record,
                "rank discovery",
                discover_rank(&eigvals, config.rank_threshold_ratio)
            );
            if d == 0 {
                record.failure = Some("rank discovery found no positive eigenvalues".into());
                return record;
            }
            d
        }
    };
    record.d_x_used = Some(d_x_used);
    let rep = stage!(record, "factorization", factor_psd(&fit.n_hat, d_x_used));
    record.representation = Some(rep.clone());
    lap(&mut record, "representation");

    let z_now = stage!(record, "encoding", encode_rows(&rep.m_hat, &dataset.hs));
    let z_next = stage!(record, "encoding", encode_rows(&rep.m_hat, &dataset.h_next));
    let (a_hat, b_hat) = match config.method {
        IdMethod::Explicit => {
            let mut z_stack = Mat::zeros(dataset.n + 1, d_x_used);
            z_stack.view_mut((0, 0), (dataset.n, d_x_used)).copy_from(&z_now);
            z_stack.view_mut((dataset.n, 0), (1, d_x_used)).copy_from(&z_next.row(dataset.n - 1));
            let (a, b, _) = stage!(record, "system identification", sysid_explicit(&z_stack, &dataset.u_now));
            (a, b)
        }
        IdMethod::Implicit => {
            let (a, b, trace) =
                stage!(record, "cost-driven system identification", cosysid(&dataset, &rep.m_hat, d_x_used));
            record.cosysid_trace = Some(trace);
            (a, b)
        }
    };
    lap(&mut record, "dynamics");

    let (q_hat, cost_offset) = stage!(
        record,
        "cost learning",
        learn_cost(&z_now, &dataset.u_now, &dataset.c_now, &model.r)
    );
    let latent = LatentModel {
        a_hat,
        b_hat,
        q_hat,
        r: model.r.clone(),
        cost_offset,
        method: config.method,
    };
    record.latent = Some(latent.clone());
    lap(&mut record, "cost");

    let k_hat = stage!(record, "planning", plan(&latent));
    let policy = Policy { m: rep.m_hat.clone(), k: k_hat.clone(), h: h_used };
    record.policy = Some(policy.clone());
    lap(&mut record, "planning");

    let j_hat = match config.eval {
        EvalMode::Analytic => stage!(record, "policy evaluation", evaluate_analytic(model, &policy)),
        EvalMode::Rollout { t_eval, burn_in } => {
            let mut eval_rng = crate::matstat::rng_stream(config.seed, 1);
            stage!(
                record,
                "policy evaluation",
                evaluate_rollout(model, &policy, t_eval, burn_in, &mut eval_rng)
            )
        }
    };
    let j_star = stage!(record, "optimal cost", optimal_average_cost(model));
    record.j_hat = Some(j_hat);
    record.j_star = Some(j_star);
    record.gap = Some(j_hat - j_star);
    lap(&mut record, "evaluation");

    let errs = stage!(
        record,
        "error reporting",
        latent_errors(
            &rep.m_hat,
            &latent.a_hat,
            &latent.b_hat,
            &latent.q_hat,
            &k_hat,
            &m_star,
            &model_norm.a,
            &model_norm.b,
            &model_norm.q,
            &gains_norm.k_star,
        )
    );
    record.errors = Some(errs);
    lap(&mut record, "reporting");
    record
}

/// Cartesian sweep over methods × sample counts × seeds. Cells run
/// concurrently; the output order is (method, T, seed) regardless of
/// scheduling, and each cell derives its RNG from its own seed.
pub fn run_sweep(
    model: &LqgModel,
    ts: &[usize],
    seeds: &[u64],
    methods: &[IdMethod],
    base: &RunConfig,
) -> Vec<RunRecord> {
    let mut cells = Vec::new();
    for method in methods {
        for &t in ts {
            for &seed in seeds {
                let mut config = base.clone();
                config.t = t;
                config.seed = seed;
                config.method = *method;
                cells.push(config);
            }
        }
    }
    cells.par_iter().map(|config| run_corel(config, model)).collect()
}

/// Median helper for sweep analysis (odd/even counts both fine).
pub fn median(values: &[f64]) -> f64 {
    let mut v: Vec<f64> = values.to_vec();
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    if v.is_empty() {
        f64::NAN
    } else if v.len() % 2 == 1 {
        v[v.len() / 2]
    } else {
        0.5 * (v[v.len() / 2 - 1] + v[v.len() / 2])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ref_model() -> LqgModel {
        LqgModel::new(
            Mat::from_row_slice(2, 2, &[0.8, 0.1, 0.0, 0.7]),
            Mat::from_row_slice(2, 1, &[1.0, 0.5]),
            Mat::identity(2, 2),
            Mat::identity(2, 2),
            Mat::from_element(1, 1, 1.0),
            Mat::identity(2, 2) * 0.05,
            Mat::identity(2, 2) * 0.05,
            Mat::identity(2, 2) * 0.1,
        )
        .unwrap()
    }

    fn quick_config(t: usize, method: IdMethod, seed: u64) -> RunConfig {
        let mut c = RunConfig::new(t, method, seed);
        c.h = Some(4);
        c.d_x = Some(2);
        c
    }

    #[test]
    fn zero_excitation_is_refused() {
        let mut config = quick_config(2_000, IdMethod::Explicit, 1);
        config.sigma_u = 0.0;
        let record = run_corel(&config, &ref_model());
        assert!(record.failure.as_deref().unwrap_or("").contains("refused"));
        assert!(record.gap.is_none());
    }

    #[test]
    fn failing_model_is_refused() {
        let mut model = ref_model();
        model.a[(0, 0)] = 1.05;
        let record = run_corel(&quick_config(2_000, IdMethod::Explicit, 1), &model);
        assert!(record.failure.as_deref().unwrap_or("").contains("assumptions"));
    }

    #[test]
    fn explicit_run_produces_full_artifact_set() {
        let record = run_corel(&quick_config(8_000, IdMethod::Explicit, 7), &ref_model());
        assert!(record.ok(), "failure: {:?}", record.failure);
        assert!(record.representation.is_some());
        assert!(record.latent.is_some());
        assert!(record.policy.is_some());
        assert!(record.errors.is_some());
        assert!(record.cosysid_trace.is_none());
        let gap = record.gap.unwrap();
        assert!(gap > -1e-8, "gap {gap}");
        assert_eq!(record.effective_samples, Some(8_000 - 2 + 1));
    }

    #[test]
    fn implicit_run_attaches_trace() {
        let record = run_corel(&quick_config(8_000, IdMethod::Implicit, 7), &ref_model());
        assert!(record.ok(), "failure: {:?}", record.failure);
        assert!(record.cosysid_trace.is_some());
        assert!(record.gap.unwrap() > -1e-8);
    }

    #[test]
    fn records_are_seed_deterministic() {
        let config = quick_config(3_000, IdMethod::Implicit, 42);
        let a = run_corel(&config, &ref_model());
        let b = run_corel(&config, &ref_model());
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    }

    #[test]
    fn single_cell_sweep_matches_run_corel() {
        let model = ref_model();
        let base = quick_config(3_000, IdMethod::Explicit, 5);
        let sweep = run_sweep(&model, &[3_000], &[5], &[IdMethod::Explicit], &base);
        assert_eq!(sweep.len(), 1);
        let single = run_corel(&base, &model);
        assert_eq!(
            serde_json::to_string(&sweep[0]).unwrap(),
            serde_json::to_string(&single).unwrap()
        );
    }

    #[test]
    fn sweep_is_ordered_and_complete() {
        let model = ref_model();
        let base = quick_config(2_000, IdMethod::Explicit, 0);
        let records = run_sweep(
            &model,
            &[2_000, 4_000],
            &[1, 2],
            &[IdMethod::Explicit, IdMethod::Implicit],
            &base,
        );
        assert_eq!(records.len(), 8);
        let keys: Vec<_> = records
            .iter()
            .map(|r| (r.config.method.to_string(), r.config.t, r.config.seed))
            .collect();
        let mut sorted = keys.clone();
        sorted.sort();
        assert_eq!(keys, sorted);
    }

    #[test]
    fn gap_is_invariant_to_the_parameterization() {
        // the raw model and its normalized twin generate the same observable
        // process; learning from the same trajectory must give gaps equal up
        // to numerics
        let model = ref_model();
        let (norm, _) = normalize_model(&model).unwrap();
        let config = quick_config(6_000, IdMethod::Explicit, 11);
        let mut rng = rng_from_seed(config.seed);
        let traj = rollout_excite(&model, config.t, 4, config.sigma_u, &mut rng, false).unwrap();
        let rec_raw = run_with_trajectory(&config, &model, &traj);
        let rec_norm = run_with_trajectory(&config, &norm, &traj);
        assert!(rec_raw.ok() && rec_norm.ok());
        let (g1, g2) = (rec_raw.gap.unwrap(), rec_norm.gap.unwrap());
        assert!(
            (g1 - g2).abs() <= 0.05 * g1.abs().max(g2.abs()),
            "raw gap {g1}, normalized gap {g2}"
        );
    }

    #[test]
    fn default_history_rule() {
        let model = ref_model();
        let h = default_history_len(&model, 40_000).unwrap();
        // ρ(Ā) ≈ 0.33 for this model: ceil(ln(4e6)/ln(1/0.33)) = 14
        assert!((10..=20).contains(&h), "H = {h}");
        let h_small = default_history_len(&model, 100).unwrap();
        assert!(h_small < h);
    }

    #[test]
    fn run_record_json_round_trips() {
        let record = run_corel(&quick_config(2_000, IdMethod::Implicit, 3), &ref_model());
        let json = serde_json::to_string(&record).unwrap();
        let back: RunRecord = serde_json::from_str(&json).unwrap();
        assert_eq!(json, serde_json::to_string(&back).unwrap());
    }

    #[test]
    fn rollout_eval_mode_works() {
        let mut config = quick_config(4_000, IdMethod::Explicit, 9);
        config.eval = EvalMode::Rollout { t_eval: 200_000, burn_in: 500 };
        let record = run_corel(&config, &ref_model());
        assert!(record.ok(), "failure: {:?}", record.failure);
        // Monte-Carlo J may dip slightly below the analytic J*
        assert!(record.gap.unwrap() > -0.05 * record.j_star.unwrap());
    }
}
