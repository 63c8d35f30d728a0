use std::sync::Arc;

use lilo_core::env::oracle::{AnswerMode, OracleDm};
use lilo_core::gp::PosteriorModel;
use lilo_core::language::agent::{AgentConfig, Context, LlmAgent, OracleAgent};
use lilo_core::language::dm::ScriptedDm;
use lilo_core::language::{LlmClient, ScriptedBackend, TranscriptLog};
use lilo_core::optimizer::common::{acquire, derive_seed, evaluate, x_features, y_features, STREAM_PAIRS};
use lilo_core::optimizer::proxy::{fit_proxy_models_pairwise, fit_proxy_models_scalar};
use lilo_core::optimizer::{
    run_llm_2step, run_llm_direct, run_method, run_preferential_bo, run_true_utility_bo, LanguageLoop, LoopConfig,
    Method, ProxyMode, Trace, GOAL_QUESTION,
};
use lilo_core::records::Arm;
use lilo_core::{Environment, LiloError};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn synthetic_agent() -> Arc<LlmAgent> {
    let client = LlmClient::new(Arc::new(ScriptedBackend::synthetic()), Arc::new(TranscriptLog::in_memory()));
    Arc::new(LlmAgent::new(client, AgentConfig { n_samples: 2, max_failed_replicates: 2, seed: 3 }))
}

fn small(trials: usize, batch: usize) -> LoopConfig {
    let mut cfg = LoopConfig { trials, batch_size: Some(batch), n_pairs: 8, seed: 17, ..LoopConfig::default() };
    cfg.acq.restarts = 2;
    cfg.acq.raw_samples = 64;
    cfg
}

fn dm() -> ScriptedDm {
    ScriptedDm::new(vec!["Keep the first outcome low.".into(), "No other preference.".into()])
}

fn random_arms(env: &Environment, n: usize, seed: u64) -> Vec<Arm> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let units: Vec<Vec<f64>> = (0..n).map(|_| (0..env.dim()).map(|_| rng.random()).collect()).collect();
    evaluate(env, 1, &units).unwrap()
}

fn ctx<'a>(env: &'a Environment, arms: &'a [Arm], fb: &'a [lilo_core::records::QaPair]) -> Context<'a> {
    Context { trial: 1, x_names: &env.space.names, y_names: &env.outcome_names, arms, feedback: fb }
}

/// Kendall's tau-a by brute force.
fn kendall_tau(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            s += ((a[i] - a[j]) * (b[i] - b[j])).signum();
        }
    }
    s / (n * (n - 1) / 2) as f64
}

#[test]
fn schedule_shape_single_trial() {
    let env = Environment::from_id("dtlz2-l1").unwrap();
    let cfg = small(1, 2);
    let trace = run_method(Method::Lilo, &env, &cfg, Some(synthetic_agent()), Some(&dm())).unwrap();
    assert_eq!(trace.records.len(), 2);
    assert_eq!(trace.records[0].trial, 0);
    assert!(trace.records[0].arms.is_empty());
    assert_eq!(trace.records[0].feedback[0].question, GOAL_QUESTION);
    assert_eq!(trace.records[0].feedback[0].answer, env.seed_message);
    assert_eq!(trace.records[0].feedback.len(), 1 + cfg.feedback_batch);
    let t1 = &trace.records[1];
    assert_eq!(t1.arms.len(), 2);
    assert_eq!(t1.feedback.len(), cfg.feedback_batch);
    assert_eq!(t1.highlighted, ["1_0", "1_1"]);
    assert_eq!(t1.pair_labels.len(), 1);
    assert!(t1.models.contains_key("My") && t1.models.contains_key("Mx"));
    assert_eq!(t1.max_utility, Some(t1.utilities.iter().copied().fold(f64::NEG_INFINITY, f64::max)));
}

#[test]
fn feedback_and_experiment_counts() {
    let env = Environment::from_id("dtlz2-beta").unwrap();
    let cfg = small(3, 3);
    let agent = synthetic_agent();
    let mut run = LanguageLoop::start(Method::Lilo, env, cfg.clone(), agent).unwrap();
    let answer = |q: &[String]| q.iter().map(|_| "ok".to_string()).collect::<Vec<_>>();
    let first = run.pending_questions().to_vec();
    run.submit_answers(answer(&first)).unwrap();
    for n in 1..=3 {
        assert_eq!(run.trial(), n);
        assert_eq!(run.arms().len(), n * 3);
        let q = run.pending_questions().to_vec();
        run.submit_answers(answer(&q)).unwrap();
        // seed exchange plus (n + 1) batches of answered questions
        assert_eq!(run.feedback().len(), 1 + (n + 1) * cfg.feedback_batch);
    }
    assert!(run.is_finished());
    assert!(matches!(run.submit_answers(vec![]), Err(LiloError::Config(_))));
}

#[test]
fn wrong_answer_count_is_rejected() {
    let env = Environment::from_id("dtlz2-l1").unwrap();
    let mut run = LanguageLoop::start(Method::Lilo, env, small(1, 2), synthetic_agent()).unwrap();
    assert!(matches!(run.submit_answers(vec!["only one".into()]), Err(LiloError::Input(_))));
    assert_eq!(run.trial(), 0);
    assert_eq!(run.pending_questions().len(), 2);
}

#[test]
fn prior_text_drives_trial_one() {
    let env = Environment::from_id("dtlz2-l1").unwrap();
    let mut cfg = small(1, 3);
    let plain = run_method(Method::Lilo, &env, &cfg, Some(synthetic_agent()), Some(&dm())).unwrap();
    cfg.prior_text = Some("Keep every input near the middle.".into());
    let primed = run_method(Method::Lilo, &env, &cfg, Some(synthetic_agent()), Some(&dm())).unwrap();
    // the synthetic backend proposes (i + 1) / (n + 1) in every coordinate
    for (j, arm) in primed.records[1].arms.iter().enumerate() {
        assert!(arm.x_unit.iter().all(|&v| v == (j + 1) as f64 / 4.0));
    }
    assert_ne!(plain.records[1].arms[0].x_unit, primed.records[1].arms[0].x_unit);
}

#[test]
fn oracle_loop_max_so_far_is_monotone() {
    let env = Environment::from_id("dtlz2-piecewise").unwrap();
    let cfg = LoopConfig { trials: 8, batch_size: Some(8), seed: 5, ..LoopConfig::default() };
    let agent = Arc::new(OracleAgent::new(env.clone()));
    let oracle = OracleDm::new(env.clone(), AnswerMode::TemplatedText);
    let trace = run_method(Method::Lilo, &env, &cfg, Some(agent), Some(&oracle)).unwrap();
    let curve = trace.max_so_far();
    assert_eq!(curve.len(), 8);
    assert!(curve.windows(2).all(|w| w[1] >= w[0]));
    assert!(curve[7] >= curve[0]);
    for r in trace.trials() {
        assert!(r.best_arm_utility.unwrap() <= r.max_utility.unwrap());
    }
}

#[test]
fn two_experiments_give_one_pair() {
    let env = Environment::from_id("dtlz2-l1").unwrap();
    let arms = random_arms(&env, 2, 1);
    let agent = OracleAgent::new(env.clone());
    let cfg = LoopConfig { n_pairs: 64, ..LoopConfig::default() };
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let fit = fit_proxy_models_pairwise(&env, &agent, &ctx(&env, &arms, &[]), None, None, &cfg, true, &mut rng).unwrap();
    assert_eq!(fit.pair_labels.len(), 1);
    assert!(fit.mx.is_some());
}

#[test]
fn first_pairs_reproduce_seeded_sample() {
    let env = Environment::from_id("dtlz2-l1").unwrap();
    let arms = random_arms(&env, 6, 2);
    let agent = OracleAgent::new(env.clone());
    let cfg = LoopConfig { n_pairs: 4, ..LoopConfig::default() };
    let fit = fit_proxy_models_pairwise(
        &env, &agent, &ctx(&env, &arms, &[]), None, None, &cfg, false, &mut ChaCha8Rng::seed_from_u64(9),
    )
    .unwrap();
    let grid: Vec<(usize, usize)> = (0..6).flat_map(|i| ((i + 1)..6).map(move |j| (i, j))).collect();
    let expect: Vec<(String, String)> = sample(&mut ChaCha8Rng::seed_from_u64(9), grid.len(), 4)
        .into_iter()
        .map(|k| (arms[grid[k].0].index.clone(), arms[grid[k].1].index.clone()))
        .collect();
    let got: Vec<(String, String)> = fit.pair_labels.iter().map(|p| p.pair.clone()).collect();
    assert_eq!(got, expect);
}

#[test]
fn oracle_labels_recover_the_ranking() {
    let env = Environment::from_id("dtlz2-piecewise").unwrap();
    let arms = random_arms(&env, 12, 4);
    let agent = OracleAgent::new(env.clone());
    let cfg = LoopConfig { n_pairs: 64, seed: 1, ..LoopConfig::default() };
    let fit = fit_proxy_models_pairwise(
        &env, &agent, &ctx(&env, &arms, &[]), None, None, &cfg, true, &mut ChaCha8Rng::seed_from_u64(1),
    )
    .unwrap();
    let truth: Vec<f64> = arms.iter().map(|a| env.utility(&a.y).unwrap()).collect();
    let mx = fit.mx.unwrap();
    let pred = mx.posterior(&x_features(&arms)).unwrap().mean;
    let tau = kendall_tau(&pred, &truth);
    assert!(tau >= 0.8, "tau = {tau}");
}

#[test]
fn exact_scalar_stub_is_reproduced() {
    let env = Environment::from_id("dtlz2-l1").unwrap();
    let arms = random_arms(&env, 10, 6);
    let agent = OracleAgent::new(env.clone());
    let fit = fit_proxy_models_scalar(&env, &agent, &ctx(&env, &arms, &[]), &LoopConfig::default(), true).unwrap();
    let pred = fit.mx.unwrap().posterior(&x_features(&arms)).unwrap().mean;
    for (a, p) in arms.iter().zip(pred) {
        let g = env.utility(&a.y).unwrap();
        assert!((p - g).abs() < 0.05, "{p} vs {g}");
    }
}

#[test]
fn constant_stub_gives_flat_mean_and_valid_candidates() {
    let env = Environment::from_id("dtlz2-l1").unwrap();
    let arms = random_arms(&env, 6, 8);
    let agent = synthetic_agent();
    let cfg = small(2, 3);
    let fit = fit_proxy_models_scalar(&env, agent.as_ref(), &ctx(&env, &arms, &[]), &cfg, true).unwrap();
    let probe = random_arms(&env, 5, 99);
    for m in [&fit.my, fit.mx.as_ref().unwrap()] {
        let feats = if m.input_dim() == env.dim() { x_features(&probe) } else { y_features(&env, &probe) };
        for v in m.posterior(&feats).unwrap().mean {
            assert!((v - 0.5).abs() < 1e-3, "{v}");
        }
    }
    let next = acquire(fit.mx.as_ref().unwrap(), &arms, &cfg, 2, 3).unwrap();
    assert_eq!(next.len(), 3);
    assert!(next.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
}

#[test]
fn single_arm_scalar_fit() {
    let env = Environment::from_id("dtlz2-l1").unwrap();
    let arms = random_arms(&env, 1, 10);
    let agent = OracleAgent::new(env.clone());
    let fit = fit_proxy_models_scalar(&env, &agent, &ctx(&env, &arms, &[]), &LoopConfig::default(), true).unwrap();
    assert!(fit.my.posterior(&y_features(&env, &arms)).unwrap().mean[0].is_finite());
}

#[test]
fn scalar_mode_runs_with_one_arm_per_trial() {
    let env = Environment::from_id("dtlz2-l1").unwrap();
    let cfg = LoopConfig { proxy_mode: ProxyMode::Scalar, ..small(2, 1) };
    let agent = Arc::new(OracleAgent::new(env.clone()));
    let trace = run_method(Method::LiloScalar, &env, &cfg, Some(agent), Some(&dm())).unwrap();
    assert_eq!(trace.trials().count(), 2);
    assert_eq!(trace.records[1].utility_labels.len(), 1);
    assert_eq!(trace.records[2].utility_labels.len(), 2);
}

#[test]
fn true_utility_bo_labels_grow_by_batch() {
    let env = Environment::from_id("dtlz2-l1").unwrap();
    let cfg = small(3, 4);
    let trace = run_true_utility_bo(&env, &cfg).unwrap();
    assert_eq!(trace.records.len(), 3);
    let first: Vec<String> = trace.records[0].utility_labels.iter().map(|l| l.arm.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, STREAM_PAIRS, 0));
    let expect: Vec<String> = sample(&mut rng, 4, 2).into_iter().map(|i| format!("1_{i}")).collect();
    assert_eq!(first, expect);
    let arms = trace.arms();
    for r in &trace.records {
        assert_eq!(r.utility_labels.len(), cfg.feedback_batch);
        for l in &r.utility_labels {
            let a = arms.iter().find(|a| a.index == l.arm).unwrap();
            assert_eq!(l.values, vec![env.utility(&a.y).unwrap()]);
        }
    }
}

#[test]
fn preferential_bo_adds_batch_comparisons() {
    let env = Environment::from_id("dtlz2-piecewise").unwrap();
    let cfg = small(3, 4);
    let trace = run_preferential_bo(&env, &cfg).unwrap();
    let arms = trace.arms();
    let g = |i: &str| env.utility(&arms.iter().find(|a| a.index == i).unwrap().y).unwrap();
    for r in &trace.records {
        assert_eq!(r.pair_labels.len(), cfg.feedback_batch);
        for p in &r.pair_labels {
            assert_eq!(p.votes, vec![u8::from(g(&p.pair.0) < g(&p.pair.1))]);
        }
    }
}

#[test]
fn runs_are_bit_identical() {
    let env = Environment::from_id("dtlz2-piecewise").unwrap();
    let cfg = small(3, 4);
    let go = |m: Method| -> Trace {
        let agent = Arc::new(OracleAgent::new(env.clone()));
        let oracle = OracleDm::new(env.clone(), AnswerMode::TemplatedText);
        run_method(m, &env, &cfg, Some(agent), Some(&oracle)).unwrap()
    };
    for m in [Method::Lilo, Method::LiloScalar, Method::TrueUtilityBo, Method::PreferentialBo] {
        assert_eq!(go(m).to_jsonl().unwrap(), go(m).to_jsonl().unwrap(), "{}", m.as_str());
    }
    let a = run_llm_direct(&env, synthetic_agent(), &dm(), &cfg).unwrap();
    let b = run_llm_direct(&env, synthetic_agent(), &dm(), &cfg).unwrap();
    assert_eq!(a.to_jsonl().unwrap(), b.to_jsonl().unwrap());
}

#[test]
fn two_step_fits_only_the_outcome_model() {
    let env = Environment::from_id("dtlz2-l1").unwrap();
    let trace = run_llm_2step(&env, synthetic_agent(), &dm(), &small(2, 2)).unwrap();
    for r in trace.trials() {
        assert!(r.models.contains_key("My"));
        assert!(!r.models.contains_key("Mx"));
        assert!(r.highlighted.is_empty());
    }
    // trial-2 candidates come from the synthetic backend
    assert_eq!(trace.records[2].arms[1].x_unit, vec![2.0 / 3.0; env.dim()]);
}

#[test]
fn direct_fits_nothing_but_tracks_max() {
    let env = Environment::from_id("dtlz2-l1").unwrap();
    let trace = run_llm_direct(&env, synthetic_agent(), &dm(), &small(2, 2)).unwrap();
    for r in trace.trials() {
        assert!(r.models.is_empty());
        assert!(r.max_utility.is_some());
        assert!(r.best_arm.is_none());
    }
}

#[test]
fn language_methods_need_agent_and_dm() {
    let env = Environment::from_id("dtlz2-l1").unwrap();
    let err = run_method(Method::Lilo, &env, &small(1, 2), None, None).unwrap_err();
    assert!(matches!(err, LiloError::Config(_)));
    let oracle_only = Arc::new(OracleAgent::new(env.clone()));
    let err = run_llm_direct(&env, oracle_only, &dm(), &small(2, 2)).unwrap_err();
    assert!(matches!(err, LiloError::Trial { trial: 2, .. }), "{err}");
}

#[test]
fn trace_jsonl_roundtrip() {
    let env = Environment::from_id("thermal-a").unwrap();
    let trace = run_method(
        Method::Lilo,
        &env,
        &small(1, 3),
        Some(Arc::new(OracleAgent::new(env.clone()))),
        Some(&OracleDm::new(env.clone(), AnswerMode::TemplatedText)),
    )
    .unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.jsonl");
    trace.write_jsonl(&path).unwrap();
    assert_eq!(Trace::read_jsonl(&path).unwrap(), trace);
}
