//! Runs the prompt-response fixtures through the agent and decision-maker
//! entry points with a scripted backend and a retry budget of 2.

use std::sync::Arc;

use lilo_core::language::agent::{Agent, AgentConfig, Context, LlmAgent};
use lilo_core::language::dm::{DecisionMaker, LlmDm};
use lilo_core::language::{LlmClient, Purpose, ScriptEntry, ScriptedBackend, TranscriptLog};
use lilo_core::records::{Arm, QaPair};
use lilo_core::Environment;
use serde::Deserialize;
use serde_json::Value;

pub const CASES: &str = include_str!("../../fixtures/parser_cases.json");

#[derive(Deserialize)]
pub struct Case {
    pub name: String,
    pub op: String,
    pub n: usize,
    pub responses: Vec<String>,
    pub expect: Value,
}

fn purpose(op: &str) -> Purpose {
    match op {
        "init-questions" => Purpose::InitQuestions,
        "questions" => Purpose::Questions,
        "pairwise" => Purpose::PairwiseLabel,
        "scalar" => Purpose::ScalarUtility,
        "summary" => Purpose::Summary,
        "candidates-2step" => Purpose::Candidates2step,
        "candidates-direct" => Purpose::CandidatesDirect,
        "dm" => Purpose::DmAnswers,
        other => panic!("unknown fixture op {other}"),
    }
}

fn client(case: &Case) -> LlmClient {
    let p = purpose(&case.op);
    let script = case.responses.iter().map(|r| ScriptEntry { purpose: p, completion: r.clone() }).collect();
    LlmClient::new(Arc::new(ScriptedBackend::new(script, false)), Arc::new(TranscriptLog::in_memory()))
        .with_retry_budget(2)
}

pub fn arms() -> Vec<Arm> {
    vec![
        Arm { index: "1_0".into(), trial: 1, x: vec![0.2, 0.4], x_unit: vec![0.2, 0.4], y: vec![0.1, 0.5, 0.3, 0.9] },
        Arm { index: "1_1".into(), trial: 1, x: vec![0.7, 0.1], x_unit: vec![0.7, 0.1], y: vec![0.6, 0.2, 0.8, 0.4] },
    ]
}

/// `Ok(value)` is the structured output as JSON, `Err` an error message.
pub fn run_case(case: &Case, env: &Environment) -> Result<Value, String> {
    let x_names = vec!["x_1".to_string(), "x_2".to_string()];
    let y_names: Vec<String> = (1..=4).map(|i| format!("y_{i}")).collect();
    let arms = arms();
    let feedback = vec![QaPair::new("What is your goal?", "Keep y_1 low.")];
    let ctx = Context { trial: 1, x_names: &x_names, y_names: &y_names, arms: &arms, feedback: &feedback };
    let cfg = AgentConfig { n_samples: 1, max_failed_replicates: 0, seed: 7 };
    let err = |e: lilo_core::LiloError| e.to_string();
    let out = match case.op.as_str() {
        "dm" => {
            let dm = LlmDm { client: client(case), environment: env.clone(), seed: 1 };
            let qs: Vec<String> = (0..case.n).map(|i| format!("question {i}")).collect();
            serde_json::to_value(dm.answer(1, &qs, &arms).map_err(err)?)
        }
        op => {
            let agent = LlmAgent::new(client(case), cfg);
            match op {
                "init-questions" => serde_json::to_value(agent.init_questions(&ctx, case.n).map_err(err)?),
                "questions" => serde_json::to_value(agent.questions(&ctx, Some(&[0, 1]), case.n).map_err(err)?),
                "pairwise" => serde_json::to_value(agent.pairwise_pref(&ctx, (0, 1), "").map_err(err)?.votes),
                "scalar" => {
                    let est = agent.estimate_utilities(&ctx, "").map_err(err)?;
                    serde_json::to_value(est.iter().map(|v| v.iter().sum::<f64>() / v.len() as f64).collect::<Vec<_>>())
                }
                "summary" => serde_json::to_value(agent.summarize(&ctx).map_err(err)?),
                "candidates-2step" => {
                    serde_json::to_value(agent.candidates_two_step(&ctx, &[0.4, 0.6], case.n).map_err(err)?)
                }
                "candidates-direct" => serde_json::to_value(agent.candidates_direct(&ctx, case.n).map_err(err)?),
                other => panic!("unknown fixture op {other}"),
            }
        }
    };
    out.map_err(|e| e.to_string())
}

/// `(name, passed, detail)` for every fixture.
pub fn run_all() -> Vec<(String, bool, String)> {
    let cases: Vec<Case> = serde_json::from_str(CASES).expect("fixture file parses");
    let env = Environment::from_id("dtlz2-l1").expect("registered environment");
    cases
        .iter()
        .map(|c| {
            let got = run_case(c, &env);
            let passed = match (&got, &c.expect) {
                (Err(_), Value::Null) => true,
                (Ok(v), want) if !want.is_null() => v == want,
                _ => false,
            };
            (c.name.clone(), passed, format!("{got:?}"))
        })
        .collect()
}
