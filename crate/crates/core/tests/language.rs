mod common;

use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Read, Write};
use std::net::TcpListener;
use std::sync::Arc;

use common::parser_cases;
use lilo_core::env::oracle::{AnswerMode, OracleDm};
use lilo_core::language::agent::{feedback_text, outcome_table, pair_table, Agent, AgentConfig, Context, LlmAgent, OracleAgent};
use lilo_core::language::prompts;
use lilo_core::language::{
    ChatBackend, ChatMessage, ChatRequest, HttpBackend, HttpConfig, LlmClient, Purpose, ReplayBackend, ScriptEntry,
    ScriptedBackend, TranscriptLog,
};
use lilo_core::records::{Arm, QaPair};
use lilo_core::{Environment, LiloError, SearchSpace};
use proptest::prelude::*;

fn names(prefix: &str, n: usize) -> Vec<String> {
    (1..=n).map(|i| format!("{prefix}_{i}")).collect()
}

fn arms(ys: &[[f64; 4]]) -> Vec<Arm> {
    ys.iter()
        .enumerate()
        .map(|(j, y)| Arm { index: Arm::index_for(1, j), trial: 1, x: vec![0.5, 0.5], x_unit: vec![0.5, 0.5], y: y.to_vec() })
        .collect()
}

fn scripted(purpose: Purpose, responses: &[&str]) -> Arc<ScriptedBackend> {
    Arc::new(ScriptedBackend::new(
        responses.iter().map(|r| ScriptEntry { purpose, completion: r.to_string() }).collect(),
        false,
    ))
}

fn agent_with(backend: Arc<dyn ChatBackend>, n_samples: usize) -> (LlmAgent, Arc<TranscriptLog>) {
    let log = Arc::new(TranscriptLog::in_memory());
    let client = LlmClient::new(backend, log.clone());
    (LlmAgent::new(client, AgentConfig { n_samples, max_failed_replicates: 2, seed: 11 }), log)
}

struct Fixture {
    x: Vec<String>,
    y: Vec<String>,
    arms: Vec<Arm>,
    fb: Vec<QaPair>,
}

impl Fixture {
    fn new() -> Self {
        Self {
            x: names("x", 2),
            y: names("y", 4),
            arms: arms(&[[0.1, 0.5, 0.3, 0.9], [0.6, 0.2, 0.8, 0.4], [0.3, 0.3, 0.3, 0.3]]),
            fb: vec![QaPair::new("What is your goal?", "Keep y_1 low.")],
        }
    }

    fn ctx(&self) -> Context<'_> {
        Context { trial: 1, x_names: &self.x, y_names: &self.y, arms: &self.arms, feedback: &self.fb }
    }
}

#[test]
fn pairwise_prompt_has_option_rows() {
    let f = Fixture::new();
    let ctx = f.ctx();
    let vars = BTreeMap::from([
        ("y_names".to_string(), prompts::py_list(&f.y)),
        ("experiment_data".to_string(), outcome_table(&ctx)),
        ("human_feedback".to_string(), feedback_text(&f.fb)),
        ("human_feedback_summary".to_string(), String::new()),
        ("pair_str".to_string(), pair_table(&ctx, (0, 1))),
    ]);
    let text = prompts::pairwise().render(&vars).unwrap();
    assert!(text.contains("| option_0 | 1_0 |"));
    assert!(text.contains("| option_1 | 1_1 |"));
    assert!(text.contains("\"answer\" : 0 or 1"));
    assert!(!text.contains("{{"));
}

#[test]
fn question_prompt_lists_requested_keys() {
    let vars = BTreeMap::from([
        ("y_names".to_string(), "['y_1']".to_string()),
        ("human_feedback".to_string(), feedback_text(&[])),
        ("n_questions".to_string(), "2".to_string()),
    ]);
    let text = prompts::init_questions().render(&vars).unwrap();
    assert!(text.contains("\"q1\" : <question1>"));
    assert!(text.contains("\"q2\" : <question2>"));
    assert!(text.contains("exactly 2 most important questions"));
    assert!(text.contains("(none yet)"));
}

#[test]
fn init_questions_paths() {
    let f = Fixture::new();
    let (a, _) = agent_with(scripted(Purpose::InitQuestions, &["```json\n{\"q1\": \"first\", \"q2\": \"second\"}\n```"]), 5);
    assert_eq!(a.init_questions(&f.ctx(), 2).unwrap(), ["first", "second"]);

    let (a, _) = agent_with(scripted(Purpose::InitQuestions, &["Let me think.\n```json\n{\"q1\": \"only\"}\n```"]), 5);
    assert_eq!(a.init_questions(&f.ctx(), 1).unwrap(), ["only"]);

    let (a, log) = agent_with(scripted(Purpose::InitQuestions, &["bad", "worse", "{\"q2\": 1}"]), 5);
    match a.init_questions(&f.ctx(), 2).unwrap_err() {
        LiloError::Parse { transcripts, purpose, .. } => {
            assert_eq!(purpose, "init-questions");
            assert_eq!(transcripts, ["bad", "worse", "{\"q2\": 1}"]);
        }
        e => panic!("unexpected {e}"),
    }
    let recs = log.records();
    assert_eq!(recs.len(), 3);
    assert!(recs.iter().all(|r| r.parse_status.starts_with("error")));
}

#[test]
fn highlighted_indices_rendered_sorted() {
    let f = Fixture::new();
    let (a, log) = agent_with(scripted(Purpose::Questions, &["{\"q1\": \"x\"}"]), 5);
    a.questions(&f.ctx(), Some(&[2, 0]), 1).unwrap();
    assert!(log.records()[0].prompt.contains("ask the decision maker about ['1_0', '1_2']."));
    let (a, log) = agent_with(scripted(Purpose::Questions, &["{\"q1\": \"x\"}"]), 5);
    a.questions(&f.ctx(), None, 1).unwrap();
    assert!(!log.records()[0].prompt.contains("Here are some points"));
    assert!(a.questions(&f.ctx(), Some(&[7]), 1).is_err());
}

#[test]
fn label_votes() {
    let f = Fixture::new();
    let (a, _) = agent_with(scripted(Purpose::PairwiseLabel, &["{\"answer\": 0}"]), 5);
    assert_eq!(a.pairwise_pref(&f.ctx(), (0, 1), "").unwrap().votes, [0, 0, 0, 0, 0]);

    let (a, _) = agent_with(scripted(Purpose::PairwiseLabel, &["{\"answer\": 0}", "{\"answer\": 1}"]), 5);
    let v = a.pairwise_pref(&f.ctx(), (0, 1), "").unwrap();
    assert_eq!(v.votes, [0, 1, 0, 1, 0]);
    let rows = v.comparisons();
    assert_eq!(rows.len(), 5);
    assert!(rows.contains(&(0, 1)) && rows.contains(&(1, 0)));

    let (a, _) = agent_with(scripted(Purpose::PairwiseLabel, &["```json\n{\"reasoning\": \"r\", \"answer\": \"1\"}\n```"]), 5);
    assert_eq!(a.pairwise_pref(&f.ctx(), (0, 1), "").unwrap().votes, [1; 5]);
}

#[test]
fn failed_replicates_policy() {
    let f = Fixture::new();
    // each replicate makes 3 attempts; 9 bad then good: replicates 0-2 fail
    let mut script = vec!["junk"; 9];
    script.extend(["{\"answer\": 1}"; 6]);
    let (a, _) = agent_with(scripted(Purpose::PairwiseLabel, &script), 5);
    assert!(a.pairwise_pref(&f.ctx(), (0, 1), "").is_err());

    let mut script = vec!["junk"; 6];
    script.extend(["{\"answer\": 1}"; 9]);
    let (a, _) = agent_with(scripted(Purpose::PairwiseLabel, &script), 5);
    let v = a.pairwise_pref(&f.ctx(), (0, 1), "").unwrap();
    assert_eq!((v.votes.len(), v.failed), (3, 2));
}

#[test]
fn scalar_estimates() {
    let f = Fixture::new();
    let (a, _) = agent_with(Arc::new(ScriptedBackend::synthetic()), 5);
    let est = a.estimate_utilities(&f.ctx(), "").unwrap();
    assert_eq!(est, vec![vec![0.5; 5]; 3]);

    let text = "```jsonl\n{\"arm_index\": \"1_2\", \"p_accept\": 0.3}\n{\"arm_index\": \"1_0\", \"p_accept\": 1.2}\n{\"arm_index\": \"1_1\", \"p_accept\": 0.25}\n```";
    let (a, _) = agent_with(scripted(Purpose::ScalarUtility, &[text]), 2);
    let est = a.estimate_utilities(&f.ctx(), "").unwrap();
    assert_eq!(est, vec![vec![1.0, 1.0], vec![0.25, 0.25], vec![0.3, 0.3]]);

    let missing = "{\"arm_index\": \"1_0\", \"p_accept\": 0.4}";
    let (a, _) = agent_with(scripted(Purpose::ScalarUtility, &[missing]), 2);
    let err = a.estimate_utilities(&f.ctx(), "").unwrap_err().to_string();
    assert!(err.contains("1_1"), "{err}");
}

#[test]
fn summary_fallback_and_fence() {
    let f = Fixture::new();
    let (a, _) = agent_with(scripted(Purpose::Summary, &["Summary:\n```json\n{\"summary\": \"low y_1\"}\n```"]), 5);
    assert_eq!(a.summarize(&f.ctx()).unwrap(), "low y_1");
    let (a, _) = agent_with(scripted(Purpose::Summary, &["no json"]), 5);
    assert_eq!(a.summarize(&f.ctx()).unwrap(), "");
}

#[test]
fn prior_candidates_clamped_then_mapped() {
    let f = Fixture::new();
    let (a, log) = agent_with(scripted(Purpose::InitCandidates, &["```json\n{\"0\": [0.5, 1.7], \"1\": [0.0, 0.25],}\n```"]), 5);
    let pts = a.init_candidates(&f.ctx(), "- inputs near the centre work well", 2).unwrap();
    assert_eq!(pts, vec![vec![0.5, 1.0], vec![0.0, 0.25]]);
    let prompt = &log.records()[0].prompt;
    assert!(prompt.contains("\"1\": <candidate1>"));
    assert!(prompt.contains("inputs near the centre"));
    let space = SearchSpace::new(vec!["a".into(), "b".into()], vec![18.0, 0.05], vec![32.0, 0.5]).unwrap();
    for p in &pts {
        assert!(space.contains(&space.from_unit(p)));
    }
    assert_eq!(space.from_unit(&pts[0]), vec![25.0, 0.5]);

    let (a, _) = agent_with(scripted(Purpose::InitCandidates, &["{\"0\": [0.5, 0.5, 0.5]}"]), 5);
    assert!(a.init_candidates(&f.ctx(), "prior", 1).is_err());
    assert!(a.init_candidates(&f.ctx(), "  ", 1).is_err());
}

#[test]
fn two_step_incumbent_is_best_estimate() {
    let mut f = Fixture::new();
    f.arms[1].x_unit = vec![0.125, 0.875];
    let (a, log) = agent_with(Arc::new(ScriptedBackend::synthetic()), 5);
    let pts = a.candidates_two_step(&f.ctx(), &[0.2, 0.9, 0.4], 3).unwrap();
    assert_eq!(pts.len(), 3);
    let prompt = &log.records()[0].prompt;
    assert!(prompt.contains("x^* = [0.1250, 0.8750] with utility u(x^*) = 0.9000"));
    assert!(prompt.contains("| estimated_utility |"));
}

#[test]
fn dm_answers_partial_and_fallback() {
    let env = Environment::from_id("dtlz2-l1").unwrap();
    let f = Fixture::new();
    let qs = vec!["a?".to_string(), "b?".to_string()];
    let dm = |resp: &str| lilo_core::language::LlmDm {
        client: LlmClient::new(scripted(Purpose::DmAnswers, &[resp]), Arc::new(TranscriptLog::in_memory())),
        environment: env.clone(),
        seed: 0,
    };
    use lilo_core::language::DecisionMaker;
    assert_eq!(dm("{\"q1\": \"yes\", \"q2\": \"no\"}").answer(1, &qs, &f.arms).unwrap(), ["yes", "no"]);
    assert_eq!(dm("{\"q2\": \"no\"}").answer(1, &qs, &f.arms).unwrap(), ["no comment", "no"]);
    assert_eq!(dm("?").answer(1, &qs, &f.arms).unwrap(), ["no comment", "no comment"]);
    let d = dm("{}");
    let table = d.utility_table(&f.arms).unwrap();
    assert!(table.contains("| utility |"));
    assert_eq!(table.lines().count(), 2 + f.arms.len());
}

#[test]
fn replay_reproduces_structured_outputs() {
    let f = Fixture::new();
    let ctx = f.ctx();
    let script = vec![
        ScriptEntry { purpose: Purpose::PairwiseLabel, completion: "noise".into() },
        ScriptEntry { purpose: Purpose::PairwiseLabel, completion: "{\"answer\": 1}".into() },
        ScriptEntry { purpose: Purpose::PairwiseLabel, completion: "{\"answer\": \"0\"}".into() },
    ];
    let run = |backend: Arc<dyn ChatBackend>| {
        let (a, log) = agent_with(backend, 5);
        let q = a.questions(&ctx, Some(&[0, 1]), 2).unwrap();
        let s = a.summarize(&ctx).unwrap();
        let v = a.pairwise_pref(&ctx, (1, 2), &s).unwrap();
        let u = a.estimate_utilities(&ctx, &s).unwrap();
        ((q, s, v, u), log.records())
    };
    let (first, records) = run(Arc::new(ScriptedBackend::new(script, true)));
    assert!(records.iter().any(|r| r.parse_status.starts_with("error")));
    let (second, _) = run(Arc::new(ReplayBackend::new(&records)));
    assert_eq!(first, second);
}

#[test]
fn cache_skips_identical_requests() {
    let f = Fixture::new();
    let (a, log) = agent_with(scripted(Purpose::PairwiseLabel, &["{\"answer\": 1}"]), 3);
    let v1 = a.pairwise_pref(&f.ctx(), (0, 1), "").unwrap();
    let v2 = a.pairwise_pref(&f.ctx(), (0, 1), "").unwrap();
    assert_eq!(v1, v2);
    assert_eq!(log.records().len(), 3);
}

#[test]
fn oracle_agent_matches_oracle_labels() {
    let env = Environment::from_id("dtlz2-piecewise").unwrap();
    let dm = OracleDm::new(env.clone(), AnswerMode::Pairwise);
    let agent = OracleAgent::new(env);
    let ys = [[0.1, 0.5, 0.3, 0.9], [0.6, 0.2, 0.8, 0.4], [0.3, 0.3, 0.3, 0.3], [0.9, 0.9, 0.1, 0.2]];
    let f = Fixture { arms: arms(&ys), ..Fixture::new() };
    for i in 0..4 {
        for j in 0..4 {
            if i != j {
                let v = agent.pairwise_pref(&f.ctx(), (i, j), "").unwrap();
                assert_eq!(v.votes, [dm.label(&ys[i], &ys[j]).unwrap()]);
            }
        }
    }
    let est = agent.estimate_utilities(&f.ctx(), "").unwrap();
    for (e, y) in est.iter().zip(&ys) {
        assert_eq!(e[0], dm.scalar(y).unwrap());
    }
    assert!(agent.candidates_direct(&f.ctx(), 1).is_err());
}

#[test]
fn parser_fixture_suite() {
    for (name, ok, detail) in parser_cases::run_all() {
        assert!(ok, "{name}: {detail}");
    }
}

#[test]
fn transcript_file_survives_concurrent_appends() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t.jsonl");
    let log = Arc::new(TranscriptLog::to_file(&path).unwrap());
    let backend: Arc<dyn ChatBackend> = Arc::new(ScriptedBackend::synthetic());
    std::thread::scope(|s| {
        for t in 0..4 {
            let client = LlmClient::new(backend.clone(), log.clone());
            s.spawn(move || {
                let f = Fixture::new();
                let a = LlmAgent::new(client, AgentConfig { n_samples: 5, max_failed_replicates: 2, seed: t });
                a.pairwise_pref(&f.ctx(), (0, 1), "").unwrap();
            });
        }
    });
    let recs = TranscriptLog::read_jsonl(&path).unwrap();
    assert_eq!(recs.len(), 20);
    assert_eq!(recs, log.records());
}

#[test]
fn http_backend_wire_format() {
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap();
    let server = std::thread::spawn(move || {
        let (mut sock, _) = listener.accept().unwrap();
        let mut reader = BufReader::new(sock.try_clone().unwrap());
        let mut len = 0;
        let mut auth = String::new();
        loop {
            let mut line = String::new();
            reader.read_line(&mut line).unwrap();
            let lower = line.to_ascii_lowercase();
            if let Some(v) = lower.strip_prefix("content-length:") {
                len = v.trim().parse().unwrap();
            }
            if lower.starts_with("authorization:") {
                auth = line.trim().to_string();
            }
            if line == "\r\n" {
                break;
            }
        }
        let mut body = vec![0; len];
        reader.read_exact(&mut body).unwrap();
        let reply = r#"{"choices":[{"message":{"role":"assistant","content":"{\"answer\": 1}"}}],"usage":{"prompt_tokens":12,"completion_tokens":5}}"#;
        write!(sock, "HTTP/1.1 200 OK\r\ncontent-type: application/json\r\ncontent-length: {}\r\nconnection: close\r\n\r\n{reply}", reply.len()).unwrap();
        (serde_json::from_slice::<serde_json::Value>(&body).unwrap(), auth)
    });
    std::env::set_var("LILO_TEST_TOKEN", "secret");
    let backend = HttpBackend::new(HttpConfig {
        endpoint: format!("http://{addr}/v1/chat/completions"),
        model: "m".into(),
        api_key_env: Some("LILO_TEST_TOKEN".into()),
        ..HttpConfig::default()
    })
    .unwrap();
    let req = ChatRequest {
        purpose: Purpose::PairwiseLabel,
        trial: 1,
        messages: vec![ChatMessage::user("which?")],
        temperature: 0.2,
        max_tokens: 64,
        seed: Some(3),
        vars: BTreeMap::new(),
    };
    let resp = backend.complete(&req).unwrap();
    assert_eq!(resp.text, "{\"answer\": 1}");
    assert_eq!((resp.prompt_tokens, resp.completion_tokens), (Some(12), Some(5)));
    let (body, auth) = server.join().unwrap();
    assert_eq!(body["model"], "m");
    assert_eq!(body["messages"][0]["role"], "user");
    assert_eq!(body["messages"][0]["content"], "which?");
    assert_eq!(body["temperature"], 0.2);
    assert_eq!(body["seed"], 3);
    assert_eq!(auth, "authorization: Bearer secret");
}

proptest! {
    #[test]
    fn table_rows_are_distinct(ys in prop::collection::vec(prop::array::uniform4(0.0f64..1.0), 1..12)) {
        let f = Fixture { arms: arms(&ys), ..Fixture::new() };
        let table = outcome_table(&f.ctx());
        let lines: Vec<&str> = table.lines().skip(2).collect();
        prop_assert_eq!(lines.len(), ys.len());
        let uniq: std::collections::HashSet<&&str> = lines.iter().collect();
        prop_assert_eq!(uniq.len(), lines.len());
    }

    #[test]
    fn parsers_are_pure(text in ".{0,200}") {
        use lilo_core::language::parse;
        prop_assert_eq!(parse::label(&text), parse::label(&text));
        prop_assert_eq!(parse::scalar_records(&text), parse::scalar_records(&text));
        prop_assert_eq!(parse::questions(&text, 2), parse::questions(&text, 2));
    }
}
