//! Prompt templates and rendering. Templates use Python `str.format`
//! syntax: `{name}` placeholders, `{{` and `}}` for literal braces.

use std::borrow::Cow;
use std::collections::{BTreeMap, BTreeSet};

use crate::error::{LiloError, Result};

pub const INIT_QUESTIONS: &str = r##"You are an expert in determining whether a human decision maker (DM) is going to be satisfied with a set of experimental outcomes y = {y_names}.

## Human feedback messages:
We have also received the following messages from the DM:

{human_feedback}

## Your task:
Given the above your task is to predict the probability of the decision maker being satisfied with the experimental outcomes.

In order to better understand the decision maker's utility function you want to ask them about their optimization goals.

Provide a list of questions you would ask the decision maker to better understand their internal utility model.

Return your final answer a a json file with the following format containing exactly {n_questions} most important questions:
```json
{{
    "q1" : <question1>,
    ...
    "q{n_questions}" : <question{n_questions}>
}}
```"##;

pub const QUESTIONS: &str = r##"You are an expert in determining w whether a human decision maker (DM) is going to be satisfied with a set of experimental outcomes y = {y_names}.

## Experimental outcomes:
So far, we have obtained the following experimental outcomes:

{experiment_data}

## Human feedback messages:
We have also received the following messages from the DM:

{human_feedback}

## Your task:
Given the above your task is to predict pairwise preferences between experimental outcomes.

In order to better understand the decision maker's utility function you want to ask them about their optimization goals or for feedback regarding specific experimental outcomes.

Here are some points it may be useful to ask the decision maker about {selected_outcome_indices}.

First, analyse the decision maker's goals and feedback messages to understand their overall preferences.
Then, provide a list of questions you would ask the decision maker to better understand their internal utility model.
Your questions can be either general or referring to specific outcomes. For instance, you may ask the decision maker:
- questions clairfying the optimzation objective,
- to rank two (or more) outcomes,
- how to improve certain outcomes,
- for a likert-scale rating regarding a specific outcome,
- etc.
When referring to specific outcomes, always state the arm_index involved.
Your questions should help you predict pairwise preferences between any two experimental outcomes from the set of experimental outcomes provided above.

Return your final answer a a json file with the following format containing exactly {n_questions} most important questions:
```json
{{
    "q1" : <question1>,
    ...
    "q{n_questions}" : <question{n_questions}>
}}"##;

pub const PAIRWISE: &str = r##"You are an expert in determining whether a human decision maker (DM) is going to be satisfied with a set of experimental outcomes y = {y_names}.

## All experimental outcomes:

{experiment_data}

## Human feedback messages:
We have also received the following messages from the DM:

{human_feedback}

{human_feedback_summary}

## Your task:
Given a pair of outcomes--option_0 and option_1, your goal is to decide which one is more preferable according to the DM's preferences.

{pair_str}

Provide your prediction as a json file with the following format:
```json
{{
    "reasoning": "Your reasoning about the DM's preferences and option_0 vs. option_1. Do not insert new lines in your reasoning.",
    "answer" : 0 or 1
}}
```
where in "answer" you should return 0 if option_0 is preferred, or 1 if option_1 is preferred.
Return just the json file (with the header ```json), nothing else."##;

pub const SCALAR_UTILITY: &str = r##"You are an expert in determining whether a human decision maker (DM) is going to be satisfied with a set of experimental outcomes y = {y_names}.

## Experimental outcomes:
So far, we have obtained the following experimental outcomes:

{experiment_data}

## Human feedback messages:
We have also received the following messages from the DM:

{human_feedback}

{human_feedback_summary}

## Your task:
Given the above your task is to predict the probability of the decision maker being satisfied with the experimental outcomes.

First, analyse the human feedback messages to understand the DM's preferences.
Then, provide your predictions for all y's in the set of all experimental outcomes above.
Return your final answer as a jsonl file with the following format:

```jsonl
{{
    "arm_index": "{idx0}",
    "reasoning": <reasoning>,
    "p_accept": <probability>
}}
{{
    "arm_index": "{idx1}",
    "reasoning": <reasoning>,
    "p_accept": <probability>
}}
...
{{
    "arm_index": "{idxn}",
    "reasoning": <reasoning>,
    "p_accept": <probability>
}}
```
Where <reasoning> should be a short reasoning for your prediction and <probability> should be your best estimate for the probability between 0 and 1 that the DM will be satisfied with the corresponding outcome.

Provide your predictions for ALL y's in the set of experimental outcomes above. That is, for EACH outcome from {idx0}. to {idxn}.
Do not generate any Python code. Just return your predictions as plain text."##;

pub const SUMMARY: &str = r##"You are an expert in determining whether a human decision maker (DM) is going to be satisfied with a set of experimental outcomes y = {y_names}.

## Experimental outcomes:
So far, we have obtained the following experimental outcomes:

{experiment_data}

## Human feedback messages:
We have also received the following messages from the DM:

{human_feedback}

## Your task:
Given the above your task is to summarize the human feedback messages into a clear description of the DM's optimization goals.
Make your summary as quantitative as possible so that it can be easily used for utility estimation.

After analysis the human feedback messages, return your final answer as a json file with the following format:
```json
{{
    "summary": <summary>
}}
```
Remember about the ```json header!"##;

pub const PRIOR_CANDIDATES: &str = r##"You are performing optimization of a utility function u(x) = g(y) = g(f(x)), where x is a vector of parameters: x = {x_names} and y = f(x) = {y_names} is a vector of outcomes.
Each dimensions of x is in the range [0, 1].
Your goal is to find the parameters x that maximize the utility.

## Prior knowledge:
You have obtained the following prior knowledge about the experiment:
{prior_knowledge}

## Human feedback messages:
You have also received the following messages from the DM:
{human_feedback}

## Your task:
Given the above your task is the generate a set of {n_candidates} candidate parameters x for the next round of experimentation.

First, analyse the information above, then return your final answer as a json file with the following format:
```json
{{
    "0": <candidate0>,
    "1": <candidate1>,
    ...
    "{n}": <candidate{n}>,
}}
```
Where each <candidatei> is a list of the candidate parameter values in [0, 1].
Do not write a python code for candidate generation. Just return the required json.
Do not add any comments to your json. Remember about the ```json header."##;

pub const DM_ANSWERS: &str = r##"Suppose you are a decision maker evaluating the results of a multi-objective optimization problem.

You are given a set of multi-dimensional outcomes y = {y_names}

{utility_func_desc}

You have observed the following outcomes with their corresponding utility values and contributions to the overall utility.

## Outcomes:

{outcomes_markdown}

The utility values are on a scale [0, 1], where (1 - very satisfied, 0.5 - neutral, 0 - very dissatisfied).

Based on the above information, provide answers to the following questions:

## Questions:

{questions_str}

Return your final answer as a json file with the following format:
```json
{{
    "q1" : <answer to q1>,
    ...
    "q{n_questions}" : <answer to q{n_questions}>
}}
```
Before providing your final answers, analyze the shape of the utility function in light of the questions posed.
In your final answers, you cannot reveal the explicit formula of the utility function.
The form and the values of the utility functions is a "latent" feature of the human expert, thus you should not refer to it explicitly or even mention its existence. 
{utility_constraints}
State your answers in the first person (you are the decision maker). Avoid vacuous statements."##;

pub const LLM_TWO_STEP: &str = r##"You are performing optimization of a utility function u(x) = g(y) = g(f(x)), where x is a vector of parameters: x = {x_names} and y = f(x) = {y_names} is a vector of outcomes.
Each dimensions of x is in the range [0, 1].
Your goal is to find the parameters x that maximize the utility.

## Experimental Outcomes
So far, you have also observed the following inputs x and their estimated utilities:

{experiment_data}

## Human feedback messages:
We have also received the following messages from the DM:

{human_feedback}

## Your task:
Given the above your task is the generate a set of {n_candidates} candidate parameters x for the next round of experimentation.
Your candidates should maximize the expected improvement over the current best candidate x^* = {x_star} with utility u(x^*) = {u_star}.

First, analyse the information above, then return your final answer as a json file with the following format:
```json
{{
    "0": <candidate0>,
    "1": <candidate1>,
    ...
    "{n}": <candidate{n}>,
}}
```
Where each <candidatei> is a list of the candidate parameter values in [0, 1].
Do not write a python code for candidate generation. Just return the required json.
Do not add any comments to your json. Remember about the ```json header."##;

pub const LLM_DIRECT: &str = r##"You are performing optimization of a utility function u(x) = g(y) = g(f(x)), where x is a vector of parameters: x = {x_names} and y = f(x) = {y_names} is a vector of outcomes.
Each dimensions of x is in the range [0, 1].
Your goal is to find the parameters x that maximize the utility.

{experiment_data}

## Human feedback messages:
We have also received the following messages from the DM:

{human_feedback}

## Your task:
Given the above your task is the generate a set of {n_candidates} candidate parameters x for the next round of experimentation.
First, analyze the human feedback messages to understand the DM's preferences.
Then, generate a set of {n_candidates} candidate parameters x, trading-off exploration and exploitation.
Return your final answer as a json file with the following format:
```json
{{
    "0": <candidate0>,
    "1": <candidate1>,
    ...
    "{n}": <candidate{n}>,
}}
```
Where each <candidatei> is a list of the candidate parameter values: {x_names}, each in [0, 1].
Do not write a python code for candidate generation. Just return the required json.
Do not add any comments to your json."##;

const HIGHLIGHT_SENTENCE: &str =
    "Here are some points it may be useful to ask the decision maker about {selected_outcome_indices}.\n\n";

/// Marker rendered in place of an empty feedback history.
pub const NO_FEEDBACK: &str = "(none yet)";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PromptTemplate {
    pub name: &'static str,
    pub body: Cow<'static, str>,
}

enum Piece<'a> {
    Text(&'a str),
    Field(&'a str),
}

fn tokenize<'a>(name: &str, body: &'a str) -> Result<Vec<Piece<'a>>> {
    let bad = |msg: String| LiloError::config(format!("template {name}: {msg}"));
    let mut out = Vec::new();
    let bytes = body.as_bytes();
    let (mut i, mut start) = (0, 0);
    while i < bytes.len() {
        match bytes[i] {
            b'{' if bytes.get(i + 1) == Some(&b'{') => {
                out.push(Piece::Text(&body[start..i + 1]));
                i += 2;
                start = i;
            }
            b'}' if bytes.get(i + 1) == Some(&b'}') => {
                out.push(Piece::Text(&body[start..i + 1]));
                i += 2;
                start = i;
            }
            b'{' => {
                out.push(Piece::Text(&body[start..i]));
                let end = body[i + 1..].find('}').ok_or_else(|| bad(format!("unclosed brace at byte {i}")))? + i + 1;
                let field = &body[i + 1..end];
                if field.is_empty() || !field.bytes().all(|c| c.is_ascii_alphanumeric() || c == b'_') {
                    return Err(bad(format!("invalid placeholder `{field}`")));
                }
                out.push(Piece::Field(field));
                i = end + 1;
                start = i;
            }
            b'}' => return Err(bad(format!("single `}}` at byte {i}"))),
            _ => i += 1,
        }
    }
    out.push(Piece::Text(&body[start..]));
    Ok(out)
}

impl PromptTemplate {
    pub const fn fixed(name: &'static str, body: &'static str) -> Self {
        Self { name, body: Cow::Borrowed(body) }
    }

    pub fn required_placeholders(&self) -> Result<BTreeSet<String>> {
        Ok(tokenize(self.name, &self.body)?
            .into_iter()
            .filter_map(|p| match p {
                Piece::Field(f) => Some(f.to_string()),
                Piece::Text(_) => None,
            })
            .collect())
    }

    /// Substitutes every placeholder; unused context keys are ignored.
    pub fn render(&self, ctx: &BTreeMap<String, String>) -> Result<String> {
        let mut out = String::with_capacity(self.body.len());
        for piece in tokenize(self.name, &self.body)? {
            match piece {
                Piece::Text(t) => out.push_str(t),
                Piece::Field(f) => out.push_str(ctx.get(f).ok_or_else(|| LiloError::Template {
                    template: self.name.to_string(),
                    placeholder: f.to_string(),
                })?),
            }
        }
        Ok(out)
    }
}

pub fn init_questions() -> PromptTemplate {
    PromptTemplate::fixed("init-questions", INIT_QUESTIONS)
}

pub fn questions() -> PromptTemplate {
    PromptTemplate::fixed("questions", QUESTIONS)
}

/// Question prompt without the highlighted-outcomes sentence.
pub fn questions_unguided() -> PromptTemplate {
    debug_assert!(QUESTIONS.contains(HIGHLIGHT_SENTENCE));
    PromptTemplate { name: "questions-unguided", body: Cow::Owned(QUESTIONS.replacen(HIGHLIGHT_SENTENCE, "", 1)) }
}

pub fn pairwise() -> PromptTemplate {
    PromptTemplate::fixed("pairwise", PAIRWISE)
}

pub fn scalar_utility() -> PromptTemplate {
    PromptTemplate::fixed("scalar-utility", SCALAR_UTILITY)
}

pub fn summary() -> PromptTemplate {
    PromptTemplate::fixed("summary", SUMMARY)
}

pub fn prior_candidates() -> PromptTemplate {
    PromptTemplate::fixed("prior-candidates", PRIOR_CANDIDATES)
}

pub fn dm_answers() -> PromptTemplate {
    PromptTemplate::fixed("dm-answers", DM_ANSWERS)
}

pub fn llm_two_step() -> PromptTemplate {
    PromptTemplate::fixed("llm-2step", LLM_TWO_STEP)
}

pub fn llm_direct() -> PromptTemplate {
    PromptTemplate::fixed("llm-direct", LLM_DIRECT)
}

/// Python-style list of quoted strings: `['a', 'b']`.
pub fn py_list<S: AsRef<str>>(items: &[S]) -> String {
    let inner: Vec<String> = items.iter().map(|s| format!("'{}'", s.as_ref())).collect();
    format!("[{}]", inner.join(", "))
}

/// Fixed-precision cell text.
pub fn cell(v: f64) -> String {
    format!("{v:.4}")
}

/// Pipe table with a header row and a separator row.
pub fn markdown_table(header: &[String], rows: &[Vec<String>]) -> String {
    let line = |cells: &[String]| format!("| {} |", cells.join(" | "));
    let mut out = vec![line(header), line(&vec!["---".to_string(); header.len()])];
    out.extend(rows.iter().map(|r| line(r)));
    out.join("\n")
}

/// Vector of numbers as `[0.1, 0.2]`.
pub fn num_list(v: &[f64]) -> String {
    let inner: Vec<String> = v.iter().map(|x| cell(*x)).collect();
    format!("[{}]", inner.join(", "))
}
