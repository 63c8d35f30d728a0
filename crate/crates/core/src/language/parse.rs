//! Structured-output extraction from free-form completions. All functions
//! are pure; errors are plain messages so the caller can retry.

use std::collections::BTreeMap;
use std::sync::OnceLock;

use regex::Regex;
use serde_json::{Map, Value};

pub type ParseResult<T> = std::result::Result<T, String>;

fn fence_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?s)```[ \t]*([A-Za-z0-9_-]*)[ \t]*\r?\n(.*?)(?:```|\z)").expect("valid regex"))
}

fn trailing_comma_re() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r",(\s*[}\]])").expect("valid regex"))
}

/// Bodies of fenced code blocks, in order. An unterminated final fence
/// runs to the end of the text.
pub fn fenced_blocks(text: &str) -> Vec<String> {
    fence_re().captures_iter(text).map(|c| c[2].to_string()).collect()
}

pub fn strip_trailing_commas(s: &str) -> String {
    trailing_comma_re().replace_all(s, "$1").into_owned()
}

/// Outermost `{...}` span of `text`, if any.
fn bare_object(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let end = text.rfind('}')?;
    (end > start).then(|| &text[start..=end])
}

/// Candidate JSON texts: fenced blocks last-first, then the bare span.
fn candidates(text: &str) -> Vec<String> {
    let mut out: Vec<String> = fenced_blocks(text).into_iter().rev().collect();
    if let Some(b) = bare_object(text) {
        out.push(b.to_string());
    }
    out
}

/// The first candidate that parses as a JSON object.
pub fn json_object(text: &str) -> ParseResult<Map<String, Value>> {
    let mut last = "no JSON object found".to_string();
    for c in candidates(text) {
        match serde_json::from_str::<Value>(strip_trailing_commas(c.trim()).as_str()) {
            Ok(Value::Object(m)) => return Ok(m),
            Ok(_) => last = "JSON value is not an object".into(),
            Err(e) => last = format!("invalid JSON: {e}"),
        }
    }
    Err(last)
}

/// Every JSON object in a stream of concatenated objects (JSONL, pretty
/// printed or not) or in a top-level array.
pub fn json_records(text: &str) -> ParseResult<Vec<Map<String, Value>>> {
    let mut sources: Vec<String> = fenced_blocks(text).into_iter().rev().collect();
    sources.push(text.to_string());
    let mut last = "no JSON records found".to_string();
    for src in sources {
        let cleaned = strip_trailing_commas(&src);
        let body = match cleaned.find(['{', '[']) {
            Some(i) => &cleaned[i..],
            None => continue,
        };
        let mut out = Vec::new();
        let mut stream = serde_json::Deserializer::from_str(body).into_iter::<Value>();
        loop {
            match stream.next() {
                Some(Ok(Value::Object(m))) => out.push(m),
                Some(Ok(Value::Array(items))) => {
                    out.extend(items.into_iter().filter_map(|v| match v {
                        Value::Object(m) => Some(m),
                        _ => None,
                    }));
                }
                Some(Ok(_)) => {}
                Some(Err(e)) => {
                    if out.is_empty() {
                        last = format!("invalid JSON record: {e}");
                    }
                    break;
                }
                None => break,
            }
        }
        if !out.is_empty() {
            return Ok(out);
        }
    }
    Err(last)
}

fn as_text(v: &Value) -> String {
    match v {
        Value::String(s) => s.trim().to_string(),
        other => other.to_string(),
    }
}

/// `q1..qn`, in numeric key order. Extra keys are ignored.
pub fn questions(text: &str, n: usize) -> ParseResult<Vec<String>> {
    let obj = json_object(text)?;
    (1..=n)
        .map(|i| obj.get(&format!("q{i}")).map(as_text).ok_or_else(|| format!("missing key q{i}")))
        .collect()
}

/// Answers keyed `q1..qn`; missing keys come back as `None`.
pub fn answers(text: &str, n: usize) -> ParseResult<Vec<Option<String>>> {
    let obj = json_object(text)?;
    Ok((1..=n).map(|i| obj.get(&format!("q{i}")).map(as_text)).collect())
}

fn coerce_label(v: &Value) -> Option<u8> {
    match v {
        Value::Number(n) => match n.as_f64()? {
            x if x == 0.0 => Some(0),
            x if x == 1.0 => Some(1),
            _ => None,
        },
        Value::String(s) => match s.trim().trim_matches('"') {
            "0" | "option_0" => Some(0),
            "1" | "option_1" => Some(1),
            _ => None,
        },
        _ => None,
    }
}

/// `(answer, reasoning)` from a pairwise completion.
pub fn label(text: &str) -> ParseResult<(u8, String)> {
    let obj = json_object(text)?;
    let ans = obj.get("answer").ok_or("missing key answer")?;
    let a = coerce_label(ans).ok_or_else(|| format!("answer must be 0 or 1, got {ans}"))?;
    Ok((a, obj.get("reasoning").map(as_text).unwrap_or_default()))
}

fn coerce_prob(v: &Value) -> Option<f64> {
    match v {
        Value::Number(n) => n.as_f64(),
        Value::String(s) => s.trim().trim_end_matches('%').parse::<f64>().ok(),
        _ => None,
    }
    .filter(|p| p.is_finite())
}

/// One scalar-utility record: raw (unclamped) `p_accept` keyed by arm id.
/// Records without a usable arm or probability are skipped.
pub fn scalar_records(text: &str) -> ParseResult<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for rec in json_records(text)? {
        let (Some(arm), Some(p)) = (rec.get("arm_index"), rec.get("p_accept").and_then(coerce_prob)) else {
            continue;
        };
        out.insert(as_text(arm), p);
    }
    if out.is_empty() {
        return Err("no record with arm_index and numeric p_accept".into());
    }
    Ok(out)
}

pub fn summary(text: &str) -> ParseResult<String> {
    let obj = json_object(text)?;
    obj.get("summary").map(as_text).ok_or_else(|| "missing key summary".into())
}

/// Candidate vectors keyed `"0".."n-1"`, each of length `d` (unclamped).
pub fn candidates_json(text: &str, n: usize, d: usize) -> ParseResult<Vec<Vec<f64>>> {
    let obj = json_object(text)?;
    (0..n)
        .map(|i| {
            let v = obj.get(&i.to_string()).ok_or_else(|| format!("missing candidate {i}"))?;
            let arr = v.as_array().ok_or_else(|| format!("candidate {i} is not a list"))?;
            if arr.len() != d {
                return Err(format!("candidate {i} has {} values, expected {d}", arr.len()));
            }
            arr.iter()
                .map(|c| c.as_f64().filter(|x| x.is_finite()).ok_or_else(|| format!("candidate {i} has a non-numeric value")))
                .collect()
        })
        .collect()
}
