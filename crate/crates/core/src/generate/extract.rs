use std::sync::OnceLock;

use regex::Regex;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("no architecture found in generator output")]
pub struct ExtractionError;

fn block_line() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| {
        Regex::new(r"^\s*[A-Za-z][A-Za-z0-9_]*\s*\(\s*\d+\s*(,\s*\d+\s*)*\)\s*(@\s*P\s*\d+)?\s*(;\s*[A-Za-z][A-Za-z0-9_]*\s*\(\s*\d+\s*(,\s*\d+\s*)*\)\s*(@\s*P\s*\d+)?\s*)*;?\s*(#.*)?$")
            .expect("block-line pattern compiles")
    })
}

fn is_block_line(line: &str) -> bool {
    block_line().is_match(line)
}

/// Pulls DSL source out of free-form generator output.
///
/// The first fenced code block wins; otherwise the longest contiguous run of
/// block-call lines is taken. Blank lines inside a run are kept.
pub fn extract_architecture(raw: &str) -> Result<String, ExtractionError> {
    if let Some(body) = first_fence(raw) {
        if body.lines().any(is_block_line) {
            return Ok(body);
        }
    }

    let lines: Vec<&str> = raw.lines().collect();
    let mut best: Option<(usize, usize)> = None;
    let mut i = 0;
    while i < lines.len() {
        if !is_block_line(lines[i]) {
            i += 1;
            continue;
        }
        let start = i;
        let mut end = i + 1;
        let mut j = i + 1;
        while j < lines.len() && (is_block_line(lines[j]) || lines[j].trim().is_empty()) {
            if is_block_line(lines[j]) {
                end = j + 1;
            }
            j += 1;
        }
        let count = lines[start..end].iter().filter(|l| is_block_line(l)).count();
        if best.is_none_or(|(s, e)| count > lines[s..e].iter().filter(|l| is_block_line(l)).count()) {
            best = Some((start, end));
        }
        i = end;
    }
    match best {
        Some((s, e)) => {
            let mut out = lines[s..e].iter().map(|l| l.trim()).collect::<Vec<_>>().join("\n");
            out.push('\n');
            Ok(out)
        }
        None => Err(ExtractionError),
    }
}

/// Body of the first ```-fenced block, info string dropped.
fn first_fence(raw: &str) -> Option<String> {
    let mut lines = raw.lines();
    lines.find(|l| l.trim_start().starts_with("```"))?;
    let mut body = String::new();
    for line in lines {
        if line.trim_start().starts_with("```") {
            return Some(body);
        }
        body.push_str(line);
        body.push('\n');
    }
    None
}
