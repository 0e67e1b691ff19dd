//! SKILL.md frontmatter: the YAML block between `---` fences.
//!
//! Parsing keeps two things besides the typed fields: the exact source of
//! every unrecognized top-level key, and the whole original header. When the
//! typed fields are untouched the header is written back verbatim; after an
//! edit the canonical layout is used (known keys in fixed order, then the
//! unrecognized blocks in first-seen order).

use serde::de::DeserializeOwned;
use serde_yaml::Value;

use crate::model::{ExtraField, Frontmatter, FrontmatterOrigin, RoleDecl, TeammateMode};

const KNOWN_KEYS: [&str; 6] = [
    "name",
    "description",
    "kind",
    "teammate_mode",
    "roles",
    "dependencies",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrontmatterError {
    /// 1-based line in SKILL.md.
    pub line: usize,
    pub message: String,
}

/// A SKILL.md split at its frontmatter fences.
#[derive(Debug)]
pub struct SplitDocument<'a> {
    /// Opening fence through closing fence line, inclusive.
    pub header: &'a str,
    /// YAML between the fences.
    pub yaml: &'a str,
    pub body: &'a str,
}

fn is_fence(line: &str) -> bool {
    line.trim_end() == "---"
}

pub fn split(text: &str) -> Result<SplitDocument<'_>, FrontmatterError> {
    let mut offsets = Vec::new();
    let mut pos = 0;
    for line in text.split_inclusive('\n') {
        offsets.push((pos, line));
        pos += line.len();
    }
    match offsets.first() {
        Some((_, first)) if is_fence(first) => {}
        _ => {
            return Err(FrontmatterError {
                line: 1,
                message: "SKILL.md must start with a `---` frontmatter fence".into(),
            })
        }
    }
    let close = offsets
        .iter()
        .enumerate()
        .skip(1)
        .find(|(_, (_, line))| is_fence(line))
        .map(|(i, _)| i)
        .ok_or_else(|| FrontmatterError {
            line: offsets.len(),
            message: "frontmatter block is not closed by `---`".into(),
        })?;
    let yaml_start = offsets[1].0;
    let (close_start, close_line) = offsets[close];
    let header_end = close_start + close_line.len();
    Ok(SplitDocument {
        header: &text[..header_end],
        yaml: &text[yaml_start..close_start],
        body: &text[header_end..],
    })
}

/// One top-level key with its source block.
struct Block<'a> {
    key: String,
    /// 1-based line of the key within SKILL.md.
    line: usize,
    raw: &'a str,
}

fn top_level_key(line: &str) -> Option<String> {
    let first = line.chars().next()?;
    if first.is_whitespace() || matches!(first, '#' | '-' | '\n' | '\r') {
        return None;
    }
    if first == '"' || first == '\'' {
        let rest = &line[1..];
        let end = rest.find(first)?;
        let after = &rest[end + 1..];
        return after
            .trim_start()
            .starts_with(':')
            .then(|| rest[..end].to_string());
    }
    let colon = line.find(':')?;
    Some(line[..colon].trim().to_string())
}

fn blocks(yaml: &str, first_line: usize) -> Vec<Block<'_>> {
    let mut out: Vec<Block<'_>> = Vec::new();
    let mut starts = Vec::new();
    let mut pos = 0;
    for (i, line) in yaml.split_inclusive('\n').enumerate() {
        if let Some(key) = top_level_key(line) {
            starts.push((pos, first_line + i, key));
        }
        pos += line.len();
    }
    for (n, (start, line, key)) in starts.iter().enumerate() {
        let end = starts.get(n + 1).map(|s| s.0).unwrap_or(yaml.len());
        out.push(Block {
            key: key.clone(),
            line: *line,
            raw: &yaml[*start..end],
        });
    }
    out
}

fn typed<T: DeserializeOwned>(
    value: &Value,
    key: &str,
    line: usize,
) -> Result<T, FrontmatterError> {
    serde_yaml::from_value(value.clone()).map_err(|e| FrontmatterError {
        line,
        message: format!("field `{key}`: {e}"),
    })
}

/// Parses a complete SKILL.md text into its frontmatter and body.
pub fn parse(text: &str) -> Result<(Frontmatter, String), FrontmatterError> {
    let doc = split(text)?;
    // yaml starts on line 2 of the file
    let value: Value = serde_yaml::from_str(doc.yaml).map_err(|e| FrontmatterError {
        line: e.location().map(|l| l.line() + 1).unwrap_or(2),
        message: format!("malformed frontmatter: {e}"),
    })?;
    let Value::Mapping(map) = value else {
        return Err(FrontmatterError {
            line: 2,
            message: "frontmatter must be a key/value mapping".into(),
        });
    };

    let mut fm = Frontmatter::default();
    for block in blocks(doc.yaml, 2) {
        let Some(value) = map.get(block.key.as_str()) else {
            // key text we could not map back onto the parsed mapping
            return Err(FrontmatterError {
                line: block.line,
                message: format!("unsupported frontmatter key syntax `{}`", block.key),
            });
        };
        let line = block.line;
        match block.key.as_str() {
            "name" => fm.name = typed(value, "name", line)?,
            "description" => fm.description = typed(value, "description", line)?,
            "kind" => fm.kind = typed(value, "kind", line)?,
            "teammate_mode" => {
                fm.teammate_mode = typed::<Option<String>>(value, "teammate_mode", line)?
                    .map(|s| TeammateMode::parse(&s))
            }
            "roles" => {
                fm.roles = typed::<Option<Vec<RoleDecl>>>(value, "roles", line)?.unwrap_or_default()
            }
            "dependencies" => {
                fm.dependencies =
                    typed::<Option<Vec<String>>>(value, "dependencies", line)?.unwrap_or_default()
            }
            key => fm.extra_fields.push(ExtraField {
                key: key.to_string(),
                raw: block.raw.to_string(),
                value: value.clone(),
            }),
        }
    }

    let parsed = Box::new(fm.clone());
    fm.origin = Some(FrontmatterOrigin {
        header: doc.header.to_string(),
        parsed,
    });
    Ok((fm, doc.body.to_string()))
}

/// The header (fences included) to write for `fm`.
pub fn render(fm: &Frontmatter) -> String {
    if let Some(origin) = &fm.origin {
        if *origin.parsed == *fm {
            return origin.header.clone();
        }
    }
    render_canonical(fm)
}

pub fn render_canonical(fm: &Frontmatter) -> String {
    let mut out = String::from("---\n");
    out.push_str(&format!("name: {}\n", scalar(&fm.name, false)));
    out.push_str(&format!(
        "description: {}\n",
        scalar(&fm.description, false)
    ));
    if let Some(kind) = &fm.kind {
        out.push_str(&format!("kind: {}\n", scalar(kind, false)));
    }
    if let Some(mode) = &fm.teammate_mode {
        out.push_str(&format!(
            "teammate_mode: {}\n",
            scalar(mode.as_str(), false)
        ));
    }
    if !fm.roles.is_empty() {
        out.push_str("roles:\n");
        for role in &fm.roles {
            out.push_str(&format!("  - id: {}\n", scalar(&role.id, false)));
            out.push_str(&format!("    skills: {}\n", flow_list(&role.skills)));
            out.push_str(&format!("    tools: {}\n", flow_list(&role.tools)));
            if let Some(model) = &role.model {
                out.push_str(&format!("    model: {}\n", scalar(model, false)));
            }
            if !role.extra.is_empty() {
                let yaml = serde_yaml::to_string(&role.extra).unwrap_or_default();
                for line in yaml.lines() {
                    out.push_str("    ");
                    out.push_str(line);
                    out.push('\n');
                }
            }
        }
    }
    if !fm.dependencies.is_empty() {
        out.push_str(&format!("dependencies: {}\n", flow_list(&fm.dependencies)));
    }
    for extra in &fm.extra_fields {
        if KNOWN_KEYS.contains(&extra.key.as_str()) {
            continue;
        }
        out.push_str(&extra.raw);
        if !extra.raw.ends_with('\n') {
            out.push('\n');
        }
    }
    out.push_str("---\n");
    out
}

fn flow_list(items: &[String]) -> String {
    let parts: Vec<String> = items.iter().map(|s| scalar(s, true)).collect();
    format!("[{}]", parts.join(", "))
}

/// Emits `s` as a YAML scalar that reads back as the same string: plain
/// when unambiguous, double-quoted otherwise.
pub fn scalar(s: &str, in_flow: bool) -> String {
    if plain_is_safe(s, in_flow) {
        s.to_string()
    } else {
        // a JSON string literal is a valid YAML double-quoted scalar
        serde_json::to_string(s).expect("string serialization cannot fail")
    }
}

fn plain_is_safe(s: &str, in_flow: bool) -> bool {
    let Some(first) = s.chars().next() else {
        return false;
    };
    if !(first.is_alphanumeric() || first == '_' || first == '/') {
        return false;
    }
    if s != s.trim() || s.ends_with(':') || s.contains(": ") || s.contains(" #") {
        return false;
    }
    if s.chars().any(|c| c.is_control()) {
        return false;
    }
    if in_flow && s.contains([',', '[', ']', '{', '}']) {
        return false;
    }
    let lower = s.to_ascii_lowercase();
    if matches!(
        lower.as_str(),
        "true" | "false" | "yes" | "no" | "on" | "off" | "y" | "n" | "null" | "~"
    ) {
        return false;
    }
    // anything a YAML reader might take for a number
    if s.parse::<f64>().is_ok() || s.starts_with(|c: char| c.is_ascii_digit()) {
        return false;
    }
    true
}
