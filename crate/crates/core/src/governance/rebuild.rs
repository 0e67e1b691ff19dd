//! REBUILD: folding records into the base files. The folding itself is an
//! in-memory [`Rewriter`]; [`super::rebuild`] handles archive, validation
//! and the on-disk swap.

use crate::codec::{BIND_FILE, SKILL_FILE, WORKFLOW_FILE};
use crate::model::{
    persona_path, DirectiveAction, EvolutionRecord, ExecutionBounds, RoleDecl, SwarmSkill,
};

pub const EVOLVED_HEADING: &str = "## Evolved Guidance";

/// Produces the rebuilt skill from the current one and the records to fold
/// (oldest first). Model-backed implementations may restructure freely; the
/// caller validates the result.
pub trait Rewriter {
    fn rewrite(
        &self,
        skill: &SwarmSkill,
        records: &[EvolutionRecord],
    ) -> Result<SwarmSkill, String>;
}

/// Mechanical folding that follows each directive literally.
///
/// * INSERT appends the content under an `## Evolved Guidance` heading in
///   every target file.
/// * REPLACE takes content of the form `<<<\nold\n===\nnew\n>>>` and swaps the
///   first occurrence of `old`.
/// * DELETE removes the first occurrence of the content.
/// * SPLIT_ROLE and ADD_ROLE create `roles/<id>.md` (id taken from the first
///   `roles/` target), declare the role and add a routing note to
///   workflow.md. REMOVE_ROLE does the reverse.
#[derive(Debug, Clone, Copy, Default)]
pub struct StubRewriter;

fn append_guidance(text: &mut String, content: &str) {
    if !text.is_empty() && !text.ends_with('\n') {
        text.push('\n');
    }
    let has_heading = text.lines().any(|l| l.trim_end() == EVOLVED_HEADING);
    if !has_heading {
        if !text.is_empty() {
            text.push('\n');
        }
        text.push_str(EVOLVED_HEADING);
        text.push('\n');
    }
    text.push('\n');
    text.push_str(content.trim());
    text.push('\n');
}

/// Mutable view of one target file inside a skill being rewritten.
fn with_file<F>(skill: &mut SwarmSkill, target: &str, f: F) -> Result<(), String>
where
    F: FnOnce(&mut String) -> Result<(), String>,
{
    if target == SKILL_FILE {
        return f(&mut skill.body);
    }
    if target == WORKFLOW_FILE {
        let text = skill
            .workflow
            .get_or_insert_with(|| "# Workflow\n".to_string());
        return f(text);
    }
    if target == BIND_FILE {
        let mut text = skill
            .bounds
            .as_ref()
            .map(|b| b.raw_text.clone())
            .unwrap_or_else(|| "# Execution Bounds\n".to_string());
        f(&mut text)?;
        skill.bounds = Some(ExecutionBounds::parse(&text));
        return Ok(());
    }
    if let Some(id) = role_of(target) {
        return match skill.roles.get_mut(id) {
            Some(text) => f(text),
            None => Err(format!("{target}: no such persona")),
        };
    }
    if target == crate::codec::EVOLUTIONS_FILE {
        return Err(format!("{target} cannot be a fold target"));
    }
    let key = std::path::PathBuf::from(target);
    let bytes = skill
        .extra_files
        .get(&key)
        .ok_or_else(|| format!("{target}: no such file"))?;
    let mut text =
        String::from_utf8(bytes.clone()).map_err(|_| format!("{target}: not UTF-8 text"))?;
    f(&mut text)?;
    skill.extra_files.insert(key, text.into_bytes());
    Ok(())
}

fn role_of(path: &str) -> Option<&str> {
    let id = path.strip_prefix("roles/")?.strip_suffix(".md")?;
    (!id.is_empty() && !id.contains('/')).then_some(id)
}

fn parse_replace(content: &str) -> Option<(&str, &str)> {
    let inner = content
        .trim()
        .strip_prefix("<<<\n")?
        .strip_suffix("\n>>>")?;
    inner.split_once("\n===\n")
}

/// First single-quoted phrase in `content`, e.g. the `Copywriting Expert` of
/// "Create a dedicated 'Copywriting Expert' role".
fn quoted_title(content: &str) -> Option<&str> {
    let start = content.find('\'')? + 1;
    let len = content[start..].find('\'')?;
    let t = content[start..start + len].trim();
    (!t.is_empty()).then_some(t)
}

fn fold_add_role(skill: &mut SwarmSkill, record: &EvolutionRecord) -> Result<(), String> {
    let d = &record.change_directive;
    let id = d
        .target_files
        .iter()
        .find_map(|t| role_of(t))
        .ok_or_else(|| format!("{}: {} needs a roles/<id>.md target", record.id, d.action))?
        .to_string();
    let taken = skill.frontmatter.role(&id).is_some()
        || skill.roles.contains_key(&id)
        || skill
            .extra_files
            .contains_key(std::path::Path::new(&persona_path(&id)));
    if taken {
        return Err(format!("{}: role `{id}` already exists", record.id));
    }
    let title = quoted_title(&d.content)
        .map(String::from)
        .unwrap_or_else(|| id.replace('-', " "));
    let persona = format!("# {title}\n\n{}\n", d.content.trim());
    skill.frontmatter.roles.push(RoleDecl::new(id.clone()));
    skill.roles.insert(id.clone(), persona);
    let note = format!(
        "Route to `{}` ({}): {}",
        persona_path(&id),
        record.id,
        d.content.trim()
    );
    with_file(skill, WORKFLOW_FILE, |t| {
        append_guidance(t, &note);
        Ok(())
    })
}

fn fold_remove_role(skill: &mut SwarmSkill, record: &EvolutionRecord) -> Result<(), String> {
    let d = &record.change_directive;
    let id = d
        .target_files
        .iter()
        .find_map(|t| role_of(t))
        .ok_or_else(|| format!("{}: REMOVE_ROLE needs a roles/<id>.md target", record.id))?
        .to_string();
    let before = skill.frontmatter.roles.len();
    skill.frontmatter.roles.retain(|r| r.id != id);
    if skill.frontmatter.roles.len() == before {
        return Err(format!("{}: role `{id}` is not declared", record.id));
    }
    skill.roles.remove(&id);
    let note = format!("Role `{id}` retired ({}): {}", record.id, d.content.trim());
    with_file(skill, WORKFLOW_FILE, |t| {
        append_guidance(t, &note);
        Ok(())
    })
}

fn fold(skill: &mut SwarmSkill, record: &EvolutionRecord) -> Result<(), String> {
    let d = &record.change_directive;
    match &d.action {
        DirectiveAction::Insert => {
            for target in &d.target_files {
                with_file(skill, target, |t| {
                    append_guidance(t, &d.content);
                    Ok(())
                })?;
            }
            Ok(())
        }
        DirectiveAction::Replace => {
            let (old, new) = parse_replace(&d.content).ok_or_else(|| {
                format!(
                    "{}: REPLACE content needs <<< old === new >>> markers",
                    record.id
                )
            })?;
            for target in &d.target_files {
                with_file(skill, target, |t| match t.find(old) {
                    Some(at) => {
                        t.replace_range(at..at + old.len(), new);
                        Ok(())
                    }
                    None => Err(format!(
                        "{}: {target} does not contain the text to replace",
                        record.id
                    )),
                })?;
            }
            Ok(())
        }
        DirectiveAction::Delete => {
            let old = d.content.as_str();
            for target in &d.target_files {
                with_file(skill, target, |t| match t.find(old) {
                    Some(at) if !old.is_empty() => {
                        t.replace_range(at..at + old.len(), "");
                        Ok(())
                    }
                    _ => Err(format!(
                        "{}: {target} does not contain the text to delete",
                        record.id
                    )),
                })?;
            }
            Ok(())
        }
        DirectiveAction::SplitRole | DirectiveAction::AddRole => fold_add_role(skill, record),
        DirectiveAction::RemoveRole => fold_remove_role(skill, record),
        DirectiveAction::Other(a) => Err(format!("{}: no folding rule for action {a}", record.id)),
    }
}

impl Rewriter for StubRewriter {
    fn rewrite(
        &self,
        skill: &SwarmSkill,
        records: &[EvolutionRecord],
    ) -> Result<SwarmSkill, String> {
        let mut out = skill.clone();
        for record in records {
            fold(&mut out, record)?;
        }
        Ok(out)
    }
}
