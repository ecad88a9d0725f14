//! The five-call skill pool: typed actions, a strict flat-call parser, the
//! canonical renderer, and the scanner that pulls action lists out of raw
//! planner responses.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

/// Kind an entity token resolves to inside a world configuration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EntityKind {
    Robot,
    Object,
    Space,
    Container,
    Device,
    Navpoint,
}

/// Returns true when `token` matches `[a-z][a-z0-9_]*`.
pub fn is_valid_token(token: &str) -> bool {
    let mut chars = token.chars();
    match chars.next() {
        Some(c) if c.is_ascii_lowercase() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

/// One call from the skill pool. Every argument is an entity token; whether
/// it names an existing entity is decided later against a world config.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "skill", rename_all = "snake_case")]
pub enum Action {
    Open {
        robot: String,
        target: String,
    },
    Close {
        robot: String,
        target: String,
    },
    PickFrom {
        robot: String,
        object: String,
        space: String,
    },
    ReleaseTo {
        robot: String,
        space: String,
    },
    GoTo {
        robot: String,
        navpoint: String,
    },
}

impl Action {
    pub fn skill(&self) -> Skill {
        match self {
            Action::Open { .. } => Skill::Open,
            Action::Close { .. } => Skill::Close,
            Action::PickFrom { .. } => Skill::PickFrom,
            Action::ReleaseTo { .. } => Skill::ReleaseTo,
            Action::GoTo { .. } => Skill::GoTo,
        }
    }

    pub fn robot(&self) -> &str {
        match self {
            Action::Open { robot, .. }
            | Action::Close { robot, .. }
            | Action::PickFrom { robot, .. }
            | Action::ReleaseTo { robot, .. }
            | Action::GoTo { robot, .. } => robot,
        }
    }

    /// Arguments in signature order.
    pub fn args(&self) -> Vec<&str> {
        match self {
            Action::Open { robot, target } | Action::Close { robot, target } => {
                vec![robot, target]
            }
            Action::PickFrom { robot, object, space } => vec![robot, object, space],
            Action::ReleaseTo { robot, space } => vec![robot, space],
            Action::GoTo { robot, navpoint } => vec![robot, navpoint],
        }
    }

    /// Expected entity kind for each argument position.
    pub fn arg_kinds(&self) -> &'static [ArgKind] {
        self.skill().arg_kinds()
    }

    fn from_parts(skill: Skill, mut args: Vec<String>) -> Action {
        debug_assert_eq!(args.len(), skill.arity());
        let mut next = || args.remove(0);
        match skill {
            Skill::Open => Action::Open {
                robot: next(),
                target: next(),
            },
            Skill::Close => Action::Close {
                robot: next(),
                target: next(),
            },
            Skill::PickFrom => Action::PickFrom {
                robot: next(),
                object: next(),
                space: next(),
            },
            Skill::ReleaseTo => Action::ReleaseTo {
                robot: next(),
                space: next(),
            },
            Skill::GoTo => Action::GoTo {
                robot: next(),
                navpoint: next(),
            },
        }
    }
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}({})", self.skill().name(), self.args().join(", "))
    }
}

/// Argument slot types used by static validation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ArgKind {
    Robot,
    Object,
    /// A container (something with an open flag).
    Openable,
    /// Any place an object can sit: space, container, or device.
    Place,
    Navpoint,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Skill {
    Open,
    Close,
    PickFrom,
    ReleaseTo,
    GoTo,
}

impl Skill {
    pub const ALL: [Skill; 5] = [
        Skill::Open,
        Skill::Close,
        Skill::PickFrom,
        Skill::ReleaseTo,
        Skill::GoTo,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Skill::Open => "open",
            Skill::Close => "close",
            Skill::PickFrom => "pick_from",
            Skill::ReleaseTo => "release_to",
            Skill::GoTo => "go_to",
        }
    }

    pub fn arity(self) -> usize {
        self.arg_kinds().len()
    }

    pub fn arg_kinds(self) -> &'static [ArgKind] {
        match self {
            Skill::Open | Skill::Close => &[ArgKind::Robot, ArgKind::Openable],
            Skill::PickFrom => &[ArgKind::Robot, ArgKind::Object, ArgKind::Place],
            Skill::ReleaseTo => &[ArgKind::Robot, ArgKind::Place],
            Skill::GoTo => &[ArgKind::Robot, ArgKind::Navpoint],
        }
    }

    /// Case-insensitive lookup.
    pub fn from_name(name: &str) -> Option<Skill> {
        let lower = name.to_ascii_lowercase();
        Skill::ALL.into_iter().find(|s| s.name() == lower)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParseErrorKind {
    EmptyInput,
    UnknownSkill,
    BadArity,
    BadToken,
    NoActionFound,
}

/// A rejected action string. `span` is a byte range into the text that was
/// handed to the parser (for [`extract_actions`], the whole response).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize, thiserror::Error)]
#[error("{kind:?} at {span:?}: {message}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub span: Range<usize>,
    pub message: String,
}

impl ParseError {
    fn new(kind: ParseErrorKind, span: Range<usize>, message: impl Into<String>) -> Self {
        Self {
            kind,
            span,
            message: message.into(),
        }
    }

    fn shifted(mut self, offset: usize) -> Self {
        self.span = self.span.start + offset..self.span.end + offset;
        self
    }
}

/// Parses one flat call such as `pick_from(robot1, apple, table)`.
///
/// Errors are reported with the first applicable kind in the order
/// `EmptyInput`, `UnknownSkill`, `BadArity`, `BadToken`. Structural damage
/// (missing parenthesis, trailing text, nested calls) is reported as
/// `BadToken` once the skill name and argument count have been checked.
pub fn parse_action(text: &str) -> Result<Action, ParseError> {
    let lead = text.len() - text.trim_start().len();
    let trimmed = text.trim();
    if trimmed.is_empty() {
        return Err(ParseError::new(
            ParseErrorKind::EmptyInput,
            0..text.len(),
            "empty action",
        ));
    }
    let end = lead + trimmed.len();

    let (name_raw, open_paren) = match trimmed.find('(') {
        Some(i) => (&trimmed[..i], Some(lead + i)),
        None => (trimmed, None),
    };
    let name = name_raw.trim_end();
    let name_span = lead..lead + name.len();
    let skill = Skill::from_name(name).ok_or_else(|| {
        ParseError::new(
            ParseErrorKind::UnknownSkill,
            name_span.clone(),
            format!("unknown skill `{name}`"),
        )
    })?;

    let Some(open_paren) = open_paren else {
        return Err(ParseError::new(
            ParseErrorKind::BadArity,
            lead..end,
            format!("`{}` expects {} arguments, got none", skill.name(), skill.arity()),
        ));
    };

    let close_paren = text[..end].rfind(')').filter(|&i| i > open_paren);
    let inner_end = close_paren.unwrap_or(end);
    let inner = &text[open_paren + 1..inner_end];

    // Split arguments keeping byte offsets into `text`.
    let mut args: Vec<(&str, Range<usize>)> = Vec::new();
    if !inner.trim().is_empty() || inner.contains(',') {
        let mut start = open_paren + 1;
        for piece in inner.split(',') {
            let piece_start = start;
            start += piece.len() + 1;
            let l = piece.len() - piece.trim_start().len();
            let t = piece.trim();
            let s = piece_start + l;
            args.push((t, s..s + t.len()));
        }
    }

    if args.len() != skill.arity() {
        return Err(ParseError::new(
            ParseErrorKind::BadArity,
            open_paren..inner_end.max(open_paren + 1),
            format!(
                "`{}` expects {} arguments, got {}",
                skill.name(),
                skill.arity(),
                args.len()
            ),
        ));
    }

    for (arg, span) in &args {
        if !is_valid_token(arg) {
            let span = if span.is_empty() {
                span.start..(span.start + 1).min(end)
            } else {
                span.clone()
            };
            return Err(ParseError::new(
                ParseErrorKind::BadToken,
                span,
                format!("`{arg}` is not a valid entity token"),
            ));
        }
    }

    match close_paren {
        None => {
            return Err(ParseError::new(
                ParseErrorKind::BadToken,
                end.saturating_sub(1)..end,
                "missing closing parenthesis",
            ))
        }
        Some(i) if i + 1 != end => {
            return Err(ParseError::new(
                ParseErrorKind::BadToken,
                i + 1..end,
                "unexpected text after closing parenthesis",
            ))
        }
        Some(_) => {}
    }

    Ok(Action::from_parts(
        skill,
        args.into_iter().map(|(a, _)| a.to_string()).collect(),
    ))
}

/// Canonical form: `name(arg1, arg2[, arg3])`.
pub fn render_action(action: &Action) -> String {
    action.to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkillDoc {
    pub name: &'static str,
    pub signature: &'static str,
    pub description: &'static str,
}

const CATALOG: [SkillDoc; 5] = [
    SkillDoc {
        name: "open",
        signature: "open(robot, openable_object)",
        description: "robot opens the object",
    },
    SkillDoc {
        name: "close",
        signature: "close(robot, openable_object)",
        description: "robot closes the object",
    },
    SkillDoc {
        name: "pick_from",
        signature: "pick_from(robot, object, space)",
        description: "robot picks the object from the space",
    },
    SkillDoc {
        name: "release_to",
        signature: "release_to(robot, space)",
        description: "robot releases the object in its hand to the space",
    },
    SkillDoc {
        name: "go_to",
        signature: "go_to(robot, navi_point)",
        description: "robot navigates to the navigation point",
    },
];

pub fn skill_catalog() -> &'static [SkillDoc] {
    &CATALOG
}

/// The catalog as a prompt block, one `signature: description` per line.
pub fn render_catalog() -> String {
    CATALOG
        .iter()
        .map(|d| format!("- {}: {}", d.signature, d.description))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Result of scanning a planner response.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Extracted {
    pub actions: Vec<Action>,
    pub errors: Vec<ParseError>,
}

/// Scans `llm_text` for an `ACTIONS:` block and parses every line in it.
///
/// The block starts at the first line whose tag is `ACTIONS:` (any case) and
/// runs until the next `TAG:` line or the end of the text. Blank lines and
/// code fences are skipped; a leading list marker (`-`, `*`, `1.`, `1)`) is
/// stripped. Each remaining line is parsed on its own and failures are
/// collected, never repaired.
pub fn extract_actions(llm_text: &str) -> Result<Extracted, ParseError> {
    let mut offset = 0usize;
    let mut in_block = false;
    let mut found = false;
    let mut out = Extracted::default();

    for raw_line in llm_text.split_inclusive('\n') {
        let line_start = offset;
        offset += raw_line.len();
        let line = raw_line.trim_end_matches(['\n', '\r']);

        if let Some(rest_at) = section_tag(line) {
            let (tag, rest_offset) = rest_at;
            if in_block {
                break;
            }
            if tag.eq_ignore_ascii_case("actions") {
                in_block = true;
                found = true;
                let rest = &line[rest_offset..];
                if !rest.trim().is_empty() {
                    parse_block_line(rest, line_start + rest_offset, &mut out);
                }
            }
            continue;
        }
        if in_block {
            parse_block_line(line, line_start, &mut out);
        }
    }

    if !found {
        return Err(ParseError::new(
            ParseErrorKind::NoActionFound,
            0..llm_text.len(),
            "response has no ACTIONS block",
        ));
    }
    Ok(out)
}

/// Recognizes `TAG:` headers (uppercase letters, digits, `_`, spaces) and
/// returns the tag with the byte offset just past the colon. Canonical action
/// lines never match because their names are lowercase.
fn section_tag(line: &str) -> Option<(&str, usize)> {
    let trimmed = line.trim_start();
    let lead = line.len() - trimmed.len();
    let colon = trimmed.find(':')?;
    let tag = trimmed[..colon].trim();
    let is_tag = !tag.is_empty()
        && tag.chars().next().is_some_and(|c| c.is_ascii_alphabetic())
        && tag
            .chars()
            .all(|c| c.is_ascii_uppercase() || c.is_ascii_digit() || c == '_' || c == ' ');
    is_tag.then_some((tag, lead + colon + 1))
}

fn parse_block_line(line: &str, line_start: usize, out: &mut Extracted) {
    let trimmed = line.trim();
    if trimmed.is_empty() || trimmed.starts_with("```") {
        return;
    }
    let lead = line.len() - line.trim_start().len();
    let body = strip_list_marker(trimmed);
    let body_start = line_start + lead + (trimmed.len() - body.len());
    match parse_action(body) {
        Ok(a) => out.actions.push(a),
        Err(e) => out.errors.push(e.shifted(body_start)),
    }
}

fn strip_list_marker(s: &str) -> &str {
    if let Some(rest) = s.strip_prefix("- ").or_else(|| s.strip_prefix("* ")) {
        return rest.trim_start();
    }
    let digits = s.bytes().take_while(u8::is_ascii_digit).count();
    if digits > 0 {
        let rest = &s[digits..];
        if let Some(r) = rest.strip_prefix(". ").or_else(|| rest.strip_prefix(") ")) {
            return r.trim_start();
        }
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    fn kind(text: &str) -> ParseErrorKind {
        parse_action(text).unwrap_err().kind
    }

    #[test]
    fn parses_table_forms() {
        assert_eq!(
            parse_action("open(robot1, refrigerator)").unwrap(),
            Action::Open {
                robot: "robot1".into(),
                target: "refrigerator".into()
            }
        );
        assert_eq!(
            parse_action("  PICK_FROM ( robot1 ,apple,  table )  ").unwrap(),
            Action::PickFrom {
                robot: "robot1".into(),
                object: "apple".into(),
                space: "table".into()
            }
        );
    }

    #[test]
    fn error_precedence() {
        assert_eq!(kind(""), ParseErrorKind::EmptyInput);
        assert_eq!(kind("   \t"), ParseErrorKind::EmptyInput);
        assert_eq!(kind("grab(robot1, apple)"), ParseErrorKind::UnknownSkill);
        // unknown name wins over bad arity and bad tokens
        assert_eq!(kind("grab(Robot1)"), ParseErrorKind::UnknownSkill);
        assert_eq!(kind("pick_from(robot1, apple)"), ParseErrorKind::BadArity);
        assert_eq!(kind("pick_from(Robot1, apple)"), ParseErrorKind::BadArity);
        assert_eq!(kind("open"), ParseErrorKind::BadArity);
        assert_eq!(kind("open(robot1, Oven)"), ParseErrorKind::BadToken);
        assert_eq!(kind("open(robot1, oven"), ParseErrorKind::BadToken);
        assert_eq!(kind("open(robot1, oven) now"), ParseErrorKind::BadToken);
        assert_eq!(kind("open(robot1, f(x))"), ParseErrorKind::BadToken);
    }

    #[test]
    fn spans_stay_in_bounds() {
        for s in ["", " ", "x", "open(", "open(a,", "go_to(robot1, )", "go_to(,)"] {
            if let Err(e) = parse_action(s) {
                assert!(e.span.start <= e.span.end && e.span.end <= s.len(), "{s:?} {e:?}");
            }
        }
    }

    #[test]
    fn render_is_canonical() {
        let a = Action::GoTo {
            robot: "robot1".into(),
            navpoint: "sink".into(),
        };
        assert_eq!(render_action(&a), "go_to(robot1, sink)");
        let o = Action::Open {
            robot: "robot1".into(),
            target: "oven".into(),
        };
        assert_eq!(render_action(&o), "open(robot1, oven)");
    }

    #[test]
    fn catalog_matches_action_variants() {
        let cat = skill_catalog();
        assert_eq!(cat.len(), 5);
        assert_eq!(cat[0].name, "open");
        for (doc, skill) in cat.iter().zip(Skill::ALL) {
            assert_eq!(doc.name, skill.name());
            assert!(doc.signature.starts_with(&format!("{}(", skill.name())));
            assert_eq!(doc.signature.matches(',').count() + 1, skill.arity());
        }
        let block = render_catalog();
        for doc in cat {
            assert!(block.contains(doc.signature));
        }
    }

    #[test]
    fn extract_mixed_block() {
        let text = "THOUGHT: the drawer may hold it\nSUBGOAL: find medication\nACTIONS:\n- go_to(robot1, drawer_left)\n- open(robot1 drawer_left)\n- open(robot1, drawer_left)\n";
        let ex = extract_actions(text).unwrap();
        assert_eq!(ex.actions.len(), 2);
        assert_eq!(ex.errors.len(), 1);
        let e = &ex.errors[0];
        assert_eq!(e.kind, ParseErrorKind::BadArity);
        assert!(text[e.span.clone()].contains("robot1 drawer_left"));
    }

    #[test]
    fn extract_stops_at_next_tag_and_skips_fences() {
        let text = "ACTIONS:\n```\n1. go_to(robot1, sink)\n```\n\nNOTES: pick_from(robot1, cup, sink)\n";
        let ex = extract_actions(text).unwrap();
        assert_eq!(ex.actions.len(), 1);
        assert!(ex.errors.is_empty());
    }

    #[test]
    fn extract_inline_actions_line() {
        let ex = extract_actions("ACTIONS: go_to(robot1, sink)").unwrap();
        assert_eq!(ex.actions.len(), 1);
    }

    #[test]
    fn prose_has_no_block() {
        let err = extract_actions("I would open the fridge first.").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::NoActionFound);
    }
}
