use std::collections::BTreeMap;

use super::{Element, ElementKind, ElementValue, ModelCard, ModelKind, Netlist};
use crate::error::ParseError;
use crate::units::parse_value;

/// Parses a SPICE-subset deck.
///
/// The first line is the title. Remaining lines are element cards, `.model`
/// cards, `*` comments, `+` continuations, `.op` (ignored) or `.end`. Text after
/// `;` is a comment. Everything except the title is case-insensitive: element
/// names are upper-cased, node and model names lower-cased.
pub fn parse_netlist(text: &str) -> Result<Netlist, ParseError> {
    if text.trim().is_empty() {
        return Err(ParseError::Empty);
    }
    let mut lines = text.lines().enumerate();
    let title = lines.next().map(|(_, l)| l.trim().to_string()).unwrap_or_default();

    // join continuation lines, keeping the line number of the first physical line
    let mut cards: Vec<(usize, String)> = Vec::new();
    for (i, raw) in lines {
        let line = raw.split(';').next().unwrap_or("").trim();
        if line.is_empty() || line.starts_with('*') {
            continue;
        }
        if let Some(rest) = line.strip_prefix('+') {
            match cards.last_mut() {
                Some((_, card)) => {
                    card.push(' ');
                    card.push_str(rest.trim());
                }
                None => return Err(syntax(i + 1, "continuation line without a preceding card")),
            }
            continue;
        }
        cards.push((i + 1, line.to_string()));
    }

    let mut elements: Vec<(usize, Element)> = Vec::new();
    let mut models = BTreeMap::new();
    for (line, card) in cards {
        let lower = card.to_ascii_lowercase();
        if lower.starts_with('.') {
            let keyword = lower.split_whitespace().next().unwrap_or("");
            match keyword {
                ".end" => break,
                ".op" => continue,
                ".model" => {
                    let (name, model) = parse_model(line, &card)?;
                    if models.insert(name.clone(), model).is_some() {
                        return Err(ParseError::DuplicateModel { line, name });
                    }
                }
                other => return Err(syntax(line, &format!("unsupported control card `{other}`"))),
            }
            continue;
        }
        let el = parse_element(line, &card)?;
        if elements.iter().any(|(_, e)| e.name == el.name) {
            return Err(ParseError::DuplicateElement { line, name: el.name });
        }
        elements.push((line, el));
    }

    let elements: Vec<Element> = elements.into_iter().map(|(_, e)| e).collect();
    Netlist::new(title, elements, models)
}

fn syntax(line: usize, message: &str) -> ParseError {
    ParseError::Syntax { line, message: message.to_string() }
}

fn parse_element(line: usize, card: &str) -> Result<Element, ParseError> {
    let tokens: Vec<&str> = card.split_whitespace().collect();
    let name = tokens[0].to_ascii_uppercase();
    let letter = name.chars().next().unwrap_or(' ');
    let kind = ElementKind::from_letter(letter)
        .ok_or_else(|| syntax(line, &format!("unknown element type `{letter}`")))?;
    let n_term = kind.terminal_count();
    if tokens.len() < 1 + n_term + 1 {
        return Err(syntax(line, &format!("`{name}` needs {n_term} nodes and a value")));
    }
    let terminals: Vec<String> = tokens[1..=n_term].iter().map(|t| t.to_ascii_lowercase()).collect();
    let rest = &tokens[1 + n_term..];

    let value = if kind.is_device() {
        let mut rest = rest;
        // optional MOSFET bulk node: tied to source, so it is dropped
        if kind == ElementKind::Mosfet && rest.len() >= 2 && !rest[1].contains('=') {
            rest = &rest[1..];
        }
        let model = rest[0].to_ascii_lowercase();
        let mut params = BTreeMap::new();
        for tok in &rest[1..] {
            let (k, v) = parse_assignment(line, tok)?;
            params.insert(k, v);
        }
        ElementValue::Model { name: model, params }
    } else {
        let mut rest = rest;
        if matches!(kind, ElementKind::VSource | ElementKind::ISource) && rest[0].eq_ignore_ascii_case("dc") {
            rest = &rest[1..];
        }
        let tok = rest
            .first()
            .ok_or_else(|| syntax(line, &format!("`{name}` is missing its value")))?;
        if rest.len() > 1 {
            return Err(syntax(line, &format!("unexpected token `{}`", rest[1])));
        }
        let v = parse_value(tok).ok_or_else(|| syntax(line, &format!("invalid number `{tok}`")))?;
        if matches!(kind, ElementKind::Resistor | ElementKind::Capacitor | ElementKind::Inductor) && v <= 0.0 {
            return Err(syntax(line, &format!("`{name}` must have a positive value")));
        }
        ElementValue::Value(v)
    };
    Ok(Element { name, kind, terminals, value })
}

fn parse_assignment(line: usize, tok: &str) -> Result<(String, f64), ParseError> {
    let (k, v) = tok
        .split_once('=')
        .ok_or_else(|| syntax(line, &format!("expected key=value, found `{tok}`")))?;
    let v = parse_value(v).ok_or_else(|| syntax(line, &format!("invalid number in `{tok}`")))?;
    Ok((k.trim().to_ascii_lowercase(), v))
}

fn parse_model(line: usize, card: &str) -> Result<(String, ModelCard), ParseError> {
    let cleaned = card.replace(['(', ')', ','], " ");
    // allow `key = value` with spaces
    let cleaned = cleaned.replace(" =", "=").replace("= ", "=");
    let tokens: Vec<&str> = cleaned.split_whitespace().collect();
    if tokens.len() < 3 {
        return Err(syntax(line, ".model needs a name and a type"));
    }
    let name = tokens[1].to_ascii_lowercase();
    let kind = ModelKind::parse(tokens[2])
        .ok_or_else(|| syntax(line, &format!("unsupported model type `{}`", tokens[2])))?;
    let mut params = BTreeMap::new();
    for tok in &tokens[3..] {
        let (k, v) = parse_assignment(line, tok)?;
        params.insert(k, v);
    }
    Ok((name, ModelCard { kind, params }))
}
