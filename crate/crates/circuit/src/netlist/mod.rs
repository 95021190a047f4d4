//! Circuit data model for the SPICE-subset deck format.

mod features;
mod parse;
mod perturb;

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::ParseError;

pub use features::{extract_features, FeatureVector};
pub use parse::parse_netlist;
pub use perturb::perturb_netlist;

/// Name of the reference node.
pub const GROUND: &str = "0";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ElementKind {
    Resistor,
    Capacitor,
    Inductor,
    VSource,
    ISource,
    Diode,
    Bjt,
    Mosfet,
}

impl ElementKind {
    pub fn from_letter(c: char) -> Option<Self> {
        Some(match c.to_ascii_uppercase() {
            'R' => Self::Resistor,
            'C' => Self::Capacitor,
            'L' => Self::Inductor,
            'V' => Self::VSource,
            'I' => Self::ISource,
            'D' => Self::Diode,
            'Q' => Self::Bjt,
            'M' => Self::Mosfet,
            _ => return None,
        })
    }

    pub fn terminal_count(self) -> usize {
        match self {
            Self::Bjt | Self::Mosfet => 3,
            _ => 2,
        }
    }

    pub fn is_device(self) -> bool {
        matches!(self, Self::Diode | Self::Bjt | Self::Mosfet)
    }

    pub fn is_transistor(self) -> bool {
        matches!(self, Self::Bjt | Self::Mosfet)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum ElementValue {
    /// SI value: ohm, farad, henry, volt or ampere.
    Value(f64),
    /// Device referencing a `.model` card, with optional instance parameters (`W=`, `L=`).
    Model {
        name: String,
        params: BTreeMap<String, f64>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Element {
    pub name: String,
    pub kind: ElementKind,
    /// Terminal nodes: `a b` for two-terminal elements, `c b e` for BJTs and
    /// `d g s` for MOSFETs (bulk tied to source).
    pub terminals: Vec<String>,
    pub value: ElementValue,
}

impl Element {
    pub fn scalar(&self) -> Option<f64> {
        match self.value {
            ElementValue::Value(v) => Some(v),
            ElementValue::Model { .. } => None,
        }
    }

    pub fn model_name(&self) -> Option<&str> {
        match &self.value {
            ElementValue::Model { name, .. } => Some(name),
            ElementValue::Value(_) => None,
        }
    }

    pub fn instance_param(&self, key: &str) -> Option<f64> {
        match &self.value {
            ElementValue::Model { params, .. } => params.get(key).copied(),
            ElementValue::Value(_) => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelKind {
    Diode,
    Npn,
    Pnp,
    Nmos,
    Pmos,
}

impl ModelKind {
    pub fn parse(s: &str) -> Option<Self> {
        Some(match s.to_ascii_lowercase().as_str() {
            "d" => Self::Diode,
            "npn" => Self::Npn,
            "pnp" => Self::Pnp,
            "nmos" => Self::Nmos,
            "pmos" => Self::Pmos,
            _ => return None,
        })
    }

    pub fn keyword(self) -> &'static str {
        match self {
            Self::Diode => "D",
            Self::Npn => "NPN",
            Self::Pnp => "PNP",
            Self::Nmos => "NMOS",
            Self::Pmos => "PMOS",
        }
    }

    pub fn fits(self, kind: ElementKind) -> bool {
        match self {
            Self::Diode => kind == ElementKind::Diode,
            Self::Npn | Self::Pnp => kind == ElementKind::Bjt,
            Self::Nmos | Self::Pmos => kind == ElementKind::Mosfet,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCard {
    pub kind: ModelKind,
    pub params: BTreeMap<String, f64>,
}

impl ModelCard {
    pub fn get(&self, key: &str, default: f64) -> f64 {
        self.params.get(key).copied().unwrap_or(default)
    }
}

/// A validated circuit. Construct through [`parse_netlist`] or [`Netlist::new`];
/// both enforce the structural invariants (ground present, unique names,
/// every node reaches ground, no dangling nodes, models resolvable).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Netlist {
    title: String,
    nodes: Vec<String>,
    elements: Vec<Element>,
    models: BTreeMap<String, ModelCard>,
}

impl Netlist {
    pub fn new(
        title: impl Into<String>,
        elements: Vec<Element>,
        models: BTreeMap<String, ModelCard>,
    ) -> Result<Self, ParseError> {
        let netlist = Self::assemble(title.into(), elements, models);
        netlist.validate()?;
        Ok(netlist)
    }

    fn assemble(title: String, elements: Vec<Element>, models: BTreeMap<String, ModelCard>) -> Self {
        let mut seen = HashSet::new();
        let mut nodes = vec![GROUND.to_string()];
        seen.insert(GROUND.to_string());
        for el in &elements {
            for t in &el.terminals {
                if seen.insert(t.clone()) {
                    nodes.push(t.clone());
                }
            }
        }
        Self { title, nodes, elements, models }
    }

    /// Checks the invariants that [`Netlist::new`] enforces.
    pub fn validate(&self) -> Result<(), ParseError> {
        if self.elements.is_empty() {
            return Err(ParseError::NoElements);
        }
        let mut names = HashSet::new();
        for el in &self.elements {
            if !names.insert(el.name.to_ascii_uppercase()) {
                return Err(ParseError::DuplicateElement { line: 0, name: el.name.clone() });
            }
            if el.terminals.len() != el.kind.terminal_count() {
                return Err(ParseError::InvalidElement {
                    element: el.name.clone(),
                    message: format!("expected {} terminals", el.kind.terminal_count()),
                });
            }
            match (&el.value, el.kind) {
                (ElementValue::Value(v), k) if !k.is_device() => {
                    if !v.is_finite() {
                        return Err(ParseError::InvalidElement {
                            element: el.name.clone(),
                            message: "value is not finite".into(),
                        });
                    }
                    if matches!(k, ElementKind::Resistor | ElementKind::Capacitor | ElementKind::Inductor)
                        && *v <= 0.0
                    {
                        return Err(ParseError::InvalidElement {
                            element: el.name.clone(),
                            message: "value must be strictly positive".into(),
                        });
                    }
                }
                (ElementValue::Model { name, .. }, k) if k.is_device() => match self.models.get(name) {
                    None => {
                        return Err(ParseError::UnknownModel { element: el.name.clone(), model: name.clone() })
                    }
                    Some(card) if !card.kind.fits(k) => {
                        return Err(ParseError::InvalidElement {
                            element: el.name.clone(),
                            message: format!("model `{name}` is a {} card", card.kind.keyword()),
                        })
                    }
                    Some(_) => {}
                },
                _ => {
                    return Err(ParseError::InvalidElement {
                        element: el.name.clone(),
                        message: "value/model does not match element type".into(),
                    })
                }
            }
        }
        if !self.elements.iter().any(|e| e.terminals.iter().any(|t| t == GROUND)) {
            return Err(ParseError::MissingGround);
        }
        self.check_connectivity()?;
        self.check_dangling()
    }

    fn check_connectivity(&self) -> Result<(), ParseError> {
        let index: HashMap<&str, usize> =
            self.nodes.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
        let mut parent: Vec<usize> = (0..self.nodes.len()).collect();
        fn find(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        for el in &self.elements {
            let first = index[el.terminals[0].as_str()];
            for t in &el.terminals[1..] {
                let (a, b) = (find(&mut parent, first), find(&mut parent, index[t.as_str()]));
                parent[a] = b;
            }
        }
        let root = find(&mut parent, 0);
        for (i, node) in self.nodes.iter().enumerate() {
            if find(&mut parent, i) != root {
                return Err(ParseError::Disconnected { node: node.clone() });
            }
        }
        Ok(())
    }

    fn check_dangling(&self) -> Result<(), ParseError> {
        let mut count: HashMap<&str, (usize, &str)> = HashMap::new();
        for el in &self.elements {
            for t in &el.terminals {
                let entry = count.entry(t.as_str()).or_insert((0, el.name.as_str()));
                entry.0 += 1;
            }
        }
        for node in self.nodes.iter().skip(1) {
            let (n, element) = count[node.as_str()];
            if n < 2 {
                return Err(ParseError::DanglingNode { node: node.clone(), element: element.to_string() });
            }
        }
        Ok(())
    }

    pub fn title(&self) -> &str {
        &self.title
    }

    /// All node names, ground first, then in order of first reference.
    pub fn nodes(&self) -> &[String] {
        &self.nodes
    }

    /// Non-ground nodes in unknown order.
    pub fn signal_nodes(&self) -> &[String] {
        &self.nodes[1..]
    }

    pub fn elements(&self) -> &[Element] {
        &self.elements
    }

    pub fn models(&self) -> &BTreeMap<String, ModelCard> {
        &self.models
    }

    pub fn model(&self, name: &str) -> Option<&ModelCard> {
        self.models.get(name)
    }

    pub fn count(&self, kind: ElementKind) -> usize {
        self.elements.iter().filter(|e| e.kind == kind).count()
    }

    /// Returns a copy with element values replaced through `f`. Topology is unchanged.
    pub(crate) fn map_values(&self, mut f: impl FnMut(&Element) -> Option<f64>) -> Self {
        let mut out = self.clone();
        for el in &mut out.elements {
            if let Some(v) = f(el) {
                el.value = ElementValue::Value(v);
            }
        }
        out
    }

    /// Canonical deck text; [`parse_netlist`] of the result yields an equal netlist.
    pub fn serialize(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Netlist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{}", self.title)?;
        for el in &self.elements {
            write!(f, "{}", el.name)?;
            for t in &el.terminals {
                write!(f, " {t}")?;
            }
            match &el.value {
                ElementValue::Value(v) if matches!(el.kind, ElementKind::VSource | ElementKind::ISource) => {
                    write!(f, " DC {v:e}")?
                }
                ElementValue::Value(v) => write!(f, " {v:e}")?,
                ElementValue::Model { name, params } => {
                    write!(f, " {name}")?;
                    for (k, v) in params {
                        write!(f, " {k}={v:e}")?;
                    }
                }
            }
            writeln!(f)?;
        }
        for (name, card) in &self.models {
            write!(f, ".model {name} {}", card.kind.keyword())?;
            if !card.params.is_empty() {
                write!(f, " (")?;
                for (i, (k, v)) in card.params.iter().enumerate() {
                    if i > 0 {
                        write!(f, " ")?;
                    }
                    write!(f, "{k}={v:e}")?;
                }
                write!(f, ")")?;
            }
            writeln!(f)?;
        }
        writeln!(f, ".end")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const DIVIDER: &str = "divider\nV1 1 0 1.0\nR1 1 2 1e3\nR2 2 0 1e3\n.end\n";

    #[test]
    fn divider_counts() {
        let n = parse_netlist(DIVIDER).unwrap();
        assert_eq!(n.elements().len(), 3);
        assert_eq!(n.nodes(), ["0", "1", "2"]);
        assert_eq!(n.title(), "divider");
    }

    #[test]
    fn disconnected_component() {
        let text = "divider\nV1 1 0 1.0\nR1 1 2 1e3\nR2 2 0 1e3\nR3 5 6 1.0\n.end\n";
        assert!(matches!(parse_netlist(text), Err(ParseError::Disconnected { .. })));
    }

    #[test]
    fn dangling_node() {
        let text = "t\nV1 1 0 1\nR1 1 0 1k\nR2 1 7 1k\n.end\n";
        // node 7 reaches ground only through R2, so connectivity passes and the
        // single-reference check fires.
        assert!(matches!(parse_netlist(text), Err(ParseError::DanglingNode { .. })));
    }

    #[test]
    fn missing_ground() {
        let text = "t\nV1 1 2 1\nR1 1 2 1k\n.end\n";
        assert_eq!(parse_netlist(text), Err(ParseError::MissingGround));
    }

    #[test]
    fn serialize_round_trip() {
        let text = "bjt\nV1 vcc 0 DC 5\nR1 vcc b 100k\nR2 vcc c 1k\nQ1 c b 0 qn\nD1 c 0 dm\n\
                    .model qn NPN (bf=120 is=1e-16)\n.model dm D is=2e-14\n.end\n";
        let n = parse_netlist(text).unwrap();
        let again = parse_netlist(&n.serialize()).unwrap();
        assert_eq!(n, again);
    }
}
