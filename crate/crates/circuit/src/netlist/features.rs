use serde::{Deserialize, Serialize};

use super::{ElementKind, Netlist};
use crate::error::ParseError;

/// Seven-factor netlist characterization used as the circuit input of the surrogate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct FeatureVector {
    pub n_nodes: usize,
    pub n_mna_equations: usize,
    pub n_capacitors: usize,
    pub n_resistors: usize,
    pub n_vsources: usize,
    pub n_bjt: usize,
    pub n_mosfet: usize,
}

impl FeatureVector {
    pub const DIM: usize = 7;

    pub fn to_array(&self) -> [f64; 7] {
        [
            self.n_nodes as f64,
            self.n_mna_equations as f64,
            self.n_capacitors as f64,
            self.n_resistors as f64,
            self.n_vsources as f64,
            self.n_bjt as f64,
            self.n_mosfet as f64,
        ]
    }
}

impl From<FeatureVector> for [f64; 7] {
    fn from(f: FeatureVector) -> Self {
        f.to_array()
    }
}

/// Counts the seven features. MNA equations are the non-ground nodes plus one
/// branch-current unknown per independent voltage source and per inductor.
pub fn extract_features(netlist: &Netlist) -> Result<FeatureVector, ParseError> {
    netlist.validate()?;
    let n_nodes = netlist.signal_nodes().len();
    let n_vsources = netlist.count(ElementKind::VSource);
    Ok(FeatureVector {
        n_nodes,
        n_mna_equations: n_nodes + n_vsources + netlist.count(ElementKind::Inductor),
        n_capacitors: netlist.count(ElementKind::Capacitor),
        n_resistors: netlist.count(ElementKind::Resistor),
        n_vsources,
        n_bjt: netlist.count(ElementKind::Bjt),
        n_mosfet: netlist.count(ElementKind::Mosfet),
    })
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::netlist::parse_netlist;

    #[test]
    fn divider() {
        let n = parse_netlist("d\nV1 1 0 1.0\nR1 1 2 1e3\nR2 2 0 1e3\n.end").unwrap();
        let f = extract_features(&n).unwrap();
        assert_eq!(f.to_array(), [2.0, 3.0, 0.0, 2.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn diode_and_source() {
        let n = parse_netlist("d\nV1 1 0 1.0\nD1 1 0 DMOD\n.model dmod d\n.end").unwrap();
        assert_eq!(extract_features(&n).unwrap().to_array(), [1.0, 2.0, 0.0, 0.0, 1.0, 0.0, 0.0]);
    }

    #[test]
    fn inductor_adds_branch_equation() {
        let n = parse_netlist("d\nV1 1 0 1\nL1 1 2 1m\nR1 2 0 1k\nC1 2 0 1u\n.end").unwrap();
        let f = extract_features(&n).unwrap();
        assert_eq!(f.n_mna_equations, 2 + 1 + 1);
        assert_eq!(f.n_capacitors, 1);
    }

    #[test]
    fn empty_element_list_is_rejected() {
        let empty = Netlist {
            title: "t".into(),
            nodes: vec!["0".into()],
            elements: vec![],
            models: BTreeMap::new(),
        };
        assert_eq!(extract_features(&empty), Err(ParseError::NoElements));
    }
}
