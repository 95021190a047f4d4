//! Bundled desk-scale benchmark decks.

use crate::netlist::{parse_netlist, Netlist};

/// (identifier, deck text) for every bundled circuit.
pub const DECKS: &[(&str, &str)] = &[
    ("divider", include_str!("../suite/divider.cir")),
    ("diode_bridge", include_str!("../suite/diode_bridge.cir")),
    ("clamp_chain", include_str!("../suite/clamp_chain.cir")),
    ("bjt_latch", include_str!("../suite/bjt_latch.cir")),
    ("bjt_inverter", include_str!("../suite/bjt_inverter.cir")),
    ("mos_chain", include_str!("../suite/mos_chain.cir")),
    ("current_mirror", include_str!("../suite/current_mirror.cir")),
    ("diode_network", include_str!("../suite/diode_network.cir")),
];

pub fn deck(id: &str) -> Option<&'static str> {
    DECKS.iter().find(|(name, _)| *name == id).map(|(_, text)| *text)
}

pub fn load(id: &str) -> Option<Netlist> {
    deck(id).map(|text| parse_netlist(text).unwrap_or_else(|e| panic!("bundled deck {id}: {e}")))
}

pub fn load_all() -> Vec<(String, Netlist)> {
    DECKS.iter().map(|(id, _)| (id.to_string(), load(id).unwrap())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_deck_parses() {
        assert_eq!(load_all().len(), DECKS.len());
        assert!(load("nope").is_none());
    }
}
