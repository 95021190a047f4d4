use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use super::{ElementKind, Netlist};
use crate::error::ParamError;

/// Monte-Carlo sample of `base`: every resistor is scaled by an independent
/// `N(1, variation²)` draw. Non-positive draws are redrawn. The draw sequence is
/// a pure function of `seed` and the resistor order.
pub fn perturb_netlist(base: &Netlist, variation: f64, seed: u64) -> Result<Netlist, ParamError> {
    if !(variation > 0.0 && variation < 1.0) {
        return Err(ParamError::Variation(variation));
    }
    if base.count(ElementKind::Resistor) == 0 {
        return Err(ParamError::NoResistor);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(1.0, variation).expect("variation checked above");
    Ok(base.map_values(|el| {
        if el.kind != ElementKind::Resistor {
            return None;
        }
        let r = el.scalar().expect("resistors carry values");
        loop {
            let g: f64 = normal.sample(&mut rng);
            if g > 0.0 {
                return Some(r * g);
            }
        }
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::netlist::parse_netlist;

    fn divider() -> Netlist {
        parse_netlist("d\nV1 1 0 1.0\nR1 1 2 1e3\nR2 2 0 1e3\n.end").unwrap()
    }

    #[test]
    fn variation_bounds() {
        assert_eq!(perturb_netlist(&divider(), 0.0, 1), Err(ParamError::Variation(0.0)));
        assert_eq!(perturb_netlist(&divider(), 1.0, 1), Err(ParamError::Variation(1.0)));
        assert!(perturb_netlist(&divider(), f64::NAN, 1).is_err());
    }

    #[test]
    fn requires_a_resistor() {
        let n = parse_netlist("d\nV1 1 0 1\nD1 1 0 dm\n.model dm d\n.end").unwrap();
        assert_eq!(perturb_netlist(&n, 0.1, 1), Err(ParamError::NoResistor));
    }

    #[test]
    fn seeded_and_resistor_only() {
        let base = divider();
        let a = perturb_netlist(&base, 0.05, 42).unwrap();
        let b = perturb_netlist(&base, 0.05, 42).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.elements()[0], base.elements()[0]);
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let normal = Normal::new(1.0, 0.05).unwrap();
        let g1: f64 = normal.sample(&mut rng);
        let g2: f64 = normal.sample(&mut rng);
        assert_eq!(a.elements()[1].scalar(), Some(1e3 * g1));
        assert_eq!(a.elements()[2].scalar(), Some(1e3 * g2));
        assert_ne!(a, perturb_netlist(&base, 0.05, 43).unwrap());
    }
}
