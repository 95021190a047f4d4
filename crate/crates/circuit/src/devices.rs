//! Large-signal device equations: Shockley diode, transport Ebers-Moll BJT and
//! level-1 (Shichman-Hodges) MOSFET.
//!
//! Each model returns the currents flowing *into* the device at each terminal
//! and their Jacobian with respect to the terminal voltages.

use crate::netlist::{ModelCard, ModelKind};

/// kT/q at 300 K.
pub const THERMAL_VOLTAGE: f64 = 0.025852;

/// Exponent beyond which `exp` is continued linearly.
const EXP_LIMIT: f64 = 40.0;

/// `exp(x)` with a linear continuation above [`EXP_LIMIT`]; returns (value, derivative).
pub fn limited_exp(x: f64) -> (f64, f64) {
    if x > EXP_LIMIT {
        let e = EXP_LIMIT.exp();
        (e * (1.0 + x - EXP_LIMIT), e)
    } else {
        let e = x.exp();
        (e, e)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiodeModel {
    pub is: f64,
    pub n: f64,
}

impl DiodeModel {
    pub fn from_card(card: &ModelCard) -> Self {
        Self { is: card.get("is", 1e-14), n: card.get("n", 1.0) }
    }

    /// Current from anode to cathode and its derivative at junction voltage `v`.
    pub fn eval(&self, v: f64) -> (f64, f64) {
        let nvt = self.n * THERMAL_VOLTAGE;
        let (e, de) = limited_exp(v / nvt);
        (self.is * (e - 1.0), self.is * de / nvt)
    }
}

/// Terminal currents into the device and `jac[i][j] = d current_i / d v_j`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TerminalStamp<const N: usize> {
    pub currents: [f64; N],
    pub jac: [[f64; N]; N],
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BjtModel {
    /// +1 for NPN, -1 for PNP.
    pub polarity: f64,
    pub is: f64,
    pub bf: f64,
    pub br: f64,
}

impl BjtModel {
    pub fn from_card(card: &ModelCard) -> Self {
        Self {
            polarity: if card.kind == ModelKind::Pnp { -1.0 } else { 1.0 },
            is: card.get("is", 1e-16),
            bf: card.get("bf", 100.0),
            br: card.get("br", 1.0),
        }
    }

    /// Terminal order (collector, base, emitter).
    pub fn eval(&self, vc: f64, vb: f64, ve: f64) -> TerminalStamp<3> {
        let p = self.polarity;
        let vbe = p * (vb - ve);
        let vbc = p * (vb - vc);
        let (ef, def) = limited_exp(vbe / THERMAL_VOLTAGE);
        let (er, der) = limited_exp(vbc / THERMAL_VOLTAGE);
        let i_f = self.is * (ef - 1.0);
        let i_r = self.is * (er - 1.0);
        let gf = self.is * def / THERMAL_VOLTAGE;
        let gr = self.is * der / THERMAL_VOLTAGE;

        let ic = i_f - i_r * (1.0 + 1.0 / self.br);
        let ib = i_f / self.bf + i_r / self.br;
        // derivatives with respect to (vbe, vbc) in the polarity-normalized frame
        let dic = [gf, -gr * (1.0 + 1.0 / self.br)];
        let dib = [gf / self.bf, gr / self.br];
        // d(vbe, vbc)/d(vc, vb, ve), scaled by p; the outer p on currents cancels it
        let chain = |d: [f64; 2]| [-d[1], d[0] + d[1], -d[0]];
        let jc = chain(dic);
        let jb = chain(dib);
        let je = [-(jc[0] + jb[0]), -(jc[1] + jb[1]), -(jc[2] + jb[2])];
        TerminalStamp { currents: [p * ic, p * ib, -p * (ic + ib)], jac: [jc, jb, je] }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MosModel {
    /// +1 for NMOS, -1 for PMOS.
    pub polarity: f64,
    /// Threshold in the polarity-normalized frame (positive for enhancement devices).
    pub vt: f64,
    /// KP * W / L.
    pub beta: f64,
    pub lambda: f64,
}

impl MosModel {
    pub fn new(card: &ModelCard, w: Option<f64>, l: Option<f64>) -> Self {
        let polarity = if card.kind == ModelKind::Pmos { -1.0 } else { 1.0 };
        let vto = card.get("vto", 0.7 * polarity);
        let w = w.unwrap_or_else(|| card.get("w", 1e-6));
        let l = l.unwrap_or_else(|| card.get("l", 1e-6));
        Self { polarity, vt: polarity * vto, beta: card.get("kp", 2e-5) * w / l, lambda: card.get("lambda", 0.0) }
    }

    /// Forward-mode drain current for `vds >= 0`: (ids, d/dvgs, d/dvds).
    fn forward(&self, vgs: f64, vds: f64) -> (f64, f64, f64) {
        let vov = vgs - self.vt;
        if vov <= 0.0 {
            return (0.0, 0.0, 0.0);
        }
        let clm = 1.0 + self.lambda * vds;
        if vds < vov {
            let core = vov * vds - 0.5 * vds * vds;
            (self.beta * core * clm, self.beta * vds * clm, self.beta * ((vov - vds) * clm + core * self.lambda))
        } else {
            let core = 0.5 * vov * vov;
            (self.beta * core * clm, self.beta * vov * clm, self.beta * core * self.lambda)
        }
    }

    /// Terminal order (drain, gate, source).
    pub fn eval(&self, vd: f64, vg: f64, vs: f64) -> TerminalStamp<3> {
        let p = self.polarity;
        let vgs = p * (vg - vs);
        let vds = p * (vd - vs);
        // drain current and its derivatives with respect to (vgs, vds), normalized frame
        let (ids, d_vgs, d_vds) = if vds >= 0.0 {
            self.forward(vgs, vds)
        } else {
            // source and drain swap roles
            let (i, a, b) = self.forward(vgs - vds, -vds);
            (-i, -a, a + b)
        };
        let jd = [d_vds, d_vgs, -(d_vgs + d_vds)];
        TerminalStamp {
            currents: [p * ids, 0.0, -p * ids],
            jac: [jd, [0.0; 3], [-jd[0], -jd[1], -jd[2]]],
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fd3<F: Fn(f64, f64, f64) -> TerminalStamp<3>>(f: F, v: [f64; 3]) -> [[f64; 3]; 3] {
        let mut jac = [[0.0; 3]; 3];
        for j in 0..3 {
            let h = 1e-7 * (1.0 + v[j].abs());
            let mut vp = v;
            let mut vm = v;
            vp[j] += h;
            vm[j] -= h;
            let (sp, sm) = (f(vp[0], vp[1], vp[2]), f(vm[0], vm[1], vm[2]));
            for i in 0..3 {
                jac[i][j] = (sp.currents[i] - sm.currents[i]) / (2.0 * h);
            }
        }
        jac
    }

    fn assert_jac_close(a: [[f64; 3]; 3], b: [[f64; 3]; 3]) {
        let scale = a.iter().flatten().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-12);
        for i in 0..3 {
            for j in 0..3 {
                assert!((a[i][j] - b[i][j]).abs() <= 1e-5 * scale, "{a:?} vs {b:?}");
            }
        }
    }

    #[test]
    fn diode_small_signal_at_zero() {
        let d = DiodeModel { is: 1e-14, n: 1.0 };
        let (i, g) = d.eval(0.0);
        assert_eq!(i, 0.0);
        assert!((g - 3.868172675228222e-13).abs() < 1e-25);
    }

    #[test]
    fn diode_forward_matches_extended_precision() {
        // 1e-14 * (exp(0.7/0.025852) - 1) evaluated with 40 significant digits
        let (i, _) = DiodeModel { is: 1e-14, n: 1.0 }.eval(0.7);
        assert!(((i - 5.747544405391674e-3) / 5.747544405391674e-3).abs() < 1e-13);
    }

    #[test]
    fn limited_exp_is_continuous() {
        let (a, da) = limited_exp(EXP_LIMIT - 1e-9);
        let (b, db) = limited_exp(EXP_LIMIT + 1e-9);
        assert!((a - b).abs() / a < 1e-8);
        assert!((da - db).abs() / da < 1e-8);
    }

    #[test]
    fn bjt_kcl_and_jacobian() {
        for polarity in [1.0, -1.0] {
            let q = BjtModel { polarity, is: 1e-16, bf: 100.0, br: 2.0 };
            for v in [[2.0, 0.7, 0.0], [0.1, 0.65, 0.0], [-0.3, 0.2, 0.5]] {
                let v = v.map(|x| x * polarity);
                let s = q.eval(v[0], v[1], v[2]);
                assert!(s.currents.iter().sum::<f64>().abs() < 1e-18);
                assert_jac_close(s.jac, fd3(|a, b, c| q.eval(a, b, c), v));
            }
        }
    }

    #[test]
    fn mos_regions_and_jacobian() {
        let m = MosModel { polarity: 1.0, vt: 0.7, beta: 1e-3, lambda: 0.02 };
        assert_eq!(m.eval(5.0, 0.3, 0.0).currents[0], 0.0);
        // saturation: beta/2 * 1.3^2 * (1 + 0.02*5)
        let sat = m.eval(5.0, 2.0, 0.0).currents[0];
        assert!((sat - 0.5e-3 * 1.69 * 1.1).abs() < 1e-15);
        for polarity in [1.0, -1.0] {
            let m = MosModel { polarity, ..m };
            for v in [[5.0, 2.0, 0.0], [0.4, 2.0, 0.0], [-0.5, 2.0, 0.3], [1.0, 1.5, 2.0]] {
                let v = v.map(|x| x * polarity);
                assert_jac_close(m.eval(v[0], v[1], v[2]).jac, fd3(|a, b, c| m.eval(a, b, c), v));
            }
        }
    }
}
