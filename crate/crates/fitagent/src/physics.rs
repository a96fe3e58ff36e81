//! Reference physics models the agent is expected to rediscover.
//!
//! These are the ground-truth implementations used to synthesize oracle
//! datasets and to cross-check fitted equations; the agent itself only ever
//! sees the expression DSL. Quantum-gap formulas work in Hartree atomic
//! units: h = 2*pi, m_e = 1, so the particle-in-a-box prefactor
//! h^2/(8 m_e) collapses to pi^2/2 exactly.

use std::f64::consts::PI;

/// Planck constant in Hartree atomic units.
pub const H: f64 = 2.0 * PI;
/// Electron mass in Hartree atomic units.
pub const M_E: f64 = 1.0;
/// 1 hartree in electronvolts.
pub const HARTREE_TO_EV: f64 = 27.2114;
/// h^2 / (8 m_e) = pi^2 / 2 in these units.
pub const BOX_COEFF: f64 = PI * PI / 2.0;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PhysicsError {
    #[error("grain size must be positive, got {0}")]
    NonPositiveGrainSize(f64),
    #[error("stress intensity range must be positive, got {0}")]
    NonPositiveRange(f64),
    #[error("electron count must be at least 2, got {0}")]
    ElectronCountTooSmall(f64),
    #[error("box length must be positive, got {0}")]
    NonPositiveLength(f64),
    #[error("strain {eps} collapses the chain: 1 + delta = {stretched}")]
    CollapsedLength { eps: f64, stretched: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HallPetchParams {
    /// Friction stress, MPa.
    pub sigma0: f64,
    /// Strengthening coefficient, MPa * sqrt(length unit of d).
    pub k: f64,
}

/// Hall-Petch yield strength: sigma = sigma0 + k * d^(-1/2).
pub fn hall_petch(d: f64, p: &HallPetchParams) -> Result<f64, PhysicsError> {
    if d <= 0.0 {
        return Err(PhysicsError::NonPositiveGrainSize(d));
    }
    Ok(p.sigma0 + p.k * d.powf(-0.5))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParisParams {
    /// Growth coefficient, length/cycle at unit stress intensity.
    pub c: f64,
    /// Growth exponent, dimensionless; Region II steels sit near 2-4.
    pub m: f64,
}

/// Paris law crack growth rate: da/dN = C * dK^m.
pub fn paris(dk: f64, p: &ParisParams) -> Result<f64, PhysicsError> {
    if dk <= 0.0 {
        return Err(PhysicsError::NonPositiveRange(dk));
    }
    Ok(p.c * dk.powf(p.m))
}

/// Forms of the Kuhn gap equation that language models reproduce from
/// memory. `Canonical` is the published equation; the others are common
/// recall slips that drop terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KuhnVariant {
    /// dE = (pi^2/2) (N+1)/L^2 + V0 (1 - 1/N)
    Canonical,
    /// Drops the (1 - 1/N) factor on the barrier term.
    NoBarrierFactor,
    /// Also replaces N+1 with N in the box term.
    BoxNOnly,
}

/// HOMO-LUMO gap of a conjugated chain, hartree. `n` is the pi-electron
/// count, `l` the box length in bohr.
pub fn kuhn_gap(n: f64, l: f64, v0: f64, variant: KuhnVariant) -> Result<f64, PhysicsError> {
    if n < 2.0 {
        return Err(PhysicsError::ElectronCountTooSmall(n));
    }
    if l <= 0.0 {
        return Err(PhysicsError::NonPositiveLength(l));
    }
    Ok(match variant {
        KuhnVariant::Canonical => BOX_COEFF * (n + 1.0) / (l * l) + v0 * (1.0 - 1.0 / n),
        KuhnVariant::NoBarrierFactor => BOX_COEFF * (n + 1.0) / (l * l) + v0,
        KuhnVariant::BoxNOnly => BOX_COEFF * n / (l * l) + v0,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StrainKuhnParams {
    /// Monomer count of the unstrained chain.
    pub s: f64,
    /// Unstrained box length, bohr.
    pub l0: f64,
    /// Unstrained barrier height, hartree.
    pub v0: f64,
    /// Barrier gain under tension; default 2.5.
    pub tension_gain: f64,
    /// Strain at which the gain term returns to zero; default 0.25. The
    /// quadratic peaks at half this value; kept verbatim from the model
    /// definition.
    pub peak_strain: f64,
}

impl StrainKuhnParams {
    pub fn new(s: f64, l0: f64, v0: f64) -> StrainKuhnParams {
        StrainKuhnParams {
            s,
            l0,
            v0,
            tension_gain: 2.5,
            peak_strain: 0.25,
        }
    }
}

/// Fractional length change under strain: compression shortens linearly,
/// tension lengthens quadratically.
pub fn delta_length(eps: f64) -> f64 {
    if eps <= 0.0 {
        eps
    } else {
        eps * eps
    }
}

/// Fractional barrier change under strain.
pub fn gamma_barrier(eps: f64, tension_gain: f64, peak_strain: f64) -> f64 {
    tension_gain * eps * (1.0 - eps / peak_strain)
}

/// Strained Kuhn gap: the canonical equation evaluated at effective length
/// l0 (1 + delta) and effective barrier v0 (1 + gamma). At eps = 0 both
/// effective values reduce to the unstrained ones exactly.
pub fn strain_kuhn(eps: f64, p: &StrainKuhnParams) -> Result<f64, PhysicsError> {
    let stretched = 1.0 + delta_length(eps);
    if stretched <= 0.0 {
        return Err(PhysicsError::CollapsedLength { eps, stretched });
    }
    let gamma = gamma_barrier(eps, p.tension_gain, p.peak_strain);
    kuhn_gap(p.s, p.l0 * stretched, p.v0 * (1.0 + gamma), KuhnVariant::Canonical)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{evaluate, parse, Bindings};
    use rand::{Rng, SeedableRng};

    #[test]
    fn box_coefficient_is_exact_in_atomic_units() {
        assert_eq!(H * H / (8.0 * M_E), BOX_COEFF);
        assert_eq!(BOX_COEFF, PI * PI / 2.0);
    }

    #[test]
    fn hall_petch_known_point() {
        let p = HallPetchParams {
            sigma0: 38.4577,
            k: 9.4836,
        };
        let v = hall_petch(4.0, &p).unwrap();
        assert!((v - 43.1995).abs() < 1e-9);
        assert!(matches!(
            hall_petch(0.0, &p),
            Err(PhysicsError::NonPositiveGrainSize(_))
        ));
    }

    #[test]
    fn paris_is_the_power_law() {
        let p = ParisParams {
            c: 8.7102e-12,
            m: 3.2583,
        };
        let v = paris(10.0, &p).unwrap();
        assert_eq!(v, 8.7102e-12 * 10f64.powf(3.2583));
        // Magnitude sanity: mid-Region-II rates are ~1e-8 m/cycle.
        assert!((v - 1.5789e-8).abs() / 1.5789e-8 < 1e-3);
        assert!(matches!(
            paris(-1.0, &p),
            Err(PhysicsError::NonPositiveRange(_))
        ));
    }

    #[test]
    fn kuhn_gap_reference_value() {
        // (pi^2/2) * 3/100 + 0.0595 * (1 - 1/2), full-precision oracle
        // computed once from the closed form.
        let v = kuhn_gap(2.0, 10.0, 0.0595, KuhnVariant::Canonical).unwrap();
        assert!((v - 0.17779406601634037).abs() < 1e-12);
        assert!((v - 0.177794).abs() < 5e-7);
    }

    #[test]
    fn kuhn_variants_order_and_differ() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let n = rng.gen_range(2.0..80.0);
            let l = rng.gen_range(5.0..100.0);
            let v0 = rng.gen_range(0.01..0.2);
            let canonical = kuhn_gap(n, l, v0, KuhnVariant::Canonical).unwrap();
            let no_factor = kuhn_gap(n, l, v0, KuhnVariant::NoBarrierFactor).unwrap();
            let box_n = kuhn_gap(n, l, v0, KuhnVariant::BoxNOnly).unwrap();
            // Dropping (1 - 1/N) raises the barrier term by exactly V0/N.
            assert!((no_factor - canonical - v0 / n).abs() < 1e-12 * no_factor.abs());
            // Losing the +1 in the box term costs exactly one box quantum.
            assert!((no_factor - box_n - BOX_COEFF / (l * l)).abs() < 1e-12 * no_factor.abs());
            assert!(canonical < no_factor);
        }
    }

    #[test]
    fn polymer_limit_approaches_v0() {
        let v0 = 0.0595;
        let v = kuhn_gap(1e6, 1e6, v0, KuhnVariant::Canonical).unwrap();
        assert!((v - v0).abs() < 1e-4);
    }

    #[test]
    fn kuhn_domain_checks() {
        assert!(matches!(
            kuhn_gap(1.0, 10.0, 0.05, KuhnVariant::Canonical),
            Err(PhysicsError::ElectronCountTooSmall(_))
        ));
        assert!(matches!(
            kuhn_gap(4.0, 0.0, 0.05, KuhnVariant::Canonical),
            Err(PhysicsError::NonPositiveLength(_))
        ));
    }

    #[test]
    fn strain_identities_hold_exactly() {
        assert_eq!(gamma_barrier(0.0, 2.5, 0.25), 0.0);
        assert_eq!(gamma_barrier(0.25, 2.5, 0.25), 0.0);
        assert_eq!(delta_length(-0.1), -0.1);
        assert_eq!(delta_length(0.1), 0.1 * 0.1);

        let p = StrainKuhnParams::new(10.0, 45.0, 0.0595);
        let unstrained = kuhn_gap(p.s, p.l0, p.v0, KuhnVariant::Canonical).unwrap();
        assert_eq!(strain_kuhn(0.0, &p).unwrap(), unstrained);
    }

    #[test]
    fn strain_rejects_collapsed_chain() {
        let p = StrainKuhnParams::new(10.0, 45.0, 0.0595);
        assert!(matches!(
            strain_kuhn(-1.0, &p),
            Err(PhysicsError::CollapsedLength { .. })
        ));
        assert!(strain_kuhn(-0.99, &p).is_ok());
    }

    /// Every model must agree with its DSL rendering, which is what the
    /// fitting layer actually evaluates.
    #[test]
    fn dsl_equivalence_randomized() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let rel = |a: f64, b: f64| (a - b).abs() / a.abs().max(b.abs()).max(1e-300);

        let hp = parse("sigma0 + k * d ^ (-0.5)", &["d"]).unwrap();
        let pl = parse("C * dK ^ m", &["dK"]).unwrap();
        let kuhn_src = format!("{} * (N + 1) / (L ^ 2) + V0 * (1 - 1 / N)", BOX_COEFF);
        let kuhn = parse(&kuhn_src, &["N", "L"]).unwrap();
        let strain_src = format!(
            "{} * (s + 1) / (l0 * (1 + piecewise(eps <= 0 : eps ; eps ^ 2))) ^ 2 \
             + v0 * (1 + 2.5 * eps * (1 - eps / 0.25)) * (1 - 1 / s)",
            BOX_COEFF
        );
        let strain = parse(&strain_src, &["eps"]).unwrap();

        for _ in 0..100 {
            let d = rng.gen_range(0.5..30.0);
            let sigma0 = rng.gen_range(10.0..300.0);
            let k = rng.gen_range(1.0..20.0);
            let b = Bindings::new([("d", d)], [("sigma0", sigma0), ("k", k)]).unwrap();
            let want = hall_petch(d, &HallPetchParams { sigma0, k }).unwrap();
            assert!(rel(evaluate(&hp, &b).unwrap(), want) < 1e-12);

            let dk = rng.gen_range(1.0..60.0);
            let c = rng.gen_range(1e-13..1e-10);
            let m = rng.gen_range(2.0..4.0);
            let b = Bindings::new([("dK", dk)], [("C", c), ("m", m)]).unwrap();
            let want = paris(dk, &ParisParams { c, m }).unwrap();
            assert!(rel(evaluate(&pl, &b).unwrap(), want) < 1e-12);

            let n = rng.gen_range(2.0..80.0);
            let l = rng.gen_range(5.0..100.0);
            let v0 = rng.gen_range(0.01..0.2);
            let b = Bindings::new([("N", n), ("L", l)], [("V0", v0)]).unwrap();
            let want = kuhn_gap(n, l, v0, KuhnVariant::Canonical).unwrap();
            assert!(rel(evaluate(&kuhn, &b).unwrap(), want) < 1e-12);

            let eps = rng.gen_range(-0.5..0.4);
            let s = rng.gen_range(2.0..40.0);
            let l0 = rng.gen_range(10.0..100.0);
            let b = Bindings::new(
                [("eps", eps)],
                [("s", s), ("l0", l0), ("v0", v0)],
            )
            .unwrap();
            let p = StrainKuhnParams::new(s, l0, v0);
            let want = strain_kuhn(eps, &p).unwrap();
            assert!(rel(evaluate(&strain, &b).unwrap(), want) < 1e-12);
        }
    }
}
