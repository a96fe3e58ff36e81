//! Synthetic datasets for the built-in tasks.
//!
//! Generators are deterministic given their seed; the noiseless ones take no
//! seed at all. Ground-truth constants live in [`truth`] so tests can check
//! recovered parameters against what was planted.

use std::io;
use std::path::Path;

use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

use crate::dataset::Dataset;
use crate::physics::{self, HallPetchParams, StrainKuhnParams};

/// Planted parameters and shapes, shared with tests and examples.
pub mod truth {
    pub const HP_SIGMA0: f64 = 38.4577;
    pub const HP_K: f64 = 9.4836;
    pub const HP_NOISE_SIGMA: f64 = 7.0;
    pub const HP_POINTS: usize = 13;
    /// Grain sizes 3 to 23 micrometres, recorded as 0.003..0.023 to match
    /// the numeric scale the reference dataset uses under its `d_um` label.
    /// The label is trusted as-is; nothing rescales.
    pub const HP_D_RANGE: (f64, f64) = (0.003, 0.023);

    pub const PARIS_C: f64 = 8.7102e-12;
    pub const PARIS_M: f64 = 3.2583;
    /// Log-log slopes of the threshold and fast-fracture flanks.
    pub const PARIS_M_LOW: f64 = 8.0;
    pub const PARIS_M_HIGH: f64 = 9.0;
    /// Knees where the flanks meet the power-law regime (curve continuous).
    pub const PARIS_KNEES: (f64, f64) = (3.8, 36.8);
    pub const PARIS_DK_RANGE: (f64, f64) = (2.0, 60.0);
    pub const PARIS_COUNTS: (usize, usize, usize) = (15, 25, 10);

    /// Infinite-chain gap limit in hartree.
    pub const KUHN_V0: f64 = 0.059506;
    /// Ring count range; molecule n has N = 4n + 2 electrons in a chain of
    /// length L = 4.5 n bohr.
    pub const KUHN_N_RANGE: (u32, u32) = (6, 16);

    pub const STRAIN_ELECTRONS: f64 = 42.0;
    pub const STRAIN_L0: f64 = 45.0;
    /// 15 strains from -0.1 to 0.25 in steps of 0.025; point 4 is zero.
    pub const STRAIN_EPS_STEP: f64 = 0.025;
    pub const STRAIN_POINTS: usize = 15;
}

/// Noisy Hall-Petch sweep: sigma = sigma0 + k d^-1/2 plus Gaussian noise.
pub fn hall_petch(seed: u64) -> Dataset {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let noise = Normal::new(0.0, truth::HP_NOISE_SIGMA).unwrap();
    let p = HallPetchParams {
        sigma0: truth::HP_SIGMA0,
        k: truth::HP_K,
    };
    let (lo, hi) = truth::HP_D_RANGE;
    let n = truth::HP_POINTS;
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let d = lo + (hi - lo) * i as f64 / (n as f64 - 1.0);
        x.push(d);
        y.push(physics::hall_petch(d, &p).unwrap() + noise.sample(&mut rng));
    }
    Dataset::new(x, y, "d", "sigma", "um", "MPa").unwrap()
}

/// Noiseless Hall-Petch sweep over the same grid, for exact-recovery tests.
pub fn hall_petch_noiseless() -> Dataset {
    let p = HallPetchParams {
        sigma0: truth::HP_SIGMA0,
        k: truth::HP_K,
    };
    let (lo, hi) = truth::HP_D_RANGE;
    let n = truth::HP_POINTS;
    let x: Vec<f64> = (0..n)
        .map(|i| lo + (hi - lo) * i as f64 / (n as f64 - 1.0))
        .collect();
    let y: Vec<f64> = x
        .iter()
        .map(|&d| physics::hall_petch(d, &p).unwrap())
        .collect();
    Dataset::new(x, y, "d", "sigma", "um", "MPa").unwrap()
}

/// Noiseless three-regime fatigue curve. The middle regime is the Paris law
/// da/dN = C dK^m; the flanks are steeper power laws joined continuously at
/// the knees, which is what makes naive whole-range fits go wrong.
pub fn paris() -> Dataset {
    let (k1, k2) = truth::PARIS_KNEES;
    let (lo, hi) = truth::PARIS_DK_RANGE;
    let (n1, n2, n3) = truth::PARIS_COUNTS;
    let c2 = truth::PARIS_C;
    let (m1, m2, m3) = (truth::PARIS_M_LOW, truth::PARIS_M, truth::PARIS_M_HIGH);
    // Continuity at the knees fixes the flank prefactors.
    let c1 = c2 * k1.powf(m2 - m1);
    let c3 = c2 * k2.powf(m2 - m3);

    let mut x = Vec::new();
    let mut push_band = |a: f64, b: f64, count: usize, inclusive: bool| {
        let (la, lb) = (a.log10(), b.log10());
        let denom = if inclusive { count as f64 - 1.0 } else { count as f64 };
        for i in 0..count {
            x.push(10f64.powf(la + (lb - la) * i as f64 / denom));
        }
    };
    push_band(lo, k1, n1, false);
    push_band(k1, k2, n2, false);
    push_band(k2, hi, n3, true);

    let y: Vec<f64> = x
        .iter()
        .map(|&dk| {
            if dk < k1 {
                c1 * dk.powf(m1)
            } else if dk < k2 {
                c2 * dk.powf(m2)
            } else {
                c3 * dk.powf(m3)
            }
        })
        .collect();
    Dataset::new(x, y, "dK", "dadN", "MPa_sqrt_m", "m_per_cycle").unwrap()
}

/// HOMO-LUMO gaps of a conjugated-ring series in atomic units: molecule n
/// has N = 4n + 2 electrons in a box of length L = 4.5 n bohr.
pub fn kuhn() -> Dataset {
    let (lo, hi) = truth::KUHN_N_RANGE;
    let mut x = Vec::new();
    let mut y = Vec::new();
    for n in lo..=hi {
        let electrons = 4.0 * n as f64 + 2.0;
        let length = 4.5 * n as f64;
        x.push(n as f64);
        y.push(
            physics::kuhn_gap(
                electrons,
                length,
                truth::KUHN_V0,
                physics::KuhnVariant::Canonical,
            )
            .unwrap(),
        );
    }
    Dataset::new(x, y, "n", "gap", "rings", "hartree").unwrap()
}

/// Gap under axial strain for one fixed molecule (n = 10), reported in eV.
/// The grid steps in exact multiples of 0.025 so that zero strain is hit
/// bit-exactly.
pub fn strain_kuhn() -> Dataset {
    let p = StrainKuhnParams::new(truth::STRAIN_ELECTRONS, truth::STRAIN_L0, truth::KUHN_V0);
    let n = truth::STRAIN_POINTS;
    let mut x = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let eps = (i as f64 - 4.0) * truth::STRAIN_EPS_STEP;
        x.push(eps);
        y.push(physics::strain_kuhn(eps, &p).unwrap() * physics::HARTREE_TO_EV);
    }
    Dataset::new(x, y, "epsilon", "gap", "unknown", "eV").unwrap()
}

fn header_for(name: &str, unit: &str) -> String {
    if unit.is_empty() || unit == "unknown" {
        name.to_string()
    } else {
        format!("{name}_{unit}")
    }
}

/// Writes a dataset as a two-column CSV with `name_unit` headers (bare
/// `name` when the unit is unknown). Values are printed with the shortest
/// round-trip representation, so reloading the file reproduces the dataset
/// bit for bit.
pub fn write_csv(data: &Dataset, path: &Path) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        header_for(&data.x_name, &data.x_unit),
        header_for(&data.y_name, &data.y_unit),
    ])?;
    for (x, y) in data.x.iter().zip(&data.y) {
        w.write_record([format!("{x}"), format!("{y}")])?;
    }
    w.flush()
}

/// Writes the ring-series table with its conventional middle column
/// `L_bohr = 4.5 n`; loaders pick the `n` and `gap` columns.
pub fn write_kuhn_csv(data: &Dataset, path: &Path) -> io::Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record([
        header_for(&data.x_name, &data.x_unit),
        "L_bohr".to_string(),
        header_for(&data.y_name, &data.y_unit),
    ])?;
    for (x, y) in data.x.iter().zip(&data.y) {
        let length = 4.5 * x;
        w.write_record([format!("{x}"), format!("{length}"), format!("{y}")])?;
    }
    w.flush()
}
