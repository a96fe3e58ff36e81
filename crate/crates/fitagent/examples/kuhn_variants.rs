//! Fits three recalled variants of the conjugated-chain gap equation to the
//! same data. The incomplete variants fit almost as well as the canonical
//! form, which is exactly why goodness of fit alone cannot certify that a
//! recalled equation is the published one.

use std::collections::BTreeMap;

use fitagent::expr::parse;
use fitagent::fit::{fit_lm, validate, FitOptions, ParamModel};
use fitagent::synth;

const CANONICAL: &str =
    "4.934802200544679 * (4 * n + 2 + 1) / (4.5 * n)^2 + V0 * (1 - 1 / (4 * n + 2))";
// Drops the (1 - 1/N) factor on the barrier term.
const NO_BARRIER_FACTOR: &str = "4.934802200544679 * (4 * n + 2 + 1) / (4.5 * n)^2 + V0";
// Also replaces N + 1 with N in the box term.
const BOX_N_ONLY: &str = "4.934802200544679 * (4 * n + 2) / (4.5 * n)^2 + V0";

fn main() {
    let data = synth::kuhn();
    println!("{} molecules, n = {}..{}", data.n, data.x[0], data.x[data.n - 1]);
    println!("{:<22} {:>12} {:>10}", "variant", "V0 (hartree)", "R2");

    for (label, dsl) in [
        ("canonical", CANONICAL),
        ("no barrier factor", NO_BARRIER_FACTOR),
        ("box term N only", BOX_N_ONLY),
    ] {
        let model = ParamModel::new(parse(dsl, &["n"]).unwrap(), "n").unwrap();
        let mut init = BTreeMap::new();
        init.insert("V0".to_owned(), 0.05);
        let fit = fit_lm(&model, &data, &init, &FitOptions::default()).unwrap();
        let metrics = validate(&model, &fit, &data).unwrap();
        println!("{:<22} {:>12.6} {:>10.6}", label, fit.params["V0"], metrics.r2);
    }
    println!("generating truth: V0 = {}", synth::truth::KUHN_V0);
}
