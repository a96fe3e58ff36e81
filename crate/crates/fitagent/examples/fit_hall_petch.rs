//! Fits the Hall-Petch relation to a noisy synthetic sweep and prints the
//! recovered constants next to the generating truth.

use std::collections::BTreeMap;

use fitagent::expr::parse;
use fitagent::fit::{fit_lm, validate, FitOptions, ParamModel};
use fitagent::synth;

fn main() {
    let data = synth::hall_petch(60);
    println!(
        "{} points, {} in [{:.3}, {:.3}] {}",
        data.n,
        data.x_name,
        data.x[0],
        data.x[data.n - 1],
        data.x_unit
    );

    let model = ParamModel::new(parse("sigma0 + k / sqrt(d)", &["d"]).unwrap(), "d").unwrap();
    let mut init = BTreeMap::new();
    init.insert("sigma0".to_owned(), 90.0);
    init.insert("k".to_owned(), 10.0);

    let fit = fit_lm(&model, &data, &init, &FitOptions::default()).unwrap();
    let metrics = validate(&model, &fit, &data).unwrap();

    println!("converged in {} iterations (resnorm {:.4e})", fit.iterations, fit.resnorm);
    println!(
        "sigma0 = {:.4} (truth {}), k = {:.4} (truth {})",
        fit.params["sigma0"],
        synth::truth::HP_SIGMA0,
        fit.params["k"],
        synth::truth::HP_K
    );
    println!("R2 = {:.4}, RMSE = {:.4} MPa", metrics.r2, metrics.rmse);
}
