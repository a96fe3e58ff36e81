//! Region-aware Paris-law fitting. Fatigue crack growth only follows the
//! power law in Region II, so the pipeline first isolates the points whose
//! local log-log slope sits in the physically plausible 2..4 band, then
//! fits da/dN = C dK^m in log space on that subset alone.

use std::collections::BTreeMap;

use fitagent::expr::parse;
use fitagent::fit::{fit_lm, loglog_linearize, validate, FitOptions, FitSpace, ParamModel};
use fitagent::region::{auto_select_region, RegionOptions};
use fitagent::synth;

fn main() {
    let data = synth::paris();
    let region = auto_select_region(&data, &RegionOptions::default()).unwrap();
    let (lo, hi) = region.slope_range.unwrap();
    println!(
        "selected {} of {} points, dK in [{:.2}, {:.2}], slopes [{:.2}, {:.2}]",
        region.points_selected(),
        region.points_total,
        region.x_min,
        region.x_max,
        lo,
        hi
    );

    let subset = region.subset(&data);
    let (c0, m0) = loglog_linearize(&subset).unwrap();
    println!("log-log line suggests C0 = {c0:.4e}, m0 = {m0:.4}");

    let model = ParamModel::new(parse("C * dK^m", &["dK"]).unwrap(), "dK").unwrap();
    let mut init = BTreeMap::new();
    init.insert("C".to_owned(), c0);
    init.insert("m".to_owned(), m0);
    let opts = FitOptions { fit_space: FitSpace::Log10, ..FitOptions::default() };
    let fit = fit_lm(&model, &subset, &init, &opts).unwrap();
    let metrics = validate(&model, &fit, &subset).unwrap();

    println!(
        "C = {:.4e} (truth {:.4e}), m = {:.4} (truth {})",
        fit.params["C"],
        synth::truth::PARIS_C,
        fit.params["m"],
        synth::truth::PARIS_M
    );
    println!("R2(log) = {:.5}", metrics.r2_log.unwrap());
}
