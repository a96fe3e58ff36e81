//! Tour of the expression DSL: parse a formula, inspect its parameters,
//! evaluate it, and print the canonical form that survives round trips.

use fitagent::expr::{evaluate, parse, Bindings};

fn main() {
    let source = "sigma0 + k / sqrt(d)";
    let expr = parse(source, &["d"]).unwrap();
    println!("source:    {source}");
    println!("canonical: {}", expr.print_canonical());
    println!("params:    {:?}", expr.params_in_order());

    let env = Bindings::new([("d", 4.0)], [("sigma0", 38.4577), ("k", 9.4836)]).unwrap();
    println!("value at d=4: {}", evaluate(&expr, &env).unwrap());

    // Piecewise branches switch on comparisons; both arms parse eagerly but
    // only the selected one is evaluated.
    let branchy = parse("piecewise(eps <= 0 : eps ; eps^2)", &["eps"]).unwrap();
    for eps in [-0.1, 0.0, 0.1] {
        let env = Bindings::new([("eps", eps)], [] as [(&str, f64); 0]).unwrap();
        println!("delta({eps:>4}) = {}", evaluate(&branchy, &env).unwrap());
    }

    // Parameters can be pinned to numbers after the fact, which is how
    // physical constants get baked into extracted equations.
    let general = parse("h^2 / (8 * m * L^2)", &[] as &[&str]).unwrap();
    let mut constants = std::collections::BTreeMap::new();
    constants.insert("h".to_owned(), std::f64::consts::TAU);
    constants.insert("m".to_owned(), 1.0);
    println!("pinned:    {}", general.substitute_params(&constants).print_canonical());
}
