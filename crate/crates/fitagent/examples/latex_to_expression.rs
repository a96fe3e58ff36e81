//! Translates published LaTeX into an executable expression and checks it
//! against the reference implementation.

use fitagent::arxiv::latex_to_dsl;
use fitagent::expr::{evaluate, parse, Bindings};
use fitagent::physics::{self, KuhnVariant};

fn main() {
    let latex = "\\Delta E = \\frac{h^2}{8 m L^2}(N+1) + V_0\\left(1 - \\frac{1}{N}\\right)";
    let dsl = latex_to_dsl(latex, "N").unwrap();
    println!("latex: {latex}");
    println!("dsl:   {dsl}");

    let expr = parse(&dsl, &["N", "L"]).unwrap();
    let (n, l, v0) = (42.0, 45.0, 0.059506);
    let env = Bindings::new(
        [("N", n), ("L", l)],
        [("h", physics::H), ("m", physics::M_E), ("V0", v0)],
    )
    .unwrap();
    let translated = evaluate(&expr, &env).unwrap();
    let reference = physics::kuhn_gap(n, l, v0, KuhnVariant::Canonical).unwrap();
    println!("translated: {translated}");
    println!("reference:  {reference}");
    println!("difference: {:e}", (translated - reference).abs());
}
