mod support;

use support::props;

fn run(suite: fn() -> Result<(), String>) {
    if let Err(e) = suite() {
        panic!("{e}");
    }
}

#[test]
fn ring_axioms() {
    run(props::ring_axioms);
}

#[test]
fn composition_matches_nested_evaluation() {
    run(props::composition_matches_nested_evaluation);
}

#[test]
fn leibniz_rule() {
    run(props::leibniz_rule);
}

#[test]
fn jet_evaluates_like_the_expression() {
    run(props::jet_evaluates_like_the_expression);
}

#[test]
fn jet_linear_part_matches_finite_differences() {
    run(props::jet_linear_part_matches_finite_differences);
}

#[test]
fn printing_and_parsing_round_trip() {
    run(props::printing_and_parsing_round_trip);
}
