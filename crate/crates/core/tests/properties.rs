#[path = "support/props.rs"]
mod props;

use std::path::PathBuf;

fn check(name: &str) {
    let corpus = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("corpus");
    let (_, suite) = props::suites(corpus)
        .into_iter()
        .find(|(n, _)| *n == name)
        .expect("known suite");
    if let Err(e) = suite() {
        panic!("{name}: {e}");
    }
}

#[test]
fn weak_negation_is_an_involution() {
    check("weak negation is an involution");
}

#[test]
fn weak_negation_covers_every_state() {
    check("weak negation covers every state");
}

#[test]
fn both_hold_on_the_boundary() {
    check("formula and weak negation meet on the boundary");
}

#[test]
fn obligations_survive_render_and_read() {
    check("obligations survive render and read");
}

#[test]
fn basic_is_the_unit_of_composition() {
    check("basic is the unit of composition");
}

#[test]
fn guaranteed_calls_match_path_enumeration() {
    check("guaranteed calls match path enumeration");
}

#[test]
fn integrator_matches_closed_form() {
    check("integrator matches closed form");
}

#[test]
fn integrator_tracks_rotation() {
    check("integrator tracks rotation");
}

#[test]
fn lotka_volterra_first_integral() {
    check("Lotka-Volterra first integral is conserved");
}
