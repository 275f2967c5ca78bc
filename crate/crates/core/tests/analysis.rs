use std::collections::BTreeSet;
use std::path::PathBuf;

use hao_core::analysis::{self, Change, GeneratorKind, Region};
use hao_core::dl::{parse_formula, propositionally_equivalent, Formula};
use hao_core::habs::Program;

fn load(name: &str) -> Program {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("corpus")
        .join(name);
    Program::load(name, &std::fs::read_to_string(path).unwrap()).unwrap()
}

fn set(items: &[&str]) -> BTreeSet<String> {
    items.iter().map(|s| s.to_string()).collect()
}

#[test]
fn controllers() {
    let tank = load("tank.habs");
    assert_eq!(
        analysis::detect_controllers(tank.class("Tank").unwrap(), &tank),
        set(&["down", "up"])
    );
    assert!(analysis::detect_controllers(tank.class("Log").unwrap(), &tank).is_empty());
    // Methods calling each other are not controllers.
    let local = load("tank_local.habs");
    assert!(analysis::detect_controllers(local.class("Tank").unwrap(), &local).is_empty());
    let billard = load("billard.habs");
    assert_eq!(
        analysis::detect_controllers(billard.class("Billard").unwrap(), &billard),
        set(&["ctrlBottom", "ctrlLeft", "ctrlRight", "ctrlTop"])
    );
}

#[test]
fn guaranteed_calls_of_handover_tank() {
    let p = load("tank_local.habs");
    let c = p.class("Tank").unwrap();
    let gcall = |r: Region| analysis::gcall(c, &r).unwrap();
    assert_eq!(gcall(Region::Member("init".into())), set(&["down"]));
    assert_eq!(gcall(Region::Member("down".into())), set(&["up"]));
    assert_eq!(gcall(Region::Member("up".into())), set(&["down"]));
    assert_eq!(gcall(Region::Point(1)), set(&[]));
}

#[test]
fn local_region_of_down_waits_for_up() {
    let p = load("tank_local.habs");
    let g = analysis::generator(&GeneratorKind::Local, &p).unwrap();
    let down = g.member("Tank", "down").unwrap();
    // After `down` the pending `up` has not fired: x stays at or below 10.
    assert!(
        propositionally_equivalent(down, &parse_formula("x <= 10").unwrap()),
        "{down}"
    );
}

#[test]
fn basic_regions_are_true() {
    for name in ["tank.habs", "billard.habs", "element.habs"] {
        let p = load(name);
        let g = analysis::generator(&GeneratorKind::Basic, &p).unwrap();
        assert_eq!(g.entries().len(), analysis::region_keys(&p).len());
        assert!(
            g.entries().iter().all(|(_, f)| *f == Formula::True),
            "{name}"
        );
    }
}

#[test]
fn frame_exemption() {
    let p = load("tank_extended.habs");
    let log = p.class("Log").unwrap();
    assert!(log.methods.iter().all(|m| analysis::frame_exempt(m, log)));
    let tank = p.class("Tank").unwrap();
    assert!(tank
        .methods
        .iter()
        .all(|m| !analysis::frame_exempt(m, tank)));
}

#[test]
fn reproof_sets() {
    let tank = load("tank.habs");
    let reproof = |change: &str, kind: &str, p: &Program| {
        analysis::reproof_set(
            &change.parse::<Change>().unwrap(),
            &kind.parse().unwrap(),
            p,
        )
        .unwrap()
    };
    assert_eq!(reproof("guard:Tank.up", "basic", &tank), set(&["up"]));
    assert_eq!(reproof("removed:Tank.up", "basic", &tank), set(&[]));
    assert_eq!(
        reproof("removed:Tank.up", "structural", &tank),
        set(&["down", "init"])
    );
    assert_eq!(
        reproof("removed:Tank.up", "local", &load("tank_local.habs")),
        set(&["down"])
    );
    assert_eq!(
        reproof("added:Billard.leap", "structural", &load("billard.habs")),
        set(&["leap"])
    );
}

#[test]
fn unknown_members_are_rejected() {
    let tank = load("tank.habs");
    let change: Change = "removed:Tank.fill".parse().unwrap();
    assert!(analysis::reproof_set(&change, &GeneratorKind::Structural, &tank).is_err());
    assert!("fill".parse::<Change>().is_err());
    assert!("moved:Tank.up".parse::<Change>().is_err());
}
