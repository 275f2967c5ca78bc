use std::path::PathBuf;

use hao_core::analysis::{self, GeneratorKind};
use hao_core::dl::{canonical, parse_archive, parse_formula};
use hao_core::habs::Program;
use hao_core::vcg;

fn load(name: &str) -> Program {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("corpus")
        .join(name);
    Program::load(name, &std::fs::read_to_string(path).unwrap()).unwrap()
}

fn emit(p: &Program, kind: &str, dir: &std::path::Path) -> Vec<(String, String)> {
    let written = vcg::emit(p, &kind.parse().unwrap(), dir).unwrap();
    written
        .iter()
        .map(|f| {
            (
                f.file_name().unwrap().to_string_lossy().into_owned(),
                std::fs::read_to_string(f).unwrap(),
            )
        })
        .collect()
}

#[test]
fn emission_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["tank.habs", "billard.habs", "lotka_volterra.habs"] {
        let p = load(name);
        for kind in ["basic", "structural", "composed"] {
            let a = emit(&p, kind, &dir.path().join("a"));
            let b = emit(&p, kind, &dir.path().join("b"));
            assert_eq!(a, b, "{name} {kind}");
        }
    }
}

#[test]
fn manifest_marks_exempt_methods() {
    let dir = tempfile::tempdir().unwrap();
    let files = emit(&load("tank.habs"), "basic", dir.path());
    let manifest = &files.iter().find(|(n, _)| n == "manifest.txt").unwrap().1;
    assert!(
        manifest.contains("Log.triggered\tmethod\tbasic\tyes\tno\n"),
        "{manifest}"
    );
    assert!(manifest.contains("Tank.up\tmethod\tbasic\tno\tno\n"));
    assert!(!files.iter().any(|(n, _)| n == "Log.triggered.kyx"));
    // Exemption applies to the basic generator only.
    let files = emit(&load("tank.habs"), "structural", &dir.path().join("s"));
    assert!(files.iter().any(|(n, _)| n == "Log.triggered.kyx"));
}

#[test]
fn structural_obligation_installs_the_region_as_domain() {
    let p = load("tank.habs");
    let g = analysis::generator(&GeneratorKind::Structural, &p).unwrap();
    let entries = vcg::obligations(&p, &g, true).unwrap();
    let up = entries
        .iter()
        .find(|e| e.name == "Tank.up")
        .unwrap()
        .obligation
        .clone()
        .unwrap();
    let text = up.formula().to_string();
    assert!(text.contains("level' = drain"), "{text}");
    let region = g.member("Tank", "up").unwrap().to_string();
    assert!(text.contains(&format!("drain' = 0 & {region}}}")), "{text}");
    assert!(
        text.starts_with("(level >= 3 & level <= 10) & cll = 0 -> [?level >= 10 & drain >= 0;"),
        "{text}"
    );
}

#[test]
fn archives_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let p = load("element.habs");
    let g = analysis::generator(&GeneratorKind::Basic, &p).unwrap();
    vcg::emit(&p, &GeneratorKind::Basic, dir.path()).unwrap();
    for e in vcg::obligations(&p, &g, true).unwrap() {
        let ob = e.obligation.unwrap();
        let text = std::fs::read_to_string(dir.path().join(format!("{}.kyx", e.name))).unwrap();
        let entries = parse_archive(&text).unwrap();
        assert_eq!(
            canonical(&entries[0].problem),
            canonical(&ob.formula()),
            "{}",
            e.name
        );
    }
}

#[test]
fn main_obligation_only_keeps_the_call_flag() {
    let p = load("element.habs");
    let g = analysis::generator(&GeneratorKind::Basic, &p).unwrap();
    let entries = vcg::obligations(&p, &g, true).unwrap();
    let main = entries
        .iter()
        .find(|e| e.name == "main")
        .unwrap()
        .obligation
        .clone()
        .unwrap();
    assert_eq!(
        canonical(&main.formula()),
        canonical(&parse_formula("cll = 0 -> [?true;]cll = 0").unwrap())
    );
}

#[test]
fn tactics_are_written_beside_their_obligation() {
    let src = "class A {
                 [HybridSpec: ObjInv(\"x >= 0\")]
                 physical { Real x = 1: x' = 0; }
                 [HybridSpec: Tactic(\"auto\")]
                 Unit m(){ x = 2; }
               }
               { A a = new A(); }";
    let p = Program::load("t.habs", src).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = emit(&p, "basic", dir.path());
    let tactic = files
        .iter()
        .find(|(n, _)| n == "A.m.tactic")
        .map(|(_, t)| t.as_str());
    assert_eq!(tactic, Some("auto\n"));
}
