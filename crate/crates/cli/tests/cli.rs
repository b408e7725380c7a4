use std::path::PathBuf;
use std::process::Command;

use napsh_cli::{run, Output};
use serde_json::Value;

fn fixture(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_MANIFEST_DIR"), "..", "..", "fixtures", name].iter().collect();
    p.to_string_lossy().into_owned()
}

fn napsh(args: &[&str]) -> Output {
    run(std::iter::once("napsh").chain(args.iter().copied()))
}

fn json(out: &Output) -> Value {
    serde_json::from_str(&out.stdout).unwrap_or_else(|e| panic!("{e}: {}", out.stdout))
}

fn scratch(name: &str) -> String {
    let p: PathBuf = [env!("CARGO_TARGET_TMPDIR"), name].iter().collect();
    p.to_string_lossy().into_owned()
}

#[test]
fn every_fixture_validates() {
    for name in ["chain.json", "slope_cap.json", "cycle3.graph.json", "triangle.json"] {
        let out = napsh(&["validate", &fixture(name)]);
        assert_eq!(out.code, 0, "{name}: {}", out.stderr);
        assert_eq!(json(&out)["intersection_kernel"]["passed"], true, "{name}");
    }
}

#[test]
fn non_psh_coefficients_exit_one_with_a_witness() {
    let out = napsh(&["check-psh", &fixture("chain.json"), "--coefficients", "0,2"]);
    assert_eq!(out.code, 1);
    let v = json(&out);
    assert_eq!(v["psh"], false);
    assert_eq!(v["witness"]["curve"], "E2");
    assert_eq!(v["witness"]["slack"], "-1");
}

#[test]
fn psh_coefficients_exit_zero() {
    let out = napsh(&["check-psh", &fixture("chain.json"), "--coefficients", "0,0"]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    assert_eq!(json(&out)["witness"], Value::Null);
}

#[test]
fn slope_cap_envelope_is_one_at_the_second_vertex() {
    let out = napsh(&["envelope", &fixture("slope_cap.json"), "--obstacle", "cap", "--point", "0,1"]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let v = json(&out);
    assert_eq!(v["schema_version"], 1);
    assert_eq!(v["results"][0]["value"], "1");
}

#[test]
fn envelope_refinement_stabilizes_on_a_chain() {
    let out = napsh(&["envelope", &fixture("chain.json"), "--obstacle", "tent", "--refine", "2"]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let v = json(&out);
    assert_eq!(v["stabilized"], true);
    assert_eq!(v["monotone"], true);
    assert_eq!(v["levels"].as_array().unwrap().len(), 3);
}

#[test]
fn star_subdivision_is_certified_and_reloads() {
    let out = napsh(&[
        "subdivide",
        &fixture("chain.json"),
        "--face",
        "1,2",
        "--point",
        "1/2,1/2",
        "--eps",
        "1/2",
    ]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let path = scratch("chain_star.json");
    std::fs::write(&path, &out.stdout).unwrap();
    let again = napsh(&["validate", &path]);
    assert_eq!(again.code, 0, "{}", again.stderr);
    let subs = json(&again)["subdivisions"].clone();
    assert!(subs.as_array().unwrap().iter().any(|s| s == "chain/star"));
    let h = napsh(&["eval", &path, "--function", "h", "--point", "1/2,1/2"]);
    assert_eq!(h.code, 0, "{}", h.stderr);
    assert_eq!(json(&h)["rows"][0]["value"], "-1");
}

#[test]
fn star_on_a_triangle_adds_a_refinement() {
    let out = napsh(&[
        "subdivide",
        &fixture("triangle.json"),
        "--face",
        "1,2,3",
        "--point",
        "1/3,1/3,1/3",
        "--eps",
        "1/3",
    ]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let subs: Vec<String> = json(&out)["subdivisions"]
        .as_array()
        .unwrap()
        .iter()
        .map(|s| s["id"].as_str().unwrap().to_string())
        .collect();
    assert!(subs.contains(&"triangle/star/bary".to_string()), "{subs:?}");
}

#[test]
fn bad_multiplicity_reports_its_pointer() {
    let text = std::fs::read_to_string(fixture("chain.json")).unwrap();
    let mut v: Value = serde_json::from_str(&text).unwrap();
    v["components"][0]["b"] = 0.into();
    let path = scratch("bad_b.json");
    std::fs::write(&path, serde_json::to_string(&v).unwrap()).unwrap();
    let out = napsh(&["validate", &path]);
    assert_eq!(out.code, 2);
    assert!(out.stderr.contains("/components/0/b"), "{}", out.stderr);
}

#[test]
fn missing_file_and_bad_points_are_data_errors() {
    assert_eq!(napsh(&["validate", &scratch("does_not_exist.json")]).code, 2);
    let out = napsh(&["eval", &fixture("chain.json"), "--function", "tent", "--point", "1,1"]);
    assert_eq!(out.code, 2);
    assert!(out.stderr.contains("normalization"), "{}", out.stderr);
}

#[test]
fn oracle_agrees_on_the_cycle() {
    let out = napsh(&["oracle-compare", &fixture("cycle3.graph.json"), "--obstacle", "u"]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    assert_eq!(json(&out)["clean"], true);
}

#[test]
fn axioms_hold_on_the_chain() {
    let out = napsh(&[
        "axioms",
        &fixture("chain.json"),
        "--u",
        "tent",
        "--v",
        "valley",
        "--c",
        "-1",
    ]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    assert_eq!(json(&out)["passed"], true);
}

#[test]
fn bounds_cover_every_face() {
    let out = napsh(&["bounds", &fixture("triangle.json"), "lipschitz"]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    assert_eq!(json(&out)["rows"].as_array().unwrap().len(), 7);
    let out = napsh(&["bounds", &fixture("triangle.json"), "vertex"]);
    assert_eq!(json(&out)["rows"].as_array().unwrap().len(), 3);
}

#[test]
fn ideal_evaluation_is_exact() {
    let out = napsh(&["eval", &fixture("chain.json"), "--ideal", "a", "--point", "1/2,1/2"]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    assert_eq!(json(&out)["rows"][0]["value"], "-3/2");
}

#[test]
fn decimal_column_is_tsv_only_and_marked() {
    let args = ["bounds", "--format", "tsv", "--decimal"];
    let out = napsh(&[args[0], &fixture("triangle.json"), "vertex", args[1], args[2], args[3]]);
    assert_eq!(out.code, 0, "{}", out.stderr);
    let header = out.stdout.lines().next().unwrap();
    assert!(header.ends_with("decimal_approx_nonauthoritative"), "{header}");
    let plain = napsh(&["bounds", &fixture("triangle.json"), "vertex", "--decimal"]);
    assert!(!plain.stdout.contains("decimal"));
}

#[test]
fn output_is_byte_identical_across_runs() {
    let cases: Vec<Vec<String>> = vec![
        vec!["envelope".into(), fixture("slope_cap.json"), "--obstacle".into(), "cap".into()],
        vec!["bounds".into(), fixture("triangle.json"), "lipschitz".into()],
        vec![
            "subdivide".into(),
            fixture("triangle.json"),
            "--face".into(),
            "1,2".into(),
            "--point".into(),
            "1/2,1/2,0".into(),
            "--eps".into(),
            "1/2".into(),
        ],
    ];
    for args in cases {
        let args: Vec<&str> = args.iter().map(String::as_str).collect();
        assert_eq!(napsh(&args), napsh(&args), "{args:?}");
    }
}

#[test]
fn binary_maps_outcomes_to_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_napsh");
    let status = |args: &[&str]| Command::new(bin).args(args).output().unwrap().status.code();
    assert_eq!(status(&["--version"]), Some(0));
    assert_eq!(status(&["--help"]), Some(0));
    assert_eq!(status(&["no-such-command"]), Some(2));
    assert_eq!(status(&["check-psh", &fixture("chain.json"), "--coefficients", "0,2"]), Some(1));
    assert_eq!(status(&["validate", &fixture("chain.json")]), Some(0));
}
