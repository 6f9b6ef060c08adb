//! End-to-end tests for the `pilin` binary: exit codes, human output, and
//! byte-frozen JSON reports.  Every invocation runs from the workspace root
//! so the paths embedded in reports stay stable.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn workspace_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}

fn pilin(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pilin"))
        .args(args)
        .current_dir(workspace_root())
        .env_remove("PILIN_FUEL")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

#[test]
fn check_on_the_corpus_reports_every_file_and_exits_1() {
    let out = pilin(&["check", "corpus"]);
    assert_eq!(code(&out), 1, "corpus contains invalid programs");
    let text = stdout(&out);
    for (file, status) in [
        ("buyer_seller", "well-typed"),
        ("compulsive_buyer", "invalid"),
        ("context_free_tree", "well-typed"),
        ("forwarder", "well-typed"),
        ("omega", "invalid"),
        ("player_machine", "invalid"),
        ("slot_machine", "well-typed"),
        ("work_gather", "well-typed"),
    ] {
        assert!(
            text.contains(&format!("corpus/{file}.pilin: {status}")),
            "missing `{file}: {status}` in:\n{text}"
        );
    }
}

#[test]
fn check_json_report_is_byte_frozen() {
    let args = ["check", "corpus/compulsive_buyer.pilin", "--json", "--oracle", "12"];
    let out = pilin(&args);
    assert_eq!(code(&out), 1);
    let expected = r#"{
  "files": [
    {
      "counterexample": {
        "culprit": "mu X. X + 1",
        "cycle": [
          0,
          3,
          4
        ],
        "message": "fair cycle [0, 3, 4] admits no valid thread: the smallest fixpoint recurring on its surviving threads is the least fixpoint `mu X. X + 1`",
        "prefix": [
          2,
          9,
          0
        ]
      },
      "diagnostics": [
        "fair cycle [0, 3, 4] admits no valid thread: the smallest fixpoint recurring on its surviving threads is the least fixpoint `mu X. X + 1`"
      ],
      "oracle": {
        "agrees": true,
        "bound": 12,
        "verdict": "invalid (bounded B=12)"
      },
      "path": "corpus/compulsive_buyer.pilin",
      "ranks": [
        {
          "def": "Buyer",
          "rank": 0
        },
        {
          "def": "Seller",
          "rank": 0
        },
        {
          "def": "main",
          "rank": 0
        }
      ],
      "status": "invalid"
    }
  ],
  "schema": "pilin/check/1",
  "status": "invalid"
}
"#;
    assert_eq!(stdout(&out), expected);
    // Stability: a second run produces the identical bytes.
    assert_eq!(out.stdout, pilin(&args).stdout);
}

#[test]
fn run_json_report_is_byte_frozen() {
    let out = pilin(&["run", "corpus/buyer_seller.pilin", "--json"]);
    assert_eq!(code(&out), 0);
    let expected = r#"{
  "final": "close y",
  "outcome": "terminated",
  "path": "corpus/buyer_seller.pilin",
  "schema": "pilin/run/1",
  "steps": 6
}
"#;
    assert_eq!(stdout(&out), expected);
}

#[test]
fn run_random_policy_terminates_on_certified_input() {
    let out = pilin(&[
        "run",
        "corpus/context_free_tree.pilin",
        "--policy",
        "random",
        "--seed",
        "7",
        "--patience",
        "16",
    ]);
    assert_eq!(code(&out), 0, "stderr: {}", stderr(&out));
    assert!(stdout(&out).contains("terminated"));
}

#[test]
fn run_refuses_an_invalid_program_unless_unchecked() {
    let out = pilin(&["run", "corpus/omega.pilin"]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("refusing to run an invalid program"));

    let out = pilin(&["run", "corpus/omega.pilin", "--unchecked", "--fuel", "20"]);
    assert_eq!(code(&out), 4, "unchecked divergence runs out of fuel");
    assert!(stdout(&out).contains("fuel-exhausted after 20 steps"));
}

#[test]
fn fuel_comes_from_the_environment_when_no_flag_is_given() {
    let out = Command::new(env!("CARGO_BIN_EXE_pilin"))
        .args(["run", "corpus/buyer_seller.pilin"])
        .current_dir(workspace_root())
        .env("PILIN_FUEL", "3")
        .output()
        .unwrap();
    assert_eq!(code(&out), 4);
    assert!(stdout(&out).contains("fuel-exhausted after 3 steps"));
}

#[test]
fn rank_prints_one_line_per_definition() {
    let out = pilin(&["rank", "corpus/slot_machine.pilin"]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out), "Player = 1\nMachine = inf\nmain = inf\n");
}

#[test]
fn parse_errors_exit_3_and_type_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let garbled = dir.path().join("garbled.pilin");
    std::fs::write(&garbled, "def main(y: 1) = close close\n").unwrap();
    let out = pilin(&["check", garbled.to_str().unwrap()]);
    assert_eq!(code(&out), 3);
    assert!(stdout(&out).contains("ill-formed"));

    let mistyped = dir.path().join("mistyped.pilin");
    std::fs::write(&mistyped, "def main(y: 1) = wait y. close y\n").unwrap();
    let out = pilin(&["check", mistyped.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stdout(&out).contains("ill-typed"));

    let out = pilin(&["run", mistyped.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("refusing to run an ill-typed program"));
}

#[test]
fn check_and_run_require_a_main_with_one_unit_parameter() {
    let dir = tempfile::tempdir().unwrap();
    let library = dir.path().join("library.pilin");
    std::fs::write(&library, "def Id(x: 1, y: bot) = wait y. close x\n").unwrap();
    for cmd in ["check", "run"] {
        let out = pilin(&[cmd, library.to_str().unwrap()]);
        assert_eq!(code(&out), 3, "{cmd} must reject a program without main");
    }
    // `rank` stays usable on library files: a rank table needs no entry point.
    let out = pilin(&["rank", library.to_str().unwrap()]);
    assert_eq!(code(&out), 0);
    assert_eq!(stdout(&out), "Id = 0\n");

    let two_params = dir.path().join("two_params.pilin");
    std::fs::write(&two_params, "def main(y: 1, z: 1) = wait z. close y\n").unwrap();
    let out = pilin(&["check", two_params.to_str().unwrap()]);
    assert_eq!(code(&out), 3);
    assert!(stderr(&out).contains("exactly one parameter of type 1"));
}

#[test]
fn emit_automata_writes_json_and_hoa_per_input() {
    let dir = tempfile::tempdir().unwrap();
    let out = pilin(&[
        "check",
        "corpus/buyer_seller.pilin",
        "--emit-automata",
        dir.path().to_str().unwrap(),
    ]);
    assert_eq!(code(&out), 0);

    let json_path = dir.path().join("buyer_seller.automata.json");
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&json_path).unwrap()).unwrap();
    assert_eq!(doc["schema"], "pilin/automata/1");
    for key in ["all_branches", "unfair_branches", "valid_branches"] {
        assert!(doc[key]["states"].as_array().unwrap().len() > 0, "{key} has states");
    }
    // The compulsive branch automaton tracks one slot per context entry
    // plus a waiting state, so it is strictly larger than the plain one.
    assert!(
        doc["valid_branches"]["states"].as_array().unwrap().len()
            > doc["all_branches"]["states"].as_array().unwrap().len()
    );

    let hoa = std::fs::read_to_string(dir.path().join("buyer_seller.hoa")).unwrap();
    assert_eq!(hoa.matches("HOA: v1").count(), 3);
    assert!(hoa.contains("name: \"all branches\""));
    assert!(hoa.contains("name: \"unfair branches\""));
    assert!(hoa.contains("name: \"valid branches\""));
    assert!(hoa.contains("acc-name: Buchi"));
    assert!(hoa.contains("acc-name: parity min even"));
    // Parity acceptance must use the contiguous remap.
    assert!(hoa.contains("Acceptance: 4 Inf(0) | (Fin(1) & (Inf(2) | (Fin(3))))"));
    assert!(hoa.contains("--BODY--") && hoa.contains("--END--"));
}

#[test]
fn check_json_schema_covers_every_corpus_status() {
    let out = pilin(&["check", "corpus", "--json"]);
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(doc["schema"], "pilin/check/1");
    assert_eq!(doc["status"], "invalid");
    let files = doc["files"].as_array().unwrap();
    assert_eq!(files.len(), 8);
    for f in files {
        let status = f["status"].as_str().unwrap();
        match status {
            "well-typed" => assert!(f.get("counterexample").is_none()),
            "invalid" => {
                let c = &f["counterexample"];
                assert!(c["cycle"].as_array().unwrap().len() >= 1);
                assert!(c["message"].as_str().unwrap().contains("fair cycle"));
            }
            other => panic!("unexpected corpus status {other}"),
        }
        // Ranks are numbers or the string "inf".
        for r in f["ranks"].as_array().unwrap() {
            assert!(r["rank"].is_u64() || r["rank"] == "inf");
        }
    }
}
