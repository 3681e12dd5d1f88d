use std::fs;

use pevgrid::compare::{run_comparison, RunSettings};
use pevgrid::network::{proportional_fill, validate_feasibility};
use pevgrid::scenario::{
    bundled_desk13, generate_desk13, load_scenario, parse_scenario, save_scenario, MethodName, MethodSection,
    DESK13_TOML,
};
use pevgrid::{Error, Execution};

const CHAIN: &str = r#"
schema = "pevgrid-scenario v1"
horizon = 4

[[network]]
id = "root"
capacity = 30.0

[[network]]
id = "mid"
parent = "root"
capacity = 20.0

[[network]]
id = "leaf"
parent = "mid"
capacity = 10.0

[base_load]
leaf = [4.0, 6.0, 5.0, 2.0]

[[fleet]]
id = "car"
feeder = "leaf"
start = 2
finish = 4
demand = 6.0
rate_cap = 3.0
"#;

#[test]
fn bundled_desk13_loads_cleanly() {
    let desk = bundled_desk13();
    assert!(desk.report.warnings.is_empty());
    assert!(desk.report.slater_slack > 0.0);
    assert_eq!(desk.scenario.num_pevs(), 45);
    assert_eq!(desk.scenario.network().num_feeders(), 15);
    assert_eq!(desk.file.seed, Some(13));
    // slack re-derived from the proportional fill
    let fill = proportional_fill(&desk.scenario);
    let net = desk.scenario.network();
    let horizon = net.horizon();
    let mut slack = f64::INFINITY;
    for l in 0..net.num_feeders() {
        for t in 0..horizon {
            let load: f64 = net.members(l).iter().map(|&k| fill.get(k, t)).sum();
            slack = slack.min(net.feeder_headroom(l, t) - load);
        }
    }
    assert!((slack - desk.report.slater_slack).abs() < 1e-12);
}

#[test]
fn save_and_reload() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("desk.toml");
    let file = generate_desk13(5, 0.2).unwrap();
    save_scenario(&file, &path).unwrap();
    let loaded = load_scenario(&path).unwrap();
    assert_eq!(loaded.file, file);
    assert_eq!(loaded.scenario.num_pevs(), 90);
    assert!(validate_feasibility(&loaded.scenario).unwrap().slater_verified());
}

#[test]
fn windows_are_one_based_and_inclusive() {
    let loaded = parse_scenario(CHAIN).unwrap();
    assert_eq!(loaded.scenario.pevs()[0].caps, vec![0.0, 3.0, 3.0, 3.0]);
    assert_eq!(loaded.scenario.network().headroom(2), &[6.0, 4.0, 5.0, 8.0]);
}

#[test]
fn error_kinds() {
    let cases = [
        (CHAIN.replace("parent = \"root\"", "parent = \"leaf\""), "topology"),
        (CHAIN.replace("capacity = 10.0", "capacity = 5.5"), "capacity"),
        (CHAIN.replace("finish = 4", "finish = 5"), "window"),
        (CHAIN.replace("feeder = \"leaf\"", "feeder = \"mid\""), "pev"),
        (CHAIN.replace("demand = 6.0", "demand = 9.5"), "pev"),
        (CHAIN.replace("rate_cap = 3.0", "rate_cap = [1.0, 2.0]"), "pev"),
        (CHAIN.replace("schema = \"pevgrid-scenario v1\"", "schema = \"v0\""), "parse"),
        (CHAIN.replace("horizon = 4", "horizon = \"four\""), "parse"),
    ];
    for (text, kind) in cases {
        let err = parse_scenario(&text).unwrap_err();
        let matched = match kind {
            "topology" => matches!(err, Error::MalformedTopology(_)),
            "capacity" => matches!(err, Error::CapacityInfeasible { .. }),
            "window" => matches!(err, Error::InvalidWindow { .. }),
            "pev" => matches!(err, Error::InvalidPev { .. }),
            _ => matches!(err, Error::Parse(_)),
        };
        assert!(matched, "expected {kind}, got {err}");
    }
}

#[test]
fn feeder_energy_shortfall_is_infeasible() {
    // leaf headroom over the day is 0.5 + 4 + 5 + 8 = 17.5 kWh; the two cars want 18
    let text = CHAIN.replace("demand = 6.0", "demand = 9.0")
        + "\n[[fleet]]\nid = \"van\"\nfeeder = \"leaf\"\nstart = 1\nfinish = 4\ndemand = 9.0\nrate_cap = 3.0\n";
    let text = text.replace("leaf = [4.0, 6.0, 5.0, 2.0]", "leaf = [9.5, 6.0, 5.0, 2.0]");
    assert!(matches!(parse_scenario(&text), Err(Error::InfeasibleScenario(_))));
}

#[test]
fn bundled_text_is_the_committed_file() {
    let path = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios/desk13.toml");
    assert_eq!(fs::read_to_string(path).unwrap(), DESK13_TOML);
}

#[test]
fn short_comparison_on_desk13() {
    let desk = bundled_desk13();
    let settings = RunSettings::resolve(&desk.scenario, &MethodSection::default())
        .unwrap()
        .with_max_iterations(2_000);
    let cmp = run_comparison(&desk.scenario, &settings, Execution::Sequential).unwrap();
    let unc = cmp.get(MethodName::Unconstrained);
    assert!(unc.max_overload > 0.0);
    assert!(unc.trace.summary.converged);
    let dir = tempfile::tempdir().unwrap();
    let files = cmp.write_outputs(&desk.scenario, dir.path()).unwrap();
    for f in &files {
        let text = fs::read_to_string(f).unwrap();
        assert!(text.starts_with("# pevgrid-"), "{}", f.display());
        assert!(!text.contains("wall"), "{}", f.display());
    }
}
