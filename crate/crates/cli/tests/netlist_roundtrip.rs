use std::path::Path;

use proptest::prelude::*;
use qlc_cli::netlist::{Component, Composition, NoiseEntry, NoiseKind};
use qlc_cli::{emit_netlist, parse_netlist, Netlist};
use qlc_core::analysis::lqg_cost;
use qlc_core::optimizer::{ControllerTemplate, OptimizeOptions, Template};
use serde_json::json;

fn read(name: &str) -> String {
    std::fs::read_to_string(Path::new(env!("CARGO_MANIFEST_DIR")).join("presets").join(name)).unwrap()
}

#[test]
fn presets_round_trip() {
    for name in ["cavity_plant.json", "optomech.json"] {
        let n = parse_netlist(&read(name)).unwrap();
        assert_eq!(parse_netlist(&emit_netlist(&n)).unwrap(), n, "{name}");
    }
}

#[test]
fn optomech_preset_topology() {
    let n = parse_netlist(&read("optomech.json")).unwrap();
    let g = n.circuit().unwrap();
    assert_eq!(g.n_modes(), 1);
    assert_eq!(g.inputs(), ["plant.probe", "plant.feedback", "plant.bath"]);
    let sc = n.scenario(Some(3.0)).unwrap();
    assert!(sc.is_optomech());
    assert!((sc.no_control_cost().unwrap() - 3.0).abs() < 1e-8);
}

#[test]
fn custom_composition_matches_preset() {
    // the same cavity from the generic component; the permutation keeps the
    // composition from being read as a preset
    let text = json!({
        "schema": "qlc/1",
        "components": [{"id": "c", "type": "cavity", "params": {"kappas": [0.01, 0.01, 0.01], "delta": 0.1}}],
        "composition": {"permute": {"of": {"ref": "c"}, "order": [0, 1, 2]}},
        "noise": [{"port": "c.0", "kind": "vacuum"}, {"port": "c.1", "kind": "vacuum"}, {"port": "c.2", "kind": "thermal"}],
        "kn": 10.0,
        "loop": {"sense": "c.0", "actuate": "c.1"}
    })
    .to_string();
    let custom = parse_netlist(&text).unwrap().scenario(None).unwrap();
    let preset = parse_netlist(&read("cavity_plant.json")).unwrap().scenario(Some(10.0)).unwrap();
    assert!((custom.no_control_cost().unwrap() - preset.no_control_cost().unwrap()).abs() < 1e-12);
    let t = Template::new(ControllerTemplate::TrivialPhase);
    let cost = |sc, phi| lqg_cost(&t.instantiate(sc, &[phi]).unwrap().closed).unwrap();
    assert!((cost(&preset, 0.0) - 2.0).abs() < 1e-10);
    for phi in [0.0, 0.4, -2.0] {
        assert!((cost(&custom, phi) - cost(&preset, phi)).abs() < 1e-12);
    }
}

#[test]
fn feedback_by_label() {
    let text = json!({
        "schema": "qlc/1",
        "components": [
            {"id": "c", "type": "cavity", "params": {"kappas": [0.2, 0.1], "delta": 0.0}},
            {"id": "p", "type": "phase", "params": {"phi": 1.0}}
        ],
        "composition": {"feedback": {"of": {"concat": [{"ref": "c"}, {"ref": "p"}]}, "output": "c.1", "input": 2}},
        "noise": [{"port": "c.0", "kind": "vacuum"}, {"port": "c.1", "kind": "vacuum"}]
    })
    .to_string();
    let n = parse_netlist(&text).unwrap();
    let g = n.circuit().unwrap();
    assert_eq!(g.n_ports(), 2);
    assert_eq!(g.inputs(), ["c.0", "c.1"]);
    assert_eq!(g.outputs(), ["c.0", "p.0"]);
}

fn component() -> impl Strategy<Value = (String, serde_json::Value, usize)> {
    prop_oneof![
        (0.0..1.0f64, -1.0..1.0f64).prop_map(|(k, d)| ("cavity".to_string(), json!({"kappas": [k, k / 2.0], "delta": d}), 2)),
        (-3.0..3.0f64).prop_map(|phi| ("phase".to_string(), json!({"phi": phi}), 1)),
        (-1.0..1.0f64).prop_map(|a| ("beamsplitter".to_string(), json!({"alpha": a}), 2)),
        (-2.0..2.0f64, -2.0..2.0f64).prop_map(|(re, im)| ("displacement".to_string(), json!({"re": re, "im": im}), 1)),
        (1usize..4).prop_map(|n| ("identity".to_string(), json!({"ports": n}), n)),
    ]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn emit_parse_round_trip(
        parts in prop::collection::vec(component(), 1..5),
        thermal in any::<u64>(),
        kn in prop::option::of(0.0..1e6f64),
        seed in any::<u64>(),
    ) {
        let components: Vec<Component> = parts
            .iter()
            .enumerate()
            .map(|(i, (kind, params, _))| Component { id: format!("u{i}"), kind: kind.clone(), params: params.clone() })
            .collect();
        let mut noise = Vec::new();
        for (i, (_, _, ports)) in parts.iter().enumerate() {
            for p in 0..*ports {
                let bit = (thermal >> (noise.len() % 64)) & 1 == 1;
                noise.push(NoiseEntry {
                    port: format!("u{i}.{p}"),
                    kind: if bit { NoiseKind::Thermal } else { NoiseKind::Vacuum },
                });
            }
        }
        let composition = Composition::Concat((0..parts.len()).map(|i| Composition::Ref(format!("u{i}"))).collect());
        let netlist = Netlist {
            schema: "qlc/1".into(),
            name: Some("random".into()),
            components,
            composition: Some(composition),
            noise,
            kn,
            cost: qlc_core::analysis::CostSpec::mode(0),
            control_loop: None,
            controller: Some(Template::new(ControllerTemplate::Cavity)),
            optimizer: Some(OptimizeOptions { seed, ..OptimizeOptions::default() }),
        };
        let back = parse_netlist(&emit_netlist(&netlist)).unwrap();
        prop_assert_eq!(back, netlist);
    }
}
