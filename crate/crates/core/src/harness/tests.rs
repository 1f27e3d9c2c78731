use proptest::prelude::*;

use super::*;
use crate::simfs::AllocatorKind;
use crate::workloads::{
    FsfbParams, InterfileParams, IntrafileParams, ManifestSpec, SteadyFullParams,
    SyntheticRepoParams, WorkloadSpec,
};
use crate::KIB;

fn intrafile(rounds: u64) -> WorkloadSpec {
    WorkloadSpec::Intrafile(IntrafileParams {
        n_files: 4,
        initial_bytes: 16 * KIB,
        chunk_bytes: 4096,
        rounds,
    })
}

fn config(
    workload: WorkloadSpec,
    allocator: AllocatorKind,
    full: u64,
    empty: u64,
) -> ExperimentConfig {
    ExperimentConfig {
        workload,
        allocator,
        device_profile: ProfileSpec::default(),
        device_blocks_full: full,
        device_blocks_empty: empty,
        checkpoint_every: 1,
        compute_unaged: true,
        seed: 7,
    }
}

fn first_fit() -> AllocatorKind {
    AllocatorKind::FirstFitExtent {
        delayed_allocation: false,
    }
}

fn all_allocators() -> Vec<AllocatorKind> {
    vec![
        first_fit(),
        AllocatorKind::FirstFitExtent {
            delayed_allocation: true,
        },
        AllocatorKind::BlockGroup { group_blocks: 256 },
        AllocatorKind::LogStructured {
            segment_blocks: 32,
            clean_threshold: 0.2,
        },
        AllocatorKind::PackedTree {
            node_bytes: 64 * KIB,
            buffer_bytes: 64 * KIB,
        },
    ]
}

fn row(round: u64, variant: Variant) -> ReportRow {
    ReportRow {
        round,
        variant,
        dynamic_layout: 0.5,
        est_grep_seconds_per_gib: 1.0 / 3.0,
        write_seconds_per_gib: 2.0,
        fullness: 0.25,
        blocks_written_cum: 10,
        free_histogram: "4096x1".into(),
    }
}

#[test]
fn csv_of_no_rows_is_the_header() {
    assert_eq!(emit_csv(&[]), format!("{CSV_HEADER}\n"));
}

#[test]
fn csv_of_one_row_has_two_lines() {
    let csv = emit_csv(&[row(3, Variant::Full)]);
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert_eq!(
        lines[1],
        "3,full,0.500000,0.333333,2.000000,0.250000,10,4096x1"
    );
}

#[test]
fn csv_sorts_by_round_then_variant_name() {
    let rows = vec![
        row(2, Variant::Full),
        row(1, Variant::UnagedOfFull),
        row(1, Variant::Empty),
        row(2, Variant::UnagedOfEmpty),
        row(1, Variant::Full),
    ];
    let mut rev = rows.clone();
    rev.reverse();
    let csv = emit_csv(&rows);
    assert_eq!(csv, emit_csv(&rev));
    let order: Vec<String> = csv
        .lines()
        .skip(1)
        .map(|l| l.split(',').take(2).collect::<Vec<_>>().join(","))
        .collect();
    assert_eq!(
        order,
        [
            "1,empty",
            "1,full",
            "1,unaged-of-full",
            "2,full",
            "2,unaged-of-empty"
        ]
    );
}

#[test]
fn one_row_set_when_interval_exceeds_rounds() {
    let mut cfg = config(intrafile(5), first_fit(), 256, 512);
    cfg.checkpoint_every = 100;
    let rows = run_experiment(&cfg).unwrap();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.round == 5));
}

#[test]
fn rows_at_every_multiple_and_the_last_round() {
    let mut cfg = config(intrafile(7), first_fit(), 256, 512);
    cfg.checkpoint_every = 3;
    cfg.compute_unaged = false;
    let rounds: Vec<u64> = run_experiment(&cfg)
        .unwrap()
        .iter()
        .map(|r| r.round)
        .collect();
    assert_eq!(rounds, [3, 3, 6, 6, 7, 7]);
}

#[test]
fn identical_configs_give_identical_csv() {
    let cfg = config(
        intrafile(10),
        AllocatorKind::BlockGroup { group_blocks: 64 },
        256,
        1024,
    );
    assert_eq!(
        emit_csv(&run_experiment(&cfg).unwrap()),
        emit_csv(&run_experiment(&cfg).unwrap())
    );
}

#[test]
fn in_order_copy_is_its_own_unaged_baseline() {
    let wl = WorkloadSpec::Interfile(InterfileParams {
        manifest: ManifestSpec::Synthetic {
            n_files: 200,
            n_dirs: 20,
            file_bytes: 4096,
        },
        pct: 0.0,
    });
    let rows = run_experiment(&config(wl, first_fit(), 512, 1024)).unwrap();
    for r in &rows {
        assert_eq!(r.dynamic_layout, 1.0, "{r:?}");
    }
}

#[test]
fn contiguous_layout_costs_a_contiguous_scan() {
    let wl = WorkloadSpec::Intrafile(IntrafileParams {
        n_files: 1,
        initial_bytes: 64 << 20,
        chunk_bytes: 4096,
        rounds: 0,
    });
    let cfg = config(wl, first_fit(), 20_000, 20_000);
    let profile = cfg.profile().unwrap();
    let expect = profile.contiguous_cost(crate::GIB);
    for r in run_experiment(&cfg).unwrap() {
        assert_eq!(r.dynamic_layout, 1.0);
        let rel = (r.est_grep_seconds_per_gib - expect).abs() / expect;
        assert!(rel < 0.01, "{} vs {expect}", r.est_grep_seconds_per_gib);
    }
}

#[test]
fn full_and_empty_stay_in_lockstep() {
    for alloc in all_allocators() {
        let wl = WorkloadSpec::Fsfb(FsfbParams {
            n_dirs: 10,
            file_min: 1024,
            file_max: 16 * KIB,
            target_fullness: 0.6,
            replace_fraction: 0.1,
            rounds: 5,
        });
        let mut seen = 0;
        run_experiment_with(&config(wl, alloc.clone(), 2048, 8192), |st| {
            let full = st
                .full
                .unwrap_or_else(|| panic!("{alloc:?} stopped by round {}", st.round));
            assert_eq!(
                full.contents(),
                st.empty.contents(),
                "{alloc:?} round {}",
                st.round
            );
            seen += 1;
        })
        .unwrap();
        assert_eq!(seen, 6);
    }
}

#[test]
fn full_variant_stops_and_is_recorded() {
    let wl = WorkloadSpec::Intrafile(IntrafileParams {
        n_files: 4,
        initial_bytes: 16 * KIB,
        chunk_bytes: 4096,
        rounds: 40,
    });
    let cfg = config(wl, first_fit(), 40, 1024);
    let out = run_experiment_with(&cfg, |_| {}).unwrap();
    let stop = out.full_stopped_round.expect("full image overflows");
    assert!(stop > 0 && stop < 40);
    assert!(out
        .rows
        .iter()
        .filter(|r| r.variant == Variant::Full)
        .all(|r| r.round < stop));
    assert!(out
        .rows
        .iter()
        .any(|r| r.variant == Variant::Empty && r.round == 40));
}

#[test]
fn empty_overflow_is_a_capacity_error() {
    let cfg = config(intrafile(40), first_fit(), 40, 40);
    match run_experiment(&cfg) {
        Err(Error::Capacity(m)) => assert!(m.contains("round"), "{m}"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn steady_workloads_absorb_enospc() {
    let wl = WorkloadSpec::SteadyFull(SteadyFullParams {
        inner: Box::new(WorkloadSpec::Intrafile(IntrafileParams {
            n_files: 2,
            initial_bytes: 8 * KIB,
            chunk_bytes: 4096,
            rounds: 50,
        })),
        fill_ratio: 0.6,
        rounds: 30,
    });
    let mut cfg = config(wl, first_fit(), 64, 4096);
    cfg.compute_unaged = false;
    let out = run_experiment_with(&cfg, |_| {}).unwrap();
    assert!(out.enospc_absorbed > 0);
    assert_eq!(out.full_stopped_round, None);
    assert!(out
        .rows
        .iter()
        .any(|r| r.variant == Variant::Full && r.round == 30));
}

#[test]
fn config_json_round_trips_with_defaults() {
    let text = r#"{
        "workload": {"kind": "intrafile", "rounds": 3},
        "allocator": {"kind": "packed_tree", "node_bytes": 65536, "buffer_bytes": 65536},
        "device_blocks_full": 1000,
        "device_blocks_empty": 4000
    }"#;
    let cfg = ExperimentConfig::from_json(text).unwrap();
    assert_eq!(cfg.checkpoint_every, 1);
    assert!(cfg.compute_unaged);
    assert_eq!(cfg.profile().unwrap().label, "hdd");
    assert_eq!(ExperimentConfig::from_json(&cfg.to_json()).unwrap(), cfg);
}

#[test]
fn custom_profile_in_config() {
    let mut cfg = config(intrafile(1), first_fit(), 100, 100);
    cfg.device_profile =
        ProfileSpec::Custom(crate::DeviceProfile::new(1e-3, 1e8, 4096, "x").unwrap());
    let cfg = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
    assert_eq!(cfg.profile().unwrap().seek_time, 1e-3);
}

#[test]
fn invalid_configs_are_rejected() {
    let mut cfg = config(intrafile(1), first_fit(), 100, 100);
    cfg.checkpoint_every = 0;
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    let mut cfg = config(intrafile(1), first_fit(), 100, 50);
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    cfg.device_blocks_empty = 100;
    cfg.device_profile = ProfileSpec::Named("tape".into());
    assert!(matches!(cfg.validate(), Err(Error::Config(_))));
    let cfg = config(
        intrafile(1),
        AllocatorKind::PackedTree {
            node_bytes: 1000,
            buffer_bytes: 4096,
        },
        100,
        100,
    );
    assert!(matches!(run_experiment(&cfg), Err(Error::Config(_))));
    assert!(matches!(
        ExperimentConfig::from_json("{}"),
        Err(Error::Config(_))
    ));
}

#[test]
fn axis_lookup_finds_nested_fields() {
    let tree = AllocatorKind::PackedTree {
        node_bytes: 4096,
        buffer_bytes: 4096,
    };
    let cfg = config(intrafile(1), tree, 100, 200);
    let c = apply_axis(&cfg, "node_bytes", 16384.0).unwrap();
    assert_eq!(
        c.allocator,
        AllocatorKind::PackedTree {
            node_bytes: 16384,
            buffer_bytes: 4096
        }
    );
    let c = apply_axis(&cfg, "device_blocks_full", 150.0).unwrap();
    assert_eq!(c.device_blocks_full, 150);
    let c = apply_axis(&cfg, "rounds", 9.0).unwrap();
    assert!(matches!(
        c.workload,
        WorkloadSpec::Intrafile(IntrafileParams { rounds: 9, .. })
    ));

    let wl = WorkloadSpec::Interfile(InterfileParams {
        manifest: ManifestSpec::Synthetic {
            n_files: 10,
            n_dirs: 2,
            file_bytes: 4096,
        },
        pct: 0.0,
    });
    let cfg = config(wl, first_fit(), 100, 200);
    let c = apply_axis(&cfg, "pct", 12.5).unwrap();
    assert!(
        matches!(c.workload, WorkloadSpec::Interfile(InterfileParams { pct, .. }) if pct == 12.5)
    );
    let c = apply_axis(&cfg, "n_files", 20.0).unwrap();
    assert!(matches!(
        c.workload,
        WorkloadSpec::Interfile(InterfileParams {
            manifest: ManifestSpec::Synthetic { n_files: 20, .. },
            ..
        })
    ));
}

#[test]
fn unknown_axis_is_rejected() {
    let cfg = config(intrafile(1), first_fit(), 100, 200);
    assert!(matches!(
        apply_axis(&cfg, "node_bytes", 1.0),
        Err(Error::InvalidParameter(_))
    ));
    assert!(matches!(
        sweep(&cfg, "kind", &[1.0]),
        Err(Error::InvalidParameter(_))
    ));
}

#[test]
fn single_value_sweep_matches_run() {
    let cfg = config(intrafile(4), first_fit(), 256, 512);
    let s = sweep(&cfg, "seed", &[7.0]).unwrap();
    assert_eq!(s.len(), 1);
    assert_eq!(s[0].value, "7");
    assert_eq!(s[0].rows, run_experiment(&cfg).unwrap());
}

#[test]
fn sweep_keeps_value_order() {
    let cfg = config(
        WorkloadSpec::SyntheticRepo(SyntheticRepoParams {
            n_dir_rounds: 10,
            n_files: 60,
            size_rounds: vec![8192, 12288],
        }),
        AllocatorKind::PackedTree {
            node_bytes: 4096,
            buffer_bytes: 16384,
        },
        2048,
        4096,
    );
    let values = [16384.0, 4096.0, 8192.0];
    let s = sweep(&cfg, "node_bytes", &values).unwrap();
    let labels: Vec<&str> = s.iter().map(|r| r.value.as_str()).collect();
    assert_eq!(labels, ["16384", "4096", "8192"]);
    let csv = emit_sweep_csv("node_bytes", &s);
    assert!(csv.starts_with(&format!("node_bytes,{CSV_HEADER}\n")));
    assert!(csv.lines().nth(1).unwrap().starts_with("16384,"));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn unaging_never_hurts_layout(seed in 0u64..1000, which in 0usize..5) {
        let alloc = all_allocators()[which].clone();
        let wl = WorkloadSpec::Fsfb(FsfbParams {
            n_dirs: 8,
            file_min: 1024,
            file_max: 24 * KIB,
            target_fullness: 0.7,
            replace_fraction: 0.1,
            rounds: 4,
        });
        let mut cfg = config(wl, alloc, 2048, 4096);
        cfg.seed = seed;
        cfg.checkpoint_every = 2;
        let rows = run_experiment(&cfg).unwrap();
        for aged in rows.iter().filter(|r| matches!(r.variant, Variant::Full | Variant::Empty)) {
            let want = if aged.variant == Variant::Full { Variant::UnagedOfFull } else { Variant::UnagedOfEmpty };
            let unaged = rows.iter().find(|r| r.round == aged.round && r.variant == want).unwrap();
            prop_assert!(unaged.dynamic_layout >= aged.dynamic_layout - 0.02, "{aged:?} {unaged:?}");
        }
    }
}
