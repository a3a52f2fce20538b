use std::fs;
use std::path::Path;
use std::process::Command;
use std::sync::Arc;

use pabn::cli_io::{read_vtk, write_csv, write_vtk};
use pabn::experiments::{summarize, SweepResult, SweepRow};
use pabn::topology::diagnose;
use pabn::{
    trial_field, CellParams, ElasticConstants, EnergyBreakdown, GridGeometry, RelaxReport,
    StopReason, TopologyClass,
};

fn pabn(args: &[&str], dir: &Path) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_pabn"))
        .args(args)
        .current_dir(dir)
        .env("PABN_THREADS", "2")
        .output()
        .unwrap()
}

#[test]
fn trial_vtk_diagnose_round_trip_keeps_signatures() {
    let dir = tempfile::tempdir().unwrap();
    let geom = Arc::new(GridGeometry::build(CellParams::new(1.0, 16)).unwrap());
    for topo in TopologyClass::ALL {
        let f = trial_field(&geom, topo).unwrap();
        let path = dir.path().join(format!("{topo}.vtk"));
        write_vtk(&f, Some(topo), &path).unwrap();
        let (back, label) = read_vtk(&path).unwrap();
        assert_eq!(label, Some(topo));
        assert_eq!(diagnose(&back).unwrap(), diagnose(&f).unwrap());
    }
}

#[test]
fn binary_trial_then_diagnose() {
    let dir = tempfile::tempdir().unwrap();
    for topo in ["T", "P1", "P2", "P3"] {
        let out = pabn(
            &[
                "trial",
                "--topology",
                topo,
                "--height",
                "0.5",
                "--grid",
                "16",
                "-o",
                topo,
            ],
            dir.path(),
        );
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        let vtk = format!("{topo}/trial.vtk");
        let out = pabn(&["diagnose", &vtk], dir.path());
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
        let text = String::from_utf8(out.stdout).unwrap();
        assert!(text.contains(&format!("class={topo}\n")), "{text}");
    }
}

#[test]
fn binary_reports_bad_configuration() {
    let dir = tempfile::tempdir().unwrap();
    let out = pabn(&["run", "--height", "0.3", "--grid", "8"], dir.path());
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(
        err.contains("height") && err.contains("not conforming to grid"),
        "{err}"
    );

    fs::write(dir.path().join("cfg.json"), r#"{"k1": -1}"#).unwrap();
    let out = pabn(&["run", "--config", "cfg.json"], dir.path());
    assert!(!out.status.success());
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(
        err.contains("k1") && err.contains("must be positive"),
        "{err}"
    );
}

#[test]
fn binary_run_writes_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let out = pabn(
        &[
            "run",
            "--topology",
            "P3",
            "--height",
            "0.5",
            "--grid",
            "8",
            "--k1",
            "4",
            "--k2",
            "2",
            "--k3",
            "6",
            "-o",
            "r",
        ],
        dir.path(),
    );
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let energies = fs::read_to_string(dir.path().join("r/energies.csv")).unwrap();
    assert_eq!(energies.lines().count(), 2);
    assert!(energies
        .lines()
        .nth(1)
        .unwrap()
        .starts_with("P3,0.5,8,4,2,6,0,"));
    assert!(dir.path().join("r/field.vtk").exists());
    let diag = fs::read_to_string(dir.path().join("r/diagnostics.csv")).unwrap();
    assert!(diag.starts_with("kind,id,value,kink\nvertical_edge,1,1,\nvertical_edge,2,-1,\n"));
}

#[test]
fn repeated_sweeps_give_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let args = |o: &'static str| {
        [
            "sweep",
            "--heights",
            "0.5,1",
            "--topologies",
            "T,P1,P3",
            "--grid",
            "8",
            "-o",
            o,
        ]
    };
    for o in ["a", "b"] {
        let out = pabn(&args(o), dir.path());
        assert!(
            out.status.success(),
            "{}",
            String::from_utf8_lossy(&out.stderr)
        );
    }
    for file in ["energies.csv", "epsilons.csv"] {
        let a = fs::read(dir.path().join("a").join(file)).unwrap();
        let b = fs::read(dir.path().join("b").join(file)).unwrap();
        assert!(!a.is_empty());
        assert_eq!(a, b, "{file}");
    }
    let eps = fs::read_to_string(dir.path().join("a/epsilons.csv")).unwrap();
    assert_eq!(eps.lines().count(), 3);
}

fn row(topo: TopologyClass, h: f64, total: f64) -> SweepRow {
    let energy = EnergyBreakdown {
        total,
        splay: total,
        ..Default::default()
    };
    SweepRow {
        topology: topo,
        h_over_lc: h,
        grid_n: 16,
        constants: ElasticConstants::new(4.0, 2.0, 6.0, 0.0),
        energy,
        report: RelaxReport {
            iterations: 12,
            initial_energy: energy,
            final_energy: energy,
            converged: true,
            reason: StopReason::EnergyFlat,
            energy_trace: vec![],
        },
        signature: None,
    }
}

#[test]
fn csv_golden_files() {
    let dir = tempfile::tempdir().unwrap();
    // P2 missing at 0.5: gaps only need T, P1 and P3
    let rows = vec![
        row(TopologyClass::P3, 0.5, 12.5),
        row(TopologyClass::T, 1.0, 10.0),
        row(TopologyClass::T, 0.5, 10.0),
        row(TopologyClass::P1, 0.5, 11.0),
        row(TopologyClass::P1, 1.0, 12.0),
        row(TopologyClass::P2, 1.0, 12.25),
    ];
    let (eps, plateau) = summarize(&[0.5, 1.0], &rows);
    let result = SweepResult {
        rows,
        failures: vec![],
        eps,
        plateau,
    };
    write_csv(&result, dir.path()).unwrap();
    let energies = fs::read_to_string(dir.path().join("energies.csv")).unwrap();
    assert_eq!(
        energies,
        "topology,h_over_Lc,grid_N,K1,K2,K3,K24,E_total,E_splay,E_twist,E_bend,E_saddle,iterations,converged\n\
         T,0.5,16,4,2,6,0,10,10,0,0,0,12,true\n\
         T,1,16,4,2,6,0,10,10,0,0,0,12,true\n\
         P1,0.5,16,4,2,6,0,11,11,0,0,0,12,true\n\
         P1,1,16,4,2,6,0,12,12,0,0,0,12,true\n\
         P2,1,16,4,2,6,0,12.25,12.25,0,0,0,12,true\n\
         P3,0.5,16,4,2,6,0,12.5,12.5,0,0,0,12,true\n"
    );
    let eps = fs::read_to_string(dir.path().join("epsilons.csv")).unwrap();
    assert_eq!(eps, "h_over_Lc,eps1,eps3\n0.5,0.1,0.25\n1,0.2,\n");
}
