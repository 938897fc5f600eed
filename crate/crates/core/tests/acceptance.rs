//! Acceptance run: one PASS/FAIL line per criterion, non-zero exit if any
//! criterion fails.

use std::path::Path;
use std::process::Command;
use std::time::Instant;

use qudit_qkd::channels::{depolarizing_spectrum, error_vector_for_basis, BellSpectrum};
use qudit_qkd::info_theory::{depolarizing_vector, shannon_entropy, ProbVector};
use qudit_qkd::qudit_algebra::{Dim, ProtocolSpec, WeylIndex};
use qudit_qkd::rates_asymptotic::{critical_q, holevo_general, ie_depolarizing, ie_two_basis, r_infinity};
use qudit_qkd::rates_finite::{log_grid, optimize_r_finite, optimize_r_finite_with, smooth_coefficient, FluxMode, SearchConfig};
use qudit_qkd::simulator::{run_simulation, SimConfig};
use qudit_qkd::verify::{check_commutation, check_eigenbases, check_mub, check_round_trip, check_unitarity, verify_dim, Fault};
use qudit_qkd::ErrorVector;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

const EPS: f64 = 1e-5;
const EPS_EC: f64 = 1e-10;
const FIG_Q: f64 = 0.05;

fn dim(d: usize) -> Dim {
    Dim::new(d).unwrap()
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn table_regression() -> Outcome {
    let expected: [(usize, f64, Option<f64>); 6] = [
        (2, 11.00, Some(12.62)),
        (3, 15.95, Some(19.14)),
        (4, 18.93, None),
        (5, 20.99, Some(25.94)),
        (7, 23.72, Some(29.53)),
        (11, 26.82, Some(33.36)),
    ];
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    let mut count = 0;
    for (d, two, dplus1) in expected {
        let got = 100.0 * critical_q(&ProtocolSpec::two_basis(d).unwrap()).map_err(|e| e.to_string())?;
        worst = worst.max((got - two).abs());
        count += 1;
        if let Some(v) = dplus1 {
            let got = 100.0 * critical_q(&ProtocolSpec::dplus1(d).unwrap()).map_err(|e| e.to_string())?;
            worst = worst.max((got - v).abs());
            count += 1;
        }
    }
    // d = 4 in the (d+1)-basis column is gated out: the family needs prime d.
    ensure(ProtocolSpec::dplus1(4).is_err(), || "d=4 (d+1)-basis was not rejected".into())?;
    let elapsed = start.elapsed().as_secs_f64();
    ensure(worst <= 0.02 + 1e-9, || format!("max deviation {worst:.4} pp"))?;
    ensure(elapsed < 5.0, || format!("took {elapsed:.2} s"))?;
    Ok(format!("{count} entries, max deviation {worst:.4} pp, {elapsed:.3} s"))
}

fn closed_form_cross_check() -> Outcome {
    let mut worst: f64 = 0.0;
    let mut points = 0;
    for d in [2, 3, 5, 7, 11] {
        for spec in [ProtocolSpec::two_basis(d).unwrap(), ProtocolSpec::dplus1(d).unwrap()] {
            let q_crit = critical_q(&spec).map_err(|e| e.to_string())?;
            let mut i = 1;
            while 0.01 * i as f64 <= q_crit {
                let q = 0.01 * i as f64;
                let closed = ie_depolarizing(&spec, q).map_err(|e| e.to_string())?;
                let general = match spec.family() {
                    qudit_qkd::Family::DPlusOneBasis => {
                        holevo_general(&spec, &depolarizing_spectrum(dim(d), q).unwrap()).unwrap()
                    }
                    // every compatible spectrum; the extremal one has λ_jk = q01_j q10_k
                    qudit_qkd::Family::TwoBasis => {
                        let qv = depolarizing_vector(dim(d), q).unwrap();
                        let lam = product_spectrum(d, qv.as_slice(), qv.as_slice());
                        holevo_general(&spec, &lam).unwrap()
                    }
                };
                worst = worst.max((closed - general).abs());
                points += 1;
                i += 1;
            }
        }
    }
    ensure(worst <= 1e-10, || format!("max |closed − general| = {worst:e}"))?;
    Ok(format!("{points} (d, Q, family) points, max difference {worst:.2e}"))
}

/// `λ_{j,k} = q01[j] · q10[−k mod d]`, which reproduces both marginals.
fn product_spectrum(d: usize, q01: &[f64], q10: &[f64]) -> BellSpectrum {
    let mut lam = vec![0.0; d * d];
    for j in 0..d {
        for k in 0..d {
            lam[j * d + k] = q01[j] * q10[(d - k) % d];
        }
    }
    BellSpectrum::new(dim(d), lam).unwrap()
}

fn simplex_grid(d: usize, steps: usize) -> Vec<Vec<usize>> {
    if d == 1 {
        return vec![vec![steps]];
    }
    let mut out = Vec::new();
    for first in 0..=steps {
        for mut rest in simplex_grid(d - 1, steps - first) {
            rest.insert(0, first);
            out.push(rest);
        }
    }
    out
}

/// Max of χ over spectra `λ_{j,k} = q01[j] a_j[k]` whose `q_10` marginal is
/// fixed; rows `j < d−1` scan a 0.05 simplex grid, the last row is solved
/// from the marginal.
fn brute_force_two_basis(d: usize, q01: &[f64], q10: &[f64]) -> f64 {
    let steps = 20;
    let grid = simplex_grid(d, steps);
    let spec = ProtocolSpec::two_basis(d).unwrap();
    let column_target: Vec<f64> = (0..d).map(|k| q10[(d - k) % d]).collect();
    let mut best = f64::NEG_INFINITY;
    let mut rows = vec![0usize; d - 1];
    let total = grid.len().pow((d - 1) as u32);
    for idx in 0..total {
        let mut rem = idx;
        for r in rows.iter_mut() {
            *r = rem % grid.len();
            rem /= grid.len();
        }
        let mut lam = vec![0.0; d * d];
        for (j, &g) in rows.iter().enumerate() {
            for k in 0..d {
                lam[j * d + k] = q01[j] * grid[g][k] as f64 / steps as f64;
            }
        }
        let mut feasible = true;
        for k in 0..d {
            let used: f64 = (0..d - 1).map(|j| lam[j * d + k]).sum();
            let last = column_target[k] - used;
            if last < -1e-12 {
                feasible = false;
                break;
            }
            lam[(d - 1) * d + k] = last.max(0.0);
        }
        if !feasible {
            continue;
        }
        let Ok(spectrum) = BellSpectrum::new(dim(d), lam) else { continue };
        best = best.max(holevo_general(&spec, &spectrum).unwrap());
    }
    best
}

fn two_basis_tightness() -> Outcome {
    let cases: [(usize, &[f64], &[f64]); 5] = [
        (2, &[0.9, 0.1], &[0.9, 0.1]),
        (2, &[0.85, 0.15], &[0.8, 0.2]),
        (3, &[0.9, 0.05, 0.05], &[0.9, 0.05, 0.05]),
        (3, &[0.8, 0.1, 0.1], &[0.8, 0.15, 0.05]),
        (3, &[0.7, 0.2, 0.1], &[0.75, 0.1, 0.15]),
    ];
    let mut worst_gap: f64 = 0.0;
    for (d, q01, q10) in cases {
        let v01 = ErrorVector::new(WeylIndex { j: 0, k: 1 }, q01.to_vec()).unwrap();
        let v10 = ErrorVector::new(WeylIndex { j: 1, k: 0 }, q10.to_vec()).unwrap();
        let ie = ie_two_basis(&v01, &v10);
        let h = shannon_entropy(&ProbVector::new(q10.to_vec()).unwrap());
        ensure(ie.to_bits() == h.to_bits(), || format!("d={d}: I_E {ie} != H(q10) {h}"))?;
        // the extremal spectrum attains the bound and has the right marginals
        let lam = product_spectrum(d, q01, q10);
        let back = error_vector_for_basis(&lam, WeylIndex { j: 1, k: 0 }).unwrap();
        for (a, b) in back.q.as_slice().iter().zip(q10) {
            ensure((a - b).abs() < 1e-12, || format!("d={d}: product spectrum marginal mismatch"))?;
        }
        let brute = brute_force_two_basis(d, q01, q10);
        ensure(brute <= ie + 1e-9, || format!("d={d}: grid χ {brute} exceeds I_E {ie}"))?;
        ensure(ie - brute <= 0.01, || format!("d={d}: grid χ {brute} more than 0.01 below I_E {ie}"))?;
        worst_gap = worst_gap.max(ie - brute);
    }
    Ok(format!("I_E == H(q10) bitwise; max grid gap {worst_gap:.2e} bits"))
}

fn round_trip() -> Outcome {
    let mut worst: f64 = 0.0;
    for d in [2, 3, 5, 7] {
        let r = check_round_trip(dim(d), 100, 1000 + d as u64).map_err(|e| e.to_string())?;
        ensure(r.passed, || format!("d={d}: error {:e}", r.max_error))?;
        worst = worst.max(r.max_error);
    }
    Ok(format!("100 spectra per d, max error {worst:.2e}"))
}

fn algebraic_suite() -> Outcome {
    let mut checks = 0;
    for d in 2..=7 {
        for r in verify_dim(dim(d), Fault::None).map_err(|e| e.to_string())? {
            ensure(r.passed, || format!("{} d={} error {:e}", r.name, r.d, r.max_error))?;
            checks += 1;
        }
    }
    for d in 8..=19 {
        let rs = [
            check_unitarity(dim(d), Fault::None),
            check_commutation(dim(d), Fault::None),
            check_mub(dim(d), Fault::None).map_err(|e| e.to_string())?,
            check_eigenbases(dim(d), Fault::None).map_err(|e| e.to_string())?,
        ];
        for r in rs {
            ensure(r.passed, || format!("{} d={} error {:e}", r.name, r.d, r.max_error))?;
            checks += 1;
        }
    }
    Ok(format!("{checks} checks over d = 2..19"))
}

fn monte_carlo() -> Outcome {
    let mut slowest: f64 = 0.0;
    let mut worst_z: f64 = 0.0;
    let mut configs = 0;
    for d in [2, 3, 5] {
        for q in [0.05, 0.1] {
            let spec = ProtocolSpec::dplus1(d).unwrap();
            let lam = depolarizing_spectrum(dim(d), q).unwrap();
            let cfg = SimConfig::new(spec, lam, 1_000_000, 20_000 + 10 * d as u64 + (q * 100.0) as u64);
            let start = Instant::now();
            let res = run_simulation(&cfg).map_err(|e| e.to_string())?;
            let secs = start.elapsed().as_secs_f64();
            slowest = slowest.max(secs);
            for b in &res.bases {
                worst_z = worst_z.max(b.max_z);
                ensure(b.max_z <= 5.0, || format!("d={d} Q={q} basis {:?}: z = {:.2}", b.basis, b.max_z))?;
                ensure(b.chi_square < b.chi_square_critical, || {
                    format!("d={d} Q={q} basis {:?}: χ² {:.2} ≥ {:.2}", b.basis, b.chi_square, b.chi_square_critical)
                })?;
            }
            ensure(secs < 60.0, || format!("d={d} Q={q}: {secs:.1} s"))?;
            configs += 1;
        }
    }
    Ok(format!("{configs} configurations, max |z| {worst_z:.2}, slowest {slowest:.2} s"))
}

fn finite_key_curves() -> Outcome {
    // 10 points per decade up to 1e6, 2 per decade beyond.
    let mut grid = log_grid(1_000, 1_000_000, 31);
    grid.extend(log_grid(1_000_000, 1_000_000_000_000, 13).into_iter().skip(1));
    let mut summary = Vec::new();
    let mut failures = Vec::new();
    for d in [2, 3, 5, 7, 11] {
        for spec in [ProtocolSpec::two_basis(d).unwrap(), ProtocolSpec::dplus1(d).unwrap()] {
            let rates: Vec<f64> = grid
                .iter()
                .map(|&n| optimize_r_finite(&spec, FIG_Q, n, EPS, EPS_EC).map(|r| r.r_n))
                .collect::<Result<_, _>>()
                .map_err(|e| e.to_string())?;
            let tag = format!("{} d={d}", spec.family());
            if rates[0] != 0.0 {
                failures.push(format!("{tag}: r(1e3) = {:.4}", rates[0]));
            }
            match grid.iter().zip(&rates).find(|(_, &r)| r > 0.0) {
                Some((&n_star, _)) => {
                    summary.push(format!("{tag} N*≈{n_star}"));
                    if !(10_000..=1_000_000).contains(&n_star) {
                        failures.push(format!("{tag}: first positive at N = {n_star}"));
                    }
                }
                None => failures.push(format!("{tag}: never positive")),
            }
            for (w, n) in rates.windows(2).zip(grid.windows(2)) {
                if w[1] < w[0] - 1e-9 {
                    failures.push(format!("{tag}: r drops from {:.6} at N={} to {:.6} at N={}", w[0], n[0], w[1], n[1]));
                }
            }
            if d <= 5 {
                let r_inf = r_infinity(&spec, FIG_Q).unwrap().r_inf;
                let last = *rates.last().unwrap();
                if (r_inf - last).abs() > 0.1 * r_inf {
                    failures.push(format!("{tag}: r(1e12) = {last:.4} vs r_inf = {r_inf:.4}"));
                }
            }
        }
    }
    if failures.is_empty() {
        Ok(summary.join(", "))
    } else {
        Err(failures.join("; "))
    }
}

fn smooth_coefficient_values() -> Outcome {
    let c2 = smooth_coefficient(dim(2));
    let c5 = smooth_coefficient(dim(5));
    ensure(c2 == 5.0, || format!("d=2 coefficient {c2}"))?;
    ensure((c5 - 7.6439).abs() < 1e-4, || format!("d=5 coefficient {c5}"))?;
    let report = optimize_r_finite(&ProtocolSpec::dplus1(5).unwrap(), FIG_Q, 10_000_000, EPS, EPS_EC)
        .map_err(|e| e.to_string())?;
    ensure(report.terms.smooth_coefficient == c5, || "term breakdown disagrees".into())?;
    Ok(format!("d=2: {c2}, d=5: {c5:.4}"))
}

fn flux_mode_ordering() -> Outcome {
    let cfg = SearchConfig::default();
    let mut lines = Vec::new();
    for d in [3, 5] {
        let spec = ProtocolSpec::dplus1(d).unwrap();
        for n in [100_000u64, 10_000_000] {
            let run = |mode| optimize_r_finite_with(&spec, FIG_Q, n, EPS, EPS_EC, mode, &cfg).map(|r| r.r_n);
            let equal = run(FluxMode::Equal).map_err(|e| e.to_string())?;
            let single = run(FluxMode::Single).map_err(|e| e.to_string())?;
            let brute = run(FluxMode::Brute).map_err(|e| e.to_string())?;
            ensure(equal <= single + 1e-12, || format!("d={d} N={n}: equal {equal} > single {single}"))?;
            ensure(brute <= equal + 1e-12, || format!("d={d} N={n}: brute {brute} > equal {equal}"))?;
            lines.push(format!("d={d} N={n:e}: {brute:.3} ≤ {equal:.3} ≤ {single:.3}"));
        }
    }
    Ok(lines.join(", "))
}

fn run_cli(args: &[&str], out: &Path) -> Result<Vec<u8>, String> {
    let status = Command::new(env!("CARGO_BIN_EXE_qudit-qkd"))
        .args(args)
        .arg("--out")
        .arg(out)
        .status()
        .map_err(|e| e.to_string())?;
    ensure(status.code() == Some(0), || format!("{args:?} exited with {status}"))?;
    std::fs::read(out).map_err(|e| e.to_string())
}

fn cli_determinism() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let commands: [&[&str]; 7] = [
        &["critical-q", "--dims", "2,3,5,7,11", "--family", "dplus1"],
        &["critical-q", "--dims", "2,3,4", "--format", "json"],
        &["asymptotic", "--dim", "3", "--q-step", "0.05"],
        &["finite-key", "--dim", "2,3", "--n-min", "1e4", "--n-max", "1e8", "--n-points", "5", "--format", "json"],
        &["finite-key", "--dim", "3", "--family", "dplus1", "--n", "1e6", "--flux-mode", "single"],
        &["simulate", "--dim", "3", "--family", "dplus1", "--q", "0.1", "--rounds", "50000", "--seed", "7"],
        &["verify", "--dims", "2..5", "--format", "json"],
    ];
    for (i, cmd) in commands.iter().enumerate() {
        let a = run_cli(cmd, &dir.path().join(format!("{i}a")))?;
        let b = run_cli(cmd, &dir.path().join(format!("{i}b")))?;
        ensure(!a.is_empty() && a == b, || format!("{cmd:?} output differs between runs"))?;
    }
    Ok(format!("{} commands byte-identical across two runs", commands.len()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        ("table regression", table_regression),
        ("closed-form cross-check", closed_form_cross_check),
        ("2-basis tightness", two_basis_tightness),
        ("lambda/q round trip", round_trip),
        ("algebraic suite", algebraic_suite),
        ("Monte Carlo agreement", monte_carlo),
        ("finite-key curves", finite_key_curves),
        ("smoothing coefficient", smooth_coefficient_values),
        ("flux-mode ordering", flux_mode_ordering),
        ("CLI determinism", cli_determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = (i + 1).to_string();
        if !filter.is_empty() && !filter.iter().any(|p| *p == id || name.contains(p.as_str())) {
            continue;
        }
        let start = Instant::now();
        let outcome = f();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("PASS {:>2} {name} ({secs:.1} s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {:>2} {name} ({secs:.1} s): {detail}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
