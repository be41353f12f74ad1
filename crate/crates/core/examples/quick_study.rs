//! Runs one replicate of a mid-size scenario and prints the paired method
//! comparison — a smoke check that the whole pipeline hangs together.
//!
//! ```text
//! cargo run --release --example quick_study [-- <replicate>]
//! ```

use gofscreen_core::{run_replicate, LambdaLevel, Method, Scenario, StudyConfig};

fn main() {
    let replicate: u64 =
        std::env::args().nth(1).map(|a| a.parse().expect("replicate index")).unwrap_or(0);
    let scenario = Scenario::new(LambdaLevel::High, 1_000, 20_260_814);
    let config = StudyConfig::default();
    eprintln!(
        "scenario {} seed {} replicate {replicate}: train {}, test {}",
        scenario.id(),
        scenario.base_seed,
        scenario.train_size,
        scenario.test_size
    );
    let row = run_replicate(&scenario, replicate, &config).expect("replicate");
    for method in Method::ALL {
        let m = row.metric(method);
        println!(
            "{method:<22} auroc {:.4}  auprc {:.4}  brier {:.4}  log_loss {:.4}  tnr@tpr95 {:.4}",
            m.auroc, m.auprc, m.brier, m.log_loss, m.tnr_at_tpr95
        );
    }
    println!(
        "lr_decomp standardized coefficients: bar_ell_obs {:+.3}  bar_ell_det {:+.3}  bar_ell_nondet {:+.3}",
        row.coef_bar_obs, row.coef_bar_det, row.coef_bar_nondet
    );
    println!(
        "fit failures: train {}/{}  test {}/{}  ({:.2}% overall)  wall {:.1}s",
        row.train_fit_failures,
        row.train_size,
        row.test_fit_failures,
        row.test_size,
        100.0 * row.fit_failure_rate(),
        row.seconds
    );
}
