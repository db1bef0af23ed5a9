//! The gateway broadcasts a revoked commitment; the bridge punishes it.

use lngate::scenario::{load_builtin, run, RunOptions};

fn main() {
    let scenario = load_builtin("gateway_cheat").expect("built-in scenario");
    let opts = RunOptions {
        paillier_bits: Some(1024),
        ..RunOptions::default()
    };
    let report = run(&scenario, &opts);
    println!("{}\n", scenario.description);
    println!("balances: {:#?}", report.balances);
    println!("on-chain fees: {:?}", report.fee_ledger.onchain);
    for a in &report.assertions {
        println!(
            "{} {} ({})",
            if a.pass { "PASS" } else { "FAIL" },
            a.name,
            a.detail
        );
    }
}
