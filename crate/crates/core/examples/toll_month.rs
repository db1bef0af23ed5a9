//! A month of $0.75 toll payments and what the gateway earns from them.

use lngate::scenario::{load_builtin, run, usd_to_sat, RunOptions, DEFAULT_BTC_USD};

fn main() {
    let scenario = load_builtin("toll_month").expect("built-in scenario");
    let report = run(
        &scenario,
        &RunOptions {
            paillier_bits: Some(1024),
            ..RunOptions::default()
        },
    );
    println!(
        "toll: {} sat at ${DEFAULT_BTC_USD}/BTC",
        usd_to_sat(750_000, DEFAULT_BTC_USD)
    );
    let l = &report.fee_ledger;
    println!(
        "service fees: {} sat (${})",
        l.service_fees, l.service_fees_usd
    );
    println!(
        "forwarding fees: {} sat, delivered {} sat",
        l.forwarding_fees, l.delivered
    );
    let pay_bytes: Vec<u64> = report
        .flows
        .iter()
        .filter(|f| f.name == "pay")
        .map(|f| f.iot_bytes_total)
        .collect();
    println!(
        "device link per payment: {}..{} bytes",
        pay_bytes.iter().min().unwrap(),
        pay_bytes.iter().max().unwrap()
    );
    println!("passed: {}", report.passed);
}
