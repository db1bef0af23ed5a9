use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use lngate::scenario::{self, RunOptions, Scenario};

#[derive(Parser)]
#[command(version, about = "Run LNGate simulator scenarios")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// List the built-in scenarios.
    List,
    /// Run a built-in scenario by name, or a scenario file.
    Run {
        scenario: String,
        #[arg(long)]
        seed: Option<u64>,
        /// Write the JSON report here.
        #[arg(long)]
        json: Option<PathBuf>,
        /// Write the final chain as JSON here.
        #[arg(long)]
        dump_chain: Option<PathBuf>,
        /// Service fee in parts per million.
        #[arg(long)]
        fee_ppm: Option<u32>,
        /// Dollars per bitcoin for dollar-denominated payments.
        #[arg(long)]
        btc_usd: Option<u64>,
        /// Paillier modulus size; 1024 is fast but only fit for tests.
        #[arg(long)]
        paillier_bits: Option<usize>,
    },
}

fn load(name: &str) -> Result<Scenario, String> {
    if name.ends_with(".toml") {
        let text = std::fs::read_to_string(name).map_err(|e| format!("{name}: {e}"))?;
        Scenario::parse(&text).map_err(|e| e.to_string())
    } else {
        scenario::load_builtin(name).map_err(|e| e.to_string())
    }
}

fn write(path: &PathBuf, text: &str) -> Result<(), String> {
    std::fs::write(path, text).map_err(|e| format!("{}: {e}", path.display()))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let Cmd::Run {
        scenario,
        seed,
        json,
        dump_chain,
        fee_ppm,
        btc_usd,
        paillier_bits,
    } = cli.cmd
    else {
        let mut out = std::io::stdout().lock();
        for (name, text) in scenario::BUILTIN {
            let desc = Scenario::parse(text)
                .map(|s| s.description)
                .unwrap_or_default();
            // a closed pipe (`| head`) just ends the listing
            if writeln!(out, "{name:<30} {desc}").is_err() {
                break;
            }
        }
        return ExitCode::SUCCESS;
    };
    let s = match load(&scenario) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };
    let opts = RunOptions {
        seed,
        service_fee_ppm: fee_ppm,
        btc_usd,
        paillier_bits,
    };
    let start = Instant::now();
    let (report, sim) = scenario::execute(&s, &opts);
    let elapsed = start.elapsed();

    println!("scenario {} (seed {})", report.scenario, report.seed);
    for f in &report.flows {
        if f.name == "mine" {
            continue;
        }
        let err = f
            .error
            .as_deref()
            .map(|e| format!("  [{e}]"))
            .unwrap_or_default();
        println!(
            "  flow {:<14} {:>6} bytes {:>3} frames{err}",
            f.name, f.iot_bytes_total, f.iot_frames
        );
    }
    let b = &report.balances;
    println!(
        "  on-chain: iot {} gateway {} bridge {}; destination received {}",
        b.iot_payout, b.gateway, b.bridge, b.destination_received
    );
    let l = &report.fee_ledger;
    println!(
        "  fees: service {} (${}), forwarding {}, on-chain {} (open {}, close {}, penalty {}, other {})",
        l.service_fees,
        l.service_fees_usd,
        l.forwarding_fees,
        l.onchain.total,
        l.onchain.open,
        l.onchain.close,
        l.onchain.penalty,
        l.onchain.other
    );
    for a in &report.assertions {
        let tag = if a.pass { "PASS" } else { "FAIL" };
        println!("  {tag} {:<32} {}", a.name, a.detail);
    }
    eprintln!("finished in {:.2}s", elapsed.as_secs_f64());

    let outputs = [
        json.map(|p| (p, report.to_json())),
        dump_chain.map(|p| {
            let dump = serde_json::to_string_pretty(&sim.chain().dump_json()).expect("chain dump");
            (p, dump)
        }),
    ];
    for (path, text) in outputs.into_iter().flatten() {
        if let Err(e) = write(&path, &text) {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    if report.passed {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(1)
    }
}
