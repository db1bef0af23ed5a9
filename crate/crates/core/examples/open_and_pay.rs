//! Opens a channel and makes one payment, printing every message.

use lngate::chain_sim::COIN;
use lngate::nodes::{SimConfig, Simulation};

fn main() {
    let mut sim = Simulation::new(SimConfig::testing(1));
    sim.open_channel(10 * COIN).expect("open");
    let dest = sim.destination().id();
    let out = sim.pay(COIN, dest).expect("pay");
    println!(
        "delivered {:?} sat, fee {} sat\n",
        out.delivered, out.service_fee
    );

    for (i, flow) in sim.flows().iter().enumerate() {
        println!(
            "{} ({} bytes, {} frames on the device link)",
            flow.name,
            flow.iot_link.total_bytes(),
            flow.iot_link.frame_count
        );
        for e in sim.flow_events(i) {
            let step = e.step.map_or("  ".into(), |s| format!("{s:>2}"));
            println!(
                "  {step} {:?} -> {:?}  {} ({} bytes)",
                e.from, e.to, e.name, e.bytes
            );
        }
    }
}
