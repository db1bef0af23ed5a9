use serde::Serialize;

use super::{
    format_usd, golden, parse_micro_usd, sat_to_micro_usd, usd_to_sat, Action, Expect, FeeCategory,
    GoldenFlow, Scenario, Target, DEFAULT_BTC_USD,
};
use crate::chain_sim::{Sat, SimChain, SpendCondition, Witness};
use crate::channel::{ChannelState, OutputRole};
use crate::nodes::{
    Actor, ChannelStatus, FlowRecord, Holdings, PaymentStatus, SimConfig, Simulation, TraceEvent,
};
use crate::wire::Message;

/// Command-line style overrides applied on top of a scenario.
#[derive(Clone, Debug, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    pub service_fee_ppm: Option<u32>,
    pub btc_usd: Option<u64>,
    pub paillier_bits: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ActionRecord {
    pub index: usize,
    pub op: &'static str,
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FlowReport {
    pub name: String,
    pub error: Option<String>,
    pub iot_bytes_sent: u64,
    pub iot_bytes_received: u64,
    pub iot_bytes_total: u64,
    pub iot_frames: u64,
    /// Messages in this flow that crossed the IoT link, per the trace.
    pub iot_leg_events: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Balances {
    pub iot_wallet: Sat,
    pub iot_payout: Sat,
    pub gateway: Sat,
    pub bridge: Sat,
    pub destination_received: Sat,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ChannelSummary {
    pub status: ChannelStatus,
    pub state_num: u64,
    pub capacity: Sat,
    pub iot: Sat,
    pub bridge: Sat,
    pub htlc: Sat,
    pub fees: Sat,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct OnchainFees {
    pub open: Sat,
    pub close: Sat,
    pub penalty: Sat,
    pub other: Sat,
    pub total: Sat,
}

impl OnchainFees {
    fn get(&self, c: FeeCategory) -> Sat {
        match c {
            FeeCategory::Open => self.open,
            FeeCategory::Close => self.close,
            FeeCategory::Penalty => self.penalty,
            FeeCategory::Other => self.other,
            FeeCategory::Total => self.total,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FeeLedger {
    /// Sum of all non-failed payment amounts.
    pub paid: Sat,
    pub service_fees: Sat,
    pub service_fees_usd: String,
    pub forwarding_fees: Sat,
    pub delivered: Sat,
    /// HTLC value not yet delivered (unrouted or unfulfilled).
    pub in_flight: Sat,
    pub onchain: OnchainFees,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct AssertionResult {
    pub name: String,
    pub pass: bool,
    pub detail: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Report {
    pub scenario: String,
    pub description: String,
    pub seed: u64,
    pub btc_usd: u64,
    pub config: SimConfig,
    pub actions: Vec<ActionRecord>,
    pub flows: Vec<FlowReport>,
    pub trace: Vec<TraceEvent>,
    pub balances: Balances,
    pub channel: Option<ChannelSummary>,
    pub fee_ledger: FeeLedger,
    pub assertions: Vec<AssertionResult>,
    pub passed: bool,
}

impl Report {
    pub fn failures(&self) -> impl Iterator<Item = &AssertionResult> {
        self.assertions.iter().filter(|a| !a.pass)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
struct Snapshot {
    holdings: Holdings,
    wallet: Sat,
    state: Option<ChannelState>,
}

struct Runner {
    sim: Simulation,
    btc_usd: u64,
    records: Vec<ActionRecord>,
    checkpoint: Option<Snapshot>,
}

impl Runner {
    fn snapshot(&self) -> Snapshot {
        Snapshot {
            holdings: self.sim.holdings(),
            wallet: self.sim.iot().wallet_total(),
            state: self.sim.channel_state().cloned(),
        }
    }

    fn exec(&mut self, actions: &[Action]) {
        for a in actions {
            if let Action::Repeat { times, actions } = a {
                for _ in 0..*times {
                    self.exec(actions);
                }
                continue;
            }
            let error = self.exec_one(a).err();
            self.records.push(ActionRecord {
                index: self.records.len(),
                op: a.op(),
                error,
            });
        }
    }

    fn exec_one(&mut self, a: &Action) -> Result<(), String> {
        let sim = &mut self.sim;
        let r = match a {
            Action::Open { capacity } => sim.open_channel(*capacity),
            Action::Pay { sat, usd, to } => {
                let amount = match (sat, usd) {
                    (Some(s), _) => *s,
                    (None, Some(u)) => {
                        usd_to_sat(parse_micro_usd(u).map_err(|e| e.to_string())?, self.btc_usd)
                    }
                    (None, None) => return Err("pay without an amount".into()),
                };
                let dest = match to {
                    Target::Destination => sim.destination().id(),
                    Target::Unknown => sim.unknown_node(),
                };
                sim.pay(amount, dest).map(drop)
            }
            Action::Settle => sim.settle().map(drop),
            Action::Fail => sim.fail_expired().map(drop),
            Action::Mine { blocks } => {
                sim.mine(*blocks);
                Ok(())
            }
            Action::Close { by } => match by {
                Actor::Iot => sim.close_iot(),
                Actor::Gateway => sim.close_gateway(),
                Actor::Bridge => sim.close_bridge(),
                Actor::Destination => return Err("the destination has no channel".into()),
            },
            Action::Cheat { actor } => sim.adversary_act(*actor).map(drop),
            Action::Offline { actor, blocks } => {
                sim.set_offline(*actor, *blocks);
                Ok(())
            }
            Action::Disconnect => {
                sim.disconnect_iot_mid_sign();
                Ok(())
            }
            Action::Reconnect => {
                sim.reconnect_iot();
                Ok(())
            }
            Action::Checkpoint => {
                self.checkpoint = Some(self.snapshot());
                Ok(())
            }
            Action::Repeat { .. } => unreachable!("expanded by exec"),
        };
        r.map_err(|e| e.to_string())
    }
}

/// Runs a scenario to completion and evaluates its assertions.
pub fn run(scenario: &Scenario, opts: &RunOptions) -> Report {
    execute(scenario, opts).0
}

/// Like [`run`], also handing back the finished simulation.
pub fn execute(scenario: &Scenario, opts: &RunOptions) -> (Report, Simulation) {
    let p = &scenario.params;
    let seed = opts.seed.unwrap_or(scenario.seed);
    let defaults = SimConfig::default();
    let config = SimConfig {
        seed,
        paillier_bits: opts.paillier_bits.unwrap_or(defaults.paillier_bits),
        service_fee_ppm: opts
            .service_fee_ppm
            .or(p.service_fee_ppm)
            .unwrap_or(defaults.service_fee_ppm),
        base_fee: p.base_fee.unwrap_or(defaults.base_fee),
        to_self_delay: p.to_self_delay.unwrap_or(defaults.to_self_delay),
        htlc_timeout: p.htlc_timeout.unwrap_or(defaults.htlc_timeout),
        confirmation_depth: p.confirmation_depth.unwrap_or(defaults.confirmation_depth),
        iot_wallet: p.iot_wallet.unwrap_or(defaults.iot_wallet),
        gateway_behavior: p.gateway.unwrap_or_default(),
        bridge_behavior: p.bridge.unwrap_or_default(),
    };
    let btc_usd = opts.btc_usd.or(p.btc_usd).unwrap_or(DEFAULT_BTC_USD);
    let mut runner = Runner {
        sim: Simulation::new(config.clone()),
        btc_usd,
        records: vec![],
        checkpoint: None,
    };
    runner.exec(&scenario.actions);

    let sim = &runner.sim;
    let flows = flow_reports(sim);
    let fee_ledger = fee_ledger(sim, btc_usd);
    let mut assertions: Vec<AssertionResult> = scenario
        .expect
        .iter()
        .map(|e| evaluate(e, &runner, &flows, &fee_ledger))
        .collect();
    assertions.push(iot_safe(sim));
    assertions.push(ledger_conservation(sim, &fee_ledger));
    let passed = assertions.iter().all(|a| a.pass);
    let holdings = sim.holdings();
    let report = Report {
        scenario: scenario.name.clone(),
        description: scenario.description.clone(),
        seed,
        btc_usd,
        config,
        actions: runner.records.clone(),
        flows,
        trace: sim.trace().to_vec(),
        balances: Balances {
            iot_wallet: sim.iot().wallet_total(),
            iot_payout: holdings.iot,
            gateway: holdings.gateway,
            bridge: holdings.bridge,
            destination_received: sim.destination().received(),
        },
        channel: sim.gateway().channel().map(|c| {
            let s = c.current();
            ChannelSummary {
                status: c.status.clone(),
                state_num: s.state_num,
                capacity: s.capacity,
                iot: s.iot_balance,
                bridge: s.bridge_balance,
                htlc: s.htlc_total(),
                fees: s.gateway_fee_balance,
            }
        }),
        fee_ledger,
        assertions,
        passed,
    };
    (report, runner.sim)
}

fn flow_reports(sim: &Simulation) -> Vec<FlowReport> {
    sim.flows()
        .iter()
        .enumerate()
        .map(|(i, f): (usize, &FlowRecord)| FlowReport {
            name: f.name.clone(),
            error: f.error.clone(),
            iot_bytes_sent: f.iot_link.bytes_sent,
            iot_bytes_received: f.iot_link.bytes_received,
            iot_bytes_total: f.iot_link.total_bytes(),
            iot_frames: f.iot_link.frame_count,
            iot_leg_events: sim.flow_events(i).iter().filter(|e| e.is_iot_leg()).count() as u64,
        })
        .collect()
}

/// Fees of every confirmed non-coinbase transaction, by kind.
pub(crate) fn onchain_fees(chain: &SimChain) -> OnchainFees {
    let mut f = OnchainFees::default();
    for tx in chain.blocks().iter().flat_map(|b| &b.txs) {
        if tx.is_coinbase() {
            continue;
        }
        let funding = tx
            .outputs
            .iter()
            .any(|o| matches!(o.condition, SpendCondition::ThresholdFunding { .. }));
        let spends_funding = tx.inputs.iter().any(|i| {
            chain
                .tx(&i.prevout.txid)
                .and_then(|t| t.outputs.get(i.prevout.vout as usize))
                .is_some_and(|o| matches!(o.condition, SpendCondition::ThresholdFunding { .. }))
        });
        let penalty = tx
            .inputs
            .iter()
            .any(|i| matches!(i.witness, Some(Witness::RevocationSig { .. })));
        let slot = if funding {
            &mut f.open
        } else if spends_funding {
            &mut f.close
        } else if penalty {
            &mut f.penalty
        } else {
            &mut f.other
        };
        *slot += tx.fee;
        f.total += tx.fee;
    }
    f
}

fn fee_ledger(sim: &Simulation, btc_usd: u64) -> FeeLedger {
    let live = sim
        .payments()
        .iter()
        .filter(|p| p.status != PaymentStatus::Failed);
    let (mut paid, mut service, mut delivered, mut in_flight) = (0, 0, 0, 0);
    for p in live {
        paid += p.amount;
        service += p.service_fee;
        match p.delivered {
            Some(d) => delivered += d,
            None => in_flight += p.htlc_amount,
        }
    }
    FeeLedger {
        paid,
        service_fees: service,
        service_fees_usd: format_usd(sat_to_micro_usd(service, btc_usd)),
        forwarding_fees: sim.bridge().forwarding_fees(),
        delivered,
        in_flight,
        onchain: onchain_fees(sim.chain()),
    }
}

fn result(name: impl Into<String>, pass: bool, detail: impl Into<String>) -> AssertionResult {
    AssertionResult {
        name: name.into(),
        pass,
        detail: detail.into(),
    }
}

fn eq_check<T: PartialEq + std::fmt::Debug>(name: &str, got: T, want: T) -> AssertionResult {
    let pass = got == want;
    result(name, pass, format!("got {got:?}, want {want:?}"))
}

fn iot_safe(sim: &Simulation) -> AssertionResult {
    let (got, floor) = (sim.iot_recoverable(), sim.iot_entitlement_floor());
    result(
        "iot_safe",
        got >= floor,
        format!("recoverable {got} sat, floor {floor} sat"),
    )
}

/// Every satoshi a payment took from the device is a service fee, a
/// forwarding fee, delivered, or still in flight; the latest channel state
/// conserves its capacity.
fn ledger_conservation(sim: &Simulation, l: &FeeLedger) -> AssertionResult {
    let flows = l.paid == l.service_fees + l.forwarding_fees + l.delivered + l.in_flight;
    let state = sim.channel_state().is_none_or(ChannelState::is_conserved);
    result(
        "fee_ledger_conservation",
        flows && state,
        format!(
            "paid {} = service {} + forwarding {} + delivered {} + in flight {}; state conserved: {state}",
            l.paid, l.service_fees, l.forwarding_fees, l.delivered, l.in_flight
        ),
    )
}

fn actor_holdings(h: &Holdings, a: Actor) -> Sat {
    match a {
        Actor::Iot => h.iot,
        Actor::Gateway => h.gateway,
        Actor::Bridge => h.bridge,
        Actor::Destination => 0,
    }
}

fn evaluate(e: &Expect, r: &Runner, flows: &[FlowReport], ledger: &FeeLedger) -> AssertionResult {
    let sim = &r.sim;
    match e {
        Expect::NoErrors => {
            let failed: Vec<String> = r
                .records
                .iter()
                .filter_map(|a| {
                    a.error
                        .as_ref()
                        .map(|e| format!("#{} {}: {e}", a.index, a.op))
                })
                .collect();
            result("no_errors", failed.is_empty(), failed.join("; "))
        }
        Expect::Error { op, contains } => {
            let needle = contains.to_lowercase();
            let hit = r.records.iter().find(|a| {
                a.op == op
                    && a.error
                        .as_ref()
                        .is_some_and(|e| e.to_lowercase().contains(&needle))
            });
            result(
                format!("error:{op}"),
                hit.is_some(),
                match hit {
                    Some(a) => format!("#{}: {}", a.index, a.error.as_deref().unwrap_or("")),
                    None => format!("no {op} failed with {contains:?}"),
                },
            )
        }
        Expect::GoldenTrace { flow } => {
            let (name, gold) = match flow {
                GoldenFlow::Open => ("open", golden::OPEN),
                GoldenFlow::Pay => ("pay", golden::PAY),
            };
            let Some(idx) = sim.flows().iter().position(|f| f.name == name) else {
                return result(format!("golden_trace:{name}"), false, "flow never ran");
            };
            let events = sim.flow_events(idx);
            let got = golden::labelled(events).len();
            match golden::mismatch(events, gold) {
                None => result(
                    format!("golden_trace:{name}"),
                    true,
                    format!("{got} events match"),
                ),
                Some(at) => result(
                    format!("golden_trace:{name}"),
                    false,
                    format!("diverges at event {at} ({got} vs {} events)", gold.len()),
                ),
            }
        }
        Expect::CommitmentOutputs {
            iot,
            bridge,
            htlc,
            fees,
        } => {
            let got = sim.gateway_commitment().map(|c| {
                [
                    c.amount_of(OutputRole::Iot),
                    c.amount_of(OutputRole::Bridge),
                    c.amount_of(OutputRole::Htlc),
                    c.amount_of(OutputRole::GatewayFees),
                ]
            });
            eq_check(
                "commitment_outputs",
                got,
                Some([*iot, *bridge, *htlc, *fees]),
            )
        }
        Expect::ChannelState {
            iot,
            bridge,
            htlc,
            fees,
        } => {
            let got = sim.channel_state().map(|s| {
                [
                    s.iot_balance,
                    s.bridge_balance,
                    s.htlc_total(),
                    s.gateway_fee_balance,
                ]
            });
            eq_check("channel_state", got, Some([*iot, *bridge, *htlc, *fees]))
        }
        Expect::StateNum { n } => eq_check(
            "state_num",
            sim.channel_state().map(|s| s.state_num),
            Some(*n),
        ),
        Expect::Holdings { actor, sat } => eq_check(
            &format!("holdings:{}", actor_name(*actor)),
            actor_holdings(&sim.holdings(), *actor),
            *sat,
        ),
        Expect::OnchainFees { category, sat } => eq_check(
            &format!("onchain_fees:{category:?}").to_lowercase(),
            ledger.onchain.get(*category),
            *sat,
        ),
        Expect::ServiceFees { sat } => eq_check("service_fees", ledger.service_fees, *sat),
        Expect::ForwardingFees { sat } => eq_check("forwarding_fees", ledger.forwarding_fees, *sat),
        Expect::DestinationReceived { sat } => {
            eq_check("destination_received", sim.destination().received(), *sat)
        }
        Expect::Sweeps { actor, count } => {
            let got = match actor {
                Actor::Bridge => sim.bridge().sweeps().len(),
                Actor::Gateway => sim.gateway().sweeps().len(),
                _ => 0,
            };
            eq_check(&format!("sweeps:{}", actor_name(*actor)), got, *count)
        }
        Expect::Closed => {
            let status = sim.gateway().channel().map(|c| c.status.clone());
            let closed = matches!(status, Some(ChannelStatus::Closed { .. })) && sim.is_closed();
            result("closed", closed, format!("{status:?}"))
        }
        Expect::IotNotified => {
            let n = sim
                .iot()
                .inbox()
                .iter()
                .filter(|m| matches!(m, Message::ChannelClosed { .. }))
                .count();
            result(
                "iot_notified",
                n == 1,
                format!("{n} ChannelClosed notifications"),
            )
        }
        Expect::IotRecoverable { sat } => eq_check("iot_recoverable", sim.iot_recoverable(), *sat),
        Expect::IotSafe => iot_safe(sim),
        Expect::NoProfitableOldState => {
            let Some(c) = sim.gateway().channel() else {
                return result("no_profitable_old_state", false, "no channel");
            };
            let latest = c.current();
            let better: Vec<u64> = c
                .states
                .iter()
                .filter(|s| {
                    s.bridge_balance > latest.bridge_balance
                        || s.gateway_fee_balance > latest.gateway_fee_balance
                })
                .map(|s| s.state_num)
                .collect();
            result(
                "no_profitable_old_state",
                better.is_empty(),
                format!(
                    "{} states replayed; better for bridge or gateway: {better:?}",
                    c.states.len()
                ),
            )
        }
        Expect::LinkBytesBelow { max } => {
            let worst = flows.iter().map(|f| f.iot_bytes_total).max().unwrap_or(0);
            result(
                "link_bytes_below",
                worst < *max,
                format!("largest flow {worst} bytes"),
            )
        }
        Expect::FrameCountsMatch => {
            let bad: Vec<&str> = flows
                .iter()
                .filter(|f| f.iot_frames != f.iot_leg_events)
                .map(|f| f.name.as_str())
                .collect();
            result(
                "frame_counts_match",
                bad.is_empty(),
                format!("mismatched flows: {bad:?}"),
            )
        }
        Expect::PayloadsExcludeBridgeKey => {
            let key = sim.bridge().key().to_bytes();
            let leaks = sim
                .iot_link_payloads()
                .iter()
                .filter(|p| p.windows(key.len()).any(|w| w == key))
                .count();
            result(
                "payloads_exclude_bridge_key",
                leaks == 0,
                format!(
                    "{} payloads checked, {leaks} contain the bridge key",
                    sim.iot_link_payloads().len()
                ),
            )
        }
        Expect::Unchanged => {
            let Some(before) = &r.checkpoint else {
                return result("unchanged", false, "no checkpoint taken");
            };
            let now = r.snapshot();
            result(
                "unchanged",
                *before == now,
                format!("{before:?} -> {now:?}"),
            )
        }
    }
}

fn actor_name(a: Actor) -> &'static str {
    match a {
        Actor::Iot => "iot",
        Actor::Gateway => "gateway",
        Actor::Bridge => "bridge",
        Actor::Destination => "destination",
    }
}
