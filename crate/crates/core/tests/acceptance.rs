//! Acceptance checks, one line per criterion. Tolerances are pinned below;
//! every check is exact except the runtime budgets.

mod common;

use std::time::{Duration, Instant};

use k256::ecdsa::hazmat::SignPrimitive;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;

use lngate::chain_sim::{SimChain, SimTx, SpendCondition, Witness};
use lngate::channel::{build_penalty_tx, OutputRole};
use lngate::ecdsa::verify_standard;
use lngate::group::{random_nonzero_scalar, sha256, Scalar};
use lngate::nodes::{Actor, SimConfig, Simulation};
use lngate::scenario::{execute, load_builtin, RunOptions};
use lngate::threshold_ecdsa::{
    keygen_with_shares, sign, sign_with_ephemerals, EphemeralKey, KeygenParams, SignSeeds,
};

const COIN: u64 = 100_000_000;

const SIGN_RUNS: u64 = 200;
const SIGN_KEYS: u64 = 10;
const SIGN_BUDGET: Duration = Duration::from_secs(60);
const REPLAY_BUDGET: Duration = Duration::from_secs(10);
const PROPERTY_BUDGET: Duration = Duration::from_secs(120);
const LINK_BYTES_MAX: u64 = 8192;
const OPEN_FEE: u64 = 222;
const CLOSE_FEE: u64 = 183;
const SWEEP_FEE: u64 = 150;
const TOLL_MONTH_PAYMENTS: u64 = 60;
const BTC_USD: f64 = 54_500.0;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn fast_opts() -> RunOptions {
    RunOptions {
        paillier_bits: Some(1024),
        ..RunOptions::default()
    }
}

// 1

fn oracle(x: &Scalar, k: &Scalar, msg: &[u8]) -> [u8; 64] {
    let (sig, _) = x
        .try_sign_prehashed(*k, &sha256(msg).into())
        .expect("oracle signs");
    sig.normalize_s().unwrap_or(sig).to_bytes().into()
}

fn threshold_compat() -> Outcome {
    let started = Instant::now();
    let params = KeygenParams::testing();
    let mut matched = 0;
    for key in 0..SIGN_KEYS {
        let mut rng = ChaCha20Rng::seed_from_u64(key);
        let x1 = random_nonzero_scalar(&mut rng);
        let x2 = random_nonzero_scalar(&mut rng);
        let (server, client) =
            keygen_with_shares(x1, x2, &params, &mut rng).map_err(|e| e.to_string())?;
        for run in 0..SIGN_RUNS / SIGN_KEYS {
            let seed = key * 1000 + run;
            let mut r = ChaCha20Rng::seed_from_u64(seed);
            let (k1, k2) = (random_nonzero_scalar(&mut r), random_nonzero_scalar(&mut r));
            let msg = format!("acceptance message {seed}");
            let sig = sign_with_ephemerals(
                msg.as_bytes(),
                &server,
                &client,
                EphemeralKey::from_secret(k1).map_err(|e| e.to_string())?,
                EphemeralKey::from_secret(k2).map_err(|e| e.to_string())?,
                SignSeeds {
                    server: seed,
                    client: seed + 1,
                },
            )
            .map_err(|e| format!("run {seed}: {e}"))?;
            ensure(
                verify_standard(&server.public(), msg.as_bytes(), &sig),
                || format!("run {seed}: does not verify"),
            )?;
            ensure(
                sig.to_bytes() == oracle(&(x1 * x2), &(k1 * k2), msg.as_bytes()),
                || format!("run {seed}: differs from single-party signature"),
            )?;
            matched += 1;
        }
    }
    let took = started.elapsed();
    ensure(took < SIGN_BUDGET, || format!("took {took:?}"))?;
    Ok(format!(
        "{matched} runs verify and match the single-party signature bit for bit ({took:.1?})"
    ))
}

// 2

use Actor::{Bridge as B, Gateway as G, Iot as I};

const OPEN_STEPS: &[(u8, Actor, Actor, &str)] = &[
    (1, I, G, "OpenChannelRequest"),
    (2, G, I, "ThresholdKeygen"),
    (2, I, G, "ThresholdKeygen"),
    (2, G, I, "ThresholdKeygen"),
    (3, G, B, "open_channel"),
    (4, B, G, "accept_channel"),
    (5, G, G, "create_funding_tx"),
    (6, G, I, "ThresholdDerive"),
    (6, I, G, "ThresholdDerive"),
    (7, G, G, "create_commitments"),
    (8, G, I, "ThresholdSign"),
    (8, I, G, "ThresholdSign"),
    (8, G, I, "ThresholdSign"),
    (8, I, G, "ThresholdSign"),
    (9, G, B, "funding_created"),
    (10, B, G, "funding_signed"),
    (11, G, G, "broadcast_funding_tx"),
    (12, G, B, "funding_locked"),
    (13, B, G, "funding_locked"),
];

const PAY_STEPS: &[(u8, Actor, Actor, &str)] = &[
    (1, I, G, "SendPayment"),
    (2, G, G, "add_htlc"),
    (3, G, B, "update_add_htlc"),
    (4, G, I, "ThresholdSign"),
    (4, I, G, "ThresholdSign"),
    (4, G, I, "ThresholdSign"),
    (4, I, G, "ThresholdSign"),
    (4, G, I, "ThresholdSign"),
    (4, I, G, "ThresholdSign"),
    (4, G, I, "ThresholdSign"),
    (4, I, G, "ThresholdSign"),
    (5, G, B, "commitment_signed"),
    (6, B, G, "revoke_and_ack"),
    (7, G, I, "ThresholdDerive"),
    (7, I, G, "ThresholdDerive"),
    (8, B, G, "commitment_signed"),
    (8, G, B, "revoke_and_ack"),
    (9, G, I, "PaymentSuccess"),
];

fn steps(sim: &Simulation, flow: usize) -> Vec<(u8, Actor, Actor, String)> {
    sim.flow_events(flow)
        .iter()
        .filter_map(|e| Some((e.step?, e.from, e.to, e.name.clone())))
        .collect()
}

fn same(got: &[(u8, Actor, Actor, String)], want: &[(u8, Actor, Actor, &str)]) -> bool {
    got.len() == want.len()
        && got
            .iter()
            .zip(want)
            .all(|(g, w)| (g.0, g.1, g.2, g.3.as_str()) == *w)
}

fn golden_traces() -> Outcome {
    let mut sim = Simulation::new(SimConfig {
        seed: 11,
        ..SimConfig::default()
    });
    sim.open_channel(10 * COIN).map_err(|e| e.to_string())?;
    let dest = sim.destination().id();
    sim.pay(COIN, dest).map_err(|e| e.to_string())?;
    let (open, pay) = (steps(&sim, 0), steps(&sim, 1));
    ensure(same(&open, OPEN_STEPS), || format!("open trace {open:?}"))?;
    ensure(same(&pay, PAY_STEPS), || format!("pay trace {pay:?}"))?;
    Ok(format!(
        "open {} and pay {} labelled messages in order",
        open.len(),
        pay.len()
    ))
}

// 3

fn one_payment_commitment() -> Outcome {
    let mut sim = Simulation::new(SimConfig {
        service_fee_ppm: 100_000,
        ..SimConfig::testing(5)
    });
    sim.open_channel(10 * COIN).map_err(|e| e.to_string())?;
    let dest = sim.destination().id();
    sim.pay(COIN, dest).map_err(|e| e.to_string())?;
    let c = sim.gateway_commitment().ok_or("no commitment")?;
    // 10% of 1 BTC to the gateway, the rest locked in the HTLC
    let fee = COIN / 10;
    let want = [
        (OutputRole::Iot, 10 * COIN - COIN),
        (OutputRole::Htlc, COIN - fee),
        (OutputRole::GatewayFees, fee),
    ];
    let got: Vec<(OutputRole, u64)> = c
        .roles
        .iter()
        .copied()
        .zip(c.tx.outputs.iter().map(|o| o.amount))
        .collect();
    ensure(got == want, || format!("outputs {got:?}"))?;
    ensure(c.tx.output_total() + c.tx.fee == 10 * COIN, || {
        "not conserved".into()
    })?;
    Ok("outputs 9.0 / none / 0.9 / 0.1 BTC".into())
}

// 4

fn penalty_suite() -> Outcome {
    let opts = fast_opts();
    let (report, sim) = execute(
        &load_builtin("gateway_cheat").map_err(|e| e.to_string())?,
        &opts,
    );
    ensure(report.actions.iter().all(|a| a.error.is_none()), || {
        format!("{:?}", report.actions)
    })?;
    // state 1 after one 1 BTC payment at 10%: the bridge sweeps the fee
    // output with the revocation key and claims the HTLC with the preimage
    let fee = COIN / 10;
    let bridge_want = (fee - SWEEP_FEE) + (COIN - fee - SWEEP_FEE);
    let chain = sim.chain();
    let bridge_got = chain.balance_of(&sim.bridge().key());
    let gateway_got = chain.balance_of(&sim.gateway().key());
    let iot_got = chain.balance_of(&sim.iot().payout_key());
    ensure(bridge_got == bridge_want, || {
        format!("bridge {bridge_got} != {bridge_want}")
    })?;
    ensure(gateway_got == 0, || format!("gateway kept {gateway_got}"))?;
    ensure(iot_got == 9 * COIN, || format!("iot {iot_got}"))?;
    let revoked = sim
        .gateway()
        .closing_txid(chain)
        .and_then(|t| chain.tx(&t))
        .ok_or("no close")?;
    let iot_out = revoked
        .outputs
        .iter()
        .find(|o| o.amount == 9 * COIN)
        .ok_or("no IoT output")?;
    ensure(
        iot_out.condition
            == SpendCondition::KeySpend {
                owner: sim.iot().payout_key(),
            },
        || format!("IoT output {:?}", iot_out.condition),
    )?;

    let (report, sim) = execute(
        &load_builtin("bridge_cheat").map_err(|e| e.to_string())?,
        &opts,
    );
    ensure(report.actions.iter().all(|a| a.error.is_none()), || {
        format!("{:?}", report.actions)
    })?;
    // state 2: one settled payment. The gateway keeps its fee output and
    // sweeps the bridge's revocable output.
    let gw_want = fee + (COIN - fee - SWEEP_FEE);
    let chain = sim.chain();
    let gw_got = chain.balance_of(&sim.gateway().key());
    let bridge_got = chain.balance_of(&sim.bridge().key());
    let iot_got = chain.balance_of(&sim.iot().payout_key());
    ensure(gw_got == gw_want, || {
        format!("gateway {gw_got} != {gw_want}")
    })?;
    ensure(bridge_got == 0, || format!("bridge kept {bridge_got}"))?;
    ensure(iot_got == 9 * COIN, || format!("iot {iot_got}"))?;
    Ok(format!(
        "gateway cheat: bridge {bridge_want}, gateway 0; bridge cheat: gateway {gw_want}, bridge 0"
    ))
}

// 5

fn broadcast(chain: &SimChain, tx: SimTx) -> Result<SimChain, String> {
    let mut c = chain.clone();
    c.broadcast(tx).map_err(|e| e.to_string())?;
    c.mine_block();
    Ok(c)
}

fn collusion_replay() -> Outcome {
    let started = Instant::now();
    let scenario = load_builtin("collusion20").map_err(|e| e.to_string())?;
    let (report, sim) = execute(&scenario, &fast_opts());
    ensure(report.actions.iter().all(|a| a.error.is_none()), || {
        format!("{:?}", report.actions)
    })?;
    let gw = sim.gateway().channel().ok_or("no channel")?;
    let br = sim.bridge().channel().ok_or("no bridge channel")?;
    let (server, client) = (
        sim.gateway().server_key().ok_or("no key")?,
        sim.iot().key().ok_or("no key")?,
    );
    let latest = gw.current().state_num;
    ensure(latest == 40, || format!("latest state {latest}"))?;

    // expected balances from the payment schedule alone
    let (amount, fee) = (COIN / 10, COIN / 10 / 20);
    let expect = |n: u64| {
        let offered = n.div_ceil(2);
        let settled = n / 2;
        (settled * (amount - fee), offered * fee)
    };
    let (bridge_last, gw_last) = expect(latest);
    let mut checked = 0;
    for n in 0..latest {
        let (bridge_n, gw_n) = expect(n);
        let s = &gw.states[n as usize];
        ensure(
            (s.bridge_balance, s.gateway_fee_balance) == (bridge_n, gw_n),
            || format!("state {n}: recorded {:?}", s),
        )?;
        ensure(bridge_n <= bridge_last && gw_n <= gw_last, || {
            format!("state {n} pays more")
        })?;

        // the bridge's old commitment: its output is swept by the gateway
        let tx = sim
            .bridge()
            .signed_commitment(n)
            .ok_or("missing bridge commitment")?;
        let bc = &br.own_commitments[n as usize].0;
        ensure(bc.amount_of(OutputRole::Bridge) <= bridge_last, || {
            format!("bridge commitment {n}")
        })?;
        let chain = broadcast(sim.chain(), tx.clone())?;
        if bc.amount_of(OutputRole::Bridge) > 0 {
            let secret = gw
                .bridge_points
                .secret(n)
                .map_err(|e| format!("state {n}: {e}"))?;
            let penalty =
                build_penalty_tx(&tx, &secret, &sim.gateway().key()).map_err(|e| e.to_string())?;
            chain
                .validate(&penalty)
                .map_err(|e| format!("state {n} penalty: {e}"))?;
        }

        // the gateway's old commitment, signed jointly: its fee output is
        // swept by the bridge
        let (gc, _) = &gw.own_commitments[n as usize];
        ensure(gc.amount_of(OutputRole::GatewayFees) <= gw_last, || {
            format!("gateway commitment {n}")
        })?;
        let sig = sign(
            &gc.tx.digest(),
            server,
            client,
            SignSeeds {
                server: n,
                client: n + 1,
            },
        )
        .map_err(|e| e.to_string())?;
        let mut tx = gc.tx.clone();
        tx.inputs[0].witness = Some(Witness::Sig {
            pubkey: server.public(),
            sig,
        });
        let chain = broadcast(sim.chain(), tx.clone())?;
        if gc.amount_of(OutputRole::GatewayFees) > 0 {
            let secret = br
                .gateway_points
                .secret(n)
                .map_err(|e| format!("state {n}: {e}"))?;
            let penalty =
                build_penalty_tx(&tx, &secret, &sim.bridge().key()).map_err(|e| e.to_string())?;
            chain
                .validate(&penalty)
                .map_err(|e| format!("state {n} penalty: {e}"))?;
        }
        checked += 1;
    }
    let took = started.elapsed();
    ensure(took < REPLAY_BUDGET, || format!("took {took:?}"))?;
    Ok(format!("{checked} prior states replayed, none better for bridge or gateway, all penalizable ({took:.1?})"))
}

// 6

fn cost_arithmetic() -> Outcome {
    let (report, sim) = execute(
        &load_builtin("open_close_costs").map_err(|e| e.to_string())?,
        &fast_opts(),
    );
    ensure(report.actions.iter().all(|a| a.error.is_none()), || {
        format!("{:?}", report.actions)
    })?;
    let chain = sim.chain();
    let funding = sim.gateway().channel().ok_or("no channel")?.ctx.funding;
    let open = chain.tx(&funding.txid).ok_or("no funding tx")?.fee;
    let close = chain.spender_of(&funding).ok_or("no close")?.fee;
    ensure((open, close) == (OPEN_FEE, CLOSE_FEE), || {
        format!("open {open}, close {close}")
    })?;

    let (report, _) = execute(
        &load_builtin("toll_month").map_err(|e| e.to_string())?,
        &fast_opts(),
    );
    ensure(report.passed, || "toll_month assertions failed".into())?;
    let toll_sat = (0.75 / BTC_USD * 1e8).round() as u64;
    let per_toll = (0.05 * toll_sat as f64).round() as u64;
    let want = TOLL_MONTH_PAYMENTS * per_toll;
    let got = report.fee_ledger.service_fees;
    ensure(got == want, || format!("service fees {got} != {want}"))?;
    let usd = want as f64 * BTC_USD / 1e8;
    Ok(format!("open {open} + close {close} sat; toll month {got} sat = {TOLL_MONTH_PAYMENTS} x {per_toll} (${usd:.4})"))
}

// 7

fn link_usage() -> Outcome {
    let mut sim = Simulation::new(SimConfig {
        seed: 12,
        ..SimConfig::default()
    });
    sim.open_channel(10 * COIN).map_err(|e| e.to_string())?;
    let dest = sim.destination().id();
    sim.pay(COIN, dest).map_err(|e| e.to_string())?;
    sim.settle().map_err(|e| e.to_string())?;
    sim.pay(COIN / 2, dest).map_err(|e| e.to_string())?;
    let mut parts = vec![];
    for (i, flow) in sim.flows().iter().enumerate() {
        let leg: Vec<_> = sim
            .flow_events(i)
            .iter()
            .filter(|e| e.is_iot_leg())
            .collect();
        let summed: u64 = leg.iter().map(|e| e.bytes as u64).sum();
        let total = flow.iot_link.total_bytes();
        ensure(total == summed, || {
            format!(
                "{}: {total} bytes counted, frames sum to {summed}",
                flow.name
            )
        })?;
        ensure(total < LINK_BYTES_MAX, || {
            format!("{}: {total} bytes", flow.name)
        })?;
        ensure(flow.iot_link.frame_count == leg.len() as u64, || {
            format!(
                "{}: {} frames, {} IoT-leg messages",
                flow.name,
                flow.iot_link.frame_count,
                leg.len()
            )
        })?;
        parts.push(format!("{} {}B/{}f", flow.name, total, leg.len()));
    }
    Ok(parts.join(", "))
}

// 8

fn property_suites() -> Outcome {
    let started = Instant::now();
    common::channel_property(common::CASES).map_err(|e| format!("channel: {e}"))?;
    common::wire_property(common::CASES).map_err(|e| format!("wire: {e}"))?;
    common::timelock_property(common::CASES).map_err(|e| format!("timelock: {e}"))?;
    let took = started.elapsed();
    ensure(took < PROPERTY_BUDGET, || format!("took {took:?}"))?;
    Ok(format!(
        "channel, wire and timelock properties over {} cases each ({took:.1?})",
        common::CASES
    ))
}

fn main() {
    let criteria: [Criterion; 8] = [
        ("threshold signatures", threshold_compat),
        ("golden traces", golden_traces),
        ("one-payment commitment", one_payment_commitment),
        ("penalties", penalty_suite),
        ("old-state replay", collusion_replay),
        ("cost arithmetic", cost_arithmetic),
        ("link usage", link_usage),
        ("property suites", property_suites),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {} {name}: {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("FAIL {} {name}: {detail}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}
