use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::Serialize;

use super::{
    Actor, BridgeBehavior, BridgeNode, ChannelStatus, DestinationNode, Gateway, GatewayBehavior,
    GatewayChannel, Holdings, IotDevice, NodeError, TraceEvent,
};
use crate::chain_sim::{
    Sat, SimChain, Witness, COIN, DEFAULT_CONFIRMATION_DEPTH, DEFAULT_HTLC_TIMEOUT,
    DEFAULT_TO_SELF_DELAY,
};
use crate::channel::{
    build_bridge_commitment, build_closing_tx, build_funding_tx, build_gateway_commitment,
    service_fee, ChannelError, ChannelParams, ChannelState, CommitmentContext, CommitmentTx,
    FeePayer, NodeId, RevocationStore,
};
use crate::codec::{Reader, Writer};
use crate::ecdsa::{verify_standard, EcdsaSignature, SigningKey};
use crate::group::{sha256, Point, Scalar};
use crate::threshold_ecdsa::{
    EphemeralKey, KeyPurpose, KeygenParams, KeygenSecondMsg, KeygenServer, ServerSignSession,
    SignFourthMsg, SignSecondMsg,
};
use crate::wire::{LinkKeys, Message, SessionMetrics, WireSession};

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct SimConfig {
    pub seed: u64,
    pub paillier_bits: usize,
    pub service_fee_ppm: u32,
    pub base_fee: Sat,
    pub to_self_delay: u32,
    pub htlc_timeout: u64,
    pub confirmation_depth: u64,
    /// Single UTXO the IoT wallet starts with.
    pub iot_wallet: Sat,
    pub gateway_behavior: GatewayBehavior,
    pub bridge_behavior: BridgeBehavior,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            seed: 0,
            paillier_bits: crate::threshold_ecdsa::paillier::DEFAULT_MODULUS_BITS,
            service_fee_ppm: 50_000,
            base_fee: 2,
            to_self_delay: DEFAULT_TO_SELF_DELAY,
            htlc_timeout: DEFAULT_HTLC_TIMEOUT,
            confirmation_depth: DEFAULT_CONFIRMATION_DEPTH,
            iot_wallet: 20 * COIN,
            gateway_behavior: GatewayBehavior::Honest,
            bridge_behavior: BridgeBehavior::Honest,
        }
    }
}

impl SimConfig {
    /// Defaults with a 1024-bit Paillier modulus for fast tests.
    pub fn testing(seed: u64) -> Self {
        SimConfig {
            seed,
            paillier_bits: 1024,
            ..Self::default()
        }
    }
}

/// One top-level operation and the slice of the trace it produced.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct FlowRecord {
    pub name: String,
    pub start: usize,
    pub end: usize,
    /// IoT link traffic during the flow, as counted by the device.
    pub iot_link: SessionMetrics,
    pub error: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum PaymentStatus {
    Pending,
    Fulfilled,
    Settled,
    Failed,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct PaymentOutcome {
    #[serde(with = "crate::chain_sim::hex_32")]
    pub payment_hash: [u8; 32],
    pub amount: Sat,
    pub service_fee: Sat,
    pub htlc_amount: Sat,
    /// Amount the destination received, once it released the preimage.
    pub delivered: Option<Sat>,
    pub status: PaymentStatus,
}

fn rng_for(seed: u64, label: &str) -> ChaCha20Rng {
    let mut buf = label.as_bytes().to_vec();
    buf.extend_from_slice(&seed.to_be_bytes());
    ChaCha20Rng::from_seed(sha256(&buf))
}

fn seed_bytes(seed: u64, label: &str) -> [u8; 32] {
    let mut buf = b"lngate/sim/".to_vec();
    buf.extend_from_slice(label.as_bytes());
    buf.extend_from_slice(&seed.to_be_bytes());
    sha256(&buf)
}

fn unexpected(got: &Message, wanted: &'static str) -> NodeError {
    NodeError::Unexpected {
        got: got.name().into(),
        wanted,
    }
}

/// Deterministic driver for all four actors and the chain.
pub struct Simulation {
    config: SimConfig,
    chain: SimChain,
    iot: IotDevice,
    gateway: Gateway,
    bridge: BridgeNode,
    destination: DestinationNode,
    trace: Vec<TraceEvent>,
    flows: Vec<FlowRecord>,
    current_flow: usize,
    iot_payloads: Vec<Vec<u8>>,
    payments: Vec<PaymentOutcome>,
    iot_close_fees: Sat,
    unknown_invoices: u64,
}

impl Simulation {
    /// Sets up the actors and funds the IoT wallet with one confirmed UTXO.
    pub fn new(config: SimConfig) -> Self {
        let seed = config.seed;
        let mut secret = [0u8; 64];
        secret[..32].copy_from_slice(&seed_bytes(seed, "link-enc"));
        secret[32..].copy_from_slice(&seed_bytes(seed, "link-mac"));
        let keys = LinkKeys::from_secret(&secret);
        let iot = IotDevice::new(
            WireSession::initiator(keys.clone(), seed),
            SigningKey::derive("iot-wallet", seed),
            SigningKey::derive("iot-payout", seed),
            KeygenParams::with_paillier_bits(config.paillier_bits),
            rng_for(seed, "iot"),
        );
        let mut params = ChannelParams::new(0, config.service_fee_ppm);
        params.base_fee = config.base_fee;
        params.to_self_delay = config.to_self_delay;
        params.htlc_timeout = config.htlc_timeout;
        params.confirmation_depth = config.confirmation_depth;
        let gateway = Gateway::new(
            SigningKey::derive("gateway", seed),
            WireSession::responder(keys, seed),
            params,
            config.gateway_behavior,
            rng_for(seed, "gateway"),
        );
        let mut bridge = BridgeNode::new(
            SigningKey::derive("bridge", seed),
            seed_bytes(seed, "bridge-secrets"),
            config.bridge_behavior,
        );
        let destination = DestinationNode::new(
            SigningKey::derive("destination", seed),
            seed_bytes(seed, "destination"),
        );
        bridge.add_peer(destination.id());
        let mut chain = SimChain::new();
        let mut sim = Simulation {
            config,
            chain: SimChain::new(),
            iot,
            gateway,
            bridge,
            destination,
            trace: vec![],
            flows: vec![],
            current_flow: 0,
            iot_payloads: vec![],
            payments: vec![],
            iot_close_fees: 0,
            unknown_invoices: 0,
        };
        let op = chain.faucet(sim.iot.wallet_key(), sim.config.iot_wallet);
        chain.mine_block();
        sim.iot.add_utxo(op, sim.config.iot_wallet);
        sim.chain = chain;
        sim
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn chain(&self) -> &SimChain {
        &self.chain
    }

    pub fn iot(&self) -> &IotDevice {
        &self.iot
    }

    pub fn gateway(&self) -> &Gateway {
        &self.gateway
    }

    pub fn bridge(&self) -> &BridgeNode {
        &self.bridge
    }

    pub fn destination(&self) -> &DestinationNode {
        &self.destination
    }

    pub fn trace(&self) -> &[TraceEvent] {
        &self.trace
    }

    pub fn flows(&self) -> &[FlowRecord] {
        &self.flows
    }

    pub fn flow_events(&self, flow: usize) -> &[TraceEvent] {
        let f = &self.flows[flow];
        &self.trace[f.start..f.end]
    }

    /// Plaintext payloads of every message that crossed the IoT link.
    pub fn iot_link_payloads(&self) -> &[Vec<u8>] {
        &self.iot_payloads
    }

    pub fn payments(&self) -> &[PaymentOutcome] {
        &self.payments
    }

    /// A node the bridge has no route to.
    pub fn unknown_node(&self) -> NodeId {
        NodeId(SigningKey::derive("unknown", self.config.seed).public())
    }

    /// Latest agreed channel state, from the gateway's side.
    pub fn channel_state(&self) -> Option<&ChannelState> {
        self.gateway.channel.as_ref().map(GatewayChannel::current)
    }

    /// Latest gateway commitment (zero fee, as co-signed by the bridge).
    pub fn gateway_commitment(&self) -> Option<&CommitmentTx> {
        self.gateway
            .channel
            .as_ref()
            .and_then(|c| c.own_commitments.last())
            .map(|(c, _)| c)
    }

    pub fn holdings(&self) -> Holdings {
        Holdings {
            iot: self.chain.balance_of(&self.iot.payout_key()),
            gateway: self.chain.balance_of(&self.gateway.key()),
            bridge: self.chain.balance_of(&self.bridge.key()),
        }
    }

    pub fn is_closed(&self) -> bool {
        self.gateway.closing_txid(&self.chain).is_some()
    }

    /// Satoshi the IoT device can still claim: its on-chain payout after a
    /// close, otherwise its balance in the latest state.
    pub fn iot_recoverable(&self) -> Sat {
        if self.is_closed() {
            self.chain.balance_of(&self.iot.payout_key())
        } else {
            self.channel_state().map_or(0, |s| s.iot_balance)
        }
    }

    /// Lower bound the IoT device must always be able to recover.
    pub fn iot_entitlement_floor(&self) -> Sat {
        let Some(s) = self.channel_state() else {
            return 0;
        };
        let paid: Sat = self
            .payments
            .iter()
            .filter(|p| p.status != PaymentStatus::Failed)
            .map(|p| p.amount)
            .sum();
        s.capacity.saturating_sub(paid + self.iot_close_fees)
    }

    pub fn iot_close_fees(&self) -> Sat {
        self.iot_close_fees
    }

    // ---- plumbing ----

    fn run_flow<T>(
        &mut self,
        name: &str,
        f: impl FnOnce(&mut Self) -> Result<T, NodeError>,
    ) -> Result<T, NodeError> {
        let idx = self.flows.len();
        let before = self.iot.metrics();
        self.flows.push(FlowRecord {
            name: name.into(),
            start: self.trace.len(),
            end: self.trace.len(),
            iot_link: SessionMetrics::default(),
            error: None,
        });
        let prev = self.current_flow;
        self.current_flow = idx;
        let r = f(self);
        self.current_flow = prev.max(idx);
        let rec = &mut self.flows[idx];
        rec.end = self.trace.len();
        rec.iot_link = self.iot.metrics().since(&before);
        rec.error = r.as_ref().err().map(|e| e.to_string());
        r
    }

    fn log(&mut self, step: Option<u8>, from: Actor, to: Actor, name: &str, bytes: usize) {
        self.trace.push(TraceEvent {
            flow: self.current_flow,
            step,
            from,
            to,
            name: name.into(),
            bytes,
        });
    }

    fn local(&mut self, step: Option<u8>, actor: Actor, name: &str) {
        self.log(step, actor, actor, name, 0);
    }

    fn check_gateway_online(&self) -> Result<(), NodeError> {
        if self.gateway.is_online(self.chain.height()) {
            Ok(())
        } else {
            Err(NodeError::Offline(Actor::Gateway))
        }
    }

    /// IoT → gateway frame; returns what the gateway decoded.
    fn iot_send(&mut self, step: Option<u8>, msg: Message) -> Result<Message, NodeError> {
        if !self.iot.is_online() {
            return Err(NodeError::Disconnected);
        }
        let frame = self.iot.link.seal(&msg);
        self.iot_payloads.push(msg.encode_payload());
        self.log(step, Actor::Iot, Actor::Gateway, msg.name(), frame.len());
        self.check_gateway_online()?;
        Ok(self.gateway.link.open(&frame)?)
    }

    /// Gateway → IoT frame; relays the device's reply back, if it sends one.
    fn gw_send(&mut self, step: Option<u8>, msg: Message) -> Result<Option<Message>, NodeError> {
        let frame = self.gateway.link.seal(&msg);
        self.iot_payloads.push(msg.encode_payload());
        self.log(step, Actor::Gateway, Actor::Iot, msg.name(), frame.len());
        if !self.iot.is_online() {
            return Err(NodeError::Disconnected);
        }
        let got = self.iot.link.open(&frame)?;
        let reply = self.iot.handle(got)?;
        if !self.iot.is_online() {
            return Err(NodeError::Disconnected);
        }
        match reply {
            Some(r) => Ok(Some(self.iot_send(step, r)?)),
            None => Ok(None),
        }
    }

    fn gw_request(&mut self, step: Option<u8>, msg: Message) -> Result<Message, NodeError> {
        self.gw_send(step, msg)?.ok_or(NodeError::Disconnected)
    }

    fn roundtrip(msg: &Message) -> Result<(Message, usize), NodeError> {
        let payload = msg.encode_payload();
        let back = Message::decode_payload(msg.msg_type(), &payload)?;
        Ok((back, payload.len()))
    }

    /// Gateway → bridge; returns the bridge's reply, logged as `reply_step`.
    fn send_bridge(
        &mut self,
        step: Option<u8>,
        reply_step: Option<u8>,
        msg: Message,
    ) -> Result<Option<Message>, NodeError> {
        if !self.bridge.is_online(self.chain.height()) {
            return Err(NodeError::Offline(Actor::Bridge));
        }
        let (decoded, len) = Self::roundtrip(&msg)?;
        self.log(step, Actor::Gateway, Actor::Bridge, msg.name(), len);
        let reply = self.bridge.handle(decoded, &self.chain)?;
        match reply {
            Some(r) => Ok(Some(self.bridge_reply(reply_step, r)?)),
            None => Ok(None),
        }
    }

    fn bridge_reply(&mut self, step: Option<u8>, msg: Message) -> Result<Message, NodeError> {
        let (decoded, len) = Self::roundtrip(&msg)?;
        self.log(step, Actor::Bridge, Actor::Gateway, msg.name(), len);
        Ok(decoded)
    }

    // ---- threshold exchanges over the IoT link ----

    fn threshold_keygen(&mut self, step: Option<u8>) -> Result<(), NodeError> {
        let params = KeygenParams::with_paillier_bits(self.config.paillier_bits);
        let (server, first) =
            KeygenServer::start(&params, &mut self.gateway.rng).map_err(NodeError::KeygenFailed)?;
        let reply = self.gw_request(
            step,
            Message::ThresholdKeygen {
                round: 1,
                payload: first.to_bytes(),
            },
        )?;
        let Message::ThresholdKeygen { round: 2, payload } = reply else {
            return Err(unexpected(&reply, "keygen round 2"));
        };
        let second = KeygenSecondMsg::from_bytes(&payload).map_err(NodeError::KeygenFailed)?;
        let (key, third) = server
            .finish(&second, &mut self.gateway.rng)
            .map_err(NodeError::KeygenFailed)?;
        self.gw_send(
            step,
            Message::ThresholdKeygen {
                round: 3,
                payload: third.to_bytes(),
            },
        )?;
        match self.iot.key() {
            Some(k) if k.public() == key.public() => {}
            _ => {
                return Err(NodeError::KeygenFailed(
                    crate::threshold_ecdsa::ThresholdError::CommitmentMismatch,
                ))
            }
        }
        self.gateway.server = Some(key);
        Ok(())
    }

    fn threshold_sign(
        &mut self,
        step: Option<u8>,
        message: &[u8],
    ) -> Result<EcdsaSignature, NodeError> {
        if self.gateway.server.is_none() {
            return Err(NodeError::NoChannel);
        }
        let eph = EphemeralKey::random(&mut self.gateway.rng);
        let (mut session, first) = ServerSignSession::start(eph, &mut self.gateway.rng);
        let mut w = Writer::new();
        w.var(message).bytes(&first.to_bytes());
        let reply = self.gw_request(
            step,
            Message::ThresholdSign {
                round: 1,
                payload: w.finish(),
            },
        )?;
        let Message::ThresholdSign { round: 2, payload } = reply else {
            return Err(unexpected(&reply, "sign round 2"));
        };
        let third = session.reveal(&SignSecondMsg::from_bytes(&payload)?)?;
        let reply = self.gw_request(
            step,
            Message::ThresholdSign {
                round: 3,
                payload: third.to_bytes(),
            },
        )?;
        let Message::ThresholdSign { round: 4, payload } = reply else {
            return Err(unexpected(&reply, "sign round 4"));
        };
        let fourth = SignFourthMsg::from_bytes(&payload)?;
        let key = self.gateway.server.as_ref().ok_or(NodeError::NoChannel)?;
        Ok(session.finish(key, message, &fourth)?)
    }

    /// Jointly derives commitment points `index..index + count`. Returns
    /// them with the device's released share for state `index - 2`.
    fn derive_points(
        &mut self,
        step: Option<u8>,
        index: u32,
        count: u32,
    ) -> Result<(Vec<Point>, Option<Scalar>), NodeError> {
        let server = self.gateway.server.as_ref().ok_or(NodeError::NoChannel)?;
        let mut w = Writer::new();
        w.u32(count);
        for i in 0..count {
            w.point(&server.commitment_basepoint(index + i)?);
        }
        let tag = KeyPurpose::CommitmentPoint.tag();
        let reply = self.gw_request(
            step,
            Message::ThresholdDerive {
                round: 1,
                index,
                tag,
                payload: w.finish(),
            },
        )?;
        let Message::ThresholdDerive {
            round: 2,
            index: got,
            payload,
            ..
        } = reply
        else {
            return Err(unexpected(&reply, "derive round 2"));
        };
        if got != index {
            return Err(NodeError::DeriveOutOfOrder {
                got,
                expected: index,
            });
        }
        let mut r = Reader::new(&payload);
        let n = r.u32()?;
        let points = (0..n).map(|_| r.point()).collect::<Result<Vec<_>, _>>()?;
        let released = match r.u8()? {
            0 => None,
            _ => Some(r.scalar()?),
        };
        r.finish()?;
        if points.len() != count as usize {
            return Err(NodeError::Unexpected {
                got: format!("{} points", points.len()),
                wanted: "one point per index",
            });
        }
        Ok((points, released))
    }

    // ---- flows ----

    /// Channel opening: OpenChannelRequest through funding_locked.
    pub fn open_channel(&mut self, capacity: Sat) -> Result<(), NodeError> {
        self.run_flow("open", |s| s.open_inner(capacity))
    }

    fn open_inner(&mut self, capacity: Sat) -> Result<(), NodeError> {
        if self.gateway.channel.is_some() {
            return Err(NodeError::BridgeRejected("channel already exists".into()));
        }
        let request = self.iot.request_open(capacity)?;
        let got = self.iot_send(Some(1), request)?;
        let Message::OpenChannelRequest { capacity } = got else {
            return Err(unexpected(&got, "OpenChannelRequest"));
        };
        self.threshold_keygen(Some(2))?;
        let joint = self
            .gateway
            .server
            .as_ref()
            .ok_or(NodeError::NoChannel)?
            .public();
        let params = self.gateway.params;
        let accept = self.send_bridge(
            Some(3),
            Some(4),
            Message::OpenChannel {
                funding_pubkey: joint,
                capacity,
                iot_payout_key: self.iot.payout_key(),
                gateway_payout_key: self.gateway.key(),
                to_self_delay: params.to_self_delay,
            },
        )?;
        let Some(Message::AcceptChannel {
            payout_key: bridge_key,
            first_commitment_point: b0,
        }) = accept
        else {
            return Err(NodeError::BridgeRejected("no accept_channel".into()));
        };

        self.local(Some(5), Actor::Gateway, "create_funding_tx");
        let (utxo, amount) = self
            .iot
            .funding_input()
            .ok_or(ChannelError::InsufficientFunds {
                needed: capacity,
                available: 0,
            })?;
        let mut funding = build_funding_tx(utxo, amount, capacity, &joint, &self.iot.wallet_key())?;
        self.iot.sign_funding(&mut funding);

        let (points, _) = self.derive_points(Some(6), 0, 2)?;

        self.local(Some(7), Actor::Gateway, "create_commitments");
        let ctx = CommitmentContext {
            funding: funding.outpoint(0),
            iot_key: self.iot.payout_key(),
            gateway_key: self.gateway.key(),
            bridge_key,
            to_self_delay: params.to_self_delay,
        };
        let state0 = ChannelState::open(capacity);
        let own0 = build_gateway_commitment(&ctx, &state0, &points[0], None)?;
        let bridge0 = build_bridge_commitment(&ctx, &state0, &b0);
        self.gateway.note_signing(0, bridge0.tx.digest())?;
        let sig = self.threshold_sign(Some(8), &bridge0.tx.digest())?;

        let signed = self.send_bridge(
            Some(9),
            Some(10),
            Message::FundingCreated {
                funding_outpoint: ctx.funding,
                signature: sig,
                commitment_point: points[0],
            },
        )?;
        let Some(Message::FundingSigned { signature: bsig }) = signed else {
            return Err(NodeError::BridgeRejected("no funding_signed".into()));
        };
        if !verify_standard(&bridge_key, &own0.tx.digest(), &bsig) {
            return Err(NodeError::BadPeerSignature);
        }
        let mut bridge_points = RevocationStore::new();
        bridge_points.record_point(0, b0);
        let mut chan_params = params;
        chan_params.capacity = capacity;
        let funding_txid = funding.txid();
        self.gateway.channel = Some(GatewayChannel {
            ctx,
            params: chan_params,
            funding_tx: funding.clone(),
            status: ChannelStatus::Opening,
            states: vec![state0],
            points,
            own_commitments: vec![(own0, bsig)],
            bridge_commitments: vec![bridge0],
            bridge_points,
            payments: Default::default(),
            preimages: Default::default(),
        });

        self.local(Some(11), Actor::Gateway, "broadcast_funding_tx");
        self.chain.broadcast(funding)?;
        let depth = params.confirmation_depth;
        for _ in 0..depth {
            self.mine_one();
        }
        if self.chain.confirmations(&funding_txid) < depth {
            return Err(NodeError::FundingTimeout(depth));
        }
        let p1 = self.gateway.chan()?.points[1];
        let locked = self.send_bridge(
            Some(12),
            Some(13),
            Message::FundingLocked {
                next_commitment_point: p1,
            },
        )?;
        let Some(Message::FundingLocked {
            next_commitment_point: b1,
        }) = locked
        else {
            return Err(NodeError::BridgeRejected("no funding_locked".into()));
        };
        let c = self.gateway.chan_mut()?;
        c.bridge_points.record_point(1, b1);
        c.status = ChannelStatus::Active;
        Ok(())
    }

    fn active_channel(&self) -> Result<(), NodeError> {
        match self.gateway.channel.as_ref() {
            Some(c) if c.is_active() => Ok(()),
            _ => Err(NodeError::NoChannel),
        }
    }

    fn ransom_check(&self) -> Result<(), NodeError> {
        if self.gateway.behavior == GatewayBehavior::Ransom && self.gateway.channel.is_some() {
            return Err(NodeError::UncooperativeGateway);
        }
        Ok(())
    }

    /// Payment: SendPayment through PaymentSuccess. The HTLC stays in the
    /// channel until [`Simulation::settle`].
    pub fn pay(&mut self, amount: Sat, destination: NodeId) -> Result<PaymentOutcome, NodeError> {
        self.run_flow("pay", |s| s.pay_inner(amount, destination))
    }

    fn pay_inner(&mut self, amount: Sat, destination: NodeId) -> Result<PaymentOutcome, NodeError> {
        let request = self.iot.request_payment(amount, destination);
        let got = self.iot_send(Some(1), request)?;
        let Message::SendPayment {
            amount,
            destination,
        } = got
        else {
            return Err(unexpected(&got, "SendPayment"));
        };
        self.ransom_check()?;
        self.active_channel()?;

        self.local(Some(2), Actor::Gateway, "add_htlc");
        let params = self.gateway.chan()?.params;
        let fee = service_fee(amount, params.service_fee_ppm);
        let deliver = amount
            .checked_sub(fee + params.base_fee)
            .filter(|d| *d > 0)
            .ok_or(ChannelError::AmountTooSmall)?;
        let payment_hash = if destination == self.destination.id() {
            self.log(
                None,
                Actor::Gateway,
                Actor::Destination,
                "invoice_request",
                0,
            );
            self.destination.issue_invoice(deliver)
        } else {
            // no invoice reachable; the hash can never be redeemed
            self.unknown_invoices += 1;
            let mut buf = b"lngate/unroutable".to_vec();
            buf.extend_from_slice(&self.unknown_invoices.to_be_bytes());
            sha256(&sha256(&buf))
        };
        let height = self.chain.height();
        let current = self.gateway.chan()?.current().clone();
        let (next, htlc) =
            current.apply_payment(&params, amount, payment_hash, destination, height)?;

        self.send_bridge(
            Some(3),
            None,
            Message::UpdateAddHtlc {
                amount: htlc.amount,
                payment_hash,
                timeout: htlc.timeout,
                route: vec![destination],
                service_fee: fee,
            },
        )?;
        self.commit_update(next, true)?;

        let mut outcome = PaymentOutcome {
            payment_hash,
            amount,
            service_fee: fee,
            htlc_amount: htlc.amount,
            delivered: None,
            status: PaymentStatus::Pending,
        };
        self.gateway.chan_mut()?.payments.insert(
            payment_hash,
            super::gateway::PendingPayment {
                amount,
                destination,
            },
        );
        self.payments.push(outcome.clone());

        let Some((dest, forward_amount)) = self.bridge.forward(&payment_hash) else {
            return Err(NodeError::RouteFailure);
        };
        self.log(None, Actor::Bridge, Actor::Destination, "forward_htlc", 0);
        if dest != self.destination.id() {
            return Err(NodeError::RouteFailure);
        }
        let Some(preimage) = self.destination.claim(&payment_hash, forward_amount) else {
            return Err(NodeError::InvoiceMismatch);
        };
        self.log(None, Actor::Destination, Actor::Bridge, "preimage", 0);
        self.bridge.learn_preimage(payment_hash, preimage);
        let fulfill = self.bridge_reply(
            None,
            Message::UpdateFulfillHtlc {
                payment_hash,
                preimage,
            },
        )?;
        let Message::UpdateFulfillHtlc { preimage, .. } = fulfill else {
            return Err(unexpected(&fulfill, "update_fulfill_htlc"));
        };
        if sha256(&preimage) != payment_hash {
            return Err(ChannelError::WrongPreimage.into());
        }
        self.gateway
            .chan_mut()?
            .preimages
            .insert(payment_hash, preimage);
        outcome.delivered = Some(forward_amount);
        outcome.status = PaymentStatus::Fulfilled;
        if let Some(p) = self.payments.last_mut() {
            *p = outcome.clone();
        }

        self.gw_send(Some(9), Message::PaymentSuccess { payment_hash })?;
        Ok(outcome)
    }

    /// Moves the channel from its current state to `next` with both
    /// parties signing and revoking. With `numbered`, events carry the
    /// payment-flow step numbers 4 to 8.
    fn commit_update(&mut self, next: ChannelState, numbered: bool) -> Result<(), NodeError> {
        let step = |n: u8| numbered.then_some(n);
        let (ctx, n, b_next) = {
            let c = self.gateway.chan()?;
            let n = c.current().state_num;
            let b = c.bridge_points.point(n + 1).ok_or(NodeError::NoChannel)?;
            (c.ctx, n, b)
        };
        let bridge_commit = build_bridge_commitment(&ctx, &next, &b_next);
        let digest = bridge_commit.tx.digest();
        self.gateway.note_signing(n + 1, digest)?;

        let signed = (|| {
            let sig = self.threshold_sign(step(4), &digest)?;
            let mut htlc_signatures = vec![];
            for h in &next.pending_htlcs {
                let m = bridge_commit.htlc_sig_message(&h.payment_hash);
                htlc_signatures.push(self.threshold_sign(step(4), &m)?);
            }
            Ok::<_, NodeError>((sig, htlc_signatures))
        })();
        let (signature, htlc_signatures) = match signed {
            Ok(v) => v,
            Err(e) => {
                // abort: nothing was committed, both sides drop the update
                self.gateway.signed_states.remove(&(n + 1));
                self.bridge.discard_proposed();
                return Err(e);
            }
        };

        let raa = self.send_bridge(
            step(5),
            step(6),
            Message::CommitmentSigned {
                signature,
                htlc_signatures,
            },
        )?;
        let Some(Message::RevokeAndAck {
            commitment_secret,
            next_commitment_point,
        }) = raa
        else {
            return Err(NodeError::Unexpected {
                got: "other".into(),
                wanted: "revoke_and_ack",
            });
        };
        {
            let c = self.gateway.chan_mut()?;
            c.bridge_points.insert_secret(n, commitment_secret)?;
            c.bridge_points.record_point(n + 2, next_commitment_point);
        }

        let (new_points, released) = self.derive_points(step(7), (n + 2) as u32, 1)?;
        let b_share = released.ok_or(NodeError::Unexpected {
            got: "no released share".into(),
            wanted: "share of the superseded state",
        })?;
        let (p_n, p_next) = {
            let c = self.gateway.chan()?;
            (c.points[n as usize], c.points[(n + 1) as usize])
        };
        let secret_n = self
            .gateway
            .server
            .as_ref()
            .ok_or(NodeError::NoChannel)?
            .commitment_secret(n as u32, &b_share, &p_n)?;

        let cs = self.bridge.sign_gateway_commitment()?;
        let cs = self.bridge_reply(step(8), cs)?;
        let Message::CommitmentSigned {
            signature: bsig,
            htlc_signatures: bhtlc,
        } = cs
        else {
            return Err(unexpected(&cs, "commitment_signed"));
        };
        let own = build_gateway_commitment(&ctx, &next, &p_next, None)?;
        let bridge_key = ctx.bridge_key;
        if !verify_standard(&bridge_key, &own.tx.digest(), &bsig)
            || bhtlc.len() != next.pending_htlcs.len()
            || next.pending_htlcs.iter().zip(&bhtlc).any(|(h, s)| {
                !verify_standard(&bridge_key, &own.htlc_sig_message(&h.payment_hash), s)
            })
        {
            return Err(NodeError::BadPeerSignature);
        }
        self.send_bridge(
            step(8),
            None,
            Message::RevokeAndAck {
                commitment_secret: secret_n,
                next_commitment_point: new_points[0],
            },
        )?;
        let c = self.gateway.chan_mut()?;
        c.points.push(new_points[0]);
        c.states.push(next);
        c.own_commitments.push((own, bsig));
        c.bridge_commitments.push(bridge_commit);
        Ok(())
    }

    /// Settles every HTLC whose preimage came back, one commitment round each.
    pub fn settle(&mut self) -> Result<usize, NodeError> {
        self.run_flow("settle", |s| {
            s.active_channel()?;
            let mut settled = 0;
            loop {
                let c = s.gateway.chan()?;
                let Some((hash, preimage)) = c.current().pending_htlcs.iter().find_map(|h| {
                    c.preimages
                        .get(&h.payment_hash)
                        .map(|p| (h.payment_hash, *p))
                }) else {
                    break;
                };
                let next = c.current().settle_htlc(&preimage)?;
                s.bridge.stage_settle(&hash)?;
                s.commit_update(next, false)?;
                if let Some(p) = s.payments.iter_mut().find(|p| p.payment_hash == hash) {
                    p.status = PaymentStatus::Settled;
                }
                settled += 1;
            }
            Ok(settled)
        })
    }

    /// Fails HTLCs the bridge gave up on after their timeout, refunding
    /// amount and service fee to the device.
    pub fn fail_expired(&mut self) -> Result<usize, NodeError> {
        self.run_flow("fail", |s| {
            s.active_channel()?;
            let mut failed = 0;
            while let Some(msg) = s.bridge.next_fail(s.chain.height()) {
                let msg = s.bridge_reply(None, msg)?;
                let Message::UpdateFailHtlc { payment_hash } = msg else {
                    return Err(unexpected(&msg, "update_fail_htlc"));
                };
                let height = s.chain.height();
                let next = s
                    .gateway
                    .chan()?
                    .current()
                    .fail_htlc(&payment_hash, height)?;
                s.commit_update(next, false)?;
                if let Some(p) = s
                    .payments
                    .iter_mut()
                    .find(|p| p.payment_hash == payment_hash)
                {
                    p.status = PaymentStatus::Failed;
                }
                failed += 1;
            }
            Ok(failed)
        })
    }

    /// Close requested by the device; it pays the on-chain fee.
    pub fn close_iot(&mut self) -> Result<(), NodeError> {
        self.run_flow("close_iot", |s| {
            let got = s.iot_send(None, Message::ChannelClosingRequest)?;
            if got != Message::ChannelClosingRequest {
                return Err(unexpected(&got, "ChannelClosingRequest"));
            }
            s.ransom_check()?;
            s.active_channel()?;
            s.close_with(FeePayer::Iot)
        })
    }

    /// Close started by the gateway; it pays the fee from its collected fees.
    pub fn close_gateway(&mut self) -> Result<(), NodeError> {
        self.run_flow("close_gateway", |s| {
            s.active_channel()?;
            let state = s.gateway.chan()?.current().clone();
            if state.gateway_fee_balance < crate::chain_sim::CLOSE_TX_FEE {
                return Err(ChannelError::InsufficientFeeBalance {
                    needed: crate::chain_sim::CLOSE_TX_FEE,
                    available: state.gateway_fee_balance,
                }
                .into());
            }
            s.gw_send(None, Message::ChannelClosingRequest)?;
            s.close_with(FeePayer::Gateway)
        })
    }

    /// Mutual close when the bridge is reachable and no HTLC is pending,
    /// otherwise a unilateral close on the latest gateway commitment.
    fn close_with(&mut self, payer: FeePayer) -> Result<(), NodeError> {
        let (ctx, state, point) = {
            let c = self.gateway.chan()?;
            let n = c.current().state_num as usize;
            (c.ctx, c.current().clone(), c.points[n])
        };
        let joint = self
            .gateway
            .server
            .as_ref()
            .ok_or(NodeError::NoChannel)?
            .public();
        let mutual = self.bridge.is_online(self.chain.height()) && state.pending_htlcs.is_empty();
        let (tx, reason) = if mutual {
            let reply = self.send_bridge(None, None, Message::Shutdown)?;
            if reply != Some(Message::Shutdown) {
                return Err(NodeError::Unexpected {
                    got: "other".into(),
                    wanted: "shutdown",
                });
            }
            let closing = build_closing_tx(&ctx, &state, payer)?;
            let sig = self.threshold_sign(None, &closing.tx.digest())?;
            let reply = self.send_bridge(
                None,
                None,
                Message::ClosingSigned {
                    fee: closing.tx.fee,
                    signature: sig,
                },
            )?;
            let Some(Message::ClosingSigned {
                signature: bsig, ..
            }) = reply
            else {
                return Err(NodeError::BadPeerSignature);
            };
            if !verify_standard(&ctx.bridge_key, &closing.tx.digest(), &bsig) {
                return Err(NodeError::BadPeerSignature);
            }
            (Gateway::finalize(&closing, joint, sig), "mutual close")
        } else {
            let commit = build_gateway_commitment(&ctx, &state, &point, Some(payer))?;
            let sig = self.threshold_sign(None, &commit.tx.digest())?;
            (Gateway::finalize(&commit, joint, sig), "unilateral close")
        };
        self.local(None, Actor::Gateway, "broadcast_close_tx");
        self.chain.broadcast(tx)?;
        if payer == FeePayer::Iot {
            self.iot_close_fees += crate::chain_sim::CLOSE_TX_FEE;
        }
        let depth = self.gateway.chan()?.params.confirmation_depth;
        for _ in 0..depth {
            self.mine_one();
        }
        self.mark_closed(reason)
    }

    fn mark_closed(&mut self, reason: &str) -> Result<(), NodeError> {
        let c = self.gateway.chan_mut()?;
        if matches!(c.status, ChannelStatus::Closed { .. }) {
            return Ok(());
        }
        c.status = ChannelStatus::Closed {
            reason: reason.into(),
        };
        self.gateway.notified_close = true;
        match self.gw_send(
            None,
            Message::ChannelClosed {
                reason: reason.into(),
            },
        ) {
            Ok(_) | Err(NodeError::Disconnected) => Ok(()),
            Err(e) => Err(e),
        }
    }

    /// Unilateral close by the bridge on its latest commitment.
    pub fn close_bridge(&mut self) -> Result<(), NodeError> {
        self.run_flow("close_bridge", |s| {
            let tx = s.bridge.close()?;
            s.local(None, Actor::Bridge, "broadcast_commitment");
            s.chain.broadcast(tx)?;
            let depth = s.gateway.chan()?.params.confirmation_depth;
            for _ in 0..depth {
                s.mine_one();
            }
            Ok(())
        })
    }

    /// Lets `actor` carry out its configured misbehaviour. Returns the
    /// broadcast transaction, if the behaviour produced one.
    pub fn adversary_act(
        &mut self,
        actor: Actor,
    ) -> Result<Option<crate::chain_sim::Txid>, NodeError> {
        self.run_flow("adversary", |s| match actor {
            Actor::Gateway => {
                let GatewayBehavior::BroadcastRevoked(r) = s.gateway.behavior else {
                    return Ok(None);
                };
                let commit = s
                    .gateway
                    .chan()?
                    .own_commitments
                    .get(r as usize)
                    .map(|(c, _)| c.clone())
                    .ok_or(NodeError::NoChannel)?;
                // the device cannot tell an old commitment from a new one
                let sig = s.threshold_sign(None, &commit.tx.digest())?;
                let joint = s
                    .gateway
                    .server
                    .as_ref()
                    .ok_or(NodeError::NoChannel)?
                    .public();
                s.local(None, Actor::Gateway, "broadcast_revoked_commitment");
                Ok(Some(
                    s.chain.broadcast(Gateway::finalize(&commit, joint, sig))?,
                ))
            }
            Actor::Bridge => {
                let Some(tx) = s.bridge.cheat() else {
                    return Ok(None);
                };
                s.local(None, Actor::Bridge, "broadcast_revoked_commitment");
                Ok(Some(s.chain.broadcast(tx)?))
            }
            _ => Ok(None),
        })
    }

    /// Takes `actor` offline for the next `blocks` blocks.
    pub fn set_offline(&mut self, actor: Actor, blocks: u64) {
        let until = self.chain.height() + blocks;
        match actor {
            Actor::Gateway => self.gateway.offline_until = until,
            Actor::Bridge => self.bridge.offline_until = until,
            _ => {}
        }
    }

    /// The device drops off mid-way through its next signing session.
    pub fn disconnect_iot_mid_sign(&mut self) {
        self.iot.drop_mid_sign();
    }

    pub fn reconnect_iot(&mut self) {
        self.iot.reconnect();
    }

    /// Mines `n` blocks; watchers react after each one.
    pub fn mine(&mut self, n: u64) -> u64 {
        let _ = self.run_flow("mine", |s| {
            for _ in 0..n {
                s.mine_one();
            }
            Ok(())
        });
        self.chain.height()
    }

    fn mine_one(&mut self) {
        self.chain.mine_block();
        for tx in self.bridge.on_block(&self.chain) {
            let _ = self.chain.broadcast(tx);
        }
        for tx in self.gateway.on_block(&self.chain) {
            let _ = self.chain.broadcast(tx);
        }
        let closed_by_peer = self.gateway.is_online(self.chain.height())
            && self
                .gateway
                .channel
                .as_ref()
                .is_some_and(|c| !matches!(c.status, ChannelStatus::Closed { .. }))
            && self.gateway.closing_txid(&self.chain).is_some();
        if closed_by_peer {
            let reason = if self.is_own_commitment_on_chain() {
                "closed by gateway commitment"
            } else {
                "closed by bridge"
            };
            let _ = self.mark_closed(reason);
        }
    }

    fn is_own_commitment_on_chain(&self) -> bool {
        let Some(c) = self.gateway.channel.as_ref() else {
            return false;
        };
        let Some(txid) = self.gateway.closing_txid(&self.chain) else {
            return false;
        };
        c.own_commitments.iter().any(|(t, _)| t.tx.txid() == txid)
    }

    /// Fully signed funding witness check for tests: the on-chain spend of
    /// the funding output, if any.
    pub fn funding_spend_witness(&self) -> Option<Witness> {
        let c = self.gateway.channel.as_ref()?;
        let tx = self.chain.spender_of(&c.ctx.funding)?;
        tx.inputs[0].witness
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn open_pay_settle_close() {
        let mut sim = Simulation::new(SimConfig {
            service_fee_ppm: 100_000,
            ..SimConfig::testing(7)
        });
        sim.open_channel(10 * COIN).unwrap();
        let dest = sim.destination().id();
        let out = sim.pay(COIN, dest).unwrap();
        assert_eq!(out.status, PaymentStatus::Fulfilled);
        let s = sim.channel_state().unwrap();
        assert_eq!(s.iot_balance, 9 * COIN);
        assert_eq!(s.htlc_total(), 9 * COIN / 10);
        assert_eq!(s.gateway_fee_balance, COIN / 10);
        assert_eq!(sim.settle().unwrap(), 1);
        sim.close_iot().unwrap();
        let h = sim.holdings();
        assert_eq!(h.iot, 9 * COIN - 183);
        assert!(sim
            .iot()
            .inbox()
            .iter()
            .any(|m| matches!(m, Message::ChannelClosed { .. })));
    }
}
