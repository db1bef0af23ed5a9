use std::io::{Read, Write};

use rand_chacha::ChaCha20Rng;
use thiserror::Error;

use super::NodeError;
use crate::chain_sim::{Outpoint, Sat, SimTx, SpendCondition, Witness, OPEN_TX_FEE};
use crate::channel::{ChannelError, NodeId};
use crate::codec::{Reader, Writer};
use crate::ecdsa::SigningKey;
use crate::group::Point;
use crate::threshold_ecdsa::{
    ClientKey, ClientSignSession, EphemeralKey, KeyPurpose, KeygenClient, KeygenFirstMsg,
    KeygenParams, KeygenThirdMsg, SignFirstMsg, SignThirdMsg,
};
use crate::wire::transport::{read_frame, write_frame, TransportError};
use crate::wire::{Message, SessionMetrics, WireSession};

#[derive(Debug, Error)]
pub enum ServeError {
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Node(#[from] NodeError),
}

/// The constrained device. It keeps its key share, its wallet and the link
/// session; it never stores channel states or peer data.
pub struct IotDevice {
    pub(crate) link: WireSession,
    wallet_key: SigningKey,
    payout_key: SigningKey,
    wallet: Vec<(Outpoint, Sat)>,
    keygen_params: KeygenParams,
    rng: ChaCha20Rng,
    keygen: Option<KeygenClient>,
    key: Option<ClientKey>,
    signing: Option<(ClientSignSession, Vec<u8>)>,
    next_derive: u32,
    drop_mid_sign: bool,
    online: bool,
    inbox: Vec<Message>,
}

impl IotDevice {
    pub fn new(
        link: WireSession,
        wallet_key: SigningKey,
        payout_key: SigningKey,
        keygen_params: KeygenParams,
        rng: ChaCha20Rng,
    ) -> Self {
        IotDevice {
            link,
            wallet_key,
            payout_key,
            wallet: vec![],
            keygen_params,
            rng,
            keygen: None,
            key: None,
            signing: None,
            next_derive: 0,
            drop_mid_sign: false,
            online: true,
            inbox: vec![],
        }
    }

    pub fn add_utxo(&mut self, op: Outpoint, amount: Sat) {
        self.wallet.push((op, amount));
    }

    pub fn wallet_total(&self) -> Sat {
        self.wallet.iter().map(|(_, a)| a).sum()
    }

    pub fn wallet_key(&self) -> Point {
        self.wallet_key.public()
    }

    /// Key receiving the IoT output of every commitment and close.
    pub fn payout_key(&self) -> Point {
        self.payout_key.public()
    }

    pub fn key(&self) -> Option<&ClientKey> {
        self.key.as_ref()
    }

    pub fn metrics(&self) -> SessionMetrics {
        self.link.metrics()
    }

    /// Notifications received from the gateway, oldest first.
    pub fn inbox(&self) -> &[Message] {
        &self.inbox
    }

    pub fn is_online(&self) -> bool {
        self.online
    }

    /// Makes the device drop off the link in the middle of its next
    /// signing session.
    pub fn drop_mid_sign(&mut self) {
        self.drop_mid_sign = true;
    }

    pub fn reconnect(&mut self) {
        self.online = true;
        self.drop_mid_sign = false;
        self.signing = None;
    }

    /// The UTXO that funds a channel: the largest one in the wallet.
    pub fn funding_input(&self) -> Option<(Outpoint, Sat)> {
        self.wallet.iter().copied().max_by_key(|(_, a)| *a)
    }

    pub fn request_open(&self, capacity: Sat) -> Result<Message, NodeError> {
        let available = self.funding_input().map_or(0, |(_, a)| a);
        let needed = capacity + OPEN_TX_FEE;
        if available < needed {
            return Err(ChannelError::InsufficientFunds { needed, available }.into());
        }
        Ok(Message::OpenChannelRequest { capacity })
    }

    pub fn request_payment(&self, amount: Sat, destination: NodeId) -> Message {
        Message::SendPayment {
            amount,
            destination,
        }
    }

    /// Signs the wallet inputs of a funding transaction built by the
    /// gateway and tracks the change output.
    pub fn sign_funding(&mut self, tx: &mut SimTx) {
        let digest = tx.digest();
        let sig = self.wallet_key.sign(&digest);
        let txid_inputs: Vec<Outpoint> = tx.inputs.iter().map(|i| i.prevout).collect();
        for input in &mut tx.inputs {
            if self.wallet.iter().any(|(op, _)| *op == input.prevout) {
                input.witness = Some(Witness::Sig {
                    pubkey: self.wallet_key.public(),
                    sig,
                });
            }
        }
        self.wallet.retain(|(op, _)| !txid_inputs.contains(op));
        for (vout, out) in tx.outputs.iter().enumerate() {
            if out.condition
                == (SpendCondition::KeySpend {
                    owner: self.wallet_key.public(),
                })
            {
                self.wallet.push((tx.outpoint(vout as u32), out.amount));
            }
        }
    }

    /// Processes one gateway message and returns the reply, if any.
    pub fn handle(&mut self, msg: Message) -> Result<Option<Message>, NodeError> {
        match msg {
            Message::ThresholdKeygen { round: 1, payload } => {
                let first =
                    KeygenFirstMsg::from_bytes(&payload).map_err(NodeError::KeygenFailed)?;
                let (client, second) =
                    KeygenClient::respond(&self.keygen_params, &first, &mut self.rng)
                        .map_err(NodeError::KeygenFailed)?;
                self.keygen = Some(client);
                Ok(Some(Message::ThresholdKeygen {
                    round: 2,
                    payload: second.to_bytes(),
                }))
            }
            Message::ThresholdKeygen { round: 3, payload } => {
                let third =
                    KeygenThirdMsg::from_bytes(&payload).map_err(NodeError::KeygenFailed)?;
                let client = self.keygen.take().ok_or(NodeError::Unexpected {
                    got: "ThresholdKeygen".into(),
                    wanted: "keygen round 1 first",
                })?;
                self.key = Some(client.finish(&third).map_err(NodeError::KeygenFailed)?);
                self.next_derive = 0;
                Ok(None)
            }
            Message::ThresholdDerive {
                round: 1,
                index,
                tag,
                payload,
            } => self.derive(index, tag, &payload).map(Some),
            Message::ThresholdSign { round: 1, payload } => {
                let mut r = Reader::new(&payload);
                let message = r.var()?.to_vec();
                let first = SignFirstMsg::from_bytes(r.take(r.remaining())?)?;
                let eph = EphemeralKey::random(&mut self.rng);
                let (session, second) = ClientSignSession::respond(&first, eph, &mut self.rng);
                self.signing = Some((session, message));
                Ok(Some(Message::ThresholdSign {
                    round: 2,
                    payload: second.to_bytes(),
                }))
            }
            Message::ThresholdSign { round: 3, payload } => {
                if self.drop_mid_sign {
                    self.online = false;
                    self.signing = None;
                    return Ok(None);
                }
                let third = SignThirdMsg::from_bytes(&payload)?;
                let (session, message) = self.signing.take().ok_or(NodeError::Unexpected {
                    got: "ThresholdSign".into(),
                    wanted: "sign round 1 first",
                })?;
                let key = self.key.as_ref().ok_or(NodeError::NoChannel)?;
                let fourth = session.finish(key, &message, &third, &mut self.rng)?;
                Ok(Some(Message::ThresholdSign {
                    round: 4,
                    payload: fourth.to_bytes(),
                }))
            }
            m @ (Message::PaymentSuccess { .. }
            | Message::ChannelClosed { .. }
            | Message::ChannelClosingRequest) => {
                self.inbox.push(m);
                Ok(None)
            }
            other => Err(NodeError::Unexpected {
                got: other.name().into(),
                wanted: "a gateway request",
            }),
        }
    }

    /// Answers gateway frames on `stream` until the gateway hangs up.
    pub fn serve(&mut self, stream: &mut (impl Read + Write)) -> Result<(), ServeError> {
        loop {
            let frame = match read_frame(stream) {
                Ok(f) => f,
                Err(TransportError::Closed) => return Ok(()),
                Err(e) => return Err(e.into()),
            };
            let msg = self.link.open(&frame).map_err(TransportError::from)?;
            if let Some(reply) = self.handle(msg)? {
                write_frame(stream, &self.link.seal(&reply)).map_err(TransportError::from)?;
            }
        }
    }

    /// Computes the commitment points for consecutive indices starting at
    /// `index` and releases the share of the state two behind it.
    fn derive(&mut self, index: u32, tag: u8, payload: &[u8]) -> Result<Message, NodeError> {
        if KeyPurpose::from_tag(tag) != Some(KeyPurpose::CommitmentPoint) {
            return Err(NodeError::Unexpected {
                got: format!("derive tag {tag}"),
                wanted: "commitment point tag",
            });
        }
        if index != self.next_derive {
            return Err(NodeError::DeriveOutOfOrder {
                got: index,
                expected: self.next_derive,
            });
        }
        let key = self.key.as_ref().ok_or(NodeError::NoChannel)?;
        let mut r = Reader::new(payload);
        let count = r.u32()?;
        let mut w = Writer::new();
        w.u32(count);
        for i in 0..count {
            let basepoint = r.point()?;
            w.point(&key.commitment_point(index + i, &basepoint)?);
        }
        r.finish()?;
        if index >= 2 {
            w.u8(1).scalar(&key.commitment_release(index - 2)?);
        } else {
            w.u8(0);
        }
        self.next_derive = index + count;
        Ok(Message::ThresholdDerive {
            round: 2,
            index,
            tag,
            payload: w.finish(),
        })
    }
}
