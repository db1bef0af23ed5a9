use std::collections::BTreeMap;

use crate::chain_sim::Sat;
use crate::channel::NodeId;
use crate::ecdsa::SigningKey;
use crate::group::sha256;

#[derive(Clone, Debug)]
struct Invoice {
    amount: Sat,
    preimage: [u8; 32],
    paid: bool,
}

/// Payee reached through the bridge. Issues invoices and reveals a
/// preimage once, for the exact invoiced amount.
#[derive(Clone, Debug)]
pub struct DestinationNode {
    key: SigningKey,
    seed: [u8; 32],
    counter: u64,
    invoices: BTreeMap<[u8; 32], Invoice>,
    received: Sat,
}

impl DestinationNode {
    pub fn new(key: SigningKey, seed: [u8; 32]) -> Self {
        DestinationNode {
            key,
            seed,
            counter: 0,
            invoices: BTreeMap::new(),
            received: 0,
        }
    }

    pub fn id(&self) -> NodeId {
        NodeId(self.key.public())
    }

    /// Returns the payment hash of a fresh invoice.
    pub fn issue_invoice(&mut self, amount: Sat) -> [u8; 32] {
        self.counter += 1;
        let mut buf = self.seed.to_vec();
        buf.extend_from_slice(&self.counter.to_be_bytes());
        let preimage = sha256(&buf);
        let hash = sha256(&preimage);
        self.invoices.insert(
            hash,
            Invoice {
                amount,
                preimage,
                paid: false,
            },
        );
        hash
    }

    pub fn invoice_amount(&self, hash: &[u8; 32]) -> Option<Sat> {
        self.invoices.get(hash).map(|i| i.amount)
    }

    /// Accepts an incoming HTLC and reveals the preimage if it pays the
    /// invoice exactly.
    pub fn claim(&mut self, hash: &[u8; 32], amount: Sat) -> Option<[u8; 32]> {
        let inv = self.invoices.get_mut(hash)?;
        if inv.paid || inv.amount != amount {
            return None;
        }
        inv.paid = true;
        self.received += amount;
        Some(inv.preimage)
    }

    /// Total received over the bridge's outgoing channel.
    pub fn received(&self) -> Sat {
        self.received
    }
}
