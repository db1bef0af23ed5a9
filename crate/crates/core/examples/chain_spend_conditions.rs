//! The simulated chain: only confirmed outputs are spendable, witnesses are
//! checked against spend conditions, and relative timelocks are enforced.

use lngate::chain_sim::{SimChain, SimTx, SpendCondition, TxIn, TxOut, Witness, COIN};
use lngate::ecdsa::SigningKey;

fn spend(chain: &SimChain, key: &SigningKey, tx: &mut SimTx) {
    let sig = key.sign(&tx.digest());
    tx.inputs[0].witness = Some(Witness::Sig {
        pubkey: key.public(),
        sig,
    });
    println!("  validate: {:?}", chain.validate(tx));
}

fn main() {
    let alice = SigningKey::derive("alice", 1);
    let mut chain = SimChain::new();
    let coin = chain.faucet(alice.public(), COIN);
    chain.mine_block();

    // lock half a coin for 5 blocks
    let delayed = SpendCondition::DelayedKeySpend {
        owner: alice.public(),
        delay: 5,
    };
    let mut lock = SimTx::new(
        vec![TxIn::unsigned(coin)],
        vec![TxOut {
            amount: COIN / 2,
            condition: delayed,
        }],
        150,
    );
    println!("lock tx:");
    spend(&chain, &alice, &mut lock);
    let locked = lock.outpoint(0);
    chain.broadcast(lock).unwrap();

    let mut unlock = SimTx::new(
        vec![TxIn::unsigned(locked)],
        vec![TxOut {
            amount: COIN / 2 - 150,
            condition: SpendCondition::KeySpend {
                owner: alice.public(),
            },
        }],
        150,
    );
    println!("unlock before the lock confirms:");
    spend(&chain, &alice, &mut unlock);
    chain.mine_block();
    println!("unlock after 1 confirmation:");
    spend(&chain, &alice, &mut unlock);
    chain.mine_blocks(4);
    println!("unlock after 5 confirmations:");
    spend(&chain, &alice, &mut unlock);
    println!(
        "height {}, fees collected {}",
        chain.height(),
        chain.total_fees()
    );
}
