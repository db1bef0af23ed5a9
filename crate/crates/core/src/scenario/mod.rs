//! Scripted runs of the simulator with assertions and a JSON report.
//!
//! A scenario is a TOML file: a few header keys, optional parameter
//! overrides, an ordered `[[actions]]` list and an `[[expect]]` list.
//!
//! ```toml
//! name = "pay"
//! seed = 1
//!
//! [params]
//! service_fee_ppm = 100_000
//!
//! [[actions]]
//! op = "open"
//! capacity = 1_000_000_000
//!
//! [[actions]]
//! op = "pay"
//! sat = 100_000_000
//!
//! [[expect]]
//! kind = "no_errors"
//! ```

use serde::Deserialize;
use thiserror::Error;

use crate::chain_sim::Sat;
use crate::nodes::{Actor, BridgeBehavior, GatewayBehavior};

pub mod golden;
mod report;

pub use report::{
    execute, run, ActionRecord, AssertionResult, Balances, ChannelSummary, FeeLedger, FlowReport,
    OnchainFees, Report, RunOptions,
};

/// Default BTC price used to turn dollar amounts into satoshi.
pub const DEFAULT_BTC_USD: u64 = 54_500;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unknown scenario {0:?}")]
    Unknown(String),
    #[error("bad dollar amount {0:?}")]
    BadUsd(String),
    #[error("pay needs exactly one of `sat` or `usd`")]
    PayAmount,
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub params: Params,
    #[serde(default)]
    pub actions: Vec<Action>,
    #[serde(default)]
    pub expect: Vec<Expect>,
}

/// Overrides on top of the simulator defaults.
#[derive(Clone, Debug, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Params {
    pub service_fee_ppm: Option<u32>,
    pub base_fee: Option<Sat>,
    pub to_self_delay: Option<u32>,
    pub htlc_timeout: Option<u64>,
    pub confirmation_depth: Option<u64>,
    pub iot_wallet: Option<Sat>,
    pub btc_usd: Option<u64>,
    pub gateway: Option<GatewayBehavior>,
    pub bridge: Option<BridgeBehavior>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    #[default]
    Destination,
    /// A node the bridge cannot route to.
    Unknown,
}

#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
#[serde(tag = "op", rename_all = "snake_case", deny_unknown_fields)]
pub enum Action {
    Open {
        capacity: Sat,
    },
    Pay {
        #[serde(default)]
        sat: Option<Sat>,
        /// Decimal dollars, e.g. `"0.75"`.
        #[serde(default)]
        usd: Option<String>,
        #[serde(default)]
        to: Target,
    },
    Settle,
    Fail,
    Mine {
        blocks: u64,
    },
    Close {
        by: Actor,
    },
    Cheat {
        actor: Actor,
    },
    Offline {
        actor: Actor,
        blocks: u64,
    },
    /// The device drops off during its next signing session.
    Disconnect,
    Reconnect,
    /// Remembers balances and channel state for `unchanged`.
    Checkpoint,
    Repeat {
        times: u32,
        actions: Vec<Action>,
    },
}

impl Action {
    pub fn op(&self) -> &'static str {
        match self {
            Action::Open { .. } => "open",
            Action::Pay { .. } => "pay",
            Action::Settle => "settle",
            Action::Fail => "fail",
            Action::Mine { .. } => "mine",
            Action::Close { .. } => "close",
            Action::Cheat { .. } => "cheat",
            Action::Offline { .. } => "offline",
            Action::Disconnect => "disconnect",
            Action::Reconnect => "reconnect",
            Action::Checkpoint => "checkpoint",
            Action::Repeat { .. } => "repeat",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeeCategory {
    Open,
    Close,
    Penalty,
    Other,
    Total,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GoldenFlow {
    Open,
    Pay,
}

#[derive(Clone, Debug, PartialEq, Eq, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Expect {
    NoErrors,
    /// Some action of type `op` failed with a message containing `contains`.
    Error {
        op: String,
        contains: String,
    },
    GoldenTrace {
        flow: GoldenFlow,
    },
    /// Output amounts of the latest gateway commitment.
    CommitmentOutputs {
        iot: Sat,
        bridge: Sat,
        htlc: Sat,
        fees: Sat,
    },
    ChannelState {
        iot: Sat,
        bridge: Sat,
        htlc: Sat,
        fees: Sat,
    },
    StateNum {
        n: u64,
    },
    /// On-chain holdings of one actor.
    Holdings {
        actor: Actor,
        sat: Sat,
    },
    OnchainFees {
        category: FeeCategory,
        sat: Sat,
    },
    ServiceFees {
        sat: Sat,
    },
    ForwardingFees {
        sat: Sat,
    },
    DestinationReceived {
        sat: Sat,
    },
    Sweeps {
        actor: Actor,
        count: usize,
    },
    Closed,
    IotNotified,
    IotRecoverable {
        sat: Sat,
    },
    IotSafe,
    NoProfitableOldState,
    /// Every flow's IoT-link traffic stays under `max` bytes.
    LinkBytesBelow {
        max: u64,
    },
    FrameCountsMatch,
    PayloadsExcludeBridgeKey,
    /// Balances and channel state equal those at the last checkpoint.
    Unchanged,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let s: Scenario = toml::from_str(text)?;
        s.check_actions(&s.actions)?;
        Ok(s)
    }

    fn check_actions(&self, actions: &[Action]) -> Result<(), ScenarioError> {
        for a in actions {
            match a {
                Action::Pay { sat, usd, .. } => match (sat, usd) {
                    (Some(_), None) => {}
                    (None, Some(u)) => {
                        parse_micro_usd(u)?;
                    }
                    _ => return Err(ScenarioError::PayAmount),
                },
                Action::Repeat { actions, .. } => self.check_actions(actions)?,
                _ => {}
            }
        }
        Ok(())
    }
}

/// Parses a decimal dollar amount into micro-dollars.
pub fn parse_micro_usd(s: &str) -> Result<u64, ScenarioError> {
    let bad = || ScenarioError::BadUsd(s.into());
    let (whole, frac) = s.split_once('.').unwrap_or((s, ""));
    if whole.is_empty() && frac.is_empty() || frac.len() > 6 {
        return Err(bad());
    }
    let digits = |d: &str| d.is_empty() || d.bytes().all(|b| b.is_ascii_digit());
    if !digits(whole) || !digits(frac) {
        return Err(bad());
    }
    let w: u64 = if whole.is_empty() {
        0
    } else {
        whole.parse().map_err(|_| bad())?
    };
    let f: u64 = if frac.is_empty() {
        0
    } else {
        format!("{frac:0<6}").parse().map_err(|_| bad())?
    };
    w.checked_mul(1_000_000)
        .and_then(|v| v.checked_add(f))
        .ok_or_else(bad)
}

/// Satoshi worth `micro_usd` at `btc_usd` dollars per coin, rounded half up.
pub fn usd_to_sat(micro_usd: u64, btc_usd: u64) -> Sat {
    let num = u128::from(micro_usd) * 100;
    let rate = u128::from(btc_usd);
    ((num + rate / 2) / rate) as Sat
}

/// Micro-dollars worth `sat` at `btc_usd`, rounded half up.
pub fn sat_to_micro_usd(sat: Sat, btc_usd: u64) -> u64 {
    ((u128::from(sat) * u128::from(btc_usd) + 50) / 100) as u64
}

/// `1.234567` style rendering of micro-dollars.
pub fn format_usd(micro: u64) -> String {
    format!("{}.{:06}", micro / 1_000_000, micro % 1_000_000)
}

macro_rules! builtin {
    ($($name:literal),* $(,)?) => {
        /// Scenario files shipped with the crate, by name.
        pub const BUILTIN: &[(&str, &str)] = &[
            $(($name, include_str!(concat!("../../scenarios/", $name, ".toml")))),*
        ];
    };
}

builtin!(
    "open",
    "pay",
    "one_payment_state",
    "close_iot",
    "close_gateway",
    "close_gateway_insufficient",
    "close_bridge",
    "open_close_costs",
    "gateway_cheat",
    "bridge_cheat",
    "bridge_cheat_gateway_offline",
    "collusion_bridge_old_state",
    "collusion_gateway_old_state",
    "collusion_iot_gateway",
    "collusion_iot_bridge",
    "collusion20",
    "ransom",
    "toll_month",
    "mid_sign_disconnect",
    "route_failure",
    "noop",
);

pub fn builtin_names() -> impl Iterator<Item = &'static str> {
    BUILTIN.iter().map(|(n, _)| *n)
}

pub fn load_builtin(name: &str) -> Result<Scenario, ScenarioError> {
    let (_, text) = BUILTIN
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| ScenarioError::Unknown(name.into()))?;
    Scenario::parse(text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usd_parsing() {
        assert_eq!(parse_micro_usd("0.75").unwrap(), 750_000);
        assert_eq!(parse_micro_usd("2.25").unwrap(), 2_250_000);
        assert_eq!(parse_micro_usd("3").unwrap(), 3_000_000);
        assert_eq!(parse_micro_usd(".5").unwrap(), 500_000);
        for bad in ["", ".", "1.2345678", "-1", "1e3", "0x10"] {
            assert!(parse_micro_usd(bad).is_err(), "{bad}");
        }
    }

    #[test]
    fn toll_conversion() {
        assert_eq!(usd_to_sat(750_000, DEFAULT_BTC_USD), 1376);
        assert_eq!(format_usd(2_250_000), "2.250000");
    }

    #[test]
    fn every_builtin_parses() {
        for name in builtin_names() {
            let s = load_builtin(name).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(s.name, name);
        }
    }

    #[test]
    fn pay_needs_one_amount() {
        let text = "name = \"x\"\n[[actions]]\nop = \"pay\"\n";
        assert!(matches!(
            Scenario::parse(text),
            Err(ScenarioError::PayAmount)
        ));
        let text = "name = \"x\"\n[[actions]]\nop = \"jump\"\n";
        assert!(matches!(
            Scenario::parse(text),
            Err(ScenarioError::Parse(_))
        ));
    }
}
