//! Points for charging at hubs and for pairing a charge with a transit ride.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct IncentiveConfig {
    pub charge_points: i64,
    pub synced_bonus: i64,
    /// Boarding must start at most this many minutes after the charge,
    /// inclusive.
    pub sync_window_min: i64,
}

impl Default for IncentiveConfig {
    fn default() -> Self {
        IncentiveConfig {
            charge_points: 10,
            synced_bonus: 5,
            sync_window_min: 120,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum IncentiveEvent {
    HubChargeSession,
    SyncedTransitTrip,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventContext {
    pub hub_id: String,
    /// Epoch seconds of the charge start or the boarding.
    pub timestamp: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerEntry {
    pub seq: u64,
    pub user_token: String,
    pub event: IncentiveEvent,
    pub hub_id: String,
    pub timestamp: i64,
    pub points: i64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LedgerDelta {
    pub user_token: String,
    pub points: i64,
    pub entries: Vec<LedgerEntry>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum IncentiveError {
    #[error("user is not enrolled")]
    NotEnrolled,
    #[error("user revoked consent")]
    ConsentRevoked,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
struct Account {
    consent: bool,
    balance: i64,
    /// `(hub, ts, paired)` for each charge start.
    charges: Vec<(String, i64, bool)>,
    /// Boardings not yet paired with a charge.
    boardings: Vec<(String, i64)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct IncentiveLedger {
    pub config: IncentiveConfig,
    accounts: BTreeMap<String, Account>,
    log: Vec<LedgerEntry>,
}

impl IncentiveLedger {
    pub fn new(config: IncentiveConfig) -> Self {
        IncentiveLedger {
            config,
            ..Default::default()
        }
    }

    /// Enroll, or restore consent for, a user.
    pub fn enroll(&mut self, user_token: &str) {
        self.accounts.entry(user_token.to_string()).or_default().consent = true;
    }

    pub fn revoke(&mut self, user_token: &str) {
        if let Some(a) = self.accounts.get_mut(user_token) {
            a.consent = false;
        }
    }

    pub fn is_enrolled(&self, user_token: &str) -> bool {
        self.accounts.get(user_token).is_some_and(|a| a.consent)
    }

    pub fn balance(&self, user_token: &str) -> Option<i64> {
        self.accounts.get(user_token).map(|a| a.balance)
    }

    pub fn balances(&self) -> BTreeMap<String, i64> {
        self.accounts.iter().map(|(k, a)| (k.clone(), a.balance)).collect()
    }

    pub fn log(&self) -> &[LedgerEntry] {
        &self.log
    }

    /// A charge pays the session points at once. A charge and a boarding at
    /// the same hub within the window pay the bonus once, whichever of the
    /// two is reported last.
    pub fn award_points(&mut self, user_token: &str, event: IncentiveEvent, ctx: &EventContext) -> Result<LedgerDelta, IncentiveError> {
        let cfg = self.config;
        let window = cfg.sync_window_min * 60;
        let acct = self.accounts.get_mut(user_token).ok_or(IncentiveError::NotEnrolled)?;
        if !acct.consent {
            return Err(IncentiveError::ConsentRevoked);
        }
        let in_window = |charge: i64, board: i64| (0..=window).contains(&(board - charge));
        let mut awards: Vec<(IncentiveEvent, i64, i64)> = Vec::new();
        match event {
            IncentiveEvent::HubChargeSession => {
                awards.push((event, ctx.timestamp, cfg.charge_points));
                let pair = acct
                    .boardings
                    .iter()
                    .position(|(h, b)| *h == ctx.hub_id && in_window(ctx.timestamp, *b));
                let paired = pair.is_some();
                if let Some(i) = pair {
                    let (_, b) = acct.boardings.remove(i);
                    awards.push((IncentiveEvent::SyncedTransitTrip, b, cfg.synced_bonus));
                }
                acct.charges.push((ctx.hub_id.clone(), ctx.timestamp, paired));
            }
            IncentiveEvent::SyncedTransitTrip => {
                let pair = acct
                    .charges
                    .iter_mut()
                    .find(|(h, c, used)| !*used && *h == ctx.hub_id && in_window(*c, ctx.timestamp));
                match pair {
                    Some(c) => {
                        c.2 = true;
                        awards.push((event, ctx.timestamp, cfg.synced_bonus));
                    }
                    None => {
                        acct.boardings.push((ctx.hub_id.clone(), ctx.timestamp));
                        awards.push((event, ctx.timestamp, 0));
                    }
                }
            }
        }
        let mut entries = Vec::with_capacity(awards.len());
        for (event, timestamp, points) in awards {
            acct.balance += points;
            let e = LedgerEntry {
                seq: self.log.len() as u64,
                user_token: user_token.to_string(),
                event,
                hub_id: ctx.hub_id.clone(),
                timestamp,
                points,
            };
            self.log.push(e.clone());
            entries.push(e);
        }
        Ok(LedgerDelta {
            user_token: user_token.to_string(),
            points: entries.iter().map(|e| e.points).sum(),
            entries,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ctx(hub: &str, minute: i64) -> EventContext {
        EventContext {
            hub_id: hub.into(),
            timestamp: minute * 60,
        }
    }

    fn ledger() -> IncentiveLedger {
        let mut l = IncentiveLedger::new(IncentiveConfig::default());
        l.enroll("u");
        l
    }

    #[test]
    fn charge_alone() {
        let mut l = ledger();
        let d = l.award_points("u", IncentiveEvent::HubChargeSession, &ctx("H", 0)).unwrap();
        assert_eq!(d.points, 10);
        assert_eq!(l.balance("u"), Some(10));
    }

    #[test]
    fn synced_within_window_and_boundary() {
        for (gap, total) in [(90, 15), (120, 15), (121, 10)] {
            let mut l = ledger();
            l.award_points("u", IncentiveEvent::HubChargeSession, &ctx("H", 0)).unwrap();
            l.award_points("u", IncentiveEvent::SyncedTransitTrip, &ctx("H", gap)).unwrap();
            assert_eq!(l.balance("u"), Some(total), "gap {gap}");
        }
    }

    #[test]
    fn other_hub_and_late_report() {
        let mut l = ledger();
        l.award_points("u", IncentiveEvent::HubChargeSession, &ctx("H", 0)).unwrap();
        l.award_points("u", IncentiveEvent::SyncedTransitTrip, &ctx("G", 30)).unwrap();
        assert_eq!(l.balance("u"), Some(10));
        // boarding reported before its charge still pairs
        let mut l = ledger();
        l.award_points("u", IncentiveEvent::SyncedTransitTrip, &ctx("H", 30)).unwrap();
        l.award_points("u", IncentiveEvent::HubChargeSession, &ctx("H", 0)).unwrap();
        assert_eq!(l.balance("u"), Some(15));
    }

    #[test]
    fn one_bonus_per_charge() {
        let mut l = ledger();
        l.award_points("u", IncentiveEvent::HubChargeSession, &ctx("H", 0)).unwrap();
        l.award_points("u", IncentiveEvent::SyncedTransitTrip, &ctx("H", 10)).unwrap();
        l.award_points("u", IncentiveEvent::SyncedTransitTrip, &ctx("H", 20)).unwrap();
        assert_eq!(l.balance("u"), Some(15));
    }

    #[test]
    fn enrollment_errors() {
        let mut l = IncentiveLedger::new(IncentiveConfig::default());
        let e = l.award_points("x", IncentiveEvent::HubChargeSession, &ctx("H", 0));
        assert_eq!(e.unwrap_err(), IncentiveError::NotEnrolled);
        l.enroll("x");
        l.revoke("x");
        let e = l.award_points("x", IncentiveEvent::HubChargeSession, &ctx("H", 0));
        assert_eq!(e.unwrap_err(), IncentiveError::ConsentRevoked);
    }
}
