//! Role-based access decisions with an audit trail.

use std::collections::BTreeMap;
use std::io::{self, Write};

use serde::{Deserialize, Serialize};

use crate::record::FieldCategory;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    Rider,
    Operator,
    Analyst,
}

impl Role {
    pub fn parse(name: &str) -> Option<Role> {
        match name {
            "Rider" => Some(Role::Rider),
            "Operator" => Some(Role::Operator),
            "Analyst" => Some(Role::Analyst),
            _ => None,
        }
    }
}

/// How finely the requested data resolves individuals or places.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Granularity {
    /// Individual records with precise values.
    Raw,
    Zone,
    Aggregate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RecordScope {
    pub granularity: Granularity,
    /// The records belong to the requesting principal.
    pub own_records: bool,
    /// The data subjects consented to this category.
    pub consented: bool,
}

impl RecordScope {
    pub fn zone() -> Self {
        RecordScope {
            granularity: Granularity::Zone,
            own_records: false,
            consented: true,
        }
    }

    pub fn raw() -> Self {
        RecordScope {
            granularity: Granularity::Raw,
            ..RecordScope::zone()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DenyReason {
    UnknownPrincipal,
    GranularityPolicy,
    CategoryNotPermitted,
    ConsentRequired,
    NotOwner,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    Allow,
    Deny(DenyReason),
}

/// What a role may see: permitted categories and the finest granularity for
/// each. Anything absent is denied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RolePolicy {
    pub permitted: BTreeMap<FieldCategory, Granularity>,
    pub requires_consent: bool,
    pub own_records_only: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AccessPolicy {
    pub roles: BTreeMap<Role, RolePolicy>,
}

impl Default for AccessPolicy {
    fn default() -> Self {
        use FieldCategory::*;
        use Granularity::*;
        let operator = RolePolicy {
            permitted: FieldCategory::ALL.iter().map(|c| (*c, Raw)).collect(),
            requires_consent: false,
            own_records_only: false,
        };
        let analyst = RolePolicy {
            permitted: BTreeMap::from([(Location, Zone), (Occupancy, Zone), (Energy, Zone), (Activity, Aggregate)]),
            requires_consent: true,
            own_records_only: false,
        };
        let rider = RolePolicy {
            permitted: BTreeMap::from([(Location, Raw), (Occupancy, Raw), (Energy, Raw), (Activity, Raw)]),
            requires_consent: false,
            own_records_only: true,
        };
        AccessPolicy {
            roles: BTreeMap::from([(Role::Operator, operator), (Role::Analyst, analyst), (Role::Rider, rider)]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AuditEntry {
    pub seq: u64,
    pub principal: String,
    pub category: FieldCategory,
    pub scope: RecordScope,
    pub decision: Decision,
}

/// Policy table plus the append-only audit log of every decision.
#[derive(Debug, Clone, Default)]
pub struct Authorizer {
    pub policy: AccessPolicy,
    audit: Vec<AuditEntry>,
}

impl Authorizer {
    pub fn new(policy: AccessPolicy) -> Self {
        Authorizer { policy, audit: Vec::new() }
    }

    pub fn authorize(&mut self, principal: &str, category: FieldCategory, scope: RecordScope) -> Decision {
        let decision = decide(&self.policy, principal, category, scope);
        self.audit.push(AuditEntry {
            seq: self.audit.len() as u64,
            principal: principal.to_string(),
            category,
            scope,
            decision,
        });
        decision
    }

    pub fn audit(&self) -> &[AuditEntry] {
        &self.audit
    }

    pub fn write_audit<W: Write>(&self, mut out: W) -> io::Result<()> {
        for e in &self.audit {
            serde_json::to_writer(&mut out, e)?;
            out.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Deny unless the role's table grants the category at this granularity.
pub fn decide(policy: &AccessPolicy, principal: &str, category: FieldCategory, scope: RecordScope) -> Decision {
    let Some(role) = Role::parse(principal) else {
        return Decision::Deny(DenyReason::UnknownPrincipal);
    };
    let Some(rp) = policy.roles.get(&role) else {
        return Decision::Deny(DenyReason::UnknownPrincipal);
    };
    // never configurable: analysts see places at zone level or coarser
    if role == Role::Analyst && category == FieldCategory::Location && scope.granularity == Granularity::Raw {
        return Decision::Deny(DenyReason::GranularityPolicy);
    }
    let Some(finest) = rp.permitted.get(&category) else {
        return Decision::Deny(DenyReason::CategoryNotPermitted);
    };
    if scope.granularity < *finest {
        return Decision::Deny(DenyReason::GranularityPolicy);
    }
    if rp.own_records_only && !scope.own_records {
        return Decision::Deny(DenyReason::NotOwner);
    }
    if rp.requires_consent && !scope.consented {
        return Decision::Deny(DenyReason::ConsentRequired);
    }
    Decision::Allow
}
