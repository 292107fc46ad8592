//! Check names and their dependency graph.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Checks in execution order: every check comes after its prerequisites.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Check {
    Invariance,
    Projection,
    WatsonRelation,
    Z2Condition,
    Cumulants,
    KlSpectrum,
    EigenspaceInvariance,
    CanonicalDecomposition,
    Stationarity,
    TorusWatson,
    Duplication,
    Quadruplication,
    Mgf,
}

impl Check {
    pub const ALL: [Check; 13] = [
        Self::Invariance,
        Self::Projection,
        Self::WatsonRelation,
        Self::Z2Condition,
        Self::Cumulants,
        Self::KlSpectrum,
        Self::EigenspaceInvariance,
        Self::CanonicalDecomposition,
        Self::Stationarity,
        Self::TorusWatson,
        Self::Duplication,
        Self::Quadruplication,
        Self::Mgf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Invariance => "invariance",
            Self::Projection => "projection",
            Self::WatsonRelation => "watson_relation",
            Self::Z2Condition => "z2_condition",
            Self::Cumulants => "cumulants",
            Self::KlSpectrum => "kl_spectrum",
            Self::EigenspaceInvariance => "eigenspace_invariance",
            Self::CanonicalDecomposition => "canonical_decomposition",
            Self::Stationarity => "stationarity",
            Self::TorusWatson => "torus_watson",
            Self::Duplication => "duplication",
            Self::Quadruplication => "quadruplication",
            Self::Mgf => "mgf",
        }
    }

    /// Direct prerequisites.
    pub fn requires(self) -> &'static [Check] {
        match self {
            Self::Projection | Self::Z2Condition => &[Self::Invariance],
            Self::WatsonRelation => &[Self::Projection],
            Self::EigenspaceInvariance => &[Self::KlSpectrum, Self::Invariance],
            Self::CanonicalDecomposition => &[Self::EigenspaceInvariance],
            Self::TorusWatson => &[Self::Stationarity],
            _ => &[],
        }
    }

    pub fn is_monte_carlo(self) -> bool {
        matches!(self, Self::Duplication | Self::Quadruplication | Self::Mgf | Self::TorusWatson)
    }

    pub fn needs_action(self) -> bool {
        matches!(
            self,
            Self::Invariance
                | Self::Projection
                | Self::WatsonRelation
                | Self::Z2Condition
                | Self::EigenspaceInvariance
                | Self::CanonicalDecomposition
                | Self::TorusWatson
        )
    }
}

impl fmt::Display for Check {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Check {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        Self::ALL.into_iter().find(|c| c.name() == s).ok_or(())
    }
}

/// The requested checks plus everything they depend on, in execution order.
pub fn closure(requested: &[Check]) -> Vec<Check> {
    let mut set = BTreeSet::new();
    let mut stack: Vec<Check> = requested.to_vec();
    while let Some(c) = stack.pop() {
        if set.insert(c) {
            stack.extend_from_slice(c.requires());
        }
    }
    set.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn order_is_topological() {
        for c in Check::ALL {
            for r in c.requires() {
                assert!(r < &c, "{r} must precede {c}");
            }
        }
    }

    #[test]
    fn closure_pulls_prerequisites() {
        assert_eq!(
            closure(&[Check::CanonicalDecomposition]),
            vec![
                Check::Invariance,
                Check::KlSpectrum,
                Check::EigenspaceInvariance,
                Check::CanonicalDecomposition
            ]
        );
        assert_eq!(closure(&[Check::Mgf, Check::Mgf]), vec![Check::Mgf]);
    }

    #[test]
    fn names_round_trip() {
        for c in Check::ALL {
            assert_eq!(c.name().parse::<Check>(), Ok(c));
            assert_eq!(serde_json::to_string(&c).unwrap(), format!("\"{}\"", c.name()));
        }
    }
}
