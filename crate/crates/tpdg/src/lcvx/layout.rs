//! Canonical indexing of the strategy flag vector.
//!
//! Each (constraint family, node) pair that can be selectively enforced owns
//! exactly one flag, regardless of how many scalar solver rows the pair
//! expands to. Families are laid out in contiguous blocks, in a fixed order,
//! giving `8N - 3` flags for an `N`-node problem:
//!
//! | family        | nodes        | flags |
//! |---------------|--------------|-------|
//! | thrust_lower  | `0..N`       | `N`   |
//! | thrust_upper  | `0..N`       | `N`   |
//! | thrust_norm   | `0..N`       | `N`   |
//! | pointing      | `0..N`       | `N`   |
//! | glideslope    | `1..N`       | `N-1` |
//! | max_velocity  | `1..N`       | `N-1` |
//! | mass_lower    | `1..N`       | `N-1` |
//! | mass_upper    | `1..N`       | `N-1` |
//! | dry_mass      | `N-1` only   | `1`   |
//!
//! The state-constraint families skip node 0 because the initial state is
//! pinned by boundary equalities; the full problem still enforces them at
//! node 0 unconditionally (see the problem builder).

use std::fmt;
use std::ops::Range;

use crate::error::{Error, Result};

/// Version tag of the flag-vector layout above. Stored in dataset and model
/// artifacts; readers refuse files written under a different layout.
pub const LAYOUT_VERSION: u32 = 1;

/// The nine selectively enforceable constraint families.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConstraintFamily {
    /// Lower thrust bound, quadratic in the mass-log deviation.
    ThrustLower,
    /// Upper thrust bound, linear in the mass-log deviation.
    ThrustUpper,
    /// Thrust magnitude dominated by its slack: `||u|| <= xi`.
    ThrustNorm,
    /// Thrust pointing cone about local vertical.
    Pointing,
    /// Polyhedral glideslope cone on position.
    Glideslope,
    /// Velocity magnitude envelope.
    MaxVelocity,
    /// Mass-log lower envelope (max-throttle depletion).
    MassLower,
    /// Mass-log upper envelope (min-throttle depletion).
    MassUpper,
    /// Final mass above dry mass.
    DryMass,
}

impl ConstraintFamily {
    /// All families in flag-layout order.
    pub const ALL: [ConstraintFamily; 9] = [
        ConstraintFamily::ThrustLower,
        ConstraintFamily::ThrustUpper,
        ConstraintFamily::ThrustNorm,
        ConstraintFamily::Pointing,
        ConstraintFamily::Glideslope,
        ConstraintFamily::MaxVelocity,
        ConstraintFamily::MassLower,
        ConstraintFamily::MassUpper,
        ConstraintFamily::DryMass,
    ];

    /// Stable machine-readable name, used in the layout CSV and reports.
    pub fn name(self) -> &'static str {
        match self {
            ConstraintFamily::ThrustLower => "thrust_lower",
            ConstraintFamily::ThrustUpper => "thrust_upper",
            ConstraintFamily::ThrustNorm => "thrust_norm",
            ConstraintFamily::Pointing => "pointing",
            ConstraintFamily::Glideslope => "glideslope",
            ConstraintFamily::MaxVelocity => "max_velocity",
            ConstraintFamily::MassLower => "mass_lower",
            ConstraintFamily::MassUpper => "mass_upper",
            ConstraintFamily::DryMass => "dry_mass",
        }
    }

    /// Inverse of [`name`](Self::name).
    pub fn from_name(name: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.name() == name)
    }

    /// Position of this family in [`Self::ALL`].
    pub fn index(self) -> usize {
        Self::ALL.iter().position(|f| *f == self).expect("family is in ALL")
    }
}

impl fmt::Display for ConstraintFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Flag indexing for an `N`-node problem.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConstraintLayout {
    n_nodes: usize,
}

impl ConstraintLayout {
    pub fn new(n_nodes: usize) -> Result<Self> {
        if n_nodes < 2 {
            return Err(Error::InvalidParameter {
                field: "n_nodes",
                reason: format!("layout needs at least 2 nodes, got {n_nodes}"),
            });
        }
        Ok(Self { n_nodes })
    }

    pub fn n_nodes(&self) -> usize {
        self.n_nodes
    }

    /// Total number of flags: `8N - 3`.
    pub fn flag_count(&self) -> usize {
        8 * self.n_nodes - 3
    }

    /// Nodes at which this family is selectively enforceable.
    pub fn nodes_of(&self, family: ConstraintFamily) -> Range<usize> {
        use ConstraintFamily::*;
        match family {
            ThrustLower | ThrustUpper | ThrustNorm | Pointing => 0..self.n_nodes,
            Glideslope | MaxVelocity | MassLower | MassUpper => 1..self.n_nodes,
            DryMass => self.n_nodes - 1..self.n_nodes,
        }
    }

    /// Contiguous flag indices owned by this family.
    pub fn family_range(&self, family: ConstraintFamily) -> Range<usize> {
        let mut base = 0;
        for f in ConstraintFamily::ALL {
            let len = self.nodes_of(f).len();
            if f == family {
                return base..base + len;
            }
            base += len;
        }
        unreachable!("every family is in ALL")
    }

    /// Flag index of a (family, node) pair, if that pair is flaggable.
    pub fn flag_of(&self, family: ConstraintFamily, node: usize) -> Option<usize> {
        let nodes = self.nodes_of(family);
        if !nodes.contains(&node) {
            return None;
        }
        Some(self.family_range(family).start + (node - nodes.start))
    }

    /// Inverse of [`flag_of`](Self::flag_of).
    pub fn resolve(&self, flag: usize) -> Option<(ConstraintFamily, usize)> {
        for family in ConstraintFamily::ALL {
            let range = self.family_range(family);
            if range.contains(&flag) {
                let node = self.nodes_of(family).start + (flag - range.start);
                return Some((family, node));
            }
        }
        None
    }

    /// Machine-readable index of the layout: `flag_id,family,node` per row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("flag_id,family,node\n");
        for flag in 0..self.flag_count() {
            let (family, node) = self.resolve(flag).expect("flag in range");
            out.push_str(&format!("{flag},{family},{node}\n"));
        }
        out
    }
}
