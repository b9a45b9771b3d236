//! Fixed spider body: 8 hinges (4 hips, 4 knees), 4 feet, and the
//! tree-distance metric that induces CPG neighbourhoods.
//!
//! The body tree is core -> (hip -> brick -> knee) per leg, the unique small
//! tree whose pairwise hinge distances yield neighbourhood sizes of
//! 0/10/22/28 pairs for ranges 0/2/4/6. Hinges are indexed leg-major:
//! `2*leg` is the hip, `2*leg + 1` the knee.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub const LEG_COUNT: usize = 4;
pub const HINGE_COUNT: usize = 2 * LEG_COUNT;

/// What a hinge actuates: hips swing a whole leg in the horizontal plane,
/// knees pitch the distal segment vertically.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HingeRole {
    Hip,
    Knee,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Hinge {
    pub leg: usize,
    pub role: HingeRole,
}

/// Per-segment lengths in meters. Shared between the body description and
/// the surrogate simulator.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimbGeometry {
    /// Core centre to hip joint.
    pub body_radius: f64,
    /// Hip joint to knee joint (through the structural brick).
    pub upper_len: f64,
    /// Knee joint to foot tip.
    pub lower_len: f64,
}

impl Default for LimbGeometry {
    fn default() -> Self {
        Self {
            body_radius: 0.10,
            upper_len: 0.15,
            lower_len: 0.25,
        }
    }
}

/// The canonical spider body. Immutable after construction.
#[derive(Debug, Clone, Serialize)]
pub struct SpiderModel {
    hinges: [Hinge; HINGE_COUNT],
    feet: [usize; LEG_COUNT],
    pub geometry: LimbGeometry,
}

impl Default for SpiderModel {
    fn default() -> Self {
        Self::new()
    }
}

impl SpiderModel {
    pub fn new() -> Self {
        let mut hinges = [Hinge {
            leg: 0,
            role: HingeRole::Hip,
        }; HINGE_COUNT];
        for leg in 0..LEG_COUNT {
            hinges[2 * leg] = Hinge {
                leg,
                role: HingeRole::Hip,
            };
            hinges[2 * leg + 1] = Hinge {
                leg,
                role: HingeRole::Knee,
            };
        }
        Self {
            hinges,
            feet: [0, 1, 2, 3],
            geometry: LimbGeometry::default(),
        }
    }

    pub fn hinges(&self) -> &[Hinge; HINGE_COUNT] {
        &self.hinges
    }

    /// One foot per leg, attached distal to the knee.
    pub fn feet(&self) -> &[usize; LEG_COUNT] {
        &self.feet
    }

    pub fn hinge_index(leg: usize, role: HingeRole) -> usize {
        match role {
            HingeRole::Hip => 2 * leg,
            HingeRole::Knee => 2 * leg + 1,
        }
    }

    /// Tree distances between hinges under the body tree
    /// core - hip - brick - knee (hip at depth 1, knee at depth 3).
    pub fn hinge_distance(&self) -> DistanceMatrix {
        // Depth of hinge i below the core; paths between legs go through it.
        let depth = |i: usize| -> u32 {
            match self.hinges[i].role {
                HingeRole::Hip => 1,
                HingeRole::Knee => 3,
            }
        };
        let mut d = [[0u32; HINGE_COUNT]; HINGE_COUNT];
        for i in 0..HINGE_COUNT {
            for j in 0..HINGE_COUNT {
                if i == j {
                    continue;
                }
                d[i][j] = if self.hinges[i].leg == self.hinges[j].leg {
                    // hip - brick - knee
                    2
                } else {
                    depth(i) + depth(j)
                };
            }
        }
        DistanceMatrix { d }
    }

    /// JSON export of the compiled-in morphology (hinge list plus distance
    /// matrix) for external inspection.
    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "hinges": self.hinges.iter().enumerate().map(|(i, h)| {
                serde_json::json!({ "index": i, "leg": h.leg, "role": h.role })
            }).collect::<Vec<_>>(),
            "feet": self.feet,
            "geometry": self.geometry,
            "distance_matrix": self.hinge_distance().rows(),
        })
    }
}

/// Symmetric matrix of tree-edge counts between hinges.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceMatrix {
    d: [[u32; HINGE_COUNT]; HINGE_COUNT],
}

impl DistanceMatrix {
    pub fn get(&self, i: usize, j: usize) -> u32 {
        self.d[i][j]
    }

    pub fn rows(&self) -> Vec<Vec<u32>> {
        self.d.iter().map(|r| r.to_vec()).collect()
    }

    /// All unordered pairs `{i, j}`, i < j, with `0 < d[i][j] <= range`, in
    /// lexicographic (i, j) order. No restriction on `range`; genome layout
    /// relies on this ordering being canonical.
    pub fn pairs_within(&self, range: u32) -> Vec<(usize, usize)> {
        let mut pairs = Vec::new();
        for i in 0..HINGE_COUNT {
            for j in (i + 1)..HINGE_COUNT {
                if self.d[i][j] > 0 && self.d[i][j] <= range {
                    pairs.push((i, j));
                }
            }
        }
        pairs
    }

    /// Neighbourhood pairs for a supported range (0, 2, 4 or 6).
    pub fn neighbourhood_pairs(&self, range: u32) -> Result<Vec<(usize, usize)>> {
        if !matches!(range, 0 | 2 | 4 | 6) {
            return Err(Error::InvalidRange(range));
        }
        Ok(self.pairs_within(range))
    }
}
