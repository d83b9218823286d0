//! The concrete slope-3 maps on nine cells and their rotated relatives.

use std::fmt;
use std::str::FromStr;

use crate::interval_maps::{
    CircleRotation, MapError, PfMatrix, PiecewiseAffineMap, Rational, UniformPartition,
};

/// Offsets `G_{i,j}` (in units of 1/9) of `T_1, T_2, T_3`.
pub const TRIPLE_OFFSETS: [[i64; 9]; 3] = [
    [6, 7, 6, 1, 3, 0, 4, 3, 0],
    [3, 6, 5, 0, 0, 8, 3, 6, 2],
    [0, 6, 7, 1, 0, 6, 3, 3, 4],
];

/// Offsets (in units of 1/9) of the seed map `S`.
pub const SEED_OFFSETS: [i64; 9] = [3, 4, 3, 7, 0, 6, 1, 0, 6];

/// `S_i = ρ^{l_i} ∘ S ∘ ρ^{r_i}`.
pub const LEFT_ROTATIONS: [usize; 6] = [1, 2, 0, 2, 0, 1];
pub const RIGHT_ROTATIONS: [usize; 6] = [0, 2, 1, 0, 2, 1];

/// Map families that can be used as cocycle generators.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    /// `T_1, T_2, T_3`.
    T123,
    /// The single map `S`.
    S,
    /// `S_1, …, S_6`.
    S1to6,
    /// `T_1, …, T_6` with `T_{i+3} = ρ ∘ T_i`.
    T1to6,
}

impl Family {
    pub fn len(&self) -> usize {
        match self {
            Family::T123 => 3,
            Family::S => 1,
            Family::S1to6 | Family::T1to6 => 6,
        }
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn name(&self) -> &'static str {
        match self {
            Family::T123 => "T1-T3",
            Family::S => "S",
            Family::S1to6 => "S1-S6",
            Family::T1to6 => "T1-T6",
        }
    }

    /// Member `index` (1-based).
    pub fn member(&self, index: usize) -> Result<PiecewiseAffineMap, MapError> {
        if index == 0 || index > self.len() {
            return Err(MapError::IndexOutOfRange {
                family: self.name(),
                index,
            });
        }
        match self {
            Family::T123 | Family::T1to6 => t_map(index),
            Family::S => Ok(seed_map()),
            Family::S1to6 => s_map(index),
        }
    }

    pub fn maps(&self) -> Vec<PiecewiseAffineMap> {
        (1..=self.len())
            .map(|i| self.member(i).expect("catalogue maps are valid"))
            .collect()
    }

    pub fn pf_matrices(&self) -> Vec<PfMatrix> {
        self.maps()
            .iter()
            .map(|t| t.pf_matrix().expect("catalogue maps are Markov"))
            .collect()
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = MapError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "t123" | "t1-t3" => Ok(Family::T123),
            "s" => Ok(Family::S),
            "s1to6" | "s1-s6" => Ok(Family::S1to6),
            "t1to6" | "t1-t6" | "t4to6" => Ok(Family::T1to6),
            _ => Err(MapError::UnknownName(s.to_string())),
        }
    }
}

/// `x ↦ 3x − j/3 + g_j/9 mod 1` on cell `j` (1-based).
pub fn ninths_map(offsets: &[i64; 9]) -> PiecewiseAffineMap {
    let partition = UniformPartition::ninths();
    let slopes = vec![Rational::from_integer(3); 9];
    let offsets = offsets
        .iter()
        .enumerate()
        .map(|(j, &g)| Rational::new(-(j as i64 + 1), 3) + Rational::new(g, 9))
        .collect();
    PiecewiseAffineMap::new(partition, slopes, offsets).expect("slope 3 is expanding")
}

/// Rotation by 1/3 on the nine-cell circle.
pub fn rho() -> CircleRotation {
    CircleRotation::new(UniformPartition::ninths(), Rational::new(1, 3))
        .expect("1/3 is a multiple of 1/9")
}

/// `T_i` for `i` in `1..=6`.
pub fn t_map(i: usize) -> Result<PiecewiseAffineMap, MapError> {
    match i {
        1..=3 => Ok(ninths_map(&TRIPLE_OFFSETS[i - 1])),
        4..=6 => ninths_map(&TRIPLE_OFFSETS[i - 4]).post_rotate(&rho()),
        _ => Err(MapError::IndexOutOfRange {
            family: "T",
            index: i,
        }),
    }
}

pub fn seed_map() -> PiecewiseAffineMap {
    ninths_map(&SEED_OFFSETS)
}

/// `S_i` for `i` in `1..=6`.
pub fn s_map(i: usize) -> Result<PiecewiseAffineMap, MapError> {
    if !(1..=6).contains(&i) {
        return Err(MapError::IndexOutOfRange {
            family: "S",
            index: i,
        });
    }
    let rho = rho();
    seed_map()
        .pre_rotate(&rho.pow(RIGHT_ROTATIONS[i - 1]))?
        .post_rotate(&rho.pow(LEFT_ROTATIONS[i - 1]))
}

/// A catalogue entry looked up by name.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum NamedMap {
    Expanding(PiecewiseAffineMap),
    Rotation(CircleRotation),
}

impl NamedMap {
    pub fn pf_matrix(&self) -> Result<PfMatrix, MapError> {
        match self {
            NamedMap::Expanding(t) => t.pf_matrix(),
            NamedMap::Rotation(r) => Ok(r.pf_matrix()),
        }
    }
}

/// Looks up `"T1"`…`"T6"`, `"S"`, `"S1"`…`"S6"` or `"rho"`.
pub fn by_name(name: &str) -> Result<NamedMap, MapError> {
    let unknown = || MapError::UnknownName(name.to_string());
    let lower = name.trim().to_ascii_lowercase();
    if lower == "rho" {
        return Ok(NamedMap::Rotation(rho()));
    }
    if lower == "s" {
        return Ok(NamedMap::Expanding(seed_map()));
    }
    if lower.len() < 2 || !lower.is_char_boundary(1) {
        return Err(unknown());
    }
    let (head, tail) = lower.split_at(1);
    let index: usize = tail.parse().map_err(|_| unknown())?;
    match head {
        "t" => t_map(index).map(NamedMap::Expanding),
        "s" => s_map(index).map(NamedMap::Expanding),
        _ => Err(unknown()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use num_traits::One;

    #[test]
    fn every_member_is_markov_and_invariant() {
        for fam in [Family::T123, Family::S, Family::S1to6, Family::T1to6] {
            for t in fam.maps() {
                assert!(t.preserves_lebesgue().unwrap());
                let pf = t.pf_matrix().unwrap();
                assert!(pf.column_sums().iter().all(|s| s.is_one()));
            }
        }
    }

    #[test]
    fn names_resolve() {
        assert_eq!(by_name("T2").unwrap(), NamedMap::Expanding(t_map(2).unwrap()));
        assert_eq!(by_name("s").unwrap(), NamedMap::Expanding(seed_map()));
        assert_eq!(by_name("rho").unwrap(), NamedMap::Rotation(rho()));
        assert!(by_name("T7").is_err());
        assert!(by_name("Q1").is_err());
        assert!(by_name("").is_err());
    }

    #[test]
    fn family_bounds() {
        assert!(Family::S.member(2).is_err());
        assert!(Family::T123.member(0).is_err());
        assert_eq!("s1-s6".parse::<Family>().unwrap(), Family::S1to6);
    }
}
