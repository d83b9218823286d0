//! Two-sided symbol sequences that select cocycle generators.
//!
//! Symbols are 1-based (`1..=K`). A driver is queried at arbitrary integer
//! indices; the shift `σᵏω` is a base-index offset `k`.

use std::sync::{Arc, RwLock};

use num_bigint::BigUint;
use num_traits::{One, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub type Symbol = usize;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum DriverError {
    #[error("periodic word is empty")]
    EmptyWord,
    #[error("symbol {symbol} outside alphabet 1..={alphabet}")]
    SymbolOutOfRange { symbol: Symbol, alphabet: usize },
    #[error("index {index} outside the explicit range {start}..{end}")]
    OutOfRange { index: i64, start: i64, end: i64 },
    #[error("anchor {anchor} is in class {anchor_class}, but the bit at the anchor is {bit}")]
    AnchorMismatch {
        anchor: Symbol,
        anchor_class: u8,
        bit: u8,
    },
    #[error("symbol {symbol} has {count} {direction} in class {class}")]
    NondeterministicLift {
        symbol: Symbol,
        class: u8,
        count: usize,
        direction: &'static str,
    },
    #[error("transition matrix is not square or does not match the class table")]
    BadShape,
    #[error("alphabet must be nonempty")]
    EmptyAlphabet,
}

/// First `n` bits of the fractional part of π.
///
/// Machin's formula in fixed point with 64 guard bits.
pub fn pi_fraction_bits(n: usize) -> Vec<u8> {
    if n == 0 {
        return Vec::new();
    }
    let precision = n + 64;
    let one = BigUint::one() << precision;
    let atan_inv = |x: u32| -> BigUint {
        // atan(1/x) = Σ (−1)^k / ((2k+1) x^{2k+1}); alternating sums kept split
        let x2 = BigUint::from(x) * BigUint::from(x);
        let mut power = &one / BigUint::from(x);
        let mut plus = BigUint::zero();
        let mut minus = BigUint::zero();
        let mut k: u64 = 0;
        while !power.is_zero() {
            let term = &power / BigUint::from(2 * k + 1);
            if k % 2 == 0 {
                plus += term;
            } else {
                minus += term;
            }
            power /= &x2;
            k += 1;
        }
        plus - minus
    };
    let pi = atan_inv(5) * BigUint::from(16u32) - atan_inv(239) * BigUint::from(4u32);
    let frac = pi % &one;
    (1..=n)
        .map(|i| u8::from(frac.bit((precision - i) as u64)))
        .collect()
}

/// Index-to-bit function over ℤ.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum BitSource {
    /// Bit `i` is fractional digit number `i − first_index + 1` of π,
    /// optionally complemented; indices before `first_index` read 0.
    PiFraction { first_index: i64, complement: bool },
    /// Bits listed from `origin`; 0 outside the list.
    Listed { bits: Vec<u8>, origin: i64 },
}

impl BitSource {
    /// Highest index that must be materialised to read `index`.
    fn digits_needed(&self, index: i64) -> usize {
        match self {
            BitSource::PiFraction { first_index, .. } => {
                (index - first_index + 1).max(0) as usize
            }
            BitSource::Listed { .. } => 0,
        }
    }

    fn read(&self, index: i64, digits: &[u8]) -> u8 {
        match self {
            BitSource::PiFraction {
                first_index,
                complement,
            } => {
                if index < *first_index {
                    return 0;
                }
                let bit = digits[(index - first_index) as usize];
                if *complement {
                    1 - bit
                } else {
                    bit
                }
            }
            BitSource::Listed { bits, origin } => {
                let k = index - origin;
                if k < 0 || k as usize >= bits.len() {
                    0
                } else {
                    bits[k as usize]
                }
            }
        }
    }

    /// Reads `index` without a shared digit cache.
    pub fn bit(&self, index: i64) -> u8 {
        let digits = pi_fraction_bits(self.digits_needed(index));
        self.read(index, &digits)
    }
}

/// Allowed transitions `E` together with the two-class factor map `h`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ShiftRule {
    allowed: Vec<Vec<bool>>,
    classes: Vec<u8>,
}

impl ShiftRule {
    pub fn new(allowed: Vec<Vec<bool>>, classes: Vec<u8>) -> Result<Self, DriverError> {
        let k = classes.len();
        if k == 0 {
            return Err(DriverError::EmptyAlphabet);
        }
        if allowed.len() != k || allowed.iter().any(|row| row.len() != k) {
            return Err(DriverError::BadShape);
        }
        Ok(Self { allowed, classes })
    }

    /// The six-symbol shift with `h = 0` on `{1,2,3}` and `h = 1` on `{4,5,6}`.
    pub fn six_symbol() -> Self {
        let e = [
            [0, 1, 0, 0, 1, 0],
            [0, 0, 1, 0, 0, 1],
            [1, 0, 0, 1, 0, 0],
            [0, 0, 1, 0, 0, 1],
            [1, 0, 0, 1, 0, 0],
            [0, 1, 0, 0, 1, 0],
        ];
        let allowed = e
            .iter()
            .map(|row| row.iter().map(|&v| v == 1).collect())
            .collect();
        Self::new(allowed, vec![0, 0, 0, 1, 1, 1]).expect("six-symbol rule is well formed")
    }

    pub fn alphabet_size(&self) -> usize {
        self.classes.len()
    }

    fn check_symbol(&self, s: Symbol) -> Result<(), DriverError> {
        if (1..=self.alphabet_size()).contains(&s) {
            Ok(())
        } else {
            Err(DriverError::SymbolOutOfRange {
                symbol: s,
                alphabet: self.alphabet_size(),
            })
        }
    }

    /// `E_{from,to} = 1`.
    pub fn allows(&self, from: Symbol, to: Symbol) -> bool {
        from >= 1
            && to >= 1
            && from <= self.alphabet_size()
            && to <= self.alphabet_size()
            && self.allowed[from - 1][to - 1]
    }

    pub fn class_of(&self, s: Symbol) -> Result<u8, DriverError> {
        self.check_symbol(s)?;
        Ok(self.classes[s - 1])
    }

    pub fn h(&self, word: &[Symbol]) -> Result<Vec<u8>, DriverError> {
        word.iter().map(|&s| self.class_of(s)).collect()
    }

    fn candidates(&self, s: Symbol, class: u8, forward: bool) -> Vec<Symbol> {
        (1..=self.alphabet_size())
            .filter(|&t| self.classes[t - 1] == class)
            .filter(|&t| if forward { self.allows(s, t) } else { self.allows(t, s) })
            .collect()
    }

    /// Unique `t` in `class` with `E_{s,t} = 1`.
    pub fn successor(&self, s: Symbol, class: u8) -> Result<Symbol, DriverError> {
        self.check_symbol(s)?;
        self.unique(s, class, true)
    }

    /// Unique `t` in `class` with `E_{t,s} = 1`.
    pub fn predecessor(&self, s: Symbol, class: u8) -> Result<Symbol, DriverError> {
        self.check_symbol(s)?;
        self.unique(s, class, false)
    }

    fn unique(&self, s: Symbol, class: u8, forward: bool) -> Result<Symbol, DriverError> {
        let c = self.candidates(s, class, forward);
        if c.len() == 1 {
            Ok(c[0])
        } else {
            Err(DriverError::NondeterministicLift {
                symbol: s,
                class,
                count: c.len(),
                direction: if forward { "successors" } else { "predecessors" },
            })
        }
    }

    /// Every symbol has exactly one successor and one predecessor per class.
    pub fn check_deterministic(&self) -> Result<(), DriverError> {
        let mut classes = self.classes.clone();
        classes.sort_unstable();
        classes.dedup();
        for s in 1..=self.alphabet_size() {
            for &class in &classes {
                self.successor(s, class)?;
                self.predecessor(s, class)?;
            }
        }
        Ok(())
    }

    pub fn is_admissible(&self, word: &[Symbol]) -> bool {
        word.windows(2).all(|w| self.allows(w[0], w[1]))
    }
}

/// True iff every adjacent pair of `word` is allowed by `rule`.
pub fn check_admissible(rule: &ShiftRule, word: &[Symbol]) -> bool {
    rule.is_admissible(word)
}

#[derive(Debug, Default, Clone)]
struct LiftMemo {
    digits: Vec<u8>,
    forward: Vec<Symbol>,
    backward: Vec<Symbol>,
}

/// The unique point `ω` of the shift with `h(ω)_i = bit(i + shift)` and
/// `ω_0 = anchor`.
#[derive(Debug, Clone)]
pub struct SftLift {
    rule: ShiftRule,
    bits: BitSource,
    shift: i64,
    anchor: Symbol,
    memo: Arc<RwLock<LiftMemo>>,
}

impl PartialEq for SftLift {
    fn eq(&self, other: &Self) -> bool {
        self.rule == other.rule
            && self.bits == other.bits
            && self.shift == other.shift
            && self.anchor == other.anchor
    }
}

impl SftLift {
    pub fn rule(&self) -> &ShiftRule {
        &self.rule
    }

    pub fn bits(&self) -> &BitSource {
        &self.bits
    }

    pub fn shift(&self) -> i64 {
        self.shift
    }

    pub fn anchor(&self) -> Symbol {
        self.anchor
    }

    fn ensure_digits(memo: &mut LiftMemo, bits: &BitSource, index: i64) {
        let need = bits.digits_needed(index);
        if need > memo.digits.len() {
            memo.digits = pi_fraction_bits((need * 2).max(256));
        }
    }

    fn symbol(&self, i: i64) -> Result<Symbol, DriverError> {
        {
            let memo = self.memo.read().expect("lift memo poisoned");
            if i >= 0 && (i as usize) < memo.forward.len() {
                return Ok(memo.forward[i as usize]);
            }
            if i < 0 && ((-i - 1) as usize) < memo.backward.len() {
                return Ok(memo.backward[(-i - 1) as usize]);
            }
        }
        let mut memo = self.memo.write().expect("lift memo poisoned");
        if i >= 0 {
            Self::ensure_digits(&mut memo, &self.bits, i + self.shift);
            while memo.forward.len() <= i as usize {
                let k = memo.forward.len() as i64;
                let prev = *memo.forward.last().unwrap_or(&self.anchor);
                let class = self.bits.read(k + self.shift, &memo.digits);
                let next = if k == 0 {
                    self.anchor
                } else {
                    self.rule.successor(prev, class)?
                };
                memo.forward.push(next);
            }
            Ok(memo.forward[i as usize])
        } else {
            let depth = (-i) as usize;
            Self::ensure_digits(&mut memo, &self.bits, self.shift - 1);
            while memo.backward.len() < depth {
                let k = -(memo.backward.len() as i64) - 1;
                let next = *memo.backward.last().unwrap_or(&self.anchor);
                let class = self.bits.read(k + self.shift, &memo.digits);
                let prev = self.rule.predecessor(next, class)?;
                memo.backward.push(prev);
            }
            Ok(memo.backward[depth - 1])
        }
    }
}

/// Lifts a bit sequence through `h` to a point of the shift.
pub fn lift_h_inverse(
    rule: ShiftRule,
    bits: BitSource,
    shift: i64,
    anchor: Symbol,
) -> Result<SftLift, DriverError> {
    rule.check_deterministic()?;
    let anchor_class = rule.class_of(anchor)?;
    let bit = bits.bit(shift);
    if anchor_class != bit {
        return Err(DriverError::AnchorMismatch {
            anchor,
            anchor_class,
            bit,
        });
    }
    Ok(SftLift {
        rule,
        bits,
        shift,
        anchor,
        memo: Arc::new(RwLock::new(LiftMemo::default())),
    })
}

/// A two-sided symbol sequence.
#[derive(Debug, Clone, PartialEq)]
pub enum Driver {
    Periodic(Vec<Symbol>),
    Sft(SftLift),
    /// Finite explicit segment starting at `origin`.
    Explicit { symbols: Vec<Symbol>, origin: i64 },
    /// i.i.d. uniform symbols obtained by hashing `(seed, index)`.
    Iid { alphabet: usize, seed: u64 },
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl Driver {
    pub fn periodic(word: Vec<Symbol>) -> Result<Self, DriverError> {
        if word.is_empty() {
            return Err(DriverError::EmptyWord);
        }
        if let Some(&s) = word.iter().find(|&&s| s == 0) {
            return Err(DriverError::SymbolOutOfRange {
                symbol: s,
                alphabet: word.iter().copied().max().unwrap_or(0),
            });
        }
        Ok(Driver::Periodic(word))
    }

    pub fn explicit(symbols: Vec<Symbol>, origin: i64) -> Result<Self, DriverError> {
        if symbols.contains(&0) {
            return Err(DriverError::SymbolOutOfRange {
                symbol: 0,
                alphabet: symbols.iter().copied().max().unwrap_or(0),
            });
        }
        Ok(Driver::Explicit { symbols, origin })
    }

    pub fn iid(alphabet: usize, seed: u64) -> Result<Self, DriverError> {
        if alphabet == 0 {
            return Err(DriverError::EmptyAlphabet);
        }
        Ok(Driver::Iid { alphabet, seed })
    }

    /// The π-digit sequence `ω*` on the six-symbol shift.
    pub fn omega_star() -> Self {
        Self::pi_sft(120, 1, true, 1).expect("default lift is consistent")
    }

    pub fn pi_sft(
        shift: i64,
        anchor: Symbol,
        complement: bool,
        first_index: i64,
    ) -> Result<Self, DriverError> {
        let bits = BitSource::PiFraction {
            first_index,
            complement,
        };
        lift_h_inverse(ShiftRule::six_symbol(), bits, shift, anchor).map(Driver::Sft)
    }

    /// Largest symbol the driver can emit.
    pub fn alphabet_size(&self) -> usize {
        match self {
            Driver::Periodic(word) => word.iter().copied().max().unwrap_or(0),
            Driver::Sft(lift) => lift.rule.alphabet_size(),
            Driver::Explicit { symbols, .. } => symbols.iter().copied().max().unwrap_or(0),
            Driver::Iid { alphabet, .. } => *alphabet,
        }
    }

    pub fn period(&self) -> Option<usize> {
        match self {
            Driver::Periodic(word) => Some(word.len()),
            _ => None,
        }
    }

    pub fn symbol_at(&self, i: i64) -> Result<Symbol, DriverError> {
        match self {
            Driver::Periodic(word) => Ok(word[i.rem_euclid(word.len() as i64) as usize]),
            Driver::Sft(lift) => lift.symbol(i),
            Driver::Explicit { symbols, origin } => {
                let k = i - origin;
                if k < 0 || k as usize >= symbols.len() {
                    Err(DriverError::OutOfRange {
                        index: i,
                        start: *origin,
                        end: origin + symbols.len() as i64,
                    })
                } else {
                    Ok(symbols[k as usize])
                }
            }
            Driver::Iid { alphabet, seed } => {
                let h = splitmix64(splitmix64(*seed) ^ (i as u64));
                Ok(1 + (h % *alphabet as u64) as usize)
            }
        }
    }

    /// Symbols at `start, start+1, …, start+len−1`.
    pub fn window(&self, start: i64, len: usize) -> Result<Vec<Symbol>, DriverError> {
        (0..len as i64).map(|k| self.symbol_at(start + k)).collect()
    }

    pub fn to_spec(&self) -> DriverSpec {
        match self {
            Driver::Periodic(word) => DriverSpec::Periodic { word: word.clone() },
            Driver::Sft(lift) => match &lift.bits {
                BitSource::PiFraction {
                    first_index,
                    complement,
                } if lift.rule == ShiftRule::six_symbol() => DriverSpec::PiSft {
                    shift: lift.shift,
                    anchor: lift.anchor,
                    complement: *complement,
                    first_index: *first_index,
                },
                _ => {
                    let window = self.window(-64, 128).unwrap_or_default();
                    DriverSpec::Explicit {
                        symbols: window,
                        origin: -64,
                    }
                }
            },
            Driver::Explicit { symbols, origin } => DriverSpec::Explicit {
                symbols: symbols.clone(),
                origin: *origin,
            },
            Driver::Iid { alphabet, seed } => DriverSpec::Iid {
                alphabet: *alphabet,
                seed: *seed,
            },
        }
    }

    pub fn from_spec(spec: &DriverSpec) -> Result<Self, DriverError> {
        match spec {
            DriverSpec::Periodic { word } => Self::periodic(word.clone()),
            DriverSpec::PiSft {
                shift,
                anchor,
                complement,
                first_index,
            } => Self::pi_sft(*shift, *anchor, *complement, *first_index),
            DriverSpec::Explicit { symbols, origin } => Self::explicit(symbols.clone(), *origin),
            DriverSpec::Iid { alphabet, seed } => Self::iid(*alphabet, *seed),
        }
    }
}

fn default_shift() -> i64 {
    120
}
fn default_anchor() -> Symbol {
    1
}
fn default_true() -> bool {
    true
}
fn default_first_index() -> i64 {
    1
}

/// JSON form of a driver.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DriverSpec {
    Periodic {
        word: Vec<Symbol>,
    },
    PiSft {
        #[serde(default = "default_shift")]
        shift: i64,
        #[serde(default = "default_anchor")]
        anchor: Symbol,
        #[serde(default = "default_true")]
        complement: bool,
        #[serde(default = "default_first_index")]
        first_index: i64,
    },
    Explicit {
        symbols: Vec<Symbol>,
        #[serde(default)]
        origin: i64,
    },
    Iid {
        alphabet: usize,
        seed: u64,
    },
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pi_prefix() {
        let listed = [
            0, 0, 1, 0, 0, 1, 0, 0, 0, 0, 1, 1, 1, 1, 1, 1, 0, 1, 1, 0, 1, 0, 1, 0, 1, 0, 0,
        ];
        assert_eq!(pi_fraction_bits(27), listed);
        assert_eq!(pi_fraction_bits(6), vec![0, 0, 1, 0, 0, 1]);
        assert!(pi_fraction_bits(0).is_empty());
    }

    #[test]
    fn pi_bits_are_prefix_stable() {
        let long = pi_fraction_bits(600);
        assert_eq!(&long[..300], &pi_fraction_bits(300)[..]);
        // 0x243F6A8885A308D3 = first 64 fractional bits
        let word = long[..64].iter().fold(0u64, |acc, &b| (acc << 1) | b as u64);
        assert_eq!(word, 0x243F_6A88_85A3_08D3);
    }

    #[test]
    fn periodic_indexing() {
        let d = Driver::periodic(vec![1, 2, 3]).unwrap();
        assert_eq!(d.symbol_at(4).unwrap(), 2);
        assert_eq!(d.symbol_at(-1).unwrap(), 3);
        assert!(Driver::periodic(vec![]).is_err());
    }

    #[test]
    fn explicit_range() {
        let d = Driver::explicit(vec![2, 1], -1).unwrap();
        assert_eq!(d.symbol_at(-1).unwrap(), 2);
        assert!(matches!(d.symbol_at(1), Err(DriverError::OutOfRange { .. })));
    }

    #[test]
    fn rule_admissibility() {
        let rule = ShiftRule::six_symbol();
        assert!(check_admissible(&rule, &[1, 2, 3, 1]));
        assert!(!check_admissible(&rule, &[1, 1]));
        assert!(check_admissible(&rule, &[]));
        rule.check_deterministic().unwrap();
    }

    #[test]
    fn perturbed_rule_is_nondeterministic() {
        let mut allowed: Vec<Vec<bool>> = (0..6)
            .map(|i| (0..6).map(|j| ShiftRule::six_symbol().allows(i + 1, j + 1)).collect())
            .collect();
        allowed[0][2] = true;
        let rule = ShiftRule::new(allowed, vec![0, 0, 0, 1, 1, 1]).unwrap();
        assert!(matches!(
            rule.check_deterministic(),
            Err(DriverError::NondeterministicLift { .. })
        ));
    }

    #[test]
    fn anchor_mismatch() {
        assert!(matches!(
            Driver::pi_sft(120, 4, true, 1),
            Err(DriverError::AnchorMismatch { .. })
        ));
    }

    #[test]
    fn omega_star_segment() {
        let d = Driver::omega_star();
        assert_eq!(
            d.window(-9, 19).unwrap(),
            vec![5, 4, 6, 2, 3, 1, 5, 4, 3, 1, 5, 1, 5, 4, 6, 2, 6, 5, 1]
        );
    }

    #[test]
    fn omega_star_far_past() {
        let d = Driver::omega_star();
        let w = d.window(-400, 6).unwrap();
        assert!(w.windows(2).all(|p| p[1] == p[0] % 3 + 1));
        // padding meets the first digit: ..., 1, 2, 3, 4, ...
        let bits = BitSource::PiFraction {
            first_index: 1,
            complement: true,
        };
        let start = 1 - 120;
        assert_eq!(bits.bit(1), 1);
        assert!(d.symbol_at(start).unwrap() >= 4);
        assert!(d.symbol_at(start - 1).unwrap() <= 3);
    }

    #[test]
    fn iid_is_deterministic_and_covers_alphabet() {
        let d = Driver::iid(3, 11).unwrap();
        let a = d.window(-50, 100).unwrap();
        assert_eq!(a, d.window(-50, 100).unwrap());
        for s in 1..=3 {
            assert!(a.contains(&s));
        }
        assert_ne!(a, Driver::iid(3, 12).unwrap().window(-50, 100).unwrap());
    }

    #[test]
    fn spec_round_trip() {
        let json = r#"{"type":"pi_sft","shift":120,"anchor":1}"#;
        let spec: DriverSpec = serde_json::from_str(json).unwrap();
        let d = Driver::from_spec(&spec).unwrap();
        assert_eq!(d, Driver::omega_star());
        let p: DriverSpec = serde_json::from_str(r#"{"type":"periodic","word":[1,2,3]}"#).unwrap();
        assert_eq!(Driver::from_spec(&p).unwrap().period(), Some(3));
        let e: DriverSpec =
            serde_json::from_str(r#"{"type":"explicit","symbols":[1,2],"origin":0}"#).unwrap();
        assert_eq!(Driver::from_spec(&e).unwrap().to_spec(), e);
    }
}
