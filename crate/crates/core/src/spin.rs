//! Spin configurations of a periodic spin-1/2 chain in the σᶻ basis.
//!
//! A configuration is stored as a packed bit string: site `i` is bit `i`,
//! `1` meaning spin up (σ = +1) and `0` spin down (σ = −1). The ±1 view is
//! derived on read.

use std::collections::HashMap;
use std::fmt;

use crate::error::{Error, Result};

/// Largest chain supported by the packed representation.
pub const MAX_SITES: usize = 256;
const WORDS: usize = MAX_SITES / 64;

/// Largest chain [`SectorBasis::enumerate`] accepts.
pub const MAX_ENUMERATED_SITES: usize = 24;

#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SpinConfig {
    words: [u64; WORDS],
    len: u16,
}

impl SpinConfig {
    /// All spins down.
    pub fn all_down(len: usize) -> Result<Self> {
        if !(2..=MAX_SITES).contains(&len) {
            return Err(Error::InvalidLength(len));
        }
        if len == 2 {
            log::warn!("L = 2 under periodic boundaries: both bonds coincide");
        }
        Ok(Self {
            words: [0; WORDS],
            len: len as u16,
        })
    }

    pub fn all_up(len: usize) -> Result<Self> {
        let mut c = Self::all_down(len)?;
        for i in 0..len {
            c.set(i, true);
        }
        Ok(c)
    }

    /// Builds a configuration from the low `len` bits of `code` (site i = bit i).
    pub fn from_code(code: u64, len: usize) -> Result<Self> {
        if len > 64 {
            return Err(Error::InvalidLength(len));
        }
        let mut c = Self::all_down(len)?;
        c.words[0] = if len == 64 { code } else { code & ((1u64 << len) - 1) };
        Ok(c)
    }

    /// Builds a configuration from σ values; anything positive is spin up.
    pub fn from_spins(spins: &[f64]) -> Result<Self> {
        let mut c = Self::all_down(spins.len())?;
        for (i, &s) in spins.iter().enumerate() {
            c.set(i, s > 0.0);
        }
        Ok(c)
    }

    /// Parses a string of `u`/`d` (or `↑`/`↓`, `1`/`0`) characters.
    pub fn parse(s: &str) -> Result<Self> {
        let bits: Vec<bool> = s
            .chars()
            .map(|ch| match ch {
                'u' | 'U' | '↑' | '1' | '+' => Ok(true),
                'd' | 'D' | '↓' | '0' | '-' => Ok(false),
                other => Err(Error::Parse(format!("unexpected spin character {other:?}"))),
            })
            .collect::<Result<_>>()?;
        let mut c = Self::all_down(bits.len())?;
        for (i, b) in bits.into_iter().enumerate() {
            c.set(i, b);
        }
        Ok(c)
    }

    /// Néel state with up spins on the even sites.
    pub fn neel(len: usize) -> Result<Self> {
        let mut c = Self::all_down(len)?;
        for i in (0..len).step_by(2) {
            c.set(i, true);
        }
        Ok(c)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.len as usize
    }

    #[inline]
    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    #[inline]
    pub fn is_up(&self, site: usize) -> bool {
        debug_assert!(site < self.len());
        (self.words[site >> 6] >> (site & 63)) & 1 == 1
    }

    /// σᵢ ∈ {−1, +1}.
    #[inline]
    pub fn sigma(&self, site: usize) -> f64 {
        if self.is_up(site) {
            1.0
        } else {
            -1.0
        }
    }

    #[inline]
    fn set(&mut self, site: usize, up: bool) {
        let mask = 1u64 << (site & 63);
        if up {
            self.words[site >> 6] |= mask;
        } else {
            self.words[site >> 6] &= !mask;
        }
    }

    #[inline]
    pub(crate) fn toggle(&mut self, site: usize) {
        self.words[site >> 6] ^= 1u64 << (site & 63);
    }

    /// Integer encoding for chains of at most 64 sites.
    pub fn code(&self) -> u64 {
        self.words[0]
    }

    /// Writes the σ values into `out` (which must hold `len` entries).
    pub fn write_spins(&self, out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.len()) {
            *o = self.sigma(i);
        }
    }

    pub fn spins(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.len()];
        self.write_spins(&mut v);
        v
    }

    fn check_site(&self, site: usize) -> Result<()> {
        if site >= self.len() {
            Err(Error::SiteOutOfRange {
                site,
                len: self.len(),
            })
        } else {
            Ok(())
        }
    }

    pub fn flip(&self, site: usize) -> Result<Self> {
        self.check_site(site)?;
        let mut c = *self;
        c.toggle(site);
        Ok(c)
    }

    /// Swaps two opposite spins; the total magnetization is unchanged.
    pub fn exchange(&self, i: usize, j: usize) -> Result<Self> {
        self.check_site(i)?;
        self.check_site(j)?;
        if self.is_up(i) == self.is_up(j) {
            return Err(Error::EqualSpins { i, j });
        }
        let mut c = *self;
        c.toggle(i);
        c.toggle(j);
        Ok(c)
    }

    /// Mirror image: site i goes to site L−1−i.
    pub fn reflect(&self) -> Self {
        let n = self.len();
        let mut c = *self;
        c.words = [0; WORDS];
        for i in 0..n {
            if self.is_up(i) {
                c.set(n - 1 - i, true);
            }
        }
        c
    }

    pub fn up_count(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Σᵢ σᵢ.
    pub fn magnetization(&self) -> i64 {
        2 * self.up_count() as i64 - self.len() as i64
    }

    /// Number of up spins on sublattice A (the even sites).
    pub fn sublattice_a_up_count(&self) -> usize {
        const EVEN: u64 = 0x5555_5555_5555_5555;
        self.words.iter().map(|w| (w & EVEN).count_ones() as usize).sum()
    }

    /// Marshall sign (−1)^N_A.
    pub fn msr_sign(&self) -> f64 {
        if self.sublattice_a_up_count().is_multiple_of(2) {
            1.0
        } else {
            -1.0
        }
    }
}

impl fmt::Debug for SpinConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "SpinConfig({self})")
    }
}

impl fmt::Display for SpinConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for i in 0..self.len() {
            f.write_str(if self.is_up(i) { "↑" } else { "↓" })?;
        }
        Ok(())
    }
}

/// Binomial coefficient, exact for the sizes used here.
pub fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

/// A complete, ordered list of basis states, either the full 2^L space or the
/// zero-magnetization sector.
#[derive(Clone, Debug)]
pub struct SectorBasis {
    len: usize,
    constrained: bool,
    states: Vec<SpinConfig>,
    index: HashMap<u64, usize>,
}

impl SectorBasis {
    pub fn enumerate(len: usize, constrained: bool) -> Result<Self> {
        if len > MAX_ENUMERATED_SITES {
            return Err(Error::TooLarge {
                len,
                max: MAX_ENUMERATED_SITES,
            });
        }
        if constrained && len % 2 == 1 {
            return Err(Error::OddSector(len));
        }
        // validates the length
        SpinConfig::all_down(len)?;
        let states: Vec<SpinConfig> = if constrained {
            let half = (len / 2) as u32;
            let mut v = Vec::with_capacity(binomial(len as u64, len as u64 / 2) as usize);
            if half == 0 {
                v.push(0u64);
            } else {
                // Gosper's hack walks same-popcount codes in increasing order.
                let mut x: u64 = (1u64 << half) - 1;
                let limit = 1u64 << len;
                while x < limit {
                    v.push(x);
                    let c = x & x.wrapping_neg();
                    let r = x + c;
                    x = (((r ^ x) >> 2) / c) | r;
                }
            }
            v.into_iter()
                .map(|code| SpinConfig::from_code(code, len))
                .collect::<Result<_>>()?
        } else {
            (0..(1u64 << len))
                .map(|code| SpinConfig::from_code(code, len))
                .collect::<Result<_>>()?
        };
        let index = states
            .iter()
            .enumerate()
            .map(|(i, s)| (s.code(), i))
            .collect();
        Ok(Self {
            len,
            constrained,
            states,
            index,
        })
    }

    pub fn len_sites(&self) -> usize {
        self.len
    }

    pub fn is_constrained(&self) -> bool {
        self.constrained
    }

    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[SpinConfig] {
        &self.states
    }

    pub fn state(&self, i: usize) -> SpinConfig {
        self.states[i]
    }

    /// Ordinal of `c`, or `None` when `c` lies outside the basis.
    pub fn index_of(&self, c: &SpinConfig) -> Option<usize> {
        if c.len() != self.len {
            return None;
        }
        self.index.get(&c.code()).copied()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn flip_examples() {
        let c = SpinConfig::parse("uuuu").unwrap();
        let f = c.flip(2).unwrap();
        assert_eq!(f, SpinConfig::parse("uudu").unwrap());
        assert_eq!(f.flip(2).unwrap(), c);
        assert_eq!(c.magnetization() - f.magnetization(), 2);
        assert!(c.flip(4).is_err());
    }

    #[test]
    fn exchange_examples() {
        let c = SpinConfig::parse("udud").unwrap();
        let e = c.exchange(0, 1).unwrap();
        assert_eq!(e, SpinConfig::parse("duud").unwrap());
        assert_eq!(e.magnetization(), c.magnetization());
        assert_eq!(e.exchange(0, 1).unwrap(), c);
        assert!(matches!(c.exchange(0, 2), Err(Error::EqualSpins { .. })));
        assert!(c.exchange(0, 9).is_err());
    }

    #[test]
    fn reflect_examples() {
        let c = SpinConfig::parse("uudd").unwrap();
        assert_eq!(c.reflect(), SpinConfig::parse("dduu").unwrap());
        assert_eq!(c.reflect().reflect(), c);
        let p = SpinConfig::parse("uddu").unwrap();
        assert_eq!(p.reflect(), p);
    }

    #[test]
    fn magnetization_and_sublattice() {
        let cases = [("uuuu", 4, 2), ("udud", 0, 2), ("dddd", -4, 0), ("dudu", 0, 0)];
        for (s, m, na) in cases {
            let c = SpinConfig::parse(s).unwrap();
            assert_eq!(c.magnetization(), m, "{s}");
            assert_eq!(c.sublattice_a_up_count(), na, "{s}");
        }
        assert_eq!(SpinConfig::parse("udud").unwrap().msr_sign(), 1.0);
        assert_eq!(SpinConfig::parse("uudd").unwrap().msr_sign(), -1.0);
        assert_eq!(SpinConfig::parse("dddd").unwrap().msr_sign(), 1.0);
    }

    #[test]
    fn large_chains_cross_word_boundaries() {
        let c = SpinConfig::neel(100).unwrap();
        assert_eq!(c.magnetization(), 0);
        assert_eq!(c.sublattice_a_up_count(), 50);
        let r = c.reflect();
        assert!(!r.is_up(0) && r.is_up(99));
        assert_eq!(r.reflect(), c);
        assert!(SpinConfig::all_down(MAX_SITES + 1).is_err());
        assert!(SpinConfig::all_down(1).is_err());
    }

    #[test]
    fn sector_sizes() {
        assert_eq!(SectorBasis::enumerate(4, true).unwrap().dim(), 6);
        assert_eq!(SectorBasis::enumerate(4, false).unwrap().dim(), 16);
        // C(20,10) by the multiplicative formula in u128
        let c20: u128 = (1..=10u128).fold(1, |acc, i| acc * (10 + i) / i);
        assert_eq!(c20, 184_756);
        assert_eq!(SectorBasis::enumerate(20, true).unwrap().dim() as u128, c20);
        assert!(matches!(
            SectorBasis::enumerate(25, false),
            Err(Error::TooLarge { .. })
        ));
        assert!(matches!(
            SectorBasis::enumerate(7, true),
            Err(Error::OddSector(7))
        ));
    }

    #[test]
    fn sector_is_sorted_complete_and_balanced() {
        for len in [2usize, 4, 6, 8, 10] {
            let b = SectorBasis::enumerate(len, true).unwrap();
            assert_eq!(b.dim() as u64, binomial(len as u64, len as u64 / 2));
            assert!(b.states().windows(2).all(|w| w[0].code() < w[1].code()));
            assert!(b.states().iter().all(|s| s.magnetization() == 0));
            for (i, s) in b.states().iter().enumerate() {
                assert_eq!(b.index_of(s), Some(i));
            }
        }
    }

    #[test]
    fn code_round_trip_exhaustive() {
        for len in 2..=10usize {
            for code in 0..(1u64 << len) {
                let c = SpinConfig::from_code(code, len).unwrap();
                assert_eq!(c.code(), code);
                assert_eq!(SpinConfig::from_spins(&c.spins()).unwrap(), c);
            }
        }
    }

    proptest! {
        #[test]
        fn moves_touch_only_named_sites(code in any::<u64>(), len in 2usize..=64, a in 0usize..64, b in 0usize..64) {
            let c = SpinConfig::from_code(code, len).unwrap();
            let (a, b) = (a % len, b % len);
            let f = c.flip(a).unwrap();
            for i in 0..len {
                prop_assert_eq!(f.is_up(i) != c.is_up(i), i == a);
            }
            if c.is_up(a) != c.is_up(b) {
                let e = c.exchange(a, b).unwrap();
                prop_assert_eq!(e.magnetization(), c.magnetization());
                for i in 0..len {
                    prop_assert_eq!(e.is_up(i) != c.is_up(i), i == a || i == b);
                }
            }
            prop_assert_eq!(c.reflect().reflect(), c);
        }
    }
}
