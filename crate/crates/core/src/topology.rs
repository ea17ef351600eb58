//! Trolley addressing hierarchy and the tag list.
//!
//! The trolley carries 4 multiplexers, 8 antenna ports per multiplexer,
//! 4 fruit slots per antenna and 3 sensing tags per fruit (one basal tag
//! `A`, two eccentric tags `B` and `C`): 384 tags for 128 fruits. Each
//! tag interacts only with the antenna of its own (mux, port) pair.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MUX_COUNT: u8 = 4;
pub const PORTS_PER_MUX: u8 = 8;
pub const SLOTS_PER_ANTENNA: u8 = 4;
pub const FRUIT_COUNT: u16 = 128;
pub const TAG_COUNT: usize = 384;

/// Position of a sensing tag on the fruit: `A` is the basal tag, `B` and
/// `C` sit slightly eccentric toward the equatorial region.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub enum TagPosition {
    A,
    B,
    C,
}

impl TagPosition {
    pub const ALL: [TagPosition; 3] = [TagPosition::A, TagPosition::B, TagPosition::C];

    pub fn index(self) -> u8 {
        match self {
            TagPosition::A => 0,
            TagPosition::B => 1,
            TagPosition::C => 2,
        }
    }

    pub fn is_basal(self) -> bool {
        self == TagPosition::A
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "A" => Ok(TagPosition::A),
            "B" => Ok(TagPosition::B),
            "C" => Ok(TagPosition::C),
            other => Err(Error::Data(format!("unknown tag position {other:?}"))),
        }
    }
}

impl fmt::Display for TagPosition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TagPosition::A => write!(f, "A"),
            TagPosition::B => write!(f, "B"),
            TagPosition::C => write!(f, "C"),
        }
    }
}

/// One fruit of the trolley, numbered 1..=128 in scan order.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FruitId(u16);

impl FruitId {
    pub fn new(ordinal: u16) -> Result<Self> {
        if (1..=FRUIT_COUNT).contains(&ordinal) {
            Ok(FruitId(ordinal))
        } else {
            Err(Error::Data(format!(
                "fruit ordinal {ordinal} outside 1..={FRUIT_COUNT}"
            )))
        }
    }

    pub fn ordinal(self) -> u16 {
        self.0
    }

    /// Address of one of this fruit's three tags.
    pub fn address(self, position: TagPosition) -> TagAddress {
        let zero = self.0 - 1;
        let slot = (zero % u16::from(SLOTS_PER_ANTENNA)) as u8 + 1;
        let antenna = zero / u16::from(SLOTS_PER_ANTENNA);
        let port = (antenna % u16::from(PORTS_PER_MUX)) as u8 + 1;
        let mux = (antenna / u16::from(PORTS_PER_MUX)) as u8 + 1;
        TagAddress {
            mux,
            port,
            slot,
            position,
        }
    }
}

impl fmt::Display for FruitId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// The (mux, antenna port, fruit slot, tag position) coordinate of one tag.
#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Debug, Serialize, Deserialize)]
pub struct TagAddress {
    mux: u8,
    port: u8,
    slot: u8,
    position: TagPosition,
}

impl TagAddress {
    pub fn new(mux: u8, port: u8, slot: u8, position: TagPosition) -> Result<Self> {
        if (1..=MUX_COUNT).contains(&mux)
            && (1..=PORTS_PER_MUX).contains(&port)
            && (1..=SLOTS_PER_ANTENNA).contains(&slot)
        {
            Ok(TagAddress {
                mux,
                port,
                slot,
                position,
            })
        } else {
            Err(Error::Address { mux, port, slot })
        }
    }

    pub fn mux(self) -> u8 {
        self.mux
    }

    pub fn port(self) -> u8 {
        self.port
    }

    pub fn slot(self) -> u8 {
        self.slot
    }

    pub fn position(self) -> TagPosition {
        self.position
    }

    /// The (mux, port) pair identifying the only antenna this tag talks to.
    pub fn antenna(self) -> (u8, u8) {
        (self.mux, self.port)
    }

    /// The fruit this tag touches. Positions A, B and C of the same slot
    /// map to the same fruit.
    pub fn fruit(self) -> FruitId {
        let ordinal = (u16::from(self.mux - 1) * u16::from(PORTS_PER_MUX)
            + u16::from(self.port - 1))
            * u16::from(SLOTS_PER_ANTENNA)
            + u16::from(self.slot);
        FruitId(ordinal)
    }

    /// Dense index 0..384 following scan order; used for seeding.
    pub fn code(self) -> u64 {
        let fruit = u64::from(self.fruit().0 - 1);
        fruit * 3 + u64::from(self.position.index())
    }

    /// Synthetic EPC-96 identifier (24 hex characters) derived from the
    /// address; stable join key between the tag list and the scan logs.
    pub fn epc(self) -> String {
        let fruit = self.fruit().0;
        format!(
            "E2801160{:02X}{:02X}{:02X}{:02X}{:04X}0000",
            self.mux,
            self.port,
            self.slot,
            self.position.index(),
            fruit
        )
    }
}

impl fmt::Display for TagAddress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "M{}P{}S{}{}",
            self.mux, self.port, self.slot, self.position
        )
    }
}

/// All 384 addresses in scan order: mux ascending, then antenna port,
/// then fruit slot, then tag position A, B, C.
pub fn enumerate_addresses() -> Vec<TagAddress> {
    let mut out = Vec::with_capacity(TAG_COUNT);
    for mux in 1..=MUX_COUNT {
        for port in 1..=PORTS_PER_MUX {
            for slot in 1..=SLOTS_PER_ANTENNA {
                for position in TagPosition::ALL {
                    out.push(TagAddress {
                        mux,
                        port,
                        slot,
                        position,
                    });
                }
            }
        }
    }
    out
}

/// One row of the tag list.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TagEntry {
    pub address: TagAddress,
    pub fruit: FruitId,
    pub epc: String,
}

/// The tag list binding every tag to its fruit and its EPC identifier.
/// Immutable after construction.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct TagList {
    entries: Vec<TagEntry>,
}

impl TagList {
    /// The standard full-trolley list in scan order.
    pub fn standard() -> Self {
        let entries = enumerate_addresses()
            .into_iter()
            .map(|address| TagEntry {
                address,
                fruit: address.fruit(),
                epc: address.epc(),
            })
            .collect();
        TagList { entries }
    }

    pub fn from_entries(entries: Vec<TagEntry>) -> Result<Self> {
        let list = TagList { entries };
        list.validate()?;
        Ok(list)
    }

    pub fn entries(&self) -> &[TagEntry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn contains(&self, address: TagAddress) -> bool {
        self.entries.iter().any(|e| e.address == address)
    }

    /// Checks the structural invariants: no duplicate addresses, fruit
    /// consistent with the address, exactly 3 entries per listed fruit.
    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        let mut per_fruit = std::collections::BTreeMap::<u16, u8>::new();
        for e in &self.entries {
            if !seen.insert(e.address) {
                return Err(Error::Data(format!("duplicate tag address {}", e.address)));
            }
            if e.address.fruit() != e.fruit {
                return Err(Error::Data(format!(
                    "tag {} bound to fruit {} but addresses fruit {}",
                    e.address,
                    e.fruit,
                    e.address.fruit()
                )));
            }
            *per_fruit.entry(e.fruit.ordinal()).or_insert(0) += 1;
        }
        for (fruit, count) in per_fruit {
            if count != 3 {
                return Err(Error::Data(format!(
                    "fruit {fruit} has {count} tags, expected 3"
                )));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enumerates_the_full_address_space() {
        let addrs = enumerate_addresses();
        assert_eq!(addrs.len(), 384);
        let first = addrs[0];
        assert_eq!(
            (first.mux(), first.port(), first.slot(), first.position()),
            (1, 1, 1, TagPosition::A)
        );
        // bijection: no duplicates
        let unique: std::collections::BTreeSet<_> = addrs.iter().copied().collect();
        assert_eq!(unique.len(), 384);
        // scan order is lexicographic in (mux, port, slot, position)
        let mut sorted = addrs.clone();
        sorted.sort();
        assert_eq!(addrs, sorted);
    }

    #[test]
    fn three_tags_per_fruit() {
        let mut per_fruit = std::collections::BTreeMap::<u16, usize>::new();
        for a in enumerate_addresses() {
            *per_fruit.entry(a.fruit().ordinal()).or_insert(0) += 1;
        }
        assert_eq!(per_fruit.len(), 128);
        assert!(per_fruit.values().all(|&n| n == 3));
    }

    #[test]
    fn fruit_numbering_matches_the_slot_formula() {
        let f = |m, p, s, t| TagAddress::new(m, p, s, t).unwrap().fruit().ordinal();
        assert_eq!(f(1, 1, 1, TagPosition::A), 1);
        assert_eq!(f(4, 8, 4, TagPosition::C), 128);
        // ((2-1)*8 + (3-1))*4 + 2
        assert_eq!(f(2, 3, 2, TagPosition::B), 42);
    }

    #[test]
    fn basal_tags_enumerate_every_fruit_once() {
        let ordinals: Vec<u16> = enumerate_addresses()
            .into_iter()
            .filter(|a| a.position().is_basal())
            .map(|a| a.fruit().ordinal())
            .collect();
        assert_eq!(ordinals.len(), 128);
        let unique: std::collections::BTreeSet<_> = ordinals.iter().copied().collect();
        assert_eq!(unique.len(), 128);
        assert_eq!(*unique.iter().next().unwrap(), 1);
        assert_eq!(*unique.iter().last().unwrap(), 128);
    }

    #[test]
    fn each_antenna_serves_four_fruits_and_twelve_tags() {
        let mut fruits = std::collections::BTreeMap::<(u8, u8), std::collections::BTreeSet<u16>>::new();
        let mut tags = std::collections::BTreeMap::<(u8, u8), usize>::new();
        for a in enumerate_addresses() {
            fruits.entry(a.antenna()).or_default().insert(a.fruit().ordinal());
            *tags.entry(a.antenna()).or_insert(0) += 1;
        }
        assert_eq!(fruits.len(), 32);
        assert!(fruits.values().all(|s| s.len() == 4));
        assert!(tags.values().all(|&n| n == 12));
    }

    #[test]
    fn address_round_trips_through_fruit() {
        for a in enumerate_addresses() {
            assert_eq!(a.fruit().address(a.position()), a);
        }
    }

    #[test]
    fn out_of_range_addresses_are_rejected() {
        assert!(matches!(
            TagAddress::new(0, 1, 1, TagPosition::A),
            Err(Error::Address { .. })
        ));
        assert!(matches!(
            TagAddress::new(1, 9, 1, TagPosition::A),
            Err(Error::Address { .. })
        ));
        assert!(matches!(
            TagAddress::new(5, 1, 5, TagPosition::A),
            Err(Error::Address { .. })
        ));
        assert!(FruitId::new(0).is_err());
        assert!(FruitId::new(129).is_err());
    }

    #[test]
    fn epcs_are_unique_24_hex_strings() {
        let mut seen = std::collections::BTreeSet::new();
        for a in enumerate_addresses() {
            let epc = a.epc();
            assert_eq!(epc.len(), 24);
            assert!(epc.chars().all(|c| c.is_ascii_hexdigit()));
            assert!(seen.insert(epc));
        }
    }

    #[test]
    fn standard_tag_list_is_valid() {
        let list = TagList::standard();
        assert_eq!(list.len(), 384);
        list.validate().unwrap();
    }

    #[test]
    fn tag_list_rejects_wrong_fruit_binding() {
        let mut entries = TagList::standard().entries.clone();
        entries[0].fruit = FruitId::new(2).unwrap();
        assert!(TagList::from_entries(entries).is_err());
    }
}
