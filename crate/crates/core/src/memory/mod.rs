//! Synchronous-update memory.
//!
//! Each address holds three slots. Reads see `val`; plain writes replace
//! `next`; delta writes accumulate into `delta`. [`MemoryImage::snapshot`]
//! commits `next + delta` for every live address into a [`TraceFrame`],
//! and [`MemoryImage::load`] turns a frame back into the current values.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use thiserror::Error;

use crate::rng::RngState;

mod file;
mod storage;

pub use file::{read_meta, write_meta, FileBackend, META_FILE};
pub use storage::{format_value, MemoryBackend, StorageBackend, StorageError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Address(u32);

impl Address {
    pub const FIRST: Address = Address(1);

    pub fn new(a: u32) -> Option<Address> {
        (a >= 1).then_some(Address(a))
    }

    pub fn get(self) -> u32 {
        self.0
    }

    pub fn offset(self, by: usize) -> Address {
        Address(self.0 + by as u32)
    }
}

impl fmt::Display for Address {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error)]
pub enum MemoryError {
    #[error("address {0} is not allocated")]
    Address(Address),
    #[error("address {0} is not the base of an animat")]
    NotAnimat(Address),
    #[error("no frame {t}: the trace has {count} frame(s)")]
    Tick { t: u32, count: u32 },
    #[error(transparent)]
    Storage(#[from] StorageError),
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
struct Slot {
    val: f64,
    next: f64,
    delta: f64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Animat {
    pub stage: String,
    pub index: u32,
    pub size: usize,
}

/// One recorded time step.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceFrame {
    pub values: BTreeMap<Address, f64>,
    /// Base address of every live animat with its stage and index.
    pub animats: BTreeMap<Address, (String, u32)>,
    pub rng: RngState,
    /// Allocation counters, kept so a rewound run continues identically.
    pub next_free: Address,
    pub next_index: BTreeMap<String, u32>,
}

impl TraceFrame {
    /// Number of consecutive addresses owned by the animat at `base`.
    pub fn block_size(&self, base: Address) -> usize {
        let limit = self
            .animats
            .range(base.offset(1)..)
            .next()
            .map_or(u32::MAX, |(a, _)| a.0);
        let mut size = 0;
        while base.0 + (size as u32) < limit
            && self.values.contains_key(&base.offset(size))
        {
            size += 1;
        }
        size
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MemoryImage {
    slots: BTreeMap<Address, Slot>,
    deads: BTreeSet<Address>,
    animats: BTreeMap<Address, Animat>,
    next_free: Address,
    next_index: BTreeMap<String, u32>,
    ticks: u32,
}

impl Default for MemoryImage {
    fn default() -> Self {
        MemoryImage::new()
    }
}

impl MemoryImage {
    pub fn new() -> MemoryImage {
        MemoryImage {
            slots: BTreeMap::new(),
            deads: BTreeSet::new(),
            animats: BTreeMap::new(),
            next_free: Address::FIRST,
            next_index: BTreeMap::new(),
            ticks: 0,
        }
    }

    pub fn ticks(&self) -> u32 {
        self.ticks
    }

    pub fn next_free(&self) -> Address {
        self.next_free
    }

    pub fn is_allocated(&self, a: Address) -> bool {
        self.slots.contains_key(&a)
    }

    pub fn is_dead(&self, a: Address) -> bool {
        self.deads.contains(&a)
    }

    pub fn read(&self, a: Address) -> Result<f64, MemoryError> {
        self.slots
            .get(&a)
            .map(|s| s.val)
            .ok_or(MemoryError::Address(a))
    }

    pub fn write(&mut self, a: Address, v: f64) -> Result<(), MemoryError> {
        self.slot_mut(a)?.next = v;
        Ok(())
    }

    pub fn write_delta(&mut self, a: Address, v: f64) -> Result<(), MemoryError> {
        self.slot_mut(a)?.delta += v;
        Ok(())
    }

    /// Pending value of `a`: what the next frame will record.
    pub fn pending(&self, a: Address) -> Result<f64, MemoryError> {
        self.slots
            .get(&a)
            .map(|s| s.next + s.delta)
            .ok_or(MemoryError::Address(a))
    }

    /// Pending `next` and `delta` slots of `a`.
    pub fn pending_slots(&self, a: Address) -> Result<(f64, f64), MemoryError> {
        self.slots
            .get(&a)
            .map(|s| (s.next, s.delta))
            .ok_or(MemoryError::Address(a))
    }

    fn slot_mut(&mut self, a: Address) -> Result<&mut Slot, MemoryError> {
        self.slots.get_mut(&a).ok_or(MemoryError::Address(a))
    }

    fn reserve(&mut self, size: usize) -> Address {
        let base = self.next_free;
        for i in 0..size {
            self.slots.insert(base.offset(i), Slot::default());
        }
        self.next_free = base.offset(size);
        base
    }

    /// Allocates a block that belongs to no animat (the world, a patch).
    pub fn allocate_static(&mut self, size: usize) -> Address {
        self.reserve(size)
    }

    pub fn allocate(&mut self, stage: &str, size: usize, index: u32) -> Address {
        let base = self.reserve(size);
        self.animats.insert(
            base,
            Animat {
                stage: stage.to_string(),
                index,
                size,
            },
        );
        let counter = self.next_index.entry(stage.to_string()).or_insert(1);
        *counter = (*counter).max(index + 1);
        base
    }

    /// The index the next animat of `stage` will get.
    pub fn next_index(&self, stage: &str) -> u32 {
        self.next_index.get(stage).copied().unwrap_or(1)
    }

    pub fn animat(&self, base: Address) -> Option<&Animat> {
        self.animats.get(&base)
    }

    /// Live animats in ascending base address order, including those killed
    /// during the current tick.
    pub fn animats(&self) -> impl Iterator<Item = (Address, &Animat)> {
        self.animats.iter().map(|(a, m)| (*a, m))
    }

    pub fn kill(&mut self, base: Address) -> Result<(), MemoryError> {
        let size = self
            .animats
            .get(&base)
            .ok_or(MemoryError::NotAnimat(base))?
            .size;
        self.deads.extend((0..size).map(|i| base.offset(i)));
        Ok(())
    }

    /// The frame that committing the current tick produces.
    pub fn snapshot(&self, rng: RngState) -> TraceFrame {
        TraceFrame {
            values: self
                .slots
                .iter()
                .filter(|(a, _)| !self.deads.contains(a))
                .map(|(a, s)| (*a, s.next + s.delta))
                .collect(),
            animats: self
                .animats
                .iter()
                .filter(|(a, _)| !self.deads.contains(a))
                .map(|(a, m)| (*a, (m.stage.clone(), m.index)))
                .collect(),
            rng,
            next_free: self.next_free,
            next_index: self.next_index.clone(),
        }
    }

    /// Makes `frame` the current state at tick `t`.
    pub fn load(&mut self, frame: &TraceFrame, t: u32) {
        self.slots = frame
            .values
            .iter()
            .map(|(a, v)| {
                (
                    *a,
                    Slot {
                        val: *v,
                        next: *v,
                        delta: 0.0,
                    },
                )
            })
            .collect();
        self.deads.clear();
        self.animats = frame
            .animats
            .iter()
            .map(|(base, (stage, index))| {
                (
                    *base,
                    Animat {
                        stage: stage.clone(),
                        index: *index,
                        size: frame.block_size(*base),
                    },
                )
            })
            .collect();
        self.next_free = frame.next_free;
        self.next_index = frame.next_index.clone();
        self.ticks = t;
    }
}

/// A memory image together with the storage its frames go to.
pub struct Memory<B: StorageBackend> {
    pub image: MemoryImage,
    pub backend: B,
}

impl<B: StorageBackend> Memory<B> {
    pub fn new(backend: B) -> Memory<B> {
        Memory {
            image: MemoryImage::new(),
            backend,
        }
    }

    /// Appends the committed frame and continues from it.
    pub fn store(&mut self, rng: RngState) -> Result<(), MemoryError> {
        let frame = self.image.snapshot(rng);
        self.backend.append_frame(&frame)?;
        let t = self.backend.frame_count();
        self.image.load(&frame, t);
        Ok(())
    }

    /// Restores frame `t` and returns the generator state recorded with it.
    pub fn load(&mut self, t: u32) -> Result<RngState, MemoryError> {
        let count = self.backend.frame_count();
        if t == 0 || t > count {
            return Err(MemoryError::Tick { t, count });
        }
        let frame = self.backend.load_frame(t)?;
        self.image.load(&frame, t);
        Ok(frame.rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn image() -> MemoryImage {
        let mut m = MemoryImage::new();
        m.allocate("Egg", 3, 1);
        m.allocate("Egg", 3, 2);
        m
    }

    fn a(n: u32) -> Address {
        Address::new(n).unwrap()
    }

    #[test]
    fn allocation_is_contiguous() {
        let mut m = MemoryImage::new();
        assert_eq!(m.allocate_static(1), a(1));
        assert_eq!(m.allocate_static(1), a(2));
        assert_eq!(m.allocate("Egg", 3, 1), a(3));
        assert_eq!(m.allocate("Egg", 3, 2), a(6));
        assert_eq!(m.next_free(), a(9));
        assert_eq!(m.next_index("Egg"), 3);
        assert_eq!(m.next_index("Adult"), 1);
        assert_eq!(m.read(a(8)).unwrap(), 0.0);
        assert!(matches!(m.read(a(9)), Err(MemoryError::Address(x)) if x == a(9)));
    }

    #[test]
    fn writes_are_invisible_until_commit() {
        let mut m = image();
        m.write(a(1), 3.5).unwrap();
        m.load(&m.snapshot(RngState(0)), 1);
        assert_eq!(m.read(a(1)).unwrap(), 3.5);

        m.write(a(1), 9.0).unwrap();
        assert_eq!(m.read(a(1)).unwrap(), 3.5);
        m.write(a(1), 2.0).unwrap();
        m.write(a(1), 7.0).unwrap();
        m.write_delta(a(2), 1.0).unwrap();
        m.write_delta(a(2), 2.0).unwrap();
        m.write_delta(a(3), 0.0).unwrap();
        assert_eq!(m.pending_slots(a(2)).unwrap(), (0.0, 3.0));
        let f = m.snapshot(RngState(0));
        assert_eq!(f.values[&a(1)], 7.0);
        assert_eq!(f.values[&a(2)], 3.0);
        assert_eq!(f.values[&a(3)], 0.0);
    }

    #[test]
    fn store_sums_next_and_delta() {
        let mut m = image();
        m.write(a(4), 5.0).unwrap();
        m.write_delta(a(4), 2.0).unwrap();
        assert_eq!(m.snapshot(RngState(0)).values[&a(4)], 7.0);
    }

    #[test]
    fn unallocated_addresses_are_errors() {
        let mut m = image();
        assert!(m.write(a(100), 1.0).is_err());
        assert!(m.write_delta(a(100), 1.0).is_err());
        assert!(matches!(m.kill(a(2)), Err(MemoryError::NotAnimat(_))));
    }

    #[test]
    fn death_takes_effect_at_commit() {
        let mut m = image();
        m.write(a(4), 1.5).unwrap();
        m.load(&m.snapshot(RngState(0)), 1);
        m.kill(a(4)).unwrap();
        m.kill(a(4)).unwrap();
        assert_eq!(m.read(a(4)).unwrap(), 1.5);
        let f = m.snapshot(RngState(0));
        assert_eq!(f.values.keys().map(|a| a.get()).collect::<Vec<_>>(), [1, 2, 3]);
        assert_eq!(f.animats.len(), 1);
        m.load(&f, 2);
        assert!(m.read(a(4)).is_err());
        // Addresses are never reused.
        assert_eq!(m.allocate("Egg", 3, 3), a(7));
    }

    #[test]
    fn load_restores_block_sizes_and_counters() {
        let mut m = MemoryImage::new();
        m.allocate_static(2);
        m.allocate("Adult", 3, 1);
        m.allocate("Egg", 2, 1);
        m.allocate("Adult", 3, 2);
        let f = m.snapshot(RngState(5));
        assert_eq!(f.block_size(a(3)), 3);
        assert_eq!(f.block_size(a(6)), 2);
        assert_eq!(f.block_size(a(8)), 3);
        let mut n = MemoryImage::new();
        n.load(&f, 1);
        assert_eq!(n.animat(a(6)).unwrap().size, 2);
        assert_eq!(n.next_free(), a(11));
        assert_eq!(n.next_index("Adult"), 3);
        assert_eq!(n, {
            let mut m2 = m.clone();
            m2.load(&f, 1);
            m2
        });
    }

    #[test]
    fn memory_store_and_load() {
        let mut mem = Memory::new(MemoryBackend::default());
        let base = mem.image.allocate("Adult", 2, 1);
        mem.image.write(base, 1.0).unwrap();
        mem.store(RngState(10)).unwrap();
        mem.image.write(base, 2.0).unwrap();
        mem.store(RngState(20)).unwrap();
        assert_eq!(mem.image.read(base).unwrap(), 2.0);
        assert_eq!(mem.image.ticks(), 2);
        assert_eq!(mem.load(1).unwrap(), RngState(10));
        assert_eq!(mem.image.read(base).unwrap(), 1.0);
        assert!(matches!(mem.load(0), Err(MemoryError::Tick { t: 0, count: 2 })));
        assert!(mem.load(3).is_err());
    }
}
