//! Per-core resources: banked scratchpad, the global address map, DMA
//! descriptors and bank layouts.

use std::fmt;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::config::MemoryConfig;
use crate::error::{Result, SimError};
use crate::mesh::{Coord, Mesh};

/// Mesh row of core (0,0) in the chip's global id space.
pub const ROW_BASE: u32 = 32;
/// Mesh column of core (0,0) in the chip's global id space.
pub const COL_BASE: u32 = 8;
pub const SHARED_BASE: u32 = 0x8E00_0000;
const WINDOW_BITS: u32 = 20;

/// Owner of a decoded global address.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Owner {
    Core(Coord),
    Shared,
}

impl fmt::Display for Owner {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Owner::Core(c) => write!(f, "core {c}"),
            Owner::Shared => f.write_str("shared"),
        }
    }
}

/// Flat global address space: one 1 MB window per core (of which the first
/// `local_bytes` are backed) plus the shared DRAM region.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AddressMap {
    mesh: Mesh,
    local_bytes: u32,
    shared_bytes: u32,
}

impl AddressMap {
    pub fn new(mesh: Mesh, mem: &MemoryConfig) -> AddressMap {
        AddressMap {
            mesh,
            local_bytes: mem.local_bytes() as u32,
            shared_bytes: mem.shared_bytes as u32,
        }
    }

    pub fn mesh(&self) -> Mesh {
        self.mesh
    }

    pub fn local_bytes(&self) -> u32 {
        self.local_bytes
    }

    pub fn shared_bytes(&self) -> u32 {
        self.shared_bytes
    }

    pub fn global(&self, core: Coord, offset: u32) -> Result<u32> {
        self.mesh.check(core)?;
        if offset >= self.local_bytes {
            return Err(SimError::Address(format!(
                "local offset {offset:#06x} beyond {} bytes",
                self.local_bytes
            )));
        }
        let id = ((ROW_BASE + core.row as u32) << 6) | (COL_BASE + core.col as u32);
        Ok((id << WINDOW_BITS) | offset)
    }

    pub fn shared(&self, offset: u32) -> Result<u32> {
        if offset >= self.shared_bytes {
            return Err(SimError::Address(format!("shared offset {offset:#x} out of range")));
        }
        Ok(SHARED_BASE + offset)
    }

    pub fn decode(&self, addr: u32) -> Result<(Owner, u32)> {
        if (SHARED_BASE..SHARED_BASE.wrapping_add(self.shared_bytes)).contains(&addr) {
            return Ok((Owner::Shared, addr - SHARED_BASE));
        }
        let id = addr >> WINDOW_BITS;
        let offset = addr & ((1 << WINDOW_BITS) - 1);
        let (row, col) = (id >> 6, id & 0x3f);
        if row < ROW_BASE || col < COL_BASE || offset >= self.local_bytes {
            return Err(SimError::Unmapped(addr));
        }
        let core = Coord::new((row - ROW_BASE) as usize, (col - COL_BASE) as usize);
        if !self.mesh.contains(core) {
            return Err(SimError::Unmapped(addr));
        }
        Ok((Owner::Core(core), offset))
    }

    /// Decodes `[addr, addr+len)`, which must lie within a single owner.
    pub fn decode_range(&self, addr: u32, len: usize) -> Result<(Owner, u32)> {
        let (owner, offset) = self.decode(addr)?;
        let limit = match owner {
            Owner::Core(_) => self.local_bytes,
            Owner::Shared => self.shared_bytes,
        };
        if offset as u64 + len as u64 > limit as u64 {
            return Err(SimError::Address(format!(
                "range {addr:#010x}+{len} spans beyond {owner}"
            )));
        }
        Ok((owner, offset))
    }
}

/// Backing store for every scratchpad and the shared region.
#[derive(Debug, Clone)]
pub struct Memory {
    map: AddressMap,
    local: Vec<Vec<u8>>,
    shared: Vec<u8>,
}

impl Memory {
    pub fn new(map: AddressMap) -> Memory {
        Memory {
            local: vec![vec![0; map.local_bytes as usize]; map.mesh.len()],
            shared: vec![0; map.shared_bytes as usize],
            map,
        }
    }

    pub fn map(&self) -> &AddressMap {
        &self.map
    }

    pub fn owner_bytes(&self, owner: Owner) -> &[u8] {
        match owner {
            Owner::Core(c) => &self.local[self.map.mesh.index(c)],
            Owner::Shared => &self.shared,
        }
    }

    pub fn owner_bytes_mut(&mut self, owner: Owner) -> &mut [u8] {
        match owner {
            Owner::Core(c) => {
                let i = self.map.mesh.index(c);
                &mut self.local[i]
            }
            Owner::Shared => &mut self.shared,
        }
    }

    pub fn read(&self, addr: u32, len: usize) -> Result<Vec<u8>> {
        let (owner, off) = self.map.decode_range(addr, len)?;
        let off = off as usize;
        Ok(self.owner_bytes(owner)[off..off + len].to_vec())
    }

    pub fn write(&mut self, addr: u32, bytes: &[u8]) -> Result<()> {
        let (owner, off) = self.map.decode_range(addr, bytes.len())?;
        let off = off as usize;
        self.owner_bytes_mut(owner)[off..off + bytes.len()].copy_from_slice(bytes);
        Ok(())
    }

    pub fn read_u32(&self, addr: u32) -> Result<u32> {
        let b = self.read(addr, 4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    pub fn write_u32(&mut self, addr: u32, v: u32) -> Result<()> {
        self.write(addr, &v.to_le_bytes())
    }

    pub fn read_f32s(&self, addr: u32, count: usize) -> Result<Vec<f32>> {
        let b = self.read(addr, count * 4)?;
        Ok(bytes_to_f32s(&b))
    }

    pub fn write_f32s(&mut self, addr: u32, vals: &[f32]) -> Result<()> {
        self.write(addr, &f32s_to_bytes(vals))
    }
}

pub fn bytes_to_f32s(b: &[u8]) -> Vec<f32> {
    b.chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
        .collect()
}

pub fn f32s_to_bytes(vals: &[f32]) -> Vec<u8> {
    vals.iter().flat_map(|v| v.to_le_bytes()).collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DmaMode {
    Blocking,
    NonBlocking,
}

/// Whether a descriptor must be programmed from scratch or is already
/// resident in the DMA engine's registers (rebuilt once, restarted many times).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DmaStart {
    Fresh,
    Resident,
}

/// A (possibly 2D, possibly chained) DMA transfer. Channel, mode and start
/// kind of the head descriptor apply to the whole chain.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DmaDescriptor {
    pub channel: u8,
    pub src: u32,
    pub dst: u32,
    pub word_size: u32,
    pub inner_count: u32,
    pub outer_count: u32,
    pub src_stride: u32,
    pub dst_stride: u32,
    pub mode: DmaMode,
    pub start: DmaStart,
    pub chain: Option<Box<DmaDescriptor>>,
}

impl DmaDescriptor {
    /// Contiguous copy using the widest word size that divides the length.
    pub fn copy_1d(channel: u8, src: u32, dst: u32, bytes: u32) -> DmaDescriptor {
        let word_size = [8, 4, 2, 1].into_iter().find(|w| bytes % w == 0).unwrap();
        DmaDescriptor {
            channel,
            src,
            dst,
            word_size,
            inner_count: bytes / word_size,
            outer_count: 1,
            src_stride: 0,
            dst_stride: 0,
            mode: DmaMode::Blocking,
            start: DmaStart::Fresh,
            chain: None,
        }
    }

    #[allow(clippy::too_many_arguments)]
    pub fn block_2d(
        channel: u8,
        src: u32,
        dst: u32,
        word_size: u32,
        inner_count: u32,
        outer_count: u32,
        src_stride: u32,
        dst_stride: u32,
    ) -> DmaDescriptor {
        DmaDescriptor {
            channel,
            src,
            dst,
            word_size,
            inner_count,
            outer_count,
            src_stride,
            dst_stride,
            mode: DmaMode::Blocking,
            start: DmaStart::Fresh,
            chain: None,
        }
    }

    pub fn with_mode(mut self, mode: DmaMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn with_start(mut self, start: DmaStart) -> Self {
        self.start = start;
        self
    }

    /// Builds a chain from a list of segments; the head's channel, mode and
    /// start kind govern the chain.
    pub fn chained(mut segments: Vec<DmaDescriptor>) -> Option<DmaDescriptor> {
        let mut tail: Option<Box<DmaDescriptor>> = None;
        while let Some(mut d) = segments.pop() {
            d.chain = tail;
            tail = Some(Box::new(d));
        }
        tail.map(|b| *b)
    }

    pub fn row_bytes(&self) -> u32 {
        self.word_size * self.inner_count
    }

    pub fn payload_bytes(&self) -> u64 {
        self.row_bytes() as u64 * self.outer_count as u64
    }

    /// Byte span touched at the source side, from `src`.
    pub fn src_span(&self) -> u64 {
        span(self.outer_count, self.src_stride, self.row_bytes())
    }

    pub fn dst_span(&self) -> u64 {
        span(self.outer_count, self.dst_stride, self.row_bytes())
    }

    /// Segments of the chain in execution order.
    pub fn segments(&self) -> Vec<&DmaDescriptor> {
        let mut out = vec![self];
        let mut cur = self;
        while let Some(next) = cur.chain.as_deref() {
            out.push(next);
            cur = next;
        }
        out
    }

    /// Checks shape and that both ranges decode within single owners.
    pub fn validate(&self, map: &AddressMap) -> Result<()> {
        if self.channel > 1 {
            return Err(SimError::Descriptor(format!("channel {} (only 0 and 1 exist)", self.channel)));
        }
        for seg in self.segments() {
            if ![1, 2, 4, 8].contains(&seg.word_size) {
                return Err(SimError::Descriptor(format!("word size {}", seg.word_size)));
            }
            if seg.payload_bytes() == 0 {
                return Err(SimError::Descriptor("empty transfer".into()));
            }
            if seg.outer_count > 1
                && seg.dst_stride != 0
                && (seg.dst_stride as u64) < seg.row_bytes() as u64
            {
                return Err(SimError::Descriptor("destination rows overlap".into()));
            }
            map.decode_range(seg.src, seg.src_span() as usize)
                .map_err(|e| SimError::Descriptor(format!("source: {e}")))?;
            map.decode_range(seg.dst, seg.dst_span() as usize)
                .map_err(|e| SimError::Descriptor(format!("destination: {e}")))?;
        }
        Ok(())
    }

    /// Performs the data movement of one segment directly on `mem`.
    pub fn gather(&self, mem: &Memory) -> Result<Vec<u8>> {
        let row = self.row_bytes() as usize;
        let mut out = Vec::with_capacity(self.payload_bytes() as usize);
        for r in 0..self.outer_count {
            let a = self.src.wrapping_add(r.wrapping_mul(self.src_stride));
            out.extend(mem.read(a, row)?);
        }
        Ok(out)
    }

    pub fn scatter(&self, mem: &mut Memory, payload: &[u8]) -> Result<()> {
        let row = self.row_bytes() as usize;
        for (r, chunk) in payload.chunks(row).enumerate() {
            let a = self.dst.wrapping_add((r as u32).wrapping_mul(self.dst_stride));
            mem.write(a, chunk)?;
        }
        Ok(())
    }
}

fn span(outer: u32, stride: u32, row: u32) -> u64 {
    (outer as u64 - 1) * stride as u64 + row as u64
}

/// Named region of a core's scratchpad.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Region {
    pub name: String,
    pub start: u32,
    pub len: u32,
}

impl Region {
    pub fn new(name: &str, start: u32, len: u32) -> Region {
        Region {
            name: name.to_string(),
            start,
            len,
        }
    }

    pub fn end(&self) -> u32 {
        self.start + self.len
    }

    pub fn range(&self) -> Range<u32> {
        self.start..self.end()
    }

    pub fn overlaps(&self, other: &Region) -> bool {
        self.start < other.end() && other.start < self.end()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BankLayout {
    pub regions: Vec<Region>,
}

impl BankLayout {
    pub fn new(regions: Vec<Region>) -> BankLayout {
        BankLayout { regions }
    }

    pub fn get(&self, name: &str) -> Option<&Region> {
        self.regions.iter().find(|r| r.name == name)
    }

    /// Bank indices a region touches.
    pub fn banks(region: &Region, bank_bytes: u32) -> Range<u32> {
        region.start / bank_bytes..(region.end() - 1) / bank_bytes + 1
    }

    pub fn validate(&self, mem: &MemoryConfig) -> Result<()> {
        let limit = mem.local_bytes() as u32;
        for (i, a) in self.regions.iter().enumerate() {
            if a.len == 0 || a.end() > limit {
                return Err(SimError::Layout(format!(
                    "region {} [{:#06x}, {:#06x}) outside local memory",
                    a.name,
                    a.start,
                    a.end()
                )));
            }
            if let Some(b) = self.regions[..i].iter().find(|b| b.overlaps(a)) {
                return Err(SimError::Layout(format!("regions {} and {} overlap", b.name, a.name)));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn map8() -> AddressMap {
        AddressMap::new(Mesh::new(8, 8).unwrap(), &MemoryConfig::default())
    }

    #[test]
    fn known_addresses() {
        let m = map8();
        assert_eq!(m.global(Coord::new(0, 0), 0).unwrap(), 0x8080_0000);
        assert_eq!(m.global(Coord::new(1, 2), 0x4000).unwrap(), 0x84a0_4000);
        assert_eq!(m.decode(0x84a0_4000).unwrap(), (Owner::Core(Coord::new(1, 2)), 0x4000));
        assert_eq!(m.decode(SHARED_BASE + 16).unwrap(), (Owner::Shared, 16));
    }

    #[test]
    fn unmapped_hole_faults() {
        let m = map8();
        let hole = m.global(Coord::new(7, 7), 0).unwrap() + 0x8000;
        assert_eq!(m.decode(hole), Err(SimError::Unmapped(hole)));
        assert!(m.decode(SHARED_BASE - 4).is_err());
        assert!(m.decode(0).is_err());
    }

    #[test]
    fn range_spanning_owners_is_an_error() {
        let m = map8();
        let a = m.global(Coord::new(0, 0), 0x7ffc).unwrap();
        assert!(m.decode_range(a, 4).is_ok());
        assert!(matches!(m.decode_range(a, 8), Err(SimError::Address(_))));
    }

    #[test]
    fn write_then_read() {
        let mut mem = Memory::new(map8());
        let a = mem.map().global(Coord::new(2, 3), 0x4000).unwrap();
        mem.write_u32(a, 0xDEAD_BEEF).unwrap();
        assert_eq!(mem.read_u32(a).unwrap(), 0xDEAD_BEEF);
    }

    #[test]
    fn layout_overlap_detected() {
        let l = BankLayout::new(vec![Region::new("a", 0, 0x100), Region::new("b", 0xff, 4)]);
        assert!(l.validate(&MemoryConfig::default()).is_err());
        let l = BankLayout::new(vec![Region::new("a", 0x7f00, 0x200)]);
        assert!(l.validate(&MemoryConfig::default()).is_err());
    }

    #[test]
    fn bank_indices() {
        let r = Region::new("x", 0x1f00, 0x200);
        assert_eq!(BankLayout::banks(&r, 8192), 0..2);
    }

    #[test]
    fn chain_segments_in_order() {
        let m = map8();
        let base = m.global(Coord::new(0, 0), 0).unwrap();
        let segs = (0..4).map(|i| DmaDescriptor::copy_1d(0, base + i * 16, base + 0x1000 + i * 16, 16)).collect();
        let d = DmaDescriptor::chained(segs).unwrap();
        let s = d.segments();
        assert_eq!(s.len(), 4);
        assert_eq!(s[3].src, base + 48);
        d.validate(&m).unwrap();
    }
}
