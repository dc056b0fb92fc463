//! Memory organization, physical-address decomposition and subarray mapping.
//!
//! A bank holds `N_r x N_c` cells split into `S_r x S_c` subarrays of
//! `M_r x M_c` cells. The COMET organization keeps `S_c = 1` so that a
//! subarray spans the full bank width, and lays the `S_r` subarrays out as a
//! `sqrt(S_r) x sqrt(S_r)` tile.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Bits stored per multi-level cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum BitsPerCell {
    One,
    Two,
    Four,
}

impl BitsPerCell {
    pub const ALL: [BitsPerCell; 3] = [BitsPerCell::One, BitsPerCell::Two, BitsPerCell::Four];

    pub fn bits(self) -> u32 {
        match self {
            BitsPerCell::One => 1,
            BitsPerCell::Two => 2,
            BitsPerCell::Four => 4,
        }
    }

    /// Number of distinguishable levels, `2^b`.
    pub fn levels(self) -> u32 {
        1 << self.bits()
    }
}

impl TryFrom<u8> for BitsPerCell {
    type Error = Error;

    fn try_from(b: u8) -> Result<Self> {
        match b {
            1 => Ok(BitsPerCell::One),
            2 => Ok(BitsPerCell::Two),
            4 => Ok(BitsPerCell::Four),
            other => Err(Error::Geometry(format!(
                "bits_per_cell must be one of 1, 2, 4 (got {other})"
            ))),
        }
    }
}

impl From<BitsPerCell> for u8 {
    fn from(b: BitsPerCell) -> u8 {
        b.bits() as u8
    }
}

impl fmt::Display for BitsPerCell {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.bits())
    }
}

fn one() -> u32 {
    1
}

/// Unvalidated organization as written in a config file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeometrySpec {
    /// `B`
    pub banks: u32,
    /// `S_r`, subarrays stacked along the row dimension.
    pub subarray_count: u32,
    /// `S_c`; COMET uses 1.
    #[serde(default = "one")]
    pub subarray_col_count: u32,
    /// `M_r`
    pub subarray_rows: u32,
    /// `M_c`
    pub subarray_cols: u32,
    /// `b`
    pub bits_per_cell: u8,
    #[serde(default = "one")]
    pub channels: u32,
}

impl GeometrySpec {
    pub fn new(banks: u32, subarray_count: u32, subarray_rows: u32, subarray_cols: u32, bits_per_cell: u8) -> Self {
        Self {
            banks,
            subarray_count,
            subarray_col_count: 1,
            subarray_rows,
            subarray_cols,
            bits_per_cell,
            channels: 1,
        }
    }

    /// The 4-bit COMET organization, `4 x 4096 x 512 x 256 x 4`.
    pub fn comet_4b() -> Self {
        Self::new(4, 4096, 512, 256, 4)
    }

    /// The bit-density family sharing the 4b capacity: `M_c` shrinks as `b` grows.
    pub fn comet_family(bits: BitsPerCell) -> Self {
        let cols = match bits {
            BitsPerCell::One => 1024,
            BitsPerCell::Two => 512,
            BitsPerCell::Four => 256,
        };
        Self::new(4, 4096, 512, cols, bits.bits() as u8)
    }

    /// Same organization at another bit density, with `M_c * b` held fixed.
    pub fn at_bit_density(self, bits: BitsPerCell) -> Result<Self> {
        let row_bits = self.subarray_cols as u64 * self.bits_per_cell as u64;
        let b = bits.bits() as u64;
        if !row_bits.is_multiple_of(b) || row_bits / b == 0 || row_bits / b > u32::MAX as u64 {
            return Err(Error::Geometry(format!(
                "{row_bits}-bit subarray rows cannot be split into {b}-bit cells"
            )));
        }
        Ok(Self {
            subarray_cols: (row_bits / b) as u32,
            bits_per_cell: b as u8,
            ..self
        })
    }

    pub fn validate(self) -> Result<MemoryGeometry> {
        validate_geometry(self)
    }
}

impl Default for GeometrySpec {
    fn default() -> Self {
        Self::comet_4b()
    }
}

/// A validated organization with derived totals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MemoryGeometry {
    banks: u32,
    subarray_count: u32,
    subarray_col_count: u32,
    subarray_rows: u32,
    subarray_cols: u32,
    bits: BitsPerCell,
    channels: u32,
    subarray_side: u32,
    total_rows: u64,
    total_cols: u64,
}

/// Checks every organization invariant and populates the derived fields.
pub fn validate_geometry(g: GeometrySpec) -> Result<MemoryGeometry> {
    let dims = [
        ("banks", g.banks),
        ("subarray_count", g.subarray_count),
        ("subarray_col_count", g.subarray_col_count),
        ("subarray_rows", g.subarray_rows),
        ("subarray_cols", g.subarray_cols),
        ("channels", g.channels),
    ];
    for (name, v) in dims {
        if v == 0 {
            return Err(Error::Geometry(format!("zero dimension: {name} must be >= 1")));
        }
    }
    let bits = BitsPerCell::try_from(g.bits_per_cell)?;
    let side = g.subarray_count.isqrt();
    if side * side != g.subarray_count {
        return Err(Error::Geometry(format!(
            "non-square subarray_count: {} is not a perfect square",
            g.subarray_count
        )));
    }
    for (name, v) in dims {
        if !v.is_power_of_two() {
            return Err(Error::Geometry(format!("non-power-of-two {name}: {v}")));
        }
    }
    let total_rows = g.subarray_count as u64 * g.subarray_rows as u64;
    let total_cols = g.subarray_col_count as u64 * g.subarray_cols as u64;
    let geometry = MemoryGeometry {
        banks: g.banks,
        subarray_count: g.subarray_count,
        subarray_col_count: g.subarray_col_count,
        subarray_rows: g.subarray_rows,
        subarray_cols: g.subarray_cols,
        bits,
        channels: g.channels,
        subarray_side: side,
        total_rows,
        total_cols,
    };
    // Largest id produced by the subarray formula must stay inside the tile.
    let max_id = (g.subarray_col_count as u64 - 1) * side as u64 + (g.subarray_count as u64 - 1);
    if max_id >= geometry.subarrays_per_bank() {
        return Err(Error::Geometry(format!(
            "subarray id {max_id} escapes {} subarrays",
            geometry.subarrays_per_bank()
        )));
    }
    geometry
        .capacity_bits()
        .checked_mul(g.channels as u64)
        .ok_or_else(|| Error::Geometry("capacity overflows 64 bits".into()))?;
    Ok(geometry)
}

impl MemoryGeometry {
    pub fn banks(&self) -> u32 {
        self.banks
    }

    /// `S_r`
    pub fn subarray_count(&self) -> u32 {
        self.subarray_count
    }

    /// `S_c`
    pub fn subarray_col_count(&self) -> u32 {
        self.subarray_col_count
    }

    /// `M_r`
    pub fn subarray_rows(&self) -> u32 {
        self.subarray_rows
    }

    /// `M_c`
    pub fn subarray_cols(&self) -> u32 {
        self.subarray_cols
    }

    pub fn bits_per_cell(&self) -> BitsPerCell {
        self.bits
    }

    pub fn channels(&self) -> u32 {
        self.channels
    }

    /// `sqrt(S_r)`
    pub fn subarray_side(&self) -> u32 {
        self.subarray_side
    }

    /// `N_r = S_r * M_r`
    pub fn total_rows(&self) -> u64 {
        self.total_rows
    }

    /// `N_c = S_c * M_c`
    pub fn total_cols(&self) -> u64 {
        self.total_cols
    }

    pub fn subarrays_per_bank(&self) -> u64 {
        self.subarray_count as u64 * self.subarray_col_count as u64
    }

    /// Bits delivered by one row activation, `N_c * b`.
    pub fn row_bits(&self) -> u64 {
        self.total_cols * self.bits.bits() as u64
    }

    /// `B * N_r * N_c * b` for one channel.
    pub fn capacity_bits(&self) -> u64 {
        self.banks as u64 * self.total_rows * self.row_bits()
    }

    /// Addressable bytes across all channels.
    pub fn capacity_bytes(&self) -> u64 {
        self.capacity_bits() * self.channels as u64 / 8
    }

    pub fn spec(&self) -> GeometrySpec {
        GeometrySpec {
            banks: self.banks,
            subarray_count: self.subarray_count,
            subarray_col_count: self.subarray_col_count,
            subarray_rows: self.subarray_rows,
            subarray_cols: self.subarray_cols,
            bits_per_cell: self.bits.bits() as u8,
            channels: self.channels,
        }
    }
}

impl fmt::Display for MemoryGeometry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} x {} x {} x {} x {}",
            self.banks, self.subarray_count, self.subarray_rows, self.subarray_cols, self.bits
        )
    }
}

/// `{Channel, Row, Bank, Column}` plus the byte offset inside the cache line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
pub struct PhysicalAddress {
    pub channel: u32,
    pub row: u64,
    pub bank: u32,
    pub column: u64,
    pub offset: u32,
}

/// `{Channel, Subarray, Subarray row, Bank, Subarray column}`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct MappedAddress {
    pub channel: u32,
    pub subarray: u64,
    pub subarray_row: u32,
    pub bank: u32,
    pub subarray_col: u32,
}

fn check(field: &'static str, value: u64, limit: u64) -> Result<()> {
    if value >= limit {
        Err(Error::Bounds { field, value, limit })
    } else {
        Ok(())
    }
}

/// Maps a physical address onto its subarray coordinates.
pub fn map_address(a: &PhysicalAddress, g: &MemoryGeometry) -> Result<MappedAddress> {
    check("channel", a.channel as u64, g.channels as u64)?;
    check("row", a.row, g.total_rows)?;
    check("bank", a.bank as u64, g.banks as u64)?;
    check("column", a.column, g.total_cols)?;
    let m_r = g.subarray_rows as u64;
    let m_c = g.subarray_cols as u64;
    let id1 = a.row / m_r;
    let id2 = a.column / m_c;
    Ok(MappedAddress {
        channel: a.channel,
        subarray: id2 * g.subarray_side as u64 + id1,
        subarray_row: (a.row % m_r) as u32,
        bank: a.bank,
        subarray_col: (a.column % m_c) as u32,
    })
}

/// Cache-line size accepted by the address decomposition.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub enum LineBytes {
    B32,
    B64,
    #[default]
    B128,
}

impl LineBytes {
    pub fn bytes(self) -> u32 {
        match self {
            LineBytes::B32 => 32,
            LineBytes::B64 => 64,
            LineBytes::B128 => 128,
        }
    }

    pub fn bits(self) -> u64 {
        self.bytes() as u64 * 8
    }
}


impl TryFrom<u32> for LineBytes {
    type Error = Error;

    fn try_from(v: u32) -> Result<Self> {
        match v {
            32 => Ok(LineBytes::B32),
            64 => Ok(LineBytes::B64),
            128 => Ok(LineBytes::B128),
            other => Err(Error::Domain(format!("line size must be 32, 64 or 128 bytes (got {other})"))),
        }
    }
}

impl From<LineBytes> for u32 {
    fn from(l: LineBytes) -> u32 {
        l.bytes()
    }
}

/// Bit-slice layout of a flat byte address, low to high:
/// `offset | bank | column slot | row | channel`.
///
/// A row of `N_c * b` bits holds one or more whole cache lines; the column
/// slot selects the line inside the row and `column = slot * cells_per_line`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AddressLayout {
    line: LineBytes,
    offset_bits: u32,
    bank_bits: u32,
    slot_bits: u32,
    row_bits: u32,
    channel_bits: u32,
    cells_per_line: u64,
    capacity_bytes: u64,
}

impl AddressLayout {
    pub fn new(g: &MemoryGeometry, line: LineBytes) -> Result<Self> {
        let row_bits = g.row_bits();
        if line.bits() > row_bits {
            return Err(Error::Geometry(format!(
                "cache line of {} bits does not fit a {row_bits}-bit row",
                line.bits()
            )));
        }
        let lines_per_row = row_bits / line.bits();
        Ok(Self {
            line,
            offset_bits: line.bytes().trailing_zeros(),
            bank_bits: g.banks.trailing_zeros(),
            slot_bits: lines_per_row.trailing_zeros(),
            row_bits: g.total_rows.trailing_zeros(),
            channel_bits: g.channels.trailing_zeros(),
            cells_per_line: line.bits() / g.bits.bits() as u64,
            capacity_bytes: g.capacity_bytes(),
        })
    }

    pub fn line(&self) -> LineBytes {
        self.line
    }

    pub fn cells_per_line(&self) -> u64 {
        self.cells_per_line
    }

    pub fn capacity_bytes(&self) -> u64 {
        self.capacity_bytes
    }

    /// Splits a flat byte address into its physical fields.
    pub fn decompose(&self, addr: u64) -> Result<PhysicalAddress> {
        if addr >= self.capacity_bytes {
            return Err(Error::Capacity {
                addr,
                capacity_bytes: self.capacity_bytes,
            });
        }
        let mut rest = addr;
        let mut take = |bits: u32| {
            let v = rest & ((1u64 << bits) - 1);
            rest >>= bits;
            v
        };
        let offset = take(self.offset_bits);
        let bank = take(self.bank_bits);
        let slot = take(self.slot_bits);
        let row = take(self.row_bits);
        let channel = take(self.channel_bits);
        Ok(PhysicalAddress {
            channel: channel as u32,
            row,
            bank: bank as u32,
            column: slot * self.cells_per_line,
            offset: offset as u32,
        })
    }

    /// Inverse of [`decompose`](Self::decompose).
    pub fn compose(&self, a: &PhysicalAddress) -> Result<u64> {
        check("offset", a.offset as u64, 1 << self.offset_bits)?;
        check("bank", a.bank as u64, 1 << self.bank_bits)?;
        if !a.column.is_multiple_of(self.cells_per_line) {
            return Err(Error::Domain(format!(
                "column {} is not aligned to a {}-cell line",
                a.column, self.cells_per_line
            )));
        }
        let slot = a.column / self.cells_per_line;
        check("column", slot, 1 << self.slot_bits)?;
        check("row", a.row, 1 << self.row_bits)?;
        check("channel", a.channel as u64, 1 << self.channel_bits)?;
        let mut addr = a.channel as u64;
        addr = (addr << self.row_bits) | a.row;
        addr = (addr << self.slot_bits) | slot;
        addr = (addr << self.bank_bits) | a.bank as u64;
        addr = (addr << self.offset_bits) | a.offset as u64;
        Ok(addr)
    }
}

/// Convenience wrapper over [`AddressLayout::decompose`].
pub fn decompose_flat_address(byte_addr: u64, g: &MemoryGeometry, line: LineBytes) -> Result<PhysicalAddress> {
    AddressLayout::new(g, line)?.decompose(byte_addr)
}
