//! 3D problem state: velocity fields, initialization, slab decomposition and
//! per-cell operand extraction.
//!
//! Storage order is fixed: index `(i, j, k)` maps to `i + nx*(j + ny*k)`,
//! i fastest. Interior traversal (everywhere in this crate) is k outer,
//! j middle, i inner, so emission order equals storage order restricted to
//! the interior.

use std::io::{self, Read, Write};

use thiserror::Error;

/// Lanes 6 and 7 of every operand vector are padding and must stay zero.
pub const BUNDLE_LANES: usize = 8;
/// Useful operand lanes per bundle (two per dimension).
pub const USEFUL_LANES: usize = 6;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum GridError {
    #[error("dimension too small: ({0}, {1}, {2}), need at least 3 cells per axis")]
    DimensionTooSmall(usize, usize, usize),
    #[error("non-positive spacing: ({0}, {1}, {2})")]
    NonPositiveSpacing(String, String, String),
    #[error("too many parts: {parts} slabs need nz >= {needed}, grid has nz = {nz}")]
    TooManyParts { parts: usize, needed: usize, nz: usize },
    #[error("index ({0}, {1}, {2}) is not strictly interior")]
    NotInterior(usize, usize, usize),
}

/// The three velocity fields. Each field is advected by all three components.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
pub enum Field {
    U,
    V,
    W,
}

impl Field {
    pub const ALL: [Field; 3] = [Field::U, Field::V, Field::W];

    pub fn short(self) -> &'static str {
        match self {
            Field::U => "u",
            Field::V => "v",
            Field::W => "w",
        }
    }
}

/// Deterministic field initialization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitSpec {
    Zero,
    Constant(f32),
    /// Uniform values in `[lo, hi)` from a seeded generator; same seed, same bits.
    Seeded { seed: u64, lo: f32, hi: f32 },
}

/// SplitMix64. Hand-rolled so that seeded fields are bit-stable regardless of
/// any external crate's stream details.
#[derive(Debug, Clone)]
struct SplitMix64(u64);

impl SplitMix64 {
    fn next_u64(&mut self) -> u64 {
        self.0 = self.0.wrapping_add(0x9e37_79b9_7f4a_7c15);
        let mut z = self.0;
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
        z ^ (z >> 31)
    }

    /// Uniform f32 in [lo, hi) using the top 24 bits of the stream.
    fn next_f32(&mut self, lo: f32, hi: f32) -> f32 {
        let u = (self.next_u64() >> 40) as u32; // 24 bits
        lo + (hi - lo) * (u as f32 / 16_777_216.0)
    }
}

/// Three co-located single-precision velocity fields plus grid spacings.
/// Immutable after creation; cheap to share read-only.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid3D {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub dx: f32,
    pub dy: f32,
    pub dz: f32,
    pub u: Vec<f32>,
    pub v: Vec<f32>,
    pub w: Vec<f32>,
}

/// Total cells for the given dimensions. Kept separate from allocation so
/// problem-scale arithmetic can be checked without building the arrays.
pub fn cell_count(nx: usize, ny: usize, nz: usize) -> usize {
    nx * ny * nz
}

/// Interior cells (one stencil-depth layer removed from each face).
pub fn interior_count(nx: usize, ny: usize, nz: usize) -> usize {
    (nx - 2) * (ny - 2) * (nz - 2)
}

impl Grid3D {
    pub fn new(
        nx: usize,
        ny: usize,
        nz: usize,
        spacing: (f32, f32, f32),
        init: InitSpec,
    ) -> Result<Grid3D, GridError> {
        if nx < 3 || ny < 3 || nz < 3 {
            return Err(GridError::DimensionTooSmall(nx, ny, nz));
        }
        let (dx, dy, dz) = spacing;
        if !(dx > 0.0 && dy > 0.0 && dz > 0.0) {
            return Err(GridError::NonPositiveSpacing(
                dx.to_string(),
                dy.to_string(),
                dz.to_string(),
            ));
        }
        let n = cell_count(nx, ny, nz);
        let fill = |gen: &mut dyn FnMut() -> f32| -> Vec<f32> { (0..n).map(|_| gen()).collect() };
        let (u, v, w) = match init {
            InitSpec::Zero => (vec![0.0; n], vec![0.0; n], vec![0.0; n]),
            InitSpec::Constant(c) => {
                assert!(c.is_finite(), "constant init must be finite");
                (vec![c; n], vec![c; n], vec![c; n])
            }
            InitSpec::Seeded { seed, lo, hi } => {
                assert!(lo.is_finite() && hi.is_finite() && lo < hi);
                let mut rng = SplitMix64(seed);
                let mut gen = || rng.next_f32(lo, hi);
                let u = fill(&mut gen);
                let v = fill(&mut gen);
                let w = fill(&mut gen);
                (u, v, w)
            }
        };
        let grid = Grid3D { nx, ny, nz, dx, dy, dz, u, v, w };
        debug_assert!(grid.all_finite());
        Ok(grid)
    }

    pub fn cells(&self) -> usize {
        cell_count(self.nx, self.ny, self.nz)
    }

    pub fn interior_cells(&self) -> usize {
        interior_count(self.nx, self.ny, self.nz)
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        debug_assert!(i < self.nx && j < self.ny && k < self.nz);
        i + self.nx * (j + self.ny * k)
    }

    #[inline]
    pub fn is_interior(&self, i: usize, j: usize, k: usize) -> bool {
        i >= 1 && j >= 1 && k >= 1 && i < self.nx - 1 && j < self.ny - 1 && k < self.nz - 1
    }

    #[inline]
    pub fn field(&self, f: Field) -> &[f32] {
        match f {
            Field::U => &self.u,
            Field::V => &self.v,
            Field::W => &self.w,
        }
    }

    #[inline]
    pub fn at(&self, f: Field, i: usize, j: usize, k: usize) -> f32 {
        self.field(f)[self.idx(i, j, k)]
    }

    pub fn all_finite(&self) -> bool {
        self.u.iter().chain(&self.v).chain(&self.w).all(|x| x.is_finite())
    }

    /// Interior indices in emission order (k outer, j middle, i inner).
    pub fn interior_indices(&self) -> impl Iterator<Item = (usize, usize, usize)> + '_ {
        let (nx, ny, nz) = (self.nx, self.ny, self.nz);
        (1..nz - 1)
            .flat_map(move |k| (1..ny - 1).flat_map(move |j| (1..nx - 1).map(move |i| (i, j, k))))
    }

    /// Raw dump: ASCII header line `PWGRID nx ny nz`, then u, v, w as flat
    /// little-endian f32 in storage order.
    pub fn write_pwgrid<Wr: Write>(&self, out: &mut Wr) -> io::Result<()> {
        writeln!(out, "PWGRID {} {} {}", self.nx, self.ny, self.nz)?;
        for arr in [&self.u, &self.v, &self.w] {
            for x in arr {
                out.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_pwgrid<R: Read>(inp: &mut R, spacing: (f32, f32, f32)) -> io::Result<Grid3D> {
        let mut header = Vec::new();
        let mut byte = [0u8; 1];
        loop {
            inp.read_exact(&mut byte)?;
            if byte[0] == b'\n' {
                break;
            }
            header.push(byte[0]);
        }
        let header = String::from_utf8(header)
            .map_err(|e| io::Error::new(io::ErrorKind::InvalidData, e))?;
        let mut parts = header.split_whitespace();
        let bad = || io::Error::new(io::ErrorKind::InvalidData, "bad PWGRID header");
        if parts.next() != Some("PWGRID") {
            return Err(bad());
        }
        let mut dim = || -> io::Result<usize> {
            parts.next().ok_or_else(bad)?.parse().map_err(|_| bad())
        };
        let (nx, ny, nz) = (dim()?, dim()?, dim()?);
        let n = cell_count(nx, ny, nz);
        let mut read_field = || -> io::Result<Vec<f32>> {
            let mut buf = vec![0u8; n * 4];
            inp.read_exact(&mut buf)?;
            Ok(buf.chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect())
        };
        let u = read_field()?;
        let v = read_field()?;
        let w = read_field()?;
        Ok(Grid3D { nx, ny, nz, dx: spacing.0, dy: spacing.1, dz: spacing.2, u, v, w })
    }
}

/// Per-field advection tendencies; boundary cells are exactly zero.
#[derive(Debug, Clone, PartialEq)]
pub struct SourceTerms {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
    pub su: Vec<f32>,
    pub sv: Vec<f32>,
    pub sw: Vec<f32>,
}

impl SourceTerms {
    pub fn zeros(nx: usize, ny: usize, nz: usize) -> SourceTerms {
        let n = cell_count(nx, ny, nz);
        SourceTerms { nx, ny, nz, su: vec![0.0; n], sv: vec![0.0; n], sw: vec![0.0; n] }
    }

    #[inline]
    pub fn idx(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.nx * (j + self.ny * k)
    }

    pub fn field(&self, f: Field) -> &[f32] {
        match f {
            Field::U => &self.su,
            Field::V => &self.sv,
            Field::W => &self.sw,
        }
    }

    pub fn field_mut(&mut self, f: Field) -> &mut Vec<f32> {
        match f {
            Field::U => &mut self.su,
            Field::V => &mut self.sv,
            Field::W => &mut self.sw,
        }
    }

    /// True when boundary cells of every field are exactly zero.
    pub fn boundary_zero(&self) -> bool {
        let (nx, ny, nz) = (self.nx, self.ny, self.nz);
        for k in 0..nz {
            for j in 0..ny {
                for i in 0..nx {
                    let interior =
                        i >= 1 && j >= 1 && k >= 1 && i < nx - 1 && j < ny - 1 && k < nz - 1;
                    if !interior {
                        let at = self.idx(i, j, k);
                        if self.su[at] != 0.0 || self.sv[at] != 0.0 || self.sw[at] != 0.0 {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }
}

/// The 24 operands feeding one cell of one field, padded to 8 lanes.
///
/// Lane layout (fixed): lanes 0-1 are the x-direction minus/plus pairs,
/// 2-3 the y pairs, 4-5 the z pairs, 6-7 zero padding.
/// `lhs[l] + rhs[l]` is the stencil pair sum, `mul[l]` carries the folded
/// `0.25/dh * advecting_velocity(neighbor)` factor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OperandBundle {
    pub lhs: [f32; BUNDLE_LANES],
    pub rhs: [f32; BUNDLE_LANES],
    pub mul: [f32; BUNDLE_LANES],
}

impl OperandBundle {
    pub fn zeroed() -> OperandBundle {
        OperandBundle { lhs: [0.0; 8], rhs: [0.0; 8], mul: [0.0; 8] }
    }

    pub fn padding_ok(&self) -> bool {
        [6, 7].iter().all(|&l| self.lhs[l] == 0.0 && self.rhs[l] == 0.0 && self.mul[l] == 0.0)
    }
}

/// Operands for field `field` at strictly interior cell `(i, j, k)`.
///
/// For dimension d with spacing dh and advecting component (u, v, w)[d]:
/// lane 2d is the minus pair, lane 2d+1 the plus pair; the multiplier lane
/// holds `(0.25/dh) * advecting_velocity(at the neighbor)`.
pub fn extract_bundle(
    grid: &Grid3D,
    field: Field,
    i: usize,
    j: usize,
    k: usize,
) -> Result<OperandBundle, GridError> {
    if !grid.is_interior(i, j, k) {
        return Err(GridError::NotInterior(i, j, k));
    }
    let mut b = OperandBundle::zeroed();
    let center = grid.at(field, i, j, k);
    let dims: [(Field, f32, [isize; 3]); 3] = [
        (Field::U, grid.dx, [1, 0, 0]),
        (Field::V, grid.dy, [0, 1, 0]),
        (Field::W, grid.dz, [0, 0, 1]),
    ];
    for (d, (vel_field, dh, off)) in dims.iter().enumerate() {
        let scale = 0.25f32 / dh;
        let minus =
            (i - off[0] as usize, j - off[1] as usize, k - off[2] as usize);
        let plus = (i + off[0] as usize, j + off[1] as usize, k + off[2] as usize);
        b.lhs[2 * d] = center;
        b.rhs[2 * d] = grid.at(field, minus.0, minus.1, minus.2);
        b.mul[2 * d] = scale * grid.at(*vel_field, minus.0, minus.1, minus.2);
        b.lhs[2 * d + 1] = center;
        b.rhs[2 * d + 1] = grid.at(field, plus.0, plus.1, plus.2);
        b.mul[2 * d + 1] = scale * grid.at(*vel_field, plus.0, plus.1, plus.2);
    }
    Ok(b)
}

/// One pre-haloed slab of a decomposed grid.
#[derive(Debug, Clone)]
pub struct Slab {
    pub grid: Grid3D,
    /// Global k index of this slab's first interior plane.
    pub k_interior_start: usize,
    /// Number of interior planes owned by this slab.
    pub k_interior_len: usize,
}

/// Split the grid into `parts` slabs along the outermost (k) dimension, each
/// carrying a one-cell halo so interior results are independent of the
/// decomposition. The union of slab interiors is exactly the full interior.
pub fn decompose(grid: &Grid3D, parts: usize) -> Result<Vec<Slab>, GridError> {
    assert!(parts >= 1, "parts must be >= 1");
    if grid.nz < 3 * parts {
        return Err(GridError::TooManyParts { parts, needed: 3 * parts, nz: grid.nz });
    }
    let interior = grid.nz - 2;
    let base = interior / parts;
    let extra = interior % parts;
    let mut slabs = Vec::with_capacity(parts);
    let mut k_start = 1usize; // first global interior plane
    for p in 0..parts {
        let len = base + usize::from(p < extra);
        let lo = k_start - 1; // include halo plane below
        let hi = k_start + len; // halo plane above (inclusive)
        let nz = hi - lo + 1;
        let n = grid.nx * grid.ny * nz;
        let copy_field = |src: &[f32]| -> Vec<f32> {
            let mut out = Vec::with_capacity(n);
            for k in lo..=hi {
                let from = grid.nx * grid.ny * k;
                out.extend_from_slice(&src[from..from + grid.nx * grid.ny]);
            }
            out
        };
        let sub = Grid3D {
            nx: grid.nx,
            ny: grid.ny,
            nz,
            dx: grid.dx,
            dy: grid.dy,
            dz: grid.dz,
            u: copy_field(&grid.u),
            v: copy_field(&grid.v),
            w: copy_field(&grid.w),
        };
        slabs.push(Slab { grid: sub, k_interior_start: k_start, k_interior_len: len });
        k_start += len;
    }
    debug_assert_eq!(k_start, grid.nz - 1);
    Ok(slabs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_init_fills_all_fields() {
        let g = Grid3D::new(3, 3, 3, (1.0, 1.0, 1.0), InitSpec::Constant(2.0)).unwrap();
        assert!(g.u.iter().all(|&x| x == 2.0));
        assert!(g.v.iter().all(|&x| x == 2.0));
        assert!(g.w.iter().all(|&x| x == 2.0));
        assert_eq!(g.cells(), 27);
    }

    #[test]
    fn paper_scale_cell_count() {
        // ~67 million grid points at 408^3; arithmetic only, no allocation.
        assert_eq!(cell_count(408, 408, 408), 67_917_312);
    }

    #[test]
    fn rejects_bad_dimensions_and_spacing() {
        assert_eq!(
            Grid3D::new(2, 3, 3, (1.0, 1.0, 1.0), InitSpec::Zero).unwrap_err(),
            GridError::DimensionTooSmall(2, 3, 3)
        );
        assert!(matches!(
            Grid3D::new(3, 3, 3, (0.0, 1.0, 1.0), InitSpec::Zero).unwrap_err(),
            GridError::NonPositiveSpacing(..)
        ));
    }

    #[test]
    fn seeded_init_is_deterministic() {
        let a = Grid3D::new(16, 16, 16, (1.0, 1.0, 1.0), seeded42()).unwrap();
        let b = Grid3D::new(16, 16, 16, (1.0, 1.0, 1.0), seeded42()).unwrap();
        assert_eq!(a, b);
        assert!(a.all_finite());
        assert!(a.u.iter().all(|&x| (-1.0..1.0).contains(&x)));
    }

    /// Golden checksum of the seeded(42) 16^3 generator, frozen from the
    /// first verified run. Guards against accidental generator changes.
    #[test]
    fn seeded_16cube_checksum() {
        let g = Grid3D::new(16, 16, 16, (1.0, 1.0, 1.0), seeded42()).unwrap();
        assert_eq!(bits_checksum(&g), 0xee95_f3d1_14fc_8606);
    }

    fn seeded42() -> InitSpec {
        InitSpec::Seeded { seed: 42, lo: -1.0, hi: 1.0 }
    }

    fn bits_checksum(g: &Grid3D) -> u64 {
        let mut h = 0xcbf2_9ce4_8422_2325u64; // FNV-1a over the raw bits
        for x in g.u.iter().chain(&g.v).chain(&g.w) {
            for b in x.to_le_bytes() {
                h ^= b as u64;
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
        h
    }

    #[test]
    fn bundle_from_constant_grid() {
        let g = Grid3D::new(5, 5, 5, (1.0, 1.0, 1.0), InitSpec::Constant(3.0)).unwrap();
        let b = extract_bundle(&g, Field::V, 2, 2, 2).unwrap();
        assert!(b.padding_ok());
        for l in 0..USEFUL_LANES {
            assert_eq!(b.lhs[l], 3.0);
            assert_eq!(b.rhs[l], 3.0);
            assert_eq!(b.mul[l], 0.25 * 3.0);
        }
    }

    #[test]
    fn bundle_zero_velocity_has_zero_multipliers() {
        let g = Grid3D::new(4, 4, 4, (2.0, 2.0, 2.0), InitSpec::Zero).unwrap();
        let b = extract_bundle(&g, Field::U, 1, 1, 1).unwrap();
        assert!(b.mul.iter().all(|&m| m == 0.0));
    }

    #[test]
    fn bundle_rejects_boundary() {
        let g = Grid3D::new(4, 4, 4, (1.0, 1.0, 1.0), InitSpec::Zero).unwrap();
        assert_eq!(extract_bundle(&g, Field::U, 0, 1, 1).unwrap_err(), GridError::NotInterior(0, 1, 1));
        assert_eq!(extract_bundle(&g, Field::U, 3, 1, 1).unwrap_err(), GridError::NotInterior(3, 1, 1));
    }

    #[test]
    fn bundle_extraction_is_pure() {
        let g = Grid3D::new(8, 8, 8, (1.0, 0.5, 2.0), seeded42()).unwrap();
        let a = extract_bundle(&g, Field::W, 3, 4, 5).unwrap();
        let b = extract_bundle(&g, Field::W, 3, 4, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn decompose_identity() {
        let g = Grid3D::new(16, 16, 16, (1.0, 1.0, 1.0), seeded42()).unwrap();
        let slabs = decompose(&g, 1).unwrap();
        assert_eq!(slabs.len(), 1);
        assert_eq!(slabs[0].grid, g);
        assert_eq!(slabs[0].k_interior_start, 1);
        assert_eq!(slabs[0].k_interior_len, 14);
    }

    #[test]
    fn decompose_rejects_too_many_parts() {
        let g = Grid3D::new(16, 16, 16, (1.0, 1.0, 1.0), InitSpec::Zero).unwrap();
        assert_eq!(
            decompose(&g, 8).unwrap_err(),
            GridError::TooManyParts { parts: 8, needed: 24, nz: 16 }
        );
    }

    #[test]
    fn decompose_covers_interior_with_halos() {
        let g = Grid3D::new(16, 16, 16, (1.0, 1.0, 1.0), seeded42()).unwrap();
        let slabs = decompose(&g, 4).unwrap();
        assert_eq!(slabs.len(), 4);
        let total: usize = slabs.iter().map(|s| s.k_interior_len).sum();
        assert_eq!(total, 14);
        for s in &slabs {
            assert_eq!(s.grid.nz, s.k_interior_len + 2);
            // Halo'd slab content matches the parent grid plane-for-plane.
            for kk in 0..s.grid.nz {
                let gk = s.k_interior_start - 1 + kk;
                for j in 0..16 {
                    for i in 0..16 {
                        assert_eq!(s.grid.at(Field::U, i, j, kk), g.at(Field::U, i, j, gk));
                    }
                }
            }
        }
    }

    #[test]
    fn pwgrid_roundtrip() {
        let g = Grid3D::new(4, 3, 5, (1.0, 2.0, 3.0), seeded42()).unwrap();
        let mut buf = Vec::new();
        g.write_pwgrid(&mut buf).unwrap();
        assert!(buf.starts_with(b"PWGRID 4 3 5\n"));
        let back = Grid3D::read_pwgrid(&mut buf.as_slice(), (1.0, 2.0, 3.0)).unwrap();
        assert_eq!(back, g);
    }
}
