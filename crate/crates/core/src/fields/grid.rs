use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use super::contraction::CONTRACTED_RADIUS;
use super::decoder::DecoderWeights;
use crate::error::{Error, Result};
use crate::math::{floor, powf, round, Vec3};

/// Per-axis multipliers of the spatial hash. The x prime is 1 so that
/// neighbouring cells along x stay adjacent in memory.
pub const HASH_PRIMES: [u32; 3] = [1, 2_654_435_761, 805_459_861];

/// Amplitude of the uniform table initialisation.
const TABLE_INIT: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashGridConfig {
    pub num_levels: u32,
    /// Entries per level; must be a power of two.
    pub table_size: u32,
    /// Components per entry.
    pub feature_dim: u32,
    pub min_resolution: u32,
    pub max_resolution: u32,
}

impl Default for HashGridConfig {
    fn default() -> Self {
        HashGridConfig {
            num_levels: 4,
            table_size: 1 << 21,
            feature_dim: 4,
            min_resolution: 256,
            max_resolution: 4096,
        }
    }
}

impl HashGridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_levels == 0 || self.feature_dim == 0 || self.min_resolution == 0 {
            return Err(Error::config("levels, feature_dim and min_resolution must be positive"));
        }
        if !self.table_size.is_power_of_two() {
            return Err(Error::config(format!(
                "table_size {} is not a power of two",
                self.table_size
            )));
        }
        if self.max_resolution < self.min_resolution {
            return Err(Error::config("max_resolution < min_resolution"));
        }
        if self.num_levels == 1 && self.min_resolution != self.max_resolution {
            return Err(Error::config(
                "a single level needs min_resolution == max_resolution",
            ));
        }
        Ok(())
    }

    /// Width of the concatenated embedding.
    pub fn embedding_dim(&self) -> usize {
        (self.num_levels * self.feature_dim) as usize
    }

    fn level_len(&self) -> usize {
        self.table_size as usize * self.feature_dim as usize
    }
}

/// Geometric progression of grid resolutions from `min_resolution` to
/// `max_resolution`, rounded to nearest.
pub fn level_resolutions(config: &HashGridConfig) -> Result<Vec<u32>> {
    config.validate()?;
    let n = config.num_levels as usize;
    if n == 1 {
        return Ok(vec![config.min_resolution]);
    }
    let min = config.min_resolution as f64;
    let growth = powf(
        config.max_resolution as f64 / min,
        1.0 / (n as f64 - 1.0),
    );
    let mut out = Vec::with_capacity(n);
    for l in 0..n {
        let r = if l == 0 {
            config.min_resolution
        } else if l == n - 1 {
            config.max_resolution
        } else {
            round(min * powf(growth, l as f64)) as u32
        };
        if let Some(&prev) = out.last() {
            if r < prev {
                return Err(Error::config("level resolutions are not non-decreasing"));
            }
        }
        out.push(r);
    }
    Ok(out)
}

/// Spatial hash of an integer grid vertex into `[0, table_size)`.
#[inline]
pub fn hash_index(coord: [u32; 3], table_size: u32) -> u32 {
    let h = coord[0].wrapping_mul(HASH_PRIMES[0])
        ^ coord[1].wrapping_mul(HASH_PRIMES[1])
        ^ coord[2].wrapping_mul(HASH_PRIMES[2]);
    h & table_size.wrapping_sub(1)
}

/// Affine map from the radius-2 contracted ball onto the unit cube.
#[inline]
pub fn to_grid_space(p_contracted: Vec3) -> Vec3 {
    (p_contracted + Vec3::splat(CONTRACTED_RADIUS)) / (2.0 * CONTRACTED_RADIUS)
}

/// Interpolation stencil of one level: the eight cell corners, their
/// trilinear weights and the gradient of each weight with respect to the
/// grid-space position.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LevelStencil {
    /// Entry index within the level's table.
    pub entries: [usize; 8],
    pub weights: [f64; 8],
    pub weight_grads: [[f64; 3]; 8],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct LevelInfo {
    resolution: u32,
    dense: bool,
}

/// Multi-level hashed embedding grid plus its decoder.
#[derive(Debug, Clone, PartialEq)]
pub struct HashGridField {
    config: HashGridConfig,
    levels: Vec<LevelInfo>,
    /// All levels back to back, `table_size * feature_dim` values each.
    tables: Vec<f64>,
    pub decoder: DecoderWeights,
}

impl HashGridField {
    /// Tables drawn uniformly from a small symmetric interval.
    pub fn random<R: Rng + ?Sized>(
        config: HashGridConfig,
        decoder: DecoderWeights,
        rng: &mut R,
    ) -> Result<Self> {
        config.validate()?;
        let len = config.level_len() * config.num_levels as usize;
        let tables = (0..len)
            .map(|_| rng.random_range(-TABLE_INIT..=TABLE_INIT))
            .collect();
        Self::from_tables(config, tables, decoder)
    }

    pub fn zeros(config: HashGridConfig, decoder: DecoderWeights) -> Result<Self> {
        config.validate()?;
        let len = config.level_len() * config.num_levels as usize;
        Self::from_tables(config, vec![0.0; len], decoder)
    }

    /// `tables` holds every level back to back.
    pub fn from_tables(
        config: HashGridConfig,
        tables: Vec<f64>,
        decoder: DecoderWeights,
    ) -> Result<Self> {
        let resolutions = level_resolutions(&config)?;
        let expected = config.level_len() * config.num_levels as usize;
        if tables.len() != expected {
            return Err(Error::DimensionMismatch {
                what: "hash tables",
                expected,
                got: tables.len(),
            });
        }
        if tables.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("hash tables"));
        }
        if decoder.input_dim() != config.embedding_dim() {
            return Err(Error::DimensionMismatch {
                what: "decoder input",
                expected: config.embedding_dim(),
                got: decoder.input_dim(),
            });
        }
        let levels = resolutions
            .into_iter()
            .map(|resolution| {
                let side = resolution as u64 + 1;
                LevelInfo {
                    resolution,
                    dense: side * side * side <= config.table_size as u64,
                }
            })
            .collect();
        Ok(HashGridField {
            config,
            levels,
            tables,
            decoder,
        })
    }

    pub fn config(&self) -> &HashGridConfig {
        &self.config
    }

    pub fn resolutions(&self) -> Vec<u32> {
        self.levels.iter().map(|l| l.resolution).collect()
    }

    /// Whether `level` indexes its vertices densely instead of hashing.
    pub fn is_dense(&self, level: usize) -> bool {
        self.levels[level].dense
    }

    pub fn table(&self, level: usize) -> &[f64] {
        let n = self.config.level_len();
        &self.tables[level * n..(level + 1) * n]
    }

    pub fn table_mut(&mut self, level: usize) -> &mut [f64] {
        let n = self.config.level_len();
        &mut self.tables[level * n..(level + 1) * n]
    }

    pub fn tables(&self) -> &[f64] {
        &self.tables
    }

    pub fn tables_mut(&mut self) -> &mut [f64] {
        &mut self.tables
    }

    /// Table entry that stores grid vertex `coord` of `level`.
    #[inline]
    pub fn vertex_entry(&self, level: usize, coord: [u32; 3]) -> usize {
        let info = self.levels[level];
        if info.dense {
            let side = info.resolution as usize + 1;
            coord[0] as usize + side * (coord[1] as usize + side * coord[2] as usize)
        } else {
            hash_index(coord, self.config.table_size) as usize
        }
    }

    /// Checks that a contracted point lies in the encodable domain and maps
    /// it into the unit cube.
    pub fn grid_position(p_contracted: Vec3) -> Result<Vec3> {
        if !p_contracted.is_finite() {
            return Err(Error::NonFinite("encode input"));
        }
        let norm = p_contracted.norm();
        if norm > CONTRACTED_RADIUS * (1.0 + 1e-12) {
            return Err(Error::OutOfDomain { norm });
        }
        let g = to_grid_space(p_contracted);
        Ok(Vec3::new(
            g.x.clamp(0.0, 1.0),
            g.y.clamp(0.0, 1.0),
            g.z.clamp(0.0, 1.0),
        ))
    }

    /// Trilinear stencil of `level` at grid-space position `g` in `[0,1]^3`.
    pub fn stencil(&self, level: usize, g: Vec3) -> LevelStencil {
        let res = self.levels[level].resolution;
        let scale = res as f64;
        let mut base = [0u32; 3];
        let mut frac = [0.0f64; 3];
        for axis in 0..3 {
            let x = g[axis] * scale;
            let cell = floor(x).clamp(0.0, (res - 1) as f64);
            base[axis] = cell as u32;
            frac[axis] = x - cell;
        }
        let mut st = LevelStencil {
            entries: [0; 8],
            weights: [0.0; 8],
            weight_grads: [[0.0; 3]; 8],
        };
        for corner in 0..8 {
            let mut coord = base;
            let mut w = [0.0; 3];
            let mut dw = [0.0; 3];
            for axis in 0..3 {
                if (corner >> axis) & 1 == 1 {
                    coord[axis] += 1;
                    w[axis] = frac[axis];
                    dw[axis] = scale;
                } else {
                    w[axis] = 1.0 - frac[axis];
                    dw[axis] = -scale;
                }
            }
            st.entries[corner] = self.vertex_entry(level, coord);
            st.weights[corner] = w[0] * w[1] * w[2];
            st.weight_grads[corner] = [dw[0] * w[1] * w[2], w[0] * dw[1] * w[2], w[0] * w[1] * dw[2]];
        }
        st
    }

    /// Concatenated per-level trilinear embeddings of a contracted point.
    pub fn encode(&self, p_contracted: Vec3) -> Result<Vec<f64>> {
        let mut out = vec![0.0; self.config.embedding_dim()];
        self.encode_into(p_contracted, &mut out)?;
        Ok(out)
    }

    pub fn encode_into(&self, p_contracted: Vec3, out: &mut [f64]) -> Result<()> {
        if out.len() != self.config.embedding_dim() {
            return Err(Error::DimensionMismatch {
                what: "embedding buffer",
                expected: self.config.embedding_dim(),
                got: out.len(),
            });
        }
        let g = Self::grid_position(p_contracted)?;
        let f = self.config.feature_dim as usize;
        for level in 0..self.levels.len() {
            let st = self.stencil(level, g);
            let table = self.table(level);
            let slice = &mut out[level * f..(level + 1) * f];
            slice.fill(0.0);
            for corner in 0..8 {
                let w = st.weights[corner];
                let entry = &table[st.entries[corner] * f..(st.entries[corner] + 1) * f];
                for (o, v) in slice.iter_mut().zip(entry) {
                    *o += w * v;
                }
            }
        }
        Ok(())
    }

    /// Same as [`encode_into`](Self::encode_into) but also returns the
    /// stencils used, for differentiation.
    pub fn encode_traced(&self, p_contracted: Vec3, out: &mut [f64]) -> Result<Vec<LevelStencil>> {
        self.encode_into(p_contracted, out)?;
        let g = Self::grid_position(p_contracted)?;
        Ok((0..self.levels.len()).map(|l| self.stencil(l, g)).collect())
    }
}
