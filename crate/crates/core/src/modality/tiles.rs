use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tokens one 384x384 tile yields after the pooling projector.
pub const TOKENS_PER_TILE: usize = 182;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TilingConfig {
    pub tile_px: usize,
    /// Upper bound on `grid_rows * grid_cols`.
    pub max_tiles: usize,
}

impl Default for TilingConfig {
    fn default() -> Self {
        Self {
            tile_px: 384,
            max_tiles: 9,
        }
    }
}

/// AnyRes layout of one image: a grid of local tiles plus, for grids larger
/// than 1x1, one down-sampled global tile.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "TilePlanJson", try_from = "TilePlanJson")]
pub struct TilePlan {
    pub grid_rows: usize,
    pub grid_cols: usize,
    pub has_global_tile: bool,
    pub tile_px: usize,
    pub tokens_per_tile: usize,
    pub total_tokens: usize,
}

#[derive(Serialize, Deserialize)]
struct TilePlanJson {
    grid: [usize; 2],
    global: bool,
    tokens: usize,
}

impl From<TilePlan> for TilePlanJson {
    fn from(p: TilePlan) -> Self {
        Self {
            grid: [p.grid_rows, p.grid_cols],
            global: p.has_global_tile,
            tokens: p.total_tokens,
        }
    }
}

impl TryFrom<TilePlanJson> for TilePlan {
    type Error = Error;

    fn try_from(j: TilePlanJson) -> Result<Self> {
        let plan = TilePlan::from_grid(j.grid[0], j.grid[1], 384)?;
        if plan.has_global_tile != j.global || plan.total_tokens != j.tokens {
            return Err(Error::contract(format!(
                "inconsistent tile plan: grid {:?} implies global={} tokens={}",
                j.grid, plan.has_global_tile, plan.total_tokens
            )));
        }
        Ok(plan)
    }
}

impl TilePlan {
    fn from_grid(grid_rows: usize, grid_cols: usize, tile_px: usize) -> Result<Self> {
        if grid_rows == 0 || grid_cols == 0 {
            return Err(Error::contract("tile grid must be at least 1x1"));
        }
        let has_global_tile = grid_rows * grid_cols > 1;
        let tiles = grid_rows * grid_cols + usize::from(has_global_tile);
        Ok(Self {
            grid_rows,
            grid_cols,
            has_global_tile,
            tile_px,
            tokens_per_tile: TOKENS_PER_TILE,
            total_tokens: tiles * TOKENS_PER_TILE,
        })
    }

    pub fn tile_count(&self) -> usize {
        self.total_tokens / self.tokens_per_tile
    }
}

pub fn plan_tiles(width_px: usize, height_px: usize) -> Result<TilePlan> {
    plan_tiles_with(&TilingConfig::default(), width_px, height_px)
}

/// Splits an image into `ceil(h / tile) x ceil(w / tile)` tiles. When that
/// exceeds `max_tiles`, the larger grid side (rows on ties) shrinks by one
/// until it fits.
pub fn plan_tiles_with(cfg: &TilingConfig, width_px: usize, height_px: usize) -> Result<TilePlan> {
    if width_px == 0 || height_px == 0 {
        return Err(Error::contract(format!(
            "image dimensions must be positive, got {width_px}x{height_px}"
        )));
    }
    if cfg.tile_px == 0 || cfg.max_tiles == 0 {
        return Err(Error::contract("tile_px and max_tiles must be positive"));
    }
    let mut rows = height_px.div_ceil(cfg.tile_px);
    let mut cols = width_px.div_ceil(cfg.tile_px);
    while rows * cols > cfg.max_tiles {
        if rows >= cols {
            rows -= 1;
        } else {
            cols -= 1;
        }
    }
    TilePlan::from_grid(rows, cols, cfg.tile_px)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn examples() {
        let p = plan_tiles(384, 384).unwrap();
        assert_eq!(
            (p.grid_rows, p.grid_cols, p.has_global_tile, p.total_tokens),
            (1, 1, false, 182)
        );
        let p = plan_tiles(768, 768).unwrap();
        assert_eq!((p.grid_rows, p.grid_cols, p.has_global_tile), (2, 2, true));
        assert_eq!(p.tile_count(), 5);
        assert_eq!(p.total_tokens, 910);
        assert!(plan_tiles(0, 384).is_err());
    }

    #[test]
    fn grid_cap() {
        let p = plan_tiles(4000, 4000).unwrap();
        assert_eq!((p.grid_rows, p.grid_cols), (3, 3));
        let p = plan_tiles(4000, 384).unwrap();
        assert_eq!((p.grid_rows, p.grid_cols), (1, 9));
        let p = plan_tiles_with(
            &TilingConfig {
                tile_px: 384,
                max_tiles: 100,
            },
            4000,
            4000,
        )
        .unwrap();
        assert_eq!((p.grid_rows, p.grid_cols), (10, 10));
    }

    #[test]
    fn json_shape() {
        let s = serde_json::to_string(&plan_tiles(768, 384).unwrap()).unwrap();
        assert_eq!(s, r#"{"grid":[1,2],"global":true,"tokens":546}"#);
        let back: TilePlan = serde_json::from_str(&s).unwrap();
        assert_eq!(back.total_tokens, 546);
        assert!(serde_json::from_str::<TilePlan>(r#"{"grid":[1,1],"global":true,"tokens":364}"#).is_err());
    }
}
