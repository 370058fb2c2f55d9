use serde::{Deserialize, Serialize};

use super::{BBox, GeometryError, Point, Polygon};

/// Linear cell index, `row * nx + col`.
pub type CellId = u32;

/// Uniform square tessellation. Cell `(col, row)` covers
/// `[origin_x + col·size, origin_x + (col+1)·size) × [origin_y + row·size, …)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub origin_x: f64,
    pub origin_y: f64,
    pub cell_size: f64,
    pub nx: u32,
    pub ny: u32,
}

/// Covers `extent` with square cells, snapping the origin down to a multiple
/// of `cell_size`.
pub fn tessellate_grid(extent: BBox, cell_size: f64) -> Result<Grid, GeometryError> {
    if !(cell_size > 0.0) || !cell_size.is_finite() {
        return Err(GeometryError::InvalidCellSize(cell_size));
    }
    let finite = [extent.min_x, extent.min_y, extent.max_x, extent.max_y]
        .iter()
        .all(|v| v.is_finite());
    if !finite || extent.max_x <= extent.min_x || extent.max_y <= extent.min_y {
        return Err(GeometryError::InvalidExtent {
            min_x: extent.min_x,
            min_y: extent.min_y,
            max_x: extent.max_x,
            max_y: extent.max_y,
        });
    }
    let origin_x = (extent.min_x / cell_size).floor() * cell_size;
    let origin_y = (extent.min_y / cell_size).floor() * cell_size;
    let nx = ((extent.max_x - origin_x) / cell_size).ceil().max(1.0) as u32;
    let ny = ((extent.max_y - origin_y) / cell_size).ceil().max(1.0) as u32;
    Grid::new(origin_x, origin_y, cell_size, nx, ny)
}

impl Grid {
    pub fn new(
        origin_x: f64,
        origin_y: f64,
        cell_size: f64,
        nx: u32,
        ny: u32,
    ) -> Result<Self, GeometryError> {
        if !(cell_size > 0.0) || !cell_size.is_finite() {
            return Err(GeometryError::InvalidCellSize(cell_size));
        }
        if nx == 0 || ny == 0 {
            return Err(GeometryError::EmptyGrid { nx, ny });
        }
        Ok(Self {
            origin_x,
            origin_y,
            cell_size,
            nx,
            ny,
        })
    }

    pub fn cell_count(&self) -> usize {
        self.nx as usize * self.ny as usize
    }

    pub fn extent(&self) -> BBox {
        BBox::new(
            self.origin_x,
            self.origin_y,
            self.origin_x + self.nx as f64 * self.cell_size,
            self.origin_y + self.ny as f64 * self.cell_size,
        )
    }

    fn check(&self, col: i64, row: i64) -> Result<(), GeometryError> {
        if col < 0 || row < 0 || col >= self.nx as i64 || row >= self.ny as i64 {
            return Err(GeometryError::CellOutOfRange {
                col,
                row,
                nx: self.nx,
                ny: self.ny,
            });
        }
        Ok(())
    }

    pub fn cell_id(&self, col: u32, row: u32) -> Result<CellId, GeometryError> {
        self.check(col as i64, row as i64)?;
        Ok(row * self.nx + col)
    }

    /// `(col, row)` of a linear cell id.
    pub fn col_row(&self, id: CellId) -> Result<(u32, u32), GeometryError> {
        if id as usize >= self.cell_count() {
            return Err(GeometryError::CellOutOfRange {
                col: (id % self.nx) as i64,
                row: (id / self.nx) as i64,
                nx: self.nx,
                ny: self.ny,
            });
        }
        Ok((id % self.nx, id / self.nx))
    }

    pub fn cell_centroid(&self, col: u32, row: u32) -> Result<Point, GeometryError> {
        self.check(col as i64, row as i64)?;
        let half = self.cell_size / 2.0;
        Ok(Point::new(
            self.origin_x + col as f64 * self.cell_size + half,
            self.origin_y + row as f64 * self.cell_size + half,
        ))
    }

    pub fn centroid_of(&self, id: CellId) -> Result<Point, GeometryError> {
        let (c, r) = self.col_row(id)?;
        self.cell_centroid(c, r)
    }

    pub fn cell_bbox(&self, col: u32, row: u32) -> BBox {
        let x0 = self.origin_x + col as f64 * self.cell_size;
        let y0 = self.origin_y + row as f64 * self.cell_size;
        BBox::new(x0, y0, x0 + self.cell_size, y0 + self.cell_size)
    }

    pub fn cell_polygon(&self, col: u32, row: u32) -> Polygon {
        Polygon::rect(self.cell_bbox(col, row)).expect("grid cells are valid rectangles")
    }

    /// Inclusive `(col, row)` ranges of cells whose closed boxes meet `b`,
    /// clamped to the grid. `None` when `b` misses the grid.
    pub fn cells_overlapping(
        &self,
        b: &BBox,
    ) -> Option<(std::ops::RangeInclusive<u32>, std::ops::RangeInclusive<u32>)> {
        if !self.extent().intersects(b) {
            return None;
        }
        let to_idx = |v: f64, o: f64, n: u32| -> u32 {
            (((v - o) / self.cell_size).floor().max(0.0) as u32).min(n - 1)
        };
        let c0 = to_idx(b.min_x, self.origin_x, self.nx);
        let c1 = to_idx(b.max_x, self.origin_x, self.nx);
        let r0 = to_idx(b.min_y, self.origin_y, self.ny);
        let r1 = to_idx(b.max_y, self.origin_y, self.ny);
        Some((c0..=c1, r0..=r1))
    }
}
