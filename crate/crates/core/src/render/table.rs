use serde::{Deserialize, Serialize};

use super::font::{check_glyphs, Metrics, Weight};
use super::raster::{Raster, Rect};
use super::{finish, normalize_text, wrap, PixelCanvas, RenderSpec};
use crate::error::{Error, Result};

const CELL_PAD_X: u32 = 6;
const CELL_PAD_Y: u32 = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Align {
    #[default]
    Left,
    Center,
    Right,
}

#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct TableData {
    pub columns: Vec<String>,
    #[serde(default)]
    pub rows: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub align: Option<Vec<Align>>,
}

impl TableData {
    pub fn new(columns: Vec<String>, rows: Vec<Vec<String>>) -> Self {
        Self {
            columns,
            rows,
            align: None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.columns.is_empty() {
            return Err(Error::EmptyInput);
        }
        let expected = self.columns.len();
        if let Some(row) = self.rows.iter().position(|r| r.len() != expected) {
            return Err(Error::RaggedTable {
                row,
                got: self.rows[row].len(),
                expected,
            });
        }
        if let Some(a) = &self.align {
            if a.len() != expected {
                return Err(Error::RaggedTable {
                    row: usize::MAX,
                    got: a.len(),
                    expected,
                });
            }
        }
        Ok(())
    }

    /// Pipe-delimited text form, one line per row, header first.
    pub fn to_markdown(&self) -> String {
        let line = |cells: &[String]| format!("| {} |", cells.join(" | "));
        let mut out = vec![line(&self.columns)];
        out.push(format!("|{}|", vec!["---"; self.columns.len()].join("|")));
        out.extend(self.rows.iter().map(|r| line(r)));
        out.join("\n")
    }

    fn align(&self, col: usize) -> Align {
        self.align.as_ref().map(|a| a[col]).unwrap_or_default()
    }
}

/// Splits `available` among columns: narrow columns keep their natural width,
/// the rest share what is left equally.
fn fit_columns(natural: &[u32], available: u32, min_width: u32) -> Vec<u32> {
    if natural.iter().sum::<u32>() <= available {
        return natural.to_vec();
    }
    let mut widths = vec![0u32; natural.len()];
    let mut open: Vec<usize> = (0..natural.len()).collect();
    let mut budget = available;
    loop {
        let share = budget / open.len().max(1) as u32;
        let (fits, rest): (Vec<usize>, Vec<usize>) =
            open.iter().partition(|&&i| natural[i] <= share);
        if fits.is_empty() {
            for &i in &rest {
                widths[i] = share.max(min_width);
            }
            break;
        }
        for &i in &fits {
            widths[i] = natural[i];
            budget -= natural[i];
        }
        open = rest;
        if open.is_empty() {
            break;
        }
    }
    widths
}

/// Ruled grid with a shaded, bold header row. Column widths follow content
/// and shrink to fit `width_max`, wrapping cell text where needed.
pub fn render_table(table: &TableData, spec: &RenderSpec) -> Result<PixelCanvas> {
    spec.validate()?;
    table.validate()?;
    let regular = spec.metrics(Weight::Regular);
    let bold = spec.metrics(Weight::Bold);
    let header: Vec<String> = table.columns.iter().map(|c| normalize_text(c)).collect();
    let body: Vec<Vec<String>> = table
        .rows
        .iter()
        .map(|r| r.iter().map(|c| normalize_text(c)).collect())
        .collect();
    for h in &header {
        check_glyphs(h, Weight::Bold)?;
    }
    for cell in body.iter().flatten() {
        check_glyphs(cell, Weight::Regular)?;
    }

    let ncols = header.len() as u32;
    let cell_width = |m: &Metrics, s: &str| {
        s.split('\n').map(|l| m.text_width(l)).fold(0.0f32, f32::max).ceil() as u32
    };
    let natural: Vec<u32> = (0..header.len())
        .map(|c| {
            let h = cell_width(&bold, &header[c]);
            let b = body.iter().map(|r| cell_width(&regular, &r[c])).max().unwrap_or(0);
            h.max(b) + 2 * CELL_PAD_X
        })
        .collect();
    let available = spec
        .width_max
        .saturating_sub(2 * spec.padding + ncols + 1);
    let min_col = 2 * CELL_PAD_X + 2 * spec.font_size.ceil() as u32;
    let widths = fit_columns(&natural, available, min_col);

    let line_height = spec.line_height(&regular);
    let wrap_cell = |m: &Metrics, s: &str, w: u32| -> Vec<String> {
        let inner = w.saturating_sub(2 * CELL_PAD_X).max(1) as f32;
        s.split('\n').flat_map(|p| wrap(p, inner, m)).collect()
    };
    let mut grid: Vec<Vec<Vec<String>>> = Vec::with_capacity(body.len() + 1);
    grid.push(
        header
            .iter()
            .zip(&widths)
            .map(|(s, &w)| wrap_cell(&bold, s, w))
            .collect(),
    );
    for row in &body {
        grid.push(
            row.iter()
                .zip(&widths)
                .map(|(s, &w)| wrap_cell(&regular, s, w))
                .collect(),
        );
    }
    let row_heights: Vec<u32> = grid
        .iter()
        .map(|cells| {
            let lines = cells.iter().map(Vec::len).max().unwrap_or(1).max(1) as u32;
            lines * line_height + 2 * CELL_PAD_Y
        })
        .collect();

    let grid_w = widths.iter().sum::<u32>() + ncols + 1;
    let grid_h = row_heights.iter().sum::<u32>() + row_heights.len() as u32 + 1;
    let width = (grid_w + 2 * spec.padding).clamp(spec.width_min, spec.width_max);
    let height = spec.snap_height(grid_h + 2 * spec.padding);
    let mut raster = Raster::new(width, height, spec.background);

    let x0 = spec.padding;
    let y0 = spec.padding;
    let header_shade = (spec.background as f32 * 0.88).round() as u8;
    raster.shade(
        Rect {
            x0,
            y0,
            x1: x0 + grid_w,
            y1: y0 + row_heights[0] + 2,
        },
        header_shade,
    );

    let mut col_x = Vec::with_capacity(widths.len() + 1);
    let mut x = x0;
    for w in &widths {
        col_x.push(x);
        x += w + 1;
    }
    col_x.push(x);
    let mut row_y = Vec::with_capacity(row_heights.len() + 1);
    let mut y = y0;
    for h in &row_heights {
        row_y.push(y);
        y += h + 1;
    }
    row_y.push(y);

    for (r, cells) in grid.iter().enumerate() {
        let m = if r == 0 { &bold } else { &regular };
        for (c, lines) in cells.iter().enumerate() {
            let cell = Rect {
                x0: col_x[c] + 1,
                y0: row_y[r] + 1,
                x1: col_x[c + 1],
                y1: row_y[r + 1],
            };
            let inner = widths[c] - 2 * CELL_PAD_X;
            for (i, line) in lines.iter().enumerate() {
                let lw = m.text_width(line);
                let slack = (inner as f32 - lw).max(0.0);
                let dx = match table.align(c) {
                    Align::Left => 0.0,
                    Align::Center => (slack / 2.0).floor(),
                    Align::Right => slack,
                };
                let pen = (cell.x0 + CELL_PAD_X) as f32 + dx;
                let baseline = (cell.y0 + CELL_PAD_Y + i as u32 * line_height) as f32 + m.ascent;
                raster.draw_text(m, line, pen, baseline, cell);
            }
        }
    }

    let (top, bottom) = (row_y[0], *row_y.last().unwrap());
    for &x in &col_x {
        raster.fill_ink(Rect { x0: x, y0: top, x1: x + 1, y1: bottom + 1 });
    }
    for &y in &row_y {
        raster.fill_ink(Rect { x0: col_x[0], y0: y, x1: *col_x.last().unwrap() + 1, y1: y + 1 });
    }

    let input = serde_json::to_vec(table)?;
    finish(raster.into_gray(spec.foreground), width, height, spec, &input)
}
