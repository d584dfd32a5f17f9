//! Raster rendering of edge operations: one row of cells per fold, one cell
//! per explained instance, one pixel per adjacency entry.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::eval::candidate_from_row;
use crate::graph::{Dataset, Graph};
use crate::metrics::{ged, MetricsRow};

pub type Rgb = [u8; 3];

pub const WHITE: Rgb = [255, 255, 255];
pub const RED: Rgb = [255, 0, 0];
pub const GREEN: Rgb = [0, 160, 0];
pub const BLACK: Rgb = [0, 0, 0];
pub const SEPARATOR: Rgb = [160, 160, 160];

/// Colour of one adjacency entry: kept edges black, removed red, added
/// green, absent in both white.
pub fn entry_color(input: bool, candidate: bool) -> Rgb {
    match (input, candidate) {
        (true, true) => BLACK,
        (true, false) => RED,
        (false, true) => GREEN,
        (false, false) => WHITE,
    }
}

/// Pixel counts of one rendered cell.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct CellCounts {
    pub white: usize,
    pub red: usize,
    pub green: usize,
    pub black: usize,
}

/// An RGB image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Image {
    pub width: usize,
    pub height: usize,
    pub pixels: Vec<Rgb>,
}

impl Image {
    pub fn filled(width: usize, height: usize, color: Rgb) -> Self {
        Self {
            width,
            height,
            pixels: vec![color; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> Rgb {
        self.pixels[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, c: Rgb) {
        self.pixels[y * self.width + x] = c;
    }

    /// Binary portable pixmap (P6).
    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.reserve(self.pixels.len() * 3);
        for p in &self.pixels {
            out.extend_from_slice(p);
        }
        out
    }

    pub fn save_ppm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_ppm()).map_err(|e| Error::io(path, e))
    }
}

/// Draws the comparison of `input` and `candidate` with its top-left corner
/// at `(x0, y0)`. Returns the pixel counts.
pub fn draw_cell(
    img: &mut Image,
    x0: usize,
    y0: usize,
    input: &Graph,
    candidate: &Graph,
) -> CellCounts {
    let mut counts = CellCounts::default();
    for u in 0..input.n() {
        for v in 0..input.n() {
            let c = entry_color(input.has_edge(u, v), candidate.has_edge(u, v));
            match c {
                BLACK => counts.black += 1,
                RED => counts.red += 1,
                GREEN => counts.green += 1,
                _ => counts.white += 1,
            }
            img.set(x0 + v, y0 + u, c);
        }
    }
    counts
}

/// Per-cell accounting of a rendered grid.
#[derive(Clone, Debug, PartialEq)]
pub struct RenderedCell {
    pub fold: usize,
    pub column: usize,
    pub instance: usize,
    pub valid: bool,
    pub counts: CellCounts,
}

/// Renders every row of `rows`: folds as grid rows, instances of each fold
/// as columns in instance order. Invalid explanations leave a blank cell.
/// Every cell is checked against the edit distance of its row.
pub fn render_pictorial(ds: &Dataset, rows: &[MetricsRow]) -> Result<(Image, Vec<RenderedCell>)> {
    let first = rows
        .first()
        .ok_or_else(|| Error::Config("no results to render".into()))?;
    let n = instance(ds, first.instance)?.n();
    for r in rows {
        let m = instance(ds, r.instance)?.n();
        if m != n {
            return Err(Error::Shape(format!(
                "instance {} has {m} nodes, expected {n} for every cell",
                r.instance
            )));
        }
    }
    let folds = rows.iter().map(|r| r.fold).max().unwrap_or(0) + 1;
    let mut by_fold: Vec<Vec<&MetricsRow>> = vec![Vec::new(); folds];
    for r in rows {
        by_fold[r.fold].push(r);
    }
    for f in &mut by_fold {
        f.sort_by_key(|r| r.instance);
    }
    let columns = by_fold.iter().map(Vec::len).max().unwrap_or(0);
    let pitch = n + 1;
    let mut img = Image::filled(columns * pitch + 1, folds * pitch + 1, SEPARATOR);
    let mut cells = Vec::with_capacity(rows.len());
    for (fold, fold_rows) in by_fold.iter().enumerate() {
        for col in 0..columns {
            let (x0, y0) = (col * pitch + 1, fold * pitch + 1);
            let Some(r) = fold_rows.get(col) else {
                fill_blank(&mut img, x0, y0, n);
                continue;
            };
            let input = instance(ds, r.instance)?;
            let counts = if r.valid {
                let candidate = candidate_from_row(input, r)?;
                let counts = draw_cell(&mut img, x0, y0, input, &candidate);
                let distance = ged(input, &candidate)?;
                assert_eq!(
                    (counts.green + counts.red) as f64 / 2.0,
                    distance,
                    "coloured pixels must match the edit distance"
                );
                assert_eq!(counts.black / 2, input.edge_count() - r.removed.len());
                counts
            } else {
                fill_blank(&mut img, x0, y0, n);
                CellCounts {
                    white: n * n,
                    ..Default::default()
                }
            };
            cells.push(RenderedCell {
                fold,
                column: col,
                instance: r.instance,
                valid: r.valid,
                counts,
            });
        }
    }
    Ok((img, cells))
}

fn instance(ds: &Dataset, i: usize) -> Result<&Graph> {
    ds.instances
        .get(i)
        .map(|g| &g.graph)
        .ok_or(Error::NodeOutOfRange {
            index: i,
            n: ds.len(),
        })
}

fn fill_blank(img: &mut Image, x0: usize, y0: usize, n: usize) {
    for y in y0..y0 + n {
        for x in x0..x0 + n {
            img.set(x, y, WHITE);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::LabeledGraph;

    fn row(
        instance: usize,
        fold: usize,
        valid: bool,
        added: Vec<(usize, usize)>,
        removed: Vec<(usize, usize)>,
    ) -> MetricsRow {
        MetricsRow {
            instance,
            fold,
            label: 0,
            input_class: 0,
            candidate_class: u8::from(valid),
            valid,
            runtime_secs: 0.0,
            ged: (added.len() + removed.len()) as f64,
            oracle_calls: 1,
            correctness: u8::from(valid),
            sparsity: 0.0,
            fidelity: i8::from(valid),
            added,
            removed,
        }
    }

    fn path_ds() -> Dataset {
        let mut ds = Dataset::new("fixture");
        for _ in 0..2 {
            let g = Graph::from_edges(3, &[(0, 1), (1, 2)]).unwrap();
            ds.push(LabeledGraph::new(g, 0).unwrap()).unwrap();
        }
        ds
    }

    #[test]
    fn path_to_triangle_cell() {
        let ds = path_ds();
        let (img, cells) = render_pictorial(&ds, &[row(0, 0, true, vec![(0, 2)], vec![])]).unwrap();
        assert_eq!((img.width, img.height), (5, 5));
        let c = cells[0].counts;
        assert_eq!((c.green, c.black, c.red, c.white), (2, 4, 0, 3));
        assert_eq!(img.get(3, 1), GREEN);
        assert_eq!(img.get(1, 3), GREEN);
        assert_eq!(img.get(2, 1), BLACK);
        assert_eq!(img.get(0, 0), SEPARATOR);
    }

    #[test]
    fn removal_has_no_green() {
        let ds = path_ds();
        let (_, cells) = render_pictorial(&ds, &[row(0, 0, true, vec![], vec![(1, 2)])]).unwrap();
        let c = cells[0].counts;
        assert_eq!((c.green, c.red, c.black), (0, 2, 2));
    }

    #[test]
    fn invalid_cell_is_blank() {
        let ds = path_ds();
        let rows = [
            row(0, 0, false, vec![], vec![]),
            row(1, 1, true, vec![(0, 2)], vec![]),
        ];
        let (img, cells) = render_pictorial(&ds, &rows).unwrap();
        assert_eq!((img.width, img.height), (5, 9));
        assert_eq!(cells[0].counts.white, 9);
        for y in 1..4 {
            for x in 1..4 {
                assert_eq!(img.get(x, y), WHITE);
            }
        }
    }

    #[test]
    fn ppm_header_and_size() {
        let img = Image::filled(2, 3, WHITE);
        let bytes = img.to_ppm();
        assert!(bytes.starts_with(b"P6\n2 3\n255\n"));
        assert_eq!(bytes.len(), 11 + 18);
    }

    #[test]
    fn mixed_sizes_are_rejected() {
        let mut other = Dataset::new("x");
        other
            .push(LabeledGraph::new(Graph::from_edges(3, &[]).unwrap(), 0).unwrap())
            .unwrap();
        other
            .push(LabeledGraph::new(Graph::from_edges(4, &[]).unwrap(), 0).unwrap())
            .unwrap();
        let rows = [
            row(0, 0, false, vec![], vec![]),
            row(1, 0, false, vec![], vec![]),
        ];
        assert!(matches!(
            render_pictorial(&other, &rows),
            Err(Error::Shape(_))
        ));
    }
}
