//! Chain and square-lattice geometry, snapshots, and dual bond fields.
//!
//! A `DualSquareGeom` of size `L` has an `L x L` grid of vortex sites
//! (plaquettes) sitting inside an `(L+1) x (L+1)` grid of dual spins. Sites,
//! spins and edges are indexed row-major from the top-left. Edges are listed
//! horizontal block first, then vertical block. Boundaries are open and every
//! plaquette is bounded by exactly four edges, so every vortex can be flipped
//! independently by flipping a path of edges that exits through the boundary.

use std::fmt;

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Boundary {
    Open,
    Periodic,
}

/// A 1D chain of `len` sites.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ChainGeom {
    len: usize,
    boundary: Boundary,
}

impl ChainGeom {
    pub fn new(len: usize, boundary: Boundary) -> Result<Self> {
        if len < 2 {
            return Err(Error::Invalid(format!("chain length must be >= 2, got {len}")));
        }
        Ok(Self { len, boundary })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn boundary(&self) -> Boundary {
        self.boundary
    }

    /// Nearest-neighbor site pairs.
    pub fn bonds(&self) -> Vec<(usize, usize)> {
        let mut out: Vec<(usize, usize)> = (0..self.len - 1).map(|i| (i, i + 1)).collect();
        if self.boundary == Boundary::Periodic && self.len > 2 {
            out.push((self.len - 1, 0));
        }
        out
    }
}

/// Rectangular grid of Ising spins with nearest-neighbor edges and open
/// boundaries. This is the substrate the tensor-network contraction runs on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct SpinGrid {
    pub rows: usize,
    pub cols: usize,
}

impl SpinGrid {
    pub fn new(rows: usize, cols: usize) -> Self {
        assert!(rows >= 1 && cols >= 1, "empty spin grid");
        Self { rows, cols }
    }

    pub fn spin_count(&self) -> usize {
        self.rows * self.cols
    }

    pub fn spin(&self, r: usize, c: usize) -> usize {
        r * self.cols + c
    }

    pub fn horizontal_count(&self) -> usize {
        self.rows * (self.cols - 1)
    }

    pub fn edge_count(&self) -> usize {
        self.horizontal_count() + (self.rows - 1) * self.cols
    }

    /// Edge between `(r, c)` and `(r, c + 1)`.
    pub fn h_edge(&self, r: usize, c: usize) -> usize {
        r * (self.cols - 1) + c
    }

    /// Edge between `(r, c)` and `(r + 1, c)`.
    pub fn v_edge(&self, r: usize, c: usize) -> usize {
        self.horizontal_count() + r * self.cols + c
    }

    /// Endpoints `(a, b)` of an edge; `a` is left of or above `b`.
    pub fn edge_endpoints(&self, e: usize) -> (usize, usize) {
        let h = self.horizontal_count();
        if e < h {
            let (r, c) = (e / (self.cols - 1), e % (self.cols - 1));
            (self.spin(r, c), self.spin(r, c + 1))
        } else {
            let k = e - h;
            let (r, c) = (k / self.cols, k % self.cols);
            (self.spin(r, c), self.spin(r + 1, c))
        }
    }
}

/// Square vortex grid with its dual spin lattice.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct DualSquareGeom {
    l: usize,
}

impl DualSquareGeom {
    pub fn new(l: usize) -> Result<Self> {
        if l == 0 {
            return Err(Error::Invalid("vortex grid side must be >= 1".into()));
        }
        Ok(Self { l })
    }

    /// Number of vortex sites per side.
    pub fn side(&self) -> usize {
        self.l
    }

    pub fn vortex_count(&self) -> usize {
        self.l * self.l
    }

    pub fn spin_count(&self) -> usize {
        (self.l + 1) * (self.l + 1)
    }

    pub fn edge_count(&self) -> usize {
        2 * self.l * (self.l + 1)
    }

    pub fn grid(&self) -> SpinGrid {
        SpinGrid::new(self.l + 1, self.l + 1)
    }

    pub fn plaquette(&self, r: usize, c: usize) -> usize {
        r * self.l + c
    }

    /// The four edges bounding plaquette `p`: top, bottom, left, right.
    pub fn plaquette_edges(&self, p: usize) -> [usize; 4] {
        let g = self.grid();
        let (r, c) = (p / self.l, p % self.l);
        [g.h_edge(r, c), g.h_edge(r + 1, c), g.v_edge(r, c), g.v_edge(r, c + 1)]
    }

    /// Plaquettes bordering edge `e` (one or two).
    pub fn edge_plaquettes(&self, e: usize) -> (Option<usize>, Option<usize>) {
        let g = self.grid();
        let l = self.l;
        if e < g.horizontal_count() {
            let (r, c) = (e / l, e % l);
            let above = (r > 0).then(|| self.plaquette(r - 1, c));
            let below = (r < l).then(|| self.plaquette(r, c));
            (above, below)
        } else {
            let k = e - g.horizontal_count();
            let (r, c) = (k / (l + 1), k % (l + 1));
            let left = (c > 0).then(|| self.plaquette(r, c - 1));
            let right = (c < l).then(|| self.plaquette(r, c));
            (left, right)
        }
    }

    /// Pairs of plaquettes sharing an edge.
    pub fn vortex_bonds(&self) -> Vec<(usize, usize)> {
        let l = self.l;
        let mut out = Vec::with_capacity(2 * l * l.saturating_sub(1));
        for r in 0..l {
            for c in 0..l {
                if c + 1 < l {
                    out.push((self.plaquette(r, c), self.plaquette(r, c + 1)));
                }
                if r + 1 < l {
                    out.push((self.plaquette(r, c), self.plaquette(r + 1, c)));
                }
            }
        }
        out
    }

    /// The straight column of horizontal edges from the bottom of plaquette `p`
    /// down to the lattice boundary. Flipping them toggles the vortex at `p` only.
    pub fn vortex_insertion_path(&self, p: usize) -> Result<Vec<usize>> {
        if p >= self.vortex_count() {
            return Err(Error::InvalidSite { index: p, count: self.vortex_count() });
        }
        let g = self.grid();
        let (r, c) = (p / self.l, p % self.l);
        Ok((r + 1..=self.l).map(|row| g.h_edge(row, c)).collect())
    }

    /// Central plaquette `(floor(L/2), floor(L/2))`.
    pub fn center(&self) -> usize {
        self.plaquette(self.l / 2, self.l / 2)
    }

    pub fn snapshot_shape(&self) -> (usize, usize) {
        (self.l, self.l)
    }
}

/// A ±1 measurement outcome on a chain (`rows == 1`) or a 2D grid.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Snapshot {
    rows: usize,
    cols: usize,
    values: Vec<i8>,
}

impl Snapshot {
    pub fn new(rows: usize, cols: usize, values: Vec<i8>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(Error::GeometryMismatch { expected: rows * cols, found: values.len() });
        }
        if let Some(v) = values.iter().find(|&&v| v != 1 && v != -1) {
            return Err(Error::Invalid(format!("snapshot value {v} is not ±1")));
        }
        Ok(Self { rows, cols, values })
    }

    pub fn chain(values: Vec<i8>) -> Result<Self> {
        let n = values.len();
        Self::new(1, n, values)
    }

    pub fn filled(rows: usize, cols: usize, v: i8) -> Self {
        assert!(v == 1 || v == -1);
        Self { rows, cols, values: vec![v; rows * cols] }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[i8] {
        &self.values
    }

    /// Row-major raster scan.
    pub fn raster(&self) -> &[i8] {
        &self.values
    }

    pub fn flip(&mut self, site: usize) {
        self.values[site] = -self.values[site];
    }

    /// Product of all values.
    pub fn parity(&self) -> i8 {
        if self.values.iter().filter(|&&v| v < 0).count() % 2 == 0 {
            1
        } else {
            -1
        }
    }

    /// Fraction of sites equal to −1.
    pub fn vortex_density(&self) -> f64 {
        self.values.iter().filter(|&&v| v < 0).count() as f64 / self.values.len() as f64
    }

    /// Snapshot whose bits are the binary digits of `index` (bit k set ⇒ site k is −1).
    pub fn from_index(rows: usize, cols: usize, index: u64) -> Self {
        let n = rows * cols;
        let values = (0..n).map(|k| if (index >> k) & 1 == 1 { -1 } else { 1 }).collect();
        Self { rows, cols, values }
    }

    fn write_rows(&self, f: &mut impl fmt::Write) -> fmt::Result {
        for r in 0..self.rows {
            for &v in &self.values[r * self.cols..(r + 1) * self.cols] {
                f.write_char(if v > 0 { '1' } else { '0' })?;
            }
            f.write_char('\n')?;
        }
        Ok(())
    }
}

impl fmt::Debug for Snapshot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Snapshot {}x{}", self.rows, self.cols)?;
        self.write_rows(f)
    }
}

/// Renders snapshots in the text format: one row per line, `0` for −1 and `1`
/// for +1, a blank line between consecutive snapshots.
pub fn format_snapshots<'a>(snaps: impl IntoIterator<Item = &'a Snapshot>) -> String {
    let mut out = String::new();
    for (k, s) in snaps.into_iter().enumerate() {
        if k > 0 {
            out.push('\n');
        }
        s.write_rows(&mut out).expect("writing to a String cannot fail");
    }
    out
}

/// Parses the snapshot text format. Lines starting with `#` are skipped.
pub fn parse_snapshots(text: &str) -> Result<Vec<Snapshot>> {
    let mut out = Vec::new();
    let mut rows: Vec<Vec<i8>> = Vec::new();
    let flush = |rows: &mut Vec<Vec<i8>>, out: &mut Vec<Snapshot>, line: usize| -> Result<()> {
        if rows.is_empty() {
            return Ok(());
        }
        let cols = rows[0].len();
        if rows.iter().any(|r| r.len() != cols) {
            return Err(Error::Parse { line, reason: "ragged snapshot rows".into() });
        }
        let n = rows.len();
        out.push(Snapshot::new(n, cols, rows.drain(..).flatten().collect())?);
        Ok(())
    };
    for (i, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.starts_with('#') {
            continue;
        }
        if line.is_empty() {
            flush(&mut rows, &mut out, i + 1)?;
            continue;
        }
        let row = line
            .chars()
            .map(|ch| match ch {
                '1' => Ok(1),
                '0' => Ok(-1),
                _ => Err(Error::Parse { line: i + 1, reason: format!("unexpected character {ch:?}") }),
            })
            .collect::<Result<Vec<i8>>>()?;
        rows.push(row);
    }
    flush(&mut rows, &mut out, text.lines().count())?;
    Ok(out)
}

/// ±1 couplings on the edges of a dual square lattice.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct BondField {
    geom: DualSquareGeom,
    values: Vec<i8>,
}

impl BondField {
    pub fn new(geom: DualSquareGeom, values: Vec<i8>) -> Result<Self> {
        if values.len() != geom.edge_count() {
            return Err(Error::GeometryMismatch { expected: geom.edge_count(), found: values.len() });
        }
        if values.iter().any(|&v| v != 1 && v != -1) {
            return Err(Error::Invalid("bond value is not ±1".into()));
        }
        Ok(Self { geom, values })
    }

    pub fn ferromagnetic(geom: DualSquareGeom) -> Self {
        Self { geom, values: vec![1; geom.edge_count()] }
    }

    pub fn geom(&self) -> DualSquareGeom {
        self.geom
    }

    pub fn values(&self) -> &[i8] {
        &self.values
    }

    pub fn flip(&mut self, edge: usize) {
        self.values[edge] = -self.values[edge];
    }

    pub fn flip_all(&mut self, edges: &[usize]) {
        for &e in edges {
            self.flip(e);
        }
    }
}

fn check_vortex_snapshot(geom: DualSquareGeom, x: &Snapshot) -> Result<()> {
    if x.len() != geom.vortex_count() {
        return Err(Error::GeometryMismatch { expected: geom.vortex_count(), found: x.len() });
    }
    Ok(())
}

/// Plaquette products of a bond field.
pub fn vortex_of_bonds(bonds: &BondField) -> Snapshot {
    let geom = bonds.geom;
    let values = (0..geom.vortex_count())
        .map(|p| geom.plaquette_edges(p).iter().map(|&e| bonds.values[e]).product())
        .collect();
    let (rows, cols) = geom.snapshot_shape();
    Snapshot { rows, cols, values }
}

/// Canonical bond field whose vortex configuration is `x`: for each −1 site the
/// straight column path below it is flipped.
pub fn reference_bonds(geom: DualSquareGeom, x: &Snapshot) -> Result<BondField> {
    check_vortex_snapshot(geom, x)?;
    let mut bonds = BondField::ferromagnetic(geom);
    let l = geom.side();
    // Column-wise prefix parity: edge h(row, c) is flipped iff an odd number of
    // vortices sit in column c above it.
    let g = geom.grid();
    for c in 0..l {
        let mut parity = 1i8;
        for r in 0..l {
            parity *= x.values[geom.plaquette(r, c)];
            bonds.values[g.h_edge(r + 1, c)] = parity;
        }
    }
    Ok(bonds)
}

/// Multiplies every bond by the product of its two endpoint gauge signs.
pub fn gauge_transform(bonds: &BondField, sigma: &[i8]) -> Result<BondField> {
    let geom = bonds.geom;
    if sigma.len() != geom.spin_count() {
        return Err(Error::GeometryMismatch { expected: geom.spin_count(), found: sigma.len() });
    }
    let g = geom.grid();
    let values = bonds
        .values
        .iter()
        .enumerate()
        .map(|(e, &j)| {
            let (a, b) = g.edge_endpoints(e);
            j * sigma[a] * sigma[b]
        })
        .collect();
    Ok(BondField { geom, values })
}
