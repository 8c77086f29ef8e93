//! Transition count table and the training loop that fills it.
//!
//! Rows are FROM states, columns TO states. Every state of one team centroid
//! occupies a contiguous run of `(cells_x * cells_y)^2` indices (a centroid
//! block), so restricting a query to one centroid is a slice operation.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::grid::{Cell, GridSpec, StateIndex};
use crate::predictor::Formation;
use crate::vision::{PackageReader, Record, VisionPackage};

/// Largest table the dense layout will allocate.
const MAX_ENTRIES: usize = 1 << 28;

const HEADER_TAG: &str = "FTABLE";
const FORMAT_VERSION: &str = "v1";

#[derive(Debug, Clone, PartialEq)]
pub struct TransitionTable {
    spec: GridSpec,
    counts: Vec<u64>,
    total: u64,
}

/// Half-open index range of the states sharing one team centroid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct CentroidBlock {
    pub start: usize,
    pub end: usize,
}

impl CentroidBlock {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.start == self.end
    }

    pub fn contains(&self, index: StateIndex) -> bool {
        (self.start..self.end).contains(&index.value())
    }
}

/// Index range of all states whose centroid digits equal `centroid`.
pub fn centroid_block(spec: &GridSpec, centroid: Cell) -> CentroidBlock {
    let (gl, gw) = (spec.cells_x() as usize, spec.cells_y() as usize);
    let size = spec.block_size();
    let start = centroid.cy as usize * (gl * gl * gw * gw)
        + centroid.cx as usize * (gl * gl * gw * gw * gw);
    CentroidBlock {
        start,
        end: start + size,
    }
}

/// Every centroid block in index order.
pub fn centroid_blocks(spec: &GridSpec) -> Vec<(Cell, CentroidBlock)> {
    (0..spec.cells_x())
        .flat_map(|cx| (0..spec.cells_y()).map(move |cy| Cell::new(cx, cy)))
        .map(|c| (c, centroid_block(spec, c)))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CentroidChoice {
    pub centroid: Cell,
    pub probability: f64,
    /// Mass flowing into the chosen block.
    pub count: u64,
    /// Mass leaving the FROM block over all columns.
    pub total: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionChoice {
    pub to: StateIndex,
    pub probability: f64,
    pub count: u64,
    pub row_total: u64,
}

impl TransitionTable {
    pub fn new(spec: GridSpec) -> Result<Self> {
        let n = spec.state_count();
        let entries = n
            .checked_mul(n)
            .filter(|&e| e <= MAX_ENTRIES)
            .ok_or_else(|| {
                Error::Config(format!(
                    "a {n} x {n} transition table does not fit in memory"
                ))
            })?;
        Ok(TransitionTable {
            spec,
            counts: vec![0; entries],
            total: 0,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    /// Number of states; the table is `size x size`.
    pub fn size(&self) -> usize {
        self.spec.state_count()
    }

    pub fn capacity(&self) -> usize {
        self.counts.len()
    }

    pub fn total_recorded(&self) -> u64 {
        self.total
    }

    fn check(&self, index: StateIndex) -> Result<usize> {
        let i = index.value();
        if i >= self.size() {
            return Err(Error::validation(format!(
                "state index {i} out of range 0..{}",
                self.size()
            )));
        }
        Ok(i)
    }

    pub fn record(&mut self, from: StateIndex, to: StateIndex) -> Result<()> {
        self.add(from, to, 1)
    }

    fn add(&mut self, from: StateIndex, to: StateIndex, count: u64) -> Result<()> {
        let (f, t) = (self.check(from)?, self.check(to)?);
        let n = self.size();
        self.counts[f * n + t] += count;
        self.total += count;
        Ok(())
    }

    pub fn count(&self, from: StateIndex, to: StateIndex) -> u64 {
        let n = self.size();
        self.counts[from.value() * n + to.value()]
    }

    pub fn row(&self, from: StateIndex) -> &[u64] {
        let n = self.size();
        &self.counts[from.value() * n..(from.value() + 1) * n]
    }

    pub fn row_total(&self, from: StateIndex) -> u64 {
        self.row(from).iter().sum()
    }

    /// Number of distinct transitions seen at least once.
    pub fn nonzero_entries(&self) -> usize {
        self.counts.iter().filter(|&&c| c > 0).count()
    }

    /// Nonzero entries in ascending (from, to) order.
    pub fn entries(&self) -> impl Iterator<Item = (StateIndex, StateIndex, u64)> + '_ {
        let n = self.size();
        self.counts
            .iter()
            .enumerate()
            .filter(|(_, &c)| c > 0)
            .map(move |(k, &c)| (StateIndex::from_raw(k / n), StateIndex::from_raw(k % n), c))
    }

    /// Entrywise sum with a table over the same grid.
    pub fn merge(&mut self, other: &TransitionTable) -> Result<()> {
        if !same_grid(&self.spec, &other.spec) {
            return Err(Error::validation(
                "cannot merge tables over different grids",
            ));
        }
        for (a, b) in self.counts.iter_mut().zip(&other.counts) {
            *a += b;
        }
        self.total += other.total;
        Ok(())
    }

    /// Most likely TO centroid given the FROM centroid, or `None` when no
    /// transition out of that centroid block has been recorded.
    pub fn most_likely_centroid(&self, from: Cell) -> Result<Option<CentroidChoice>> {
        self.spec.cell(from.cx, from.cy)?;
        let n = self.size();
        let rows = centroid_block(&self.spec, from);
        let blocks = centroid_blocks(&self.spec);
        let mut sums = vec![0u64; blocks.len()];
        for r in rows.start..rows.end {
            let row = &self.counts[r * n..(r + 1) * n];
            for (sum, (_, block)) in sums.iter_mut().zip(&blocks) {
                *sum += row[block.start..block.end].iter().sum::<u64>();
            }
        }
        let total: u64 = sums.iter().sum();
        if total == 0 {
            return Ok(None);
        }
        // Blocks are in ascending start order; strict > keeps the lowest on ties.
        let (best, &count) =
            sums.iter().enumerate().fold(
                (0, &sums[0]),
                |acc, (i, s)| if s > acc.1 { (i, s) } else { acc },
            );
        Ok(Some(CentroidChoice {
            centroid: blocks[best].0,
            probability: count as f64 / total as f64,
            count,
            total,
        }))
    }

    /// Most likely TO state from `from` restricted to `block`. Probability is
    /// relative to the full row. `None` if the row or the block slice is empty.
    pub fn most_likely_transition(
        &self,
        from: StateIndex,
        block: CentroidBlock,
    ) -> Result<Option<TransitionChoice>> {
        self.check(from)?;
        if block.start >= block.end || block.end > self.size() {
            return Err(Error::validation(format!(
                "block [{}, {}) outside 0..{}",
                block.start,
                block.end,
                self.size()
            )));
        }
        let row = self.row(from);
        let row_total: u64 = row.iter().sum();
        if row_total == 0 {
            return Ok(None);
        }
        let mut best: Option<(usize, u64)> = None;
        for (j, &c) in row[block.start..block.end].iter().enumerate() {
            if c > 0 && best.is_none_or(|(_, b)| c > b) {
                best = Some((block.start + j, c));
            }
        }
        Ok(best.map(|(j, count)| TransitionChoice {
            to: StateIndex::from_raw(j),
            probability: count as f64 / row_total as f64,
            count,
            row_total,
        }))
    }

    /// Writes the sparse text form: a header line, then `from to count` per
    /// nonzero entry in ascending order.
    pub fn save<W: Write>(&self, sink: &mut W) -> Result<()> {
        writeln!(
            sink,
            "{HEADER_TAG} {FORMAT_VERSION} gl={} gw={} n={} total={}",
            self.spec.cells_x(),
            self.spec.cells_y(),
            self.size(),
            self.total
        )?;
        for (from, to, count) in self.entries() {
            writeln!(sink, "{from} {to} {count}")?;
        }
        sink.flush()?;
        Ok(())
    }

    /// Reads a saved table; the grid comes from the header and the field
    /// rectangle from the default spec.
    pub fn load<R: BufRead>(source: R) -> Result<Self> {
        Self::load_inner(source, None)
    }

    /// Reads a saved table and checks its grid against `spec`.
    pub fn load_for<R: BufRead>(source: R, spec: &GridSpec) -> Result<Self> {
        Self::load_inner(source, Some(spec))
    }

    fn load_inner<R: BufRead>(source: R, expected: Option<&GridSpec>) -> Result<Self> {
        let bad = |msg: String| Error::TableFormat(msg);
        let mut lines = source.lines();
        let header = lines
            .next()
            .ok_or_else(|| bad("empty table file".into()))??;
        let header = parse_header(&header).map_err(bad)?;
        let spec = match expected {
            Some(spec) => {
                if (spec.cells_x(), spec.cells_y()) != (header.gl, header.gw) {
                    return Err(bad(format!(
                        "table grid {} x {} does not match configured grid {} x {}",
                        header.gl,
                        header.gw,
                        spec.cells_x(),
                        spec.cells_y()
                    )));
                }
                *spec
            }
            None => GridSpec::default()
                .with_cells(header.gl, header.gw)
                .map_err(|e| bad(e.to_string()))?,
        };
        if spec.state_count() != header.n {
            return Err(bad(format!(
                "header n={} but a {} x {} grid has {} states",
                header.n,
                header.gl,
                header.gw,
                spec.state_count()
            )));
        }
        let mut table = TransitionTable::new(spec)?;
        let n = table.size();
        let mut last: Option<(usize, usize)> = None;
        for (k, line) in lines.enumerate() {
            let line = line?;
            let lineno = k + 2;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            let parsed = match fields.as_slice() {
                [a, b, c] => a
                    .parse::<usize>()
                    .ok()
                    .zip(b.parse::<usize>().ok())
                    .zip(c.parse::<u64>().ok()),
                _ => None,
            };
            let ((from, to), count) =
                parsed.ok_or_else(|| bad(format!("line {lineno}: expected `from to count`")))?;
            if from >= n || to >= n || count == 0 {
                return Err(bad(format!("line {lineno}: entry out of range")));
            }
            if last.is_some_and(|prev| prev >= (from, to)) {
                return Err(bad(format!(
                    "line {lineno}: entries not strictly ascending"
                )));
            }
            last = Some((from, to));
            table.add(StateIndex::from_raw(from), StateIndex::from_raw(to), count)?;
        }
        if table.total != header.total {
            return Err(bad(format!(
                "header total={} but entries sum to {}",
                header.total, table.total
            )));
        }
        Ok(table)
    }
}

fn same_grid(a: &GridSpec, b: &GridSpec) -> bool {
    (a.cells_x(), a.cells_y()) == (b.cells_x(), b.cells_y())
}

struct Header {
    gl: u32,
    gw: u32,
    n: usize,
    total: u64,
}

fn parse_header(line: &str) -> std::result::Result<Header, String> {
    let mut parts = line.split_whitespace();
    if parts.next() != Some(HEADER_TAG) {
        return Err("missing FTABLE header".into());
    }
    match parts.next() {
        Some(FORMAT_VERSION) => {}
        Some(v) => return Err(format!("unsupported table version {v}")),
        None => return Err("missing table version".into()),
    }
    let mut field = |key: &str| -> std::result::Result<u64, String> {
        let token = parts
            .next()
            .ok_or_else(|| format!("header missing {key}="))?;
        token
            .strip_prefix(key)
            .and_then(|v| v.strip_prefix('='))
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| format!("bad header field `{token}`, expected {key}=<int>"))
    };
    let gl = field("gl")?;
    let gw = field("gw")?;
    let n = field("n")?;
    let total = field("total")?;
    if parts.next().is_some() {
        return Err("trailing header fields".into());
    }
    Ok(Header {
        gl: u32::try_from(gl).map_err(|_| "gl too large".to_string())?,
        gw: u32::try_from(gw).map_err(|_| "gw too large".to_string())?,
        n: n as usize,
        total,
    })
}

/// Turns a stream of packages into transition counts.
#[derive(Debug, Clone)]
pub struct TrainingSession {
    table: TransitionTable,
    previous: Option<Formation>,
    packages_consumed: u64,
    skipped: u64,
}

impl TrainingSession {
    pub fn new(spec: GridSpec) -> Result<Self> {
        Ok(TrainingSession {
            table: TransitionTable::new(spec)?,
            previous: None,
            packages_consumed: 0,
            skipped: 0,
        })
    }

    pub fn spec(&self) -> &GridSpec {
        self.table.spec()
    }

    pub fn table(&self) -> &TransitionTable {
        &self.table
    }

    pub fn into_table(self) -> TransitionTable {
        self.table
    }

    pub fn packages_consumed(&self) -> u64 {
        self.packages_consumed
    }

    pub fn skipped(&self) -> u64 {
        self.skipped
    }

    /// Forgets the previous formation; the next package starts a new episode.
    pub fn reset(&mut self) {
        self.previous = None;
    }

    /// Consumes one package and records one transition per robot, except on
    /// the first package of an episode. Invalid packages are skipped.
    pub fn consume(&mut self, pkg: &VisionPackage) -> Result<()> {
        let current = match Formation::from_package(self.spec(), pkg, self.previous.as_ref()) {
            Ok(f) => f,
            Err(Error::Validation(msg)) => {
                log::warn!("skipping package {}: {msg}", pkg.seq);
                self.skipped += 1;
                return Ok(());
            }
            Err(e) => return Err(e),
        };
        if let Some(prev) = &self.previous {
            let spec = *self.spec();
            for (a, b) in prev.states().iter().zip(current.states()) {
                self.table.record(spec.encode(a)?, spec.encode(b)?)?;
            }
        }
        self.previous = Some(current);
        self.packages_consumed += 1;
        Ok(())
    }

    /// Trains on every record of a log stream. With `episodic`, blank-line
    /// draw separators reset the session. Stops after `limit` packages.
    pub fn consume_log<R: BufRead>(
        &mut self,
        reader: &mut PackageReader<R>,
        episodic: bool,
        limit: Option<u64>,
    ) -> Result<()> {
        let mut taken = 0u64;
        while limit.is_none_or(|l| taken < l) {
            match reader.next_record() {
                Ok(Record::Package(pkg)) => {
                    self.consume(&pkg)?;
                    taken += 1;
                }
                Ok(Record::Break) => {
                    if episodic {
                        self.reset();
                    }
                }
                Ok(Record::End) => break,
                Err(Error::Parse { line, message }) => {
                    log::warn!("skipping line {line}: {message}");
                    self.skipped += 1;
                }
                Err(e) => return Err(e),
            }
        }
        Ok(())
    }
}

/// Trains a fresh table from a package sequence treated as one episode.
pub fn train_stream<'a, I>(spec: GridSpec, packages: I) -> Result<TransitionTable>
where
    I: IntoIterator<Item = &'a VisionPackage>,
{
    let mut session = TrainingSession::new(spec)?;
    for pkg in packages {
        session.consume(pkg)?;
    }
    Ok(session.into_table())
}
