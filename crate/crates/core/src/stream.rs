//! Buffered stream perturbation.
//!
//! The session pulls `l` records from a [`RecordSource`], perturbs that chunk
//! with buffer-local grouping, and holds the perturbed chunk. Once `t` chunks
//! are held they are merged, shuffled and released as one block. When the
//! source ends, whatever is held goes out as a final, flagged block.

use std::fs::File;
use std::io::Read;
use std::path::Path;
use std::time::{Duration, Instant};

use crate::dataset::{self, Dataset, Record};
use crate::error::{Error, Result};
use crate::grouping::{self, GroupingConfig, GroupingMode};
use crate::perturb::{self, PerturbConfig, PerturbedDataset};
use crate::seed;
use crate::spectral::RotationMatrix;
use crate::synth;

/// A pull-based supplier of records.
pub trait RecordSource {
    /// Empty dataset carrying the schema of the records this source yields.
    fn template(&self) -> &Dataset;

    /// Next record, `Ok(None)` at end of stream. Blocking is allowed.
    fn next_record(&mut self) -> Result<Option<Record>>;
}

/// In-memory source, mostly for tests and benchmarks.
pub struct VecSource {
    template: Dataset,
    records: std::vec::IntoIter<Record>,
}

impl VecSource {
    pub fn new(d: Dataset) -> Self {
        let template = d.with_records(Vec::new()).expect("empty record set is valid");
        VecSource {
            template,
            records: d.into_records().into_iter(),
        }
    }
}

impl RecordSource for VecSource {
    fn template(&self) -> &Dataset {
        &self.template
    }

    fn next_record(&mut self) -> Result<Option<Record>> {
        Ok(self.records.next())
    }
}

/// CSV records from a file (replayed, optionally rate-limited) or from any
/// reader such as standard input.
pub struct CsvSource<R: Read> {
    template: Dataset,
    reader: csv::Reader<R>,
    width: Option<usize>,
    class_column: Option<usize>,
    row: usize,
    rate: Option<f64>,
    started: Option<Instant>,
}

impl CsvSource<File> {
    /// Replays a CSV file; `rate` caps delivery at that many rows per second.
    pub fn replay(
        path: impl AsRef<Path>,
        has_header: bool,
        class_column: Option<usize>,
        rate: Option<f64>,
    ) -> Result<Self> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut s = CsvSource::from_reader(file, has_header, class_column)?;
        s.rate = rate.filter(|r| *r > 0.0);
        Ok(s)
    }
}

impl CsvSource<std::io::Stdin> {
    pub fn stdin(has_header: bool, class_column: Option<usize>) -> Result<Self> {
        CsvSource::from_reader(std::io::stdin(), has_header, class_column)
    }
}

impl<R: Read> CsvSource<R> {
    pub fn from_reader(reader: R, has_header: bool, class_column: Option<usize>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(has_header)
            .flexible(true)
            .from_reader(reader);
        let (schema, width, class_name) = if has_header {
            let h: Vec<String> = reader.headers()?.iter().map(|s| s.trim().to_string()).collect();
            if let Some(c) = class_column {
                if c >= h.len() {
                    return Err(Error::InvalidClassColumn {
                        index: c,
                        width: h.len(),
                    });
                }
            }
            let class_name = class_column.map(|c| h[c].clone());
            let schema = h
                .iter()
                .enumerate()
                .filter(|(i, _)| Some(*i) != class_column)
                .map(|(_, s)| s.clone())
                .collect();
            (Some(schema), Some(h.len()), class_name)
        } else {
            (None, None, None)
        };
        let mut template = Dataset::new(Vec::new(), schema.unwrap_or_default(), class_column)?;
        if let Some(name) = class_name {
            template.set_class_name(name);
        }
        Ok(CsvSource {
            template,
            reader,
            width,
            class_column,
            row: 0,
            rate: None,
            started: None,
        })
    }
}

impl<R: Read> RecordSource for CsvSource<R> {
    fn template(&self) -> &Dataset {
        &self.template
    }

    fn next_record(&mut self) -> Result<Option<Record>> {
        if let Some(rate) = self.rate {
            let start = *self.started.get_or_insert_with(Instant::now);
            let due = start + Duration::from_secs_f64(self.row as f64 / rate);
            let now = Instant::now();
            if due > now {
                std::thread::sleep(due - now);
            }
        }
        let mut rec = csv::StringRecord::new();
        if !self.reader.read_record(&mut rec)? {
            return Ok(None);
        }
        let width = match self.width {
            Some(w) => w,
            None => {
                // headerless: first row fixes the width and generated names
                let w = rec.len();
                let n = w - usize::from(self.class_column.is_some());
                self.template = Dataset::new(
                    Vec::new(),
                    (0..n).map(|i| format!("a{i}")).collect(),
                    self.class_column,
                )?;
                self.width = Some(w);
                w
            }
        };
        let parsed = dataset::parse_row(&rec, self.row, width, self.class_column)?;
        self.row += 1;
        Ok(Some(parsed))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StreamConfig {
    /// Records per chunk (l).
    pub buffer_size: usize,
    /// Chunks per release (t).
    pub release_threshold: usize,
    pub grouping: GroupingConfig,
    pub seed: u64,
    pub keep_provenance: bool,
}

impl StreamConfig {
    pub fn new(buffer_size: usize, release_threshold: usize, grouping: GroupingConfig, seed: u64) -> Self {
        StreamConfig {
            buffer_size,
            release_threshold,
            grouping,
            seed,
            keep_provenance: false,
        }
    }

    pub fn with_provenance(mut self) -> Self {
        self.keep_provenance = true;
        self
    }

    /// Rejects `l < 2k` in cluster-count mode. In group-size mode `l ≥ 2k′`
    /// is advisable but not enforced.
    pub fn validate(&self) -> Result<()> {
        let l = self.buffer_size;
        if l < 2 {
            return Err(Error::InvalidStreamConfig(format!("buffer size l={l} must be at least 2")));
        }
        if self.release_threshold == 0 {
            return Err(Error::InvalidStreamConfig("release threshold t must be positive".into()));
        }
        match self.grouping.mode {
            GroupingMode::ByClusterCount(k) if k == 0 || l < 2 * k => Err(Error::InvalidStreamConfig(
                format!("buffer size l={l} is smaller than 2*k={}", 2 * k),
            )),
            GroupingMode::ByGroupSize(kp) if kp < 2 => Err(Error::InvalidGroupSize(kp)),
            _ => Ok(()),
        }
    }

    fn chunk_config(&self, chunk: usize, rows: usize) -> PerturbConfig {
        let mut grouping = self.grouping;
        grouping.seed = seed::derive(self.seed, "chunk-grouping", chunk as u64);
        if let GroupingMode::ByClusterCount(k) = grouping.mode {
            // partial final buffer: keep about two records per cluster
            if rows < 2 * k {
                grouping.mode = GroupingMode::ByClusterCount((rows / 2).max(1));
            }
        }
        let mut cfg = PerturbConfig::new(grouping, seed::derive(self.seed, "chunk-rotation", chunk as u64));
        cfg.keep_provenance = self.keep_provenance;
        cfg
    }
}

/// One released block of perturbed, shuffled rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ReleaseBlock {
    pub rows: Vec<Record>,
    /// 0-based, consecutive.
    pub release_index: usize,
    /// Number of chunks merged into this block.
    pub chunks: usize,
    /// True for the end-of-stream block holding fewer than `t` chunks.
    pub final_flush: bool,
    /// Stream position (0-based) of the source record behind each row; only
    /// with `keep_provenance`.
    pub provenance: Option<Vec<usize>>,
}

impl ReleaseBlock {
    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }
}

struct HeldChunk {
    rows: Vec<Record>,
    origin: Vec<usize>,
}

pub struct StreamSession<S: RecordSource> {
    source: S,
    cfg: StreamConfig,
    held: Vec<HeldChunk>,
    chunk_index: usize,
    release_index: usize,
    consumed: usize,
    last_rotation: Option<RotationMatrix>,
    ended: bool,
    peak_buffered: usize,
}

/// Validates `cfg` and wraps `source` in a session.
pub fn open_stream<S: RecordSource>(source: S, cfg: StreamConfig) -> Result<StreamSession<S>> {
    cfg.validate()?;
    Ok(StreamSession {
        source,
        cfg,
        held: Vec::new(),
        chunk_index: 0,
        release_index: 0,
        consumed: 0,
        last_rotation: None,
        ended: false,
        peak_buffered: 0,
    })
}

impl<S: RecordSource> StreamSession<S> {
    pub fn config(&self) -> &StreamConfig {
        &self.cfg
    }

    /// Records pulled from the source so far.
    pub fn consumed(&self) -> usize {
        self.consumed
    }

    /// Largest number of rows held (perturbed or buffered) at any instant.
    pub fn peak_buffered_rows(&self) -> usize {
        self.peak_buffered
    }

    pub fn template(&self) -> &Dataset {
        self.source.template()
    }

    /// Blocks until `t` chunks are perturbed and returns the merged block,
    /// or returns the final partial block / `None` once the source ends.
    pub fn next_release(&mut self) -> Result<Option<ReleaseBlock>> {
        loop {
            if self.ended {
                return Ok(self.release(true));
            }
            let buffer = self.fill_buffer()?;
            if buffer.len() < self.cfg.buffer_size {
                self.ended = true;
            }
            if !buffer.is_empty() {
                self.perturb_chunk(buffer)?;
                if self.held.len() == self.cfg.release_threshold {
                    return Ok(self.release(false));
                }
            }
        }
    }

    fn fill_buffer(&mut self) -> Result<Vec<Record>> {
        let l = self.cfg.buffer_size;
        let held: usize = self.held.iter().map(|c| c.rows.len()).sum();
        let mut buffer = Vec::with_capacity(l);
        while buffer.len() < l {
            match self.source.next_record() {
                Ok(Some(r)) => buffer.push(r),
                Ok(None) => break,
                Err(e) => {
                    return Err(Error::SourceFailure {
                        chunk: self.chunk_index,
                        message: e.to_string(),
                    })
                }
            }
            self.peak_buffered = self.peak_buffered.max(held + buffer.len());
        }
        Ok(buffer)
    }

    fn perturb_chunk(&mut self, buffer: Vec<Record>) -> Result<()> {
        let first = self.consumed;
        let rows = buffer.len();
        self.consumed += rows;
        let chunk = self.source.template().with_records(buffer)?;
        let pcfg = self.cfg.chunk_config(self.chunk_index, rows);
        let grouping = grouping::group(&chunk, &pcfg.grouping)?;
        let rotated = perturb::rotate_groups(&chunk, grouping, &pcfg, self.last_rotation.as_ref())?;
        if let Some(r) = rotated.last_rotation() {
            self.last_rotation = Some(r.clone());
        }
        self.held.push(HeldChunk {
            rows: rotated.rows,
            origin: rotated.origin.into_iter().map(|i| first + i).collect(),
        });
        self.chunk_index += 1;
        Ok(())
    }

    fn release(&mut self, final_flush: bool) -> Option<ReleaseBlock> {
        if self.held.is_empty() {
            return None;
        }
        let chunks = self.held.len();
        let mut rows = Vec::new();
        let mut origin = Vec::new();
        for c in self.held.drain(..) {
            rows.extend(c.rows);
            origin.extend(c.origin);
        }
        let (rows, origin) =
            perturb::shuffle_rows(rows, origin, self.cfg.seed, self.release_index as u64);
        let block = ReleaseBlock {
            rows,
            release_index: self.release_index,
            chunks,
            final_flush,
            provenance: self.cfg.keep_provenance.then_some(origin),
        };
        self.release_index += 1;
        Some(block)
    }
}

impl<S: RecordSource> Iterator for StreamSession<S> {
    type Item = Result<ReleaseBlock>;

    fn next(&mut self) -> Option<Self::Item> {
        self.next_release().transpose()
    }
}

/// Runs a whole dataset through a stream session and concatenates the
/// releases in order.
pub fn perturb_stream_dataset(d: &Dataset, cfg: &StreamConfig) -> Result<PerturbedDataset> {
    let session = open_stream(VecSource::new(d.clone()), *cfg)?;
    let mut rows = Vec::with_capacity(d.len());
    let mut provenance = cfg.keep_provenance.then(Vec::new);
    for block in session {
        let block = block?;
        rows.extend(block.rows);
        if let (Some(all), Some(p)) = (provenance.as_mut(), block.provenance) {
            all.extend(p);
        }
    }
    Ok(PerturbedDataset {
        data: d.with_records(rows)?,
        provenance,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Throughput {
    pub rows: usize,
    pub elapsed: Duration,
    pub rows_per_second: f64,
}

/// Times a full stream run over `m` synthetic records with `n` attributes.
/// Data generation is excluded from the measurement.
pub fn throughput_probe(cfg: &StreamConfig, m: usize, n: usize) -> Result<Throughput> {
    let d = synth::gaussian_blobs(&synth::BlobSpec::default().with_size(m, n), cfg.seed);
    let session = open_stream(VecSource::new(d), *cfg)?;
    let start = Instant::now();
    let mut rows = 0;
    for block in session {
        rows += block?.len();
    }
    let elapsed = start.elapsed();
    Ok(Throughput {
        rows,
        elapsed,
        rows_per_second: rows as f64 / elapsed.as_secs_f64().max(1e-9),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blobs(m: usize) -> Dataset {
        synth::gaussian_blobs(&synth::BlobSpec::default().with_size(m, 4), 1)
    }

    fn sizes(d: Dataset, cfg: StreamConfig) -> Vec<(usize, bool)> {
        open_stream(VecSource::new(d), cfg)
            .unwrap()
            .map(|b| b.map(|b| (b.len(), b.final_flush)).unwrap())
            .collect()
    }

    #[test]
    fn release_sizes() {
        let g = GroupingConfig::by_group_size(100, 0);
        let cfg = StreamConfig::new(1000, 3, g, 0);
        assert_eq!(sizes(blobs(3000), cfg), vec![(3000, false)]);
        assert_eq!(sizes(blobs(7000), cfg), vec![(3000, false), (3000, false), (1000, true)]);
        assert_eq!(sizes(blobs(6500), cfg), vec![(3000, false), (3000, false), (500, true)]);
        assert!(sizes(blobs(0), cfg).is_empty());
    }

    #[test]
    fn guard_rejects_small_buffer() {
        let cfg = StreamConfig::new(15, 3, GroupingConfig::by_cluster_count(10, 0), 0);
        assert!(matches!(open_stream(VecSource::new(blobs(10)), cfg), Err(Error::InvalidStreamConfig(_))));
        let ok = StreamConfig::new(20, 3, GroupingConfig::by_cluster_count(10, 0), 0);
        assert!(open_stream(VecSource::new(blobs(10)), ok).is_ok());
        let bad_t = StreamConfig::new(20, 0, GroupingConfig::by_group_size(2, 0), 0);
        assert!(bad_t.validate().is_err());
    }

    #[test]
    fn release_index_and_conservation() {
        let cfg = StreamConfig::new(50, 2, GroupingConfig::by_group_size(5, 3), 3).with_provenance();
        let blocks: Vec<ReleaseBlock> = open_stream(VecSource::new(blobs(333)), cfg)
            .unwrap()
            .collect::<Result<_>>()
            .unwrap();
        for (i, b) in blocks.iter().enumerate() {
            assert_eq!(b.release_index, i);
        }
        let mut seen: Vec<usize> = blocks.iter().flat_map(|b| b.provenance.clone().unwrap()).collect();
        seen.sort_unstable();
        assert_eq!(seen, (0..333).collect::<Vec<_>>());
    }

    #[test]
    fn chunks_are_isolated() {
        // every row of release r comes from the chunks that release covers
        let l = 40;
        let t = 2;
        let cfg = StreamConfig::new(l, t, GroupingConfig::by_group_size(4, 8), 8).with_provenance();
        for b in open_stream(VecSource::new(blobs(250)), cfg).unwrap() {
            let b = b.unwrap();
            let lo = b.release_index * l * t;
            let hi = lo + l * t;
            assert!(b.provenance.unwrap().iter().all(|&i| i >= lo && i < hi));
        }
    }

    #[test]
    fn lone_final_row_uses_session_rotation() {
        let d = blobs(41);
        let cfg = StreamConfig::new(20, 1, GroupingConfig::by_group_size(5, 2), 2).with_provenance();
        let blocks: Vec<ReleaseBlock> = open_stream(VecSource::new(d.clone()), cfg)
            .unwrap()
            .collect::<Result<_>>()
            .unwrap();
        let last = blocks.last().unwrap();
        assert_eq!(last.len(), 1);
        assert_ne!(last.rows[0].values, d.records()[40].values);
    }

    #[test]
    fn kmeans_partial_buffer_is_clamped() {
        let cfg = StreamConfig::new(40, 1, GroupingConfig::by_cluster_count(10, 0), 0);
        let s = sizes(blobs(45), cfg);
        assert_eq!(s, vec![(40, false), (5, false)]);
    }

    #[test]
    fn memory_bound_and_determinism() {
        let cfg = StreamConfig::new(30, 3, GroupingConfig::by_group_size(5, 4), 4);
        let mut s = open_stream(VecSource::new(blobs(500)), cfg).unwrap();
        let first: Vec<ReleaseBlock> = s.by_ref().collect::<Result<_>>().unwrap();
        assert!(s.peak_buffered_rows() <= 3 * 30 + 30);
        let again: Vec<ReleaseBlock> = open_stream(VecSource::new(blobs(500)), cfg)
            .unwrap()
            .collect::<Result<_>>()
            .unwrap();
        assert_eq!(first, again);
    }

    struct FailingSource {
        template: Dataset,
        left: usize,
    }

    impl RecordSource for FailingSource {
        fn template(&self) -> &Dataset {
            &self.template
        }
        fn next_record(&mut self) -> Result<Option<Record>> {
            if self.left == 0 {
                return Err(Error::InvalidConfig("sensor offline".into()));
            }
            self.left -= 1;
            Ok(Some(Record::new(vec![self.left as f64, 1.0 + self.left as f64 * 0.5])))
        }
    }

    #[test]
    fn source_failure_carries_chunk_index() {
        let template = Dataset::from_records(vec![Record::new(vec![0.0, 0.0])])
            .unwrap()
            .with_records(Vec::new())
            .unwrap();
        let cfg = StreamConfig::new(10, 5, GroupingConfig::by_group_size(2, 0), 0);
        let mut s = open_stream(FailingSource { template, left: 25 }, cfg).unwrap();
        match s.next_release() {
            Err(Error::SourceFailure { chunk, message }) => {
                assert_eq!(chunk, 2);
                assert!(message.contains("sensor offline"));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn csv_source_reads_stdin_style_lines() {
        let text = "x,y,c\n1,2,A\n3,4,B\n5,6,A\n";
        let mut src = CsvSource::from_reader(text.as_bytes(), true, Some(2)).unwrap();
        assert_eq!(src.template().schema(), ["x", "y"]);
        let mut n = 0;
        while let Some(r) = src.next_record().unwrap() {
            assert_eq!(r.arity(), 2);
            n += 1;
        }
        assert_eq!(n, 3);
        let mut bad = CsvSource::from_reader("1,2\nx,3\n".as_bytes(), false, None).unwrap();
        assert!(bad.next_record().unwrap().is_some());
        assert!(matches!(bad.next_record(), Err(Error::NonNumericValue { row: 1, .. })));
    }
}
