//! Sensor and reference series ingestion: CSV parsing, window averaging,
//! timestamp alignment, min-max normalization of the auxiliary variable and
//! temporal train/test splitting.

use std::io::{Read, Write};

use chrono::{DateTime, NaiveDateTime, SecondsFormat, TimeZone, Utc};

use crate::error::{invalid, Error, Result};

pub type Timestamp = DateTime<Utc>;

/// Default averaging window (15 minutes).
pub const DEFAULT_WINDOW_SECS: i64 = 15 * 60;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorRecord {
    pub timestamp: Timestamp,
    pub op1: Option<f64>,
    pub op2: Option<f64>,
    pub temp: Option<f64>,
}

/// Raw (or window-averaged) readings from one low-cost sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSensorSeries {
    pub sensor_id: String,
    pub records: Vec<SensorRecord>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReferenceRecord {
    pub timestamp: Timestamp,
    pub co: Option<f64>,
}

/// Reference analyzer readings.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ReferenceSeries {
    pub records: Vec<ReferenceRecord>,
}

/// Min-max normalization parameters for the auxiliary variable.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormParams {
    pub min: f64,
    pub max: f64,
}

impl NormParams {
    pub const IDENTITY: NormParams = NormParams { min: 0.0, max: 1.0 };

    pub fn fit(values: &[f64]) -> Self {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        NormParams { min, max }
    }

    fn span(&self) -> f64 {
        let s = self.max - self.min;
        if s > 0.0 {
            s
        } else {
            1.0
        }
    }

    /// Maps a raw value to the normalized scale; values outside the fitted
    /// range map outside `[0, 1]`.
    pub fn apply(&self, raw: f64) -> f64 {
        (raw - self.min) / self.span()
    }

    pub fn invert(&self, normalized: f64) -> f64 {
        normalized * self.span() + self.min
    }
}

/// Time-aligned `(x1, x2, z, y)` tuples with no missing values.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedDataset {
    pub t: Vec<Timestamp>,
    pub x1: Vec<f64>,
    pub x2: Vec<f64>,
    /// Raw temperature in °C.
    pub z_raw: Vec<f64>,
    /// `z_raw` normalized with `norm`.
    pub z: Vec<f64>,
    pub y: Vec<f64>,
    pub norm: NormParams,
}

impl AlignedDataset {
    /// Builds a dataset, normalizing `z_raw` over the given records.
    pub fn new(
        t: Vec<Timestamp>,
        x1: Vec<f64>,
        x2: Vec<f64>,
        z_raw: Vec<f64>,
        y: Vec<f64>,
    ) -> Result<Self> {
        let n = t.len();
        if n == 0 {
            return Err(Error::EmptyOverlap);
        }
        if [x1.len(), x2.len(), z_raw.len(), y.len()].iter().any(|&l| l != n) {
            return Err(invalid("dataset columns differ in length"));
        }
        if t.windows(2).any(|w| w[0] >= w[1]) {
            return Err(invalid("timestamps must be strictly increasing"));
        }
        if [&x1, &x2, &z_raw, &y]
            .iter()
            .any(|c| c.iter().any(|v| !v.is_finite()))
        {
            return Err(invalid("dataset contains non-finite values"));
        }
        let norm = NormParams::fit(&z_raw);
        let z = z_raw.iter().map(|&v| norm.apply(v)).collect();
        Ok(Self {
            t,
            x1,
            x2,
            z_raw,
            z,
            y,
            norm,
        })
    }

    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// Re-expresses the normalized auxiliary column with externally supplied
    /// parameters (typically those of a training portion).
    pub fn with_norm(mut self, norm: NormParams) -> Self {
        self.z = self.z_raw.iter().map(|&v| norm.apply(v)).collect();
        self.norm = norm;
        self
    }

    /// Normalizes with this dataset's own range.
    pub fn self_normalized(self) -> Self {
        let norm = NormParams::fit(&self.z_raw);
        self.with_norm(norm)
    }

    /// Rows at `idx` (kept in the given order), normalization unchanged.
    pub fn subset(&self, idx: &[usize]) -> Self {
        let pick = |v: &[f64]| idx.iter().map(|&i| v[i]).collect::<Vec<_>>();
        Self {
            t: idx.iter().map(|&i| self.t[i]).collect(),
            x1: pick(&self.x1),
            x2: pick(&self.x2),
            z_raw: pick(&self.z_raw),
            z: pick(&self.z),
            y: pick(&self.y),
            norm: self.norm,
        }
    }

    fn slice(&self, range: std::ops::Range<usize>) -> Self {
        let idx: Vec<usize> = range.collect();
        self.subset(&idx)
    }

    /// Returns a copy with operating potential columns replaced.
    pub fn with_ops(&self, x1: Vec<f64>, x2: Vec<f64>) -> Self {
        assert_eq!(x1.len(), self.len());
        assert_eq!(x2.len(), self.len());
        Self {
            x1,
            x2,
            ..self.clone()
        }
    }

    /// Returns a copy with the target column replaced.
    pub fn with_targets(&self, y: Vec<f64>) -> Self {
        assert_eq!(y.len(), self.len());
        Self { y, ..self.clone() }
    }
}

/// Window-averaging options.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ResampleOptions {
    pub window_secs: i64,
    /// Minimum fraction of valid readings (per field) a window needs to be kept.
    pub min_valid_fraction: f64,
}

impl Default for ResampleOptions {
    fn default() -> Self {
        Self {
            window_secs: DEFAULT_WINDOW_SECS,
            min_valid_fraction: 0.5,
        }
    }
}

/// Averages `K` optional fields over epoch-aligned windows. A window is kept
/// only if every field has at least one valid reading and a valid fraction of
/// at least `min_valid_fraction` among the records falling in that window.
fn window_means<const K: usize>(
    rows: &[(Timestamp, [Option<f64>; K])],
    opts: ResampleOptions,
) -> Result<Vec<(Timestamp, [f64; K])>> {
    if opts.window_secs <= 0 {
        return Err(invalid("resampling window must be positive"));
    }
    let win_ms = opts.window_secs * 1000;
    let mut out = Vec::new();
    let mut i = 0;
    while i < rows.len() {
        let bucket = rows[i].0.timestamp_millis().div_euclid(win_ms);
        let mut sums = [0.0; K];
        let mut counts = [0usize; K];
        let mut total = 0usize;
        while i < rows.len() && rows[i].0.timestamp_millis().div_euclid(win_ms) == bucket {
            for (k, v) in rows[i].1.iter().enumerate() {
                if let Some(v) = v {
                    sums[k] += v;
                    counts[k] += 1;
                }
            }
            total += 1;
            i += 1;
        }
        let keep = counts
            .iter()
            .all(|&c| c > 0 && c as f64 >= opts.min_valid_fraction * total as f64);
        if keep {
            let mut means = [0.0; K];
            for k in 0..K {
                means[k] = sums[k] / counts[k] as f64;
            }
            let start = Utc
                .timestamp_millis_opt(bucket * win_ms)
                .single()
                .ok_or_else(|| invalid("window start out of range"))?;
            out.push((start, means));
        }
    }
    Ok(out)
}

/// Averages sensor readings over fixed windows aligned to window boundaries.
pub fn resample_average(raw: &RawSensorSeries, opts: ResampleOptions) -> Result<RawSensorSeries> {
    let rows: Vec<_> = raw
        .records
        .iter()
        .map(|r| (r.timestamp, [r.op1, r.op2, r.temp]))
        .collect();
    let records = window_means(&rows, opts)?
        .into_iter()
        .map(|(timestamp, [op1, op2, temp])| SensorRecord {
            timestamp,
            op1: Some(op1),
            op2: Some(op2),
            temp: Some(temp),
        })
        .collect();
    Ok(RawSensorSeries {
        sensor_id: raw.sensor_id.clone(),
        records,
    })
}

pub fn resample_reference(raw: &ReferenceSeries, opts: ResampleOptions) -> Result<ReferenceSeries> {
    let rows: Vec<_> = raw.records.iter().map(|r| (r.timestamp, [r.co])).collect();
    let records = window_means(&rows, opts)?
        .into_iter()
        .map(|(timestamp, [co])| ReferenceRecord {
            timestamp,
            co: Some(co),
        })
        .collect();
    Ok(ReferenceSeries { records })
}

/// Keeps exactly the timestamps at which both series have all fields valid.
pub fn align(lcaq: &RawSensorSeries, reference: &ReferenceSeries) -> Result<AlignedDataset> {
    let (mut t, mut x1, mut x2, mut z, mut y) = (vec![], vec![], vec![], vec![], vec![]);
    let (mut i, mut j) = (0, 0);
    let (a, b) = (&lcaq.records, &reference.records);
    while i < a.len() && j < b.len() {
        match a[i].timestamp.cmp(&b[j].timestamp) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                if let (Some(o1), Some(o2), Some(tc), Some(co)) =
                    (a[i].op1, a[i].op2, a[i].temp, b[j].co)
                {
                    t.push(a[i].timestamp);
                    x1.push(o1);
                    x2.push(o2);
                    z.push(tc);
                    y.push(co);
                }
                i += 1;
                j += 1;
            }
        }
    }
    if t.is_empty() {
        return Err(Error::EmptyOverlap);
    }
    AlignedDataset::new(t, x1, x2, z, y)
}

/// Number of leading records assigned to the training portion.
pub fn train_count(n: usize, train_frac: f64) -> usize {
    // the epsilon keeps e.g. 0.7 * 10 from rounding up to 8
    let k = (train_frac * n as f64 - 1e-9).ceil() as usize;
    k.clamp(1, n - 1)
}

/// Chronological split: the first `⌈frac·N⌉` records train, the rest test.
///
/// Both parts are normalized with the training portion's auxiliary range.
pub fn temporal_split(
    ds: &AlignedDataset,
    train_frac: f64,
) -> Result<(AlignedDataset, AlignedDataset)> {
    if !(train_frac > 0.0 && train_frac < 1.0) {
        return Err(invalid(format!("train fraction {train_frac} outside (0, 1)")));
    }
    let n = ds.len();
    if n < 2 {
        return Err(Error::TooSmall(format!("cannot split {n} record(s)")));
    }
    let k = train_count(n, train_frac);
    let train = ds.slice(0..k).self_normalized();
    let test = ds.slice(k..n).with_norm(train.norm);
    Ok((train, test))
}

pub fn format_timestamp(t: &Timestamp) -> String {
    t.to_rfc3339_opts(SecondsFormat::AutoSi, true)
}

pub fn parse_timestamp(s: &str) -> std::result::Result<Timestamp, String> {
    let s = s.trim();
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.with_timezone(&Utc));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f", "%Y-%m-%dT%H:%M"] {
        if let Ok(naive) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(Utc.from_utc_datetime(&naive));
        }
    }
    Err(format!("unparseable timestamp `{s}`"))
}

struct CsvTable {
    columns: Vec<usize>,
    reader: csv::Reader<Box<dyn Read>>,
}

impl CsvTable {
    fn open(source: Box<dyn Read>, wanted: &[&str]) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(source);
        let headers = reader.headers()?.clone();
        let columns = wanted
            .iter()
            .map(|w| {
                headers
                    .iter()
                    .position(|h| h.eq_ignore_ascii_case(w))
                    .ok_or_else(|| Error::MissingColumn(w.to_string()))
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(Self { columns, reader })
    }

    /// Iterates `(line, timestamp, optional values)` rows, enforcing strictly
    /// increasing timestamps.
    fn rows(mut self) -> Result<Vec<(Timestamp, Vec<Option<f64>>)>> {
        let mut out: Vec<(Timestamp, Vec<Option<f64>>)> = Vec::new();
        for rec in self.reader.records() {
            let rec = rec?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
            let field = |c: usize| rec.get(c).unwrap_or("");
            let ts = parse_timestamp(field(self.columns[0]))
                .map_err(|msg| Error::Parse { line, msg })?;
            if let Some((prev, _)) = out.last() {
                if ts <= *prev {
                    return Err(Error::Parse {
                        line,
                        msg: "timestamps must be strictly increasing".into(),
                    });
                }
            }
            let mut vals = Vec::with_capacity(self.columns.len() - 1);
            for &c in &self.columns[1..] {
                let raw = field(c);
                if raw.is_empty() {
                    vals.push(None);
                    continue;
                }
                let v: f64 = raw.parse().map_err(|_| Error::Parse {
                    line,
                    msg: format!("invalid number `{raw}`"),
                })?;
                if !v.is_finite() {
                    return Err(Error::Parse {
                        line,
                        msg: format!("non-finite value `{raw}`; leave the field empty for missing"),
                    });
                }
                vals.push(Some(v));
            }
            out.push((ts, vals));
        }
        Ok(out)
    }
}

/// Reads `timestamp,op1_mv,op2_mv,temp_c`.
pub fn read_sensor_csv<R: Read + 'static>(source: R, sensor_id: &str) -> Result<RawSensorSeries> {
    let rows = CsvTable::open(Box::new(source), &["timestamp", "op1_mv", "op2_mv", "temp_c"])?.rows()?;
    Ok(RawSensorSeries {
        sensor_id: sensor_id.to_string(),
        records: rows
            .into_iter()
            .map(|(timestamp, v)| SensorRecord {
                timestamp,
                op1: v[0],
                op2: v[1],
                temp: v[2],
            })
            .collect(),
    })
}

/// Reads `timestamp,co_ref`.
pub fn read_reference_csv<R: Read + 'static>(source: R) -> Result<ReferenceSeries> {
    let rows = CsvTable::open(Box::new(source), &["timestamp", "co_ref"])?.rows()?;
    Ok(ReferenceSeries {
        records: rows
            .into_iter()
            .map(|(timestamp, v)| ReferenceRecord { timestamp, co: v[0] })
            .collect(),
    })
}

pub const ALIGNED_HEADER: [&str; 5] = ["timestamp", "op1_mv", "op2_mv", "temp_c", "co_ref"];

/// Reads an aligned `timestamp,op1_mv,op2_mv,temp_c,co_ref` file. Missing
/// values are not allowed here.
pub fn read_aligned_csv<R: Read + 'static>(source: R) -> Result<AlignedDataset> {
    let rows = CsvTable::open(Box::new(source), &ALIGNED_HEADER)?.rows()?;
    let mut cols: [Vec<f64>; 4] = Default::default();
    let mut t = Vec::with_capacity(rows.len());
    for (i, (ts, vals)) in rows.into_iter().enumerate() {
        t.push(ts);
        for (k, v) in vals.into_iter().enumerate() {
            cols[k].push(v.ok_or_else(|| Error::Parse {
                line: i + 2,
                msg: format!("missing `{}` in aligned data", ALIGNED_HEADER[k + 1]),
            })?);
        }
    }
    let [x1, x2, z, y] = cols;
    AlignedDataset::new(t, x1, x2, z, y)
}

pub fn write_aligned_csv<W: Write>(ds: &AlignedDataset, sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(ALIGNED_HEADER)?;
    for i in 0..ds.len() {
        w.write_record([
            format_timestamp(&ds.t[i]),
            ds.x1[i].to_string(),
            ds.x2[i].to_string(),
            ds.z_raw[i].to_string(),
            ds.y[i].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_sensor_csv<W: Write>(series: &RawSensorSeries, sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["timestamp", "op1_mv", "op2_mv", "temp_c"])?;
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for r in &series.records {
        w.write_record([
            format_timestamp(&r.timestamp),
            opt(r.op1),
            opt(r.op2),
            opt(r.temp),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_reference_csv<W: Write>(series: &ReferenceSeries, sink: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(sink);
    w.write_record(["timestamp", "co_ref"])?;
    for r in &series.records {
        w.write_record([
            format_timestamp(&r.timestamp),
            r.co.map(|x| x.to_string()).unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ts(secs: i64) -> Timestamp {
        Utc.timestamp_opt(secs, 0).unwrap()
    }

    fn sensor(rows: &[(i64, Option<f64>)]) -> RawSensorSeries {
        RawSensorSeries {
            sensor_id: "S001".into(),
            records: rows
                .iter()
                .map(|&(s, v)| SensorRecord {
                    timestamp: ts(s),
                    op1: v,
                    op2: v,
                    temp: v,
                })
                .collect(),
        }
    }

    fn reference(times: &[i64]) -> ReferenceSeries {
        ReferenceSeries {
            records: times
                .iter()
                .map(|&s| ReferenceRecord {
                    timestamp: ts(s),
                    co: Some(s as f64),
                })
                .collect(),
        }
    }

    #[test]
    fn resample_mean_of_one_window() {
        let rows: Vec<_> = (0..15).map(|i| (i * 60, Some((i + 1) as f64))).collect();
        let out = resample_average(&sensor(&rows), ResampleOptions::default()).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].op1, Some(8.0));
        assert_eq!(out.records[0].timestamp, ts(0));
    }

    #[test]
    fn resample_drops_all_missing_window() {
        let mut rows: Vec<_> = (0..15).map(|i| (i * 60, Some(1.0))).collect();
        rows.extend((15..30).map(|i| (i * 60, None)));
        let out = resample_average(&sensor(&rows), ResampleOptions::default()).unwrap();
        assert_eq!(out.records.len(), 1);
        assert_eq!(out.records[0].timestamp, ts(0));
    }

    #[test]
    fn resample_two_windows_constant() {
        let rows: Vec<_> = (0..30).map(|i| (i * 60, Some(3.0))).collect();
        let out = resample_average(&sensor(&rows), ResampleOptions::default()).unwrap();
        let starts: Vec<_> = out.records.iter().map(|r| r.timestamp).collect();
        assert_eq!(starts, vec![ts(0), ts(900)]);
        assert!(out.records.iter().all(|r| r.op1 == Some(3.0)));
    }

    #[test]
    fn resample_applies_half_valid_rule() {
        // 4 readings, 1 valid: dropped; 2 valid: kept
        let a = sensor(&[(0, Some(1.0)), (60, None), (120, None), (180, None)]);
        assert!(resample_average(&a, ResampleOptions::default()).unwrap().records.is_empty());
        let b = sensor(&[(0, Some(1.0)), (60, Some(2.0)), (120, None), (180, None)]);
        let out = resample_average(&b, ResampleOptions::default()).unwrap();
        assert_eq!(out.records[0].op1, Some(1.5));
    }

    #[test]
    fn resample_empty_is_empty() {
        let out = resample_average(&sensor(&[]), ResampleOptions::default()).unwrap();
        assert!(out.records.is_empty());
    }

    #[test]
    fn align_examples() {
        let s = sensor(&[(900, Some(1.0)), (1800, Some(2.0)), (2700, Some(3.0))]);
        let all = align(&s, &reference(&[900, 1800, 2700])).unwrap();
        assert_eq!(all.len(), 3);

        let part = align(&s, &reference(&[1800, 2700, 3600])).unwrap();
        assert_eq!(part.t, vec![ts(1800), ts(2700)]);
        assert_eq!(part.y, vec![1800.0, 2700.0]);
        assert_eq!(part.z, vec![0.0, 1.0]);

        assert!(matches!(
            align(&s, &reference(&[0, 3600])),
            Err(Error::EmptyOverlap)
        ));
    }

    #[test]
    fn align_skips_missing_fields() {
        let s = sensor(&[(900, Some(1.0)), (1800, None)]);
        let out = align(&s, &reference(&[900, 1800])).unwrap();
        assert_eq!(out.len(), 1);
    }

    fn dataset(n: usize) -> AlignedDataset {
        let t = (0..n as i64).map(|i| ts(i * 900)).collect();
        let v: Vec<f64> = (0..n).map(|i| i as f64).collect();
        AlignedDataset::new(t, v.clone(), v.clone(), v.clone(), v).unwrap()
    }

    #[test]
    fn split_sizes() {
        let (a, b) = temporal_split(&dataset(10), 0.8).unwrap();
        assert_eq!((a.len(), b.len()), (8, 2));
        let (a, b) = temporal_split(&dataset(5), 0.8).unwrap();
        assert_eq!((a.len(), b.len()), (4, 1));
        let (a, b) = temporal_split(&dataset(10), 0.7).unwrap();
        assert_eq!((a.len(), b.len()), (7, 3));
        assert!(temporal_split(&dataset(1), 0.8).is_err());
        assert!(temporal_split(&dataset(4), 1.0).is_err());
    }

    #[test]
    fn split_uses_train_normalization() {
        let (train, test) = temporal_split(&dataset(10), 0.8).unwrap();
        assert_eq!(train.norm, NormParams { min: 0.0, max: 7.0 });
        assert_eq!(test.norm, train.norm);
        assert!(test.z.iter().all(|&z| z > 1.0));
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let text = "timestamp,op1_mv,op2_mv,temp_c\n\
                    2023-01-01T00:00:00Z,200.5,150,25\n\
                    2023-01-01T00:01:00Z,,151,25.5\n";
        let s = read_sensor_csv(std::io::Cursor::new(text.to_string()), "S001").unwrap();
        assert_eq!(s.records.len(), 2);
        assert_eq!(s.records[1].op1, None);
        let mut buf = Vec::new();
        write_sensor_csv(&s, &mut buf).unwrap();
        let again = read_sensor_csv(std::io::Cursor::new(buf), "S001").unwrap();
        assert_eq!(again, s);

        let missing = "timestamp,op1_mv,temp_c\n2023-01-01T00:00:00Z,1,2\n";
        match read_sensor_csv(std::io::Cursor::new(missing.to_string()), "x") {
            Err(Error::MissingColumn(c)) => assert_eq!(c, "op2_mv"),
            other => panic!("unexpected {other:?}"),
        }

        let bad_ts = "timestamp,co_ref\n2023-01-01T00:00:00Z,1\nyesterday,2\n";
        match read_reference_csv(std::io::Cursor::new(bad_ts.to_string())) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }

        let unordered = "timestamp,co_ref\n2023-01-01T00:10:00Z,1\n2023-01-01T00:00:00Z,2\n";
        assert!(read_reference_csv(std::io::Cursor::new(unordered.to_string())).is_err());
    }

    proptest! {
        #[test]
        fn resample_translation_equivariant(
            vals in prop::collection::vec(prop::option::weighted(0.8, -50.0f64..50.0), 1..120),
            shift in -20i64..20,
        ) {
            let rows: Vec<_> = vals.iter().enumerate().map(|(i, &v)| (i as i64 * 37, v)).collect();
            let shifted: Vec<_> = rows.iter().map(|&(s, v)| (s + shift * 900, v)).collect();
            let a = resample_average(&sensor(&rows), ResampleOptions::default()).unwrap();
            let b = resample_average(&sensor(&shifted), ResampleOptions::default()).unwrap();
            prop_assert_eq!(a.records.len(), b.records.len());
            for (ra, rb) in a.records.iter().zip(&b.records) {
                prop_assert_eq!(ra.timestamp.timestamp() + shift * 900, rb.timestamp.timestamp());
                prop_assert_eq!(ra.op1, rb.op1);
            }
        }

        #[test]
        fn split_partitions_in_order(n in 2usize..200, frac in 0.05f64..0.95) {
            let ds = dataset(n);
            let (a, b) = temporal_split(&ds, frac).unwrap();
            prop_assert_eq!(a.len() + b.len(), n);
            let joined: Vec<_> = a.t.iter().chain(&b.t).copied().collect();
            prop_assert_eq!(joined, ds.t.clone());
            let y: Vec<_> = a.y.iter().chain(&b.y).copied().collect();
            prop_assert_eq!(y, ds.y.clone());
        }

        #[test]
        fn align_idempotent(
            a in prop::collection::btree_set(0i64..60, 1..40),
            b in prop::collection::btree_set(0i64..60, 1..40),
        ) {
            let s = sensor(&a.iter().map(|&i| (i * 900, Some(i as f64))).collect::<Vec<_>>());
            let r = reference(&b.iter().map(|&i| i * 900).collect::<Vec<_>>());
            if let Ok(first) = align(&s, &r) {
                let back_s = RawSensorSeries {
                    sensor_id: s.sensor_id.clone(),
                    records: first.t.iter().enumerate().map(|(i, &t)| SensorRecord {
                        timestamp: t, op1: Some(first.x1[i]), op2: Some(first.x2[i]), temp: Some(first.z_raw[i]),
                    }).collect(),
                };
                let back_r = ReferenceSeries {
                    records: first.t.iter().zip(&first.y).map(|(&t, &co)| ReferenceRecord { timestamp: t, co: Some(co) }).collect(),
                };
                prop_assert_eq!(align(&back_s, &back_r).unwrap(), first);
            }
        }
    }
}
