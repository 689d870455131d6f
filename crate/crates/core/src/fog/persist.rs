//! Raw stream files rotated at local midnight and the per-camera reference store.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, FixedOffset, NaiveDate};

use crate::edge::{FeatureRecord, ObjectId};
use crate::wire::codec::{obj_line, parse_obj_line};
use crate::Fixed3;

/// Received bytes between flushes of the daily stream file.
pub const FLUSH_EVERY: usize = 10;

pub trait LogOpener {
    fn open(&mut self, day: NaiveDate) -> io::Result<Box<dyn Write + Send>>;
}

/// Opens `<dir>/features-YYYYMMDD.log` for appending.
#[derive(Debug, Clone)]
pub struct FileOpener {
    dir: PathBuf,
}

impl FileOpener {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        FileOpener { dir: dir.into() }
    }

    pub fn file_name(day: NaiveDate) -> String {
        format!("features-{}.log", day.format("%Y%m%d"))
    }
}

impl LogOpener for FileOpener {
    fn open(&mut self, day: NaiveDate) -> io::Result<Box<dyn Write + Send>> {
        fs::create_dir_all(&self.dir)?;
        let f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(self.dir.join(FileOpener::file_name(day)))?;
        Ok(Box::new(BufWriter::new(f)))
    }
}

/// Append-only raw stream log. A new file starts when local time crosses midnight, and the
/// writer is flushed each time another [`FLUSH_EVERY`] bytes have been received.
pub struct DailyLog<O: LogOpener> {
    opener: O,
    offset: FixedOffset,
    current: Option<(NaiveDate, Box<dyn Write + Send>)>,
    since_flush: usize,
    degraded: bool,
}

impl<O: LogOpener> DailyLog<O> {
    pub fn new(opener: O, offset: FixedOffset) -> Self {
        DailyLog {
            opener,
            offset,
            current: None,
            since_flush: 0,
            degraded: false,
        }
    }

    pub fn local_date(&self, at_ms: u64) -> NaiveDate {
        DateTime::from_timestamp_millis(at_ms as i64)
            .unwrap_or_default()
            .with_timezone(&self.offset)
            .date_naive()
    }

    /// Set after a storage failure; cleared by the next successful append.
    pub fn is_degraded(&self) -> bool {
        self.degraded
    }

    pub fn current_day(&self) -> Option<NaiveDate> {
        self.current.as_ref().map(|(d, _)| *d)
    }

    /// Appends `bytes` received at `at_ms`; all of them go to that instant's daily file.
    pub fn append(&mut self, bytes: &[u8], at_ms: u64) -> io::Result<()> {
        let res = self.try_append(bytes, at_ms);
        match &res {
            Ok(()) => self.degraded = false,
            Err(e) => {
                if !self.degraded {
                    log::warn!("feature log degraded: {e}");
                }
                self.degraded = true;
            }
        }
        res
    }

    fn try_append(&mut self, mut bytes: &[u8], at_ms: u64) -> io::Result<()> {
        let day = self.local_date(at_ms);
        if self.current_day() != Some(day) {
            self.close()?;
            let w = self.opener.open(day)?;
            self.current = Some((day, w));
        }
        let (_, w) = self.current.as_mut().expect("opened above");
        while !bytes.is_empty() {
            let room = FLUSH_EVERY - self.since_flush;
            let n = room.min(bytes.len());
            w.write_all(&bytes[..n])?;
            self.since_flush += n;
            bytes = &bytes[n..];
            if self.since_flush == FLUSH_EVERY {
                w.flush()?;
                self.since_flush = 0;
            }
        }
        Ok(())
    }

    /// Flushes and closes the current file.
    pub fn close(&mut self) -> io::Result<()> {
        if let Some((_, mut w)) = self.current.take() {
            w.flush()?;
        }
        Ok(())
    }
}

impl<O: LogOpener> Drop for DailyLog<O> {
    fn drop(&mut self) {
        let _ = self.close();
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StoredRecord {
    pub frame_index: u64,
    pub timestamp: Fixed3,
    pub record: FeatureRecord,
}

/// Append-only per-camera record log (`refs-<camera>.log`) with an in-memory index by
/// object id. Reopening the directory reloads everything written before.
#[derive(Debug)]
pub struct ReferenceStore {
    dir: PathBuf,
    files: BTreeMap<String, File>,
    index: BTreeMap<(String, ObjectId), Vec<StoredRecord>>,
    count: usize,
}

impl ReferenceStore {
    pub fn open(dir: impl Into<PathBuf>) -> io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        let mut store = ReferenceStore {
            dir,
            files: BTreeMap::new(),
            index: BTreeMap::new(),
            count: 0,
        };
        let mut paths: Vec<PathBuf> = fs::read_dir(&store.dir)?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .collect();
        paths.sort();
        for path in paths {
            if let Some(camera) = Self::camera_of(&path) {
                store.load(&camera, &path)?;
            }
        }
        Ok(store)
    }

    fn camera_of(path: &Path) -> Option<String> {
        let name = path.file_name()?.to_str()?;
        Some(name.strip_prefix("refs-")?.strip_suffix(".log")?.to_string())
    }

    fn load(&mut self, camera: &str, path: &Path) -> io::Result<()> {
        let reader = BufReader::new(File::open(path)?);
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            match parse_ref_line(&line, n + 1) {
                Some(rec) => self.remember(camera, rec),
                None => log::warn!("{}: skipping unreadable line {}", path.display(), n + 1),
            }
        }
        Ok(())
    }

    fn remember(&mut self, camera: &str, rec: StoredRecord) {
        self.index
            .entry((camera.to_string(), rec.record.object_id))
            .or_default()
            .push(rec);
        self.count += 1;
    }

    pub fn append(&mut self, camera: &str, frame_index: u64, timestamp: Fixed3, record: &FeatureRecord) -> io::Result<()> {
        if !self.files.contains_key(camera) {
            let f = OpenOptions::new()
                .create(true)
                .append(true)
                .open(self.dir.join(format!("refs-{camera}.log")))?;
            self.files.insert(camera.to_string(), f);
        }
        let line = format!("REC {frame_index} {timestamp} {}\n", obj_line(record));
        self.files
            .get_mut(camera)
            .expect("inserted above")
            .write_all(line.as_bytes())?;
        self.remember(
            camera,
            StoredRecord {
                frame_index,
                timestamp,
                record: *record,
            },
        );
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn history(&self, camera: &str, object_id: ObjectId) -> &[StoredRecord] {
        self.index
            .get(&(camera.to_string(), object_id))
            .map(Vec::as_slice)
            .unwrap_or(&[])
    }

    pub fn objects(&self, camera: &str) -> Vec<ObjectId> {
        self.index
            .keys()
            .filter(|(c, _)| c == camera)
            .map(|(_, id)| *id)
            .collect()
    }
}

fn parse_ref_line(line: &str, n: usize) -> Option<StoredRecord> {
    let rest = line.strip_prefix("REC ")?;
    let (frame, rest) = rest.split_once(' ')?;
    let (ts, obj) = rest.split_once(' ')?;
    Some(StoredRecord {
        frame_index: frame.parse().ok()?,
        timestamp: ts.parse().ok()?,
        record: parse_obj_line(obj, n).ok()?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::edge::QuantizedBox;
    use std::sync::{Arc, Mutex};

    #[derive(Default)]
    struct Probe {
        bytes: Vec<u8>,
        flushes: usize,
    }

    #[derive(Clone, Default)]
    struct ProbeOpener {
        files: Arc<Mutex<Vec<(NaiveDate, Arc<Mutex<Probe>>)>>>,
    }

    struct ProbeWriter(Arc<Mutex<Probe>>);

    impl Write for ProbeWriter {
        fn write(&mut self, buf: &[u8]) -> io::Result<usize> {
            self.0.lock().unwrap().bytes.extend_from_slice(buf);
            Ok(buf.len())
        }
        fn flush(&mut self) -> io::Result<()> {
            self.0.lock().unwrap().flushes += 1;
            Ok(())
        }
    }

    impl LogOpener for ProbeOpener {
        fn open(&mut self, day: NaiveDate) -> io::Result<Box<dyn Write + Send>> {
            let p = Arc::new(Mutex::new(Probe::default()));
            self.files.lock().unwrap().push((day, p.clone()));
            Ok(Box::new(ProbeWriter(p)))
        }
    }

    const NOON_UTC: u64 = 1_600_000_000_000; // 2020-09-13T12:26:40Z

    #[test]
    fn flushes_every_ten_bytes() {
        let opener = ProbeOpener::default();
        let mut log = DailyLog::new(opener.clone(), FixedOffset::east_opt(0).unwrap());
        log.append(&[b'x'; 25], NOON_UTC).unwrap();
        {
            let files = opener.files.lock().unwrap();
            let probe = files[0].1.lock().unwrap();
            assert_eq!(probe.bytes.len(), 25);
            assert_eq!(probe.flushes, 2);
        }
        // byte-at-a-time delivery flushes at the same cadence
        for _ in 0..5 {
            log.append(b"y", NOON_UTC).unwrap();
        }
        assert_eq!(opener.files.lock().unwrap()[0].1.lock().unwrap().flushes, 3);
    }

    #[test]
    fn rotates_at_local_midnight() {
        let opener = ProbeOpener::default();
        // UTC+2: local midnight is 22:00 UTC
        let mut log = DailyLog::new(opener.clone(), FixedOffset::east_opt(2 * 3600).unwrap());
        let before = 1_600_034_399_000; // 2020-09-13T21:59:59Z
        let after = 1_600_034_400_000; // 2020-09-13T22:00:00Z
        log.append(b"FRAME 1\nCAM ", before).unwrap();
        log.append(b"c\nTS", before + 999).unwrap();
        log.append(b" 1.000\nEND 1\n", after).unwrap();
        log.close().unwrap();
        let files = opener.files.lock().unwrap();
        assert_eq!(files.len(), 2);
        assert_eq!(files[0].0, NaiveDate::from_ymd_opt(2020, 9, 13).unwrap());
        assert_eq!(files[1].0, NaiveDate::from_ymd_opt(2020, 9, 14).unwrap());
        let mut joined = files[0].1.lock().unwrap().bytes.clone();
        joined.extend_from_slice(&files[1].1.lock().unwrap().bytes);
        assert_eq!(joined, b"FRAME 1\nCAM c\nTS 1.000\nEND 1\n");
    }

    #[test]
    fn file_opener_names_by_day() {
        let dir = tempfile::tempdir().unwrap();
        let mut log = DailyLog::new(FileOpener::new(dir.path()), FixedOffset::east_opt(0).unwrap());
        log.append(b"abc", NOON_UTC).unwrap();
        log.close().unwrap();
        assert_eq!(fs::read(dir.path().join("features-20200913.log")).unwrap(), b"abc");
    }

    #[test]
    fn reference_store_survives_restart() {
        let dir = tempfile::tempdir().unwrap();
        let rec = FeatureRecord {
            object_id: Fixed3::from_millis(5_000),
            speed: Fixed3::from_millis(1_250),
            direction_changes: 3,
            dwell: Fixed3::from_millis(2_000),
            bbox: QuantizedBox {
                x_min: Fixed3::from_millis(1),
                y_min: Fixed3::from_millis(2),
                x_max: Fixed3::from_millis(40_001),
                y_max: Fixed3::from_millis(100_002),
            },
        };
        {
            let mut store = ReferenceStore::open(dir.path()).unwrap();
            store.append("cam-01", 10, Fixed3::from_millis(7_000), &rec).unwrap();
            store.append("cam-01", 11, Fixed3::from_millis(7_200), &rec).unwrap();
        }
        let mut store = ReferenceStore::open(dir.path()).unwrap();
        assert_eq!(store.len(), 2);
        store.append("cam-01", 12, Fixed3::from_millis(7_400), &rec).unwrap();
        let h = store.history("cam-01", rec.object_id);
        assert_eq!(h.iter().map(|r| r.frame_index).collect::<Vec<_>>(), vec![10, 11, 12]);
        assert_eq!(h[0].record, rec);
        assert_eq!(store.objects("cam-01"), vec![rec.object_id]);
    }
}
