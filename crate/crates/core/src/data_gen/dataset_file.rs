//! Little-endian binary dataset container.
//!
//! ```text
//! header
//!   magic          4 bytes  "SDOA"
//!   version        u32
//!   M              u32      grid points
//!   N              u32      array elements
//!   K_max          u32
//!   count          u64      number of records
//!   grid_lo        f64      degrees
//!   grid_step      f64      degrees
//!   spacing        f64      element spacing in wavelengths
//! record (repeated `count` times)
//!   y              N x (f32 re, f32 im)
//!   mask           N bytes  (0/1)
//!   gt             M bytes  (0/1)
//!   snr_db         f32      (+inf for noiseless)
//!   K              u32
//!   doas           K x f32  degrees
//!   coeffs         K x (f32 re, f32 im)
//!   noise_seed     u64
//! ```

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Seek, SeekFrom, Write};
use std::path::Path;

use crate::array_model::{ArrayGeometry, Snapshot, SourceSet};
use crate::data_gen::{AngleGrid, LabeledExample};
use crate::{Error, Result, C64};

const MAGIC: &[u8; 4] = b"SDOA";
pub const FORMAT_VERSION: u32 = 1;
const COUNT_OFFSET: u64 = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetHeader {
    pub grid: AngleGrid,
    pub n_elements: usize,
    pub element_spacing: f64,
    pub k_max: usize,
    pub count: u64,
}

impl DatasetHeader {
    pub fn geometry(&self) -> Result<ArrayGeometry> {
        ArrayGeometry::ula(self.n_elements, self.element_spacing)
    }
}

fn put_u32<W: Write>(w: &mut W, v: u32) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}
fn put_u64<W: Write>(w: &mut W, v: u64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}
fn put_f32<W: Write>(w: &mut W, v: f64) -> io::Result<()> {
    w.write_all(&(v as f32).to_le_bytes())
}
fn put_f64<W: Write>(w: &mut W, v: f64) -> io::Result<()> {
    w.write_all(&v.to_le_bytes())
}

fn write_record<W: Write>(w: &mut W, header: &DatasetHeader, ex: &LabeledExample) -> Result<()> {
    let snap = &ex.snapshot;
    if snap.y.len() != header.n_elements || ex.gt.len() != header.grid.len() {
        return Err(Error::shape(format!(
            "record has N={} M={}, header expects N={} M={}",
            snap.y.len(),
            ex.gt.len(),
            header.n_elements,
            header.grid.len()
        )));
    }
    let k = snap.sources.len();
    if k > header.k_max {
        return Err(Error::domain(format!("record has {k} sources, k_max is {}", header.k_max)));
    }
    for v in &snap.y {
        put_f32(w, v.re)?;
        put_f32(w, v.im)?;
    }
    let mask: Vec<u8> = snap.geometry.mask().iter().map(|&m| m as u8).collect();
    w.write_all(&mask)?;
    let gt: Vec<u8> = ex.gt.iter().map(|&b| b as u8).collect();
    w.write_all(&gt)?;
    put_f32(w, snap.snr_db)?;
    put_u32(w, k as u32)?;
    for &t in snap.sources.doas() {
        put_f32(w, t)?;
    }
    for c in snap.sources.coeffs() {
        put_f32(w, c.re)?;
        put_f32(w, c.im)?;
    }
    put_u64(w, snap.noise_seed)?;
    Ok(())
}

/// Writes a dataset file and returns the number of records written.
///
/// Values are stored as `f32`; examples produced by the generator are already rounded
/// to that precision, so reading the file back reproduces them exactly.
pub fn write_dataset<P, I>(path: P, header: &DatasetHeader, examples: I) -> Result<u64>
where
    P: AsRef<Path>,
    I: IntoIterator<Item = LabeledExample>,
{
    let file = File::create(path)?;
    let mut w = BufWriter::new(file);
    w.write_all(MAGIC)?;
    put_u32(&mut w, FORMAT_VERSION)?;
    put_u32(&mut w, header.grid.len() as u32)?;
    put_u32(&mut w, header.n_elements as u32)?;
    put_u32(&mut w, header.k_max as u32)?;
    put_u64(&mut w, 0)?;
    put_f64(&mut w, header.grid.lo)?;
    put_f64(&mut w, header.grid.step)?;
    put_f64(&mut w, header.element_spacing)?;
    let mut count = 0u64;
    for ex in examples {
        write_record(&mut w, header, &ex)?;
        count += 1;
    }
    let mut file = w.into_inner().map_err(|e| e.into_error())?;
    file.seek(SeekFrom::Start(COUNT_OFFSET))?;
    file.write_all(&count.to_le_bytes())?;
    file.sync_all()?;
    Ok(count)
}

fn truncated(e: io::Error, what: &str) -> Error {
    if e.kind() == io::ErrorKind::UnexpectedEof {
        Error::Truncated(what.to_string())
    } else {
        Error::Io(e)
    }
}

fn get<const B: usize, R: Read>(r: &mut R, what: &str) -> Result<[u8; B]> {
    let mut buf = [0u8; B];
    r.read_exact(&mut buf).map_err(|e| truncated(e, what))?;
    Ok(buf)
}
fn get_u32<R: Read>(r: &mut R, what: &str) -> Result<u32> {
    Ok(u32::from_le_bytes(get(r, what)?))
}
fn get_u64<R: Read>(r: &mut R, what: &str) -> Result<u64> {
    Ok(u64::from_le_bytes(get(r, what)?))
}
fn get_f32<R: Read>(r: &mut R, what: &str) -> Result<f64> {
    Ok(f32::from_le_bytes(get(r, what)?) as f64)
}
fn get_f64<R: Read>(r: &mut R, what: &str) -> Result<f64> {
    Ok(f64::from_le_bytes(get(r, what)?))
}

fn get_flags<R: Read>(r: &mut R, n: usize, what: &str) -> Result<Vec<bool>> {
    let mut buf = vec![0u8; n];
    r.read_exact(&mut buf).map_err(|e| truncated(e, what))?;
    buf.into_iter()
        .map(|b| match b {
            0 => Ok(false),
            1 => Ok(true),
            _ => Err(Error::Format(format!("{what}: byte {b} is not 0/1"))),
        })
        .collect()
}

/// Streaming reader over the records of a dataset file.
pub struct DatasetReader<R> {
    inner: R,
    header: DatasetHeader,
    geometry: ArrayGeometry,
    remaining: u64,
}

impl DatasetReader<BufReader<File>> {
    pub fn open<P: AsRef<Path>>(path: P) -> Result<Self> {
        Self::new(BufReader::new(File::open(path)?))
    }
}

impl<R: Read> DatasetReader<R> {
    pub fn new(mut inner: R) -> Result<Self> {
        let magic: [u8; 4] = get(&mut inner, "magic")?;
        if &magic != MAGIC {
            return Err(Error::VersionMismatch(format!("magic {magic:?}")));
        }
        let version = get_u32(&mut inner, "version")?;
        if version != FORMAT_VERSION {
            return Err(Error::VersionMismatch(format!(
                "version {version}, expected {FORMAT_VERSION}"
            )));
        }
        let m = get_u32(&mut inner, "header")? as usize;
        let n = get_u32(&mut inner, "header")? as usize;
        let k_max = get_u32(&mut inner, "header")? as usize;
        let count = get_u64(&mut inner, "header")?;
        let lo = get_f64(&mut inner, "header")?;
        let step = get_f64(&mut inner, "header")?;
        let spacing = get_f64(&mut inner, "header")?;
        if m == 0 {
            return Err(Error::Format("grid with zero points".into()));
        }
        let grid = AngleGrid::new(lo, lo + (m - 1) as f64 * step, step)
            .map_err(|e| Error::Format(format!("grid: {e}")))?;
        let header = DatasetHeader {
            grid,
            n_elements: n,
            element_spacing: spacing,
            k_max,
            count,
        };
        let geometry = header
            .geometry()
            .map_err(|e| Error::Format(format!("geometry: {e}")))?;
        Ok(Self {
            inner,
            header,
            geometry,
            remaining: count,
        })
    }

    pub fn header(&self) -> &DatasetHeader {
        &self.header
    }

    fn read_record(&mut self) -> Result<LabeledExample> {
        let r = &mut self.inner;
        let n = self.header.n_elements;
        let m = self.header.grid.len();
        let mut y = Vec::with_capacity(n);
        for _ in 0..n {
            let re = get_f32(r, "record")?;
            let im = get_f32(r, "record")?;
            y.push(C64::new(re, im));
        }
        let mask = get_flags(r, n, "mask")?;
        let gt = get_flags(r, m, "gt")?;
        let snr_db = get_f32(r, "record")?;
        let k = get_u32(r, "record")? as usize;
        if k == 0 || k > self.header.k_max {
            return Err(Error::Format(format!("record source count {k}")));
        }
        let doas = (0..k)
            .map(|_| get_f32(r, "record"))
            .collect::<Result<Vec<_>>>()?;
        let coeffs = (0..k)
            .map(|_| Ok(C64::new(get_f32(r, "record")?, get_f32(r, "record")?)))
            .collect::<Result<Vec<_>>>()?;
        let noise_seed = get_u64(r, "record")?;
        let geometry = self
            .geometry
            .with_mask(mask)
            .map_err(|e| Error::Format(format!("mask: {e}")))?;
        let sources =
            SourceSet::new(doas, coeffs).map_err(|e| Error::Format(format!("sources: {e}")))?;
        Ok(LabeledExample {
            snapshot: Snapshot {
                y,
                geometry,
                sources,
                snr_db,
                noise_seed,
            },
            gt,
        })
    }
}

impl<R: Read> Iterator for DatasetReader<R> {
    type Item = Result<LabeledExample>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.remaining == 0 {
            return None;
        }
        let rec = self.read_record();
        self.remaining = if rec.is_ok() { self.remaining - 1 } else { 0 };
        Some(rec)
    }
}

/// Reads a whole dataset file into memory.
pub fn read_dataset<P: AsRef<Path>>(path: P) -> Result<(DatasetHeader, Vec<LabeledExample>)> {
    let reader = DatasetReader::open(path)?;
    let header = reader.header().clone();
    let examples = reader.collect::<Result<Vec<_>>>()?;
    Ok((header, examples))
}
