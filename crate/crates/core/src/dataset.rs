//! PAMR: a header file plus one payload file per data domain.
//!
//! Header `<base>.pamr` (little-endian): `"PAMR"`, u32 version, u32 ndim,
//! u32 levelmin, u32 levelmax, f64 box_len, u32 nfields, per field
//! (u16 name length, UTF-8 name, u8 conservative flag), u32 ndomains, per
//! domain u64 record count.
//!
//! Payload `<base>.dNNNNN`: records of u8 level, u8 is_leaf, u32 ix, u32 iy,
//! u32 iz, then one f64 per field.

use std::fs;
use std::path::{Path, PathBuf};

use crate::amr::{check_header, AmrTree, CellCoord, FieldDesc, LevelCounter, TraversalProbe, TreeAssembler, MAX_LEVEL};
use crate::error::{Error, Result};
use crate::scalar::Real;

pub const MAGIC: [u8; 4] = *b"PAMR";
pub const VERSION: u32 = 1;
pub const HEADER_EXT: &str = "pamr";

/// Decoded header file.
#[derive(Clone, Debug, PartialEq, serde::Serialize)]
pub struct DatasetHeader {
    pub version: u32,
    pub ndim: u32,
    pub levelmin: u8,
    pub levelmax: u8,
    pub box_len: f64,
    pub fields: Vec<FieldDesc>,
    pub ndomains: u32,
    pub record_counts: Vec<u64>,
}

impl DatasetHeader {
    pub fn node_count(&self) -> u64 {
        self.record_counts.iter().sum()
    }

    pub fn record_len(&self) -> usize {
        record_len(self.fields.len())
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut b = Vec::new();
        b.extend_from_slice(&MAGIC);
        b.extend_from_slice(&self.version.to_le_bytes());
        b.extend_from_slice(&self.ndim.to_le_bytes());
        b.extend_from_slice(&(self.levelmin as u32).to_le_bytes());
        b.extend_from_slice(&(self.levelmax as u32).to_le_bytes());
        b.extend_from_slice(&self.box_len.to_le_bytes());
        b.extend_from_slice(&(self.fields.len() as u32).to_le_bytes());
        for f in &self.fields {
            b.extend_from_slice(&(f.name.len() as u16).to_le_bytes());
            b.extend_from_slice(f.name.as_bytes());
            b.push(f.conservative as u8);
        }
        b.extend_from_slice(&self.ndomains.to_le_bytes());
        for c in &self.record_counts {
            b.extend_from_slice(&c.to_le_bytes());
        }
        b
    }

    pub fn decode(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0, path };
        let magic = r.take(4)?;
        if magic != MAGIC {
            return Err(r.format(format!("bad magic {:?}", String::from_utf8_lossy(magic))));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(r.format(format!("unsupported version {version}")));
        }
        let ndim = r.u32()?;
        if ndim != 3 {
            return Err(r.format(format!("ndim must be 3, got {ndim}")));
        }
        let levelmin = r.u32()?;
        let levelmax = r.u32()?;
        if levelmin > levelmax || levelmax > MAX_LEVEL as u32 {
            return Err(r.format(format!("bad level range {levelmin}..{levelmax}")));
        }
        let box_len = r.f64()?;
        let nfields = r.u32()?;
        let mut fields = Vec::with_capacity(nfields.min(1024) as usize);
        for _ in 0..nfields {
            let len = r.u16()? as usize;
            let name = std::str::from_utf8(r.take(len)?)
                .map_err(|e| r.format(format!("field name is not UTF-8: {e}")))?
                .to_owned();
            let flag = r.u8()?;
            if flag > 1 {
                return Err(r.format(format!("bad conservative flag {flag}")));
            }
            fields.push(FieldDesc::new(name, flag == 1));
        }
        let ndomains = r.u32()?;
        if ndomains == 0 {
            return Err(r.format("ndomains must be at least 1".into()));
        }
        let mut record_counts = Vec::with_capacity(ndomains.min(1 << 16) as usize);
        for _ in 0..ndomains {
            record_counts.push(r.u64()?);
        }
        if r.pos != bytes.len() {
            return Err(r.corrupt(format!("{} trailing bytes", bytes.len() - r.pos)));
        }
        check_header(box_len, levelmin as u8, levelmax as u8, &fields)
            .map_err(|e| r.format(e.to_string()))?;
        Ok(Self {
            version,
            ndim,
            levelmin: levelmin as u8,
            levelmax: levelmax as u8,
            box_len,
            fields,
            ndomains,
            record_counts,
        })
    }
}

fn record_len(nfields: usize) -> usize {
    14 + 8 * nfields
}

/// Strips a trailing `.pamr` so either spelling names the same dataset.
pub fn base_path(path: impl AsRef<Path>) -> PathBuf {
    let p = path.as_ref();
    if p.extension().is_some_and(|e| e == HEADER_EXT) {
        p.with_extension("")
    } else {
        p.to_path_buf()
    }
}

pub fn header_path(base: impl AsRef<Path>) -> PathBuf {
    append(base_path(base), &format!(".{HEADER_EXT}"))
}

pub fn domain_path(base: impl AsRef<Path>, domain: u32) -> PathBuf {
    append(base_path(base), &format!(".d{domain:05}"))
}

fn append(p: PathBuf, suffix: &str) -> PathBuf {
    let mut s = p.into_os_string();
    s.push(suffix);
    s.into()
}

/// Near-equal contiguous split: the first `n % parts` runs get one extra.
pub fn partition_counts(n: u64, parts: u32) -> Vec<u64> {
    let p = parts as u64;
    (0..p).map(|i| n / p + u64::from(i < n % p)).collect()
}

/// Writes the header and `ndomains` payload files, splitting the depth-first
/// node order into contiguous runs.
pub fn write_dataset<T: Real>(tree: &AmrTree<T>, base: impl AsRef<Path>, ndomains: u32) -> Result<DatasetHeader> {
    let base = base_path(base);
    let order = tree.dfs_order();
    if ndomains == 0 || ndomains as usize > order.len() {
        return Err(Error::arg(format!(
            "ndomains must be in 1..={}, got {ndomains}",
            order.len()
        )));
    }
    if order.iter().any(|&i| tree.node(i).is_hollow()) {
        return Err(Error::arg("cannot write a partial tree"));
    }
    let counts = partition_counts(order.len() as u64, ndomains);
    let header = DatasetHeader {
        version: VERSION,
        ndim: 3,
        levelmin: tree.levelmin(),
        levelmax: tree.levelmax(),
        box_len: tree.box_len().as_f64(),
        fields: tree.fields().to_vec(),
        ndomains,
        record_counts: counts.clone(),
    };
    let hp = header_path(&base);
    fs::write(&hp, header.encode()).map_err(|e| Error::io(&hp, e))?;

    let rl = record_len(tree.nfields());
    let mut start = 0usize;
    for (d, &count) in counts.iter().enumerate() {
        let run = &order[start..start + count as usize];
        start += count as usize;
        let mut buf = Vec::with_capacity(run.len() * rl);
        for &idx in run {
            let n = tree.node(idx);
            let c = n.coord();
            buf.push(c.level);
            buf.push(n.is_leaf() as u8);
            for i in [c.ix, c.iy, c.iz] {
                buf.extend_from_slice(&i.to_le_bytes());
            }
            for v in n.values() {
                buf.extend_from_slice(&v.as_f64().to_le_bytes());
            }
        }
        let dp = domain_path(&base, d as u32);
        fs::write(&dp, buf).map_err(|e| Error::io(&dp, e))?;
    }
    Ok(header)
}

pub fn read_header(base: impl AsRef<Path>) -> Result<DatasetHeader> {
    let hp = header_path(base);
    let bytes = fs::read(&hp).map_err(|e| Error::io(&hp, e))?;
    DatasetHeader::decode(&bytes, &hp)
}

/// Counters from a read; `materialized` is per level.
#[derive(Clone, Debug, Default)]
pub struct ReadStats {
    pub records_scanned: u64,
    pub records_skipped: u64,
    pub materialized: LevelCounter,
}

/// Decoded record before insertion.
struct Record<T> {
    coord: CellCoord,
    is_leaf: bool,
    values: Vec<T>,
}

struct DomainRecords<T> {
    records: Vec<Record<T>>,
    scanned: u64,
    skipped: u64,
}

fn parse_domain<T: Real>(
    header: &DatasetHeader,
    base: &Path,
    domain: u32,
    cap: u8,
) -> Result<DomainRecords<T>> {
    let path = domain_path(base, domain);
    let bytes = fs::read(&path).map_err(|e| Error::io(&path, e))?;
    let rl = header.record_len();
    let count = header.record_counts[domain as usize];
    let expected = count as usize * rl;
    if bytes.len() < expected {
        return Err(Error::Corruption {
            path,
            msg: format!(
                "truncated: {} bytes, header announces {count} records of {rl} bytes",
                bytes.len()
            ),
        });
    }
    if bytes.len() > expected {
        return Err(Error::Corruption {
            path,
            msg: format!("{} trailing bytes", bytes.len() - expected),
        });
    }
    let nf = header.fields.len();
    let mut out = DomainRecords {
        records: Vec::new(),
        scanned: 0,
        skipped: 0,
    };
    for rec in bytes.chunks_exact(rl) {
        out.scanned += 1;
        let level = rec[0];
        // Deep records are filtered on the level byte alone.
        if level > cap {
            out.skipped += 1;
            continue;
        }
        let leaf_flag = rec[1];
        if leaf_flag > 1 {
            return Err(Error::Corruption {
                path,
                msg: format!("bad leaf flag {leaf_flag}"),
            });
        }
        let u = |o: usize| u32::from_le_bytes(rec[o..o + 4].try_into().unwrap());
        let coord = CellCoord::new(level, u(2), u(6), u(10))
            .filter(|c| c.level <= header.levelmax)
            .ok_or_else(|| {
                Error::Structural(format!(
                    "record out of range: level {level}, ({}, {}, {})",
                    u(2),
                    u(6),
                    u(10)
                ))
            })?;
        let values = (0..nf)
            .map(|f| {
                let o = 14 + 8 * f;
                T::of(f64::from_le_bytes(rec[o..o + 8].try_into().unwrap()))
            })
            .collect();
        out.records.push(Record {
            coord,
            is_leaf: leaf_flag == 1,
            values,
        });
    }
    Ok(out)
}

/// Reads the whole dataset, optionally stopping at `max_level`.
pub fn read_dataset<T: Real>(base: impl AsRef<Path>, max_level: Option<u8>) -> Result<AmrTree<T>> {
    read_dataset_with_stats(base, max_level).map(|(t, _)| t)
}

pub fn read_dataset_with_stats<T: Real>(
    base: impl AsRef<Path>,
    max_level: Option<u8>,
) -> Result<(AmrTree<T>, ReadStats)> {
    let base = base_path(base);
    let header = read_header(&base)?;
    let cap = max_level.map_or(header.levelmax, |m| m.min(header.levelmax));
    // Payload files are parsed concurrently and inserted in domain order.
    let parsed: Vec<Result<DomainRecords<T>>> = std::thread::scope(|s| {
        let handles: Vec<_> = (0..header.ndomains)
            .map(|d| {
                let (h, b) = (&header, &base);
                s.spawn(move || parse_domain::<T>(h, b, d, cap))
            })
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("domain reader panicked"))
            .collect()
    });
    let mut asm = TreeAssembler::new(
        T::of(header.box_len),
        header.levelmin,
        header.levelmax,
        header.fields.clone(),
        header.ndomains,
    );
    let mut stats = ReadStats::default();
    for (d, dom) in parsed.into_iter().enumerate() {
        let dom = dom?;
        stats.records_scanned += dom.scanned;
        stats.records_skipped += dom.skipped;
        for r in dom.records {
            stats.materialized.visit(r.coord.level);
            asm.insert(r.coord, r.is_leaf, d as u32, &r.values)?;
        }
    }
    Ok((asm.finish_complete(cap)?, stats))
}

/// Private tree of one domain: only that domain's records carry data, every
/// other node is a hollow placeholder. Records deeper than `max_level` are
/// skipped.
pub fn read_domain<T: Real>(
    base: impl AsRef<Path>,
    header: &DatasetHeader,
    domain: u32,
    max_level: Option<u8>,
) -> Result<AmrTree<T>> {
    if domain >= header.ndomains {
        return Err(Error::arg(format!(
            "domain {domain} out of range (ndomains = {})",
            header.ndomains
        )));
    }
    let base = base_path(base);
    let cap = max_level.map_or(header.levelmax, |m| m.min(header.levelmax));
    let dom = parse_domain::<T>(header, &base, domain, cap)?;
    let mut asm = TreeAssembler::new(
        T::of(header.box_len),
        header.levelmin,
        header.levelmax,
        header.fields.clone(),
        header.ndomains,
    );
    for r in dom.records {
        asm.insert(r.coord, r.is_leaf, domain, &r.values)?;
    }
    Ok(asm.finish_partial(cap))
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.bytes.len() {
            return Err(self.corrupt(format!("truncated header at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn format(&self, msg: String) -> Error {
        Error::Format {
            path: self.path.to_path_buf(),
            msg,
        }
    }

    fn corrupt(&self, msg: String) -> Error {
        Error::Corruption {
            path: self.path.to_path_buf(),
            msg,
        }
    }
}
