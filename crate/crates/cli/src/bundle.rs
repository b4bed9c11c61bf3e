//! `NEOB` container: a flat list of named little-endian arrays.
//!
//! ```text
//! "NEOB" | version u32 = 1 | entry count u32
//! per entry: name len u16 | name utf-8 | dtype u8 | rank u8 | dims u64 × rank | data
//! ```

use std::io::{Read, Write};
use std::path::Path;

use neo_core::laplacian::Point3;
use neo_core::numerics::{DenseMatrix, SparseSymmetric};
use neo_core::{Error, Result};

pub const MAGIC: &[u8; 4] = b"NEOB";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum Data {
    F64(Vec<f64>),
    F32(Vec<f32>),
    U32(Vec<u32>),
    I64(Vec<i64>),
}

impl Data {
    fn code(&self) -> u8 {
        match self {
            Data::F64(_) => 0,
            Data::F32(_) => 1,
            Data::U32(_) => 2,
            Data::I64(_) => 3,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Data::F64(v) => v.len(),
            Data::F32(v) => v.len(),
            Data::U32(v) => v.len(),
            Data::I64(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dtype_name(&self) -> &'static str {
        match self {
            Data::F64(_) => "f64",
            Data::F32(_) => "f32",
            Data::U32(_) => "u32",
            Data::I64(_) => "i64",
        }
    }

    fn write_le<W: Write>(&self, w: &mut W) -> std::io::Result<()> {
        let mut buf = Vec::with_capacity(self.len() * 8);
        match self {
            Data::F64(v) => v.iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes())),
            Data::F32(v) => v.iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes())),
            Data::U32(v) => v.iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes())),
            Data::I64(v) => v.iter().for_each(|x| buf.extend_from_slice(&x.to_le_bytes())),
        }
        w.write_all(&buf)
    }

    fn read_le<R: Read>(code: u8, count: usize, r: &mut R) -> Result<Data> {
        let width = match code {
            0 | 3 => 8,
            1 | 2 => 4,
            _ => return Err(Error::Format(format!("unknown dtype code {code}"))),
        };
        let bytes = count
            .checked_mul(width)
            .ok_or_else(|| Error::Format("entry size overflows".into()))?;
        // Read through `take` so a corrupt header cannot force a huge allocation.
        let mut buf = Vec::new();
        r.take(bytes as u64).read_to_end(&mut buf)?;
        if buf.len() != bytes {
            return Err(Error::Format(format!(
                "truncated payload: expected {bytes} bytes, found {}",
                buf.len()
            )));
        }
        let c4 = |c: &[u8]| <[u8; 4]>::try_from(c).unwrap();
        let c8 = |c: &[u8]| <[u8; 8]>::try_from(c).unwrap();
        Ok(match code {
            0 => Data::F64(buf.chunks_exact(8).map(|c| f64::from_le_bytes(c8(c))).collect()),
            1 => Data::F32(buf.chunks_exact(4).map(|c| f32::from_le_bytes(c4(c))).collect()),
            2 => Data::U32(buf.chunks_exact(4).map(|c| u32::from_le_bytes(c4(c))).collect()),
            _ => Data::I64(buf.chunks_exact(8).map(|c| i64::from_le_bytes(c8(c))).collect()),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Entry {
    dims: Vec<u64>,
    data: Data,
}

impl Entry {
    pub fn new(dims: Vec<u64>, data: Data) -> Result<Self> {
        if dims.len() > u8::MAX as usize {
            return Err(Error::Format(format!("rank {} exceeds 255", dims.len())));
        }
        let count = element_count(&dims)?;
        if count != data.len() {
            return Err(Error::Format(format!(
                "dims {dims:?} describe {count} elements, data has {}",
                data.len()
            )));
        }
        Ok(Self { dims, data })
    }

    pub fn dims(&self) -> &[u64] {
        &self.dims
    }

    pub fn data(&self) -> &Data {
        &self.data
    }
}

fn element_count(dims: &[u64]) -> Result<usize> {
    dims.iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(usize::try_from(d).ok()?))
        .ok_or_else(|| Error::Format(format!("dims {dims:?} overflow")))
}

/// Entries keep insertion order; inserting an existing name replaces it in place.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Bundle {
    entries: Vec<(String, Entry)>,
}

fn read_array<const B: usize, R: Read>(r: &mut R) -> Result<[u8; B]> {
    let mut b = [0u8; B];
    r.read_exact(&mut b).map_err(|e| match e.kind() {
        std::io::ErrorKind::UnexpectedEof => Error::Format("truncated header".into()),
        _ => Error::Io(e),
    })?;
    Ok(b)
}

impl Bundle {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.iter().map(|(n, _)| n.as_str())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.get(name).is_some()
    }

    pub fn get(&self, name: &str) -> Option<&Entry> {
        self.entries.iter().find(|(n, _)| n == name).map(|(_, e)| e)
    }

    pub fn insert(&mut self, name: &str, entry: Entry) -> Result<()> {
        if name.len() > u16::MAX as usize {
            return Err(Error::Format("entry name longer than 65535 bytes".into()));
        }
        match self.entries.iter_mut().find(|(n, _)| n == name) {
            Some(slot) => slot.1 = entry,
            None => self.entries.push((name.to_string(), entry)),
        }
        Ok(())
    }

    /// Appends every entry of `other`, replacing same-named ones.
    pub fn extend_from(&mut self, other: &Bundle) -> Result<()> {
        for (n, e) in &other.entries {
            self.insert(n, e.clone())?;
        }
        Ok(())
    }

    pub fn write_to<W: Write>(&self, mut w: W) -> Result<()> {
        let count = u32::try_from(self.entries.len()).map_err(|_| Error::Format("too many entries".into()))?;
        w.write_all(MAGIC)?;
        w.write_all(&VERSION.to_le_bytes())?;
        w.write_all(&count.to_le_bytes())?;
        for (name, e) in &self.entries {
            w.write_all(&(name.len() as u16).to_le_bytes())?;
            w.write_all(name.as_bytes())?;
            w.write_all(&[e.data.code(), e.dims.len() as u8])?;
            for d in &e.dims {
                w.write_all(&d.to_le_bytes())?;
            }
            e.data.write_le(&mut w)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut r: R) -> Result<Self> {
        if &read_array::<4, _>(&mut r)? != MAGIC {
            return Err(Error::Format("bad magic, not a NEOB bundle".into()));
        }
        let version = u32::from_le_bytes(read_array(&mut r)?);
        if version != VERSION {
            return Err(Error::Format(format!("unsupported version {version}")));
        }
        let count = u32::from_le_bytes(read_array(&mut r)?);
        let mut bundle = Bundle::new();
        for _ in 0..count {
            let len = u16::from_le_bytes(read_array(&mut r)?) as usize;
            let mut name = vec![0u8; len];
            r.read_exact(&mut name)
                .map_err(|_| Error::Format("truncated entry name".into()))?;
            let name = String::from_utf8(name).map_err(|_| Error::Format("entry name is not UTF-8".into()))?;
            let [code, rank] = read_array::<2, _>(&mut r)?;
            let dims = (0..rank)
                .map(|_| read_array::<8, _>(&mut r).map(u64::from_le_bytes))
                .collect::<Result<Vec<_>>>()?;
            let data = Data::read_le(code, element_count(&dims)?, &mut r)
                .map_err(|e| Error::Format(format!("entry {name:?}: {e}")))?;
            if bundle.contains(&name) {
                return Err(Error::Format(format!("duplicate entry {name:?}")));
            }
            bundle.insert(&name, Entry::new(dims, data)?)?;
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(Error::Format("trailing bytes after last entry".into()));
        }
        Ok(bundle)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path)?;
        self.write_to(std::io::BufWriter::new(file))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        Self::read_from(std::io::BufReader::new(file))
    }

    /// Serialized bytes; equal bytes mean bitwise-equal bundles, NaN payloads included.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut v = Vec::new();
        self.write_to(&mut v).expect("writing to a Vec cannot fail");
        v
    }

    fn require(&self, name: &str) -> Result<&Entry> {
        self.get(name)
            .ok_or_else(|| Error::InvalidInput(format!("bundle has no entry {name:?}")))
    }

    pub fn put_f64(&mut self, name: &str, dims: Vec<u64>, data: Vec<f64>) -> Result<()> {
        self.insert(name, Entry::new(dims, Data::F64(data))?)
    }

    pub fn put_vector(&mut self, name: &str, v: &[f64]) -> Result<()> {
        self.put_f64(name, vec![v.len() as u64], v.to_vec())
    }

    /// Rank-2 entry `[rows, cols]`, row-major.
    pub fn put_matrix(&mut self, name: &str, m: &DenseMatrix) -> Result<()> {
        let (r, c) = m.shape();
        let mut data = Vec::with_capacity(r * c);
        for i in 0..r {
            data.extend((0..c).map(|j| m[(i, j)]));
        }
        self.put_f64(name, vec![r as u64, c as u64], data)
    }

    /// Floating-point entry of any rank, widened to `f64`.
    pub fn vector(&self, name: &str) -> Result<Vec<f64>> {
        match self.require(name)?.data() {
            Data::F64(v) => Ok(v.clone()),
            Data::F32(v) => Ok(v.iter().map(|&x| x as f64).collect()),
            other => Err(Error::InvalidInput(format!(
                "entry {name:?} has dtype {}, expected a float",
                other.dtype_name()
            ))),
        }
    }

    pub fn matrix(&self, name: &str) -> Result<DenseMatrix> {
        let e = self.require(name)?;
        let &[r, c] = e.dims() else {
            return Err(Error::InvalidInput(format!(
                "entry {name:?} has rank {}, expected 2",
                e.dims().len()
            )));
        };
        let (r, c) = (r as usize, c as usize);
        let v = self.vector(name)?;
        Ok(DenseMatrix::from_fn(r, c, |i, j| v[i * c + j]))
    }

    fn indices(&self, name: &str) -> Result<Vec<usize>> {
        let bad = |v: String| Error::InvalidInput(format!("entry {name:?} has invalid index {v}"));
        match self.require(name)?.data() {
            Data::U32(v) => Ok(v.iter().map(|&x| x as usize).collect()),
            Data::I64(v) => v.iter().map(|&x| usize::try_from(x).map_err(|_| bad(x.to_string()))).collect(),
            other => Err(Error::InvalidInput(format!(
                "entry {name:?} has dtype {}, expected an integer type",
                other.dtype_name()
            ))),
        }
    }

    /// `{prefix}.rowptr` (i64), `{prefix}.colidx` (u32), `{prefix}.values` (f64).
    pub fn put_sparse(&mut self, prefix: &str, a: &SparseSymmetric) -> Result<()> {
        let rowptr: Vec<i64> = a.row_ptr().iter().map(|&p| p as i64).collect();
        let colidx = a
            .col_idx()
            .iter()
            .map(|&c| u32::try_from(c).map_err(|_| Error::Format("column index exceeds u32".into())))
            .collect::<Result<Vec<_>>>()?;
        self.insert(&format!("{prefix}.rowptr"), Entry::new(vec![rowptr.len() as u64], Data::I64(rowptr))?)?;
        self.insert(&format!("{prefix}.colidx"), Entry::new(vec![colidx.len() as u64], Data::U32(colidx))?)?;
        self.put_vector(&format!("{prefix}.values"), a.values())
    }

    pub fn sparse(&self, prefix: &str) -> Result<SparseSymmetric> {
        let rowptr = self.indices(&format!("{prefix}.rowptr"))?;
        if rowptr.is_empty() {
            return Err(Error::InvalidInput(format!("{prefix}.rowptr is empty")));
        }
        let colidx = self.indices(&format!("{prefix}.colidx"))?;
        let values = self.vector(&format!("{prefix}.values"))?;
        SparseSymmetric::from_csr(rowptr.len() - 1, rowptr, colidx, values)
    }

    pub fn put_points(&mut self, name: &str, pts: &[Point3]) -> Result<()> {
        let data = pts.iter().flat_map(|p| p.iter().copied()).collect();
        self.put_f64(name, vec![pts.len() as u64, 3], data)
    }

    pub fn points(&self, name: &str) -> Result<Vec<Point3>> {
        let m = self.matrix(name)?;
        if m.cols() != 3 {
            return Err(Error::InvalidInput(format!("entry {name:?} must be N x 3")));
        }
        Ok((0..m.rows()).map(|i| [m[(i, 0)], m[(i, 1)], m[(i, 2)]]).collect())
    }
}
