//! Binary kernel dumps.
//!
//! Layout, all little endian:
//! `"TFLK" | version u32 | temperature f64 | t_max f64 | n_axes u32 |
//! dims u32 x n_axes | (re f64, im f64) x prod(dims)`.
//! Kernels use `dims = [3, n, 16, 16]` holding nodal values, left and right
//! cell moments (the moment blocks padded with one zero operator).

use std::io::{Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use num_complex::Complex64 as C64;
use thiserror::Error;

use tflow::superfermion_algebra::{SuperOp, DIM};
use tflow::timegrid_calculus::{GridFn1, KernelFn, TimeGrid};

pub const MAGIC: &[u8; 4] = b"TFLK";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DumpError {
    #[error("format error: {0}")]
    Format(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

fn format(msg: impl Into<String>) -> DumpError {
    DumpError::Format(msg.into())
}

#[derive(Clone, Debug, PartialEq)]
pub struct KernelDump {
    pub temperature: f64,
    pub t_max: f64,
    pub dims: Vec<u32>,
    pub data: Vec<C64>,
}

fn push_ops(data: &mut Vec<C64>, ops: &[SuperOp]) {
    for op in ops {
        for row in &op.0 {
            data.extend_from_slice(row);
        }
    }
}

fn read_ops(data: &[C64], count: usize) -> Vec<SuperOp> {
    (0..count)
        .map(|k| {
            let mut op = SuperOp::zero();
            for i in 0..DIM {
                op.0[i].copy_from_slice(&data[k * DIM * DIM + i * DIM..k * DIM * DIM + (i + 1) * DIM]);
            }
            op
        })
        .collect()
}

impl KernelDump {
    pub fn from_kernel(k: &KernelFn, temperature: f64) -> Self {
        let n = k.grid.n;
        let mut data = Vec::with_capacity(3 * n * DIM * DIM);
        push_ops(&mut data, &k.values);
        for block in [&k.left, &k.right] {
            push_ops(&mut data, block);
            push_ops(&mut data, &[SuperOp::zero()]);
        }
        KernelDump { temperature, t_max: k.grid.t_max(), dims: vec![3, n as u32, DIM as u32, DIM as u32], data }
    }

    pub fn from_grid_fn(f: &GridFn1, temperature: f64) -> Self {
        let mut data = Vec::new();
        push_ops(&mut data, &f.values);
        KernelDump { temperature, t_max: f.grid.t_max(), dims: vec![1, f.grid.n as u32, DIM as u32, DIM as u32], data }
    }

    fn grid(&self, blocks: u32) -> Result<TimeGrid, DumpError> {
        if self.dims.len() != 4 || self.dims[0] != blocks || self.dims[2] != DIM as u32 || self.dims[3] != DIM as u32 {
            return Err(format(format!("unexpected dims {:?}", self.dims)));
        }
        TimeGrid::new(self.t_max, self.dims[1] as usize).map_err(|e| format(e.to_string()))
    }

    pub fn to_kernel(&self) -> Result<KernelFn, DumpError> {
        let grid = self.grid(3)?;
        let n = grid.n;
        let stride = n * DIM * DIM;
        let mut k = KernelFn::zeros(grid);
        k.values = read_ops(&self.data, n);
        k.left = read_ops(&self.data[stride..], n - 1);
        k.right = read_ops(&self.data[2 * stride..], n - 1);
        Ok(k)
    }

    pub fn to_grid_fn(&self) -> Result<GridFn1, DumpError> {
        let grid = self.grid(1)?;
        Ok(GridFn1 { grid, values: read_ops(&self.data, grid.n) })
    }

    pub fn write_to(&self, w: &mut impl Write) -> Result<(), DumpError> {
        w.write_all(MAGIC)?;
        w.write_u32::<LittleEndian>(VERSION)?;
        w.write_f64::<LittleEndian>(self.temperature)?;
        w.write_f64::<LittleEndian>(self.t_max)?;
        w.write_u32::<LittleEndian>(self.dims.len() as u32)?;
        for &d in &self.dims {
            w.write_u32::<LittleEndian>(d)?;
        }
        for z in &self.data {
            w.write_f64::<LittleEndian>(z.re)?;
            w.write_f64::<LittleEndian>(z.im)?;
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self, DumpError> {
        let eof = |e: std::io::Error| {
            if e.kind() == std::io::ErrorKind::UnexpectedEof {
                format("truncated file")
            } else {
                DumpError::Io(e)
            }
        };
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(eof)?;
        if &magic != MAGIC {
            return Err(format("bad magic"));
        }
        let version = r.read_u32::<LittleEndian>().map_err(eof)?;
        if version != VERSION {
            return Err(format(format!("unsupported version {version}")));
        }
        let temperature = r.read_f64::<LittleEndian>().map_err(eof)?;
        let t_max = r.read_f64::<LittleEndian>().map_err(eof)?;
        let n_axes = r.read_u32::<LittleEndian>().map_err(eof)?;
        if n_axes > 8 {
            return Err(format(format!("{n_axes} axes")));
        }
        let dims = (0..n_axes).map(|_| r.read_u32::<LittleEndian>()).collect::<Result<Vec<_>, _>>().map_err(eof)?;
        let len = dims.iter().try_fold(1usize, |a, &d| a.checked_mul(d as usize)).ok_or_else(|| format("size overflow"))?;
        let mut data = Vec::with_capacity(len.min(1 << 24));
        for _ in 0..len {
            let re = r.read_f64::<LittleEndian>().map_err(eof)?;
            let im = r.read_f64::<LittleEndian>().map_err(eof)?;
            data.push(C64::new(re, im));
        }
        let mut extra = [0u8; 1];
        if r.read(&mut extra)? != 0 {
            return Err(format("trailing bytes"));
        }
        Ok(KernelDump { temperature, t_max, dims, data })
    }
}

pub fn dump_kernel(path: &Path, dump: &KernelDump) -> Result<(), DumpError> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    dump.write_to(&mut w)?;
    w.flush()?;
    Ok(())
}

pub fn load_kernel(path: &Path) -> Result<KernelDump, DumpError> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    KernelDump::read_from(&mut r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn random_fn(n: usize, seed: u64) -> GridFn1 {
        let grid = TimeGrid::new(1.5, n).unwrap();
        let mut x = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        let mut next = || {
            x = x.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            f64::from_bits((x >> 12) | 0x3ff0_0000_0000_0000) - 1.5
        };
        let mut f = GridFn1::zeros(grid);
        for v in &mut f.values {
            for row in v.0.iter_mut() {
                for z in row.iter_mut() {
                    *z = C64::new(next(), next());
                }
            }
        }
        f
    }

    proptest! {
        #[test]
        fn grid_function_round_trip_is_bit_exact(n in 3usize..7, seed in any::<u64>()) {
            let f = random_fn(n, seed);
            let mut buf = Vec::new();
            KernelDump::from_grid_fn(&f, 0.5).write_to(&mut buf).unwrap();
            let back = KernelDump::read_from(&mut buf.as_slice()).unwrap().to_grid_fn().unwrap();
            prop_assert_eq!(back, f);
        }
    }

    #[test]
    fn kernel_round_trip_through_a_file() {
        let k = KernelFn::from_nodal(&random_fn(7, 3));
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("k.tflk");
        dump_kernel(&p, &KernelDump::from_kernel(&k, 0.1)).unwrap();
        let d = load_kernel(&p).unwrap();
        assert_eq!(d.temperature, 0.1);
        assert_eq!(d.to_kernel().unwrap(), k);
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(bytes.len(), 4 + 4 + 8 + 8 + 4 + 16 + 3 * 7 * 256 * 16);
    }

    #[test]
    fn damaged_files_are_rejected() {
        let mut buf = Vec::new();
        KernelDump::from_grid_fn(&random_fn(3, 1), 1.0).write_to(&mut buf).unwrap();
        let cut = &buf[..buf.len() - 5];
        assert!(matches!(KernelDump::read_from(&mut &cut[..]), Err(DumpError::Format(_))));
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(KernelDump::read_from(&mut bad.as_slice()), Err(DumpError::Format(_))));
        let mut ver = buf.clone();
        ver[4] = 9;
        assert!(matches!(KernelDump::read_from(&mut ver.as_slice()), Err(DumpError::Format(_))));
        let mut long = buf;
        long.push(0);
        assert!(matches!(KernelDump::read_from(&mut long.as_slice()), Err(DumpError::Format(_))));
    }
}
