//! Named complex-matrix container used to dump channel realizations and
//! SDP instances for regression capture and inspection by other tools.
//!
//! Layout (all integers and floats little-endian):
//!
//! ```text
//! magic   "IRSMAT01"                 8 bytes
//! count   u32                        number of matrices
//! repeat count times:
//!   name_len u16, name (UTF-8)
//!   rows u64, cols u64
//!   rows*cols entries, column-major, each (re f64, im f64)
//! ```

use std::io::{Read, Write};
use std::path::Path;

use crate::channels::ChannelSet;
use crate::linalg::{c64, CMat};
use crate::sdp::MaxMinSdpInstance;
use crate::{Error, Result};

pub const MAGIC: &[u8; 8] = b"IRSMAT01";

/// Largest accepted entry count per matrix; guards against corrupt headers.
const MAX_ENTRIES: u64 = 1 << 28;

pub fn write_matrices<W: Write>(mut out: W, mats: &[(String, CMat)]) -> Result<()> {
    out.write_all(MAGIC)?;
    let count = u32::try_from(mats.len())
        .map_err(|_| Error::Domain("too many matrices for container".into()))?;
    out.write_all(&count.to_le_bytes())?;
    for (name, m) in mats {
        let len = u16::try_from(name.len())
            .map_err(|_| Error::Domain(format!("matrix name too long: {name}")))?;
        out.write_all(&len.to_le_bytes())?;
        out.write_all(name.as_bytes())?;
        out.write_all(&(m.nrows() as u64).to_le_bytes())?;
        out.write_all(&(m.ncols() as u64).to_le_bytes())?;
        for z in m.iter() {
            out.write_all(&z.re.to_le_bytes())?;
            out.write_all(&z.im.to_le_bytes())?;
        }
    }
    out.flush()?;
    Ok(())
}

fn read_array<const N: usize, R: Read>(input: &mut R) -> Result<[u8; N]> {
    let mut buf = [0u8; N];
    input.read_exact(&mut buf)?;
    Ok(buf)
}

pub fn read_matrices<R: Read>(mut input: R) -> Result<Vec<(String, CMat)>> {
    let magic: [u8; 8] = read_array(&mut input)?;
    if &magic != MAGIC {
        return Err(Error::Config("not a matrix container (bad magic)".into()));
    }
    let count = u32::from_le_bytes(read_array(&mut input)?);
    let mut out = Vec::with_capacity(count.min(1024) as usize);
    for _ in 0..count {
        let len = u16::from_le_bytes(read_array(&mut input)?) as usize;
        let mut name = vec![0u8; len];
        input.read_exact(&mut name)?;
        let name = String::from_utf8(name)
            .map_err(|_| Error::Config("matrix name is not UTF-8".into()))?;
        let rows = u64::from_le_bytes(read_array(&mut input)?);
        let cols = u64::from_le_bytes(read_array(&mut input)?);
        let entries = rows
            .checked_mul(cols)
            .filter(|&n| n <= MAX_ENTRIES)
            .ok_or_else(|| Error::Config(format!("matrix '{name}' has implausible size")))?;
        let mut data = Vec::with_capacity(entries as usize);
        for _ in 0..entries {
            let re = f64::from_le_bytes(read_array(&mut input)?);
            let im = f64::from_le_bytes(read_array(&mut input)?);
            data.push(c64(re, im));
        }
        out.push((name, CMat::from_vec(rows as usize, cols as usize, data)));
    }
    Ok(out)
}

pub fn save_matrices(path: &Path, mats: &[(String, CMat)]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_matrices(std::io::BufWriter::new(file), mats)
}

pub fn load_matrices(path: &Path) -> Result<Vec<(String, CMat)>> {
    let file = std::fs::File::open(path)?;
    read_matrices(std::io::BufReader::new(file))
}

/// The five raw links of a realization, named `u1 u2 d g1 g2`.
pub fn channel_set_matrices(chs: &ChannelSet) -> Vec<(String, CMat)> {
    vec![
        ("u1".into(), chs.u1.clone()),
        ("u2".into(), chs.u2.clone()),
        ("d".into(), chs.d.clone()),
        ("g1".into(), chs.g1.clone()),
        ("g2".into(), chs.g2.clone()),
    ]
}

pub fn channel_set_from_matrices(mats: &[(String, CMat)]) -> Result<ChannelSet> {
    let find = |name: &str| {
        mats.iter()
            .find(|(n, _)| n == name)
            .map(|(_, m)| m.clone())
            .ok_or_else(|| Error::Config(format!("container lacks matrix '{name}'")))
    };
    ChannelSet::from_links(
        find("u1")?,
        find("u2")?,
        find("d")?,
        find("g1")?,
        find("g2")?,
    )
}

pub fn save_channel_set(path: &Path, chs: &ChannelSet) -> Result<()> {
    save_matrices(path, &channel_set_matrices(chs))
}

pub fn load_channel_set(path: &Path) -> Result<ChannelSet> {
    channel_set_from_matrices(&load_matrices(path)?)
}

pub fn save_instance(path: &Path, inst: &MaxMinSdpInstance) -> Result<()> {
    save_matrices(path, &inst.to_matrices())
}

pub fn load_instance(path: &Path) -> Result<MaxMinSdpInstance> {
    Ok(MaxMinSdpInstance::from_matrices(&load_matrices(path)?)?)
}
