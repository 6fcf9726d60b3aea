//! Binary ensemble snapshots.
//!
//! Layout, all little-endian:
//!
//! ```text
//! magic "GBEN" | version u32 | N u64 | weight f64 | time f64 | alpha f64 | e f64 | theta0 f64
//! | u0 3×f64 | seed u64 | step u64 | dt f64 | vmax f64 | velocities 3N×f64
//! ```
//!
//! `seed` and `step` address the counter-based random streams, so they are the whole
//! generator state; `vmax` is the current collision majorant.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::velocity::Velocity;

use super::{ParticleEnsemble, SimConfig};

pub const MAGIC: &[u8; 4] = b"GBEN";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct SnapshotHeader {
    pub n: u64,
    pub weight: f64,
    pub time: f64,
    pub alpha: f64,
    pub e: f64,
    pub theta0: f64,
    pub u0: Velocity,
    pub seed: u64,
    pub step: u64,
    pub dt: f64,
    pub v_max: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub header: SnapshotHeader,
    pub velocities: Vec<Velocity>,
}

impl Snapshot {
    pub fn capture(ensemble: &ParticleEnsemble, config: &SimConfig) -> Self {
        Snapshot {
            header: SnapshotHeader {
                n: ensemble.velocities.len() as u64,
                weight: ensemble.weight,
                time: ensemble.time,
                alpha: config.alpha.get(),
                e: config.bath.e.get(),
                theta0: config.bath.theta0,
                u0: config.bath.u0,
                seed: ensemble.seed,
                step: ensemble.step,
                dt: config.dt,
                v_max: ensemble.v_max,
            },
            velocities: ensemble.velocities.clone(),
        }
    }

    /// Differences between the header and `config`; empty when compatible.
    pub fn mismatches(&self, config: &SimConfig) -> Vec<String> {
        let h = &self.header;
        let mut out = Vec::new();
        let mut check = |name: &str, snap: f64, conf: f64| {
            if snap.to_bits() != conf.to_bits() {
                out.push(format!("{name}: snapshot {snap}, config {conf}"));
            }
        };
        check("alpha", h.alpha, config.alpha.get());
        check("e", h.e, config.bath.e.get());
        check("theta0", h.theta0, config.bath.theta0);
        check("dt", h.dt, config.dt);
        check("weight", h.weight, config.mass / config.n as f64);
        for k in 0..3 {
            check(["u0.x", "u0.y", "u0.z"][k], h.u0.0[k], config.bath.u0.0[k]);
        }
        if h.n != config.n as u64 {
            out.push(format!("N: snapshot {}, config {}", h.n, config.n));
        }
        if h.seed != config.seed {
            out.push(format!("seed: snapshot {}, config {}", h.seed, config.seed));
        }
        out
    }

    pub fn into_ensemble(self) -> ParticleEnsemble {
        ParticleEnsemble {
            velocities: self.velocities,
            weight: self.header.weight,
            time: self.header.time,
            step: self.header.step,
            seed: self.header.seed,
            v_max: self.header.v_max,
        }
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        let h = &self.header;
        out.write_all(MAGIC)?;
        out.write_all(&VERSION.to_le_bytes())?;
        out.write_all(&h.n.to_le_bytes())?;
        for x in [h.weight, h.time, h.alpha, h.e, h.theta0] {
            out.write_all(&x.to_le_bytes())?;
        }
        for x in h.u0.0 {
            out.write_all(&x.to_le_bytes())?;
        }
        out.write_all(&h.seed.to_le_bytes())?;
        out.write_all(&h.step.to_le_bytes())?;
        out.write_all(&h.dt.to_le_bytes())?;
        out.write_all(&h.v_max.to_le_bytes())?;
        for v in &self.velocities {
            for x in v.0 {
                out.write_all(&x.to_le_bytes())?;
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bad = |reason: String| Error::Snapshot {
            path: path.to_path_buf(),
            reason,
        };
        let mut r = BufReader::new(File::open(path)?);
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|e| bad(e.to_string()))?;
        if &magic != MAGIC {
            return Err(bad(format!("bad magic {magic:?}")));
        }
        let version = u32::from_le_bytes(read_array(&mut r).map_err(|e| bad(e.to_string()))?);
        if version != VERSION {
            return Err(bad(format!("unsupported version {version}")));
        }
        let n = read_u64(&mut r).map_err(|e| bad(e.to_string()))?;
        let mut floats = [0.0; 8];
        for x in floats.iter_mut() {
            *x = read_f64(&mut r).map_err(|e| bad(e.to_string()))?;
        }
        let seed = read_u64(&mut r).map_err(|e| bad(e.to_string()))?;
        let step = read_u64(&mut r).map_err(|e| bad(e.to_string()))?;
        let dt = read_f64(&mut r).map_err(|e| bad(e.to_string()))?;
        let v_max = read_f64(&mut r).map_err(|e| bad(e.to_string()))?;
        let n_usize = usize::try_from(n).map_err(|_| bad(format!("N = {n} too large")))?;
        let mut velocities = Vec::with_capacity(n_usize);
        for _ in 0..n_usize {
            let mut c = [0.0; 3];
            for x in c.iter_mut() {
                *x = read_f64(&mut r).map_err(|e| bad(format!("truncated velocity data: {e}")))?;
            }
            velocities.push(Velocity(c));
        }
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(bad("trailing bytes after velocity data".into()));
        }
        Ok(Snapshot {
            header: SnapshotHeader {
                n,
                weight: floats[0],
                time: floats[1],
                alpha: floats[2],
                e: floats[3],
                theta0: floats[4],
                u0: Velocity::new(floats[5], floats[6], floats[7]),
                seed,
                step,
                dt,
                v_max,
            },
            velocities,
        })
    }
}

fn read_array<R: Read, const K: usize>(r: &mut R) -> std::io::Result<[u8; K]> {
    let mut buf = [0u8; K];
    r.read_exact(&mut buf)?;
    Ok(buf)
}

fn read_u64<R: Read>(r: &mut R) -> std::io::Result<u64> {
    Ok(u64::from_le_bytes(read_array(r)?))
}

fn read_f64<R: Read>(r: &mut R) -> std::io::Result<f64> {
    Ok(f64::from_le_bytes(read_array(r)?))
}
