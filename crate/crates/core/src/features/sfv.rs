//! Binary feature files.
//!
//! Layout (little-endian): magic `SFV1`, method tag NUL-padded to 8 bytes,
//! `u32` height, width, channels and count, then per feature the `f32` values
//! x, y, response, scale, orientation followed by `channels` descriptor values.

use std::io::{Read, Write};
use std::path::Path;

use super::{Feature, FeatureSet, Keypoint, Method};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"SFV1";

pub fn write_sfv(features: &FeatureSet, w: &mut impl Write) -> Result<()> {
    let mut buf = Vec::with_capacity(28 + features.len() * (5 + features.channels()) * 4);
    buf.extend_from_slice(MAGIC);
    let mut tag = [0u8; 8];
    tag[..features.method().tag().len()].copy_from_slice(features.method().tag().as_bytes());
    buf.extend_from_slice(&tag);
    for v in [features.height(), features.width(), features.channels(), features.len()] {
        buf.extend_from_slice(&(v as u32).to_le_bytes());
    }
    for f in features.features() {
        let k = &f.keypoint;
        for v in [k.x, k.y, k.response, k.scale, k.orientation].iter().chain(&f.descriptor) {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    Ok(())
}

fn take<const N: usize>(bytes: &[u8], pos: &mut usize) -> Result<[u8; N]> {
    let end = *pos + N;
    let s = bytes.get(*pos..end).ok_or_else(|| Error::Format("truncated feature file".into()))?;
    *pos = end;
    Ok(s.try_into().expect("slice length"))
}

pub fn read_sfv(r: &mut impl Read) -> Result<FeatureSet> {
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes)?;
    let mut pos = 0;
    if &take::<4>(&bytes, &mut pos)? != MAGIC {
        return Err(Error::Format("not an SFV1 feature file".into()));
    }
    let tag = take::<8>(&bytes, &mut pos)?;
    let tag = std::str::from_utf8(&tag).map_err(|_| Error::Format("method tag is not ASCII".into()))?.trim_end_matches('\0');
    let method: Method = tag.parse().map_err(|_| Error::Format(format!("unknown method tag `{tag}`")))?;
    let mut u = || take::<4>(&bytes, &mut pos).map(|b| u32::from_le_bytes(b) as usize);
    let (h, w, c, count) = (u()?, u()?, u()?, u()?);
    if c != method.channels() {
        return Err(Error::Format(format!("{method} expects {} channels, file declares {c}", method.channels())));
    }
    let expected = count.checked_mul((5 + c) * 4).and_then(|n| n.checked_add(pos));
    if expected != Some(bytes.len()) {
        return Err(Error::Format("feature file length does not match its header".into()));
    }
    let floats: Vec<f32> = bytes[pos..].chunks_exact(4).map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]])).collect();
    let features = floats
        .chunks_exact(5 + c)
        .map(|rec| Feature {
            keypoint: Keypoint { x: rec[0], y: rec[1], response: rec[2], scale: rec[3], orientation: rec[4] },
            descriptor: rec[5..].to_vec(),
        })
        .collect::<Vec<_>>();
    if features.windows(2).any(|p| p[0].keypoint.response < p[1].keypoint.response) {
        return Err(Error::Format("feature records are not sorted by descending response".into()));
    }
    FeatureSet::new(method, h, w, features).map_err(|e| Error::Format(e.to_string()))
}

impl FeatureSet {
    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        write_sfv(self, &mut f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        read_sfv(&mut std::io::BufReader::new(std::fs::File::open(path)?))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> FeatureSet {
        let feats = (0..5)
            .map(|i| Feature {
                keypoint: Keypoint { x: 1.5 + i as f32, y: 2.25, response: 1.0 / (i + 1) as f32, scale: 2.0, orientation: 0.1 * i as f32 },
                descriptor: (0..64).map(|k| ((k * 7 + i) % 256) as f32 / 255.0).collect(),
            })
            .collect();
        FeatureSet::new(Method::Binary, 20, 30, feats).unwrap()
    }

    #[test]
    fn round_trip_is_exact() {
        let fs = sample();
        let mut buf = Vec::new();
        write_sfv(&fs, &mut buf).unwrap();
        assert_eq!(&buf[..4], b"SFV1");
        assert_eq!(&buf[4..12], b"binary\0\0");
        assert_eq!(buf.len(), 28 + 5 * 69 * 4);
        let back = read_sfv(&mut buf.as_slice()).unwrap();
        assert_eq!(back, fs);
        let mut again = Vec::new();
        write_sfv(&back, &mut again).unwrap();
        assert_eq!(buf, again);
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let mut buf = Vec::new();
        write_sfv(&sample(), &mut buf).unwrap();
        assert!(read_sfv(&mut &buf[..buf.len() - 1]).is_err());
        let mut bad = buf.clone();
        bad[4..12].copy_from_slice(b"orb\0\0\0\0\0");
        assert!(read_sfv(&mut bad.as_slice()).is_err());
        let mut bad = buf;
        bad[0] = b'X';
        assert!(read_sfv(&mut bad.as_slice()).is_err());
    }
}
