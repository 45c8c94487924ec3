//! Binary dataset file plus `key=value` manifest sidecar.
//!
//! Layout (all integers little-endian `u32`):
//!
//! ```text
//! magic "CMPLDSET" | version | K | count[0..K] | raw_length | spatial_dim | num_videos
//! then per video: class_id | kind (0 spatial, 1 temporal) | raw_length * spatial_dim f32
//! ```

use std::fs;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use super::{ClassKind, DatasetSpec, Video};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"CMPLDSET";
const VERSION: u32 = 1;

/// Contents of the manifest sidecar.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub spec: DatasetSpec,
    pub kinds: Vec<ClassKind>,
}

pub fn manifest_path(data_path: &Path) -> PathBuf {
    let mut name = data_path.file_name().unwrap_or_default().to_os_string();
    name.push(".manifest");
    data_path.with_file_name(name)
}

fn put_u32(w: &mut impl Write, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Format(format!("{v} does not fit in u32")))?;
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn get_u32(r: &mut impl Read) -> Result<usize> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b)?;
    Ok(u32::from_le_bytes(b) as usize)
}

/// Writes the dataset file and its manifest (`<path>.manifest`).
pub fn write_dataset(path: &Path, spec: &DatasetSpec, videos: &[Video]) -> Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(MAGIC)?;
    put_u32(&mut w, VERSION as usize)?;
    put_u32(&mut w, spec.num_classes)?;
    let mut counts = vec![0usize; spec.num_classes];
    for v in videos {
        if v.class_id >= spec.num_classes {
            return Err(Error::precondition(format!("video {} has class {}", v.id, v.class_id)));
        }
        counts[v.class_id] += 1;
    }
    for c in counts {
        put_u32(&mut w, c)?;
    }
    put_u32(&mut w, spec.raw_length)?;
    put_u32(&mut w, spec.spatial_dim)?;
    put_u32(&mut w, videos.len())?;
    for v in videos {
        if v.raw_length() != spec.raw_length || v.spatial_dim() != spec.spatial_dim {
            return Err(Error::precondition(format!("video {} shape differs from spec", v.id)));
        }
        put_u32(&mut w, v.class_id)?;
        put_u32(&mut w, usize::from(v.kind == ClassKind::Temporal))?;
        for x in v.frames() {
            w.write_all(&x.to_le_bytes())?;
        }
    }
    w.flush()?;

    let kinds: String = spec.kinds().into_iter().map(ClassKind::code).collect();
    let manifest = format!(
        "format=cmpl-dataset\nversion={VERSION}\nnum_classes={}\nspatial_classes={}\n\
         temporal_classes={}\nvideos_per_class={}\nnoise_sigma={}\nseed={}\nraw_length={}\n\
         spatial_dim={}\nmodulation_depth={}\nbase_frequency={}\nfrequency_step={}\n\
         template_separation={}\nkinds={kinds}\n",
        spec.num_classes,
        spec.spatial_class_count,
        spec.temporal_class_count,
        spec.videos_per_class,
        spec.noise_sigma,
        spec.seed,
        spec.raw_length,
        spec.spatial_dim,
        spec.modulation_depth,
        spec.base_frequency,
        spec.frequency_step,
        spec.template_separation,
    );
    fs::write(manifest_path(path), manifest)?;
    Ok(())
}

/// Reads the videos back from a dataset file.
pub fn read_dataset(path: &Path) -> Result<Vec<Video>> {
    let mut r = BufReader::new(fs::File::open(path)?);
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)?;
    if &magic != MAGIC {
        return Err(Error::Format(format!("{} is not a dataset file", path.display())));
    }
    let version = get_u32(&mut r)?;
    if version != VERSION as usize {
        return Err(Error::Format(format!("unsupported dataset version {version}")));
    }
    let k = get_u32(&mut r)?;
    let counts = (0..k).map(|_| get_u32(&mut r)).collect::<Result<Vec<_>>>()?;
    let raw_length = get_u32(&mut r)?;
    let spatial_dim = get_u32(&mut r)?;
    let n = get_u32(&mut r)?;
    if counts.iter().sum::<usize>() != n {
        return Err(Error::Format("class counts do not sum to the video count".into()));
    }
    let mut buf = vec![0u8; raw_length * spatial_dim * 4];
    let mut videos = Vec::with_capacity(n);
    for id in 0..n {
        let class_id = get_u32(&mut r)?;
        let kind = match get_u32(&mut r)? {
            0 => ClassKind::Spatial,
            1 => ClassKind::Temporal,
            other => return Err(Error::Format(format!("video {id}: bad kind tag {other}"))),
        };
        if class_id >= k {
            return Err(Error::Format(format!("video {id}: class {class_id} out of range")));
        }
        r.read_exact(&mut buf)?;
        let frames = buf
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
            .collect();
        videos.push(Video::new(id, class_id, kind, raw_length, spatial_dim, frames)?);
    }
    Ok(videos)
}

/// Parses the manifest sidecar of a dataset file.
pub fn read_manifest(data_path: &Path) -> Result<DatasetManifest> {
    let text = fs::read_to_string(manifest_path(data_path))?;
    let mut spec = DatasetSpec::default();
    let mut kinds = Vec::new();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty()) {
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Format(format!("manifest line without '=': {line}")))?;
        let bad = || Error::Format(format!("bad manifest value for {key}: {value}"));
        match key {
            "format" | "version" => {}
            "num_classes" => spec.num_classes = value.parse().map_err(|_| bad())?,
            "spatial_classes" => spec.spatial_class_count = value.parse().map_err(|_| bad())?,
            "temporal_classes" => spec.temporal_class_count = value.parse().map_err(|_| bad())?,
            "videos_per_class" => spec.videos_per_class = value.parse().map_err(|_| bad())?,
            "seed" => spec.seed = value.parse().map_err(|_| bad())?,
            "raw_length" => spec.raw_length = value.parse().map_err(|_| bad())?,
            "spatial_dim" => spec.spatial_dim = value.parse().map_err(|_| bad())?,
            "noise_sigma" => spec.noise_sigma = value.parse().map_err(|_| bad())?,
            "modulation_depth" => spec.modulation_depth = value.parse().map_err(|_| bad())?,
            "base_frequency" => spec.base_frequency = value.parse().map_err(|_| bad())?,
            "frequency_step" => spec.frequency_step = value.parse().map_err(|_| bad())?,
            "template_separation" => {
                spec.template_separation = value.parse().map_err(|_| bad())?
            }
            "kinds" => {
                kinds = value
                    .chars()
                    .map(|c| ClassKind::from_code(c).ok_or_else(bad))
                    .collect::<Result<_>>()?
            }
            other => return Err(Error::Format(format!("unknown manifest key {other}"))),
        }
    }
    Ok(DatasetManifest { spec, kinds })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthdata::generate_dataset;

    #[test]
    fn dataset_file_round_trips_exactly() {
        let spec = DatasetSpec {
            num_classes: 3,
            spatial_class_count: 2,
            temporal_class_count: 1,
            videos_per_class: 4,
            noise_sigma: 0.3,
            seed: 11,
            ..DatasetSpec::default()
        };
        let videos = generate_dataset(&spec).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.bin");
        write_dataset(&path, &spec, &videos).unwrap();
        assert_eq!(read_dataset(&path).unwrap(), videos);
        let manifest = read_manifest(&path).unwrap();
        assert_eq!(manifest.spec, spec);
        assert_eq!(
            manifest.kinds,
            vec![ClassKind::Spatial, ClassKind::Spatial, ClassKind::Temporal]
        );
    }

    #[test]
    fn rejects_foreign_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("junk.bin");
        fs::write(&path, b"not a dataset at all").unwrap();
        assert!(matches!(read_dataset(&path), Err(Error::Format(_))));
    }
}
