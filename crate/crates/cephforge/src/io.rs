//! Readers and writers for volumes, rasters, PNG images, landmark files,
//! film parameters, fit samples and rigid transforms.
//!
//! Rasters are stored bottom row first (row `v` grows with `z`); PNG files
//! are written top row first, so rows are flipped on the way in and out.

use std::path::{Path, PathBuf};

use cephforge_core::cephgeom::DualRgbPatch;
use cephforge_core::film::{ModifiedSigmoidParams, SigmoidParams, C4};
use cephforge_core::metrics::LandmarkSet;
use cephforge_core::{
    Cephalogram8, Image2, IntegralImage, PlaneGrid, Raster, RigidTransform, Volume,
};
use image::{ExtendedColorType, ImageFormat};

use crate::error::{Error, Result};
use crate::meta::{sidecar_path, Dtype, KeyValues};

fn read_bytes(path: &Path) -> Result<Vec<u8>> {
    std::fs::read(path).map_err(|e| Error::read(path, e))
}

fn write_bytes(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::write(dir, e))?;
    }
    std::fs::write(path, bytes).map_err(|e| Error::write(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    write_bytes(path, text.as_bytes())
}

/// `(sidecar, payload)` for a path naming either file of a pair.
pub fn raw_pair(path: &Path) -> (PathBuf, PathBuf) {
    if path.extension().is_some_and(|e| e == "meta") {
        (path.to_path_buf(), path.with_extension("raw"))
    } else {
        (sidecar_path(path), path.to_path_buf())
    }
}

fn check_dtype(meta: &KeyValues, want: Dtype) -> Result<()> {
    let got: Dtype = meta
        .require("dtype")?
        .parse()
        .map_err(|e: String| Error::format(meta.source(), e))?;
    if got != want {
        return Err(Error::format(
            meta.source(),
            format!(
                "dtype {} where {} was expected",
                got.as_str(),
                want.as_str()
            ),
        ));
    }
    Ok(())
}

fn check_payload_len(path: &Path, bytes: &[u8], count: usize, dtype: Dtype) -> Result<()> {
    if bytes.len() != count * dtype.bytes() {
        return Err(Error::format(
            path,
            format!(
                "payload holds {} bytes but the sidecar declares {count} {} scalars ({} bytes)",
                bytes.len(),
                dtype.as_str(),
                count * dtype.bytes()
            ),
        ));
    }
    Ok(())
}

/// Load a volume from its `.meta` sidecar (or `.raw` payload) path.
/// Values below −1024 HU are clamped.
pub fn load_volume(path: &Path) -> Result<Volume> {
    let (meta_path, raw_path) = raw_pair(path);
    let meta = KeyValues::read(&meta_path)?;
    check_dtype(&meta, Dtype::Int16Le)?;
    let dims: [usize; 3] = meta.list("dims")?;
    let spacing: [f64; 3] = meta.list("spacing_mm")?;
    let origin: [f64; 3] = if meta.get("origin_mm").is_some() {
        meta.list("origin_mm")?
    } else {
        Volume::centered_origin(dims, spacing)
    };
    let bytes = read_bytes(&raw_path)?;
    check_payload_len(&raw_path, &bytes, dims.iter().product(), Dtype::Int16Le)?;
    let data = bytes
        .chunks_exact(2)
        .map(|b| i16::from_le_bytes([b[0], b[1]]) as f64)
        .collect();
    Ok(Volume::new(dims, spacing, origin, data)?)
}

/// Write a volume as `int16le`, rounding half away from zero and
/// saturating to the 16-bit range.
pub fn save_volume(path: &Path, v: &Volume) -> Result<()> {
    let (meta_path, raw_path) = raw_pair(path);
    let mut meta = KeyValues::new();
    meta.set_list("dims", &v.dims())
        .set_list("spacing_mm", &v.spacing())
        .set_list("origin_mm", &v.origin())
        .set("dtype", Dtype::Int16Le.as_str());
    let bytes: Vec<u8> = v
        .data()
        .iter()
        .flat_map(|&x| (x.round().clamp(i16::MIN as f64, i16::MAX as f64) as i16).to_le_bytes())
        .collect();
    write_bytes(&raw_path, &bytes)?;
    meta.write(&meta_path)
}

fn raster_meta(dims: (usize, usize), grid: &PlaneGrid, dtype: Dtype) -> KeyValues {
    let mut meta = KeyValues::new();
    meta.set_list("dims", &[dims.0, dims.1])
        .set_list("spacing_mm", &grid.spacing)
        .set_list("plane_origin_mm", &grid.origin)
        .set("dtype", dtype.as_str());
    meta
}

fn read_raster_meta(meta: &KeyValues) -> Result<((usize, usize), PlaneGrid)> {
    let [w, h]: [usize; 2] = meta.list("dims")?;
    let spacing: [f64; 2] = meta.list("spacing_mm")?;
    let grid = if meta.get("plane_origin_mm").is_some() {
        PlaneGrid {
            spacing,
            origin: meta.list("plane_origin_mm")?,
        }
    } else {
        PlaneGrid::centered(w, h, spacing)
    };
    Ok(((w, h), grid))
}

/// Write an integral image as `float32le` plus sidecar.
pub fn save_integral(path: &Path, g: &IntegralImage) -> Result<()> {
    let (meta_path, raw_path) = raw_pair(path);
    let bytes: Vec<u8> = g
        .image
        .data()
        .iter()
        .flat_map(|&x| (x as f32).to_le_bytes())
        .collect();
    write_bytes(&raw_path, &bytes)?;
    raster_meta(g.dims(), &g.grid, Dtype::Float32Le).write(&meta_path)
}

pub fn load_integral(path: &Path) -> Result<IntegralImage> {
    let (meta_path, raw_path) = raw_pair(path);
    let meta = KeyValues::read(&meta_path)?;
    check_dtype(&meta, Dtype::Float32Le)?;
    let ((w, h), grid) = read_raster_meta(&meta)?;
    let bytes = read_bytes(&raw_path)?;
    check_payload_len(&raw_path, &bytes, w * h, Dtype::Float32Le)?;
    let data = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]) as f64)
        .collect();
    Ok(Raster::new(Image2::new(w, h, data)?, grid)?)
}

fn flip_rows<T: Copy>(data: &[T], row_len: usize) -> Vec<T> {
    data.chunks_exact(row_len)
        .rev()
        .flatten()
        .copied()
        .collect()
}

fn save_png(path: &Path, bytes: &[u8], w: usize, h: usize, color: ExtendedColorType) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::write(dir, e))?;
    }
    image::save_buffer_with_format(path, bytes, w as u32, h as u32, color, ImageFormat::Png)
        .map_err(|source| Error::Encode {
            path: path.to_path_buf(),
            source,
        })
}

fn open_image(path: &Path) -> Result<image::DynamicImage> {
    if !path.exists() {
        return Err(Error::read(path, std::io::ErrorKind::NotFound.into()));
    }
    image::open(path).map_err(|source| Error::Decode {
        path: path.to_path_buf(),
        source,
    })
}

/// Write an 8-bit grayscale PNG (display orientation).
pub fn save_gray_png(path: &Path, img: &Image2<u8>) -> Result<()> {
    let (w, h) = img.dims();
    save_png(path, &flip_rows(img.data(), w), w, h, ExtendedColorType::L8)
}

/// Read a PNG as 8-bit grayscale; colour images are converted to luma.
pub fn load_gray_png(path: &Path) -> Result<Image2<u8>> {
    let img = open_image(path)?.to_luma8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    Ok(Image2::new(w, h, flip_rows(img.as_raw(), w))?)
}

pub fn save_rgb_png(path: &Path, patch: &DualRgbPatch) -> Result<()> {
    let (w, h) = patch.dims();
    save_png(
        path,
        &flip_rows(&patch.interleaved(), 3 * w),
        w,
        h,
        ExtendedColorType::Rgb8,
    )
}

/// Read an RGB PNG into its three channels (storage orientation).
pub fn load_rgb_png(path: &Path) -> Result<[Image2<u8>; 3]> {
    let img = open_image(path)?.to_rgb8();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let data = flip_rows(img.as_raw(), 3 * w);
    let channel = |c: usize| Image2::new(w, h, data.iter().skip(c).step_by(3).copied().collect());
    Ok([channel(0)?, channel(1)?, channel(2)?])
}

/// Write a cephalogram as PNG plus a `.meta` sidecar with its grid.
pub fn save_cephalogram(path: &Path, c: &Cephalogram8) -> Result<()> {
    save_gray_png(path, &c.image)?;
    raster_meta(c.dims(), &c.grid, Dtype::Uint8).write(&sidecar_path(path))
}

/// Read a cephalogram PNG. The grid comes from the sidecar when present,
/// otherwise from `fallback_spacing` centred on the isocenter.
pub fn load_cephalogram(path: &Path, fallback_spacing: Option<[f64; 2]>) -> Result<Cephalogram8> {
    let image = load_gray_png(path)?;
    let meta_path = sidecar_path(path);
    let grid = if meta_path.exists() {
        let meta = KeyValues::read(&meta_path)?;
        let (dims, grid) = read_raster_meta(&meta)?;
        if dims != image.dims() {
            return Err(Error::format(
                &meta_path,
                format!(
                    "sidecar dims {dims:?} do not match the image {:?}",
                    image.dims()
                ),
            ));
        }
        grid
    } else {
        let spacing = fallback_spacing.ok_or_else(|| {
            Error::Usage(format!(
                "{} has no sidecar; pass a pixel spacing",
                path.display()
            ))
        })?;
        PlaneGrid::centered(image.width(), image.height(), spacing)
    };
    Ok(Raster::new(image, grid)?)
}

/// Read an image as floating point: a `.raw`/`.meta` integral image or an
/// 8-bit PNG (with optional sidecar).
pub fn load_any_raster(path: &Path, fallback_spacing: Option<[f64; 2]>) -> Result<Raster<f64>> {
    match path.extension().and_then(|e| e.to_str()) {
        Some("raw") | Some("meta") => load_integral(path),
        _ => {
            let c = load_cephalogram(path, fallback_spacing)?;
            Ok(Raster::new(c.image.map(f64::from), c.grid)?)
        }
    }
}

fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
}

fn parse_f64(path: &Path, line: usize, s: &str) -> Result<f64> {
    s.trim()
        .parse()
        .ok()
        .filter(|x: &f64| x.is_finite())
        .ok_or_else(|| Error::format(path, format!("line {line}: invalid number {s:?}")))
}

/// Read a `label<TAB>y<TAB>z` landmark file. Coordinates are mm unless
/// `pixel_spacing` is given, in which case they are pixel indices scaled by
/// it.
pub fn load_landmarks(path: &Path, pixel_spacing: Option<[f64; 2]>) -> Result<LandmarkSet> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::read(path, e))?;
    let scale = pixel_spacing.unwrap_or([1.0, 1.0]);
    let mut labels = Vec::new();
    let mut points = Vec::new();
    for (n, line) in data_lines(&text) {
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::format(
                path,
                format!("line {n}: expected label<TAB>y<TAB>z"),
            ));
        }
        labels.push(fields[0].trim().to_string());
        points.push([
            parse_f64(path, n, fields[1])? * scale[0],
            parse_f64(path, n, fields[2])? * scale[1],
        ]);
    }
    LandmarkSet::new(labels, points).map_err(|e| Error::format(path, e.to_string()))
}

pub fn save_landmarks(path: &Path, set: &LandmarkSet) -> Result<()> {
    let text: String = set
        .labels()
        .iter()
        .zip(set.points())
        .map(|(l, p)| format!("{l}\t{}\t{}\n", p[0], p[1]))
        .collect();
    write_text(path, &text)
}

/// Read `(integral, gray)` pairs, one whitespace-separated pair per line.
pub fn load_fit_samples(path: &Path) -> Result<Vec<(f64, f64)>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::read(path, e))?;
    data_lines(&text)
        .map(|(n, line)| {
            let f: Vec<&str> = line.split_whitespace().collect();
            if f.len() != 2 {
                return Err(Error::format(
                    path,
                    format!("line {n}: expected <integral> <gray>"),
                ));
            }
            Ok((parse_f64(path, n, f[0])?, parse_f64(path, n, f[1])?))
        })
        .collect()
}

fn apply_sigmoid_keys(kv: &KeyValues, p: &mut SigmoidParams) -> Result<()> {
    for (key, slot) in [
        ("c1", &mut p.c1),
        ("c2", &mut p.c2),
        ("t", &mut p.t),
        ("s", &mut p.s),
    ] {
        if let Some(x) = kv.parse_value(key)? {
            *slot = x;
        }
    }
    Ok(())
}

/// Film parameters from a `key=value` file; missing keys keep the
/// defaults. `c4` may be a number or `derived`.
pub fn load_film_params(path: &Path) -> Result<ModifiedSigmoidParams> {
    let kv = KeyValues::read(path)?;
    let mut p = ModifiedSigmoidParams::default();
    apply_sigmoid_keys(&kv, &mut p.base)?;
    for (key, slot) in [
        ("c3", &mut p.c3),
        ("tau1", &mut p.tau1),
        ("tau2", &mut p.tau2),
    ] {
        if let Some(x) = kv.parse_value(key)? {
            *slot = x;
        }
    }
    match kv.get("c4") {
        None | Some("derived") => {}
        Some(_) => p.c4 = C4::Fixed(kv.required_value("c4")?),
    }
    p.validate()
        .map_err(|e| Error::format(path, e.to_string()))?;
    Ok(p)
}

pub fn save_sigmoid_params(path: &Path, p: &SigmoidParams) -> Result<()> {
    let mut kv = KeyValues::new();
    kv.set("c1", p.c1)
        .set("c2", p.c2)
        .set("t", p.t)
        .set("s", p.s);
    kv.write(path)
}

/// Rigid transform file: `rotation=` nine row-major entries and
/// `translation_mm=` three entries (either may be omitted).
pub fn load_transform(path: &Path) -> Result<RigidTransform> {
    let kv = KeyValues::read(path)?;
    let rotation = if kv.get("rotation").is_some() {
        let r: [f64; 9] = kv.list("rotation")?;
        [[r[0], r[1], r[2]], [r[3], r[4], r[5]], [r[6], r[7], r[8]]]
    } else {
        RigidTransform::identity().rotation_matrix()
    };
    let translation = if kv.get("translation_mm").is_some() {
        kv.list("translation_mm")?
    } else {
        [0.0; 3]
    };
    RigidTransform::new(rotation, translation).map_err(|e| Error::format(path, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn row_flip_is_involution() {
        let d = [1, 2, 3, 4, 5, 6];
        assert_eq!(flip_rows(&d, 2), vec![5, 6, 3, 4, 1, 2]);
        assert_eq!(flip_rows(&flip_rows(&d, 3), 3), d.to_vec());
    }

    #[test]
    fn raw_pair_accepts_either_name() {
        let (m, r) = raw_pair(Path::new("d/p.raw"));
        assert_eq!(
            (m.as_path(), r.as_path()),
            (Path::new("d/p.meta"), Path::new("d/p.raw"))
        );
        let (m, r) = raw_pair(Path::new("d/p.meta"));
        assert_eq!(
            (m.as_path(), r.as_path()),
            (Path::new("d/p.meta"), Path::new("d/p.raw"))
        );
    }
}
