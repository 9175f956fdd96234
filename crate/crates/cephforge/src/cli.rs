//! Command-line interface.
//!
//! Exit codes: 0 on success, 1 for invalid arguments or inputs, 2 for
//! failures while producing output. Diagnostics go to standard error; data
//! goes to files or standard output.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand, ValueEnum};

use cephforge_core::cephgeom::{
    normalize_quadrant, pack_dual, patch_envelope, rebin_to_vd, split_quadrants, Quadrant,
    QuadrantPatch, VirtualDetectorSpec,
};
use cephforge_core::dataset::{quantize_integral, SplitPlan, SrConfig};
use cephforge_core::film::{fit_sigmoid, ModifiedSigmoidParams, SigmoidParams, C4};
use cephforge_core::metrics::{line_profile, psnr_from_rmse, rmse, sdr};
use cephforge_core::pipeline::{
    render_type1, type1_integral, FilmCurve, ProjectionMode, Type1Config, Type2Config, MIP_WINDOW,
};
use cephforge_core::projector::{
    to_zero_degree_frame, AttenuationModel, ConeGeometry, DetectorGrid, RayCaster, ViewAngle,
    CBCT_D0, WEHMER_D0, WEHMER_D1,
};
use cephforge_core::volume::{resample_rigid, Interpolation};
use cephforge_core::{EnhanceParams, Raster, Volume};

use crate::cache::ProjectionCache;
use crate::dataset::{make_sr_dataset, produce_type2_dataset, Type2Input, Type2Options};
use crate::error::{Error, Result};
use crate::io;
use crate::meta::KeyValues;

/// Environment variable consulted when `--threads` is absent.
pub const THREADS_ENV: &str = "CEPHFORGE_THREADS";

#[derive(Debug, Parser)]
#[command(
    name = "cephforge",
    version,
    about = "Synthesize cephalograms from CBCT volumes and prepare training data"
)]
pub struct Cli {
    /// Worker threads [default: number of logical cores]
    #[arg(long, global = true, env = THREADS_ENV)]
    pub threads: Option<usize>,
    /// key=value file supplying values for flags not given on the command line
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

/// `WIDTHxHEIGHT` pixel dims.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Dims(pub usize, pub usize);

impl FromStr for Dims {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (w, h) = s
            .split_once(['x', 'X'])
            .ok_or_else(|| format!("expected WIDTHxHEIGHT, got {s:?}"))?;
        let parse = |t: &str| {
            t.trim()
                .parse::<usize>()
                .map_err(|_| format!("invalid size {t:?}"))
        };
        Ok(Dims(parse(w)?, parse(h)?))
    }
}

/// `d0=…,d1=…` distances in mm.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeomArg {
    pub d0: f64,
    pub d1: f64,
}

impl FromStr for GeomArg {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (mut d0, mut d1) = (None, None);
        for part in s.split(',') {
            let (k, v) = part
                .split_once('=')
                .ok_or_else(|| format!("expected d0=..,d1=.., got {s:?}"))?;
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| format!("invalid distance {v:?}"))?;
            match k.trim() {
                "d0" => d0 = Some(v),
                "d1" => d1 = Some(v),
                other => return Err(format!("unknown geometry key {other:?}")),
            }
        }
        match (d0, d1) {
            (Some(d0), Some(d1)) => Ok(GeomArg { d0, d1 }),
            _ => Err("both d0 and d1 are required".into()),
        }
    }
}

/// Comma-separated pair of numbers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pair(pub [f64; 2]);

impl FromStr for Pair {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let (a, b) = s
            .split_once(',')
            .ok_or_else(|| format!("expected A,B, got {s:?}"))?;
        let p = |t: &str| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| format!("invalid number {t:?}"))
        };
        Ok(Pair([p(a)?, p(b)?]))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Projection {
    Orthogonal,
    Wehmer,
    Mip,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ProjectMode {
    Orthogonal,
    Perspective,
    Wehmer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Film {
    Modified,
    Original,
    Linear,
}

#[derive(Debug, Clone, Args)]
pub struct EnhanceArgs {
    /// Skip skeleton enhancement
    #[arg(long)]
    pub no_enhance: bool,
    /// Bone threshold (HU)
    #[arg(long, default_value_t = 1000.0, allow_negative_numbers = true)]
    pub bone_threshold: f64,
    /// Air threshold (HU)
    #[arg(long, default_value_t = -500.0, allow_negative_numbers = true)]
    pub air_threshold: f64,
    /// Bone weight
    #[arg(long, default_value_t = 1.3)]
    pub bone_weight: f64,
}

impl EnhanceArgs {
    fn params(&self) -> Option<EnhanceParams> {
        (!self.no_enhance).then_some(EnhanceParams {
            bone_threshold: self.bone_threshold,
            air_threshold: self.air_threshold,
            bone_weight: self.bone_weight,
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct FilmArgs {
    /// Film curve
    #[arg(long, value_enum, default_value_t = Film::Modified)]
    pub film: Film,
    /// Read curve parameters from a key=value file instead of the flags below
    #[arg(long, value_name = "FILE")]
    pub film_params: Option<PathBuf>,
    /// Base gray level
    #[arg(long, default_value_t = 40.0)]
    pub c1: f64,
    /// Saturation distance below 255
    #[arg(long, default_value_t = 5.0)]
    pub c2: f64,
    /// Curve midpoint (integral)
    #[arg(long, default_value_t = 2.6)]
    pub t: f64,
    /// Slope
    #[arg(long, default_value_t = 1.5)]
    pub s: f64,
    /// Soft-tissue base gray level
    #[arg(long, default_value_t = 18.0)]
    pub c3: f64,
    /// Soft-tissue gain [default: derived from continuity at tau2]
    #[arg(long)]
    pub c4: Option<f64>,
    /// Air cut-off (integral)
    #[arg(long, default_value_t = 0.1)]
    pub tau1: f64,
    /// Soft-tissue upper bound (integral)
    #[arg(long, default_value_t = 1.2)]
    pub tau2: f64,
    /// Lower end of the linear window
    #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
    pub linear_lo: f64,
    /// Upper end of the linear window
    #[arg(long, default_value_t = 6.0, allow_negative_numbers = true)]
    pub linear_hi: f64,
}

impl FilmArgs {
    fn modified(&self) -> Result<ModifiedSigmoidParams> {
        if let Some(p) = &self.film_params {
            return io::load_film_params(p);
        }
        Ok(ModifiedSigmoidParams {
            base: SigmoidParams {
                c1: self.c1,
                c2: self.c2,
                t: self.t,
                s: self.s,
            },
            c3: self.c3,
            c4: self.c4.map_or(C4::Derived, C4::Fixed),
            tau1: self.tau1,
            tau2: self.tau2,
        })
    }

    fn curve(&self) -> Result<FilmCurve> {
        Ok(match self.film {
            Film::Modified => FilmCurve::Modified(self.modified()?),
            Film::Original => FilmCurve::Original(self.modified()?.base),
            Film::Linear => FilmCurve::Linear {
                lo: self.linear_lo,
                hi: self.linear_hi,
            },
        })
    }
}

#[derive(Debug, Clone, Args)]
pub struct RayArgs {
    /// Ray samples per mm
    #[arg(long, default_value_t = 3.0)]
    pub samples_per_mm: f64,
    /// Attenuation of water (1/mm)
    #[arg(long, default_value_t = 0.0203)]
    pub mu_water: f64,
}

impl RayArgs {
    fn attenuation(&self) -> AttenuationModel {
        AttenuationModel {
            mu_water: self.mu_water,
        }
    }

    fn caster(&self) -> RayCaster {
        RayCaster {
            samples_per_mm: self.samples_per_mm,
            ..RayCaster::with_attenuation(self.attenuation())
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct VdArgs {
    /// Virtual detector size
    #[arg(long, value_name = "WxH", default_value = "512x512")]
    pub vd_size: Dims,
    /// Virtual detector pixel pitch (mm)
    #[arg(long, default_value_t = 0.5)]
    pub vd_pitch: f64,
}

impl VdArgs {
    fn spec(&self) -> VirtualDetectorSpec {
        VirtualDetectorSpec {
            nu: self.vd_size.0,
            nv: self.vd_size.1,
            su: self.vd_pitch,
            sv: self.vd_pitch,
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct DetectorArgs {
    /// Detector size
    #[arg(long, value_name = "WxH", default_value = "512x512")]
    pub detector: Dims,
    /// Detector pixel pitch (mm)
    #[arg(long, default_value_t = 0.73)]
    pub pitch: f64,
}

impl DetectorArgs {
    fn grid(&self) -> Result<DetectorGrid> {
        Ok(DetectorGrid::new(
            self.detector.0,
            self.detector.1,
            self.pitch,
            self.pitch,
        )?)
    }
}

const DEFAULT_GEOM: &str = "d0=650,d1=950";

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Synthesize a cephalogram: enhance, project, apply the film curve
    SynthType1 {
        /// Volume sidecar (.meta) or payload (.raw)
        #[arg(long)]
        volume: PathBuf,
        /// Output PNG (a .meta sidecar is written next to it)
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = Projection::Orthogonal)]
        projection: Projection,
        /// Samples averaged per ray for --projection mip
        #[arg(long, default_value_t = 50)]
        mip_k: usize,
        /// Rigid alignment applied first (key=value: rotation, translation_mm)
        #[arg(long, value_name = "FILE")]
        transform: Option<PathBuf>,
        /// Also write the integral image (.raw)
        #[arg(long, value_name = "FILE")]
        integral: Option<PathBuf>,
        #[command(flatten)]
        enhance: EnhanceArgs,
        #[command(flatten)]
        film: FilmArgs,
        #[command(flatten)]
        ray: RayArgs,
        #[command(flatten)]
        vd: VdArgs,
    },
    /// Ray-cast a volume onto a detector
    Project {
        #[arg(long)]
        volume: PathBuf,
        /// Output integral image (.raw)
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = ProjectMode::Perspective)]
        mode: ProjectMode,
        /// Source-to-isocenter and source-to-detector distances (mm)
        #[arg(long, default_value = DEFAULT_GEOM)]
        geom: GeomArg,
        /// View angle in degrees (0 or 180)
        #[arg(long, default_value_t = 0.0)]
        angle: f64,
        /// Keep the 180° view in its native orientation instead of flipping it
        #[arg(long)]
        native: bool,
        #[command(flatten)]
        detector: DetectorArgs,
        #[command(flatten)]
        ray: RayArgs,
    },
    /// Mean of the K largest HU samples along orthogonal rays
    Mip {
        #[arg(long)]
        volume: PathBuf,
        /// Output HU image (.raw)
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50)]
        k: usize,
        /// Also write a PNG windowed from -1000 to 3000 HU
        #[arg(long, value_name = "FILE")]
        png: Option<PathBuf>,
        #[command(flatten)]
        vd: VdArgs,
        /// Ray samples per mm
        #[arg(long, default_value_t = 3.0)]
        samples_per_mm: f64,
    },
    /// Rebin a (0°-oriented) cone-beam projection onto the virtual detector
    Rebin {
        /// Projection (.raw); its sidecar supplies the detector grid
        #[arg(long)]
        proj: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = DEFAULT_GEOM)]
        geom: GeomArg,
        #[command(flatten)]
        vd: VdArgs,
    },
    /// Print the VD footprint of a square patch swept over a depth range
    Envelope {
        #[arg(long, default_value_t = 0.0)]
        y0: f64,
        #[arg(long, default_value_t = 0.0)]
        z0: f64,
        #[arg(long)]
        edge: f64,
        #[arg(long, allow_negative_numbers = true)]
        x_min: f64,
        #[arg(long, allow_negative_numbers = true)]
        x_max: f64,
        /// Source-to-isocenter distance (mm)
        #[arg(long, default_value_t = CBCT_D0)]
        d0: f64,
    },
    /// Split an image into quadrant patches Q1..Q4
    Quadrants {
        /// 8-bit PNG
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        out_dir: PathBuf,
        /// Keep native orientation (skip normalization flips)
        #[arg(long)]
        raw: bool,
    },
    /// Pack normalized 0° and 180° patches into an RGB patch
    PackDual {
        #[arg(long)]
        p0: PathBuf,
        #[arg(long)]
        p180: PathBuf,
        #[arg(long)]
        quadrant: Quadrant,
        #[arg(long)]
        out: PathBuf,
    },
    /// Produce dual-projection/target patch pairs from volumes
    MakeType2Dataset {
        /// Volume sidecar; the file stem is the patient id (repeatable)
        #[arg(long = "volume", required = true)]
        volumes: Vec<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value = DEFAULT_GEOM)]
        geom: GeomArg,
        #[command(flatten)]
        detector: DetectorArgs,
        #[command(flatten)]
        vd: VdArgs,
        /// Integral mapped to gray 0
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        quant_lo: f64,
        /// Integral mapped to gray 255
        #[arg(long, default_value_t = 6.0)]
        quant_hi: f64,
        /// Relative train:val:test sizes
        #[arg(long, default_value = "1600:40:200")]
        split: String,
        /// Cache simulated projections here
        #[arg(long, value_name = "DIR")]
        cache_dir: Option<PathBuf>,
        #[command(flatten)]
        enhance: EnhanceArgs,
        #[command(flatten)]
        film: FilmArgs,
        #[command(flatten)]
        ray: RayArgs,
    },
    /// Cut HR/LR/ILR super-resolution patch triples from cephalograms
    MakeSrDataset {
        /// 8-bit PNG (repeatable)
        #[arg(long = "image", required = true)]
        images: Vec<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 42)]
        per_image: usize,
        #[arg(long, default_value_t = 320)]
        hr_patch: usize,
        #[arg(long, default_value_t = 5)]
        factor: usize,
        /// Maximum patch position jitter (px)
        #[arg(long, default_value_t = 16)]
        jitter: i64,
    },
    /// Map an integral image linearly onto 8 bits
    Quantize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        lo: f64,
        #[arg(long, default_value_t = 6.0, allow_negative_numbers = true)]
        hi: f64,
    },
    /// RMSE and PSNR between two images
    RmsePsnr {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long, default_value_t = 255.0)]
        peak: f64,
    },
    /// Bilinear intensity profile along a segment (mm)
    Profile {
        #[arg(long)]
        image: PathBuf,
        /// Start point y,z (mm)
        #[arg(long, allow_hyphen_values = true)]
        from: Pair,
        /// End point y,z (mm)
        #[arg(long, allow_hyphen_values = true)]
        to: Pair,
        #[arg(long, default_value_t = 100)]
        samples: usize,
        /// Pixel spacing sy,sz for images without a sidecar
        #[arg(long)]
        pixel_spacing: Option<Pair>,
    },
    /// Successful detection rates of landmarks
    Sdr {
        #[arg(long)]
        detected: PathBuf,
        #[arg(long)]
        reference: PathBuf,
        /// Radii (mm), comma-separated
        #[arg(long, value_delimiter = ',', default_value = "2,2.5,3,4")]
        radii: Vec<f64>,
        /// Landmark files hold pixel indices at this spacing sy,sz
        #[arg(long)]
        pixel_spacing: Option<Pair>,
        /// Tab-separated output
        #[arg(long)]
        tsv: bool,
    },
    /// Least-squares fit of the sigmoid film curve to (integral, gray) samples
    FitSigmoid {
        #[arg(long)]
        samples: PathBuf,
        /// Write the fitted parameters as key=value
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn geometry(g: GeomArg, detector: DetectorGrid, angle: ViewAngle) -> Result<ConeGeometry> {
    Ok(ConeGeometry::new(g.d0, g.d1, detector, angle)?)
}

fn load_aligned(volume: &Path, transform: Option<&Path>) -> Result<Volume> {
    let v = io::load_volume(volume)?;
    match transform {
        Some(t) => Ok(resample_rigid(
            &v,
            &io::load_transform(t)?,
            Interpolation::Trilinear,
        )?),
        None => Ok(v),
    }
}

fn parse_split(s: &str) -> Result<SplitPlan> {
    let parts: Vec<f64> = s
        .split(':')
        .map(|p| p.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Usage(format!("--split expects TRAIN:VAL:TEST, got {s:?}")))?;
    match parts[..] {
        [train, val, test] => Ok(SplitPlan { train, val, test }),
        _ => Err(Error::Usage(format!(
            "--split expects TRAIN:VAL:TEST, got {s:?}"
        ))),
    }
}

fn patient_id(path: &Path) -> Result<String> {
    path.file_stem()
        .and_then(|s| s.to_str())
        .map(str::to_string)
        .ok_or_else(|| {
            Error::Usage(format!(
                "cannot derive a patient id from {}",
                path.display()
            ))
        })
}

fn fmt_num(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{x:.6}")
    }
}

fn execute(cmd: Command, out: &mut dyn Write) -> Result<()> {
    let stdout_err = |e: std::io::Error| Error::write(Path::new("<stdout>"), e);
    match cmd {
        Command::SynthType1 {
            volume,
            out: path,
            projection,
            mip_k,
            transform,
            integral,
            enhance,
            film,
            ray,
            vd,
        } => {
            let cfg = Type1Config {
                enhance: enhance.params(),
                projection: match projection {
                    Projection::Orthogonal => ProjectionMode::Orthogonal,
                    Projection::Wehmer => ProjectionMode::Perspective {
                        d0: WEHMER_D0,
                        d1: WEHMER_D1,
                    },
                    Projection::Mip => ProjectionMode::Mip { k: mip_k },
                },
                film: film.curve()?,
                output: vd.spec(),
                attenuation: ray.attenuation(),
                samples_per_mm: ray.samples_per_mm,
            };
            cfg.validate()?;
            let v = load_aligned(&volume, transform.as_deref())?;
            let g = type1_integral(&v, &cfg)?;
            let ceph = render_type1(&g, &cfg)?;
            if g.suspicious_pixels() > 0 && !matches!(projection, Projection::Mip) {
                log::warn!(
                    "{} integral pixels are negative or implausibly large",
                    g.suspicious_pixels()
                );
            }
            if let Some(p) = integral {
                io::save_integral(&p, &g)?;
            }
            io::save_cephalogram(&path, &ceph)
        }
        Command::Project {
            volume,
            out: path,
            mode,
            geom,
            angle,
            native,
            detector,
            ray,
        } => {
            let det = detector.grid()?;
            let angle = ViewAngle::from_degrees(angle)?;
            let caster = ray.caster();
            let img = match mode {
                ProjectMode::Orthogonal => {
                    let v = io::load_volume(&volume)?;
                    caster.orthogonal(&v, &det)?
                }
                ProjectMode::Perspective | ProjectMode::Wehmer => {
                    let g = match mode {
                        ProjectMode::Wehmer => geometry(
                            GeomArg {
                                d0: WEHMER_D0,
                                d1: WEHMER_D1,
                            },
                            det,
                            angle,
                        )?,
                        _ => geometry(geom, det, angle)?,
                    };
                    let v = io::load_volume(&volume)?;
                    let p = caster.perspective(&v, &g)?;
                    if native {
                        p
                    } else {
                        to_zero_degree_frame(&p, angle)
                    }
                }
            };
            io::save_integral(&path, &img)
        }
        Command::Mip {
            volume,
            out: path,
            k,
            png,
            vd,
            samples_per_mm,
        } => {
            let spec = vd.spec();
            let det = DetectorGrid::new(spec.nu, spec.nv, spec.su, spec.sv)?;
            let caster = RayCaster {
                samples_per_mm,
                ..RayCaster::default()
            };
            let v = io::load_volume(&volume)?;
            let img = caster.mip(&v, k, &det)?;
            io::save_integral(&path, &img)?;
            if let Some(p) = png {
                io::save_cephalogram(&p, &quantize_integral(&img, MIP_WINDOW[0], MIP_WINDOW[1])?)?;
            }
            Ok(())
        }
        Command::Rebin {
            proj,
            out: path,
            geom,
            vd,
        } => {
            let p = io::load_integral(&proj)?;
            let (w, h) = p.dims();
            let det = DetectorGrid::new(w, h, p.grid.spacing[0], p.grid.spacing[1])?;
            let g = geometry(geom, det, ViewAngle::Deg0)?;
            io::save_integral(&path, &rebin_to_vd(&p, &g, &vd.spec())?)
        }
        Command::Envelope {
            y0,
            z0,
            edge,
            x_min,
            x_max,
            d0,
        } => {
            let e = patch_envelope(y0, z0, edge, x_min, x_max, d0)?;
            let mut text = format!(
                "# vertices={} area_mm2={}\ny_mm\tz_mm\n",
                e.vertices.len(),
                fmt_num(e.area())
            );
            for v in &e.vertices {
                text.push_str(&format!("{}\t{}\n", fmt_num(v[0]), fmt_num(v[1])));
            }
            out.write_all(text.as_bytes()).map_err(stdout_err)
        }
        Command::Quadrants {
            image,
            out_dir,
            raw,
        } => {
            let img = io::load_gray_png(&image)?;
            let quads = split_quadrants(&img)?;
            let patches = if raw {
                quads.to_vec()
            } else {
                quads
                    .iter()
                    .map(normalize_quadrant)
                    .collect::<std::result::Result<Vec<_>, _>>()?
            };
            for q in &patches {
                io::save_gray_png(&out_dir.join(format!("{}.png", q.quadrant)), &q.data)?;
            }
            Ok(())
        }
        Command::PackDual {
            p0,
            p180,
            quadrant,
            out: path,
        } => {
            let patch = |p: &Path| -> Result<QuadrantPatch<u8>> {
                Ok(QuadrantPatch {
                    data: io::load_gray_png(p)?,
                    quadrant,
                    normalized: true,
                })
            };
            let rgb = pack_dual(&patch(&p0)?, &patch(&p180)?)?;
            io::save_rgb_png(&path, &rgb)
        }
        Command::MakeType2Dataset {
            volumes,
            out_dir,
            geom,
            detector,
            vd,
            quant_lo,
            quant_hi,
            split,
            cache_dir,
            enhance,
            film,
            ray,
        } => {
            let config = Type2Config {
                geometry: geometry(geom, detector.grid()?, ViewAngle::Deg0)?,
                vd: vd.spec(),
                quant_range: [quant_lo, quant_hi],
                target: Type1Config {
                    enhance: enhance.params(),
                    projection: ProjectionMode::Orthogonal,
                    film: film.curve()?,
                    output: vd.spec(),
                    attenuation: ray.attenuation(),
                    samples_per_mm: ray.samples_per_mm,
                },
            };
            if !(quant_hi > quant_lo) {
                return Err(Error::Usage(format!(
                    "--quant-hi {quant_hi} must exceed --quant-lo {quant_lo}"
                )));
            }
            let inputs = volumes
                .iter()
                .map(|v| {
                    Ok(Type2Input {
                        patient: patient_id(v)?,
                        volume: v.clone(),
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let opts = Type2Options {
                config,
                plan: parse_split(&split)?,
                cache: cache_dir.map(ProjectionCache::new).transpose()?,
            };
            let manifest = produce_type2_dataset(&inputs, &opts, &out_dir)?;
            writeln!(out, "{}", manifest.display()).map_err(stdout_err)
        }
        Command::MakeSrDataset {
            images,
            out_dir,
            seed,
            per_image,
            hr_patch,
            factor,
            jitter,
        } => {
            let cfg = SrConfig {
                hr_patch,
                factor,
                per_image,
                jitter,
                seed,
            };
            cfg.validate()?;
            let imgs = images
                .iter()
                .map(|p| io::load_gray_png(p))
                .collect::<Result<Vec<_>>>()?;
            let (manifest, records) = make_sr_dataset(&imgs, &cfg, &out_dir)?;
            log::info!("{} records", records.len());
            writeln!(out, "{}", manifest.display()).map_err(stdout_err)
        }
        Command::Quantize {
            input,
            out: path,
            lo,
            hi,
        } => {
            let g = io::load_integral(&input)?;
            io::save_cephalogram(&path, &quantize_integral(&g, lo, hi)?)
        }
        Command::RmsePsnr { a, b, peak } => {
            if !(peak > 0.0) {
                return Err(Error::Usage(format!("--peak {peak} must be positive")));
            }
            let ia = io::load_any_raster(&a, Some([1.0, 1.0]))?;
            let ib = io::load_any_raster(&b, Some([1.0, 1.0]))?;
            let e = rmse(&ia.image, &ib.image)?;
            writeln!(
                out,
                "rmse\t{}\npsnr_db\t{}",
                fmt_num(e),
                fmt_num(psnr_from_rmse(e, peak))
            )
            .map_err(stdout_err)
        }
        Command::Profile {
            image,
            from,
            to,
            samples,
            pixel_spacing,
        } => {
            let img: Raster<f64> = io::load_any_raster(&image, pixel_spacing.map(|p| p.0))?;
            let prof = line_profile(&img, from.0, to.0, samples)?;
            let mut text = String::from("index\ty_mm\tz_mm\tvalue\n");
            for (i, v) in prof.iter().enumerate() {
                let t = i as f64 / (samples - 1) as f64;
                let y = from.0[0] + t * (to.0[0] - from.0[0]);
                let z = from.0[1] + t * (to.0[1] - from.0[1]);
                text.push_str(&format!(
                    "{i}\t{}\t{}\t{}\n",
                    fmt_num(y),
                    fmt_num(z),
                    fmt_num(*v)
                ));
            }
            out.write_all(text.as_bytes()).map_err(stdout_err)
        }
        Command::Sdr {
            detected,
            reference,
            radii,
            pixel_spacing,
            tsv,
        } => {
            let spacing = pixel_spacing.map(|p| p.0);
            let d = io::load_landmarks(&detected, spacing)?;
            let r = io::load_landmarks(&reference, spacing)?;
            let table = sdr(&d, &r, &radii)?;
            let mut text = String::new();
            if tsv {
                text.push_str("radius_mm\tsdr_percent\n");
                for (r, s) in table.radii.iter().zip(&table.rates) {
                    text.push_str(&format!("{r}\t{s:.2}\n"));
                }
            } else {
                text.push_str(&format!("{:>10}  {:>8}\n", "radius mm", "SDR %"));
                for (r, s) in table.radii.iter().zip(&table.rates) {
                    text.push_str(&format!("{r:>10.1}  {s:>8.2}\n"));
                }
            }
            out.write_all(text.as_bytes()).map_err(stdout_err)
        }
        Command::FitSigmoid { samples, out: path } => {
            let s = io::load_fit_samples(&samples)?;
            let fit = fit_sigmoid(&s)?;
            if !fit.converged {
                log::warn!(
                    "fit did not converge after {} iterations; reporting the best estimate",
                    fit.iterations
                );
            }
            let p = fit.params;
            writeln!(
                out,
                "c1\t{}\nc2\t{}\nt\t{}\ns\t{}\nrms_residual\t{}\niterations\t{}\nconverged\t{}",
                fmt_num(p.c1),
                fmt_num(p.c2),
                fmt_num(p.t),
                fmt_num(p.s),
                fmt_num(fit.rms_residual),
                fit.iterations,
                fit.converged
            )
            .map_err(stdout_err)?;
            if let Some(path) = path {
                io::save_sigmoid_params(&path, &p)?;
            }
            Ok(())
        }
    }
}

/// Append `--key=value` for config entries whose flag is not already on the
/// command line. `true`/`false` values toggle boolean flags.
fn apply_config(argv: Vec<String>) -> Result<Vec<String>> {
    let mut path = None;
    for (i, a) in argv.iter().enumerate() {
        if let Some(p) = a.strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
        } else if a == "--config" {
            path = argv.get(i + 1).map(PathBuf::from);
        }
    }
    let Some(path) = path else { return Ok(argv) };
    let kv = KeyValues::read(&path)?;
    let present = |key: &str| {
        let flag = format!("--{key}");
        argv.iter()
            .any(|a| *a == flag || a.starts_with(&format!("{flag}=")))
    };
    let mut extra = Vec::new();
    for (key, value) in kv.iter() {
        if key == "config" {
            return Err(Error::format(
                &path,
                "config files cannot include other config files",
            ));
        }
        if present(key) {
            continue;
        }
        match value {
            "true" => extra.push(format!("--{key}")),
            "false" => {}
            _ => extra.push(format!("--{key}={value}")),
        }
    }
    let mut argv = argv;
    argv.extend(extra);
    Ok(argv)
}

/// Parse `argv` (including the program name) and run one subcommand,
/// writing data output to `out`. Returns the process exit code.
pub fn run_with(argv: Vec<String>, out: &mut dyn Write) -> i32 {
    let argv = match apply_config(argv) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    let cli = match Cli::try_parse_from(&argv) {
        Ok(c) => c,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            if code == 0 {
                let _ = write!(out, "{e}");
            } else {
                let _ = e.print();
            }
            return code;
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads.unwrap_or(0))
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            let e = Error::Threads(e.to_string());
            eprintln!("error: {e}");
            return e.exit_code();
        }
    };
    // Data output is buffered so the command can run on the pool's threads.
    let mut buf = Vec::new();
    let result = pool.install(|| execute(cli.command, &mut buf));
    let _ = out.write_all(&buf);
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(argv: Vec<String>) -> i32 {
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    let code = run_with(argv, &mut lock);
    let _ = lock.flush();
    code
}

#[cfg(test)]
mod tests {
    use super::*;
    use cephforge_core::projector::CBCT_D1;

    #[test]
    fn value_parsers() {
        assert_eq!("512x256".parse::<Dims>().unwrap(), Dims(512, 256));
        assert!("512".parse::<Dims>().is_err());
        assert_eq!(
            "d0=650,d1=950".parse::<GeomArg>().unwrap(),
            GeomArg {
                d0: 650.0,
                d1: 950.0
            }
        );
        assert!("d0=650".parse::<GeomArg>().is_err());
        assert!("d0=650,d2=1".parse::<GeomArg>().is_err());
        assert_eq!("-1.5, 2".parse::<Pair>().unwrap(), Pair([-1.5, 2.0]));
        assert_eq!(parse_split("1600:40:200").unwrap(), SplitPlan::default());
        assert!(parse_split("1:2").is_err());
    }

    #[test]
    fn cli_definition_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }

    #[test]
    fn reversed_geometry_is_a_validation_error() {
        let det = DetectorGrid::new(4, 4, 1.0, 1.0).unwrap();
        let e = geometry(
            GeomArg {
                d0: 950.0,
                d1: 650.0,
            },
            det,
            ViewAngle::Deg0,
        )
        .unwrap_err();
        assert_eq!(e.exit_code(), 1);
        assert!(e.to_string().contains("geometry"));
    }

    #[test]
    fn cbct_defaults_match_presets() {
        let g: GeomArg = DEFAULT_GEOM.parse().unwrap();
        assert_eq!((g.d0, g.d1), (CBCT_D0, CBCT_D1));
    }
}
