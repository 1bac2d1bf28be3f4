//! Orchestration of one experiment: everything is computed in memory first
//! and written at the end, so a failure leaves no partial output.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use super::config::Experiment;
use crate::dictionary::{Dictionary, SparseSpectrum};
use crate::error::{Error, Result};
use crate::io;
use crate::metrics::{self, MdvCurve};
use crate::rng::{self, derive_seed};
use crate::scene::{self, Snapshot};
use crate::stap::{self, Method, Pipeline, SoiSpec, StapFilter};
use crate::C64;

const STREAM_CUBE: u64 = 10;
const STREAM_SWEEP: u64 = 11;
const STREAM_SOLVER: u64 = 12;

/// Seeds derived from the master seed of a config.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RunSeeds {
    pub cube: u64,
    pub sweep: u64,
    pub solver: u64,
}

impl RunSeeds {
    pub fn new(master: u64) -> Self {
        Self {
            cube: derive_seed(master, STREAM_CUBE, 0),
            sweep: derive_seed(master, STREAM_SWEEP, 0),
            solver: derive_seed(master, STREAM_SOLVER, 0),
        }
    }

    /// Solver restarts for the filter of `cell`.
    pub fn solver_for(&self, cell: usize) -> u64 {
        derive_seed(self.solver, STREAM_SOLVER, cell as u64)
    }
}

/// Files of a run, relative to the output directory, with their contents.
#[derive(Debug, Default, Clone, PartialEq)]
pub struct Artifacts {
    pub files: BTreeMap<PathBuf, String>,
}

impl Artifacts {
    pub fn insert(&mut self, path: impl Into<PathBuf>, contents: String) {
        self.files.insert(path.into(), contents);
    }

    /// Writes every file atomically under `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        for (rel, text) in &self.files {
            let path = dir.join(rel);
            if let Some(parent) = path.parent() {
                std::fs::create_dir_all(parent)?;
            }
            io::write_atomic(&path, text.as_bytes())?;
        }
        Ok(())
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Library state of a built experiment.
pub struct Session<'a> {
    pub exp: &'a Experiment,
    pub dict: Dictionary,
    pub seeds: RunSeeds,
}

impl<'a> Session<'a> {
    pub fn new(exp: &'a Experiment) -> Result<Self> {
        Ok(Self {
            exp,
            dict: Dictionary::build(&exp.radar, &exp.grid)?,
            seeds: RunSeeds::new(exp.config.seed),
        })
    }

    pub fn pipeline(&self) -> Pipeline<'_> {
        Pipeline {
            cfg: &self.exp.radar,
            scene: &self.exp.scene,
            dict: &self.dict,
            settings: &self.exp.settings,
        }
    }

    pub fn cube(&self) -> Result<Vec<Snapshot>> {
        scene::synthesize_cube(&self.exp.radar, &self.exp.scene, self.exp.num_range_cells, self.seeds.cube)
    }

    /// Test cell: the target's range cell, else the reference cell.
    pub fn test_cell(&self) -> usize {
        self.exp
            .scene
            .target
            .as_ref()
            .map_or(self.exp.scene.reference_cell, |t| t.range_cell)
    }

    /// SOI of the configured target.
    pub fn target_soi(&self) -> Result<SoiSpec> {
        let scene = &self.exp.scene;
        let t = scene
            .target
            .as_ref()
            .ok_or_else(|| Error::Config("scene.target: required for filtering".into()))?;
        let f_sp = scene
            .target_spatial_freq(&self.exp.radar)
            .ok_or_else(|| Error::InvalidScene("target geometry is undefined".into()))?;
        Ok(self.pipeline().soi(f_sp, t.normalized_doppler))
    }

    /// Sparse spectrum of `snapshot`; `converged` is false when the
    /// iteration budget ran out.
    pub fn estimate(&self, method: Method, snapshot: &Snapshot) -> Result<(SparseSpectrum, bool)> {
        let mut rng = rng::seeded(self.seeds.solver_for(snapshot.range_cell));
        self.pipeline().estimate(method, &snapshot.data, &mut rng)
    }

    pub fn design(&self, method: Method, snapshot: &Snapshot, soi: SoiSpec) -> Result<stap::Design> {
        let mut rng = rng::seeded(self.seeds.solver_for(snapshot.range_cell));
        self.pipeline().design(method, snapshot, soi, self.seeds.cube, &mut rng)
    }

    pub fn sweep_axis(&self) -> Result<Vec<f64>> {
        let m = &self.exp.config.metrics;
        match &m.mdv_dopplers {
            Some(axis) => Ok(axis.clone()),
            None => Ok(metrics::doppler_grid(
                metrics::notch_doppler(&self.exp.radar, &self.exp.scene)?,
                m.mdv_points,
            )),
        }
    }

    pub fn sweep(&self, methods: &[Method], trials: usize) -> Result<Vec<MdvCurve>> {
        metrics::mdv_sweep(&self.pipeline(), methods, &self.sweep_axis()?, trials, self.seeds.sweep)
    }

    /// Fourier spectrum of a snapshot in amplitude units (`Ψ^H x / NM`).
    pub fn input_spectrum(&self, snapshot: &Snapshot) -> Result<SparseSpectrum> {
        let scale = self.exp.radar.dof() as f64;
        let amplitudes: Vec<C64> = self
            .dict
            .fourier_spectrum(&snapshot.data)?
            .into_iter()
            .map(|a| a / scale)
            .collect();
        let support = (0..amplitudes.len()).filter(|&i| amplitudes[i] != C64::new(0.0, 0.0)).collect();
        Ok(SparseSpectrum {
            amplitudes,
            support,
            ..SparseSpectrum::zero(0)
        })
    }

    /// Output power map over the coarse map grid with the SOI swept over
    /// every cell. Sparse methods reuse `spectrum`, LSMI its training set.
    pub fn adapted_map(&self, method: Method, snapshot: &Snapshot, spectrum: Option<&SparseSpectrum>) -> Result<Vec<f64>> {
        let p = self.pipeline();
        let (guard_s, guard_t) = self.exp.settings.guard;
        let sigma2 = self.exp.scene.noise_power;
        let cfg = &self.exp.radar;
        let map = &self.exp.map_grid;
        let x = &snapshot.data;
        let with_guard = |soi: SoiSpec| soi.with_guard(guard_s, guard_t);
        match method {
            Method::D3srFocuss | Method::D3srL1 => {
                let spectrum = spectrum.ok_or_else(|| Error::Config(format!("{method} needs its estimated spectrum")))?;
                metrics::adapted_spectrum(x, map, sigma2, |soi| p.d3sr_from_spectrum(method, spectrum, with_guard(soi)))
            }
            Method::Lsmi => {
                let training = p.lsmi_training(snapshot.range_cell, self.seeds.cube)?;
                let loading = self.exp.settings.loading;
                metrics::adapted_spectrum(x, map, sigma2, |soi| stap::lsmi_filter(&training, cfg, soi, loading))
            }
            Method::D3ls => {
                let (na, np) = self.exp.settings.d3ls_subaperture;
                metrics::adapted_spectrum(x, map, sigma2, |soi| stap::d3ls_filter(snapshot, cfg, soi, na, np))
            }
            Method::None => metrics::adapted_spectrum(x, map, sigma2, |soi| Ok(stap::conventional_filter(cfg, soi))),
        }
    }

    /// Linear output power of every cell filtered by a filter designed from
    /// that cell, all steered at the target SOI.
    pub fn range_powers(&self, method: Method, cube: &[Snapshot]) -> Result<Vec<f64>> {
        let soi = self.target_soi()?;
        let filters = self
            .pipeline()
            .range_filters(method, cube, soi, self.seeds.cube, |cell| rng::seeded(self.seeds.solver_for(cell)))?;
        metrics::adaptive_range_powers(cube, &filters)
    }

    /// [`Session::range_powers`] in dB.
    pub fn range_profile(&self, method: Method, cube: &[Snapshot]) -> Result<Vec<f64>> {
        Ok(metrics::powers_to_db(&self.range_powers(method, cube)?, self.exp.scene.noise_power))
    }
}

fn fmt_f64(v: f64) -> String {
    format!("{v}")
}

pub fn mdv_table(curves: &[MdvCurve]) -> String {
    let mut columns = vec!["doppler".to_string()];
    for c in curves {
        columns.push(format!("{}_scr_db", c.method));
        columns.push(format!("{}_failures", c.method));
        columns.push(format!("{}_unconverged", c.method));
    }
    let axis = curves.first().map_or(&[][..], |c| &c.doppler_axis[..]);
    let rows: Vec<Vec<String>> = axis
        .iter()
        .enumerate()
        .map(|(k, &f)| {
            let mut row = vec![fmt_f64(f)];
            for c in curves {
                row.push(fmt_f64(c.mean_scr_db[k]));
                row.push(c.failures[k].to_string());
                row.push(c.unconverged[k].to_string());
            }
            row
        })
        .collect();
    let cols: Vec<&str> = columns.iter().map(String::as_str).collect();
    io::format_table(&cols, &rows)
}

pub fn range_table(profile_db: &[f64]) -> String {
    let rows: Vec<Vec<String>> = profile_db
        .iter()
        .enumerate()
        .map(|(c, &p)| vec![c.to_string(), fmt_f64(p)])
        .collect();
    io::format_table(&["range_cell", "power_db"], &rows)
}

#[derive(Serialize)]
struct Manifest<'a> {
    crate_version: &'a str,
    config_sha256: String,
    seed: u64,
    seeds: RunSeeds,
    methods: Vec<String>,
    unconverged_estimates: Vec<String>,
    artifacts: BTreeMap<String, String>,
}

/// Every artifact of a full run.
pub fn run_all(exp: &Experiment, trials: usize) -> Result<Artifacts> {
    let session = Session::new(exp)?;
    let config_text = exp.config.to_toml()?;
    let cube = session.cube()?;
    let cell = session.test_cell();
    let snapshot = cube
        .get(cell)
        .ok_or_else(|| Error::Config(format!("test cell {cell} is outside the cube")))?;
    let soi = session.target_soi()?;
    let sigma2 = exp.scene.noise_power;

    let mut art = Artifacts::default();
    art.insert(
        "input_spectrum.txt",
        io::format_spectrum(&exp.grid, "fourier", &session.input_spectrum(snapshot)?, sigma2)?,
    );
    let mut unconverged = Vec::new();
    for &method in &exp.config.methods {
        let dir = PathBuf::from(method.name());
        let design = session.design(method, snapshot, soi)?;
        if !design.converged {
            unconverged.push(method.name().to_string());
        }
        if let Some(spec) = &design.spectrum {
            art.insert(dir.join("estimated_spectrum.txt"), io::format_spectrum(&exp.grid, method.name(), spec, sigma2)?);
        }
        art.insert(dir.join("filter.txt"), io::format_filter(&design.filter)?);
        let map = session.adapted_map(method, snapshot, design.spectrum.as_ref())?;
        art.insert(dir.join("adapted_spectrum.txt"), io::format_map(&exp.map_grid, method, &map)?);
        art.insert(dir.join("range_profile.csv"), range_table(&session.range_profile(method, &cube)?));
    }
    let curves = session.sweep(&exp.config.methods, trials)?;
    for c in &curves {
        art.insert(PathBuf::from(c.method.name()).join("mdv.csv"), mdv_table(std::slice::from_ref(c)));
    }
    art.insert("mdv.csv", mdv_table(&curves));

    let artifacts = art
        .files
        .iter()
        .map(|(p, t)| (p.to_string_lossy().into_owned(), sha256_hex(t.as_bytes())))
        .collect();
    let manifest = Manifest {
        crate_version: env!("CARGO_PKG_VERSION"),
        config_sha256: sha256_hex(config_text.as_bytes()),
        seed: exp.config.seed,
        seeds: session.seeds,
        methods: exp.config.methods.iter().map(|m| m.name().to_string()).collect(),
        unconverged_estimates: unconverged,
        artifacts,
    };
    art.insert(
        "manifest.toml",
        toml::to_string(&manifest).map_err(|e| Error::Config(format!("cannot serialize manifest: {e}")))?,
    );
    art.insert("config.toml", config_text);
    Ok(art)
}

/// Filter of one method for `cell` of `cube` at the target SOI.
pub fn design_filter(session: &Session, method: Method, cube: &[Snapshot], cell: usize) -> Result<StapFilter> {
    let snapshot = cube
        .get(cell)
        .ok_or_else(|| Error::OutOfRange(format!("cell {cell} is outside a cube of {} cells", cube.len())))?;
    Ok(session.design(method, snapshot, session.target_soi()?)?.filter)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cli::config::ExperimentConfig;

    fn small() -> Experiment {
        let text = r#"
methods = ["d3sr-focuss", "d3ls", "lsmi", "none"]
seed = 5

[radar]
num_channels = 6
num_pulses = 6

[scene]
sector_deg = [20.0, 60.0]
num_scatters = 61
num_range_cells = 12
target = { range_cell = 4, azimuth_deg = 15.0, normalized_doppler = 0.3 }

[grid]
rho_s = 3
rho_t = 3

[filter]
d3ls_subaperture = [4, 4]
lsmi_training = 8

[metrics]
mdv_points = 3
trials = 2
"#;
        ExperimentConfig::parse(text).unwrap().build().unwrap()
    }

    #[test]
    fn run_produces_every_artifact() {
        let exp = small();
        let art = run_all(&exp, 2).unwrap();
        for m in ["d3sr-focuss", "d3ls", "lsmi", "none"] {
            for f in ["filter.txt", "adapted_spectrum.txt", "range_profile.csv", "mdv.csv"] {
                assert!(art.files.contains_key(&PathBuf::from(m).join(f)), "{m}/{f}");
            }
        }
        assert!(art.files.contains_key(&PathBuf::from("d3sr-focuss/estimated_spectrum.txt")));
        assert!(!art.files.contains_key(&PathBuf::from("lsmi/estimated_spectrum.txt")));
        for f in ["input_spectrum.txt", "mdv.csv", "manifest.toml", "config.toml"] {
            assert!(art.files.contains_key(&PathBuf::from(f)), "{f}");
        }
        // the stored config reproduces the run
        let again = ExperimentConfig::parse(&art.files[&PathBuf::from("config.toml")]).unwrap();
        assert_eq!(again, exp.config);
        assert_eq!(run_all(&again.build().unwrap(), 2).unwrap(), art);
    }

    #[test]
    fn seeds_are_distinct_streams() {
        let s = RunSeeds::new(1);
        assert_ne!(s.cube, s.sweep);
        assert_ne!(s.solver_for(0), s.solver_for(1));
        assert_eq!(RunSeeds::new(1), s);
    }

    #[test]
    fn tables_have_headers() {
        let t = range_table(&[1.0, 2.5]);
        assert!(t.starts_with("range_cell,power_db\n0,1\n1,2.5"));
    }
}
