//! Whole-pipeline configuration: every section in one sectioned text file.

use std::path::PathBuf;

use crate::config::{fmt_list, parse_bool, parse_list, parse_value, render_section, unknown_key, Section};
use crate::error::{FdmError, Result};
use crate::eval::EvalConfig;
use crate::geom::ActionBounds;
use crate::model::{CollectConfig, FdmConfig, TrainConfig};
use crate::mppi::MppiConfig;
use crate::sampling::{SamplerConfig, SamplerMode};
use crate::terrain::{SimParams, TerrainKind, TerrainSize};

/// Simulator dynamics plus the terrain and episode layout used for collection.
#[derive(Debug, Clone, PartialEq)]
pub struct SimSection {
    pub params: SimParams,
    pub kinds: Vec<TerrainKind>,
    pub terrain: TerrainSize,
    pub terrains_per_kind: usize,
    pub terrain_seed: u64,
    pub segments: usize,
    pub starts_per_episode: usize,
    pub envs: usize,
}

impl Default for SimSection {
    fn default() -> Self {
        let c = CollectConfig::default();
        Self {
            params: c.sim,
            kinds: c.kinds,
            terrain: c.terrain_size,
            terrains_per_kind: c.terrains_per_kind,
            terrain_seed: c.terrain_seed,
            segments: c.segments,
            starts_per_episode: c.starts_per_episode,
            envs: c.envs,
        }
    }
}

fn parse_kinds(value: &str) -> Result<Vec<TerrainKind>> {
    value.split(',').map(|k| k.trim().parse()).collect()
}

fn kinds_str(k: &[TerrainKind]) -> String {
    k.iter().map(|k| k.as_str()).collect::<Vec<_>>().join(",")
}

impl Section for SimSection {
    fn name(&self) -> &'static str {
        "sim"
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let s = "sim";
        let p = &mut self.params;
        match key {
            "traction_flat" => p.traction_flat = parse_value(s, key, value)?,
            "traction_rough" => p.traction_rough = parse_value(s, key, value)?,
            "slip_std" => p.slip_std = parse_value(s, key, value)?,
            "max_step_height" => p.max_step_height = parse_value(s, key, value)?,
            "max_slope" => p.max_slope = parse_value(s, key, value)?,
            "footprint_radius" => p.footprint_radius = parse_value(s, key, value)?,
            "dt_sim" => p.dt_sim = parse_value(s, key, value)?,
            "traction_jitter" => p.traction_jitter = parse_value(s, key, value)?,
            "rough_threshold" => p.rough_threshold = parse_value(s, key, value)?,
            "seed" => p.seed = parse_value(s, key, value)?,
            "kind" | "kinds" => self.kinds = parse_kinds(value)?,
            "terrain_width" => self.terrain.width = parse_value(s, key, value)?,
            "terrain_height" => self.terrain.height = parse_value(s, key, value)?,
            "cell_size" => self.terrain.cell_size = parse_value(s, key, value)?,
            "terrains_per_kind" => self.terrains_per_kind = parse_value(s, key, value)?,
            "terrain_seed" => self.terrain_seed = parse_value(s, key, value)?,
            "segments" => self.segments = parse_value(s, key, value)?,
            "starts_per_episode" => self.starts_per_episode = parse_value(s, key, value)?,
            "envs" => self.envs = parse_value(s, key, value)?,
            _ => return Err(unknown_key(s, key)),
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        let p = &self.params;
        vec![
            ("traction_flat", p.traction_flat.to_string()),
            ("traction_rough", p.traction_rough.to_string()),
            ("slip_std", p.slip_std.to_string()),
            ("max_step_height", p.max_step_height.to_string()),
            ("max_slope", p.max_slope.to_string()),
            ("footprint_radius", p.footprint_radius.to_string()),
            ("dt_sim", p.dt_sim.to_string()),
            ("traction_jitter", p.traction_jitter.to_string()),
            ("rough_threshold", p.rough_threshold.to_string()),
            ("seed", p.seed.to_string()),
            ("kinds", kinds_str(&self.kinds)),
            ("terrain_width", self.terrain.width.to_string()),
            ("terrain_height", self.terrain.height.to_string()),
            ("cell_size", self.terrain.cell_size.to_string()),
            ("terrains_per_kind", self.terrains_per_kind.to_string()),
            ("terrain_seed", self.terrain_seed.to_string()),
            ("segments", self.segments.to_string()),
            ("starts_per_episode", self.starts_per_episode.to_string()),
            ("envs", self.envs.to_string()),
        ]
    }

    fn check(&self) -> Result<()> {
        self.params.validate().map_err(|e| FdmError::Config(format!("sim: {e}")))?;
        if self.kinds.is_empty() {
            return Err(FdmError::Config("sim.kinds must not be empty".into()));
        }
        if self.terrain.width < 10 || self.terrain.height < 10 || !(self.terrain.cell_size > 0.0) {
            return Err(FdmError::Config("sim terrain too small".into()));
        }
        if self.terrains_per_kind == 0 || self.segments == 0 || self.starts_per_episode == 0 || self.envs == 0 {
            return Err(FdmError::Config("sim counts must be positive".into()));
        }
        Ok(())
    }
}

impl Section for SamplerConfig {
    fn name(&self) -> &'static str {
        "sampler"
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let s = "sampler";
        match key {
            "beta_min" => self.beta_min = parse_value(s, key, value)?,
            "sigma_max" => self.sigma_max = parse_value(s, key, value)?,
            "mode" => self.mode = value.trim().parse::<SamplerMode>()?,
            "planner_fraction" => self.planner_fraction = parse_value(s, key, value)?,
            "planner_onset" => self.planner_onset = parse_value(s, key, value)?,
            "bounds_min" => {
                let v: Vec<f64> = parse_list(s, key, value, 3)?;
                self.bounds.min = [v[0], v[1], v[2]];
            }
            "bounds_max" => {
                let v: Vec<f64> = parse_list(s, key, value, 3)?;
                self.bounds.max = [v[0], v[1], v[2]];
            }
            _ => return Err(unknown_key(s, key)),
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("beta_min", self.beta_min.to_string()),
            ("sigma_max", self.sigma_max.to_string()),
            ("mode", self.mode.as_str().to_string()),
            ("planner_fraction", self.planner_fraction.to_string()),
            ("planner_onset", self.planner_onset.to_string()),
            ("bounds_min", fmt_list(&self.bounds.min)),
            ("bounds_max", fmt_list(&self.bounds.max)),
        ]
    }

    fn check(&self) -> Result<()> {
        self.validate().map_err(|e| FdmError::Config(format!("sampler: {e}")))
    }
}

/// Dynamics of the shifted domain used for fine-tuning.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftSection {
    pub traction_flat: f64,
    pub traction_rough: f64,
    pub slip_std: f64,
    /// Samples of each domain used for fine-tuning.
    pub train_samples: usize,
}

impl Default for ShiftSection {
    fn default() -> Self {
        let s = SimParams::shifted();
        Self {
            traction_flat: s.traction_flat,
            traction_rough: s.traction_rough,
            slip_std: s.slip_std,
            train_samples: 5000,
        }
    }
}

impl ShiftSection {
    pub fn apply(&self, base: &SimParams) -> SimParams {
        SimParams {
            traction_flat: self.traction_flat,
            traction_rough: self.traction_rough,
            slip_std: self.slip_std,
            ..*base
        }
    }
}

impl Section for ShiftSection {
    fn name(&self) -> &'static str {
        "shift"
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let s = "shift";
        match key {
            "traction_flat" => self.traction_flat = parse_value(s, key, value)?,
            "traction_rough" => self.traction_rough = parse_value(s, key, value)?,
            "slip_std" => self.slip_std = parse_value(s, key, value)?,
            "train_samples" => self.train_samples = parse_value(s, key, value)?,
            _ => return Err(unknown_key(s, key)),
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("traction_flat", self.traction_flat.to_string()),
            ("traction_rough", self.traction_rough.to_string()),
            ("slip_std", self.slip_std.to_string()),
            ("train_samples", self.train_samples.to_string()),
        ]
    }

    fn check(&self) -> Result<()> {
        self.apply(&SimParams::default()).validate().map_err(|e| FdmError::Config(format!("shift: {e}")))?;
        if self.train_samples == 0 {
            return Err(FdmError::Config("shift.train_samples must be positive".into()));
        }
        Ok(())
    }
}

/// Master seed and output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSection {
    pub seed: u64,
    pub out: PathBuf,
    pub threads: usize,
    /// Planner settings used inside data collection.
    pub collect_population: usize,
    pub collect_iterations: usize,
    pub use_planner: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            seed: 0,
            out: PathBuf::from("out"),
            threads: 0,
            collect_population: 128,
            collect_iterations: 2,
            use_planner: true,
        }
    }
}

impl Section for RunSection {
    fn name(&self) -> &'static str {
        "run"
    }

    fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let s = "run";
        match key {
            "seed" => self.seed = parse_value(s, key, value)?,
            "out" => self.out = PathBuf::from(value.trim()),
            "threads" => self.threads = parse_value(s, key, value)?,
            "collect_population" => self.collect_population = parse_value(s, key, value)?,
            "collect_iterations" => self.collect_iterations = parse_value(s, key, value)?,
            "use_planner" => self.use_planner = parse_bool(s, key, value)?,
            _ => return Err(unknown_key(s, key)),
        }
        Ok(())
    }

    fn entries(&self) -> Vec<(&'static str, String)> {
        vec![
            ("seed", self.seed.to_string()),
            ("out", self.out.display().to_string()),
            ("threads", self.threads.to_string()),
            ("collect_population", self.collect_population.to_string()),
            ("collect_iterations", self.collect_iterations.to_string()),
            ("use_planner", self.use_planner.to_string()),
        ]
    }

    fn check(&self) -> Result<()> {
        if self.collect_population < 2 || self.collect_iterations < 1 {
            return Err(FdmError::Config("run.collect_population must be at least 2 and run.collect_iterations at least 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunConfig {
    pub run: RunSection,
    pub sim: SimSection,
    pub sampler: SamplerConfig,
    pub fdm: FdmConfig,
    pub mppi: MppiConfig,
    pub eval: EvalConfig,
    pub train: TrainConfig,
    pub shift: ShiftSection,
}

impl RunConfig {
    fn sections(&mut self) -> [&mut dyn Section; 8] {
        [
            &mut self.run,
            &mut self.sim,
            &mut self.sampler,
            &mut self.fdm,
            &mut self.mppi,
            &mut self.eval,
            &mut self.train,
            &mut self.shift,
        ]
    }

    /// Sets `section.key` to `value`.
    pub fn set(&mut self, dotted: &str, value: &str) -> Result<()> {
        let (sec, key) = dotted
            .split_once('.')
            .ok_or_else(|| FdmError::Config(format!("expected section.key, got '{dotted}'")))?;
        for s in self.sections() {
            if s.name() == sec {
                return s.set(key.trim(), value);
            }
        }
        Err(FdmError::Config(format!("unknown section '{sec}'")))
    }

    /// Applies a sectioned `key = value` text. Keys outside a section are rejected.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        let mut section: Option<String> = None;
        for (no, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[').and_then(|l| l.strip_suffix(']')) {
                section = Some(name.trim().to_string());
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| FdmError::Config(format!("line {}: expected key = value, got '{line}'", no + 1)))?;
            let sec = section
                .as_deref()
                .ok_or_else(|| FdmError::Config(format!("line {}: key '{}' outside a section", no + 1, k.trim())))?;
            self.set(&format!("{sec}.{}", k.trim()), v.trim())?;
        }
        Ok(())
    }

    pub fn validate(&mut self) -> Result<()> {
        for s in self.sections() {
            s.check()?;
        }
        if self.sampler.bounds != self.fdm.bounds && self.sampler.bounds != ActionBounds::default() {
            return Err(FdmError::Config("sampler bounds must match fdm bounds".into()));
        }
        Ok(())
    }

    /// All sections, in a form `apply_text` reads back to an equal config.
    pub fn render(&mut self) -> String {
        self.sections().iter().map(|s| render_section(*s)).collect::<Vec<_>>().join("\n")
    }

    pub fn collect_config(&self) -> CollectConfig {
        CollectConfig {
            sim: self.sim.params,
            sampler: SamplerConfig {
                bounds: self.fdm.bounds,
                ..self.sampler
            },
            kinds: self.sim.kinds.clone(),
            terrain_size: self.sim.terrain,
            terrains_per_kind: self.sim.terrains_per_kind,
            terrain_seed: self.sim.terrain_seed,
            segments: self.sim.segments,
            starts_per_episode: self.sim.starts_per_episode,
            envs: self.sim.envs,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            seed: self.run.seed,
            ..self.train.clone()
        }
    }

    /// Planner used for planner-in-the-loop collection.
    pub fn collect_mppi(&self) -> MppiConfig {
        MppiConfig {
            population: self.run.collect_population,
            iterations: self.run.collect_iterations,
            ..self.mppi.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_is_default() {
        let mut c = RunConfig::default();
        c.apply_text("").unwrap();
        c.validate().unwrap();
        assert_eq!(c, RunConfig::default());
    }

    #[test]
    fn render_round_trips() {
        let mut c = RunConfig::default();
        c.apply_text("[mppi]\ngamma = 0.05\n[sim]\nkind = plane\nslip_std = 0.07\n[run]\nseed = 9").unwrap();
        assert_eq!(c.mppi.gamma, 0.05);
        assert_eq!(c.sim.kinds, vec![TerrainKind::Plane]);
        assert_eq!(c.run.seed, 9);
        let text = c.render();
        let mut d = RunConfig::default();
        d.apply_text(&text).unwrap();
        assert_eq!(c, d);
        assert_eq!(d.render(), text);
    }

    #[test]
    fn errors_name_the_key() {
        let mut c = RunConfig::default();
        let e = c.apply_text("[mppi]\nbogus = 1").unwrap_err().to_string();
        assert!(e.contains("mppi.bogus"), "{e}");
        let e = c.set("fdm.n", "x").unwrap_err().to_string();
        assert!(e.contains("fdm.n"), "{e}");
        assert!(c.apply_text("gamma = 1").is_err());
        assert!(c.set("nosuch.key", "1").is_err());
        c.set("fdm.n", "0").unwrap();
        assert!(c.validate().is_err());
    }
}
