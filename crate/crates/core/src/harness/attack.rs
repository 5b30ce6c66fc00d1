//! The attack chain: trace in, scored trajectory out.

use serde::{Deserialize, Serialize};

use super::config::{derive_seed, ExperimentConfig};
use super::script::{script_character, ScriptedInput};
use crate::emsim::{EMTrace, NoiseParams, Simulator};
use crate::error::{Error, Result};
use crate::par;
use crate::posnet::model::decide;
use crate::posnet::{forward, GridLabel, Parameters, Real};
use crate::sigproc::preprocess_stream;
use crate::traj::raster::FIT_MARGIN;
use crate::traj::{
    detect_strokes, is_confusable, jaccard, match_character, rasterize, smooth, splice, zones_to_points,
    PositionEstimate, RasterMask, Trajectory,
};
use crate::ExecMode;

pub const NO_STROKES: &str = "no strokes detected";
const PREDICT_BATCH: usize = 256;
const ATTACK_STREAM: u64 = 0x4154_544B;

/// Everything recovered from one trace.
#[derive(Debug, Clone, PartialEq)]
pub struct AttackOutcome {
    pub estimates: Vec<PositionEstimate>,
    pub energies: Vec<f64>,
    pub noise_floor: f64,
    pub intervals: Vec<(usize, usize)>,
    pub trajectory: Trajectory,
    /// Reconstruction fitted to the canvas.
    pub mask: RasterMask,
    pub ranking: Vec<(char, f64)>,
    pub note: Option<String>,
}

/// Rejects a checkpoint trained for a different input length or grid.
pub fn check_compatible<T: Real>(config: &ExperimentConfig, params: &Parameters<T>) -> Result<()> {
    let m = &params.config;
    if m.n_input != config.model.n_input || m.n_class != config.n_zones() {
        return Err(Error::Compatibility(format!(
            "checkpoint expects n_input {} / {} classes, config has n_input {} / {} zones",
            m.n_input,
            m.n_class,
            config.model.n_input,
            config.n_zones()
        )));
    }
    Ok(())
}

/// Zone decision and confidence for every row of `vectors`.
pub fn predict_all<T: Real>(
    params: &Parameters<T>,
    vectors: &[Vec<T>],
    n_rows: usize,
    n_cols: usize,
    exec: ExecMode,
) -> Result<Vec<(GridLabel, f64)>> {
    let chunks: Vec<&[Vec<T>]> = vectors.chunks(PREDICT_BATCH).collect();
    let per_chunk = par::try_map(exec, &chunks, |chunk| -> Result<Vec<(GridLabel, f64)>> {
        let inputs: Vec<&[T]> = chunk.iter().map(|v| v.as_slice()).collect();
        let out = forward(params, &inputs, ExecMode::Sequential)?;
        out.logits
            .rows()
            .into_iter()
            .map(|row| {
                let l: Vec<f64> = row.iter().map(|v| v.as_f64()).collect();
                decide(&l, n_rows, n_cols)
            })
            .collect()
    })?;
    Ok(per_chunk.into_iter().flatten().collect())
}

pub fn templates(config: &ExperimentConfig) -> Result<Vec<(char, RasterMask)>> {
    let r = config.raster;
    crate::traj::template_set(r.width, r.height, r.thickness)
}

/// Canvas mask of a trajectory after fitting it to the unit box.
pub fn fitted_mask(config: &ExperimentConfig, traj: &Trajectory) -> Result<RasterMask> {
    let r = config.raster;
    rasterize(&traj.fit_unit(FIT_MARGIN), r.width, r.height, r.thickness)
}

/// preprocess → predict → detect strokes → zone centres → smooth → splice → rasterize → match.
pub fn attack_trace(
    config: &ExperimentConfig,
    params: &Parameters<f32>,
    trace: &EMTrace,
    templates: &[(char, RasterMask)],
) -> Result<AttackOutcome> {
    check_compatible(config, params)?;
    let mut pre = config.preprocess()?;
    pre.exec = ExecMode::Sequential;
    let vectors = preprocess_stream(trace, &pre)?;
    if vectors.is_empty() {
        return Err(Error::InsufficientData("trace holds no complete cycle".into()));
    }
    let inputs: Vec<Vec<f32>> = vectors.iter().map(|v| v.values.iter().map(|&x| x as f32).collect()).collect();
    let labels = predict_all(params, &inputs, config.device.n_rows, config.device.n_cols, config.train.exec)?;
    let mut estimates = zones_to_points(&labels, &config.screen())?;
    let energies: Vec<f64> = vectors.iter().map(|v| v.energy).collect();
    // Idle scan bursts always radiate, so the quietest cycle is the idle floor.
    // A percentile would land on touched cycles for long strokes.
    let noise_floor = energies.iter().copied().fold(f64::INFINITY, f64::min).max(f64::MIN_POSITIVE);
    let intervals = detect_strokes(&energies, noise_floor, &config.attack.strokes)?;
    for &(a, b) in &intervals {
        for e in &mut estimates[a..=b] {
            e.active = true;
        }
    }
    let strokes = intervals
        .iter()
        .map(|&(a, b)| smooth(&estimates[a..=b], &config.attack.smooth))
        .collect::<Result<Vec<_>>>()?;
    let (trajectory, note) = match splice(strokes) {
        Ok(t) => (t, None),
        Err(Error::EmptyTrajectory) => (Trajectory::default(), Some(NO_STROKES.to_string())),
        Err(e) => return Err(e),
    };
    let mask = fitted_mask(config, &trajectory)?;
    let ranking = match_character(&mask, templates)?;
    Ok(AttackOutcome {
        estimates,
        energies,
        noise_floor,
        intervals,
        trajectory,
        mask,
        ranking,
        note,
    })
}

/// Score of one scripted character.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CharacterResult {
    pub character: char,
    pub distance_cm: f64,
    pub n_strokes: usize,
    pub n_truth_strokes: usize,
    pub jaccard: f64,
    /// Best five template matches.
    pub top_matches: Vec<(char, f64)>,
    /// 1-based rank of the first template that is the character or a look-alike.
    pub truth_rank: usize,
    pub top3_hit: bool,
    pub note: Option<String>,
    pub truth: Trajectory,
    pub reconstruction: Trajectory,
}

/// The scripted input for `c` and its synthesized trace. The noise draw
/// depends on the character and repeat, not on the distance.
pub fn scripted_trace(
    config: &ExperimentConfig,
    sim: &Simulator,
    c: char,
    noise: &NoiseParams,
    repeat: u64,
) -> Result<(ScriptedInput, EMTrace)> {
    let a = &config.attack;
    let input = script_character(c, a.pen_speed, a.idle_cycles, sim.screen.touch_sampling_freq)?;
    let seed = derive_seed(config.seed ^ ATTACK_STREAM, (c as u64) << 16 | repeat);
    let offset = (seed % sim.cycle_len() as u64) as usize;
    let mut trace = sim.synth_trace_with_offset(&input.path, noise, seed, offset)?;
    trace.meta.description = format!("scripted {c:?}");
    Ok((input, trace))
}

/// Synthesizes `c` under `noise`, attacks it and scores the result.
pub fn attack_character(
    config: &ExperimentConfig,
    sim: &Simulator,
    params: &Parameters<f32>,
    templates: &[(char, RasterMask)],
    c: char,
    noise: &NoiseParams,
    repeat: u64,
) -> Result<CharacterResult> {
    let (input, trace) = scripted_trace(config, sim, c, noise, repeat)?;
    let out = attack_trace(config, params, &trace, templates)?;
    let truth_mask = fitted_mask(config, &input.truth)?;
    let score = if out.trajectory.is_empty() {
        0.0
    } else {
        jaccard(&out.mask, &truth_mask)?
    };
    let truth_rank = out.ranking.iter().position(|(m, _)| is_confusable(*m, c)).map_or(usize::MAX, |i| i + 1);
    Ok(CharacterResult {
        character: c,
        distance_cm: noise.distance_cm,
        n_strokes: out.trajectory.strokes.len(),
        n_truth_strokes: input.truth.strokes.len(),
        jaccard: score,
        top_matches: out.ranking.iter().take(5).copied().collect(),
        top3_hit: !out.trajectory.is_empty() && truth_rank <= 3,
        truth_rank,
        note: out.note,
        truth: input.truth,
        reconstruction: out.trajectory,
    })
}
