//! The total-value model and per-step reward.
//!
//! Total value is ecological mass (ESV-weighted modifiable fractions summed
//! over all cells) plus spatial shaping: log-compressed contiguity scores for
//! trees, crops, and built area, a buffer penalty on crop/built mass adjacent
//! to water, and a riparian bonus on tree mass adjacent to water. The reward
//! for a step is the change in total value.
//!
//! Two evaluation paths exist: a naive path that recomputes every term from
//! the state, and an incremental path that maintains the pre-log inner sums
//! and per-channel neighbor fields so a candidate action can be scored by
//! touching only the modified cell. The two are interchangeable within 1e-9
//! and the equivalence is enforced by the test suite.

use serde::{Deserialize, Serialize};

use crate::env::{DecodedAction, StepError};
use crate::esv::EsvTable;
use crate::grid::{neighbor_convolve, Field, GridState, LandClass, WaterMap, NUM_MODIFIABLE};

/// Scenario identity for a reward configuration.
#[derive(Clone, Copy, PartialEq, Eq, Debug, Serialize, Deserialize)]
pub enum Preset {
    EcoOnly,
    SpatialNoRegen,
    Headline,
    Custom,
}

impl Preset {
    pub const NAMED: [Preset; 3] = [Preset::EcoOnly, Preset::SpatialNoRegen, Preset::Headline];

    pub fn name(self) -> &'static str {
        match self {
            Preset::EcoOnly => "eco-only",
            Preset::SpatialNoRegen => "spatial-no-regen",
            Preset::Headline => "headline",
            Preset::Custom => "custom",
        }
    }

    pub fn parse(s: &str) -> Option<Preset> {
        match s.trim().to_ascii_lowercase().as_str() {
            "eco-only" | "eco_only" | "ecoonly" => Some(Preset::EcoOnly),
            "spatial-no-regen" | "spatial_no_regen" | "spatialnoregen" => {
                Some(Preset::SpatialNoRegen)
            }
            "headline" => Some(Preset::Headline),
            "custom" => Some(Preset::Custom),
            _ => None,
        }
    }

    /// Crops uplift used by the scenario. Only the no-regen ablation holds
    /// crops at its base coefficient.
    pub fn regen_uplift(self) -> f64 {
        match self {
            Preset::SpatialNoRegen => 1.0,
            _ => crate::esv::HEADLINE_REGEN_UPLIFT,
        }
    }
}

/// The buffer-penalty weight: either fixed or annealed linearly from `start`
/// to `end` over the first `ramp_fraction` of progress.
#[derive(Clone, Copy, PartialEq, Debug, Serialize, Deserialize)]
pub enum WaterWeight {
    Fixed(f64),
    Anneal {
        start: f64,
        end: f64,
        ramp_fraction: f64,
    },
}

impl WaterWeight {
    pub fn resolve(&self, progress: f64) -> f64 {
        match *self {
            WaterWeight::Fixed(w) => w,
            WaterWeight::Anneal {
                start,
                end,
                ramp_fraction,
            } => {
                let p = progress.clamp(0.0, 1.0);
                start + (end - start) * (p / ramp_fraction).min(1.0)
            }
        }
    }
}

/// Spatial reward weights. All weights are non-negative; the buffer penalty
/// enters the total with a minus sign.
#[derive(Clone, PartialEq, Debug, Serialize, Deserialize)]
pub struct RewardConfig {
    pub preset: Preset,
    pub tree_weight: f64,
    pub crop_weight: f64,
    pub built_weight: f64,
    pub riparian_weight: f64,
    pub water_weight: WaterWeight,
}

impl RewardConfig {
    pub fn headline() -> RewardConfig {
        RewardConfig {
            preset: Preset::Headline,
            tree_weight: 1.0,
            crop_weight: 4.0,
            built_weight: 2.0,
            riparian_weight: 5.0,
            water_weight: WaterWeight::Anneal {
                start: 1.0,
                end: 6.0,
                ramp_fraction: 0.6,
            },
        }
    }

    pub fn eco_only() -> RewardConfig {
        RewardConfig {
            preset: Preset::EcoOnly,
            tree_weight: 0.0,
            crop_weight: 0.0,
            built_weight: 0.0,
            riparian_weight: 0.0,
            water_weight: WaterWeight::Fixed(0.0),
        }
    }

    pub fn spatial_no_regen() -> RewardConfig {
        RewardConfig {
            preset: Preset::SpatialNoRegen,
            ..RewardConfig::headline()
        }
    }

    pub fn for_preset(preset: Preset) -> RewardConfig {
        match preset {
            Preset::EcoOnly => RewardConfig::eco_only(),
            Preset::SpatialNoRegen => RewardConfig::spatial_no_regen(),
            Preset::Headline | Preset::Custom => RewardConfig::headline(),
        }
    }
}

/// Total value and its components. The spatial components are unweighted;
/// `total` applies the weights and the resolved buffer-penalty weight.
#[derive(Clone, Copy, PartialEq, Debug, Serialize, Deserialize)]
pub struct ValueBreakdown {
    pub eco: f64,
    pub tree_contiguity: f64,
    pub crop_contiguity: f64,
    pub built_contiguity: f64,
    pub buffer_penalty: f64,
    pub riparian_bonus: f64,
    /// Buffer-penalty weight resolved at the progress this breakdown used.
    pub water_weight: f64,
    pub total: f64,
}

impl ValueBreakdown {
    fn assemble(
        eco: f64,
        tree_contiguity: f64,
        crop_contiguity: f64,
        built_contiguity: f64,
        buffer_penalty: f64,
        riparian_bonus: f64,
        config: &RewardConfig,
        progress: f64,
    ) -> ValueBreakdown {
        let water_weight = config.water_weight.resolve(progress);
        let total = eco
            + config.tree_weight * tree_contiguity
            + config.crop_weight * crop_contiguity
            + config.built_weight * built_contiguity
            - water_weight * buffer_penalty
            + config.riparian_weight * riparian_bonus;
        ValueBreakdown {
            eco,
            tree_contiguity,
            crop_contiguity,
            built_contiguity,
            buffer_penalty,
            riparian_bonus,
            water_weight,
            total,
        }
    }
}

/// Sum of ESV-weighted modifiable fractions over all cells.
pub fn eco_value(state: &GridState, esv: &EsvTable) -> f64 {
    let np = state.n_pixels();
    let mut sum = 0.0;
    for cell in state.cells() {
        for (k, &class) in LandClass::MODIFIABLE.iter().enumerate() {
            sum += cell.fraction(class, np) * esv.normalized_modifiable(k);
        }
    }
    sum
}

/// Log-compressed clustering score of one class: ln(1 + sum of the class
/// fraction times its 4-neighbor fraction sum). Defined for the three
/// classes that carry a contiguity bonus.
pub fn contiguity(state: &GridState, class: LandClass) -> f64 {
    assert!(
        matches!(class, LandClass::Trees | LandClass::Crops | LandClass::BuiltArea),
        "contiguity is defined for trees, crops, and built area"
    );
    let field = state.class_field(class);
    let nb = neighbor_convolve(&field);
    let inner: f64 = field
        .as_slice()
        .iter()
        .zip(nb.as_slice())
        .map(|(f, n)| f * n)
        .sum();
    inner.ln_1p()
}

/// Penalty on crop and built mass adjacent to water. Zero exactly when no
/// crop/built mass is 4-adjacent to any water mass.
pub fn buffer_penalty(state: &GridState, water: &WaterMap) -> f64 {
    let nb = neighbor_convolve(water.field());
    let m = state.m();
    let mut inner = 0.0;
    for i in 0..m {
        for j in 0..m {
            let high_impact =
                state.fraction(i, j, LandClass::Crops) + state.fraction(i, j, LandClass::BuiltArea);
            inner += high_impact * nb.get(i, j);
        }
    }
    inner.ln_1p()
}

/// Bonus on tree mass adjacent to water; mirrors the buffer penalty with the
/// tree channel.
pub fn riparian_bonus(state: &GridState, water: &WaterMap) -> f64 {
    let nb = neighbor_convolve(water.field());
    let m = state.m();
    let mut inner = 0.0;
    for i in 0..m {
        for j in 0..m {
            inner += state.fraction(i, j, LandClass::Trees) * nb.get(i, j);
        }
    }
    inner.ln_1p()
}

/// Full naive evaluation of the total value at the given anneal progress.
/// Planners and evaluation fix progress = 1 (final weights).
pub fn total_value(
    state: &GridState,
    esv: &EsvTable,
    config: &RewardConfig,
    progress: f64,
) -> ValueBreakdown {
    let water = WaterMap::from_state(state);
    ValueBreakdown::assemble(
        eco_value(state, esv),
        contiguity(state, LandClass::Trees),
        contiguity(state, LandClass::Crops),
        contiguity(state, LandClass::BuiltArea),
        buffer_penalty(state, &water),
        riparian_bonus(state, &water),
        config,
        progress,
    )
}

/// Reward of a transition: V(after) - V(before) at the same progress.
pub fn step_reward(
    before: &GridState,
    after: &GridState,
    esv: &EsvTable,
    config: &RewardConfig,
    progress: f64,
) -> f64 {
    total_value(after, esv, config, progress).total - total_value(before, esv, config, progress).total
}

/// Score one action against a fresh accumulator set; equals the naive
/// `step_reward` of applying it, within 1e-9.
pub fn incremental_delta(
    state: &GridState,
    action: DecodedAction,
    delta_pixels: u32,
    esv: &EsvTable,
    config: &RewardConfig,
    progress: f64,
) -> Result<f64, StepError> {
    let accum = ValueAccumulators::from_state(state, esv);
    accum
        .action_delta(state, action, delta_pixels, config, progress)
        .map(|(delta, _)| delta)
}

/// Pre-log inner sums of the five spatial terms plus the eco sum, together
/// with the per-channel neighbor fields needed to update them locally.
///
/// Built once per state; `action_delta` scores a candidate in O(1) and
/// `apply` keeps the accumulators in sync after the grid mutates.
#[derive(Clone, Debug)]
pub struct ValueAccumulators {
    m: usize,
    inv_pixels: f64,
    eco: f64,
    tree_sum: f64,
    crop_sum: f64,
    built_sum: f64,
    buffer_sum: f64,
    riparian_sum: f64,
    tree_nb: Field,
    crop_nb: Field,
    built_nb: Field,
    water_nb: Field,
    esv_mod: [f64; NUM_MODIFIABLE],
}

impl ValueAccumulators {
    pub fn from_state(state: &GridState, esv: &EsvTable) -> ValueAccumulators {
        let m = state.m();
        let trees = state.class_field(LandClass::Trees);
        let crops = state.class_field(LandClass::Crops);
        let built = state.class_field(LandClass::BuiltArea);
        let water = state.class_field(LandClass::Water);
        let tree_nb = neighbor_convolve(&trees);
        let crop_nb = neighbor_convolve(&crops);
        let built_nb = neighbor_convolve(&built);
        let water_nb = neighbor_convolve(&water);

        let dot = |f: &Field, n: &Field| -> f64 {
            f.as_slice()
                .iter()
                .zip(n.as_slice())
                .map(|(a, b)| a * b)
                .sum()
        };
        let tree_sum = dot(&trees, &tree_nb);
        let crop_sum = dot(&crops, &crop_nb);
        let built_sum = dot(&built, &built_nb);
        let buffer_sum = dot(&crops, &water_nb) + dot(&built, &water_nb);
        let riparian_sum = dot(&trees, &water_nb);

        let mut esv_mod = [0.0; NUM_MODIFIABLE];
        for k in 0..NUM_MODIFIABLE {
            esv_mod[k] = esv.normalized_modifiable(k);
        }

        ValueAccumulators {
            m,
            inv_pixels: 1.0 / f64::from(state.n_pixels()),
            eco: eco_value(state, esv),
            tree_sum,
            crop_sum,
            built_sum,
            buffer_sum,
            riparian_sum,
            tree_nb,
            crop_nb,
            built_nb,
            water_nb,
            esv_mod,
        }
    }

    pub fn breakdown(&self, config: &RewardConfig, progress: f64) -> ValueBreakdown {
        ValueBreakdown::assemble(
            self.eco,
            self.tree_sum.max(0.0).ln_1p(),
            self.crop_sum.max(0.0).ln_1p(),
            self.built_sum.max(0.0).ln_1p(),
            self.buffer_sum.max(0.0).ln_1p(),
            self.riparian_sum.max(0.0).ln_1p(),
            config,
            progress,
        )
    }

    /// Value change of applying `action` (with the clamped transfer), and the
    /// pixel count that would be transferred. Does not mutate anything.
    pub fn action_delta(
        &self,
        state: &GridState,
        action: DecodedAction,
        delta_pixels: u32,
        config: &RewardConfig,
        progress: f64,
    ) -> Result<(f64, u32), StepError> {
        if action.i >= self.m
            || action.j >= self.m
            || action.src >= NUM_MODIFIABLE
            || action.tgt >= NUM_MODIFIABLE
        {
            return Err(StepError::ActionOutOfRange);
        }
        let src_class = LandClass::from_modifiable_index(action.src).unwrap();
        let transferred = delta_pixels.min(state.count(action.i, action.j, src_class));
        if transferred == 0 || action.src == action.tgt {
            return Ok((0.0, transferred));
        }
        let delta_frac = f64::from(transferred) * self.inv_pixels;

        let mut delta = delta_frac * (self.esv_mod[action.tgt] - self.esv_mod[action.src]);
        delta += self.contiguity_term_delta(action.i, action.j, action.src, -delta_frac, config);
        delta += self.contiguity_term_delta(action.i, action.j, action.tgt, delta_frac, config);

        let wnb = self.water_nb.get(action.i, action.j);
        if wnb != 0.0 {
            let buffer_shift = (high_impact_sign(action.tgt) - high_impact_sign(action.src))
                * delta_frac
                * wnb;
            if buffer_shift != 0.0 {
                let new = self.buffer_sum + buffer_shift;
                delta -= config.water_weight.resolve(progress)
                    * (new.max(0.0).ln_1p() - self.buffer_sum.max(0.0).ln_1p());
            }
            let riparian_shift =
                (tree_sign(action.tgt) - tree_sign(action.src)) * delta_frac * wnb;
            if riparian_shift != 0.0 {
                let new = self.riparian_sum + riparian_shift;
                delta += config.riparian_weight
                    * (new.max(0.0).ln_1p() - self.riparian_sum.max(0.0).ln_1p());
            }
        }
        Ok((delta, transferred))
    }

    /// Weighted contiguity change from shifting one channel at one cell by
    /// `signed_frac`. Diagonal-free kernel: the inner sum moves by exactly
    /// 2 * signed_frac * (neighbor sum at the cell).
    fn contiguity_term_delta(
        &self,
        i: usize,
        j: usize,
        channel: usize,
        signed_frac: f64,
        config: &RewardConfig,
    ) -> f64 {
        let (sum, nb, weight) = match channel_contiguity(channel) {
            Some(ContiguityChannel::Tree) => (self.tree_sum, &self.tree_nb, config.tree_weight),
            Some(ContiguityChannel::Crop) => (self.crop_sum, &self.crop_nb, config.crop_weight),
            Some(ContiguityChannel::Built) => (self.built_sum, &self.built_nb, config.built_weight),
            None => return 0.0,
        };
        let new = sum + 2.0 * signed_frac * nb.get(i, j);
        weight * (new.max(0.0).ln_1p() - sum.max(0.0).ln_1p())
    }

    /// Fold an executed transfer into the accumulators. Must be called with
    /// the same clamped `transferred` the grid mutation used.
    pub fn apply(&mut self, action: DecodedAction, transferred: u32) {
        if transferred == 0 || action.src == action.tgt {
            return;
        }
        let delta_frac = f64::from(transferred) * self.inv_pixels;
        self.eco += delta_frac * (self.esv_mod[action.tgt] - self.esv_mod[action.src]);

        self.shift_channel(action.i, action.j, action.src, -delta_frac);
        self.shift_channel(action.i, action.j, action.tgt, delta_frac);

        let wnb = self.water_nb.get(action.i, action.j);
        self.buffer_sum +=
            (high_impact_sign(action.tgt) - high_impact_sign(action.src)) * delta_frac * wnb;
        self.riparian_sum += (tree_sign(action.tgt) - tree_sign(action.src)) * delta_frac * wnb;
    }

    fn shift_channel(&mut self, i: usize, j: usize, channel: usize, signed_frac: f64) {
        let (sum, nb) = match channel_contiguity(channel) {
            Some(ContiguityChannel::Tree) => (&mut self.tree_sum, &mut self.tree_nb),
            Some(ContiguityChannel::Crop) => (&mut self.crop_sum, &mut self.crop_nb),
            Some(ContiguityChannel::Built) => (&mut self.built_sum, &mut self.built_nb),
            None => return,
        };
        *sum += 2.0 * signed_frac * nb.get(i, j);
        let m = self.m as isize;
        for (di, dj) in crate::grid::NEIGHBOR_OFFSETS {
            let (ni, nj) = (i as isize + di, j as isize + dj);
            if ni >= 0 && ni < m && nj >= 0 && nj < m {
                nb.add(ni as usize, nj as usize, signed_frac);
            }
        }
    }

    /// Neighbor water-fraction sum at a cell (used by planner diagnostics).
    pub fn water_neighbor_sum(&self, i: usize, j: usize) -> f64 {
        self.water_nb.get(i, j)
    }
}

enum ContiguityChannel {
    Tree,
    Crop,
    Built,
}

fn channel_contiguity(channel: usize) -> Option<ContiguityChannel> {
    match LandClass::from_modifiable_index(channel) {
        Some(LandClass::Trees) => Some(ContiguityChannel::Tree),
        Some(LandClass::Crops) => Some(ContiguityChannel::Crop),
        Some(LandClass::BuiltArea) => Some(ContiguityChannel::Built),
        _ => None,
    }
}

fn high_impact_sign(channel: usize) -> f64 {
    match LandClass::from_modifiable_index(channel) {
        Some(LandClass::Crops) | Some(LandClass::BuiltArea) => 1.0,
        _ => 0.0,
    }
}

fn tree_sign(channel: usize) -> f64 {
    if LandClass::from_modifiable_index(channel) == Some(LandClass::Trees) {
        1.0
    } else {
        0.0
    }
}
