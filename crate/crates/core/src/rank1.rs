//! Rank-one cutting-and-stacking constructions.
//!
//! Convention used throughout the crate: stage `n` cuts tower `n` (height
//! `h_n`, level width `w_n`) into `r_n` columns of equal width, places
//! `s_{n,i}` spacer levels on top of column `i` (every column, the last one
//! included) and stacks the columns left to right. Towers are numbered from
//! 1, so tower `n + 1` is the output of stage `n`, and
//!
//! ```text
//! h_{n+1} = r_n * h_n + sum_i s_{n,i}        w_{n+1} = w_n / r_n
//! ```
//!
//! Inside tower `N` the transformation moves a level up by one; the top level
//! is only resolved by deeper stages. A finite spec therefore defines the map
//! on a finite region and everything past the last stage is reported as an
//! escape.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{reciprocal_product, Scalar};

#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StageSpec {
    pub cuts: usize,
    pub spacers: Vec<u64>,
}

impl StageSpec {
    /// Stage whose cut count is the number of spacer entries.
    pub fn new(spacers: Vec<u64>) -> Self {
        Self {
            cuts: spacers.len(),
            spacers,
        }
    }

    /// Stage without spacers (an odometer step).
    pub fn odometer(cuts: usize) -> Self {
        Self::new(vec![0; cuts])
    }

    pub fn spacer_total(&self) -> u64 {
        self.spacers.iter().sum()
    }

    pub fn check(&self) -> Result<()> {
        if self.cuts < 2 {
            return Err(Error::InvalidSpec(format!("cuts < 2 (cuts = {})", self.cuts)));
        }
        if self.spacers.len() != self.cuts {
            return Err(Error::InvalidSpec(format!(
                "cuts = {} but {} spacer entries",
                self.cuts,
                self.spacers.len()
            )));
        }
        Ok(())
    }

    /// Bottom positions of the column copies inside the next tower.
    pub fn offsets(&self, height: u64) -> Result<Vec<u64>> {
        let mut out = Vec::with_capacity(self.spacers.len());
        let mut off = 0u64;
        for (i, s) in self.spacers.iter().enumerate() {
            out.push(off);
            if i + 1 < self.spacers.len() {
                off = off
                    .checked_add(height)
                    .and_then(|v| v.checked_add(*s))
                    .ok_or(Error::Overflow("column offset"))?;
            }
        }
        Ok(out)
    }

    pub fn next_height(&self, height: u64) -> Result<u64> {
        (self.spacers.len() as u64)
            .checked_mul(height)
            .and_then(|v| v.checked_add(self.spacer_total()))
            .ok_or(Error::Overflow("tower height"))
    }
}

fn default_base_height() -> u64 {
    1
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RankOneSpec {
    #[serde(default = "default_base_height")]
    pub base_height: u64,
    #[serde(default)]
    pub stages: Vec<StageSpec>,
}

impl Default for RankOneSpec {
    fn default() -> Self {
        Self {
            base_height: 1,
            stages: Vec::new(),
        }
    }
}

impl RankOneSpec {
    pub fn new(base_height: u64, stages: Vec<StageSpec>) -> Self {
        Self {
            base_height,
            stages,
        }
    }

    /// `stage_count` odometer stages with `cuts` columns each.
    pub fn odometer(cuts: usize, stage_count: usize) -> Self {
        Self::new(1, vec![StageSpec::odometer(cuts); stage_count])
    }

    /// Index of the deepest tower.
    pub fn max_depth(&self) -> usize {
        self.stages.len() + 1
    }

    /// Stage `n` (1-based): the stage that turns tower `n` into tower `n + 1`.
    pub fn stage(&self, n: usize) -> Result<&StageSpec> {
        if n == 0 || n > self.stages.len() {
            return Err(Error::IndexOutOfRange {
                what: "stage",
                index: n,
                max: self.stages.len(),
            });
        }
        Ok(&self.stages[n - 1])
    }

    pub fn check(&self) -> Result<()> {
        if self.base_height == 0 {
            return Err(Error::InvalidSpec("base_height must be positive".into()));
        }
        for (i, st) in self.stages.iter().enumerate() {
            st.check()
                .map_err(|e| Error::InvalidSpec(format!("stage {}: {e}", i + 1)))?;
        }
        self.heights().map(|_| ())
    }

    pub(crate) fn check_depth(&self, depth: usize) -> Result<()> {
        if depth == 0 || depth > self.max_depth() {
            return Err(Error::IndexOutOfRange {
                what: "depth",
                index: depth,
                max: self.max_depth(),
            });
        }
        Ok(())
    }

    /// Heights `h_1, ..., h_D` of every tower.
    pub fn heights(&self) -> Result<Vec<u64>> {
        let mut hs = Vec::with_capacity(self.max_depth());
        let mut h = self.base_height;
        hs.push(h);
        for st in &self.stages {
            h = st.next_height(h)?;
            hs.push(h);
        }
        Ok(hs)
    }

    pub fn height(&self, depth: usize) -> Result<u64> {
        self.check_depth(depth)?;
        let mut h = self.base_height;
        for st in &self.stages[..depth - 1] {
            h = st.next_height(h)?;
        }
        Ok(h)
    }

    /// Level width `w_depth = 1 / (r_1 ... r_{depth-1})`.
    pub fn width<S: Scalar>(&self, depth: usize) -> Result<S> {
        self.check_depth(depth)?;
        Ok(reciprocal_product(self.stages[..depth - 1].iter().map(|s| s.cuts)))
    }

    /// Total measure of tower `depth`, `h_depth * w_depth`.
    pub fn measure<S: Scalar>(&self, depth: usize) -> Result<S> {
        Ok(S::from_count(self.height(depth)?) * self.width::<S>(depth)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("spec serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TowerReport<S> {
    pub depth: usize,
    pub height: u64,
    pub width: S,
    pub measure: S,
}

#[derive(Clone, Debug, PartialEq)]
pub struct ValidationReport<S> {
    pub towers: Vec<TowerReport<S>>,
    pub violations: Vec<String>,
    /// Partial sum of `(sum_i s_{n,i}) * w_{n+1}` over the finite prefix; the
    /// construction has infinite measure iff this diverges.
    pub spacer_mass: S,
}

impl<S> ValidationReport<S> {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Height/width/measure bookkeeping for every tower plus all structural
/// violations. Never fails: problems are listed in the report.
pub fn validate_spec<S: Scalar>(spec: &RankOneSpec) -> ValidationReport<S> {
    let mut violations = Vec::new();
    if spec.base_height == 0 {
        violations.push("base_height must be positive".to_string());
    }
    let mut towers = vec![TowerReport {
        depth: 1,
        height: spec.base_height,
        width: S::one(),
        measure: S::from_count(spec.base_height),
    }];
    let mut spacer_mass = S::zero();
    let mut h = spec.base_height;
    let mut w = S::one();
    let mut bookkeeping = true;
    for (i, st) in spec.stages.iter().enumerate() {
        let n = i + 1;
        if st.cuts < 2 {
            violations.push(format!("stage {n}: cuts < 2"));
        }
        if st.spacers.len() != st.cuts {
            violations.push(format!(
                "stage {n}: cuts = {} but {} spacer entries",
                st.cuts,
                st.spacers.len()
            ));
        }
        if !bookkeeping || st.spacers.is_empty() {
            bookkeeping = false;
            continue;
        }
        match st.next_height(h) {
            Ok(next) => {
                h = next;
                w = w / S::from_count(st.spacers.len() as u64);
                spacer_mass = spacer_mass + S::from_count(st.spacer_total()) * w.clone();
                towers.push(TowerReport {
                    depth: n + 1,
                    height: h,
                    width: w.clone(),
                    measure: S::from_count(h) * w.clone(),
                });
            }
            Err(_) => {
                violations.push(format!("stage {n}: height overflows u64"));
                bookkeeping = false;
            }
        }
    }
    ValidationReport {
        towers,
        violations,
        spacer_mass,
    }
}

/// Positions of the base level `B_k` of tower `k` inside tower `N`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OccurrenceSet {
    pub stage_of_level: usize,
    pub depth: usize,
    pub positions: Vec<u64>,
    pub height: u64,
    /// Height of tower `stage_of_level`.
    pub level_height: u64,
    cuts_to_depth: Vec<usize>,
}

impl OccurrenceSet {
    /// The trivial set `{0}` inside tower `k` itself.
    pub fn base(spec: &RankOneSpec, level_stage: usize) -> Result<Self> {
        spec.check()?;
        spec.check_depth(level_stage)?;
        let h = spec.height(level_stage)?;
        Ok(Self {
            stage_of_level: level_stage,
            depth: level_stage,
            positions: vec![0],
            height: h,
            level_height: h,
            cuts_to_depth: spec.stages[..level_stage - 1].iter().map(|s| s.cuts).collect(),
        })
    }

    /// Applies stage `depth` (the offset recursion), returning the set at `depth + 1`.
    pub fn deepen(&self, spec: &RankOneSpec) -> Result<Self> {
        let st = spec.stage(self.depth)?;
        let offsets = st.offsets(self.height)?;
        let mut positions = Vec::with_capacity(self.positions.len() * offsets.len());
        for off in &offsets {
            positions.extend(self.positions.iter().map(|p| p + off));
        }
        let mut cuts_to_depth = self.cuts_to_depth.clone();
        cuts_to_depth.push(st.cuts);
        Ok(Self {
            stage_of_level: self.stage_of_level,
            depth: self.depth + 1,
            positions,
            height: st.next_height(self.height)?,
            level_height: self.level_height,
            cuts_to_depth,
        })
    }

    /// Width of one level of the ambient tower.
    pub fn width<S: Scalar>(&self) -> S {
        reciprocal_product(self.cuts_to_depth.iter().copied())
    }

    pub fn len(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    /// Largest distance between two occurrences.
    pub fn max_distance(&self) -> u64 {
        match (self.positions.first(), self.positions.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0,
        }
    }

    /// Number of occurrences at positions `>= threshold`.
    pub fn count_at_or_above(&self, threshold: u64) -> usize {
        self.positions.len() - self.positions.partition_point(|&p| p < threshold)
    }

    pub fn contains(&self, position: u64) -> bool {
        self.positions.binary_search(&position).is_ok()
    }

    /// Level of tower `stage_of_level` that contains `position`, if any.
    pub fn level_of(&self, position: u64) -> Option<u64> {
        let idx = self.positions.partition_point(|&p| p <= position);
        if idx == 0 {
            return None;
        }
        let rel = position - self.positions[idx - 1];
        (rel < self.level_height).then_some(rel)
    }
}

pub fn occurrence_set(spec: &RankOneSpec, level_stage: usize, depth: usize) -> Result<OccurrenceSet> {
    spec.check_depth(depth)?;
    if level_stage > depth {
        return Err(Error::IndexOutOfRange {
            what: "level stage",
            index: level_stage,
            max: depth,
        });
    }
    let mut occ = OccurrenceSet::base(spec, level_stage)?;
    while occ.depth < depth {
        occ = occ.deepen(spec)?;
    }
    Ok(occ)
}

/// `f = sum_l c_l * 1_{level l of tower k}`.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelFunction<S> {
    pub stage: usize,
    pub levels: BTreeMap<u64, S>,
}

impl<S: Scalar> LevelFunction<S> {
    pub fn new(stage: usize, levels: BTreeMap<u64, S>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidArgument("level function needs at least one level".into()));
        }
        Ok(Self { stage, levels })
    }

    pub fn indicator(stage: usize, level: u64) -> Self {
        Self {
            stage,
            levels: BTreeMap::from([(level, S::one())]),
        }
    }

    /// Indicator of the base level `B_k`.
    pub fn base_indicator(stage: usize) -> Self {
        Self::indicator(stage, 0)
    }

    pub fn check(&self, spec: &RankOneSpec) -> Result<()> {
        let h = spec.height(self.stage)?;
        if let Some((&top, _)) = self.levels.iter().next_back() {
            if top >= h {
                return Err(Error::IndexOutOfRange {
                    what: "level",
                    index: top as usize,
                    max: h as usize - 1,
                });
            }
        }
        Ok(())
    }

    pub fn norm_sq(&self, spec: &RankOneSpec) -> Result<S> {
        self.check(spec)?;
        let w = spec.width::<S>(self.stage)?;
        Ok(self
            .levels
            .values()
            .fold(S::zero(), |acc, c| acc + c.clone() * c.clone())
            * w)
    }

    pub fn integral(&self, spec: &RankOneSpec) -> Result<S> {
        self.check(spec)?;
        let w = spec.width::<S>(self.stage)?;
        Ok(self.levels.values().fold(S::zero(), |acc, c| acc + c.clone()) * w)
    }

    pub fn is_zero_mean(&self, spec: &RankOneSpec) -> Result<bool> {
        Ok(self.integral(spec)?.is_zero())
    }

    pub fn max_abs(&self) -> S {
        self.levels
            .values()
            .map(|c| c.abs())
            .fold(S::zero(), crate::scalar::max_of)
    }

    pub fn is_nonnegative(&self) -> bool {
        self.levels.values().all(|c| !c.is_negative())
    }

    pub fn max_level(&self) -> u64 {
        self.levels.keys().next_back().copied().unwrap_or(0)
    }

    /// Value at a level of a deeper tower, given the occurrence set of this
    /// function's stage in that tower.
    pub fn value_at(&self, occ: &OccurrenceSet, position: u64) -> S {
        debug_assert_eq!(occ.stage_of_level, self.stage);
        occ.level_of(position)
            .and_then(|l| self.levels.get(&l).cloned())
            .unwrap_or_else(S::zero)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PointImage {
    At { depth: usize, position: u64 },
    Escape,
}

/// Moves the level `position` of tower `depth` up by `steps`.
///
/// A level that must cross the top of its tower is followed through its first
/// column copy into deeper towers (offset 0, so the position is unchanged)
/// until the move fits or the stages run out.
pub fn point_map(spec: &RankOneSpec, depth: usize, position: u64, steps: u64) -> Result<PointImage> {
    let heights = spec.heights()?;
    spec.check_depth(depth)?;
    if position >= heights[depth - 1] {
        return Err(Error::IndexOutOfRange {
            what: "position",
            index: position as usize,
            max: heights[depth - 1] as usize - 1,
        });
    }
    let Some(target) = position.checked_add(steps) else {
        return Ok(PointImage::Escape);
    };
    Ok(heights[depth - 1..]
        .iter()
        .position(|&h| target < h)
        .map_or(PointImage::Escape, |i| PointImage::At {
            depth: depth + i,
            position: target,
        }))
}

/// Heights and column offsets of every stage, for repeated point queries.
#[derive(Clone, Debug)]
pub struct TowerIndex {
    pub heights: Vec<u64>,
    pub offsets: Vec<Vec<u64>>,
    cuts: Vec<usize>,
}

/// A point of the constructed region: a level of tower `depth` plus the
/// horizontal coordinate `frac` in `[0, 1)` inside that level.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    pub depth: usize,
    pub position: u64,
    pub frac: f64,
}

impl TowerIndex {
    pub fn new(spec: &RankOneSpec) -> Result<Self> {
        spec.check()?;
        let heights = spec.heights()?;
        let offsets = spec
            .stages
            .iter()
            .zip(&heights)
            .map(|(st, &h)| st.offsets(h))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            heights,
            offsets,
            cuts: spec.stages.iter().map(|s| s.cuts).collect(),
        })
    }

    pub fn max_depth(&self) -> usize {
        self.heights.len()
    }

    /// Position in tower `target` of the level containing `position` of
    /// tower `depth`; `None` when it is a spacer added after `target`.
    pub fn locate(&self, depth: usize, mut position: u64, target: usize) -> Option<u64> {
        debug_assert!(target >= 1 && target <= depth && depth <= self.max_depth());
        for m in (target..depth).rev() {
            let offs = &self.offsets[m - 1];
            let i = offs.partition_point(|&o| o <= position) - 1;
            let rel = position - offs[i];
            if rel >= self.heights[m - 1] {
                return None;
            }
            position = rel;
        }
        Some(position)
    }

    /// Pushes a point forward `steps` levels, lifting it into deeper towers
    /// (through the column selected by `frac`) whenever the top is crossed.
    /// `None` when it leaves the constructed region.
    pub fn push(&self, point: Point, steps: u64) -> Option<Point> {
        let Point {
            mut depth,
            mut position,
            mut frac,
        } = point;
        let target = |p: u64| p.checked_add(steps);
        loop {
            let t = target(position)?;
            if t < self.heights[depth - 1] {
                return Some(Point {
                    depth,
                    position: t,
                    frac,
                });
            }
            if depth == self.max_depth() {
                return None;
            }
            let r = self.cuts[depth - 1];
            let scaled = frac * r as f64;
            let col = (scaled.floor() as usize).min(r - 1);
            frac = (scaled - col as f64).clamp(0.0, 1.0 - f64::EPSILON);
            position += self.offsets[depth - 1][col];
            depth += 1;
        }
    }
}

/// Grid index (in units of `w_depth`) of every level of tower `depth` in the
/// concrete interval model: the base tower occupies `[0, h_1)`, columns are
/// the left-to-right subintervals of each level, and spacers are fresh
/// intervals allocated past the region used so far.
pub fn cell_layout(spec: &RankOneSpec, depth: usize) -> Result<Vec<u64>> {
    spec.check()?;
    spec.check_depth(depth)?;
    let mut layout: Vec<u64> = (0..spec.base_height).collect();
    for st in &spec.stages[..depth - 1] {
        let r = st.cuts as u64;
        let mut frontier = (layout.len() as u64)
            .checked_mul(r)
            .ok_or(Error::Overflow("cell grid"))?;
        let mut next = Vec::with_capacity(st.next_height(layout.len() as u64)? as usize);
        for (i, s) in st.spacers.iter().enumerate() {
            next.extend(layout.iter().map(|c| c * r + i as u64));
            for _ in 0..*s {
                next.push(frontier);
                frontier += 1;
            }
        }
        layout = next;
    }
    Ok(layout)
}

#[derive(Clone, Debug, PartialEq)]
pub struct RhoBounds<S> {
    /// Mass of cells whose images differ (neither escaping).
    pub lower: S,
    /// `lower` plus the mass of cells where at least one image escapes.
    pub upper: S,
    pub disagreeing: u64,
    pub escaping: u64,
}

/// Finite-stage bounds on `mu(supp(T_a^{-1} T_b))` for two specs with the
/// same cell structure at `depth` (equal `h_N` and `w_N`).
pub fn rho_distance<S: Scalar>(a: &RankOneSpec, b: &RankOneSpec, depth: usize) -> Result<RhoBounds<S>> {
    let (ha, hb) = (a.height(depth)?, b.height(depth)?);
    let (wa, wb) = (a.width::<crate::Rational>(depth)?, b.width::<crate::Rational>(depth)?);
    if ha != hb || wa != wb {
        return Err(Error::IncompatibleCells(format!(
            "depth {depth}: heights {ha} vs {hb}, widths {wa} vs {wb}"
        )));
    }
    let image = |spec: &RankOneSpec| -> Result<Vec<Option<u64>>> {
        let layout = cell_layout(spec, depth)?;
        let mut img = vec![None; layout.len()];
        for w in layout.windows(2) {
            img[w[0] as usize] = Some(w[1]);
        }
        Ok(img)
    };
    let (ia, ib) = (image(a)?, image(b)?);
    let mut disagreeing = 0u64;
    let mut escaping = 0u64;
    for (x, y) in ia.iter().zip(&ib) {
        match (x, y) {
            (Some(x), Some(y)) if x != y => disagreeing += 1,
            (Some(_), Some(_)) => {}
            _ => escaping += 1,
        }
    }
    let w = a.width::<S>(depth)?;
    let lower = S::from_count(disagreeing) * w.clone();
    Ok(RhoBounds {
        upper: lower.clone() + S::from_count(escaping) * w,
        lower,
        disagreeing,
        escaping,
    })
}
