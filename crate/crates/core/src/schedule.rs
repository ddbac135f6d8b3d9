//! Interleaved interval systems `I_n, Ĩ_n, J_n, J̃_n` on a finite horizon.
//!
//! The `I` and `J` intervals alternate and overlap slightly; together they
//! cover `[1, horizon]`. `Ĩ_n` is the gap between `I_n` and `I_{n+1}` (so it
//! sits inside `J_n`) and `J̃_n` is the gap between `J_{n-1}` and `J_n` (inside
//! `I_n`). `S` kills correlations on every `I_n` and behaves generically on
//! `Ĩ_n`; `T` does the same with the roles swapped.

use std::fmt;

use num_traits::ToPrimitive;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::scalar::{parse_rational, Rational, Scalar};

/// Closed, non-empty integer interval `[start, end]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Interval {
    pub start: u64,
    pub end: u64,
}

impl Interval {
    /// `None` when `start > end`.
    pub fn new(start: u64, end: u64) -> Option<Self> {
        (start <= end).then_some(Self { start, end })
    }

    pub fn len(&self) -> u64 {
        self.end - self.start + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn contains(&self, n: u64) -> bool {
        self.start <= n && n <= self.end
    }

    pub fn contains_interval(&self, other: &Interval) -> bool {
        self.start <= other.start && other.end <= self.end
    }

    pub fn iter(&self) -> std::ops::RangeInclusive<u64> {
        self.start..=self.end
    }
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[{}, {}]", self.start, self.end)
    }
}

fn show(iv: &Option<Interval>) -> String {
    iv.map_or_else(|| "[]".to_string(), |i| i.to_string())
}

impl Serialize for Interval {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        [self.start, self.end].serialize(s)
    }
}

impl<'de> Deserialize<'de> for Interval {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let [a, b] = <[u64; 2]>::deserialize(d)?;
        Interval::new(a, b).ok_or_else(|| serde::de::Error::custom(format!("interval [{a}, {b}] is reversed")))
    }
}

/// `Option<Interval>` as `[a, b]` or `[]`.
pub mod maybe_interval {
    use super::Interval;
    use serde::{de::Error, Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(v: &Option<Interval>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            Some(i) => [i.start, i.end].serialize(s),
            None => <[u64; 0]>::default().serialize(s),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<Interval>, D::Error> {
        let v = Vec::<u64>::deserialize(d)?;
        match v.as_slice() {
            [] => Ok(None),
            [a, b] => Interval::new(*a, *b)
                .map(Some)
                .ok_or_else(|| D::Error::custom(format!("interval [{a}, {b}] is reversed"))),
            _ => Err(D::Error::custom("an interval is [start, end] or []")),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Block {
    pub i: Interval,
    #[serde(with = "maybe_interval", default)]
    pub i_tilde: Option<Interval>,
    #[serde(with = "maybe_interval", default)]
    pub j: Option<Interval>,
    #[serde(with = "maybe_interval", default)]
    pub j_tilde: Option<Interval>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntervalSchedule {
    pub horizon: u64,
    pub blocks: Vec<Block>,
}

/// Result of [`validate_schedule`]; never an error, always a list.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ScheduleReport {
    pub violations: Vec<String>,
    pub first_uncovered: Option<u64>,
}

impl ScheduleReport {
    pub fn is_valid(&self) -> bool {
        self.violations.is_empty()
    }
}

impl IntervalSchedule {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("schedule serializes")
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn i_intervals(&self) -> impl Iterator<Item = Interval> + '_ {
        self.blocks.iter().map(|b| b.i)
    }

    pub fn j_intervals(&self) -> impl Iterator<Item = Interval> + '_ {
        self.blocks.iter().filter_map(|b| b.j)
    }
}

/// Overlap between consecutive intervals: one twentieth of the previous length.
fn overlap(prev: Interval) -> u64 {
    (prev.end - prev.start) / 20
}

fn ceil_mul(x: u64, g: &Rational) -> Result<u64> {
    let v = (g * Rational::from_integer(x.into())).ceil();
    v.to_integer().to_u64().ok_or(Error::Overflow("schedule end"))
}

/// Geometric interleaved schedule covering `[1, horizon]`.
///
/// The first interval is `I_1 = [1, ceil(growth)]`. Each later interval starts
/// one twentieth of its predecessor's length before the predecessor ends and
/// ends at `max(prev_end + 2, ceil(prev_end * growth))`, clipped to the
/// horizon. `seed_lengths[k]` overrides the length of the `k`-th interval in
/// the alternating order `I_1, J_1, I_2, ...`.
pub fn generate_schedule(growth: &Rational, horizon: u64, seed_lengths: &[u64]) -> Result<IntervalSchedule> {
    if horizon == 0 {
        return Err(Error::InvalidArgument("horizon must be at least 1".into()));
    }
    if *growth < Rational::from_integer(2.into()) {
        return Err(Error::InfeasibleSchedule(format!("growth {} is below 2", growth.to_text())));
    }
    if let Some(k) = seed_lengths.iter().position(|&l| l == 0) {
        return Err(Error::InfeasibleSchedule(format!("seed length #{} is zero", k + 1)));
    }

    let mut chain: Vec<Interval> = Vec::new();
    loop {
        let k = chain.len();
        let start = match chain.last() {
            None => 1,
            Some(p) => p.end + 1 - overlap(*p),
        };
        let end = match (seed_lengths.get(k), chain.last()) {
            (Some(&len), _) => start
                .checked_add(len - 1)
                .ok_or(Error::Overflow("schedule end"))?,
            (None, None) => ceil_mul(1, growth)?,
            (None, Some(p)) => (p.end + 2).max(ceil_mul(p.end, growth)?),
        };
        let iv = Interval::new(start, end.min(horizon)).ok_or_else(|| {
            Error::InfeasibleSchedule(format!("interval #{} would start at {start} beyond its end", k + 1))
        })?;
        chain.push(iv);
        if iv.end >= horizon {
            break;
        }
    }

    let is: Vec<Interval> = chain.iter().step_by(2).copied().collect();
    let js: Vec<Interval> = chain.iter().skip(1).step_by(2).copied().collect();
    let blocks = (0..is.len())
        .map(|n| {
            let j = js.get(n).copied();
            let i_tilde = j.and_then(|j| {
                let end = is.get(n + 1).map_or(j.end, |next| next.start - 1);
                Interval::new(is[n].end + 1, end)
            });
            let j_tilde = j.and_then(|j| {
                let start = if n == 0 { is[0].start } else { js[n - 1].end + 1 };
                Interval::new(start, j.start - 1)
            });
            Block {
                i: is[n],
                i_tilde,
                j,
                j_tilde,
            }
        })
        .collect();

    let schedule = IntervalSchedule { horizon, blocks };
    let report = validate_schedule(&schedule);
    if !report.is_valid() {
        return Err(Error::InfeasibleSchedule(report.violations.join("; ")));
    }
    Ok(schedule)
}

/// Checks containment, coverage, monotonicity and the alternating layout.
pub fn validate_schedule(s: &IntervalSchedule) -> ScheduleReport {
    let mut v = Vec::new();
    if s.blocks.is_empty() {
        v.push("no blocks".to_string());
    }
    for (idx, b) in s.blocks.iter().enumerate() {
        let n = idx + 1;
        if b.i.start == 0 {
            v.push(format!("I_{n} = {} starts below 1", b.i));
        }
        match (b.i_tilde, b.j) {
            (Some(it), Some(j)) if !j.contains_interval(&it) => {
                v.push(format!("containment: Ĩ_{n} = {it} ⊄ J_{n} = {j}"))
            }
            (Some(it), None) => v.push(format!("containment: Ĩ_{n} = {it} ⊄ J_{n} = []")),
            _ => {}
        }
        if let Some(jt) = b.j_tilde {
            if !b.i.contains_interval(&jt) {
                v.push(format!("containment: J̃_{n} = {jt} ⊄ I_{n} = {}", b.i));
            }
        }
        if let Some(j) = b.j {
            if !(b.i.start < j.start && b.i.end < j.end) {
                v.push(format!("layout: I_{n} = {} must start and end before J_{n} = {j}", b.i));
            }
        } else if idx + 1 != s.blocks.len() {
            v.push(format!("layout: J_{n} is empty but is not the last J"));
        }
        if let Some(it) = b.i_tilde {
            let below_next = s.blocks.get(idx + 1).is_none_or(|nb| it.end < nb.i.start);
            if it.start <= b.i.end || !below_next {
                v.push(format!("layout: Ĩ_{n} = {it} is not strictly between I_{n} and I_{}", n + 1));
            }
        }
        if let Some(jt) = b.j_tilde {
            let above_prev = idx == 0 || s.blocks[idx - 1].j.is_some_and(|pj| jt.start > pj.end);
            let below = b.j.is_some_and(|j| jt.end < j.start);
            if !above_prev || !below {
                v.push(format!("layout: J̃_{n} = {jt} is not strictly between J_{} and J_{n}", n - 1));
            }
        }
        if let Some(nb) = s.blocks.get(idx + 1) {
            if b.i.end >= nb.i.start {
                v.push(format!("monotone: I_{n} = {} overlaps I_{} = {}", b.i, n + 1, nb.i));
            }
            if let (Some(j), Some(nj)) = (b.j, nb.j) {
                if j.end >= nj.start {
                    v.push(format!("monotone: J_{n} = {j} overlaps J_{} = {nj}", n + 1));
                }
            }
        }
    }

    let mut covering: Vec<Interval> = s.i_intervals().chain(s.j_intervals()).collect();
    covering.sort();
    let mut next = 1u64;
    for iv in covering {
        if iv.start > next {
            break;
        }
        next = next.max(iv.end.saturating_add(1));
    }
    let first_uncovered = (next <= s.horizon).then_some(next);
    if let Some(n) = first_uncovered {
        v.push(format!("uncovered: {n}"));
    }
    ScheduleReport {
        violations: v,
        first_uncovered,
    }
}

impl fmt::Display for IntervalSchedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "horizon {}", self.horizon)?;
        for (k, b) in self.blocks.iter().enumerate() {
            writeln!(
                f,
                "{:>3}  I={}  Ĩ={}  J={}  J̃={}",
                k + 1,
                b.i,
                show(&b.i_tilde),
                show(&b.j),
                show(&b.j_tilde)
            )?;
        }
        Ok(())
    }
}

/// Parses `"10"`, `"5/2"` or `"2.5"` as a growth factor.
pub fn parse_growth(text: &str) -> Result<Rational> {
    parse_rational(text).ok_or_else(|| Error::Parse(format!("bad growth {text:?}")))
}
