//! Setups (idealized experiments) and their `and` / `or` composition.
//!
//! A setup is a source event, a time-ordered list of filters and a detector
//! event. Setups are kept in canonical form (filters sorted by time, holes
//! sorted) so that derived `PartialEq` is exactly "same filters and holes".

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::{Event, LatticeConfig};

/// An instantaneous screen at `time` that is opaque except at `holes`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "FilterFile", into = "FilterFile")]
pub struct FilterSpec {
    time: usize,
    holes: BTreeSet<usize>,
}

impl FilterSpec {
    pub fn new(time: usize, holes: impl IntoIterator<Item = usize>) -> Result<Self> {
        let holes: BTreeSet<usize> = holes.into_iter().collect();
        if holes.is_empty() {
            return Err(Error::InvalidSetup(format!(
                "filter at t={time} has no holes; use FilterSpec::blocking"
            )));
        }
        Ok(FilterSpec { time, holes })
    }

    /// A filter with no holes at all. No path survives it.
    pub fn blocking(time: usize) -> Self {
        FilterSpec {
            time,
            holes: BTreeSet::new(),
        }
    }

    /// A filter with every site open, equivalent to no filter.
    pub fn sigma(time: usize, num_sites: usize) -> Self {
        FilterSpec {
            time,
            holes: (0..num_sites).collect(),
        }
    }

    pub fn single(time: usize, site: usize) -> Self {
        FilterSpec {
            time,
            holes: BTreeSet::from([site]),
        }
    }

    pub fn time(&self) -> usize {
        self.time
    }

    pub fn holes(&self) -> &BTreeSet<usize> {
        &self.holes
    }

    pub fn is_blocking(&self) -> bool {
        self.holes.is_empty()
    }

    pub fn single_hole(&self) -> Option<usize> {
        if self.holes.len() == 1 {
            self.holes.first().copied()
        } else {
            None
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct FilterFile {
    time: usize,
    holes: Vec<usize>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    blocking: bool,
}

impl TryFrom<FilterFile> for FilterSpec {
    type Error = Error;

    fn try_from(f: FilterFile) -> Result<Self> {
        if f.blocking {
            if !f.holes.is_empty() {
                return Err(Error::InvalidSetup(format!(
                    "blocking filter at t={} lists holes",
                    f.time
                )));
            }
            return Ok(FilterSpec::blocking(f.time));
        }
        FilterSpec::new(f.time, f.holes)
    }
}

impl From<FilterSpec> for FilterFile {
    fn from(f: FilterSpec) -> Self {
        FilterFile {
            time: f.time,
            blocking: f.holes.is_empty(),
            holes: f.holes.into_iter().collect(),
        }
    }
}

/// `[x_f, s_N, ..., s_1, x_i]`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "SetupFile", into = "SetupFile")]
pub struct Setup {
    source: Event,
    detector: Event,
    filters: Vec<FilterSpec>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct SetupFile {
    source: Event,
    detector: Event,
    #[serde(default)]
    filters: Vec<FilterSpec>,
}

impl TryFrom<SetupFile> for Setup {
    type Error = Error;

    fn try_from(f: SetupFile) -> Result<Self> {
        Setup::new(f.source, f.detector, f.filters)
    }
}

impl From<Setup> for SetupFile {
    fn from(s: Setup) -> Self {
        SetupFile {
            source: s.source,
            detector: s.detector,
            filters: s.filters,
        }
    }
}

impl Setup {
    pub fn new(source: Event, detector: Event, mut filters: Vec<FilterSpec>) -> Result<Self> {
        if source.time >= detector.time {
            return Err(Error::InvalidSetup(format!(
                "source time {} must precede detector time {}",
                source.time, detector.time
            )));
        }
        filters.sort_by_key(|f| f.time);
        for w in filters.windows(2) {
            if w[0].time == w[1].time {
                return Err(Error::InvalidSetup(format!(
                    "two filters at time {}",
                    w[0].time
                )));
            }
        }
        for f in &filters {
            if f.time <= source.time || f.time >= detector.time {
                return Err(Error::InvalidSetup(format!(
                    "filter time {} outside ({}, {})",
                    f.time, source.time, detector.time
                )));
            }
        }
        Ok(Setup {
            source,
            detector,
            filters,
        })
    }

    /// `[x_f, x_i]` with no filters.
    pub fn bare(source: Event, detector: Event) -> Result<Self> {
        Setup::new(source, detector, Vec::new())
    }

    pub fn source(&self) -> Event {
        self.source
    }

    pub fn detector(&self) -> Event {
        self.detector
    }

    pub fn filters(&self) -> &[FilterSpec] {
        &self.filters
    }

    pub fn filter_at(&self, time: usize) -> Option<&FilterSpec> {
        self.filters
            .binary_search_by_key(&time, |f| f.time)
            .ok()
            .map(|i| &self.filters[i])
    }

    /// Interior times that carry no filter.
    pub fn free_times(&self) -> Vec<usize> {
        (self.source.time + 1..self.detector.time)
            .filter(|&t| self.filter_at(t).is_none())
            .collect()
    }

    /// Times of filters with exactly one hole, where the setup splits.
    pub fn single_hole_times(&self) -> Vec<usize> {
        self.filters
            .iter()
            .filter(|f| f.single_hole().is_some())
            .map(|f| f.time)
            .collect()
    }

    /// Checks every site index against a lattice of `num_sites` sites.
    pub fn check_sites(&self, num_sites: usize) -> Result<()> {
        let bad = |what: &str, site: usize| {
            Err(Error::LatticeMismatch(format!(
                "{what} site {site} outside 0..{num_sites}"
            )))
        };
        if self.source.site >= num_sites {
            return bad("source", self.source.site);
        }
        if self.detector.site >= num_sites {
            return bad("detector", self.detector.site);
        }
        for f in &self.filters {
            if let Some(&h) = f.holes.iter().find(|&&h| h >= num_sites) {
                return bad("hole", h);
            }
        }
        Ok(())
    }

    /// Full validation against a lattice configuration.
    pub fn validate(&self, config: &LatticeConfig) -> Result<()> {
        self.check_sites(config.num_sites)?;
        if self.detector.time > config.num_steps {
            return Err(Error::LatticeMismatch(format!(
                "detector time {} beyond T = {}",
                self.detector.time, config.num_steps
            )));
        }
        // re-run the structural checks
        Setup::new(self.source, self.detector, self.filters.clone()).map(|_| ())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }
}

impl std::fmt::Display for Setup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "[{}", self.detector)?;
        for filt in self.filters.iter().rev() {
            let holes: Vec<String> = filt.holes.iter().map(|h| h.to_string()).collect();
            write!(f, ", t{}:({})", filt.time, holes.join(","))?;
        }
        write!(f, ", {}]", self.source)
    }
}

/// Same source, detector, filters and holes.
pub fn equals(a: &Setup, b: &Setup) -> bool {
    a == b
}

/// Places `later` immediately after `earlier`. The junction event becomes a
/// single-hole filter of the merged setup.
pub fn and_compose(earlier: &Setup, later: &Setup) -> Result<Setup> {
    if earlier.detector != later.source {
        return Err(Error::NonConsecutive(format!(
            "earlier detector {} != later source {}",
            earlier.detector, later.source
        )));
    }
    let junction = earlier.detector;
    let mut filters = earlier.filters.clone();
    filters.push(FilterSpec::single(junction.time, junction.site));
    filters.extend(later.filters.iter().cloned());
    Setup::new(earlier.source, later.detector, filters)
}

/// Merges two setups that differ only in the holes of one filter.
pub fn or_compose(a: &Setup, b: &Setup) -> Result<Setup> {
    if a.source != b.source || a.detector != b.detector {
        return Err(Error::NotCombinable("source or detector differ".into()));
    }
    if a.filters.len() != b.filters.len()
        || a.filters
            .iter()
            .zip(&b.filters)
            .any(|(x, y)| x.time != y.time)
    {
        return Err(Error::NotCombinable("filter times differ".into()));
    }
    let differing: Vec<usize> = (0..a.filters.len())
        .filter(|&i| a.filters[i].holes != b.filters[i].holes)
        .collect();
    let idx = match differing.as_slice() {
        [i] => *i,
        [] => return Err(Error::NotCombinable("setups are identical".into())),
        _ => {
            return Err(Error::NotCombinable(format!(
                "setups differ at {} filters",
                differing.len()
            )))
        }
    };
    let (fa, fb) = (&a.filters[idx], &b.filters[idx]);
    if fa.is_blocking() || fb.is_blocking() {
        return Err(Error::NotCombinable(format!(
            "filter at t={} has no holes",
            fa.time
        )));
    }
    if !fa.holes.is_disjoint(&fb.holes) {
        return Err(Error::NotCombinable(format!(
            "holes overlap at t={}",
            fa.time
        )));
    }
    let mut filters = a.filters.clone();
    filters[idx].holes.extend(fb.holes.iter().copied());
    Setup::new(a.source, a.detector, filters)
}

/// Adds an all-holes filter at time `t`.
pub fn insert_sigma(a: &Setup, t: usize, num_sites: usize) -> Result<Setup> {
    if t <= a.source.time || t >= a.detector.time {
        return Err(Error::InvalidSetup(format!(
            "sigma time {t} outside ({}, {})",
            a.source.time, a.detector.time
        )));
    }
    if a.filter_at(t).is_some() {
        return Err(Error::InvalidSetup(format!(
            "filter already present at t={t}"
        )));
    }
    if num_sites == 0 {
        return Err(Error::InvalidSetup(
            "sigma filter needs at least one site".into(),
        ));
    }
    let mut filters = a.filters.clone();
    filters.push(FilterSpec::sigma(t, num_sites));
    Setup::new(a.source, a.detector, filters)
}

/// Inserts a sigma filter at every free interior time.
pub fn fill_sigma(a: &Setup, num_sites: usize) -> Result<Setup> {
    a.free_times()
        .into_iter()
        .try_fold(a.clone(), |s, t| insert_sigma(&s, t, num_sites))
}

/// Splits at the single-hole filter at time `t`; inverse of [`and_compose`].
pub fn decompose_at(a: &Setup, t: usize) -> Result<(Setup, Setup)> {
    let idx = a
        .filters
        .iter()
        .position(|f| f.time == t)
        .ok_or_else(|| Error::Decompose(format!("no filter at t={t}")))?;
    let site = a.filters[idx].single_hole().ok_or_else(|| {
        Error::Decompose(format!(
            "filter at t={t} has {} holes, need exactly one",
            a.filters[idx].holes.len()
        ))
    })?;
    let junction = Event::new(site, t);
    let earlier = Setup::new(a.source, junction, a.filters[..idx].to_vec())?;
    let later = Setup::new(junction, a.detector, a.filters[idx + 1..].to_vec())?;
    Ok((earlier, later))
}

/// Deterministic random setup on `config` with at most `max_filters` filters.
pub fn random_setup(config: &LatticeConfig, seed: u64, max_filters: usize) -> Result<Setup> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    sample_setup(config, max_filters, &mut rng)
}

/// Same as [`random_setup`] but drawing from a caller-owned generator.
pub fn sample_setup<R: Rng + ?Sized>(
    config: &LatticeConfig,
    max_filters: usize,
    rng: &mut R,
) -> Result<Setup> {
    config.validate()?;
    let t_total = config.num_steps;
    if max_filters >= t_total {
        return Err(Error::Infeasible(format!(
            "max_filters = {max_filters} needs more than T = {t_total} steps"
        )));
    }
    let span = rng.gen_range(max_filters + 1..=t_total);
    let t0 = rng.gen_range(0..=t_total - span);
    sample_setup_between(config.num_sites, t0, t0 + span, max_filters, rng)
}

/// Random setup with source at time `t0` and detector at time `t1`.
pub fn sample_setup_between<R: Rng + ?Sized>(
    num_sites: usize,
    t0: usize,
    t1: usize,
    max_filters: usize,
    rng: &mut R,
) -> Result<Setup> {
    if t1 <= t0 || max_filters >= t1 - t0 {
        return Err(Error::Infeasible(format!(
            "cannot place {max_filters} filters strictly inside ({t0}, {t1})"
        )));
    }
    let source = Event::new(rng.gen_range(0..num_sites), t0);
    let detector = Event::new(rng.gen_range(0..num_sites), t1);
    let count = rng.gen_range(0..=max_filters);
    let mut times: Vec<usize> = (t0 + 1..t1).collect();
    times.shuffle(rng);
    let filters = times[..count]
        .iter()
        .map(|&t| FilterSpec::new(t, random_holes(num_sites, rng)))
        .collect::<Result<Vec<_>>>()?;
    Setup::new(source, detector, filters)
}

/// Non-empty random hole set; single holes are over-represented so that
/// decomposition points are common.
pub fn random_holes<R: Rng + ?Sized>(num_sites: usize, rng: &mut R) -> BTreeSet<usize> {
    if rng.gen_bool(0.35) {
        return BTreeSet::from([rng.gen_range(0..num_sites)]);
    }
    loop {
        let holes: BTreeSet<usize> = (0..num_sites).filter(|_| rng.gen_bool(0.5)).collect();
        if !holes.is_empty() {
            return holes;
        }
    }
}

/// A random pair `(a, b)` for which `or_compose(a, b)` is allowed.
pub fn sample_or_pair<R: Rng + ?Sized>(
    config: &LatticeConfig,
    rng: &mut R,
) -> Result<(Setup, Setup)> {
    if config.num_sites < 2 || config.num_steps < 2 {
        return Err(Error::Infeasible("or-pairs need L >= 2 and T >= 2".into()));
    }
    let base = loop {
        let s = sample_setup(config, config.num_steps - 1, rng)?;
        if !s.filters.is_empty() {
            break s;
        }
    };
    let idx = rng.gen_range(0..base.filters.len());
    let mut sites: Vec<usize> = (0..config.num_sites).collect();
    sites.shuffle(rng);
    let n_a = rng.gen_range(1..config.num_sites);
    let n_b = rng.gen_range(1..=config.num_sites - n_a);
    let holes_a: BTreeSet<usize> = sites[..n_a].iter().copied().collect();
    let holes_b: BTreeSet<usize> = sites[n_a..n_a + n_b].iter().copied().collect();
    let with_holes = |holes: BTreeSet<usize>| {
        let mut filters = base.filters.clone();
        filters[idx].holes = holes;
        Setup::new(base.source, base.detector, filters)
    };
    Ok((with_holes(holes_a)?, with_holes(holes_b)?))
}

/// A random `(earlier, later)` pair for which `and_compose` is allowed.
pub fn sample_and_pair<R: Rng + ?Sized>(
    config: &LatticeConfig,
    rng: &mut R,
) -> Result<(Setup, Setup)> {
    if config.num_steps < 2 {
        return Err(Error::Infeasible("and-pairs need T >= 2".into()));
    }
    let t0 = rng.gen_range(0..=config.num_steps - 2);
    let t1 = rng.gen_range(t0 + 2..=config.num_steps);
    let tj = rng.gen_range(t0 + 1..t1);
    let mut earlier = sample_setup_between(config.num_sites, t0, tj, tj - t0 - 1, rng)?;
    let mut later = sample_setup_between(config.num_sites, tj, t1, t1 - tj - 1, rng)?;
    later.source = Event::new(rng.gen_range(0..config.num_sites), tj);
    earlier.detector = later.source;
    Ok((earlier, later))
}
