//! Weighted train tracks.
//!
//! A track is a graph whose vertices (switches) split their incident branch
//! ends into a large side and a small side. A weight vector assigns a
//! transverse measure to each branch; at every switch the large side carries
//! the sum of the small side. Integer weights are multiloops, recovered by
//! [`TrainTrack::trace_multiloop`].

use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::f64::consts::PI;
use thiserror::Error;

use crate::tolerance;

/// Largest track accepted by [`TrainTrack::cone_basis`].
pub const DEFAULT_BRANCH_CAP: usize = 24;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TrainTrackError {
    #[error("invalid train track: {0}")]
    InvalidTrack(String),
    #[error("weight vector has {got} entries but the track has {expected} branches")]
    IndexMismatch { expected: usize, got: usize },
    #[error("unknown branch id `{0}`")]
    UnknownBranch(String),
    #[error("track has {branches} branches, above the cap of {cap}")]
    TooLarge { branches: usize, cap: usize },
    #[error("no nonnegative integer solution in the search region")]
    Infeasible,
    #[error("invalid weights: {0}")]
    InvalidWeights(String),
    #[error("scale must be positive and finite, got {0}")]
    InvalidScale(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum End {
    Tail,
    Head,
}

impl End {
    pub fn opposite(self) -> End {
        match self {
            End::Tail => End::Head,
            End::Head => End::Tail,
        }
    }
}

/// A branch end, by branch index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BranchEnd {
    pub branch: usize,
    pub end: End,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Switch {
    pub id: String,
    pub large: Vec<BranchEnd>,
    pub small: Vec<BranchEnd>,
}

impl Switch {
    pub fn degree(&self) -> usize {
        self.large.len() + self.small.len()
    }
}

/// A validated train track.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TrainTrack {
    branches: Vec<String>,
    switches: Vec<Switch>,
    index: HashMap<String, usize>,
}

// ---- JSON schema -----------------------------------------------------------

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
enum RawId {
    Str(String),
    Int(i64),
}

impl RawId {
    fn into_string(self) -> String {
        match self {
            RawId::Str(s) => s,
            RawId::Int(i) => i.to_string(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawBranch {
    id: RawId,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawEnd {
    branch: RawId,
    end: End,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawSwitch {
    id: RawId,
    large: Vec<RawEnd>,
    small: Vec<RawEnd>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawTrack {
    branches: Vec<RawBranch>,
    switches: Vec<RawSwitch>,
}

/// Switch description used by [`TrainTrack::new`]: `(id, large, small)` with
/// ends given as `(branch id, end)`.
pub type SwitchSpec<'a> = (&'a str, Vec<(&'a str, End)>, Vec<(&'a str, End)>);

impl TrainTrack {
    pub fn new(branch_ids: &[&str], switches: &[SwitchSpec<'_>]) -> Result<Self, TrainTrackError> {
        let index = Self::build_index(branch_ids.iter().map(|s| s.to_string()))?;
        let resolve = |ends: &[(&str, End)]| -> Result<Vec<BranchEnd>, TrainTrackError> {
            ends.iter()
                .map(|(id, end)| {
                    index
                        .get(*id)
                        .map(|&branch| BranchEnd { branch, end: *end })
                        .ok_or_else(|| TrainTrackError::UnknownBranch(id.to_string()))
                })
                .collect()
        };
        let mut sw = Vec::with_capacity(switches.len());
        for (id, large, small) in switches {
            sw.push(Switch {
                id: id.to_string(),
                large: resolve(large)?,
                small: resolve(small)?,
            });
        }
        Self::from_parts(branch_ids.iter().map(|s| s.to_string()).collect(), sw)
    }

    fn build_index(
        ids: impl Iterator<Item = String>,
    ) -> Result<HashMap<String, usize>, TrainTrackError> {
        let mut index = HashMap::new();
        for (i, id) in ids.enumerate() {
            if index.insert(id.clone(), i).is_some() {
                return Err(TrainTrackError::InvalidTrack(format!(
                    "duplicate branch id `{id}`"
                )));
            }
        }
        Ok(index)
    }

    pub fn from_parts(
        branches: Vec<String>,
        switches: Vec<Switch>,
    ) -> Result<Self, TrainTrackError> {
        let index = Self::build_index(branches.iter().cloned())?;
        if branches.is_empty() {
            return Err(TrainTrackError::InvalidTrack("no branches".into()));
        }
        let mut seen: HashMap<BranchEnd, usize> = HashMap::new();
        for (k, s) in switches.iter().enumerate() {
            match (s.large.len(), s.small.len()) {
                (1, 1) | (1, 2) => {}
                (l, m) => {
                    return Err(TrainTrackError::InvalidTrack(format!(
                        "switch `{}` has {l} large and {m} small ends; expected 1 and 1 or 2",
                        s.id
                    )))
                }
            }
            for e in s.large.iter().chain(s.small.iter()) {
                if e.branch >= branches.len() {
                    return Err(TrainTrackError::InvalidTrack(format!(
                        "switch `{}` names branch {}",
                        s.id, e.branch
                    )));
                }
                if let Some(prev) = seen.insert(*e, k) {
                    return Err(TrainTrackError::InvalidTrack(format!(
                        "end {:?} of branch `{}` attached to switches `{}` and `{}`",
                        e.end, branches[e.branch], switches[prev].id, s.id
                    )));
                }
            }
        }
        for (b, id) in branches.iter().enumerate() {
            for end in [End::Tail, End::Head] {
                if !seen.contains_key(&BranchEnd { branch: b, end }) {
                    return Err(TrainTrackError::InvalidTrack(format!(
                        "{end:?} of branch `{id}` is free"
                    )));
                }
            }
        }
        Ok(TrainTrack {
            branches,
            switches,
            index,
        })
    }

    pub fn from_json(s: &str) -> Result<Self, TrainTrackError> {
        let raw: RawTrack =
            serde_json::from_str(s).map_err(|e| TrainTrackError::InvalidTrack(e.to_string()))?;
        let branches: Vec<String> = raw
            .branches
            .into_iter()
            .map(|b| b.id.into_string())
            .collect();
        let index = Self::build_index(branches.iter().cloned())?;
        let resolve = |ends: Vec<RawEnd>| -> Result<Vec<BranchEnd>, TrainTrackError> {
            ends.into_iter()
                .map(|e| {
                    let id = e.branch.into_string();
                    index
                        .get(&id)
                        .map(|&branch| BranchEnd { branch, end: e.end })
                        .ok_or(TrainTrackError::UnknownBranch(id))
                })
                .collect()
        };
        let mut switches = Vec::new();
        for s in raw.switches {
            switches.push(Switch {
                id: s.id.into_string(),
                large: resolve(s.large)?,
                small: resolve(s.small)?,
            });
        }
        Self::from_parts(branches, switches)
    }

    pub fn to_json(&self) -> String {
        let end = |e: &BranchEnd| RawEnd {
            branch: RawId::Str(self.branches[e.branch].clone()),
            end: e.end,
        };
        let raw = RawTrack {
            branches: self
                .branches
                .iter()
                .map(|id| RawBranch {
                    id: RawId::Str(id.clone()),
                })
                .collect(),
            switches: self
                .switches
                .iter()
                .map(|s| RawSwitch {
                    id: RawId::Str(s.id.clone()),
                    large: s.large.iter().map(end).collect(),
                    small: s.small.iter().map(end).collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&raw).expect("track serializes")
    }

    pub fn num_branches(&self) -> usize {
        self.branches.len()
    }

    pub fn branch_ids(&self) -> &[String] {
        &self.branches
    }

    pub fn branch_index(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn switches(&self) -> &[Switch] {
        &self.switches
    }

    /// The switch holding a given branch end, and whether the end is large.
    pub fn switch_of(&self, e: BranchEnd) -> (usize, bool) {
        for (k, s) in self.switches.iter().enumerate() {
            if s.large.contains(&e) {
                return (k, true);
            }
            if s.small.contains(&e) {
                return (k, false);
            }
        }
        unreachable!("every end is attached by construction")
    }

    /// Switch equations `sum(large) - sum(small) = 0` as integer rows, with
    /// vanishing rows dropped and duplicates merged.
    pub fn switch_rows(&self) -> Vec<Vec<i64>> {
        let n = self.num_branches();
        let mut rows: Vec<Vec<i64>> = Vec::new();
        for s in &self.switches {
            let mut row = vec![0i64; n];
            for e in &s.large {
                row[e.branch] += 1;
            }
            for e in &s.small {
                row[e.branch] -= 1;
            }
            if row.iter().any(|&x| x != 0) && !rows.contains(&row) {
                rows.push(row);
            }
        }
        rows
    }

    // ---- weights -----------------------------------------------------------

    pub fn weights_from_map(
        &self,
        map: &BTreeMap<String, f64>,
    ) -> Result<WeightVector, TrainTrackError> {
        let mut v = vec![f64::NAN; self.num_branches()];
        for (id, &w) in map {
            let i = self
                .branch_index(id)
                .ok_or_else(|| TrainTrackError::UnknownBranch(id.clone()))?;
            v[i] = w;
        }
        if let Some(i) = v.iter().position(|x| x.is_nan()) {
            return Err(TrainTrackError::InvalidWeights(format!(
                "missing weight for `{}`",
                self.branches[i]
            )));
        }
        Ok(WeightVector(v))
    }

    pub fn weights_to_map(&self, w: &WeightVector) -> BTreeMap<String, f64> {
        self.branches
            .iter()
            .cloned()
            .zip(w.0.iter().copied())
            .collect()
    }

    pub fn validate_weights(&self, w: &WeightVector) -> Result<ValidationReport, TrainTrackError> {
        self.check_len(w.len())?;
        let tol = tolerance::geometric();
        let mut report = ValidationReport::default();
        for (b, &x) in w.0.iter().enumerate() {
            if !(x >= 0.0) || !x.is_finite() {
                report.negative.push(b);
            }
        }
        for (k, s) in self.switches.iter().enumerate() {
            let large: f64 = s.large.iter().map(|e| w.0[e.branch]).sum();
            let small: f64 = s.small.iter().map(|e| w.0[e.branch]).sum();
            let residual = large - small;
            if !(residual.abs() <= tol * large.abs().max(1.0)) {
                report.violations.push(SwitchViolation {
                    switch: k,
                    id: s.id.clone(),
                    residual,
                });
            }
        }
        Ok(report)
    }

    pub fn validate_integer(&self, m: &IntegerWeights) -> Result<bool, TrainTrackError> {
        self.check_len(m.0.len())?;
        if m.0.iter().any(|&x| x < 0) {
            return Ok(false);
        }
        Ok(self.switch_rows().iter().all(|row| dot_i(row, &m.0) == 0))
    }

    fn check_len(&self, got: usize) -> Result<(), TrainTrackError> {
        if got == self.num_branches() {
            Ok(())
        } else {
            Err(TrainTrackError::IndexMismatch {
                expected: self.num_branches(),
                got,
            })
        }
    }

    // ---- cone ----------------------------------------------------------------

    pub fn cone_basis(&self) -> Result<Vec<IntegerWeights>, TrainTrackError> {
        self.cone_basis_capped(DEFAULT_BRANCH_CAP)
    }

    /// Extreme rays of the switch-condition cone, primitive and sorted.
    /// Every integral point of the cone is a nonnegative rational combination
    /// of them.
    pub fn cone_basis_capped(&self, cap: usize) -> Result<Vec<IntegerWeights>, TrainTrackError> {
        let n = self.num_branches();
        if n > cap {
            return Err(TrainTrackError::TooLarge { branches: n, cap });
        }
        let mut rays: Vec<Vec<i64>> = (0..n)
            .map(|i| {
                let mut e = vec![0; n];
                e[i] = 1;
                e
            })
            .collect();
        for row in self.switch_rows() {
            rays = dd_step(&rays, &row);
        }
        rays.sort_by(|a, b| b.cmp(a));
        Ok(rays.into_iter().map(IntegerWeights).collect())
    }

    // ---- approximation -----------------------------------------------------

    /// Nonnegative integer weights `m` satisfying the switch conditions and
    /// minimising `max_i |2 pi m_i - t w_i|`; ties go to the lexicographically
    /// smallest `m`.
    pub fn approximate_ray(
        &self,
        w: &WeightVector,
        t: f64,
    ) -> Result<ApproxResult, TrainTrackError> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(TrainTrackError::InvalidScale(t));
        }
        let report = self.validate_weights(w)?;
        if !report.is_ok() {
            return Err(TrainTrackError::InvalidWeights(report.to_string()));
        }
        let target: Vec<f64> = w.0.iter().map(|&x| t * x).collect();
        let gens = self.cone_basis()?;
        let start = greedy_floor(&gens, &target);
        let start = local_search(&gens, &target, start);
        let best = exact_search(self.num_branches(), &self.switch_rows(), &target, start)
            .ok_or(TrainTrackError::Infeasible)?;
        Ok(ApproxResult::new(t, IntegerWeights(best), &target))
    }

    // ---- multiloops ----------------------------------------------------------

    /// Lays `m_i` strands on branch `i` and glues them order-preservingly at
    /// every switch: the small ends, concatenated in listed order, align
    /// with the large end. Strand `k` at the tail of a branch is strand `k`
    /// at its head.
    pub fn trace_multiloop(&self, m: &IntegerWeights) -> Result<Multiloop, TrainTrackError> {
        if !self.validate_integer(m)? {
            return Err(TrainTrackError::InvalidWeights(
                "integer weights violate the switch conditions".into(),
            ));
        }
        let counts: Vec<usize> = m.0.iter().map(|&x| x as usize).collect();
        let offset: Vec<usize> = counts
            .iter()
            .scan(0usize, |acc, &c| {
                let o = *acc;
                *acc += c;
                Some(o)
            })
            .collect();
        let total: usize = counts.iter().sum();
        // Strand-end ids: 2 * strand + (0 tail | 1 head).
        let node = |b: usize, k: usize, e: End| 2 * (offset[b] + k) + usize::from(e == End::Head);
        let mut partner = vec![usize::MAX; 2 * total];
        for s in &self.switches {
            let expand = |ends: &[BranchEnd]| -> Vec<usize> {
                ends.iter()
                    .flat_map(|e| (0..counts[e.branch]).map(move |k| node(e.branch, k, e.end)))
                    .collect()
            };
            let (l, r) = (expand(&s.large), expand(&s.small));
            debug_assert_eq!(l.len(), r.len());
            for (x, y) in l.into_iter().zip(r) {
                partner[x] = y;
                partner[y] = x;
            }
        }
        let mut strand_of = Vec::with_capacity(total);
        for (b, &c) in counts.iter().enumerate() {
            strand_of.extend(std::iter::repeat_n(b, c));
        }
        let mut visited = vec![false; total];
        let mut loops = Vec::new();
        for s0 in 0..total {
            if visited[s0] {
                continue;
            }
            let mut steps = Vec::new();
            // Leave strand s0 through its head.
            let mut cur = 2 * s0 + 1;
            let mut dir = Direction::Forward;
            let mut strand = s0;
            loop {
                visited[strand] = true;
                steps.push(Step {
                    branch: strand_of[strand],
                    direction: dir,
                });
                let next = partner[cur];
                strand = next / 2;
                if strand == s0 && next == 2 * s0 {
                    break;
                }
                // Entering through a tail means running forward.
                dir = if next % 2 == 0 {
                    Direction::Forward
                } else {
                    Direction::Backward
                };
                cur = next ^ 1;
            }
            loops.push(Loop { steps });
        }
        Ok(Multiloop { loops })
    }
}

fn dot_i(a: &[i64], b: &[i64]) -> i64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn gcd(a: i64, b: i64) -> i64 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

fn primitive(v: Vec<i64>) -> Vec<i64> {
    let g = v.iter().fold(0, |g, &x| gcd(g, x));
    if g > 1 {
        v.into_iter().map(|x| x / g).collect()
    } else {
        v
    }
}

fn zero_set(v: &[i64]) -> Vec<bool> {
    v.iter().map(|&x| x == 0).collect()
}

/// One double-description step: intersect the cone spanned by the extreme
/// rays `rays` (inside the nonnegative orthant) with the hyperplane
/// `row . x = 0`.
fn dd_step(rays: &[Vec<i64>], row: &[i64]) -> Vec<Vec<i64>> {
    let vals: Vec<i64> = rays.iter().map(|r| dot_i(row, r)).collect();
    let zs: Vec<Vec<bool>> = rays.iter().map(|r| zero_set(r)).collect();
    let mut out: Vec<Vec<i64>> = rays
        .iter()
        .zip(&vals)
        .filter(|(_, &v)| v == 0)
        .map(|(r, _)| r.clone())
        .collect();
    for (i, p) in rays.iter().enumerate() {
        if vals[i] <= 0 {
            continue;
        }
        for (j, q) in rays.iter().enumerate() {
            if vals[j] >= 0 {
                continue;
            }
            let common: Vec<bool> = zs[i].iter().zip(&zs[j]).map(|(a, b)| *a && *b).collect();
            let adjacent = !(0..rays.len())
                .any(|k| k != i && k != j && common.iter().zip(&zs[k]).all(|(c, z)| !*c || *z));
            if !adjacent {
                continue;
            }
            let (a, b) = (vals[i], -vals[j]);
            let r: Vec<i64> = p.iter().zip(q).map(|(&x, &y)| b * x + a * y).collect();
            out.push(primitive(r));
        }
    }
    out.sort();
    out.dedup();
    out
}

fn max_error(m: &[i64], target: &[f64]) -> f64 {
    m.iter()
        .zip(target)
        .map(|(&mi, &ti)| (2.0 * PI * mi as f64 - ti).abs())
        .fold(0.0, f64::max)
}

/// Floors a greedy decomposition of `target / 2 pi` into generators.
fn greedy_floor(gens: &[IntegerWeights], target: &[f64]) -> Vec<i64> {
    let n = target.len();
    let scale = target.iter().fold(1.0f64, |a, &b| a.max(b.abs())) / (2.0 * PI);
    let eps = 1e-12 * scale;
    let mut r: Vec<f64> = target.iter().map(|&x| x / (2.0 * PI)).collect();
    let mut m = vec![0i64; n];
    for _ in 0..=n {
        let mut best: Option<(f64, &IntegerWeights)> = None;
        for g in gens {
            let fits = g.0.iter().zip(&r).all(|(&gi, &ri)| gi == 0 || ri > eps);
            if !fits || g.0.iter().all(|&gi| gi == 0) {
                continue;
            }
            let lam =
                g.0.iter()
                    .zip(&r)
                    .filter(|(&gi, _)| gi > 0)
                    .map(|(&gi, &ri)| ri / gi as f64)
                    .fold(f64::INFINITY, f64::min);
            if best.is_none_or(|(b, _)| lam > b) {
                best = Some((lam, g));
            }
        }
        let Some((lam, g)) = best else { break };
        let k = lam.floor() as i64;
        for i in 0..n {
            r[i] -= lam * g.0[i] as f64;
            if r[i] <= eps {
                r[i] = 0.0;
            }
            m[i] += k * g.0[i];
        }
    }
    m
}

fn local_search(gens: &[IntegerWeights], target: &[f64], mut m: Vec<i64>) -> Vec<i64> {
    let mut err = max_error(&m, target);
    loop {
        let mut best: Option<(f64, Vec<i64>)> = None;
        for g in gens {
            for s in [1i64, -1] {
                let cand: Vec<i64> = m.iter().zip(&g.0).map(|(&a, &b)| a + s * b).collect();
                if cand.iter().any(|&x| x < 0) {
                    continue;
                }
                let e = max_error(&cand, target);
                if e < best.as_ref().map_or(err, |b| b.0) {
                    best = Some((e, cand));
                }
            }
        }
        match best {
            Some((e, cand)) => {
                err = e;
                m = cand;
            }
            None => return m,
        }
    }
}

struct Search<'a> {
    target: &'a [f64],
    /// Rows as sparse `(var, coeff)` lists.
    rows: Vec<Vec<(usize, i64)>>,
    rows_of: Vec<Vec<usize>>,
    assign: Vec<Option<i64>>,
    best: Vec<i64>,
    best_err: f64,
}

impl Search<'_> {
    fn in_box(&self, i: usize, v: i64) -> bool {
        v >= 0 && (2.0 * PI * v as f64 - self.target[i]).abs() <= self.best_err
    }

    fn range(&self, i: usize) -> (i64, i64) {
        let lo = ((self.target[i] - self.best_err) / (2.0 * PI))
            .ceil()
            .max(0.0) as i64;
        let hi = ((self.target[i] + self.best_err) / (2.0 * PI)).floor() as i64;
        (lo, hi)
    }

    /// Assigns `var = v` and forces every row with one free variable left.
    /// Returns false on contradiction; `trail` records assignments to undo.
    fn assign_and_propagate(&mut self, var: usize, v: i64, trail: &mut Vec<usize>) -> bool {
        let mut queue = vec![(var, v)];
        while let Some((i, val)) = queue.pop() {
            match self.assign[i] {
                Some(x) if x == val => continue,
                Some(_) => return false,
                None => {}
            }
            if !self.in_box(i, val) {
                return false;
            }
            self.assign[i] = Some(val);
            trail.push(i);
            for &r in &self.rows_of[i] {
                let mut free = None;
                let mut nfree = 0;
                let mut sum = 0i64;
                for &(j, c) in &self.rows[r] {
                    match self.assign[j] {
                        Some(x) => sum += c * x,
                        None => {
                            nfree += 1;
                            free = Some((j, c));
                        }
                    }
                }
                match (nfree, free) {
                    (0, _) if sum != 0 => return false,
                    (1, Some((j, c))) => {
                        if sum % c != 0 {
                            return false;
                        }
                        queue.push((j, -sum / c));
                    }
                    _ => {}
                }
            }
        }
        true
    }

    fn undo(&mut self, trail: &[usize]) {
        for &i in trail {
            self.assign[i] = None;
        }
    }

    fn dfs(&mut self) {
        let Some(var) = self.assign.iter().position(|a| a.is_none()) else {
            let m: Vec<i64> = self.assign.iter().map(|a| a.unwrap()).collect();
            let e = max_error(&m, self.target);
            if e < self.best_err || (e == self.best_err && m < self.best) {
                self.best_err = e;
                self.best = m;
            }
            return;
        };
        let (lo, hi) = self.range(var);
        let mut v = lo;
        while v <= hi {
            let mut trail = Vec::new();
            if self.assign_and_propagate(var, v, &mut trail) {
                self.dfs();
            }
            self.undo(&trail);
            // The incumbent may have shrunk the box.
            let (_, hi2) = self.range(var);
            if hi2 < v + 1 {
                break;
            }
            v += 1;
        }
    }
}

/// Branch-and-bound over the box `|2 pi m_i - target_i| <= err(incumbent)`.
fn exact_search(
    n: usize,
    rows: &[Vec<i64>],
    target: &[f64],
    incumbent: Vec<i64>,
) -> Option<Vec<i64>> {
    let sparse: Vec<Vec<(usize, i64)>> = rows
        .iter()
        .map(|r| {
            r.iter()
                .enumerate()
                .filter(|(_, &c)| c != 0)
                .map(|(j, &c)| (j, c))
                .collect()
        })
        .collect();
    let mut rows_of = vec![Vec::new(); n];
    for (k, r) in sparse.iter().enumerate() {
        for &(j, _) in r {
            rows_of[j].push(k);
        }
    }
    let best_err = max_error(&incumbent, target);
    let mut s = Search {
        target,
        rows: sparse,
        rows_of,
        assign: vec![None; n],
        best: incumbent,
        best_err,
    };
    s.dfs();
    Some(s.best)
}

// ---- value types -----------------------------------------------------------

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightVector(pub Vec<f64>);

impl WeightVector {
    pub fn zeros(n: usize) -> Self {
        WeightVector(vec![0.0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn add(&self, other: &WeightVector) -> Result<WeightVector, TrainTrackError> {
        if self.len() != other.len() {
            return Err(TrainTrackError::IndexMismatch {
                expected: self.len(),
                got: other.len(),
            });
        }
        Ok(WeightVector(
            self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect(),
        ))
    }

    pub fn scale(&self, s: f64) -> Result<WeightVector, TrainTrackError> {
        if !(s >= 0.0 && s.is_finite()) {
            return Err(TrainTrackError::InvalidScale(s));
        }
        Ok(WeightVector(self.0.iter().map(|a| a * s).collect()))
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        self.0.iter().zip(other).map(|(a, b)| a * b).sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct IntegerWeights(pub Vec<i64>);

impl IntegerWeights {
    pub fn to_real(&self) -> WeightVector {
        WeightVector(self.0.iter().map(|&x| x as f64).collect())
    }

    pub fn total(&self) -> i64 {
        self.0.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwitchViolation {
    pub switch: usize,
    pub id: String,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ValidationReport {
    pub violations: Vec<SwitchViolation>,
    /// Branches with negative or non-finite weight.
    pub negative: Vec<usize>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty() && self.negative.is_empty()
    }
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.is_ok() {
            return f.write_str("ok");
        }
        for v in &self.violations {
            write!(f, "switch `{}` residual {:e}; ", v.id, v.residual)?;
        }
        for b in &self.negative {
            write!(f, "branch {b} negative; ")?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ApproxResult {
    pub t: f64,
    pub weights: IntegerWeights,
    /// Signed errors `2 pi m_i - t w_i`.
    pub errors: Vec<f64>,
    pub d_achieved: f64,
}

impl ApproxResult {
    fn new(t: f64, weights: IntegerWeights, target: &[f64]) -> Self {
        let errors: Vec<f64> = weights
            .0
            .iter()
            .zip(target)
            .map(|(&m, &x)| 2.0 * PI * m as f64 - x)
            .collect();
        let d_achieved = errors.iter().fold(0.0f64, |a, e| a.max(e.abs()));
        ApproxResult {
            t,
            weights,
            errors,
            d_achieved,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Direction {
    Forward,
    Backward,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Step {
    pub branch: usize,
    pub direction: Direction,
}

/// A closed legal path, as the cyclic sequence of branches it runs along.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Loop {
    pub steps: Vec<Step>,
}

impl Loop {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    pub fn branch_counts(&self, n: usize) -> Vec<i64> {
        let mut c = vec![0; n];
        for s in &self.steps {
            c[s.branch] += 1;
        }
        c
    }

    pub fn branches(&self) -> Vec<usize> {
        self.steps.iter().map(|s| s.branch).collect()
    }

    /// Least rotation of the step sequence or of its reversal.
    pub fn canonical(&self) -> Loop {
        let flip = |d: Direction| match d {
            Direction::Forward => Direction::Backward,
            Direction::Backward => Direction::Forward,
        };
        let rev: Vec<Step> = self
            .steps
            .iter()
            .rev()
            .map(|s| Step {
                branch: s.branch,
                direction: flip(s.direction),
            })
            .collect();
        let mut best: Option<Vec<Step>> = None;
        for seq in [&self.steps, &rev] {
            for r in 0..seq.len() {
                let cand: Vec<Step> = seq[r..].iter().chain(&seq[..r]).copied().collect();
                if best.as_ref().is_none_or(|b| cand < *b) {
                    best = Some(cand);
                }
            }
        }
        Loop {
            steps: best.unwrap_or_default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Multiloop {
    pub loops: Vec<Loop>,
}

impl Multiloop {
    pub fn branch_counts(&self, n: usize) -> Vec<i64> {
        let mut c = vec![0; n];
        for l in &self.loops {
            for s in &l.steps {
                c[s.branch] += 1;
            }
        }
        c
    }

    /// Distinct loops with multiplicities, in order of first appearance.
    pub fn components(&self) -> Vec<(Loop, usize)> {
        let mut out: Vec<(Loop, usize)> = Vec::new();
        for l in &self.loops {
            let c = l.canonical();
            match out.iter_mut().find(|(x, _)| *x == c) {
                Some((_, k)) => *k += 1,
                None => out.push((c, 1)),
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use End::{Head, Tail};

    fn single_loop() -> TrainTrack {
        TrainTrack::new(&["a"], &[("s", vec![("a", Head)], vec![("a", Tail)])]).unwrap()
    }

    /// Figure-one switch: branches 1, 2 merge into 3; closed up by a
    /// degree-3 switch on the other side.
    fn y_track() -> TrainTrack {
        TrainTrack::new(
            &["w1", "w2", "w3"],
            &[
                ("s", vec![("w3", Tail)], vec![("w1", Head), ("w2", Head)]),
                ("s2", vec![("w3", Head)], vec![("w1", Tail), ("w2", Tail)]),
            ],
        )
        .unwrap()
    }

    #[test]
    fn validation_examples() {
        let t = y_track();
        assert!(t
            .validate_weights(&WeightVector(vec![1.0, 2.0, 3.0]))
            .unwrap()
            .is_ok());
        assert!(t.validate_weights(&WeightVector::zeros(3)).unwrap().is_ok());
        let r = t
            .validate_weights(&WeightVector(vec![1.0, 2.0, 4.0]))
            .unwrap();
        assert!(!r.is_ok());
        assert_eq!(r.violations[0].residual, 1.0);
        assert!(matches!(
            t.validate_weights(&WeightVector(vec![1.0])),
            Err(TrainTrackError::IndexMismatch {
                expected: 3,
                got: 1
            })
        ));
    }

    #[test]
    fn invalid_tracks_rejected() {
        assert!(TrainTrack::new(&["a"], &[("s", vec![("a", Head)], vec![])]).is_err());
        assert!(
            TrainTrack::new(&["a", "b"], &[("s", vec![("a", Head)], vec![("a", Tail)])]).is_err()
        );
        assert!(TrainTrack::new(&["a"], &[("s", vec![("x", Head)], vec![("a", Tail)])]).is_err());
    }

    #[test]
    fn cone_examples() {
        let one = single_loop().cone_basis().unwrap();
        assert_eq!(one, vec![IntegerWeights(vec![1])]);
        let par = TrainTrack::new(
            &["a", "b"],
            &[
                ("s1", vec![("a", Head)], vec![("b", Tail)]),
                ("s2", vec![("b", Head)], vec![("a", Tail)]),
            ],
        )
        .unwrap();
        assert_eq!(par.cone_basis().unwrap(), vec![IntegerWeights(vec![1, 1])]);
        let y = y_track().cone_basis().unwrap();
        assert_eq!(
            y,
            vec![IntegerWeights(vec![1, 0, 1]), IntegerWeights(vec![0, 1, 1])]
        );
        for g in &y {
            assert!(y_track().validate_integer(g).unwrap());
        }
    }

    #[test]
    fn cone_cap() {
        assert!(matches!(
            y_track().cone_basis_capped(2),
            Err(TrainTrackError::TooLarge { .. })
        ));
    }

    #[test]
    fn approximate_single_loop() {
        let t = single_loop();
        let r = t
            .approximate_ray(&WeightVector(vec![1.0]), 10.0 * PI)
            .unwrap();
        assert_eq!(r.weights.0, vec![5]);
        assert!(r.d_achieved < 1e-12);
        let r = t.approximate_ray(&WeightVector(vec![1.0]), 10.0).unwrap();
        // Brute force over m in 0..=4.
        let brute = (0..=4).min_by(|&a, &b| {
            let ea = (2.0 * PI * a as f64 - 10.0).abs();
            let eb = (2.0 * PI * b as f64 - 10.0).abs();
            ea.partial_cmp(&eb).unwrap()
        });
        assert_eq!(r.weights.0, vec![brute.unwrap()]);
        assert_eq!(r.weights.0, vec![2]);
        assert!((r.d_achieved - (4.0 * PI - 10.0).abs()).abs() < 1e-12);
    }

    #[test]
    fn approximate_rejects_bad_input() {
        let t = y_track();
        assert!(matches!(
            t.approximate_ray(&WeightVector(vec![1.0, 2.0, 4.0]), 1.0),
            Err(TrainTrackError::InvalidWeights(_))
        ));
        assert!(matches!(
            t.approximate_ray(&WeightVector(vec![1.0, 2.0, 3.0]), 0.0),
            Err(TrainTrackError::InvalidScale(_))
        ));
    }

    #[test]
    fn weight_arith_examples() {
        let a = WeightVector(vec![1.0, 2.0, 3.0]);
        assert_eq!(a.scale(2.0).unwrap().0, vec![2.0, 4.0, 6.0]);
        assert_eq!(a.add(&a).unwrap().0, vec![2.0, 4.0, 6.0]);
        let z = a.scale(0.0).unwrap();
        assert!(y_track().validate_weights(&z).unwrap().is_ok());
        assert!(a.add(&WeightVector(vec![1.0])).is_err());
    }

    #[test]
    fn trace_examples() {
        let t = single_loop();
        let ml = t.trace_multiloop(&IntegerWeights(vec![3])).unwrap();
        // Order-preserving gluing closes each strand on itself.
        assert_eq!(ml.loops.len(), 3);
        assert_eq!(ml.branch_counts(1), vec![3]);
        assert!(t
            .trace_multiloop(&IntegerWeights(vec![0]))
            .unwrap()
            .loops
            .is_empty());

        let y = y_track();
        let ml = y.trace_multiloop(&IntegerWeights(vec![1, 2, 3])).unwrap();
        assert_eq!(ml.branch_counts(3), vec![1, 2, 3]);
        assert!(ml.loops.len() <= 6);
        assert!(y.trace_multiloop(&IntegerWeights(vec![1, 2, 4])).is_err());
    }

    #[test]
    fn json_roundtrip() {
        let y = y_track();
        let back = TrainTrack::from_json(&y.to_json()).unwrap();
        assert_eq!(back, y);
        let numeric = r#"{"branches":[{"id":1}],"switches":[{"id":0,"large":[{"branch":1,"end":"head"}],"small":[{"branch":1,"end":"tail"}]}]}"#;
        let t = TrainTrack::from_json(numeric).unwrap();
        assert_eq!(t.branch_ids(), &["1".to_string()]);
    }

    #[test]
    fn canonical_loop_is_rotation_invariant() {
        let s = |b, d| Step {
            branch: b,
            direction: d,
        };
        let l1 = Loop {
            steps: vec![
                s(0, Direction::Forward),
                s(1, Direction::Forward),
                s(2, Direction::Backward),
            ],
        };
        let l2 = Loop {
            steps: vec![
                s(2, Direction::Backward),
                s(0, Direction::Forward),
                s(1, Direction::Forward),
            ],
        };
        assert_eq!(l1.canonical(), l2.canonical());
    }
}
