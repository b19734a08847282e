//! Three-index frequency tensors `h(n, n1, n2)`, their partition norms and random contractions.

use std::collections::{HashMap, HashSet};

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Result, ZyError};
use crate::rng::{Channel, GaussianSampler};
use crate::spectral::FreqIndex;

use super::matrix::{op_norm, NormEstimate, SparseMatrix, POWER_TOL};
use super::{in_shell, quantile, shell_points, Sign};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum TensorKind {
    /// `n1 = n2 - n`, window `N1^{2s+2g+}`, weight `<n1>^{-1}`.
    Lemma53,
    /// `n1 = n - n2`, window `N^{s+1/4+} N2^{3/4}`, weight `<n1>^{-1}`.
    Lemma54,
    /// `n2 = n - n1`, window `N2^{1+g+}`, weight `<n2>^{-1+g}`, localized to squares of side `N2`.
    Lemma55,
}

impl TensorKind {
    pub const ALL: [TensorKind; 3] = [TensorKind::Lemma53, TensorKind::Lemma54, TensorKind::Lemma55];

    pub fn name(self) -> &'static str {
        match self {
            TensorKind::Lemma53 => "lemma5_3",
            TensorKind::Lemma54 => "lemma5_4",
            TensorKind::Lemma55 => "lemma5_5",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        TensorKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| ZyError::Invalid(format!("unknown tensor kind '{s}'")))
    }
}

/// Position of an index in `h(n, n1, n2)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Slot {
    N = 0,
    N1 = 1,
    N2 = 2,
}

impl Slot {
    pub const ALL: [Slot; 3] = [Slot::N, Slot::N1, Slot::N2];

    pub fn name(self) -> &'static str {
        match self {
            Slot::N => "n",
            Slot::N1 => "n1",
            Slot::N2 => "n2",
        }
    }
}

/// Split of `{n, n1, n2}` into input indices `B` and output indices `C`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Partition {
    input: u8,
    output: u8,
}

impl Partition {
    pub fn new(input: &[Slot], output: &[Slot]) -> Result<Self> {
        let mask = |s: &[Slot]| s.iter().fold(0u8, |m, x| m | 1 << *x as u8);
        let (i, o) = (mask(input), mask(output));
        if i == 0 || o == 0 || i & o != 0 || i | o != 0b111 {
            return Err(ZyError::Invalid("partition must split {n, n1, n2} into two nonempty sets".into()));
        }
        Ok(Partition { input: i, output: o })
    }

    /// All six partitions.
    pub fn all() -> Vec<Partition> {
        (1u8..7).map(|i| Partition { input: i, output: 0b111 ^ i }).collect()
    }

    pub fn input(self) -> Vec<Slot> {
        Slot::ALL.into_iter().filter(|s| self.input & 1 << *s as u8 != 0).collect()
    }

    pub fn output(self) -> Vec<Slot> {
        Slot::ALL.into_iter().filter(|s| self.output & 1 << *s as u8 != 0).collect()
    }

    pub fn dual(self) -> Partition {
        Partition { input: self.output, output: self.input }
    }

    /// E.g. `n1n->n2`.
    pub fn name(self) -> String {
        let join = |v: Vec<Slot>| v.iter().map(|s| s.name()).collect::<String>();
        format!("{}->{}", join(self.input()), join(self.output()))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Entry {
    /// `[n, n1, n2]`
    pub idx: [FreqIndex; 3],
    pub value: Complex64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseTensor {
    pub entries: Vec<Entry>,
}

fn pack(idx: &[FreqIndex; 3], mask: u8) -> u128 {
    let mut key = 0u128;
    for s in 0..3 {
        if mask & 1 << s != 0 {
            let n = idx[s];
            key = key << 64 | (n.x as u32 as u128) << 32 | n.y as u32 as u128;
        }
    }
    key
}

impl SparseTensor {
    pub fn new(entries: Vec<Entry>) -> Self {
        SparseTensor { entries }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn sup_entry(&self) -> f64 {
        self.entries.iter().map(|e| e.value.norm()).fold(0.0, f64::max)
    }

    /// Matrix with rows indexed by output tuples and columns by input tuples.
    pub fn unfold(&self, p: Partition) -> SparseMatrix {
        let mut rows = HashMap::new();
        let mut cols = HashMap::new();
        let trip = self
            .entries
            .iter()
            .map(|e| {
                let nr = rows.len() as u32;
                let r = *rows.entry(pack(&e.idx, p.output)).or_insert(nr);
                let nc = cols.len() as u32;
                let c = *cols.entry(pack(&e.idx, p.input)).or_insert(nc);
                (r, c, e.value)
            })
            .collect();
        SparseMatrix::new(rows.len(), cols.len(), trip).expect("indices in range")
    }
}

/// `||h||_{n_B -> n_C}` by power iteration, or in closed form when one side is a single index
/// determined by the other.
pub fn tensor_norm(h: &SparseTensor, p: Partition) -> NormEstimate {
    op_norm(&h.unfold(p), POWER_TOL)
}

/// `sqrt(sup_C sum_B |h| * sup_B sum_C |h|)`.
pub fn schur_bound(h: &SparseTensor, p: Partition) -> f64 {
    h.unfold(p).schur_test()
}

/// Unimodular factor `exp(-i t |n_slot|^2)` or `exp(-i t |n_slot|)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PhaseDescriptor {
    pub slot: Slot,
    pub squared: bool,
    pub t: f64,
}

impl PhaseDescriptor {
    pub fn factor(&self, idx: &[FreqIndex; 3]) -> Complex64 {
        if self.t == 0.0 {
            return Complex64::new(1.0, 0.0);
        }
        let n = idx[self.slot as usize];
        let a = if self.squared { n.norm_sq() as f64 } else { n.norm() };
        Complex64::from_polar(1.0, -self.t * a)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TensorSpec {
    pub kind: TensorKind,
    pub n: u32,
    pub n1: u32,
    pub n2: u32,
    pub s: f64,
    pub gamma: f64,
    pub t: f64,
    /// Realizes the `+` in the window exponents.
    pub eps: f64,
    /// Implicit constant of the window; 0 gives an empty window.
    pub window_scale: f64,
    pub sign: Sign,
}

/// Phase function `|n1|^2 +- |n2| - |n|^2`.
pub fn phase_function(idx: &[FreqIndex; 3], sign: Sign) -> f64 {
    let [n, n1, n2] = *idx;
    (n1.norm_sq() - n.norm_sq()) as f64 + sign.value() * n2.norm()
}

fn pw(x: u32, e: f64) -> f64 {
    (x as f64).powf(e)
}

impl TensorSpec {
    /// `N = N1` and the default `N2` of the kind.
    pub fn new(kind: TensorKind, n1: u32, s: f64, gamma: f64) -> Self {
        TensorSpec::with_shells(kind, n1, n1, TensorSpec::default_n2(kind, n1), s, gamma)
    }

    pub fn with_shells(kind: TensorKind, n: u32, n1: u32, n2: u32, s: f64, gamma: f64) -> Self {
        TensorSpec { kind, n, n1, n2, s, gamma, t: 0.0, eps: 0.01, window_scale: 1.0, sign: Sign::Plus }
    }

    /// `2^{floor(log2 N1 / 2)}`, `N1/2` and `N1/4` respectively.
    pub fn default_n2(kind: TensorKind, n1: u32) -> u32 {
        match kind {
            TensorKind::Lemma53 => 1 << (n1.max(1).ilog2() / 2),
            TensorKind::Lemma54 => (n1 / 2).max(1),
            TensorKind::Lemma55 => (n1 / 4).max(1),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, d) in [("N", self.n), ("N1", self.n1), ("N2", self.n2)] {
            if !d.is_power_of_two() {
                return Err(ZyError::Invalid(format!("{name} = {d} is not dyadic")));
            }
        }
        if ![self.s, self.gamma, self.t, self.eps, self.window_scale].iter().all(|v| v.is_finite())
            || self.eps < 0.0
            || self.window_scale < 0.0
        {
            return Err(ZyError::Invalid("tensor parameters must be finite, eps and window scale nonnegative".into()));
        }
        if self.n > 2 * self.n1 || self.n1 > 2 * self.n {
            return Err(ZyError::Invalid(format!("need N1 ~ N, got N = {}, N1 = {}", self.n, self.n1)));
        }
        match self.kind {
            TensorKind::Lemma53 if 4 * self.n2 > self.n1 => {
                Err(ZyError::Invalid(format!("need N1 >> N2 (4 N2 <= N1), got N1 = {}, N2 = {}", self.n1, self.n2)))
            }
            TensorKind::Lemma54 | TensorKind::Lemma55 if self.n2 > self.n1 => {
                Err(ZyError::Invalid(format!("need N2 <= N1, got N1 = {}, N2 = {}", self.n1, self.n2)))
            }
            _ => Ok(()),
        }
    }

    pub fn window(&self) -> f64 {
        let e = self.eps;
        let base = match self.kind {
            TensorKind::Lemma53 => pw(self.n1, 2.0 * self.s + 2.0 * self.gamma + e),
            TensorKind::Lemma54 => pw(self.n, self.s + 0.25 + e) * pw(self.n2, 0.75),
            TensorKind::Lemma55 => pw(self.n2, 1.0 + self.gamma + e),
        };
        self.window_scale * base
    }

    pub fn phase(&self) -> PhaseDescriptor {
        match self.kind {
            TensorKind::Lemma53 | TensorKind::Lemma54 => PhaseDescriptor { slot: Slot::N1, squared: true, t: self.t },
            TensorKind::Lemma55 => PhaseDescriptor { slot: Slot::N2, squared: false, t: self.t },
        }
    }

    pub fn weight(&self, idx: &[FreqIndex; 3]) -> f64 {
        match self.kind {
            TensorKind::Lemma53 | TensorKind::Lemma54 => 1.0 / idx[1].bracket(),
            TensorKind::Lemma55 => idx[2].bracket().powf(self.gamma - 1.0),
        }
    }

    /// Linear relation among the indices.
    pub fn related(&self, idx: &[FreqIndex; 3]) -> bool {
        let [n, n1, n2] = *idx;
        match self.kind {
            TensorKind::Lemma53 => n1 == n2.sub(n),
            TensorKind::Lemma54 => n1 == n.sub(n2),
            TensorKind::Lemma55 => n2 == n.sub(n1),
        }
    }

    /// Every constraint of the support except ball localization.
    pub fn admits(&self, idx: &[FreqIndex; 3]) -> bool {
        let w = self.window();
        w > 0.0
            && self.related(idx)
            && in_shell(idx[0], self.n)
            && in_shell(idx[1], self.n1)
            && in_shell(idx[2], self.n2)
            && phase_function(idx, self.sign).abs() <= w
    }

    /// The two partitions of the lemma with their claimed bounds.
    pub fn claimed_bounds(&self) -> Vec<(Partition, f64)> {
        self.bounds_with(self.eps)
    }

    fn bounds_with(&self, e: f64) -> Vec<(Partition, f64)> {
        let (s, g, n1, n2) = (self.s, self.gamma, self.n1, self.n2);
        let roles = self.roles();
        let (a, b) = roles.partitions();
        let (x, y) = match self.kind {
            TensorKind::Lemma53 => (pw(n1, s + g - 0.5 + e) * pw(n2, -0.5) + pw(n1, -0.5 + e), pw(n1, -0.5 + e)),
            TensorKind::Lemma54 => (pw(n1, s / 2.0 - 0.5 + e), pw(n1, s / 2.0 - 0.375 + e) * pw(n2, -0.125) + pw(n1, -0.5)),
            TensorKind::Lemma55 => (pw(n2, -0.5 + 1.5 * g + e), pw(n2, -0.5 + 1.5 * g + e)),
        };
        vec![(a, x), (b, y)]
    }

    /// Claimed bound on the contracted random matrix, with the `+` dropped.
    pub fn random_matrix_bound(&self) -> f64 {
        self.bounds_with(0.0).into_iter().map(|b| b.1).fold(0.0, f64::max)
    }

    pub fn roles(&self) -> Roles {
        match self.kind {
            TensorKind::Lemma53 => Roles { input: Slot::N, output: Slot::N2, contracted: Slot::N1 },
            TensorKind::Lemma54 => Roles { input: Slot::N2, output: Slot::N, contracted: Slot::N1 },
            TensorKind::Lemma55 => Roles { input: Slot::N1, output: Slot::N, contracted: Slot::N2 },
        }
    }

    pub fn shells_label(&self) -> String {
        format!("N={} N1={} N2={}", self.n, self.n1, self.n2)
    }
}

/// How a tensor becomes a random matrix `H = sum_{contracted} h g`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Roles {
    pub input: Slot,
    pub output: Slot,
    pub contracted: Slot,
}

impl Roles {
    /// `(input + contracted -> output, input -> output + contracted)`.
    pub fn partitions(&self) -> (Partition, Partition) {
        (
            Partition::new(&[self.input, self.contracted], &[self.output]).expect("roles"),
            Partition::new(&[self.input], &[self.output, self.contracted]).expect("roles"),
        )
    }
}

/// Pair of squares `J_{1 l1}` (for `n1`) and `J_{2 l2}` (for `n`) of side `N2`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct BallPair {
    pub l1: (i32, i32),
    pub l2: (i32, i32),
}

impl BallPair {
    pub fn square_of(n: FreqIndex, side: u32) -> (i32, i32) {
        (n.x.div_euclid(side as i32), n.y.div_euclid(side as i32))
    }

    /// `l1 = l2 =` the diagonal square at distance about `N1` from the origin. On an axis the
    /// circles `|n| = const` run parallel to a square edge and the window admits almost nothing.
    pub fn representative(spec: &TensorSpec) -> BallPair {
        let k = (spec.n1 as f64 / (spec.n2 as f64 * std::f64::consts::SQRT_2)).floor() as i32;
        let l = (k, k);
        BallPair { l1: l, l2: l }
    }

    fn contains(&self, idx: &[FreqIndex; 3], side: u32) -> bool {
        BallPair::square_of(idx[1], side) == self.l1 && BallPair::square_of(idx[0], side) == self.l2
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DyadicTensor {
    pub spec: TensorSpec,
    pub window: f64,
    pub ball: Option<BallPair>,
    pub tensor: SparseTensor,
}

/// Integer range of `v` with `v.d` in `[lo, hi]` widened by one lattice step; exact filtering
/// happens afterwards.
fn strip(d: FreqIndex, lo: f64, hi: f64, bx: (i32, i32, i32, i32), mut f: impl FnMut(FreqIndex)) {
    let (x0, x1, y0, y1) = bx;
    for x in x0..=x1 {
        let (ya, yb) = if d.y == 0 {
            let v = (d.x * x) as f64;
            if v < lo - 1.0 || v > hi + 1.0 {
                continue;
            }
            (y0, y1)
        } else {
            let a = (lo - (d.x * x) as f64) / d.y as f64;
            let b = (hi - (d.x * x) as f64) / d.y as f64;
            let (a, b) = if a <= b { (a, b) } else { (b, a) };
            ((a.floor() as i32 - 1).max(y0), (b.ceil() as i32 + 1).min(y1))
        };
        for y in ya..=yb {
            f(FreqIndex::new(x, y));
        }
    }
}

fn enumerate(spec: &TensorSpec, ball: Option<BallPair>) -> Vec<Entry> {
    let w = spec.window();
    if w <= 0.0 {
        return Vec::new();
    }
    let phase = spec.phase();
    let sigma = spec.sign.value();
    // For fixed n2 the phase is affine in the free index v: phi = alpha v.n2 + c.
    shell_points(spec.n2)
        .par_iter()
        .flat_map_iter(|&n2| {
            let q = n2.norm_sq() as f64;
            let r = n2.norm();
            let (vdyad, alpha, c) = match spec.kind {
                TensorKind::Lemma53 => (spec.n1, 2.0, -q + sigma * r),
                TensorKind::Lemma54 => (spec.n, -2.0, q + sigma * r),
                TensorKind::Lemma55 => (spec.n1, -2.0, -q + sigma * r),
            };
            let (lo, hi) = ((-w - c) / alpha, (w - c) / alpha);
            let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
            let rad = 2 * vdyad as i32;
            let mut bx = (-rad, rad, -rad, rad);
            if let Some(b) = ball {
                let side = spec.n2 as i32;
                bx.0 = bx.0.max(b.l1.0 * side);
                bx.1 = bx.1.min(b.l1.0 * side + side - 1);
                bx.2 = bx.2.max(b.l1.1 * side);
                bx.3 = bx.3.min(b.l1.1 * side + side - 1);
            }
            let mut out = Vec::new();
            strip(n2, lo, hi, bx, |v| {
                let idx = match spec.kind {
                    TensorKind::Lemma53 => [n2.sub(v), v, n2],
                    TensorKind::Lemma54 => [v, v.sub(n2), n2],
                    TensorKind::Lemma55 => [v.add(n2), v, n2],
                };
                if spec.admits(&idx) && ball.map_or(true, |b| b.contains(&idx, spec.n2)) {
                    out.push(Entry { idx, value: phase.factor(&idx) * spec.weight(&idx) });
                }
            });
            out
        })
        .collect()
}

/// The tensor of the given kind; kind 5.5 is returned over all square pairs at once.
pub fn build_tensor(spec: &TensorSpec) -> Result<DyadicTensor> {
    spec.validate()?;
    let tensor = SparseTensor::new(enumerate(spec, None));
    Ok(DyadicTensor { spec: *spec, window: spec.window(), ball: None, tensor })
}

/// One localized block `n1 in J_{1 l1}`, `n in J_{2 l2}` of a kind 5.5 tensor.
pub fn build_ball_block(spec: &TensorSpec, ball: BallPair) -> Result<DyadicTensor> {
    spec.validate()?;
    if spec.kind != TensorKind::Lemma55 {
        return Err(ZyError::Invalid("ball localization applies to lemma5_5 only".into()));
    }
    let tensor = SparseTensor::new(enumerate(spec, Some(ball)));
    Ok(DyadicTensor { spec: *spec, window: spec.window(), ball: Some(ball), tensor })
}

impl DyadicTensor {
    pub fn len(&self) -> usize {
        self.tensor.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensor.is_empty()
    }

    pub fn phase(&self) -> PhaseDescriptor {
        self.spec.phase()
    }

    /// Checks support constraints and entry magnitudes.
    pub fn audit(&self) -> Result<()> {
        let phase = self.phase();
        for e in &self.tensor.entries {
            if !self.spec.admits(&e.idx) || self.ball.is_some_and(|b| !b.contains(&e.idx, self.spec.n2)) {
                return Err(ZyError::Invalid(format!("entry {:?} violates the support", e.idx)));
            }
            let w = self.spec.weight(&e.idx);
            let expect = phase.factor(&e.idx) * w;
            if e.value != expect || (e.value.norm() - w).abs() > 4.0 * f64::EPSILON * w {
                return Err(ZyError::Invalid(format!("entry {:?} has value {} instead of weight {w}", e.idx, e.value)));
            }
        }
        Ok(())
    }

    /// Localized blocks of a kind 5.5 tensor, sorted by square pair; other kinds give themselves.
    pub fn ball_blocks(&self) -> Vec<DyadicTensor> {
        if self.spec.kind != TensorKind::Lemma55 || self.ball.is_some() {
            return vec![self.clone()];
        }
        let side = self.spec.n2;
        let mut blocks: HashMap<BallPair, Vec<Entry>> = HashMap::new();
        for e in &self.tensor.entries {
            let b = BallPair { l1: BallPair::square_of(e.idx[1], side), l2: BallPair::square_of(e.idx[0], side) };
            blocks.entry(b).or_default().push(*e);
        }
        let mut out: Vec<DyadicTensor> = blocks
            .into_iter()
            .map(|(b, entries)| DyadicTensor {
                spec: self.spec,
                window: self.window,
                ball: Some(b),
                tensor: SparseTensor::new(entries),
            })
            .collect();
        out.sort_by_key(|d| d.ball);
        out
    }

    /// Largest number of squares `l2` met by a single `l1`.
    pub fn ell2_multiplicity(&self) -> usize {
        let side = self.spec.n2;
        let mut map: HashMap<(i32, i32), HashSet<(i32, i32)>> = HashMap::new();
        for e in &self.tensor.entries {
            map.entry(BallPair::square_of(e.idx[1], side)).or_default().insert(BallPair::square_of(e.idx[0], side));
        }
        map.values().map(|s| s.len()).max().unwrap_or(0)
    }

    /// Norm and Schur bound for the lemma; kind 5.5 takes the worst localized block.
    pub fn lemma_norm(&self, p: Partition) -> (NormEstimate, f64) {
        let mut best: Option<(NormEstimate, f64)> = None;
        for b in self.ball_blocks() {
            let n = tensor_norm(&b.tensor, p);
            let s = schur_bound(&b.tensor, p);
            best = Some(match best {
                Some((m, t)) => (if n.value > m.value { n } else { m }, t.max(s)),
                None => (n, s),
            });
        }
        best.expect("at least one block")
    }
}

/// Distribution of `||H||` over independent Gaussian draws.
#[derive(Clone, Debug, PartialEq)]
pub struct RandomMatrixStats {
    pub norms: Vec<f64>,
    pub p50: f64,
    pub p90: f64,
    pub p99: f64,
    pub mean: f64,
    pub max: f64,
    /// `max(||h||_{b n_A -> c}, ||h||_{b -> c n_A})`.
    pub benchmark: f64,
    /// Claimed bound, NaN when none applies.
    pub bound: f64,
    pub unconverged: usize,
}

fn contracted_keys(h: &SparseTensor, roles: Roles) -> Vec<FreqIndex> {
    let mut keys: Vec<FreqIndex> = h.entries.iter().map(|e| e.idx[roles.contracted as usize]).collect();
    keys.sort_by(|a, b| a.shell_cmp(b));
    keys.dedup();
    keys
}

/// `H(c, b) = sum_k h(b, c, k) g_k` for the draws `g` indexed like `contracted_keys`.
pub fn contract(h: &SparseTensor, roles: Roles, g: &[Complex64]) -> SparseMatrix {
    let keys = contracted_keys(h, roles);
    let pos: HashMap<FreqIndex, usize> = keys.iter().enumerate().map(|(i, k)| (*k, i)).collect();
    let mut rows = HashMap::new();
    let mut cols = HashMap::new();
    let trip = h
        .entries
        .iter()
        .map(|e| {
            let nr = rows.len() as u32;
            let r = *rows.entry(e.idx[roles.output as usize]).or_insert(nr);
            let nc = cols.len() as u32;
            let c = *cols.entry(e.idx[roles.input as usize]).or_insert(nc);
            (r, c, e.value * g[pos[&e.idx[roles.contracted as usize]]])
        })
        .collect();
    SparseMatrix::new(rows.len(), cols.len(), trip).expect("indices in range")
}

/// Standard complex Gaussians `E|g|^2 = 1`, one per contracted index, for trial `i`.
pub fn trial_gaussians(sampler: &GaussianSampler, trial: u64, count: usize) -> Vec<Complex64> {
    let mut s = sampler.fork(trial).normals(Channel::Aux);
    (0..count)
        .map(|_| {
            let (a, b) = s.pair();
            Complex64::new(a, b) * std::f64::consts::FRAC_1_SQRT_2
        })
        .collect()
}

pub fn random_matrix_opnorm_of(h: &SparseTensor, roles: Roles, trials: usize, sampler: GaussianSampler) -> Result<RandomMatrixStats> {
    if trials < 100 {
        return Err(ZyError::Invalid(format!("need at least 100 trials, got {trials}")));
    }
    let count = contracted_keys(h, roles).len();
    let results: Vec<NormEstimate> = (0..trials as u64)
        .into_par_iter()
        .map(|i| op_norm(&contract(h, roles, &trial_gaussians(&sampler, i, count)), POWER_TOL))
        .collect();
    let norms: Vec<f64> = results.iter().map(|r| r.value).collect();
    let mut sorted = norms.clone();
    sorted.sort_by(f64::total_cmp);
    let (a, b) = roles.partitions();
    let benchmark = tensor_norm(h, a).value.max(tensor_norm(h, b).value);
    Ok(RandomMatrixStats {
        p50: quantile(&sorted, 0.5),
        p90: quantile(&sorted, 0.9),
        p99: quantile(&sorted, 0.99),
        mean: norms.iter().sum::<f64>() / trials as f64,
        max: sorted[trials - 1],
        benchmark,
        bound: f64::NAN,
        unconverged: results.iter().filter(|r| !r.converged).count(),
        norms,
    })
}

/// Random matrix of the lemma setting; kind 5.5 uses the representative block.
pub fn random_matrix_opnorm(spec: &TensorSpec, trials: usize, sampler: GaussianSampler) -> Result<RandomMatrixStats> {
    let h = match spec.kind {
        TensorKind::Lemma55 => build_ball_block(spec, BallPair::representative(spec))?,
        _ => build_tensor(spec)?,
    };
    let mut stats = random_matrix_opnorm_of(&h.tensor, spec.roles(), trials, sampler)?;
    stats.bound = spec.random_matrix_bound();
    Ok(stats)
}
