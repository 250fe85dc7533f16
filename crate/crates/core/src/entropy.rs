//! Separated-set entropy on windows and strips, expansivity of the strip-collapsed flow,
//! and the heteroclinic bracket.
//!
//! Separation uses the local Sasaki distance at integer times `0..n`. Maximal separated
//! sets are built greedily in grid order and nested in `n` (the set for `n` extends the set
//! for the previous `n`), so counts are nondecreasing and runs are reproducible.

use rayon::prelude::*;
use rstar::{primitives::GeomWithData, RTree};
use serde::{Deserialize, Serialize};

use crate::error::{GeoError, Result};
use crate::geodesic::{
    flow_endpoint, flow_samples, integrate_geodesic, sasaki_distance_local, sasaki_local_states, UnitTangentVector,
};
use crate::horo::{busemann_unchecked, trace_leaf, BusemannField, Sign, StripRecord, TraceOptions};
use crate::metric::{MetricChart, Window};
use crate::ode::StepControl;
use crate::scalar::{ls_slope, wrap_angle, Real};

/// Rectangular grid of base points carrying one fixed frame angle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VectorGrid<S> {
    pub region: Window<S>,
    /// Orthonormal-frame angle shared by all vectors.
    pub angle: S,
    pub nx: usize,
    pub ny: usize,
}

impl<S: Real> VectorGrid<S> {
    /// Vectors in lexicographic grid order (rows of constant `y`, increasing `x`).
    pub fn vectors(&self, chart: &MetricChart<S>) -> Result<Vec<UnitTangentVector<S>>> {
        if self.nx == 0 || self.ny == 0 {
            return Err(GeoError::Precondition("empty vector grid".into()));
        }
        let coord = |lo: S, hi: S, n: usize, i: usize| {
            if n == 1 {
                (lo + hi) * S::lit(0.5)
            } else {
                lo + (hi - lo) * S::from_usize_lossy(i) / S::from_usize_lossy(n - 1)
            }
        };
        let r = &self.region;
        let mut out = Vec::with_capacity(self.nx * self.ny);
        for j in 0..self.ny {
            let y = coord(r.ymin, r.ymax, self.ny, j);
            for i in 0..self.nx {
                let x = coord(r.xmin, r.xmax, self.nx, i);
                out.push(UnitTangentVector::from_angle(chart, [x, y], self.angle)?);
            }
        }
        Ok(out)
    }

    pub fn describe(&self) -> String {
        let r = &self.region;
        format!(
            "[{}, {}] x [{}, {}], angle {}, grid {} x {}",
            r.xmin, r.xmax, r.ymin, r.ymax, self.angle, self.nx, self.ny
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeparatedSetResult<S> {
    pub window: String,
    pub epsilon: S,
    pub n_grid: Vec<usize>,
    /// Cardinality of the greedy maximal `(n, ε)`-separated set per `n`.
    pub counts: Vec<usize>,
    /// Least-squares slope of `log count` against `n`.
    pub slope: S,
    /// Vectors whose orbit left the integration window before time `max(n) - 1`.
    pub dropped: usize,
}

/// Orbit samples at integer times of the vectors that survived integration.
struct Orbits<S> {
    states: Vec<Vec<[S; 4]>>,
    dropped: usize,
}

fn sample_orbits<S: Real>(chart: &MetricChart<S>, vectors: &[UnitTangentVector<S>], max_n: usize) -> Result<Orbits<S>> {
    let times: Vec<S> = (0..max_n).map(S::from_usize_lossy).collect();
    let horizon = S::from_usize_lossy(max_n.saturating_sub(1));
    // a unit-speed orbit may end exactly on the padded boundary; allow for rounding
    let bounds = chart.window.padded(horizon + S::lit(1e-9) * (S::one() + horizon));
    let ctrl = StepControl::default();
    let sampled: Vec<Option<Vec<[S; 4]>>> = vectors
        .par_iter()
        .map(|v| match flow_samples(chart, v, &times, ctrl, Some(bounds)) {
            Ok(s) => s.into_iter().collect::<Option<Vec<_>>>(),
            Err(_) => None,
        })
        .collect();
    let dropped = sampled.iter().filter(|s| s.is_none()).count();
    Ok(Orbits { states: sampled.into_iter().flatten().collect(), dropped })
}

/// `max_{k < n} d_S(φ_k a, φ_k b) ≤ eps`, latest times first (where orbits are farthest).
fn within_bowen<S: Real>(chart: &MetricChart<S>, a: &[[S; 4]], b: &[[S; 4]], n: usize, eps: S) -> bool {
    (0..n).rev().all(|k| {
        let (pa, pb) = ([a[k][0], a[k][1]], [b[k][0], b[k][1]]);
        chart.chord_length(pa, pb) <= eps && sasaki_local_states(chart, &a[k], &b[k]) <= eps
    })
}

/// Chart radius containing every point within metric chord length `eps` of `p`: grown until
/// the minimal metric scale on the box supports it.
fn chart_radius<S: Real>(chart: &MetricChart<S>, p: [S; 2], eps: S) -> S {
    let scale_at = |r: S| chart.min_scale_on(p[0] - r, p[0] + r, p[1] - r, p[1] + r);
    let mut r = eps / scale_at(S::zero());
    for _ in 0..30 {
        let next = eps / scale_at(r);
        if !(next > r) {
            break;
        }
        r = next;
    }
    r
}

type Indexed = GeomWithData<[f64; 2], usize>;

/// Nested greedy maximal separated sets: selected indices per entry of the sorted `n_grid`.
fn nested_greedy<S: Real>(chart: &MetricChart<S>, orbits: &[Vec<[S; 4]>], eps: S, n_grid: &[usize]) -> Vec<Vec<usize>> {
    let mut selected: Vec<usize> = Vec::new();
    let mut taken = vec![false; orbits.len()];
    let mut out = Vec::with_capacity(n_grid.len());
    for &n in n_grid {
        let k = n - 1;
        let pos = |i: usize| [orbits[i][k][0], orbits[i][k][1]];
        let to64 = |p: [S; 2]| [p[0].to_f64_lossy(), p[1].to_f64_lossy()];
        let mut tree: RTree<Indexed> =
            RTree::bulk_load(selected.iter().map(|&i| Indexed::new(to64(pos(i)), i)).collect());
        for i in 0..orbits.len() {
            if taken[i] {
                continue;
            }
            let p = pos(i);
            let r = chart_radius(chart, p, eps).to_f64_lossy() * (1.0 + 1e-9);
            let close = tree
                .locate_within_distance(to64(p), r * r)
                .any(|other| within_bowen(chart, &orbits[i], &orbits[other.data], n, eps));
            if !close {
                taken[i] = true;
                selected.push(i);
                tree.insert(Indexed::new(to64(p), i));
            }
        }
        out.push(selected.clone());
    }
    out
}

fn validated_grid(n_grid: &[usize]) -> Result<Vec<usize>> {
    let mut g = n_grid.to_vec();
    g.sort_unstable();
    g.dedup();
    if g.is_empty() || g[0] == 0 {
        return Err(GeoError::Precondition("n grid must be nonempty with n >= 1".into()));
    }
    Ok(g)
}

fn log_slope<S: Real>(n_grid: &[usize], counts: &[usize]) -> S {
    let xs: Vec<S> = n_grid.iter().map(|&n| S::from_usize_lossy(n)).collect();
    let ys: Vec<S> = counts.iter().map(|&c| S::from_usize_lossy(c.max(1)).ln()).collect();
    ls_slope(&xs, &ys).unwrap_or_else(S::zero)
}

/// Separated-set counts of arbitrary vectors (in the given greedy order).
pub fn separated_counts<S: Real>(
    chart: &MetricChart<S>,
    vectors: &[UnitTangentVector<S>],
    epsilon: S,
    n_grid: &[usize],
    label: &str,
) -> Result<SeparatedSetResult<S>> {
    if !(epsilon > S::zero()) {
        return Err(GeoError::Precondition("epsilon must be positive".into()));
    }
    let grid = validated_grid(n_grid)?;
    let orbits = sample_orbits(chart, vectors, grid[grid.len() - 1])?;
    let sets = nested_greedy(chart, &orbits.states, epsilon, &grid);
    let counts: Vec<usize> = sets.iter().map(Vec::len).collect();
    let slope = log_slope(&grid, &counts);
    Ok(SeparatedSetResult { window: label.to_string(), epsilon, n_grid: grid, counts, slope, dropped: orbits.dropped })
}

/// Entropy estimate of a direction-fixed window: slope of `log M(n, ε)` in `n`.
pub fn separated_set_entropy<S: Real>(
    chart: &MetricChart<S>,
    grid: &VectorGrid<S>,
    epsilon: S,
    n_grid: &[usize],
) -> Result<SeparatedSetResult<S>> {
    let vectors = grid.vectors(chart)?;
    separated_counts(chart, &vectors, epsilon, n_grid, &grid.describe())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StripEntropyResult<S> {
    pub result: SeparatedSetResult<S>,
    /// Leaf separation implied by `ε`-separation: `d_S ≥ ε ⇒ d_leaf ≥ δ₂`.
    pub delta2: S,
    /// Leaf length of `φ_k(I(θ))` for `k = 0..max(n)`.
    pub leaf_lengths: Vec<S>,
    /// Per `n`: cardinalities of `E_k`, the greedy subsets of the separated set that are
    /// pairwise `ε`-separated at time `k`.
    pub per_k: Vec<Vec<usize>>,
    /// `leaf_length_k / δ₂ + 1`.
    pub per_k_bound: Vec<S>,
    /// Every `card E_k` and every total `card E ≤ Σ_k bound_k` held.
    pub bound_holds: bool,
}

/// Frame angle of the stable-leaf normal at arclength `s` (interpolated between trace points).
fn strip_normal_angle<S: Real>(chart: &MetricChart<S>, strip: &StripRecord<S>, s: S) -> Option<S> {
    let pts = &strip.points;
    let i = pts.partition_point(|p| p.s <= s).checked_sub(1)?;
    let a = &pts[i];
    let aa = chart.frame_angle(a.point, a.normal);
    let Some(b) = pts.get(i + 1) else { return Some(aa) };
    let ab = aa + wrap_angle(chart.frame_angle(b.point, b.normal) - aa);
    let f = if b.s > a.s { (s - a.s) / (b.s - a.s) } else { S::zero() };
    Some(aa + f * (ab - aa))
}

/// Entropy of the vectors along the strip `I(θ)`, with the per-`k` counting bound.
/// `samples_per_epsilon` sets the sampling density of the strip arc.
pub fn strip_entropy<S: Real>(
    chart: &MetricChart<S>,
    strip: &StripRecord<S>,
    epsilon: S,
    n_grid: &[usize],
    samples_per_epsilon: usize,
) -> Result<StripEntropyResult<S>> {
    let grid = validated_grid(n_grid)?;
    let label = format!("strip through ({}, {}), width {}", strip.theta.base[0], strip.theta.base[1], strip.width);
    if strip.is_trivial() {
        let counts = vec![1; grid.len()];
        let per_k = grid.iter().map(|&n| vec![1; n]).collect();
        let max_n = grid[grid.len() - 1];
        return Ok(StripEntropyResult {
            result: SeparatedSetResult { window: label, epsilon, n_grid: grid, counts, slope: S::zero(), dropped: 0 },
            delta2: epsilon,
            leaf_lengths: vec![S::zero(); max_n],
            per_k,
            per_k_bound: vec![S::one(); max_n],
            bound_holds: true,
        });
    }
    let (s0, s1) = strip.s_range;
    let m = ((strip.width / epsilon).ceil().to_f64_lossy() as usize).max(1) * samples_per_epsilon.max(1) + 1;
    let mut vectors = Vec::with_capacity(m);
    for i in 0..m {
        let s = s0 + (s1 - s0) * S::from_usize_lossy(i) / S::from_usize_lossy(m - 1);
        let (Some(p), Some(a)) = (strip.point_at(s), strip_normal_angle(chart, strip, s)) else { continue };
        vectors.push(UnitTangentVector::from_angle(chart, p, a)?);
    }
    let max_n = grid[grid.len() - 1];
    let orbits = sample_orbits(chart, &vectors, max_n)?;
    let sets = nested_greedy(chart, &orbits.states, epsilon, &grid);
    let counts: Vec<usize> = sets.iter().map(Vec::len).collect();

    // leaf geometry of the flowed arc
    let mut leaf_lengths = Vec::with_capacity(max_n);
    let mut ratio = S::one();
    for k in 0..max_n {
        let mut len = S::zero();
        for w in orbits.states.windows(2) {
            let (a, b) = (&w[0][k], &w[1][k]);
            let chord = chart.chord_length([a[0], a[1]], [b[0], b[1]]);
            let d = sasaki_local_states(chart, a, b);
            len = len + chord;
            if d > S::zero() {
                ratio = ratio.min(chord / d);
            }
        }
        leaf_lengths.push(len);
    }
    let delta2 = epsilon * ratio;
    let per_k_bound: Vec<S> = leaf_lengths.iter().map(|&l| l / delta2 + S::one()).collect();

    let mut per_k = Vec::with_capacity(grid.len());
    let mut bound_holds = true;
    for (set, &n) in sets.iter().zip(&grid) {
        let mut cards = Vec::with_capacity(n);
        #[allow(clippy::needless_range_loop)] // k indexes orbit times and bounds together
        for k in 0..n {
            let mut ek: Vec<usize> = Vec::new();
            for &i in set {
                if ek.iter().all(|&j| sasaki_local_states(chart, &orbits.states[i][k], &orbits.states[j][k]) > epsilon) {
                    ek.push(i);
                }
            }
            bound_holds &= S::from_usize_lossy(ek.len()) <= per_k_bound[k];
            cards.push(ek.len());
        }
        let total: S = per_k_bound[..n].iter().copied().sum();
        bound_holds &= S::from_usize_lossy(set.len()) <= total;
        per_k.push(cards);
    }
    let slope = log_slope(&grid, &counts);
    Ok(StripEntropyResult {
        result: SeparatedSetResult { window: label, epsilon, n_grid: grid, counts, slope, dropped: orbits.dropped },
        delta2,
        leaf_lengths,
        per_k,
        per_k_bound,
        bound_holds,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Expansivity {
    Separates,
    TimeShift,
    StripMates,
}

impl Expansivity {
    pub fn as_str(self) -> &'static str {
        match self {
            Expansivity::Separates => "separates",
            Expansivity::TimeShift => "time_shift",
            Expansivity::StripMates => "strip_mates",
        }
    }
}

/// Monotone piecewise-linear reparametrizations searched by [`expansivity_probe`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReparamFamily<S> {
    /// Uniform knots on `[-T, T]` (odd, so that `0` is a knot).
    pub knots: usize,
    pub slopes: Vec<S>,
    /// Distance checks per segment.
    pub substeps: usize,
    /// Largest `|s|` for the time-shift test.
    pub shift_window: S,
    pub shift_tol: S,
}

impl<S: Real> Default for ReparamFamily<S> {
    fn default() -> Self {
        Self {
            knots: 9,
            slopes: [0.5, 0.75, 1.0, 1.5, 2.0].iter().map(|&s| S::lit(s)).collect(),
            substeps: 8,
            shift_window: S::lit(0.1),
            shift_tol: S::lit(1e-6),
        }
    }
}

impl<S: Real> ReparamFamily<S> {
    pub fn describe(&self) -> String {
        let slopes: Vec<String> = self.slopes.iter().map(|s| s.to_string()).collect();
        format!("{} knots, slopes {{{}}}", self.knots, slopes.join(", "))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansivityVerdict<S> {
    pub pair: [UnitTangentVector<S>; 2],
    pub delta: S,
    pub t: S,
    pub verdict: Expansivity,
    /// Time by which every reparametrization in the family has left the `δ`-tube.
    pub witness_t: Option<S>,
    /// Best time shift `s` with `|s| ≤ shift_window` and its distance `d_S(φ_s θ, η)`.
    pub shift: (S, S),
    pub family: String,
}

/// One side of the reparametrization search from `ρ(0) = 0` outward. Returns `None` when
/// some `ρ` keeps the distance within `δ`, otherwise the signed time where the longest
/// surviving branch failed.
#[allow(clippy::too_many_arguments)]
fn search_side<S: Real>(
    chart: &MetricChart<S>,
    state1: &dyn Fn(S) -> Option<[S; 4]>,
    state2: &dyn Fn(S) -> Option<[S; 4]>,
    delta: S,
    dir: S,
    h: S,
    segments: usize,
    fam: &ReparamFamily<S>,
) -> Option<S> {
    let sub = fam.substeps.max(1);
    let within = |t: S, r: S| match (state1(t), state2(r)) {
        (Some(a), Some(b)) => sasaki_local_states(chart, &a, &b) <= delta,
        _ => false,
    };
    let key = |rho: S| (rho / h * S::lit(1e6)).round().to_f64_lossy() as i64;
    let mut states: Vec<S> = vec![S::zero()];
    let mut furthest = S::zero();
    for seg in 0..segments {
        let t0 = S::from_usize_lossy(seg) * h;
        let mut next: Vec<S> = Vec::new();
        for &rho in &states {
            for &slope in &fam.slopes {
                let mut ok = true;
                for j in 1..=sub {
                    let dt = h * S::from_usize_lossy(j) / S::from_usize_lossy(sub);
                    if !within(dir * (t0 + dt), dir * (rho + slope * dt)) {
                        furthest = furthest.max(t0 + dt);
                        ok = false;
                        break;
                    }
                }
                let r1 = rho + slope * h;
                if ok && !next.iter().any(|&r| key(r) == key(r1)) {
                    next.push(r1);
                }
            }
        }
        if next.is_empty() {
            return Some(dir * furthest);
        }
        states = next;
    }
    None
}

/// Searches a reparametrization `ρ` (from the family) with `d_S(φ_t θ, φ_ρ(t) η) ≤ δ` on
/// `[-T, T]`. None exists: `separates`. One exists and `η` is a small time shift of `θ`:
/// `time_shift`. Otherwise `strip_mates`.
pub fn expansivity_probe<S: Real>(
    chart: &MetricChart<S>,
    theta: &UnitTangentVector<S>,
    eta: &UnitTangentVector<S>,
    delta: S,
    t: S,
    family: &ReparamFamily<S>,
) -> Result<ExpansivityVerdict<S>> {
    if family.knots < 3 || family.knots.is_multiple_of(2) || family.slopes.is_empty() || !(t > S::zero()) {
        return Err(GeoError::Precondition("reparametrization family needs an odd knot count >= 3 and T > 0".into()));
    }
    let smax = family.slopes.iter().copied().fold(S::one(), S::max);
    let ctrl = StepControl::default();
    let span1 = t.max(family.shift_window);
    let g1 = integrate_geodesic(chart, theta, (-span1, span1), ctrl)?;
    let g2 = integrate_geodesic(chart, eta, (-t * smax, t * smax), ctrl)?;
    let s1 = |s: S| g1.state_at(s);
    let s2 = |s: S| g2.state_at(s);

    // best time shift
    let w = family.shift_window;
    let shift_dist = |s: S| s1(s).map_or(S::infinity(), |a| sasaki_local_states(chart, &a, &eta.state()));
    let scan = 40;
    let mut best = (S::zero(), shift_dist(S::zero()));
    for i in 0..=scan {
        let s = -w + (w + w) * S::from_usize_lossy(i) / S::from_usize_lossy(scan);
        let d = shift_dist(s);
        if d < best.1 {
            best = (s, d);
        }
    }
    // golden-section refinement around the best scan point
    let step = (w + w) / S::from_usize_lossy(scan);
    let (mut a, mut b) = ((best.0 - step).max(-w), (best.0 + step).min(w));
    let phi = S::lit(0.618_033_988_749_894_8);
    for _ in 0..80 {
        let c = b - phi * (b - a);
        let d = a + phi * (b - a);
        if shift_dist(c) < shift_dist(d) {
            b = d;
        } else {
            a = c;
        }
    }
    let mid = (a + b) * S::lit(0.5);
    if shift_dist(mid) < best.1 {
        best = (mid, shift_dist(mid));
    }

    let segments = (family.knots - 1) / 2;
    let h = t / S::from_usize_lossy(segments);
    let witness = if sasaki_distance_local(chart, theta, eta) > delta {
        Some(S::zero())
    } else {
        let fwd = search_side(chart, &s1, &s2, delta, S::one(), h, segments, family);
        let bwd = search_side(chart, &s1, &s2, delta, -S::one(), h, segments, family);
        match (fwd, bwd) {
            (Some(f), Some(b)) => Some(if f.abs() <= b.abs() { f } else { b }),
            (f, b) => f.or(b),
        }
    };
    let verdict = match witness {
        Some(_) => Expansivity::Separates,
        None if best.1 <= family.shift_tol => Expansivity::TimeShift,
        None => Expansivity::StripMates,
    };
    Ok(ExpansivityVerdict {
        pair: [*theta, *eta],
        delta,
        t,
        verdict,
        witness_t: witness,
        shift: best,
        family: family.describe(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BracketOptions<S> {
    /// Residual target, also the antipodality threshold.
    pub tol: S,
    /// Largest admissible `d_S(θ, η)`.
    pub radius: S,
    /// Half-length of the traced stable horocycle of `θ`.
    pub halflength: S,
    pub trace: TraceOptions<S>,
}

impl<S: Real> Default for BracketOptions<S> {
    fn default() -> Self {
        Self { tol: S::lit(1e-3), radius: S::one(), halflength: S::one(), trace: TraceOptions::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BracketResult<S> {
    /// The vector `[θ, η]` on the stable leaf of `θ` and the weak unstable leaf of `η`.
    pub vector: UnitTangentVector<S>,
    /// Flow offset `s`: the vector lies on the unstable leaf of `φ_s η`.
    pub offset: S,
    /// Arclength of the base point along the stable horocycle of `θ`.
    pub arclength: S,
    /// `|b⁺_θ|` at the base point, by a fresh Busemann estimate.
    pub residual_plus: S,
    /// `|b⁻_{φ_s η}|` at the base point, by a fresh Busemann estimate.
    pub residual_minus: S,
    /// Angle between the two leaf normals at the base point.
    pub residual_angle: S,
}

/// Point and stable normal on `H⁺(θ)` at arclength `s`, re-anchored to the level set.
struct StableLeaf<S: Real> {
    points: Vec<(S, [S; 2])>,
    field: BusemannField<S>,
    tol: S,
    max_iter: usize,
}

impl<S: Real> StableLeaf<S> {
    fn at(&mut self, s: S) -> Result<([S; 2], [S; 2])> {
        let pts = &self.points;
        let i = pts.partition_point(|p| p.0 <= s).saturating_sub(1).min(pts.len() - 2);
        let (a, b) = (pts[i], pts[i + 1]);
        let f = (s - a.0) / (b.0 - a.0);
        let mut q = [a.1[0] + f * (b.1[0] - a.1[0]), a.1[1] + f * (b.1[1] - a.1[1])];
        for _ in 0..self.max_iter {
            let (v, g) = self.field.eval(q)?;
            if v.abs() <= self.tol {
                return Ok((q, [-g[0], -g[1]]));
            }
            q = [q[0] - v * g[0], q[1] - v * g[1]];
        }
        Err(GeoError::CorrectorDiverged { s: s.to_f64_lossy() })
    }
}

/// `[θ, η]`: intersection of the stable leaf of `θ` with the weak unstable leaf of `η`.
///
/// Along the traced `H⁺(θ)` the point `q` is sought where the stable normal `-∇b⁺_θ(q)`
/// equals the unstable normal `∇b⁻_η(q)`; the offset is `b⁻_η(q)`, since
/// `b⁻_{φ_s η} = b⁻_η - s`.
pub fn bracket<S: Real>(
    chart: &MetricChart<S>,
    theta: &UnitTangentVector<S>,
    eta: &UnitTangentVector<S>,
    opts: &BracketOptions<S>,
) -> Result<BracketResult<S>> {
    if sasaki_distance_local(chart, &theta.reversed(), eta) <= opts.tol {
        return Err(GeoError::Precondition("bracket of a vector with its reverse is undefined".into()));
    }
    if sasaki_distance_local(chart, theta, eta) > opts.radius {
        return Err(GeoError::Precondition("vectors farther apart than the bracket radius".into()));
    }
    // nearby pairs meet close to base(θ): a short trace first, the full one if that misses
    let short = opts.halflength.min(S::lit(BRACKET_FIRST_REACH));
    if short < opts.halflength {
        match bracket_along(chart, theta, eta, short, opts) {
            Err(GeoError::NoIntersection) => {}
            r => return r,
        }
    }
    bracket_along(chart, theta, eta, opts.halflength, opts)
}

/// Half-length of the first, short stable trace of [`bracket`].
const BRACKET_FIRST_REACH: f64 = 0.25;

fn bracket_along<S: Real>(
    chart: &MetricChart<S>,
    theta: &UnitTangentVector<S>,
    eta: &UnitTangentVector<S>,
    halflength: S,
    opts: &BracketOptions<S>,
) -> Result<BracketResult<S>> {
    let trace = trace_leaf(chart, theta, Sign::Plus, halflength, &opts.trace)?;
    if trace.points.len() < 2 {
        return Err(GeoError::NoIntersection);
    }
    let ends = [trace.points[0].point, trace.points[trace.points.len() - 1].point];
    let probes = [eta.base, ends[0], ends[1]];
    let mut unstable = BusemannField::probed(chart, eta, Sign::Minus, &probes, &opts.trace.busemann)?;
    let stable = BusemannField::probed(chart, theta, Sign::Plus, &ends, &opts.trace.busemann)?;
    let mut leaf = StableLeaf {
        points: trace.points.iter().map(|p| (p.s, p.point)).collect(),
        field: stable,
        tol: opts.trace.trace_tol,
        max_iter: opts.trace.max_corrector,
    };
    let mut mismatch = |q: [S; 2], normal: [S; 2]| -> Result<(S, S)> {
        let (b, g) = unstable.eval(q)?;
        Ok((wrap_angle(chart.frame_angle(q, g) - chart.frame_angle(q, normal)), b))
    };

    // walk outward from the base point to the first sign change
    let base = trace.base_index();
    let pts = &trace.points;
    let f_at = |i: usize, m: &mut dyn FnMut([S; 2], [S; 2]) -> Result<(S, S)>| m(pts[i].point, pts[i].normal);
    let f0 = f_at(base, &mut mismatch)?.0;
    let mut bracket_idx = None;
    if f0 == S::zero() {
        bracket_idx = Some((base, base));
    }
    let mut prev = [(base, f0), (base, f0)];
    let mut step = 1;
    while bracket_idx.is_none() && (base + step < pts.len() || step <= base) {
        for (side, idx) in [(0, base.checked_add(step).filter(|&i| i < pts.len())), (1, base.checked_sub(step))] {
            let Some(i) = idx else { continue };
            let f = f_at(i, &mut mismatch)?.0;
            let (j, fp) = prev[side];
            if f.signum() != fp.signum() && (f - fp).abs() < S::FRAC_PI_2() {
                bracket_idx = Some((j.min(i), j.max(i)));
                break;
            }
            prev[side] = (i, f);
        }
        step += 1;
    }
    let (ia, ib) = bracket_idx.ok_or(GeoError::NoIntersection)?;

    // Illinois regula falsi on the arclength
    let (mut sa, mut sb) = (pts[ia].s, pts[ib].s);
    let mut fa = f_at(ia, &mut mismatch)?.0;
    let mut fb = f_at(ib, &mut mismatch)?.0;
    let mut best = if fa.abs() <= fb.abs() { sa } else { sb };
    let mut side = 0i8;
    for _ in 0..60 {
        if fa == S::zero() || fb == S::zero() || (sb - sa).abs() < S::lit(1e-12) {
            break;
        }
        let s = sb - fb * (sb - sa) / (fb - fa);
        let (q, n) = leaf.at(s)?;
        let f = mismatch(q, n)?.0;
        best = s;
        if f.abs() < S::lit(1e-11) {
            break;
        }
        if f.signum() == fb.signum() {
            sb = s;
            fb = f;
            if side == 1 {
                fa = fa * S::lit(0.5);
            }
            side = 1;
        } else {
            sa = s;
            fa = f;
            if side == -1 {
                fb = fb * S::lit(0.5);
            }
            side = -1;
        }
    }
    let (q, normal) = if ia == ib { (pts[ia].point, pts[ia].normal) } else { leaf.at(best)? };
    let (angle, offset) = mismatch(q, normal)?;
    let vector = UnitTangentVector::new(chart, q, normal)?;

    let bopts = opts.trace.busemann;
    let residual_plus = busemann_unchecked(chart, theta, q, Sign::Plus, &bopts)?.value.abs();
    let shifted = UnitTangentVector::from_state(chart, flow_endpoint(chart, eta, offset, StepControl::default())?)?;
    let residual_minus = busemann_unchecked(chart, &shifted, q, Sign::Minus, &bopts)?.value.abs();
    Ok(BracketResult { vector, offset, arclength: best, residual_plus, residual_minus, residual_angle: angle.abs() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metric::WarpProfile;

    fn hyperbolic() -> MetricChart<f64> {
        MetricChart::constant(-1.0, Window::<f64>::new(-6.0, 6.0, -6.0, 6.0)).unwrap()
    }

    #[test]
    fn flat_window_counts_stay_flat() {
        let c = MetricChart::constant(0.0, Window::<f64>::new(-1.0, 1.0, -1.0, 1.0)).unwrap();
        let grid = VectorGrid { region: Window::<f64>::new(-1.0, 1.0, -1.0, 1.0), angle: std::f64::consts::FRAC_PI_2, nx: 201, ny: 3 };
        let r = separated_set_entropy(&c, &grid, 0.1, &[2, 3, 4, 5]).unwrap();
        assert_eq!(r.dropped, 0);
        assert!(r.counts.windows(2).all(|w| w[0] <= w[1]));
        assert!(r.slope.abs() < 1e-12, "{r:?}");
    }

    #[test]
    fn hyperbolic_row_grows() {
        let c = MetricChart::constant(-1.0, Window::<f64>::new(-1.0, 1.0, -1.0, 1.0)).unwrap();
        let grid = VectorGrid { region: Window::<f64>::new(-1.0, 1.0, 0.0, 0.0), angle: std::f64::consts::FRAC_PI_2, nx: 4001, ny: 1 };
        let r = separated_set_entropy(&c, &grid, 0.1, &[2, 3, 4, 5]).unwrap();
        assert!(r.slope > 0.8 && r.slope < 1.2, "{r:?}");
    }

    #[test]
    fn time_shift_and_strip_mates() {
        let c = hyperbolic();
        let th = UnitTangentVector::new(&c, [0.0, 0.0], [0.6, 0.8]).unwrap();
        let eta = UnitTangentVector::from_state(&c, flow_endpoint(&c, &th, 0.05, StepControl::default()).unwrap()).unwrap();
        let v = expansivity_probe(&c, &th, &eta, 0.1, 2.0, &ReparamFamily::default()).unwrap();
        assert_eq!(v.verdict, Expansivity::TimeShift, "{v:?}");

        let band = MetricChart::warped(WarpProfile::FlatBand { half_width: 1.0 }, Window::<f64>::new(-20.0, 20.0, -5.0, 5.0)).unwrap();
        let a = UnitTangentVector::new(&band, [0.0, 0.0], [1.0, 0.0]).unwrap();
        let b = UnitTangentVector::new(&band, [0.0, 0.5], [1.0, 0.0]).unwrap();
        let v = expansivity_probe(&band, &a, &b, 0.6, 10.0, &ReparamFamily::default()).unwrap();
        assert_eq!(v.verdict, Expansivity::StripMates);
    }

    #[test]
    fn hyperbolic_pair_separates() {
        let c = MetricChart::constant(-1.0, Window::<f64>::new(-3.0, 3.0, -3.0, 3.0)).unwrap();
        let th = UnitTangentVector::new(&c, [0.0, 0.0], [1.0, 0.0]).unwrap();
        let eta = UnitTangentVector::new(&c, [0.0, 0.02], [1.0, 0.0]).unwrap();
        let v = expansivity_probe(&c, &th, &eta, 0.1, 5.0, &ReparamFamily::default()).unwrap();
        assert_eq!(v.verdict, Expansivity::Separates);
        assert!(v.witness_t.unwrap().abs() > 1.0);
    }

    #[test]
    fn bracket_of_self_and_reverse() {
        let c = hyperbolic();
        let th = UnitTangentVector::new(&c, [0.0, 0.0], [0.0, 1.0]).unwrap();
        let r = bracket(&c, &th, &th, &BracketOptions::default()).unwrap();
        assert!(r.offset.abs() < 1e-6 && r.arclength.abs() < 1e-9, "{r:?}");
        assert!(matches!(bracket(&c, &th, &th.reversed(), &BracketOptions::default()), Err(GeoError::Precondition(_))));
    }

    #[test]
    fn hyperbolic_bracket() {
        let c = hyperbolic();
        let th = UnitTangentVector::new(&c, [0.0, 0.0], [0.0, 1.0]).unwrap();
        let eta = UnitTangentVector::new(&c, [0.1, 0.0], [0.0, 1.0]).unwrap();
        let r = bracket(&c, &th, &eta, &BracketOptions::default()).unwrap();
        assert!(r.residual_plus <= 1e-3 && r.residual_minus <= 1e-3 && r.residual_angle <= 1e-3, "{r:?}");
        let again = bracket(&c, &th, &r.vector, &BracketOptions::default()).unwrap();
        assert!(sasaki_distance_local(&c, &again.vector, &r.vector) <= 2e-3, "{again:?}");
    }
}
