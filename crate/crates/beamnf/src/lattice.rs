//! Exact integer geometry of Z^d.
//!
//! Everything in this module is decided in integer arithmetic on squared
//! norms: sphere enumeration, the pseudo-metric `[a-b] = min(|a-b|, |a+b|)`,
//! admissibility of mode sets, the resonance set `L_f` with its coupling
//! pairs and equivalence classes, block decompositions at a cutoff `Delta`,
//! and Monte-Carlo typicality sampling of random mode sets.

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LatticeError {
    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("mode set must be nonempty")]
    EmptyModeSet,
    #[error("mode set contains duplicate point {0:?}")]
    DuplicatePoint(Vec<i64>),
    #[error("mode set is not admissible: {a:?} and {b:?} share squared norm {n2}")]
    NotAdmissible { a: Vec<i64>, b: Vec<i64>, n2: i64 },
    #[error("ball of radius {radius} in Z^{d} holds {available} points, fewer than n = {n}")]
    BallTooSmall {
        radius: f64,
        d: usize,
        available: usize,
        n: usize,
    },
    #[error("point {0:?} exceeds the universe bound {1}")]
    OutsideUniverse(Vec<i64>, f64),
}

/// A point of Z^d. Squared norms are exact `i64` values throughout.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LatticeVector {
    coords: Vec<i64>,
}

impl LatticeVector {
    pub fn new(coords: Vec<i64>) -> Self {
        assert!(!coords.is_empty(), "lattice vector needs dimension >= 1");
        Self { coords }
    }

    pub fn dim(&self) -> usize {
        self.coords.len()
    }

    pub fn coords(&self) -> &[i64] {
        &self.coords
    }

    /// |a|^2, exact.
    pub fn norm2(&self) -> i64 {
        self.coords.iter().map(|c| c * c).sum()
    }

    pub fn norm(&self) -> f64 {
        (self.norm2() as f64).sqrt()
    }

    /// <a>^2 = max(1, |a|^2), exact. `<a> = max(1, |a|)`.
    pub fn bracket2(&self) -> i64 {
        self.norm2().max(1)
    }

    pub fn neg(&self) -> Self {
        Self::new(self.coords.iter().map(|c| -c).collect())
    }

    pub fn add(&self, other: &Self) -> Result<Self, LatticeError> {
        check_dims(self, other)?;
        Ok(Self::new(
            self.coords
                .iter()
                .zip(&other.coords)
                .map(|(a, b)| a + b)
                .collect(),
        ))
    }

    pub fn sub(&self, other: &Self) -> Result<Self, LatticeError> {
        check_dims(self, other)?;
        Ok(Self::new(
            self.coords
                .iter()
                .zip(&other.coords)
                .map(|(a, b)| a - b)
                .collect(),
        ))
    }

    pub fn is_zero(&self) -> bool {
        self.coords.iter().all(|&c| c == 0)
    }
}

fn check_dims(a: &LatticeVector, b: &LatticeVector) -> Result<(), LatticeError> {
    if a.dim() != b.dim() {
        return Err(LatticeError::DimensionMismatch(a.dim(), b.dim()));
    }
    Ok(())
}

/// Pseudo-distance `[a-b] = min(|a-b|, |a+b|)`; the squared value is exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub struct PseudoDist {
    sq: i64,
}

impl PseudoDist {
    pub fn sq(&self) -> i64 {
        self.sq
    }

    pub fn value(&self) -> f64 {
        (self.sq as f64).sqrt()
    }
}

/// `[a-b] = min(|a-b|, |a+b|)`. Metric axioms hold except definiteness:
/// `[a-(-a)] = 0`.
pub fn pseudo_dist(a: &LatticeVector, b: &LatticeVector) -> Result<PseudoDist, LatticeError> {
    let diff = a.sub(b)?.norm2();
    let sum = a.add(b)?.norm2();
    Ok(PseudoDist {
        sq: diff.min(sum),
    })
}

fn isqrt(n: i64) -> i64 {
    if n < 0 {
        return -1;
    }
    let mut r = (n as f64).sqrt() as i64;
    while r * r > n {
        r -= 1;
    }
    while (r + 1) * (r + 1) <= n {
        r += 1;
    }
    r
}

/// All x in Z^d with |x|^2 = n2, in lexicographic order.
///
/// Bounded box scan with per-axis pruning; empty when n2 has no
/// representation as a sum of d squares.
pub fn sphere_points(d: usize, n2: i64) -> Vec<LatticeVector> {
    assert!(d >= 1);
    let mut out = Vec::new();
    if n2 < 0 {
        return out;
    }
    let mut prefix = Vec::with_capacity(d);
    enumerate_sphere(d, n2, &mut prefix, &mut out);
    out
}

fn enumerate_sphere(
    remaining_dims: usize,
    remaining_n2: i64,
    prefix: &mut Vec<i64>,
    out: &mut Vec<LatticeVector>,
) {
    if remaining_dims == 1 {
        let r = isqrt(remaining_n2);
        if r >= 0 && r * r == remaining_n2 {
            if r == 0 {
                prefix.push(0);
                out.push(LatticeVector::new(prefix.clone()));
                prefix.pop();
            } else {
                for c in [-r, r] {
                    prefix.push(c);
                    out.push(LatticeVector::new(prefix.clone()));
                    prefix.pop();
                }
            }
        }
        return;
    }
    let r = isqrt(remaining_n2);
    for c in -r..=r {
        prefix.push(c);
        enumerate_sphere(remaining_dims - 1, remaining_n2 - c * c, prefix, out);
        prefix.pop();
    }
}

/// All x in Z^d with |x|^2 <= r2, in lexicographic order.
pub fn ball_points(d: usize, r2: i64) -> Vec<LatticeVector> {
    let mut out = Vec::new();
    for n2 in 0..=r2 {
        out.extend(sphere_points(d, n2));
    }
    out.sort();
    out
}

/// `a angle b`: the integer sphere |x| = |a| meets the sphere of radius
/// |a-b| centred at b in at most two points. Decided by exact enumeration.
pub fn angle_check(a: &LatticeVector, b: &LatticeVector) -> Result<bool, LatticeError> {
    check_dims(a, b)?;
    let target = a.sub(b)?.norm2();
    let mut count = 0usize;
    for x in sphere_points(a.dim(), a.norm2()) {
        if x.sub(b)?.norm2() == target {
            count += 1;
            if count > 2 {
                return Ok(false);
            }
        }
    }
    Ok(count <= 2)
}

/// A finite ordered set of distinct excited modes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModeSet {
    points: Vec<LatticeVector>,
}

impl ModeSet {
    pub fn new(points: Vec<LatticeVector>) -> Result<Self, LatticeError> {
        if points.is_empty() {
            return Err(LatticeError::EmptyModeSet);
        }
        let d = points[0].dim();
        let mut seen = BTreeSet::new();
        for p in &points {
            if p.dim() != d {
                return Err(LatticeError::DimensionMismatch(d, p.dim()));
            }
            if !seen.insert(p.clone()) {
                return Err(LatticeError::DuplicatePoint(p.coords().to_vec()));
            }
        }
        Ok(Self { points })
    }

    pub fn dim(&self) -> usize {
        self.points[0].dim()
    }

    pub fn n(&self) -> usize {
        self.points.len()
    }

    pub fn points(&self) -> &[LatticeVector] {
        &self.points
    }

    pub fn contains(&self, v: &LatticeVector) -> bool {
        self.points.iter().any(|p| p == v)
    }

    pub fn index_of(&self, v: &LatticeVector) -> Option<usize> {
        self.points.iter().position(|p| p == v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Admissibility {
    NotAdmissible,
    Admissible,
    StronglyAdmissible,
}

/// Classify a mode set:
/// not admissible when two points share a squared norm; strongly admissible
/// when additionally `a angle (a+b)` holds for every ordered pair of
/// distinct points.
pub fn classify_set(set: &ModeSet) -> Admissibility {
    let pts = set.points();
    let mut norms = BTreeSet::new();
    for p in pts {
        if !norms.insert(p.norm2()) {
            return Admissibility::NotAdmissible;
        }
    }
    for a in pts {
        for b in pts {
            if a == b {
                continue;
            }
            let c = a.add(b).expect("dims checked at construction");
            if !angle_check(a, &c).expect("dims checked at construction") {
                return Admissibility::Admissible;
            }
        }
    }
    Admissibility::StronglyAdmissible
}

/// The resonance geometry attached to an admissible set `A`:
/// `L_f`, the `ell` map, the coupling pair sets and the equivalence classes.
///
/// `lambda_f` is sorted lexicographically; pairs and classes refer to
/// indices into it. Classes are ordered singletons first, then by minimal
/// lexicographic member; `m0` counts the singletons.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResonanceGeometry {
    pub mode_set: ModeSet,
    pub lambda_f: Vec<LatticeVector>,
    /// `ell[i]` = index into `mode_set` of the unique point sharing the norm
    /// of `lambda_f[i]`.
    pub ell: Vec<usize>,
    pub plus_pairs: Vec<(usize, usize)>,
    pub minus_pairs: Vec<(usize, usize)>,
    pub classes: Vec<Vec<usize>>,
    pub m0: usize,
}

impl ResonanceGeometry {
    pub fn m(&self) -> usize {
        self.classes.len()
    }

    pub fn ell_point(&self, i: usize) -> &LatticeVector {
        &self.mode_set.points()[self.ell[i]]
    }

    pub fn is_plus_pair(&self, i: usize, j: usize) -> bool {
        self.plus_pairs.contains(&(i, j))
    }

    pub fn is_minus_pair(&self, i: usize, j: usize) -> bool {
        self.minus_pairs.contains(&(i, j))
    }

    /// Validates every structural invariant; used after deserialization and
    /// in tests.
    pub fn validate(&self) -> Result<(), String> {
        let recomputed = resonance_geometry(&self.mode_set).map_err(|e| e.to_string())?;
        if &recomputed != self {
            return Err("resonance geometry fields are inconsistent with the mode set".into());
        }
        Ok(())
    }
}

/// Compute the resonance geometry of an admissible set.
pub fn resonance_geometry(set: &ModeSet) -> Result<ResonanceGeometry, LatticeError> {
    // Reject non-admissible input.
    let pts = set.points();
    for (i, a) in pts.iter().enumerate() {
        for b in &pts[i + 1..] {
            if a.norm2() == b.norm2() {
                return Err(LatticeError::NotAdmissible {
                    a: a.coords().to_vec(),
                    b: b.coords().to_vec(),
                    n2: a.norm2(),
                });
            }
        }
    }

    // L_f: every lattice point outside A sharing a norm with a point of A.
    let mut lambda_f: Vec<LatticeVector> = Vec::new();
    for p in pts {
        for x in sphere_points(set.dim(), p.norm2()) {
            if !set.contains(&x) {
                lambda_f.push(x);
            }
        }
    }
    lambda_f.sort();
    lambda_f.dedup();

    let ell: Vec<usize> = lambda_f
        .iter()
        .map(|b| {
            pts.iter()
                .position(|a| a.norm2() == b.norm2())
                .expect("every L_f point shares a norm with some mode")
        })
        .collect();

    let mut plus_pairs = Vec::new();
    let mut minus_pairs = Vec::new();
    for (i, a) in lambda_f.iter().enumerate() {
        for (j, b) in lambda_f.iter().enumerate() {
            let la = &pts[ell[i]];
            let lb = &pts[ell[j]];
            if la.add(lb)? == a.add(b)? {
                plus_pairs.push((i, j));
            }
            if i != j && la.sub(lb)? == a.sub(b)? {
                minus_pairs.push((i, j));
            }
        }
    }

    // Union-find over lambda_f indices; a ~ b when (a,b) is a coupling pair.
    let mut parent: Vec<usize> = (0..lambda_f.len()).collect();
    fn find(parent: &mut Vec<usize>, i: usize) -> usize {
        if parent[i] != i {
            let r = find(parent, parent[i]);
            parent[i] = r;
        }
        parent[i]
    }
    for &(i, j) in plus_pairs.iter().chain(minus_pairs.iter()) {
        let (ri, rj) = (find(&mut parent, i), find(&mut parent, j));
        if ri != rj {
            parent[ri.max(rj)] = ri.min(rj);
        }
    }
    let mut grouped: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..lambda_f.len() {
        let r = find(&mut parent, i);
        grouped.entry(r).or_default().push(i);
    }
    let mut classes: Vec<Vec<usize>> = grouped.into_values().collect();
    for c in classes.iter_mut() {
        c.sort_by(|&i, &j| lambda_f[i].cmp(&lambda_f[j]));
    }
    // Singletons first, then by minimal lexicographic member.
    classes.sort_by(|x, y| {
        let kx = (x.len() > 1, lambda_f[x[0]].clone());
        let ky = (y.len() > 1, lambda_f[y[0]].clone());
        kx.cmp(&ky)
    });
    let m0 = classes.iter().filter(|c| c.len() == 1).count();

    let geom = ResonanceGeometry {
        mode_set: set.clone(),
        lambda_f,
        ell,
        plus_pairs,
        minus_pairs,
        classes,
        m0,
    };
    debug_assert!(geometry_invariants(&geom).is_ok());
    Ok(geom)
}

/// Structural invariants asserted on every construction (tested separately):
/// norms agree through `ell`, the pair sets are disjoint, coupled points have
/// distinct norms, each class meets each punched sphere at most once, and
/// class sizes are bounded by |A|.
pub fn geometry_invariants(g: &ResonanceGeometry) -> Result<(), String> {
    for (i, b) in g.lambda_f.iter().enumerate() {
        if b.norm2() != g.ell_point(i).norm2() {
            return Err(format!("|b| != |ell(b)| at {b:?}"));
        }
        if g.mode_set.contains(b) {
            return Err(format!("{b:?} lies in A"));
        }
    }
    for p in &g.plus_pairs {
        if g.minus_pairs.contains(p) {
            return Err(format!("pair {p:?} is in both coupling sets"));
        }
    }
    for &(i, j) in g.plus_pairs.iter().chain(g.minus_pairs.iter()) {
        if g.lambda_f[i].norm2() == g.lambda_f[j].norm2() {
            return Err(format!("coupled pair ({i},{j}) shares a norm"));
        }
    }
    for class in &g.classes {
        if class.len() > g.mode_set.n() {
            return Err("class larger than |A|".into());
        }
        let mut norms = BTreeSet::new();
        for &i in class {
            if !norms.insert(g.lambda_f[i].norm2()) {
                return Err("class meets a punched sphere twice".into());
            }
        }
    }
    let m0 = g.classes.iter().take_while(|c| c.len() == 1).count();
    if m0 != g.m0 || g.classes.iter().filter(|c| c.len() == 1).count() != m0 {
        return Err("singleton classes are not listed first".into());
    }
    Ok(())
}

/// A block `[a]_Delta`: the closure of `a` on its norm sphere under
/// pseudo-distance <= Delta links.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Block {
    pub members: Vec<LatticeVector>,
    pub delta: f64,
    /// Max pseudo-distance between members, exact squared value.
    pub diameter_sq: i64,
}

impl Block {
    pub fn diameter(&self) -> f64 {
        (self.diameter_sq as f64).sqrt()
    }
}

/// Transitive closure of `a` within the sphere {|x| = |a|} under
/// `pseudo_dist <= delta`.
pub fn block_of(
    a: &LatticeVector,
    delta: f64,
    universe_bound: f64,
) -> Result<Block, LatticeError> {
    if (a.norm2() as f64) > universe_bound * universe_bound + 1e-9 {
        return Err(LatticeError::OutsideUniverse(
            a.coords().to_vec(),
            universe_bound,
        ));
    }
    let sphere = sphere_points(a.dim(), a.norm2());
    let delta_sq = delta * delta;
    let start = sphere
        .iter()
        .position(|x| x == a)
        .expect("a lies on its own sphere");
    let mut in_block = vec![false; sphere.len()];
    in_block[start] = true;
    let mut queue = VecDeque::from([start]);
    while let Some(i) = queue.pop_front() {
        for (j, x) in sphere.iter().enumerate() {
            if !in_block[j]
                && (pseudo_dist(&sphere[i], x)?.sq() as f64) <= delta_sq
            {
                in_block[j] = true;
                queue.push_back(j);
            }
        }
    }
    let members: Vec<LatticeVector> = sphere
        .into_iter()
        .zip(in_block)
        .filter_map(|(x, keep)| keep.then_some(x))
        .collect();
    let mut diameter_sq = 0;
    for (i, x) in members.iter().enumerate() {
        for y in &members[i + 1..] {
            diameter_sq = diameter_sq.max(pseudo_dist(x, y)?.sq());
        }
    }
    Ok(Block {
        members,
        delta,
        diameter_sq,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TypicalityEstimate {
    pub frac_admissible: f64,
    pub frac_strongly_admissible: f64,
    pub trials: u64,
}

/// Sample `trials` n-tuples of lattice points uniformly from the ball
/// B(radius) (product measure, duplicates allowed; a tuple with a repeated
/// point is never admissible) and report the admissible fractions.
pub fn sample_typicality(
    d: usize,
    n: usize,
    radius: f64,
    trials: u64,
    seed: u64,
) -> Result<TypicalityEstimate, LatticeError> {
    let r2 = (radius * radius).floor() as i64;
    let ball = ball_points(d, r2);
    if ball.len() < n {
        return Err(LatticeError::BallTooSmall {
            radius,
            d,
            available: ball.len(),
            n,
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sphere_cache: HashMap<i64, Vec<LatticeVector>> = HashMap::new();
    let mut adm = 0u64;
    let mut strong = 0u64;
    for _ in 0..trials {
        let pts: Vec<LatticeVector> = (0..n)
            .map(|_| ball[rng.gen_range(0..ball.len())].clone())
            .collect();
        match classify_tuple(&pts, d, &mut sphere_cache) {
            Admissibility::StronglyAdmissible => {
                adm += 1;
                strong += 1;
            }
            Admissibility::Admissible => adm += 1,
            Admissibility::NotAdmissible => {}
        }
    }
    Ok(TypicalityEstimate {
        frac_admissible: adm as f64 / trials as f64,
        frac_strongly_admissible: strong as f64 / trials as f64,
        trials,
    })
}

// classify_set over a raw tuple, with a sphere cache shared across trials.
fn classify_tuple(
    pts: &[LatticeVector],
    d: usize,
    cache: &mut HashMap<i64, Vec<LatticeVector>>,
) -> Admissibility {
    let mut norms = BTreeSet::new();
    for p in pts {
        if !norms.insert(p.norm2()) {
            return Admissibility::NotAdmissible;
        }
    }
    for a in pts {
        for b in pts {
            if a == b {
                continue;
            }
            let c = a.add(b).expect("same dim");
            let sphere = cache
                .entry(a.norm2())
                .or_insert_with(|| sphere_points(d, a.norm2()));
            let target = a.sub(&c).expect("same dim").norm2();
            let mut count = 0;
            for x in sphere.iter() {
                if x.sub(&c).expect("same dim").norm2() == target {
                    count += 1;
                    if count > 2 {
                        return Admissibility::Admissible;
                    }
                }
            }
        }
    }
    Admissibility::StronglyAdmissible
}

pub fn lv(coords: &[i64]) -> LatticeVector {
    LatticeVector::new(coords.to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn pseudo_dist_identity_and_antipode() {
        let a = lv(&[1, 0]);
        assert_eq!(pseudo_dist(&a, &a).unwrap().sq(), 0);
        assert_eq!(pseudo_dist(&a, &a.neg()).unwrap().sq(), 0);
    }

    #[test]
    fn pseudo_dist_example() {
        // min(sqrt(4), sqrt(8)) = 2
        let d = pseudo_dist(&lv(&[2, 1]), &lv(&[0, 1])).unwrap();
        assert_eq!(d.sq(), 4);
        assert_eq!(d.value(), 2.0);
    }

    #[test]
    fn pseudo_dist_dimension_mismatch() {
        assert_eq!(
            pseudo_dist(&lv(&[1]), &lv(&[1, 0])).unwrap_err(),
            LatticeError::DimensionMismatch(1, 2)
        );
    }

    #[test]
    fn sphere_counts() {
        assert_eq!(sphere_points(2, 25).len(), 12);
        assert_eq!(sphere_points(2, 3).len(), 0);
        assert_eq!(sphere_points(1, 4), vec![lv(&[-2]), lv(&[2])]);
        assert_eq!(sphere_points(2, 0), vec![lv(&[0, 0])]);
    }

    #[test]
    fn sphere_lex_order() {
        let pts = sphere_points(2, 25);
        let mut sorted = pts.clone();
        sorted.sort();
        assert_eq!(pts, sorted);
    }

    /// d=2 oracle: r_2(n) = 4 (d_1(n) - d_3(n)) over divisors mod 4.
    fn sum_of_two_squares(n: i64) -> usize {
        let mut d1 = 0i64;
        let mut d3 = 0i64;
        for div in 1..=n {
            if n % div == 0 {
                match div % 4 {
                    1 => d1 += 1,
                    3 => d3 += 1,
                    _ => {}
                }
            }
        }
        (4 * (d1 - d3)) as usize
    }

    #[test]
    fn sphere_counts_match_arithmetic_function() {
        for n2 in 1..=1000 {
            assert_eq!(
                sphere_points(2, n2).len(),
                sum_of_two_squares(n2),
                "count mismatch at n2 = {n2}"
            );
        }
    }

    #[test]
    fn angle_check_examples() {
        // d=2: intersection is {(0,1),(0,-1)}, count 2.
        assert!(angle_check(&lv(&[0, 1]), &lv(&[1, 0])).unwrap());
        // d=3: four points (0,±1,0),(0,0,±1) at distance sqrt(2) from (1,0,0).
        assert!(!angle_check(&lv(&[0, 1, 0]), &lv(&[1, 0, 0])).unwrap());
        // a = b forces x = a.
        assert!(angle_check(&lv(&[2, 1]), &lv(&[2, 1])).unwrap());
    }

    #[test]
    fn classify_examples() {
        let strong = ModeSet::new(vec![lv(&[0, 1]), lv(&[1, -1])]).unwrap();
        assert_eq!(classify_set(&strong), Admissibility::StronglyAdmissible);

        let adm = ModeSet::new(vec![lv(&[0, 1, 0]), lv(&[1, -1, 0])]).unwrap();
        assert_eq!(classify_set(&adm), Admissibility::Admissible);

        let not = ModeSet::new(vec![lv(&[1, 0]), lv(&[0, 1])]).unwrap();
        assert_eq!(classify_set(&not), Admissibility::NotAdmissible);
    }

    /// Literal-definition oracle for classify_set.
    fn classify_oracle(pts: &[LatticeVector]) -> Admissibility {
        for (i, a) in pts.iter().enumerate() {
            for b in pts.iter().skip(i + 1) {
                if a.norm2() == b.norm2() {
                    return Admissibility::NotAdmissible;
                }
            }
        }
        for a in pts {
            for b in pts {
                if a != b && !angle_check(a, &a.add(b).unwrap()).unwrap() {
                    return Admissibility::Admissible;
                }
            }
        }
        Admissibility::StronglyAdmissible
    }

    #[test]
    fn classify_agrees_with_oracle_exhaustive_d1() {
        let pts: Vec<LatticeVector> = (-5..=5).map(|c| lv(&[c])).collect();
        for i in 0..pts.len() {
            for j in i + 1..pts.len() {
                for k in j + 1..pts.len() {
                    let set =
                        ModeSet::new(vec![pts[i].clone(), pts[j].clone(), pts[k].clone()])
                            .unwrap();
                    assert_eq!(classify_set(&set), classify_oracle(set.points()));
                }
            }
        }
    }

    proptest! {
        #[test]
        fn pseudo_dist_symmetry_and_triangle(
            ax in -8i64..=8, ay in -8i64..=8,
            bx in -8i64..=8, by in -8i64..=8,
            cx in -8i64..=8, cy in -8i64..=8,
        ) {
            let (a, b, c) = (lv(&[ax, ay]), lv(&[bx, by]), lv(&[cx, cy]));
            let ab = pseudo_dist(&a, &b).unwrap();
            let ba = pseudo_dist(&b, &a).unwrap();
            prop_assert_eq!(ab.sq(), ba.sq());
            let ac = pseudo_dist(&a, &c).unwrap();
            let cb = pseudo_dist(&c, &b).unwrap();
            prop_assert!(ab.value() <= ac.value() + cb.value() + 1e-9);
        }

        #[test]
        fn classify_agrees_with_oracle_random(
            coords in proptest::collection::vec((-5i64..=5, -5i64..=5), 2..=4)
        ) {
            let pts: Vec<LatticeVector> =
                coords.iter().map(|&(x, y)| lv(&[x, y])).collect();
            let mut dedup = pts.clone();
            dedup.sort();
            dedup.dedup();
            prop_assume!(dedup.len() == pts.len());
            let set = ModeSet::new(pts).unwrap();
            prop_assert_eq!(classify_set(&set), classify_oracle(set.points()));
        }

        /// For d <= 2 every admissible set is strongly admissible.
        #[test]
        fn admissible_implies_strong_in_d2(
            coords in proptest::collection::vec((-6i64..=6, -6i64..=6), 2..=3)
        ) {
            let pts: Vec<LatticeVector> =
                coords.iter().map(|&(x, y)| lv(&[x, y])).collect();
            let mut dedup = pts.clone();
            dedup.sort();
            dedup.dedup();
            prop_assume!(dedup.len() == pts.len());
            let set = ModeSet::new(pts).unwrap();
            prop_assert_ne!(classify_set(&set), Admissibility::Admissible);
        }
    }

    #[test]
    fn geometry_d1() {
        let set = ModeSet::new(vec![lv(&[1]), lv(&[2])]).unwrap();
        let g = resonance_geometry(&set).unwrap();
        assert_eq!(g.lambda_f, vec![lv(&[-2]), lv(&[-1])]);
        // ell(a) = -a in d=1.
        for (i, b) in g.lambda_f.iter().enumerate() {
            assert_eq!(g.ell_point(i), &b.neg());
        }
        assert!(g.plus_pairs.is_empty());
        assert!(g.minus_pairs.is_empty());
        assert_eq!((g.m(), g.m0), (2, 2));
    }

    #[test]
    fn geometry_appendix_2d() {
        let set = ModeSet::new(vec![lv(&[0, 1]), lv(&[1, -1])]).unwrap();
        let g = resonance_geometry(&set).unwrap();
        let expected: Vec<LatticeVector> = {
            let mut v = vec![
                lv(&[0, -1]),
                lv(&[1, 0]),
                lv(&[-1, 0]),
                lv(&[1, 1]),
                lv(&[-1, 1]),
                lv(&[-1, -1]),
            ];
            v.sort();
            v
        };
        assert_eq!(g.lambda_f, expected);
        let i = g.lambda_f.iter().position(|p| p == &lv(&[0, -1])).unwrap();
        let j = g.lambda_f.iter().position(|p| p == &lv(&[1, 1])).unwrap();
        let mut plus = g.plus_pairs.clone();
        plus.sort();
        let mut want = vec![(i, j), (j, i)];
        want.sort();
        assert_eq!(plus, want);
        assert!(g.minus_pairs.is_empty());
        assert_eq!((g.m(), g.m0), (5, 4));
        geometry_invariants(&g).unwrap();
    }

    #[test]
    fn geometry_appendix_3d() {
        let set = ModeSet::new(vec![lv(&[0, 1, 0]), lv(&[1, -1, 0])]).unwrap();
        let g = resonance_geometry(&set).unwrap();
        assert_eq!(g.lambda_f.len(), 16);
        assert_eq!(g.plus_pairs.len(), 6);
        assert!(g.minus_pairs.is_empty());
        assert_eq!((g.m(), g.m0), (13, 10));
        geometry_invariants(&g).unwrap();
    }

    #[test]
    fn geometry_rejects_non_admissible() {
        let set = ModeSet::new(vec![lv(&[1, 0]), lv(&[0, 1])]).unwrap();
        assert!(matches!(
            resonance_geometry(&set),
            Err(LatticeError::NotAdmissible { .. })
        ));
    }

    #[test]
    fn blocks_d1_antipodal() {
        let b = block_of(&lv(&[3]), 0.5, 10.0).unwrap();
        assert_eq!(b.members, vec![lv(&[-3]), lv(&[3])]);
        assert_eq!(b.diameter_sq, 0);
    }

    #[test]
    fn blocks_d2_closure() {
        // Delta = 1 keeps only the antipodal pair; Delta = 2 links through
        // the sqrt(2) steps and picks up the whole norm-1 sphere.
        let b1 = block_of(&lv(&[0, 1]), 1.0, 10.0).unwrap();
        assert_eq!(b1.members, vec![lv(&[0, -1]), lv(&[0, 1])]);
        let b2 = block_of(&lv(&[0, 1]), 2.0, 10.0).unwrap();
        assert_eq!(
            b2.members,
            vec![lv(&[-1, 0]), lv(&[0, -1]), lv(&[0, 1]), lv(&[1, 0])]
        );
    }

    #[test]
    fn block_diameter_bounds_members_and_delta_growth() {
        // Every pair within a block is within the reported diameter, and the
        // diameter stays below the (d+1)!/2 power law from the block
        // proposition (C = 1 suffices on this desk-scale scan).
        for n2 in [1i64, 2, 4, 5, 9, 25] {
            for delta in [1.0f64, 2.0, 3.0] {
                let a = sphere_points(2, n2).remove(0);
                let b = block_of(&a, delta, 40.0).unwrap();
                for (i, x) in b.members.iter().enumerate() {
                    for y in &b.members[i + 1..] {
                        assert!(pseudo_dist(x, y).unwrap().sq() <= b.diameter_sq);
                    }
                }
                let cap = delta.powf(3.0); // (d+1)!/2 = 3 for d = 2
                assert!(
                    b.diameter() <= cap.max(b.delta) * 8.0,
                    "diameter {} vs delta {}",
                    b.diameter(),
                    delta
                );
            }
        }
    }

    #[test]
    fn typicality_singletons_always_admissible() {
        let t = sample_typicality(2, 1, 4.0, 500, 7).unwrap();
        assert_eq!(t.frac_admissible, 1.0);
    }

    #[test]
    fn typicality_rejects_tiny_ball() {
        assert!(matches!(
            sample_typicality(2, 9, 1.0, 10, 0),
            Err(LatticeError::BallTooSmall { .. })
        ));
    }

    #[test]
    fn geometry_json_roundtrip_is_canonical() {
        let set = ModeSet::new(vec![lv(&[0, 1]), lv(&[1, -1])]).unwrap();
        let g = resonance_geometry(&set).unwrap();
        let s = serde_json::to_string(&g).unwrap();
        let back: ResonanceGeometry = serde_json::from_str(&s).unwrap();
        back.validate().unwrap();
        assert_eq!(serde_json::to_string(&back).unwrap(), s);
    }
}
