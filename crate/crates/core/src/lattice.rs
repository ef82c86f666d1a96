//! Control spaces, site geometry, metric queries, ε-nets, height functions,
//! and qudit-density checks.
//!
//! All positions and distances are exact rationals so that metric
//! comparisons (net conditions, shell membership, causality floors) never
//! depend on floating-point rounding.

use crate::error::{Error, Result};
use num_rational::Rational64;
use num_traits::{Signed, Zero};
use std::collections::BTreeSet;
use std::sync::Arc;

/// Exact length: every distance in a control space is a rational number.
pub type Length = Rational64;

pub fn len(n: i64, d: i64) -> Length {
    Rational64::new(n, d)
}

pub fn len_int(n: i64) -> Length {
    Rational64::from_integer(n)
}

/// The metric space sites are mapped into.
///
/// Ring and Torus distances are geodesic (wrap-around minimum); the Torus
/// uses the sup metric over coordinates so that distances stay rational.
/// A MetricGraph carries an explicit, validated distance matrix.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ControlSpace {
    Ring { circumference: Length },
    Torus { lengths: Vec<Length> },
    Interval { length: Length },
    MetricGraph { points: usize, dist: DistanceMatrix },
}

/// Symmetric distance matrix stored as a flat lower triangle.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DistanceMatrix {
    n: usize,
    tri: Vec<Length>,
}

impl DistanceMatrix {
    /// Builds from a callback giving `d(i, j)` for `i > j`.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> Length) -> Self {
        let mut tri = Vec::with_capacity(n * (n - 1) / 2);
        for i in 1..n {
            for j in 0..i {
                tri.push(f(i, j));
            }
        }
        DistanceMatrix { n, tri }
    }

    pub fn from_rows(rows: &[Vec<Length>]) -> Result<Self> {
        let n = rows.len();
        for (i, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::InvalidLayout(format!(
                    "distance matrix row {i} has {} entries, expected {n}",
                    row.len()
                )));
            }
            if !row[i].is_zero() {
                return Err(Error::InvalidLayout(format!("nonzero diagonal at {i}")));
            }
        }
        for i in 0..n {
            for j in 0..i {
                if rows[i][j] != rows[j][i] {
                    return Err(Error::InvalidLayout(format!(
                        "distance matrix not symmetric at ({i},{j})"
                    )));
                }
            }
        }
        Ok(Self::from_fn(n, |i, j| rows[i][j]))
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn get(&self, i: usize, j: usize) -> Length {
        if i == j {
            return Length::zero();
        }
        let (a, b) = if i > j { (i, j) } else { (j, i) };
        self.tri[a * (a - 1) / 2 + b]
    }

    /// Checks positivity off the diagonal and the triangle inequality.
    ///
    /// Exhaustive up to `exhaustive_limit` points; beyond that a
    /// deterministic sample of triples is checked (large analytic graphs
    /// such as figure-eights are constructed triangle-correct by design).
    pub fn validate(&self, exhaustive_limit: usize) -> Result<()> {
        let n = self.n;
        for i in 0..n {
            for j in 0..i {
                if self.get(i, j) <= Length::zero() {
                    return Err(Error::InvalidLayout(format!(
                        "distance ({i},{j}) must be positive"
                    )));
                }
            }
        }
        let check = |i: usize, j: usize, k: usize| -> Result<()> {
            if self.get(i, j) > self.get(i, k) + self.get(k, j) {
                return Err(Error::InvalidLayout(format!(
                    "triangle inequality fails for ({i},{j},{k})"
                )));
            }
            Ok(())
        };
        if n <= exhaustive_limit {
            for i in 0..n {
                for j in 0..i {
                    for k in 0..n {
                        check(i, j, k)?;
                    }
                }
            }
        } else {
            // deterministic LCG sample
            let mut state: u64 = 0x9e37_79b9_7f4a_7c15;
            let mut next = || {
                state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                (state >> 33) as usize
            };
            for _ in 0..200_000 {
                let i = next() % n;
                let j = next() % n;
                let k = next() % n;
                if i != j && j != k && i != k {
                    check(i, j, k)?;
                }
            }
        }
        Ok(())
    }
}

/// Position of a site inside its control space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Position {
    /// Coordinate on a Ring (mod circumference) or Interval.
    Scalar(Length),
    /// Coordinates on a Torus, one per dimension.
    Vector(Vec<Length>),
    /// Point index into a MetricGraph.
    Node(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SiteId(pub u32);

impl std::fmt::Display for SiteId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Reference to a single qudit: a site and a slot within it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct QuditRef {
    pub site: SiteId,
    pub slot: u32,
}

impl QuditRef {
    pub fn new(site: u32, slot: u32) -> Self {
        QuditRef { site: SiteId(site), slot }
    }
}

impl std::fmt::Display for QuditRef {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}:{}", self.site, self.slot)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QuditKind {
    Physical,
    Ancilla,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Qudit {
    pub dim: u32,
    pub kind: QuditKind,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Site {
    pub id: SiteId,
    pub position: Position,
    pub qudits: Vec<Qudit>,
}

/// A finite set of sites mapped into a control space, each holding qudits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    space: ControlSpace,
    sites: Vec<Site>,
    /// sites sorted by id; index of site id k in `sites`
    index_of: Vec<usize>,
    min_spacing: Length,
}

/// Shared, immutable layout handle.
pub type LayoutRef = Arc<Layout>;

impl Layout {
    pub fn new(space: ControlSpace, sites: Vec<Site>) -> Result<Layout> {
        if sites.is_empty() {
            return Err(Error::InvalidLayout("no sites".into()));
        }
        match &space {
            ControlSpace::Ring { circumference } if *circumference <= Length::zero() => {
                return Err(Error::InvalidLayout("circumference must be positive".into()))
            }
            ControlSpace::Interval { length } if *length <= Length::zero() => {
                return Err(Error::InvalidLayout("interval length must be positive".into()))
            }
            ControlSpace::Torus { lengths } => {
                if lengths.is_empty() || lengths.iter().any(|l| *l <= Length::zero()) {
                    return Err(Error::InvalidLayout("torus lengths must be positive".into()));
                }
            }
            ControlSpace::MetricGraph { points, dist } => {
                if dist.len() != *points {
                    return Err(Error::InvalidLayout("distance matrix size mismatch".into()));
                }
                dist.validate(96)?;
            }
            _ => {}
        }
        // ids unique, positions well-formed
        let mut ids = BTreeSet::new();
        for site in &sites {
            if !ids.insert(site.id) {
                return Err(Error::InvalidLayout(format!("duplicate site id {}", site.id)));
            }
            for q in &site.qudits {
                if q.dim < 2 {
                    return Err(Error::InvalidLayout(format!(
                        "qudit dimension must be at least 2 at site {}",
                        site.id
                    )));
                }
            }
            match (&space, &site.position) {
                (ControlSpace::Ring { circumference }, Position::Scalar(x)) => {
                    if *x < Length::zero() || x >= circumference {
                        return Err(Error::InvalidLayout(format!(
                            "site {} position outside [0, circumference)",
                            site.id
                        )));
                    }
                }
                (ControlSpace::Interval { length }, Position::Scalar(x)) => {
                    if *x < Length::zero() || x > length {
                        return Err(Error::InvalidLayout(format!(
                            "site {} position outside interval",
                            site.id
                        )));
                    }
                }
                (ControlSpace::Torus { lengths }, Position::Vector(v)) => {
                    if v.len() != lengths.len()
                        || v.iter().zip(lengths).any(|(x, l)| *x < Length::zero() || x >= l)
                    {
                        return Err(Error::InvalidLayout(format!(
                            "site {} position outside torus",
                            site.id
                        )));
                    }
                }
                (ControlSpace::MetricGraph { points, .. }, Position::Node(k)) => {
                    if *k >= *points {
                        return Err(Error::InvalidLayout(format!(
                            "site {} maps to node {} outside graph",
                            site.id, k
                        )));
                    }
                }
                _ => {
                    return Err(Error::InvalidLayout(format!(
                        "site {} position kind does not match control space",
                        site.id
                    )))
                }
            }
        }
        let max_id = sites.iter().map(|s| s.id.0).max().unwrap() as usize;
        let mut index_of = vec![usize::MAX; max_id + 1];
        for (i, s) in sites.iter().enumerate() {
            index_of[s.id.0 as usize] = i;
        }
        let mut layout = Layout { space, sites, index_of, min_spacing: Length::zero() };
        layout.min_spacing = layout.compute_min_spacing();
        Ok(layout)
    }

    /// Uniform ring of `n` sites with the given circumference; every site
    /// gets the same list of qudits.
    pub fn uniform_ring(n: usize, circumference: Length, qudits: Vec<Qudit>) -> Result<Layout> {
        let sites = (0..n)
            .map(|k| Site {
                id: SiteId(k as u32),
                position: Position::Scalar(
                    circumference * Rational64::new(k as i64, n as i64),
                ),
                qudits: qudits.clone(),
            })
            .collect();
        Layout::new(ControlSpace::Ring { circumference }, sites)
    }

    /// Ring with unit spacing between neighbors (circumference = n).
    pub fn unit_ring(n: usize, qudits: Vec<Qudit>) -> Result<Layout> {
        Layout::uniform_ring(n, len_int(n as i64), qudits)
    }

    /// `w`×`h` torus with unit spacing; qudit kind chosen per site.
    pub fn unit_torus(
        w: usize,
        h: usize,
        mut qudits_at: impl FnMut(usize, usize) -> Vec<Qudit>,
    ) -> Result<Layout> {
        let mut sites = Vec::with_capacity(w * h);
        for y in 0..h {
            for x in 0..w {
                sites.push(Site {
                    id: SiteId((y * w + x) as u32),
                    position: Position::Vector(vec![len_int(x as i64), len_int(y as i64)]),
                    qudits: qudits_at(x, y),
                });
            }
        }
        Layout::new(
            ControlSpace::Torus { lengths: vec![len_int(w as i64), len_int(h as i64)] },
            sites,
        )
    }

    /// The ℓ×ℓ torus with physical qudits only on columns 0 and ℓ/2 and one
    /// ancilla everywhere else: the standard counterexample to removing
    /// ancillas without a physical-density floor.
    pub fn two_line_torus(l: usize) -> Result<Layout> {
        Layout::unit_torus(l, l, |x, _| {
            let kind = if x == 0 || x == l / 2 { QuditKind::Physical } else { QuditKind::Ancilla };
            vec![Qudit { dim: 2, kind }]
        })
    }

    pub fn space(&self) -> &ControlSpace {
        &self.space
    }

    pub fn sites(&self) -> &[Site] {
        &self.sites
    }

    pub fn site_count(&self) -> usize {
        self.sites.len()
    }

    pub fn site(&self, id: SiteId) -> Result<&Site> {
        self.index_of
            .get(id.0 as usize)
            .copied()
            .filter(|&i| i != usize::MAX)
            .map(|i| &self.sites[i])
            .ok_or(Error::UnknownSite(id.0))
    }

    pub fn has_site(&self, id: SiteId) -> bool {
        self.site(id).is_ok()
    }

    pub fn qudit(&self, q: QuditRef) -> Result<&Qudit> {
        let site = self.site(q.site)?;
        site.qudits
            .get(q.slot as usize)
            .ok_or(Error::UnknownQudit { site: q.site.0, slot: q.slot })
    }

    /// All qudit refs in (site id, slot) order.
    pub fn qudit_refs(&self) -> Vec<QuditRef> {
        let mut ids: Vec<SiteId> = self.sites.iter().map(|s| s.id).collect();
        ids.sort();
        let mut out = Vec::new();
        for id in ids {
            let site = self.site(id).unwrap();
            for slot in 0..site.qudits.len() as u32 {
                out.push(QuditRef { site: id, slot });
            }
        }
        out
    }

    pub fn qudit_count(&self) -> usize {
        self.sites.iter().map(|s| s.qudits.len()).sum()
    }

    pub fn ancilla_refs(&self) -> Vec<QuditRef> {
        self.qudit_refs()
            .into_iter()
            .filter(|q| self.qudit(*q).unwrap().kind == QuditKind::Ancilla)
            .collect()
    }

    pub fn physical_refs(&self) -> Vec<QuditRef> {
        self.qudit_refs()
            .into_iter()
            .filter(|q| self.qudit(*q).unwrap().kind == QuditKind::Physical)
            .collect()
    }

    /// Geodesic distance between two sites.
    pub fn distance(&self, a: SiteId, b: SiteId) -> Result<Length> {
        let sa = self.site(a)?;
        let sb = self.site(b)?;
        Ok(self.position_distance(&sa.position, &sb.position))
    }

    fn position_distance(&self, pa: &Position, pb: &Position) -> Length {
        match (&self.space, pa, pb) {
            (ControlSpace::Ring { circumference }, Position::Scalar(x), Position::Scalar(y)) => {
                let d = (x - y).abs();
                std::cmp::min(d, circumference - d)
            }
            (ControlSpace::Interval { .. }, Position::Scalar(x), Position::Scalar(y)) => {
                (x - y).abs()
            }
            (ControlSpace::Torus { lengths }, Position::Vector(u), Position::Vector(v)) => {
                // sup metric over per-coordinate geodesics
                let mut m = Length::zero();
                for ((x, y), l) in u.iter().zip(v).zip(lengths) {
                    let d = (x - y).abs();
                    let d = std::cmp::min(d, l - d);
                    if d > m {
                        m = d;
                    }
                }
                m
            }
            (ControlSpace::MetricGraph { dist, .. }, Position::Node(i), Position::Node(j)) => {
                dist.get(*i, *j)
            }
            _ => unreachable!("layout validation guarantees matching position kinds"),
        }
    }

    /// Minimum distance between distinct sites (0 when sites share a point,
    /// e.g. doubled layouts put partners at the same position; spacing then
    /// falls back to the smallest nonzero gap).
    pub fn min_spacing(&self) -> Length {
        self.min_spacing
    }

    fn compute_min_spacing(&self) -> Length {
        let mut best: Option<Length> = None;
        let scalar_like = matches!(
            self.space,
            ControlSpace::Ring { .. } | ControlSpace::Interval { .. }
        );
        if scalar_like {
            let mut xs: Vec<Length> = self
                .sites
                .iter()
                .map(|s| match &s.position {
                    Position::Scalar(x) => *x,
                    _ => unreachable!(),
                })
                .collect();
            xs.sort();
            for w in xs.windows(2) {
                let d = w[1] - w[0];
                if !d.is_zero() && best.map_or(true, |b| d < b) {
                    best = Some(d);
                }
            }
            if let ControlSpace::Ring { circumference } = &self.space {
                if xs.len() >= 2 {
                    let d = circumference - (xs[xs.len() - 1] - xs[0]);
                    if !d.is_zero() && best.map_or(true, |b| d < b) {
                        best = Some(d);
                    }
                }
            }
        } else {
            for i in 0..self.sites.len() {
                for j in 0..i {
                    let d =
                        self.position_distance(&self.sites[i].position, &self.sites[j].position);
                    if !d.is_zero() && best.map_or(true, |b| d < b) {
                        best = Some(d);
                    }
                }
            }
        }
        best.unwrap_or_else(|| len_int(1))
    }

    pub fn diameter(&self) -> Length {
        let mut m = Length::zero();
        for i in 0..self.sites.len() {
            for j in 0..i {
                let d = self.position_distance(&self.sites[i].position, &self.sites[j].position);
                if d > m {
                    m = d;
                }
            }
        }
        m
    }

    /// Diameter of a set of sites.
    pub fn set_diameter(&self, ids: &[SiteId]) -> Result<Length> {
        let mut m = Length::zero();
        for (k, &a) in ids.iter().enumerate() {
            for &b in &ids[..k] {
                let d = self.distance(a, b)?;
                if d > m {
                    m = d;
                }
            }
        }
        Ok(m)
    }

    /// True for Ring and Interval control spaces.
    pub fn is_one_dimensional(&self) -> bool {
        matches!(self.space, ControlSpace::Ring { .. } | ControlSpace::Interval { .. })
    }

    /// Scalar coordinate of a site on a 1D space.
    pub fn coordinate(&self, id: SiteId) -> Result<Length> {
        match &self.site(id)?.position {
            Position::Scalar(x) => Ok(*x),
            _ => Err(Error::Precondition("layout is not one-dimensional".into())),
        }
    }

    /// Site ids of a 1D layout ordered by coordinate (ties by id).
    pub fn ranked_1d(&self) -> Result<Vec<SiteId>> {
        if !self.is_one_dimensional() {
            return Err(Error::Precondition("layout is not one-dimensional".into()));
        }
        let mut ids: Vec<SiteId> = self.sites.iter().map(|s| s.id).collect();
        ids.sort_by_key(|id| (self.coordinate(*id).unwrap(), *id));
        Ok(ids)
    }
}

/// Greedy ε-net over the sites, deterministic in ascending site-id order:
/// every site ends within `l0` of a net member and members are pairwise at
/// distance ≥ `l0`.
pub fn epsilon_net(layout: &Layout, l0: Length) -> Result<Vec<SiteId>> {
    if l0 <= Length::zero() {
        return Err(Error::Precondition("net radius must be positive".into()));
    }
    let mut ids: Vec<SiteId> = layout.sites().iter().map(|s| s.id).collect();
    ids.sort();
    let mut net: Vec<SiteId> = Vec::new();
    for id in ids {
        let ok = net.iter().all(|&m| layout.distance(id, m).unwrap() >= l0);
        if ok {
            net.push(id);
        }
    }
    Ok(net)
}

/// A per-site height function together with its Lipschitz constant.
#[derive(Debug, Clone)]
pub struct HeightFunction {
    values: Vec<(SiteId, Length)>,
    lipschitz: Length,
}

impl HeightFunction {
    pub fn new(mut values: Vec<(SiteId, Length)>, lipschitz: Length) -> Self {
        values.sort_by_key(|(id, _)| *id);
        HeightFunction { values, lipschitz }
    }

    /// Constant-zero height on a layout (Lipschitz constant 0).
    pub fn zero(layout: &Layout) -> Self {
        Self::new(
            layout.sites().iter().map(|s| (s.id, Length::zero())).collect(),
            Length::zero(),
        )
    }

    pub fn value(&self, id: SiteId) -> Result<Length> {
        self.values
            .binary_search_by_key(&id, |(i, _)| *i)
            .map(|k| self.values[k].1)
            .map_err(|_| Error::UnknownSite(id.0))
    }

    pub fn lipschitz(&self) -> Length {
        self.lipschitz
    }

    pub fn values(&self) -> &[(SiteId, Length)] {
        &self.values
    }
}

/// h(x) = dist(x, B) for a nonempty site set B; Lipschitz constant 1.
pub fn height_from_set(layout: &Layout, b: &[SiteId]) -> Result<HeightFunction> {
    if b.is_empty() {
        return Err(Error::Precondition("height base set is empty".into()));
    }
    for &m in b {
        layout.site(m)?;
    }
    let mut values = Vec::with_capacity(layout.site_count());
    for s in layout.sites() {
        let h = b
            .iter()
            .map(|&m| layout.distance(s.id, m).unwrap())
            .min()
            .unwrap();
        values.push((s.id, h));
    }
    Ok(HeightFunction::new(values, len_int(1)))
}

/// Outcome of the qudit-density check.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DensityReport {
    pub holds: bool,
    /// First failing (site, shell index k, observed count, required bound)
    /// and which bound failed.
    pub first_violation: Option<DensityViolation>,
    /// Shell unit: the minimum inter-site spacing.
    pub unit: Length,
    pub shells_checked: u64,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DensityViolation {
    pub site: SiteId,
    pub shell: u64,
    pub observed: u64,
    pub bound: u64,
    pub kind: DensityBound,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DensityBound {
    /// ball must hold at least ⌊c·k^d⌋ physical qudits
    PhysicalBall,
    /// shell may hold at most ⌊c'·k^(d-1)⌋ ancilla qudits
    AncillaShell,
}

fn pow_len(x: Length, e: i32) -> Length {
    let mut acc = len_int(1);
    for _ in 0..e {
        acc *= x;
    }
    acc
}

fn floor_len(x: Length) -> i64 {
    x.floor().to_integer()
}

/// Checks, for every site x and every shell radius k·u with k·u ≤ l0
/// (u = min inter-site spacing), that the ball of radius k·u around x
/// holds at least ⌊c·k^d⌋ physical qudits and the shell ((k−1)·u, k·u]
/// holds at most ⌊c'·k^(d−1)⌋ ancilla qudits.
pub fn check_density_assumption(
    layout: &Layout,
    c: Length,
    c_prime: Length,
    d: u32,
    l0: Length,
) -> Result<DensityReport> {
    if c <= Length::zero() || c > c_prime {
        return Err(Error::Precondition("need 0 < c <= c'".into()));
    }
    if d == 0 {
        return Err(Error::Precondition("dimension d must be positive".into()));
    }
    let unit = layout.min_spacing();
    let kmax = floor_len(l0 / unit).max(0) as u64;
    let mut report =
        DensityReport { holds: true, first_violation: None, unit, shells_checked: kmax };
    'outer: for x in layout.sites() {
        // per-site distances once
        let dists: Vec<(Length, u64, u64)> = layout
            .sites()
            .iter()
            .map(|s| {
                let d = layout.distance(x.id, s.id).unwrap();
                let phys = s
                    .qudits
                    .iter()
                    .filter(|q| q.kind == QuditKind::Physical)
                    .count() as u64;
                let anc = s.qudits.len() as u64 - phys;
                (d, phys, anc)
            })
            .collect();
        for k in 1..=kmax {
            let radius = unit * len_int(k as i64);
            let inner = unit * len_int(k as i64 - 1);
            let mut ball_phys = 0u64;
            let mut shell_anc = 0u64;
            for (dist, phys, anc) in &dists {
                if *dist <= radius {
                    ball_phys += phys;
                    if *dist > inner {
                        shell_anc += anc;
                    }
                }
            }
            let need_phys = floor_len(c * pow_len(len_int(k as i64), d as i32)).max(0) as u64;
            let max_anc =
                floor_len(c_prime * pow_len(len_int(k as i64), d as i32 - 1)).max(0) as u64;
            if ball_phys < need_phys {
                report.holds = false;
                report.first_violation = Some(DensityViolation {
                    site: x.id,
                    shell: k,
                    observed: ball_phys,
                    bound: need_phys,
                    kind: DensityBound::PhysicalBall,
                });
                break 'outer;
            }
            if shell_anc > max_anc {
                report.holds = false;
                report.first_violation = Some(DensityViolation {
                    site: x.id,
                    shell: k,
                    observed: shell_anc,
                    bound: max_anc,
                    kind: DensityBound::AncillaShell,
                });
                break 'outer;
            }
        }
    }
    Ok(report)
}

/// One physical qudit of dimension `p` per site.
pub fn one_physical(p: u32) -> Vec<Qudit> {
    vec![Qudit { dim: p, kind: QuditKind::Physical }]
}

/// One physical plus one co-located ancilla qudit, both of dimension `p`.
pub fn phys_anc_pair(p: u32) -> Vec<Qudit> {
    vec![
        Qudit { dim: p, kind: QuditKind::Physical },
        Qudit { dim: p, kind: QuditKind::Ancilla },
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ring12() -> Layout {
        Layout::uniform_ring(12, len_int(1), one_physical(2)).unwrap()
    }

    #[test]
    fn ring_distances_are_geodesic() {
        let l = ring12();
        assert_eq!(l.distance(SiteId(0), SiteId(3)).unwrap(), len(1, 4));
        assert_eq!(l.distance(SiteId(0), SiteId(11)).unwrap(), len(1, 12));
        assert_eq!(l.distance(SiteId(5), SiteId(5)).unwrap(), Length::zero());
        assert_eq!(
            l.distance(SiteId(2), SiteId(9)).unwrap(),
            l.distance(SiteId(9), SiteId(2)).unwrap()
        );
    }

    #[test]
    fn unknown_site_rejected() {
        let l = ring12();
        assert!(matches!(l.distance(SiteId(0), SiteId(40)), Err(Error::UnknownSite(40))));
    }

    #[test]
    fn greedy_net_on_ring() {
        let l = ring12();
        let net = epsilon_net(&l, len(3, 10)).unwrap();
        assert_eq!(net, vec![SiteId(0), SiteId(4), SiteId(8)]);
        // both net conditions, exhaustively
        for s in l.sites() {
            let covered = net.iter().any(|&m| l.distance(s.id, m).unwrap() <= len(3, 10));
            assert!(covered, "site {} not covered", s.id);
        }
        for (i, &a) in net.iter().enumerate() {
            for &b in &net[..i] {
                assert!(l.distance(a, b).unwrap() >= len(3, 10));
            }
        }
    }

    #[test]
    fn net_degenerate_cases() {
        let l = ring12();
        // radius beyond the diameter -> single element
        assert_eq!(epsilon_net(&l, len_int(2)).unwrap(), vec![SiteId(0)]);
        // two far sites, small radius -> both
        let two = Layout::uniform_ring(2, len_int(1), one_physical(2)).unwrap();
        assert_eq!(epsilon_net(&two, len(1, 4)).unwrap().len(), 2);
    }

    #[test]
    fn height_from_set_basics() {
        let l = ring12();
        let all: Vec<SiteId> = l.sites().iter().map(|s| s.id).collect();
        let h = height_from_set(&l, &all).unwrap();
        assert!(h.values().iter().all(|(_, v)| v.is_zero()));

        let net = vec![SiteId(0), SiteId(4), SiteId(8)];
        let h = height_from_set(&l, &net).unwrap();
        assert_eq!(h.value(SiteId(2)).unwrap(), len(2, 12));
        assert_eq!(h.value(SiteId(0)).unwrap(), Length::zero());
        assert_eq!(h.lipschitz(), len_int(1));
        assert!(height_from_set(&l, &[]).is_err());
    }

    #[test]
    fn height_is_one_lipschitz() {
        let l = ring12();
        let h = height_from_set(&l, &[SiteId(0), SiteId(5)]).unwrap();
        for a in l.sites() {
            for b in l.sites() {
                let dh = (h.value(a.id).unwrap() - h.value(b.id).unwrap()).abs();
                assert!(dh <= l.distance(a.id, b.id).unwrap());
            }
        }
    }

    #[test]
    fn density_holds_on_padded_ring() {
        let l = Layout::unit_ring(16, phys_anc_pair(2)).unwrap();
        let rep =
            check_density_assumption(&l, len_int(1), len_int(2), 1, len_int(4)).unwrap();
        assert!(rep.holds, "{:?}", rep.first_violation);
    }

    #[test]
    fn density_fails_on_two_line_torus() {
        let l = Layout::two_line_torus(8).unwrap();
        let rep =
            check_density_assumption(&l, len_int(1), len_int(8), 2, len_int(3)).unwrap();
        assert!(!rep.holds);
        assert_eq!(rep.first_violation.as_ref().unwrap().kind, DensityBound::PhysicalBall);
    }

    #[test]
    fn density_trivial_when_no_ancillas() {
        let l = ring12();
        let rep =
            check_density_assumption(&l, len(1, 2), len_int(100), 1, len(1, 3)).unwrap();
        assert!(rep.holds);
    }

    #[test]
    fn density_monotone_in_c() {
        let l = Layout::unit_ring(12, phys_anc_pair(3)).unwrap();
        let strong =
            check_density_assumption(&l, len_int(2), len_int(4), 1, len_int(3)).unwrap();
        let weak =
            check_density_assumption(&l, len_int(1), len_int(4), 1, len_int(3)).unwrap();
        if strong.holds {
            assert!(weak.holds);
        }
    }

    #[test]
    fn metric_graph_validation() {
        let rows = vec![
            vec![len_int(0), len_int(1), len_int(5)],
            vec![len_int(1), len_int(0), len_int(1)],
            vec![len_int(5), len_int(1), len_int(0)],
        ];
        let dist = DistanceMatrix::from_rows(&rows).unwrap();
        // 5 > 1 + 1 violates the triangle inequality
        assert!(dist.validate(10).is_err());
    }

    #[test]
    fn torus_distance_is_sup_geodesic() {
        let l = Layout::unit_torus(6, 4, |_, _| one_physical(2)).unwrap();
        // site (5,0) id 5 and site (0,0) id 0: geodesic 1 in x
        assert_eq!(l.distance(SiteId(5), SiteId(0)).unwrap(), len_int(1));
        // (2,3) id 20 vs (2,0) id 2: geodesic 1 in y
        assert_eq!(l.distance(SiteId(20), SiteId(2)).unwrap(), len_int(1));
    }
}
