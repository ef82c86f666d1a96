//! Borrowing functions and ancilla removal: a causal schedule plus a site
//! map with ordered borrow intervals lets every gate trade its ancillas for
//! far-away physical qudits, after which the circuit acts on physical
//! qudits only and implements the same unitary.

use crate::backend::{circuit_to_qca, VerifyOptions};
use crate::circuit::{is_causal, make_time_function, Circuit, Gate, TimeFunction};
use crate::error::{Error, Result};
use crate::fixtures::relabel_gate;
use crate::lattice::{
    check_density_assumption, epsilon_net, height_from_set, HeightFunction, Layout, Length,
    QuditKind, QuditRef, SiteId,
};
use num_rational::Rational64;
use num_traits::Zero;
use std::collections::BTreeMap;

/// A circuit together with a causal time function; the pair all borrowing
/// is defined against.
#[derive(Debug, Clone)]
pub struct TimedCircuit {
    circuit: Circuit,
    tau: TimeFunction,
}

impl TimedCircuit {
    pub fn new(circuit: Circuit, tau: TimeFunction) -> Result<TimedCircuit> {
        if let Some((a, b)) = is_causal(&circuit, &tau)? {
            return Err(Error::NotCausal { earlier: a.0, later: b.0 });
        }
        Ok(TimedCircuit { circuit, tau })
    }

    pub fn circuit(&self) -> &Circuit {
        &self.circuit
    }

    pub fn tau(&self) -> &TimeFunction {
        &self.tau
    }
}

/// Map from ancilla-bearing sites to physical-bearing sites; slot k of the
/// source's ancillas borrows slot k of the target's physical qudits.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BorrowingFunction {
    map: BTreeMap<SiteId, SiteId>,
}

impl BorrowingFunction {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn from_map(map: BTreeMap<SiteId, SiteId>) -> Self {
        BorrowingFunction { map }
    }

    pub fn target(&self, j: SiteId) -> Option<SiteId> {
        self.map.get(&j).copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (SiteId, SiteId)> + '_ {
        self.map.iter().map(|(a, b)| (*a, *b))
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Ancilla-slot to physical-slot pairing at one site, in slot order.
    pub fn slot_pairs(&self, layout: &Layout, j: SiteId) -> Result<Vec<(QuditRef, QuditRef)>> {
        let Some(i) = self.target(j) else { return Ok(vec![]) };
        let src = layout.site(j)?;
        let dst = layout.site(i)?;
        let anc: Vec<(u32, u32)> = src
            .qudits
            .iter()
            .enumerate()
            .filter(|(_, q)| q.kind == QuditKind::Ancilla)
            .map(|(s, q)| (s as u32, q.dim))
            .collect();
        let phys: Vec<(u32, u32)> = dst
            .qudits
            .iter()
            .enumerate()
            .filter(|(_, q)| q.kind == QuditKind::Physical)
            .map(|(s, q)| (s as u32, q.dim))
            .collect();
        if anc.len() > phys.len() {
            return Err(Error::Borrowing(format!(
                "site {j} has {} ancilla slots but target {i} offers {} physical slots",
                anc.len(),
                phys.len()
            )));
        }
        let mut out = Vec::with_capacity(anc.len());
        for ((aslot, adim), (pslot, pdim)) in anc.into_iter().zip(phys) {
            if adim != pdim {
                return Err(Error::Borrowing(format!(
                    "dimension mismatch: site {j} slot {aslot} (dim {adim}) vs target {i} slot {pslot} (dim {pdim})"
                )));
            }
            out.push((QuditRef { site: j, slot: aslot }, QuditRef { site: i, slot: pslot }));
        }
        Ok(out)
    }

    /// Maximum distance a borrow reaches.
    pub fn max_distance(&self, layout: &Layout) -> Result<Length> {
        let mut best = Length::zero();
        for (j, i) in &self.map {
            let d = layout.distance(*j, *i)?;
            if d > best {
                best = d;
            }
        }
        Ok(best)
    }
}

#[derive(Debug, Clone, Default)]
pub struct BorrowReport {
    pub ok: bool,
    pub violations: Vec<String>,
    pub max_borrow_distance: Length,
}

/// Inclusive hull [min τ, max τ] of the gate times touching each site.
pub fn site_time_hulls(tc: &TimedCircuit) -> Result<BTreeMap<SiteId, (i64, i64)>> {
    let mut hulls: BTreeMap<SiteId, (i64, i64)> = BTreeMap::new();
    for round in tc.circuit.rounds() {
        for g in round {
            let t = tc.tau.time(g.id)?;
            for s in g.support_sites() {
                hulls
                    .entry(s)
                    .and_modify(|(lo, hi)| {
                        *lo = (*lo).min(t);
                        *hi = (*hi).max(t);
                    })
                    .or_insert((t, t));
            }
        }
    }
    Ok(hulls)
}

fn hulls_disjoint(a: (i64, i64), b: (i64, i64)) -> bool {
    a.1 < b.0 || b.1 < a.0
}

/// Checks all three borrowing-function conditions exactly:
/// the range of f lands on physical-bearing sites with matching slots, f is
/// total on ancilla-bearing sites inside gate supports, and for every
/// target the borrow intervals (including the target's own gate interval)
/// are pairwise strictly ordered.
pub fn validate_borrowing(tc: &TimedCircuit, f: &BorrowingFunction) -> Result<BorrowReport> {
    let layout = tc.circuit.layout().clone();
    let mut report = BorrowReport { ok: true, ..Default::default() };
    let hulls = site_time_hulls(tc)?;

    // totality on ancilla-bearing sites touched by gates
    let mut touched_anc_sites: Vec<SiteId> = Vec::new();
    for round in tc.circuit.rounds() {
        for g in round {
            for q in &g.support {
                if layout.qudit(*q)?.kind == QuditKind::Ancilla {
                    touched_anc_sites.push(q.site);
                }
            }
        }
    }
    touched_anc_sites.sort();
    touched_anc_sites.dedup();
    for j in &touched_anc_sites {
        if f.target(*j).is_none() {
            report.ok = false;
            report.violations.push(format!(
                "no borrow target for ancilla-bearing site {j} inside a gate support"
            ));
        }
    }

    // targets physical, slots compatible
    let mut borrowers_of: BTreeMap<SiteId, Vec<SiteId>> = BTreeMap::new();
    for (j, i) in f.iter() {
        let has_physical = layout
            .site(i)?
            .qudits
            .iter()
            .any(|q| q.kind == QuditKind::Physical);
        if !has_physical {
            report.ok = false;
            report
                .violations
                .push(format!("target {i} of site {j} holds no physical qudit"));
            continue;
        }
        if let Err(e) = f.slot_pairs(&layout, j) {
            report.ok = false;
            report.violations.push(e.to_string());
            continue;
        }
        borrowers_of.entry(i).or_default().push(j);
        let d = layout.distance(j, i)?;
        if d > report.max_borrow_distance {
            report.max_borrow_distance = d;
        }
    }

    // per-target strict interval ordering, the target's own gates included
    for (i, borrowers) in &borrowers_of {
        let mut intervals: Vec<(SiteId, (i64, i64))> = Vec::new();
        if let Some(own) = hulls.get(i) {
            intervals.push((*i, *own));
        }
        for j in borrowers {
            if let Some(h) = hulls.get(j) {
                intervals.push((*j, *h));
            }
        }
        for (a, &(sa, ha)) in intervals.iter().enumerate() {
            for &(sb, hb) in &intervals[..a] {
                if !hulls_disjoint(ha, hb) {
                    report.ok = false;
                    report.violations.push(format!(
                        "borrow intervals at target {i} are not ordered: site {sa} spans {:?}, site {sb} spans {:?}",
                        ha, hb
                    ));
                }
            }
        }
    }
    Ok(report)
}

fn site_units(layout: &Layout, len: Length) -> Rational64 {
    len / layout.min_spacing()
}

fn gate_range_sites(circuit: &Circuit) -> i64 {
    let r = site_units(circuit.layout(), circuit.gate_range());
    let mut k = r.floor().to_integer();
    if Rational64::from_integer(k) < r {
        k += 1;
    }
    k.max(0)
}

fn ranked_sites(layout: &Layout) -> Result<Vec<SiteId>> {
    if !layout.is_one_dimensional() {
        return Err(Error::Precondition("construction needs a Ring or Interval layout".into()));
    }
    let mut ids: Vec<SiteId> = layout.sites().iter().map(|s| s.id).collect();
    ids.sort_by_key(|id| (layout.coordinate(*id).unwrap(), *id));
    Ok(ids)
}

/// Greedy exact matcher shared by all constructions: assigns each borrower
/// the first candidate target whose claimed intervals stay pairwise
/// disjoint.
struct Claims {
    claimed: BTreeMap<SiteId, Vec<(i64, i64)>>,
}

impl Claims {
    fn new(hulls: &BTreeMap<SiteId, (i64, i64)>, targets: impl Iterator<Item = SiteId>) -> Self {
        let mut claimed: BTreeMap<SiteId, Vec<(i64, i64)>> = BTreeMap::new();
        for t in targets {
            let mut v = Vec::new();
            if let Some(own) = hulls.get(&t) {
                v.push(*own);
            }
            claimed.insert(t, v);
        }
        Claims { claimed }
    }

    fn try_claim(&mut self, target: SiteId, hull: Option<(i64, i64)>) -> bool {
        let Some(list) = self.claimed.get_mut(&target) else { return false };
        match hull {
            None => true, // untouched borrower constrains nothing
            Some(h) => {
                if list.iter().all(|c| hulls_disjoint(*c, h)) {
                    list.push(h);
                    true
                } else {
                    false
                }
            }
        }
    }
}

/// Four-block staircase borrowing on a ring with one physical and one
/// ancilla qudit per site: anchors every eight blocks induce the sawtooth
/// time function, and each ancilla borrows the physical qudit two blocks
/// away (blocks 1↔3, 2↔4), never farther than twice the block width.
pub fn build_borrowing_blocks_1d(
    circuit: &Circuit,
    block_width: Option<i64>,
) -> Result<(TimeFunction, BorrowingFunction)> {
    let layout = circuit.layout().clone();
    let ranked = ranked_sites(&layout)?;
    for s in layout.sites() {
        let phys = s.qudits.iter().filter(|q| q.kind == QuditKind::Physical).count();
        let anc = s.qudits.len() - phys;
        if phys != 1 || anc != 1 || s.qudits[0].dim != s.qudits[1].dim {
            return Err(Error::Precondition(
                "block borrowing needs one physical and one ancilla qudit of equal dimension per site"
                    .into(),
            ));
        }
    }
    let n = ranked.len() as i64;
    let depth = circuit.depth().max(1) as i64;
    let r = gate_range_sites(circuit);
    let w = block_width.unwrap_or(((r + 1) * depth + 1) / 2).max(1);
    let period = 8 * w;
    if n < period {
        return Err(Error::Precondition(format!(
            "ring of {n} sites cannot host one full block period of {period} sites"
        )));
    }
    let n_periods = (n / period).max(1);
    let anchors: Vec<SiteId> = (0..n_periods)
        .map(|k| ranked[((k * n) / n_periods) as usize])
        .collect();
    let h = height_from_set(&layout, &anchors)?;
    let spacing = layout.min_spacing();
    // heights in site units; the Lipschitz constant is then 1 per spacing
    let h_sites = HeightFunction::new(
        h.values().iter().map(|(s, v)| (*s, *v / spacing)).collect(),
        Rational64::from_integer(1) / spacing,
    );
    let c = r + 1;
    let tau = make_time_function(circuit, &h_sites, c)?;
    let tc = TimedCircuit::new(circuit.clone(), tau)?;
    let hulls = site_time_hulls(&tc)?;

    let level = |s: SiteId| -> i64 {
        (h_sites.value(s).unwrap().floor().to_integer()).max(0)
    };
    let mut borrowers: Vec<SiteId> = ranked.clone();
    borrowers.sort_by_key(|s| (level(*s), *s));
    let mut claims = Claims::new(&hulls, ranked.iter().copied());
    let reach = spacing * Rational64::from_integer(2 * w);
    let mut map = BTreeMap::new();
    for j in borrowers {
        let hull = hulls.get(&j).copied();
        let mut placed = false;
        // candidates sorted by |Δlevel| descending would be fastest, but a
        // plain id-ordered scan keeps the construction deterministic
        for i in &ranked {
            if *i == j || layout.distance(j, *i)? > reach {
                continue;
            }
            if claims.try_claim(*i, hull) {
                map.insert(j, *i);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Borrowing(format!(
                "no admissible borrow target within two blocks of site {j}"
            )));
        }
    }
    let f = BorrowingFunction::from_map(map);
    let report = validate_borrowing(&tc, &f)?;
    if !report.ok {
        return Err(Error::Borrowing(report.violations.join("; ")));
    }
    Ok((tc.tau, f))
}

/// Density parameters of the qudit-density floor.
#[derive(Debug, Clone, Copy)]
pub struct DensityParams {
    pub c: Length,
    pub c_prime: Length,
    pub d: u32,
}

/// Net-based borrowing for general layouts: ancillas split into distance
/// shells of width (r+1)·D around an ε-net, each net cell's physical qudits
/// split into two halves, even shells borrowing from one half and odd
/// shells from the other. Fails with a density diagnostic when a cell
/// cannot host its shells.
pub fn build_borrowing_net(
    tc: &TimedCircuit,
    l0: Length,
    density: DensityParams,
) -> Result<BorrowingFunction> {
    let layout = tc.circuit.layout().clone();
    let spacing = layout.min_spacing();
    let report = check_density_assumption(&layout, density.c, density.c_prime, density.d, l0)?;
    if !report.holds {
        let v = report.first_violation.unwrap();
        return Err(Error::Density(format!(
            "qudit-density floor fails at site {} shell {} ({} observed, bound {})",
            v.site, v.shell, v.observed, v.bound
        )));
    }
    let net = epsilon_net(&layout, l0)?;
    let depth = tc.circuit.depth().max(1) as i64;
    let r = gate_range_sites(&tc.circuit);
    let shell_width = (r + 1) * depth;

    // nearest net point per site (ties to the smaller net id)
    let mut cell_of: BTreeMap<SiteId, SiteId> = BTreeMap::new();
    for s in layout.sites() {
        let mut best: Option<(Length, SiteId)> = None;
        for b in &net {
            let d = layout.distance(s.id, *b)?;
            if best.map_or(true, |(bd, bi)| d < bd || (d == bd && *b < bi)) {
                best = Some((d, *b));
            }
        }
        cell_of.insert(s.id, best.unwrap().1);
    }
    let h = height_from_set(&layout, &net)?;
    let shell = |s: SiteId| -> i64 {
        ((h.value(s).unwrap() / spacing).floor().to_integer()) / shell_width
    };

    // verify the supplied schedule matches the net construction
    {
        let h_sites = HeightFunction::new(
            h.values().iter().map(|(s, v)| (*s, *v / spacing)).collect(),
            Rational64::from_integer(1) / spacing,
        );
        let expect = make_time_function(&tc.circuit, &h_sites, r + 1)?;
        for round in tc.circuit.rounds() {
            for g in round {
                if tc.tau.time(g.id)? != expect.time(g.id)? {
                    return Err(Error::Precondition(
                        "schedule is not the net time function ⌊dist(·,B)⌋ + (r+1)a".into(),
                    ));
                }
            }
        }
    }

    // cells, their physical halves, and ancilla shell groups
    let mut cells: BTreeMap<SiteId, Vec<SiteId>> = BTreeMap::new();
    for s in layout.sites() {
        cells.entry(cell_of[&s.id]).or_default().push(s.id);
    }
    let hulls = site_time_hulls(tc)?;
    let mut claims = Claims::new(&hulls, layout.sites().iter().map(|s| s.id));
    let mut map = BTreeMap::new();
    let mut max_group = 0usize;
    for (x, members) in &cells {
        let mut members = members.clone();
        members.sort();
        let physicals: Vec<SiteId> = members
            .iter()
            .copied()
            .filter(|s| {
                layout
                    .site(*s)
                    .unwrap()
                    .qudits
                    .iter()
                    .any(|q| q.kind == QuditKind::Physical)
            })
            .collect();
        // halves by even/odd position in site-id order
        let half: [Vec<SiteId>; 2] = [
            physicals.iter().copied().step_by(2).collect(),
            physicals.iter().copied().skip(1).step_by(2).collect(),
        ];
        let mut borrowers: Vec<SiteId> = members
            .iter()
            .copied()
            .filter(|s| {
                layout
                    .site(*s)
                    .unwrap()
                    .qudits
                    .iter()
                    .any(|q| q.kind == QuditKind::Ancilla)
            })
            .collect();
        borrowers.sort_by_key(|s| (shell(*s), *s));
        let mut group_sizes: BTreeMap<i64, usize> = BTreeMap::new();
        for j in &borrowers {
            *group_sizes.entry(shell(*j)).or_default() += 1;
        }
        max_group = max_group.max(group_sizes.values().copied().max().unwrap_or(0));
        for j in borrowers {
            let parity = (shell(j) % 2) as usize;
            let hull = hulls.get(&j).copied();
            let mut placed = false;
            for i in &half[parity] {
                if *i == j {
                    continue;
                }
                if claims.try_claim(*i, hull) {
                    map.insert(j, *i);
                    placed = true;
                    break;
                }
            }
            if !placed {
                return Err(Error::Density(format!(
                    "net cell at {x} cannot host its ancillas: site {j} in shell {} found no free physical qudit in its half (cell has {} physicals)",
                    shell(j),
                    physicals.len()
                )));
            }
        }
    }
    // capacity inequality ⌊c·(l0/u)^d⌋ / 2 ≥ largest shell group
    let l0_units = (l0 / spacing).floor().to_integer().max(0);
    let mut cap = Rational64::from_integer(1);
    for _ in 0..density.d {
        cap *= Rational64::from_integer(l0_units);
    }
    let cap = (density.c * cap).floor().to_integer() / 2;
    if (max_group as i64) > cap {
        return Err(Error::Density(format!(
            "largest shell group ({max_group}) exceeds half the guaranteed cell capacity ({cap}); increase the net radius"
        )));
    }
    let f = BorrowingFunction::from_map(map);
    let rep = validate_borrowing(tc, &f)?;
    if !rep.ok {
        return Err(Error::Borrowing(rep.violations.join("; ")));
    }
    Ok(f)
}

/// Wraps a site involution as a borrowing function after verifying the
/// height-gap condition |⌊h(x)⌋ − ⌊h(f(x))⌋| > D·(r+1) and, when given, a
/// cap on the borrow distance.
pub fn build_borrowing_involution(
    tc: &TimedCircuit,
    h: &HeightFunction,
    f: &BTreeMap<SiteId, SiteId>,
    max_distance: Option<Length>,
) -> Result<BorrowingFunction> {
    let layout = tc.circuit.layout().clone();
    let depth = tc.circuit.depth().max(1) as i64;
    let r = gate_range_sites(&tc.circuit);
    let gap = depth * (r + 1);
    for (x, y) in f {
        if f.get(y) != Some(x) {
            return Err(Error::Precondition(format!(
                "map is not an involution at sites {x}, {y}"
            )));
        }
        if x == y {
            return Err(Error::Precondition(format!("site {x} pairs with itself")));
        }
        let hx = h.value(*x)?.floor().to_integer();
        let hy = h.value(*y)?.floor().to_integer();
        if (hx - hy).abs() <= gap {
            return Err(Error::Borrowing(format!(
                "height gap at sites {x}, {y} is {} but must exceed D(r+1) = {gap}",
                (hx - hy).abs()
            )));
        }
        if let Some(cap) = max_distance {
            let d = layout.distance(*x, *y)?;
            if d > cap {
                return Err(Error::Borrowing(format!(
                    "pair {x}, {y} is {d} apart, beyond the allowed {cap}"
                )));
            }
        }
    }
    // keep only the ancilla-bearing → physical-bearing directions
    let mut map = BTreeMap::new();
    for (x, y) in f {
        let has_anc = layout
            .site(*x)?
            .qudits
            .iter()
            .any(|q| q.kind == QuditKind::Ancilla);
        if has_anc {
            map.insert(*x, *y);
        }
    }
    let out = BorrowingFunction::from_map(map);
    let rep = validate_borrowing(tc, &out)?;
    if !rep.ok {
        return Err(Error::Borrowing(rep.violations.join("; ")));
    }
    Ok(out)
}

/// Result of an ancilla-removal pass.
#[derive(Debug, Clone)]
pub struct Removed {
    pub circuit: Circuit,
    /// original τ value of each output round
    pub round_times: Vec<i64>,
    pub max_borrow_distance: Length,
}

/// Conjugates every gate by the swaps prescribed by the borrowing function
/// and regroups by time value. Refuses unless the circuit acts exactly
/// trivially on all ancilla qudits (the hypothesis that makes borrowed
/// qudits come back unchanged).
pub fn remove_ancillas(
    tc: &TimedCircuit,
    f: &BorrowingFunction,
    opts: &VerifyOptions,
) -> Result<Removed> {
    let layout = tc.circuit.layout().clone();
    let rep = validate_borrowing(tc, f)?;
    if !rep.ok {
        return Err(Error::Borrowing(rep.violations.join("; ")));
    }
    let ancillas = layout.ancilla_refs();
    let qca = circuit_to_qca(&tc.circuit, opts)?;
    if !qca.is_trivial_on(&ancillas, opts)? {
        let witness = match &qca {
            crate::backend::QcaHandle::Clifford(c) => c.first_nontrivial_on(&ancillas)?,
            _ => None,
        };
        return Err(Error::Precondition(match witness {
            Some(q) => format!(
                "circuit does not act trivially on the ancillas: generator at {q} moves"
            ),
            None => "circuit does not act trivially on the ancillas".into(),
        }));
    }
    // conjugate each gate by its borrow swaps and bucket by time
    let mut buckets: BTreeMap<i64, Vec<Gate>> = BTreeMap::new();
    for round in tc.circuit.rounds() {
        for g in round {
            let mut swap: BTreeMap<QuditRef, QuditRef> = BTreeMap::new();
            for q in &g.support {
                if layout.qudit(*q)?.kind == QuditKind::Ancilla {
                    let j = q.site;
                    for (a, p) in f.slot_pairs(&layout, j)? {
                        if a == *q {
                            swap.insert(a, p);
                        }
                    }
                }
            }
            let new_gate = if swap.is_empty() {
                g.clone()
            } else {
                relabel_gate(g, &|q| swap.get(&q).copied().unwrap_or(q))
            };
            buckets.entry(tc.tau.time(g.id)?).or_default().push(new_gate);
        }
    }
    let mut rounds = Vec::with_capacity(buckets.len());
    let mut round_times = Vec::with_capacity(buckets.len());
    let mut max_diam = Length::zero();
    for (t, gates) in buckets {
        for g in &gates {
            let d = g.diameter(&layout)?;
            if d > max_diam {
                max_diam = d;
            }
        }
        round_times.push(t);
        rounds.push(gates);
    }
    let out = Circuit::new(layout.clone(), max_diam, rounds)?;
    // the conjugated gates must never touch an ancilla again
    for g in out.gates() {
        for q in &g.support {
            if layout.qudit(*q)?.kind == QuditKind::Ancilla {
                return Err(Error::Borrowing(format!(
                    "gate {} still touches ancilla {q} after borrowing",
                    g.id
                )));
            }
        }
    }
    Ok(Removed {
        circuit: out,
        round_times,
        max_borrow_distance: rep.max_borrow_distance,
    })
}

/// Removal for 1D layouts where only every K-th site is physical. The
/// sawtooth teeth are deepened so each physical qudit can host its K−1
/// neighboring ancillas in strictly ordered borrow windows (K is padded to
/// a power of two for the window bookkeeping), and one swap conjugation
/// removes everything.
pub fn iterated_removal(
    circuit: &Circuit,
    k: u32,
    opts: &VerifyOptions,
) -> Result<Circuit> {
    let layout = circuit.layout().clone();
    let ranked = ranked_sites(&layout)?;
    if k == 0 {
        return Err(Error::Precondition("K must be positive".into()));
    }
    if k == 1 {
        return Ok(circuit.clone());
    }
    for (rank, s) in ranked.iter().enumerate() {
        let site = layout.site(*s)?;
        if site.qudits.len() != 1 {
            return Err(Error::Precondition("expected one qudit per site".into()));
        }
        let want = if rank % (k as usize) == 0 { QuditKind::Physical } else { QuditKind::Ancilla };
        if site.qudits[0].kind != want {
            return Err(Error::Precondition(format!(
                "site {s} at rank {rank} should be {:?} for density 1/{k}",
                want
            )));
        }
    }
    let k_padded = i64::from(k.next_power_of_two());
    let n = ranked.len() as i64;
    let depth = circuit.depth().max(1) as i64;
    let r = gate_range_sites(circuit);
    let g = (r + 1) * depth;
    // each tooth must stack K ordered borrow windows of height G+1
    let tooth = k_padded * (g + 1) + 1;
    let period = 2 * tooth;
    if n < period {
        return Err(Error::Precondition(format!(
            "ring of {n} sites is too small for K={k} borrowing teeth of {tooth} sites"
        )));
    }
    let n_periods = (n / period).max(1);
    let anchors: Vec<SiteId> = (0..n_periods)
        .map(|t| ranked[((t * n) / n_periods) as usize])
        .collect();
    let h = height_from_set(&layout, &anchors)?;
    let spacing = layout.min_spacing();
    let h_sites = HeightFunction::new(
        h.values().iter().map(|(s, v)| (*s, *v / spacing)).collect(),
        Rational64::from_integer(1) / spacing,
    );
    let tau = make_time_function(circuit, &h_sites, r + 1)?;
    let tc = TimedCircuit::new(circuit.clone(), tau)?;
    let hulls = site_time_hulls(&tc)?;
    let physicals: Vec<SiteId> = layout
        .sites()
        .iter()
        .filter(|s| s.qudits.iter().any(|q| q.kind == QuditKind::Physical))
        .map(|s| s.id)
        .collect();
    let mut borrowers: Vec<SiteId> = Vec::new();
    for round in tc.circuit().rounds() {
        for gate in round {
            for q in &gate.support {
                if layout.qudit(*q)?.kind == QuditKind::Ancilla {
                    borrowers.push(q.site);
                }
            }
        }
    }
    borrowers.sort();
    borrowers.dedup();
    let level = |s: SiteId| h_sites.value(s).unwrap().floor().to_integer();
    borrowers.sort_by_key(|s| (level(*s), *s));
    let reach = spacing * Rational64::from_integer(period);
    let mut claims = Claims::new(&hulls, physicals.iter().copied());
    let mut map = BTreeMap::new();
    for j in borrowers {
        let hull = hulls.get(&j).copied();
        let mut placed = false;
        for i in &physicals {
            if layout.distance(j, *i)? > reach {
                continue;
            }
            if claims.try_claim(*i, hull) {
                map.insert(j, *i);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::Borrowing(format!(
                "no physical qudit can host ancilla site {j}: all borrow windows within reach are taken"
            )));
        }
    }
    let f = BorrowingFunction::from_map(map);
    let removed = remove_ancillas(&tc, &f, opts)?;
    Ok(removed.circuit)
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{self, QcaHandle};
    use crate::circuit::GateAction;
    use crate::fixtures;
    use crate::lattice::{len_int, phys_anc_pair, Layout, Qudit};
    use std::sync::Arc;

    fn paired_ring(n: usize) -> crate::lattice::LayoutRef {
        Arc::new(Layout::unit_ring(n, phys_anc_pair(2)).unwrap())
    }

    fn density_ring(n: usize, k: usize) -> crate::lattice::LayoutRef {
        use crate::lattice::{ControlSpace, Position, Site};
        let sites = (0..n)
            .map(|i| Site {
                id: SiteId(i as u32),
                position: Position::Scalar(crate::lattice::len_int(i as i64)),
                qudits: vec![Qudit {
                    dim: 2,
                    kind: if i % k == 0 { QuditKind::Physical } else { QuditKind::Ancilla },
                }],
            })
            .collect();
        Arc::new(
            Layout::new(ControlSpace::Ring { circumference: len_int(n as i64) }, sites).unwrap(),
        )
    }

    #[test]
    fn empty_borrowing_valid_without_ancilla_gates() {
        let layout = paired_ring(12);
        // brickwork acting on physical slots only
        let circuit = fixtures::random_brickwork_clifford(&layout, 2, 3).unwrap();
        let times: Vec<i64> = (0..circuit.gate_count())
            .map(|id| circuit.round_of(crate::circuit::GateId(id)).unwrap() as i64 + 1)
            .collect();
        let tau = TimeFunction::from_times(&circuit, times).unwrap();
        let tc = TimedCircuit::new(circuit, tau).unwrap();
        let rep = validate_borrowing(&tc, &BorrowingFunction::empty()).unwrap();
        assert!(rep.ok, "{:?}", rep.violations);
    }

    #[test]
    fn same_time_borrowers_clash() {
        let layout = paired_ring(8);
        let mut rng = fixtures::rng(4);
        let g1 = fixtures::random_clifford_gate(
            &layout,
            vec![QuditRef::new(1, 0), QuditRef::new(1, 1)],
            2,
            &mut rng,
        )
        .unwrap();
        let g2 = fixtures::random_clifford_gate(
            &layout,
            vec![QuditRef::new(2, 0), QuditRef::new(2, 1)],
            2,
            &mut rng,
        )
        .unwrap();
        let circuit = Circuit::new(layout, len_int(1), vec![vec![g1, g2]]).unwrap();
        let tau = TimeFunction::from_times(&circuit, vec![1, 1]).unwrap();
        let tc = TimedCircuit::new(circuit, tau).unwrap();
        let mut map = BTreeMap::new();
        map.insert(SiteId(1), SiteId(0));
        map.insert(SiteId(2), SiteId(0));
        let rep = validate_borrowing(&tc, &BorrowingFunction::from_map(map)).unwrap();
        assert!(!rep.ok);
        assert!(rep.violations.iter().any(|v| v.contains("not ordered")));
    }

    #[test]
    fn blocks_borrowing_validates_and_removes() {
        let layout = paired_ring(48);
        let circuit = fixtures::ancilla_trivial_circuit(&layout, 11).unwrap();
        let (tau, f) = build_borrowing_blocks_1d(&circuit, None).unwrap();
        let tc = TimedCircuit::new(circuit.clone(), tau).unwrap();
        let rep = validate_borrowing(&tc, &f).unwrap();
        assert!(rep.ok, "{:?}", rep.violations);
        let opts = backend::VerifyOptions::default();
        let removed = remove_ancillas(&tc, &f, &opts).unwrap();
        // no ancilla touched and the automorphism is unchanged
        let before = backend::circuit_to_qca(&circuit, &opts).unwrap();
        let after = backend::circuit_to_qca(&removed.circuit, &opts).unwrap();
        assert!(backend::equal(&before, &after, &opts).unwrap());
    }

    #[test]
    fn depth_one_circuit_degenerate_staircase() {
        let layout = paired_ring(24);
        // depth-1 disjoint gates on physical slots only
        let circuit = fixtures::random_brickwork_clifford(&layout, 1, 5).unwrap();
        let (tau, f) = build_borrowing_blocks_1d(&circuit, None).unwrap();
        let tc = TimedCircuit::new(circuit, tau).unwrap();
        assert!(validate_borrowing(&tc, &f).unwrap().ok);
    }

    #[test]
    fn removal_refuses_nontrivial_ancilla_action() {
        let layout = paired_ring(48);
        let swap = fixtures::swap_gate(QuditRef::new(0, 0), QuditRef::new(0, 1));
        let circuit = Circuit::new(layout.clone(), len_int(0), vec![vec![swap]]).unwrap();
        let tau = TimeFunction::from_times(&circuit, vec![1]).unwrap();
        let tc = TimedCircuit::new(circuit, tau).unwrap();
        let mut map = BTreeMap::new();
        map.insert(SiteId(0), SiteId(24));
        let f = BorrowingFunction::from_map(map);
        let opts = backend::VerifyOptions::default();
        let err = remove_ancillas(&tc, &f, &opts);
        assert!(matches!(err, Err(Error::Precondition(_))), "{err:?}");
    }

    #[test]
    fn net_borrowing_on_padded_ring() {
        let layout = paired_ring(64);
        let circuit = fixtures::ancilla_trivial_circuit(&layout, 7).unwrap();
        // reconstruct the net schedule: l0 covering 4 shells of (r+1)D
        let r = gate_range_sites(&circuit);
        let depth = circuit.depth() as i64;
        let l0 = len_int(4 * (r + 1) * depth);
        let net = epsilon_net(&layout, l0).unwrap();
        let h = height_from_set(&layout, &net).unwrap();
        let spacing = layout.min_spacing();
        let h_sites = HeightFunction::new(
            h.values().iter().map(|(s, v)| (*s, *v / spacing)).collect(),
            Rational64::from_integer(1) / spacing,
        );
        let tau = make_time_function(&circuit, &h_sites, r + 1).unwrap();
        let tc = TimedCircuit::new(circuit.clone(), tau).unwrap();
        let density = DensityParams { c: len_int(1), c_prime: len_int(2), d: 1 };
        let f = build_borrowing_net(&tc, l0, density).unwrap();
        assert!(validate_borrowing(&tc, &f).unwrap().ok);
        assert!(f.max_distance(&layout).unwrap() <= l0 + l0);
        let opts = backend::VerifyOptions::default();
        let removed = remove_ancillas(&tc, &f, &opts).unwrap();
        let before = backend::circuit_to_qca(&circuit, &opts).unwrap();
        let after = backend::circuit_to_qca(&removed.circuit, &opts).unwrap();
        assert!(backend::equal(&before, &after, &opts).unwrap());
    }

    #[test]
    fn net_borrowing_refuses_two_line_torus() {
        let layout = Arc::new(Layout::two_line_torus(8).unwrap());
        let mut rng = fixtures::rng(1);
        let g = fixtures::random_clifford_gate(
            &layout,
            vec![QuditRef::new(0, 0), QuditRef::new(1, 0)],
            2,
            &mut rng,
        )
        .unwrap();
        let circuit = Circuit::new(layout, len_int(1), vec![vec![g]]).unwrap();
        let tau = TimeFunction::from_times(&circuit, vec![1]).unwrap();
        let tc = TimedCircuit::new(circuit, tau).unwrap();
        let density = DensityParams { c: len_int(1), c_prime: len_int(8), d: 2 };
        let err = build_borrowing_net(&tc, len_int(3), density);
        assert!(matches!(err, Err(Error::Density(_))), "{err:?}");
    }

    #[test]
    fn involution_borrowing_accepts_and_rejects() {
        // depth-1 physical brickwork: G = D(r+1) = 2, teeth of 2G+2 = 6
        let layout = paired_ring(24);
        let circuit = fixtures::random_brickwork_clifford(&layout, 1, 9).unwrap();
        let r = gate_range_sites(&circuit);
        let gap = (circuit.depth() as i64) * (r + 1);
        let tooth = 2 * gap + 2;
        let half = tooth / 2;
        // triangle wave of period 2·tooth and the half-tooth reflection
        let mut hv = Vec::new();
        let mut fmap = BTreeMap::new();
        for s in layout.sites() {
            let u = (layout.coordinate(s.id).unwrap()).floor().to_integer();
            let phase = u.rem_euclid(2 * tooth);
            let height = if phase < tooth { phase } else { 2 * tooth - 1 - phase };
            hv.push((s.id, len_int(height)));
            let partner_phase = if phase < tooth {
                if phase < half { phase + half } else { phase - half }
            } else {
                let back = 2 * tooth - 1 - phase;
                let p2 = if back < half { back + half } else { back - half };
                2 * tooth - 1 - p2
            };
            let partner = (u - phase + partner_phase).rem_euclid(24);
            fmap.insert(s.id, SiteId(partner as u32));
        }
        let h = HeightFunction::new(hv, Rational64::from_integer(1));
        let tau = make_time_function(&circuit, &h, r + 1).unwrap();
        let tc = TimedCircuit::new(circuit, tau).unwrap();
        let f = build_borrowing_involution(&tc, &h, &fmap, Some(len_int(tooth))).unwrap();
        assert_eq!(f.len(), 24);

        // the identity pairing is rejected outright
        let ident: BTreeMap<SiteId, SiteId> =
            layout.sites().iter().map(|s| (s.id, s.id)).collect();
        assert!(build_borrowing_involution(&tc, &h, &ident, None).is_err());

        // a gap of exactly D(r+1) fails the strict inequality
        let mut tight = BTreeMap::new();
        for s in layout.sites() {
            let u = (layout.coordinate(s.id).unwrap()).floor().to_integer();
            let phase = u.rem_euclid(2 * tooth);
            let partner_phase =
                if phase % (2 * gap) < gap { phase + gap } else { phase - gap };
            tight.insert(s.id, SiteId(((u - phase + partner_phase).rem_euclid(24)) as u32));
        }
        assert!(build_borrowing_involution(&tc, &h, &tight, None).is_err());
    }

    #[test]
    fn iterated_removal_k1_noop_and_k2() {
        let opts = backend::VerifyOptions::default();
        let layout = density_ring(32, 2);
        let mut rng = fixtures::rng(13);
        // pair gates (physical 2k, ancilla 2k+1) followed by their inverses
        let mut round1 = Vec::new();
        let mut round2 = Vec::new();
        for k in (0..32).step_by(8) {
            let g = fixtures::random_clifford_gate(
                &layout,
                vec![QuditRef::new(k, 0), QuditRef::new(k + 1, 0)],
                2,
                &mut rng,
            )
            .unwrap();
            round2.push(g.inverse(&layout).unwrap());
            round1.push(g);
        }
        let circuit =
            Circuit::new(layout.clone(), len_int(1), vec![round1, round2]).unwrap();
        let same = iterated_removal(&circuit, 1, &opts).unwrap();
        assert_eq!(same.depth(), circuit.depth());
        let removed = iterated_removal(&circuit, 2, &opts).unwrap();
        for g in removed.gates() {
            for q in &g.support {
                assert_eq!(layout.qudit(*q).unwrap().kind, QuditKind::Physical);
            }
        }
        let before = backend::circuit_to_qca(&circuit, &opts).unwrap();
        let after = backend::circuit_to_qca(&removed, &opts).unwrap();
        assert!(backend::equal(&before, &after, &opts).unwrap());
    }

    #[test]
    fn iterated_removal_k4() {
        let opts = backend::VerifyOptions::default();
        let layout = density_ring(64, 4);
        let mut rng = fixtures::rng(17);
        let mut round1 = Vec::new();
        let mut round2 = Vec::new();
        for k in (0..64).step_by(16) {
            let a = fixtures::random_clifford_gate(
                &layout,
                vec![QuditRef::new(k, 0), QuditRef::new(k + 2, 0)],
                2,
                &mut rng,
            )
            .unwrap();
            let b = fixtures::random_clifford_gate(
                &layout,
                vec![QuditRef::new(k + 5, 0), QuditRef::new(k + 6, 0)],
                2,
                &mut rng,
            )
            .unwrap();
            round2.push(a.inverse(&layout).unwrap());
            round2.push(b.inverse(&layout).unwrap());
            round1.push(a);
            round1.push(b);
        }
        let circuit =
            Circuit::new(layout.clone(), len_int(2), vec![round1, round2]).unwrap();
        let removed = iterated_removal(&circuit, 4, &opts).unwrap();
        for g in removed.gates() {
            for q in &g.support {
                assert_eq!(layout.qudit(*q).unwrap().kind, QuditKind::Physical);
            }
        }
        let before = backend::circuit_to_qca(&circuit, &opts).unwrap();
        let after = backend::circuit_to_qca(&removed, &opts).unwrap();
        assert!(backend::equal(&before, &after, &opts).unwrap());
    }

    #[test]
    fn gate_action_kinds_survive_removal() {
        // permutation actions borrow correctly too
        let layout = paired_ring(48);
        let a = QuditRef::new(3, 1);
        let b = QuditRef::new(4, 1);
        let g1 = fixtures::swap_gate(a, b);
        let g2 = fixtures::swap_gate(a, b);
        let circuit =
            Circuit::new(layout.clone(), len_int(1), vec![vec![g1], vec![g2]]).unwrap();
        let (tau, f) = build_borrowing_blocks_1d(&circuit, None).unwrap();
        let tc = TimedCircuit::new(circuit.clone(), tau).unwrap();
        let opts = backend::VerifyOptions::default();
        let removed = remove_ancillas(&tc, &f, &opts).unwrap();
        let before = backend::circuit_to_qca(&circuit, &opts).unwrap();
        let after = backend::circuit_to_qca(&removed.circuit, &opts).unwrap();
        assert!(backend::equal(&before, &after, &opts).unwrap());
        let _ = GateAction::Permutation(vec![]);
        let _: Option<QcaHandle> = None;
    }
}
