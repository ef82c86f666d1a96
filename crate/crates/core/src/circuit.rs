//! Circuits as ordered rounds of disjoint ranged gates, plus the causal
//! rescheduling machinery: forward lightcones, causal time functions,
//! regrouping, the 1D staircase, and constant-depth handle regrouping.

use crate::backend::cmat::CMat;
use crate::backend::pauli::PauliString;
use crate::error::{Error, Result};
use crate::lattice::{HeightFunction, Layout, LayoutRef, Length, QuditRef, SiteId};
use num_rational::Rational64;
use num_traits::Zero;
use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct GateId(pub usize);

impl std::fmt::Display for GateId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "g{}", self.0)
    }
}

/// Exact Clifford gate data: images of the X and Z generators of every
/// support qudit, as Pauli strings over the support.
#[derive(Debug, Clone, PartialEq)]
pub struct CliffordAction {
    pub p: u32,
    /// images[2k] = image of X on support position k, images[2k+1] = Z image
    pub images: Vec<PauliString>,
}

/// What a gate does to its support.
#[derive(Debug, Clone, PartialEq)]
pub enum GateAction {
    Clifford(CliffordAction),
    Dense(CMat),
    /// Conjugation moves the operator content of support position k to
    /// support position perm[k].
    Permutation(Vec<usize>),
    /// Pairwise content swaps, typically physical/ancilla interchanges.
    SwapPairs(Vec<(QuditRef, QuditRef)>),
    /// A merged block gate; sub-gates apply in stored order and keep their
    /// own supports so later passes still see the internal decomposition.
    Composite(Vec<Gate>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Gate {
    pub id: GateId,
    /// sorted, duplicate-free
    pub support: Vec<QuditRef>,
    pub action: GateAction,
}

impl Gate {
    pub fn new(support: Vec<QuditRef>, action: GateAction) -> Gate {
        let mut support = support;
        support.sort();
        support.dedup();
        Gate { id: GateId(usize::MAX), support, action }
    }

    pub fn support_sites(&self) -> BTreeSet<SiteId> {
        self.support.iter().map(|q| q.site).collect()
    }

    pub fn overlaps(&self, other: &Gate) -> bool {
        let mut a = self.support.iter().peekable();
        let mut b = other.support.iter().peekable();
        while let (Some(x), Some(y)) = (a.peek(), b.peek()) {
            match x.cmp(y) {
                std::cmp::Ordering::Equal => return true,
                std::cmp::Ordering::Less => {
                    a.next();
                }
                std::cmp::Ordering::Greater => {
                    b.next();
                }
            }
        }
        false
    }

    pub fn touches(&self, q: QuditRef) -> bool {
        self.support.binary_search(&q).is_ok()
    }

    pub fn diameter(&self, layout: &Layout) -> Result<Length> {
        let sites: Vec<SiteId> = self.support_sites().into_iter().collect();
        layout.set_diameter(&sites)
    }

    /// Relabeling map for permutation-like actions.
    fn relabel_map(&self) -> Option<BTreeMap<QuditRef, QuditRef>> {
        match &self.action {
            GateAction::Permutation(perm) => {
                let mut m = BTreeMap::new();
                for (k, &t) in perm.iter().enumerate() {
                    m.insert(self.support[k], self.support[t]);
                }
                Some(m)
            }
            GateAction::SwapPairs(pairs) => {
                let mut m = BTreeMap::new();
                for (a, b) in pairs {
                    m.insert(*a, *b);
                    m.insert(*b, *a);
                }
                Some(m)
            }
            _ => None,
        }
    }

    /// Image of a Pauli string under conjugation by this gate.
    pub fn apply_to_pauli(&self, p: &PauliString) -> Result<PauliString> {
        if !self.support.iter().any(|q| p.xz(*q) != (0, 0)) {
            return Ok(p.clone());
        }
        match &self.action {
            GateAction::Clifford(act) => {
                let mut out = p.clone();
                let mut in_part: Vec<(usize, u32, u32)> = Vec::new();
                for (k, q) in self.support.iter().enumerate() {
                    let (x, z) = p.xz(*q);
                    if (x, z) != (0, 0) {
                        out.set(*q, 0, 0);
                        in_part.push((k, x, z));
                    }
                }
                for (k, x, z) in in_part {
                    for _ in 0..x {
                        out.mul_assign(&act.images[2 * k]);
                    }
                    for _ in 0..z {
                        out.mul_assign(&act.images[2 * k + 1]);
                    }
                }
                Ok(out)
            }
            GateAction::Permutation(_) | GateAction::SwapPairs(_) => {
                Ok(p.relabeled(&self.relabel_map().unwrap()))
            }
            GateAction::Composite(gates) => {
                let mut out = p.clone();
                for g in gates {
                    out = g.apply_to_pauli(&out)?;
                }
                Ok(out)
            }
            GateAction::Dense(_) => Err(Error::BackendMismatch(
                "dense gate cannot act on a Pauli string; use the dense backend".into(),
            )),
        }
    }

    pub fn inverse(&self, layout: &Layout) -> Result<Gate> {
        let action = match &self.action {
            GateAction::Clifford(act) => GateAction::Clifford(act.inverse(&self.support)?),
            GateAction::Dense(m) => GateAction::Dense(m.adjoint()),
            GateAction::Permutation(perm) => {
                let mut inv = vec![0usize; perm.len()];
                for (k, &t) in perm.iter().enumerate() {
                    inv[t] = k;
                }
                GateAction::Permutation(inv)
            }
            GateAction::SwapPairs(pairs) => GateAction::SwapPairs(pairs.clone()),
            GateAction::Composite(gates) => {
                let mut inv = Vec::with_capacity(gates.len());
                for g in gates.iter().rev() {
                    inv.push(g.inverse(layout)?);
                }
                GateAction::Composite(inv)
            }
        };
        Ok(Gate { id: GateId(usize::MAX), support: self.support.clone(), action })
    }

    fn validate(&self, layout: &Layout) -> Result<()> {
        if self.support.is_empty() {
            return Err(Error::InvalidCircuit(format!("{}: empty support", self.id)));
        }
        for q in &self.support {
            layout.qudit(*q)?;
        }
        match &self.action {
            GateAction::Clifford(act) => act.validate(layout, &self.support, self.id),
            GateAction::Dense(m) => {
                let dim: usize = self
                    .support
                    .iter()
                    .map(|q| layout.qudit(*q).unwrap().dim as usize)
                    .product();
                if m.dim() != dim {
                    return Err(Error::InvalidCircuit(format!(
                        "{}: dense matrix dim {} but support dim {}",
                        self.id,
                        m.dim(),
                        dim
                    )));
                }
                if !m.is_unitary(1e-9) {
                    return Err(Error::InvalidCircuit(format!("{}: matrix not unitary", self.id)));
                }
                Ok(())
            }
            GateAction::Permutation(perm) => {
                let m = self.support.len();
                let mut seen = vec![false; m];
                if perm.len() != m {
                    return Err(Error::InvalidCircuit(format!("{}: permutation length", self.id)));
                }
                for (k, &t) in perm.iter().enumerate() {
                    if t >= m || seen[t] {
                        return Err(Error::InvalidCircuit(format!(
                            "{}: not a permutation",
                            self.id
                        )));
                    }
                    seen[t] = true;
                    let dk = layout.qudit(self.support[k]).unwrap().dim;
                    let dt = layout.qudit(self.support[t]).unwrap().dim;
                    if dk != dt {
                        return Err(Error::InvalidCircuit(format!(
                            "{}: permutation moves dim {} onto dim {}",
                            self.id, dk, dt
                        )));
                    }
                }
                Ok(())
            }
            GateAction::SwapPairs(pairs) => {
                let mut used = BTreeSet::new();
                for (a, b) in pairs {
                    if !self.touches(*a) || !self.touches(*b) {
                        return Err(Error::InvalidCircuit(format!(
                            "{}: swap pair outside support",
                            self.id
                        )));
                    }
                    if !used.insert(*a) || !used.insert(*b) {
                        return Err(Error::InvalidCircuit(format!(
                            "{}: swap pairs overlap",
                            self.id
                        )));
                    }
                    if layout.qudit(*a)?.dim != layout.qudit(*b)?.dim {
                        return Err(Error::InvalidCircuit(format!(
                            "{}: swapped qudits have different dims",
                            self.id
                        )));
                    }
                }
                Ok(())
            }
            GateAction::Composite(gates) => {
                for g in gates {
                    for q in &g.support {
                        if !self.touches(*q) {
                            return Err(Error::InvalidCircuit(format!(
                                "{}: sub-gate leaves parent support",
                                self.id
                            )));
                        }
                    }
                    g.validate(layout)?;
                }
                Ok(())
            }
        }
    }
}

impl CliffordAction {
    pub fn validate(&self, layout: &Layout, support: &[QuditRef], id: GateId) -> Result<()> {
        let m = support.len();
        if self.images.len() != 2 * m {
            return Err(Error::InvalidCircuit(format!("{id}: need {} images", 2 * m)));
        }
        for q in support {
            let d = layout.qudit(*q)?.dim;
            if d != self.p {
                return Err(Error::InvalidCircuit(format!(
                    "{id}: clifford gate of prime {} on dim-{} qudit",
                    self.p, d
                )));
            }
        }
        crate::backend::pauli::is_prime(self.p)
            .then_some(())
            .ok_or_else(|| Error::InvalidCircuit(format!("{id}: {} not prime", self.p)))?;
        for img in &self.images {
            for q in img.support() {
                if support.binary_search(&q).is_err() {
                    return Err(Error::InvalidCircuit(format!(
                        "{id}: image leaves gate support"
                    )));
                }
            }
            if self.p == 2 && !img.is_involution() {
                return Err(Error::InvalidCircuit(format!(
                    "{id}: image of an involution must square to identity"
                )));
            }
        }
        // commutation preservation on all generator pairs
        let gen = |k: usize| -> PauliString {
            let q = support[k / 2];
            if k % 2 == 0 {
                PauliString::x(self.p, q)
            } else {
                PauliString::z(self.p, q)
            }
        };
        for i in 0..2 * m {
            for j in 0..i {
                let want = gen(i).commutation_exponent(&gen(j));
                let got = self.images[i].commutation_exponent(&self.images[j]);
                if want != got {
                    return Err(Error::InvalidCircuit(format!(
                        "{id}: commutation not preserved between generators {i} and {j}"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Tableau inverse via Gaussian elimination over F_p plus exact phase
    /// repair: small supports keep this cheap.
    pub fn inverse(&self, support: &[QuditRef]) -> Result<CliffordAction> {
        let p = self.p as i64;
        let m = support.len();
        let n = 2 * m;
        let pos_of = |q: QuditRef| support.binary_search(&q).unwrap();
        // columns = image vectors
        let mut a = vec![vec![0i64; 2 * n]; n]; // [M | I]
        for (col, img) in self.images.iter().enumerate() {
            for (q, (x, z)) in img.terms() {
                let k = pos_of(q);
                a[2 * k][col] = x as i64;
                a[2 * k + 1][col] = z as i64;
            }
        }
        for i in 0..n {
            a[i][n + i] = 1;
        }
        let modinv = |v: i64| -> i64 {
            // Fermat inverse, p prime
            let mut base = v.rem_euclid(p);
            let mut e = p - 2;
            let mut acc = 1i64;
            while e > 0 {
                if e & 1 == 1 {
                    acc = acc * base % p;
                }
                base = base * base % p;
                e >>= 1;
            }
            acc
        };
        let mut row = 0;
        for col in 0..n {
            let piv = (row..n).find(|&r| a[r][col] % p != 0);
            let piv = piv.ok_or_else(|| {
                Error::InvalidCircuit("clifford tableau is singular".into())
            })?;
            a.swap(row, piv);
            let inv = modinv(a[row][col]);
            for j in 0..2 * n {
                a[row][j] = a[row][j] * inv % p;
            }
            for r in 0..n {
                if r != row && a[r][col] % p != 0 {
                    let f = a[r][col] % p;
                    for j in 0..2 * n {
                        a[r][j] = (a[r][j] - f * a[row][j]).rem_euclid(p);
                    }
                }
            }
            row += 1;
        }
        // now a = [I | M^{-1}]
        let mut images = Vec::with_capacity(n);
        for col in 0..n {
            let mut img = PauliString::identity(self.p);
            for k in 0..m {
                let x = a[2 * k][n + col].rem_euclid(p) as u32;
                let z = a[2 * k + 1][n + col].rem_euclid(p) as u32;
                img.set(support[k], x, z);
            }
            images.push(img);
        }
        let mut out = CliffordAction { p: self.p, images };
        // phase repair: forward-apply each candidate preimage; the result must
        // be the generator up to a phase, which we cancel.
        for col in 0..n {
            let mut fwd = {
                let mut acc = PauliString::identity(self.p);
                for (q, (x, z)) in out.images[col].terms() {
                    let k = pos_of(q);
                    for _ in 0..x {
                        acc.mul_assign(&self.images[2 * k]);
                    }
                    for _ in 0..z {
                        acc.mul_assign(&self.images[2 * k + 1]);
                    }
                }
                acc
            };
            let target_q = support[col / 2];
            let want = if col % 2 == 0 {
                PauliString::x(self.p, target_q)
            } else {
                PauliString::z(self.p, target_q)
            };
            let mm = fwd.phase_modulus();
            let correction = (mm + want.phase() - fwd.phase()) % mm;
            fwd.set_phase(0);
            if fwd != {
                let mut w = want.clone();
                w.set_phase(0);
                w
            } {
                return Err(Error::InvalidCircuit("tableau inverse failed".into()));
            }
            out.images[col].mul_phase(correction);
        }
        // p = 2: preimages of involutions must themselves be involutions
        if self.p == 2 {
            for img in &out.images {
                debug_assert!(img.is_involution());
            }
        }
        Ok(out)
    }
}

/// A circuit: ordered rounds of pairwise-disjoint gates over a layout, with
/// a declared gate range bounding every gate diameter.
#[derive(Debug, Clone)]
pub struct Circuit {
    layout: LayoutRef,
    gate_range: Length,
    rounds: Vec<Vec<Gate>>,
    /// gate id -> (round, index) lookup
    by_id: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, Default)]
pub struct CircuitReport {
    pub ok: bool,
    pub depth: usize,
    pub gate_count: usize,
    pub max_gate_diameter: Length,
    pub violations: Vec<String>,
}

impl Circuit {
    /// Builds and fully validates a circuit; gate ids are assigned
    /// round-major.
    pub fn new(
        layout: LayoutRef,
        gate_range: Length,
        rounds: Vec<Vec<Gate>>,
    ) -> Result<Circuit> {
        let mut rounds = rounds;
        let mut by_id = Vec::new();
        for (r, round) in rounds.iter_mut().enumerate() {
            for (k, gate) in round.iter_mut().enumerate() {
                gate.id = GateId(by_id.len());
                by_id.push((r, k));
                let _ = k;
            }
        }
        let circuit = Circuit { layout, gate_range, rounds, by_id };
        let report = circuit.validate();
        if !report.ok {
            return Err(Error::InvalidCircuit(report.violations.join("; ")));
        }
        Ok(circuit)
    }

    pub fn empty(layout: LayoutRef) -> Circuit {
        Circuit { layout, gate_range: Length::zero(), rounds: vec![], by_id: vec![] }
    }

    pub fn layout(&self) -> &LayoutRef {
        &self.layout
    }

    pub fn gate_range(&self) -> Length {
        self.gate_range
    }

    pub fn depth(&self) -> usize {
        self.rounds.len()
    }

    /// Declared circuit range: gate range times depth.
    pub fn circuit_range(&self) -> Length {
        self.gate_range * Rational64::from_integer(self.depth() as i64)
    }

    pub fn rounds(&self) -> &[Vec<Gate>] {
        &self.rounds
    }

    pub fn gate_count(&self) -> usize {
        self.by_id.len()
    }

    pub fn gate(&self, id: GateId) -> Result<&Gate> {
        let (r, k) = *self.by_id.get(id.0).ok_or(Error::UnknownGate(id.0))?;
        Ok(&self.rounds[r][k])
    }

    pub fn round_of(&self, id: GateId) -> Result<usize> {
        Ok(self.by_id.get(id.0).ok_or(Error::UnknownGate(id.0))?.0)
    }

    pub fn gates(&self) -> impl Iterator<Item = &Gate> {
        self.rounds.iter().flatten()
    }

    pub fn max_gate_diameter(&self) -> Length {
        self.gates()
            .map(|g| g.diameter(&self.layout).unwrap_or_else(|_| Length::zero()))
            .max()
            .unwrap_or_else(Length::zero)
    }

    /// Checks round disjointness, gate diameters against the declared range,
    /// and action/support consistency; collects all violations.
    pub fn validate(&self) -> CircuitReport {
        let mut report = CircuitReport {
            ok: true,
            depth: self.depth(),
            gate_count: self.gate_count(),
            ..Default::default()
        };
        for round in &self.rounds {
            for (k, g) in round.iter().enumerate() {
                if let Err(e) = g.validate(&self.layout) {
                    report.ok = false;
                    report.violations.push(e.to_string());
                    continue;
                }
                match g.diameter(&self.layout) {
                    Ok(d) => {
                        if d > report.max_gate_diameter {
                            report.max_gate_diameter = d;
                        }
                        if d > self.gate_range {
                            report.ok = false;
                            report.violations.push(format!(
                                "{}: diameter {} exceeds declared range {}",
                                g.id, d, self.gate_range
                            ));
                        }
                    }
                    Err(e) => {
                        report.ok = false;
                        report.violations.push(e.to_string());
                    }
                }
                for other in &round[..k] {
                    if g.overlaps(other) {
                        report.ok = false;
                        report.violations.push(format!(
                            "gates {} and {} overlap within one round",
                            other.id, g.id
                        ));
                    }
                }
            }
        }
        report
    }

    /// Gates in the forward lightcone of `seed` (inclusive): transitive
    /// closure over later-round gates with intersecting support.
    pub fn forward_lightcone(&self, seed: GateId) -> Result<BTreeSet<GateId>> {
        let seed_gate = self.gate(seed)?;
        let seed_round = self.round_of(seed)?;
        let mut cone: BTreeSet<GateId> = BTreeSet::new();
        cone.insert(seed);
        let mut frontier_support: BTreeSet<QuditRef> =
            seed_gate.support.iter().copied().collect();
        for r in seed_round + 1..self.rounds.len() {
            for g in &self.rounds[r] {
                if g.support.iter().any(|q| frontier_support.contains(q)) {
                    cone.insert(g.id);
                    frontier_support.extend(g.support.iter().copied());
                }
            }
        }
        Ok(cone)
    }

    /// Maximum, over qudits q, of the distance from q to any site touched by
    /// the forward lightcone of the earliest gate acting on q.
    pub fn lightcone_range(&self) -> Result<Length> {
        let mut earliest: BTreeMap<QuditRef, GateId> = BTreeMap::new();
        for round in &self.rounds {
            for g in round {
                for q in &g.support {
                    earliest.entry(*q).or_insert(g.id);
                }
            }
        }
        let mut cone_sites: BTreeMap<GateId, BTreeSet<SiteId>> = BTreeMap::new();
        let mut best = Length::zero();
        for (q, seed) in earliest {
            if !cone_sites.contains_key(&seed) {
                let cone = self.forward_lightcone(seed)?;
                let mut sites = BTreeSet::new();
                for id in cone {
                    sites.extend(self.gate(id)?.support_sites());
                }
                cone_sites.insert(seed, sites);
            }
            for s in &cone_sites[&seed] {
                let d = self.layout.distance(q.site, *s)?;
                if d > best {
                    best = d;
                }
            }
        }
        Ok(best)
    }

    /// Applies the whole circuit to a Pauli string, round by round
    /// (Clifford, permutation, and composite gates only).
    pub fn apply_to_pauli(&self, p: &PauliString) -> Result<PauliString> {
        let mut out = p.clone();
        for round in &self.rounds {
            for g in round {
                out = g.apply_to_pauli(&out)?;
            }
        }
        Ok(out)
    }

    /// Concatenation: `self`'s rounds run first, then `other`'s.
    pub fn then(&self, other: &Circuit) -> Result<Circuit> {
        if !Arc::ptr_eq(&self.layout, &other.layout) && self.layout != other.layout {
            return Err(Error::Precondition("circuit layouts differ".into()));
        }
        let rounds: Vec<Vec<Gate>> =
            self.rounds.iter().chain(other.rounds.iter()).cloned().collect();
        Circuit::new(
            self.layout.clone(),
            std::cmp::max(self.gate_range, other.gate_range),
            rounds,
        )
    }

    pub fn inverse(&self) -> Result<Circuit> {
        let mut rounds = Vec::with_capacity(self.rounds.len());
        for round in self.rounds.iter().rev() {
            let mut new_round = Vec::with_capacity(round.len());
            for g in round {
                new_round.push(g.inverse(&self.layout)?);
            }
            rounds.push(new_round);
        }
        Circuit::new(self.layout.clone(), self.gate_range, rounds)
    }

    /// Parallel combination on disjoint qudit sets; round k of the output is
    /// the union of round k of both inputs.
    pub fn tensor(&self, other: &Circuit) -> Result<Circuit> {
        if !Arc::ptr_eq(&self.layout, &other.layout) && self.layout != other.layout {
            return Err(Error::Precondition("circuit layouts differ".into()));
        }
        let mine: BTreeSet<QuditRef> =
            self.gates().flat_map(|g| g.support.iter().copied()).collect();
        if other.gates().any(|g| g.support.iter().any(|q| mine.contains(q))) {
            return Err(Error::Precondition("tensor operands share qudits".into()));
        }
        let depth = self.depth().max(other.depth());
        let mut rounds = Vec::with_capacity(depth);
        for r in 0..depth {
            let mut round = Vec::new();
            if let Some(a) = self.rounds.get(r) {
                round.extend(a.iter().cloned());
            }
            if let Some(b) = other.rounds.get(r) {
                round.extend(b.iter().cloned());
            }
            rounds.push(round);
        }
        Circuit::new(
            self.layout.clone(),
            std::cmp::max(self.gate_range, other.gate_range),
            rounds,
        )
    }

    /// Rebuilds the circuit with the same structure on a new layout (used
    /// when reinterpreting qudit kinds); supports and actions are unchanged.
    pub fn with_layout(&self, layout: LayoutRef) -> Result<Circuit> {
        Circuit::new(layout, self.gate_range, self.rounds.clone())
    }
}

/// An integer-valued schedule on gates, possibly with merge groups: gates
/// with equal time and equal group are emitted as one block gate by
/// `regroup`.
#[derive(Debug, Clone)]
pub struct TimeFunction {
    times: Vec<i64>,
    groups: Option<Vec<usize>>,
    /// slope parameter c when built from a height function
    pub slope: i64,
}

impl TimeFunction {
    pub fn from_times(circuit: &Circuit, times: Vec<i64>) -> Result<TimeFunction> {
        if times.len() != circuit.gate_count() {
            return Err(Error::TimeFunctionIncomplete(times.len()));
        }
        Ok(TimeFunction { times, groups: None, slope: 0 })
    }

    pub fn with_groups(mut self, groups: Vec<usize>) -> Self {
        self.groups = Some(groups);
        self
    }

    pub fn time(&self, id: GateId) -> Result<i64> {
        self.times.get(id.0).copied().ok_or(Error::TimeFunctionIncomplete(id.0))
    }

    pub fn group(&self, id: GateId) -> Option<usize> {
        self.groups.as_ref().map(|g| g[id.0])
    }

    pub fn max_time(&self) -> i64 {
        self.times.iter().copied().max().unwrap_or(0)
    }

    /// Shifts all times so the minimum is 1.
    pub fn normalized(mut self) -> Self {
        if let Some(&min) = self.times.iter().min() {
            for t in &mut self.times {
                *t += 1 - min;
            }
        }
        self
    }
}

/// τ(S, a) = ⌊h(S)⌋ + c·a with h(S) the minimum height over the support,
/// shifted so the smallest time is 1. Causal whenever c ≥ rK + 1 (gate
/// range r, Lipschitz constant K); smaller c is rejected with the bound.
pub fn make_time_function(
    circuit: &Circuit,
    h: &HeightFunction,
    c: i64,
) -> Result<TimeFunction> {
    let rk = circuit.gate_range() * h.lipschitz();
    let required = rk + Rational64::from_integer(1);
    if Rational64::from_integer(c) < required {
        return Err(Error::Precondition(format!(
            "slope c = {c} too small; causality needs c >= rK+1 = {required}"
        )));
    }
    let mut times = vec![0i64; circuit.gate_count()];
    for (r, round) in circuit.rounds().iter().enumerate() {
        let a = (r + 1) as i64;
        for g in round {
            let hs = g
                .support_sites()
                .into_iter()
                .map(|s| h.value(s).unwrap())
                .min()
                .ok_or_else(|| Error::InvalidCircuit("gate with empty support".into()))?;
            times[g.id.0] = hs.floor().to_integer() + c * a;
        }
    }
    let mut tf = TimeFunction::from_times(circuit, times)?;
    tf.slope = c;
    Ok(tf.normalized())
}

/// Exhaustive causality check: for every overlapping gate pair in distinct
/// rounds the later gate must act at a strictly later time. Returns the
/// first violating pair, or None when causal.
pub fn is_causal(circuit: &Circuit, tf: &TimeFunction) -> Result<Option<(GateId, GateId)>> {
    find_causality_violation(circuit, tf, false)
}

fn find_causality_violation(
    circuit: &Circuit,
    tf: &TimeFunction,
    allow_equal_in_group: bool,
) -> Result<Option<(GateId, GateId)>> {
    // all gates share-a-qudit pairs, via per-qudit gate lists
    let mut per_qudit: BTreeMap<QuditRef, Vec<GateId>> = BTreeMap::new();
    for round in circuit.rounds() {
        for g in round {
            tf.time(g.id)?;
            for q in &g.support {
                per_qudit.entry(*q).or_default().push(g.id);
            }
        }
    }
    let mut checked: BTreeSet<(GateId, GateId)> = BTreeSet::new();
    for list in per_qudit.values() {
        for (i, &b) in list.iter().enumerate() {
            for &a in &list[..i] {
                if !checked.insert((a, b)) {
                    continue;
                }
                let (ra, rb) = (circuit.round_of(a)?, circuit.round_of(b)?);
                if ra == rb {
                    continue;
                }
                let (early, late) = if ra < rb { (a, b) } else { (b, a) };
                let te = tf.time(early)?;
                let tl = tf.time(late)?;
                let ok = if tl > te {
                    true
                } else if tl == te && allow_equal_in_group {
                    tf.group(early).is_some() && tf.group(early) == tf.group(late)
                } else {
                    false
                };
                if !ok {
                    return Ok(Some((early, late)));
                }
            }
        }
    }
    Ok(None)
}

/// Output of `regroup`: the rescheduled circuit plus the record of which
/// time value became which round after empty times were dropped.
#[derive(Debug, Clone)]
pub struct Regrouped {
    pub circuit: Circuit,
    pub time_to_round: Vec<(i64, usize)>,
}

/// Reassembles the circuit into rounds V_1 … V_τmax by time value. Gates
/// sharing a time and a merge group become one composite block gate whose
/// sub-gates keep their original order.
pub fn regroup(circuit: &Circuit, tf: &TimeFunction) -> Result<Regrouped> {
    if let Some((early, late)) = find_causality_violation(circuit, tf, true)? {
        return Err(Error::NotCausal { earlier: early.0, later: late.0 });
    }
    let mut buckets: BTreeMap<i64, Vec<&Gate>> = BTreeMap::new();
    for round in circuit.rounds() {
        for g in round {
            buckets.entry(tf.time(g.id)?).or_default().push(g);
        }
    }
    let mut rounds = Vec::with_capacity(buckets.len());
    let mut time_to_round = Vec::with_capacity(buckets.len());
    let mut max_diameter = Length::zero();
    for (t, gates) in buckets {
        let mut by_group: BTreeMap<usize, Vec<&Gate>> = BTreeMap::new();
        for (k, g) in gates.iter().enumerate() {
            let group = tf.group(g.id).unwrap_or(usize::MAX - k);
            by_group.entry(group).or_default().push(g);
        }
        let mut round = Vec::new();
        for (_, members) in by_group {
            if members.len() == 1 {
                round.push(members[0].clone());
            } else {
                let mut ordered: Vec<&Gate> = members;
                ordered.sort_by_key(|g| (circuit.round_of(g.id).unwrap(), g.id));
                let support: Vec<QuditRef> =
                    ordered.iter().flat_map(|g| g.support.iter().copied()).collect();
                let subs: Vec<Gate> = ordered.into_iter().cloned().collect();
                round.push(Gate::new(support, GateAction::Composite(subs)));
            }
        }
        for g in &round {
            let d = g.diameter(circuit.layout())?;
            if d > max_diameter {
                max_diameter = d;
            }
        }
        time_to_round.push((t, rounds.len()));
        rounds.push(round);
    }
    let range = std::cmp::max(circuit.gate_range(), max_diameter);
    let out = Circuit::new(circuit.layout().clone(), range, rounds)?;
    Ok(Regrouped { circuit: out, time_to_round })
}

/// Staircase schedule for a 1D circuit: block labels, the sawtooth time
/// function, and the rescheduled circuit (depth at most (2r+1)·D in site
/// units, i.e. a factor 4 for range-1 gates).
#[derive(Debug, Clone)]
pub struct Staircase {
    pub circuit: Circuit,
    pub tau: TimeFunction,
    /// block label 1..=4 per site, cycling with position
    pub blocks: Vec<(SiteId, u8)>,
    /// phase label A..D per gate id, by time quartile
    pub phases: Vec<char>,
}

/// Decomposes a 1D circuit into the four-phase staircase: sites are split
/// into width-w blocks (w defaults to one circuit range), a sawtooth height
/// rises over three blocks and falls over one, and the induced causal time
/// function regroups the circuit into the zig-zag schedule.
pub fn staircase_decompose(circuit: &Circuit, block_width: Option<i64>) -> Result<Staircase> {
    let layout = circuit.layout();
    if !layout.is_one_dimensional() {
        return Err(Error::Precondition("staircase needs a Ring or Interval layout".into()));
    }
    let spacing = layout.min_spacing();
    let depth = circuit.depth().max(1) as i64;
    let r_sites = {
        let r = circuit.gate_range() / spacing;
        let mut k = r.floor().to_integer();
        if Rational64::from_integer(k) < r {
            k += 1;
        }
        k.max(1)
    };
    let w = block_width.unwrap_or(r_sites * depth).max(1);
    let extent_sites = match layout.space() {
        crate::lattice::ControlSpace::Ring { circumference } => *circumference / spacing,
        crate::lattice::ControlSpace::Interval { length } => *length / spacing,
        _ => unreachable!(),
    };
    if extent_sites < Rational64::from_integer(4 * w) {
        return Err(Error::Precondition(format!(
            "layout too small to host one full 1-2-3-4 block period: needs {} site units, has {}",
            4 * w, extent_sites
        )));
    }
    // period boundaries in site units; the last period absorbs the remainder
    let n_periods = (extent_sites / Rational64::from_integer(4 * w)).floor().to_integer();
    let period = extent_sites / Rational64::from_integer(n_periods);

    let wq = Rational64::from_integer(w);
    let height_at = |pos: Length| -> Length {
        let u = pos / spacing;
        let phase = u - (u / period).floor() * period;
        let rise_span = period - wq;
        if phase <= rise_span {
            // rise to height w over the first period − w site units
            phase * wq / rise_span
        } else {
            // unit-slope fall over the last w units
            period - phase
        }
    };
    let mut hv = Vec::new();
    let mut blocks = Vec::new();
    for s in layout.sites() {
        let pos = layout.coordinate(s.id)?;
        hv.push((s.id, height_at(pos) * spacing));
        let u = pos / spacing;
        let phase = u - (u / period).floor() * period;
        let b = (phase / (period / Rational64::from_integer(4))).floor().to_integer();
        blocks.push((s.id, (b.clamp(0, 3) + 1) as u8));
    }
    // Lipschitz constant 1 in site units = 1/spacing per length
    let h = HeightFunction::new(hv, Rational64::new(1, 1) / spacing);
    let c = {
        let rk = circuit.gate_range() / spacing; // r·K
        let mut k = rk.floor().to_integer();
        if Rational64::from_integer(k) < rk {
            k += 1;
        }
        k + 1
    };
    // floor in site units: scale heights down to sites before flooring
    let h_sites = HeightFunction::new(
        h.values().iter().map(|(s, v)| (*s, *v / spacing)).collect(),
        Rational64::from_integer(1),
    );
    // reuse make_time_function against a unit-spacing view: gate range in
    // site units r_sites has rK = r_sites, so c = r_sites + 1 passes.
    let scaled = Circuit {
        layout: layout.clone(),
        gate_range: Rational64::from_integer(r_sites),
        rounds: circuit.rounds.clone(),
        by_id: circuit.by_id.clone(),
    };
    let tau = make_time_function(&scaled, &h_sites, c)?;
    if let Some((a, b)) = is_causal(circuit, &tau)? {
        return Err(Error::NotCausal { earlier: a.0, later: b.0 });
    }
    let regrouped = regroup(circuit, &tau)?;
    let tmax = tau.max_time().max(1);
    let phases = (0..circuit.gate_count())
        .map(|id| {
            let t = tau.time(GateId(id)).unwrap();
            let quart = ((t - 1) * 4 / tmax).clamp(0, 3);
            (b'A' + quart as u8) as char
        })
        .collect();
    Ok(Staircase { circuit: regrouped.circuit, tau, blocks, phases })
}

/// Handle partition for constant-depth regrouping: levels S_0 … S_d, each a
/// union of site components.
#[derive(Debug, Clone)]
pub struct HandlePartition {
    pub levels: Vec<Vec<Vec<SiteId>>>,
}

impl HandlePartition {
    /// Alternating-arc partition of a ring: arcs of `arc_sites` consecutive
    /// sites, alternating between level 0 and level 1.
    pub fn alternating_arcs(layout: &Layout, arc_sites: usize) -> Result<HandlePartition> {
        if !layout.is_one_dimensional() {
            return Err(Error::Precondition("arc partition needs a 1D layout".into()));
        }
        let mut ids: Vec<SiteId> = layout.sites().iter().map(|s| s.id).collect();
        ids.sort_by_key(|id| layout.coordinate(*id).unwrap());
        let arcs: Vec<Vec<SiteId>> =
            ids.chunks(arc_sites).map(|c| c.to_vec()).collect();
        if arcs.len() < 2 || arcs.len() % 2 != 0 {
            return Err(Error::Precondition(format!(
                "ring does not split into an even number of {arc_sites}-site arcs"
            )));
        }
        let mut levels = vec![Vec::new(), Vec::new()];
        for (k, arc) in arcs.into_iter().enumerate() {
            levels[k % 2].push(arc);
        }
        Ok(HandlePartition { levels })
    }
}

/// Regroups a circuit to depth ≤ d+1 given a handle partition: each level's
/// gates merge into per-component block gates, with gates caught in the
/// forward lightcone of a higher level promoted to that level.
pub fn compress_depth(circuit: &Circuit, partition: &HandlePartition) -> Result<Regrouped> {
    let layout = circuit.layout();
    let lc = circuit.lightcone_range()?;
    // site -> (level, component)
    let mut site_level: BTreeMap<SiteId, (usize, usize)> = BTreeMap::new();
    let mut comp_count = 0usize;
    let mut comp_of_level: Vec<Vec<usize>> = Vec::new();
    for (lvl, comps) in partition.levels.iter().enumerate() {
        let mut ids = Vec::new();
        for comp in comps {
            let cid = comp_count;
            comp_count += 1;
            ids.push(cid);
            for s in comp {
                layout.site(*s)?;
                if site_level.insert(*s, (lvl, cid)).is_some() {
                    return Err(Error::Precondition(format!(
                        "site {s} appears twice in the handle partition"
                    )));
                }
            }
        }
        comp_of_level.push(ids);
        // separation: components of one level must be farther apart than
        // twice the circuit lightcone range
        for i in 0..comps.len() {
            for j in 0..i {
                let mut min_d: Option<Length> = None;
                for a in &comps[i] {
                    for b in &comps[j] {
                        let d = layout.distance(*a, *b)?;
                        if min_d.map_or(true, |m| d < m) {
                            min_d = Some(d);
                        }
                    }
                }
                if let Some(d) = min_d {
                    if d <= lc + lc {
                        return Err(Error::Precondition(format!(
                            "components {i} and {j} of level {lvl} are {d} apart; need > 2×lightcone = {} ",
                            lc + lc
                        )));
                    }
                }
            }
        }
    }
    // static level and component per gate
    let mut eff: Vec<(usize, usize)> = Vec::with_capacity(circuit.gate_count());
    let mut last_on_qudit: BTreeMap<QuditRef, (usize, usize)> = BTreeMap::new();
    for round in circuit.rounds() {
        for g in round {
            let mut stat: Option<(usize, usize)> = None;
            for s in g.support_sites() {
                let (lvl, cid) = *site_level.get(&s).ok_or_else(|| {
                    Error::Precondition(format!("site {s} not covered by the partition"))
                })?;
                match stat {
                    None => stat = Some((lvl, cid)),
                    Some((bl, bc)) => {
                        if lvl > bl {
                            stat = Some((lvl, cid));
                        } else if lvl == bl && cid != bc {
                            return Err(Error::Precondition(format!(
                                "gate {} straddles two components of level {lvl}",
                                g.id
                            )));
                        }
                    }
                }
            }
            let mut assigned = stat.unwrap();
            for q in &g.support {
                if let Some(&(lvl, cid)) = last_on_qudit.get(q) {
                    if lvl > assigned.0 {
                        assigned = (lvl, cid);
                    } else if lvl == assigned.0 && cid != assigned.1 {
                        return Err(Error::Precondition(format!(
                            "gate {} is reached by two level-{lvl} components; separation too small",
                            g.id
                        )));
                    }
                }
            }
            eff.push(assigned);
            for q in &g.support {
                let entry = last_on_qudit.entry(*q).or_insert(assigned);
                if assigned.0 >= entry.0 {
                    *entry = assigned;
                }
            }
        }
    }
    let times: Vec<i64> = eff.iter().map(|(lvl, _)| (*lvl + 1) as i64).collect();
    let groups: Vec<usize> = eff.iter().map(|(_, cid)| *cid).collect();
    let tf = TimeFunction::from_times(circuit, times)?.with_groups(groups);
    regroup(circuit, &tf)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fixtures;
    use crate::lattice::{len_int, one_physical, Layout};

    fn brickwork(n: usize, depth: usize, seed: u64) -> Circuit {
        let layout = Arc::new(Layout::unit_ring(n, one_physical(2)).unwrap());
        fixtures::random_brickwork_clifford(&layout, depth, seed).unwrap()
    }

    #[test]
    fn empty_circuit_is_valid_depth_zero() {
        let layout = Arc::new(Layout::unit_ring(4, one_physical(2)).unwrap());
        let c = Circuit::empty(layout);
        let rep = c.validate();
        assert!(rep.ok);
        assert_eq!(rep.depth, 0);
        assert_eq!(c.lightcone_range().unwrap(), Length::zero());
    }

    #[test]
    fn overlapping_gates_in_one_round_rejected() {
        let layout = Arc::new(Layout::unit_ring(4, one_physical(2)).unwrap());
        let g1 = fixtures::swap_gate(QuditRef::new(0, 0), QuditRef::new(1, 0));
        let g2 = fixtures::swap_gate(QuditRef::new(1, 0), QuditRef::new(2, 0));
        let c = Circuit::new(layout, len_int(1), vec![vec![g1, g2]]);
        assert!(matches!(c, Err(Error::InvalidCircuit(_))));
    }

    #[test]
    fn brickwork_fixture_is_valid() {
        let c = brickwork(12, 3, 7);
        let rep = c.validate();
        assert!(rep.ok, "{:?}", rep.violations);
        assert_eq!(rep.depth, 3);
    }

    #[test]
    fn forward_lightcone_single_and_closure() {
        let c = brickwork(12, 2, 3);
        // a gate in the last round is its own lightcone
        let last = c.rounds().last().unwrap()[0].id;
        assert_eq!(c.forward_lightcone(last).unwrap().len(), 1);
        // a first-round gate picks up overlapping round-2 gates
        let first = c.rounds()[0][0].id;
        let cone = c.forward_lightcone(first).unwrap();
        assert!(cone.len() >= 2);
        assert!(c.forward_lightcone(GateId(999)).is_err());
    }

    #[test]
    fn lightcone_range_brickwork_grows_with_depth() {
        let c3 = brickwork(12, 3, 1);
        assert_eq!(c3.lightcone_range().unwrap(), len_int(3));
        let c1 = brickwork(12, 1, 1);
        assert_eq!(c1.lightcone_range().unwrap(), len_int(1));
    }

    #[test]
    fn time_function_floor_plus_slope() {
        let c = brickwork(12, 2, 5);
        let h = HeightFunction::zero(c.layout());
        let tf = make_time_function(&c, &h, 2).unwrap();
        // constant height: rounds map to times 1 and 3
        for round in c.rounds() {
            for g in round {
                let r = c.round_of(g.id).unwrap();
                assert_eq!(tf.time(g.id).unwrap(), 1 + 2 * r as i64);
            }
        }
        // c below rK+1 rejected
        assert!(make_time_function(&c, &h, 0).is_err());
    }

    #[test]
    fn round_index_is_causal_constant_is_not() {
        let c = brickwork(12, 2, 9);
        let times: Vec<i64> =
            (0..c.gate_count()).map(|id| c.round_of(GateId(id)).unwrap() as i64).collect();
        let tf = TimeFunction::from_times(&c, times).unwrap();
        assert!(is_causal(&c, &tf).unwrap().is_none());
        let tf = TimeFunction::from_times(&c, vec![1; c.gate_count()]).unwrap();
        assert!(is_causal(&c, &tf).unwrap().is_some());
    }

    #[test]
    fn regroup_identity_when_time_is_round() {
        let c = brickwork(12, 3, 11);
        let times: Vec<i64> =
            (0..c.gate_count()).map(|id| c.round_of(GateId(id)).unwrap() as i64 + 1).collect();
        let tf = TimeFunction::from_times(&c, times).unwrap();
        let out = regroup(&c, &tf).unwrap();
        assert_eq!(out.circuit.depth(), c.depth());
        for (a, b) in c.rounds().iter().zip(out.circuit.rounds()) {
            assert_eq!(a.len(), b.len());
        }
    }

    #[test]
    fn regroup_rejects_non_causal() {
        let c = brickwork(12, 2, 13);
        let tf = TimeFunction::from_times(&c, vec![1; c.gate_count()]).unwrap();
        assert!(matches!(regroup(&c, &tf), Err(Error::NotCausal { .. })));
    }

    #[test]
    fn staircase_depth_bound_range_one() {
        for seed in [1u64, 2, 3] {
            let c = brickwork(24, 3, seed);
            let st = staircase_decompose(&c, None).unwrap();
            assert!(
                st.circuit.depth() <= 4 * c.depth(),
                "depth {} > 4×{}",
                st.circuit.depth(),
                c.depth()
            );
            assert!(st.blocks.iter().all(|(_, b)| (1..=4).contains(b)));
        }
    }

    #[test]
    fn staircase_rejects_small_ring() {
        let c = brickwork(8, 3, 1);
        assert!(staircase_decompose(&c, None).is_err());
    }

    #[test]
    fn compose_inverse_tensor_shapes() {
        let c = brickwork(12, 2, 17);
        let inv = c.inverse().unwrap();
        let both = c.then(&inv).unwrap();
        assert_eq!(both.depth(), c.depth() + inv.depth());

        let layout = c.layout().clone();
        let a = Circuit::new(
            layout.clone(),
            len_int(1),
            vec![vec![fixtures::swap_gate(QuditRef::new(0, 0), QuditRef::new(1, 0))]],
        )
        .unwrap();
        let b = Circuit::new(
            layout,
            len_int(1),
            vec![vec![fixtures::swap_gate(QuditRef::new(4, 0), QuditRef::new(5, 0))]],
        )
        .unwrap();
        let t = a.tensor(&b).unwrap();
        assert_eq!(t.depth(), 1);
        assert!(a.tensor(&a).is_err());
    }

    #[test]
    fn clifford_action_inverse_roundtrip() {
        let layout = Arc::new(Layout::unit_ring(6, one_physical(3)).unwrap());
        let mut rng = fixtures::rng(21);
        for _ in 0..20 {
            let g = fixtures::random_clifford_gate(
                &layout,
                vec![QuditRef::new(1, 0), QuditRef::new(2, 0)],
                3,
                &mut rng,
            )
            .unwrap();
            let inv = g.inverse(&layout).unwrap();
            for q in [QuditRef::new(1, 0), QuditRef::new(2, 0)] {
                for gen in [PauliString::x(3, q), PauliString::z(3, q)] {
                    let roundtrip =
                        inv.apply_to_pauli(&g.apply_to_pauli(&gen).unwrap()).unwrap();
                    assert_eq!(roundtrip, gen);
                }
            }
        }
    }
}
