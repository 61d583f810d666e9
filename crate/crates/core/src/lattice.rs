//! Ring geometry, site sets and the room/corridor blocking partition.
//!
//! Sites are 1-indexed at every public interface.

use std::f64::consts::E;

use crate::error::{input, regime, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct RingLattice {
    len: usize,
}

impl RingLattice {
    pub fn new(len: usize) -> Result<Self> {
        if len < 2 {
            return input(format!("ring needs at least 2 sites, got {len}"));
        }
        Ok(Self { len })
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn check_site(&self, i: usize) -> Result<()> {
        if i == 0 || i > self.len {
            return input(format!("site {i} outside 1..={}", self.len));
        }
        Ok(())
    }

    /// Ring distance min(|i-j|, L-|i-j|).
    pub fn dist(&self, i: usize, j: usize) -> Result<usize> {
        self.check_site(i)?;
        self.check_site(j)?;
        Ok(self.dist0(i - 1, j - 1))
    }

    /// Distance between 0-based indices; no range check.
    pub(crate) fn dist0(&self, i: usize, j: usize) -> usize {
        let d = i.abs_diff(j);
        d.min(self.len - d)
    }

    pub fn all_sites(&self) -> SiteSet {
        SiteSet {
            lattice: *self,
            members: (1..=self.len).collect(),
        }
    }
}

/// A sorted, duplicate-free set of sites on a given ring.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SiteSet {
    lattice: RingLattice,
    members: Vec<usize>,
}

impl SiteSet {
    /// Duplicates are merged; out-of-range sites are rejected.
    pub fn new(lattice: RingLattice, members: impl IntoIterator<Item = usize>) -> Result<Self> {
        let mut members: Vec<usize> = members.into_iter().collect();
        for &m in &members {
            lattice.check_site(m)?;
        }
        members.sort_unstable();
        members.dedup();
        Ok(Self { lattice, members })
    }

    pub fn empty(lattice: RingLattice) -> Self {
        Self {
            lattice,
            members: Vec::new(),
        }
    }

    /// `count` consecutive sites starting at `start`, wrapping around the ring.
    pub fn interval(lattice: RingLattice, start: usize, count: usize) -> Result<Self> {
        lattice.check_site(start)?;
        if count > lattice.len() {
            return input(format!("interval of {count} sites exceeds ring length {}", lattice.len()));
        }
        Self::new(lattice, (0..count).map(|k| (start - 1 + k) % lattice.len() + 1))
    }

    pub(crate) fn from_sorted_unchecked(lattice: RingLattice, members: Vec<usize>) -> Self {
        Self { lattice, members }
    }

    pub fn lattice(&self) -> RingLattice {
        self.lattice
    }

    pub fn members(&self) -> &[usize] {
        &self.members
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn contains(&self, site: usize) -> bool {
        self.members.binary_search(&site).is_ok()
    }

    fn same_lattice(&self, other: &SiteSet) -> Result<()> {
        if self.lattice != other.lattice {
            return input(format!(
                "site sets live on different rings (L={} vs L={})",
                self.lattice.len(),
                other.lattice.len()
            ));
        }
        Ok(())
    }

    pub fn union(&self, other: &SiteSet) -> Result<SiteSet> {
        self.same_lattice(other)?;
        SiteSet::new(self.lattice, self.members.iter().chain(&other.members).copied())
    }

    pub fn difference(&self, other: &SiteSet) -> Result<SiteSet> {
        self.same_lattice(other)?;
        let kept = self.members.iter().copied().filter(|m| !other.contains(*m)).collect();
        Ok(SiteSet::from_sorted_unchecked(self.lattice, kept))
    }

    pub fn complement(&self) -> SiteSet {
        let kept = (1..=self.lattice.len()).filter(|m| !self.contains(*m)).collect();
        SiteSet::from_sorted_unchecked(self.lattice, kept)
    }

    pub fn is_disjoint(&self, other: &SiteSet) -> bool {
        let (mut i, mut j) = (0, 0);
        while i < self.members.len() && j < other.members.len() {
            match self.members[i].cmp(&other.members[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => return false,
            }
        }
        true
    }

    pub fn is_subset(&self, other: &SiteSet) -> bool {
        self.members.iter().all(|m| other.contains(*m))
    }

    /// d_{j,S} for every site j, indexed 0..L (entry k belongs to site k+1).
    pub fn distance_field(&self) -> Result<Vec<usize>> {
        if self.is_empty() {
            return input("distance to an empty site set is undefined");
        }
        let l = self.lattice.len();
        let mut d = vec![usize::MAX; l];
        for &m in &self.members {
            d[m - 1] = 0;
        }
        for k in 0..2 * l {
            let (a, b) = (k % l, (k + 1) % l);
            if d[a] != usize::MAX {
                d[b] = d[b].min(d[a] + 1);
            }
        }
        for k in (0..2 * l).rev() {
            let (a, b) = ((k + 1) % l, k % l);
            if d[a] != usize::MAX {
                d[b] = d[b].min(d[a] + 1);
            }
        }
        Ok(d)
    }
}

/// min over i ∈ A, j ∈ B of the ring distance.
pub fn set_dist(a: &SiteSet, b: &SiteSet) -> Result<usize> {
    a.same_lattice(b)?;
    if a.is_empty() || b.is_empty() {
        return input("set distance needs non-empty sets");
    }
    let lat = a.lattice;
    if a.len().saturating_mul(b.len()) <= 4 * lat.len() {
        let mut best = usize::MAX;
        for &i in &a.members {
            for &j in &b.members {
                best = best.min(lat.dist0(i - 1, j - 1));
            }
        }
        return Ok(best);
    }
    let field = b.distance_field()?;
    Ok(a.members.iter().map(|&i| field[i - 1]).min().unwrap_or(0))
}

/// {i ∈ S : dist(i, L \ S) = 1}.
pub fn boundary(s: &SiteSet) -> Result<SiteSet> {
    let l = s.lattice.len();
    if s.is_empty() || s.len() == l {
        return input("boundary needs a proper non-empty subset of the ring");
    }
    let kept = s
        .members
        .iter()
        .copied()
        .filter(|&i| {
            let left = if i == 1 { l } else { i - 1 };
            let right = if i == l { 1 } else { i + 1 };
            !s.contains(left) || !s.contains(right)
        })
        .collect();
    Ok(SiteSet::from_sorted_unchecked(s.lattice, kept))
}

/// The room/corridor/tail partition of the ring around a subsystem S.
///
/// With block pitch a+b, room i collects sites with (i-1)(a+b) ≤ d_{j,S} < i(a+b) - b,
/// corridor i collects i(a+b) - b ≤ d_{j,S} < i(a+b), and the tail holds d_{j,S} ≥ n(a+b).
#[derive(Clone, Debug)]
pub struct BlockingPartition {
    t: f64,
    a: f64,
    b: f64,
    n: usize,
    tau: f64,
    mu: f64,
    subsystem: SiteSet,
    boundary_len: usize,
    rooms: Vec<SiteSet>,
    corridors: Vec<SiteSet>,
    tail: SiteSet,
}

/// One audited partition property.
#[derive(Clone, Debug)]
pub struct PartitionCheck {
    pub name: String,
    pub holds: bool,
    pub detail: String,
}

impl PartitionCheck {
    fn new(name: impl Into<String>, holds: bool, detail: String) -> Self {
        Self {
            name: name.into(),
            holds,
            detail,
        }
    }
}

pub fn blocking_partition(
    lattice: RingLattice,
    s: &SiteSet,
    t: f64,
    mu1: f64,
) -> Result<BlockingPartition> {
    if s.lattice() != lattice {
        return input("subsystem lives on a different ring");
    }
    if !t.is_finite() {
        return input(format!("time must be finite, got {t}"));
    }
    if !(mu1 > 0.0) || !mu1.is_finite() {
        return input(format!("mu1 must be a positive finite number, got {mu1}"));
    }
    let bnd = boundary(s)?;
    let at = t.abs();
    if at < 2.0 {
        return regime(format!("|t| >= 2 fails (|t| = {at})"));
    }
    let lf = lattice.len() as f64;
    if lf.powf(6.0 / 7.0) < at {
        return regime(format!("L^(6/7) >= |t| fails (L^(6/7) = {}, |t| = {at})", lf.powf(6.0 / 7.0)));
    }
    let mu = mu1 / (6.0 * (mu1 + 1.0));
    let lt = at.ln();
    if lt > at.powf(1.0 / 3.0 + mu) {
        return regime(format!("log|t| <= |t|^(1/3+mu) fails at |t| = {at}"));
    }
    let a = at.powf(2.0 / 3.0) / lt;
    let b = at.powf(1.0 / 3.0 - mu);
    if !(a >= b && b >= 1.0) {
        return regime(format!("a >= b >= 1 fails (a = {a}, b = {b})"));
    }
    let tau = 8.0 * E * at;
    let n = (tau / (a + b)).floor() as usize;
    if n <= 1 {
        return regime(format!("block count n = floor(8e|t|/(a+b)) = {n} is not > 1"));
    }

    let pitch = a + b;
    let field = s.distance_field()?;
    let mut rooms = vec![Vec::new(); n];
    let mut corridors = vec![Vec::new(); n];
    let mut tail = Vec::new();
    let tail_start = n as f64 * pitch;
    for (k, &d) in field.iter().enumerate() {
        let site = k + 1;
        let d = d as f64;
        if d >= tail_start {
            tail.push(site);
            continue;
        }
        // Block index i with (i-1)(a+b) <= d < i(a+b), settled with the exact products.
        let mut i = (d / pitch).floor() as usize + 1;
        while i > 1 && d < (i - 1) as f64 * pitch {
            i -= 1;
        }
        while d >= i as f64 * pitch {
            i += 1;
        }
        if d < i as f64 * pitch - b {
            rooms[i - 1].push(site);
        } else {
            corridors[i - 1].push(site);
        }
    }
    let wrap = |v: Vec<usize>| SiteSet::from_sorted_unchecked(lattice, v);
    Ok(BlockingPartition {
        t,
        a,
        b,
        n,
        tau,
        mu,
        subsystem: s.clone(),
        boundary_len: bnd.len(),
        rooms: rooms.into_iter().map(wrap).collect(),
        corridors: corridors.into_iter().map(wrap).collect(),
        tail: wrap(tail),
    })
}

impl BlockingPartition {
    pub fn t(&self) -> f64 {
        self.t
    }
    pub fn a(&self) -> f64 {
        self.a
    }
    pub fn b(&self) -> f64 {
        self.b
    }
    pub fn n(&self) -> usize {
        self.n
    }
    pub fn tau(&self) -> f64 {
        self.tau
    }
    pub fn mu(&self) -> f64 {
        self.mu
    }
    pub fn subsystem(&self) -> &SiteSet {
        &self.subsystem
    }
    pub fn boundary_len(&self) -> usize {
        self.boundary_len
    }
    pub fn rooms(&self) -> &[SiteSet] {
        &self.rooms
    }
    pub fn corridors(&self) -> &[SiteSet] {
        &self.corridors
    }
    pub fn tail(&self) -> &SiteSet {
        &self.tail
    }

    fn lattice(&self) -> RingLattice {
        self.subsystem.lattice()
    }

    fn merged(&self, parts: &[SiteSet]) -> SiteSet {
        let mut all: Vec<usize> = parts.iter().flat_map(|p| p.members().iter().copied()).collect();
        all.sort_unstable();
        SiteSet::from_sorted_unchecked(self.lattice(), all)
    }

    /// A = ∪ A_i.
    pub fn room_union(&self) -> SiteSet {
        self.merged(&self.rooms)
    }

    /// B = ∪ B_i.
    pub fn corridor_union(&self) -> SiteSet {
        self.merged(&self.corridors)
    }

    /// Partition invariants in the form that holds on the integer lattice.
    pub fn audit(&self) -> Vec<PartitionCheck> {
        let mut out = Vec::new();
        let l = self.lattice().len();
        let (a, b, n, at) = (self.a, self.b, self.n, self.t.abs());
        let pitch = a + b;

        let mut seen = vec![0u32; l];
        for set in self.rooms.iter().chain(&self.corridors).chain(std::iter::once(&self.tail)) {
            for &m in set.members() {
                seen[m - 1] += 1;
            }
        }
        let bad = seen.iter().filter(|&&c| c != 1).count();
        out.push(PartitionCheck::new(
            "partition-covers-disjointly",
            bad == 0,
            format!("{bad} sites covered zero or multiple times"),
        ));
        out.push(PartitionCheck::new(
            "subsystem-inside-first-room",
            self.subsystem.is_subset(&self.rooms[0]),
            format!("|S| = {}, |A_1| = {}", self.subsystem.len(), self.rooms[0].len()),
        ));
        out.push(PartitionCheck::new(
            "widths-ordered",
            a >= b && b >= 1.0,
            format!("a = {a}, b = {b}"),
        ));
        let span = n as f64 * pitch;
        out.push(PartitionCheck::new(
            "block-span",
            n > 1 && 4.0 * E * at <= span && span <= 8.0 * E * at,
            format!("n = {n}, n(a+b) = {span}, 4e|t| = {}", 4.0 * E * at),
        ));

        let mut worst = f64::INFINITY;
        let mut worst_detail = String::from("fewer than two non-empty rooms");
        for (i, ai) in self.rooms.iter().enumerate() {
            if ai.is_empty() {
                continue;
            }
            let field = ai.distance_field().expect("non-empty");
            for (j, aj) in self.rooms.iter().enumerate().skip(i + 1) {
                if aj.is_empty() {
                    continue;
                }
                let d = aj.members().iter().map(|&m| field[m - 1]).min().unwrap_or(0) as f64;
                let need = (j - i) as f64 * pitch - a;
                if d - need < worst {
                    worst = d - need;
                    worst_detail = format!("rooms {} and {}: distance {d} vs {need}", i + 1, j + 1);
                }
            }
        }
        out.push(PartitionCheck::new("room-separation", worst > 0.0, worst_detail));

        if self.tail.is_empty() {
            out.push(PartitionCheck::new("tail-distance", true, "tail empty".into()));
        } else {
            let d = set_dist(&self.subsystem, &self.tail).expect("non-empty") as f64;
            out.push(PartitionCheck::new(
                "tail-distance",
                d >= self.tau / 2.0,
                format!("d(S,T) = {d}, tau/2 = {}", self.tau / 2.0),
            ));
        }

        let bs = self.boundary_len as f64;
        let first = self.rooms[0].len() as f64;
        let first_cap = self.subsystem.len() as f64 + 2.0 * bs * a;
        out.push(PartitionCheck::new(
            "first-room-size",
            first <= first_cap,
            format!("|A_1| = {first} vs {first_cap}"),
        ));
        let room_cap = 2.0 * bs * a.ceil();
        let biggest = self.rooms[1..].iter().map(|r| r.len()).max().unwrap_or(0) as f64;
        out.push(PartitionCheck::new(
            "room-size-integer",
            biggest <= room_cap,
            format!("max_(i>1) |A_i| = {biggest} vs 2|dS|ceil(a) = {room_cap}"),
        ));
        let corridor_total = self.corridors.iter().map(|c| c.len()).sum::<usize>() as f64;
        let corridor_cap = 2.0 * bs * n as f64 * b.ceil();
        out.push(PartitionCheck::new(
            "corridor-size-integer",
            corridor_total <= corridor_cap,
            format!("|B| = {corridor_total} vs 2|dS| n ceil(b) = {corridor_cap}"),
        ));
        out
    }

    /// Room and corridor size bounds with real widths a and b in place of lattice
    /// counts. These can fail, because an interval of length a can hold ceil(a)
    /// integers.
    pub fn nominal_cardinality_checks(&self) -> Vec<PartitionCheck> {
        let bs = self.boundary_len as f64;
        let (a, b) = (self.a, self.b);
        let biggest = self.rooms[1..].iter().map(|r| r.len()).max().unwrap_or(0) as f64;
        let corridor_total = self.corridors.iter().map(|c| c.len()).sum::<usize>() as f64;
        vec![
            PartitionCheck::new(
                "room-size-nominal",
                biggest <= 2.0 * bs * a,
                format!("max_(i>1) |A_i| = {biggest} vs 2|dS|a = {}", 2.0 * bs * a),
            ),
            PartitionCheck::new(
                "corridor-size-nominal",
                corridor_total <= 2.0 * bs * self.tau * b / a,
                format!("|B| = {corridor_total} vs 2|dS|tau b/a = {}", 2.0 * bs * self.tau * b / a),
            ),
        ]
    }
}
