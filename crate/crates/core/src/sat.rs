//! Incremental CDCL satisfiability solver.
//!
//! Two watched literals, first-UIP learning, VSIDS branching with phase
//! saving, Luby restarts. Queries run under assumption literals without
//! touching the clause database, and a failed query reports the subset of
//! assumptions responsible for the conflict.

use std::fmt;
use std::ops::Not;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(pub u32);

impl Var {
    #[inline]
    pub fn index(self) -> usize {
        self.0 as usize
    }

    #[inline]
    pub fn lit(self, positive: bool) -> Lit {
        Lit(self.0 << 1 | u32::from(!positive))
    }
}

/// A variable with a sign, packed as `2 * var + negated`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Lit(u32);

impl Lit {
    #[inline]
    pub fn var(self) -> Var {
        Var(self.0 >> 1)
    }

    #[inline]
    pub fn is_positive(self) -> bool {
        self.0 & 1 == 0
    }

    #[inline]
    fn code(self) -> usize {
        self.0 as usize
    }

    /// DIMACS literal (1-based, negative for negation) to solver literal.
    pub fn from_dimacs(lit: i32) -> Lit {
        assert!(lit != 0, "0 is not a literal");
        Var(lit.unsigned_abs() - 1).lit(lit > 0)
    }

    pub fn to_dimacs(self) -> i32 {
        let v = self.var().0 as i32 + 1;
        if self.is_positive() {
            v
        } else {
            -v
        }
    }
}

impl Not for Lit {
    type Output = Lit;

    #[inline]
    fn not(self) -> Lit {
        Lit(self.0 ^ 1)
    }
}

impl fmt::Display for Lit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.to_dimacs())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum LBool {
    True,
    False,
    Undef,
}

type ClauseRef = usize;

#[derive(Debug)]
struct Clause {
    lits: Vec<Lit>,
    learnt: bool,
    deleted: bool,
    activity: f64,
}

/// Indexed binary max-heap over variable activities.
#[derive(Debug, Default)]
struct VarOrder {
    heap: Vec<Var>,
    pos: Vec<Option<usize>>,
}

impl VarOrder {
    fn grow(&mut self, n: usize) {
        self.pos.resize(n, None);
    }

    fn contains(&self, v: Var) -> bool {
        self.pos[v.index()].is_some()
    }

    fn insert(&mut self, v: Var, act: &[f64]) {
        if self.contains(v) {
            return;
        }
        self.heap.push(v);
        self.pos[v.index()] = Some(self.heap.len() - 1);
        self.sift_up(self.heap.len() - 1, act);
    }

    fn bumped(&mut self, v: Var, act: &[f64]) {
        if let Some(i) = self.pos[v.index()] {
            self.sift_up(i, act);
        }
    }

    fn pop(&mut self, act: &[f64]) -> Option<Var> {
        if self.heap.is_empty() {
            return None;
        }
        let top = self.heap.swap_remove(0);
        self.pos[top.index()] = None;
        if !self.heap.is_empty() {
            self.pos[self.heap[0].index()] = Some(0);
            self.sift_down(0, act);
        }
        Some(top)
    }

    fn sift_up(&mut self, mut i: usize, act: &[f64]) {
        let v = self.heap[i];
        while i > 0 {
            let parent = (i - 1) / 2;
            let pv = self.heap[parent];
            if act[pv.index()] >= act[v.index()] {
                break;
            }
            self.heap[i] = pv;
            self.pos[pv.index()] = Some(i);
            i = parent;
        }
        self.heap[i] = v;
        self.pos[v.index()] = Some(i);
    }

    fn sift_down(&mut self, mut i: usize, act: &[f64]) {
        let v = self.heap[i];
        let n = self.heap.len();
        loop {
            let l = 2 * i + 1;
            if l >= n {
                break;
            }
            let r = l + 1;
            let c = if r < n && act[self.heap[r].index()] > act[self.heap[l].index()] {
                r
            } else {
                l
            };
            let cv = self.heap[c];
            if act[cv.index()] <= act[v.index()] {
                break;
            }
            self.heap[i] = cv;
            self.pos[cv.index()] = Some(i);
            i = c;
        }
        self.heap[i] = v;
        self.pos[v.index()] = Some(i);
    }
}

#[derive(Debug)]
pub struct Solver {
    clauses: Vec<Clause>,
    watches: Vec<Vec<ClauseRef>>,
    assigns: Vec<LBool>,
    level: Vec<u32>,
    reason: Vec<Option<ClauseRef>>,
    polarity: Vec<bool>,
    activity: Vec<f64>,
    seen: Vec<bool>,
    order: VarOrder,
    trail: Vec<Lit>,
    trail_lim: Vec<usize>,
    qhead: usize,
    var_inc: f64,
    cla_inc: f64,
    learnt_count: usize,
    max_learnts: f64,
    ok: bool,
    model: Vec<bool>,
    failed: Vec<Lit>,
    conflicts: u64,
}

impl Default for Solver {
    fn default() -> Self {
        Self::new()
    }
}

const VAR_DECAY: f64 = 0.95;
const CLAUSE_DECAY: f64 = 0.999;
const RESTART_BASE: u64 = 100;

impl Solver {
    pub fn new() -> Self {
        Solver {
            clauses: Vec::new(),
            watches: Vec::new(),
            assigns: Vec::new(),
            level: Vec::new(),
            reason: Vec::new(),
            polarity: Vec::new(),
            activity: Vec::new(),
            seen: Vec::new(),
            order: VarOrder::default(),
            trail: Vec::new(),
            trail_lim: Vec::new(),
            qhead: 0,
            var_inc: 1.0,
            cla_inc: 1.0,
            learnt_count: 0,
            max_learnts: 2000.0,
            ok: true,
            model: Vec::new(),
            failed: Vec::new(),
            conflicts: 0,
        }
    }

    pub fn with_vars(n: usize) -> Self {
        let mut s = Self::new();
        s.ensure_vars(n);
        s
    }

    pub fn num_vars(&self) -> usize {
        self.assigns.len()
    }

    pub fn new_var(&mut self) -> Var {
        let v = Var(self.assigns.len() as u32);
        self.ensure_vars(v.index() + 1);
        v
    }

    pub fn ensure_vars(&mut self, n: usize) {
        let old = self.assigns.len();
        if n <= old {
            return;
        }
        self.assigns.resize(n, LBool::Undef);
        self.level.resize(n, 0);
        self.reason.resize(n, None);
        self.polarity.resize(n, false);
        self.activity.resize(n, 0.0);
        self.seen.resize(n, false);
        self.watches.resize(2 * n, Vec::new());
        self.order.grow(n);
        for i in old..n {
            self.order.insert(Var(i as u32), &self.activity);
        }
    }

    /// Total conflicts seen over the solver's lifetime.
    pub fn conflicts(&self) -> u64 {
        self.conflicts
    }

    #[inline]
    fn value(&self, l: Lit) -> LBool {
        match self.assigns[l.var().index()] {
            LBool::Undef => LBool::Undef,
            LBool::True if l.is_positive() => LBool::True,
            LBool::False if !l.is_positive() => LBool::True,
            _ => LBool::False,
        }
    }

    fn decision_level(&self) -> usize {
        self.trail_lim.len()
    }

    /// Adds a permanent clause. Returns `false` once the clause set is
    /// known to be unsatisfiable.
    pub fn add_clause(&mut self, lits: &[Lit]) -> bool {
        if !self.ok {
            return false;
        }
        debug_assert_eq!(self.decision_level(), 0);
        if let Some(max) = lits.iter().map(|l| l.var().index()).max() {
            self.ensure_vars(max + 1);
        }
        let mut c: Vec<Lit> = lits.to_vec();
        c.sort_unstable();
        c.dedup();
        let mut out = Vec::with_capacity(c.len());
        for (i, &l) in c.iter().enumerate() {
            if i + 1 < c.len() && c[i + 1] == !l {
                return true; // tautology
            }
            match self.value(l) {
                LBool::True => return true,
                LBool::False => {}
                LBool::Undef => out.push(l),
            }
        }
        match out.len() {
            0 => {
                self.ok = false;
                false
            }
            1 => {
                self.enqueue(out[0], None);
                if self.propagate().is_some() {
                    self.ok = false;
                }
                self.ok
            }
            _ => {
                self.attach(out, false);
                true
            }
        }
    }

    fn attach(&mut self, lits: Vec<Lit>, learnt: bool) -> ClauseRef {
        let cr = self.clauses.len();
        self.watches[lits[0].code()].push(cr);
        self.watches[lits[1].code()].push(cr);
        if learnt {
            self.learnt_count += 1;
        }
        self.clauses.push(Clause {
            lits,
            learnt,
            deleted: false,
            activity: 0.0,
        });
        cr
    }

    fn enqueue(&mut self, l: Lit, reason: Option<ClauseRef>) {
        let v = l.var().index();
        self.assigns[v] = if l.is_positive() {
            LBool::True
        } else {
            LBool::False
        };
        self.level[v] = self.decision_level() as u32;
        self.reason[v] = reason;
        self.trail.push(l);
    }

    /// Unit propagation; returns a conflicting clause if one arises.
    fn propagate(&mut self) -> Option<ClauseRef> {
        let mut conflict = None;
        while self.qhead < self.trail.len() && conflict.is_none() {
            let p = self.trail[self.qhead];
            self.qhead += 1;
            let false_lit = !p;
            let mut ws = std::mem::take(&mut self.watches[false_lit.code()]);
            let mut i = 0;
            let mut j = 0;
            while i < ws.len() {
                let cr = ws[i];
                i += 1;
                if self.clauses[cr].deleted {
                    continue;
                }
                {
                    let lits = &mut self.clauses[cr].lits;
                    if lits[0] == false_lit {
                        lits.swap(0, 1);
                    }
                }
                let first = self.clauses[cr].lits[0];
                if self.value(first) == LBool::True {
                    ws[j] = cr;
                    j += 1;
                    continue;
                }
                let len = self.clauses[cr].lits.len();
                let mut moved = false;
                for k in 2..len {
                    let lk = self.clauses[cr].lits[k];
                    if self.value(lk) != LBool::False {
                        self.clauses[cr].lits.swap(1, k);
                        self.watches[lk.code()].push(cr);
                        moved = true;
                        break;
                    }
                }
                if moved {
                    continue;
                }
                ws[j] = cr;
                j += 1;
                if self.value(first) == LBool::False {
                    conflict = Some(cr);
                    while i < ws.len() {
                        ws[j] = ws[i];
                        j += 1;
                        i += 1;
                    }
                } else {
                    self.enqueue(first, Some(cr));
                }
            }
            ws.truncate(j);
            self.watches[false_lit.code()] = ws;
        }
        if conflict.is_some() {
            self.qhead = self.trail.len();
        }
        conflict
    }

    fn bump_var(&mut self, v: Var) {
        self.activity[v.index()] += self.var_inc;
        if self.activity[v.index()] > 1e100 {
            for a in &mut self.activity {
                *a *= 1e-100;
            }
            self.var_inc *= 1e-100;
        }
        self.order.bumped(v, &self.activity);
    }

    fn bump_clause(&mut self, cr: ClauseRef) {
        let c = &mut self.clauses[cr];
        if !c.learnt {
            return;
        }
        c.activity += self.cla_inc;
        if c.activity > 1e20 {
            for c in self.clauses.iter_mut().filter(|c| c.learnt) {
                c.activity *= 1e-20;
            }
            self.cla_inc *= 1e-20;
        }
    }

    /// First-UIP conflict analysis. Returns the learnt clause (asserting
    /// literal first) and the level to backtrack to.
    fn analyze(&mut self, mut confl: ClauseRef) -> (Vec<Lit>, usize) {
        let mut learnt = vec![Lit(0)];
        let mut path = 0usize;
        let mut p: Option<Lit> = None;
        let mut idx = self.trail.len();
        let current = self.decision_level() as u32;
        loop {
            self.bump_clause(confl);
            let skip = usize::from(p.is_some());
            for k in skip..self.clauses[confl].lits.len() {
                let q = self.clauses[confl].lits[k];
                let v = q.var();
                if !self.seen[v.index()] && self.level[v.index()] > 0 {
                    self.seen[v.index()] = true;
                    self.bump_var(v);
                    if self.level[v.index()] >= current {
                        path += 1;
                    } else {
                        learnt.push(q);
                    }
                }
            }
            loop {
                idx -= 1;
                if self.seen[self.trail[idx].var().index()] {
                    break;
                }
            }
            let lit = self.trail[idx];
            self.seen[lit.var().index()] = false;
            path -= 1;
            p = Some(lit);
            if path == 0 {
                break;
            }
            confl = self.reason[lit.var().index()].expect("implied literal has a reason");
        }
        learnt[0] = !p.expect("uip");
        for l in &learnt[1..] {
            self.seen[l.var().index()] = false;
        }
        let mut bt = 0;
        if learnt.len() > 1 {
            let mut max_i = 1;
            for i in 2..learnt.len() {
                if self.level[learnt[i].var().index()] > self.level[learnt[max_i].var().index()] {
                    max_i = i;
                }
            }
            learnt.swap(1, max_i);
            bt = self.level[learnt[1].var().index()] as usize;
        }
        (learnt, bt)
    }

    /// Collects the assumptions that imply `!failed`, including `failed`.
    fn analyze_final(&mut self, failed: Lit) {
        self.failed.clear();
        self.failed.push(failed);
        if self.decision_level() == 0 {
            return;
        }
        self.seen[failed.var().index()] = true;
        for i in (self.trail_lim[0]..self.trail.len()).rev() {
            let l = self.trail[i];
            let v = l.var().index();
            if !self.seen[v] {
                continue;
            }
            match self.reason[v] {
                None => {
                    if l != failed {
                        self.failed.push(l);
                    }
                }
                Some(cr) => {
                    for k in 1..self.clauses[cr].lits.len() {
                        let q = self.clauses[cr].lits[k].var().index();
                        if self.level[q] > 0 {
                            self.seen[q] = true;
                        }
                    }
                }
            }
            self.seen[v] = false;
        }
        self.seen[failed.var().index()] = false;
    }

    fn cancel_until(&mut self, lvl: usize) {
        if self.decision_level() <= lvl {
            return;
        }
        let start = self.trail_lim[lvl];
        for i in (start..self.trail.len()).rev() {
            let l = self.trail[i];
            let v = l.var();
            self.assigns[v.index()] = LBool::Undef;
            self.reason[v.index()] = None;
            self.polarity[v.index()] = l.is_positive();
            self.order.insert(v, &self.activity);
        }
        self.trail.truncate(start);
        self.trail_lim.truncate(lvl);
        self.qhead = start;
    }

    fn pick_branch(&mut self) -> Option<Lit> {
        while let Some(v) = self.order.pop(&self.activity) {
            if self.assigns[v.index()] == LBool::Undef {
                return Some(v.lit(self.polarity[v.index()]));
            }
        }
        None
    }

    fn locked(&self, cr: ClauseRef) -> bool {
        let l = self.clauses[cr].lits[0];
        self.value(l) == LBool::True && self.reason[l.var().index()] == Some(cr)
    }

    fn reduce_learnts(&mut self) {
        let mut learnts: Vec<ClauseRef> = (0..self.clauses.len())
            .filter(|&cr| {
                self.clauses[cr].learnt
                    && !self.clauses[cr].deleted
                    && self.clauses[cr].lits.len() > 2
            })
            .collect();
        learnts.sort_by(|&a, &b| {
            self.clauses[a]
                .activity
                .total_cmp(&self.clauses[b].activity)
        });
        let half = learnts.len() / 2;
        for &cr in &learnts[..half] {
            if !self.locked(cr) {
                self.clauses[cr].deleted = true;
                self.clauses[cr].lits.clear();
                self.clauses[cr].lits.shrink_to_fit();
                self.learnt_count -= 1;
            }
        }
        for ws in &mut self.watches {
            ws.retain(|&cr| !self.clauses[cr].deleted);
        }
    }

    /// Decides satisfiability of the clause set.
    pub fn solve(&mut self) -> bool {
        self.solve_under(&[])
    }

    /// Decides satisfiability under temporary unit assumptions.
    pub fn solve_under(&mut self, assumptions: &[Lit]) -> bool {
        self.failed.clear();
        if !self.ok {
            return false;
        }
        if let Some(max) = assumptions.iter().map(|l| l.var().index()).max() {
            self.ensure_vars(max + 1);
        }
        let mut restart = 0u32;
        let result = loop {
            let budget = luby(restart) * RESTART_BASE;
            restart += 1;
            match self.search(assumptions, budget) {
                Some(r) => break r,
                None => continue,
            }
        };
        self.cancel_until(0);
        result
    }

    /// Runs until a result or until `budget` conflicts have passed.
    fn search(&mut self, assumptions: &[Lit], budget: u64) -> Option<bool> {
        let mut local = 0u64;
        loop {
            if let Some(confl) = self.propagate() {
                self.conflicts += 1;
                local += 1;
                if self.decision_level() == 0 {
                    self.ok = false;
                    return Some(false);
                }
                let (learnt, bt) = self.analyze(confl);
                self.cancel_until(bt);
                if learnt.len() == 1 {
                    self.enqueue(learnt[0], None);
                } else {
                    let asserting = learnt[0];
                    let cr = self.attach(learnt, true);
                    self.bump_clause(cr);
                    self.enqueue(asserting, Some(cr));
                }
                self.var_inc /= VAR_DECAY;
                self.cla_inc /= CLAUSE_DECAY;
                continue;
            }
            if local >= budget {
                self.cancel_until(0);
                return None;
            }
            if self.learnt_count as f64 >= self.max_learnts + self.trail.len() as f64 {
                self.reduce_learnts();
                self.max_learnts *= 1.1;
            }
            let mut next = None;
            while self.decision_level() < assumptions.len() {
                let a = assumptions[self.decision_level()];
                match self.value(a) {
                    LBool::True => self.trail_lim.push(self.trail.len()),
                    LBool::False => {
                        self.analyze_final(a);
                        return Some(false);
                    }
                    LBool::Undef => {
                        next = Some(a);
                        break;
                    }
                }
            }
            let next = match next {
                Some(l) => l,
                None => match self.pick_branch() {
                    Some(l) => l,
                    None => {
                        self.model = self.assigns.iter().map(|&a| a == LBool::True).collect();
                        return Some(true);
                    }
                },
            };
            self.trail_lim.push(self.trail.len());
            self.enqueue(next, None);
        }
    }

    /// Assignment found by the last successful solve.
    pub fn model(&self) -> &[bool] {
        &self.model
    }

    pub fn model_value(&self, l: Lit) -> bool {
        self.model[l.var().index()] == l.is_positive()
    }

    /// After an unsatisfiable `solve_under`, the assumptions that together
    /// contradict the clause set. Empty if the clauses alone are unsatisfiable.
    pub fn failed_assumptions(&self) -> &[Lit] {
        &self.failed
    }

    /// False once the clause set has been proven unsatisfiable outright.
    pub fn is_consistent(&self) -> bool {
        self.ok
    }
}

/// The Luby sequence 1, 1, 2, 1, 1, 2, 4, ...
fn luby(i: u32) -> u64 {
    let mut size = 1u64;
    let mut seq = 0u32;
    while size < u64::from(i) + 1 {
        seq += 1;
        size = 2 * size + 1;
    }
    let mut x = u64::from(i);
    while size - 1 != x {
        size = (size - 1) >> 1;
        seq -= 1;
        x %= size;
    }
    1u64 << seq
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn lits(c: &[i32]) -> Vec<Lit> {
        c.iter().map(|&l| Lit::from_dimacs(l)).collect()
    }

    fn brute_force_sat(n: usize, clauses: &[Vec<i32>], assumptions: &[i32]) -> bool {
        (0u32..1 << n).any(|bits| {
            let val = |l: i32| {
                let b = bits >> (l.unsigned_abs() - 1) & 1 == 1;
                if l > 0 {
                    b
                } else {
                    !b
                }
            };
            assumptions.iter().all(|&a| val(a)) && clauses.iter().all(|c| c.iter().any(|&l| val(l)))
        })
    }

    #[test]
    fn luby_prefix() {
        let seq: Vec<u64> = (0..15).map(luby).collect();
        assert_eq!(seq, vec![1, 1, 2, 1, 1, 2, 4, 1, 1, 2, 1, 1, 2, 4, 8]);
    }

    #[test]
    fn contradiction_is_unsat() {
        let mut s = Solver::new();
        s.add_clause(&lits(&[1]));
        s.add_clause(&lits(&[-1]));
        assert!(!s.solve());
    }

    #[test]
    fn empty_clause_set_with_assumption() {
        let mut s = Solver::with_vars(1);
        assert!(s.solve_under(&lits(&[1])));
        assert!(s.model_value(Lit::from_dimacs(1)));
    }

    #[test]
    fn failed_assumptions_are_a_core() {
        let mut s = Solver::new();
        s.add_clause(&lits(&[-1, 2]));
        s.add_clause(&lits(&[-2, -3]));
        s.add_clause(&lits(&[4, 5]));
        assert!(!s.solve_under(&lits(&[4, 1, 3])));
        let mut core: Vec<i32> = s
            .failed_assumptions()
            .iter()
            .map(|l| l.to_dimacs())
            .collect();
        core.sort();
        assert_eq!(core, vec![1, 3]);
        // the database is untouched by a failed query
        assert!(s.solve_under(&lits(&[1])));
        assert!(s.solve());
    }

    #[test]
    fn pigeonhole_4_into_3_is_unsat() {
        let mut s = Solver::new();
        let p = |i: i32, j: i32| i * 3 + j + 1;
        for i in 0..4 {
            s.add_clause(&lits(&[p(i, 0), p(i, 1), p(i, 2)]));
        }
        for j in 0..3 {
            for a in 0..4 {
                for b in a + 1..4 {
                    s.add_clause(&lits(&[-p(a, j), -p(b, j)]));
                }
            }
        }
        assert!(!s.solve());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(300))]
        #[test]
        fn agrees_with_brute_force(
            clauses in prop::collection::vec(prop::collection::vec((1i32..=8, any::<bool>()), 1..4), 0..40),
            assumptions in prop::collection::vec((1i32..=8, any::<bool>()), 0..3),
        ) {
            let to_lits = |c: &Vec<(i32, bool)>| c.iter().map(|&(v, s)| if s { v } else { -v }).collect::<Vec<i32>>();
            let clauses: Vec<Vec<i32>> = clauses.iter().map(to_lits).collect();
            let assumptions = to_lits(&assumptions);
            let mut s = Solver::with_vars(8);
            for c in &clauses {
                s.add_clause(&lits(c));
            }
            let expected = brute_force_sat(8, &clauses, &assumptions);
            let got = s.solve_under(&lits(&assumptions));
            prop_assert_eq!(got, expected);
            if got {
                for c in &clauses {
                    prop_assert!(c.iter().any(|&l| s.model_value(Lit::from_dimacs(l))));
                }
                for &a in &assumptions {
                    prop_assert!(s.model_value(Lit::from_dimacs(a)));
                }
            } else if s.is_consistent() {
                let core: Vec<i32> = s.failed_assumptions().iter().map(|l| l.to_dimacs()).collect();
                prop_assert!(core.iter().all(|l| assumptions.contains(l)));
                prop_assert!(!brute_force_sat(8, &clauses, &core));
            }
            // a second query on the same instance stays consistent
            prop_assert_eq!(s.solve(), brute_force_sat(8, &clauses, &[]));
        }
    }
}
