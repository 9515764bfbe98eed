//! Sequitur grammar induction over integer symbols.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

const NIL: usize = usize::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
enum Sym {
    T(u32),
    N(usize),
    Guard(usize),
}

#[derive(Debug, Clone, Copy)]
struct Node {
    sym: Sym,
    prev: usize,
    next: usize,
    alive: bool,
}

#[derive(Debug, Clone, Copy)]
struct RuleSlot {
    guard: usize,
    count: usize,
    alive: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Checked {
    Unchanged,
    Overlap,
    Matched,
}

/// Online Sequitur state. Nodes and rules live in arenas and are never reused.
struct Builder {
    nodes: Vec<Node>,
    rules: Vec<RuleSlot>,
    digrams: HashMap<(Sym, Sym), usize>,
}

impl Builder {
    fn new() -> Self {
        let mut b = Builder {
            nodes: Vec::new(),
            rules: Vec::new(),
            digrams: HashMap::new(),
        };
        b.new_rule();
        b
    }

    fn new_rule(&mut self) -> usize {
        let id = self.rules.len();
        let g = self.nodes.len();
        self.nodes.push(Node {
            sym: Sym::Guard(id),
            prev: g,
            next: g,
            alive: true,
        });
        self.rules.push(RuleSlot {
            guard: g,
            count: 0,
            alive: true,
        });
        id
    }

    fn new_node(&mut self, sym: Sym) -> usize {
        if let Sym::N(r) = sym {
            self.rules[r].count += 1;
        }
        self.nodes.push(Node {
            sym,
            prev: NIL,
            next: NIL,
            alive: true,
        });
        self.nodes.len() - 1
    }

    fn sym(&self, n: usize) -> Sym {
        self.nodes[n].sym
    }

    fn next(&self, n: usize) -> usize {
        self.nodes[n].next
    }

    fn prev(&self, n: usize) -> usize {
        self.nodes[n].prev
    }

    fn is_guard(&self, n: usize) -> bool {
        matches!(self.sym(n), Sym::Guard(_))
    }

    fn first(&self, r: usize) -> usize {
        self.next(self.rules[r].guard)
    }

    fn last(&self, r: usize) -> usize {
        self.prev(self.rules[r].guard)
    }

    fn key(&self, n: usize) -> (Sym, Sym) {
        (self.sym(n), self.sym(self.next(n)))
    }

    fn unindex(&mut self, n: usize) {
        let next = self.next(n);
        if next == NIL || self.is_guard(n) || self.is_guard(next) {
            return;
        }
        let key = self.key(n);
        if self.digrams.get(&key) == Some(&n) {
            self.digrams.remove(&key);
        }
    }

    fn index(&mut self, n: usize) {
        let key = self.key(n);
        self.digrams.insert(key, n);
    }

    fn is_triple(&self, n: usize) -> bool {
        let (p, x) = (self.prev(n), self.next(n));
        p != NIL && x != NIL && self.sym(p) == self.sym(n) && self.sym(x) == self.sym(n)
    }

    fn join(&mut self, left: usize, right: usize) {
        if self.next(left) != NIL {
            self.unindex(left);
            // In a run like "aaa" only one of the two overlapping digrams is
            // indexed; re-index the survivor when its partner goes away.
            if self.prev(right) != NIL && self.is_triple(right) {
                self.index(right);
            }
            if self.is_triple(left) {
                self.index(self.prev(left));
            }
        }
        self.nodes[left].next = right;
        self.nodes[right].prev = left;
    }

    fn insert_after(&mut self, at: usize, n: usize) {
        let next = self.next(at);
        self.join(n, next);
        self.join(at, n);
    }

    fn delete(&mut self, n: usize) {
        let (p, x) = (self.prev(n), self.next(n));
        self.join(p, x);
        self.unindex(n);
        self.nodes[n].alive = false;
        if let Sym::N(r) = self.sym(n) {
            self.rules[r].count -= 1;
        }
    }

    fn valid_entry(&self, n: usize, key: (Sym, Sym)) -> bool {
        let node = &self.nodes[n];
        node.alive && node.next != NIL && self.nodes[node.next].alive && self.key(n) == key
    }

    fn check(&mut self, n: usize) -> Checked {
        if !self.nodes[n].alive || self.is_guard(n) || self.is_guard(self.next(n)) {
            return Checked::Unchanged;
        }
        let key = self.key(n);
        match self.digrams.get(&key).copied() {
            Some(x) if x == n => Checked::Unchanged,
            Some(x) if self.valid_entry(x, key) => {
                if self.next(x) == n || self.next(n) == x {
                    Checked::Overlap
                } else {
                    self.matched(n, x);
                    Checked::Matched
                }
            }
            _ => {
                self.digrams.insert(key, n);
                Checked::Unchanged
            }
        }
    }

    fn substitute(&mut self, n: usize, r: usize) {
        let q = self.prev(n);
        self.delete(self.next(q));
        self.delete(self.next(q));
        let new = self.new_node(Sym::N(r));
        self.insert_after(q, new);
        if self.check(q) != Checked::Matched {
            let next = self.next(q);
            self.check(next);
        }
    }

    fn matched(&mut self, ss: usize, m: usize) {
        let r = if self.is_guard(self.prev(m)) && self.is_guard(self.next(self.next(m))) {
            let Sym::Guard(r) = self.sym(self.prev(m)) else { unreachable!() };
            self.substitute(ss, r);
            r
        } else {
            let r = self.new_rule();
            let a = self.new_node(self.sym(ss));
            let b = self.new_node(self.sym(self.next(ss)));
            let g = self.rules[r].guard;
            self.insert_after(g, a);
            self.insert_after(a, b);
            self.substitute(m, r);
            self.substitute(ss, r);
            self.index(a);
            r
        };
        // Only the two ends of the rule body can hold the last use of a rule.
        if self.rules[r].alive {
            let f = self.first(r);
            self.expand_if_underused(f);
        }
        if self.rules[r].alive {
            let l = self.last(r);
            self.expand_if_underused(l);
        }
    }

    fn expand_if_underused(&mut self, n: usize) {
        if !self.nodes[n].alive {
            return;
        }
        if let Sym::N(r) = self.sym(n) {
            if self.rules[r].alive && self.rules[r].count == 1 {
                self.expand(n, r);
            }
        }
    }

    fn expand(&mut self, n: usize, r: usize) {
        let (left, right) = (self.prev(n), self.next(n));
        let (f, l) = (self.first(r), self.last(r));
        self.unindex(left);
        self.unindex(n);
        self.nodes[n].alive = false;
        self.rules[r].count = 0;
        self.rules[r].alive = false;
        let g = self.rules[r].guard;
        self.nodes[g].alive = false;
        self.nodes[left].next = f;
        self.nodes[f].prev = left;
        self.nodes[l].next = right;
        self.nodes[right].prev = l;
        self.check(left);
        self.check(l);
    }

    fn push(&mut self, t: u32) {
        let n = self.new_node(Sym::T(t));
        let last = self.last(0);
        self.insert_after(last, n);
        let p = self.prev(n);
        self.check(p);
    }

    fn finish(&self) -> Grammar {
        let mut ids: HashMap<usize, usize> = HashMap::from([(0, 0)]);
        let mut order = vec![0usize];
        let mut rules = Vec::new();
        let mut i = 0;
        while i < order.len() {
            let r = order[i];
            let mut body = Vec::new();
            let g = self.rules[r].guard;
            let mut n = self.next(g);
            while n != g {
                body.push(match self.sym(n) {
                    Sym::T(t) => GrammarSymbol::Terminal(t),
                    Sym::N(child) => {
                        let next_id = ids.len();
                        let id = *ids.entry(child).or_insert_with(|| {
                            order.push(child);
                            next_id
                        });
                        GrammarSymbol::Rule(id)
                    }
                    Sym::Guard(_) => unreachable!(),
                });
                n = self.next(n);
            }
            rules.push(body);
            i += 1;
        }
        Grammar { rules }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum GrammarSymbol {
    Terminal(u32),
    Rule(usize),
}

/// Context-free grammar producing exactly one sequence. `rules[0]` is the
/// top rule; the others are numbered in order of first reference.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Grammar {
    pub rules: Vec<Vec<GrammarSymbol>>,
}

impl Grammar {
    pub fn top(&self) -> &[GrammarSymbol] {
        &self.rules[0]
    }

    pub fn expand(&self, rule: usize) -> Vec<u32> {
        let mut out = Vec::new();
        self.expand_into(rule, &mut out);
        out
    }

    fn expand_into(&self, rule: usize, out: &mut Vec<u32>) {
        for s in &self.rules[rule] {
            match *s {
                GrammarSymbol::Terminal(t) => out.push(t),
                GrammarSymbol::Rule(r) => self.expand_into(r, out),
            }
        }
    }

    /// Terminal expansions of every non-top rule.
    pub fn rule_expansions(&self) -> Vec<Vec<u32>> {
        let mut memo: Vec<Option<Vec<u32>>> = vec![None; self.rules.len()];
        (1..self.rules.len()).map(|r| self.memo_expand(r, &mut memo)).collect()
    }

    fn memo_expand(&self, r: usize, memo: &mut Vec<Option<Vec<u32>>>) -> Vec<u32> {
        if let Some(v) = &memo[r] {
            return v.clone();
        }
        let mut out = Vec::new();
        for s in &self.rules[r] {
            match *s {
                GrammarSymbol::Terminal(t) => out.push(t),
                GrammarSymbol::Rule(c) => out.extend(self.memo_expand(c, memo)),
            }
        }
        memo[r] = Some(out.clone());
        out
    }

    /// Verifies digram uniqueness, rule utility and that the top rule expands
    /// to `seq`. Overlapping occurrences such as the two `aa` in `aaa` are
    /// allowed.
    pub fn check_invariants(&self, seq: &[u32]) -> std::result::Result<(), String> {
        if self.expand(0) != seq {
            return Err("expansion differs from input".into());
        }
        let mut uses = vec![0usize; self.rules.len()];
        let mut seen: HashMap<(GrammarSymbol, GrammarSymbol), (usize, usize)> = HashMap::new();
        for (r, body) in self.rules.iter().enumerate() {
            if r > 0 && body.len() < 2 {
                return Err(format!("rule {r} has length {}", body.len()));
            }
            for s in body {
                if let GrammarSymbol::Rule(c) = s {
                    uses[*c] += 1;
                }
            }
            for i in 0..body.len().saturating_sub(1) {
                let key = (body[i], body[i + 1]);
                match seen.get(&key) {
                    Some(&(r0, i0)) if r0 == r && i0 + 1 == i && body[i] == body[i + 1] => {}
                    Some(&(r0, i0)) => {
                        return Err(format!("digram {key:?} repeats at rule {r0}:{i0} and {r}:{i}"));
                    }
                    None => {
                        seen.insert(key, (r, i));
                    }
                }
            }
        }
        if let Some(r) = (1..uses.len()).find(|&r| uses[r] < 2) {
            return Err(format!("rule {r} used {} times", uses[r]));
        }
        Ok(())
    }
}

/// Runs Sequitur over `seq`.
pub fn sequitur(seq: &[u32]) -> Grammar {
    let mut b = Builder::new();
    for &t in seq {
        b.push(t);
    }
    b.finish()
}

/// Original length over top-rule length.
pub fn compression_ratio(seq: &[u32], grammar: &Grammar) -> Result<f64> {
    if seq.is_empty() {
        return Err(Error::invalid("compression ratio of an empty sequence"));
    }
    Ok(seq.len() as f64 / grammar.top().len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use GrammarSymbol::{Rule, Terminal};

    fn codes(s: &str) -> Vec<u32> {
        s.bytes().map(u32::from).collect()
    }

    #[test]
    fn single_symbol() {
        let seq = codes("a");
        let g = sequitur(&seq);
        assert_eq!(g.rules, vec![vec![Terminal(97)]]);
        assert_eq!(compression_ratio(&seq, &g).unwrap(), 1.0);
    }

    #[test]
    fn abab() {
        let seq = codes("abab");
        let g = sequitur(&seq);
        assert_eq!(g.rules, vec![vec![Rule(1), Rule(1)], vec![Terminal(97), Terminal(98)]]);
        assert_eq!(compression_ratio(&seq, &g).unwrap(), 2.0);
    }

    #[test]
    fn aaaa() {
        let seq = codes("aaaa");
        let g = sequitur(&seq);
        assert_eq!(g.rules, vec![vec![Rule(1), Rule(1)], vec![Terminal(97), Terminal(97)]]);
    }

    #[test]
    fn abcabcabcabc() {
        let seq = codes("abcabcabcabc");
        let g = sequitur(&seq);
        g.check_invariants(&seq).unwrap();
        assert_eq!(g.top(), &[Rule(1), Rule(1)]);
        assert_eq!(g.expand(1), codes("abcabc"));
        assert_eq!(compression_ratio(&seq, &g).unwrap(), 6.0);
    }

    #[test]
    fn distinct_symbols_do_not_compress() {
        let seq = codes("abcdefg");
        let g = sequitur(&seq);
        assert_eq!(g.rules.len(), 1);
        assert_eq!(compression_ratio(&seq, &g).unwrap(), 1.0);
    }

    #[test]
    fn empty_sequence_ratio_errors() {
        assert!(compression_ratio(&[], &sequitur(&[])).is_err());
    }

    #[test]
    fn classic_example() {
        let seq = codes("abcdbcabcdbc");
        let g = sequitur(&seq);
        g.check_invariants(&seq).unwrap();
        assert_eq!(g.top(), &[Rule(1), Rule(1)]);
    }
}
