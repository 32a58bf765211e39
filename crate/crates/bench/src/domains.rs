//! The four experimental domains: seeded example generators, native
//! ground-truth checkers and the background knowledge each domain uses.

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use milsynth_core::ibk::{self, STD_IBK};
use milsynth_core::syntax::Selection;
use milsynth_core::{Atom, CompiledRegistry, GroundValue, LearningTask, Metarule, Pack, PredSym, TaskError, Term};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Waiter,
    Chess,
    Droplast,
    Encryption,
}

impl Domain {
    pub const ALL: [Domain; 4] = [Domain::Waiter, Domain::Chess, Domain::Droplast, Domain::Encryption];

    pub fn name(self) -> &'static str {
        match self {
            Domain::Waiter => "waiter",
            Domain::Chess => "chess",
            Domain::Droplast => "droplast",
            Domain::Encryption => "encryption",
        }
    }

    /// Size interval used with the top-down learner.
    pub fn top_down_interval(self) -> (usize, usize) {
        match self {
            Domain::Waiter => (1, 20),
            Domain::Chess => (1, 16),
            Domain::Droplast => (1, 10),
            Domain::Encryption => (1, 20),
        }
    }

    /// Size interval used with the bottom-up learner.
    pub fn bottom_up_interval(self) -> (usize, usize) {
        (1, 5)
    }

    pub fn pack(self) -> Pack {
        match self {
            Domain::Waiter => Pack::Waiter,
            Domain::Chess => Pack::Chess,
            Domain::Droplast => Pack::List,
            Domain::Encryption => Pack::Encryption,
        }
    }

    /// Compiled BK for the domain, with its primitive whitelist.
    pub fn registry(self) -> CompiledRegistry {
        let mut reg = CompiledRegistry::with_pack(self.pack());
        if self == Domain::Droplast {
            let prims = [("head", 2), ("tail", 2), ("empty", 1), ("reverse", 2)];
            reg.set_prims(prims.iter().map(|(n, a)| PredSym::new(n, *a)).collect())
                .expect("list pack defines the droplast primitives");
        }
        reg
    }

    /// A learning task over this domain's BK; `abstracted` adds map, until
    /// and ifthenelse as interpreted BK.
    pub fn task(
        self,
        pos: Vec<Atom>,
        neg: Vec<Atom>,
        abstracted: bool,
        metarules: Vec<Arc<Metarule>>,
    ) -> Result<LearningTask, TaskError> {
        let ibk = if abstracted {
            ibk::select(&Selection::Names(STD_IBK.iter().map(|s| s.to_string()).collect()))?
        } else {
            Vec::new()
        };
        LearningTask::new(pos, neg, Arc::new(self.registry()), ibk, metarules)
    }

    /// Ground truth for an example atom `f(input, output)`.
    pub fn oracle(self, atom: &Atom) -> bool {
        let (Some(x), Some(y)) = (arg(atom, 0), arg(atom, 1)) else {
            return false;
        };
        let expected = match self {
            Domain::Waiter => waiter_final(x),
            Domain::Chess => chess_final(x),
            Domain::Droplast => droplast(x),
            Domain::Encryption => decrypt(x, 2),
        };
        expected.as_ref() == Some(y)
    }
}

impl fmt::Display for Domain {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SpecError {
    #[error("unknown domain `{0}` (expected waiter, chess, droplast or encryption)")]
    UnknownDomain(String),
    #[error("size interval [{0},{1}] must satisfy 1 <= lo <= hi")]
    Interval(usize, usize),
}

impl FromStr for Domain {
    type Err = SpecError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Domain::ALL
            .into_iter()
            .find(|d| d.name() == s)
            .ok_or_else(|| SpecError::UnknownDomain(s.to_string()))
    }
}

fn arg(atom: &Atom, i: usize) -> Option<&GroundValue> {
    atom.args.get(i).and_then(Term::as_value)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DomainSpec {
    pub domain: Domain,
    pub lo: usize,
    pub hi: usize,
    pub seed: u64,
}

impl DomainSpec {
    pub fn new(domain: Domain, lo: usize, hi: usize, seed: u64) -> Result<Self, SpecError> {
        if lo < 1 || lo > hi {
            return Err(SpecError::Interval(lo, hi));
        }
        Ok(DomainSpec { domain, lo, hi, seed })
    }

    pub fn top_down(domain: Domain, seed: u64) -> Self {
        let (lo, hi) = domain.top_down_interval();
        DomainSpec { domain, lo, hi, seed }
    }

    pub fn bottom_up(domain: Domain, seed: u64) -> Self {
        let (lo, hi) = domain.bottom_up_interval();
        DomainSpec { domain, lo, hi, seed }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Polarity {
    Pos,
    Neg,
}

/// A deterministic example stream for one domain.
pub struct Generator {
    spec: DomainSpec,
    rng: ChaCha8Rng,
}

impl Generator {
    pub fn new(spec: DomainSpec) -> Self {
        Generator {
            spec,
            rng: ChaCha8Rng::seed_from_u64(spec.seed),
        }
    }

    pub fn example(&mut self, polarity: Polarity) -> Atom {
        let DomainSpec { lo, hi, .. } = self.spec;
        let rng = &mut self.rng;
        match self.spec.domain {
            Domain::Waiter => gen_waiter(rng, lo, hi, polarity),
            Domain::Chess => gen_chess(rng, lo, hi, polarity),
            Domain::Droplast => gen_droplast(rng, lo, hi, polarity),
            Domain::Encryption => gen_encryption(rng, lo, hi, polarity),
        }
    }

    pub fn examples(&mut self, n: usize, polarity: Polarity) -> Vec<Atom> {
        (0..n).map(|_| self.example(polarity)).collect()
    }
}

fn f(x: GroundValue, y: GroundValue) -> Atom {
    Atom::fact("f", vec![x, y])
}

fn sym(s: &str) -> GroundValue {
    GroundValue::sym(s)
}

fn int(n: usize) -> GroundValue {
    GroundValue::Int(n as i64)
}

// waiter: (position, [(cup, down|up, none|tea|coffee, preference)])

fn cup(i: usize, face: &str, drink: &str, pref: &str) -> GroundValue {
    GroundValue::tuple(vec![int(i), sym(face), sym(drink), sym(pref)])
}

pub fn gen_waiter(rng: &mut impl Rng, lo: usize, hi: usize, polarity: Polarity) -> Atom {
    let d = rng.gen_range(lo..=hi);
    let prefs: Vec<&str> = (0..d)
        .map(|_| if rng.gen_bool(0.5) { "tea" } else { "coffee" })
        .collect();
    let mut drinks = prefs.clone();
    if polarity == Polarity::Neg {
        let k = rng.gen_range(1..=d);
        let mut idx: Vec<usize> = (0..d).collect();
        idx.shuffle(rng);
        for &i in &idx[..k] {
            drinks[i] = if prefs[i] == "tea" { "coffee" } else { "tea" };
        }
    }
    let start = (0..d).map(|i| cup(i, "down", "none", prefs[i])).collect();
    let end = (0..d).map(|i| cup(i, "up", drinks[i], prefs[i])).collect();
    f(
        GroundValue::tuple(vec![int(0), GroundValue::list(start)]),
        GroundValue::tuple(vec![int(d), GroundValue::list(end)]),
    )
}

fn waiter_final(x: &GroundValue) -> Option<GroundValue> {
    let [_, cups] = x.as_tuple()? else { return None };
    let cups = cups.as_list()?;
    let mut out = Vec::new();
    for c in cups {
        let [i, _, _, pref] = c.as_tuple()? else { return None };
        out.push(GroundValue::tuple(vec![
            i.clone(),
            sym("up"),
            pref.clone(),
            pref.clone(),
        ]));
    }
    Some(GroundValue::tuple(vec![int(cups.len()), GroundValue::list(out)]))
}

// chess: [(type, id, file, rank)]

const PIECES: [&str; 6] = ["k", "q", "r", "b", "n", "p"];
const CHESS_RESAMPLES: usize = 1000;

fn piece(t: &str, id: usize, x: usize, y: usize) -> GroundValue {
    GroundValue::tuple(vec![sym(t), int(id), int(x), int(y)])
}

fn board(rng: &mut impl Rng, n: usize) -> Vec<(&'static str, usize, usize)> {
    let mut squares: Vec<(usize, usize)> = (1..=8).flat_map(|x| (1..=8).map(move |y| (x, y))).collect();
    squares.shuffle(rng);
    squares[..n]
        .iter()
        .map(|&(x, y)| (*PIECES.choose(rng).expect("non-empty"), x, y))
        .collect()
}

pub fn gen_chess(rng: &mut impl Rng, lo: usize, hi: usize, polarity: Polarity) -> Atom {
    loop {
        let n = rng.gen_range(lo..=hi.min(64));
        let pieces = board(rng, n);
        let input = GroundValue::list(
            pieces
                .iter()
                .enumerate()
                .map(|(i, &(t, x, y))| piece(t, i + 1, x, y))
                .collect(),
        );
        if polarity == Polarity::Pos {
            let output = chess_final(&input).expect("generated boards are well-formed");
            return f(input, output);
        }
        for _ in 0..CHESS_RESAMPLES {
            let moved = board(rng, n);
            let output = GroundValue::list(
                pieces
                    .iter()
                    .zip(&moved)
                    .enumerate()
                    .map(|(i, (&(t, _, _), &(_, x, y)))| piece(t, i + 1, x, y))
                    .collect(),
            );
            let atom = f(input.clone(), output);
            if !Domain::Chess.oracle(&atom) {
                return atom;
            }
        }
    }
}

fn chess_final(x: &GroundValue) -> Option<GroundValue> {
    let mut out = Vec::new();
    for p in x.as_list()? {
        let [t, id, file, rank] = p.as_tuple()? else {
            return None;
        };
        let rank = if t.as_symbol() == Some("p") {
            GroundValue::Int(8)
        } else {
            rank.clone()
        };
        out.push(GroundValue::tuple(vec![t.clone(), id.clone(), file.clone(), rank]));
    }
    Some(GroundValue::list(out))
}

// droplast: lists of letter lists

fn letters(rng: &mut impl Rng, lo: usize, hi: usize) -> Vec<GroundValue> {
    let k = rng.gen_range(lo..=hi);
    (0..k)
        .map(|_| {
            let c = (b'a' + rng.gen_range(0..26u8)) as char;
            sym(&c.to_string())
        })
        .collect()
}

pub fn gen_droplast(rng: &mut impl Rng, lo: usize, hi: usize, polarity: Polarity) -> Atom {
    loop {
        let i = rng.gen_range(lo..=hi);
        let subs: Vec<Vec<GroundValue>> = (0..i).map(|_| letters(rng, lo, hi)).collect();
        // corrupting needs 1 < j < k, so some sublist must have k >= 3
        if polarity == Polarity::Neg && subs.iter().all(|s| s.len() < 3) {
            continue;
        }
        let out = subs
            .iter()
            .map(|s| {
                let k = s.len();
                if polarity == Polarity::Pos || k < 3 {
                    return GroundValue::list(s[..k - 1].to_vec());
                }
                let j = rng.gen_range(2..k);
                let mut idx: Vec<usize> = (0..k - 1).collect();
                idx.shuffle(rng);
                let dropped = &idx[..j];
                GroundValue::list(
                    s.iter()
                        .enumerate()
                        .filter(|(n, _)| !dropped.contains(n))
                        .map(|(_, v)| v.clone())
                        .collect(),
                )
            })
            .collect();
        let input = GroundValue::list(subs.into_iter().map(GroundValue::list).collect());
        return f(input, GroundValue::list(out));
    }
}

fn droplast(x: &GroundValue) -> Option<GroundValue> {
    let mut out = Vec::new();
    for s in x.as_list()? {
        let (_, init) = s.as_list()?.split_last()?;
        out.push(GroundValue::list(init.to_vec()));
    }
    Some(GroundValue::list(out))
}

/// Drop the last element of every sublist, then the last sublist.
pub fn double_droplast(x: &GroundValue) -> Option<GroundValue> {
    let inner = droplast(x)?;
    let (_, init) = inner.as_list()?.split_last()?;
    Some(GroundValue::list(init.to_vec()))
}

// encryption: f(ciphertext, plaintext), ciphertext shifted two places

fn shift(v: &GroundValue, n: i64) -> Option<GroundValue> {
    let mut out = Vec::new();
    for c in v.as_list()? {
        let b = c.as_symbol()?.as_bytes();
        if b.len() != 1 || !b[0].is_ascii_lowercase() {
            return None;
        }
        let k = ((b[0] - b'a') as i64 + n).rem_euclid(26) as u8;
        out.push(sym(&((b'a' + k) as char).to_string()));
    }
    Some(GroundValue::list(out))
}

fn decrypt(x: &GroundValue, n: i64) -> Option<GroundValue> {
    shift(x, -n)
}

pub fn gen_encryption(rng: &mut impl Rng, lo: usize, hi: usize, polarity: Polarity) -> Atom {
    let plain = GroundValue::list(letters(rng, lo, hi));
    let n = match polarity {
        Polarity::Pos => 2,
        Polarity::Neg => loop {
            let n = rng.gen_range(0..25);
            if n != 2 {
                break n;
            }
        },
    };
    let cipher = shift(&plain, n).expect("letters shift");
    f(cipher, plain)
}

#[cfg(test)]
mod tests {
    use super::*;
    use milsynth_core::syntax::{parse_atom, print_atom};
    use proptest::prelude::*;

    fn atom(s: &str) -> Atom {
        parse_atom(s).unwrap()
    }

    #[test]
    fn hand_worked_examples() {
        assert!(Domain::Waiter.oracle(&atom("f((0,[(0,down,none,tea)]),(1,[(0,up,tea,tea)]))")));
        assert!(!Domain::Waiter.oracle(&atom("f((0,[(0,down,none,tea)]),(1,[(0,up,coffee,tea)]))")));
        assert!(Domain::Chess.oracle(&atom("f([(p,1,3,4)],[(p,1,3,8)])")));
        assert!(Domain::Chess.oracle(&atom("f([(k,1,3,4)],[(k,1,3,4)])")));
        assert!(Domain::Droplast.oracle(&atom("f([[a,l,i,c,e],[b,o,b]],[[a,l,i,c],[b,o]])")));
        assert!(Domain::Droplast.oracle(&atom("f([[a]],[[]])")));
        assert!(Domain::Encryption.oracle(&atom("f([c,d,e],[a,b,c])")));
        assert!(Domain::Encryption.oracle(&atom("f([b],[z])")));
        let a = atom("f([[a,l,i,c,e],[b,o,b],[c,a,r,o,l]],[[a,l,i,c],[b,o]])");
        assert_eq!(
            double_droplast(a.args[0].as_value().unwrap()).as_ref(),
            a.args[1].as_value()
        );
    }

    #[test]
    fn one_cup_waiter() {
        // with lo = hi = 1 only the preference varies
        let mut seen = std::collections::HashSet::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..20 {
            seen.insert(print_atom(&gen_waiter(&mut rng, 1, 1, Polarity::Pos)));
        }
        let want: std::collections::HashSet<String> = [
            "f((0,[(0,down,none,tea)]),(1,[(0,up,tea,tea)]))",
            "f((0,[(0,down,none,coffee)]),(1,[(0,up,coffee,coffee)]))",
        ]
        .into_iter()
        .map(String::from)
        .collect();
        assert_eq!(seen, want);
        let neg = gen_waiter(&mut rng, 1, 1, Polarity::Neg);
        let s = print_atom(&neg);
        assert!(
            s.contains("(0,up,coffee,tea)") || s.contains("(0,up,tea,coffee)"),
            "{s}"
        );
    }

    #[test]
    fn spec_rejects_bad_intervals() {
        assert_eq!(DomainSpec::new(Domain::Chess, 0, 3, 1), Err(SpecError::Interval(0, 3)));
        assert_eq!(DomainSpec::new(Domain::Chess, 4, 3, 1), Err(SpecError::Interval(4, 3)));
        assert!("poker".parse::<Domain>().is_err());
        assert_eq!("chess".parse::<Domain>(), Ok(Domain::Chess));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn generators_agree_with_oracles(seed in any::<u64>(), d in 0usize..4, small in any::<bool>()) {
            let domain = Domain::ALL[d];
            let spec = if small { DomainSpec::bottom_up(domain, seed) } else { DomainSpec::top_down(domain, seed) };
            let mut g = Generator::new(spec);
            for _ in 0..3 {
                let p = g.example(Polarity::Pos);
                let n = g.example(Polarity::Neg);
                prop_assert!(domain.oracle(&p), "{}", print_atom(&p));
                prop_assert!(!domain.oracle(&n), "{}", print_atom(&n));
                prop_assert_ne!(p, n);
            }
        }

        #[test]
        fn generators_are_deterministic(seed in any::<u64>(), d in 0usize..4) {
            let spec = DomainSpec::top_down(Domain::ALL[d], seed);
            let (mut a, mut b) = (Generator::new(spec), Generator::new(spec));
            prop_assert_eq!(a.examples(4, Polarity::Pos), b.examples(4, Polarity::Pos));
            prop_assert_eq!(a.examples(4, Polarity::Neg), b.examples(4, Polarity::Neg));
        }

        #[test]
        fn sizes_respect_the_interval(seed in any::<u64>(), lo in 1usize..6, extra in 0usize..4) {
            let hi = lo + extra;
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let w = gen_waiter(&mut rng, lo, hi, Polarity::Pos);
            let cups = w.args[0].as_value().unwrap().as_tuple().unwrap()[1].as_list().unwrap().len();
            prop_assert!((lo..=hi).contains(&cups));
            let e = gen_encryption(&mut rng, lo, hi, Polarity::Pos);
            let len = e.args[1].as_value().unwrap().as_list().unwrap().len();
            prop_assert!((lo..=hi).contains(&len));
        }
    }
}
