use std::sync::Arc;
use std::time::Duration;

use milsynth_core::ibk::{self, STD_IBK};
use milsynth_core::metarule;
use milsynth_core::syntax::{parse_atom, Selection};
use milsynth_core::*;

fn atoms(src: &[&str]) -> Vec<Atom> {
    src.iter().map(|s| parse_atom(s).unwrap()).collect()
}

fn task(
    pack: Pack,
    prims: &[(&str, usize)],
    pos: &[&str],
    neg: &[&str],
    ibk_names: &[&str],
    mrs: Vec<Arc<Metarule>>,
) -> LearningTask {
    let mut reg = CompiledRegistry::with_pack(pack);
    if !prims.is_empty() {
        reg.set_prims(prims.iter().map(|(n, a)| PredSym::new(n, *a)).collect())
            .unwrap();
    }
    let lib = ibk::select(&Selection::Names(ibk_names.iter().map(|s| s.to_string()).collect())).unwrap();
    LearningTask::new(atoms(pos), atoms(neg), Arc::new(reg), lib, mrs).unwrap()
}

fn cfg(max_clauses: usize) -> EngineConfig {
    EngineConfig {
        max_clauses,
        wall_timeout: Duration::from_secs(60),
        ..Default::default()
    }
}

fn assert_consistent(t: &LearningTask, p: &Program) {
    for a in &t.pos {
        assert!(eval(p, a, &t.registry, &t.ibk, 1_000_000).holds, "{p} misses {a:?}");
    }
    for a in &t.neg {
        assert!(!eval(p, a, &t.registry, &t.ibk, 1_000_000).holds, "{p} covers {a:?}");
    }
}

fn learned(t: &LearningTask, max_clauses: usize) -> Program {
    let l = learn(t, &cfg(max_clauses));
    assert_eq!(l.outcome, SearchOutcome::Found);
    let p = l.program.unwrap();
    assert_consistent(t, &p);
    p
}

#[test]
fn droplast_maps_an_invented_predicate() {
    let t = task(
        Pack::List,
        &[("head", 2), ("tail", 2), ("empty", 1), ("reverse", 2)],
        &["f([[a,l,i,c,e],[b,o,b]],[[a,l,i,c],[b,o]])", "f([[x,y,z,w]],[[x,y,z]])"],
        &["f([[a,l,i,c,e],[b,o,b]],[[a,i,c],[b,o]])", "f([[x,y,z,w]],[[x,z]])"],
        &STD_IBK,
        standard_library(),
    );
    let p = learned(&t, 5);
    assert_eq!(p.len(), 3);
    assert_eq!(p.subs[0].symbols[1].name.as_ref(), "map");
}

#[test]
fn chess_pawns_advance_until_rank_eight() {
    let t = task(
        Pack::Chess,
        &[],
        &[
            "f([(p,1,3,4),(k,2,1,1)],[(p,1,3,8),(k,2,1,1)])",
            "f([(q,1,5,5),(p,2,2,7),(p,3,4,2)],[(q,1,5,5),(p,2,2,8),(p,3,4,8)])",
        ],
        &[
            "f([(p,1,3,4),(k,2,1,1)],[(p,1,3,5),(k,2,1,1)])",
            "f([(q,1,5,5),(p,2,2,7)],[(q,1,5,8),(p,2,2,8)])",
        ],
        &STD_IBK,
        standard_library(),
    );
    let p = learned(&t, 5);
    assert!(p.len() <= 3, "{p}");
    let unseen = parse_atom("f([(p,7,1,1),(b,8,2,2)],[(p,7,1,8),(b,8,2,2)])").unwrap();
    assert!(eval(&p, &unseen, &t.registry, &t.ibk, 1_000_000).holds);
}

#[test]
fn waiter_serves_every_cup() {
    let t = task(
        Pack::Waiter,
        &[],
        &[
            "f((0,[(0,down,none,tea),(1,down,none,coffee)]),(2,[(0,up,tea,tea),(1,up,coffee,coffee)]))",
            "f((0,[(0,down,none,coffee)]),(1,[(0,up,coffee,coffee)]))",
        ],
        &[
            "f((0,[(0,down,none,tea),(1,down,none,coffee)]),(2,[(0,up,tea,tea),(1,up,tea,coffee)]))",
            "f((0,[(0,down,none,coffee)]),(1,[(0,up,tea,coffee)]))",
        ],
        &STD_IBK,
        standard_library(),
    );
    let p = learned(&t, 5);
    let unseen = parse_atom(
        "f((0,[(0,down,none,tea),(1,down,none,tea),(2,down,none,coffee)]),(3,[(0,up,tea,tea),(1,up,tea,tea),(2,up,coffee,coffee)]))",
    )
    .unwrap();
    assert!(eval(&p, &unseen, &t.registry, &t.ibk, 1_000_000).holds, "{p}");
}

#[test]
fn double_droplast_reuses_an_invented_predicate() {
    let t = task(
        Pack::List,
        &[("tail", 2), ("concat", 3)],
        &[
            "f([[a,l,i,c,e],[b,o,b],[c,a,r,o,l]],[[a,l,i,c],[b,o]])",
            "f([[i,n,d,u,c,t,i,v,e],[l,o,g,i,c],[p,r,o,g,r,a,m,m,i,n,g]],[[i,n,d,u,c,t,i,v],[l,o,g,i]])",
        ],
        &[
            "f([[a,b,c],[d,e]],[])",
            "f([[a,b,c],[d,e]],[[a,b,c]])",
            "f([[a,b,c],[d,e]],[[b,c]])",
            "f([[a,b,c],[d,e]],[[a,b],[d]])",
        ],
        &["map", "reduceback"],
        metarule::select(&["curry1".into(), "chain".into()]).unwrap(),
    );
    let p = learned(&t, 6);
    let as_arg = p
        .subs
        .iter()
        .flat_map(|s| s.project().body)
        .flat_map(|a| a.args)
        .filter_map(|t| t.as_pred().cloned());
    let as_arg: Vec<PredSym> = as_arg.collect();
    let as_lit: Vec<PredSym> = p
        .subs
        .iter()
        .flat_map(|s| s.project().body)
        .filter_map(|a| a.pred_sym().cloned())
        .collect();
    assert!(
        as_arg.iter().any(|q| q.name.starts_with("f_") && as_lit.contains(q)),
        "{p}"
    );
}

#[test]
fn bottom_up_tiny_chess() {
    let fc_rules: Vec<Arc<Metarule>> = standard_library()
        .into_iter()
        .filter(|m| m.is_forward_chained())
        .collect();
    let t = task(
        Pack::Chess,
        &[],
        &[
            "f([(p,1,3,4),(k,2,1,1)],[(p,1,3,8),(k,2,1,1)])",
            "f([(p,1,2,2)],[(p,1,2,8)])",
        ],
        &[
            "f([(p,1,3,4),(k,2,1,1)],[(p,1,3,5),(k,2,1,1)])",
            "f([(p,1,2,2)],[(p,1,2,2)])",
        ],
        &STD_IBK,
        fc_rules,
    );
    let l = learn_fc(&t, &cfg(3)).unwrap();
    assert_eq!(l.outcome, SearchOutcome::Found);
    let p = l.program.unwrap();
    assert!(p.len() <= 3);
    assert_consistent(&t, &p);
    assert!(!l.stats.depths.is_empty());
}

#[test]
fn engines_agree_on_small_tasks() {
    let fc_rules = || -> Vec<Arc<Metarule>> {
        standard_library()
            .into_iter()
            .filter(|m| m.is_forward_chained())
            .collect()
    };
    let tasks = [
        task(
            Pack::List,
            &[("succ", 2)],
            &["f(1,3)", "f(5,7)"],
            &["f(1,2)"],
            &[],
            fc_rules(),
        ),
        task(
            Pack::List,
            &[("tail", 2), ("reverse", 2)],
            &["f([a,b,c],[b,a])"],
            &["f([a,b,c],[c,b])"],
            &[],
            fc_rules(),
        ),
        task(
            Pack::Encryption,
            &[],
            &["f([a,b],[b,c])"],
            &["f([a],[a])"],
            &STD_IBK,
            fc_rules(),
        ),
        task(
            Pack::List,
            &[("tail", 2), ("empty", 1), ("hold", 2)],
            &["f([a,b,c],[])"],
            &["f([a,b],[b])"],
            &[],
            fc_rules(),
        ),
    ];
    for t in &tasks {
        let mi = learn(t, &cfg(4));
        let fc = learn_fc(t, &cfg(4)).unwrap();
        for p in [mi.program, fc.program] {
            assert_consistent(t, &p.expect("both engines find a program"));
        }
    }
}

#[test]
fn task_file_end_to_end() {
    let src = "
        % +1 Caesar shift
        task(shift).
        pos(f([a,b,c],[b,c,d])).
        pos(f([y],[z])).
        neg(f([a],[c])).
        metarules([curry1, chain]).
        interpreted([map]).
    ";
    let t = parse_task(src)
        .unwrap()
        .build(CompiledRegistry::with_pack(Pack::Encryption))
        .unwrap();
    let p = learned(&t, 4);
    assert_eq!(
        p.to_string(),
        "f(A,B):-map(A,B,f_1).\nf_1(A,B):-char_to_int(A,C),f_2(C,B).\nf_2(A,B):-succ(A,C),int_to_char(C,B).\n"
    );
}

#[test]
fn left_recursive_and_duplicate_clauses_do_not_blow_up() {
    // tailrec may instantiate as f(A,B):-f(A,C),f(C,B) and may be chosen
    // twice with the same symbols; neither may multiply the search
    let t = task(
        Pack::List,
        &[("succ", 2)],
        &["f(1,3)", "f(2,3)"],
        &["f(3,1)", "f(2,2)"],
        &[],
        metarule::select(&["tailrec".into(), "identity".into()]).unwrap(),
    );
    let l = learn(&t, &cfg(2));
    assert!(l.stats.wall_time < Duration::from_secs(5), "{:?}", l.stats);
    // f(3,1) climbs forever under the only candidate, so it is never refuted
    assert_eq!(l.outcome, SearchOutcome::Exhausted);
}

#[test]
fn depth_cut_proofs_are_undecided() {
    let t = task(
        Pack::List,
        &[("succ", 2)],
        &["f(1,3)"],
        &[],
        &[],
        metarule::select(&["tailrec".into(), "identity".into()]).unwrap(),
    );
    let p = learned(&t, 2);
    let v = eval(&p, &parse_atom("f(3,1)").unwrap(), &t.registry, &t.ibk, 1_000_000);
    assert!(!v.holds && v.exhausted, "{v:?}");
    let v = eval(&p, &parse_atom("f(1,2)").unwrap(), &t.registry, &t.ibk, 1_000_000);
    assert!(v.holds);
}
