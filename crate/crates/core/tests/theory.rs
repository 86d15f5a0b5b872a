use ufsmt::cnf::{tseitin, AtomDef};
use ufsmt::euf::EufTheory;
use ufsmt::harness::gen_eq_diamond;
use ufsmt::preprocess::preprocess;
use ufsmt::smtlib::parse_script;
use ufsmt::terms::{TermId, TermStore};

fn eq(st: &TermStore, a: &str, b: &str) -> TermId {
    let t = |n: &str| st.find(ufsmt::terms::Kind::App(st.symbol_by_name(n).unwrap()), &[]).unwrap();
    let (x, y) = (t(a), t(b));
    st.find(ufsmt::terms::Kind::Eq, &[x.min(y), x.max(y)]).unwrap()
}

#[test]
fn left_branch_assignment_gives_one_lemma() {
    for n in 1..=6 {
        let script = parse_script(gen_eq_diamond(n).as_bytes()).unwrap();
        let asserts = script.assertions();
        let mut st = script.store;
        let cnf = tseitin(&mut st, &asserts);
        let mut th = EufTheory::new(&st, &cnf);
        let var = |t: TermId| cnf.atoms.var_of(AtomDef::Eq(t)).unwrap();
        let mut lemmas = Vec::new();
        let first = var(eq(&st, "x1", &format!("x{}", n + 1)));
        if let Err(l) = th.assert_atom(first, false).unwrap() {
            lemmas.push(l);
        }
        for i in 1..=n {
            for (a, b) in [(format!("x{i}"), format!("z{i}")), (format!("z{i}"), format!("x{}", i + 1))] {
                if let Err(l) = th.assert_atom(var(eq(&st, &a, &b)), true).unwrap() {
                    lemmas.push(l);
                }
            }
        }
        assert_eq!(lemmas.len(), 1, "n={n}");
        // The chain and the final disequality.
        assert_eq!(lemmas[0].lits.len(), 2 * n + 1);
    }
}

#[test]
fn diamond_three_preprocesses_to_false() {
    let script = parse_script(gen_eq_diamond(3).as_bytes()).unwrap();
    let asserts = script.assertions();
    let mut st = script.store;
    let r = preprocess(&mut st, &asserts, true);
    let mut units = r.added_units.clone();
    units.sort();
    let mut want = vec![eq(&st, "x1", "x2"), eq(&st, "x2", "x3"), eq(&st, "x3", "x4")];
    want.sort();
    assert_eq!(units, want);
    assert_eq!(r.assertions, vec![st.mk_false()]);
}
