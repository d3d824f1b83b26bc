mod common;

use std::collections::{BTreeMap, BTreeSet};

use accmine_core::curate::{self, Part};
use accmine_core::dataset::{self, DatasetRecord, GenerationRecord, TARGET_MARKER};
use accmine_core::extract::PragmaLoopPair;
use accmine_core::mcu::{Mcu, McuOrigin, instantiate};
use accmine_core::metrics::{
    self, EvalRecord, Generated, clause_jaccard, edit_distance, levenshtein_similarity, macro_prf,
};
use accmine_core::pragma::{
    ComplexityBin, clause_set, complexity_bin, complexity_score, directive_type, normalize_pragma,
    parse_pragma,
};
use accmine_core::syntax::Lang;
use accmine_core::taxonomy::{self, category_for};
use proptest::prelude::*;

const DIRECTIVE_WORDS: &[&str] = &["parallel", "kernels", "serial", "loop", "data", "enter", "exit", "wait", "update"];
const BARE_CLAUSES: &[&str] = &["gang", "vector", "worker", "seq", "independent", "auto", "nohost"];
const ARG_CLAUSES: &[&str] = &["copyin", "copyout", "copy", "present", "create", "private", "collapse", "reduction", "async", "num_gangs"];

fn spaces() -> impl Strategy<Value = String> {
    prop::sample::select(vec!["", " ", "  ", "\t"]).prop_map(str::to_string)
}

fn ident() -> impl Strategy<Value = String> {
    "[a-z][a-z0-9_]{0,5}"
}

/// Argument text with random padding around punctuation.
fn args() -> impl Strategy<Value = String> {
    prop_oneof![
        (ident(), spaces(), spaces()).prop_map(|(v, a, b)| format!("{a}{v}{b}")),
        (ident(), ident(), spaces(), spaces()).prop_map(|(v, n, a, b)| format!("{v}[0{a}:{b}{n}]")),
        (prop::sample::select(vec!["+", "*", "max"]), ident(), spaces()).prop_map(|(op, v, a)| format!("{op}{a}:{a}{v}")),
        (1u32..8).prop_map(|k| k.to_string()),
        (ident(), ident(), spaces()).prop_map(|(x, y, a)| format!("{x}{a},{a}{y}")),
    ]
}

fn clause() -> impl Strategy<Value = String> {
    prop_oneof![
        prop::sample::select(BARE_CLAUSES.to_vec()).prop_map(str::to_string),
        (prop::sample::select(ARG_CLAUSES.to_vec()), args(), spaces()).prop_map(|(n, a, s)| format!("{n}{s}({a})")),
    ]
}

fn pragma_text() -> impl Strategy<Value = String> {
    (
        prop::collection::vec(prop::sample::select(DIRECTIVE_WORDS.to_vec()), 1..3),
        prop::collection::vec(clause(), 0..6),
        spaces(),
    )
        .prop_map(|(d, c, pad)| {
            let mut s = format!("#pragma{pad} acc {}", d.join(" "));
            for cl in c {
                s.push(' ');
                s.push_str(&pad);
                s.push_str(&cl);
            }
            s
        })
}

/// Same pragma split into head and clause list, so clauses can be shuffled.
fn pragma_parts() -> impl Strategy<Value = (String, Vec<String>)> {
    (
        prop::collection::vec(prop::sample::select(DIRECTIVE_WORDS.to_vec()), 1..3),
        prop::collection::vec(clause(), 0..6),
    )
        .prop_map(|(d, c)| (format!("#pragma acc {}", d.join(" ")), c))
}

fn join(head: &str, clauses: &[String]) -> String {
    let mut s = head.to_string();
    for c in clauses {
        s.push(' ');
        s.push_str(c);
    }
    s
}

/// Full-matrix edit distance, kept independent of the library's two-row version.
fn oracle_distance(a: &str, b: &str) -> usize {
    let a: Vec<char> = a.chars().collect();
    let b: Vec<char> = b.chars().collect();
    let mut d = vec![vec![0usize; b.len() + 1]; a.len() + 1];
    for (i, row) in d.iter_mut().enumerate() {
        row[0] = i;
    }
    for (j, cell) in d[0].iter_mut().enumerate() {
        *cell = j;
    }
    for i in 1..=a.len() {
        for j in 1..=b.len() {
            let cost = if a[i - 1] == b[j - 1] { 0 } else { 1 };
            d[i][j] = (d[i - 1][j] + 1).min(d[i][j - 1] + 1).min(d[i - 1][j - 1] + cost);
        }
    }
    d[a.len()][b.len()]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn normalize_is_idempotent(s in "[ #a-z()\\[\\]:,+*0-9\t]{0,60}") {
        let once = normalize_pragma(&s);
        prop_assert_eq!(normalize_pragma(&once), once);
    }

    #[test]
    fn normalize_is_idempotent_on_pragmas(s in pragma_text()) {
        let once = normalize_pragma(&s);
        prop_assert_eq!(normalize_pragma(&once), once);
    }

    #[test]
    fn parse_round_trips(s in pragma_text()) {
        let p = parse_pragma(&s).unwrap();
        prop_assert!(p.canonical.starts_with("#pragma acc "));
        prop_assert!(!p.directives.is_empty());
        prop_assert_eq!(parse_pragma(&p.canonical).unwrap(), p);
    }

    #[test]
    fn directive_type_ignores_clauses(
        (head, clauses) in pragma_parts(),
        extra in clause(),
        seed in any::<u64>(),
    ) {
        let base = directive_type(&parse_pragma(&head).unwrap());
        let mut shuffled = clauses.clone();
        shuffle(&mut shuffled, seed);
        prop_assert_eq!(directive_type(&parse_pragma(&join(&head, &clauses)).unwrap()), base);
        prop_assert_eq!(directive_type(&parse_pragma(&join(&head, &shuffled)).unwrap()), base);
        let mut more = clauses.clone();
        more.push(extra);
        prop_assert_eq!(directive_type(&parse_pragma(&join(&head, &more)).unwrap()), base);
    }

    #[test]
    fn complexity_counts_clauses(
        (head, clauses) in pragma_parts(),
        extra in clause(),
        seed in any::<u64>(),
    ) {
        let p = parse_pragma(&join(&head, &clauses)).unwrap();
        let mut shuffled = clauses.clone();
        shuffle(&mut shuffled, seed);
        prop_assert_eq!(complexity_score(&parse_pragma(&join(&head, &shuffled)).unwrap()), complexity_score(&p));
        let mut more = clauses.clone();
        more.push(extra);
        prop_assert_eq!(complexity_score(&parse_pragma(&join(&head, &more)).unwrap()), complexity_score(&p) + 1);
    }

    #[test]
    fn levenshtein_matches_oracle(a in "[a-c ]{0,64}", b in "[a-c ]{0,64}") {
        prop_assert_eq!(edit_distance(&a, &b), oracle_distance(&a, &b));
    }

    #[test]
    fn levenshtein_properties(a in "\\PC{0,20}", b in "\\PC{0,20}", c in "\\PC{0,20}") {
        let s = levenshtein_similarity(&a, &b);
        prop_assert_eq!(s, levenshtein_similarity(&b, &a));
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert_eq!(s == 1.0, a == b);
        prop_assert!(edit_distance(&a, &c) <= edit_distance(&a, &b) + edit_distance(&b, &c));
    }

    #[test]
    fn jaccard_symmetric_and_order_blind(
        (h1, c1) in pragma_parts(),
        (h2, c2) in pragma_parts(),
        seed in any::<u64>(),
    ) {
        let a = parse_pragma(&join(&h1, &c1)).unwrap();
        let b = parse_pragma(&join(&h2, &c2)).unwrap();
        let j = clause_jaccard(&a, &b);
        prop_assert!((0.0..=1.0).contains(&j));
        prop_assert_eq!(j, clause_jaccard(&b, &a));
        let mut s1 = c1.clone();
        shuffle(&mut s1, seed);
        let a2 = parse_pragma(&join(&h1, &s1)).unwrap();
        prop_assert_eq!(clause_set(&a2), clause_set(&a));
        prop_assert_eq!(clause_jaccard(&a2, &b), j);
    }

    #[test]
    fn exact_match_implies_agreement(s in pragma_text(), t in pragma_text()) {
        let r = parse_pragma(&s).unwrap();
        for g in [parse_pragma(&s).unwrap(), parse_pragma(&t).unwrap()] {
            let rec = EvalRecord::new("x", r.clone(), Generated::Parsed { pragma: g });
            if rec.exact_match {
                prop_assert!(rec.directive_match);
                prop_assert_eq!(rec.jaccard, 1.0);
                prop_assert_eq!(rec.levenshtein_sim, 1.0);
            }
        }
    }

    #[test]
    fn macro_f1_invariant_under_relabeling(
        labels in prop::collection::vec((0u8..4, 0u8..5), 1..40),
        perm_seed in any::<u64>(),
    ) {
        let mut perm: Vec<u8> = (0..5).collect();
        shuffle(&mut perm, perm_seed);
        let relabeled: Vec<(u8, u8)> = labels.iter().map(|&(g, p)| (perm[g as usize], perm[p as usize])).collect();
        let a = macro_prf(&labels).unwrap();
        let b = macro_prf(&relabeled).unwrap();
        prop_assert!((a.macro_f1 - b.macro_f1).abs() < 1e-12);
        prop_assert!((a.macro_precision - b.macro_precision).abs() < 1e-12);
        prop_assert!((a.macro_recall - b.macro_recall).abs() < 1e-12);
        let gold: BTreeSet<u8> = labels.iter().map(|l| l.0).collect();
        let mean_f1: f64 = a.per_class.iter().filter(|c| gold.iter().any(|g| g.to_string() == c.class)).map(|c| c.f1).sum::<f64>() / gold.len() as f64;
        prop_assert!((a.macro_f1 - mean_f1).abs() < 1e-12);
    }

    #[test]
    fn removing_a_record_moves_means_boundedly(
        texts in prop::collection::vec((pragma_text(), prop::option::of(pragma_text())), 2..20),
        drop in any::<prop::sample::Index>(),
    ) {
        let records: Vec<EvalRecord> = texts.iter().enumerate().map(|(i, (r, g))| {
            let generated = match g {
                Some(g) => Generated::Parsed { pragma: parse_pragma(g).unwrap() },
                None => Generated::ExtractionFailed,
            };
            EvalRecord::new(format!("{i:03}"), parse_pragma(r).unwrap(), generated)
        }).collect();
        let n = records.len();
        let full = metrics::aggregate(records.clone(), vec![]).unwrap();
        let mut fewer = records;
        fewer.remove(drop.index(n));
        let part = metrics::aggregate(fewer, vec![]).unwrap();
        let bound = 1.0 / (n as f64 - 1.0) + 1e-12;
        for (x, y) in [
            (full.exact_match_rate, part.exact_match_rate),
            (full.mean_levenshtein, part.mean_levenshtein),
            (full.directive_accuracy, part.directive_accuracy),
            (full.mean_jaccard, part.mean_jaccard),
            (full.extraction_failure_rate, part.extraction_failure_rate),
        ] {
            prop_assert!((x - y).abs() <= bound);
            prop_assert!((0.0..=1.0).contains(&x));
        }
    }

    #[test]
    fn taxonomy_identities_hold(
        texts in prop::collection::vec((pragma_text(), prop::option::of(pragma_text())), 0..30),
    ) {
        let records: Vec<EvalRecord> = texts.iter().enumerate().map(|(i, (r, g))| {
            let generated = match g {
                Some(g) => Generated::Parsed { pragma: parse_pragma(g).unwrap() },
                None => Generated::ExtractionFailed,
            };
            EvalRecord::new(format!("{i}"), parse_pragma(r).unwrap(), generated)
        }).collect();
        let t = taxonomy::taxonomy_report(&records);
        prop_assert!(t.identities_hold());
        prop_assert_eq!(t.non_exact, records.iter().filter(|r| !r.exact_match).count());
        for r in records.iter().filter(|r| !r.exact_match) {
            prop_assert_eq!(taxonomy::classify(r).unwrap(), category_for(r.directive_match, r.jaccard));
        }
    }

    #[test]
    fn split_invariants(sizes in prop::collection::vec(0usize..40, 4), ratio in 0.05f64..0.95, seed in any::<u64>()) {
        let pairs = synthetic_pairs(&sizes);
        prop_assume!(!pairs.is_empty());
        let a = curate::split(&pairs, ratio, seed).unwrap();
        let b = curate::split(&pairs, ratio, seed).unwrap();
        prop_assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        let n = pairs.len();
        prop_assert_eq!(a.assignments.len(), n);
        prop_assert_eq!(a.count(Part::Train), (ratio * n as f64).round() as usize);
        prop_assert_eq!(a.count(Part::Train) + a.count(Part::Test), n);
        for (bin, s) in &a.per_bin {
            let exact = ratio * s.size as f64;
            prop_assert!(s.train == exact.floor() as usize || s.train == exact.ceil() as usize, "{:?} {:?}", bin, s);
        }
    }

    #[test]
    fn filtering_is_order_independent(seed in any::<u64>()) {
        let mut pairs = filter_corpus();
        let kept: BTreeSet<String> = curate::filter_pairs(pairs.clone()).kept.into_iter().map(|p| p.id).collect();
        shuffle(&mut pairs, seed);
        let out = curate::filter_pairs(pairs.clone());
        let kept2: BTreeSet<String> = out.kept.iter().map(|p| p.id.clone()).collect();
        prop_assert_eq!(kept2, kept);
        // kept and rejected partition the input, in input order
        let order: Vec<&str> = pairs.iter().map(|p| p.id.as_str()).filter(|id| out.kept.iter().any(|k| k.id == *id)).collect();
        let kept_order: Vec<&str> = out.kept.iter().map(|p| p.id.as_str()).collect();
        prop_assert_eq!(order, kept_order);
        prop_assert_eq!(out.kept.len() + out.rejected.len(), pairs.len());
    }

    #[test]
    fn ids_are_conserved_through_curation(seed in any::<u64>(), ratio in 0.1f64..0.9) {
        let mut pairs = filter_corpus();
        pairs.extend(filter_corpus().into_iter().take(3).map(|mut p| { p.id.push('d'); p }));
        shuffle(&mut pairs, seed);
        let all: BTreeSet<String> = pairs.iter().map(|p| p.id.clone()).collect();
        let filtered = curate::filter_pairs(pairs);
        let rejected: BTreeSet<String> = filtered.rejected.iter().map(|r| r.pair.id.clone()).collect();
        let dedup = curate::deduplicate(filtered.kept);
        let dropped: BTreeSet<String> = dedup.dropped.iter().map(|d| d.id.clone()).collect();
        let split = curate::split(&dedup.kept, ratio, seed).unwrap();
        let assigned: BTreeSet<String> = split.assignments.keys().cloned().collect();
        prop_assert!(rejected.is_disjoint(&dropped) && rejected.is_disjoint(&assigned) && dropped.is_disjoint(&assigned));
        let union: BTreeSet<String> = rejected.union(&dropped).chain(assigned.iter()).cloned().collect();
        prop_assert_eq!(union, all);
    }

    #[test]
    fn jsonl_round_trip_and_prompt_consistency(
        items in prop::collection::vec((ident(), "[ -~\n]{1,80}", pragma_text()), 1..10),
    ) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("d.jsonl");
        let recs: Vec<DatasetRecord> = items.iter().enumerate()
            .map(|(i, (id, loop_text, p))| DatasetRecord::training(format!("{id}{i}"), "sys", loop_text, p))
            .collect();
        dataset::write_dataset(&path, &recs).unwrap();
        let first = std::fs::read(&path).unwrap();
        prop_assert_eq!(dataset::read_dataset(&path).unwrap(), recs.clone());
        dataset::write_dataset(&path, &recs).unwrap();
        prop_assert_eq!(std::fs::read(&path).unwrap(), first);
        for (rec, (_, loop_text, _)) in recs.iter().zip(&items) {
            prop_assert_eq!(rec.without_assistant(), DatasetRecord::prompt(rec.id.clone(), "sys", loop_text));
        }
    }

    #[test]
    fn generation_extraction_is_a_fixpoint(noise in "[ -~\n]{0,60}", p in pragma_text()) {
        let raw = format!("{noise}\n{p}\n");
        let g = GenerationRecord::from_output("x", raw);
        prop_assert_eq!(g.extraction_failed, g.extracted_pragma.is_none());
        if let Some(e) = g.extracted_pragma {
            prop_assert_eq!(dataset::extract_generation(&e), Some(e.clone()));
        }
    }

    #[test]
    fn instantiate_only_touches_marker_line(
        before in "[ -~\n]{0,80}",
        after in "[ -~\n]{0,80}",
        indent in "[ \t]{0,6}",
        pragma in pragma_text(),
    ) {
        prop_assume!(!before.contains(TARGET_MARKER) && !after.contains(TARGET_MARKER));
        let before = format!("{before}\n");
        let after = format!("\n{after}");
        let src = format!("{before}{indent}{TARGET_MARKER}{after}");
        let m = Mcu::new("m", src, Lang::C, McuOrigin::Imported).unwrap();
        let with = instantiate(&m, Some(&pragma)).unwrap();
        prop_assert!(with.starts_with(&before));
        prop_assert!(with.ends_with(&after));
        prop_assert_eq!(&with[before.len()..with.len() - after.len()], format!("{indent}{pragma}"));
        let without = instantiate(&m, None).unwrap();
        prop_assert_eq!(without, format!("{before}{}", &after[1..]));
    }
}

#[test]
fn complexity_bins_are_monotone_and_cover_all() {
    let bins: Vec<ComplexityBin> = (0..=20).map(complexity_bin).collect();
    assert!(bins.windows(2).all(|w| w[0] <= w[1]));
    let seen: BTreeSet<ComplexityBin> = bins.into_iter().collect();
    assert_eq!(seen.len(), ComplexityBin::ALL.len());
}

fn shuffle<T>(v: &mut [T], seed: u64) {
    use rand::SeedableRng;
    use rand::seq::SliceRandom;
    v.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
}

/// `sizes[k]` distinct pairs whose pragma lands in complexity bin `k`.
fn synthetic_pairs(sizes: &[usize]) -> Vec<PragmaLoopPair> {
    let clauses_for_bin = [0usize, 3, 7, 12];
    let mut out = Vec::new();
    for (bin, &n) in sizes.iter().enumerate() {
        let clauses: Vec<String> = (0..clauses_for_bin[bin]).map(|k| format!("copyin(v{k})")).collect();
        let pragma = join("#pragma acc loop", &clauses);
        let p = parse_pragma(&pragma).unwrap();
        for i in 0..n {
            let loop_text = format!("for(i=0;i<n;i++) a{bin}_{i}[i]=0;");
            out.push(PragmaLoopPair {
                id: accmine_core::extract::pair_id(&p.canonical, &loop_text),
                pragma: p.clone(),
                loop_body: format!("a{bin}_{i}[i]=0;"),
                loop_text,
                file: "synthetic.c".into(),
                lang: Lang::C,
                pragma_line: 1,
                loop_line: 2,
                loop_span: (0, 0),
                stacked: false,
            });
        }
    }
    out
}

fn filter_corpus() -> Vec<PragmaLoopPair> {
    let loops = [
        "for(i=0;i<n;i++);",
        "for(i=0;i<n;i++){}",
        "for(;;){ work(); }",
        "for(i=0;i<n;i++){ if (a[i]) break; }",
        "for(i=0;i<n;i++){ if (a[i]) continue; b[i]=1; }",
        "for(i=0;i<n;i++){ if (a[i]) goto out; }",
        "for(i=0;i<n;i++){ if (a[i]) return; }",
        "for(i=0;i<n;i++){ switch(a[i]){ case 1: b[i]=2; break; } }",
        "for(i=0;i<n;i++){ b[i]=a[i]; }",
        "for(i=0;i<n;i++){ b[i]=a[i]; }",
        "for(i=0;i<n;i++) c[i]=a[i]+b[i];",
        "for(i=0;i<n;i++){ for(j=0;j<m;j++){ if (x) break; } }",
    ];
    let mut by_id = BTreeMap::new();
    for (k, l) in loops.iter().enumerate() {
        let p = common::pair(&format!("#pragma acc loop collapse({})", k + 1), l);
        by_id.insert(p.id.clone(), p);
    }
    by_id.into_values().collect()
}
