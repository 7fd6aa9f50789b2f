use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use sage_core::chemclass::{classify_amine, AmineType, Restriction};
use sage_core::fingerprint::{ecfp6, sphere_exclusion_centers, tanimoto};
use sage_core::genops::{diversify_batch, mutate, MutationConfig};
use sage_core::molgraph::{canonical_smiles, parse_smiles, random_smiles, Element, Molecule};
use sage_core::ngramgen::{self, tokenize, Token};
use sage_core::qspr::{filter_corpus, metrics, quintile_stratified_folds};
use sage_core::scoring::{default_scalers, mpo_from_raw, scale, Direction, Property, PropertyVector, ScalerSpec};

const ELEMENTS: [(&str, usize); 8] = [
    ("C", 4),
    ("C", 4),
    ("C", 4),
    ("N", 3),
    ("N", 3),
    ("O", 2),
    ("S", 2),
    ("Cl", 1),
];

/// Writes a spanning tree plus ring-closure bonds as SMILES. Every bond is
/// single, so any choice within the valence caps parses.
fn tree_smiles(atoms: &[usize], parents: &[usize], rings: &[(usize, usize)]) -> String {
    let n = atoms.len();
    let mut children = vec![Vec::new(); n];
    for (i, &p) in parents.iter().enumerate() {
        children[p].push(i + 1);
    }
    let mut closures = vec![Vec::new(); n];
    for (k, &(a, b)) in rings.iter().enumerate() {
        closures[a].push(k + 1);
        closures[b].push(k + 1);
    }
    fn emit(i: usize, atoms: &[usize], children: &[Vec<usize>], closures: &[Vec<usize>], out: &mut String) {
        out.push_str(ELEMENTS[atoms[i]].0);
        for d in &closures[i] {
            out.push_str(&d.to_string());
        }
        let kids = &children[i];
        for (j, &c) in kids.iter().enumerate() {
            if j + 1 < kids.len() {
                out.push('(');
                emit(c, atoms, children, closures, out);
                out.push(')');
            } else {
                emit(c, atoms, children, closures, out);
            }
        }
    }
    let mut out = String::new();
    emit(0, atoms, &children, &closures, &mut out);
    out
}

/// Random connected molecule of 1–16 heavy atoms with up to two rings.
fn molecule() -> impl Strategy<Value = Molecule> {
    (1usize..=16)
        .prop_flat_map(|n| {
            (
                prop::collection::vec(0..ELEMENTS.len(), n),
                prop::collection::vec(any::<prop::sample::Index>(), n - 1),
                prop::collection::vec((any::<prop::sample::Index>(), any::<prop::sample::Index>()), 0..=2),
            )
        })
        .prop_map(|(mut atoms, parent_picks, ring_picks)| {
            let n = atoms.len();
            atoms[0] = 0;
            let mut used = vec![0usize; n];
            let mut parents = Vec::new();
            for i in 1..n {
                let open: Vec<usize> = (0..i).filter(|&j| used[j] < ELEMENTS[atoms[j]].1).collect();
                let p = if open.is_empty() {
                    // only reachable when every earlier atom is saturated; fall back to carbon chains
                    atoms[i] = 0;
                    atoms[i - 1] = 0;
                    i - 1
                } else {
                    open[parent_picks[i - 1].index(open.len())]
                };
                used[p] += 1;
                used[i] += 1;
                parents.push(p);
            }
            let mut bonded: BTreeSet<(usize, usize)> = parents.iter().enumerate().map(|(i, &p)| (p, i + 1)).collect();
            let mut rings = Vec::new();
            for (a, b) in ring_picks {
                let free: Vec<usize> = (0..n).filter(|&j| used[j] < ELEMENTS[atoms[j]].1).collect();
                if free.len() < 2 {
                    break;
                }
                let (x, y) = (free[a.index(free.len())], free[b.index(free.len())]);
                let key = (x.min(y), x.max(y));
                if x == y || bonded.contains(&key) {
                    continue;
                }
                bonded.insert(key);
                used[x] += 1;
                used[y] += 1;
                rings.push(key);
            }
            let s = tree_smiles(&atoms, &parents, &rings);
            parse_smiles(&s).unwrap_or_else(|e| panic!("{s}: {e}"))
        })
}

fn rewrite(mol: &Molecule, seed: u64) -> Molecule {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = random_smiles(mol, &mut rng);
    parse_smiles(&s).unwrap_or_else(|e| panic!("rewritten {s}: {e}"))
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 200, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn canonical_form_is_a_fixed_point(mol in molecule()) {
        let c = canonical_smiles(&mol);
        let again = parse_smiles(&c).unwrap();
        prop_assert_eq!(canonical_smiles(&again), c);
    }

    #[test]
    fn canonical_form_ignores_atom_order(mol in molecule(), seed in any::<u64>()) {
        prop_assert_eq!(canonical_smiles(&rewrite(&mol, seed)), canonical_smiles(&mol));
    }

    #[test]
    fn hydrogen_count_matches_formula(mol in molecule()) {
        let h: u32 = (0..mol.atom_count()).map(|i| mol.total_h(i) as u32).sum();
        prop_assert_eq!(mol.molecular_formula().count(Element::H), h);
    }

    #[test]
    fn classification_and_fingerprint_ignore_atom_order(mol in molecule(), seed in any::<u64>()) {
        let other = rewrite(&mol, seed);
        prop_assert_eq!(classify_amine(&other), classify_amine(&mol));
        prop_assert_eq!(ecfp6(&other), ecfp6(&mol));
    }

    #[test]
    fn tanimoto_is_a_bounded_symmetric_similarity(a in molecule(), b in molecule()) {
        let (fa, fb) = (ecfp6(&a), ecfp6(&b));
        let ab = tanimoto(&fa, &fb).unwrap();
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert_eq!(ab, tanimoto(&fb, &fa).unwrap());
        prop_assert_eq!(tanimoto(&fa, &fa).unwrap(), 1.0);
    }

    #[test]
    fn mutation_output_is_valid_and_seed_determined(mol in molecule(), seed in any::<u64>()) {
        let config = MutationConfig { require_amine: false, ..MutationConfig::default() };
        let run = |s| mutate(&mol, &mut ChaCha8Rng::seed_from_u64(s), &config).map(|m| canonical_smiles(&m));
        let first = run(seed);
        prop_assert_eq!(&first, &run(seed));
        if let Ok(s) = first {
            let child = parse_smiles(&s).unwrap();
            prop_assert!(child.heavy_atom_count() <= config.max_heavy_atoms);
        }
    }

    #[test]
    fn scaler_is_clamped_and_monotone(lo in -50.0f64..50.0, width in 0.01f64..100.0, x in -200.0f64..200.0, dx in 0.0f64..50.0, inc in any::<bool>()) {
        let dir = if inc { Direction::Increasing } else { Direction::Decreasing };
        let spec = ScalerSpec::new(lo, lo + width, dir).unwrap();
        let (a, b) = (scale(x, &spec), scale(x + dx, &spec));
        prop_assert!((0.0..=1.0).contains(&a));
        if inc { prop_assert!(b >= a) } else { prop_assert!(b <= a) }
        prop_assert_eq!(scale(lo - dx, &spec), scale(lo, &spec));
        prop_assert_eq!(scale(lo + width + dx, &spec), scale(lo + width, &spec));
    }

    #[test]
    fn mpo_is_bounded_and_penalty_keeps_order(
        xs in prop::collection::vec(-500.0f64..500.0, 8),
        ys in prop::collection::vec(-500.0f64..500.0, 8),
    ) {
        let scalers = default_scalers();
        let vector = |v: &[f64]| {
            let mut pv = PropertyVector::default();
            for (p, x) in Property::ALL.iter().zip(v) {
                pv.set(*p, *x);
            }
            pv
        };
        let (a, b) = (vector(&xs), vector(&ys));
        let score = |v: &PropertyVector, r| mpo_from_raw(v, AmineType::Tertiary, r, &scalers).unwrap().value;
        let (a0, b0) = (score(&a, Restriction::None), score(&b, Restriction::None));
        let (a1, b1) = (score(&a, Restriction::PrimarySecondary), score(&b, Restriction::PrimarySecondary));
        prop_assert!((0.0..=1.0).contains(&a0));
        prop_assert_eq!(a1, a0 * 0.1);
        prop_assert_eq!(a0.partial_cmp(&b0), a1.partial_cmp(&b1));
    }

    #[test]
    fn folds_partition_rows_evenly(values in prop::collection::vec(-10.0f64..10.0, 5..120), seed in any::<u64>()) {
        let folds = quintile_stratified_folds(&values, 5, seed).unwrap();
        prop_assert_eq!(folds.len(), values.len());
        let mut sizes = [0usize; 5];
        for f in folds {
            prop_assert!(f < 5);
            sizes[f] += 1;
        }
        prop_assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 1);
    }

    #[test]
    fn training_mean_has_zero_r2(values in prop::collection::vec(-10.0f64..10.0, 2..50)) {
        prop_assume!(values.iter().any(|v| *v != values[0]));
        let mean = values.iter().sum::<f64>() / values.len() as f64;
        let (r2, _) = metrics(&values, &vec![mean; values.len()]).unwrap();
        prop_assert!(r2.abs() < 1e-12);
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 40, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn corpus_filter_is_order_independent(mols in prop::collection::vec(molecule(), 1..40), targets in prop::collection::vec(molecule(), 1..3), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        let keep = |ms: &[Molecule]| -> BTreeSet<String> {
            filter_corpus(ms, 300.0, &targets, 0.323).iter().map(canonical_smiles).collect()
        };
        let mut shuffled = mols.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let kept = keep(&mols);
        prop_assert_eq!(&kept, &keep(&shuffled));
        let target_keys: BTreeSet<String> = targets.iter().map(canonical_smiles).collect();
        prop_assert!(kept.is_disjoint(&target_keys));
    }

    #[test]
    fn sphere_exclusion_grows_with_threshold(mols in prop::collection::vec(molecule(), 1..30), t in 0.05f64..0.95, dt in 0.0f64..0.3) {
        let fps: Vec<_> = mols.iter().map(ecfp6).collect();
        let refs: Vec<_> = fps.iter().collect();
        let low = sphere_exclusion_centers(&refs, t);
        let high = sphere_exclusion_centers(&refs, (t + dt).min(1.0));
        prop_assert!(high >= low, "{} centers at {} but {} at {}", low, t, high, t + dt);
    }

    #[test]
    fn ngram_distributions_are_normalized(corpus in prop::collection::vec(molecule(), 1..20), picks in prop::collection::vec(any::<prop::sample::Index>(), 1..10)) {
        let smiles: Vec<String> = corpus.iter().map(canonical_smiles).collect();
        let model = ngramgen::train(&smiles, 4, 0.01).unwrap();
        for pick in picks {
            let s = &smiles[pick.index(smiles.len())];
            let symbols: Vec<String> = tokenize(s)
                .unwrap()
                .into_iter()
                .filter_map(|t| match t {
                    Token::Sym(x) => Some(x),
                    _ => None,
                })
                .collect();
            let context = &symbols[..pick.index(symbols.len() + 1)];
            let total: f64 = model.distribution(context).iter().sum();
            prop_assert!((total - 1.0).abs() < 1e-9, "sum {} for {:?}", total, context);
        }
    }

    #[test]
    fn samples_have_positive_probability(corpus in prop::collection::vec(molecule(), 1..20), seed in any::<u64>()) {
        let smiles: Vec<String> = corpus.iter().map(canonical_smiles).collect();
        let model = ngramgen::train(&smiles, 4, 0.0).unwrap();
        for s in ngramgen::sample(&model, 20, &mut ChaCha8Rng::seed_from_u64(seed), 60) {
            let symbols: Vec<String> = tokenize(&s)
                .unwrap()
                .into_iter()
                .filter_map(|t| match t {
                    Token::Sym(x) => Some(x),
                    _ => None,
                })
                .collect();
            for k in 0..symbols.len() {
                prop_assert!(model.prob(&symbols[..k], Some(&symbols[k])) > 0.0, "{} at token {}", s, k);
            }
            // samples cut at max_len never drew EOS
            if symbols.len() < 60 {
                prop_assert!(model.prob(&symbols, None) > 0.0, "{} ends with an impossible EOS", s);
            }
        }
    }

    #[test]
    fn fine_tuning_raises_buffer_likelihood(corpus in prop::collection::vec(molecule(), 1..15), target in molecule(), l1 in 0.0f64..5.0, dl in 0.0f64..5.0) {
        let smiles: Vec<String> = corpus.iter().map(canonical_smiles).collect();
        let model = ngramgen::train(&smiles, 4, 0.01).unwrap();
        let buf = vec![(canonical_smiles(&target), 1.0)];
        let lp = |l: f64| ngramgen::fine_tune(&model, &buf, l).unwrap().log_prob(&buf[0].0).unwrap();
        prop_assert!(lp(l1 + dl) >= lp(l1) - 1e-9);
    }

    #[test]
    fn batch_diversification_is_seed_determined(pool in prop::collection::vec(molecule(), 1..6), seed in any::<u64>()) {
        let config = MutationConfig { require_amine: false, ..MutationConfig::default() };
        let run = || {
            let (mols, stats) = diversify_batch(&pool, 16, &mut ChaCha8Rng::seed_from_u64(seed), &config);
            (mols.iter().map(canonical_smiles).collect::<Vec<_>>(), stats.attempted, stats.succeeded)
        };
        let (a, b) = (run(), run());
        prop_assert_eq!(&a, &b);
        prop_assert!(a.0.len() <= 16);
    }
}
