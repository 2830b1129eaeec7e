//! Cross-module properties over randomized inputs.

use std::path::Path;

use emachine_core::afield::{reconfigure, AfConfig, AssociativeField, AssociativeProgram, FieldBox};
use emachine_core::codes::{correct_decoding_check, similarity, Similarity, SymbolVector};
use emachine_core::epmm::{ensemble_runs, ensemble_step, meanfield_step, Ensemble, MeanField, StepMode};
use emachine_core::experiment::{run, ExperimentConfig};
use emachine_core::machines::{equivalent, CombinatorialMachine, Probe};
use emachine_core::pmm::{
    ghk_current, master_run, master_step, nernst, sample_path, state_at, ChannelParams, Omega, PiecewiseInput, PmmSpec,
    RateEntry, RateFn,
};
use emachine_core::rng::seeded;
use proptest::prelude::*;

fn sv(v: &[u32]) -> SymbolVector {
    SymbolVector::new(v.to_vec())
}

/// Every vector of length `dim` over symbols `1..=k`.
fn grid(dim: usize, k: u32) -> Vec<SymbolVector> {
    let mut out = vec![Vec::new()];
    for _ in 0..dim {
        out = out.into_iter().flat_map(|v: Vec<u32>| (1..=k).map(move |s| [v.clone(), vec![s]].concat())).collect();
    }
    out.into_iter().map(SymbolVector::new).collect()
}

fn const_spec(n: usize, rates: &[f64]) -> PmmSpec {
    let mut entries = Vec::new();
    let mut it = rates.iter();
    for from in 0..n {
        for to in 0..n {
            if from != to {
                entries.push(RateEntry { from, to, rate: RateFn::Const { value: *it.next().unwrap() } });
            }
        }
    }
    let values = (0..n).map(|i| vec![i as f64]).collect();
    PmmSpec::new(n, entries, Omega::Table { values }).unwrap()
}

fn arb_rates(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..5.0, n * (n - 1))
}

fn arb_prob(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..1.0, n).prop_map(|w| {
        let t: f64 = w.iter().sum();
        w.into_iter().map(|x| x / t).collect()
    })
}

fn arb_channel() -> impl Strategy<Value = ChannelParams> {
    (
        prop::collection::vec(0.0f64..1e-5, 1..4),
        prop_oneof![Just(1.0), Just(-1.0), Just(2.0)],
        270.0f64..320.0,
        0.001f64..0.5,
        0.001f64..0.5,
    )
        .prop_map(|(permeabilities, z, temperature, c_in, c_out)| ChannelParams { permeabilities, z, temperature, c_in, c_out })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn ratio_self_match_is_one(v in prop::collection::vec(0u32..6, 1..10)) {
        prop_assume!(v.iter().any(|&c| c != 0));
        let x = SymbolVector::new(v);
        prop_assert_eq!(similarity(&x, &x, Similarity::NonzeroMatchRatio).unwrap(), 1.0);
    }

    #[test]
    fn af0_simulates_its_table(table in prop::collection::vec(1u32..4, 9), seed in any::<u64>()) {
        let xs = grid(2, 3);
        prop_assert!(correct_decoding_check(&xs, Similarity::NonzeroMatchRatio).unwrap().passed());
        let rows: Vec<_> = xs.iter().cloned().zip(table.iter().map(|&y| sv(&[y]))).collect();
        let machine = CombinatorialMachine::new((1..4).map(|y| sv(&[y])), rows.clone()).unwrap();
        let prog = AssociativeProgram::from_rows(rows).unwrap();
        let field = AssociativeField::new(AfConfig::af0(Similarity::NonzeroMatchRatio, 0.5, seed), prog).unwrap();
        let verdict = equivalent(&mut FieldBox::new(field), &mut machine.clone(), &Probe::Exhaustive(xs)).unwrap();
        prop_assert!(verdict.passed());
    }

    #[test]
    fn unbiased_af1_matches_af0(
        extra in prop::collection::vec((0usize..4, 1u32..3), 0..6),
        inputs in prop::collection::vec(0usize..4, 1..40),
        tau in 1.5f64..100.0,
        seed in any::<u64>(),
    ) {
        // duplicate and conflicting rows make the seeded tie-breaking matter
        let xs = grid(2, 2);
        let mut rows: Vec<_> = xs.iter().map(|x| (x.clone(), sv(&[1]))).collect();
        rows.extend(extra.iter().map(|&(i, y)| (xs[i].clone(), sv(&[y]))));
        let prog = AssociativeProgram::from_rows(rows).unwrap();
        let mut af0 = AssociativeField::new(AfConfig::af0(Similarity::NonzeroMatchRatio, 0.5, seed), prog.clone()).unwrap();
        let mut af1 = AssociativeField::new(AfConfig::af1(Similarity::NonzeroMatchRatio, 0.5, seed, tau, 0.0, 0.0), prog).unwrap();
        for &i in &inputs {
            prop_assert_eq!(af0.respond(&xs[i]).unwrap(), af1.respond(&xs[i]).unwrap());
        }
    }

    #[test]
    fn reconfiguration_realizes_any_table(table in prop::collection::vec(1u32..4, 4), seed in any::<u64>()) {
        let xs = grid(2, 2);
        let ys: Vec<_> = (1..4).map(|y| sv(&[y])).collect();
        let prog = AssociativeProgram::full_product(&xs, &ys).unwrap();
        let machine = CombinatorialMachine::new(ys.clone(), xs.iter().cloned().zip(table.iter().map(|&y| sv(&[y])))).unwrap();
        let mut field = AssociativeField::new(AfConfig::af1(Similarity::NonzeroMatchRatio, 0.5, seed, 1e6, 0.0, 1.0), prog.clone()).unwrap();
        field.set_estate(reconfigure(&prog, &machine, 1e6).unwrap()).unwrap();
        let verdict = equivalent(&mut FieldBox::new(field), &mut machine.clone(), &Probe::Exhaustive(xs)).unwrap();
        prop_assert!(verdict.passed());
    }

    #[test]
    fn master_step_conserves_probability(rates in arb_rates(4), p in arb_prob(4), dt in 1e-4f64..0.006) {
        let spec = const_spec(4, &rates);
        let mut q = p;
        for _ in 0..50 {
            q = master_step(&q, &[], &spec, dt).unwrap();
            prop_assert!((q.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn ghk_is_continuous_at_zero(ch in arb_channel()) {
        for state in 0..ch.permeabilities.len() {
            let i0 = ghk_current(0.0, state, &ch);
            for v in [1e-9, -1e-9] {
                prop_assert!((ghk_current(v, state, &ch) - i0).abs() < 1e-6 * (i0 + 1.0).abs());
            }
        }
    }

    #[test]
    fn ghk_reverses_at_nernst(ch in arb_channel(), dv in 1e-3f64..0.05) {
        prop_assume!((ch.c_in / ch.c_out).ln().abs() > 1e-3);
        let e = nernst(&ch);
        for (state, &p) in ch.permeabilities.iter().enumerate() {
            if p > 0.0 {
                let (lo, hi) = (ghk_current(e - dv, state, &ch), ghk_current(e + dv, state, &ch));
                prop_assert!(lo != 0.0 && hi != 0.0);
                prop_assert!(lo.signum() != hi.signum(), "state {state}: {lo} at E-dv, {hi} at E+dv");
            }
        }
    }

    #[test]
    fn ensemble_steps_conserve_molecules(
        rates in arb_rates(3),
        n in 1u64..5000,
        exact in any::<bool>(),
        seed in any::<u64>(),
    ) {
        let spec = const_spec(3, &rates);
        let mode = if exact && n <= 1000 { StepMode::Exact } else { StepMode::TauLeap };
        let mut ens = Ensemble::all_in(spec.clone(), n, 0).unwrap();
        let mut mf = MeanField { e: vec![1.0, 0.0, 0.0] };
        let mut rng = seeded(seed);
        for _ in 0..40 {
            ensemble_step(&mut ens, &[], 0.01, mode, &mut rng).unwrap();
            prop_assert_eq!(ens.occupations().iter().sum::<u64>(), n);
            mf = meanfield_step(&mf, &[], &spec, 0.01).unwrap();
            prop_assert!((mf.e.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }
}

fn band(count: usize, runs: usize, p: f64) -> bool {
    let sigma = (p * (1.0 - p) / runs as f64).sqrt();
    (count as f64 / runs as f64 - p).abs() <= 3.0 * sigma + 1e-12
}

#[test]
fn single_molecule_ensemble_matches_sample_paths() {
    let spec = const_spec(3, &[1.0, 0.5, 0.3, 2.0, 0.0, 1.5]);
    let input = PiecewiseInput::constant(Vec::new());
    let probes = [0.3, 0.8, 1.5, 2.5, 4.0];
    let dt = 0.001;
    let master = master_run(&spec, &input, &[1.0, 0.0, 0.0], 4.0, dt, 1).unwrap();
    let p_at = |t: f64, s: usize| master[(t / dt).round() as usize].1[s];
    let runs = 10_000;
    let ens = Ensemble::all_in(spec.clone(), 1, 0).unwrap();
    let leaps = ensemble_runs(&ens, &input, 0.01, &probes, runs, StepMode::Exact, 11).unwrap();
    let paths: Vec<_> = (0..runs as u64).map(|r| sample_path(&spec, &input, 0, 4.0, 1000 + r).unwrap()).collect();
    for (j, &t) in probes.iter().enumerate() {
        for s in 0..3 {
            let p = p_at(t, s);
            let in_ensemble = leaps.iter().filter(|run| run[j][s] == 1).count();
            let on_path = paths.iter().filter(|path| state_at(path, t) == s).count();
            assert!(band(in_ensemble, runs, p), "ensemble t={t} s={s}: {in_ensemble}/{runs} vs {p}");
            assert!(band(on_path, runs, p), "paths t={t} s={s}: {on_path}/{runs} vs {p}");
        }
    }
}

#[test]
fn duplicate_rows_set_output_frequencies() {
    let a = sv(&[1, 2]);
    let rows = vec![(a.clone(), sv(&[1])), (a.clone(), sv(&[2])), (a.clone(), sv(&[1])), (sv(&[2, 1]), sv(&[3]))];
    let prog = AssociativeProgram::from_rows(rows).unwrap();
    let mut field = AssociativeField::new(AfConfig::af0(Similarity::NonzeroMatchRatio, 0.5, 5), prog).unwrap();
    let runs = 6000;
    let ones = (0..runs).filter(|_| field.respond(&a).unwrap() == sv(&[1])).count();
    assert!(band(ones, runs, 2.0 / 3.0), "{ones}/{runs}");
}

#[test]
fn shipped_config_traces_are_rectangular() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut csvs = 0;
    for entry in std::fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let Ok(cfg) = ExperimentConfig::from_file(&path) else { continue };
        let out = run(&cfg).unwrap();
        for art in out.artifacts.iter().filter(|a| a.path.extension().is_some_and(|e| e == "csv")) {
            let mut rd = csv::Reader::from_reader(art.bytes.as_slice());
            let width = rd.headers().unwrap().len();
            let mut rows = 0;
            for rec in rd.records() {
                assert_eq!(rec.unwrap().len(), width, "{}", art.path.display());
                rows += 1;
            }
            assert!(rows > 0, "{} is empty", art.path.display());
            csvs += 1;
        }
    }
    assert!(csvs >= 8);
}
