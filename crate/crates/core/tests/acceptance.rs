//! Acceptance checks on synthetic data with known truths. Runs as a plain
//! binary so the PASS/FAIL lines are always printed.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rayon::prelude::*;
use seqdml::cli::{run, Command, InputConfig, LearnerPreset, PolicyConfig, RunConfig, REPORT_FILE};
use seqdml::data::{policy_targets, Groups, PanelDataset, Policy};
use seqdml::estimands::{gate_minus_ate, EstimandKind, Z95};
use seqdml::learners::make_fold_plan;
use seqdml::nuisance::{estimate_nuisances, NuisanceEstimates, NuisanceSettings};
use seqdml::pipeline::{estimate_effects, EstimationSettings, EstimatorKind};
use seqdml::scores::{dynamic_score, ipw_score};
use seqdml::simulator::{DgpConfig, EnumerableDgpConfig, SimSample, StructuralDgp};
use seqdml::trimming::{is_imbalanced, standardized_difference, union_trim, TrimReport, TrimRule};

const N: usize = 20_000;
const SEEDS: u64 = 100;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn parametric(method: EstimatorKind, seed: u64) -> EstimationSettings {
    EstimationSettings {
        method,
        folds: 5,
        seed,
        nuisance: NuisanceSettings::parametric().with_seed(seed),
        trim: TrimRule::Off,
        refit_after_trim: false,
    }
}

fn pol(name: &str) -> Policy {
    EnumerableDgpConfig::calibrated_policies()
        .into_iter()
        .find(|p| p.name == name)
        .unwrap()
}

fn exact(dgp: &EnumerableDgpConfig, name: &str) -> f64 {
    dgp.oracle_apo_exact(&pol(name)).unwrap().unwrap()
}

#[derive(Clone, Copy, Default)]
struct Est {
    value: f64,
    se: f64,
}

impl Est {
    fn z(&self, truth: f64) -> f64 {
        (self.value - truth).abs() / self.se
    }
}

/// Per-seed estimates on the calibrated discrete model.
struct SeedRun {
    bhl22: [Est; 3],
    bjz24: [Est; 3],
    static_seq: Est,
}

struct SharedRuns {
    runs: Vec<SeedRun>,
    dml_time: Duration,
}

// index 0: APO(dyn), 1: APO(seq), 2: ATE(dyn - base)
fn dml_estimates(ds: &PanelDataset<f64>, method: EstimatorKind, seed: u64) -> [Est; 3] {
    let policies = vec![pol("dyn"), pol("seq"), pol("base")];
    let e = estimate_effects(ds, &policies, &parametric(method, seed)).unwrap();
    let get = |k, p: &str, v: Option<&str>| {
        let r = e.effect(k, p, v, None).unwrap();
        Est {
            value: r.estimate,
            se: r.se().unwrap(),
        }
    };
    [
        get(EstimandKind::Apo, "dyn", None),
        get(EstimandKind::Apo, "seq", None),
        get(EstimandKind::Ate, "dyn", Some("base")),
    ]
}

fn shared_runs() -> &'static SharedRuns {
    static CELL: OnceLock<SharedRuns> = OnceLock::new();
    CELL.get_or_init(|| {
        let dgp = EnumerableDgpConfig::calibrated(N);
        let samples: Vec<SimSample> = (0..SEEDS)
            .into_par_iter()
            .map(|s| dgp.sample(N, 1000 + s).unwrap())
            .collect();
        let t0 = Instant::now();
        let dml: Vec<([Est; 3], [Est; 3])> = samples
            .par_iter()
            .enumerate()
            .map(|(s, smp)| {
                let seed = 1000 + s as u64;
                (
                    dml_estimates(&smp.data, EstimatorKind::Bhl22, seed),
                    dml_estimates(&smp.data, EstimatorKind::Bjz24, seed),
                )
            })
            .collect();
        let dml_time = t0.elapsed();
        let stat: Vec<Est> = samples
            .par_iter()
            .enumerate()
            .map(|(s, smp)| {
                let e = estimate_effects(
                    &smp.data,
                    &[pol("seq"), pol("base")],
                    &parametric(EstimatorKind::StaticConf, 1000 + s as u64),
                )
                .unwrap();
                let r = e.effect(EstimandKind::Apo, "seq", None, None).unwrap();
                Est {
                    value: r.estimate,
                    se: r.se().unwrap(),
                }
            })
            .collect();
        SharedRuns {
            runs: dml
                .into_iter()
                .zip(stat)
                .map(|((a, b), c)| SeedRun {
                    bhl22: a,
                    bjz24: b,
                    static_seq: c,
                })
                .collect(),
            dml_time,
        }
    })
}

fn criterion_1() -> Verdict {
    let dgp = EnumerableDgpConfig::calibrated(N);
    let truth = exact(&dgp, "dyn");
    let sh = shared_runs();
    let hits =
        |f: &dyn Fn(&SeedRun) -> Est| sh.runs.iter().filter(|r| f(r).z(truth) <= 2.0).count();
    let a = hits(&|r| r.bhl22[0]);
    let b = hits(&|r| r.bjz24[0]);
    let mins = sh.dml_time.as_secs_f64() / 60.0;
    verdict(
        a >= 93 && b >= 93 && mins <= 10.0,
        format!("APO(dyn) within 2 SE of exact truth {truth:.4}: bhl22 {a}/100, bjz24 {b}/100; {mins:.2} min"),
    )
}

fn with_follow(ds: &PanelDataset<f64>, p: &Policy) -> PanelDataset<f64> {
    let mut parts = ds.to_parts();
    for i in 0..ds.n() {
        parts.d1[i] = p.d1_target;
        parts.d2[i] = p.second_period(parts.x1[[i, 0]] == 1.0);
    }
    PanelDataset::new(parts).unwrap()
}

fn criterion_2() -> Verdict {
    let dgp = EnumerableDgpConfig::calibrated(N);
    let s = dgp.sample(2000, 2).unwrap();
    let mut worst: f64 = 0.0;
    for p in EnumerableDgpConfig::calibrated_policies() {
        let ds = with_follow(&s.data, &p);
        let n = ds.n();
        let mu: Vec<f64> = (0..n).map(|i| 0.3 * i as f64 % 7.0 - 2.0).collect();
        let nu: Vec<f64> = (0..n).map(|i| (i as f64).sin() * 5.0).collect();
        let nuis =
            NuisanceEstimates::oracle(p.clone(), vec![1.0; n], vec![1.0; n], mu, nu).unwrap();
        let sc = dynamic_score(&ds, &p, &nuis).unwrap();
        for (t, y) in sc.theta.iter().zip(ds.y()) {
            worst = worst.max((t - y).abs());
        }
    }
    verdict(worst <= 1e-12, format!("max |score - Y| = {worst:.2e}"))
}

#[derive(Clone, Copy, PartialEq)]
enum Dir {
    P1,
    P2,
    Mu,
    Nu,
}

fn perturbed(
    base: &NuisanceEstimates<f64>,
    ds: &PanelDataset<f64>,
    atoms: &[usize],
    dir: Dir,
    r: f64,
) -> NuisanceEstimates<f64> {
    let mut n = base.clone();
    for i in 0..ds.n() {
        let (a, v1, w) = (atoms[i] as f64, ds.x1()[[i, 0]], ds.x1()[[i, 1]]);
        match dir {
            Dir::P1 => n.p1_hat[i] += r * 0.05 * (1.0 + a) / 4.0,
            Dir::P2 => n.p2_hat[i] += r * 0.05 * (1.0 + v1),
            Dir::Mu => n.mu_hat[i] += r * (0.5 + v1 - 0.3 * w),
            Dir::Nu => n.nu_hat[i] += r * (0.5 + 0.25 * a),
        }
    }
    n
}

// Finite-difference derivative of the mean score and its Monte-Carlo SE.
fn derivative(
    ds: &PanelDataset<f64>,
    base: &NuisanceEstimates<f64>,
    atoms: &[usize],
    dir: Dir,
    ipw: bool,
) -> (f64, f64) {
    let r = 1e-4;
    let score = |n: &NuisanceEstimates<f64>| {
        if ipw {
            ipw_score(ds, &n.policy, n).unwrap().theta
        } else {
            dynamic_score(ds, &n.policy, n).unwrap().theta
        }
    };
    let up = score(&perturbed(base, ds, atoms, dir, r));
    let down = score(&perturbed(base, ds, atoms, dir, -r));
    let d: Vec<f64> = up
        .iter()
        .zip(&down)
        .map(|(a, b)| (a - b) / (2.0 * r))
        .collect();
    let n = d.len() as f64;
    let m = d.iter().sum::<f64>() / n;
    let sd = (d.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    (m, sd / n.sqrt())
}

// Direction of each perturbation as a function of (atom, v1, w), matching `perturbed`.
fn direction(dir: Dir, a: usize, v1: f64, w: f64) -> f64 {
    let a = a as f64;
    match dir {
        Dir::P1 => 0.05 * (1.0 + a) / 4.0,
        Dir::P2 => 0.05 * (1.0 + v1),
        Dir::Mu => 0.5 + v1 - 0.3 * w,
        Dir::Nu => 0.5 + 0.25 * a,
    }
}

// Population mean of the score at the true nuisances shifted by r * direction,
// summed over the finite support.
fn expected_score(dgp: &EnumerableDgpConfig, p: &Policy, dir: Dir, r: f64, ipw: bool) -> f64 {
    let g1 = p.d1_target;
    let mut total = 0.0;
    for a in 0..dgp.atom_probs.len() {
        let shift = |d: Dir, s: usize| {
            if d == dir {
                r * direction(dir, a, (s & 1) as f64, (s >> 1) as f64)
            } else {
                0.0
            }
        };
        let nu = dgp.nu(a, p) + shift(Dir::Nu, 0);
        let p1 = dgp.p_d1[a][g1] + shift(Dir::P1, 0);
        let mut inner = 0.0;
        for s in 0..4 {
            let g2 = p.second_period(s & 1 == 1);
            let ptrue2 = dgp.p_d2[a][g1][s][g2];
            let y = dgp.y_mean[a][g1][s][g2];
            let p2 = ptrue2 + shift(Dir::P2, s);
            let mu = y + shift(Dir::Mu, s);
            inner += dgp.p_x1[a][g1][s]
                * if ipw {
                    ptrue2 * y / p2
                } else {
                    mu - nu + ptrue2 * (y - mu) / p2
                };
        }
        let unit = if ipw {
            dgp.p_d1[a][g1] * inner / p1
        } else {
            nu + dgp.p_d1[a][g1] * inner / p1
        };
        total += dgp.atom_probs[a] * unit;
    }
    total
}

fn criterion_3() -> Verdict {
    let dgp = EnumerableDgpConfig::calibrated(N);
    let s = dgp.sample(N, 3).unwrap();
    let p = pol("dyn");
    let base = dgp.true_nuisances(&s, &p).unwrap();
    let atoms = s.atom.clone().unwrap();
    let r = 1e-4;
    let pop = |dir, ipw| {
        (expected_score(&dgp, &p, dir, r, ipw) - expected_score(&dgp, &p, dir, -r, ipw)) / (2.0 * r)
    };
    let mut ok = true;
    let mut parts = Vec::new();
    let mut sample = Vec::new();
    for (name, dir) in [
        ("p1", Dir::P1),
        ("p2", Dir::P2),
        ("mu", Dir::Mu),
        ("nu", Dir::Nu),
    ] {
        let (d, se) = derivative(&s.data, &base, &atoms, dir, false);
        let dp = pop(dir, false);
        ok &= dp.abs() <= 2.0 * se;
        parts.push(format!("{name} {:.1e}", dp / se));
        sample.push(format!("{name} {:.2}", d / se));
    }
    let (d, se) = derivative(&s.data, &base, &atoms, Dir::P1, true);
    let dp = pop(Dir::P1, true);
    let ipw_fails = dp.abs() > 3.0 * se;
    parts.push(format!("ipw-p1 {:.1}", dp / se));
    sample.push(format!("ipw-p1 {:.1}", d / se));
    verdict(
        ok && ipw_fails,
        format!(
            "derivative / SE: {}; single-sample {}",
            parts.join(", "),
            sample.join(", ")
        ),
    )
}

fn criterion_4() -> Verdict {
    let dgp = EnumerableDgpConfig::calibrated(N);
    let s = dgp.sample(N, 4).unwrap();
    let p = pol("dyn");
    let truth = exact(&dgp, "dyn");
    let good = dgp.true_nuisances(&s, &p).unwrap();
    let atoms = s.atom.clone().unwrap();
    let ds = &s.data;
    let corrupt = |bad_p1: bool, bad_nu: bool, bad_p2: bool, bad_mu: bool| {
        let mut n = good.clone();
        for i in 0..ds.n() {
            let v1 = ds.x1()[[i, 0]];
            if bad_p1 {
                n.p1_hat[i] *= if atoms[i].is_multiple_of(2) { 0.7 } else { 0.9 };
            }
            if bad_nu {
                n.nu_hat[i] += 0.5;
            }
            if bad_p2 {
                n.p2_hat[i] *= 0.75;
            }
            if bad_mu {
                n.mu_hat[i] += 0.5 * (1.0 + v1);
            }
        }
        let sc = dynamic_score(ds, &p, &n).unwrap();
        let a = seqdml::estimands::apo(&sc).unwrap();
        (a.estimate - truth) / a.se().unwrap()
    };
    let patterns = [
        ("p1+p2", corrupt(true, false, true, false)),
        ("p1+mu", corrupt(true, false, false, true)),
        ("nu+p2", corrupt(false, true, true, false)),
        ("nu+mu", corrupt(false, true, false, true)),
    ];
    let broken = corrupt(true, true, false, false);
    let ok = patterns.iter().all(|(_, z)| z.abs() <= 2.0) && broken.abs() > 3.0;
    let txt: Vec<String> = patterns
        .iter()
        .map(|(n, z)| format!("{n} {z:.2}"))
        .collect();
    verdict(
        ok,
        format!("bias / SE: {}; p1+nu {broken:.1}", txt.join(", ")),
    )
}

fn criterion_5() -> Verdict {
    let dgp = EnumerableDgpConfig::calibrated(N);
    let truth = exact(&dgp, "seq");
    let runs = &shared_runs().runs;
    let st = runs.iter().filter(|r| r.static_seq.z(truth) > 3.0).count();
    let a = runs.iter().filter(|r| r.bhl22[1].z(truth) < 2.0).count();
    let b = runs.iter().filter(|r| r.bjz24[1].z(truth) < 2.0).count();
    let joint = runs
        .iter()
        .filter(|r| {
            r.static_seq.z(truth) > 3.0 && r.bhl22[1].z(truth) < 2.0 && r.bjz24[1].z(truth) < 2.0
        })
        .count();
    let bias = runs.iter().map(|r| r.static_seq.value - truth).sum::<f64>() / runs.len() as f64;
    verdict(
        st >= 90 && a >= 90 && b >= 90,
        format!(
            "APO(seq) truth {truth:.4}: static |bias| > 3 SE in {st}/100 (mean bias {bias:.3}); bhl22 < 2 SE {a}/100, bjz24 {b}/100; all three {joint}/100"
        ),
    )
}

fn criterion_6() -> Verdict {
    let dgp = EnumerableDgpConfig::calibrated(N);
    let policies = vec![pol("dyn"), pol("base")];
    // weighted group effects against the overall effect
    let s = dgp.sample(N, 6).unwrap();
    let e = estimate_effects(&s.data, &policies, &parametric(EstimatorKind::Bjz24, 6)).unwrap();
    let ate = e
        .effect(EstimandKind::Ate, "dyn", Some("base"), None)
        .unwrap();
    let mut wsum = 0.0;
    for g in ["g0", "g1"] {
        let r = e
            .effect(EstimandKind::Gate, "dyn", Some("base"), Some(g))
            .unwrap();
        wsum += r.n_effective as f64 * r.estimate;
    }
    let rel = (wsum / ate.n_effective as f64 - ate.estimate).abs() / ate.estimate.abs();
    // one group: the contrast with the overall effect has zero variance
    let one = Groups::from_labels(&vec!["all"; s.data.n()]);
    let gm = gate_minus_ate(&e.scores[0], &e.scores[1], &one, "all").unwrap();
    let zero_var = gm.se() == Some(0.0);
    // covariance identity over replications
    let n = N;
    let reps: Vec<(f64, f64, f64, f64, f64)> = (0..200u64)
        .into_par_iter()
        .map(|k| {
            let s = dgp.sample(n, 60_000 + k).unwrap();
            let e =
                estimate_effects(&s.data, &policies, &parametric(EstimatorKind::Bjz24, k)).unwrap();
            let g0 = e
                .effect(EstimandKind::Gate, "dyn", Some("base"), Some("g0"))
                .unwrap();
            let g1 = e
                .effect(EstimandKind::Gate, "dyn", Some("base"), Some("g1"))
                .unwrap();
            let a = e
                .effect(EstimandKind::Ate, "dyn", Some("base"), None)
                .unwrap();
            (
                g0.estimate,
                g1.estimate,
                a.estimate,
                g0.n_effective as f64 / n as f64,
                g1.n_effective as f64 / n as f64,
            )
        })
        .collect();
    let m = reps.len() as f64;
    let mean = |f: &dyn Fn(&(f64, f64, f64, f64, f64)) -> f64| reps.iter().map(f).sum::<f64>() / m;
    let ma = mean(&|r| r.2);
    let mut worst: f64 = 0.0;
    let mut txt = Vec::new();
    for (gi, name) in [(0usize, "g0"), (1, "g1")] {
        let g = |r: &(f64, f64, f64, f64, f64)| if gi == 0 { r.0 } else { r.1 };
        let share = mean(&|r| if gi == 0 { r.3 } else { r.4 });
        let mg = mean(&g);
        let cov = reps.iter().map(|r| (g(r) - mg) * (r.2 - ma)).sum::<f64>() / (m - 1.0);
        let var = reps.iter().map(|r| (g(r) - mg).powi(2)).sum::<f64>() / (m - 1.0);
        let d = (cov - share * var).abs() / (share * var);
        worst = worst.max(d);
        txt.push(format!("{name} {:.1}%", 100.0 * d));
    }
    verdict(
        rel <= 1e-10 && zero_var && worst <= 0.2,
        format!(
            "weighted GATE vs ATE rel {rel:.1e}; single-group se {:?}; covariance identity error {}",
            gm.se().unwrap(),
            txt.join(", ")
        ),
    )
}

fn criterion_7() -> Verdict {
    let dgp = EnumerableDgpConfig::calibrated(N);
    let t_apo = exact(&dgp, "dyn");
    let t_ate = t_apo - exact(&dgp, "base");
    let runs = &shared_runs().runs;
    let cov = |f: &dyn Fn(&SeedRun) -> Est, t: f64| {
        runs.iter().filter(|r| f(r).z(t) <= Z95).count() as f64 / runs.len() as f64
    };
    let c = [
        cov(&|r| r.bhl22[0], t_apo),
        cov(&|r| r.bhl22[2], t_ate),
        cov(&|r| r.bjz24[0], t_apo),
        cov(&|r| r.bjz24[2], t_ate),
    ];
    verdict(
        c.iter().all(|&x| (0.90..=0.99).contains(&x)),
        format!(
            "coverage bhl22 APO {:.2} ATE {:.2}; bjz24 APO {:.2} ATE {:.2}",
            c[0], c[1], c[2], c[3]
        ),
    )
}

fn trimmed(
    ds: &PanelDataset<f64>,
    policies: &[Policy],
    seed: u64,
) -> (Vec<NuisanceEstimates<f64>>, TrimReport<f64>) {
    let s = parametric(EstimatorKind::Bjz24, seed);
    let plan = make_fold_plan(ds.n(), s.folds, seed).unwrap();
    let nuis: Vec<_> = policies
        .iter()
        .map(|p| estimate_nuisances(ds, p, &plan, &s.nuisance, s.method.nuisance_method()).unwrap())
        .collect();
    let t = union_trim(ds, &nuis, TrimRule::Minmax).unwrap();
    (nuis, t)
}

// Retained units whose propensity lies outside a threshold they were held to.
fn outside(ds: &PanelDataset<f64>, nuis: &[NuisanceEstimates<f64>], t: &TrimReport<f64>) -> usize {
    let mut bad = 0;
    for (n, pt) in nuis.iter().zip(&t.policies) {
        let g2 = policy_targets(ds, &n.policy).unwrap().g2;
        for i in t.kept_rows() {
            let t1 = pt.period1.unwrap();
            let mut ok = t1.contains(n.p1_hat[i]);
            if let Some(b) = pt.period2.iter().find(|b| b.d2 == g2[i]) {
                if let Some(t2) = b.thresholds {
                    ok &= t2.contains(n.p2_hat[i]);
                }
            }
            bad += usize::from(!ok);
        }
    }
    bad
}

fn criterion_8() -> Verdict {
    let flat = EnumerableDgpConfig::constant_propensity(N);
    let s = flat.sample(N, 8).unwrap();
    let (n0, t0) = trimmed(&s.data, &EnumerableDgpConfig::calibrated_policies(), 8);
    let mut bad = outside(&s.data, &n0, &t0);
    let strengths = [0.25, 1.0, 2.0, 3.0];
    let policies = vec![
        Policy::dynamic("dyn", 1, 0, 2),
        Policy::static_sequence("base", 0, 2),
    ];
    let mut shares = Vec::new();
    for &k in &strengths {
        let s = DgpConfig::thin_overlap(N, k).sample(N, 80).unwrap();
        let (n, t) = trimmed(&s.data, &policies, 80);
        bad += outside(&s.data, &n, &t);
        shares.push(t.drop_share);
    }
    let monotone = shares.windows(2).all(|w| w[0] <= w[1]);
    verdict(
        t0.drop_share == 0.0 && monotone && bad == 0,
        format!(
            "constant propensity drop share {}; thin overlap {:?} -> {:?}; retained outside thresholds {bad}",
            t0.drop_share,
            strengths,
            shares.iter().map(|x| format!("{x:.4}")).collect::<Vec<_>>()
        ),
    )
}

fn criterion_9() -> Verdict {
    let c = std::f64::consts::FRAC_1_SQRT_2;
    let a = [-c, c];
    let b = [1.0 - c, 1.0 + c];
    let same = standardized_difference(&a, &a).unwrap();
    let unit = standardized_difference(&a, &b).unwrap();
    let x = [1.0, 4.0, 2.0, 8.0, 5.0];
    let y = [3.0, 7.0, 1.0, 6.0];
    // independent hand calculation with sample variances
    // means 4 and 4.25, variances 30/4 and 22.75/3
    let hand = 100.0 * 0.25 / ((7.5 + 22.75 / 3.0) / 2.0f64).sqrt();
    let other = standardized_difference(&x, &y).unwrap();
    let flags = is_imbalanced(20.0) && !is_imbalanced(20.0 - 1e-9) && is_imbalanced(20.0 + 1e-9);
    let ok =
        same.abs() <= 1e-9 && (unit - 100.0).abs() <= 1e-9 && (other - hand).abs() <= 1e-9 && flags;
    verdict(
        ok,
        format!("identical {same:.1e}, unit gap {unit:.12}, mixed {other:.9} vs {hand:.9}, flag at 20 {flags}"),
    )
}

fn criterion_10() -> Verdict {
    let dir = tempfile::tempdir().unwrap();
    let mut sim = RunConfig {
        output_dir: dir.path().join("sim"),
        seed: 10,
        ..RunConfig::default()
    };
    sim.simulate.n = Some(3000);
    run(&sim, Command::Simulate).unwrap();
    let ds_path = dir.path().join("sim").join("simulated.csv");
    let schema: toml::Value =
        toml::from_str(&std::fs::read_to_string(dir.path().join("sim/schema.toml")).unwrap())
            .unwrap();
    let mut input: InputConfig = schema["input"].clone().try_into().unwrap();
    input.path = ds_path;
    let mut cfg = RunConfig {
        output_dir: dir.path().join("est"),
        seed: 99,
        input: Some(input),
        policies: vec![
            PolicyConfig::from_policy(&Policy::dynamic("dyn", 1, 0, 2)),
            PolicyConfig::from_policy(&Policy::static_sequence("base", 0, 2)),
        ],
        ..RunConfig::default()
    };
    cfg.estimation.learners = LearnerPreset::Forest;
    cfg.estimation.method = EstimatorKind::Bhl22;
    let read = |cfg: &RunConfig| {
        run(cfg, Command::Estimate).unwrap();
        let text = std::fs::read_to_string(cfg.output_dir.join(REPORT_FILE)).unwrap();
        text.lines()
            .filter(|l| !l.trim_start().starts_with("\"timestamp\""))
            .collect::<Vec<_>>()
            .join("\n")
    };
    let first = read(&cfg);
    let second = read(&cfg);
    verdict(
        first == second,
        format!(
            "report.json {} bytes, identical modulo timestamp: {}",
            first.len(),
            first == second
        ),
    )
}

fn main() {
    let criteria: [(&str, fn() -> Verdict); 10] = [
        ("oracle equivalence", criterion_1),
        ("telescoping identity", criterion_2),
        ("orthogonality", criterion_3),
        ("multiple robustness", criterion_4),
        ("dynamic confounding bias", criterion_5),
        ("group effect algebra", criterion_6),
        ("interval coverage", criterion_7),
        ("trimming", criterion_8),
        ("standardized differences", criterion_9),
        ("determinism", criterion_10),
    ];
    let only: Vec<usize> = std::env::args()
        .skip(1)
        .filter_map(|a| a.parse().ok())
        .collect();
    let mut failed = 0;
    for (k, (name, f)) in criteria.iter().enumerate() {
        let id = k + 1;
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let t0 = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        if !v.pass {
            failed += 1;
        }
        println!(
            "{} criterion {id:>2} ({name}): {} [{:.1}s]",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            t0.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
