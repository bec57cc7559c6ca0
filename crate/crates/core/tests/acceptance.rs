//! Acceptance suite. Runs every criterion at its stated tolerance, prints one
//! PASS/FAIL line per criterion and exits nonzero if any fails.
//!
//! The Monte-Carlo references here are written independently of the
//! library's own estimators: they loop over draws directly and only borrow
//! the Gaussian sampler.

use std::time::Instant;

use covmimo::chanest::{analytic_mse, mmse_filter, FilterKind, FilterMatrix};
use covmimo::channels::{standard_complex_normal, standard_complex_normal_vector, GaussianSampler};
use covmimo::covest::shrink;
use covmimo::linalg::{c64, trace_adjoint_product, trace_of_product, CMatrix, CVector, HermitianMatrix};
use covmimo::parallel::{map_indexed, with_workers};
use covmimo::rng::{substream, SimRng, Stream};
use covmimo::runner::{run_se_sweep, run_sweeps, write_csv_to, Combiner, Estimator, ExperimentConfig, ResultRow};
use covmimo::scenario::build_scenario;
use covmimo::se::{mrc_moments, mrc_sinr_closed_form};
use covmimo::SystemParams;

const SEED: u64 = 2024;

struct Report {
    failures: usize,
}

impl Report {
    fn line(&mut self, id: &str, pass: bool, detail: String, started: Instant) {
        if !pass {
            self.failures += 1;
        }
        let status = if pass { "PASS" } else { "FAIL" };
        println!(
            "criterion {id:<9} {status}  {detail}  [{:.1}s]",
            started.elapsed().as_secs_f64()
        );
    }
}

fn rng(tag: u64) -> SimRng {
    substream(SEED, Stream::Test, &[tag])
}

fn random_psd(m: usize, rng: &mut SimRng) -> HermitianMatrix {
    let g = CMatrix::from_fn(m, m, |_, _| standard_complex_normal(rng));
    HermitianMatrix::hermitian_part(&(&g * g.adjoint() / c64::new(m as f64, 0.0))).unwrap()
}

fn random_matrix(m: usize, rng: &mut SimRng) -> CMatrix {
    CMatrix::from_fn(m, m, |_, _| standard_complex_normal(rng))
}

/// Lower Cholesky factor computed directly from nalgebra.
fn cholesky_factor(r: &HermitianMatrix) -> CMatrix {
    nalgebra::Cholesky::new(r.as_matrix().clone()).expect("positive definite").l()
}

/// Runs `n` draws split over 64 independent streams and returns per-component
/// (mean, standard error).
fn mc<F>(n: usize, tag: u64, dim: usize, f: F) -> Vec<(f64, f64)>
where
    F: Fn(&mut SimRng) -> Vec<f64> + Sync + Send,
{
    const STREAMS: usize = 64;
    let parts = map_indexed(STREAMS, |s| {
        let mut rng = substream(SEED, Stream::Test, &[tag, s as u64]);
        let mut sum = vec![0.0; dim];
        let mut sq = vec![0.0; dim];
        let count = n / STREAMS + usize::from(s < n % STREAMS);
        for _ in 0..count {
            for (d, x) in f(&mut rng).into_iter().enumerate() {
                sum[d] += x;
                sq[d] += x * x;
            }
        }
        (sum, sq)
    });
    let nf = n as f64;
    (0..dim)
        .map(|d| {
            let s: f64 = parts.iter().map(|p| p.0[d]).sum();
            let q: f64 = parts.iter().map(|p| p.1[d]).sum();
            let mean = s / nf;
            (mean, (((q - nf * mean * mean) / (nf - 1.0)).max(0.0) / nf).sqrt())
        })
        .collect()
}

fn small() -> SystemParams {
    SystemParams {
        m: 8,
        k: 2,
        l: 2,
        ..SystemParams::default()
    }
}

// 1. closed-form MSE against brute force, 10 random instances, 1e6 draws, 1%.
fn criterion_1(report: &mut Report) {
    let t = Instant::now();
    let mut worst: f64 = 0.0;
    for inst in 0..10 {
        let mut g = rng(100 + inst);
        let m = 8;
        let r = random_psd(m, &mut g);
        let c = &random_psd(m, &mut g) + &HermitianMatrix::scaled_identity(m, 0.3);
        let q = &r + &c;
        let w = FilterMatrix {
            w: random_matrix(m, &mut g) / c64::new(3.0, 0.0),
            kind: FilterKind::Ls,
        };
        let (lr, lc) = (cholesky_factor(&r), cholesky_factor(&c));
        let est = mc(1_000_000, 1000 + inst, 1, |g| {
            let h = &lr * standard_complex_normal_vector(m, g);
            let y = &h + &lc * standard_complex_normal_vector(m, g);
            vec![(&h - &w.w * y).norm_squared()]
        });
        let exact = analytic_mse(&w, &r, &q).unwrap();
        worst = worst.max((est[0].0 - exact).abs() / exact);
    }
    report.line("1", worst < 0.01, format!("closed-form MSE max rel err {worst:.2e} (< 1e-2)"), t);
}

// 2. MRC moments and the Gaussian fourth-moment identity, 3 standard errors.
fn criterion_2(report: &mut Report) {
    let t = Instant::now();
    let p = small();
    let cov = build_scenario(&p).unwrap();
    let mut g = rng(200);
    let w = random_matrix(p.m, &mut g) / c64::new(3.0, 0.0);
    let wf = FilterMatrix {
        w: w.clone(),
        kind: FilterKind::Ls,
    };
    let (j, k) = (0, 1);
    let samplers: Vec<Vec<GaussianSampler>> = (0..p.l)
        .map(|l| (0..p.k).map(|i| GaussianSampler::new(cov.r(j, l, i)).unwrap()).collect())
        .collect();
    let noise = 1.0 / p.rho_tr.sqrt();

    // [Re gain, Im gain, ||v||^2, then |v^H h_li|^2 for every (l, i)]
    let dim = 3 + p.l * p.k;
    let est = mc(1_000_000, 2000, dim, |g| {
        let h: Vec<Vec<CVector>> = samplers.iter().map(|row| row.iter().map(|s| s.sample(g)).collect()).collect();
        let mut y = standard_complex_normal_vector(p.m, g) * c64::new(noise, 0.0);
        for row in &h {
            y += &row[k];
        }
        let v = &w * y;
        let gain = v.dotc(&h[j][k]);
        let mut x = vec![gain.re, gain.im, v.norm_squared()];
        for row in &h {
            for hi in row {
                x.push(v.dotc(hi).norm_sqr());
            }
        }
        x
    });

    let mut expected = Vec::with_capacity(dim);
    let own = mrc_moments(&wf, &cov, j, k, j, k).unwrap();
    expected.extend([own.gain.re, own.gain.im, own.norm]);
    for l in 0..p.l {
        for i in 0..p.k {
            expected.push(mrc_moments(&wf, &cov, j, k, l, i).unwrap().power);
        }
    }
    let z: Vec<f64> = est.iter().zip(&expected).map(|(e, x)| (e.0 - x).abs() / e.1).collect();

    let r = random_psd(p.m, &mut g);
    let wq = random_matrix(p.m, &mut g);
    let lr = cholesky_factor(&r);
    let fourth = mc(1_000_000, 2001, 1, |g| {
        let h = &lr * standard_complex_normal_vector(p.m, g);
        vec![h.dotc(&(&wq * &h)).norm_sqr()]
    });
    let wr = &wq * r.as_matrix();
    let exact4 = trace_of_product(&wq, r.as_matrix()).norm_sqr() + trace_of_product(&wr, &(wq.adjoint() * r.as_matrix())).re;
    let z4 = (fourth[0].0 - exact4).abs() / fourth[0].1;

    let worst = z.iter().copied().fold(z4, f64::max);
    let detail = format!(
        "z-scores: gain {:.2}/{:.2}, norm {:.2}, power {}, fourth moment {z4:.2} (all < 3)",
        z[0],
        z[1],
        z[2],
        z[3..].iter().map(|v| format!("{v:.2}")).collect::<Vec<_>>().join("/")
    );
    report.line("2", worst < 3.0, detail, t);
}

// 3. Closed-form MRC SINR against the Monte-Carlo UatF bound, 2e5 blocks, 2%.
fn criterion_3(report: &mut Report) {
    let t = Instant::now();
    let p = small();
    let cov = build_scenario(&p).unwrap();
    let (j, k) = (0, 0);
    let w = mmse_filter(cov.r(j, j, k), cov.q(j, k)).unwrap().filter;
    let exact = mrc_sinr_closed_form(&w, &cov, j, k, p.rho_ul).unwrap().1;
    let samplers: Vec<Vec<GaussianSampler>> = (0..p.l)
        .map(|l| (0..p.k).map(|i| GaussianSampler::new(cov.r(j, l, i)).unwrap()).collect())
        .collect();
    let noise = c64::new(1.0 / p.rho_tr.sqrt(), 0.0);
    let est = mc(200_000, 3000, 4, |g| {
        let h: Vec<Vec<CVector>> = samplers.iter().map(|row| row.iter().map(|s| s.sample(g)).collect()).collect();
        let mut y = standard_complex_normal_vector(p.m, g) * noise;
        for row in &h {
            y += &row[k];
        }
        let v = &w.w * y;
        let gain = v.dotc(&h[j][k]);
        let power: f64 = h.iter().flatten().map(|hi| v.dotc(hi).norm_sqr()).sum();
        vec![gain.re, gain.im, power, v.norm_squared()]
    });
    let signal = est[0].0.powi(2) + est[1].0.powi(2);
    let gamma = signal / (est[2].0 - signal + est[3].0 / p.rho_ul);
    let err = (gamma - exact).abs() / exact;
    report.line(
        "3",
        err < 0.02,
        format!("closed form {exact:.5} vs Monte Carlo {gamma:.5}, rel err {err:.2e} (< 2e-2)"),
        t,
    );
}

// 4. Exact identities at full scale.
fn criterion_4(report: &mut Report) {
    let t = Instant::now();
    let p = SystemParams::default();
    let cov = build_scenario(&p).unwrap();
    let mut mmse_err: f64 = 0.0;
    for k in 0..p.k {
        let (r, q) = (cov.r(0, 0, k), cov.q(0, k));
        let m = mmse_filter(r, q).unwrap();
        let expected = (r - &m.phi).trace();
        mmse_err = mmse_err.max((analytic_mse(&m.filter, r, q).unwrap() - expected).abs() / expected);
    }
    let mut g = rng(400);
    let s = random_psd(p.m, &mut g);
    let one = shrink(&s, 1.0).unwrap();
    let zero = shrink(&s, 0.0).unwrap();
    let endpoints_exact = one.as_matrix() == s.as_matrix() && zero.as_matrix() == s.diagonal_part().as_matrix();
    let mut q_res: f64 = 0.0;
    for j in 0..p.l {
        for k in 0..p.k {
            let mut sum = CMatrix::identity(p.m, p.m) * c64::new(1.0 / p.rho_tr, 0.0);
            for l in 0..p.l {
                sum += cov.r(j, l, k).as_matrix();
            }
            let q = cov.q(j, k).as_matrix();
            let res = trace_adjoint_product(&(q - &sum), &(q - &sum)).re.sqrt() / trace_adjoint_product(q, q).re.sqrt();
            q_res = q_res.max(res);
        }
    }
    let pass = mmse_err < 1e-10 && endpoints_exact && q_res < 1e-12;
    report.line(
        "4",
        pass,
        format!("MMSE identity {mmse_err:.1e} (< 1e-10), shrink endpoints exact: {endpoints_exact}, Q residual {q_res:.1e} (< 1e-12)"),
        t,
    );
}

fn find<'a>(rows: &'a [ResultRow], est: &Estimator, comb: Combiner, n_r: usize) -> &'a ResultRow {
    rows.iter()
        .find(|r| &r.estimator == est && r.combiner == comb && r.n_r == n_r)
        .unwrap_or_else(|| panic!("missing row {est} {comb} {n_r}"))
}

fn pooled(a: &ResultRow, b: &ResultRow) -> f64 {
    2.0 * (a.stderr.powi(2) + b.stderr.powi(2)).sqrt()
}

// 5. NMSE sweep ordering at full scale.
fn criterion_5(report: &mut Report, rows: &[ResultRow], sweep: &[usize], t: Instant) {
    let approx = [Estimator::ApproxViaQ, Estimator::ApproxRDirect];
    let c = Combiner::None;
    let ls = find(rows, &Estimator::Ls, c, sweep[0]).value;
    let a = approx.iter().all(|e| find(rows, e, c, sweep[0]).value < ls);
    let b = sweep.iter().all(|&n| {
        let (v, r) = (find(rows, &approx[0], c, n), find(rows, &approx[1], c, n));
        v.value <= r.value + pooled(v, r)
    });
    let mono = approx.iter().all(|e| {
        sweep.windows(2).all(|w| {
            let (x, y) = (find(rows, e, c, w[0]), find(rows, e, c, w[1]));
            y.value <= x.value + pooled(x, y)
        })
    });
    let d = sweep.iter().all(|&n| {
        let mmse = find(rows, &Estimator::Mmse, c, n).value;
        [Estimator::Ls, Estimator::ApproxViaQ, Estimator::ApproxRDirect]
            .iter()
            .all(|e| mmse < find(rows, e, c, n).value)
    });
    let curve = |e: &Estimator| {
        sweep
            .iter()
            .map(|&n| format!("{:.3}", find(rows, e, c, n).value))
            .collect::<Vec<_>>()
            .join(" ")
    };
    report.line(
        "5",
        a && b && mono && d,
        format!(
            "(a) {a} (b) {b} (c) {mono} (d) {d}; LS {ls:.3}, MMSE {:.3}, Via-Q [{}], R-direct [{}]",
            find(rows, &Estimator::Mmse, c, sweep[0]).value,
            curve(&approx[0]),
            curve(&approx[1])
        ),
        t,
    );
}

/// First `N_R` at which `ratio` reaches `level`, interpolated linearly
/// between sweep points.
fn crossing(sweep: &[usize], ratio: &[f64], level: f64) -> Option<f64> {
    if ratio[0] >= level {
        return Some(sweep[0] as f64);
    }
    (1..sweep.len()).find(|&i| ratio[i] >= level).map(|i| {
        let (x0, x1) = (sweep[i - 1] as f64, sweep[i] as f64);
        let (y0, y1) = (ratio[i - 1], ratio[i]);
        x0 + (level - y0) / (y1 - y0) * (x1 - x0)
    })
}

// 6. SE ratios and the 95% crossing of Via-Q.
fn criterion_6(report: &mut Report, id: &str, rows: &[ResultRow], sweep: &[usize], tol: f64, t: Instant) {
    let mut pass = true;
    let mut parts = Vec::new();
    for (comb, target, window) in [(Combiner::Mrc, 0.82, (50.0, 200.0)), (Combiner::Rzf, 0.70, (150.0, 400.0))] {
        let mmse = find(rows, &Estimator::Mmse, comb, sweep[0]).value;
        let ls_ratio = find(rows, &Estimator::Ls, comb, sweep[0]).value / mmse;
        let ratios: Vec<f64> = sweep
            .iter()
            .map(|&n| find(rows, &Estimator::ApproxViaQ, comb, n).value / mmse)
            .collect();
        let cross = crossing(sweep, &ratios, 0.95);
        let ratio_ok = (ls_ratio - target).abs() <= tol;
        let cross_ok = cross.is_some_and(|x| x >= window.0 && x <= window.1);
        pass &= ratio_ok && cross_ok;
        parts.push(format!(
            "{comb}: LS/MMSE {ls_ratio:.3} (target {target}±{tol}) {}, 95% crossing {} (in [{}, {}]) {}, Via-Q/MMSE [{}]",
            if ratio_ok { "ok" } else { "off" },
            cross.map_or("none".to_string(), |x| format!("{x:.0}")),
            window.0,
            window.1,
            if cross_ok { "ok" } else { "off" },
            ratios.iter().map(|r| format!("{r:.3}")).collect::<Vec<_>>().join(" ")
        ));
    }
    report.line(id, pass, parts.join("; "), t);
}

fn csv_bytes(rows: &[ResultRow]) -> Vec<u8> {
    let mut buf = Vec::new();
    write_csv_to(rows, &mut buf).unwrap();
    buf
}

// 7. Byte-identical CSV for repeated runs and different worker counts.
fn criterion_7(report: &mut Report) {
    let t = Instant::now();
    let config = ExperimentConfig {
        scenario: SystemParams {
            m: 16,
            k: 3,
            l: 3,
            ..SystemParams::default()
        },
        sweep: vec![10, 40],
        n_outer: 3,
        n_blocks: 150,
        n_avg: 3,
        seed: SEED,
        ..ExperimentConfig::default()
    };
    let run = |workers| {
        with_workers(workers, || {
            let out = run_sweeps(&config).unwrap();
            let mut rows = out.nmse;
            rows.extend(out.sum_se);
            csv_bytes(&rows)
        })
    };
    let a = run(1);
    let b = run(1);
    let c = run(2);
    let d = run(4);
    let pass = a == b && a == c && a == d;
    report.line(
        "7",
        pass,
        format!("{} CSV bytes identical across repeat and 1/2/4 workers: {pass}", a.len()),
        t,
    );
}

fn main() {
    // cargo passes libtest flags; the suite has no filters.
    let mut report = Report { failures: 0 };
    println!("running acceptance criteria");
    criterion_1(&mut report);
    criterion_2(&mut report);
    criterion_3(&mut report);
    criterion_4(&mut report);

    let t = Instant::now();
    let config = ExperimentConfig {
        seed: SEED,
        ..ExperimentConfig::default()
    };
    let full = run_sweeps(&config).expect("default sweeps");
    criterion_5(&mut report, &full.nmse, &config.sweep, t);
    criterion_6(&mut report, "6", &full.sum_se, &config.sweep, 0.05, t);

    let t = Instant::now();
    let quick = config.clone().quick();
    let rows = run_se_sweep(&quick).expect("quick SE sweep");
    criterion_6(&mut report, "6 (quick)", &rows, &quick.sweep, 0.08, t);

    criterion_7(&mut report);

    if report.failures > 0 {
        println!("acceptance: {} criterion line(s) failed", report.failures);
        std::process::exit(1);
    }
    println!("acceptance: all criteria passed");
}
