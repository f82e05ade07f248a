//! Sweep orchestration: one independent, deterministically seeded run per
//! (swept value, seed) pair.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use dpglm::glm::dp_glm;
use dpglm::linalg::{dot, Matrix};
use dpglm::mlp::{dp_sgd_train, forward, init_params, ntrf_fit, DpSgdConfig, Loss};
use dpglm::privacy::{NoiseChannel, NoiseEvent, NoiseLog};
use dpglm::relu::{adaptive_dp_batched_gd, default_adaptive_steps, default_relu_steps, dp_projected_gd_relu};
use dpglm::rng::Rng;
use dpglm::synth::{
    gen_misspecified_relu, gen_twolayer, gen_wellspec_glm, GroundTruth, ModelKind, TwoLayerTruth,
};
use dpglm::twolayer::{dp_twolayer, multinomial_feature_map, taylor_coeffs};
use dpglm::{Dataset, LinkFunction, PrivacyBudget};

use crate::config::{ExperimentConfig, ExperimentKind, Knob};
use crate::error::{CliError, Result};
use crate::mnist::load_mnist_idx;
use crate::report::ResultRow;

/// Mix a base seed with the swept value so a cell's stream depends only on
/// the (seed, value) pair, not on sweep order.
pub fn derive_seed(seed: u64, value: f64) -> u64 {
    let mut z = seed
        .wrapping_add(0x9E37_79B9_7F4A_7C15)
        .wrapping_mul(0xBF58_476D_1CE4_E5B9)
        ^ value.to_bits();
    z ^= z >> 31;
    z.wrapping_mul(0x94D0_49BB_1331_11EB)
}

struct CellOutcome {
    row: ResultRow,
    events: Vec<NoiseEvent>,
    model: Option<dpglm::MlpParams>,
}

pub fn run_experiment(
    cfg: &ExperimentConfig,
    seed_offset: u64,
    jobs: usize,
) -> Result<(Vec<ResultRow>, Vec<(String, Vec<NoiseEvent>)>)> {
    run_experiment_with_checkpoints(cfg, seed_offset, jobs, None)
}

/// As `run_experiment`; when a directory is given, each cell that trains a
/// network also writes its averaged model as `<knob>-<value>-seed-<s>.json`.
pub fn run_experiment_with_checkpoints(
    cfg: &ExperimentConfig,
    seed_offset: u64,
    jobs: usize,
    checkpoint_dir: Option<&std::path::Path>,
) -> Result<(Vec<ResultRow>, Vec<(String, Vec<NoiseEvent>)>)> {
    cfg.validate()?;
    let cells: Vec<(f64, u64)> = cfg
        .sweep
        .values
        .iter()
        .flat_map(|&v| cfg.seeds.iter().map(move |&s| (v, s.wrapping_add(seed_offset))))
        .collect();
    let jobs = jobs.max(1);
    let next = AtomicUsize::new(0);
    let out: Mutex<Vec<Option<std::result::Result<CellOutcome, String>>>> =
        Mutex::new((0..cells.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..jobs.min(cells.len()) {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= cells.len() {
                    break;
                }
                let (value, seed) = cells[i];
                let res = run_cell(cfg, value, seed).map_err(|e| e.to_string());
                out.lock().unwrap()[i] = Some(res);
            });
        }
    });
    let mut rows = Vec::with_capacity(cells.len());
    let mut logs = Vec::with_capacity(cells.len());
    for (i, slot) in out.into_inner().unwrap().into_iter().enumerate() {
        let (value, seed) = cells[i];
        let outcome = slot
            .expect("cell not executed")
            .map_err(|e| CliError::Config(format!(
                "run failed for {} {}={value} seed={seed}: {e}",
                cfg.id(),
                cfg.sweep.knob.as_str()
            )))?;
        if let (Some(dir), Some(model)) = (checkpoint_dir, &outcome.model) {
            let name = format!("{}-{value}-seed-{seed}.json", cfg.sweep.knob.as_str());
            dpglm::mlp::write_checkpoint(model, &dir.join(name))?;
        }
        logs.push((format!("{}={value}:seed={seed}", cfg.sweep.knob.as_str()), outcome.events));
        rows.push(outcome.row);
    }
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| {
        rows[a]
            .knob_value
            .total_cmp(&rows[b].knob_value)
            .then(rows[a].seed.cmp(&rows[b].seed))
    });
    let rows = order.iter().map(|&i| rows[i].clone()).collect();
    let logs = order.into_iter().map(|i| logs[i].clone()).collect();
    Ok((rows, logs))
}

/// Paired Monte Carlo estimate of model risk minus reference risk on a
/// shared test stream; returns (mean, stderr).
fn paired_excess<P, Q, S>(mut model: P, mut reference: Q, mut draw: S, n_test: usize) -> (f64, f64)
where
    P: FnMut(&[f64]) -> f64,
    Q: FnMut(&[f64]) -> f64,
    S: FnMut() -> (Vec<f64>, f64),
{
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for _ in 0..n_test {
        let (x, y) = draw();
        let em = model(&x) - y;
        let er = reference(&x) - y;
        let diff = em * em - er * er;
        sum += diff;
        sumsq += diff * diff;
    }
    let n = n_test as f64;
    let mean = sum / n;
    let var = (sumsq / n - mean * mean).max(0.0);
    (mean, (var / n).sqrt())
}

struct Cell<'a> {
    cfg: &'a ExperimentConfig,
    value: f64,
    seed: u64,
    n: usize,
    budget: PrivacyBudget,
}

impl Cell<'_> {
    fn knob_is(&self, k: Knob) -> bool {
        self.cfg.sweep.knob == k
    }

    fn row(&self, d: usize, algorithm: &str, excess: f64, stderr: f64, wall_ms: u64, events: usize) -> ResultRow {
        ResultRow {
            experiment: self.cfg.id().to_string(),
            seed: self.seed,
            n: self.n,
            d,
            epsilon: self.budget.epsilon(),
            delta: self.budget.delta(),
            algorithm: algorithm.to_string(),
            knob: self.cfg.sweep.knob.as_str().to_string(),
            knob_value: self.value,
            excess_risk: excess,
            stderr,
            wall_ms,
            noise_events: events,
        }
    }
}

fn run_cell(cfg: &ExperimentConfig, value: f64, seed: u64) -> Result<CellOutcome> {
    let n = if cfg.sweep.knob == Knob::N { value as usize } else { cfg.data.n };
    let epsilon = if cfg.sweep.knob == Knob::Epsilon { value } else { cfg.epsilon };
    let budget = PrivacyBudget::new(epsilon, cfg.delta_for(n))?;
    let cell = Cell { cfg, value, seed, n, budget };
    let start = Instant::now();
    match cfg.experiment {
        ExperimentKind::GlmRiskCurve => glm_cell(&cell, start),
        ExperimentKind::ReluWellspec => relu_wellspec_cell(&cell, start),
        ExperimentKind::ReluMisspec => relu_misspec_cell(&cell, start),
        ExperimentKind::Twolayer => twolayer_cell(&cell, start),
        ExperimentKind::MlpClipSweep
        | ExperimentKind::MlpWidthSweep
        | ExperimentKind::MlpIterSweep
        | ExperimentKind::MlpNSweep => mlp_cell(&cell, start),
        ExperimentKind::NtrfFit => ntrf_cell(&cell, start),
    }
}

fn data_rng(cell: &Cell<'_>) -> Rng {
    Rng::new(derive_seed(cell.seed, cell.value))
}

fn noise_rng(cell: &Cell<'_>) -> Rng {
    Rng::new(derive_seed(cell.seed ^ 0xA5A5_A5A5, cell.value))
}

fn test_rng(cell: &Cell<'_>) -> Rng {
    Rng::new(derive_seed(cell.seed ^ 0x7E57_7E57, cell.value))
}

fn eta_mult(cell: &Cell<'_>) -> f64 {
    let base = cell.cfg.knobs.eta_mult;
    if cell.knob_is(Knob::EtaMult) {
        base * cell.value
    } else {
        base
    }
}

fn glm_cell(cell: &Cell<'_>, start: Instant) -> Result<CellOutcome> {
    let cfg = cell.cfg;
    let (n, d) = (cell.n, cfg.data.d);
    let link = LinkFunction::sigmoid();
    let mut rng = data_rng(cell);
    let truth =
        GroundTruth::random(&mut rng, d, cfg.data.w_norm, cfg.data.noise_std, ModelKind::WellSpecGlm);
    let ds = gen_wellspec_glm(&mut rng, n, d, &truth, &link)?;
    let theta = cfg.knobs.theta.unwrap_or(d as f64);
    let eta = cfg.knobs.eta.unwrap_or_else(|| {
        (1.0 / (n as f64).sqrt())
            .min(cell.budget.epsilon() / (theta * (1.0 / cell.budget.delta()).ln()).sqrt())
    }) * eta_mult(cell);
    let mut nrng = noise_rng(cell);
    let mut log = NoiseLog::new();
    let mut ch = NoiseChannel::new(&mut nrng, &mut log);
    let model = dp_glm(&ds, &link, &cell.budget, theta, eta, &mut ch)?;
    let wall = start.elapsed().as_millis() as u64;
    let mut trng = test_rng(cell);
    let lk = link.clone();
    let (excess, stderr) = paired_excess(
        |x| lk.value(model.predict_margin(x).unwrap()),
        |x| link.value(dot(&truth.w_star, x)),
        || {
            let mut x = trng.unit_vector(d);
            let s = trng.uniform();
            x.iter_mut().for_each(|v| *v *= s);
            let y = link.value(dot(&truth.w_star, &x)) + truth.noise_std * trng.gaussian();
            (x, y)
        },
        cfg.n_test,
    );
    Ok(CellOutcome {
        row: cell.row(d, cfg.experiment.algorithm(), excess, stderr, wall, log.len()),
        events: log.events().to_vec(),
        model: None,
    })
}

fn relu_wellspec_cell(cell: &Cell<'_>, start: Instant) -> Result<CellOutcome> {
    let cfg = cell.cfg;
    let (n, d) = (cell.n, cfg.data.d);
    let link = LinkFunction::relu();
    let mut rng = data_rng(cell);
    let truth =
        GroundTruth::random(&mut rng, d, cfg.data.w_norm, cfg.data.noise_std, ModelKind::WellSpecGlm);
    let ds = gen_wellspec_glm(&mut rng, n, d, &truth, &link)?;
    let t = if cell.knob_is(Knob::Iterations) {
        cell.value as usize
    } else {
        cfg.knobs.iterations.unwrap_or_else(|| default_relu_steps(n, d, &cell.budget))
    };
    let eta = cfg.knobs.eta.unwrap_or(0.1) * eta_mult(cell);
    let mut nrng = noise_rng(cell);
    let mut log = NoiseLog::new();
    let mut ch = NoiseChannel::new(&mut nrng, &mut log);
    let rep = dp_projected_gd_relu(&ds, &cell.budget, cfg.data.w_norm, t, eta, d, &mut ch)?;
    let wall = start.elapsed().as_millis() as u64;
    let mut trng = test_rng(cell);
    let (excess, stderr) = paired_excess(
        |x| rep.model.predict_margin(x).unwrap().max(0.0),
        |x| dot(&truth.w_star, x).max(0.0),
        || {
            let mut x = trng.unit_vector(d);
            let s = trng.uniform();
            x.iter_mut().for_each(|v| *v *= s);
            let y = dot(&truth.w_star, &x).max(0.0) + truth.noise_std * trng.gaussian();
            (x, y)
        },
        cfg.n_test,
    );
    Ok(CellOutcome {
        row: cell.row(d, cfg.experiment.algorithm(), excess, stderr, wall, log.len()),
        events: log.events().to_vec(),
        model: None,
    })
}

fn relu_misspec_cell(cell: &Cell<'_>, start: Instant) -> Result<CellOutcome> {
    let cfg = cell.cfg;
    let (n, d) = (cell.n, cfg.data.d);
    let mut rng = data_rng(cell);
    let truth =
        GroundTruth::random(&mut rng, d, cfg.data.w_norm, cfg.data.noise_std, ModelKind::Misspecified);
    let bias = cfg.data.bias_amplitude;
    let ds = gen_misspecified_relu(&mut rng, n, d, &truth, bias)?;
    // the bias direction is the first unit vector the generator draws
    let mut vrng = data_rng(cell);
    let _ = GroundTruth::random(&mut vrng, d, cfg.data.w_norm, cfg.data.noise_std, ModelKind::Misspecified);
    let v = vrng.unit_vector(d);
    let t = if cell.knob_is(Knob::Iterations) {
        cell.value as usize
    } else {
        cfg.knobs
            .iterations
            .unwrap_or_else(|| default_adaptive_steps(cfg.data.w_norm, d, cfg.knobs.alpha_target))
    };
    let eta = cfg.knobs.eta.unwrap_or(1.0 / 16.0) * eta_mult(cell);
    let mut nrng = noise_rng(cell);
    let mut log = NoiseLog::new();
    let mut ch = NoiseChannel::new(&mut nrng, &mut log);
    let rep = adaptive_dp_batched_gd(&ds, &cell.budget, t, eta, &mut ch)?;
    let wall = start.elapsed().as_millis() as u64;
    let mut trng = test_rng(cell);
    let half = 3.0f64.sqrt();
    let (excess, stderr) = paired_excess(
        |x| rep.model.predict_margin(x).unwrap().max(0.0),
        |x| dot(&truth.w_star, x).max(0.0),
        || {
            let x: Vec<f64> = (0..d).map(|_| trng.uniform_range(-half, half)).collect();
            let b = if bias > 0.0 { bias * dot(&v, &x).sin().signum() } else { 0.0 };
            let y = dot(&truth.w_star, &x).max(0.0) + b + truth.noise_std * trng.gaussian();
            (x, y)
        },
        cfg.n_test,
    );
    Ok(CellOutcome {
        row: cell.row(d, cfg.experiment.algorithm(), excess, stderr, wall, log.len()),
        events: log.events().to_vec(),
        model: None,
    })
}

fn twolayer_cell(cell: &Cell<'_>, start: Instant) -> Result<CellOutcome> {
    let cfg = cell.cfg;
    let (n, d) = (cell.n, cfg.data.d);
    let mut rng = data_rng(cell);
    let truth = TwoLayerTruth::random(
        &mut rng,
        d,
        cfg.data.teacher_units,
        LinkFunction::relu(),
        LinkFunction::sigmoid(),
    );
    let ds = gen_twolayer(&mut rng, n, d, &truth, cfg.data.noise_std)?;
    let degree =
        if cell.knob_is(Knob::Degree) { cell.value as usize } else { cfg.knobs.degree };
    let outer = LinkFunction::sigmoid();
    let coeffs = taylor_coeffs(&outer, degree)?;
    let map = multinomial_feature_map(d, degree, &coeffs)?;
    let theta = cfg.knobs.theta.unwrap_or_else(|| (map.output_dim.min(n)) as f64);
    let eta = cfg.knobs.eta.unwrap_or_else(|| 1.0 / (n as f64).sqrt()) * eta_mult(cell);
    let mut nrng = noise_rng(cell);
    let mut log = NoiseLog::new();
    let mut ch = NoiseChannel::new(&mut nrng, &mut log);
    let model = dp_twolayer(&ds, &map, &outer, &cell.budget, theta, eta, &mut ch)?;
    let wall = start.elapsed().as_millis() as u64;
    let mut trng = test_rng(cell);
    let (excess, stderr) = paired_excess(
        |x| model.predict(x).unwrap(),
        |x| truth.eval(x).clamp(0.0, 1.0),
        || {
            let x = trng.unit_vector(d);
            let y = (truth.eval(&x) + cfg.data.noise_std * trng.gaussian()).clamp(0.0, 1.0);
            (x, y)
        },
        cfg.n_test,
    );
    Ok(CellOutcome {
        row: cell.row(d, cfg.experiment.algorithm(), excess, stderr, wall, log.len()),
        events: log.events().to_vec(),
        model: None,
    })
}

/// Synthetic binary classification: labels are the sign of a fixed random
/// direction; MNIST rows use digit parity.
fn classification_data(rng: &mut Rng, n: usize, d: usize) -> Dataset {
    let v = rng.unit_vector(d);
    let mut features = Matrix::zeros(n, d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let x = rng.unit_vector(d);
        labels.push(if dot(&v, &x) >= 0.0 { 1.0 } else { -1.0 });
        features.data[i * d..(i + 1) * d].copy_from_slice(&x);
    }
    Dataset { features, labels, feature_norm_bound: 1.0, label_bound: 1.0, truncated: 0 }
}

fn binarize(mut ds: Dataset) -> Dataset {
    for y in ds.labels.iter_mut() {
        *y = if (*y as i64) % 2 == 0 { 1.0 } else { -1.0 };
    }
    ds.label_bound = 1.0;
    ds
}

fn mlp_dims(cell: &Cell<'_>) -> (usize, usize) {
    let cfg = cell.cfg;
    if cfg.experiment == ExperimentKind::MlpNSweep {
        let nf = cell.n as f64;
        let m = (nf.powf(14.0 / 15.0) / 2.0).floor().max(1.0) as usize;
        let t = (50.0 * nf.powf(2.0 / 15.0)).floor().max(1.0) as usize;
        return (m, t);
    }
    let m = if cell.knob_is(Knob::Width) { cell.value as usize } else { cfg.knobs.width };
    let t = if cell.knob_is(Knob::Iterations) {
        cell.value as usize
    } else {
        cfg.knobs.iterations.unwrap_or(200)
    };
    (m, t)
}

fn mlp_cell(cell: &Cell<'_>, start: Instant) -> Result<CellOutcome> {
    let cfg = cell.cfg;
    let n = cell.n;
    let mut rng = data_rng(cell);
    let (train, test) = match &cfg.data.mnist {
        Some(spec) => {
            let full = binarize(load_mnist_idx(
                std::path::Path::new(&spec.images),
                std::path::Path::new(&spec.labels),
            )?);
            split_dataset(full, n, cfg.n_test)?
        }
        None => {
            let train = classification_data(&mut rng, n, cfg.data.d);
            let mut trng = test_rng(cell);
            let test = classification_data(&mut trng, cfg.n_test, cfg.data.d);
            (train, test)
        }
    };
    let d = train.d();
    let (m, t) = mlp_dims(cell);
    let clip = if cell.knob_is(Knob::Clip) { cell.value } else { cfg.knobs.clip };
    let radius = cfg.knobs.radius;
    let l = cfg.knobs.depth;
    let eta = cfg.knobs.eta.unwrap_or_else(|| {
        (l as f64).sqrt() * radius / (clip * ((m * t) as f64).sqrt())
    }) * eta_mult(cell);
    let mut wrng = Rng::new(derive_seed(cell.seed ^ x1n1t_u64(), cell.value));
    let w0 = init_params(&mut wrng, l, m, d)?;
    let dpcfg = DpSgdConfig {
        eta,
        expected_batch: cfg.knobs.batch,
        iterations: t,
        clip,
        radius,
        noise_std: None,
        c2: cfg.knobs.c2,
        strict: cfg.knobs.strict,
    };
    let loss = Loss::Logistic;
    let mut nrng = noise_rng(cell);
    let mut log = NoiseLog::new();
    let mut ch = NoiseChannel::new(&mut nrng, &mut log);
    let rep = dp_sgd_train(&train, &w0, &dpcfg, &cell.budget, &loss, &mut ch)?;
    let wall = start.elapsed().as_millis() as u64;
    let (mean, stderr) = test_loss(&rep.averaged, &test, &loss);
    Ok(CellOutcome {
        row: cell.row(d, cfg.experiment.algorithm(), mean, stderr, wall, log.len()),
        events: log.events().to_vec(),
        model: Some(rep.averaged),
    })
}

fn x1n1t_u64() -> u64 {
    0x1A17_1A17
}

fn split_dataset(full: Dataset, n: usize, n_test: usize) -> Result<(Dataset, Dataset)> {
    let total = full.n();
    if n + n_test > total {
        return Err(CliError::Config(format!(
            "dataset holds {total} rows, requested {n} train + {n_test} test"
        )));
    }
    let d = full.d();
    let take = |from: usize, count: usize| {
        let mut features = Matrix::zeros(count, d);
        features
            .data
            .copy_from_slice(&full.features.data[from * d..(from + count) * d]);
        Dataset {
            features,
            labels: full.labels[from..from + count].to_vec(),
            feature_norm_bound: full.feature_norm_bound,
            label_bound: full.label_bound,
            truncated: 0,
        }
    };
    Ok((take(0, n), take(n, n_test)))
}

fn test_loss(params: &dpglm::MlpParams, ds: &Dataset, loss: &Loss) -> (f64, f64) {
    let n = ds.n();
    let mut sum = 0.0;
    let mut sumsq = 0.0;
    for i in 0..n {
        let l = loss.value(forward(params, ds.features.row(i)).unwrap().output, ds.labels[i]);
        sum += l;
        sumsq += l * l;
    }
    let nf = n as f64;
    let mean = sum / nf;
    let var = (sumsq / nf - mean * mean).max(0.0);
    (mean, (var / nf).sqrt())
}

fn ntrf_cell(cell: &Cell<'_>, start: Instant) -> Result<CellOutcome> {
    let cfg = cell.cfg;
    let n = cell.n;
    let d = cfg.data.d;
    let mut rng = data_rng(cell);
    let train = classification_data(&mut rng, n, d);
    let m = if cell.knob_is(Knob::Width) { cell.value as usize } else { cfg.knobs.width };
    let rs = if cell.knob_is(Knob::RadiusScale) { cell.value } else { cfg.knobs.radius_scale };
    let r = rs * (m as f64).sqrt();
    let l = cfg.knobs.depth;
    let eta = cfg.knobs.eta.unwrap_or_else(|| 2.0 / m as f64) * eta_mult(cell);
    let mut wrng = Rng::new(derive_seed(cell.seed ^ x1n1t_u64(), cell.value));
    let w0 = init_params(&mut wrng, l, m, d)?;
    let (_, train_loss) = ntrf_fit(&w0, &train, r, &Loss::Logistic, cfg.knobs.steps, eta)?;
    let wall = start.elapsed().as_millis() as u64;
    Ok(CellOutcome {
        row: cell.row(d, cfg.experiment.algorithm(), train_loss, 0.0, wall, 0),
        events: Vec::new(),
        model: None,
    })
}
