//! Monte Carlo simulation of the carrier process behind the analytic
//! probabilities, used to validate them.
//!
//! Each cycle draws carrier counts `n_m ~ Pois(N_m π_m)` for every OD group
//! in one car of one service, conditioned on `n_m ≤ ⌈N_m⌉` by rejection. An
//! unmasked rider of pair `k` is then infected with probability
//! `1 − exp(−Σ_m n_m a_km)`.

use rand::distr::weighted::WeightedIndex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

use crate::demand::OdPair;
use crate::exec::Exec;
use crate::risk::{EvalParams, RiskError, RiskModel};

const CHUNK: u64 = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McEstimate {
    pub pair: OdPair,
    /// Analytic `P_nm`.
    pub analytic: f64,
    pub simulated: f64,
    pub std_error: f64,
    pub infected: u64,
    pub cycles: u64,
}

impl McEstimate {
    /// `|simulated − analytic|` in standard errors.
    pub fn z_score(&self) -> f64 {
        let d = (self.simulated - self.analytic).abs();
        if self.std_error > 0.0 {
            d / self.std_error
        } else if d == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    }
}

struct Target {
    /// `(source index into the sampled groups, exponent)`.
    sources: Vec<(usize, f64)>,
}

/// Simulates `cycles` trips of car `car` of `service` and estimates the
/// unmasked attack rate of each pair in `pairs`. Chunks of cycles use
/// independent ChaCha8 streams of `seed`, so the result does not depend on
/// `exec`.
#[allow(clippy::too_many_arguments)]
pub fn simulate_attack_rates(
    model: &RiskModel,
    service: &str,
    car: usize,
    pairs: &[OdPair],
    params: &EvalParams,
    cycles: u64,
    seed: u64,
    exec: Exec,
) -> Result<Vec<McEstimate>, RiskError> {
    let analytic = pairs
        .iter()
        .map(|&p| model.p_infect_od(service, car, p, params).map(|(_, nm)| nm))
        .collect::<Result<Vec<_>, _>>()?;
    if cycles == 0 {
        return Err(RiskError::InvalidParam("cycles must be positive".into()));
    }
    let block = model
        .blocks
        .iter()
        .find(|b| b.service.label == service)
        .expect("checked by p_infect_od");
    let class = model.car_class[car];

    // sampled groups: every source that interacts with some target
    let mut group_of = vec![usize::MAX; block.pairs.len()];
    let mut lambdas = Vec::new();
    let mut bounds = Vec::new();
    let mut targets = Vec::new();
    for pair in pairs {
        let k = block.pairs.iter().position(|p| p == pair).expect("checked by p_infect_od");
        let mut sources = Vec::new();
        for it in &block.interactions[k] {
            if group_of[it.source] == usize::MAX {
                let load = model.car_load(block, class, it.source, params.b);
                group_of[it.source] = lambdas.len();
                lambdas.push(load * model.rate_of(block, it.source, params));
                bounds.push(load.ceil() as u64);
            }
            sources.push((group_of[it.source], params.viral.unmasked * it.unit));
        }
        targets.push(Target { sources });
    }
    let total: f64 = lambdas.iter().sum();

    let chunks: Vec<(u64, u64)> = (0..cycles.div_ceil(CHUNK))
        .map(|c| (c, CHUNK.min(cycles - c * CHUNK)))
        .collect();
    let counts = exec.map(&chunks, |&(stream, n)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(stream);
        simulate_chunk(&mut rng, n, total, &lambdas, &bounds, &targets)
    });

    let mut infected = vec![0u64; pairs.len()];
    for chunk in counts {
        for (acc, c) in infected.iter_mut().zip(chunk) {
            *acc += c;
        }
    }
    Ok(pairs
        .iter()
        .zip(analytic)
        .zip(infected)
        .map(|((&pair, analytic), hits)| {
            let p = hits as f64 / cycles as f64;
            McEstimate {
                pair,
                analytic,
                simulated: p,
                std_error: (p * (1.0 - p) / cycles as f64).sqrt(),
                infected: hits,
                cycles,
            }
        })
        .collect())
}

fn simulate_chunk(
    rng: &mut ChaCha8Rng,
    cycles: u64,
    total: f64,
    lambdas: &[f64],
    bounds: &[u64],
    targets: &[Target],
) -> Vec<u64> {
    let mut infected = vec![0u64; targets.len()];
    if total <= 0.0 {
        return infected;
    }
    // total carriers are Poisson; each lands in a group in proportion to its rate
    let count = Poisson::new(total).expect("positive rate");
    let pick = WeightedIndex::new(lambdas).expect("positive total weight");
    let mut carriers = vec![0u64; lambdas.len()];
    let mut touched = Vec::new();
    for _ in 0..cycles {
        // independent per-group bounds, so rejecting whole draws conditions
        // each group separately
        loop {
            for g in touched.drain(..) {
                carriers[g] = 0;
            }
            let n = count.sample(rng) as u64;
            let mut ok = true;
            for _ in 0..n {
                let g = pick.sample(rng);
                if carriers[g] == 0 {
                    touched.push(g);
                }
                carriers[g] += 1;
                ok &= carriers[g] <= bounds[g];
            }
            if ok {
                break;
            }
        }
        if touched.is_empty() {
            continue;
        }
        for (t, hits) in targets.iter().zip(infected.iter_mut()) {
            let dose: f64 = t.sources.iter().map(|&(g, a)| carriers[g] as f64 * a).sum();
            if dose > 0.0 && rng.random::<f64>() < -(-dose).exp_m1() {
                *hits += 1;
            }
        }
    }
    infected
}
