use serde::{Deserialize, Serialize};

use super::params::{InfectionRates, MetaParams, ScalingFactors, ViralLoad, VirusEnv};
use super::wells_riley::{blend, log_survival, truncation_tail};
use super::RiskError;
use crate::demand::{train_loads, OdDemand, OdPair, Service, ServicePlan};
use crate::exec::Exec;
use crate::topology::LineTopology;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct RiskOptions {
    /// Count only non-carriers as susceptible: `D · (1 − π)`.
    #[serde(default)]
    pub susceptible_excludes_carriers: bool,
}

/// Everything that varies between evaluations of one base case.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalParams {
    pub viral: ViralLoad,
    /// Passenger-load multiplier applied to every base load.
    pub b: f64,
    pub mask_fraction: f64,
    /// Replaces the base rate field with one uniform rate.
    pub uniform_rate: Option<f64>,
}

impl EvalParams {
    pub fn from_factors(factors: &ScalingFactors, env: &VirusEnv) -> Result<Self, RiskError> {
        Ok(EvalParams {
            viral: ViralLoad::from_factors(factors, env)?,
            b: super::params::meta_b(factors),
            mask_fraction: env.mask_fraction,
            uniform_rate: None,
        })
    }

    pub fn from_meta(meta: MetaParams, env: &VirusEnv) -> Result<Self, RiskError> {
        Ok(EvalParams {
            viral: ViralLoad::from_meta(meta.a, env.inhale_penetration)?,
            b: meta.b,
            mask_fraction: env.mask_fraction,
            uniform_rate: None,
        })
    }

    fn validate(&self) -> Result<(), RiskError> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(self.viral.masked) || !ok(self.viral.unmasked) {
            return Err(RiskError::InvalidParam(format!("viral load {:?}", self.viral)));
        }
        if !ok(self.b) {
            return Err(RiskError::InvalidParam(format!("B must be non-negative, got {}", self.b)));
        }
        if !(0.0..=1.0).contains(&self.mask_fraction) {
            return Err(RiskError::InvalidParam(format!(
                "mask_fraction must lie in [0, 1], got {}",
                self.mask_fraction
            )));
        }
        if let Some(r) = self.uniform_rate {
            if !(0.0..=1.0).contains(&r) {
                return Err(RiskError::InvalidParam(format!("rate must lie in [0, 1], got {r}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct Interaction {
    pub source: usize,
    /// Base exposure unit `p q° t° / Q°` shared with the source group.
    pub unit: f64,
}

#[derive(Debug, Clone)]
pub(crate) struct ServiceBlock {
    pub service: Service,
    pub pairs: Vec<OdPair>,
    pub base_load: Vec<f64>,
    pub rates: Vec<f64>,
    /// Canonically ordered by source pair.
    pub interactions: Vec<Vec<Interaction>>,
}

#[derive(Debug, Clone)]
pub(crate) struct CarClass {
    pub share: f64,
}

/// One row of a report: riders of one OD pair in one car of one service.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OdRisk {
    pub service: String,
    pub car: usize,
    pub origin: String,
    pub destination: String,
    /// Susceptible riders per trip.
    pub susceptible: f64,
    pub p_masked: f64,
    pub p_unmasked: f64,
    pub expected_infections: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupRisk {
    pub label: String,
    pub susceptible: f64,
    pub expected_infections: f64,
    pub probability: f64,
}

/// System-level figures for one evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SystemRisk {
    /// Expected infections over susceptible riders, per service cycle.
    pub probability: f64,
    /// Demand-weighted mean of `P_m`.
    pub probability_masked: f64,
    /// Demand-weighted mean of `P_nm`.
    pub probability_unmasked: f64,
    pub expected_infections: f64,
    pub susceptible: f64,
    /// Largest Poisson mass dropped by truncating a carrier sum.
    pub max_truncation_tail: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RiskReport {
    pub system_p: f64,
    pub system_p_per_1000: f64,
    pub system_r: f64,
    pub system: SystemRisk,
    pub viral_load: ViralLoad,
    pub b: f64,
    pub mask_fraction: f64,
    pub services: Vec<GroupRisk>,
    pub cars: Vec<GroupRisk>,
    pub od: Vec<OdRisk>,
}

/// Demand-weighted aggregation of report rows, in row order.
pub fn system_risk(rows: &[OdRisk]) -> Result<(f64, f64), RiskError> {
    let mut r = 0.0;
    let mut d = 0.0;
    for row in rows {
        r += row.expected_infections;
        d += row.susceptible;
    }
    if d <= 0.0 {
        return Err(RiskError::EmptyDemand);
    }
    Ok((r / d, r))
}

/// Precomputed base case: loads, carrier rates and pairwise exposure units
/// per service. Evaluations vary only viral load, load multiplier, mask
/// share and (optionally) a uniform rate.
#[derive(Debug, Clone)]
pub struct RiskModel {
    pub(crate) blocks: Vec<ServiceBlock>,
    pub(crate) classes: Vec<CarClass>,
    pub(crate) car_class: Vec<usize>,
    station_ids: Vec<String>,
    env: VirusEnv,
    options: RiskOptions,
    tasks: Vec<(usize, usize, usize)>,
}

impl RiskModel {
    pub fn new(
        topo: &LineTopology,
        demand: &OdDemand,
        plan: &ServicePlan,
        env: &VirusEnv,
        rates: &InfectionRates,
        options: RiskOptions,
    ) -> Result<Self, RiskError> {
        env.validate()?;
        rates.validate()?;
        let dose = env.dose_per_carrier_hour();
        let mut blocks = Vec::new();
        for load in train_loads(demand, plan, topo)? {
            let entries: Vec<(OdPair, f64)> =
                load.loads.iter().filter(|(_, &n)| n > 0.0).map(|(&k, &v)| (k, v)).collect();
            let pairs: Vec<OdPair> = entries.iter().map(|e| e.0).collect();
            let base_load = entries.iter().map(|e| e.1).collect();
            let rates = pairs
                .iter()
                .map(|&p| rates.rate_for(topo, p))
                .collect::<Result<Vec<_>, _>>()?;
            let paths = pairs
                .iter()
                .map(|p| topo.path(p.origin, p.destination))
                .collect::<Result<Vec<_>, _>>()?;
            let interactions = paths
                .iter()
                .map(|target| {
                    paths
                        .iter()
                        .enumerate()
                        .filter_map(|(m, source)| {
                            crate::topology::common_segment(target, source).map(|seg| Interaction {
                                source: m,
                                unit: dose * topo.ride_time(&seg),
                            })
                        })
                        .collect()
                })
                .collect();
            blocks.push(ServiceBlock {
                service: load.service,
                pairs,
                base_load,
                rates,
                interactions,
            });
        }

        // cars with bitwise-equal shares give identical rows; evaluate once
        let mut classes: Vec<CarClass> = Vec::new();
        let mut car_class = Vec::with_capacity(plan.car_shares.len());
        for &share in &plan.car_shares {
            let idx = match classes.iter().position(|c| c.share.to_bits() == share.to_bits()) {
                Some(i) => i,
                None => {
                    classes.push(CarClass { share });
                    classes.len() - 1
                }
            };
            car_class.push(idx);
        }

        let mut tasks = Vec::new();
        for (bi, block) in blocks.iter().enumerate() {
            for ci in 0..classes.len() {
                for k in 0..block.pairs.len() {
                    tasks.push((bi, ci, k));
                }
            }
        }

        Ok(RiskModel {
            blocks,
            classes,
            car_class,
            station_ids: topo.stations().iter().map(|s| s.id.clone()).collect(),
            env: *env,
            options,
            tasks,
        })
    }

    pub fn env(&self) -> &VirusEnv {
        &self.env
    }

    pub fn cars(&self) -> usize {
        self.car_class.len()
    }

    pub fn service_labels(&self) -> Vec<&str> {
        self.blocks.iter().map(|b| b.service.label.as_str()).collect()
    }

    pub(crate) fn rate_of(&self, block: &ServiceBlock, m: usize, params: &EvalParams) -> f64 {
        params.uniform_rate.unwrap_or(block.rates[m])
    }

    pub(crate) fn car_load(&self, block: &ServiceBlock, class: usize, m: usize, b: f64) -> f64 {
        b * (self.classes[class].share * block.base_load[m])
    }

    /// `(P_m, P_nm)` of riders of pair `k` in cars of class `class`.
    fn probabilities(&self, bi: usize, class: usize, k: usize, params: &EvalParams) -> (f64, f64) {
        let block = &self.blocks[bi];
        let same = params.viral.masked == params.viral.unmasked;
        let mut log_m = 0.0;
        let mut log_nm = 0.0;
        for it in &block.interactions[k] {
            let load = self.car_load(block, class, it.source, params.b);
            let rate = self.rate_of(block, it.source, params);
            log_nm += log_survival(load, rate, params.viral.unmasked * it.unit);
            if !same {
                log_m += log_survival(load, rate, params.viral.masked * it.unit);
            }
        }
        if same {
            log_m = log_nm;
        }
        (-log_m.exp_m1(), -log_nm.exp_m1())
    }

    fn cells(&self, params: &EvalParams, exec: Exec) -> Vec<(f64, f64)> {
        exec.map(&self.tasks, |&(bi, ci, k)| self.probabilities(bi, ci, k, params))
    }

    fn cell_index(&self, bi: usize, class: usize, k: usize) -> usize {
        let before: usize = self.blocks[..bi].iter().map(|b| b.pairs.len()).sum::<usize>() * self.classes.len();
        before + class * self.blocks[bi].pairs.len() + k
    }

    fn max_tail(&self, params: &EvalParams) -> f64 {
        let mut worst = 0.0f64;
        for block in &self.blocks {
            for class in 0..self.classes.len() {
                for m in 0..block.pairs.len() {
                    let load = self.car_load(block, class, m, params.b);
                    worst = worst.max(truncation_tail(load, self.rate_of(block, m, params)));
                }
            }
        }
        worst
    }

    /// Walks rows in canonical (service, car, pair) order. Totals are summed
    /// in that order so every caller sees the same bits.
    fn assemble(
        &self,
        params: &EvalParams,
        cells: &[(f64, f64)],
        mut rows: Option<&mut Vec<OdRisk>>,
    ) -> Result<(SystemRisk, Vec<GroupRisk>, Vec<GroupRisk>), RiskError> {
        let f_m = params.mask_fraction;
        let mut total_r = 0.0;
        let mut total_d = 0.0;
        let mut total_m = 0.0;
        let mut total_nm = 0.0;
        let mut services = Vec::with_capacity(self.blocks.len());
        let mut cars: Vec<(f64, f64)> = vec![(0.0, 0.0); self.cars()];
        for (bi, block) in self.blocks.iter().enumerate() {
            let (mut sr, mut sd) = (0.0, 0.0);
            for (car, &class) in self.car_class.iter().enumerate() {
                for k in 0..block.pairs.len() {
                    let (p_m, p_nm) = cells[self.cell_index(bi, class, k)];
                    let mut d = self.car_load(block, class, k, params.b);
                    if self.options.susceptible_excludes_carriers {
                        d *= 1.0 - self.rate_of(block, k, params);
                    }
                    let r = blend(d, f_m, p_m, p_nm);
                    total_r += r;
                    total_d += d;
                    total_m += p_m * d;
                    total_nm += p_nm * d;
                    sr += r;
                    sd += d;
                    cars[car].0 += r;
                    cars[car].1 += d;
                    if let Some(rows) = rows.as_deref_mut() {
                        let pair = block.pairs[k];
                        rows.push(OdRisk {
                            service: block.service.label.clone(),
                            car,
                            origin: self.station_ids[pair.origin.index()].clone(),
                            destination: self.station_ids[pair.destination.index()].clone(),
                            susceptible: d,
                            p_masked: p_m,
                            p_unmasked: p_nm,
                            expected_infections: r,
                        });
                    }
                }
            }
            services.push(GroupRisk {
                label: block.service.label.clone(),
                susceptible: sd,
                expected_infections: sr,
                probability: if sd > 0.0 { sr / sd } else { 0.0 },
            });
        }
        if total_d <= 0.0 {
            return Err(RiskError::EmptyDemand);
        }
        let cars = cars
            .into_iter()
            .enumerate()
            .map(|(c, (r, d))| GroupRisk {
                label: format!("car {}", c + 1),
                susceptible: d,
                expected_infections: r,
                probability: if d > 0.0 { r / d } else { 0.0 },
            })
            .collect();
        let system = SystemRisk {
            probability: total_r / total_d,
            probability_masked: total_m / total_d,
            probability_unmasked: total_nm / total_d,
            expected_infections: total_r,
            susceptible: total_d,
            max_truncation_tail: self.max_tail(params),
        };
        Ok((system, services, cars))
    }

    /// System-level figures only; cheaper than a full report.
    pub fn system(&self, params: &EvalParams, exec: Exec) -> Result<SystemRisk, RiskError> {
        params.validate()?;
        let cells = self.cells(params, exec);
        Ok(self.assemble(params, &cells, None)?.0)
    }

    /// System figures plus per-service and per-car aggregates.
    pub fn breakdown(
        &self,
        params: &EvalParams,
        exec: Exec,
    ) -> Result<(SystemRisk, Vec<GroupRisk>, Vec<GroupRisk>), RiskError> {
        params.validate()?;
        let cells = self.cells(params, exec);
        self.assemble(params, &cells, None)
    }

    pub fn evaluate(&self, params: &EvalParams, exec: Exec) -> Result<RiskReport, RiskError> {
        params.validate()?;
        let cells = self.cells(params, exec);
        let mut rows = Vec::with_capacity(cells.len());
        let (system, services, cars) = self.assemble(params, &cells, Some(&mut rows))?;
        Ok(RiskReport {
            system_p: system.probability,
            system_p_per_1000: system.probability * 1000.0,
            system_r: system.expected_infections,
            system,
            viral_load: params.viral,
            b: params.b,
            mask_fraction: params.mask_fraction,
            services,
            cars,
            od: rows,
        })
    }

    /// Evaluates the base case scaled by `factors`.
    pub fn evaluate_factors(&self, factors: &ScalingFactors, exec: Exec) -> Result<RiskReport, RiskError> {
        self.evaluate(&EvalParams::from_factors(factors, &self.env)?, exec)
    }

    /// Evaluates the base case at meta-parameters `(A, B)`.
    pub fn risk_with_meta(&self, meta: MetaParams, exec: Exec) -> Result<RiskReport, RiskError> {
        self.evaluate(&EvalParams::from_meta(meta, &self.env)?, exec)
    }

    /// `(P_m, P_nm)` for riders of `pair` in car `car` of `service`.
    pub fn p_infect_od(
        &self,
        service: &str,
        car: usize,
        pair: OdPair,
        params: &EvalParams,
    ) -> Result<(f64, f64), RiskError> {
        params.validate()?;
        let bi = self
            .blocks
            .iter()
            .position(|b| b.service.label == service)
            .ok_or_else(|| RiskError::InvalidParam(format!("no service `{service}`")))?;
        let class = *self
            .car_class
            .get(car)
            .ok_or_else(|| RiskError::InvalidParam(format!("no car {car}")))?;
        let k = self.blocks[bi]
            .pairs
            .iter()
            .position(|&p| p == pair)
            .ok_or_else(|| RiskError::InvalidParam(format!("pair not carried by `{service}`")))?;
        Ok(self.probabilities(bi, class, k, params))
    }

    /// Demand-weighted mean carrier rate; a uniform field with this value has
    /// the same expected number of carriers as the model's own field.
    pub fn equivalent_uniform_rate(&self) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for block in &self.blocks {
            for (load, rate) in block.base_load.iter().zip(&block.rates) {
                num += load * rate;
                den += load;
            }
        }
        if den > 0.0 {
            num / den
        } else {
            0.0
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::risk::wells_riley::survival_term;
    use crate::topology::tests::{forked, line};

    fn single_pair_model(rate_per_hour: f64, pi: f64) -> (LineTopology, RiskModel) {
        let topo = line(&["a", "b"], &[0.25]);
        let demand = OdDemand::from_rates(&topo, [("a", "b", rate_per_hour)]).unwrap();
        let plan = ServicePlan::new(0.1, 0.05, vec![1.0], "").unwrap();
        let model = RiskModel::new(
            &topo,
            &demand,
            &plan,
            &VirusEnv::default(),
            &InfectionRates::Uniform(pi),
            RiskOptions::default(),
        )
        .unwrap();
        (topo, model)
    }

    #[test]
    fn one_pair_reduces_to_one_survival_term() {
        let (topo, model) = single_pair_model(50.0, 0.02);
        let pair = OdPair::new(topo.lookup("a").unwrap(), topo.lookup("b").unwrap());
        let params = EvalParams::from_factors(&ScalingFactors::default(), model.env()).unwrap();
        let (_, p_nm) = model.p_infect_od("single", 0, pair, &params).unwrap();
        let env = VirusEnv::default();
        let a = env.breathing_rate * env.quanta_rate * 0.25 / env.ventilation;
        let expected = 1.0 - survival_term(5.0, 0.02, a).unwrap();
        assert!((p_nm - expected).abs() < 1e-15);
    }

    #[test]
    fn mask_free_collapse() {
        let topo = forked();
        let demand =
            OdDemand::from_rates(&topo, [("t0", "b1", 80.0), ("t0", "t1", 40.0), ("t1", "a0", 30.0)])
                .unwrap();
        let plan = ServicePlan::even(0.15, 2).unwrap();
        let env = VirusEnv { inhale_penetration: 1.0, ..VirusEnv::default() };
        let model =
            RiskModel::new(&topo, &demand, &plan, &env, &InfectionRates::Uniform(0.01), RiskOptions::default())
                .unwrap();
        let report = model.evaluate_factors(&ScalingFactors::default(), Exec::Serial).unwrap();
        for row in &report.od {
            assert_eq!(row.p_masked, row.p_unmasked);
        }
    }

    #[test]
    fn report_invariants() {
        let topo = forked();
        let demand =
            OdDemand::from_rates(&topo, [("t0", "b1", 80.0), ("t0", "t1", 40.0), ("t1", "a0", 30.0)])
                .unwrap();
        let plan = ServicePlan::new(0.15, 0.05, vec![0.2, 0.5, 0.3], "").unwrap();
        let env = VirusEnv { mask_fraction: 0.4, ..VirusEnv::default() };
        let model =
            RiskModel::new(&topo, &demand, &plan, &env, &InfectionRates::Uniform(0.05), RiskOptions::default())
                .unwrap();
        let report = model.evaluate_factors(&ScalingFactors::default(), Exec::Parallel).unwrap();
        // a0 riders only ride A trains, b1 riders only B trains
        assert_eq!(report.od.len(), (2 + 2) * 3);
        for row in &report.od {
            assert!((0.0..=1.0).contains(&row.p_masked));
            assert!(row.p_masked <= row.p_unmasked);
            assert!(row.expected_infections <= row.susceptible);
        }
        let (p, r) = system_risk(&report.od).unwrap();
        assert_eq!(p, report.system_p);
        assert_eq!(r, report.system_r);
        assert!((report.system_p * report.system.susceptible - report.system_r).abs() < 1e-12);
        let serial = model.evaluate_factors(&ScalingFactors::default(), Exec::Serial).unwrap();
        assert_eq!(serial, report);
    }

    #[test]
    fn zero_rate_and_zero_load_give_zero_risk() {
        let (_, model) = single_pair_model(50.0, 0.0);
        let r = model.evaluate_factors(&ScalingFactors::default(), Exec::Serial).unwrap();
        assert_eq!(r.system_p, 0.0);
        let (_, model) = single_pair_model(50.0, 0.02);
        let r = model.risk_with_meta(MetaParams { a: 0.0, b: 1.0 }, Exec::Serial).unwrap();
        assert_eq!(r.system_p, 0.0);
        assert_eq!(
            model.risk_with_meta(MetaParams { a: 0.5, b: 0.0 }, Exec::Serial),
            Err(RiskError::EmptyDemand)
        );
    }

    #[test]
    fn two_equal_groups_average() {
        assert_eq!(
            system_risk(&[
                OdRisk {
                    service: "s".into(),
                    car: 0,
                    origin: "a".into(),
                    destination: "b".into(),
                    susceptible: 10.0,
                    p_masked: 0.0,
                    p_unmasked: 0.002,
                    expected_infections: 0.02,
                },
                OdRisk {
                    service: "s".into(),
                    car: 0,
                    origin: "a".into(),
                    destination: "c".into(),
                    susceptible: 10.0,
                    p_masked: 0.0,
                    p_unmasked: 0.004,
                    expected_infections: 0.04,
                },
            ])
            .map(|(p, _)| (p * 1e6).round() / 1e6)
            .unwrap(),
            0.003
        );
        assert_eq!(system_risk(&[]), Err(RiskError::EmptyDemand));
    }
}
