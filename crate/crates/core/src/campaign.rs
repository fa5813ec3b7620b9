//! Monte-Carlo campaigns.
//!
//! A campaign draws `num_setups` independent network setups. Within each,
//! the channel realizations are split into fixed-size chunks that are
//! evaluated in parallel and merged in chunk order, so results do not depend
//! on the number of threads.
//!
//! DL precoders need `E{‖D_i v_i‖²}` (or `E{‖v_il‖²}` per AP) before any
//! DL term can be accumulated. These expectations come from a first pass
//! over the same realizations; MR uses the exact value `E{‖ĥ_il‖²}`.

use std::ops::Range;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ProcessingMode, Scheme, SimulationConfig};
use crate::dcc::{assignment_for, compute_partners, ClusterAssignment};
use crate::error::{Error, Result};
use crate::estimation::{despread_pilots, estimate_all, EstimationStats};
use crate::performance::{
    cross_gains, dl_hardening_samples, genie_sinrs, instantaneous_sinrs, ul_hardening_samples,
    HardeningAccumulator, LogAccumulator, SeValue,
};
use crate::power::{dl_centralized_equal, dl_distributed_proportional, ul_full_power};
use crate::processing::{compute_combiners, NormAccumulator, ProcessingPlan};
use crate::report::{AssignmentSummary, Direction, SeReport, SeRow};
use crate::rng::{realization_stream, setup_stream};
use crate::topology::{sample_channel, ChannelRealization, Topology};

/// Realizations per work item.
pub const CHUNK_LEN: usize = 32;

/// One realization: true channels and their MMSE estimates.
pub struct Draw {
    pub channel: ChannelRealization,
    pub estimate: ChannelRealization,
}

/// Everything about a setup that is fixed across its realizations.
pub struct SetupState {
    pub index: usize,
    pub seed: u64,
    pub topology: Topology,
    pub assignment: ClusterAssignment,
    pub partners: Vec<Vec<usize>>,
    pub stats: EstimationStats,
}

impl SetupState {
    /// Topology, clusters and estimation statistics of setup `index`.
    pub fn build(cfg: &SimulationConfig, index: usize) -> Result<Self> {
        let mut rng = setup_stream(cfg.seed, index);
        let topology = Topology::generate(cfg, &mut rng)?;
        let assignment = assignment_for(cfg, &topology.large_scale)?;
        let partners = compute_partners(&assignment);
        let power = ul_full_power(cfg.network.num_ues, cfg.power.ue_power_w);
        let stats = EstimationStats::new(&topology, &assignment, &power, cfg.ul_noise())?;
        Ok(SetupState {
            index,
            seed: cfg.seed,
            topology,
            assignment,
            partners,
            stats,
        })
    }

    pub fn plan(&self) -> ProcessingPlan<'_> {
        ProcessingPlan::new(&self.assignment, &self.partners, &self.stats)
    }

    /// Realization `r`: channels first, then pilot noise, from the same
    /// stream.
    pub fn draw(&self, r: usize) -> Draw {
        let mut rng = realization_stream(self.seed, self.index, r);
        let channel = sample_channel(&self.topology, &mut rng);
        let y = despread_pilots(&channel, &self.stats, &mut rng);
        let estimate = estimate_all(&y, &self.stats);
        Draw { channel, estimate }
    }

    pub fn summary(&self) -> AssignmentSummary {
        AssignmentSummary::new(self.index, &self.assignment, &self.partners)
    }
}

fn chunks(range: Range<usize>) -> Vec<Range<usize>> {
    let mut out = Vec::new();
    let mut start = range.start;
    while start < range.end {
        let end = (start + CHUNK_LEN).min(range.end);
        out.push(start..end);
        start = end;
    }
    out
}

/// Accumulated terms of one scheme.
#[derive(Debug, Clone, PartialEq)]
pub struct SchemeAccumulator {
    pub scheme: Scheme,
    pub ul_log: Option<LogAccumulator>,
    pub ul_hardening: Option<HardeningAccumulator>,
    pub dl_hardening: Option<HardeningAccumulator>,
    pub genie: Option<LogAccumulator>,
}

impl SchemeAccumulator {
    fn merge(&mut self, other: &SchemeAccumulator) {
        fn m<T, F: Fn(&mut T, &T)>(a: &mut Option<T>, b: &Option<T>, f: F) {
            if let (Some(a), Some(b)) = (a.as_mut(), b.as_ref()) {
                f(a, b);
            }
        }
        m(&mut self.ul_log, &other.ul_log, LogAccumulator::merge);
        m(&mut self.ul_hardening, &other.ul_hardening, HardeningAccumulator::merge);
        m(&mut self.dl_hardening, &other.dl_hardening, HardeningAccumulator::merge);
        m(&mut self.genie, &other.genie, LogAccumulator::merge);
    }
}

/// Accumulators of all schemes of a setup; merge by [`Accumulators::merge`].
#[derive(Debug, Clone, PartialEq)]
pub struct Accumulators {
    pub schemes: Vec<SchemeAccumulator>,
}

impl Accumulators {
    pub fn merge(&mut self, other: &Accumulators) {
        for (a, b) in self.schemes.iter_mut().zip(&other.schemes) {
            a.merge(b);
        }
    }
}

/// Per-UE results of one scheme in one setup.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SchemeResult {
    pub scheme: Scheme,
    pub ul: Vec<SeValue>,
    pub dl: Vec<SeValue>,
    pub genie: Option<Vec<SeValue>>,
}

/// Evaluates the configured schemes on one setup.
pub struct SetupEvaluator<'c> {
    cfg: &'c SimulationConfig,
    pub state: SetupState,
    // per scheme, precoder scales c_il (row-major K × L); None until prepared
    scales: Vec<Option<Vec<f64>>>,
}

impl<'c> SetupEvaluator<'c> {
    pub fn new(cfg: &'c SimulationConfig, index: usize) -> Result<Self> {
        let state = SetupState::build(cfg, index)?;
        Ok(SetupEvaluator {
            cfg,
            state,
            scales: vec![None; cfg.schemes.len()],
        })
    }

    fn ul_active(&self) -> bool {
        self.cfg.frame.ul_data_len > 0
    }

    fn dl_active(&self) -> bool {
        self.cfg.frame.dl_data_len > 0
    }

    /// Computes the DL precoder scales, running the normalization pass over
    /// `realizations` for every scheme other than MR.
    pub fn prepare_precoders(&mut self, realizations: Range<usize>) -> Result<()> {
        if !self.dl_active() {
            return Ok(());
        }
        let k_count = self.state.assignment.num_ues();
        let l_count = self.state.assignment.num_aps();
        let needs_pass: Vec<Scheme> = self.cfg.schemes.iter().copied().filter(|&s| s != Scheme::Mr).collect();
        let norms = if needs_pass.is_empty() {
            Vec::new()
        } else {
            let state = &self.state;
            let plan = state.plan();
            let parts = chunks(realizations)
                .into_par_iter()
                .map(|range| {
                    let mut acc: Vec<NormAccumulator> =
                        needs_pass.iter().map(|_| NormAccumulator::new(k_count, l_count)).collect();
                    for r in range {
                        let draw = state.draw(r);
                        for (j, &s) in needs_pass.iter().enumerate() {
                            let comb = compute_combiners(s, &plan, &draw.estimate);
                            acc[j].add(&comb, &state.assignment);
                        }
                    }
                    acc
                })
                .collect::<Vec<_>>();
            let mut total: Vec<NormAccumulator> =
                needs_pass.iter().map(|_| NormAccumulator::new(k_count, l_count)).collect();
            for p in &parts {
                for (t, a) in total.iter_mut().zip(p) {
                    t.merge(a);
                }
            }
            total
        };

        let a = &self.state.assignment;
        let stats = &self.state.stats;
        let rho_central = dl_centralized_equal(k_count, self.cfg.power.ap_power_w, self.cfg.frame.pilot_len);
        let rho_local = dl_distributed_proportional(a, &self.state.topology.large_scale, self.cfg.power.ap_power_w);
        let mut pass_index = 0;
        for (j, &scheme) in self.cfg.schemes.iter().enumerate() {
            let norm = if scheme == Scheme::Mr {
                None
            } else {
                pass_index += 1;
                Some(&norms[pass_index - 1])
            };
            let mut scale = vec![0.0; k_count * l_count];
            for i in 0..k_count {
                match self.cfg.mode {
                    ProcessingMode::Centralized => {
                        let e = match norm {
                            Some(n) => n.collective_mean(i)?,
                            None => a.serving_aps(i).iter().map(|&l| stats.estimate_power(i, l)).sum(),
                        };
                        if !(e > 0.0) {
                            return Err(Error::DegeneratePrecoder { ue: i });
                        }
                        let c = (rho_central[i] / e).sqrt();
                        for &l in a.serving_aps(i) {
                            scale[i * l_count + l] = c;
                        }
                    }
                    ProcessingMode::Distributed => {
                        for &l in a.serving_aps(i) {
                            let e = match norm {
                                Some(n) => n.per_ap_mean(i, l),
                                None => stats.estimate_power(i, l),
                            };
                            let r = rho_local[i * l_count + l];
                            if r > 0.0 && !(e > 0.0) {
                                return Err(Error::DegeneratePrecoder { ue: i });
                            }
                            if r > 0.0 {
                                scale[i * l_count + l] = (r / e).sqrt();
                            }
                        }
                    }
                }
            }
            self.scales[j] = Some(scale);
        }
        Ok(())
    }

    fn empty_accumulators(&self) -> Accumulators {
        let k = self.state.assignment.num_ues();
        let central = self.cfg.mode == ProcessingMode::Centralized;
        let ul = self.ul_active();
        let dl = self.dl_active();
        Accumulators {
            schemes: self
                .cfg
                .schemes
                .iter()
                .map(|&scheme| SchemeAccumulator {
                    scheme,
                    ul_log: (ul && central).then(|| LogAccumulator::new(k)),
                    ul_hardening: (ul && !central).then(|| HardeningAccumulator::new(k)),
                    dl_hardening: dl.then(|| HardeningAccumulator::new(k)),
                    genie: (dl && self.cfg.genie).then(|| LogAccumulator::new(k)),
                })
                .collect(),
        }
    }

    fn accumulate_chunk(&self, plan: &ProcessingPlan, range: Range<usize>) -> Result<Accumulators> {
        let mut acc = self.empty_accumulators();
        let a = &self.state.assignment;
        let p = self.state.stats.ue_power();
        let k_count = a.num_ues();
        let ul_noise = self.cfg.ul_noise();
        let dl_noise = self.cfg.dl_noise();
        for r in range {
            let draw = self.state.draw(r);
            for (j, sa) in acc.schemes.iter_mut().enumerate() {
                let comb = compute_combiners(sa.scheme, plan, &draw.estimate);
                if let Some(log) = sa.ul_log.as_mut() {
                    let sinr = instantaneous_sinrs(&comb, plan, &draw.estimate);
                    if sinr.iter().any(|s| !s.is_finite()) {
                        return Err(Error::Numeric("non-finite instantaneous SINR".into())
                            .at_realization(self.state.index, r));
                    }
                    log.add(&sinr);
                }
                if let Some(h) = sa.ul_hardening.as_mut() {
                    let g = cross_gains(&comb.v, &draw.channel, a, None);
                    let (s, q) = ul_hardening_samples(&g, &comb, a, p, ul_noise);
                    h.add(&s, &q);
                }
                if sa.dl_hardening.is_some() {
                    let scale = self.scales[j].as_ref().ok_or_else(|| {
                        Error::Numeric("DL precoders used before normalization".into())
                    })?;
                    let g = cross_gains(&comb.v, &draw.channel, a, Some(scale));
                    let (s, q) = dl_hardening_samples(&g, k_count);
                    sa.dl_hardening.as_mut().unwrap().add(&s, &q);
                    if let Some(genie) = sa.genie.as_mut() {
                        genie.add(&genie_sinrs(&g, k_count, dl_noise));
                    }
                }
            }
        }
        Ok(acc)
    }

    /// Accumulates the given realizations (in parallel, merged in order).
    pub fn accumulate(&self, realizations: Range<usize>) -> Result<Accumulators> {
        let plan = self.state.plan();
        let parts = chunks(realizations)
            .into_par_iter()
            .map(|range| self.accumulate_chunk(&plan, range))
            .collect::<Result<Vec<_>>>()?;
        let mut total = self.empty_accumulators();
        for p in &parts {
            total.merge(p);
        }
        Ok(total)
    }

    /// Per-UE SEs from accumulated terms.
    pub fn finish(&self, acc: &Accumulators) -> Result<Vec<SchemeResult>> {
        let k_count = self.state.assignment.num_ues();
        let ul_prelog = self.cfg.frame.ul_prelog();
        let dl_prelog = self.cfg.frame.dl_prelog();
        let p = self.state.stats.ue_power();
        let dl_noise = self.cfg.dl_noise();
        acc.schemes
            .iter()
            .map(|sa| {
                let ul = (0..k_count)
                    .map(|k| {
                        if let Some(log) = &sa.ul_log {
                            Ok(log.se(k, ul_prelog))
                        } else if let Some(h) = &sa.ul_hardening {
                            h.se(k, p[k], 0.0, ul_prelog)
                        } else {
                            Ok(SeValue::ZERO)
                        }
                    })
                    .collect::<Result<Vec<_>>>()?;
                let dl = (0..k_count)
                    .map(|k| match &sa.dl_hardening {
                        Some(h) => h.se(k, 1.0, dl_noise, dl_prelog),
                        None => Ok(SeValue::ZERO),
                    })
                    .collect::<Result<Vec<_>>>()?;
                let genie = sa
                    .genie
                    .as_ref()
                    .map(|g| (0..k_count).map(|k| g.se(k, dl_prelog)).collect());
                Ok(SchemeResult {
                    scheme: sa.scheme,
                    ul,
                    dl,
                    genie,
                })
            })
            .collect::<Result<Vec<_>>>()
            .map_err(|e: Error| e.at_setup(self.state.index))
    }

    /// Normalization pass, accumulation and final SEs over all configured
    /// realizations.
    pub fn run(mut self) -> Result<(AssignmentSummary, Vec<SchemeResult>)> {
        let n = self.cfg.num_realizations;
        self.prepare_precoders(0..n)?;
        let acc = self.accumulate(0..n)?;
        let results = self.finish(&acc)?;
        Ok((self.state.summary(), results))
    }
}

/// Runs all setups of a campaign. Deterministic for a given config.
pub fn run_campaign(cfg: &SimulationConfig) -> Result<SeReport> {
    cfg.validate()?;
    if cfg.num_realizations == 0 {
        return Err(Error::NoRealizations);
    }
    let per_setup = (0..cfg.num_setups)
        .into_par_iter()
        .map(|s| {
            SetupEvaluator::new(cfg, s)
                .map_err(|e| e.at_setup(s))?
                .run()
        })
        .collect::<Result<Vec<_>>>()?;

    let k_count = cfg.network.num_ues;
    let mut rows = Vec::new();
    let mut summaries = Vec::new();
    for (setup, (summary, results)) in per_setup.into_iter().enumerate() {
        summaries.push(summary);
        for res in results {
            let mut push = |direction: Direction, values: &[SeValue]| {
                for (k, v) in values.iter().enumerate() {
                    rows.push(SeRow {
                        ue: setup * k_count + k,
                        setup,
                        scheme: res.scheme,
                        direction,
                        se: v.se,
                        stderr: v.stderr,
                    });
                }
            };
            push(Direction::Ul, &res.ul);
            push(Direction::Dl, &res.dl);
            if let Some(g) = &res.genie {
                push(Direction::DlGenie, g);
            }
        }
    }
    rows.sort_by(|a, b| {
        (a.scheme, a.direction, a.ue).cmp(&(b.scheme, b.direction, b.ue))
    });
    Ok(SeReport {
        config: cfg.clone(),
        fingerprint: cfg.fingerprint(),
        rows,
        assignments: summaries,
    })
}
