//! Named comparison scenarios: scalable schemes against their `(All)`
//! benchmarks on the same random setups.
//!
//! Every scenario runs four campaigns sharing one seed, so setup `s` has
//! the same AP/UE drop and the same channel realizations in all of them:
//!
//! | campaign            | mode        | clusters  | schemes        |
//! |---------------------|-------------|-----------|----------------|
//! | `centralized-all`   | centralized | serve-all | MMSE           |
//! | `centralized-dcc`   | centralized | dcc       | P-MMSE         |
//! | `distributed-all`   | distributed | serve-all | L-MMSE, MR     |
//! | `distributed-dcc`   | distributed | dcc       | LP-MMSE, MR    |
//!
//! Ordering claims are checked with a one-sided sign test on the per-setup
//! mean SE; ratio claims on the mean over all UEs and setups.

use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::campaign::run_campaign;
use crate::config::{
    ChannelModel, ClusterConfig, FrameConfig, NetworkConfig, PowerConfig, ProcessingMode, Scheme,
    SimulationConfig, DEFAULT_NOISE_DBM,
};
use crate::error::{Error, Result};
use crate::report::{emit_results, Direction, SeReport};

/// One-sided significance level of the sign test.
pub const SIGN_TEST_LEVEL: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ScenarioSpec {
    pub name: &'static str,
    pub num_aps: usize,
    pub antennas_per_ap: usize,
    pub num_ues: usize,
    pub area_side_km: f64,
    pub full_scale_only: bool,
    pub setups: usize,
    pub realizations: usize,
}

pub const SCENARIOS: [ScenarioSpec; 4] = [
    ScenarioSpec {
        name: "scaled-i",
        num_aps: 100,
        antennas_per_ap: 1,
        num_ues: 40,
        area_side_km: 1.0,
        full_scale_only: false,
        setups: 20,
        realizations: 500,
    },
    ScenarioSpec {
        name: "scaled-ii",
        num_aps: 25,
        antennas_per_ap: 4,
        num_ues: 40,
        area_side_km: 1.0,
        full_scale_only: false,
        setups: 20,
        realizations: 500,
    },
    ScenarioSpec {
        name: "setup-i",
        num_aps: 400,
        antennas_per_ap: 1,
        num_ues: 100,
        area_side_km: 2.0,
        full_scale_only: true,
        setups: 25,
        realizations: 1000,
    },
    ScenarioSpec {
        name: "setup-ii",
        num_aps: 100,
        antennas_per_ap: 4,
        num_ues: 100,
        area_side_km: 2.0,
        full_scale_only: true,
        setups: 25,
        realizations: 1000,
    },
];

pub fn scenario(name: &str) -> Result<&'static ScenarioSpec> {
    SCENARIOS
        .iter()
        .find(|s| s.name == name)
        .ok_or_else(|| Error::UnknownScenario(name.to_string()))
}

/// Run-size knobs; `None` keeps the scenario default.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ScenarioOptions {
    pub full_scale: bool,
    pub setups: Option<usize>,
    pub realizations: Option<usize>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Campaign {
    CentralizedAll,
    CentralizedDcc,
    DistributedAll,
    DistributedDcc,
}

impl Campaign {
    pub const ALL: [Campaign; 4] = [
        Campaign::CentralizedAll,
        Campaign::CentralizedDcc,
        Campaign::DistributedAll,
        Campaign::DistributedDcc,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Campaign::CentralizedAll => "centralized-all",
            Campaign::CentralizedDcc => "centralized-dcc",
            Campaign::DistributedAll => "distributed-all",
            Campaign::DistributedDcc => "distributed-dcc",
        }
    }

    pub fn mode(self) -> ProcessingMode {
        match self {
            Campaign::CentralizedAll | Campaign::CentralizedDcc => ProcessingMode::Centralized,
            _ => ProcessingMode::Distributed,
        }
    }

    pub fn serve_all(self) -> bool {
        matches!(self, Campaign::CentralizedAll | Campaign::DistributedAll)
    }

    pub fn schemes(self) -> Vec<Scheme> {
        match self {
            Campaign::CentralizedAll => vec![Scheme::Mmse],
            Campaign::CentralizedDcc => vec![Scheme::PMmse],
            Campaign::DistributedAll => vec![Scheme::LMmse, Scheme::Mr],
            Campaign::DistributedDcc => vec![Scheme::LpMmse, Scheme::Mr],
        }
    }
}

impl fmt::Display for Campaign {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl ScenarioSpec {
    /// Campaign config with the common simulation parameters.
    pub fn config(&self, campaign: Campaign, opts: &ScenarioOptions) -> SimulationConfig {
        SimulationConfig {
            seed: opts.seed.unwrap_or(2020),
            num_setups: opts.setups.unwrap_or(self.setups),
            num_realizations: opts.realizations.unwrap_or(self.realizations),
            mode: campaign.mode(),
            schemes: campaign.schemes(),
            genie: !campaign.serve_all(),
            network: NetworkConfig {
                num_aps: self.num_aps,
                antennas_per_ap: self.antennas_per_ap,
                num_ues: self.num_ues,
                area_side_km: self.area_side_km,
                ap_height_m: 10.0,
            },
            frame: FrameConfig {
                pilot_len: 10,
                coherence_len: 200,
                ul_data_len: 95,
                dl_data_len: 95,
            },
            power: PowerConfig {
                ue_power_w: 0.1,
                ap_power_w: 1.0,
                noise_power_w: crate::config::dbm_to_watt(DEFAULT_NOISE_DBM),
                ul_noise_power_w: None,
                dl_noise_power_w: None,
            },
            channel: ChannelModel::default(),
            cluster: ClusterConfig {
                serve_all: campaign.serve_all(),
                ..ClusterConfig::default()
            },
        }
    }
}

/// A scheme evaluated in one campaign, e.g. `MR` in `distributed-dcc`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Column {
    pub campaign: Campaign,
    pub scheme: Scheme,
    pub direction: Direction,
}

impl Column {
    pub fn new(campaign: Campaign, scheme: Scheme, direction: Direction) -> Self {
        Column {
            campaign,
            scheme,
            direction,
        }
    }

    pub fn label(&self) -> String {
        let tag = if self.campaign.serve_all() { " (All)" } else { "" };
        format!("{}{tag} {}", self.scheme, self.direction)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Claim {
    /// `a ≥ b` on the per-setup means, sign test.
    AtLeast(Column, Column),
    /// `lo ≤ mean(num)/mean(den) ≤ hi`.
    Ratio {
        num: Column,
        den: Column,
        lo: f64,
        hi: f64,
    },
    /// `mean(a)/mean(a_ref) > mean(b)/mean(b_ref)` with the ratios
    /// compared per setup, sign test.
    RatioExceeds {
        a: (Column, Column),
        b: (Column, Column),
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyOutcome {
    pub claim: Claim,
    pub description: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ColumnSummary {
    pub column: Column,
    pub label: String,
    pub mean: f64,
    pub setup_means: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ScenarioReport {
    pub name: String,
    pub full_scale: bool,
    pub columns: Vec<ColumnSummary>,
    pub properties: Vec<PropertyOutcome>,
    #[serde(skip)]
    pub campaigns: Vec<(Campaign, SeReport)>,
}

impl ScenarioReport {
    pub fn passed(&self) -> bool {
        self.properties.iter().all(|p| p.passed)
    }

    pub fn column(&self, c: Column) -> Option<&ColumnSummary> {
        self.columns.iter().find(|s| s.column == c)
    }
}

/// Smallest `w` with `P(X ≥ w) ≤ level` for `X ~ Bin(n, 1/2)`, or `None`
/// when even `w = n` is not significant.
pub fn sign_test_threshold(n: usize, level: f64) -> Option<usize> {
    let total = 2f64.powi(n as i32);
    let mut tail = 0.0;
    let mut coef = 1.0;
    let mut best = None;
    for w in (0..=n).rev() {
        if w < n {
            coef *= (w + 1) as f64 / (n - w) as f64;
        }
        tail += coef;
        if tail / total <= level {
            best = Some(w);
        } else {
            break;
        }
    }
    best
}

fn sign_test(wins: usize, n: usize) -> (bool, String) {
    match sign_test_threshold(n, SIGN_TEST_LEVEL) {
        Some(t) => (wins >= t, format!("{wins}/{n} setups (need {t})")),
        None => (false, format!("{wins}/{n} setups (too few setups for the sign test)")),
    }
}

/// Claims checked for a scenario.
pub fn claims(spec: &ScenarioSpec) -> Vec<Claim> {
    use Campaign::*;
    let ul = |c, s| Column::new(c, s, Direction::Ul);
    let mmse = ul(CentralizedAll, Scheme::Mmse);
    let pmmse = ul(CentralizedDcc, Scheme::PMmse);
    let lp = ul(DistributedDcc, Scheme::LpMmse);
    // the UL comparison is against the serve-all MR benchmark
    let mr = ul(DistributedAll, Scheme::Mr);
    let mut out = vec![
        Claim::AtLeast(mmse, pmmse),
        Claim::AtLeast(pmmse, lp),
        Claim::AtLeast(lp, mr),
    ];
    if spec.antennas_per_ap == 1 {
        let dl = |s| Column::new(DistributedDcc, s, Direction::Dl);
        let genie = |s| Column::new(DistributedDcc, s, Direction::DlGenie);
        out.push(Claim::RatioExceeds {
            a: (dl(Scheme::LpMmse), genie(Scheme::LpMmse)),
            b: (dl(Scheme::Mr), genie(Scheme::Mr)),
        });
    }
    if spec.full_scale_only && spec.antennas_per_ap == 1 {
        let cdl = Column::new(CentralizedDcc, Scheme::PMmse, Direction::Dl);
        let cgenie = Column::new(CentralizedDcc, Scheme::PMmse, Direction::DlGenie);
        let ddl = |s| Column::new(DistributedDcc, s, Direction::Dl);
        let dgenie = |s| Column::new(DistributedDcc, s, Direction::DlGenie);
        out.extend([
            Claim::Ratio { num: lp, den: mr, lo: 2.2, hi: 3.2 },
            Claim::Ratio { num: pmmse, den: mmse, lo: 0.80, hi: 0.98 },
            Claim::Ratio { num: ddl(Scheme::LpMmse), den: dgenie(Scheme::LpMmse), lo: 0.85, hi: f64::INFINITY },
            Claim::Ratio { num: ddl(Scheme::Mr), den: dgenie(Scheme::Mr), lo: 0.0, hi: 0.75 },
            Claim::Ratio { num: cdl, den: cgenie, lo: 0.93, hi: f64::INFINITY },
        ]);
    }
    out
}

/// Paired per-setup means and overall means of every column that some
/// claim refers to.
fn summarize(campaigns: &[(Campaign, SeReport)], columns: &[Column]) -> Vec<ColumnSummary> {
    columns
        .iter()
        .filter_map(|&column| {
            let rep = &campaigns.iter().find(|(c, _)| *c == column.campaign)?.1;
            let mean = rep.mean(column.scheme, column.direction)?;
            Some(ColumnSummary {
                column,
                label: column.label(),
                mean,
                setup_means: rep.setup_means(column.scheme, column.direction),
            })
        })
        .collect()
}

fn check(claim: &Claim, columns: &[ColumnSummary]) -> PropertyOutcome {
    let get = |c: &Column| columns.iter().find(|s| s.column == *c);
    let missing = |description: String| PropertyOutcome {
        claim: claim.clone(),
        description,
        passed: false,
        detail: "column not evaluated".into(),
    };
    match claim {
        Claim::AtLeast(a, b) => {
            let description = format!("{} >= {}", a.label(), b.label());
            let (Some(sa), Some(sb)) = (get(a), get(b)) else {
                return missing(description);
            };
            let n = sa.setup_means.len().min(sb.setup_means.len());
            let wins = sa.setup_means.iter().zip(&sb.setup_means).filter(|(x, y)| x >= y).count();
            let (passed, detail) = sign_test(wins, n);
            PropertyOutcome {
                claim: claim.clone(),
                description,
                passed,
                detail: format!("means {:.3} vs {:.3}; {detail}", sa.mean, sb.mean),
            }
        }
        Claim::Ratio { num, den, lo, hi } => {
            let description = format!("{} / {} in [{lo}, {hi}]", num.label(), den.label());
            let (Some(sn), Some(sd)) = (get(num), get(den)) else {
                return missing(description);
            };
            let ratio = sn.mean / sd.mean;
            PropertyOutcome {
                claim: claim.clone(),
                description,
                passed: ratio >= *lo && ratio <= *hi,
                detail: format!("ratio {ratio:.3}"),
            }
        }
        Claim::RatioExceeds { a, b } => {
            let description = format!(
                "{}/{} > {}/{}",
                a.0.label(),
                a.1.label(),
                b.0.label(),
                b.1.label()
            );
            let (Some(an), Some(ad), Some(bn), Some(bd)) = (get(&a.0), get(&a.1), get(&b.0), get(&b.1)) else {
                return missing(description);
            };
            let n = an.setup_means.len();
            let wins = (0..n)
                .filter(|&s| {
                    an.setup_means[s] / ad.setup_means[s] > bn.setup_means[s] / bd.setup_means[s]
                })
                .count();
            let (passed, detail) = sign_test(wins, n);
            PropertyOutcome {
                claim: claim.clone(),
                description,
                passed,
                detail: format!(
                    "ratios {:.3} vs {:.3}; {detail}",
                    an.mean / ad.mean,
                    bn.mean / bd.mean
                ),
            }
        }
    }
}

fn claim_columns(claims: &[Claim]) -> Vec<Column> {
    let mut out: Vec<Column> = Vec::new();
    let mut push = |c: &Column| {
        if !out.contains(c) {
            out.push(*c);
        }
    };
    for claim in claims {
        match claim {
            Claim::AtLeast(a, b) | Claim::Ratio { num: a, den: b, .. } => {
                push(a);
                push(b);
            }
            Claim::RatioExceeds { a, b } => {
                for c in [&a.0, &a.1, &b.0, &b.1] {
                    push(c);
                }
            }
        }
    }
    out
}

/// Runs all campaigns of a scenario and checks its claims.
pub fn run_scenario(name: &str, opts: &ScenarioOptions) -> Result<ScenarioReport> {
    let spec = scenario(name)?;
    if spec.full_scale_only && !opts.full_scale {
        return Err(Error::FullScaleRequired(name.to_string()));
    }
    let campaigns = Campaign::ALL
        .par_iter()
        .map(|&c| run_campaign(&spec.config(c, opts)).map(|r| (c, r)))
        .collect::<Result<Vec<_>>>()?;

    let claims = claims(spec);
    let mut columns = claim_columns(&claims);
    for (c, rep) in &campaigns {
        for (scheme, direction) in rep.columns() {
            let col = Column::new(*c, scheme, direction);
            if !columns.contains(&col) {
                columns.push(col);
            }
        }
    }
    let columns = summarize(&campaigns, &columns);
    let properties = claims.iter().map(|c| check(c, &columns)).collect();
    Ok(ScenarioReport {
        name: name.to_string(),
        full_scale: opts.full_scale,
        columns,
        properties,
        campaigns,
    })
}

/// Writes each campaign's result files to `<dir>/<campaign>/` plus
/// `summary.csv` and `properties.csv`.
pub fn emit_scenario(report: &ScenarioReport, dir: impl AsRef<Path>) -> Result<Vec<PathBuf>> {
    let dir = dir.as_ref();
    let mut written = Vec::new();
    for (c, rep) in &report.campaigns {
        written.extend(emit_results(rep, dir.join(c.name()))?);
    }
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| Error::Io { path, source }
    };
    let csv_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| Error::Csv { path, source }
    };

    let path = dir.join("summary.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    w.write_record(["campaign", "scheme", "direction", "mean_se"]).map_err(csv_err(&path))?;
    for c in &report.columns {
        w.write_record([
            c.column.campaign.name().to_string(),
            c.column.scheme.to_string(),
            c.column.direction.to_string(),
            c.mean.to_string(),
        ])
        .map_err(csv_err(&path))?;
    }
    w.flush().map_err(io(&path))?;
    written.push(path);

    let path = dir.join("properties.csv");
    let mut w = csv::Writer::from_path(&path).map_err(csv_err(&path))?;
    w.write_record(["property", "passed", "detail"]).map_err(csv_err(&path))?;
    for p in &report.properties {
        w.write_record([p.description.as_str(), if p.passed { "true" } else { "false" }, p.detail.as_str()])
            .map_err(csv_err(&path))?;
    }
    w.flush().map_err(io(&path))?;
    written.push(path);
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sign_test_thresholds() {
        assert_eq!(sign_test_threshold(20, 0.05), Some(15));
        assert_eq!(sign_test_threshold(6, 0.05), Some(6));
        assert_eq!(sign_test_threshold(5, 0.05), Some(5));
        assert_eq!(sign_test_threshold(4, 0.05), None);
        assert_eq!(sign_test_threshold(0, 0.05), None);
    }

    #[test]
    fn registry() {
        assert!(scenario("scaled-i").is_ok());
        assert!(matches!(scenario("nope"), Err(Error::UnknownScenario(_))));
        let err = run_scenario("setup-i", &ScenarioOptions::default()).unwrap_err();
        assert!(matches!(err, Error::FullScaleRequired(_)));
    }

    #[test]
    fn configs_are_valid_and_share_the_drop() {
        for spec in &SCENARIOS {
            for c in Campaign::ALL {
                let cfg = spec.config(c, &ScenarioOptions::default());
                cfg.validate().unwrap();
                assert_eq!(cfg.cluster.serve_all, c.serve_all());
                assert_eq!(cfg.network.num_aps * cfg.network.antennas_per_ap, (100.0 * cfg.network.area_side_km.powi(2)) as usize);
            }
        }
    }

    #[test]
    fn full_scale_setup_i_checks_ratios() {
        let spec = scenario("setup-i").unwrap();
        let n = claims(spec).iter().filter(|c| matches!(c, Claim::Ratio { .. })).count();
        assert_eq!(n, 5);
        assert_eq!(claims(scenario("scaled-ii").unwrap()).len(), 3);
    }
}
