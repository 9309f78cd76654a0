//! Declarative experiment configuration: a flat `key = value` TOML file,
//! with CLI flags layered on top. Every run writes the fully resolved
//! configuration next to its results so runs are self-describing.

use crate::channel::jakes_eta;
use crate::error::{Error, Result};
use crate::harness::{
    BeamformingSpec, RateSpec, SchemeKind, TespaSpatialSpec, TespaSpec, TespaTemporalSpec,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExperimentKind {
    Beamforming,
    Rate,
    Tespa,
}

/// The configuration file schema. Unknown keys are rejected. All keys are
/// optional; unset keys take experiment-specific defaults when resolved.
///
/// ```toml
/// # tecq beamforming --spec fig5.toml
/// schemes = ["te_ed", "te_lte", "rvq_analytic"]
/// mt      = [32, 64]
/// b       = "3/4"          # bits per channel entry: input bits = b * l
/// l       = 4
/// k_theta = 16
/// trials  = 10000
/// seed    = 7
/// ```
///
/// Rate-experiment keys: `mr`, `rank`, `snr_db`. Differential keys:
/// `channel` (`gauss_markov` or `exp_spatial`), `eta` (or `carrier_hz`,
/// `tau_s`, `speed_kmh`), `k_max`, `b_spa`, `alpha`, `b_u1`, `b_direct`.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub schemes: Option<Vec<String>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mt: Option<Vec<usize>>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub l: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_theta: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trials: Option<u64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    // Rate experiment.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mr: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub snr_db: Option<Vec<f64>>,
    // Differential experiments.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub channel: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub carrier_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tau_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub speed_kmh: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub k_max: Option<usize>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_spa: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub alpha: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_u1: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub b_direct: Option<String>,
    // Execution control (flags override these).
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

/// Parses a per-entry rate like `"3/4"`, `"1/2"` or `"1"` into per-stage
/// input bits for block length `l`.
pub fn parse_rate(text: &str, l: usize) -> Result<u32> {
    let (num, den) = match text.split_once('/') {
        Some((n, d)) => (
            n.trim().parse::<u64>().map_err(|_| Error::config(format!("bad rate {text:?}")))?,
            d.trim().parse::<u64>().map_err(|_| Error::config(format!("bad rate {text:?}")))?,
        ),
        None => (
            text.trim().parse::<u64>().map_err(|_| Error::config(format!("bad rate {text:?}")))?,
            1,
        ),
    };
    if den == 0 || num == 0 {
        return Err(Error::config(format!("bad rate {text:?}")));
    }
    let bits = num * l as u64;
    if bits % den != 0 {
        return Err(Error::config(format!(
            "rate {text} with block length {l} gives a fractional input-bit count"
        )));
    }
    Ok((bits / den) as u32)
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::config(format!("config: {e}")))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    fn scheme_list(&self, defaults: &[SchemeKind]) -> Result<Vec<SchemeKind>> {
        match &self.schemes {
            None => Ok(defaults.to_vec()),
            Some(names) => names.iter().map(|s| SchemeKind::parse(s)).collect(),
        }
    }

    fn base(&self) -> (usize, usize, u64, u64) {
        (
            self.l.unwrap_or(4),
            self.k_theta.unwrap_or(16),
            self.trials.unwrap_or(10_000),
            self.seed.unwrap_or(1),
        )
    }

    /// Fills every unset key with the defaults the given experiment would
    /// use, so the emitted config is complete.
    pub fn resolved(&self, kind: ExperimentKind) -> Result<ExperimentConfig> {
        let mut c = self.clone();
        let (l, k_theta, trials, seed) = self.base();
        c.l = Some(l);
        c.k_theta = Some(k_theta);
        c.trials = Some(trials);
        c.seed = Some(seed);
        match kind {
            ExperimentKind::Beamforming => {
                let spec = self.beamforming_spec()?;
                c.schemes = Some(spec.schemes.iter().map(|s| s.name().to_string()).collect());
                c.mt = Some(spec.mt_sweep);
                c.b = Some(self.b.clone().unwrap_or_else(|| "1/2".into()));
            }
            ExperimentKind::Rate => {
                let spec = self.rate_spec()?;
                c.schemes = Some(spec.schemes.iter().map(|s| s.name().to_string()).collect());
                c.mt = Some(vec![spec.mt]);
                c.mr = Some(spec.num_rx);
                c.rank = Some(spec.rank);
                c.snr_db = Some(spec.snr_db);
                c.b = Some(self.b.clone().unwrap_or_else(|| "3/4".into()));
            }
            ExperimentKind::Tespa => match self.tespa_spec()? {
                TespaSpec::Temporal(spec) => {
                    c.channel = Some("gauss_markov".into());
                    c.mt = Some(vec![spec.mt]);
                    c.eta = Some(spec.eta);
                    c.k_max = Some(spec.k_max);
                    c.b = Some(self.b.clone().unwrap_or_else(|| "1/2".into()));
                    c.b_spa = Some(self.b_spa.clone().unwrap_or_else(|| "1/2".into()));
                }
                TespaSpec::Spatial(spec) => {
                    c.channel = Some("exp_spatial".into());
                    c.mt = Some(spec.mt_sweep);
                    c.alpha = Some(spec.alpha);
                    c.b_u1 = Some(self.b_u1.clone().unwrap_or_else(|| "1/2".into()));
                    c.b_spa = Some(self.b_spa.clone().unwrap_or_else(|| "1/2".into()));
                    c.b_direct = Some(self.b_direct.clone().unwrap_or_else(|| "3/4".into()));
                }
            },
        }
        Ok(c)
    }

    pub fn beamforming_spec(&self) -> Result<BeamformingSpec> {
        let (l, k_theta, trials, seed) = self.base();
        let input_bits = parse_rate(self.b.as_deref().unwrap_or("1/2"), l)?;
        Ok(BeamformingSpec {
            schemes: self.scheme_list(&[
                SchemeKind::TeEd,
                SchemeKind::TeLte,
                SchemeKind::RvqAnalytic,
            ])?,
            mt_sweep: self.mt.clone().unwrap_or_else(|| vec![16, 32, 64]),
            input_bits,
            block_len: l,
            k_theta,
            trials,
            seed,
            threads: self.threads,
        })
    }

    pub fn rate_spec(&self) -> Result<RateSpec> {
        let (l, k_theta, trials, seed) = self.base();
        let input_bits = parse_rate(self.b.as_deref().unwrap_or("3/4"), l)?;
        let mt = match self.mt.as_deref() {
            None => 16,
            Some([one]) => *one,
            Some(_) => {
                return Err(Error::config("the rate experiment takes a single mt value"))
            }
        };
        Ok(RateSpec {
            schemes: self.scheme_list(&[SchemeKind::TeEd, SchemeKind::Rvq, SchemeKind::Genie])?,
            mt,
            num_rx: self.mr.unwrap_or(2),
            rank: self.rank.unwrap_or(2),
            snr_db: self.snr_db.clone().unwrap_or_else(|| vec![0.0, 5.0, 10.0, 15.0, 20.0]),
            input_bits,
            block_len: l,
            k_theta,
            trials,
            seed,
            threads: self.threads,
        })
    }

    fn resolve_eta(&self) -> Result<f64> {
        if let Some(eta) = self.eta {
            return Ok(eta);
        }
        match (self.carrier_hz, self.tau_s, self.speed_kmh) {
            (Some(f), Some(tau), Some(kmh)) => {
                if f <= 0.0 || tau < 0.0 || kmh < 0.0 {
                    return Err(Error::config("carrier_hz, tau_s and speed_kmh must be positive"));
                }
                Ok(jakes_eta(f, tau, kmh / 3.6))
            }
            (None, None, None) => Ok(0.9881),
            _ => Err(Error::config(
                "set either eta or all of carrier_hz, tau_s and speed_kmh",
            )),
        }
    }

    pub fn tespa_spec(&self) -> Result<TespaSpec> {
        let (l, k_theta, trials, seed) = self.base();
        let channel = self.channel.as_deref().unwrap_or("gauss_markov");
        match channel {
            "gauss_markov" => {
                let mt = match self.mt.as_deref() {
                    None => 64,
                    Some([one]) => *one,
                    Some(_) => {
                        return Err(Error::config(
                            "the temporal experiment takes a single mt value",
                        ))
                    }
                };
                Ok(TespaSpec::Temporal(TespaTemporalSpec {
                    mt,
                    eta: self.resolve_eta()?,
                    k_max: self.k_max.unwrap_or(10),
                    input_bits: parse_rate(self.b.as_deref().unwrap_or("1/2"), l)?,
                    spa_input_bits: parse_rate(self.b_spa.as_deref().unwrap_or("1/2"), l)?,
                    block_len: l,
                    k_theta,
                    trials,
                    seed,
                    threads: self.threads,
                }))
            }
            "exp_spatial" => Ok(TespaSpec::Spatial(TespaSpatialSpec {
                mt_sweep: self.mt.clone().unwrap_or_else(|| vec![32, 64]),
                alpha: self.alpha.unwrap_or(0.9),
                u1_input_bits: parse_rate(self.b_u1.as_deref().unwrap_or("1/2"), l)?,
                spa_input_bits: parse_rate(self.b_spa.as_deref().unwrap_or("1/2"), l)?,
                direct_input_bits: parse_rate(self.b_direct.as_deref().unwrap_or("3/4"), l)?,
                block_len: l,
                k_theta,
                trials,
                seed,
                threads: self.threads,
            })),
            other => Err(Error::config(format!(
                "unknown channel {other:?} (use gauss_markov or exp_spatial)"
            ))),
        }
    }
}
