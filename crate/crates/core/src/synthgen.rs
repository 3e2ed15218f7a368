//! Conflicting-sine benchmark: base pools for the S1/S2/S3 variants and an
//! episode sampler that reads inputs from one base sequence and outputs from
//! another.
//!
//! All randomness comes from one ChaCha8 stream seeded with
//! `DatasetSpec::seed`: the pool is drawn first, then episodes in order.

use std::f64::consts::PI;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Period of every S1/S2 component and of the first S3 component.
pub const BASE_PERIOD: f64 = 3.0;
pub const SUPPORT_SIZE: usize = 5;
pub const QUERY_SIZE: usize = 5;
pub const WINDOWS_PER_EPISODE: usize = SUPPORT_SIZE + QUERY_SIZE;

const AMPLITUDE_RANGE: (f64, f64) = (0.5, 1.5);
const S3_PERIOD_RANGE: (f64, f64) = (1.5, 6.0);
const S3_MIN_PERIOD_GAP: f64 = 0.3;

pub type Rng64 = ChaCha8Rng;

pub fn rng_from_seed(seed: u64) -> Rng64 {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Independent stream `stream` of the generator keyed by `seed`.
pub fn derived_rng(seed: u64, stream: u64) -> Rng64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    S1,
    S2,
    S3,
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Variant::S1 => "s1",
            Variant::S2 => "s2",
            Variant::S3 => "s3",
        })
    }
}

impl FromStr for Variant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace('-', "").as_str() {
            "s1" => Ok(Variant::S1),
            "s2" => Ok(Variant::S2),
            "s3" => Ok(Variant::S3),
            other => Err(Error::config("variant", format!("unknown dataset variant {other:?}"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SineComponent {
    pub amplitude: f64,
    pub period: f64,
    /// Horizontal shift in time units, in `[0, period)`.
    pub phase: f64,
}

impl SineComponent {
    pub fn at(&self, t: f64) -> f64 {
        self.amplitude * (2.0 * PI * (t + self.phase) / self.period).sin()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BaseSequence {
    pub id: usize,
    pub components: Vec<SineComponent>,
}

impl BaseSequence {
    pub fn amplitude_sum(&self) -> f64 {
        self.components.iter().map(|c| c.amplitude).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub variant: Variant,
    pub pool_size: usize,
    /// Sample spacing in time units.
    pub dt: f64,
    pub input_len: usize,
    pub output_len: usize,
    /// Offset between consecutive windows of an episode, in samples.
    pub window_stride: usize,
    /// Episode base offsets are drawn uniformly from `[0, offset_range)`.
    pub offset_range: usize,
    pub seed: u64,
}

impl DatasetSpec {
    pub fn new(variant: Variant, seed: u64) -> Self {
        DatasetSpec {
            variant,
            pool_size: 5,
            dt: 0.1,
            input_len: 60,
            output_len: 30,
            window_stride: 17,
            offset_range: 300,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.pool_size < 2 {
            return Err(Error::config(
                "pool_size",
                format!("need at least 2 base sequences, got {}", self.pool_size),
            ));
        }
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return Err(Error::config("dt", "must be positive and finite"));
        }
        for (field, v) in [
            ("input_len", self.input_len),
            ("output_len", self.output_len),
            ("window_stride", self.window_stride),
            ("offset_range", self.offset_range),
        ] {
            if v == 0 {
                return Err(Error::config(field, "must be at least 1"));
            }
        }
        Ok(())
    }
}

/// One (input window, output window) pair.
pub type Pair = (Vec<f64>, Vec<f64>);

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub source_i: usize,
    pub source_j: usize,
    /// Start offset of each of the ten windows.
    pub offsets: Vec<usize>,
    pub support: Vec<Pair>,
    pub query: Vec<Pair>,
}

impl Episode {
    pub fn all_pairs(&self) -> impl Iterator<Item = &Pair> {
        self.support.iter().chain(&self.query)
    }
}

fn amplitude(rng: &mut Rng64) -> f64 {
    rng.gen_range(AMPLITUDE_RANGE.0..AMPLITUDE_RANGE.1)
}

fn component(rng: &mut Rng64, period: f64) -> SineComponent {
    let amplitude = amplitude(rng);
    let phase = rng.gen_range(0.0..period);
    SineComponent {
        amplitude,
        period,
        phase,
    }
}

pub fn build_base_pool(spec: &DatasetSpec, rng: &mut Rng64) -> Result<Vec<BaseSequence>> {
    spec.validate()?;
    let pool = (0..spec.pool_size)
        .map(|id| {
            let components = match spec.variant {
                Variant::S1 => vec![component(rng, BASE_PERIOD)],
                Variant::S2 => vec![component(rng, BASE_PERIOD), component(rng, BASE_PERIOD)],
                Variant::S3 => {
                    let first = component(rng, BASE_PERIOD);
                    let second_period = loop {
                        let p = rng.gen_range(S3_PERIOD_RANGE.0..S3_PERIOD_RANGE.1);
                        if (p - BASE_PERIOD).abs() >= S3_MIN_PERIOD_GAP {
                            break p;
                        }
                    };
                    vec![first, component(rng, second_period)]
                }
            };
            BaseSequence { id, components }
        })
        .collect();
    Ok(pool)
}

/// Samples `start_offset .. start_offset + length` of a base sequence.
pub fn render(seq: &BaseSequence, start_offset: usize, length: usize, dt: f64) -> Vec<f64> {
    (0..length)
        .map(|k| {
            let t = (start_offset + k) as f64 * dt;
            seq.components.iter().map(|c| c.at(t)).sum()
        })
        .collect()
}

/// Builds the episode for a fixed `(i, j, base offset)` draw.
pub fn episode_at(
    pool: &[BaseSequence],
    spec: &DatasetSpec,
    source_i: usize,
    source_j: usize,
    base_offset: usize,
) -> Episode {
    let offsets: Vec<usize> = (0..WINDOWS_PER_EPISODE)
        .map(|k| base_offset + k * spec.window_stride)
        .collect();
    let (si, sj) = (&pool[source_i], &pool[source_j]);
    let mut pairs: Vec<Pair> = offsets
        .iter()
        .map(|&o| {
            (
                render(si, o, spec.input_len, spec.dt),
                render(sj, o + spec.input_len, spec.output_len, spec.dt),
            )
        })
        .collect();
    let query = pairs.split_off(SUPPORT_SIZE);
    Episode {
        source_i,
        source_j,
        offsets,
        support: pairs,
        query,
    }
}

pub fn sample_episode(pool: &[BaseSequence], spec: &DatasetSpec, rng: &mut Rng64) -> Episode {
    let i = rng.gen_range(0..pool.len());
    let j = rng.gen_range(0..pool.len());
    let o = rng.gen_range(0..spec.offset_range);
    episode_at(pool, spec, i, j, o)
}

/// A generated dataset: the spec, its base pool, and the episode stream.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub spec: DatasetSpec,
    pub pool: Vec<BaseSequence>,
    pub episodes: Vec<Episode>,
}

pub fn generate(spec: &DatasetSpec, count: usize) -> Result<Dataset> {
    if count == 0 {
        return Err(Error::config("count", "must be at least 1"));
    }
    let mut rng = rng_from_seed(spec.seed);
    let pool = build_base_pool(spec, &mut rng)?;
    let episodes = (0..count)
        .map(|_| sample_episode(&pool, spec, &mut rng))
        .collect();
    Ok(Dataset {
        spec: spec.clone(),
        pool,
        episodes,
    })
}

pub fn episode_stream(spec: &DatasetSpec, count: usize) -> Result<Vec<Episode>> {
    Ok(generate(spec, count)?.episodes)
}

#[derive(Serialize, Deserialize)]
struct DatasetFile {
    header: DatasetSpec,
    pool: Vec<BaseSequence>,
    episodes: Vec<Episode>,
}

impl Dataset {
    pub fn to_json(&self) -> Result<String> {
        let file = DatasetFile {
            header: self.spec.clone(),
            pool: self.pool.clone(),
            episodes: self.episodes.clone(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: DatasetFile = serde_json::from_str(text)?;
        file.header.validate()?;
        Ok(Dataset {
            spec: file.header,
            pool: file.pool,
            episodes: file.episodes,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        crate::io::write_text(path, &self.to_json()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&crate::io::read_text(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(variant: Variant) -> DatasetSpec {
        DatasetSpec::new(variant, 7)
    }

    #[test]
    fn s1_pool_has_single_period_three_components() {
        let pool = build_base_pool(&spec(Variant::S1), &mut rng_from_seed(1)).unwrap();
        assert_eq!(pool.len(), 5);
        for s in &pool {
            assert_eq!(s.components.len(), 1);
            assert_eq!(s.components[0].period, 3.0);
            let c = s.components[0];
            assert!((0.5..1.5).contains(&c.amplitude));
            assert!((0.0..3.0).contains(&c.phase));
        }
    }

    #[test]
    fn s2_components_share_period() {
        let pool = build_base_pool(&spec(Variant::S2), &mut rng_from_seed(2)).unwrap();
        for s in &pool {
            assert_eq!(s.components.len(), 2);
            assert_eq!(s.components[0].period, s.components[1].period);
        }
    }

    #[test]
    fn s3_components_have_distinct_periods() {
        let pool = build_base_pool(&spec(Variant::S3), &mut rng_from_seed(3)).unwrap();
        for s in &pool {
            assert_eq!(s.components.len(), 2);
            assert!((s.components[0].period - s.components[1].period).abs() >= 0.3);
        }
    }

    #[test]
    fn pool_is_deterministic_in_seed() {
        let a = build_base_pool(&spec(Variant::S3), &mut rng_from_seed(11)).unwrap();
        let b = build_base_pool(&spec(Variant::S3), &mut rng_from_seed(11)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn pool_size_below_two_is_rejected() {
        let mut s = spec(Variant::S1);
        s.pool_size = 1;
        assert!(matches!(
            build_base_pool(&s, &mut rng_from_seed(0)),
            Err(Error::Config { .. })
        ));
    }

    #[test]
    fn render_examples() {
        let one = SineComponent {
            amplitude: 1.0,
            period: 3.0,
            phase: 0.0,
        };
        let seq = BaseSequence {
            id: 0,
            components: vec![one],
        };
        assert_eq!(render(&seq, 0, 1, 0.1)[0], 0.0);
        // t = 3 * 0.25 = 0.75, a quarter period
        assert!((render(&seq, 3, 1, 0.25)[0] - 1.0).abs() < 1e-15);

        let with_zero = BaseSequence {
            id: 1,
            components: vec![
                one,
                SineComponent {
                    amplitude: 0.0,
                    period: 2.0,
                    phase: 0.3,
                },
            ],
        };
        assert_eq!(render(&with_zero, 5, 40, 0.1), render(&seq, 5, 40, 0.1));
    }

    #[test]
    fn episode_layout() {
        let data = generate(&spec(Variant::S1), 20).unwrap();
        for ep in &data.episodes {
            assert_eq!(ep.support.len(), 5);
            assert_eq!(ep.query.len(), 5);
            assert_eq!(ep.offsets.len(), 10);
            for w in ep.offsets.windows(2) {
                assert_eq!(w[1] - w[0], 17);
            }
            for (x, y) in ep.all_pairs() {
                assert_eq!(x.len(), 60);
                assert_eq!(y.len(), 30);
            }
        }
    }

    #[test]
    fn self_pairing_yields_true_continuation() {
        let s = spec(Variant::S2);
        let pool = build_base_pool(&s, &mut rng_from_seed(5)).unwrap();
        let ep = episode_at(&pool, &s, 2, 2, 13);
        for (k, (x, y)) in ep.support.iter().enumerate() {
            let full = render(&pool[2], ep.offsets[k], 90, s.dt);
            assert_eq!(&full[..60], x.as_slice());
            assert_eq!(&full[60..], y.as_slice());
        }
    }

    #[test]
    fn conflicting_pairs_share_inputs() {
        let s = spec(Variant::S1);
        let pool = build_base_pool(&s, &mut rng_from_seed(9)).unwrap();
        let a = episode_at(&pool, &s, 0, 1, 40);
        let b = episode_at(&pool, &s, 0, 2, 40);
        for (pa, pb) in a.all_pairs().zip(b.all_pairs()) {
            assert_eq!(pa.0, pb.0);
            assert_ne!(pa.1, pb.1);
        }
    }

    #[test]
    fn streams_are_seed_determined() {
        let s = spec(Variant::S1);
        let a = episode_stream(&s, 100).unwrap();
        assert_eq!(a.len(), 100);
        assert_eq!(a, episode_stream(&s, 100).unwrap());
        let mut s2 = s.clone();
        s2.seed += 1;
        assert_ne!(a, episode_stream(&s2, 100).unwrap());
    }

    #[test]
    fn values_bounded_by_amplitude_sum() {
        for v in [Variant::S1, Variant::S2, Variant::S3] {
            let data = generate(&spec(v), 30).unwrap();
            for ep in &data.episodes {
                let bi = data.pool[ep.source_i].amplitude_sum();
                let bj = data.pool[ep.source_j].amplitude_sum();
                for (x, y) in ep.all_pairs() {
                    assert!(x.iter().all(|v| v.abs() <= bi + 1e-12));
                    assert!(y.iter().all(|v| v.abs() <= bj + 1e-12));
                }
            }
        }
    }

    #[test]
    fn json_round_trip_is_exact() {
        let data = generate(&spec(Variant::S3), 3).unwrap();
        let back = Dataset::from_json(&data.to_json().unwrap()).unwrap();
        assert_eq!(back, data);
    }
}
