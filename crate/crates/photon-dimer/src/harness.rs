//! Observables of a scattered weak coherent pulse and a simulated
//! detection pipeline.
//!
//! The input coherent pulse is truncated at two photons (vacuum : single :
//! pair weights 1 : n_bar : n_bar^2/2); three-photon processes are never
//! generated, so G3-type observables are out of scope here. On top of the
//! deterministic observables the module provides a Monte-Carlo time-tag
//! sampler feeding a pulse-synchronized coincidence correlator, emulating
//! a Hanbury Brown-Twiss measurement of the scattered light.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::onephoton;
use crate::params::SystemParams;
use crate::pulse::{self, Grid1D, PulseError, PulseSpec, SampledWaveform};
use crate::twophoton::{self, CorrelationMap, TwoPhotonError, TwoPhotonWavefunction};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Pulse(#[from] PulseError),
    #[error(transparent)]
    TwoPhoton(#[from] TwoPhotonError),
    #[error("invalid argument: {0}")]
    Domain(String),
}

/// Scattered one- and two-photon components of a truncated coherent pulse.
#[derive(Debug, Clone)]
pub struct CoherentOutput {
    pub n_bar: f64,
    pub psi1: SampledWaveform,
    pub psi2: TwoPhotonWavefunction,
}

/// Scatter both truncation components of the coherent pulse.
pub fn scatter_coherent(
    spec: &PulseSpec,
    grid: &Grid1D,
    params: &SystemParams,
) -> Result<CoherentOutput, HarnessError> {
    let input = pulse::make_gaussian(spec, grid)?;
    let psi1 = onephoton::scatter_single(&input, params)?;
    let psi2 = twophoton::scatter_two(spec, grid, params)?;
    Ok(CoherentOutput {
        n_bar: spec.mean_photons,
        psi1,
        psi2,
    })
}

/// The paper's headline observables for one pulse shape.
#[derive(Debug, Clone)]
pub struct Observables {
    pub grid: Grid1D,
    /// |psi1|^2, unit-peak normalized.
    pub g1: Vec<f64>,
    /// Unit-peak two-photon coincidence map.
    pub g2: CorrelationMap,
    /// Equal-time diagonal of the map, unit-peak normalized.
    pub g2_diag: Vec<f64>,
    /// Single-photon peak delay (ns) against the unscattered pulse.
    pub delay1: f64,
    /// Two-photon peak delay (ns) from the G2 diagonal.
    pub delay2: f64,
    pub warning: Option<String>,
}

fn unit_peak(mut v: Vec<f64>) -> Vec<f64> {
    let peak = v.iter().fold(0.0_f64, |m, &x| m.max(x));
    if peak > 0.0 {
        for x in &mut v {
            *x /= peak;
        }
    }
    v
}

pub fn observables(
    spec: &PulseSpec,
    params: &SystemParams,
    n_points: usize,
) -> Result<Observables, HarnessError> {
    let warning = (spec.mean_photons > 0.05).then(|| {
        format!(
            "mean photon number {} outside the weak-pulse regime; the \
             two-photon truncation is unreliable",
            spec.mean_photons
        )
    });
    let scale = if params.g > 0.0 {
        params.gamma_purcell()
    } else {
        params.kappa
    };
    let grid = pulse::default_grid(spec, scale, n_points);
    let out = scatter_coherent(spec, &grid, params)?;
    let g1 = unit_peak(out.psi1.intensity());
    let g2 = twophoton::g2_map(&out.psi2, out.n_bar);
    let diag = out.psi2.equal_time_diagonal();
    let g2_diag = unit_peak(diag.intensity());
    // the input pulse peaks at t = 0 on this grid, so the raw peak
    // location is already the delay
    let delay1 = pulse::peak_delay(&out.psi1, 0.0)?;
    let delay2 = pulse::peak_delay(&diag, 0.0)?;
    Ok(Observables {
        grid,
        g1,
        g2,
        g2_diag,
        delay1,
        delay2,
        warning,
    })
}

/// One detection event. Timestamps are in integer picoseconds from the
/// start of the acquisition.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TimeTagRecord {
    pub channel: u8,
    pub timestamp_ps: u64,
}

/// The two detector streams of a simulated acquisition, each sorted by
/// timestamp, plus the pulse repetition period used to lay them out.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TagStreams {
    pub period_ps: u64,
    pub channel1: Vec<TimeTagRecord>,
    pub channel2: Vec<TimeTagRecord>,
}

/// Draw an arrival time (ns, grid axis) from a 1D intensity profile via
/// inverse CDF with uniform in-cell jitter.
fn sample_1d(cdf: &[f64], grid: &Grid1D, rng: &mut ChaCha8Rng) -> f64 {
    let total = *cdf.last().unwrap();
    let u = rng.gen_range(0.0..total);
    let i = cdf.partition_point(|&c| c <= u).min(cdf.len() - 1);
    let lo = if i == 0 { 0.0 } else { cdf[i - 1] };
    let frac = (u - lo) / (cdf[i] - lo).max(f64::MIN_POSITIVE);
    grid.x(i) + frac * grid.spacing
}

struct PairSampler {
    grid: Grid1D,
    /// CDF over rows of the |psi2|^2 lattice.
    row_cdf: Vec<f64>,
    /// Per-row CDF over columns.
    col_cdf: Vec<Vec<f64>>,
}

impl PairSampler {
    fn new(psi2: &TwoPhotonWavefunction) -> Self {
        let n = psi2.n();
        let mut row_cdf = Vec::with_capacity(n);
        let mut col_cdf = Vec::with_capacity(n);
        let mut acc = 0.0;
        for i in 0..n {
            let mut row = Vec::with_capacity(n);
            let mut racc = 0.0;
            for j in 0..n {
                racc += psi2.at(i, j).norm_sqr();
                row.push(racc);
            }
            acc += racc;
            row_cdf.push(acc);
            col_cdf.push(row);
        }
        Self {
            grid: psi2.grid,
            row_cdf,
            col_cdf,
        }
    }

    fn sample(&self, rng: &mut ChaCha8Rng) -> (f64, f64) {
        let total = *self.row_cdf.last().unwrap();
        let u = rng.gen_range(0.0..total);
        let i = self.row_cdf.partition_point(|&c| c <= u).min(self.row_cdf.len() - 1);
        let t1 = self.grid.x(i) + rng.gen_range(0.0..1.0) * self.grid.spacing;
        let t2 = sample_1d(&self.col_cdf[i], &self.grid, rng);
        (t1, t2)
    }
}

/// Simulate `n_pulses` repetitions of the scattered pulse hitting a 50:50
/// beam splitter with a detector on each output. Deterministic for a fixed
/// seed regardless of thread count: every pulse uses its own counter-mode
/// RNG stream.
pub fn sample_tags(
    output: &CoherentOutput,
    n_pulses: u64,
    seed: u64,
) -> Result<TagStreams, HarnessError> {
    if n_pulses == 0 {
        return Err(HarnessError::Domain("n_pulses must be >= 1".into()));
    }
    let grid = output.psi1.grid;
    // repetition period comfortably above the grid window, in whole ns
    let period_ps = ((grid.window() * 2.0).ceil() as u64) * 1000;
    let n_bar = output.n_bar;
    let (w1, w2) = (n_bar, n_bar * n_bar / 2.0);
    let z = 1.0 + w1 + w2;
    let mut cdf1 = Vec::with_capacity(grid.n_points);
    let mut acc = 0.0;
    for a in &output.psi1.amps {
        acc += a.norm_sqr();
        cdf1.push(acc);
    }
    let pair = PairSampler::new(&output.psi2);

    let to_tag = |pulse: u64, t: f64, channel: u8| TimeTagRecord {
        channel,
        // grid times are negative-capable; shift by the grid origin
        timestamp_ps: pulse * period_ps + ((t - grid.origin) * 1000.0).round() as u64,
    };

    let chunks: Vec<(Vec<TimeTagRecord>, Vec<TimeTagRecord>)> = (0..n_pulses)
        .into_par_iter()
        .fold(
            || (Vec::new(), Vec::new()),
            |mut streams, pulse| {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                rng.set_stream(pulse.wrapping_add(1));
                let u: f64 = rng.gen_range(0.0..z);
                let mut events: Vec<(f64, u8)> = Vec::new();
                if u < 1.0 {
                    // vacuum
                } else if u < 1.0 + w1 {
                    events.push((sample_1d(&cdf1, &grid, &mut rng), rng.gen_range(0..2)));
                } else {
                    let (t1, t2) = pair.sample(&mut rng);
                    events.push((t1, rng.gen_range(0..2)));
                    events.push((t2, rng.gen_range(0..2)));
                }
                events.sort_by(|a, b| a.0.total_cmp(&b.0));
                for (t, ch) in events {
                    let tag = to_tag(pulse, t, ch);
                    if ch == 0 {
                        streams.0.push(tag);
                    } else {
                        streams.1.push(tag);
                    }
                }
                streams
            },
        )
        .collect();
    let mut channel1 = Vec::new();
    let mut channel2 = Vec::new();
    for (a, b) in chunks {
        channel1.extend(a);
        channel2.extend(b);
    }
    // merge of per-worker runs: restore global time order
    channel1.sort_by_key(|t| t.timestamp_ps);
    channel2.sort_by_key(|t| t.timestamp_ps);
    Ok(TagStreams {
        period_ps,
        channel1,
        channel2,
    })
}

/// Pulse-synchronized coincidence histogram over (tau1, tau2), both in
/// picoseconds from the pulse start. Symmetrized over the channel labels.
/// `window_ps` is the histogrammed span; `n_bins` the bin count per axis.
#[derive(Debug, Clone)]
pub struct CoincidenceHistogram {
    /// n_bins + 1 bin edges (ps).
    pub edges_ps: Vec<f64>,
    /// Row-major n_bins x n_bins raw counts.
    pub counts: Vec<f64>,
    pub n_coincidences: u64,
}

impl CoincidenceHistogram {
    pub fn n_bins(&self) -> usize {
        self.edges_ps.len() - 1
    }

    pub fn at(&self, i: usize, j: usize) -> f64 {
        self.counts[i * self.n_bins() + j]
    }

    /// Copy rescaled to a unit peak, matching the figures' colorbars.
    pub fn unit_peak(&self) -> CoincidenceHistogram {
        CoincidenceHistogram {
            edges_ps: self.edges_ps.clone(),
            counts: unit_peak(self.counts.clone()),
            n_coincidences: self.n_coincidences,
        }
    }
}

pub fn correlate(tags: &TagStreams, window_ps: f64, n_bins: usize) -> CoincidenceHistogram {
    assert!(n_bins >= 1 && window_ps > 0.0);
    let bin = window_ps / n_bins as f64;
    let edges_ps = (0..=n_bins).map(|i| i as f64 * bin).collect();
    let mut counts = vec![0.0; n_bins * n_bins];
    let mut n_coincidences = 0;
    let mut m1: std::collections::HashMap<u64, Vec<f64>> = std::collections::HashMap::new();
    for t in &tags.channel1 {
        m1.entry(t.timestamp_ps / tags.period_ps)
            .or_default()
            .push((t.timestamp_ps % tags.period_ps) as f64);
    }
    for t in &tags.channel2 {
        let pulse = t.timestamp_ps / tags.period_ps;
        let tau2 = (t.timestamp_ps % tags.period_ps) as f64;
        if let Some(partners) = m1.get(&pulse) {
            for &tau1 in partners {
                n_coincidences += 1;
                for (a, b) in [(tau1, tau2), (tau2, tau1)] {
                    let (i, j) = ((a / bin) as usize, (b / bin) as usize);
                    if i < n_bins && j < n_bins {
                        counts[i * n_bins + j] += 1.0;
                    }
                }
            }
        }
    }
    CoincidenceHistogram {
        edges_ps,
        counts,
        n_coincidences,
    }
}

/// Histogram a single channel into per-pulse arrival-time bins (ps).
pub fn histogram_singles(
    tags: &[TimeTagRecord],
    period_ps: u64,
    window_ps: f64,
    n_bins: usize,
) -> Vec<f64> {
    let bin = window_ps / n_bins as f64;
    let mut counts = vec![0.0; n_bins];
    for t in tags {
        let tau = (t.timestamp_ps % period_ps) as f64;
        let i = (tau / bin) as usize;
        if i < n_bins {
            counts[i] += 1.0;
        }
    }
    counts
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{ghz_to_angular, ns_to_ps};

    fn paper() -> SystemParams {
        SystemParams::paper_lossless()
    }

    fn small_output(params: &SystemParams, sigma_gamma: f64, n_bar: f64) -> CoherentOutput {
        let gp = if params.g > 0.0 {
            params.gamma_purcell()
        } else {
            params.kappa
        };
        let spec = PulseSpec::new(sigma_gamma / gp, 0.0, n_bar);
        let grid = pulse::default_grid(&spec, gp, 128);
        scatter_coherent(&spec, &grid, params).unwrap()
    }

    #[test]
    fn long_pulse_delays_approach_theory() {
        let p = paper();
        let gp = p.gamma_purcell();
        let spec = PulseSpec::new(8.0 / gp, 0.0, 0.01);
        let obs = observables(&spec, &p, 256).unwrap();
        let d1 = ns_to_ps(obs.delay1);
        let d2 = ns_to_ps(obs.delay2);
        assert!((d1 - 150.15).abs() / 150.15 < 0.05, "delay1 = {d1} ps");
        // two-photon bound delay, perturbative value 1/Gamma + 3/kappa
        assert!((d2 - 61.2).abs() / 61.2 < 0.15, "delay2 = {d2} ps");
        assert!(obs.warning.is_none());
    }

    #[test]
    fn bare_cavity_delay_is_photon_number_independent() {
        let kappa = ghz_to_angular(20.6);
        let p = SystemParams::bare_cavity(kappa, 0.0).unwrap();
        let spec = PulseSpec::new(0.3, 0.0, 0.01);
        let obs = observables(&spec, &p, 256).unwrap();
        let classical = 4.0 / kappa;
        assert!(
            (obs.delay1 - classical).abs() / classical < 0.02,
            "delay1 = {} vs {}",
            obs.delay1,
            classical
        );
        assert!(
            (obs.delay2 - classical).abs() / classical < 0.02,
            "delay2 = {} vs {}",
            obs.delay2,
            classical
        );
    }

    #[test]
    fn observables_warns_outside_weak_regime() {
        let p = paper();
        let spec = PulseSpec::new(8.0 / p.gamma_purcell(), 0.0, 0.2);
        let obs = observables(&spec, &p, 128).unwrap();
        assert!(obs.warning.is_some());
    }

    #[test]
    fn delay_ordering_at_paper_pulse_width() {
        // one-photon delay > two-photon delay > classical cavity delay
        let p = paper();
        let spec = PulseSpec::new(2.2 / p.gamma_purcell(), 0.0, 0.01);
        let obs = observables(&spec, &p, 256).unwrap();
        let cavity = 4.0 / p.kappa;
        assert!(
            obs.delay1 > obs.delay2 && obs.delay2 > cavity,
            "{} > {} > {} violated",
            obs.delay1,
            obs.delay2,
            cavity
        );
    }

    #[test]
    fn tag_streams_are_deterministic_per_seed() {
        let out = small_output(&paper(), 2.2, 0.02);
        let a = sample_tags(&out, 4000, 99).unwrap();
        let b = sample_tags(&out, 4000, 99).unwrap();
        assert_eq!(a, b);
        let c = sample_tags(&out, 4000, 100).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn timestamps_non_decreasing_within_channel() {
        let out = small_output(&paper(), 2.2, 0.05);
        let tags = sample_tags(&out, 20_000, 5).unwrap();
        for stream in [&tags.channel1, &tags.channel2] {
            assert!(stream.windows(2).all(|w| w[0].timestamp_ps <= w[1].timestamp_ps));
        }
    }

    #[test]
    fn pair_to_single_ratio_matches_truncated_statistics() {
        let n_bar = 0.01;
        let out = small_output(&paper(), 2.2, n_bar);
        let n_pulses = 1_000_000u64;
        let tags = sample_tags(&out, n_pulses, 42).unwrap();
        // classify pulses by total tag count
        let mut per_pulse: std::collections::HashMap<u64, u32> = std::collections::HashMap::new();
        for t in tags.channel1.iter().chain(&tags.channel2) {
            *per_pulse.entry(t.timestamp_ps / tags.period_ps).or_insert(0) += 1;
        }
        let singles = per_pulse.values().filter(|&&c| c == 1).count() as f64;
        let pairs = per_pulse.values().filter(|&&c| c == 2).count() as f64;
        let ratio = pairs / singles;
        let expect = n_bar / 2.0;
        // 3 sigma Poisson band on the pair count
        let sigma = expect / pairs.sqrt();
        assert!(
            (ratio - expect).abs() < 3.0 * sigma,
            "ratio = {ratio:.5}, expected {expect:.5} +- {:.5}",
            3.0 * sigma
        );
    }

    #[test]
    fn singles_histogram_converges_to_g1() {
        let out = small_output(&paper(), 2.2, 0.02);
        let tags = sample_tags(&out, 2_000_000, 7).unwrap();
        let grid = out.psi1.grid;
        let window_ps = ns_to_ps(grid.window());
        let n_bins = grid.n_points;
        // keep only single-photon pulses: pair photons follow the psi2
        // marginal, not |psi1|^2
        let mut per_pulse: std::collections::HashMap<u64, Vec<TimeTagRecord>> =
            std::collections::HashMap::new();
        for t in tags.channel1.iter().chain(&tags.channel2) {
            per_pulse.entry(t.timestamp_ps / tags.period_ps).or_default().push(*t);
        }
        let singles: Vec<TimeTagRecord> = per_pulse
            .into_values()
            .filter(|v| v.len() == 1)
            .map(|v| v[0])
            .collect();
        let counts = histogram_singles(&singles, tags.period_ps, window_ps, n_bins);
        let total: f64 = counts.iter().sum();
        // reduced chi^2 against the sampled intensity, bins with >= 10
        // expected counts
        let weights: Vec<f64> = out.psi1.amps.iter().map(|a| a.norm_sqr()).collect();
        let wsum: f64 = weights.iter().sum();
        let mut chi2 = 0.0;
        let mut dof = 0usize;
        for (c, w) in counts.iter().zip(&weights) {
            let expected = total * w / wsum;
            if expected >= 10.0 {
                chi2 += (c - expected) * (c - expected) / expected;
                dof += 1;
            }
        }
        let reduced = chi2 / dof as f64;
        assert!(dof >= 10, "dof = {dof}");
        assert!(reduced < 2.0, "reduced chi^2 = {reduced}");
    }

    #[test]
    fn separable_pairs_give_product_map() {
        // bare cavity: psi2 is an outer product, so the coincidence map
        // factorizes into its marginals
        let kappa = ghz_to_angular(20.1);
        let p = SystemParams::bare_cavity(kappa, 0.0).unwrap();
        let out = small_output(&p, 2.2, 10.0); // force pair-dominated draws
        let tags = sample_tags(&out, 300_000, 11).unwrap();
        let window_ps = ns_to_ps(out.psi1.grid.window());
        let n_bins = 16;
        let map = correlate(&tags, window_ps, n_bins);
        let total: f64 = map.counts.iter().sum();
        let mut row = vec![0.0; n_bins];
        let mut col = vec![0.0; n_bins];
        for i in 0..n_bins {
            for j in 0..n_bins {
                row[i] += map.at(i, j);
                col[j] += map.at(i, j);
            }
        }
        let mut worst = 0.0_f64;
        for i in 0..n_bins {
            for j in 0..n_bins {
                let expected = row[i] * col[j] / total;
                if expected > 50.0 {
                    worst = worst.max((map.at(i, j) - expected).abs() / expected.sqrt());
                }
            }
        }
        assert!(worst < 5.0, "worst deviation {worst} sigma");
    }

    #[test]
    fn correlation_map_is_channel_symmetric() {
        let out = small_output(&paper(), 2.2, 0.05);
        let tags = sample_tags(&out, 200_000, 3).unwrap();
        let map = correlate(&tags, ns_to_ps(out.psi1.grid.window()), 24);
        for i in 0..24 {
            for j in 0..24 {
                assert_eq!(map.at(i, j), map.at(j, i));
            }
        }
        // swapping the physical channel labels leaves the map unchanged
        let swapped = TagStreams {
            period_ps: tags.period_ps,
            channel1: tags.channel2.clone(),
            channel2: tags.channel1.clone(),
        };
        let map2 = correlate(&swapped, ns_to_ps(out.psi1.grid.window()), 24);
        assert_eq!(map.counts, map2.counts);
    }

    #[test]
    fn paper_pairs_cluster_on_the_diagonal() {
        let out = small_output(&paper(), 2.2, 10.0);
        let tags = sample_tags(&out, 200_000, 17).unwrap();
        let n_bins = 16;
        let map = correlate(&tags, ns_to_ps(out.psi1.grid.window()), n_bins);
        let total: f64 = map.counts.iter().sum();
        let mut near_diag = 0.0;
        for i in 0..n_bins {
            for j in 0..n_bins {
                if i.abs_diff(j) <= 1 {
                    near_diag += map.at(i, j);
                }
            }
        }
        // the bound-state dimer concentrates pairs at equal arrival times
        assert!(near_diag / total > 0.5, "diagonal fraction {}", near_diag / total);
    }

    #[test]
    fn histogram_estimator_consistency_improves_with_pulses() {
        let out = small_output(&paper(), 2.2, 10.0);
        let n_bins = 16;
        let window_ps = ns_to_ps(out.psi1.grid.window());
        // reference probabilities from |psi2|^2 coarse-grained to bins
        let n = out.psi2.n();
        let per_bin = n / n_bins;
        let mut reference = vec![0.0; n_bins * n_bins];
        for i in 0..n {
            for j in 0..n {
                let (bi, bj) = (i / per_bin, j / per_bin);
                reference[bi * n_bins + bj] += out.psi2.at(i, j).norm_sqr();
            }
        }
        let rsum: f64 = reference.iter().sum();
        let l1 = |n_pulses: u64, seed: u64| {
            let tags = sample_tags(&out, n_pulses, seed).unwrap();
            let map = correlate(&tags, window_ps, n_bins);
            let total: f64 = map.counts.iter().sum();
            map.counts
                .iter()
                .zip(&reference)
                .map(|(c, r)| (c / total - r / rsum).abs())
                .sum::<f64>()
        };
        let coarse = l1(20_000, 1);
        let fine = l1(400_000, 1);
        assert!(fine < coarse, "L1 {coarse} -> {fine}");
    }

    #[test]
    fn empty_overlap_gives_empty_map() {
        let tags = TagStreams {
            period_ps: 1000,
            channel1: vec![TimeTagRecord {
                channel: 0,
                timestamp_ps: 100,
            }],
            channel2: vec![TimeTagRecord {
                channel: 1,
                timestamp_ps: 2100,
            }],
        };
        let map = correlate(&tags, 1000.0, 8);
        assert_eq!(map.n_coincidences, 0);
        assert!(map.counts.iter().all(|&c| c == 0.0));
    }
}
