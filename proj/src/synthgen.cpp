#include "dualpath/synthgen.hpp"

#include <algorithm>
#include <cmath>

namespace dualpath::synth {

using signalio::kTargetRateHz;
using signalio::kWindowLen;

const char* domain_shift_name(DomainShift d) {
    switch (d) {
        case DomainShift::none: return "none";
        case DomainShift::rate_shift: return "rate_shift";
        case DomainShift::amplitude_shift: return "amplitude_shift";
    }
    return "?";
}

DomainShift domain_shift_from_name(const std::string& s) {
    if (s == "none") return DomainShift::none;
    if (s == "rate_shift") return DomainShift::rate_shift;
    if (s == "amplitude_shift") return DomainShift::amplitude_shift;
    throw ConfigError("unknown domain_shift: " + s);
}

void SynthConfig::validate() const {
    if (n_subjects < 1 || n_subjects > 30) throw ConfigError("synth: n_subjects must be in [1, 30]");
    if (!(heart_rate_min_hz >= 0.8 && heart_rate_max_hz <= 1.6 && heart_rate_min_hz <= heart_rate_max_hz))
        throw ConfigError("synth: heart rate base range must lie within [0.8, 1.6] Hz");
    if (hr_variability < 0.0 || hr_variability > 0.5) throw ConfigError("synth: hr_variability out of range");
    if (noise_std < 0.0) throw ConfigError("synth: noise_std must be nonnegative");
    // the 8:2 split must leave at least one full window in the 20% part
    if (seconds_per_subject * kTargetRateHz * 0.2 < kWindowLen)
        throw ConfigError("synth: seconds_per_subject too short for train/test windows (need >= 41 s)");
    // every window must hold at least one full beat
    const double slowest = heart_rate_min_hz / 1.0;
    if (kTargetRateHz / slowest > kWindowLen / 2.0)
        throw ConfigError("synth: heart rate too slow for one full beat per window");
}

void FiducialTrack::validate() const {
    long prev_r = -1;
    for (const auto& b : beats) {
        if (!(b.p_onset < b.qrs_onset && b.qrs_onset < b.r_peak && b.r_peak < b.qrs_offset &&
              b.qrs_offset < b.t_offset))
            throw InputError("fiducial track: beat landmarks not strictly increasing");
        if (b.r_peak <= prev_r) throw InputError("fiducial track: R peaks not increasing");
        prev_r = b.r_peak;
    }
}

namespace {

constexpr BeatTiming kTiming{};

struct SubjectTraits {
    double base_hr_hz;
    double r_amp, q_amp, s_amp, p_amp, t_amp;
    double s1_amp, s2_amp, s1_freq, s2_freq;
    double systolic, diastolic;
    signalio::SubjectAttributes attrs;
};

// Subject traits are stratified over independent permutations of the subject
// index, so any two subjects differ markedly in several of: heart rate,
// T/P-wave amplitude, and S1 burst frequency.
double strat_slot(const SynthConfig& cfg, int subject, const char* trait, Rng& rng) {
    std::vector<int> perm(static_cast<std::size_t>(cfg.n_subjects));
    for (int i = 0; i < cfg.n_subjects; ++i) perm[static_cast<std::size_t>(i)] = i;
    Rng perm_rng(derive_seed(cfg.seed, std::string("strata.") + trait));
    perm_rng.shuffle(perm);
    return (perm[static_cast<std::size_t>(subject)] + 0.1 + 0.8 * rng.uniform()) / cfg.n_subjects;
}

SubjectTraits sample_traits(const SynthConfig& cfg, int subject, Rng& rng) {
    SubjectTraits tr;
    const double span = cfg.heart_rate_max_hz - cfg.heart_rate_min_hz;
    tr.base_hr_hz = cfg.heart_rate_min_hz + span * (subject + 0.1 + 0.8 * rng.uniform()) / cfg.n_subjects;
    tr.r_amp = rng.uniform(0.9, 1.2);
    tr.q_amp = -rng.uniform(0.10, 0.18);
    tr.s_amp = -rng.uniform(0.15, 0.25);
    tr.p_amp = 0.06 + 0.14 * strat_slot(cfg, subject, "p_amp", rng);
    tr.t_amp = 0.16 + 0.26 * strat_slot(cfg, subject, "t_amp", rng);
    tr.s1_amp = rng.uniform(0.8, 1.1);
    tr.s2_amp = rng.uniform(0.45, 0.70);
    tr.s1_freq = 30.0 + 28.0 * strat_slot(cfg, subject, "s1_freq", rng);
    tr.s2_freq = rng.uniform(60.0, 90.0);
    tr.systolic = rng.uniform(110.0, 140.0);
    tr.diastolic = rng.uniform(70.0, 90.0);
    tr.attrs.bmi = rng.uniform(17.0, 32.0);
    tr.attrs.age = rng.uniform(20.0, 40.0);
    tr.attrs.sex = rng.uniform() < 0.5 ? 0 : 1;
    return tr;
}

inline void add_gaussian(std::vector<double>& sig, double center, double sigma, double amp) {
    const long lo = std::max(0L, static_cast<long>(std::floor(center - 4.0 * sigma)));
    const long hi = std::min(static_cast<long>(sig.size()) - 1, static_cast<long>(std::ceil(center + 4.0 * sigma)));
    for (long t = lo; t <= hi; ++t) {
        const double d = (static_cast<double>(t) - center) / sigma;
        sig[static_cast<std::size_t>(t)] += amp * std::exp(-0.5 * d * d);
    }
}

inline void add_burst(std::vector<double>& sig, double center, double sigma, double amp, double freq_hz) {
    const long lo = std::max(0L, static_cast<long>(std::floor(center - 4.0 * sigma)));
    const long hi = std::min(static_cast<long>(sig.size()) - 1, static_cast<long>(std::ceil(center + 4.0 * sigma)));
    for (long t = lo; t <= hi; ++t) {
        const double d = (static_cast<double>(t) - center) / sigma;
        const double phase = 2.0 * M_PI * freq_hz * (static_cast<double>(t) - center) / kTargetRateHz;
        sig[static_cast<std::size_t>(t)] += amp * std::exp(-0.5 * d * d) * std::cos(phase);
    }
}

// asymmetric smooth pulse: gaussian rise, slower gaussian fall
inline void add_pulse(std::vector<double>& sig, double center, double rise, double fall, double amp) {
    const long lo = std::max(0L, static_cast<long>(std::floor(center - 4.0 * rise)));
    const long hi = std::min(static_cast<long>(sig.size()) - 1, static_cast<long>(std::ceil(center + 4.0 * fall)));
    for (long t = lo; t <= hi; ++t) {
        const double d = static_cast<double>(t) - center;
        const double s = d < 0.0 ? rise : fall;
        sig[static_cast<std::size_t>(t)] += amp * std::exp(-0.5 * (d / s) * (d / s));
    }
}

}  // namespace

GeneratedRecord generate_subject(const SynthConfig& cfg, int subject) {
    cfg.validate();
    Rng rng(derive_seed(cfg.seed, "synth.subject." + std::to_string(subject)));
    SubjectTraits tr = sample_traits(cfg, subject, rng);

    double hr = tr.base_hr_hz;
    double s2_amp = tr.s2_amp;
    signalio::Protocol protocol = signalio::Protocol::resting;
    if (cfg.domain_shift == DomainShift::rate_shift) {
        hr *= 1.3;
        protocol = signalio::Protocol::tilt_up;
    } else if (cfg.domain_shift == DomainShift::amplitude_shift) {
        s2_amp *= 0.5;
        protocol = signalio::Protocol::valsalva;
    }

    const std::size_t n = static_cast<std::size_t>(std::llround(cfg.seconds_per_subject * kTargetRateHz));
    std::vector<double> ecg(n, 0.0), hs(n, 0.0), bp(n, 0.0);

    // ---- beat grid ----
    // Beats are rendered over the whole record, with boundary beats clipped
    // at the edges; only beats whose fiducials all fall inside the record
    // enter the track, so ground-truth labels never reference clipped beats.
    FiducialTrack track;
    std::vector<Beat> rendered;
    double r_time = 0.3 * kTargetRateHz / hr;
    double wander = 0.0;
    while (true) {
        const double w = std::clamp(wander, -2.0, 2.0);
        const double rr_sec = (1.0 / hr) * (1.0 + cfg.hr_variability * w);
        const long r = static_cast<long>(std::llround(r_time));
        if (r >= static_cast<long>(n) + static_cast<long>(kTargetRateHz / hr)) break;
        const long qrs_on = r - static_cast<long>(std::llround(kTiming.qr_sec * kTargetRateHz));
        const long qrs_off = r + static_cast<long>(std::llround(kTiming.rs_sec * kTargetRateHz));
        const long pr_len = static_cast<long>(std::llround(kTiming.pr_scale_sec * std::sqrt(rr_sec) * kTargetRateHz));
        const long st_len = static_cast<long>(std::llround(kTiming.st_scale_sec * std::sqrt(rr_sec) * kTargetRateHz));
        Beat b;
        b.p_onset = qrs_on - pr_len;
        b.qrs_onset = qrs_on;
        b.r_peak = r;
        b.qrs_offset = qrs_off;
        b.t_offset = qrs_off + st_len;
        rendered.push_back(b);
        if (b.p_onset >= 0 && b.t_offset < static_cast<long>(n)) track.beats.push_back(b);
        r_time += rr_sec * kTargetRateHz;
        wander = 0.7 * wander + 0.3 * rng.normal();
    }
    if (track.beats.size() < 2)
        throw ConfigError("synth: record too short to hold two beats (subject " + std::to_string(subject) + ")");
    track.validate();

    // ---- waveforms ----
    for (std::size_t k = 0; k < rendered.size(); ++k) {
        const Beat& b = rendered[k];
        const double pr_len = static_cast<double>(b.qrs_onset - b.p_onset);
        const double st_len = static_cast<double>(b.t_offset - b.qrs_offset);
        // ECG lobes
        add_gaussian(ecg, 0.5 * (b.p_onset + b.qrs_onset), std::max(2.0, pr_len / 5.0), tr.p_amp);
        add_gaussian(ecg, b.r_peak - 6.0, 2.0, tr.q_amp);
        add_gaussian(ecg, b.r_peak, 3.0, tr.r_amp);
        add_gaussian(ecg, b.r_peak + 6.0, 2.0, tr.s_amp);
        add_gaussian(ecg, b.qrs_offset + 0.55 * st_len, std::max(3.0, st_len / 4.5), tr.t_amp);
        // heart sound bursts: S1 trails the R peak by the fixed latency, S2
        // sits at the T offset
        add_burst(hs, b.r_peak + kTiming.s1_latency_sec * kTargetRateHz, 6.0, tr.s1_amp, tr.s1_freq);
        add_burst(hs, b.t_offset, 5.0, s2_amp, tr.s2_freq);
        // BP pulse: peak lags R by a fixed transit delay, amplitude tracks
        // the subject's systolic/diastolic pair
        const double rr_here = k + 1 < rendered.size()
                                   ? static_cast<double>(rendered[k + 1].r_peak - b.r_peak)
                                   : kTargetRateHz / hr;
        add_pulse(bp, b.r_peak + kTiming.bp_transit_sec * kTargetRateHz, 0.06 * kTargetRateHz,
                  std::min(0.22 * kTargetRateHz, 0.35 * rr_here), tr.systolic - tr.diastolic);
    }
    for (double& v : bp) v += tr.diastolic;

    if (cfg.noise_std > 0.0) {
        for (double& v : hs) v += cfg.noise_std * rng.normal();
        for (double& v : ecg) v += cfg.noise_std * rng.normal();
        for (double& v : bp) v += cfg.noise_std * rng.normal();
    }

    GeneratedRecord out;
    out.record.subject_id = subject;
    out.record.protocol = protocol;
    out.record.heart_sound = std::move(hs);
    out.record.ecg = std::move(ecg);
    out.record.bp = std::move(bp);
    out.record.source_rate_hz = kTargetRateHz;
    out.record.attributes = tr.attrs;
    out.track = std::move(track);
    return out;
}

std::vector<GeneratedRecord> generate(const SynthConfig& cfg) {
    cfg.validate();
    std::vector<GeneratedRecord> out;
    out.reserve(cfg.n_subjects);
    for (int s = 0; s < cfg.n_subjects; ++s) out.push_back(generate_subject(cfg, s));
    return out;
}

// ---------------------------------------------------------------------------
// Labels
// ---------------------------------------------------------------------------
namespace {
inline void fill_run(std::uint8_t* row, long a, long b, long off, int len) {
    // half-open [a, b) in absolute samples, clipped to [off, off+len)
    const long lo = std::max(a, off);
    const long hi = std::min(b, off + len);
    for (long t = lo; t < hi; ++t) row[t - off] = 1;
}
}  // namespace

bool labels_from_fiducials(const FiducialTrack& track, std::size_t offset, int len, std::uint8_t* mask) {
    const long off = static_cast<long>(offset);
    std::fill(mask, mask + static_cast<std::size_t>(6) * len, 0);
    bool complete = false;
    for (const auto& b : track.beats)
        if (b.p_onset >= off && b.t_offset < off + len) {
            complete = true;
            break;
        }
    if (!complete) return false;

    std::uint8_t* pr_row = mask + 0 * static_cast<std::size_t>(len);
    std::uint8_t* qrs_row = mask + 1 * static_cast<std::size_t>(len);
    std::uint8_t* st_row = mask + 2 * static_cast<std::size_t>(len);
    std::uint8_t* rr_row = mask + 3 * static_cast<std::size_t>(len);
    std::uint8_t* prs_row = mask + 4 * static_cast<std::size_t>(len);
    std::uint8_t* sts_row = mask + 5 * static_cast<std::size_t>(len);

    for (std::size_t k = 0; k < track.beats.size(); ++k) {
        const Beat& b = track.beats[k];
        fill_run(pr_row, b.p_onset, b.qrs_onset, off, len);
        fill_run(qrs_row, b.qrs_onset, b.qrs_offset, off, len);
        fill_run(st_row, b.qrs_offset, b.t_offset, off, len);
        if (k + 1 < track.beats.size())
            fill_run(rr_row, b.r_peak, track.beats[k + 1].r_peak, off, len);
        // PR segment: final 40% of the PR interval; ST segment: initial 60%
        // of the ST interval (fixed fractional approximations)
        const long pr_len = b.qrs_onset - b.p_onset;
        const long st_len = b.t_offset - b.qrs_offset;
        fill_run(prs_row, b.qrs_onset - static_cast<long>(std::llround(0.4 * pr_len)), b.qrs_onset, off, len);
        fill_run(sts_row, b.qrs_offset, b.qrs_offset + static_cast<long>(std::llround(0.6 * st_len)), off, len);
    }
    return true;
}

// ---------------------------------------------------------------------------
// Delineation of ingested ECG (same rule set as the generator)
// ---------------------------------------------------------------------------
FiducialTrack delineate_ecg(const std::vector<double>& ecg) {
    FiducialTrack track;
    if (ecg.size() < 2) return track;
    double peak = 0.0;
    for (double v : ecg) peak = std::max(peak, v);
    if (peak <= 0.0) return track;
    const double thresh = 0.6 * peak;
    const long refractory = static_cast<long>(std::llround(0.2 * kTargetRateHz));

    std::vector<long> r_peaks;
    long last = -refractory;
    for (long t = 1; t + 1 < static_cast<long>(ecg.size()); ++t) {
        const std::size_t u = static_cast<std::size_t>(t);
        if (ecg[u] >= thresh && ecg[u] >= ecg[u - 1] && ecg[u] >= ecg[u + 1] && t - last >= refractory) {
            r_peaks.push_back(t);
            last = t;
        }
    }
    if (r_peaks.size() < 2) return track;

    for (std::size_t k = 0; k < r_peaks.size(); ++k) {
        const long r = r_peaks[k];
        const double rr_prev = k > 0 ? static_cast<double>(r - r_peaks[k - 1]) / kTargetRateHz
                                     : static_cast<double>(r_peaks[1] - r_peaks[0]) / kTargetRateHz;
        const double rr_next = k + 1 < r_peaks.size()
                                   ? static_cast<double>(r_peaks[k + 1] - r) / kTargetRateHz
                                   : rr_prev;
        Beat b;
        b.r_peak = r;
        b.qrs_onset = r - static_cast<long>(std::llround(kTiming.qr_sec * kTargetRateHz));
        b.qrs_offset = r + static_cast<long>(std::llround(kTiming.rs_sec * kTargetRateHz));
        b.p_onset = b.qrs_onset -
                    static_cast<long>(std::llround(kTiming.pr_scale_sec * std::sqrt(rr_prev) * kTargetRateHz));
        b.t_offset = b.qrs_offset +
                     static_cast<long>(std::llround(kTiming.st_scale_sec * std::sqrt(rr_next) * kTargetRateHz));
        if (b.p_onset < 0 || b.t_offset >= static_cast<long>(ecg.size())) continue;
        track.beats.push_back(b);
    }
    track.validate();
    return track;
}

}  // namespace dualpath::synth
