// Synthetic coupled-physiology generator: paired heart-sound / ECG / BP
// records with exact per-beat fiducials, deterministic given a seed.
#pragma once

#include "dualpath/common.hpp"
#include "dualpath/signalio.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace dualpath::synth {

enum class DomainShift { none, rate_shift, amplitude_shift };
const char* domain_shift_name(DomainShift d);
DomainShift domain_shift_from_name(const std::string& s);

struct SynthConfig {
    int n_subjects = 4;
    double seconds_per_subject = 60.0;
    double heart_rate_min_hz = 0.8;  // per-subject base sampled in [min, max]
    double heart_rate_max_hz = 1.6;
    double hr_variability = 0.05;
    double noise_std = 0.05;
    DomainShift domain_shift = DomainShift::none;
    std::uint64_t seed = 1;

    void validate() const;
};

// Per-beat landmark sample indices, absolute within the record.
struct Beat {
    long p_onset = 0;
    long qrs_onset = 0;
    long r_peak = 0;
    long qrs_offset = 0;
    long t_offset = 0;
};

struct FiducialTrack {
    std::vector<Beat> beats;
    void validate() const;  // strictly increasing within a beat, R peaks disjoint
};

struct GeneratedRecord {
    signalio::RawRecord record;
    FiducialTrack track;
};

// Shared beat-timing rule set (also used to delineate ingested ECG).
struct BeatTiming {
    // S1 burst center relative to the R peak; the companion S2 burst sits at
    // the T offset
    double s1_latency_sec = 0.040;
    double qr_sec = 0.040;         // QRS onset -> R
    double rs_sec = 0.040;         // R -> QRS offset
    double pr_scale_sec = 0.160;   // PR interval at RR = 1 s, scales with sqrt(RR)
    double st_scale_sec = 0.300;   // ST interval at RR = 1 s, scales with sqrt(RR)
    double bp_transit_sec = 0.200; // BP peak lag after R
};

std::vector<GeneratedRecord> generate(const SynthConfig& cfg);
GeneratedRecord generate_subject(const SynthConfig& cfg, int subject);

// Fills mask (6 rows x len, order: PR interval, QRS interval, ST interval,
// RR interval, PR segment, ST segment) from half-open fiducial intervals
// clipped to [offset, offset+len). Returns false and zeroes the mask when the
// window holds no complete beat (all five fiducials inside the window).
bool labels_from_fiducials(const FiducialTrack& track, std::size_t offset, int len, std::uint8_t* mask);

// Rule-based delineation for ingested real ECG at 250 Hz; same timing
// constants as the generator (ground truth is weaker than synthetic).
FiducialTrack delineate_ecg(const std::vector<double>& ecg_250hz);

}  // namespace dualpath::synth
