// Data model, ingestion, preprocessing and windowing for paired
// physiological recordings (heart sound / ECG / blood pressure).
#pragma once

#include "dualpath/common.hpp"

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

namespace dualpath::signalio {

constexpr int kWindowLen = 2048;
constexpr int kTargetRateHz = 250;
constexpr int kTrainStride = 256;
constexpr int kSegClasses = 6;

enum class Protocol { resting, valsalva, apnea, tilt_up, tilt_down };
const char* protocol_name(Protocol p);
Protocol protocol_from_name(const std::string& s);

struct SubjectAttributes {
    double bmi = 22.0;  // kg/m^2
    int sex = 0;        // {0,1}
    double age = 30.0;  // years
    void validate() const;
};

struct RawRecord {
    int subject_id = 0;
    Protocol protocol = Protocol::resting;
    std::vector<double> heart_sound;
    std::vector<double> ecg;
    std::vector<double> bp;  // mmHg before normalization
    int source_rate_hz = kTargetRateHz;
    SubjectAttributes attributes;

    // per-record BP statistics captured by preprocess, for de-normalization
    double bp_mean = 0.0;
    double bp_std = 1.0;

    std::size_t length() const { return heart_sound.size(); }
    void validate() const;  // equal channel lengths, positive rate, finite samples
};

struct FilterSpec {
    double hs_low = 20.0, hs_high = 120.0;
    double ecg_low = 0.5, ecg_high = 40.0;
    double bp_low = 0.5, bp_high = 40.0;
};

// One 2048-sample time-aligned training/evaluation frame.
struct PairedSample {
    std::vector<float> hs, ecg, bp;        // length kWindowLen each, z-scored units
    std::vector<std::uint8_t> seg_mask;    // kSegClasses * kWindowLen, rows:
                                           // PR int, QRS int, ST int, RR int, PR seg, ST seg
    int subject_id = 0;                    // in [0, 30)
    int bmi_class = 0;                     // {0,1,2}
    int sex = 0;                           // {0,1}
    int age_class = 0;                     // {0,1,2}
    float bp_mean = 0.0f, bp_std = 1.0f;   // copied from the source record
    int record_id = 0;
    Protocol protocol = Protocol::resting;
    bool has_complete_beat = true;
    void validate() const;
};

// ---------------------------------------------------------------------------
// Preprocessing primitives
// ---------------------------------------------------------------------------
std::size_t resampled_length(std::size_t len, int src_rate, int dst_rate);
// exact band-limited rational resampling via spectral truncation/padding
std::vector<double> resample_fft(const std::vector<double>& x, int src_rate, int dst_rate);
// zero-phase band-pass: spectral mask keeping lo <= f <= hi (a projection,
// hence idempotent)
std::vector<double> bandpass_fft(const std::vector<double>& x, int rate_hz, double lo_hz, double hi_hz);
// in-place z-score with a zero-variance guard (constant -> zeros)
void zscore(std::vector<double>& x);

// Resample to 250 Hz, band-pass per FilterSpec, z-score per record.
// Rejects (InputError) records with non-finite output or shorter than one
// window at 250 Hz.
RawRecord preprocess(const RawRecord& rec, const FilterSpec& spec);

// ---------------------------------------------------------------------------
// Windowing
// ---------------------------------------------------------------------------
struct LabelContext {
    int bmi_class = 0;
    int age_class = 0;
    // fills a kSegClasses*kWindowLen mask for the window starting at the
    // given absolute offset; returns whether the window holds a complete beat
    std::function<bool(std::size_t offset, std::uint8_t* mask)> mask_fn;
    std::size_t base_offset = 0;  // offset of this record slice in its source record
    int record_id = 0;
};

std::size_t train_window_count(std::size_t record_len);
std::size_t test_window_count(std::size_t record_len);

// sliding windows, stride 256; record shorter than one window -> empty + warning
std::vector<PairedSample> window_train(const RawRecord& rec, const LabelContext& ctx,
                                       std::vector<std::string>* warnings = nullptr);
// non-overlapping windows, tail dropped
std::vector<PairedSample> window_test(const RawRecord& rec, const LabelContext& ctx,
                                      std::vector<std::string>* warnings = nullptr);

// ---------------------------------------------------------------------------
// Train/test split: first 80% of each record's timeline vs last 20%.
// ---------------------------------------------------------------------------
struct SplitPart {
    RawRecord rec;
    std::size_t base_offset = 0;  // sample offset of this part in the source record
    int record_id = 0;
};

struct SplitResult {
    std::vector<SplitPart> train;
    std::vector<SplitPart> test;
    std::vector<std::string> diagnostics;  // excluded parts
};

SplitResult split_by_ratio(const std::vector<RawRecord>& records, double train_fraction = 0.8);

// ---------------------------------------------------------------------------
// On-disk formats
// ---------------------------------------------------------------------------
// RawRecord: <base>.bin holds little-endian float32 of hs|ecg|bp concatenated;
// <base>.json sidecar holds {subject_id, protocol, source_rate_hz, lengths,
// bmi, sex, age}.
void write_record(const std::filesystem::path& base, const RawRecord& rec);
RawRecord read_record(const std::filesystem::path& base);

// PairedSample shard: binary container with a fixed per-window layout.
void write_shard(const std::filesystem::path& path, const std::vector<PairedSample>& windows);
std::vector<PairedSample> read_shard(const std::filesystem::path& path);

}  // namespace dualpath::signalio
