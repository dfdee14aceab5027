#include "dualpath/signalio.hpp"

#include <fftw3.h>
#include <nlohmann/json.hpp>

#include <cmath>
#include <complex>
#include <cstring>
#include <mutex>

namespace dualpath::signalio {

using json = nlohmann::json;

const char* protocol_name(Protocol p) {
    switch (p) {
        case Protocol::resting: return "resting";
        case Protocol::valsalva: return "valsalva";
        case Protocol::apnea: return "apnea";
        case Protocol::tilt_up: return "tilt_up";
        case Protocol::tilt_down: return "tilt_down";
    }
    return "?";
}

Protocol protocol_from_name(const std::string& s) {
    if (s == "resting") return Protocol::resting;
    if (s == "valsalva") return Protocol::valsalva;
    if (s == "apnea") return Protocol::apnea;
    if (s == "tilt_up") return Protocol::tilt_up;
    if (s == "tilt_down") return Protocol::tilt_down;
    throw InputError("unknown protocol: " + s);
}

void SubjectAttributes::validate() const {
    if (!(bmi > 0.0)) throw InputError("attributes: bmi must be positive");
    if (!(age > 0.0)) throw InputError("attributes: age must be positive");
    if (sex != 0 && sex != 1) throw InputError("attributes: sex must be 0 or 1");
}

void RawRecord::validate() const {
    if (heart_sound.size() != ecg.size() || ecg.size() != bp.size())
        throw InputError("record " + std::to_string(subject_id) + ": channel lengths differ");
    if (source_rate_hz <= 0)
        throw InputError("record " + std::to_string(subject_id) + ": source_rate_hz must be positive");
    if (!all_finite(heart_sound) || !all_finite(ecg) || !all_finite(bp))
        throw InputError("record " + std::to_string(subject_id) + ": non-finite samples");
    attributes.validate();
}

void PairedSample::validate() const {
    if (hs.size() != kWindowLen || ecg.size() != kWindowLen || bp.size() != kWindowLen)
        throw InputError("paired sample: window length must be 2048");
    if (seg_mask.size() != static_cast<std::size_t>(kSegClasses) * kWindowLen)
        throw InputError("paired sample: mask must be 6x2048");
    if (!all_finite(hs) || !all_finite(ecg) || !all_finite(bp))
        throw InputError("paired sample: non-finite samples");
    if (subject_id < 0 || subject_id >= 30) throw InputError("paired sample: subject_id out of [0,30)");
    for (std::uint8_t m : seg_mask)
        if (m > 1) throw InputError("paired sample: mask entries must be 0/1");
}

// ---------------------------------------------------------------------------
// FFT helpers (FFTW planning is not thread-safe; execution of our plans is
// serialized through the same lock since plans are created per call)
// ---------------------------------------------------------------------------
namespace {

std::mutex g_fftw_mutex;

std::vector<std::complex<double>> rfft(const std::vector<double>& x) {
    const std::size_t n = x.size();
    std::vector<std::complex<double>> out(n / 2 + 1);
    std::vector<double> in(x);
    std::lock_guard<std::mutex> lock(g_fftw_mutex);
    fftw_plan plan = fftw_plan_dft_r2c_1d(static_cast<int>(n), in.data(),
                                          reinterpret_cast<fftw_complex*>(out.data()), FFTW_ESTIMATE);
    fftw_execute(plan);
    fftw_destroy_plan(plan);
    return out;
}

std::vector<double> irfft(std::vector<std::complex<double>> spec, std::size_t n_out) {
    std::vector<double> out(n_out);
    std::lock_guard<std::mutex> lock(g_fftw_mutex);
    fftw_plan plan = fftw_plan_dft_c2r_1d(static_cast<int>(n_out),
                                          reinterpret_cast<fftw_complex*>(spec.data()), out.data(),
                                          FFTW_ESTIMATE | FFTW_DESTROY_INPUT);
    fftw_execute(plan);
    fftw_destroy_plan(plan);
    return out;
}

}  // namespace

std::size_t resampled_length(std::size_t len, int src_rate, int dst_rate) {
    return static_cast<std::size_t>(
        std::llround(static_cast<double>(len) * dst_rate / static_cast<double>(src_rate)));
}

std::vector<double> resample_fft(const std::vector<double>& x, int src_rate, int dst_rate) {
    if (src_rate == dst_rate) return x;
    const std::size_t n_in = x.size();
    const std::size_t n_out = resampled_length(n_in, src_rate, dst_rate);
    if (n_out < 2) throw InputError("resample: output would be shorter than 2 samples");
    auto spec = rfft(x);
    std::vector<std::complex<double>> out_spec(n_out / 2 + 1, {0.0, 0.0});
    const std::size_t keep = std::min(spec.size(), out_spec.size());
    for (std::size_t k = 0; k < keep; ++k) out_spec[k] = spec[k];
    // a shared Nyquist bin must stay real-valued
    if (keep == out_spec.size() && n_out % 2 == 0 && keep > 0)
        out_spec[keep - 1] = {out_spec[keep - 1].real(), 0.0};
    auto y = irfft(std::move(out_spec), n_out);
    const double scale = 1.0 / static_cast<double>(n_in);
    for (double& v : y) v *= scale;
    return y;
}

std::vector<double> bandpass_fft(const std::vector<double>& x, int rate_hz, double lo_hz, double hi_hz) {
    if (!(lo_hz >= 0.0 && hi_hz > lo_hz)) throw InputError("bandpass: invalid band edges");
    const std::size_t n = x.size();
    if (n < 2) throw InputError("bandpass: signal too short");
    auto spec = rfft(x);
    const double df = static_cast<double>(rate_hz) / static_cast<double>(n);
    for (std::size_t k = 0; k < spec.size(); ++k) {
        const double f = df * static_cast<double>(k);
        if (f < lo_hz || f > hi_hz) spec[k] = {0.0, 0.0};
    }
    auto y = irfft(std::move(spec), n);
    const double scale = 1.0 / static_cast<double>(n);
    for (double& v : y) v *= scale;
    return y;
}

void zscore(std::vector<double>& x) {
    if (x.empty()) return;
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(x.size());
    double var = 0.0;
    for (double v : x) var += (v - mean) * (v - mean);
    var /= static_cast<double>(x.size());
    if (var < 1e-24) {  // zero-variance guard: constant channels map to zeros
        std::fill(x.begin(), x.end(), 0.0);
        return;
    }
    const double istd = 1.0 / std::sqrt(var);
    for (double& v : x) v = (v - mean) * istd;
}

RawRecord preprocess(const RawRecord& rec, const FilterSpec& spec) {
    rec.validate();
    RawRecord out = rec;
    if (rec.source_rate_hz != kTargetRateHz) {
        out.heart_sound = resample_fft(rec.heart_sound, rec.source_rate_hz, kTargetRateHz);
        out.ecg = resample_fft(rec.ecg, rec.source_rate_hz, kTargetRateHz);
        out.bp = resample_fft(rec.bp, rec.source_rate_hz, kTargetRateHz);
        out.source_rate_hz = kTargetRateHz;
    }
    if (out.length() < kWindowLen)
        throw InputError("record " + std::to_string(rec.subject_id) + ": shorter than one window (" +
                         std::to_string(out.length()) + " samples at 250 Hz)");
    out.heart_sound = bandpass_fft(out.heart_sound, kTargetRateHz, spec.hs_low, spec.hs_high);
    out.ecg = bandpass_fft(out.ecg, kTargetRateHz, spec.ecg_low, spec.ecg_high);
    out.bp = bandpass_fft(out.bp, kTargetRateHz, spec.bp_low, spec.bp_high);
    if (!all_finite(out.heart_sound) || !all_finite(out.ecg) || !all_finite(out.bp))
        throw InputError("record " + std::to_string(rec.subject_id) + ": non-finite samples after filtering");
    // BP scale is captured before normalization so MAE can be reported in
    // the original units
    double mean = 0.0;
    for (double v : out.bp) mean += v;
    mean /= static_cast<double>(out.bp.size());
    double var = 0.0;
    for (double v : out.bp) var += (v - mean) * (v - mean);
    var /= static_cast<double>(out.bp.size());
    out.bp_mean = mean;
    out.bp_std = var < 1e-24 ? 1.0 : std::sqrt(var);
    zscore(out.heart_sound);
    zscore(out.ecg);
    zscore(out.bp);
    return out;
}

// ---------------------------------------------------------------------------
// Windowing
// ---------------------------------------------------------------------------
std::size_t train_window_count(std::size_t record_len) {
    if (record_len < kWindowLen) return 0;
    return (record_len - kWindowLen) / kTrainStride + 1;
}

std::size_t test_window_count(std::size_t record_len) { return record_len / kWindowLen; }

namespace {

PairedSample cut_window(const RawRecord& rec, const LabelContext& ctx, std::size_t off) {
    PairedSample w;
    w.hs.resize(kWindowLen);
    w.ecg.resize(kWindowLen);
    w.bp.resize(kWindowLen);
    for (int t = 0; t < kWindowLen; ++t) {
        w.hs[t] = static_cast<float>(rec.heart_sound[off + t]);
        w.ecg[t] = static_cast<float>(rec.ecg[off + t]);
        w.bp[t] = static_cast<float>(rec.bp[off + t]);
    }
    w.seg_mask.assign(static_cast<std::size_t>(kSegClasses) * kWindowLen, 0);
    if (ctx.mask_fn) {
        w.has_complete_beat = ctx.mask_fn(ctx.base_offset + off, w.seg_mask.data());
    } else {
        w.has_complete_beat = false;
    }
    w.subject_id = rec.subject_id;
    w.bmi_class = ctx.bmi_class;
    w.sex = rec.attributes.sex;
    w.age_class = ctx.age_class;
    w.bp_mean = static_cast<float>(rec.bp_mean);
    w.bp_std = static_cast<float>(rec.bp_std);
    w.record_id = ctx.record_id;
    w.protocol = rec.protocol;
    return w;
}

std::vector<PairedSample> window_impl(const RawRecord& rec, const LabelContext& ctx, std::size_t stride,
                                      std::vector<std::string>* warnings) {
    std::vector<PairedSample> out;
    const std::size_t len = rec.length();
    if (len < kWindowLen) {
        if (warnings)
            warnings->push_back("record " + std::to_string(rec.subject_id) + ": length " +
                                std::to_string(len) + " < 2048, no windows emitted");
        return out;
    }
    for (std::size_t off = 0; off + kWindowLen <= len; off += stride) out.push_back(cut_window(rec, ctx, off));
    return out;
}

}  // namespace

std::vector<PairedSample> window_train(const RawRecord& rec, const LabelContext& ctx,
                                       std::vector<std::string>* warnings) {
    return window_impl(rec, ctx, kTrainStride, warnings);
}

std::vector<PairedSample> window_test(const RawRecord& rec, const LabelContext& ctx,
                                      std::vector<std::string>* warnings) {
    return window_impl(rec, ctx, kWindowLen, warnings);
}

// ---------------------------------------------------------------------------
// Split
// ---------------------------------------------------------------------------
SplitResult split_by_ratio(const std::vector<RawRecord>& records, double train_fraction) {
    SplitResult res;
    int record_id = 0;
    for (const auto& rec : records) {
        const std::size_t len = rec.length();
        const std::size_t cut = static_cast<std::size_t>(std::floor(train_fraction * static_cast<double>(len)));
        auto slice = [&](std::size_t a, std::size_t b) {
            RawRecord part = rec;
            part.heart_sound.assign(rec.heart_sound.begin() + a, rec.heart_sound.begin() + b);
            part.ecg.assign(rec.ecg.begin() + a, rec.ecg.begin() + b);
            part.bp.assign(rec.bp.begin() + a, rec.bp.begin() + b);
            return part;
        };
        if (cut >= kWindowLen) {
            res.train.push_back({slice(0, cut), 0, record_id});
        } else {
            res.diagnostics.push_back("subject " + std::to_string(rec.subject_id) + " record " +
                                      std::to_string(record_id) + ": train part " + std::to_string(cut) +
                                      " samples < 2048, excluded from train");
        }
        if (len - cut >= kWindowLen) {
            res.test.push_back({slice(cut, len), cut, record_id});
        } else {
            res.diagnostics.push_back("subject " + std::to_string(rec.subject_id) + " record " +
                                      std::to_string(record_id) + ": test part " + std::to_string(len - cut) +
                                      " samples < 2048, excluded from test");
        }
        ++record_id;
    }
    return res;
}

// ---------------------------------------------------------------------------
// Record files
// ---------------------------------------------------------------------------
void write_record(const std::filesystem::path& base, const RawRecord& rec) {
    rec.validate();
    const std::size_t len = rec.length();
    std::vector<float> buf;
    buf.reserve(3 * len);
    for (double v : rec.heart_sound) buf.push_back(static_cast<float>(v));
    for (double v : rec.ecg) buf.push_back(static_cast<float>(v));
    for (double v : rec.bp) buf.push_back(static_cast<float>(v));
    std::filesystem::path bin = base;
    bin += ".bin";
    atomic_write_file(bin, buf.data(), buf.size() * sizeof(float));

    json side;
    side["subject_id"] = rec.subject_id;
    side["protocol"] = protocol_name(rec.protocol);
    side["source_rate_hz"] = rec.source_rate_hz;
    side["lengths"] = {len, len, len};
    side["bmi"] = rec.attributes.bmi;
    side["sex"] = rec.attributes.sex;
    side["age"] = rec.attributes.age;
    std::filesystem::path sj = base;
    sj += ".json";
    atomic_write_file(sj, side.dump(2) + "\n");
}

RawRecord read_record(const std::filesystem::path& base) {
    std::filesystem::path sj = base;
    sj += ".json";
    if (!std::filesystem::exists(sj)) throw InputError("missing sidecar JSON: " + sj.string());
    json side;
    try {
        side = json::parse(read_file(sj));
    } catch (const json::exception& e) {
        throw InputError("malformed sidecar " + sj.string() + ": " + e.what());
    }
    RawRecord rec;
    try {
        rec.subject_id = side.at("subject_id").get<int>();
        rec.protocol = protocol_from_name(side.at("protocol").get<std::string>());
        rec.source_rate_hz = side.at("source_rate_hz").get<int>();
        rec.attributes.bmi = side.at("bmi").get<double>();
        rec.attributes.sex = side.at("sex").get<int>();
        rec.attributes.age = side.at("age").get<double>();
    } catch (const json::exception& e) {
        throw InputError("sidecar " + sj.string() + " missing field: " + e.what());
    }
    const auto lengths = side.at("lengths").get<std::vector<std::size_t>>();
    if (lengths.size() != 3 || lengths[0] != lengths[1] || lengths[1] != lengths[2])
        throw InputError("sidecar " + sj.string() + ": channel lengths must be three equal values");
    const std::size_t len = lengths[0];

    std::filesystem::path bin = base;
    bin += ".bin";
    const std::string raw = read_file(bin);
    if (raw.size() != 3 * len * sizeof(float))
        throw InputError("record data size mismatch: " + bin.string());
    std::vector<float> buf(3 * len);
    std::memcpy(buf.data(), raw.data(), raw.size());
    rec.heart_sound.assign(buf.begin(), buf.begin() + len);
    rec.ecg.assign(buf.begin() + len, buf.begin() + 2 * len);
    rec.bp.assign(buf.begin() + 2 * len, buf.end());
    rec.validate();
    return rec;
}

// ---------------------------------------------------------------------------
// Shards
// ---------------------------------------------------------------------------
namespace {
constexpr char kShardMagic[8] = {'D', 'P', 'S', 'H', '0', '0', '0', '1'};

template <typename T>
void put(std::string& out, const T& v) {
    out.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T take(const std::string& in, std::size_t& off) {
    if (off + sizeof(T) > in.size()) throw InputError("shard: truncated");
    T v;
    std::memcpy(&v, in.data() + off, sizeof(T));
    off += sizeof(T);
    return v;
}
}  // namespace

void write_shard(const std::filesystem::path& path, const std::vector<PairedSample>& windows) {
    std::string out;
    out.append(kShardMagic, sizeof(kShardMagic));
    put<std::uint64_t>(out, windows.size());
    for (const auto& w : windows) {
        w.validate();
        put<std::int32_t>(out, w.subject_id);
        put<std::int32_t>(out, w.bmi_class);
        put<std::int32_t>(out, w.sex);
        put<std::int32_t>(out, w.age_class);
        put<std::int32_t>(out, w.record_id);
        put<std::int32_t>(out, static_cast<std::int32_t>(w.protocol));
        put<std::int32_t>(out, w.has_complete_beat ? 1 : 0);
        put<float>(out, w.bp_mean);
        put<float>(out, w.bp_std);
        out.append(reinterpret_cast<const char*>(w.hs.data()), sizeof(float) * kWindowLen);
        out.append(reinterpret_cast<const char*>(w.ecg.data()), sizeof(float) * kWindowLen);
        out.append(reinterpret_cast<const char*>(w.bp.data()), sizeof(float) * kWindowLen);
        out.append(reinterpret_cast<const char*>(w.seg_mask.data()), w.seg_mask.size());
    }
    atomic_write_file(path, out);
}

std::vector<PairedSample> read_shard(const std::filesystem::path& path) {
    const std::string in = read_file(path);
    if (in.size() < sizeof(kShardMagic) + 8 || std::memcmp(in.data(), kShardMagic, sizeof(kShardMagic)) != 0)
        throw InputError("not a shard file: " + path.string());
    std::size_t off = sizeof(kShardMagic);
    const auto count = take<std::uint64_t>(in, off);
    std::vector<PairedSample> out;
    out.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) {
        PairedSample w;
        w.subject_id = take<std::int32_t>(in, off);
        w.bmi_class = take<std::int32_t>(in, off);
        w.sex = take<std::int32_t>(in, off);
        w.age_class = take<std::int32_t>(in, off);
        w.record_id = take<std::int32_t>(in, off);
        w.protocol = static_cast<Protocol>(take<std::int32_t>(in, off));
        w.has_complete_beat = take<std::int32_t>(in, off) != 0;
        w.bp_mean = take<float>(in, off);
        w.bp_std = take<float>(in, off);
        auto take_f32 = [&](std::vector<float>& dst) {
            dst.resize(kWindowLen);
            if (off + sizeof(float) * kWindowLen > in.size()) throw InputError("shard: truncated");
            std::memcpy(dst.data(), in.data() + off, sizeof(float) * kWindowLen);
            off += sizeof(float) * kWindowLen;
        };
        take_f32(w.hs);
        take_f32(w.ecg);
        take_f32(w.bp);
        const std::size_t msz = static_cast<std::size_t>(kSegClasses) * kWindowLen;
        if (off + msz > in.size()) throw InputError("shard: truncated");
        w.seg_mask.assign(in.begin() + off, in.begin() + off + msz);
        off += msz;
        out.push_back(std::move(w));
    }
    return out;
}

}  // namespace dualpath::signalio
