// Shared plumbing: errors, deterministic RNG, seed derivation, hashing,
// atomic file writes, number formatting.
#pragma once

#include <cstdint>
#include <cstdio>
#include <cmath>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace dualpath {

// ---------------------------------------------------------------------------
// Error taxonomy. The CLI maps these onto process exit codes:
//   InputError -> 2, StageOrderError -> 3, DivergenceError -> 4.
// ---------------------------------------------------------------------------
struct InputError : std::runtime_error {
    explicit InputError(const std::string& msg) : std::runtime_error(msg) {}
};
struct ConfigError : InputError {
    explicit ConfigError(const std::string& msg) : InputError(msg) {}
};
struct StageOrderError : std::runtime_error {
    explicit StageOrderError(const std::string& msg) : std::runtime_error(msg) {}
};
struct DivergenceError : std::runtime_error {
    explicit DivergenceError(const std::string& msg) : std::runtime_error(msg) {}
};

// ---------------------------------------------------------------------------
// Hashing
// ---------------------------------------------------------------------------
inline std::uint64_t fnv1a64(const void* data, std::size_t len, std::uint64_t h = 0xcbf29ce484222325ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t fnv1a64(std::string_view s) { return fnv1a64(s.data(), s.size()); }

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// All randomness flows from one root seed; per-stage streams are derived by
// keying the root with the stage name so partial re-runs stay consistent.
inline std::uint64_t derive_seed(std::uint64_t root, std::string_view key) {
    return splitmix64(root ^ fnv1a64(key));
}

inline std::string hash_hex(std::uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return std::string(buf);
}

// ---------------------------------------------------------------------------
// Deterministic RNG. mt19937_64 engine with explicit uniform/normal mappings
// (std::*_distribution is implementation-defined and would break run-to-run
// byte identity across standard libraries).
// ---------------------------------------------------------------------------
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    // uniform in [0, 1), 53-bit resolution
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller, no spare caching so consumption is call-count predictable
    double normal() {
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    double normal(double mean, double std) { return mean + std * normal(); }

    // integer in [0, n)
    std::size_t index(std::size_t n) {
        return static_cast<std::size_t>(uniform() * static_cast<double>(n)) % n;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = index(i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 gen_;
};

// ---------------------------------------------------------------------------
// Atomic file write: write to a temp sibling, then rename.
// ---------------------------------------------------------------------------
void atomic_write_file(const std::filesystem::path& path, const std::string& bytes);
void atomic_write_file(const std::filesystem::path& path, const void* data, std::size_t len);

std::string read_file(const std::filesystem::path& path);

// Fixed-format double for CSV/JSON artifacts: shortest round-trip-exact form.
std::string fmt_double(double v);

inline bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}
inline bool all_finite(const std::vector<float>& v) {
    for (float x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

}  // namespace dualpath
