#include "dualpath/riskcalc.hpp"

#include <nlohmann/json.hpp>

#include <cmath>

namespace dualpath::risk {

using json = nlohmann::json;

void PathProfile::validate() const {
    if (!(n > 0.0)) throw InputError("path profile: n must be positive");
    if (!(t > 0.0)) throw InputError("path profile: t must be positive");
    if (!(nu > 0.0)) throw InputError("path profile: nu must be positive");
    if (!(c_f >= 0.0)) throw InputError("path profile: C(F) must be nonnegative");
}

std::string PathProfile::to_json() const {
    json j;
    j["label"] = label;
    j["n"] = n;
    j["t"] = t;
    j["nu"] = nu;
    j["c_f"] = c_f;
    return j.dump(2);
}

PathProfile PathProfile::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw InputError(std::string("path profile: malformed JSON: ") + e.what());
    }
    PathProfile p;
    try {
        p.n = j.at("n").get<double>();
        p.t = j.at("t").get<double>();
        p.nu = j.at("nu").get<double>();
        p.c_f = j.at("c_f").get<double>();
    } catch (const json::exception& e) {
        throw InputError(std::string("path profile: missing field: ") + e.what());
    }
    p.label = j.value("label", "");
    p.validate();
    return p;
}

void SharedCapacity::validate() const {
    if (!(c_h >= 0.0)) throw InputError("shared capacity: C(H) must be nonnegative");
}

double empirical_train_risk(const std::vector<std::vector<double>>& losses) {
    if (losses.empty() || losses.front().empty()) throw InputError("empirical_train_risk: empty loss matrix");
    const std::size_t n = losses.front().size();
    double sum = 0.0;
    for (const auto& row : losses) {
        if (row.size() != n) throw InputError("empirical_train_risk: ragged loss matrix");
        for (double v : row) {
            if (!(v >= 0.0) || !std::isfinite(v)) throw InputError("empirical_train_risk: losses must be finite and nonnegative");
            sum += v;
        }
    }
    return sum / (static_cast<double>(losses.size()) * static_cast<double>(n));
}

double empirical_test_risk(const std::vector<double>& losses) {
    if (losses.empty()) throw InputError("empirical_test_risk: empty loss vector");
    double sum = 0.0;
    for (double v : losses) {
        if (!(v >= 0.0) || !std::isfinite(v)) throw InputError("empirical_test_risk: losses must be finite and nonnegative");
        sum += v;
    }
    return sum / static_cast<double>(losses.size());
}

double train_term(const PathProfile& p, const SharedCapacity& shared) {
    p.validate();
    shared.validate();
    return (1.0 / p.nu) * std::sqrt((shared.c_h + p.t * p.c_f) / (p.n * p.t));
}

DominanceReport dominance(const PathProfile& indirect, const PathProfile& direct,
                          const SharedCapacity& shared) {
    DominanceReport r;
    r.indirect_term = train_term(indirect, shared);
    r.direct_term = train_term(direct, shared);
    r.indirect_dominates = r.indirect_term < r.direct_term;
    return r;
}

double tl_risk_bound(const PathProfile& p, const SharedCapacity& shared, double m, double constant) {
    if (!(m > 0.0)) throw InputError("tl_risk_bound: m must be positive");
    return constant * (train_term(p, shared) + std::sqrt(p.c_f / m));
}

}  // namespace dualpath::risk
