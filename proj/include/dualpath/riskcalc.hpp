// Transfer-risk calculus: empirical risks, the multi-task training term,
// the risk-bound shape and the indirect-path dominance criterion.
#pragma once

#include "dualpath/common.hpp"

#include <string>
#include <vector>

namespace dualpath::risk {

// (n, t, nu, C(F)) parameters of one transfer path
struct PathProfile {
    double n = 1.0;    // samples per task
    double t = 1.0;    // number of tasks
    double nu = 1.0;   // task diversity
    double c_f = 0.0;  // task-specific capacity
    std::string label;

    void validate() const;
    std::string to_json() const;
    static PathProfile from_json(const std::string& text);
};

struct SharedCapacity {
    double c_h = 0.0;  // shared-representation capacity
    void validate() const;
};

// (1/(n*t)) sum over the t x n per-sample loss matrix
double empirical_train_risk(const std::vector<std::vector<double>>& losses);
// (1/m) sum over per-sample losses on the target task
double empirical_test_risk(const std::vector<double>& losses);

// (1/nu) * sqrt((C(H) + t*C(F)) / (n*t))
double train_term(const PathProfile& p, const SharedCapacity& shared);

struct DominanceReport {
    bool indirect_dominates = false;
    double indirect_term = 0.0;
    double direct_term = 0.0;
};

// strict comparison of training terms (same-target adaptation terms cancel)
DominanceReport dominance(const PathProfile& indirect, const PathProfile& direct,
                          const SharedCapacity& shared);

// constant * (train_term + sqrt(C(F)/m)); the hidden polylog factors are
// absorbed into the caller-supplied constant, so this is a bound shape, not
// a certified bound
double tl_risk_bound(const PathProfile& p, const SharedCapacity& shared, double m, double constant = 1.0);

}  // namespace dualpath::risk
