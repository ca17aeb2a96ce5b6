#pragma once

// Regression suite over the Monte-Carlo lemma estimators. Reference values
// come from independent fixed-seed oracle runs (tests/oracles).

#include "shadownet/core_math.hpp"

#include <string>
#include <string_view>
#include <vector>

namespace shadownet {

struct OracleValue {
    std::string_view name;
    double value;
    double std_error;
};

/// Frozen oracle results, sorted by name.
const std::vector<OracleValue>& lemma_oracles();
const OracleValue& lemma_oracle(std::string_view name);

struct LemmaCheck {
    std::string name;
    int criterion = 6;
    double estimate = 0.0;
    double bound = 0.0;
    bool pass = false;
    std::string detail;
};

/// Runs every lemma check. `sample_scale` multiplies the default sample
/// counts (each estimator keeps its own minimum).
std::vector<LemmaCheck> run_lemma_suite(RngSeed seed, unsigned threads = 0, double sample_scale = 1.0);

}  // namespace shadownet
