#include "shadownet/lemma_suite.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace shadownet {

// Output of tests/oracles/lemma_oracles.py (seed 20240601).
const std::vector<OracleValue>& lemma_oracles() {
    static const std::vector<OracleValue> values{
        {"abs_H_sigma100_r2", 0.052069427862166145, 0.0002898929214166695},
        {"concentration_p99_k16_t256_n2048", 1.4686589224054252, 0.017515333223488527},
        {"linear_comb_k16_t256", 5.012443975929533, 0.023062929792401578},
        {"linear_model_median_n4096_m64", 0.22821491359442403, 0.0016192509331180716},
        {"pairwise_cov_k20_t200", 0.01517866022846049, 0.0006863403714363401},
        {"two_correlation_gap", 0.7657402880753565, 0.04074874641878628},
        {"two_layer_q5_k100_t400", 0.297174841846713, 0.008708966006441403},
        {"variance_constant", 3.6008669241224567, 0.0},
    };
    return values;
}

const OracleValue& lemma_oracle(std::string_view name) {
    const auto& all = lemma_oracles();
    const auto it = std::find_if(all.begin(), all.end(), [&](const OracleValue& v) { return v.name == name; });
    if (it == all.end()) throw std::out_of_range("no oracle value named " + std::string(name));
    return *it;
}

}  // namespace shadownet
