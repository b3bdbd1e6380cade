#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace stag {

struct SuiteResult {
    std::string name;
    bool passed = false;
    std::string detail;  // failing instance for reproduction; empty on success
};

// Bundled property suites. Each returns a named pass/fail result; thrown
// exceptions are converted into failures by the runner.
SuiteResult verify_edgeconv_equivalence(int instances, std::uint64_t seed);
SuiteResult verify_edgeconv_flop_ratio();
SuiteResult verify_gradient_elision(int d, int L, const std::vector<int>& a_values);
SuiteResult verify_finite_difference();
SuiteResult verify_init_identity();
SuiteResult verify_lr_endpoints();
SuiteResult verify_geometry(std::uint64_t seed);
SuiteResult verify_param_accounting();
SuiteResult verify_weight_roundtrip(const std::string& tmp_dir);

// The full battery at desk scale. All suites run even after a failure.
std::vector<SuiteResult> run_verify(const std::string& tmp_dir);

}  // namespace stag
