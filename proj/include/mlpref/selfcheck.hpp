#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace mlpref {

// Reference values the embedded checks compare against. Tests swap in a
// corrupted copy to exercise the failure path.
struct SelfcheckFixtures {
  double ln2 = 0.6931471805599453;
  double neg_log_sigmoid_one = 0.31326168751822286;
  double accuracy_example = 2.0 / 3.0;  // scores {0.9, 0.8, 0.9} at 0.85
  double two_dialogue_cumulative = 10.0 / 3.0;
  double two_dialogue_mean = 3.5;
  std::vector<std::size_t> ig_sizes_90k_k5{30000, 60000, 90000};
  std::string chunk_phrase = "a white motorhome, which is parked on a street";
  std::uint64_t seed = 7;
};

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
};

std::vector<CheckResult> run_selfcheck(const SelfcheckFixtures& fixtures = {});

}  // namespace mlpref
