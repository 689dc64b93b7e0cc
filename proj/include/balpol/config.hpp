#pragma once

#include <json.hpp>

#include "balpol/crossfit.hpp"
#include "balpol/learners.hpp"
#include "balpol/policy.hpp"
#include "balpol/simgen.hpp"

namespace balpol {

// JSON forms of the configurable types. Readers fill only the keys present on
// top of the given defaults and throw UsageError on unknown keys or wrong types.

[[nodiscard]] nlohmann::json to_json(const learners::LearnerSpec& spec);
[[nodiscard]] learners::LearnerSpec learner_spec_from_json(const nlohmann::json& j,
                                                           learners::LearnerSpec base);

[[nodiscard]] nlohmann::json to_json(const NuisanceSpecs& specs);
[[nodiscard]] NuisanceSpecs nuisance_specs_from_json(const nlohmann::json& j, NuisanceSpecs base = {});

[[nodiscard]] nlohmann::json to_json(const LearnOptions& opt);
[[nodiscard]] LearnOptions learn_options_from_json(const nlohmann::json& j, LearnOptions base = {});

/// The table is written out in full; on input it may also be the name
/// "canonical" or "mixed_effects".
[[nodiscard]] nlohmann::json to_json(const DgpATable& table);
[[nodiscard]] DgpATable dgp_table_from_json(const nlohmann::json& j);

[[nodiscard]] nlohmann::json to_json(const DgpSpec& spec);
/// Family defaults (short-term noise means) apply before the given keys.
[[nodiscard]] DgpSpec dgp_spec_from_json(const nlohmann::json& j);

[[nodiscard]] nlohmann::json to_json(const RewardEstimate& est);
[[nodiscard]] nlohmann::json to_json(const PolicyMetrics& m);

/// Reads a JSON file; throws UsageError when it cannot be read or parsed.
[[nodiscard]] nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace balpol
