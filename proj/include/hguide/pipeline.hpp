// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <string>

#include <json.hpp>

namespace hguide::pipeline {

// One JSON document with a section per module. Unknown keys anywhere are a
// configuration error; user documents are deep-merged over the defaults and
// dotted-path overrides applied last.
nlohmann::json default_config();
nlohmann::json load_config(const std::string& path);
void deep_merge(nlohmann::json* base, const nlohmann::json& over);
void apply_override(nlohmann::json* cfg, const std::string& key_equals_value);
void validate_config(const nlohmann::json& cfg);

// Stages. Each writes its artifacts plus a <stage>_manifest.json into
// out_dir and returns the manifest. Stages read prior-stage artifacts from
// the same out_dir and raise dependency errors naming the stage to run.
nlohmann::json run_simulate(const nlohmann::json& cfg, const std::string& out_dir);
nlohmann::json run_train_h(const nlohmann::json& cfg, const std::string& out_dir);
nlohmann::json run_train_q(const nlohmann::json& cfg, const std::string& out_dir);
nlohmann::json run_sample(const nlohmann::json& cfg, const std::string& out_dir);
nlohmann::json run_eval(const nlohmann::json& cfg, const std::string& out_dir);
nlohmann::json run_oracle(const nlohmann::json& cfg, const std::string& out_dir);
nlohmann::json run_stress(const nlohmann::json& cfg, const std::string& out_dir);
nlohmann::json run_all_synthetic(const nlohmann::json& cfg, const std::string& out_dir);

// exit codes: 0 ok, 2 config, 3 dependency, 4 numerical/domain/format
int exit_code_for(const std::exception& e);
int run_cli(int argc, const char* const* argv);

}  // namespace hguide::pipeline
