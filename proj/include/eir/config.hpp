#pragma once

#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "eir/data.hpp"
#include "eir/trainer.hpp"

namespace eir {

struct DatasetConfig {
  enum class Type { synthetic, cifar10, raw };
  Type type = Type::synthetic;
  SyntheticSpec synthetic;
  std::string path;       // cifar10 directory or raw train file
  std::string test_path;  // raw test file
  bool normalize = false;
};

/// One run = training recipe + data source. Mirrors the JSON config
/// file field-for-field; unknown keys are rejected by name.
struct RunConfig {
  TrainConfig train;
  DatasetConfig dataset;
};

RunConfig parse_run_config(const nlohmann::json& doc);
nlohmann::json run_config_to_json(const RunConfig& config);
/// Canonical text form (sorted keys); checkpoint echo and manifest use this.
std::string canonical_config_json(const RunConfig& config);

/// "dotted.path=value" override applied to the raw JSON document; the value
/// is parsed as JSON when possible, else taken as a string.
void apply_override(nlohmann::json& doc, const std::string& assignment);

RunConfig load_run_config(const std::filesystem::path& file,
                          const std::vector<std::string>& overrides = {});
RunConfig run_config_from_text(const std::string& text,
                               const std::vector<std::string>& overrides = {});

/// Materializes (train, test) datasets. Relative paths resolve against
/// EIR_DATA_DIR when it is set.
std::pair<Dataset, Dataset> load_datasets(const DatasetConfig& config);

}  // namespace eir
