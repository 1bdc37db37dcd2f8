#ifndef HIPRSSM_CONFIG_HPP_
#define HIPRSSM_CONFIG_HPP_

#include <string>

#include "hiprssm/checkpoint.hpp"
#include "hiprssm/data.hpp"
#include "hiprssm/model.hpp"

namespace hiprssm {

struct EvalConfig {
  int horizon = 50;
  uint64_t eval_seed = 12345;
};

// Full run configuration; every field has a documented default. Parsing is
// strict: unknown keys are rejected with a field-level message, and
// cross-field constraints are validated before any work happens.
struct RunConfig {
  SimSpec sim;
  ModelConfig model;
  TrainConfig train;
  EvalConfig eval;
};

RunConfig default_run_config();

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);
std::string run_config_to_json(const RunConfig& cfg);

// Fills model.d_o/d_a from the dataset when left 0 and cross-checks them
// otherwise.
void resolve_model_dims(ModelConfig& model, int d_o, int d_a);

}  // namespace hiprssm

#endif  // HIPRSSM_CONFIG_HPP_
