#ifndef HIPRSSM_CHECKPOINT_HPP_
#define HIPRSSM_CHECKPOINT_HPP_

#include <optional>
#include <string>

#include "hiprssm/model.hpp"
#include "hiprssm/params.hpp"

namespace hiprssm {

struct TrainConfig {
  double lr = 8e-4;
  int batch_size = 32;
  int epochs = 50;
  double clip_norm = 5.0;
  uint64_t seed = 0;
  LossKind loss = LossKind::rmse;
  double train_imputation = 0.0;  // fraction of observations masked
  int eval_every = 1;             // epochs between metric rows
  uint64_t eval_seed = 12345;     // dedicated seed for evaluation masks

  void validate() const;
};

// Optimizer state carried alongside a checkpoint for bit-exact resume.
struct OptimizerState {
  Eigen::VectorXd m;
  Eigen::VectorXd v;
  int64_t step = 0;
};

// On-disk checkpoint: `manifest.json` describing parameter names, shapes,
// dtype, the model/train configuration, RNG seed and step count, plus
// `params.bin`, a flat little-endian float64 file of all parameter values
// concatenated in manifest order. Optimizer state, when present, lives in a
// separate `optimizer.bin` (m then v, same order).
void save_checkpoint(const std::string& dir, const HipRssmModel& model,
                     const TrainConfig& train_cfg, int64_t step,
                     const OptimizerState* opt_state);

struct LoadedCheckpoint {
  std::unique_ptr<HipRssmModel> model;
  TrainConfig train_cfg;
  int64_t step = 0;
  std::optional<OptimizerState> opt_state;
};

LoadedCheckpoint load_checkpoint(const std::string& dir);

}  // namespace hiprssm

#endif  // HIPRSSM_CHECKPOINT_HPP_
