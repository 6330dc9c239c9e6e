#pragma once

#include <string>
#include <vector>

#include "nwf/codec.hpp"
#include "nwf/image.hpp"
#include "nwf/model.hpp"
#include "nwf/optim.hpp"

namespace nwf {

// key = value text file; unknown keys rejected.
struct TrainConfig {
  int epochs = 20;
  int batch_size = 32;
  int repeat = 2;
  int n_hidden = 2;
  int hidden_channel = 64;
  double lr_base = 1e-3;
  double decay = 0.99;
  int k = 5;  // mixture components for the final block
  uint64_t seed = 0;
  std::string colorspace = "rgb";  // rgb | ycbcr
  int patch_size = 16;
  bool prior_net_enabled = false;
  int scheme = 1;               // 1 | 2
  std::string init = "legall";  // legall | haar | zero | random
  int channels = 3;
  double val_fraction = 0.1;

  void validate() const;
  static TrainConfig from_file(const std::string& path);
  static TrainConfig from_text(const std::string& text);
};

struct EpochMetrics {
  int epoch;
  double train_bpd;
  double val_bpd;
  double lr;
};

// Mean bits-per-dimension of a batch under the model, differentiable.
// continuous=true disables rounding (used for gradient checks).
Tensor batch_loss_bpd(const std::vector<const ImageU8*>& batch, const Model& model,
                      bool continuous = false);

// Mean BPD over patches without building a graph.
double eval_bpd(const std::vector<const ImageU8*>& patches, const Model& model);

Model build_model_for_training(const TrainConfig& cfg);

// Runs epochs [start_epoch, cfg.epochs); checkpoints (model file + .opt
// optimizer sidecar) after every epoch when checkpoint_path is set; checks
// integer-mode invertibility on a probe patch after every epoch.
std::vector<EpochMetrics> train_model(Model& model, Adamax& opt, const TrainConfig& cfg,
                                      const CorpusIter& train_set,
                                      const std::vector<const ImageU8*>& val_patches,
                                      const std::string& checkpoint_path = "",
                                      int start_epoch = 0);

std::string metrics_csv(const std::vector<EpochMetrics>& rows);

// Optimizer sidecar so a resumed run continues identically.
void save_optimizer(const Adamax& opt, int next_epoch, const std::string& path);
int load_optimizer(Adamax& opt, const std::string& path);  // returns next_epoch

// Deterministic train/val split by patch index hash.
void split_train_val(const std::vector<ImageU8>& patches, double val_fraction, uint64_t seed,
                     std::vector<ImageU8>* train_out, std::vector<ImageU8>* val_out);

}  // namespace nwf
