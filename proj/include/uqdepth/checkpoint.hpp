#pragma once

#include <torch/torch.h>

#include <filesystem>
#include <map>
#include <string>

namespace uqdepth {

/// Serialized training state. Tensor names follow the module hierarchy
/// ("local.stem.weight", ...); Adam moments ride along per parameter.
struct Checkpoint {
  int64_t epoch = 0;
  std::string config_digest;
  std::string model_config_json;
  std::map<std::string, torch::Tensor> tensors;            // parameters + buffers
  std::map<std::string, torch::Tensor> adam_exp_avg;       // first moments
  std::map<std::string, torch::Tensor> adam_exp_avg_sq;    // second moments
  std::map<std::string, int64_t> adam_steps;
};

/// Clones all parameters/buffers (and Adam state when an optimizer is given).
Checkpoint snapshot(const torch::nn::Module& model, const torch::optim::Adam* optimizer,
                    int64_t epoch, const std::string& config_digest,
                    const std::string& model_config_json);

/// Copies checkpoint tensors into the model. strict requires the checkpoint
/// to cover every parameter/buffer; non-strict copies the intersection
/// (used to merge per-branch pretraining checkpoints into the joint model).
/// Shape disagreement is always an error naming the tensor.
void apply_to(const Checkpoint& ckpt, torch::nn::Module& model, bool strict = true);

/// Re-seats saved Adam moments onto the optimizer's parameter states.
void restore_adam_state(const Checkpoint& ckpt, torch::optim::Adam& optimizer,
                        const torch::nn::Module& model);

/// Single-file binary: magic "UQCK", u32 version, u64 JSON header length,
/// JSON header, raw little-endian tensor payload. Writes are atomic
/// (temp file + rename).
void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);

/// expected_digest, when non-empty and different from the stored digest,
/// produces a warning on stderr; the load still succeeds.
Checkpoint load_checkpoint(const std::filesystem::path& path,
                           const std::string& expected_digest = "");

}  // namespace uqdepth
