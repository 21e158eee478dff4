#include "uqdepth/checkpoint.hpp"

#include <nlohmann/json.hpp>

#include <cstring>
#include <fstream>
#include <iostream>
#include <stdexcept>
#include <vector>

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace uqdepth {

namespace {

constexpr uint32_t kVersion = 1;

std::string dtype_tag(torch::ScalarType t) {
  switch (t) {
    case torch::kFloat32: return "f32";
    case torch::kFloat64: return "f64";
    case torch::kInt64: return "i64";
    default: throw std::runtime_error("unsupported checkpoint dtype");
  }
}

torch::ScalarType dtype_from_tag(const std::string& tag) {
  if (tag == "f32") return torch::kFloat32;
  if (tag == "f64") return torch::kFloat64;
  if (tag == "i64") return torch::kInt64;
  throw std::runtime_error("unsupported checkpoint dtype tag: " + tag);
}

struct Directory {
  std::vector<std::pair<std::string, const torch::Tensor*>> entries;
};

void collect(const std::map<std::string, torch::Tensor>& m, const std::string& prefix,
             Directory& dir) {
  for (const auto& [name, t] : m) dir.entries.emplace_back(prefix + name, &t);
}

}  // namespace

Checkpoint snapshot(const torch::nn::Module& model, const torch::optim::Adam* optimizer,
                    int64_t epoch, const std::string& config_digest,
                    const std::string& model_config_json) {
  Checkpoint ckpt;
  ckpt.epoch = epoch;
  ckpt.config_digest = config_digest;
  ckpt.model_config_json = model_config_json;
  for (const auto& p : model.named_parameters(/*recurse=*/true)) {
    ckpt.tensors[p.key()] = p.value().detach().cpu().contiguous().clone();
  }
  for (const auto& b : model.named_buffers(/*recurse=*/true)) {
    ckpt.tensors[b.key()] = b.value().detach().cpu().contiguous().clone();
  }
  if (optimizer != nullptr) {
    const auto& state = optimizer->state();
    for (const auto& p : model.named_parameters(/*recurse=*/true)) {
      auto it = state.find(p.value().unsafeGetTensorImpl());
      if (it == state.end()) continue;  // parameter never stepped
      const auto& adam = static_cast<const torch::optim::AdamParamState&>(*it->second);
      ckpt.adam_exp_avg[p.key()] = adam.exp_avg().detach().cpu().contiguous().clone();
      ckpt.adam_exp_avg_sq[p.key()] = adam.exp_avg_sq().detach().cpu().contiguous().clone();
      ckpt.adam_steps[p.key()] = adam.step();
    }
  }
  return ckpt;
}

void apply_to(const Checkpoint& ckpt, torch::nn::Module& model, bool strict) {
  torch::NoGradGuard no_grad;
  auto copy_into = [&](const std::string& name, torch::Tensor dst) {
    auto it = ckpt.tensors.find(name);
    if (it == ckpt.tensors.end()) {
      if (strict) throw std::runtime_error("checkpoint is missing tensor \"" + name + "\"");
      return;
    }
    if (it->second.sizes() != dst.sizes()) {
      std::ostringstream os;
      os << "checkpoint shape mismatch for \"" << name << "\": file " << it->second.sizes()
         << " vs model " << dst.sizes();
      throw std::runtime_error(os.str());
    }
    dst.copy_(it->second.to(dst.scalar_type()));
  };
  for (const auto& p : model.named_parameters(/*recurse=*/true)) copy_into(p.key(), p.value());
  for (const auto& b : model.named_buffers(/*recurse=*/true)) copy_into(b.key(), b.value());
}

void restore_adam_state(const Checkpoint& ckpt, torch::optim::Adam& optimizer,
                        const torch::nn::Module& model) {
  auto& state = optimizer.state();
  for (const auto& p : model.named_parameters(/*recurse=*/true)) {
    auto avg = ckpt.adam_exp_avg.find(p.key());
    auto avg_sq = ckpt.adam_exp_avg_sq.find(p.key());
    auto steps = ckpt.adam_steps.find(p.key());
    if (avg == ckpt.adam_exp_avg.end() || avg_sq == ckpt.adam_exp_avg_sq.end() ||
        steps == ckpt.adam_steps.end()) {
      continue;
    }
    auto s = std::make_unique<torch::optim::AdamParamState>();
    s->exp_avg(avg->second.clone());
    s->exp_avg_sq(avg_sq->second.clone());
    s->step(steps->second);
    state[p.value().unsafeGetTensorImpl()] = std::move(s);
  }
}

void save_checkpoint(const Checkpoint& ckpt, const fs::path& path) {
  Directory dir;
  collect(ckpt.tensors, "", dir);
  collect(ckpt.adam_exp_avg, "adam.exp_avg/", dir);
  collect(ckpt.adam_exp_avg_sq, "adam.exp_avg_sq/", dir);

  json header;
  header["epoch"] = ckpt.epoch;
  header["config_digest"] = ckpt.config_digest;
  header["model_config"] = ckpt.model_config_json;
  header["adam_steps"] = ckpt.adam_steps;
  json tensor_list = json::array();
  uint64_t offset = 0;
  for (const auto& [name, t] : dir.entries) {
    TORCH_CHECK(t->is_contiguous(), "checkpoint tensors must be contiguous");
    const uint64_t nbytes = static_cast<uint64_t>(t->numel() * t->element_size());
    tensor_list.push_back({{"name", name},
                           {"dtype", dtype_tag(t->scalar_type())},
                           {"shape", t->sizes().vec()},
                           {"offset", offset}});
    offset += nbytes;
  }
  header["tensors"] = std::move(tensor_list);
  const std::string header_text = header.dump();

  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open for writing: " + tmp.string());
    out.write("UQCK", 4);
    const uint32_t version = kVersion;
    const uint64_t header_len = header_text.size();
    out.write(reinterpret_cast<const char*>(&version), sizeof(version));
    out.write(reinterpret_cast<const char*>(&header_len), sizeof(header_len));
    out.write(header_text.data(), static_cast<std::streamsize>(header_text.size()));
    for (const auto& [name, t] : dir.entries) {
      out.write(static_cast<const char*>(t->const_data_ptr()),
                static_cast<std::streamsize>(t->numel() * t->element_size()));
    }
    if (!out) throw std::runtime_error("write failed: " + tmp.string());
  }
  fs::rename(tmp, path);
}

Checkpoint load_checkpoint(const fs::path& path, const std::string& expected_digest) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path.string());
  char magic[4];
  uint32_t version = 0;
  uint64_t header_len = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  in.read(reinterpret_cast<char*>(&header_len), sizeof(header_len));
  if (!in || std::memcmp(magic, "UQCK", 4) != 0) {
    throw std::runtime_error("not a UQCK checkpoint: " + path.string());
  }
  if (version != kVersion) {
    throw std::runtime_error("unsupported checkpoint version in " + path.string());
  }
  std::string header_text(header_len, '\0');
  in.read(header_text.data(), static_cast<std::streamsize>(header_len));
  if (!in) throw std::runtime_error("truncated checkpoint header: " + path.string());

  json header;
  try {
    header = json::parse(header_text);
  } catch (const json::exception& e) {
    throw std::runtime_error("corrupt checkpoint header in " + path.string() + ": " + e.what());
  }

  Checkpoint ckpt;
  ckpt.epoch = header.at("epoch").get<int64_t>();
  ckpt.config_digest = header.at("config_digest").get<std::string>();
  ckpt.model_config_json = header.at("model_config").get<std::string>();
  ckpt.adam_steps = header.at("adam_steps").get<std::map<std::string, int64_t>>();

  if (!expected_digest.empty() && expected_digest != ckpt.config_digest) {
    std::cerr << "warning: checkpoint config digest " << ckpt.config_digest
              << " does not match expected " << expected_digest << " (" << path.string()
              << "); loading anyway\n";
  }

  const std::streampos payload_start = in.tellg();
  for (const auto& entry : header.at("tensors")) {
    const std::string name = entry.at("name").get<std::string>();
    const auto shape = entry.at("shape").get<std::vector<int64_t>>();
    const auto dtype = dtype_from_tag(entry.at("dtype").get<std::string>());
    const uint64_t offset = entry.at("offset").get<uint64_t>();
    auto t = torch::empty(shape, dtype);
    in.seekg(payload_start + static_cast<std::streamoff>(offset));
    in.read(static_cast<char*>(t.data_ptr()),
            static_cast<std::streamsize>(t.numel() * t.element_size()));
    if (!in) throw std::runtime_error("truncated checkpoint payload: " + path.string());
    if (name.rfind("adam.exp_avg/", 0) == 0) {
      ckpt.adam_exp_avg[name.substr(13)] = t;
    } else if (name.rfind("adam.exp_avg_sq/", 0) == 0) {
      ckpt.adam_exp_avg_sq[name.substr(16)] = t;
    } else {
      ckpt.tensors[name] = t;
    }
  }
  return ckpt;
}

}  // namespace uqdepth
