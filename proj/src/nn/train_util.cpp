#include "dynvla/nn/train_util.hpp"

#include <cstring>

#include "dynvla/common/error.hpp"
#include "dynvla/io/array_file.hpp"

namespace dynvla::nn {

Optimizer::Optimizer(std::vector<torch::Tensor> params, OptimConfig cfg) : params_(std::move(params)), cfg_(cfg) {
  cfg_.validate();
  adam_ = std::make_unique<torch::optim::AdamW>(
      params_, torch::optim::AdamWOptions(cfg_.max_lr).betas({cfg_.beta1, cfg_.beta2}).weight_decay(cfg_.weight_decay));
}

double Optimizer::step(std::int64_t step) {
  const double norm = torch::nn::utils::clip_grad_norm_(params_, cfg_.clip_norm);
  const double lr = lr_at(std::min(step, cfg_.total), cfg_);
  for (auto& group : adam_->param_groups()) static_cast<torch::optim::AdamWOptions&>(group.options()).lr(lr);
  adam_->step();
  return norm;
}

void Optimizer::zero_grad() { adam_->zero_grad(); }

namespace {

void add_tensor(io::ArrayFile& file, const std::string& name, const torch::Tensor& t) {
  auto c = t.detach().to(torch::kCPU, torch::kFloat).contiguous();
  std::vector<std::int64_t> shape(c.sizes().begin(), c.sizes().end());
  if (shape.empty()) shape.push_back(1);
  file.add_f32(name, shape, std::span<const float>(c.data_ptr<float>(), static_cast<std::size_t>(c.numel())));
}

void load_tensor(const io::ArrayFile& file, const std::string& name, torch::Tensor& t) {
  if (!file.has(name)) throw FormatError("checkpoint is missing '" + name + "'");
  const auto& arr = file.get(name);
  std::vector<std::int64_t> want(t.sizes().begin(), t.sizes().end());
  if (want.empty()) want.push_back(1);
  if (arr.shape != want) throw FormatError("checkpoint shape mismatch for '" + name + "'");
  const auto values = file.f32(name);
  auto src = torch::from_blob(const_cast<float*>(values.data()), t.sizes(), torch::kFloat).to(t.scalar_type());
  torch::NoGradGuard guard;
  t.copy_(src);
}

}  // namespace

void save_checkpoint(const torch::nn::Module& module, const std::filesystem::path& path,
                     const std::map<std::string, std::string>& meta) {
  io::ArrayFile file;
  for (const auto& [k, v] : meta) file.set_meta(k, v);
  for (const auto& p : module.named_parameters(true)) add_tensor(file, p.key(), p.value());
  for (const auto& b : module.named_buffers(true)) add_tensor(file, b.key(), b.value());
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  file.write(path);
}

std::map<std::string, std::string> load_checkpoint(torch::nn::Module& module, const std::filesystem::path& path) {
  const auto file = io::ArrayFile::read(path);
  for (auto& p : module.named_parameters(true)) load_tensor(file, p.key(), p.value());
  for (auto& b : module.named_buffers(true)) load_tensor(file, b.key(), b.value());
  std::map<std::string, std::string> meta(file.metadata().begin(), file.metadata().end());
  return meta;
}

void copy_state(const torch::nn::Module& src, torch::nn::Module& dst) {
  torch::NoGradGuard guard;
  auto sp = src.named_parameters(true);
  for (auto& p : dst.named_parameters(true)) p.value().copy_(sp[p.key()]);
  auto sb = src.named_buffers(true);
  for (auto& b : dst.named_buffers(true)) b.value().copy_(sb[b.key()]);
}

StateSnapshot snapshot_state(const torch::nn::Module& module, std::int64_t step) {
  torch::NoGradGuard guard;
  StateSnapshot snap;
  snap.step = step;
  for (const auto& p : module.named_parameters(true)) snap.tensors.emplace_back(p.key(), p.value().detach().clone());
  for (const auto& b : module.named_buffers(true)) snap.tensors.emplace_back(b.key(), b.value().detach().clone());
  return snap;
}

void restore_state(const StateSnapshot& snap, torch::nn::Module& module) {
  torch::NoGradGuard guard;
  auto params = module.named_parameters(true);
  auto buffers = module.named_buffers(true);
  for (const auto& [name, t] : snap.tensors) {
    if (auto* p = params.find(name)) {
      p->copy_(t);
    } else if (auto* b = buffers.find(name)) {
      b->copy_(t);
    } else {
      throw ContractViolation("snapshot entry '" + name + "' not found in module");
    }
  }
}

bool all_finite(const torch::nn::Module& module) {
  for (const auto& p : module.parameters(true)) {
    if (!torch::isfinite(p).all().item<bool>()) return false;
  }
  return true;
}

torch::Tensor observation_tensor(const world::Observation& obs) {
  return torch::from_blob(const_cast<float*>(obs.data.data()), {obs.height, obs.width, obs.channels}, torch::kFloat)
      .clone();
}

torch::Tensor observations_tensor(const std::vector<const world::Observation*>& obs) {
  DYNVLA_EXPECT(!obs.empty(), "empty observation batch");
  const auto& o0 = *obs.front();
  auto out = torch::empty({static_cast<std::int64_t>(obs.size()), o0.height, o0.width, o0.channels}, torch::kFloat);
  float* dst = out.data_ptr<float>();
  const std::size_t n = o0.data.size();
  for (const auto* o : obs) {
    DYNVLA_EXPECT(o->data.size() == n, "observation shapes differ within a batch");
    std::memcpy(dst, o->data.data(), n * sizeof(float));
    dst += n;
  }
  return out;
}

torch::Tensor bevs_tensor(const std::vector<const world::BevMap*>& bevs) {
  DYNVLA_EXPECT(!bevs.empty(), "empty bev batch");
  const auto& b0 = *bevs.front();
  auto out = torch::empty({static_cast<std::int64_t>(bevs.size()), b0.height, b0.width}, torch::kLong);
  auto* dst = out.data_ptr<std::int64_t>();
  for (const auto* b : bevs) {
    DYNVLA_EXPECT(b->data.size() == b0.data.size(), "bev shapes differ within a batch");
    for (auto v : b->data) *dst++ = v;
  }
  return out;
}

}  // namespace dynvla::nn
