#include "swae/checkpoint.hpp"

#include <array>
#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace swae {

namespace {

constexpr char kMagic[8] = {'S', 'W', 'A', 'E', 'C', 'K', 'P', '1'};

void put_u32(std::string& out, uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_u64(std::string& out, uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) { put_u64(out, std::bit_cast<uint64_t>(v)); }

class Reader {
 public:
  Reader(const unsigned char* data, size_t len) : data_(data), len_(len) {}

  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(data_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
  }
  double f64() { return std::bit_cast<double>(u64()); }
  const unsigned char* bytes(size_t n) {
    need(n);
    const unsigned char* p = data_ + pos_;
    pos_ += n;
    return p;
  }
  size_t pos() const { return pos_; }
  size_t remaining() const { return len_ - pos_; }

 private:
  void need(size_t n) const {
    if (pos_ + n > len_) {
      throw std::runtime_error("checkpoint truncated at byte " + std::to_string(pos_) +
                               " (need " + std::to_string(n) + " more)");
    }
  }
  const unsigned char* data_;
  size_t len_;
  size_t pos_ = 0;
};

nlohmann::json spec_to_json(const HierarchySpec& spec) {
  return {{"n_layers", spec.n_layers},
          {"latent_dims", spec.latent_dims},
          {"data_dim", spec.data_dim},
          {"hidden_units", spec.hidden_units},
          {"deterministic_bottom", spec.deterministic_bottom}};
}

HierarchySpec spec_from_json(const nlohmann::json& j) {
  HierarchySpec spec;
  spec.n_layers = j.at("n_layers").get<int>();
  spec.latent_dims = j.at("latent_dims").get<std::vector<int>>();
  spec.data_dim = j.at("data_dim").get<int>();
  spec.hidden_units = j.at("hidden_units").get<std::vector<int>>();
  spec.deterministic_bottom = j.at("deterministic_bottom").get<bool>();
  return spec;
}

}  // namespace

uint32_t crc32(const unsigned char* data, size_t len, uint32_t seed) {
  static const auto table = [] {
    std::array<uint32_t, 256> t{};
    for (uint32_t i = 0; i < 256; ++i) {
      uint32_t c = i;
      for (int k = 0; k < 8; ++k) c = (c & 1) ? 0xEDB88320u ^ (c >> 1) : c >> 1;
      t[i] = c;
    }
    return t;
  }();
  uint32_t crc = seed ^ 0xFFFFFFFFu;
  for (size_t i = 0; i < len; ++i) crc = table[(crc ^ data[i]) & 0xff] ^ (crc >> 8);
  return crc ^ 0xFFFFFFFFu;
}

Checkpoint Checkpoint::capture(const StackedWaeModel& model, const AdamState& adam,
                               const std::map<std::string, std::string>& config_echo,
                               int64_t step, int epochs_done, uint64_t rng_state) {
  Checkpoint ckpt;
  ckpt.spec = model.spec;
  ckpt.config_echo = config_echo;
  ckpt.step = step;
  ckpt.epochs_done = epochs_done;
  ckpt.rng_state = rng_state;

  for_each_param(model, [&](const std::string& name, const Tensor& t) {
    ckpt.tensors.emplace_back(name, t);
  });
  size_t idx = 0;
  for_each_param(model, [&](const std::string& name, const Tensor&) {
    if (idx >= adam.m.size()) {
      throw std::invalid_argument("adam state shorter than parameter list");
    }
    ckpt.tensors.emplace_back("adam.m." + name, adam.m[idx]);
    ckpt.tensors.emplace_back("adam.v." + name, adam.v[idx]);
    ++idx;
  });
  for_each_bn_state(model, [&](const std::string& name, const BatchNormState& s) {
    ckpt.tensors.emplace_back(name + ".running_mean", s.running_mean);
    ckpt.tensors.emplace_back(name + ".running_var", s.running_var);
  });
  return ckpt;
}

const Tensor& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors) {
    if (n == name) return t;
  }
  throw std::runtime_error("checkpoint has no tensor named '" + name + "'");
}

StackedWaeModel Checkpoint::restore_model() const {
  RngState dummy(0);
  StackedWaeModel model = build_model(spec, dummy);
  for_each_param(model, [&](const std::string& name, Tensor& t) {
    const Tensor& saved = tensor(name);
    if (saved.shape != t.shape) {
      throw std::runtime_error("checkpoint tensor '" + name + "' has shape " +
                               shape_str(saved.shape) + ", model expects " +
                               shape_str(t.shape));
    }
    t.data = saved.data;
  });
  for_each_bn_state(model, [&](const std::string& name, BatchNormState& s) {
    s.running_mean.data = tensor(name + ".running_mean").data;
    s.running_var.data = tensor(name + ".running_var").data;
  });
  return model;
}

AdamState Checkpoint::restore_adam(const StackedWaeModel& model) const {
  AdamState state;
  state.step = step;
  for_each_param(model, [&](const std::string& name, const Tensor& t) {
    Tensor m = tensor("adam.m." + name);
    Tensor v = tensor("adam.v." + name);
    if (m.shape != t.shape || v.shape != t.shape) {
      throw std::runtime_error("checkpoint adam moments for '" + name + "' have wrong shape");
    }
    state.m.push_back(std::move(m));
    state.v.push_back(std::move(v));
  });
  return state;
}

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  nlohmann::json header;
  header["spec"] = spec_to_json(ckpt.spec);
  header["config"] = ckpt.config_echo;
  header["step"] = ckpt.step;
  header["epochs_done"] = ckpt.epochs_done;
  header["rng_state"] = ckpt.rng_state;
  nlohmann::json dir = nlohmann::json::array();
  for (const auto& [name, t] : ckpt.tensors) {
    dir.push_back({{"name", name}, {"shape", t.shape}});
  }
  header["tensors"] = dir;
  const std::string header_bytes = header.dump();

  std::string blob;
  blob.append(kMagic, sizeof(kMagic));
  put_u32(blob, Checkpoint::kVersion);
  put_u64(blob, header_bytes.size());
  blob += header_bytes;
  for (const auto& [name, t] : ckpt.tensors) {
    for (double v : t.data) put_f64(blob, v);
  }
  put_u32(blob, crc32(reinterpret_cast<const unsigned char*>(blob.data()), blob.size()));

  namespace fs = std::filesystem;
  const fs::path target(path);
  if (target.has_parent_path()) fs::create_directories(target.parent_path());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open checkpoint path for writing: " + tmp.string());
    out.write(blob.data(), static_cast<std::streamsize>(blob.size()));
    if (!out) throw std::runtime_error("failed writing checkpoint: " + tmp.string());
  }
  fs::rename(tmp, target);
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint: " + path);
  std::vector<unsigned char> blob((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  if (blob.size() < sizeof(kMagic) + 4 + 8 + 4) {
    throw std::runtime_error("checkpoint too short (" + std::to_string(blob.size()) +
                             " bytes): " + path);
  }
  const uint32_t stored_crc = [&] {
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= static_cast<uint32_t>(blob[blob.size() - 4 + i]) << (8 * i);
    }
    return v;
  }();
  const uint32_t actual_crc = crc32(blob.data(), blob.size() - 4);
  if (stored_crc != actual_crc) {
    throw std::runtime_error("checkpoint checksum mismatch (file corrupt or truncated): " + path);
  }

  Reader r(blob.data(), blob.size() - 4);
  if (std::memcmp(r.bytes(sizeof(kMagic)), kMagic, sizeof(kMagic)) != 0) {
    throw std::runtime_error("bad checkpoint magic: " + path);
  }
  const uint32_t version = r.u32();
  if (version != Checkpoint::kVersion) {
    throw std::runtime_error("unsupported checkpoint version " + std::to_string(version) +
                             " (expected " + std::to_string(Checkpoint::kVersion) + ")");
  }
  const uint64_t header_len = r.u64();
  const unsigned char* header_ptr = r.bytes(header_len);
  nlohmann::json header =
      nlohmann::json::parse(header_ptr, header_ptr + header_len);

  Checkpoint ckpt;
  ckpt.spec = spec_from_json(header.at("spec"));
  ckpt.config_echo =
      header.at("config").get<std::map<std::string, std::string>>();
  ckpt.step = header.at("step").get<int64_t>();
  ckpt.epochs_done = header.at("epochs_done").get<int>();
  ckpt.rng_state = header.at("rng_state").get<uint64_t>();
  for (const auto& entry : header.at("tensors")) {
    const std::string name = entry.at("name").get<std::string>();
    const Shape shape = entry.at("shape").get<Shape>();
    Tensor t(shape);
    for (double& v : t.data) v = r.f64();
    ckpt.tensors.emplace_back(name, std::move(t));
  }
  if (r.remaining() != 0) {
    throw std::runtime_error("checkpoint has " + std::to_string(r.remaining()) +
                             " trailing bytes after payload");
  }
  return ckpt;
}

}  // namespace swae
