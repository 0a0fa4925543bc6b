#include "swae/config.hpp"

#include <algorithm>
#include <cctype>
#include <charconv>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace swae {

namespace {

std::string trim(const std::string& s) {
  size_t a = 0, b = s.size();
  while (a < b && std::isspace(static_cast<unsigned char>(s[a]))) ++a;
  while (b > a && std::isspace(static_cast<unsigned char>(s[b - 1]))) --b;
  return s.substr(a, b - a);
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    size_t pos = 0;
    double v = std::stod(value, &pos);
    if (pos != value.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config key '" + key + "': cannot parse '" + value +
                                "' as a number");
  }
}

int64_t parse_int(const std::string& key, const std::string& value) {
  int64_t v = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw std::invalid_argument("config key '" + key + "': cannot parse '" + value +
                                "' as an integer");
  }
  return v;
}

uint64_t parse_u64(const std::string& key, const std::string& value) {
  uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(value.data(), value.data() + value.size(), v);
  if (ec != std::errc() || ptr != value.data() + value.size()) {
    throw std::invalid_argument("config key '" + key + "': cannot parse '" + value +
                                "' as an unsigned integer");
  }
  return v;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw std::invalid_argument("config key '" + key + "': expected true/false, got '" +
                              value + "'");
}

std::vector<int> parse_int_list(const std::string& key, const std::string& value) {
  std::vector<int> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    out.push_back(static_cast<int>(parse_int(key, trim(item))));
  }
  return out;
}

std::vector<double> parse_double_list(const std::string& key, const std::string& value) {
  std::vector<double> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    out.push_back(parse_double(key, trim(item)));
  }
  return out;
}

std::string fmt_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

template <typename T>
std::string join_list(const std::vector<T>& xs) {
  std::string out;
  for (size_t i = 0; i < xs.size(); ++i) {
    if (i) out += ',';
    if constexpr (std::is_same_v<T, double>) {
      out += fmt_double(xs[i]);
    } else {
      out += std::to_string(xs[i]);
    }
  }
  return out;
}

}  // namespace

ConfigMap parse_config_text(const std::string& text) {
  ConfigMap config;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const size_t hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const size_t eq = line.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config line " + std::to_string(lineno) +
                                  ": expected 'key = value', got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw std::invalid_argument("config line " + std::to_string(lineno) + ": empty key");
    }
    config[key] = value;
  }
  return config;
}

ConfigMap parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file: " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

void apply_overrides(ConfigMap& config, const std::vector<std::string>& overrides) {
  for (const std::string& item : overrides) {
    const size_t eq = item.find('=');
    if (eq == std::string::npos || eq == 0) {
      throw std::invalid_argument("override must be key=value, got '" + item + "'");
    }
    config[trim(item.substr(0, eq))] = trim(item.substr(eq + 1));
  }
}

void TrainConfig::validate() const {
  if (epochs < 1) throw std::invalid_argument("train.epochs must be >= 1");
  if (batch_size < 2) throw std::invalid_argument("train.batch_size must be >= 2");
  if (adam.learning_rate <= 0) throw std::invalid_argument("train.learning_rate must be > 0");
  if (checkpoint_every < 0) throw std::invalid_argument("train.checkpoint_every must be >= 0");
  if (weights.lambda_rec <= 0) throw std::invalid_argument("weights.lambda_rec must be > 0");
  if (weights.lambda_match <= 0) throw std::invalid_argument("weights.lambda_match must be > 0");
  if (weights.lambda_sigma < 0) throw std::invalid_argument("weights.lambda_sigma must be >= 0");
  spec.validate();
  if (weights.schedule == Schedule::kExplicit &&
      static_cast<int>(weights.explicit_weights.size()) != spec.n_layers + 1) {
    throw std::invalid_argument("weights.explicit needs n_layers+1 entries");
  }
}

TrainConfig TrainConfig::mnist_paper_preset() {
  TrainConfig config;
  config.objective = Objective::kStacked;
  config.epochs = 5000;
  config.batch_size = 128;
  config.adam = AdamConfig{};  // lr 1e-3, betas (0.9, 0.999), eps 1e-8
  config.weights.lambda_rec = 0.01;
  config.weights.lambda_match = 1e-4;
  config.weights.lambda_sigma = 0.0;
  config.weights.schedule = Schedule::kMnist;
  config.kernel = KernelSpec{};
  config.spec = HierarchySpec::mnist_preset();
  config.data.kind = DataConfig::Kind::kIdx;
  return config;
}

namespace {

Objective parse_objective(const std::string& v) {
  if (v == "stacked") return Objective::kStacked;
  if (v == "standard-wae") return Objective::kStandardWae;
  throw std::invalid_argument("objective must be stacked|standard-wae, got '" + v + "'");
}

Schedule parse_schedule(const std::string& v) {
  if (v == "mnist") return Schedule::kMnist;
  if (v == "svhn") return Schedule::kSvhnStyle;
  if (v == "celeba") return Schedule::kCelebaStyle;
  if (v == "explicit") return Schedule::kExplicit;
  throw std::invalid_argument("weights.schedule must be mnist|svhn|celeba|explicit, got '" +
                              v + "'");
}

DataConfig::Kind parse_data_kind(const std::string& v) {
  if (v == "idx") return DataConfig::Kind::kIdx;
  if (v == "gaussian-mixture") return DataConfig::Kind::kGaussianMixture;
  if (v == "grid") return DataConfig::Kind::kGrid;
  throw std::invalid_argument("data.kind must be idx|gaussian-mixture|grid, got '" + v + "'");
}

}  // namespace

TrainConfig config_from_map(const ConfigMap& map) {
  TrainConfig config;
  ConfigMap unused = map;
  auto take = [&](const std::string& key) -> std::string {
    auto it = unused.find(key);
    if (it == unused.end()) return {};
    std::string v = it->second;
    unused.erase(it);
    return v;
  };

  if (auto v = take("objective"); !v.empty()) config.objective = parse_objective(v);
  if (auto v = take("seed"); !v.empty()) config.seed = parse_u64("seed", v);

  if (auto v = take("model.n_layers"); !v.empty()) {
    config.spec.n_layers = static_cast<int>(parse_int("model.n_layers", v));
  }
  if (auto v = take("model.latent_dims"); !v.empty()) {
    config.spec.latent_dims = parse_int_list("model.latent_dims", v);
  }
  if (auto v = take("model.hidden_units"); !v.empty()) {
    config.spec.hidden_units = parse_int_list("model.hidden_units", v);
  }
  if (auto v = take("model.data_dim"); !v.empty()) {
    config.spec.data_dim = static_cast<int>(parse_int("model.data_dim", v));
  }
  if (auto v = take("model.deterministic_bottom"); !v.empty()) {
    config.spec.deterministic_bottom = parse_bool("model.deterministic_bottom", v);
  }

  if (auto v = take("train.epochs"); !v.empty()) {
    config.epochs = static_cast<int>(parse_int("train.epochs", v));
  }
  if (auto v = take("train.batch_size"); !v.empty()) {
    config.batch_size = static_cast<int>(parse_int("train.batch_size", v));
  }
  if (auto v = take("train.learning_rate"); !v.empty()) {
    config.adam.learning_rate = parse_double("train.learning_rate", v);
  }
  if (auto v = take("train.beta1"); !v.empty()) config.adam.beta1 = parse_double("train.beta1", v);
  if (auto v = take("train.beta2"); !v.empty()) config.adam.beta2 = parse_double("train.beta2", v);
  if (auto v = take("train.adam_epsilon"); !v.empty()) {
    config.adam.epsilon = parse_double("train.adam_epsilon", v);
  }
  if (auto v = take("train.checkpoint_every"); !v.empty()) {
    config.checkpoint_every = static_cast<int>(parse_int("train.checkpoint_every", v));
  }

  if (auto v = take("weights.lambda_rec"); !v.empty()) {
    config.weights.lambda_rec = parse_double("weights.lambda_rec", v);
  }
  if (auto v = take("weights.lambda_match"); !v.empty()) {
    config.weights.lambda_match = parse_double("weights.lambda_match", v);
  }
  if (auto v = take("weights.lambda_sigma"); !v.empty()) {
    config.weights.lambda_sigma = parse_double("weights.lambda_sigma", v);
  }
  if (auto v = take("weights.schedule"); !v.empty()) {
    config.weights.schedule = parse_schedule(v);
  }
  if (auto v = take("weights.explicit"); !v.empty()) {
    config.weights.explicit_weights = parse_double_list("weights.explicit", v);
  }

  if (auto v = take("kernel.kind"); !v.empty()) {
    if (v == "imq") {
      config.kernel.kind = KernelSpec::Kind::kImq;
    } else if (v == "rbf") {
      config.kernel.kind = KernelSpec::Kind::kRbf;
    } else {
      throw std::invalid_argument("kernel.kind must be imq|rbf, got '" + v + "'");
    }
  }
  if (auto v = take("kernel.scale"); !v.empty()) {
    config.kernel.scale = v == "auto" ? 0.0 : parse_double("kernel.scale", v);
  }

  if (auto v = take("data.kind"); !v.empty()) config.data.kind = parse_data_kind(v);
  if (auto v = take("data.images"); !v.empty()) config.data.images_path = v;
  if (auto v = take("data.labels"); !v.empty()) config.data.labels_path = v;
  if (auto v = take("data.count"); !v.empty()) {
    config.data.count = static_cast<int>(parse_int("data.count", v));
  }
  if (auto v = take("data.dim"); !v.empty()) {
    config.data.dim = static_cast<int>(parse_int("data.dim", v));
  }
  if (auto v = take("data.seed"); !v.empty()) config.data.seed = parse_u64("data.seed", v);

  if (auto v = take("out.checkpoint"); !v.empty()) config.checkpoint_path = v;
  if (auto v = take("out.metrics"); !v.empty()) config.metrics_path = v;

  if (!unused.empty()) {
    throw std::invalid_argument("unknown config key '" + unused.begin()->first + "'");
  }
  config.validate();
  return config;
}

ConfigMap config_to_map(const TrainConfig& config) {
  ConfigMap map;
  map["objective"] = config.objective == Objective::kStacked ? "stacked" : "standard-wae";
  map["seed"] = std::to_string(config.seed);
  map["model.n_layers"] = std::to_string(config.spec.n_layers);
  map["model.latent_dims"] = join_list(config.spec.latent_dims);
  map["model.hidden_units"] = join_list(config.spec.hidden_units);
  map["model.data_dim"] = std::to_string(config.spec.data_dim);
  map["model.deterministic_bottom"] = config.spec.deterministic_bottom ? "true" : "false";
  map["train.epochs"] = std::to_string(config.epochs);
  map["train.batch_size"] = std::to_string(config.batch_size);
  map["train.learning_rate"] = fmt_double(config.adam.learning_rate);
  map["train.beta1"] = fmt_double(config.adam.beta1);
  map["train.beta2"] = fmt_double(config.adam.beta2);
  map["train.adam_epsilon"] = fmt_double(config.adam.epsilon);
  map["train.checkpoint_every"] = std::to_string(config.checkpoint_every);
  map["weights.lambda_rec"] = fmt_double(config.weights.lambda_rec);
  map["weights.lambda_match"] = fmt_double(config.weights.lambda_match);
  map["weights.lambda_sigma"] = fmt_double(config.weights.lambda_sigma);
  switch (config.weights.schedule) {
    case Schedule::kMnist: map["weights.schedule"] = "mnist"; break;
    case Schedule::kSvhnStyle: map["weights.schedule"] = "svhn"; break;
    case Schedule::kCelebaStyle: map["weights.schedule"] = "celeba"; break;
    case Schedule::kExplicit: map["weights.schedule"] = "explicit"; break;
  }
  if (!config.weights.explicit_weights.empty()) {
    map["weights.explicit"] = join_list(config.weights.explicit_weights);
  }
  map["kernel.kind"] = config.kernel.kind == KernelSpec::Kind::kImq ? "imq" : "rbf";
  map["kernel.scale"] = config.kernel.scale > 0 ? fmt_double(config.kernel.scale)
                                                : std::string("auto");
  switch (config.data.kind) {
    case DataConfig::Kind::kIdx: map["data.kind"] = "idx"; break;
    case DataConfig::Kind::kGaussianMixture: map["data.kind"] = "gaussian-mixture"; break;
    case DataConfig::Kind::kGrid: map["data.kind"] = "grid"; break;
  }
  if (!config.data.images_path.empty()) map["data.images"] = config.data.images_path;
  if (!config.data.labels_path.empty()) map["data.labels"] = config.data.labels_path;
  map["data.count"] = std::to_string(config.data.count);
  map["data.dim"] = std::to_string(config.data.dim);
  map["data.seed"] = std::to_string(config.data.seed);
  map["out.checkpoint"] = config.checkpoint_path;
  map["out.metrics"] = config.metrics_path;
  return map;
}

Dataset load_dataset(const DataConfig& data) {
  switch (data.kind) {
    case DataConfig::Kind::kIdx:
      if (data.images_path.empty()) {
        throw std::invalid_argument("data.kind=idx needs data.images");
      }
      return load_mnist_idx(data.images_path, data.labels_path);
    case DataConfig::Kind::kGaussianMixture:
      return make_synthetic(SyntheticKind::kGaussianMixture, data.count, data.dim, data.seed);
    case DataConfig::Kind::kGrid:
      return make_synthetic(SyntheticKind::kGrid, data.count, data.dim, data.seed);
  }
  throw std::logic_error("unknown data kind");
}

}  // namespace swae
