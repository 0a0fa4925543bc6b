#include "swae/trainer.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "swae/dataset.hpp"

namespace swae {

namespace {

constexpr uint64_t kInitStreamTag = 0x494E4954ull;   // model init
constexpr uint64_t kNoiseStreamTag = 0x4E4F4945ull;  // loss noise

std::string metrics_header(int n_layers) {
  std::string header = "epoch";
  for (int n = 0; n < n_layers; ++n) header += ",recon_" + std::to_string(n);
  header += ",divergence,penalty,total,seconds";
  return header;
}

std::string fmt17(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

struct ParamRefs {
  std::vector<Tensor*> params;
  std::vector<std::string> names;
};

ParamRefs collect_params(StackedWaeModel& model) {
  ParamRefs refs;
  for_each_param(model, [&](const std::string& name, Tensor& t) {
    refs.params.push_back(&t);
    refs.names.push_back(name);
  });
  return refs;
}

}  // namespace

TrainOutcome train(const TrainConfig& config, const std::string& resume_path,
                   const StepObserver& observer) {
  config.validate();
  const ConfigMap echo = config_to_map(config);

  Dataset dataset = load_dataset(config.data);
  if (dataset.data_dim != config.spec.data_dim) {
    throw std::invalid_argument("dataset dimension " + std::to_string(dataset.data_dim) +
                                " does not match model.data_dim " +
                                std::to_string(config.spec.data_dim));
  }

  StackedWaeModel model;
  AdamState adam;
  RngState noise_rng;
  int start_epoch = 1;
  bool fresh_run = resume_path.empty();
  if (fresh_run) {
    RngState init_rng = RngState(config.seed).derive(kInitStreamTag);
    model = build_model(config.spec, init_rng);
    ParamRefs refs = collect_params(model);
    std::vector<const Tensor*> cparams(refs.params.begin(), refs.params.end());
    adam = AdamState::init(cparams);
    noise_rng = RngState(config.seed).derive(kNoiseStreamTag);
  } else {
    Checkpoint ckpt = load_checkpoint(resume_path);
    if (!(ckpt.spec == config.spec)) {
      throw std::invalid_argument("resume checkpoint hierarchy does not match config");
    }
    model = ckpt.restore_model();
    adam = ckpt.restore_adam(model);
    noise_rng.set_state(ckpt.rng_state);
    start_epoch = ckpt.epochs_done + 1;
    if (start_epoch > config.epochs) {
      throw std::invalid_argument("checkpoint already has " +
                                  std::to_string(ckpt.epochs_done) +
                                  " epochs; config asks for " + std::to_string(config.epochs));
    }
  }

  ParamRefs refs = collect_params(model);
  const int N = config.spec.n_layers;

  namespace fs = std::filesystem;
  if (fs::path(config.metrics_path).has_parent_path()) {
    fs::create_directories(fs::path(config.metrics_path).parent_path());
  }
  std::ofstream metrics(config.metrics_path,
                        fresh_run ? std::ios::trunc : std::ios::app);
  if (!metrics) {
    throw std::runtime_error("cannot open metrics path for writing: " + config.metrics_path);
  }
  if (fresh_run) metrics << metrics_header(N) << "\n";

  RngNoise noise(noise_rng);
  int64_t step = adam.step;
  bool checkpoint_written = !fresh_run;

  auto save = [&](int epochs_done) {
    Checkpoint ckpt = Checkpoint::capture(model, adam, echo, adam.step, epochs_done,
                                          noise_rng.state());
    save_checkpoint(config.checkpoint_path, ckpt);
    checkpoint_written = true;
  };

  for (int epoch = start_epoch; epoch <= config.epochs; ++epoch) {
    const auto epoch_start = std::chrono::steady_clock::now();
    const auto batches = batch_iter(dataset.count(), config.batch_size, config.seed, epoch);
    if (batches.empty()) {
      throw std::runtime_error("no usable batches: dataset of " +
                               std::to_string(dataset.count()) + " examples");
    }

    std::vector<double> recon_sums(static_cast<size_t>(N), 0.0);
    double div_sum = 0.0, pen_sum = 0.0, total_sum = 0.0;

    for (const auto& batch_indices : batches) {
      Tensor x = dataset.gather(batch_indices);
      Graph g;
      BoundModel bound = bind_model(g, model, /*training=*/true);
      Val xv = g.constant(x);
      LossResult loss =
          config.objective == Objective::kStacked
              ? stacked_wae_loss(g, bound, xv, config.weights, config.kernel, noise)
              : standard_wae_loss(g, bound, xv, config.weights.lambda_match,
                                  config.kernel, noise);

      if (!std::isfinite(loss.breakdown.total)) {
        const std::string kept = checkpoint_written
                                     ? "last good checkpoint retained at " +
                                           config.checkpoint_path
                                     : "no checkpoint written yet";
        throw std::runtime_error("non-finite total loss at epoch " + std::to_string(epoch) +
                                 ", step " + std::to_string(step + 1) + "; " + kept);
      }

      g.backward(loss.total);
      std::vector<const std::vector<double>*> grads;
      grads.reserve(refs.params.size());
      std::vector<std::vector<double>> zero_store;
      zero_store.reserve(refs.params.size());
      for (size_t p = 0; p < refs.params.size(); ++p) {
        Val leaf = g.named_leaf(refs.names[p]);
        if (g.has_grad(leaf)) {
          grads.push_back(&g.grad(leaf));
        } else {
          // parameter absent from the objective (e.g. deep encoders in the
          // one-level ablation): zero update
          zero_store.emplace_back(refs.params[p]->data.size(), 0.0);
          grads.push_back(&zero_store.back());
        }
      }
      adam_step(refs.params, grads, refs.names, adam, config.adam);
      step = adam.step;

      for (int n = 0; n < N; ++n) {
        const auto& terms = loss.breakdown.recon_terms;
        recon_sums[n] += n < static_cast<int>(terms.size()) ? terms[n] : 0.0;
      }
      div_sum += loss.breakdown.divergence;
      pen_sum += loss.breakdown.penalty;
      total_sum += loss.breakdown.total;

      if (observer) observer(StepInfo{epoch, step, loss.breakdown});
    }

    const double k = static_cast<double>(batches.size());
    const auto epoch_end = std::chrono::steady_clock::now();
    const double seconds =
        std::chrono::duration<double>(epoch_end - epoch_start).count();
    metrics << epoch;
    for (int n = 0; n < N; ++n) metrics << ',' << fmt17(recon_sums[n] / k);
    metrics << ',' << fmt17(div_sum / k) << ',' << fmt17(pen_sum / k) << ','
            << fmt17(total_sum / k);
    {
      char buf[32];
      std::snprintf(buf, sizeof(buf), "%.3f", seconds);
      metrics << ',' << buf << "\n";
    }
    metrics.flush();

    if (config.checkpoint_every > 0 && epoch % config.checkpoint_every == 0 &&
        epoch != config.epochs) {
      save(epoch);
    }
  }

  Checkpoint final_ckpt = Checkpoint::capture(model, adam, echo, adam.step,
                                              config.epochs, noise_rng.state());
  save_checkpoint(config.checkpoint_path, final_ckpt);
  return TrainOutcome{std::move(final_ckpt), step};
}

}  // namespace swae
