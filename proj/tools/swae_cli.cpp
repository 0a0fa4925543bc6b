#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>

#include "swae/checkpoint.hpp"
#include "swae/config.hpp"
#include "swae/eval.hpp"
#include "swae/trainer.hpp"

namespace {

using namespace swae;

struct CommonOpts {
  std::string checkpoint_path;
  std::string out_path;
  uint64_t seed = 1;
  std::string data_images;
  std::string data_labels;
};

struct LoadedCheckpoint {
  Checkpoint ckpt;
  StackedWaeModel model;
};

LoadedCheckpoint load_model(const std::string& path) {
  Checkpoint ckpt = load_checkpoint(path);
  StackedWaeModel model = ckpt.restore_model();
  return {std::move(ckpt), std::move(model)};
}

// dataset from --data override or the checkpoint's embedded config
Dataset dataset_for(const LoadedCheckpoint& loaded, const CommonOpts& opts) {
  if (!opts.data_images.empty()) {
    return load_mnist_idx(opts.data_images, opts.data_labels);
  }
  TrainConfig config = config_from_map(loaded.ckpt.config_echo);
  return load_dataset(config.data);
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

void add_common(CLI::App* cmd, CommonOpts& opts, bool needs_checkpoint = true) {
  auto* c = cmd->add_option("--checkpoint", opts.checkpoint_path, "model checkpoint");
  if (needs_checkpoint) c->required();
  cmd->add_option("--out", opts.out_path, "output path")->required();
  cmd->add_option("--seed", opts.seed, "rng seed");
  cmd->add_option("--data", opts.data_images,
                  "IDX images file overriding the checkpoint's dataset");
  cmd->add_option("--labels", opts.data_labels, "IDX labels file for --data");
}

int run(int argc, char** argv) {
  CLI::App app{"stacked Wasserstein autoencoder: training and figure tools"};
  app.require_subcommand(1);

  // train
  auto* train_cmd = app.add_subcommand("train", "train a model from a config file");
  std::string config_path, resume_path;
  std::vector<std::string> overrides;
  train_cmd->add_option("--config", config_path, "key = value config file")->required();
  train_cmd->add_option("--set", overrides, "override config keys (key=value), repeatable");
  train_cmd->add_option("--resume", resume_path, "continue training from a checkpoint");
  train_cmd->callback([&] {
    ConfigMap map = parse_config_file(config_path);
    apply_overrides(map, overrides);
    TrainConfig config = config_from_map(map);
    TrainOutcome outcome = train(config, resume_path);
    std::cout << "trained " << outcome.steps << " steps; checkpoint at "
              << config.checkpoint_path << ", metrics at " << config.metrics_path << "\n";
  });

  // sample
  auto* sample_cmd = app.add_subcommand("sample", "decode prior draws to an image grid");
  CommonOpts sample_opts;
  int sample_rows = 8, sample_cols = 8;
  add_common(sample_cmd, sample_opts);
  sample_cmd->add_option("--rows", sample_rows, "grid rows");
  sample_cmd->add_option("--cols", sample_cols, "grid cols");
  sample_cmd->callback([&] {
    auto loaded = load_model(sample_opts.checkpoint_path);
    RngState rng(sample_opts.seed);
    Tensor samples = sample_prior(loaded.model, sample_rows * sample_cols, rng);
    auto [th, tw] = infer_tile_shape(loaded.model.spec.data_dim);
    ImageGrid grid(sample_rows, sample_cols, th, tw);
    for (int r = 0; r < sample_rows; ++r) {
      for (int c = 0; c < sample_cols; ++c) {
        grid.set_tile(r, c,
                      samples.data.data() +
                          (static_cast<size_t>(r) * sample_cols + c) *
                              loaded.model.spec.data_dim);
      }
    }
    write_pgm(grid, sample_opts.out_path);
    std::cout << "wrote " << sample_opts.out_path << "\n";
  });

  // reconstruct
  auto* recon_cmd =
      app.add_subcommand("reconstruct", "per-layer reconstructions of dataset examples");
  CommonOpts recon_opts;
  int recon_count = 10;
  add_common(recon_cmd, recon_opts);
  recon_cmd->add_option("--count", recon_count, "number of examples (grid columns)");
  recon_cmd->callback([&] {
    auto loaded = load_model(recon_opts.checkpoint_path);
    Dataset ds = dataset_for(loaded, recon_opts);
    ImageGrid grid = per_layer_reconstruct(loaded.model, ds.head(recon_count));
    write_pgm(grid, recon_opts.out_path);
    std::cout << "wrote " << recon_opts.out_path << "\n";
  });

  // grid
  auto* grid_cmd = app.add_subcommand("grid", "decode a lattice over the 2-d top latent");
  CommonOpts grid_opts;
  double span = 2.0;
  int grid_k = 20;
  add_common(grid_cmd, grid_opts);
  grid_cmd->add_option("--span", span, "half-width of the lattice in latent units");
  grid_cmd->add_option("--k", grid_k, "lattice side");
  grid_cmd->callback([&] {
    auto loaded = load_model(grid_opts.checkpoint_path);
    ImageGrid grid = latent_grid(loaded.model, span, grid_k);
    write_pgm(grid, grid_opts.out_path);
    std::cout << "wrote " << grid_opts.out_path << "\n";
  });

  // interpolate
  auto* interp_cmd =
      app.add_subcommand("interpolate", "interpolate between two dataset examples");
  CommonOpts interp_opts;
  int index_a = 0, index_b = 1, steps = 8;
  add_common(interp_cmd, interp_opts);
  interp_cmd->add_option("--index-a", index_a, "first example index");
  interp_cmd->add_option("--index-b", index_b, "second example index");
  interp_cmd->add_option("--steps", steps, "interpolation columns");
  interp_cmd->callback([&] {
    auto loaded = load_model(interp_opts.checkpoint_path);
    Dataset ds = dataset_for(loaded, interp_opts);
    Tensor xa = ds.gather({index_a});
    Tensor xb = ds.gather({index_b});
    ImageGrid grid = point_interpolate(loaded.model, xa, xb, steps);
    write_pgm(grid, interp_opts.out_path);
    std::cout << "wrote " << interp_opts.out_path << "\n";
  });

  // pca
  auto* pca_cmd = app.add_subcommand("pca", "2-d PCA of a latent layer's mean encodings");
  CommonOpts pca_opts;
  int pca_layer = 1, pca_count = 2048;
  add_common(pca_cmd, pca_opts);
  pca_cmd->add_option("--layer", pca_layer, "latent layer (1-based)");
  pca_cmd->add_option("--count", pca_count, "number of examples");
  pca_cmd->callback([&] {
    auto loaded = load_model(pca_opts.checkpoint_path);
    Dataset ds = dataset_for(loaded, pca_opts);
    const int n = std::min(pca_count, ds.count());
    Tensor codes = encode_mean(loaded.model, ds.head(n), pca_layer);
    PcaResult pca = pca_project(codes);

    namespace fs = std::filesystem;
    if (fs::path(pca_opts.out_path).has_parent_path()) {
      fs::create_directories(fs::path(pca_opts.out_path).parent_path());
    }
    std::ofstream out(pca_opts.out_path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open output: " + pca_opts.out_path);
    const bool with_labels = ds.labels.has_value();
    out << (with_labels ? "pc1,pc2,label\n" : "pc1,pc2\n");
    for (int i = 0; i < n; ++i) {
      out << fmt(pca.projection.at(i, 0)) << ',' << fmt(pca.projection.at(i, 1));
      if (with_labels) out << ',' << (*ds.labels)[i];
      out << "\n";
    }
    std::cout << "explained_variance=" << fmt(pca.explained_variance[0]) << ","
              << fmt(pca.explained_variance[1]) << "\n";
    std::cout << "wrote " << pca_opts.out_path << "\n";
  });

  // collapse-report
  auto* collapse_cmd =
      app.add_subcommand("collapse-report", "per-layer collapse diagnostics as CSV");
  CommonOpts collapse_opts;
  int sweep = 2048;
  add_common(collapse_cmd, collapse_opts);
  collapse_cmd->add_option("--sweep", sweep, "examples in the diagnostic sweep");
  collapse_cmd->callback([&] {
    auto loaded = load_model(collapse_opts.checkpoint_path);
    Dataset ds = dataset_for(loaded, collapse_opts);
    TrainConfig config = config_from_map(loaded.ckpt.config_echo);
    auto rows = collapse_report(loaded.model, ds, config.kernel, collapse_opts.seed, sweep);

    namespace fs = std::filesystem;
    if (fs::path(collapse_opts.out_path).has_parent_path()) {
      fs::create_directories(fs::path(collapse_opts.out_path).parent_path());
    }
    std::ofstream out(collapse_opts.out_path, std::ios::trunc);
    if (!out) throw std::runtime_error("cannot open output: " + collapse_opts.out_path);
    const bool with_probe = ds.labels.has_value();
    if (!with_probe) {
      std::cerr << "note: dataset has no labels; probe column omitted\n";
    }
    out << (with_probe ? "layer,mean_abs_logvar,mmd_to_prior,probe_accuracy\n"
                       : "layer,mean_abs_logvar,mmd_to_prior\n");
    for (const CollapseRow& row : rows) {
      out << row.layer << ',' << fmt(row.mean_abs_logvar) << ',' << fmt(row.mmd_to_prior);
      if (with_probe) out << ',' << fmt(row.probe_accuracy.value());
      out << "\n";
    }
    std::cout << "wrote " << collapse_opts.out_path << "\n";
  });

  CLI11_PARSE(app, argc, argv);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const std::exception& e) {
    std::string msg = e.what();
    for (char& c : msg) {
      if (c == '\n') c = ' ';
    }
    std::cerr << "error: " << msg << "\n";
    return 1;
  }
}
