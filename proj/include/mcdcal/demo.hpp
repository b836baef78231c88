#pragma once

// End-to-end synthetic run: train the toy MC dropout classifier on a small
// overlapping-blob training set, then draw frozen MC logit samples for a
// validation split (temperature fitting) and a test split (evaluation).

#include <cstddef>
#include <cstdint>
#include <string>

#include "mcdcal/io.hpp"
#include "mcdcal/toy_model.hpp"

namespace mcdcal {

struct DemoConfig {
  std::uint64_t seed = 0;
  std::size_t num_classes = 3;
  std::size_t input_dim = 2;
  std::size_t hidden_dim = 32;
  double dropout_p = 0.5;
  double sigma = 0.5;
  std::size_t train_size = 200;
  std::size_t val_size = 1000;
  std::size_t test_size = 2000;
  std::size_t n_passes = 25;
  TrainConfig train{.epochs = 100, .batch_size = 16, .learning_rate = 0.05, .cp_beta = 0.0, .seed = 0};
};

struct DemoOutput {
  ToyNet net;
  double train_accuracy = 0.0;
  io::LogitDump validation;
  io::LogitDump test;
};

namespace detail {

// Stream indices under the run seed.
enum DemoStream : std::uint64_t { kTrainData = 1, kValData, kTestData, kInit, kSgd, kValPasses, kTestPasses };

inline io::LogitDump dump_split(const ToyNet& net, const SyntheticDataset& data, std::size_t passes,
                                std::uint64_t seed, const std::string& prefix) {
  io::LogitDump d;
  d.sets = mc_predict_dataset(net, data, passes, seed);
  d.ids.reserve(d.sets.size());
  for (std::size_t i = 0; i < d.sets.size(); ++i) d.ids.push_back(prefix + std::to_string(i));
  return d;
}

}  // namespace detail

inline DemoOutput run_demo(const DemoConfig& cfg) {
  using namespace detail;
  const auto blobs = [&](std::size_t n, std::uint64_t stream) {
    return make_blobs({n, cfg.num_classes, cfg.input_dim, cfg.sigma, derive_seed(cfg.seed, stream)});
  };
  const auto train_data = blobs(cfg.train_size, kTrainData);
  const auto val_data = blobs(cfg.val_size, kValData);
  const auto test_data = blobs(cfg.test_size, kTestData);

  auto tcfg = cfg.train;
  tcfg.seed = derive_seed(cfg.seed, kSgd);
  auto net = ToyNet::init(cfg.input_dim, cfg.hidden_dim, cfg.num_classes, cfg.dropout_p,
                          derive_seed(cfg.seed, kInit));
  net = train(std::move(net), train_data, tcfg);

  DemoOutput out;
  out.train_accuracy = accuracy(net, train_data);
  out.validation = dump_split(net, val_data, cfg.n_passes, derive_seed(cfg.seed, kValPasses), "val-");
  out.test = dump_split(net, test_data, cfg.n_passes, derive_seed(cfg.seed, kTestPasses), "test-");
  out.net = std::move(net);
  return out;
}

inline io::Json demo_config_json(const DemoConfig& cfg) {
  io::Json j;
  j["seed"] = cfg.seed;
  j["num_classes"] = cfg.num_classes;
  j["input_dim"] = cfg.input_dim;
  j["hidden_dim"] = cfg.hidden_dim;
  j["dropout_p"] = cfg.dropout_p;
  j["sigma"] = cfg.sigma;
  j["train_size"] = cfg.train_size;
  j["val_size"] = cfg.val_size;
  j["test_size"] = cfg.test_size;
  j["n_passes"] = cfg.n_passes;
  j["epochs"] = cfg.train.epochs;
  j["batch_size"] = cfg.train.batch_size;
  j["learning_rate"] = cfg.train.learning_rate;
  j["cp_beta"] = cfg.train.cp_beta;
  return j;
}

}  // namespace mcdcal
