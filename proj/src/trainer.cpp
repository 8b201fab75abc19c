#include "hetcs/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <json.hpp>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>

#include "hetcs/adam.hpp"
#include "hetcs/metrics.hpp"
#include "hetcs/sampler.hpp"

namespace hetcs {

using ad::Matrix;

std::string to_string(TrainMode mode) { return mode == TrainMode::Full ? "full" : "ls"; }

TrainMode parse_train_mode(const std::string& text) {
  if (text == "full") return TrainMode::Full;
  if (text == "ls") return TrainMode::Ls;
  throw std::invalid_argument("unknown training mode '" + text + "' (expected full or ls)");
}

void TrainConfig::check(const ModelConfig& model) const {
  model.check();
  if (epochs < 1) throw std::invalid_argument("train: epochs must be >= 1");
  if (patience < 1) throw std::invalid_argument("train: patience must be >= 1");
  if (!(learning_rate > 0.0)) throw std::invalid_argument("train: learning rate must be positive");
  if (!(weight_decay >= 0.0)) throw std::invalid_argument("train: weight decay must be >= 0");
  for (double r : {train_ratio, val_ratio, test_ratio}) {
    if (!(r >= 0.0 && r <= 1.0)) throw std::invalid_argument("train: split ratios must lie in [0, 1]");
  }
  if (std::abs(train_ratio + val_ratio + test_ratio - 1.0) > 1e-9) {
    throw std::invalid_argument("train: split ratios must sum to 1");
  }
  if (mode == TrainMode::Ls) {
    if (fanouts.size() != model.layers) {
      throw std::invalid_argument("train: " + std::to_string(fanouts.size()) + " fanouts for " +
                                  std::to_string(model.layers) + " layers");
    }
    for (std::size_t f : fanouts) {
      if (f == 0) throw std::invalid_argument("train: fanouts must be >= 1");
    }
  }
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  // splitmix64 finaliser over a running combination.
  auto mix = [](std::uint64_t z) {
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  };
  return mix(mix(mix(seed) ^ a) ^ b);
}

TaskSplit split_tasks(std::size_t count, double train_ratio, double val_ratio, std::uint64_t seed) {
  std::vector<std::size_t> order(count);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(mix_seed(seed, 0x5, 0));
  std::shuffle(order.begin(), order.end(), rng);
  const auto n = static_cast<double>(count);
  const auto n_train = std::min(count, static_cast<std::size_t>(std::llround(train_ratio * n)));
  const auto n_val = std::min(count - n_train, static_cast<std::size_t>(std::llround(val_ratio * n)));
  TaskSplit s;
  s.train.assign(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_train));
  s.val.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train),
               order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val));
  s.test.assign(order.begin() + static_cast<std::ptrdiff_t>(n_train + n_val), order.end());
  std::sort(s.val.begin(), s.val.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

std::string train_report_json(const TrainReport& report) {
  nlohmann::ordered_json j;
  j["epochs"] = nlohmann::ordered_json::array();
  for (const auto& e : report.epochs) {
    j["epochs"].push_back(
        {{"epoch", e.epoch}, {"loss", e.mean_loss}, {"val_f1", e.val_f1}, {"gamma", e.gamma}, {"ms", e.millis}});
  }
  j["best_epoch"] = report.best_epoch;
  j["best_val_f1"] = report.best_val_f1;
  j["gamma"] = report.gamma;
  j["checkpoint"] = report.checkpoint_path;
  j["split"] = {{"train", report.split.train.size()}, {"val", report.split.val.size()}, {"test", report.split.test}};
  return j.dump();
}

LabeledSet labeled_set(const QueryTask& task) {
  LabeledSet s;
  s.ids = labeled_nodes(task);
  std::vector<NodeId> positives{task.query};
  positives.insert(positives.end(), task.pos.begin(), task.pos.end());
  std::sort(positives.begin(), positives.end());
  for (NodeId v : s.ids) {
    s.labels.push_back(std::binary_search(positives.begin(), positives.end(), v) ? 1.0 : 0.0);
  }
  return s;
}

double bce_loss(std::span<const double> probabilities, std::span<const double> labels, std::span<const NodeId> ids) {
  if (ids.empty()) throw std::invalid_argument("bce_loss: empty labeled set");
  if (labels.size() != ids.size()) throw std::invalid_argument("bce_loss: labels and ids differ in length");
  constexpr double kClamp = 1e-12;
  double total = 0.0;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const double y = labels[i];
    if (y != 0.0 && y != 1.0) throw std::invalid_argument("bce_loss: label outside {0, 1}");
    const auto v = static_cast<std::size_t>(ids[i]);
    if (v >= probabilities.size()) throw std::out_of_range("bce_loss: id out of range");
    const double p = std::clamp(probabilities[v], kClamp, 1.0 - kClamp);
    total -= y * std::log(p) + (1.0 - y) * std::log(1.0 - p);
  }
  return total / static_cast<double>(ids.size());
}

Threshold select_threshold(const std::vector<std::vector<double>>& probabilities,
                           const std::vector<std::vector<double>>& labels) {
  if (probabilities.empty()) throw std::invalid_argument("select_threshold: empty validation set");
  if (probabilities.size() != labels.size()) throw std::invalid_argument("select_threshold: size mismatch");
  std::vector<double> values{0.0, 1.0};
  for (std::size_t t = 0; t < probabilities.size(); ++t) {
    if (probabilities[t].size() != labels[t].size()) throw std::invalid_argument("select_threshold: size mismatch");
    values.insert(values.end(), probabilities[t].begin(), probabilities[t].end());
  }
  std::sort(values.begin(), values.end());
  values.erase(std::unique(values.begin(), values.end()), values.end());

  Threshold best{values.front(), -1.0};
  std::vector<NodeId> pred, truth;
  for (std::size_t c = 0; c + 1 < values.size(); ++c) {
    const double gamma = 0.5 * (values[c] + values[c + 1]);
    double total = 0.0;
    for (std::size_t t = 0; t < probabilities.size(); ++t) {
      pred.clear();
      truth.clear();
      for (std::size_t i = 0; i < probabilities[t].size(); ++i) {
        if (probabilities[t][i] > gamma) pred.push_back(static_cast<NodeId>(i));
        if (labels[t][i] == 1.0) truth.push_back(static_cast<NodeId>(i));
      }
      total += f1_score(pred, truth);
    }
    const double mean = total / static_cast<double>(probabilities.size());
    if (mean > best.f1) best = {gamma, mean};
  }
  return best;
}

TaskStep task_gradients(const HeteroGraph& graph, const MessageIndex& index, const QueryTask& task,
                        const ModelParams& params, const ModelConfig& config, const ForwardOptions& options) {
  const LabeledSet labeled = labeled_set(task);
  ad::Tape tape;
  const ParamVars vars = bind(tape, params, true);
  const Forward f = forward(tape, vars, config, graph, index, task.query, options);
  const ad::Var loss = ad::binary_cross_entropy(f.probabilities, ad::make_index(labeled.ids), labeled.labels);
  tape.backward(loss);
  TaskStep step;
  step.loss = loss.scalar();
  step.grads.reserve(vars.all.size());
  for (const auto& v : vars.all) step.grads.push_back(v.grad());
  const auto& p = f.probabilities.value().data;
  for (NodeId v : labeled.ids) step.labeled_probabilities.push_back(p[static_cast<std::size_t>(v)]);
  return step;
}

TaskStep block_gradients(const HeteroGraph& graph, const QueryTask& task, const ModelParams& params,
                         const ModelConfig& config, std::span<const std::size_t> fanouts, std::uint64_t sample_seed,
                         const ForwardOptions& options) {
  const SampledBlock block = sample_block(graph, task, fanouts, sample_seed);
  const MessageIndex index = build_message_index(block.graph, config.edge_dim);
  return task_gradients(block.graph, index, block.localize(task), params, config, options);
}

Threshold validate_threshold(const HeteroGraph& graph, const MessageIndex& index, const std::vector<QueryTask>& tasks,
                             std::span<const std::size_t> which, const ModelParams& params,
                             const ModelConfig& config) {
  std::vector<std::vector<double>> probs, labels;
  for (std::size_t i : which) {
    const QueryTask& task = tasks.at(i);
    const auto p = predict(params, config, graph, index, task.query);
    LabeledSet s = labeled_set(task);
    std::vector<double> row;
    for (NodeId v : s.ids) row.push_back(p[static_cast<std::size_t>(v)]);
    probs.push_back(std::move(row));
    labels.push_back(std::move(s.labels));
  }
  return select_threshold(probs, labels);
}

namespace {

std::string norm_summary(ModelParams& params, const HeteroGraph& graph) {
  std::ostringstream os;
  for (const auto& [name, m] : params.named(graph)) {
    double sq = 0.0;
    for (double v : m->data) sq += v * v;
    os << ' ' << name << '=' << std::sqrt(sq);
  }
  return os.str();
}

Checkpoint make_checkpoint(const HeteroGraph& graph, const ModelConfig& model, const TrainConfig& config,
                           const ModelParams& params, double gamma, const std::vector<std::size_t>& test) {
  Checkpoint c;
  c.config = model;
  c.node_types = graph.node_types();
  for (const auto& et : graph.edge_types()) c.edge_types.push_back(et.name);
  c.seed = config.seed;
  c.mode = to_string(config.mode);
  c.gamma = gamma;
  c.test_tasks = test;
  c.params = params;
  return c;
}

}  // namespace

TrainResult train(const HeteroGraph& graph, const std::vector<QueryTask>& tasks, const ModelConfig& model,
                  const TrainConfig& config) {
  config.check(model);
  for (const auto& t : tasks) check_task(graph, t);
  TrainResult result;
  TrainReport& report = result.report;
  report.split = split_tasks(tasks.size(), config.train_ratio, config.val_ratio, config.seed);
  if (report.split.train.empty()) throw std::invalid_argument("train: no training tasks after the split");
  if (report.split.val.empty()) throw std::invalid_argument("train: no validation tasks after the split");

  ModelParams params = init_params(model, graph, config.seed);
  const MessageIndex full_index = build_message_index(graph, model.edge_dim);
  ad::AdamConfig adam_config;
  adam_config.learning_rate = config.learning_rate;
  adam_config.weight_decay = config.weight_decay;
  ad::Adam adam(adam_config);
  std::vector<std::string> names;
  for (const auto& n : params.named(graph)) names.push_back(n.name);
  std::mt19937_64 dropout_rng(mix_seed(config.seed, 0xd, 0));

  ModelParams best = params;
  double best_f1 = -1.0;
  double best_gamma = 0.5;
  std::size_t since_best = 0;
  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::vector<std::size_t> order = report.split.train;
    std::mt19937_64 shuffle_rng(mix_seed(config.seed, 0xe, epoch));
    std::shuffle(order.begin(), order.end(), shuffle_rng);
    if (config.tasks_per_epoch > 0 && order.size() > config.tasks_per_epoch) order.resize(config.tasks_per_epoch);

    double loss_sum = 0.0;
    for (std::size_t idx : order) {
      ForwardOptions options{true, &dropout_rng};
      TaskStep step;
      try {
        step = config.mode == TrainMode::Full
                   ? task_gradients(graph, full_index, tasks[idx], params, model, options)
                   : block_gradients(graph, tasks[idx], params, model, config.fanouts,
                                     mix_seed(config.seed, epoch, idx + 1), options);
        if (!std::isfinite(step.loss)) throw std::domain_error("non-finite loss");
        std::vector<ad::ParamRef> refs;
        const auto tensors = params.tensors();
        for (std::size_t i = 0; i < tensors.size(); ++i) refs.push_back({names[i], tensors[i], &step.grads[i]});
        adam.step(refs);
      } catch (const std::domain_error& e) {
        throw std::runtime_error("training diverged at epoch " + std::to_string(epoch) + ", task " +
                                 std::to_string(idx) + ": " + e.what() + "; parameter norms:" +
                                 norm_summary(params, graph));
      }
      loss_sum += step.loss;
    }

    const Threshold th = validate_threshold(graph, full_index, tasks, report.split.val, params, model);
    EpochStats stats;
    stats.epoch = epoch;
    stats.mean_loss = loss_sum / static_cast<double>(order.size());
    stats.val_f1 = th.f1;
    stats.gamma = th.gamma;
    stats.millis = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    report.epochs.push_back(stats);
    if (config.log) {
      *config.log << "epoch=" << epoch << " loss=" << stats.mean_loss << " valF1=" << stats.val_f1
                  << " gamma=" << stats.gamma << " ms=" << stats.millis << std::endl;
    }

    if (th.f1 > best_f1) {
      best_f1 = th.f1;
      best_gamma = th.gamma;
      best = params;
      report.best_epoch = epoch;
      since_best = 0;
      if (config.checkpoint_path) {
        save_checkpoint(*config.checkpoint_path,
                        make_checkpoint(graph, model, config, best, best_gamma, report.split.test), graph);
      }
    } else if (++since_best >= config.patience) {
      break;
    }
  }

  report.best_val_f1 = best_f1;
  report.gamma = best_gamma;
  if (config.checkpoint_path) report.checkpoint_path = config.checkpoint_path->string();
  result.checkpoint = make_checkpoint(graph, model, config, best, best_gamma, report.split.test);
  return result;
}

}  // namespace hetcs
