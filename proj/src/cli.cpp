#include "hetcs/cli.hpp"

#include <CLI11.hpp>
#include <algorithm>
#include <charconv>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "hetcs/bench.hpp"
#include "hetcs/checkpoint.hpp"
#include "hetcs/dataset_io.hpp"
#include "hetcs/evaluate.hpp"
#include "hetcs/search.hpp"
#include "hetcs/synth.hpp"
#include "hetcs/trainer.hpp"

namespace hetcs {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

class ArgError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

template <typename T>
std::vector<T> parse_list(const std::string& text, const std::string& flag) {
  std::vector<T> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    T v{};
    const auto [p, ec] = std::from_chars(item.data(), item.data() + item.size(), v);
    if (item.empty() || ec != std::errc() || p != item.data() + item.size()) {
      throw ArgError("--" + flag + ": cannot parse '" + item + "'");
    }
    out.push_back(v);
  }
  if (out.empty()) throw ArgError("--" + flag + ": empty list");
  return out;
}

fs::path data_path(const std::string& p) {
  fs::path path(p);
  if (path.is_relative()) {
    if (const char* root = std::getenv("HETCS_DATA_DIR"); root && *root) return fs::path(root) / path;
  }
  return path;
}

void write_text(const fs::path& file, const std::string& text) {
  if (file.has_parent_path()) fs::create_directories(file.parent_path());
  std::ofstream out(file, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + file.string());
  out << text;
}

struct ModelFlags {
  std::size_t layers = 2, hidden = 64, heads = 8, unified_dim = 64, edge_dim = 16, mlp_hidden = 0;
  double dropout = 0.5;

  void add(CLI::App* app) {
    app->add_option("--layers", layers, "Encoder layers L");
    app->add_option("--hidden", hidden, "Hidden width d");
    app->add_option("--heads", heads, "Attention heads K");
    app->add_option("--unified-dim", unified_dim, "Width of the type projection");
    app->add_option("--edge-dim", edge_dim, "Edge vector width");
    app->add_option("--mlp-hidden", mlp_hidden, "Probability head width (0 = hidden)");
    app->add_option("--dropout", dropout, "Dropout rate");
  }
  ModelConfig config() const {
    ModelConfig c;
    c.layers = layers;
    c.hidden = hidden;
    c.heads = heads;
    c.unified_dim = unified_dim;
    c.edge_dim = edge_dim;
    c.mlp_hidden = mlp_hidden;
    c.dropout = dropout;
    return c;
  }
};

// Turns a JSON object of {flag: value} into command-line tokens.
std::vector<std::string> config_tokens(const fs::path& file, CLI::App* sub) {
  std::ifstream in(file);
  if (!in) throw ArgError("--config: cannot open " + file.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ArgError("--config: " + std::string(e.what()));
  }
  if (!doc.is_object()) throw ArgError("--config: expected a JSON object");
  std::vector<std::string> tokens;
  for (const auto& [key, value] : doc.items()) {
    if (key == "config" || sub->get_option_no_throw("--" + key) == nullptr) {
      throw ArgError("--config: unknown key '" + key + "' for '" + sub->get_name() + "'");
    }
    const CLI::Option* opt = sub->get_option("--" + key);
    if (value.is_boolean()) {
      if (opt->get_type_size() != 0) throw ArgError("--config: '" + key + "' is not a flag");
      if (value.get<bool>()) tokens.push_back("--" + key);
      continue;
    }
    std::string text;
    if (value.is_string()) {
      text = value.get<std::string>();
    } else if (value.is_array()) {
      for (std::size_t i = 0; i < value.size(); ++i) {
        if (i) text += ',';
        text += value[i].is_string() ? value[i].get<std::string>() : value[i].dump();
      }
    } else if (value.is_number()) {
      text = value.dump();
    } else {
      throw ArgError("--config: unsupported value for '" + key + "'");
    }
    tokens.push_back("--" + key);
    tokens.push_back(text);
  }
  return tokens;
}

// Resolved option values, including defaults, of the selected subcommand.
json resolved_config(const CLI::App* sub) {
  json j = json::object();
  for (const CLI::Option* opt : sub->get_options()) {
    const std::string name = opt->get_lnames().empty() ? "" : opt->get_lnames().front();
    if (name.empty() || name == "help" || name == "config") continue;
    if (opt->get_type_size() == 0) {
      j[name] = opt->count() > 0;
    } else if (opt->count() > 0) {
      j[name] = opt->results().back();
    } else {
      j[name] = opt->get_default_str();
    }
  }
  return j;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Query-driven community search on heterogeneous graphs", "hetcs"};
  app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.require_subcommand(1);
  std::string config_file;

  // generate
  auto* gen = app.add_subcommand("generate", "Write a planted-community dataset");
  std::string gen_out;
  std::size_t gen_nodes = 2000, gen_queries = 10;
  std::size_t gen_communities = 0;
  double gen_p_in = 0.3, gen_signal = 2.0, gen_pos = 0.3;
  double gen_p_out = -1.0;
  std::uint64_t gen_seed = 1;
  std::string gen_targets = "author,paper";
  gen->add_option("--out", gen_out, "Output dataset directory")->required();
  gen->add_option("--nodes", gen_nodes, "Total node count");
  gen->add_option("--communities", gen_communities, "Planted communities (0 = scale with nodes)");
  gen->add_option("--p-in", gen_p_in, "Edge probability inside a community");
  gen->add_option("--p-out", gen_p_out, "Edge probability across communities (<0 = 0.01 scaled by 2000/nodes)");
  gen->add_option("--signal", gen_signal, "Norm of community feature means");
  gen->add_option("--queries-per-community", gen_queries, "Tasks per community");
  gen->add_option("--pos-fraction", gen_pos, "Fraction of members labeled positive");
  gen->add_option("--targets", gen_targets, "Targeted node types");
  gen->add_option("--seed", gen_seed, "Random seed");

  // train
  auto* tr = app.add_subcommand("train", "Train a model and select the threshold");
  std::string tr_data, tr_ckpt, tr_report, tr_mode = "ls", tr_fanouts = "20,10", tr_split = "0.7,0.15,0.15";
  ModelFlags tr_model;
  double tr_lr = 1e-3, tr_wd = 1e-4;
  std::size_t tr_epochs = 100, tr_patience = 10, tr_tpe = 0;
  std::uint64_t tr_seed = 0;
  tr->add_option("--data", tr_data, "Dataset directory")->required();
  tr->add_option("--checkpoint", tr_ckpt, "Checkpoint output file")->required();
  tr->add_option("--report", tr_report, "Also write the TrainReport JSON here");
  tr->add_option("--mode", tr_mode, "full or ls");
  tr_model.add(tr);
  tr->add_option("--lr", tr_lr, "Adam learning rate");
  tr->add_option("--weight-decay", tr_wd, "Decoupled weight decay");
  tr->add_option("--fanouts", tr_fanouts, "Sampling fanouts f_1..f_L");
  tr->add_option("--epochs", tr_epochs, "Maximum epochs");
  tr->add_option("--patience", tr_patience, "Early-stopping patience in epochs");
  tr->add_option("--split", tr_split, "Train,val,test ratios");
  tr->add_option("--tasks-per-epoch", tr_tpe, "Training tasks per epoch (0 = all)");
  tr->add_option("--seed", tr_seed, "Random seed");

  // query
  auto* qu = app.add_subcommand("query", "Extract the community of one query node");
  std::string qu_data, qu_ckpt, qu_types, qu_dmax = "inf";
  NodeId qu_node = 0;
  double qu_gamma = -1.0;
  qu->add_option("--data", qu_data, "Dataset directory")->required();
  qu->add_option("--checkpoint", qu_ckpt, "Checkpoint file")->required();
  qu->add_option("--query-node", qu_node, "Query node id")->required();
  qu->add_option("--types", qu_types, "Target node types (names or prefixes; empty = all)");
  qu->add_option("--gamma", qu_gamma, "Membership threshold (<0 = checkpoint value)");
  qu->add_option("--dmax", qu_dmax, "Maximum search depth or 'inf'");

  // evaluate
  auto* ev = app.add_subcommand("evaluate", "Score a checkpoint on held-out tasks");
  std::string ev_data, ev_ckpt, ev_types, ev_dmax = "inf", ev_sweep, ev_tsv;
  double ev_gamma = -1.0;
  bool ev_all = false;
  ev->add_option("--data", ev_data, "Dataset directory")->required();
  ev->add_option("--checkpoint", ev_ckpt, "Checkpoint file")->required();
  ev->add_option("--types", ev_types, "Override target types for every task");
  ev->add_option("--gamma", ev_gamma, "Membership threshold (<0 = checkpoint value)");
  ev->add_option("--dmax", ev_dmax, "Search depth or 'inf'");
  ev->add_option("--sweep-dmax", ev_sweep, "Depth range such as 2..10");
  ev->add_flag("--all-tasks", ev_all, "Evaluate every task, not only the test split");
  ev->add_option("--tsv", ev_tsv, "Also write per-task rows as TSV");

  // bench
  auto* be = app.add_subcommand("bench", "Time training and search on growing graphs");
  std::string be_sizes = "2000,8000,32000", be_fanouts = "20,10", be_tsv;
  ModelFlags be_model;
  BenchConfig be_cfg;
  be->add_option("--sizes", be_sizes, "Graph sizes");
  be->add_option("--reps", be_cfg.reps, "Repetitions per cell");
  be->add_option("--tasks-per-epoch", be_cfg.tasks_per_epoch, "Training tasks per timed epoch");
  be->add_option("--queries", be_cfg.queries, "Queries per repetition");
  be->add_option("--dmax", be_cfg.d_max, "Search depth for the bounded search");
  be->add_option("--gamma", be_cfg.gamma, "Membership threshold");
  be->add_option("--fanouts", be_fanouts, "Sampling fanouts f_1..f_L");
  be->add_option("--p-out", be_cfg.p_out, "Cross-community edge probability at 2,000 nodes");
  be_model.add(be);
  be->add_option("--seed", be_cfg.seed, "Random seed");
  be->add_option("--tsv", be_tsv, "Also write the report as TSV");

  for (auto* sub : {gen, tr, qu, ev, be}) sub->add_option("--config", config_file, "JSON file of flag values");

  try {
    std::vector<std::string> argv = args;
    if (!argv.empty()) {
      CLI::App* sub = nullptr;
      for (auto* s : {gen, tr, qu, ev, be}) {
        if (s->get_name() == argv.front()) sub = s;
      }
      auto it = std::find_if(argv.begin(), argv.end(), [](const std::string& a) {
        return a == "--config" || a.rfind("--config=", 0) == 0;
      });
      if (sub && it != argv.end()) {
        std::string file;
        if (*it == "--config") {
          if (it + 1 == argv.end()) throw ArgError("--config needs a file");
          file = *(it + 1);
        } else {
          file = it->substr(9);
        }
        auto tokens = config_tokens(file, sub);
        argv.insert(argv.begin() + 1, tokens.begin(), tokens.end());
      }
    }
    std::reverse(argv.begin(), argv.end());
    app.parse(argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  } catch (const ArgError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  {
    json log{{"command", sub->get_name()}, {"config", resolved_config(sub)}};
    err << "config " << log.dump() << std::endl;
  }

  try {
    if (sub == gen) {
      SynthConfig c = SynthConfig::bibliographic(gen_nodes);
      if (gen_communities > 0) {
        const auto scale = static_cast<double>(c.communities) / static_cast<double>(gen_communities);
        c.communities = gen_communities;
        for (auto& nt : c.node_types) {
          nt.community_size = static_cast<std::size_t>(static_cast<double>(nt.community_size) * scale);
        }
      }
      c.p_in = gen_p_in;
      if (gen_p_out >= 0.0) c.p_out = gen_p_out;
      c.signal = gen_signal;
      c.queries_per_community = gen_queries;
      c.pos_fraction = gen_pos;
      c.seed = gen_seed;
      c.target_types.clear();
      std::stringstream ss(gen_targets);
      for (std::string t; std::getline(ss, t, ',');) c.target_types.push_back(t);
      const Dataset ds = generate(c);
      const fs::path dir = data_path(gen_out);
      save_dataset(dir, ds.graph, ds.tasks, ds.communities);
      out << json{{"dataset", dir.string()},
                  {"nodes", ds.graph.num_nodes()},
                  {"edges", ds.graph.num_input_edges()},
                  {"communities", ds.communities.size()},
                  {"tasks", ds.tasks.size()}}
                 .dump()
          << "\n";
      return 0;
    }

    if (sub == tr) {
      TrainConfig c;
      ModelConfig model;
      std::vector<double> split;
      try {
        c.mode = parse_train_mode(tr_mode);
        c.fanouts = parse_list<std::size_t>(tr_fanouts, "fanouts");
        split = parse_list<double>(tr_split, "split");
        if (split.size() != 3) throw ArgError("--split needs three ratios");
        model = tr_model.config();
        c.epochs = tr_epochs;
        c.patience = tr_patience;
        c.learning_rate = tr_lr;
        c.weight_decay = tr_wd;
        c.train_ratio = split[0];
        c.val_ratio = split[1];
        c.test_ratio = split[2];
        c.seed = tr_seed;
        c.tasks_per_epoch = tr_tpe;
        c.check(model);
      } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n\n" << tr->help();
        return 2;
      }
      const Dataset ds = load_dataset(data_path(tr_data));
      if (ds.tasks.empty()) throw std::runtime_error("dataset has no tasks.json");
      c.log = &err;
      c.checkpoint_path = data_path(tr_ckpt);
      const TrainResult result = train(ds.graph, ds.tasks, model, c);
      save_checkpoint(*c.checkpoint_path, result.checkpoint, ds.graph);
      const std::string report = train_report_json(result.report);
      if (!tr_report.empty()) write_text(data_path(tr_report), report + "\n");
      out << report << "\n";
      return 0;
    }

    if (sub == qu) {
      const Dataset ds = load_dataset(data_path(qu_data));
      const Checkpoint ckpt = load_checkpoint(data_path(qu_ckpt), ds.graph);
      SearchConfig sc;
      try {
        sc.gamma = qu_gamma >= 0.0 ? qu_gamma : ckpt.gamma;
        const auto depths = parse_depths(qu_dmax);
        if (depths.size() != 1) throw ArgError("--dmax takes a single depth");
        sc.max_depth = depths.front();
        if (!qu_types.empty()) sc.target_types = parse_type_list(ds.graph, qu_types);
        if (qu_node < 0 || static_cast<std::size_t>(qu_node) >= ds.graph.num_nodes()) {
          throw ArgError("--query-node " + std::to_string(qu_node) + " is not a node of the graph");
        }
      } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n\n" << qu->help();
        return 2;
      }
      const MessageIndex index = build_message_index(ds.graph, ckpt.config.edge_dim);
      const auto p = predict(ckpt.params, ckpt.config, ds.graph, index, qu_node);
      const CommunityResult r = search(ds.graph, qu_node, p, sc);
      out << community_json(ds.graph, r, sc) << "\n";
      return 0;
    }

    if (sub == ev) {
      const Dataset ds = load_dataset(data_path(ev_data));
      const Checkpoint ckpt = load_checkpoint(data_path(ev_ckpt), ds.graph);
      EvalConfig c;
      try {
        if (ev_gamma >= 0.0) c.gamma = ev_gamma;
        c.depths = parse_depths(ev_sweep.empty() ? ev_dmax : ev_sweep);
        if (!ev_types.empty()) c.target_types = parse_type_list(ds.graph, ev_types);
      } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n\n" << ev->help();
        return 2;
      }
      if (ds.tasks.empty()) throw std::runtime_error("dataset has no tasks.json");
      std::vector<std::size_t> which;
      if (!ev_all) {
        which = ckpt.test_tasks;
        if (which.empty()) throw std::runtime_error("checkpoint has no test split; pass --all-tasks");
      }
      const EvalReport report = evaluate(ds.graph, ckpt, ds.tasks, ds.communities, which, c);
      if (!ev_tsv.empty()) write_text(data_path(ev_tsv), eval_report_tsv(report));
      out << eval_report_json(report) << "\n";
      return 0;
    }

    if (sub == be) {
      try {
        be_cfg.sizes = parse_list<std::size_t>(be_sizes, "sizes");
        be_cfg.fanouts = parse_list<std::size_t>(be_fanouts, "fanouts");
        be_cfg.model = be_model.config();
        be_cfg.model.check();
      } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << "\n\n" << be->help();
        return 2;
      }
      be_cfg.log = &err;
      const BenchReport report = bench(be_cfg);
      if (!be_tsv.empty()) write_text(data_path(be_tsv), bench_report_tsv(report));
      out << bench_report_json(report) << "\n";
      return 0;
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << std::endl;
    return 1;
  }
  return 1;
}

}  // namespace hetcs
