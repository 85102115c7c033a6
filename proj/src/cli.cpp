#include "dsanet/cli.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <iomanip>
#include <iostream>
#include <limits>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "dsanet/checkpoint.hpp"
#include "dsanet/error.hpp"
#include "dsanet/eval.hpp"
#include "dsanet/hsi.hpp"
#include "dsanet/model.hpp"
#include "dsanet/random.hpp"
#include "dsanet/specview.hpp"

namespace dsanet::cli {
namespace fs = std::filesystem;

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

nlohmann::ordered_json to_json(const RunConfig& c) {
  nlohmann::ordered_json j;
  j["data"] = c.data;
  j["truth"] = c.truth;
  j["partition"] = c.partition;
  j["model"] = c.model;
  j["clusters"] = c.clusters;
  j["views"] = c.views;
  j["sample_size"] = c.sample_size;
  j["endmembers"] = c.endmembers;
  j["window"] = c.window;
  j["hidden"] = c.hidden;
  j["dropout"] = c.dropout;
  j["lambda1"] = c.lambda1;
  j["lambda2"] = c.lambda2;
  j["learning_rate"] = c.learning_rate;
  j["batch_size"] = c.batch_size;
  j["epochs"] = c.epochs;
  j["seed"] = c.seed;
  j["repeats"] = c.repeats;
  j["timing"] = c.timing;
  j["out"] = c.out;
  j["threads"] = c.threads;
  return j;
}

namespace {

template <class T>
void take(const nlohmann::json& j, const char* key, T& field) {
  if (auto it = j.find(key); it != j.end()) {
    try {
      field = it->get<T>();
    } catch (const nlohmann::json::exception&) {
      throw ConfigError(std::string("config key '") + key + "' has the wrong type");
    }
  }
}

}  // namespace

RunConfig from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig c;
  const auto known = to_json(c);
  for (const auto& item : j.items()) {
    // config_hash is what an echoed config records about its run; it is
    // recomputed, never read back.
    if (item.key() == "config_hash") continue;
    if (!known.contains(item.key())) throw ConfigError("unknown config key '" + item.key() + "'");
  }
  take(j, "data", c.data);
  take(j, "truth", c.truth);
  take(j, "partition", c.partition);
  take(j, "model", c.model);
  take(j, "clusters", c.clusters);
  take(j, "views", c.views);
  take(j, "sample_size", c.sample_size);
  take(j, "endmembers", c.endmembers);
  take(j, "window", c.window);
  take(j, "hidden", c.hidden);
  take(j, "dropout", c.dropout);
  take(j, "lambda1", c.lambda1);
  take(j, "lambda2", c.lambda2);
  take(j, "learning_rate", c.learning_rate);
  take(j, "batch_size", c.batch_size);
  take(j, "epochs", c.epochs);
  take(j, "seed", c.seed);
  take(j, "repeats", c.repeats);
  take(j, "timing", c.timing);
  take(j, "out", c.out);
  take(j, "threads", c.threads);
  return c;
}

std::uint64_t run_hash(const RunConfig& config) {
  nlohmann::json j = to_json(config);  // std::map keys: sorted, canonical
  j.erase("out");
  j.erase("threads");
  for (const char* key : {"data", "truth", "partition", "model"}) {
    const std::string path = j[key].get<std::string>();
    if (!path.empty()) j[key] = "fnv1a64:" + hex64(fnv1a64(hsi::read_file(path)));
  }
  const std::string text = j.dump();
  return fnv1a64({reinterpret_cast<const unsigned char*>(text.data()), text.size()});
}

namespace {

void write_text(const fs::path& path, const std::string& text) {
  hsi::write_file(path, {reinterpret_cast<const unsigned char*>(text.data()), text.size()});
}

double parse_snr(const std::string& text) {
  if (text == "inf" || text == "+inf" || text == "infinity") {
    return std::numeric_limits<double>::infinity();
  }
  std::size_t used = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &used);
  } catch (const std::exception&) {
    used = 0;
  }
  if (used == 0 || used != text.size()) throw ConfigError("--snr: not a number: '" + text + "'");
  return v;
}

// Values given on the command line; unset ones fall back to the config file
// and then to the RunConfig defaults.
struct Overrides {
  std::optional<std::string> config_path;
  std::optional<std::string> data, truth, partition, model, out;
  std::optional<std::size_t> clusters, views, sample_size, endmembers, window, hidden;
  std::optional<double> dropout, lambda1, lambda2, learning_rate;
  std::optional<std::size_t> batch_size, epochs, repeats;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  bool timing = false;

  RunConfig resolve() const {
    RunConfig c;
    if (config_path) {
      const auto bytes = hsi::read_file(*config_path);
      nlohmann::json j;
      try {
        j = nlohmann::json::parse(bytes.begin(), bytes.end());
      } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError("config " + *config_path + ": " + e.what());
      }
      c = from_json(j);
    }
    auto set = [](auto& field, const auto& value) {
      if (value) field = *value;
    };
    set(c.data, data);
    set(c.truth, truth);
    set(c.partition, partition);
    set(c.model, model);
    set(c.out, out);
    set(c.clusters, clusters);
    set(c.views, views);
    set(c.sample_size, sample_size);
    set(c.endmembers, endmembers);
    set(c.window, window);
    set(c.hidden, hidden);
    set(c.dropout, dropout);
    set(c.lambda1, lambda1);
    set(c.lambda2, lambda2);
    set(c.learning_rate, learning_rate);
    set(c.batch_size, batch_size);
    set(c.epochs, epochs);
    set(c.repeats, repeats);
    set(c.seed, seed);
    set(c.threads, threads);
    if (timing) c.timing = true;
    return c;
  }
};

void add_run_options(CLI::App* cmd, Overrides& o, bool model_options) {
  cmd->add_option("--config", o.config_path, "JSON run configuration");
  cmd->add_option("--data", o.data, "HSIB cube");
  cmd->add_option("--seed", o.seed, "Random seed");
  cmd->add_option("-o,--out", o.out, "Output directory");
  cmd->add_option("--threads", o.threads, "Inference worker threads");
  cmd->add_option("--m,--clusters", o.clusters, "Band clusters M");
  cmd->add_option("--n,--views", o.views, "Spectral views N");
  cmd->add_option("--sample-size", o.sample_size, "Pixels sampled for band correlation");
  if (!model_options) return;
  cmd->add_option("--partition", o.partition, "Partition file (computed when omitted)");
  cmd->add_option("--p,--endmembers", o.endmembers, "Endmembers P");
  cmd->add_option("--k,--window", o.window, "Patch side k (odd)");
  cmd->add_option("--hidden", o.hidden, "Hidden width D");
  cmd->add_option("--dropout", o.dropout, "Dropout rate");
  cmd->add_option("--lambda1", o.lambda1, "Spectral angle loss weight");
  cmd->add_option("--lambda2", o.lambda2, "Sparsity loss weight");
  cmd->add_option("--lr,--learning-rate", o.learning_rate, "Adam learning rate");
  cmd->add_option("--batch-size", o.batch_size, "Minibatch size");
  cmd->add_option("--epochs", o.epochs, "Training epochs");
}

void require_data(const RunConfig& c) {
  if (c.data.empty()) throw ConfigError("no input cube: pass --data or set \"data\" in the config");
}

model::ModelConfig model_config(const RunConfig& c, specview::ViewPartition partition,
                                std::uint64_t seed) {
  model::ModelConfig m;
  m.endmembers = c.endmembers;
  m.window = c.window;
  m.hidden = c.hidden;
  m.dropout = c.dropout;
  m.partition = std::move(partition);
  m.lambda1 = c.lambda1;
  m.lambda2 = c.lambda2;
  m.learning_rate = c.learning_rate;
  m.batch_size = c.batch_size;
  m.epochs = c.epochs;
  m.seed = seed;
  return m;
}

specview::ViewPartition compute_partition(const hsi::Cube& cube, const RunConfig& c) {
  const auto corr = specview::band_correlation(cube, c.sample_size, c.seed);
  const auto labels = specview::cluster_bands(corr, c.clusters);
  auto partition = specview::partition_views(labels, c.views);
  return partition;
}

specview::ViewPartition resolve_partition(const hsi::Cube& cube, const RunConfig& c) {
  if (c.partition.empty()) return compute_partition(cube, c);
  auto partition = specview::load_partition(c.partition);
  if (partition.band_count() != cube.bands) {
    throw DimensionError("partition covers " + std::to_string(partition.band_count()) +
                         " bands, cube has " + std::to_string(cube.bands));
  }
  return partition;
}

void echo_config(const RunConfig& c, std::uint64_t hash) {
  auto j = to_json(c);
  j["config_hash"] = hex64(hash);
  write_text(fs::path(c.out) / "config.resolved.json", j.dump(2) + "\n");
}

std::string format_double(double v) {
  std::ostringstream s;
  s << std::setprecision(std::numeric_limits<double>::max_digits10) << v;
  return s.str();
}

// ---- synth ----------------------------------------------------------------

struct SynthFlags {
  std::size_t height = 0, width = 0, bands = 0, materials = 0;
  std::string snr = "30";
  double alpha = 0.5;
  std::uint64_t seed = 0;
  std::string out = ".";
  std::string name = "synth";
};

int cmd_synth(const SynthFlags& f, std::ostream& out) {
  hsi::SyntheticOptions opt;
  opt.height = f.height;
  opt.width = f.width;
  opt.bands = f.bands;
  opt.materials = f.materials;
  opt.snr_db = parse_snr(f.snr);
  opt.alpha = f.alpha;
  opt.seed = f.seed;
  const auto scene = hsi::generate_synthetic(opt);
  fs::create_directories(f.out);
  const fs::path cube_path = fs::path(f.out) / (f.name + ".hsib");
  hsi::save_cube(scene.cube, cube_path);
  hsi::save_truth(scene.truth, hsi::truth_path_for(cube_path));
  out << "wrote " << cube_path.string() << " and " << hsi::truth_path_for(cube_path).string()
      << "\n";
  return kExitOk;
}

// ---- partition ------------------------------------------------------------

int cmd_partition(const RunConfig& c, std::ostream& out) {
  require_data(c);
  const auto loaded = hsi::load_cube(c.data);
  const auto partition = compute_partition(loaded.cube, c);
  fs::create_directories(c.out);
  const fs::path path = fs::path(c.out) / "partition.txt";
  specview::save_partition(partition, path);
  out << "wrote " << path.string() << " (" << partition.view_count() << " views over "
      << partition.band_count() << " bands)\n";
  return kExitOk;
}

// ---- train ----------------------------------------------------------------

void write_history(const std::vector<double>& history, const fs::path& path) {
  std::string text;
  for (std::size_t e = 0; e < history.size(); ++e) {
    text += std::to_string(e + 1) + "," + format_double(history[e]) + "\n";
  }
  write_text(path, text);
}

int cmd_train(const RunConfig& c, std::ostream& out) {
  require_data(c);
  const std::uint64_t hash = run_hash(c);
  const auto loaded = hsi::load_cube(c.data);
  const auto partition = resolve_partition(loaded.cube, c);
  const auto config = model_config(c, partition, c.seed);
  model::validate(config);

  auto trained = model::train(loaded.cube, config);
  trained.model.provenance = hash;

  const fs::path dir(c.out);
  fs::create_directories(dir);
  model::save_checkpoint(trained.model, dir / "model.dsan");
  write_history(trained.history, dir / "loss_history.csv");
  specview::save_partition(partition, dir / "partition.txt");
  echo_config(c, hash);
  out << "trained " << config.epochs << " epoch(s)";
  if (!trained.history.empty()) out << ", final loss " << format_double(trained.history.back());
  out << "; wrote " << (dir / "model.dsan").string() << "\n";
  return kExitOk;
}

// ---- eval -----------------------------------------------------------------

double sample_std(const std::vector<double>& xs) {
  if (xs.size() < 2) return 0.0;
  double mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  double ss = 0.0;
  for (double x : xs) ss += (x - mean) * (x - mean);
  return std::sqrt(ss / static_cast<double>(xs.size() - 1));
}

nlohmann::ordered_json summarize(const std::vector<eval::EvalReport>& runs) {
  if (runs.size() == 1) return eval::report_to_json(runs.front());
  const std::size_t R = runs.size(), P = runs.front().sad_per_em.size();
  eval::EvalReport mean;
  mean.permutation = runs.front().permutation;
  mean.sad_per_em.assign(P, 0.0);
  mean.rmse_per_em.assign(P, 0.0);
  std::vector<double> sad_avg, rmse_avg;
  std::vector<std::vector<double>> sad_em(P), rmse_em(P);
  for (const auto& r : runs) {
    for (std::size_t p = 0; p < P; ++p) {
      mean.sad_per_em[p] += r.sad_per_em[p] / static_cast<double>(R);
      mean.rmse_per_em[p] += r.rmse_per_em[p] / static_cast<double>(R);
      sad_em[p].push_back(r.sad_per_em[p]);
      rmse_em[p].push_back(r.rmse_per_em[p]);
    }
    mean.sad_avg += r.sad_avg / static_cast<double>(R);
    mean.rmse_avg += r.rmse_avg / static_cast<double>(R);
    mean.runtime_s += r.runtime_s / static_cast<double>(R);
    sad_avg.push_back(r.sad_avg);
    rmse_avg.push_back(r.rmse_avg);
  }
  auto j = eval::report_to_json(mean);
  std::vector<double> sad_std(P), rmse_std(P);
  for (std::size_t p = 0; p < P; ++p) {
    sad_std[p] = sample_std(sad_em[p]);
    rmse_std[p] = sample_std(rmse_em[p]);
  }
  j["repeats"] = R;
  j["sad_per_em_std"] = sad_std;
  j["rmse_per_em_std"] = rmse_std;
  j["sad_avg_std"] = sample_std(sad_avg);
  j["rmse_avg_std"] = sample_std(rmse_avg);
  return j;
}

int cmd_eval(const RunConfig& c, std::ostream& out) {
  require_data(c);
  if (c.repeats == 0) throw ConfigError("--repeats must be at least 1");
  if (!c.model.empty() && c.repeats > 1) {
    throw ConfigError("--repeats retrains the model and cannot be combined with --model");
  }
  const std::uint64_t hash = run_hash(c);
  const auto loaded = hsi::load_cube(c.data);
  hsi::GroundTruth truth;
  if (!c.truth.empty()) {
    truth = hsi::load_truth(c.truth);
  } else if (loaded.truth) {
    truth = *loaded.truth;
  } else {
    throw IoError("no ground truth: " + hsi::truth_path_for(c.data).string() +
                  " does not exist and --truth was not given");
  }

  std::vector<eval::EvalReport> runs;
  UnmixResult first;
  using clock = std::chrono::steady_clock;
  if (!c.model.empty()) {
    const auto start = clock::now();
    auto m = model::load_checkpoint(c.model);
    m.mode = ad::Mode::kInfer;
    first = model::infer(loaded.cube, m, c.threads);
    runs.push_back(eval::evaluate(first, truth));
    if (c.timing) runs.back().runtime_s = std::chrono::duration<double>(clock::now() - start).count();
  } else {
    const auto partition = resolve_partition(loaded.cube, c);
    for (std::size_t r = 0; r < c.repeats; ++r) {
      const auto start = clock::now();
      const auto config = model_config(c, partition, c.seed + r);
      model::validate(config);
      auto trained = model::train(loaded.cube, config);
      trained.model.provenance = hash;
      auto result = model::infer(loaded.cube, trained.model, c.threads);
      runs.push_back(eval::evaluate(result, truth));
      if (c.timing) {
        runs.back().runtime_s = std::chrono::duration<double>(clock::now() - start).count();
      }
      if (r == 0) first = std::move(result);
    }
  }

  const fs::path dir(c.out);
  fs::create_directories(dir);
  auto report = summarize(runs);
  report["config_hash"] = hex64(hash);
  eval::export_report_json(report, dir / "report.json");
  eval::export_abundance_maps(first, dir);
  eval::export_endmembers_csv(first, dir / "endmembers.csv");
  hsi::save_truth(eval::to_ground_truth(first), dir / "result.gt.hsib");
  echo_config(c, hash);
  out << "mean SAD " << format_double(report["sad_avg"].get<double>()) << " rad, mean RMSE "
      << format_double(report["rmse_avg"].get<double>()) << "; wrote "
      << (dir / "report.json").string() << "\n";
  return kExitOk;
}

// ---- info -----------------------------------------------------------------

int cmd_info(const std::string& path, std::ostream& out) {
  const auto bytes = hsi::read_file(path);
  const std::string magic(bytes.begin(), bytes.begin() + std::min<std::size_t>(4, bytes.size()));
  if (magic == "HSIB") {
    const auto cube = hsi::decode_cube(bytes);
    out << "HSIB cube\nH=" << cube.height << " W=" << cube.width << " L=" << cube.bands << "\n";
  } else if (magic == "HSGT") {
    const auto t = hsi::decode_truth(bytes);
    out << "HSGT ground truth\nP=" << t.materials << " L=" << t.bands << " H=" << t.height
        << " W=" << t.width << "\n";
  } else if (magic == "DSAN") {
    const auto m = model::decode_checkpoint(bytes);
    const auto& c = m.config;
    out << "DSAN checkpoint\nP=" << c.endmembers << " k=" << c.window << " D=" << c.hidden
        << " N=" << c.partition.view_count() << " M=" << c.partition.clusters
        << " L=" << c.bands() << "\n"
        << "dropout=" << c.dropout << " lambda1=" << c.lambda1 << " lambda2=" << c.lambda2
        << " lr=" << c.learning_rate << " batch=" << c.batch_size << " epochs=" << c.epochs
        << " seed=" << c.seed << "\n"
        << "mode=" << (m.mode == ad::Mode::kInfer ? "infer" : "train")
        << " provenance=" << hex64(m.provenance) << "\n";
  } else {
    throw ParseError("unrecognized magic; expected HSIB, HSGT or DSAN", 0);
  }
  return kExitOk;
}

int exit_code_for(const Error& e) {
  if (dynamic_cast<const NumericError*>(&e)) return kExitNumeric;
  if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const ContractError*>(&e)) {
    return kExitUsage;
  }
  return kExitData;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Dual-stream hyperspectral unmixing", "dsanet"};
  app.require_subcommand(1);

  SynthFlags synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic cube and ground truth");
  synth_cmd->set_help_flag("--help", "Print this help message and exit");  // frees --h
  synth_cmd->add_option("--h", synth.height, "Height")->required();
  synth_cmd->add_option("--w", synth.width, "Width")->required();
  synth_cmd->add_option("--l", synth.bands, "Bands")->required();
  synth_cmd->add_option("--p", synth.materials, "Endmembers")->required();
  synth_cmd->add_option("--snr", synth.snr, "SNR in dB, or inf for no noise");
  synth_cmd->add_option("--alpha", synth.alpha, "Dirichlet concentration");
  synth_cmd->add_option("--seed", synth.seed, "Random seed");
  synth_cmd->add_option("-o,--out", synth.out, "Output directory");
  synth_cmd->add_option("--name", synth.name, "File stem");

  Overrides part_flags, train_flags, eval_flags;
  auto* part_cmd = app.add_subcommand("partition", "Cluster bands and write the view partition");
  add_run_options(part_cmd, part_flags, false);

  auto* train_cmd = app.add_subcommand("train", "Train a model and write a checkpoint");
  add_run_options(train_cmd, train_flags, true);

  auto* eval_cmd = app.add_subcommand("eval", "Unmix, score against ground truth, export");
  add_run_options(eval_cmd, eval_flags, true);
  eval_cmd->add_option("--model", eval_flags.model, "Checkpoint to evaluate (trains when omitted)");
  eval_cmd->add_option("--gt,--truth", eval_flags.truth, "Ground truth (default: cube sidecar)");
  eval_cmd->add_option("--repeats", eval_flags.repeats, "Training runs with seeds seed, seed+1, ...");
  eval_cmd->add_flag("--timing", eval_flags.timing, "Record wall time in the report");

  std::string info_path;
  auto* info_cmd = app.add_subcommand("info", "Describe an HSIB, HSGT or DSAN file");
  info_cmd->add_option("path", info_path, "File")->required();

  std::vector<const char*> argv;
  argv.push_back("dsanet");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    return app.exit(e, out, err) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*synth_cmd) return cmd_synth(synth, out);
    if (*part_cmd) return cmd_partition(part_flags.resolve(), out);
    if (*train_cmd) return cmd_train(train_flags.resolve(), out);
    if (*eval_cmd) return cmd_eval(eval_flags.resolve(), out);
    if (*info_cmd) return cmd_info(info_path, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e);
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << "\n";
    return kExitData;
  }
  return kExitUsage;
}

int run(int argc, const char* const* argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return run(args, std::cout, std::cerr);
}

}  // namespace dsanet::cli
