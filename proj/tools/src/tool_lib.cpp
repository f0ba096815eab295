// SPDX-License-Identifier: MIT
#include "femlab_tools/tool_lib.hpp"

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"

#include "femlab/checks.hpp"
#include "femlab/errors.hpp"
#include "femlab/presets.hpp"
#include "femlab/version.hpp"

namespace femlab::tools {

namespace {

std::string trim(std::string_view s) {
  const char* ws = " \t\r\n";
  const auto begin = s.find_first_not_of(ws);
  if (begin == std::string_view::npos) return "";
  const auto end = s.find_last_not_of(ws);
  return std::string(s.substr(begin, end - begin + 1));
}

// Shortest round-trip decimal rendering (bit-exact through from_chars).
std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  (void)ec;
  return std::string(buf, ptr);
}

template <typename T>
T parse_number(const std::string& text, const std::string& what) {
  T value{};
  const char* first = text.data();
  const char* last = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last)
    throw ContractViolation("malformed " + what + ": '" + text + "'");
  return value;
}

void write_text_file(const std::filesystem::path& path,
                     const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out.good())
    throw IoError("failed writing " + path.string());
}

}  // namespace

ConfigMap parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in.good()) throw IoError("cannot open config file " + path);
  ConfigMap config;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (const auto hash = line.find('#'); hash != std::string::npos)
      line.erase(hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos)
      throw ContractViolation(path + ":" + std::to_string(lineno) +
                              ": expected key=value, got '" + stripped + "'");
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    if (key.empty())
      throw ContractViolation(path + ":" + std::to_string(lineno) +
                              ": empty key");
    config[key] = value;
  }
  return config;
}

std::string format_resolved_config(const ConfigMap& config) {
  std::string text;
  for (const auto& [key, value] : config) {
    text += key;
    text += '=';
    text += value;
    text += '\n';
  }
  return text;
}

std::uint64_t fnv1a64(std::string_view text) {
  std::uint64_t hash = 14695981039346656037ULL;
  for (const char c : text) {
    hash ^= static_cast<unsigned char>(c);
    hash *= 1099511628211ULL;
  }
  return hash;
}

std::string hex64(std::uint64_t value) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(value));
  return buf;
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> items;
  std::size_t start = 0;
  while (true) {
    const auto comma = text.find(',', start);
    const std::string item =
        trim(text.substr(start, comma == std::string::npos
                                    ? std::string::npos
                                    : comma - start));
    if (item.empty())
      throw ContractViolation("empty entry in list '" + text + "'");
    items.push_back(item);
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  return items;
}

std::string sanitize_component(const std::string& text) {
  std::string out;
  out.reserve(text.size());
  for (const char c : text) {
    if (c == '.')
      out += 'p';
    else if ((c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
             (c >= '0' && c <= '9') || c == '_' || c == '-')
      out += c;
    else
      out += '-';
  }
  return out;
}

std::filesystem::path resolve_out_path(const std::string& path) {
  std::filesystem::path p(path);
  if (p.is_absolute()) return p;
  if (const char* root = std::getenv("FEMLAB_OUT_ROOT"); root && *root)
    return std::filesystem::path(root) / p;
  return p;
}

std::string utc_timestamp() {
  const std::time_t now = std::time(nullptr);
  std::tm tm_utc{};
  gmtime_r(&now, &tm_utc);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm_utc);
  return buf;
}

ConfigMap spec_to_config(const RunSpec& spec) {
  ConfigMap config;
  config["data"] = spec.data_prefix;
  config["fixed_length"] = spec.fixed_length ? "1" : "0";
  config["freeze_grad_point"] = spec.cfg.freeze_grad_point ? "1" : "0";
  config["init"] = spec.init_checkpoint.value_or("base");
  config["iterations"] = std::to_string(spec.cfg.iterations);
  config["lmax"] = std::to_string(spec.max_len);
  config["lr_end"] = format_double(spec.cfg.lr_end);
  config["lr_start"] = format_double(spec.cfg.lr_start);
  config["scheme"] = spec.cfg.scheme.to_string();
  config["seed"] = std::to_string(spec.cfg.seed);
  config["shuffle"] = spec.cfg.shuffle_updates ? "1" : "0";
  config["train_n"] = std::to_string(spec.train_n);
  return config;
}

std::string metrics_jsonl_line(const IterationMetrics& m,
                               const std::string& scheme_tag,
                               std::uint64_t seed) {
  std::string line = "{\"iteration\":";
  line += std::to_string(m.iteration);
  line += ",\"scheme\":\"" + scheme_tag + "\"";
  line += ",\"seed\":" + std::to_string(seed);
  line += ",\"test_accuracy\":" + format_double(m.test_accuracy);
  line += ",\"data_utilization\":" + format_double(m.data_utilization);
  line += ",\"mean_rationale_len_accepted\":" +
          format_double(m.mean_rationale_len_accepted);
  line += ",\"mean_rationale_len_decoded\":" +
          format_double(m.mean_rationale_len_decoded);
  line += ",\"mean_attempts\":" + format_double(m.mean_attempts);
  line += ",\"train_marginal_loglik\":" +
          format_double(m.train_marginal_loglik);
  line += "}";
  return line;
}

std::string metrics_csv_header() {
  return "iteration,scheme,seed,test_accuracy,data_utilization,"
         "mean_rationale_len_accepted,mean_rationale_len_decoded,"
         "mean_attempts,train_marginal_loglik";
}

std::string metrics_csv_row(const IterationMetrics& m,
                            const std::string& scheme_tag,
                            std::uint64_t seed) {
  std::string row = std::to_string(m.iteration);
  row += "," + scheme_tag;
  row += "," + std::to_string(seed);
  row += "," + format_double(m.test_accuracy);
  row += "," + format_double(m.data_utilization);
  row += "," + format_double(m.mean_rationale_len_accepted);
  row += "," + format_double(m.mean_rationale_len_decoded);
  row += "," + format_double(m.mean_attempts);
  row += "," + format_double(m.train_marginal_loglik);
  return row;
}

RunArtifacts run_one_training(const RunSpec& spec) {
  const DatapointFile train_file =
      read_datapoints(spec.data_prefix + ".train");
  const DatapointFile test_file = read_datapoints(spec.data_prefix + ".test");
  if (train_file.vocab != test_file.vocab ||
      train_file.question_len != test_file.question_len)
    throw ContractViolation(
        "train/test files disagree on shape: train (v=" +
        std::to_string(train_file.vocab) +
        ", n=" + std::to_string(train_file.question_len) + ") vs test (v=" +
        std::to_string(test_file.vocab) +
        ", n=" + std::to_string(test_file.question_len) + ")");

  TaskShape shape;
  shape.vocab = train_file.vocab;
  shape.question_len = train_file.question_len;
  shape.max_len = spec.max_len;
  shape.variable_length = !spec.fixed_length;
  shape.validate();

  Dataset dataset;
  dataset.seed = spec.cfg.seed;
  dataset.test = test_file.records;
  if (spec.train_n == 0) {
    dataset.train = train_file.records;
  } else {
    if (spec.train_n > train_file.records.size())
      throw ContractViolation(
          "train_n=" + std::to_string(spec.train_n) + " exceeds the " +
          std::to_string(train_file.records.size()) + " available records");
    dataset.train.assign(train_file.records.begin(),
                         train_file.records.begin() +
                             static_cast<std::ptrdiff_t>(spec.train_n));
  }

  PolicyParams init = PolicyParams::zeros(shape.vocab);
  if (spec.init_checkpoint) {
    const Checkpoint ckpt = read_checkpoint(*spec.init_checkpoint);
    if (ckpt.params.vocab != shape.vocab)
      throw ContractViolation(
          "init checkpoint vocab " + std::to_string(ckpt.params.vocab) +
          " does not match data vocab " + std::to_string(shape.vocab));
    init = ckpt.params;
  } else {
    init = make_base_policy(shape);
  }

  std::filesystem::create_directories(spec.out_dir);

  RunArtifacts artifacts;
  artifacts.shape = shape;
  const IterationObserver observer = [&](const IterationTrace& trace) {
    char name[32];
    std::snprintf(name, sizeof(name), "policy-iter-%03d.txt",
                  trace.iteration);
    const std::filesystem::path path = spec.out_dir / name;
    write_checkpoint(path.string(), trace.params_after, shape);
    artifacts.checkpoints.push_back(path);
  };

  auto [final_params, metrics] =
      fem_train(dataset, shape, init, spec.cfg, observer);
  artifacts.final_params = final_params;
  artifacts.metrics = metrics;

  const std::string scheme_tag = spec.cfg.scheme.to_string();
  std::string jsonl, csv = metrics_csv_header() + "\n";
  for (const IterationMetrics& m : metrics) {
    jsonl += metrics_jsonl_line(m, scheme_tag, spec.cfg.seed) + "\n";
    csv += metrics_csv_row(m, scheme_tag, spec.cfg.seed) + "\n";
  }
  artifacts.metrics_jsonl = spec.out_dir / "metrics.jsonl";
  artifacts.metrics_csv = spec.out_dir / "metrics.csv";
  write_text_file(artifacts.metrics_jsonl, jsonl);
  write_text_file(artifacts.metrics_csv, csv);
  return artifacts;
}

namespace {

// --- subcommand implementations ---------------------------------------------

struct TrainCli {
  std::string data;
  std::string config_file;
  std::string scheme = "pps:0.1";
  std::uint64_t seed = 0;
  int iterations = 10;
  double lr_start = 0.09;
  double lr_end = 0.018;
  int lmax = 6;
  bool fixed_length = false;
  bool no_shuffle = false;
  bool freeze_grad_point = false;
  std::string init;
  std::string out_dir;
};

// Merges defaults, a config file, and explicitly-passed CLI flags (flags
// win) into a fully resolved key=value map.
ConfigMap resolve_train_config(const TrainCli& cli, const CLI::App* sub) {
  RunSpec defaults;
  defaults.cfg = TrainConfig{};
  ConfigMap resolved = spec_to_config(defaults);
  resolved["data"] = "";

  if (!cli.config_file.empty()) {
    for (const auto& [key, value] : parse_config_file(cli.config_file)) {
      if (!resolved.count(key))
        throw ContractViolation("unknown config key '" + key + "'");
      resolved[key] = value;
    }
  }

  if (sub->count("--data")) resolved["data"] = cli.data;
  if (sub->count("--scheme")) resolved["scheme"] = cli.scheme;
  if (sub->count("--seed")) resolved["seed"] = std::to_string(cli.seed);
  if (sub->count("--iters"))
    resolved["iterations"] = std::to_string(cli.iterations);
  if (sub->count("--lr-start")) resolved["lr_start"] = format_double(cli.lr_start);
  if (sub->count("--lr-end")) resolved["lr_end"] = format_double(cli.lr_end);
  if (sub->count("--lmax")) resolved["lmax"] = std::to_string(cli.lmax);
  if (sub->count("--fixed-length")) resolved["fixed_length"] = "1";
  if (sub->count("--no-shuffle")) resolved["shuffle"] = "0";
  if (sub->count("--freeze-grad-point")) resolved["freeze_grad_point"] = "1";
  if (sub->count("--init")) resolved["init"] = cli.init;

  if (resolved["data"].empty())
    throw ContractViolation("no dataset: pass --data or a config data= key");
  return resolved;
}

// Builds the RunSpec a resolved config describes. `out_dir` comes from the
// command line only and never participates in the config digest.
RunSpec spec_from_config(const ConfigMap& resolved,
                         const std::filesystem::path& out_dir) {
  RunSpec spec;
  spec.data_prefix = resolved.at("data");
  spec.max_len = parse_number<int>(resolved.at("lmax"), "lmax");
  spec.fixed_length = resolved.at("fixed_length") == "1";
  spec.train_n =
      parse_number<std::size_t>(resolved.at("train_n"), "train_n");
  if (resolved.at("init") != "base") spec.init_checkpoint = resolved.at("init");
  const auto scheme = SchemeSpec::parse(resolved.at("scheme"));
  if (!scheme)
    throw ContractViolation("malformed scheme '" + resolved.at("scheme") +
                            "'");
  spec.cfg.scheme = *scheme;
  spec.cfg.seed = parse_number<std::uint64_t>(resolved.at("seed"), "seed");
  spec.cfg.iterations =
      parse_number<int>(resolved.at("iterations"), "iterations");
  spec.cfg.lr_start = parse_number<double>(resolved.at("lr_start"), "lr_start");
  spec.cfg.lr_end = parse_number<double>(resolved.at("lr_end"), "lr_end");
  spec.cfg.shuffle_updates = resolved.at("shuffle") == "1";
  spec.cfg.freeze_grad_point = resolved.at("freeze_grad_point") == "1";
  spec.cfg.validate();
  spec.out_dir = out_dir;
  return spec;
}

nlohmann::json artifact_manifest(const RunArtifacts& artifacts) {
  nlohmann::json files = nlohmann::json::array();
  for (const auto& p : artifacts.checkpoints) files.push_back(p.string());
  return nlohmann::json{
      {"metrics_jsonl", artifacts.metrics_jsonl.string()},
      {"metrics_csv", artifacts.metrics_csv.string()},
      {"checkpoints", files}};
}

int do_generate(int vocab, int question_len, std::size_t train_n,
                std::size_t test_n, std::uint64_t seed,
                const std::string& out_prefix) {
  TaskShape shape;
  shape.vocab = vocab;
  shape.question_len = question_len;
  shape.validate();
  const Dataset ds = generate_dataset(shape, train_n, test_n, seed);
  const std::filesystem::path prefix = resolve_out_path(out_prefix);
  if (prefix.has_parent_path())
    std::filesystem::create_directories(prefix.parent_path());
  write_datapoints(prefix.string() + ".train", vocab, question_len, ds.train);
  write_datapoints(prefix.string() + ".test", vocab, question_len, ds.test);
  std::cout << "wrote " << ds.train.size() << " train and " << ds.test.size()
            << " test records to " << prefix.string() << ".{train,test}\n";
  return 0;
}

int do_train(const TrainCli& cli, const CLI::App* sub) {
  const ConfigMap resolved = resolve_train_config(cli, sub);
  const std::filesystem::path out_dir = resolve_out_path(cli.out_dir);
  std::filesystem::create_directories(out_dir);

  const std::string resolved_text = format_resolved_config(resolved);
  const std::string digest = hex64(fnv1a64(resolved_text));
  write_text_file(out_dir / "resolved-config.txt", resolved_text);

  const RunSpec spec = spec_from_config(resolved, out_dir);
  const std::string started = utc_timestamp();
  const RunArtifacts artifacts = run_one_training(spec);

  nlohmann::json manifest{
      {"config_digest", digest},
      {"scheme", spec.cfg.scheme.to_string()},
      {"seed", spec.cfg.seed},
      {"started_at", started},
      {"finished_at", utc_timestamp()},
      {"tool_version", kVersion},
      {"artifacts", artifact_manifest(artifacts)}};
  write_text_file(out_dir / "manifest.json", manifest.dump(2) + "\n");

  const IterationMetrics& last = artifacts.metrics.back();
  std::cout << "trained " << spec.cfg.scheme.to_string() << " seed "
            << spec.cfg.seed << " for " << spec.cfg.iterations
            << " iterations: final test_accuracy="
            << format_double(last.test_accuracy)
            << " utilization=" << format_double(last.data_utilization)
            << "\n";
  return 0;
}

int do_sweep(const std::string& config_file, const std::string& out_dir_arg) {
  const ConfigMap file_config = parse_config_file(config_file);

  // Validate keys against the train schema before expanding axes.
  RunSpec defaults;
  ConfigMap base = spec_to_config(defaults);
  base["data"] = "";
  for (const auto& [key, value] : file_config) {
    if (!base.count(key))
      throw ContractViolation("unknown config key '" + key + "'");
    base[key] = value;
  }
  if (base["data"].empty())
    throw ContractViolation("sweep config must set data=");

  const std::vector<std::string> schemes = split_list(base["scheme"]);
  const std::vector<std::string> seeds = split_list(base["seed"]);
  const std::vector<std::string> train_ns = split_list(base["train_n"]);

  const std::filesystem::path out_dir = resolve_out_path(out_dir_arg);
  std::filesystem::create_directories(out_dir);
  const std::string started = utc_timestamp();

  std::string summary = "cell,train_n," + metrics_csv_header() + "\n";
  nlohmann::json cells = nlohmann::json::array();
  int failures = 0;

  for (const std::string& scheme : schemes) {
    for (const std::string& seed : seeds) {
      for (const std::string& train_n : train_ns) {
        ConfigMap cell = base;
        cell["scheme"] = scheme;
        cell["seed"] = seed;
        cell["train_n"] = train_n;
        const std::string cell_name = "scheme-" + sanitize_component(scheme) +
                                      "_seed-" + sanitize_component(seed) +
                                      "_n-" + sanitize_component(train_n);
        nlohmann::json entry{{"cell", cell_name},
                             {"config_digest",
                              hex64(fnv1a64(format_resolved_config(cell)))}};
        try {
          const RunSpec spec = spec_from_config(cell, out_dir / cell_name);
          std::filesystem::create_directories(spec.out_dir);
          write_text_file(spec.out_dir / "resolved-config.txt",
                          format_resolved_config(cell));
          const RunArtifacts artifacts = run_one_training(spec);
          for (const IterationMetrics& m : artifacts.metrics) {
            summary += cell_name + "," + train_n + "," +
                       metrics_csv_row(m, spec.cfg.scheme.to_string(),
                                       spec.cfg.seed) +
                       "\n";
          }
          entry["status"] = "ok";
        } catch (const std::exception& e) {
          entry["status"] = "failed";
          entry["error"] = e.what();
          ++failures;
        }
        cells.push_back(entry);
      }
    }
  }

  write_text_file(out_dir / "summary.csv", summary);
  nlohmann::json manifest{{"started_at", started},
                          {"finished_at", utc_timestamp()},
                          {"tool_version", kVersion},
                          {"cells", cells}};
  write_text_file(out_dir / "manifest.json", manifest.dump(2) + "\n");
  std::cout << "sweep: " << (cells.size() - failures) << "/" << cells.size()
            << " cells succeeded\n";
  return failures == 0 ? 0 : 3;
}

int do_verify(const std::string& suite, std::uint64_t seed) {
  const std::vector<CheckResult> results = run_suite(suite, seed);
  int passed = 0;
  for (const CheckResult& r : results) {
    std::cout << format_check_line(r) << "\n";
    passed += r.pass ? 1 : 0;
  }
  std::cout << "verify[" << suite << "]: " << passed << "/" << results.size()
            << " checks passed\n";
  return passed == static_cast<int>(results.size()) ? 0 : 2;
}

int do_evaluate(const std::string& checkpoint_path,
                const std::string& data_path) {
  const Checkpoint ckpt = read_checkpoint(checkpoint_path);
  const DatapointFile data = read_datapoints(data_path);
  if (ckpt.shape.vocab != data.vocab ||
      ckpt.shape.question_len != data.question_len) {
    std::cerr << "shape mismatch: checkpoint (v=" << ckpt.shape.vocab
              << ", n=" << ckpt.shape.question_len
              << ", lmax=" << ckpt.shape.max_len
              << ", varlen=" << (ckpt.shape.variable_length ? 1 : 0)
              << ") vs data (v=" << data.vocab << ", n=" << data.question_len
              << ")\n";
    return 3;
  }
  const auto [accuracy, mean_len] =
      evaluate(ckpt.params, ckpt.shape, data.records);
  std::cout << "n=" << data.records.size()
            << " accuracy=" << format_double(accuracy)
            << " mean_rationale_len=" << format_double(mean_len) << "\n";
  return 0;
}

}  // namespace

int run_cli(const std::vector<std::string>& args) {
  CLI::App app{"filtered-EM training lab for tabular rationale policies"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  // generate-data
  auto* gen = app.add_subcommand("generate-data",
                                 "sample a modular-sum dataset to disk");
  int gen_v = 5, gen_n = 4;
  std::size_t gen_train = 2000, gen_test = 2000;
  std::uint64_t gen_seed = 0;
  std::string gen_out;
  gen->add_option("--v", gen_v, "alphabet size");
  gen->add_option("--n", gen_n, "question length");
  gen->add_option("--train-n", gen_train, "train record count");
  gen->add_option("--test-n", gen_test, "test record count");
  gen->add_option("--seed", gen_seed, "dataset seed");
  gen->add_option("--out", gen_out, "output prefix (<prefix>.train/.test)")
      ->required();

  // train
  auto* train = app.add_subcommand("train", "run one training configuration");
  TrainCli tc;
  train->add_option("--data", tc.data, "dataset prefix");
  train->add_option("--config", tc.config_file, "flat key=value config file");
  train->add_option("--scheme", tc.scheme, "rs:<M> | pps:<eps> | star:<eps> | exact");
  train->add_option("--seed", tc.seed, "training seed");
  train->add_option("--iters", tc.iterations, "iteration count");
  train->add_option("--lr-start", tc.lr_start, "initial learning rate");
  train->add_option("--lr-end", tc.lr_end, "final learning rate");
  train->add_option("--lmax", tc.lmax, "rationale length bound");
  train->add_flag("--fixed-length", tc.fixed_length,
                  "every rationale has exactly lmax tokens");
  train->add_flag("--no-shuffle", tc.no_shuffle,
                  "apply updates in datapoint order");
  train->add_flag("--freeze-grad-point", tc.freeze_grad_point,
                  "evaluate update gradients at the iteration snapshot");
  train->add_option("--init", tc.init, "initial checkpoint (default: base policy)");
  train->add_option("--out-dir", tc.out_dir, "output directory")->required();

  // sweep
  auto* sweep = app.add_subcommand(
      "sweep", "grid of training runs (scheme/seed/train_n axes)");
  std::string sweep_config, sweep_out;
  sweep->add_option("--config", sweep_config, "config file with list axes")
      ->required();
  sweep->add_option("--out-dir", sweep_out, "output directory")->required();

  // verify
  auto* verify = app.add_subcommand("verify", "run named self-check suites");
  std::string verify_suite = "all";
  std::uint64_t verify_seed = 0;
  verify->add_option("--suite", verify_suite,
                     "all|gradients|lemma1|posterior|em|unbiasedness");
  verify->add_option("--seed", verify_seed, "base seed for check instances");

  // evaluate
  auto* eval = app.add_subcommand("evaluate",
                                  "greedy-decode a checkpoint on a data file");
  std::string eval_ckpt, eval_data;
  eval->add_option("--checkpoint", eval_ckpt, "policy checkpoint")->required();
  eval->add_option("--data", eval_data, "datapoint file")->required();

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (gen->parsed())
      return do_generate(gen_v, gen_n, gen_train, gen_test, gen_seed, gen_out);
    if (train->parsed()) return do_train(tc, train);
    if (sweep->parsed()) return do_sweep(sweep_config, sweep_out);
    if (verify->parsed()) return do_verify(verify_suite, verify_seed);
    if (eval->parsed()) return do_evaluate(eval_ckpt, eval_data);
  } catch (const ContractViolation& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  }
  return 1;
}

}  // namespace femlab::tools
