// SPDX-License-Identifier: MIT
// Implementation library behind the `femlab` command-line tool.
//
// Everything the CLI does is callable in-process so tests can drive
// subcommands directly: config parsing/digesting, the shared training runner
// used by both `train` and `sweep`, metrics serialization, and the
// subcommand entry point itself.
#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "femlab/samplers.hpp"
#include "femlab/task.hpp"
#include "femlab/trainer.hpp"

namespace femlab::tools {

// --- configuration ---------------------------------------------------------

// Flat `key=value` map with deterministic (sorted) iteration order.
using ConfigMap = std::map<std::string, std::string>;

// Parses a flat config file: one `key=value` per line, `#` starts a comment,
// blank lines ignored. Keys and values are trimmed. Duplicate keys: last
// one wins. Throws IoError on unreadable files and ContractViolation on
// malformed lines.
ConfigMap parse_config_file(const std::string& path);

// Canonical resolved-config text: one `key=value` line per entry in sorted
// key order, '\n'-terminated. This exact byte string is what gets digested.
std::string format_resolved_config(const ConfigMap& config);

// FNV-1a 64-bit hash of a byte string, and its fixed-width hex rendering.
std::uint64_t fnv1a64(std::string_view text);
std::string hex64(std::uint64_t value);

// Splits a comma-separated list; single values come back as a 1-element
// vector. Entries are trimmed; empty entries are rejected.
std::vector<std::string> split_list(const std::string& text);

// Directory-name-safe rendering of a config value (':' -> '-', '.' -> 'p',
// '/' -> '-').
std::string sanitize_component(const std::string& text);

// Applies FEMLAB_OUT_ROOT to relative output paths (absolute paths and
// unset env pass through unchanged).
std::filesystem::path resolve_out_path(const std::string& path);

// Current UTC time as ISO-8601 (e.g. "2026-08-19T12:34:56Z").
std::string utc_timestamp();

// --- one training run -------------------------------------------------------

// Fully resolved description of a single training run. `train` builds one
// from defaults + config file + flags; `sweep` builds one per grid cell.
struct RunSpec {
  std::string data_prefix;          // reads <prefix>.train and <prefix>.test
  int max_len = 6;                  // rationale length bound
  bool fixed_length = false;        // when true every rationale has max_len
  std::size_t train_n = 0;          // 0 = use the whole train split
  std::optional<std::string> init_checkpoint;  // default: canonical base policy
  TrainConfig cfg;                  // scheme, seed, iterations, lr schedule
  std::filesystem::path out_dir;
};

// The experiment-defining key/value view of a RunSpec (everything that goes
// into resolved-config.txt and the digest; output paths excluded).
ConfigMap spec_to_config(const RunSpec& spec);

struct RunArtifacts {
  std::vector<IterationMetrics> metrics;
  PolicyParams final_params{PolicyParams::zeros(2)};
  TaskShape shape;
  std::filesystem::path metrics_jsonl;
  std::filesystem::path metrics_csv;
  std::vector<std::filesystem::path> checkpoints;  // one per iteration
};

// Loads the dataset, builds the initial parameters, trains, and writes
// metrics.jsonl, metrics.csv, and policy-iter-NNN.txt into spec.out_dir
// (created if needed). Deterministic: a second call with the same spec
// produces byte-identical metrics files and checkpoints.
RunArtifacts run_one_training(const RunSpec& spec);

// Serialized forms used by run_one_training (exposed for tests).
std::string metrics_jsonl_line(const IterationMetrics& m,
                               const std::string& scheme_tag,
                               std::uint64_t seed);
std::string metrics_csv_header();
std::string metrics_csv_row(const IterationMetrics& m,
                            const std::string& scheme_tag, std::uint64_t seed);

// --- CLI --------------------------------------------------------------------

// Runs the `femlab` CLI on an argv-style argument list (excluding the
// program name). Returns the process exit code:
//   0 success, 1 usage/configuration error, 2 verification failure,
//   3 runtime error (I/O, divergence, failed sweep cells, shape mismatch).
int run_cli(const std::vector<std::string>& args);

}  // namespace femlab::tools
