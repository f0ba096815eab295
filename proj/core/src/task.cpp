// SPDX-License-Identifier: MIT
#include "femlab/task.hpp"

#include <charconv>
#include <fstream>
#include <sstream>
#include <string>

#include "femlab/rng.hpp"

namespace femlab {

namespace {

// Stream tags: train and test questions come from independent streams, so
// the test split does not depend on the train count.
constexpr std::uint64_t kTagDataset = 0xDA7A;

void validate_question(const std::vector<int>& x, int vocab,
                       int question_len) {
  if (static_cast<int>(x.size()) != question_len)
    throw ContractViolation("question length does not match the task shape");
  for (int t : x)
    if (t < 0 || t >= vocab)
      throw ContractViolation("question token out of range");
}

std::vector<Datapoint> draw_split(const TaskShape& shape, std::size_t count,
                                  Rng& rng) {
  std::vector<Datapoint> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    Datapoint dp;
    dp.x.resize(shape.question_len);
    for (int& t : dp.x)
      t = static_cast<int>(rng.next_below(shape.vocab));
    dp.y_star = answer_of(dp.x, shape.vocab);
    out.push_back(std::move(dp));
  }
  return out;
}

int parse_int_field(const std::string& text, const char* what) {
  int value = 0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc{} || ptr != last)
    throw IoError(std::string("malformed integer field '") + what + "': " +
                  text);
  return value;
}

}  // namespace

int answer_of(const std::vector<int>& x, int vocab) {
  int sum = 0;
  for (int t : x) sum = (sum + t) % vocab;
  return sum;
}

Dataset generate_dataset(const TaskShape& shape, std::size_t n_train,
                         std::size_t n_test, std::uint64_t seed) {
  shape.validate();
  if (n_train < 1 || n_test < 1)
    throw ContractViolation("generate_dataset: counts must be >= 1");
  Dataset ds;
  ds.seed = seed;
  Rng train_rng(derive_stream(seed, kTagDataset, 1, 0));
  Rng test_rng(derive_stream(seed, kTagDataset, 2, 0));
  ds.train = draw_split(shape, n_train, train_rng);
  ds.test = draw_split(shape, n_test, test_rng);
  return ds;
}

void write_datapoints(const std::string& path, int vocab, int question_len,
                      const std::vector<Datapoint>& records) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot open for writing: " + path);
  out << "femlab-data v=" << vocab << " n=" << question_len << "\n";
  for (const Datapoint& dp : records) {
    validate_question(dp.x, vocab, question_len);
    for (std::size_t i = 0; i < dp.x.size(); ++i) {
      if (i) out << ',';
      out << dp.x[i];
    }
    out << '|' << dp.y_star << "\n";
  }
  if (!out) throw IoError("write failed: " + path);
}

DatapointFile read_datapoints(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path);
  std::string header;
  if (!std::getline(in, header))
    throw IoError("empty dataset file: " + path);

  DatapointFile file;
  std::istringstream hs(header);
  std::string magic, vfield, nfield;
  hs >> magic >> vfield >> nfield;
  if (magic != "femlab-data" || vfield.rfind("v=", 0) != 0 ||
      nfield.rfind("n=", 0) != 0)
    throw IoError("bad dataset header in " + path + ": " + header);
  file.vocab = parse_int_field(vfield.substr(2), "v");
  file.question_len = parse_int_field(nfield.substr(2), "n");
  if (file.vocab < 2 || file.question_len < 1)
    throw IoError("dataset header out of range in " + path);

  std::string line;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    const std::size_t bar = line.find('|');
    if (bar == std::string::npos)
      throw IoError("missing '|' at " + path + ":" + std::to_string(line_no));
    Datapoint dp;
    std::string token;
    std::istringstream xs(line.substr(0, bar));
    while (std::getline(xs, token, ','))
      dp.x.push_back(parse_int_field(token, "question token"));
    dp.y_star = parse_int_field(line.substr(bar + 1), "answer");
    try {
      validate_question(dp.x, file.vocab, file.question_len);
    } catch (const ContractViolation& e) {
      throw IoError(std::string(e.what()) + " at " + path + ":" +
                    std::to_string(line_no));
    }
    if (dp.y_star < 0 || dp.y_star >= file.vocab)
      throw IoError("answer out of range at " + path + ":" +
                    std::to_string(line_no));
    file.records.push_back(std::move(dp));
  }
  return file;
}

}  // namespace femlab
