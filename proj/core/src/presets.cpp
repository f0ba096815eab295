// SPDX-License-Identifier: MIT
#include "femlab/presets.hpp"

namespace femlab {

PolicyParams make_optimal_params(const TaskShape& shape, double scale) {
  shape.validate();
  const int v = shape.vocab;
  PolicyParams p = PolicyParams::zeros(v);
  for (int prev = 0; prev <= v; ++prev) {
    const int state = prev == v ? 0 : prev;  // BOS acts as state 0
    for (int feature = 0; feature < v; ++feature)
      p.transition[p.transition_index(prev, feature, (state + feature) % v)] =
          scale;
  }
  for (int last = 0; last < v; ++last)
    p.answer[p.answer_index(last, last)] = scale;
  return p;
}

PolicyParams make_base_policy(const TaskShape& shape) {
  shape.validate();
  const int v = shape.vocab;
  PolicyParams p = PolicyParams::zeros(v);
  for (int prev = 0; prev <= v; ++prev) {
    const int state = prev == v ? 0 : prev;
    for (int feature = 0; feature < v; ++feature)
      p.transition[p.transition_index(prev, feature, (state + feature) % v)] =
          kBaseTransitionLogit;
  }
  for (int last = 0; last < v; ++last)
    p.answer[p.answer_index(last, last)] = kBaseAnswerLogit;
  return p;
}

PolicyParams make_never_correct_params(const TaskShape& shape, double scale) {
  PolicyParams p = make_optimal_params(shape, scale);
  const int v = shape.vocab;
  for (int last = 0; last < v; ++last) {
    p.answer[p.answer_index(last, last)] = 0.0;
    p.answer[p.answer_index(last, (last + 1) % v)] = scale;
  }
  return p;
}

}  // namespace femlab
